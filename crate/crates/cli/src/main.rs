fn main() {
    std::process::exit(logless_reconfig_cli::dispatch(std::env::args_os()));
}
