//! Projection of full-protocol behaviors onto the config-only subprotocol.

use serde::{Deserialize, Serialize};

use crate::protocol::{initial_state, GlobalState, Log, Rules};

use super::Trace;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum RefinementOutcome {
    Refines,
    /// Step 0 refers to the initial state.
    FailsAtStep {
        step: usize,
        reason: String,
    },
}

/// Keeps terms, roles and configs; drops logs and the committed set.
pub fn project(g: &GlobalState) -> GlobalState {
    let mut p = g.clone();
    p.committed.clear();
    for id in g.server_ids() {
        p.server_mut(id).expect("same universe").log = Log::default();
    }
    p
}

/// Checks that the projected trace is a behavior of the config-only subprotocol.
///
/// Log actions must project to stutters; every other step must be enabled
/// in the projected pre-state under the logless rules and land exactly on
/// the projected post-state.
pub fn project_and_check_refinement(trace: &Trace) -> RefinementOutcome {
    let fail = |step, reason: String| RefinementOutcome::FailsAtStep { step, reason };
    let init = project(&trace.init);
    let Some((_, first)) = init.servers().next() else {
        return fail(0, "empty universe".into());
    };
    match initial_state(init.universe(), first.config.members) {
        Ok(expected) if expected == init => {}
        _ => {
            return fail(
                0,
                "projected initial state is not a logless initial state".into(),
            )
        }
    }

    let mut pre = trace.init.clone();
    for (k, a) in trace.steps.iter().enumerate() {
        let step = k + 1;
        let post = match a.apply(&pre) {
            Ok(post) => post,
            Err(e) => return fail(step, format!("not a valid full-protocol step: {e}")),
        };
        let (p_pre, p_post) = (project(&pre), project(&post));
        if a.kind().is_logless() {
            match a.apply_with(&p_pre, &Rules::LOGLESS) {
                Ok(got) if got == p_post => {}
                Ok(_) => return fail(step, format!("{a} leads elsewhere in the projection")),
                Err(e) => return fail(step, format!("{a} is disabled in the projection: {e}")),
            }
        } else if p_pre != p_post {
            return fail(step, format!("{a} changes config variables"));
        }
        pre = post;
    }
    RefinementOutcome::Refines
}
