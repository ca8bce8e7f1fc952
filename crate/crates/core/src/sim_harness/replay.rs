use std::path::Path;

use crate::coordination_server::{state_digest, LoadedLog, LogError};
use crate::world_model::{apply_transition, is_session_done, new_session, ConfigError, EventBody, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("invalid config in SessionStart: {0}")]
    Config(#[from] ConfigError),
    #[error("replay diverged at log line {line}: {detail}")]
    Divergence { line: usize, detail: String },
}

/// Rebuilds the final world state by folding every state-changing event
/// through the world model, checking phase announcements and the closing
/// digests along the way.
pub fn replay(log: &LoadedLog) -> Result<WorldState, ReplayError> {
    let diverge = |line: usize, detail: String| ReplayError::Divergence { line, detail };
    let EventBody::SessionStart { config } = &log.events[0].body else {
        return Err(diverge(1, "log does not open with SessionStart".into()));
    };
    let mut world = new_session(config.clone())?;
    let mut announced = world.phases.clone();
    for (i, event) in log.events.iter().enumerate() {
        let line = i + 1;
        if event.body.is_state_changing() {
            world = apply_transition(&world, event).map_err(|e| diverge(line, e.to_string()))?;
            continue;
        }
        match &event.body {
            EventBody::PhaseChange { participant, phase } => {
                if world.phase(participant) != Some(*phase) {
                    return Err(diverge(
                        line,
                        format!(
                            "PhaseChange to {phase:?} for {participant}, world has {:?}",
                            world.phase(participant)
                        ),
                    ));
                }
                announced.insert(participant.clone(), *phase);
            }
            EventBody::SessionEnd {
                done, state_digest: sd, ..
            } => {
                if announced != world.phases {
                    return Err(diverge(line, "phase changes missing from the log".into()));
                }
                if *done != is_session_done(&world) {
                    return Err(diverge(
                        line,
                        format!("SessionEnd says done={done}, replayed state disagrees"),
                    ));
                }
                let actual = state_digest(&world.snapshot());
                if *sd != actual {
                    return Err(diverge(
                        line,
                        format!("state digest {sd} differs from replayed {actual}"),
                    ));
                }
                log.verify_seal().map_err(|d| diverge(line, d))?;
            }
            _ => {}
        }
    }
    Ok(world)
}

pub fn replay_path(path: impl AsRef<Path>) -> Result<WorldState, ReplayError> {
    replay(&LoadedLog::read(path)?)
}
