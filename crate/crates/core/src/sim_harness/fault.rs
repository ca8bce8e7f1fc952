use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ids::AgentId;

/// A scheduled disruption.
///
/// Text forms: `disconnect:P2@30000`, `disconnect:P2@30000+reconnect@45000`,
/// `disconnect:robot@20000` and `robot-fault:3` (the robot's fourth granted
/// action fails right after the pick).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultSpec {
    Disconnect {
        agent: AgentId,
        at_ms: u64,
        reconnect_at_ms: Option<u64>,
    },
    RobotFault {
        action: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid fault spec {spec:?}: {detail}")]
pub struct FaultParseError {
    pub spec: String,
    pub detail: String,
}

fn agent_from(s: &str) -> Result<AgentId, String> {
    if s.contains(':') || s == "robot" {
        s.parse().map_err(|e: crate::ids::ParseAgentError| e.to_string())
    } else {
        Ok(AgentId::Human(s.into()))
    }
}

impl FromStr for FaultSpec {
    type Err = FaultParseError;

    fn from_str(spec: &str) -> Result<Self, Self::Err> {
        let err = |detail: &str| FaultParseError {
            spec: spec.to_owned(),
            detail: detail.to_owned(),
        };
        if let Some(rest) = spec.strip_prefix("robot-fault:") {
            let action = rest.parse().map_err(|_| err("expected an action index"))?;
            return Ok(FaultSpec::RobotFault { action });
        }
        let rest = spec
            .strip_prefix("disconnect:")
            .ok_or_else(|| err("expected disconnect:<who>@<ms> or robot-fault:<n>"))?;
        let (main, reconnect) = match rest.split_once('+') {
            Some((m, r)) => (m, Some(r)),
            None => (rest, None),
        };
        let (who, at) = main.rsplit_once('@').ok_or_else(|| err("missing @<ms>"))?;
        let agent = agent_from(who).map_err(|e| err(&e))?;
        let at_ms = at.parse().map_err(|_| err("disconnect time is not an integer"))?;
        let reconnect_at_ms = match reconnect {
            None => None,
            Some(r) => {
                let t = r
                    .strip_prefix("reconnect@")
                    .ok_or_else(|| err("expected reconnect@<ms>"))?;
                let t: u64 = t.parse().map_err(|_| err("reconnect time is not an integer"))?;
                if t < at_ms {
                    return Err(err("reconnect precedes disconnect"));
                }
                Some(t)
            }
        };
        Ok(FaultSpec::Disconnect {
            agent,
            at_ms,
            reconnect_at_ms,
        })
    }
}
