//! Identifier newtypes shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

string_id!(
    /// Human participant identifier, e.g. `P1`.
    ParticipantId
);
string_id!(
    /// Logical block identifier from the block catalog.
    BlockId
);
string_id!(
    /// Inventory pile identifier.
    InventoryId
);
string_id!(
    /// Puzzle piece identifier.
    PieceId
);

/// Fiducial tag identifier attached to a physical block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(pub u32);

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tag{}", self.0)
    }
}

/// Block colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Orange,
    Yellow,
    Green,
    Blue,
    Indigo,
    Violet,
    Pink,
    Brown,
    Black,
    White,
    Gray,
}

impl Color {
    pub const ALL: [Color; 12] = [
        Color::Red,
        Color::Orange,
        Color::Yellow,
        Color::Green,
        Color::Blue,
        Color::Indigo,
        Color::Violet,
        Color::Pink,
        Color::Brown,
        Color::Black,
        Color::White,
        Color::Gray,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Orange => "orange",
            Color::Yellow => "yellow",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Indigo => "indigo",
            Color::Violet => "violet",
            Color::Pink => "pink",
            Color::Brown => "brown",
            Color::Black => "black",
            Color::White => "white",
            Color::Gray => "gray",
        }
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A teammate that can claim and manipulate blocks.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AgentId {
    Robot,
    Human(ParticipantId),
}

impl AgentId {
    pub fn human(pid: impl Into<String>) -> Self {
        AgentId::Human(ParticipantId::new(pid))
    }

    pub fn participant(&self) -> Option<&ParticipantId> {
        match self {
            AgentId::Robot => None,
            AgentId::Human(p) => Some(p),
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Robot => f.write_str("robot"),
            AgentId::Human(p) => write!(f, "human:{p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unrecognised agent id `{0}`")]
pub struct ParseAgentError(pub String);

impl FromStr for AgentId {
    type Err = ParseAgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "robot" => Ok(AgentId::Robot),
            _ => match s.strip_prefix("human:") {
                Some(pid) if !pid.is_empty() => Ok(AgentId::human(pid)),
                _ => Err(ParseAgentError(s.to_owned())),
            },
        }
    }
}

impl TryFrom<String> for AgentId {
    type Error = ParseAgentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AgentId> for String {
    fn from(a: AgentId) -> Self {
        a.to_string()
    }
}

/// Anything that can author a log entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Actor {
    Server,
    Perception,
    Agent(AgentId),
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Server => f.write_str("server"),
            Actor::Perception => f.write_str("perception"),
            Actor::Agent(a) => a.fmt(f),
        }
    }
}

impl FromStr for Actor {
    type Err = ParseAgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "server" => Ok(Actor::Server),
            "perception" => Ok(Actor::Perception),
            _ => s.parse().map(Actor::Agent),
        }
    }
}

impl TryFrom<String> for Actor {
    type Error = ParseAgentError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Actor> for String {
    fn from(a: Actor) -> Self {
        a.to_string()
    }
}

impl From<AgentId> for Actor {
    fn from(a: AgentId) -> Self {
        Actor::Agent(a)
    }
}
