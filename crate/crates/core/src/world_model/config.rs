//! Session parameterization and its validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{BlockId, Color, InventoryId, ParticipantId, PieceId, TagId};

/// Policies the robot agent knows how to run.
pub const KNOWN_POLICIES: &[&str] = &["alternating_equal"];

fn default_policy() -> String {
    KNOWN_POLICIES[0].to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub participants: Vec<ParticipantId>,
    pub puzzles: Vec<PuzzleSpec>,
    pub stacks: Vec<StackSpec>,
    pub inventories: Vec<InventorySpec>,
    pub blocks: Vec<CatalogEntry>,
    #[serde(default = "default_policy")]
    pub robot_policy: String,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub session: SessionOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleSpec {
    pub participant: ParticipantId,
    pub rows: u32,
    pub cols: u32,
    #[serde(default)]
    pub image_id: String,
    /// Piece expected in each slot, row-major.
    pub solution: Vec<PieceId>,
}

impl PuzzleSpec {
    pub fn slots(&self) -> usize {
        self.rows as usize * self.cols as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackSpec {
    pub owner: ParticipantId,
    pub pattern: Vec<Color>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InventoryAccess {
    Human,
    Robot,
}

fn default_access() -> Vec<InventoryAccess> {
    vec![InventoryAccess::Human, InventoryAccess::Robot]
}

/// An ordered pile of blocks feeding one participant's stack. Index 0 is the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventorySpec {
    pub id: InventoryId,
    pub serves: ParticipantId,
    #[serde(default)]
    pub station: String,
    #[serde(default = "default_access")]
    pub access: Vec<InventoryAccess>,
    pub blocks: Vec<BlockId>,
    /// Pile base, meters. Used for fetch waypoints.
    #[serde(default)]
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: BlockId,
    pub tag_id: TagId,
    pub color: Color,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timing {
    pub robot_pick_ms: u64,
    pub robot_place_ms: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            robot_pick_ms: 2000,
            robot_place_ms: 3000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackBase {
    pub owner: ParticipantId,
    pub station_id: String,
    pub position: [f64; 3],
}

/// Perception and planning geometry. Lengths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub block_height_m: f64,
    pub assignment_radius_m: f64,
    pub history_depth: usize,
    /// Safe travel height above the table for transfer waypoints.
    pub transfer_height_m: f64,
    pub stack_bases: Vec<StackBase>,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            block_height_m: 0.04,
            assignment_radius_m: 0.08,
            history_depth: 30,
            transfer_height_m: 0.45,
            stack_bases: Vec::new(),
        }
    }
}

impl Geometry {
    /// Stack bases for every participant. Participants without an explicit
    /// base get one on `station1`, spaced 0.3 m apart along x.
    pub fn bases(&self, participants: &[ParticipantId]) -> Vec<StackBase> {
        participants
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.stack_bases
                    .iter()
                    .find(|b| &b.owner == p)
                    .cloned()
                    .unwrap_or_else(|| StackBase {
                        owner: p.clone(),
                        station_id: "station1".into(),
                        position: [0.3 * i as f64, 0.0, 0.0],
                    })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionOptions {
    /// A Working block held longer than this is released automatically.
    pub working_timeout_ms: u64,
    /// Abort when no detection frame has arrived for this long after the
    /// first participant starts stacking. Zero disables the watchdog.
    pub perception_watchdog_ms: u64,
    pub abort_on_client_loss: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            working_timeout_ms: 60_000,
            perception_watchdog_ms: 10_000,
            abort_on_client_loss: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

impl TaskConfig {
    /// Loads a TOML config. `path` may omit the `.toml` extension.
    pub fn load(path: impl AsRef<Path>) -> Result<TaskConfig, ConfigError> {
        let path = path.as_ref();
        let resolved = if path.is_file() {
            path.to_path_buf()
        } else {
            path.with_extension("toml")
        };
        let text = std::fs::read_to_string(&resolved).map_err(|e| ConfigError::Io {
            path: resolved.clone(),
            message: e.to_string(),
        })?;
        let config = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: resolved.clone(),
                message,
            },
            other => other,
        })?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<TaskConfig, ConfigError> {
        let config: TaskConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable in TOML")
    }

    pub fn catalog(&self) -> BTreeMap<&BlockId, &CatalogEntry> {
        self.blocks.iter().map(|b| (&b.id, b)).collect()
    }

    pub fn stack_spec(&self, owner: &ParticipantId) -> Option<&StackSpec> {
        self.stacks.iter().find(|s| &s.owner == owner)
    }

    pub fn puzzle_spec(&self, owner: &ParticipantId) -> Option<&PuzzleSpec> {
        self.puzzles.iter().find(|s| &s.participant == owner)
    }

    pub fn inventory(&self, id: &InventoryId) -> Option<&InventorySpec> {
        self.inventories.iter().find(|i| &i.id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.participants.is_empty() {
            return Err(invalid("at least one participant is required"));
        }
        let mut pids = BTreeSet::new();
        for p in &self.participants {
            if p.as_str().is_empty() {
                return Err(invalid("participant ids must be non-empty"));
            }
            if !pids.insert(p) {
                return Err(invalid(format!("duplicate participant {p}")));
            }
        }

        for p in &self.participants {
            let n = self.puzzles.iter().filter(|s| &s.participant == p).count();
            if n != 1 {
                return Err(invalid(format!("participant {p} needs exactly one puzzle, found {n}")));
            }
            let n = self.stacks.iter().filter(|s| &s.owner == p).count();
            if n != 1 {
                return Err(invalid(format!("participant {p} needs exactly one stack, found {n}")));
            }
        }
        for s in &self.puzzles {
            if !pids.contains(&s.participant) {
                return Err(invalid(format!("puzzle for unknown participant {}", s.participant)));
            }
            if s.rows == 0 || s.cols == 0 {
                return Err(invalid(format!("puzzle of {} has zero dimension", s.participant)));
            }
            if s.solution.len() != s.slots() {
                return Err(invalid(format!(
                    "puzzle of {} has {} solution entries for {} slots",
                    s.participant,
                    s.solution.len(),
                    s.slots()
                )));
            }
            let distinct: BTreeSet<_> = s.solution.iter().collect();
            if distinct.len() != s.solution.len() {
                return Err(invalid(format!("puzzle of {} repeats a piece", s.participant)));
            }
        }

        let mut ids = BTreeSet::new();
        let mut tags = BTreeSet::new();
        for b in &self.blocks {
            if !ids.insert(&b.id) {
                return Err(invalid(format!("duplicate block id {}", b.id)));
            }
            if !tags.insert(b.tag_id) {
                return Err(invalid(format!("duplicate tag id {}", b.tag_id)));
            }
        }

        let catalog = self.catalog();
        let mut inv_ids = BTreeSet::new();
        let mut placed = BTreeSet::new();
        for inv in &self.inventories {
            if !inv_ids.insert(&inv.id) {
                return Err(invalid(format!("duplicate inventory {}", inv.id)));
            }
            if !pids.contains(&inv.serves) {
                return Err(invalid(format!(
                    "inventory {} serves unknown participant {}",
                    inv.id, inv.serves
                )));
            }
            if inv.access.is_empty() {
                return Err(invalid(format!("inventory {} grants no access", inv.id)));
            }
            for b in &inv.blocks {
                if !catalog.contains_key(b) {
                    return Err(invalid(format!("inventory {} lists unknown block {b}", inv.id)));
                }
                if !placed.insert(b) {
                    return Err(invalid(format!("block {b} appears in more than one inventory slot")));
                }
            }
        }
        if let Some(orphan) = self.blocks.iter().find(|b| !placed.contains(&b.id)) {
            return Err(invalid(format!("block {} is in no inventory", orphan.id)));
        }

        for s in &self.stacks {
            if !pids.contains(&s.owner) {
                return Err(invalid(format!("stack for unknown participant {}", s.owner)));
            }
            if s.pattern.is_empty() {
                return Err(invalid(format!("stack of {} has an empty pattern", s.owner)));
            }
            let distinct: BTreeSet<_> = s.pattern.iter().collect();
            if distinct.len() != s.pattern.len() {
                return Err(invalid(format!(
                    "stack pattern of {} repeats a color; each block in a stack must be unique",
                    s.owner
                )));
            }
            let available: BTreeSet<Color> = self
                .inventories
                .iter()
                .filter(|i| i.serves == s.owner)
                .flat_map(|i| i.blocks.iter())
                .map(|b| catalog[b].color)
                .collect();
            if let Some(missing) = s.pattern.iter().find(|c| !available.contains(c)) {
                return Err(invalid(format!(
                    "color {missing} of {}'s pattern is in none of its inventories",
                    s.owner
                )));
            }
        }

        if !KNOWN_POLICIES.contains(&self.robot_policy.as_str()) {
            return Err(invalid(format!("unknown robot policy `{}`", self.robot_policy)));
        }
        let g = &self.geometry;
        if !(g.block_height_m > 0.0 && g.block_height_m.is_finite()) {
            return Err(invalid("block height must be positive"));
        }
        if !(g.assignment_radius_m > 0.0 && g.assignment_radius_m.is_finite()) {
            return Err(invalid("assignment radius must be positive"));
        }
        if g.history_depth == 0 {
            return Err(invalid("history depth must be at least 1"));
        }
        for b in &g.stack_bases {
            if !pids.contains(&b.owner) {
                return Err(invalid(format!("stack base for unknown participant {}", b.owner)));
            }
        }
        Ok(())
    }
}

/// The two-participant block-stacking and jigsaw task: seven-block stacks with
/// a unique color per block, one 3x3 and one 3x2 puzzle, and per participant a
/// single pile in pattern order that both the participant and the robot draw from.
pub fn reference_config(seed: u64) -> TaskConfig {
    let patterns = [
        vec![
            Color::Red,
            Color::Orange,
            Color::Yellow,
            Color::Green,
            Color::Blue,
            Color::Indigo,
            Color::Violet,
        ],
        vec![
            Color::Blue,
            Color::Green,
            Color::Red,
            Color::Violet,
            Color::Yellow,
            Color::Orange,
            Color::Indigo,
        ],
    ];
    let dims = [(3u32, 3u32), (3, 2)];
    let mut participants = Vec::new();
    let mut puzzles = Vec::new();
    let mut stacks = Vec::new();
    let mut inventories = Vec::new();
    let mut blocks = Vec::new();
    let mut stack_bases = Vec::new();
    let mut tag = 0u32;
    for (i, (pattern, (rows, cols))) in patterns.iter().zip(dims).enumerate() {
        let pid = ParticipantId::new(format!("P{}", i + 1));
        participants.push(pid.clone());
        let n = (rows * cols) as usize;
        puzzles.push(PuzzleSpec {
            participant: pid.clone(),
            rows,
            cols,
            image_id: format!("picture-{}", i + 1),
            solution: (0..n).map(|k| PieceId::new(format!("{pid}-piece{k}"))).collect(),
        });
        stacks.push(StackSpec {
            owner: pid.clone(),
            pattern: pattern.clone(),
        });
        let mut pile = Vec::new();
        for color in pattern {
            let id = BlockId::new(format!("{pid}-{color}"));
            blocks.push(CatalogEntry {
                id: id.clone(),
                tag_id: TagId(tag),
                color: *color,
            });
            tag += 1;
            pile.push(id);
        }
        inventories.push(InventorySpec {
            id: InventoryId::new(format!("{pid}-pile")),
            serves: pid.clone(),
            station: "station1".into(),
            access: default_access(),
            blocks: pile,
            position: [0.3 * i as f64, 0.35, 0.0],
        });
        stack_bases.push(StackBase {
            owner: pid.clone(),
            station_id: "station1".into(),
            position: [0.3 * i as f64, 0.0, 0.0],
        });
    }
    TaskConfig {
        participants,
        puzzles,
        stacks,
        inventories,
        blocks,
        robot_policy: "alternating_equal".into(),
        timing: Timing::default(),
        seed,
        geometry: Geometry {
            stack_bases,
            ..Geometry::default()
        },
        session: SessionOptions::default(),
    }
}

/// One participant, one block, a 1x1 puzzle.
pub fn minimal_config(seed: u64) -> TaskConfig {
    let pid = ParticipantId::new("P1");
    TaskConfig {
        participants: vec![pid.clone()],
        puzzles: vec![PuzzleSpec {
            participant: pid.clone(),
            rows: 1,
            cols: 1,
            image_id: String::new(),
            solution: vec![PieceId::new("piece0")],
        }],
        stacks: vec![StackSpec {
            owner: pid.clone(),
            pattern: vec![Color::Red],
        }],
        inventories: vec![InventorySpec {
            id: InventoryId::new("P1-pile"),
            serves: pid,
            station: "station1".into(),
            access: default_access(),
            blocks: vec![BlockId::new("b0")],
            position: [0.0, 0.35, 0.0],
        }],
        blocks: vec![CatalogEntry {
            id: BlockId::new("b0"),
            tag_id: TagId(0),
            color: Color::Red,
        }],
        robot_policy: "alternating_equal".into(),
        timing: Timing::default(),
        seed,
        geometry: Geometry::default(),
        session: SessionOptions::default(),
    }
}
