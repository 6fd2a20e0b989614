//! 2D maze environment: 16x16 grid maps, goal-relative observations with an
//! 8-neighbor obstacle mask, 8-direction unit moves, shaped rewards, and path
//! metrics (length / turn count).

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Grid cell as (x, y); x grows east (right), y grows south (down).
pub type Cell = (i32, i32);

pub const ACTION_COUNT: usize = 8;

pub const REWARD_GOAL: f64 = 500.0;
pub const REWARD_COLLISION: f64 = -500.0;
pub const REWARD_STATIONARY: f64 = -200.0;
pub const REWARD_CLOSER: f64 = 100.0;
pub const REWARD_FARTHER: f64 = -100.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("map text is empty")]
    EmptyMap,
    #[error("row {row} has width {got}, expected {expected}")]
    RaggedRow {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("unknown map character '{ch}' at ({x}, {y})")]
    UnknownChar { ch: char, x: i32, y: i32 },
    #[error("map must contain exactly one 'S', found {0}")]
    StartCount(usize),
    #[error("map must contain exactly one 'G', found {0}")]
    GoalCount(usize),
    #[error("goal unreachable from start")]
    GoalUnreachable,
    #[error("invalid action index {0}, expected 0..8")]
    InvalidAction(usize),
    #[error("cells ({},{}) and ({},{}) are not adjacent by a unit move", .0.0, .0.1, .1.0, .1.1)]
    NonAdjacentCells(Cell, Cell),
}

/// The eight unit moves. Index order is fixed and shared with the
/// observation's obstacle mask: `blocked[k]` refers to `ActionDir::ALL[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionDir {
    East,
    West,
    North,
    South,
    NorthEast,
    NorthWest,
    SouthEast,
    SouthWest,
}

impl ActionDir {
    pub const ALL: [ActionDir; ACTION_COUNT] = [
        ActionDir::East,
        ActionDir::West,
        ActionDir::North,
        ActionDir::South,
        ActionDir::NorthEast,
        ActionDir::NorthWest,
        ActionDir::SouthEast,
        ActionDir::SouthWest,
    ];

    pub fn from_index(index: usize) -> Result<Self, EnvError> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(EnvError::InvalidAction(index))
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap()
    }

    /// Unit displacement (dx, dy) for this move.
    pub fn delta(self) -> (i32, i32) {
        match self {
            ActionDir::East => (1, 0),
            ActionDir::West => (-1, 0),
            ActionDir::North => (0, -1),
            ActionDir::South => (0, 1),
            ActionDir::NorthEast => (1, -1),
            ActionDir::NorthWest => (-1, -1),
            ActionDir::SouthEast => (1, 1),
            ActionDir::SouthWest => (-1, 1),
        }
    }

    /// Inverse of `delta`, for reconstructing moves from a cell path.
    pub fn from_delta(d: (i32, i32)) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.delta() == d)
    }
}

/// Goal-relative observation: signed offsets to the goal plus the
/// blocked/free status of the eight neighbor cells (out of bounds counts
/// as blocked). `blocked[k]` is true iff taking action k would collide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub dx: i32,
    pub dy: i32,
    pub blocked: [bool; ACTION_COUNT],
}

impl EnvState {
    pub const ENCODED_LEN: usize = 2 + ACTION_COUNT;

    /// Network input: offsets scaled by the map dimensions, obstacle bits as 0/1.
    pub fn encode(&self, width: i32, height: i32) -> Vec<f64> {
        let mut v = Vec::with_capacity(Self::ENCODED_LEN);
        v.push(f64::from(self.dx) / f64::from(width));
        v.push(f64::from(self.dy) / f64::from(height));
        for &b in &self.blocked {
            v.push(if b { 1.0 } else { 0.0 });
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Goal,
    Collision,
    Closer,
    Farther,
    Stationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Where the agent ends up (collision leaves it in place).
    pub next_pos: Cell,
    pub next_state: EnvState,
    pub reward: f64,
    pub terminal: bool,
    pub event: StepEvent,
}

/// Immutable maze layout. Validated at load: rectangular, exactly one start
/// and goal, goal reachable from start through the 8-connected free cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: i32,
    height: i32,
    obstacles: Vec<bool>,
    start: Cell,
    goal: Cell,
}

impl GridMap {
    /// Parse the ASCII map format: '.' free, '#' obstacle, 'S' start, 'G' goal,
    /// one row per line.
    pub fn parse(text: &str) -> Result<Self, EnvError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(EnvError::EmptyMap);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut obstacles = vec![false; width * height];
        let mut starts = Vec::new();
        let mut goals = Vec::new();
        for (y, row) in rows.iter().enumerate() {
            let got = row.chars().count();
            if got != width {
                return Err(EnvError::RaggedRow {
                    row: y,
                    got,
                    expected: width,
                });
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => {}
                    '#' => obstacles[y * width + x] = true,
                    'S' => starts.push((x as i32, y as i32)),
                    'G' => goals.push((x as i32, y as i32)),
                    other => {
                        return Err(EnvError::UnknownChar {
                            ch: other,
                            x: x as i32,
                            y: y as i32,
                        })
                    }
                }
            }
        }
        if starts.len() != 1 {
            return Err(EnvError::StartCount(starts.len()));
        }
        if goals.len() != 1 {
            return Err(EnvError::GoalCount(goals.len()));
        }
        let map = GridMap {
            width: width as i32,
            height: height as i32,
            obstacles,
            start: starts[0],
            goal: goals[0],
        };
        if !map.flood_fill_reaches_goal() {
            return Err(EnvError::GoalUnreachable);
        }
        Ok(map)
    }

    fn flood_fill_reaches_goal(&self) -> bool {
        let mut seen = vec![false; (self.width * self.height) as usize];
        let idx = |c: Cell| (c.1 * self.width + c.0) as usize;
        let mut queue = VecDeque::from([self.start]);
        seen[idx(self.start)] = true;
        while let Some(cell) = queue.pop_front() {
            if cell == self.goal {
                return true;
            }
            for dir in ActionDir::ALL {
                let (dx, dy) = dir.delta();
                let next = (cell.0 + dx, cell.1 + dy);
                if self.in_bounds(next) && !self.is_obstacle(next) && !seen[idx(next)] {
                    seen[idx(next)] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.0 >= 0 && cell.0 < self.width && cell.1 >= 0 && cell.1 < self.height
    }

    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && self.obstacles[(cell.1 * self.width + cell.0) as usize]
    }

    /// A move collides when it leaves the grid or lands on an obstacle.
    pub fn collides(&self, from: Cell, dir: ActionDir) -> bool {
        let (dx, dy) = dir.delta();
        let target = (from.0 + dx, from.1 + dy);
        !self.in_bounds(target) || self.is_obstacle(target)
    }

    /// Observation at a cell: goal offsets (goal minus agent) and the
    /// 8-neighbor obstacle mask in action order.
    pub fn observe(&self, pos: Cell) -> EnvState {
        let mut blocked = [false; ACTION_COUNT];
        for (k, dir) in ActionDir::ALL.iter().enumerate() {
            blocked[k] = self.collides(pos, *dir);
        }
        EnvState {
            dx: self.goal.0 - pos.0,
            dy: self.goal.1 - pos.1,
            blocked,
        }
    }

    /// Start-of-episode observation (agent at the start cell).
    pub fn reset(&self) -> EnvState {
        self.observe(self.start)
    }

    /// Execute one move. Rewards:
    /// goal +500, collision (incl. out of bounds) -500, unchanged goal
    /// distance -200, farther -100, closer +100. Goal and collision end the
    /// episode; a collision leaves the agent in place.
    pub fn step(&self, pos: Cell, action: ActionDir) -> StepOutcome {
        let (dx, dy) = action.delta();
        let target = (pos.0 + dx, pos.1 + dy);
        if !self.in_bounds(target) || self.is_obstacle(target) {
            return StepOutcome {
                next_pos: pos,
                next_state: self.observe(pos),
                reward: REWARD_COLLISION,
                terminal: true,
                event: StepEvent::Collision,
            };
        }
        if target == self.goal {
            return StepOutcome {
                next_pos: target,
                next_state: self.observe(target),
                reward: REWARD_GOAL,
                terminal: true,
                event: StepEvent::Goal,
            };
        }
        // Euclidean distance comparison, exact via squared integer distances.
        let before = dist_sq(pos, self.goal);
        let after = dist_sq(target, self.goal);
        let (reward, event) = match after.cmp(&before) {
            std::cmp::Ordering::Less => (REWARD_CLOSER, StepEvent::Closer),
            std::cmp::Ordering::Greater => (REWARD_FARTHER, StepEvent::Farther),
            std::cmp::Ordering::Equal => (REWARD_STATIONARY, StepEvent::Stationary),
        };
        StepOutcome {
            next_pos: target,
            next_state: self.observe(target),
            reward,
            terminal: false,
            event,
        }
    }
}

fn dist_sq(a: Cell, b: Cell) -> i64 {
    let dx = i64::from(a.0 - b.0);
    let dy = i64::from(a.1 - b.1);
    dx * dx + dy * dy
}

/// Path length (number of moves) and turn count (moves whose direction
/// differs from the previous move's).
pub fn path_metrics(path: &[Cell]) -> Result<(usize, usize), EnvError> {
    let mut dirs = Vec::with_capacity(path.len().saturating_sub(1));
    for pair in path.windows(2) {
        let d = (pair[1].0 - pair[0].0, pair[1].1 - pair[0].1);
        let dir = ActionDir::from_delta(d)
            .ok_or(EnvError::NonAdjacentCells(pair[0], pair[1]))?;
        dirs.push(dir);
    }
    let turns = dirs.windows(2).filter(|w| w[0] != w[1]).count();
    Ok((dirs.len(), turns))
}

/// Maps shipped with the crate. Layouts are fixed files under `maps/`;
/// see the README for how they were produced.
pub mod builtin {
    pub const MAP1_DENSE_RANDOM: &str = include_str!("../maps/map1-dense-random.txt");
    pub const MAP2_SPARSE_RANDOM: &str = include_str!("../maps/map2-sparse-random.txt");
    pub const MAP3_FUNNEL: &str = include_str!("../maps/map3-funnel.txt");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "map1-dense-random" => Some(MAP1_DENSE_RANDOM),
            "map2-sparse-random" => Some(MAP2_SPARSE_RANDOM),
            "map3-funnel" => Some(MAP3_FUNNEL),
            _ => None,
        }
    }

    pub const NAMES: [&str; 3] = ["map1-dense-random", "map2-sparse-random", "map3-funnel"];
}
