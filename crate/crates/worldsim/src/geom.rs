use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Integer block cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[i32; 3]", into = "[i32; 3]")]
pub struct Pos {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn offset(self, dx: i32, dy: i32, dz: i32) -> Self {
        Self::new(self.x + dx, self.y + dy, self.z + dz)
    }

    pub fn manhattan(self, other: Pos) -> u64 {
        (self.x - other.x).unsigned_abs() as u64
            + (self.y - other.y).unsigned_abs() as u64
            + (self.z - other.z).unsigned_abs() as u64
    }

    /// Chebyshev distance, used for reach checks.
    pub fn reach(self, other: Pos) -> u32 {
        (self.x - other.x)
            .unsigned_abs()
            .max((self.y - other.y).unsigned_abs())
            .max((self.z - other.z).unsigned_abs())
    }

    pub fn dist_sq(self, other: Pos) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        let dz = (self.z - other.z) as i64;
        dx * dx + dy * dy + dz * dz
    }

    pub fn face_neighbors(self) -> [Pos; 6] {
        [
            self.offset(1, 0, 0),
            self.offset(-1, 0, 0),
            self.offset(0, 1, 0),
            self.offset(0, -1, 0),
            self.offset(0, 0, 1),
            self.offset(0, 0, -1),
        ]
    }
}

impl From<[i32; 3]> for Pos {
    fn from(v: [i32; 3]) -> Self {
        Pos::new(v[0], v[1], v[2])
    }
}

impl From<Pos> for [i32; 3] {
    fn from(p: Pos) -> Self {
        [p.x, p.y, p.z]
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.x, self.y, self.z)
    }
}

/// Block facing (θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Facing {
    #[default]
    #[serde(rename = "none")]
    None,
    #[serde(rename = "N")]
    North,
    #[serde(rename = "S")]
    South,
    #[serde(rename = "E")]
    East,
    #[serde(rename = "W")]
    West,
}

impl Facing {
    pub fn token(self) -> &'static str {
        match self {
            Facing::None => "None",
            Facing::North => "N",
            Facing::South => "S",
            Facing::East => "E",
            Facing::West => "W",
        }
    }
}

impl FromStr for Facing {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "none" | "null" => Ok(Facing::None),
            "n" | "north" => Ok(Facing::North),
            "s" | "south" => Ok(Facing::South),
            "e" | "east" => Ok(Facing::East),
            "w" | "west" => Ok(Facing::West),
            other => Err(format!("unknown facing `{other}`")),
        }
    }
}

/// Block axis (φ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    None,
    X,
    Y,
    Z,
}

impl Axis {
    pub fn token(self) -> &'static str {
        match self {
            Axis::None => "None",
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "none" | "null" => Ok(Axis::None),
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(format!("unknown axis `{other}`")),
        }
    }
}
