//! `dagcrew generate`: escape specs to disk.

use std::fs;
use std::path::{Path, PathBuf};

use dagcrew_worldsim::generate_escape;

use crate::HarnessError;

pub const BATCH_SEEDS: u64 = 5;
pub const DIFFICULTIES: std::ops::RangeInclusive<u32> = 1..=5;

pub fn generate(seed: u64, difficulty: u32, agents: usize, out: &Path) -> Result<(), HarnessError> {
    if !DIFFICULTIES.contains(&difficulty) {
        return Err(HarnessError::Usage(format!("difficulty {difficulty} is outside 1..=5")));
    }
    let spec = generate_escape(seed, difficulty, agents).map_err(|e| HarnessError::Usage(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir.display(), e))?;
    }
    fs::write(out, spec.to_json() + "\n").map_err(|e| HarnessError::io(out.display(), e))
}

/// Five consecutive seeds from `first_seed` at every difficulty, one file each.
pub fn generate_batch(first_seed: u64, agents: usize, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    for seed in first_seed..first_seed + BATCH_SEEDS {
        for d in DIFFICULTIES {
            let path = dir.join(format!("escape_s{seed}_d{d}.json"));
            generate(seed, d, agents, &path)?;
            out.push(path);
        }
    }
    Ok(out)
}
