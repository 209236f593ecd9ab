//! JSON Lines dataset files.
//!
//! Line 1 is `{"schema":1,"state_dim":D,"action_count":K}`; every following
//! line is one trajectory
//! `{"demonstrator_id":..,"episode_id":..,"steps":[{"state":[..],"action":a},..]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Trajectory};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema: u32,
    pub state_dim: usize,
    pub action_count: usize,
}

pub fn write_dataset(ds: &Dataset, out: &mut impl Write) -> std::io::Result<()> {
    let header = DatasetHeader {
        schema: SCHEMA_VERSION,
        state_dim: ds.state_dim(),
        action_count: ds.action_count(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for t in ds.trajectories() {
        serde_json::to_writer(&mut *out, t)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, ds.to_jsonl()).map_err(|e| Error::io(path, e))
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing header line".into(),
    })?;
    let header: DatasetHeader = serde_json::from_str(first).map_err(|e| Error::Parse {
        line: 1,
        message: format!("header: {e}"),
    })?;
    if header.schema != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema version {}",
            header.schema
        )));
    }
    let mut trajectories = Vec::new();
    for (idx, line) in lines {
        let t: Trajectory = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        trajectories.push(t);
    }
    Dataset::new(header.state_dim, header.action_count, trajectories)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}
