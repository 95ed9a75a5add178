use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::OrchestratorError;
use crate::corpus::write_atomic;

pub const STATE_FILE: &str = "state.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    ForwardEpochs,
    BackwardEpochs,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Pretrain => "pretrain",
            Phase::ForwardEpochs => "forward_epochs",
            Phase::BackwardEpochs => "backward_epochs",
            Phase::Done => "done",
        })
    }
}

/// Last completed sub-step inside an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Start,
    /// Backward model mapped every external question to a pseudo source.
    Sourced,
    /// Questions generated (round trips, or top-k for training instances).
    Generated,
    Selected,
    Trained,
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Step::Start => "start",
            Step::Sourced => "sourced",
            Step::Generated => "generated",
            Step::Selected => "selected",
            Step::Trained => "trained",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretrainProgress {
    pub forward: bool,
    pub backward: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub iteration: u32,
    pub phase: Phase,
    pub epoch: u32,
    pub generated: usize,
    pub selected: usize,
    pub rejected: usize,
    pub trained: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Position {
    pub iteration: u32,
    pub phase: Phase,
    pub epoch: u32,
    pub step: Step,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            Phase::Pretrain | Phase::Done => write!(f, "{}", self.phase),
            _ => write!(
                f,
                "iteration {} {} epoch {} after step {}",
                self.iteration, self.phase, self.epoch, self.step
            ),
        }
    }
}

/// Durable progress of one run, rewritten atomically after every sub-step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorState {
    pub run_id: String,
    pub config_digest: String,
    pub config_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub iteration: u32,
    pub phase: Phase,
    pub epoch: u32,
    pub step: Step,
    pub pretrain: PretrainProgress,
    pub artifacts: BTreeMap<String, ArtifactRef>,
    pub history: Vec<EpochRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

impl OrchestratorState {
    pub fn new(run_id: String, config_digest: String, config_path: PathBuf) -> Self {
        OrchestratorState {
            run_id,
            config_digest,
            config_path,
            seed_override: None,
            iteration: 0,
            phase: Phase::Pretrain,
            epoch: 0,
            step: Step::Start,
            pretrain: PretrainProgress::default(),
            artifacts: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn position(&self) -> Position {
        Position {
            iteration: self.iteration,
            phase: self.phase,
            epoch: self.epoch,
            step: self.step,
        }
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn load(run_dir: &Path) -> Result<Self, OrchestratorError> {
        let path = run_dir.join(STATE_FILE);
        let bytes = fs::read(&path).map_err(|e| OrchestratorError::CorruptState(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| OrchestratorError::CorruptState(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), OrchestratorError> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("state serializes");
        bytes.push(b'\n');
        write_atomic(&run_dir.join(STATE_FILE), &bytes).map_err(OrchestratorError::from)
    }

    /// Records `rel` (relative to `run_dir`) under `key` with its current digest.
    pub fn register(&mut self, run_dir: &Path, key: String, rel: &str) -> Result<(), OrchestratorError> {
        let sha256 = sha256_file(&run_dir.join(rel))
            .map_err(|e| OrchestratorError::Io(format!("{rel}: {e}")))?;
        self.artifacts.insert(key, ArtifactRef { path: rel.to_owned(), sha256 });
        Ok(())
    }

    /// Every recorded artifact must exist with its recorded digest.
    pub fn verify_artifacts(&self, run_dir: &Path) -> Result<(), OrchestratorError> {
        for a in self.artifacts.values() {
            let full = run_dir.join(&a.path);
            if !full.exists() {
                return Err(OrchestratorError::CorruptState(format!("missing artifact {}", a.path)));
            }
            let actual = sha256_file(&full).map_err(|e| OrchestratorError::CorruptState(format!("{}: {e}", a.path)))?;
            if actual != a.sha256 {
                return Err(OrchestratorError::CorruptState(format!("artifact {} digest mismatch", a.path)));
            }
        }
        Ok(())
    }
}
