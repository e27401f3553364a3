//! Run directory artifacts: `run.meta`, `gen-<n>.record`, `champion.genome`,
//! and `checkpoint`.
//!
//! Everything is pretty-printed JSON with stable key order, so two runs
//! with the same seed in mock mode produce byte-identical records, and
//! `run.meta` plus the inputs suffices to re-execute a run exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::genome::{ModelId, PipelineGenome, SearchParams};
use crate::speciation::Species;

use super::{ChampionRecord, EngineError, GenerationRecord};

pub const RUN_META_FILE: &str = "run.meta";
pub const CHAMPION_FILE: &str = "champion.genome";
pub const CHECKPOINT_FILE: &str = "checkpoint";

pub fn record_file(generation: u32) -> String {
    format!("gen-{generation}.record")
}

/// Full resolved configuration of a search run, written once at start.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub generations: u32,
    pub stratify: bool,
    pub model_pool: Vec<ModelId>,
    pub problem_count: usize,
    pub params: SearchParams,
}

/// Everything needed to resume a search at `next_generation`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub next_generation: u32,
    pub population: Vec<PipelineGenome>,
    pub species: Vec<Species>,
    pub threshold: f64,
    pub innovation_next: u64,
    pub species_id_next: u64,
    pub champion: Option<ChampionRecord>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| EngineError::Io {
        path: path.display().to_string(),
        cause: e.to_string(),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EngineError> {
    let text = std::fs::read_to_string(path).map_err(|e| EngineError::Io {
        path: path.display().to_string(),
        cause: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| EngineError::Io {
        path: path.display().to_string(),
        cause: e.to_string(),
    })
}

/// Writer for one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, EngineError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| EngineError::Io {
            path: root.display().to_string(),
            cause: e.to_string(),
        })?;
        Ok(RunDir { root })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_meta(&self, meta: &RunMeta) -> Result<(), EngineError> {
        write_json(&self.root.join(RUN_META_FILE), meta)
    }

    pub fn write_record(&self, record: &GenerationRecord) -> Result<(), EngineError> {
        write_json(&self.root.join(record_file(record.generation)), record)
    }

    pub fn write_champion(&self, genome: &PipelineGenome) -> Result<(), EngineError> {
        let path = self.root.join(CHAMPION_FILE);
        std::fs::write(&path, crate::genome::serialize_genome(genome)).map_err(|e| {
            EngineError::Io {
                path: path.display().to_string(),
                cause: e.to_string(),
            }
        })
    }

    pub fn write_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), EngineError> {
        write_json(&self.root.join(CHECKPOINT_FILE), checkpoint)
    }

    pub fn load_checkpoint(&self) -> Result<Checkpoint, EngineError> {
        read_json(&self.root.join(CHECKPOINT_FILE))
    }

    pub fn has_checkpoint(&self) -> bool {
        self.root.join(CHECKPOINT_FILE).exists()
    }

    pub fn load_record(&self, generation: u32) -> Result<GenerationRecord, EngineError> {
        read_json(&self.root.join(record_file(generation)))
    }
}
