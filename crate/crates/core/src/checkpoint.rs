//! On-disk snapshots of trained parameters.
//!
//! A checkpoint directory holds `manifest.toml` and `params.bin`. For a
//! library, `params.bin` is each block's serialized [`ParamVector`] followed by
//! its reward weights, in task order; for a Q-network it is the single vector.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{read_f64s, write_f64s, ParamVector};
use crate::sfr::{PolicyLibrary, RewardModel, XiArch, XiNet};
use crate::train::{Learner, TrainConfig};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Library,
    QNet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: LearnerKind,
    pub task_ids: Vec<usize>,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub reward_learned: Vec<bool>,
    pub config: TrainConfig,
}

pub fn save(dir: &Path, learner: &Learner, cfg: &TrainConfig) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(PARAMS_FILE))?);
    let manifest = match learner {
        Learner::Library(lib) => {
            for (net, rm) in lib.nets().iter().zip(lib.rewards()) {
                net.params().write_to(&mut w)?;
                write_f64s(&mut w, rm.weights())?;
            }
            let arch = lib.arch();
            Manifest {
                kind: LearnerKind::Library,
                task_ids: (0..lib.active_count()).collect(),
                obs_dim: arch.obs_dim,
                num_actions: arch.num_actions,
                feature_dim: arch.feature_dim,
                hidden: arch.hidden.clone(),
                reward_learned: lib.rewards().iter().map(RewardModel::is_learned).collect(),
                config: cfg.clone(),
            }
        }
        Learner::QNet(q) => {
            q.write_to(&mut w)?;
            let widths = q.layout().widths();
            Manifest {
                kind: LearnerKind::QNet,
                task_ids: (0..cfg.num_tasks).collect(),
                obs_dim: widths[0],
                num_actions: widths[widths.len() - 1],
                feature_dim: 0,
                hidden: widths[1..widths.len() - 1].to_vec(),
                reward_learned: Vec::new(),
                config: cfg.clone(),
            }
        }
    };
    w.flush()?;
    let text = toml::to_string(&manifest).map_err(|e| Error::Input(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(Learner, Manifest)> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| Error::Input(format!("cannot read checkpoint manifest: {e}")))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Input(e.to_string()))?;
    let mut r = BufReader::new(File::open(dir.join(PARAMS_FILE))?);
    let learner = match manifest.kind {
        LearnerKind::QNet => Learner::QNet(ParamVector::read_from(&mut r)?),
        LearnerKind::Library => {
            let arch = XiArch {
                obs_dim: manifest.obs_dim,
                hidden: manifest.hidden.clone(),
                num_actions: manifest.num_actions,
                feature_dim: manifest.feature_dim,
            };
            if manifest.reward_learned.len() != manifest.task_ids.len() {
                return Err(Error::Input("manifest task and reward counts differ".into()));
            }
            let mut nets = Vec::new();
            let mut rewards = Vec::new();
            for &learned in &manifest.reward_learned {
                nets.push(XiNet::new(
                    ParamVector::read_from(&mut r)?,
                    arch.num_actions,
                    arch.feature_dim,
                )?);
                let w = read_f64s(&mut r)?;
                if w.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Input("non-finite reward weights".into()));
                }
                rewards.push(RewardModel::from_parts(w, learned));
            }
            Learner::Library(PolicyLibrary::from_parts(arch, nets, rewards)?)
        }
    };
    Ok((learner, manifest))
}
