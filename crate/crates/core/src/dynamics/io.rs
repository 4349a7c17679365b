use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DynamicsModel, Ensemble, OvershootConfig, TrainedModel};
use crate::data::sidecar_path;
use crate::error::{check_len, Error, Result};
use crate::jsonfile;
use crate::nn::{weights, Normalizer, RecurrentNet};

/// JSON sidecar of a saved model: everything except the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    pub param_count: usize,
    pub state_norm: Normalizer,
    pub action_norm: Normalizer,
    pub seed: u64,
    pub validation_loss: f64,
    pub epochs: usize,
    pub overshoot: OvershootConfig,
}

impl ModelRecord {
    pub fn new(trained: &TrainedModel, overshoot: OvershootConfig) -> Self {
        let m = &trained.model;
        ModelRecord {
            state_dim: m.state_dim(),
            action_dim: m.action_dim(),
            hidden: m.hidden_dim(),
            param_count: m.net.param_count(),
            state_norm: m.state_norm.clone(),
            action_norm: m.action_norm.clone(),
            seed: trained.seed,
            validation_loss: trained.validation_loss,
            epochs: trained.epochs,
            overshoot,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleIndex {
    members: Vec<String>,
    seeds: Vec<u64>,
}

/// Writes the weights to `path` and the record to `path.json`.
pub fn save_model(path: &Path, model: &DynamicsModel, record: &ModelRecord) -> Result<()> {
    weights::write(path, &model.net.flatten())?;
    jsonfile::write(&sidecar_path(path), record)
}

pub fn load_model(path: &Path) -> Result<(DynamicsModel, ModelRecord)> {
    let record: ModelRecord = jsonfile::read(&sidecar_path(path))?;
    let flat = weights::read(path)?;
    check_len("model parameters", record.param_count, flat.len())?;
    let net = RecurrentNet::from_flat(
        record.state_dim + record.action_dim,
        record.hidden,
        record.state_dim,
        &flat,
    )?;
    let model = DynamicsModel::new(net, record.state_norm.clone(), record.action_norm.clone())?;
    Ok((model, record))
}

/// Saves every member as `member_<k>.wsbw` plus an `ensemble.json` index in
/// `dir`; returns the files written.
pub fn save_ensemble(
    dir: &Path,
    ensemble: &Ensemble,
    records: &[ModelRecord],
) -> Result<Vec<PathBuf>> {
    check_len("ensemble records", ensemble.len(), records.len())?;
    jsonfile::create_dir(dir)?;
    let mut files = Vec::new();
    let mut names = Vec::new();
    for (k, (m, r)) in ensemble.members.iter().zip(records).enumerate() {
        let name = format!("member_{k}.wsbw");
        let path = dir.join(&name);
        save_model(&path, m, r)?;
        files.push(path.clone());
        files.push(sidecar_path(&path));
        names.push(name);
    }
    let index = dir.join("ensemble.json");
    jsonfile::write(
        &index,
        &EnsembleIndex {
            members: names,
            seeds: ensemble.seeds.clone(),
        },
    )?;
    files.push(index);
    Ok(files)
}

pub fn load_ensemble(dir: &Path) -> Result<(Ensemble, Vec<ModelRecord>)> {
    let index: EnsembleIndex = jsonfile::read(&dir.join("ensemble.json"))?;
    if index.members.is_empty() {
        return Err(Error::Corrupt(format!(
            "{} lists no members",
            dir.display()
        )));
    }
    let mut members = Vec::new();
    let mut records = Vec::new();
    for name in &index.members {
        let (m, r) = load_model(&dir.join(name))?;
        members.push(m);
        records.push(r);
    }
    Ok((Ensemble::new(members, index.seeds)?, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn trained(seed: u64) -> TrainedModel {
        let net = RecurrentNet::random(3, 4, 2, &mut rng::stream(seed, 0, 0, 0));
        let model = DynamicsModel::new(
            net,
            Normalizer {
                mean: vec![1.0, 2.0],
                scale: vec![0.5, 3.0],
            },
            Normalizer::identity(1),
        )
        .unwrap();
        TrainedModel {
            model,
            seed,
            validation_loss: 0.25,
            epochs: 3,
            history: vec![1.0, 0.5, 0.25],
        }
    }

    #[test]
    fn ensemble_round_trip_rounds_weights_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let ts: Vec<_> = (0..2).map(trained).collect();
        let ens = Ensemble::new(ts.iter().map(|t| t.model.clone()).collect(), vec![0, 1]).unwrap();
        let recs: Vec<_> = ts
            .iter()
            .map(|t| ModelRecord::new(t, OvershootConfig::training()))
            .collect();
        let files = save_ensemble(dir.path(), &ens, &recs).unwrap();
        assert_eq!(files.len(), 5);
        let (back, brecs) = load_ensemble(dir.path()).unwrap();
        assert_eq!(brecs, recs);
        assert_eq!(back.seeds, vec![0, 1]);
        for (a, b) in ens.members.iter().zip(&back.members) {
            let fa: Vec<f64> = a.net.flatten().iter().map(|&x| x as f32 as f64).collect();
            assert_eq!(fa, b.net.flatten());
        }
    }

    #[test]
    fn missing_index_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_ensemble(dir.path()).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Io);
    }
}
