#![allow(dead_code)]

use wsbc::env::BaselinePolicy;
use wsbc::pipeline::RunConfig;

/// A run config small enough to execute the whole pipeline in well under a
/// second.
pub fn tiny_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let g = &mut cfg.generate;
    g.policy = BaselinePolicy::Bad;
    g.epsilon = 0.8;
    g.n_transitions = 600;
    g.episode_length = 100;
    g.history_len = 5;
    cfg.models.ensemble_size = 2;
    let m = &mut cfg.models.train;
    m.hidden = 8;
    m.max_epochs = 3;
    m.batches_per_epoch = Some(2);
    m.overshoot.horizon = 5;
    cfg.behavior.hidden = 8;
    cfg.behavior.max_epochs = 3;
    let s = &mut cfg.search;
    s.d = 0.05;
    s.n_starts = 3;
    s.swarm.n_particles = 8;
    s.swarm.neighborhood_size = 3;
    s.swarm.iterations = 3;
    s.rollout.horizon = 5;
    cfg.eval.episodes = 4;
    cfg.eval.horizon = 20;
    cfg.sweep.repetitions = 2;
    cfg
}

/// Relative paths and contents of every file under `dir`.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
