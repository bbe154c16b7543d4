//! Small run configurations and run-directory helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use fusion_drive::agents::NetworkConfig;
use fusion_drive::drivesim::{RenderConfig, RouteParams};
use fusion_drive::fusion::{EncoderConfig, Modality};
use fusion_drive::train::RoutePool;
use fusion_drive::RunConfig;

/// A few-second run: 8×8 images, one residual block, short routes.
pub fn tiny_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.network = NetworkConfig {
        encoder: EncoderConfig { height: 8, width: 8, channels: vec![2], modality: Modality::Fusion },
        hidden: 8,
    };
    cfg.env.render = RenderConfig { height: 8, width: 8, forward_range: 12.0, lateral_range: 12.0, line_width: 0.6 };
    cfg.env.timeout_steps = 150;
    cfg.routes = RoutePool {
        params: RouteParams { min_length: 20.0, max_length: 30.0, ..RouteParams::default() },
        train_seeds: vec![0, 1],
        eval_seeds: vec![1000, 1001],
    };
    cfg.agent.batch_size = 8;
    cfg.agent.warmup_steps = 40;
    cfg.agent.gradient_steps_per_episode = Some(3);
    cfg.episodes = 6;
    cfg.checkpoint_every = 2;
    cfg.baseline_episodes = 2;
    cfg.replay_capacity = 2000;
    cfg
}

/// Every file under `dir`, keyed by its path relative to `dir`.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
