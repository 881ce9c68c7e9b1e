//! Compact `--data` spec strings for the embed/eval commands.
//!
//! Forms: `cifar10:<dir>`, `cifar100:<dir>`, and
//! `synthetic:seed=7[,classes=5][,per_class=1000][,side=16][,jitter=1.0][,noise=0.04]`.

use std::path::PathBuf;

use crate::config::{DatasetConfig, DatasetKind};
use crate::error::{CliError, Result};

pub fn parse_data_spec(spec: &str) -> Result<DatasetConfig> {
    let bad = |reason: &str| CliError::DataSpec { spec: spec.into(), reason: reason.into() };
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad("expected '<kind>:<args>'"))?;
    let mut config = DatasetConfig {
        kind: match kind {
            "cifar10" => DatasetKind::Cifar10,
            "cifar100" => DatasetKind::Cifar100,
            "synthetic" => DatasetKind::Synthetic,
            other => return Err(bad(&format!("unknown dataset kind '{other}'"))),
        },
        dir: None,
        seed: None,
        classes: None,
        per_class: None,
        side: None,
        jitter: None,
        noise: None,
    };
    match config.kind {
        DatasetKind::Cifar10 | DatasetKind::Cifar100 => {
            if rest.is_empty() {
                return Err(bad("missing directory"));
            }
            config.dir = Some(PathBuf::from(rest));
        }
        DatasetKind::Synthetic => {
            for pair in rest.split(',').filter(|p| !p.is_empty()) {
                let (key, value) = pair
                    .split_once('=')
                    .ok_or_else(|| bad(&format!("expected key=value, got '{pair}'")))?;
                let unsigned =
                    || value.parse::<u64>().map_err(|_| bad(&format!("bad number in '{pair}'")));
                let float =
                    || value.parse::<f64>().map_err(|_| bad(&format!("bad number in '{pair}'")));
                match key {
                    "seed" => config.seed = Some(unsigned()?),
                    "classes" => config.classes = Some(unsigned()? as usize),
                    "per_class" => config.per_class = Some(unsigned()? as usize),
                    "side" => config.side = Some(unsigned()? as usize),
                    "jitter" => config.jitter = Some(float()?),
                    "noise" => config.noise = Some(float()?),
                    other => return Err(bad(&format!("unknown key '{other}'"))),
                }
            }
        }
    }
    config.validate()?;
    Ok(config)
}
