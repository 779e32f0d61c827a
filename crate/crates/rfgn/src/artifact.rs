//! Model artifact directory: `config.json`, `psi.bin`, `cache.bin`,
//! `features.bin` and `log.csv`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rfgn_core::cache::NodeStateCache;
use rfgn_core::train::{EpochRecord, TrainedModel};

use crate::config::RunConfig;
use crate::{snapshot, CliError};

pub const CONFIG: &str = "config.json";
pub const PSI: &str = "psi.bin";
pub const CACHE: &str = "cache.bin";
pub const FEATURES: &str = "features.bin";
pub const LOG: &str = "log.csv";

fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

pub fn log_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,loss,valid_mrr,seconds\n");
    for r in log {
        let mrr = r.valid_mrr.map(|m| format!("{m:.6}")).unwrap_or_default();
        out.push_str(&format!("{},{:.6},{mrr},{:.3}\n", r.epoch, r.loss, r.seconds));
    }
    out
}

pub fn save(dir: &Path, cfg: &RunConfig, model: &TrainedModel) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let path = dir.join(CONFIG);
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(cfg.to_json().as_bytes()))
        .map_err(io(&path))?;
    for (name, m) in [
        (PSI, &model.relations),
        (CACHE, model.cache.states()),
        (FEATURES, model.cache.initial()),
    ] {
        let path = dir.join(name);
        snapshot::write(&path, m).map_err(io(&path))?;
    }
    let path = dir.join(LOG);
    fs::write(&path, log_csv(&model.log)).map_err(io(&path))
}

/// Restores the config echo and model. The training log is not reloaded.
pub fn load(dir: &Path) -> Result<(RunConfig, TrainedModel), CliError> {
    let path = dir.join(CONFIG);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let cfg = RunConfig::from_json(&text)?;
    let train = cfg.train_config()?;
    let read = |name: &str| {
        let path = dir.join(name);
        snapshot::read(&path).map_err(io(&path))
    };
    let relations = read(PSI)?;
    let initial = read(FEATURES)?;
    let states = read(CACHE)?;
    let cache = NodeStateCache::with_states(initial, states, train.layers, 0)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    if relations.dim() != train.dim || cache.states().dim() != train.dim {
        return Err(CliError::Data(format!(
            "{}: stored matrices do not have dimension {}",
            dir.display(),
            train.dim
        )));
    }
    let model = TrainedModel {
        relations,
        cache,
        config: train,
        log: Vec::new(),
        kept_epoch: 0,
    };
    Ok((cfg, model))
}
