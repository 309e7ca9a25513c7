use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use super::EnergyArgs;
use crate::energy::{EnergyConfig, Term};
use crate::error::{Error, Result};
use crate::phantom::DegradeSpec;
use crate::refine::RefineConfig;
use crate::volume::GridSpacing;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    None,
    /// Skip refinement entirely.
    Refine,
    Terms(Vec<Term>),
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Ablation::None),
            "refine" => Ok(Ablation::Refine),
            list => {
                let mut terms = Vec::new();
                for name in list.split(',') {
                    let t: Term = name.trim().parse()?;
                    if !terms.contains(&t) {
                        terms.push(t);
                    }
                }
                Ok(Ablation::Terms(terms))
            }
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ablation::None => f.write_str("none"),
            Ablation::Refine => f.write_str("refine"),
            Ablation::Terms(t) => {
                let names: Vec<&str> = t.iter().map(|t| t.name()).collect();
                f.write_str(&names.join(","))
            }
        }
    }
}

impl Serialize for Ablation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Overlays `patch` onto `base`; every key in `patch` must already exist.
fn merge_strict(base: &mut Value, patch: &Value, path: &str) -> Result<()> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let slot = b.get_mut(k).ok_or_else(|| Error::invalid(format!("unknown config key '{here}'")))?;
                merge_strict(slot, v, &here)?;
            }
            Ok(())
        }
        (b, p) if b.is_object() || p.is_object() => {
            Err(Error::invalid(format!("config key '{path}' has the wrong shape")))
        }
        (b, p) => {
            *b = p.clone();
            Ok(())
        }
    }
}

/// Defaults for `spacing`, then the config file, then flags, then disabled
/// terms.
pub fn load_refine_config(spacing: GridSpacing, args: &EnergyArgs, disabled: &[Term]) -> Result<RefineConfig> {
    let mut cfg = RefineConfig::with_energy(EnergyConfig::for_spacing(spacing));
    if let Some(path) = &args.config {
        cfg = apply_config_file(&cfg, path)?;
    }
    let e = &mut cfg.energy;
    let overrides = [
        (&mut e.lambda_s, args.lambda_s),
        (&mut e.lambda_o, args.lambda_o),
        (&mut e.lambda_e, args.lambda_e),
        (&mut e.lambda_g, args.lambda_g),
        (&mut e.lambda_r, args.lambda_r),
        (&mut e.sigma, args.sigma),
        (&mut e.beta, args.beta),
        (&mut e.tau, args.tau),
        (&mut cfg.step_size, args.step_size),
        (&mut cfg.grad_tol, args.grad_tol),
    ];
    for (slot, v) in overrides {
        if let Some(v) = v {
            *slot = v;
        }
    }
    if let Some(n) = args.max_iters {
        cfg.max_iters = n;
    }
    if let Some(n) = args.trace_every {
        cfg.trace_every = n;
    }
    for &t in disabled {
        cfg.energy.set_weight(t, 0.0);
    }
    cfg.validate()?;
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {}", args.threshold)));
    }
    Ok(cfg)
}

fn apply_config_file(cfg: &RefineConfig, path: &Path) -> Result<RefineConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::format(format!("cannot read config {}: {e}", path.display())))?;
    let patch: Value =
        serde_json::from_str(&text).map_err(|e| Error::format(format!("bad config {}: {e}", path.display())))?;
    let mut base = serde_json::to_value(cfg).map_err(|e| Error::format(e.to_string()))?;
    merge_strict(&mut base, &patch, "").map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    serde_json::from_value(base).map_err(|e| Error::format(format!("bad config {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineSource {
    Preset(String),
    Spec(PathBuf),
    Occupancy { occupancy: PathBuf, truth: Option<PathBuf> },
}

/// Everything a pipeline run depends on; echoed into the summary.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineConfig {
    pub source: PipelineSource,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub degrade: Option<DegradeSpec>,
    pub threshold: f64,
    pub refine: RefineConfig,
    pub ablation: Ablation,
    pub samples: usize,
    pub sample_seed: u64,
    pub shell_radius: f64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let paths: Vec<&PathBuf> = match &self.source {
            PipelineSource::Preset(_) => vec![],
            PipelineSource::Spec(p) => vec![p],
            PipelineSource::Occupancy { occupancy, truth } => std::iter::once(occupancy).chain(truth).collect(),
        };
        for p in paths {
            let exists = p.exists() || crate::io::volume_paths(p).0.exists();
            if !exists {
                return Err(Error::format(format!("{} does not exist", p.display())));
            }
        }
        if let Some(d) = &self.degrade {
            d.validate()?;
        }
        self.refine.validate()?;
        if self.samples == 0 {
            return Err(Error::invalid("samples must be >= 1"));
        }
        if !(self.shell_radius >= 1.0) {
            return Err(Error::invalid("shell_radius must be >= 1"));
        }
        Ok(())
    }
}
