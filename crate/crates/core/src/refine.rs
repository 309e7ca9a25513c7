//! Grid-space minimization of the total energy, starting from the signed
//! distance of the thresholded occupancy.
//!
//! The occupancy volume is a fixed input: only SDF samples are updated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::edt::signed_distance_from_mask;
use crate::energy::{total_energy, EnergyConfig, EnergyReport, TermBreakdown};
use crate::error::{Error, Result};
use crate::volume::{OccupancyVolume, SdfVolume, VoxelVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub energy: EnergyConfig,
    /// Step size in mm.
    pub step_size: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub trace_every: usize,
}

impl RefineConfig {
    pub const DEFAULT_STEP: f64 = 1e-2;
    pub const DEFAULT_ITERS: usize = 500;

    pub fn with_energy(energy: EnergyConfig) -> Self {
        Self { energy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid(format!("step_size must be > 0, got {}", self.step_size)));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be >= 1"));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::invalid("grad_tol must be >= 0"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be > 0"));
        }
        if self.trace_every == 0 {
            return Err(Error::invalid("trace_every must be >= 1"));
        }
        Ok(())
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            energy: EnergyConfig::default(),
            step_size: Self::DEFAULT_STEP,
            max_iters: Self::DEFAULT_ITERS,
            grad_tol: 1e-10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            trace_every: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    pub terms: TermBreakdown,
    pub grad_sup: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineTrace {
    pub entries: Vec<TraceEntry>,
}

impl RefineTrace {
    fn record(&mut self, iteration: usize, report: &EnergyReport) {
        self.entries.push(TraceEntry {
            iteration,
            total: report.total.value,
            terms: report.terms,
            grad_sup: report.grad_sup(),
        });
    }

    pub fn first(&self) -> Option<&TraceEntry> {
        self.entries.first()
    }

    pub fn last(&self) -> Option<&TraceEntry> {
        self.entries.last()
    }
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub sdf: SdfVolume,
    /// Set when the thresholded mask was all background or all foreground and
    /// a constant field was substituted.
    pub degenerate: bool,
}

/// Signed distance of `y >= threshold`; degenerate masks fall back to a
/// constant `+diagonal` (nothing inside) or `-dx` (everything inside) field.
pub fn init_from_occupancy(y: &OccupancyVolume, threshold: f64) -> Result<InitOutcome> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let mask = y.threshold(threshold);
    let count = mask.count();
    if count == 0 || count == mask.len() {
        let fill = if count == 0 { y.diagonal().max(y.spacing().dx()) } else { -y.spacing().dx() };
        log::warn!(
            "thresholded occupancy is all {}; using constant field {fill}",
            if count == 0 { "background" } else { "foreground" }
        );
        let sdf = SdfVolume::new(VoxelVolume::new(y.dims(), y.spacing(), fill))?;
        return Ok(InitOutcome { sdf, degenerate: true });
    }
    Ok(InitOutcome { sdf: signed_distance_from_mask(&mask)?, degenerate: false })
}

#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub sdf: SdfVolume,
    pub trace: RefineTrace,
    /// Number of gradient evaluations performed after the initial one.
    pub iterations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    /// False when the optimizer ended above the starting energy and the
    /// initial field was returned instead.
    pub improved: bool,
}

/// Moment-based first-order descent on the SDF samples.
pub fn refine_sdf(
    f0: &SdfVolume,
    y: &OccupancyVolume,
    f_ref: Option<&SdfVolume>,
    cfg: &RefineConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    if let Some(r) = f_ref {
        f0.check_same_grid(r, "reference SDF")?;
    }
    let n = f0.len();
    let mut field = f0.as_volume().clone();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut trace = RefineTrace::default();

    let mut report = total_energy(f0, y, f_ref, &cfg.energy)?;
    let initial_energy = report.total.value;
    trace.record(0, &report);

    let mut iters = 0;
    let mut b1t = 1.0;
    let mut b2t = 1.0;
    while iters < cfg.max_iters {
        iters += 1;
        if report.grad_sup() < cfg.grad_tol {
            break;
        }
        b1t *= cfg.beta1;
        b2t *= cfg.beta2;
        let (c1, c2) = (1.0 - b1t, 1.0 - b2t);
        let (beta1, beta2, eps, lr) = (cfg.beta1, cfg.beta2, cfg.epsilon, cfg.step_size);
        field
            .data_mut()
            .par_iter_mut()
            .zip(m.par_iter_mut())
            .zip(v.par_iter_mut())
            .zip(report.total.gradient.data().par_iter())
            .for_each(|(((x, mi), vi), g)| {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            });
        let current = SdfVolume::new(field.clone())
            .map_err(|_| Error::NonFinite { term: "update".into() })?;
        report = total_energy(&current, y, f_ref, &cfg.energy)?;
        if iters % cfg.trace_every == 0 {
            trace.record(iters, &report);
        }
    }
    if trace.last().map(|e| e.iteration) != Some(iters) {
        trace.record(iters, &report);
    }

    let final_energy = report.total.value;
    if final_energy > initial_energy {
        log::warn!("refinement ended above the initial energy ({final_energy} > {initial_energy}); keeping the initial field");
        let first = trace.entries[0];
        trace.entries.push(TraceEntry { iteration: iters, ..first });
        return Ok(RefineOutcome {
            sdf: f0.clone(),
            trace,
            iterations: iters,
            initial_energy,
            final_energy: initial_energy,
            improved: false,
        });
    }
    Ok(RefineOutcome {
        sdf: SdfVolume::new(field)?,
        trace,
        iterations: iters,
        initial_energy,
        final_energy,
        improved: true,
    })
}
