//! Discrete energy terms over SDF samples, each with its analytic gradient.
//!
//! All terms are means over the grid, so every gradient carries a `1/N`
//! factor. Scalar values go through [`crate::reduce::deterministic_sum`] and
//! do not depend on the thread count.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::blur::gaussian_blur_3d;
use crate::error::{Error, Result};
use crate::reduce::{deterministic_mean, sup_norm};
use crate::volume::{Dims, GridSpacing, OccupancyVolume, SdfVolume, VoxelVolume};

/// Clamp applied to the occupancy model before taking logs.
pub const OCC_EPS: f64 = 1e-7;

/// Term weights and scales.
///
/// `sigma` is in x-voxels (scaled per axis by spacing), `beta` in 1/mm,
/// `tau` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub lambda_s: f64,
    pub lambda_o: f64,
    pub lambda_e: f64,
    pub lambda_g: f64,
    pub lambda_r: f64,
    pub sigma: f64,
    pub beta: f64,
    pub tau: f64,
}

impl EnergyConfig {
    pub const DEFAULT_LAMBDA_S: f64 = 0.1;
    pub const DEFAULT_LAMBDA_O: f64 = 0.01;
    pub const DEFAULT_LAMBDA_E: f64 = 0.01;
    pub const DEFAULT_LAMBDA_G: f64 = 0.1;
    pub const DEFAULT_LAMBDA_R: f64 = 0.1;
    pub const DEFAULT_SIGMA: f64 = 2.0;
    /// `beta = BETA_PER_VOXEL / dx`.
    pub const BETA_PER_VOXEL: f64 = 2.0;
    /// `tau = TAU_VOXELS * dx`.
    pub const TAU_VOXELS: f64 = 0.5;

    /// Default weights with `beta` and `tau` scaled to the grid's x spacing.
    pub fn for_spacing(spacing: GridSpacing) -> Self {
        Self {
            beta: Self::BETA_PER_VOXEL / spacing.dx(),
            tau: Self::TAU_VOXELS * spacing.dx(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_s", self.lambda_s),
            ("lambda_o", self.lambda_o),
            ("lambda_e", self.lambda_e),
            ("lambda_g", self.lambda_g),
            ("lambda_r", self.lambda_r),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {w}")));
            }
        }
        for (name, v) in [("sigma", self.sigma), ("beta", self.beta), ("tau", self.tau)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, term: Term) -> f64 {
        match term {
            Term::Sdf => self.lambda_s,
            Term::Occ => self.lambda_o,
            Term::Eik => self.lambda_e,
            Term::Gauss => self.lambda_g,
            Term::Sur => self.lambda_r,
        }
    }

    pub fn set_weight(&mut self, term: Term, w: f64) {
        match term {
            Term::Sdf => self.lambda_s = w,
            Term::Occ => self.lambda_o = w,
            Term::Eik => self.lambda_e = w,
            Term::Gauss => self.lambda_g = w,
            Term::Sur => self.lambda_r = w,
        }
    }
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            lambda_s: Self::DEFAULT_LAMBDA_S,
            lambda_o: Self::DEFAULT_LAMBDA_O,
            lambda_e: Self::DEFAULT_LAMBDA_E,
            lambda_g: Self::DEFAULT_LAMBDA_G,
            lambda_r: Self::DEFAULT_LAMBDA_R,
            sigma: Self::DEFAULT_SIGMA,
            beta: Self::BETA_PER_VOXEL,
            tau: Self::TAU_VOXELS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Term {
    Sdf,
    Occ,
    Eik,
    Gauss,
    Sur,
}

impl Term {
    pub const ALL: [Term; 5] = [Term::Sdf, Term::Occ, Term::Eik, Term::Gauss, Term::Sur];

    pub fn name(self) -> &'static str {
        match self {
            Term::Sdf => "sdf",
            Term::Occ => "occ",
            Term::Eik => "eik",
            Term::Gauss => "gauss",
            Term::Sur => "sur",
        }
    }
}

impl std::str::FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Term::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown energy term '{s}' (expected sdf, occ, eik, gauss, sur)")))
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Value of a term and its gradient with respect to every sample.
#[derive(Debug, Clone)]
pub struct TermResult {
    pub value: f64,
    pub gradient: VoxelVolume,
}

/// Unweighted term values; `None` for terms that were not evaluated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub sdf: Option<f64>,
    pub occ: Option<f64>,
    pub eik: Option<f64>,
    pub gauss: Option<f64>,
    pub sur: Option<f64>,
}

impl TermBreakdown {
    pub fn get(&self, term: Term) -> Option<f64> {
        match term {
            Term::Sdf => self.sdf,
            Term::Occ => self.occ,
            Term::Eik => self.eik,
            Term::Gauss => self.gauss,
            Term::Sur => self.sur,
        }
    }

    fn slot(&mut self, term: Term) -> &mut Option<f64> {
        match term {
            Term::Sdf => &mut self.sdf,
            Term::Occ => &mut self.occ,
            Term::Eik => &mut self.eik,
            Term::Gauss => &mut self.gauss,
            Term::Sur => &mut self.sur,
        }
    }

    pub fn active(&self) -> impl Iterator<Item = (Term, f64)> + '_ {
        Term::ALL.into_iter().filter_map(|t| self.get(t).map(|v| (t, v)))
    }
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub total: TermResult,
    pub terms: TermBreakdown,
}

impl EnergyReport {
    pub fn grad_sup(&self) -> f64 {
        sup_norm(self.total.gradient.data())
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn finish(values: Vec<f64>, grad: Vec<f64>, like: &VoxelVolume) -> Result<TermResult> {
    Ok(TermResult {
        value: deterministic_mean(&values),
        gradient: VoxelVolume::from_data(like.dims(), like.spacing(), grad)?,
    })
}

/// Mean absolute deviation from a reference SDF.
pub fn sdf_term(f: &SdfVolume, f_ref: &SdfVolume) -> Result<TermResult> {
    f.check_same_grid(f_ref, "sdf term")?;
    let inv_n = 1.0 / f.len() as f64;
    let (values, grad): (Vec<f64>, Vec<f64>) = f
        .data()
        .par_iter()
        .zip(f_ref.data())
        .map(|(a, b)| {
            let d = a - b;
            (d.abs(), sign(d) * inv_n)
        })
        .unzip();
    finish(values, grad, f)
}

/// Occupancy implied by an SDF: `1 / (1 + exp(f / tau))`, about 1 inside.
#[inline]
pub fn occupancy_model(f: f64, tau: f64) -> f64 {
    logistic(-f / tau)
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy between the occupancy model of `f` and `y`.
pub fn data_term(f: &SdfVolume, y: &OccupancyVolume, tau: f64) -> Result<TermResult> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if f.dims() != y.dims() {
        return Err(Error::invalid(format!(
            "data term: dims {:?} vs {:?}",
            f.dims().as_array(),
            y.dims().as_array()
        )));
    }
    if let Some(v) = y.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid(format!("occupancy value {v} outside [0, 1]")));
    }
    let inv_n = 1.0 / f.len() as f64;
    let (values, grad): (Vec<f64>, Vec<f64>) = f
        .data()
        .par_iter()
        .zip(y.data())
        .map(|(&fv, &yv)| {
            let o_raw = logistic(-fv / tau);
            let q_raw = logistic(fv / tau);
            let o = o_raw.clamp(OCC_EPS, 1.0 - OCC_EPS);
            let q = q_raw.clamp(OCC_EPS, 1.0 - OCC_EPS);
            let bce = -(yv * o.ln() + (1.0 - yv) * q.ln());
            // d/df of the clamped model is zero once the clamp is active.
            let g = if o_raw > OCC_EPS && q_raw > OCC_EPS {
                -(o_raw - yv) / tau * inv_n
            } else {
                0.0
            };
            (bce, g)
        })
        .unzip();
    finish(values, grad, f)
}

static ANISO_WARNED: AtomicBool = AtomicBool::new(false);

/// Voxel-unit finite difference along one axis: central inside, one-sided at
/// the two ends.
fn diff_axis(data: &[f64], dims: Dims, axis: usize) -> Vec<f64> {
    let n = dims.axis(axis);
    let stride = dims.stride(axis);
    (0..data.len())
        .into_par_iter()
        .map(|idx| {
            let c = dims.coords(idx)[axis];
            if c == 0 {
                data[idx + stride] - data[idx]
            } else if c == n - 1 {
                data[idx] - data[idx - stride]
            } else {
                0.5 * (data[idx + stride] - data[idx - stride])
            }
        })
        .collect()
}

/// Adds `D^T a` to `out`, where `D` is [`diff_axis`].
fn diff_axis_transpose(a: &[f64], dims: Dims, axis: usize, out: &mut [f64]) {
    let n = dims.axis(axis);
    let stride = dims.stride(axis);
    out.par_iter_mut().enumerate().for_each(|(u, o)| {
        let c = dims.coords(u)[axis] as isize;
        let n = n as isize;
        let mut acc = 0.0;
        // Rows v that reference sample u: v = u - 1, u, u + 1 along the axis.
        for dv in -1isize..=1 {
            let cv = c + dv;
            if cv < 0 || cv >= n {
                continue;
            }
            let v = (u as isize + dv * stride as isize) as usize;
            let coef = if cv == 0 {
                match c - cv {
                    0 => -1.0,
                    1 => 1.0,
                    _ => 0.0,
                }
            } else if cv == n - 1 {
                match c - cv {
                    0 => 1.0,
                    -1 => -1.0,
                    _ => 0.0,
                }
            } else {
                match c - cv {
                    1 => 0.5,
                    -1 => -0.5,
                    _ => 0.0,
                }
            };
            acc += coef * a[v];
        }
        *o += acc;
    });
}

struct EikonalParts {
    gx: Vec<f64>,
    gy: Vec<f64>,
    gz: Vec<f64>,
    gamma2: f64,
    /// `(d_x f)² + (d_y f)² + (gamma d_z f)² - 1` per voxel.
    residual: Vec<f64>,
}

fn eikonal_parts(f: &SdfVolume) -> Result<EikonalParts> {
    let dims = f.dims();
    if dims.as_array().iter().any(|&n| n < 2) {
        return Err(Error::invalid(format!(
            "eikonal term needs at least 2 samples per axis, got {:?}",
            dims.as_array()
        )));
    }
    let spacing = f.spacing();
    if spacing.dx() != spacing.dy() && !ANISO_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!(
            "eikonal term assumes dx == dy; got dx={} dy={} (y derivative left unscaled)",
            spacing.dx(),
            spacing.dy()
        );
    }
    let gamma2 = spacing.gamma().powi(2);
    let data = f.data();
    let gx = diff_axis(data, dims, 0);
    let gy = diff_axis(data, dims, 1);
    let gz = diff_axis(data, dims, 2);
    let residual = (0..data.len())
        .into_par_iter()
        .map(|v| gx[v] * gx[v] + gy[v] * gy[v] + gamma2 * gz[v] * gz[v] - 1.0)
        .collect();
    Ok(EikonalParts { gx, gy, gz, gamma2, residual })
}

/// Per-voxel squared eikonal residual, the quantity the eikonal term averages.
pub fn eikonal_residuals(f: &SdfVolume) -> Result<VoxelVolume> {
    let parts = eikonal_parts(f)?;
    VoxelVolume::from_data(f.dims(), f.spacing(), parts.residual.iter().map(|r| r * r).collect())
}

/// Mean squared residual of `(d_x f)² + (d_y f)² + (gamma d_z f)² - 1` with
/// voxel-unit derivatives and `gamma = dz / dx`.
pub fn eikonal_term(f: &SdfVolume) -> Result<TermResult> {
    let EikonalParts { gx, gy, gz, gamma2, residual } = eikonal_parts(f)?;
    let dims = f.dims();
    let n = f.len();
    let inv_n = 1.0 / n as f64;
    let values: Vec<f64> = residual.par_iter().map(|r| r * r).collect();
    let scale = |g: &[f64], w: f64| -> Vec<f64> {
        residual.par_iter().zip(g).map(|(r, gv)| 4.0 * r * gv * w * inv_n).collect()
    };
    let mut grad = vec![0.0; n];
    diff_axis_transpose(&scale(&gx, 1.0), dims, 0, &mut grad);
    diff_axis_transpose(&scale(&gy, 1.0), dims, 1, &mut grad);
    diff_axis_transpose(&scale(&gz, gamma2), dims, 2, &mut grad);
    finish(values, grad, f)
}

/// Mean of `|f| (f - G_sigma f)²`.
pub fn gaussian_term(f: &SdfVolume, sigma: f64) -> Result<TermResult> {
    let blurred = gaussian_blur_3d(f, sigma)?;
    let inv_n = 1.0 / f.len() as f64;
    let resid: Vec<f64> = f.data().par_iter().zip(blurred.data()).map(|(a, b)| a - b).collect();
    let values: Vec<f64> = f.data().par_iter().zip(&resid).map(|(fv, r)| fv.abs() * r * r).collect();
    // w = 2 |f| r; gradient = sign(f) r² + (I - G)^T w, with G self-adjoint.
    let w: Vec<f64> = f.data().par_iter().zip(&resid).map(|(fv, r)| 2.0 * fv.abs() * r).collect();
    let w_vol = VoxelVolume::from_data(f.dims(), f.spacing(), w)?;
    let gw = gaussian_blur_3d(&w_vol, sigma)?;
    let grad: Vec<f64> = (0..f.len())
        .into_par_iter()
        .map(|i| {
            let fv = f.data()[i];
            let r = resid[i];
            (sign(fv) * r * r + w_vol.data()[i] - gw.data()[i]) * inv_n
        })
        .collect();
    finish(values, grad, f)
}

/// Mean of `exp(-beta |f|)`.
pub fn surface_term(f: &SdfVolume, beta: f64) -> Result<TermResult> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let inv_n = 1.0 / f.len() as f64;
    let (values, grad): (Vec<f64>, Vec<f64>) = f
        .data()
        .par_iter()
        .map(|&v| {
            let e = (-beta * v.abs()).exp();
            (e, -beta * sign(v) * e * inv_n)
        })
        .unzip();
    finish(values, grad, f)
}

/// Weighted sum of all active terms. Terms with zero weight are skipped, and
/// the supervised SDF term is skipped when no reference is given.
pub fn total_energy(
    f: &SdfVolume,
    y: &OccupancyVolume,
    f_ref: Option<&SdfVolume>,
    cfg: &EnergyConfig,
) -> Result<EnergyReport> {
    cfg.validate()?;
    if f.dims() != y.dims() {
        return Err(Error::invalid(format!(
            "occupancy dims {:?} do not match SDF dims {:?}",
            y.dims().as_array(),
            f.dims().as_array()
        )));
    }
    let mut terms = TermBreakdown::default();
    let mut value = 0.0;
    let mut grad = vec![0.0; f.len()];
    for term in Term::ALL {
        let w = cfg.weight(term);
        if w == 0.0 {
            continue;
        }
        let res = match term {
            Term::Sdf => match f_ref {
                Some(r) => sdf_term(f, r)?,
                None => continue,
            },
            Term::Occ => data_term(f, y, cfg.tau)?,
            Term::Eik => eikonal_term(f)?,
            Term::Gauss => gaussian_term(f, cfg.sigma)?,
            Term::Sur => surface_term(f, cfg.beta)?,
        };
        if !res.value.is_finite() || res.gradient.data().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { term: term.name().to_string() });
        }
        *terms.slot(term) = Some(res.value);
        value += w * res.value;
        grad.par_iter_mut().zip(res.gradient.data()).for_each(|(g, t)| *g += w * t);
    }
    Ok(EnergyReport {
        total: TermResult { value, gradient: VoxelVolume::from_data(f.dims(), f.spacing(), grad)? },
        terms,
    })
}
