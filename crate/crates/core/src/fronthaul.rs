//! Fronthaul compression as additive Gaussian quantization noise.
//!
//! Each edge node forwards `Y^c` to the cloud over a link of `C` bit/s/Hz per
//! resource. The cloud sees `Y^c + Q^c` with `Q^c ~ CN(0, s_c I)`, where `s_c`
//! is the smallest variance the rate constraint allows. The per-level signal
//! power entering the constraint is the prior-weighted surrogate variance
//! `S_m = sum_jk p(j, k) Sigma^c_jk(m, m)`.
//!
//! Two forms of the constraint are available:
//!
//! * per-dimension (default): `M C = sum_m 1/2 log2(1 + S_m / s)`
//! * alternative: `M C = 1/2 sum_m log2((S_m + s) / s^M)`, selected with
//!   `fronthaul.per_dim_form = false`.

use rand::Rng;

use crate::airlink::{sample_complex_normal, CollectionTrace, ReceivedVector};
use crate::error::FronthaulError;
use crate::exponents::surrogate_variance;
use crate::model::{Cell, JointHypothesis, Model};

/// Relative bracket width at which bisection stops.
pub const SOLVER_REL_TOL: f64 = 1e-13;

/// Solved quantization noise for both fronthaul links.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizationSpec {
    /// `sigma_q^2` per cell.
    pub sigma2_q: [f64; 2],
    pub capacity: f64,
    /// `rhs(sigma_q^2) - M C` at the returned root, in bits.
    pub residual: [f64; 2],
    pub per_dim_form: bool,
}

impl QuantizationSpec {
    pub fn get(&self, cell: Cell) -> f64 {
        self.sigma2_q[cell.index()]
    }

    /// No quantization noise at all (infinite capacity).
    pub fn lossless() -> Self {
        QuantizationSpec { sigma2_q: [0.0, 0.0], capacity: f64::INFINITY, residual: [0.0, 0.0], per_dim_form: true }
    }
}

/// `S_m` for one cell: surrogate variances weighted by the joint prior.
pub fn weighted_signal_power(model: &Model, cell: Cell) -> Vec<f64> {
    let mut s = vec![0.0; model.levels()];
    for h in JointHypothesis::ALL {
        let w = model.joint_prior(h);
        let (own, other) = match cell {
            Cell::One => (h.j, h.k),
            Cell::Two => (h.k, h.j),
        };
        for (acc, v) in s.iter_mut().zip(surrogate_variance(model, cell, own, other)) {
            *acc += w * v;
        }
    }
    s
}

/// Right-hand side of the rate constraint, in bits, as a function of
/// `ln(sigma_q^2)`. Strictly decreasing.
pub fn constraint_rhs(power: &[f64], ln_s: f64, per_dim_form: bool) -> f64 {
    let s = ln_s.exp();
    let m = power.len() as f64;
    let nats: f64 = if per_dim_form {
        power.iter().map(|&p| 0.5 * (p / s).ln_1p()).sum()
    } else {
        power.iter().map(|&p| 0.5 * ((p + s).ln() - m * ln_s)).sum()
    };
    nats / std::f64::consts::LN_2
}

/// Bisection on `ln s`, starting from a bracket around `start` (a log
/// variance) that is widened geometrically until it straddles the root.
fn solve_cell(
    power: &[f64],
    capacity: f64,
    per_dim_form: bool,
    cell: Cell,
    start: f64,
) -> Result<(f64, f64), FronthaulError> {
    let target = power.len() as f64 * capacity;
    let f = |x: f64| constraint_rhs(power, x, per_dim_form) - target;
    let (mut lo, mut hi) = (start - 1.0, start + 1.0);
    let mut step = 1.0;
    for _ in 0..2000 {
        if f(lo) > 0.0 {
            break;
        }
        step *= 1.5;
        lo -= step;
    }
    step = 1.0;
    for _ in 0..2000 {
        if f(hi) < 0.0 {
            break;
        }
        step *= 1.5;
        hi += step;
    }
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo > 0.0 && f_hi < 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(FronthaulError::Bracket { cell: cell.number(), lo: lo.exp(), hi: hi.exp(), f_lo, f_hi });
    }
    // Bisection on ln s: the relative width of the bracket in s is hi - lo.
    while hi - lo > SOLVER_REL_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    Ok((root.exp(), f(root)))
}

/// Smallest quantization noise variance each link's capacity allows.
pub fn solve_quantization_variance(model: &Model) -> Result<QuantizationSpec, FronthaulError> {
    let cfg = model.config();
    let capacity = cfg.fronthaul_capacity;
    if capacity <= 0.0 {
        return Err(FronthaulError::ZeroCapacity);
    }
    let mut sigma2_q = [0.0; 2];
    let mut residual = [0.0; 2];
    for cell in Cell::BOTH {
        let power = weighted_signal_power(model, cell);
        let start = power.iter().cloned().fold(0.0, f64::max).max(1e-300).ln();
        let (s, r) = solve_cell(&power, capacity, cfg.fronthaul_per_dim_form, cell, start)?;
        sigma2_q[cell.index()] = s;
        residual[cell.index()] = r;
    }
    Ok(QuantizationSpec { sigma2_q, capacity, residual, per_dim_form: cfg.fronthaul_per_dim_form })
}

/// `Y + Q` with `Q ~ CN(0, sigma_q^2)` per sample.
pub fn quantize_signal<R: Rng + ?Sized>(y: &ReceivedVector, spec: &QuantizationSpec, rng: &mut R) -> ReceivedVector {
    let mut out = y.clone();
    quantize_in_place(&mut out, spec, rng);
    out
}

pub fn quantize_in_place<R: Rng + ?Sized>(y: &mut ReceivedVector, spec: &QuantizationSpec, rng: &mut R) {
    let s = spec.get(y.cell);
    if s > 0.0 {
        for v in y.samples.iter_mut() {
            *v += sample_complex_normal(0.0, s, rng);
        }
    }
}

/// Quantize every received vector of a trace.
pub fn quantize_trace_in_place<R: Rng + ?Sized>(trace: &mut CollectionTrace, spec: &QuantizationSpec, rng: &mut R) {
    for rec in trace.intervals.iter_mut() {
        for y in rec.received.iter_mut() {
            quantize_in_place(y, spec, rng);
        }
    }
}

/// Large-interference behaviour of the quantization noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizationLimit {
    /// `lambda^(1 / (2 M^2))`.
    pub closed_form: f64,
    /// Solved `sigma_q^2 / sigma_G^2` for cell 1 at `sigma_G^2` = [`RATIO_PROBE_SIGMA2_G`].
    pub empirical: f64,
}

pub const RATIO_PROBE_SIGMA2_G: f64 = 1e6;

pub fn quantization_ratio_limit(model: &Model) -> Result<QuantizationLimit, FronthaulError> {
    let m = model.config().m_levels as f64;
    let closed_form = model.lambda().powf(1.0 / (2.0 * m * m));
    let probe = model.with("sigma2_g", &format!("{RATIO_PROBE_SIGMA2_G:?}")).expect("positive variance is valid");
    let spec = solve_quantization_variance(&probe)?;
    Ok(QuantizationLimit { closed_form, empirical: spec.sigma2_q[0] / RATIO_PROBE_SIGMA2_G })
}
