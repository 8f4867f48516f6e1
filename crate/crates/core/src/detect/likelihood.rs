//! Per-interval likelihood of one edge node's received vector.
//!
//! Conditioned on `n1` in-cell and `n2` inter-cell devices on level `m`, the
//! sample `y(m)` is `CN(n1 mu_H + n2 mu_G, n1 s2_H + n2 s2_G + W_0 + extra)`.
//! Poisson thinning makes `n1 ~ P(lambda p_j^c(m))` and
//! `n2 ~ P(lambda p_k^{c'}(m))`, so each level's density is a double Poisson
//! mixture and the vector density is the product over levels.
//!
//! [`CellLikelihood`] precomputes everything that does not depend on `y` and
//! evaluates all four `(j, k)` combinations in one pass. Three kernels are
//! used:
//!
//! * `Own`: no inter-cell channel (`mu_G = s2_G = 0`), a single sum over `n1`;
//! * `Pooled`: identical channels, so only `n1 + n2 ~ P(a_j + b_k)` matters;
//! * `Grid`: the general double sum.

use crate::airlink::ReceivedVector;
use crate::error::DetectError;
use crate::model::{Cell, Hypothesis, Model};

/// Largest count considered anywhere, as a guard against runaway extension.
const HARD_N_LIMIT: usize = 20_000;

/// Linear mixture sums below this are recomputed in the log domain.
const LINEAR_FLOOR: f64 = 1e-280;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruncationMode {
    /// Truncate each Poisson marginal where its tail drops below the
    /// tolerance, and extend when the data put weight at the boundary.
    Adaptive,
    /// Sum `n1, n2` over `0..=n_max` exactly, nothing more.
    Fixed(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub mode: TruncationMode,
    pub tail_mass_tol: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { mode: TruncationMode::Adaptive, tail_mass_tol: 1e-12 }
    }
}

impl TruncationPolicy {
    pub fn new(mode: TruncationMode, tail_mass_tol: f64) -> Result<Self, String> {
        if !(tail_mass_tol > 0.0 && tail_mass_tol <= 1e-6) {
            return Err(format!("tail_mass_tol = {tail_mass_tol} outside (0, 1e-6]"));
        }
        Ok(TruncationPolicy { mode, tail_mass_tol })
    }

    pub fn fixed(n_max: usize) -> Self {
        TruncationPolicy { mode: TruncationMode::Fixed(n_max), ..Default::default() }
    }
}

/// One term of a level's Poisson mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonMixtureComponent {
    pub n1: usize,
    pub n2: usize,
    /// `ln P(n1) + ln P(n2)`.
    pub weight: f64,
    pub mu: f64,
    pub sigma2: f64,
}

/// Poisson pmf `0..=n` in the linear domain.
pub fn poisson_pmf_table(mean: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if mean <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    // start at the log value to avoid underflow of e^-mean for large means
    let lm = mean.ln();
    let mut lp = -mean;
    out[0] = lp.exp();
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        lp += lm - (i as f64).ln();
        *slot = lp.exp();
    }
    out
}

/// Poisson log pmf `0..=n`; `-inf` where the probability is zero.
pub fn poisson_log_pmf_table(mean: f64, n: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; n + 1];
    if mean <= 0.0 {
        out[0] = 0.0;
        return out;
    }
    let lm = mean.ln();
    let mut lp = -mean;
    out[0] = lp;
    for (i, slot) in out.iter_mut().enumerate().skip(1) {
        lp += lm - (i as f64).ln();
        *slot = lp;
    }
    out
}

/// Smallest `n` with `P(X > n) <= tol` for `X ~ Poisson(mean)`, using the
/// geometric bound `P(X > n) <= p(n+1) / (1 - mean/(n+2))`.
pub fn poisson_truncation_point(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let lm = mean.ln();
    let mut n = 0usize;
    let mut lp_next = -mean + lm; // ln p(1)
    loop {
        let ratio = mean / (n as f64 + 2.0);
        if ratio < 1.0 && lp_next - (1.0 - ratio).ln() <= tol.ln() {
            return n;
        }
        n += 1;
        lp_next += lm - ((n + 1) as f64).ln();
        if n >= HARD_N_LIMIT {
            return n;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kernel {
    Own,
    Pooled,
    Grid,
}

#[derive(Clone, Debug)]
struct LevelTable {
    /// Per component: mean, 1/var, ln(1/(pi var)).
    mu: Vec<f64>,
    inv_var: Vec<f64>,
    lnorm: Vec<f64>,
    /// Component grid extent: `n1` in `0..=n1_max`, `n2` in `0..=n2_max`
    /// (`Pooled` and `Own` use only `n1`).
    n1_max: usize,
    n2_max: usize,
    /// Linear weights: `Own` uses `w1[j]`, `Pooled` uses `wp[2j+k]`, `Grid`
    /// uses `w1[j]` and `w2[k]`.
    w1: [Vec<f64>; 2],
    w2: [Vec<f64>; 2],
    wp: [Vec<f64>; 4],
    /// Poisson means `a_j` (own) and `b_k` (other cell).
    a: [f64; 2],
    b: [f64; 2],
}

/// Channel and noise constants of a cell as seen by the detector.
#[derive(Clone, Copy, Debug)]
struct Channel {
    mu_h: f64,
    s2_h: f64,
    mu_g: f64,
    s2_g: f64,
    /// `W_0 + extra`.
    floor: f64,
}

impl Channel {
    fn comp(&self, n1: usize, n2: usize) -> (f64, f64) {
        let (x, y) = (n1 as f64, n2 as f64);
        (x * self.mu_h + y * self.mu_g, x * self.s2_h + y * self.s2_g + self.floor)
    }
}

/// Precomputed likelihood evaluator for one cell and one extra variance.
#[derive(Clone, Debug)]
pub struct CellLikelihood {
    cell: Cell,
    kernel: Kernel,
    chan: Channel,
    tol: f64,
    fixed: bool,
    levels: Vec<LevelTable>,
}

impl CellLikelihood {
    /// `extra_var` is 0 at the edge and `sigma_q^2` at the cloud.
    pub fn new(model: &Model, cell: Cell, extra_var: f64, policy: &TruncationPolicy) -> Self {
        let chan = Channel {
            mu_h: model.mu_h(),
            s2_h: model.sigma2_h(),
            mu_g: model.mu_g(),
            s2_g: model.sigma2_g(),
            floor: model.noise_var() + extra_var,
        };
        let fixed = matches!(policy.mode, TruncationMode::Fixed(_));
        let kernel = if fixed {
            Kernel::Grid
        } else if chan.mu_g == 0.0 && chan.s2_g == 0.0 {
            Kernel::Own
        } else if chan.mu_g == chan.mu_h && chan.s2_g == chan.s2_h {
            Kernel::Pooled
        } else {
            Kernel::Grid
        };
        let lam = model.lambda();
        let tol = policy.tail_mass_tol;
        let levels = (0..model.levels())
            .map(|m| {
                let a = Hypothesis::BOTH.map(|h| lam * model.observation_pmf(cell, h)[m]);
                let b = Hypothesis::BOTH.map(|h| lam * model.observation_pmf(cell.other(), h)[m]);
                build_level(kernel, chan, a, b, policy.mode, tol)
            })
            .collect();
        CellLikelihood { cell, kernel, chan, tol, fixed, levels }
    }

    pub fn cell(&self) -> Cell {
        self.cell
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    /// `ln f(y | own = j, other = k)` for all four combinations, indexed
    /// `2j + k`.
    pub fn loglik_all(&self, y: &ReceivedVector) -> Result<[f64; 4], DetectError> {
        check_input(y, self.levels.len())?;
        let mut out = [0.0; 4];
        let mut t = Vec::new();
        let mut g = Vec::new();
        for (lvl, s) in self.levels.iter().zip(&y.samples) {
            t.clear();
            t.extend(lvl.mu.iter().zip(&lvl.inv_var).zip(&lvl.lnorm).map(|((&mu, &iv), &ln)| {
                let (dr, di) = (s.re - mu, s.im);
                ln - (dr * dr + di * di) * iv
            }));
            let tmax = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            g.clear();
            g.extend(t.iter().map(|&x| (x - tmax).exp()));
            let mut level = [0.0; 4];
            let ok = match self.kernel {
                Kernel::Own => self.own_sums(lvl, &g, &mut level),
                Kernel::Pooled => self.pooled_sums(lvl, &g, &mut level),
                Kernel::Grid => self.grid_sums(lvl, &g, &mut level),
            };
            for jk in 0..4 {
                let v = if ok[jk] { tmax + level[jk].ln() } else { self.slow_level(lvl, y_point(s), jk) };
                out[jk] += v;
            }
        }
        Ok(out)
    }

    /// `ln f(y | own = j, other = k)`.
    pub fn loglik(&self, y: &ReceivedVector, own: Hypothesis, other: Hypothesis) -> Result<f64, DetectError> {
        Ok(self.loglik_all(y)?[2 * own.index() + other.index()])
    }

    fn accept(&self, total: f64, boundary: f64) -> bool {
        total > LINEAR_FLOOR && (self.fixed || boundary <= self.tol * total)
    }

    fn own_sums(&self, lvl: &LevelTable, g: &[f64], out: &mut [f64; 4]) -> [bool; 4] {
        let mut ok = [false; 4];
        for j in 0..2 {
            let w = &lvl.w1[j];
            let total: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
            let good = self.accept(total, w[lvl.n1_max] * g[lvl.n1_max]);
            for k in 0..2 {
                out[2 * j + k] = total;
                ok[2 * j + k] = good;
            }
        }
        ok
    }

    fn pooled_sums(&self, lvl: &LevelTable, g: &[f64], out: &mut [f64; 4]) -> [bool; 4] {
        let mut ok = [false; 4];
        for jk in 0..4 {
            let w = &lvl.wp[jk];
            let total: f64 = w.iter().zip(g).map(|(a, b)| a * b).sum();
            out[jk] = total;
            ok[jk] = self.accept(total, w[lvl.n1_max] * g[lvl.n1_max]);
        }
        ok
    }

    fn grid_sums(&self, lvl: &LevelTable, g: &[f64], out: &mut [f64; 4]) -> [bool; 4] {
        let n2 = lvl.n2_max + 1;
        let rows = lvl.n1_max + 1;
        // inner[k][n1] = sum_n2 w2[k][n2] g[n1, n2]; edge[k][n1] = last column term
        let mut inner = [vec![0.0; rows], vec![0.0; rows]];
        let mut last_col = [vec![0.0; rows], vec![0.0; rows]];
        for r in 0..rows {
            let row = &g[r * n2..(r + 1) * n2];
            for k in 0..2 {
                inner[k][r] = lvl.w2[k].iter().zip(row).map(|(a, b)| a * b).sum();
                last_col[k][r] = lvl.w2[k][lvl.n2_max] * row[lvl.n2_max];
            }
        }
        let mut ok = [false; 4];
        for j in 0..2 {
            let w = &lvl.w1[j];
            for k in 0..2 {
                let total: f64 = w.iter().zip(&inner[k]).map(|(a, b)| a * b).sum();
                let col: f64 = w.iter().zip(&last_col[k]).map(|(a, b)| a * b).sum();
                let boundary = w[lvl.n1_max] * inner[k][lvl.n1_max] + col;
                out[2 * j + k] = total;
                ok[2 * j + k] = self.accept(total, boundary);
            }
        }
        ok
    }

    /// Log-domain evaluation of one level with the grid widened until the
    /// boundary carries negligible weight (or, for fixed truncation, over the
    /// fixed grid only).
    fn slow_level(&self, lvl: &LevelTable, y: (f64, f64), jk: usize) -> f64 {
        let (a, b) = (lvl.a[jk / 2], lvl.b[jk % 2]);
        let (mut n1, mut n2) = match self.kernel {
            Kernel::Own => (lvl.n1_max, 0),
            Kernel::Pooled => (lvl.n1_max, 0),
            Kernel::Grid => (lvl.n1_max, lvl.n2_max),
        };
        loop {
            let (val, boundary) = match self.kernel {
                Kernel::Own => log_mixture_1d(a, n1, y, |n| self.chan.comp(n, 0)),
                Kernel::Pooled => log_mixture_1d(a + b, n1, y, |n| self.chan.comp(n, 0)),
                Kernel::Grid => log_mixture_2d(self.chan, a, b, n1, n2, y),
            };
            let done = self.fixed || boundary - val <= self.tol.ln() || n1.max(n2) >= HARD_N_LIMIT;
            if done {
                return val;
            }
            n1 = (2 * n1 + 8).min(HARD_N_LIMIT);
            if self.kernel == Kernel::Grid {
                n2 = (2 * n2 + 8).min(HARD_N_LIMIT);
            }
        }
    }
}

fn y_point(s: &num_complex::Complex64) -> (f64, f64) {
    (s.re, s.im)
}

fn comp_log_density(mu: f64, var: f64, y: (f64, f64)) -> f64 {
    let (dr, di) = (y.0 - mu, y.1);
    -(std::f64::consts::PI * var).ln() - (dr * dr + di * di) / var
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `(ln sum, ln boundary term)` for a single Poisson mixture over `0..=n`.
fn log_mixture_1d(mean: f64, n: usize, y: (f64, f64), comp: impl Fn(usize) -> (f64, f64)) -> (f64, f64) {
    let lw = poisson_log_pmf_table(mean, n);
    let terms: Vec<f64> = (0..=n)
        .map(|i| {
            let (mu, v) = comp(i);
            lw[i] + comp_log_density(mu, v, y)
        })
        .collect();
    (log_sum_exp(&terms), terms[n])
}

/// `(ln sum, ln boundary mass)` for the double mixture over `0..=n1` x `0..=n2`.
fn log_mixture_2d(chan: Channel, a: f64, b: f64, n1: usize, n2: usize, y: (f64, f64)) -> (f64, f64) {
    let l1 = poisson_log_pmf_table(a, n1);
    let l2 = poisson_log_pmf_table(b, n2);
    let mut terms = Vec::with_capacity((n1 + 1) * (n2 + 1));
    let mut boundary = Vec::new();
    for i in 0..=n1 {
        for k in 0..=n2 {
            let (mu, v) = chan.comp(i, k);
            let t = l1[i] + l2[k] + comp_log_density(mu, v, y);
            terms.push(t);
            if i == n1 || k == n2 {
                boundary.push(t);
            }
        }
    }
    (log_sum_exp(&terms), log_sum_exp(&boundary))
}

fn build_level(kernel: Kernel, chan: Channel, a: [f64; 2], b: [f64; 2], mode: TruncationMode, tol: f64) -> LevelTable {
    let half = tol / 2.0;
    let trunc = |mean: f64, t: f64| poisson_truncation_point(mean, t);
    let (n1_max, n2_max) = match (kernel, mode) {
        (_, TruncationMode::Fixed(n)) => (n, n),
        (Kernel::Own, _) => (trunc(a[0].max(a[1]), tol), 0),
        (Kernel::Pooled, _) => {
            let top = (0..4).map(|jk| a[jk / 2] + b[jk % 2]).fold(0.0, f64::max);
            (trunc(top, tol), 0)
        }
        (Kernel::Grid, _) => (trunc(a[0].max(a[1]), half), trunc(b[0].max(b[1]), half)),
    };
    let mut lvl = LevelTable {
        mu: Vec::new(),
        inv_var: Vec::new(),
        lnorm: Vec::new(),
        n1_max,
        n2_max,
        w1: [Vec::new(), Vec::new()],
        w2: [Vec::new(), Vec::new()],
        wp: [Vec::new(), Vec::new(), Vec::new(), Vec::new()],
        a,
        b,
    };
    let mut push = |mu: f64, v: f64| {
        lvl.mu.push(mu);
        lvl.inv_var.push(1.0 / v);
        lvl.lnorm.push(-(std::f64::consts::PI * v).ln());
    };
    match kernel {
        Kernel::Own | Kernel::Pooled => {
            for n in 0..=n1_max {
                let (mu, v) = chan.comp(n, 0);
                push(mu, v);
            }
        }
        Kernel::Grid => {
            for i in 0..=n1_max {
                for k in 0..=n2_max {
                    let (mu, v) = chan.comp(i, k);
                    push(mu, v);
                }
            }
        }
    }
    match kernel {
        Kernel::Own => lvl.w1 = a.map(|m| poisson_pmf_table(m, n1_max)),
        Kernel::Pooled => {
            lvl.wp = [0, 1, 2, 3].map(|jk| poisson_pmf_table(a[jk / 2] + b[jk % 2], n1_max));
        }
        Kernel::Grid => {
            lvl.w1 = a.map(|m| poisson_pmf_table(m, n1_max));
            lvl.w2 = b.map(|m| poisson_pmf_table(m, n2_max));
        }
    }
    lvl
}

pub(crate) fn check_input(y: &ReceivedVector, levels: usize) -> Result<(), DetectError> {
    if y.samples.len() != levels {
        return Err(DetectError::Length { expected: levels, got: y.samples.len() });
    }
    if let Some((i, s)) = y.samples.iter().enumerate().find(|(_, s)| !(s.re.is_finite() && s.im.is_finite())) {
        return Err(DetectError::NonFinite { index: i + 1, value: s.to_string() });
    }
    Ok(())
}

/// `ln f(y | own = j, other = k)` with the quantization (or other) extra
/// variance `extra_var`. Builds a fresh evaluator; use [`CellLikelihood`]
/// for repeated calls.
pub fn loglik_interval(
    y: &ReceivedVector,
    own: Hypothesis,
    other: Hypothesis,
    extra_var: f64,
    model: &Model,
    policy: &TruncationPolicy,
) -> Result<f64, DetectError> {
    CellLikelihood::new(model, y.cell, extra_var, policy).loglik(y, own, other)
}

/// The mixture terms of level `m` (zero-based) under the fixed grid
/// `0..=n_max`, for inspection.
pub fn mixture_components(
    model: &Model,
    cell: Cell,
    own: Hypothesis,
    other: Hypothesis,
    m: usize,
    extra_var: f64,
    n_max: usize,
) -> Vec<PoissonMixtureComponent> {
    let lam = model.lambda();
    let l1 = poisson_log_pmf_table(lam * model.observation_pmf(cell, own)[m], n_max);
    let l2 = poisson_log_pmf_table(lam * model.observation_pmf(cell.other(), other)[m], n_max);
    let mut out = Vec::new();
    for n1 in 0..=n_max {
        for n2 in 0..=n_max {
            let weight = l1[n1] + l2[n2];
            if weight == f64::NEG_INFINITY {
                continue;
            }
            out.push(PoissonMixtureComponent {
                n1,
                n2,
                weight,
                mu: n1 as f64 * model.mu_h() + n2 as f64 * model.mu_g(),
                sigma2: n1 as f64 * model.sigma2_h() + n2 as f64 * model.sigma2_g() + model.noise_var() + extra_var,
            });
        }
    }
    out
}
