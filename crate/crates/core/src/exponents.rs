//! Error exponents of the edge and cloud detectors from Gaussian surrogates.
//!
//! Under hypothesis `H_jk` the received vectors are replaced by real Gaussians
//! with the Poisson-thinned first and second moments. The exponent of a binary
//! test between two Gaussians is their Chernoff information, the maximum over
//! `alpha` of the alpha-Chernoff divergence. The edge exponent takes the worst
//! cell and the worst interference hypothesis; the cloud exponent the worst
//! pair of joint hypotheses.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::ExponentError;
use crate::fronthaul::{solve_quantization_variance, QuantizationSpec};
use crate::model::{Cell, Hypothesis, JointHypothesis, Model};

/// Diagonal jitters tried, in order, when a cloud covariance is not positive
/// definite.
pub const PD_JITTERS: [f64; 3] = [1e-12, 1e-10, 1e-8];

/// Step of the coarse alpha grid.
pub const ALPHA_GRID_STEP: f64 = 0.01;

/// Width of the final golden-section bracket.
pub const ALPHA_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentScope {
    EdgeCell1,
    EdgeCell2,
    Cloud,
}

impl MomentScope {
    pub fn edge(cell: Cell) -> Self {
        match cell {
            Cell::One => MomentScope::EdgeCell1,
            Cell::Two => MomentScope::EdgeCell2,
        }
    }
}

/// Gaussian surrogate of the received signal under one joint hypothesis.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub label: JointHypothesis,
    pub scope: MomentScope,
    /// Diagonal jitter added to make `cov` positive definite (0 if none).
    pub jitter: f64,
}

impl HypothesisMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `mu_H lambda p_own^c(m) + mu_G lambda p_other^{c'}(m)`.
pub fn surrogate_mean(model: &Model, cell: Cell, own: Hypothesis, other: Hypothesis) -> Vec<f64> {
    let lam = model.lambda();
    let p = model.observation_pmf(cell, own);
    let q = model.observation_pmf(cell.other(), other);
    p.iter().zip(q).map(|(&a, &b)| model.mu_h() * lam * a + model.mu_g() * lam * b).collect()
}

/// `sigma2_H lambda p_own^c(m) + sigma2_G lambda p_other^{c'}(m) + W_0`.
pub fn surrogate_variance(model: &Model, cell: Cell, own: Hypothesis, other: Hypothesis) -> Vec<f64> {
    let lam = model.lambda();
    let p = model.observation_pmf(cell, own);
    let q = model.observation_pmf(cell.other(), other);
    p.iter()
        .zip(q)
        .map(|(&a, &b)| model.sigma2_h() * lam * a + model.sigma2_g() * lam * b + model.noise_var())
        .collect()
}

/// Own and other-cell hypotheses of `cell` under `h`.
fn roles(cell: Cell, h: JointHypothesis) -> (Hypothesis, Hypothesis) {
    match cell {
        Cell::One => (h.j, h.k),
        Cell::Two => (h.k, h.j),
    }
}

/// Surrogate of one edge node's interval output under `h` (diagonal covariance).
pub fn edge_moments(model: &Model, cell: Cell, h: JointHypothesis) -> HypothesisMoments {
    let (own, other) = roles(cell, h);
    HypothesisMoments {
        mean: DVector::from_vec(surrogate_mean(model, cell, own, other)),
        cov: DMatrix::from_diagonal(&DVector::from_vec(surrogate_variance(model, cell, own, other))),
        label: h,
        scope: MomentScope::edge(cell),
        jitter: 0.0,
    }
}

/// Stacked surrogate of both quantized signals under `h`, `2M` dimensional.
/// The only off-diagonal entries couple level `m` of the two cells.
pub fn cloud_moments(
    model: &Model,
    spec: &QuantizationSpec,
    h: JointHypothesis,
) -> Result<HypothesisMoments, ExponentError> {
    let m = model.levels();
    let d = 2 * m;
    let mut mean = DVector::zeros(d);
    let mut cov = DMatrix::zeros(d, d);
    for cell in Cell::BOTH {
        let (own, other) = roles(cell, h);
        let off = cell.index() * m;
        let mu = surrogate_mean(model, cell, own, other);
        let var = surrogate_variance(model, cell, own, other);
        for i in 0..m {
            mean[off + i] = mu[i];
            cov[(off + i, off + i)] = var[i] + spec.get(cell);
        }
    }
    let p1 = model.observation_pmf(Cell::One, h.j);
    let p2 = model.observation_pmf(Cell::Two, h.k);
    let coupling = model.lambda() * model.mu_h() * model.mu_g();
    for i in 0..m {
        let c = (p1[i] * (1.0 - p1[i]) + p2[i] * (1.0 - p2[i])) * coupling;
        cov[(i, m + i)] = c;
        cov[(m + i, i)] = c;
    }
    let mut jitter = 0.0;
    if cov.clone().cholesky().is_none() {
        let mut fixed = false;
        for &eps in &PD_JITTERS {
            let trial = &cov + DMatrix::identity(d, d) * eps;
            if trial.clone().cholesky().is_some() {
                cov = trial;
                jitter = eps;
                fixed = true;
                break;
            }
        }
        if !fixed {
            return Err(ExponentError::NotPositiveDefinite { label: h.to_string() });
        }
    }
    Ok(HypothesisMoments { mean, cov, label: h, scope: MomentScope::Cloud, jitter })
}

fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, ExponentError> {
    m.clone().cholesky().ok_or_else(|| {
        ExponentError::Factorization(format!("{}x{} matrix not positive definite", m.nrows(), m.ncols()))
    })
}

fn log_det(ch: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * ch.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// alpha-Chernoff divergence between two real Gaussians:
///
/// `1/2 ln(|S_a| / (|S_0|^a |S_1|^(1-a))) + a(1-a)/2 dmu' S_a^-1 dmu`,
/// `S_a = a S_0 + (1-a) S_1`.
pub fn alpha_chernoff_gaussian(
    m0: &HypothesisMoments,
    m1: &HypothesisMoments,
    alpha: f64,
) -> Result<f64, ExponentError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ExponentError::Alpha(alpha));
    }
    if m0.dim() != m1.dim() {
        return Err(ExponentError::Dimension(m0.dim(), m1.dim()));
    }
    let ld0 = log_det(&cholesky(&m0.cov)?);
    let ld1 = log_det(&cholesky(&m1.cov)?);
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(0.0);
    }
    let sa = &m0.cov * alpha + &m1.cov * (1.0 - alpha);
    let cha = cholesky(&sa)?;
    let dmu = &m0.mean - &m1.mean;
    let quad = dmu.dot(&cha.solve(&dmu));
    let v = 0.5 * (log_det(&cha) - alpha * ld0 - (1.0 - alpha) * ld1) + 0.5 * alpha * (1.0 - alpha) * quad;
    // concavity of log det makes v >= 0; only rounding can push it below
    Ok(v.max(0.0))
}

/// Maximum of the alpha-Chernoff divergence and its maximizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chernoff {
    pub value: f64,
    pub alpha: f64,
}

/// Best point of the coarse alpha grid only. Ties go to the smallest alpha.
pub fn chernoff_info_grid(m0: &HypothesisMoments, m1: &HypothesisMoments) -> Result<Chernoff, ExponentError> {
    let n = (1.0 / ALPHA_GRID_STEP).round() as usize;
    let mut best = Chernoff { value: f64::NEG_INFINITY, alpha: 0.0 };
    for i in 0..=n {
        let a = i as f64 / n as f64;
        let v = alpha_chernoff_gaussian(m0, m1, a)?;
        if v > best.value {
            best = Chernoff { value: v, alpha: a };
        }
    }
    Ok(best)
}

/// Chernoff information: grid search, then golden-section refinement around
/// the best grid point.
pub fn chernoff_info(m0: &HypothesisMoments, m1: &HypothesisMoments) -> Result<Chernoff, ExponentError> {
    let grid = chernoff_info_grid(m0, m1)?;
    if grid.value <= 0.0 {
        return Ok(grid);
    }
    let lo = (grid.alpha - ALPHA_GRID_STEP).max(0.0);
    let hi = (grid.alpha + ALPHA_GRID_STEP).min(1.0);
    let (a, v) = golden_max(|a| alpha_chernoff_gaussian(m0, m1, a), lo, hi, ALPHA_TOL)?;
    Ok(if v >= grid.value { Chernoff { value: v, alpha: a } } else { grid })
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub fn golden_max<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<(f64, f64), E> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Chernoff information between `theta_0` and `theta_1` at one edge node for
/// a fixed other-cell hypothesis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeTerm {
    pub cell: Cell,
    pub other: Hypothesis,
    pub chernoff: Chernoff,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeExponent {
    /// `min_c E^c`.
    pub value: f64,
    /// `E^c = min_k C(f_0k, f_1k)`.
    pub per_cell: [f64; 2],
    pub terms: Vec<EdgeTerm>,
}

pub fn edge_exponent(model: &Model) -> Result<EdgeExponent, ExponentError> {
    let rho = model.rho();
    if !(rho > 0.0 && rho < 1.0) {
        return Err(ExponentError::RhoOutOfRange { rho });
    }
    let mut terms = Vec::with_capacity(4);
    let mut per_cell = [f64::INFINITY; 2];
    for cell in Cell::BOTH {
        for other in Hypothesis::BOTH {
            let joint = |own: Hypothesis| match cell {
                Cell::One => JointHypothesis::new(own, other),
                Cell::Two => JointHypothesis::new(other, own),
            };
            let m0 = edge_moments(model, cell, joint(Hypothesis::Theta0));
            let m1 = edge_moments(model, cell, joint(Hypothesis::Theta1));
            let ch = chernoff_info(&m0, &m1)?;
            per_cell[cell.index()] = per_cell[cell.index()].min(ch.value);
            terms.push(EdgeTerm { cell, other, chernoff: ch });
        }
    }
    Ok(EdgeExponent { value: per_cell[0].min(per_cell[1]), per_cell, terms })
}

/// Chernoff information between two joint hypotheses at the cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairTerm {
    pub h: JointHypothesis,
    pub competitor: JointHypothesis,
    pub chernoff: Chernoff,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CloudExponent {
    /// `min_jk E_jk`.
    pub value: f64,
    /// `E_jk`, indexed by `2j + k`.
    pub per_hypothesis: [f64; 4],
    /// All 12 ordered pairs.
    pub terms: Vec<PairTerm>,
    /// Largest diagonal jitter any covariance needed.
    pub max_jitter: f64,
}

fn pairwise_exponent(moments: &[HypothesisMoments; 4]) -> Result<CloudExponent, ExponentError> {
    let mut terms = Vec::with_capacity(12);
    let mut per = [f64::INFINITY; 4];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let ch = chernoff_info(&moments[a], &moments[b])?;
            let mirrored = Chernoff { value: ch.value, alpha: 1.0 - ch.alpha };
            terms.push(PairTerm { h: moments[a].label, competitor: moments[b].label, chernoff: ch });
            terms.push(PairTerm { h: moments[b].label, competitor: moments[a].label, chernoff: mirrored });
            per[a] = per[a].min(ch.value);
            per[b] = per[b].min(ch.value);
        }
    }
    terms.sort_by_key(|t| (t.h.index(), t.competitor.index()));
    let max_jitter = moments.iter().map(|m| m.jitter).fold(0.0, f64::max);
    Ok(CloudExponent {
        value: per.iter().cloned().fold(f64::INFINITY, f64::min),
        per_hypothesis: per,
        terms,
        max_jitter,
    })
}

pub fn cloud_exponent(model: &Model, spec: &QuantizationSpec) -> Result<CloudExponent, ExponentError> {
    let mut ms = Vec::with_capacity(4);
    for h in JointHypothesis::ALL {
        ms.push(cloud_moments(model, spec, h)?);
    }
    let ms: [HypothesisMoments; 4] = ms.try_into().expect("four hypotheses");
    pairwise_exponent(&ms)
}

/// Cloud exponent in the `sigma2_G -> infinity` limit when the quantization
/// noise grows like `ratio * sigma2_G`: every covariance tends (after scaling
/// by `sigma2_G`) to the diagonal `lambda p_other(m) + ratio`, and the mean
/// term vanishes.
pub fn limiting_cloud_exponent(model: &Model, ratio: f64) -> Result<f64, ExponentError> {
    let m = model.levels();
    let lam = model.lambda();
    let mut ms = Vec::with_capacity(4);
    for h in JointHypothesis::ALL {
        let mut diag = Vec::with_capacity(2 * m);
        for cell in Cell::BOTH {
            let (_, other) = roles(cell, h);
            diag.extend(model.observation_pmf(cell.other(), other).iter().map(|&p| lam * p + ratio));
        }
        ms.push(HypothesisMoments {
            mean: DVector::zeros(2 * m),
            cov: DMatrix::from_diagonal(&DVector::from_vec(diag)),
            label: h,
            scope: MomentScope::Cloud,
            jitter: 0.0,
        });
    }
    let ms: [HypothesisMoments; 4] = ms.try_into().expect("four hypotheses");
    Ok(pairwise_exponent(&ms)?.value)
}

/// Both exponents at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentReport {
    pub edge: EdgeExponent,
    pub cloud: CloudExponent,
    pub spec: QuantizationSpec,
}

impl ExponentReport {
    pub fn e_edge(&self) -> f64 {
        self.edge.value
    }

    pub fn e_cloud(&self) -> f64 {
        self.cloud.value
    }
}

pub fn exponent_report(model: &Model) -> Result<ExponentReport, ExponentError> {
    let spec = solve_quantization_variance(model)?;
    Ok(ExponentReport { edge: edge_exponent(model)?, cloud: cloud_exponent(model, &spec)?, spec })
}

/// Interference powers at which the large-`sigma2_G` limits are probed.
pub const LIMIT_GRID: [f64; 6] = [1e1, 1e2, 1e3, 1e4, 1e5, 1e6];

/// Smallest `sigma2_G` that counts as "large" for the limit check.
pub const LIMIT_MIN_PROBE: f64 = 1e4;

#[derive(Clone, Debug, PartialEq)]
pub struct LimitPoint {
    pub sigma2_g: f64,
    pub e_edge: f64,
    pub e_cloud: f64,
    /// `sigma_q^2 / sigma2_G` for cell 1.
    pub q_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitReport {
    pub points: Vec<LimitPoint>,
    pub applicable: bool,
    /// Final `E^edge` below 1e-3.
    pub edge_vanishes: bool,
    /// Final two `E^cloud` positive and within 10% of each other.
    pub cloud_bounded: bool,
    pub note: String,
}

impl LimitReport {
    pub fn passed(&self) -> bool {
        self.applicable && self.edge_vanishes && self.cloud_bounded
    }
}

/// Evaluate both exponents along a growing interference power and check that
/// the edge exponent vanishes while the cloud exponent stays bounded away from
/// zero. A grid that never reaches [`LIMIT_MIN_PROBE`] is reported as
/// inapplicable.
pub fn interference_limit_check(model: &Model, grid: &[f64]) -> Result<LimitReport, ExponentError> {
    let largest = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if grid.len() < 2 || largest < LIMIT_MIN_PROBE {
        return Ok(LimitReport {
            points: Vec::new(),
            applicable: false,
            edge_vanishes: false,
            cloud_bounded: false,
            note: format!("inapplicable: need at least two sigma2_G values reaching {LIMIT_MIN_PROBE:e}"),
        });
    }
    let mut points = Vec::with_capacity(grid.len());
    for &s in grid {
        let m = model.with("sigma2_g", &format!("{s:?}"))?;
        let r = exponent_report(&m)?;
        points.push(LimitPoint {
            sigma2_g: s,
            e_edge: r.e_edge(),
            e_cloud: r.e_cloud(),
            q_ratio: r.spec.sigma2_q[0] / s,
        });
    }
    let n = points.len();
    let (a, b) = (&points[n - 2], &points[n - 1]);
    let edge_vanishes = b.e_edge < 1e-3;
    let cloud_bounded = a.e_cloud > 0.0 && b.e_cloud > 0.0 && (b.e_cloud - a.e_cloud).abs() <= 0.1 * a.e_cloud;
    let note = format!(
        "E_edge({:e}) = {:.3e}; E_cloud({:e}) = {:.6}, E_cloud({:e}) = {:.6}",
        b.sigma2_g, b.e_edge, a.sigma2_g, a.e_cloud, b.sigma2_g, b.e_cloud
    );
    Ok(LimitReport { points, applicable: true, edge_vanishes, cloud_bounded, note })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemConfig;

    fn model(pairs: &[(&str, &str)]) -> Model {
        let mut cfg = SystemConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        Model::new(cfg).unwrap()
    }

    fn gauss1(mu: f64, var: f64) -> HypothesisMoments {
        HypothesisMoments {
            mean: DVector::from_vec(vec![mu]),
            cov: DMatrix::from_vec(1, 1, vec![var]),
            label: JointHypothesis::ALL[0],
            scope: MomentScope::EdgeCell1,
            jitter: 0.0,
        }
    }

    const H: [JointHypothesis; 4] = JointHypothesis::ALL;

    #[test]
    fn edge_moments_at_defaults() {
        let m = model(&[]);
        let e = edge_moments(&m, Cell::One, H[0]);
        assert!((e.mean[0] - 3.2).abs() < 1e-12);
        let w0 = 10f64.powf(-0.3);
        assert!((e.cov[(0, 0)] - (3.2 + w0)).abs() < 1e-12);
        assert!((e.cov[(0, 0)] - 3.701).abs() < 1e-3);
        assert_eq!(e.cov[(0, 1)], 0.0);
    }

    #[test]
    fn edge_moments_without_interference_ignore_k() {
        let m = model(&[("mu_g", "0"), ("sigma2_g", "0")]);
        for cell in Cell::BOTH {
            let a = edge_moments(&m, cell, JointHypothesis::new(Hypothesis::Theta0, Hypothesis::Theta0));
            let b = match cell {
                Cell::One => edge_moments(&m, cell, JointHypothesis::new(Hypothesis::Theta0, Hypothesis::Theta1)),
                Cell::Two => edge_moments(&m, cell, JointHypothesis::new(Hypothesis::Theta1, Hypothesis::Theta0)),
            };
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.cov, b.cov);
        }
    }

    #[test]
    fn edge_moments_relabel_between_cells() {
        let m = model(&[("mu_g", "0.7"), ("sigma2_g", "2.5")]);
        for h in H {
            let swapped = JointHypothesis::new(h.k, h.j);
            let a = edge_moments(&m, Cell::One, h);
            let b = edge_moments(&m, Cell::Two, swapped);
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.cov, b.cov);
        }
    }

    #[test]
    fn cloud_moments_structure() {
        let m = model(&[]);
        let spec = QuantizationSpec { sigma2_q: [0.3, 0.7], capacity: 1.0, residual: [0.0; 2], per_dim_form: true };
        let c = cloud_moments(&m, &spec, H[0]).unwrap();
        assert_eq!(c.dim(), 8);
        assert!((c.cov[(0, 4)] - 1.92).abs() < 1e-12);
        assert_eq!(c.cov[(0, 4)], c.cov[(4, 0)]);
        assert_eq!(c.cov[(0, 1)], 0.0);
        assert_eq!(c.cov[(0, 5)], 0.0);
        let e1 = edge_moments(&m, Cell::One, H[0]);
        let e2 = edge_moments(&m, Cell::Two, H[0]);
        for i in 0..4 {
            assert!((c.cov[(i, i)] - e1.cov[(i, i)] - 0.3).abs() < 1e-12);
            assert!((c.cov[(4 + i, 4 + i)] - e2.cov[(i, i)] - 0.7).abs() < 1e-12);
        }
        // second block under H_01 is cell 2's own = theta_1 moments
        let c01 = cloud_moments(&m, &spec, H[1]).unwrap();
        let e = edge_moments(&m, Cell::Two, H[1]);
        for i in 0..4 {
            assert_eq!(c01.mean[4 + i], e.mean[i]);
        }
        let nomu = model(&[("mu_g", "0")]);
        let c = cloud_moments(&nomu, &spec, H[2]).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert_eq!(c.cov[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn cloud_moments_jitter_or_error() {
        // strong mean coupling and no variance: off-diagonals dominate
        let m = model(&[("sigma2_h", "0"), ("sigma2_g", "0"), ("mu_g", "30"), ("mu_h", "30"), ("snr_db", "40")]);
        let spec = QuantizationSpec { sigma2_q: [0.0, 0.0], capacity: 1.0, residual: [0.0; 2], per_dim_form: true };
        let err = cloud_moments(&m, &spec, H[0]).unwrap_err();
        assert!(err.to_string().contains("not positive definite"));
    }

    #[test]
    fn alpha_chernoff_basic_identities() {
        let a = gauss1(0.0, 1.0);
        let b = gauss1(1.0, 1.0);
        assert_eq!(alpha_chernoff_gaussian(&a, &b, 0.0).unwrap(), 0.0);
        assert_eq!(alpha_chernoff_gaussian(&a, &b, 1.0).unwrap(), 0.0);
        assert!((alpha_chernoff_gaussian(&a, &b, 0.5).unwrap() - 0.125).abs() < 1e-12);
        for al in [0.0, 0.3, 0.5, 0.9] {
            assert_eq!(alpha_chernoff_gaussian(&a, &a, al).unwrap(), 0.0);
        }
        assert!(alpha_chernoff_gaussian(&a, &b, 1.5).is_err());
        let two = HypothesisMoments { mean: DVector::zeros(2), cov: DMatrix::identity(2, 2), ..a.clone() };
        assert!(alpha_chernoff_gaussian(&a, &two, 0.5).is_err());
    }

    #[test]
    fn scalar_oracle() {
        // independent closed form for 1-D Gaussians
        let oracle = |m0: f64, v0: f64, m1: f64, v1: f64, a: f64| {
            let va = a * v0 + (1.0 - a) * v1;
            0.5 * (va.ln() - a * v0.ln() - (1.0 - a) * v1.ln()) + 0.5 * a * (1.0 - a) * (m0 - m1).powi(2) / va
        };
        for (m0, v0, m1, v1) in [(0.0, 1.0, 2.0, 3.0), (3.2, 3.7, 1.1, 0.9), (-1.0, 0.01, 0.5, 10.0)] {
            for a in [0.1, 0.37, 0.5, 0.8] {
                let got = alpha_chernoff_gaussian(&gauss1(m0, v0), &gauss1(m1, v1), a).unwrap();
                assert!((got - oracle(m0, v0, m1, v1, a)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_covariance_optimum_is_half() {
        let ch = chernoff_info(&gauss1(0.0, 2.0), &gauss1(3.0, 2.0)).unwrap();
        assert!((ch.alpha - 0.5).abs() < 1e-5);
        assert!((ch.value - 0.125 * 9.0 / 2.0).abs() < 1e-10);
    }

    #[test]
    fn chernoff_swap_and_refinement() {
        let m = model(&[("sigma2_g", "3")]);
        let spec = solve_quantization_variance(&m).unwrap();
        for (a, b) in [(0, 1), (0, 3), (1, 2), (2, 3)] {
            let x = cloud_moments(&m, &spec, H[a]).unwrap();
            let y = cloud_moments(&m, &spec, H[b]).unwrap();
            let p = chernoff_info(&x, &y).unwrap();
            let q = chernoff_info(&y, &x).unwrap();
            assert!((p.value - q.value).abs() < 1e-9);
            assert!((p.alpha - (1.0 - q.alpha)).abs() < 1e-4);
            let g = chernoff_info_grid(&x, &y).unwrap();
            assert!(p.value >= g.value && p.value - g.value < 1e-4);
        }
        for cell in Cell::BOTH {
            let x = edge_moments(&m, cell, H[0]);
            let y = edge_moments(&m, cell, H[3]);
            let p = chernoff_info(&x, &y).unwrap();
            let g = chernoff_info_grid(&x, &y).unwrap();
            assert!(p.value >= g.value && p.value - g.value < 1e-4);
        }
    }

    #[test]
    fn edge_exponent_requires_interior_rho() {
        for rho in ["0", "1"] {
            let err = edge_exponent(&model(&[("rho", rho)])).unwrap_err();
            assert!(err.to_string().contains("0 < rho < 1"));
        }
    }

    #[test]
    fn edge_exponent_vanishes_with_interference() {
        let sweep = [1.0, 10.0, 100.0, 1000.0];
        let e: Vec<f64> = sweep
            .iter()
            .map(|s| edge_exponent(&model(&[("mu_g", "0"), ("sigma2_g", &s.to_string())])).unwrap().value)
            .collect();
        for w in e.windows(2) {
            assert!(w[0] > w[1], "{e:?}");
        }
        let e4 = edge_exponent(&model(&[("mu_g", "0"), ("sigma2_g", "1e4")])).unwrap().value;
        assert!(e4 < 0.01 * e[0]);
        let r = edge_exponent(&model(&[])).unwrap();
        assert_eq!(r.value, r.per_cell[0].min(r.per_cell[1]));
        assert!(r.terms.iter().all(|t| t.chernoff.value >= 0.0));
    }

    #[test]
    fn edge_exponent_without_interference_is_k_free() {
        let r = edge_exponent(&model(&[("mu_g", "0"), ("sigma2_g", "0")])).unwrap();
        assert_eq!(r.terms[0].chernoff.value, r.terms[1].chernoff.value);
    }

    #[test]
    fn cloud_beats_edge_with_capacity_and_interference() {
        let m = model(&[("mu_g", "0"), ("sigma2_g", "100"), ("fronthaul_capacity", "50")]);
        let r = exponent_report(&m).unwrap();
        assert!(r.e_cloud() > r.e_edge(), "{} vs {}", r.e_cloud(), r.e_edge());
        let low = [0.1, 0.3, 1.0, 3.0];
        let beaten = low.iter().any(|s| {
            let m = model(&[("mu_g", "0"), ("sigma2_g", &s.to_string()), ("fronthaul_capacity", "0.25")]);
            let r = exponent_report(&m).unwrap();
            r.e_cloud() < r.e_edge()
        });
        assert!(beaten);
    }

    #[test]
    fn cloud_exponent_nondecreasing_in_capacity() {
        let mut prev = 0.0;
        for c in ["0.5", "1", "2", "5", "10"] {
            let r = exponent_report(&model(&[("mu_g", "0"), ("fronthaul_capacity", c)])).unwrap();
            assert!(r.e_cloud() >= prev, "C = {c}: {} < {prev}", r.e_cloud());
            assert_eq!(r.cloud.value, r.cloud.per_hypothesis.iter().cloned().fold(f64::INFINITY, f64::min));
            assert_eq!(r.cloud.terms.len(), 12);
            prev = r.e_cloud();
        }
    }

    #[test]
    fn exponents_do_not_depend_on_rho() {
        let base = exponent_report(&model(&[("rho", "0.85")])).unwrap();
        for rho in ["0.2", "0.5"] {
            let r = exponent_report(&model(&[("rho", rho)])).unwrap();
            assert_eq!(r.e_edge(), base.e_edge());
            // symmetric pmfs keep the solver weights rho-free
            assert!((r.spec.sigma2_q[0] / base.spec.sigma2_q[0] - 1.0).abs() < 1e-12);
            assert!((r.e_cloud() - base.e_cloud()).abs() < 1e-9);
        }
    }

    #[test]
    fn limit_check_small_grid_is_inapplicable() {
        let r = interference_limit_check(&model(&[]), &[1.0]).unwrap();
        assert!(!r.applicable);
        assert!(r.note.contains("inapplicable"));
    }

    #[test]
    fn golden_section_finds_quadratic_peak() {
        let (x, v) = golden_max(|x| Ok::<_, ()>(-(x - 0.3).powi(2) + 2.0), 0.0, 1.0, 1e-7).unwrap();
        assert!((x - 0.3).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
