//! Brute-force reference for the per-interval likelihood: a plain double sum
//! over a fixed count grid, with compensated summation.

use crate::airlink::{complex_normal_logpdf, ReceivedVector};
use crate::model::{Hypothesis, Model};

/// Default grid size `ceil(lambda + 12 sqrt(lambda) + 20)`.
pub fn oracle_n_max(lambda: f64) -> usize {
    (lambda + 12.0 * lambda.sqrt() + 20.0).ceil() as usize
}

/// `ln n!` for `0..=n` by accumulation.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..=n {
        acc += (i as f64).ln();
        out.push(acc);
    }
    out
}

fn log_poisson(n: usize, mean: f64, lf: &[f64]) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - lf[n]
}

/// Neumaier-compensated sum.
fn neumaier(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `sum_m ln sum_{n1, n2 <= n_max} P(n1) P(n2) CN(y(m) | ...)` evaluated term by term.
pub fn brute_force_loglik_oracle(
    y: &ReceivedVector,
    own: Hypothesis,
    other: Hypothesis,
    extra_var: f64,
    model: &Model,
    n_max: usize,
) -> f64 {
    let lf = log_factorials(n_max);
    let lam = model.lambda();
    let p_own = model.observation_pmf(y.cell, own);
    let p_other = model.observation_pmf(y.cell.other(), other);
    let mut total = 0.0;
    for (m, &s) in y.samples.iter().enumerate() {
        let (a, b) = (lam * p_own[m], lam * p_other[m]);
        let mut terms = Vec::with_capacity((n_max + 1) * (n_max + 1));
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                let w = log_poisson(n1, a, &lf) + log_poisson(n2, b, &lf);
                if w == f64::NEG_INFINITY {
                    continue;
                }
                let mu = n1 as f64 * model.mu_h() + n2 as f64 * model.mu_g();
                let var = n1 as f64 * model.sigma2_h() + n2 as f64 * model.sigma2_g() + model.noise_var() + extra_var;
                terms.push(w + complex_normal_logpdf(s, mu, var));
            }
        }
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += top + neumaier(terms.iter().map(|t| (t - top).exp())).ln();
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cell, SystemConfig};
    use num_complex::Complex64;

    #[test]
    fn single_term_grid() {
        // n_max = 0 keeps only n1 = n2 = 0: noise density times e^{-a-b}
        let model = Model::new(SystemConfig { lambda: 0.3, ..SystemConfig::default() }).unwrap();
        let y = ReceivedVector { cell: Cell::One, interval: 1, samples: vec![Complex64::new(0.2, 0.1); 4] };
        let got = brute_force_loglik_oracle(&y, Hypothesis::Theta0, Hypothesis::Theta1, 0.0, &model, 0);
        let expect: f64 = (0..4)
            .map(|m| {
                let a = 0.3 * model.observation_pmf(Cell::One, Hypothesis::Theta0)[m];
                let b = 0.3 * model.observation_pmf(Cell::Two, Hypothesis::Theta1)[m];
                -a - b + complex_normal_logpdf(y.samples[m], 0.0, model.noise_var())
            })
            .sum();
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn mass_converges_monotonically() {
        // flat density (tiny SNR, no channel): the inner sum is the captured Poisson mass
        let mut cfg = SystemConfig {
            snr_db: -80.0,
            m_levels: 2,
            mu_h: 0.0,
            mu_g: 0.0,
            sigma2_h: 0.0,
            sigma2_g: 0.0,
            ..SystemConfig::default()
        };
        cfg.pmfs = [[vec![1.0, 0.0], vec![1.0, 0.0]], [vec![1.0, 0.0], vec![1.0, 0.0]]];
        let model = Model::new(cfg).unwrap();
        let y = ReceivedVector { cell: Cell::One, interval: 1, samples: vec![Complex64::new(0.0, 0.0); 2] };
        let base = 2.0 * complex_normal_logpdf(y.samples[0], 0.0, model.noise_var());
        let mut prev = f64::NEG_INFINITY;
        for n in [0, 1, 2, 4, 8, 16, 32, 64] {
            let mass =
                (brute_force_loglik_oracle(&y, Hypothesis::Theta0, Hypothesis::Theta0, 0.0, &model, n) - base).exp();
            assert!(mass >= prev && mass <= 1.0 + 1e-12);
            prev = mass;
        }
        assert!((prev - 1.0).abs() < 1e-12);
        assert_eq!(oracle_n_max(4.0), 48);
        assert_eq!(oracle_n_max(8.0), 62);
    }
}
