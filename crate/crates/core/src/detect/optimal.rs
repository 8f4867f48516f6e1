//! Bayes-optimal detectors.
//!
//! The edge node of cell `c` runs a binary MAP test on its own `L` vectors,
//! marginalizing the other cell's QoI with the conditional prior. The cloud
//! runs a four-way MAP test on both quantized sequences, treating the two
//! cells as conditionally independent given `(j, k)`.

use std::fmt;
use std::str::FromStr;

use crate::airlink::{CollectionTrace, ReceivedVector};
use crate::detect::likelihood::{CellLikelihood, TruncationPolicy};
use crate::error::DetectError;
use crate::fronthaul::QuantizationSpec;
use crate::model::{Cell, Hypothesis, JointHypothesis, Model, QoiPair};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    EdgeOptimal,
    CloudOptimal,
    EdgeLearned,
    CloudLearned,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] =
        [DetectorKind::EdgeOptimal, DetectorKind::CloudOptimal, DetectorKind::EdgeLearned, DetectorKind::CloudLearned];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::EdgeOptimal => "edge_optimal",
            DetectorKind::CloudOptimal => "cloud_optimal",
            DetectorKind::EdgeLearned => "edge_learned",
            DetectorKind::CloudLearned => "cloud_learned",
        }
    }

    pub fn is_cloud(self) -> bool {
        matches!(self, DetectorKind::CloudOptimal | DetectorKind::CloudLearned)
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            format!("unknown detector '{s}' (expected edge_optimal, cloud_optimal, edge_learned or cloud_learned)")
        })
    }
}

/// Decisions for both cells plus the normalized log posteriors behind them.
///
/// Edge detectors report `[ln P(theta^1 = 0 | Y^1), ln P(theta^1 = 1 | Y^1),
/// ln P(theta^2 = 0 | Y^2), ln P(theta^2 = 1 | Y^2)]`; cloud detectors report
/// the four joint posteriors in `H00, H01, H10, H11` order. A hypothesis with
/// zero prior scores `-inf`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionOutcome {
    pub theta_hat: QoiPair,
    pub log_scores: Vec<f64>,
    pub detector: DetectorKind,
}

impl DetectionOutcome {
    pub fn is_error(&self, truth: QoiPair) -> bool {
        self.theta_hat != truth
    }
}

fn log_sum_exp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn ln_or_neg_inf(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Per-cell binary MAP detector.
#[derive(Clone, Debug)]
pub struct EdgeDetector {
    tables: [CellLikelihood; 2],
    /// `ln Pr(theta^{c'} = k | theta^c = j)`, indexed `[j][k]`.
    log_cond: [[f64; 2]; 2],
}

impl EdgeDetector {
    pub fn new(model: &Model, policy: &TruncationPolicy) -> Self {
        let tables = Cell::BOTH.map(|c| CellLikelihood::new(model, c, 0.0, policy));
        let log_cond = Hypothesis::BOTH.map(|j| Hypothesis::BOTH.map(|k| ln_or_neg_inf(model.conditional_prior(j, k))));
        EdgeDetector { tables, log_cond }
    }

    /// Decision and `[ln P(theta_0 | Y), ln P(theta_1 | Y)]` for one cell.
    pub fn detect_cell<'a>(
        &self,
        cell: Cell,
        ys: impl IntoIterator<Item = &'a ReceivedVector>,
    ) -> Result<(Hypothesis, [f64; 2]), DetectError> {
        let table = &self.tables[cell.index()];
        let mut acc = [0.0; 4];
        let mut n = 0;
        for y in ys {
            let ll = table.loglik_all(y)?;
            for jk in 0..4 {
                acc[jk] += ll[jk];
            }
            n += 1;
        }
        if n == 0 {
            return Err(DetectError::Empty);
        }
        let f = [0, 1].map(|j| log_sum_exp2(acc[2 * j] + self.log_cond[j][0], acc[2 * j + 1] + self.log_cond[j][1]));
        let decision = if f[0] - f[1] >= 0.0 || f[0] == f[1] { Hypothesis::Theta0 } else { Hypothesis::Theta1 };
        let norm = log_sum_exp2(f[0], f[1]);
        Ok((decision, [f[0] - norm, f[1] - norm]))
    }

    pub fn detect(&self, trace: &CollectionTrace) -> Result<DetectionOutcome, DetectError> {
        let (d1, s1) = self.detect_cell(Cell::One, trace.cell_vectors(Cell::One))?;
        let (d2, s2) = self.detect_cell(Cell::Two, trace.cell_vectors(Cell::Two))?;
        Ok(DetectionOutcome {
            theta_hat: QoiPair::new(d1, d2),
            log_scores: vec![s1[0], s1[1], s2[0], s2[1]],
            detector: DetectorKind::EdgeOptimal,
        })
    }
}

/// Joint MAP detector at the cloud.
#[derive(Clone, Debug)]
pub struct CloudDetector {
    tables: [CellLikelihood; 2],
    log_prior: [f64; 4],
}

impl CloudDetector {
    pub fn new(model: &Model, spec: &QuantizationSpec, policy: &TruncationPolicy) -> Self {
        let tables = Cell::BOTH.map(|c| CellLikelihood::new(model, c, spec.get(c), policy));
        let log_prior = JointHypothesis::ALL.map(|h| ln_or_neg_inf(model.joint_prior(h)));
        CloudDetector { tables, log_prior }
    }

    /// Joint decision on an already quantized trace.
    pub fn detect(&self, quantized: &CollectionTrace) -> Result<DetectionOutcome, DetectError> {
        if quantized.intervals.is_empty() {
            return Err(DetectError::Empty);
        }
        let mut score = self.log_prior;
        for rec in &quantized.intervals {
            let l1 = self.tables[0].loglik_all(rec.get(Cell::One))?;
            let l2 = self.tables[1].loglik_all(rec.get(Cell::Two))?;
            for h in JointHypothesis::ALL {
                let (j, k) = (h.j.index(), h.k.index());
                // cell 1 owns j and sees k; cell 2 owns k and sees j
                score[h.index()] += l1[2 * j + k] + l2[2 * k + j];
            }
        }
        let mut best = 0;
        for i in 1..4 {
            if score[i] > score[best] {
                best = i;
            }
        }
        let top = score[best];
        let norm = top + score.iter().map(|s| (s - top).exp()).sum::<f64>().ln();
        Ok(DetectionOutcome {
            theta_hat: JointHypothesis::ALL[best].qoi(),
            log_scores: score.iter().map(|s| s - norm).collect(),
            detector: DetectorKind::CloudOptimal,
        })
    }
}

/// One-shot edge decision for `cell` from its `L` vectors.
pub fn edge_detect<'a>(
    ys: impl IntoIterator<Item = &'a ReceivedVector>,
    cell: Cell,
    model: &Model,
    policy: &TruncationPolicy,
) -> Result<(Hypothesis, [f64; 2]), DetectError> {
    EdgeDetector::new(model, policy).detect_cell(cell, ys)
}

/// One-shot cloud decision on a quantized trace.
pub fn cloud_detect(
    quantized: &CollectionTrace,
    model: &Model,
    spec: &QuantizationSpec,
    policy: &TruncationPolicy,
) -> Result<DetectionOutcome, DetectError> {
    CloudDetector::new(model, spec, policy).detect(quantized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::airlink::simulate_trace;
    use crate::model::SystemConfig;
    use crate::rng::stream_rng;

    fn model(pairs: &[(&str, &str)]) -> Model {
        let mut cfg = SystemConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        Model::new(cfg).unwrap()
    }

    #[test]
    fn scores_are_normalized_and_consistent() {
        let m = model(&[("sigma2_g", "2")]);
        let edge = EdgeDetector::new(&m, &TruncationPolicy::default());
        let spec = crate::fronthaul::solve_quantization_variance(&m).unwrap();
        let cloud = CloudDetector::new(&m, &spec, &TruncationPolicy::default());
        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let q = m.sample_qoi_pair(&mut rng);
            let t = simulate_trace(&m, q, &mut rng);
            let e = edge.detect(&t).unwrap();
            for c in 0..2 {
                let s = &e.log_scores[2 * c..2 * c + 2];
                assert!((s[0].exp() + s[1].exp() - 1.0).abs() < 1e-12);
                let pick = if s[0] >= s[1] { Hypothesis::Theta0 } else { Hypothesis::Theta1 };
                assert_eq!(pick, e.theta_hat.get(Cell::BOTH[c]));
            }
            let c = cloud.detect(&t).unwrap();
            assert!((c.log_scores.iter().map(|s| s.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
            let best = (0..4).fold(0, |b, i| if c.log_scores[i] > c.log_scores[b] { i } else { b });
            assert_eq!(JointHypothesis::ALL[best].qoi(), c.theta_hat);
        }
    }

    #[test]
    fn rho_one_removes_discordant_hypotheses() {
        let m = model(&[("rho", "1")]);
        let spec = QuantizationSpec::lossless();
        let cloud = CloudDetector::new(&m, &spec, &TruncationPolicy::default());
        let mut rng = stream_rng(5, 0);
        for _ in 0..20 {
            let q = m.sample_qoi_pair(&mut rng);
            let t = simulate_trace(&m, q, &mut rng);
            let out = cloud.detect(&t).unwrap();
            assert_eq!(out.log_scores[1], f64::NEG_INFINITY);
            assert_eq!(out.log_scores[2], f64::NEG_INFINITY);
            assert_eq!(out.theta_hat.theta1, out.theta_hat.theta2);
        }
    }

    #[test]
    fn rho_one_edge_is_genie_test() {
        // with rho = 1 the edge LLR is the test between f(.|0,0) and f(.|1,1)
        let m = model(&[("rho", "1"), ("sigma2_g", "3")]);
        let edge = EdgeDetector::new(&m, &TruncationPolicy::default());
        let table = CellLikelihood::new(&m, Cell::One, 0.0, &TruncationPolicy::default());
        let mut rng = stream_rng(6, 0);
        for _ in 0..50 {
            let t = simulate_trace(&m, m.sample_qoi_pair(&mut rng), &mut rng);
            let (d, _) = edge.detect_cell(Cell::One, t.cell_vectors(Cell::One)).unwrap();
            let mut llr = 0.0;
            for y in t.cell_vectors(Cell::One) {
                let ll = table.loglik_all(y).unwrap();
                llr += ll[0] - ll[3];
            }
            assert_eq!(d, if llr >= 0.0 { Hypothesis::Theta0 } else { Hypothesis::Theta1 });
        }
    }

    #[test]
    fn empty_sequences_are_errors() {
        let m = model(&[]);
        let edge = EdgeDetector::new(&m, &TruncationPolicy::default());
        assert!(matches!(edge.detect_cell(Cell::One, std::iter::empty()), Err(DetectError::Empty)));
        let trace = CollectionTrace { qoi: QoiPair::new(Hypothesis::Theta0, Hypothesis::Theta0), intervals: vec![] };
        assert!(cloud_detect(&trace, &m, &QuantizationSpec::lossless(), &TruncationPolicy::default()).is_err());
    }

    #[test]
    fn detector_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.as_str().parse::<DetectorKind>().unwrap(), k);
        }
        assert!("bogus".parse::<DetectorKind>().is_err());
    }
}
