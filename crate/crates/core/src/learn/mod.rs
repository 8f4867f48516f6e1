//! Data-driven detectors: one binary network per edge node, one four-class
//! network at the cloud.

pub mod dataset;
pub mod mlp;

pub use dataset::{features, generate_dataset, read_dataset_csv, write_dataset_csv, Dataset, Target};
pub use mlp::{train, MlpModel, TrainConfig, TrainOutcome, DEFAULT_EPOCHS, DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE};

use crate::airlink::CollectionTrace;
use crate::detect::{DetectionOutcome, DetectorKind};
use crate::error::{DetectError, LearnError};
use crate::fronthaul::QuantizationSpec;
use crate::model::{Cell, Hypothesis, JointHypothesis, Model, QoiPair};
use crate::montecarlo::{count_errors, PeEstimate, TraceDetector};
use crate::rng::{derive_seed, label_hash, stream_rng};

/// Trained networks packaged as a detector.
#[derive(Clone, Debug)]
pub enum LearnedDetector {
    /// Networks for cell 1 and cell 2, each reading only its own signal.
    Edge([MlpModel; 2]),
    /// One network on both quantized signals.
    Cloud(MlpModel),
}

impl LearnedDetector {
    pub fn kind(&self) -> DetectorKind {
        match self {
            LearnedDetector::Edge(_) => DetectorKind::EdgeLearned,
            LearnedDetector::Cloud(_) => DetectorKind::CloudLearned,
        }
    }

    /// Decision plus the network outputs: `[P(theta^1 = 1), P(theta^2 = 1)]`
    /// for edge networks, the four joint probabilities for the cloud one.
    pub fn detect(&self, trace: &CollectionTrace) -> DetectionOutcome {
        match self {
            LearnedDetector::Edge(nets) => {
                let mut probs = Vec::with_capacity(2);
                let mut dec = [Hypothesis::Theta0; 2];
                for cell in Cell::BOTH {
                    let p = nets[cell.index()].predict(&features(trace, Target::edge(cell)))[0];
                    dec[cell.index()] = if p > 0.5 { Hypothesis::Theta1 } else { Hypothesis::Theta0 };
                    probs.push(p);
                }
                DetectionOutcome {
                    theta_hat: QoiPair::new(dec[0], dec[1]),
                    log_scores: probs,
                    detector: DetectorKind::EdgeLearned,
                }
            }
            LearnedDetector::Cloud(net) => {
                let x = features(trace, Target::Cloud);
                let p = net.predict(&x);
                let best = net.decide(&x);
                DetectionOutcome {
                    theta_hat: JointHypothesis::ALL[best].qoi(),
                    log_scores: p,
                    detector: DetectorKind::CloudLearned,
                }
            }
        }
    }
}

impl TraceDetector for LearnedDetector {
    fn uses_quantized(&self) -> bool {
        matches!(self, LearnedDetector::Cloud(_))
    }
    fn decide(&self, trace: &CollectionTrace) -> Result<QoiPair, DetectError> {
        Ok(self.detect(trace).theta_hat)
    }
}

/// Architecture, optimizer settings and training-set size.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    pub n_samples: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig { hidden: DEFAULT_HIDDEN.to_vec(), train: TrainConfig::default(), n_samples: 10_000 }
    }
}

/// Networks trained for one detector kind plus their final training losses.
#[derive(Clone, Debug)]
pub struct TrainedDetector {
    pub detector: LearnedDetector,
    pub final_loss: Vec<f64>,
    pub diverged: bool,
}

fn fit(
    model: &Model,
    target: Target,
    spec: Option<&QuantizationSpec>,
    cfg: &LearnConfig,
    seed: u64,
) -> Result<TrainOutcome, LearnError> {
    let label = label_hash(target.as_str());
    let ds = generate_dataset(model, cfg.n_samples, target, spec, derive_seed(seed, label))?;
    let mut init_rng = stream_rng(derive_seed(seed, label_hash("init")), label);
    let net = MlpModel::for_dataset(&ds, &cfg.hidden, &mut init_rng)?;
    train(&net, &ds, &cfg.train)
}

/// Simulate training sets and train the networks of `kind` (a learned kind).
/// Cloud training data is quantized with `spec`.
pub fn train_detector(
    model: &Model,
    kind: DetectorKind,
    spec: Option<&QuantizationSpec>,
    cfg: &LearnConfig,
    seed: u64,
) -> Result<TrainedDetector, LearnError> {
    match kind {
        DetectorKind::CloudLearned => {
            let out = fit(model, Target::Cloud, spec, cfg, seed)?;
            Ok(TrainedDetector {
                final_loss: vec![*out.loss_trace.last().unwrap_or(&f64::NAN)],
                diverged: out.diverged,
                detector: LearnedDetector::Cloud(out.model),
            })
        }
        DetectorKind::EdgeLearned => {
            let a = fit(model, Target::EdgeCell1, None, cfg, seed)?;
            let b = fit(model, Target::EdgeCell2, None, cfg, seed)?;
            Ok(TrainedDetector {
                final_loss: vec![*a.loss_trace.last().unwrap_or(&f64::NAN), *b.loss_trace.last().unwrap_or(&f64::NAN)],
                diverged: a.diverged || b.diverged,
                detector: LearnedDetector::Edge([a.model, b.model]),
            })
        }
        other => Err(LearnError::Format(format!("{other} is not a learned detector"))),
    }
}

/// Monte Carlo joint error probability of a learned detector. Use an
/// evaluation seed distinct from the training seed.
pub fn evaluate_pe(
    model: &Model,
    detector: &LearnedDetector,
    spec: Option<&QuantizationSpec>,
    n_trials: u64,
    seed: u64,
    workers: usize,
) -> Result<PeEstimate, LearnError> {
    if matches!(detector, LearnedDetector::Cloud(_)) && spec.is_none() {
        return Err(LearnError::MissingQuantization);
    }
    let counts = count_errors(model, spec, &[detector], n_trials, seed, workers)
        .map_err(|e| LearnError::Format(format!("evaluation failed: {e}")))?;
    Ok(PeEstimate::from_counts(counts[0], n_trials))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemConfig;
    use crate::montecarlo::{draw_trial, TrialSeeds};

    #[test]
    fn random_guess_matches_counting_oracle() {
        // untrained random networks: compare evaluate_pe with a direct count
        let model = Model::new(SystemConfig::default()).unwrap();
        let dims = [40, 3, 1];
        let nets = [
            MlpModel::random(&dims, &mut stream_rng(1, 0)).unwrap(),
            MlpModel::random(&dims, &mut stream_rng(1, 1)).unwrap(),
        ];
        let det = LearnedDetector::Edge(nets);
        let n = 2000;
        let est = evaluate_pe(&model, &det, None, n, 42, 2).unwrap();
        let seeds = TrialSeeds::new(42);
        let mut t = CollectionTrace::empty(4, 5);
        let mut q = t.clone();
        let mut wrong = 0;
        for i in 0..n {
            draw_trial(&model, None, seeds, i, &mut t, &mut q);
            let d1 = det_decide(&det, &t, Cell::One);
            let d2 = det_decide(&det, &t, Cell::Two);
            if d1 != t.qoi.theta1.index() || d2 != t.qoi.theta2.index() {
                wrong += 1;
            }
        }
        assert_eq!(est.errors, wrong);
        assert!(est.ci_lo <= est.pe && est.pe <= est.ci_hi);
    }

    fn det_decide(det: &LearnedDetector, t: &CollectionTrace, cell: Cell) -> usize {
        match det {
            LearnedDetector::Edge(n) => n[cell.index()].decide(&features(t, Target::edge(cell))),
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_guess_error_rate() {
        // zero networks always answer (theta0, theta0): wrong unless H00, prob 1 - rho/2
        let model = Model::new(SystemConfig::default()).unwrap();
        let det = LearnedDetector::Edge([MlpModel::zeros(&[40, 1]).unwrap(), MlpModel::zeros(&[40, 1]).unwrap()]);
        let est = evaluate_pe(&model, &det, None, 20_000, 3, 0).unwrap();
        assert!((est.pe - (1.0 - 0.85 / 2.0)).abs() < 4.0 * est.std_error());
    }

    #[test]
    fn label_leak_gives_zero_error() {
        // noiseless, no interference, disjoint supports: level 1 fires only under theta0
        let mut cfg = SystemConfig {
            snr_db: 200.0,
            lambda: 30.0,
            mu_g: 0.0,
            sigma2_g: 0.0,
            sigma2_h: 0.0,
            l_intervals: 2,
            ..SystemConfig::default()
        };
        cfg.pmfs = [
            [vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]],
            [vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]],
        ];
        let model = Model::new(cfg).unwrap();
        let learn =
            LearnConfig { hidden: vec![8], train: TrainConfig { epochs: 300, learning_rate: 0.5 }, n_samples: 300 };
        let trained = train_detector(&model, DetectorKind::EdgeLearned, None, &learn, 1).unwrap();
        let est = evaluate_pe(&model, &trained.detector, None, 2000, 99, 0).unwrap();
        assert_eq!(est.errors, 0);
    }
}
