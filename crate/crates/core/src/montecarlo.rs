//! Trial loop shared by every P_e estimate.
//!
//! Trial `i` draws its QoI pair and trace from `stream_rng(trace_seed, i)` and
//! its fronthaul noise from a second stream, so the received signals are the
//! same whichever detectors run, and error counts (plain integers) do not
//! depend on how trials are split across workers.

use rayon::prelude::*;

use crate::airlink::{simulate_trace_into, CollectionTrace};
use crate::error::DetectError;
use crate::fronthaul::{quantize_trace_in_place, QuantizationSpec};
use crate::model::{Model, QoiPair};
use crate::rng::{derive_seed, label_hash, stream_rng};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Trials per work unit. Fixed so chunking never depends on the pool size.
const CHUNK: u64 = 512;

/// Anything that maps a collection trace to a QoI decision.
pub trait TraceDetector: Sync {
    /// Whether the detector reads the fronthaul-quantized trace.
    fn uses_quantized(&self) -> bool;
    fn decide(&self, trace: &CollectionTrace) -> Result<QoiPair, DetectError>;
}

impl TraceDetector for crate::detect::EdgeDetector {
    fn uses_quantized(&self) -> bool {
        false
    }
    fn decide(&self, trace: &CollectionTrace) -> Result<QoiPair, DetectError> {
        Ok(self.detect(trace)?.theta_hat)
    }
}

impl TraceDetector for crate::detect::CloudDetector {
    fn uses_quantized(&self) -> bool {
        true
    }
    fn decide(&self, trace: &CollectionTrace) -> Result<QoiPair, DetectError> {
        Ok(self.detect(trace)?.theta_hat)
    }
}

/// Error count with its Wilson 95% interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeEstimate {
    pub errors: u64,
    pub trials: u64,
    pub pe: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl PeEstimate {
    pub fn from_counts(errors: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson_interval(errors, trials, Z95);
        let pe = if trials == 0 { f64::NAN } else { errors as f64 / trials as f64 };
        PeEstimate { errors, trials, pe, ci_lo, ci_hi }
    }

    /// `sqrt(p (1 - p) / n)`.
    pub fn std_error(&self) -> f64 {
        (self.pe * (1.0 - self.pe) / self.trials as f64).sqrt()
    }

    /// True when the two intervals do not overlap and this one lies below.
    pub fn clearly_below(&self, other: &PeEstimate) -> bool {
        self.ci_hi < other.ci_lo
    }
}

/// Wilson score interval for `k` successes in `n` trials, clamped to [0, 1].
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo.min(p), hi.max(p))
}

/// Seeds for the trace and fronthaul-noise streams of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialSeeds {
    pub trace: u64,
    pub quantization: u64,
}

impl TrialSeeds {
    pub fn new(seed: u64) -> Self {
        TrialSeeds {
            trace: derive_seed(seed, label_hash("trace")),
            quantization: derive_seed(seed, label_hash("fronthaul")),
        }
    }
}

/// Draw trial `index`: QoI pair and trace, plus the quantized copy when `spec`
/// is given.
pub fn draw_trial(
    model: &Model,
    spec: Option<&QuantizationSpec>,
    seeds: TrialSeeds,
    index: u64,
    trace: &mut CollectionTrace,
    quantized: &mut CollectionTrace,
) {
    let mut rng = stream_rng(seeds.trace, index);
    let qoi = model.sample_qoi_pair(&mut rng);
    simulate_trace_into(model, qoi, trace, &mut rng);
    if let Some(spec) = spec {
        quantized.clone_from(trace);
        let mut qrng = stream_rng(seeds.quantization, index);
        quantize_trace_in_place(quantized, spec, &mut qrng);
    }
}

/// Run `n_trials` shared trials through every detector and count joint errors.
///
/// `workers = 0` uses the global rayon pool. Returns one count per detector.
pub fn count_errors(
    model: &Model,
    spec: Option<&QuantizationSpec>,
    detectors: &[&dyn TraceDetector],
    n_trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<u64>, DetectError> {
    let need_q = detectors.iter().any(|d| d.uses_quantized());
    let spec = if need_q { spec } else { None };
    assert!(!need_q || spec.is_some(), "cloud detectors need a quantization spec");
    let seeds = TrialSeeds::new(seed);
    let n_chunks = n_trials.div_ceil(CHUNK);

    let run_chunk = |c: u64| -> Result<Vec<u64>, DetectError> {
        let mut counts = vec![0u64; detectors.len()];
        let mut trace = CollectionTrace::empty(model.levels(), model.l_intervals());
        let mut quantized = trace.clone();
        for i in c * CHUNK..((c + 1) * CHUNK).min(n_trials) {
            draw_trial(model, spec, seeds, i, &mut trace, &mut quantized);
            for (d, count) in detectors.iter().zip(counts.iter_mut()) {
                let input = if d.uses_quantized() { &quantized } else { &trace };
                if d.decide(input)? != trace.qoi {
                    *count += 1;
                }
            }
        }
        Ok(counts)
    };
    let add = |a: Result<Vec<u64>, DetectError>, b: Result<Vec<u64>, DetectError>| {
        let (mut a, b) = (a?, b?);
        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        Ok(a)
    };
    let zero = || Ok(vec![0u64; detectors.len()]);
    let go = || (0..n_chunks).into_par_iter().map(run_chunk).reduce(zero, add);
    if workers == 0 {
        go()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool").install(go)
    }
}
