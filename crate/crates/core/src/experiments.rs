//! Parameter sweeps: error probabilities and exponents as CSV records.
//!
//! A figure is a list of series; each series sweeps one parameter over a
//! value list and emits one record per (value, detector). Every Monte Carlo
//! point draws its trials from a seed derived from the plan seed and the
//! value's position, so points are reproducible one by one with `pe --seed`.

use std::io::{Read, Write};

use crate::detect::{CloudDetector, DetectorKind, EdgeDetector, TruncationPolicy};
use crate::error::{Error, ExperimentError};
use crate::exponents::{exponent_report, ExponentReport};
use crate::format::g17;
use crate::fronthaul::{solve_quantization_variance, QuantizationSpec};
use crate::learn::{train_detector, LearnConfig};
use crate::model::{Model, SystemConfig};
use crate::montecarlo::{count_errors, PeEstimate, TraceDetector};
use crate::rng::{derive_seed, label_hash};

pub const DEFAULT_TRIALS: u64 = 100_000;

/// Pseudo-parameter that sets the training-set size of learned detectors.
pub const TRAIN_SIZE_PARAM: &str = "n_train";

/// Detector column for rows that carry only exponents.
pub const EXPONENT_ROW: &str = "exponents";

pub const CSV_COLUMNS: [&str; 13] = [
    "sweep",
    "param",
    "value",
    "detector",
    "pe",
    "ci_lo",
    "ci_hi",
    "trials",
    "e_edge",
    "e_cloud",
    "sigma2_q1",
    "sigma2_q2",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub sweep: String,
    pub param: String,
    pub value: f64,
    pub detector: String,
    pub pe: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    /// Zero for exponent-only rows.
    pub trials: u64,
    pub e_edge: Option<f64>,
    pub e_cloud: Option<f64>,
    pub sigma2_q: [Option<f64>; 2],
    pub seed: u64,
}

impl ExperimentRecord {
    /// The P_e columns as an estimate, for Monte Carlo rows.
    pub fn estimate(&self) -> Option<PeEstimate> {
        let pe = self.pe?;
        Some(PeEstimate {
            errors: (pe * self.trials as f64).round() as u64,
            trials: self.trials,
            pe,
            ci_lo: self.ci_lo?,
            ci_hi: self.ci_hi?,
        })
    }
}

/// One swept series.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    /// Series label written to the `sweep` column.
    pub sweep: String,
    pub base: SystemConfig,
    /// A config key, or [`TRAIN_SIZE_PARAM`].
    pub param: String,
    pub values: Vec<f64>,
    /// Empty for exponent-only series.
    pub detectors: Vec<DetectorKind>,
    /// Exponent-only series fail if the exponents cannot be computed; P_e
    /// series fill the exponent columns when they can.
    pub exponents_only: bool,
    pub trials: u64,
    pub seed: u64,
    pub learn: LearnConfig,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<(), Error> {
        if self.values.is_empty() {
            return Err(ExperimentError::NoValues.into());
        }
        if !self.exponents_only && self.trials == 0 {
            return Err(ExperimentError::NoTrials.into());
        }
        if self.param != TRAIN_SIZE_PARAM {
            let mut probe = self.base.clone();
            probe
                .set(&self.param, &g17(self.values[0]))
                .map_err(|_| ExperimentError::BadParameter(self.param.clone()))?;
        }
        Ok(())
    }

    /// Model and learning settings at one sweep value.
    pub fn point(&self, value: f64) -> Result<(Model, LearnConfig), Error> {
        let mut cfg = self.base.clone();
        let mut learn = self.learn.clone();
        if self.param == TRAIN_SIZE_PARAM {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(ExperimentError::BadParameter(format!("{TRAIN_SIZE_PARAM} = {value}")).into());
            }
            learn.n_samples = value as usize;
        } else {
            cfg.set(&self.param, &g17(value))?;
        }
        Ok((Model::new(cfg)?, learn))
    }

    /// Seed of the Monte Carlo trials at value index `i`.
    pub fn point_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, i as u64)
    }
}

/// A named set of series.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub name: String,
    pub series: Vec<SweepPlan>,
}

/// Settings shared by every series of a named figure.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureOptions {
    pub base: SystemConfig,
    pub trials: u64,
    pub seed: u64,
    pub learn: LearnConfig,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions { base: SystemConfig::default(), trials: DEFAULT_TRIALS, seed: 1, learn: LearnConfig::default() }
    }
}

pub const FIGURE_NAMES: [&str; 8] = ["fig3", "fig4", "fig5", "fig6", "fig7", "fig7b", "fig8", "slope"];

/// Config with the M = 2 pmfs of the small slope instance.
pub fn small_instance(base: &SystemConfig) -> SystemConfig {
    let h0 = vec![0.7, 0.3];
    let h1 = vec![0.3, 0.7];
    SystemConfig {
        m_levels: 2,
        lambda: 6.0,
        sigma2_g: 1.0,
        mu_g: 1.0,
        snr_db: 3.0,
        pmfs: [[h0.clone(), h1.clone()], [h0, h1]],
        ..base.clone()
    }
}

/// Built-in plans. Parameters each plan pins override the
/// base config; everything else comes from `opts.base`.
pub fn named_figure(name: &str, opts: &FigureOptions) -> Result<Figure, Error> {
    use DetectorKind::*;
    let series =
        |sweep: String, base: SystemConfig, param: &str, values: &[f64], detectors: &[DetectorKind]| SweepPlan {
            sweep,
            base,
            param: param.to_string(),
            values: values.to_vec(),
            detectors: detectors.to_vec(),
            exponents_only: detectors.is_empty(),
            trials: opts.trials,
            seed: derive_seed(opts.seed, label_hash(name)),
            learn: opts.learn.clone(),
        };
    let b = &opts.base;
    let optimal = [EdgeOptimal, CloudOptimal];
    let mut out = Vec::new();
    match name {
        "fig3" => {
            let grid = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0];
            for c in [0.5, 5.0] {
                let base = SystemConfig { mu_g: 0.0, fronthaul_capacity: c, ..b.clone() };
                out.push(series(format!("fig3[C={}]", g17(c)), base, "sigma2_g", &grid, &[]));
            }
        }
        "fig4" => {
            let grid = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0];
            for snr in [3.0, 8.0] {
                let base = SystemConfig { mu_g: 0.0, sigma2_g: 1.0, snr_db: snr, ..b.clone() };
                out.push(series(format!("fig4[snr_db={}]", g17(snr)), base, "fronthaul_capacity", &grid, &[]));
            }
        }
        "fig5" => {
            let grid = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
            for mode in [crate::ReuseMode::NonOrthogonal, crate::ReuseMode::Orthogonal] {
                let base = SystemConfig { l_intervals: 5, reuse_mode: mode, ..b.clone() };
                out.push(series(format!("fig5[reuse_mode={}]", mode.as_str()), base, "sigma2_g", &grid, &optimal));
            }
        }
        "fig6" => {
            let base = SystemConfig { l_intervals: 5, rho: 0.85, ..b.clone() };
            out.push(series("fig6".into(), base, "fronthaul_capacity", &[0.25, 0.5, 1.0, 2.0, 5.0, 10.0], &optimal));
        }
        "fig7" => {
            let base = SystemConfig { l_intervals: 5, fronthaul_capacity: 5.0, ..b.clone() };
            let grid = [0.0, 0.25, 0.5, 0.75, 0.85, 0.95];
            out.push(series("fig7".into(), base, "rho", &grid, &DetectorKind::ALL));
        }
        "fig7b" => {
            let grid = [-5.0, 0.0, 5.0, 10.0, 15.0, 20.0];
            for s2g in [1.0, 10.0] {
                let base =
                    SystemConfig { l_intervals: 10, lambda: 8.0, fronthaul_capacity: 10.0, sigma2_g: s2g, ..b.clone() };
                out.push(series(format!("fig7b[sigma2_g={}]", g17(s2g)), base, "snr_db", &grid, &optimal));
            }
        }
        "fig8" => {
            let base = SystemConfig { l_intervals: 5, fronthaul_capacity: 5.0, ..b.clone() };
            out.push(series("fig8".into(), base, TRAIN_SIZE_PARAM, &[100.0, 1000.0, 10_000.0], &DetectorKind::ALL));
        }
        "slope" => {
            out.push(series(
                "slope".into(),
                small_instance(b),
                "l_intervals",
                &[5.0, 10.0, 20.0, 40.0],
                &[EdgeOptimal],
            ));
        }
        other => return Err(ExperimentError::UnknownPlan(other.to_string()).into()),
    }
    Ok(Figure { name: name.to_string(), series: out })
}

/// Shared-trial P_e of several detectors on one model. Learned detectors are
/// trained first on data drawn from `derive_seed(seed, "train")`; the
/// evaluation trials use `seed` itself. Returns the estimates and the
/// quantization spec when a cloud detector needed one.
pub fn estimate_pe_shared(
    model: &Model,
    kinds: &[DetectorKind],
    n_trials: u64,
    seed: u64,
    learn: &LearnConfig,
) -> Result<(Vec<PeEstimate>, Option<QuantizationSpec>), Error> {
    if n_trials == 0 {
        return Err(ExperimentError::NoTrials.into());
    }
    let spec = if kinds.iter().any(|k| k.is_cloud()) { Some(solve_quantization_variance(model)?) } else { None };
    let policy = TruncationPolicy::default();
    let train_seed = derive_seed(seed, label_hash("train"));
    let mut owned: Vec<Box<dyn TraceDetector>> = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        owned.push(match kind {
            DetectorKind::EdgeOptimal => Box::new(EdgeDetector::new(model, &policy)),
            DetectorKind::CloudOptimal => Box::new(CloudDetector::new(model, spec.as_ref().expect("spec"), &policy)),
            DetectorKind::EdgeLearned | DetectorKind::CloudLearned => {
                Box::new(train_detector(model, kind, spec.as_ref(), learn, train_seed)?.detector)
            }
        });
    }
    let refs: Vec<&dyn TraceDetector> = owned.iter().map(|d| d.as_ref()).collect();
    let counts = count_errors(model, spec.as_ref(), &refs, n_trials, seed, 0)?;
    Ok((counts.into_iter().map(|c| PeEstimate::from_counts(c, n_trials)).collect(), spec))
}

/// P_e records (sweep `pe`) for several detectors on shared trials.
pub fn pe_records(
    model: &Model,
    kinds: &[DetectorKind],
    n_trials: u64,
    seed: u64,
    learn: &LearnConfig,
) -> Result<Vec<ExperimentRecord>, Error> {
    let (ests, spec) = estimate_pe_shared(model, kinds, n_trials, seed, learn)?;
    let exps = exponent_report(model).ok().map(|r| (r.e_edge(), r.e_cloud()));
    Ok(kinds.iter().zip(&ests).map(|(k, e)| pe_record("pe", "none", 0.0, *k, e, exps, spec.as_ref(), seed)).collect())
}

/// Single-detector P_e record.
pub fn estimate_pe(
    model: &Model,
    kind: DetectorKind,
    n_trials: u64,
    seed: u64,
    learn: &LearnConfig,
) -> Result<ExperimentRecord, Error> {
    Ok(pe_records(model, &[kind], n_trials, seed, learn)?.remove(0))
}

/// Exponent-only row.
pub fn exponent_record(sweep: &str, param: &str, value: f64, r: &ExponentReport, seed: u64) -> ExperimentRecord {
    ExperimentRecord {
        sweep: sweep.to_string(),
        param: param.to_string(),
        value,
        detector: EXPONENT_ROW.to_string(),
        pe: None,
        ci_lo: None,
        ci_hi: None,
        trials: 0,
        e_edge: Some(r.e_edge()),
        e_cloud: Some(r.e_cloud()),
        sigma2_q: [Some(r.spec.sigma2_q[0]), Some(r.spec.sigma2_q[1])],
        seed,
    }
}

#[allow(clippy::too_many_arguments)]
fn pe_record(
    sweep: &str,
    param: &str,
    value: f64,
    kind: DetectorKind,
    est: &PeEstimate,
    exps: Option<(f64, f64)>,
    spec: Option<&QuantizationSpec>,
    seed: u64,
) -> ExperimentRecord {
    ExperimentRecord {
        sweep: sweep.to_string(),
        param: param.to_string(),
        value,
        detector: kind.as_str().to_string(),
        pe: Some(est.pe),
        ci_lo: Some(est.ci_lo),
        ci_hi: Some(est.ci_hi),
        trials: est.trials,
        e_edge: exps.map(|e| e.0),
        e_cloud: exps.map(|e| e.1),
        sigma2_q: match (kind.is_cloud(), spec) {
            (true, Some(s)) => [Some(s.sigma2_q[0]), Some(s.sigma2_q[1])],
            _ => [None, None],
        },
        seed,
    }
}

/// Run one series.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<ExperimentRecord>, Error> {
    plan.validate()?;
    let mut out = Vec::new();
    for (i, &value) in plan.values.iter().enumerate() {
        let (model, learn) = plan.point(value)?;
        if plan.exponents_only {
            let r = exponent_report(&model)?;
            out.push(exponent_record(&plan.sweep, &plan.param, value, &r, plan.seed));
            continue;
        }
        let seed = plan.point_seed(i);
        let (ests, spec) = estimate_pe_shared(&model, &plan.detectors, plan.trials, seed, &learn)?;
        // rho at 0 or 1 has no edge exponent; leave the columns empty there
        let exps = exponent_report(&model).ok().map(|r| (r.e_edge(), r.e_cloud()));
        for (kind, est) in plan.detectors.iter().zip(&ests) {
            out.push(pe_record(&plan.sweep, &plan.param, value, *kind, est, exps, spec.as_ref(), seed));
        }
    }
    Ok(out)
}

/// Run every series of a figure on `workers` threads (0: rayon's default).
/// The output does not depend on `workers`.
pub fn run_figure(fig: &Figure, workers: usize) -> Result<Vec<ExperimentRecord>, Error> {
    for s in &fig.series {
        s.validate()?;
    }
    let go = || -> Result<Vec<ExperimentRecord>, Error> {
        let mut out = Vec::new();
        for s in &fig.series {
            out.extend(run_sweep(s)?);
        }
        Ok(out)
    };
    with_workers(workers, go)
}

/// Run `f` inside a pool of `workers` threads, or directly when `workers` is 0.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool").install(f)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(g17).unwrap_or_default()
}

/// Header plus one row per record; floats at 17 significant digits, empty
/// cells for absent values.
pub fn write_records_csv<W: Write>(out: W, records: &[ExperimentRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.sweep.clone(),
            r.param.clone(),
            g17(r.value),
            r.detector.clone(),
            opt(r.pe),
            opt(r.ci_lo),
            opt(r.ci_hi),
            r.trials.to_string(),
            opt(r.e_edge),
            opt(r.e_cloud),
            opt(r.sigma2_q[0]),
            opt(r.sigma2_q[1]),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write records to `path`, reporting the path on failure.
pub fn emit_csv(path: &std::path::Path, records: &[ExperimentRecord]) -> Result<(), ExperimentError> {
    let io = |source: std::io::Error| ExperimentError::Io { path: path.display().to_string(), source };
    let file = std::fs::File::create(path).map_err(io)?;
    write_records_csv(std::io::BufWriter::new(file), records).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => io(source),
        kind => {
            ExperimentError::Io { path: path.display().to_string(), source: std::io::Error::other(format!("{kind:?}")) }
        }
    })
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<ExperimentRecord>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(input);
    let bad = |what: String| ExperimentError::Io { path: "<csv>".into(), source: std::io::Error::other(what) };
    if rdr.headers()?.iter().ne(CSV_COLUMNS) {
        return Err(bad("unexpected header".into()));
    }
    let num = |s: &str| -> Result<Option<f64>, ExperimentError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| bad(format!("bad number '{s}'")))
        }
    };
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad integer '{s}'")));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let r = rec?;
        out.push(ExperimentRecord {
            sweep: r[0].to_string(),
            param: r[1].to_string(),
            value: num(&r[2])?.ok_or_else(|| bad("missing value".into()))?,
            detector: r[3].to_string(),
            pe: num(&r[4])?,
            ci_lo: num(&r[5])?,
            ci_hi: num(&r[6])?,
            trials: int(&r[7])?,
            e_edge: num(&r[8])?,
            e_cloud: num(&r[9])?,
            sigma2_q: [num(&r[10])?, num(&r[11])?],
            seed: int(&r[12])?,
        });
    }
    Ok(out)
}

/// Least-squares slope of `-ln P_e` against `L`, skipping points with no
/// errors. `None` with fewer than two usable points.
pub fn fit_log_slope(points: &[(f64, PeEstimate)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(_, e)| e.errors > 0).map(|(l, e)| (*l, -e.pe.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
