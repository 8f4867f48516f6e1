//! Matched-filter-level simulation of the TBMA uplink.
//!
//! Each collection interval draws a Poisson number of active devices per
//! cell, lets every device pick its waveform from the observation pmf of its
//! cell's QoI, and superimposes the faded contributions plus receiver noise
//! on the `M` (or `M/2`) matched-filter outputs of each edge node.
//!
//! Complex Gaussian convention used everywhere in the crate: `CN(mu, v)` has
//! a real mean `mu` and total variance `v`, split equally between the real and
//! imaginary parts. Its density is `exp(-|y - mu|^2 / v) / (pi v)`.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;

use crate::error::LearnError;
use crate::format::g17;
use crate::model::{Cell, Hypothesis, Model, QoiPair, ReuseMode};
use crate::rng::{categorical, poisson, standard_normal};

/// Draw from `CN(mean, var)`.
#[inline]
pub fn sample_complex_normal<R: Rng + ?Sized>(mean: f64, var: f64, rng: &mut R) -> Complex64 {
    let sd = (0.5 * var).sqrt();
    Complex64::new(mean + sd * standard_normal(rng), sd * standard_normal(rng))
}

/// `log CN(y | mean, var)`.
#[inline]
pub fn complex_normal_logpdf(y: Complex64, mean: f64, var: f64) -> f64 {
    let d = (y.re - mean) * (y.re - mean) + y.im * y.im;
    -(std::f64::consts::PI * var).ln() - d / var
}

/// Matched-filter output of one edge node in one collection interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedVector {
    pub cell: Cell,
    /// One-based collection index.
    pub interval: usize,
    pub samples: Vec<Complex64>,
}

impl ReceivedVector {
    pub fn zeros(cell: Cell, interval: usize, len: usize) -> Self {
        ReceivedVector { cell, interval, samples: vec![Complex64::new(0.0, 0.0); len] }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// One simulated collection interval for both cells.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalRecord {
    /// Active devices per cell.
    pub n: [u32; 2],
    /// Devices per transmitted waveform index, per cell.
    pub level_counts: [Vec<u32>; 2],
    pub received: [ReceivedVector; 2],
}

impl IntervalRecord {
    pub fn empty(levels: usize, interval: usize) -> Self {
        IntervalRecord {
            n: [0, 0],
            level_counts: [vec![0; levels], vec![0; levels]],
            received: [
                ReceivedVector::zeros(Cell::One, interval, levels),
                ReceivedVector::zeros(Cell::Two, interval, levels),
            ],
        }
    }

    pub fn get(&self, cell: Cell) -> &ReceivedVector {
        &self.received[cell.index()]
    }
}

/// `L` conditionally i.i.d. intervals for a fixed QoI pair.
#[derive(Clone, Debug, PartialEq)]
pub struct CollectionTrace {
    pub qoi: QoiPair,
    pub intervals: Vec<IntervalRecord>,
}

impl CollectionTrace {
    pub fn empty(levels: usize, l: usize) -> Self {
        CollectionTrace {
            qoi: QoiPair::new(Hypothesis::Theta0, Hypothesis::Theta0),
            intervals: (1..=l).map(|i| IntervalRecord::empty(levels, i)).collect(),
        }
    }

    /// The `L` received vectors of one cell, in interval order.
    pub fn cell_vectors(&self, cell: Cell) -> impl Iterator<Item = &ReceivedVector> + '_ {
        self.intervals.iter().map(move |iv| iv.get(cell))
    }
}

/// Waveform index a device transmits for observation `x` (zero-based):
/// `x` itself, or `x / 2` under orthogonal reuse (levels `2m-1, 2m` merge).
#[inline]
pub fn transmitted_index(mode: ReuseMode, x: usize) -> usize {
    match mode {
        ReuseMode::NonOrthogonal => x,
        ReuseMode::Orthogonal => x / 2,
    }
}

fn draw_devices<R: Rng + ?Sized>(model: &Model, cell: Cell, hyp: Hypothesis, counts: &mut [u32], rng: &mut R) -> u32 {
    counts.iter_mut().for_each(|c| *c = 0);
    let n = poisson(model.lambda(), rng);
    let pmf = model.device_pmf(cell, hyp);
    let mode = model.reuse_mode();
    for _ in 0..n {
        counts[transmitted_index(mode, categorical(pmf, rng))] += 1;
    }
    n
}

/// Superimpose the channels: `count` i.i.d. `CN(mu, s2)` coefficients on the
/// same waveform sum to `CN(count * mu, count * s2)`.
#[inline]
fn faded_sum<R: Rng + ?Sized>(count: u32, mu: f64, s2: f64, rng: &mut R) -> Complex64 {
    if count == 0 || (mu == 0.0 && s2 == 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    let n = count as f64;
    if s2 == 0.0 {
        Complex64::new(n * mu, 0.0)
    } else {
        sample_complex_normal(n * mu, n * s2, rng)
    }
}

/// Fill `rec` with a fresh interval draw. Works for both reuse modes; under
/// orthogonal reuse the model's inter-cell channel is zero, so the
/// cross-cell term vanishes.
pub fn simulate_interval_into<R: Rng + ?Sized>(model: &Model, qoi: QoiPair, rec: &mut IntervalRecord, rng: &mut R) {
    let levels = model.levels();
    for cell in Cell::BOTH {
        let i = cell.index();
        rec.level_counts[i].resize(levels, 0);
        rec.n[i] = draw_devices(model, cell, qoi.get(cell), &mut rec.level_counts[i], rng);
    }
    let (mu_h, s2_h, mu_g, s2_g, w0) =
        (model.mu_h(), model.sigma2_h(), model.mu_g(), model.sigma2_g(), model.noise_var());
    for cell in Cell::BOTH {
        let own = &rec.level_counts[cell.index()];
        let other = &rec.level_counts[cell.other().index()];
        let out = &mut rec.received[cell.index()];
        out.cell = cell;
        out.samples.resize(levels, Complex64::new(0.0, 0.0));
        for m in 0..levels {
            out.samples[m] = faded_sum(own[m], mu_h, s2_h, rng)
                + faded_sum(other[m], mu_g, s2_g, rng)
                + sample_complex_normal(0.0, w0, rng);
        }
    }
}

/// One non-orthogonal interval. Panics on an orthogonal-reuse model.
pub fn simulate_interval<R: Rng + ?Sized>(model: &Model, qoi: QoiPair, rng: &mut R) -> IntervalRecord {
    assert_eq!(model.reuse_mode(), ReuseMode::NonOrthogonal, "simulate_interval needs non-orthogonal reuse");
    let mut rec = IntervalRecord::empty(model.levels(), 1);
    simulate_interval_into(model, qoi, &mut rec, rng);
    rec
}

/// One orthogonal-reuse interval: `M/2` outputs, no inter-cell term.
pub fn simulate_interval_orthogonal<R: Rng + ?Sized>(model: &Model, qoi: QoiPair, rng: &mut R) -> IntervalRecord {
    assert_eq!(model.reuse_mode(), ReuseMode::Orthogonal, "simulate_interval_orthogonal needs orthogonal reuse");
    let mut rec = IntervalRecord::empty(model.levels(), 1);
    simulate_interval_into(model, qoi, &mut rec, rng);
    rec
}

/// Refill `trace` with `L` intervals under `qoi`, reusing its buffers.
pub fn simulate_trace_into<R: Rng + ?Sized>(model: &Model, qoi: QoiPair, trace: &mut CollectionTrace, rng: &mut R) {
    let l = model.l_intervals();
    let levels = model.levels();
    trace.qoi = qoi;
    trace.intervals.truncate(l);
    while trace.intervals.len() < l {
        let idx = trace.intervals.len() + 1;
        trace.intervals.push(IntervalRecord::empty(levels, idx));
    }
    for (i, rec) in trace.intervals.iter_mut().enumerate() {
        rec.received[0].interval = i + 1;
        rec.received[1].interval = i + 1;
        simulate_interval_into(model, qoi, rec, rng);
    }
}

pub fn simulate_trace<R: Rng + ?Sized>(model: &Model, qoi: QoiPair, rng: &mut R) -> CollectionTrace {
    let mut trace = CollectionTrace::empty(model.levels(), model.l_intervals());
    simulate_trace_into(model, qoi, &mut trace, rng);
    trace
}

/// Header of the trace CSV layout for `levels` samples per vector.
pub fn trace_csv_header(levels: usize) -> Vec<String> {
    let mut h = vec!["trial".to_string(), "interval".into(), "cell".into()];
    h.extend((1..=levels).map(|m| format!("re_{m}")));
    h.extend((1..=levels).map(|m| format!("im_{m}")));
    h.extend(["theta1", "theta2", "n1", "n2"].map(String::from));
    h
}

/// Write traces, one row per interval per cell, with a header row.
pub fn write_trace_csv<'a, W: Write>(
    out: W,
    levels: usize,
    traces: impl IntoIterator<Item = (u64, &'a CollectionTrace)>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_csv_header(levels))?;
    let mut row: Vec<String> = Vec::with_capacity(2 * levels + 7);
    for (trial, trace) in traces {
        for rec in &trace.intervals {
            for rv in &rec.received {
                row.clear();
                row.push(trial.to_string());
                row.push(rv.interval.to_string());
                row.push(rv.cell.number().to_string());
                row.extend(rv.samples.iter().map(|s| g17(s.re)));
                row.extend(rv.samples.iter().map(|s| g17(s.im)));
                row.push(trace.qoi.theta1.index().to_string());
                row.push(trace.qoi.theta2.index().to_string());
                row.push(rec.n[0].to_string());
                row.push(rec.n[1].to_string());
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read traces written by [`write_trace_csv`]. Per-level counts are not part
/// of the file and come back as zeros.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<(u64, CollectionTrace)>, LearnError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let cols = header.len();
    if cols < 9 || (cols - 7) % 2 != 0 {
        return Err(LearnError::Format(format!("unexpected trace header with {cols} columns")));
    }
    let levels = (cols - 7) / 2;
    let bad = |what: &str| LearnError::Format(format!("bad {what} in trace file"));
    let mut out: Vec<(u64, CollectionTrace)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&header[i]));
        let trial: u64 = rec[0].parse().map_err(|_| bad("trial"))?;
        let interval: usize = rec[1].parse().map_err(|_| bad("interval"))?;
        let cell = rec[2].parse::<u8>().ok().and_then(Cell::from_number).ok_or_else(|| bad("cell"))?;
        let hyp = |i: usize| rec[i].parse::<usize>().ok().and_then(Hypothesis::from_index).ok_or_else(|| bad("theta"));
        let qoi = QoiPair::new(hyp(3 + 2 * levels)?, hyp(4 + 2 * levels)?);
        let n1: u32 = rec[5 + 2 * levels].parse().map_err(|_| bad("n1"))?;
        let n2: u32 = rec[6 + 2 * levels].parse().map_err(|_| bad("n2"))?;
        let mut samples = Vec::with_capacity(levels);
        for m in 0..levels {
            samples.push(Complex64::new(num(3 + m)?, num(3 + levels + m)?));
        }
        if out.last().map(|(t, _)| *t) != Some(trial) {
            out.push((trial, CollectionTrace { qoi, intervals: Vec::new() }));
        }
        let trace = &mut out.last_mut().expect("pushed above").1;
        if interval == 0 {
            return Err(bad("interval"));
        }
        while trace.intervals.len() < interval {
            let idx = trace.intervals.len() + 1;
            trace.intervals.push(IntervalRecord::empty(levels, idx));
        }
        let iv = &mut trace.intervals[interval - 1];
        iv.n = [n1, n2];
        iv.received[cell.index()] = ReceivedVector { cell, interval, samples };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemConfig;
    use crate::rng::stream_rng;

    fn model_with(pairs: &[(&str, &str)]) -> Model {
        let mut cfg = SystemConfig::default();
        for (k, v) in pairs {
            cfg.set(k, v).unwrap();
        }
        Model::new(cfg).unwrap()
    }

    const H00: QoiPair = QoiPair { theta1: Hypothesis::Theta0, theta2: Hypothesis::Theta0 };

    #[test]
    fn noiseless_samples_count_devices() {
        let model = model_with(&[("sigma2_h", "0"), ("mu_g", "0"), ("sigma2_g", "0"), ("snr_db", "300")]);
        let mut rng = stream_rng(1, 0);
        for _ in 0..200 {
            let rec = simulate_interval(&model, H00, &mut rng);
            for cell in Cell::BOTH {
                let rv = rec.get(cell);
                for (m, s) in rv.samples.iter().enumerate() {
                    assert!((s.re - rec.level_counts[cell.index()][m] as f64).abs() < 1e-9);
                    assert!(s.im.abs() < 1e-9);
                }
                assert_eq!(rec.level_counts[cell.index()].iter().sum::<u32>(), rec.n[cell.index()]);
            }
        }
    }

    #[test]
    fn orthogonal_maps_levels_pairwise() {
        assert_eq!(transmitted_index(ReuseMode::Orthogonal, 2), 1); // X = 3 -> index 2 (one-based)
        assert_eq!(transmitted_index(ReuseMode::Orthogonal, 0), 0);
        assert_eq!(transmitted_index(ReuseMode::Orthogonal, 3), 1);
        assert_eq!(transmitted_index(ReuseMode::NonOrthogonal, 3), 3);
    }

    #[test]
    fn orthogonal_noiseless_counts_and_no_cross_term() {
        // mu_g, sigma2_g are huge but must not matter under orthogonal reuse.
        let model = model_with(&[
            ("reuse_mode", "orthogonal"),
            ("sigma2_h", "0"),
            ("mu_g", "50"),
            ("sigma2_g", "1000"),
            ("snr_db", "300"),
        ]);
        let mut rng = stream_rng(2, 0);
        for _ in 0..200 {
            let rec = simulate_interval_orthogonal(&model, H00, &mut rng);
            for cell in Cell::BOTH {
                let rv = rec.get(cell);
                assert_eq!(rv.len(), 2);
                for (m, s) in rv.samples.iter().enumerate() {
                    assert!((s.re - rec.level_counts[cell.index()][m] as f64).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn no_devices_leaves_pure_noise() {
        // lambda tiny: almost surely no devices; mean of noise is zero.
        let model = model_with(&[("lambda", "1e-300")]);
        let mut rng = stream_rng(3, 0);
        let n = 50_000;
        let mut sum = Complex64::new(0.0, 0.0);
        let mut pow = 0.0;
        for _ in 0..n {
            let rec = simulate_interval(&model, H00, &mut rng);
            assert_eq!(rec.n, [0, 0]);
            sum += rec.received[0].samples[0];
            pow += rec.received[0].samples[0].norm_sqr();
        }
        let w0 = model.noise_var();
        let se = (w0 / n as f64).sqrt();
        assert!(sum.re.abs() / (n as f64) < 4.0 * se);
        assert!((pow / n as f64 / w0 - 1.0).abs() < 0.03);
    }

    #[test]
    fn conditional_gaussian_given_counts() {
        // With counts fixed, sample m is CN(n1 mu_h + n2 mu_g, n1 s2_h + n2 s2_g + W0).
        let model = model_with(&[("mu_h", "1.5"), ("sigma2_h", "0.7"), ("mu_g", "0.4"), ("sigma2_g", "2.0")]);
        let mut rng = stream_rng(4, 0);
        let (n1, n2) = (3u32, 2u32);
        let reps = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..reps {
            let y = faded_sum(n1, 1.5, 0.7, &mut rng)
                + faded_sum(n2, 0.4, 2.0, &mut rng)
                + sample_complex_normal(0.0, model.noise_var(), &mut rng);
            s += y.re;
            s2 += (y.re - 5.3).powi(2) + y.im * y.im;
        }
        let var = 3.0 * 0.7 + 2.0 * 2.0 + model.noise_var();
        assert!((s / reps as f64 - 5.3).abs() < 4.0 * (var / 2.0 / reps as f64).sqrt());
        assert!((s2 / reps as f64 / var - 1.0).abs() < 0.02);
    }

    #[test]
    fn trace_shape_and_determinism() {
        let model = Model::new(SystemConfig::default()).unwrap();
        let a = simulate_trace(&model, H00, &mut stream_rng(9, 4));
        let b = simulate_trace(&model, H00, &mut stream_rng(9, 4));
        assert_eq!(a, b);
        assert_eq!(a.intervals.len(), 5);
        for (i, iv) in a.intervals.iter().enumerate() {
            for rv in &iv.received {
                assert_eq!(rv.len(), 4);
                assert_eq!(rv.interval, i + 1);
                assert!(rv.samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
            }
        }
        let one = model.with("l_intervals", "1").unwrap();
        assert_eq!(simulate_trace(&one, H00, &mut stream_rng(1, 1)).intervals.len(), 1);
    }

    #[test]
    fn trace_csv_round_trip() {
        let model = Model::new(SystemConfig::default()).unwrap();
        let mut rng = stream_rng(5, 0);
        let traces: Vec<(u64, CollectionTrace)> = (0..3)
            .map(|t| {
                let q = model.sample_qoi_pair(&mut rng);
                (t, simulate_trace(&model, q, &mut rng))
            })
            .collect();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, 4, traces.iter().map(|(t, tr)| (*t, tr))).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("trial,interval,cell,re_1,re_2,re_3,re_4,im_1,im_2,im_3,im_4,theta1,theta2,n1,n2\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 5 * 2);
        let back = read_trace_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for ((t0, a), (t1, b)) in traces.iter().zip(&back) {
            assert_eq!(t0, t1);
            assert_eq!(a.qoi, b.qoi);
            for (x, y) in a.intervals.iter().zip(&b.intervals) {
                assert_eq!(x.received, y.received);
                assert_eq!(x.n, y.n);
            }
        }
    }
}
