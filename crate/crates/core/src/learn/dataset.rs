//! Labelled training sets drawn from the simulator.
//!
//! Feature layout, for a trace of `L` intervals with `M` outputs per cell:
//! interval-major; within an interval, cell 1 before cell 2 (cloud only);
//! within a vector, the `M` real parts then the `M` imaginary parts. This is
//! the row order of the trace CSV with each interval's rows concatenated.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::airlink::{simulate_trace_into, CollectionTrace, ReceivedVector};
use crate::error::LearnError;
use crate::format::g17;
use crate::fronthaul::{quantize_trace_in_place, QuantizationSpec};
use crate::model::{Cell, Model};
use crate::rng::{derive_seed, label_hash, stream_rng};

/// What a dataset (and the network trained on it) predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Target {
    EdgeCell1,
    EdgeCell2,
    Cloud,
}

impl Target {
    pub fn edge(cell: Cell) -> Target {
        match cell {
            Cell::One => Target::EdgeCell1,
            Cell::Two => Target::EdgeCell2,
        }
    }

    pub fn classes(self) -> usize {
        match self {
            Target::Cloud => 4,
            _ => 2,
        }
    }

    /// Network output width: one logistic unit or four softmax units.
    pub fn outputs(self) -> usize {
        match self {
            Target::Cloud => 4,
            _ => 1,
        }
    }

    /// Feature count for `levels` outputs per cell and `l` intervals.
    pub fn input_dim(self, levels: usize, l: usize) -> usize {
        match self {
            Target::Cloud => 4 * levels * l,
            _ => 2 * levels * l,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Target::EdgeCell1 => "edge_cell1",
            Target::EdgeCell2 => "edge_cell2",
            Target::Cloud => "cloud",
        }
    }

    pub fn parse(s: &str) -> Option<Target> {
        [Target::EdgeCell1, Target::EdgeCell2, Target::Cloud].into_iter().find(|t| t.as_str() == s)
    }
}

/// `N` feature rows with labels. Edge labels are `theta^c`; cloud labels are
/// `2j + k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Row-major `N x dim`.
    pub inputs: Vec<f64>,
    pub dim: usize,
    pub labels: Vec<usize>,
    pub target: Target,
    /// Config text of the generating model.
    pub config_text: String,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// First `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset { inputs: self.inputs[..n * self.dim].to_vec(), labels: self.labels[..n].to_vec(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.is_empty() {
            return Err(LearnError::EmptyDataset);
        }
        if self.inputs.len() != self.len() * self.dim {
            return Err(LearnError::Format(format!(
                "{} values for {} rows of {} features",
                self.inputs.len(),
                self.len(),
                self.dim
            )));
        }
        let classes = self.target.classes();
        if let Some(&label) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(LearnError::Label { label, classes });
        }
        if let Some(i) = self.inputs.iter().position(|x| !x.is_finite()) {
            return Err(LearnError::NonFinite { row: i / self.dim, col: i % self.dim });
        }
        Ok(())
    }
}

fn push_vector(out: &mut Vec<f64>, y: &ReceivedVector) {
    out.extend(y.samples.iter().map(|s| s.re));
    out.extend(y.samples.iter().map(|s| s.im));
}

/// Append the features of `trace` for `target` to `out`.
pub fn push_features(out: &mut Vec<f64>, trace: &CollectionTrace, target: Target) {
    for rec in &trace.intervals {
        match target {
            Target::EdgeCell1 => push_vector(out, rec.get(Cell::One)),
            Target::EdgeCell2 => push_vector(out, rec.get(Cell::Two)),
            Target::Cloud => {
                push_vector(out, rec.get(Cell::One));
                push_vector(out, rec.get(Cell::Two));
            }
        }
    }
}

pub fn features(trace: &CollectionTrace, target: Target) -> Vec<f64> {
    let mut out = Vec::new();
    push_features(&mut out, trace, target);
    out
}

/// Label of a trace's true QoIs for `target`.
pub fn label_of(trace: &CollectionTrace, target: Target) -> usize {
    match target {
        Target::EdgeCell1 => trace.qoi.theta1.index(),
        Target::EdgeCell2 => trace.qoi.theta2.index(),
        Target::Cloud => trace.qoi.joint().index(),
    }
}

/// Draw `n` labelled samples. Sample `i` uses its own random stream, so the
/// result does not depend on the thread count. Cloud samples pass through
/// the fronthaul quantizer.
pub fn generate_dataset(
    model: &Model,
    n: usize,
    target: Target,
    spec: Option<&QuantizationSpec>,
    seed: u64,
) -> Result<Dataset, LearnError> {
    if n == 0 {
        return Err(LearnError::EmptyDataset);
    }
    if target == Target::Cloud && spec.is_none() {
        return Err(LearnError::MissingQuantization);
    }
    let dim = target.input_dim(model.levels(), model.l_intervals());
    let stream = derive_seed(seed, label_hash("dataset"));
    let rows: Vec<(Vec<f64>, usize)> = (0..n as u64)
        .into_par_iter()
        .map_init(
            || CollectionTrace::empty(model.levels(), model.l_intervals()),
            |trace, i| {
                let mut rng = stream_rng(stream, i);
                let qoi = model.sample_qoi_pair(&mut rng);
                simulate_trace_into(model, qoi, trace, &mut rng);
                if let (Target::Cloud, Some(spec)) = (target, spec) {
                    quantize_trace_in_place(trace, spec, &mut rng);
                }
                let mut row = Vec::with_capacity(dim);
                push_features(&mut row, trace, target);
                (row, label_of(trace, target))
            },
        )
        .collect();
    let mut inputs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (row, label) in rows {
        inputs.extend(row);
        labels.push(label);
    }
    Ok(Dataset { inputs, dim, labels, target, config_text: model.config().to_config_text(), seed })
}

/// Feature column names, in layout order.
pub fn feature_names(target: Target, levels: usize, l: usize) -> Vec<String> {
    let cells: &[u8] = match target {
        Target::EdgeCell1 => &[1],
        Target::EdgeCell2 => &[2],
        Target::Cloud => &[1, 2],
    };
    let mut names = Vec::with_capacity(target.input_dim(levels, l));
    for t in 1..=l {
        for c in cells {
            names.extend((1..=levels).map(|m| format!("l{t}_c{c}_re_{m}")));
            names.extend((1..=levels).map(|m| format!("l{t}_c{c}_im_{m}")));
        }
    }
    names
}

/// CSV with `#`-comment provenance lines (target, seed, config), a header,
/// then `label, features...` per row.
pub fn write_dataset_csv<W: Write>(mut out: W, ds: &Dataset, levels: usize, l: usize) -> Result<(), LearnError> {
    writeln!(out, "# target = {}", ds.target.as_str())?;
    writeln!(out, "# seed = {}", ds.seed)?;
    for line in ds.config_text.lines() {
        writeln!(out, "# {line}")?;
    }
    let names = feature_names(ds.target, levels, l);
    if names.len() != ds.dim {
        return Err(LearnError::InputDim { expected: names.len(), got: ds.dim });
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("label".to_string()).chain(names))?;
    let mut rec = Vec::with_capacity(ds.dim + 1);
    for i in 0..ds.len() {
        rec.clear();
        rec.push(ds.labels[i].to_string());
        rec.extend(ds.row(i).iter().map(|&x| g17(x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv<R: Read>(input: R) -> Result<Dataset, LearnError> {
    let mut text = String::new();
    let mut input = input;
    input.read_to_string(&mut text)?;
    let mut target = None;
    let mut seed = 0;
    let mut config_text = String::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("target = ") {
            target = Target::parse(v.trim());
        } else if let Some(v) = body.strip_prefix("seed = ") {
            seed = v.trim().parse().map_err(|_| LearnError::Format(format!("bad seed '{v}'")))?;
        } else {
            config_text.push_str(body);
            config_text.push('\n');
        }
    }
    let target = target.ok_or_else(|| LearnError::Format("missing '# target = ...' line".into()))?;
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let dim = rdr.headers()?.len().saturating_sub(1);
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut fields = rec.iter();
        let label = fields.next().unwrap_or("");
        labels.push(label.parse().map_err(|_| LearnError::Format(format!("bad label '{label}'")))?);
        for f in fields {
            inputs.push(f.parse().map_err(|_| LearnError::Format(format!("bad feature '{f}'")))?);
        }
    }
    let ds = Dataset { inputs, dim, labels, target, config_text, seed };
    ds.validate()?;
    Ok(ds)
}
