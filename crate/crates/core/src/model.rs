//! System parameters, QoI priors and per-cell observation distributions.
//!
//! [`SystemConfig`] is the raw, user-editable parameter set (read from a
//! `key = value` file). [`Model`] is the validated, immutable view every other
//! module consumes; it resolves the frequency-reuse mode once, so downstream
//! code sees the effective number of levels, the effective (possibly
//! coarsened) pmfs and the effective interference channel.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::ConfigError;

/// Tolerance on pmf normalization.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Frequency reuse across the two cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReuseMode {
    /// Both cells share all `M` waveforms (inter-cell interference present).
    NonOrthogonal,
    /// Each cell gets `M/2` waveforms; no inter-cell interference.
    Orthogonal,
}

impl ReuseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReuseMode::NonOrthogonal => "non_orthogonal",
            ReuseMode::Orthogonal => "orthogonal",
        }
    }
}

impl FromStr for ReuseMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "non_orthogonal" | "nonorthogonal" => Ok(ReuseMode::NonOrthogonal),
            "orthogonal" => Ok(ReuseMode::Orthogonal),
            other => Err(format!("unknown reuse mode '{other}'")),
        }
    }
}

/// Cell index. The system always has exactly two cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cell {
    One,
    Two,
}

impl Cell {
    pub const BOTH: [Cell; 2] = [Cell::One, Cell::Two];

    /// Zero-based index, for array access.
    pub fn index(self) -> usize {
        match self {
            Cell::One => 0,
            Cell::Two => 1,
        }
    }

    pub fn other(self) -> Cell {
        match self {
            Cell::One => Cell::Two,
            Cell::Two => Cell::One,
        }
    }

    /// One-based number as used in file formats.
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Cell> {
        match n {
            1 => Some(Cell::One),
            2 => Some(Cell::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Binary QoI value: `Theta0` or `Theta1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hypothesis {
    Theta0,
    Theta1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::Theta0, Hypothesis::Theta1];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::Theta0 => 0,
            Hypothesis::Theta1 => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Hypothesis> {
        match i {
            0 => Some(Hypothesis::Theta0),
            1 => Some(Hypothesis::Theta1),
            _ => None,
        }
    }

    pub fn flip(self) -> Hypothesis {
        match self {
            Hypothesis::Theta0 => Hypothesis::Theta1,
            Hypothesis::Theta1 => Hypothesis::Theta0,
        }
    }
}

/// The pair of QoI values (one per cell) for a collection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QoiPair {
    pub theta1: Hypothesis,
    pub theta2: Hypothesis,
}

impl QoiPair {
    pub fn new(theta1: Hypothesis, theta2: Hypothesis) -> Self {
        QoiPair { theta1, theta2 }
    }

    pub fn get(&self, cell: Cell) -> Hypothesis {
        match cell {
            Cell::One => self.theta1,
            Cell::Two => self.theta2,
        }
    }

    pub fn joint(&self) -> JointHypothesis {
        JointHypothesis::new(self.theta1, self.theta2)
    }
}

/// `H_jk`: cell 1 holds `theta_j`, cell 2 holds `theta_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointHypothesis {
    pub j: Hypothesis,
    pub k: Hypothesis,
}

impl JointHypothesis {
    /// All four hypotheses in lexicographic order `H00, H01, H10, H11`.
    pub const ALL: [JointHypothesis; 4] = [
        JointHypothesis { j: Hypothesis::Theta0, k: Hypothesis::Theta0 },
        JointHypothesis { j: Hypothesis::Theta0, k: Hypothesis::Theta1 },
        JointHypothesis { j: Hypothesis::Theta1, k: Hypothesis::Theta0 },
        JointHypothesis { j: Hypothesis::Theta1, k: Hypothesis::Theta1 },
    ];

    pub fn new(j: Hypothesis, k: Hypothesis) -> Self {
        JointHypothesis { j, k }
    }

    /// Label `2j + k`.
    pub fn index(self) -> usize {
        2 * self.j.index() + self.k.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        JointHypothesis::ALL.get(i).copied()
    }

    pub fn qoi(self) -> QoiPair {
        QoiPair::new(self.j, self.k)
    }
}

impl fmt::Display for JointHypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}{}", self.j.index(), self.k.index())
    }
}

/// Every scalar model parameter plus the four observation pmfs.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemConfig {
    /// Mean number of active devices per cell per collection interval.
    pub lambda: f64,
    pub snr_db: f64,
    pub m_levels: usize,
    pub l_intervals: usize,
    /// Probability that the two QoIs agree.
    pub rho: f64,
    /// Fronthaul capacity in bit/s/Hz.
    pub fronthaul_capacity: f64,
    pub mu_h: f64,
    pub sigma2_h: f64,
    pub mu_g: f64,
    pub sigma2_g: f64,
    pub reuse_mode: ReuseMode,
    /// `pmfs[cell][hypothesis]`, each of length `m_levels`.
    pub pmfs: [[Vec<f64>; 2]; 2],
    /// Fronthaul constraint form: `true` is the per-dimension rate-distortion
    /// form, `false` the alternative with `(sigma_q^2)^M` in every term.
    pub fronthaul_per_dim_form: bool,
}

const DEFAULT_PMF_H0: [f64; 4] = [0.4, 0.3, 0.2, 0.1];

impl Default for SystemConfig {
    fn default() -> Self {
        let h0 = DEFAULT_PMF_H0.to_vec();
        let h1: Vec<f64> = DEFAULT_PMF_H0.iter().rev().copied().collect();
        SystemConfig {
            lambda: 4.0,
            snr_db: 3.0,
            m_levels: 4,
            l_intervals: 5,
            rho: 0.85,
            fronthaul_capacity: 5.0,
            mu_h: 1.0,
            sigma2_h: 1.0,
            mu_g: 1.0,
            sigma2_g: 1.0,
            reuse_mode: ReuseMode::NonOrthogonal,
            pmfs: [[h0.clone(), h1.clone()], [h0, h1]],
            fronthaul_per_dim_form: true,
        }
    }
}

/// Keys accepted by [`SystemConfig::set`] and the config file parser.
pub const CONFIG_KEYS: &[&str] = &[
    "lambda",
    "snr_db",
    "m_levels",
    "l_intervals",
    "rho",
    "fronthaul_capacity",
    "mu_h",
    "sigma2_h",
    "mu_g",
    "sigma2_g",
    "reuse_mode",
    "pmf_cell1_h0",
    "pmf_cell1_h1",
    "pmf_cell2_h0",
    "pmf_cell2_h1",
    "fronthaul.per_dim_form",
];

fn pmf_key(cell: usize, hyp: usize) -> &'static str {
    match (cell, hyp) {
        (0, 0) => "pmf_cell1_h0",
        (0, 1) => "pmf_cell1_h1",
        (1, 0) => "pmf_cell2_h0",
        _ => "pmf_cell2_h1",
    }
}

fn parse_real(key: &str, value: &str) -> Result<f64, ConfigError> {
    value.trim().parse::<f64>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a real number",
    })
}

fn parse_count(key: &str, value: &str) -> Result<usize, ConfigError> {
    value.trim().parse::<usize>().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        expected: "a nonnegative integer",
    })
}

fn parse_pmf(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value.split(',').map(|tok| parse_real(key, tok)).collect()
}

impl SystemConfig {
    /// Set a single parameter from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "lambda" => self.lambda = parse_real(key, value)?,
            "snr_db" => self.snr_db = parse_real(key, value)?,
            "m_levels" => self.m_levels = parse_count(key, value)?,
            "l_intervals" => self.l_intervals = parse_count(key, value)?,
            "rho" => self.rho = parse_real(key, value)?,
            "fronthaul_capacity" => self.fronthaul_capacity = parse_real(key, value)?,
            "mu_h" => self.mu_h = parse_real(key, value)?,
            "sigma2_h" => self.sigma2_h = parse_real(key, value)?,
            "mu_g" => self.mu_g = parse_real(key, value)?,
            "sigma2_g" => self.sigma2_g = parse_real(key, value)?,
            "reuse_mode" => {
                self.reuse_mode = value.parse().map_err(|_| ConfigError::BadValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    expected: "non_orthogonal or orthogonal",
                })?
            }
            "pmf_cell1_h0" => self.pmfs[0][0] = parse_pmf(key, value)?,
            "pmf_cell1_h1" => self.pmfs[0][1] = parse_pmf(key, value)?,
            "pmf_cell2_h0" => self.pmfs[1][0] = parse_pmf(key, value)?,
            "pmf_cell2_h1" => self.pmfs[1][1] = parse_pmf(key, value)?,
            "fronthaul.per_dim_form" => {
                self.fronthaul_per_dim_form = match value.trim() {
                    "true" | "1" | "on" => true,
                    "false" | "0" | "off" => false,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.to_string(),
                            value: value.to_string(),
                            expected: "true or false",
                        })
                    }
                }
            }
            _ => return Err(ConfigError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Current value of a parameter, formatted so that `set(key, get(key))`
    /// reproduces it exactly.
    pub fn get(&self, key: &str) -> Option<String> {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        Some(match key {
            "lambda" => format!("{:?}", self.lambda),
            "snr_db" => format!("{:?}", self.snr_db),
            "m_levels" => self.m_levels.to_string(),
            "l_intervals" => self.l_intervals.to_string(),
            "rho" => format!("{:?}", self.rho),
            "fronthaul_capacity" => format!("{:?}", self.fronthaul_capacity),
            "mu_h" => format!("{:?}", self.mu_h),
            "sigma2_h" => format!("{:?}", self.sigma2_h),
            "mu_g" => format!("{:?}", self.mu_g),
            "sigma2_g" => format!("{:?}", self.sigma2_g),
            "reuse_mode" => self.reuse_mode.as_str().to_string(),
            "pmf_cell1_h0" => join(&self.pmfs[0][0]),
            "pmf_cell1_h1" => join(&self.pmfs[0][1]),
            "pmf_cell2_h0" => join(&self.pmfs[1][0]),
            "pmf_cell2_h1" => join(&self.pmfs[1][1]),
            "fronthaul.per_dim_form" => self.fronthaul_per_dim_form.to_string(),
            _ => return None,
        })
    }

    /// Parse the line-oriented `key = value` format. Keys not listed in the
    /// file keep their defaults; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<SystemConfig, ConfigError> {
        let mut cfg = SystemConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: lineno + 1, text: raw.to_string() })?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey { key: key.to_string(), line: lineno + 1 });
            }
            cfg.set(key, value.trim()).map_err(|e| e.at_line(lineno + 1))?;
            seen.push(key.to_string());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<SystemConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        SystemConfig::parse(&text)
    }

    /// Render in the config file format (all keys, stable order).
    pub fn to_config_text(&self) -> String {
        CONFIG_KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default())).collect()
    }

    /// Linear SNR, `E_s / W_0`.
    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }
}

/// Check every invariant of a configuration; returns it unchanged on success.
pub fn validate_config(cfg: SystemConfig) -> Result<SystemConfig, ConfigError> {
    let real = |name: &'static str, v: f64, ok: bool, constraint: &'static str| {
        if ok && v.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::OutOfRange { name, value: v, constraint })
        }
    };
    real("lambda", cfg.lambda, cfg.lambda > 0.0, "lambda > 0")?;
    real("rho", cfg.rho, (0.0..=1.0).contains(&cfg.rho), "0 <= rho <= 1")?;
    real("snr_db", cfg.snr_db, true, "finite")?;
    let snr = cfg.snr_linear();
    if !(snr > 0.0 && snr.is_finite()) {
        return Err(ConfigError::OutOfRange {
            name: "snr_db",
            value: cfg.snr_db,
            constraint: "linear SNR in (0, inf)",
        });
    }
    real("fronthaul_capacity", cfg.fronthaul_capacity, cfg.fronthaul_capacity >= 0.0, "C >= 0")?;
    real("mu_h", cfg.mu_h, true, "finite")?;
    real("mu_g", cfg.mu_g, true, "finite")?;
    real("sigma2_h", cfg.sigma2_h, cfg.sigma2_h >= 0.0, "sigma2_h >= 0")?;
    real("sigma2_g", cfg.sigma2_g, cfg.sigma2_g >= 0.0, "sigma2_g >= 0")?;
    if cfg.m_levels < 2 {
        return Err(ConfigError::OutOfRange { name: "m_levels", value: cfg.m_levels as f64, constraint: "M >= 2" });
    }
    if cfg.l_intervals < 1 {
        return Err(ConfigError::OutOfRange {
            name: "l_intervals",
            value: cfg.l_intervals as f64,
            constraint: "L >= 1",
        });
    }
    if cfg.reuse_mode == ReuseMode::Orthogonal && !cfg.m_levels.is_multiple_of(2) {
        return Err(ConfigError::OddLevels { m: cfg.m_levels });
    }
    for cell in 0..2 {
        for hyp in 0..2 {
            check_pmf(pmf_key(cell, hyp), &cfg.pmfs[cell][hyp], cfg.m_levels)?;
        }
    }
    Ok(cfg)
}

/// Validate one pmf: length, nonnegativity and normalization.
pub fn check_pmf(name: &str, pmf: &[f64], m_levels: usize) -> Result<(), ConfigError> {
    if pmf.len() != m_levels {
        return Err(ConfigError::PmfLength { name: name.to_string(), expected: m_levels, got: pmf.len() });
    }
    if let Some((i, &v)) = pmf.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
        return Err(ConfigError::PmfNegative { name: name.to_string(), index: i + 1, value: v });
    }
    let sum: f64 = pmf.iter().sum();
    if (sum - 1.0).abs() > PMF_SUM_TOL {
        return Err(ConfigError::PmfSum { name: name.to_string(), sum });
    }
    Ok(())
}

/// Merge adjacent level pairs: entry `m` is `p(2m-1) + p(2m)`.
pub fn coarsen_pmf(pmf: &[f64]) -> Vec<f64> {
    pmf.chunks(2).map(|c| c.iter().sum()).collect()
}

/// Validated, immutable model. Cheap to clone and safe to share across threads.
#[derive(Clone, Debug)]
pub struct Model {
    cfg: SystemConfig,
    noise_var: f64,
    levels: usize,
    /// Effective pmfs `[cell][hyp]` (coarsened for orthogonal reuse).
    pmfs: [[Vec<f64>; 2]; 2],
    mu_g: f64,
    sigma2_g: f64,
}

impl Model {
    pub fn new(cfg: SystemConfig) -> Result<Model, ConfigError> {
        let cfg = validate_config(cfg)?;
        let noise_var = 1.0 / cfg.snr_linear();
        let (levels, pmfs, mu_g, sigma2_g) = match cfg.reuse_mode {
            ReuseMode::NonOrthogonal => (cfg.m_levels, cfg.pmfs.clone(), cfg.mu_g, cfg.sigma2_g),
            ReuseMode::Orthogonal => {
                let c = |cell: usize, h: usize| coarsen_pmf(&cfg.pmfs[cell][h]);
                (cfg.m_levels / 2, [[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]], 0.0, 0.0)
            }
        };
        Ok(Model { cfg, noise_var, levels, pmfs, mu_g, sigma2_g })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    /// Copy of the configuration with `key` replaced, re-validated.
    pub fn with(&self, key: &str, value: &str) -> Result<Model, ConfigError> {
        let mut cfg = self.cfg.clone();
        cfg.set(key, value)?;
        Model::new(cfg)
    }

    pub fn lambda(&self) -> f64 {
        self.cfg.lambda
    }

    /// `W_0 = 1/SNR` with unit symbol energy.
    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Number of waveforms per cell: `M` or `M/2` under orthogonal reuse.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn l_intervals(&self) -> usize {
        self.cfg.l_intervals
    }

    pub fn rho(&self) -> f64 {
        self.cfg.rho
    }

    pub fn reuse_mode(&self) -> ReuseMode {
        self.cfg.reuse_mode
    }

    pub fn mu_h(&self) -> f64 {
        self.cfg.mu_h
    }

    pub fn sigma2_h(&self) -> f64 {
        self.cfg.sigma2_h
    }

    /// Effective inter-cell channel mean (zero under orthogonal reuse).
    pub fn mu_g(&self) -> f64 {
        self.mu_g
    }

    /// Effective inter-cell channel variance (zero under orthogonal reuse).
    pub fn sigma2_g(&self) -> f64 {
        self.sigma2_g
    }

    /// Observation pmf seen at the receiver for `cell` under `hyp`
    /// (length [`Model::levels`]).
    pub fn observation_pmf(&self, cell: Cell, hyp: Hypothesis) -> &[f64] {
        &self.pmfs[cell.index()][hyp.index()]
    }

    /// Full-resolution pmf the devices draw from (length `M`).
    pub fn device_pmf(&self, cell: Cell, hyp: Hypothesis) -> &[f64] {
        &self.cfg.pmfs[cell.index()][hyp.index()]
    }

    /// `p(theta^1 = theta_j, theta^2 = theta_k)`.
    pub fn joint_prior(&self, h: JointHypothesis) -> f64 {
        joint_prior(self.cfg.rho, h)
    }

    /// `Pr(theta^{c'} = k | theta^c = j) = 2 p(j, k)`. Symmetric in the cell
    /// roles because the prior is.
    pub fn conditional_prior(&self, own: Hypothesis, other: Hypothesis) -> f64 {
        2.0 * joint_prior(self.cfg.rho, JointHypothesis::new(own, other))
    }

    pub fn sample_qoi_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> QoiPair {
        sample_qoi_pair(self.cfg.rho, rng)
    }
}

/// `rho/2` when the QoIs agree, `(1-rho)/2` otherwise.
pub fn joint_prior(rho: f64, h: JointHypothesis) -> f64 {
    if h.j == h.k {
        rho / 2.0
    } else {
        (1.0 - rho) / 2.0
    }
}

/// Draw `theta^1` uniformly, then keep it for cell 2 with probability `rho`.
pub fn sample_qoi_pair<R: Rng + ?Sized>(rho: f64, rng: &mut R) -> QoiPair {
    let theta1 = if rng.random::<bool>() { Hypothesis::Theta1 } else { Hypothesis::Theta0 };
    let agree = rng.random::<f64>() < rho;
    let theta2 = if agree { theta1 } else { theta1.flip() };
    QoiPair::new(theta1, theta2)
}
