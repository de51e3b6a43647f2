//! Experiment orchestration. A versioned TOML configuration drives parallel
//! replica runs over an n-ladder, which write CSV outputs plus a JSON run
//! manifest.
//!
//! Replicas run in parallel but are merged in replica order, so outputs are
//! bit-identical for every thread count.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dirichlet::{default_limit_ladder, form_report, FormReport};
use crate::duality::{correlation_batch, duality_check, CorrelationReport, DualConfiguration, DualityReport, InitLaw};
use crate::dynamics::{init_product_negbin, simulate, Configuration, InitialProfile, Observer, RunStats, SimParams};
use crate::error::{Error, Result};
use crate::fields::{aggregate, empirical, trajectory_fields, write_samples_csv, write_stats_csv, FieldSample, Getter, StatsRow, TestFunction};
use crate::hydro::{mean_profile, DensityField};
use crate::kernel::{build_discrete_kernel, discrete_symbol, KernelSpec, LimitSymbol};
use crate::oupredict::{negbin_variance_density, prediction_row, write_predictions_csv, OUCharacteristics, PredictionRow};
use crate::seed::{derive_seed, par_replicas};
use crate::stats::{variance_with_se, ReplicaStats};
use crate::torus::Torus;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

/// Coarse bins per axis for the hydrodynamic L1 metric.
pub fn coarse_bins(dim: usize) -> usize {
    if dim == 1 {
        32
    } else {
        8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    Hydro,
    StationaryFluct,
    NonEqFluct,
    DualityCheck,
    MoscoCheck,
    MomentBounds,
}

impl ExperimentKind {
    pub fn slug(self) -> &'static str {
        match self {
            ExperimentKind::Hydro => "hydro",
            ExperimentKind::StationaryFluct => "stationary-fluct",
            ExperimentKind::NonEqFluct => "noneq-fluct",
            ExperimentKind::DualityCheck => "duality-check",
            ExperimentKind::MoscoCheck => "mosco-check",
            ExperimentKind::MomentBounds => "moment-bounds",
        }
    }
}

/// Time parameters shared by every kind. The jump exponent is the kernel's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub alpha: f64,
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

/// Dual walker sets, each a list of unit-torus points (one per walker).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualitySection {
    pub walkers: Vec<Vec<Vec<f64>>>,
    /// Deterministic start replacing the negative-binomial profile. Its length
    /// must equal `n^d` for every ladder point.
    #[serde(default)]
    pub initial_occupancy: Option<Vec<u32>>,
}

/// Point sets (one to four unit-torus points each) for moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    pub point_sets: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(with = "seed_format")]
    pub seed: u64,
    pub replicas: usize,
    pub n_ladder: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub kernel: KernelSpec,
    pub sim: SimSection,
    pub profile: InitialProfile,
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duality: Option<DualitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            alpha: self.sim.alpha,
            beta: self.kernel.beta,
            horizon: self.sim.horizon,
            snapshot_times: self.sim.snapshot_times.clone(),
            seed: self.seed,
        }
    }

    /// Snapshot grid; fluctuation runs always include `t = 0`.
    pub fn times(&self) -> Vec<f64> {
        let mut t = self.sim_params().effective_snapshots();
        if matches!(self.kind, ExperimentKind::StationaryFluct | ExperimentKind::NonEqFluct) && t.first() != Some(&0.0) {
            t.insert(0, 0.0);
        }
        t
    }

    /// SHA-256 of the canonical TOML with the output directory removed.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        Ok(hex(&Sha256::digest(c.to_toml()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return cfg(format!("schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.replicas < 1 {
            return cfg("replicas must be >= 1".into());
        }
        if self.n_ladder.is_empty() {
            return cfg("n_ladder is empty".into());
        }
        if self.n_ladder.windows(2).any(|w| w[1] <= w[0]) {
            return cfg("n_ladder must be strictly increasing".into());
        }
        self.kernel.validate()?;
        self.sim_params().validate()?;
        let dim = self.kernel.dimension;
        self.profile.validate(dim)?;
        for f in &self.test_functions {
            f.validate(dim)?;
        }
        for &n in &self.n_ladder {
            Torus::new(dim, n)?;
        }
        match self.kind {
            ExperimentKind::StationaryFluct => {
                if !matches!(self.profile, InitialProfile::Constant { .. }) {
                    return cfg("stationary fluctuations need a constant profile".into());
                }
            }
            ExperimentKind::DualityCheck => {
                let Some(d) = &self.duality else {
                    return cfg("duality-check needs a [duality] section".into());
                };
                if d.walkers.is_empty() {
                    return cfg("[duality] walkers is empty".into());
                }
                for set in &d.walkers {
                    check_points(set, dim)?;
                }
                if let Some(occ) = &d.initial_occupancy {
                    if let Some(&n) = self.n_ladder.iter().find(|&&n| n.pow(dim as u32) != occ.len()) {
                        return cfg(format!("initial_occupancy has {} sites, ladder point {n} needs {}", occ.len(), n.pow(dim as u32)));
                    }
                }
            }
            ExperimentKind::MomentBounds => {
                let Some(m) = &self.moments else {
                    return cfg("moment-bounds needs a [moments] section".into());
                };
                for set in &m.point_sets {
                    check_points(set, dim)?;
                }
            }
            ExperimentKind::MoscoCheck
                if self.test_functions.is_empty() => {
                    return cfg("mosco-check needs test functions".into());
                }
            _ => {}
        }
        if matches!(self.kind, ExperimentKind::StationaryFluct | ExperimentKind::NonEqFluct) && self.test_functions.is_empty() {
            return cfg("fluctuation runs need test functions".into());
        }
        Ok(())
    }
}

/// TOML integers are signed, so seeds above `i64::MAX` are written as hex
/// strings. Both forms are accepted on input.
mod seed_format {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        match i64::try_from(*v) {
            Ok(i) => s.serialize_i64(i),
            Err(_) => s.serialize_str(&format!("{v:#x}")),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => {
                let parsed = match t.strip_prefix("0x") {
                    Some(h) => u64::from_str_radix(h, 16),
                    None => t.parse(),
                };
                parsed.map_err(|e| D::Error::custom(format!("seed {t:?}: {e}")))
            }
        }
    }
}

fn check_points(set: &[Vec<f64>], dim: usize) -> Result<()> {
    if set.is_empty() || set.len() > 4 {
        return Err(Error::Config(format!("point sets hold 1 to 4 points, got {}", set.len())));
    }
    if set.iter().any(|p| p.len() != dim) {
        return Err(Error::Config(format!("points must have {dim} coordinates")));
    }
    Ok(())
}

/// Nearest lattice site to a unit-torus point.
pub fn site_of(u: &[f64], torus: Torus) -> usize {
    let n = torus.side() as f64;
    let mut c = [0usize; 2];
    for (i, &x) in u.iter().enumerate().take(torus.dim()) {
        c[i] = ((x * n).round().rem_euclid(n)) as usize % torus.side();
    }
    torus.index(c)
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Per-replica seeds of one random stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStream {
    pub label: String,
    pub master: u64,
    pub seeds: Vec<u64>,
}

impl SeedStream {
    fn new(label: &str, master: u64, replicas: usize) -> Self {
        SeedStream {
            label: label.to_string(),
            master,
            seeds: (0..replicas as u64).map(|r| derive_seed(master, r, label)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Verdict {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Hydrodynamic run at one ladder point.
#[derive(Debug, Clone)]
pub struct HydroOutcome {
    pub n: usize,
    pub times: Vec<f64>,
    /// Replica-averaged occupation per snapshot.
    pub empirical: Vec<DensityField>,
    /// Semi-discrete spectral prediction per snapshot.
    pub predicted: Vec<DensityField>,
    pub labels: Vec<String>,
    /// `pi_t(phi)` statistics, indexed `[snapshot][phi]`.
    pub pi: Vec<Vec<ReplicaStats>>,
    /// Coarse-binned relative L1 error pooled over snapshots.
    pub rel_l1: f64,
    pub stats: RunStats,
}

#[derive(Default)]
struct OccupancyRecorder {
    phis: Vec<Vec<f64>>,
    occupancy: Vec<Vec<u32>>,
    pi: Vec<Vec<f64>>,
}

impl Observer for OccupancyRecorder {
    fn on_snapshot(&mut self, _: f64, config: &Configuration) {
        self.occupancy.push(config.occupancy().to_vec());
        self.pi.push(self.phis.iter().map(|p| empirical(config, p)).collect());
    }
}

/// Relative L1 distance `sum |E - P| / sum P` after summing both fields over
/// `bins` cells per axis.
pub fn binned_relative_l1(emp: &DensityField, pred: &DensityField, bins: usize) -> Result<f64> {
    let (a, b) = binned_pair(emp, pred, bins)?;
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
    Ok(num / b.iter().sum::<f64>())
}

fn binned_pair(emp: &DensityField, pred: &DensityField, bins: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if emp.torus != pred.torus {
        return Err(Error::GridMismatch {
            expected: pred.torus.sites(),
            found: emp.torus.sites(),
        });
    }
    let torus = emp.torus;
    let b = bins.clamp(1, torus.side());
    let cells = b.pow(torus.dim() as u32);
    let (mut ea, mut pa) = (vec![0.0; cells], vec![0.0; cells]);
    for x in torus.iter() {
        let c = torus.coords(x);
        let mut cell = 0;
        for &ci in c.iter().take(torus.dim()).rev() {
            cell = cell * b + ci * b / torus.side();
        }
        ea[cell] += emp.values[x];
        pa[cell] += pred.values[x];
    }
    Ok((ea, pa))
}

pub fn hydro_point(cfg: &ExperimentConfig, n: usize, streams: &mut Vec<SeedStream>) -> Result<HydroOutcome> {
    let kernel = build_discrete_kernel(&cfg.kernel, n)?;
    let torus = kernel.torus();
    let alpha = cfg.sim.alpha;
    let times = cfg.times();
    let phis: Vec<Vec<f64>> = cfg.test_functions.iter().map(|f| f.on_grid(torus)).collect();
    let label = format!("hydro-n{n}");
    let master = cfg.seed;
    let runs = par_replicas(cfg.replicas, master, &label, |rng| {
        let mut eta = init_product_negbin(&cfg.profile, alpha, torus, rng)?;
        let mut rec = OccupancyRecorder {
            phis: phis.clone(),
            ..Default::default()
        };
        let stats = simulate(&mut eta, &kernel, alpha, cfg.sim.horizon, &times, rng, &mut rec)?;
        Ok((rec, stats))
    })?;
    streams.push(SeedStream::new(&label, master, cfg.replicas));
    let symbol = discrete_symbol(&kernel);
    let mut stats = RunStats::default();
    let mut sums = vec![vec![0.0; torus.sites()]; times.len()];
    let mut pi = vec![vec![ReplicaStats::new(); phis.len()]; times.len()];
    for (rec, st) in &runs {
        stats.merge(st);
        for (s, occ) in rec.occupancy.iter().enumerate() {
            for (acc, &v) in sums[s].iter_mut().zip(occ) {
                *acc += v as f64;
            }
            for (i, &v) in rec.pi[s].iter().enumerate() {
                pi[s][i].push(v);
            }
        }
    }
    let r = cfg.replicas as f64;
    let mut empirical_fields = Vec::with_capacity(times.len());
    let mut predicted = Vec::with_capacity(times.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (s, &t) in times.iter().enumerate() {
        let emp = DensityField::new(torus, sums[s].iter().map(|v| v / r).collect(), t)?;
        let pred = mean_profile(&cfg.profile, alpha, &symbol, t)?;
        let (a, b) = binned_pair(&emp, &pred, coarse_bins(torus.dim()))?;
        num += a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        den += b.iter().sum::<f64>();
        empirical_fields.push(emp);
        predicted.push(pred);
    }
    Ok(HydroOutcome {
        n,
        times,
        empirical: empirical_fields,
        predicted,
        labels: cfg.test_functions.iter().map(|f| f.label()).collect(),
        pi,
        rel_l1: num / den,
        stats,
    })
}

/// Fluctuation-field run at one ladder point.
#[derive(Debug, Clone)]
pub struct FluctOutcome {
    pub n: usize,
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// Per-replica samples, each indexed by snapshot.
    pub samples: Vec<Vec<FieldSample>>,
    pub rows: Vec<StatsRow>,
    /// Indexed `[snapshot * labels.len() + phi]`.
    pub predictions: Vec<PredictionRow>,
    pub stats: RunStats,
}

impl FluctOutcome {
    /// Cross-replica values of one observable at one snapshot.
    pub fn column(&self, snapshot: usize, phi: usize, get: Getter) -> Vec<f64> {
        self.samples.iter().map(|rep| get(&rep[snapshot], phi)).collect()
    }

    pub fn prediction(&self, snapshot: usize, phi: usize) -> &PredictionRow {
        &self.predictions[snapshot * self.labels.len() + phi]
    }
}

pub fn fluct_point(cfg: &ExperimentConfig, n: usize, streams: &mut Vec<SeedStream>) -> Result<FluctOutcome> {
    let kernel = build_discrete_kernel(&cfg.kernel, n)?;
    let torus = kernel.torus();
    let alpha = cfg.sim.alpha;
    let times = cfg.times();
    let phis: Vec<Vec<f64>> = cfg.test_functions.iter().map(|f| f.on_grid(torus)).collect();
    let labels: Vec<String> = cfg.test_functions.iter().map(|f| f.label()).collect();
    let symbol = discrete_symbol(&kernel);
    let means = times
        .iter()
        .map(|&t| mean_profile(&cfg.profile, alpha, &symbol, t))
        .collect::<Result<Vec<_>>>()?;
    let label = format!("fluct-n{n}");
    let runs = par_replicas(cfg.replicas, cfg.seed, &label, |rng| {
        let mut eta = init_product_negbin(&cfg.profile, alpha, torus, rng)?;
        trajectory_fields(0, &mut eta, &kernel, alpha, &times, &phis, &means, rng)
    })?;
    streams.push(SeedStream::new(&label, cfg.seed, cfg.replicas));
    let mut stats = RunStats::default();
    let mut samples = Vec::with_capacity(runs.len());
    for (r, (mut s, st)) in runs.into_iter().enumerate() {
        stats.merge(&st);
        s.iter_mut().for_each(|f| f.replica = r);
        samples.push(s);
    }
    let rows = aggregate(&samples, &labels);
    let rho0 = DensityField::from_profile(&cfg.profile, torus)?;
    let v0 = negbin_variance_density(&rho0, alpha);
    let ou = OUCharacteristics::new(&kernel, alpha, rho0)?;
    let mut predictions = Vec::with_capacity(times.len() * phis.len());
    for &t in &times {
        for (phi, l) in phis.iter().zip(&labels) {
            predictions.push(prediction_row(&ou, l, phi, t, &v0)?);
        }
    }
    Ok(FluctOutcome {
        n,
        times,
        labels,
        samples,
        rows,
        predictions,
        stats,
    })
}

/// `Var[Y_t(phi)]` against the predictor at every snapshot, plus time
/// invariance against `t = 0` when `stationary`.
pub fn variance_verdicts(out: &FluctOutcome, stationary: bool, sigmas: f64) -> Vec<Verdict> {
    let mut v = Vec::new();
    for (i, label) in out.labels.iter().enumerate() {
        let (v0, se0) = variance_with_se(&out.column(0, i, |f, i| f.y[i]));
        for (s, &t) in out.times.iter().enumerate() {
            let (var, se) = variance_with_se(&out.column(s, i, |f, i| f.y[i]));
            let p = out.prediction(s, i);
            let ok = (var - p.predicted_var).abs() <= sigmas * se;
            v.push(Verdict::new(
                format!("n={} var Y {label} t={t}", out.n),
                ok,
                format!(
                    "var {var:.5} se {se:.5} predicted {:.5} ratio-to-m-form {:.4}",
                    p.predicted_var,
                    var / p.admissible_var_m
                ),
            ));
            if stationary && s > 0 {
                let ok = (var - v0).abs() <= sigmas * se.hypot(se0);
                v.push(Verdict::new(
                    format!("n={} var Y {label} t={t} vs t=0", out.n),
                    ok,
                    format!("var {var:.5} vs {v0:.5} (combined se {:.5})", se.hypot(se0)),
                ));
            }
        }
    }
    v
}

/// Quadratic-variation and Dynkin-martingale checks at the final snapshot.
pub fn qv_verdicts(out: &FluctOutcome, rel_tol: f64, sigmas: f64) -> Vec<Verdict> {
    let s = out.times.len() - 1;
    let t = out.times[s];
    let mut v = Vec::new();
    for (i, label) in out.labels.iter().enumerate() {
        let pred = out.prediction(s, i).qv_integral;
        let carre = ReplicaStats::from_slice(&out.column(s, i, |f, i| f.carre_integral[i]));
        let rel = (carre.mean() - pred).abs() / pred.abs();
        v.push(Verdict::new(
            format!("n={} mean int Gamma {label} t={t}", out.n),
            rel <= rel_tol,
            format!("mean {:.5} predicted {pred:.5} rel {rel:.4}", carre.mean()),
        ));
        let dynkin = out.column(s, i, |f, i| f.dynkin[i]);
        let ds = ReplicaStats::from_slice(&dynkin);
        v.push(Verdict::new(
            format!("n={} Dynkin mean {label} t={t}", out.n),
            ds.mean().abs() <= sigmas * ds.se(),
            format!("mean {:.5} se {:.5}", ds.mean(), ds.se()),
        ));
        let qv = ReplicaStats::from_slice(&out.column(s, i, |f, i| f.qv_events[i]));
        let (var, se) = variance_with_se(&dynkin);
        let comb = se.hypot(qv.se());
        v.push(Verdict::new(
            format!("n={} Dynkin var vs QV {label} t={t}", out.n),
            (var - qv.mean()).abs() <= sigmas * comb,
            format!("var {var:.5} mean QV {:.5} combined se {comb:.5}", qv.mean()),
        ));
    }
    v
}

/// One row of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub l1_error: Option<f64>,
    /// Cross-replica variance of `pi_t(phi)` at the final snapshot.
    pub pi_variance: Option<f64>,
    /// Largest relative Dirichlet-form error over the test functions.
    pub dirichlet_residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// `var(n) / var(2n)` for consecutive doublings.
    pub variance_ratios: Vec<(usize, f64)>,
    pub verdicts: Vec<Verdict>,
}

/// Strictly decreasing, except that runs of exact zeros count as decreasing.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0))
}

pub const VARIANCE_RATIO_BAND: (f64, f64) = (1.4, 2.8);

pub fn sweep_report(points: &[SweepPoint]) -> Result<SweepReport> {
    if points.len() < 2 {
        return Err(Error::MissingLadder {
            needed: 2,
            got: points.len(),
        });
    }
    let mut verdicts = Vec::new();
    let mut column = |name: &str, get: fn(&SweepPoint) -> Option<f64>| {
        let vals: Option<Vec<f64>> = points.iter().map(get).collect();
        if let Some(vals) = vals {
            verdicts.push(Verdict::new(
                format!("{name} strictly decreasing"),
                strictly_decreasing(&vals),
                sci(&vals),
            ));
        }
    };
    column("L1 error", |p| p.l1_error);
    column("Dirichlet residual", |p| p.dirichlet_residual);
    let mut variance_ratios = Vec::new();
    for w in points.windows(2) {
        if let (Some(a), Some(b)) = (w[0].pi_variance, w[1].pi_variance) {
            if w[1].n == 2 * w[0].n {
                let r = a / b;
                variance_ratios.push((w[0].n, r));
                verdicts.push(Verdict::new(
                    format!("var ratio n={} -> {}", w[0].n, w[1].n),
                    (VARIANCE_RATIO_BAND.0..=VARIANCE_RATIO_BAND.1).contains(&r),
                    format!("{r:.4}"),
                ));
            }
        }
    }
    Ok(SweepReport {
        points: points.to_vec(),
        variance_ratios,
        verdicts,
    })
}

pub fn write_sweep_csv<W: Write>(mut out: W, report: &SweepReport) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    writeln!(out, "n,l1_error,pi_variance,dirichlet_residual")?;
    for p in &report.points {
        writeln!(out, "{},{},{},{}", p.n, opt(p.l1_error), opt(p.pi_variance), opt(p.dirichlet_residual))?;
    }
    Ok(())
}

/// Telemetry of the stochastic part of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub wall_clock_s: f64,
    pub threads: usize,
    pub proposals: u64,
    pub events: u64,
}

/// In-memory result of [`execute`].
#[derive(Debug, Clone)]
pub struct Execution {
    pub outputs: Vec<(String, Vec<u8>)>,
    pub streams: Vec<SeedStream>,
    pub verdicts: Vec<Verdict>,
    pub sweep: Option<SweepReport>,
    pub telemetry: Telemetry,
}

impl Execution {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

fn csv<F: FnOnce(&mut Vec<u8>) -> Result<()>>(f: F) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs the experiment over the whole n-ladder without touching the disk.
pub fn execute(cfg: &ExperimentConfig) -> Result<Execution> {
    cfg.validate()?;
    let start = Instant::now();
    let mut outputs = Vec::new();
    let mut streams = Vec::new();
    let mut verdicts = Vec::new();
    let mut sweep = None;
    let mut run_stats = RunStats::default();
    match cfg.kind {
        ExperimentKind::Hydro => {
            let mut points = Vec::new();
            for &n in &cfg.n_ladder {
                let h = hydro_point(cfg, n, &mut streams)?;
                run_stats.merge(&h.stats);
                outputs.push((format!("hydro_density_n{n}.csv"), csv(|b| write_hydro_density(b, &h))?));
                outputs.push((format!("hydro_stats_n{n}.csv"), csv(|b| write_hydro_stats(b, &h))?));
                points.push(SweepPoint {
                    n,
                    l1_error: Some(h.rel_l1),
                    pi_variance: h.pi.last().and_then(|row| row.first()).map(|s| s.variance()),
                    dirichlet_residual: None,
                });
            }
            if points.len() >= 2 {
                let rep = sweep_report(&points)?;
                verdicts.extend(rep.verdicts.iter().cloned());
                outputs.push(("sweep.csv".into(), csv(|b| write_sweep_csv(b, &rep))?));
                sweep = Some(rep);
            } else {
                outputs.push(("sweep.csv".into(), csv(|b| write_points_only(b, &points))?));
            }
        }
        ExperimentKind::StationaryFluct | ExperimentKind::NonEqFluct => {
            let stationary = cfg.kind == ExperimentKind::StationaryFluct;
            for &n in &cfg.n_ladder {
                let f = fluct_point(cfg, n, &mut streams)?;
                run_stats.merge(&f.stats);
                let flat: Vec<FieldSample> = f.samples.iter().flatten().cloned().collect();
                outputs.push((format!("fluct_samples_n{n}.csv"), csv(|b| write_samples_csv(b, &flat, &f.labels))?));
                outputs.push((format!("fluct_stats_n{n}.csv"), csv(|b| write_stats_csv(b, &f.rows))?));
                outputs.push((format!("fluct_predictions_n{n}.csv"), csv(|b| write_predictions_csv(b, &f.predictions))?));
                verdicts.extend(variance_verdicts(&f, stationary, 3.0));
                if !stationary {
                    verdicts.extend(qv_verdicts(&f, 0.10, 3.0));
                }
            }
        }
        ExperimentKind::DualityCheck => {
            let reports = duality_reports(cfg, &mut streams)?;
            for (n, r) in &reports {
                verdicts.push(Verdict::new(
                    format!("n={n} k={} t={}", r.k, r.t),
                    r.passes(3.0),
                    format!("lhs {:.6} rhs {:.6} combined se {:.6}", r.lhs, r.rhs, r.combined_se()),
                ));
            }
            outputs.push(("duality.csv".into(), csv(|b| write_duality_csv(b, &reports))?));
        }
        ExperimentKind::MoscoCheck => {
            let reports = mosco_reports(cfg)?;
            let mut buf = Vec::new();
            for (i, r) in reports.iter().enumerate() {
                r.write_csv(&mut buf, i == 0)?;
                verdicts.extend(mosco_verdicts(r, 0.01));
            }
            outputs.push(("mosco.csv".into(), buf));
            let points: Vec<SweepPoint> = cfg
                .n_ladder
                .iter()
                .enumerate()
                .map(|(i, &n)| SweepPoint {
                    n,
                    l1_error: None,
                    pi_variance: None,
                    dirichlet_residual: Some(reports.iter().map(|r| r.relative_form_errors()[i]).fold(0.0, f64::max)),
                })
                .collect();
            if points.len() >= 2 {
                let rep = sweep_report(&points)?;
                outputs.push(("sweep.csv".into(), csv(|b| write_sweep_csv(b, &rep))?));
                sweep = Some(rep);
            }
        }
        ExperimentKind::MomentBounds => {
            let reports = moment_reports(cfg, &mut streams)?;
            for (n, r) in &reports {
                verdicts.push(moment_verdict(*n, r, 3.0));
            }
            outputs.push(("moments.csv".into(), csv(|b| write_moments_csv(b, &reports))?));
        }
    }
    Ok(Execution {
        outputs,
        streams,
        verdicts,
        sweep,
        telemetry: Telemetry {
            wall_clock_s: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
            proposals: run_stats.proposals,
            events: run_stats.accepted,
        },
    })
}

fn write_points_only<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    write_sweep_csv(
        out,
        &SweepReport {
            points: points.to_vec(),
            variance_ratios: Vec::new(),
            verdicts: Vec::new(),
        },
    )
}

fn write_hydro_density<W: Write>(mut out: W, h: &HydroOutcome) -> Result<()> {
    writeln!(out, "t,site,empirical,predicted")?;
    for (emp, pred) in h.empirical.iter().zip(&h.predicted) {
        for (x, (e, p)) in emp.values.iter().zip(&pred.values).enumerate() {
            writeln!(out, "{},{x},{e:.17e},{p:.17e}", emp.t)?;
        }
    }
    Ok(())
}

fn write_hydro_stats<W: Write>(mut out: W, h: &HydroOutcome) -> Result<()> {
    writeln!(out, "t,observable,mean,var,se,count")?;
    for (s, &t) in h.times.iter().enumerate() {
        for (l, st) in h.labels.iter().zip(&h.pi[s]) {
            writeln!(out, "{t},pi:{l},{:.17e},{:.17e},{:.17e},{}", st.mean(), st.variance(), st.se(), st.count())?;
        }
    }
    writeln!(out, "# rel_l1_binned={:.17e}", h.rel_l1)?;
    Ok(())
}

pub fn duality_reports(cfg: &ExperimentConfig, streams: &mut Vec<SeedStream>) -> Result<Vec<(usize, DualityReport)>> {
    let d = cfg.duality.as_ref().ok_or_else(|| Error::Config("missing [duality]".into()))?;
    let mut out = Vec::new();
    let mut task = 0u64;
    for &n in &cfg.n_ladder {
        let kernel = build_discrete_kernel(&cfg.kernel, n)?;
        let torus = kernel.torus();
        let law = match &d.initial_occupancy {
            Some(occ) => InitLaw::Fixed(Configuration::from_occupancy(torus, occ.clone())?),
            None => InitLaw::NegBinProduct(cfg.profile.clone()),
        };
        for set in &d.walkers {
            let xi = DualConfiguration::new(torus, set.iter().map(|u| site_of(u, torus)).collect())?;
            for &t in &cfg.times() {
                let seed = derive_seed(cfg.seed, task, "duality-task");
                task += 1;
                let r = duality_check(&xi, &law, &kernel, cfg.sim.alpha, t, cfg.replicas, seed)?;
                streams.push(SeedStream::new("duality-forward", seed, cfg.replicas));
                streams.push(SeedStream::new("duality-dual", seed, cfg.replicas));
                out.push((n, r));
            }
        }
    }
    Ok(out)
}

fn write_duality_csv<W: Write>(mut out: W, reports: &[(usize, DualityReport)]) -> Result<()> {
    writeln!(out, "n,k,t,replicas,lhs,se_lhs,rhs,se_rhs,combined_se,oracle,pass")?;
    for (n, r) in reports {
        writeln!(
            out,
            "{n},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            r.k,
            r.t,
            r.replicas,
            r.lhs,
            r.se_lhs,
            r.rhs,
            r.se_rhs,
            r.combined_se(),
            r.oracle.map(|o| format!("{o:.17e}")).unwrap_or_default(),
            r.passes(3.0)
        )?;
    }
    Ok(())
}

/// Extrapolated macroscopic symbol covering every mode used by the
/// continuum references.
pub fn mosco_limit(spec: &KernelSpec) -> Result<LimitSymbol> {
    let max_mode = if spec.dimension == 1 { 64 } else { 24 };
    LimitSymbol::build(spec, max_mode, &default_limit_ladder(spec.dimension))
}

pub fn mosco_reports(cfg: &ExperimentConfig) -> Result<Vec<FormReport>> {
    let limit = mosco_limit(&cfg.kernel)?;
    cfg.test_functions
        .iter()
        .map(|f| form_report(&cfg.kernel, f, &limit, &cfg.n_ladder))
        .collect()
}

/// Form error at the finest n within `tol`. Every error column must also
/// decrease along the ladder.
pub fn mosco_verdicts(r: &FormReport, tol: f64) -> Vec<Verdict> {
    let errs = r.relative_form_errors();
    let last = errs.last().copied().unwrap_or(f64::NAN);
    let col = |get: fn(&crate::dirichlet::FormRow) -> f64| r.rows.iter().map(get).collect::<Vec<_>>();
    let l1 = col(|row| row.residuals.l1);
    let sup = col(|row| row.residuals.sup);
    let gamma = col(|row| row.residuals.gamma_l2);
    vec![
        Verdict::new(format!("{} form error at finest n", r.phi), last <= tol, format!("{last:.3e}")),
        Verdict::new(format!("{} form error decreasing", r.phi), strictly_decreasing(&errs), sci(&errs)),
        Verdict::new(
            format!("{} generator residuals decreasing", r.phi),
            strictly_decreasing(&l1) && strictly_decreasing(&sup),
            format!("l1 {} sup {}", sci(&l1), sci(&sup)),
        ),
        Verdict::new(
            format!("{} carre du champ residual decreasing", r.phi),
            strictly_decreasing(&gamma),
            sci(&gamma),
        ),
    ]
}

pub fn moment_reports(cfg: &ExperimentConfig, streams: &mut Vec<SeedStream>) -> Result<Vec<(usize, CorrelationReport)>> {
    let m = cfg.moments.as_ref().ok_or_else(|| Error::Config("missing [moments]".into()))?;
    let mut out = Vec::new();
    let mut task = 0u64;
    for &n in &cfg.n_ladder {
        let kernel = build_discrete_kernel(&cfg.kernel, n)?;
        let torus = kernel.torus();
        let law = InitLaw::NegBinProduct(cfg.profile.clone());
        let sets: Vec<Vec<usize>> = m
            .point_sets
            .iter()
            .map(|s| s.iter().map(|u| site_of(u, torus)).collect())
            .collect();
        for &t in &cfg.times() {
            let seed = derive_seed(cfg.seed, task, "moment-task");
            task += 1;
            let reps = correlation_batch(&sets, &law, &kernel, cfg.sim.alpha, t, cfg.replicas, seed)?;
            streams.push(SeedStream::new("correlation", seed, cfg.replicas));
            out.extend(reps.into_iter().map(|r| (n, r)));
        }
    }
    Ok(out)
}

pub fn moment_verdict(n: usize, r: &CorrelationReport, sigmas: f64) -> Verdict {
    Verdict::new(
        format!("n={n} points {:?} t={}", r.points, r.t),
        r.moment <= r.bound + sigmas * r.se,
        format!("moment {:.5} se {:.5} bound {:.5}", r.moment, r.se, r.bound),
    )
}

fn write_moments_csv<W: Write>(mut out: W, reports: &[(usize, CorrelationReport)]) -> Result<()> {
    writeln!(out, "n,t,points,moment,se,bound,pass")?;
    for (n, r) in reports {
        let pts = r.points.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(
            out,
            "{n},{},{pts},{:.17e},{:.17e},{:.17e},{}",
            r.t,
            r.moment,
            r.se,
            r.bound,
            r.moment <= r.bound + 3.0 * r.se
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub kind: ExperimentKind,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub streams: Vec<SeedStream>,
    pub telemetry: Telemetry,
    pub outputs: Vec<OutputFile>,
    pub verdicts: Vec<Verdict>,
    #[serde(default)]
    pub sweep: Option<SweepReport>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Executes `cfg`, writes its outputs and `manifest.json` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<RunManifest> {
    cfg.validate()?;
    let manifest_path = out_dir.join(MANIFEST_NAME);
    if manifest_path.exists() && !force {
        return Err(Error::OutputCollision(manifest_path.display().to_string()));
    }
    let exec = execute(cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut outputs = Vec::with_capacity(exec.outputs.len());
    for (name, bytes) in &exec.outputs {
        fs::write(out_dir.join(name), bytes)?;
        outputs.push(OutputFile {
            name: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        kind: cfg.kind,
        config_sha256: cfg.hash()?,
        config: cfg.clone(),
        streams: exec.streams,
        telemetry: exec.telemetry,
        outputs,
        verdicts: exec.verdicts,
        sweep: exec.sweep,
    };
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(&manifest_path, json)?;
    Ok(manifest)
}

/// Exit status of the command-line tool for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_)
        | Error::NoParticles
        | Error::Truncation { .. }
        | Error::StateSpaceTooLarge(_)
        | Error::PathGap(_)
        | Error::TimeMismatch(..)
        | Error::SymbolUnavailable(_)
        | Error::TooFewSnapshots { .. }
        | Error::MissingLadder { .. } => 3,
        _ => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn hydro_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
schema_version = 1
kind = "Hydro"
seed = 11
replicas = 4
n_ladder = [16, 32]

[kernel]
dimension = 1
beta = 1.0

[sim]
alpha = 1.0
horizon = 0.05
snapshot_times = [0.0, 0.05]

[profile]
kind = "GaussianBump"
background = 0.5
amplitude = 1.0
center = [0.5]
width = 0.1

[[test_functions]]
kind = "FourierMode"
mode = [1]
"#,
        )
        .unwrap()
    }

    #[test]
    fn config_round_trips() {
        let c = hydro_config();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash().unwrap(), back.hash().unwrap());
    }

    #[test]
    fn large_seeds_round_trip() {
        let mut c = hydro_config();
        c.seed = u64::MAX - 3;
        let text = c.to_toml().unwrap();
        assert!(text.contains("0xfffffffffffffffc"));
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap().seed, u64::MAX - 3);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = hydro_config().to_toml().unwrap().replace("[sim]", "[sim]\nalhpa = 2.0");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_ladders_and_replicas_are_rejected() {
        let mut c = hydro_config();
        c.n_ladder = vec![32, 32];
        assert!(c.validate().is_err());
        c.n_ladder = vec![32];
        c.replicas = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_horizon_compares_initial_profile() {
        let mut c = hydro_config();
        c.replicas = 1;
        c.n_ladder = vec![16];
        c.sim.horizon = 0.0;
        c.sim.snapshot_times = vec![];
        let e = execute(&c).unwrap();
        assert_eq!(e.telemetry.events, 0);
        assert!(e.verdicts.is_empty());
        let names: Vec<&str> = e.outputs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["hydro_density_n16.csv", "hydro_stats_n16.csv", "sweep.csv"]);
        let density = String::from_utf8(e.outputs[0].1.clone()).unwrap();
        assert_eq!(density.lines().count(), 17);
    }

    #[test]
    fn execution_is_deterministic() {
        let c = hydro_config();
        let a = execute(&c).unwrap();
        let b = execute(&c).unwrap();
        assert_eq!(a.outputs, b.outputs);
        assert_eq!(a.streams, b.streams);
    }

    #[test]
    fn identical_predictions_are_trivially_monotone() {
        let pts: Vec<SweepPoint> = [32, 64, 128]
            .iter()
            .map(|&n| SweepPoint {
                n,
                l1_error: Some(0.0),
                pi_variance: None,
                dirichlet_residual: Some(0.0),
            })
            .collect();
        let r = sweep_report(&pts).unwrap();
        assert!(r.verdicts.iter().all(|v| v.passed));
        assert!(matches!(sweep_report(&pts[..1]), Err(Error::MissingLadder { .. })));
    }

    #[test]
    fn variance_ratio_band() {
        let mk = |n, v| SweepPoint {
            n,
            l1_error: None,
            pi_variance: Some(v),
            dirichlet_residual: None,
        };
        let r = sweep_report(&[mk(32, 4.0), mk(64, 2.0), mk(128, 0.5)]).unwrap();
        assert_eq!(r.variance_ratios, vec![(32, 2.0), (64, 4.0)]);
        assert!(r.verdicts[0].passed);
        assert!(!r.verdicts[1].passed);
    }

    #[test]
    fn binned_error_of_identical_fields_is_zero() {
        let t = Torus::new(1, 64).unwrap();
        let f = DensityField::new(t, (0..64).map(|x| 1.0 + x as f64 / 64.0).collect(), 0.0).unwrap();
        assert_eq!(binned_relative_l1(&f, &f, 32).unwrap(), 0.0);
        let mut g = f.clone();
        g.values[0] += 0.5;
        g.values[1] -= 0.5;
        assert_eq!(binned_relative_l1(&g, &f, 32).unwrap(), 0.0);
        assert!(binned_relative_l1(&g, &f, 64).unwrap() > 0.0);
    }

    #[test]
    fn sites_round_to_nearest() {
        let t = Torus::new(2, 8).unwrap();
        assert_eq!(site_of(&[0.0, 0.0], t), 0);
        assert_eq!(site_of(&[0.99, 0.26], t), t.index([0, 2]));
    }

    #[test]
    fn collision_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = hydro_config();
        c.n_ladder = vec![16];
        let m = run(&c, dir.path(), false).unwrap();
        assert_eq!(m.outputs.len(), 3);
        assert_eq!(m.streams[0].seeds.len(), 4);
        assert!(matches!(run(&c, dir.path(), false), Err(Error::OutputCollision(_))));
        let again = run(&c, dir.path(), true).unwrap();
        assert_eq!(m.outputs, again.outputs);
        assert_eq!(m.config_sha256, again.config_sha256);
    }
}
