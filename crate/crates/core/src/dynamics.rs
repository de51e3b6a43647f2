//! Event-driven simulation of SIP(alpha) with long-range jumps on the torus.
//!
//! A particle at `x` jumps to `y` at rate `n^beta q(y - x) eta(x) (alpha + eta(y))`.
//! The simulator uses thinning against the running occupancy bound `B`:
//! proposals arrive at rate `n^beta N (alpha + B)`, pick a uniformly random
//! particle and a displacement `z ~ q`, and are accepted with probability
//! `(alpha + eta(x + z)) / (alpha + B)`. `B` is raised whenever a jump creates
//! a new maximum and never lowered. Time is kept in macroscopic units.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::torus::Torus;

/// Occupation numbers plus a flat particle index for O(1) uniform particle
/// sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    torus: Torus,
    occupancy: Vec<u32>,
    particles: Vec<u32>,
    max_occ: u32,
}

impl Configuration {
    pub fn empty(torus: Torus) -> Self {
        Configuration {
            torus,
            occupancy: vec![0; torus.sites()],
            particles: Vec::new(),
            max_occ: 0,
        }
    }

    pub fn from_occupancy(torus: Torus, occupancy: Vec<u32>) -> Result<Self> {
        if occupancy.len() != torus.sites() {
            return Err(Error::GridMismatch {
                expected: torus.sites(),
                found: occupancy.len(),
            });
        }
        let mut particles = Vec::with_capacity(occupancy.iter().map(|&k| k as usize).sum());
        for (site, &k) in occupancy.iter().enumerate() {
            particles.extend(std::iter::repeat_n(site as u32, k as usize));
        }
        let max_occ = occupancy.iter().copied().max().unwrap_or(0);
        Ok(Configuration {
            torus,
            occupancy,
            particles,
            max_occ,
        })
    }

    /// Places one particle per listed site (repeats allowed).
    pub fn from_positions(torus: Torus, positions: &[usize]) -> Result<Self> {
        let mut occ = vec![0u32; torus.sites()];
        for &p in positions {
            if p >= occ.len() {
                return Err(Error::InvalidParameter(format!("site {p} outside torus")));
            }
            occ[p] += 1;
        }
        Self::from_occupancy(torus, occ)
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    /// Sites per unit length.
    pub fn scale(&self) -> usize {
        self.torus.side()
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn eta(&self, site: usize) -> u32 {
        self.occupancy[site]
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn particles(&self) -> &[u32] {
        &self.particles
    }

    /// Running occupancy bound `B >= max eta`.
    pub fn max_bound(&self) -> u32 {
        self.max_occ
    }

    /// Checks conservation bookkeeping: the particle index matches `eta` and
    /// `B` dominates the occupancy.
    pub fn is_consistent(&self) -> bool {
        let mut counts = vec![0u32; self.occupancy.len()];
        for &p in &self.particles {
            counts[p as usize] += 1;
        }
        counts == self.occupancy && self.occupancy.iter().all(|&k| k <= self.max_occ)
    }

    #[inline]
    fn move_particle(&mut self, particle: usize, to: usize) {
        let from = self.particles[particle] as usize;
        self.occupancy[from] -= 1;
        self.occupancy[to] += 1;
        self.particles[particle] = to as u32;
        if self.occupancy[to] > self.max_occ {
            self.max_occ = self.occupancy[to];
        }
    }
}

/// Initial density profile on the unit torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum InitialProfile {
    Constant {
        level: f64,
    },
    /// `background + amplitude * exp(-|u - center|^2 / (2 width^2))`, periodized.
    GaussianBump {
        #[serde(default)]
        background: f64,
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Piecewise-constant values on an `L^d` grid of the unit torus.
    Tabulated {
        values: Vec<f64>,
    },
}

impl InitialProfile {
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            InitialProfile::Constant { level } => {
                if *level < 0.0 || !level.is_finite() {
                    return Err(Error::NegativeProfile(*level));
                }
            }
            InitialProfile::GaussianBump {
                background,
                amplitude,
                center,
                width,
            } => {
                if *background < 0.0 {
                    return Err(Error::NegativeProfile(*background));
                }
                if *amplitude < 0.0 {
                    return Err(Error::NegativeProfile(*amplitude));
                }
                if !(*width > 0.0) {
                    return Err(Error::InvalidParameter(format!("bump width {width}")));
                }
                if center.len() != dim {
                    return Err(Error::InvalidParameter("bump center has wrong dimension".into()));
                }
            }
            InitialProfile::Tabulated { values } => {
                if values.is_empty() {
                    return Err(Error::InvalidParameter("empty profile table".into()));
                }
                if let Some(&v) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
                    return Err(Error::NegativeProfile(v));
                }
                if dim == 2 {
                    let l = (values.len() as f64).sqrt().round() as usize;
                    if l * l != values.len() {
                        return Err(Error::InvalidParameter("2d profile table must be square".into()));
                    }
                }
            }
        }
        Ok(())
    }

    /// Profile value at a macroscopic point of the unit torus.
    pub fn eval(&self, u: [f64; 2], dim: usize) -> f64 {
        match self {
            InitialProfile::Constant { level } => *level,
            InitialProfile::GaussianBump {
                background,
                amplitude,
                center,
                width,
            } => {
                let c = [center[0], if dim == 2 { center[1] } else { 0.0 }];
                background + amplitude * periodic_gaussian(u, c, *width, dim)
            }
            InitialProfile::Tabulated { values } => {
                let l = if dim == 2 {
                    (values.len() as f64).sqrt().round() as usize
                } else {
                    values.len()
                };
                let cell = |x: f64| ((x.rem_euclid(1.0) * l as f64).floor() as usize).min(l - 1);
                if dim == 2 {
                    values[cell(u[0]) * l + cell(u[1])]
                } else {
                    values[cell(u[0])]
                }
            }
        }
    }

    pub fn on_grid(&self, torus: Torus) -> Vec<f64> {
        torus.iter().map(|i| self.eval(torus.point(i), torus.dim())).collect()
    }

    /// Upper bound `||rho_0||_inf` on the unit torus.
    pub fn sup_norm(&self) -> f64 {
        match self {
            InitialProfile::Constant { level } => *level,
            InitialProfile::GaussianBump {
                background,
                amplitude,
                center,
                width,
            } => {
                let dim = center.len();
                let c = [center[0], if dim == 2 { center[1] } else { 0.0 }];
                background + amplitude * periodic_gaussian(c, c, *width, dim)
            }
            InitialProfile::Tabulated { values } => values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Unit-height Gaussian summed over periodic images.
pub fn periodic_gaussian(u: [f64; 2], center: [f64; 2], width: f64, dim: usize) -> f64 {
    let images = (4.0 * width).ceil() as i64 + 1;
    let yr = if dim == 2 { images } else { 0 };
    let mut total = 0.0;
    for kx in -images..=images {
        for ky in -yr..=yr {
            let dx = u[0] - center[0] - kx as f64;
            let dy = if dim == 2 { u[1] - center[1] - ky as f64 } else { 0.0 };
            total += (-(dx * dx + dy * dy) / (2.0 * width * width)).exp();
        }
    }
    total
}

/// Simulation parameters. `beta` must agree with the kernel's exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha = {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(Error::BetaOutOfRange(self.beta));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon = {}", self.horizon)));
        }
        if self.snapshot_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("snapshot times must be sorted".into()));
        }
        if self.snapshot_times.iter().any(|&t| !(0.0..=self.horizon).contains(&t)) {
            return Err(Error::InvalidParameter("snapshot times must lie in [0, T]".into()));
        }
        Ok(())
    }

    /// Snapshot grid actually used; an empty list means "final time only".
    pub fn effective_snapshots(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.horizon]
        } else {
            self.snapshot_times.clone()
        }
    }
}

/// Independent negative-binomial site marginals with shape `alpha` and mean
/// `rho_0(x / n)`, drawn as a gamma-Poisson mixture.
pub fn init_product_negbin<R: Rng + ?Sized>(
    profile: &InitialProfile,
    alpha: f64,
    torus: Torus,
    rng: &mut R,
) -> Result<Configuration> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
    }
    profile.validate(torus.dim())?;
    let means = profile.on_grid(torus);
    negbin_from_means(&means, alpha, torus, rng)
}

/// Same as [`init_product_negbin`] with explicit per-site means.
pub fn negbin_from_means<R: Rng + ?Sized>(means: &[f64], alpha: f64, torus: Torus, rng: &mut R) -> Result<Configuration> {
    if means.len() != torus.sites() {
        return Err(Error::GridMismatch {
            expected: torus.sites(),
            found: means.len(),
        });
    }
    let shape = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut occ = Vec::with_capacity(means.len());
    for &m in means {
        if m < 0.0 || !m.is_finite() {
            return Err(Error::NegativeProfile(m));
        }
        if m == 0.0 {
            occ.push(0);
            continue;
        }
        let lambda = shape.sample(rng) * m / alpha;
        let k = if lambda > 0.0 {
            Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(rng) as u32
        } else {
            0
        };
        occ.push(k);
    }
    Configuration::from_occupancy(torus, occ)
}

/// Outcome of one thinning proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Exponential waiting time of the proposal clock (macroscopic units).
    pub dt: f64,
    /// Executed jump `(from, to)`, `None` when the proposal was rejected.
    pub jump: Option<(usize, usize)>,
}

#[inline]
fn propose<R: Rng + ?Sized>(config: &Configuration, kernel: &DiscreteKernel, alpha: f64, rng: &mut R) -> Option<(usize, usize)> {
    let n_part = config.particles.len();
    let p = rng.gen_range(0..n_part);
    let from = config.particles[p] as usize;
    let to = config.torus.shift(from, kernel.sample_jump(rng));
    let bound = alpha + config.max_occ as f64;
    if rng.gen::<f64>() * bound < alpha + config.occupancy[to] as f64 {
        Some((p, to))
    } else {
        None
    }
}

#[inline]
fn proposal_rate(config: &Configuration, kernel: &DiscreteKernel, alpha: f64) -> f64 {
    kernel.speed() * config.particles.len() as f64 * (alpha + config.max_occ as f64)
}

/// One thinning proposal. The clock advances by an exponential of the
/// proposal rate whether or not the jump is accepted.
pub fn step<R: Rng + ?Sized>(config: &mut Configuration, kernel: &DiscreteKernel, alpha: f64, rng: &mut R) -> Result<StepOutcome> {
    if config.particles.is_empty() {
        return Err(Error::NoParticles);
    }
    if kernel.torus() != config.torus {
        return Err(Error::GridMismatch {
            expected: kernel.torus().sites(),
            found: config.torus.sites(),
        });
    }
    let rate = proposal_rate(config, kernel, alpha);
    let e: f64 = Exp1.sample(rng);
    let dt = e / rate;
    let jump = propose(config, kernel, alpha, rng).map(|(p, to)| {
        let from = config.particles[p] as usize;
        config.move_particle(p, to);
        (from, to)
    });
    Ok(StepOutcome { dt, jump })
}

/// Hooks called while a trajectory is simulated.
pub trait Observer {
    /// After an accepted jump at time `t`; `config` is already updated.
    fn on_jump(&mut self, _t: f64, _from: usize, _to: usize, _config: &Configuration) {}
    /// At each requested snapshot time.
    fn on_snapshot(&mut self, _t: f64, _config: &Configuration) {}
    /// Once, at the horizon.
    fn on_end(&mut self, _horizon: f64, _config: &Configuration) {}
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn on_jump(&mut self, t: f64, from: usize, to: usize, config: &Configuration) {
        self.0.on_jump(t, from, to, config);
        self.1.on_jump(t, from, to, config);
    }
    fn on_snapshot(&mut self, t: f64, config: &Configuration) {
        self.0.on_snapshot(t, config);
        self.1.on_snapshot(t, config);
    }
    fn on_end(&mut self, horizon: f64, config: &Configuration) {
        self.0.on_end(horizon, config);
        self.1.on_end(horizon, config);
    }
}

/// Event telemetry of one trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub proposals: u64,
    pub accepted: u64,
    /// `int_0^T` of the proposal rate; the expected proposal count.
    pub integrated_rate: f64,
}

impl RunStats {
    pub fn merge(&mut self, other: &RunStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.integrated_rate += other.integrated_rate;
    }
}

/// Simulates up to `horizon`, reporting snapshots (sorted times in
/// `[0, horizon]`) and accepted jumps to `observer`.
pub fn simulate<R: Rng + ?Sized, O: Observer + ?Sized>(
    config: &mut Configuration,
    kernel: &DiscreteKernel,
    alpha: f64,
    horizon: f64,
    snapshot_times: &[f64],
    rng: &mut R,
    observer: &mut O,
) -> Result<RunStats> {
    if kernel.torus() != config.torus {
        return Err(Error::GridMismatch {
            expected: kernel.torus().sites(),
            found: config.torus.sites(),
        });
    }
    let mut stats = RunStats::default();
    let mut t = 0.0;
    let mut next = 0;
    if !config.particles.is_empty() {
        loop {
            let rate = proposal_rate(config, kernel, alpha);
            let e: f64 = Exp1.sample(rng);
            let t_new = t + e / rate;
            while next < snapshot_times.len() && snapshot_times[next] < t_new && snapshot_times[next] <= horizon {
                observer.on_snapshot(snapshot_times[next], config);
                next += 1;
            }
            if t_new > horizon {
                stats.integrated_rate += rate * (horizon - t);
                break;
            }
            stats.integrated_rate += rate * (t_new - t);
            t = t_new;
            stats.proposals += 1;
            if let Some((p, to)) = propose(config, kernel, alpha, rng) {
                let from = config.particles[p] as usize;
                config.move_particle(p, to);
                stats.accepted += 1;
                observer.on_jump(t, from, to, config);
            }
        }
    }
    while next < snapshot_times.len() && snapshot_times[next] <= horizon {
        observer.on_snapshot(snapshot_times[next], config);
        next += 1;
    }
    observer.on_end(horizon, config);
    Ok(stats)
}

/// Deep copies of the configuration at each snapshot time.
#[derive(Debug, Default)]
pub struct SnapshotRecorder {
    pub snapshots: Vec<(f64, Configuration)>,
}

impl Observer for SnapshotRecorder {
    fn on_snapshot(&mut self, t: f64, config: &Configuration) {
        self.snapshots.push((t, config.clone()));
    }
}

/// Runs to `params.horizon` and returns `(time, configuration)` at each
/// snapshot time (the horizon alone when none are requested).
pub fn run_snapshots<R: Rng + ?Sized>(
    config: &mut Configuration,
    kernel: &DiscreteKernel,
    params: &SimParams,
    rng: &mut R,
) -> Result<Vec<(f64, Configuration)>> {
    params.validate()?;
    if (params.beta - kernel.beta()).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "simulation beta {} differs from kernel beta {}",
            params.beta,
            kernel.beta()
        )));
    }
    let times = params.effective_snapshots();
    let mut rec = SnapshotRecorder::default();
    simulate(config, kernel, params.alpha, params.horizon, &times, rng, &mut rec)?;
    Ok(rec.snapshots)
}

/// Negative-binomial pmf with shape `alpha` and mean `rho`, by direct
/// evaluation in log space.
pub fn negbin_pmf(k: u32, alpha: f64, rho: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    if rho == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let p = rho / (alpha + rho);
    let k = k as f64;
    (ln_gamma(k + alpha) - ln_gamma(alpha) - ln_gamma(k + 1.0) + alpha * (1.0 - p).ln() + k * p.ln()).exp()
}
