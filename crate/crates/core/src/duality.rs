//! Self-duality of SIP(alpha): duality weights, labeled dual walkers, exact
//! small-system semigroups and duality-based moment estimators.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dynamics::{init_product_negbin, simulate, Configuration, InitialProfile};
use crate::error::{Error, Result};
use crate::kernel::DiscreteKernel;
use crate::seed::par_replicas;
use crate::stats::ReplicaStats;
use crate::torus::Torus;

pub const MAX_WALKERS: usize = 4;

/// `k <= 4` labeled walkers on the torus (coordinate representation of a
/// dual configuration).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DualConfiguration {
    torus: Torus,
    positions: Vec<usize>,
}

impl DualConfiguration {
    pub fn new(torus: Torus, positions: Vec<usize>) -> Result<Self> {
        if positions.len() > MAX_WALKERS {
            return Err(Error::TooManyWalkers(positions.len()));
        }
        if let Some(&p) = positions.iter().find(|&&p| p >= torus.sites()) {
            return Err(Error::InvalidParameter(format!("walker site {p} outside torus")));
        }
        Ok(DualConfiguration { torus, positions })
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn k(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// `(site, multiplicity)` pairs of the unlabeled configuration.
    pub fn multiplicities(&self) -> Vec<(usize, u32)> {
        let mut sorted = self.positions.clone();
        sorted.sort_unstable();
        let mut out: Vec<(usize, u32)> = Vec::with_capacity(sorted.len());
        for p in sorted {
            match out.last_mut() {
                Some((s, m)) if *s == p => *m += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }

    pub fn sorted_positions(&self) -> Vec<usize> {
        let mut s = self.positions.clone();
        s.sort_unstable();
        s
    }

    pub fn occupancy(&self) -> Vec<u32> {
        let mut occ = vec![0u32; self.torus.sites()];
        for &p in &self.positions {
            occ[p] += 1;
        }
        occ
    }
}

/// Single-site weight `d(m, n) = 1{m <= n} n!/(n-m)! Gamma(alpha)/Gamma(alpha+m)`.
pub fn site_weight(m: u32, n: u32, alpha: f64) -> f64 {
    if m > n {
        return 0.0;
    }
    if m == 0 {
        return 1.0;
    }
    let (m, n) = (m as f64, n as f64);
    (ln_gamma(n + 1.0) - ln_gamma(n - m + 1.0) + ln_gamma(alpha) - ln_gamma(alpha + m)).exp()
}

/// `D(xi, eta) = prod_x d(xi(x), eta(x))`.
pub fn duality_weight(xi: &DualConfiguration, eta: &Configuration, alpha: f64) -> Result<f64> {
    if xi.torus != eta.torus() {
        return Err(Error::GridMismatch {
            expected: eta.torus().sites(),
            found: xi.torus.sites(),
        });
    }
    Ok(weight_unchecked(xi, eta.occupancy(), alpha))
}

fn weight_unchecked(xi: &DualConfiguration, eta: &[u32], alpha: f64) -> f64 {
    xi.multiplicities()
        .into_iter()
        .map(|(site, m)| site_weight(m, eta[site], alpha))
        .product()
}

/// `E[d(m, eta)]` for `eta` negative binomial with shape `alpha` and mean `rho`.
pub fn negbin_dual_moment(m: u32, rho: f64, alpha: f64) -> f64 {
    (rho / alpha).powi(m as i32)
}

/// One thinning proposal of the dual walkers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualStep {
    pub dt: f64,
    pub walker: usize,
    pub target: usize,
    /// Number of other walkers sitting on `target` when proposed.
    pub target_load: usize,
    pub accepted: bool,
}

/// Walker `i` jumps by `r` at rate `n^beta q(r) (alpha + #{j != i : x_j = x_i + r})`,
/// simulated by thinning against `alpha + k - 1`.
pub fn step_dual_walkers<R: Rng + ?Sized>(
    xi: &mut DualConfiguration,
    kernel: &DiscreteKernel,
    alpha: f64,
    rng: &mut R,
) -> Result<DualStep> {
    let k = xi.k();
    if k == 0 {
        return Err(Error::NoParticles);
    }
    let bound = alpha + (k - 1) as f64;
    let rate = kernel.speed() * k as f64 * bound;
    let e: f64 = Exp1.sample(rng);
    let walker = rng.gen_range(0..k);
    let target = xi.torus.shift(xi.positions[walker], kernel.sample_jump(rng));
    let target_load = xi
        .positions
        .iter()
        .enumerate()
        .filter(|&(j, &p)| j != walker && p == target)
        .count();
    let accepted = rng.gen::<f64>() * bound < alpha + target_load as f64;
    if accepted {
        xi.positions[walker] = target;
    }
    Ok(DualStep {
        dt: e / rate,
        walker,
        target,
        target_load,
        accepted,
    })
}

/// Runs the dual walkers up to macroscopic time `t`.
pub fn simulate_dual<R: Rng + ?Sized>(
    xi: &mut DualConfiguration,
    kernel: &DiscreteKernel,
    alpha: f64,
    t: f64,
    rng: &mut R,
) -> Result<()> {
    if xi.k() == 0 {
        return Ok(());
    }
    let mut clock = 0.0;
    loop {
        let mut trial = xi.clone();
        let s = step_dual_walkers(&mut trial, kernel, alpha, rng)?;
        clock += s.dt;
        if clock > t {
            return Ok(());
        }
        *xi = trial;
    }
}

/// Generator of the `N`-particle SIP on a small torus, on the enumerated
/// state space of occupation vectors.
#[derive(Debug, Clone)]
pub struct ExactModel {
    torus: Torus,
    alpha: f64,
    particles: usize,
    states: Vec<Vec<u32>>,
    lookup: HashMap<Vec<u32>, usize>,
    /// Off-diagonal rates out of each state.
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
    lambda: f64,
}

pub const MAX_EXACT_STATES: usize = 100_000;
pub const MAX_DENSE_STATES: usize = 1_000;
const UNIFORMIZATION_TOL: f64 = 1e-10;

/// `C(N + M - 1, N)`, saturating.
pub fn state_count(sites: usize, particles: usize) -> usize {
    let mut c: u128 = 1;
    for i in 0..particles as u128 {
        c = c * (sites as u128 + i) / (i + 1);
        if c > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    c as usize
}

fn enumerate(sites: usize, particles: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() == sites - 1 {
        prefix.push(particles);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for k in (0..=particles).rev() {
        prefix.push(k);
        enumerate(sites, particles - k, prefix, out);
        prefix.pop();
    }
}

impl ExactModel {
    pub fn new(kernel: &DiscreteKernel, alpha: f64, particles: usize) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha = {alpha}")));
        }
        let torus = kernel.torus();
        let count = state_count(torus.sites(), particles);
        if count > MAX_EXACT_STATES {
            return Err(Error::StateSpaceTooLarge(count));
        }
        let mut states = Vec::with_capacity(count);
        enumerate(torus.sites(), particles as u32, &mut Vec::new(), &mut states);
        let lookup: HashMap<Vec<u32>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        let speed = kernel.speed();
        let support: Vec<([i64; 2], f64)> = kernel.support().collect();
        let mut rows = Vec::with_capacity(count);
        let mut diag = Vec::with_capacity(count);
        let mut scratch = Vec::new();
        for s in &states {
            let mut row: Vec<(usize, f64)> = Vec::new();
            for x in torus.iter().filter(|&x| s[x] > 0) {
                for &(z, p) in &support {
                    let y = torus.shift(x, z);
                    let rate = speed * p * s[x] as f64 * (alpha + s[y] as f64);
                    scratch.clear();
                    scratch.extend_from_slice(s);
                    scratch[x] -= 1;
                    scratch[y] += 1;
                    let j = lookup[&scratch];
                    match row.iter_mut().find(|(idx, _)| *idx == j) {
                        Some(entry) => entry.1 += rate,
                        None => row.push((j, rate)),
                    }
                }
            }
            diag.push(-row.iter().map(|&(_, r)| r).sum::<f64>());
            rows.push(row);
        }
        let lambda = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        Ok(ExactModel {
            torus,
            alpha,
            particles,
            states,
            lookup,
            rows,
            diag,
            lambda,
        })
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn index_of(&self, occupancy: &[u32]) -> Option<usize> {
        self.lookup.get(occupancy).copied()
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Uniformization rate `Lambda = max |G_ii|`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest absolute generator row sum.
    pub fn max_row_sum(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(r, d)| (r.iter().map(|&(_, v)| v).sum::<f64>() + d).abs())
            .fold(0.0, f64::max)
    }

    pub fn values(&self, f: impl Fn(&[u32]) -> f64) -> Vec<f64> {
        self.states.iter().map(|s| f(s)).collect()
    }

    /// Law of the state at time `t` from `initial`, by uniformization with
    /// Poisson tail mass at most `1e-10`.
    pub fn distribution_at(&self, initial: usize, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidParameter(format!("time {t}")));
        }
        let mut w = vec![0.0; self.len()];
        w[initial] = 1.0;
        let mu = self.lambda * t;
        if mu == 0.0 {
            return Ok(w);
        }
        let max_terms = (mu + 40.0 * mu.sqrt() + 200.0).ceil() as usize;
        let mut out = vec![0.0; self.len()];
        let mut mass = 0.0;
        let mut next = vec![0.0; self.len()];
        for k in 0..=max_terms {
            let weight = (-mu + k as f64 * mu.ln() - ln_gamma(k as f64 + 1.0)).exp();
            for (o, v) in out.iter_mut().zip(&w) {
                *o += weight * v;
            }
            mass += weight;
            if 1.0 - mass <= UNIFORMIZATION_TOL && k as f64 >= mu {
                return Ok(out);
            }
            for (i, v) in next.iter_mut().enumerate() {
                *v = w[i] * (1.0 + self.diag[i] / self.lambda);
            }
            for (i, row) in self.rows.iter().enumerate() {
                let wi = w[i] / self.lambda;
                if wi == 0.0 {
                    continue;
                }
                for &(j, r) in row {
                    next[j] += wi * r;
                }
            }
            std::mem::swap(&mut w, &mut next);
        }
        Err(Error::Truncation {
            tol: UNIFORMIZATION_TOL,
            terms: max_terms,
        })
    }

    /// `E_initial[f(eta_t)]` with `f` given per state.
    pub fn exact_expectation(&self, f: &[f64], initial: usize, t: f64) -> Result<f64> {
        if f.len() != self.len() {
            return Err(Error::GridMismatch {
                expected: self.len(),
                found: f.len(),
            });
        }
        let p = self.distribution_at(initial, t)?;
        Ok(p.iter().zip(f).map(|(a, b)| a * b).sum())
    }

    pub fn dense_generator(&self) -> Result<DMatrix<f64>> {
        if self.len() > MAX_DENSE_STATES {
            return Err(Error::StateSpaceTooLarge(self.len()));
        }
        let mut g = DMatrix::zeros(self.len(), self.len());
        for (i, row) in self.rows.iter().enumerate() {
            g[(i, i)] = self.diag[i];
            for &(j, r) in row {
                g[(i, j)] += r;
            }
        }
        Ok(g)
    }

    /// Same quantity as [`Self::exact_expectation`] through a dense matrix
    /// exponential (Pade scaling and squaring).
    pub fn dense_expectation(&self, f: &[f64], initial: usize, t: f64) -> Result<f64> {
        let g = self.dense_generator()? * t;
        let e = g.exp();
        Ok((0..self.len()).map(|j| e[(initial, j)] * f[j]).sum())
    }
}

/// Law of the initial configuration in a duality check.
#[derive(Debug, Clone, PartialEq)]
pub enum InitLaw {
    /// Product negative-binomial with mean profile `rho_0`.
    NegBinProduct(InitialProfile),
    /// Deterministic start.
    Fixed(Configuration),
}

impl InitLaw {
    fn sample<R: Rng + ?Sized>(&self, alpha: f64, torus: Torus, rng: &mut R) -> Result<Configuration> {
        match self {
            InitLaw::NegBinProduct(p) => init_product_negbin(p, alpha, torus, rng),
            InitLaw::Fixed(c) => Ok(c.clone()),
        }
    }

    /// `E[D(xi, eta_0)]` for a fixed dual configuration.
    fn initial_moment(&self, xi: &DualConfiguration, alpha: f64) -> f64 {
        match self {
            InitLaw::NegBinProduct(p) => {
                let torus = xi.torus;
                xi.positions
                    .iter()
                    .map(|&x| p.eval(torus.point(x), torus.dim()) / alpha)
                    .product()
            }
            InitLaw::Fixed(c) => weight_unchecked(xi, c.occupancy(), alpha),
        }
    }
}

/// Two Monte Carlo sides of `E_eta[D(xi, eta_t)] = E_xi[D(xi_t, eta)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub k: usize,
    pub t: f64,
    pub replicas: usize,
    pub lhs: f64,
    pub se_lhs: f64,
    pub rhs: f64,
    pub se_rhs: f64,
    /// Exact common value when the initial state is fixed and small enough.
    pub oracle: Option<f64>,
    /// Both sides have zero sample variance.
    pub degenerate: bool,
}

impl DualityReport {
    pub fn combined_se(&self) -> f64 {
        self.se_lhs.hypot(self.se_rhs)
    }

    /// `|lhs - rhs| <= sigmas * combined SE`; exact equality when degenerate.
    pub fn passes(&self, sigmas: f64) -> bool {
        let diff = (self.lhs - self.rhs).abs();
        if self.degenerate {
            return diff <= 1e-12 * self.lhs.abs().max(1.0);
        }
        diff <= sigmas * self.combined_se()
    }
}

pub const MIN_DUALITY_REPLICAS: usize = 1000;

/// Forward and dual Monte Carlo estimates of the duality identity at time `t`.
pub fn duality_check(
    xi0: &DualConfiguration,
    law: &InitLaw,
    kernel: &DiscreteKernel,
    alpha: f64,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<DualityReport> {
    if replicas < MIN_DUALITY_REPLICAS {
        return Err(Error::InvalidParameter(format!(
            "duality check needs at least {MIN_DUALITY_REPLICAS} replicas, got {replicas}"
        )));
    }
    if xi0.torus != kernel.torus() {
        return Err(Error::GridMismatch {
            expected: kernel.torus().sites(),
            found: xi0.torus.sites(),
        });
    }
    let torus = kernel.torus();
    let forward = par_replicas(replicas, seed, "duality-forward", |rng| {
        let mut eta = law.sample(alpha, torus, rng)?;
        simulate(&mut eta, kernel, alpha, t, &[], rng, &mut ())?;
        Ok(weight_unchecked(xi0, eta.occupancy(), alpha))
    })?;
    let dual = par_replicas(replicas, seed, "duality-dual", |rng| {
        let mut xi = xi0.clone();
        simulate_dual(&mut xi, kernel, alpha, t, rng)?;
        Ok(law.initial_moment(&xi, alpha))
    })?;
    let fs = ReplicaStats::from_slice(&forward);
    let ds = ReplicaStats::from_slice(&dual);
    let oracle = match law {
        InitLaw::Fixed(eta0) => exact_duality(xi0, eta0, kernel, alpha, t).ok().map(|(f, _)| f),
        InitLaw::NegBinProduct(_) => None,
    };
    Ok(DualityReport {
        k: xi0.k(),
        t,
        replicas,
        lhs: fs.mean(),
        se_lhs: fs.se(),
        rhs: ds.mean(),
        se_rhs: ds.se(),
        oracle,
        degenerate: fs.variance() == 0.0 && ds.variance() == 0.0,
    })
}

/// Exact `(E_eta0[D(xi0, eta_t)], E_xi0[D(xi_t, eta0)])` from the `N`- and
/// `k`-particle generators.
pub fn exact_duality(
    xi0: &DualConfiguration,
    eta0: &Configuration,
    kernel: &DiscreteKernel,
    alpha: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let big = ExactModel::new(kernel, alpha, eta0.particle_count())?;
    let small = ExactModel::new(kernel, alpha, xi0.k())?;
    let xi_occ = xi0.occupancy();
    let weight = |m: &[u32], n: &[u32]| -> f64 { m.iter().zip(n).map(|(&a, &b)| site_weight(a, b, alpha)).product() };
    let f_big = big.values(|s| weight(&xi_occ, s));
    let f_small = small.values(|s| weight(s, eta0.occupancy()));
    let i_big = big.index_of(eta0.occupancy()).expect("enumerated");
    let i_small = small.index_of(&xi_occ).expect("enumerated");
    Ok((
        big.exact_expectation(&f_big, i_big, t)?,
        small.exact_expectation(&f_small, i_small, t)?,
    ))
}

/// Monte Carlo `E[prod_i eta_t(x_i)]` with its predicted upper bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub points: Vec<usize>,
    pub t: f64,
    pub moment: f64,
    pub se: f64,
    pub bound: f64,
}

/// `C*_{1,2} = 5 max{C_2, C_1^2, C_1, 1}`.
pub fn c_star(c1: f64, c2: f64) -> f64 {
    5.0 * c2.max(c1 * c1).max(c1).max(1.0)
}

fn stirling2(m: u32, j: u32) -> f64 {
    if m == 0 && j == 0 {
        return 1.0;
    }
    if m == 0 || j == 0 {
        return 0.0;
    }
    j as f64 * stirling2(m - 1, j) + stirling2(m - 1, j - 1)
}

/// `E[eta^m]` for a negative binomial of shape `alpha` and mean `rho`, from
/// the factorial moments `(rho/alpha)^j Gamma(alpha+j)/Gamma(alpha)`.
pub fn negbin_raw_moment(m: u32, rho: f64, alpha: f64) -> f64 {
    (0..=m)
        .map(|j| {
            let fact = (rho / alpha).powi(j as i32) * (ln_gamma(alpha + j as f64) - ln_gamma(alpha)).exp();
            stirling2(m, j) * fact
        })
        .sum()
}

/// Upper bound on `E[prod_i eta_t(x_i)]` under negative-binomial start with
/// `||rho_0||_inf = rho_sup` (constants `C_k = 0`).
///
/// One and two points use the growth-control bounds; three and four points use
/// the product of negative-binomial raw moments at level `rho_sup` over the
/// distinct sites.
pub fn moment_bound(points: &[usize], alpha: f64, rho_sup: f64) -> Result<f64> {
    match points.len() {
        0 => Ok(1.0),
        1 => Ok(rho_sup),
        2 => {
            let cs = c_star(0.0, 0.0);
            let norm21 = (rho_sup * rho_sup).max(rho_sup);
            let diag = if points[0] == points[1] {
                cs * norm21 / alpha + rho_sup
            } else {
                0.0
            };
            Ok(cs * norm21 + diag)
        }
        3 | 4 => {
            let mut sorted = points.to_vec();
            sorted.sort_unstable();
            let mut bound = 1.0;
            let mut i = 0;
            while i < sorted.len() {
                let mut m = 1;
                while i + m < sorted.len() && sorted[i + m] == sorted[i] {
                    m += 1;
                }
                bound *= negbin_raw_moment(m as u32, rho_sup, alpha);
                i += m;
            }
            Ok(bound)
        }
        k => Err(Error::TooManyWalkers(k)),
    }
}

/// Monte Carlo k-point moment of `eta_t` at up to four sites.
pub fn correlation_estimate(
    points: &[usize],
    law: &InitLaw,
    kernel: &DiscreteKernel,
    alpha: f64,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let mut out = correlation_batch(&[points.to_vec()], law, kernel, alpha, t, replicas, seed)?;
    Ok(out.remove(0))
}

/// [`correlation_estimate`] for several point sets read off the same
/// trajectories.
pub fn correlation_batch(
    point_sets: &[Vec<usize>],
    law: &InitLaw,
    kernel: &DiscreteKernel,
    alpha: f64,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<CorrelationReport>> {
    let torus = kernel.torus();
    for points in point_sets {
        if points.len() > MAX_WALKERS {
            return Err(Error::TooManyWalkers(points.len()));
        }
        if let Some(&p) = points.iter().find(|&&p| p >= torus.sites()) {
            return Err(Error::InvalidParameter(format!("site {p} outside torus")));
        }
    }
    let values = par_replicas(replicas, seed, "correlation", |rng| {
        let mut eta = law.sample(alpha, torus, rng)?;
        simulate(&mut eta, kernel, alpha, t, &[], rng, &mut ())?;
        Ok(point_sets
            .iter()
            .map(|points| points.iter().map(|&p| eta.eta(p) as f64).product::<f64>())
            .collect::<Vec<f64>>())
    })?;
    let rho_sup = match law {
        InitLaw::NegBinProduct(p) => p.sup_norm(),
        InitLaw::Fixed(c) => c.occupancy().iter().copied().max().unwrap_or(0) as f64,
    };
    point_sets
        .iter()
        .enumerate()
        .map(|(i, points)| {
            let stats = ReplicaStats::from_slice(&values.iter().map(|v| v[i]).collect::<Vec<_>>());
            Ok(CorrelationReport {
                points: points.clone(),
                t,
                moment: stats.mean(),
                se: stats.se(),
                bound: moment_bound(points, alpha, rho_sup)?,
            })
        })
        .collect()
}
