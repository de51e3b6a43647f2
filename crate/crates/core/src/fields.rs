//! Empirical and fluctuation fields evaluated along simulated trajectories,
//! together with the carré du champ and Dynkin martingale residuals.
//!
//! Normalizations (torus side `n`, dimension `d`):
//! - `pi(phi) = n^-d sum_x eta(x) phi(x/n)`
//! - `Y(phi) = n^{d/2} (pi(phi) - n^-d sum_x rho_n(t, x) phi(x/n))`
//! - `Gamma_n(phi) = n^beta n^-d sum_{x,z} q(z) eta(x) (alpha + eta(x+z)) (phi(x+z) - phi(x))^2`,
//!   the quadratic-variation rate of `Y(phi)`.
//!
//! Dynkin residuals are reported on the fluctuation scale, so their variance
//! matches `int Gamma_n ds`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate, Configuration, Observer, RunStats};
use crate::error::{Error, Result};
use crate::hydro::{apply_l, DensityField};
use crate::kernel::{discrete_symbol, DiscreteKernel};
use crate::spectral::Spectral;
use crate::stats::ReplicaStats;
use crate::torus::Torus;

/// Test functions on the unit torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum TestFunction {
    /// `amplitude * cos(2 pi j.u + phase)`.
    FourierMode {
        mode: Vec<i64>,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Periodized `amplitude * exp(-|u - center|^2 / (2 width^2))`.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Piecewise-constant table on an `L^d` grid.
    Tabulated { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl TestFunction {
    pub fn fourier(mode: [i64; 2], dim: usize) -> Self {
        TestFunction::FourierMode {
            mode: mode[..dim].to_vec(),
            phase: 0.0,
            amplitude: 1.0,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            TestFunction::FourierMode { mode, phase, amplitude } => {
                if mode.len() != dim || !phase.is_finite() || !amplitude.is_finite() {
                    return Err(Error::InvalidParameter("bad Fourier test function".into()));
                }
            }
            TestFunction::GaussianBump { center, width, amplitude } => {
                if center.len() != dim || !(*width > 0.0) || !amplitude.is_finite() {
                    return Err(Error::InvalidParameter("bad Gaussian test function".into()));
                }
            }
            TestFunction::Tabulated { values } => {
                if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter("bad tabulated test function".into()));
                }
                let l = (values.len() as f64).sqrt().round() as usize;
                if dim == 2 && l * l != values.len() {
                    return Err(Error::InvalidParameter("2d test table must be square".into()));
                }
            }
        }
        Ok(())
    }

    /// Short identifier used in CSV output.
    pub fn label(&self) -> String {
        match self {
            TestFunction::FourierMode { mode, .. } => {
                format!("fourier{}", mode.iter().map(|j| format!("_{j}")).collect::<String>())
            }
            TestFunction::GaussianBump { center, width, .. } => {
                format!("bump_{}_w{width}", center.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("_"))
            }
            TestFunction::Tabulated { values } => format!("table{}", values.len()),
        }
    }

    pub fn eval(&self, u: [f64; 2], dim: usize) -> f64 {
        match self {
            TestFunction::FourierMode { mode, phase, amplitude } => {
                let dot = mode[0] as f64 * u[0] + if dim == 2 { mode[1] as f64 * u[1] } else { 0.0 };
                amplitude * (2.0 * PI * dot + phase).cos()
            }
            TestFunction::GaussianBump { center, width, amplitude } => {
                let c = [center[0], if dim == 2 { center[1] } else { 0.0 }];
                amplitude * crate::dynamics::periodic_gaussian(u, c, *width, dim)
            }
            TestFunction::Tabulated { values } => {
                crate::dynamics::InitialProfile::Tabulated { values: values.clone() }.eval(u, dim)
            }
        }
    }

    /// Restriction `Phi_n phi` to the grid of `torus`.
    pub fn on_grid(&self, torus: Torus) -> Vec<f64> {
        torus.iter().map(|i| self.eval(torus.point(i), torus.dim())).collect()
    }

    /// Exact continuum Fourier coefficient `int phi(u) e^{-2 pi i j.u} du`,
    /// when available in closed form.
    pub fn fourier_coefficient(&self, mode: [i64; 2], dim: usize) -> Option<Complex64> {
        match self {
            TestFunction::FourierMode { mode: m, phase, amplitude } => {
                let m2 = [m[0], if dim == 2 { m[1] } else { 0 }];
                let mut c = Complex64::new(0.0, 0.0);
                if mode == m2 {
                    c += 0.5 * amplitude * Complex64::from_polar(1.0, *phase);
                }
                if mode == [-m2[0], -m2[1]] {
                    c += 0.5 * amplitude * Complex64::from_polar(1.0, -*phase);
                }
                Some(c)
            }
            TestFunction::GaussianBump { center, width, amplitude } => {
                let c = [center[0], if dim == 2 { center[1] } else { 0.0 }];
                let j2 = (mode[0] * mode[0] + mode[1] * mode[1]) as f64;
                let mag = amplitude
                    * (2.0 * PI * width * width).powf(dim as f64 / 2.0)
                    * (-2.0 * PI * PI * width * width * j2).exp();
                let arg = -2.0 * PI * (mode[0] as f64 * c[0] + mode[1] as f64 * c[1]);
                Some(Complex64::from_polar(mag, arg))
            }
            TestFunction::Tabulated { .. } => None,
        }
    }

    /// Fourier coefficients on the box `|j|_inf <= max_mode`: closed form
    /// when known, otherwise from an FFT on a fine grid.
    pub fn coefficients(&self, dim: usize, max_mode: usize, fine_side: usize) -> Result<Vec<([i64; 2], Complex64)>> {
        let m = max_mode as i64;
        let ylim = if dim == 2 { m } else { 0 };
        let modes: Vec<[i64; 2]> = (-m..=m).flat_map(|a| (-ylim..=ylim).map(move |b| [a, b])).collect();
        if self.fourier_coefficient([0, 0], dim).is_some() {
            return Ok(modes
                .into_iter()
                .map(|j| (j, self.fourier_coefficient(j, dim).expect("closed form")))
                .collect());
        }
        if fine_side < 2 * max_mode + 2 {
            return Err(Error::InvalidParameter("fine grid too coarse for requested modes".into()));
        }
        let torus = Torus::new(dim, fine_side)?;
        let hat = Spectral::new(torus).forward_real(&self.on_grid(torus));
        let scale = 1.0 / torus.sites() as f64;
        Ok(modes.into_iter().map(|j| (j, hat[torus.wrap(j)] * scale)).collect())
    }

    /// `||phi||_{L^2}^2` on the unit torus, when known in closed form.
    pub fn l2_norm_squared(&self, dim: usize) -> Option<f64> {
        match self {
            TestFunction::FourierMode { mode, phase, amplitude } => {
                if mode.iter().all(|&j| j == 0) {
                    Some((amplitude * phase.cos()).powi(2))
                } else {
                    Some(0.5 * amplitude * amplitude)
                }
            }
            TestFunction::GaussianBump { width, .. } => {
                // Parseval over a mode box wide enough for the Gaussian decay
                let m = ((6.0 / (2.0 * PI * width)).ceil() as i64).max(4);
                let ylim = if dim == 2 { m } else { 0 };
                let mut s = 0.0;
                for a in -m..=m {
                    for b in -ylim..=ylim {
                        s += self.fourier_coefficient([a, b], dim)?.norm_sqr();
                    }
                }
                Some(s)
            }
            TestFunction::Tabulated { values } => {
                Some(values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64)
            }
        }
    }
}

/// Discrete `H_n` norm squared `n^-d sum_x f(x)^2`.
pub fn grid_norm_squared(values: &[f64], torus: Torus) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / torus.volume_factor()
}

/// `pi(phi) = n^-d sum_x eta(x) phi(x)` with `phi` given on the grid.
pub fn empirical(config: &Configuration, phi: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in config.particles() {
        s += phi[p as usize];
    }
    s / config.torus().volume_factor()
}

/// `n^{d/2} (pi(phi) - <mean, phi>)` against the expected profile at time `t`.
pub fn fluctuation(config: &Configuration, t: f64, phi: &[f64], mean: &DensityField) -> Result<f64> {
    let torus = config.torus();
    if mean.torus != torus {
        return Err(Error::GridMismatch {
            expected: torus.sites(),
            found: mean.torus.sites(),
        });
    }
    if (mean.t - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(Error::TimeMismatch(mean.t, t));
    }
    let centre: f64 = mean.values.iter().zip(phi).map(|(m, p)| m * p).sum::<f64>() / torus.volume_factor();
    Ok(torus.volume_factor().sqrt() * (empirical(config, phi) - centre))
}

/// Direct double sum `Gamma_n(phi)` over occupied sites and the kernel support.
pub fn carre_du_champ(config: &Configuration, phi: &[f64], kernel: &DiscreteKernel, alpha: f64) -> f64 {
    let torus = config.torus();
    let occ = config.occupancy();
    let mut total = 0.0;
    for x in torus.iter().filter(|&x| occ[x] > 0) {
        let fx = phi[x];
        let mut s = 0.0;
        for (z, q) in kernel.support() {
            let y = torus.shift(x, z);
            let d = phi[y] - fx;
            s += q * (alpha + occ[y] as f64) * d * d;
        }
        total += occ[x] as f64 * s;
    }
    kernel.speed() * total / torus.volume_factor()
}

/// `alpha L_n phi` on the grid via the discrete symbol.
pub fn drift_action(phi: &[f64], kernel: &DiscreteKernel, alpha: f64) -> Result<Vec<f64>> {
    let torus = kernel.torus();
    let f = DensityField::new(torus, phi.to_vec(), 0.0)?;
    let lf = apply_l(&f, &discrete_symbol(kernel))?;
    Ok(lf.values.into_iter().map(|v| alpha * v).collect())
}

/// Trapezoid rule on a sorted grid; returns the running integral.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    for i in 0..times.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// `n^{d/2} [pi_t - pi_0 - int_0^t pi_s(alpha L_n phi) ds]` per snapshot,
/// with the time integral by trapezoid on the snapshot grid.
pub fn dynkin_residual(times: &[f64], pi: &[f64], pi_drift: &[f64], torus: Torus) -> Result<Vec<f64>> {
    if times.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: times.len(),
        });
    }
    if pi.len() != times.len() || pi_drift.len() != times.len() {
        return Err(Error::GridMismatch {
            expected: times.len(),
            found: pi.len().min(pi_drift.len()),
        });
    }
    let integral = cumulative_trapezoid(times, pi_drift);
    let scale = torus.volume_factor().sqrt();
    Ok(pi.iter().zip(&integral).map(|(p, i)| scale * (p - pi[0] - i)).collect())
}

/// Per-snapshot observables of one trajectory for a set of test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub t: f64,
    /// `pi_t(phi)` per test function.
    pub pi: Vec<f64>,
    /// `pi_t(alpha L_n phi)` per test function.
    pub pi_drift: Vec<f64>,
    /// Direct-sum `Gamma_n(phi)` at this instant.
    pub carre: Vec<f64>,
    /// Sum over accepted jumps so far of `n^-d (phi(y) - phi(x))^2`.
    pub qv_events: Vec<f64>,
}

/// Observer recording [`FieldSnapshot`]s and the event-bookkeeping quadratic
/// variation.
pub struct FieldObserver<'a> {
    kernel: &'a DiscreteKernel,
    alpha: f64,
    phis: Vec<Vec<f64>>,
    drifts: Vec<Vec<f64>>,
    qv: Vec<f64>,
    inv_volume: f64,
    pub snapshots: Vec<FieldSnapshot>,
}

impl<'a> FieldObserver<'a> {
    pub fn new(kernel: &'a DiscreteKernel, alpha: f64, phis: Vec<Vec<f64>>) -> Result<Self> {
        let drifts = phis
            .iter()
            .map(|p| drift_action(p, kernel, alpha))
            .collect::<Result<Vec<_>>>()?;
        let k = phis.len();
        Ok(FieldObserver {
            kernel,
            alpha,
            phis,
            drifts,
            qv: vec![0.0; k],
            inv_volume: 1.0 / kernel.torus().volume_factor(),
            snapshots: Vec::new(),
        })
    }
}

impl Observer for FieldObserver<'_> {
    fn on_jump(&mut self, _t: f64, from: usize, to: usize, _config: &Configuration) {
        for (acc, phi) in self.qv.iter_mut().zip(&self.phis) {
            let d = phi[to] - phi[from];
            *acc += d * d * self.inv_volume;
        }
    }

    fn on_snapshot(&mut self, t: f64, config: &Configuration) {
        self.snapshots.push(FieldSnapshot {
            t,
            pi: self.phis.iter().map(|p| empirical(config, p)).collect(),
            pi_drift: self.drifts.iter().map(|p| empirical(config, p)).collect(),
            carre: self
                .phis
                .iter()
                .map(|p| carre_du_champ(config, p, self.kernel, self.alpha))
                .collect(),
            qv_events: self.qv.clone(),
        });
    }
}

/// Cross-replica-ready record of one trajectory at one snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub replica: usize,
    pub t: f64,
    pub pi: Vec<f64>,
    pub y: Vec<f64>,
    /// Trapezoid `int_0^t Gamma_n ds` from snapshot values.
    pub carre_integral: Vec<f64>,
    pub qv_events: Vec<f64>,
    pub dynkin: Vec<f64>,
}

/// Simulates one trajectory from `config` and turns its snapshots into
/// [`FieldSample`]s. `means[i]` is the expected profile at `times[i]`.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_fields<R: Rng + ?Sized>(
    replica: usize,
    config: &mut Configuration,
    kernel: &DiscreteKernel,
    alpha: f64,
    times: &[f64],
    phis: &[Vec<f64>],
    means: &[DensityField],
    rng: &mut R,
) -> Result<(Vec<FieldSample>, RunStats)> {
    if times.len() < 2 {
        return Err(Error::TooFewSnapshots {
            needed: 2,
            got: times.len(),
        });
    }
    if means.len() != times.len() {
        return Err(Error::GridMismatch {
            expected: times.len(),
            found: means.len(),
        });
    }
    let horizon = *times.last().expect("nonempty");
    let mut obs = FieldObserver::new(kernel, alpha, phis.to_vec())?;
    let stats = simulate(config, kernel, alpha, horizon, times, rng, &mut obs)?;
    let snaps = obs.snapshots;
    if snaps.len() != times.len() {
        return Err(Error::TooFewSnapshots {
            needed: times.len(),
            got: snaps.len(),
        });
    }
    let torus = kernel.torus();
    let k = phis.len();
    let mut dynkin = Vec::with_capacity(k);
    let mut carre_int = Vec::with_capacity(k);
    for i in 0..k {
        let pi: Vec<f64> = snaps.iter().map(|s| s.pi[i]).collect();
        let dr: Vec<f64> = snaps.iter().map(|s| s.pi_drift[i]).collect();
        let cc: Vec<f64> = snaps.iter().map(|s| s.carre[i]).collect();
        dynkin.push(dynkin_residual(times, &pi, &dr, torus)?);
        carre_int.push(cumulative_trapezoid(times, &cc));
    }
    let scale = torus.volume_factor().sqrt();
    let samples = snaps
        .iter()
        .enumerate()
        .map(|(s, snap)| {
            let y = (0..k)
                .map(|i| {
                    let centre: f64 =
                        means[s].values.iter().zip(&phis[i]).map(|(m, p)| m * p).sum::<f64>() / torus.volume_factor();
                    scale * (snap.pi[i] - centre)
                })
                .collect();
            FieldSample {
                replica,
                t: snap.t,
                pi: snap.pi.clone(),
                y,
                carre_integral: (0..k).map(|i| carre_int[i][s]).collect(),
                qv_events: snap.qv_events.clone(),
                dynkin: (0..k).map(|i| dynkin[i][s]).collect(),
            }
        })
        .collect();
    Ok((samples, stats))
}

/// Long-format rows `(replica, t, observable, value)`.
pub fn write_samples_csv<W: Write>(mut out: W, samples: &[FieldSample], labels: &[String]) -> Result<()> {
    writeln!(out, "replica,t,observable,value")?;
    for s in samples {
        for (i, label) in labels.iter().enumerate() {
            for (name, v) in [
                ("pi", s.pi[i]),
                ("Y", s.y[i]),
                ("carre_integral", s.carre_integral[i]),
                ("qv_events", s.qv_events[i]),
                ("dynkin", s.dynkin[i]),
            ] {
                writeln!(out, "{},{},{}:{},{:.17e}", s.replica, s.t, name, label, v)?;
            }
        }
    }
    Ok(())
}

/// Cross-replica statistics of one observable at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub t: f64,
    pub observable: String,
    pub stats: ReplicaStats,
}

/// Reads observable `i` of a sample.
pub type Getter = fn(&FieldSample, usize) -> f64;

/// Aggregates samples (grouped by snapshot index) into per-observable stats.
pub fn aggregate(samples_per_replica: &[Vec<FieldSample>], labels: &[String]) -> Vec<StatsRow> {
    let Some(first) = samples_per_replica.first() else {
        return Vec::new();
    };
    let mut rows = Vec::new();
    for (s, snap) in first.iter().enumerate() {
        for (i, label) in labels.iter().enumerate() {
            let pick: [(&str, Getter); 5] = [
                ("pi", |f, i| f.pi[i]),
                ("Y", |f, i| f.y[i]),
                ("carre_integral", |f, i| f.carre_integral[i]),
                ("qv_events", |f, i| f.qv_events[i]),
                ("dynkin", |f, i| f.dynkin[i]),
            ];
            for (name, get) in pick {
                let mut st = ReplicaStats::new();
                for rep in samples_per_replica {
                    st.push(get(&rep[s], i));
                }
                rows.push(StatsRow {
                    t: snap.t,
                    observable: format!("{name}:{label}"),
                    stats: st,
                });
            }
        }
    }
    rows
}

/// Stats CSV `(t, observable, mean, var, se, count)`.
pub fn write_stats_csv<W: Write>(mut out: W, rows: &[StatsRow]) -> Result<()> {
    writeln!(out, "t,observable,mean,var,se,count")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{}",
            r.t,
            r.observable,
            r.stats.mean(),
            r.stats.variance(),
            r.stats.se(),
            r.stats.count()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::ExactModel;
    use crate::dynamics::{init_product_negbin, InitialProfile};
    use crate::hydro::mean_profile;
    use crate::kernel::{build_discrete_kernel, KernelSpec};
    use crate::stats::variance_with_se;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_examples() {
        let t = Torus::new(1, 16).unwrap();
        let phi = TestFunction::fourier([1, 0], 1).on_grid(t);
        assert_eq!(empirical(&Configuration::empty(t), &phi), 0.0);
        let c = Configuration::from_occupancy(t, (0..16).map(|i| (i % 3) as u32).collect()).unwrap();
        assert!((empirical(&c, &[1.0; 16]) - c.particle_count() as f64 / 16.0).abs() < 1e-15);
        let single = Configuration::from_positions(t, &[3]).unwrap();
        assert!((empirical(&single, &phi) - phi[3] / 16.0).abs() < 1e-15);
    }

    #[test]
    fn fluctuation_of_mean_is_zero() {
        let t = Torus::new(1, 8).unwrap();
        let c = Configuration::from_occupancy(t, vec![1, 2, 3, 0, 1, 2, 3, 0]).unwrap();
        let mean = DensityField::new(t, c.occupancy().iter().map(|&k| k as f64).collect(), 0.4).unwrap();
        let phi = TestFunction::fourier([2, 0], 1).on_grid(t);
        assert!(fluctuation(&c, 0.4, &phi, &mean).unwrap().abs() < 1e-14);
        assert!(matches!(fluctuation(&c, 0.5, &phi, &mean), Err(Error::TimeMismatch(..))));
    }

    #[test]
    fn initial_fluctuation_variance() {
        let n = 256;
        let k = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), n).unwrap();
        let t = k.torus();
        let profile = InitialProfile::Constant { level: 1.0 };
        let mean = DensityField::from_profile(&profile, t).unwrap();
        let phi = TestFunction::fourier([1, 0], 1).on_grid(t);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ys: Vec<f64> = (0..4000)
            .map(|_| {
                let c = init_product_negbin(&profile, 1.0, t, &mut rng).unwrap();
                fluctuation(&c, 0.0, &phi, &mean).unwrap()
            })
            .collect();
        let (var, se) = variance_with_se(&ys);
        let expected = 2.0 * grid_norm_squared(&phi, t);
        assert!((var - expected).abs() < 3.0 * se, "{var} vs {expected} se {se}");
    }

    proptest! {
        #[test]
        fn fields_are_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, occ in prop::collection::vec(0u32..5, 16)) {
            let t = Torus::new(1, 16).unwrap();
            let c = Configuration::from_occupancy(t, occ).unwrap();
            let mean = DensityField::new(t, vec![0.7; 16], 0.0).unwrap();
            let f = TestFunction::fourier([1, 0], 1).on_grid(t);
            let g = TestFunction::GaussianBump { center: vec![0.3], width: 0.1, amplitude: 1.0 }.on_grid(t);
            let h: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
            let lhs = fluctuation(&c, 0.0, &h, &mean).unwrap();
            let rhs = a * fluctuation(&c, 0.0, &f, &mean).unwrap() + b * fluctuation(&c, 0.0, &g, &mean).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
            let pl = empirical(&c, &h);
            let pr = a * empirical(&c, &f) + b * empirical(&c, &g);
            prop_assert!((pl - pr).abs() < 1e-12);
        }
    }

    #[test]
    fn carre_du_champ_trivial_cases() {
        let k = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 16).unwrap();
        let t = k.torus();
        let c = Configuration::from_occupancy(t, vec![2; 16]).unwrap();
        assert_eq!(carre_du_champ(&c, &[1.5; 16], &k, 1.0), 0.0);
        let phi = TestFunction::fourier([1, 0], 1).on_grid(t);
        assert_eq!(carre_du_champ(&Configuration::empty(t), &phi, &k, 1.0), 0.0);
    }

    #[test]
    fn carre_du_champ_matches_event_bookkeeping() {
        let k = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 4).unwrap();
        let t = k.torus();
        let alpha = 1.0;
        let phi = TestFunction::fourier([1, 0], 1).on_grid(t);
        let start = [2u32, 0, 0, 0];
        let horizon = 0.5;
        // exact E int_0^T Gamma ds by Simpson on 41 nodes of the exact law
        let model = ExactModel::new(&k, alpha, 2).unwrap();
        let gamma = model.values(|s| {
            let c = Configuration::from_occupancy(t, s.to_vec()).unwrap();
            carre_du_champ(&c, &phi, &k, alpha)
        });
        let init = model.index_of(&start).unwrap();
        let nodes = 40;
        let h = horizon / nodes as f64;
        let exact: f64 = (0..=nodes)
            .map(|i| {
                let w = if i == 0 || i == nodes { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * model.exact_expectation(&gamma, init, i as f64 * h).unwrap()
            })
            .sum::<f64>()
            * h
            / 3.0;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut qv = ReplicaStats::new();
        let mut direct = ReplicaStats::new();
        let times: Vec<f64> = (0..=50).map(|i| i as f64 * horizon / 50.0).collect();
        for _ in 0..20_000 {
            let mut c = Configuration::from_occupancy(t, start.to_vec()).unwrap();
            let mut obs = FieldObserver::new(&k, alpha, vec![phi.clone()]).unwrap();
            simulate(&mut c, &k, alpha, horizon, &times, &mut rng, &mut obs).unwrap();
            let last = obs.snapshots.last().unwrap();
            qv.push(last.qv_events[0]);
            let cc: Vec<f64> = obs.snapshots.iter().map(|s| s.carre[0]).collect();
            direct.push(*cumulative_trapezoid(&times, &cc).last().unwrap());
        }
        assert!((qv.mean() - exact).abs() < 3.0 * qv.se(), "{} vs {exact}", qv.mean());
        assert!((direct.mean() - exact).abs() < 3.0 * direct.se() + 1e-3 * exact, "{} vs {exact}", direct.mean());
    }

    #[test]
    fn dynkin_martingale_checks() {
        let k = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 32).unwrap();
        let t = k.torus();
        let alpha = 1.0;
        let profile = InitialProfile::GaussianBump {
            background: 0.5,
            amplitude: 1.0,
            center: vec![0.5],
            width: 0.15,
        };
        let phi = TestFunction::fourier([1, 0], 1).on_grid(t);
        let times: Vec<f64> = (0..=40).map(|i| i as f64 * 0.01).collect();
        let sym = discrete_symbol(&k);
        let means: Vec<DensityField> = times.iter().map(|&s| mean_profile(&profile, alpha, &sym, s).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut finals = Vec::new();
        let mut carre = ReplicaStats::new();
        for r in 0..3000 {
            let mut c = init_product_negbin(&profile, alpha, t, &mut rng).unwrap();
            let (samples, _) = trajectory_fields(r, &mut c, &k, alpha, &times, std::slice::from_ref(&phi), &means, &mut rng).unwrap();
            assert_eq!(samples[0].dynkin[0], 0.0);
            let last = samples.last().unwrap();
            finals.push(last.dynkin[0]);
            carre.push(last.carre_integral[0]);
        }
        let m = ReplicaStats::from_slice(&finals);
        assert!(m.mean().abs() < 3.0 * m.se(), "mean {} se {}", m.mean(), m.se());
        let (var, se) = variance_with_se(&finals);
        let tol = 3.0 * (se * se + carre.se() * carre.se()).sqrt();
        assert!((var - carre.mean()).abs() < tol, "{var} vs {}", carre.mean());
    }

    #[test]
    fn dynkin_needs_two_snapshots() {
        let t = Torus::new(1, 8).unwrap();
        assert!(matches!(
            dynkin_residual(&[0.0], &[1.0], &[0.0], t),
            Err(Error::TooFewSnapshots { .. })
        ));
    }

    #[test]
    fn closed_form_coefficients() {
        let bump = TestFunction::GaussianBump {
            center: vec![0.3],
            width: 0.08,
            amplitude: 1.5,
        };
        let analytic = bump.coefficients(1, 6, 0).unwrap();
        let tab = TestFunction::Tabulated {
            values: bump.on_grid(Torus::new(1, 4096).unwrap()),
        };
        let numeric = tab.coefficients(1, 6, 4096).unwrap();
        for ((j, a), (_, b)) in analytic.iter().zip(&numeric) {
            assert!((a - b).norm() < 1e-10, "mode {j:?}");
        }
        let norm = bump.l2_norm_squared(1).unwrap();
        let grid = grid_norm_squared(&bump.on_grid(Torus::new(1, 1024).unwrap()), Torus::new(1, 1024).unwrap());
        assert!((norm - grid).abs() < 1e-10);
    }

    #[test]
    fn csv_outputs() {
        let s = FieldSample {
            replica: 0,
            t: 0.5,
            pi: vec![1.0],
            y: vec![0.1],
            carre_integral: vec![0.2],
            qv_events: vec![0.3],
            dynkin: vec![0.0],
        };
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, std::slice::from_ref(&s), &["f".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        let rows = aggregate(&[vec![s.clone()], vec![s]], &["f".into()]);
        assert_eq!(rows.len(), 5);
        let mut buf = Vec::new();
        write_stats_csv(&mut buf, &rows).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,observable,mean,var,se,count\n"));
    }
}
