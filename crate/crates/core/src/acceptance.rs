//! Acceptance suite: one function per criterion, each returning a
//! [`CriterionResult`] with its individual checks.

use std::fmt;
use std::time::Instant;

use crate::dirichlet::parseval_defect;
use crate::duality::{correlation_batch, duality_check, duality_weight, DualConfiguration, ExactModel, InitLaw};
use crate::dynamics::{init_product_negbin, simulate, Configuration, InitialProfile, Observer};
use crate::error::Result;
use crate::fields::TestFunction;
use crate::harness::{
    execute, fluct_point, hydro_point, mosco_limit, mosco_verdicts, moment_verdict, qv_verdicts, sweep_report, variance_verdicts,
    ExperimentConfig, ExperimentKind, SimSection, SweepPoint, Verdict, SCHEMA_VERSION,
};
use crate::hydro::{apply_l, apply_l_quadrature, solve, DensityField};
use crate::kernel::{build_discrete_kernel, discrete_symbol, KernelSpec};
use crate::oupredict::{admissible_variance, negbin_variance_density, OUCharacteristics};
use crate::seed::{derive_seed, par_replicas};
use crate::stats::ReplicaStats;
use crate::torus::Torus;

const SIGMAS: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub checks: Vec<Verdict>,
    pub elapsed_s: f64,
    /// Wall-clock budget; exceeding it fails the criterion.
    pub budget_s: Option<f64>,
}

impl CriterionResult {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed) && self.within_budget()
    }

    pub fn within_budget(&self) -> bool {
        self.budget_s.is_none_or(|b| self.elapsed_s <= b)
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let budget = self.budget_s.map(|b| format!(" / budget {b:.0} s")).unwrap_or_default();
        write!(
            f,
            "criterion {} {} {}: {}/{} checks, {:.1} s{budget}",
            self.id,
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
            self.elapsed_s,
        )
    }
}

fn timed(id: u8, name: &'static str, budget_s: Option<f64>, body: impl FnOnce() -> Result<Vec<Verdict>>) -> CriterionResult {
    let start = Instant::now();
    let checks = body().unwrap_or_else(|e| vec![Verdict::new("run", false, e.to_string())]);
    CriterionResult {
        id,
        name,
        checks,
        elapsed_s: start.elapsed().as_secs_f64(),
        budget_s,
    }
}

fn bump(background: f64, amplitude: f64, center: f64, width: f64) -> InitialProfile {
    InitialProfile::GaussianBump {
        background,
        amplitude,
        center: vec![center],
        width,
    }
}

fn base_config(kind: ExperimentKind, seed: u64, replicas: usize, n_ladder: Vec<usize>, profile: InitialProfile, sim: SimSection) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        kind,
        seed,
        replicas,
        n_ladder,
        output_dir: None,
        kernel: KernelSpec::power_law(1, 1.0),
        sim,
        profile,
        test_functions: vec![TestFunction::fourier([1, 0], 1)],
        duality: None,
        moments: None,
    }
}

struct ConservationObserver {
    expected: usize,
    events: u64,
    violations: u64,
}

impl Observer for ConservationObserver {
    fn on_jump(&mut self, _: f64, _: usize, _: usize, config: &Configuration) {
        self.events += 1;
        if config.particle_count() != self.expected {
            self.violations += 1;
        }
        if self.events.is_multiple_of(100_000) && config.occupancy().iter().map(|&v| v as usize).sum::<usize>() != self.expected {
            self.violations += 1;
        }
    }
}

/// Particle conservation over a long trajectory and bit-exact reruns,
/// including across thread-pool sizes.
pub fn criterion_1() -> CriterionResult {
    timed(1, "conservation and determinism", Some(60.0), || {
        let mut checks = Vec::new();
        let kernel = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 64)?;
        let mut rng = crate::seed::replica_rng(1, 0, "conservation");
        let mut eta = init_product_negbin(&InitialProfile::Constant { level: 2.0 }, 1.0, kernel.torus(), &mut rng)?;
        let mut obs = ConservationObserver {
            expected: eta.particle_count(),
            events: 0,
            violations: 0,
        };
        while obs.events < 1_000_000 {
            simulate(&mut eta, &kernel, 1.0, 5.0, &[], &mut rng, &mut obs)?;
        }
        let total: usize = eta.occupancy().iter().map(|&v| v as usize).sum();
        checks.push(Verdict::new(
            "particle count invariant",
            obs.violations == 0 && total == obs.expected && eta.is_consistent(),
            format!("{} events, N = {}, violations {}", obs.events, obs.expected, obs.violations),
        ));

        let sim = SimSection {
            alpha: 1.0,
            horizon: 0.2,
            snapshot_times: vec![0.1, 0.2],
        };
        let cfg = base_config(ExperimentKind::Hydro, 5, 16, vec![16, 32], bump(0.5, 1.0, 0.5, 0.1), sim);
        let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().expect("thread pool");
        let a = pool(1).install(|| execute(&cfg))?;
        let b = pool(1).install(|| execute(&cfg))?;
        let c = pool(3).install(|| execute(&cfg))?;
        checks.push(Verdict::new(
            "identical reruns",
            a.outputs == b.outputs && a.streams == b.streams,
            format!("{} output files", a.outputs.len()),
        ));
        checks.push(Verdict::new("thread count independence", a.outputs == c.outputs, "1 vs 3 threads"));
        let dir = std::env::temp_dir().join(format!("siplab-acceptance-{}", std::process::id()));
        let m1 = crate::harness::run(&cfg, &dir, true)?;
        let m2 = crate::harness::run(&cfg, &dir, true)?;
        let _ = std::fs::remove_dir_all(&dir);
        checks.push(Verdict::new(
            "manifest reproduces outputs",
            m1.outputs == m2.outputs && m1.config_sha256 == m2.config_sha256 && m1.streams == m2.streams,
            format!("config {}", &m1.config_sha256[..12]),
        ));
        Ok(checks)
    })
}

/// Forward Monte Carlo against uniformization on a six-site torus, and
/// uniformization against the dense matrix exponential.
pub fn criterion_2() -> CriterionResult {
    timed(2, "exact-oracle agreement", Some(300.0), || {
        let alpha = 1.0;
        let t = 0.2;
        let kernel = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 6)?;
        let torus = kernel.torus();
        let eta0 = Configuration::from_occupancy(torus, vec![2, 0, 1, 0, 0, 0])?;
        let observables = [
            DualConfiguration::new(torus, vec![0])?,
            DualConfiguration::new(torus, vec![0, 0])?,
            DualConfiguration::new(torus, vec![0, 2])?,
        ];
        let model = ExactModel::new(&kernel, alpha, eta0.particle_count())?;
        let start = model.index_of(eta0.occupancy()).expect("state enumerated");
        let samples = par_replicas(100_000, 2, "oracle-forward", |rng| {
            let mut eta = eta0.clone();
            simulate(&mut eta, &kernel, alpha, t, &[], rng, &mut ())?;
            observables.iter().map(|xi| duality_weight(xi, &eta, alpha)).collect::<Result<Vec<f64>>>()
        })?;
        let mut checks = Vec::new();
        for (i, xi) in observables.iter().enumerate() {
            let f = model.values(|s| {
                let c = Configuration::from_occupancy(torus, s.to_vec()).expect("valid state");
                duality_weight(xi, &c, alpha).expect("matching torus")
            });
            let exact = model.exact_expectation(&f, start, t)?;
            let dense = model.dense_expectation(&f, start, t)?;
            let st = ReplicaStats::from_slice(&samples.iter().map(|v| v[i]).collect::<Vec<_>>());
            let name = format!("D({:?})", xi.positions());
            checks.push(Verdict::new(
                format!("{name} Monte Carlo vs uniformization"),
                (st.mean() - exact).abs() <= SIGMAS * st.se(),
                format!("mc {:.6} se {:.6} exact {exact:.8}", st.mean(), st.se()),
            ));
            checks.push(Verdict::new(
                format!("{name} uniformization vs dense"),
                (exact - dense).abs() <= 1e-8,
                format!("gap {:.2e}", (exact - dense).abs()),
            ));
        }
        Ok(checks)
    })
}

/// Forward and dual Monte Carlo sides of the self-duality identity from a
/// negative-binomial start with a Gaussian bump profile.
pub fn criterion_3() -> CriterionResult {
    timed(3, "self-duality identity", Some(600.0), || {
        let alpha = 1.0;
        let kernel = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 64)?;
        let torus = kernel.torus();
        let law = InitLaw::NegBinProduct(bump(0.5, 1.5, 0.5, 0.1));
        let mut checks = Vec::new();
        let mut task = 0;
        for positions in [vec![32], vec![30, 33]] {
            let xi = DualConfiguration::new(torus, positions)?;
            for t in [0.1, 0.5] {
                let r = duality_check(&xi, &law, &kernel, alpha, t, 10_000, derive_seed(3, task, "acceptance-duality"))?;
                task += 1;
                checks.push(Verdict::new(
                    format!("k={} t={t}", r.k),
                    r.passes(SIGMAS),
                    format!(
                        "forward {:.5} dual {:.5} |diff| {:.5} combined se {:.5}",
                        r.lhs,
                        r.rhs,
                        (r.lhs - r.rhs).abs(),
                        r.combined_se()
                    ),
                ));
            }
        }
        Ok(checks)
    })
}

/// Coarse-binned relative L1 distance to the semi-discrete solution along
/// the n-ladder, plus the `n^-d` variance rate of `pi_t(phi)`.
pub fn criterion_4() -> CriterionResult {
    timed(4, "hydrodynamic convergence", Some(900.0), || {
        let sim = SimSection {
            alpha: 1.0,
            horizon: 0.5,
            snapshot_times: vec![0.1, 0.25, 0.5],
        };
        let cfg = base_config(ExperimentKind::Hydro, 4, 1000, vec![32, 64, 128], bump(1.0, 2.0, 0.5, 0.1), sim);
        let mut streams = Vec::new();
        let mut points = Vec::new();
        for &n in &cfg.n_ladder {
            let h = hydro_point(&cfg, n, &mut streams)?;
            points.push(SweepPoint {
                n,
                l1_error: Some(h.rel_l1),
                pi_variance: Some(h.pi[h.times.len() - 1][0].variance()),
                dirichlet_residual: None,
            });
        }
        let report = sweep_report(&points)?;
        let mut checks = report.verdicts;
        let last = points.last().and_then(|p| p.l1_error).unwrap_or(f64::NAN);
        checks.push(Verdict::new("L1 error at n=128 <= 5%", last <= 0.05, format!("{last:.4}")));
        Ok(checks)
    })
}

/// Deterministic properties of the spectral hydrodynamic solver.
pub fn criterion_5() -> CriterionResult {
    timed(5, "hydro solver exactness", None, || {
        let mut checks = Vec::new();
        for (dim, n) in [(1usize, 128usize), (2, 32)] {
            let spec = KernelSpec::power_law(dim, 1.0);
            let kernel = build_discrete_kernel(&spec, n)?;
            let torus = kernel.torus();
            let symbol = discrete_symbol(&kernel);
            let profile = InitialProfile::GaussianBump {
                background: 0.5,
                amplitude: 2.0,
                center: vec![0.3; dim],
                width: 0.08,
            };
            let rho0 = DensityField::from_profile(&profile, torus)?;
            let mass0: f64 = rho0.values.iter().sum();
            let (lo, hi) = (rho0.min(), rho0.max());
            let (mut mass_err, mut max_viol, mut semi_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
            for (t, s) in [(0.01, 0.02), (0.1, 0.3), (1.0, 2.0)] {
                let a = solve(&rho0, 1.0, &symbol, t)?;
                let ab = solve(&a, 1.0, &symbol, s)?;
                let direct = solve(&rho0, 1.0, &symbol, t + s)?;
                mass_err = mass_err.max((a.values.iter().sum::<f64>() - mass0).abs() / mass0);
                max_viol = max_viol.max(lo - a.min()).max(a.max() - hi);
                semi_err = semi_err.max(ab.values.iter().zip(&direct.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
            }
            let spectral = apply_l(&rho0, &symbol)?;
            let quad = apply_l_quadrature(&rho0, &kernel)?;
            let scale = spectral.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let op_err = spectral.values.iter().zip(&quad.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale;
            checks.push(Verdict::new(format!("d={dim} mass conservation"), mass_err <= 1e-12, format!("{mass_err:.2e}")));
            checks.push(Verdict::new(format!("d={dim} max principle"), max_viol <= 1e-10, format!("{max_viol:.2e}")));
            checks.push(Verdict::new(format!("d={dim} semigroup composition"), semi_err <= 1e-10, format!("{semi_err:.2e}")));
            checks.push(Verdict::new(format!("d={dim} spectral vs quadrature"), op_err <= 1e-10, format!("{op_err:.2e}")));
        }
        Ok(checks)
    })
}

/// Stationary `Var[Y_t(phi)]`: time invariance and agreement with the
/// predictor; the ratio to the m-form is reported only.
pub fn criterion_6() -> CriterionResult {
    timed(6, "stationary fluctuation variance", Some(900.0), || {
        let sim = SimSection {
            alpha: 1.0,
            horizon: 0.5,
            snapshot_times: vec![0.0, 0.25, 0.5],
        };
        let cfg = base_config(ExperimentKind::StationaryFluct, 6, 1000, vec![128], InitialProfile::Constant { level: 1.0 }, sim);
        let out = fluct_point(&cfg, 128, &mut Vec::new())?;
        let mut checks = variance_verdicts(&out, true, SIGMAS);
        // Reported, not asserted: predictor over the m-form at alpha = 2.
        let kernel = build_discrete_kernel(&cfg.kernel, 128)?;
        let torus = kernel.torus();
        let rho = DensityField::new(torus, vec![1.0; torus.sites()], 0.0)?;
        let phi = TestFunction::fourier([1, 0], 1).on_grid(torus);
        let ou = OUCharacteristics::new(&kernel, 2.0, rho.clone())?;
        let pred = ou.predicted_variance(&phi, 0.5, &negbin_variance_density(&rho, 2.0))?;
        let adm = admissible_variance(&phi, &rho, 2.0)?;
        let info = format!("alpha=2 predictor / m-form = {:.4} (1/alpha = 0.5)", pred / adm.m_form);
        if let Some(first) = checks.first_mut() {
            first.detail = format!("{}; {info}", first.detail);
        }
        Ok(checks)
    })
}

/// Quadratic variation and Dynkin martingale from a non-equilibrium start.
pub fn criterion_7() -> CriterionResult {
    timed(7, "quadratic-variation limit", None, || {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.005).collect();
        let sim = SimSection {
            alpha: 1.0,
            horizon: 0.5,
            snapshot_times: times,
        };
        let mut cfg = base_config(ExperimentKind::NonEqFluct, 7, 1000, vec![128], bump(0.5, 1.5, 0.5, 0.1), sim);
        cfg.test_functions.push(TestFunction::GaussianBump {
            center: vec![0.35],
            width: 0.1,
            amplitude: 1.0,
        });
        let out = fluct_point(&cfg, 128, &mut Vec::new())?;
        Ok(qv_verdicts(&out, 0.10, SIGMAS))
    })
}

/// Form convergence with its residuals for a Fourier mode and a Gaussian,
/// plus the per-mode form-symbol identity.
pub fn criterion_8() -> CriterionResult {
    timed(8, "Dirichlet form and Mosco checks", Some(120.0), || {
        let spec = KernelSpec::power_law(1, 1.0);
        let limit = mosco_limit(&spec)?;
        let ladder = [64, 128, 256];
        let mut checks = Vec::new();
        for test in [
            TestFunction::fourier([1, 0], 1),
            TestFunction::GaussianBump {
                center: vec![0.5],
                width: 0.1,
                amplitude: 1.0,
            },
        ] {
            let r = crate::dirichlet::form_report(&spec, &test, &limit, &ladder)?;
            checks.extend(mosco_verdicts(&r, 0.01));
        }
        for n in ladder {
            let d = parseval_defect(&build_discrete_kernel(&spec, n)?);
            checks.push(Verdict::new(format!("n={n} form-symbol identity"), d <= 1e-10, format!("{d:.2e}")));
        }
        Ok(checks)
    })
}

/// One- to four-point moments on a 32-site torus against their bounds.
pub fn criterion_9() -> CriterionResult {
    timed(9, "moment bounds", None, || {
        let alpha = 1.0;
        let kernel = build_discrete_kernel(&KernelSpec::power_law(1, 1.0), 32)?;
        let law = InitLaw::NegBinProduct(bump(0.5, 1.5, 0.5, 0.15));
        let torus: Torus = kernel.torus();
        let wrap = |x: usize, d: usize| (x + d) % torus.sites();
        let mut checks = Vec::new();
        for (ti, t) in [0.1, 0.5].into_iter().enumerate() {
            let mut sets = Vec::new();
            for x in [0usize, 8, 14, 16, 24] {
                sets.extend([
                    vec![x],
                    vec![x, x],
                    vec![x, wrap(x, 1)],
                    vec![x, x, x],
                    vec![x, wrap(x, 1), wrap(x, 3)],
                    vec![x, x, x, x],
                    vec![x, x, wrap(x, 2), wrap(x, 5)],
                ]);
            }
            let reports = correlation_batch(&sets, &law, &kernel, alpha, t, 20_000, derive_seed(9, ti as u64, "acceptance-moments"))?;
            checks.extend(reports.iter().map(|r| moment_verdict(32, r, SIGMAS)));
        }
        Ok(checks)
    })
}

pub fn all_criteria() -> Vec<fn() -> CriterionResult> {
    vec![
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
    ]
}
