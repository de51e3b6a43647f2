//! Spectral solver for the non-local hydrodynamic equation
//! `d/dt rho = alpha L rho` on the torus, where `L` is the Fourier multiplier
//! given by a symbol `psi` (the semi-discrete `psi_n` or the extrapolated
//! macroscopic symbol).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dynamics::InitialProfile;
use crate::error::{Error, Result};
use crate::kernel::{DiscreteKernel, FourierSymbol, LimitSymbol};
use crate::spectral::Spectral;
use crate::torus::Torus;

/// Time used by the optional Gibbs pre-smoothing step.
pub const PRESMOOTH_TIME: f64 = 1e-6;

/// Grid field with a time stamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub torus: Torus,
    pub values: Vec<f64>,
    pub t: f64,
}

impl DensityField {
    pub fn new(torus: Torus, values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() != torus.sites() {
            return Err(Error::GridMismatch {
                expected: torus.sites(),
                found: values.len(),
            });
        }
        Ok(DensityField { torus, values, t })
    }

    pub fn from_profile(profile: &InitialProfile, torus: Torus) -> Result<Self> {
        profile.validate(torus.dim())?;
        Ok(DensityField {
            torus,
            values: profile.on_grid(torus),
            t: 0.0,
        })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `n^-d sum_x |f - g|`.
    pub fn l1_distance(&self, other: &DensityField) -> Result<f64> {
        check_grid(self.torus, other.torus)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / self.torus.volume_factor())
    }

    /// Grid inner product `n^-d sum_x f g`.
    pub fn inner(&self, other: &DensityField) -> Result<f64> {
        check_grid(self.torus, other.torus)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() / self.torus.volume_factor())
    }

    /// CSV with a `# t=...` header and `site,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# t={} d={} n={}", self.t, self.torus.dim(), self.torus.side())?;
        writeln!(out, "site,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v:.17e}")?;
        }
        Ok(())
    }
}

fn check_grid(expected: Torus, found: Torus) -> Result<()> {
    if expected != found {
        return Err(Error::GridMismatch {
            expected: expected.sites(),
            found: found.sites(),
        });
    }
    Ok(())
}

/// `rho_hat(t, j) = exp(alpha psi(j) t) rho_hat(0, j)`.
pub fn solve(rho0: &DensityField, alpha: f64, symbol: &FourierSymbol, t: f64) -> Result<DensityField> {
    check_grid(symbol.torus(), rho0.torus)?;
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time {t}")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let spectral = Spectral::new(rho0.torus);
    let values = spectral.apply_multiplier(&rho0.values, |k| (alpha * symbol.at(k) * t).exp());
    Ok(DensityField {
        torus: rho0.torus,
        values,
        t: rho0.t + t,
    })
}

/// Spectral route: multiplication by `psi`.
pub fn apply_l(f: &DensityField, symbol: &FourierSymbol) -> Result<DensityField> {
    check_grid(symbol.torus(), f.torus)?;
    let spectral = Spectral::new(f.torus);
    Ok(DensityField {
        torus: f.torus,
        values: spectral.apply_multiplier(&f.values, |k| symbol.at(k)),
        t: f.t,
    })
}

/// Quadrature route: `n^beta / 2 sum_z q(z) (f(x+z) + f(x-z) - 2 f(x))`.
pub fn apply_l_quadrature(f: &DensityField, kernel: &DiscreteKernel) -> Result<DensityField> {
    check_grid(kernel.torus(), f.torus)?;
    let torus = f.torus;
    let speed = kernel.speed();
    let support: Vec<([i64; 2], f64)> = kernel.support().collect();
    let values = torus
        .iter()
        .map(|x| {
            let fx = f.values[x];
            let s: f64 = support
                .iter()
                .map(|&(z, p)| {
                    let plus = f.values[torus.shift(x, z)];
                    let minus = f.values[torus.shift(x, [-z[0], -z[1]])];
                    p * (plus + minus - 2.0 * fx)
                })
                .sum();
            0.5 * speed * s
        })
        .collect();
    Ok(DensityField { torus, values, t: f.t })
}

/// Expected occupancy `E[eta_t(x)]` under product negative-binomial start:
/// the one-particle semigroup with symbol `alpha psi_n` applied to the
/// sampled profile.
pub fn mean_profile(profile: &InitialProfile, alpha: f64, symbol: &FourierSymbol, t: f64) -> Result<DensityField> {
    let rho0 = DensityField::from_profile(profile, symbol.torus())?;
    solve(&rho0, alpha, symbol, t)
}

/// One application of `exp(alpha psi PRESMOOTH_TIME)` to tame Gibbs ringing
/// on discontinuous tables.
pub fn presmooth(rho0: &DensityField, alpha: f64, symbol: &FourierSymbol) -> Result<DensityField> {
    let mut out = solve(rho0, alpha, symbol, PRESMOOTH_TIME)?;
    out.t = rho0.t;
    Ok(out)
}

/// Macroscopic symbol laid out on a torus grid. Every grid mode must be
/// covered by the extrapolated table.
pub fn limit_symbol_on(torus: Torus, beta: f64, limit: &LimitSymbol) -> Result<FourierSymbol> {
    if limit.dim() != torus.dim() {
        return Err(Error::Dimension(limit.dim()));
    }
    if limit.max_mode() < torus.side() / 2 {
        return Err(Error::SymbolUnavailable(vec![(torus.side() / 2) as i64]));
    }
    Ok(FourierSymbol::from_fn(torus, beta, |mode| limit.value(mode).unwrap_or(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_discrete_kernel, discrete_symbol, KernelSpec};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup(n: usize, beta: f64) -> (DiscreteKernel, FourierSymbol) {
        let k = build_discrete_kernel(&KernelSpec::power_law(1, beta), n).unwrap();
        let s = discrete_symbol(&k);
        (k, s)
    }

    fn bump() -> InitialProfile {
        InitialProfile::GaussianBump {
            background: 0.5,
            amplitude: 1.0,
            center: vec![0.5],
            width: 0.1,
        }
    }

    fn smooth_field(torus: Torus, coeffs: &[f64]) -> DensityField {
        let values = torus
            .iter()
            .map(|i| {
                let u = torus.point(i)[0];
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| c * (2.0 * PI * (j + 1) as f64 * u + j as f64).cos())
                    .sum::<f64>()
            })
            .collect();
        DensityField::new(torus, values, 0.0).unwrap()
    }

    #[test]
    fn trivial_solves() {
        let (_, s) = setup(64, 1.0);
        let rho0 = DensityField::from_profile(&bump(), s.torus()).unwrap();
        assert_eq!(solve(&rho0, 1.0, &s, 0.0).unwrap(), rho0);
        let flat = DensityField::from_profile(&InitialProfile::Constant { level: 2.0 }, s.torus()).unwrap();
        let out = solve(&flat, 1.0, &s, 0.7).unwrap();
        assert!(out.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
        let later = solve(&rho0, 1.0, &s, 0.3).unwrap();
        assert!((later.mean() - rho0.mean()).abs() < 1e-12 * rho0.mean());
    }

    #[test]
    fn grid_mismatch() {
        let (_, s) = setup(64, 1.0);
        let rho0 = DensityField::from_profile(&bump(), Torus::new(1, 32).unwrap()).unwrap();
        assert!(matches!(solve(&rho0, 1.0, &s, 0.1), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn fourier_mode_is_eigenfunction() {
        let (_, s) = setup(64, 1.2);
        let t = s.torus();
        let j = 3;
        let f = DensityField::new(t, t.iter().map(|i| (2.0 * PI * j as f64 * t.point(i)[0]).cos()).collect(), 0.0).unwrap();
        let lf = apply_l(&f, &s).unwrap();
        for (a, b) in lf.values.iter().zip(&f.values) {
            assert!((a - s.value([j, 0]) * b).abs() < 1e-10);
        }
        let c = DensityField::new(t, vec![3.0; 64], 0.0).unwrap();
        assert!(apply_l(&c, &s).unwrap().values.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn spectral_and_quadrature_routes_agree() {
        for beta in [0.5, 1.0, 1.5] {
            let (k, s) = setup(64, beta);
            let f = smooth_field(s.torus(), &[1.0, -0.4, 0.25, 0.1]);
            let a = apply_l(&f, &s).unwrap();
            let b = apply_l_quadrature(&f, &k).unwrap();
            let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "beta {beta}: {err}");
        }
        let spec = KernelSpec::power_law(2, 1.0);
        let k = build_discrete_kernel(&spec, 16).unwrap();
        let s = discrete_symbol(&k);
        let t = k.torus();
        let f = DensityField::new(
            t,
            t.iter()
                .map(|i| {
                    let p = t.point(i);
                    (2.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).cos() + (2.0 * PI * (p[0] + p[1])).cos()
                })
                .collect(),
            0.0,
        )
        .unwrap();
        let a = apply_l(&f, &s).unwrap();
        let b = apply_l_quadrature(&f, &k).unwrap();
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "2d: {err}");
    }

    #[test]
    fn mean_profile_converges_in_n() {
        let mut dists = Vec::new();
        let mut prev: Option<DensityField> = None;
        for n in [32usize, 64, 128, 256] {
            let (_, s) = setup(n, 1.0);
            let fine = mean_profile(&bump(), 1.0, &s, 0.2).unwrap();
            // compare on the coarse grid by block averaging
            if let Some(p) = &prev {
                let coarse: Vec<f64> = fine.values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect();
                let coarse = DensityField::new(p.torus, coarse, 0.2).unwrap();
                dists.push(coarse.l1_distance(p).unwrap());
            }
            prev = Some(fine);
        }
        assert!(dists.windows(2).all(|w| w[1] < w[0]), "{dists:?}");
        let (_, s) = setup(32, 1.0);
        let at0 = mean_profile(&bump(), 1.0, &s, 0.0).unwrap();
        assert_eq!(at0.values, bump().on_grid(s.torus()));
    }

    #[test]
    fn max_principle_on_rough_data() {
        let (_, s) = setup(128, 0.8);
        let table = InitialProfile::Tabulated {
            values: vec![0.0, 3.0, 1.0, 0.0, 2.0, 2.0, 0.5, 0.0],
        };
        let rho0 = DensityField::from_profile(&table, s.torus()).unwrap();
        let smooth = presmooth(&rho0, 1.0, &s).unwrap();
        assert_eq!(smooth.t, 0.0);
        for t in [0.01, 0.1, 1.0] {
            let out = solve(&rho0, 1.0, &s, t).unwrap();
            assert!(out.min() >= rho0.min() - 1e-10);
            assert!(out.max() <= rho0.max() + 1e-10);
        }
    }

    #[test]
    fn csv_header() {
        let f = DensityField::new(Torus::new(1, 4).unwrap(), vec![1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# t=0.5 d=1 n=4\nsite,value\n0,"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn limit_symbol_layout() {
        let spec = KernelSpec::power_law(1, 1.0);
        let limit = LimitSymbol::build(&spec, 8, &[64, 128, 256]).unwrap();
        let t = Torus::new(1, 16).unwrap();
        let s = limit_symbol_on(t, 1.0, &limit).unwrap();
        assert_eq!(s.value([3, 0]), limit.value([3, 0]).unwrap());
        assert!(limit_symbol_on(Torus::new(1, 32).unwrap(), 1.0, &limit).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn semigroup_and_self_adjointness(
            coeffs in prop::collection::vec(-1.0f64..1.0, 4),
            other in prop::collection::vec(-1.0f64..1.0, 4),
            s1 in 0.0f64..0.5,
            s2 in 0.0f64..0.5,
            beta in 0.3f64..1.8,
        ) {
            let (_, sym) = setup(64, beta);
            let f = smooth_field(sym.torus(), &coeffs);
            let g = smooth_field(sym.torus(), &other);
            let twice = solve(&solve(&f, 1.0, &sym, s1).unwrap(), 1.0, &sym, s2).unwrap();
            let once = solve(&f, 1.0, &sym, s1 + s2).unwrap();
            for (a, b) in twice.values.iter().zip(&once.values) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            let lhs = f.inner(&apply_l(&g, &sym).unwrap()).unwrap();
            let rhs = apply_l(&f, &sym).unwrap().inner(&g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10);
        }

        #[test]
        fn mass_and_bounds_preserved(
            vals in prop::collection::vec(0.0f64..5.0, 64),
            t in 0.0f64..2.0,
        ) {
            let (_, sym) = setup(64, 1.0);
            let rho0 = DensityField::new(sym.torus(), vals, 0.0).unwrap();
            let out = solve(&rho0, 1.0, &sym, t).unwrap();
            prop_assert!((out.mean() - rho0.mean()).abs() <= 1e-12 * rho0.mean().max(1e-300));
            prop_assert!(out.min() >= rho0.min() - 1e-10);
            prop_assert!(out.max() <= rho0.max() + 1e-10);
        }
    }
}
