//! Characteristics of the limiting time-dependent Ornstein-Uhlenbeck process:
//! the noise operator `Gamma^rho`, quadratic-variation integrals and
//! predicted fluctuation variances, all driven by the hydrodynamic solution.
//!
//! Grid conventions follow [`crate::fields`]: `<f, g> = n^-d sum_x f g`, and
//! the noise operator carries the speed factor,
//! `Gamma^rho phi(x) = n^beta sum_z q(z) (alpha + rho(x+z)) (phi(x+z) - phi(x))^2`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::{solve, DensityField};
use crate::kernel::{discrete_symbol, DiscreteKernel, FourierSymbol};
use crate::torus::Torus;

/// Default number of time-quadrature intervals.
pub const DEFAULT_QUAD_STEPS: usize = 200;

/// `Gamma^rho phi` on the grid.
pub fn gamma_rho(phi: &[f64], rho: &DensityField, alpha: f64, kernel: &DiscreteKernel) -> Result<DensityField> {
    let torus = kernel.torus();
    if rho.torus != torus || phi.len() != torus.sites() {
        return Err(Error::GridMismatch {
            expected: torus.sites(),
            found: if rho.torus != torus { rho.torus.sites() } else { phi.len() },
        });
    }
    let speed = kernel.speed();
    let support: Vec<([i64; 2], f64)> = kernel.support().collect();
    let values = torus
        .iter()
        .map(|x| {
            let fx = phi[x];
            speed
                * support
                    .iter()
                    .map(|&(z, q)| {
                        let y = torus.shift(x, z);
                        let d = phi[y] - fx;
                        q * (alpha + rho.values[y]) * d * d
                    })
                    .sum::<f64>()
        })
        .collect();
    Ok(DensityField { torus, values, t: rho.t })
}

/// `<rho, Gamma^rho phi>`, the instantaneous noise intensity.
pub fn noise_intensity(phi: &[f64], rho: &DensityField, alpha: f64, kernel: &DiscreteKernel) -> Result<f64> {
    let g = gamma_rho(phi, rho, alpha, kernel)?;
    rho.inner(&g)
}

/// Composite Simpson (even interval count) or trapezoid weights on a uniform grid.
fn quadrature_weights(steps: usize, h: f64) -> Vec<f64> {
    if steps == 0 {
        return vec![0.0];
    }
    if steps % 2 == 1 {
        let mut w = vec![h; steps + 1];
        w[0] = 0.5 * h;
        w[steps] = 0.5 * h;
        return w;
    }
    (0..=steps)
        .map(|i| {
            let c = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Drift `alpha L_n` with the density path it induces from `rho0`.
#[derive(Debug, Clone)]
pub struct OUCharacteristics<'a> {
    kernel: &'a DiscreteKernel,
    symbol: FourierSymbol,
    alpha: f64,
    rho0: DensityField,
    quad_steps: usize,
}

impl<'a> OUCharacteristics<'a> {
    pub fn new(kernel: &'a DiscreteKernel, alpha: f64, rho0: DensityField) -> Result<Self> {
        if rho0.torus != kernel.torus() {
            return Err(Error::GridMismatch {
                expected: kernel.torus().sites(),
                found: rho0.torus.sites(),
            });
        }
        if let Some(&v) = rho0.values.iter().find(|v| **v < 0.0) {
            return Err(Error::NegativeProfile(v));
        }
        Ok(OUCharacteristics {
            kernel,
            symbol: discrete_symbol(kernel),
            alpha,
            rho0,
            quad_steps: DEFAULT_QUAD_STEPS,
        })
    }

    pub fn with_quad_steps(mut self, steps: usize) -> Self {
        self.quad_steps = steps.max(1);
        self
    }

    pub fn torus(&self) -> Torus {
        self.kernel.torus()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn symbol(&self) -> &FourierSymbol {
        &self.symbol
    }

    /// `rho(t, .)` from the hydrodynamic solver.
    pub fn density(&self, t: f64) -> Result<DensityField> {
        solve(&self.rho0, self.alpha, &self.symbol, t)
    }

    /// `S_t phi` under the drift `alpha L_n`.
    pub fn push_forward(&self, phi: &[f64], t: f64) -> Result<Vec<f64>> {
        let f = DensityField::new(self.torus(), phi.to_vec(), 0.0)?;
        Ok(solve(&f, self.alpha, &self.symbol, t)?.values)
    }

    /// `int_0^t <rho_s, Gamma_s phi> ds` by composite Simpson.
    pub fn qv_integral(&self, phi: &[f64], t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::PathGap(t));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let steps = self.quad_steps;
        let h = t / steps as f64;
        let w = quadrature_weights(steps, h);
        let mut total = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let rho = self.density(i as f64 * h)?;
            total += wi * noise_intensity(phi, &rho, self.alpha, self.kernel)?;
        }
        Ok(total)
    }

    /// `Var[Y_t(phi)] = <(S_t phi)^2, v0> + int_0^t <rho_u, Gamma_u S_{t-u} phi> du`.
    pub fn predicted_variance(&self, phi: &[f64], t: f64, v0: &DensityField) -> Result<f64> {
        let p = self.variance_parts(phi, t, v0)?;
        Ok(p.initial + p.noise)
    }

    /// Transported initial variance and accumulated noise, separately.
    pub fn variance_parts(&self, phi: &[f64], t: f64, v0: &DensityField) -> Result<VarianceParts> {
        if v0.torus != self.torus() {
            return Err(Error::GridMismatch {
                expected: self.torus().sites(),
                found: v0.torus.sites(),
            });
        }
        if let Some(&v) = v0.values.iter().find(|v| **v < 0.0) {
            return Err(Error::NegativeVariance(v));
        }
        if !(t >= 0.0) {
            return Err(Error::PathGap(t));
        }
        let torus = self.torus();
        let st = self.push_forward(phi, t)?;
        let initial = st.iter().zip(&v0.values).map(|(s, v)| s * s * v).sum::<f64>() / torus.volume_factor();
        if t == 0.0 {
            return Ok(VarianceParts { initial, noise: 0.0 });
        }
        let steps = self.quad_steps;
        let h = t / steps as f64;
        let w = quadrature_weights(steps, h);
        let mut noise = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let u = i as f64 * h;
            let rho = self.density(u)?;
            let g = self.push_forward(phi, (t - u).max(0.0))?;
            noise += wi * noise_intensity(&g, &rho, self.alpha, self.kernel)?;
        }
        Ok(VarianceParts { initial, noise })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceParts {
    pub initial: f64,
    pub noise: f64,
}

/// Negative-binomial initial variance density `rho_0 (alpha + rho_0) / alpha`.
pub fn negbin_variance_density(rho0: &DensityField, alpha: f64) -> DensityField {
    DensityField {
        torus: rho0.torus,
        values: rho0.values.iter().map(|r| r * (alpha + r) / alpha).collect(),
        t: rho0.t,
    }
}

/// The two normalizations of the white-noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleVariance {
    /// `int phi^2 rho (alpha + rho)`.
    pub m_form: f64,
    /// `int phi^2 rho (alpha + rho) / alpha`.
    pub alpha_scaled: f64,
}

impl AdmissibleVariance {
    /// `m_form / alpha_scaled`, equal to `alpha`.
    pub fn ratio(&self) -> f64 {
        self.m_form / self.alpha_scaled
    }
}

pub fn admissible_variance(phi: &[f64], rho: &DensityField, alpha: f64) -> Result<AdmissibleVariance> {
    if phi.len() != rho.values.len() {
        return Err(Error::GridMismatch {
            expected: rho.values.len(),
            found: phi.len(),
        });
    }
    let m_form = phi
        .iter()
        .zip(&rho.values)
        .map(|(f, r)| f * f * r * (alpha + r))
        .sum::<f64>()
        / rho.torus.volume_factor();
    Ok(AdmissibleVariance {
        m_form,
        alpha_scaled: m_form / alpha,
    })
}

/// One row of the prediction CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub t: f64,
    pub phi: String,
    pub predicted_var: f64,
    pub admissible_var_m: f64,
    pub admissible_var_alpha_scaled: f64,
    pub qv_integral: f64,
}

pub fn prediction_row(ou: &OUCharacteristics, label: &str, phi: &[f64], t: f64, v0: &DensityField) -> Result<PredictionRow> {
    let adm = admissible_variance(phi, &ou.density(t)?, ou.alpha())?;
    Ok(PredictionRow {
        t,
        phi: label.to_string(),
        predicted_var: ou.predicted_variance(phi, t, v0)?,
        admissible_var_m: adm.m_form,
        admissible_var_alpha_scaled: adm.alpha_scaled,
        qv_integral: ou.qv_integral(phi, t)?,
    })
}

pub fn write_predictions_csv<W: Write>(mut out: W, rows: &[PredictionRow]) -> Result<()> {
    writeln!(out, "t,phi,predicted_var,admissible_var_m,admissible_var_alpha_scaled,qv_integral")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e}",
            r.t, r.phi, r.predicted_var, r.admissible_var_m, r.admissible_var_alpha_scaled, r.qv_integral
        )?;
    }
    Ok(())
}
