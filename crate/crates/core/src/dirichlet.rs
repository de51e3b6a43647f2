//! Convergence of one-particle Dirichlet forms and their generators along
//! restriction sequences `Phi_n phi` (grid sampling). The continuum
//! references are defined spectrally through the extrapolated symbol.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{grid_norm_squared, TestFunction};
use crate::hydro::{apply_l, DensityField};
use crate::kernel::{build_discrete_kernel, discrete_symbol, DiscreteKernel, KernelSpec, LimitSymbol};
use crate::spectral::Spectral;
use crate::torus::Torus;

/// `E_n(f) = n^beta n^-d sum_x sum_z q(z) (f(x+z) - f(x))^2`.
pub fn discrete_form(phi: &[f64], kernel: &DiscreteKernel) -> f64 {
    let torus = kernel.torus();
    let mut total = 0.0;
    for x in torus.iter() {
        let fx = phi[x];
        for (z, q) in kernel.support() {
            let d = phi[torus.shift(x, z)] - fx;
            total += q * d * d;
        }
    }
    kernel.speed() * total / torus.volume_factor()
}

/// One-particle carré du champ `Gamma_n phi(x) = n^beta sum_z q(z) (phi(x+z) - phi(x))^2`.
pub fn discrete_gamma(phi: &[f64], kernel: &DiscreteKernel) -> Vec<f64> {
    let torus = kernel.torus();
    torus
        .iter()
        .map(|x| {
            let fx = phi[x];
            kernel.speed()
                * kernel
                    .support()
                    .map(|(z, q)| {
                        let d = phi[torus.shift(x, z)] - fx;
                        q * d * d
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Continuum objects of one test function: Fourier coefficients of `phi` and
/// `phi^2` on the symbol's mode box.
#[derive(Debug, Clone)]
pub struct ContinuumReference<'a> {
    limit: &'a LimitSymbol,
    phi: Vec<([i64; 2], Complex64)>,
    phi_sq: Vec<([i64; 2], Complex64)>,
    l2_norm_sq: f64,
}

/// Default fine-grid side for coefficient extraction.
pub fn default_fine_side(dim: usize) -> usize {
    if dim == 1 {
        4096
    } else {
        256
    }
}

impl<'a> ContinuumReference<'a> {
    pub fn new(test: &TestFunction, limit: &'a LimitSymbol, fine_side: usize) -> Result<Self> {
        let dim = limit.dim();
        test.validate(dim)?;
        let k = limit.max_mode();
        if fine_side < 2 * k + 2 {
            return Err(Error::InvalidParameter("fine grid too coarse for the symbol's mode box".into()));
        }
        let fine = Torus::new(dim, fine_side)?;
        let spectral = Spectral::new(fine);
        let values = test.on_grid(fine);
        let coeffs = |vals: &[f64]| -> Vec<([i64; 2], Complex64)> {
            let hat = spectral.forward_real(vals);
            let scale = 1.0 / fine.sites() as f64;
            mode_box(dim, k).into_iter().map(|j| (j, hat[fine.wrap(j)] * scale)).collect()
        };
        let phi = coeffs(&values);
        let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
        let phi_sq = coeffs(&sq);
        Ok(ContinuumReference {
            limit,
            phi,
            phi_sq,
            l2_norm_sq: grid_norm_squared(&values, fine),
        })
    }

    /// `E(phi) = -2 sum_j psi_inf(j) |phi_hat(j)|^2`.
    pub fn form(&self) -> Result<f64> {
        let mut s = 0.0;
        for (j, c) in &self.phi {
            s += -2.0 * self.limit.value(*j)? * c.norm_sqr();
        }
        Ok(s)
    }

    pub fn l2_norm_squared(&self) -> f64 {
        self.l2_norm_sq
    }

    fn restrict(&self, coeffs: &[([i64; 2], Complex64)], multiplier: impl Fn([i64; 2]) -> Result<f64>, torus: Torus) -> Result<Vec<f64>> {
        // grid samples of sum_j m(j) c_j e^{2 pi i j.x}; aliased modes share a bin
        let mut bins = vec![Complex64::new(0.0, 0.0); torus.sites()];
        for (j, c) in coeffs {
            bins[torus.wrap(*j)] += c * multiplier(*j)?;
        }
        let scale = torus.sites() as f64;
        Ok(Spectral::new(torus).inverse_real(bins).into_iter().map(|v| v * scale).collect())
    }

    /// `Phi_n (L phi)`.
    pub fn generator_on(&self, torus: Torus) -> Result<Vec<f64>> {
        self.restrict(&self.phi, |j| self.limit.value(j), torus)
    }

    /// `Phi_n phi` reconstructed from the coefficients.
    pub fn values_on(&self, torus: Torus) -> Result<Vec<f64>> {
        self.restrict(&self.phi, |_| Ok(1.0), torus)
    }

    /// `Phi_n (Gamma phi)` with `Gamma phi = L(phi^2) - 2 phi L phi`.
    pub fn gamma_on(&self, torus: Torus) -> Result<Vec<f64>> {
        let l_sq = self.restrict(&self.phi_sq, |j| self.limit.value(j), torus)?;
        let lphi = self.generator_on(torus)?;
        let phi = self.values_on(torus)?;
        Ok(l_sq
            .iter()
            .zip(lphi.iter().zip(&phi))
            .map(|(a, (l, p))| a - 2.0 * p * l)
            .collect())
    }
}

fn mode_box(dim: usize, k: usize) -> Vec<[i64; 2]> {
    let m = k as i64;
    let ylim = if dim == 2 { m } else { 0 };
    (-m..=m).flat_map(|a| (-ylim..=ylim).map(move |b| [a, b])).collect()
}

/// Residuals of the discrete operators against restricted continuum actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResiduals {
    /// `n^-d sum_x |L_n Phi_n phi - Phi_n L phi|`.
    pub l1: f64,
    pub sup: f64,
    /// `(n^-d sum_x |Gamma_n Phi_n phi - Phi_n Gamma phi|^2)^{1/2}`.
    pub gamma_l2: f64,
}

pub fn generator_residuals(test: &TestFunction, reference: &ContinuumReference, kernel: &DiscreteKernel) -> Result<GeneratorResiduals> {
    let torus = kernel.torus();
    let phi = test.on_grid(torus);
    let ln = apply_l(&DensityField::new(torus, phi.clone(), 0.0)?, &discrete_symbol(kernel))?.values;
    let lc = reference.generator_on(torus)?;
    let vol = torus.volume_factor();
    let diffs: Vec<f64> = ln.iter().zip(&lc).map(|(a, b)| (a - b).abs()).collect();
    let gn = discrete_gamma(&phi, kernel);
    let gc = reference.gamma_on(torus)?;
    let g2 = gn.iter().zip(&gc).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / vol;
    Ok(GeneratorResiduals {
        l1: diffs.iter().sum::<f64>() / vol,
        sup: diffs.iter().copied().fold(0.0, f64::max),
        gamma_l2: g2.sqrt(),
    })
}

/// One `(phi, n)` row of a form report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRow {
    pub n: usize,
    pub discrete_form: f64,
    pub residuals: GeneratorResiduals,
    pub hn_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormReport {
    pub phi: String,
    pub continuum_form: f64,
    pub l2_norm_sq: f64,
    pub rows: Vec<FormRow>,
}

impl FormReport {
    pub fn relative_form_errors(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (r.discrete_form - self.continuum_form).abs() / self.continuum_form.abs())
            .collect()
    }

    /// Mosco-I smoke test along the restriction sequence:
    /// `min_n E_n(Phi_n phi) >= E(phi) (1 - tol)`.
    pub fn liminf_respected(&self, tol: f64) -> bool {
        let last = self.rows.last().map(|r| r.discrete_form).unwrap_or(f64::NAN);
        last >= self.continuum_form * (1.0 - tol)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "phi,n,discrete_form,continuum_form,l1_residual,sup_residual,gamma_residual,hn_norm_sq,l2_norm_sq")?;
        }
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.phi,
                r.n,
                r.discrete_form,
                self.continuum_form,
                r.residuals.l1,
                r.residuals.sup,
                r.residuals.gamma_l2,
                r.hn_norm_sq,
                self.l2_norm_sq
            )?;
        }
        Ok(())
    }
}

/// Largest relative gap between `E_n(phi)` and `-2 psi_n(j) |phi|_n^2` over
/// cosine and shifted-cosine modes `j` along the first axis.
pub fn parseval_defect(kernel: &DiscreteKernel) -> f64 {
    let torus = kernel.torus();
    let symbol = discrete_symbol(kernel);
    let mut worst: f64 = 0.0;
    for j in 1..=(torus.side() / 2) as i64 {
        for phase in [0.0, 0.7] {
            let mut mode = vec![0; torus.dim()];
            mode[0] = j;
            let f = TestFunction::FourierMode {
                mode,
                phase,
                amplitude: 1.0,
            }
            .on_grid(torus);
            let lhs = discrete_form(&f, kernel);
            let rhs = -2.0 * symbol.value([j, 0]) * grid_norm_squared(&f, torus);
            worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}

/// Default extrapolation ladder for the macroscopic symbol.
pub fn default_limit_ladder(dim: usize) -> Vec<usize> {
    if dim == 1 {
        vec![1024, 2048, 4096, 8192, 16384]
    } else {
        vec![128, 256, 512]
    }
}

/// Convergence of the form and its residuals for `test` across `n_list`.
pub fn form_report(spec: &KernelSpec, test: &TestFunction, limit: &LimitSymbol, n_list: &[usize]) -> Result<FormReport> {
    let reference = ContinuumReference::new(test, limit, default_fine_side(spec.dimension))?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let kernel = build_discrete_kernel(spec, n)?;
        let phi = test.on_grid(kernel.torus());
        rows.push(FormRow {
            n,
            discrete_form: discrete_form(&phi, &kernel),
            residuals: generator_residuals(test, &reference, &kernel)?,
            hn_norm_sq: grid_norm_squared(&phi, kernel.torus()),
        });
    }
    Ok(FormReport {
        phi: test.label(),
        continuum_form: reference.form()?,
        l2_norm_sq: reference.l2_norm_squared(),
        rows,
    })
}
