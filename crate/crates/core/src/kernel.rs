//! Symmetric heavy-tailed jump kernel folded onto the torus, with alias
//! sampling. Also the Fourier symbol of the sped-up one-particle generator.
//!
//! The lattice jump law is primary. For `PowerLawLattice` the unnormalized
//! weight of a displacement `z != 0` is `|z|^-(d+beta)`; displacement classes
//! on the torus collect the weights of their periodic images within
//! `image_folds` shells, and the result is normalized to total mass one.
//! Dropping shells beyond `I` costs at most `C (I M)^-beta` of the mass.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::alias::AliasTable;
use crate::error::{Error, Result};
use crate::spectral::Spectral;
use crate::torus::Torus;

pub const DEFAULT_IMAGE_FOLDS: usize = 3;

fn default_image_folds() -> usize {
    DEFAULT_IMAGE_FOLDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedWeight {
    pub displacement: Vec<i64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum KernelFamily {
    #[default]
    PowerLawLattice,
    /// Explicit symmetric weights on lattice displacements; folded modulo
    /// the torus without extra images.
    CustomTabulated { table: Vec<TabulatedWeight> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub dimension: usize,
    pub beta: f64,
    #[serde(default)]
    pub family: KernelFamily,
    /// Largest retained displacement class (sup-norm). `None` keeps every
    /// class of the torus, the Nyquist class included.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default = "default_image_folds")]
    pub image_folds: usize,
}

impl KernelSpec {
    pub fn power_law(dimension: usize, beta: f64) -> Self {
        KernelSpec {
            dimension,
            beta,
            family: KernelFamily::PowerLawLattice,
            window: None,
            image_folds: DEFAULT_IMAGE_FOLDS,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_image_folds(mut self, folds: usize) -> Self {
        self.image_folds = folds;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::Dimension(self.dimension));
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return Err(Error::BetaOutOfRange(self.beta));
        }
        if self.window == Some(0) {
            return Err(Error::InvalidParameter("kernel window must be >= 1".into()));
        }
        Ok(())
    }

    /// Window actually used on a torus of `sites` sites per dimension.
    pub fn resolved_window(&self, sites: usize) -> usize {
        self.window.unwrap_or(sites / 2)
    }
}

/// Normalized, symmetric jump law on the displacement classes of a torus.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    spec: KernelSpec,
    torus: Torus,
    displacements: Vec<[i64; 2]>,
    probs: Vec<f64>,
    total_mass: f64,
    dense: Vec<f64>,
    alias: AliasTable,
}

fn power_law_weight(z: [i64; 2], dim: usize, beta: f64) -> f64 {
    let r2 = (z[0] * z[0] + z[1] * z[1]) as f64;
    r2.powf(-0.5 * (dim as f64 + beta))
}

/// `true` for the representative of `{z, -z}` that carries the computed weight.
fn canonical(z: [i64; 2]) -> bool {
    z[0] > 0 || (z[0] == 0 && z[1] > 0)
}

/// Builds the folded, normalized kernel on a torus with `sites` sites per
/// dimension.
pub fn build_discrete_kernel(spec: &KernelSpec, sites: usize) -> Result<DiscreteKernel> {
    spec.validate()?;
    let torus = Torus::new(spec.dimension, sites)?;
    if let Some(window) = spec.window {
        if sites < 2 * window + 2 {
            return Err(Error::WindowTooLarge { window, sites });
        }
    }
    let window = spec.window;
    let d = spec.dimension;
    let m = sites as i64;
    let w = window.map_or(m / 2, |w| w as i64);

    let mut dense = vec![0.0; torus.sites()];
    match &spec.family {
        KernelFamily::PowerLawLattice => {
            // every lattice jump inside the image box, folded onto its class
            let reach = (2 * spec.image_folds as i64 + 1) * m / 2;
            let yreach = if d == 1 { 0 } else { reach };
            for zx in -reach..=reach {
                for zy in -yreach..=yreach {
                    if zx == 0 && zy == 0 {
                        continue;
                    }
                    let class = torus.wrap([zx, zy]);
                    if class == 0 {
                        continue;
                    }
                    if let Some(w) = window {
                        let c = torus.signed(class);
                        if c[0].abs() > w as i64 || c[1].abs() > w as i64 {
                            continue;
                        }
                    }
                    dense[class] += power_law_weight([zx, zy], d, spec.beta);
                }
            }
            for k in torus.iter() {
                let nk = torus.negate(k);
                if nk > k {
                    let avg = 0.5 * (dense[k] + dense[nk]);
                    dense[k] = avg;
                    dense[nk] = avg;
                }
            }
        }
        KernelFamily::CustomTabulated { table } => {
            if table.is_empty() {
                return Err(Error::KernelTable("empty table".into()));
            }
            let mut seen = std::collections::HashMap::new();
            for entry in table {
                if entry.displacement.len() != d {
                    return Err(Error::KernelTable(format!(
                        "displacement {:?} has wrong dimension",
                        entry.displacement
                    )));
                }
                if !(entry.weight >= 0.0) || !entry.weight.is_finite() {
                    return Err(Error::KernelTable(format!("bad weight {}", entry.weight)));
                }
                let z = [entry.displacement[0], if d == 2 { entry.displacement[1] } else { 0 }];
                if z == [0, 0] {
                    return Err(Error::KernelTable("zero displacement".into()));
                }
                if z[0].abs() > w || z[1].abs() > w {
                    return Err(Error::WindowTooLarge { window: z[0].abs().max(z[1].abs()) as usize, sites });
                }
                *seen.entry(z).or_insert(0.0) += entry.weight;
            }
            for (&z, &wz) in &seen {
                let wm = seen.get(&[-z[0], -z[1]]).copied();
                match wm {
                    Some(wm) if (wm - wz).abs() <= 1e-12 * wz.abs().max(wm.abs()) => {}
                    _ => return Err(Error::NonSymmetricKernel(vec![z[0], z[1]][..d].to_vec())),
                }
                if canonical(z) {
                    dense[torus.wrap(z)] += wz;
                    dense[torus.wrap([-z[0], -z[1]])] += wz;
                }
            }
        }
    }

    let total_mass: f64 = dense.iter().sum();
    if total_mass <= 0.0 {
        return Err(Error::KernelTable("kernel has zero mass".into()));
    }
    let mut displacements = Vec::new();
    let mut probs = Vec::new();
    for (idx, v) in dense.iter_mut().enumerate() {
        *v /= total_mass;
        if *v > 0.0 {
            displacements.push(torus.signed(idx));
            probs.push(*v);
        }
    }
    let alias = AliasTable::new(&probs);
    Ok(DiscreteKernel {
        spec: spec.clone(),
        torus,
        displacements,
        probs,
        total_mass,
        dense,
        alias,
    })
}

impl DiscreteKernel {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    /// Time speed-up `r(n) = n^beta` with `n` the torus side.
    pub fn speed(&self) -> f64 {
        (self.torus.side() as f64).powf(self.spec.beta)
    }

    /// Pre-normalization mass `Q`.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Support displacements (centered representatives) and their probabilities.
    pub fn support(&self) -> impl Iterator<Item = ([i64; 2], f64)> + '_ {
        self.displacements.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn displacement(&self, i: usize) -> [i64; 2] {
        self.displacements[i]
    }

    pub fn probability_of_entry(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// `q(z)` for any displacement, taken modulo the torus.
    pub fn prob(&self, z: [i64; 2]) -> f64 {
        self.dense[self.torus.wrap(z)]
    }

    /// Kernel laid out over the torus by displacement class.
    pub fn dense(&self) -> &[f64] {
        &self.dense
    }

    /// Index into `support()` drawn with probability `q`.
    #[inline]
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// Draws a displacement distributed exactly as `q`.
    #[inline]
    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> [i64; 2] {
        self.displacements[self.alias.sample(rng)]
    }
}

/// Torus eigenvalues of the sped-up one-particle generator,
/// `psi(j) = n^beta sum_z q(z) (cos(2 pi j.z / M) - 1)`, stored in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSymbol {
    torus: Torus,
    beta: f64,
    values: Vec<f64>,
}

impl FourierSymbol {
    /// Builds a symbol from a function of the signed mode. Enforces
    /// `psi(0) = 0`, evenness and nonpositivity.
    pub fn from_fn(torus: Torus, beta: f64, f: impl Fn([i64; 2]) -> f64) -> Self {
        let mut values: Vec<f64> = torus.iter().map(|k| f(torus.signed(k))).collect();
        symmetrize(&torus, &mut values);
        FourierSymbol { torus, beta, values }
    }

    pub fn torus(&self) -> Torus {
        self.torus
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `psi` at flat FFT index.
    #[inline]
    pub fn at(&self, index: usize) -> f64 {
        self.values[index]
    }

    /// `psi` at a signed mode (periodic in the mode).
    pub fn value(&self, mode: [i64; 2]) -> f64 {
        self.values[self.torus.wrap(mode)]
    }
}

fn symmetrize(torus: &Torus, values: &mut [f64]) {
    values[0] = 0.0;
    for k in torus.iter() {
        let nk = torus.negate(k);
        if nk > k {
            let avg = 0.5 * (values[k] + values[nk]);
            values[k] = avg;
            values[nk] = avg;
        }
    }
    for v in values.iter_mut() {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
}

/// Exact torus symbol of the kernel at scale `n = M` (the torus side).
pub fn discrete_symbol(kernel: &DiscreteKernel) -> FourierSymbol {
    let torus = kernel.torus();
    let spectral = Spectral::new(torus);
    let hat = spectral.forward_real(kernel.dense());
    let speed = kernel.speed();
    let mut values: Vec<f64> = hat.iter().map(|c| speed * (c.re - 1.0)).collect();
    symmetrize(&torus, &mut values);
    FourierSymbol {
        torus,
        beta: kernel.beta(),
        values,
    }
}

/// Convergence table for one macroscopic mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolLimit {
    pub mode: [i64; 2],
    pub per_n: Vec<(usize, f64)>,
    /// Extrapolated macroscopic symbol.
    pub limit: f64,
    /// Estimated convergence order (`None` when the fallback order 1 was used).
    pub order: Option<f64>,
    /// `|psi_{n_{i+1}} - psi_{n_i}|` strictly decreasing along the ladder.
    pub cauchy_decreasing: bool,
}

impl SymbolLimit {
    /// Non-monotone tails are reported, not fatal.
    pub fn non_monotone(&self) -> bool {
        !self.cauchy_decreasing
    }
}

/// Richardson-style extrapolation of a sequence sampled at increasing `n`.
/// The order is estimated from the last three points (Aitken); when that
/// estimate is unusable, first-order extrapolation is applied.
pub fn richardson(per_n: &[(usize, f64)]) -> (f64, Option<f64>) {
    let k = per_n.len();
    if k == 0 {
        return (f64::NAN, None);
    }
    if k == 1 {
        return (per_n[0].1, None);
    }
    let (n2, a2) = per_n[k - 2];
    let (n3, a3) = per_n[k - 1];
    let r = n3 as f64 / n2 as f64;
    if (a3 - a2).abs() <= 1e-15 * a3.abs().max(1e-300) {
        return (a3, None);
    }
    if k >= 3 {
        let (_, a1) = per_n[k - 3];
        let ratio = (a1 - a2) / (a2 - a3);
        if ratio.is_finite() && ratio > 1.0 {
            let p = ratio.ln() / r.ln();
            if p.is_finite() && p > 0.05 && p < 6.0 {
                return (a3 + (a3 - a2) / (r.powf(p) - 1.0), Some(p));
            }
        }
    }
    (a3 + (a3 - a2) / (r - 1.0), None)
}

/// Extrapolated macroscopic symbol for several modes from one ladder of
/// torus sizes (each symbol is computed once per `n`).
pub fn symbol_limit_table(spec: &KernelSpec, modes: &[[i64; 2]], n_list: &[usize]) -> Result<Vec<SymbolLimit>> {
    spec.validate()?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("n ladder must be nonempty and strictly increasing".into()));
    }
    let mut per_mode: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(n_list.len()); modes.len()];
    for &n in n_list {
        for mode in modes {
            if mode.iter().any(|&j| j.unsigned_abs() as usize > n / 2) {
                return Err(Error::SymbolUnavailable(mode[..spec.dimension].to_vec()));
            }
        }
        let kernel = build_discrete_kernel(spec, n)?;
        let symbol = discrete_symbol(&kernel);
        for (slot, mode) in per_mode.iter_mut().zip(modes) {
            slot.push((n, symbol.value(*mode)));
        }
    }
    Ok(modes
        .iter()
        .zip(per_mode)
        .map(|(&mode, per_n)| {
            if mode == [0, 0] {
                return SymbolLimit {
                    mode,
                    per_n,
                    limit: 0.0,
                    order: None,
                    cauchy_decreasing: true,
                };
            }
            let (limit, order) = richardson(&per_n);
            let diffs: Vec<f64> = per_n.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
            let cauchy_decreasing = diffs.windows(2).all(|w| w[1] < w[0]);
            SymbolLimit {
                mode,
                per_n,
                limit,
                order,
                cauchy_decreasing,
            }
        })
        .collect())
}

/// Single-mode convenience wrapper around [`symbol_limit_table`].
pub fn symbol_limit_estimate(spec: &KernelSpec, mode: [i64; 2], n_list: &[usize]) -> Result<SymbolLimit> {
    Ok(symbol_limit_table(spec, &[mode], n_list)?.remove(0))
}

/// Macroscopic symbol on a box of modes `|j|_inf <= max_mode`, extrapolated
/// from a ladder; used as the continuum reference by the form checks.
#[derive(Debug, Clone)]
pub struct LimitSymbol {
    dim: usize,
    max_mode: i64,
    values: std::collections::HashMap<[i64; 2], f64>,
}

impl LimitSymbol {
    pub fn build(spec: &KernelSpec, max_mode: usize, n_list: &[usize]) -> Result<Self> {
        let m = max_mode as i64;
        let mut modes = Vec::new();
        let ylim = if spec.dimension == 2 { m } else { 0 };
        for jx in 0..=m {
            for jy in -ylim..=ylim {
                if jx == 0 && jy < 0 {
                    continue;
                }
                modes.push([jx, jy]);
            }
        }
        let table = symbol_limit_table(spec, &modes, n_list)?;
        let mut values = std::collections::HashMap::new();
        for entry in table {
            let [a, b] = entry.mode;
            values.insert([a, b], entry.limit.min(0.0));
            values.insert([-a, -b], entry.limit.min(0.0));
        }
        Ok(LimitSymbol {
            dim: spec.dimension,
            max_mode: m,
            values,
        })
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode as usize
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, mode: [i64; 2]) -> Result<f64> {
        self.values
            .get(&mode)
            .copied()
            .ok_or_else(|| Error::SymbolUnavailable(mode[..self.dim].to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn small_spec() -> KernelSpec {
        KernelSpec::power_law(1, 1.0).with_window(2).with_image_folds(0)
    }

    #[test]
    fn hand_summed_weights() {
        let k = build_discrete_kernel(&small_spec(), 8).unwrap();
        assert!((k.total_mass() - 2.5).abs() < 1e-15);
        assert!((k.prob([1, 0]) - 0.4).abs() < 1e-15);
        assert!((k.prob([-1, 0]) - 0.4).abs() < 1e-15);
        assert!((k.prob([2, 0]) - 0.1).abs() < 1e-15);
        assert!((k.prob([-2, 0]) - 0.1).abs() < 1e-15);
        assert_eq!(k.prob([3, 0]), 0.0);
        assert_eq!(k.support_len(), 4);
    }

    #[test]
    fn image_folding_adds_periodic_copies() {
        let spec = KernelSpec::power_law(1, 1.0).with_window(1).with_image_folds(1);
        let k = build_discrete_kernel(&spec, 4).unwrap();
        // class +1 collects z in {1, 5, -3}
        let w1 = 1.0 + 1.0 / 25.0 + 1.0 / 9.0;
        assert!((k.total_mass() - 2.0 * w1).abs() < 1e-14);
        assert!((k.prob([1, 0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_normalized_for_defaults() {
        for (d, m, beta) in [(1, 64, 0.5), (1, 32, 1.7), (2, 16, 1.0), (2, 10, 0.3)] {
            let k = build_discrete_kernel(&KernelSpec::power_law(d, beta), m).unwrap();
            let t = k.torus();
            let sum: f64 = k.dense().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for i in t.iter() {
                assert_eq!(k.dense()[i], k.dense()[t.negate(i)]);
            }
            assert_eq!(k.dense()[0], 0.0);
            // strictly positive inside the window
            let w = k.spec().resolved_window(m) as i64;
            for (z, p) in k.support() {
                assert!(p > 0.0);
                assert!(z[0].abs() <= w && z[1].abs() <= w);
            }
            assert_eq!(k.support_len(), t.sites() - 1);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert_eq!(
            build_discrete_kernel(&KernelSpec::power_law(1, 2.0), 8).unwrap_err(),
            Error::BetaOutOfRange(2.0)
        );
        assert!(matches!(
            build_discrete_kernel(&KernelSpec::power_law(1, 1.0).with_window(4), 8),
            Err(Error::WindowTooLarge { .. })
        ));
        assert!(build_discrete_kernel(&KernelSpec::power_law(1, 0.0), 8).is_err());
        let asym = KernelSpec {
            dimension: 1,
            beta: 1.0,
            family: KernelFamily::CustomTabulated {
                table: vec![
                    TabulatedWeight { displacement: vec![1], weight: 1.0 },
                    TabulatedWeight { displacement: vec![-1], weight: 2.0 },
                ],
            },
            window: None,
            image_folds: 0,
        };
        assert!(matches!(build_discrete_kernel(&asym, 8), Err(Error::NonSymmetricKernel(_))));
    }

    #[test]
    fn custom_table_normalizes() {
        let spec = KernelSpec {
            dimension: 1,
            beta: 1.0,
            family: KernelFamily::CustomTabulated {
                table: vec![
                    TabulatedWeight { displacement: vec![1], weight: 3.0 },
                    TabulatedWeight { displacement: vec![-1], weight: 3.0 },
                    TabulatedWeight { displacement: vec![3], weight: 1.0 },
                    TabulatedWeight { displacement: vec![-3], weight: 1.0 },
                ],
            },
            window: None,
            image_folds: 0,
        };
        let k = build_discrete_kernel(&spec, 8).unwrap();
        assert!((k.total_mass() - 8.0).abs() < 1e-15);
        assert!((k.prob([3, 0]) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn nyquist_symbol_by_hand() {
        let k = build_discrete_kernel(&small_spec(), 8).unwrap();
        let s = discrete_symbol(&k);
        assert!((s.value([4, 0]) - (-12.8)).abs() < 1e-12);
        assert_eq!(s.value([0, 0]), 0.0);
    }

    #[test]
    fn symbol_matches_direct_cosine_sum() {
        for (d, m) in [(1, 32), (2, 8)] {
            let k = build_discrete_kernel(&KernelSpec::power_law(d, 1.3), m).unwrap();
            let s = discrete_symbol(&k);
            let t = k.torus();
            for idx in t.iter() {
                let j = t.signed(idx);
                let direct: f64 = k
                    .support()
                    .map(|(z, p)| {
                        let phase = 2.0 * PI * (j[0] * z[0] + j[1] * z[1]) as f64 / m as f64;
                        p * (phase.cos() - 1.0)
                    })
                    .sum::<f64>()
                    * k.speed();
                assert!((s.at(idx) - direct).abs() < 1e-10, "mode {j:?}");
                assert!(s.at(idx) <= 0.0);
                assert_eq!(s.at(idx), s.at(t.negate(idx)));
            }
        }
    }

    #[test]
    fn symbol_monotone_in_first_half_axis_d1() {
        for beta in [0.4, 1.0, 1.6] {
            let k = build_discrete_kernel(&KernelSpec::power_law(1, beta), 64).unwrap();
            let s = discrete_symbol(&k);
            for j in 0..32 {
                assert!(s.value([j + 1, 0]) <= s.value([j, 0]) + 1e-12, "beta {beta} j {j}");
            }
        }
    }

    #[test]
    fn sampling_two_point_law() {
        let spec = KernelSpec::power_law(1, 1.0).with_window(1).with_image_folds(0);
        let k = build_discrete_kernel(&spec, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let plus = (0..draws).filter(|_| k.sample_jump(&mut rng)[0] == 1).count();
        let freq = plus as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 3.0 * 0.5 / 1000.0, "freq {freq}");
    }

    #[test]
    fn sampling_long_jump_frequency() {
        let k = build_discrete_kernel(&small_spec(), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 200_000;
        let far = (0..draws).filter(|_| k.sample_jump(&mut rng)[0].abs() == 2).count();
        let p = 0.2;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((far as f64 / draws as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn j_zero_limit_is_zero() {
        let lim = symbol_limit_estimate(&KernelSpec::power_law(1, 1.0), [0, 0], &[16, 32, 64]).unwrap();
        assert_eq!(lim.limit, 0.0);
        assert!(lim.per_n.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn richardson_recovers_first_order_sequence() {
        let seq: Vec<(usize, f64)> = [64usize, 128, 256, 512].iter().map(|&n| (n, -6.0 + 3.0 / n as f64 + 10.0 / (n * n) as f64)).collect();
        let (lim, order) = richardson(&seq);
        assert!((lim + 6.0).abs() < 1e-3, "{lim}");
        assert!(order.unwrap() > 0.9);
    }

    #[test]
    fn mode_beyond_nyquist_is_unavailable() {
        let err = symbol_limit_estimate(&KernelSpec::power_law(1, 1.0), [20, 0], &[16, 32]).unwrap_err();
        assert!(matches!(err, Error::SymbolUnavailable(_)));
    }
}
