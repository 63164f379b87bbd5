//! Interaction kernels on the periodic grid.
//!
//! Kernels are periodized by summing lattice images, so `a = int J` is the
//! full mass of `J` and constant on the torus. The symbol is stored in
//! physical normalization, `J_hat(k) = int J(x) exp(-i k.x) dx`, so that
//! `J_hat(0) = a` and `(J * f)_hat = J_hat * f_hat` coefficient by coefficient.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{self, inner, inverse_transform, same_grid, transform, Grid, ScalarField, SpectrumField};

/// One entry of a user-supplied symbol table: `J_hat` at mode `(mx, my)`.
/// The mirrored mode `(-mx, -my)` receives the same value.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolEntry {
    pub mx: i64,
    pub my: i64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelSpec {
    /// `strength / (2 pi sigma^2) * exp(-|x|^2 / (2 sigma^2))`, mass `strength`.
    Gaussian { sigma: f64, strength: f64 },
    /// `strength * exp(-1 / (1 - |x|^2 / radius^2))` inside the disc.
    Mollifier { radius: f64, strength: f64 },
    /// Trigonometric kernel given by its symbol.
    Spectral { symbol: Vec<SymbolEntry> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelNorms {
    pub a: f64,
    pub norm_l1: f64,
    pub grad_norm_l1: f64,
    /// `sup a(x)`; equals `a` on the torus.
    pub a_star: f64,
}

#[derive(Clone, Debug)]
pub struct KernelOnGrid {
    samples: ScalarField,
    symbol: SpectrumField,
    a: f64,
    norm_l1: f64,
    grad_norm_l1: f64,
}

const NEGATIVITY_TOL: f64 = 1e-12;

impl KernelOnGrid {
    pub fn build(spec: &KernelSpec, grid: &Grid) -> Result<Self> {
        let l = grid.l();
        match *spec {
            KernelSpec::Gaussian { sigma, strength } => {
                check_positive("gaussian sigma", sigma)?;
                check_nonnegative("gaussian strength", strength)?;
                if sigma > l / 6.0 {
                    return Err(Error::Config(format!(
                        "gaussian sigma = {sigma} exceeds l/6 = {}",
                        l / 6.0
                    )));
                }
                let norm = strength / (2.0 * PI * sigma * sigma);
                let value = |r2: f64| norm * (-r2 / (2.0 * sigma * sigma)).exp();
                // |grad J| = J(r) * r / sigma^2, so the image sum is done on the vector
                let grad = |dx: f64, dy: f64| {
                    let j = value(dx * dx + dy * dy) / (sigma * sigma);
                    (-j * dx, -j * dy)
                };
                Ok(Self::from_analytic(grid, 2, value, grad))
            }
            KernelSpec::Mollifier { radius, strength } => {
                check_positive("mollifier radius", radius)?;
                check_nonnegative("mollifier strength", strength)?;
                if radius > l / 2.0 {
                    return Err(Error::Config(format!(
                        "mollifier radius = {radius} exceeds half the domain ({})",
                        l / 2.0
                    )));
                }
                let value = |r2: f64| {
                    let rho2 = r2 / (radius * radius);
                    if rho2 < 1.0 {
                        strength * (-1.0 / (1.0 - rho2)).exp()
                    } else {
                        0.0
                    }
                };
                let grad = |dx: f64, dy: f64| {
                    let rho2 = (dx * dx + dy * dy) / (radius * radius);
                    if rho2 < 1.0 {
                        let s = 1.0 - rho2;
                        // dJ/dx_i = J * (-2 x_i / r^2) / s^2
                        let c = -strength * (-1.0 / s).exp() * 2.0 / (radius * radius * s * s);
                        (c * dx, c * dy)
                    } else {
                        (0.0, 0.0)
                    }
                };
                Ok(Self::from_analytic(grid, 0, value, grad))
            }
            KernelSpec::Spectral { ref symbol } => Self::from_symbol(symbol, grid),
        }
    }

    /// Samples `value(|x|^2)` summed over `(2 images + 1)^2` lattice copies.
    fn from_analytic(
        grid: &Grid,
        images: i64,
        value: impl Fn(f64) -> f64,
        grad: impl Fn(f64, f64) -> (f64, f64),
    ) -> Self {
        let n = grid.n();
        let l = grid.l();
        let mut samples = Vec::with_capacity(grid.len());
        let mut grad_mag = Vec::with_capacity(grid.len());
        for idx in 0..grid.len() {
            let x = minimal_image(grid.coord(idx % n), l);
            let y = minimal_image(grid.coord(idx / n), l);
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for p in -images..=images {
                for q in -images..=images {
                    let dx = x + p as f64 * l;
                    let dy = y + q as f64 * l;
                    v += value(dx * dx + dy * dy);
                    let (ax, ay) = grad(dx, dy);
                    gx += ax;
                    gy += ay;
                }
            }
            samples.push(v);
            grad_mag.push((gx * gx + gy * gy).sqrt());
        }
        let cell = grid.cell_area();
        let grad_norm_l1 = grad_mag.iter().sum::<f64>() * cell;
        let samples = ScalarField::new(grid, samples).expect("sized to grid");
        Self::finish(samples, grad_norm_l1)
    }

    fn from_symbol(table: &[SymbolEntry], grid: &Grid) -> Result<Self> {
        let n = grid.n() as i64;
        let mut spec = SpectrumField::zeros(grid);
        let scale = 1.0 / grid.area();
        for e in table {
            if !e.value.is_finite() {
                return Err(Error::Config(format!("symbol at ({}, {}) is not finite", e.mx, e.my)));
            }
            if 2 * e.mx.abs() >= n || 2 * e.my.abs() >= n {
                return Err(Error::Config(format!(
                    "symbol mode ({}, {}) is not resolved on an n = {n} grid",
                    e.mx, e.my
                )));
            }
            let c = Complex64::new(e.value * scale, 0.0);
            for (mx, my) in [(e.mx, e.my), (-e.mx, -e.my)] {
                let idx = grid.index_of_mode(my) * grid.n() + grid.index_of_mode(mx);
                spec.coeffs_mut()[idx] = c;
            }
        }
        let samples = inverse_transform(&spec);
        let scale_max = samples.max_abs().max(f64::MIN_POSITIVE);
        if samples.min() < -NEGATIVITY_TOL * scale_max {
            return Err(Error::Config(format!(
                "spectral kernel is negative somewhere (min sample {})",
                samples.min()
            )));
        }
        let grad = spectral::gradient(&samples);
        let grad_norm_l1 = grad
            .x
            .values()
            .iter()
            .zip(grad.y.values())
            .map(|(a, b)| (a * a + b * b).sqrt())
            .sum::<f64>()
            * grid.cell_area();
        Ok(Self::finish(samples, grad_norm_l1))
    }

    /// Kernel from a raw periodic sample table, centered at the origin
    /// sample. No symmetry or sign is enforced; used to audit arbitrary
    /// tables. The gradient norm uses spectral differentiation.
    pub fn from_samples(samples: ScalarField) -> Result<Self> {
        if !samples.is_finite() {
            return Err(Error::Config("kernel table has non-finite samples".into()));
        }
        let grid = samples.grid().clone();
        let grad = spectral::gradient(&samples);
        let grad_norm_l1 = grad
            .x
            .values()
            .iter()
            .zip(grad.y.values())
            .map(|(a, b)| (a * a + b * b).sqrt())
            .sum::<f64>()
            * grid.cell_area();
        Ok(Self::finish(samples, grad_norm_l1))
    }

    fn finish(samples: ScalarField, grad_norm_l1: f64) -> Self {
        let grid = samples.grid().clone();
        let area = grid.area();
        let symbol = transform(&samples).apply(|_| Complex64::new(area, 0.0));
        let a = samples.integral();
        let norm_l1 = samples.values().iter().map(|v| v.abs()).sum::<f64>() * grid.cell_area();
        Self {
            samples,
            symbol,
            a,
            norm_l1,
            grad_norm_l1,
        }
    }

    pub fn grid(&self) -> &Grid {
        self.samples.grid()
    }

    pub fn samples(&self) -> &ScalarField {
        &self.samples
    }

    /// `J_hat(k)` in physical normalization.
    pub fn symbol(&self) -> &SpectrumField {
        &self.symbol
    }

    /// Real part of `J_hat` at flat spectral index `idx`.
    pub fn symbol_at(&self, idx: usize) -> f64 {
        self.symbol.coeffs()[idx].re
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn norms(&self) -> KernelNorms {
        KernelNorms {
            a: self.a,
            norm_l1: self.norm_l1,
            grad_norm_l1: self.grad_norm_l1,
            a_star: self.a,
        }
    }

    /// `J * f` in spectral space.
    pub fn convolve_spectrum(&self, fh: &SpectrumField) -> SpectrumField {
        let sym = self.symbol.coeffs();
        fh.apply(|i| sym[i])
    }

    pub fn convolve(&self, f: &ScalarField) -> Result<ScalarField> {
        same_grid(self.grid(), f.grid())?;
        Ok(inverse_transform(&self.convolve_spectrum(&transform(f))))
    }

    /// `1/4 int int J(x-y) (f(x) - f(y))^2 dx dy`, evaluated as
    /// `1/2 (a ||f||^2 - (f, J * f))`.
    pub fn interaction_energy(&self, f: &ScalarField) -> Result<f64> {
        let jf = self.convolve(f)?;
        Ok(0.5 * (self.a * inner(f, f)? - inner(f, &jf)?))
    }
}

/// `(a, ||J||_1, ||grad J||_1, a*)` of a built kernel.
pub fn kernel_norms(k: &KernelOnGrid) -> KernelNorms {
    k.norms()
}

fn minimal_image(x: f64, l: f64) -> f64 {
    if x > 0.5 * l {
        x - l
    } else {
        x
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {v}")))
    }
}

fn check_nonnegative(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be nonnegative, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{convolution_oracle, interaction_energy_oracle};
    use crate::spectral::norm_l2;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: &Grid, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::new(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn gaussian(grid: &Grid, sigma_frac: f64, strength: f64) -> KernelOnGrid {
        KernelOnGrid::build(
            &KernelSpec::Gaussian {
                sigma: sigma_frac * grid.l(),
                strength,
            },
            grid,
        )
        .unwrap()
    }

    /// `int_0^1 exp(-1/u) du = e^{-1} - E1(1)` with the exponential integral
    /// from its convergent series.
    fn bump_integral() -> f64 {
        let euler_gamma = 0.577_215_664_901_532_9;
        let mut e1 = -euler_gamma;
        let mut fact = 1.0;
        for k in 1..40 {
            fact *= k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            e1 += sign / (k as f64 * fact);
        }
        (-1.0f64).exp() - e1
    }

    #[test]
    fn gaussian_mass_matches_strength() {
        let g = Grid::new(64, 2.0).unwrap();
        let k = gaussian(&g, 0.05, 1.0);
        assert!((k.a() - 1.0).abs() < 1e-10, "{}", k.a());
        assert!((k.symbol_at(0) - k.a()).abs() < 1e-12);
        let n = k.norms();
        assert!(n.a <= n.norm_l1 + 1e-15);
        assert_eq!(n.a_star, n.a);
    }

    #[test]
    fn gaussian_gradient_norm_matches_closed_form() {
        // ||grad J||_1 = strength * E|X| / sigma^2 with |X| Rayleigh(sigma)
        let g = Grid::new(256, 1.0).unwrap();
        let (sigma, strength) = (0.05, 2.0);
        let k = KernelOnGrid::build(&KernelSpec::Gaussian { sigma, strength }, &g).unwrap();
        let exact = strength * (PI / 2.0).sqrt() / sigma;
        let rel = (k.norms().grad_norm_l1 - exact).abs() / exact;
        assert!(rel < 1e-3, "{rel}");
    }

    #[test]
    fn mollifier_mass_matches_bump_integral() {
        let g = Grid::new(128, 1.0).unwrap();
        let (radius, strength) = (0.3, 1.5);
        let k = KernelOnGrid::build(&KernelSpec::Mollifier { radius, strength }, &g).unwrap();
        let exact = strength * PI * radius * radius * bump_integral();
        assert!((bump_integral() - 0.148_495_506_8).abs() < 1e-9);
        assert!((k.a() - exact).abs() < 1e-8 * exact, "{} vs {exact}", k.a());
    }

    #[test]
    fn spectral_constant_kernel() {
        let g = Grid::new(16, 3.0).unwrap();
        let table = vec![SymbolEntry { mx: 0, my: 0, value: 2.5 }];
        let k = KernelOnGrid::build(&KernelSpec::Spectral { symbol: table }, &g).unwrap();
        assert!((k.a() - 2.5).abs() < 1e-13);
        let expected = 2.5 / g.area();
        assert!(k.samples().values().iter().all(|v| (v - expected).abs() < 1e-14));
        assert!(k.norms().grad_norm_l1 < 1e-13);
    }

    #[test]
    fn spectral_kernel_rejects_negative_samples() {
        let g = Grid::new(16, 1.0).unwrap();
        let table = vec![
            SymbolEntry { mx: 0, my: 0, value: 1.0 },
            SymbolEntry { mx: 1, my: 0, value: 2.0 },
        ];
        assert!(KernelOnGrid::build(&KernelSpec::Spectral { symbol: table }, &g).is_err());
    }

    #[test]
    fn build_rejects_bad_parameters() {
        let g = Grid::new(32, 1.0).unwrap();
        for spec in [
            KernelSpec::Gaussian { sigma: -0.1, strength: 1.0 },
            KernelSpec::Gaussian { sigma: 0.2, strength: 1.0 },
            KernelSpec::Gaussian { sigma: 0.1, strength: -1.0 },
            KernelSpec::Mollifier { radius: 0.6, strength: 1.0 },
            KernelSpec::Mollifier { radius: 0.0, strength: 1.0 },
        ] {
            assert!(matches!(KernelOnGrid::build(&spec, &g), Err(Error::Config(_))), "{spec:?}");
        }
    }

    #[test]
    fn convolving_constants_gives_a() {
        let g = Grid::new(32, 1.0).unwrap();
        let k = gaussian(&g, 0.1, 3.0);
        let out = k.convolve(&ScalarField::constant(&g, 1.0)).unwrap();
        assert!(out.values().iter().all(|v| (v - k.a()).abs() < 1e-12));
    }

    #[test]
    fn convolving_a_single_mode_scales_by_symbol() {
        let l = 2.0;
        let g = Grid::new(32, l).unwrap();
        let k = gaussian(&g, 0.08, 1.0);
        let f = ScalarField::from_fn(&g, |x, y| (2.0 * PI * (2.0 * x + y) / l).cos());
        let out = k.convolve(&f).unwrap();
        // the same symbol value by direct quadrature of J(x) cos(k.x)
        let kx = 2.0 * PI * 2.0 / l;
        let ky = 2.0 * PI / l;
        let n = g.n();
        let sym: f64 = k
            .samples()
            .values()
            .iter()
            .enumerate()
            .map(|(i, j)| j * (kx * g.coord(i % n) + ky * g.coord(i / n)).cos())
            .sum::<f64>()
            * g.cell_area();
        let diff = out.sub(&f.scale(sym)).unwrap().max_abs();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn convolve_matches_direct_double_sum() {
        let g = Grid::new(32, 1.0).unwrap();
        let k = gaussian(&g, 0.06, 1.0);
        for seed in 0..3 {
            let f = random_field(&g, seed);
            let fast = k.convolve(&f).unwrap();
            let slow = convolution_oracle(&k, &f).unwrap();
            let rel = norm_l2(&fast.sub(&slow).unwrap()) / norm_l2(&slow);
            assert!(rel < 1e-10, "{rel}");
        }
    }

    #[test]
    fn interaction_energy_matches_double_sum() {
        let g = Grid::new(16, 1.0).unwrap();
        let k = gaussian(&g, 0.1, 2.0);
        for seed in 0..3 {
            let f = random_field(&g, seed + 10);
            let direct = interaction_energy_oracle(&k, &f).unwrap();
            let e = k.interaction_energy(&f).unwrap();
            assert!((e - direct).abs() <= 1e-9 * direct, "{e} {direct}");
        }
    }

    #[test]
    fn interaction_energy_of_constants_and_single_modes() {
        let l = 1.0;
        let g = Grid::new(32, l).unwrap();
        let k = gaussian(&g, 0.07, 1.3);
        assert!(k.interaction_energy(&ScalarField::constant(&g, 0.7)).unwrap().abs() < 1e-13);
        let f = ScalarField::from_fn(&g, |x, _| (2.0 * PI * 3.0 * x / l).cos());
        let idx = g.index_of_mode(3);
        let expected = 0.5 * (k.a() - k.symbol_at(idx)) * norm_l2(&f).powi(2);
        let e = k.interaction_energy(&f).unwrap();
        assert!((e - expected).abs() < 1e-13, "{e} {expected}");
    }

    #[test]
    fn zero_kernel_is_harmless() {
        let g = Grid::new(16, 1.0).unwrap();
        let k = KernelOnGrid::build(&KernelSpec::Spectral { symbol: vec![] }, &g).unwrap();
        assert_eq!(k.a(), 0.0);
        let f = random_field(&g, 1);
        assert_eq!(k.interaction_energy(&f).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn convolution_is_self_adjoint_and_bounded(seed in 0u64..10_000, sigma_frac in 0.03f64..0.16) {
            let g = Grid::new(32, 1.5).unwrap();
            let k = gaussian(&g, sigma_frac, 1.7);
            let f = random_field(&g, seed);
            let h = random_field(&g, seed ^ 0xdead);
            let jf = k.convolve(&f).unwrap();
            let jh = k.convolve(&h).unwrap();
            let lhs = inner(&jf, &h).unwrap();
            let rhs = inner(&f, &jh).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * norm_l2(&f) * norm_l2(&h) * k.a());
            let norms = k.norms();
            prop_assert!(norm_l2(&jf) <= norms.norm_l1 * norm_l2(&f) * (1.0 + 1e-12));
            let grad_jf = spectral::seminorm_h1(&jf);
            prop_assert!(grad_jf <= norms.grad_norm_l1 * norm_l2(&f) * (1.0 + 1e-12));
            prop_assert!(k.interaction_energy(&f).unwrap() >= 0.0);
        }

        #[test]
        fn mollifier_interaction_energy_is_nonnegative(seed in 0u64..10_000, radius in 0.1f64..0.5) {
            let g = Grid::new(32, 1.0).unwrap();
            let k = KernelOnGrid::build(&KernelSpec::Mollifier { radius, strength: 1.0 }, &g).unwrap();
            let f = random_field(&g, seed);
            prop_assert!(k.interaction_energy(&f).unwrap() >= -1e-14 * norm_l2(&f).powi(2));
        }
    }
}
