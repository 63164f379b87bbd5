//! Field algebra on a uniform periodic square grid.
//!
//! Samples are stored row-major with `x` running fastest: the sample at
//! `(ix, iy)` lives at `iy * n + ix` and sits at `(ix * h, iy * h)` with
//! `h = l / n`. Spectra use Fourier-series normalization: the coefficient of
//! a constant field equals the constant, and
//! `||f||^2 = |Omega| * sum |c_k|^2`.
//!
//! First derivatives zero the Nyquist wavenumber so that the derivative of a
//! real field stays real; the Laplacian is built from the same symbol, which
//! keeps `div(grad f) == laplacian(f)` exact on every mode.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid on the square `[0, l)^2`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    l: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("l", &self.l).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.l.to_bits() == other.l.to_bits()
    }
}

impl Grid {
    pub fn new(n: usize, l: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidGrid(format!("side length l = {l} must be positive")));
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            n,
            l,
            plans: Arc::new(plans),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    /// Number of samples, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.l / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing() * self.spacing()
    }

    /// Domain measure `|Omega| = l^2`.
    pub fn area(&self) -> f64 {
        self.l * self.l
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    /// Signed mode number in `[-n/2, n/2)` for array index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Array index of signed mode `m`.
    pub fn index_of_mode(&self, m: i64) -> usize {
        m.rem_euclid(self.n as i64) as usize
    }

    /// Physical wavenumber `2 pi m / l`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        2.0 * PI * self.mode(i) as f64 / self.l
    }

    /// Wavenumber used by derivative operators; zero on the Nyquist index.
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    /// `|k|^2` of the derivative symbol at flat spectral index `idx`.
    pub fn k_squared(&self, idx: usize) -> f64 {
        let kx = self.derivative_wavenumber(idx % self.n);
        let ky = self.derivative_wavenumber(idx / self.n);
        kx * kx + ky * ky
    }

    /// Smallest nonzero `|k|^2`, i.e. `(2 pi / l)^2`.
    pub fn spectral_gap(&self) -> f64 {
        let k1 = 2.0 * PI / self.l;
        k1 * k1
    }

    fn fft2(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward {
            &self.plans.forward
        } else {
            &self.plans.inverse
        };
        plan.process(data);
        transpose(data, n);
        plan.process(data);
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Real samples of a scalar on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let values = (0..grid.len())
            .map(|idx| f(grid.coord(idx % n), grid.coord(idx / n)))
            .collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.n() + ix]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid quadrature of the field over the domain.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }
}

/// A `d = 2` vector field; both components share one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self> {
        same_grid(&x.grid, &y.grid)?;
        Ok(Self { x, y })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            x: ScalarField::zeros(grid),
            y: ScalarField::zeros(grid),
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        Self {
            x: ScalarField::from_fn(grid, |x, y| f(x, y).0),
            y: ScalarField::from_fn(grid, |x, y| f(x, y).1),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.x.grid()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            x: self.x.add(&other.x)?,
            y: self.y.add(&other.y)?,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            x: self.x.sub(&other.x)?,
            y: self.y.sub(&other.y)?,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            x: self.x.scale(c),
            y: self.y.scale(c),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.x.max_abs().max(self.y.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Fourier coefficients of a real field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectrumField {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch {
                expected: grid.len(),
                got: coeffs.len(),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of the signed mode `(mx, my)`.
    pub fn mode(&self, mx: i64, my: i64) -> Complex64 {
        let g = &self.grid;
        self.coeffs[g.index_of_mode(my) * g.n() + g.index_of_mode(mx)]
    }

    /// Multiplies every coefficient by `symbol(flat_index)`.
    pub fn apply(&self, symbol: impl Fn(usize) -> Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| c * symbol(i))
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    /// Spectral derivative along `x` (`axis = 0`) or `y` (`axis = 1`).
    pub fn derivative(&self, axis: usize) -> Self {
        let g = &self.grid;
        let n = g.n();
        self.apply(|idx| {
            let i = if axis == 0 { idx % n } else { idx / n };
            Complex64::new(0.0, g.derivative_wavenumber(i))
        })
    }

    /// `sum |c_k|^2`.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Largest `|c(k) - conj(c(-k))|`; zero for the spectrum of a real field.
    pub fn conjugate_asymmetry(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let mut worst: f64 = 0.0;
        for iy in 0..n {
            for ix in 0..n {
                let jx = (n - ix) % n;
                let jy = (n - iy) % n;
                let d = self.coeffs[iy * n + ix] - self.coeffs[jy * n + jx].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

pub fn transform(f: &ScalarField) -> SpectrumField {
    let grid = f.grid();
    let mut data: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    grid.fft2(&mut data, true);
    let scale = 1.0 / grid.len() as f64;
    data.iter_mut().for_each(|c| *c *= scale);
    SpectrumField {
        grid: grid.clone(),
        coeffs: data,
    }
}

/// Inverse transform; the (round-off level) imaginary part is discarded.
pub fn inverse_transform(spec: &SpectrumField) -> ScalarField {
    let grid = spec.grid();
    let mut data = spec.coeffs.clone();
    grid.fft2(&mut data, false);
    ScalarField {
        grid: grid.clone(),
        values: data.iter().map(|c| c.re).collect(),
    }
}

pub fn gradient(f: &ScalarField) -> VectorField {
    let fh = transform(f);
    VectorField {
        x: inverse_transform(&fh.derivative(0)),
        y: inverse_transform(&fh.derivative(1)),
    }
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let sx = transform(&v.x).derivative(0);
    let sy = transform(&v.y).derivative(1);
    inverse_transform(&sx.add(&sy).expect("components share a grid"))
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = f.grid().clone();
    inverse_transform(&transform(f).apply(|i| Complex64::new(-g.k_squared(i), 0.0)))
}

/// Leray projection of a pair of component spectra, in place.
pub(crate) fn leray_project_spectra(sx: &mut SpectrumField, sy: &mut SpectrumField) {
    let g = sx.grid.clone();
    let n = g.n();
    for idx in 0..g.len() {
        let kx = g.derivative_wavenumber(idx % n);
        let ky = g.derivative_wavenumber(idx / n);
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            continue;
        }
        let vx = sx.coeffs[idx];
        let vy = sy.coeffs[idx];
        let kdotv = (vx * kx + vy * ky) / k2;
        sx.coeffs[idx] = vx - kdotv * kx;
        sy.coeffs[idx] = vy - kdotv * ky;
    }
}

/// Orthogonal projection onto divergence-free fields. The mean (zero mode)
/// passes through unchanged.
pub fn leray_project(v: &VectorField) -> VectorField {
    let mut sx = transform(&v.x);
    let mut sy = transform(&v.y);
    leray_project_spectra(&mut sx, &mut sy);
    VectorField {
        x: inverse_transform(&sx),
        y: inverse_transform(&sy),
    }
}

/// L2 inner product `(f, g)` by grid quadrature.
pub fn inner(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    same_grid(f.grid(), g.grid())?;
    let s: f64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum();
    Ok(s * f.grid().cell_area())
}

pub fn inner_vec(u: &VectorField, v: &VectorField) -> Result<f64> {
    Ok(inner(&u.x, &v.x)? + inner(&u.y, &v.y)?)
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    f.values.iter().map(|v| v * v).sum::<f64>().sqrt() * f.grid().spacing()
}

pub fn norm_l2_vec(v: &VectorField) -> f64 {
    (norm_l2(&v.x).powi(2) + norm_l2(&v.y).powi(2)).sqrt()
}

/// `||grad f||`, evaluated spectrally.
pub fn seminorm_h1(f: &ScalarField) -> f64 {
    seminorm_h1_spectrum(&transform(f))
}

pub(crate) fn seminorm_h1_spectrum(fh: &SpectrumField) -> f64 {
    let g = fh.grid();
    let s: f64 = fh
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| g.k_squared(i) * c.norm_sqr())
        .sum();
    (s * g.area()).sqrt()
}

/// `||grad u||` for a vector field (sum over components).
pub fn seminorm_h1_vec(v: &VectorField) -> f64 {
    (seminorm_h1(&v.x).powi(2) + seminorm_h1(&v.y).powi(2)).sqrt()
}

pub fn mean(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

/// True when signed mode `m` survives the 2/3 rule on an `n`-point axis.
pub fn is_resolved(m: i64, n: usize) -> bool {
    3 * m.unsigned_abs() as usize <= n
}

/// 2/3-rule truncation: zeroes every coefficient with some `|m| > n/3`.
pub fn dealias(spec: &SpectrumField) -> SpectrumField {
    let g = spec.grid().clone();
    let n = g.n();
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    spec.apply(|idx| {
        if is_resolved(g.mode(idx % n), n) && is_resolved(g.mode(idx / n), n) {
            one
        } else {
            zero
        }
    })
}

/// Pointwise product followed by 2/3-rule truncation.
pub fn dealiased_product(f: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    Ok(inverse_transform(&dealias(&transform(&f.mul(g)?))))
}

/// Trilinear form `b(u, v, w) = sum_ij int u_i (d_i v_j) w_j` by quadrature.
pub fn trilinear(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    same_grid(u.grid(), v.grid())?;
    same_grid(u.grid(), w.grid())?;
    let gvx = gradient(&v.x);
    let gvy = gradient(&v.y);
    let adv_x = u.x.mul(&gvx.x)?.add(&u.y.mul(&gvx.y)?)?;
    let adv_y = u.x.mul(&gvy.x)?.add(&u.y.mul(&gvy.y)?)?;
    Ok(inner(&adv_x, &w.x)? + inner(&adv_y, &w.y)?)
}

/// Spectral projection of `f` onto a coarser or finer grid of the same side
/// length: shared resolved modes are copied, the rest dropped or zero-filled.
/// Nyquist modes of the source are discarded.
pub fn resample(f: &ScalarField, target: &Grid) -> Result<ScalarField> {
    if f.grid().l().to_bits() != target.l().to_bits() {
        return Err(Error::GridMismatch);
    }
    let src = transform(f);
    let sg = f.grid();
    let (ns, nt) = (sg.n() as i64, target.n() as i64);
    let limit = ns.min(nt) / 2;
    let mut out = SpectrumField::zeros(target);
    for iy in 0..sg.n() {
        let my = sg.mode(iy);
        if my.abs() >= limit {
            continue;
        }
        for ix in 0..sg.n() {
            let mx = sg.mode(ix);
            if mx.abs() >= limit {
                continue;
            }
            let t = target.index_of_mode(my) * target.n() + target.index_of_mode(mx);
            out.coeffs[t] = src.coeffs[iy * sg.n() + ix];
        }
    }
    Ok(inverse_transform(&out))
}
