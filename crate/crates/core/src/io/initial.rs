//! Deterministic initial data.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::config::{InitialPhi, InitialVelocity};
use crate::io::snapshot::read_snapshot;
use crate::spectral::{inverse_transform, Grid, ScalarField, SpectrumField, VectorField};

fn mode_stream(mx: i64, my: i64) -> u64 {
    (((mx + (1 << 31)) as u64) << 32) | (my + (1 << 31)) as u64
}

/// Random field whose Fourier coefficient at each mode `m` with
/// `|m_x|, |m_y| <= cutoff` is drawn from its own ChaCha stream keyed by
/// `(seed, m)`. The same seed and cutoff therefore give the same continuous
/// function on every grid that resolves the cutoff. Scaled to rms
/// `amplitude` after removing the mean, then shifted to `mean`.
pub fn random_field(grid: &Grid, amplitude: f64, mean: f64, seed: u64, cutoff: usize) -> Result<ScalarField> {
    let n = grid.n();
    if 2 * cutoff >= n {
        return Err(Error::Config(format!(
            "random data cutoff {cutoff} is not resolved on a {n}-point grid"
        )));
    }
    let c = cutoff as i64;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut power = 0.0;
    for my in 0..=c {
        for mx in -c..=c {
            if my == 0 && mx <= 0 {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(mode_stream(mx, my));
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            coeffs[grid.index_of_mode(mx) + n * grid.index_of_mode(my)] = z;
            coeffs[grid.index_of_mode(-mx) + n * grid.index_of_mode(-my)] = z.conj();
            power += 2.0 * z.norm_sqr();
        }
    }
    let f = inverse_transform(&SpectrumField::new(grid, coeffs)?);
    let scale = if power > 0.0 { amplitude / power.sqrt() } else { 0.0 };
    Ok(f.map(|v| mean + scale * v))
}

/// Band `tanh((l/4 - |x - l/2|) / width)` of the `+1` phase.
pub fn tanh_strip(grid: &Grid, width: f64) -> ScalarField {
    let l = grid.l();
    ScalarField::from_fn(grid, |x, _| ((0.25 * l - (x - 0.5 * l).abs()) / width).tanh())
}

/// `A (sin kx cos ky, -cos kx sin ky)` with `k = 2 pi / l`.
pub fn taylor_green(grid: &Grid, amplitude: f64) -> VectorField {
    let k = 2.0 * PI / grid.l();
    VectorField::from_fn(grid, |x, y| {
        (
            amplitude * (k * x).sin() * (k * y).cos(),
            -amplitude * (k * x).cos() * (k * y).sin(),
        )
    })
}

fn load(path: &Path, grid: &Grid, components: usize) -> Result<Vec<f64>> {
    let (h, v) = read_snapshot(path)?;
    if h.n != grid.n() || h.l.to_bits() != grid.l().to_bits() || h.count != components * grid.len() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            detail: format!(
                "snapshot is {} values on n = {}, l = {}; expected {} on n = {}, l = {}",
                h.count,
                h.n,
                h.l,
                components * grid.len(),
                grid.n(),
                grid.l()
            ),
        });
    }
    Ok(v)
}

pub fn initial_phi(spec: &InitialPhi, grid: &Grid, seed_override: Option<u64>) -> Result<ScalarField> {
    match spec {
        InitialPhi::Uniform { value } => Ok(ScalarField::constant(grid, *value)),
        InitialPhi::Random {
            amplitude,
            mean,
            seed,
            cutoff,
        } => random_field(
            grid,
            *amplitude,
            *mean,
            seed_override.unwrap_or(*seed),
            cutoff.unwrap_or(grid.n() / 4),
        ),
        InitialPhi::TanhStrip { width } => Ok(tanh_strip(grid, *width)),
        InitialPhi::File { path } => ScalarField::new(grid, load(path, grid, 1)?),
    }
}

pub fn initial_velocity(spec: &InitialVelocity, grid: &Grid) -> Result<VectorField> {
    match spec {
        InitialVelocity::Zero => Ok(VectorField::zeros(grid)),
        InitialVelocity::TaylorGreen { amplitude } => Ok(taylor_green(grid, *amplitude)),
        InitialVelocity::File { path } => {
            let v = load(path, grid, 2)?;
            let (x, y) = v.split_at(grid.len());
            VectorField::new(ScalarField::new(grid, x.to_vec())?, ScalarField::new(grid, y.to_vec())?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{divergence, mean, norm_l2, resample};

    #[test]
    fn random_field_is_resolution_independent() {
        let g32 = Grid::new(32, 3.0).unwrap();
        let g128 = Grid::new(128, 3.0).unwrap();
        let a = random_field(&g32, 0.2, 0.1, 9, 7).unwrap();
        let b = random_field(&g128, 0.2, 0.1, 9, 7).unwrap();
        let down = resample(&b, &g32).unwrap();
        assert!(a.sub(&down).unwrap().max_abs() < 1e-14);
        assert!((mean(&a) - 0.1).abs() < 1e-15);
        let rms = norm_l2(&a.map(|v| v - 0.1)) / g32.area().sqrt();
        assert!((rms - 0.2).abs() < 1e-14);
    }

    #[test]
    fn seeds_differ_and_repeat() {
        let g = Grid::new(16, 1.0).unwrap();
        let a = random_field(&g, 1.0, 0.0, 1, 3).unwrap();
        let b = random_field(&g, 1.0, 0.0, 1, 3).unwrap();
        let c = random_field(&g, 1.0, 0.0, 2, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.sub(&c).unwrap().max_abs() > 0.1);
        assert!(random_field(&g, 1.0, 0.0, 1, 8).is_err());
    }

    #[test]
    fn taylor_green_is_solenoidal_and_strip_has_two_phases() {
        let g = Grid::new(32, 2.0 * PI).unwrap();
        assert!(divergence(&taylor_green(&g, 1.0)).max_abs() < 1e-13);
        let s = tanh_strip(&g, 0.1);
        assert!(s.max() > 0.99 && s.min() < -0.99);
    }
}
