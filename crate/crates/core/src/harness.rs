//! Brute-force oracles and refinement studies.

use std::f64::consts::PI;

use crate::diagnostics::{record, CheckConstants};
use crate::error::{Error, Result};
use crate::io::config::{InitialPhi, InitialVelocity, SimConfig, StabilizerMode};
use crate::io::initial::{self, initial_phi, initial_velocity};
use crate::kernel::KernelOnGrid;
use crate::run::{auto_stabilizer, prepare_with, RunOptions};
use crate::solver::SimState;
use crate::spectral::{norm_l2, norm_l2_vec, resample, same_grid, seminorm_h1, Grid, ScalarField, VectorField};

/// Largest grid accepted by the O(n^4) oracles.
pub const ORACLE_MAX_N: usize = 64;

/// `(J * f)(x_i) = sum_j h^2 J(x_i - x_j) f(x_j)` as a literal periodic
/// double sum over the kernel samples.
pub fn convolution_oracle(kernel: &KernelOnGrid, f: &ScalarField) -> Result<ScalarField> {
    let grid = f.grid();
    same_grid(grid, kernel.grid())?;
    let n = grid.n();
    if n > ORACLE_MAX_N {
        return Err(Error::Study(format!(
            "direct convolution limited to n <= {ORACLE_MAX_N}, got {n}"
        )));
    }
    let h2 = grid.cell_area();
    let j = kernel.samples();
    let fv = f.values();
    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let (ix, iy) = (i % n, i / n);
        let mut acc = 0.0;
        for (jdx, &fj) in fv.iter().enumerate() {
            let dx = (ix + n - jdx % n) % n;
            let dy = (iy + n - jdx / n) % n;
            acc += j.get(dx, dy) * fj;
        }
        *o = acc * h2;
    }
    ScalarField::new(grid, out)
}

/// `(1/4) sum_i sum_j h^4 J(x_i - x_j) (f_i - f_j)^2`, the interaction energy
/// straight from its definition.
pub fn interaction_energy_oracle(kernel: &KernelOnGrid, f: &ScalarField) -> Result<f64> {
    let grid = f.grid();
    same_grid(grid, kernel.grid())?;
    let n = grid.n();
    if n > ORACLE_MAX_N {
        return Err(Error::Study(format!(
            "direct interaction energy limited to n <= {ORACLE_MAX_N}, got {n}"
        )));
    }
    let h2 = grid.cell_area();
    let j = kernel.samples();
    let fv = f.values();
    let mut acc = 0.0;
    for (i, &fi) in fv.iter().enumerate() {
        for (jdx, &fj) in fv.iter().enumerate() {
            let dx = (i % n + n - jdx % n) % n;
            let dy = (i / n + n - jdx / n) % n;
            let d = fi - fj;
            acc += j.get(dx, dy) * d * d;
        }
    }
    Ok(0.25 * h2 * h2 * acc)
}

/// One named per-level quantity of a study.
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

impl Column {
    fn new(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            values,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StudyVerdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Result of a multi-level study: grid sizes or time steps, the metrics
/// measured at each level, observed orders between consecutive levels and
/// pass/fail verdicts.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyResult {
    pub study: String,
    pub levels: Vec<f64>,
    pub metrics: Vec<Column>,
    pub orders: Vec<Column>,
    pub verdicts: Vec<StudyVerdict>,
}

impl StudyResult {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn metric(&self, name: &str) -> Option<&[f64]> {
        self.metrics.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    pub fn order(&self, name: &str) -> Option<&[f64]> {
        self.orders.iter().find(|c| c.name == name).map(|c| c.values.as_slice())
    }

    /// One row per level: `level, metric...`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level");
        for c in &self.metrics {
            s.push(',');
            s.push_str(&c.name);
        }
        s.push('\n');
        for (i, l) in self.levels.iter().enumerate() {
            s.push_str(&format!("{l:.16e}"));
            for c in &self.metrics {
                s.push_str(&format!(",{:.16e}", c.values[i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}\n", self.study);
        s.push_str(&self.to_csv());
        for c in &self.orders {
            let v: Vec<String> = c.values.iter().map(|x| format!("{x:.4}")).collect();
            s.push_str(&format!("order {} = {}\n", c.name, v.join(", ")));
        }
        for v in &self.verdicts {
            s.push_str(&format!(
                "{} {}: {}\n",
                if v.passed { "PASS" } else { "FAIL" },
                v.name,
                v.detail
            ));
        }
        s
    }
}

/// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive levels.
pub fn observed_orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

fn order_verdict(name: &str, orders: &[f64], lo: f64, hi: f64) -> StudyVerdict {
    StudyVerdict {
        name: name.to_string(),
        passed: !orders.is_empty() && orders.iter().all(|o| (lo..=hi).contains(o)),
        detail: format!("observed {orders:.4?}, expected within [{lo}, {hi}]"),
    }
}

fn study_options() -> RunOptions {
    RunOptions {
        force: true,
        ..RunOptions::default()
    }
}

fn with_dt(config: &SimConfig, dt: f64) -> SimConfig {
    SimConfig { dt, ..config.clone() }
}

fn check_levels(dts: &[f64]) -> Result<()> {
    if dts.len() < 3 {
        return Err(Error::Study(format!("need at least 3 levels, got {}", dts.len())));
    }
    if dts.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::Study("levels must be positive".into()));
    }
    Ok(())
}

/// Kinetic energy of the Taylor-Green vortex against its exact decay
/// `e^{-4 nu t}` (for the lowest mode on `l = 2 pi`), at each time step in
/// `dts`. Requires uniform `phi` and zero forcing.
pub fn taylor_green(config: &SimConfig, dts: &[f64]) -> Result<StudyResult> {
    check_levels(dts)?;
    let mut problems = Vec::new();
    if (config.l - 2.0 * PI).abs() > 1e-12 {
        problems.push(format!("needs l = 2 pi, got {}", config.l));
    }
    if !matches!(config.initial, InitialPhi::Uniform { .. }) {
        problems.push("needs initial = uniform".to_string());
    }
    if !config.forcing.is_zero() {
        problems.push("needs zero forcing".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::ConfigList(problems));
    }
    let amplitude = match config.u0 {
        InitialVelocity::TaylorGreen { amplitude } => amplitude,
        _ => 1.0,
    };
    let grid = Grid::new(config.n, config.l)?;
    let mut errors = Vec::new();
    let mut finals = Vec::new();
    for &dt in dts {
        let cfg = with_dt(config, dt);
        let phi = initial_phi(&cfg.initial, &grid, None)?;
        let p = prepare_with(&cfg, phi, initial::taylor_green(&grid, amplitude), None, &study_options())?;
        let e0 = 0.5 * norm_l2_vec(&p.state.u).powi(2);
        let mut state = p.state;
        for i in 0..cfg.steps() {
            state = p.sim.step(&state, i)?;
        }
        let ke = 0.5 * norm_l2_vec(&state.u).powi(2);
        let exact = e0 * (-4.0 * cfg.nu * state.t).exp();
        finals.push(ke);
        errors.push(if exact > 0.0 { (ke - exact).abs() / exact } else { ke.abs() });
    }
    let orders = observed_orders(dts, &errors);
    let verdicts = vec![
        StudyVerdict {
            name: "relative kinetic energy error".into(),
            passed: errors[0] <= 1e-3,
            detail: format!("{:e} at dt = {} (limit 1e-3)", errors[0], dts[0]),
        },
        order_verdict("temporal order", &orders, 0.8, 1.2),
    ];
    Ok(StudyResult {
        study: "taylor-green".into(),
        levels: dts.to_vec(),
        metrics: vec![Column::new("kinetic_energy", finals), Column::new("relative_error", errors)],
        orders: vec![Column::new("relative_error", orders)],
        verdicts,
    })
}

/// Runs `config` at each time step, measuring the final-state difference
/// between consecutive levels (in `L2` for `phi` and `u` combined) and the
/// largest identity residual. Both should fall at first order.
pub fn dt_order_study(config: &SimConfig, dts: &[f64]) -> Result<StudyResult> {
    check_levels(dts)?;
    let grid = Grid::new(config.n, config.l)?;
    let phi0 = initial_phi(&config.initial, &grid, None)?;
    let u0 = initial_velocity(&config.u0, &grid)?;
    let stabilizer = match config.stabilizer {
        StabilizerMode::Auto => auto_stabilizer(config, &phi0)?,
        StabilizerMode::Value(s) => s,
    };
    let mut finals = Vec::new();
    let mut residuals = Vec::new();
    for &dt in dts {
        let cfg = with_dt(config, dt);
        let p = prepare_with(&cfg, phi0.clone(), u0.clone(), Some(stabilizer), &study_options())?;
        let consts = CheckConstants::from_report(&p.report);
        let mut state = p.state;
        let (mut prev, _) = record(&p.sim, &state, None, None, &consts, 0.0)?;
        let mut worst = 0.0f64;
        for i in 0..cfg.steps() {
            let out = p.sim.advance(&state, i)?;
            state = out.state;
            let (r, _) = record(&p.sim, &state, Some(&out.scheme_mu), Some(&prev), &consts, 0.0)?;
            worst = worst.max(r.identity_residual.abs());
            prev = r;
        }
        finals.push(state);
        residuals.push(worst);
    }
    let mut diffs = Vec::new();
    for w in finals.windows(2) {
        let dphi = norm_l2(&w[0].phi.sub(&w[1].phi)?);
        let du = norm_l2_vec(&w[0].u.sub(&w[1].u)?);
        diffs.push((dphi * dphi + du * du).sqrt());
    }
    let diff_orders = observed_orders(&dts[..dts.len() - 1], &diffs);
    let residual_orders = observed_orders(dts, &residuals);
    let mut diff_column = diffs.clone();
    diff_column.push(f64::NAN);
    Ok(StudyResult {
        study: "dt-order".into(),
        levels: dts.to_vec(),
        metrics: vec![
            Column::new("max_abs_identity_residual", residuals),
            Column::new("difference_to_next_level", diff_column),
        ],
        verdicts: vec![
            order_verdict("trajectory order", &diff_orders, 0.8, 1.2),
            order_verdict("identity residual order", &residual_orders, 0.8, 1.2),
        ],
        orders: vec![
            Column::new("trajectory", diff_orders),
            Column::new("identity_residual", residual_orders),
        ],
    })
}

/// Galerkin refinement: the same physical initial data, generated on the
/// finest grid and spectrally truncated to each size, run to `t_end` with a
/// shared stabilizer. Reports per level `sup_t |u|`, `sup_t |phi|`,
/// `int |grad mu|^2` and `int |phi|_V^2`, and the `L2(0, T; H)` distance of
/// each level's trajectory to the next one's, compared on the coarsest grid
/// at every `record_every`-th step.
pub fn galerkin_refinement(config: &SimConfig, sizes: &[usize]) -> Result<StudyResult> {
    if sizes.len() < 3 {
        return Err(Error::Study(format!("need at least 3 sizes, got {}", sizes.len())));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Study("sizes must be increasing".into()));
    }
    let finest = Grid::new(*sizes.last().unwrap(), config.l)?;
    let coarsest = Grid::new(sizes[0], config.l)?;
    let initial = match &config.initial {
        InitialPhi::Random {
            amplitude,
            mean,
            seed,
            cutoff,
        } => InitialPhi::Random {
            amplitude: *amplitude,
            mean: *mean,
            seed: *seed,
            cutoff: Some(cutoff.unwrap_or(sizes[0] / 4)),
        },
        other => other.clone(),
    };
    let phi_fine = initial_phi(&initial, &finest, None)?;
    let u_fine = initial_velocity(&config.u0, &finest)?;
    let stabilizer = match config.stabilizer {
        StabilizerMode::Auto => auto_stabilizer(config, &phi_fine)?,
        StabilizerMode::Value(s) => s,
    };
    let every = config.outputs.record_every.max(1);
    let dt = config.dt;

    let mut sup_u = Vec::new();
    let mut sup_phi = Vec::new();
    let mut int_mu = Vec::new();
    let mut int_v = Vec::new();
    let mut trajectories: Vec<Vec<(ScalarField, VectorField)>> = Vec::new();
    for &n in sizes {
        let grid = Grid::new(n, config.l)?;
        let phi = resample(&phi_fine, &grid)?;
        let u = VectorField::new(resample(&u_fine.x, &grid)?, resample(&u_fine.y, &grid)?)?;
        let cfg = SimConfig { n, ..config.clone() };
        let p = prepare_with(&cfg, phi, u, Some(stabilizer), &study_options())?;
        let mut state = p.state;
        let coarse = |s: &SimState| -> Result<(ScalarField, VectorField)> {
            Ok((
                resample(&s.phi, &coarsest)?,
                VectorField::new(resample(&s.u.x, &coarsest)?, resample(&s.u.y, &coarsest)?)?,
            ))
        };
        let mut traj = vec![coarse(&state)?];
        let (mut su, mut sp) = (norm_l2_vec(&state.u), norm_l2(&state.phi));
        let (mut im, mut iv) = (0.0, 0.0);
        for i in 0..cfg.steps() {
            let v_norm = norm_l2(&state.phi).powi(2) + seminorm_h1(&state.phi).powi(2);
            let out = p.sim.advance(&state, i).map_err(|e| {
                Error::Study(format!(
                    "level n = {n} aborted ({e}); completed levels: {:?}",
                    &sizes[..trajectories.len()]
                ))
            })?;
            state = out.state;
            im += dt * seminorm_h1(&out.scheme_mu).powi(2);
            iv += dt * v_norm;
            su = su.max(norm_l2_vec(&state.u));
            sp = sp.max(norm_l2(&state.phi));
            if (i + 1) % every == 0 {
                traj.push(coarse(&state)?);
            }
        }
        sup_u.push(su);
        sup_phi.push(sp);
        int_mu.push(im);
        int_v.push(iv);
        trajectories.push(traj);
    }

    let sample_dt = dt * every as f64;
    let mut diffs = Vec::new();
    for w in trajectories.windows(2) {
        let mut acc = 0.0;
        // left-endpoint rule over the sampled trajectory
        for (a, b) in w[0].iter().zip(&w[1]).take(w[0].len().saturating_sub(1)) {
            let dphi = norm_l2(&a.0.sub(&b.0)?);
            let du = norm_l2_vec(&a.1.sub(&b.1)?);
            acc += sample_dt * (dphi * dphi + du * du);
        }
        diffs.push(acc.sqrt());
    }

    let uniform = |name: &str, v: &[f64]| {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = if max == 0.0 { 1.0 } else { max / min };
        StudyVerdict {
            name: format!("{name} uniform across levels"),
            passed: ratio.is_finite() && ratio <= 2.0,
            detail: format!("max/min = {ratio:.6} (limit 2)"),
        }
    };
    let decreasing = diffs.windows(2).all(|w| w[1] < w[0]) || diffs.iter().all(|d| *d == 0.0);
    let mut verdicts = vec![
        uniform("sup_t |u|", &sup_u),
        uniform("sup_t |phi|", &sup_phi),
        uniform("int |grad mu|^2", &int_mu),
        uniform("int |phi|_V^2", &int_v),
    ];
    verdicts.push(StudyVerdict {
        name: "inter-level differences decrease".into(),
        passed: decreasing,
        detail: diffs.iter().map(|d| format!("{d:.6e}")).collect::<Vec<_>>().join(", "),
    });
    let mut diff_column = diffs;
    diff_column.push(f64::NAN);
    Ok(StudyResult {
        study: "galerkin-refinement".into(),
        levels: sizes.iter().map(|&n| n as f64).collect(),
        metrics: vec![
            Column::new("sup_u", sup_u),
            Column::new("sup_phi", sup_phi),
            Column::new("int_grad_mu_sq", int_mu),
            Column::new("int_phi_v_sq", int_v),
            Column::new("difference_to_next_level", diff_column),
        ],
        orders: Vec::new(),
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_config;
    use crate::kernel::KernelSpec;

    fn tg_config(n: usize, nu: f64, t_end: f64) -> SimConfig {
        let mut c = parse_config(&format!(
            "grid.n = {n}
grid.l = 6.283185307179586
kernel = gaussian
kernel.sigma = 0.3
kernel.strength = 6
potential = double_well
nu = 1
dt = 1e-2
t_end = {t_end}
initial = uniform
initial.value = 0
initial.u0 = taylor_green
"
        ))
        .unwrap();
        c.nu = nu;
        c
    }

    #[test]
    fn constant_field_convolves_to_a_times_constant() {
        let g = Grid::new(8, 1.0).unwrap();
        let k = KernelOnGrid::build(&KernelSpec::Gaussian { sigma: 0.1, strength: 2.0 }, &g).unwrap();
        let c = convolution_oracle(&k, &ScalarField::constant(&g, 3.0)).unwrap();
        assert!(c.values().iter().all(|v| (v - 3.0 * k.a()).abs() < 1e-13));
        let big = Grid::new(128, 1.0).unwrap();
        let kb = KernelOnGrid::build(&KernelSpec::Gaussian { sigma: 0.1, strength: 2.0 }, &big).unwrap();
        assert!(convolution_oracle(&kb, &ScalarField::zeros(&big)).is_err());
    }

    #[test]
    fn impulse_reproduces_shifted_kernel() {
        let g = Grid::new(8, 2.0).unwrap();
        let k = KernelOnGrid::build(&KernelSpec::Gaussian { sigma: 0.3, strength: 1.0 }, &g).unwrap();
        let mut v = vec![0.0; g.len()];
        v[2 + 8 * 5] = 1.0 / g.cell_area();
        let c = convolution_oracle(&k, &ScalarField::new(&g, v).unwrap()).unwrap();
        for iy in 0..8 {
            for ix in 0..8 {
                let j = k.samples().get((ix + 8 - 2) % 8, (iy + 8 - 5) % 8);
                assert!((c.get(ix, iy) - j).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn orders_of_an_exact_power_law() {
        let h = [0.4, 0.2, 0.1];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        for o in observed_orders(&h, &e) {
            assert!((o - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inviscid_vortex_keeps_its_energy() {
        let r = taylor_green(&tg_config(16, 0.0, 0.5), &[1e-2, 5e-3, 2.5e-3]).unwrap();
        for e in r.metric("relative_error").unwrap() {
            assert!(*e < 1e-10, "{e}");
        }
    }

    #[test]
    fn viscous_vortex_decays_at_first_order() {
        let r = taylor_green(&tg_config(16, 0.05, 0.5), &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!(r.passed(), "{}", r.summary());
    }

    #[test]
    fn zero_vortex_stays_zero() {
        let mut c = tg_config(16, 0.1, 0.1);
        c.u0 = InitialVelocity::TaylorGreen { amplitude: 0.0 };
        let r = taylor_green(&c, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!(r.metric("kinetic_energy").unwrap().iter().all(|e| *e == 0.0));
    }

    #[test]
    fn taylor_green_rejects_other_setups() {
        let mut c = tg_config(16, 0.1, 0.1);
        c.l = 1.0;
        c.initial = InitialPhi::TanhStrip { width: 0.1 };
        let Err(Error::ConfigList(errs)) = taylor_green(&c, &[1e-2, 5e-3, 2.5e-3]) else {
            panic!("expected errors");
        };
        assert_eq!(errs.len(), 2);
        assert!(taylor_green(&tg_config(16, 0.1, 0.1), &[1e-2, 5e-3]).is_err());
    }

    #[test]
    fn steady_state_has_no_time_step_error() {
        let mut c = tg_config(16, 0.1, 0.1);
        c.u0 = InitialVelocity::Zero;
        c.initial = InitialPhi::Uniform { value: 0.3 };
        let r = dt_order_study(&c, &[1e-2, 5e-3, 2.5e-3]).unwrap();
        assert!(r.metric("max_abs_identity_residual").unwrap().iter().all(|e| *e == 0.0));
        assert_eq!(r.metric("difference_to_next_level").unwrap()[..2], [0.0, 0.0]);
    }

    #[test]
    fn constant_data_is_identical_on_every_level() {
        let mut c = tg_config(8, 0.1, 0.05);
        c.u0 = InitialVelocity::Zero;
        c.initial = InitialPhi::Uniform { value: 0.3 };
        let r = galerkin_refinement(&c, &[8, 16, 32]).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.metric("difference_to_next_level").unwrap()[..2], [0.0, 0.0]);
        assert!(galerkin_refinement(&c, &[16, 8, 32]).is_err());
    }
}
