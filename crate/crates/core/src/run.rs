//! Running a configured simulation and auditing it as it goes.

use std::fs;
use std::path::{Path, PathBuf};

use crate::diagnostics::{
    dissipative_envelope, energy_inequality_check, envelope_constants, gradient_control_check,
    growth_coercivity_margin, quadratic_coercivity_margin, record, secondary_gradient_margin, CheckConstants,
    DiagnosticsRecord, EnvelopeCheck, InequalityCheck, INEQUALITY_SLACK,
};
use crate::error::{Error, Result};
use crate::hypotheses::{audit, HypothesisReport, Inequality, Verdict};
use crate::io::config::{SimConfig, StabilizerMode};
use crate::io::csv::append_many;
use crate::io::initial::{initial_phi, initial_velocity};
use crate::io::snapshot::{write_snapshot, SnapshotHeader};
use crate::kernel::KernelOnGrid;
use crate::potential::{stabilizer_bound, Potential};
use crate::solver::{SimParams, SimState, Simulator};
use crate::spectral::{leray_project, mean, Grid, ScalarField, VectorField};

/// Mass drift allowed at any record.
pub const MASS_TOL: f64 = 1e-12;
/// Scaled divergence allowed at any record.
pub const DIVERGENCE_TOL: f64 = 1e-11;
/// Per-step energy increase allowed in stable unforced runs, times `1 + |E0|`.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Skip the hypothesis gate.
    pub force: bool,
    /// Replaces the seed of random initial data.
    pub seed: Option<u64>,
    /// Write the CSV, report and snapshots under the configured directory.
    pub write_files: bool,
}

/// Everything a run needs, before the first step.
pub struct Prepared {
    pub sim: Simulator,
    pub state: SimState,
    pub report: HypothesisReport,
    /// Range on which the stabilizer was validated; `None` for a fixed value.
    pub validated_range: Option<(f64, f64)>,
    /// Whether `S` dominates the stabilizer bound, so the scheme is
    /// unconditionally energy stable.
    pub stable: bool,
}

/// Builds the simulator and initial state and audits the hypotheses.
pub fn prepare(config: &SimConfig, opts: &RunOptions) -> Result<Prepared> {
    let grid = Grid::new(config.n, config.l)?;
    let phi = initial_phi(&config.initial, &grid, opts.seed)?;
    let u = initial_velocity(&config.u0, &grid)?;
    prepare_with(config, phi, u, None, opts)
}

/// As [`prepare`], on the grid of the given initial data and optionally with
/// a stabilizer fixed by the caller (studies share one across levels).
pub fn prepare_with(
    config: &SimConfig,
    phi: ScalarField,
    u: VectorField,
    stabilizer: Option<f64>,
    opts: &RunOptions,
) -> Result<Prepared> {
    let grid = phi.grid().clone();
    let kernel = KernelOnGrid::build(&config.kernel, &grid)?;
    let potential = Potential::new(&config.potential)?;
    let u = leray_project(&u);
    let report = audit(&kernel, &potential, &config.forcing, config.range);
    if config.checks.enforce_hypotheses && !opts.force {
        gate(&report)?;
    }
    let (lo, hi) = stabilizer_range(config, &phi);
    let bound = stabilizer_bound(&potential, (lo, hi));
    let (stabilizer, validated_range) = match (stabilizer, &config.stabilizer) {
        (Some(s), _) => (s, None),
        (None, StabilizerMode::Auto) => (bound, Some((lo, hi))),
        (None, StabilizerMode::Value(s)) => (*s, None),
    };
    let params = SimParams {
        nu: config.nu,
        dt: config.dt,
        stabilizer,
        t_end: config.t_end,
        dealias: config.dealias,
        force_form: config.force_form,
    };
    let sim = Simulator::new(kernel, potential, params, config.forcing.clone())?;
    Ok(Prepared {
        sim,
        state: SimState::new(phi, u, 0.0)?,
        report,
        validated_range,
        stable: stabilizer >= bound,
    })
}

/// Working range widened to `[min phi0 - 0.5, max phi0 + 0.5]`.
pub fn stabilizer_range(config: &SimConfig, phi0: &ScalarField) -> (f64, f64) {
    (
        config.range.0.min(phi0.min() - 0.5),
        config.range.1.max(phi0.max() + 0.5),
    )
}

/// The stabilizer `stabilizer = auto` resolves to for this initial data.
pub fn auto_stabilizer(config: &SimConfig, phi0: &ScalarField) -> Result<f64> {
    let potential = Potential::new(&config.potential)?;
    Ok(stabilizer_bound(&potential, stabilizer_range(config, phi0)))
}

fn gate(report: &HypothesisReport) -> Result<()> {
    let checks = [
        ("(H1)", &report.h1, None),
        ("(H2)", &report.h2, Some(Inequality::H2)),
        ("(H3)", &report.h3, Some(Inequality::H3)),
    ];
    for (name, verdict, which) in checks {
        if let Verdict::Fail(detail) = verdict {
            let at = which
                .and_then(|w| report.witness(w))
                .map_or(f64::NAN, |w| w.at);
            return Err(Error::Hypothesis {
                hypothesis: name,
                at,
                detail: format!("{detail} (use --force to run anyway)"),
            });
        }
    }
    Ok(())
}

/// Worst value of a monitored margin and when it occurred.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Worst {
    pub value: f64,
    pub t: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::INFINITY,
            t: f64::NAN,
        }
    }

    fn min(&mut self, value: f64, t: f64) {
        if value < self.value {
            self.value = value;
            self.t = t;
        }
    }

    fn max(&mut self, value: f64, t: f64) {
        if !(self.value.is_finite()) || value > self.value {
            self.value = value;
            self.t = t;
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub report: HypothesisReport,
    pub stabilizer: f64,
    /// One record per step, starting with the initial state.
    pub records: Vec<DiagnosticsRecord>,
    pub mass_drift: Worst,
    pub divergence: Worst,
    /// Largest per-step energy increase relative to `1 + |E0|`.
    pub energy_increase: Worst,
    pub inequality: InequalityCheck,
    pub envelope: Option<std::result::Result<EnvelopeCheck, String>>,
    /// `None` when the gradient-control precondition fails somewhere.
    pub grad_control: Option<Worst>,
    pub secondary_gradient: Worst,
    pub quadratic_coercivity: Worst,
    pub growth_coercivity: Option<Worst>,
    /// Violated assertions, one line each; empty for a clean run.
    pub failures: Vec<String>,
    pub csv_path: Option<PathBuf>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let last = self.records.last();
        line("steps", (self.records.len() - 1).to_string());
        line("t_final", last.map_or(0.0, |r| r.t).to_string());
        line("stabilizer", self.stabilizer.to_string());
        line("energy_initial", self.records[0].total_energy.to_string());
        line("energy_final", last.map_or(0.0, |r| r.total_energy).to_string());
        line("mass_drift", format!("{:e}", self.mass_drift.value));
        line("divergence", format!("{:e}", self.divergence.value));
        line("energy_increase", format!("{:e}", self.energy_increase.value));
        line(
            "energy_inequality",
            format!(
                "{} (worst margin {:e} at t = {})",
                if self.inequality.passed { "PASS" } else { "FAIL" },
                self.inequality.worst_margin,
                self.inequality.worst_t
            ),
        );
        match &self.envelope {
            None => {}
            Some(Ok(e)) => line(
                "envelope",
                format!(
                    "{} (k = {}, K = {}, offset = {}, worst margin {:e} at t = {})",
                    if e.passed { "PASS" } else { "FAIL" },
                    e.constants.k,
                    e.constants.big_k,
                    e.constants.offset,
                    e.worst_margin,
                    e.worst_t
                ),
            ),
            Some(Err(why)) => line("envelope", format!("N/A ({why})")),
        }
        match &self.grad_control {
            Some(w) => line("grad_control_margin", format!("{:e} at t = {}", w.value, w.t)),
            None => line("grad_control_margin", "N/A".into()),
        }
        line("secondary_gradient_margin", format!("{:e}", self.secondary_gradient.value));
        line("quadratic_coercivity_margin", format!("{:e}", self.quadratic_coercivity.value));
        if let Some(w) = &self.growth_coercivity {
            line("growth_coercivity_margin", format!("{:e}", w.value));
        }
        line("result", if self.passed() { "PASS".into() } else { "FAIL".into() });
        for f in &self.failures {
            line("failure", f.clone());
        }
        s
    }
}

fn snapshot(dir: &Path, step: usize, state: &SimState) -> Result<()> {
    let g = state.grid();
    let header = |name: &str, count| SnapshotHeader {
        name: name.to_string(),
        n: g.n(),
        l: g.l(),
        t: state.t,
        count,
    };
    write_snapshot(
        &header("phi", g.len()),
        state.phi.values(),
        &dir.join(format!("phi_{step:06}.bin")),
    )?;
    let mut u = state.u.x.values().to_vec();
    u.extend_from_slice(state.u.y.values());
    write_snapshot(&header("u", 2 * g.len()), &u, &dir.join(format!("u_{step:06}.bin")))
}

/// Runs `config` to `t_end`, recording every step and asserting the
/// monitored invariants. Errors abort the run (hypothesis gate, blow-up,
/// leaving the validated range); violated invariants are collected in
/// [`RunOutcome::failures`].
pub fn run(config: &SimConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let Prepared {
        sim,
        mut state,
        report,
        validated_range,
        stable,
    } = prepare(config, opts)?;
    let grid = state.grid().clone();
    let area = grid.area();
    let consts = CheckConstants::from_report(&report);
    let nu = config.nu;

    let csv_path = if opts.write_files {
        let dir = &config.outputs.out_dir;
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.txt"), report.to_text())?;
        let path = dir.join("diagnostics.csv");
        if path.exists() {
            fs::remove_file(&path)?;
        }
        Some(path)
    } else {
        None
    };

    let mean0 = mean(&state.phi);
    let (r0, m0) = record(&sim, &state, None, None, &consts, 0.0)?;
    let mut records = vec![r0];
    let mut metrics = vec![m0];
    let mut pending = vec![r0];
    let flush = |pending: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        if let Some(p) = &csv_path {
            append_many(pending, p)?;
        }
        pending.clear();
        Ok(())
    };
    if opts.write_files && config.outputs.snapshot_every > 0 {
        snapshot(&config.outputs.out_dir, 0, &state)?;
    }

    let steps = config.steps();
    log::info!(
        "running {steps} steps on {}^2, dt = {}, S = {}",
        grid.n(),
        config.dt,
        sim.params().stabilizer
    );
    for i in 0..steps {
        let out = match sim.advance(&state, i) {
            Ok(o) => o,
            Err(e) => {
                flush(&mut pending)?;
                return Err(e);
            }
        };
        state = out.state;
        if let Some((lo, hi)) = validated_range {
            let (min, max) = (state.phi.min(), state.phi.max());
            if min < lo || max > hi {
                flush(&mut pending)?;
                return Err(Error::RangeExit {
                    step: i + 1,
                    lo,
                    hi,
                    min,
                    max,
                });
            }
        }
        let prev = records.last().copied();
        let (r, m) = record(&sim, &state, Some(&out.scheme_mu), prev.as_ref(), &consts, 0.0)?;
        records.push(r);
        metrics.push(m);
        if (i + 1) % config.outputs.record_every == 0 || i + 1 == steps {
            pending.push(r);
            if pending.len() >= 256 {
                flush(&mut pending)?;
            }
        }
        if opts.write_files && config.outputs.snapshot_every > 0 && (i + 1) % config.outputs.snapshot_every == 0 {
            snapshot(&config.outputs.out_dir, i + 1, &state)?;
        }
    }
    flush(&mut pending)?;
    log::info!("finished at t = {}", state.t);

    let mut failures = Vec::new();
    let e0 = records[0].total_energy;
    let slack = INEQUALITY_SLACK * (1.0 + e0.abs());

    let mut mass_drift = Worst::new();
    let mut divergence = Worst::new();
    let mut energy_increase = Worst::new();
    let mut secondary_gradient = Worst::new();
    let mut quadratic_coercivity = Worst::new();
    let mut growth = report.h6_constants.as_ref().map(|_| Worst::new());
    let mut grad = Some(Worst::new());
    let in_range = |r: &DiagnosticsRecord| r.phi_min >= report.range.0 && r.phi_max <= report.range.1;
    for (idx, (r, m)) in records.iter().zip(&metrics).enumerate() {
        mass_drift.max((m.mean_phi - mean0).abs(), r.t);
        divergence.max(m.divergence, r.t);
        if idx > 0 {
            energy_increase.max((r.total_energy - records[idx - 1].total_energy) / (1.0 + e0.abs()), r.t);
        }
        secondary_gradient.min(secondary_gradient_margin(m, &consts), r.t);
        if in_range(r) {
            quadratic_coercivity.min(quadratic_coercivity_margin(r, m, &report, area), r.t);
            if let (Some(w), Some(v)) = (growth.as_mut(), growth_coercivity_margin(r, m, &report, area)) {
                w.min(v, r.t);
            }
        }
        grad = match (grad, gradient_control_check(r, m, report.beta, report.gradient_condition)) {
            (Some(mut w), Some(v)) => {
                w.min(v / (1.0 + r.grad_mu_sq), r.t);
                Some(w)
            }
            _ => None,
        };
    }

    if mass_drift.value > MASS_TOL {
        failures.push(format!(
            "mass drift {:e} > {MASS_TOL:e} at t = {}",
            mass_drift.value, mass_drift.t
        ));
    }
    if divergence.value > DIVERGENCE_TOL {
        failures.push(format!(
            "scaled divergence {:e} > {DIVERGENCE_TOL:e} at t = {}",
            divergence.value, divergence.t
        ));
    }
    if stable && sim.forcing().is_zero() && records.len() > 1 && energy_increase.value > MONOTONE_SLACK {
        failures.push(format!(
            "energy increased by {:e} (relative) at t = {}",
            energy_increase.value, energy_increase.t
        ));
    }
    let inequality = energy_inequality_check(&records, nu);
    if stable && !inequality.passed {
        failures.push(format!(
            "energy inequality violated by {:e} at t = {}",
            -inequality.worst_margin, inequality.worst_t
        ));
    }
    if quadratic_coercivity.value < -slack {
        failures.push(format!(
            "quadratic coercivity floor violated by {:e} at t = {}",
            -quadratic_coercivity.value, quadratic_coercivity.t
        ));
    }
    if let Some(w) = &growth {
        if w.value < -slack {
            failures.push(format!(
                "growth coercivity floor violated by {:e} at t = {}",
                -w.value, w.t
            ));
        }
    }
    if config.checks.grad_control {
        match &grad {
            Some(w) if w.value < -INEQUALITY_SLACK => failures.push(format!(
                "gradient control violated: relative margin {:e} at t = {}",
                w.value, w.t
            )),
            Some(_) => {}
            None => failures.push(format!(
                "gradient control requested but not applicable (gradient condition {}, mean {mean0:e})",
                report.gradient_condition
            )),
        }
    }
    let envelope = config.checks.dissipative.then(|| {
        envelope_constants(sim.potential(), sim.kernel(), nu, mean0, sim.forcing(), config.range)
            .map(|c| dissipative_envelope(&records, &c))
    });
    match &envelope {
        Some(Ok(e)) if !e.passed => failures.push(format!(
            "dissipative envelope exceeded by {:e} at t = {}",
            -e.worst_margin, e.worst_t
        )),
        Some(Err(why)) => failures.push(format!("dissipative envelope requested but not applicable: {why}")),
        _ => {}
    }

    let outcome = RunOutcome {
        report,
        stabilizer: sim.params().stabilizer,
        records,
        mass_drift,
        divergence,
        energy_increase,
        inequality,
        envelope,
        grad_control: grad,
        secondary_gradient,
        quadratic_coercivity,
        growth_coercivity: growth,
        failures,
        csv_path,
    };
    if opts.write_files {
        fs::write(config.outputs.out_dir.join("summary.txt"), outcome.summary())?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::parse_config;

    const BASE: &str = "grid.n = 16
grid.l = 6.283185307179586
kernel = gaussian
kernel.sigma = 0.3
kernel.strength = 6
potential = double_well
nu = 0.1
dt = 1e-3
t_end = 0.05
initial = random
initial.amplitude = 0.05
initial.seed = 2
";

    fn cfg(extra: &str) -> SimConfig {
        parse_config(&format!("{BASE}{extra}")).unwrap()
    }

    #[test]
    fn stable_run_records_every_step_and_passes() {
        let out = run(&cfg(""), &RunOptions::default()).unwrap();
        assert_eq!(out.records.len(), 51);
        assert!(out.passed(), "{:?}", out.failures);
        // half of max |F"| = 44 on the default range [-2, 2]
        assert_eq!(out.stabilizer, 22.0);
        assert!(out.inequality.passed && out.energy_increase.value < 0.0);
    }

    #[test]
    fn leaving_the_validated_range_aborts() {
        // wells at +-3, outside the validated [-2.5, 2.5]
        let text = BASE
            .replace("potential = double_well", "potential = quartic\npotential.a4 = 1\npotential.a2 = -18\npotential.a0 = 81")
            .replace("kernel.strength = 6", "kernel.strength = 40")
            .replace("t_end = 0.05", "t_end = 2");
        let err = run(&parse_config(&text).unwrap(), &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RangeExit { .. }), "{err}");
    }

    #[test]
    fn gate_refuses_failing_hypotheses_unless_forced() {
        let weak = parse_config(&BASE.replace("kernel.strength = 6", "kernel.strength = 1")).unwrap();
        let err = run(&weak, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Hypothesis { hypothesis: "(H2)", .. }), "{err}");
        let forced = RunOptions {
            force: true,
            ..RunOptions::default()
        };
        assert!(run(&weak, &forced).is_ok());
    }

    #[test]
    fn inapplicable_requested_checks_are_failures() {
        // the default kernel violates C_P < c0 / (2 |grad J|_1)
        let out = run(&cfg("checks.grad_control = true\n"), &RunOptions::default()).unwrap();
        assert!(out.grad_control.is_none());
        assert!(out.failures.iter().any(|f| f.contains("gradient control")));
    }

    #[test]
    fn fixed_stabilizer_skips_range_validation() {
        let p = prepare(&cfg("stabilizer = 30\n"), &RunOptions::default()).unwrap();
        assert!(p.validated_range.is_none() && p.stable);
        let p = prepare(&cfg("stabilizer = 0\n"), &RunOptions::default()).unwrap();
        assert!(!p.stable);
    }
}
