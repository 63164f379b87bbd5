//! Energy functionals along a trajectory and the discrete checks of the
//! energy identity, the energy inequality, the dissipative envelope, gradient
//! control and the coercivity floors.

use std::f64::consts::PI;

use crate::error::Result;
use crate::hypotheses::{estimate_c0, poincare_constant, verify_h6, HypothesisReport};
use crate::kernel::KernelOnGrid;
use crate::potential::Potential;
use crate::solver::{ForcingSpec, SimState, Simulator};
use crate::spectral::{divergence, inner_vec, mean, norm_l2, seminorm_h1, seminorm_h1_vec, ScalarField};

/// Relative slack `1e-8 (1 + |E(0)|)` used by the inequality verdicts.
pub const INEQUALITY_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub interaction: f64,
    pub bulk: f64,
    pub total: f64,
}

/// `E = |u|^2 / 2 + (1/4) int int J (phi(x) - phi(y))^2 + int F(phi)`.
pub fn total_energy(state: &SimState, kernel: &KernelOnGrid, potential: &Potential) -> Result<EnergyParts> {
    let kinetic = 0.5 * inner_vec(&state.u, &state.u)?;
    let interaction = kernel.interaction_energy(&state.phi)?;
    let bulk = potential.f_field(&state.phi).integral();
    Ok(EnergyParts {
        kinetic,
        interaction,
        bulk,
        total: kinetic + interaction + bulk,
    })
}

/// One row of the diagnostics file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub bulk: f64,
    pub total_energy: f64,
    pub grad_u_sq: f64,
    pub grad_mu_sq: f64,
    pub forcing_power: f64,
    pub identity_residual: f64,
    pub grad_control_margin: f64,
    pub phi_min: f64,
    pub phi_max: f64,
}

impl DiagnosticsRecord {
    pub const COLUMNS: [&'static str; 13] = [
        "t",
        "mass",
        "kinetic",
        "interaction",
        "bulk",
        "total_energy",
        "grad_u_sq",
        "grad_mu_sq",
        "forcing_power",
        "identity_residual",
        "grad_control_margin",
        "phi_min",
        "phi_max",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.mass,
            self.kinetic,
            self.interaction,
            self.bulk,
            self.total_energy,
            self.grad_u_sq,
            self.grad_mu_sq,
            self.forcing_power,
            self.identity_residual,
            self.grad_control_margin,
            self.phi_min,
            self.phi_max,
        ]
    }

    pub fn from_values(v: &[f64; 13]) -> Self {
        Self {
            t: v[0],
            mass: v[1],
            kinetic: v[2],
            interaction: v[3],
            bulk: v[4],
            total_energy: v[5],
            grad_u_sq: v[6],
            grad_mu_sq: v[7],
            forcing_power: v[8],
            identity_residual: v[9],
            grad_control_margin: v[10],
            phi_min: v[11],
            phi_max: v[12],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Per-state quantities used by the checks but not written to the file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateMetrics {
    pub mean_phi: f64,
    pub phi_sq: f64,
    pub grad_phi_sq: f64,
    /// `|grad mu|^2` for the chemical potential of the state itself.
    pub state_grad_mu_sq: f64,
    /// `int |phi - m|^{2+2q}` for the configured `q` (0 when unused).
    pub power_integral: f64,
    /// `max |div u|` scaled by `|u|_inf 2 pi n / l`.
    pub divergence: f64,
}

/// Constants the per-state checks depend on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConstants {
    pub beta: f64,
    pub c0: f64,
    pub norm_grad_j_l1: f64,
    /// Exponent `2 + 2q` of the coercivity floor, when available.
    pub power: Option<f64>,
}

impl CheckConstants {
    pub fn from_report(report: &HypothesisReport) -> Self {
        Self {
            beta: report.beta,
            c0: report.c0,
            norm_grad_j_l1: report.norm_grad_j_l1,
            power: report.h6_constants.as_ref().map(|h| 2.0 + 2.0 * h.q),
        }
    }
}

/// Evaluates a state. `prev` is the record one step earlier, used for the
/// identity residual (which is 0 for the first record).
///
/// `scheme_mu` is the chemical potential of the step that produced `state`
/// (see [`Simulator::advance`]); when given, it is what `grad_mu_sq` and hence
/// the dissipation measure. The gradient-control margin always uses the
/// chemical potential of the state itself.
pub fn record(
    sim: &Simulator,
    state: &SimState,
    scheme_mu: Option<&ScalarField>,
    prev: Option<&DiagnosticsRecord>,
    consts: &CheckConstants,
    power_shift: f64,
) -> Result<(DiagnosticsRecord, StateMetrics)> {
    let grid = state.grid();
    let e = total_energy(state, sim.kernel(), sim.potential())?;
    let mu = sim.chemical_potential(&state.phi);
    let state_grad_mu_sq = seminorm_h1(&mu).powi(2);
    let grad_mu_sq = scheme_mu.map_or(state_grad_mu_sq, |m| seminorm_h1(m).powi(2));
    let grad_u_sq = seminorm_h1_vec(&state.u).powi(2);
    let grad_phi_sq = seminorm_h1(&state.phi).powi(2);
    // a step from t - dt applied h(t - dt); pair it with the new velocity
    let forcing_time = if scheme_mu.is_some() {
        state.t - sim.params().dt
    } else {
        state.t
    };
    let forcing_power = if sim.forcing().is_zero() {
        0.0
    } else {
        inner_vec(&sim.forcing().field(grid, forcing_time), &state.u)?
    };
    let mut rec = DiagnosticsRecord {
        t: state.t,
        mass: state.phi.integral(),
        kinetic: e.kinetic,
        interaction: e.interaction,
        bulk: e.bulk,
        total_energy: e.total,
        grad_u_sq,
        grad_mu_sq,
        forcing_power,
        identity_residual: 0.0,
        grad_control_margin: state_grad_mu_sq - consts.beta * grad_phi_sq,
        phi_min: state.phi.min(),
        phi_max: state.phi.max(),
    };
    if let Some(p) = prev {
        rec.identity_residual = identity_residual(p, &rec, sim.params().nu);
    }
    let power_integral = match consts.power {
        Some(r) => state.phi.map(|v| (v - power_shift).abs().powf(r)).integral(),
        None => 0.0,
    };
    let umax = state.u.max_abs();
    let divergence = if umax > 0.0 {
        divergence(&state.u).max_abs() / (umax * 2.0 * PI * grid.n() as f64 / grid.l())
    } else {
        0.0
    };
    let metrics = StateMetrics {
        mean_phi: mean(&state.phi),
        phi_sq: norm_l2(&state.phi).powi(2),
        grad_phi_sq,
        state_grad_mu_sq,
        power_integral,
        divergence,
    };
    Ok((rec, metrics))
}

/// `(E_cur - E_prev)/dt + nu |grad u|^2 + |grad mu|^2 - <h, u>` with every
/// rate taken from the later record (which pairs the forcing of the step with
/// the velocity it produced).
pub fn identity_residual(prev: &DiagnosticsRecord, cur: &DiagnosticsRecord, nu: f64) -> f64 {
    let dt = cur.t - prev.t;
    (cur.total_energy - prev.total_energy) / dt + nu * cur.grad_u_sq + cur.grad_mu_sq - cur.forcing_power
}

fn dissipation_rate(r: &DiagnosticsRecord, nu: f64) -> f64 {
    nu * r.grad_u_sq + r.grad_mu_sq - r.forcing_power
}

#[derive(Clone, Debug, PartialEq)]
pub struct InequalityCheck {
    pub passed: bool,
    /// Smallest `E(0) + slack - E(t) - int_0^t (dissipation - power)` seen.
    pub worst_margin: f64,
    pub worst_t: f64,
    pub slack: f64,
}

/// `E(t) + int_0^t (nu |grad u|^2 + |grad mu|^2) <= E(0) + int_0^t <h, u>` at
/// every record, with the time integral taken by the right-endpoint rule (the
/// rule under which a step's residual telescopes exactly).
pub fn energy_inequality_check(series: &[DiagnosticsRecord], nu: f64) -> InequalityCheck {
    let Some(first) = series.first() else {
        return InequalityCheck {
            passed: true,
            worst_margin: 0.0,
            worst_t: 0.0,
            slack: 0.0,
        };
    };
    let slack = INEQUALITY_SLACK * (1.0 + first.total_energy.abs());
    let mut integral = 0.0;
    let (mut worst, mut worst_t) = (if series.len() > 1 { f64::INFINITY } else { 0.0 }, first.t);
    for w in series.windows(2) {
        integral += (w[1].t - w[0].t) * dissipation_rate(&w[1], nu);
        let margin = first.total_energy - w[1].total_energy - integral;
        if margin < worst {
            worst = margin;
            worst_t = w[1].t;
        }
    }
    InequalityCheck {
        passed: worst >= -slack,
        worst_margin: worst,
        worst_t,
        slack,
    }
}

/// Recovers `nu` from a series whose residuals were computed with it, so a
/// diagnostics file can be re-audited on its own. `None` when no record has
/// enough velocity gradient to pin it down.
pub fn infer_viscosity(series: &[DiagnosticsRecord]) -> Option<f64> {
    series
        .windows(2)
        .filter(|w| w[1].grad_u_sq > 0.0)
        .max_by(|a, b| a[1].grad_u_sq.total_cmp(&b[1].grad_u_sq))
        .map(|w| {
            let c = &w[1];
            let rest = (c.total_energy - w[0].total_energy) / (c.t - w[0].t) + c.grad_mu_sq - c.forcing_power;
            (c.identity_residual - rest) / c.grad_u_sq
        })
}

/// Constants of the dissipative estimate `E(t) <= E0 e^{-kt} + F(m)|Omega| + K`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeConstants {
    pub m: f64,
    pub lambda1: f64,
    pub c10: f64,
    pub c11: f64,
    pub k: f64,
    pub big_k: f64,
    /// `F(m) |Omega|`.
    pub offset: f64,
}

/// Assembles `k` and `K` for mean `m`, working with the shifted potential
/// `F~(s) = F(s + m) - F(m)` and its `(H6)` constants:
///
/// * `(mu, phi) >= 2 I + int F~ - (a*/2)|phi|^2` by convexity of `F~ + a* s^2/2`,
/// * `(mu, phi) <= C_P |grad mu| |phi| <= |grad mu|^2 + (C_P^2/4)|phi|^2`,
/// * `gamma s^2 <= F~(s)/2 + c_gamma` with `gamma = a*/2 + C_P^2/4`, from the
///   coercivity floor `F~ >= c7 |s|^{2+2q} - c8` and Young's inequality,
///
/// giving `E/2 <= c11 (nu/2 |grad u|^2 + |grad mu|^2) + c10` with
/// `c10 = c_gamma |Omega|` and `c11 = max(1, 1/(2 lambda1 nu))`, hence
/// `k = 1/(2 c11)` and `K = c10/(c11 k) + |h|^2_{L2(V')} / (2 nu)`.
pub fn envelope_constants(
    potential: &Potential,
    kernel: &KernelOnGrid,
    nu: f64,
    m: f64,
    forcing: &ForcingSpec,
    range: (f64, f64),
) -> std::result::Result<EnvelopeConstants, String> {
    let grid = kernel.grid();
    if !(nu > 0.0) {
        return Err("needs nu > 0".into());
    }
    let h_sq = forcing
        .dual_norm_sq_integral(grid)
        .ok_or("forcing is not in L^2(0, inf; V')")?;
    let a_star = kernel.norms().a_star;
    let shifted = potential.shifted(m);
    let c0 = estimate_c0(&shifted, a_star, range);
    if !c0.verdict.passed() {
        return Err(format!("(H2) fails: {}", c0.verdict));
    }
    let h6 = verify_h6(&shifted, a_star, range).ok_or("(H6) not applicable to the potential")?;
    let c_p = poincare_constant(grid);
    let gamma = 0.5 * a_star + 0.25 * c_p * c_p;
    let q = h6.q;
    // sup_s (gamma s^2 - (c7/2)|s|^{2+2q}) at |s|^{2q} = 2 gamma / ((1+q) c7)
    let s_sq = (2.0 * gamma / ((1.0 + q) * h6.c7)).powf(1.0 / q);
    let young = gamma * s_sq * q / (1.0 + q);
    let c_gamma = young + 0.5 * h6.c8;
    let area = grid.area();
    let c10 = (shifted.f(0.0) + c_gamma) * area;
    let lambda1 = grid.spectral_gap();
    let c11 = (1.0f64).max(1.0 / (2.0 * lambda1 * nu));
    let k = 1.0 / (2.0 * c11);
    let big_k = (c10 / c11) / k + h_sq / (2.0 * nu);
    Ok(EnvelopeConstants {
        m,
        lambda1,
        c10,
        c11,
        k,
        big_k,
        offset: potential.f(m) * area,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeCheck {
    pub constants: EnvelopeConstants,
    pub verdicts: Vec<bool>,
    pub worst_margin: f64,
    pub worst_t: f64,
    pub passed: bool,
}

/// Checks `E(t) <= E(0) e^{-kt} + F(m)|Omega| + K` at every record.
pub fn dissipative_envelope(series: &[DiagnosticsRecord], constants: &EnvelopeConstants) -> EnvelopeCheck {
    let e0 = series.first().map_or(0.0, |r| r.total_energy);
    let t0 = series.first().map_or(0.0, |r| r.t);
    let slack = INEQUALITY_SLACK * (1.0 + e0.abs());
    let (mut worst, mut worst_t) = (f64::INFINITY, t0);
    let verdicts = series
        .iter()
        .map(|r| {
            let bound = e0 * (-constants.k * (r.t - t0)).exp() + constants.offset + constants.big_k;
            let margin = bound - r.total_energy;
            if margin < worst {
                worst = margin;
                worst_t = r.t;
            }
            margin >= -slack
        })
        .collect::<Vec<_>>();
    EnvelopeCheck {
        constants: *constants,
        passed: verdicts.iter().all(|&v| v),
        verdicts,
        worst_margin: worst,
        worst_t,
    }
}

/// `|grad mu|^2 - beta |grad phi|^2`, or `None` when the gradient-control
/// precondition does not hold (mean-zero data and `C_P < c0 / (2 |grad J|_1)`).
pub fn gradient_control_check(
    record: &DiagnosticsRecord,
    metrics: &StateMetrics,
    beta: f64,
    condition_ok: bool,
) -> Option<f64> {
    let mean_zero = metrics.mean_phi.abs() <= 1e-12 * (1.0 + record.phi_max.abs().max(record.phi_min.abs()));
    (condition_ok && mean_zero).then_some(metrics.state_grad_mu_sq - beta * metrics.grad_phi_sq)
}

/// `|grad mu|^2 - (c0^2/4)|grad phi|^2 + 2 |grad J|_1^2 |phi|^2`, which is
/// nonnegative without any condition on the kernel.
pub fn secondary_gradient_margin(metrics: &StateMetrics, c: &CheckConstants) -> f64 {
    metrics.state_grad_mu_sq - 0.25 * c.c0 * c.c0 * metrics.grad_phi_sq
        + 2.0 * c.norm_grad_j_l1 * c.norm_grad_j_l1 * metrics.phi_sq
}

/// Slack of `2 I + 2 int F >= alpha |phi|^2 - 2 c2 |Omega|`.
pub fn quadratic_coercivity_margin(
    record: &DiagnosticsRecord,
    metrics: &StateMetrics,
    report: &HypothesisReport,
    area: f64,
) -> f64 {
    2.0 * record.interaction + 2.0 * record.bulk - report.alpha * metrics.phi_sq + 2.0 * report.c2 * area
}

/// Slack of `int F(phi) >= c7 int |phi|^{2+2q} - c8 |Omega|`, when the report
/// carries growth constants.
pub fn growth_coercivity_margin(
    record: &DiagnosticsRecord,
    metrics: &StateMetrics,
    report: &HypothesisReport,
    area: f64,
) -> Option<f64> {
    report
        .h6_constants
        .as_ref()
        .map(|h| record.bulk - h.c7 * metrics.power_integral + h.c8 * area)
}
