//! Numerical audit of the structural hypotheses on the kernel `J`, the
//! potential `F` and the forcing `h`, and of the constants derived from them.
//!
//! Statements quantified over all of `R` are handled exactly for the
//! polynomial tails (leading-term comparison, Cauchy root bounds) and by dense
//! sampling with golden-section refinement where the constants bind.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use crate::kernel::KernelOnGrid;
use crate::potential::{maximize, Extremum, Polynomial, Potential};
use crate::solver::ForcingSpec;
use crate::spectral::Grid;

/// Floor used where a hypothesis asks for a strictly positive constant that
/// the fit would otherwise set to zero.
pub const POSITIVE_FLOOR: f64 = 1e-9;
/// Relative give-up applied to a leading coefficient when the exact one
/// leaves a lower-order remainder that is unbounded above.
const LEADING_MARGIN: f64 = 1e-3;
/// Relative slack of the `(H4)` constant `c3` over its asymptotic value.
const H4_MARGIN: f64 = 1e-2;
/// Relative tolerance for evenness of kernel samples.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(String),
    NotApplicable(String),
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    fn from_bool(ok: bool, why: impl FnOnce() -> String) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail(why())
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail(why) => write!(f, "FAIL ({why})"),
            Verdict::NotApplicable(why) => write!(f, "N/A ({why})"),
        }
    }
}

/// Which inequality a witness belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Inequality {
    /// `F'' + a* >= c0`
    H2,
    /// `F >= c1 s^2 - c2`
    H3,
    /// `|F'|^p <= c3 |F| + c4`
    H4,
    /// `F'' + a* >= c5 |s|^{2q} - c6`
    H6,
    /// `F >= c7 |s|^{2+2q} - c8`
    Coercivity,
}

/// Point where an inequality is tightest, with its slack there
/// (right-hand side minus left-hand side of the `>=` form).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Witness {
    pub inequality: Inequality,
    pub at: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct H1Check {
    pub verdict: Verdict,
    /// `max |J(x) - J(-x)|` over the samples.
    pub max_asymmetry: f64,
    /// Flat sample index attaining it.
    pub at_index: usize,
}

pub fn check_h1(kernel: &KernelOnGrid) -> H1Check {
    let samples = kernel.samples();
    let n = samples.grid().n();
    let v = samples.values();
    let scale = samples.max_abs();
    let (mut worst, mut at_index) = (0.0f64, 0);
    for iy in 0..n {
        for ix in 0..n {
            let mirror = ((n - ix) % n) + ((n - iy) % n) * n;
            let d = (v[ix + iy * n] - v[mirror]).abs();
            if d > worst {
                worst = d;
                at_index = ix + iy * n;
            }
        }
    }
    let norms = kernel.norms();
    let mut problems = Vec::new();
    if worst > SYMMETRY_TOL * scale {
        problems.push(format!("J(x) != J(-x): asymmetry {worst:e} at sample {at_index}"));
    }
    if !(norms.a >= 0.0) {
        problems.push(format!("a = {} is negative", norms.a));
    }
    if !(norms.norm_l1.is_finite() && norms.grad_norm_l1.is_finite()) {
        problems.push("W^{1,1} norms are not finite".into());
    }
    H1Check {
        verdict: Verdict::from_bool(problems.is_empty(), || problems.join("; ")),
        max_asymmetry: worst,
        at_index,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct C0Estimate {
    pub c0: f64,
    pub at: f64,
    /// `-min F''`.
    pub m0: f64,
    pub verdict: Verdict,
}

/// `c0 = min (F'' + a*)`, over the range and every critical point of `F''`.
pub fn estimate_c0(potential: &Potential, a_star: f64, range: (f64, f64)) -> C0Estimate {
    let e = potential.min_curvature(range);
    let c0 = e.value + a_star;
    C0Estimate {
        c0,
        at: e.at,
        m0: -e.value,
        verdict: Verdict::from_bool(c0 > 0.0, || format!("F'' + a* = {c0} at s = {}", e.at)),
    }
}

/// Supremum of `p` over the union of `range` and the region holding its
/// critical points; `None` if `p` is unbounded above.
fn sup_over(p: &Polynomial, range: (f64, f64)) -> Option<Extremum> {
    let global = p.sup()?;
    if p.degree() == 0 {
        return Some(global);
    }
    let r = p.derivative().root_radius() + 1.0;
    let local = maximize(|s| p.eval(s), range.0.min(-r), range.1.max(r));
    Some(if local.value >= global.value { local } else { global })
}

fn monomial(c: f64, k: usize) -> Polynomial {
    let mut v = vec![0.0; k + 1];
    v[k] = c;
    Polynomial::new(v)
}

fn sub(p: &Polynomial, q: &Polynomial) -> Polynomial {
    let n = p.coeffs().len().max(q.coeffs().len());
    let at = |x: &Polynomial, i: usize| x.coeffs().get(i).copied().unwrap_or(0.0);
    Polynomial::new((0..n).map(|i| at(p, i) - at(q, i)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct H3Fit {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub at: f64,
    pub verdict: Verdict,
}

/// `c1 = |J|/2 + 1` and the smallest matching `c2`. When `F`
/// grows too slowly for that `c1`, falls back to the largest admissible
/// quadratic rate.
pub fn fit_h3(potential: &Potential, norm_j_l1: f64, range: (f64, f64)) -> H3Fit {
    let f = potential.polynomial();
    let half = 0.5 * norm_j_l1;
    let preferred = half + 1.0;
    let try_c1 = |c1: f64| sup_over(&sub(&monomial(c1, 2), f), range).map(|e| (c1, e));
    let fitted = try_c1(preferred).or_else(|| {
        if f.degree() == 2 {
            let lead = f.leading();
            try_c1(lead).or_else(|| try_c1(lead * (1.0 - LEADING_MARGIN)))
        } else {
            None
        }
    });
    match fitted {
        Some((c1, e)) => {
            let c2 = e.value.max(0.0);
            let alpha = 2.0 * c1 - norm_j_l1;
            H3Fit {
                c1,
                c2,
                alpha,
                at: e.at,
                verdict: Verdict::from_bool(alpha > 0.0, || {
                    format!("c1 = {c1} does not exceed |J|_1 / 2 = {half}")
                }),
            }
        }
        None => H3Fit {
            c1: f64::NAN,
            c2: f64::NAN,
            alpha: f64::NAN,
            at: 0.0,
            verdict: Verdict::Fail("F has no quadratic lower bound".into()),
        },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct H4Fit {
    pub p: f64,
    pub c3: f64,
    pub c4: f64,
    pub at: f64,
    pub verdict: Verdict,
}

fn h4_gap(potential: &Potential, p: f64, c3: f64, s: f64) -> f64 {
    potential.df(s).abs().powf(p) - c3 * potential.f(s).abs()
}

/// `p = deg / (deg - 1)` (2 for constants and quadratics) with `c3` a hair
/// above the ratio of leading terms, so that the gap `|F'|^p - c3 |F|`
/// eventually decreases like `-|s|^deg`; `c4` is its maximum.
pub fn verify_h4(potential: &Potential, range: (f64, f64)) -> H4Fit {
    let f = potential.polynomial();
    let d = f.degree();
    if d == 0 {
        return H4Fit {
            p: 2.0,
            c3: 1.0,
            c4: 0.0,
            at: 0.0,
            verdict: Verdict::Pass,
        };
    }
    if d % 2 == 1 {
        return H4Fit {
            p: f64::NAN,
            c3: f64::NAN,
            c4: f64::NAN,
            at: 0.0,
            verdict: Verdict::Fail(format!("odd degree {d}")),
        };
    }
    let df = d as f64;
    let p = (df / (df - 1.0)).min(2.0);
    let lead = f.leading();
    let c3 = (1.0 + H4_MARGIN) * (df * lead).abs().powf(p) / lead;

    // Grow the window until the gap is negative and decreasing at both ends.
    let mut r = range.0.abs().max(range.1.abs()).max(f.root_radius()).max(potential.polynomial().derivative().root_radius()) + 1.0;
    for _ in 0..200 {
        let tail_ok = [-1.0, 1.0].iter().all(|&sgn| {
            let g1 = h4_gap(potential, p, c3, sgn * r);
            let g2 = h4_gap(potential, p, c3, sgn * 2.0 * r);
            g1 < 0.0 && g2 < g1
        });
        if tail_ok {
            break;
        }
        r *= 2.0;
    }
    let e = maximize(|s| h4_gap(potential, p, c3, s), -r, r);
    let c4 = e.value.max(0.0);
    H4Fit {
        p,
        c3,
        c4,
        at: e.at,
        verdict: Verdict::from_bool(c3 > 0.0 && c4.is_finite(), || "no finite envelope".into()),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct H6Fit {
    pub q: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub at_h6: f64,
    pub at_coercivity: f64,
}

/// Fits `F'' + a* >= c5 |s|^{2q} - c6` and the resulting
/// `F >= c7 |s|^{2+2q} - c8`. `None` below degree four.
///
/// Integrating the first bound twice only gives the growth rate
/// `c5 / ((2q+1)(2q+2))` up to a quadratic remainder, so `c7` takes half of
/// it to leave room for that remainder and keep `c8` finite.
pub fn verify_h6(potential: &Potential, a_star: f64, range: (f64, f64)) -> Option<H6Fit> {
    let f = potential.polynomial();
    let d = f.degree();
    if d < 4 || d % 2 == 1 || f.leading() <= 0.0 {
        return None;
    }
    let two_q = d - 2;
    let q = two_q as f64 / 2.0;
    let ddf = potential.polynomial().derivative().derivative().add_constant(a_star);
    let lead2 = ddf.leading();
    let remainder = |c5: f64| sub(&monomial(c5, two_q), &ddf);
    let (c5, e6) = match sup_over(&remainder(lead2), range) {
        Some(e) => (lead2, e),
        None => {
            let c5 = lead2 * (1.0 - LEADING_MARGIN);
            (c5, sup_over(&remainder(c5), range)?)
        }
    };
    let c6 = e6.value.max(POSITIVE_FLOOR);
    let c7 = c5 / (2.0 * (2.0 * q + 1.0) * (2.0 * q + 2.0));
    let e8 = sup_over(&sub(&monomial(c7, d), f), range)?;
    let c8 = e8.value.max(POSITIVE_FLOOR);
    Some(H6Fit {
        q,
        c5,
        c6,
        c7,
        c8,
        at_h6: e6.at,
        at_coercivity: e8.at,
    })
}

/// Exact Poincare-Wirtinger constant of the torus, `l / (2 pi)`.
pub fn poincare_constant(grid: &Grid) -> f64 {
    grid.l() / (2.0 * PI)
}

/// The convex-domain bound `diam / pi`, for comparison.
pub fn poincare_convex_bound(grid: &Grid) -> f64 {
    std::f64::consts::SQRT_2 * grid.l() / PI
}

/// `beta = (c0 - 2 C_P |grad J|_1)^2` and whether `C_P < c0 / (2 |grad J|_1)`.
pub fn compute_beta(c0: f64, norm_grad_j_l1: f64, c_p: f64) -> (f64, bool) {
    let beta = (c0 - 2.0 * c_p * norm_grad_j_l1).powi(2);
    let condition = c0 > 0.0 && 2.0 * c_p * norm_grad_j_l1 < c0;
    (beta, condition)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub h1: Verdict,
    pub h2: Verdict,
    pub h3: Verdict,
    pub h4: Verdict,
    pub h5: Verdict,
    pub h6: Verdict,
    pub a: f64,
    pub a_star: f64,
    pub norm_j_l1: f64,
    pub norm_grad_j_l1: f64,
    pub max_asymmetry: f64,
    pub m0: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub p: f64,
    pub c3: f64,
    pub c4: f64,
    pub h6_constants: Option<H6Fit>,
    pub c_p: f64,
    pub c_p_convex: f64,
    pub beta: f64,
    pub gradient_condition: bool,
    pub range: (f64, f64),
    pub witnesses: Vec<Witness>,
}

impl HypothesisReport {
    /// `(H1)`-`(H3)`: what the existence theory needs.
    pub fn existence_ok(&self) -> bool {
        self.h1.passed() && self.h2.passed() && self.h3.passed()
    }

    /// `(H1)`-`(H4)`, plus `(H6)` when asked for.
    pub fn check_ok(&self, with_h6: bool) -> bool {
        self.existence_ok() && self.h4.passed() && (!with_h6 || self.h6.passed())
    }

    /// Slack of `which` at `s`, recomputed from the stored constants.
    pub fn margin_at(&self, which: Inequality, potential: &Potential, s: f64) -> f64 {
        match which {
            Inequality::H2 => potential.ddf(s) + self.a_star - self.c0,
            Inequality::H3 => potential.f(s) - self.c1 * s * s + self.c2,
            Inequality::H4 => self.c3 * potential.f(s).abs() + self.c4 - potential.df(s).abs().powf(self.p),
            Inequality::H6 => match &self.h6_constants {
                Some(h) => potential.ddf(s) + self.a_star - h.c5 * s.abs().powf(2.0 * h.q) + h.c6,
                None => f64::NAN,
            },
            Inequality::Coercivity => match &self.h6_constants {
                Some(h) => potential.f(s) - h.c7 * s.abs().powf(2.0 + 2.0 * h.q) + h.c8,
                None => f64::NAN,
            },
        }
    }

    pub fn witness(&self, which: Inequality) -> Option<&Witness> {
        self.witnesses.iter().find(|w| w.inequality == which)
    }

    /// Flat `key = value` text, one entry per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("h1", self.h1.to_string());
        kv("h2", self.h2.to_string());
        kv("h3", self.h3.to_string());
        kv("h4", self.h4.to_string());
        kv("h5", self.h5.to_string());
        kv("h6", self.h6.to_string());
        kv("range", format!("{},{}", self.range.0, self.range.1));
        kv("a", self.a.to_string());
        kv("a_star", self.a_star.to_string());
        kv("norm_j_l1", self.norm_j_l1.to_string());
        kv("norm_grad_j_l1", self.norm_grad_j_l1.to_string());
        kv("max_asymmetry", self.max_asymmetry.to_string());
        kv("m0", self.m0.to_string());
        kv("c0", self.c0.to_string());
        kv("c1", self.c1.to_string());
        kv("c2", self.c2.to_string());
        kv("alpha", self.alpha.to_string());
        kv("p", self.p.to_string());
        kv("c3", self.c3.to_string());
        kv("c4", self.c4.to_string());
        if let Some(h) = &self.h6_constants {
            kv("q", h.q.to_string());
            kv("c5", h.c5.to_string());
            kv("c6", h.c6.to_string());
            kv("c7", h.c7.to_string());
            kv("c8", h.c8.to_string());
        }
        kv("c_p", self.c_p.to_string());
        kv("c_p_convex_bound", self.c_p_convex.to_string());
        kv("beta", self.beta.to_string());
        kv("gradient_condition", self.gradient_condition.to_string());
        for w in &self.witnesses {
            kv(
                &format!("witness.{:?}", w.inequality).to_lowercase(),
                format!("{},{}", w.at, w.margin),
            );
        }
        s
    }
}

/// Runs every check and assembles the report.
pub fn audit(
    kernel: &KernelOnGrid,
    potential: &Potential,
    forcing: &ForcingSpec,
    range: (f64, f64),
) -> HypothesisReport {
    let norms = kernel.norms();
    let h1 = check_h1(kernel);
    let c0 = estimate_c0(potential, norms.a_star, range);
    let h3 = fit_h3(potential, norms.norm_l1, range);
    let h4 = verify_h4(potential, range);
    let h5 = match forcing.validate() {
        Ok(()) => Verdict::Pass,
        Err(e) => Verdict::Fail(e.to_string()),
    };
    let h6 = verify_h6(potential, norms.a_star, range);
    let c_p = poincare_constant(kernel.grid());
    let (beta, gradient_condition) = compute_beta(c0.c0, norms.grad_norm_l1, c_p);

    let mut report = HypothesisReport {
        h1: h1.verdict,
        h2: c0.verdict,
        h3: h3.verdict,
        h4: h4.verdict,
        h5,
        h6: if h6.is_some() {
            Verdict::Pass
        } else {
            Verdict::NotApplicable(format!("degree {} < 4", potential.degree()))
        },
        a: norms.a,
        a_star: norms.a_star,
        norm_j_l1: norms.norm_l1,
        norm_grad_j_l1: norms.grad_norm_l1,
        max_asymmetry: h1.max_asymmetry,
        m0: c0.m0,
        c0: c0.c0,
        c1: h3.c1,
        c2: h3.c2,
        alpha: h3.alpha,
        p: h4.p,
        c3: h4.c3,
        c4: h4.c4,
        h6_constants: h6,
        c_p,
        c_p_convex: poincare_convex_bound(kernel.grid()),
        beta,
        gradient_condition,
        range,
        witnesses: Vec::new(),
    };
    let mut points = vec![(Inequality::H2, c0.at), (Inequality::H3, h3.at), (Inequality::H4, h4.at)];
    if let Some(h) = &report.h6_constants {
        points.push((Inequality::H6, h.at_h6));
        points.push((Inequality::Coercivity, h.at_coercivity));
    }
    report.witnesses = points
        .into_iter()
        .map(|(inequality, at)| Witness {
            inequality,
            at,
            margin: report.margin_at(inequality, potential, at),
        })
        .collect();
    report
}
