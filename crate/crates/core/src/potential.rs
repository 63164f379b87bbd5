//! Smooth polynomial potentials and their convex decomposition
//! `F(s) = G(s) - (a*/2) s^2`.

use crate::error::{Error, Result};
use crate::spectral::ScalarField;

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    /// `F(s) = (1 - s^2)^2`.
    DoubleWell,
    /// `F(s) = a4 s^4 + a2 s^2 + a0`.
    Quartic { a4: f64, a2: f64, a0: f64 },
    /// Coefficients in ascending order, `F(s) = sum c_i s^i`.
    Polynomial { coeffs: Vec<f64> },
}

/// Dense polynomial with ascending coefficients and no trailing zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Degree; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }

    /// Coefficients of `s -> p(s + m)`.
    pub fn shifted(&self, m: f64) -> Self {
        // repeated synthetic division (Taylor shift)
        let mut c = self.coeffs.clone();
        let d = c.len();
        for i in 0..d {
            for j in (i..d.saturating_sub(1)).rev() {
                c[j] += m * c[j + 1];
            }
        }
        Self::new(c)
    }

    pub fn add_constant(&self, v: f64) -> Self {
        let mut c = self.coeffs.clone();
        if c.is_empty() {
            c.push(0.0);
        }
        c[0] += v;
        Self::new(c)
    }

    /// Cauchy bound: every real root lies in `|s| <= radius`.
    pub fn root_radius(&self) -> f64 {
        let lead = self.leading();
        if self.degree() == 0 || lead == 0.0 {
            return 0.0;
        }
        1.0 + self.coeffs[..self.degree()]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max)
    }

    /// Supremum over all of the real line, or `None` when unbounded above.
    pub fn sup(&self) -> Option<Extremum> {
        let d = self.degree();
        if d == 0 {
            return Some(Extremum {
                at: 0.0,
                value: self.eval(0.0),
            });
        }
        if d % 2 == 1 || self.leading() > 0.0 {
            return None;
        }
        // every critical point lies within the root bound of p'
        let r = self.derivative().root_radius() + 1.0;
        Some(maximize(|s| self.eval(s), -r, r))
    }
}

/// Location and value of a sampled-and-refined extremum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extremum {
    pub at: f64,
    pub value: f64,
}

const SAMPLES: usize = 4001;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimum of `f` on `[lo, hi]` by dense sampling, then golden-section
/// refinement inside the bracket of the best sample.
pub fn minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Extremum {
    if hi <= lo {
        return Extremum { at: lo, value: f(lo) };
    }
    let step = (hi - lo) / (SAMPLES - 1) as f64;
    let (mut best_i, mut best) = (0, f(lo));
    for i in 1..SAMPLES {
        let v = f(lo + i as f64 * step);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut at = lo + best_i as f64 * step;
    if best_i == SAMPLES - 1 {
        at = hi;
    }
    let mut a = (lo + (best_i as f64 - 1.0) * step).max(lo);
    let mut b = (lo + (best_i as f64 + 1.0) * step).min(hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    for cand in [c, d, 0.5 * (a + b)] {
        let v = f(cand);
        if v < best {
            best = v;
            at = cand;
        }
    }
    Extremum { at, value: best }
}

pub fn maximize(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Extremum {
    let e = minimize(|s| -f(s), lo, hi);
    Extremum {
        at: e.at,
        value: -e.value,
    }
}

/// Validated potential with cached derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    spec: PotentialSpec,
    f: Polynomial,
    df: Polynomial,
    ddf: Polynomial,
}

impl Potential {
    pub fn new(spec: &PotentialSpec) -> Result<Self> {
        let coeffs = match spec {
            PotentialSpec::DoubleWell => vec![1.0, 0.0, -2.0, 0.0, 1.0],
            PotentialSpec::Quartic { a4, a2, a0 } => {
                if !(*a4 > 0.0) {
                    return Err(Error::Config(format!("quartic a4 = {a4} must be positive")));
                }
                vec![*a0, 0.0, *a2, 0.0, *a4]
            }
            PotentialSpec::Polynomial { coeffs } => coeffs.clone(),
        };
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("potential coefficients must be finite".into()));
        }
        let f = Polynomial::new(coeffs);
        if f.degree() % 2 == 1 {
            return Err(Error::Config(format!(
                "potential degree {} must be even",
                f.degree()
            )));
        }
        if f.degree() > 0 && f.leading() <= 0.0 {
            return Err(Error::Config("potential leading coefficient must be positive".into()));
        }
        Ok(Self::from_polynomial(spec.clone(), f))
    }

    fn from_polynomial(spec: PotentialSpec, f: Polynomial) -> Self {
        let df = f.derivative();
        let ddf = df.derivative();
        Self { spec, f, df, ddf }
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.f
    }

    pub fn degree(&self) -> usize {
        self.f.degree()
    }

    pub fn f(&self, s: f64) -> f64 {
        self.f.eval(s)
    }

    pub fn df(&self, s: f64) -> f64 {
        self.df.eval(s)
    }

    pub fn ddf(&self, s: f64) -> f64 {
        self.ddf.eval(s)
    }

    pub fn f_field(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.f(s))
    }

    pub fn df_field(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.df(s))
    }

    pub fn ddf_field(&self, phi: &ScalarField) -> ScalarField {
        phi.map(|s| self.ddf(s))
    }

    /// `s -> F(s + m) - F(m)`, the potential seen by `phi - m`.
    pub fn shifted(&self, m: f64) -> Self {
        let f = self.f.shifted(m).add_constant(-self.f(m));
        Self::from_polynomial(
            PotentialSpec::Polynomial {
                coeffs: f.coeffs().to_vec(),
            },
            f,
        )
    }

    /// Radius beyond which `F''` has no critical points, so that the global
    /// minimum of `F'' + const` lies inside it.
    pub fn curvature_radius(&self) -> f64 {
        self.ddf.derivative().root_radius()
    }

    /// Global minimum of `F''` over the union of `range` and every critical
    /// point of `F''`.
    pub fn min_curvature(&self, range: (f64, f64)) -> Extremum {
        let r = self.curvature_radius();
        minimize(|s| self.ddf(s), range.0.min(-r), range.1.max(r))
    }
}

/// Working interval on which hypotheses and stabilizer bounds are evaluated.
pub const DEFAULT_RANGE: (f64, f64) = (-2.0, 2.0);

/// `F = G - (a*/2) s^2` with `G'' >= c0 > 0`.
#[derive(Clone, Debug)]
pub struct SplitPotential {
    pub base: Potential,
    pub a_star: f64,
    /// `min (F'' + a*)` over the working range.
    pub c0: f64,
    /// Where that minimum is attained.
    pub c0_at: f64,
    /// `G'(0) = F'(0)`, subtracted so that `g(0) = 0`.
    pub g0: f64,
}

impl SplitPotential {
    /// Convex part `G(s) = F(s) + (a*/2) s^2`.
    pub fn convex_part(&self, s: f64) -> f64 {
        self.base.f(s) + 0.5 * self.a_star * s * s
    }

    /// `g(s) = G'(s) - G'(0)`.
    pub fn g(&self, s: f64) -> f64 {
        self.base.df(s) + self.a_star * s - self.g0
    }

    pub fn convex_curvature(&self, s: f64) -> f64 {
        self.base.ddf(s) + self.a_star
    }
}

/// Splits `F` into a convex part and a concave quadratic; fails with the
/// violating point when `F'' + a*` is not strictly positive on the range.
pub fn convex_split(potential: &Potential, a_star: f64, range: (f64, f64)) -> Result<SplitPotential> {
    let e = minimize(|s| potential.ddf(s) + a_star, range.0, range.1);
    if !(e.value > 0.0) {
        return Err(Error::Hypothesis {
            hypothesis: "H2",
            at: e.at,
            detail: format!("F'' + a* = {} is not positive", e.value),
        });
    }
    Ok(SplitPotential {
        base: potential.clone(),
        a_star,
        c0: e.value,
        c0_at: e.at,
        g0: potential.df(0.0),
    })
}

/// `S_min = max |F''| / 2` over the range.
pub fn stabilizer_bound(potential: &Potential, range: (f64, f64)) -> f64 {
    0.5 * maximize(|s| potential.ddf(s).abs(), range.0, range.1).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn double_well() -> Potential {
        Potential::new(&PotentialSpec::DoubleWell).unwrap()
    }

    #[test]
    fn double_well_values() {
        let p = double_well();
        for s in [-1.0, 1.0] {
            assert_eq!(p.f(s), 0.0);
            assert_eq!(p.df(s), 0.0);
        }
        assert_eq!(p.ddf(0.0), -4.0);
        assert_eq!(p.df(0.0), 0.0);
        assert_eq!(p.f(0.0), 1.0);
        let m0 = -p.min_curvature(DEFAULT_RANGE).value;
        assert!((m0 - 4.0).abs() < 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Potential::new(&PotentialSpec::Polynomial {
            coeffs: vec![0.3, -1.0, 0.5, 0.2, -0.7, 0.0, 1.1],
        })
        .unwrap();
        let h = 1e-4;
        for k in 0..40 {
            let s = -2.0 + 0.1 * k as f64;
            let fd = (p.f(s + h) - p.f(s - h)) / (2.0 * h);
            let fdd = (p.df(s + h) - p.df(s - h)) / (2.0 * h);
            // O(h^2) truncation with sixth-degree growth
            assert!((fd - p.df(s)).abs() < 1e-5 * (1.0 + p.df(s).abs()), "{s}");
            assert!((fdd - p.ddf(s)).abs() < 1e-5 * (1.0 + p.ddf(s).abs()), "{s}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(Potential::new(&PotentialSpec::Quartic { a4: 0.0, a2: 1.0, a0: 0.0 }).is_err());
        assert!(Potential::new(&PotentialSpec::Polynomial { coeffs: vec![0.0, 0.0, 0.0, 1.0] }).is_err());
        assert!(Potential::new(&PotentialSpec::Polynomial { coeffs: vec![0.0, 0.0, -1.0] }).is_err());
        assert!(Potential::new(&PotentialSpec::Polynomial { coeffs: vec![f64::NAN] }).is_err());
        assert!(Potential::new(&PotentialSpec::Polynomial { coeffs: vec![2.0] }).is_ok());
    }

    #[test]
    fn convex_split_thresholds() {
        let p = double_well();
        let err = convex_split(&p, 4.0, DEFAULT_RANGE).unwrap_err();
        match err {
            Error::Hypothesis { hypothesis, at, .. } => {
                assert_eq!(hypothesis, "H2");
                assert!(at.abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
        let s = convex_split(&p, 4.5, DEFAULT_RANGE).unwrap();
        assert!((s.c0 - 0.5).abs() < 1e-12);
        let s = convex_split(&p, 6.0, (-2.0, 2.0)).unwrap();
        assert!((s.c0 - 2.0).abs() < 1e-12);
        assert_eq!(s.g(0.0), 0.0);
    }

    #[test]
    fn convex_quartic_needs_no_shift() {
        let p = Potential::new(&PotentialSpec::Quartic { a4: 1.0, a2: 0.5, a0: 0.0 }).unwrap();
        let s = convex_split(&p, 0.0, DEFAULT_RANGE).unwrap();
        for k in 0..21 {
            let x = -2.0 + 0.2 * k as f64;
            assert_eq!(s.convex_part(x), p.f(x));
        }
        assert!((s.c0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stabilizer_bounds() {
        let p = double_well();
        assert!((stabilizer_bound(&p, (-1.5, 1.5)) - 11.5).abs() < 1e-12);
        assert!((stabilizer_bound(&p, (-1.0, 1.0)) - 4.0).abs() < 1e-12);
        let c = Potential::new(&PotentialSpec::Polynomial { coeffs: vec![3.0] }).unwrap();
        assert_eq!(stabilizer_bound(&c, DEFAULT_RANGE), 0.0);
    }

    #[test]
    fn shifted_potential() {
        let p = double_well();
        let m = 0.3;
        let q = p.shifted(m);
        for k in 0..21 {
            let s = -2.0 + 0.2 * k as f64;
            assert!((q.f(s) - (p.f(s + m) - p.f(m))).abs() < 1e-13);
            assert!((q.df(s) - p.df(s + m)).abs() < 1e-13);
        }
        assert_eq!(q.f(0.0), 0.0);
    }

    #[test]
    fn minimize_finds_interior_and_boundary_minima() {
        let e = minimize(|s| (s - 0.3).powi(2) + 1.0, -2.0, 2.0);
        assert!((e.at - 0.3).abs() < 1e-7 && (e.value - 1.0).abs() < 1e-14);
        let e = minimize(|s| s, -1.0, 3.0);
        assert_eq!(e.at, -1.0);
        let e = maximize(|s| s, -1.0, 3.0);
        assert_eq!(e.at, 3.0);
    }

    proptest! {
        #[test]
        fn split_is_consistent(s in -3.0f64..3.0, a_star in 4.1f64..10.0) {
            let p = double_well();
            let split = convex_split(&p, a_star, DEFAULT_RANGE).unwrap();
            let back = split.convex_part(s) - 0.5 * a_star * s * s;
            prop_assert!((p.f(s) - back).abs() <= 1e-12 * (1.0 + p.f(s).abs()));
        }

        #[test]
        fn g_is_strongly_monotone(s in -2.0f64..2.0, t in -2.0f64..2.0, a_star in 4.5f64..9.0) {
            let p = double_well();
            let split = convex_split(&p, a_star, DEFAULT_RANGE).unwrap();
            let lhs = (split.g(s) - split.g(t)) * (s - t);
            prop_assert!(lhs >= split.c0 * (s - t).powi(2) - 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
