//! Flat `section.key = value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! grid.n = 64
//! grid.l = 6.283185307179586
//! kernel = gaussian
//! kernel.sigma = 0.3
//! kernel.strength = 6
//! potential = double_well
//! nu = 0.01
//! dt = 1e-3
//! t_end = 1
//! ```
//!
//! Parsing reports every problem it finds, not just the first.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SymbolEntry};
use crate::potential::{PotentialSpec, DEFAULT_RANGE};
use crate::solver::{ForceForm, ForcingSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum StabilizerMode {
    /// Half the largest `|F''|` over the validated range.
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialPhi {
    Uniform { value: f64 },
    /// Mode-keyed random field with rms `amplitude` around `mean`, keeping
    /// modes with `|m_x|, |m_y| <= cutoff` (default `n/4`).
    Random {
        amplitude: f64,
        mean: f64,
        seed: u64,
        cutoff: Option<usize>,
    },
    /// `tanh((l/4 - |x - l/2|) / width)`: a band of one phase in the other.
    TanhStrip { width: f64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialVelocity {
    Zero,
    TaylorGreen { amplitude: f64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub record_every: usize,
    /// 0 disables snapshots.
    pub snapshot_every: usize,
    pub out_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checks {
    pub enforce_hypotheses: bool,
    pub grad_control: bool,
    pub dissipative: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub l: f64,
    pub kernel: KernelSpec,
    pub potential: PotentialSpec,
    /// Working range for hypothesis checks and the stabilizer bound.
    pub range: (f64, f64),
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    pub stabilizer: StabilizerMode,
    pub dealias: bool,
    pub force_form: ForceForm,
    pub forcing: ForcingSpec,
    pub initial: InitialPhi,
    pub u0: InitialVelocity,
    pub outputs: Outputs,
    pub checks: Checks,
}

const KNOWN_KEYS: &[&str] = &[
    "grid.n",
    "grid.l",
    "kernel",
    "kernel.sigma",
    "kernel.radius",
    "kernel.strength",
    "kernel.symbol",
    "potential",
    "potential.a4",
    "potential.a2",
    "potential.a0",
    "potential.coeffs",
    "potential.range",
    "nu",
    "dt",
    "t_end",
    "stabilizer",
    "dealias",
    "force_form",
    "forcing",
    "forcing.ax",
    "forcing.ay",
    "forcing.mx",
    "forcing.my",
    "forcing.amplitude",
    "forcing.decay",
    "initial",
    "initial.value",
    "initial.amplitude",
    "initial.mean",
    "initial.seed",
    "initial.cutoff",
    "initial.width",
    "initial.path",
    "initial.u0",
    "initial.u0_amplitude",
    "initial.u0_path",
    "output.record_every",
    "output.snapshot_every",
    "output.dir",
    "checks.enforce_hypotheses",
    "checks.grad_control",
    "checks.dissipative",
];

struct Reader {
    map: BTreeMap<String, (usize, String)>,
    errors: Vec<String>,
}

impl Reader {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        let (line, v) = self.map.get(key)?.clone();
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("line {line}: {key} = {v:?} is not a valid value"));
                None
            }
        }
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str) -> Option<T> {
        if self.map.contains_key(key) {
            self.parse(key)
        } else {
            self.errors.push(format!("missing required key {key}"));
            None
        }
    }

    fn or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> T {
        self.parse(key).unwrap_or(default)
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let (line, v) = self.map.get(key)?.clone();
        let parsed: std::result::Result<Vec<f64>, _> = v.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(x) => Some(x),
            Err(_) => {
                self.errors.push(format!("line {line}: {key} = {v:?} is not a comma-separated list of numbers"));
                None
            }
        }
    }

    fn positive(&mut self, key: &str, v: Option<f64>) -> Option<f64> {
        match v {
            Some(x) if x > 0.0 && x.is_finite() => Some(x),
            Some(x) => {
                self.errors.push(format!("{key} must be positive (got {x})"));
                None
            }
            None => None,
        }
    }
}

fn tokenize(text: &str) -> (BTreeMap<String, (usize, String)>, Vec<String>) {
    let mut map = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {line_no}: expected `key = value`, got {line:?}"));
            continue;
        };
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if !KNOWN_KEYS.contains(&k.as_str()) {
            errors.push(format!("line {line_no}: unknown key {k}"));
            continue;
        }
        if map.insert(k.clone(), (line_no, v)).is_some() {
            errors.push(format!("line {line_no}: duplicate key {k}"));
        }
    }
    (map, errors)
}

fn parse_symbol(text: &str) -> Option<Vec<SymbolEntry>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|e| {
            let mut it = e.split(':').map(str::trim);
            let mx = it.next()?.parse().ok()?;
            let my = it.next()?.parse().ok()?;
            let value = it.next()?.parse().ok()?;
            it.next().is_none().then_some(SymbolEntry { mx, my, value })
        })
        .collect()
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let (map, errors) = tokenize(text);
    let mut r = Reader { map, errors };

    let n: Option<usize> = r.required("grid.n");
    if let Some(n) = n {
        if n < 8 || !n.is_power_of_two() {
            r.errors.push(format!("grid.n must be a power of two >= 8 (got {n})"));
        }
    }
    let l = r.required::<f64>("grid.l");
    let l = r.positive("grid.l", l);

    let kernel = match r.raw("kernel").map(str::to_string) {
        None => {
            r.errors.push("missing required key kernel".into());
            None
        }
        Some(fam) => match fam.as_str() {
            "gaussian" => {
                let sigma = r.required("kernel.sigma");
                let sigma = r.positive("kernel.sigma", sigma);
                let strength = r.or("kernel.strength", 1.0);
                sigma.map(|sigma| KernelSpec::Gaussian { sigma, strength })
            }
            "mollifier" => {
                let radius = r.required("kernel.radius");
                let radius = r.positive("kernel.radius", radius);
                let strength = r.or("kernel.strength", 1.0);
                radius.map(|radius| KernelSpec::Mollifier { radius, strength })
            }
            "spectral" => match r.raw("kernel.symbol").map(parse_symbol) {
                Some(Some(symbol)) => Some(KernelSpec::Spectral { symbol }),
                Some(None) => {
                    r.errors.push("kernel.symbol must be `mx:my:value;...`".into());
                    None
                }
                None => {
                    r.errors.push("missing required key kernel.symbol".into());
                    None
                }
            },
            other => {
                r.errors.push(format!("unknown kernel family {other:?}"));
                None
            }
        },
    };
    if let Some(KernelSpec::Gaussian { strength, .. } | KernelSpec::Mollifier { strength, .. }) = &kernel {
        if !(*strength >= 0.0) {
            r.errors.push(format!("kernel.strength must be nonnegative (got {strength})"));
        }
    }

    let potential = match r.raw("potential").map(str::to_string) {
        None => {
            r.errors.push("missing required key potential".into());
            None
        }
        Some(fam) => match fam.as_str() {
            "double_well" => Some(PotentialSpec::DoubleWell),
            "quartic" => {
                let a4 = r.required("potential.a4");
                let a2 = r.or("potential.a2", 0.0);
                let a0 = r.or("potential.a0", 0.0);
                a4.map(|a4| PotentialSpec::Quartic { a4, a2, a0 })
            }
            "polynomial" => match r.f64_list("potential.coeffs") {
                Some(coeffs) => Some(PotentialSpec::Polynomial { coeffs }),
                None => {
                    if r.raw("potential.coeffs").is_none() {
                        r.errors.push("missing required key potential.coeffs".into());
                    }
                    None
                }
            },
            other => {
                r.errors.push(format!("unknown potential family {other:?}"));
                None
            }
        },
    };
    if let Some(p) = &potential {
        if let Err(e) = crate::potential::Potential::new(p) {
            r.errors.push(e.to_string());
        }
    }
    let range = match r.f64_list("potential.range") {
        Some(v) if v.len() == 2 && v[0] < v[1] => (v[0], v[1]),
        Some(_) => {
            r.errors.push("potential.range must be `lo, hi` with lo < hi".into());
            DEFAULT_RANGE
        }
        None => DEFAULT_RANGE,
    };

    let nu = r.required::<f64>("nu");
    if let Some(nu) = nu {
        if !(nu > 0.0 && nu.is_finite()) {
            r.errors.push(format!("nu must be positive (got {nu})"));
        }
    }
    let dt = r.required::<f64>("dt");
    if let Some(dt) = dt {
        if !(dt > 0.0 && dt.is_finite()) {
            r.errors.push(format!("dt must be positive (got {dt})"));
        }
    }
    let t_end = r.required::<f64>("t_end");
    if let (Some(dt), Some(t)) = (dt, t_end) {
        if dt > 0.0 && !(t >= dt) {
            r.errors.push(format!("t_end = {t} must be at least dt = {dt}"));
        }
    }

    let stabilizer = match r.raw("stabilizer").map(str::to_string) {
        None => StabilizerMode::Auto,
        Some(v) if v == "auto" => StabilizerMode::Auto,
        Some(v) => match v.parse::<f64>() {
            Ok(s) if s >= 0.0 => StabilizerMode::Value(s),
            _ => {
                r.errors.push(format!("stabilizer must be `auto` or a nonnegative number (got {v:?})"));
                StabilizerMode::Auto
            }
        },
    };
    let dealias = r.or("dealias", true);
    let force_form = match r.raw("force_form") {
        None | Some("phi_grad_mu") => ForceForm::PhiGradMu,
        Some("mu_grad_phi") => ForceForm::MuGradPhi,
        Some(v) => {
            let v = v.to_string();
            r.errors.push(format!("force_form must be phi_grad_mu or mu_grad_phi (got {v:?})"));
            ForceForm::PhiGradMu
        }
    };

    let forcing = match r.raw("forcing").map(str::to_string).as_deref() {
        None | Some("zero") => ForcingSpec::Zero,
        Some("body") => ForcingSpec::Body {
            ax: r.or("forcing.ax", 0.0),
            ay: r.or("forcing.ay", 0.0),
            decay: r.or("forcing.decay", 0.0),
        },
        Some("single_mode") => ForcingSpec::SingleMode {
            mx: r.or("forcing.mx", 1),
            my: r.or("forcing.my", 0),
            amplitude: r.or("forcing.amplitude", 0.0),
            decay: r.or("forcing.decay", 0.0),
        },
        Some(other) => {
            r.errors.push(format!("unknown forcing family {other:?}"));
            ForcingSpec::Zero
        }
    };
    if let Err(e) = forcing.validate() {
        r.errors.push(e.to_string());
    }

    let initial = match r.raw("initial").map(str::to_string).as_deref() {
        None | Some("uniform") => InitialPhi::Uniform {
            value: r.or("initial.value", 0.0),
        },
        Some("random") => {
            let amplitude = r.or("initial.amplitude", 1e-3);
            if !(amplitude >= 0.0) {
                r.errors.push(format!("initial.amplitude must be nonnegative (got {amplitude})"));
            }
            InitialPhi::Random {
                amplitude,
                mean: r.or("initial.mean", 0.0),
                seed: r.or("initial.seed", 0),
                cutoff: r.parse("initial.cutoff"),
            }
        }
        Some("tanh_strip") => {
            let w = r.or("initial.width", 0.1);
            if !(w > 0.0) {
                r.errors.push(format!("initial.width must be positive (got {w})"));
            }
            InitialPhi::TanhStrip { width: w }
        }
        Some("file") => match r.raw("initial.path") {
            Some(p) => InitialPhi::File { path: PathBuf::from(p) },
            None => {
                r.errors.push("initial = file needs initial.path".into());
                InitialPhi::Uniform { value: 0.0 }
            }
        },
        Some(other) => {
            r.errors.push(format!("unknown initial family {other:?}"));
            InitialPhi::Uniform { value: 0.0 }
        }
    };
    let u0 = match r.raw("initial.u0").map(str::to_string).as_deref() {
        None | Some("zero") => InitialVelocity::Zero,
        Some("taylor_green") => InitialVelocity::TaylorGreen {
            amplitude: r.or("initial.u0_amplitude", 1.0),
        },
        Some("file") => match r.raw("initial.u0_path") {
            Some(p) => InitialVelocity::File { path: PathBuf::from(p) },
            None => {
                r.errors.push("initial.u0 = file needs initial.u0_path".into());
                InitialVelocity::Zero
            }
        },
        Some(other) => {
            r.errors.push(format!("unknown initial.u0 family {other:?}"));
            InitialVelocity::Zero
        }
    };

    let outputs = Outputs {
        record_every: r.or("output.record_every", 1),
        snapshot_every: r.or("output.snapshot_every", 0),
        out_dir: PathBuf::from(r.raw("output.dir").unwrap_or("out")),
    };
    if outputs.record_every == 0 {
        r.errors.push("output.record_every must be at least 1".into());
    }
    let checks = Checks {
        enforce_hypotheses: r.or("checks.enforce_hypotheses", true),
        grad_control: r.or("checks.grad_control", false),
        dissipative: r.or("checks.dissipative", false),
    };

    if !r.errors.is_empty() {
        return Err(Error::ConfigList(r.errors));
    }
    Ok(SimConfig {
        n: n.expect("validated"),
        l: l.expect("validated"),
        kernel: kernel.expect("validated"),
        potential: potential.expect("validated"),
        range,
        nu: nu.expect("validated"),
        dt: dt.expect("validated"),
        t_end: t_end.expect("validated"),
        stabilizer,
        dealias,
        force_form,
        forcing,
        initial,
        u0,
        outputs,
        checks,
    })
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}
