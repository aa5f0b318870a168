//! Meromorphic potentials `u(x)` on the real line.
//!
//! Potentials are built from a JSON-compatible [`PotentialSpec`] descriptor:
//!
//! ```json
//! {"family": "csc_squared", "m": 1, "a": 1.0}
//! {"family": "rational_poles", "poles": [0.0, [0.5, 0.866]]}
//! {"family": "inverse_square", "n": 1, "background": {"poly": [0.0, 1.0]}}
//! ```
//!
//! Every family accepts an optional smooth `background` (an entire function:
//! trigonometric terms `cos[k] cos(k w x) + sin[k] sin(k w x)` plus a
//! polynomial) and an optional declared `period`.
//!
//! Pole locations are always obtained analytically, from the closed form
//! or from polynomial roots, never by sampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{cluster_roots, Poly};
use crate::series::LaurentSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Relative tolerance for matching a leading coefficient against `n(n+1)`.
pub const INDEX_MATCH_TOL: f64 = 1e-8;

/// Imaginary parts below this (relative) are treated as real poles.
const REAL_POLE_TOL: f64 = 1e-10;

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// Smooth entire background added to a singular family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cos: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sin: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub poly: Vec<f64>,
    /// Base angular frequency of the trigonometric terms.
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub omega: f64,
}

impl Default for Background {
    fn default() -> Self {
        Background {
            cos: Vec::new(),
            sin: Vec::new(),
            poly: Vec::new(),
            omega: 1.0,
        }
    }
}

impl Background {
    fn is_zero(&self) -> bool {
        self.cos.iter().chain(&self.sin).chain(&self.poly).all(|&c| c == 0.0)
    }

    fn eval(&self, z: Complex64) -> Complex64 {
        let mut v = Poly(self.poly.clone()).eval(z);
        for (k, &c) in self.cos.iter().enumerate() {
            if c != 0.0 {
                v += c * (z * (k as f64 * self.omega)).cos();
            }
        }
        for (k, &c) in self.sin.iter().enumerate() {
            if c != 0.0 {
                v += c * (z * (k as f64 * self.omega)).sin();
            }
        }
        v
    }

    /// Taylor coefficients of the background at `x0`, `len` terms.
    fn taylor(&self, x0: f64, len: usize) -> Vec<Complex64> {
        let mut out = vec![ZERO; len];
        if !self.poly.is_empty() {
            for (i, c) in Poly(self.poly.clone())
                .taylor_shift(Complex64::new(x0, 0.0))
                .into_iter()
                .enumerate()
                .take(len)
            {
                out[i] += c;
            }
        }
        let trig = |k: usize| -> (Vec<f64>, Vec<f64>) {
            let w = k as f64 * self.omega;
            (taylor_cos(w, len), taylor_sin(w, len))
        };
        for (k, &c) in self.cos.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let w = k as f64 * self.omega;
            let (tc, ts) = trig(k);
            for i in 0..len {
                out[i] += c * ((w * x0).cos() * tc[i] - (w * x0).sin() * ts[i]);
            }
        }
        for (k, &c) in self.sin.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let w = k as f64 * self.omega;
            let (tc, ts) = trig(k);
            for i in 0..len {
                out[i] += c * ((w * x0).sin() * tc[i] + (w * x0).cos() * ts[i]);
            }
        }
        out
    }

    fn bound(&self) -> f64 {
        self.cos.iter().chain(&self.sin).map(|c| c.abs()).sum()
    }

    /// Whether every trigonometric term is `period`-periodic and the
    /// polynomial part is constant.
    fn has_period(&self, period: f64) -> bool {
        if self.poly.iter().skip(1).any(|&c| c != 0.0) {
            return false;
        }
        let ok = |k: usize| {
            let cycles = k as f64 * self.omega * period / (2.0 * PI);
            (cycles - cycles.round()).abs() < 1e-12 * (1.0 + cycles.abs())
        };
        self.cos.iter().enumerate().all(|(k, &c)| c == 0.0 || ok(k))
            && self.sin.iter().enumerate().all(|(k, &c)| c == 0.0 || k == 0 || ok(k))
    }
}

fn taylor_cos(w: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut term = 1.0;
    for i in 0..len {
        if i > 0 {
            term *= w / i as f64;
        }
        out[i] = match i % 4 {
            0 => term,
            2 => -term,
            _ => 0.0,
        };
    }
    out
}

fn taylor_sin(w: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    let mut term = 1.0;
    for i in 0..len {
        if i > 0 {
            term *= w / i as f64;
        }
        out[i] = match i % 4 {
            1 => term,
            3 => -term,
            _ => 0.0,
        };
    }
    out
}

/// A pole given either as a real number or as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PoleSpec {
    Real(f64),
    Complex([f64; 2]),
}

impl PoleSpec {
    pub fn value(&self) -> Complex64 {
        match *self {
            PoleSpec::Real(x) => Complex64::new(x, 0.0),
            PoleSpec::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

/// JSON potential descriptor; the CLI input contract.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Free {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<Background>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    /// `n(n+1)/(x - center)^2`
    InverseSquare {
        n: u32,
        #[serde(default)]
        center: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<Background>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    /// `m(m+1) a^2 / sin^2(a x)`, period `pi / a`.
    CscSquared {
        m: u32,
        #[serde(default = "one")]
        a: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<Background>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    /// `sum_j w_j (x - x_j)^-2`, weights default to 2.
    RationalPoles {
        poles: Vec<PoleSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<Background>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
    /// `-2 (log theta_k)''` with Adler-Moser polynomial `theta_k`;
    /// `tau = [tau_2, ..., tau_k]`, missing entries are zero.
    AdlerMoser {
        k: u32,
        #[serde(default)]
        tau: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        background: Option<Background>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<f64>,
    },
}

impl PotentialSpec {
    pub fn free() -> Self {
        PotentialSpec::Free {
            background: None,
            period: None,
        }
    }

    pub fn inverse_square(n: u32) -> Self {
        PotentialSpec::InverseSquare {
            n,
            center: 0.0,
            background: None,
            period: None,
        }
    }

    pub fn csc_squared(m: u32, a: f64) -> Self {
        PotentialSpec::CscSquared {
            m,
            a,
            background: None,
            period: None,
        }
    }

    pub fn rational_poles(poles: &[Complex64]) -> Self {
        PotentialSpec::RationalPoles {
            poles: poles
                .iter()
                .map(|p| {
                    if p.im == 0.0 {
                        PoleSpec::Real(p.re)
                    } else {
                        PoleSpec::Complex([p.re, p.im])
                    }
                })
                .collect(),
            weights: None,
            background: None,
            period: None,
        }
    }

    pub fn adler_moser(k: u32, tau: &[f64]) -> Self {
        PotentialSpec::AdlerMoser {
            k,
            tau: tau.to_vec(),
            background: None,
            period: None,
        }
    }

    fn parts_mut(&mut self) -> (&mut Option<Background>, &mut Option<f64>) {
        match self {
            PotentialSpec::Free { background, period }
            | PotentialSpec::InverseSquare {
                background, period, ..
            }
            | PotentialSpec::CscSquared {
                background, period, ..
            }
            | PotentialSpec::RationalPoles {
                background, period, ..
            }
            | PotentialSpec::AdlerMoser {
                background, period, ..
            } => (background, period),
        }
    }

    pub fn with_background(mut self, bg: Background) -> Self {
        *self.parts_mut().0 = Some(bg);
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        *self.parts_mut().1 = Some(period);
        self
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            PotentialSpec::Free { .. } => "free",
            PotentialSpec::InverseSquare { .. } => "inverse_square",
            PotentialSpec::CscSquared { .. } => "csc_squared",
            PotentialSpec::RationalPoles { .. } => "rational_poles",
            PotentialSpec::AdlerMoser { .. } => "adler_moser",
        }
    }
}

#[derive(Clone, Debug)]
enum Kind {
    Free,
    InverseSquare { n: u32, center: f64 },
    CscSquared { m: u32, a: f64 },
    Rational { poles: Vec<Complex64>, weights: Vec<f64> },
    AdlerMoser {
        theta: Poly,
        roots: Vec<(Complex64, usize)>,
    },
}

/// An immutable meromorphic potential.
#[derive(Clone, Debug)]
pub struct Potential {
    spec: PotentialSpec,
    kind: Kind,
    background: Background,
    period: Option<f64>,
    exclusion: f64,
}

/// Local data of a potential at one of its real poles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityProfile {
    pub location: f64,
    /// `n` with leading coefficient `n(n+1)`, or `-1` if no such match.
    pub index: i32,
    /// Coefficients `c_q` of `y^(2q)` for `0 <= q < n`.
    pub lower_coeffs: Vec<Complex64>,
    /// Everything not covered by the leading term and `lower_coeffs`.
    pub tail: LaurentSeries,
    /// Raw Laurent expansion of the potential.
    pub laurent: LaurentSeries,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl SingularityProfile {
    pub fn is_admissible(&self) -> bool {
        self.index >= 1
    }
}

/// Builds the Adler-Moser polynomial `theta_k` from
/// `theta'_{j+1} theta_{j-1} - theta_{j+1} theta'_{j-1} = (2j+1) theta_j^2`,
/// `theta_0 = 1`, `theta_1 = x`, with `tau[j-2]` the free coefficient of
/// `theta_j`.
pub fn adler_moser_polynomial(k: u32, tau: &[f64]) -> Vec<f64> {
    let mut prev = Poly(vec![1.0]);
    let mut cur = Poly(vec![0.0, 1.0]);
    if k == 0 {
        return prev.0;
    }
    for j in 1..k as usize {
        let rhs = cur.mul(&cur);
        let rhs: Vec<f64> = rhs.0.iter().map(|c| c * (2 * j + 1) as f64).collect();
        let d_prev = prev.degree();
        let d_next = (j + 1) * (j + 2) / 2;
        let a_top = prev.0[d_prev];
        let mut b = vec![0.0; d_next + 1];
        // coefficient of x^(i + d_prev - 1) fixes b_i, top-down
        for i in (0..=d_next).rev() {
            if i == d_prev {
                b[i] = tau.get(j - 1).copied().unwrap_or(0.0);
                continue;
            }
            let e = i + d_prev;
            if e == 0 {
                continue;
            }
            let e = e - 1;
            let mut acc = rhs.get(e).copied().unwrap_or(0.0);
            for (jj, &aj) in prev.0.iter().enumerate().take(d_prev) {
                // b_{i'} x^{i'} * a_jj x^jj contributes (i' - jj) at i' + jj - 1 = e
                let ip = e + 1 - jj;
                if ip > i && ip <= d_next {
                    acc -= (ip as f64 - jj as f64) * aj * b[ip];
                }
            }
            b[i] = acc / ((i as f64 - d_prev as f64) * a_top);
        }
        prev = cur;
        cur = Poly(b);
    }
    cur.0
}

impl Potential {
    pub fn from_spec(spec: &PotentialSpec) -> Result<Self> {
        let invalid = |m: &str| Err(Error::InvalidParameters(m.to_string()));
        let (kind, background, declared) = match spec {
            PotentialSpec::Free { background, period } => (Kind::Free, background, period),
            PotentialSpec::InverseSquare {
                n,
                center,
                background,
                period,
            } => {
                if *n < 1 {
                    return invalid("inverse_square needs n >= 1");
                }
                if !center.is_finite() {
                    return invalid("inverse_square center must be finite");
                }
                (
                    Kind::InverseSquare {
                        n: *n,
                        center: *center,
                    },
                    background,
                    period,
                )
            }
            PotentialSpec::CscSquared {
                m,
                a,
                background,
                period,
            } => {
                if *m < 1 {
                    return invalid("csc_squared needs m >= 1");
                }
                if !(a.is_finite() && *a > 0.0) {
                    return invalid("csc_squared needs a > 0");
                }
                (Kind::CscSquared { m: *m, a: *a }, background, period)
            }
            PotentialSpec::RationalPoles {
                poles,
                weights,
                background,
                period,
            } => {
                let poles: Vec<Complex64> = poles.iter().map(PoleSpec::value).collect();
                if poles.iter().any(|p| !p.is_finite()) {
                    return invalid("rational_poles needs finite poles");
                }
                check_distinct(&poles)?;
                let weights = weights.clone().unwrap_or_else(|| vec![2.0; poles.len()]);
                if weights.len() != poles.len() || weights.iter().any(|w| !w.is_finite()) {
                    return invalid("rational_poles needs one finite weight per pole");
                }
                (Kind::Rational { poles, weights }, background, period)
            }
            PotentialSpec::AdlerMoser {
                k,
                tau,
                background,
                period,
            } => {
                if *k < 1 {
                    return invalid("adler_moser needs k >= 1");
                }
                if tau.len() > (*k as usize).saturating_sub(1) {
                    return invalid("adler_moser takes at most k-1 tau values");
                }
                if tau.iter().any(|t| !t.is_finite()) {
                    return invalid("adler_moser tau must be finite");
                }
                let theta = Poly(adler_moser_polynomial(*k, tau));
                let roots = cluster_roots(&theta.roots(), 1e-5)
                    .into_iter()
                    .map(|(r, mult)| {
                        if r.im.abs() < REAL_POLE_TOL * (1.0 + r.norm()) {
                            (Complex64::new(polish_real_root(&theta, r.re, mult), 0.0), mult)
                        } else {
                            (r, mult)
                        }
                    })
                    .collect();
                (Kind::AdlerMoser { theta, roots }, background, period)
            }
        };
        let background = background.clone().unwrap_or_default();
        if background.omega <= 0.0 || !background.omega.is_finite() {
            return invalid("background omega must be positive");
        }
        let mut pot = Potential {
            spec: spec.clone(),
            kind,
            background,
            period: None,
            exclusion: 1e-9,
        };
        pot.period = match (declared, &pot.kind) {
            (Some(t), _) => {
                if !(t.is_finite() && *t > 0.0) {
                    return invalid("period must be positive");
                }
                pot.check_period(*t)?;
                Some(*t)
            }
            (None, Kind::CscSquared { a, .. }) => {
                let t = PI / a;
                pot.background.has_period(t).then_some(t)
            }
            _ => None,
        };
        Ok(pot)
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    /// Sets the radius around poles inside which evaluation is refused.
    pub fn with_exclusion_radius(mut self, radius: f64) -> Self {
        self.exclusion = radius;
        self
    }

    /// True when `u(conj z) = conj u(z)`.
    pub fn is_real(&self) -> bool {
        match &self.kind {
            Kind::Rational { poles, weights } => poles.iter().zip(weights).all(|(p, w)| {
                p.im == 0.0
                    || poles
                        .iter()
                        .zip(weights)
                        .any(|(q, v)| v == w && (q - p.conj()).norm() < 1e-14 * (1.0 + p.norm()))
            }),
            _ => true,
        }
    }

    /// The reflected potential `u*(z) = conj u(conj z)`.
    pub fn conjugate(&self) -> Potential {
        let mut out = self.clone();
        if let Kind::Rational { poles, weights } = &mut out.kind {
            for p in poles.iter_mut() {
                *p = p.conj();
            }
            out.spec = PotentialSpec::RationalPoles {
                poles: poles
                    .iter()
                    .map(|p| PoleSpec::Complex([p.re, p.im]))
                    .collect(),
                weights: Some(weights.clone()),
                background: Some(self.background.clone()).filter(|b| !b.is_zero()),
                period: self.period,
            };
        }
        out
    }

    fn check_period(&self, t: f64) -> Result<()> {
        let mut worst = 0.0f64;
        for i in 0..17 {
            let z = Complex64::new(-1.3 + 0.37 * i as f64, 0.41 + 0.05 * (i % 3) as f64);
            let (Ok(a), Ok(b)) = (self.eval(z), self.eval(z + t)) else {
                continue;
            };
            worst = worst.max((a - b).norm() / (1.0 + a.norm()));
        }
        if worst > 1e-10 {
            return Err(Error::Aperiodic(format!(
                "u(z + {t}) differs from u(z) by {worst:e}"
            )));
        }
        Ok(())
    }

    /// Distance from `z` to the nearest pole, real or complex.
    pub fn pole_distance(&self, z: Complex64) -> f64 {
        match &self.kind {
            Kind::Free => f64::INFINITY,
            Kind::InverseSquare { center, .. } => (z - center).norm(),
            Kind::CscSquared { a, .. } => {
                let k = (z.re * a / PI).round();
                (z - k * PI / a).norm()
            }
            Kind::Rational { poles, .. } => poles
                .iter()
                .map(|p| (z - p).norm())
                .fold(f64::INFINITY, f64::min),
            Kind::AdlerMoser { roots, .. } => roots
                .iter()
                .map(|(p, _)| (z - p).norm())
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Distance from the real pole `x` to the nearest other singularity.
    pub fn isolation_radius(&self, x: f64) -> f64 {
        let z = Complex64::new(x, 0.0);
        match &self.kind {
            Kind::Free | Kind::InverseSquare { .. } => f64::INFINITY,
            Kind::CscSquared { a, .. } => PI / a,
            Kind::Rational { poles, .. } => poles
                .iter()
                .map(|p| (z - p).norm())
                .filter(|d| *d > 1e-12)
                .fold(f64::INFINITY, f64::min),
            Kind::AdlerMoser { roots, .. } => roots
                .iter()
                .map(|(p, _)| (z - p).norm())
                .filter(|d| *d > 1e-12)
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Upper bound for `|background|` on the real axis, excluding polynomial terms.
    pub fn background_bound(&self) -> f64 {
        self.background.bound() + self.background.poly.first().map_or(0.0, |c| c.abs())
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        if self.pole_distance(z) < self.exclusion {
            return Err(Error::TooCloseToPole {
                re: z.re,
                im: z.im,
                radius: self.exclusion,
            });
        }
        let singular = match &self.kind {
            Kind::Free => ZERO,
            Kind::InverseSquare { n, center } => {
                let y = z - center;
                (n * (n + 1)) as f64 / (y * y)
            }
            Kind::CscSquared { m, a } => {
                let s = (z * a).sin();
                (m * (m + 1)) as f64 * a * a / (s * s)
            }
            Kind::Rational { poles, weights } => poles
                .iter()
                .zip(weights)
                .map(|(p, w)| {
                    let y = z - p;
                    w / (y * y)
                })
                .sum(),
            Kind::AdlerMoser { theta, .. } => {
                let [t, t1, t2] = theta.eval_jet(z);
                2.0 * (t1 * t1 - t * t2) / (t * t)
            }
        };
        Ok(singular + self.background.eval(z))
    }

    fn all_real_poles(&self, lo: f64, hi: f64) -> Vec<f64> {
        let inside = |x: f64| x >= lo && x <= hi;
        let mut out: Vec<f64> = match &self.kind {
            Kind::Free => Vec::new(),
            Kind::InverseSquare { center, .. } => vec![*center],
            Kind::CscSquared { a, .. } => {
                let k0 = (lo * a / PI).ceil() as i64;
                let k1 = (hi * a / PI).floor() as i64;
                (k0..=k1).map(|k| k as f64 * PI / a).collect()
            }
            Kind::Rational { poles, .. } => poles
                .iter()
                .filter(|p| p.im.abs() <= REAL_POLE_TOL * (1.0 + p.norm()))
                .map(|p| p.re)
                .collect(),
            Kind::AdlerMoser { roots, .. } => roots
                .iter()
                .filter(|(p, _)| p.im == 0.0)
                .map(|(p, _)| p.re)
                .collect(),
        };
        out.retain(|&x| inside(x));
        out.sort_by(f64::total_cmp);
        out
    }

    /// Sorted real poles strictly inside `(a, b)`.
    pub fn list_singularities(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        if !(a < b) {
            return Err(Error::InvalidParameters(format!(
                "interval [{a}, {b}] is empty"
            )));
        }
        let near = |p: f64, e: f64| (p - e).abs() <= 1e-12 * (1.0 + e.abs());
        let margin = 1e-9 * (1.0 + a.abs().max(b.abs()));
        let poles = self.all_real_poles(a - margin, b + margin);
        for &p in &poles {
            if near(p, a) {
                return Err(Error::PoleAtEndpoint(a));
            }
            if near(p, b) {
                return Err(Error::PoleAtEndpoint(b));
            }
        }
        Ok(poles.into_iter().filter(|&p| p > a && p < b).collect())
    }

    /// Real poles in `[a, b]`, endpoints included, without validation.
    pub fn real_poles_in(&self, a: f64, b: f64) -> Vec<f64> {
        self.all_real_poles(a, b)
    }

    /// Laurent expansion of the potential at the real point `x0`, trusted
    /// below exponent `trunc`.
    pub fn laurent_at(&self, x0: f64, trunc: i32) -> Result<LaurentSeries> {
        let len = (trunc + 2).max(1) as usize;
        let z0 = Complex64::new(x0, 0.0);
        let mut out = vec![ZERO; len];
        // out[i] is the coefficient of y^(i-2)
        let add_inverse_square = |coef: f64, d: Complex64, out: &mut Vec<Complex64>| {
            if d.norm() < 1e-12 * (1.0 + x0.abs()) {
                out[0] += coef;
            } else {
                // coef / (d + y)^2 = coef/d^2 * sum (m+1) (-y/d)^m
                let mut p = coef / (d * d);
                for m in 0..len - 2 {
                    out[m + 2] += p * (m + 1) as f64;
                    p *= -1.0 / d;
                }
            }
        };
        match &self.kind {
            Kind::Free => {}
            Kind::InverseSquare { n, center } => {
                add_inverse_square((n * (n + 1)) as f64, z0 - center, &mut out)
            }
            Kind::Rational { poles, weights } => {
                for (p, w) in poles.iter().zip(weights) {
                    add_inverse_square(*w, z0 - p, &mut out);
                }
            }
            Kind::CscSquared { m, a } => {
                let coef = (m * (m + 1)) as f64 * a * a;
                let mut s0 = (a * x0).sin();
                let c0 = (a * x0).cos();
                let tc = taylor_cos(*a, len + 2);
                let ts = taylor_sin(*a, len + 2);
                if s0.abs() < 1e-12 {
                    s0 = 0.0;
                }
                let sin_series: Vec<f64> = (0..len + 2).map(|i| s0 * tc[i] + c0 * ts[i]).collect();
                if s0 == 0.0 {
                    // sin = y * S(y); u = coef * y^-2 * S^-2
                    let s = LaurentSeries::from_real_slice(x0, 0, &sin_series[1..], len as i32);
                    let inv = s.mul(&s)?.taylor_reciprocal()?;
                    for i in 0..len {
                        out[i] += coef * inv.coefficient_at(i as i32)?;
                    }
                } else {
                    let s = LaurentSeries::from_real_slice(x0, 0, &sin_series, len as i32);
                    let inv = s.mul(&s)?.taylor_reciprocal()?;
                    for i in 0..len - 2 {
                        out[i + 2] += coef * inv.coefficient_at(i as i32)?;
                    }
                }
            }
            Kind::AdlerMoser { theta, roots } => {
                let mult = roots
                    .iter()
                    .find(|(r, _)| (r - z0).norm() < 1e-8 * (1.0 + x0.abs()))
                    .map_or(0, |(_, m)| *m);
                let shifted = theta.taylor_shift(z0);
                let q = LaurentSeries::from_coeffs(
                    x0,
                    (len + 2) as i32,
                    shifted
                        .iter()
                        .enumerate()
                        .skip(mult)
                        .map(|(i, &c)| ((i - mult) as i32, c)),
                );
                // u = 2 mult y^-2 - 2 (q'/q)'
                let log_d = q.derivative().mul(&q.taylor_reciprocal()?)?;
                let dd = log_d.derivative();
                out[0] += 2.0 * mult as f64;
                for i in 0..len - 2 {
                    out[i + 2] -= 2.0 * dd.coefficient_at(i as i32)?;
                }
            }
        }
        let bg = self.background.taylor(x0, len - 2);
        for (i, c) in bg.into_iter().enumerate() {
            out[i + 2] += c;
        }
        Ok(LaurentSeries::from_coeffs(
            x0,
            trunc,
            out.into_iter().enumerate().map(|(i, c)| (i as i32 - 2, c)),
        ))
    }

    /// Index and local coefficients at the real pole `x`, expanded below
    /// exponent `order`.
    pub fn singularity_profile(&self, x: f64, order: i32) -> Result<SingularityProfile> {
        let order = order.max(1);
        let laurent = self.laurent_at(x, order)?;
        let lead = laurent.coefficient_at(-2)?;
        if laurent.valuation() >= -1 && lead == ZERO && laurent.coefficient_at(-1)? == ZERO {
            return Err(Error::InvalidParameters(format!("{x} is not a pole")));
        }
        let reject = |reason: String| SingularityProfile {
            location: x,
            index: -1,
            lower_coeffs: Vec::new(),
            tail: laurent.clone(),
            laurent: laurent.clone(),
            reason: Some(reason),
        };
        if laurent.valuation() < -2 {
            return Ok(reject(format!(
                "pole of order {} exceeds 2",
                -laurent.valuation()
            )));
        }
        let scale = lead.norm().max(1.0);
        let disc = (1.0 + 4.0 * lead.re).max(0.0).sqrt();
        let n = ((disc - 1.0) / 2.0).round();
        let mismatch = (Complex64::new(n * (n + 1.0), 0.0) - lead).norm();
        if n < 1.0 || mismatch > INDEX_MATCH_TOL * scale {
            return Ok(reject(format!(
                "leading coefficient ({}, {}) is not of the form n(n+1)",
                lead.re, lead.im
            )));
        }
        let n = n as i32;
        let lower: Vec<Complex64> = (0..n)
            .map(|q| laurent.coefficient_at(2 * q).unwrap_or(ZERO))
            .collect();
        let mut tail_terms: Vec<(i32, Complex64)> = laurent.terms().collect();
        for (e, c) in tail_terms.iter_mut() {
            if *e == -2 {
                *c -= (n * (n + 1)) as f64;
            } else if *e >= 0 && *e < 2 * n && e.rem_euclid(2) == 0 {
                *c = ZERO;
            }
        }
        Ok(SingularityProfile {
            location: x,
            index: n,
            lower_coeffs: lower,
            tail: LaurentSeries::from_coeffs(x, laurent.trunc(), tail_terms),
            laurent,
            reason: None,
        })
    }
}

fn polish_real_root(p: &Poly, x: f64, mult: usize) -> f64 {
    // Newton on the (mult-1)-th derivative, where the root is simple.
    let mut q = p.clone();
    for _ in 1..mult {
        q = q.derivative();
    }
    let dq = q.derivative();
    let mut x = x;
    for _ in 0..8 {
        let d = dq.eval(Complex64::new(x, 0.0)).re;
        if d == 0.0 {
            break;
        }
        let step = q.eval(Complex64::new(x, 0.0)).re / d;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

fn check_distinct(poles: &[Complex64]) -> Result<()> {
    for (i, p) in poles.iter().enumerate() {
        if poles[..i].iter().any(|q| q == p) {
            return Err(Error::RepeatedPole { re: p.re, im: p.im });
        }
    }
    Ok(())
}

pub fn make_family(spec: &PotentialSpec) -> Result<Potential> {
    Potential::from_spec(spec)
}

pub fn eval_potential(u: &Potential, z: Complex64) -> Result<Complex64> {
    u.eval(z)
}

pub fn list_singularities(u: &Potential, a: f64, b: f64) -> Result<Vec<f64>> {
    u.list_singularities(a, b)
}

pub fn singularity_profile(u: &Potential, x: f64, order: i32) -> Result<SingularityProfile> {
    u.singularity_profile(x, order)
}

/// `max_j |sum_{k != j} (x_j - x_k)^-3|`; vanishes exactly when
/// `2 sum (x - x_j)^-2` has no odd local terms at its poles.
pub fn verify_pole_constraint(poles: &[Complex64]) -> Result<f64> {
    check_distinct(poles)?;
    Ok(poles
        .iter()
        .enumerate()
        .map(|(j, xj)| {
            poles
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, xk)| (xj - xk).powi(-3))
                .sum::<Complex64>()
                .norm()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pot(spec: PotentialSpec) -> Potential {
        Potential::from_spec(&spec).unwrap()
    }

    #[test]
    fn closed_form_values() {
        let free = pot(PotentialSpec::free());
        assert_eq!(free.eval(Complex64::new(0.3, -2.0)).unwrap(), c(0.0));
        let inv = pot(PotentialSpec::inverse_square(1));
        assert!((inv.eval(c(2.0)).unwrap() - 0.5).norm() < 1e-15);
        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        assert!((csc.eval(c(PI / 2.0)).unwrap() - 2.0).norm() < 1e-14);
        assert!(matches!(
            inv.eval(c(1e-12)),
            Err(Error::TooCloseToPole { .. })
        ));
    }

    #[test]
    fn pole_listing() {
        let free = pot(PotentialSpec::free());
        assert!(free.list_singularities(0.0, 1.0).unwrap().is_empty());
        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        let p = csc.list_singularities(-1.0, 4.0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - PI).abs() < 1e-15);
        assert!(matches!(
            csc.list_singularities(0.0, 1.0),
            Err(Error::PoleAtEndpoint(_))
        ));
        let am = pot(PotentialSpec::adler_moser(2, &[1.0]));
        let p = am.list_singularities(-3.0, 3.0).unwrap();
        assert_eq!(p.len(), 1);
        assert!((p[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn adler_moser_polynomials() {
        assert_eq!(adler_moser_polynomial(1, &[]), vec![0.0, 1.0]);
        assert_eq!(adler_moser_polynomial(2, &[1.0]), vec![1.0, 0.0, 0.0, 1.0]);
        // theta_3 = x^6 + 5 t2 x^3 + t3 x - 5 t2^2
        let (t2, t3) = (2.0, 3.0);
        assert_eq!(
            adler_moser_polynomial(3, &[t2, t3]),
            vec![-5.0 * t2 * t2, t3, 0.0, 5.0 * t2, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn adler_moser_potential_matches_rational_form() {
        let am = pot(PotentialSpec::adler_moser(2, &[1.0]));
        for x in [0.3f64, 1.7, -2.5] {
            let expect = (6.0 * x.powi(4) - 12.0 * x) / (x.powi(3) + 1.0).powi(2);
            assert!((am.eval(c(x)).unwrap() - expect).norm() < 1e-12);
        }
        let am1 = pot(PotentialSpec::adler_moser(1, &[]));
        assert!((am1.eval(c(0.5)).unwrap() - 8.0).norm() < 1e-12);
    }

    #[test]
    fn profiles() {
        let inv = pot(PotentialSpec::inverse_square(1));
        let p = inv.singularity_profile(0.0, 6).unwrap();
        assert_eq!(p.index, 1);
        assert_eq!(p.lower_coeffs, vec![c(0.0)]);
        assert_eq!(p.tail.terms().count(), 0);

        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        let p = csc.singularity_profile(0.0, 6).unwrap();
        assert_eq!(p.index, 1);
        assert!((p.lower_coeffs[0] - 2.0 / 3.0).norm() < 1e-15);
        assert!((p.laurent.coefficient_at(2).unwrap() - 2.0 / 15.0).norm() < 1e-15);
        assert!((p.laurent.coefficient_at(4).unwrap() - 4.0 / 189.0).norm() < 1e-15);

        let am = pot(PotentialSpec::adler_moser(2, &[1.0]));
        let p = am.singularity_profile(-1.0, 6).unwrap();
        assert_eq!(p.index, 1);
        assert!(p.laurent.coefficient_at(1).unwrap().norm() < 1e-12);

        let triple = pot(PotentialSpec::adler_moser(2, &[]));
        let p = triple.singularity_profile(0.0, 4).unwrap();
        assert_eq!(p.index, 2);
    }

    #[test]
    fn non_admissible_pole_is_flagged() {
        let u: PotentialSpec = serde_json::from_str(
            r#"{"family":"rational_poles","poles":[0.0, 2.0],"weights":[3.0, 6.0]}"#,
        )
        .unwrap();
        let u = pot(u);
        let bad = u.singularity_profile(0.0, 4).unwrap();
        assert_eq!(bad.index, -1);
        assert!(!bad.is_admissible());
        assert!(bad.reason.is_some());
        assert!((bad.laurent.coefficient_at(-2).unwrap() - 3.0).norm() < 1e-15);
        assert_eq!(u.singularity_profile(2.0, 4).unwrap().index, 2);
        assert!(u.singularity_profile(1.0, 4).is_err());
    }

    #[test]
    fn pole_constraint() {
        assert_eq!(verify_pole_constraint(&[c(0.0)]).unwrap(), 0.0);
        let roots: Vec<Complex64> = (0..3)
            .map(|k| Complex64::from_polar(1.0, PI / 3.0 + 2.0 * PI * k as f64 / 3.0))
            .collect();
        assert!(verify_pole_constraint(&roots).unwrap() < 1e-12);
        assert_eq!(verify_pole_constraint(&[c(0.0), c(1.0)]).unwrap(), 1.0);
        assert!(matches!(
            verify_pole_constraint(&[c(1.0), c(1.0)]),
            Err(Error::RepeatedPole { .. })
        ));
    }

    #[test]
    fn descriptors() {
        let u: PotentialSpec =
            serde_json::from_str(r#"{"family":"csc_squared","m":1,"a":1.0}"#).unwrap();
        assert_eq!(u, PotentialSpec::csc_squared(1, 1.0));
        let r: PotentialSpec = serde_json::from_str(
            r#"{"family":"rational_poles","poles":[0.0,[1.0,2.0]],"background":{"cos":[0,0,0.3]}}"#,
        )
        .unwrap();
        assert!(matches!(r, PotentialSpec::RationalPoles { .. }));
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"family":"free","bogus":1}"#).is_err());
        assert!(serde_json::from_str::<PotentialSpec>(r#"{"family":"nope"}"#).is_err());
        assert!(Potential::from_spec(&PotentialSpec::inverse_square(0)).is_err());
        assert!(Potential::from_spec(&PotentialSpec::csc_squared(1, -1.0)).is_err());
    }

    #[test]
    fn periods() {
        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        assert_eq!(csc.period(), Some(PI));
        let bg = Background {
            cos: vec![0.0, 0.0, 0.3],
            ..Default::default()
        };
        let pert = pot(PotentialSpec::csc_squared(1, 1.0).with_background(bg));
        assert_eq!(pert.period(), Some(PI));
        let odd = Background {
            cos: vec![0.0, 1.0],
            ..Default::default()
        };
        assert_eq!(pot(PotentialSpec::csc_squared(1, 1.0).with_background(odd)).period(), None);
        assert!(matches!(
            Potential::from_spec(&PotentialSpec::inverse_square(1).with_period(1.0)),
            Err(Error::Aperiodic(_))
        ));
        assert_eq!(pot(PotentialSpec::free().with_period(2.0)).period(), Some(2.0));
    }
}
