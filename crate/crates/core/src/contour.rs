//! Pole-avoiding paths along the real axis and propagation of
//! `-f'' + (u - lambda) f = 0` along them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::Potential;
use crate::stepper::{self, Path, StepControl};

const PI: f64 = std::f64::consts::PI;

/// Default relative tolerance of the propagator.
pub const DEFAULT_RTOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Upper => Side::Lower,
            Side::Lower => Side::Upper,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Side> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            other => Err(Error::InvalidParameters(format!("unknown side '{other}'"))),
        }
    }
}

/// Detour side for each pole, either uniform or listed left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sides {
    All(Side),
    PerPole(Vec<Side>),
}

impl Default for Sides {
    fn default() -> Self {
        Sides::All(Side::Upper)
    }
}

impl Sides {
    pub fn side(&self, i: usize) -> Result<Side> {
        match self {
            Sides::All(s) => Ok(*s),
            Sides::PerPole(v) => v.get(i).copied().ok_or_else(|| {
                Error::InvalidParameters(format!("no side given for pole #{}", i + 1))
            }),
        }
    }

    pub fn flipped(&self) -> Sides {
        match self {
            Sides::All(s) => Sides::All(s.flip()),
            Sides::PerPole(v) => Sides::PerPole(v.iter().map(|s| s.flip()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Leg {
    Segment {
        from: Complex64,
        to: Complex64,
    },
    /// `center + radius * exp(i theta)` for theta from `from_angle` to
    /// `to_angle`.
    Arc {
        center: f64,
        radius: f64,
        from_angle: f64,
        to_angle: f64,
    },
}

impl Leg {
    pub fn start(&self) -> Complex64 {
        match *self {
            Leg::Segment { from, .. } => from,
            Leg::Arc { center, radius, from_angle, .. } => arc_point(center, radius, from_angle),
        }
    }

    pub fn end(&self) -> Complex64 {
        match *self {
            Leg::Segment { to, .. } => to,
            Leg::Arc { center, radius, to_angle, .. } => arc_point(center, radius, to_angle),
        }
    }

    pub fn reversed(&self) -> Leg {
        match *self {
            Leg::Segment { from, to } => Leg::Segment { from: to, to: from },
            Leg::Arc { center, radius, from_angle, to_angle } => Leg::Arc {
                center,
                radius,
                from_angle: to_angle,
                to_angle: from_angle,
            },
        }
    }

    pub fn mirrored(&self) -> Leg {
        match *self {
            Leg::Segment { from, to } => Leg::Segment { from: from.conj(), to: to.conj() },
            Leg::Arc { center, radius, from_angle, to_angle } => Leg::Arc {
                center,
                radius,
                from_angle: -from_angle,
                to_angle: -to_angle,
            },
        }
    }

    /// Side of an arc, `None` for segments.
    pub fn side(&self) -> Option<Side> {
        match *self {
            Leg::Segment { .. } => None,
            Leg::Arc { from_angle, to_angle, .. } => {
                let mid = 0.5 * (from_angle + to_angle);
                Some(if mid.sin() > 0.0 { Side::Upper } else { Side::Lower })
            }
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Leg::Segment { from, to } => (to - from).norm(),
            Leg::Arc { radius, from_angle, to_angle, .. } => radius * (to_angle - from_angle).abs(),
        }
    }
}

/// Arc points at multiples of `pi/2` are produced exactly so that legs join
/// without rounding gaps.
fn arc_point(center: f64, radius: f64, theta: f64) -> Complex64 {
    let quarter = theta / (0.5 * PI);
    if quarter == quarter.round() {
        let (re, im) = match (quarter.round() as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        };
        return Complex64::new(center + radius * re, radius * im);
    }
    Complex64::new(center, 0.0) + Complex64::from_polar(radius, theta)
}

impl Path for Leg {
    fn range(&self) -> (f64, f64) {
        match *self {
            Leg::Segment { from, to } => (0.0, (to - from).norm()),
            Leg::Arc { from_angle, to_angle, .. } => (from_angle, to_angle),
        }
    }

    fn point(&self, t: f64) -> Complex64 {
        match *self {
            Leg::Segment { from, to } => {
                let len = (to - from).norm();
                if t >= len {
                    to
                } else {
                    from + (to - from) * (t / len)
                }
            }
            Leg::Arc { center, radius, .. } => arc_point(center, radius, t),
        }
    }

    fn velocity(&self, t: f64) -> Complex64 {
        match *self {
            Leg::Segment { from, to } => (to - from) / (to - from).norm(),
            Leg::Arc { radius, .. } => Complex64::new(0.0, radius) * Complex64::from_polar(1.0, t),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub x0: f64,
    pub x1: f64,
    pub radius: f64,
    pub poles: Vec<f64>,
    pub legs: Vec<Leg>,
}

/// `min(0.1, gap / 4)` where `gap` is the smallest distance between
/// consecutive poles or between a pole and an endpoint.
pub fn default_radius(x0: f64, x1: f64, poles: &[f64]) -> f64 {
    min_gap(x0, x1, poles).map_or(0.1, |g| (0.25 * g).min(0.1))
}

fn min_gap(x0: f64, x1: f64, poles: &[f64]) -> Option<f64> {
    if poles.is_empty() {
        return None;
    }
    let mut pts = vec![x0.min(x1)];
    pts.extend_from_slice(poles);
    pts.push(x0.max(x1));
    pts.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

pub fn build_contour(x0: f64, x1: f64, poles: &[f64], r: f64, sides: &Sides) -> Result<Contour> {
    if !(x0 < x1) {
        return Err(Error::InvalidParameters(format!("need x0 < x1, got {x0}, {x1}")));
    }
    let mut inside = Vec::new();
    for &p in poles {
        if p == x0 || p == x1 {
            return Err(Error::PoleAtEndpoint(p));
        }
        if p > x0 && p < x1 {
            inside.push(p);
        }
    }
    inside.sort_by(f64::total_cmp);
    if inside.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidParameters("duplicate pole".into()));
    }
    if let Some(gap) = min_gap(x0, x1, &inside) {
        let limit = 0.5 * gap;
        if !(r > 0.0 && r < limit) {
            return Err(Error::RadiusTooLarge { radius: r, limit });
        }
    }
    let mut legs = Vec::with_capacity(2 * inside.len() + 1);
    let mut cursor = x0;
    for (i, &p) in inside.iter().enumerate() {
        legs.push(Leg::Segment {
            from: Complex64::new(cursor, 0.0),
            to: Complex64::new(p - r, 0.0),
        });
        let to_angle = match sides.side(i)? {
            Side::Upper => 0.0,
            Side::Lower => 2.0 * PI,
        };
        legs.push(Leg::Arc {
            center: p,
            radius: r,
            from_angle: PI,
            to_angle,
        });
        cursor = p + r;
    }
    legs.push(Leg::Segment {
        from: Complex64::new(cursor, 0.0),
        to: Complex64::new(x1, 0.0),
    });
    Ok(Contour {
        x0,
        x1,
        radius: r,
        poles: inside,
        legs,
    })
}

/// Radius and side selection for contours built around a potential's poles.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub sides: Sides,
}

impl ContourOptions {
    pub fn with_sides(sides: Sides) -> Self {
        ContourOptions { radius: None, sides }
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = Some(r);
        self
    }
}

impl Contour {
    /// Contour from `x0` to `x1` detouring the real poles of `u`. Works in
    /// either direction: for `x1 < x0` the left-to-right contour is built and
    /// reversed.
    pub fn around(u: &Potential, x0: f64, x1: f64, opts: &ContourOptions) -> Result<Contour> {
        let (a, b) = if x0 <= x1 { (x0, x1) } else { (x1, x0) };
        let poles = u.list_singularities(a, b)?;
        let r = opts.radius.unwrap_or_else(|| default_radius(a, b, &poles));
        let c = build_contour(a, b, &poles, r, &opts.sides)?;
        Ok(if x0 <= x1 { c } else { c.reversed() })
    }

    pub fn start(&self) -> Complex64 {
        self.legs[0].start()
    }

    pub fn end(&self) -> Complex64 {
        self.legs[self.legs.len() - 1].end()
    }

    pub fn reversed(&self) -> Contour {
        Contour {
            x0: self.x1,
            x1: self.x0,
            radius: self.radius,
            poles: self.poles.clone(),
            legs: self.legs.iter().rev().map(Leg::reversed).collect(),
        }
    }

    /// Complex conjugate path: upper arcs become lower arcs and vice versa.
    pub fn mirrored(&self) -> Contour {
        Contour {
            legs: self.legs.iter().map(Leg::mirrored).collect(),
            ..self.clone()
        }
    }

    /// Splits real segments at the given abscissae.
    pub fn split_at(&self, xs: &[f64]) -> Contour {
        let mut legs = Vec::with_capacity(self.legs.len() + xs.len());
        for leg in &self.legs {
            match *leg {
                Leg::Segment { from, to } if from.im == 0.0 && to.im == 0.0 => {
                    let (lo, hi) = (from.re.min(to.re), from.re.max(to.re));
                    let mut cuts: Vec<f64> = xs.iter().copied().filter(|&x| x > lo && x < hi).collect();
                    cuts.sort_by(f64::total_cmp);
                    if to.re < from.re {
                        cuts.reverse();
                    }
                    let mut cur = from;
                    for x in cuts {
                        let next = Complex64::new(x, 0.0);
                        legs.push(Leg::Segment { from: cur, to: next });
                        cur = next;
                    }
                    legs.push(Leg::Segment { from: cur, to });
                }
                _ => legs.push(leg.clone()),
            }
        }
        Contour { legs, ..self.clone() }
    }

    pub fn is_contiguous(&self) -> bool {
        self.legs.windows(2).all(|w| w[0].end() == w[1].start())
    }
}

/// Terminal data of a propagation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationState {
    pub position: Complex64,
    pub value: Complex64,
    pub derivative: Complex64,
    /// `int f w dz` along the path when a companion `w` was supplied.
    pub accumulated: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions {
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            rtol: DEFAULT_RTOL,
            max_steps: 2_000_000,
        }
    }
}

impl PropagateOptions {
    pub fn with_rtol(rtol: f64) -> Self {
        PropagateOptions { rtol, ..Default::default() }
    }

    pub(crate) fn control(&self) -> StepControl {
        StepControl {
            rtol: self.rtol,
            max_steps: self.max_steps,
        }
    }
}

/// Runs an arbitrary first-order system along every leg of `c`.
pub(crate) fn integrate_along<const N: usize, F>(
    c: &Contour,
    y: &mut [Complex64; N],
    groups: &[u8; N],
    floors: &[f64],
    rhs: &mut F,
    opts: &PropagateOptions,
) -> Result<()>
where
    F: FnMut(Complex64, Complex64, &[Complex64; N]) -> Result<[Complex64; N]>,
{
    let ctl = opts.control();
    let mut steps = 0;
    for leg in &c.legs {
        stepper::integrate(leg, y, groups, floors, rhs, &ctl, &mut steps)?;
    }
    Ok(())
}

type Companion<'a> = &'a dyn Fn(Complex64) -> Result<Complex64>;

pub fn propagate(
    u: &Potential,
    lambda: Complex64,
    c: &Contour,
    init: (Complex64, Complex64),
    companion: Option<Companion<'_>>,
    opts: &PropagateOptions,
) -> Result<PropagationState> {
    let zero = Complex64::new(0.0, 0.0);
    if !(init.0.is_finite() && init.1.is_finite()) {
        return Err(Error::InvalidParameters("non-finite initial data".into()));
    }
    // [f, f', int f w, int |f w|]
    let mut y = [init.0, init.1, zero, zero];
    let mut rhs = |z: Complex64, v: Complex64, y: &[Complex64; 4]| -> Result<[Complex64; 4]> {
        let q = u.eval(z)? - lambda;
        let (acc, mass) = match companion {
            Some(w) => {
                let fw = y[0] * w(z)? * v;
                (fw, Complex64::new(fw.norm(), 0.0))
            }
            None => (zero, zero),
        };
        Ok([y[1] * v, q * y[0] * v, acc, mass])
    };
    // the integral is controlled against max(|acc|, int |f w|, 1)
    integrate_along(c, &mut y, &[0, 0, 1, 1], &[0.0, 1.0], &mut rhs, opts)?;
    Ok(PropagationState {
        position: c.end(),
        value: y[0],
        derivative: y[1],
        accumulated: y[2],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialSpec;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    const I: Complex64 = Complex64::new(0.0, 1.0);

    /// `e^{ix}(1/x - i)` and its derivative; solves `-f'' + 2 f / x^2 = f`.
    fn oracle(z: Complex64) -> (Complex64, Complex64) {
        let e = (I * z).exp();
        (e * (z.inv() - I), e * (I / z + 1.0 - z.powi(-2)))
    }

    #[test]
    fn oracle_solves_the_equation() {
        for z in [Complex64::new(0.7, 0.2), Complex64::new(-1.3, -0.4)] {
            let h = 1e-4;
            let (f, d) = oracle(z);
            let (fp, _) = oracle(z + h);
            let (fm, _) = oracle(z - h);
            let second = (fp - 2.0 * f + fm) / (h * h);
            let residual = -second + f * 2.0 / (z * z) - f;
            assert!(residual.norm() < 1e-6 * f.norm().max(1.0));
            let first = (fp - fm) / (2.0 * h);
            assert!((first - d).norm() < 1e-7 * d.norm().max(1.0));
        }
    }

    #[test]
    fn contour_shapes() {
        let single = build_contour(0.0, 1.0, &[], 0.1, &Sides::default()).unwrap();
        assert_eq!(single.legs.len(), 1);
        assert_eq!(single.legs[0], Leg::Segment { from: c(0.0), to: c(1.0) });

        let one = build_contour(-1.0, 1.0, &[0.0], 0.1, &Sides::All(Side::Upper)).unwrap();
        assert_eq!(one.legs.len(), 3);
        assert_eq!(one.legs[0].end(), c(-0.1));
        assert_eq!(one.legs[1].side(), Some(Side::Upper));
        assert_eq!(one.legs[1].start(), c(-0.1));
        assert_eq!(one.legs[1].end(), c(0.1));
        assert!(one.is_contiguous());

        let two = build_contour(
            -1.0,
            4.0,
            &[0.0, PI],
            0.2,
            &Sides::PerPole(vec![Side::Upper, Side::Lower]),
        )
        .unwrap();
        assert_eq!(two.legs.len(), 5);
        assert_eq!(two.legs[1].side(), Some(Side::Upper));
        assert_eq!(two.legs[3].side(), Some(Side::Lower));
        assert!(two.is_contiguous());
        assert!(two.reversed().is_contiguous());
        assert!(two.mirrored().is_contiguous());
        assert_eq!(two.mirrored().legs[1].side(), Some(Side::Lower));
        assert!(two.split_at(&[2.0, -0.5]).is_contiguous());
        assert_eq!(two.split_at(&[2.0, -0.5]).legs.len(), 7);
    }

    #[test]
    fn contour_errors() {
        assert!(matches!(
            build_contour(-1.0, 1.0, &[0.0], 0.6, &Sides::default()),
            Err(Error::RadiusTooLarge { .. })
        ));
        assert_eq!(
            build_contour(0.0, 1.0, &[0.0], 0.1, &Sides::default()),
            Err(Error::PoleAtEndpoint(0.0))
        );
        assert!(build_contour(1.0, 0.0, &[], 0.1, &Sides::default()).is_err());
        assert_eq!(default_radius(-1.0, 1.0, &[0.0]), 0.1);
        assert_eq!(default_radius(-0.2, 1.0, &[0.0]), 0.05);
    }

    #[test]
    fn json_layout() {
        let one = build_contour(-1.0, 1.0, &[0.0], 0.1, &Sides::All(Side::Lower)).unwrap();
        let v = serde_json::to_value(&one).unwrap();
        assert_eq!(v["legs"][1]["kind"], "arc");
        assert_eq!(v["legs"][0]["kind"], "segment");
        let back: Contour = serde_json::from_value(v).unwrap();
        assert_eq!(back, one);
        let sides: Sides = serde_json::from_str(r#"["upper","lower"]"#).unwrap();
        assert_eq!(sides.side(1).unwrap(), Side::Lower);
    }

    #[test]
    fn cosine() {
        let u = Potential::from_spec(&PotentialSpec::free()).unwrap();
        let ct = build_contour(0.0, 1.0, &[], 0.1, &Sides::default()).unwrap();
        let s = propagate(&u, c(PI * PI), &ct, (c(1.0), c(0.0)), None, &Default::default()).unwrap();
        assert!((s.value + 1.0).norm() < 1e-9);
        assert!(s.derivative.norm() < 1e-8);
        assert_eq!(s.position, c(1.0));
    }

    fn inverse_square_error(side: Side, rtol: f64) -> (Complex64, Complex64, f64) {
        let u = Potential::from_spec(&PotentialSpec::inverse_square(1)).unwrap();
        let ct = Contour::around(&u, -1.0, 1.0, &ContourOptions::with_sides(Sides::All(side))).unwrap();
        let s = propagate(&u, c(1.0), &ct, oracle(c(-1.0)), None, &PropagateOptions::with_rtol(rtol)).unwrap();
        let (f, d) = oracle(c(1.0));
        let err = ((s.value - f).norm() + (s.derivative - d).norm()) / (f.norm() + d.norm());
        (s.value, s.derivative, err)
    }

    #[test]
    fn inverse_square_both_sides() {
        let (fu, du, eu) = inverse_square_error(Side::Upper, DEFAULT_RTOL);
        let (fl, dl, el) = inverse_square_error(Side::Lower, DEFAULT_RTOL);
        assert!(eu < 1e-8, "{eu}");
        assert!(el < 1e-8, "{el}");
        assert!((fu - fl).norm() < 1e-8 * fu.norm());
        assert!((du - dl).norm() < 1e-8 * du.norm());
    }

    #[test]
    fn tolerance_scaling() {
        let free = Potential::from_spec(&PotentialSpec::free()).unwrap();
        let ct = build_contour(0.0, 3.0, &[], 0.1, &Sides::default()).unwrap();
        let free_err = |rtol: f64| {
            let s = propagate(&free, c(9.0), &ct, (c(1.0), c(0.0)), None, &PropagateOptions::with_rtol(rtol))
                .unwrap();
            (s.value - 9.0f64.cos()).norm() + (s.derivative + 3.0 * 9.0f64.sin()).norm()
        };
        for eps in [1e-6, 1e-7, 1e-8, 1e-9] {
            assert!(free_err(eps / 2.0) * 2.0 <= free_err(eps), "free at {eps}");
            for side in [Side::Upper, Side::Lower] {
                let coarse = inverse_square_error(side, eps).2;
                let fine = inverse_square_error(side, eps / 2.0).2;
                assert!(fine * 2.0 <= coarse, "2/x^2 at {eps}: {coarse} -> {fine}");
            }
        }
    }

    #[test]
    fn reversal_returns_home() {
        let u = Potential::from_spec(&PotentialSpec::csc_squared(1, 1.0)).unwrap();
        let ct = Contour::around(&u, -1.0, 2.0, &ContourOptions::default()).unwrap();
        let init = (c(0.3), Complex64::new(-1.0, 0.5));
        let opts = PropagateOptions::default();
        let there = propagate(&u, c(2.5), &ct, init, None, &opts).unwrap();
        let back = propagate(&u, c(2.5), &ct.reversed(), (there.value, there.derivative), None, &opts).unwrap();
        let scale = init.0.norm().max(init.1.norm());
        assert!((back.value - init.0).norm() < 10.0 * opts.rtol * scale);
        assert!((back.derivative - init.1).norm() < 10.0 * opts.rtol * scale);
        assert_eq!(back.position, c(-1.0));
    }

    #[test]
    fn wronskian_is_conserved() {
        let u = Potential::from_spec(&PotentialSpec::adler_moser(2, &[1.0])).unwrap();
        let ct = Contour::around(&u, -2.0, 1.0, &ContourOptions::with_sides(Sides::All(Side::Lower))).unwrap();
        let opts = PropagateOptions::default();
        let lam = Complex64::new(1.5, 0.0);
        let f = propagate(&u, lam, &ct, (c(1.0), c(0.0)), None, &opts).unwrap();
        let g = propagate(&u, lam, &ct, (c(0.0), c(1.0)), None, &opts).unwrap();
        let w = f.value * g.derivative - f.derivative * g.value;
        assert!((w - 1.0).norm() < 10.0 * opts.rtol, "{w}");
    }

    #[test]
    fn companion_accumulates() {
        // f = cos(x), w = cos(x): int_0^pi cos^2 = pi/2
        let u = Potential::from_spec(&PotentialSpec::free()).unwrap();
        let ct = build_contour(0.0, PI, &[], 0.1, &Sides::default()).unwrap();
        let w = |z: Complex64| Ok(z.cos());
        let s = propagate(&u, c(1.0), &ct, (c(1.0), c(0.0)), Some(&w), &Default::default()).unwrap();
        assert!((s.accumulated - PI / 2.0).norm() < 1e-9);
    }
}
