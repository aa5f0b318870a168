//! The regularized pairing `<f, g> = int f(z) g*(z) dz` along a path that
//! detours the poles, with `g*(z) = conj(g(conj z))`.
//!
//! The value does not depend on the detour sides exactly when `f g*` has no
//! `y^-1` term at any pole, so every pairing is gated on that residue.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{
    build_contour, default_radius, integrate_along, propagate, Contour, ContourOptions, Leg,
    PropagateOptions,
};
use crate::error::{Error, Result};
use crate::frobenius::{local_solution, pair_residue, Branch, PrincipalSubspace, OBSTRUCTION_TOL};
use crate::potential::Potential;
use crate::series::LaurentSeries;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Value and first two derivatives.
pub type Jet = [Complex64; 3];

pub const PAIRING_RTOL: f64 = 1e-12;
pub const RESIDUE_TOL: f64 = 1e-8;
pub const SIGNATURE_TOL: f64 = 1e-8;

/// Smooth plateau: 0 outside `support`, 1 on `core`, quintic smoothstep
/// ramps in between (C^2). Evaluated at `Re z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub support: (f64, f64),
    pub core: (f64, f64),
}

fn smoothstep(t: f64) -> [f64; 3] {
    if t <= 0.0 {
        return [0.0, 0.0, 0.0];
    }
    if t >= 1.0 {
        return [1.0, 0.0, 0.0];
    }
    let t2 = t * t;
    [
        t2 * t * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    ]
}

impl Window {
    pub fn new(support: (f64, f64), core: (f64, f64)) -> Result<Window> {
        if !(support.0 < core.0 && core.0 < core.1 && core.1 < support.1) {
            return Err(Error::InvalidParameters(format!(
                "window needs support.0 < core.0 < core.1 < support.1, got {support:?} {core:?}"
            )));
        }
        Ok(Window { support, core })
    }

    /// Window on `[a, b]` whose ramps take `fraction` of the width each.
    pub fn plateau(a: f64, b: f64, fraction: f64) -> Result<Window> {
        let d = fraction * (b - a);
        Window::new((a, b), (a + d, b - d))
    }

    pub fn jet(&self, x: f64) -> [f64; 3] {
        let (a, b) = self.support;
        let (c, d) = self.core;
        if x <= c {
            let s = 1.0 / (c - a);
            let [v, d1, d2] = smoothstep((x - a) * s);
            [v, d1 * s, d2 * s * s]
        } else if x >= d {
            let s = 1.0 / (b - d);
            let [v, d1, d2] = smoothstep((b - x) * s);
            [v, -d1 * s, d2 * s * s]
        } else {
            [1.0, 0.0, 0.0]
        }
    }

    fn breakpoints(&self) -> [f64; 4] {
        [self.support.0, self.core.0, self.core.1, self.support.1]
    }

    /// Whether `[lo, hi]` sees a constant window value.
    fn flat_on(&self, lo: f64, hi: f64) -> bool {
        (lo >= self.core.0 && hi <= self.core.1) || hi <= self.support.0 || lo >= self.support.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    ClosedForm,
    PropagatedSolution,
    Windowed,
}

/// A solution of `-f'' + u f = lambda f` fixed by its data at `anchor`.
#[derive(Clone, Debug)]
pub struct SolutionData {
    pub potential: Potential,
    pub lambda: Complex64,
    pub anchor: f64,
    pub init: (Complex64, Complex64),
}

type Evaluator = Arc<dyn Fn(Complex64) -> Result<Jet> + Send + Sync>;

#[derive(Clone)]
enum Source {
    Closed(Evaluator),
    Series(LaurentSeries),
    Solution(SolutionData),
    Applied { potential: Potential, inner: Box<FunctionHandle> },
}

/// An element of the function space: evaluator, optional window, declared
/// singular points and Laurent data.
#[derive(Clone)]
pub struct FunctionHandle {
    source: Source,
    window: Option<Window>,
    poles: Vec<f64>,
    laurent: Vec<LaurentSeries>,
    provenance: Provenance,
}

impl fmt::Debug for FunctionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let source = match &self.source {
            Source::Closed(_) => "closed",
            Source::Series(_) => "series",
            Source::Solution(_) => "solution",
            Source::Applied { .. } => "applied",
        };
        f.debug_struct("FunctionHandle")
            .field("source", &source)
            .field("window", &self.window)
            .field("poles", &self.poles)
            .field("provenance", &self.provenance)
            .finish()
    }
}

fn conj_series(s: &LaurentSeries) -> LaurentSeries {
    LaurentSeries::from_coeffs(s.basepoint(), s.trunc(), s.terms().map(|(e, c)| (e, c.conj())))
}

fn conj_jet(j: Jet) -> Jet {
    [j[0].conj(), j[1].conj(), j[2].conj()]
}

/// Context for deriving Laurent data that was not declared.
struct LaurentCtx<'a> {
    radius: f64,
    contour: &'a ContourOptions,
    propagate: &'a PropagateOptions,
}

const SAMPLES: usize = 64;
const FIT_ORDER: usize = 40;

impl FunctionHandle {
    /// Closed-form function given by its jet; `poles` lists the real points
    /// where it may be singular.
    pub fn closed_form<F>(f: F, poles: &[f64]) -> FunctionHandle
    where
        F: Fn(Complex64) -> Result<Jet> + Send + Sync + 'static,
    {
        FunctionHandle {
            source: Source::Closed(Arc::new(f)),
            window: None,
            poles: poles.to_vec(),
            laurent: Vec::new(),
            provenance: Provenance::ClosedForm,
        }
    }

    /// `(z - x)^exponent`.
    pub fn monomial(x: f64, exponent: i32) -> FunctionHandle {
        FunctionHandle::series(LaurentSeries::monomial(x, exponent, Complex64::new(1.0, 0.0)))
    }

    /// A series evaluated by summation; it is also the declared Laurent data
    /// at its basepoint.
    pub fn series(s: LaurentSeries) -> FunctionHandle {
        let singular = s.terms().any(|(e, _)| e < 0);
        FunctionHandle {
            poles: if singular { vec![s.basepoint()] } else { Vec::new() },
            laurent: vec![s.clone()],
            source: Source::Series(s),
            window: None,
            provenance: Provenance::ClosedForm,
        }
    }

    /// Solution of `L f = lambda f` with `(f, f')(anchor) = init`.
    pub fn solution(u: &Potential, lambda: Complex64, anchor: f64, init: (Complex64, Complex64)) -> FunctionHandle {
        FunctionHandle {
            source: Source::Solution(SolutionData {
                potential: u.clone(),
                lambda,
                anchor,
                init,
            }),
            window: None,
            poles: Vec::new(),
            laurent: Vec::new(),
            provenance: Provenance::PropagatedSolution,
        }
    }

    /// Constant 1 cut off by `w`: a positive bump.
    pub fn bump(w: Window) -> FunctionHandle {
        FunctionHandle::series(LaurentSeries::monomial(0.0, 0, Complex64::new(1.0, 0.0))).windowed(w)
    }

    pub fn windowed(mut self, w: Window) -> FunctionHandle {
        self.window = Some(w);
        self.provenance = Provenance::Windowed;
        self
    }

    /// Declares Laurent data at its basepoint.
    pub fn with_laurent(mut self, s: LaurentSeries) -> FunctionHandle {
        let x = s.basepoint();
        self.laurent.retain(|l| l.basepoint() != x);
        if !self.poles.contains(&x) {
            self.poles.push(x);
        }
        self.laurent.push(s);
        self
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn window(&self) -> Option<&Window> {
        self.window.as_ref()
    }

    pub fn declared_laurent(&self) -> &[LaurentSeries] {
        &self.laurent
    }

    /// `g*(z) = conj(g(conj z))`. Propagated solutions become solutions of
    /// the conjugated equation with conjugated data.
    pub fn star_conjugate(&self) -> FunctionHandle {
        let source = match &self.source {
            Source::Closed(f) => {
                let f = Arc::clone(f);
                Source::Closed(Arc::new(move |z: Complex64| f(z.conj()).map(conj_jet)))
            }
            Source::Series(s) => Source::Series(conj_series(s)),
            Source::Solution(s) => Source::Solution(SolutionData {
                potential: s.potential.conjugate(),
                lambda: s.lambda.conj(),
                anchor: s.anchor,
                init: (s.init.0.conj(), s.init.1.conj()),
            }),
            Source::Applied { potential, inner } => Source::Applied {
                potential: potential.conjugate(),
                inner: Box::new(inner.star_conjugate()),
            },
        };
        FunctionHandle {
            source,
            window: self.window,
            poles: self.poles.clone(),
            laurent: self.laurent.iter().map(conj_series).collect(),
            provenance: self.provenance,
        }
    }

    fn solution_data(&self) -> Option<&SolutionData> {
        match &self.source {
            Source::Solution(s) => Some(s),
            Source::Applied { inner, .. } => inner.solution_data(),
            _ => None,
        }
    }

    /// Real points in `(a, b)` where the handle may be singular.
    pub fn poles_in(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.poles.iter().copied().filter(|&p| p > a && p < b).collect();
        match &self.source {
            Source::Solution(s) => out.extend(s.potential.real_poles_in(a, b)),
            Source::Applied { potential, inner } => {
                out.extend(potential.real_poles_in(a, b));
                out.extend(inner.poles_in(a, b));
            }
            _ => {}
        }
        out.retain(|&p| p > a && p < b);
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn window_jet(&self, z: Complex64) -> Option<[f64; 3]> {
        self.window.map(|w| w.jet(z.re))
    }

    /// Jet of the unwindowed function given the propagated state.
    fn raw_jet(&self, z: Complex64, state: (Complex64, Complex64)) -> Result<Jet> {
        match &self.source {
            Source::Closed(f) => f(z),
            Source::Series(s) => Ok(s.eval_jet(z)),
            Source::Solution(s) => {
                let q = s.potential.eval(z)? - s.lambda;
                Ok([state.0, state.1, q * state.0])
            }
            Source::Applied { .. } => Err(Error::Domain(
                "derivatives of an operator image are not available".into(),
            )),
        }
    }

    fn jet_with(&self, z: Complex64, state: (Complex64, Complex64)) -> Result<Jet> {
        let f = self.raw_jet(z, state)?;
        Ok(match self.window_jet(z) {
            None => f,
            Some([w, w1, w2]) => [
                f[0] * w,
                f[0] * w1 + f[1] * w,
                f[0] * w2 + f[1] * (2.0 * w1) + f[2] * w,
            ],
        })
    }

    fn value_with(&self, z: Complex64, state: (Complex64, Complex64)) -> Result<Complex64> {
        if let Source::Applied { potential, inner } = &self.source {
            let j = inner.jet_with(z, state)?;
            return Ok(potential.eval(z)? * j[0] - j[2]);
        }
        match self.window_jet(z) {
            Some([0.0, _, _]) => Ok(ZERO),
            Some([w, _, _]) => Ok(self.raw_jet(z, state)?[0] * w),
            None => Ok(self.raw_jet(z, state)?[0]),
        }
    }

    /// State `(f, f')` of the underlying solution at the real point `x`.
    fn state_at(&self, x: f64, copts: &ContourOptions, popts: &PropagateOptions) -> Result<(Complex64, Complex64)> {
        let Some(s) = self.solution_data() else {
            return Ok((ZERO, ZERO));
        };
        if x == s.anchor {
            return Ok(s.init);
        }
        let c = Contour::around(&s.potential, s.anchor, x, copts)?;
        let st = propagate(&s.potential, s.lambda, &c, s.init, None, popts)?;
        Ok((st.value, st.derivative))
    }

    /// Jet at a point; propagated solutions are continued from their anchor
    /// along the real axis (upper detours) and then vertically.
    pub fn jet(&self, z: Complex64) -> Result<Jet> {
        let copts = ContourOptions::default();
        let popts = PropagateOptions::with_rtol(PAIRING_RTOL);
        let state = match self.solution_data() {
            None => (ZERO, ZERO),
            Some(s) => {
                let mut st = self.state_at(z.re, &copts, &popts)?;
                if z.im != 0.0 {
                    let leg = Contour {
                        x0: z.re,
                        x1: z.re,
                        radius: 0.0,
                        poles: Vec::new(),
                        legs: vec![Leg::Segment { from: Complex64::new(z.re, 0.0), to: z }],
                    };
                    let p = propagate(&s.potential, s.lambda, &leg, st, None, &popts)?;
                    st = (p.value, p.derivative);
                }
                st
            }
        };
        self.jet_with(z, state)
    }

    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        match &self.source {
            Source::Applied { .. } => {
                let copts = ContourOptions::default();
                let popts = PropagateOptions::with_rtol(PAIRING_RTOL);
                let st = self.state_at(z.re, &copts, &popts)?;
                if z.im != 0.0 && self.solution_data().is_some() {
                    return Err(Error::Domain("operator image of a solution off the real axis".into()));
                }
                self.value_with(z, st)
            }
            _ => Ok(self.jet(z)?[0]),
        }
    }

    /// Laurent data at `x`: declared, else derived from the evaluator.
    fn laurent_at(&self, x: f64, ctx: &LaurentCtx<'_>) -> Result<LaurentSeries> {
        if let Some(w) = &self.window {
            if !w.flat_on(x - ctx.radius, x + ctx.radius) {
                return Err(Error::Domain(format!("window is not flat around the pole {x}")));
            }
            if w.jet(x)[0] == 0.0 {
                return Ok(LaurentSeries::zero(x, SAMPLES as i32 / 2));
            }
        }
        if let Some(s) = self.laurent.iter().find(|s| s.basepoint() == x) {
            return Ok(s.clone());
        }
        match &self.source {
            Source::Closed(f) => {
                let f = Arc::clone(f);
                sample_laurent(&move |z| Ok(f(z)?[0]), x, 0.5 * ctx.radius)
            }
            Source::Series(s) if s.basepoint() == x => Ok(s.clone()),
            Source::Series(s) => {
                let s = s.clone();
                sample_laurent(&move |z: Complex64| Ok(s.eval(z)), x, 0.5 * ctx.radius)
            }
            Source::Solution(s) => fit_solution(self, s, x, ctx),
            Source::Applied { potential, inner } => {
                let inner = inner.laurent_at(x, ctx)?;
                let u = potential.laurent_at(x, inner.trunc().max(0) + 4)?;
                u.mul(&inner)?.sub(&inner.derivative().derivative())
            }
        }
    }

    /// Largest relative mismatch between the evaluator and the Laurent data
    /// on a circle of radius `r` around `x`.
    pub fn laurent_mismatch(&self, x: f64, r: f64) -> Result<f64> {
        let copts = ContourOptions::default().with_radius(2.0 * r);
        let popts = PropagateOptions::with_rtol(PAIRING_RTOL);
        let ctx = LaurentCtx {
            radius: 2.0 * r,
            contour: &copts,
            propagate: &popts,
        };
        let s = self.laurent_at(x, &ctx)?;
        let mut worst = 0.0f64;
        for k in 0..8 {
            let y = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 8.0);
            let direct = self.eval(Complex64::new(x, 0.0) + y)?;
            worst = worst.max((direct - s.eval(y)).norm() / direct.norm().max(1e-300));
        }
        Ok(worst)
    }
}

/// Laurent coefficients by the trapezoid rule on a circle of radius `rho`.
fn sample_laurent<F>(f: &F, x: f64, rho: f64) -> Result<LaurentSeries>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let m = SAMPLES;
    let values: Vec<Complex64> = (0..m)
        .map(|k| f(Complex64::new(x, 0.0) + Complex64::from_polar(rho, 2.0 * std::f64::consts::PI * k as f64 / m as f64)))
        .collect::<Result<_>>()?;
    let peak = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let half = (m / 2) as i32;
    let mut terms = Vec::new();
    for n in (1 - half)..half {
        let mut c = ZERO;
        for (k, v) in values.iter().enumerate() {
            let theta = 2.0 * std::f64::consts::PI * (k as i64 * n as i64).rem_euclid(m as i64) as f64 / m as f64;
            c += v * Complex64::from_polar(1.0, -theta);
        }
        c /= m as f64;
        if c.norm() > 1e-13 * peak {
            terms.push((n, c / rho.powi(n)));
        }
    }
    Ok(LaurentSeries::from_coeffs(x, half, terms))
}

/// Expresses a propagated solution near the pole `x` in the Frobenius basis.
fn fit_solution(h: &FunctionHandle, s: &SolutionData, x: f64, ctx: &LaurentCtx<'_>) -> Result<LaurentSeries> {
    let profile = s.potential.singularity_profile(x, FIT_ORDER as i32 + 4)?;
    if !profile.is_admissible() {
        return Err(Error::NonAdmissiblePole {
            location: x,
            reason: profile.reason.unwrap_or_default(),
        });
    }
    let n = profile.index;
    let lower = local_solution(&profile.laurent, n, s.lambda, Branch::Lower, FIT_ORDER)?;
    if let Some(obs) = lower.obstruction {
        if obs.norm() > OBSTRUCTION_TOL * lower.scale {
            return Err(Error::LogTermRequired {
                location: x,
                magnitude: obs.norm(),
            });
        }
    }
    let upper = local_solution(&profile.laurent, n, s.lambda, Branch::Upper, FIT_ORDER)?.series;
    let lower = lower.series;
    let rho = 0.5 * ctx.radius;
    let p = x - rho;
    let (f, fp) = h.state_at(p, ctx.contour, ctx.propagate)?;
    let y = Complex64::new(-rho, 0.0);
    let lj = lower.eval_jet(y);
    let uj = upper.eval_jet(y);
    let det = lj[0] * uj[1] - uj[0] * lj[1];
    let alpha = (f * uj[1] - uj[0] * fp) / det;
    let beta = (lj[0] * fp - f * lj[1]) / det;
    lower.scale(alpha).add(&upper.scale(beta))
}

/// `L f = -f'' + u f` as a handle.
pub fn apply_operator(u: &Potential, f: &FunctionHandle) -> FunctionHandle {
    FunctionHandle {
        poles: f.poles.clone(),
        laurent: Vec::new(),
        source: Source::Applied {
            potential: u.clone(),
            inner: Box::new(f.clone()),
        },
        window: None,
        provenance: f.provenance,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerOptions {
    pub contour: ContourOptions,
    pub propagate: PropagateOptions,
    pub residue_tol: f64,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            contour: ContourOptions::default(),
            propagate: PropagateOptions::with_rtol(PAIRING_RTOL),
            residue_tol: RESIDUE_TOL,
        }
    }
}

impl InnerOptions {
    pub fn with_contour(contour: ContourOptions) -> Self {
        InnerOptions {
            contour,
            ..Default::default()
        }
    }
}

/// `<f, g>` over `[a, b]`.
pub fn inner_product(f: &FunctionHandle, g: &FunctionHandle, interval: (f64, f64), opts: &InnerOptions) -> Result<Complex64> {
    pairing(f, &g.star_conjugate(), interval, opts)
}

fn pairing(f: &FunctionHandle, gs: &FunctionHandle, (a, b): (f64, f64), opts: &InnerOptions) -> Result<Complex64> {
    let mut poles = f.poles_in(a, b);
    poles.extend(gs.poles_in(a, b));
    poles.sort_by(f64::total_cmp);
    poles.dedup();
    for h in [f, gs] {
        if let Some(&p) = h.poles.iter().find(|&&p| p == a || p == b) {
            return Err(Error::PoleAtEndpoint(p));
        }
    }
    let radius = opts.contour.radius.unwrap_or_else(|| default_radius(a, b, &poles));
    let contour = build_contour(a, b, &poles, radius, &opts.contour.sides)?;

    let ctx = LaurentCtx {
        radius,
        contour: &opts.contour,
        propagate: &opts.propagate,
    };
    for &x in &poles {
        for h in [f, gs] {
            if let Some(w) = &h.window {
                if !w.flat_on(x - radius, x + radius) {
                    return Err(Error::Domain(format!(
                        "detour around {x} crosses a window ramp"
                    )));
                }
            }
        }
        let lf = f.laurent_at(x, &ctx)?;
        let lg = gs.laurent_at(x, &ctx)?;
        let res = pair_residue(&lf, &lg)?;
        let scale = (lf.principal_part().max_abs().max(1.0)) * (lg.principal_part().max_abs().max(1.0));
        if res.norm() > opts.residue_tol * scale {
            return Err(Error::ResidueObstruction {
                pole: x,
                re: res.re,
                im: res.im,
            });
        }
    }

    let mut cuts = Vec::new();
    for h in [f, gs] {
        if let Some(w) = &h.window {
            cuts.extend(w.breakpoints());
        }
    }
    let contour = contour.split_at(&cuts);

    let sf = f.state_at(a, &opts.contour, &opts.propagate)?;
    let sg = gs.state_at(a, &opts.contour, &opts.propagate)?;
    let fsol = f.solution_data().map(|s| (s.potential.clone(), s.lambda));
    let gsol = gs.solution_data().map(|s| (s.potential.clone(), s.lambda));
    let mut y = [sf.0, sf.1, sg.0, sg.1, ZERO, ZERO];
    let mut rhs = |z: Complex64, v: Complex64, y: &[Complex64; 6]| -> Result<[Complex64; 6]> {
        let mut dy = [ZERO; 6];
        if let Some((u, lam)) = &fsol {
            dy[0] = y[1] * v;
            dy[1] = (u.eval(z)? - lam) * y[0] * v;
        }
        if let Some((u, lam)) = &gsol {
            dy[2] = y[3] * v;
            dy[3] = (u.eval(z)? - lam) * y[2] * v;
        }
        let fv = f.value_with(z, (y[0], y[1]))?;
        let integrand = if fv == ZERO { ZERO } else { fv * gs.value_with(z, (y[2], y[3]))? * v };
        dy[4] = integrand;
        dy[5] = Complex64::new(integrand.norm(), 0.0);
        Ok(dy)
    };
    integrate_along(&contour, &mut y, &[0, 0, 1, 1, 2, 2], &[0.0, 0.0, 1.0], &mut rhs, &opts.propagate)?;
    Ok(y[4])
}

/// Gram matrix and signature `(n_plus, n_minus, n_zero)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramResult {
    pub matrix: Vec<Vec<Complex64>>,
    pub signature: [usize; 3],
    pub tol: f64,
    #[serde(default)]
    pub eigenvalues: Vec<f64>,
}

impl GramResult {
    pub fn n_minus(&self) -> usize {
        self.signature[1]
    }
}

pub fn gram_signature(
    family: &[FunctionHandle],
    interval: (f64, f64),
    tol: f64,
    opts: &InnerOptions,
) -> Result<GramResult> {
    let n = family.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let values: Vec<Complex64> = pairs
        .par_iter()
        .map(|&(i, j)| inner_product(&family[i], &family[j], interval, opts))
        .collect::<Result<_>>()?;
    let g = DMatrix::from_fn(n, n, |i, j| values[i * n + j]);
    let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let skew = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)] - g[(j, i)].conj()).norm())
        .fold(0.0, f64::max);
    let skew_tol = tol * scale.max(1.0);
    if skew > skew_tol {
        return Err(Error::NonHermitian { skew, tol: skew_tol });
    }
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let mut eig: Vec<f64> = if n == 0 {
        Vec::new()
    } else {
        h.symmetric_eigenvalues().iter().copied().collect()
    };
    eig.sort_by(f64::total_cmp);
    let threshold = tol * eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
    let mut signature = [0usize; 3];
    for &e in &eig {
        if e.abs() <= threshold {
            signature[2] += 1;
        } else if e > 0.0 {
            signature[0] += 1;
        } else {
            signature[1] += 1;
        }
    }
    Ok(GramResult {
        matrix: (0..n).map(|i| (0..n).map(|j| g[(i, j)]).collect()).collect(),
        signature,
        tol,
        eigenvalues: eig,
    })
}

/// `[f g*' - f' g*]` at `b` minus at `a`.
pub fn boundary_bracket(f: &FunctionHandle, g: &FunctionHandle, (a, b): (f64, f64)) -> Result<Complex64> {
    let gs = g.star_conjugate();
    let at = |x: f64| -> Result<Complex64> {
        let z = Complex64::new(x, 0.0);
        let fj = f.jet(z)?;
        let gj = gs.jet(z)?;
        Ok(fj[0] * gj[1] - fj[1] * gj[0])
    };
    Ok(at(b)? - at(a)?)
}

/// `<L f, g> - <f, L g>`; for real `u` it equals [`boundary_bracket`].
pub fn adjoint_defect(
    u: &Potential,
    f: &FunctionHandle,
    g: &FunctionHandle,
    interval: (f64, f64),
    opts: &InnerOptions,
) -> Result<Complex64> {
    let lf = apply_operator(u, f);
    let lg = apply_operator(u, g);
    Ok(inner_product(&lf, g, interval, opts)? - inner_product(f, &lg, interval, opts)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalCheck {
    pub pole: f64,
    pub inside: bool,
    /// Largest coefficient left after projecting onto the subspace.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidueCheck {
    pub pole: f64,
    pub partner: usize,
    pub residue: Complex64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub verdict: bool,
    pub principal_parts: Vec<PrincipalCheck>,
    pub residues: Vec<ResidueCheck>,
    pub violations: Vec<String>,
}

/// Checks that the principal parts of `f` lie in the prescribed subspaces
/// and that `f g` has no `y^-1` term for each partner `g`. The second
/// condition constrains the regular parts too.
pub fn membership_check(
    f: &FunctionHandle,
    space: &[(f64, PrincipalSubspace)],
    partners: &[FunctionHandle],
) -> MembershipReport {
    let copts = ContourOptions::default();
    let popts = PropagateOptions::with_rtol(PAIRING_RTOL);
    let mut report = MembershipReport {
        verdict: true,
        principal_parts: Vec::new(),
        residues: Vec::new(),
        violations: Vec::new(),
    };
    let tol = 1e-9;
    for (x, sub) in space {
        let ctx = LaurentCtx {
            radius: 0.1f64.min(0.5 * f.isolation(*x)),
            contour: &copts,
            propagate: &popts,
        };
        let lf = match f.laurent_at(*x, &ctx) {
            Ok(s) => s,
            Err(e) => {
                report.verdict = false;
                report.violations.push(format!("no Laurent data at {x}: {e}"));
                continue;
            }
        };
        match sub.decompose(&lf) {
            Ok((_, residual)) => {
                let scale = lf.principal_part().max_abs().max(1.0);
                let inside = residual <= tol * scale;
                if !inside {
                    report.verdict = false;
                    report
                        .violations
                        .push(format!("principal part at {x} leaves the subspace (residual {residual:e})"));
                }
                report.principal_parts.push(PrincipalCheck { pole: *x, inside, residual });
            }
            Err(e) => {
                report.verdict = false;
                report.violations.push(format!("principal part at {x}: {e}"));
            }
        }
        for (k, g) in partners.iter().enumerate() {
            let res = g.laurent_at(*x, &ctx).and_then(|lg| {
                let scale = lf.principal_part().max_abs().max(1.0) * lg.principal_part().max_abs().max(1.0);
                pair_residue(&lf, &lg).map(|r| (r, scale))
            });
            match res {
                Ok((r, scale)) => {
                    let ok = r.norm() <= tol * scale;
                    if !ok {
                        report.verdict = false;
                        report.violations.push(format!(
                            "product with partner #{k} has y^-1 coefficient {} at {x}",
                            r
                        ));
                    }
                    report.residues.push(ResidueCheck {
                        pole: *x,
                        partner: k,
                        residue: r,
                        ok,
                    });
                }
                Err(e) => {
                    report.verdict = false;
                    report.violations.push(format!("partner #{k} at {x}: {e}"));
                }
            }
        }
    }
    report
}

impl FunctionHandle {
    fn isolation(&self, x: f64) -> f64 {
        let mut d = f64::INFINITY;
        for &p in &self.poles {
            if p != x {
                d = d.min((p - x).abs());
            }
        }
        if let Some(s) = self.solution_data() {
            d = d.min(s.potential.isolation_radius(x));
        }
        d
    }
}
