//! Transfer matrices, monodromy and the Floquet discriminant.
//!
//! Convention: `t[i][j]` is the `j`-th derivative at `x1` of the solution
//! normalized by `f_i^(k)(x0) = delta_ik`. Equivalently
//! `f_i^{x0} = sum_j t[i][j] f_j^{x1}`, so transfer matrices compose as
//! `T(x0, x2) = T(x0, x1) T(x1, x2)`. The matrix acting on the column
//! `(f(x0), f'(x0))` is the transpose.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{propagate, Contour, ContourOptions, Leg, PropagateOptions, Sides};
use crate::error::{Error, Result};
use crate::frobenius::{frobenius_solution, Branch};
use crate::potential::Potential;
use crate::series::LaurentSeries;

/// Default propagator tolerance for transfer matrices.
pub const TRANSFER_RTOL: f64 = 1e-12;

type M2 = [[Complex64; 2]; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub t: M2,
    pub x0: f64,
    pub x1: f64,
    pub lambda: Complex64,
    pub sides: Sides,
    pub radius: f64,
}

fn mat_mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

impl TransferMatrix {
    pub fn det(&self) -> Complex64 {
        self.t[0][0] * self.t[1][1] - self.t[0][1] * self.t[1][0]
    }

    pub fn trace(&self) -> Complex64 {
        self.t[0][0] + self.t[1][1]
    }

    /// Matrix sending `(f(x0), f'(x0))` to `(f(x1), f'(x1))`.
    pub fn column_propagator(&self) -> M2 {
        [[self.t[0][0], self.t[1][0]], [self.t[0][1], self.t[1][1]]]
    }

    /// `T(x0, x2)` from `T(x0, x1)` and `T(x1, x2)`.
    pub fn compose(&self, next: &TransferMatrix) -> Result<TransferMatrix> {
        if self.x1 != next.x0 {
            return Err(Error::BasepointMismatch {
                left: self.x1,
                right: next.x0,
            });
        }
        if self.lambda != next.lambda {
            return Err(Error::InvalidParameters("spectral parameters differ".into()));
        }
        Ok(TransferMatrix {
            t: mat_mul(&self.t, &next.t),
            x0: self.x0,
            x1: next.x1,
            lambda: self.lambda,
            sides: self.sides.clone(),
            radius: self.radius.min(next.radius),
        })
    }

    /// Floquet multipliers, the eigenvalues of the matrix.
    pub fn multipliers(&self) -> (Complex64, Complex64) {
        let tr = self.trace();
        let disc = (tr * tr - 4.0 * self.det()).sqrt();
        ((tr + disc) / 2.0, (tr - disc) / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    pub contour: ContourOptions,
    pub propagate: PropagateOptions,
    /// Cross detour arcs with the local Frobenius basis when every solution
    /// is meromorphic at the pole; otherwise the arc is integrated.
    #[serde(default = "yes")]
    pub series_arcs: bool,
}

fn yes() -> bool {
    true
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            contour: ContourOptions::default(),
            propagate: PropagateOptions::with_rtol(TRANSFER_RTOL),
            series_arcs: true,
        }
    }
}

impl TransferOptions {
    pub fn with_sides(sides: Sides) -> Self {
        TransferOptions {
            contour: ContourOptions::with_sides(sides),
            ..Default::default()
        }
    }
}

pub fn transfer_matrix(
    u: &Potential,
    lambda: Complex64,
    x0: f64,
    x1: f64,
    opts: &TransferOptions,
) -> Result<TransferMatrix> {
    let contour = Contour::around(u, x0, x1, &opts.contour)?;
    transfer_along(u, lambda, &contour, opts)
}

fn transfer_along(u: &Potential, lambda: Complex64, contour: &Contour, opts: &TransferOptions) -> Result<TransferMatrix> {
    let mut legs = contour.legs.clone();
    let mut connections: Vec<Option<M2>> = vec![None; legs.len()];
    if opts.series_arcs {
        for i in 0..legs.len() {
            if let Some((m, from, to)) = arc_connection(u, lambda, contour, &legs, i)? {
                if let Some(Leg::Segment { to: end, .. }) = i.checked_sub(1).and_then(|j| legs.get_mut(j)) {
                    *end = from;
                }
                if let Some(Leg::Segment { from: start, .. }) = legs.get_mut(i + 1) {
                    *start = to;
                }
                connections[i] = Some(m);
            }
        }
    }
    let mut t = IDENTITY;
    let mut run: Vec<Leg> = Vec::new();
    for (leg, conn) in legs.into_iter().zip(connections) {
        match conn {
            Some(m) => {
                t = mat_mul(&t, &integrate_run(u, lambda, contour, &mut run, &opts.propagate)?);
                t = mat_mul(&t, &m);
            }
            None => run.push(leg),
        }
    }
    t = mat_mul(&t, &integrate_run(u, lambda, contour, &mut run, &opts.propagate)?);
    Ok(TransferMatrix {
        t,
        x0: contour.x0,
        x1: contour.x1,
        lambda,
        sides: opts.contour.sides.clone(),
        radius: contour.radius,
    })
}

const IDENTITY: M2 = [
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
    [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
];

/// Transfer matrix along `run` by integration; empties `run`.
fn integrate_run(
    u: &Potential,
    lambda: Complex64,
    contour: &Contour,
    run: &mut Vec<Leg>,
    popts: &PropagateOptions,
) -> Result<M2> {
    if run.is_empty() {
        return Ok(IDENTITY);
    }
    let piece = Contour {
        legs: std::mem::take(run),
        ..contour.clone()
    };
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let f0 = propagate(u, lambda, &piece, (one, zero), None, popts)?;
    let f1 = propagate(u, lambda, &piece, (zero, one), None, popts)?;
    Ok([[f0.value, f0.derivative], [f1.value, f1.derivative]])
}

const ARC_ORDERS: [usize; 3] = [48, 96, 192];
/// Largest tolerated ratio of `sum |term|` to `|sum|` in a series evaluation.
const ARC_CANCELLATION: f64 = 1e3;

/// Replaces the arc `legs[i]` by the connection `P(a)^-1 P(b)`, with `P` the
/// jets of the lower and upper Frobenius solutions and `a`, `b` the real
/// points at distance `R` before and after the pole. `R` is the largest
/// radius, down to the arc radius, at which both series are accurate; the
/// neighbouring segments are shortened to match. Returns `None` when the
/// pole carries logarithms or no radius works.
fn arc_connection(
    u: &Potential,
    lambda: Complex64,
    contour: &Contour,
    legs: &[Leg],
    i: usize,
) -> Result<Option<(M2, Complex64, Complex64)>> {
    let Leg::Arc { center, radius, .. } = legs[i] else {
        return Ok(None);
    };
    let iso = u.isolation_radius(center);
    if radius > 0.5 * iso || !u.singularity_profile(center, 4)?.is_admissible() {
        return Ok(None);
    }
    let c = Complex64::new(center, 0.0);
    let dir_in = ((legs[i].start() - c) / radius).re.signum();
    let dir_out = ((legs[i].end() - c) / radius).re.signum();
    let mut room = radius;
    let before = i.checked_sub(1).map(|j| &legs[j]);
    let after = legs.get(i + 1);
    if let (Some(Leg::Segment { from, .. }), Some(Leg::Segment { to, .. })) = (before, after) {
        let others = contour
            .poles
            .iter()
            .filter(|&&p| p != center)
            .map(|p| 0.45 * (p - center).abs())
            .fold(f64::INFINITY, f64::min);
        room = (from - c).norm().min((to - c).norm()).min(others).min(0.5 * iso).max(radius);
    }
    let mut series: Vec<(LaurentSeries, LaurentSeries)> = Vec::new();
    for order in ARC_ORDERS {
        let lower = match frobenius_solution(u, center, lambda, Branch::Lower, order) {
            Ok(s) => s,
            Err(Error::LogTermRequired { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        series.push((lower, frobenius_solution(u, center, lambda, Branch::Upper, order)?));
    }
    let mut r = room;
    loop {
        let (a, b) = if r > radius {
            (c + dir_in * r, c + dir_out * r)
        } else {
            (legs[i].start(), legs[i].end())
        };
        for (lower, upper) in &series {
            if let (Some(p0), Some(p1)) = (
                connection_jets(lower, upper, a, r),
                connection_jets(lower, upper, b, r),
            ) {
                let det = p0[0][0] * p0[1][1] - p0[0][1] * p0[1][0];
                let inv = [[p0[1][1] / det, -p0[0][1] / det], [-p0[1][0] / det, p0[0][0] / det]];
                return Ok(Some((mat_mul(&inv, &p1), a, b)));
            }
        }
        if r <= radius {
            return Ok(None);
        }
        r = (0.5 * r).max(radius);
    }
}

/// Rows `(f, f')` of both solutions at `z`, or `None` when the truncated
/// tails or cancellation are too large for full precision.
fn connection_jets(lower: &LaurentSeries, upper: &LaurentSeries, z: Complex64, radius: f64) -> Option<M2> {
    let mut rows = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (row, s) in rows.iter_mut().zip([lower, upper]) {
        let mut magnitude = [0.0f64; 2];
        let mut tail = 0.0f64;
        let last = s.trunc() - 1;
        for (e, c) in s.terms() {
            let m = c.norm() * radius.powi(e);
            magnitude[0] += m;
            magnitude[1] += m * e.abs() as f64 / radius;
            if e > last - 4 {
                tail = tail.max(m);
            }
        }
        let jet = s.eval_jet(z);
        if tail > f64::EPSILON * 1e-2 * jet[0].norm()
            || magnitude[0] > ARC_CANCELLATION * jet[0].norm()
            || magnitude[1] > ARC_CANCELLATION * jet[1].norm()
        {
            return None;
        }
        *row = [jet[0], jet[1]];
    }
    Some(rows)
}

fn require_period(u: &Potential) -> Result<f64> {
    u.period()
        .ok_or_else(|| Error::Aperiodic(format!("{} potential has no period", u.spec().family_name())))
}

/// Midpoint of the largest pole-free subinterval of `[0, T)`.
pub fn default_base_point(u: &Potential) -> Result<f64> {
    let period = require_period(u)?;
    let mut poles: Vec<f64> = u
        .real_poles_in(-period, 2.0 * period)
        .into_iter()
        .map(|p| p.rem_euclid(period))
        .collect();
    poles.sort_by(f64::total_cmp);
    poles.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * period);
    if poles.is_empty() {
        return Ok(0.5 * period);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for (i, &p) in poles.iter().enumerate() {
        let next = if i + 1 < poles.len() {
            poles[i + 1]
        } else {
            poles[0] + period
        };
        if next - p > best.0 {
            best = (next - p, 0.5 * (p + next));
        }
    }
    Ok(best.1.rem_euclid(period))
}

pub fn monodromy(
    u: &Potential,
    lambda: Complex64,
    x0: Option<f64>,
    opts: &TransferOptions,
) -> Result<TransferMatrix> {
    let period = require_period(u)?;
    let x0 = match x0 {
        Some(x) => x,
        None => default_base_point(u)?,
    };
    transfer_matrix(u, lambda, x0, x0 + period, opts)
}

/// Floquet discriminant `tr M(lambda)`.
pub fn discriminant(u: &Potential, lambda: Complex64, x0: Option<f64>, opts: &TransferOptions) -> Result<Complex64> {
    Ok(monodromy(u, lambda, x0, opts)?.trace())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantRow {
    pub lambda: Complex64,
    pub delta: Option<Complex64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Evaluates the discriminant on a grid in parallel. Rows follow the grid;
/// a failed point is flagged and the sweep continues.
pub fn discriminant_sweep(
    u: &Potential,
    grid: &[Complex64],
    x0: Option<f64>,
    opts: &TransferOptions,
) -> Result<Vec<DiscriminantRow>> {
    let period = require_period(u)?;
    let x0 = match x0 {
        Some(x) => x,
        None => default_base_point(u)?,
    };
    let contour = Contour::around(u, x0, x0 + period, &opts.contour)?;
    Ok(grid
        .par_iter()
        .map(|&lambda| {
            match transfer_along(u, lambda, &contour, opts) {
                Ok(m) => DiscriminantRow {
                    lambda,
                    delta: Some(m.trace()),
                    error: None,
                },
                Err(e) => {
                    log::warn!("discriminant failed at {lambda}: {e}");
                    DiscriminantRow {
                        lambda,
                        delta: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect())
}

/// `lambda_re,lambda_im,delta_re,delta_im` with full precision; failed rows
/// carry `NaN`.
pub fn discriminant_csv(rows: &[DiscriminantRow]) -> String {
    let mut out = String::from("lambda_re,lambda_im,delta_re,delta_im\n");
    for r in rows {
        let d = r.delta.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.lambda.re, r.lambda.im, d.re, d.im
        ));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapKind {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub left: f64,
    pub right: f64,
    pub length: f64,
    pub kind: GapKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    /// Lower end of the scan; defaults to `-(1 + sup |background|)`.
    pub lambda_min: Option<f64>,
    /// Grid points per unit band spacing `pi / T` in `k = sqrt(lambda)`.
    pub samples_per_band: usize,
    pub base_point: Option<f64>,
    /// Roots closer than this bound a closed gap.
    pub closed_width: f64,
    /// A touching with `||Delta| - 2|` below this is a double root.
    pub closed_excess: f64,
    pub root_tol: f64,
    pub width_tol: f64,
    pub transfer: TransferOptions,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            lambda_min: None,
            samples_per_band: 16,
            base_point: None,
            closed_width: 1e-8,
            closed_excess: 1e-10,
            root_tol: 1e-10,
            width_tol: 1e-12,
            transfer: TransferOptions::default(),
        }
    }
}

/// Band edge found by bisection; `opens` when a gap starts to its right.
#[derive(Clone, Copy, Debug)]
struct Edge {
    at: f64,
    opens: bool,
}

enum Finding {
    Edge(Edge),
    Touch(f64),
}

fn scan_grid(lambda_min: f64, lambda_max: f64, period: f64, per_band: usize) -> Vec<f64> {
    let dk = std::f64::consts::PI / period / per_band as f64;
    let mut grid = Vec::new();
    if lambda_min < 0.0 {
        let n = ((-lambda_min).sqrt() / dk).ceil().max(per_band as f64) as usize;
        grid.extend((0..n).map(|i| lambda_min * (1.0 - i as f64 / n as f64)));
    }
    let k_max = lambda_max.sqrt();
    let n = (k_max / dk).ceil() as usize;
    let k0 = if lambda_min > 0.0 { lambda_min.sqrt() } else { 0.0 };
    grid.extend(
        (0..=n)
            .map(|i| (i as f64 * k_max / n as f64).powi(2))
            .filter(|&l| l >= k0 * k0 && l >= lambda_min),
    );
    if let Some(last) = grid.last_mut() {
        *last = lambda_max;
    }
    grid
}

/// Band edges and gaps of a periodic potential on `(lambda_min, lambda_max]`.
pub fn periodic_spectrum_gaps(u: &Potential, lambda_max: f64, opts: &GapOptions) -> Result<Vec<Gap>> {
    if !(lambda_max > 0.0) {
        return Err(Error::InvalidParameters("lambda_max must be positive".into()));
    }
    let period = require_period(u)?;
    let x0 = match opts.base_point {
        Some(x) => x,
        None => default_base_point(u)?,
    };
    let lambda_min = opts
        .lambda_min
        .unwrap_or_else(|| -(1.0 + u.background_bound()));
    if !(lambda_min < lambda_max) {
        return Err(Error::InvalidParameters("lambda_min must be below lambda_max".into()));
    }
    let contour = Contour::around(u, x0, x0 + period, &opts.transfer.contour)?;
    let excess = |lambda: f64| -> Result<f64> {
        let m = transfer_along(u, Complex64::new(lambda, 0.0), &contour, &opts.transfer)?;
        Ok(m.trace().re.abs() - 2.0)
    };

    let grid = scan_grid(lambda_min, lambda_max, period, opts.samples_per_band.max(4));
    let s: Vec<f64> = grid.par_iter().map(|&l| excess(l)).collect::<Result<_>>()?;

    enum Task {
        Root(f64, f64, f64),
        Peak(usize),
    }
    // Grid peaks own both adjacent cells; remaining sign changes are
    // bisected directly.
    let mut owned = vec![false; grid.len()];
    let mut tasks = Vec::new();
    for i in 1..grid.len() - 1 {
        if s[i] >= s[i - 1] && s[i] >= s[i + 1] && (s[i - 1] < 0.0 || s[i + 1] < 0.0) {
            tasks.push(Task::Peak(i));
            owned[i - 1] = true;
            owned[i] = true;
        }
    }
    for i in 0..grid.len() - 1 {
        if !owned[i] && (s[i] < 0.0) != (s[i + 1] < 0.0) {
            tasks.push(Task::Root(grid[i], grid[i + 1], s[i]));
        }
    }

    let bisect = |mut a: f64, mut b: f64, sa: f64| -> Result<Edge> {
        let opens = sa < 0.0;
        loop {
            let m = 0.5 * (a + b);
            let sm = excess(m)?;
            if sm.abs() < opts.root_tol || (b - a) < opts.width_tol * (1.0 + m.abs()) || m == a || m == b {
                return Ok(Edge { at: m, opens });
            }
            if (sm < 0.0) == opens {
                a = m;
            } else {
                b = m;
            }
        }
    };

    let findings: Vec<Vec<Finding>> = tasks
        .par_iter()
        .map(|task| -> Result<Vec<Finding>> {
            match *task {
                Task::Root(a, b, sa) => Ok(vec![Finding::Edge(bisect(a, b, sa)?)]),
                Task::Peak(i) => {
                    let (a, b) = (grid[i - 1], grid[i + 1]);
                    let (mut at, mut peak) = golden_max(&excess, a, b, 1e-9 * (1.0 + b.abs()))?;
                    if peak < s[i] {
                        (at, peak) = (grid[i], s[i]);
                    }
                    let edge_tol = 1e-6 * (b - a);
                    if at - a < edge_tol || b - at < edge_tol {
                        return Err(Error::GridTooCoarse(grid[i]));
                    }
                    if peak.abs() <= opts.closed_excess {
                        return Ok(vec![Finding::Touch(at)]);
                    }
                    let mut out = Vec::new();
                    if peak > 0.0 {
                        if s[i - 1] < 0.0 {
                            out.push(Finding::Edge(bisect(a, at, s[i - 1])?));
                        }
                        if s[i + 1] < 0.0 {
                            out.push(Finding::Edge(bisect(at, b, peak)?));
                        }
                    }
                    Ok(out)
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut edges = Vec::new();
    let mut gaps = Vec::new();
    for f in findings.into_iter().flatten() {
        match f {
            Finding::Edge(e) => edges.push(e),
            Finding::Touch(at) => gaps.push(Gap {
                left: at,
                right: at,
                length: 0.0,
                kind: GapKind::Closed,
            }),
        }
    }
    edges.sort_by(|a, b| a.at.total_cmp(&b.at));
    for w in edges.windows(2) {
        if w[0].opens && !w[1].opens {
            let (left, right) = (w[0].at, w[1].at);
            gaps.push(if right - left < opts.closed_width {
                let mid = 0.5 * (left + right);
                Gap {
                    left: mid,
                    right: mid,
                    length: 0.0,
                    kind: GapKind::Closed,
                }
            } else {
                Gap {
                    left,
                    right,
                    length: right - left,
                    kind: GapKind::Open,
                }
            });
        }
    }
    gaps.sort_by(|a, b| a.left.total_cmp(&b.left));
    log::debug!("{} band edges, {} gaps below {lambda_max}", edges.len(), gaps.len());
    Ok(gaps)
}

/// Golden-section search for the maximum of `f` on `[a, b]`.
fn golden_max<F>(f: &F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a < tol {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc >= fd { (c, fc) } else { (d, fd) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::Side;
    use crate::potential::{Background, PotentialSpec};

    const PI: f64 = std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn pot(spec: PotentialSpec) -> Potential {
        Potential::from_spec(&spec).unwrap()
    }

    fn close(a: &M2, b: &M2, tol: f64) -> bool {
        (0..2).all(|i| (0..2).all(|j| (a[i][j] - b[i][j]).norm() < tol))
    }

    #[test]
    fn free_transfer() {
        let u = pot(PotentialSpec::free());
        let opts = TransferOptions::default();
        let (lam, x0, x1) = (2.0f64, 0.3, 1.9);
        let k = lam.sqrt();
        let d = x1 - x0;
        let m = transfer_matrix(&u, c(lam), x0, x1, &opts).unwrap();
        let expect = [
            [c((k * d).cos()), c(-k * (k * d).sin())],
            [c((k * d).sin() / k), c((k * d).cos())],
        ];
        assert!(close(&m.t, &expect, 1e-10));
        let zero = transfer_matrix(&u, c(0.0), x0, x1, &opts).unwrap();
        assert!(close(&zero.t, &[[c(1.0), c(0.0)], [c(d), c(1.0)]], 1e-10));
    }

    /// Basis `e^{+-ix}(1/x -+ i)` of `-f'' + 2 f / x^2 = f`.
    fn bessel_pair(x: f64) -> [[Complex64; 2]; 2] {
        let i = Complex64::new(0.0, 1.0);
        let z = c(x);
        let e = (i * z).exp();
        let f = e * (z.inv() - i);
        let fp = e * (i / z + 1.0 - z.powi(-2));
        [[f, fp], [f.conj(), fp.conj()]]
    }

    #[test]
    fn inverse_square_transfer_matches_closed_form() {
        let u = pot(PotentialSpec::inverse_square(1));
        // rows (f, f') of the basis; t = P(x0)^{-1} P(x1)
        let p0 = bessel_pair(-1.0);
        let p1 = bessel_pair(1.0);
        let det = p0[0][0] * p0[1][1] - p0[1][0] * p0[0][1];
        let a = [
            [p0[1][1] / det, -p0[0][1] / det],
            [-p0[1][0] / det, p0[0][0] / det],
        ];
        let oracle = mat_mul(&a, &p1);
        for side in [Side::Upper, Side::Lower] {
            let m = transfer_matrix(&u, c(1.0), -1.0, 1.0, &TransferOptions::with_sides(Sides::All(side))).unwrap();
            assert!(close(&m.t, &oracle, 1e-9), "{:?} vs {oracle:?}", m.t);
            assert!((m.det() - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn series_and_integrated_arcs_agree() {
        let u = pot(PotentialSpec::inverse_square(3));
        let integrated = TransferOptions {
            series_arcs: false,
            contour: ContourOptions { radius: Some(0.3), ..Default::default() },
            ..Default::default()
        };
        for lam in [-2.0, 0.0, 7.5] {
            let a = transfer_matrix(&u, c(lam), -1.0, 1.3, &TransferOptions::default()).unwrap();
            let b = transfer_matrix(&u, c(lam), -1.0, 1.3, &integrated).unwrap();
            assert!(close(&a.t, &b.t, 1e-8 * b.t[0][0].norm().max(1.0)), "{:?} vs {:?}", a.t, b.t);
            assert!((a.det() - 1.0).norm() < 1e-12);
            let lower = TransferOptions::with_sides(Sides::All(Side::Lower));
            assert_eq!(transfer_matrix(&u, c(lam), -1.0, 1.3, &lower).unwrap().t, a.t);
        }
    }

    #[test]
    fn logarithmic_poles_are_integrated() {
        let u = pot(PotentialSpec::inverse_square(1).with_background(Background {
            poly: vec![0.0, 1.0],
            ..Default::default()
        }));
        let a = transfer_matrix(&u, c(1.0), -1.0, 1.0, &TransferOptions::default()).unwrap();
        let b = transfer_matrix(&u, c(1.0), -1.0, 1.0, &TransferOptions { series_arcs: false, ..Default::default() }).unwrap();
        assert_eq!(a.t, b.t);
    }

    #[test]
    fn composition_and_column_view() {
        let u = pot(PotentialSpec::csc_squared(1, 1.0).with_background(Background {
            cos: vec![0.0, 0.0, 0.3],
            ..Default::default()
        }));
        let opts = TransferOptions::default();
        let lam = Complex64::new(3.0, 0.5);
        let a = transfer_matrix(&u, lam, 0.5, 2.0, &opts).unwrap();
        let b = transfer_matrix(&u, lam, 2.0, 4.0, &opts).unwrap();
        let whole = transfer_matrix(&u, lam, 0.5, 4.0, &opts).unwrap();
        let composed = a.compose(&b).unwrap();
        assert!(close(&composed.t, &whole.t, 1e-8));
        assert!(b.compose(&a).is_err());
        let col = whole.column_propagator();
        assert_eq!(col[0][1], whole.t[1][0]);
    }

    #[test]
    fn monodromy_examples() {
        let free = pot(PotentialSpec::free().with_period(2.0 * PI));
        let m = monodromy(&free, c(1.0), Some(0.0), &Default::default()).unwrap();
        assert!(close(&m.t, &[[c(1.0), c(0.0)], [c(0.0), c(1.0)]], 1e-9));

        let free1 = pot(PotentialSpec::free().with_period(1.0));
        let tr = monodromy(&free1, c(-1.0), None, &Default::default()).unwrap().trace();
        assert!((tr - 2.0 * 1f64.cosh()).norm() < 1e-10);

        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        assert!((default_base_point(&csc).unwrap() - PI / 2.0).abs() < 1e-12);
        let m = monodromy(&csc, c(4.0), None, &Default::default()).unwrap();
        assert!((m.trace() - 2.0).norm() < 1e-8);
        let (m1, m2) = m.multipliers();
        assert!((m1 - 1.0).norm() < 1e-4 && (m2 - 1.0).norm() < 1e-4);

        assert!(matches!(
            monodromy(&pot(PotentialSpec::inverse_square(1)), c(1.0), None, &Default::default()),
            Err(Error::Aperiodic(_))
        ));
    }

    #[test]
    fn bloch_solution_oracle() {
        // e^{ikx}(cot x - ik) solves -f'' + 2/sin^2 x f = k^2 f
        let k = 1.7;
        let i = Complex64::new(0.0, 1.0);
        let f = |x: f64| (i * k * x).exp() * (1.0 / x.tan() - i * k);
        for x in [0.4, 1.1, 2.5] {
            let h = 1e-4;
            let second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
            let res = -second + f(x) * 2.0 / x.sin().powi(2) - f(x) * k * k;
            assert!(res.norm() < 1e-5 * f(x).norm().max(1.0));
            assert!((f(x + PI) - (i * k * PI).exp() * f(x)).norm() < 1e-12);
        }
    }

    #[test]
    fn sweeps_and_csv() {
        let csc = pot(PotentialSpec::csc_squared(1, 1.0));
        let grid: Vec<Complex64> = (1..=12).map(|i| c(0.5 + 2.7 * i as f64)).collect();
        let rows = discriminant_sweep(&csc, &grid, None, &Default::default()).unwrap();
        for (r, g) in rows.iter().zip(&grid) {
            assert_eq!(r.lambda, *g);
            let d = r.delta.unwrap();
            assert!((d - 2.0 * (PI * g.re.sqrt()).cos()).norm() < 1e-6);
        }
        let csv = discriminant_csv(&rows);
        assert!(csv.starts_with("lambda_re,lambda_im,delta_re,delta_im\n"));
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.lines().nth(1).unwrap().starts_with("3.2000000000000002e0,"));
    }

    #[test]
    fn discriminant_is_real_for_real_potential() {
        let u = pot(PotentialSpec::csc_squared(1, 1.0).with_background(Background {
            cos: vec![0.0, 0.0, 0.3],
            ..Default::default()
        }));
        for lam in [0.7, 5.3, 23.0] {
            let d = discriminant(&u, c(lam), None, &Default::default()).unwrap();
            assert!(d.im.abs() < 1e-10, "{d}");
        }
    }

    #[test]
    fn analytic_in_lambda() {
        let u = pot(PotentialSpec::csc_squared(1, 1.0));
        let opts = TransferOptions::default();
        let l0 = Complex64::new(2.3, 0.1);
        let nodes: Vec<Complex64> = (0..9)
            .map(|j| l0 + Complex64::from_polar(0.5, 2.0 * PI * j as f64 / 9.0 + 0.2))
            .collect();
        let vals: Vec<M2> = nodes
            .iter()
            .map(|&l| transfer_matrix(&u, l, 0.5, 2.5, &opts).unwrap().t)
            .collect();
        let direct = transfer_matrix(&u, l0, 0.5, 2.5, &opts).unwrap().t;
        for i in 0..2 {
            for j in 0..2 {
                let mut p = Complex64::new(0.0, 0.0);
                for a in 0..9 {
                    let mut w = Complex64::new(1.0, 0.0);
                    for b in 0..9 {
                        if a != b {
                            w *= (l0 - nodes[b]) / (nodes[a] - nodes[b]);
                        }
                    }
                    p += vals[a][i][j] * w;
                }
                assert!((p - direct[i][j]).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn free_gaps_are_closed() {
        let free = pot(PotentialSpec::free().with_period(PI));
        let gaps = periodic_spectrum_gaps(&free, 30.0, &GapOptions::default()).unwrap();
        let at: Vec<f64> = gaps.iter().map(|g| g.left).collect();
        assert_eq!(gaps.len(), 5, "{at:?}");
        for (g, m) in gaps.iter().zip(1..) {
            assert_eq!(g.kind, GapKind::Closed);
            assert!((g.left - (m * m) as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn perturbed_first_gap_opens() {
        let u = pot(PotentialSpec::csc_squared(1, 1.0).with_background(Background {
            cos: vec![0.0, 0.0, 0.3],
            ..Default::default()
        }));
        let gaps = periodic_spectrum_gaps(&u, 12.0, &GapOptions::default()).unwrap();
        let open: Vec<&Gap> = gaps.iter().filter(|g| g.kind == GapKind::Open).collect();
        assert!(!open.is_empty());
        assert!(open[0].length > 1e-3);
        for w in open.windows(2) {
            assert!(w[1].length < w[0].length);
        }
    }

    #[test]
    fn json_round_trip() {
        let u = pot(PotentialSpec::free());
        let m = transfer_matrix(&u, c(1.0), 0.0, 1.0, &Default::default()).unwrap();
        let back: TransferMatrix = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let g = Gap { left: 1.0, right: 1.5, length: 0.5, kind: GapKind::Open };
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            r#"{"left":1.0,"right":1.5,"length":0.5,"kind":"open"}"#
        );
    }
}
