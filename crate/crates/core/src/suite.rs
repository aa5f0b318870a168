//! The end-to-end property suite. Each check returns a [`CheckReport`];
//! `smero verify` and the acceptance tests run the same functions.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contour::{propagate, Contour, ContourOptions, PropagateOptions, Side, Sides};
use crate::error::Result;
use crate::frobenius::{
    frobenius_solution, is_smeromorphic, relative_residual, subspace_for_pole, Branch, OBSTRUCTION_TOL,
};
use crate::innerprod::{
    adjoint_defect, boundary_bracket, gram_signature, inner_product, FunctionHandle, InnerOptions, Window,
    SIGNATURE_TOL,
};
use crate::potential::{Background, Potential, PotentialSpec};
use crate::transfer::{
    discriminant_sweep, periodic_spectrum_gaps, transfer_matrix, GapOptions, TransferOptions, TRANSFER_RTOL,
};
use crate::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pot(spec: PotentialSpec) -> Result<Potential> {
    Potential::from_spec(&spec)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {} ({:.2}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

type Outcome = Result<(bool, String)>;

pub const CHECKS: [(u8, &str); 10] = [
    (1, "free discriminant"),
    (2, "csc^2 discriminant"),
    (3, "closed-form propagation"),
    (4, "meromorphy classification"),
    (5, "frobenius residual"),
    (6, "regularized inner product"),
    (7, "signature counts"),
    (8, "adjointness"),
    (9, "gap decay"),
    (10, "signature across adler-moser family"),
];

/// Runs check `id` (1 to 10).
pub fn run_check(id: u8) -> Result<CheckReport> {
    let name = CHECKS
        .iter()
        .find(|(i, _)| *i == id)
        .map(|(_, n)| n.to_string())
        .ok_or_else(|| Error::InvalidParameters(format!("no check with id {id}")))?;
    let start = Instant::now();
    let outcome = match id {
        1 => free_discriminant(),
        2 => csc_discriminant(),
        3 => closed_form_propagation(),
        4 => classification(),
        5 => frobenius_residual(),
        6 => regularized_inner_product(),
        7 => signature_counts(),
        8 => adjointness(),
        9 => gap_decay(),
        _ => family_signature(),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(CheckReport {
        id,
        name,
        passed,
        detail,
        seconds,
    })
}

pub fn run_all() -> Vec<CheckReport> {
    CHECKS.iter().map(|(id, _)| run_check(*id).expect("known id")).collect()
}

fn max_discriminant_error(u: &Potential, grid: &[f64], x0: Option<f64>, opts: &TransferOptions) -> Result<f64> {
    let lambdas: Vec<Complex64> = grid.iter().map(|&l| c(l)).collect();
    let rows = discriminant_sweep(u, &lambdas, x0, opts)?;
    let mut worst = 0.0f64;
    for r in rows {
        let d = r
            .delta
            .ok_or_else(|| Error::Domain(r.error.unwrap_or_default()))?;
        let oracle = 2.0 * (PI * r.lambda.re.sqrt()).cos();
        worst = worst.max((d - oracle).norm());
    }
    Ok(worst)
}

fn free_discriminant() -> Outcome {
    let start = Instant::now();
    let u = pot(PotentialSpec::free().with_period(PI))?;
    let grid: Vec<f64> = (0..=200).map(|i| 0.5 * i as f64).collect();
    let worst = max_discriminant_error(&u, &grid, None, &TransferOptions::default())?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        worst < 1e-8 && secs < 10.0,
        format!("max |Delta - 2cos(pi k)| = {worst:.3e} (< 1e-8), {secs:.2}s (< 10s)"),
    ))
}

fn csc_discriminant() -> Outcome {
    let u = pot(PotentialSpec::csc_squared(1, 1.0))?;
    let grid: Vec<f64> = (1..=200).map(|i| 0.5 * i as f64).collect();
    let mut opts = TransferOptions::default();
    opts.contour = opts.contour.with_radius(0.2);
    let worst = max_discriminant_error(&u, &grid, Some(PI / 2.0), &opts)?;
    Ok((worst < 1e-6, format!("max |Delta - 2cos(pi k)| = {worst:.3e} (< 1e-6)")))
}

/// `e^{ix}(1/x - i)` and its derivative.
fn bessel_jet(x: f64) -> (Complex64, Complex64) {
    let z = c(x);
    let e = (I * z).exp();
    (e * (z.inv() - I), e * (I / z + 1.0 - z.powi(-2)))
}

fn closed_form_propagation() -> Outcome {
    let u = pot(PotentialSpec::inverse_square(1))?;
    let lam = c(1.0);
    let popts = PropagateOptions::with_rtol(TRANSFER_RTOL);
    let (f1, fp1) = bessel_jet(1.0);
    let scale = f1.norm().max(fp1.norm());
    let mut ends = Vec::new();
    let mut worst_rel = 0.0f64;
    let mut worst_det = 0.0f64;
    for side in [Side::Upper, Side::Lower] {
        let copts = ContourOptions::with_sides(Sides::All(side));
        let contour = Contour::around(&u, -1.0, 1.0, &copts)?;
        let s = propagate(&u, lam, &contour, bessel_jet(-1.0), None, &popts)?;
        worst_rel = worst_rel.max((s.value - f1).norm().max((s.derivative - fp1).norm()) / scale);
        ends.push((s.value, s.derivative));
        let t = transfer_matrix(&u, lam, -1.0, 1.0, &TransferOptions::with_sides(Sides::All(side)))?;
        worst_det = worst_det.max((t.det() - 1.0).norm());
    }
    let agree = (ends[0].0 - ends[1].0).norm().max((ends[0].1 - ends[1].1).norm()) / scale;
    Ok((
        worst_rel < 1e-8 && agree < 1e-8 && worst_det < 1e-10,
        format!("oracle rel {worst_rel:.3e}, sides rel {agree:.3e}, |det - 1| {worst_det:.3e}"),
    ))
}

/// The s-meromorphic cases with the pole used for each.
fn meromorphic_cases() -> Vec<(String, PotentialSpec, f64)> {
    let mut out: Vec<(String, PotentialSpec, f64)> = (1..=3)
        .map(|n| (format!("{}/x^2", n * (n + 1)), PotentialSpec::inverse_square(n), 0.0))
        .collect();
    out.push(("2/sin^2 x".into(), PotentialSpec::csc_squared(1, 1.0), 0.0));
    out.push(("adler_moser(2, 1)".into(), PotentialSpec::adler_moser(2, &[1.0]), -1.0));
    out
}

fn classification() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, spec, x) in meromorphic_cases() {
        let cert = is_smeromorphic(&pot(spec)?, x, OBSTRUCTION_TOL)?;
        ok &= cert.verdict;
        notes.push(format!("{name}: {}", cert.verdict));
    }
    let alpha = 1.0;
    let bad = pot(PotentialSpec::inverse_square(1).with_background(Background {
        poly: vec![0.0, alpha],
        ..Default::default()
    }))?;
    let cert = is_smeromorphic(&bad, 0.0, OBSTRUCTION_TOL)?;
    let worst = cert
        .samples
        .iter()
        .map(|s| (s[2] - alpha).abs())
        .fold(0.0, f64::max);
    ok &= !cert.verdict && !cert.samples.is_empty() && worst < 1e-9;
    notes.push(format!("2/x^2 + x: {} (max ||obs| - 1| = {worst:.1e})", cert.verdict));
    Ok((ok, notes.join(", ")))
}

fn frobenius_residual() -> Outcome {
    let lams = [c(0.0), c(1.0), Complex64::new(2.5, -0.5)];
    let mut worst = 0.0f64;
    for (_, spec, x) in meromorphic_cases() {
        let u = pot(spec)?;
        let lu = u.laurent_at(x, 40)?;
        for &lam in &lams {
            let f = frobenius_solution(&u, x, lam, Branch::Lower, 30)?;
            worst = worst.max(relative_residual(&lu, &f, lam)?);
        }
    }
    let u = pot(PotentialSpec::inverse_square(1))?;
    let a1 = frobenius_solution(&u, 0.0, c(1.0), Branch::Lower, 30)?.coefficient_at(1)?;
    let a1_err = (a1 - 0.5).norm();
    Ok((
        worst < 1e-12 && a1_err < 1e-12,
        format!("max relative residual {worst:.3e} (< 1e-12), |a_1 - 1/2| = {a1_err:.1e}"),
    ))
}

fn regularized_inner_product() -> Outcome {
    let inv = FunctionHandle::monomial(0.0, -1);
    let mut worst = 0.0f64;
    for side in [Side::Upper, Side::Lower] {
        let opts = InnerOptions::with_contour(ContourOptions::with_sides(Sides::All(side)));
        let v = inner_product(&inv, &inv, (-1.0, 1.0), &opts)?;
        worst = worst.max((v + 2.0).norm());
    }
    let one = FunctionHandle::monomial(0.0, 0);
    let gate = inner_product(&inv, &one, (-1.0, 1.0), &InnerOptions::default());
    let (rejected, residue) = match gate {
        Err(Error::ResidueObstruction { re, im, .. }) => (true, Complex64::new(re, im)),
        _ => (false, c(f64::NAN)),
    };
    let residue_ok = (residue - 1.0).norm() < 1e-12;
    Ok((
        worst < 1e-8 && rejected && residue_ok,
        format!("|<1/x,1/x> + 2| = {worst:.3e}, (1/x, 1) rejected: {rejected}, residue {residue}"),
    ))
}

fn signature_counts() -> Outcome {
    let w = Window::plateau(-1.0, 1.0, 0.25)?;
    let mut ok = true;
    let mut notes = Vec::new();
    for n in 1..=3 {
        let family: Vec<FunctionHandle> = subspace_for_pole(n)?
            .basis(0.0)
            .into_iter()
            .map(|s| FunctionHandle::series(s).windowed(w))
            .collect();
        let expect = (n as usize).div_ceil(2);
        let counts: Vec<usize> = [0.1, 0.05]
            .par_iter()
            .map(|&r| {
                let opts = InnerOptions::with_contour(ContourOptions::default().with_radius(r));
                gram_signature(&family, (-1.0, 1.0), SIGNATURE_TOL, &opts).map(|g| g.n_minus())
            })
            .collect::<Result<_>>()?;
        ok &= counts.iter().all(|&m| m == expect);
        notes.push(format!("n={n}: n_minus {counts:?} (dim {expect})"));
    }
    Ok((ok, notes.join(", ")))
}

fn cos_over_x() -> FunctionHandle {
    FunctionHandle::closed_form(
        |z: Complex64| {
            let (s, co) = (z.sin(), z.cos());
            Ok([co / z, -s / z - co / (z * z), -co / z + 2.0 * s / (z * z) + 2.0 * co / (z * z * z)])
        },
        &[0.0],
    )
}

fn x2_sin() -> FunctionHandle {
    FunctionHandle::closed_form(
        |z: Complex64| {
            let (s, co) = (z.sin(), z.cos());
            Ok([z * z * s, 2.0 * z * s + z * z * co, 2.0 * s + 4.0 * z * co - z * z * s])
        },
        &[],
    )
}

fn adjointness() -> Outcome {
    let u = pot(PotentialSpec::inverse_square(1))?;
    let opts = InnerOptions::default();
    let interval = (-1.0, 1.0);
    let w = Window::plateau(-1.0, 1.0, 0.25)?;
    let lower = FunctionHandle::series(frobenius_solution(&u, 0.0, c(1.0), Branch::Lower, 30)?);
    let windowed = [
        (cos_over_x().windowed(w), x2_sin().windowed(w)),
        (lower.clone().windowed(w), lower.windowed(w)),
    ];
    let mut worst_windowed = 0.0f64;
    for (f, g) in &windowed {
        worst_windowed = worst_windowed.max(adjoint_defect(&u, f, g, interval, &opts)?.norm());
    }
    let (f, g) = (cos_over_x(), x2_sin());
    let defect = adjoint_defect(&u, &f, &g, interval, &opts)?;
    let bracket = boundary_bracket(&f, &g, interval)?;
    let gap = (defect - bracket).norm();
    Ok((
        worst_windowed < 1e-8 && gap < 1e-7,
        format!("windowed defect {worst_windowed:.3e} (< 1e-8), |defect - bracket| {gap:.3e} (< 1e-7), bracket {bracket:.4}"),
    ))
}

fn gap_decay() -> Outcome {
    let perturbed = pot(PotentialSpec::csc_squared(1, 1.0).with_background(Background {
        cos: vec![0.0, 0.0, 0.3],
        ..Default::default()
    }))?;
    let bare = pot(PotentialSpec::csc_squared(1, 1.0))?;
    let opts = GapOptions::default();
    let gaps = periodic_spectrum_gaps(&perturbed, 100.0, &opts)?;
    let lengths: Vec<f64> = gaps.iter().take(8).map(|g| g.length).collect();
    let decay_ok = lengths.len() == 8
        && lengths.iter().all(|&l| l > 0.0)
        && lengths[1..].windows(2).all(|p| p[1] < p[0])
        && lengths[7] < 1e-3 * lengths[0];
    let bare_gaps = periodic_spectrum_gaps(&bare, 100.0, &opts)?;
    let bare_max = bare_gaps.iter().map(|g| g.length).fold(0.0, f64::max);
    let bare_ok = bare_max < 1e-6;
    let shown: Vec<String> = lengths.iter().map(|l| format!("{l:.3e}")).collect();
    Ok((
        decay_ok && bare_ok,
        format!(
            "perturbed first gaps [{}], unperturbed max length {bare_max:.1e} over {} gaps",
            shown.join(", "),
            bare_gaps.len()
        ),
    ))
}

/// Windowed lower Frobenius solution at the real pole of `adler_moser(2, tau)`,
/// together with a bump away from the pole.
fn family_signature() -> Outcome {
    let taus = [1.0, 2.0, 5.0];
    let counts: Vec<[usize; 3]> = taus
        .par_iter()
        .map(|&tau| {
            let u = pot(PotentialSpec::adler_moser(2, &[tau]))?;
            let poles = u.real_poles_in(-10.0, 10.0);
            let &[x] = poles.as_slice() else {
                return Err(Error::Domain(format!("expected one real pole, found {poles:?}")));
            };
            // distance to the complex poles is sqrt(3) |x|
            let d = 3f64.sqrt() * x.abs();
            let half = 0.45 * d;
            let w = Window::new((x - half, x + half), (x - 0.5 * half, x + 0.5 * half))?;
            let lower = frobenius_solution(&u, x, c(0.0), Branch::Lower, 40)?;
            let f = FunctionHandle::series(lower).windowed(w);
            let bump = FunctionHandle::bump(Window::plateau(x + half, x + 2.0 * half, 0.25)?);
            let opts = InnerOptions::with_contour(ContourOptions::default().with_radius(0.1 * half));
            Ok(gram_signature(&[f, bump], (x - half, x + 2.0 * half), SIGNATURE_TOL, &opts)?.signature)
        })
        .collect::<Result<_>>()?;
    let ok = counts.iter().all(|s| s[1] == counts[0][1]) && counts[0][1] > 0;
    let shown: Vec<String> = taus
        .iter()
        .zip(&counts)
        .map(|(t, s)| format!("tau={t}: {s:?}"))
        .collect();
    Ok((ok, format!("signatures {}", shown.join(", "))))
}
