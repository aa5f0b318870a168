//! Local solution theory at a regular singular point of `-f'' + u f = lambda f`.
//!
//! At a pole with leading term `n(n+1) y^-2` the indicial exponents are `-n`
//! and `n+1`. The lower branch `y^-n (a_0 + a_1 y + ...)` obeys
//!
//! ```text
//! m (2n+1-m) a_m = lambda a_{m-2} - sum_{p >= -1} u_p a_{m-2-p}
//! ```
//!
//! and at the resonance `m = 2n+1` the left side vanishes. The right side at
//! that step is the logarithmic obstruction: when it is nonzero the second
//! local solution needs a `log y` term. A pole where the obstruction vanishes
//! for every `lambda` has only meromorphic eigenfunctions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{Potential, SingularityProfile};
use crate::series::{LaurentSeries, EXACT};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default obstruction tolerance, relative to the largest recursion term.
pub const OBSTRUCTION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Leading exponent `-n`.
    Lower,
    /// Leading exponent `n + 1`.
    Upper,
}

/// Output of one run of the recursion.
#[derive(Clone, Debug)]
pub struct LocalSolution {
    pub series: LaurentSeries,
    /// Mismatch at the resonance step (lower branch only).
    pub obstruction: Option<Complex64>,
    /// Largest magnitude met in the recursion up to the resonance.
    pub scale: f64,
}

fn admissible_index(profile: &SingularityProfile) -> Result<i32> {
    if !profile.is_admissible() {
        return Err(Error::NonAdmissiblePole {
            location: profile.location,
            reason: profile
                .reason
                .clone()
                .unwrap_or_else(|| "leading coefficient is not n(n+1)".into()),
        });
    }
    Ok(profile.index)
}

pub fn indicial_exponents(profile: &SingularityProfile) -> Result<(i32, i32)> {
    let n = admissible_index(profile)?;
    Ok((-n, n + 1))
}

/// Runs the recursion for `nterms` coefficients given the Laurent data of the
/// potential at the pole. The resonance coefficient of the lower branch is
/// set to zero.
pub fn local_solution(
    u: &LaurentSeries,
    n: i32,
    lambda: Complex64,
    branch: Branch,
    nterms: usize,
) -> Result<LocalSolution> {
    let rho = match branch {
        Branch::Lower => -n,
        Branch::Upper => n + 1,
    };
    let lead = u.coefficient_at(-2)?;
    let u_at = |p: i32| -> Result<Complex64> { u.coefficient_at(p) };
    let resonance = (2 * n + 1) as usize;
    let mut a = vec![ZERO; nterms.max(1)];
    a[0] = Complex64::new(1.0, 0.0);
    let mut obstruction = None;
    let mut scale = 1.0f64;
    for m in 1..nterms {
        let mut rhs = if m >= 2 { lambda * a[m - 2] } else { ZERO };
        let mut largest = rhs.norm();
        for p in -1..=(m as i32 - 2) {
            let idx = m as i32 - 2 - p;
            let term = u_at(p)? * a[idx as usize];
            largest = largest.max(term.norm());
            rhs -= term;
        }
        let e = (rho + m as i32) as f64;
        if branch == Branch::Lower && m == resonance {
            scale = scale.max(largest);
            obstruction = Some(rhs);
            a[m] = ZERO;
            continue;
        }
        a[m] = rhs / (lead - e * (e - 1.0));
        if m < resonance {
            scale = scale.max(largest).max(a[m].norm());
        }
    }
    let series = LaurentSeries::from_coeffs(
        u.basepoint(),
        rho + nterms as i32,
        a.into_iter().enumerate().map(|(i, c)| (rho + i as i32, c)),
    );
    Ok(LocalSolution {
        series,
        obstruction,
        scale,
    })
}

fn profile_for(u: &Potential, x: f64, nterms: usize) -> Result<SingularityProfile> {
    u.singularity_profile(x, nterms as i32 + 2)
}

/// Frobenius series with `order` coefficients, leading coefficient 1.
pub fn frobenius_solution(
    u: &Potential,
    x: f64,
    lambda: Complex64,
    branch: Branch,
    order: usize,
) -> Result<LaurentSeries> {
    let profile = profile_for(u, x, order)?;
    let n = admissible_index(&profile)?;
    let nterms = match branch {
        Branch::Lower => order.max(2 * n as usize + 2),
        Branch::Upper => order,
    };
    let sol = local_solution(&profile.laurent, n, lambda, branch, nterms)?;
    if let Some(obs) = sol.obstruction {
        if obs.norm() > OBSTRUCTION_TOL * sol.scale {
            return Err(Error::LogTermRequired {
                location: x,
                magnitude: obs.norm(),
            });
        }
    }
    let rho = sol.series.valuation().min(sol.series.trunc());
    Ok(sol.series.truncated(rho + order as i32))
}

/// Resonance mismatch of the lower branch at `lambda`.
pub fn log_obstruction(u: &Potential, x: f64, lambda: Complex64, order: usize) -> Result<Complex64> {
    let (obs, _) = obstruction_with_scale(u, x, lambda, order)?;
    Ok(obs)
}

fn obstruction_with_scale(
    u: &Potential,
    x: f64,
    lambda: Complex64,
    order: usize,
) -> Result<(Complex64, f64)> {
    let profile = profile_for(u, x, order.max(8))?;
    let n = admissible_index(&profile)?;
    let sol = local_solution(
        &profile.laurent,
        n,
        lambda,
        Branch::Lower,
        order.max(2 * n as usize + 2),
    )?;
    Ok((sol.obstruction.unwrap_or(ZERO), sol.scale))
}

/// Evidence for or against meromorphy of all eigenfunctions at a pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pole: f64,
    pub n: i32,
    /// `[re lambda, im lambda, |obstruction|]`
    pub samples: Vec<[f64; 3]>,
    pub verdict: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Samples the obstruction at `n + 2` values of `lambda`. The obstruction is
/// a polynomial of degree at most `n` in `lambda`, so vanishing at all
/// samples certifies that it vanishes identically.
pub fn is_smeromorphic(u: &Potential, x: f64, tol: f64) -> Result<Certificate> {
    let profile = u.singularity_profile(x, 8)?;
    if !profile.is_admissible() {
        return Ok(Certificate {
            pole: x,
            n: profile.index,
            samples: Vec::new(),
            verdict: false,
            reason: profile.reason,
        });
    }
    let n = profile.index;
    let c0 = profile.lower_coeffs.first().copied().unwrap_or(ZERO).norm();
    let mut samples = Vec::with_capacity(n as usize + 2);
    let mut verdict = true;
    for i in 1..=(n + 2) {
        let lambda = Complex64::new(i as f64 * (1.0 + c0), 0.0);
        let (obs, scale) = obstruction_with_scale(u, x, lambda, 2 * n as usize + 4)?;
        if obs.norm() > tol * scale {
            verdict = false;
        }
        samples.push([lambda.re, lambda.im, obs.norm()]);
    }
    let reason = (!verdict).then(|| "logarithmic obstruction does not vanish".to_string());
    Ok(Certificate {
        pole: x,
        n,
        samples,
        verdict,
        reason,
    })
}

/// `-f'' + (u - lambda) f` as a series.
pub fn ode_residual(u: &LaurentSeries, f: &LaurentSeries, lambda: Complex64) -> Result<LaurentSeries> {
    let second = f.derivative().derivative();
    u.mul(f)?
        .sub(&f.scale(lambda))?
        .sub(&second)
}

/// Largest residual coefficient relative to the largest coefficient of `f`.
pub fn relative_residual(u: &LaurentSeries, f: &LaurentSeries, lambda: Complex64) -> Result<f64> {
    let r = ode_residual(u, f, lambda)?;
    Ok(r.max_abs() / f.max_abs().max(f64::MIN_POSITIVE))
}

/// Coefficient of `y^-1` in `f g`.
pub fn pair_residue(f: &LaurentSeries, g: &LaurentSeries) -> Result<Complex64> {
    f.mul(g)?.coefficient_at(-1)
}

/// A finite-dimensional space of principal parts in canonical triangular form:
/// row `k` is `y^-n_k + sum_j alpha_kj y^-m_kj` with every `m_kj < n_k` and no
/// `m_kj` equal to any pivot exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrincipalSubspace {
    /// Pivot exponents `n_1 > n_2 > ... > 0`.
    pub exponents: Vec<u32>,
    /// Per row, `(m, re alpha, im alpha)`.
    pub basis_rows: Vec<Vec<(u32, f64, f64)>>,
}

impl PrincipalSubspace {
    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Basis elements as exact series at `basepoint`.
    pub fn basis(&self, basepoint: f64) -> Vec<LaurentSeries> {
        self.exponents
            .iter()
            .zip(&self.basis_rows)
            .map(|(&nk, row)| {
                LaurentSeries::from_coeffs(
                    basepoint,
                    EXACT,
                    std::iter::once((-(nk as i32), Complex64::new(1.0, 0.0))).chain(
                        row.iter()
                            .map(|&(m, re, im)| (-(m as i32), Complex64::new(re, im))),
                    ),
                )
            })
            .collect()
    }

    /// Expresses a principal part in the basis. Returns the coordinates and
    /// the largest leftover coefficient.
    pub fn decompose(&self, p: &LaurentSeries) -> Result<(Vec<Complex64>, f64)> {
        let basis = self.basis(p.basepoint());
        let mut rest = p.principal_part();
        let mut coords = Vec::with_capacity(basis.len());
        for (&nk, row) in self.exponents.iter().zip(&basis) {
            let c = rest.coefficient_at(-(nk as i32))?;
            rest = rest.sub(&row.scale(c))?;
            coords.push(c);
        }
        Ok((coords, rest.max_abs()))
    }
}

/// Exponent chain `n, n-2, ...` down to 1 or 2.
pub fn subspace_for_pole(n: i32) -> Result<PrincipalSubspace> {
    if n < 1 {
        return Err(Error::InvalidParameters(format!("pole index {n} < 1")));
    }
    let exponents: Vec<u32> = (1..=n as u32).rev().step_by(2).collect();
    Ok(PrincipalSubspace {
        basis_rows: vec![Vec::new(); exponents.len()],
        exponents,
    })
}

/// Reduced echelon form of a set of principal parts, pivots on the most
/// singular exponents.
pub fn canonical_basis(span: &[LaurentSeries]) -> Result<PrincipalSubspace> {
    let Some(first) = span.first() else {
        return Ok(PrincipalSubspace {
            exponents: Vec::new(),
            basis_rows: Vec::new(),
        });
    };
    let base = first.basepoint();
    let mut columns: Vec<i32> = Vec::new();
    for s in span {
        if s.basepoint() != base {
            return Err(Error::BasepointMismatch {
                left: base,
                right: s.basepoint(),
            });
        }
        if s.terms().any(|(e, _)| e >= 0) {
            return Err(Error::InvalidParameters(
                "canonical_basis takes pure principal parts".into(),
            ));
        }
        columns.extend(s.terms().map(|(e, _)| e));
    }
    columns.sort_unstable();
    columns.dedup();
    let mut rows: Vec<Vec<Complex64>> = span
        .iter()
        .map(|s| {
            columns
                .iter()
                .map(|&e| s.coefficient_at(e).unwrap_or(ZERO))
                .collect()
        })
        .collect();
    let scale = rows
        .iter()
        .flatten()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for col in 0..columns.len() {
        if r == rows.len() {
            break;
        }
        let (best, mag) = (r..rows.len())
            .map(|i| (i, rows[i][col].norm()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= tol {
            continue;
        }
        rows.swap(r, best);
        let p = rows[r][col];
        for v in rows[r].iter_mut() {
            *v /= p;
        }
        for i in 0..rows.len() {
            if i != r {
                let f = rows[i][col];
                if f != ZERO {
                    for j in 0..columns.len() {
                        let d = f * rows[r][j];
                        rows[i][j] -= d;
                    }
                }
            }
        }
        pivots.push(col);
        r += 1;
    }
    if pivots.len() < span.len() {
        return Err(Error::DependentSet);
    }
    let exponents = pivots.iter().map(|&c| (-columns[c]) as u32).collect();
    let basis_rows = pivots
        .iter()
        .zip(&rows)
        .map(|(&pc, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, v)| j != pc && !pivots.contains(&j) && v.norm() > tol)
                .map(|(j, v)| ((-columns[j]) as u32, v.re, v.im))
                .collect()
        })
        .collect();
    Ok(PrincipalSubspace {
        exponents,
        basis_rows,
    })
}
