//! Truncated Laurent series in a local variable `y = x - x_j`.
//!
//! A [`LaurentSeries`] stores a sparse map from integer exponent to complex
//! coefficient together with a truncation order `trunc`: every coefficient
//! with exponent `< trunc` is trusted, everything at or above it is unknown.
//! Finite expansions that are known exactly use the [`EXACT`] order.
//!
//! Arithmetic tracks truncation pessimistically, so an operation never
//! reports a coefficient that depends on unknown input data.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Truncation order used for series that are known exactly.
pub const EXACT: i32 = 1 << 28;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesRepr", into = "SeriesRepr")]
pub struct LaurentSeries {
    basepoint: f64,
    coeffs: BTreeMap<i32, Complex64>,
    trunc: i32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesRepr {
    basepoint: f64,
    trunc: i32,
    coeffs: Vec<(i32, f64, f64)>,
}

impl TryFrom<SeriesRepr> for LaurentSeries {
    type Error = Error;

    fn try_from(r: SeriesRepr) -> Result<Self> {
        if let Some(&(e, _, _)) = r.coeffs.iter().find(|c| c.0 >= r.trunc) {
            return Err(Error::BeyondTruncation {
                exponent: e,
                trunc: r.trunc,
            });
        }
        Ok(LaurentSeries::from_coeffs(
            r.basepoint,
            r.trunc,
            r.coeffs
                .into_iter()
                .map(|(e, re, im)| (e, Complex64::new(re, im))),
        ))
    }
}

impl From<LaurentSeries> for SeriesRepr {
    fn from(s: LaurentSeries) -> Self {
        SeriesRepr {
            basepoint: s.basepoint,
            trunc: s.trunc,
            coeffs: s.coeffs.iter().map(|(&e, c)| (e, c.re, c.im)).collect(),
        }
    }
}

impl LaurentSeries {
    /// The zero series `O(y^trunc)`.
    pub fn zero(basepoint: f64, trunc: i32) -> Self {
        LaurentSeries {
            basepoint,
            coeffs: BTreeMap::new(),
            trunc: trunc.min(EXACT),
        }
    }

    /// Builds a series from `(exponent, coefficient)` pairs. Terms at or above
    /// `trunc` are dropped, exact zeros are not stored, and repeated exponents
    /// accumulate.
    pub fn from_coeffs<I>(basepoint: f64, trunc: i32, terms: I) -> Self
    where
        I: IntoIterator<Item = (i32, Complex64)>,
    {
        let mut s = LaurentSeries::zero(basepoint, trunc);
        for (e, c) in terms {
            if e < s.trunc {
                *s.coeffs.entry(e).or_insert(Complex64::new(0.0, 0.0)) += c;
            }
        }
        s.coeffs.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        s
    }

    /// Real coefficients `coeffs[i]` at exponent `start + i`.
    pub fn from_real_slice(basepoint: f64, start: i32, coeffs: &[f64], trunc: i32) -> Self {
        LaurentSeries::from_coeffs(
            basepoint,
            trunc,
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| (start + i as i32, Complex64::new(c, 0.0))),
        )
    }

    /// `coeff * y^exponent`, known exactly.
    pub fn monomial(basepoint: f64, exponent: i32, coeff: Complex64) -> Self {
        LaurentSeries::from_coeffs(basepoint, EXACT, [(exponent, coeff)])
    }

    pub fn basepoint(&self) -> f64 {
        self.basepoint
    }

    pub fn trunc(&self) -> i32 {
        self.trunc
    }

    pub fn is_exact(&self) -> bool {
        self.trunc >= EXACT
    }

    /// Stored `(exponent, coefficient)` pairs in increasing exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (i32, Complex64)> + '_ {
        self.coeffs.iter().map(|(&e, &c)| (e, c))
    }

    pub fn coefficient_at(&self, exponent: i32) -> Result<Complex64> {
        if exponent >= self.trunc {
            return Err(Error::BeyondTruncation {
                exponent,
                trunc: self.trunc,
            });
        }
        Ok(self.coeff_or_zero(exponent))
    }

    fn coeff_or_zero(&self, exponent: i32) -> Complex64 {
        self.coeffs
            .get(&exponent)
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Lowest exponent with a nonzero coefficient, or `trunc` for a series
    /// with no known nonzero terms.
    pub fn valuation(&self) -> i32 {
        self.coeffs.keys().next().copied().unwrap_or(self.trunc)
    }

    /// Largest coefficient magnitude.
    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Restriction to strictly negative exponents.
    pub fn principal_part(&self) -> LaurentSeries {
        let trunc = if self.trunc >= 0 { EXACT } else { self.trunc };
        LaurentSeries {
            basepoint: self.basepoint,
            coeffs: self.coeffs.range(..0).map(|(&e, &c)| (e, c)).collect(),
            trunc,
        }
    }

    /// Restriction to nonnegative exponents.
    pub fn regular_part(&self) -> LaurentSeries {
        LaurentSeries {
            basepoint: self.basepoint,
            coeffs: self.coeffs.range(0..).map(|(&e, &c)| (e, c)).collect(),
            trunc: self.trunc,
        }
    }

    /// Drops all terms at or above `trunc` and lowers the truncation order.
    pub fn truncated(&self, trunc: i32) -> LaurentSeries {
        let trunc = trunc.min(self.trunc);
        LaurentSeries {
            basepoint: self.basepoint,
            coeffs: self.coeffs.range(..trunc).map(|(&e, &c)| (e, c)).collect(),
            trunc,
        }
    }

    fn check_base(&self, other: &LaurentSeries) -> Result<()> {
        if self.basepoint != other.basepoint {
            return Err(Error::BasepointMismatch {
                left: self.basepoint,
                right: other.basepoint,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &LaurentSeries) -> Result<LaurentSeries> {
        self.check_base(other)?;
        let trunc = self.trunc.min(other.trunc);
        Ok(LaurentSeries::from_coeffs(
            self.basepoint,
            trunc,
            self.terms().chain(other.terms()),
        ))
    }

    pub fn sub(&self, other: &LaurentSeries) -> Result<LaurentSeries> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> LaurentSeries {
        LaurentSeries::from_coeffs(
            self.basepoint,
            self.trunc,
            self.terms().map(|(e, c)| (e, c * factor)),
        )
    }

    /// Cauchy product. The result is trusted below
    /// `min(trunc_a + val_b, trunc_b + val_a)`.
    pub fn mul(&self, other: &LaurentSeries) -> Result<LaurentSeries> {
        self.check_base(other)?;
        let bound = |s: &LaurentSeries, o: &LaurentSeries| {
            if s.is_exact() {
                EXACT
            } else {
                s.trunc.saturating_add(o.valuation())
            }
        };
        let trunc = bound(self, other).min(bound(other, self)).min(EXACT);
        let mut out: BTreeMap<i32, Complex64> = BTreeMap::new();
        for (&ea, &ca) in &self.coeffs {
            for (&eb, &cb) in &other.coeffs {
                let e = ea + eb;
                if e >= trunc {
                    break;
                }
                *out.entry(e).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        Ok(LaurentSeries::from_coeffs(self.basepoint, trunc, out))
    }

    /// Term-wise derivative with respect to `y`.
    pub fn derivative(&self) -> LaurentSeries {
        let trunc = if self.is_exact() {
            EXACT
        } else {
            self.trunc - 1
        };
        LaurentSeries::from_coeffs(
            self.basepoint,
            trunc,
            self.terms()
                .filter(|&(e, _)| e != 0)
                .map(|(e, c)| (e - 1, c * e as f64)),
        )
    }

    /// Multiplicative inverse of a Taylor series with nonzero constant term.
    pub(crate) fn taylor_reciprocal(&self) -> Result<LaurentSeries> {
        let c0 = self.coeff_or_zero(0);
        if self.valuation() < 0 || c0 == Complex64::new(0.0, 0.0) || self.trunc <= 0 {
            return Err(Error::InvalidParameters(
                "reciprocal needs a Taylor series with nonzero constant term".into(),
            ));
        }
        let n = if self.is_exact() { 64 } else { self.trunc };
        let mut inv = vec![Complex64::new(0.0, 0.0); n as usize];
        inv[0] = c0.inv();
        for k in 1..n as usize {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 1..=k {
                acc += self.coeff_or_zero(j as i32) * inv[k - j];
            }
            inv[k] = -acc * inv[0];
        }
        Ok(LaurentSeries::from_coeffs(
            self.basepoint,
            n,
            inv.into_iter().enumerate().map(|(k, c)| (k as i32, c)),
        ))
    }

    /// Sums the stored terms at `z`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_jet(z)[0]
    }

    /// Value and first two derivatives of the partial sum at `z`.
    pub fn eval_jet(&self, z: Complex64) -> [Complex64; 3] {
        let y = z - self.basepoint;
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for (&e, &c) in &self.coeffs {
            let ef = e as f64;
            let p = y.powi(e);
            out[0] += c * p;
            if e != 0 {
                out[1] += c * ef * p / y;
                if e != 1 {
                    out[2] += c * ef * (ef - 1.0) * p / (y * y);
                }
            }
        }
        out
    }
}

pub fn series_mul(a: &LaurentSeries, b: &LaurentSeries) -> Result<LaurentSeries> {
    a.mul(b)
}

pub fn coefficient_at(s: &LaurentSeries, exponent: i32) -> Result<Complex64> {
    s.coefficient_at(exponent)
}

pub fn principal_part(s: &LaurentSeries) -> LaurentSeries {
    s.principal_part()
}
