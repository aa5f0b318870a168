//! JSON descriptors for the functions fed to `inner-product` and `gram`.

use num_complex::Complex64;
use serde::Deserialize;
use smero_core::frobenius::{frobenius_solution, subspace_for_pole, Branch};
use smero_core::innerprod::{FunctionHandle, Window};
use smero_core::potential::Potential;
use smero_core::series::{LaurentSeries, EXACT};
use smero_core::{Error, Result};

/// A complex number written as `re` or `[re, im]`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn value(self) -> Complex64 {
        match self {
            Scalar::Real(x) => Complex64::new(x, 0.0),
            Scalar::Complex([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum WindowSpec {
    Explicit(Window),
    /// `{"plateau": [a, b, fraction]}`
    Plateau { plateau: [f64; 3] },
}

impl WindowSpec {
    fn build(self) -> Result<Window> {
        match self {
            WindowSpec::Explicit(w) => Window::new(w.support, w.core),
            WindowSpec::Plateau { plateau: [a, b, f] } => Window::plateau(a, b, f),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionKind {
    /// `(x - at)^exponent`
    Monomial { at: f64, exponent: i32 },
    /// Exact finite sum of `c (x - at)^e`, terms as `[e, re, im]`.
    Series { at: f64, terms: Vec<(i32, f64, f64)> },
    /// Frobenius series of the given potential at a pole.
    Frobenius {
        at: f64,
        lambda: Scalar,
        #[serde(default = "lower")]
        branch: Branch,
        #[serde(default = "default_order")]
        order: usize,
    },
    /// Solution with `(f, f')(anchor) = init`, continued along detours.
    Solution {
        lambda: Scalar,
        anchor: f64,
        init: [Scalar; 2],
    },
    /// Constant one; meaningful only with a window.
    Bump,
    /// Canonical basis of principal parts of an index-`n` pole (expands to
    /// several functions).
    Basis { at: f64, n: i32 },
}

fn lower() -> Branch {
    Branch::Lower
}

fn default_order() -> usize {
    30
}

#[derive(Clone, Debug, Deserialize)]
pub struct FunctionSpec {
    #[serde(flatten)]
    pub kind: FunctionKind,
    #[serde(default)]
    pub window: Option<WindowSpec>,
}

impl FunctionSpec {
    /// Handles described by this entry; `u` is required for solution kinds.
    pub fn build(&self, u: Option<&Potential>) -> Result<Vec<FunctionHandle>> {
        let need_u = || u.ok_or_else(|| Error::InvalidParameters("this function kind needs --potential".into()));
        let handles = match &self.kind {
            FunctionKind::Monomial { at, exponent } => vec![FunctionHandle::monomial(*at, *exponent)],
            FunctionKind::Series { at, terms } => vec![FunctionHandle::series(LaurentSeries::from_coeffs(
                *at,
                EXACT,
                terms.iter().map(|&(e, re, im)| (e, Complex64::new(re, im))),
            ))],
            FunctionKind::Frobenius {
                at,
                lambda,
                branch,
                order,
            } => vec![FunctionHandle::series(frobenius_solution(
                need_u()?,
                *at,
                lambda.value(),
                *branch,
                *order,
            )?)],
            FunctionKind::Solution { lambda, anchor, init } => vec![FunctionHandle::solution(
                need_u()?,
                lambda.value(),
                *anchor,
                (init[0].value(), init[1].value()),
            )],
            FunctionKind::Bump => {
                let w = self
                    .window
                    .ok_or_else(|| Error::InvalidParameters("bump needs a window".into()))?
                    .build()?;
                return Ok(vec![FunctionHandle::bump(w)]);
            }
            FunctionKind::Basis { at, n } => subspace_for_pole(*n)?
                .basis(*at)
                .into_iter()
                .map(FunctionHandle::series)
                .collect(),
        };
        match self.window {
            Some(w) => {
                let w = w.build()?;
                Ok(handles.into_iter().map(|h| h.windowed(w)).collect())
            }
            None => Ok(handles),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> serde_json::Result<FunctionSpec> {
        serde_json::from_str(s)
    }

    #[test]
    fn descriptors_parse() {
        let f = parse(r#"{"kind":"monomial","at":0,"exponent":-1,"window":{"plateau":[-1,1,0.25]}}"#).unwrap();
        assert_eq!(f.build(None).unwrap().len(), 1);
        let b = parse(r#"{"kind":"basis","at":0.5,"n":3}"#).unwrap();
        assert_eq!(b.build(None).unwrap().len(), 2);
        let w = parse(r#"{"kind":"bump","window":{"support":[0,1],"core":[0.2,0.8]}}"#).unwrap();
        assert!(w.build(None).is_ok());
    }

    #[test]
    fn bad_descriptors() {
        assert!(parse(r#"{"kind":"monomial","at":0,"exponent":-1,"extra":1}"#).is_err());
        assert!(parse(r#"{"kind":"bump"}"#).unwrap().build(None).is_err());
        let sol = parse(r#"{"kind":"solution","lambda":1,"anchor":0.5,"init":[1,[0,1]]}"#).unwrap();
        assert!(sol.build(None).is_err());
        let w = parse(r#"{"kind":"bump","window":{"support":[0,1],"core":[0.8,0.2]}}"#).unwrap();
        assert!(w.build(None).is_err());
    }
}
