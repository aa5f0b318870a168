//! Dense real polynomials: evaluation, Taylor shifts and complex roots.

use num_complex::Complex64;

/// Coefficients in increasing degree order.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Poly(pub Vec<f64>);

impl Poly {
    pub fn degree(&self) -> usize {
        self.0
            .iter()
            .rposition(|&c| c != 0.0)
            .unwrap_or(0)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.0
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Value and first two derivatives.
    pub fn eval_jet(&self, z: Complex64) -> [Complex64; 3] {
        let zero = Complex64::new(0.0, 0.0);
        let (mut p, mut d1, mut d2) = (zero, zero, zero);
        for &c in self.0.iter().rev() {
            d2 = d2 * z + d1 * 2.0;
            d1 = d1 * z + p;
            p = p * z + c;
        }
        [p, d1, d2]
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly(vec![0.0]);
        }
        Poly(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, &a) in self.0.iter().enumerate() {
            for (j, &b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    /// Coefficients of `p(x0 + y)` in powers of `y`.
    pub fn taylor_shift(&self, x0: Complex64) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = self.0.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let n = c.len();
        // repeated synthetic division
        for i in 0..n {
            for j in (i..n - 1).rev() {
                let next = c[j + 1];
                c[j] += next * x0;
            }
        }
        c
    }

    /// All complex roots by Aberth-Ehrlich iteration followed by Newton
    /// polishing. Multiple roots come back as tight clusters.
    pub fn roots(&self) -> Vec<Complex64> {
        let deg = self.degree();
        if deg == 0 {
            return Vec::new();
        }
        let lead = self.0[deg];
        let monic = Poly(self.0[..=deg].iter().map(|c| c / lead).collect());
        let dp = monic.derivative();
        let bound = 1.0
            + monic.0[..deg]
                .iter()
                .map(|c| c.abs())
                .fold(0.0, f64::max);
        let mut z: Vec<Complex64> = (0..deg)
            .map(|k| {
                let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / deg as f64 + 0.4;
                Complex64::from_polar(0.5 * bound, theta)
            })
            .collect();
        for _ in 0..500 {
            let mut moved = 0.0f64;
            for i in 0..deg {
                let p = monic.eval(z[i]);
                if p == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ratio = p / dp.eval(z[i]);
                let mut repulsion = Complex64::new(0.0, 0.0);
                for j in 0..deg {
                    if j != i {
                        repulsion += (z[i] - z[j]).inv();
                    }
                }
                let w = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
                if w.is_finite() {
                    z[i] -= w;
                    moved = moved.max(w.norm() / (1.0 + z[i].norm()));
                }
            }
            if moved < 1e-15 {
                break;
            }
        }
        for r in z.iter_mut() {
            for _ in 0..3 {
                let d = dp.eval(*r);
                if d.norm() < 1e-300 {
                    break;
                }
                let step = monic.eval(*r) / d;
                if !step.is_finite() {
                    break;
                }
                *r -= step;
            }
        }
        z
    }
}

/// Groups roots closer than `tol * (1 + |r|)` and returns
/// `(mean location, multiplicity)` pairs.
pub(crate) fn cluster_roots(roots: &[Complex64], tol: f64) -> Vec<(Complex64, usize)> {
    let mut used = vec![false; roots.len()];
    let mut out = Vec::new();
    for i in 0..roots.len() {
        if used[i] {
            continue;
        }
        let mut members = vec![roots[i]];
        used[i] = true;
        for j in i + 1..roots.len() {
            if !used[j] && (roots[j] - roots[i]).norm() < tol * (1.0 + roots[i].norm()) {
                used[j] = true;
                members.push(roots[j]);
            }
        }
        let mean = members.iter().sum::<Complex64>() / members.len() as f64;
        out.push((mean, members.len()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_roots_of_minus_one() {
        let p = Poly(vec![1.0, 0.0, 0.0, 1.0]);
        let mut roots = p.roots();
        roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        let expect = [
            Complex64::new(0.5, -0.75f64.sqrt()),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.5, 0.75f64.sqrt()),
        ];
        for (r, e) in roots.iter().zip(expect) {
            assert!((r - e).norm() < 1e-14, "{r} vs {e}");
        }
    }

    #[test]
    fn triple_root_clusters() {
        let p = Poly(vec![0.0, 0.0, 0.0, 1.0]);
        let cl = cluster_roots(&p.roots(), 1e-4);
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].1, 3);
        assert!(cl[0].0.norm() < 1e-10);
    }

    #[test]
    fn shift_and_jet() {
        // (x - 1)^2 = x^2 - 2x + 1 shifted to x0 = 1 is y^2
        let p = Poly(vec![1.0, -2.0, 1.0]);
        let s = p.taylor_shift(Complex64::new(1.0, 0.0));
        assert_eq!(s, vec![0.0.into(), 0.0.into(), 1.0.into()]);
        let j = p.eval_jet(Complex64::new(3.0, 0.0));
        assert_eq!(j, [4.0.into(), 4.0.into(), 2.0.into()]);
    }
}
