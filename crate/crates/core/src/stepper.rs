//! Dormand-Prince 5(4) on complex state vectors driven by a real parameter.
//!
//! Step control is error per unit step: the local estimate is compared with
//! `rtol * scale * min(1, |dz|)`, where `|dz|` is the physical length of the
//! step. Components are grouped; every member of a group shares the largest
//! magnitude in the group, bounded below by the group's floor, as its scale.

use num_complex::Complex64;

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MAX_GROW: f64 = 5.0;
const MAX_SHRINK: f64 = 0.2;
const OVERFLOW: f64 = 1e250;

/// A path `z(t)` for `t` running from `t0` to `t1` (either direction).
pub(crate) trait Path {
    fn range(&self) -> (f64, f64);
    fn point(&self, t: f64) -> Complex64;
    fn velocity(&self, t: f64) -> Complex64;
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct StepControl {
    pub rtol: f64,
    pub max_steps: usize,
}

type State<const N: usize> = [Complex64; N];

#[inline]
fn axpy<const N: usize>(y: &State<N>, h: f64, terms: &[(f64, &State<N>)]) -> State<N> {
    let mut out = *y;
    for i in 0..N {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(c, k) in terms {
            if c != 0.0 {
                acc += k[i] * c;
            }
        }
        out[i] += acc * h;
    }
    out
}

/// Integrates `dy/dt = rhs(z(t), z'(t), y)` along `path`, updating `y` in
/// place. `steps` counts accepted and rejected steps across calls.
pub(crate) fn integrate<const N: usize, P, F>(
    path: &P,
    y: &mut State<N>,
    groups: &[u8; N],
    floors: &[f64],
    rhs: &mut F,
    ctl: &StepControl,
    steps: &mut usize,
) -> Result<()>
where
    P: Path,
    F: FnMut(Complex64, Complex64, &State<N>) -> Result<State<N>>,
{
    let (t0, t1) = path.range();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut h = span.abs() / 32.0;
    let mut k1 = rhs(path.point(t), path.velocity(t), y)?;
    let min_step = 1e-14 * span.abs().max(t0.abs()).max(t1.abs());
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 0.0 {
            break;
        }
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        let at = |c: f64| t + c * hs;
        let stage = |c: f64| (path.point(at(c)), path.velocity(at(c)));

        *steps += 1;
        if *steps > ctl.max_steps {
            return Err(Error::TooManySteps(ctl.max_steps));
        }

        let (z, v) = stage(C2);
        let k2 = rhs(z, v, &axpy(y, hs, &[(A21, &k1)]))?;
        let (z, v) = stage(C3);
        let k3 = rhs(z, v, &axpy(y, hs, &[(A31, &k1), (A32, &k2)]))?;
        let (z, v) = stage(C4);
        let k4 = rhs(z, v, &axpy(y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let (z, v) = stage(C5);
        let k5 = rhs(
            z,
            v,
            &axpy(y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let t_new = if last { t1 } else { t + hs };
        let (z, v) = (path.point(t_new), path.velocity(t_new));
        let k6 = rhs(
            z,
            v,
            &axpy(y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let y_new = axpy(y, hs, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(z, v, &y_new)?;

        let mut scale = [0.0f64; N];
        scale[..floors.len()].copy_from_slice(floors);
        for i in 0..N {
            let g = groups[i] as usize;
            scale[g] = scale[g].max(y[i].norm()).max(y_new[i].norm());
        }
        let phys = (v.norm() * hs.abs()).min(1.0);
        let mut est = 0.0f64;
        for i in 0..N {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
            let s = scale[groups[i] as usize];
            let s = if s > 0.0 { s } else { 1.0 };
            est = est.max(e.norm() / (ctl.rtol * s * phys.max(1e-300)));
        }

        if !est.is_finite() || y_new.iter().any(|c| !c.is_finite()) {
            h *= MAX_SHRINK;
            if h < min_step {
                let z = path.point(t);
                return Err(Error::Overflow { re: z.re, im: z.im });
            }
            continue;
        }

        let factor = if est == 0.0 {
            MAX_GROW
        } else {
            (SAFETY * est.powf(-0.25)).clamp(MAX_SHRINK, MAX_GROW)
        };
        if est <= 1.0 {
            t = t_new;
            *y = y_new;
            k1 = k7;
            if y.iter().any(|c| c.norm() > OVERFLOW) {
                let z = path.point(t);
                return Err(Error::Overflow { re: z.re, im: z.im });
            }
            if last {
                break;
            }
            h = hs.abs() * factor;
        } else {
            h = hs.abs() * factor.min(1.0);
        }
        if h < min_step {
            let z = path.point(t);
            return Err(Error::StepUnderflow { re: z.re, im: z.im });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line(f64, f64);

    impl Path for Line {
        fn range(&self) -> (f64, f64) {
            (self.0, self.1)
        }
        fn point(&self, t: f64) -> Complex64 {
            Complex64::new(t, 0.0)
        }
        fn velocity(&self, _: f64) -> Complex64 {
            Complex64::new(1.0, 0.0)
        }
    }

    fn exp_error(rtol: f64) -> f64 {
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut steps = 0;
        let ctl = StepControl { rtol, max_steps: 100_000 };
        integrate(
            &Line(0.0, 3.0),
            &mut y,
            &[0],
            &[0.0],
            &mut |_, v, y: &[Complex64; 1]| Ok([y[0] * v * Complex64::new(0.0, 2.0)]),
            &ctl,
            &mut steps,
        )
        .unwrap();
        (y[0] - Complex64::new(0.0, 6.0).exp()).norm()
    }

    #[test]
    fn exponential_oscillator() {
        assert!(exp_error(1e-10) < 1e-8);
        assert!(exp_error(1e-12) < exp_error(1e-10));
    }

    #[test]
    fn backwards_direction() {
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut steps = 0;
        let ctl = StepControl { rtol: 1e-12, max_steps: 100_000 };
        integrate(
            &Line(1.0, -1.0),
            &mut y,
            &[0],
            &[0.0],
            &mut |_, v, y: &[Complex64; 1]| Ok([y[0] * v]),
            &ctl,
            &mut steps,
        )
        .unwrap();
        assert!((y[0].re - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn step_budget() {
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut steps = 0;
        let ctl = StepControl { rtol: 1e-12, max_steps: 3 };
        let r = integrate(
            &Line(0.0, 10.0),
            &mut y,
            &[0],
            &[0.0],
            &mut |_, v, y: &[Complex64; 1]| Ok([y[0] * v * 5.0]),
            &ctl,
            &mut steps,
        );
        assert_eq!(r, Err(Error::TooManySteps(3)));
    }

    #[test]
    fn blow_up_is_reported() {
        // y' = y^2, y(0) = 1 blows up at t = 1
        let mut y = [Complex64::new(1.0, 0.0)];
        let mut steps = 0;
        let ctl = StepControl { rtol: 1e-8, max_steps: 1_000_000 };
        let r = integrate(
            &Line(0.0, 2.0),
            &mut y,
            &[0],
            &[0.0],
            &mut |_, v, y: &[Complex64; 1]| Ok([y[0] * y[0] * v]),
            &ctl,
            &mut steps,
        );
        assert!(matches!(
            r,
            Err(Error::Overflow { .. }) | Err(Error::StepUnderflow { .. })
        ));
    }
}
