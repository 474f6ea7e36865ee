//! Bracketing scalar root finding (Brent–Dekker).

use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

/// Finds a root of `f` in `[lower, upper]`.
///
/// Requires `f(lower)·f(upper) <= 0`. Returns once `|f(x)| <= tol` or the
/// bracket has shrunk below `tol`. Inverse quadratic / secant steps are
/// accepted only while they beat bisection, so convergence is guaranteed.
pub fn find_root<F>(f: F, lower: f64, upper: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    brent(f, lower, upper, tol)
}

fn brent<F>(mut f: F, lower: f64, upper: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lower, upper);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa.is_nan() || fb.is_nan() || fa * fb > 0.0 {
        return Err(Error::Bracketing {
            lower,
            upper,
            f_lower: fa,
            f_upper: fb,
        });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }

        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }

        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::NoConvergence {
                iterations: MAX_ITER,
                last: b,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        last: b,
    })
}

/// Grows `[lower, upper]` geometrically around its midpoint until `f`
/// changes sign, then returns the root. Used where only a plausible
/// starting interval is known.
pub fn find_root_expanding<F>(mut f: F, lower: f64, upper: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (lower, upper);
    let (mut flo, mut fhi) = (f(lo), f(hi));
    for _ in 0..60 {
        if flo * fhi <= 0.0 {
            return brent(f, lo, hi, tol);
        }
        let width = hi - lo;
        if flo.abs() < fhi.abs() {
            lo -= width;
            flo = f(lo);
        } else {
            hi += width;
            fhi = f(hi);
        }
    }
    Err(Error::Bracketing {
        lower: lo,
        upper: hi,
        f_lower: flo,
        f_upper: fhi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal::norm_cdf;

    #[test]
    fn linear_root() {
        let x = find_root(|x| x - 1.0, 0.0, 2.0, 1e-10).unwrap();
        assert!((x - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normal_quantile_by_root() {
        let x = find_root(|x| norm_cdf(x) - 0.9828, 0.0, 5.0, 1e-12).unwrap();
        assert!((x - 2.115_351_501_94).abs() < 1e-9);
    }

    #[test]
    fn no_sign_change_is_reported() {
        let err = find_root(|x| x * x, 1.0, 2.0, 1e-10).unwrap_err();
        match err {
            Error::Bracketing {
                f_lower, f_upper, ..
            } => {
                assert_eq!(f_lower, 1.0);
                assert_eq!(f_upper, 4.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bracket_independence() {
        let f = |x: f64| x.powi(3) - 2.0 * x - 5.0;
        let a = find_root(f, 2.0, 3.0, 1e-13).unwrap();
        let b = find_root(f, -1.0, 10.0, 1e-13).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn endpoint_root() {
        assert_eq!(find_root(|x| x, 0.0, 1.0, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn expanding_search() {
        let x = find_root_expanding(|x| x - 40.0, 0.0, 1.0, 1e-12).unwrap();
        assert!((x - 40.0).abs() < 1e-9);
    }
}
