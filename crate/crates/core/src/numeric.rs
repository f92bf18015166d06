//! Small scalar numerics used throughout: bracketing searches and finite
//! differences.

/// Golden-section minimisation of a unimodal function on `[a, b]`.
///
/// Returns `(x_min, f(x_min))` with the argument located to within `tol`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fc < fd && fc < fx {
        (c, fc)
    } else if fd <= fc && fd < fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

/// Golden-section maximisation on `[a, b]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, neg) = golden_min(|t| -f(t), a, b, tol);
    (x, -neg)
}

/// Bisection for a root of `f` on `[a, b]`; requires a sign change.
///
/// Returns the midpoint of the final bracket, located to within `xtol` or
/// until `|f| <= ftol`.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    xtol: f64,
    ftol: f64,
) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if !fm.is_finite() {
            return None;
        }
        if fm.abs() <= ftol || (b - a).abs() <= xtol {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Central finite difference of a scalar function.
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn golden_finds_parabola_min() {
        let (x, fx) = golden_min(|t| (t - 1.3).powi(2) + 2.0, -4.0, 4.0, 1e-9);
        assert_relative_eq!(x, 1.3, epsilon = 1e-6);
        assert_relative_eq!(fx, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn bisect_finds_cubic_root() {
        let r = bisect(|t| t * t * t - 2.0, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert_relative_eq!(r, 2f64.powf(1.0 / 3.0), epsilon = 1e-9);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        assert!(bisect(|t| t * t + 1.0, -1.0, 1.0, 1e-9, 0.0).is_none());
    }

    #[test]
    fn central_diff_of_sin() {
        let d = central_diff(f64::sin, 0.7, 1e-6);
        assert_relative_eq!(d, 0.7f64.cos(), epsilon = 1e-9);
    }
}
