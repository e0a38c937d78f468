//! Scalar building blocks: the C-infinity step and the C2 bridge used for ball cores.

/// `s(x) = exp(-1/x)` for `x > 0`, zero otherwise, with its first two derivatives.
fn bump(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let s = (-1.0 / x).exp();
    let x2 = x * x;
    (s, s / x2, s * (1.0 / (x2 * x2) - 2.0 / (x2 * x)))
}

/// Smooth step `s(x) / (s(x) + s(1 - x))`.
///
/// Zero on `(-inf, 0]`, one on `[1, inf)`, strictly increasing in between and
/// symmetric in the sense `smoothstep(x) + smoothstep(1 - x) = 1`.
pub fn smoothstep(x: f64) -> f64 {
    smoothstep_d2(x).0
}

/// Smooth step together with its first and second derivatives.
pub fn smoothstep_d2(x: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let (u, u1, u2) = bump(x);
    let (v, v1, v2) = bump(1.0 - x);
    // derivatives of v(x) = s(1 - x)
    let v1 = -v1;
    let d = u + v;
    let num = u1 * v - u * v1;
    let value = u / d;
    let first = num / (d * d);
    let num_prime = u2 * v - u * v2;
    let second = num_prime / (d * d) - 2.0 * num * (u1 + v1) / (d * d * d);
    (value, first, second)
}

/// Convex, nondecreasing C2 function equal to `-eps/2` left of `-eps` and to the
/// identity right of `0`, bridged by the quintic `-eps/2 + eps (u^3 - u^4 / 2)`
/// in `u = (x + eps) / eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoBridge {
    pub eps: f64,
}

impl RhoBridge {
    pub fn new(eps: f64) -> Self {
        assert!(eps > 0.0, "bridge width must be positive");
        Self { eps }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }

    /// Value, first and second derivative.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let e = self.eps;
        if x <= -e {
            (-0.5 * e, 0.0, 0.0)
        } else if x >= 0.0 {
            (x, 1.0, 0.0)
        } else {
            let u = (x + e) / e;
            let u2 = u * u;
            (
                -0.5 * e + e * (u2 * u - 0.5 * u2 * u2),
                3.0 * u2 - 2.0 * u2 * u,
                (6.0 * u - 6.0 * u2) / e,
            )
        }
    }
}

/// Builds the bridge for a given width.
pub fn rho_eps_bridge(eps: f64) -> RhoBridge {
    RhoBridge::new(eps)
}

/// Even polynomial replacing `r` on `[0, r1]` so that radial level sets stay C2
/// at the origin: `3 r1 / 8 + 3 r^2 / (4 r1) - r^4 / (8 r1^3)`.
///
/// Returns the value and the coefficients `(a, b)` such that the gradient of
/// the radial function is `a * y` and its Hessian is `a I + b y y^T`.
pub(crate) fn smooth_radius(r2: f64, r1: f64) -> (f64, f64, f64) {
    let r = r2.sqrt();
    if r >= r1 {
        let inv = 1.0 / r;
        return (r, inv, -inv * inv * inv);
    }
    let b = 3.0 / (4.0 * r1);
    let c = -1.0 / (8.0 * r1 * r1 * r1);
    let value = 3.0 * r1 / 8.0 + b * r2 + c * r2 * r2;
    (value, 2.0 * b + 4.0 * c * r2, 8.0 * c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_and_symmetry() {
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(2.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        for i in 1..100 {
            let x = i as f64 / 100.0;
            assert!((smoothstep(x) + smoothstep(1.0 - x) - 1.0).abs() < 1e-14);
        }
        for i in 6..95 {
            let x = i as f64 / 100.0;
            assert!(smoothstep(x) > smoothstep(x - 0.01));
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-5;
        for i in 1..50 {
            let x = i as f64 / 50.0;
            let (_, d1, d2) = smoothstep_d2(x);
            let fd1 = (smoothstep(x + h) - smoothstep(x - h)) / (2.0 * h);
            let fd2 = (smoothstep_d2(x + h).1 - smoothstep_d2(x - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-7, "x={x} {d1} {fd1}");
            assert!(
                (d2 - fd2).abs() < 1e-5 * (1.0 + d2.abs()),
                "x={x} {d2} {fd2}"
            );
        }
    }

    #[test]
    fn bridge_plateau_identity_and_convexity() {
        let eps = 0.3;
        let b = rho_eps_bridge(eps);
        assert_eq!(b.value(-2.0 * eps), -eps / 2.0);
        assert_eq!(b.value(1.0), 1.0);
        // continuity of value, slope and curvature at both knots
        for &x in &[-eps, 0.0] {
            let l = b.eval(x - 1e-12);
            let r = b.eval(x + 1e-12);
            assert!((l.0 - r.0).abs() < 1e-10);
            assert!((l.1 - r.1).abs() < 1e-9);
            assert!((l.2 - r.2).abs() < 1e-8);
        }
        // midpoint u = 1/2: -eps/2 + eps (1/8 - 1/32)
        let mid = b.value(-eps / 2.0);
        assert!((mid - (-eps / 2.0 + eps * 3.0 / 32.0)).abs() < 1e-15);
        for i in 0..=1000 {
            let x = -eps + eps * i as f64 / 1000.0;
            let (_, d1, d2) = b.eval(x);
            assert!(d2 >= -1e-12);
            assert!(d1 >= -1e-12);
        }
    }

    #[test]
    fn smooth_radius_matches_at_knot() {
        let r1 = 0.25;
        let (v, a, _) = smooth_radius(r1 * r1 * (1.0 - 1e-12), r1);
        assert!((v - r1).abs() < 1e-10);
        assert!((a * r1 - 1.0).abs() < 1e-9);
    }
}
