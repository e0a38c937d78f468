use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::error::{RbsdeError, Result};
use crate::geometry::{
    BoundarySubset, ConvexCore, LevelEval, LevelSet, LevelSetDomain, Matrix, Vector,
};

/// Parameters of the annular sector with C2 rounded sides.
///
/// Coordinates: the core center is the origin and the arc center sits at
/// `(0, 1 + lambda)` with `lambda = sin(alpha) + eta`. The inner boundary is
/// the unit circle about the arc center for angles in `[-alpha, alpha]`
/// measured from straight down; the outer boundary is the concentric circle
/// of radius `(1 + 2 lambda) / cos(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorDomainSpec {
    pub alpha: f64,
    pub eta: f64,
    /// Angular overshoot of the inflection points past the arc ends.
    pub eps_corner: f64,
    /// Speed factor of the second side piece relative to its chord.
    pub tension: f64,
}

impl SectorDomainSpec {
    pub fn new(alpha: f64, eta: f64) -> Self {
        Self {
            alpha,
            eta,
            eps_corner: 0.1,
            tension: 1.5,
        }
    }

    pub fn lambda(&self) -> f64 {
        self.alpha.sin() + self.eta
    }

    pub fn outer_radius(&self) -> f64 {
        (1.0 + 2.0 * self.lambda()) / self.alpha.cos()
    }
}

/// Quintic Hermite piece on `t in [0, 1]` matching position, velocity and
/// acceleration at both ends.
#[derive(Debug, Clone, Copy)]
struct Quintic {
    p0: [f64; 2],
    v0: [f64; 2],
    a0: [f64; 2],
    p1: [f64; 2],
    v1: [f64; 2],
    a1: [f64; 2],
    lo: [f64; 2],
    hi: [f64; 2],
}

const SEEDS: usize = 33;

impl Quintic {
    fn new(
        p0: [f64; 2],
        v0: [f64; 2],
        a0: [f64; 2],
        p1: [f64; 2],
        v1: [f64; 2],
        a1: [f64; 2],
    ) -> Self {
        let mut q = Self {
            p0,
            v0,
            a0,
            p1,
            v1,
            a1,
            lo: [f64::INFINITY; 2],
            hi: [f64::NEG_INFINITY; 2],
        };
        for i in 0..=256 {
            let p = q.at(i as f64 / 256.0).0;
            for (k, pk) in p.iter().enumerate() {
                q.lo[k] = q.lo[k].min(*pk);
                q.hi[k] = q.hi[k].max(*pk);
            }
        }
        for k in 0..2 {
            q.lo[k] -= 1e-2;
            q.hi[k] += 1e-2;
        }
        q
    }

    /// Position, first and second derivative.
    fn at(&self, t: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        let h = [
            1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
            t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
            0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
            0.5 * t3 - t4 + 0.5 * t5,
            -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
            10.0 * t3 - 15.0 * t4 + 6.0 * t5,
        ];
        let d = [
            -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
            1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
            t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
            1.5 * t2 - 4.0 * t3 + 2.5 * t4,
            -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
            30.0 * t2 - 60.0 * t3 + 30.0 * t4,
        ];
        let dd = [
            -60.0 * t + 180.0 * t2 - 120.0 * t3,
            -36.0 * t + 96.0 * t2 - 60.0 * t3,
            1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
            3.0 * t - 12.0 * t2 + 10.0 * t3,
            -24.0 * t + 84.0 * t2 - 60.0 * t3,
            60.0 * t - 180.0 * t2 + 120.0 * t3,
        ];
        let comb = |w: &[f64; 6], k: usize| {
            w[0] * self.p0[k]
                + w[1] * self.v0[k]
                + w[2] * self.a0[k]
                + w[3] * self.a1[k]
                + w[4] * self.v1[k]
                + w[5] * self.p1[k]
        };
        (
            [comb(&h, 0), comb(&h, 1)],
            [comb(&d, 0), comb(&d, 1)],
            [comb(&dd, 0), comb(&dd, 1)],
        )
    }

    fn box_distance(&self, y: [f64; 2]) -> f64 {
        let dx = (self.lo[0] - y[0]).max(y[0] - self.hi[0]).max(0.0);
        let dy = (self.lo[1] - y[1]).max(y[1] - self.hi[1]).max(0.0);
        dx.hypot(dy)
    }

    /// Closest parameter to `y` by seeded Newton on `(p - y).p' = 0`.
    fn closest(&self, y: [f64; 2]) -> (f64, f64) {
        let dist2 = |t: f64| {
            let p = self.at(t).0;
            (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2)
        };
        let mut best_t = 0.0;
        let mut best = f64::INFINITY;
        for i in 0..SEEDS {
            let t = i as f64 / (SEEDS - 1) as f64;
            let v = dist2(t);
            if v < best {
                best = v;
                best_t = t;
            }
        }
        let mut t = best_t;
        for _ in 0..30 {
            let (p, d, dd) = self.at(t);
            let r = [p[0] - y[0], p[1] - y[1]];
            let g = r[0] * d[0] + r[1] * d[1];
            let gp = d[0] * d[0] + d[1] * d[1] + r[0] * dd[0] + r[1] * dd[1];
            let step = if gp > 0.0 {
                g / gp
            } else {
                g / (d[0] * d[0] + d[1] * d[1])
            };
            let next = (t - step).clamp(0.0, 1.0);
            let done = (next - t).abs() < 1e-15;
            t = next;
            if done {
                break;
            }
        }
        let v = dist2(t);
        if v <= best {
            (t, v.sqrt())
        } else {
            (best_t, best.sqrt())
        }
    }
}

/// Closest boundary point with the local frame needed for derivatives.
#[derive(Debug, Clone, Copy)]
struct Foot {
    dist: f64,
    point: [f64; 2],
    /// Unit outward normal.
    normal: [f64; 2],
    /// Curvature, positive where the boundary bends around the domain.
    curvature: f64,
}

fn frame_from_derivatives(p: [f64; 2], d: [f64; 2], dd: [f64; 2], dist: f64) -> Foot {
    let speed = d[0].hypot(d[1]);
    let t = [d[0] / speed, d[1] / speed];
    let signed = (d[0] * dd[1] - d[1] * dd[0]) / speed.powi(3);
    Foot {
        dist,
        point: p,
        normal: [-t[1], t[0]],
        curvature: -signed,
    }
}

/// Right half of the boundary (`x >= 0`): inner arc, two side pieces and the
/// outer arc, traversed with the domain on the right.
#[derive(Debug, Clone)]
struct SectorBoundary {
    alpha: f64,
    center: [f64; 2],
    outer: f64,
    seg1: Quintic,
    seg2: Quintic,
}

impl SectorBoundary {
    fn arc_foot(&self, y: [f64; 2], radius: f64, inner: bool) -> Foot {
        let u = [y[0] - self.center[0], y[1] - self.center[1]];
        let beta = u[0].atan2(-u[1]).min(self.alpha);
        let dir = [beta.sin(), -beta.cos()];
        let p = [
            self.center[0] + radius * dir[0],
            self.center[1] + radius * dir[1],
        ];
        let dist = (y[0] - p[0]).hypot(y[1] - p[1]);
        if inner {
            Foot {
                dist,
                point: p,
                normal: [-dir[0], -dir[1]],
                curvature: -1.0,
            }
        } else {
            Foot {
                dist,
                point: p,
                normal: dir,
                curvature: 1.0 / radius,
            }
        }
    }

    /// Closest point for `y` with `y[0] >= 0`.
    fn foot(&self, y: [f64; 2]) -> Foot {
        let mut best = self.arc_foot(y, 1.0, true);
        let outer = self.arc_foot(y, self.outer, false);
        if outer.dist < best.dist {
            best = outer;
        }
        for seg in [&self.seg1, &self.seg2] {
            if seg.box_distance(y) >= best.dist {
                continue;
            }
            let (t, dist) = seg.closest(y);
            if dist < best.dist {
                let (p, d, dd) = seg.at(t);
                best = frame_from_derivatives(p, d, dd, dist);
            }
        }
        best
    }
}

impl LevelSet for SectorBoundary {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let mirror = y[0] < 0.0;
        let q = [y[0].abs(), y[1]];
        let f = self.foot(q);
        let side = (q[0] - f.point[0]) * f.normal[0] + (q[1] - f.point[1]) * f.normal[1];
        let s = if side < 0.0 { -f.dist } else { f.dist };
        let nx = if mirror { -f.normal[0] } else { f.normal[0] };
        let n = Vector::from_vec(vec![nx, f.normal[1]]);
        let t = Vector::from_vec(vec![-n[1], n[0]]);
        let hess = (&t * t.transpose()) * (f.curvature / (1.0 + f.curvature * s));
        LevelEval {
            value: s,
            grad: n,
            hess,
        }
    }
}

/// Rounded square of half side `half` with corner radius `round`, as an
/// exact signed distance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoundedSquare {
    pub half: f64,
    pub round: f64,
}

impl LevelSet for RoundedSquare {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, y: &Vector) -> LevelEval {
        let h = self.half - self.round;
        let q = [y[0].abs() - h, y[1].abs() - h];
        let sgn = [
            if y[0] < 0.0 { -1.0 } else { 1.0 },
            if y[1] < 0.0 { -1.0 } else { 1.0 },
        ];
        let out = [q[0].max(0.0), q[1].max(0.0)];
        let no = out[0].hypot(out[1]);
        let value = no + q[0].max(q[1]).min(0.0) - self.round;
        let mut grad = Vector::zeros(2);
        let mut hess = Matrix::zeros(2, 2);
        if no > 0.0 {
            grad[0] = sgn[0] * out[0] / no;
            grad[1] = sgn[1] * out[1] / no;
            if out[0] > 0.0 && out[1] > 0.0 {
                let t = Vector::from_vec(vec![-grad[1], grad[0]]);
                hess = (&t * t.transpose()) / no;
            }
        } else if q[0] > q[1] {
            grad[0] = sgn[0];
        } else {
            grad[1] = sgn[1];
        }
        LevelEval { value, grad, hess }
    }
}

/// Sector domain with its core and the descriptors of the arc pieces.
#[derive(Debug, Clone)]
pub struct SectorDomain {
    pub spec: SectorDomainSpec,
    pub domain: LevelSetDomain,
    pub core: ConvexCore,
    pub arc_center: Vector,
    pub outer_radius: f64,
    /// End of the inner arc on the right (`A1`).
    pub arc_end: Vector,
    /// Inflection point of the right side (`B1`), at angle `alpha + eps_corner`.
    pub inflection: Vector,
    /// Start of the outer arc on the right (`P1`).
    pub outer_end: Vector,
}

impl SectorDomain {
    /// Inner arc `S_alpha`, `t in [0, 1]` sweeping the angle from `-alpha` to `alpha`.
    pub fn inner_arc(&self) -> BoundarySubset {
        let alpha = self.spec.alpha;
        let c = self.arc_center.clone();
        BoundarySubset::new("inner_arc", move |t| {
            let b = -alpha + 2.0 * alpha * t;
            &c + Vector::from_vec(vec![b.sin(), -b.cos()])
        })
    }

    /// Image of the unit-circle point `(cos theta, sin theta)` on the circle
    /// carrying the inner arc: a quarter turn clockwise followed by a shift to
    /// the arc center.
    pub fn circle_to_frame(&self, theta: f64) -> Vector {
        &self.arc_center + Vector::from_vec(vec![theta.sin(), -theta.cos()])
    }

    /// Inverse of [`Self::circle_to_frame`] on vectors: maps a frame point to
    /// unit-circle coordinates.
    pub fn frame_to_circle(&self, y: &Vector) -> Vector {
        let u = y - &self.arc_center;
        Vector::from_vec(vec![-u[1], u[0]])
    }

    /// Rotates a frame displacement into unit-circle coordinates.
    pub fn frame_to_circle_linear(&self, v: &Vector) -> Vector {
        Vector::from_vec(vec![-v[1], v[0]])
    }
}

fn clothoid_end(a: [f64; 2], alpha: f64, len: f64) -> [f64; 2] {
    let m = 2000;
    let h = len / m as f64;
    let theta = |s: f64| alpha + s - s * s / (2.0 * len);
    let mut sx = 0.0;
    let mut sy = 0.0;
    for i in 0..=m {
        let w = if i == 0 || i == m {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let th = theta(i as f64 * h);
        sx += w * th.cos();
        sy += w * th.sin();
    }
    [a[0] + sx * h / 3.0, a[1] + sy * h / 3.0]
}

fn segments_cross(p: [f64; 2], q: [f64; 2], r: [f64; 2], s: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(p, q, r);
    let d2 = orient(p, q, s);
    let d3 = orient(r, s, p);
    let d4 = orient(r, s, q);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// Builds the sector domain, its rounded-square core (corner radius `eta`)
/// and the arc descriptors.
pub fn make_sector_domain(spec: &SectorDomainSpec) -> Result<SectorDomain> {
    let SectorDomainSpec {
        alpha,
        eta,
        eps_corner,
        tension,
    } = *spec;
    if !(alpha > 0.0 && alpha < FRAC_PI_2) {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "alpha = {alpha} outside (0, pi/2)"
        )));
    }
    if !(eta > 0.0) || !(tension > 0.0) {
        return Err(RbsdeError::InfeasibleSpec(
            "eta and tension must be positive".into(),
        ));
    }
    if !(eps_corner > 0.0 && eps_corner < FRAC_PI_2 - alpha) {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "eps_corner = {eps_corner} outside (0, pi/2 - alpha)"
        )));
    }
    let lambda = spec.lambda();
    let r_out = spec.outer_radius();
    let (sa, ca) = alpha.sin_cos();
    let c = [0.0, 1.0 + lambda];

    // core inside the triangle spanned by the arc center and the outer arc ends
    let round_center = [lambda - eta, lambda - eta];
    let side = (round_center[0] - c[0]) * ca + (round_center[1] - c[1]) * sa + eta;
    if side > 0.0 {
        return Err(RbsdeError::InfeasibleSpec(format!(
            "core corner crosses the sector side by {side}; reduce eta"
        )));
    }

    let a1 = [c[0] + sa, c[1] - ca];
    let ta = [ca, sa];
    let na = [-sa, ca];
    let angle_of = |p: [f64; 2]| (p[0] - c[0]).atan2(c[1] - p[1]);
    let target = alpha + eps_corner;
    let (mut lo, mut hi) = (1e-9, 3.0 * eps_corner + 1.0);
    if angle_of(clothoid_end(a1, alpha, hi)) < target {
        return Err(RbsdeError::InfeasibleSpec(
            "side transition cannot reach the inflection angle".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if angle_of(clothoid_end(a1, alpha, mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let len = 0.5 * (lo + hi);
    let b1 = clothoid_end(a1, alpha, len);
    let head_b = alpha + 0.5 * len;
    let tb = [head_b.cos(), head_b.sin()];
    let p1 = [c[0] + r_out * sa, c[1] - r_out * ca];
    let seg1 = Quintic::new(
        a1,
        [len * ta[0], len * ta[1]],
        [len * len * na[0], len * len * na[1]],
        b1,
        [len * tb[0], len * tb[1]],
        [0.0, 0.0],
    );
    let speed = tension * (p1[0] - b1[0]).hypot(p1[1] - b1[1]);
    let seg2 = Quintic::new(
        b1,
        [speed * tb[0], speed * tb[1]],
        [0.0, 0.0],
        p1,
        [-speed * ta[0], -speed * ta[1]],
        [speed * speed * na[0] / r_out, speed * speed * na[1] / r_out],
    );
    let boundary = SectorBoundary {
        alpha,
        center: c,
        outer: r_out,
        seg1,
        seg2,
    };

    // closed polyline of the full boundary for the simplicity check
    let m = 200;
    let mut half = Vec::new();
    for i in 0..=m {
        let b = alpha * i as f64 / m as f64;
        half.push([c[0] + b.sin(), c[1] - b.cos()]);
    }
    for seg in [&seg1, &seg2] {
        for i in 1..=m {
            half.push(seg.at(i as f64 / m as f64).0);
        }
    }
    for i in 1..=m {
        let b = alpha * (1.0 - i as f64 / m as f64);
        half.push([c[0] + r_out * b.sin(), c[1] - r_out * b.cos()]);
    }
    if half.iter().any(|p| p[0] < -1e-12) {
        return Err(RbsdeError::InfeasibleSpec(
            "side curve crosses the symmetry axis".into(),
        ));
    }
    let mut poly = half.clone();
    poly.extend(half.iter().rev().skip(1).map(|p| [-p[0], p[1]]));
    let k = poly.len() - 1;
    for i in 0..k {
        for j in (i + 2)..k {
            if i == 0 && j == k - 1 {
                continue;
            }
            if segments_cross(poly[i], poly[i + 1], poly[j], poly[j + 1]) {
                return Err(RbsdeError::InfeasibleSpec(
                    "boundary curve self-intersects".into(),
                ));
            }
        }
    }
    let reach = poly.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);

    let domain = LevelSetDomain {
        name: format!("sector(alpha={alpha}, eta={eta}, eps={eps_corner})"),
        level: Arc::new(boundary),
        bounding_radius: 1.01 * reach + 1.0,
        grad_floor: 1.0,
    };
    let core = ConvexCore {
        name: format!("rounded_square(half={lambda}, round={eta})"),
        level: Arc::new(RoundedSquare {
            half: lambda,
            round: eta,
        }),
        contains_origin: true,
        ball_radius: None,
    };
    Ok(SectorDomain {
        spec: *spec,
        domain,
        core,
        arc_center: Vector::from_vec(c.to_vec()),
        outer_radius: r_out,
        arc_end: Vector::from_vec(a1.to_vec()),
        inflection: Vector::from_vec(b1.to_vec()),
        outer_end: Vector::from_vec(p1.to_vec()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fd_relative_error, vector};

    #[test]
    fn inner_arc_lies_on_unit_circle() {
        let s = make_sector_domain(&SectorDomainSpec::new(0.7, 0.2)).unwrap();
        let arc = s.inner_arc();
        for i in 0..=50 {
            let p = arc.point(i as f64 / 50.0);
            assert!(((&p - &s.arc_center).norm() - 1.0).abs() < 1e-12);
            assert!(s.domain.phi(&p).abs() < 1e-12);
        }
    }

    #[test]
    fn joints_are_continuous() {
        let s = make_sector_domain(&SectorDomainSpec::new(0.7, 0.2)).unwrap();
        for p in [&s.arc_end, &s.inflection, &s.outer_end] {
            assert!(s.domain.phi(p).abs() < 1e-12);
        }
        let b = s.inflection.clone();
        let c = &s.arc_center;
        let angle = (b[0] - c[0]).atan2(c[1] - b[1]);
        assert!((angle - 0.8).abs() < 1e-9);
    }

    #[test]
    fn normal_on_inner_arc_points_to_center() {
        let s = make_sector_domain(&SectorDomainSpec::new(0.7, 0.2)).unwrap();
        let bottom = s.circle_to_frame(0.0);
        let n = s.domain.grad_phi(&bottom);
        assert!((n - vector(&[0.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn derivatives_near_boundary() {
        let s = make_sector_domain(&SectorDomainSpec::new(0.7, 0.2)).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..40 {
            let t = i as f64 / 40.0;
            let base = s.inner_arc().point(t);
            worst = worst.max(fd_relative_error(
                s.domain.level.as_ref(),
                &(base + vector(&[0.013, -0.021])),
                1e-4,
            ));
        }
        let side = &s.inflection + vector(&[0.02, 0.01]);
        worst = worst.max(fd_relative_error(s.domain.level.as_ref(), &side, 1e-4));
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn oversized_core_is_rejected() {
        assert!(matches!(
            make_sector_domain(&SectorDomainSpec::new(0.5, 0.2)),
            Err(RbsdeError::InfeasibleSpec(_))
        ));
        assert!(make_sector_domain(&SectorDomainSpec::new(0.5, 0.1)).is_ok());
    }

    #[test]
    fn rounded_square_is_exact_distance_outside() {
        let sq = RoundedSquare {
            half: 1.0,
            round: 0.25,
        };
        assert!((sq.value(&vector(&[2.0, 0.0])) - 1.0).abs() < 1e-15);
        let corner = vector(&[0.75, 0.75]) + vector(&[1.0, 1.0]) / 2f64.sqrt();
        assert!((sq.value(&corner) - 0.75).abs() < 1e-14);
        assert!((sq.value(&Vector::zeros(2)) + 1.0).abs() < 1e-15);
    }
}
