//! Computational domains: containment, interior/boundary sampling, boundary
//! parameterization, and implicit-boundary location by bisection.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Spatial coordinates. 1D domains use only the first component.
pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    dot(a, a).sqrt()
}

/// Role of a collocation point in the training set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointTag {
    Interior,
    Boundary,
    Initial,
}

/// A spatial point with a time coordinate and a role tag.
#[derive(Debug, Clone, Copy)]
pub struct SpaceTimePoint {
    pub x: Vec2,
    pub t: f64,
    pub tag: PointTag,
}

impl SpaceTimePoint {
    pub fn interior(x: Vec2, t: f64) -> Self {
        Self { x, t, tag: PointTag::Interior }
    }

    pub fn initial(x: Vec2, t: f64) -> Self {
        Self { x, t, tag: PointTag::Initial }
    }
}

/// A point on the domain boundary with its local frame.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub position: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    /// Unit tangent (zero vector on interval endpoints, where the boundary
    /// is zero-dimensional; orthogonality to the normal still holds).
    pub tangent: Vec2,
    /// Boundary parameter, when the boundary is parameterized.
    pub parameter: Option<f64>,
    pub time: f64,
}

/// Smoothed characteristic function of a domain; the level set
/// `evaluator(x) = level` delineates the boundary.
#[derive(Clone)]
pub struct CharacteristicField {
    evaluator: Arc<dyn Fn(Vec2) -> f64 + Send + Sync>,
    pub level: f64,
}

impl std::fmt::Debug for CharacteristicField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CharacteristicField").field("level", &self.level).finish()
    }
}

impl CharacteristicField {
    pub fn from_fn<F>(evaluator: F, level: f64) -> Self
    where
        F: Fn(Vec2) -> f64 + Send + Sync + 'static,
    {
        Self { evaluator: Arc::new(evaluator), level }
    }

    /// Wraps a trained network checkpoint as a characteristic field. The
    /// network must take two spatial inputs.
    pub fn from_mlp(net: crate::network::Mlp, level: f64) -> Result<Self> {
        if net.spec.input_dim != 2 {
            return Err(Error::InvalidArgument(format!(
                "characteristic field network must have input_dim 2, got {}",
                net.spec.input_dim
            )));
        }
        Ok(Self::from_fn(move |x| net.value(&x), level))
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        (self.evaluator)(x)
    }
}

/// Geometric region: supplies containment, sampling, boundary frames.
#[derive(Debug, Clone)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    Rectangle { lo: Vec2, hi: Vec2 },
    Disk { center: Vec2, radius: f64 },
    Ellipse { center: Vec2, a: f64, b: f64 },
    Implicit { field: CharacteristicField, bbox: (Vec2, Vec2) },
}

/// On-boundary containment tolerance for analytic shapes: points with
/// |level| below this count as inside, so boundary collocation is never
/// rejected by interior filters.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Cap on rejection-sampling attempts, per requested point.
const REJECTION_ATTEMPTS_PER_POINT: usize = 1000;

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Axis-aligned box enclosing the domain.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        match self {
            Domain::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            Domain::Rectangle { lo, hi } => (*lo, *hi),
            Domain::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            Domain::Ellipse { center, a, b } => {
                ([center[0] - a, center[1] - b], [center[0] + a, center[1] + b])
            }
            Domain::Implicit { bbox, .. } => *bbox,
        }
    }

    /// Signed level function: negative inside, zero on the boundary.
    fn level(&self, x: Vec2) -> f64 {
        match self {
            Domain::Interval { a, b } => {
                let m = 0.5 * (a + b);
                let h = 0.5 * (b - a);
                ((x[0] - m).abs() - h) / h.max(f64::MIN_POSITIVE)
            }
            Domain::Rectangle { lo, hi } => {
                let mut lev = f64::NEG_INFINITY;
                for k in 0..2 {
                    let m = 0.5 * (lo[k] + hi[k]);
                    let h = 0.5 * (hi[k] - lo[k]);
                    lev = lev.max(((x[k] - m).abs() - h) / h.max(f64::MIN_POSITIVE));
                }
                lev
            }
            Domain::Disk { center, radius } => {
                let dx = [x[0] - center[0], x[1] - center[1]];
                (dot(dx, dx) / (radius * radius)) - 1.0
            }
            Domain::Ellipse { center, a, b } => {
                let u = (x[0] - center[0]) / a;
                let v = (x[1] - center[1]) / b;
                u * u + v * v - 1.0
            }
            Domain::Implicit { field, .. } => field.level - field.eval(x),
        }
    }

    /// True iff `x` lies in the closed domain.
    pub fn contains(&self, x: Vec2) -> Result<bool> {
        if !x[0].is_finite() || !x[1].is_finite() {
            return Err(Error::NonFinitePoint);
        }
        Ok(self.level(x) <= BOUNDARY_TOL)
    }

    /// Draws `n` interior points by rejection from the bounding box, with
    /// times uniform on `t_range`.
    pub fn sample_interior(
        &self,
        n: usize,
        t_range: (f64, f64),
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<SpaceTimePoint>> {
        let (lo, hi) = self.bounding_box();
        let mut out = Vec::with_capacity(n);
        let cap = REJECTION_ATTEMPTS_PER_POINT * n.max(1);
        let mut attempts = 0usize;
        while out.len() < n {
            if attempts >= cap {
                return Err(Error::DegenerateDomain);
            }
            attempts += 1;
            let x = match self.dim() {
                1 => [rng.gen_range(lo[0]..=hi[0]), 0.0],
                _ => [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])],
            };
            if self.contains(x)? {
                let t = rng.gen_range(t_range.0..=t_range.1);
                out.push(SpaceTimePoint::interior(x, t));
            }
        }
        Ok(out)
    }

    /// Boundary point at parameter `theta` with outward normal and tangent.
    pub fn boundary_point_at(&self, theta: f64, time: f64) -> Result<BoundaryPoint> {
        match self {
            Domain::Disk { center, radius } => {
                let (s, c) = theta.sin_cos();
                Ok(BoundaryPoint {
                    position: [center[0] + radius * c, center[1] + radius * s],
                    normal: [c, s],
                    tangent: [-s, c],
                    parameter: Some(theta),
                    time,
                })
            }
            Domain::Ellipse { center, a, b } => {
                let (s, c) = theta.sin_cos();
                let mut normal = [b * c, a * s];
                let nn = norm(normal);
                normal = [normal[0] / nn, normal[1] / nn];
                let mut tangent = [-a * s, b * c];
                let tn = norm(tangent);
                tangent = [tangent[0] / tn, tangent[1] / tn];
                Ok(BoundaryPoint {
                    position: [center[0] + a * c, center[1] + b * s],
                    normal,
                    tangent,
                    parameter: Some(theta),
                    time,
                })
            }
            _ => Err(Error::NoParameterization),
        }
    }

    /// Draws `n` boundary points. Disk/ellipse: parameter uniform on
    /// [0, 2pi). Interval: endpoints alternated across draws. Implicit:
    /// rays from an interior seed point, bisected against the field.
    pub fn sample_boundary(
        &self,
        n: usize,
        t_range: (f64, f64),
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<BoundaryPoint>> {
        let mut out = Vec::with_capacity(n);
        match self {
            Domain::Interval { a, b } => {
                for i in 0..n {
                    let t = rng.gen_range(t_range.0..=t_range.1);
                    let (x, nx) = if i % 2 == 0 { (*a, -1.0) } else { (*b, 1.0) };
                    out.push(BoundaryPoint {
                        position: [x, 0.0],
                        normal: [nx, 0.0],
                        tangent: [0.0, 0.0],
                        parameter: None,
                        time: t,
                    });
                }
            }
            Domain::Rectangle { .. } => {
                return Err(Error::NoParameterization);
            }
            Domain::Disk { .. } | Domain::Ellipse { .. } => {
                for _ in 0..n {
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    let t = rng.gen_range(t_range.0..=t_range.1);
                    out.push(self.boundary_point_at(theta, t)?);
                }
            }
            Domain::Implicit { field, bbox } => {
                let seed = self.implicit_seed_point(rng)?;
                for _ in 0..n {
                    let theta = rng.gen_range(0.0..2.0 * PI);
                    let t = rng.gen_range(t_range.0..=t_range.1);
                    let exit = ray_box_exit(seed, theta, *bbox);
                    if field.eval(exit) >= field.level {
                        // Ray leaves the box while still inside the field's
                        // transition layer; skip this direction.
                        continue;
                    }
                    let pos = bisect_boundary(field, seed, exit, 1e-10)?;
                    let normal = implicit_outward_normal(field, pos);
                    out.push(BoundaryPoint {
                        position: pos,
                        normal,
                        tangent: [-normal[1], normal[0]],
                        parameter: Some(theta),
                        time: t,
                    });
                }
            }
        }
        Ok(out)
    }

    fn implicit_seed_point(&self, rng: &mut ChaCha8Rng) -> Result<Vec2> {
        let (lo, hi) = self.bounding_box();
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        if self.contains(center)? {
            return Ok(center);
        }
        for _ in 0..REJECTION_ATTEMPTS_PER_POINT {
            let x = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
            if self.contains(x)? {
                return Ok(x);
            }
        }
        Err(Error::DegenerateDomain)
    }

    /// First-derivative magnitude, second derivative, and signed curvature of
    /// the boundary curve at parameter `theta`.
    pub fn curvature_and_metric(&self, theta: f64) -> Result<(f64, Vec2, f64)> {
        let (a, b) = match self {
            Domain::Disk { radius, .. } => (*radius, *radius),
            Domain::Ellipse { a, b, .. } => (*a, *b),
            _ => return Err(Error::NoParameterization),
        };
        let (s, c) = theta.sin_cos();
        let d1 = [-a * s, b * c];
        let d2 = [-a * c, -b * s];
        let speed = norm(d1);
        // kappa = (x' y'' - y' x'') / |gamma'|^3
        let kappa = (d1[0] * d2[1] - d1[1] * d2[0]) / speed.powi(3);
        Ok((speed, d2, kappa))
    }
}

/// Exit point of the ray from `origin` at angle `theta` through the box.
fn ray_box_exit(origin: Vec2, theta: f64, bbox: (Vec2, Vec2)) -> Vec2 {
    let (lo, hi) = bbox;
    let (s, c) = theta.sin_cos();
    let dir = [c, s];
    let mut tmax = f64::INFINITY;
    for k in 0..2 {
        if dir[k] > 0.0 {
            tmax = tmax.min((hi[k] - origin[k]) / dir[k]);
        } else if dir[k] < 0.0 {
            tmax = tmax.min((lo[k] - origin[k]) / dir[k]);
        }
    }
    [origin[0] + tmax * dir[0], origin[1] + tmax * dir[1]]
}

fn implicit_outward_normal(field: &CharacteristicField, x: Vec2) -> Vec2 {
    // The field decreases outward, so -grad(psi) points out of the domain.
    let h = 1e-6;
    let gx = (field.eval([x[0] + h, x[1]]) - field.eval([x[0] - h, x[1]])) / (2.0 * h);
    let gy = (field.eval([x[0], x[1] + h]) - field.eval([x[0], x[1] - h])) / (2.0 * h);
    let g = [-gx, -gy];
    let n = norm(g);
    [g[0] / n, g[1] / n]
}

/// Locates the level crossing of `field` on the segment from `inside`
/// (at or above the level) to `outside` (below the level) by bisection.
pub fn bisect_boundary(
    field: &CharacteristicField,
    inside: Vec2,
    outside: Vec2,
    tol: f64,
) -> Result<Vec2> {
    if field.eval(inside) < field.level || field.eval(outside) >= field.level {
        return Err(Error::BracketInvalid);
    }
    let mut lo = inside;
    let mut hi = outside;
    let len = norm([hi[0] - lo[0], hi[1] - lo[1]]);
    let max_iter = if len > tol { (len / tol).log2().ceil() as usize + 2 } else { 2 };
    for _ in 0..max_iter {
        let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let v = field.eval(mid);
        if (v - field.level).abs() <= tol {
            return Ok(mid);
        }
        if v >= field.level {
            lo = mid;
        } else {
            hi = mid;
        }
        if norm([hi[0] - lo[0], hi[1] - lo[1]]) <= tol {
            break;
        }
    }
    Ok([0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])])
}

/// Smoothed characteristic field of the unit disk, for tests and demos.
pub fn smoothed_disk_field(center: Vec2, radius: f64, width: f64) -> CharacteristicField {
    CharacteristicField::from_fn(
        move |x| {
            let r = norm([x[0] - center[0], x[1] - center[1]]);
            0.5 * (1.0 - ((r - radius) / width).tanh())
        },
        0.5,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use approx::assert_relative_eq;

    #[test]
    fn contains_disk_and_ellipse() {
        let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        assert!(disk.contains([0.0, 0.0]).unwrap());
        assert!(!disk.contains([2.0, 0.0]).unwrap());
        // On-boundary convention.
        let ell = Domain::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 };
        assert!(ell.contains([2.0, 0.0]).unwrap());
        assert!(disk.contains([f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn sample_interior_containment_and_determinism() {
        let iv = Domain::Interval { a: -1.0, b: 1.0 };
        let pts = iv.sample_interior(3, (0.0, 1.0), &mut seed::rng(7)).unwrap();
        assert_eq!(pts.len(), 3);
        for p in &pts {
            assert!((-1.0..=1.0).contains(&p.x[0]));
        }

        let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let pts = disk.sample_interior(1000, (0.0, 1.0), &mut seed::rng(3)).unwrap();
        assert_eq!(pts.len(), 1000);
        for p in &pts {
            assert!(p.x[0] * p.x[0] + p.x[1] * p.x[1] <= 1.0 + 1e-12);
        }

        assert!(disk.sample_interior(0, (0.0, 1.0), &mut seed::rng(1)).unwrap().is_empty());

        let a = disk.sample_interior(50, (0.0, 1.0), &mut seed::rng(11)).unwrap();
        let b = disk.sample_interior(50, (0.0, 1.0), &mut seed::rng(11)).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.x, q.x);
            assert_eq!(p.t, q.t);
        }
    }

    #[test]
    fn sample_interior_quadrant_uniformity() {
        let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let pts = disk.sample_interior(100_000, (0.0, 1.0), &mut seed::rng(5)).unwrap();
        let mut quad = [0usize; 4];
        for p in &pts {
            let q = (if p.x[0] >= 0.0 { 0 } else { 1 }) + if p.x[1] >= 0.0 { 0 } else { 2 };
            quad[q] += 1;
        }
        for q in quad {
            let frac = q as f64 / 100_000.0;
            assert!((frac - 0.25).abs() < 0.015, "quadrant fraction {frac}");
        }
    }

    #[test]
    fn degenerate_domain_errors() {
        // A field that is nowhere above its level accepts nothing.
        let dom = Domain::Implicit {
            field: CharacteristicField::from_fn(|_| 0.0, 0.5),
            bbox: ([-1.0, -1.0], [1.0, 1.0]),
        };
        assert!(matches!(
            dom.sample_interior(5, (0.0, 1.0), &mut seed::rng(1)),
            Err(Error::DegenerateDomain)
        ));
    }

    #[test]
    fn boundary_points_disk() {
        let disk = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        for (theta, expect) in [
            (0.0, [1.0, 0.0]),
            (PI / 2.0, [0.0, 1.0]),
            (PI, [-1.0, 0.0]),
            (1.5 * PI, [0.0, -1.0]),
        ] {
            let bp = disk.boundary_point_at(theta, 0.0).unwrap();
            assert_relative_eq!(bp.position[0], expect[0], epsilon = 1e-12);
            assert_relative_eq!(bp.position[1], expect[1], epsilon = 1e-12);
            assert_relative_eq!(bp.normal[0], expect[0], epsilon = 1e-12);
            assert_relative_eq!(bp.normal[1], expect[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn boundary_points_ellipse_and_interval() {
        let ell = Domain::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 };
        let bp = ell.boundary_point_at(0.0, 0.0).unwrap();
        assert_relative_eq!(bp.position[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(bp.normal[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(bp.normal[1], 0.0, epsilon = 1e-12);

        let iv = Domain::Interval { a: -1.0, b: 1.0 };
        let bps = iv.sample_boundary(6, (0.0, 1.0), &mut seed::rng(2)).unwrap();
        for bp in &bps {
            assert!(bp.position[0] == -1.0 || bp.position[0] == 1.0);
        }
    }

    #[test]
    fn ellipse_normals_match_gradient_direction() {
        // n is proportional to (x/a^2, y/b^2) normalized.
        let (a, b) = (2.0, 1.0);
        let ell = Domain::Ellipse { center: [0.0, 0.0], a, b };
        for k in 0..100 {
            let theta = 2.0 * PI * k as f64 / 100.0;
            let bp = ell.boundary_point_at(theta, 0.0).unwrap();
            let g = [bp.position[0] / (a * a), bp.position[1] / (b * b)];
            let gn = norm(g);
            assert_relative_eq!(bp.normal[0], g[0] / gn, epsilon = 1e-10);
            assert_relative_eq!(bp.normal[1], g[1] / gn, epsilon = 1e-10);
            assert_relative_eq!(dot(bp.normal, bp.tangent), 0.0, epsilon = 1e-12);
            assert_relative_eq!(norm(bp.normal), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bisection_finds_disk_boundary() {
        let field = smoothed_disk_field([0.0, 0.0], 1.0, 0.01);
        let p = bisect_boundary(&field, [0.0, 0.0], [2.0, 0.0], 1e-8).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(p[1], 0.0, epsilon = 1e-12);

        let p = bisect_boundary(&field, [0.0, 0.0], [0.0, -3.0], 1e-8).unwrap();
        assert_relative_eq!(p[1], -1.0, epsilon = 1e-6);

        assert!(matches!(
            bisect_boundary(&field, [0.0, 0.0], [0.1, 0.0], 1e-8),
            Err(Error::BracketInvalid)
        ));
    }

    #[test]
    fn implicit_boundary_sampling() {
        let dom = Domain::Implicit {
            field: smoothed_disk_field([0.0, 0.0], 1.0, 0.01),
            bbox: ([-2.0, -2.0], [2.0, 2.0]),
        };
        let bps = dom.sample_boundary(64, (0.0, 1.0), &mut seed::rng(9)).unwrap();
        assert!(!bps.is_empty());
        for bp in &bps {
            let r = norm(bp.position);
            assert!((r - 1.0).abs() < 1e-3, "boundary radius {r}");
            assert_relative_eq!(norm(bp.normal), 1.0, epsilon = 1e-9);
            // Radial normal on a circle.
            let radial = [bp.position[0] / r, bp.position[1] / r];
            assert!(dot(bp.normal, radial) > 0.999);
        }
    }

    #[test]
    fn curvature_circle_and_ellipse() {
        let circle = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let (speed, _, kappa) = circle.curvature_and_metric(0.7).unwrap();
        assert_relative_eq!(speed, 1.0, epsilon = 1e-12);
        assert_relative_eq!(kappa, 1.0, epsilon = 1e-12);

        let circle2 = Domain::Disk { center: [0.0, 0.0], radius: 2.0 };
        let (speed, _, kappa) = circle2.curvature_and_metric(1.3).unwrap();
        assert_relative_eq!(speed, 2.0, epsilon = 1e-12);
        assert_relative_eq!(kappa, 0.5, epsilon = 1e-12);

        // kappa = a b / (a^2 sin^2 + b^2 cos^2)^{3/2}; at theta=0 this is a/b^2.
        let ell = Domain::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 };
        let (_, _, kappa) = ell.curvature_and_metric(0.0).unwrap();
        assert_relative_eq!(kappa, 2.0, epsilon = 1e-12);
        let theta: f64 = 0.9;
        let (_, _, kappa) = ell.curvature_and_metric(theta).unwrap();
        let expect = 2.0 / (4.0 * theta.sin().powi(2) + theta.cos().powi(2)).powf(1.5);
        assert_relative_eq!(kappa, expect, epsilon = 1e-12);

        let dom = Domain::Implicit {
            field: smoothed_disk_field([0.0, 0.0], 1.0, 0.01),
            bbox: ([-2.0, -2.0], [2.0, 2.0]),
        };
        assert!(matches!(dom.curvature_and_metric(0.0), Err(Error::NoParameterization)));
    }

    #[test]
    fn bounding_box_contains_domain() {
        let ell = Domain::Ellipse { center: [0.5, -0.25], a: 2.0, b: 1.0 };
        let (lo, hi) = ell.bounding_box();
        let pts = ell.sample_interior(2000, (0.0, 1.0), &mut seed::rng(4)).unwrap();
        for p in &pts {
            assert!(p.x[0] >= lo[0] && p.x[0] <= hi[0]);
            assert!(p.x[1] >= lo[1] && p.x[1] <= hi[1]);
        }
    }
}
