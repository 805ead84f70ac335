//! The Allen-Cahn systems: free-energy densities, residual densities, and
//! energy-dissipation-rate densities for periodic, Neumann, and dynamic
//! boundary regimes, plus energy quadrature.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::geometry::{dot, Domain, Vec2};
use crate::network::SolutionModel;
use crate::{seed, Error, Result};

/// Boundary-condition regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Periodic1d,
    Neumann,
    Dynamic,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FieldFn = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;

/// Allen-Cahn parameter bundle plus density evaluators.
#[derive(Clone)]
pub struct PdeSystem {
    /// Bulk interface-width parameter, squared.
    pub eps2: f64,
    /// Surface interface-width parameter, squared.
    pub eps_s2: f64,
    /// Bulk mobility.
    pub m_b: f64,
    /// Surface mobility (used by the dynamic regime).
    pub m_s: f64,
    pub bc_kind: BcKind,
    pub f: ScalarFn,
    pub f_prime: ScalarFn,
    pub f_second: ScalarFn,
    pub g: ScalarFn,
    pub g_prime: ScalarFn,
    pub g_second: ScalarFn,
    pub initial_condition: FieldFn,
    pub terminal_time: f64,
}

impl std::fmt::Debug for PdeSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeSystem")
            .field("eps2", &self.eps2)
            .field("eps_s2", &self.eps_s2)
            .field("m_b", &self.m_b)
            .field("m_s", &self.m_s)
            .field("bc_kind", &self.bc_kind)
            .field("terminal_time", &self.terminal_time)
            .finish()
    }
}

/// Double-well potential f(phi) = (phi^2 - 1)^2 / 4.
pub fn double_well(phi: f64) -> f64 {
    let q = phi * phi - 1.0;
    0.25 * q * q
}

/// f'(phi) = phi^3 - phi.
pub fn double_well_prime(phi: f64) -> f64 {
    phi * phi * phi - phi
}

/// f''(phi) = 3 phi^2 - 1.
pub fn double_well_second(phi: f64) -> f64 {
    3.0 * phi * phi - 1.0
}

impl PdeSystem {
    fn with_double_well(
        eps2: f64,
        eps_s2: f64,
        m_b: f64,
        m_s: f64,
        bc_kind: BcKind,
        initial_condition: FieldFn,
        terminal_time: f64,
    ) -> Self {
        Self {
            eps2,
            eps_s2,
            m_b,
            m_s,
            bc_kind,
            f: Arc::new(double_well),
            f_prime: Arc::new(double_well_prime),
            f_second: Arc::new(double_well_second),
            g: Arc::new(double_well),
            g_prime: Arc::new(double_well_prime),
            g_second: Arc::new(double_well_second),
            initial_condition,
            terminal_time,
        }
    }

    /// 1D periodic model: phi_t = 0.0001 phi_xx - 5 phi^3 + 5 phi on [-1,1],
    /// phi(x, 0) = x^2 cos(pi x). The coefficients factor as M_b = 5 and
    /// eps^2 = 0.00002.
    pub fn ac1d_periodic() -> Self {
        Self::with_double_well(
            0.00002,
            0.0,
            5.0,
            0.0,
            BcKind::Periodic1d,
            Arc::new(|x: Vec2| x[0] * x[0] * (PI * x[0]).cos()),
            1.0,
        )
    }

    /// 2D disk model with zero-flux Neumann boundary.
    pub fn ac2d_neumann(m_b: f64) -> Self {
        Self::with_double_well(
            DEFAULT_EPS2_2D,
            0.0,
            m_b,
            0.0,
            BcKind::Neumann,
            Arc::new(default_initial_2d),
            1.0,
        )
    }

    /// 2D model with an Allen-Cahn-type dynamic boundary condition.
    pub fn ac2d_dynamic(m_b: f64, m_s: f64) -> Self {
        Self::with_double_well(
            DEFAULT_EPS2_2D,
            DEFAULT_EPS2_2D,
            m_b,
            m_s,
            BcKind::Dynamic,
            Arc::new(default_initial_2d),
            1.0,
        )
    }
}

/// Default squared interface width for the 2D presets.
pub const DEFAULT_EPS2_2D: f64 = 0.001;

/// Default 2D initial field: a smooth multi-mode pattern clamped to [-1, 1].
pub fn default_initial_2d(x: Vec2) -> f64 {
    let mut v = 0.0;
    for k in 1..=4 {
        let kf = k as f64;
        v += (kf * x[0] + kf).cos() * ((kf + 1.0) * x[1]).cos();
    }
    (0.05 * v).clamp(-1.0, 1.0)
}

/// Pointwise data of a solution field and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct FieldSample {
    pub value: f64,
    pub dt: f64,
    pub grad: Vec2,
    pub laplacian: f64,
    /// Surface Laplacian, boundary points on a parameterized boundary only.
    pub surf_laplacian: Option<f64>,
    /// n . grad(phi), boundary points only.
    pub normal_deriv: Option<f64>,
}

impl FieldSample {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.dt.is_finite()
            && self.grad[0].is_finite()
            && self.grad[1].is_finite()
            && self.laplacian.is_finite()
    }
}

impl PdeSystem {
    /// Bulk chemical potential mu = f'(phi) - eps^2 lap(phi).
    pub fn chemical_potential(&self, s: &FieldSample) -> f64 {
        (self.f_prime)(s.value) - self.eps2 * s.laplacian
    }

    /// |phi_t + M_b (f'(phi) - eps^2 lap(phi))|.
    pub fn bulk_residual_density(&self, s: &FieldSample) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::IncompleteSample);
        }
        Ok((s.dt + self.m_b * self.chemical_potential(s)).abs())
    }

    /// |phi_t + M_s (g'(phi) - eps_s^2 surf_lap(phi) + eps^2 n.grad(phi))|,
    /// dynamic regime only.
    pub fn boundary_residual_density(&self, s: &FieldSample) -> Result<f64> {
        if self.bc_kind != BcKind::Dynamic {
            return Err(Error::WrongRegime);
        }
        let (sl, nd) = match (s.surf_laplacian, s.normal_deriv) {
            (Some(sl), Some(nd)) => (sl, nd),
            _ => return Err(Error::IncompleteSample),
        };
        let mu_s = (self.g_prime)(s.value) - self.eps_s2 * sl + self.eps2 * nd;
        Ok((s.dt + self.m_s * mu_s).abs())
    }

    /// |n . grad(phi)| for the static zero-flux boundary.
    pub fn neumann_residual_density(&self, s: &FieldSample) -> Result<f64> {
        match s.normal_deriv {
            Some(nd) => Ok(nd.abs()),
            None => Err(Error::IncompleteSample),
        }
    }

    /// Bulk energy dissipation rate density phi_t^2 / M_b.
    pub fn edrd_bulk(&self, s: &FieldSample) -> f64 {
        s.dt * s.dt / self.m_b
    }

    /// Boundary energy dissipation rate density phi_t^2 / M_s.
    pub fn edrd_boundary(&self, s: &FieldSample) -> f64 {
        s.dt * s.dt / self.m_s
    }

    /// eps^2/2 |grad(phi)|^2 + f(phi).
    pub fn bulk_energy_density(&self, s: &FieldSample) -> f64 {
        0.5 * self.eps2 * dot(s.grad, s.grad) + (self.f)(s.value)
    }

    /// eps_s^2/2 |grad_s(phi)|^2 + g(phi), with the tangential gradient
    /// |grad_s(phi)|^2 = |grad(phi)|^2 - (n.grad(phi))^2.
    pub fn surface_energy_density(&self, s: &FieldSample) -> Result<f64> {
        let nd = s.normal_deriv.ok_or(Error::IncompleteSample)?;
        let gs2 = dot(s.grad, s.grad) - nd * nd;
        Ok(0.5 * self.eps_s2 * gs2 + (self.g)(s.value))
    }
}

/// Quadrature rule for energy integrals.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Midpoint rule on an interval.
    Grid1d { nx: usize },
    /// Tensor polar grid mapped onto the disk or ellipse: midpoint in the
    /// radial coordinate with the area Jacobian, uniform (trapezoid) in the
    /// angle. Boundary integral uses the same angular nodes with the
    /// arclength metric.
    Polar { nr: usize, ntheta: usize },
    /// Rejection Monte Carlo from the bounding box with a fixed seed.
    MonteCarlo { n: usize, seed: u64 },
}

/// Bulk, surface, and total free energy of the model field at time `t`.
///
/// The surface term is zero for the periodic and Neumann regimes, where no
/// surface energy is modeled.
pub fn total_energy(
    sys: &PdeSystem,
    domain: &Domain,
    model: &SolutionModel,
    t: f64,
    quad: &QuadratureSpec,
) -> Result<(f64, f64, f64)> {
    let bulk = integrate_bulk(domain, quad, &mut |x: Vec2| -> Result<f64> {
        let s = model.evaluate_with_derivatives(x, t, None)?;
        Ok(sys.bulk_energy_density(&s))
    })?;
    let surface = if sys.bc_kind == BcKind::Dynamic {
        integrate_boundary(domain, quad, &mut |theta: f64| -> Result<f64> {
            let bp = domain.boundary_point_at(theta, t)?;
            let s = model.evaluate_with_derivatives(bp.position, t, Some((domain, &bp)))?;
            sys.surface_energy_density(&s)
        })?
    } else {
        0.0
    };
    Ok((bulk, surface, bulk + surface))
}

/// Quadrature of a pointwise density over the domain interior.
pub fn integrate_bulk(
    domain: &Domain,
    quad: &QuadratureSpec,
    density: &mut dyn FnMut(Vec2) -> Result<f64>,
) -> Result<f64> {
    match (quad, domain) {
        (QuadratureSpec::Grid1d { nx }, Domain::Interval { a, b }) => {
            if *nx == 0 {
                return Err(Error::EmptySet("quadrature nodes"));
            }
            let dx = (b - a) / *nx as f64;
            let mut acc = 0.0;
            for i in 0..*nx {
                let x = a + (i as f64 + 0.5) * dx;
                acc += density([x, 0.0])? * dx;
            }
            Ok(acc)
        }
        (QuadratureSpec::Polar { nr, ntheta }, Domain::Disk { center, radius }) => {
            polar_quadrature(*nr, *ntheta, *center, *radius, *radius, density)
        }
        (QuadratureSpec::Polar { nr, ntheta }, Domain::Ellipse { center, a, b }) => {
            polar_quadrature(*nr, *ntheta, *center, *a, *b, density)
        }
        (QuadratureSpec::MonteCarlo { n, seed: s }, _) => {
            if *n == 0 {
                return Err(Error::EmptySet("quadrature nodes"));
            }
            let (lo, hi) = domain.bounding_box();
            let box_area = match domain.dim() {
                1 => hi[0] - lo[0],
                _ => (hi[0] - lo[0]) * (hi[1] - lo[1]),
            };
            let mut rng = seed::rng(*s);
            let mut acc = 0.0;
            for _ in 0..*n {
                let x = match domain.dim() {
                    1 => [rng.gen_range(lo[0]..=hi[0]), 0.0],
                    _ => [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])],
                };
                if domain.contains(x)? {
                    acc += density(x)?;
                }
            }
            Ok(acc / *n as f64 * box_area)
        }
        _ => Err(Error::InvalidArgument(
            "quadrature rule does not match the domain kind".to_string(),
        )),
    }
}

/// Mapped polar quadrature: (x, y) = center + (a r cos, b r sin), area
/// element a b r dr dtheta.
fn polar_quadrature(
    nr: usize,
    ntheta: usize,
    center: Vec2,
    a: f64,
    b: f64,
    density: &mut dyn FnMut(Vec2) -> Result<f64>,
) -> Result<f64> {
    if nr == 0 || ntheta == 0 {
        return Err(Error::EmptySet("quadrature nodes"));
    }
    let dr = 1.0 / nr as f64;
    let dth = 2.0 * PI / ntheta as f64;
    let mut acc = 0.0;
    for i in 0..nr {
        let r = (i as f64 + 0.5) * dr;
        for j in 0..ntheta {
            let th = j as f64 * dth;
            let x = [center[0] + a * r * th.cos(), center[1] + b * r * th.sin()];
            acc += density(x)? * a * b * r * dr * dth;
        }
    }
    Ok(acc)
}

/// Quadrature of a density over a parameterized boundary, with the
/// arclength metric |gamma'(theta)|.
pub fn integrate_boundary(
    domain: &Domain,
    quad: &QuadratureSpec,
    density: &mut dyn FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let ntheta = match quad {
        QuadratureSpec::Polar { ntheta, .. } => *ntheta,
        QuadratureSpec::MonteCarlo { n, .. } => (*n).max(16),
        QuadratureSpec::Grid1d { .. } => {
            return Err(Error::InvalidArgument(
                "1D boundary has no arclength integral".to_string(),
            ))
        }
    };
    if ntheta == 0 {
        return Err(Error::EmptySet("quadrature nodes"));
    }
    let dth = 2.0 * PI / ntheta as f64;
    let mut acc = 0.0;
    for j in 0..ntheta {
        let th = j as f64 * dth;
        let (speed, _, _) = domain.curvature_and_metric(th)?;
        acc += density(th)? * speed * dth;
    }
    Ok(acc)
}
