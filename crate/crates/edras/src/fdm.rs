//! Independent finite-difference reference solvers: 1D periodic Allen-Cahn
//! on [-1, 1] (semi-implicit) and 2D Allen-Cahn on the unit disk in polar
//! coordinates under Neumann or dynamic boundary conditions (explicit).

use std::f64::consts::PI;

use crate::geometry::SpaceTimePoint;
use crate::model::{BcKind, PdeSystem};
use crate::{Error, Result};

/// Grid layout of a reference solution.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum GridKind {
    /// Periodic nodes x_i = -1 + i dx, i = 0..nx, dx = 2/nx.
    Line1d { nx: usize },
    /// Unit disk: node 0 is the origin; node 1 + (i-1)*ntheta + j is
    /// (r_i, theta_j) with r_i = i/nr, theta_j = 2 pi j / ntheta.
    Polar { nr: usize, ntheta: usize },
}

/// A reference solution: stored time slices of the field on a fixed grid.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSolution {
    pub kind: GridKind,
    pub regime: BcKind,
    pub times: Vec<f64>,
    pub slices: Vec<Vec<f64>>,
}

/// Default stored slices: segment endpoints plus mid-times used in figures.
pub fn default_store_times(endpoints: &[f64]) -> Vec<f64> {
    let mut times = vec![0.0, 0.15, 0.3, 0.5, 0.7, 0.9];
    times.extend_from_slice(endpoints);
    times.retain(|t| *t <= endpoints.last().copied().unwrap_or(1.0) + 1e-12);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    times
}

const BLOWUP_LIMIT: f64 = 10.0;

/// Semi-implicit 1D periodic solve: diffusion implicit, reaction explicit.
pub fn solve_1d_periodic(
    sys: &PdeSystem,
    nx: usize,
    dt: f64,
    store_times: &[f64],
) -> Result<GridSolution> {
    solve_1d_periodic_forced(sys, nx, dt, store_times, None)
}

/// As `solve_1d_periodic`, with an optional manufactured forcing term
/// added to the right-hand side (used by convergence studies).
pub fn solve_1d_periodic_forced(
    sys: &PdeSystem,
    nx: usize,
    dt: f64,
    store_times: &[f64],
    forcing: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<GridSolution> {
    if nx < 16 {
        return Err(Error::InvalidArgument("nx must be at least 16".to_string()));
    }
    if dt <= 0.0 {
        return Err(Error::InvalidArgument("dt must be positive".to_string()));
    }
    let dx = 2.0 / nx as f64;
    let xs: Vec<f64> = (0..nx).map(|i| -1.0 + i as f64 * dx).collect();
    let mut phi: Vec<f64> = xs.iter().map(|&x| (sys.initial_condition)([x, 0.0])).collect();

    let mut times = store_times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let t_end = times.last().copied().unwrap_or(0.0);

    let mut out = GridSolution {
        kind: GridKind::Line1d { nx },
        regime: sys.bc_kind,
        times: Vec::new(),
        slices: Vec::new(),
    };
    let mut next_store = 0usize;
    let mut maybe_store = |t: f64, phi: &[f64], out: &mut GridSolution| {
        while next_store < times.len() && times[next_store] <= t + dt * 0.5 {
            out.times.push(times[next_store]);
            out.slices.push(phi.to_vec());
            next_store += 1;
        }
    };
    maybe_store(0.0, &phi, &mut out);

    // (I - dt M_b eps^2 D2) phi_new = phi - dt M_b f'(phi) + dt F.
    let beta = dt * sys.m_b * sys.eps2 / (dx * dx);
    let mut rhs = vec![0.0; nx];
    let n_steps = (t_end / dt).round() as usize;
    for step in 0..n_steps {
        let t = step as f64 * dt;
        for i in 0..nx {
            rhs[i] = phi[i] - dt * sys.m_b * (sys.f_prime)(phi[i]);
            if let Some(f) = forcing {
                rhs[i] += dt * f(xs[i], t);
            }
        }
        phi = solve_periodic_tridiag(1.0 + 2.0 * beta, -beta, &rhs);
        if phi.iter().any(|v| v.abs() > BLOWUP_LIMIT || !v.is_finite()) {
            return Err(Error::Instability);
        }
        maybe_store((step + 1) as f64 * dt, &phi, &mut out);
    }
    Ok(out)
}

/// Solves the cyclic tridiagonal system with constant diagonal `d` and
/// off-diagonal `e` by the Sherman-Morrison correction over the Thomas
/// algorithm.
fn solve_periodic_tridiag(d: f64, e: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    // Modified system removes the corner entries via u v^T with
    // u = (gamma, 0, .., e), v = (1, 0, .., e/gamma).
    let gamma = -d;
    let mut diag = vec![d; n];
    diag[0] = d - gamma;
    diag[n - 1] = d - e * e / gamma;
    let y = solve_tridiag(&diag, e, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = e;
    let q = solve_tridiag(&diag, e, &u);
    let vy = y[0] + e / gamma * y[n - 1];
    let vq = q[0] + e / gamma * q[n - 1];
    let factor = vy / (1.0 + vq);
    (0..n).map(|i| y[i] - factor * q[i]).collect()
}

/// Thomas algorithm with constant off-diagonals `e` and given diagonal.
fn solve_tridiag(diag: &[f64], e: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = e / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - e * c[i - 1];
        c[i] = e / m;
        d[i] = (rhs[i] - e * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Explicit polar-grid solve on the unit disk. The origin is collocated and
/// updated with the 5-point average limit formula for the Laplacian at r=0.
pub fn solve_2d_disk(
    sys: &PdeSystem,
    nr: usize,
    ntheta: usize,
    dt: f64,
    regime: BcKind,
    store_times: &[f64],
) -> Result<GridSolution> {
    if regime == BcKind::Periodic1d {
        return Err(Error::WrongRegime);
    }
    if nr < 8 || ntheta < 8 {
        return Err(Error::InvalidArgument("nr and ntheta must be at least 8".to_string()));
    }
    let dr = 1.0 / nr as f64;
    let dth = 2.0 * PI / ntheta as f64;
    let n_nodes = 1 + nr * ntheta;
    let idx = |i: usize, j: usize| 1 + (i - 1) * ntheta + j % ntheta;

    let mut phi = vec![0.0; n_nodes];
    phi[0] = (sys.initial_condition)([0.0, 0.0]);
    for i in 1..=nr {
        let r = i as f64 * dr;
        for j in 0..ntheta {
            let th = j as f64 * dth;
            phi[idx(i, j)] = (sys.initial_condition)([r * th.cos(), r * th.sin()]);
        }
    }

    let mut times = store_times.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let t_end = times.last().copied().unwrap_or(0.0);

    let mut out = GridSolution {
        kind: GridKind::Polar { nr, ntheta },
        regime,
        times: Vec::new(),
        slices: Vec::new(),
    };
    let mut next_store = 0usize;
    let mut maybe_store = |t: f64, phi: &[f64], out: &mut GridSolution| {
        while next_store < times.len() && times[next_store] <= t + dt * 0.5 {
            out.times.push(times[next_store]);
            out.slices.push(phi.to_vec());
            next_store += 1;
        }
    };
    maybe_store(0.0, &phi, &mut out);

    let mut next = vec![0.0; n_nodes];
    let n_steps = (t_end / dt).round() as usize;
    for step in 0..n_steps {
        // Origin: lap = 4 (ring-average - phi0) / dr^2.
        let ring_avg: f64 =
            (0..ntheta).map(|j| phi[idx(1, j)]).sum::<f64>() / ntheta as f64;
        let lap0 = 4.0 * (ring_avg - phi[0]) / (dr * dr);
        next[0] = phi[0] + dt * sys.m_b * (sys.eps2 * lap0 - (sys.f_prime)(phi[0]));

        for i in 1..nr {
            let r = i as f64 * dr;
            for j in 0..ntheta {
                let c = phi[idx(i, j)];
                let inner = if i == 1 { phi[0] } else { phi[idx(i - 1, j)] };
                let outer = phi[idx(i + 1, j)];
                let left = phi[idx(i, (j + ntheta - 1) % ntheta)];
                let right = phi[idx(i, j + 1)];
                let lap = (outer - 2.0 * c + inner) / (dr * dr)
                    + (outer - inner) / (2.0 * dr * r)
                    + (right - 2.0 * c + left) / (r * r * dth * dth);
                next[idx(i, j)] = c + dt * sys.m_b * (sys.eps2 * lap - (sys.f_prime)(c));
            }
        }

        // Boundary ring i = nr (r = 1).
        for j in 0..ntheta {
            let c = phi[idx(nr, j)];
            let left = phi[idx(nr, (j + ntheta - 1) % ntheta)];
            let right = phi[idx(nr, j + 1)];
            match regime {
                BcKind::Neumann => {
                    // Ghost node phi_{nr+1} = phi_{nr-1} enforces dphi/dr = 0.
                    let inner = phi[idx(nr - 1, j)];
                    let lap = (2.0 * inner - 2.0 * c) / (dr * dr)
                        + (right - 2.0 * c + left) / (dth * dth);
                    next[idx(nr, j)] = c + dt * sys.m_b * (sys.eps2 * lap - (sys.f_prime)(c));
                }
                BcKind::Dynamic => {
                    // phi_t = -M_s (g'(phi) - eps_s^2 phi_tt(theta) + eps^2 phi_r).
                    let phi_thth = (right - 2.0 * c + left) / (dth * dth);
                    let phi_r = (3.0 * c - 4.0 * phi[idx(nr - 1, j)] + phi[idx(nr - 2, j)])
                        / (2.0 * dr);
                    let mu_s =
                        (sys.g_prime)(c) - sys.eps_s2 * phi_thth + sys.eps2 * phi_r;
                    next[idx(nr, j)] = c - dt * sys.m_s * mu_s;
                }
                BcKind::Periodic1d => unreachable!(),
            }
        }

        std::mem::swap(&mut phi, &mut next);
        if step % 200 == 0 && phi.iter().any(|v| v.abs() > BLOWUP_LIMIT || !v.is_finite()) {
            return Err(Error::Instability);
        }
        maybe_store((step + 1) as f64 * dt, &phi, &mut out);
    }
    if phi.iter().any(|v| v.abs() > BLOWUP_LIMIT || !v.is_finite()) {
        return Err(Error::Instability);
    }
    Ok(out)
}

impl GridSolution {
    /// Index of a stored time, if present.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() < 1e-9)
    }

    /// Interpolates the stored solution: linear (1D) / bilinear (polar) in
    /// space, linear between stored time slices; exact at nodes.
    pub fn interpolate(&self, p: &SpaceTimePoint) -> Result<f64> {
        let t = p.t;
        let (t0, t1) = match self.times.iter().position(|s| *s >= t - 1e-12) {
            Some(0) if t <= self.times[0] + 1e-12 => (0, 0),
            Some(k) => (k - 1, k),
            None => return Err(Error::TimeOutOfRange),
        };
        if t < self.times[0] - 1e-12 {
            return Err(Error::TimeOutOfRange);
        }
        let v0 = self.interpolate_space(&self.slices[t0], p)?;
        if t0 == t1 {
            return Ok(v0);
        }
        let v1 = self.interpolate_space(&self.slices[t1], p)?;
        let w = (t - self.times[t0]) / (self.times[t1] - self.times[t0]);
        Ok(v0 * (1.0 - w) + v1 * w)
    }

    fn interpolate_space(&self, slice: &[f64], p: &SpaceTimePoint) -> Result<f64> {
        match self.kind {
            GridKind::Line1d { nx } => {
                let dx = 2.0 / nx as f64;
                // Periodic wrap onto [-1, 1).
                let mut x = (p.x[0] + 1.0).rem_euclid(2.0);
                if !x.is_finite() {
                    return Err(Error::NonFinitePoint);
                }
                if x >= 2.0 {
                    x = 0.0;
                }
                let fi = x / dx;
                let i0 = fi.floor() as usize % nx;
                let i1 = (i0 + 1) % nx;
                let w = fi - fi.floor();
                Ok(slice[i0] * (1.0 - w) + slice[i1] * w)
            }
            GridKind::Polar { nr, ntheta } => {
                let r = (p.x[0] * p.x[0] + p.x[1] * p.x[1]).sqrt();
                if !r.is_finite() {
                    return Err(Error::NonFinitePoint);
                }
                if r > 1.0 + 1e-9 {
                    return Err(Error::InvalidArgument("point outside unit disk".to_string()));
                }
                let dr = 1.0 / nr as f64;
                let dth = 2.0 * PI / ntheta as f64;
                let th = p.x[1].atan2(p.x[0]).rem_euclid(2.0 * PI);
                let fj = th / dth;
                let j0 = (fj.floor() as usize) % ntheta;
                let j1 = (j0 + 1) % ntheta;
                let wj = fj - fj.floor();
                let at_ring = |i: usize, j0: usize, j1: usize, wj: f64| -> f64 {
                    if i == 0 {
                        slice[0]
                    } else {
                        let a = slice[1 + (i - 1) * ntheta + j0];
                        let b = slice[1 + (i - 1) * ntheta + j1];
                        a * (1.0 - wj) + b * wj
                    }
                };
                let fi = (r / dr).min(nr as f64);
                let i0 = fi.floor() as usize;
                let i1 = (i0 + 1).min(nr);
                let wi = if i0 == i1 { 0.0 } else { fi - i0 as f64 };
                let v0 = at_ring(i0, j0, j1, wj);
                let v1 = at_ring(i1, j0, j1, wj);
                Ok(v0 * (1.0 - wi) + v1 * wi)
            }
        }
    }

    /// Discrete free energy of a stored slice (finite-difference gradients,
    /// composite quadrature). Includes the surface term in the dynamic
    /// regime.
    pub fn slice_energy(&self, sys: &PdeSystem, slice_idx: usize) -> f64 {
        let slice = &self.slices[slice_idx];
        match self.kind {
            GridKind::Line1d { nx } => {
                let dx = 2.0 / nx as f64;
                let mut acc = 0.0;
                for i in 0..nx {
                    let gx = (slice[(i + 1) % nx] - slice[(i + nx - 1) % nx]) / (2.0 * dx);
                    acc += (0.5 * sys.eps2 * gx * gx + (sys.f)(slice[i])) * dx;
                }
                acc
            }
            GridKind::Polar { nr, ntheta } => {
                let dr = 1.0 / nr as f64;
                let dth = 2.0 * PI / ntheta as f64;
                let idx = |i: usize, j: usize| 1 + (i - 1) * ntheta + j % ntheta;
                let mut acc = (sys.f)(slice[0]) * PI * (0.5 * dr) * (0.5 * dr);
                for i in 1..=nr {
                    let r = i as f64 * dr;
                    let wr = if i == nr { 0.5 } else { 1.0 };
                    for j in 0..ntheta {
                        let c = slice[idx(i, j)];
                        let inner = if i == 1 { slice[0] } else { slice[idx(i - 1, j)] };
                        let gr = if i == nr {
                            (c - inner) / dr
                        } else {
                            (slice[idx(i + 1, j)] - inner) / (2.0 * dr)
                        };
                        let gt = (slice[idx(i, j + 1)] - slice[idx(i, (j + ntheta - 1) % ntheta)])
                            / (2.0 * dth * r);
                        acc += (0.5 * sys.eps2 * (gr * gr + gt * gt) + (sys.f)(c))
                            * r
                            * dr
                            * dth
                            * wr;
                    }
                }
                if self.regime == BcKind::Dynamic {
                    for j in 0..ntheta {
                        let c = slice[idx(nr, j)];
                        let gt = (slice[idx(nr, j + 1)] - slice[idx(nr, (j + ntheta - 1) % ntheta)])
                            / (2.0 * dth);
                        acc += (0.5 * sys.eps_s2 * gt * gt + (sys.g)(c)) * dth;
                    }
                }
                acc
            }
        }
    }

    /// All grid nodes at every stored time, as evaluation points.
    pub fn native_eval_points(&self) -> Vec<SpaceTimePoint> {
        let mut pts = Vec::new();
        for &t in &self.times {
            match self.kind {
                GridKind::Line1d { nx } => {
                    let dx = 2.0 / nx as f64;
                    for i in 0..nx {
                        pts.push(SpaceTimePoint::interior([-1.0 + i as f64 * dx, 0.0], t));
                    }
                }
                GridKind::Polar { nr, ntheta } => {
                    pts.push(SpaceTimePoint::interior([0.0, 0.0], t));
                    let dr = 1.0 / nr as f64;
                    let dth = 2.0 * PI / ntheta as f64;
                    for i in 1..=nr {
                        let r = i as f64 * dr;
                        for j in 0..ntheta {
                            let th = j as f64 * dth;
                            pts.push(SpaceTimePoint::interior(
                                [r * th.cos(), r * th.sin()],
                                t,
                            ));
                        }
                    }
                }
            }
        }
        pts
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::double_well_prime;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    #[test]
    fn constant_one_is_a_fixed_point() {
        let mut sys = PdeSystem::ac1d_periodic();
        sys.initial_condition = Arc::new(|_| 1.0);
        let sol = solve_1d_periodic(&sys, 64, 1e-4, &[0.0, 0.05, 0.1]).unwrap();
        for slice in &sol.slices {
            for v in slice {
                assert!((v - 1.0).abs() <= 1e-12, "drift {}", (v - 1.0).abs());
            }
        }
    }

    #[test]
    fn instability_detected() {
        let mut sys = PdeSystem::ac1d_periodic();
        // A violently anti-diffusive setup blows up: huge reaction explicit.
        sys.m_b = 1e8;
        assert!(matches!(
            solve_1d_periodic(&sys, 64, 1e-2, &[0.0, 1.0]),
            Err(Error::Instability)
        ));
    }

    #[test]
    fn spatial_convergence_order_at_least_1_9() {
        // Manufactured solution phi*(x,t) = sin(pi x) cos(t) in a
        // diffusion-dominated regime, forcing chosen so phi* solves the
        // forced equation exactly.
        let mut sys = PdeSystem::ac1d_periodic();
        sys.m_b = 1.0;
        sys.eps2 = 1.0;
        sys.initial_condition = Arc::new(|x: Vec2f| (PI * x[0]).sin());
        type Vec2f = [f64; 2];
        let exact = |x: f64, t: f64| (PI * x).sin() * t.cos();
        let forcing = move |x: f64, t: f64| {
            let u = exact(x, t);
            let ut = -(PI * x).sin() * t.sin();
            let uxx = -PI * PI * u;
            ut - 1.0 * (1.0 * uxx - double_well_prime(u))
        };
        let t_end = 0.05;
        let dt = 1e-6;
        let mut errs = Vec::new();
        for nx in [16usize, 32, 64] {
            let sol =
                solve_1d_periodic_forced(&sys, nx, dt, &[0.0, t_end], Some(&forcing)).unwrap();
            let slice = &sol.slices[1];
            let dx = 2.0 / nx as f64;
            let err = (0..nx)
                .map(|i| (slice[i] - exact(-1.0 + i as f64 * dx, t_end)).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 >= 1.9, "observed order {order1} ({errs:?})");
        assert!(order2 >= 1.9, "observed order {order2} ({errs:?})");
    }

    #[test]
    fn one_d_oracle_symmetry_and_interfaces() {
        // Even initial condition x^2 cos(pi x) keeps the solution even in x;
        // late-time profile plateaus near +-1 with transitions near +-0.5.
        let sys = PdeSystem::ac1d_periodic();
        let sol = solve_1d_periodic(&sys, 256, 2e-5, &[0.0, 0.9]).unwrap();
        let nx = 256;
        let slice = &sol.slices[1];
        for i in 1..nx / 2 {
            let asym = (slice[i] - slice[nx - i]).abs();
            assert!(asym <= 1e-10, "asymmetry {asym} at node {i}");
        }
        // Outer plateaus near -1, inner plateau near +1, dip at x = 0.
        let at = |x: f64| slice[(((x + 1.0) / (2.0 / nx as f64)).round() as usize) % nx];
        assert!(at(0.75) < -0.9, "outer plateau value {}", at(0.75));
        assert!(at(-0.75) < -0.9);
        assert!(at(0.25) > 0.9, "inner plateau value {}", at(0.25));
        assert!(at(0.0) < 0.2, "dip value {}", at(0.0));
        // A transition exists inside |x| in [0.4, 0.6].
        let crossings = (0..nx - 1)
            .filter(|&i| {
                let x = -1.0 + i as f64 * 2.0 / nx as f64;
                (0.4..0.6).contains(&x.abs()) && slice[i] * slice[i + 1] <= 0.0
            })
            .count();
        assert!(crossings >= 1);
    }

    #[test]
    fn one_d_energy_non_increasing() {
        let sys = PdeSystem::ac1d_periodic();
        let sol =
            solve_1d_periodic(&sys, 256, 2e-5, &[0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0])
                .unwrap();
        for k in 1..sol.times.len() {
            let e0 = sol.slice_energy(&sys, k - 1);
            let e1 = sol.slice_energy(&sys, k);
            assert!(e1 <= e0 + 1e-8, "energy rose: {e0} -> {e1}");
        }
    }

    #[test]
    fn disk_constant_fixed_point_both_regimes() {
        for regime in [BcKind::Neumann, BcKind::Dynamic] {
            let mut sys = PdeSystem::ac2d_dynamic(2.0, 2.0);
            sys.initial_condition = Arc::new(|_| -1.0);
            let sol = solve_2d_disk(&sys, 16, 16, 1e-4, regime, &[0.0, 0.05]).unwrap();
            for v in &sol.slices[1] {
                assert!((v + 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn disk_neumann_energy_non_increasing() {
        let sys = PdeSystem::ac2d_neumann(2.0);
        let sol = solve_2d_disk(&sys, 32, 32, 5e-5, BcKind::Neumann, &[0.0, 0.1, 0.2, 0.4])
            .unwrap();
        for k in 1..sol.times.len() {
            let e0 = sol.slice_energy(&sys, k - 1);
            let e1 = sol.slice_energy(&sys, k);
            assert!(e1 <= e0 + 1e-8, "energy rose: {e0} -> {e1}");
        }
    }

    #[test]
    fn dynamic_high_surface_mobility_coarsens_boundary_faster() {
        // M_s = 10 drives the boundary field toward the +-1 plateaus faster
        // than M_s = 2, at matched M_b = 2.
        let mut boundary_dist = Vec::new();
        for m_s in [2.0, 10.0] {
            let sys = PdeSystem::ac2d_dynamic(2.0, m_s);
            let sol =
                solve_2d_disk(&sys, 32, 32, 5e-5, BcKind::Dynamic, &[0.0, 1.0]).unwrap();
            let slice = sol.slices.last().unwrap();
            let ntheta = 32;
            let start = 1 + (32 - 1) * ntheta;
            let dist: f64 = slice[start..start + ntheta]
                .iter()
                .map(|v| (v.abs() - 1.0).powi(2))
                .sum::<f64>()
                / ntheta as f64;
            boundary_dist.push(dist);
        }
        assert!(
            boundary_dist[1] < boundary_dist[0],
            "expected faster coarsening for M_s=10: {boundary_dist:?}"
        );
    }

    #[test]
    fn interpolation_examples() {
        let mut sys = PdeSystem::ac1d_periodic();
        sys.initial_condition = Arc::new(|x: [f64; 2]| x[0]);
        // Do not evolve: store only t = 0.
        let sol = solve_1d_periodic(&sys, 64, 1e-4, &[0.0]).unwrap();
        // Node query is exact.
        let dx = 2.0 / 64.0;
        let p = SpaceTimePoint::interior([-1.0 + 3.0 * dx, 0.0], 0.0);
        assert_relative_eq!(sol.interpolate(&p).unwrap(), -1.0 + 3.0 * dx, epsilon = 1e-14);
        // Midpoint of a linear field is the average of neighbors.
        let p = SpaceTimePoint::interior([-1.0 + 3.5 * dx, 0.0], 0.0);
        assert_relative_eq!(sol.interpolate(&p).unwrap(), -1.0 + 3.5 * dx, epsilon = 1e-14);
        // Outside the stored time range errors.
        let p = SpaceTimePoint::interior([0.0, 0.0], 0.5);
        assert!(sol.interpolate(&p).is_err());
    }
}
