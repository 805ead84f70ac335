//! Loss assembly, the two-phase optimizer schedule (Adam then L-BFGS),
//! resampling cadence, and time-marching orchestration.

use std::sync::Arc;

use rand::seq::SliceRandom;

use crate::geometry::{BoundaryPoint, Domain, SpaceTimePoint, Vec2};
use crate::model::{BcKind, PdeSystem};
use crate::network::{JetInput, JetOut, Mlp, MlpSpec, Segment, SolutionModel};
use crate::sampling::{
    resample_step, CandidatePool, CellGrid, ResampleOutcome, SamplingLog, Strategy, TrainingSet,
};
use crate::{seed, Error, Result};

/// Weights of the composite loss. `w_b1`/`w_b2` apply to the two periodic
/// constraints (value and derivative mismatch) in the 1D regime; `w_b`
/// applies to the single boundary term otherwise.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub w_f: f64,
    pub w_b: f64,
    pub w_i: f64,
    pub w_b1: f64,
    pub w_b2: f64,
}

impl LossWeights {
    pub fn reference_1d() -> Self {
        Self { w_f: 1.0, w_b: 1.0, w_i: 100.0, w_b1: 1.0, w_b2: 50.0 }
    }

    pub fn reference_2d() -> Self {
        Self { w_f: 1.0, w_b: 1.0, w_i: 1000.0, w_b1: 0.0, w_b2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("w_f", self.w_f),
            ("w_b", self.w_b),
            ("w_i", self.w_i),
            ("w_b1", self.w_b1),
            ("w_b2", self.w_b2),
        ] {
            if !(v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Unweighted loss terms. In the periodic regime `l_b` is the sum
/// `l_b1 + l_b2` and the sub-terms are reported separately.
#[derive(Debug, Clone, Copy, Default, serde::Serialize, serde::Deserialize)]
pub struct LossTerms {
    pub l_f: f64,
    pub l_b: f64,
    pub l_i: f64,
    pub l_b1: f64,
    pub l_b2: f64,
}

/// Eq-weighted total.
pub fn total_loss(terms: &LossTerms, weights: &LossWeights, regime: BcKind) -> f64 {
    let boundary = match regime {
        BcKind::Periodic1d => weights.w_b1 * terms.l_b1 + weights.w_b2 * terms.l_b2,
        _ => weights.w_b * terms.l_b,
    };
    weights.w_f * terms.l_f + boundary + weights.w_i * terms.l_i
}

/// Full schedule for one run.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainPlan {
    /// Segment endpoints T_i, strictly increasing, last = T.
    pub endpoints: Vec<f64>,
    pub hidden_layers: usize,
    pub width: usize,
    pub adam_epochs: usize,
    pub adam_lr: f64,
    pub batch_size: usize,
    pub lbfgs_max_iters: usize,
    /// Epochs between resampling events; 0 disables resampling.
    pub resample_every: usize,
    /// Points added per resampling event.
    pub resample_m: usize,
    /// Total per-segment add budget across events.
    pub resample_budget: usize,
    /// Candidate-pool size multiplier over `resample_m`.
    pub pool_multiplier: usize,
    /// Hard cap on the interior point count.
    pub interior_cap: usize,
    pub n_interior: usize,
    pub n_boundary: usize,
    pub n_initial: usize,
    pub weights: LossWeights,
    /// Early-stopping loss delta L_0.
    pub loss_delta: f64,
    /// L-BFGS gradient-norm tolerance.
    pub grad_tol: f64,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.endpoints.is_empty() {
            return Err(Error::InvalidArgument("endpoints must be non-empty".to_string()));
        }
        let mut prev = 0.0;
        for &t in &self.endpoints {
            if t <= prev {
                return Err(Error::InvalidArgument(format!(
                    "endpoints must be strictly increasing from 0; got {t} after {prev}"
                )));
            }
            prev = t;
        }
        self.weights.validate()?;
        if self.resample_every > 0 && self.resample_m == 0 {
            return Err(Error::InvalidArgument(
                "resample_m must be positive when resampling is enabled".to_string(),
            ));
        }
        Ok(())
    }

    /// Paper-like 1D schedule at desk scale.
    pub fn desk_1d() -> Self {
        Self {
            endpoints: vec![0.01, 0.2, 0.4, 0.6, 0.8, 1.0],
            hidden_layers: 3,
            width: 32,
            adam_epochs: 220,
            adam_lr: 1e-3,
            batch_size: 64,
            lbfgs_max_iters: 1200,
            resample_every: 20,
            resample_m: 50,
            resample_budget: 300,
            pool_multiplier: 10,
            interior_cap: 4000,
            n_interior: 300,
            n_boundary: 60,
            n_initial: 160,
            weights: LossWeights::reference_1d(),
            loss_delta: 1e-9,
            grad_tol: 1e-9,
        }
    }

    /// Reduced 2D schedule (quarter-budget, shortened horizon).
    pub fn desk_2d(terminal: f64) -> Self {
        let mut endpoints = vec![0.01];
        let mut t = 0.2;
        while t < terminal + 1e-12 {
            endpoints.push(t);
            t += 0.2;
        }
        Self {
            endpoints,
            hidden_layers: 3,
            width: 40,
            adam_epochs: 150,
            adam_lr: 1e-3,
            batch_size: 512,
            lbfgs_max_iters: 900,
            resample_every: 25,
            resample_m: 200,
            resample_budget: 600,
            pool_multiplier: 10,
            interior_cap: 20000,
            n_interior: 2500,
            n_boundary: 800,
            n_initial: 2500,
            weights: LossWeights::reference_2d(),
            loss_delta: 1e-9,
            grad_tol: 1e-9,
        }
    }
}

/// One point on a batch; interior/boundary/initial slices reference the
/// training set.
struct Batch<'a> {
    interior: Vec<&'a SpaceTimePoint>,
    boundary: Vec<&'a BoundaryPoint>,
    initial: Vec<(&'a SpaceTimePoint, f64)>,
}

/// Loss + parameter-gradient engine for one segment network.
pub struct LossEngine<'a> {
    pub sys: &'a PdeSystem,
    pub domain: &'a Domain,
    pub weights: LossWeights,
}

impl<'a> LossEngine<'a> {
    fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn pack(&self, x: Vec2, t: f64) -> Vec<f64> {
        if self.dim() == 1 {
            vec![x[0], t]
        } else {
            vec![x[0], x[1], t]
        }
    }

    /// Loss terms and gradient over a batch; `grad` accumulates in place.
    fn loss_and_grad(&self, net: &Mlp, batch: &Batch, grad: &mut [f64]) -> Result<LossTerms> {
        let mut terms = LossTerms::default();
        let dim = self.dim();
        let w = &self.weights;

        if !batch.interior.is_empty() {
            let n = batch.interior.len() as f64;
            let pairs: Vec<(usize, usize)> = (0..dim).map(|k| (k, k)).collect();
            for p in &batch.interior {
                let input = self.pack(p.x, p.t);
                let (out, tape) = net.forward_jet(&JetInput::identity(&input, pairs.clone()));
                let lap: f64 = out.second.iter().sum();
                let r = out.first[dim]
                    + self.sys.m_b * ((self.sys.f_prime)(out.value) - self.sys.eps2 * lap);
                terms.l_f += r * r / n;
                let scale = w.w_f * 2.0 * r / n;
                let mut cot = JetOut::zeros_like(dim + 1, dim);
                cot.value = scale * self.sys.m_b * (self.sys.f_second)(out.value);
                cot.first[dim] = scale;
                for k in 0..dim {
                    cot.second[k] = -scale * self.sys.m_b * self.sys.eps2;
                }
                net.backward_jet(&tape, &cot, grad);
            }
        }

        if !batch.boundary.is_empty() {
            let n = batch.boundary.len() as f64;
            match self.sys.bc_kind {
                BcKind::Periodic1d => {
                    // Each boundary point contributes its time; both
                    // endpoints are evaluated at that time.
                    for bp in &batch.boundary {
                        let t = bp.time;
                        let (lo, hi) = self.domain.bounding_box();
                        let input_l = self.pack([lo[0], 0.0], t);
                        let input_r = self.pack([hi[0], 0.0], t);
                        let (out_l, tape_l) =
                            net.forward_jet(&JetInput::identity(&input_l, vec![]));
                        let (out_r, tape_r) =
                            net.forward_jet(&JetInput::identity(&input_r, vec![]));
                        let dv = out_r.value - out_l.value;
                        let dg = out_r.first[0] - out_l.first[0];
                        terms.l_b1 += dv * dv / n;
                        terms.l_b2 += dg * dg / n;
                        let mut cot = JetOut::zeros_like(dim + 1, 0);
                        cot.value = w.w_b1 * 2.0 * dv / n;
                        cot.first[0] = w.w_b2 * 2.0 * dg / n;
                        net.backward_jet(&tape_r, &cot, grad);
                        cot.value = -cot.value;
                        cot.first[0] = -cot.first[0];
                        net.backward_jet(&tape_l, &cot, grad);
                    }
                    terms.l_b = terms.l_b1 + terms.l_b2;
                }
                BcKind::Neumann => {
                    for bp in &batch.boundary {
                        let input = self.pack(bp.position, bp.time);
                        let (out, tape) = net.forward_jet(&JetInput::identity(&input, vec![]));
                        let nd =
                            bp.normal[0] * out.first[0] + bp.normal[1] * out.first[1];
                        terms.l_b += nd * nd / n;
                        let scale = w.w_b * 2.0 * nd / n;
                        let mut cot = JetOut::zeros_like(dim + 1, 0);
                        cot.first[0] = scale * bp.normal[0];
                        cot.first[1] = scale * bp.normal[1];
                        net.backward_jet(&tape, &cot, grad);
                    }
                }
                BcKind::Dynamic => {
                    for bp in &batch.boundary {
                        let theta = bp.parameter.ok_or(Error::NoParameterization)?;
                        let t = bp.time;
                        // Curve pass: (theta, t) jet gives phi, phi_theta,
                        // phi_t, phi_thetatheta along the boundary.
                        let cji = crate::network::curve_jet_input(self.domain, bp, theta, t)?;
                        let (cout, ctape) = net.forward_jet(&cji);
                        let (speed, d2, _) = self.domain.curvature_and_metric(theta)?;
                        let g1 = [bp.tangent[0] * speed, bp.tangent[1] * speed];
                        let cmix = (g1[0] * d2[0] + g1[1] * d2[1]) / speed.powi(4);
                        let surf_lap = cout.second[0] / (speed * speed) - cout.first[0] * cmix;
                        // Spatial pass for the normal derivative.
                        let input = self.pack(bp.position, t);
                        let (sout, stape) = net.forward_jet(&JetInput::identity(&input, vec![]));
                        let nd =
                            bp.normal[0] * sout.first[0] + bp.normal[1] * sout.first[1];
                        let mu_s = (self.sys.g_prime)(cout.value)
                            - self.sys.eps_s2 * surf_lap
                            + self.sys.eps2 * nd;
                        let r = cout.first[1] + self.sys.m_s * mu_s;
                        terms.l_b += r * r / n;
                        let scale = w.w_b * 2.0 * r / n;
                        let mut ccot = JetOut::zeros_like(2, 1);
                        ccot.value = scale * self.sys.m_s * (self.sys.g_second)(cout.value);
                        ccot.first[0] = scale * self.sys.m_s * self.sys.eps_s2 * cmix;
                        ccot.first[1] = scale;
                        ccot.second[0] =
                            -scale * self.sys.m_s * self.sys.eps_s2 / (speed * speed);
                        net.backward_jet(&ctape, &ccot, grad);
                        let mut scot = JetOut::zeros_like(dim + 1, 0);
                        scot.first[0] = scale * self.sys.m_s * self.sys.eps2 * bp.normal[0];
                        scot.first[1] = scale * self.sys.m_s * self.sys.eps2 * bp.normal[1];
                        net.backward_jet(&stape, &scot, grad);
                    }
                }
            }
        }

        if !batch.initial.is_empty() {
            let n = batch.initial.len() as f64;
            for (p, target) in &batch.initial {
                let input = self.pack(p.x, p.t);
                let (out, tape) = net.forward_jet(&JetInput::value_only(&input));
                let d = out.value - target;
                terms.l_i += d * d / n;
                let mut cot = JetOut::zeros_like(0, 0);
                cot.value = w.w_i * 2.0 * d / n;
                net.backward_jet(&tape, &cot, grad);
            }
        }
        Ok(terms)
    }
}

/// Loss terms only (no gradient), full training set.
pub fn loss_terms(
    net: &Mlp,
    ts: &TrainingSet,
    sys: &PdeSystem,
    domain: &Domain,
    weights: LossWeights,
) -> Result<LossTerms> {
    if ts.interior.is_empty() && ts.boundary.is_empty() && ts.initial.is_empty() {
        return Err(Error::EmptySet("training set"));
    }
    let engine = LossEngine { sys, domain, weights };
    let batch = full_batch(ts);
    let mut scratch = vec![0.0; net.params.len()];
    engine.loss_and_grad(net, &batch, &mut scratch)
}

fn full_batch(ts: &TrainingSet) -> Batch<'_> {
    Batch {
        interior: ts.interior.iter().collect(),
        boundary: ts.boundary.iter().collect(),
        initial: ts
            .initial
            .iter()
            .zip(ts.initial_target.iter().copied())
            .collect(),
    }
}

/// One row of the per-epoch loss history.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub l_f: f64,
    pub l_b: f64,
    pub l_i: f64,
    pub total: f64,
}

/// Outcome of one trained segment.
pub struct SegmentResult {
    pub segment: Segment,
    pub history: Vec<HistoryRow>,
    pub final_terms: LossTerms,
    pub resample_events: usize,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + EPS);
        }
    }
}

/// L-BFGS with two-loop recursion and a strong Wolfe line search.
/// `eval` returns (loss, grad). Returns the iterations actually run.
pub fn lbfgs<F>(
    params: &mut Vec<f64>,
    max_iters: usize,
    grad_tol: f64,
    loss_delta: f64,
    mut eval: F,
    mut on_iter: impl FnMut(usize, f64),
) -> Result<usize>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const HISTORY: usize = 10;
    let n = params.len();
    let (mut fx, mut g) = eval(params)?;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    // Stop only after a run of stalled iterations: a single failed line
    // search step is routinely followed by progress after the memory is
    // refreshed.
    const STALL_LIMIT: usize = 8;
    let mut stalled = 0usize;
    for iter in 0..max_iters {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= grad_tol {
            return Ok(iter);
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            let a = rho[i] * dot_vec(&s_hist[i], &q);
            alpha[i] = a;
            axpy(&mut q, -a, &y_hist[i]);
        }
        if k > 0 {
            let ys = 1.0 / rho[k - 1];
            let yy = dot_vec(&y_hist[k - 1], &y_hist[k - 1]);
            let gamma = ys / yy.max(1e-300);
            for v in &mut q {
                *v *= gamma;
            }
        }
        for i in 0..k {
            let b = rho[i] * dot_vec(&y_hist[i], &q);
            axpy(&mut q, alpha[i] - b, &s_hist[i]);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut dg = dot_vec(&dir, &g);
        if dg >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            dir = g.iter().map(|v| -v / gnorm.max(1e-300)).collect();
            dg = dot_vec(&dir, &g);
        }

        let x0 = params.clone();
        let (step, fx_new, g_new) = match wolfe_search(&x0, &dir, fx, dg, &mut eval) {
            Some(r) => r,
            None if !s_hist.is_empty() => {
                // The quasi-Newton direction failed to bracket a step;
                // drop the memory and retry along steepest descent.
                s_hist.clear();
                y_hist.clear();
                rho.clear();
                let sd: Vec<f64> = g.iter().map(|v| -v / gnorm.max(1e-300)).collect();
                let sdg = dot_vec(&sd, &g);
                match wolfe_search(&x0, &sd, fx, sdg, &mut eval) {
                    Some(r) => {
                        dir = sd;
                        r
                    }
                    None => return Ok(iter),
                }
            }
            None => return Ok(iter),
        };
        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            params[i] = x0[i] + step * dir[i];
            s[i] = params[i] - x0[i];
            y[i] = g_new[i] - g[i];
        }
        let ys = dot_vec(&y, &s);
        if ys > 1e-12 {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho.remove(0);
            }
            rho.push(1.0 / ys);
            s_hist.push(s);
            y_hist.push(y);
        }
        let delta = (fx - fx_new).abs();
        fx = fx_new;
        g = g_new;
        on_iter(iter, fx);
        if delta < loss_delta {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                return Ok(iter + 1);
            }
        } else {
            stalled = 0;
        }
    }
    Ok(max_iters)
}

fn dot_vec(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for i in 0..y.len() {
        y[i] += a * x[i];
    }
}

/// Strong Wolfe line search (bracket + zoom with bisection/interpolation).
/// Returns (step, loss, grad) or None when no acceptable step exists.
fn wolfe_search<F>(
    x0: &[f64],
    dir: &[f64],
    f0: f64,
    dg0: f64,
    eval: &mut F,
) -> Option<(f64, f64, Vec<f64>)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    const MAX_EVALS: usize = 25;
    let probe = |a: f64, eval: &mut F| -> Option<(f64, Vec<f64>, f64)> {
        let x: Vec<f64> = x0.iter().zip(dir).map(|(x, d)| x + a * d).collect();
        let (f, g) = eval(&x).ok()?;
        if !f.is_finite() {
            return None;
        }
        let dg = dot_vec(&g, dir);
        Some((f, g, dg))
    };

    let mut a_prev = 0.0;
    let mut f_prev = f0;
    let mut a = 1.0;
    let mut evals = 0;
    let mut bracket: Option<(f64, f64)> = None;
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    while evals < MAX_EVALS {
        evals += 1;
        let Some((f, g, dg)) = probe(a, eval) else {
            a *= 0.5;
            if a < 1e-16 {
                return None;
            }
            continue;
        };
        if f > f0 + C1 * a * dg0 || (evals > 1 && f >= f_prev) {
            bracket = Some((a_prev, a));
            break;
        }
        if dg.abs() <= -C2 * dg0 {
            return Some((a, f, g));
        }
        best = Some((a, f, g));
        if dg >= 0.0 {
            bracket = Some((a, a_prev));
            break;
        }
        a_prev = a;
        f_prev = f;
        a *= 2.0;
    }
    let (mut lo, mut hi) = bracket?;
    let mut f_lo = if lo == 0.0 { f0 } else { probe(lo, eval).map(|(f, _, _)| f)? };
    while evals < MAX_EVALS {
        evals += 1;
        let a_mid = 0.5 * (lo + hi);
        let Some((f, g, dg)) = probe(a_mid, eval) else { return best };
        if f > f0 + C1 * a_mid * dg0 || f >= f_lo {
            hi = a_mid;
        } else {
            if dg.abs() <= -C2 * dg0 {
                return Some((a_mid, f, g));
            }
            best = Some((a_mid, f, g));
            if dg * (hi - lo) >= 0.0 {
                hi = lo;
            }
            lo = a_mid;
            f_lo = f;
        }
        if (hi - lo).abs() < 1e-14 {
            break;
        }
    }
    best
}

/// Trains one segment network. `ts` is consumed and mutated by resampling.
#[allow(clippy::too_many_arguments)]
pub fn train_segment(
    seg_index: usize,
    t_start: f64,
    t_end: f64,
    ts: &mut TrainingSet,
    sys: &PdeSystem,
    domain: &Domain,
    plan: &TrainPlan,
    strategy: Strategy,
    master_seed: u64,
    warm_start: Option<&Mlp>,
    mut sampling_log: Option<(&mut SamplingLog, &mut usize)>,
) -> Result<SegmentResult> {
    let dim = domain.dim();
    let spec = MlpSpec::new(dim + 1, plan.hidden_layers, plan.width);
    // Warm-starting from the previous segment's parameters hands the new
    // segment a nearly perfect fit of its own initial condition, so the
    // optimizer spends its budget on the dynamics instead of re-learning
    // the profile from scratch.
    let mut net = match warm_start {
        Some(prev) if prev.spec == spec => prev.clone(),
        _ => Mlp::init(spec, seed::derive_indexed(master_seed, "net", seg_index as u64)),
    };
    let engine = LossEngine { sys, domain, weights: plan.weights };
    let grid = CellGrid::for_domain(domain, (t_start, t_end), plan.n_interior, plan.n_boundary);
    let mut history = Vec::new();
    let mut resample_events = 0usize;
    let max_events = if plan.resample_m > 0 { plan.resample_budget / plan.resample_m } else { 0 };
    let mut grad = vec![0.0; net.params.len()];
    let mut adam = AdamState::new(net.params.len());
    let mut prev_total = f64::INFINITY;

    for epoch in 0..plan.adam_epochs {
        if plan.resample_every > 0
            && epoch > 0
            && epoch % plan.resample_every == 0
            && resample_events < max_events
        {
            let event_seed = seed::derive_indexed(
                master_seed,
                "pool",
                (seg_index * 100_000 + resample_events) as u64,
            );
            let pool = CandidatePool::generate(
                domain,
                (t_start, t_end),
                plan.resample_m * plan.pool_multiplier,
                if sys.bc_kind == BcKind::Dynamic {
                    plan.resample_m * plan.pool_multiplier / 4
                } else {
                    0
                },
                event_seed,
            )?;
            let seg_model = SolutionModel {
                segments: vec![Segment { t_start, t_end, net: net.clone() }],
            };
            let mut rng =
                seed::rng(seed::derive_indexed(master_seed, "rad", event_seed));
            let outcome: ResampleOutcome = resample_step(
                strategy,
                ts,
                &pool,
                &grid,
                &seg_model,
                sys,
                domain,
                plan.resample_m,
                plan.interior_cap,
                &mut rng,
            )?;
            resample_events += 1;
            if let Some((slog, event_counter)) = sampling_log.as_mut() {
                slog.record(**event_counter, strategy, &outcome, ts.interior.len())?;
                **event_counter += 1;
            }
        }

        let mut shuffle_rng = seed::rng(seed::derive_indexed(
            master_seed,
            "shuffle",
            (seg_index * 1_000_000 + epoch) as u64,
        ));
        let mut interior_idx: Vec<usize> = (0..ts.interior.len()).collect();
        interior_idx.shuffle(&mut shuffle_rng);
        let mut boundary_idx: Vec<usize> = (0..ts.boundary.len()).collect();
        boundary_idx.shuffle(&mut shuffle_rng);
        let mut initial_idx: Vec<usize> = (0..ts.initial.len()).collect();
        initial_idx.shuffle(&mut shuffle_rng);

        let b = plan.batch_size.max(1).min(ts.interior.len().max(1));
        let n_batches = ts.interior.len().div_ceil(b).max(1);
        let mut epoch_terms = LossTerms::default();
        for bi in 0..n_batches {
            // Proportional slices of every pool.
            let islice: Vec<&SpaceTimePoint> = interior_idx
                [bi * b..((bi + 1) * b).min(interior_idx.len())]
                .iter()
                .map(|&i| &ts.interior[i])
                .collect();
            let frac_lo = bi as f64 / n_batches as f64;
            let frac_hi = (bi + 1) as f64 / n_batches as f64;
            let sub = |idx: &[usize]| -> (usize, usize) {
                (
                    (frac_lo * idx.len() as f64).floor() as usize,
                    (frac_hi * idx.len() as f64).floor() as usize,
                )
            };
            let (blo, bhi) = sub(&boundary_idx);
            let bslice: Vec<&BoundaryPoint> =
                boundary_idx[blo..bhi].iter().map(|&i| &ts.boundary[i]).collect();
            let (ilo, ihi) = sub(&initial_idx);
            let inslice: Vec<(&SpaceTimePoint, f64)> = initial_idx[ilo..ihi]
                .iter()
                .map(|&i| (&ts.initial[i], ts.initial_target[i]))
                .collect();
            let batch = Batch { interior: islice, boundary: bslice, initial: inslice };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let terms = engine.loss_and_grad(&net, &batch, &mut grad)?;
            let total = total_loss(&terms, &plan.weights, sys.bc_kind);
            if !total.is_finite() {
                log::error!("non-finite loss at segment {seg_index}, epoch {epoch}");
                return Err(Error::NonFiniteLoss { segment: seg_index, epoch });
            }
            epoch_terms.l_f += terms.l_f / n_batches as f64;
            epoch_terms.l_b += terms.l_b / n_batches as f64;
            epoch_terms.l_i += terms.l_i / n_batches as f64;
            epoch_terms.l_b1 += terms.l_b1 / n_batches as f64;
            epoch_terms.l_b2 += terms.l_b2 / n_batches as f64;
            adam.step(&mut net.params, &grad, plan.adam_lr);
        }
        let total = total_loss(&epoch_terms, &plan.weights, sys.bc_kind);
        history.push(HistoryRow {
            epoch,
            l_f: epoch_terms.l_f,
            l_b: epoch_terms.l_b,
            l_i: epoch_terms.l_i,
            total,
        });
        let done_resampling = resample_events >= max_events || plan.resample_every == 0;
        if done_resampling && (total - prev_total).abs() < plan.loss_delta {
            break;
        }
        prev_total = total;
    }

    // Quasi-second-order phase on the full batch.
    if plan.lbfgs_max_iters > 0 {
        let batch = full_batch(ts);
        let epoch_base = history.len();
        let mut params = net.params.clone();
        let spec = net.spec.clone();
        let eval = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
            let probe = Mlp { spec: spec.clone(), params: p.to_vec() };
            let mut grad = vec![0.0; p.len()];
            let terms = engine.loss_and_grad(&probe, &batch, &mut grad)?;
            Ok((total_loss(&terms, &plan.weights, sys.bc_kind), grad))
        };
        let mut rows: Vec<(usize, f64)> = Vec::new();
        lbfgs(
            &mut params,
            plan.lbfgs_max_iters,
            plan.grad_tol,
            plan.loss_delta,
            eval,
            |iter, fx| rows.push((iter, fx)),
        )?;
        net.params = params;
        let final_terms = loss_terms(&net, ts, sys, domain, plan.weights)?;
        for (iter, fx) in rows {
            history.push(HistoryRow {
                epoch: epoch_base + iter,
                l_f: final_terms.l_f,
                l_b: final_terms.l_b,
                l_i: final_terms.l_i,
                total: fx,
            });
        }
    }

    let final_terms = if ts.interior.is_empty() && ts.initial.is_empty() {
        LossTerms::default()
    } else {
        loss_terms(&net, ts, sys, domain, plan.weights)?
    };
    Ok(SegmentResult {
        segment: Segment { t_start, t_end, net },
        history,
        final_terms,
        resample_events,
    })
}

/// Per-segment summary in the run report.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SegmentReport {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub final_total_loss: f64,
    pub final_l_f: f64,
    pub final_l_b: f64,
    pub final_l_i: f64,
    pub interior_points: usize,
    pub resample_events: usize,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RunReport {
    pub strategy: String,
    pub seed: u64,
    pub segments: Vec<SegmentReport>,
}

/// Builds the initial training set for a segment. For the first segment the
/// initial targets come from the system's initial condition, afterwards
/// from the previous segment's terminal values.
pub fn build_segment_set(
    domain: &Domain,
    sys: &PdeSystem,
    plan: &TrainPlan,
    t_start: f64,
    t_end: f64,
    seg_index: usize,
    previous: Option<&SolutionModel>,
    master_seed: u64,
) -> Result<TrainingSet> {
    let mut rng = seed::rng(seed::derive_indexed(master_seed, "set", seg_index as u64));
    let interior = domain.sample_interior(plan.n_interior, (t_start, t_end), &mut rng)?;
    let boundary = domain.sample_boundary(plan.n_boundary, (t_start, t_end), &mut rng)?;
    let initial: Vec<SpaceTimePoint> = if domain.dim() == 1 {
        let (lo, hi) = domain.bounding_box();
        let n = plan.n_initial.max(2);
        (0..n)
            .map(|i| {
                let x = lo[0] + (hi[0] - lo[0]) * i as f64 / (n - 1) as f64;
                SpaceTimePoint::initial([x, 0.0], t_start)
            })
            .collect()
    } else {
        domain
            .sample_interior(plan.n_initial, (t_start, t_start), &mut rng)?
            .into_iter()
            .map(|p| SpaceTimePoint::initial(p.x, t_start))
            .collect()
    };
    let initial_target: Vec<f64> = match previous {
        None => initial.iter().map(|p| (sys.initial_condition)(p.x)).collect(),
        Some(model) => initial
            .iter()
            .map(|p| model.evaluate(&SpaceTimePoint::initial(p.x, t_start)))
            .collect::<Result<Vec<f64>>>()?,
    };
    let mut ts = TrainingSet::new(interior, boundary, initial);
    ts.initial_target = initial_target;
    Ok(ts)
}

/// Optional artifact sinks for `run_time_marching`.
#[derive(Default)]
pub struct RunSinks {
    pub loss_csv: Option<std::path::PathBuf>,
    pub sampling_csv: Option<std::path::PathBuf>,
}

/// Trains all segments in order, handing terminal values forward, and
/// returns the composite model plus report.
pub fn run_time_marching(
    sys: &PdeSystem,
    domain: &Domain,
    plan: &TrainPlan,
    strategy: Strategy,
    master_seed: u64,
    sinks: &RunSinks,
) -> Result<(SolutionModel, RunReport)> {
    plan.validate()?;
    let mut model = SolutionModel { segments: Vec::new() };
    let mut report = RunReport {
        strategy: strategy.to_string(),
        seed: master_seed,
        segments: Vec::new(),
    };
    let mut loss_writer = match &sinks.loss_csv {
        Some(path) => {
            use std::io::Write;
            let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
            writeln!(w, "segment,epoch,l_f,l_b,l_i,total")?;
            Some(w)
        }
        None => None,
    };
    let mut sampling_log = match &sinks.sampling_csv {
        Some(path) => Some(SamplingLog::create(path)?),
        None => None,
    };
    let mut event_counter = 0usize;

    let mut t_start = 0.0;
    for (i, &t_end) in plan.endpoints.iter().enumerate() {
        let previous = if i == 0 { None } else { Some(&model) };
        let mut ts = build_segment_set(
            domain, sys, plan, t_start, t_end, i, previous, master_seed,
        )?;
        let warm = model.segments.last().map(|s| s.net.clone());
        let result = train_segment(
            i,
            t_start,
            t_end,
            &mut ts,
            sys,
            domain,
            plan,
            strategy,
            master_seed,
            warm.as_ref(),
            sampling_log.as_mut().map(|l| (l, &mut event_counter)),
        )
        .map_err(|e| {
            log::error!("segment {i} failed: {e}");
            e
        })?;
        if let Some(w) = loss_writer.as_mut() {
            use std::io::Write;
            for row in &result.history {
                writeln!(
                    w,
                    "{i},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                    row.epoch, row.l_f, row.l_b, row.l_i, row.total
                )?;
            }
            w.flush()?;
        }
        report.segments.push(SegmentReport {
            index: i,
            t_start,
            t_end,
            final_total_loss: total_loss(&result.final_terms, &plan.weights, sys.bc_kind),
            final_l_f: result.final_terms.l_f,
            final_l_b: result.final_terms.l_b,
            final_l_i: result.final_terms.l_i,
            interior_points: ts.interior.len(),
            resample_events: result.resample_events,
        });
        model.segments.push(result.segment);
        t_start = t_end;
    }
    Ok((model, report))
}

/// A constant-field system useful in tests: keeps `PdeSystem` construction
/// near the trainer.
pub fn constant_initial(sys: &PdeSystem, value: f64) -> PdeSystem {
    let mut out = sys.clone();
    out.initial_condition = Arc::new(move |_| value);
    out
}
