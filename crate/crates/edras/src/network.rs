//! Feed-forward solution representation with exact input-derivative
//! evaluation and a time-marching composite across segments.
//!
//! Derivatives with respect to the network inputs are propagated as
//! second-order jets: each neuron carries its value, the first derivatives
//! against a set of jet variables, and a chosen set of second derivatives.
//! The jet forward pass records a tape so that the gradient of any scalar
//! function of (value, first, second) with respect to the network
//! parameters can be pulled back exactly. This is what lets PDE residual
//! losses (which contain u_t and Laplacians) be trained by first-order
//! optimizers without finite differences anywhere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{dot, BoundaryPoint, Domain, SpaceTimePoint, Vec2};
use crate::model::FieldSample;
use crate::{seed, Error, Result};

/// Smooth activation for hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

/// Architecture of one segment network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// 2 for (x, t), 3 for (x, y, t).
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden_layers: usize, width: usize) -> Self {
        Self { input_dim, hidden_layers, width, activation: Activation::Tanh }
    }

    /// Layer dimensions as (fan_in, fan_out) pairs; output layer is linear
    /// with a single output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((prev, self.width));
            prev = self.width;
        }
        dims.push((prev, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// A plain MLP: spec plus a flat parameter vector.
///
/// Layout: per layer, the weight matrix row-major (out x in), then the bias.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Deterministic variance-preserving initialization: weights and biases
    /// uniform on +-1/sqrt(fan_in) per layer.
    pub fn init(spec: MlpSpec, seed_value: u64) -> Self {
        let mut rng = seed::rng(seed_value);
        let mut params = Vec::with_capacity(spec.param_count());
        for (fan_in, fan_out) in spec.layer_dims() {
            let k = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out + fan_out {
                params.push(rng.gen_range(-k..=k));
            }
        }
        Self { spec, params }
    }

    /// Plain forward pass, value only.
    pub fn value(&self, input: &[f64]) -> f64 {
        debug_assert_eq!(input.len(), self.spec.input_dim);
        let mut a: Vec<f64> = input.to_vec();
        let mut offset = 0usize;
        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        for (l, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = b[o];
                for i in 0..fan_in {
                    acc += row[i] * a[i];
                }
                z[o] = acc;
            }
            if l < last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            a = z;
        }
        a[0]
    }

    /// Jet forward pass. Returns the output jet and a tape for `backward_jet`.
    pub fn forward_jet(&self, input: &JetInput) -> (JetOut, JetTape) {
        debug_assert_eq!(input.value.len(), self.spec.input_dim);
        let slots = input.slots();
        let mut a = input.pack();
        let dims = self.spec.layer_dims();
        let last = dims.len() - 1;
        let mut layer_inputs = Vec::with_capacity(dims.len());
        let mut preacts = Vec::with_capacity(last);
        let mut offset = 0usize;
        for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let mut z = vec![0.0; fan_out * slots];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let zo = &mut z[o * slots..(o + 1) * slots];
                zo[0] = b[o];
                for i in 0..fan_in {
                    let wv = row[i];
                    let ai = &a[i * slots..(i + 1) * slots];
                    for s in 0..slots {
                        zo[s] += wv * ai[s];
                    }
                }
            }
            layer_inputs.push(std::mem::replace(&mut a, Vec::new()));
            if l < last {
                preacts.push(z.clone());
                tanh_jet_forward(&mut z, fan_out, input.jdim, &input.pairs);
            }
            a = z;
        }
        let out = JetOut {
            value: a[0],
            first: a[1..1 + input.jdim].to_vec(),
            second: a[1 + input.jdim..slots].to_vec(),
        };
        let tape = JetTape {
            jdim: input.jdim,
            pairs: input.pairs.clone(),
            layer_inputs,
            preacts,
        };
        (out, tape)
    }

    /// Pulls a cotangent on the output jet back to the parameters,
    /// accumulating into `grad` (same layout as `params`).
    pub fn backward_jet(&self, tape: &JetTape, cot: &JetOut, grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let slots = 1 + tape.jdim + tape.pairs.len();
        let mut cz = Vec::with_capacity(slots);
        cz.push(cot.value);
        cz.extend_from_slice(&cot.first);
        cz.extend_from_slice(&cot.second);

        let dims = self.spec.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0usize;
        for &(fan_in, fan_out) in &dims {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }

        for l in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[l];
            let off = offsets[l];
            let a = &tape.layer_inputs[l];
            // Parameter gradients, then the cotangent of the layer input.
            let mut ca = vec![0.0; fan_in * slots];
            {
                let (wgrad, rest) = grad[off..off + fan_in * fan_out + fan_out]
                    .split_at_mut(fan_in * fan_out);
                let bgrad = rest;
                let w = &self.params[off..off + fan_in * fan_out];
                for o in 0..fan_out {
                    let czo = &cz[o * slots..(o + 1) * slots];
                    bgrad[o] += czo[0];
                    let wrow = &w[o * fan_in..(o + 1) * fan_in];
                    let grow = &mut wgrad[o * fan_in..(o + 1) * fan_in];
                    for i in 0..fan_in {
                        let ai = &a[i * slots..(i + 1) * slots];
                        let mut acc = 0.0;
                        let cai = &mut ca[i * slots..(i + 1) * slots];
                        let wv = wrow[i];
                        for s in 0..slots {
                            acc += czo[s] * ai[s];
                            cai[s] += wv * czo[s];
                        }
                        grow[i] += acc;
                    }
                }
            }
            if l == 0 {
                break;
            }
            // `ca` is the cotangent of tanh(z_{l-1}); pull it through the
            // activation using the stored pre-activation jets.
            let z = &tape.preacts[l - 1];
            tanh_jet_backward(z, &mut ca, fan_in, tape.jdim, &tape.pairs);
            cz = ca;
        }
    }
}

/// Input jet: seeds the derivative propagation. `jdim` jet variables;
/// `pairs` lists which second derivatives (i <= j over jet variables) are
/// propagated.
#[derive(Debug, Clone)]
pub struct JetInput {
    pub jdim: usize,
    pub pairs: Vec<(usize, usize)>,
    /// Input values, length = network input_dim.
    pub value: Vec<f64>,
    /// d(input_i)/d(var_k), row-major input x jdim.
    pub first: Vec<f64>,
    /// d2(input_i)/d(pair_p), row-major input x pairs.
    pub second: Vec<f64>,
}

impl JetInput {
    pub fn slots(&self) -> usize {
        1 + self.jdim + self.pairs.len()
    }

    /// Jet variables are the inputs themselves (identity seed).
    pub fn identity(input: &[f64], pairs: Vec<(usize, usize)>) -> Self {
        let n = input.len();
        let mut first = vec![0.0; n * n];
        for i in 0..n {
            first[i * n + i] = 1.0;
        }
        Self {
            jdim: n,
            second: vec![0.0; n * pairs.len()],
            pairs,
            value: input.to_vec(),
            first,
        }
    }

    /// No derivatives, value only.
    pub fn value_only(input: &[f64]) -> Self {
        Self {
            jdim: 0,
            pairs: Vec::new(),
            value: input.to_vec(),
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    fn pack(&self) -> Vec<f64> {
        let slots = self.slots();
        let n = self.value.len();
        let np = self.pairs.len();
        let mut a = vec![0.0; n * slots];
        for i in 0..n {
            a[i * slots] = self.value[i];
            for k in 0..self.jdim {
                a[i * slots + 1 + k] = self.first[i * self.jdim + k];
            }
            for p in 0..np {
                a[i * slots + 1 + self.jdim + p] = self.second[i * np + p];
            }
        }
        a
    }
}

/// Output jet: value, first derivatives per jet variable, second
/// derivatives per requested pair.
#[derive(Debug, Clone)]
pub struct JetOut {
    pub value: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl JetOut {
    pub fn zeros_like(jdim: usize, npairs: usize) -> Self {
        Self { value: 0.0, first: vec![0.0; jdim], second: vec![0.0; npairs] }
    }
}

/// Recorded state of a jet forward pass.
#[derive(Debug, Clone)]
pub struct JetTape {
    jdim: usize,
    pairs: Vec<(usize, usize)>,
    layer_inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

/// In-place jet transform h = tanh(z) over `n` neurons.
fn tanh_jet_forward(z: &mut [f64], n: usize, jdim: usize, pairs: &[(usize, usize)]) {
    let slots = 1 + jdim + pairs.len();
    for o in 0..n {
        let zo = &mut z[o * slots..(o + 1) * slots];
        let s = zo[0].tanh();
        let s1 = 1.0 - s * s;
        let s2 = -2.0 * s * s1;
        zo[0] = s;
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let zi = zo[1 + i];
            let zj = zo[1 + j];
            zo[1 + jdim + p] = s2 * zi * zj + s1 * zo[1 + jdim + p];
        }
        for k in 0..jdim {
            zo[1 + k] *= s1;
        }
    }
}

/// Pulls the cotangent `ch` of h = tanh(z) back to a cotangent of z,
/// in place, given the stored pre-activation jets `z`.
fn tanh_jet_backward(z: &[f64], ch: &mut [f64], n: usize, jdim: usize, pairs: &[(usize, usize)]) {
    let slots = 1 + jdim + pairs.len();
    for o in 0..n {
        let zo = &z[o * slots..(o + 1) * slots];
        let co = &mut ch[o * slots..(o + 1) * slots];
        let s = zo[0].tanh();
        let s1 = 1.0 - s * s;
        let s2 = -2.0 * s * s1;
        let s3 = -2.0 * (s1 * s1 + s * s2);

        let mut cz0 = co[0] * s1;
        let mut czj = [0.0f64; 8];
        debug_assert!(jdim <= 8);
        for k in 0..jdim {
            cz0 += co[1 + k] * s2 * zo[1 + k];
            czj[k] = co[1 + k] * s1;
        }
        for (p, &(i, j)) in pairs.iter().enumerate() {
            let chp = co[1 + jdim + p];
            let zi = zo[1 + i];
            let zj = zo[1 + j];
            cz0 += chp * (s3 * zi * zj + s2 * zo[1 + jdim + p]);
            czj[i] += chp * s2 * zj;
            czj[j] += chp * s2 * zi;
            co[1 + jdim + p] = chp * s1;
        }
        co[0] = cz0;
        co[1..1 + jdim].copy_from_slice(&czj[..jdim]);
    }
}

/// One time segment: the network owns times in (t_start, t_end]; the first
/// segment also owns t = 0.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub net: Mlp,
}

/// Time-marching composite of segment networks partitioning (0, T].
#[derive(Debug, Clone)]
pub struct SolutionModel {
    pub segments: Vec<Segment>,
}

impl SolutionModel {
    /// Spatial dimension implied by the network input layout (x[,y],t).
    pub fn dim(&self) -> usize {
        self.segments[0].net.spec.input_dim - 1
    }

    /// Segment owning time `t`: intervals are left-open right-closed, with
    /// t = 0 mapped to the first segment.
    pub fn segment_for(&self, t: f64) -> Result<&Segment> {
        if self.segments.is_empty() {
            return Err(Error::EmptySet("segments"));
        }
        if t == self.segments[0].t_start {
            return Ok(&self.segments[0]);
        }
        for seg in &self.segments {
            if t > seg.t_start && t <= seg.t_end {
                return Ok(seg);
            }
        }
        Err(Error::TimeOutOfRange)
    }

    fn pack_input(&self, x: Vec2, t: f64) -> Vec<f64> {
        if self.dim() == 1 {
            vec![x[0], t]
        } else {
            vec![x[0], x[1], t]
        }
    }

    pub fn evaluate(&self, p: &SpaceTimePoint) -> Result<f64> {
        let seg = self.segment_for(p.t)?;
        Ok(seg.net.value(&self.pack_input(p.x, p.t)))
    }

    /// Exact value and input derivatives at a point. For boundary points on
    /// a parameterized boundary (disk/ellipse), also fills the surface
    /// Laplacian and the normal derivative.
    pub fn evaluate_with_derivatives(
        &self,
        x: Vec2,
        t: f64,
        boundary: Option<(&Domain, &BoundaryPoint)>,
    ) -> Result<FieldSample> {
        let seg = self.segment_for(t)?;
        let dim = self.dim();
        let input = self.pack_input(x, t);
        let pairs: Vec<(usize, usize)> = (0..dim).map(|k| (k, k)).collect();
        let (out, _) = seg.net.forward_jet(&JetInput::identity(&input, pairs));
        let mut grad = [0.0, 0.0];
        for k in 0..dim {
            grad[k] = out.first[k];
        }
        let mut sample = FieldSample {
            value: out.value,
            dt: out.first[dim],
            grad,
            laplacian: out.second.iter().sum(),
            surf_laplacian: None,
            normal_deriv: None,
        };
        if let Some((domain, bp)) = boundary {
            sample.normal_deriv = Some(dot(bp.normal, grad));
            if let Some(theta) = bp.parameter {
                if let Ok(sl) = self.surface_laplacian(domain, bp, theta, t) {
                    sample.surf_laplacian = Some(sl);
                }
            }
        }
        Ok(sample)
    }

    /// Surface Laplacian through the boundary parameterization:
    /// d2(phi.gamma)/dtheta2 / |gamma'|^2
    ///   - d(phi.gamma)/dtheta * (gamma'.gamma'') / |gamma'|^4.
    pub fn surface_laplacian(
        &self,
        domain: &Domain,
        bp: &BoundaryPoint,
        theta: f64,
        t: f64,
    ) -> Result<f64> {
        let seg = self.segment_for(t)?;
        let (out, _) = seg.net.forward_jet(&curve_jet_input(domain, bp, theta, t)?);
        let (speed, d2, _) = domain.curvature_and_metric(theta)?;
        let g1 = [bp.tangent[0] * speed, bp.tangent[1] * speed];
        Ok(out.second[0] / (speed * speed) - out.first[0] * dot(g1, d2) / speed.powi(4))
    }

    /// Curvature-form surface Laplacian (t.H t - kappa n.grad), used as an
    /// independent cross-check of `surface_laplacian`.
    pub fn surface_laplacian_curvature_form(
        &self,
        domain: &Domain,
        bp: &BoundaryPoint,
        theta: f64,
        t: f64,
    ) -> Result<f64> {
        let seg = self.segment_for(t)?;
        let input = self.pack_input(bp.position, t);
        let pairs = vec![(0, 0), (1, 1), (0, 1)];
        let (out, _) = seg.net.forward_jet(&JetInput::identity(&input, pairs));
        let (_, _, kappa) = domain.curvature_and_metric(theta)?;
        let tv = bp.tangent;
        let tht = out.second[0] * tv[0] * tv[0]
            + out.second[1] * tv[1] * tv[1]
            + 2.0 * out.second[2] * tv[0] * tv[1];
        let ndg = bp.normal[0] * out.first[0] + bp.normal[1] * out.first[1];
        Ok(tht - kappa * ndg)
    }
}

/// Jet input for differentiating phi along the boundary curve: jet
/// variables are (theta, t), seeded with gamma'(theta) and gamma''(theta).
pub fn curve_jet_input(
    domain: &Domain,
    bp: &BoundaryPoint,
    theta: f64,
    t: f64,
) -> Result<JetInput> {
    let (speed, d2, _) = domain.curvature_and_metric(theta)?;
    let g1 = [bp.tangent[0] * speed, bp.tangent[1] * speed];
    Ok(JetInput {
        jdim: 2,
        pairs: vec![(0, 0)],
        value: vec![bp.position[0], bp.position[1], t],
        // Columns: d/dtheta, d/dt.
        first: vec![g1[0], 0.0, g1[1], 0.0, 0.0, 1.0],
        // Pair (theta, theta).
        second: vec![d2[0], d2[1], 0.0],
    })
}

/// Serialized form of one trained segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentCheckpoint {
    pub spec: MlpSpec,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl SegmentCheckpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let ckpt: SegmentCheckpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        if ckpt.params.len() != ckpt.spec.param_count() {
            return Err(Error::Serde(format!(
                "checkpoint parameter count {} does not match spec ({})",
                ckpt.params.len(),
                ckpt.spec.param_count()
            )));
        }
        Ok(ckpt)
    }

    pub fn into_segment(self) -> Segment {
        Segment {
            t_start: self.t_start,
            t_end: self.t_end,
            net: Mlp { spec: self.spec, params: self.params },
        }
    }
}

/// Loads a time-marching model from `segment_XXX.json` files in a directory.
pub fn load_model(dir: &std::path::Path) -> Result<SolutionModel> {
    let mut segs = Vec::new();
    for i in 0.. {
        let path = dir.join(format!("segment_{i:03}.json"));
        if !path.exists() {
            break;
        }
        segs.push(SegmentCheckpoint::load(&path)?.into_segment());
    }
    if segs.is_empty() {
        return Err(Error::EmptySet("checkpoint segments"));
    }
    Ok(SolutionModel { segments: segs })
}

/// Saves every segment of a model into a directory.
pub fn save_model(model: &SolutionModel, dir: &std::path::Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, seg) in model.segments.iter().enumerate() {
        let ckpt = SegmentCheckpoint {
            spec: seg.net.spec.clone(),
            t_start: seg.t_start,
            t_end: seg.t_end,
            seed,
            params: seg.net.params.clone(),
        };
        ckpt.save(&dir.join(format!("segment_{i:03}.json")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn single_segment(net: Mlp, t_end: f64) -> SolutionModel {
        SolutionModel { segments: vec![Segment { t_start: 0.0, t_end, net }] }
    }

    #[test]
    fn init_is_deterministic_and_finite() {
        let spec = MlpSpec::new(2, 3, 16);
        let a = Mlp::init(spec.clone(), 42);
        let b = Mlp::init(spec.clone(), 42);
        assert_eq!(a.params, b.params);
        let c = Mlp::init(spec, 43);
        assert_ne!(a.params, c.params);
        let tiny = Mlp::init(MlpSpec::new(2, 1, 1), 0);
        assert!(tiny.params.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_network_evaluates_to_zero() {
        let spec = MlpSpec::new(2, 2, 8);
        let n = spec.param_count();
        let net = Mlp { spec, params: vec![0.0; n] };
        let model = single_segment(net, 1.0);
        let p = SpaceTimePoint::interior([0.3, 0.0], 0.5);
        assert_eq!(model.evaluate(&p).unwrap(), 0.0);
        let s = model.evaluate_with_derivatives([0.3, 0.0], 0.5, None).unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.dt, 0.0);
        assert_eq!(s.laplacian, 0.0);
    }

    #[test]
    fn linear_output_layer_is_identity_composition() {
        // A no-hidden-layer net is a single linear layer: u = w.x + b.
        let spec = MlpSpec { input_dim: 2, hidden_layers: 0, width: 8, activation: Activation::Tanh };
        let net = Mlp { spec, params: vec![1.0, 0.0, 0.0] };
        let model = single_segment(net, 1.0);
        let p = SpaceTimePoint::interior([0.7, 0.0], 0.2);
        assert_relative_eq!(model.evaluate(&p).unwrap(), 0.7);
    }

    #[test]
    fn segment_time_ownership() {
        let spec = MlpSpec::new(2, 1, 4);
        let mut m = SolutionModel {
            segments: vec![
                Segment { t_start: 0.0, t_end: 0.5, net: Mlp::init(spec.clone(), 1) },
                Segment { t_start: 0.5, t_end: 1.0, net: Mlp::init(spec, 2) },
            ],
        };
        // Left-closed at zero, intervals (start, end].
        assert_eq!(m.segment_for(0.0).unwrap().t_end, 0.5);
        assert_eq!(m.segment_for(0.5).unwrap().t_end, 0.5);
        assert_eq!(m.segment_for(0.50001).unwrap().t_end, 1.0);
        assert_eq!(m.segment_for(1.0).unwrap().t_end, 1.0);
        assert!(matches!(m.segment_for(1.1), Err(Error::TimeOutOfRange)));
        assert!(matches!(m.segment_for(-0.1), Err(Error::TimeOutOfRange)));
        m.segments.clear();
        assert!(m.segment_for(0.0).is_err());
    }

    /// 4th-order central difference stencils.
    fn fd1(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
    }

    fn fd2(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
            / (12.0 * h * h)
    }

    #[test]
    fn input_derivatives_match_finite_differences() {
        let mut rng = seed::rng(77);
        let h = 1e-3;
        for trial in 0..100 {
            let dim = if trial % 2 == 0 { 2 } else { 3 };
            let spec = MlpSpec::new(dim, 2, 12);
            let net = Mlp::init(spec, 100 + trial as u64);
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let pairs: Vec<(usize, usize)> =
                (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect();
            let (out, _) = net.forward_jet(&JetInput::identity(&x, pairs.clone()));
            for k in 0..dim {
                let xf = x.clone();
                let f = |v: f64| {
                    let mut y = xf.clone();
                    y[k] = v;
                    net.value(&y)
                };
                let expect = fd1(f, x[k], h);
                assert_relative_eq!(out.first[k], expect, max_relative = 1e-5, epsilon = 1e-10);
            }
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let expect = if i == j {
                    let xf = x.clone();
                    fd2(
                        |v: f64| {
                            let mut y = xf.clone();
                            y[i] = v;
                            net.value(&y)
                        },
                        x[i],
                        h,
                    )
                } else {
                    // Mixed derivative: outer fd1 in x_i of fd1 in x_j.
                    let xf = x.clone();
                    fd1(
                        |vi: f64| {
                            let xf2 = xf.clone();
                            fd1(
                                |vj: f64| {
                                    let mut y = xf2.clone();
                                    y[i] = vi;
                                    y[j] = vj;
                                    net.value(&y)
                                },
                                xf[j],
                                h,
                            )
                        },
                        x[i],
                        h,
                    )
                };
                assert_relative_eq!(out.second[p], expect, max_relative = 1e-5, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut rng = seed::rng(55);
        let spec = MlpSpec::new(3, 2, 10);
        let net = Mlp::init(spec.clone(), 9);
        let x = [0.3, -0.4, 0.6];
        let pairs = vec![(0, 0), (1, 1), (0, 1)];
        // Scalar functional with random coefficients over the output jet.
        let c0: f64 = rng.gen_range(-1.0..1.0);
        let cf: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let cs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let functional = |net: &Mlp| {
            let (out, _) = net.forward_jet(&JetInput::identity(&x, pairs.clone()));
            c0 * out.value
                + cf.iter().zip(&out.first).map(|(c, v)| c * v).sum::<f64>()
                + cs.iter().zip(&out.second).map(|(c, v)| c * v).sum::<f64>()
        };
        let (_, tape) = net.forward_jet(&JetInput::identity(&x, pairs.clone()));
        let cot = JetOut { value: c0, first: cf.clone(), second: cs.clone() };
        let mut grad = vec![0.0; net.params.len()];
        net.backward_jet(&tape, &cot, &mut grad);

        let h = 1e-6;
        // Spot-check a spread of parameters.
        for p in (0..net.params.len()).step_by(7) {
            let mut plus = net.clone();
            plus.params[p] += h;
            let mut minus = net.clone();
            minus.params[p] -= h;
            let expect = (functional(&plus) - functional(&minus)) / (2.0 * h);
            assert_relative_eq!(grad[p], expect, max_relative = 1e-5, epsilon = 1e-8);
        }
    }

    #[test]
    fn surface_laplacian_routes_agree() {
        // Both the parameterized route and the curvature form on a random
        // network over the unit circle.
        let domain = Domain::Disk { center: [0.0, 0.0], radius: 1.0 };
        let net = Mlp::init(MlpSpec::new(3, 2, 16), 31);
        let model = single_segment(net, 1.0);
        for k in 0..24 {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / 24.0;
            let bp = domain.boundary_point_at(theta, 0.5).unwrap();
            let a = model.surface_laplacian(&domain, &bp, theta, 0.5).unwrap();
            let b = model.surface_laplacian_curvature_form(&domain, &bp, theta, 0.5).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-9, epsilon = 1e-9);
        }
        // And on an ellipse, where the metric is non-trivial.
        let ell = Domain::Ellipse { center: [0.0, 0.0], a: 2.0, b: 1.0 };
        let net = Mlp::init(MlpSpec::new(3, 2, 16), 32);
        let model = single_segment(net, 1.0);
        for k in 0..24 {
            let theta = 2.0 * std::f64::consts::PI * (k as f64 + 0.3) / 24.0;
            let bp = ell.boundary_point_at(theta, 0.25).unwrap();
            let a = model.surface_laplacian(&ell, &bp, theta, 0.25).unwrap();
            let b = model.surface_laplacian_curvature_form(&ell, &bp, theta, 0.25).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-8, epsilon = 1e-8);
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = MlpSpec::new(2, 2, 8);
        let model = SolutionModel {
            segments: vec![
                Segment { t_start: 0.0, t_end: 0.5, net: Mlp::init(spec.clone(), 1) },
                Segment { t_start: 0.5, t_end: 1.0, net: Mlp::init(spec, 2) },
            ],
        };
        save_model(&model, dir.path(), 7).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert_eq!(loaded.segments.len(), 2);
        for (a, b) in model.segments.iter().zip(&loaded.segments) {
            assert_eq!(a.net.params, b.net.params);
            assert_eq!(a.t_start, b.t_start);
            assert_eq!(a.t_end, b.t_end);
        }
    }
}
