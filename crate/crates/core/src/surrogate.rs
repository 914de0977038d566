//! Feed-forward regressor from (virtual-array occupancy, prior variance) to the
//! optimized known-phase bound, used to rank antenna candidates cheaply.

use std::fs;
use std::path::Path;

use argmin::core::{CostFunction, Executor, Gradient, State};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use log::info;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{antenna_cost_exact, argmin_first, enumerate_antenna_candidates, AntennaCandidate, AntennaGrid, ByteReader};
use crate::error::{Error, Result};
use crate::wwb::WwbOptConfig;

const MODEL_MAGIC: &[u8; 8] = b"WWBMLP\0\0";
pub const MODEL_VERSION: u32 = 1;

/// Occupancy of each universe position followed by the prior variance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn variance(&self) -> f64 {
        self.0[self.0.len() - 1]
    }
}

/// Presence (not multiplicity) of each virtual position; `universe` must be sorted.
pub fn encode_input(cand: &AntennaCandidate, universe: &[u32], variance: f64) -> Result<FeatureVector> {
    if !(variance > 0.0) {
        return Err(Error::invalid(format!("variance must be > 0, got {variance}")));
    }
    let mut f = vec![0.0; universe.len() + 1];
    for k in cand.virtual_units() {
        let i = universe
            .binary_search(&k)
            .map_err(|_| Error::invalid(format!("virtual position {k} is not in the candidate universe")))?;
        f[i] = 1.0;
    }
    f[universe.len()] = variance;
    Ok(FeatureVector(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

/// Affine maps applied before and after the network.
///
/// The last input coordinate (variance) is taken to `log10` first; targets are
/// modelled as standardized `ln cost`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_shift: f64,
    pub target_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    layers: Vec<LayerShape>,
    normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    shapes: Vec<LayerShape>,
    /// Per layer: row-major `outputs × inputs` weights, then biases.
    params: Vec<f64>,
    norm: Normalization,
}

impl Mlp {
    /// Xavier-style initialization of a tanh network; the linear scalar head starts at zero
    /// so an untrained model predicts the target mean.
    pub fn new(inputs: usize, hidden: &[usize], norm: Normalization, seed: u64) -> Result<Self> {
        if inputs == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        if norm.input_shift.len() != inputs || norm.input_scale.len() != inputs {
            return Err(Error::Dimension {
                expected: inputs,
                actual: norm.input_shift.len(),
                context: "input normalization",
            });
        }
        let mut shapes = Vec::new();
        let mut prev = inputs;
        for &h in hidden {
            shapes.push(LayerShape {
                inputs: prev,
                outputs: h,
                activation: Activation::Tanh,
            });
            prev = h;
        }
        shapes.push(LayerShape {
            inputs: prev,
            outputs: 1,
            activation: Activation::Identity,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (l, s) in shapes.iter().enumerate() {
            let std = if l + 1 == shapes.len() { 0.0 } else { (1.0 / s.inputs as f64).sqrt() };
            let normal = Normal::new(0.0, std).expect("finite std");
            params.extend((0..s.inputs * s.outputs).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat(0.0).take(s.outputs));
        }
        Ok(Self { shapes, params, norm })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn inputs(&self) -> usize {
        self.shapes[0].inputs
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                actual: p.len(),
                context: "network parameters",
            });
        }
        self.params.copy_from_slice(p);
        Ok(())
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    /// Raw feature vector to network input.
    pub fn normalize_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Dimension {
                expected: self.inputs(),
                actual: x.len(),
                context: "surrogate input",
            });
        }
        let last = x.len() - 1;
        Ok(x.iter()
            .enumerate()
            .map(|(i, &v)| {
                let t = if i == last { v.log10() } else { v };
                (t - self.norm.input_shift[i]) / self.norm.input_scale[i]
            })
            .collect())
    }

    /// Network output on an already-normalized input.
    pub fn forward(&self, z: &[f64]) -> f64 {
        let mut ws = Workspace::new(self);
        self.forward_cached(z, &mut ws)
    }

    fn offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.shapes.iter().scan(0, |off, s| {
            let o = *off;
            *off += (s.inputs + 1) * s.outputs;
            Some(o)
        })
    }

    fn forward_cached(&self, z: &[f64], ws: &mut Workspace) -> f64 {
        ws.acts[0].copy_from_slice(z);
        for (l, (s, off)) in self.shapes.iter().zip(self.offsets()).enumerate() {
            let nw = s.inputs * s.outputs;
            let w = &self.params[off..off + nw];
            let b = &self.params[off + nw..off + nw + s.outputs];
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            for (o, out) in tail[0].iter_mut().enumerate() {
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                let a = b[o] + dot(row, input);
                *out = match s.activation {
                    Activation::Tanh => 1.0 - 2.0 / ((2.0 * a).exp() + 1.0),
                    Activation::Identity => a,
                };
            }
        }
        ws.acts[self.shapes.len()][0]
    }

    /// Residuals `f(z) − t` over a batch; adds the gradient of their mean square into `grad`.
    fn batch_pass(&self, z: ArrayView2<f64>, t: ArrayView1<f64>, grad: &mut [f64]) -> Array1<f64> {
        let offs: Vec<usize> = self.offsets().collect();
        let mut acts = vec![z.to_owned()];
        for (s, &off) in self.shapes.iter().zip(&offs) {
            let nw = s.inputs * s.outputs;
            let w = ArrayView2::from_shape((s.outputs, s.inputs), &self.params[off..off + nw]).expect("layer shape");
            let b = ArrayView1::from(&self.params[off + nw..off + nw + s.outputs]);
            let mut a = acts.last().expect("input layer").dot(&w.t()) + &b;
            if s.activation == Activation::Tanh {
                a.mapv_inplace(|x| 1.0 - 2.0 / ((2.0 * x).exp() + 1.0));
            }
            acts.push(a);
        }
        let resid = acts.last().expect("output layer").column(0).to_owned() - &t;
        let n = t.len() as f64;
        let mut delta = resid.mapv(|r| 2.0 * r / n).insert_axis(Axis(1));
        for (l, s) in self.shapes.iter().enumerate().rev() {
            if s.activation == Activation::Tanh {
                delta.zip_mut_with(&acts[l + 1], |d, a| *d *= 1.0 - a * a);
            }
            let off = offs[l];
            let nw = s.inputs * s.outputs;
            let gw = delta.t().dot(&acts[l]);
            for (g, v) in grad[off..off + nw].iter_mut().zip(gw.iter()) {
                *g += v;
            }
            for (g, v) in grad[off + nw..off + nw + s.outputs].iter_mut().zip(delta.sum_axis(Axis(0))) {
                *g += v;
            }
            if l > 0 {
                let w = ArrayView2::from_shape((s.outputs, s.inputs), &self.params[off..off + nw]).expect("layer shape");
                delta = delta.dot(&w);
            }
        }
        resid
    }

    /// Mean squared error on normalized inputs/targets and its gradient.
    pub fn loss_and_gradient(&self, zs: &[Vec<f64>], ts: &[f64]) -> (f64, Vec<f64>) {
        let dim = self.inputs();
        let z = Array2::from_shape_vec((zs.len(), dim), zs.concat()).expect("rows of network input width");
        let mut grad = vec![0.0; self.params.len()];
        let r = self.batch_pass(z.view(), ArrayView1::from(ts), &mut grad);
        (r.mapv(|x| x * x).mean().unwrap_or(0.0), grad)
    }

    /// Predicted cost for a raw feature vector.
    pub fn predict(&self, f: &FeatureVector) -> Result<f64> {
        let z = self.normalize_input(f.as_slice())?;
        Ok((self.forward(&z) * self.norm.target_scale + self.norm.target_shift).exp())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&ModelHeader {
            format_version: MODEL_VERSION,
            layers: self.shapes.clone(),
            normalization: self.norm.clone(),
        })?;
        let mut buf = Vec::with_capacity(16 + header.len() + 8 * self.params.len());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = ByteReader::new(&bytes);
        if r.take(8)? != MODEL_MAGIC {
            return Err(Error::Format(format!("{} is not a surrogate model", path.display())));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("model version {version} (expected {MODEL_VERSION})")));
        }
        let hlen = r.u32()? as usize;
        let header: ModelHeader = serde_json::from_slice(r.take(hlen)?)?;
        if header.format_version != MODEL_VERSION {
            return Err(Error::Format("model header version mismatch".into()));
        }
        let shapes = header.layers;
        if shapes.is_empty()
            || shapes.windows(2).any(|w| w[0].outputs != w[1].inputs)
            || shapes[shapes.len() - 1].outputs != 1
        {
            return Err(Error::Format("inconsistent layer shapes".into()));
        }
        let n: usize = shapes.iter().map(|s| (s.inputs + 1) * s.outputs).sum();
        let params = r.f64s(n)?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after model parameters".into()));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Format("non-finite model parameter".into()));
        }
        let norm = header.normalization;
        if norm.input_shift.len() != shapes[0].inputs || norm.input_scale.len() != shapes[0].inputs {
            return Err(Error::Format("normalization size mismatch".into()));
        }
        Ok(Self { shapes, params, norm })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Per-layer activations for one sample.
struct Workspace {
    acts: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(m: &Mlp) -> Self {
        let mut acts = vec![vec![0.0; m.inputs()]];
        acts.extend(m.shapes.iter().map(|s| vec![0.0; s.outputs]));
        Self { acts }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Momentum for SGD, first-moment decay for Adam.
    pub momentum: f64,
    /// The learning rate decays geometrically to `learning_rate · final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Extra gain on the standardized log-variance input; larger values let the first
    /// layer resolve sharper changes between neighbouring grid variances.
    pub variance_gain: f64,
    /// Full-batch L-BFGS iterations run after the mini-batch phase; 0 disables it.
    pub refine_iterations: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 64],
            optimizer: Optimizer::Adam,
            learning_rate: 1e-2,
            momentum: 0.9,
            final_lr_fraction: 1e-3,
            epochs: 1000,
            batch_size: 128,
            variance_gain: 4.0,
            refine_iterations: 3000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared relative error over each epoch's mini-batches.
    pub epoch_loss: Vec<f64>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let m = v.clone().sum::<f64>() / n;
    let s = (v.map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    (m, if s > 1e-12 { s } else { 1.0 })
}

/// Fits `ln cost` by mini-batch gradient descent; deterministic for a given seed.
pub fn train(features: &[FeatureVector], costs: &[f64], cfg: &TrainConfig) -> Result<(Mlp, TrainReport)> {
    if features.is_empty() || features.len() != costs.len() {
        return Err(Error::invalid("training set must be non-empty with one cost per feature"));
    }
    if let Some(c) = costs.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
        return Err(Error::invalid(format!("training costs must be finite and positive, got {c}")));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(cfg.variance_gain > 0.0) {
        return Err(Error::invalid("epochs, batch size, learning rate and variance gain must be positive"));
    }
    let dim = features[0].as_slice().len();
    if features.iter().any(|f| f.as_slice().len() != dim) {
        return Err(Error::invalid("feature vectors differ in length"));
    }
    let mut input_shift = Vec::with_capacity(dim);
    let mut input_scale = Vec::with_capacity(dim);
    for i in 0..dim {
        let col = features.iter().map(move |f| {
            let v = f.as_slice()[i];
            if i == dim - 1 {
                v.log10()
            } else {
                v
            }
        });
        let (m, s) = mean_std(col);
        input_shift.push(m);
        input_scale.push(if i == dim - 1 { s / cfg.variance_gain } else { s });
    }
    let (target_shift, target_scale) = mean_std(costs.iter().map(|c| c.ln()));
    let norm = Normalization {
        input_shift,
        input_scale,
        target_shift,
        target_scale,
    };
    let mut mlp = Mlp::new(dim, &cfg.hidden, norm, cfg.seed)?;
    let zs: Vec<Vec<f64>> = features
        .iter()
        .map(|f| mlp.normalize_input(f.as_slice()))
        .collect::<Result<_>>()?;
    let ts: Vec<f64> = costs.iter().map(|c| (c.ln() - target_shift) / target_scale).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..zs.len()).collect();
    let np = mlp.params.len();
    let mut m1 = vec![0.0; np];
    let mut m2 = vec![0.0; np];
    let (b1, b2, eps): (f64, f64, f64) = (cfg.momentum, 0.999, 1e-8);
    let decay = cfg.final_lr_fraction.powf(1.0 / cfg.epochs.max(2).saturating_sub(1) as f64);
    let mut step = 0i32;
    let mut grad = vec![0.0; np];
    let zmat = Array2::from_shape_vec((zs.len(), dim), zs.concat()).expect("rows of network input width");
    let tvec = Array1::from(ts.clone());
    let mut report = TrainReport {
        epoch_loss: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * decay.powi(epoch as i32);
        order.shuffle(&mut rng);
        let mut msre = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let zb = zmat.select(Axis(0), batch);
            let tb = tvec.select(Axis(0), batch);
            let r = mlp.batch_pass(zb.view(), tb.view(), &mut grad);
            msre += r.iter().map(|r| ((r * target_scale).exp() - 1.0).powi(2)).sum::<f64>();
            step += 1;
            match cfg.optimizer {
                Optimizer::Sgd => {
                    for ((p, v), g) in mlp.params.iter_mut().zip(&mut m1).zip(&grad) {
                        *v = b1 * *v - lr * g;
                        *p += *v;
                    }
                }
                Optimizer::Adam => {
                    let c1 = 1.0 - b1.powi(step);
                    let c2 = 1.0 - b2.powi(step);
                    for (((p, a), b), g) in mlp.params.iter_mut().zip(&mut m1).zip(&mut m2).zip(&grad) {
                        *a = b1 * *a + (1.0 - b1) * g;
                        *b = b2 * *b + (1.0 - b2) * g * g;
                        *p -= lr * (*a / c1) / ((*b / c2).sqrt() + eps);
                    }
                }
            }
        }
        msre /= zs.len() as f64;
        if !msre.is_finite() || mlp.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("surrogate training diverged at epoch {epoch}")));
        }
        if epoch % 100 == 0 || epoch + 1 == cfg.epochs {
            info!("epoch {epoch}: mean squared relative error {msre:.3e}");
        }
        report.epoch_loss.push(msre);
    }
    if cfg.refine_iterations > 0 {
        refine(&mut mlp, zmat.view(), tvec.view(), cfg.refine_iterations)?;
    }
    Ok((mlp, report))
}

struct FullBatch<'a> {
    mlp: Mlp,
    z: ArrayView2<'a, f64>,
    t: ArrayView1<'a, f64>,
}

impl FullBatch<'_> {
    fn eval(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let mut m = self.mlp.clone();
        m.params.copy_from_slice(p);
        let mut grad = vec![0.0; p.len()];
        let r = m.batch_pass(self.z, self.t, &mut grad);
        (r.mapv(|x| x * x).mean().unwrap_or(0.0), grad)
    }
}

impl CostFunction for FullBatch<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.eval(p).0)
    }
}

impl Gradient for FullBatch<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.eval(p).1)
    }
}

fn refine<'a>(mlp: &mut Mlp, z: ArrayView2<'a, f64>, t: ArrayView1<'a, f64>, iters: u64) -> Result<()> {
    let problem = FullBatch { mlp: mlp.clone(), z, t };
    let solver = LBFGS::new(MoreThuenteLineSearch::new(), 20)
        .with_tolerance_grad(0.0)
        .and_then(|s| s.with_tolerance_cost(0.0))
        .map_err(|e| Error::Numeric(format!("L-BFGS setup: {e}")))?;
    let res = Executor::new(problem, solver)
        .configure(|st| st.param(mlp.params.clone()).max_iters(iters))
        .run()
        .map_err(|e| Error::Numeric(format!("L-BFGS refinement failed: {e}")))?;
    let state = res.state();
    let best = state
        .get_best_param()
        .cloned()
        .ok_or_else(|| Error::Numeric("L-BFGS refinement produced no iterate".into()))?;
    if best.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("L-BFGS refinement diverged".into()));
    }
    info!("refinement: {} iterations, loss {:.3e}", state.get_iter(), state.get_best_cost());
    mlp.params = best;
    Ok(())
}

/// Exact known-phase costs for every candidate at every variance.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaDataset {
    pub grid: AntennaGrid,
    pub candidates: Vec<AntennaCandidate>,
    pub variances: Vec<f64>,
    pub snr: f64,
    /// Variance-major: `costs[v * candidates.len() + c]`.
    pub costs: Vec<f64>,
}

impl AntennaDataset {
    pub fn generate(grid: AntennaGrid, variances: &[f64], snr: f64, opt: &WwbOptConfig) -> Result<Self> {
        let candidates = enumerate_antenna_candidates(&grid);
        let nc = candidates.len();
        let costs = (0..variances.len() * nc)
            .into_par_iter()
            .map(|k| antenna_cost_exact(&candidates[k % nc], variances[k / nc], snr, opt))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            grid,
            candidates,
            variances: variances.to_vec(),
            snr,
            costs,
        })
    }

    pub fn features(&self) -> Result<Vec<FeatureVector>> {
        let universe = self.grid.virtual_universe();
        self.variances
            .iter()
            .flat_map(|&v| self.candidates.iter().map(move |c| (c, v)))
            .map(|(c, v)| encode_input(c, &universe, v))
            .collect()
    }

    /// Costs at variance index `v`.
    pub fn row(&self, v: usize) -> &[f64] {
        let nc = self.candidates.len();
        &self.costs[v * nc..(v + 1) * nc]
    }
}

/// How well a trained model reproduces a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Fidelity {
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    /// Fraction of variances at which both pick the same candidate.
    pub top1_agreement: f64,
}

pub fn fidelity(model: &Mlp, data: &AntennaDataset) -> Result<Fidelity> {
    let feats = data.features()?;
    let pred: Vec<f64> = feats.iter().map(|f| model.predict(f)).collect::<Result<_>>()?;
    let rel: Vec<f64> = pred.iter().zip(&data.costs).map(|(p, c)| (p - c).abs() / c).collect();
    let nc = data.candidates.len();
    let agree = (0..data.variances.len())
        .filter(|&v| argmin_first(data.row(v)) == argmin_first(&pred[v * nc..(v + 1) * nc]))
        .count();
    Ok(Fidelity {
        max_relative_error: rel.iter().copied().fold(0.0, f64::max),
        mean_relative_error: rel.iter().sum::<f64>() / rel.len() as f64,
        top1_agreement: agree as f64 / data.variances.len() as f64,
    })
}
