//! Layer chains ending in an LVQ head: shape checking, per-example forward
//! and backward passes, parameter access for the optimizer, and per-layer
//! gradient checks.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dissimilarity::{response_backward, Dissimilarity, PreparedPrototypes, PrototypeSet};
use crate::error::{shape_err, Error, Result};
use crate::lvq::{
    apply_reject, glvq_backward, glvq_loss, rslvq_backward, rslvq_log_prob, rslvq_loss,
    ClassificationDecision,
    RejectPolicy,
};
use crate::proto_conv::{
    hard_assign, hard_assign_backward, proto_conv_backward, relu_scores, relu_scores_backward,
    soft_assign_sigmoid, soft_assign_sigmoid_backward, soft_assign_softmax,
    soft_assign_softmax_backward, DissimilarityStack, HardMode, KernelPrototypeBank, StackKind,
};
use crate::tensor::Tensor;
use crate::train::{gradcheck_coords, neural_gas_rank_weights, GradcheckReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Glvq,
    Rslvq,
}

/// Supervised prototype head on the flattened input.
#[derive(Debug, Clone, PartialEq)]
pub struct LvqHead {
    pub prototypes: PrototypeSet,
    pub dissimilarity: Dissimilarity,
    pub loss: LossKind,
}

impl LvqHead {
    fn labels(&self) -> &[usize] {
        self.prototypes.labels().expect("validated at construction")
    }

    /// The function [`loss_and_grad`](Self::loss_and_grad) differentiates:
    /// the loss itself, except that RSLVQ's likelihood is not clamped.
    pub fn objective(&self, d: &[f64], target: usize) -> Result<f64> {
        let labels = self.labels();
        match self.loss {
            LossKind::Glvq => glvq_loss(d, labels, target),
            LossKind::Rslvq => Ok(-rslvq_log_prob(d, labels, target)?),
        }
    }

    /// Loss and its gradient with respect to the response vector.
    pub fn loss_and_grad(&self, d: &[f64], target: usize, upstream: f64) -> Result<(f64, Vec<f64>)> {
        let labels = self.labels();
        Ok(match self.loss {
            LossKind::Glvq => (
                glvq_loss(d, labels, target)?,
                glvq_backward(d, labels, target, upstream)?,
            ),
            LossKind::Rslvq => (
                rslvq_loss(d, labels, target)?,
                rslvq_backward(d, labels, target, upstream)?,
            ),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Identity,
    /// Clips n-ball scores at zero.
    Relu,
    /// Channel softmax of `-d/σ²`.
    Softmax,
    /// `sigmoid(score/σ²)`.
    Sigmoid,
    HardOneHot,
    HardHeaviside,
}

impl ActivationKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::Softmax => "softmax",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::HardOneHot => "hard_onehot",
            ActivationKind::HardHeaviside => "hard_heaviside",
        }
    }

    fn output_kind(self, input: Option<StackKind>) -> Result<Option<StackKind>, String> {
        let need = |want: StackKind, out: StackKind| {
            if input == Some(want) {
                Ok(Some(out))
            } else {
                Err(format!(
                    "{} expects a {} stack, got {}",
                    self.name(),
                    kind_name(Some(want)),
                    kind_name(input)
                ))
            }
        };
        match self {
            ActivationKind::Identity => Ok(input),
            ActivationKind::Relu => need(StackKind::NBallScore, StackKind::NBallScore),
            ActivationKind::Softmax => need(StackKind::Distance, StackKind::SoftProb),
            ActivationKind::HardOneHot => need(StackKind::Distance, StackKind::HardOneHot),
            ActivationKind::Sigmoid => need(StackKind::NBallScore, StackKind::SoftPossibility),
            ActivationKind::HardHeaviside => need(StackKind::NBallScore, StackKind::HardBinary),
        }
    }
}

fn kind_name(kind: Option<StackKind>) -> &'static str {
    match kind {
        None => "raw input",
        Some(StackKind::Distance) => "distance",
        Some(StackKind::NBallScore) => "nball_score",
        Some(StackKind::SoftProb) => "soft_prob",
        Some(StackKind::SoftPossibility) => "soft_possibility",
        Some(StackKind::HardOneHot) => "hard_onehot",
        Some(StackKind::HardBinary) => "hard_binary",
    }
}

/// Stack activation. `sigma` is the kernel width of the soft functions and of
/// the surrogate gradients of the hard ones; it is multiplied by
/// `sigma_decay` at the end of every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationLayer {
    pub kind: ActivationKind,
    pub sigma: f64,
    pub sigma_decay: f64,
}

impl ActivationLayer {
    pub fn new(kind: ActivationKind, sigma: f64, sigma_decay: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("σ must be positive, got {sigma}")));
        }
        if !(sigma_decay > 0.0 && sigma_decay <= 1.0) {
            return Err(Error::Config(format!("σ decay must lie in (0, 1], got {sigma_decay}")));
        }
        Ok(Self {
            kind,
            sigma,
            sigma_decay,
        })
    }

    pub fn forward(&self, input: &DissimilarityStack) -> Result<DissimilarityStack> {
        match self.kind {
            ActivationKind::Identity => Ok(input.clone()),
            ActivationKind::Relu => relu_scores(input),
            ActivationKind::Softmax => soft_assign_softmax(input, self.sigma),
            ActivationKind::Sigmoid => soft_assign_sigmoid(input, self.sigma),
            ActivationKind::HardOneHot => hard_assign(input, HardMode::OneHot, self.sigma),
            ActivationKind::HardHeaviside => hard_assign(input, HardMode::Heaviside, self.sigma),
        }
    }

    /// The smooth function whose gradient the backward pass returns.
    pub fn surrogate_forward(&self, input: &DissimilarityStack) -> Result<DissimilarityStack> {
        match self.kind {
            ActivationKind::HardOneHot => soft_assign_softmax(input, self.sigma),
            ActivationKind::HardHeaviside => soft_assign_sigmoid(input, self.sigma),
            _ => self.forward(input),
        }
    }

    pub fn backward(&self, input: &DissimilarityStack, upstream: &Tensor) -> Result<Tensor> {
        match self.kind {
            ActivationKind::Identity => Ok(upstream.clone()),
            ActivationKind::Relu => Ok(relu_scores_backward(input, upstream)),
            ActivationKind::Softmax => soft_assign_softmax_backward(input, self.sigma, upstream),
            ActivationKind::Sigmoid => soft_assign_sigmoid_backward(input, self.sigma, upstream),
            ActivationKind::HardOneHot => {
                hard_assign_backward(input, HardMode::OneHot, self.sigma, upstream)
            }
            ActivationKind::HardHeaviside => {
                hard_assign_backward(input, HardMode::Heaviside, self.sigma, upstream)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    ProtoConv(KernelPrototypeBank),
    Activation(ActivationLayer),
    LvqHead(LvqHead),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::ProtoConv(_) => "proto_conv",
            Layer::Activation(a) => a.kind.name(),
            Layer::LvqHead(_) => "lvq_head",
        }
    }
}

/// Output of a layer: raw image data or a tagged dissimilarity stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal {
    Raw(Tensor),
    Stack(DissimilarityStack),
}

impl Signal {
    pub fn values(&self) -> &Tensor {
        match self {
            Signal::Raw(t) => t,
            Signal::Stack(s) => &s.values,
        }
    }

    fn stack(&self) -> &DissimilarityStack {
        match self {
            Signal::Stack(s) => s,
            Signal::Raw(_) => unreachable!("activation inputs are validated to be stacks"),
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input of every layer; the last entry feeds the head.
    pub signals: Vec<Signal>,
    pub distances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    pub len: usize,
    pub non_negative: bool,
}

/// Gradient check result of one differentiable operation of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub op: String,
    pub report: GradcheckReport,
}

impl fmt::Display for OpCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: max relative error {:.3e}", self.op, self.report.max_relative_error)
    }
}

/// A validated layer chain on `[rows, cols, channels]` inputs whose last
/// layer is an LVQ head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: [usize; 3],
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_shape: [usize; 3], layers: Vec<Layer>) -> Result<Self> {
        if input_shape.contains(&0) {
            return Err(Error::Config(format!("input shape {input_shape:?} has a zero extent")));
        }
        let Some(Layer::LvqHead(_)) = layers.last() else {
            return Err(Error::Config("the last layer must be an lvq_head".into()));
        };
        let mut shape = input_shape;
        let mut kind = None;
        for (i, layer) in layers.iter().enumerate() {
            let fail = |msg: String| Error::Config(format!("layer {i} ({}): {msg}", layer.name()));
            match layer {
                Layer::ProtoConv(bank) => {
                    let g = bank
                        .geometry((shape[0], shape[1], shape[2]))
                        .map_err(|e| fail(e.to_string()))?;
                    shape = [g.out_rows, g.out_cols, bank.len()];
                    kind = Some(if bank.radii_sq.is_some() {
                        StackKind::NBallScore
                    } else {
                        StackKind::Distance
                    });
                }
                Layer::Activation(a) => {
                    ActivationLayer::new(a.kind, a.sigma, a.sigma_decay).map_err(|e| fail(e.to_string()))?;
                    kind = a.kind.output_kind(kind).map_err(fail)?;
                }
                Layer::LvqHead(head) => {
                    if i + 1 != layers.len() {
                        return Err(fail("an lvq_head must be the last layer".into()));
                    }
                    if head.prototypes.labels().is_none() {
                        return Err(fail("head prototypes need class labels".into()));
                    }
                    head.dissimilarity
                        .check(shape.iter().product(), &head.prototypes)
                        .map_err(|e| fail(e.to_string()))?;
                }
            }
        }
        Ok(Self {
            input_shape,
            layers,
        })
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn head(&self) -> &LvqHead {
        match self.layers.last() {
            Some(Layer::LvqHead(h)) => h,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn head_mut(&mut self) -> &mut LvqHead {
        match self.layers.last_mut() {
            Some(Layer::LvqHead(h)) => h,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn has_hard_layers(&self) -> bool {
        self.layers.iter().any(|l| {
            matches!(
                l,
                Layer::Activation(ActivationLayer {
                    kind: ActivationKind::HardOneHot | ActivationKind::HardHeaviside,
                    ..
                })
            )
        })
    }

    /// Shape of the input of every layer.
    pub fn signal_shapes(&self) -> Vec<[usize; 3]> {
        let mut shape = self.input_shape;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            out.push(shape);
            if let Layer::ProtoConv(bank) = layer {
                let g = bank
                    .geometry((shape[0], shape[1], shape[2]))
                    .expect("validated at construction");
                shape = [g.out_rows, g.out_cols, bank.len()];
            }
        }
        out
    }

    /// Efficient-response cache of the head, reusable while parameters are fixed.
    pub fn prepare(&self) -> Result<PreparedPrototypes<'_>> {
        let head = self.head();
        let shapes = self.signal_shapes();
        let dim = shapes.last().map_or(0, |s| s.iter().product());
        PreparedPrototypes::new(&head.prototypes, &head.dissimilarity, dim)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(shape_err!(
                "input is {:?}, the network expects {:?}",
                x.shape(),
                self.input_shape
            ));
        }
        Ok(())
    }

    pub fn forward(&self, prepared: &PreparedPrototypes<'_>, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut signals = Vec::with_capacity(self.layers.len());
        signals.push(Signal::Raw(x.clone()));
        for (i, layer) in self.layers.iter().enumerate() {
            let input = signals.last().expect("non-empty");
            let out = match layer {
                Layer::ProtoConv(bank) => Signal::Stack(bank.forward(input.values())?),
                Layer::Activation(a) => Signal::Stack(a.forward(input.stack())?),
                Layer::LvqHead(_) => {
                    let distances = prepared.response(input.values().data())?;
                    if distances.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Numeric(format!("non-finite output at layer {i} (lvq_head)")));
                    }
                    return Ok(Trace { signals, distances });
                }
            };
            if !out.values().is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite output at layer {i} ({})",
                    layer.name()
                )));
            }
            signals.push(out);
        }
        unreachable!("the last layer is a head")
    }

    /// WTA decision followed by the reject policy.
    pub fn decide(
        &self,
        prepared: &PreparedPrototypes<'_>,
        x: &Tensor,
        policy: &RejectPolicy,
    ) -> Result<ClassificationDecision> {
        let trace = self.forward(prepared, x)?;
        let head = self.head();
        let with_probs = policy.needs_probabilities() || head.loss == LossKind::Rslvq;
        let decision = ClassificationDecision::from_distances(trace.distances, head.labels(), with_probs)?;
        apply_reject(decision, policy)
    }

    pub fn param_layout(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut push = |what: &str, len: usize, non_negative: bool| {
                out.push(ParamInfo {
                    name: format!("layer{i}.{what}"),
                    len,
                    non_negative,
                })
            };
            match layer {
                Layer::ProtoConv(bank) => {
                    push("kernels", bank.kernels.len(), false);
                    if let Some(r) = &bank.radii_sq {
                        push("radii_sq", r.len(), true);
                    }
                }
                Layer::Activation(_) => {}
                Layer::LvqHead(head) => {
                    push("prototypes", head.prototypes.weights().len(), false);
                    if let Some(o) = head.dissimilarity.omega() {
                        push("omega", o.len(), false);
                    }
                    if let Some(b) = head.dissimilarity.bias() {
                        push("bias", b.len(), false);
                    }
                }
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::ProtoConv(bank) => {
                    out.push(bank.kernels.data());
                    if let Some(r) = &bank.radii_sq {
                        out.push(r);
                    }
                }
                Layer::Activation(_) => {}
                Layer::LvqHead(head) => {
                    out.push(head.prototypes.weights().data());
                    if let Some(o) = head.dissimilarity.omega() {
                        out.push(o.data());
                    }
                    if let Some(b) = head.dissimilarity.bias() {
                        out.push(b);
                    }
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::ProtoConv(bank) => {
                    out.push(bank.kernels.data_mut());
                    if let Some(r) = &mut bank.radii_sq {
                        out.push(r);
                    }
                }
                Layer::Activation(_) => {}
                Layer::LvqHead(LvqHead {
                    prototypes,
                    dissimilarity,
                    ..
                }) => {
                    out.push(prototypes.weights_mut().data_mut());
                    match dissimilarity {
                        Dissimilarity::Euclidean => {}
                        Dissimilarity::Omega { omega } | Dissimilarity::Projection { omega } => {
                            out.push(omega.data_mut())
                        }
                        Dissimilarity::NonlinearProjection { omega, bias, .. } => {
                            out.push(omega.data_mut());
                            out.push(bias);
                        }
                    }
                }
            }
        }
        out
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.param_layout().iter().map(|p| vec![0.0; p.len]).collect()
    }

    /// Loss of one example; adds `scale` times its parameter gradient to
    /// `grads`. With `neighborhood = Some(λ)` the gradient of every prototype
    /// (head prototypes and kernel-prototypes, per position) is multiplied by
    /// its neural-gas rank weight.
    pub fn accumulate(
        &self,
        prepared: &PreparedPrototypes<'_>,
        x: &Tensor,
        target: usize,
        scale: f64,
        neighborhood: Option<f64>,
        grads: &mut [Vec<f64>],
    ) -> Result<f64> {
        let trace = self.forward(prepared, x)?;
        self.backward(&trace, target, scale, neighborhood, grads)
    }

    /// Backward pass of a trace; returns the example's loss.
    pub fn backward(
        &self,
        trace: &Trace,
        target: usize,
        scale: f64,
        neighborhood: Option<f64>,
        grads: &mut [Vec<f64>],
    ) -> Result<f64> {
        let layout = self.param_layout();
        if grads.len() != layout.len() || grads.iter().zip(&layout).any(|(g, p)| g.len() != p.len) {
            return Err(shape_err!("gradient buffers do not match the parameter layout"));
        }
        let mut slot = layout.len();
        let head = self.head();
        let (loss, g_d) = head.loss_and_grad(&trace.distances, target, scale)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss at layer {} (lvq_head)",
                self.layers.len() - 1
            )));
        }
        let flat = trace.signals.last().expect("non-empty").values();
        let mut rg = response_backward(flat.data(), &head.prototypes, &head.dissimilarity, &g_d)?;
        if let Some(lambda) = neighborhood {
            let w = neural_gas_rank_weights(&trace.distances, lambda)?;
            for (k, wk) in w.iter().enumerate() {
                rg.prototypes.row_mut(k).iter_mut().for_each(|g| *g *= wk);
            }
        }
        let mut head_parts: Vec<&[f64]> = vec![rg.prototypes.data()];
        if let Some(o) = &rg.omega {
            head_parts.push(o.data());
        }
        if let Some(b) = &rg.bias {
            head_parts.push(b);
        }
        slot -= head_parts.len();
        for (dst, src) in grads[slot..].iter_mut().zip(head_parts) {
            add_into(dst, src);
        }

        let mut upstream = Tensor::new(flat.shape().to_vec(), rg.input)?;
        for i in (0..self.layers.len() - 1).rev() {
            let input = &trace.signals[i];
            match &self.layers[i] {
                Layer::Activation(a) => upstream = a.backward(input.stack(), &upstream)?,
                Layer::ProtoConv(bank) => {
                    let weights = match neighborhood {
                        Some(lambda) => Some(conv_rank_weights(bank, trace.signals[i + 1].values(), lambda)?),
                        None => None,
                    };
                    let g = proto_conv_backward(input.values(), bank, &upstream, weights.as_ref())?;
                    if let Some(r) = &g.radii_sq {
                        slot -= 1;
                        add_into(&mut grads[slot], r);
                    }
                    slot -= 1;
                    add_into(&mut grads[slot], g.kernels.data());
                    upstream = g.input;
                }
                Layer::LvqHead(_) => unreachable!("only the last layer is a head"),
            }
        }
        Ok(loss)
    }

    /// `strength · Σ r²` over every kernel-prototype layer; adds the
    /// penalty gradient to `grads` and returns the penalty.
    pub fn l1_radii_penalty(&self, strength: f64, grads: &mut [Vec<f64>]) -> Result<f64> {
        let mut total = 0.0;
        let mut slot = 0;
        for layer in &self.layers {
            match layer {
                Layer::ProtoConv(bank) => {
                    slot += 1;
                    if let Some(r) = &bank.radii_sq {
                        let (p, g) = crate::train::l1_bias_penalty(r, strength)?;
                        total += p;
                        add_into(&mut grads[slot], &g);
                        slot += 1;
                    }
                }
                Layer::Activation(_) => {}
                Layer::LvqHead(_) => {}
            }
        }
        Ok(total)
    }

    /// Multiplies every σ by its per-epoch decay.
    pub fn decay_sigmas(&mut self) {
        for layer in &mut self.layers {
            if let Layer::Activation(a) = layer {
                a.sigma *= a.sigma_decay;
            }
        }
    }

    /// Clamps all squared radii at zero.
    pub fn clamp_radii(&mut self) {
        for layer in &mut self.layers {
            if let Layer::ProtoConv(bank) = layer {
                bank.clamp_radii();
            }
        }
    }

    /// Central-difference checks of every differentiable operation at the
    /// point produced by `x`: each layer's backward (hard activations against
    /// their soft surrogate), the head's response and loss, and, when the
    /// chain has no hard layer, the end-to-end parameter gradient. At most
    /// `max_coords` random coordinates are probed per tensor.
    pub fn gradcheck_ops(
        &self,
        x: &Tensor,
        target: usize,
        seed: u64,
        step: f64,
        max_coords: usize,
    ) -> Result<Vec<OpCheck>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prepared = self.prepare()?;
        let trace = self.forward(&prepared, x)?;
        let mut out = Vec::new();
        let pick = |len: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
            if len <= max_coords {
                (0..len).collect()
            } else {
                rand::seq::index::sample(rng, len, max_coords).into_vec()
            }
        };

        for (i, layer) in self.layers.iter().enumerate() {
            let input = &trace.signals[i];
            let label = |what: &str| format!("layer{i}.{}:{what}", layer.name());
            match layer {
                Layer::Activation(a) => {
                    let stack = input.stack();
                    let out_shape = stack.values.shape().to_vec();
                    let u = random_tensor(&mut rng, &out_shape);
                    let analytic = a.backward(stack, &u)?;
                    let f = |v: &[f64]| -> Result<f64> {
                        let s = DissimilarityStack {
                            values: Tensor::new(out_shape.clone(), v.to_vec())?,
                            kind: stack.kind,
                        };
                        Ok(inner(&a.surrogate_forward(&s)?.values, &u))
                    };
                    let coords = pick(stack.values.len(), &mut rng);
                    out.push(OpCheck {
                        op: label("input"),
                        report: gradcheck_coords(f, analytic.data(), stack.values.data(), &coords, step)?,
                    });
                }
                Layer::ProtoConv(bank) => {
                    let xv = input.values();
                    let out_values = trace.signals[i + 1].values();
                    let u = random_tensor(&mut rng, out_values.shape());
                    let g = proto_conv_backward(xv, bank, &u, None)?;
                    let f_x = |v: &[f64]| -> Result<f64> {
                        let xt = Tensor::new(xv.shape().to_vec(), v.to_vec())?;
                        Ok(inner(&bank.forward(&xt)?.values, &u))
                    };
                    let coords = pick(xv.len(), &mut rng);
                    out.push(OpCheck {
                        op: label("input"),
                        report: gradcheck_coords(f_x, g.input.data(), xv.data(), &coords, step)?,
                    });
                    let f_k = |v: &[f64]| -> Result<f64> {
                        let mut b = bank.clone();
                        b.kernels = Tensor::new(bank.kernels.shape().to_vec(), v.to_vec())?;
                        Ok(inner(&b.forward(xv)?.values, &u))
                    };
                    let coords = pick(bank.kernels.len(), &mut rng);
                    out.push(OpCheck {
                        op: label("kernels"),
                        report: gradcheck_coords(f_k, g.kernels.data(), bank.kernels.data(), &coords, step)?,
                    });
                    if let (Some(r), Some(gr)) = (&bank.radii_sq, &g.radii_sq) {
                        let f_r = |v: &[f64]| -> Result<f64> {
                            let mut b = bank.clone();
                            b.radii_sq = Some(v.to_vec());
                            Ok(inner(&b.forward(xv)?.values, &u))
                        };
                        let coords: Vec<usize> = (0..r.len()).collect();
                        out.push(OpCheck {
                            op: label("radii_sq"),
                            report: gradcheck_coords(f_r, gr, r, &coords, step)?,
                        });
                    }
                }
                Layer::LvqHead(head) => {
                    let flat = input.values().data();
                    let (_, g_d) = head.loss_and_grad(&trace.distances, target, 1.0)?;
                    let loss_of = |d: &[f64]| head.objective(d, target);
                    let coords: Vec<usize> = (0..trace.distances.len()).collect();
                    out.push(OpCheck {
                        op: label("loss"),
                        report: gradcheck_coords(loss_of, &g_d, &trace.distances, &coords, step)?,
                    });

                    let u: Vec<f64> = (0..head.prototypes.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let rg = response_backward(flat, &head.prototypes, &head.dissimilarity, &u)?;
                    let resp = |protos: &PrototypeSet, spec: &Dissimilarity, v: &[f64]| -> Result<f64> {
                        let d = crate::dissimilarity::response_naive(v, protos, spec)?;
                        Ok(d.iter().zip(&u).map(|(a, b)| a * b).sum())
                    };
                    let coords = pick(flat.len(), &mut rng);
                    out.push(OpCheck {
                        op: label("response.input"),
                        report: gradcheck_coords(
                            |v| resp(&head.prototypes, &head.dissimilarity, v),
                            &rg.input,
                            flat,
                            &coords,
                            step,
                        )?,
                    });
                    let w = head.prototypes.weights();
                    let coords = pick(w.len(), &mut rng);
                    out.push(OpCheck {
                        op: label("response.prototypes"),
                        report: gradcheck_coords(
                            |v| {
                                let p = PrototypeSet::new(
                                    Tensor::new(w.shape().to_vec(), v.to_vec())?,
                                    head.prototypes.labels().map(<[usize]>::to_vec),
                                )?;
                                resp(&p, &head.dissimilarity, flat)
                            },
                            rg.prototypes.data(),
                            w.data(),
                            &coords,
                            step,
                        )?,
                    });
                    if let (Some(o), Some(go)) = (head.dissimilarity.omega(), &rg.omega) {
                        let coords = pick(o.len(), &mut rng);
                        out.push(OpCheck {
                            op: label("response.omega"),
                            report: gradcheck_coords(
                                |v| {
                                    let mut spec = head.dissimilarity.clone();
                                    *spec.omega_mut().expect("has omega") =
                                        Tensor::new(o.shape().to_vec(), v.to_vec())?;
                                    resp(&head.prototypes, &spec, flat)
                                },
                                go.data(),
                                o.data(),
                                &coords,
                                step,
                            )?,
                        });
                    }
                    if let (Some(b), Some(gb)) = (head.dissimilarity.bias(), &rg.bias) {
                        let coords: Vec<usize> = (0..b.len()).collect();
                        out.push(OpCheck {
                            op: label("response.bias"),
                            report: gradcheck_coords(
                                |v| {
                                    let mut spec = head.dissimilarity.clone();
                                    *spec.bias_mut().expect("has bias") = v.to_vec();
                                    resp(&head.prototypes, &spec, flat)
                                },
                                gb,
                                b,
                                &coords,
                                step,
                            )?,
                        });
                    }
                }
            }
        }

        if !self.has_hard_layers() {
            let mut grads = self.zero_grads();
            self.backward(&trace, target, 1.0, None, &mut grads)?;
            let layout = self.param_layout();
            let base: Vec<Vec<f64>> = self.params().into_iter().map(<[f64]>::to_vec).collect();
            for (s, info) in layout.iter().enumerate() {
                let f = |v: &[f64]| -> Result<f64> {
                    let mut net = self.clone();
                    net.params_mut()[s].copy_from_slice(v);
                    let prepared = net.prepare()?;
                    let t = net.forward(&prepared, x)?;
                    // The naive response avoids the cancellation of the dot-product form.
                    let head = net.head();
                    let flat = t.signals.last().expect("non-empty").values().data();
                    let d = crate::dissimilarity::response_naive(flat, &head.prototypes, &head.dissimilarity)?;
                    head.objective(&d, target)
                };
                let coords = pick(info.len, &mut rng);
                out.push(OpCheck {
                    op: format!("network:{}", info.name),
                    report: gradcheck_coords(f, &grads[s], &base[s], &coords, step)?,
                });
            }
        }
        Ok(out)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

fn inner(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("positive extents")
}

/// Per-position rank weights of a kernel-prototype layer, ranked by distance.
fn conv_rank_weights(bank: &KernelPrototypeBank, output: &Tensor, lambda: f64) -> Result<Tensor> {
    let n = bank.len();
    let mut w = Vec::with_capacity(output.len());
    for pixel in output.data().chunks_exact(n) {
        // Scores r² - d rank in the opposite order of distances.
        let d: Vec<f64> = match &bank.radii_sq {
            Some(r) => pixel.iter().zip(r).map(|(s, r)| r - s).collect(),
            None => pixel.to_vec(),
        };
        w.extend(neural_gas_rank_weights(&d, lambda)?);
    }
    Tensor::new(output.shape().to_vec(), w)
}
