//! Trainable networks compiled from a [`NetworkSpec`].

use crate::error::{Error, Result};
use crate::neuron::{
    amp2_forward_on_tape, reset_potential, twu_sequence_on_tape, MembraneState, NeuronConfig, NeuronPolicy,
    SpikeForward,
};
use crate::rng::RandomSource;
use crate::shortcut::{merge, Bundle, ShortcutKind, ShortcutType};
use crate::tape::{BatchStats, Tape, Var};
use crate::tensor::Tensor;

use super::spec::{InputSpec, LayerSpec, NetworkSpec};

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Step {
    Linear { w: usize, b: usize },
    Norm { gamma: usize, beta: usize, slot: usize },
    Spike { cfg: NeuronConfig, label: Option<String> },
    Begin(ShortcutKind),
    End,
    Pool,
    Head { w: usize, b: usize },
}

/// Spike statistics of one SPIKE layer over a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    pub label: Option<String>,
    /// Number of emitted spikes.
    pub ones: f64,
    /// Number of neuron-timestep slots (`rows × channels`).
    pub slots: usize,
    pub channels: usize,
}

impl SpikeRecord {
    pub fn rate(&self) -> f64 {
        self.ones / self.slots as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForwardOptions {
    /// Batch statistics and running-stat updates when true.
    pub train: bool,
    pub spike_forward: SpikeForward,
    /// Copy every layer's membrane tensors out of the tape.
    pub record_membranes: bool,
}

impl ForwardOptions {
    pub fn train() -> Self {
        Self {
            train: true,
            spike_forward: SpikeForward::Heaviside,
            record_membranes: false,
        }
    }

    pub fn eval() -> Self {
        Self {
            train: false,
            ..Self::train()
        }
    }
}

/// Result of a forward pass recorded on a caller-owned tape.
#[derive(Debug)]
pub struct TapeForward {
    /// `[batch × classes]` logits.
    pub logits: Var,
    pub spikes: Vec<SpikeRecord>,
    /// Empty unless membranes were requested.
    pub membranes: Vec<MembraneState>,
    /// One entry per NORM layer in training mode.
    pub batch_stats: Vec<BatchStats>,
}

/// Forward pass with every spiking layer's membrane state.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logits: Tensor,
    pub layers: Vec<MembraneState>,
    pub spikes: Vec<SpikeRecord>,
}

/// Output of [`Network::loss_and_grad`].
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub logits: Tensor,
    pub spikes: Vec<SpikeRecord>,
    pub batch_stats: Vec<BatchStats>,
}

#[derive(Debug, Clone)]
pub struct Network {
    spec: NetworkSpec,
    steps: Vec<Step>,
    params: Vec<Tensor>,
    names: Vec<String>,
    running: Vec<BatchStats>,
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-bound, bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("positive extents")
}

/// Validates `spec` and initializes its parameters from `rng`.
pub fn build_network(spec: &NetworkSpec, rng: &mut RandomSource) -> Result<Network> {
    spec.validate()?;
    let mut params = Vec::new();
    let mut names = Vec::new();
    let mut running = Vec::new();
    let mut steps = Vec::with_capacity(spec.layers.len());
    let mut width = match spec.input {
        InputSpec::Points { dims, .. } => dims,
        InputSpec::Flat { features } => features,
    };
    let mut push = |name: String, t: Tensor| {
        params.push(t);
        names.push(name);
        params.len() - 1
    };
    for (i, layer) in spec.layers.iter().enumerate() {
        let step = match layer {
            LayerSpec::Linear { inputs, outputs } => {
                let bound = 1.0 / (*inputs as f64).sqrt();
                width = *outputs;
                Step::Linear {
                    w: push(format!("layer{i}.weight"), uniform_tensor(&[*inputs, *outputs], bound, rng)),
                    b: push(format!("layer{i}.bias"), uniform_tensor(&[*outputs], bound, rng)),
                }
            }
            LayerSpec::Norm => {
                running.push(BatchStats {
                    mean: vec![0.0; width],
                    var: vec![1.0; width],
                });
                Step::Norm {
                    gamma: push(format!("layer{i}.gamma"), Tensor::ones(&[width])),
                    beta: push(format!("layer{i}.beta"), Tensor::zeros(&[width])),
                    slot: running.len() - 1,
                }
            }
            LayerSpec::Spike { neuron, block } => Step::Spike {
                cfg: *neuron,
                label: block.clone(),
            },
            LayerSpec::ShortcutBegin { shortcut } => Step::Begin(*shortcut),
            LayerSpec::ShortcutEnd => Step::End,
            LayerSpec::MaxpoolPoints => Step::Pool,
            LayerSpec::Head { classes } => {
                let bound = 1.0 / (width as f64).sqrt();
                Step::Head {
                    w: push(format!("layer{i}.weight"), uniform_tensor(&[width, *classes], bound, rng)),
                    b: push(format!("layer{i}.bias"), uniform_tensor(&[*classes], bound, rng)),
                }
            }
        };
        steps.push(step);
    }
    Ok(Network {
        spec: spec.clone(),
        steps,
        params,
        names,
        running,
    })
}

impl Network {
    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn running_stats(&self) -> &[BatchStats] {
        &self.running
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Blends freshly observed batch statistics into the running estimates.
    pub fn update_running_stats(&mut self, batch: &[BatchStats], momentum: f64) -> Result<()> {
        if batch.len() != self.running.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} batch statistics, got {}",
                self.running.len(),
                batch.len()
            )));
        }
        for (run, new) in self.running.iter_mut().zip(batch) {
            for (r, n) in run.mean.iter_mut().zip(&new.mean) {
                *r += momentum * (n - *r);
            }
            for (r, n) in run.var.iter_mut().zip(&new.var) {
                *r += momentum * (n - *r);
            }
        }
        Ok(())
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn bind_params(&self, tape: &mut Tape) -> Vec<Var> {
        self.params.iter().map(|p| tape.leaf(p.clone())).collect()
    }

    fn input_rows(&self, batch: &Tensor) -> Result<(usize, usize, usize)> {
        let shape = batch.shape();
        match self.spec.input {
            InputSpec::Points { dims, .. } => match shape {
                [b, n, d] if *d == dims => Ok((*b, *n, dims)),
                _ => Err(Error::shape("network input", &[0, 0, dims], shape)),
            },
            InputSpec::Flat { features } => match shape {
                [b, f] if *f == features => Ok((*b, 1, features)),
                _ => Err(Error::shape("network input", &[0, features], shape)),
            },
        }
    }

    /// Records a forward pass on `tape` using the bound `params`.
    ///
    /// `rng` supplies the AMP2 perturbations, one draw per channel and layer.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &Tensor,
        opts: ForwardOptions,
        rng: &mut RandomSource,
    ) -> Result<TapeForward> {
        if params.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        let (b, n, dims) = self.input_rows(batch)?;
        let t_steps = self.spec.policy.timesteps();
        let flat = tape.constant(batch.reshape(&[b * n, dims])?);
        let mut cur = if t_steps > 1 {
            tape.concat_rows(&vec![flat; t_steps])?
        } else {
            flat
        };

        let mut features: Option<Var> = None;
        let mut spikes: Option<Var> = None;
        let mut mp1: Option<Var> = None;
        let mut handoff: Option<Var> = None;
        let mut block: Option<(ShortcutKind, Bundle, Bundle)> = None;
        let mut records = Vec::new();
        let mut membranes = Vec::new();
        let mut batch_stats = Vec::new();
        let mut logits = None;

        for step in &self.steps {
            match step {
                Step::Linear { w, b: bias } | Step::Head { w, b: bias } => {
                    let prod = tape.matmul(cur, params[*w])?;
                    cur = tape.add_bias(prod, params[*bias])?;
                    if matches!(step, Step::Head { .. }) {
                        logits = Some(cur);
                    } else {
                        features = Some(cur);
                        if let Some((_, _, out)) = &mut block {
                            out.features = Some(cur);
                        }
                    }
                }
                Step::Norm { gamma, beta, slot } => {
                    let frozen = (!opts.train).then(|| &self.running[*slot]);
                    let (y, stats) = tape.batch_norm(cur, params[*gamma], params[*beta], BN_EPS, frozen)?;
                    if opts.train {
                        batch_stats.push(stats);
                    }
                    cur = y;
                    features = Some(cur);
                    if let Some((_, _, out)) = &mut block {
                        out.features = Some(cur);
                    }
                }
                Step::Spike { cfg, label } => {
                    let (s, m) = match cfg.policy {
                        NeuronPolicy::Amp2 => {
                            let shape = tape.shape(cur)?.to_vec();
                            let (rows, c) = (shape[0], shape[1]);
                            let per_channel: Vec<f64> = (0..c).map(|_| rng.uniform(0.0, cfg.c)).collect();
                            let noise = Tensor::new(shape, per_channel.repeat(rows))?;
                            let st = amp2_forward_on_tape(tape, cfg, cur, handoff, &noise, opts.spike_forward)?;
                            if opts.record_membranes {
                                let mp1v = tape.value(st.mp1)?.clone();
                                let sv = tape.value(st.spikes)?.clone();
                                membranes.push(MembraneState {
                                    mp0: tape.value(st.mp0)?.clone(),
                                    mp2: reset_potential(&mp1v, &sv)?,
                                    mp1: mp1v,
                                    spikes: sv,
                                    layer_index: membranes.len(),
                                });
                            }
                            handoff = Some(st.mp1);
                            (st.spikes, st.mp1)
                        }
                        NeuronPolicy::Twu => {
                            let rows = tape.shape(cur)?[0] / t_steps;
                            let xs = (0..t_steps)
                                .map(|t| tape.slice_rows(cur, t * rows, rows))
                                .collect::<Result<Vec<_>>>()?;
                            let seq = twu_sequence_on_tape(tape, cfg, &xs, opts.spike_forward)?;
                            let (s, u) = if t_steps == 1 {
                                (seq[0].spikes, seq[0].u)
                            } else {
                                let s: Vec<Var> = seq.iter().map(|st| st.spikes).collect();
                                let u: Vec<Var> = seq.iter().map(|st| st.u).collect();
                                (tape.concat_rows(&s)?, tape.concat_rows(&u)?)
                            };
                            if opts.record_membranes {
                                let cat = |tape: &Tape, vars: &[Var]| -> Result<Tensor> {
                                    let mut data = Vec::new();
                                    for v in vars {
                                        data.extend_from_slice(tape.value(*v)?.data());
                                    }
                                    let c = tape.shape(vars[0])?[1];
                                    Tensor::new(vec![data.len() / c, c], data)
                                };
                                let h: Vec<Var> = seq.iter().map(|st| st.h).collect();
                                let width = tape.shape(cur)?[1];
                                let mut mp0 = vec![0.0; rows * width];
                                for st in &seq[..seq.len() - 1] {
                                    mp0.extend_from_slice(tape.value(st.h)?.data());
                                }
                                membranes.push(MembraneState {
                                    mp0: Tensor::new(vec![rows * t_steps, width], mp0)?,
                                    mp1: tape.value(u)?.clone(),
                                    mp2: cat(tape, &h)?,
                                    spikes: tape.value(s)?.clone(),
                                    layer_index: membranes.len(),
                                });
                            }
                            (s, u)
                        }
                    };
                    let sv = tape.value(s)?;
                    records.push(SpikeRecord {
                        label: label.clone(),
                        ones: sv.sum_all(),
                        slots: sv.numel(),
                        channels: sv.shape()[1],
                    });
                    cur = s;
                    spikes = Some(s);
                    mp1 = Some(m);
                    if let Some((_, _, out)) = &mut block {
                        out.spikes = Some(s);
                    }
                }
                Step::Begin(kind) => {
                    let skip = Bundle { features, spikes, mp1 };
                    block = Some((*kind, skip, Bundle::default()));
                }
                Step::End => {
                    let (kind, skip, out) = block.take().ok_or(Error::Empty("open shortcut"))?;
                    cur = merge(tape, kind, &skip, &out)?;
                    if matches!(kind.kind, ShortcutType::Membrane | ShortcutType::Rmp) {
                        features = Some(cur);
                    }
                }
                Step::Pool => {
                    let c = tape.shape(cur)?[1];
                    let grouped = tape.reshape(cur, &[t_steps * b, n, c])?;
                    cur = tape.max_over_axis(grouped, 1)?;
                    features = Some(cur);
                }
            }
        }
        let mut logits = logits.ok_or(Error::Empty("network head"))?;
        if t_steps > 1 {
            let k = tape.shape(logits)?[1];
            let per_t = tape.reshape(logits, &[t_steps, b, k])?;
            logits = tape.mean_over_axis(per_t, 0)?;
        }
        Ok(TapeForward {
            logits,
            spikes: records,
            membranes,
            batch_stats,
        })
    }

    /// Full forward pass returning logits and per-layer membrane states.
    pub fn forward(&self, batch: &Tensor, train: bool, rng: &mut RandomSource) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let opts = ForwardOptions {
            train,
            spike_forward: SpikeForward::Heaviside,
            record_membranes: true,
        };
        let out = self.forward_with(&mut tape, &params, batch, opts, rng)?;
        Ok(ForwardTrace {
            logits: tape.value(out.logits)?.clone(),
            layers: out.membranes,
            spikes: out.spikes,
        })
    }

    /// Eval-mode class predictions.
    pub fn predict(&self, batch: &Tensor, rng: &mut RandomSource) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let params: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_with(&mut tape, &params, batch, ForwardOptions::eval(), rng)?;
        let logits = tape.value(out.logits)?;
        Ok(argmax_rows(logits))
    }

    /// Training-mode cross-entropy; stores the gradient on every parameter.
    pub fn loss_and_grad(&mut self, batch: &Tensor, labels: &[usize], rng: &mut RandomSource) -> Result<LossOutput> {
        let mut tape = Tape::new();
        let params = self.bind_params(&mut tape);
        let out = self.forward_with(&mut tape, &params, batch, ForwardOptions::train(), rng)?;
        let loss = tape.softmax_cross_entropy(out.logits, labels)?;
        tape.backward(loss)?;
        for (p, v) in self.params.iter_mut().zip(&params) {
            let g = tape.grad(*v)?.ok_or(Error::NotOnTape(v.index()))?;
            p.set_grad(g.to_vec())?;
        }
        Ok(LossOutput {
            loss: tape.value(loss)?.item()?,
            logits: tape.value(out.logits)?.clone(),
            spikes: out.spikes,
            batch_stats: out.batch_stats,
        })
    }
}

/// Index of the largest entry of each row (first wins on ties).
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let k = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradients;
    use crate::network::spec::{PointNetOptions, PolicySpec, SpikingMlpOptions};

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            input: InputSpec::Flat { features: 3 },
            layers: vec![
                LayerSpec::Linear { inputs: 3, outputs: 8 },
                LayerSpec::Norm,
                LayerSpec::Spike {
                    neuron: NeuronConfig::default(),
                    block: None,
                },
                LayerSpec::Head { classes: 2 },
            ],
            policy: PolicySpec::Amp2,
            depth_blocks: 0,
        }
    }

    fn small_points(policy: PolicySpec) -> PointNetOptions {
        let mut o = PointNetOptions {
            points: 6,
            stem_widths: vec![5],
            feature_width: 7,
            head_hidden: 4,
            classes: 3,
            policy,
            ..Default::default()
        };
        o.blocks.depth_blocks = 2;
        o
    }

    fn batch(rng: &mut RandomSource, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn parameter_count_of_minimal_network() {
        let net = build_network(&tiny_spec(), &mut RandomSource::seeded(0)).unwrap();
        assert_eq!(net.param_count(), 3 * 8 + 8 + 16 + 8 * 2 + 2);
    }

    #[test]
    fn trace_has_one_state_per_spike_layer() {
        for policy in [PolicySpec::Amp2, PolicySpec::Twu { timesteps: 3 }] {
            let spec = small_points(policy).build_spec();
            let net = build_network(&spec, &mut RandomSource::seeded(1)).unwrap();
            let mut rng = RandomSource::seeded(2);
            let x = batch(&mut rng, &[4, 6, 3]);
            let trace = net.forward(&x, true, &mut rng).unwrap();
            assert_eq!(trace.layers.len(), spec.spike_layer_count());
            assert_eq!(trace.logits.shape(), &[4, 3]);
            for (l, s) in trace.layers.iter().zip(&trace.spikes) {
                assert_eq!(l.spikes.sum_all(), s.ones);
                assert!(l.spikes.data().iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }

    #[test]
    fn eval_forward_is_point_permutation_invariant() {
        let spec = small_points(PolicySpec::Amp2).build_spec();
        let net = build_network(&spec, &mut RandomSource::seeded(3)).unwrap();
        let mut rng = RandomSource::seeded(4);
        let x = batch(&mut rng, &[2, 6, 3]);
        let mut perm: Vec<usize> = (0..6).collect();
        rng.shuffle(&mut perm);
        let mut px = x.clone();
        for b in 0..2 {
            for (i, &p) in perm.iter().enumerate() {
                for d in 0..3 {
                    px.data_mut()[(b * 6 + i) * 3 + d] = x.data()[(b * 6 + p) * 3 + d];
                }
            }
        }
        let a = net.forward(&x, false, &mut RandomSource::seeded(9)).unwrap();
        let b = net.forward(&px, false, &mut RandomSource::seeded(9)).unwrap();
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn loss_and_grad_fills_every_gradient() {
        let spec = small_points(PolicySpec::Twu { timesteps: 2 }).build_spec();
        let mut net = build_network(&spec, &mut RandomSource::seeded(5)).unwrap();
        let mut rng = RandomSource::seeded(6);
        let x = batch(&mut rng, &[3, 6, 3]);
        let out = net.loss_and_grad(&x, &[0, 1, 2], &mut rng).unwrap();
        assert!(out.loss.is_finite() && out.loss > 0.0);
        assert!(net.params().iter().all(|p| p.grad().is_some()));
        assert_eq!(out.batch_stats.len(), net.running_stats().len());
    }

    #[test]
    fn surrogate_forward_gradients_match_differences() {
        let mut opts = SpikingMlpOptions {
            features: 4,
            classes: 3,
            ..Default::default()
        };
        opts.blocks.width = 5;
        opts.blocks.depth_blocks = 2;
        let net = build_network(&opts.build_spec(), &mut RandomSource::seeded(7)).unwrap();
        let mut rng = RandomSource::seeded(8);
        let x = batch(&mut rng, &[6, 4]);
        let labels = [0, 1, 2, 0, 1, 2];
        let fixed = RandomSource::seeded(11);
        let which = 2; // first NORM gamma
        let err = check_gradients(
            |tape, p| {
                let mut params = net.bind_params(tape);
                params[which] = p;
                let fwd = ForwardOptions {
                    train: true,
                    spike_forward: SpikeForward::Surrogate,
                    record_membranes: false,
                };
                let out = net.forward_with(tape, &params, &x, fwd, &mut fixed.clone())?;
                tape.softmax_cross_entropy(out.logits, &labels)
            },
            &net.params()[which],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = build_network(&tiny_spec(), &mut RandomSource::seeded(0)).unwrap();
        let bad = Tensor::zeros(&[2, 4]);
        assert!(matches!(
            net.forward(&bad, false, &mut RandomSource::seeded(0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        let t = Tensor::matrix(&[&[1.0, 3.0, 3.0], &[2.0, 0.0, -1.0]]);
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }
}
