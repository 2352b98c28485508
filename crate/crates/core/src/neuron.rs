//! Leaky integrate-and-fire dynamics.
//!
//! Two update policies are provided:
//!
//! * **TWU** (timestep-wise update): `U(t) = H(t−1) + X(t)`,
//!   `S(t) = Hea(U(t) − V_th)`, `H(t) = β·U(t)·(1 − S(t)) + V_th·S(t)`,
//!   iterated over `T` timesteps with `H(0) = 0`.
//! * **AMP2** (activation-wise membrane potential propagation): a single
//!   pass per layer where the initial potential is blended from the previous
//!   spiking layer's accumulated potential and a uniform perturbation:
//!   `MP⁰ = α·MP¹_prev + (1 − α)·R`, `R ~ U(0, c)`, `MP¹ = β·MP⁰ + X`,
//!   `S = Hea(MP¹/V_th − c)` and `MP² = MP¹·(1 − S)`. `MP¹` is what the next
//!   spiking layer receives.
//!
//! Every spike emission backpropagates through the tanh surrogate
//! `g(x) = (tanh(k(x − c)) + tanh(kc)) / (2·tanh(kc))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum NeuronPolicy {
    Twu,
    Amp2,
}

/// Firing rule used by AMP2 neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ThresholdMode {
    /// `S = Hea(MP¹/V_th − c)`.
    MinusC,
    /// `S = Hea(MP¹/V_th)`.
    Plain,
}

/// What an AMP2 layer does when the incoming `MP¹` has a different shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HandoffMismatch {
    /// Treat the handoff as absent: `MP⁰ = R`.
    RandomInit,
    /// Use the scalar mean of the incoming `MP¹` in every position.
    BroadcastMean,
    /// Reject with a shape error.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuronConfig {
    /// Surrogate sharpness.
    pub k: f64,
    /// Implicit threshold of the surrogate and upper bound of `R`.
    pub c: f64,
    /// Decay factor.
    pub beta: f64,
    /// History coefficient of the AMP2 handoff.
    pub alpha: f64,
    pub v_th: f64,
    pub policy: NeuronPolicy,
    pub spike_threshold_mode: ThresholdMode,
    pub handoff_mismatch: HandoffMismatch,
}

impl Default for NeuronConfig {
    fn default() -> Self {
        Self {
            k: 5.0,
            c: 0.5,
            beta: 0.25,
            alpha: 0.8,
            v_th: 1.0,
            policy: NeuronPolicy::Amp2,
            spike_threshold_mode: ThresholdMode::MinusC,
            handoff_mismatch: HandoffMismatch::RandomInit,
        }
    }
}

impl NeuronConfig {
    pub fn twu() -> Self {
        Self {
            policy: NeuronPolicy::Twu,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("neuron config: {what}")));
        if !(self.k > 0.0 && self.k.is_finite()) {
            return bad("k must be positive");
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return bad("c must lie in (0, 1]");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if !(self.v_th > 0.0 && self.v_th.is_finite()) {
            return bad("v_th must be positive");
        }
        Ok(())
    }

    /// `g(x)`.
    pub fn g(&self, x: f64) -> f64 {
        self.surrogate().g(x)
    }

    /// `g′(x) = k·sech²(k(x − c)) / (2·tanh(kc))`.
    pub fn g_prime(&self, x: f64) -> f64 {
        self.surrogate().g_prime(x)
    }

    /// The surrogate with its normalizer precomputed, for per-element loops.
    pub fn surrogate(&self) -> Surrogate {
        Surrogate {
            k: self.k,
            c: self.c,
            tanh_kc: (self.k * self.c).tanh(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Surrogate {
    k: f64,
    c: f64,
    tanh_kc: f64,
}

impl Surrogate {
    pub fn g(&self, x: f64) -> f64 {
        ((self.k * (x - self.c)).tanh() + self.tanh_kc) / (2.0 * self.tanh_kc)
    }

    pub fn g_prime(&self, x: f64) -> f64 {
        // sech²(z) = 4e/(1 + e)² with e = exp(−2|z|), which never overflows
        let e = (-2.0 * (self.k * (x - self.c)).abs()).exp();
        let sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        self.k * sech2 / (2.0 * self.tanh_kc)
    }
}

/// Forward rule for spike emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpikeForward {
    /// Binary Heaviside output with surrogate backward.
    #[default]
    Heaviside,
    /// Smooth `g` in place of the Heaviside, so finite differences see the
    /// same function the surrogate differentiates.
    Surrogate,
}

pub fn surrogate_g(cfg: &NeuronConfig, x: &Tensor) -> Tensor {
    let sg = cfg.surrogate();
    x.map(|v| sg.g(v))
}

pub fn surrogate_g_prime(cfg: &NeuronConfig, x: &Tensor) -> Tensor {
    let sg = cfg.surrogate();
    x.map(|v| sg.g_prime(v))
}

/// Local factor `g′(MP¹/V_th)·β/V_th` linking `∂L/∂S` to `∂L/∂MP⁰`.
pub fn amp2_backward_factor(cfg: &NeuronConfig, mp1: &Tensor) -> Tensor {
    let sg = cfg.surrogate();
    mp1.map(|m| sg.g_prime(m / cfg.v_th) * cfg.beta / cfg.v_th)
}

fn require_policy(cfg: &NeuronConfig, policy: NeuronPolicy) -> Result<()> {
    cfg.validate()?;
    if cfg.policy != policy {
        return Err(Error::InvalidArgument(format!(
            "expected a {policy:?} neuron config, got {:?}",
            cfg.policy
        )));
    }
    Ok(())
}

/// Membrane record of one AMP2 (or TWU, flattened over time) spiking layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState {
    pub mp0: Tensor,
    pub mp1: Tensor,
    pub mp2: Tensor,
    pub spikes: Tensor,
    pub layer_index: usize,
}

/// `mp1 ⊙ (1 − spikes)`.
pub fn reset_potential(mp1: &Tensor, spikes: &Tensor) -> Result<Tensor> {
    mp1.zip_map(spikes, "reset", |m, s| m * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwuState {
    pub u: Tensor,
    pub h: Tensor,
    /// Number of timesteps applied to reach this state.
    pub t: usize,
}

/// Tape handles of one TWU timestep.
#[derive(Debug, Clone, Copy)]
pub struct TwuStep {
    pub u: Var,
    pub spikes: Var,
    pub h: Var,
}

/// Records one TWU timestep. `h_prev = None` means `H = 0`.
pub fn twu_step_on_tape(
    tape: &mut Tape,
    cfg: &NeuronConfig,
    h_prev: Option<Var>,
    x: Var,
    forward: SpikeForward,
) -> Result<TwuStep> {
    let u = match h_prev {
        Some(h) => tape.add(h, x)?,
        None => x,
    };
    let cfg = *cfg;
    let v_th = cfg.v_th;
    // g′ is centred on c; shift so its peak sits on the firing threshold
    let centred = move |u: f64| u / v_th - 1.0 + cfg.c;
    let sg = cfg.surrogate();
    let spikes = match forward {
        SpikeForward::Heaviside => {
            tape.heaviside_shifted(u, v_th, move |u| sg.g_prime(centred(u)) / v_th)?
        }
        SpikeForward::Surrogate => tape.map(
            u,
            move |u| sg.g(centred(u)),
            move |u| sg.g_prime(centred(u)) / v_th,
        )?,
    };
    let leak = tape.scale(u, cfg.beta)?;
    let neg = tape.scale(spikes, -1.0)?;
    let silent = tape.add_scalar(neg, 1.0)?;
    let kept = tape.mul(leak, silent)?;
    let reset = tape.scale(spikes, v_th)?;
    let h = tape.add(kept, reset)?;
    Ok(TwuStep { u, spikes, h })
}

/// Records `xs.len()` TWU timesteps starting from `H = 0`.
pub fn twu_sequence_on_tape(
    tape: &mut Tape,
    cfg: &NeuronConfig,
    xs: &[Var],
    forward: SpikeForward,
) -> Result<Vec<TwuStep>> {
    let first = *xs.first().ok_or(Error::Empty("TWU input sequence"))?;
    let shape = tape.shape(first)?.to_vec();
    let mut steps: Vec<TwuStep> = Vec::with_capacity(xs.len());
    for &x in xs {
        if tape.shape(x)? != shape.as_slice() {
            return Err(Error::shape("twu_sequence", &shape, tape.shape(x)?));
        }
        let h_prev = steps.last().map(|s| s.h);
        steps.push(twu_step_on_tape(tape, cfg, h_prev, x, forward)?);
    }
    Ok(steps)
}

pub fn twu_step(cfg: &NeuronConfig, h_prev: &Tensor, x: &Tensor) -> Result<(Tensor, TwuState)> {
    require_policy(cfg, NeuronPolicy::Twu)?;
    if h_prev.shape() != x.shape() {
        return Err(Error::shape("twu_step", h_prev.shape(), x.shape()));
    }
    let mut tape = Tape::new();
    let h = tape.constant(h_prev.clone());
    let xv = tape.constant(x.clone());
    let step = twu_step_on_tape(&mut tape, cfg, Some(h), xv, SpikeForward::Heaviside)?;
    let state = TwuState {
        u: tape.value(step.u)?.clone(),
        h: tape.value(step.h)?.clone(),
        t: 1,
    };
    Ok((tape.value(step.spikes)?.clone(), state))
}

pub fn run_twu_sequence(cfg: &NeuronConfig, xs: &[Tensor]) -> Result<(Vec<Tensor>, TwuState)> {
    require_policy(cfg, NeuronPolicy::Twu)?;
    if xs.is_empty() {
        return Err(Error::Empty("TWU input sequence"));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
    let steps = twu_sequence_on_tape(&mut tape, cfg, &vars, SpikeForward::Heaviside)?;
    let train = steps
        .iter()
        .map(|s| tape.value(s.spikes).cloned())
        .collect::<Result<Vec<_>>>()?;
    let last = steps.last().expect("non-empty");
    let state = TwuState {
        u: tape.value(last.u)?.clone(),
        h: tape.value(last.h)?.clone(),
        t: steps.len(),
    };
    Ok((train, state))
}

/// Tape handles of one AMP2 layer.
#[derive(Debug, Clone, Copy)]
pub struct Amp2Step {
    pub mp0: Var,
    pub mp1: Var,
    pub spikes: Var,
}

/// Records one AMP2 layer with the perturbation `noise` (same shape as `x`).
pub fn amp2_forward_on_tape(
    tape: &mut Tape,
    cfg: &NeuronConfig,
    x: Var,
    mp1_prev: Option<Var>,
    noise: &Tensor,
    forward: SpikeForward,
) -> Result<Amp2Step> {
    let shape = tape.shape(x)?.to_vec();
    if noise.shape() != shape.as_slice() {
        return Err(Error::shape("amp2 noise", &shape, noise.shape()));
    }
    let prev = match mp1_prev {
        Some(p) if tape.shape(p)? == shape.as_slice() => Some(p),
        Some(p) => match cfg.handoff_mismatch {
            HandoffMismatch::RandomInit => None,
            HandoffMismatch::BroadcastMean => {
                let n = tape.value(p)?.numel() as f64;
                let total = tape.sum(p)?;
                let mean = tape.scale(total, 1.0 / n)?;
                Some(tape.broadcast_scalar(mean, &shape)?)
            }
            HandoffMismatch::Strict => {
                return Err(Error::shape("amp2 handoff", tape.shape(p)?, &shape));
            }
        },
        None => None,
    };
    let mp0 = match prev {
        Some(p) => {
            let memory = tape.scale(p, cfg.alpha)?;
            let perturb = tape.constant(noise.map(|r| (1.0 - cfg.alpha) * r));
            tape.add(memory, perturb)?
        }
        None => tape.constant(noise.clone()),
    };
    let leaked = tape.scale(mp0, cfg.beta)?;
    let mp1 = tape.add(leaked, x)?;

    let cfg = *cfg;
    let v_th = cfg.v_th;
    let offset = match cfg.spike_threshold_mode {
        ThresholdMode::MinusC => cfg.c,
        ThresholdMode::Plain => 0.0,
    };
    let sg = cfg.surrogate();
    let deriv = move |m: f64| sg.g_prime(m / v_th) / v_th;
    let spikes = match forward {
        SpikeForward::Heaviside => tape.map(
            mp1,
            move |m| if m / v_th - offset >= 0.0 { 1.0 } else { 0.0 },
            deriv,
        )?,
        SpikeForward::Surrogate => tape.map(mp1, move |m| sg.g(m / v_th), deriv)?,
    };
    Ok(Amp2Step { mp0, mp1, spikes })
}

/// One AMP2 layer with an explicit perturbation tensor.
pub fn amp2_forward_with_noise(
    cfg: &NeuronConfig,
    x: &Tensor,
    mp1_prev: Option<&Tensor>,
    noise: &Tensor,
) -> Result<(Tensor, MembraneState)> {
    require_policy(cfg, NeuronPolicy::Amp2)?;
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let prev = mp1_prev.map(|p| tape.constant(p.clone()));
    let step = amp2_forward_on_tape(&mut tape, cfg, xv, prev, noise, SpikeForward::Heaviside)?;
    let spikes = tape.value(step.spikes)?.clone();
    let mp1 = tape.value(step.mp1)?.clone();
    let state = MembraneState {
        mp0: tape.value(step.mp0)?.clone(),
        mp2: reset_potential(&mp1, &spikes)?,
        mp1,
        spikes: spikes.clone(),
        layer_index: 0,
    };
    Ok((spikes, state))
}

/// One AMP2 layer with `R ~ U(0, c)` drawn elementwise from `rng`.
pub fn amp2_forward(
    cfg: &NeuronConfig,
    x: &Tensor,
    mp1_prev: Option<&Tensor>,
    rng: &mut RandomSource,
) -> Result<(Tensor, MembraneState)> {
    let draws = (0..x.numel()).map(|_| rng.uniform(0.0, cfg.c)).collect();
    let noise = Tensor::new(x.shape().to_vec(), draws)?;
    amp2_forward_with_noise(cfg, x, mp1_prev, &noise)
}
