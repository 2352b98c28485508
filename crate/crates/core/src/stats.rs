//! Closed-form and Monte Carlo statistics of the normalized membrane input
//! `x_i = MP¹_i / V_th` under the three initialization strategies.
//!
//! The simulation ignores spiking and reset: only the linear accumulation
//! of membrane potential across layers is modelled, with `X ~ N(0, 1)` and
//! `R ~ U(0, c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{amp2_forward_with_noise, NeuronConfig, NeuronPolicy};
use crate::rng::RandomSource;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InitStrategy {
    /// `MP⁰ = 0`: the membrane equals the input.
    Zero,
    /// `MP⁰ = R` drawn afresh for every layer.
    Random,
    /// `MP⁰ = α·MP¹_prev + (1−α)·R`.
    Amp2Fusion,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 3] = [InitStrategy::Zero, InitStrategy::Random, InitStrategy::Amp2Fusion];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Zero => "ZERO",
            InitStrategy::Random => "RANDOM",
            InitStrategy::Amp2Fusion => "AMP2_FUSION",
        }
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ZERO" => Ok(InitStrategy::Zero),
            "RANDOM" => Ok(InitStrategy::Random),
            "AMP2_FUSION" | "AMP2" => Ok(InitStrategy::Amp2Fusion),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub var_x: f64,
}

/// Variance of the per-layer driving term `β(1−α)R + X` (AMP2) or `βR + X`.
fn drive_var(beta: f64, c: f64, scale: f64) -> f64 {
    (beta * scale * c).powi(2) / 12.0 + 1.0
}

/// Moments of `x_i` after `depth` handoffs, with `MP¹_0 = βR_0 + X_0`.
pub fn closed_form_at_depth(strategy: InitStrategy, cfg: &NeuronConfig, depth: usize) -> Moments {
    let NeuronConfig { beta, alpha, c, v_th, .. } = *cfg;
    let v2 = v_th * v_th;
    match strategy {
        InitStrategy::Zero => Moments {
            mean_x: 0.0,
            var_x: 1.0 / v2,
        },
        InitStrategy::Random => Moments {
            mean_x: beta * c / (2.0 * v_th),
            var_x: drive_var(beta, c, 1.0) / v2,
        },
        InitStrategy::Amp2Fusion => {
            let q = beta * alpha;
            let qi = q.powi(depth as i32);
            let geo = |r: f64| if r == 1.0 { depth as f64 } else { (1.0 - r.powi(depth as i32)) / (1.0 - r) };
            let mean = beta * (1.0 - alpha) * c / 2.0 * geo(q) + qi * beta * c / 2.0;
            let var = drive_var(beta, c, 1.0 - alpha) * geo(q * q) + qi * qi * drive_var(beta, c, 1.0);
            Moments {
                mean_x: mean / v_th,
                var_x: var / v2,
            }
        }
    }
}

/// Limits of [`closed_form_at_depth`] as the depth grows without bound.
///
/// For AMP2 the variance is the geometric-series sum
/// `[β²(1−α)²c²/12 + 1] / (1 − β²α²) / V_th²`.
pub fn closed_form_limits(strategy: InitStrategy, cfg: &NeuronConfig) -> Moments {
    match strategy {
        InitStrategy::Amp2Fusion => {
            let NeuronConfig { beta, alpha, c, v_th, .. } = *cfg;
            let q = beta * alpha;
            Moments {
                mean_x: beta * c * (1.0 - alpha) / (2.0 * v_th * (1.0 - q)),
                var_x: drive_var(beta, c, 1.0 - alpha) / (1.0 - q * q) / (v_th * v_th),
            }
        }
        other => closed_form_at_depth(other, cfg, 0),
    }
}

/// Streaming central moments up to order four, mergeable across chunks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    pub n: f64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    /// Count-weighted combination of two disjoint samples.
    pub fn merge(&self, o: &RunningMoments) -> RunningMoments {
        if self.n == 0.0 {
            return *o;
        }
        if o.n == 0.0 {
            return *self;
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let d = o.mean - self.mean;
        let (d2, d3, d4) = (d * d, d * d * d, d * d * d * d);
        let m2 = self.m2 + o.m2 + d2 * na * nb / n;
        let m3 = self.m3 + o.m3 + d3 * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + o.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * o.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * d * (na * o.m3 - nb * self.m3) / n;
        RunningMoments {
            n,
            mean: self.mean + d * nb / n,
            m2,
            m3,
            m4,
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        self.m2 / (self.n - 1.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }

    /// Large-sample standard error of [`RunningMoments::variance`].
    pub fn variance_stderr(&self) -> f64 {
        let s2 = self.m2 / self.n;
        let kurt = self.m4 / self.n;
        ((kurt - s2 * s2 * (self.n - 3.0) / (self.n - 1.0)) / self.n).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub strategy: InitStrategy,
    pub depth: usize,
    pub samples: usize,
    pub mean_hat: f64,
    pub var_hat: f64,
    /// Standard error of `mean_hat`.
    pub stderr: f64,
    /// Standard error of `var_hat`.
    pub var_stderr: f64,
}

pub const MIN_SAMPLES: usize = 10_000;
const CHUNK: usize = 8192;

fn chain(strategy: InitStrategy, cfg: &NeuronConfig, depth: usize, rng: &mut RandomSource) -> f64 {
    let NeuronConfig { beta, alpha, c, .. } = *cfg;
    let mp1 = match strategy {
        InitStrategy::Zero => rng.normal(),
        InitStrategy::Random => beta * rng.uniform(0.0, c) + rng.normal(),
        InitStrategy::Amp2Fusion => {
            let mut mp1 = beta * rng.uniform(0.0, c) + rng.normal();
            for _ in 0..depth {
                let mp0 = alpha * mp1 + (1.0 - alpha) * rng.uniform(0.0, c);
                mp1 = beta * mp0 + rng.normal();
            }
            mp1
        }
    };
    mp1 / cfg.v_th
}

/// Simulates `samples` independent chains of `depth` layers.
///
/// Chains are split into fixed-size chunks with derived seeds, so the
/// result depends only on the state of `rng` and the arguments.
pub fn monte_carlo_x(
    strategy: InitStrategy,
    cfg: &NeuronConfig,
    depth: usize,
    samples: usize,
    rng: &mut RandomSource,
) -> Result<MonteCarloEstimate> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {samples}")));
    }
    cfg.validate()?;
    let base = rng.next_u64();
    let mut total = RunningMoments::default();
    for (chunk, start) in (0..samples).step_by(CHUNK).enumerate() {
        let mut local = RunningMoments::default();
        let mut r = RandomSource::derived(base, chunk as u64);
        for _ in start..(start + CHUNK).min(samples) {
            local.push(chain(strategy, cfg, depth, &mut r));
        }
        total = total.merge(&local);
    }
    Ok(MonteCarloEstimate {
        strategy,
        depth,
        samples,
        mean_hat: total.mean,
        var_hat: total.variance(),
        stderr: total.stderr(),
        var_stderr: total.variance_stderr(),
    })
}

fn check_lengths(mp_randoms: &[f64], xs: &[f64]) -> Result<()> {
    if mp_randoms.len() != xs.len() {
        return Err(Error::shape("recursion inputs", &[mp_randoms.len()], &[xs.len()]));
    }
    if xs.is_empty() {
        return Err(Error::Empty("recursion inputs"));
    }
    Ok(())
}

/// Closed-form unrolled AMP2 accumulation.
///
/// `mp_randoms[j]` and `xs[j]` feed layer `j + 1`; the result is `MP¹_i` for
/// `i = xs.len()`:
/// `Σ_{k<i} (βα)^k [β(1−α) R_{i−k} + X_{i−k}] + (βα)^i MP¹_0`.
pub fn unrolled_recursion_oracle(cfg: &NeuronConfig, mp_randoms: &[f64], xs: &[f64], mp1_0: f64) -> Result<f64> {
    check_lengths(mp_randoms, xs)?;
    let NeuronConfig { beta, alpha, .. } = *cfg;
    let q = beta * alpha;
    let i = xs.len();
    let sum: f64 = (0..i)
        .map(|k| q.powi(k as i32) * (beta * (1.0 - alpha) * mp_randoms[i - k - 1] + xs[i - k - 1]))
        .sum();
    Ok(sum + q.powi(i as i32) * mp1_0)
}

/// The same accumulation computed layer by layer with the AMP2 neuron.
pub fn iterate_recursion(cfg: &NeuronConfig, mp_randoms: &[f64], xs: &[f64], mp1_0: f64) -> Result<f64> {
    check_lengths(mp_randoms, xs)?;
    let cfg = NeuronConfig {
        policy: NeuronPolicy::Amp2,
        ..*cfg
    };
    let mut mp1 = Tensor::vector(vec![mp1_0]);
    for (&r, &x) in mp_randoms.iter().zip(xs) {
        let (_, state) = amp2_forward_with_noise(&cfg, &Tensor::vector(vec![x]), Some(&mp1), &Tensor::vector(vec![r]))?;
        mp1 = state.mp1;
    }
    Ok(mp1.data()[0])
}

/// One CSV row of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub strategy: InitStrategy,
    pub depth: usize,
    pub samples: usize,
    pub mean_hat: f64,
    pub var_hat: f64,
    pub stderr: f64,
    pub closed_form_mean: f64,
    pub closed_form_var: f64,
}

impl StatsRow {
    pub fn new(est: &MonteCarloEstimate, cfg: &NeuronConfig) -> Self {
        let cf = closed_form_at_depth(est.strategy, cfg, est.depth);
        Self {
            strategy: est.strategy,
            depth: est.depth,
            samples: est.samples,
            mean_hat: est.mean_hat,
            var_hat: est.var_hat,
            stderr: est.stderr,
            closed_form_mean: cf.mean_x,
            closed_form_var: cf.var_x,
        }
    }
}
