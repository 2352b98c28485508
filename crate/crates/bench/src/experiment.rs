//! Seeded training runs.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use amp2_core::data::{generate_point_dataset, stack_points, PointCloudSample, PointDataset};
use amp2_core::energy::{block_average_rates, estimate_energy, measure_firing_rates, EnergyReport};
use amp2_core::network::{argmax_rows, build_network, ForwardOptions, Network};
use amp2_core::optim::{Adam, AdamConfig, Optimizer, Sgd};
use amp2_core::{RandomSource, Tape, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, Schedule};
use crate::error::Result;

const BN_MOMENTUM: f64 = 0.1;
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub split: Split,
    /// Percent correct.
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRate {
    pub layer: usize,
    pub block: Option<String>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub config_hash: String,
    pub seed: u64,
    pub param_count: usize,
    /// Test row for epoch 0 (untrained), then train and test rows per epoch.
    pub metrics: Vec<EpochMetric>,
    pub final_test_accuracy: f64,
    pub energy: EnergyReport,
    pub firing_rates: Vec<LayerRate>,
    pub block_rates: BTreeMap<String, f64>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    /// Equality of everything except timing.
    pub fn same_results(&self, other: &RunRecord) -> bool {
        let strip = |r: &RunRecord| RunRecord {
            wall_clock_seconds: 0.0,
            ..r.clone()
        };
        strip(self) == strip(other)
    }

    pub fn test_curve(&self) -> Vec<(usize, f64)> {
        self.metrics
            .iter()
            .filter(|m| m.split == Split::Test)
            .map(|m| (m.epoch, m.accuracy))
            .collect()
    }

    /// `epoch,split,accuracy,loss` rows.
    pub fn write_metrics_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "split", "accuracy", "loss"])?;
        for m in &self.metrics {
            out.write_record([
                m.epoch.to_string(),
                m.split.name().to_string(),
                m.accuracy.to_string(),
                m.loss.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Every seed of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub records: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn mean_test_accuracy(&self) -> f64 {
        mean(self.records.iter().map(|r| r.final_test_accuracy))
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn lr_at(cfg: &ExperimentConfig, epoch: usize) -> f64 {
    let o = &cfg.optimizer;
    match o.schedule {
        Schedule::Constant => o.lr,
        Schedule::Cosine => 0.5 * o.lr * (1.0 + (PI * epoch as f64 / o.epochs.max(1) as f64).cos()),
    }
}

enum Opt {
    Adam(Adam),
    Sgd(Sgd),
}

impl Opt {
    fn new(cfg: &ExperimentConfig) -> Self {
        let o = &cfg.optimizer;
        match o.method {
            Method::Adam => Opt::Adam(Adam::new(AdamConfig {
                lr: o.lr,
                weight_decay: o.weight_decay,
                ..Default::default()
            })),
            Method::Sgd => Opt::Sgd(Sgd::new(o.lr, o.momentum)),
        }
    }

    fn set_lr(&mut self, lr: f64) {
        match self {
            Opt::Adam(a) => a.set_lr(lr),
            Opt::Sgd(s) => s.lr = lr,
        }
    }

    fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        match self {
            Opt::Adam(a) => a.step(params)?,
            Opt::Sgd(s) => s.step(params)?,
        }
        Ok(())
    }
}

fn batch_of<'a>(samples: &'a [PointCloudSample], idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let refs: Vec<&'a PointCloudSample> = idx.iter().map(|&i| &samples[i]).collect();
    Ok(stack_points(&refs)?)
}

/// Eval-mode loss and accuracy (percent) over `samples`.
fn evaluate(net: &Network, samples: &[PointCloudSample], rng: &mut RandomSource) -> Result<(f64, f64)> {
    let (mut loss, mut correct) = (0.0, 0usize);
    let idx: Vec<usize> = (0..samples.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = batch_of(samples, chunk)?;
        let mut tape = Tape::new();
        let params: Vec<_> = net.params().iter().map(|p| tape.constant(p.clone())).collect();
        let out = net.forward_with(&mut tape, &params, &x, ForwardOptions::eval(), rng)?;
        let ce = tape.softmax_cross_entropy(out.logits, &y)?;
        loss += tape.value(ce)?.item()? * chunk.len() as f64;
        let pred = argmax_rows(tape.value(out.logits)?);
        correct += pred.iter().zip(&y).filter(|(p, t)| p == t).count();
    }
    let n = samples.len() as f64;
    Ok((100.0 * correct as f64 / n, loss / n))
}

/// Energy of one sample: `C` sums every spiking neuron of every layer.
fn run_energy(net: &Network, data: &PointDataset, rng: &mut RandomSource) -> Result<(EnergyReport, Vec<LayerRate>, BTreeMap<String, f64>)> {
    let take: Vec<usize> = (0..data.test.len().min(EVAL_BATCH)).collect();
    let (x, _) = batch_of(&data.test, &take)?;
    let trace = net.forward(&x, false, rng)?;
    let rates = measure_firing_rates(&trace)?;
    let t = net.spec().policy.timesteps();
    let neurons: usize = trace.spikes.iter().map(|s| s.slots / (t * take.len())).sum();
    let labels: Vec<Option<String>> = trace.spikes.iter().map(|s| s.label.clone()).collect();
    let mut report = estimate_energy(t, 1, neurons, 1)?;
    report.per_layer_firing_rate = rates.clone();
    let blocks = block_average_rates(&rates, &labels)?;
    let per_layer = rates
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(layer, (rate, block))| LayerRate { layer, block, rate })
        .collect();
    Ok((report, per_layer, blocks))
}

/// Trains one seed on a pre-generated dataset.
pub fn run_seed_on(cfg: &ExperimentConfig, data: &PointDataset, seed: u64) -> Result<RunRecord> {
    let started = Instant::now();
    let spec = cfg.resolve_spec()?;
    let mut net = build_network(&spec, &mut RandomSource::derived(seed, 0))?;
    let mut order_rng = RandomSource::derived(seed, 1);
    let mut noise_rng = RandomSource::derived(seed, 2);
    let mut opt = Opt::new(cfg);
    let mut metrics = Vec::with_capacity(1 + 2 * cfg.optimizer.epochs);

    let (acc, loss) = evaluate(&net, &data.test, &mut RandomSource::derived(seed, 3))?;
    metrics.push(EpochMetric {
        epoch: 0,
        split: Split::Test,
        accuracy: acc,
        loss,
    });
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=cfg.optimizer.epochs {
        opt.set_lr(lr_at(cfg, epoch - 1));
        order_rng.shuffle(&mut order);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.optimizer.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let (x, y) = batch_of(&data.train, chunk)?;
            let out = net.loss_and_grad(&x, &y, &mut noise_rng)?;
            net.update_running_stats(&out.batch_stats, BN_MOMENTUM)?;
            opt.step(net.params_mut())?;
            loss_sum += out.loss * chunk.len() as f64;
            correct += argmax_rows(&out.logits).iter().zip(&y).filter(|(p, t)| p == t).count();
            seen += chunk.len();
        }
        metrics.push(EpochMetric {
            epoch,
            split: Split::Train,
            accuracy: 100.0 * correct as f64 / seen.max(1) as f64,
            loss: loss_sum / seen.max(1) as f64,
        });
        let (acc, loss) = evaluate(&net, &data.test, &mut RandomSource::derived(seed, 3))?;
        metrics.push(EpochMetric {
            epoch,
            split: Split::Test,
            accuracy: acc,
            loss,
        });
    }
    let (energy, firing_rates, block_rates) = run_energy(&net, data, &mut RandomSource::derived(seed, 4))?;
    let final_test_accuracy = metrics.last().expect("epoch 0 row").accuracy;
    Ok(RunRecord {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        seed,
        param_count: net.param_count(),
        metrics,
        final_test_accuracy,
        energy,
        firing_rates,
        block_rates,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Trains every configured seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let data = generate_point_dataset(&cfg.dataset)?;
    let records = cfg
        .seeds
        .iter()
        .map(|&s| run_seed_on(cfg, &data, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        config_hash: cfg.hash(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkTemplate;
    use amp2_core::network::PointNetOptions;

    pub(crate) fn tiny() -> ExperimentConfig {
        let mut net = PointNetOptions {
            stem_widths: vec![8],
            feature_width: 16,
            head_hidden: 0,
            ..Default::default()
        };
        net.blocks.depth_blocks = 1;
        let mut cfg = ExperimentConfig {
            network: NetworkTemplate::PointNet(net),
            ..Default::default()
        };
        cfg.dataset.classes = 3;
        cfg.dataset.per_class = 10;
        cfg.dataset.n_points = 16;
        cfg.optimizer.epochs = 2;
        cfg.optimizer.batch_size = 8;
        cfg.optimizer.lr = 1e-2;
        cfg
    }

    #[test]
    fn records_have_expected_shape() {
        let res = run_experiment(&tiny()).unwrap();
        let r = &res.records[0];
        assert_eq!(r.metrics.len(), 1 + 2 * 2);
        assert!(r.metrics.iter().all(|m| (0.0..=100.0).contains(&m.accuracy)));
        assert_eq!(r.firing_rates.len(), r.energy.per_layer_firing_rate.len());
        assert!(r.block_rates.contains_key("block1"));
        let mut csv = Vec::new();
        r.write_metrics_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("epoch,split,accuracy,loss\n0,test,"));
    }

    #[test]
    fn repeat_runs_are_identical() {
        let a = run_experiment(&tiny()).unwrap();
        let b = run_experiment(&tiny()).unwrap();
        assert!(a.records[0].same_results(&b.records[0]));
    }

    #[test]
    fn cosine_schedule_decays_to_zero() {
        let mut cfg = tiny();
        cfg.optimizer.epochs = 4;
        assert_eq!(lr_at(&cfg, 0), cfg.optimizer.lr);
        assert!((lr_at(&cfg, 2) - cfg.optimizer.lr / 2.0).abs() < 1e-15);
        cfg.optimizer.schedule = Schedule::Constant;
        assert_eq!(lr_at(&cfg, 3), cfg.optimizer.lr);
    }
}
