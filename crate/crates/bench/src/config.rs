//! JSON experiment configuration.

use amp2_core::data::PointDatasetConfig;
use amp2_core::network::{NetworkSpec, PointNetOptions};
use amp2_core::optim::AdamConfig;
use amp2_core::NeuronConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

/// Where the layer stack comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum NetworkTemplate {
    /// Point-cloud classifier; input extents and classes follow the dataset.
    PointNet(PointNetOptions),
    /// A fully written-out layer stack.
    Explicit(NetworkSpec),
}

impl Default for NetworkTemplate {
    fn default() -> Self {
        NetworkTemplate::PointNet(PointNetOptions::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// Half-cosine decay from `lr` to zero over the run.
    #[default]
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    /// SGD momentum; ignored by Adam.
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Adam,
            lr: AdamConfig::default().lr,
            epochs: 100,
            batch_size: 32,
            schedule: Schedule::Cosine,
            momentum: 0.9,
            weight_decay: 0.0,
        }
    }
}

/// Switches for the two AMP2 components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Activation-wise handoff; off forces `α = 0`.
    pub awp: bool,
    /// Residual membrane shortcuts; off removes every shortcut marker.
    pub rmp: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { awp: true, rmp: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub network: NetworkTemplate,
    /// Overrides the neuron of every SPIKE layer when set.
    pub neuron: Option<NeuronConfig>,
    pub dataset: PointDatasetConfig,
    pub optimizer: OptimizerConfig,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "amp2".into(),
            network: NetworkTemplate::default(),
            neuron: None,
            dataset: PointDatasetConfig::default(),
            optimizer: OptimizerConfig::default(),
            seeds: vec![42],
            ablation: Ablation::default(),
        }
    }
}

fn invalid(path: &str, reason: impl Into<String>) -> BenchError {
    BenchError::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Builds the final layer stack with dataset extents, neuron override
    /// and ablation switches applied.
    pub fn resolve_spec(&self) -> Result<NetworkSpec> {
        let mut spec = match &self.network {
            NetworkTemplate::PointNet(o) => PointNetOptions {
                points: self.dataset.n_points,
                classes: self.dataset.classes,
                ..o.clone()
            }
            .build_spec(),
            NetworkTemplate::Explicit(spec) => spec.clone(),
        };
        if let Some(neuron) = &self.neuron {
            neuron.validate().map_err(|e| invalid("neuron", e.to_string()))?;
            spec.set_neuron(neuron);
        }
        if !self.ablation.awp {
            spec.disable_handoff();
        }
        if !self.ablation.rmp {
            spec.strip_shortcuts();
        }
        spec.validate().map_err(|e| invalid("network", e.to_string()))?;
        if spec.classes() != Some(self.dataset.classes) {
            return Err(invalid("network", "HEAD classes differ from dataset.classes"));
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(invalid("optimizer.lr", format!("must be positive, got {}", o.lr)));
        }
        if o.batch_size == 0 {
            return Err(invalid("optimizer.batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&o.momentum) || o.weight_decay < 0.0 {
            return Err(invalid("optimizer.momentum", "momentum in [0, 1) and weight_decay ≥ 0 required"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed required"));
        }
        let d = &self.dataset;
        if !(2..=8).contains(&d.classes) {
            return Err(invalid("dataset.classes", format!("must be in 2..=8, got {}", d.classes)));
        }
        if d.per_class < 5 || d.n_points == 0 {
            return Err(invalid("dataset.per_class", "need per_class ≥ 5 and n_points ≥ 1"));
        }
        if let NetworkTemplate::PointNet(p) = &self.network {
            if p.dims != 3 {
                return Err(invalid("network.dims", "point data is three-dimensional"));
            }
        }
        self.resolve_spec().map(|_| ())
    }
}
