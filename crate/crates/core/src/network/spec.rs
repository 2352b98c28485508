//! Declarative layer stacks and the templates used by the experiments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuron::{NeuronConfig, NeuronPolicy};
use crate::shortcut::{ShortcutKind, ShortcutType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LayerSpec {
    Linear {
        inputs: usize,
        outputs: usize,
    },
    Norm,
    Spike {
        #[serde(default)]
        neuron: NeuronConfig,
        /// Group label used for block-averaged firing rates.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        block: Option<String>,
    },
    ShortcutBegin {
        shortcut: ShortcutKind,
    },
    ShortcutEnd,
    MaxpoolPoints,
    Head {
        classes: usize,
    },
}

impl LayerSpec {
    fn spike(neuron: NeuronConfig, block: impl Into<String>) -> Self {
        LayerSpec::Spike {
            neuron,
            block: Some(block.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    /// `[batch × points × dims]` point clouds.
    Points { points: usize, dims: usize },
    /// `[batch × features]` vectors.
    Flat { features: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicySpec {
    Twu { timesteps: usize },
    Amp2,
}

impl PolicySpec {
    pub fn timesteps(&self) -> usize {
        match self {
            PolicySpec::Twu { timesteps } => *timesteps,
            PolicySpec::Amp2 => 1,
        }
    }

    pub fn neuron_policy(&self) -> NeuronPolicy {
        match self {
            PolicySpec::Twu { .. } => NeuronPolicy::Twu,
            PolicySpec::Amp2 => NeuronPolicy::Amp2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: InputSpec,
    pub layers: Vec<LayerSpec>,
    pub policy: PolicySpec,
    #[serde(default)]
    pub depth_blocks: usize,
}

impl NetworkSpec {
    pub fn spike_layer_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Spike { .. }))
            .count()
    }

    pub fn shortcut_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::ShortcutBegin { .. }))
            .count()
    }

    pub fn classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::Head { classes }) => Some(*classes),
            _ => None,
        }
    }

    /// Replaces the neuron config of every SPIKE layer, keeping the policy
    /// implied by the network.
    pub fn set_neuron(&mut self, neuron: &NeuronConfig) {
        let policy = self.policy.neuron_policy();
        for layer in &mut self.layers {
            if let LayerSpec::Spike { neuron: n, .. } = layer {
                *n = NeuronConfig { policy, ..*neuron };
            }
        }
    }

    /// Sets `α = 0` on every SPIKE layer (no activation-wise handoff).
    pub fn disable_handoff(&mut self) {
        for layer in &mut self.layers {
            if let LayerSpec::Spike { neuron, .. } = layer {
                neuron.alpha = 0.0;
            }
        }
    }

    /// Drops every SHORTCUT_BEGIN / SHORTCUT_END marker.
    pub fn strip_shortcuts(&mut self) {
        self.layers
            .retain(|l| !matches!(l, LayerSpec::ShortcutBegin { .. } | LayerSpec::ShortcutEnd));
    }

    pub fn validate(&self) -> Result<()> {
        let err = |index: usize, reason: String| Err(Error::InvalidSpec { index, reason });
        if self.layers.is_empty() {
            return err(0, "no layers".into());
        }
        if self.policy.timesteps() == 0 {
            return err(0, "TWU needs at least one timestep".into());
        }
        let mut width = match self.input {
            InputSpec::Points { points, dims } if points > 0 && dims > 0 => dims,
            InputSpec::Flat { features } if features > 0 => features,
            _ => return err(0, "input extents must be positive".into()),
        };
        let points_input = matches!(self.input, InputSpec::Points { .. });
        let mut pools = 0;
        // last real-valued producer: true when it was a NORM
        let mut last_was_norm = false;
        let mut seen_spike = false;
        let mut seen_features = false;
        let mut open: Option<OpenBlock> = None;

        for (i, layer) in self.layers.iter().enumerate() {
            let is_last = i + 1 == self.layers.len();
            match layer {
                LayerSpec::Linear { inputs, outputs } => {
                    if *inputs != width {
                        return err(i, format!("LINEAR expects {inputs} inputs but receives {width}"));
                    }
                    if *outputs == 0 {
                        return err(i, "LINEAR with zero outputs".into());
                    }
                    width = *outputs;
                    last_was_norm = false;
                    seen_features = true;
                    if let Some(b) = &mut open {
                        b.features_inside = true;
                    }
                }
                LayerSpec::Norm => {
                    last_was_norm = true;
                    seen_features = true;
                    if let Some(b) = &mut open {
                        b.features_inside = true;
                    }
                }
                LayerSpec::Spike { neuron, .. } => {
                    if !last_was_norm {
                        return err(i, "SPIKE must be preceded by NORM".into());
                    }
                    neuron.validate().map_err(|e| Error::InvalidSpec {
                        index: i,
                        reason: e.to_string(),
                    })?;
                    if neuron.policy != self.policy.neuron_policy() {
                        return err(i, format!("SPIKE policy {:?} differs from network policy", neuron.policy));
                    }
                    seen_spike = true;
                    if let Some(b) = &mut open {
                        b.spike_inside = true;
                    }
                }
                LayerSpec::ShortcutBegin { shortcut } => {
                    if open.is_some() {
                        return err(i, "nested shortcuts are not supported".into());
                    }
                    shortcut.validate().map_err(|e| Error::InvalidSpec {
                        index: i,
                        reason: e.to_string(),
                    })?;
                    let skip_ok = match shortcut.kind {
                        ShortcutType::Vanilla | ShortcutType::Membrane => seen_features,
                        ShortcutType::Sew | ShortcutType::Rmp => seen_spike,
                    };
                    if !skip_ok {
                        return err(i, format!("{} skip path has no source signal", shortcut.kind.name()));
                    }
                    open = Some(OpenBlock {
                        kind: shortcut.kind,
                        width,
                        spike_inside: false,
                        features_inside: false,
                    });
                }
                LayerSpec::ShortcutEnd => {
                    let Some(b) = open.take() else {
                        return err(i, "SHORTCUT_END without SHORTCUT_BEGIN".into());
                    };
                    if b.width != width {
                        return err(i, format!("shortcut changes width {} -> {width}", b.width));
                    }
                    let out_ok = match b.kind {
                        ShortcutType::Vanilla | ShortcutType::Sew => b.spike_inside,
                        ShortcutType::Membrane | ShortcutType::Rmp => b.features_inside,
                    };
                    if !out_ok {
                        return err(i, format!("{} block produces no mergeable output", b.kind.name()));
                    }
                    seen_features = true;
                }
                LayerSpec::MaxpoolPoints => {
                    if !points_input {
                        return err(i, "MAXPOOL_POINTS needs point-cloud input".into());
                    }
                    if open.is_some() {
                        return err(i, "MAXPOOL_POINTS inside a shortcut".into());
                    }
                    pools += 1;
                }
                LayerSpec::Head { classes } => {
                    if !is_last {
                        return err(i, "HEAD must be the last layer".into());
                    }
                    if *classes == 0 {
                        return err(i, "HEAD needs at least one class".into());
                    }
                }
            }
        }
        let last = self.layers.len() - 1;
        if open.is_some() {
            return err(last, "unterminated shortcut".into());
        }
        if !matches!(self.layers[last], LayerSpec::Head { .. }) {
            return err(last, "last layer must be HEAD".into());
        }
        if points_input && pools != 1 {
            return err(last, format!("point networks need exactly one MAXPOOL_POINTS, found {pools}"));
        }
        Ok(())
    }
}

struct OpenBlock {
    kind: ShortcutType,
    width: usize,
    spike_inside: bool,
    features_inside: bool,
}

/// Where a feature-merging shortcut joins the main path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergePoint {
    /// Merge into the last LINEAR output, then normalize the sum.
    #[default]
    PreNorm,
    /// Merge after the last NORM.
    PostNorm,
}

/// Options shared by the generated layer stacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockOptions {
    pub width: usize,
    pub depth_blocks: usize,
    pub layers_per_block: usize,
    pub shortcut: Option<ShortcutKind>,
    pub merge: MergePoint,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            width: 64,
            depth_blocks: 3,
            layers_per_block: 1,
            shortcut: Some(ShortcutKind::rmp()),
            merge: MergePoint::PreNorm,
        }
    }
}

fn push_blocks(layers: &mut Vec<LayerSpec>, opts: &BlockOptions, neuron: NeuronConfig) {
    let w = opts.width;
    let per = opts.layers_per_block.max(1);
    for b in 0..opts.depth_blocks {
        let label = format!("block{}", b + 1);
        let unit = |layers: &mut Vec<LayerSpec>| {
            layers.push(LayerSpec::Linear { inputs: w, outputs: w });
            layers.push(LayerSpec::Norm);
            layers.push(LayerSpec::spike(neuron, label.clone()));
        };
        match opts.shortcut {
            None => (0..per).for_each(|_| unit(layers)),
            Some(kind) => {
                layers.push(LayerSpec::ShortcutBegin { shortcut: kind });
                match kind.kind {
                    ShortcutType::Vanilla | ShortcutType::Sew => {
                        (0..per).for_each(|_| unit(layers));
                        layers.push(LayerSpec::ShortcutEnd);
                    }
                    ShortcutType::Membrane | ShortcutType::Rmp => {
                        (0..per - 1).for_each(|_| unit(layers));
                        layers.push(LayerSpec::Linear { inputs: w, outputs: w });
                        match opts.merge {
                            MergePoint::PreNorm => {
                                layers.push(LayerSpec::ShortcutEnd);
                                layers.push(LayerSpec::Norm);
                            }
                            MergePoint::PostNorm => {
                                layers.push(LayerSpec::Norm);
                                layers.push(LayerSpec::ShortcutEnd);
                            }
                        }
                        layers.push(LayerSpec::spike(neuron, label.clone()));
                    }
                }
            }
        }
    }
}

fn neuron_for(policy: PolicySpec, neuron: NeuronConfig) -> NeuronConfig {
    NeuronConfig {
        policy: policy.neuron_policy(),
        ..neuron
    }
}

/// Shared per-point MLP with residual blocks, symmetric max pool and a
/// spiking classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointNetOptions {
    pub points: usize,
    pub dims: usize,
    /// Widths of the per-point stem; blocks run at the last stem width.
    pub stem_widths: Vec<usize>,
    pub blocks: BlockOptions,
    /// Per-point width right before pooling.
    pub feature_width: usize,
    pub head_hidden: usize,
    pub classes: usize,
    pub policy: PolicySpec,
    pub neuron: NeuronConfig,
}

impl Default for PointNetOptions {
    fn default() -> Self {
        Self {
            points: 256,
            dims: 3,
            stem_widths: vec![32, 64],
            blocks: BlockOptions::default(),
            feature_width: 128,
            head_hidden: 64,
            classes: 8,
            policy: PolicySpec::Amp2,
            neuron: NeuronConfig::default(),
        }
    }
}

impl PointNetOptions {
    pub fn build_spec(&self) -> NetworkSpec {
        let neuron = neuron_for(self.policy, self.neuron);
        let mut layers = Vec::new();
        let mut width = self.dims;
        for &w in &self.stem_widths {
            layers.push(LayerSpec::Linear { inputs: width, outputs: w });
            layers.push(LayerSpec::Norm);
            layers.push(LayerSpec::spike(neuron, "stem"));
            width = w;
        }
        let blocks = BlockOptions {
            width,
            ..self.blocks.clone()
        };
        push_blocks(&mut layers, &blocks, neuron);
        layers.push(LayerSpec::Linear {
            inputs: width,
            outputs: self.feature_width,
        });
        // normalize after pooling: the max of normalized features sits far above threshold
        layers.push(LayerSpec::MaxpoolPoints);
        layers.push(LayerSpec::Norm);
        layers.push(LayerSpec::spike(neuron, "pool"));
        let mut width = self.feature_width;
        if self.head_hidden > 0 {
            layers.push(LayerSpec::Linear {
                inputs: width,
                outputs: self.head_hidden,
            });
            layers.push(LayerSpec::Norm);
            layers.push(LayerSpec::spike(neuron, "head"));
            width = self.head_hidden;
        }
        let _ = width;
        layers.push(LayerSpec::Head { classes: self.classes });
        NetworkSpec {
            input: InputSpec::Points {
                points: self.points,
                dims: self.dims,
            },
            layers,
            policy: self.policy,
            depth_blocks: self.blocks.depth_blocks,
        }
    }
}

/// Configurable-depth spiking MLP over flat feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikingMlpOptions {
    pub features: usize,
    pub blocks: BlockOptions,
    pub classes: usize,
    pub policy: PolicySpec,
    pub neuron: NeuronConfig,
}

impl Default for SpikingMlpOptions {
    fn default() -> Self {
        Self {
            features: 16,
            blocks: BlockOptions::default(),
            classes: 4,
            policy: PolicySpec::Amp2,
            neuron: NeuronConfig::default(),
        }
    }
}

impl SpikingMlpOptions {
    pub fn build_spec(&self) -> NetworkSpec {
        let neuron = neuron_for(self.policy, self.neuron);
        let w = self.blocks.width;
        let mut layers = vec![
            LayerSpec::Linear {
                inputs: self.features,
                outputs: w,
            },
            LayerSpec::Norm,
            LayerSpec::spike(neuron, "stem"),
        ];
        push_blocks(&mut layers, &self.blocks, neuron);
        layers.push(LayerSpec::Head { classes: self.classes });
        NetworkSpec {
            input: InputSpec::Flat {
                features: self.features,
            },
            layers,
            policy: self.policy,
            depth_blocks: self.blocks.depth_blocks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spike() -> LayerSpec {
        LayerSpec::Spike {
            neuron: NeuronConfig::default(),
            block: None,
        }
    }

    fn flat(features: usize, layers: Vec<LayerSpec>) -> NetworkSpec {
        NetworkSpec {
            input: InputSpec::Flat { features },
            layers,
            policy: PolicySpec::Amp2,
            depth_blocks: 0,
        }
    }

    #[test]
    fn minimal_chain_is_valid() {
        let spec = flat(
            3,
            vec![
                LayerSpec::Linear { inputs: 3, outputs: 8 },
                LayerSpec::Norm,
                spike(),
                LayerSpec::Head { classes: 2 },
            ],
        );
        spec.validate().unwrap();
        assert_eq!(spec.spike_layer_count(), 1);
    }

    #[test]
    fn broken_chain_reports_layer_index() {
        let spec = flat(
            3,
            vec![
                LayerSpec::Linear { inputs: 3, outputs: 8 },
                LayerSpec::Linear { inputs: 9, outputs: 4 },
                LayerSpec::Head { classes: 2 },
            ],
        );
        match spec.validate() {
            Err(Error::InvalidSpec { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn spike_without_norm_is_rejected() {
        let spec = flat(
            3,
            vec![
                LayerSpec::Linear { inputs: 3, outputs: 8 },
                spike(),
                LayerSpec::Head { classes: 2 },
            ],
        );
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec { index: 1, .. })));
    }

    #[test]
    fn head_must_be_last_and_pool_unique() {
        let spec = flat(3, vec![LayerSpec::Head { classes: 2 }, LayerSpec::Norm]);
        assert!(spec.validate().is_err());

        let mut spec = PointNetOptions::default().build_spec();
        spec.validate().unwrap();
        let at = spec.layers.iter().position(|l| *l == LayerSpec::MaxpoolPoints).unwrap();
        spec.layers.insert(at, LayerSpec::MaxpoolPoints);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn policy_mismatch_is_rejected() {
        let mut spec = PointNetOptions::default().build_spec();
        spec.policy = PolicySpec::Twu { timesteps: 2 };
        assert!(spec.validate().is_err());
        spec.set_neuron(&NeuronConfig::default());
        spec.validate().unwrap();
    }

    #[test]
    fn depth_variants_differ_only_in_block_count() {
        let mk = |d| {
            let mut o = PointNetOptions::default();
            o.blocks.depth_blocks = d;
            o.build_spec()
        };
        let (a, b) = (mk(3), mk(6));
        a.validate().unwrap();
        b.validate().unwrap();
        assert_eq!(b.layers.len() - a.layers.len(), 3 * 5);
        assert_eq!(b.shortcut_count(), 6);
        assert_eq!(a.layers[..8], b.layers[..8]);
        assert_eq!(a.layers[a.layers.len() - 8..], b.layers[b.layers.len() - 8..]);
    }

    #[test]
    fn every_template_kind_validates() {
        for kind in [ShortcutType::Vanilla, ShortcutType::Sew, ShortcutType::Membrane, ShortcutType::Rmp] {
            for merge in [MergePoint::PreNorm, MergePoint::PostNorm] {
                for per in [1, 2] {
                    let mut o = SpikingMlpOptions::default();
                    o.blocks.shortcut = Some(ShortcutKind::new(kind));
                    o.blocks.merge = merge;
                    o.blocks.layers_per_block = per;
                    o.build_spec().validate().unwrap_or_else(|e| panic!("{kind:?} {merge:?} {per}: {e}"));
                }
            }
        }
    }

    #[test]
    fn ablation_transforms() {
        let mut spec = PointNetOptions::default().build_spec();
        spec.strip_shortcuts();
        spec.disable_handoff();
        spec.validate().unwrap();
        assert_eq!(spec.shortcut_count(), 0);
        assert!(spec.layers.iter().all(|l| match l {
            LayerSpec::Spike { neuron, .. } => neuron.alpha == 0.0,
            _ => true,
        }));
    }

    #[test]
    fn json_round_trip() {
        let spec = PointNetOptions::default().build_spec();
        let text = serde_json::to_string(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        let partial: LayerSpec = serde_json::from_str(r#"{"type":"SPIKE"}"#).unwrap();
        assert!(matches!(partial, LayerSpec::Spike { .. }));
    }
}
