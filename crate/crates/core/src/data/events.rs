//! Synthetic event streams from a disk moving across a small sensor.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    /// 1 for ON (brightness increase), 0 for OFF.
    pub p: u8,
    pub x: u16,
    pub y: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventCloudSample {
    /// Sorted by `t`.
    pub events: Vec<Event>,
    pub label: usize,
}

impl EventCloudSample {
    /// `[m × 4]` rows `[t, p, x, y]`.
    pub fn to_tensor(&self) -> Result<Tensor> {
        if self.events.is_empty() {
            return Err(Error::Empty("event sample"));
        }
        let data = self
            .events
            .iter()
            .flat_map(|e| [e.t, e.p as f64, e.x as f64, e.y as f64])
            .collect();
        Tensor::new(vec![self.events.len(), 4], data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventDatasetConfig {
    /// Each class is one direction of motion, evenly spaced on the circle.
    pub classes: usize,
    pub per_class: usize,
    pub duration_steps: usize,
    pub width: u16,
    pub height: u16,
    /// Probability of a spurious event per pixel and step.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for EventDatasetConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 100,
            duration_steps: 16,
            width: 32,
            height: 32,
            noise_rate: 0.001,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventDataset {
    pub config: EventDatasetConfig,
    pub train: Vec<EventCloudSample>,
    pub test: Vec<EventCloudSample>,
}

fn disk_mask(cfg: &EventDatasetConfig, cx: f64, cy: f64, r: f64) -> Vec<bool> {
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            mask[y * w + x] = dx * dx + dy * dy <= r * r;
        }
    }
    mask
}

fn generate_event_sample(cfg: &EventDatasetConfig, label: usize, index: u64) -> EventCloudSample {
    let mut rng = RandomSource::derived(cfg.seed, index);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let heading = TAU * label as f64 / cfg.classes as f64 + rng.uniform(-0.15, 0.15);
    let speed = rng.uniform(0.6, 1.2);
    let radius = rng.uniform(2.5, 4.5);
    let travel = speed * cfg.duration_steps as f64;
    let (vx, vy) = (heading.cos() * speed, heading.sin() * speed);
    let (mut cx, mut cy) = (
        w / 2.0 - heading.cos() * travel / 2.0 + rng.uniform(-2.0, 2.0),
        h / 2.0 - heading.sin() * travel / 2.0 + rng.uniform(-2.0, 2.0),
    );
    let mut events = Vec::new();
    let mut prev = disk_mask(cfg, cx, cy, radius);
    for step in 0..cfg.duration_steps {
        cx += vx;
        cy += vy;
        let next = disk_mask(cfg, cx, cy, radius);
        for (i, (&a, &b)) in prev.iter().zip(&next).enumerate() {
            let noise = rng.uniform(0.0, 1.0) < cfg.noise_rate;
            let polarity = match (a, b) {
                (false, true) => Some(1),
                (true, false) => Some(0),
                _ if noise => Some(rng.below(2) as u8),
                _ => None,
            };
            if let Some(p) = polarity {
                events.push(Event {
                    t: ((step as f64 + rng.uniform(0.0, 1.0)) as f32) as f64,
                    p,
                    x: (i % cfg.width as usize) as u16,
                    y: (i / cfg.width as usize) as u16,
                });
            }
        }
        prev = next;
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    EventCloudSample { events, label }
}

/// Stratified 80/20 split of moving-disk event streams.
pub fn generate_event_dataset(cfg: &EventDatasetConfig) -> Result<EventDataset> {
    if cfg.duration_steps == 0 {
        return Err(Error::InvalidArgument("duration_steps must be at least 1".into()));
    }
    if cfg.classes < 2 || cfg.per_class < 2 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::InvalidArgument("need ≥ 2 classes, ≥ 2 samples per class and a non-empty sensor".into()));
    }
    let n_test = (cfg.per_class as f64 * 0.2).round().max(1.0) as usize;
    let mut split_rng = RandomSource::derived(cfg.seed, u64::MAX);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in 0..cfg.classes {
        let mut order: Vec<usize> = (0..cfg.per_class).collect();
        split_rng.shuffle(&mut order);
        for (rank, i) in order.into_iter().enumerate() {
            let s = generate_event_sample(cfg, class, (class * cfg.per_class + i) as u64);
            if rank < n_test {
                test.push(s);
            } else {
                train.push(s);
            }
        }
    }
    Ok(EventDataset {
        config: *cfg,
        train,
        test,
    })
}

/// Integrates events into `t_frames` frames of shape `[t × 2 × height × width]`.
///
/// Event time `t ∈ [0, duration)` falls into bin `⌊t·T/duration⌋`.
pub fn integrate_frames(
    events: &[Event],
    t_frames: usize,
    duration: f64,
    width: u16,
    height: u16,
) -> Result<Tensor> {
    if t_frames == 0 || !(duration > 0.0) {
        return Err(Error::InvalidArgument("need at least one frame and a positive duration".into()));
    }
    let (w, h) = (width as usize, height as usize);
    let mut data = vec![0.0; t_frames * 2 * h * w];
    for e in events {
        if e.x as usize >= w || e.y as usize >= h || e.p > 1 {
            return Err(Error::InvalidArgument(format!("event outside sensor: {e:?}")));
        }
        let bin = ((e.t * t_frames as f64 / duration).floor().max(0.0) as usize).min(t_frames - 1);
        data[((bin * 2 + e.p as usize) * h + e.y as usize) * w + e.x as usize] += 1.0;
    }
    Tensor::new(vec![t_frames, 2, h, w], data)
}
