//! Surface-sampled geometric primitives as point clouds.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tensor::Tensor;

pub const PRIMITIVES: [&str; 8] = ["sphere", "cube", "cylinder", "cone", "torus", "plane", "helix", "cross"];

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudSample {
    /// `[n × 3]`, every coordinate in `[-1, 1]`.
    pub points: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointDatasetConfig {
    pub classes: usize,
    pub per_class: usize,
    pub n_points: usize,
    /// Standard deviation of the per-point jitter, after normalization.
    pub noise_sigma: f64,
    /// Per-axis stretch drawn from `U(1 − d, 1 + d)` before rotation.
    pub distortion: f64,
    pub seed: u64,
}

impl Default for PointDatasetConfig {
    fn default() -> Self {
        Self {
            classes: 8,
            per_class: 100,
            n_points: 256,
            noise_sigma: 0.02,
            distortion: 0.3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointDataset {
    pub classes: usize,
    pub n_points: usize,
    pub train: Vec<PointCloudSample>,
    pub test: Vec<PointCloudSample>,
}

type Point = [f64; 3];

fn unit_direction(rng: &mut RandomSource) -> Point {
    loop {
        let v = [rng.normal(), rng.normal(), rng.normal()];
        let n = norm(&v);
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn norm(p: &Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

fn sample_primitive(kind: usize, rng: &mut RandomSource) -> Point {
    match kind {
        0 => unit_direction(rng),
        1 => {
            let face = rng.below(6);
            let (axis, sign) = (face / 2, if face % 2 == 0 { 1.0 } else { -1.0 });
            let mut p = [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)];
            p[axis] = sign;
            p
        }
        2 => {
            // side area 2π·h with h = 2, caps π each
            let a = rng.uniform(0.0, TAU);
            if rng.uniform(0.0, 6.0) < 4.0 {
                [a.cos(), a.sin(), rng.uniform(-1.0, 1.0)]
            } else {
                let r = rng.uniform(0.0, 1.0).sqrt();
                let z = if rng.below(2) == 0 { 1.0 } else { -1.0 };
                [r * a.cos(), r * a.sin(), z]
            }
        }
        3 => {
            // unit base radius, height 2: lateral area π·√5, base π
            let a = rng.uniform(0.0, TAU);
            let r = rng.uniform(0.0, 1.0).sqrt();
            if rng.uniform(0.0, 1.0 + 5f64.sqrt()) < 5f64.sqrt() {
                [r * a.cos(), r * a.sin(), 1.0 - 2.0 * r]
            } else {
                [r * a.cos(), r * a.sin(), -1.0]
            }
        }
        4 => {
            let (big, small) = (1.0, 0.35);
            let (u, v) = (rng.uniform(0.0, TAU), rng.uniform(0.0, TAU));
            let ring = big + small * v.cos();
            [ring * u.cos(), ring * u.sin(), small * v.sin()]
        }
        5 => [rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0],
        6 => {
            let turns = 2.5;
            let s = rng.uniform(0.0, 1.0);
            let a = s * turns * TAU;
            [a.cos(), a.sin(), 2.0 * s - 1.0]
        }
        _ => {
            let axis = rng.below(3);
            let mut p = [rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08)];
            p[axis] = rng.uniform(-1.0, 1.0);
            p
        }
    }
}

/// Uniformly distributed rotation from a random unit quaternion.
fn random_rotation(rng: &mut RandomSource) -> [[f64; 3]; 3] {
    let (u1, u2, u3) = (rng.uniform(0.0, 1.0), rng.uniform(0.0, TAU), rng.uniform(0.0, TAU));
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * u2.sin(), a * u2.cos(), b * u3.sin(), b * u3.cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// One sample of primitive `kind`, a pure function of its seed.
pub fn generate_sample(kind: usize, cfg: &PointDatasetConfig, seed: u64, index: u64) -> PointCloudSample {
    let mut rng = RandomSource::derived(seed, index);
    let d = cfg.distortion;
    let stretch = [0, 1, 2].map(|_| rng.uniform(1.0 - d, 1.0 + d));
    let rot = random_rotation(&mut rng);
    let pts: Vec<Point> = (0..cfg.n_points)
        .map(|_| {
            let p = sample_primitive(kind, &mut rng);
            let s = [p[0] * stretch[0], p[1] * stretch[1], p[2] * stretch[2]];
            [0, 1, 2].map(|r| rot[r][0] * s[0] + rot[r][1] * s[1] + rot[r][2] * s[2])
        })
        .collect();
    let scale = pts.iter().map(norm).fold(0.0, f64::max).max(1e-12);
    let mut data = Vec::with_capacity(cfg.n_points * 3);
    for p in &pts {
        for v in p {
            let jitter = if cfg.noise_sigma > 0.0 { cfg.noise_sigma * rng.normal() } else { 0.0 };
            // round through f32 so the binary format is lossless
            data.push(((v / scale + jitter).clamp(-1.0, 1.0) as f32) as f64);
        }
    }
    PointCloudSample {
        points: Tensor::new(vec![cfg.n_points, 3], data).expect("positive point count"),
        label: kind,
    }
}

/// Stratified 80/20 train/test split of `per_class` samples per class.
pub fn generate_point_dataset(cfg: &PointDatasetConfig) -> Result<PointDataset> {
    if !(2..=PRIMITIVES.len()).contains(&cfg.classes) {
        return Err(Error::InvalidArgument(format!(
            "classes must be in 2..={}, got {}",
            PRIMITIVES.len(),
            cfg.classes
        )));
    }
    if cfg.per_class < 2 || cfg.n_points == 0 {
        return Err(Error::InvalidArgument("need per_class ≥ 2 and n_points ≥ 1".into()));
    }
    if !(cfg.noise_sigma >= 0.0 && (0.0..1.0).contains(&cfg.distortion)) {
        return Err(Error::InvalidArgument("noise_sigma ≥ 0 and distortion in [0, 1) required".into()));
    }
    let n_test = (cfg.per_class as f64 * 0.2).round().max(1.0) as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut split_rng = RandomSource::derived(cfg.seed, u64::MAX);
    for class in 0..cfg.classes {
        let mut order: Vec<usize> = (0..cfg.per_class).collect();
        split_rng.shuffle(&mut order);
        for (rank, i) in order.into_iter().enumerate() {
            let sample = generate_sample(class, cfg, cfg.seed, (class * cfg.per_class + i) as u64);
            if rank < n_test {
                test.push(sample);
            } else {
                train.push(sample);
            }
        }
    }
    Ok(PointDataset {
        classes: cfg.classes,
        n_points: cfg.n_points,
        train,
        test,
    })
}

/// Stacks samples into a `[b × n × 3]` batch and its labels.
pub fn stack_points(samples: &[&PointCloudSample]) -> Result<(Tensor, Vec<usize>)> {
    let first = samples.first().ok_or(Error::Empty("point batch"))?;
    let n = first.points.shape()[0];
    let mut data = Vec::with_capacity(samples.len() * n * 3);
    for s in samples {
        if s.points.shape() != [n, 3] {
            return Err(Error::shape("stack_points", &[n, 3], s.points.shape()));
        }
        data.extend_from_slice(s.points.data());
    }
    let labels = samples.iter().map(|s| s.label).collect();
    Ok((Tensor::new(vec![samples.len(), n, 3], data)?, labels))
}

/// Rotation-invariant radial summary used by the sanity classifier.
pub fn shape_features(points: &Tensor) -> [f64; 4] {
    let radii: Vec<f64> = points.data().chunks(3).map(|p| norm(&[p[0], p[1], p[2]])).collect();
    let n = radii.len() as f64;
    let mean = radii.iter().sum::<f64>() / n;
    let var = radii.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let inner = radii.iter().filter(|&&r| r < 0.5).count() as f64 / n;
    let outer = radii.iter().filter(|&&r| r > 0.9).count() as f64 / n;
    [mean, var.sqrt(), inner, outer]
}

/// Nearest-centroid classifier over [`shape_features`]; returns test accuracy.
pub fn nearest_centroid_accuracy(ds: &PointDataset) -> f64 {
    let mut sums = vec![([0.0; 4], 0usize); ds.classes];
    for s in &ds.train {
        let f = shape_features(&s.points);
        let e = &mut sums[s.label];
        (0..4).for_each(|i| e.0[i] += f[i]);
        e.1 += 1;
    }
    let centroids: Vec<[f64; 4]> = sums.iter().map(|(s, n)| s.map(|v| v / (*n).max(1) as f64)).collect();
    let correct = ds
        .test
        .iter()
        .filter(|s| {
            let f = shape_features(&s.points);
            let best = centroids
                .iter()
                .enumerate()
                .map(|(c, m)| (c, (0..4).map(|i| (f[i] - m[i]).powi(2)).sum::<f64>()))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            best.0 == s.label
        })
        .count();
    correct as f64 / ds.test.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(classes: usize) -> PointDatasetConfig {
        PointDatasetConfig {
            classes,
            per_class: 10,
            n_points: 64,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_point_dataset(&small(2)).unwrap();
        let b = generate_point_dataset(&small(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_free_sphere_sits_on_unit_radius() {
        let cfg = PointDatasetConfig {
            noise_sigma: 0.0,
            distortion: 0.0,
            ..small(2)
        };
        let ds = generate_point_dataset(&cfg).unwrap();
        for s in ds.train.iter().chain(&ds.test).filter(|s| s.label == 0) {
            for p in s.points.data().chunks(3) {
                assert!((norm(&[p[0], p[1], p[2]]) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn coordinates_are_bounded_and_split_is_stratified() {
        let ds = generate_point_dataset(&small(8)).unwrap();
        assert_eq!(ds.train.len(), 64);
        assert_eq!(ds.test.len(), 16);
        for c in 0..8 {
            assert_eq!(ds.test.iter().filter(|s| s.label == c).count(), 2);
        }
        assert!(ds
            .train
            .iter()
            .chain(&ds.test)
            .all(|s| s.points.data().iter().all(|v| (-1.0..=1.0).contains(v))));
    }

    #[test]
    fn unsupported_class_count_is_rejected() {
        assert!(generate_point_dataset(&small(9)).is_err());
        assert!(generate_point_dataset(&small(1)).is_err());
    }

    #[test]
    fn radial_features_beat_chance() {
        let cfg = PointDatasetConfig {
            classes: 4,
            per_class: 40,
            ..Default::default()
        };
        let acc = nearest_centroid_accuracy(&generate_point_dataset(&cfg).unwrap());
        assert!(acc > 0.25, "{acc}");
    }

    #[test]
    fn stacking_builds_a_batch() {
        let ds = generate_point_dataset(&small(2)).unwrap();
        let refs: Vec<&PointCloudSample> = ds.train.iter().take(3).collect();
        let (x, y) = stack_points(&refs).unwrap();
        assert_eq!(x.shape(), &[3, 64, 3]);
        assert_eq!(y.len(), 3);
    }
}
