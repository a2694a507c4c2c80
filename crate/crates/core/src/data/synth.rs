//! Synthetic domain-shift benchmark.
//!
//! Each class has its own image generator (a filled blob or a thin ring at a
//! random position, radius and brightness, over a noisy background). Source
//! samples come straight from the generators. Target samples pass through a
//! [`DomainTransform`]: a rotation about the image center, an intensity gain
//! and offset, and additive Gaussian noise, clamped back into `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, Domain, Label, Sample, Split};
use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "lowercase"))]
pub enum Pattern {
    /// Filled Gaussian disc.
    Blob,
    /// Thin annulus.
    Ring,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct DomainTransform {
    pub gain: f64,
    pub offset: f64,
    pub rotation_deg: f64,
    pub noise_sigma: f64,
}

impl DomainTransform {
    pub const IDENTITY: Self = Self {
        gain: 1.0,
        offset: 0.0,
        rotation_deg: 0.0,
        noise_sigma: 0.0,
    };
}

impl Default for DomainTransform {
    fn default() -> Self {
        Self {
            gain: 0.6,
            offset: 0.2,
            rotation_deg: 25.0,
            noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(default, deny_unknown_fields))]
pub struct ShiftSpec {
    /// Side length of the square images.
    pub image_size: usize,
    pub positive: Pattern,
    pub negative: Pattern,
    /// Standard deviation of the background noise of both domains.
    pub background_noise: f64,
    pub transform: DomainTransform,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            image_size: 16,
            positive: Pattern::Ring,
            negative: Pattern::Blob,
            background_noise: 0.03,
            transform: DomainTransform::default(),
        }
    }
}

/// Source pool, labeled target training pool and target test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub source: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
}

/// Patients the target training and test pools are spread over.
const TRAIN_PATIENTS: usize = 20;
const TEST_PATIENTS: usize = 9;

pub fn synth_domain_shift(
    spec: &ShiftSpec,
    n_source: usize,
    n_target_train: usize,
    n_target_test: usize,
    seed: u64,
) -> Result<Benchmark> {
    if spec.image_size < 4 {
        return Err(Error::config(format!(
            "image size must be at least 4, got {}",
            spec.image_size
        )));
    }
    let t = spec.transform;
    if !(t.gain.is_finite() && t.offset.is_finite() && t.rotation_deg.is_finite())
        || !(t.noise_sigma >= 0.0 && spec.background_noise >= 0.0)
    {
        return Err(Error::config("domain transform parameters must be finite, noise >= 0"));
    }
    if n_source == 0 || n_target_train == 0 || n_target_test == 0 {
        return Err(Error::config("every split needs at least one sample"));
    }
    let split = |purpose: &str, count: usize, domain: Domain, patients: usize, data_split: Split| {
        let mut rng = seed::rng(seed::derive(seed, purpose, 0));
        let samples = (0..count)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
                let pixels = render(spec, label, domain, &mut rng);
                Sample {
                    id: format!("{purpose}-{i:05}"),
                    pixels,
                    label,
                    domain,
                    patient: (patients > 0).then(|| format!("{purpose}-p{:02}", i % patients)),
                }
            })
            .collect();
        Dataset::new(samples, data_split)
    };
    Ok(Benchmark {
        source: split("src", n_source, Domain::Source, 0, Split::Train)?,
        target_train: split("tgt-train", n_target_train, Domain::Target, TRAIN_PATIENTS, Split::Train)?,
        target_test: split("tgt-test", n_target_test, Domain::Target, TEST_PATIENTS, Split::Test)?,
    })
}

fn render(spec: &ShiftSpec, label: Label, domain: Domain, rng: &mut ChaCha8Rng) -> Tensor {
    let n = spec.image_size;
    let s = n as f64;
    let pattern = match label {
        Label::Positive => spec.positive,
        Label::Negative => spec.negative,
    };
    let cx = rng.random_range(0.35 * s..0.65 * s);
    let cy = rng.random_range(0.35 * s..0.65 * s);
    let radius = rng.random_range(0.15 * s..0.28 * s);
    let amplitude = rng.random_range(0.8..1.0);
    let base = match label {
        Label::Positive => 0.08,
        Label::Negative => 0.14,
    };
    let bg = Normal::new(0.0, spec.background_noise.max(f64::MIN_POSITIVE)).expect("sigma > 0");

    let mut img = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let d = libm::sqrt(dx * dx + dy * dy);
            let v = match pattern {
                Pattern::Blob => {
                    let w = radius / 1.4;
                    libm::exp(-(d * d) / (2.0 * w * w))
                }
                Pattern::Ring => {
                    let w = 0.06 * s;
                    libm::exp(-((d - radius) * (d - radius)) / (2.0 * w * w))
                }
            };
            let noise = if spec.background_noise > 0.0 { bg.sample(rng) } else { 0.0 };
            img[y * n + x] = base + amplitude * v + noise;
        }
    }
    if domain == Domain::Target {
        img = shift(&img, n, &spec.transform, rng);
    }
    img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Tensor::new(vec![n, n], img).expect("n*n pixels")
}

fn shift(img: &[f64], n: usize, t: &DomainTransform, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let theta = t.rotation_deg.to_radians();
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let c = n as f64 / 2.0;
    let edge = img.iter().copied().fold(f64::INFINITY, f64::min);
    let noise = Normal::new(0.0, t.noise_sigma.max(f64::MIN_POSITIVE)).expect("sigma > 0");
    let sample = |x: f64, y: f64| -> f64 {
        // bilinear lookup at pixel-center coordinates, `edge` outside
        let (fx, fy) = (x - 0.5, y - 0.5);
        let (x0, y0) = (libm::floor(fx), libm::floor(fy));
        let (tx, ty) = (fx - x0, fy - y0);
        let at = |xi: f64, yi: f64| {
            if xi < 0.0 || yi < 0.0 || xi >= n as f64 || yi >= n as f64 {
                edge
            } else {
                img[yi as usize * n + xi as usize]
            }
        };
        let top = at(x0, y0) + tx * (at(x0 + 1.0, y0) - at(x0, y0));
        let bottom = at(x0, y0 + 1.0) + tx * (at(x0 + 1.0, y0 + 1.0) - at(x0, y0 + 1.0));
        top + ty * (bottom - top)
    };
    let mut out = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            // inverse rotation of the destination pixel center
            let (dx, dy) = (x as f64 + 0.5 - c, y as f64 + 0.5 - c);
            let sx = cos * dx + sin * dy + c;
            let sy = -sin * dx + cos * dy + c;
            let v = sample(sx, sy);
            let e = if t.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            out.push(t.gain * v + t.offset + e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_balance_and_range() {
        let b = synth_domain_shift(&ShiftSpec::default(), 60, 20, 30, 1).unwrap();
        assert_eq!((b.source.len(), b.target_train.len(), b.target_test.len()), (60, 20, 30));
        for d in [&b.source, &b.target_train, &b.target_test] {
            assert_eq!(d.count(Label::Positive), d.len() / 2);
            for s in d.samples() {
                assert_eq!(s.pixels.shape(), &[16, 16]);
                assert!(s.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        assert!(b.source.samples().iter().all(|s| s.domain == Domain::Source));
        assert!(b.target_test.samples().iter().all(|s| s.domain == Domain::Target));
        assert!(crate::data::shared_ids(&b.target_train, &b.target_test).is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = ShiftSpec::default();
        let a = synth_domain_shift(&spec, 10, 4, 4, 9).unwrap();
        assert_eq!(a, synth_domain_shift(&spec, 10, 4, 4, 9).unwrap());
        assert_ne!(a, synth_domain_shift(&spec, 10, 4, 4, 10).unwrap());
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let zero = ShiftSpec {
            image_size: 0,
            ..ShiftSpec::default()
        };
        assert!(matches!(synth_domain_shift(&zero, 4, 4, 4, 0), Err(Error::Config(_))));
        assert!(synth_domain_shift(&ShiftSpec::default(), 0, 4, 4, 0).is_err());
    }

    #[test]
    fn target_intensity_follows_the_transform() {
        let spec = ShiftSpec {
            transform: DomainTransform {
                noise_sigma: 0.0,
                rotation_deg: 0.0,
                ..DomainTransform::default()
            },
            ..ShiftSpec::default()
        };
        let b = synth_domain_shift(&spec, 400, 400, 2, 3).unwrap();
        let mean = |d: &Dataset| {
            d.samples().iter().flat_map(|s| s.pixels.data()).sum::<f64>() / (d.len() * 256) as f64
        };
        let (ms, mt) = (mean(&b.source), mean(&b.target_train));
        // gain 0.6, offset 0.2 on the mean intensity, up to sampling noise
        assert!((mt - (0.6 * ms + 0.2)).abs() < 0.01, "{ms} {mt}");
    }
}
