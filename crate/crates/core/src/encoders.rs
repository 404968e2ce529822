//! Image → network-input encodings.
//!
//! Images are `[C, H, W]` tensors with pixels in `[0, 1]`. Every encoder is a
//! pure function of the image and its settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SpikeTrain, Tensor, TimeTensor};

/// Largest phase period accepted; keeps the fixed-point expansion exact.
pub const MAX_PHASE_PERIOD: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    Direct,
    Ttfs,
    WeightedPhase,
    HybridTtfs,
    HybridWeightedPhase,
}

impl EncodingScheme {
    pub fn is_hybrid(self) -> bool {
        matches!(self, Self::HybridTtfs | Self::HybridWeightedPhase)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::Ttfs => "ttfs",
            Self::WeightedPhase => "weighted_phase",
            Self::HybridTtfs => "hybrid_ttfs",
            Self::HybridWeightedPhase => "hybrid_weighted_phase",
        }
    }
}

impl std::str::FromStr for EncodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "direct" => Self::Direct,
            "ttfs" => Self::Ttfs,
            "weighted_phase" | "weighted-phase" => Self::WeightedPhase,
            "hybrid" | "hybrid_ttfs" | "hybrid-ttfs" => Self::HybridTtfs,
            "hybrid_weighted_phase" | "hybrid-weighted-phase" => Self::HybridWeightedPhase,
            other => return Err(Error::config(format!("unknown encoding scheme '{other}'"))),
        })
    }
}

fn default_phase_period() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub scheme: EncodingScheme,
    /// Total time steps `T` seen by the network.
    pub total_steps: usize,
    /// Weighted-phase period `K`.
    #[serde(default = "default_phase_period")]
    pub phase_period: usize,
}

impl EncoderConfig {
    pub fn new(scheme: EncodingScheme, total_steps: usize) -> Self {
        Self {
            scheme,
            total_steps,
            phase_period: default_phase_period(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps < 1 {
            return Err(Error::config("total_steps must be at least 1"));
        }
        let period = self.phase_period;
        match self.scheme {
            EncodingScheme::WeightedPhase => check_period(period, self.total_steps),
            // a one-step hybrid has no temporal branch, so any period is fine
            EncodingScheme::HybridWeightedPhase if self.total_steps > 1 => {
                check_period(period, self.total_steps - 1)
            }
            _ => Ok(()),
        }
    }

    /// Encodes a batch `[B, C, H, W]` for the network.
    pub fn encode_batch(&self, images: &Tensor) -> Result<EncodedBatch> {
        self.validate()?;
        let s = images.shape();
        if s.len() != 4 {
            return Err(Error::Dimension {
                op: "encode_batch",
                lhs: s.to_vec(),
                rhs: vec![0, 0, 0, 0],
            });
        }
        check_pixels(images)?;
        let steps = self.total_steps;
        let temporal = |steps: usize, scheme: EncodingScheme| -> Result<Tensor> {
            // [B, C, H, W] -> [steps, B, C, H, W], encoding each image independently
            let (batch, inner) = (s[0], s[1] * s[2] * s[3]);
            let mut data = vec![0.0; steps * batch * inner];
            for b in 0..batch {
                let img = Tensor::new(s[1..].to_vec(), images.data()[b * inner..(b + 1) * inner].to_vec())?;
                let train = match scheme {
                    EncodingScheme::Ttfs => encode_ttfs(&img, steps)?,
                    _ => encode_weighted_phase(&img, steps, self.phase_period)?,
                };
                for t in 0..steps {
                    let dst = (t * batch + b) * inner;
                    data[dst..dst + inner].copy_from_slice(&train.data()[t * inner..(t + 1) * inner]);
                }
            }
            let mut shape = vec![steps];
            shape.extend_from_slice(s);
            Tensor::new(shape, data)
        };
        Ok(match self.scheme {
            EncodingScheme::Direct => EncodedBatch::Direct {
                images: images.clone(),
                steps,
            },
            EncodingScheme::Ttfs | EncodingScheme::WeightedPhase => EncodedBatch::Temporal {
                train: temporal(steps, self.scheme)?,
            },
            EncodingScheme::HybridTtfs | EncodingScheme::HybridWeightedPhase => {
                let scheme = if self.scheme == EncodingScheme::HybridTtfs {
                    EncodingScheme::Ttfs
                } else {
                    EncodingScheme::WeightedPhase
                };
                let train = if steps > 1 {
                    temporal(steps - 1, scheme)?
                } else {
                    let mut shape = vec![0];
                    shape.extend_from_slice(s);
                    Tensor::zeros(&shape)
                };
                EncodedBatch::Hybrid {
                    direct: images.clone(),
                    temporal: train,
                }
            }
        })
    }
}

fn check_period(period: usize, steps: usize) -> Result<()> {
    if !(1..=MAX_PHASE_PERIOD).contains(&period) {
        return Err(Error::config(format!(
            "phase period must be in 1..={MAX_PHASE_PERIOD}, got {period}"
        )));
    }
    if period > steps {
        return Err(Error::config(format!(
            "phase period {period} exceeds the {steps} weighted-phase steps"
        )));
    }
    Ok(())
}

fn check_pixels(image: &Tensor) -> Result<()> {
    match image.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        Some(v) => Err(Error::data(format!("pixel value {v} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// A batch ready for the network stem. Time-major layouts throughout.
#[derive(Clone, Debug, PartialEq)]
pub enum EncodedBatch {
    /// Images `[B, C, H, W]` shown identically at each of `steps` steps.
    Direct { images: Tensor, steps: usize },
    /// Spike trains `[T, B, C, H, W]`.
    Temporal { train: Tensor },
    /// One direct step followed by `T − 1` temporal steps; `temporal` is
    /// `[T − 1, B, C, H, W]` and may have zero steps.
    Hybrid { direct: Tensor, temporal: Tensor },
}

impl EncodedBatch {
    pub fn steps(&self) -> usize {
        match self {
            Self::Direct { steps, .. } => *steps,
            Self::Temporal { train } => train.shape()[0],
            Self::Hybrid { temporal, .. } => temporal.shape()[0] + 1,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            Self::Direct { images, .. } => images.shape()[0],
            Self::Temporal { train } => train.shape()[1],
            Self::Hybrid { direct, .. } => direct.shape()[0],
        }
    }
}

/// Repeats the image `steps` times along a new leading time axis.
pub fn encode_direct(image: &Tensor, steps: usize) -> Result<TimeTensor> {
    if steps < 1 {
        return Err(Error::config("direct encoding needs at least one step"));
    }
    check_pixels(image)?;
    Tensor::stack(&vec![image.clone(); steps])
}

/// 1-based firing step of a pixel under time-to-first-spike coding, `None` for a silent pixel.
///
/// `t* = clamp(ceil((1 − x)·T), 1, T)`, so brighter pixels fire earlier.
pub fn ttfs_step(x: f64, steps: usize) -> Option<usize> {
    if x <= 0.0 || steps == 0 {
        return None;
    }
    let t = ((1.0 - x) * steps as f64).ceil();
    Some((t as usize).clamp(1, steps))
}

pub fn encode_ttfs(image: &Tensor, steps: usize) -> Result<SpikeTrain> {
    check_pixels(image)?;
    let inner = image.numel();
    let mut data = vec![0.0; steps * inner];
    for (p, &x) in image.data().iter().enumerate() {
        if let Some(t) = ttfs_step(x, steps) {
            data[(t - 1) * inner + p] = 1.0;
        }
    }
    let mut shape = vec![steps];
    shape.extend_from_slice(image.shape());
    Tensor::new(shape, data)
}

/// Weight `2^-(1 + ((t − 1) mod K))` of 1-based step `t`.
pub fn phase_weight(t: usize, period: usize) -> f64 {
    let k = (t - 1) % period;
    0.5f64.powi(k as i32 + 1)
}

/// `K`-bit truncation of `x ∈ [0, 1]`; `x = 1` saturates to all ones.
fn phase_code(x: f64, period: usize) -> u64 {
    let full = 1u64 << period;
    ((x * full as f64).floor() as u64).min(full - 1)
}

/// Spike `t` carries bit `((t − 1) mod K) + 1` of the binary expansion of the pixel.
pub fn encode_weighted_phase(image: &Tensor, steps: usize, period: usize) -> Result<SpikeTrain> {
    check_period(period, steps)?;
    check_pixels(image)?;
    let inner = image.numel();
    let mut data = vec![0.0; steps * inner];
    for (p, &x) in image.data().iter().enumerate() {
        let code = phase_code(x, period);
        for t in 0..steps {
            let bit = t % period;
            if (code >> (period - 1 - bit)) & 1 == 1 {
                data[t * inner + p] = 1.0;
            }
        }
    }
    let mut shape = vec![steps];
    shape.extend_from_slice(image.shape());
    Tensor::new(shape, data)
}

/// `Σ_{t=1..K} w_t·S_t` over the first period.
pub fn decode_weighted_phase(train: &SpikeTrain, period: usize) -> Result<Tensor> {
    let steps = train.shape().first().copied().unwrap_or(0);
    check_period(period, steps)?;
    let inner = train.numel() / steps;
    let mut out = vec![0.0; inner];
    for t in 0..period {
        let w = phase_weight(t + 1, period);
        for (o, &s) in out.iter_mut().zip(&train.data()[t * inner..(t + 1) * inner]) {
            *o += w * s;
        }
    }
    Tensor::new(train.shape()[1..].to_vec(), out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TemporalScheme {
    Ttfs,
    WeightedPhase,
}

/// Direct image plus the temporal train that follows it.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridInput {
    pub direct_image: Tensor,
    /// `[T − 1, C, H, W]`; zero steps when `T = 1`.
    pub temporal_train: SpikeTrain,
}

/// One direct step followed by `T − 1` temporal steps.
pub fn encode_hybrid(image: &Tensor, steps: usize, scheme: TemporalScheme, period: usize) -> Result<HybridInput> {
    if steps < 1 {
        return Err(Error::config("hybrid encoding needs at least one step"));
    }
    check_pixels(image)?;
    let rest = steps - 1;
    let temporal_train = if rest == 0 {
        let mut shape = vec![0];
        shape.extend_from_slice(image.shape());
        Tensor::zeros(&shape)
    } else {
        match scheme {
            TemporalScheme::Ttfs => encode_ttfs(image, rest)?,
            TemporalScheme::WeightedPhase => encode_weighted_phase(image, rest, period)?,
        }
    };
    Ok(HybridInput {
        direct_image: image.clone(),
        temporal_train,
    })
}
