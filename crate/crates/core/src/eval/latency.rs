//! Latency between a reference motion trace and a tracked one: the test
//! trace is re-centred to the reference amplitude, then shifted in time
//! until the mean squared difference is smallest.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped scalar displacement along a known axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

impl MotionTrace {
    pub fn new(t: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if t.len() != x.len() || t.len() < 2 {
            return Err(Error::InvalidArgument("trace needs >= 2 samples with matching lengths".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("timestamps must be strictly increasing".into()));
        }
        Ok(Self { t, x })
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    fn median_step(&self) -> f64 {
        let mut d: Vec<f64> = self.t.windows(2).map(|w| w[1] - w[0]).collect();
        d.sort_by(f64::total_cmp);
        d[d.len() / 2]
    }

    /// Linear interpolation; `None` outside the sampled interval.
    pub fn at(&self, time: f64) -> Option<f64> {
        let (t0, t1) = (self.t[0], self.t[self.t.len() - 1]);
        if time < t0 || time > t1 {
            return None;
        }
        let k = self.t.partition_point(|&s| s <= time).clamp(1, self.t.len() - 1);
        let (ta, tb) = (self.t[k - 1], self.t[k]);
        let f = (time - ta) / (tb - ta);
        Some(self.x[k - 1] + f * (self.x[k] - self.x[k - 1]))
    }

    fn extent(&self) -> f64 {
        let max = self.x.iter().copied().fold(f64::MIN, f64::max);
        let min = self.x.iter().copied().fold(f64::MAX, f64::min);
        max + min
    }
}

/// Mean squared difference between the reference and the adjusted test
/// trace read `delay` seconds later.
fn mismatch(reference: &MotionTrace, adjusted: &MotionTrace, delay: f64) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (&t, &x) in reference.t.iter().zip(&reference.x) {
        if let Some(h) = adjusted.at(t + delay) {
            sum += (x - h) * (x - h);
            n += 1;
        }
    }
    (n >= 2).then(|| sum / n as f64)
}

/// Delay (s) by which `test` lags `reference`, searched over `[0, t_mov)`
/// on a grid at the finer of the two sampling periods and refined by a
/// parabola through the best grid point and its neighbours.
pub fn estimate_latency(reference: &MotionTrace, test: &MotionTrace, t_mov: f64) -> Result<f64> {
    if !(t_mov > 0.0) {
        return Err(Error::InvalidArgument("search window must be positive".into()));
    }
    if t_mov >= reference.duration().min(test.duration()) {
        return Err(Error::InvalidArgument(format!(
            "search window {t_mov} s is not shorter than the traces"
        )));
    }
    let shift = (reference.extent() - test.extent()) / 2.0;
    let adjusted = MotionTrace { t: test.t.clone(), x: test.x.iter().map(|h| h + shift).collect() };
    let step = reference.median_step().min(test.median_step());
    let count = (t_mov / step).ceil() as usize;
    let costs: Vec<f64> = (0..count)
        .map(|k| mismatch(reference, &adjusted, k as f64 * step).unwrap_or(f64::INFINITY))
        .collect();
    let best = (0..count)
        .min_by(|&a, &b| costs[a].total_cmp(&costs[b]))
        .ok_or_else(|| Error::InvalidArgument("empty search window".into()))?;
    if !costs[best].is_finite() {
        return Err(Error::InvalidArgument("traces do not overlap".into()));
    }
    let mut delay = best as f64 * step;
    if best > 0 && best + 1 < count {
        let (a, b, c) = (costs[best - 1], costs[best], costs[best + 1]);
        let denom = a - 2.0 * b + c;
        if denom > 0.0 {
            delay += step * (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
        }
    }
    Ok(delay)
}

/// Sinusoidal back-and-forth motion sampled at `rate` Hz, delayed by
/// `delay` s, shifted by `offset` and with optional white noise.
pub fn synthetic_trace(
    period: f64,
    amplitude: f64,
    rate: f64,
    duration: f64,
    delay: f64,
    offset: f64,
    noise: f64,
    seed: u64,
) -> MotionTrace {
    let n = (duration * rate).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let t: Vec<f64> = (0..n).map(|i| i as f64 / rate).collect();
    let x = t
        .iter()
        .map(|&ti| {
            let phase = 2.0 * std::f64::consts::PI * (ti - delay) / period;
            offset + amplitude * phase.sin() + if noise > 0.0 { gauss.sample(&mut rng) } else { 0.0 }
        })
        .collect();
    MotionTrace { t, x }
}
