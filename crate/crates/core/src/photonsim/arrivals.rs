use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};

use super::field::FieldSampler;
use super::{rng_from_seed, EventStream, IntensityTrace, Origin};
use crate::error::{Error, Result};
use crate::quantities::{Seconds, Tick, TICKS_PER_SECOND};

const PS: f64 = TICKS_PER_SECOND as f64;

/// Default dominating intensity for [`ThermalArrivals`].
///
/// The normalized thermal intensity is exponentially distributed, so it
/// exceeds this bound a fraction `e^-12 ≈ 6e-6` of the time.
pub const DEFAULT_INTENSITY_CEILING: f64 = 12.0;

#[inline]
fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean < 30.0 {
        // sequential inversion, one uniform per draw
        let u: f64 = rng.random();
        let mut p = (-mean).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        k
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
    }
}

/// Doubly stochastic Poisson sampling over a sequence of step intensities.
///
/// In step `k` a Poisson number of events with mean `rate·I_k·step` is placed
/// uniformly at random inside `[k·step, (k+1)·step)`.
pub(crate) fn arrivals_from_steps(
    samples: impl Iterator<Item = f64>,
    step: f64,
    mean_rate: f64,
    seed: u64,
) -> Result<Vec<Tick>> {
    if !(mean_rate >= 0.0) {
        return Err(Error::Precondition(format!("mean rate must be >= 0, got {mean_rate}")));
    }
    let mut times = Vec::new();
    if mean_rate == 0.0 {
        return Ok(times);
    }
    let mut rng = rng_from_seed(seed);
    let step_ps = step * PS;
    let scale = mean_rate * step;
    let mut scratch = Vec::new();
    for (k, intensity) in samples.enumerate() {
        let n = poisson_count(&mut rng, scale * intensity);
        if n == 0 {
            continue;
        }
        scratch.clear();
        for _ in 0..n {
            let v: f64 = rng.random();
            scratch.push(Tick(((k as f64 + v) * step_ps).floor() as i64));
        }
        scratch.sort_unstable();
        times.extend_from_slice(&scratch);
    }
    Ok(times)
}

/// Events of a Poisson process whose rate is `mean_rate` times the trace intensity.
pub fn generate_arrivals(trace: &IntensityTrace, mean_rate: f64, seed: u64) -> Result<EventStream> {
    let times = arrivals_from_steps(trace.samples.iter().copied(), trace.step, mean_rate, seed)?;
    Ok(EventStream::from_parts(0, times, Seconds(trace.duration()), Origin::Simulated))
}

/// Homogeneous Poisson events at `rate` over `[0, duration]`.
pub fn generate_poisson(rate: f64, duration: Seconds, seed: u64) -> Result<EventStream> {
    if !(rate >= 0.0) || !(duration.0 >= 0.0) {
        return Err(Error::Precondition("rate and duration must be >= 0".into()));
    }
    let end = duration.0 * PS;
    let mut times = Vec::with_capacity((rate * duration.0 * 1.01) as usize + 16);
    if rate > 0.0 {
        let mut rng = rng_from_seed(seed);
        let per_ps = rate / PS;
        let mut t = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            t += gap / per_ps;
            if t > end {
                break;
            }
            times.push(Tick(t as i64));
        }
    }
    Ok(EventStream::from_parts(0, times, duration, Origin::Simulated))
}

/// Continuous-time sampler for thermal photon arrivals.
///
/// Candidates are drawn from a homogeneous process at `ceiling` times the mean
/// rate; at each candidate the field is advanced exactly by the elapsed gap
/// and the candidate is kept with probability `I/ceiling`. No time grid is
/// involved, so the cost scales with the event count rather than with
/// `duration/τc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalArrivals {
    pub coherence_time: f64,
    pub mean_rate: f64,
    pub ceiling: f64,
}

impl ThermalArrivals {
    pub fn new(coherence_time: f64, mean_rate: f64) -> Self {
        ThermalArrivals {
            coherence_time,
            mean_rate,
            ceiling: DEFAULT_INTENSITY_CEILING,
        }
    }

    pub fn generate(&self, duration: Seconds, seed: u64) -> Result<EventStream> {
        if !(self.mean_rate >= 0.0) || !(duration.0 >= 0.0) {
            return Err(Error::Precondition("rate and duration must be >= 0".into()));
        }
        if !(self.ceiling >= 1.0) {
            return Err(Error::Config("intensity ceiling must be >= 1".into()));
        }
        let mut field = FieldSampler::new(self.coherence_time, seed)?;
        let mut times = Vec::with_capacity((self.mean_rate * duration.0 * 1.02) as usize + 16);
        if self.mean_rate > 0.0 {
            let end = duration.0 * PS;
            let candidates_per_ps = self.mean_rate * self.ceiling / PS;
            let mut t = 0.0;
            loop {
                let gap = field.rng().sample::<f64, _>(Exp1) / candidates_per_ps;
                t += gap;
                if t > end {
                    break;
                }
                field.advance(gap / PS);
                let u: f64 = field.rng().random();
                if u * self.ceiling < field.intensity() {
                    times.push(Tick(t.round() as i64));
                }
            }
        }
        // rounding can push the last event one tick past a fractional end
        let end_tick = duration.to_ticks()?;
        while times.last().is_some_and(|&t| t > end_tick) {
            times.pop();
        }
        Ok(EventStream::from_parts(0, times, duration, Origin::Simulated))
    }
}
