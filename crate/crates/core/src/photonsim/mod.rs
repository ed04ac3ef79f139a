//! Synthetic photodetection streams for a thermal-light ranging setup.
//!
//! The source is modelled as a doubly stochastic Poisson process whose rate
//! follows the intensity of a Gaussian (chaotic) field. Events are routed
//! through beamsplitters and losses by Bernoulli thinning, the probe arm is
//! delayed by the round trip to the target, and each arm passes through a
//! detector model (efficiency, background, dead time, jitter).

mod arrivals;
mod detector;
mod field;
mod scenario;

pub use arrivals::{generate_arrivals, generate_poisson, ThermalArrivals, DEFAULT_INTENSITY_CEILING};
pub use detector::{apply_detector, DetectorSpec};
pub use field::{simulate_field_intensity, FieldSampler, IntensityTrace};
pub use scenario::{
    simulate_ranging_scenario, ChannelTruth, FieldModel, ScenarioConfig, ScenarioOutput, ScenarioTruth,
    PROBE_CHANNEL, REFERENCE_CHANNEL,
};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantities::{Seconds, Tick};

/// Where an [`EventStream`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Simulated,
    Loaded,
}

/// Sorted detection timestamps of a single channel over `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub channel: u8,
    times: Vec<Tick>,
    duration: Seconds,
    pub origin: Origin,
}

impl EventStream {
    /// Builds a stream, checking ordering and that every time lies in `[0, duration]`.
    pub fn new(channel: u8, times: Vec<Tick>, duration: Seconds, origin: Origin) -> Result<Self> {
        if !(duration.0 >= 0.0) {
            return Err(Error::Precondition(format!("negative duration {}", duration.0)));
        }
        let end = duration.to_ticks()?;
        if let Some(i) = times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Precondition(format!(
                "channel {channel}: time regression at index {}",
                i + 1
            )));
        }
        if let (Some(first), Some(last)) = (times.first(), times.last()) {
            if *first < Tick::ZERO || *last > end {
                return Err(Error::Precondition(format!(
                    "channel {channel}: times outside [0, {}]",
                    duration.0
                )));
            }
        }
        Ok(EventStream {
            channel,
            times,
            duration,
            origin,
        })
    }

    pub(crate) fn from_parts(channel: u8, times: Vec<Tick>, duration: Seconds, origin: Origin) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        EventStream {
            channel,
            times,
            duration,
            origin,
        }
    }

    pub fn empty(channel: u8, duration: Seconds) -> Self {
        Self::from_parts(channel, Vec::new(), duration, Origin::Simulated)
    }

    #[inline]
    pub fn times(&self) -> &[Tick] {
        &self.times
    }

    pub fn into_times(self) -> Vec<Tick> {
        self.times
    }

    #[inline]
    pub fn duration(&self) -> Seconds {
        self.duration
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean event rate over the acquisition, events/s.
    pub fn rate(&self) -> f64 {
        if self.duration.0 > 0.0 {
            self.times.len() as f64 / self.duration.0
        } else {
            0.0
        }
    }
}

/// Derives independent sub-seeds from a scenario seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator behind every simulated draw.
pub(crate) type SimRng = Xoshiro256PlusPlus;

pub(crate) fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Routes every event independently to output `i` with probability `fractions[i]`.
///
/// Events not routed anywhere are discarded.
pub fn split_events(stream: &EventStream, fractions: &[f64], seed: u64) -> Result<Vec<EventStream>> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config("split fractions must lie in [0, 1]".into()));
    }
    let total: f64 = fractions.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::Config(format!("split fractions sum to {total} > 1")));
    }
    let mut cumulative = Vec::with_capacity(fractions.len());
    let mut acc = 0.0;
    for f in fractions {
        acc += f;
        cumulative.push(acc);
    }
    let mut outputs: Vec<Vec<Tick>> = fractions
        .iter()
        .map(|f| Vec::with_capacity((stream.len() as f64 * f * 1.01) as usize + 16))
        .collect();
    let mut rng = rng_from_seed(seed);
    for &t in stream.times() {
        let u: f64 = rng.random();
        if let Some(i) = cumulative.iter().position(|&c| u < c) {
            outputs[i].push(t);
        }
    }
    Ok(outputs
        .into_iter()
        .map(|times| EventStream::from_parts(stream.channel, times, stream.duration, stream.origin))
        .collect())
}

/// Bernoulli thinning: keeps each event with probability `keep`.
pub fn thin_events(stream: &EventStream, keep: f64, seed: u64) -> Result<EventStream> {
    if keep >= 1.0 {
        return Ok(stream.clone());
    }
    Ok(split_events(stream, &[keep], seed)?.pop().expect("one output"))
}

/// Shifts every timestamp by the delay rounded to the nearest tick.
///
/// The stream duration grows by the same amount so every event stays inside it.
pub fn delay_events(stream: &EventStream, delay: Seconds) -> Result<EventStream> {
    if !(delay.0 >= 0.0) {
        return Err(Error::Precondition(format!("delay must be >= 0, got {}", delay.0)));
    }
    let shift = delay.to_ticks()?;
    let times = stream
        .times()
        .iter()
        .map(|t| t.checked_add(shift))
        .collect::<Result<Vec<_>>>()?;
    let duration = Seconds(stream.duration.0 + shift.to_seconds());
    Ok(EventStream::from_parts(stream.channel, times, duration, stream.origin))
}

/// Merges two sorted tick sequences.
pub(crate) fn merge_sorted(a: &[Tick], b: &[Tick]) -> Vec<Tick> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            out.push(a[i]);
            i += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
