use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{derive_seed, generate_poisson, merge_sorted, rng_from_seed, thin_events, EventStream};
use crate::error::{Error, Result};
use crate::quantities::{Seconds, Tick};

/// FWHM of a Gaussian in units of its standard deviation, `2·sqrt(2 ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Imperfections of a single-photon detection chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    /// Detection probability per incident photon.
    pub efficiency: f64,
    /// Timing jitter, full width at half maximum, seconds.
    pub jitter_fwhm: f64,
    /// Non-paralyzable dead time, seconds.
    pub dead_time: f64,
    /// Dark count rate, events/s.
    pub dark_rate: f64,
    /// Count rate at which the detector saturates, events/s. Informational;
    /// the pipeline models saturation only through the dead time.
    pub saturation_rate: f64,
}

impl DetectorSpec {
    /// Perfect detector: unit efficiency, no jitter, no dead time, no dark counts.
    pub fn ideal() -> Self {
        DetectorSpec {
            efficiency: 1.0,
            jitter_fwhm: 0.0,
            dead_time: 0.0,
            dark_rate: 0.0,
            saturation_rate: 1e7,
        }
    }

    /// Actively quenched silicon avalanche photodiode.
    pub fn silicon_apd() -> Self {
        DetectorSpec {
            efficiency: 0.5,
            jitter_fwhm: 40e-12,
            dead_time: 50e-9,
            dark_rate: 100.0,
            saturation_rate: 1e7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Config(format!("efficiency {} outside [0, 1]", self.efficiency)));
        }
        for (name, v) in [
            ("jitter_fwhm", self.jitter_fwhm),
            ("dead_time", self.dead_time),
            ("dark_rate", self.dark_rate),
            ("saturation_rate", self.saturation_rate),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn jitter_sigma(&self) -> f64 {
        self.jitter_fwhm / FWHM_PER_SIGMA
    }

    /// Output rate of a non-paralyzable detector for a Poisson input rate.
    pub fn dead_time_output_rate(&self, input_rate: f64) -> f64 {
        input_rate / (1.0 + input_rate * self.dead_time)
    }
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self::silicon_apd()
    }
}

/// Keeps an event only if it arrives at least `dead_time` after the last kept one.
fn apply_dead_time(times: &[Tick], dead_time: Tick) -> Vec<Tick> {
    if dead_time.0 <= 0 {
        return times.to_vec();
    }
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<i64> = None;
    for &t in times {
        match last {
            Some(l) if t.0 - l < dead_time.0 => {}
            _ => {
                out.push(t);
                last = Some(t.0);
            }
        }
    }
    out
}

/// Passes photon arrivals through a detector.
///
/// Stages, in order: efficiency thinning, merge of ambient and dark counts,
/// non-paralyzable dead time, Gaussian timing jitter, then sort and clip to
/// `[0, duration]`.
pub fn apply_detector(
    stream: &EventStream,
    spec: &DetectorSpec,
    ambient_rate: f64,
    duration: Seconds,
    seed: u64,
) -> Result<EventStream> {
    spec.validate()?;
    if !(ambient_rate >= 0.0) {
        return Err(Error::Config(format!("ambient rate must be >= 0, got {ambient_rate}")));
    }
    let end = duration.to_ticks()?;
    let detected = thin_events(stream, spec.efficiency, derive_seed(seed, 0))?;
    let background_rate = ambient_rate + spec.dark_rate;
    let mut times = if background_rate > 0.0 {
        let background = generate_poisson(background_rate, duration, derive_seed(seed, 1))?;
        merge_sorted(detected.times(), background.times())
    } else {
        detected.into_times()
    };
    times = apply_dead_time(&times, Seconds(spec.dead_time).to_ticks()?);

    let sigma_ps = spec.jitter_sigma() * 1e12;
    if sigma_ps > 0.0 {
        let mut rng = rng_from_seed(derive_seed(seed, 2));
        for t in times.iter_mut() {
            let dt: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_ps;
            t.0 = t.0.saturating_add(dt.round() as i64);
        }
        times.sort();
    }
    let lo = times.partition_point(|&t| t < Tick::ZERO);
    let hi = times.partition_point(|&t| t <= end);
    let times = times[lo..hi].to_vec();
    Ok(EventStream::from_parts(stream.channel, times, duration, stream.origin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonsim::Origin;

    fn uniform(rate: f64, duration: f64, seed: u64) -> EventStream {
        generate_poisson(rate, Seconds(duration), seed).unwrap()
    }

    #[test]
    fn ideal_is_identity() {
        let s = uniform(1e6, 0.01, 1);
        let out = apply_detector(&s, &DetectorSpec::ideal(), 0.0, Seconds(0.01), 2).unwrap();
        assert_eq!(out.times(), s.times());
    }

    #[test]
    fn half_efficiency() {
        let s = uniform(1e6, 1.0, 3);
        let spec = DetectorSpec {
            efficiency: 0.5,
            ..DetectorSpec::ideal()
        };
        let out = apply_detector(&s, &spec, 0.0, Seconds(1.0), 4).unwrap();
        let n = s.len() as f64;
        assert!((out.len() as f64 - 0.5 * n).abs() < 5.0 * (n * 0.25).sqrt());
    }

    #[test]
    fn dead_time_saturation() {
        // r_out = r_in / (1 + r_in τ) for a non-paralyzable detector
        let s = uniform(1e8, 0.01, 5);
        let spec = DetectorSpec {
            dead_time: 50e-9,
            ..DetectorSpec::ideal()
        };
        let out = apply_detector(&s, &spec, 0.0, Seconds(0.01), 6).unwrap();
        let expected = spec.dead_time_output_rate(1e8);
        assert!((expected - 1.67e7).abs() / 1.67e7 < 0.01);
        assert!((out.rate() - expected).abs() / expected < 0.03, "{}", out.rate());
        assert!(out.times().windows(2).all(|w| w[1].0 - w[0].0 >= 50_000));
    }

    #[test]
    fn background_merge_and_clip() {
        let empty = EventStream::empty(1, Seconds(1.0));
        let spec = DetectorSpec {
            dark_rate: 100.0,
            ..DetectorSpec::ideal()
        };
        let out = apply_detector(&empty, &spec, 9_900.0, Seconds(1.0), 7).unwrap();
        assert!((out.len() as f64 - 1e4).abs() < 500.0);
        assert_eq!(out.channel, 1);
    }

    #[test]
    fn jitter_width() {
        let times: Vec<Tick> = (1..=100_000).map(|k| Tick(k * 1_000_000)).collect();
        let s = EventStream::new(0, times.clone(), Seconds(1e-6 * 100_001.0), Origin::Simulated).unwrap();
        let spec = DetectorSpec {
            jitter_fwhm: 40e-12,
            ..DetectorSpec::ideal()
        };
        let out = apply_detector(&s, &spec, 0.0, s.duration(), 8).unwrap();
        let var = out
            .times()
            .iter()
            .zip(&times)
            .map(|(a, b)| ((a.0 - b.0) as f64).powi(2))
            .sum::<f64>()
            / times.len() as f64;
        let sigma = 40.0 / FWHM_PER_SIGMA;
        assert!((var.sqrt() - sigma).abs() / sigma < 0.02, "{}", var.sqrt());
    }

    #[test]
    fn invalid_spec() {
        let s = EventStream::empty(0, Seconds(1.0));
        let bad = DetectorSpec {
            efficiency: 1.5,
            ..DetectorSpec::ideal()
        };
        assert!(apply_detector(&s, &bad, 0.0, Seconds(1.0), 0).is_err());
    }
}
