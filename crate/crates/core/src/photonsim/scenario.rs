use serde::{Deserialize, Serialize};

use super::arrivals::{arrivals_from_steps, DEFAULT_INTENSITY_CEILING};
use super::field::{check_step, FieldSampler};
use super::{
    apply_detector, delay_events, derive_seed, split_events, DetectorSpec, EventStream, Origin, ThermalArrivals,
};
use crate::error::{Error, Result};
use crate::quantities::{delay_from_range, Medium, Meters, Seconds, SourceSpec, Tick};

/// How the latent thermal intensity is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldModel {
    /// Event-driven thinning against `ceiling` times the mean rate.
    Continuous { ceiling: f64 },
    /// Field sampled on the `field_step` grid with per-step Poisson counts.
    Stepped,
}

impl Default for FieldModel {
    fn default() -> Self {
        FieldModel::Continuous {
            ceiling: DEFAULT_INTENSITY_CEILING,
        }
    }
}

/// Complete description of one simulated ranging acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub source: SourceSpec,
    pub distance: Meters,
    pub medium: Medium,
    /// Fraction of the source sent to the reference detector.
    pub split_ref: f64,
    /// Fraction of the source sent into the probe beam.
    pub split_probe: f64,
    /// Probe-arm transmission from the splitter to the target and back.
    pub probe_round_trip_transmission: f64,
    pub ambient_rate_probe: f64,
    pub ambient_rate_ref: f64,
    pub detector_ref: DetectorSpec,
    pub detector_probe: DetectorSpec,
    pub duration: Seconds,
    pub seed: u64,
    /// Grid spacing of the stepped field model.
    pub field_step: Seconds,
    pub field_model: FieldModel,
}

impl ScenarioConfig {
    /// Defaults: 518 nm source, 92 % / 4 % split, silicon APDs, `Δt = τc/100`.
    pub fn new(source: SourceSpec, distance: Meters, duration: Seconds, seed: u64) -> Self {
        ScenarioConfig {
            field_step: Seconds(source.coherence_time.0 / 100.0),
            source,
            distance,
            medium: Medium::vacuum(),
            split_ref: 0.04,
            split_probe: 0.92,
            probe_round_trip_transmission: 1.0,
            ambient_rate_probe: 0.0,
            ambient_rate_ref: 0.0,
            detector_ref: DetectorSpec::silicon_apd(),
            detector_probe: DetectorSpec::silicon_apd(),
            duration,
            seed,
            field_model: FieldModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        for (name, f) in [
            ("split_ref", self.split_ref),
            ("split_probe", self.split_probe),
            ("probe_round_trip_transmission", self.probe_round_trip_transmission),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} = {f} outside [0, 1]")));
            }
        }
        if self.split_ref + self.split_probe > 1.0 + 1e-12 {
            return Err(Error::Config("split_ref + split_probe exceeds 1".into()));
        }
        if !(self.ambient_rate_probe >= 0.0) || !(self.ambient_rate_ref >= 0.0) {
            return Err(Error::Config("ambient rates must be >= 0".into()));
        }
        if !(self.duration.0 >= 0.0) || !self.duration.0.is_finite() {
            return Err(Error::Config("duration must be finite and >= 0".into()));
        }
        if !(self.distance.0 >= 0.0) {
            return Err(Error::Config("distance must be >= 0".into()));
        }
        if let FieldModel::Continuous { ceiling } = self.field_model {
            if !(ceiling >= 1.0) {
                return Err(Error::Config("intensity ceiling must be >= 1".into()));
            }
        }
        check_step(self.source.coherence_time.0, self.field_step.0)?;
        self.detector_ref.validate()?;
        self.detector_probe.validate()?;
        Ok(())
    }

    /// Round-trip delay of the probe arm, `2dn/c`.
    pub fn delay(&self) -> Seconds {
        delay_from_range(self.distance, &self.medium)
    }

    /// Mean signal photon rates reaching the reference and probe detector outputs
    /// (after efficiency, before dead time).
    pub fn signal_rates(&self) -> (f64, f64) {
        let r = self.source.photon_rate.0;
        (
            r * self.split_ref * self.detector_ref.efficiency,
            r * self.split_probe * self.probe_round_trip_transmission * self.detector_probe.efficiency,
        )
    }

    /// Probe ambient rate that makes signal a fraction `fraction` of all probe events.
    pub fn ambient_for_probe_signal_fraction(&self, fraction: f64) -> Result<f64> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Config(format!("signal fraction {fraction} outside (0, 1]")));
        }
        let (_, probe) = self.signal_rates();
        let ambient = probe * (1.0 - fraction) / fraction - self.detector_probe.dark_rate;
        if ambient < 0.0 {
            return Err(Error::Config(format!(
                "dark counts alone push the probe signal fraction below {fraction}"
            )));
        }
        Ok(ambient)
    }

    pub fn truth(&self) -> Result<ScenarioTruth> {
        let (sig_ref, sig_probe) = self.signal_rates();
        let reference = ChannelTruth::new(sig_ref, self.ambient_rate_ref + self.detector_ref.dark_rate);
        let probe = ChannelTruth::new(sig_probe, self.ambient_rate_probe + self.detector_probe.dark_rate);
        let delay = self.delay();
        Ok(ScenarioTruth {
            seed: self.seed,
            duration_s: self.duration.0,
            distance_m: self.distance.0,
            refractive_index: self.medium.refractive_index,
            delay_s: delay.0,
            delay_ticks: delay.to_ticks()?.0,
            coherence_time_s: self.source.coherence_time.0,
            linewidth_hz: self.source.linewidth.0,
            source_rate_hz: self.source.photon_rate.0,
            expected_amplitude: reference.signal_fraction * probe.signal_fraction,
            reference,
            probe,
        })
    }
}

/// Expected rates for one detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelTruth {
    pub signal_rate_hz: f64,
    pub background_rate_hz: f64,
    pub signal_fraction: f64,
}

impl ChannelTruth {
    fn new(signal: f64, background: f64) -> Self {
        let total = signal + background;
        ChannelTruth {
            signal_rate_hz: signal,
            background_rate_hz: background,
            signal_fraction: if total > 0.0 { signal / total } else { 0.0 },
        }
    }
}

/// Ground truth of a simulated acquisition.
///
/// `expected_amplitude` is the bunching excess for point-like bins, reduced
/// only by uncorrelated background in either channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub seed: u64,
    pub duration_s: f64,
    pub distance_m: f64,
    pub refractive_index: f64,
    pub delay_s: f64,
    pub delay_ticks: i64,
    pub coherence_time_s: f64,
    pub linewidth_hz: f64,
    pub source_rate_hz: f64,
    pub expected_amplitude: f64,
    pub reference: ChannelTruth,
    pub probe: ChannelTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub reference: EventStream,
    pub probe: EventStream,
    pub truth: ScenarioTruth,
}

pub const REFERENCE_CHANNEL: u8 = 0;
pub const PROBE_CHANNEL: u8 = 1;

/// Simulates the reference and probe detector streams of a ranging setup.
///
/// All Bernoulli losses on the way to each detector (splitter, probe round
/// trip, detector efficiency) are applied as a single routing step right
/// after emission, which is equal in distribution to applying them one after
/// another and avoids sampling photons that are certain to be lost.
pub fn simulate_ranging_scenario(config: &ScenarioConfig) -> Result<ScenarioOutput> {
    config.validate()?;
    let truth = config.truth()?;
    let (p_ref, p_probe) = (
        config.split_ref * config.detector_ref.efficiency,
        config.split_probe * config.probe_round_trip_transmission * config.detector_probe.efficiency,
    );
    let surviving = p_ref + p_probe;
    let rate = config.source.photon_rate.0 * surviving;
    let tc = config.source.coherence_time.0;
    let emission_seed = derive_seed(config.seed, 1);

    let source = match config.field_model {
        FieldModel::Continuous { ceiling } => ThermalArrivals {
            coherence_time: tc,
            mean_rate: rate,
            ceiling,
        }
        .generate(config.duration, emission_seed)?,
        FieldModel::Stepped => {
            let step = config.field_step.0;
            let n_steps = (config.duration.0 / step).ceil() as usize;
            let field = FieldSampler::new(tc, derive_seed(config.seed, 0))?.steps(step).take(n_steps);
            let end = config.duration.to_ticks()?;
            let mut times = arrivals_from_steps(field, step, rate, emission_seed)?;
            times.retain(|&t| t <= end);
            EventStream::from_parts(0, times, config.duration, Origin::Simulated)
        }
    };

    let (frac_probe, frac_ref) = if surviving > 0.0 {
        (p_probe / surviving, p_ref / surviving)
    } else {
        (0.0, 0.0)
    };
    let mut arms = split_events(&source, &[frac_probe, frac_ref], derive_seed(config.seed, 2))?;
    let mut ref_arm = arms.pop().expect("two arms");
    let probe_arm = arms.pop().expect("two arms");
    ref_arm.channel = REFERENCE_CHANNEL;
    let mut probe_arm = delay_events(&probe_arm, config.delay())?;
    probe_arm.channel = PROBE_CHANNEL;

    // efficiency was folded into the routing above
    let ref_det = DetectorSpec {
        efficiency: 1.0,
        ..config.detector_ref
    };
    let probe_det = DetectorSpec {
        efficiency: 1.0,
        ..config.detector_probe
    };
    let reference = apply_detector(
        &ref_arm,
        &ref_det,
        config.ambient_rate_ref,
        config.duration,
        derive_seed(config.seed, 3),
    )?;
    let probe = apply_detector(
        &probe_arm,
        &probe_det,
        config.ambient_rate_probe,
        config.duration,
        derive_seed(config.seed, 4),
    )?;
    Ok(ScenarioOutput {
        reference,
        probe,
        truth,
    })
}

impl ScenarioOutput {
    /// Streams ordered by channel id.
    pub fn streams(&self) -> [&EventStream; 2] {
        [&self.reference, &self.probe]
    }

    pub fn delay_ticks(&self) -> Tick {
        Tick(self.truth.delay_ticks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantities::Rate;

    fn config(seed: u64) -> ScenarioConfig {
        let source = SourceSpec::new(Meters(518e-9), Seconds(1e-9), Rate(1e7)).unwrap();
        ScenarioConfig::new(source, Meters(0.5), Seconds(0.01), seed)
    }

    #[test]
    fn deterministic_streams() {
        let a = simulate_ranging_scenario(&config(5)).unwrap();
        let b = simulate_ranging_scenario(&config(5)).unwrap();
        let c = simulate_ranging_scenario(&config(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.reference, c.reference);
    }

    #[test]
    fn validation() {
        let mut c = config(1);
        c.split_ref = 0.5;
        c.split_probe = 0.6;
        assert!(simulate_ranging_scenario(&c).is_err());
        let mut c = config(1);
        c.field_step = Seconds(1e-9 / 10.0);
        assert!(c.validate().is_err());
        let mut c = config(1);
        c.probe_round_trip_transmission = 1.1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_duration_is_empty() {
        let mut c = config(1);
        c.duration = Seconds(0.0);
        let out = simulate_ranging_scenario(&c).unwrap();
        assert!(out.reference.is_empty() && out.probe.is_empty());
    }

    #[test]
    fn rates_follow_routing() {
        let c = config(2);
        let out = simulate_ranging_scenario(&c).unwrap();
        let (r_ref, r_probe) = c.signal_rates();
        // dead time and dark counts shift the rates by a few percent at most
        for (s, r) in [(&out.reference, r_ref), (&out.probe, r_probe)] {
            let expected = c.detector_ref.dead_time_output_rate(r);
            assert!((s.rate() - expected).abs() / expected < 0.05, "{} vs {expected}", s.rate());
        }
        assert_eq!(out.reference.channel, REFERENCE_CHANNEL);
        assert_eq!(out.probe.channel, PROBE_CHANNEL);
        assert_eq!(out.truth.delay_ticks, 3336);
    }

    #[test]
    fn signal_fraction_tuning() {
        let c = config(3);
        let ambient = c.ambient_for_probe_signal_fraction(0.62).unwrap();
        let tuned = ScenarioConfig {
            ambient_rate_probe: ambient,
            ..c
        };
        let truth = tuned.truth().unwrap();
        assert!((truth.probe.signal_fraction - 0.62).abs() < 1e-12);
    }
}
