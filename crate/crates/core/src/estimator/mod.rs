//! Bunching-peak fitting, time-of-flight ranging and signal-to-noise analysis.

mod fit;
mod guess;
pub mod linalg;
mod model;

pub use fit::{fit_g2, FitOptions};
pub use guess::{initial_guess, MIN_POINTS};
pub use model::{bin_attenuation, bin_average, bin_average_with_gradient, kernel_bin_average, N_PARAMS};

use serde::{Deserialize, Serialize};

use crate::correlator::G2Series;
use crate::error::{Error, Result};
use crate::quantities::{range_from_delay, BunchingPeak, Medium, Meters, Seconds};
use crate::scalar::Real;

/// Fitted bunching peak. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<F = f64> {
    pub baseline: F,
    /// Peak excess at zero bin width; the squared visibility `V²`.
    pub amplitude: F,
    pub delay: F,
    pub coherence_time: F,
    pub baseline_sigma: F,
    pub amplitude_sigma: F,
    pub delay_sigma: F,
    pub coherence_time_sigma: F,
    pub chi2: F,
    pub reduced_chi2: F,
    pub n_points: usize,
    pub n_free_params: usize,
    pub bin_width: F,
    pub converged: bool,
    pub iterations: usize,
}

impl<F: Real> FitResult<F> {
    pub fn peak(&self) -> BunchingPeak<F> {
        BunchingPeak {
            baseline: self.baseline,
            amplitude: self.amplitude,
            delay: self.delay,
            coherence_time: self.coherence_time,
        }
    }

    /// Model value at the peak, `B + A`.
    pub fn g2_at_delay(&self) -> F {
        self.baseline + self.amplitude
    }

    /// Height of a histogram bin centred on the peak, `B + A·(τc/w)(1 − e^{−w/τc})`.
    pub fn peak_bin_g2(&self) -> F {
        self.baseline + self.amplitude * bin_attenuation(self.bin_width, self.coherence_time)
    }

    pub fn visibility(&self) -> F {
        self.amplitude.sqrt()
    }

    /// Flat `key = value` record, one field per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("baseline", self.baseline.to_string());
        push("amplitude", self.amplitude.to_string());
        push("delay", self.delay.to_string());
        push("coherence_time", self.coherence_time.to_string());
        push("baseline_sigma", self.baseline_sigma.to_string());
        push("amplitude_sigma", self.amplitude_sigma.to_string());
        push("delay_sigma", self.delay_sigma.to_string());
        push("coherence_time_sigma", self.coherence_time_sigma.to_string());
        push("chi2", self.chi2.to_string());
        push("reduced_chi2", self.reduced_chi2.to_string());
        push("n_points", self.n_points.to_string());
        push("n_free_params", self.n_free_params.to_string());
        push("bin_width", self.bin_width.to_string());
        push("converged", self.converged.to_string());
        push("iterations", self.iterations.to_string());
        out
    }
}

/// Target distance with its one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate<F = f64> {
    pub range: Meters<F>,
    pub sigma: Meters<F>,
}

/// Distance from the fitted peak delay, with linear error propagation.
pub fn estimate_range<F: Real>(fit: &FitResult<F>, medium: &Medium<F>) -> Result<RangeEstimate<F>> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    Ok(RangeEstimate {
        range: range_from_delay(Seconds(fit.delay), medium),
        sigma: range_from_delay(Seconds(fit.delay_sigma), medium),
    })
}

/// Shot-noise limited signal-to-noise ratio of a bunching measurement,
/// `r·V²·sqrt(τc·ΔT)`.
pub fn snr_predict<F: Real>(rate: F, v2: F, coherence_time: F, integration_time: F) -> Result<F> {
    if [rate, v2, coherence_time, integration_time]
        .iter()
        .any(|v| !(*v >= F::zero()))
    {
        return Err(Error::Domain("SNR inputs must be >= 0".into()));
    }
    Ok(rate * v2 * (coherence_time * integration_time).sqrt())
}

/// Predicted and measured signal-to-noise ratio for one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrReport<F = f64> {
    pub predicted_snr: F,
    /// Infinite when the off-peak residuals vanish.
    pub measured_snr: F,
    pub rate: F,
    pub integration_time: F,
    pub off_peak_bins: usize,
}

/// Bins farther than this many coherence times from the peak count as off-peak.
pub const OFF_PEAK_COHERENCE_TIMES: f64 = 5.0;
pub const MIN_OFF_PEAK_BINS: usize = 20;

/// Fitted amplitude over the scatter of off-peak residuals, paired with the
/// prediction at `rate` (geometric mean of the two channel rates) and
/// integration time `integration_time`.
pub fn snr_measure<F: Real>(
    series: &G2Series<F>,
    fit: &FitResult<F>,
    rate: F,
    integration_time: F,
) -> Result<SnrReport<F>> {
    if !fit.converged {
        return Err(Error::NotConverged {
            iterations: fit.iterations,
        });
    }
    let peak = fit.peak();
    let half = series.bin_width / F::lit(2.0);
    let cut = F::lit(OFF_PEAK_COHERENCE_TIMES) * fit.coherence_time;
    let residuals: Vec<F> = series
        .points
        .iter()
        .filter(|p| (p.tau - fit.delay).abs() > cut)
        .map(|p| p.g2 - bin_average(&peak, p.tau - half, p.tau + half))
        .collect();
    if residuals.len() < MIN_OFF_PEAK_BINS {
        return Err(Error::Precondition(format!(
            "{} off-peak bins, need at least {MIN_OFF_PEAK_BINS}",
            residuals.len()
        )));
    }
    let n = F::from_usize(residuals.len()).expect("count");
    let mean = residuals.iter().fold(F::zero(), |a, &r| a + r) / n;
    let var = residuals.iter().fold(F::zero(), |a, &r| a + (r - mean) * (r - mean)) / (n - F::one());
    let sd = var.sqrt();
    let measured = if sd > F::zero() {
        fit.amplitude / sd
    } else {
        F::infinity()
    };
    Ok(SnrReport {
        predicted_snr: snr_predict(rate, fit.amplitude, fit.coherence_time, integration_time)?,
        measured_snr: measured,
        rate,
        integration_time,
        off_peak_bins: residuals.len(),
    })
}
