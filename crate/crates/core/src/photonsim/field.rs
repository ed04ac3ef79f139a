use rand::Rng;
use rand_distr::StandardNormal;

use super::{rng_from_seed, SimRng};
use crate::error::{Error, Result};

/// Coarsest allowed field step as a fraction of the coherence time.
pub(crate) const MAX_STEP_FRACTION: f64 = 1.0 / 50.0;

/// Normalized intensity samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    /// Sample spacing, seconds.
    pub step: f64,
    pub samples: Vec<f64>,
}

impl IntensityTrace {
    pub fn duration(&self) -> f64 {
        self.step * self.samples.len() as f64
    }
}

/// `(α, sqrt(1 − α²))` for `α = e^{−r}`, with one transcendental call and no
/// cancellation for small `r`.
#[inline]
fn decay(r: f64) -> (f64, f64) {
    // em = e^{-r} - 1
    let em = if r < 1e-2 {
        let x = -r;
        x * (1.0 + x * (0.5 + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0)))))
    } else {
        (-r).exp() - 1.0
    };
    (1.0 + em, (-em * (2.0 + em)).sqrt())
}

/// Two independent Ornstein-Uhlenbeck field quadratures with correlation
/// `exp(-|τ|/τc)`, advanced with the exact Gaussian transition.
///
/// The intensity `(x² + y²)/2` has unit mean and an autocorrelation of
/// `1 + exp(-2|τ|/τc)`.
#[derive(Debug, Clone)]
pub struct FieldSampler {
    coherence_time: f64,
    x: f64,
    y: f64,
    rng: SimRng,
}

impl FieldSampler {
    /// Starts from a draw of the stationary distribution.
    pub fn new(coherence_time: f64, seed: u64) -> Result<Self> {
        if !(coherence_time > 0.0) || !coherence_time.is_finite() {
            return Err(Error::Config(format!("coherence time must be > 0, got {coherence_time}")));
        }
        let mut rng = rng_from_seed(seed);
        let x = rng.sample(StandardNormal);
        let y = rng.sample(StandardNormal);
        Ok(FieldSampler {
            coherence_time,
            x,
            y,
            rng,
        })
    }

    #[inline]
    pub fn intensity(&self) -> f64 {
        0.5 * (self.x * self.x + self.y * self.y)
    }

    /// Advances the field by `dt` seconds.
    #[inline]
    pub fn advance(&mut self, dt: f64) {
        let (alpha, kick) = decay(dt / self.coherence_time);
        self.advance_with(alpha, kick);
    }

    #[inline]
    pub(crate) fn advance_with(&mut self, alpha: f64, kick: f64) {
        let (n1, n2): (f64, f64) = (self.rng.sample(StandardNormal), self.rng.sample(StandardNormal));
        self.x = alpha * self.x + kick * n1;
        self.y = alpha * self.y + kick * n2;
    }

    pub(crate) fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Yields intensities at `0, step, 2·step, …`.
    pub fn steps(self, step: f64) -> FieldSteps {
        let (alpha, kick) = decay(step / self.coherence_time);
        FieldSteps {
            alpha,
            kick,
            sampler: self,
            started: false,
        }
    }
}

/// Iterator over a field sampled on a fixed grid.
#[derive(Debug, Clone)]
pub struct FieldSteps {
    sampler: FieldSampler,
    alpha: f64,
    kick: f64,
    started: bool,
}

impl Iterator for FieldSteps {
    type Item = f64;

    #[inline]
    fn next(&mut self) -> Option<f64> {
        if self.started {
            self.sampler.advance_with(self.alpha, self.kick);
        }
        self.started = true;
        Some(self.sampler.intensity())
    }
}

pub(crate) fn check_step(coherence_time: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || step > coherence_time * MAX_STEP_FRACTION * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "field step {step} s must be in (0, τc/50] for τc = {coherence_time} s"
        )));
    }
    Ok(())
}

/// Samples the normalized thermal intensity on `n_steps` points spaced `step` apart.
pub fn simulate_field_intensity(coherence_time: f64, step: f64, n_steps: usize, seed: u64) -> Result<IntensityTrace> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be >= 1".into()));
    }
    check_step(coherence_time, step)?;
    let samples = FieldSampler::new(coherence_time, seed)?.steps(step).take(n_steps).collect();
    Ok(IntensityTrace { step, samples })
}
