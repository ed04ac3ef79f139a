//! Physical constants, unit-tagged quantities and the spectral, radiometric and
//! time-of-flight conversions used throughout the crate.
//!
//! Detection times live on an integer picosecond grid ([`Tick`]); everything
//! else is expressed in SI units through thin newtypes so that a length cannot
//! be handed to a function expecting a duration.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Picoseconds per second.
pub const TICKS_PER_SECOND: i64 = 1_000_000_000_000;

/// SI-exact constants lifted into the working scalar type.
pub struct Constants;

impl Constants {
    #[inline]
    pub fn c<F: Real>() -> F {
        F::lit(SPEED_OF_LIGHT)
    }

    #[inline]
    pub fn h<F: Real>() -> F {
        F::lit(PLANCK)
    }
}

/// A point on the picosecond detection-time grid.
///
/// Arithmetic is checked; overflow is reported as [`Error::Overflow`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(transparent)]
#[serde(transparent)]
pub struct Tick(pub i64);

impl Tick {
    pub const ZERO: Tick = Tick(0);
    pub const MAX: Tick = Tick(i64::MAX);
    pub const MIN: Tick = Tick(i64::MIN);

    #[inline]
    pub const fn new(ps: i64) -> Self {
        Tick(ps)
    }

    #[inline]
    pub const fn get(self) -> i64 {
        self.0
    }

    /// Rounds a duration in seconds to the nearest tick.
    pub fn from_seconds(seconds: f64) -> Result<Tick> {
        let ps = (seconds * TICKS_PER_SECOND as f64).round();
        // i64::MAX as f64 rounds up to 2^63, which itself is out of range.
        if !ps.is_finite() || ps >= i64::MAX as f64 || ps < i64::MIN as f64 {
            return Err(Error::Overflow);
        }
        Ok(Tick(ps as i64))
    }

    #[inline]
    pub fn to_seconds(self) -> f64 {
        self.0 as f64 / TICKS_PER_SECOND as f64
    }

    #[inline]
    pub fn checked_add(self, rhs: Tick) -> Result<Tick> {
        self.0.checked_add(rhs.0).map(Tick).ok_or(Error::Overflow)
    }

    #[inline]
    pub fn checked_sub(self, rhs: Tick) -> Result<Tick> {
        self.0.checked_sub(rhs.0).map(Tick).ok_or(Error::Overflow)
    }

    #[inline]
    pub fn checked_mul(self, k: i64) -> Result<Tick> {
        self.0.checked_mul(k).map(Tick).ok_or(Error::Overflow)
    }
}

impl fmt::Display for Tick {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

macro_rules! quantity {
    ($(#[$doc:meta])* $name:ident, $unit:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[repr(transparent)]
        #[serde(transparent)]
        pub struct $name<F = f64>(pub F);

        impl<F: Real> $name<F> {
            #[inline]
            pub fn new(value: F) -> Self {
                $name(value)
            }

            #[inline]
            pub fn get(self) -> F {
                self.0
            }
        }

        impl<F: Real> fmt::Display for $name<F> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} {}", self.0, $unit)
            }
        }
    };
}

quantity!(
    /// Duration in seconds.
    Seconds, "s"
);
quantity!(
    /// Length in meters.
    Meters, "m"
);
quantity!(
    /// Frequency in hertz.
    Hertz, "Hz"
);
quantity!(
    /// Optical power in watts.
    Watts, "W"
);
quantity!(
    /// Event rate in events per second.
    Rate, "1/s"
);

impl Seconds<f64> {
    pub fn to_ticks(self) -> Result<Tick> {
        Tick::from_seconds(self.0)
    }
}

impl From<Tick> for Seconds<f64> {
    fn from(t: Tick) -> Self {
        Seconds(t.to_seconds())
    }
}

/// Propagation medium between the instrument and the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Medium<F = f64> {
    pub refractive_index: F,
}

impl<F: Real> Medium<F> {
    pub fn new(refractive_index: F) -> Result<Self> {
        if !(refractive_index >= F::one()) {
            return Err(Error::Domain(format!(
                "refractive index must be >= 1, got {refractive_index}"
            )));
        }
        Ok(Medium { refractive_index })
    }

    pub fn vacuum() -> Self {
        Medium {
            refractive_index: F::one(),
        }
    }
}

impl<F: Real> Default for Medium<F> {
    fn default() -> Self {
        Self::vacuum()
    }
}

/// Narrowband thermal source.
///
/// `linewidth * coherence_time == 1` always holds; when an optical power is
/// given, the photon rate is derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec<F = f64> {
    pub wavelength: Meters<F>,
    pub wavelength_spread: Option<Meters<F>>,
    pub linewidth: Hertz<F>,
    pub coherence_time: Seconds<F>,
    pub power: Option<Watts<F>>,
    pub photon_rate: Rate<F>,
}

impl<F: Real> SourceSpec<F> {
    /// Source with the given centre wavelength and coherence time, emitting at `photon_rate`.
    pub fn new(wavelength: Meters<F>, coherence_time: Seconds<F>, photon_rate: Rate<F>) -> Result<Self> {
        let linewidth = linewidth_from_coherence_time(coherence_time)?;
        let spec = SourceSpec {
            wavelength,
            wavelength_spread: None,
            linewidth,
            coherence_time,
            power: None,
            photon_rate,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Source specified by linewidth instead of coherence time.
    pub fn from_linewidth(wavelength: Meters<F>, linewidth: Hertz<F>, photon_rate: Rate<F>) -> Result<Self> {
        let coherence_time = coherence_time_from_linewidth(linewidth)?;
        Self::new(wavelength, coherence_time, photon_rate).map(|s| SourceSpec { linewidth, ..s })
    }

    /// Replaces the photon rate by the one implied by `power` at this wavelength.
    pub fn with_power(mut self, power: Watts<F>) -> Result<Self> {
        self.photon_rate = photon_rate_from_power(power, self.wavelength)?;
        self.power = Some(power);
        Ok(self)
    }

    pub fn with_wavelength_spread(mut self, spread: Meters<F>) -> Result<Self> {
        if !(spread.0 >= F::zero()) {
            return Err(Error::Domain("wavelength spread must be >= 0".into()));
        }
        self.wavelength_spread = Some(spread);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength.0 > F::zero()) {
            return Err(Error::Domain("wavelength must be > 0".into()));
        }
        if !(self.linewidth.0 > F::zero()) || !(self.coherence_time.0 > F::zero()) {
            return Err(Error::Domain("linewidth and coherence time must be > 0".into()));
        }
        let product = self.linewidth.0 * self.coherence_time.0;
        if (product - F::one()).abs() > F::lit(1e-12).max(F::epsilon() * F::lit(4.0)) {
            return Err(Error::Domain(format!(
                "linewidth * coherence time = {product}, expected 1"
            )));
        }
        if !(self.photon_rate.0 >= F::zero()) {
            return Err(Error::Domain("photon rate must be >= 0".into()));
        }
        if let Some(p) = self.power {
            let expected = photon_rate_from_power(p, self.wavelength)?.0;
            let tol = F::lit(1e-9).max(F::epsilon() * F::lit(4.0));
            if (self.photon_rate.0 - expected).abs() > tol * expected.abs() {
                return Err(Error::Domain("photon rate inconsistent with power".into()));
            }
        }
        Ok(())
    }
}

/// `τc = 1/Δf`.
pub fn coherence_time_from_linewidth<F: Real>(linewidth: Hertz<F>) -> Result<Seconds<F>> {
    if !(linewidth.0 > F::zero()) {
        return Err(Error::Domain(format!("linewidth must be > 0, got {}", linewidth.0)));
    }
    Ok(Seconds(linewidth.0.recip()))
}

/// `Δf = 1/τc`.
pub fn linewidth_from_coherence_time<F: Real>(coherence_time: Seconds<F>) -> Result<Hertz<F>> {
    if !(coherence_time.0 > F::zero()) {
        return Err(Error::Domain(format!(
            "coherence time must be > 0, got {}",
            coherence_time.0
        )));
    }
    Ok(Hertz(coherence_time.0.recip()))
}

/// Optical linewidth `c·Δλ/λ²` of a line of width `spread` at `wavelength`.
pub fn linewidth_from_wavelength_spread<F: Real>(wavelength: Meters<F>, spread: Meters<F>) -> Result<Hertz<F>> {
    if !(wavelength.0 > F::zero()) {
        return Err(Error::Domain("wavelength must be > 0".into()));
    }
    if !(spread.0 >= F::zero()) {
        return Err(Error::Domain("wavelength spread must be >= 0".into()));
    }
    Ok(Hertz(Constants::c::<F>() * spread.0 / (wavelength.0 * wavelength.0)))
}

/// Photon rate `P·λ/(h·c)`.
pub fn photon_rate_from_power<F: Real>(power: Watts<F>, wavelength: Meters<F>) -> Result<Rate<F>> {
    if !(wavelength.0 > F::zero()) {
        return Err(Error::Domain("wavelength must be > 0".into()));
    }
    if !(power.0 >= F::zero()) {
        return Err(Error::Domain("power must be >= 0".into()));
    }
    // Split the division so the tiny h never underflows in f32.
    let photon_energy_scaled = (Constants::h::<F>() * F::lit(1e30)) * Constants::c::<F>() / wavelength.0;
    Ok(Rate(power.0 * F::lit(1e30) / photon_energy_scaled))
}

/// One-way target range for a round-trip delay: `c·τ0/(2n)`.
///
/// Negative delays map to negative ranges.
pub fn range_from_delay<F: Real>(delay: Seconds<F>, medium: &Medium<F>) -> Meters<F> {
    Meters(Constants::c::<F>() * delay.0 / (F::lit(2.0) * medium.refractive_index))
}

/// Round-trip delay for a target at `range`: `2·d·n/c`.
pub fn delay_from_range<F: Real>(range: Meters<F>, medium: &Medium<F>) -> Seconds<F> {
    Seconds(F::lit(2.0) * range.0 * medium.refractive_index / Constants::c::<F>())
}

/// Parameters of a displaced, scaled bunching peak `B + A·exp(−2|τ−τ0|/τc)`.
///
/// Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingPeak<F = f64> {
    pub baseline: F,
    pub amplitude: F,
    pub delay: F,
    pub coherence_time: F,
}

impl<F: Real> BunchingPeak<F> {
    /// Ideal single-mode thermal light at zero delay.
    pub fn thermal(coherence_time: F) -> Self {
        BunchingPeak {
            baseline: F::one(),
            amplitude: F::one(),
            delay: F::zero(),
            coherence_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coherence_time > F::zero()) {
            return Err(Error::Domain("coherence time must be > 0".into()));
        }
        if !(self.amplitude >= F::zero()) {
            return Err(Error::Domain("amplitude must be >= 0".into()));
        }
        Ok(())
    }

    /// Unchecked evaluation.
    #[inline]
    pub fn eval(&self, tau: F) -> F {
        let x = (tau - self.delay).abs();
        self.baseline + self.amplitude * (-F::lit(2.0) * x / self.coherence_time).exp()
    }
}

/// Second-order correlation of thermal light with a displaced peak.
pub fn g2_model<F: Real>(tau: Seconds<F>, peak: &BunchingPeak<F>) -> Result<F> {
    peak.validate()?;
    Ok(peak.eval(tau.0))
}
