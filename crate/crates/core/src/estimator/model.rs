//! Bin-averaged bunching model.
//!
//! With `k = 2/τc` the kernel `e^{-k|u|}` has the antiderivative
//! `G(u) = sign(u)·(1 − e^{-k|u|})/k`, which is continuous and has a
//! continuous first derivative in `u`, so the bin average is smooth in `τ0`
//! even when the peak sits inside a bin.

use crate::quantities::BunchingPeak;
use crate::scalar::Real;

/// Number of free model parameters: baseline, amplitude, delay, coherence time.
pub const N_PARAMS: usize = 4;

#[inline]
fn one_minus_exp_neg<F: Real>(x: F) -> F {
    -(-x).exp_m1()
}

/// `G(u)` for decay rate `k`.
#[inline]
fn antiderivative<F: Real>(u: F, k: F) -> F {
    let g = one_minus_exp_neg(k * u.abs()) / k;
    if u < F::zero() {
        -g
    } else {
        g
    }
}

/// `∂G/∂k`.
#[inline]
fn antiderivative_dk<F: Real>(u: F, k: F) -> F {
    let a = u.abs();
    let x = k * a;
    let e = (-x).exp();
    let v = (x * e - one_minus_exp_neg(x)) / (k * k);
    if u < F::zero() {
        -v
    } else {
        v
    }
}

/// Mean of the peak kernel `e^{-2|t−τ0|/τc}` over `[t1, t2)`.
#[inline]
pub fn kernel_bin_average<F: Real>(delay: F, coherence_time: F, t1: F, t2: F) -> F {
    let k = F::lit(2.0) / coherence_time;
    (antiderivative(t2 - delay, k) - antiderivative(t1 - delay, k)) / (t2 - t1)
}

/// Mean of `B + A·e^{-2|t−τ0|/τc}` over `[t1, t2)`.
#[inline]
pub fn bin_average<F: Real>(peak: &BunchingPeak<F>, t1: F, t2: F) -> F {
    peak.baseline + peak.amplitude * kernel_bin_average(peak.delay, peak.coherence_time, t1, t2)
}

/// Bin average and its gradient with respect to `(B, A, τ0, τc)`.
#[inline]
pub fn bin_average_with_gradient<F: Real>(peak: &BunchingPeak<F>, t1: F, t2: F) -> (F, [F; N_PARAMS]) {
    let two = F::lit(2.0);
    let tc = peak.coherence_time;
    let k = two / tc;
    let w = t2 - t1;
    let (u1, u2) = (t1 - peak.delay, t2 - peak.delay);
    let kernel = (antiderivative(u2, k) - antiderivative(u1, k)) / w;
    let d_delay = peak.amplitude * ((-k * u1.abs()).exp() - (-k * u2.abs()).exp()) / w;
    let dk_dtc = -two / (tc * tc);
    let d_tc = peak.amplitude * (antiderivative_dk(u2, k) - antiderivative_dk(u1, k)) / w * dk_dtc;
    (
        peak.baseline + peak.amplitude * kernel,
        [F::one(), kernel, d_delay, d_tc],
    )
}

/// Peak reduction from averaging over a bin of width `w` centred on the peak:
/// `(τc/w)·(1 − e^{−w/τc})`.
pub fn bin_attenuation<F: Real>(bin_width: F, coherence_time: F) -> F {
    let x = bin_width / coherence_time;
    if x <= F::zero() {
        return F::one();
    }
    one_minus_exp_neg(x) / x
}
