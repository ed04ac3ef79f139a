use crate::correlator::G2Series;
use crate::error::{Error, Result};
use crate::quantities::BunchingPeak;
use crate::scalar::Real;

/// Fewest bins any peak estimate accepts.
pub const MIN_POINTS: usize = 8;

/// Floor on the amplitude guess.
const MIN_AMPLITUDE: f64 = 0.01;

fn median<F: Real>(values: &mut [F]) -> F {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite g2 values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / F::lit(2.0)
    }
}

/// Centred moving average over `2·half + 1` points, truncated at the ends.
fn moving_average<F: Real>(values: &[F], half: usize) -> Vec<F> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let sum = values[lo..hi].iter().fold(F::zero(), |a, &v| a + v);
            sum / F::from_usize(hi - lo).expect("count")
        })
        .collect()
}

/// Starting point for the peak fit.
///
/// Baseline from the median, position and height from the maximum of a
/// 5-point moving average, and coherence time from the width of the region
/// above half height (`τc = 2·HWHM / ln 2`), floored at one bin.
pub fn initial_guess<F: Real>(series: &G2Series<F>) -> Result<BunchingPeak<F>> {
    let n = series.len();
    if n < MIN_POINTS {
        return Err(Error::Precondition(format!(
            "need at least {MIN_POINTS} points for a peak estimate, got {n}"
        )));
    }
    let values: Vec<F> = series.points.iter().map(|p| p.g2).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("non-finite g2 value".into()));
    }
    let baseline = median(&mut values.clone());
    let smooth = moving_average(&values, 2);
    let (imax, &smax) = smooth
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .expect("non-empty");
    let amplitude = (smax - baseline).max(F::lit(MIN_AMPLITUDE));
    let half = baseline + amplitude / F::lit(2.0);
    let mut left = imax;
    while left > 0 && smooth[left - 1] > half {
        left -= 1;
    }
    let mut right = imax;
    while right + 1 < n && smooth[right + 1] > half {
        right += 1;
    }
    let w = series.bin_width;
    let hwhm = F::from_usize(right - left + 1).expect("count") * w / F::lit(2.0);
    let coherence_time = (F::lit(2.0) / F::LN_2() * hwhm).max(w);
    Ok(BunchingPeak {
        baseline,
        amplitude,
        delay: series.points[imax].tau,
        coherence_time,
    })
}
