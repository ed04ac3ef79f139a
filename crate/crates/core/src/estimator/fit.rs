use super::guess::{initial_guess, MIN_POINTS};
use super::linalg::{invert, solve, Matrix};
use super::model::{bin_average, bin_average_with_gradient, N_PARAMS};
use super::FitResult;
use crate::correlator::G2Series;
use crate::error::{Error, Result};
use crate::quantities::BunchingPeak;
use crate::scalar::Real;

/// Smallest coherence time the fit may reach, in bin widths.
const COHERENCE_FLOOR_BINS: f64 = 1e-3;
const MAX_STEP_HALVINGS: usize = 8;

/// Solver settings for [`fit_g2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<F = f64> {
    pub max_iterations: usize,
    /// Relative χ² change that ends the iteration.
    pub tolerance: F,
    /// Starting point; [`initial_guess`] is used when absent.
    pub initial: Option<BunchingPeak<F>>,
}

impl<F: Real> Default for FitOptions<F> {
    fn default() -> Self {
        FitOptions {
            max_iterations: 200,
            tolerance: F::lit(1e-10),
            initial: None,
        }
    }
}

/// Fit problem in bin units: `t' = (t − origin)/w`, bins span `[t' − ½, t' + ½)`.
struct Problem<F> {
    centers: Vec<F>,
    values: Vec<F>,
    weights: Vec<F>,
    origin: F,
    width: F,
}

impl<F: Real> Problem<F> {
    fn new(series: &G2Series<F>) -> Self {
        let width = series.bin_width;
        let origin = series.points[0].tau;
        Problem {
            centers: series.points.iter().map(|p| (p.tau - origin) / width).collect(),
            values: series.points.iter().map(|p| p.g2).collect(),
            weights: series.points.iter().map(|p| p.sigma.recip()).collect(),
            origin,
            width,
        }
    }

    fn to_internal(&self, p: &BunchingPeak<F>) -> [F; N_PARAMS] {
        [
            p.baseline,
            p.amplitude,
            (p.delay - self.origin) / self.width,
            p.coherence_time / self.width,
        ]
    }

    fn peak(q: &[F; N_PARAMS]) -> BunchingPeak<F> {
        BunchingPeak {
            baseline: q[0],
            amplitude: q[1],
            delay: q[2],
            coherence_time: q[3],
        }
    }

    fn chi2(&self, q: &[F; N_PARAMS]) -> F {
        let p = Self::peak(q);
        let half = F::lit(0.5);
        self.centers
            .iter()
            .zip(&self.values)
            .zip(&self.weights)
            .fold(F::zero(), |acc, ((&c, &y), &wt)| {
                let r = (y - bin_average(&p, c - half, c + half)) * wt;
                acc + r * r
            })
    }

    /// Normal equations `JᵀJ` and `Jᵀr` of the weighted residuals.
    fn normal_equations(&self, q: &[F; N_PARAMS]) -> (Matrix<F, N_PARAMS>, [F; N_PARAMS]) {
        let p = Self::peak(q);
        let half = F::lit(0.5);
        let mut jtj = [[F::zero(); N_PARAMS]; N_PARAMS];
        let mut jtr = [F::zero(); N_PARAMS];
        for ((&c, &y), &wt) in self.centers.iter().zip(&self.values).zip(&self.weights) {
            let (m, grad) = bin_average_with_gradient(&p, c - half, c + half);
            let r = (y - m) * wt;
            let g = grad.map(|d| d * wt);
            for i in 0..N_PARAMS {
                jtr[i] = jtr[i] + g[i] * r;
                for j in 0..=i {
                    jtj[i][j] = jtj[i][j] + g[i] * g[j];
                }
            }
        }
        for i in 0..N_PARAMS {
            for j in i + 1..N_PARAMS {
                jtj[i][j] = jtj[j][i];
            }
        }
        (jtj, jtr)
    }
}

fn project<F: Real>(q: &mut [F; N_PARAMS]) {
    q[1] = q[1].max(F::zero());
    q[3] = q[3].max(F::lit(COHERENCE_FLOOR_BINS));
}

/// Weighted least-squares fit of the bin-averaged bunching model.
///
/// Damped Gauss-Newton (Levenberg-Marquardt scaling) with step halving. A
/// result with `converged == false` is returned when the iteration budget
/// runs out; a coherence time driven to its floor or a singular curvature
/// matrix is reported as [`Error::DegenerateFit`].
pub fn fit_g2<F: Real>(series: &G2Series<F>, options: &FitOptions<F>) -> Result<FitResult<F>> {
    let n = series.len();
    if n < MIN_POINTS {
        return Err(Error::Precondition(format!("need at least {MIN_POINTS} points, got {n}")));
    }
    if let Some(k) = series.points.iter().position(|p| !(p.sigma > F::zero()) || !p.sigma.is_finite()) {
        return Err(Error::Precondition(format!("sigma of point {k} must be finite and > 0")));
    }
    if !(series.bin_width > F::zero()) {
        return Err(Error::Precondition("bin width must be > 0".into()));
    }
    let start = match options.initial {
        Some(p) => p,
        None => initial_guess(series)?,
    };
    let problem = Problem::new(series);
    let mut q = problem.to_internal(&start);
    project(&mut q);
    let mut chi2 = problem.chi2(&q);
    let tolerance = options.tolerance.max(F::epsilon() * F::lit(100.0));
    let tiny = F::min_positive_value().sqrt();
    let mut lambda = F::lit(1e-3);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let (jtj, jtr) = problem.normal_equations(&q);
        let mut accepted = None;
        while lambda < F::lit(1e12) {
            let mut damped = jtj;
            for (i, row) in damped.iter_mut().enumerate() {
                row[i] = row[i] + lambda * jtj[i][i].max(tiny);
            }
            if let Some(delta) = solve(&damped, &jtr) {
                let mut scale = F::one();
                for _ in 0..=MAX_STEP_HALVINGS {
                    let mut trial = q;
                    for i in 0..N_PARAMS {
                        trial[i] = trial[i] + scale * delta[i];
                    }
                    project(&mut trial);
                    let c = problem.chi2(&trial);
                    if c.is_finite() && c < chi2 {
                        accepted = Some((trial, c));
                        break;
                    }
                    scale = scale * F::lit(0.5);
                }
            }
            if accepted.is_some() {
                break;
            }
            lambda = lambda * F::lit(10.0);
        }
        match accepted {
            Some((trial, c)) => {
                let relative = (chi2 - c) / chi2.max(tiny);
                q = trial;
                chi2 = c;
                lambda = (lambda / F::lit(3.0)).max(F::lit(1e-12));
                if relative < tolerance || chi2 <= tiny {
                    converged = true;
                    break;
                }
            }
            None => {
                // no descent direction left at working precision
                converged = true;
                break;
            }
        }
    }

    if q[3] <= F::lit(COHERENCE_FLOOR_BINS) * (F::one() + F::lit(1e-6)) {
        return Err(Error::DegenerateFit(
            "coherence time collapsed to its lower bound".into(),
        ));
    }
    let (jtj, _) = problem.normal_equations(&q);
    let cov = invert(&jtj).ok_or_else(|| Error::DegenerateFit("singular curvature matrix".into()))?;
    let sd: [F; N_PARAMS] = std::array::from_fn(|i| cov[i][i].max(F::zero()).sqrt());
    let dof = F::from_usize(n - N_PARAMS).expect("count");
    let w = problem.width;
    Ok(FitResult {
        baseline: q[0],
        amplitude: q[1],
        delay: problem.origin + q[2] * w,
        coherence_time: q[3] * w,
        baseline_sigma: sd[0],
        amplitude_sigma: sd[1],
        delay_sigma: sd[2] * w,
        coherence_time_sigma: sd[3] * w,
        chi2,
        reduced_chi2: chi2 / dof,
        n_points: n,
        n_free_params: N_PARAMS,
        bin_width: w,
        converged,
        iterations,
    })
}
