//! Dense solves for the small normal-equation systems of the fitter.

use crate::scalar::Real;

pub type Matrix<F, const N: usize> = [[F; N]; N];

/// Inverts `m` by Gauss-Jordan elimination with partial pivoting.
///
/// Returns `None` when a pivot falls below `eps·max|m|`.
pub fn invert<F: Real, const N: usize>(m: &Matrix<F, N>) -> Option<Matrix<F, N>> {
    let mut a = *m;
    let mut inv = [[F::zero(); N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = F::one();
    }
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(F::zero(), |acc, v| acc.max(v.abs()));
    if !(scale > F::zero()) || !scale.is_finite() {
        return None;
    }
    let tiny = scale * F::epsilon() * F::lit(N as f64);
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite"))
            .expect("non-empty");
        if !(a[pivot][col].abs() > tiny) {
            return None;
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col].recip();
        for k in 0..N {
            a[col][k] = a[col][k] * d;
            inv[col][k] = inv[col][k] * d;
        }
        for r in 0..N {
            if r != col {
                let f = a[r][col];
                if f != F::zero() {
                    for k in 0..N {
                        a[r][k] = a[r][k] - f * a[col][k];
                        inv[r][k] = inv[r][k] - f * inv[col][k];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Solves `m·x = b`.
pub fn solve<F: Real, const N: usize>(m: &Matrix<F, N>, b: &[F; N]) -> Option<[F; N]> {
    let inv = invert(m)?;
    let mut x = [F::zero(); N];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = (0..N).fold(F::zero(), |acc, k| acc + inv[i][k] * b[k]);
    }
    Some(x)
}
