//! Principal matrix exponential and logarithm for small dense matrices.

use nalgebra::DMatrix;

/// Matrix exponential by scaling and squaring with a Taylor tail.
pub fn mat_exp(a: &DMatrix<f64>) -> DMatrix<f64> {
    let d = a.nrows();
    let norm = a.norm();
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a / 2f64.powi(s as i32);
    let mut result = DMatrix::identity(d, d);
    let mut term = DMatrix::identity(d, d);
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    for _ in 0..s {
        result = &result * &result;
    }
    result
}

/// Principal matrix logarithm via inverse scaling and squaring.
///
/// Square roots are taken with the Denman-Beavers iteration until the
/// argument is close to the identity, then a Mercator series finishes.
/// Returns `None` when the iteration fails to converge, which happens
/// exactly when the principal logarithm is undefined (an eigenvalue on
/// the closed negative real axis) or the matrix is singular.
pub fn mat_log(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return None;
    }
    if !a.iter().all(|v| v.is_finite()) {
        return None;
    }
    let eye = DMatrix::identity(d, d);
    let mut current = a.clone();
    let mut halvings = 0u32;
    while (&current - &eye).norm() > 0.25 {
        if halvings >= 60 {
            return None;
        }
        current = db_sqrt(&current)?;
        halvings += 1;
    }
    let m = &current - &eye;
    let mut result = DMatrix::zeros(d, d);
    let mut power = m.clone();
    for k in 1..=60 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        result += &power * (sign / k as f64);
        power = &power * &m;
        if power.norm() < 1e-18 {
            break;
        }
    }
    Some(result * 2f64.powi(halvings as i32))
}

/// Denman-Beavers square root iteration.
fn db_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::identity(d, d);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse()?;
        let z_inv = z.clone().try_inverse()?;
        let y_next = (&y + &z_inv) * 0.5;
        let z_next = (&z + &y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        if delta <= 1e-15 * y.norm().max(1.0) {
            let check = &y * &y - a;
            if check.norm() <= 1e-9 * (1.0 + a.norm()) {
                return Some(y);
            }
            return None;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_diagonal() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        let e = mat_exp(&a);
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-12);
        assert!((e[(1, 1)] - (-1f64).exp()).abs() < 1e-12);
        assert!(e[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn log_inverts_exp() {
        let a = DMatrix::from_row_slice(3, 3, &[0.1, 0.3, -0.2, 0.0, -0.1, 0.25, 0.05, 0.0, 0.0]);
        let l = mat_log(&mat_exp(&a)).expect("log in domain");
        assert!((l - &a).norm() < 1e-10);
    }

    #[test]
    fn log_of_gt_is_diagonal() {
        let t = 0.5f64;
        let g = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![t.exp(), (-t).exp()]));
        let l = mat_log(&g).unwrap();
        assert!((l[(0, 0)] - t).abs() < 1e-12);
        assert!((l[(1, 1)] + t).abs() < 1e-12);
        assert!((l.norm() - (2.0f64).sqrt() * t).abs() < 1e-10);
    }

    #[test]
    fn log_rejects_negative_spectrum() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(mat_log(&a).is_none());
    }
}
