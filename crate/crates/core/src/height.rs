//! Height functions on the space of lattices: the per-degree heights,
//! their weighted combination, the distortion constant bounds, and the
//! compact sublevel sets they carve out.

use crate::enumeration::{enumerate, SearchGoal};
use crate::error::{CoreError, Result};
use crate::exterior::{exterior_power_matrix, op_norm_inf, pluecker_residual};
use crate::lattice::UnimodularLattice;
use crate::matrixfn::mat_exp;
use crate::par::stream_rng;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Node budget for one height enumeration.
pub const ENUM_NODE_BUDGET: u64 = 10_000_000;

/// Reciprocal of the minimal covolume over rank-`i` sublattices: the
/// degree-`i` height. Exact up to floating tolerance, by enumeration
/// of integer multivectors filtered to decomposables.
pub fn alpha(x: &UnimodularLattice, i: usize) -> Result<f64> {
    let d = x.dim();
    if i > d {
        return Err(CoreError::IndexOutOfRange { i, max: d });
    }
    if i == 0 || i == d {
        return Ok(1.0);
    }
    if d == 2 {
        return Ok(1.0 / planar_shortest(x.basis()));
    }

    let m_ext = exterior_power_matrix(x.basis(), i);
    let c = m_ext.ncols();
    // Coordinate sublattices are decomposable, so the smallest column
    // norm is a valid starting bound and a valid fallback candidate.
    let mut bound_sq = f64::INFINITY;
    for col in 0..c {
        bound_sq = bound_sq.min(m_ext.column(col).norm_squared());
    }
    let needs_filter = i > 1 && i + 1 < d;
    let outcome = enumerate(
        &m_ext,
        bound_sq,
        ENUM_NODE_BUDGET,
        SearchGoal::ShortestAccepted,
        |w, _| !needs_filter || integer_decomposable(d, i, w),
    );
    let best_sq = outcome.best.as_ref().map(|(_, b)| *b).unwrap_or(bound_sq);
    let value = 1.0 / best_sq.sqrt();
    if outcome.budget_hit {
        return Err(CoreError::EnumerationBudgetExceeded { partial: value });
    }
    Ok(value)
}

/// Total variant: on budget exhaustion returns the partial lower bound
/// instead of failing. Used where membership must be a total predicate.
pub fn alpha_total(x: &UnimodularLattice, i: usize) -> f64 {
    match alpha(x, i) {
        Ok(v) => v,
        Err(CoreError::EnumerationBudgetExceeded { partial }) => partial,
        Err(_) => f64::NAN,
    }
}

/// All heights (alpha_0, ..., alpha_d).
pub fn alpha_all(x: &UnimodularLattice) -> Result<Vec<f64>> {
    (0..=x.dim()).map(|i| alpha(x, i)).collect()
}

/// Exact Plucker check for an integer coefficient vector. Relation
/// values are integers, so anything below 1/2 in absolute value is a
/// true zero (entries stay far below 2^26 here).
fn integer_decomposable(dim: usize, degree: usize, coeffs: &[i64]) -> bool {
    pluecker_residual(dim, degree, coeffs, |c| *c as f64) < 0.5
}

/// Shortest nonzero vector length of a planar lattice via Lagrange
/// reduction of the two basis columns.
fn planar_shortest(basis: &DMatrix<f64>) -> f64 {
    let mut ax = basis[(0, 0)];
    let mut ay = basis[(1, 0)];
    let mut bx = basis[(0, 1)];
    let mut by = basis[(1, 1)];
    for _ in 0..200 {
        let na = ax * ax + ay * ay;
        let nb = bx * bx + by * by;
        if nb < na {
            std::mem::swap(&mut ax, &mut bx);
            std::mem::swap(&mut ay, &mut by);
        }
        let na = ax * ax + ay * ay;
        let r = ((ax * bx + ay * by) / na).round();
        if r == 0.0 {
            break;
        }
        bx -= r * ax;
        by -= r * ay;
    }
    let na = ax * ax + ay * ay;
    let nb = bx * bx + by * by;
    na.min(nb).sqrt()
}

/// Weights of the composite height at flow parameter `t`: the degree-i
/// weight is exp(-(mn + 1/2) i (d - i) t) / (d - 1)^{i (d - i)}.
pub fn omega_weights(m: usize, n: usize, t: f64) -> Vec<f64> {
    let d = m + n;
    let mn = (m * n) as f64;
    (0..=d)
        .map(|i| {
            let p = (i * (d - i)) as f64;
            (-(mn + 0.5) * p * t - p * ((d - 1) as f64).ln()).exp()
        })
        .collect()
}

/// The composite height: weighted sum of sqrt(alpha_i). Contracts in
/// expectation under one flow step up to an additive constant.
pub fn tilde_alpha(x: &UnimodularLattice, t: f64) -> Result<f64> {
    if t < 1.0 {
        return Err(CoreError::param(format!("t = {t} must be >= 1")));
    }
    if x.dim() == 2 {
        let w = omega_weights(x.m(), x.n(), t);
        return Ok(2.0 + w[1] * alpha(x, 1)?.sqrt());
    }
    let w = omega_weights(x.m(), x.n(), t);
    let alphas = alpha_all(x)?;
    Ok(alphas
        .iter()
        .zip(w.iter())
        .map(|(a, wi)| wi * a.sqrt())
        .sum())
}

/// Total variant of [`tilde_alpha`] built on [`alpha_total`].
pub fn tilde_alpha_total(x: &UnimodularLattice, t: f64) -> f64 {
    let w = omega_weights(x.m(), x.n(), t);
    (0..=x.dim())
        .map(|i| w[i] * alpha_total(x, i).sqrt())
        .sum()
}

/// Heights of one lattice at one flow parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightProfile {
    /// alpha_0 .. alpha_d; NaN entries mark degrees skipped at d >= 5.
    pub alphas: Vec<f64>,
    pub t: f64,
    pub tilde_alpha: f64,
}

impl HeightProfile {
    /// All degrees at d <= 4; only degree 1 above that (cost control),
    /// in which case the composite height is NaN.
    pub fn compute(x: &UnimodularLattice, t: f64) -> Result<Self> {
        let d = x.dim();
        if d <= 4 {
            let alphas = alpha_all(x)?;
            let w = omega_weights(x.m(), x.n(), t);
            let tilde = alphas
                .iter()
                .zip(w.iter())
                .map(|(a, wi)| wi * a.sqrt())
                .sum();
            Ok(HeightProfile {
                alphas,
                t,
                tilde_alpha: tilde,
            })
        } else {
            let mut alphas = vec![f64::NAN; d + 1];
            alphas[0] = 1.0;
            alphas[d] = 1.0;
            alphas[1] = alpha(x, 1)?;
            Ok(HeightProfile {
                alphas,
                t,
                tilde_alpha: f64::NAN,
            })
        }
    }
}

/// Bounds on the distortion constant: the supremum over the radius-R
/// ball in the group of max(op-norm, inverse op-norm)^{1/2}.
///
/// `lower` maxes sampled and deterministic probes inside the ball;
/// `upper` is the closed-form bound exp((d-1) * radius / 2).
pub fn c_alpha_bounds(
    m: usize,
    n: usize,
    radius: f64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = m + n;
    if radius < 0.0 {
        return Err(CoreError::param("radius must be nonnegative"));
    }
    let upper = ((d - 1) as f64 * radius / 2.0).exp();
    if radius == 0.0 {
        return Ok((1.0, 1.0));
    }
    let mut lower = 1.0f64;
    let mut probe = |xi: &DMatrix<f64>| {
        let h = mat_exp(xi);
        let h_inv = mat_exp(&(-xi));
        let v = op_norm_inf(&h).max(op_norm_inf(&h_inv)).sqrt();
        if v.is_finite() {
            lower = lower.max(v);
        }
    };
    // Traceless diagonal probes, one per coordinate pair, at the given
    // radius and at the Frobenius-normalized boundary.
    for i in 0..d {
        for j in (i + 1)..d {
            let mut xi = DMatrix::zeros(d, d);
            xi[(i, i)] = 0.5;
            xi[(j, j)] = -0.5;
            probe(&(xi.clone() * radius));
            let f = radius * (1.0 - 1e-9) / xi.norm();
            probe(&(xi * f));
        }
    }
    let mut rng = stream_rng(seed, 0);
    let ball_dim = (d * d - 1) as f64;
    for _ in 0..samples {
        let mut xi = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tr = xi.trace() / d as f64;
        for k in 0..d {
            xi[(k, k)] -= tr;
        }
        let nrm = xi.norm();
        if nrm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = radius * u.powf(1.0 / ball_dim) / nrm;
        probe(&(xi * scale));
    }
    Ok((lower.min(upper), upper))
}

/// Membership in the compact set separating bounded excursions from
/// cusp excursions: composite height at most c_alpha^3 e^{mnt}.
pub fn in_qt(x: &UnimodularLattice, t: f64, c_alpha: f64) -> Result<bool> {
    if t < 1.0 {
        return Err(CoreError::param("t must be >= 1"));
    }
    if c_alpha < 1.0 {
        return Err(CoreError::param("c_alpha must be >= 1"));
    }
    let mnt = (x.m() * x.n()) as f64 * t;
    if mnt > 700.0 {
        return Err(CoreError::OverflowScale { exponent: mnt });
    }
    Ok(tilde_alpha(x, t)? <= c_alpha.powi(3) * mnt.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{apply_gt, apply_hs};

    #[test]
    fn alpha_of_standard_lattice_is_one() {
        for &(m, n) in &[(1, 1), (1, 2), (2, 2)] {
            let x = UnimodularLattice::standard(m, n);
            for i in 0..=(m + n) {
                assert!((alpha(&x, i).unwrap() - 1.0).abs() < 1e-10, "i = {i}");
            }
        }
    }

    #[test]
    fn alpha_index_out_of_range() {
        let x = UnimodularLattice::standard(1, 1);
        assert!(matches!(
            alpha(&x, 3),
            Err(CoreError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn alpha_one_of_flowed_standard() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 1.0).unwrap();
        assert!((alpha(&x, 1).unwrap() - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn alpha_one_of_sheared_standard_is_one() {
        let s = DMatrix::from_element(1, 1, 0.5);
        let x = apply_hs(&UnimodularLattice::standard(1, 1), &s).unwrap();
        // Brute force over |a|, |b| <= 3 confirms (1, 0) is shortest.
        let mut brute = f64::INFINITY;
        for a in -3i32..=3 {
            for b in -3i32..=3 {
                if a == 0 && b == 0 {
                    continue;
                }
                let vx = a as f64 + 0.5 * b as f64;
                let vy = b as f64;
                brute = brute.min((vx * vx + vy * vy).sqrt());
            }
        }
        assert!((brute - 1.0).abs() < 1e-12);
        assert!((alpha(&x, 1).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tilde_alpha_standard_values() {
        let x = UnimodularLattice::standard(1, 1);
        let v1 = tilde_alpha(&x, 1.0).unwrap();
        assert!((v1 - (2.0 + (-1.5f64).exp())).abs() < 1e-10);
        let v2 = tilde_alpha(&x, 2.0).unwrap();
        assert!((v2 - (2.0 + (-3.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn tilde_alpha_lower_bound_two() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 3.0).unwrap();
        assert!(tilde_alpha(&x, 1.5).unwrap() >= 2.0);
    }

    #[test]
    fn c_alpha_zero_radius() {
        let (lo, hi) = c_alpha_bounds(1, 1, 0.0, 10, 1).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn c_alpha_radius_two_dim_two() {
        let (lo, hi) = c_alpha_bounds(1, 1, 2.0, 50, 1).unwrap();
        assert!(lo >= 0.5f64.exp() * (1.0 - 1e-3), "lo = {lo}");
        assert!(lo <= hi);
        assert!((hi - 1f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn qt_membership_examples() {
        let x = UnimodularLattice::standard(1, 1);
        assert!(in_qt(&x, 1.0, 1.0).unwrap());
        let deep = apply_gt(&x, 10.0).unwrap();
        assert!(!in_qt(&deep, 1.0, 1.0).unwrap());
        // Monotone in c_alpha.
        assert!(in_qt(&x, 1.0, 2.0).unwrap());
    }

    #[test]
    fn heights_diverge_along_the_flow() {
        let x = UnimodularLattice::standard(1, 1);
        let mut prev = 0.0;
        for j in 1..=10 {
            let y = apply_gt(&x, j as f64).unwrap();
            let a = alpha(&y, 1).unwrap();
            assert!(a > prev);
            prev = a;
        }
    }

    #[test]
    fn profile_recomputes_tilde() {
        let x = apply_gt(&UnimodularLattice::standard(2, 1), 0.7).unwrap();
        let p = HeightProfile::compute(&x, 1.3).unwrap();
        let w = omega_weights(2, 1, 1.3);
        let direct: f64 = p
            .alphas
            .iter()
            .zip(w.iter())
            .map(|(a, wi)| wi * a.sqrt())
            .sum();
        assert!((p.tilde_alpha - direct).abs() < 1e-10);
    }
}
