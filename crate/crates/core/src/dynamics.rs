//! Discrete-time orbits under the diagonal flow and the finite-horizon
//! orbit sets built from them.

use crate::error::{CoreError, Result};
use crate::geometry::RegionSpec;
use crate::height::HeightProfile;
use crate::lattice::{apply_gt, apply_hs, UnimodularLattice};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Orbit snapshots of one lattice under repeated flow steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub base: UnimodularLattice,
    pub step: f64,
    pub points: Vec<HeightProfile>,
    pub visits: Vec<bool>,
}

/// Flow the lattice `n_steps` times by `a`, recording height profiles
/// and region membership per step. Profiles are evaluated at the
/// height parameter max(a, 1).
pub fn orbit(
    x: &UnimodularLattice,
    a: f64,
    n_steps: u64,
    region: &RegionSpec,
) -> Result<TrajectoryRecord> {
    if n_steps < 1 {
        return Err(CoreError::param("need at least one step"));
    }
    if a < 0.0 {
        return Err(CoreError::param("step must be nonnegative"));
    }
    let total = a * n_steps as f64 * x.n().max(x.m()) as f64;
    if total > 700.0 {
        return Err(CoreError::OverflowScale { exponent: total });
    }
    let height_t = a.max(1.0);
    let mut points = Vec::with_capacity(n_steps as usize);
    let mut visits = Vec::with_capacity(n_steps as usize);
    let mut y = x.clone();
    for _ in 0..n_steps {
        y = apply_gt(&y, a)?;
        points.push(HeightProfile::compute(&y, height_t)?);
        visits.push(region.contains(&y));
    }
    Ok(TrajectoryRecord {
        base: x.clone(),
        step: a,
        points,
        visits,
    })
}

/// Membership of a shear parameter in the orbit set: the shear stays
/// inside the radius-`r` ball and each of the first `n_steps` flow
/// translates of the sheared point lies in `region`.
pub fn in_a_set(
    s: &DMatrix<f64>,
    x: &UnimodularLattice,
    t: f64,
    r: f64,
    n_steps: u64,
    region: &RegionSpec,
) -> Result<bool> {
    if r <= 0.0 {
        return Err(CoreError::param("ball radius must be positive"));
    }
    if s.norm() >= r {
        return Ok(false);
    }
    let mut y = apply_hs(x, s)?;
    for _ in 0..n_steps {
        y = apply_gt(&y, t)?;
        if !region.contains(&y) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finite-horizon stand-in for full orbit avoidance: no flow translate
/// up to the horizon lands in `region`. Over-approximates the
/// unverifiable infinite-horizon set.
pub fn avoids(x: &UnimodularLattice, region: &RegionSpec, a: f64, horizon: u64) -> Result<bool> {
    if horizon < 1 {
        return Err(CoreError::param("horizon must be at least 1"));
    }
    let mut y = x.clone();
    for _ in 0..horizon {
        y = apply_gt(&y, a)?;
        if region.contains(&y) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Eventual-avoidance surrogate with burn-in: some flow translate
/// within the first `burn_in` steps avoids `region` for `horizon`
/// further steps.
pub fn eventually_avoids(
    x: &UnimodularLattice,
    region: &RegionSpec,
    a: f64,
    horizon: u64,
    burn_in: u64,
) -> Result<bool> {
    for j in 0..=burn_in {
        let shifted = apply_gt(x, a * j as f64)?;
        if avoids(&shifted, region, a, horizon)? {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::height::tilde_alpha;
    use crate::lattice::apply_gt;

    #[test]
    fn single_zero_step_snapshots_the_point() {
        let x = UnimodularLattice::standard(1, 1);
        let rec = orbit(&x, 0.0, 1, &RegionSpec::empty()).unwrap();
        assert_eq!(rec.points.len(), 1);
        assert!((rec.points[0].alphas[1] - 1.0).abs() < 1e-10);
        assert!(!rec.visits[0]);
    }

    #[test]
    fn standard_orbit_stays_below_cusp_threshold() {
        // Heights along the orbit, checked against the closed form
        // 2 + e^{-3/2} e^{i/2}: all five stay at or below 10.
        let x = UnimodularLattice::standard(1, 1);
        let region = RegionSpec::cusp(1.0, 10.0);
        let rec = orbit(&x, 1.0, 5, &region).unwrap();
        for (i, p) in rec.points.iter().enumerate() {
            let expect = 2.0 + (-1.5f64 + (i as f64 + 1.0) / 2.0).exp();
            assert!((p.tilde_alpha - expect).abs() < 1e-9);
            assert!(expect <= 10.0);
        }
        assert!(rec.visits.iter().all(|&v| !v));
    }

    #[test]
    fn complement_negates_visits() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 2.0).unwrap();
        let region = RegionSpec::cusp(1.0, 2.5);
        let a = orbit(&x, 0.7, 6, &region).unwrap();
        let b = orbit(&x, 0.7, 6, &RegionSpec::complement(region)).unwrap();
        for (u, v) in a.visits.iter().zip(b.visits.iter()) {
            assert_eq!(*u, !*v);
        }
    }

    #[test]
    fn a_set_ball_constraint_and_empty_horizon() {
        let x = UnimodularLattice::standard(1, 1);
        let region = RegionSpec::all();
        let far = DMatrix::from_element(1, 1, 2.0);
        assert!(!in_a_set(&far, &x, 1.0, 1.0, 3, &region).unwrap());
        let near = DMatrix::from_element(1, 1, 0.5);
        assert!(in_a_set(&near, &x, 1.0, 1.0, 0, &RegionSpec::empty()).unwrap());
        // Vacuous dynamics: membership is exactly the ball constraint.
        assert!(in_a_set(&near, &x, 1.0, 1.0, 3, &region).unwrap());
    }

    #[test]
    fn avoids_edge_regions() {
        let x = UnimodularLattice::standard(1, 1);
        assert!(avoids(&x, &RegionSpec::empty(), 1.0, 5).unwrap());
        assert!(!avoids(&x, &RegionSpec::all(), 1.0, 5).unwrap());
    }

    #[test]
    fn avoids_is_monotone_in_horizon() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 1.0).unwrap();
        let region = RegionSpec::cusp(1.0, 2.2);
        for h in 1..8 {
            if avoids(&x, &region, 0.5, h + 1).unwrap() {
                assert!(avoids(&x, &region, 0.5, h).unwrap());
            }
        }
    }

    #[test]
    fn subsampled_orbit_matches_double_step() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 0.8).unwrap();
        let fine = orbit(&x, 0.4, 10, &RegionSpec::empty()).unwrap();
        let coarse = orbit(&x, 0.8, 5, &RegionSpec::empty()).unwrap();
        for i in 0..5 {
            let a1 = fine.points[2 * i + 1].alphas[1];
            let a2 = coarse.points[i].alphas[1];
            assert!((a1 - a2).abs() < 1e-8);
        }
    }

    #[test]
    fn a_set_membership_recurses_along_the_orbit() {
        let mut rng = crate::par::stream_rng(17, 0);
        use rand::Rng;
        let region = RegionSpec::complement(RegionSpec::cusp(1.0, 40.0));
        for _ in 0..100 {
            let t = 1.0 + rng.random::<f64>();
            let s = DMatrix::from_element(1, 1, rng.random::<f64>() - 0.5);
            let x = apply_gt(&UnimodularLattice::standard(1, 1), rng.random::<f64>()).unwrap();
            let n_steps = 3;
            if in_a_set(&s, &x, t, 1.0, n_steps, &region).unwrap() {
                let y = apply_gt(&apply_hs(&x, &s).unwrap(), t).unwrap();
                assert!(region.contains(&y));
                let zero = DMatrix::zeros(1, 1);
                assert!(in_a_set(&zero, &y, t, 1.0, n_steps - 1, &region).unwrap());
            }
        }
    }

    #[test]
    fn eventual_avoidance_matches_shifted_union() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 3.0).unwrap();
        let region = RegionSpec::complement(RegionSpec::cusp(1.0, 2.0 + (-1.5f64).exp() * 2.0));
        let a = 1.0;
        let horizon = 4;
        let burn_in = 3;
        let direct = eventually_avoids(&x, &region, a, horizon, burn_in).unwrap();
        let mut union = false;
        for j in 0..=burn_in {
            let shifted = apply_gt(&x, a * j as f64).unwrap();
            union = union || avoids(&shifted, &region, a, horizon).unwrap();
        }
        assert_eq!(direct, union);
    }

    #[test]
    fn tilde_alpha_matches_profile_along_orbit() {
        let x = apply_gt(&UnimodularLattice::standard(2, 1), 0.5).unwrap();
        let rec = orbit(&x, 1.2, 4, &RegionSpec::empty()).unwrap();
        let mut y = x;
        for p in &rec.points {
            y = apply_gt(&y, 1.2).unwrap();
            assert!((p.tilde_alpha - tilde_alpha(&y, 1.2).unwrap()).abs() < 1e-9);
        }
    }
}
