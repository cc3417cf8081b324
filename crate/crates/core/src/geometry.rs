//! Metric structure on the space of lattices: distance, injectivity
//! radius, Haar sampling, composable regions with measures, inner
//! cores, and the half-measure core scale.

use crate::dirichlet::rc_hit;
use crate::error::{CoreError, Result};
use crate::height::{alpha_total, c_alpha_bounds, tilde_alpha_total};
use crate::lattice::UnimodularLattice;
use crate::matrixfn::{mat_exp, mat_log};
use crate::par::{map_chunks, stream_rng, ExecMode, CHUNK};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Default candidate budget for the distance search.
pub const DIST_DEFAULT_BUDGET: u64 = 100_000;

/// Result of the distance search between two lattices.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DistResult {
    /// Best Frobenius log-norm found; infinity when no candidate lay
    /// in the domain of the principal logarithm.
    pub value: f64,
    /// True when the entry window implied by the current best exceeds
    /// what the budget allowed, so `value` is only an upper bound.
    pub budget_hit: bool,
}

/// Distance between two lattices: the minimum over integer unimodular
/// changes of basis of the Frobenius norm of the principal matrix log
/// of the quotient element.
pub fn dist_x(x: &UnimodularLattice, y: &UnimodularLattice, gamma_budget: u64) -> Result<DistResult> {
    if (x.m(), x.n()) != (y.m(), y.n()) {
        return Err(CoreError::ShapeMismatch {
            expected: format!("split ({}, {})", x.m(), x.n()),
            got: format!("split ({}, {})", y.m(), y.n()),
        });
    }
    let d = x.dim();
    let y_inv = y
        .basis()
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular)?;
    let x_inv = x
        .basis()
        .clone()
        .try_inverse()
        .ok_or(CoreError::Singular)?;
    // Candidates near the real change of basis between the two frames.
    let target = &x_inv * y.basis();
    let gamma0: Vec<i64> = target.iter().map(|v| v.round() as i64).collect();

    // Window width from the budget: (2w+1)^(d^2) candidate boxes.
    let cells = d * d;
    let mut window = 1u64;
    while (2 * (window + 1) + 1).pow(cells as u32) <= gamma_budget {
        window += 1;
    }

    let mut best = f64::INFINITY;
    let mut offsets = vec![0i64; cells];
    let mut gamma_f = DMatrix::zeros(d, d);
    loop {
        // Assemble gamma = gamma0 + offsets (column-major order).
        for (idx, off) in offsets.iter().enumerate() {
            let r = idx % d;
            let c = idx / d;
            gamma_f[(r, c)] = (gamma0[idx] + off) as f64;
        }
        if (gamma_f.determinant() - 1.0).abs() < 0.5 {
            let a = x.basis() * &gamma_f * &y_inv;
            let near = (&a - DMatrix::identity(d, d)).norm();
            // The log-norm is at least log(largest singular value); a
            // matrix far from every candidate best is skipped cheaply.
            if near < best.exp() + 1.0 {
                if let Some(l) = mat_log(&a) {
                    best = best.min(l.norm());
                }
            }
        }
        // Advance the mixed-radix counter over the window box.
        let mut k = 0;
        loop {
            if k == cells {
                // Exhausted.
                let needed = x_inv.norm() * y.basis().norm() * best.min(5.0).exp();
                let max_g0 = gamma0.iter().map(|v| v.abs()).max().unwrap_or(0);
                let budget_hit = best.is_finite()
                    && (needed.ceil() as i64 + max_g0) > window as i64 + max_g0;
                return Ok(DistResult {
                    value: best,
                    budget_hit: budget_hit && needed.ceil() as u64 > window,
                });
            }
            if offsets[k] < window as i64 {
                offsets[k] += 1;
                break;
            }
            offsets[k] = -(window as i64);
            k += 1;
        }
    }
}

/// Conservative lower bound for the injectivity radius at `x`:
/// c_inj * min(1, shortest vector length)^(d^2 - 1).
pub fn injectivity_radius_lb(x: &UnimodularLattice, c_inj: f64) -> f64 {
    let d = x.dim();
    let lambda1 = 1.0 / alpha_total(x, 1);
    c_inj * lambda1.min(1.0).powi((d * d - 1) as i32)
}

/// A composable predicate on the space of lattices.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionKind {
    /// Metric ball around a base point.
    Ball {
        center: UnimodularLattice,
        radius: f64,
    },
    /// Points with composite height above `threshold` at parameter `t`.
    Cusp { t: f64, threshold: f64 },
    /// Lattices avoiding the Dirichlet box with x-block bound `c`.
    Dirichlet { c: f64 },
    Complement { of: Box<RegionSpec> },
    /// The empty list denotes the empty region.
    Intersection { of: Vec<RegionSpec> },
    /// Approximate inner core of `base`: membership requires all group
    /// probes within radius `r` of the identity to stay inside `base`.
    ProbedCore { base: Box<RegionSpec>, r: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionSpec {
    #[serde(flatten)]
    pub kind: RegionKind,
    #[serde(default)]
    pub label: String,
}

impl RegionSpec {
    pub fn new(kind: RegionKind) -> Self {
        RegionSpec {
            kind,
            label: String::new(),
        }
    }

    pub fn labeled(kind: RegionKind, label: &str) -> Self {
        RegionSpec {
            kind,
            label: label.to_string(),
        }
    }

    pub fn ball(center: UnimodularLattice, radius: f64) -> Self {
        RegionSpec::new(RegionKind::Ball { center, radius })
    }

    pub fn cusp(t: f64, threshold: f64) -> Self {
        RegionSpec::new(RegionKind::Cusp { t, threshold })
    }

    pub fn dirichlet(c: f64) -> Self {
        RegionSpec::new(RegionKind::Dirichlet { c })
    }

    pub fn complement(of: RegionSpec) -> Self {
        RegionSpec::new(RegionKind::Complement { of: Box::new(of) })
    }

    pub fn intersection(of: Vec<RegionSpec>) -> Self {
        RegionSpec::new(RegionKind::Intersection { of })
    }

    pub fn empty() -> Self {
        RegionSpec::intersection(vec![])
    }

    pub fn all() -> Self {
        RegionSpec::complement(RegionSpec::empty())
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            RegionKind::Ball { radius, .. } => {
                if *radius <= 0.0 {
                    return Err(CoreError::param("ball radius must be positive"));
                }
            }
            RegionKind::Cusp { t, threshold } => {
                if *t < 1.0 || *threshold <= 0.0 {
                    return Err(CoreError::param("cusp region needs t >= 1 and threshold > 0"));
                }
            }
            RegionKind::Dirichlet { c } => {
                if !(*c > 0.0 && *c <= 1.0) {
                    return Err(CoreError::param("dirichlet c must lie in (0, 1]"));
                }
            }
            RegionKind::Complement { of } => of.validate()?,
            RegionKind::Intersection { of } => {
                for r in of {
                    r.validate()?;
                }
            }
            RegionKind::ProbedCore { base, r } => {
                if *r < 0.0 {
                    return Err(CoreError::param("core radius must be nonnegative"));
                }
                base.validate()?;
            }
        }
        Ok(())
    }

    /// Total membership predicate. Height enumeration failures fall
    /// back to partial lower bounds so this never errors.
    pub fn contains(&self, x: &UnimodularLattice) -> bool {
        match &self.kind {
            RegionKind::Ball { center, radius } => {
                if (center.m(), center.n()) != (x.m(), x.n()) {
                    return false;
                }
                match dist_x(x, center, DIST_DEFAULT_BUDGET) {
                    Ok(res) => res.value < *radius,
                    Err(_) => false,
                }
            }
            RegionKind::Cusp { t, threshold } => tilde_alpha_total(x, *t) > *threshold,
            RegionKind::Dirichlet { c } => !rc_hit(x, *c),
            RegionKind::Complement { of } => !of.contains(x),
            RegionKind::Intersection { of } => !of.is_empty() && of.iter().all(|r| r.contains(x)),
            RegionKind::ProbedCore { base, r } => {
                if !base.contains(x) {
                    return false;
                }
                core_probes(x.m(), x.n(), *r)
                    .iter()
                    .all(|g| base.contains(&x.acted(g)))
            }
        }
    }
}

/// Deterministic probe elements within distance `r` of the identity,
/// used by the approximate inner core.
fn core_probes(m: usize, n: usize, r: f64) -> Vec<DMatrix<f64>> {
    let d = m + n;
    if r == 0.0 {
        return vec![];
    }
    let mut rng = stream_rng(0xC0DE, (r * 1e9) as u64 ^ (d as u64));
    let mut probes = Vec::with_capacity(8);
    for _ in 0..8 {
        let mut xi = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let tr = xi.trace() / d as f64;
        for k in 0..d {
            xi[(k, k)] -= tr;
        }
        let norm = xi.norm();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        probes.push(mat_exp(&(xi * (r * (1.0 - 1e-9) * u.max(0.5) / norm))));
    }
    probes
}

/// Inner r-core of a region: a certified subset for balls and cusp
/// sets, an approximate probed core for everything else.
pub fn inner_core(region: &RegionSpec, r: f64, m: usize, n: usize) -> Result<RegionSpec> {
    if r < 0.0 {
        return Err(CoreError::param("core radius must be nonnegative"));
    }
    if r == 0.0 {
        return Ok(region.clone());
    }
    Ok(match &region.kind {
        RegionKind::Ball { center, radius } => {
            if r >= *radius {
                RegionSpec::empty()
            } else {
                RegionSpec::ball(center.clone(), radius - r)
            }
        }
        RegionKind::Cusp { t, threshold } => {
            // The distortion sandwich certifies the core: raising the
            // threshold by the squared radius-r distortion bound keeps
            // every radius-r neighbor above the original threshold.
            let (_, upper) = c_alpha_bounds(m, n, r, 0, 0)?;
            RegionSpec::cusp(*t, threshold * upper * upper)
        }
        _ => RegionSpec::new(RegionKind::ProbedCore {
            base: Box::new(region.clone()),
            r,
        }),
    })
}

/// Streaming Haar sampler. Exact for d = 2 via the fundamental-domain
/// density; a Metropolis random walk (flagged approximate) for d >= 3.
pub struct HaarSampler {
    m: usize,
    n: usize,
    rng: ChaCha8Rng,
    state: Option<UnimodularLattice>,
    /// True when samples come from the random-walk chain rather than
    /// the exact planar construction.
    pub approximate: bool,
    steps_since_mix: u32,
}

const WALK_STEP: f64 = 0.3;
const WALK_BURN_IN: u32 = 1_000;
const WALK_THIN: u32 = 10;

impl HaarSampler {
    pub fn new(m: usize, n: usize, rng: ChaCha8Rng) -> Result<Self> {
        let d = m + n;
        if d > crate::lattice::MAX_DIM {
            return Err(CoreError::DimensionTooLarge { d });
        }
        let mut sampler = HaarSampler {
            m,
            n,
            rng,
            state: None,
            approximate: d > 2,
            steps_since_mix: 0,
        };
        if d > 2 {
            let mut x = UnimodularLattice::standard(m, n);
            for _ in 0..WALK_BURN_IN {
                x = sampler.walk_step(x);
            }
            sampler.state = Some(x);
        }
        Ok(sampler)
    }

    fn walk_step(&mut self, x: UnimodularLattice) -> UnimodularLattice {
        let d = self.m + self.n;
        let mut xi = DMatrix::from_fn(d, d, |_, _| self.rng.sample::<f64, _>(StandardNormal));
        let tr = xi.trace() / d as f64;
        for k in 0..d {
            xi[(k, k)] -= tr;
        }
        let mut y = x.acted(&mat_exp(&(xi * (WALK_STEP / (d as f64)))));
        self.steps_since_mix += 1;
        if self.steps_since_mix >= WALK_THIN {
            self.steps_since_mix = 0;
            y = crate::lattice::apply_gt(&y, 0.5).expect("mixing step in range");
        }
        // Renormalize drift in the determinant.
        UnimodularLattice::new(y.basis().clone(), self.m, self.n).unwrap_or(y)
    }

    /// Next sample. Every sample passes lattice validation.
    pub fn next_sample(&mut self) -> UnimodularLattice {
        if self.m + self.n == 2 {
            return planar_haar(&mut self.rng);
        }
        let mut x = self.state.take().expect("chain initialized");
        for _ in 0..WALK_THIN {
            x = self.walk_step(x);
        }
        self.state = Some(x.clone());
        x
    }
}

/// Exact planar sample: base point from the fundamental-domain density
/// dv du / v^2 by rejection, then a uniform rotation.
fn planar_haar(rng: &mut ChaCha8Rng) -> UnimodularLattice {
    let v_min = 3f64.sqrt() / 2.0;
    let (u, v) = loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        // Density proportional to 1/v^2 on [v_min, inf).
        let w: f64 = rng.random();
        let v = v_min / (1.0 - w).max(1e-300);
        if u * u + v * v >= 1.0 {
            break (u, v);
        }
    };
    let angle = rng.random::<f64>() * std::f64::consts::TAU;
    let (sin, cos) = angle.sin_cos();
    let scale = 1.0 / v.sqrt();
    let tri = DMatrix::from_row_slice(2, 2, &[scale, scale * u, 0.0, scale * v]);
    let rot = DMatrix::from_row_slice(2, 2, &[cos, -sin, sin, cos]);
    UnimodularLattice::new(rot * tri, 1, 1).expect("construction is unimodular")
}

/// One-shot Haar sample (runs its own burn-in at d >= 3).
pub fn haar_sample(m: usize, n: usize, seed: u64) -> Result<UnimodularLattice> {
    let mut sampler = HaarSampler::new(m, n, stream_rng(seed, 0))?;
    Ok(sampler.next_sample())
}

/// Monte Carlo measure of a region with binomial standard error,
/// chunked over independent substreams.
pub fn measure_estimate(
    region: &RegionSpec,
    m: usize,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    measure_estimate_with_mode(region, m, n, samples, seed, ExecMode::default())
}

pub fn measure_estimate_with_mode(
    region: &RegionSpec,
    m: usize,
    n: usize,
    samples: u64,
    seed: u64,
    mode: ExecMode,
) -> Result<(f64, f64)> {
    if samples < 100 {
        return Err(CoreError::param("measure estimation needs at least 100 samples"));
    }
    region.validate()?;
    let n_chunks = samples.div_ceil(CHUNK);
    let hits: Vec<u64> = map_chunks(mode, n_chunks, |chunk| {
        let mut sampler =
            HaarSampler::new(m, n, stream_rng(seed, chunk)).expect("dims validated");
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(samples);
        let mut h = 0u64;
        for _ in lo..hi {
            if region.contains(&sampler.next_sample()) {
                h += 1;
            }
        }
        h
    });
    let total: u64 = hits.iter().sum();
    let p = total as f64 / samples as f64;
    let stderr = (p * (1.0 - p) / samples as f64).sqrt();
    Ok((p, stderr))
}

/// Largest scale (bisected over (0, 1], 20 rounds, conservative lower
/// endpoint) whose 2 sqrt(mn)-scaled inner core keeps at least half
/// the region's measure.
pub fn theta_u(region: &RegionSpec, m: usize, n: usize, samples: u64, seed: u64) -> Result<f64> {
    let (mu, _) = measure_estimate(region, m, n, samples, seed)?;
    if mu <= 0.0 {
        return Err(CoreError::EmptyRegion);
    }
    let factor = 2.0 * ((m * n) as f64).sqrt();
    let keeps_half = |theta: f64| -> Result<bool> {
        let core = inner_core(region, factor * theta, m, n)?;
        let (mu_core, _) = measure_estimate(&core, m, n, samples, seed)?;
        Ok(mu_core >= 0.5 * mu)
    };
    if keeps_half(1.0)? {
        return Ok(1.0);
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if keeps_half(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        // Clamp into (0, 1] at the final bisection resolution.
        lo = hi * 0.5f64.powi(20);
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{apply_gt, apply_hs};

    #[test]
    fn dist_to_self_is_zero() {
        let x = UnimodularLattice::standard(1, 1);
        let r = dist_x(&x, &x, 10_000).unwrap();
        assert!(r.value < 1e-12);
    }

    #[test]
    fn dist_is_gamma_invariant() {
        let x = UnimodularLattice::standard(1, 1);
        let s = DMatrix::from_element(1, 1, 1.0);
        let y = apply_hs(&x, &s).unwrap(); // integer shear, same lattice
        let r = dist_x(&x, &y, 10_000).unwrap();
        assert!(r.value < 1e-12, "value = {}", r.value);
    }

    #[test]
    fn dist_along_flow_is_sqrt2_t() {
        let x = UnimodularLattice::standard(1, 1);
        for &t in &[0.1, 0.3, 0.5] {
            let y = apply_gt(&x, t).unwrap();
            let r = dist_x(&x, &y, 10_000).unwrap();
            assert!(r.value <= 2f64.sqrt() * t + 1e-10);
            // No shorter route for small t.
            assert!((r.value - 2f64.sqrt() * t).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn dist_symmetry_on_nearby_pairs() {
        let mut rng = stream_rng(11, 0);
        let x0 = UnimodularLattice::standard(1, 1);
        for _ in 0..10 {
            let s = DMatrix::from_element(1, 1, 0.3 * rng.random::<f64>());
            let t = 0.2 * rng.random::<f64>();
            let x = apply_hs(&x0, &s).unwrap();
            let y = apply_gt(&x, t).unwrap();
            let a = dist_x(&x, &y, 10_000).unwrap().value;
            let b = dist_x(&y, &x, 10_000).unwrap().value;
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn injectivity_examples() {
        let x = UnimodularLattice::standard(1, 1);
        assert!((injectivity_radius_lb(&x, 0.1) - 0.1).abs() < 1e-12);
        let deep = apply_gt(&x, 2.0).unwrap();
        let expect = 0.1 * (-3.0f64 * 2.0).exp();
        assert!((injectivity_radius_lb(&deep, 0.1) - expect).abs() < 1e-9);
        // Monotone: deeper cusp, smaller bound.
        assert!(injectivity_radius_lb(&deep, 0.1) < injectivity_radius_lb(&x, 0.1));
    }

    #[test]
    fn haar_planar_samples_validate() {
        let mut s = HaarSampler::new(1, 1, stream_rng(5, 0)).unwrap();
        assert!(!s.approximate);
        for _ in 0..200 {
            let x = s.next_sample();
            assert!((x.basis().determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn haar_walk_samples_validate() {
        let mut s = HaarSampler::new(2, 1, stream_rng(5, 0)).unwrap();
        assert!(s.approximate);
        for _ in 0..20 {
            let x = s.next_sample();
            assert!((x.basis().determinant() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn measure_of_everything_is_one() {
        let (mu, se) = measure_estimate(&RegionSpec::all(), 1, 1, 500, 3).unwrap();
        assert_eq!(mu, 1.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn complement_partitions_unit_mass() {
        let region = RegionSpec::cusp(1.0, 3.0);
        let (a, _) = measure_estimate(&region, 1, 1, 2_000, 9).unwrap();
        let (b, _) = measure_estimate(&RegionSpec::complement(region), 1, 1, 2_000, 9).unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inner_core_identities() {
        let ball = RegionSpec::ball(UnimodularLattice::standard(1, 1), 0.1);
        let same = inner_core(&ball, 0.0, 1, 1).unwrap();
        match same.kind {
            RegionKind::Ball { radius, .. } => assert_eq!(radius, 0.1),
            _ => panic!("kind preserved"),
        }
        let empty = inner_core(&ball, 0.2, 1, 1).unwrap();
        match empty.kind {
            RegionKind::Intersection { ref of } => assert!(of.is_empty()),
            _ => panic!("ball underflow becomes the empty region"),
        }
        assert!(!empty.contains(&UnimodularLattice::standard(1, 1)));
    }

    #[test]
    fn cusp_core_is_contained_in_region() {
        let region = RegionSpec::cusp(1.0, 5.0);
        let core = inner_core(&region, 0.3, 1, 1).unwrap();
        let mut sampler = HaarSampler::new(1, 1, stream_rng(21, 0)).unwrap();
        for _ in 0..1_000 {
            let x = sampler.next_sample();
            if core.contains(&x) {
                assert!(region.contains(&x));
            }
        }
    }

    #[test]
    fn theta_of_everything_is_one() {
        let v = theta_u(&RegionSpec::all(), 1, 1, 200, 4).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn neighborhood_and_core_duality_on_balls() {
        // A point within r of S is never in the inner r-core of S^c.
        let z = UnimodularLattice::standard(1, 1);
        let s_ball = RegionSpec::ball(z.clone(), 0.2);
        let r = 0.15;
        let core_of_complement = inner_core(&RegionSpec::complement(s_ball), r, 1, 1).unwrap();
        for &t in &[0.01, 0.05, 0.1, 0.2] {
            let x = apply_gt(&z, t / 2f64.sqrt()).unwrap(); // dist ~ t
            let near_s = dist_x(&x, &z, 10_000).unwrap().value < 0.2 + r;
            if near_s {
                assert!(!core_of_complement.contains(&x));
            }
        }
    }
}
