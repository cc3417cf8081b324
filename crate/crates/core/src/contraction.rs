//! Monte Carlo verification of the integral contraction inequalities:
//! rotation averages of wedge norms, the one-step drift of the heights,
//! the truncated Gaussian convolution comparison, and the multi-step
//! excursion integral, plus the fit-then-freeze calibration protocol.

use crate::constants::{Constant, ConstantsConfig};
use crate::error::{CoreError, Result};
use crate::exterior::{exterior_power_matrix, MultiVector};
use crate::height::{alpha_all, alpha_total, tilde_alpha_total};
use crate::lattice::{apply_gt, apply_hs, gt_matrix, UnimodularLattice};
use crate::par::{map_chunks, mc_mean, stream_rng, ExecMode, MeanAccum, CHUNK};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A seeded Monte Carlo estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_accum(acc: &MeanAccum, seed: u64) -> Self {
        McEstimate {
            mean: acc.mean(),
            stderr: acc.stderr(),
            samples: acc.count,
            seed,
        }
    }
}

/// Named integrands for the pushed-forward Gaussian average.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "f", rename_all = "snake_case")]
pub enum Integrand {
    AlphaISqrt { i: usize },
    TildeAlpha,
    ConstOne,
}

/// Gaussian shear matrix with iid standard entries.
fn gaussian_shear(rng: &mut ChaCha8Rng, m: usize, n: usize, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Monte Carlo average of `f(g_t h_s x)` with the shear drawn from the
/// standard Gaussian on the shear block.
pub fn i_xt(
    x: &UnimodularLattice,
    t: f64,
    f: Integrand,
    samples: u64,
    seed: u64,
) -> Result<McEstimate> {
    i_xt_with_mode(x, t, f, samples, seed, ExecMode::default())
}

pub fn i_xt_with_mode(
    x: &UnimodularLattice,
    t: f64,
    f: Integrand,
    samples: u64,
    seed: u64,
    mode: ExecMode,
) -> Result<McEstimate> {
    if samples < 1_000 {
        return Err(CoreError::param("need at least 1000 samples"));
    }
    if t < 1.0 {
        return Err(CoreError::param("t must be >= 1"));
    }
    if let Integrand::AlphaISqrt { i } = f {
        if i > x.dim() {
            return Err(CoreError::IndexOutOfRange { i, max: x.dim() });
        }
    }
    let (m, n) = (x.m(), x.n());
    let acc = mc_mean(mode, samples, seed, |rng| {
        let s = gaussian_shear(rng, m, n, 1.0);
        let y = apply_gt(&apply_hs(x, &s).expect("shape fixed"), t).expect("t in range");
        match f {
            Integrand::ConstOne => 1.0,
            Integrand::AlphaISqrt { i } => alpha_total(&y, i).sqrt(),
            Integrand::TildeAlpha => tilde_alpha_total(&y, t),
        }
    });
    Ok(McEstimate::from_accum(&acc, seed))
}

/// Haar-uniform rotation via QR of a Gaussian matrix with positive
/// diagonal correction and a determinant fix.
pub fn so_haar(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..d {
            q[(i, d - 1)] = -q[(i, d - 1)];
        }
    }
    q
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationDecayRow {
    pub t: f64,
    pub estimate: McEstimate,
    /// Estimate divided by e^{-t/2} ||v||^{-1/2}.
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RotationDecayReport {
    pub rows: Vec<RotationDecayRow>,
    /// Least-squares slope of log(estimate) against t.
    pub log_slope: f64,
}

/// Rotation average of the inverse square-root wedge norm per flow
/// time, with the decay ratio and fitted exponential rate.
pub fn verify_rotation_decay(
    v: &MultiVector,
    t_list: &[f64],
    samples: u64,
    seed: u64,
) -> Result<RotationDecayReport> {
    if !v.is_decomposable(1e-8) {
        return Err(CoreError::NonDecomposable);
    }
    if samples < 1_000 {
        return Err(CoreError::param("need at least 1000 samples"));
    }
    let d = v.dim;
    let degree = v.degree;
    let norm = v.norm();
    let mut rows = Vec::with_capacity(t_list.len());
    for (idx, &t) in t_list.iter().enumerate() {
        let gt = gt_matrix(d / 2 + d % 2, d / 2, t);
        // The split (m, n) only matters through the diagonal flow; the
        // caller's wedge lives in plain R^d, so infer m from d evenly.
        let gt = if d % 2 == 0 {
            gt
        } else {
            gt_matrix(1, d - 1, t)
        };
        let acc = mc_mean(ExecMode::default(), samples, seed ^ (idx as u64), |rng| {
            let k = so_haar(rng, d);
            let a = &gt * &k;
            if degree == 1 {
                let w = &a * DVector::from_column_slice(&v.coeffs);
                w.norm().powf(-0.5)
            } else {
                let m_ext = exterior_power_matrix(&a, degree);
                let w = m_ext * DVector::from_column_slice(&v.coeffs);
                w.norm().powf(-0.5)
            }
        });
        let est = McEstimate::from_accum(&acc, seed ^ (idx as u64));
        let ratio = est.mean / ((-t / 2.0).exp() * norm.powf(-0.5));
        rows.push(RotationDecayRow {
            t,
            estimate: est,
            ratio,
        });
    }
    // Regression of log mean on t.
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.estimate.mean > 0.0)
        .map(|r| (r.t, r.estimate.mean.ln()))
        .collect();
    let log_slope = if pts.len() < 2 {
        0.0
    } else {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    };
    Ok(RotationDecayReport { rows, log_slope })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaContractionReport {
    pub lhs: McEstimate,
    pub rhs: f64,
    pub holds: bool,
}

/// One-step drift of a single height: the Gaussian average of the
/// square-root height against the contraction-plus-neighbors bound.
pub fn verify_alpha_contraction(
    x: &UnimodularLattice,
    i: usize,
    t: f64,
    samples: u64,
    seed: u64,
    c_0: f64,
) -> Result<AlphaContractionReport> {
    let d = x.dim();
    if i == 0 || i >= d {
        return Err(CoreError::IndexOutOfRange { i, max: d - 1 });
    }
    let lhs = i_xt(x, t, Integrand::AlphaISqrt { i }, samples, seed)?;
    let alphas = alpha_all(x)?;
    let mn = (x.m() * x.n()) as f64;
    let mut neighbor_max: f64 = 0.0;
    for j in 1..=i.min(d - i) {
        let term = (alphas[i + j].sqrt() * alphas[i - j].sqrt()).sqrt();
        neighbor_max = neighbor_max.max(term);
    }
    let rhs = c_0 * ((-t / 2.0).exp() * alphas[i].sqrt() + (mn * t).exp() * neighbor_max);
    Ok(AlphaContractionReport {
        holds: lhs.mean - 3.0 * lhs.stderr <= rhs,
        lhs,
        rhs,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TildeContractionReport {
    pub lhs: McEstimate,
    pub tilde_x: f64,
    pub rhs_a: f64,
    pub holds_a: bool,
    /// Present only when the point is high enough in the cusp for the
    /// additive constant to be absorbed.
    pub rhs_b: Option<f64>,
    pub holds_b: Option<bool>,
}

/// One-step drift of the composite height against both forms of the
/// contraction bound.
pub fn verify_tilde_contraction(
    x: &UnimodularLattice,
    t: f64,
    samples: u64,
    seed: u64,
    c_0: f64,
) -> Result<TildeContractionReport> {
    let lhs = i_xt(x, t, Integrand::TildeAlpha, samples, seed)?;
    let tilde_x = tilde_alpha_total(x, t);
    let decay = (-t / 2.0).exp();
    let rhs_a = 2.0 + 2.0 * c_0 * decay * tilde_x;
    let holds_a = lhs.mean - 3.0 * lhs.stderr <= rhs_a;
    let (rhs_b, holds_b) = if tilde_x > (t / 2.0).exp() / c_0 {
        let rb = 4.0 * c_0 * decay * tilde_x;
        (Some(rb), Some(lhs.mean - 3.0 * lhs.stderr <= rb))
    } else {
        (None, None)
    };
    Ok(TildeContractionReport {
        lhs,
        tilde_x,
        rhs_a,
        holds_a,
        rhs_b,
        holds_b,
    })
}

/// Named nonnegative test integrands on the shear block.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "f", rename_all = "snake_case")]
pub enum ConvIntegrand {
    One,
    /// Indicator of the box [0, 1/2]^{mn}.
    HalfBox,
}

impl ConvIntegrand {
    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            ConvIntegrand::One => 1.0,
            ConvIntegrand::HalfBox => {
                if z.iter().all(|&v| (0.0..=0.5).contains(&v)) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionReport {
    pub lhs: McEstimate,
    pub rhs_core: McEstimate,
    pub xi_hat: f64,
    pub xi_stderr: f64,
    pub holds: bool,
}

/// Compare the truncated two-variable Gaussian smoothing of `f` with
/// its single widened truncation; their ratio must stay above the
/// configured floor.
pub fn verify_gaussian_convolution(
    mn: usize,
    f: ConvIntegrand,
    eps: f64,
    delta: f64,
    samples: u64,
    seed: u64,
    xi_floor: f64,
) -> Result<ConvolutionReport> {
    if !(eps > 0.0 && eps <= 0.125) || !(0.0..1.0).contains(&delta) {
        return Err(CoreError::hypothesis(
            "epsdelta1",
            format!("need 0 < eps <= 1/8 and 0 <= delta < 1, got ({eps}, {delta})"),
        ));
    }
    if samples < 1_000 {
        return Err(CoreError::param("need at least 1000 samples"));
    }
    let sigma_x = (1.0 + delta * delta).sqrt();
    let sigma_z = (1.0 + eps * eps * (1.0 + delta * delta)).sqrt();
    let draw = |rng: &mut ChaCha8Rng, sigma: f64, out: &mut [f64]| {
        for v in out.iter_mut() {
            *v = sigma * rng.sample::<f64, _>(StandardNormal);
        }
    };
    let norm_ok = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() <= 1.0;

    let lhs_acc = mc_mean(ExecMode::default(), samples, seed, |rng| {
        let mut xv = vec![0.0; mn];
        let mut yv = vec![0.0; mn];
        draw(rng, sigma_x, &mut xv);
        draw(rng, 1.0, &mut yv);
        if !norm_ok(&xv) || !norm_ok(&yv) {
            return 0.0;
        }
        let z: Vec<f64> = xv.iter().zip(yv.iter()).map(|(a, b)| eps * a + b).collect();
        let val = f.eval(&z);
        debug_assert!(val >= 0.0);
        val
    });
    let rhs_acc = mc_mean(ExecMode::default(), samples, seed ^ 0x5EED, |rng| {
        let mut zv = vec![0.0; mn];
        draw(rng, sigma_z, &mut zv);
        if !norm_ok(&zv) {
            return 0.0;
        }
        f.eval(&zv)
    });
    let lhs = McEstimate::from_accum(&lhs_acc, seed);
    let rhs = McEstimate::from_accum(&rhs_acc, seed ^ 0x5EED);
    if rhs.mean <= 0.0 {
        return Err(CoreError::param("core integral vanished at this sample budget"));
    }
    let xi_hat = lhs.mean / rhs.mean;
    let xi_stderr = xi_hat
        * ((lhs.stderr / lhs.mean.max(1e-300)).powi(2) + (rhs.stderr / rhs.mean).powi(2)).sqrt();
    Ok(ConvolutionReport {
        lhs,
        rhs_core: rhs,
        xi_hat,
        xi_stderr,
        holds: xi_hat >= xi_floor - 3.0 * xi_stderr,
    })
}

/// Euclidean unit ball volumes by dimension (1 through 9).
pub fn unit_ball_volume(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        4 => PI * PI / 2.0,
        5 => 8.0 * PI * PI / 15.0,
        6 => PI.powi(3) / 6.0,
        7 => 16.0 * PI.powi(3) / 105.0,
        8 => PI.powi(4) / 24.0,
        9 => 32.0 * PI.powi(4) / 945.0,
        _ => panic!("unsupported ball dimension {dim}"),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MultiStepParams {
    pub k: u64,
    pub t: f64,
    pub n_steps: u64,
    /// Distortion constant used to set the excursion threshold.
    pub c_alpha: f64,
    /// Excursion constant of the bound.
    pub c_1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiStepReport {
    pub lhs: McEstimate,
    pub rhs: f64,
    pub holds: bool,
    /// No sampled shear entered the excursion set; the integral is then
    /// trivially zero.
    pub a_set_empty: bool,
    pub hit_fraction: f64,
}

/// Lebesgue integral, over the excursion set of shears whose orbit
/// stays above the cusp threshold at every multiple of kt (checked one
/// flow step early), of the final composite height, against the
/// geometric excursion bound.
pub fn verify_multi_step(
    x: &UnimodularLattice,
    params: &MultiStepParams,
    samples: u64,
    seed: u64,
) -> Result<MultiStepReport> {
    let MultiStepParams {
        k,
        t,
        n_steps,
        c_alpha,
        c_1,
    } = *params;
    if k < 2 {
        return Err(CoreError::param("k must be at least 2"));
    }
    if t < 2.0 {
        return Err(CoreError::param("t must be at least 2"));
    }
    if n_steps < 1 {
        return Err(CoreError::param("need at least one block"));
    }
    if c_alpha < 1.0 {
        return Err(CoreError::param("c_alpha must be >= 1"));
    }
    let (m, n) = (x.m(), x.n());
    let mn = (m * n) as f64;
    let total_exponent = (n_steps * k) as f64 * t * m.max(n) as f64;
    if total_exponent > 700.0 {
        return Err(CoreError::OverflowScale {
            exponent: total_exponent,
        });
    }
    let m_threshold = c_alpha * c_alpha.max(1.0) * (mn * t / 2.0).exp();
    let gate = c_alpha * m_threshold;

    let mn_dim = m * n;
    let n_chunks = samples.div_ceil(CHUNK);
    let partials: Vec<(MeanAccum, u64)> = map_chunks(ExecMode::default(), n_chunks, |chunk| {
        let mut rng = stream_rng(seed, chunk);
        let lo = chunk * CHUNK;
        let hi = (lo + CHUNK).min(samples);
        let mut acc = MeanAccum::default();
        let mut hits = 0u64;
        for _ in lo..hi {
            // Uniform shear in the Euclidean unit ball.
            let mut dir = vec![0.0f64; mn_dim];
            let mut norm_sq = 0.0;
            for v in dir.iter_mut() {
                *v = rng.sample::<f64, _>(StandardNormal);
                norm_sq += *v * *v;
            }
            let u: f64 = rng.random();
            let scale = u.powf(1.0 / mn_dim as f64) / norm_sq.sqrt().max(1e-300);
            let s = DMatrix::from_fn(m, n, |r, c| dir[r * n + c] * scale);

            let mut y = apply_hs(x, &s).expect("shape fixed");
            y = apply_gt(&y, (k as f64 - 1.0) * t).expect("exponent checked");
            let mut inside = tilde_alpha_total(&y, t) > gate;
            for _ in 1..n_steps {
                if !inside {
                    break;
                }
                y = apply_gt(&y, k as f64 * t).expect("exponent checked");
                inside = tilde_alpha_total(&y, t) > gate;
            }
            if inside {
                // Final point of the block orbit.
                y = apply_gt(&y, t).expect("exponent checked");
                hits += 1;
                acc.push(tilde_alpha_total(&y, t));
            } else {
                acc.push(0.0);
            }
        }
        (acc, hits)
    });
    let mut acc = MeanAccum::default();
    let mut hits = 0u64;
    for (a, h) in partials {
        acc = acc.merge(a);
        hits += h;
    }
    let vol = unit_ball_volume(mn_dim);
    let lhs = McEstimate {
        mean: acc.mean() * vol,
        stderr: acc.stderr() * vol,
        samples: acc.count,
        seed,
    };
    let tilde_x = tilde_alpha_total(x, t).max(1.0);
    let per_block = (k as f64 - 1.0) * c_1.powi(k as i32) * (-t / 2.0).exp();
    let rhs = per_block.powi(n_steps as i32) * tilde_x;
    Ok(MultiStepReport {
        holds: lhs.mean - 3.0 * lhs.stderr <= rhs,
        a_set_empty: hits == 0,
        hit_fraction: hits as f64 / samples as f64,
        lhs,
        rhs,
    })
}

/// Iterated one-step bound: applying the additive contraction k-1
/// times starting from the height of the base point.
pub fn tilde_chain_bound(c_0: f64, t: f64, k: u64, tilde_x: f64) -> f64 {
    let decay = 2.0 * c_0 * (-t / 2.0).exp();
    let mut bound = tilde_x;
    for _ in 0..k.saturating_sub(1) {
        bound = 2.0 + decay * bound;
    }
    bound
}

// ---------------------------------------------------------------------------
// Calibration: fit the loose constants on a fixed grid, then freeze.
// ---------------------------------------------------------------------------

/// Serializable description of a calibration run, hashed into the
/// fitted config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub m: usize,
    pub n: usize,
    pub lattice_count: usize,
    pub t_values: Vec<f64>,
    pub samples: u64,
    pub seed: u64,
}

impl CalibrationSpec {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Deterministic family of lattices mixing random points with cusp
/// excursions and shears; `stream` separates calibration from holdout.
pub fn calibration_lattices(
    m: usize,
    n: usize,
    count: usize,
    seed: u64,
    stream: u64,
) -> Vec<UnimodularLattice> {
    let mut rng = stream_rng(seed, 0x9A11E7 ^ stream);
    let mut out = Vec::with_capacity(count);
    let mut sampler =
        crate::geometry::HaarSampler::new(m, n, stream_rng(seed, 0xAA ^ stream)).expect("dims ok");
    for idx in 0..count {
        let x = match idx % 3 {
            0 => sampler.next_sample(),
            1 => {
                let tau = 0.5 + 7.0 * rng.random::<f64>();
                apply_gt(&UnimodularLattice::standard(m, n), tau).expect("tau in range")
            }
            _ => {
                let s = gaussian_shear(&mut rng, m, n, 0.4);
                let tau = 4.0 * rng.random::<f64>();
                let base = apply_hs(&UnimodularLattice::standard(m, n), &s).expect("shape");
                apply_gt(&base, tau).expect("tau in range")
            }
        };
        out.push(x);
    }
    out
}

/// Smallest drift constant (with 10% headroom, floored at 1) making
/// both forms of the one-step bound hold across the grid.
pub fn fit_c0(spec: &CalibrationSpec) -> Result<f64> {
    let lattices = calibration_lattices(spec.m, spec.n, spec.lattice_count, spec.seed, 0);
    let mut needed = 1.0f64;
    for (li, x) in lattices.iter().enumerate() {
        for (ti, &t) in spec.t_values.iter().enumerate() {
            let lhs = i_xt(
                x,
                t,
                Integrand::TildeAlpha,
                spec.samples,
                spec.seed ^ ((li as u64) << 8) ^ ti as u64,
            )?;
            let tilde_x = tilde_alpha_total(x, t);
            let denom_a = 2.0 * (-t / 2.0).exp() * tilde_x;
            needed = needed.max((lhs.mean - 2.0) / denom_a);
            if tilde_x >= (t / 2.0).exp() {
                let denom_b = 4.0 * (-t / 2.0).exp() * tilde_x;
                needed = needed.max(lhs.mean / denom_b);
            }
        }
    }
    Ok(needed * 1.1)
}

/// Smallest excursion constant (10% headroom, floored at 1) covering
/// the multi-step integral over deep starts. Run with the distortion
/// constant set to 1 so the excursion sets are nonempty at desk scale.
pub fn fit_c1(spec: &CalibrationSpec, k: u64, n_steps_list: &[u64]) -> Result<f64> {
    let mut needed = 1.0f64;
    for (idx, tau) in (4..=13).enumerate() {
        let x = apply_gt(&UnimodularLattice::standard(spec.m, spec.n), tau as f64)?;
        for &t in &spec.t_values {
            if t < 2.0 {
                continue;
            }
            for &n_steps in n_steps_list {
                let report = verify_multi_step(
                    &x,
                    &MultiStepParams {
                        k,
                        t,
                        n_steps,
                        c_alpha: 1.0,
                        c_1: 1.0,
                    },
                    spec.samples,
                    spec.seed ^ ((idx as u64) << 16) ^ n_steps,
                )?;
                if report.lhs.mean > 0.0 {
                    let tilde_x = tilde_alpha_total(&x, t).max(1.0);
                    let base = report.lhs.mean / tilde_x;
                    let per_block = base.powf(1.0 / n_steps as f64);
                    let c1k = per_block * (t / 2.0).exp() / (k as f64 - 1.0);
                    if c1k > 0.0 {
                        needed = needed.max(c1k.powf(1.0 / k as f64));
                    }
                }
            }
        }
    }
    Ok(needed * 1.1)
}

/// Largest ratio floor (10% headroom downward) below every observed
/// convolution ratio on the calibration grid.
pub fn fit_xi(spec: &CalibrationSpec) -> Result<f64> {
    let mn = spec.m * spec.n;
    let mut floor = f64::INFINITY;
    for (i, &eps) in [0.125, 0.0625, 0.03125].iter().enumerate() {
        for (j, &delta) in [0.0, 0.25, 0.5].iter().enumerate() {
            for (fi, f) in [ConvIntegrand::One, ConvIntegrand::HalfBox].iter().enumerate() {
                let rep = verify_gaussian_convolution(
                    mn,
                    *f,
                    eps,
                    delta,
                    spec.samples,
                    spec.seed ^ ((i as u64) << 24) ^ ((j as u64) << 16) ^ fi as u64,
                    0.0,
                )?;
                floor = floor.min(rep.xi_hat);
            }
        }
    }
    Ok((floor / 1.1).max(1e-6))
}

/// Run the whole calibration protocol and return a config with the
/// three loose constants fitted and frozen.
pub fn fit_constants(m: usize, n: usize, samples: u64, seed: u64) -> Result<ConstantsConfig> {
    let spec = CalibrationSpec {
        m,
        n,
        lattice_count: 50,
        t_values: vec![1.0, 2.0, 3.0, 4.0],
        samples,
        seed,
    };
    let hash = spec.hash();
    let c0 = fit_c0(&spec)?;
    let c1 = fit_c1(&spec, 2, &[1, 2])?;
    let xi = fit_xi(&spec)?;
    let mut config = ConstantsConfig::default_for(m, n);
    config.c_0 = Constant::fitted(c0, format!("calibration {hash}"));
    config.c_1 = Constant::fitted(c1, format!("calibration {hash}"));
    config.xi = Constant::fitted(xi, format!("calibration {hash}"));
    config.calibration_hash = Some(hash);
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_one_is_exact() {
        let x = UnimodularLattice::standard(1, 1);
        let est = i_xt(&x, 1.0, Integrand::ConstOne, 1_000, 3).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn seeds_reproduce_bitwise_and_agree_statistically() {
        let x = UnimodularLattice::standard(1, 1);
        let a = i_xt(&x, 2.0, Integrand::TildeAlpha, 4_000, 7).unwrap();
        let b = i_xt(&x, 2.0, Integrand::TildeAlpha, 4_000, 7).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        let c = i_xt(&x, 2.0, Integrand::TildeAlpha, 4_000, 8).unwrap();
        assert!((a.mean - c.mean).abs() <= 3.0 * (a.stderr + c.stderr));
    }

    #[test]
    fn doubling_samples_shrinks_stderr() {
        let x = UnimodularLattice::standard(1, 1);
        let mut ratio_sum = 0.0;
        for rep in 0..10u64 {
            let small = i_xt(&x, 2.0, Integrand::TildeAlpha, 2_000, 100 + rep).unwrap();
            let big = i_xt(&x, 2.0, Integrand::TildeAlpha, 4_000, 200 + rep).unwrap();
            ratio_sum += big.stderr / small.stderr;
        }
        let mean_ratio = ratio_sum / 10.0;
        assert!(mean_ratio <= 1.0 / (2f64.sqrt() * 0.9), "ratio = {mean_ratio}");
    }

    #[test]
    fn rotation_sampler_is_orthogonal_and_centered() {
        let mut rng = stream_rng(5, 0);
        let mut mean = [0.0f64; 2];
        let reps = 4_000;
        for _ in 0..reps {
            let q = so_haar(&mut rng, 2);
            let qd = &q * q.transpose();
            assert!((qd - DMatrix::identity(2, 2)).norm() < 1e-12);
            assert!((q.determinant() - 1.0).abs() < 1e-10);
            mean[0] += q[(0, 0)];
            mean[1] += q[(1, 0)];
        }
        let se = 1.0 / (reps as f64).sqrt();
        assert!(mean[0].abs() / reps as f64 <= 3.0 * se);
        assert!(mean[1].abs() / reps as f64 <= 3.0 * se);
    }

    #[test]
    fn rotation_decay_control_at_t_zero() {
        let v = MultiVector::new(2, 1, vec![1.0, 0.0]).unwrap();
        let rep = verify_rotation_decay(&v, &[0.0, 1.0], 2_000, 9).unwrap();
        // Rotations preserve degree-1 norms, so the t = 0 estimate is
        // exactly 1 with zero variance.
        assert_eq!(rep.rows[0].estimate.mean, 1.0);
        assert_eq!(rep.rows[0].estimate.stderr, 0.0);
        assert!(rep.rows[1].estimate.mean < 1.0);
    }

    #[test]
    fn rotation_decay_rejects_nondecomposable() {
        let mut coeffs = vec![0.0; 6];
        coeffs[0] = 1.0; // e0^e1
        coeffs[5] = 1.0; // e2^e3
        let v = MultiVector::new(4, 2, coeffs).unwrap();
        assert!(matches!(
            verify_rotation_decay(&v, &[1.0], 1_000, 1),
            Err(CoreError::NonDecomposable)
        ));
    }

    #[test]
    fn alpha_contraction_on_standard_lattice() {
        let x = UnimodularLattice::standard(1, 1);
        let rep = verify_alpha_contraction(&x, 1, 2.0, 5_000, 11, 2.0).unwrap();
        // Neighbor term alone is c_0 e^{mnt} >= lhs at moderate t.
        assert!(rep.rhs >= 2.0 * (2.0f64).exp() * ((-1.0f64).exp() + 0.0));
        assert!(rep.holds);
    }

    #[test]
    fn tilde_contraction_pointwise_floor() {
        let x = UnimodularLattice::standard(1, 1);
        let rep = verify_tilde_contraction(&x, 2.0, 5_000, 13, 2.0).unwrap();
        assert!(rep.lhs.mean >= 2.0 - 3.0 * rep.lhs.stderr);
        assert!(rep.holds_a);
        assert!(rep.rhs_b.is_none(), "standard lattice is not in the cusp window");
    }

    #[test]
    fn convolution_constant_integrand() {
        let rep =
            verify_gaussian_convolution(1, ConvIntegrand::One, 0.125, 0.5, 20_000, 17, 0.01)
                .unwrap();
        assert!(rep.xi_hat > 0.0 && rep.xi_hat <= 1.0 + 3.0 * rep.xi_stderr);
        assert!(rep.holds);
    }

    #[test]
    fn convolution_rejects_bad_window() {
        let err = verify_gaussian_convolution(1, ConvIntegrand::One, 0.2, 0.5, 2_000, 1, 0.0);
        assert!(matches!(err, Err(CoreError::HypothesisViolated { .. })));
    }

    #[test]
    fn multi_step_low_orbit_is_empty() {
        let x = UnimodularLattice::standard(1, 1);
        let config = ConstantsConfig::default_for(1, 1);
        let rep = verify_multi_step(
            &x,
            &MultiStepParams {
                k: 2,
                t: 3.0,
                n_steps: 1,
                c_alpha: config.c_alpha.value,
                c_1: 2.0,
            },
            4_000,
            23,
        )
        .unwrap();
        assert!(rep.a_set_empty);
        assert_eq!(rep.lhs.mean, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn multi_step_deep_start_is_nonempty_with_unit_distortion() {
        let x = apply_gt(&UnimodularLattice::standard(1, 1), 8.0).unwrap();
        let rep = verify_multi_step(
            &x,
            &MultiStepParams {
                k: 2,
                t: 2.0,
                n_steps: 1,
                c_alpha: 1.0,
                c_1: 2.0,
            },
            20_000,
            29,
        )
        .unwrap();
        assert!(!rep.a_set_empty);
        assert!(rep.lhs.mean > 0.0);
        assert!(rep.holds, "lhs = {} rhs = {}", rep.lhs.mean, rep.rhs);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-15);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
    }
}
