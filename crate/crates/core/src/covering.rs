//! Box counting of orbit avoidance sets in the shear parameter space,
//! the covering-number bound formulas, the dimension-bound pipeline,
//! and the combinatorial subset inequality.

use crate::constants::ConstantsConfig;
use crate::error::{CoreError, Result};
use crate::geometry::{inner_core, measure_estimate, RegionSpec};
use crate::height::tilde_alpha_total;
use crate::lattice::{apply_gt, apply_hs, UnimodularLattice};
use crate::par::{map_chunks, ExecMode};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Hard cap on grid cells for one ladder rung.
pub const GRID_CELL_BUDGET: u64 = 100_000_000;

/// Measure samples used when a bound formula needs a core measure.
const BOUND_MEASURE_SAMPLES: u64 = 20_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverReport {
    /// Cube side lengths, decreasing.
    pub scales: Vec<f64>,
    pub counts: Vec<u64>,
    /// Least-squares slope of log(count) against log(1/side).
    pub slope: f64,
    /// Formula counts at matching scales, when hypotheses allow them.
    pub bound_counts: Option<Vec<f64>>,
    pub params: serde_json::Value,
}

/// Least-squares slope of log(count) on log(1/side), ignoring empty
/// rungs; 0 when fewer than two rungs carry data.
pub fn fit_log_slope(scales: &[f64], counts: &[u64]) -> f64 {
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .zip(counts.iter())
        .filter(|(_, &c)| c > 0)
        .map(|(&s, &c)| ((1.0 / s).ln(), (c as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (n * sxy - sx * sy) / denom
}

/// Count grid cubes of the given side over [-radius, radius]^{mn} that
/// meet the predicate. Membership is sampled at the center plus every
/// corner; a cube counts when any sample point is inside.
pub fn count_cubes<P>(predicate: P, mn: usize, radius: f64, side: f64, exec: ExecMode) -> Result<u64>
where
    P: Fn(&[f64]) -> bool + Sync + Send,
{
    if side <= 0.0 || radius <= 0.0 {
        return Err(CoreError::param("side and radius must be positive"));
    }
    let per_axis = (2.0 * radius / side).ceil() as u128;
    let total = per_axis.pow(mn as u32);
    if total > GRID_CELL_BUDGET as u128 {
        return Err(CoreError::GridBudgetExceeded {
            cells: total,
            budget: GRID_CELL_BUDGET,
        });
    }
    let per_axis = per_axis as u64;
    let total = total as u64;
    let corners = 1u32 << mn;
    let chunk = 4096u64;
    let n_chunks = total.div_ceil(chunk);
    let hits: Vec<u64> = map_chunks(exec, n_chunks, |ci| {
        let lo = ci * chunk;
        let hi = (lo + chunk).min(total);
        let mut count = 0u64;
        let mut point = vec![0.0f64; mn];
        for flat in lo..hi {
            let mut rem = flat;
            let mut idx = vec![0u64; mn];
            for slot in idx.iter_mut() {
                *slot = rem % per_axis;
                rem /= per_axis;
            }
            let mut inside = false;
            // Center first, then the corners.
            for axis in 0..mn {
                point[axis] = -radius + (idx[axis] as f64 + 0.5) * side;
            }
            if predicate(&point) {
                inside = true;
            }
            if !inside {
                for corner in 0..corners {
                    for axis in 0..mn {
                        let offset = if corner & (1 << axis) != 0 { 1.0 } else { 0.0 };
                        point[axis] = -radius + (idx[axis] as f64 + offset) * side;
                    }
                    if predicate(&point) {
                        inside = true;
                        break;
                    }
                }
            }
            if inside {
                count += 1;
            }
        }
        count
    });
    Ok(hits.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxMode {
    /// Orbit stays in a given compact target set.
    Compact,
    /// Orbit stays above the compactness threshold in the cusp.
    Cusp,
    /// Orbit avoids a given open region.
    Avoidance,
}

#[derive(Debug, Clone)]
pub struct BoxCountParams {
    pub t: f64,
    pub k: u64,
    pub n_ladder: Vec<u64>,
    pub theta: f64,
    pub r: f64,
    pub mode: BoxMode,
    pub measure_seed: u64,
}

/// Box-count the orbit set of the requested mode over a ladder of
/// horizons, pairing each empirical count with the formula bound when
/// the formula's hypotheses pass.
pub fn box_count(
    x: &UnimodularLattice,
    region: &RegionSpec,
    params: &BoxCountParams,
    config: &ConstantsConfig,
) -> Result<CoverReport> {
    box_count_with_mode(x, region, params, config, ExecMode::default())
}

pub fn box_count_with_mode(
    x: &UnimodularLattice,
    region: &RegionSpec,
    params: &BoxCountParams,
    config: &ConstantsConfig,
    exec: ExecMode,
) -> Result<CoverReport> {
    config.validate()?;
    let m = x.m();
    let n = x.n();
    let mn = m * n;
    let mnf = mn as f64;
    let d = (m + n) as f64;
    let theta = params.theta;
    let r = params.r;
    let t = params.t;
    let k = params.k;
    let theta_hi = 1.0 / (2.0 * mnf.sqrt());
    if params.mode != BoxMode::Cusp && !(theta >= 4.0 * r && theta <= theta_hi) {
        return Err(CoreError::InvalidTheta {
            theta,
            lo: 4.0 * r,
            hi: theta_hi,
        });
    }
    if params.mode == BoxMode::Cusp && !(theta > 0.0 && theta <= 1.0 / mnf.sqrt()) {
        return Err(CoreError::InvalidTheta {
            theta,
            lo: 0.0,
            hi: 1.0 / mnf.sqrt(),
        });
    }

    let mut scales = Vec::new();
    let mut counts = Vec::new();
    let mut bounds = Vec::new();
    let mut bounds_ok = true;

    for &horizon in &params.n_ladder {
        let (radius, step, side) = match params.mode {
            BoxMode::Compact => {
                let side = theta * (-d * horizon as f64 * t).exp();
                (r / (32.0 * mnf.sqrt()), t, side)
            }
            BoxMode::Cusp | BoxMode::Avoidance => {
                let side = theta * (-d * horizon as f64 * k as f64 * t).exp();
                let radius = if params.mode == BoxMode::Cusp {
                    1.0
                } else {
                    r / (32.0 * mnf.sqrt())
                };
                (radius, k as f64 * t, side)
            }
        };
        if side < 1e-14 {
            return Err(CoreError::param(format!(
                "cube side {side} below the floating floor; shrink the ladder"
            )));
        }
        let cusp_threshold = config.c_alpha.value.powi(3) * (mnf * t).exp();
        let predicate = |s_flat: &[f64]| -> bool {
            let norm_sq: f64 = s_flat.iter().map(|v| v * v).sum();
            if norm_sq >= radius * radius {
                return false;
            }
            let s = DMatrix::from_fn(m, n, |rr, cc| s_flat[rr * n + cc]);
            let Ok(mut y) = apply_hs(x, &s) else {
                return false;
            };
            for _ in 0..horizon {
                y = match apply_gt(&y, step) {
                    Ok(v) => v,
                    Err(_) => return false,
                };
                let keep = match params.mode {
                    BoxMode::Compact => region.contains(&y),
                    BoxMode::Cusp => tilde_alpha_total(&y, t) > cusp_threshold,
                    BoxMode::Avoidance => !region.contains(&y),
                };
                if !keep {
                    return false;
                }
            }
            true
        };
        let count = count_cubes(predicate, mn, radius, side, exec)?;
        scales.push(side);
        counts.push(count);

        if bounds_ok {
            let bound = match params.mode {
                BoxMode::Compact => {
                    let core = inner_core(
                        &RegionSpec::complement(region.clone()),
                        2.0 * mnf.sqrt() * theta,
                        m,
                        n,
                    )?;
                    let (mu, _) =
                        measure_estimate(&core, m, n, BOUND_MEASURE_SAMPLES, params.measure_seed)?;
                    cover_bound_compact(
                        &CompactBoundParams {
                            r,
                            theta,
                            t,
                            n_steps: horizon,
                            mu_core_complement: mu,
                        },
                        config,
                    )
                }
                BoxMode::Cusp => cusp_cover_bound(x, t, k, horizon, theta, config),
                BoxMode::Avoidance => {
                    let core = inner_core(region, 2.0 * mnf.sqrt() * theta, m, n)?;
                    let (mu, _) =
                        measure_estimate(&core, m, n, BOUND_MEASURE_SAMPLES, params.measure_seed)?;
                    cover_bound_main(
                        &MainBoundParams {
                            r,
                            theta,
                            t,
                            k,
                            n_steps: horizon,
                            mu_core: mu,
                        },
                        config,
                    )
                }
            };
            match bound {
                Ok(b) => bounds.push(b),
                Err(CoreError::HypothesisViolated { .. }) => {
                    bounds_ok = false;
                }
                Err(e) => return Err(e),
            }
        }
    }

    let slope = fit_log_slope(&scales, &counts);
    Ok(CoverReport {
        scales,
        counts,
        slope,
        bound_counts: if bounds_ok { Some(bounds) } else { None },
        params: serde_json::json!({
            "mode": params.mode,
            "t": t,
            "k": k,
            "ladder": params.n_ladder,
            "theta": theta,
            "r": r,
            "m": m,
            "n": n,
            "region_label": region.label,
            "measure_seed": params.measure_seed,
            "constants_hash": config.hash(),
        }),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct CompactBoundParams {
    pub r: f64,
    pub theta: f64,
    pub t: f64,
    pub n_steps: u64,
    /// Measure of the scaled inner core of the complement of the target.
    pub mu_core_complement: f64,
}

/// Covering bound for orbits staying in a compact target:
/// (4r/theta)^{mn} K_0 e^{mn(m+n)Nt} (1 - K_1 mu + K_2 e^{-lambda t}/r^{mn})^N.
pub fn cover_bound_compact(p: &CompactBoundParams, config: &ConstantsConfig) -> Result<f64> {
    let mn = (config.m * config.n) as f64;
    let d = (config.m + config.n) as f64;
    if p.t <= config.b_0.value + config.b.value * (1.0 / p.r).ln() {
        return Err(CoreError::hypothesis(
            "t_estimate",
            format!(
                "t = {} must exceed b_0 + b log(1/r) = {}",
                p.t,
                config.b_0.value + config.b.value * (1.0 / p.r).ln()
            ),
        ));
    }
    let base = 1.0 - config.k_1.value * p.mu_core_complement
        + config.k_2.value * (-config.lambda.value * p.t).exp() / p.r.powf(mn);
    let factor = (4.0 * p.r / p.theta).powf(mn) * config.k_0.value;
    Ok(factor * (mn * d * p.n_steps as f64 * p.t).exp() * base.max(0.0).powi(p.n_steps as i32))
}

#[derive(Debug, Clone, Copy)]
pub struct MainBoundParams {
    pub r: f64,
    pub theta: f64,
    pub t: f64,
    pub k: u64,
    pub n_steps: u64,
    /// Measure of the scaled inner core of the avoided region.
    pub mu_core: f64,
}

/// Covering bound for orbits avoiding an open region:
/// C_0/theta^{2mn} e^{mn(m+n)Nkt} (1 - K_1 mu + K_2 e^{-lambda kt}/r^{mn}
/// + (k-1)/theta^{mn} C_3^k e^{-t/4})^N.
pub fn cover_bound_main(p: &MainBoundParams, config: &ConstantsConfig) -> Result<f64> {
    let mn = (config.m * config.n) as f64;
    let d = (config.m + config.n) as f64;
    if p.t < 2.0 {
        return Err(CoreError::hypothesis("t_at_least_two", format!("t = {}", p.t)));
    }
    if p.k < 2 {
        return Err(CoreError::hypothesis("k_at_least_two", format!("k = {}", p.k)));
    }
    let kt = p.k as f64 * p.t;
    let lo = ((config.b_0.value - kt) / config.b.value).exp();
    let hi = (config.c_2.value * (-config.p.value * p.t).exp()).min(config.r_2.value);
    if !(p.r >= lo && p.r <= hi) {
        return Err(CoreError::hypothesis(
            "ineq_beta3",
            format!("need {lo} <= r <= {hi}, got r = {}", p.r),
        ));
    }
    let theta_hi = 1.0 / (2.0 * mn.sqrt());
    if !(p.theta >= 4.0 * p.r && p.theta <= theta_hi) {
        return Err(CoreError::InvalidTheta {
            theta: p.theta,
            lo: 4.0 * p.r,
            hi: theta_hi,
        });
    }
    let c0 = c0_of(config);
    let base = 1.0 - config.k_1.value * p.mu_core
        + config.k_2.value * (-config.lambda.value * kt).exp() / p.r.powf(mn)
        + (p.k as f64 - 1.0) / p.theta.powf(mn)
            * config.c_3.value.powi(p.k as i32)
            * (-p.t / 4.0).exp();
    Ok(c0 / p.theta.powf(2.0 * mn)
        * (mn * d * p.n_steps as f64 * kt).exp()
        * base.max(0.0).powi(p.n_steps as i32))
}

/// The aggregated front constant of the avoidance bound.
fn c0_of(config: &ConstantsConfig) -> f64 {
    let mn = (config.m * config.n) as f64;
    config.c_alpha.value.powi(4) * (512.0 * mn).powf(mn) * config.k_0.value
}

/// Covering bound for orbits pinned above the cusp threshold:
/// C_alpha/theta^{mn} ((k-1) C_1^k e^{(mn(m+n)k - 1/2) t})^N max(height, 1)/M.
fn cusp_cover_bound(
    x: &UnimodularLattice,
    t: f64,
    k: u64,
    n_steps: u64,
    theta: f64,
    config: &ConstantsConfig,
) -> Result<f64> {
    let mn = (config.m * config.n) as f64;
    let d = (config.m + config.n) as f64;
    if t < 2.0 {
        return Err(CoreError::hypothesis("t_at_least_two", format!("t = {t}")));
    }
    if k < 2 {
        return Err(CoreError::hypothesis("k_at_least_two", format!("k = {k}")));
    }
    let m_threshold = config.c_alpha.value.powi(3) * (mn * t).exp();
    let height = tilde_alpha_total(x, t).max(1.0);
    let per_step = (k as f64 - 1.0)
        * config.c_1.value.powi(k as i32)
        * ((mn * d * k as f64 - 0.5) * t).exp();
    Ok(config.c_alpha.value / theta.powf(mn) * per_step.powi(n_steps as i32) * height / m_threshold)
}

/// Report of the dimension-bound pipeline: derived scales, horizon
/// constants, the two codimension branches, and every hypothesis check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimBoundReport {
    pub r_ua: f64,
    pub k: u64,
    pub t: f64,
    pub t1: f64,
    pub log_r: f64,
    pub log_r3: f64,
    pub derived_r1: f64,
    pub theta: f64,
    pub s1_codim: f64,
    pub s2_codim: f64,
    pub codim_lb: f64,
    pub checks: Vec<HypothesisCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl DimBoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Error out on the first failed check.
    pub fn strict(self) -> Result<Self> {
        if let Some(c) = self.checks.iter().find(|c| !c.passed) {
            return Err(CoreError::hypothesis(&c.name, c.detail.clone()));
        }
        Ok(self)
    }
}

/// Evaluate the codimension pipeline for an open region with measure
/// `mu_u` and half-measure core scale `theta_u` under the flow step `a`.
/// Radii are tracked in log space; the raw floor underflows f64.
pub fn dim_bound(mu_u: f64, theta_u: f64, a: f64, config: &ConstantsConfig) -> Result<DimBoundReport> {
    config.validate()?;
    if !(mu_u > 0.0 && mu_u <= 1.0) || !(theta_u > 0.0 && theta_u <= 1.0) || a <= 0.0 {
        return Err(CoreError::param(
            "need mu_u, theta_u in (0, 1] and a > 0",
        ));
    }
    let mn = (config.m * config.n) as f64;
    let d = (config.m + config.n) as f64;
    let p = config.p.value;
    let c = config.c_2.value;
    let k = config.pipeline_k();
    let kf = k as f64;
    let t1 = config.pipeline_t1();
    let log_r3 = config.derived_r3_log();
    let derived_r1 = (log_r3 / (24.0 * p * mn)).exp();

    let r_ua = mu_u.min(theta_u).min(c * (-a).exp()).min(config.r_1.value);
    let log_r = 24.0 * p * mn * r_ua.ln();
    let t = a * ((c.ln() - log_r) / (2.0 * a * p)).ceil();

    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(HypothesisCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    };

    check(
        "r1first",
        config.r_1.value <= derived_r1 * (1.0 + 1e-9),
        format!(
            "configured r_1 = {} vs derived floor root {derived_r1}",
            config.r_1.value
        ),
    );
    check(
        "r12",
        log_r <= log_r3 + 1e-9,
        format!("log r = {log_r} vs log r_3 = {log_r3}"),
    );
    check(
        "t_redefine",
        c.ln() - 2.0 * p * t <= log_r + 1e-9 && log_r <= c.ln() - 2.0 * p * (t - a) + 1e-9,
        format!("log(c) - 2pt = {} <= log r = {log_r}", c.ln() - 2.0 * p * t),
    );
    check("t_onset", t >= t1, format!("t = {t} vs t1 = {t1}"));
    check(
        "t_bound_2",
        t >= 12.0 * a * mn,
        format!("t = {t} vs 12 a mn = {}", 12.0 * a * mn),
    );
    let lo_beta = (config.b_0.value - kf * t) / config.b.value;
    let hi_beta = (c.ln() - p * t).min(config.r_2.value.ln());
    check(
        "ineq_beta2",
        lo_beta <= log_r + 1e-9 && log_r <= hi_beta + 1e-9,
        format!("need {lo_beta} <= log r = {log_r} <= {hi_beta}"),
    );
    let theta = theta_u.min(1.0 / (2.0 * mn.sqrt()));
    check(
        "theta_window",
        theta >= 4.0 * log_r.exp() && theta <= 1.0 / (2.0 * mn.sqrt()),
        format!("theta = {theta} vs window [{}, {}]", 4.0 * log_r.exp(), 1.0 / (2.0 * mn.sqrt())),
    );

    // The two correction terms must each sit below K_1 mu / 8.
    let r_val = log_r.exp();
    let term_c3 = (kf - 1.0) / theta.powf(mn)
        * (kf * config.c_3.value.ln() - t / 4.0).exp();
    check(
        "c3_term_small",
        term_c3 <= config.k_1.value * mu_u / 8.0 + 1e-12,
        format!("(k-1)/theta^mn C_3^k e^(-t/4) = {term_c3}"),
    );
    let term_k2 = config.k_2.value * (-config.lambda.value * kf * t - mn * log_r).exp();
    check(
        "k2_term_small",
        term_k2 <= config.k_1.value * mu_u / 8.0 + 1e-12,
        format!("K_2 e^(-lambda k t)/r^mn = {term_k2}"),
    );

    let s1_codim = 1.0 / (d * kf) * (0.5 - ((kf - 1.0).ln() + kf * config.c_1.value.ln()) / t);
    let s2_codim =
        (config.k_1.value * mu_u / 2.0 - term_k2 - term_c3) / (kf * t * d);
    let codim_lb =
        config.k_1.value / (96.0 * kf * mn * d) * mu_u / (1.0 / r_ua).ln();

    let _ = r_val;
    Ok(DimBoundReport {
        r_ua,
        k,
        t,
        t1,
        log_r,
        log_r3,
        derived_r1,
        theta,
        s1_codim,
        s2_codim,
        codim_lb,
        checks,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorollaryKind {
    /// Neighborhood of an embedded submanifold of the given dimension.
    Submanifold { k_dim: usize },
    /// Metric ball with externally estimated measure.
    Ball { mu_ball: f64 },
}

/// Codimension bound for avoiding a thin neighborhood: the submanifold
/// variant scales like eps^{dim X - k}/log(1/eps), the ball variant
/// uses the supplied ball measure.
pub fn corollary_bounds(
    kind: CorollaryKind,
    eps: f64,
    eps_window: f64,
    c_s: f64,
    config: &ConstantsConfig,
) -> Result<f64> {
    let dim_x = (config.m + config.n).pow(2) - 1;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CoreError::param("eps must lie in (0, 1)"));
    }
    if eps >= eps_window {
        return Err(CoreError::hypothesis(
            "eps_window",
            format!("eps = {eps} must be below the validity window {eps_window}"),
        ));
    }
    match kind {
        CorollaryKind::Submanifold { k_dim } => {
            if k_dim >= dim_x {
                return Err(CoreError::hypothesis(
                    "submanifold_dimension",
                    format!("k = {k_dim} must be below dim X = {dim_x}"),
                ));
            }
            Ok(c_s * eps.powi((dim_x - k_dim) as i32) / (1.0 / eps).ln())
        }
        CorollaryKind::Ball { mu_ball } => {
            if !(mu_ball > 0.0) {
                return Err(CoreError::param("ball measure must be positive"));
            }
            Ok(c_s * mu_ball / (1.0 / eps).ln())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetLemmaResult {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Exhaustive check of the multinomial subset inequality: summing
/// n1^{N-|J|-d_J} n2^{|J|-d_J} n3^{2 d_J} over all J subsets of
/// {1..N} stays below (n1+n2+n3)^N, where d_J counts the descents
/// from J into its complement.
pub fn subset_lemma_check(n_steps: u32, n1: f64, n2: f64, n3: f64) -> Result<SubsetLemmaResult> {
    if n_steps == 0 || n_steps > 12 {
        return Err(CoreError::param("need 1 <= N <= 12"));
    }
    if n1 <= 0.0 || n2 <= 0.0 || n3 <= 0.0 {
        return Err(CoreError::param("weights must be positive"));
    }
    let total = 1u32 << n_steps;
    let mut lhs = 0.0f64;
    for mask in 0..total {
        let size = mask.count_ones();
        let mut descents = 0u32;
        for i in 0..n_steps.saturating_sub(1) {
            if mask & (1 << i) != 0 && mask & (1 << (i + 1)) == 0 {
                descents += 1;
            }
        }
        lhs += n1.powi((n_steps - size - descents) as i32)
            * n2.powi((size - descents) as i32)
            * n3.powi(2 * descents as i32);
    }
    let rhs = (n1 + n2 + n3).powi(n_steps as i32);
    Ok(SubsetLemmaResult {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-9),
    })
}
