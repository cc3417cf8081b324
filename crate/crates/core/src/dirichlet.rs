//! Dirichlet improvability: the direct Diophantine test, the orbit
//! test through the correspondence between approximation windows and
//! flow times, and grid scans of the improvable set.

use crate::covering::{fit_log_slope, CoverReport};
use crate::enumeration::{enumerate, SearchGoal};
use crate::error::{CoreError, Result};
use crate::lattice::{apply_gt, apply_hs, UnimodularLattice};
use crate::par::{map_chunks, ExecMode};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Total enumeration budget for one di_direct call.
pub const DI_ENUM_BUDGET: u64 = 100_000_000;

/// Default onset below which failures do not count as witnesses.
pub const DEFAULT_N_MIN: u64 = 10;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    /// Every checked window from the onset to the horizon passed.
    ImprovableUpToHorizon,
    /// First failure at or past the onset.
    WitnessedFailure { n: Option<u64>, t: Option<f64> },
    /// Failures occurred, but only below the onset.
    Indeterminate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub n: u64,
    pub p: Vec<i64>,
    pub q: Vec<i64>,
}

impl Witness {
    /// Re-check the system this witness claims to solve.
    pub fn verify(&self, s: &DMatrix<f64>, c: f64) -> bool {
        let m = s.nrows();
        let n = s.ncols();
        if self.p.len() != m || self.q.len() != n {
            return false;
        }
        let q_norm = self.q.iter().map(|v| v.abs()).max().unwrap_or(0);
        if q_norm == 0 || q_norm as u64 > self.n {
            return false;
        }
        let mut err: f64 = 0.0;
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..n {
                acc += s[(i, j)] * self.q[j] as f64;
            }
            err = err.max((acc - self.p[i] as f64).abs());
        }
        err < c * (self.n as f64).powf(-(n as f64) / m as f64) + 1e-12
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "horizon_kind", rename_all = "snake_case")]
pub enum Horizon {
    Windows { n_min: u64, n_max: u64 },
    Times { a: f64, steps: u64, onset: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiVerdict {
    pub s: Vec<Vec<f64>>,
    pub c: f64,
    pub horizon: Horizon,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    /// Times at which the orbit sat inside the avoided set (orbit mode).
    pub failing_times: Vec<f64>,
    /// Window sizes that failed below the onset.
    pub early_failures: Vec<u64>,
}

fn s_rows(s: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..s.nrows())
        .map(|r| (0..s.ncols()).map(|c| s[(r, c)]).collect())
        .collect()
}

/// Search one window: the best sup-norm error over admissible integer
/// pairs, with the attaining pair. `None` when the budget dies first.
fn best_pair(s: &DMatrix<f64>, n_window: u64, budget: &mut u64) -> Option<(f64, Vec<i64>, Vec<i64>)> {
    let m = s.nrows();
    let n = s.ncols();
    let mut best = f64::INFINITY;
    let mut best_p = vec![0i64; m];
    let mut best_q = vec![0i64; n];
    let bound = n_window as i64;
    let mut q = vec![-bound; n];
    loop {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        if q.iter().any(|&v| v != 0) {
            let mut err: f64 = 0.0;
            let mut p = vec![0i64; m];
            for i in 0..m {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += s[(i, j)] * q[j] as f64;
                }
                let rounded = acc.round();
                p[i] = rounded as i64;
                err = err.max((acc - rounded).abs());
            }
            if err < best {
                best = err;
                best_p = p;
                best_q = q.clone();
            }
        }
        let mut k = 0;
        loop {
            if k == n {
                return Some((best, best_p, best_q));
            }
            if q[k] < bound {
                q[k] += 1;
                break;
            }
            q[k] = -bound;
            k += 1;
        }
    }
}

/// Incremental single-column path: running best error as the window
/// grows, so a whole ladder of windows costs one linear sweep.
fn di_direct_n1(
    s: &DMatrix<f64>,
    c: f64,
    n_min: u64,
    n_max: u64,
) -> (Vec<bool>, Vec<Witness>, Vec<u64>, Option<u64>) {
    let m = s.nrows();
    let mut passes = Vec::with_capacity(n_max as usize);
    let mut witnesses = Vec::new();
    let mut early = Vec::new();
    let mut first_fail_in_range = None;
    let mut best = f64::INFINITY;
    let mut best_p = vec![0i64; m];
    let mut best_q = 0i64;
    for window in 1..=n_max {
        let q = window as i64;
        let mut err: f64 = 0.0;
        let mut p = vec![0i64; m];
        for i in 0..m {
            let acc = s[(i, 0)] * q as f64;
            let rounded = acc.round();
            p[i] = rounded as i64;
            err = err.max((acc - rounded).abs());
        }
        if err < best {
            best = err;
            best_p = p;
            best_q = q;
        }
        let threshold = c * (window as f64).powf(-1.0 / m as f64);
        let ok = best < threshold;
        passes.push(ok);
        if ok {
            if window >= n_min && witnesses.len() < 512 {
                witnesses.push(Witness {
                    n: window,
                    p: best_p.clone(),
                    q: vec![best_q],
                });
            }
        } else if window < n_min {
            early.push(window);
        } else if first_fail_in_range.is_none() {
            first_fail_in_range = Some(window);
        }
    }
    (passes, witnesses, early, first_fail_in_range)
}

/// Direct test of the improvability system over every window size in
/// [1, n_max]. Failures below `n_min` do not witness anything; the
/// verdict is decided by the range [n_min, n_max].
pub fn di_direct(s: &DMatrix<f64>, c: f64, n_min: u64, n_max: u64) -> Result<DiVerdict> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(CoreError::param("c must lie in (0, 1]"));
    }
    if n_min < 1 || n_max < n_min {
        return Err(CoreError::param("need 1 <= n_min <= n_max"));
    }
    let (_, witnesses, early, first_fail) = if s.ncols() == 1 {
        di_direct_n1(s, c, n_min, n_max)
    } else {
        let m = s.nrows();
        let n = s.ncols();
        let mut budget = DI_ENUM_BUDGET;
        let mut witnesses = Vec::new();
        let mut early = Vec::new();
        let mut first_fail = None;
        let mut passes = Vec::with_capacity(n_max as usize);
        for window in 1..=n_max {
            let Some((err, p, q)) = best_pair(s, window, &mut budget) else {
                return Err(CoreError::BudgetExceeded {
                    best: window as f64,
                });
            };
            let threshold = c * (window as f64).powf(-(n as f64) / m as f64);
            let ok = err < threshold;
            passes.push(ok);
            if ok {
                if window >= n_min && witnesses.len() < 512 {
                    witnesses.push(Witness { n: window, p, q });
                }
            } else if window < n_min {
                early.push(window);
            } else if first_fail.is_none() {
                first_fail = Some(window);
            }
        }
        (passes, witnesses, early, first_fail)
    };
    let verdict = match first_fail {
        Some(n) => Verdict::WitnessedFailure {
            n: Some(n),
            t: None,
        },
        None if !early.is_empty() => Verdict::Indeterminate,
        None => Verdict::ImprovableUpToHorizon,
    };
    Ok(DiVerdict {
        s: s_rows(s),
        c,
        horizon: Horizon::Windows { n_min, n_max },
        verdict,
        witnesses,
        failing_times: vec![],
        early_failures: early,
    })
}

/// Does the lattice contain a nonzero point with the first m
/// coordinates strictly below c and the last n at most 1 in sup norm?
pub fn rc_hit(x: &UnimodularLattice, c: f64) -> bool {
    debug_assert!(c > 0.0 && c <= 1.0);
    let m = x.m();
    let n = x.n();
    let d = x.dim();
    let basis = x.basis();
    let bound_sq = (m as f64) * c * c + n as f64 + 1e-9;
    let out = enumerate(basis, bound_sq, 10_000_000, SearchGoal::AnyAccepted, |w, _| {
        let mut top: f64 = 0.0;
        let mut bottom: f64 = 0.0;
        for r in 0..d {
            let mut acc = 0.0;
            for (cidx, wc) in w.iter().enumerate() {
                acc += basis[(r, cidx)] * *wc as f64;
            }
            if r < m {
                top = top.max(acc.abs());
            } else {
                bottom = bottom.max(acc.abs());
            }
        }
        top < c && bottom <= 1.0
    });
    out.best.is_some()
}

/// Default onset step for the orbit test, mirroring the default window
/// onset through the window-to-time correspondence.
pub fn dani_default_onset(m: usize, a: f64) -> u64 {
    ((DEFAULT_N_MIN as f64).ln() / (m as f64 * a)).ceil().max(1.0) as u64
}

/// Orbit test: flow the sheared standard lattice and ask when it meets
/// the Dirichlet box. Misses at or past the onset witness failure.
pub fn di_dani(s: &DMatrix<f64>, c: f64, a: f64, horizon: u64, onset: u64) -> Result<DiVerdict> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(CoreError::param("c must lie in (0, 1]"));
    }
    if a <= 0.0 || horizon < 1 || onset < 1 {
        return Err(CoreError::param("need a > 0, horizon >= 1, onset >= 1"));
    }
    let m = s.nrows();
    let n = s.ncols();
    let x0 = apply_hs(&UnimodularLattice::standard(m, n), s)?;
    let mut failing = Vec::new();
    let mut early = Vec::new();
    let mut first_fail = None;
    let mut y = x0;
    for j in 1..=horizon {
        y = apply_gt(&y, a)?;
        if !rc_hit(&y, c) {
            let t = j as f64 * a;
            if j < onset {
                early.push(j);
            } else {
                if first_fail.is_none() {
                    first_fail = Some(t);
                }
                failing.push(t);
            }
        }
    }
    let verdict = match first_fail {
        Some(t) => Verdict::WitnessedFailure {
            n: None,
            t: Some(t),
        },
        None if !early.is_empty() => Verdict::Indeterminate,
        None => Verdict::ImprovableUpToHorizon,
    };
    Ok(DiVerdict {
        s: s_rows(s),
        c,
        horizon: Horizon::Times {
            a,
            steps: horizon,
            onset,
        },
        verdict,
        witnesses: vec![],
        failing_times: failing,
        early_failures: early.iter().map(|&j| j).collect(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ScanMode {
    Direct { n_min: u64, n_max: u64 },
    Dani { a: f64, steps: u64, onset: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanCell {
    pub s: Vec<f64>,
    pub improvable: bool,
    pub verdict: String,
    pub first_failure: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiScanResult {
    pub grid: usize,
    pub c: f64,
    pub cells: Vec<ScanCell>,
    pub improvable_fraction: f64,
    pub cover: CoverReport,
}

/// Evaluate verdicts on a uniform grid of cell centers over [0,1]^{mn}
/// and box-count the improvable set across three dyadic coarsenings.
pub fn di_scan(m: usize, n: usize, grid: usize, c: f64, mode: &ScanMode) -> Result<DiScanResult> {
    di_scan_with_mode(m, n, grid, c, mode, ExecMode::default())
}

pub fn di_scan_with_mode(
    m: usize,
    n: usize,
    grid: usize,
    c: f64,
    mode: &ScanMode,
    exec: ExecMode,
) -> Result<DiScanResult> {
    let mn = m * n;
    let cells_total = (grid as u128).pow(mn as u32);
    if cells_total > 10_000_000 {
        return Err(CoreError::GridBudgetExceeded {
            cells: cells_total,
            budget: 10_000_000,
        });
    }
    if grid % 4 != 0 {
        return Err(CoreError::param("grid must be divisible by 4 for the dyadic ladder"));
    }
    let cells_total = cells_total as u64;
    let cells: Vec<ScanCell> = map_chunks(exec, cells_total, |flat| {
        let mut idx = vec![0usize; mn];
        let mut rem = flat as usize;
        for slot in idx.iter_mut() {
            *slot = rem % grid;
            rem /= grid;
        }
        let coords: Vec<f64> = idx.iter().map(|&i| (i as f64 + 0.5) / grid as f64).collect();
        let s = DMatrix::from_fn(m, n, |r, cc| coords[r * n + cc]);
        let v = match mode {
            ScanMode::Direct { n_min, n_max } => di_direct(&s, c, *n_min, *n_max),
            ScanMode::Dani { a, steps, onset } => di_dani(&s, c, *a, *steps, *onset),
        }
        .expect("scan cell parameters validated");
        let (improvable, verdict, first) = match &v.verdict {
            Verdict::ImprovableUpToHorizon => (true, "improvable".to_string(), None),
            Verdict::Indeterminate => (false, "indeterminate".to_string(), None),
            Verdict::WitnessedFailure { n, t } => (
                false,
                "witnessed_failure".to_string(),
                n.map(|v| v as f64).or(*t),
            ),
        };
        ScanCell {
            s: coords,
            improvable,
            verdict,
            first_failure: first,
        }
    });
    let improvable_count = cells.iter().filter(|c| c.improvable).count();
    let fraction = improvable_count as f64 / cells_total as f64;

    // Dyadic box-count ladder: a coarse cell counts when any fine cell
    // inside it is improvable.
    let mut scales = Vec::new();
    let mut counts = Vec::new();
    for shrink in [4usize, 2, 1] {
        let coarse = grid / shrink;
        let mut seen = vec![false; coarse.pow(mn as u32)];
        for cell in cells.iter().filter(|c| c.improvable) {
            let mut flat = 0usize;
            for axis in (0..mn).rev() {
                let fine_idx = (cell.s[axis] * grid as f64) as usize;
                flat = flat * coarse + fine_idx * coarse / grid;
            }
            seen[flat] = true;
        }
        scales.push(1.0 / coarse as f64);
        counts.push(seen.iter().filter(|&&b| b).count() as u64);
    }
    let slope = fit_log_slope(&scales, &counts);
    let cover = CoverReport {
        scales,
        counts,
        slope,
        bound_counts: None,
        params: serde_json::json!({
            "m": m, "n": n, "grid": grid, "c": c, "mode": mode,
        }),
    };
    Ok(DiScanResult {
        grid,
        c,
        cells,
        improvable_fraction: fraction,
        cover,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn rational_passes_all_checked_windows() {
        let v = di_direct(&scalar(1.0 / 3.0), 0.5, 3, 200).unwrap();
        assert!(!matches!(v.verdict, Verdict::WitnessedFailure { .. }));
        // Every window from the denominator onward carries a witness.
        assert!(v.witnesses.iter().any(|w| w.q == vec![3] && w.p == vec![1]));
        for w in &v.witnesses {
            assert!(w.verify(&scalar(1.0 / 3.0), 0.5));
        }
    }

    #[test]
    fn c_one_gives_improvable_for_random_points() {
        // Pigeonhole guarantees solvability at every window when c = 1.
        let mut rng = crate::par::stream_rng(2, 0);
        use rand::Rng;
        for _ in 0..20 {
            let s = scalar(rng.random::<f64>());
            let v = di_direct(&s, 1.0, 10, 150).unwrap();
            assert_eq!(v.verdict, Verdict::ImprovableUpToHorizon);
        }
    }

    #[test]
    fn sqrt2_fails_at_small_c() {
        let s = scalar(2f64.sqrt() - 1.0);
        let v = di_direct(&s, 0.1, 10, 500).unwrap();
        assert!(matches!(v.verdict, Verdict::WitnessedFailure { .. }));
    }

    #[test]
    fn monotone_in_c() {
        let s = scalar(0.3718);
        let lenient = di_direct(&s, 0.9, 10, 300).unwrap();
        let strict = di_direct(&s, 0.2, 10, 300).unwrap();
        if strict.verdict == Verdict::ImprovableUpToHorizon {
            assert_eq!(lenient.verdict, Verdict::ImprovableUpToHorizon);
        }
    }

    #[test]
    fn rc_hit_examples() {
        let z2 = UnimodularLattice::standard(1, 1);
        assert!(rc_hit(&z2, 0.5)); // (0, 1)

        let x = UnimodularLattice::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0 / 3.0]),
            1,
            1,
        )
        .unwrap();
        assert!(rc_hit(&x, 0.5)); // (0, 1/3)

        let y = UnimodularLattice::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            1,
            1,
        )
        .unwrap();
        // Exhaustive oracle over |a|, |b| <= 4: nothing in the box.
        let mut any = false;
        for a in -4i32..=4 {
            for b in -4i32..=4 {
                if a == 0 && b == 0 {
                    continue;
                }
                let vx = 0.5 * a as f64;
                let vy = 2.0 * b as f64;
                if vx.abs() < 0.4 && vy.abs() <= 1.0 {
                    any = true;
                }
            }
        }
        assert!(!any);
        assert!(!rc_hit(&y, 0.4));
    }

    #[test]
    fn dani_zero_shear_improvable() {
        let v = di_dani(&scalar(0.0), 0.7, 0.5, 20, 1).unwrap();
        assert_eq!(v.verdict, Verdict::ImprovableUpToHorizon);
    }

    #[test]
    fn dani_generic_fails_at_tiny_c() {
        let v = di_dani(&scalar(0.547731), 0.01, 0.5, 20, 1).unwrap();
        assert!(matches!(v.verdict, Verdict::WitnessedFailure { .. }));
    }

    #[test]
    fn scan_fraction_is_one_at_c_equal_one() {
        let mode = ScanMode::Direct { n_min: 5, n_max: 60 };
        let out = di_scan(1, 1, 16, 1.0, &mode).unwrap();
        assert_eq!(out.improvable_fraction, 1.0);
    }
}
