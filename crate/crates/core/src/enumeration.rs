//! Short-vector search: LLL preprocessing plus Schnorr-Euchner
//! branch-and-bound enumeration with a node budget.

use nalgebra::DMatrix;

/// LLL reduction (delta = 0.99) of the columns of `basis`.
///
/// Returns `(reduced, u)` with `reduced = basis * u` and `u` integer
/// unimodular. The iteration cap only affects speed, not correctness
/// of later enumeration.
pub fn lll_reduce(basis: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<i64>) {
    const DELTA: f64 = 0.99;
    let n = basis.ncols();
    let mut b = basis.clone();
    let mut u = DMatrix::<i64>::identity(n, n);
    if n < 2 {
        return (b, u);
    }

    let gs = |b: &DMatrix<f64>| -> (Vec<f64>, DMatrix<f64>) {
        let mut star: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
        let mut mu = DMatrix::zeros(n, n);
        let mut norms = vec![0.0; n];
        for i in 0..n {
            let mut v = b.column(i).clone_owned();
            for j in 0..i {
                let m = if norms[j] > 0.0 {
                    b.column(i).dot(&star[j]) / norms[j]
                } else {
                    0.0
                };
                mu[(i, j)] = m;
                v -= &star[j] * m;
            }
            norms[i] = v.norm_squared();
            star.push(v);
        }
        (norms, mu)
    };

    let (mut norms, mut mu) = gs(&b);
    let mut k = 1usize;
    let mut iterations = 0u32;
    while k < n && iterations < 20_000 {
        iterations += 1;
        for j in (0..k).rev() {
            let q = mu[(k, j)].round();
            if q != 0.0 && q.abs() < 9e18 {
                let qi = q as i64;
                let col_j = b.column(j).clone_owned();
                let mut col_k = b.column(k).clone_owned();
                col_k -= col_j * q;
                b.set_column(k, &col_k);
                for r in 0..n {
                    u[(r, k)] -= qi * u[(r, j)];
                }
                for jj in 0..j {
                    let v = mu[(k, jj)] - q * mu[(j, jj)];
                    mu[(k, jj)] = v;
                }
                mu[(k, j)] -= q;
            }
        }
        if norms[k] >= (DELTA - mu[(k, k - 1)] * mu[(k, k - 1)]) * norms[k - 1] {
            k += 1;
        } else {
            b.swap_columns(k, k - 1);
            u.swap_columns(k, k - 1);
            let (nn, nm) = gs(&b);
            norms = nn;
            mu = nm;
            k = k.max(2) - 1;
        }
    }
    (b, u)
}

/// What the search is after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchGoal {
    /// Minimize the squared norm over accepted candidates.
    ShortestAccepted,
    /// Stop at the first accepted candidate within the bound.
    AnyAccepted,
}

#[derive(Debug, Clone)]
pub struct EnumOutcome {
    /// Best accepted candidate in the coordinates of the basis passed
    /// to [`enumerate`] (pre-LLL coordinates).
    pub best: Option<(Vec<i64>, f64)>,
    pub nodes: u64,
    pub budget_hit: bool,
}

/// Enumerate nonzero integer vectors `w` with `||basis * w||^2` within
/// `bound_sq`, calling `accept` on each candidate (coefficients in the
/// original column order). LLL runs internally; coefficients are
/// mapped back before `accept` sees them.
pub fn enumerate<F>(
    basis: &DMatrix<f64>,
    bound_sq: f64,
    node_budget: u64,
    goal: SearchGoal,
    mut accept: F,
) -> EnumOutcome
where
    F: FnMut(&[i64], f64) -> bool,
{
    let n = basis.ncols();
    let (reduced, u) = lll_reduce(basis);

    // Gram-Schmidt data of the reduced basis.
    let mut star: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let mut mu = DMatrix::zeros(n, n);
    let mut b_norm = vec![0.0; n];
    for i in 0..n {
        let mut v = reduced.column(i).clone_owned();
        for j in 0..i {
            let m = if b_norm[j] > 0.0 {
                reduced.column(i).dot(&star[j]) / b_norm[j]
            } else {
                0.0
            };
            mu[(i, j)] = m;
            v -= &star[j] * m;
        }
        b_norm[i] = v.norm_squared();
        star.push(v);
    }

    struct Dfs<'a, F> {
        n: usize,
        mu: &'a DMatrix<f64>,
        b_norm: &'a [f64],
        u: &'a DMatrix<i64>,
        accept: &'a mut F,
        bound_sq: f64,
        nodes: u64,
        budget: u64,
        budget_hit: bool,
        done: bool,
        goal: SearchGoal,
        x: Vec<i64>,
        best: Option<(Vec<i64>, f64)>,
    }

    impl<F: FnMut(&[i64], f64) -> bool> Dfs<'_, F> {
        fn original_coords(&self) -> Vec<i64> {
            let mut w = vec![0i64; self.n];
            for (r, wr) in w.iter_mut().enumerate() {
                for c in 0..self.n {
                    *wr += self.u[(r, c)] * self.x[c];
                }
            }
            w
        }

        fn leaf(&mut self, norm_sq: f64) {
            if self.x.iter().all(|&v| v == 0) {
                return;
            }
            let w = self.original_coords();
            if (self.accept)(&w, norm_sq) {
                match self.goal {
                    SearchGoal::AnyAccepted => {
                        self.best = Some((w, norm_sq));
                        self.done = true;
                    }
                    SearchGoal::ShortestAccepted => {
                        if self.best.as_ref().map_or(true, |(_, b)| norm_sq < *b) {
                            self.best = Some((w, norm_sq));
                            self.bound_sq = norm_sq * (1.0 + 1e-12);
                        }
                    }
                }
            }
        }

        fn descend(&mut self, level: isize, partial: f64) {
            if self.done || self.budget_hit {
                return;
            }
            if level < 0 {
                self.leaf(partial);
                return;
            }
            let lvl = level as usize;
            let center: f64 = -(lvl + 1..self.n)
                .map(|i| self.x[i] as f64 * self.mu[(i, lvl)])
                .sum::<f64>();
            let bl = self.b_norm[lvl].max(1e-300);
            let x0 = center.round();
            // Zigzag outward from the rounded center on both sides.
            for side in 0..2 {
                let mut k = side; // side 0 walks x0, x0+1, ...; side 1 walks x0-1, x0-2, ...
                loop {
                    if self.done || self.budget_hit {
                        return;
                    }
                    let xv = if side == 0 {
                        x0 + k as f64
                    } else {
                        x0 - k as f64
                    };
                    let diff = xv - center;
                    let cost = partial + diff * diff * bl;
                    if cost > self.bound_sq {
                        break;
                    }
                    self.nodes += 1;
                    if self.nodes > self.budget {
                        self.budget_hit = true;
                        return;
                    }
                    self.x[lvl] = xv as i64;
                    self.descend(level - 1, cost);
                    k += 1;
                }
            }
            self.x[lvl] = 0;
        }
    }

    let mut dfs = Dfs {
        n,
        mu: &mu,
        b_norm: &b_norm,
        u: &u,
        accept: &mut accept,
        bound_sq: bound_sq * (1.0 + 1e-12),
        nodes: 0,
        budget: node_budget,
        budget_hit: false,
        done: false,
        goal,
        x: vec![0; n],
        best: None,
    };
    dfs.descend(n as isize - 1, 0.0);

    EnumOutcome {
        best: dfs.best,
        nodes: dfs.nodes,
        budget_hit: dfs.budget_hit,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_shortest_vector_of_skew_planar_lattice() {
        // Basis columns (1, 0) and (0.51, 0.02): shortest vector is
        // b2 - ... ; brute force over a box is the oracle.
        let basis = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.51, 0.02]);
        let out = enumerate(&basis, 2.0, 1_000_000, SearchGoal::ShortestAccepted, |_, _| true);
        let (w, norm_sq) = out.best.unwrap();
        let mut brute = f64::INFINITY;
        for a in -60i64..=60 {
            for b in -60i64..=60 {
                if a == 0 && b == 0 {
                    continue;
                }
                let vx = a as f64 + 0.51 * b as f64;
                let vy = 0.02 * b as f64;
                brute = brute.min(vx * vx + vy * vy);
            }
        }
        assert!((norm_sq - brute).abs() < 1e-12, "w = {w:?}");
    }

    #[test]
    fn budget_flag_fires() {
        let basis = DMatrix::identity(4, 4);
        let out = enumerate(&basis, 100.0, 10, SearchGoal::ShortestAccepted, |_, _| true);
        assert!(out.budget_hit);
    }

    #[test]
    fn lll_preserves_lattice() {
        let basis = DMatrix::from_column_slice(3, 3, &[
            12.0, 0.1, 0.0, 11.9, 0.2, 0.0, 0.3, 0.0, 1.0,
        ]);
        let (reduced, u) = lll_reduce(&basis);
        let uf = u.map(|v| v as f64);
        assert!((&basis * uf - &reduced).norm() < 1e-9);
        // |det u| = 1
        let det = u.map(|v| v as f64).determinant().abs();
        assert!((det - 1.0).abs() < 1e-6);
        // Reduced first vector should be no longer than the original first.
        assert!(reduced.column(0).norm() <= basis.column(0).norm() + 1e-12);
    }
}
