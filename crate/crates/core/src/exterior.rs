//! Exterior algebra over R^d in lexicographic wedge coordinates.
//!
//! Degree-i coefficients are indexed by the C(d,i) increasing index
//! tuples in lexicographic order; increasing tuples carry sign +1.

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for j in 0..k {
        acc = acc * (n - j) / (j + 1);
    }
    acc
}

/// All increasing index tuples of length `degree` over 0..d, lex order.
pub fn index_subsets(d: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(d, degree));
    let mut current = Vec::with_capacity(degree);
    fn rec(d: usize, degree: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == degree {
            out.push(current.clone());
            return;
        }
        let remaining = degree - current.len();
        for v in start..=(d - remaining) {
            current.push(v);
            rec(d, degree, v + 1, current, out);
            current.pop();
        }
    }
    if degree == 0 {
        out.push(vec![]);
    } else {
        rec(d, degree, 0, &mut current, &mut out);
    }
    out
}

/// Lexicographic rank of an increasing tuple among all C(d,len) tuples.
pub fn subset_rank(d: usize, subset: &[usize]) -> usize {
    let k = subset.len();
    let mut rank = 0usize;
    let mut prev: isize = -1;
    for (pos, &s) in subset.iter().enumerate() {
        for v in (prev + 1) as usize..s {
            rank += binomial(d - v - 1, k - pos - 1);
        }
        prev = s as isize;
    }
    rank
}

/// Sign of sorting an index list; 0 if it contains duplicates.
pub fn sort_sign(indices: &mut [usize]) -> i32 {
    let mut sign = 1i32;
    for i in 1..indices.len() {
        let mut j = i;
        while j > 0 && indices[j - 1] > indices[j] {
            indices.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    for w in indices.windows(2) {
        if w[0] == w[1] {
            return 0;
        }
    }
    sign
}

/// Element of the degree-i exterior power of R^d.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultiVector {
    pub degree: usize,
    pub dim: usize,
    pub coeffs: Vec<f64>,
}

impl MultiVector {
    pub fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > dim {
            return Err(CoreError::IndexOutOfRange { i: degree, max: dim });
        }
        let want = binomial(dim, degree);
        if coeffs.len() != want {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{want} coefficients"),
                got: format!("{}", coeffs.len()),
            });
        }
        Ok(MultiVector { degree, dim, coeffs })
    }

    /// Wedge product of `degree` column vectors in R^d.
    pub fn from_wedge(vectors: &[DVector<f64>]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(CoreError::param("wedge of zero vectors"));
        }
        let dim = vectors[0].len();
        let degree = vectors.len();
        if degree > dim {
            return Err(CoreError::IndexOutOfRange { i: degree, max: dim });
        }
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(CoreError::ShapeMismatch {
                expected: format!("vectors of length {dim}"),
                got: "mixed lengths".into(),
            });
        }
        let subsets = index_subsets(dim, degree);
        let mut coeffs = Vec::with_capacity(subsets.len());
        for rows in &subsets {
            let mut minor = DMatrix::zeros(degree, degree);
            for (r, &row) in rows.iter().enumerate() {
                for (c, v) in vectors.iter().enumerate() {
                    minor[(r, c)] = v[row];
                }
            }
            coeffs.push(minor.determinant());
        }
        Ok(MultiVector { degree, dim, coeffs })
    }

    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Plucker quadratic relations, zero for decomposable vectors.
    ///
    /// Returns the largest relation residual. Degrees 0, 1, d-1 and d
    /// have no relations and report 0.
    pub fn pluecker_residual(&self) -> f64 {
        pluecker_residual(self.dim, self.degree, &self.coeffs, |c| *c)
    }

    pub fn is_decomposable(&self, tol: f64) -> bool {
        self.pluecker_residual() <= tol * self.norm_sq()
    }
}

/// Largest Plucker relation residual of a degree-`degree` coefficient
/// vector (lex order). Generic over the coefficient representation so
/// integer coordinates can be checked exactly by the enumeration code.
pub fn pluecker_residual<T, F>(dim: usize, degree: usize, coeffs: &[T], to_f64: F) -> f64
where
    F: Fn(&T) -> f64,
{
    if degree <= 1 || degree + 1 >= dim {
        return 0.0;
    }
    let get = |indices: &mut [usize]| -> f64 {
        let sign = sort_sign(indices);
        if sign == 0 {
            return 0.0;
        }
        sign as f64 * to_f64(&coeffs[subset_rank(dim, indices)])
    };
    let s_sets = index_subsets(dim, degree - 1);
    let t_sets = index_subsets(dim, degree + 1);
    let mut worst = 0.0f64;
    let mut left = vec![0usize; degree];
    let mut right = vec![0usize; degree];
    for s in &s_sets {
        for t in &t_sets {
            let mut rel = 0.0;
            for (l, &tl) in t.iter().enumerate() {
                left[..degree - 1].copy_from_slice(s);
                left[degree - 1] = tl;
                let mut pos = 0;
                for (j, &tj) in t.iter().enumerate() {
                    if j != l {
                        right[pos] = tj;
                        pos += 1;
                    }
                }
                let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
                rel += sign * get(&mut left) * get(&mut right);
            }
            worst = worst.max(rel.abs());
        }
    }
    worst
}

/// Matrix of the induced action of `a` on the degree-`degree` exterior
/// power, in the lexicographic wedge basis: entries are minors of `a`.
pub fn exterior_power_matrix(a: &DMatrix<f64>, degree: usize) -> DMatrix<f64> {
    let d = a.nrows();
    let subsets = index_subsets(d, degree);
    let c = subsets.len();
    if degree == 0 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    let mut out = DMatrix::zeros(c, c);
    let mut minor = DMatrix::zeros(degree, degree);
    for (col, cols) in subsets.iter().enumerate() {
        for (row, rows) in subsets.iter().enumerate() {
            for (r, &ri) in rows.iter().enumerate() {
                for (cc, &ci) in cols.iter().enumerate() {
                    minor[(r, cc)] = a[(ri, ci)];
                }
            }
            out[(row, col)] = minor.determinant();
        }
    }
    out
}

/// Apply the induced exterior action of `a` to a multivector.
pub fn apply_exterior(a: &DMatrix<f64>, v: &MultiVector) -> MultiVector {
    if v.degree == 0 {
        return v.clone();
    }
    let m = exterior_power_matrix(a, v.degree);
    let coeffs = &m * DVector::from_column_slice(&v.coeffs);
    MultiVector {
        degree: v.degree,
        dim: v.dim,
        coeffs: coeffs.as_slice().to_vec(),
    }
}

/// Covolume of the sublattice spanned by integer combinations of the
/// given vectors: sqrt of the Gram determinant, equivalently the norm
/// of their wedge. Returns 0 for dependent inputs.
pub fn wedge_covolume(vectors: &[DVector<f64>]) -> Result<f64> {
    if vectors.is_empty() {
        return Err(CoreError::param("covolume of zero vectors"));
    }
    let dim = vectors[0].len();
    let k = vectors.len();
    if k > dim {
        return Err(CoreError::IndexOutOfRange { i: k, max: dim });
    }
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(CoreError::ShapeMismatch {
            expected: format!("vectors of length {dim}"),
            got: "mixed lengths".into(),
        });
    }
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = vectors[i].dot(&vectors[j]);
        }
    }
    Ok(gram.determinant().max(0.0).sqrt())
}

/// Spectral norm via power iteration on m^T m, relative tolerance 1e-8.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let c = m.ncols();
    if c == 0 {
        return 0.0;
    }
    if c == 1 {
        return m.column(0).norm();
    }
    let gram = m.transpose() * m;
    let mut v = DVector::from_fn(c, |i, _| 1.0 + 1e-3 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = &gram * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = w / nw;
        let lam = (&gram * &next).dot(&next);
        let done = (lam - lambda).abs() <= 1e-8 * lam.abs().max(1e-300);
        v = next;
        lambda = lam;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Operator norm of `h` acting on the whole exterior algebra: the max
/// over degrees of the spectral norm of the induced matrix. Degree 0
/// contributes 1, so the result is always >= 1 for invertible h.
pub fn op_norm_inf(h: &DMatrix<f64>) -> f64 {
    let d = h.nrows();
    let mut worst = 1.0f64;
    for degree in 1..=d {
        let m = exterior_power_matrix(h, degree);
        worst = worst.max(spectral_norm(&m));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn covolume_orthonormal_pair() {
        let c = wedge_covolume(&[dv(&[1.0, 0.0, 0.0]), dv(&[0.0, 1.0, 0.0])]).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covolume_gram_example() {
        let c = wedge_covolume(&[dv(&[1.0, 1.0, 0.0]), dv(&[0.0, 1.0, 1.0])]).unwrap();
        assert!((c - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn covolume_single_vector_is_norm() {
        let v = dv(&[3.0, 4.0]);
        assert!((wedge_covolume(&[v.clone()]).unwrap() - v.norm()).abs() < 1e-12);
    }

    #[test]
    fn covolume_dependent_is_zero() {
        let c = wedge_covolume(&[dv(&[1.0, 2.0, 0.0]), dv(&[2.0, 4.0, 0.0])]).unwrap();
        assert!(c < 1e-7);
    }

    #[test]
    fn wedge_matches_gram_route() {
        let vs = [dv(&[1.0, 1.0, 0.0]), dv(&[0.0, 1.0, 1.0])];
        let w = MultiVector::from_wedge(&vs).unwrap();
        assert!((w.norm() - wedge_covolume(&vs).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn exterior_power_is_multiplicative() {
        let a = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.2, 0.0, -0.3, 0.0, 1.1, 0.4, 0.0, 0.5, 0.0, 0.9, 0.1, 0.0, -0.2, 0.0, 1.0,
        ]);
        let b = DMatrix::from_row_slice(4, 4, &[
            0.7, 0.0, 0.3, 0.0, 0.1, 1.0, 0.0, 0.2, 0.0, 0.4, 1.2, 0.0, -0.1, 0.0, 0.0, 0.8,
        ]);
        for degree in 1..=3 {
            let lhs = exterior_power_matrix(&(&a * &b), degree);
            let rhs = exterior_power_matrix(&a, degree) * exterior_power_matrix(&b, degree);
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn pluecker_accepts_wedges_rejects_e12_plus_e34() {
        let vs = [dv(&[1.0, 0.5, -0.2, 0.3]), dv(&[0.0, 1.0, 0.7, -0.1])];
        let w = MultiVector::from_wedge(&vs).unwrap();
        assert!(w.is_decomposable(1e-8));

        // e1^e2 + e3^e4 in d=4: coefficients on {0,1} and {2,3}.
        let subsets = index_subsets(4, 2);
        let mut coeffs = vec![0.0; subsets.len()];
        coeffs[subset_rank(4, &[0, 1])] = 1.0;
        coeffs[subset_rank(4, &[2, 3])] = 1.0;
        let v = MultiVector::new(4, 2, coeffs).unwrap();
        assert!(!v.is_decomposable(1e-8));
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 0.5, -1.0, 0.3, 0.0, 1.5]);
        let svd_max = a.clone().svd(false, false).singular_values[0];
        assert!((spectral_norm(&a) - svd_max).abs() < 1e-6 * svd_max);
    }

    #[test]
    fn subset_rank_is_lex_position() {
        let subsets = index_subsets(5, 3);
        for (i, s) in subsets.iter().enumerate() {
            assert_eq!(subset_rank(5, s), i);
        }
    }
}
