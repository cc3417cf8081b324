//! Unimodular lattices in R^d and the group actions moving them.

use crate::error::{CoreError, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Largest supported ambient dimension; C(6,3) = 20 exterior coordinates.
pub const MAX_DIM: usize = 6;

/// Input unimodularity tolerance; bases within it are rescaled.
pub const DET_REPAIR_TOL: f64 = 1e-6;

/// A point of SL_d(R)/SL_d(Z): the columns of `basis` generate the
/// lattice, det(basis) = 1, with the block split d = m + n.
#[derive(Debug, Clone, PartialEq)]
pub struct UnimodularLattice {
    basis: DMatrix<f64>,
    m: usize,
    n: usize,
}

impl UnimodularLattice {
    /// Validates and repairs the determinant (rescales by det^{-1/d}
    /// when |det - 1| <= 1e-6, rejects otherwise).
    pub fn new(basis: DMatrix<f64>, m: usize, n: usize) -> Result<Self> {
        let d = m + n;
        if m == 0 || n == 0 {
            return Err(CoreError::param("m and n must be positive"));
        }
        if d > MAX_DIM {
            return Err(CoreError::DimensionTooLarge { d });
        }
        if basis.nrows() != d || basis.ncols() != d {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{d}x{d} basis"),
                got: format!("{}x{}", basis.nrows(), basis.ncols()),
            });
        }
        if !basis.iter().all(|v| v.is_finite()) {
            return Err(CoreError::Singular);
        }
        let det = basis.determinant();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(CoreError::Singular);
        }
        if (det - 1.0).abs() > DET_REPAIR_TOL {
            return Err(CoreError::NonUnimodular { det });
        }
        let basis = if det == 1.0 {
            basis
        } else {
            basis * det.powf(-1.0 / d as f64)
        };
        Ok(UnimodularLattice { basis, m, n })
    }

    /// The standard lattice Z^d.
    pub fn standard(m: usize, n: usize) -> Self {
        UnimodularLattice::new(DMatrix::identity(m + n, m + n), m, n)
            .expect("identity basis is unimodular")
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.m + self.n
    }

    /// 2-norm condition number of the basis.
    pub fn condition_number(&self) -> f64 {
        let sv = self.basis.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0f64, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Dual lattice basis (inverse transpose); unimodular again.
    pub fn dual(&self) -> Self {
        let inv_t = self
            .basis
            .clone()
            .try_inverse()
            .expect("validated basis is invertible")
            .transpose();
        UnimodularLattice {
            basis: inv_t,
            m: self.m,
            n: self.n,
        }
    }

    /// Left action by an arbitrary group element (no det repair; the
    /// caller is responsible for g being volume preserving).
    pub(crate) fn acted(&self, g: &DMatrix<f64>) -> Self {
        UnimodularLattice {
            basis: g * &self.basis,
            m: self.m,
            n: self.n,
        }
    }
}

/// The diagonal one-parameter flow: expands the first m coordinates by
/// e^{nt} and contracts the last n by e^{-mt}. Determinant preserved.
pub fn apply_gt(x: &UnimodularLattice, t: f64) -> Result<UnimodularLattice> {
    let (m, n) = (x.m(), x.n());
    let up = n as f64 * t;
    let down = -(m as f64) * t;
    if up.abs() > 700.0 || down.abs() > 700.0 {
        return Err(CoreError::OverflowScale {
            exponent: up.abs().max(down.abs()),
        });
    }
    let eu = up.exp();
    let ed = down.exp();
    let mut basis = x.basis.clone();
    for r in 0..m {
        for c in 0..x.dim() {
            basis[(r, c)] *= eu;
        }
    }
    for r in m..x.dim() {
        for c in 0..x.dim() {
            basis[(r, c)] *= ed;
        }
    }
    Ok(UnimodularLattice { basis, m: x.m, n: x.n })
}

/// Left action of the block-unipotent element with upper-right block s.
pub fn apply_hs(x: &UnimodularLattice, s: &DMatrix<f64>) -> Result<UnimodularLattice> {
    let (m, n) = (x.m(), x.n());
    if s.nrows() != m || s.ncols() != n {
        return Err(CoreError::ShapeMismatch {
            expected: format!("{m}x{n} block"),
            got: format!("{}x{}", s.nrows(), s.ncols()),
        });
    }
    let d = x.dim();
    let mut basis = x.basis.clone();
    for r in 0..m {
        for c in 0..d {
            let mut add = 0.0;
            for j in 0..n {
                add += s[(r, j)] * x.basis[(m + j, c)];
            }
            basis[(r, c)] += add;
        }
    }
    Ok(UnimodularLattice { basis, m: x.m, n: x.n })
}

/// The matrix of the flow element itself.
pub fn gt_matrix(m: usize, n: usize, t: f64) -> DMatrix<f64> {
    let d = m + n;
    DMatrix::from_fn(d, d, |r, c| {
        if r != c {
            0.0
        } else if r < m {
            (n as f64 * t).exp()
        } else {
            (-(m as f64) * t).exp()
        }
    })
}

/// The matrix of the block-unipotent element.
pub fn hs_matrix(m: usize, n: usize, s: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m + n;
    let mut h = DMatrix::identity(d, d);
    for r in 0..m {
        for c in 0..n {
            h[(r, m + c)] = s[(r, c)];
        }
    }
    h
}

#[derive(Serialize, Deserialize)]
struct LatticeJson {
    m: usize,
    n: usize,
    basis: Vec<Vec<f64>>,
}

impl Serialize for UnimodularLattice {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let rows = (0..d)
            .map(|r| (0..d).map(|c| self.basis[(r, c)]).collect())
            .collect();
        LatticeJson {
            m: self.m,
            n: self.n,
            basis: rows,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UnimodularLattice {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = LatticeJson::deserialize(deserializer)?;
        let d = raw.m + raw.n;
        if raw.basis.len() != d || raw.basis.iter().any(|row| row.len() != d) {
            return Err(serde::de::Error::custom("basis must be a d x d row-major array"));
        }
        let flat: Vec<f64> = raw.basis.into_iter().flatten().collect();
        let basis = DMatrix::from_row_slice(d, d, &flat);
        UnimodularLattice::new(basis, raw.m, raw.n).map_err(serde::de::Error::custom)
    }
}
