//! Symplectic linear algebra on R^{2n} with coordinates (q_1..q_n, p_1..p_n).
//!
//! Everything here is dense: the supported regime is n <= 8.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default validation tolerance for symplecticity, `|M^T J M - J|_inf`.
pub const DEFAULT_SYMPLECTIC_TOL: f64 = 1e-9;

/// Relative singular-value threshold used for kernel ranks.
pub const KERNEL_REL_TOL: f64 = 1e-8;

/// The standard complex structure `[[0, -I], [I, 0]]`.
pub fn standard_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = -1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// Closed form of `exp(sJ)`: `[[cos s I, -sin s I], [sin s I, cos s I]]`.
pub fn exp_sj(s: f64, n: usize) -> DMatrix<f64> {
    let (sn, cs) = s.sin_cos();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = cs;
        m[(n + i, n + i)] = cs;
        m[(i, n + i)] = -sn;
        m[(n + i, i)] = sn;
    }
    m
}

/// Applies `exp(sJ)` to a vector without forming the matrix.
pub fn apply_exp_sj(s: f64, x: &DVector<f64>) -> DVector<f64> {
    let n = x.len() / 2;
    let (sn, cs) = s.sin_cos();
    let mut out = DVector::zeros(2 * n);
    for i in 0..n {
        out[i] = cs * x[i] - sn * x[n + i];
        out[n + i] = sn * x[i] + cs * x[n + i];
    }
    out
}

/// General matrix exponential (scaling and squaring with a Padé core).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().exp()
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Singular values sorted in ascending order.
pub fn singular_values_ascending(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values_ascending(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal bases of the kernel and its orthogonal complement,
/// separated by the singular-value threshold `rel_tol * max(sigma_max, 1)`.
/// The floor keeps an exactly-zero matrix (up to rounding) fully singular.
pub fn kernel_split(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = m.ncols();
    // Pad to square so that V carries a full orthonormal basis.
    let sq = if m.nrows() < dim {
        let mut p = DMatrix::zeros(dim, dim);
        p.view_mut((0, 0), (m.nrows(), dim)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let thr = rel_tol * sigma_max.max(1.0);
    let mut ker = Vec::new();
    let mut perp = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let row = v_t.row(i).transpose();
        if s <= thr {
            ker.push(row);
        } else {
            perp.push(row);
        }
    }
    (columns(dim, &ker), columns(dim, &perp))
}

fn columns(dim: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(dim, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

/// A validated symplectic matrix `Psi` with `Psi^T J Psi = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMap {
    n: usize,
    psi: DMatrix<f64>,
    tol: f64,
}

impl SymplecticMap {
    /// Validates `m` against the symplectic condition.
    pub fn new(m: DMatrix<f64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 || !m.nrows().is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "matrix dimension must be even and positive, got {}",
                m.nrows()
            )));
        }
        let n = m.nrows() / 2;
        let j = standard_j(n);
        let defect = norm_inf(&(m.transpose() * &j * &m - &j));
        if !(defect <= tol) {
            return Err(Error::NotSymplectic { defect, tol });
        }
        Ok(Self { n, psi: m, tol })
    }

    pub fn identity(n: usize) -> Self {
        Self { n, psi: DMatrix::identity(2 * n, 2 * n), tol: DEFAULT_SYMPLECTIC_TOL }
    }

    pub fn minus_identity(n: usize) -> Self {
        Self { n, psi: -DMatrix::identity(2 * n, 2 * n), tol: DEFAULT_SYMPLECTIC_TOL }
    }

    /// The rotation `exp(theta J)`; for `n = 1` this is `R(theta)`.
    pub fn rotation(n: usize, theta: f64) -> Self {
        Self { n, psi: exp_sj(theta, n), tol: DEFAULT_SYMPLECTIC_TOL }
    }

    /// Realification `[[X, -Y], [Y, X]]` of a unitary `U = X + iY`.
    pub fn from_unitary(re: &DMatrix<f64>, im: &DMatrix<f64>) -> Result<Self> {
        let n = re.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(re);
        m.view_mut((n, n), (n, n)).copy_from(re);
        m.view_mut((0, n), (n, n)).copy_from(&(-im));
        m.view_mut((n, 0), (n, n)).copy_from(im);
        Self::new(m, 1e-8)
    }

    /// `exp(J S)` for symmetric `S`, always symplectic.
    pub fn from_hamiltonian(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows() / 2;
        let sym = (s + s.transpose()) * 0.5;
        Self::new(expm(&(standard_j(n) * sym)), 1e-7)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `Psi^{-1} = -J Psi^T J`.
    pub fn inverse(&self) -> Self {
        let j = standard_j(self.n);
        Self { n: self.n, psi: -(&j * self.psi.transpose() * &j), tol: self.tol }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { n: self.n, psi: &self.psi * &other.psi, tol: self.tol.max(other.tol) }
    }

    /// `P Psi P^{-1}` for symplectic `P`.
    pub fn conjugate_by(&self, p: &Self) -> Self {
        p.compose(self).compose(&p.inverse())
    }

    pub fn orthogonality_defect(&self) -> f64 {
        norm_inf(&(self.psi.transpose() * &self.psi - DMatrix::identity(self.dim(), self.dim())))
    }

    pub fn is_orthogonal(&self, tol: f64) -> bool {
        self.orthogonality_defect() <= tol
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.psi * x
    }
}

/// Orthonormal bases of `E_1 = ker(Psi - I)` and of its orthogonal complement.
#[derive(Debug, Clone)]
pub struct FixedSpace {
    pub basis_fix: DMatrix<f64>,
    pub basis_perp: DMatrix<f64>,
    pub rank_fix: usize,
}

impl FixedSpace {
    /// Orthogonal projection onto `E_1`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.rank_fix == 0 {
            return DVector::zeros(x.len());
        }
        &self.basis_fix * (self.basis_fix.transpose() * x)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (x - self.project(x)).norm() <= tol * x.norm().max(1.0)
    }
}

pub fn fixed_space(psi: &SymplecticMap, rel_tol: f64) -> FixedSpace {
    let d = psi.dim();
    let m = psi.matrix() - DMatrix::identity(d, d);
    let (fix, perp) = kernel_split(&m, rel_tol);
    FixedSpace { rank_fix: fix.ncols(), basis_fix: fix, basis_perp: perp }
}

/// Direct sum in the interleaved layout: the q-blocks of both factors come
/// first, then the p-blocks.
pub fn oplus(a: &SymplecticMap, b: &SymplecticMap) -> SymplecticMap {
    let (n1, n2) = (a.n(), b.n());
    let n = n1 + n2;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let place = |m: &mut DMatrix<f64>, src: &DMatrix<f64>, k: usize, off: usize| {
        for bi in 0..2 {
            for bj in 0..2 {
                let blk = src.view((bi * k, bj * k), (k, k));
                m.view_mut((bi * n + off, bj * n + off), (k, k)).copy_from(&blk);
            }
        }
    };
    place(&mut m, a.matrix(), n1, 0);
    place(&mut m, b.matrix(), n2, n1);
    SymplecticMap { n, psi: m, tol: a.tol().max(b.tol()) }
}

/// Permutation taking a point `(q_1,p_1, q_2,p_2, ...)` of stacked symplectic
/// planes to the global layout `(q_1..q_n, p_1..p_n)`.
pub fn interleave_planes(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        p[(i, 2 * i)] = 1.0;
        p[(n + i, 2 * i + 1)] = 1.0;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn approx_eq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        norm_inf(&(a - b)) <= tol
    }

    #[test]
    fn j_for_n1() {
        assert_eq!(standard_j(1), DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
    }

    #[test]
    fn j_squares_to_minus_identity_and_is_orthogonal() {
        let j3 = standard_j(3);
        assert!(approx_eq(&(&j3 * &j3), &(-DMatrix::identity(6, 6)), 0.0));
        let j2 = standard_j(2);
        assert!(approx_eq(&(j2.transpose() * &j2), &DMatrix::identity(4, 4), 0.0));
    }

    #[test]
    fn validation() {
        assert!(SymplecticMap::new(DMatrix::identity(4, 4), 1e-12).is_ok());
        let flip = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            SymplecticMap::new(flip, 1e-9),
            Err(Error::NotSymplectic { .. })
        ));
        let squeeze = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!(SymplecticMap::new(squeeze, 1e-12).is_ok());
        assert!(SymplecticMap::new(DMatrix::identity(3, 3), 1e-9).is_err());
    }

    #[test]
    fn exp_sj_special_values() {
        assert!(approx_eq(&exp_sj(0.0, 2), &DMatrix::identity(4, 4), 0.0));
        assert!(approx_eq(&exp_sj(PI, 2), &(-DMatrix::identity(4, 4)), 1e-15));
        assert!(approx_eq(&exp_sj(PI / 2.0, 3), &standard_j(3), 1e-15));
    }

    #[test]
    fn exp_sj_agrees_with_general_expm() {
        for &s in &[0.3, 1.7, -2.4, 5.0] {
            let general = expm(&(standard_j(2) * s));
            assert!(approx_eq(&general, &exp_sj(s, 2), 1e-12));
        }
    }

    #[test]
    fn exp_sj_group_law() {
        let (s, t) = (0.7, -2.1);
        assert!(approx_eq(&(exp_sj(s, 3) * exp_sj(t, 3)), &exp_sj(s + t, 3), 1e-14));
    }

    #[test]
    fn inverse_formula() {
        let s = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.7]);
        let psi = SymplecticMap::from_hamiltonian(&s).unwrap();
        let prod = psi.matrix() * psi.inverse().matrix();
        assert!(approx_eq(&prod, &DMatrix::identity(2, 2), 1e-12));
    }

    #[test]
    fn fixed_space_ranks() {
        assert_eq!(fixed_space(&SymplecticMap::identity(2), KERNEL_REL_TOL).rank_fix, 4);
        assert_eq!(fixed_space(&SymplecticMap::rotation(1, 1.0), KERNEL_REL_TOL).rank_fix, 0);
        // Shear form with (r^2 + z^2 + 1) cos(theta) = 2r has eigenvalue 1.
        let (r, z) = (1.5_f64, 0.4_f64);
        let theta = (2.0 * r / (r * r + z * z + 1.0)).acos();
        let a = DMatrix::from_row_slice(2, 2, &[r, z, z, (1.0 + z * z) / r]);
        let psi = SymplecticMap::new(a * exp_sj(theta, 1), 1e-12).unwrap();
        let fs = fixed_space(&psi, KERNEL_REL_TOL);
        assert!(fs.rank_fix >= 1);
        let v = fs.basis_fix.column(0).into_owned();
        assert!((psi.apply(&v) - &v).norm() < 1e-8);
        assert_eq!(fs.rank_fix + fs.basis_perp.ncols(), 2);
    }

    #[test]
    fn oplus_layout_and_properties() {
        let id = oplus(&SymplecticMap::identity(1), &SymplecticMap::identity(1));
        assert_eq!(id.matrix(), &DMatrix::identity(4, 4));
        let r = oplus(&SymplecticMap::rotation(1, 0.4), &SymplecticMap::rotation(1, 2.2));
        assert!(r.is_orthogonal(1e-14));
        assert!(SymplecticMap::new(r.matrix().clone(), 1e-12).is_ok());
        // Interleaving conjugates a block-diagonal plane sum into the oplus layout.
        let mut blocks = DMatrix::zeros(4, 4);
        blocks.view_mut((0, 0), (2, 2)).copy_from(&exp_sj(0.4, 1));
        blocks.view_mut((2, 2), (2, 2)).copy_from(&exp_sj(2.2, 1));
        let p = interleave_planes(2);
        assert!(approx_eq(&(&p * blocks * p.transpose()), r.matrix(), 1e-15));
    }

    #[test]
    fn oplus_is_associative() {
        let s = |a: f64, b: f64, c: f64| {
            SymplecticMap::from_hamiltonian(&DMatrix::from_row_slice(2, 2, &[a, b, b, c])).unwrap()
        };
        let (a, b, c) = (s(0.2, 0.5, -0.3), s(1.1, -0.2, 0.4), s(-0.6, 0.3, 0.9));
        let left = oplus(&oplus(&a, &b), &c);
        let right = oplus(&a, &oplus(&b, &c));
        assert!(approx_eq(left.matrix(), right.matrix(), 0.0));
    }
}
