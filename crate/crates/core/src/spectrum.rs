//! Zeros of `g(s) = det(Psi - exp(sJ))` on `(0, 2pi]`, the minimal
//! characteristic time `t(Psi)`, and the eigenbasis of `-J d/dt` on curves
//! with `x(1) = Psi x(0)`.
//!
//! The eigenvalues of that operator form the lattice `t_l + 2 k pi`; the
//! eigenfunction for `lambda = t_l + 2 k pi` and seed `X in ker(exp(t_l J) - Psi)`
//! is `exp(lambda t J) X`, which has unit norm pointwise when `|X| = 1`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::symplin::{apply_exp_sj, exp_sj, kernel_split, sigma_min, SymplecticMap};

const TWO_PI: f64 = 2.0 * PI;

/// Tuning of the zero scan.
#[derive(Debug, Clone, Copy)]
pub struct ZeroOptions {
    /// Uniform samples of `sigma_min(Psi - exp(sJ))` on `(0, 2pi]`.
    pub grid: usize,
    /// Golden-section stops once the bracket is this narrow.
    pub bracket: f64,
    /// A refined minimum counts as a zero when `sigma_min` is at most this.
    pub accept: f64,
    /// Refined zeros closer than this are merged.
    pub merge: f64,
    /// Relative singular-value threshold for kernel dimensions.
    pub kernel_tol: f64,
}

impl Default for ZeroOptions {
    fn default() -> Self {
        Self { grid: 4096, bracket: 1e-12, accept: 1e-9, merge: 1e-6, kernel_tol: 1e-7 }
    }
}

/// Sorted zeros `t_1 < ... < t_m` in `(0, 2pi]` with kernel dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSet {
    pub zeros: Vec<f64>,
    pub multiplicities: Vec<usize>,
}

pub fn g_psi(psi: &SymplecticMap, s: f64) -> f64 {
    (psi.matrix() - exp_sj(s, psi.n())).determinant()
}

fn sigma_at(psi: &SymplecticMap, s: f64) -> f64 {
    sigma_min(&(psi.matrix() - exp_sj(s, psi.n())))
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
pub(crate) fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, width: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a).abs() > width && iter < 200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(c, fc), (d, fd), (x, fx)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap()
}

fn wrap_period(s: f64) -> f64 {
    let w = s.rem_euclid(TWO_PI);
    if w < 1e-10 || TWO_PI - w < 1e-10 {
        TWO_PI
    } else {
        w
    }
}

/// All zeros of `g` on `(0, 2pi]`.
///
/// Zeros of `g` can be tangential (`g >= 0` for orthogonal `Psi`), so the
/// scan tracks local minima of the smallest singular value rather than sign
/// changes of the determinant.
pub fn zeros_in_period(psi: &SymplecticMap, opts: &ZeroOptions) -> Result<ZeroSet> {
    let n = opts.grid.max(16);
    let h = TWO_PI / n as f64;
    let samples: Vec<f64> = (0..n).map(|i| sigma_at(psi, h * (i + 1) as f64)).collect();

    let mut found: Vec<f64> = Vec::new();
    for i in 0..n {
        let prev = samples[(i + n - 1) % n];
        let next = samples[(i + 1) % n];
        let cur = samples[i];
        if cur > prev || cur > next {
            continue;
        }
        // Skip the second sample of an exactly flat pair.
        if cur == prev && i > 0 {
            continue;
        }
        let centre = h * (i + 1) as f64;
        let (s, val) = golden_min(|s| sigma_at(psi, s), centre - h, centre + h, opts.bracket);
        if val <= opts.accept {
            found.push(wrap_period(s));
        }
    }
    if found.is_empty() {
        return Err(Error::NoZeroFound(format!(
            "no minimum of sigma_min below {:.1e} on (0, 2pi]",
            opts.accept
        )));
    }
    found.sort_by(|a, b| a.total_cmp(b));
    let mut zeros: Vec<f64> = Vec::new();
    for s in found {
        match zeros.last() {
            Some(&last) if (s - last).abs() < opts.merge => {}
            _ => zeros.push(s),
        }
    }
    // 2pi and values just above 0 describe the same point of the circle.
    if zeros.len() > 1 && zeros[0] < opts.merge && TWO_PI - zeros[zeros.len() - 1] < opts.merge {
        zeros.remove(0);
    }
    let multiplicities = zeros
        .iter()
        .map(|&t| kernel_basis(psi, t, opts.kernel_tol).ncols().max(1))
        .collect();
    Ok(ZeroSet { zeros, multiplicities })
}

/// Orthonormal basis of `ker(exp(tJ) - Psi)`.
pub fn kernel_basis(psi: &SymplecticMap, t: f64, rel_tol: f64) -> DMatrix<f64> {
    let m = exp_sj(t, psi.n()) - psi.matrix();
    let (ker, _) = kernel_split(&m, rel_tol);
    if ker.ncols() > 0 {
        return ker;
    }
    // A refined zero can sit just above a strict relative threshold; fall
    // back to the single smallest singular direction.
    let svd = m.svd(false, true);
    let v_t = svd.v_t.unwrap();
    let imin = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    DMatrix::from_columns(&[v_t.row(imin).transpose()])
}

/// `t(Psi)`: the smallest zero of `g` in `(0, 2pi]`.
pub fn t_psi(psi: &SymplecticMap) -> Result<f64> {
    Ok(zeros_in_period(psi, &ZeroOptions::default())?.zeros[0])
}

/// `det(I + A^{-T} A - cos(s) (A + A^{-T}))`, whose zeros on `(0, 2pi]`
/// coincide with those of `g` for the lift `Psi_A = diag(A, A^{-T})`.
pub fn g_psi_a(a: &DMatrix<f64>, s: f64) -> Result<f64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let a_inv_t = a.transpose().try_inverse().ok_or(Error::SingularMatrix)?;
    let m = DMatrix::identity(n, n) + &a_inv_t * a - (a + &a_inv_t) * s.cos();
    Ok(m.determinant())
}

/// One eigenfunction `exp(lambda t J) seed` of `-J d/dt`.
#[derive(Debug, Clone)]
pub struct Mode {
    pub lambda: f64,
    pub seed: DVector<f64>,
    /// Index of the zero `t_l` this mode belongs to.
    pub family: usize,
}

impl Mode {
    pub fn eval(&self, t: f64) -> DVector<f64> {
        apply_exp_sj(self.lambda * t, &self.seed)
    }
}

/// Truncated eigenbasis: every nonzero eigenvalue with `|lambda| <= lambda_max`.
/// Constant modes (eigenvalue 0) live in `FixedSpace`.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub n: usize,
    pub lambda_max: f64,
    pub zero_set: ZeroSet,
    pub modes: Vec<Mode>,
}

/// `2 pi (periods + 1)`: at least `periods` lattice points per zero family and sign.
pub fn default_lambda_max(periods: usize) -> f64 {
    TWO_PI * (periods as f64 + 1.0)
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.lambda).collect()
    }

    /// Index of the first mode with positive eigenvalue (modes are sorted).
    pub fn first_positive(&self) -> usize {
        self.modes.iter().position(|m| m.lambda > 0.0).unwrap_or(self.modes.len())
    }
}

pub fn eigenbasis(psi: &SymplecticMap, lambda_max: f64) -> Result<EigenBasis> {
    eigenbasis_with(psi, lambda_max, &ZeroOptions::default())
}

pub fn eigenbasis_with(psi: &SymplecticMap, lambda_max: f64, opts: &ZeroOptions) -> Result<EigenBasis> {
    let zero_set = zeros_in_period(psi, opts)?;
    let mut modes = Vec::new();
    for (family, &t) in zero_set.zeros.iter().enumerate() {
        let seeds = kernel_basis(psi, t, opts.kernel_tol);
        let k_lo = ((-lambda_max - t) / TWO_PI).ceil() as i64;
        let k_hi = ((lambda_max - t) / TWO_PI).floor() as i64;
        for k in k_lo..=k_hi {
            let lambda = t + TWO_PI * k as f64;
            if lambda.abs() < 1e-9 || lambda.abs() > lambda_max {
                continue;
            }
            for c in 0..seeds.ncols() {
                modes.push(Mode { lambda, seed: seeds.column(c).into_owned(), family });
            }
        }
    }
    modes.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    Ok(EigenBasis { n: psi.n(), lambda_max, zero_set, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplin::{fixed_space, oplus, KERNEL_REL_TOL};

    #[test]
    fn g_at_known_zeros() {
        assert!(g_psi(&SymplecticMap::identity(2), TWO_PI).abs() < 1e-12);
        assert!(g_psi(&SymplecticMap::minus_identity(2), PI).abs() < 1e-12);
    }

    #[test]
    fn g_for_plane_rotation_is_squared_modulus() {
        let theta: f64 = 1.1;
        let psi = SymplecticMap::rotation(1, theta);
        for &s in &[0.2f64, 1.0, 2.5, 4.0, 6.0] {
            // |e^{i theta} - e^{i s}|^2
            let expected = (theta.cos() - s.cos()).powi(2) + (theta.sin() - s.sin()).powi(2);
            assert!((g_psi(&psi, s) - expected).abs() < 1e-12);
            assert!(g_psi(&psi, s) >= 0.0);
        }
    }

    #[test]
    fn identity_and_minus_identity() {
        for n in 1..=3 {
            let z = zeros_in_period(&SymplecticMap::identity(n), &ZeroOptions::default()).unwrap();
            assert_eq!(z.zeros.len(), 1);
            assert!((z.zeros[0] - TWO_PI).abs() < 1e-9);
            assert_eq!(z.multiplicities, vec![2 * n]);
            let t = t_psi(&SymplecticMap::minus_identity(n)).unwrap();
            assert!((t - PI).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_sum_zeros() {
        let psi = oplus(&SymplecticMap::rotation(1, 0.9), &SymplecticMap::rotation(1, 2.6));
        let z = zeros_in_period(&psi, &ZeroOptions::default()).unwrap();
        assert_eq!(z.zeros.len(), 2);
        assert!((z.zeros[0] - 0.9).abs() < 1e-9);
        assert!((z.zeros[1] - 2.6).abs() < 1e-9);
        assert_eq!(z.multiplicities, vec![2, 2]);
        assert!((t_psi(&psi).unwrap() - 0.9).abs() < 1e-9);
    }

    #[test]
    fn hyperbolic_map_has_transversal_zero() {
        let psi = SymplecticMap::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]), 1e-12).unwrap();
        // det = 2 - 2.5 cos s
        let t = t_psi(&psi).unwrap();
        assert!((t - 0.8f64.acos()).abs() < 1e-9);
    }

    #[test]
    fn g_psi_a_scalar_cases() {
        let id = DMatrix::<f64>::identity(3, 3);
        for &s in &[0.5f64, 2.0, 4.4] {
            let expected = (2.0 - 2.0 * s.cos()).powi(3);
            assert!((g_psi_a(&id, s).unwrap() - expected).abs() < 1e-12);
        }
        assert!(g_psi_a(&(-id.clone()), PI).unwrap().abs() < 1e-12);
        assert_eq!(g_psi_a(&DMatrix::zeros(2, 2), 1.0), Err(Error::SingularMatrix));
    }

    #[test]
    fn eigenbasis_identity_lattice() {
        let psi = SymplecticMap::identity(2);
        let basis = eigenbasis(&psi, TWO_PI).unwrap();
        let lambdas = basis.lambdas();
        assert_eq!(lambdas.len(), 8);
        assert!(lambdas[..4].iter().all(|&l| (l + TWO_PI).abs() < 1e-9));
        assert!(lambdas[4..].iter().all(|&l| (l - TWO_PI).abs() < 1e-9));
        assert_eq!(fixed_space(&psi, KERNEL_REL_TOL).rank_fix, 4);
    }

    #[test]
    fn eigenfunctions_satisfy_boundary_condition() {
        let s = DMatrix::from_row_slice(4, 4, &[
            0.4, 0.1, 0.0, 0.2, 0.1, 0.3, 0.1, 0.0, 0.0, 0.1, 0.5, 0.1, 0.2, 0.0, 0.1, 0.2,
        ]);
        let psi = SymplecticMap::from_hamiltonian(&s).unwrap();
        let basis = eigenbasis(&psi, default_lambda_max(4)).unwrap();
        assert!(!basis.is_empty());
        for m in &basis.modes {
            let gap = m.eval(1.0) - psi.apply(&m.eval(0.0));
            assert!(gap.norm() < 1e-9, "lambda {} gap {}", m.lambda, gap.norm());
            assert!((m.eval(0.37).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mode_count_grows_linearly() {
        let psi = SymplecticMap::rotation(1, 1.3);
        let a = eigenbasis(&psi, default_lambda_max(8)).unwrap().len();
        let b = eigenbasis(&psi, default_lambda_max(16)).unwrap().len();
        let c = eigenbasis(&psi, default_lambda_max(32)).unwrap().len();
        assert_eq!(b - a, c - b - (b - a));
        assert!(c > b && b > a);
    }
}
