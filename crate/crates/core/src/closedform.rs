//! Capacities with closed forms: balls, ellipsoids, orthogonal cylinders and
//! products of lower-dimensional pieces.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bodies::ConvexBody;
use crate::dualsolver::{polygon_action, Carrier};
use crate::error::{Error, Result};
use crate::spectrum::{golden_min, t_psi};
use crate::symplin::{expm, fixed_space, norm_inf, sigma_min, standard_j, SymplecticMap, KERNEL_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "closed_form")]
    ClosedForm,
    #[serde(rename = "root_find")]
    RootFind,
    #[serde(rename = "dual_solver")]
    DualSolver,
    #[serde(rename = "oracle_2d")]
    Oracle2d,
}

/// A capacity value together with how it was obtained.
#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    pub value: f64,
    pub method: Method,
    #[serde(skip)]
    pub carrier: Option<Carrier>,
    pub diagnostics: BTreeMap<String, f64>,
}

impl CapacityResult {
    pub fn new(value: f64, method: Method) -> Self {
        Self { value, method, carrier: None, diagnostics: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// `c(B^{2n}(r)) = r^2 t(Psi) / 2`.
pub fn capacity_ball(psi: &SymplecticMap, radius: f64) -> Result<CapacityResult> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    let t = t_psi(psi)?;
    Ok(CapacityResult::new(radius * radius * t / 2.0, Method::ClosedForm).with("t_psi", t))
}

const ELLIPSOID_ACCEPT: f64 = 1e-9;
const ELLIPSOID_SAFETY: f64 = 4.0;
const ELLIPSOID_STEP: f64 = 2e-3;

/// Smallest `T > 0` with `exp(T J S) z = Psi z` for some `z != 0`; this is
/// the capacity of `E = { <S z, z> / 2 < 1 }`.
pub fn capacity_ellipsoid(psi: &SymplecticMap, s: &DMatrix<f64>) -> Result<CapacityResult> {
    let dim = psi.dim();
    if s.nrows() != dim || s.ncols() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: s.nrows() });
    }
    if (s - s.transpose()).amax() > 1e-10 * s.amax().max(1.0) {
        return Err(Error::InvalidInput("S must be symmetric".into()));
    }
    let eig = s.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(lo > 0.0) {
        return Err(Error::InvalidInput("S must be positive definite".into()));
    }
    let t_cap = std::f64::consts::TAU / lo * ELLIPSOID_SAFETY;
    // Rotation frequencies of exp(tJS) are bounded by |S|; sample each turn finely.
    let by_freq = 64.0 * hi * t_cap / std::f64::consts::TAU;
    let count = (by_freq.max(t_cap / ELLIPSOID_STEP).ceil() as usize).clamp(4096, 400_000);
    let js = standard_j(psi.n()) * s;
    let f = |t: f64| sigma_min(&(expm(&(&js * t)) - psi.matrix()));
    let h = t_cap / count as f64;
    let vals: Vec<f64> = (0..=count + 1).map(|k| f(k as f64 * h)).collect();
    let accept = ELLIPSOID_ACCEPT * norm_inf(psi.matrix()).max(1.0);
    for k in 2..=count {
        if vals[k] <= vals[k - 1] && vals[k] <= vals[k + 1] {
            // Two nearby return times can share one grid minimum.
            let a = (k - 1) as f64 * h;
            let sub = h / 32.0;
            let fine: Vec<f64> = (0..=64).map(|i| f(a + i as f64 * sub)).collect();
            let mut found = None;
            for i in 0..=64 {
                let left = if i == 0 { vals[k - 1] } else { fine[i - 1] };
                let right = if i == 64 { vals[k + 1].max(fine[i]) } else { fine[i + 1] };
                if fine[i] <= left && fine[i] <= right {
                    let lo = a + (i as f64 - 1.0).max(0.0) * sub;
                    let (t, fv) = golden_min(f, lo, lo + 2.0 * sub, 1e-13 * a.max(1.0));
                    if fv <= accept {
                        found = Some((t, fv));
                        break;
                    }
                }
            }
            if let Some((t, fv)) = found {
                return Ok(CapacityResult::new(t, Method::RootFind)
                    .with("sigma_min", fv)
                    .with("t_cap", t_cap)
                    .with("grid", count as f64));
            }
        }
    }
    Err(Error::NoZeroFound(format!("no return time for exp(TJS) in (0, {t_cap:.6}]")))
}

/// The closed characteristic `x(t) = exp(tJS) z` on `dE` realizing
/// [`capacity_ellipsoid`], sampled at `samples + 1` uniform times on `[0, T]`.
pub fn ellipsoid_carrier(psi: &SymplecticMap, s: &DMatrix<f64>, samples: usize) -> Result<Carrier> {
    let t = capacity_ellipsoid(psi, s)?.value;
    let dim = psi.dim();
    let js = standard_j(psi.n()) * s;
    let svd = (expm(&(&js * t)) - psi.matrix()).svd(false, true);
    let v_t = svd.v_t.ok_or(Error::SingularMatrix)?;
    let k = svd.singular_values.imin();
    let mut z: DVector<f64> = v_t.row(k).transpose();
    let hz = 0.5 * z.dot(&(s * &z));
    z /= hz.sqrt();
    let m = samples.max(2);
    let step = expm(&(&js * (t / m as f64)));
    let mut x = z.clone();
    let mut pts = Vec::with_capacity(m + 1);
    for j in 0..=m {
        if j > 0 {
            x = &step * &x;
        }
        pts.push((t * j as f64 / m as f64, x.clone()));
    }
    let boundary_residual = pts.iter().map(|(_, x)| ((0.5 * x.dot(&(s * x))).sqrt() - 1.0).abs()).fold(0.0, f64::max);
    let closure_residual = (&pts[m].1 - psi.apply(&pts[0].1)).norm();
    let refs: Vec<&DVector<f64>> = pts.iter().map(|(_, x)| x).collect();
    let action = polygon_action(&refs);
    Ok(Carrier {
        samples: pts,
        action,
        period_param: t,
        a0: DVector::zeros(dim),
        boundary_residual,
        closure_residual,
        multiplier_residual: 0.0,
        center: DVector::zeros(dim),
    })
}

/// Upper bound `(r_n^2 / 2) t(Phi Psi Phi^{-1})` for a symplectic `Phi`
/// taking `E` into a round-axis ellipsoid; `r_n` is the largest radius of `Phi(E)`.
pub fn ellipsoid_upper_bound(psi: &SymplecticMap, s: &DMatrix<f64>, phi: &SymplecticMap) -> Result<f64> {
    if phi.dim() != psi.dim() || s.nrows() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), got: phi.dim() });
    }
    let phi_inv = phi.inverse();
    let m = phi_inv.matrix().transpose() * s * phi_inv.matrix();
    let lo = m.symmetric_eigen().eigenvalues.min();
    if !(lo > 0.0) {
        return Err(Error::InvalidInput("S must be positive definite".into()));
    }
    let r2 = 2.0 / lo;
    let conj = phi.compose(psi).compose(&phi_inv);
    Ok(r2 / 2.0 * t_psi(&conj)?)
}

/// Ellipsoid capacity plus the bound of [`ellipsoid_upper_bound`] as the
/// diagnostic `upper_bound`.
pub fn capacity_ellipsoid_with_bound(psi: &SymplecticMap, s: &DMatrix<f64>, phi: &SymplecticMap) -> Result<CapacityResult> {
    let bound = ellipsoid_upper_bound(psi, s, phi)?;
    Ok(capacity_ellipsoid(psi, s)?.with("upper_bound", bound))
}

/// `min_i cap_fn(Psi_i, D_i)` for `Psi = Psi_1 (+) ... (+) Psi_k` acting on
/// `D_1 x ... x D_k`. Every index attaining the minimum is listed in the
/// diagnostics as `argmin_<j>`.
pub fn capacity_product<F>(pairs: &[(SymplecticMap, ConvexBody)], mut cap_fn: F) -> Result<CapacityResult>
where
    F: FnMut(&SymplecticMap, &ConvexBody) -> Result<CapacityResult>,
{
    if pairs.is_empty() {
        return Err(Error::InvalidInput("product needs at least one factor".into()));
    }
    let mut values = Vec::with_capacity(pairs.len());
    for (psi, body) in pairs {
        if body.dim() != psi.dim() {
            return Err(Error::DimensionMismatch { expected: psi.dim(), got: body.dim() });
        }
        values.push(cap_fn(psi, body)?.value);
    }
    let best = values.iter().copied().fold(f64::INFINITY, f64::min);
    let ties: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= best * (1.0 + 1e-9)).collect();
    let mut out = CapacityResult::new(best, Method::ClosedForm)
        .with("argmin_index", ties[0] as f64)
        .with("argmin_count", ties.len() as f64);
    for (i, v) in values.iter().enumerate() {
        out = out.with(&format!("factor_{i}"), *v);
    }
    for (j, i) in ties.iter().enumerate() {
        out = out.with(&format!("argmin_{j}"), *i as f64);
    }
    Ok(out)
}

/// `c(S^1(r_1) x ... x S^1(r_n)) = min_i t(Psi_i) r_i^2 / 2` for planar
/// `Psi_i` that have the eigenvalue 1.
pub fn capacity_torus(psis: &[SymplecticMap], radii: &[f64]) -> Result<CapacityResult> {
    if psis.len() != radii.len() {
        return Err(Error::DimensionMismatch { expected: psis.len(), got: radii.len() });
    }
    let mut pairs = Vec::with_capacity(psis.len());
    for (psi, &r) in psis.iter().zip(radii) {
        if psi.n() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: psi.n() });
        }
        if fixed_space(psi, KERNEL_REL_TOL).rank_fix == 0 {
            return Err(Error::AssumptionViolated("torus factor map must have the eigenvalue 1".into()));
        }
        pairs.push((psi.clone(), ConvexBody::centered_ball(2, r)?));
    }
    capacity_product(&pairs, |psi, body| match body.kind() {
        crate::bodies::BodyKind::Ball { radius, .. } => capacity_ball(psi, *radius),
        _ => unreachable!(),
    })
}

/// `c(Z^{2n}(1)) = t(Psi) / 2` for orthogonal symplectic `Psi`.
pub fn capacity_orth_cylinder(psi: &SymplecticMap) -> Result<CapacityResult> {
    let defect = psi.orthogonality_defect();
    if defect > 1e-9 {
        return Err(Error::NotOrthogonal { defect });
    }
    let t = t_psi(psi)?;
    Ok(CapacityResult::new(t / 2.0, Method::ClosedForm).with("theta_1", t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplin::oplus;
    use std::f64::consts::PI;

    fn diag(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(xs))
    }

    #[test]
    fn ball_values() {
        assert!((capacity_ball(&SymplecticMap::identity(2), 1.0).unwrap().value - PI).abs() < 1e-12);
        assert!((capacity_ball(&SymplecticMap::minus_identity(3), 1.0).unwrap().value - PI / 2.0).abs() < 1e-12);
        let th = 1.3;
        assert!((capacity_ball(&SymplecticMap::rotation(1, th), 2.0).unwrap().value - 2.0 * th).abs() < 1e-9);
    }

    #[test]
    fn ellipse_area() {
        let (a, b) = (0.7, 1.9);
        let c = capacity_ellipsoid(&SymplecticMap::identity(1), &diag(&[2.0 / (a * a), 2.0 / (b * b)])).unwrap();
        assert!((c.value - PI * a * b).abs() < 1e-9, "{}", c.value);
    }

    #[test]
    fn ellipsoid_smallest_block() {
        // Semi-axes r1 in plane (q1, p1), r2 in plane (q2, p2).
        let (r1, r2) = (0.8, 1.5);
        let s = diag(&[2.0 / (r1 * r1), 2.0 / (r2 * r2), 2.0 / (r1 * r1), 2.0 / (r2 * r2)]);
        let c = capacity_ellipsoid(&SymplecticMap::identity(2), &s).unwrap();
        assert!((c.value - PI * r1 * r1).abs() < 1e-9);
    }

    #[test]
    fn ellipsoid_matches_ball() {
        for psi in [SymplecticMap::rotation(1, 2.2), SymplecticMap::minus_identity(2), SymplecticMap::identity(1)] {
            let s = DMatrix::identity(psi.dim(), psi.dim()) * 2.0;
            let e = capacity_ellipsoid(&psi, &s).unwrap().value;
            let b = capacity_ball(&psi, 1.0).unwrap().value;
            assert!((e - b).abs() < 1e-9, "{e} vs {b}");
        }
    }

    #[test]
    fn ellipsoid_upper_bound_dominates() {
        let psi = SymplecticMap::identity(1);
        let (a, b) = (0.5, 2.0);
        let s = diag(&[2.0 / (a * a), 2.0 / (b * b)]);
        // Phi = diag(sqrt(b/a), sqrt(a/b)) maps the ellipse to the disc of radius sqrt(ab).
        let phi = SymplecticMap::new(diag(&[(b / a).sqrt(), (a / b).sqrt()]), 1e-9).unwrap();
        let c = capacity_ellipsoid_with_bound(&psi, &s, &phi).unwrap();
        let bound = c.diagnostics["upper_bound"];
        assert!(c.value <= bound * (1.0 + 1e-9));
        // Phi commutes with I, so the bound is (ab / 2) * 2 pi, the ellipse area.
        assert!((bound - PI * a * b).abs() < 1e-9);
        assert!((c.value - bound).abs() < 1e-9);
    }

    #[test]
    fn product_min_and_ties() {
        let pairs = vec![
            (SymplecticMap::identity(1), ConvexBody::unit_ball(2)),
            (SymplecticMap::identity(1), ConvexBody::unit_ball(2)),
        ];
        let r = capacity_product(&pairs, |psi, _| capacity_ball(psi, 1.0)).unwrap();
        assert!((r.value - PI).abs() < 1e-12);
        assert_eq!(r.diagnostics["argmin_count"], 2.0);
        assert_eq!(r.diagnostics["argmin_index"], 0.0);
    }

    #[test]
    fn torus_formula() {
        // Shear-type map with eigenvalue 1: r = 1, z = 0 forces cos(theta) = 1.
        let psis = vec![SymplecticMap::identity(1), SymplecticMap::identity(1)];
        let r = capacity_torus(&psis, &[1.0, 0.6]).unwrap();
        assert!((r.value - PI * 0.36).abs() < 1e-9);
        assert_eq!(r.diagnostics["argmin_index"], 1.0);
        assert!(capacity_torus(&[SymplecticMap::rotation(1, 1.0)], &[1.0]).is_err());
    }

    #[test]
    fn cylinders() {
        assert!((capacity_orth_cylinder(&SymplecticMap::identity(3)).unwrap().value - PI).abs() < 1e-9);
        assert!((capacity_orth_cylinder(&SymplecticMap::minus_identity(2)).unwrap().value - PI / 2.0).abs() < 1e-9);
        let psi = oplus(&SymplecticMap::rotation(1, 0.7), &SymplecticMap::rotation(1, 2.0));
        assert!((capacity_orth_cylinder(&psi).unwrap().value - 0.35).abs() < 1e-9);
        let hyp = SymplecticMap::new(diag(&[2.0, 0.5]), 1e-9).unwrap();
        assert!(matches!(capacity_orth_cylinder(&hyp), Err(Error::NotOrthogonal { .. })));
    }

    #[test]
    fn ellipsoid_carrier_closes() {
        let s = diag(&[2.0, 0.5, 2.0 / 9.0, 1.0]);
        let psi = SymplecticMap::rotation(2, 0.9);
        let c = ellipsoid_carrier(&psi, &s, 2048).unwrap();
        let t = capacity_ellipsoid(&psi, &s).unwrap().value;
        assert!(c.boundary_residual < 1e-10);
        assert!(c.closure_residual < 1e-7, "{}", c.closure_residual);
        assert!((c.action - t).abs() < 1e-5 * t, "{} {}", c.action, t);
    }
}
