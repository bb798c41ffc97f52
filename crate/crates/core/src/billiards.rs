//! Generalized `A`-billiards in `Delta x Lambda`, where `Psi_A(q, p) = (Aq, A^{-T} p)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bodies::ConvexBody;
use crate::closedform::CapacityResult;
use crate::dualsolver::{minimize_capacity, Carrier, SolverOptions};
use crate::error::{Error, Result};
use crate::io::fmt_sig;
use crate::spectrum::t_psi;
use crate::symplin::{kernel_split, SymplecticMap, DEFAULT_SYMPLECTIC_TOL, KERNEL_REL_TOL};

pub const DEFAULT_DELTA_ACT: f64 = 1e-4;

/// `diag(A, A^{-T})`.
pub fn psi_a(a: &DMatrix<f64>) -> Result<SymplecticMap> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    let inv = a.clone().try_inverse().ok_or(Error::SingularMatrix)?;
    if !inv.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (n, n)).copy_from(&inv.transpose());
    SymplecticMap::new(m, DEFAULT_SYMPLECTIC_TOL)
}

/// Interior point of `body` fixed by `m`, if one of the natural candidates
/// (origin, projection of the body's interior point onto `Fix(m)`) qualifies.
fn fixed_interior(m: &DMatrix<f64>, body: &ConvexBody) -> Option<(DVector<f64>, f64)> {
    let n = m.nrows();
    let (ker, _) = kernel_split(&(m - DMatrix::identity(n, n)), KERNEL_REL_TOL);
    let mut candidates = vec![DVector::zeros(n)];
    if ker.ncols() > 0 {
        let c = body.interior_point();
        candidates.push(&ker * (ker.transpose() * c));
    }
    candidates
        .into_iter()
        .map(|z| {
            let r = body.inradius_about(&z);
            (z, r)
        })
        .filter(|(z, r)| *r > 1e-9 * (1.0 + z.norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
}

/// `xi^A_Lambda(Delta) = c^{Psi_A}(Delta x Lambda)`.
pub fn xi(a: &DMatrix<f64>, delta: &ConvexBody, lambda: &ConvexBody, opts: &SolverOptions) -> Result<CapacityResult> {
    let n = a.nrows();
    if delta.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: delta.dim() });
    }
    if lambda.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: lambda.dim() });
    }
    let psi = psi_a(a)?;
    if fixed_interior(a, delta).is_none() {
        return Err(Error::AssumptionViolated("Fix(A) does not meet the interior of Delta".into()));
    }
    if fixed_interior(&a.transpose(), lambda).is_none() {
        return Err(Error::AssumptionViolated("Fix(A^T) does not meet the interior of Lambda".into()));
    }
    let body = ConvexBody::product(delta.clone(), lambda.clone());
    let t = t_psi(&psi)?;
    Ok(minimize_capacity(&psi, &body, opts)?.with("t_psi", t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SegmentTag {
    /// `q` in the interior of `Delta`, `p` on `dLambda`.
    #[serde(rename = "q_moving")]
    QMoving,
    /// `q` on `dDelta`.
    #[serde(rename = "bounce")]
    Bounce,
}

#[derive(Debug, Clone, Serialize)]
pub struct BounceDecomposition {
    /// `q_0, ..., q_{m+1}` with `q_{m+1} = A q_0`.
    pub bounce_points: Vec<DVector<f64>>,
    pub segment_tags: Vec<SegmentTag>,
    /// `h_Lambda(q_j - q_{j+1})` for `j = 0..=m`.
    pub chord_lengths: Vec<f64>,
    pub total_h_length: f64,
    pub carrier_action: f64,
    /// Largest spread of `p` within a single q-moving segment.
    pub p_spread: f64,
    /// Number of separate bounce events on `dDelta`, including one at `q_0`.
    pub bounce_events: usize,
    /// Whether some sample strictly inside `(0, T)` lies on `dDelta x dLambda`.
    pub proper: bool,
    pub delta_act: f64,
}

impl BounceDecomposition {
    /// Interior bounce count `m`.
    pub fn m(&self) -> usize {
        self.bounce_points.len() - 2
    }

    pub fn relative_gap(&self) -> f64 {
        (self.total_h_length - self.carrier_action).abs() / self.carrier_action.abs().max(1e-300)
    }

    /// CSV with columns `j, q_1..q_n, h_Lambda(q_j - q_{j+1})`.
    pub fn to_csv(&self) -> String {
        let n = self.bounce_points.first().map_or(0, |q| q.len());
        let mut out = String::from("j");
        for i in 1..=n {
            out.push_str(&format!(",q_{i}"));
        }
        out.push_str(",h_chord\n");
        for (j, q) in self.bounce_points.iter().enumerate() {
            out.push_str(&j.to_string());
            for x in q.iter() {
                out.push(',');
                out.push_str(&fmt_sig(*x));
            }
            out.push(',');
            if let Some(h) = self.chord_lengths.get(j) {
                out.push_str(&fmt_sig(*h));
            }
            out.push('\n');
        }
        out
    }
}

/// Splits a billiard carrier into q-moving segments and bounces on `dDelta`.
///
/// A sample is active on a factor when its gauge about the carrier's fixed
/// point is within `delta_act` of 1. Consecutive samples on `dDelta` form one
/// bounce; for `A = I` runs wrapping around the end are merged.
pub fn extract_bounces(
    carrier: &Carrier,
    a: &DMatrix<f64>,
    delta: &ConvexBody,
    lambda: &ConvexBody,
    delta_act: f64,
) -> Result<BounceDecomposition> {
    let n = delta.dim();
    if carrier.center.len() != 2 * n || lambda.dim() != n || a.nrows() != n {
        return Err(Error::DimensionMismatch { expected: 2 * n, got: carrier.center.len() });
    }
    let cq = carrier.center.rows(0, n).into_owned();
    let cp = carrier.center.rows(n, n).into_owned();
    let d0 = delta.clone().translated(-&cq)?;
    let l0 = lambda.clone().translated(-&cp)?;
    let samples = &carrier.samples;
    let len = samples.len();
    let mut on_q = Vec::with_capacity(len);
    let mut on_p = Vec::with_capacity(len);
    for (idx, (_, x)) in samples.iter().enumerate() {
        let q = x.rows(0, n) - &cq;
        let p = x.rows(n, n) - &cp;
        let jq = d0.gauge(&q)?;
        let jp = l0.gauge(&p)?;
        let aq = (jq - 1.0).abs() < delta_act;
        let ap = (jp - 1.0).abs() < delta_act;
        if !aq && !ap {
            return Err(Error::ClassificationAmbiguous { index: idx });
        }
        on_q.push(aq);
        on_p.push(ap);
    }
    let tags: Vec<SegmentTag> =
        on_q.iter().map(|&b| if b { SegmentTag::Bounce } else { SegmentTag::QMoving }).collect();

    // maximal runs of bounce samples
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < len {
        if on_q[i] {
            let s = i;
            while i + 1 < len && on_q[i + 1] {
                i += 1;
            }
            runs.push((s, i));
        }
        i += 1;
    }
    let periodic = (a - DMatrix::identity(n, n)).amax() == 0.0;
    let q_of = |k: usize| samples[k].1.rows(0, n).into_owned();
    // bounce points lie on dDelta: average the run, then project radially
    let mean_q = |idx: &[usize]| -> DVector<f64> {
        let mut acc = DVector::zeros(n);
        for &k in idx {
            acc += q_of(k) - &cq;
        }
        acc /= idx.len() as f64;
        let j = d0.gauge(&acc).unwrap_or(1.0);
        if j > 0.0 {
            acc /= j;
        }
        acc + &cq
    };

    let mut q0 = q_of(0);
    let mut interior: Vec<DVector<f64>> = Vec::new();
    let wraps = periodic && runs.len() >= 2 && runs[0].0 == 0 && runs.last().unwrap().1 == len - 1;
    for (ri, &(s, e)) in runs.iter().enumerate() {
        if wraps && ri == runs.len() - 1 {
            continue;
        }
        let mut idx: Vec<usize> = (s..=e).collect();
        if wraps && ri == 0 {
            let (ls, le) = *runs.last().unwrap();
            idx.extend(ls..=le);
        }
        if !periodic && (s == 0 || e == len - 1) {
            continue;
        }
        interior.push(mean_q(&idx));
    }
    let events = runs.len() - usize::from(wraps);
    // a closed orbit is cut open at its first bounce
    if periodic && !interior.is_empty() {
        q0 = interior.remove(0);
    }

    let end = a * &q0;
    let mut points = Vec::with_capacity(interior.len() + 2);
    points.push(q0);
    points.extend(interior);
    points.push(end);
    let chord_lengths: Vec<f64> = points.windows(2).map(|w| lambda_support(&l0, &(&w[0] - &w[1]))).collect();
    let total_h_length = chord_lengths.iter().sum();

    let mut p_spread: f64 = 0.0;
    let mut k = 0;
    while k < len {
        if !on_q[k] {
            let s = k;
            while k + 1 < len && !on_q[k + 1] {
                k += 1;
            }
            let base = samples[s].1.rows(n, n).into_owned();
            for (_, x) in &samples[s..=k] {
                p_spread = p_spread.max((x.rows(n, n) - &base).norm());
            }
        }
        k += 1;
    }
    let proper = (1..len - 1).any(|k| on_q[k] && on_p[k]);

    Ok(BounceDecomposition {
        bounce_points: points,
        segment_tags: tags,
        chord_lengths,
        total_h_length,
        carrier_action: carrier.action,
        p_spread,
        bounce_events: events,
        proper,
        delta_act,
    })
}

fn lambda_support(l0: &ConvexBody, w: &DVector<f64>) -> f64 {
    l0.support(w).unwrap_or(f64::NAN)
}

/// Classification threshold adapted to how well the carrier sits on the boundary.
pub fn default_delta_act(carrier: &Carrier) -> f64 {
    DEFAULT_DELTA_ACT.max(2.0 * carrier.boundary_residual)
}

#[derive(Debug, Clone, Serialize)]
pub struct BilliardCheck {
    pub name: String,
    pub applicable: bool,
    pub pass: bool,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BilliardReport {
    pub checks: Vec<BilliardCheck>,
    pub pass: bool,
}

impl BilliardReport {
    pub fn get(&self, name: &str) -> Option<&BilliardCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn unit(v: &DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v.clone()
    }
}

/// How far `nu` is from being an outward support vector of `delta` at `q`:
/// `max(0, h(nu) - <q, nu>) / |nu|`.
fn support_violation(delta: &ConvexBody, q: &DVector<f64>, nu: &DVector<f64>) -> f64 {
    let nn = nu.norm();
    if nn <= 1e-14 {
        return 0.0;
    }
    let h = delta.support(nu).unwrap_or(f64::INFINITY);
    ((h - q.dot(nu)) / nn).max(0.0)
}

fn unit_candidates(n: usize) -> Vec<DVector<f64>> {
    if n == 2 {
        return (0..3600)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 3600.0;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..4096)
        .map(|_| {
            let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            unit(&v)
        })
        .collect()
}

/// Checks the defining conditions of a generalized `A`-billiard trajectory
/// `q_0, ..., q_m = A q_0` and reports each one.
pub fn validate_a_billiard(points: &[DVector<f64>], a: &DMatrix<f64>, delta: &ConvexBody, tol: f64) -> BilliardReport {
    let mut checks = Vec::new();
    let m = points.len().saturating_sub(1);
    let mut push = |name: &str, applicable: bool, violation: f64| {
        checks.push(BilliardCheck {
            name: name.to_string(),
            applicable,
            pass: !applicable || violation <= tol,
            violation: if applicable { violation } else { 0.0 },
        });
    };
    if m < 2 {
        push("AGBi", true, f64::INFINITY);
        let pass = false;
        return BilliardReport { checks, pass };
    }
    let gauge = |x: &DVector<f64>| delta.gauge(x).unwrap_or(f64::INFINITY);
    let on_boundary = (1..m).map(|i| (gauge(&points[i]) - 1.0).abs()).fold(0.0, f64::max);
    push("AGBi", true, on_boundary);

    let mut min_gap = f64::INFINITY;
    for range in [0..m, 1..m + 1] {
        let idx: Vec<usize> = range.collect();
        for (x, &i) in idx.iter().enumerate() {
            for &j in &idx[x + 1..] {
                min_gap = min_gap.min((&points[i] - &points[j]).norm());
            }
        }
    }
    push("AGBii", true, if min_gap > tol { 0.0 } else { tol - min_gap + f64::EPSILON });

    let mut refl: f64 = 0.0;
    for i in 1..m {
        let nu = unit(&(&points[i] - &points[i - 1])) + unit(&(&points[i] - &points[i + 1]));
        refl = refl.max(support_violation(delta, &points[i], &nu));
    }
    push("AGBiii", true, refl);

    let q0 = &points[0];
    let qm = &points[m];
    let u0 = unit(&(&points[1] - q0));
    let um = unit(&(qm - &points[m - 1]));
    let au0 = a * &u0;
    let ainv = a.clone().try_inverse();
    let int0 = gauge(q0) < 1.0 - tol;
    let intm = gauge(qm) < 1.0 - tol;

    let bill10 = (&au0 - &um).norm();
    // b_0 valid when b_0 - u0 supports Delta at q0 (automatic with b_0 = u0).
    let b0_violation = |b0: &DVector<f64>| support_violation(delta, q0, &(b0 - &u0));
    let bm_violation = |bm: &DVector<f64>| support_violation(delta, qm, &(&um - bm));
    let bill11 = match &ainv {
        Some(inv) => {
            let b0 = inv * &um;
            (b0.norm() - 1.0).abs() + b0_violation(&b0)
        }
        None => f64::INFINITY,
    };
    let bill12 = bm_violation(&au0);
    let bill13 = unit_candidates(q0.len())
        .iter()
        .map(|b0| b0_violation(b0) + bm_violation(&(a * b0)) + ((a * b0).norm() - 1.0).abs())
        .fold(f64::INFINITY, f64::min);

    push("AGBiv", int0 && intm, bill10);
    push("AGBv", !int0 && intm, bill10.min(bill11));
    push("AGBvi", int0 && !intm, bill10.min(bill12));
    push("AGBvii", !int0 && !intm, bill10.min(bill11).min(bill12).min(bill13));

    let pass = checks.iter().all(|c| c.pass);
    BilliardReport { checks, pass }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BilliardBounds {
    pub lower: f64,
    pub upper: f64,
    /// `2 width(Delta)`, only for `A = I`.
    pub width_upper: Option<f64>,
    pub t_psi: f64,
}

/// `r t(Psi_A) / 2 <= xi^A(Delta) <= t(Psi_A) R` for `B(qbar, r) in Delta in B(qbar, R)`.
pub fn billiard_bounds(a: &DMatrix<f64>, delta: &ConvexBody, r: f64, big_r: f64) -> Result<BilliardBounds> {
    if !(r > 0.0) || !(big_r >= r) {
        return Err(Error::AssumptionViolated(format!("need 0 < r <= R, got r = {r}, R = {big_r}")));
    }
    if delta.dim() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), got: delta.dim() });
    }
    let t = t_psi(&psi_a(a)?)?;
    let n = a.nrows();
    let width_upper = ((a - DMatrix::identity(n, n)).amax() == 0.0).then(|| 2.0 * delta.width());
    Ok(BilliardBounds { lower: r * t / 2.0, upper: t * big_r, width_upper, t_psi: t })
}

/// Inradius and circumradius of `delta` about a fixed point of `A`.
pub fn billiard_radii(a: &DMatrix<f64>, delta: &ConvexBody) -> Result<(DVector<f64>, f64, f64)> {
    let (z, r) = fixed_interior(a, delta)
        .ok_or_else(|| Error::AssumptionViolated("Fix(A) does not meet the interior of Delta".into()))?;
    let big_r = delta.circumradius_about(&z);
    Ok((z, r, big_r))
}
