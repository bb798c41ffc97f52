//! Property suites checking computed capacities against the inequalities and
//! derivative formulas they must satisfy.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bodies::ConvexBody;
use crate::closedform::{capacity_ellipsoid, ellipsoid_carrier};
use crate::dualsolver::{find_fixed_interior_point, minimize_capacity, neduv_period, SolverOptions};
use crate::error::{Error, Result};
use crate::spectrum::t_psi;
use crate::symplin::SymplecticMap;

/// Slack for inequalities between two solver values.
pub const SOLVER_SLACK: f64 = 1e-2;
/// Slack for identities between closed forms.
pub const CLOSED_FORM_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct InstanceRecord {
    pub label: String,
    pub values: BTreeMap<String, f64>,
    pub violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub property: String,
    pub instances: usize,
    pub max_violation: f64,
    pub slack: f64,
    pub pass: bool,
    pub records: Vec<InstanceRecord>,
}

impl PropertyReport {
    pub fn new(property: &str, slack: f64) -> Self {
        Self { property: property.to_string(), instances: 0, max_violation: 0.0, slack, pass: true, records: Vec::new() }
    }

    pub fn record(&mut self, label: impl Into<String>, values: &[(&str, f64)], violation: f64) {
        let values = values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        // NaN counts as failure
        let v = if violation.is_nan() { f64::INFINITY } else { violation.max(0.0) };
        self.records.push(InstanceRecord { label: label.into(), values, violation: v });
        self.instances = self.records.len();
        self.max_violation = self.max_violation.max(v);
        self.pass = self.max_violation <= self.slack;
    }

    /// Appends the records of `other`; the slack of `self` applies.
    pub fn merge(&mut self, other: PropertyReport) {
        for r in other.records {
            let values: Vec<(String, f64)> = r.values.into_iter().collect();
            let values: Vec<(&str, f64)> = values.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            self.record(r.label, &values, r.violation);
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A labelled body of the seeded corpus.
#[derive(Debug, Clone)]
pub struct CorpusBody {
    pub label: String,
    pub body: ConvexBody,
}

/// Star-shaped random polygon about the origin with `5..=10` vertices,
/// rounded by a random radius.
pub fn random_rounded_polygon(rng: &mut impl Rng) -> Result<ConvexBody> {
    let k = rng.random_range(5..=10);
    let verts: Vec<DVector<f64>> = (0..k)
        .map(|i| {
            let a = TAU * (i as f64 + rng.random_range(0.0..0.7)) / k as f64;
            let r = rng.random_range(0.6..1.2);
            DVector::from_vec(vec![r * a.cos(), r * a.sin()])
        })
        .collect();
    let eps = rng.random_range(0.05..0.2);
    ConvexBody::polytope(verts)?.rounded(eps)
}

/// Ellipse `{ <S z, z> / 2 < 1 }` with random semi-axes in `[0.5, 1.5]` and orientation.
pub fn random_ellipse(rng: &mut impl Rng) -> Result<ConvexBody> {
    let (a, b) = (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5));
    let phi = rng.random_range(0.0..TAU);
    let (c, s) = (phi.cos(), phi.sin());
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 / (a * a), 2.0 / (b * b)]));
    ConvexBody::ellipsoid(&rot * d * rot.transpose())
}

/// `count` planar bodies: rounded polygons and ellipses in alternation.
pub fn corpus_2d(seed: u64, count: usize) -> Result<Vec<CorpusBody>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i % 3 == 2 {
                Ok(CorpusBody { label: format!("ellipse_{i}"), body: random_ellipse(&mut rng)? })
            } else {
                Ok(CorpusBody { label: format!("rounded_polygon_{i}"), body: random_rounded_polygon(&mut rng)? })
            }
        })
        .collect()
}

/// `count` rounded polygons only.
pub fn polygon_corpus(seed: u64, count: usize) -> Result<Vec<CorpusBody>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| Ok(CorpusBody { label: format!("rounded_polygon_{i}"), body: random_rounded_polygon(&mut rng)? }))
        .collect()
}

/// `count` bodies in R^4: products of two planar corpus bodies in symplectic planes.
pub fn corpus_4d(seed: u64, count: usize) -> Result<Vec<CorpusBody>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let a = random_ellipse(&mut rng)?;
            let b = if i % 2 == 0 { random_rounded_polygon(&mut rng)? } else { random_ellipse(&mut rng)? };
            Ok(CorpusBody { label: format!("product_{i}"), body: ConvexBody::planar_product(vec![a, b])? })
        })
        .collect()
}

/// Seeded 2D pairs for the Brunn-Minkowski suite.
pub fn corpus_pairs(seed: u64, count: usize) -> Result<Vec<(CorpusBody, CorpusBody)>> {
    let bodies = corpus_2d(seed, 2 * count)?;
    let mut it = bodies.into_iter();
    let mut out = Vec::with_capacity(count);
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        out.push((a, b));
    }
    Ok(out)
}

fn cap(psi: &SymplecticMap, body: &ConvexBody, opts: &SolverOptions) -> Result<f64> {
    Ok(minimize_capacity(psi, body, opts)?.value)
}

fn rel_excess(lhs: f64, rhs: f64) -> f64 {
    ((lhs - rhs) / rhs.abs().max(1e-300)).max(0.0)
}

/// Conformality `c(2D) = 4 c(D)`, monotonicity `c(D) <= c(D + eps B)` and the
/// two-capacity envelope `c(D) <= (2R/r)^2 c(B(r))` on every corpus body.
pub fn check_axioms(corpus: &[CorpusBody], psi: &SymplecticMap, opts: &SolverOptions, slack: f64) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new("axioms", slack);
    let t = t_psi(psi)?;
    for item in corpus {
        let z = find_fixed_interior_point(psi, &item.body)?;
        let r = item.body.inradius_about(&z);
        let big_r = item.body.circumradius_about(&z);
        let c = cap(psi, &item.body, opts)?;
        let c2 = cap(psi, &item.body.clone().translated(-&z)?.scaled(2.0)?, opts)?;
        let grown = cap(psi, &item.body.clone().rounded(0.1 * r)?, opts)?;
        let conformal = (c2 - 4.0 * c).abs() / (4.0 * c);
        let monotone = rel_excess(c, grown);
        let envelope = rel_excess(c, (2.0 * big_r / r).powi(2) * r * r * t / 2.0);
        rep.record(
            format!("{}/conformality", item.label),
            &[("c", c), ("c_scaled_2", c2)],
            conformal,
        );
        rep.record(format!("{}/monotonicity", item.label), &[("c", c), ("c_rounded", grown)], monotone);
        rep.record(
            format!("{}/two_capacity_envelope", item.label),
            &[("c", c), ("r", r), ("R", big_r), ("t_psi", t)],
            envelope,
        );
    }
    Ok(rep)
}

/// `c(D +_p K)^{p/2} >= c(D)^{p/2} + c(K)^{p/2}` on each pair, and equality
/// for `K = D`.
pub fn check_brunn_minkowski(
    pairs: &[(CorpusBody, CorpusBody)],
    psi: &SymplecticMap,
    p: f64,
    opts: &SolverOptions,
    slack: f64,
) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new(&format!("brunn_minkowski_p{p}"), slack);
    for (d, k) in pairs {
        let cd = cap(psi, &d.body, opts)?;
        let ck = cap(psi, &k.body, opts)?;
        let sum = ConvexBody::p_sum(d.body.clone(), k.body.clone(), p)?;
        let cs = cap(psi, &sum, opts)?;
        bm_record(&mut rep, &format!("{}+{}", d.label, k.label), p, cd, ck, cs);
    }
    Ok(rep)
}

/// Equality instances `D +_p D = 2^{1/p} D`; the violation is the two-sided
/// relative deviation from equality.
pub fn check_brunn_minkowski_equality(
    bodies: &[CorpusBody],
    psi: &SymplecticMap,
    p: f64,
    opts: &SolverOptions,
    slack: f64,
) -> Result<PropertyReport> {
    let mut rep = PropertyReport::new(&format!("brunn_minkowski_equality_p{p}"), slack);
    for d in bodies {
        let cd = cap(psi, &d.body, opts)?;
        let sum = ConvexBody::p_sum(d.body.clone(), d.body.clone(), p)?;
        let cs = cap(psi, &sum, opts)?;
        let lhs = cs.powf(p / 2.0);
        let rhs = 2.0 * cd.powf(p / 2.0);
        rep.record(format!("{}+{}", d.label, d.label), &[("c_d", cd), ("c_sum", cs), ("lhs", lhs), ("rhs", rhs)], (lhs - rhs).abs() / rhs);
    }
    Ok(rep)
}

/// Records one Brunn-Minkowski instance from precomputed capacities.
pub fn bm_record(rep: &mut PropertyReport, label: &str, p: f64, cd: f64, ck: f64, cs: f64) {
    let lhs = cs.powf(p / 2.0);
    let rhs = cd.powf(p / 2.0) + ck.powf(p / 2.0);
    rep.record(label, &[("c_d", cd), ("c_k", ck), ("c_sum", cs), ("lhs", lhs), ("rhs", rhs)], rel_excess(rhs, lhs));
}

/// `r^2 t / 2 <= c(D) <= R^2 t / 2` for balls about the fixed point `p_fix`.
/// `value` may carry an already computed capacity.
pub fn check_croke_weinstein(
    label: &str,
    body: &ConvexBody,
    psi: &SymplecticMap,
    p_fix: &DVector<f64>,
    value: Option<f64>,
    opts: &SolverOptions,
    slack: f64,
) -> Result<PropertyReport> {
    if (psi.apply(p_fix) - p_fix).norm() > 1e-9 * (1.0 + p_fix.norm()) {
        return Err(Error::AssumptionViolated("p_fix is not fixed by Psi".into()));
    }
    let r = body.inradius_about(p_fix);
    if !(r > 0.0) {
        return Err(Error::AssumptionViolated("p_fix is not an interior point".into()));
    }
    let big_r = body.circumradius_about(p_fix);
    let t = t_psi(psi)?;
    let c = match value {
        Some(v) => v,
        None => cap(psi, body, opts)?,
    };
    let (lo, hi) = (r * r * t / 2.0, big_r * big_r * t / 2.0);
    let mut rep = PropertyReport::new("croke_weinstein", slack);
    rep.record(label, &[("c", c), ("lower", lo), ("upper", hi), ("r", r), ("R", big_r)], rel_excess(lo, c).max(rel_excess(c, hi)));
    Ok(rep)
}

/// Compares the central difference of `C(e) = c({ <S0 z, z> / 2 < e })` at
/// `e = 1` with the period `T_x = 2 int dt / <grad H, x>` of the carrier.
pub fn check_neduv(label: &str, s0: &DMatrix<f64>, psi: &SymplecticMap, h: f64, slack: f64) -> Result<PropertyReport> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::InvalidInput(format!("step must lie in (0, 1), got {h}")));
    }
    let c_at = |e: f64| capacity_ellipsoid(psi, &(s0 / e)).map(|r| r.value);
    let fd = (c_at(1.0 + h)? - c_at(1.0 - h)?) / (2.0 * h);
    let carrier = ellipsoid_carrier(psi, s0, 4096)?;
    let period = neduv_period(&carrier, |x| s0 * x)?;
    let mut rep = PropertyReport::new("neduv", slack);
    rep.record(
        label,
        &[("fd_derivative", fd), ("neduv_period", period), ("capacity", c_at(1.0)?)],
        (fd - period).abs() / period.abs().max(1e-300),
    );
    Ok(rep)
}

/// `c(D) <= c(D + eps B) <= (1 + eps / r)^2 c(D)` with `r` the inradius about
/// the fixed point.
pub fn check_continuity(
    label: &str,
    body: &ConvexBody,
    psi: &SymplecticMap,
    eps: f64,
    opts: &SolverOptions,
    slack: f64,
) -> Result<PropertyReport> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("perturbation must be nonnegative, got {eps}")));
    }
    let z = find_fixed_interior_point(psi, body)?;
    let r = body.inradius_about(&z);
    let c = cap(psi, body, opts)?;
    let co = cap(psi, &body.clone().rounded(eps)?, opts)?;
    let hi = (1.0 + eps / r).powi(2) * c;
    let mut rep = PropertyReport::new("continuity", slack);
    rep.record(
        label,
        &[("c", c), ("c_rounded", co), ("eps", eps), ("r", r), ("envelope_upper", hi)],
        rel_excess(c, co).max(rel_excess(co, hi)),
    );
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn corpus_is_seeded() {
        let a = corpus_2d(7, 6).unwrap();
        let b = corpus_2d(7, 6).unwrap();
        let w = DVector::from_vec(vec![0.3, -0.8]);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.body.support(&w).unwrap(), y.body.support(&w).unwrap());
            assert!(x.body.origin_is_interior());
        }
    }

    #[test]
    fn report_pass_flag() {
        let mut r = PropertyReport::new("x", 0.01);
        r.record("a", &[], 0.005);
        assert!(r.pass);
        r.record("b", &[], f64::NAN);
        assert!(!r.pass && r.instances == 2);
    }

    #[test]
    fn neduv_disc_and_rotation() {
        let s0 = DMatrix::identity(2, 2) * 2.0;
        let rep = check_neduv("disc", &s0, &SymplecticMap::identity(1), 1e-3, 1e-6).unwrap();
        assert!(rep.pass, "{}", rep.to_json());
        assert!((rep.records[0].values["neduv_period"] - PI).abs() < 1e-6);
        let rep = check_neduv("disc_rot", &s0, &SymplecticMap::rotation(1, 1.1), 1e-3, 1e-6).unwrap();
        assert!((rep.records[0].values["fd_derivative"] - 0.55).abs() < 1e-6);
    }

    #[test]
    fn croke_weinstein_ellipse() {
        let e = ConvexBody::ellipsoid_axes(&[1.0, 2.0]).unwrap();
        let z = DVector::zeros(2);
        let opts = SolverOptions::default();
        let rep = check_croke_weinstein("ellipse", &e, &SymplecticMap::identity(1), &z, Some(2.0 * PI), &opts, 1e-9).unwrap();
        assert!(rep.pass);
        let v = &rep.records[0].values;
        assert!((v["lower"] - PI).abs() < 1e-6 && (v["upper"] - 4.0 * PI).abs() < 1e-6);
    }
}
