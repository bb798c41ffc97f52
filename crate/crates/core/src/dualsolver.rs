//! Clarke dual principle on a truncated eigenbasis of `-J d/dt`.
//!
//! A curve is `x(t) = sum_k c_k e_k(t)` with `e_k(1) = Psi e_k(0)`. The
//! optimizer works with `y_k = lambda_k c_k`, the coefficients of
//! `v = -J x'`, and minimises the 0-homogeneous quotient
//! `Q(y) = 2^{-p} int_0^1 h_D(v)^p / A^{p/2}` with `A = (1/2) sum y_k^2 / lambda_k`.
//! The capacity is `(min Q)^{2/p}`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bodies::ConvexBody;
use crate::closedform::{CapacityResult, Method};
use crate::error::{Error, Result};
use crate::spectrum::{default_lambda_max, eigenbasis, EigenBasis};
use crate::symplin::{fixed_space, FixedSpace, SymplecticMap, KERNEL_REL_TOL};

pub const DEFAULT_MODES: usize = 32;
pub const DEFAULT_RESTARTS: usize = 16;
pub const QUAD_PER_MODE: usize = 8;
pub const DEFAULT_ROUND_FRACTION: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 2000;
pub const DEFAULT_CARRIER_TOL: f64 = 1e-3;
pub const DEFAULT_GRAD_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub p: f64,
    /// Lattice periods per zero family; `lambda_max = 2 pi (modes + 1)`.
    pub modes: usize,
    /// Quadrature intervals; `None` means `8 x modes`.
    pub quad: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    /// Smallest rounding radius for nonsmooth bodies; `None` means `1e-3 x inradius`.
    pub round_eps: Option<f64>,
    /// Solve nonsmooth bodies through the rounding ladder.
    pub rounding: bool,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub carrier_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            p: 2.0,
            modes: DEFAULT_MODES,
            quad: None,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            round_eps: None,
            rounding: true,
            max_iter: DEFAULT_MAX_ITER,
            grad_tol: DEFAULT_GRAD_TOL,
            carrier_tol: DEFAULT_CARRIER_TOL,
        }
    }
}

/// A curve in the span of the eigenbasis.
#[derive(Debug, Clone)]
pub struct DualCurve {
    pub basis: Arc<EigenBasis>,
    pub coeffs: DVector<f64>,
    pub quad: usize,
}

impl DualCurve {
    pub fn new(basis: Arc<EigenBasis>, coeffs: DVector<f64>, quad: usize) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: coeffs.len() });
        }
        Ok(Self { basis, coeffs, quad: quad.max(1) })
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        self.basis
            .modes
            .iter()
            .zip(self.coeffs.iter())
            .fold(DVector::zeros(2 * self.basis.n), |acc, (m, c)| acc + m.eval(t) * *c)
    }

    /// `-J x'(t) = sum_k lambda_k c_k e_k(t)`.
    pub fn dual_velocity(&self, t: f64) -> DVector<f64> {
        self.basis
            .modes
            .iter()
            .zip(self.coeffs.iter())
            .fold(DVector::zeros(2 * self.basis.n), |acc, (m, c)| acc + m.eval(t) * (*c * m.lambda))
    }
}

/// `A(x) = (1/2) sum_k lambda_k c_k^2`.
pub fn action(x: &DualCurve) -> f64 {
    0.5 * x.basis.modes.iter().zip(x.coeffs.iter()).map(|(m, c)| m.lambda * c * c).sum::<f64>()
}

/// `2^{-p} int_0^1 h_D(-J x'(t))^p dt` by the trapezoid rule on `x.quad` intervals.
pub fn dual_functional(x: &DualCurve, body: &ConvexBody, p: f64) -> Result<f64> {
    if body.dim() != 2 * x.basis.n {
        return Err(Error::DimensionMismatch { expected: 2 * x.basis.n, got: body.dim() });
    }
    let m = x.quad;
    let mut acc = 0.0;
    for j in 0..=m {
        let w = if j == 0 || j == m { 0.5 } else { 1.0 } / m as f64;
        let h = body.support(&x.dual_velocity(j as f64 / m as f64))?;
        acc += w * h.max(0.0).powf(p);
    }
    Ok(acc / 2f64.powf(p))
}

/// Discretised quotient for one `(Psi, D, p)` with eigenfunction tables.
#[derive(Debug, Clone)]
pub struct DualProblem {
    psi: SymplecticMap,
    basis: Arc<EigenBasis>,
    body: ConvexBody,
    p: f64,
    quad: usize,
    /// Row `j * 2n + i`, column `k`: component `i` of `e_k(j / quad)`.
    table: Arc<DMatrix<f64>>,
    weights: Vec<f64>,
    lambdas: DVector<f64>,
}

impl DualProblem {
    /// `body` must contain the origin in its interior.
    pub fn new(psi: &SymplecticMap, body: ConvexBody, p: f64, basis: Arc<EigenBasis>, quad: usize) -> Result<Self> {
        if body.dim() != psi.dim() {
            return Err(Error::DimensionMismatch { expected: psi.dim(), got: body.dim() });
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be at least 1, got {p}")));
        }
        if basis.is_empty() {
            return Err(Error::InvalidInput("empty eigenbasis".into()));
        }
        let quad = quad.max(2);
        let d = psi.dim();
        let n = psi.n();
        let k = basis.len();
        let mut table = DMatrix::zeros((quad + 1) * d, k);
        for (col, mode) in basis.modes.iter().enumerate() {
            for j in 0..=quad {
                let (s, c) = (mode.lambda * j as f64 / quad as f64).sin_cos();
                for i in 0..n {
                    let (xq, xp) = (mode.seed[i], mode.seed[n + i]);
                    // exp(sJ) (q, p) = (cos q - sin p, sin q + cos p)
                    table[(j * d + i, col)] = c * xq - s * xp;
                    table[(j * d + n + i, col)] = s * xq + c * xp;
                }
            }
        }
        let weights = (0..=quad).map(|j| if j == 0 || j == quad { 0.5 } else { 1.0 } / quad as f64).collect();
        let lambdas = DVector::from_vec(basis.lambdas());
        Ok(Self { psi: psi.clone(), basis, body, p, quad, table: Arc::new(table), weights, lambdas })
    }

    /// Same tables, different body.
    pub fn with_body(&self, body: ConvexBody) -> Result<Self> {
        if body.dim() != self.body.dim() {
            return Err(Error::DimensionMismatch { expected: self.body.dim(), got: body.dim() });
        }
        Ok(Self { body, ..self.clone() })
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn body(&self) -> &ConvexBody {
        &self.body
    }

    pub fn quad(&self) -> usize {
        self.quad
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// Curve with `-J x' = sum y_k e_k`.
    pub fn curve(&self, y: &DVector<f64>) -> DualCurve {
        DualCurve { basis: self.basis.clone(), coeffs: y.component_div(&self.lambdas), quad: self.quad }
    }

    pub fn action(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.iter().zip(self.lambdas.iter()).map(|(a, l)| a * a / l).sum::<f64>()
    }

    pub fn dual_functional(&self, y: &DVector<f64>) -> f64 {
        let v = &*self.table * y;
        let d = self.body.dim();
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let h = self.body.support_unchecked(&v.as_slice()[j * d..(j + 1) * d]);
            acc += w * h.max(0.0).powf(self.p);
        }
        acc / 2f64.powf(self.p)
    }

    /// `Q(y)`; `+inf` when the action is not positive.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let a = self.action(y);
        if !(a > 0.0) {
            return f64::INFINITY;
        }
        self.dual_functional(y) / a.powf(self.p / 2.0)
    }

    /// `Q(y)` and its gradient. At kinks of `h_D` the subgradient of the
    /// support-point oracle is used.
    pub fn value_grad(&self, y: &DVector<f64>) -> (f64, DVector<f64>) {
        let a = self.action(y);
        if !(a > 0.0) {
            return (f64::INFINITY, DVector::zeros(y.len()));
        }
        let p = self.p;
        let d = self.body.dim();
        let v = &*self.table * y;
        let mut g = DVector::zeros(v.len());
        let mut f = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            let range = j * d..(j + 1) * d;
            let h = self.body.support_point_into(&v.as_slice()[range.clone()], &mut g.as_mut_slice()[range.clone()]);
            let h = h.max(0.0);
            let hp1 = if p == 2.0 { h } else { h.powf(p - 1.0) };
            f += w * hp1 * h;
            let scale = w * p * hp1;
            g.as_mut_slice()[range].iter_mut().for_each(|x| *x *= scale);
        }
        let norm = 2f64.powf(p);
        f /= norm;
        let grad_f = self.table.tr_mul(&g) / norm;
        let ap = a.powf(p / 2.0);
        let q = f / ap;
        let grad_a = y.component_div(&self.lambdas);
        let grad = grad_f / ap - grad_a * (0.5 * p * q / a);
        (q, grad)
    }
}

/// Outcome of one quasi-Newton run.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

const STALL_WINDOW: usize = 30;
const STALL_REL: f64 = 1e-8;

fn bfgs(problem: &DualProblem, y0: DVector<f64>, max_iter: usize, grad_tol: f64) -> (DVector<f64>, RunStats) {
    let k = y0.len();
    let mut y = y0.normalize();
    let (mut q, mut g) = problem.value_grad(&y);
    let mut h = DMatrix::<f64>::identity(k, k);
    let mut h_identity = true;
    let mut history: Vec<f64> = Vec::with_capacity(max_iter.min(4096));
    let mut converged = false;
    let mut iter = 0usize;
    while iter < max_iter {
        iter += 1;
        let gn = g.norm();
        if gn <= grad_tol * q.abs() {
            converged = true;
            break;
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h.fill_with_identity();
            h_identity = true;
            d = -g.clone();
            slope = -gn * gn;
        }
        if h_identity {
            let scale = (0.1 / d.norm()).min(1.0);
            d *= scale;
            slope *= scale;
        }
        let Some((z, qz, gz)) = weak_wolfe(problem, &y, q, &d, slope) else {
            if h_identity {
                converged = true;
                break;
            }
            h.fill_with_identity();
            h_identity = true;
            continue;
        };
        let s = &z - &y;
        let dg = &gz - &g;
        let sy = s.dot(&dg);
        if sy > 1e-12 * s.norm() * dg.norm() {
            if h_identity {
                h *= sy / dg.norm_squared();
                h_identity = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &dg;
            let yhy = dg.dot(&hy);
            h.ger(-rho, &s, &hy, 1.0);
            h.ger(-rho, &hy, &s, 1.0);
            h.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }
        // Q is 0-homogeneous: rescale the point to the unit sphere and the
        // gradient by the inverse factor.
        let zn = z.norm();
        y = z / zn;
        g = gz * zn;
        q = qz;
        history.push(q);
        // At a kink the gradient never vanishes; stop once progress over a
        // window becomes negligible.
        if history.len() > STALL_WINDOW {
            let old = history[history.len() - 1 - STALL_WINDOW];
            if old - q <= STALL_REL * q.abs() {
                converged = true;
                break;
            }
        }
    }
    let grad_norm = g.norm();
    (y, RunStats { value: q, iterations: iter, grad_norm, converged })
}

/// Bracketing line search for the weak Wolfe conditions, which keeps BFGS
/// effective on objectives with kinks.
fn weak_wolfe(
    problem: &DualProblem,
    y: &DVector<f64>,
    q: f64,
    d: &DVector<f64>,
    slope: f64,
) -> Option<(DVector<f64>, f64, DVector<f64>)> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut alpha = 1.0;
    let mut best: Option<(DVector<f64>, f64, DVector<f64>)> = None;
    for _ in 0..60 {
        let z = y + d * alpha;
        let (qz, gz) = problem.value_grad(&z);
        if !(qz <= q + C1 * alpha * slope) {
            hi = alpha;
        } else {
            let curvature = gz.dot(d);
            let done = curvature >= C2 * slope;
            best = Some((z, qz, gz));
            if done {
                return best;
            }
            lo = alpha;
        }
        alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
        if hi.is_finite() && hi - lo < 1e-16 * hi {
            break;
        }
    }
    best
}

/// Initial coefficients: restart 0 follows the lowest positive eigenvalue,
/// the others are random with amplitude decaying like `1 / |lambda|`. The
/// negative-eigenvalue part is damped until the action is positive.
fn initial_point(problem: &DualProblem, restart: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let lam = problem.lambdas();
    let first = problem.basis.first_positive();
    let lam1 = lam.get(first).copied().unwrap_or(1.0);
    let mut y = DVector::from_fn(lam.len(), |k, _| {
        let noise: f64 = StandardNormal.sample(rng);
        if restart == 0 {
            if (lam[k] - lam1).abs() < 1e-9 {
                1.0 + 1e-3 * noise
            } else {
                1e-3 * noise * lam1 / lam[k].abs()
            }
        } else {
            noise * lam1 / lam[k].abs()
        }
    });
    for _ in 0..200 {
        if problem.action(&y) > 0.0 {
            break;
        }
        for k in 0..lam.len() {
            if lam[k] < 0.0 {
                y[k] *= 0.5;
            }
        }
    }
    y
}

struct Multistart {
    y: DVector<f64>,
    best: usize,
    runs: Vec<RunStats>,
}

fn multistart(problem: &DualProblem, opts: &SolverOptions, warm: Option<&DVector<f64>>) -> Result<Multistart> {
    if !problem.lambdas.iter().any(|&l| l > 0.0) {
        return Err(Error::InvalidInput("eigenbasis has no positive eigenvalue".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<DVector<f64>> = match warm {
        Some(y) => vec![y.clone()],
        None => (0..opts.restarts.max(1)).map(|r| initial_point(problem, r, &mut rng)).collect(),
    };
    let mut best: Option<(usize, DVector<f64>)> = None;
    let mut runs = Vec::with_capacity(starts.len());
    for (i, y0) in starts.into_iter().enumerate() {
        let (y, stats) = bfgs(problem, y0, opts.max_iter, opts.grad_tol);
        let better = match &best {
            None => true,
            Some((b, _)) => stats.value < runs.iter().map(|r: &RunStats| r.value).nth(*b).unwrap(),
        };
        runs.push(stats);
        if better && runs[i].value.is_finite() {
            best = Some((i, y));
        }
    }
    let (best, y) = best.ok_or(Error::NonConvergence { iterations: opts.max_iter, grad_norm: f64::NAN })?;
    if !runs.iter().any(|r| r.converged) {
        return Err(Error::NonConvergence { iterations: runs[best].iterations, grad_norm: runs[best].grad_norm });
    }
    Ok(Multistart { y, best, runs })
}

/// A point of `Fix(Psi)` inside the body with the largest inscribed radius
/// among a few natural candidates.
pub fn find_fixed_interior_point(psi: &SymplecticMap, body: &ConvexBody) -> Result<DVector<f64>> {
    if body.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), got: body.dim() });
    }
    let fs = fixed_space(psi, KERNEL_REL_TOL);
    let c = body.interior_point().clone();
    let mut candidates = vec![DVector::zeros(psi.dim())];
    if fs.rank_fix > 0 {
        candidates.push(fs.project(&c));
    }
    let mut best: Option<(f64, DVector<f64>)> = None;
    for z in candidates {
        if (psi.apply(&z) - &z).norm() > 1e-9 * (1.0 + z.norm()) {
            continue;
        }
        let r = body.inradius_about(&z);
        if best.as_ref().is_none_or(|(br, _)| r > *br) {
            best = Some((r, z));
        }
    }
    match best {
        Some((r, z)) if r > 1e-9 * (1.0 + z.norm()) => Ok(z),
        _ => Err(Error::NoFixedInteriorPoint),
    }
}

/// Numerical capacity `c^Psi(D)` by the dual principle.
///
/// Bodies without C^1 boundary are solved on `D + eps B` for
/// `eps in {4, 2, 1} x eps_0`; the reported value is the least-squares linear
/// extrapolation to `eps = 0`, clipped to the bracket
/// `[c(D + eps_0 B) / (1 + eps_0 / r)^2, c(D + eps_0 B)]`.
pub fn minimize_capacity(psi: &SymplecticMap, body: &ConvexBody, opts: &SolverOptions) -> Result<CapacityResult> {
    let z = find_fixed_interior_point(psi, body)?;
    let centered = body.clone().translated(-&z)?;
    let basis = Arc::new(eigenbasis(psi, default_lambda_max(opts.modes))?);
    let quad = opts.quad.unwrap_or(QUAD_PER_MODE * opts.modes.max(1));
    let base = DualProblem::new(psi, centered.clone(), opts.p, basis.clone(), quad)?;

    let mut result;
    let problem;
    let y;
    if body.is_smooth() || !opts.rounding {
        let ms = multistart(&base, opts, None)?;
        let value = ms.runs[ms.best].value.powf(2.0 / opts.p);
        result = CapacityResult::new(value, Method::DualSolver);
        record_runs(&mut result, &ms.runs, ms.best, opts.p);
        y = ms.y;
        problem = base;
    } else {
        let r = centered.inradius_about(&DVector::zeros(psi.dim()));
        let eps0 = opts.round_eps.unwrap_or(DEFAULT_ROUND_FRACTION * r);
        if !(eps0 > 0.0) {
            return Err(Error::InvalidInput(format!("rounding radius must be positive, got {eps0}")));
        }
        let levels = [4.0 * eps0, 2.0 * eps0, eps0];
        let mut values = Vec::new();
        let mut warm: Option<DVector<f64>> = None;
        let mut last = None;
        let mut first_runs = None;
        for &eps in &levels {
            let prob = base.with_body(centered.clone().rounded(eps)?)?;
            let ms = multistart(&prob, opts, warm.as_ref())?;
            values.push(ms.runs[ms.best].value.powf(2.0 / opts.p));
            if first_runs.is_none() {
                first_runs = Some((ms.runs.clone(), ms.best));
            }
            warm = Some(ms.y.clone());
            last = Some((prob, ms));
        }
        let (prob, ms) = last.unwrap();
        let extrapolated = linear_intercept(&levels, &values);
        let upper = values[2];
        let lower = upper / (1.0 + eps0 / r).powi(2);
        result = CapacityResult::new(extrapolated.clamp(lower, upper), Method::DualSolver)
            .with("round_eps0", eps0)
            .with("round_inradius", r)
            .with("bracket_lower", lower)
            .with("bracket_upper", upper)
            .with("richardson_raw", extrapolated);
        for (eps_k, v) in ["rounded_value_4eps0", "rounded_value_2eps0", "rounded_value_eps0"].iter().zip(&values) {
            result = result.with(eps_k, *v);
        }
        let (runs, best) = first_runs.unwrap();
        record_runs(&mut result, &runs, best, opts.p);
        result = result.with("final_iterations", ms.runs[ms.best].iterations as f64);
        y = ms.y;
        problem = prob;
    }
    result = result
        .with("modes", problem.len() as f64)
        .with("quad", problem.quad() as f64)
        .with("lambda_max", basis.lambda_max)
        .with("restarts", opts.restarts as f64)
        .with("reciprocal_defect", reciprocal_defect(&problem, &y));
    let mu = problem.value(&y).powf(2.0 / opts.p);
    let carrier = build_carrier(&problem, &y, mu, &z)?;
    result = result
        .with("boundary_residual", carrier.boundary_residual)
        .with("closure_residual", carrier.closure_residual)
        .with("carrier_action", carrier.action)
        .with("multiplier_residual", carrier.multiplier_residual)
        .with("carrier_ok", if carrier.boundary_residual <= opts.carrier_tol { 1.0 } else { 0.0 });
    result.carrier = Some(carrier);
    Ok(result)
}

fn record_runs(result: &mut CapacityResult, runs: &[RunStats], best: usize, p: f64) {
    for (i, r) in runs.iter().enumerate() {
        result.diagnostics.insert(format!("restart_{i:02}_value"), r.value.powf(2.0 / p));
    }
    result.diagnostics.insert("best_restart".into(), best as f64);
    result.diagnostics.insert("iterations".into(), runs[best].iterations as f64);
    result.diagnostics.insert("grad_norm".into(), runs[best].grad_norm);
    result.diagnostics.insert("converged_runs".into(), runs.iter().filter(|r| r.converged).count() as f64);
}

/// Intercept of the least-squares line through `(x_i, y_i)`.
fn linear_intercept(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return my;
    }
    my - sxy / sxx * mx
}

/// `|A(x) * min I^{2/p} - 1|` for `x` rescaled to `I(x) = 1`: the reciprocal
/// form `max { A : I = 1 } = (min { I : A = 1 })^{-2/p}` evaluated at the solution.
pub fn reciprocal_defect(problem: &DualProblem, y: &DVector<f64>) -> f64 {
    let i = problem.dual_functional(y);
    if !(i > 0.0) {
        return f64::NAN;
    }
    let scaled = y / i.powf(1.0 / problem.p);
    let a = problem.action(&scaled);
    (a * problem.value(y).powf(2.0 / problem.p) - 1.0).abs()
}

/// A generalized `Psi`-characteristic on the boundary, sampled uniformly in
/// time on `[0, mu]`.
#[derive(Debug, Clone)]
pub struct Carrier {
    pub samples: Vec<(f64, DVector<f64>)>,
    pub action: f64,
    pub period_param: f64,
    pub a0: DVector<f64>,
    /// `max |j_D(x(t)) - 1|` over a subsample of about 256 points.
    pub boundary_residual: f64,
    pub closure_residual: f64,
    /// `max_t |w(t) - mu u(t) - a0|`, relative to `max |w|`.
    pub multiplier_residual: f64,
    /// Fixed point the body was re-centered at; samples include it.
    pub center: DVector<f64>,
}

impl Carrier {
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.boundary_residual > tol {
            return Err(Error::CarrierResidualTooLarge { residual: self.boundary_residual, tol });
        }
        if self.closure_residual > tol * (1.0 + self.center.norm()) {
            return Err(Error::CarrierResidualTooLarge { residual: self.closure_residual, tol });
        }
        Ok(())
    }

    pub fn points(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.samples.iter().map(|(_, x)| x)
    }
}

/// `(1/2) sum <-J (x_{i+1} - x_i), (x_i + x_{i+1}) / 2>`: action of the
/// polygon through the samples.
pub fn polygon_action(points: &[&DVector<f64>]) -> f64 {
    let mut acc = 0.0;
    for w in points.windows(2) {
        let n = w[0].len() / 2;
        let dx = w[1] - w[0];
        let mid = (w[0] + w[1]) * 0.5;
        // <-J dx, mid> with -J (q, p) = (p, -q)
        for i in 0..n {
            acc += dx[n + i] * mid[i] - dx[i] * mid[n + i];
        }
    }
    0.5 * acc
}

fn build_carrier(problem: &DualProblem, y: &DVector<f64>, mu: f64, center: &DVector<f64>) -> Result<Carrier> {
    let a = problem.action(y);
    if !(a > 0.0) || !(mu > 0.0) {
        return Err(Error::InvalidInput("carrier needs a curve with positive action".into()));
    }
    let yu = y / a.sqrt();
    let cu = yu.component_div(&problem.lambdas);
    let v = &*problem.table * &yu;
    let u = &*problem.table * &cu;
    let d = problem.body.dim();
    let m = problem.quad;
    let fs: FixedSpace = fixed_space(&problem.psi, KERNEL_REL_TOL);

    let mut w = DVector::zeros(v.len());
    for j in 0..=m {
        let range = j * d..(j + 1) * d;
        let h = problem.body.support_point_into(&v.as_slice()[range.clone()], &mut w.as_mut_slice()[range.clone()]);
        w.as_mut_slice()[range].iter_mut().for_each(|x| *x *= 0.5 * h);
    }
    let resid = &w - &u * mu;
    let mut avg = DVector::zeros(d);
    for (j, wt) in problem.weights.iter().enumerate() {
        avg += resid.rows(j * d, d) * *wt;
    }
    let a0 = fs.project(&avg);
    let wmax = (0..=m).map(|j| w.rows(j * d, d).norm()).fold(0.0, f64::max).max(1e-300);
    let multiplier_residual = (0..=m).map(|j| (resid.rows(j * d, d) - &a0).norm()).fold(0.0, f64::max) / wmax;

    let sm = mu.sqrt();
    let centered: Vec<DVector<f64>> = (0..=m).map(|j| u.rows(j * d, d) * sm + &a0 / sm).collect();
    let stride = ((m + 1) / 256).max(1);
    let mut boundary_residual: f64 = 0.0;
    for x in centered.iter().step_by(stride).chain(std::iter::once(&centered[m])) {
        boundary_residual = boundary_residual.max((problem.body.gauge(x)? - 1.0).abs());
    }
    let samples: Vec<(f64, DVector<f64>)> =
        centered.into_iter().enumerate().map(|(j, x)| (mu * j as f64 / m as f64, x + center)).collect();
    let first = &samples[0].1;
    let last = &samples[m].1;
    let closure_residual = (last - problem.psi.apply(first)).norm();
    let pts: Vec<&DVector<f64>> = samples.iter().map(|(_, x)| x).collect();
    let action = polygon_action(&pts);
    Ok(Carrier {
        samples,
        action,
        period_param: mu,
        a0,
        boundary_residual,
        closure_residual,
        multiplier_residual,
        center: center.clone(),
    })
}

/// Carrier of the minimiser `y` (any scaling) of `problem`, checked against `tol`.
pub fn extract_carrier(problem: &DualProblem, y: &DVector<f64>, center: &DVector<f64>, tol: f64) -> Result<Carrier> {
    let mu = problem.value(y).powf(2.0 / problem.p);
    let c = build_carrier(problem, y, mu, center)?;
    c.check(tol)?;
    Ok(c)
}

/// `T_x = 2 int_0^mu dt / <grad H(x(t)), x(t)>` over the carrier samples
/// (Simpson's rule when the sample count allows it).
pub fn neduv_period<G>(carrier: &Carrier, grad: G) -> Result<f64>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = carrier.samples.len();
    if n < 2 {
        return Err(Error::InvalidInput("carrier needs at least two samples".into()));
    }
    let mut f = Vec::with_capacity(n);
    for (_, x) in &carrier.samples {
        let den = grad(x).dot(x);
        if !(den > 1e-12) {
            return Err(Error::ZeroDenominator);
        }
        f.push(1.0 / den);
    }
    let h = carrier.samples[1].0 - carrier.samples[0].0;
    let intervals = n - 1;
    let integral = if intervals.is_multiple_of(2) {
        let mut s = f[0] + f[intervals];
        for (i, v) in f.iter().enumerate().take(intervals).skip(1) {
            s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
        }
        s * h / 3.0
    } else {
        (f.iter().sum::<f64>() - 0.5 * (f[0] + f[intervals])) * h
    };
    Ok(2.0 * integral)
}

/// Values at `N`, `2N`, `4N` lattice periods and the observed order
/// `log2(|c_N - c_2N| / |c_2N - c_4N|)`.
#[derive(Debug, Clone)]
pub struct ModeRefinement {
    pub modes: Vec<usize>,
    pub values: Vec<f64>,
    pub order: Option<f64>,
}

pub fn mode_refinement(psi: &SymplecticMap, body: &ConvexBody, opts: &SolverOptions) -> Result<ModeRefinement> {
    let modes = vec![opts.modes, 2 * opts.modes, 4 * opts.modes];
    let mut values = Vec::new();
    for &m in &modes {
        let o = SolverOptions { modes: m, quad: None, ..opts.clone() };
        values.push(minimize_capacity(psi, body, &o)?.value);
    }
    let d1 = (values[0] - values[1]).abs();
    let d2 = (values[1] - values[2]).abs();
    let order = (d1 > 0.0 && d2 > 0.0).then(|| (d1 / d2).log2());
    Ok(ModeRefinement { modes, values, order })
}
