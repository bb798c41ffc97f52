//! Convex bodies described by support-function oracles.
//!
//! A body is built from primitives (balls, ellipsoids, V-polytopes) and the
//! constructors product, p-sum, scaling, translation, rounding and invertible
//! linear image. Every body answers `h_K(w)`, a maximiser of `<x, w>`, and the
//! gauge `j_K` about the origin.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::spectrum::golden_min;

#[derive(Debug, Clone)]
pub struct ConvexBody {
    dim: usize,
    kind: BodyKind,
    interior: DVector<f64>,
}

#[derive(Debug, Clone)]
pub enum BodyKind {
    Ball { radius: f64, center: DVector<f64> },
    /// `{ z : <S z, z> / 2 < 1 }`.
    Ellipsoid { s: DMatrix<f64>, s_inv: DMatrix<f64> },
    Polytope(Polytope),
    Product(Box<ConvexBody>, Box<ConvexBody>),
    PSum { left: Box<ConvexBody>, right: Box<ConvexBody>, p: f64 },
    Scaled { body: Box<ConvexBody>, factor: f64 },
    Translated { body: Box<ConvexBody>, offset: DVector<f64> },
    Rounded { body: Box<ConvexBody>, eps: f64 },
    /// Image `M K` under an invertible matrix.
    Linear { body: Box<ConvexBody>, matrix: DMatrix<f64>, inverse: DMatrix<f64> },
}

/// Vertex list plus the facet inequalities `<a_i, x> <= b_i` when they could
/// be enumerated (dimension at most 4).
#[derive(Debug, Clone)]
pub struct Polytope {
    pub vertices: Vec<DVector<f64>>,
    pub facets: Option<Vec<(DVector<f64>, f64)>>,
}

/// Geometric statistics about a reference point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyStats {
    pub inradius: f64,
    pub circumradius: f64,
    pub width: f64,
    pub diameter: f64,
}

const MAX_FACET_DIM: usize = 4;

impl ConvexBody {
    pub fn ball(radius: f64, center: DVector<f64>) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { dim: center.len(), interior: center.clone(), kind: BodyKind::Ball { radius, center } })
    }

    /// Centered ball `B^dim(radius)`.
    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(1.0, DVector::zeros(dim)).unwrap()
    }

    pub fn centered_ball(dim: usize, radius: f64) -> Result<Self> {
        Self::ball(radius, DVector::zeros(dim))
    }

    pub fn ellipsoid(s: DMatrix<f64>) -> Result<Self> {
        let dim = s.nrows();
        if s.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: s.ncols() });
        }
        let asym = (&s - s.transpose()).amax();
        if asym > 1e-10 * s.amax().max(1.0) {
            return Err(Error::InvalidInput("ellipsoid matrix must be symmetric".into()));
        }
        if s.clone().cholesky().is_none() {
            return Err(Error::InvalidInput("ellipsoid matrix must be positive definite".into()));
        }
        let s_inv = s.clone().try_inverse().ok_or(Error::SingularMatrix)?;
        Ok(Self { dim, interior: DVector::zeros(dim), kind: BodyKind::Ellipsoid { s, s_inv } })
    }

    /// Axis-aligned ellipsoid with the given semi-axes (`S = diag(2 / a_i^2)`).
    pub fn ellipsoid_axes(semi_axes: &[f64]) -> Result<Self> {
        if semi_axes.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidInput("semi-axes must be positive".into()));
        }
        let d = DVector::from_iterator(semi_axes.len(), semi_axes.iter().map(|a| 2.0 / (a * a)));
        Self::ellipsoid(DMatrix::from_diagonal(&d))
    }

    pub fn polytope(vertices: Vec<DVector<f64>>) -> Result<Self> {
        let dim = vertices.first().map(|v| v.len()).ok_or_else(|| Error::InvalidInput("empty vertex list".into()))?;
        if let Some(v) = vertices.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
        }
        if vertices.len() <= dim {
            return Err(Error::InvalidInput(format!(
                "a full-dimensional polytope in R^{dim} needs more than {dim} vertices"
            )));
        }
        let centroid = vertices.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / vertices.len() as f64;
        let facets = (dim <= MAX_FACET_DIM).then(|| enumerate_facets(&vertices, &centroid));
        if let Some(f) = &facets {
            if f.len() <= dim {
                return Err(Error::InvalidInput("polytope is not full-dimensional".into()));
            }
        }
        Ok(Self { dim, interior: centroid, kind: BodyKind::Polytope(Polytope { vertices, facets }) })
    }

    /// `{ x : <a_i, x> <= b_i }` converted to a vertex list (dimension <= 4).
    pub fn from_halfspaces(normals: &[DVector<f64>], offsets: &[f64]) -> Result<Self> {
        let dim = normals.first().map(|a| a.len()).ok_or_else(|| Error::InvalidInput("no halfspaces".into()))?;
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch { expected: normals.len(), got: offsets.len() });
        }
        if dim > MAX_FACET_DIM {
            return Err(Error::InvalidInput(format!("halfspace input supported up to dimension {MAX_FACET_DIM}")));
        }
        let mut verts: Vec<DVector<f64>> = Vec::new();
        for subset in combinations(normals.len(), dim) {
            let a = DMatrix::from_fn(dim, dim, |r, c| normals[subset[r]][c]);
            let b = DVector::from_iterator(dim, subset.iter().map(|&i| offsets[i]));
            let Some(x) = a.lu().solve(&b) else { continue };
            let feasible = normals.iter().zip(offsets).all(|(a, &b)| a.dot(&x) <= b + 1e-9 * (1.0 + b.abs()));
            if feasible && !verts.iter().any(|v| (v - &x).norm() < 1e-9) {
                verts.push(x);
            }
        }
        Self::polytope(verts)
    }

    /// `[-a_1, a_1] x ... x [-a_d, a_d]`.
    pub fn cuboid(half_widths: &[f64]) -> Result<Self> {
        let d = half_widths.len();
        let verts = (0..1usize << d)
            .map(|mask| {
                DVector::from_iterator(d, (0..d).map(|i| if mask >> i & 1 == 1 { half_widths[i] } else { -half_widths[i] }))
            })
            .collect();
        Self::polytope(verts)
    }

    pub fn product(left: Self, right: Self) -> Self {
        let dim = left.dim + right.dim;
        let mut interior = DVector::zeros(dim);
        interior.rows_mut(0, left.dim).copy_from(&left.interior);
        interior.rows_mut(left.dim, right.dim).copy_from(&right.interior);
        Self { dim, interior, kind: BodyKind::Product(Box::new(left), Box::new(right)) }
    }

    /// `D +_p K` with support `(h_D^p + h_K^p)^{1/p}`. For `p > 1` both
    /// bodies must contain the origin in their interior.
    pub fn p_sum(left: Self, right: Self, p: f64) -> Result<Self> {
        if left.dim != right.dim {
            return Err(Error::DimensionMismatch { expected: left.dim, got: right.dim });
        }
        if !(p >= 1.0) {
            return Err(Error::InvalidInput(format!("p-sum needs p >= 1, got {p}")));
        }
        let interior = if p == 1.0 {
            &left.interior + &right.interior
        } else {
            if !left.origin_is_interior() || !right.origin_is_interior() {
                return Err(Error::OriginNotInterior);
            }
            DVector::zeros(left.dim)
        };
        Ok(Self { dim: left.dim, interior, kind: BodyKind::PSum { left: Box::new(left), right: Box::new(right), p } })
    }

    pub fn minkowski_sum(left: Self, right: Self) -> Result<Self> {
        Self::p_sum(left, right, 1.0)
    }

    pub fn scaled(self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::InvalidInput(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self { dim: self.dim, interior: &self.interior * factor, kind: BodyKind::Scaled { body: Box::new(self), factor } })
    }

    pub fn translated(self, offset: DVector<f64>) -> Result<Self> {
        if offset.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: offset.len() });
        }
        Ok(Self { dim: self.dim, interior: &self.interior + &offset, kind: BodyKind::Translated { body: Box::new(self), offset } })
    }

    /// `K + eps B`.
    pub fn rounded(self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidInput(format!("rounding radius must be nonnegative, got {eps}")));
        }
        Ok(Self { dim: self.dim, interior: self.interior.clone(), kind: BodyKind::Rounded { body: Box::new(self), eps } })
    }

    pub fn linear_image(self, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != self.dim || matrix.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: matrix.nrows() });
        }
        let inverse = matrix.clone().try_inverse().ok_or(Error::SingularMatrix)?;
        Ok(Self {
            dim: self.dim,
            interior: &matrix * &self.interior,
            kind: BodyKind::Linear { body: Box::new(self), matrix, inverse },
        })
    }

    /// Product of symplectic-plane factors `K_i ⊂ R^2_{(q_i, p_i)}`, laid out
    /// in global coordinates `(q_1..q_k, p_1..p_k)`.
    pub fn planar_product(factors: Vec<Self>) -> Result<Self> {
        if factors.is_empty() || factors.iter().any(|f| f.dim != 2) {
            return Err(Error::InvalidInput("planar product needs nonempty list of 2-dimensional factors".into()));
        }
        let k = factors.len();
        let mut it = factors.into_iter();
        let first = it.next().unwrap();
        let stacked = it.fold(first, Self::product);
        stacked.linear_image(crate::symplin::interleave_planes(k))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &BodyKind {
        &self.kind
    }

    /// Declared interior point.
    pub fn interior_point(&self) -> &DVector<f64> {
        &self.interior
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: len })
        }
    }

    /// `h_K(w) = sup { <x, w> : x in K }`.
    pub fn support(&self, w: &DVector<f64>) -> Result<f64> {
        self.check_dim(w.len())?;
        Ok(self.support_unchecked(w.as_slice()))
    }

    /// A point `x in K` with `<x, w> = h_K(w)`.
    pub fn support_argmax(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(w.len())?;
        let mut out = vec![0.0; self.dim];
        self.support_point_into(w.as_slice(), &mut out);
        Ok(DVector::from_vec(out))
    }

    pub(crate) fn support_unchecked(&self, w: &[f64]) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius, center } => radius * norm(w) + dot(center.as_slice(), w),
            BodyKind::Ellipsoid { s_inv, .. } => (2.0 * quad_form(s_inv, w)).max(0.0).sqrt(),
            BodyKind::Polytope(p) => p.vertices.iter().map(|v| dot(v.as_slice(), w)).fold(f64::NEG_INFINITY, f64::max),
            BodyKind::Product(a, b) => a.support_unchecked(&w[..a.dim]) + b.support_unchecked(&w[a.dim..]),
            BodyKind::PSum { left, right, p } => {
                let (hl, hr) = (left.support_unchecked(w), right.support_unchecked(w));
                if *p == 1.0 {
                    hl + hr
                } else {
                    (hl.max(0.0).powf(*p) + hr.max(0.0).powf(*p)).powf(1.0 / p)
                }
            }
            BodyKind::Scaled { body, factor } => factor * body.support_unchecked(w),
            BodyKind::Translated { body, offset } => body.support_unchecked(w) + dot(offset.as_slice(), w),
            BodyKind::Rounded { body, eps } => body.support_unchecked(w) + eps * norm(w),
            BodyKind::Linear { body, matrix, .. } => {
                let mtw = mul_transpose(matrix, w);
                body.support_unchecked(&mtw)
            }
        }
    }

    /// Writes a maximiser of `<x, w>` into `out`, returning `h_K(w)`.
    pub(crate) fn support_point_into(&self, w: &[f64], out: &mut [f64]) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius, center } => {
                let nw = norm(w);
                for i in 0..w.len() {
                    out[i] = center[i] + if nw > 0.0 { radius * w[i] / nw } else { 0.0 };
                }
                radius * nw + dot(center.as_slice(), w)
            }
            BodyKind::Ellipsoid { s_inv, .. } => {
                let y: Vec<f64> = (0..w.len()).map(|r| (0..w.len()).map(|c| s_inv[(r, c)] * w[c]).sum()).collect();
                let q = dot(&y, w).max(0.0);
                let scale = if q > 0.0 { (2.0 / q).sqrt() } else { 0.0 };
                for i in 0..w.len() {
                    out[i] = scale * y[i];
                }
                (2.0 * q).sqrt()
            }
            BodyKind::Polytope(p) => {
                let mut best = 0;
                let mut best_val = f64::NEG_INFINITY;
                for (i, v) in p.vertices.iter().enumerate() {
                    let val = dot(v.as_slice(), w);
                    if val > best_val {
                        best_val = val;
                        best = i;
                    }
                }
                out.copy_from_slice(p.vertices[best].as_slice());
                best_val
            }
            BodyKind::Product(a, b) => {
                let (oa, ob) = out.split_at_mut(a.dim);
                a.support_point_into(&w[..a.dim], oa) + b.support_point_into(&w[a.dim..], ob)
            }
            BodyKind::PSum { left, right, p } => {
                let mut xr = vec![0.0; w.len()];
                let hl = left.support_point_into(w, out);
                let hr = right.support_point_into(w, &mut xr);
                if *p == 1.0 {
                    for i in 0..w.len() {
                        out[i] += xr[i];
                    }
                    return hl + hr;
                }
                let (hl, hr) = (hl.max(0.0), hr.max(0.0));
                let h = (hl.powf(*p) + hr.powf(*p)).powf(1.0 / p);
                let (cl, cr) = if h > 0.0 { ((hl / h).powf(p - 1.0), (hr / h).powf(p - 1.0)) } else { (0.0, 0.0) };
                for i in 0..w.len() {
                    out[i] = cl * out[i] + cr * xr[i];
                }
                h
            }
            BodyKind::Scaled { body, factor } => {
                let h = body.support_point_into(w, out);
                out.iter_mut().for_each(|x| *x *= factor);
                factor * h
            }
            BodyKind::Translated { body, offset } => {
                let h = body.support_point_into(w, out);
                for i in 0..w.len() {
                    out[i] += offset[i];
                }
                h + dot(offset.as_slice(), w)
            }
            BodyKind::Rounded { body, eps } => {
                let h = body.support_point_into(w, out);
                let nw = norm(w);
                if nw > 0.0 {
                    for i in 0..w.len() {
                        out[i] += eps * w[i] / nw;
                    }
                }
                h + eps * nw
            }
            BodyKind::Linear { body, matrix, .. } => {
                let mtw = mul_transpose(matrix, w);
                let mut inner = vec![0.0; w.len()];
                let h = body.support_point_into(&mtw, &mut inner);
                for r in 0..w.len() {
                    out[r] = (0..w.len()).map(|c| matrix[(r, c)] * inner[c]).sum();
                }
                h
            }
        }
    }

    /// Whether the boundary is C^1 (unique outward normal everywhere).
    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            BodyKind::Ball { .. } | BodyKind::Ellipsoid { .. } => true,
            BodyKind::Polytope(_) | BodyKind::Product(..) => false,
            BodyKind::PSum { left, right, .. } => left.is_smooth() || right.is_smooth(),
            BodyKind::Scaled { body, .. } | BodyKind::Translated { body, .. } | BodyKind::Linear { body, .. } => {
                body.is_smooth()
            }
            BodyKind::Rounded { body, eps } => *eps > 0.0 || body.is_smooth(),
        }
    }

    /// Euclidean distance from `x` to the body (zero inside).
    pub fn distance(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.distance_unchecked(x))
    }

    fn distance_unchecked(&self, x: &DVector<f64>) -> f64 {
        match &self.kind {
            BodyKind::Ball { radius, center } => ((x - center).norm() - radius).max(0.0),
            BodyKind::Rounded { body, eps } => (body.distance_unchecked(x) - eps).max(0.0),
            BodyKind::Translated { body, offset } => body.distance_unchecked(&(x - offset)),
            BodyKind::Scaled { body, factor } => factor * body.distance_unchecked(&(x / *factor)),
            _ => gjk_distance(self, x),
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> Result<bool> {
        self.check_dim(x.len())?;
        Ok(self.contains_unchecked(x, 1e-12))
    }

    fn contains_unchecked(&self, x: &DVector<f64>, tol: f64) -> bool {
        match self.exact_gauge(x) {
            Some(j) => j <= 1.0 + tol,
            None => match &self.kind {
                BodyKind::Translated { body, offset } => body.contains_unchecked(&(x - offset), tol),
                BodyKind::Rounded { body, eps } => body.distance_unchecked(x) <= eps * (1.0 + tol) + tol,
                BodyKind::Scaled { body, factor } => body.contains_unchecked(&(x / *factor), tol),
                BodyKind::Linear { body, inverse, .. } => body.contains_unchecked(&(inverse * x), tol),
                BodyKind::Product(a, b) => {
                    a.contains_unchecked(&x.rows(0, a.dim).into_owned(), tol)
                        && b.contains_unchecked(&x.rows(a.dim, b.dim).into_owned(), tol)
                }
                _ => gjk_distance(self, x) <= tol * (1.0 + x.norm()),
            },
        }
    }

    /// Gauge in closed form where one exists; the origin must be interior.
    fn exact_gauge(&self, z: &DVector<f64>) -> Option<f64> {
        match &self.kind {
            BodyKind::Ball { radius, center } => {
                let c2 = center.norm_squared();
                let denom = radius * radius - c2;
                if denom <= 0.0 {
                    return None;
                }
                let zc = z.dot(center);
                Some((zc + (zc * zc + denom * z.norm_squared()).sqrt()) / denom)
            }
            BodyKind::Ellipsoid { s, .. } => Some((0.5 * quad_form(s, z.as_slice())).max(0.0).sqrt()),
            BodyKind::Polytope(p) => {
                let facets = p.facets.as_ref()?;
                if facets.iter().any(|(_, b)| *b <= 0.0) {
                    return None;
                }
                Some(facets.iter().map(|(a, b)| a.dot(z) / b).fold(0.0, f64::max))
            }
            BodyKind::Product(a, b) => {
                let ja = a.exact_gauge(&z.rows(0, a.dim).into_owned())?;
                let jb = b.exact_gauge(&z.rows(a.dim, b.dim).into_owned())?;
                Some(ja.max(jb))
            }
            BodyKind::Scaled { body, factor } => Some(body.exact_gauge(z)? / factor),
            BodyKind::Linear { body, inverse, .. } => body.exact_gauge(&(inverse * z)),
            _ => None,
        }
    }

    /// Whether the origin is an interior point (positive support in all
    /// sampled directions).
    pub fn origin_is_interior(&self) -> bool {
        self.inradius_about(&DVector::zeros(self.dim)) > 1e-10
    }

    /// Minkowski functional `j_K(z) = inf { t > 0 : z in t K }`.
    pub fn gauge(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_dim(z.len())?;
        if let Some(j) = self.exact_gauge(z) {
            return Ok(j);
        }
        if self.contains_p_sum() {
            return self.support_gauge(z);
        }
        if !self.origin_is_interior() {
            return Err(Error::OriginNotInterior);
        }
        let nz = z.norm();
        if nz == 0.0 {
            return Ok(0.0);
        }
        // j(z) >= |z| / h(z/|z|); grow the upper end until z/t is inside.
        let lower = nz / self.support_unchecked((z / nz).as_slice());
        let mut lo = lower;
        let mut hi = lower;
        while !self.contains_unchecked(&(z / hi), 1e-13) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 * lower {
                return Err(Error::OriginNotInterior);
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if hi - lo <= 1e-14 * hi {
                break;
            }
            if self.contains_unchecked(&(z / mid), 1e-13) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// P-sums have no membership oracle, so neither does anything built on one.
    fn contains_p_sum(&self) -> bool {
        match &self.kind {
            BodyKind::PSum { .. } => true,
            BodyKind::Product(a, b) => a.contains_p_sum() || b.contains_p_sum(),
            BodyKind::Scaled { body, .. }
            | BodyKind::Translated { body, .. }
            | BodyKind::Linear { body, .. }
            | BodyKind::Rounded { body, .. } => body.contains_p_sum(),
            _ => false,
        }
    }

    /// `j(z) = sup_{|w| = 1} <z, w> / h(w)`, from support values alone.
    fn support_gauge(&self, z: &DVector<f64>) -> Result<f64> {
        let degenerate = std::cell::Cell::new(false);
        let j = extremize_sphere(
            self.dim,
            |w| {
                let h = self.support_unchecked(w);
                if !(h > 0.0) {
                    degenerate.set(true);
                    return f64::INFINITY;
                }
                z.as_slice().iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / h
            },
            true,
        );
        if degenerate.get() {
            return Err(Error::OriginNotInterior);
        }
        Ok(j.max(0.0))
    }

    /// Largest `r` with `B(center, r)` inside the body: `min_u h(u) - <c, u>`.
    pub fn inradius_about(&self, center: &DVector<f64>) -> f64 {
        let c = center.clone();
        extremize_sphere(self.dim, |u| self.support_unchecked(u) - dot(c.as_slice(), u), false)
    }

    /// Smallest `R` with the body inside `B(center, R)`.
    pub fn circumradius_about(&self, center: &DVector<f64>) -> f64 {
        let c = center.clone();
        extremize_sphere(self.dim, |u| self.support_unchecked(u) - dot(c.as_slice(), u), true)
    }

    /// Width: `min_u h(u) + h(-u)`.
    pub fn width(&self) -> f64 {
        extremize_sphere(self.dim, |u| self.breadth(u), false)
    }

    pub fn diameter(&self) -> f64 {
        extremize_sphere(self.dim, |u| self.breadth(u), true)
    }

    fn breadth(&self, u: &[f64]) -> f64 {
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        self.support_unchecked(u) + self.support_unchecked(&neg)
    }

    pub fn stats(&self, center: &DVector<f64>) -> Result<BodyStats> {
        self.check_dim(center.len())?;
        Ok(BodyStats {
            inradius: self.inradius_about(center),
            circumradius: self.circumradius_about(center),
            width: self.width(),
            diameter: self.diameter(),
        })
    }
}

/// Hausdorff distance `sup_{|u|=1} |h_1(u) - h_2(u)|`. `samples` controls
/// the initial direction sample (0 selects the default).
pub fn hausdorff(a: &ConvexBody, b: &ConvexBody, samples: usize) -> Result<f64> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, got: b.dim });
    }
    let f = |u: &[f64]| (a.support_unchecked(u) - b.support_unchecked(u)).abs();
    Ok(extremize_sphere_with(a.dim, f, true, if samples == 0 { None } else { Some(samples) }))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn quad_form(m: &DMatrix<f64>, w: &[f64]) -> f64 {
    let d = w.len();
    let mut acc = 0.0;
    for r in 0..d {
        let mut row = 0.0;
        for c in 0..d {
            row += m[(r, c)] * w[c];
        }
        acc += w[r] * row;
    }
    acc
}

fn mul_transpose(m: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    (0..m.ncols()).map(|c| (0..m.nrows()).map(|r| m[(r, c)] * w[r]).sum()).collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Facets `<a, x> <= b` (unit `a`) of the hull of `vertices`, by brute force
/// over affinely independent `dim`-subsets.
fn enumerate_facets(vertices: &[DVector<f64>], centroid: &DVector<f64>) -> Vec<(DVector<f64>, f64)> {
    let dim = centroid.len();
    let scale = vertices.iter().map(|v| v.amax()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut facets: Vec<(DVector<f64>, f64)> = Vec::new();
    for subset in combinations(vertices.len(), dim) {
        let normal = if dim == 1 {
            DVector::from_element(1, 1.0)
        } else {
            let base = &vertices[subset[0]];
            let diffs = DMatrix::from_fn(dim - 1, dim, |r, c| vertices[subset[r + 1]][c] - base[c]);
            let (ker, _) = crate::symplin::kernel_split(&diffs, 1e-10);
            if ker.ncols() != 1 {
                continue;
            }
            ker.column(0).into_owned()
        };
        let mut a = normal;
        let mut b = a.dot(&vertices[subset[0]]);
        if a.dot(centroid) > b {
            a = -a;
            b = -b;
        }
        if vertices.iter().all(|v| a.dot(v) <= b + tol)
            && !facets.iter().any(|(fa, fb)| (fa - &a).norm() < 1e-9 && (fb - b).abs() < 1e-9 * scale)
        {
            facets.push((a, b));
        }
    }
    facets
}

/// GJK distance from `x` to the body, using only the support-point oracle.
fn gjk_distance(body: &ConvexBody, x: &DVector<f64>) -> f64 {
    let dim = body.dim;
    let mut buf = vec![0.0; dim];
    let mut support = |dir: &DVector<f64>| -> DVector<f64> {
        body.support_point_into(dir.as_slice(), &mut buf);
        DVector::from_column_slice(&buf) - x
    };
    let start = body.interior_point() - x;
    let mut v = if start.norm() > 0.0 { support(&(-&start)) } else { return 0.0 };
    let mut simplex = vec![v.clone()];
    for _ in 0..500 {
        let vn2 = v.norm_squared();
        if vn2 <= 1e-28 {
            return 0.0;
        }
        let s = support(&(-&v));
        // Frank-Wolfe duality gap |v|^2 - <v, s> bounds |v|^2 - dist^2.
        if vn2 - v.dot(&s) <= 1e-13 * vn2 {
            return vn2.sqrt();
        }
        simplex.push(s);
        let (closest, kept) = closest_on_simplex(&simplex);
        simplex = kept;
        if simplex.len() > dim {
            return 0.0;
        }
        v = closest;
    }
    v.norm()
}

/// Nearest point to the origin of `conv(points)` and the minimal subset
/// carrying it. Brute force over subsets; fine for the small simplices GJK keeps.
fn closest_on_simplex(points: &[DVector<f64>]) -> (DVector<f64>, Vec<DVector<f64>>) {
    let m = points.len();
    let mut best: Option<(f64, DVector<f64>, Vec<usize>)> = None;
    for mask in 1usize..(1 << m) {
        let idx: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let k = idx.len();
        // Minimise |sum l_i p_i| subject to sum l_i = 1 via the KKT system.
        let mut a = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[(r, c)] = points[i].dot(&points[j]);
            }
            a[(r, k)] = 1.0;
            a[(k, r)] = 1.0;
        }
        rhs[k] = 1.0;
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        if (0..k).any(|r| !(sol[r] > -1e-12)) {
            continue;
        }
        let p = idx.iter().enumerate().fold(DVector::zeros(points[0].len()), |acc, (r, &i)| acc + &points[i] * sol[r]);
        let d = p.norm_squared();
        if best.as_ref().is_none_or(|(bd, _, bidx)| d < *bd - 1e-15 || (d <= *bd + 1e-15 && k < bidx.len())) {
            best = Some((d, p, idx));
        }
    }
    match best {
        Some((_, p, idx)) => (p, idx.into_iter().map(|i| points[i].clone()).collect()),
        None => {
            let i = (0..m).min_by(|&a, &b| points[a].norm().total_cmp(&points[b].norm())).unwrap();
            (points[i].clone(), vec![points[i].clone()])
        }
    }
}

fn extremize_sphere(dim: usize, f: impl Fn(&[f64]) -> f64, maximize: bool) -> f64 {
    extremize_sphere_with(dim, f, maximize, None)
}

/// Extremum of `f` over the unit sphere: dense sample then local refinement
/// (golden section on the angle in 2D, shrinking pattern search otherwise).
fn extremize_sphere_with(dim: usize, f: impl Fn(&[f64]) -> f64, maximize: bool, samples: Option<usize>) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |u: &[f64]| sign * f(u);
    match dim {
        0 => 0.0,
        1 => sign * g(&[1.0]).min(g(&[-1.0])),
        2 => {
            let count = samples.unwrap_or(1440);
            let step = std::f64::consts::TAU / count as f64;
            let at = |a: f64| g(&[a.cos(), a.sin()]);
            let vals: Vec<f64> = (0..count).map(|i| at(i as f64 * step)).collect();
            let mut best = f64::INFINITY;
            // Refine the few best grid minima; piecewise-smooth targets can
            // have several near-equal basins.
            let mut order: Vec<usize> = (0..count).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            for &i in order.iter().take(6) {
                let a0 = i as f64 * step;
                let (_, v) = golden_min(at, a0 - step, a0 + step, 1e-10);
                best = best.min(v).min(vals[i]);
            }
            sign * best
        }
        _ => {
            let count = samples.unwrap_or(512);
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut dirs: Vec<DVector<f64>> = Vec::with_capacity(count + 2 * dim);
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(dim);
                    e[i] = s;
                    dirs.push(e);
                }
            }
            for _ in 0..count {
                let v = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                let nv: f64 = v.norm();
                if nv > 0.0 {
                    dirs.push(v / nv);
                }
            }
            let mut scored: Vec<(f64, DVector<f64>)> = dirs.into_iter().map(|u| (g(u.as_slice()), u)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = f64::INFINITY;
            for (mut val, mut u) in scored.into_iter().take(4) {
                let mut step = 0.2;
                while step > 1e-7 {
                    let mut improved = false;
                    for i in 0..dim {
                        for s in [step, -step] {
                            let mut cand = u.clone();
                            cand[i] += s;
                            let cand = cand.normalize();
                            let cv = g(cand.as_slice());
                            if cv < val {
                                val = cv;
                                u = cand;
                                improved = true;
                            }
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
                best = best.min(val);
            }
            sign * best
        }
    }
}
