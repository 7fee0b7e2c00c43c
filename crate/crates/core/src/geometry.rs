//! Flat-spacetime primitives: four-vectors, spatial boxes, piecewise-planar
//! hypersurfaces and foliation fields.
//!
//! Units are natural (ħ = c = 1) and the metric signature is (+,−,−,−).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `n·n = 1` for constructed patch normals.
pub const UNIT_NORMAL_TOL: f64 = 1e-12;

/// A spacetime point or vector with contravariant components (t, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FourVector {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FourVector {
    pub const ZERO: FourVector = FourVector::new(0.0, 0.0, 0.0, 0.0);
    /// Unit future-pointing time direction (1, 0, 0, 0).
    pub const TIME: FourVector = FourVector::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        Self { t, x, y, z }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    /// A point at time `t` with spatial position `r`.
    pub fn event(t: f64, r: [f64; 3]) -> Self {
        Self::new(t, r[0], r[1], r[2])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.t, self.x, self.y, self.z]
    }

    pub fn spatial(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Component by index, 0 = t.
    pub fn get(self, mu: usize) -> f64 {
        self.to_array()[mu]
    }

    /// Minkowski inner product with signature (+,−,−,−).
    pub fn dot(self, other: FourVector) -> f64 {
        minkowski_dot(self, other)
    }

    /// Minkowski square `t² − x² − y² − z²`.
    pub fn square(self) -> f64 {
        self.dot(self)
    }

    /// Euclidean component norm, used for stagnation checks.
    pub fn euclidean_norm(self) -> f64 {
        (self.t * self.t + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Lowers the index: (t, x, y, z) ↦ (t, −x, −y, −z).
    pub fn lowered(self) -> [f64; 4] {
        [self.t, -self.x, -self.y, -self.z]
    }

    pub fn is_future_timelike(self) -> bool {
        self.t > 0.0 && self.square() > 0.0
    }

    /// Unit normal of a hyperplane boosted with rapidity `zeta` along the
    /// spatial unit direction `dir`.
    pub fn boosted_normal(zeta: f64, dir: [f64; 3]) -> Self {
        let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let (c, s) = (zeta.cosh(), zeta.sinh());
        if norm == 0.0 {
            return FourVector::TIME;
        }
        Self::new(c, s * dir[0] / norm, s * dir[1] / norm, s * dir[2] / norm)
    }
}

impl fmt::Display for FourVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.t, self.x, self.y, self.z)
    }
}

impl Add for FourVector {
    type Output = FourVector;
    fn add(self, o: FourVector) -> FourVector {
        FourVector::new(self.t + o.t, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for FourVector {
    type Output = FourVector;
    fn sub(self, o: FourVector) -> FourVector {
        FourVector::new(self.t - o.t, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for FourVector {
    type Output = FourVector;
    fn mul(self, a: f64) -> FourVector {
        FourVector::new(self.t * a, self.x * a, self.y * a, self.z * a)
    }
}

impl Neg for FourVector {
    type Output = FourVector;
    fn neg(self) -> FourVector {
        self * -1.0
    }
}

/// `a⁰b⁰ − a¹b¹ − a²b² − a³b³`.
pub fn minkowski_dot(a: FourVector, b: FourVector) -> f64 {
    a.t * b.t - a.x * b.x - a.y * b.y - a.z * b.z
}

/// Spatial box `[0, L₁] × … × [0, L_d]` with `d ∈ {1, 2, 3}` active
/// dimensions. Inactive coordinates are pinned to zero and not integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialBox {
    dims: usize,
    lengths: [f64; 3],
}

impl SpatialBox {
    pub fn new(lengths: &[f64]) -> Result<Self> {
        if lengths.is_empty() || lengths.len() > 3 {
            return Err(Error::InvalidInput(format!(
                "spatial box needs 1 to 3 lengths, got {}",
                lengths.len()
            )));
        }
        if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidInput("box lengths must be positive and finite".into()));
        }
        let mut l = [1.0; 3];
        l[..lengths.len()].copy_from_slice(lengths);
        Ok(Self { dims: lengths.len(), lengths: l })
    }

    pub fn line(length: f64) -> Result<Self> {
        Self::new(&[length])
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dims]
    }

    /// Product of the active lengths.
    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Momentum `2π n_i / L_i` of the box lattice; entries beyond `dims` are ignored.
    pub fn lattice_momentum(&self, n: [i64; 3]) -> [f64; 3] {
        let mut k = [0.0; 3];
        for i in 0..self.dims {
            k[i] = 2.0 * std::f64::consts::PI * n[i] as f64 / self.lengths[i];
        }
        k
    }
}

/// Midpoint-rule resolution for surface integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadrature {
    pub points_per_dim: usize,
}

impl Quadrature {
    pub fn new(points_per_dim: usize) -> Self {
        Self { points_per_dim: points_per_dim.max(1) }
    }

    /// 2¹⁰ points in one dimension, coarser in higher dimensions.
    pub fn default_for(dims: usize) -> Self {
        match dims {
            1 => Self::new(1024),
            2 => Self::new(128),
            _ => Self::new(32),
        }
    }
}

/// A bounded planar piece of a hypersurface.
///
/// Points are `base + Σ uᵢ eᵢ` where `eᵢ` is an orthonormal spacelike
/// tangent frame (`eᵢ·eᵢ = −1`) and `u` lies in `[lo, hi]` per active axis.
/// Axes marked periodic are unbounded for crossing tests while quadrature
/// covers exactly one period `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub normal: FourVector,
    pub base: FourVector,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub periodic: [bool; 3],
    /// `|g⁽³⁾|^{1/2}` of the surface coordinates.
    pub metric_factor: f64,
    pub spacelike: bool,
    tangents: [FourVector; 3],
}

impl Patch {
    /// Spacelike patch with future-oriented unit timelike normal.
    pub fn spacelike(
        normal: FourVector,
        base: FourVector,
        lo: [f64; 3],
        hi: [f64; 3],
    ) -> Result<Self> {
        let nn = normal.square();
        if !(normal.t > 0.0) || (nn - 1.0).abs() > UNIT_NORMAL_TOL {
            return Err(Error::InvalidSurface(format!(
                "spacelike patch needs a future unit timelike normal, got {normal} with n·n = {nn}"
            )));
        }
        Ok(Self {
            normal,
            base,
            lo,
            hi,
            periodic: [false; 3],
            metric_factor: 1.0,
            spacelike: true,
            tangents: boost_frame(normal),
        })
    }

    /// Patch with a spacelike normal (`n·n = −1`), i.e. a timelike piece.
    /// It can be crossed and reported, but not used as a Cauchy surface.
    pub fn non_spacelike(
        normal: FourVector,
        base: FourVector,
        lo: [f64; 3],
        hi: [f64; 3],
        tangents: [FourVector; 3],
    ) -> Self {
        Self {
            normal,
            base,
            lo,
            hi,
            periodic: [false; 3],
            metric_factor: 1.0,
            spacelike: false,
            tangents,
        }
    }

    pub fn with_periodic(mut self, periodic: [bool; 3]) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn tangents(&self) -> &[FourVector; 3] {
        &self.tangents
    }

    /// Signed distance function `n·(x − base)`; zero on the plane.
    pub fn level(&self, x: FourVector) -> f64 {
        self.normal.dot(x - self.base)
    }

    /// Surface coordinates of `x` (projected onto the tangent frame).
    pub fn coordinates(&self, x: FourVector) -> [f64; 3] {
        let d = x - self.base;
        let mut u = [0.0; 3];
        for (ui, e) in u.iter_mut().zip(self.tangents.iter()) {
            *ui = -e.dot(d);
        }
        u
    }

    pub fn point(&self, u: [f64; 3]) -> FourVector {
        let mut x = self.base;
        for (ui, e) in u.iter().zip(self.tangents.iter()) {
            x = x + *e * *ui;
        }
        x
    }

    /// Whether surface coordinates `u` fall inside the patch bounds on the
    /// first `dims` axes; periodic axes always pass.
    pub fn contains(&self, u: [f64; 3], dims: usize) -> bool {
        (0..dims).all(|i| self.periodic[i] || (u[i] >= self.lo[i] && u[i] <= self.hi[i]))
    }

    /// Surface area of the bounded region (one period on periodic axes).
    pub fn area(&self, dims: usize) -> f64 {
        (0..dims).map(|i| self.hi[i] - self.lo[i]).product::<f64>() * self.metric_factor
    }

    /// `dS^μ = n^μ |g⁽³⁾|^{1/2} d³u`.
    pub fn surface_element(&self, area_element: f64) -> FourVector {
        self.normal * (self.metric_factor * area_element)
    }

    /// Midpoint grid over the bounded region: calls `f(x, dS)` per cell.
    pub fn for_each_cell(&self, dims: usize, quad: Quadrature, mut f: impl FnMut(FourVector, FourVector)) {
        let n = quad.points_per_dim;
        let mut h = [0.0; 3];
        let mut cell = 1.0;
        for i in 0..dims {
            h[i] = (self.hi[i] - self.lo[i]) / n as f64;
            cell *= h[i];
        }
        let ds = self.surface_element(cell);
        let total = n.pow(dims as u32);
        for idx in 0..total {
            let mut u = [0.0; 3];
            let mut rem = idx;
            for i in 0..dims {
                let j = rem % n;
                rem /= n;
                u[i] = self.lo[i] + (j as f64 + 0.5) * h[i];
            }
            f(self.point(u), ds);
        }
    }
}

/// Orthonormal spacelike frame orthogonal to the unit timelike `n`: the
/// spatial columns of the pure boost taking (1,0,0,0) to `n`.
fn boost_frame(n: FourVector) -> [FourVector; 3] {
    let gamma = n.t;
    let s = n.spatial();
    let mut e = [FourVector::ZERO; 3];
    for (j, ej) in e.iter_mut().enumerate() {
        let mut c = [s[j], 0.0, 0.0, 0.0];
        for i in 0..3 {
            let delta = if i == j { 1.0 } else { 0.0 };
            c[i + 1] = delta + s[i] * s[j] / (1.0 + gamma);
        }
        *ej = FourVector::from_array(c);
    }
    e
}

/// A piecewise-planar 3-surface (or 1- or 2-surface in lower dimensions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypersurface {
    dims: usize,
    patches: Vec<Patch>,
}

impl Hypersurface {
    pub fn new(dims: usize, patches: Vec<Patch>) -> Result<Self> {
        if !(1..=3).contains(&dims) {
            return Err(Error::InvalidInput(format!("unsupported spatial dimension {dims}")));
        }
        if patches.is_empty() {
            return Err(Error::InvalidSurface("hypersurface has no patches".into()));
        }
        Ok(Self { dims, patches })
    }

    /// The `t = t0` plane restricted to the box.
    pub fn time_slice(t0: f64, bx: &SpatialBox) -> Self {
        let mut hi = [0.0; 3];
        hi[..bx.dims()].copy_from_slice(bx.lengths());
        let patch = Patch::spacelike(FourVector::TIME, FourVector::new(t0, 0.0, 0.0, 0.0), [0.0; 3], hi)
            .expect("time direction is a unit normal");
        Self { dims: bx.dims(), patches: vec![patch] }
    }

    /// The `t = t0` plane of a periodic box: crossings are detected on the
    /// whole plane while integrals cover one period.
    pub fn periodic_time_slice(t0: f64, bx: &SpatialBox) -> Self {
        let mut s = Self::time_slice(t0, bx);
        s.patches[0].periodic = [true; 3];
        s
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn is_spacelike(&self) -> bool {
        self.patches.iter().all(|p| p.spacelike)
    }

    /// `t0` if this is a single constant-time patch.
    pub fn constant_time(&self) -> Option<f64> {
        match self.patches.as_slice() {
            [p] if p.normal == FourVector::TIME => Some(p.base.t),
            _ => None,
        }
    }

    /// `n^μ |g⁽³⁾|^{1/2} · area_element` on the given patch.
    pub fn surface_measure(&self, patch_index: usize, area_element: f64) -> Result<FourVector> {
        self.patches
            .get(patch_index)
            .map(|p| p.surface_element(area_element))
            .ok_or(Error::PatchIndex { index: patch_index, len: self.patches.len() })
    }

    /// Midpoint-rule integral of `f(x, dS)` over all patches.
    pub fn integrate(&self, quad: Quadrature, mut f: impl FnMut(FourVector, FourVector) -> f64) -> f64 {
        let mut acc = 0.0;
        for p in &self.patches {
            p.for_each_cell(self.dims, quad, |x, ds| acc += f(x, ds));
        }
        acc
    }

    pub fn total_area(&self) -> f64 {
        self.patches.iter().map(|p| p.area(self.dims)).sum()
    }
}

/// A field of timelike future-oriented unit normals `N^μ(x)` together with
/// a time function whose level sets are the leaves.
pub trait Foliation: Send + Sync {
    fn normal(&self, x: FourVector) -> FourVector;
    /// Time function labelling the leaf through `x`.
    fn leaf_time(&self, x: FourVector) -> f64;
}

/// Flat foliation by parallel hyperplanes; default `N = (1,0,0,0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformFoliation {
    normal: FourVector,
}

impl UniformFoliation {
    pub fn new(normal: FourVector) -> Result<Self> {
        if !(normal.t > 0.0) || (normal.square() - 1.0).abs() > UNIT_NORMAL_TOL {
            return Err(Error::InvalidInput(format!("foliation normal {normal} is not a future unit timelike vector")));
        }
        Ok(Self { normal })
    }
}

impl Default for UniformFoliation {
    fn default() -> Self {
        Self { normal: FourVector::TIME }
    }
}

impl Foliation for UniformFoliation {
    fn normal(&self, _x: FourVector) -> FourVector {
        self.normal
    }

    fn leaf_time(&self, x: FourVector) -> f64 {
        self.normal.dot(x)
    }
}

/// Central-difference divergence `∂_μ N^μ` at `x`.
pub fn foliation_divergence(f: &dyn Foliation, x: FourVector, h: f64) -> f64 {
    let mut div = 0.0;
    for mu in 0..4 {
        let mut e = [0.0; 4];
        e[mu] = h;
        let step = FourVector::from_array(e);
        let plus = f.normal(x + step).get(mu);
        let minus = f.normal(x - step).get(mu);
        div += (plus - minus) / (2.0 * h);
    }
    div
}
