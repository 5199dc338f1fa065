//! Points, Moebius maps and spherical caps on the Riemann sphere.
//!
//! Points are homogeneous pairs, so maps act without division. Caps are
//! stored as (unit center, angular radius) and mapped through their
//! Hermitian circle matrices, which keeps containment tests exact up to
//! floating-point rounding.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for projective equality of points and maps.
pub const PROJ_TOL: f64 = 1e-10;
/// Matrices with `|det|` below this are rejected.
pub const DET_MIN: f64 = 1e-14;
/// Band around `trace^2 = 4` treated as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;
/// Default strict containment margin.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("degenerate matrix: |det| = {0:e}")]
    DegenerateMatrix(f64),
    #[error("identity map has no distinguished fixed points")]
    IdentityMap,
    #[error("invalid cap: {0}")]
    InvalidCap(String),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------------------
// Points

/// A point of the Riemann sphere in homogeneous coordinates `(z1 : z2)`.
#[derive(Clone, Copy, Debug)]
pub struct SpherePoint {
    z1: Complex64,
    z2: Complex64,
}

impl SpherePoint {
    /// Normalizes so the larger modulus is 1. Returns `None` for `(0, 0)`
    /// or non-finite input.
    pub fn new(z1: Complex64, z2: Complex64) -> Option<Self> {
        let m = z1.norm().max(z2.norm());
        if !(m > 0.0) || !m.is_finite() {
            return None;
        }
        Some(SpherePoint { z1: z1 / m, z2: z2 / m })
    }

    pub fn from_complex(z: Complex64) -> Self {
        SpherePoint::new(z, c(1.0, 0.0)).unwrap_or_else(SpherePoint::infinity)
    }

    pub fn from_re_im(re: f64, im: f64) -> Self {
        SpherePoint::from_complex(c(re, im))
    }

    pub fn infinity() -> Self {
        SpherePoint { z1: c(1.0, 0.0), z2: c(0.0, 0.0) }
    }

    pub fn zero() -> Self {
        SpherePoint { z1: c(0.0, 0.0), z2: c(1.0, 0.0) }
    }

    pub fn coords(&self) -> (Complex64, Complex64) {
        (self.z1, self.z2)
    }

    /// Affine value, or `None` at infinity.
    pub fn to_complex(&self) -> Option<Complex64> {
        if self.z2.norm() < 1e-300 {
            None
        } else {
            Some(self.z1 / self.z2)
        }
    }

    pub fn is_infinity(&self) -> bool {
        self.z2.norm() <= PROJ_TOL
    }

    /// Inverse stereographic image on the unit sphere; infinity is `(0, 0, 1)`.
    pub fn to_vec3(&self) -> [f64; 3] {
        let p = self.z1 * self.z2.conj();
        let a = self.z1.norm_sqr();
        let b = self.z2.norm_sqr();
        let s = a + b;
        [2.0 * p.re / s, 2.0 * p.im / s, (a - b) / s]
    }

    pub fn from_vec3(v: [f64; 3]) -> Self {
        let v = unit(v);
        // Project from whichever pole is farther away for accuracy.
        if v[2] <= 0.0 {
            SpherePoint::new(c(v[0], v[1]), c(1.0 - v[2], 0.0)).expect("nonzero")
        } else {
            SpherePoint::new(c(1.0 + v[2], 0.0), c(v[0], -v[1])).expect("nonzero")
        }
    }

    /// Projective equality: `|z1 w2 - z2 w1| <= tol`.
    pub fn approx_eq(&self, other: &SpherePoint, tol: f64) -> bool {
        (self.z1 * other.z2 - self.z2 * other.z1).norm() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.z1.re.is_finite() && self.z1.im.is_finite() && self.z2.re.is_finite() && self.z2.im.is_finite()
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_complex() {
            Some(z) => write!(f, "{}{:+}i", z.re, z.im),
            None => write!(f, "inf"),
        }
    }
}

/// Chordal distance `2|z-w| / sqrt((1+|z|^2)(1+|w|^2))`, in `[0, 2]`.
pub fn chordal_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    let num = (p.z1 * q.z2 - p.z2 * q.z1).norm();
    let den = ((p.z1.norm_sqr() + p.z2.norm_sqr()) * (q.z1.norm_sqr() + q.z2.norm_sqr())).sqrt();
    (2.0 * num / den).min(2.0)
}

// ---------------------------------------------------------------------------
// Vector helpers

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = norm3(a);
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Angle between two unit vectors, accurate for nearly equal vectors.
pub fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    norm3(cross(a, b)).atan2(dot(a, b))
}

// ---------------------------------------------------------------------------
// Maps

/// Element of PSL(2, C), stored with `ad - bc = 1`.
#[derive(Clone, Copy, Debug)]
pub struct MoebiusMap {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapClass {
    Identity,
    Elliptic,
    Parabolic,
    Loxodromic,
}

impl fmt::Display for MapClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MapClass::Identity => "identity",
            MapClass::Elliptic => "elliptic",
            MapClass::Parabolic => "parabolic",
            MapClass::Loxodromic => "loxodromic",
        };
        f.write_str(s)
    }
}

/// Classification together with the tie-break flag: `near_parabolic` is set
/// when `trace^2` was within the parabolic band but not exactly 4.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Classification {
    pub class: MapClass,
    pub near_parabolic: bool,
}

#[derive(Clone, Copy, Debug)]
pub enum FixedPoints {
    Loxodromic { attracting: SpherePoint, repelling: SpherePoint },
    Parabolic(SpherePoint),
    Elliptic(SpherePoint, SpherePoint),
}

impl MoebiusMap {
    /// Builds `z -> (az + b)/(cz + d)`, scaling to unit determinant.
    pub fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Result<Self, SphereError> {
        let det = a * d - b * c;
        if !(det.norm() >= DET_MIN) || !det.norm().is_finite() {
            return Err(SphereError::DegenerateMatrix(det.norm()));
        }
        let s = det.sqrt();
        Ok(MoebiusMap { a: a / s, b: b / s, c: c / s, d: d / s })
    }

    pub fn from_real(a: f64, b: f64, c_: f64, d: f64) -> Result<Self, SphereError> {
        MoebiusMap::new(c(a, 0.0), c(b, 0.0), c(c_, 0.0), c(d, 0.0))
    }

    pub fn identity() -> Self {
        MoebiusMap { a: c(1.0, 0.0), b: c(0.0, 0.0), c: c(0.0, 0.0), d: c(1.0, 0.0) }
    }

    pub fn det(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// Product `self ∘ other`. Both factors have unit determinant, so the
    /// product does too up to rounding; rescaling by the computed
    /// determinant would only inject its cancellation error.
    pub fn compose(&self, other: &MoebiusMap) -> MoebiusMap {
        MoebiusMap {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
        }
    }

    /// Adjugate inverse; exact for unit determinant.
    pub fn invert(&self) -> MoebiusMap {
        MoebiusMap { a: self.d, b: -self.b, c: -self.c, d: self.a }
    }

    pub fn pow(&self, n: i32) -> MoebiusMap {
        let base = if n < 0 { self.invert() } else { *self };
        let mut acc = MoebiusMap::identity();
        for _ in 0..n.unsigned_abs() {
            acc = acc.compose(&base);
        }
        acc
    }

    pub fn apply(&self, p: &SpherePoint) -> SpherePoint {
        let w1 = self.a * p.z1 + self.b * p.z2;
        let w2 = self.c * p.z1 + self.d * p.z2;
        // Unit determinant keeps (w1, w2) away from zero.
        SpherePoint::new(w1, w2).unwrap_or(*p)
    }

    pub fn apply_complex(&self, z: Complex64) -> SpherePoint {
        self.apply(&SpherePoint::from_complex(z))
    }

    pub fn trace(&self) -> Complex64 {
        self.a + self.d
    }

    pub fn trace_sq(&self) -> Complex64 {
        let t = self.trace();
        t * t / self.det()
    }

    /// Distance in PSL(2,C): Frobenius distance minimized over the sign.
    pub fn projective_distance(&self, other: &MoebiusMap) -> f64 {
        let d = |s: f64| {
            ((self.a - other.a * s).norm_sqr()
                + (self.b - other.b * s).norm_sqr()
                + (self.c - other.c * s).norm_sqr()
                + (self.d - other.d * s).norm_sqr())
            .sqrt()
        };
        d(1.0).min(d(-1.0))
    }

    pub fn distance_to_identity(&self) -> f64 {
        self.projective_distance(&MoebiusMap::identity())
    }

    pub fn approx_eq(&self, other: &MoebiusMap, tol: f64) -> bool {
        self.projective_distance(other) <= tol
    }

    pub fn is_identity(&self) -> bool {
        self.distance_to_identity() <= PROJ_TOL
    }

    pub fn classify(&self) -> MapClass {
        self.classify_detailed().class
    }

    pub fn classify_detailed(&self) -> Classification {
        if self.is_identity() {
            return Classification { class: MapClass::Identity, near_parabolic: false };
        }
        let t2 = self.trace_sq();
        let gap = (t2 - 4.0).norm();
        if gap <= PARABOLIC_TOL {
            return Classification { class: MapClass::Parabolic, near_parabolic: gap > 0.0 };
        }
        let class = if t2.im.abs() <= PARABOLIC_TOL && t2.re >= -PARABOLIC_TOL && t2.re < 4.0 {
            MapClass::Elliptic
        } else {
            MapClass::Loxodromic
        };
        Classification { class, near_parabolic: false }
    }

    fn eigenvector(&self, lambda: Complex64) -> SpherePoint {
        let v1 = (self.b, lambda - self.a);
        let v2 = (lambda - self.d, self.c);
        let n1 = v1.0.norm() + v1.1.norm();
        let n2 = v2.0.norm() + v2.1.norm();
        let v = if n1 >= n2 { v1 } else { v2 };
        SpherePoint::new(v.0, v.1).unwrap_or_else(SpherePoint::infinity)
    }

    pub fn fixed_points(&self) -> Result<FixedPoints, SphereError> {
        let class = self.classify();
        let t = self.trace();
        match class {
            MapClass::Identity => Err(SphereError::IdentityMap),
            MapClass::Parabolic => Ok(FixedPoints::Parabolic(self.eigenvector(t / 2.0))),
            MapClass::Elliptic | MapClass::Loxodromic => {
                let disc = (t * t - 4.0).sqrt();
                let mut l1 = (t + disc) / 2.0;
                let mut l2 = (t - disc) / 2.0;
                // The larger eigenvalue is computed without cancellation.
                if l2.norm() > l1.norm() {
                    std::mem::swap(&mut l1, &mut l2);
                }
                l2 = 1.0 / l1;
                let p1 = self.eigenvector(l1);
                let p2 = self.eigenvector(l2);
                if class == MapClass::Elliptic {
                    Ok(FixedPoints::Elliptic(p1, p2))
                } else {
                    // The multiplier at the eigenvector of eigenvalue l is 1/l^2.
                    Ok(FixedPoints::Loxodromic { attracting: p1, repelling: p2 })
                }
            }
        }
    }

    /// Entries as `[[re, im]; 4]` in the order a, b, c, d.
    pub fn to_pairs(&self) -> [[f64; 2]; 4] {
        [[self.a.re, self.a.im], [self.b.re, self.b.im], [self.c.re, self.c.im], [self.d.re, self.d.im]]
    }

    pub fn from_pairs(p: [[f64; 2]; 4]) -> Result<Self, SphereError> {
        MoebiusMap::new(c(p[0][0], p[0][1]), c(p[1][0], p[1][1]), c(p[2][0], p[2][1]), c(p[3][0], p[3][1]))
    }
}

impl Mul for MoebiusMap {
    type Output = MoebiusMap;
    fn mul(self, rhs: MoebiusMap) -> MoebiusMap {
        self.compose(&rhs)
    }
}

// ---------------------------------------------------------------------------
// Caps

/// Spherical cap `{p : angle(p, center) <= radius}` (or `<` when open).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cap {
    pub center: [f64; 3],
    pub radius: f64,
    pub closed: bool,
}

/// Euclidean description of a cap's boundary in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlaneShape {
    /// `|z - center| <= radius` when `inside`, else `>=`.
    Disk { center: Complex64, radius: f64, inside: bool },
    /// `Re(conj(normal) z) >= offset`; the boundary passes through infinity.
    HalfPlane { normal: Complex64, offset: f64 },
}

/// Hermitian form `alpha |z1|^2 + 2 Re(conj(beta) z1 conj(z2)) + delta |z2|^2 >= 0`.
#[derive(Clone, Copy, Debug)]
struct Hermitian {
    alpha: f64,
    beta: Complex64,
    delta: f64,
}

impl Cap {
    pub fn new(center: [f64; 3], radius: f64, closed: bool) -> Result<Self, SphereError> {
        let n = norm3(center);
        if !n.is_finite() || n < 1e-12 {
            return Err(SphereError::InvalidCap("zero center".into()));
        }
        if !(radius > 0.0 && radius < std::f64::consts::PI) {
            return Err(SphereError::InvalidCap(format!("radius {radius} outside (0, pi)")));
        }
        Ok(Cap { center: unit(center), radius, closed })
    }

    /// Closed disk `|z - center| <= r`.
    pub fn disk(center: Complex64, r: f64) -> Result<Self, SphereError> {
        Cap::from_circle(center, r, true)
    }

    /// Closed exterior `|z - center| >= r`, including infinity.
    pub fn exterior(center: Complex64, r: f64) -> Result<Self, SphereError> {
        Cap::from_circle(center, r, false)
    }

    pub fn from_circle(center: Complex64, r: f64, inside: bool) -> Result<Self, SphereError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(SphereError::InvalidCap(format!("circle radius {r}")));
        }
        let s = if inside { 1.0 } else { -1.0 };
        let h = Hermitian { alpha: -s, beta: center * s, delta: s * (r * r - center.norm_sqr()) };
        Ok(Cap::from_hermitian(h, r, true))
    }

    /// Closed half-plane `Re(conj(normal) z) >= offset`.
    pub fn half_plane(normal: Complex64, offset: f64) -> Result<Self, SphereError> {
        let n = normal.norm();
        if !(n > 0.0) {
            return Err(SphereError::InvalidCap("zero normal".into()));
        }
        // 2 Re(conj(beta) z) + delta >= 0 with beta = normal/2, delta = -offset.
        let h = Hermitian { alpha: 0.0, beta: normal / 2.0, delta: -offset };
        Ok(Cap::from_hermitian(h, n / 2.0, true))
    }

    fn hermitian(&self) -> Hermitian {
        let [x, y, z] = self.center;
        let cr = self.radius.cos();
        Hermitian { alpha: z - cr, beta: c(x, y), delta: -(z + cr) }
    }

    /// `sqrt(-det)` of the form is passed in separately so tiny caps keep
    /// their relative precision.
    fn from_hermitian(h: Hermitian, sqrt_neg_det: f64, closed: bool) -> Cap {
        let v = [h.beta.re, h.beta.im, (h.alpha - h.delta) / 2.0];
        let s = norm3(v);
        let cos_r = -(h.alpha + h.delta) / (2.0 * s);
        let sin_r = sqrt_neg_det / s;
        Cap { center: [v[0] / s, v[1] / s, v[2] / s], radius: sin_r.atan2(cos_r), closed }
    }

    pub fn complement(&self) -> Cap {
        Cap {
            center: [-self.center[0], -self.center[1], -self.center[2]],
            radius: std::f64::consts::PI - self.radius,
            closed: !self.closed,
        }
    }

    pub fn interior(&self) -> Cap {
        Cap { closed: false, ..*self }
    }

    pub fn closure(&self) -> Cap {
        Cap { closed: true, ..*self }
    }

    /// Angular margin of a point: positive inside, negative outside.
    pub fn point_margin(&self, p: &SpherePoint) -> f64 {
        self.radius - angle_between(self.center, p.to_vec3())
    }

    pub fn contains(&self, p: &SpherePoint) -> bool {
        let m = self.point_margin(p);
        if self.closed {
            m >= 0.0
        } else {
            m > 0.0
        }
    }

    /// Chordal diameter of the cap.
    pub fn diameter(&self) -> f64 {
        if self.radius >= std::f64::consts::FRAC_PI_2 {
            2.0
        } else {
            2.0 * self.radius.sin()
        }
    }

    pub fn center_point(&self) -> SpherePoint {
        SpherePoint::from_vec3(self.center)
    }

    /// Deviation between two caps: angle between centers plus radius gap.
    pub fn deviation(&self, other: &Cap) -> f64 {
        angle_between(self.center, other.center) + (self.radius - other.radius).abs()
    }

    pub fn approx_eq(&self, other: &Cap, tol: f64) -> bool {
        self.deviation(other) <= tol
    }

    /// Euclidean shape of the cap in the plane.
    pub fn plane_shape(&self) -> PlaneShape {
        let h = self.hermitian();
        let sin_r = self.radius.sin();
        if h.alpha.abs() <= 1e-14 {
            PlaneShape::HalfPlane { normal: h.beta * 2.0, offset: -h.delta }
        } else {
            PlaneShape::Disk { center: -h.beta / h.alpha, radius: sin_r / h.alpha.abs(), inside: h.alpha < 0.0 }
        }
    }

    /// Whether the two boundary circles meet.
    pub fn boundaries_meet(&self, other: &Cap, tol: f64) -> bool {
        let a = angle_between(self.center, other.center);
        a <= self.radius + other.radius + tol
            && a + tol >= (self.radius - other.radius).abs()
            && a <= 2.0 * std::f64::consts::PI - self.radius - other.radius + tol
    }

    /// Angular distance from a point to the boundary circle.
    pub fn boundary_distance(&self, p: &SpherePoint) -> f64 {
        self.point_margin(p).abs()
    }
}

/// Exact image of a cap, via `C' = A^* C A` with `A = m^{-1}`.
pub fn map_cap(m: &MoebiusMap, cap: &Cap) -> Cap {
    let h = cap.hermitian();
    let inv = m.invert();
    let (a, b, cc, d) = (inv.a, inv.b, inv.c, inv.d);
    // Form matrix H = [[alpha, beta], [conj(beta), delta]]; H' = A^* H A.
    let h11 = c(h.alpha, 0.0);
    let h12 = h.beta;
    let h21 = h.beta.conj();
    let h22 = c(h.delta, 0.0);
    // H A
    let t11 = h11 * a + h12 * cc;
    let t12 = h11 * b + h12 * d;
    let t21 = h21 * a + h22 * cc;
    let t22 = h21 * b + h22 * d;
    // A^* (H A)
    let n11 = a.conj() * t11 + cc.conj() * t21;
    let n12 = a.conj() * t12 + cc.conj() * t22;
    let n22 = b.conj() * t12 + d.conj() * t22;
    let hp = Hermitian { alpha: n11.re, beta: n12, delta: n22.re };
    let det_scale = inv.det().norm();
    Cap::from_hermitian(hp, cap.radius.sin() * det_scale, cap.closed)
}

/// Margin of `inner ⊂ Int(outer)`: positive iff strictly interior.
pub fn cap_subset(inner: &Cap, outer: &Cap) -> f64 {
    outer.radius - inner.radius - angle_between(inner.center, outer.center)
}

/// Margin of disjointness: positive iff the closed caps are disjoint.
pub fn cap_disjoint(a: &Cap, b: &Cap) -> f64 {
    angle_between(a.center, b.center) - a.radius - b.radius
}

// ---------------------------------------------------------------------------
// Regions

/// Finite union of caps.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub caps: Vec<Cap>,
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("containment not proved (best single-cap margin {best:e})")]
pub struct NotProved {
    pub best: f64,
}

impl Region {
    pub fn new(caps: Vec<Cap>) -> Result<Self, SphereError> {
        if caps.is_empty() {
            return Err(SphereError::InvalidCap("empty region".into()));
        }
        Ok(Region { caps })
    }

    pub fn single(cap: Cap) -> Self {
        Region { caps: vec![cap] }
    }

    pub fn map(&self, m: &MoebiusMap) -> Region {
        Region { caps: self.caps.iter().map(|c| map_cap(m, c)).collect() }
    }

    pub fn contains(&self, p: &SpherePoint) -> bool {
        self.caps.iter().any(|c| c.contains(p))
    }

    pub fn point_margin(&self, p: &SpherePoint) -> f64 {
        self.caps.iter().map(|c| c.point_margin(p)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Disjointness margin of two regions (minimum over cap pairs).
    pub fn disjoint_margin(&self, other: &Region) -> f64 {
        let mut m = f64::INFINITY;
        for a in &self.caps {
            for b in &other.caps {
                m = m.min(cap_disjoint(a, b));
            }
        }
        m
    }

    /// Largest deviation between a cap of one region and its nearest cap in
    /// the other; zero when both are the same cap set.
    pub fn cap_set_deviation(&self, other: &Region) -> f64 {
        let one_way = |x: &Region, y: &Region| {
            x.caps
                .iter()
                .map(|a| y.caps.iter().map(|b| a.deviation(b)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
        };
        one_way(self, other).max(one_way(other, self))
    }
}

/// Minimum over caps of `r1` of the best single-cap margin into `r2`.
///
/// A negative margin is returned (as a disproof) when `r2` is one cap, or
/// when the center of an offending cap lies outside every cap of `r2`.
/// Otherwise a cap that fits in no single cap yields `NotProved`.
pub fn region_subset_interior(r1: &Region, r2: &Region) -> Result<f64, NotProved> {
    let mut worst = f64::INFINITY;
    for inner in &r1.caps {
        let best = r2.caps.iter().map(|o| cap_subset(inner, o)).fold(f64::NEG_INFINITY, f64::max);
        if best < 0.0 && r2.caps.len() > 1 {
            let center = inner.center_point();
            let outside = r2.caps.iter().all(|o| o.point_margin(&center) < 0.0);
            if !outside {
                return Err(NotProved { best });
            }
        }
        worst = worst.min(best);
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Serialization

/// Accepted JSON shapes for a cap.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapSpec {
    Sphere {
        center: [f64; 3],
        radius_rad: f64,
        #[serde(default = "default_true")]
        closed: bool,
    },
    Circle {
        circle_center: [f64; 2],
        radius: f64,
        side: Side,
    },
    /// Closed half-plane `Re(conj(normal) z) >= offset`, including infinity.
    HalfPlane {
        normal: [f64; 2],
        offset: f64,
    },
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inside,
    Outside,
}

fn default_true() -> bool {
    true
}

impl CapSpec {
    pub fn to_cap(&self) -> Result<Cap, SphereError> {
        match self {
            CapSpec::Sphere { center, radius_rad, closed } => Cap::new(*center, *radius_rad, *closed),
            CapSpec::Circle { circle_center, radius, side } => {
                Cap::from_circle(c(circle_center[0], circle_center[1]), *radius, *side == Side::Inside)
            }
            CapSpec::HalfPlane { normal, offset } => Cap::half_plane(c(normal[0], normal[1]), *offset),
        }
    }
}

impl From<&Cap> for CapSpec {
    fn from(cap: &Cap) -> Self {
        CapSpec::Sphere { center: cap.center, radius_rad: cap.radius, closed: cap.closed }
    }
}

/// A cap or a list of caps.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RegionSpec {
    One(CapSpec),
    Many(Vec<CapSpec>),
}

impl RegionSpec {
    pub fn to_region(&self) -> Result<Region, SphereError> {
        match self {
            RegionSpec::One(c) => Ok(Region::single(c.to_cap()?)),
            RegionSpec::Many(cs) => Region::new(cs.iter().map(|c| c.to_cap()).collect::<Result<_, _>>()?),
        }
    }
}
