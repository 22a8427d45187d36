//! Poincare disk model of the hyperbolic plane (curvature -1).
//!
//! Tangent directions are stored as unit complex numbers in the standard
//! orthonormal frame `e_i = ((1 - |z|^2) / 2) d/dx_i`. Since the metric is
//! conformal, covector and vector components agree in that frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points must satisfy `|z|^2 < 1 - BOUNDARY_MARGIN`.
pub const BOUNDARY_MARGIN: f64 = 1e-12;
pub const DET_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiskPoint {
    pub u: f64,
    pub v: f64,
}

impl DiskPoint {
    pub const ORIGIN: DiskPoint = DiskPoint { u: 0.0, v: 0.0 };

    pub fn new(u: f64, v: f64) -> Result<Self> {
        let p = DiskPoint { u, v };
        p.check()?;
        Ok(p)
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }

    pub(crate) fn from_complex_unchecked(z: Complex64) -> Self {
        DiskPoint { u: z.re, v: z.im }
    }

    pub fn check(&self) -> Result<()> {
        let r2 = self.u * self.u + self.v * self.v;
        if r2.is_finite() && r2 < 1.0 - BOUNDARY_MARGIN {
            Ok(())
        } else {
            Err(Error::InvalidPoint { u: self.u, v: self.v })
        }
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u * self.u + self.v * self.v
    }

    /// Conformal factor of the metric, `ds = lambda |dz|`.
    pub fn conformal_factor(&self) -> f64 {
        2.0 / (1.0 - self.norm_sqr())
    }
}

/// Distance without validation, for inner loops over known-good points.
pub fn distance_c(z: Complex64, w: Complex64) -> f64 {
    let den = ((1.0 - z.norm_sqr()) * (1.0 - w.norm_sqr())).sqrt();
    2.0 * ((z - w).norm() / den).asinh()
}

pub fn hyp_distance(z: &DiskPoint, w: &DiskPoint) -> Result<f64> {
    z.check()?;
    w.check()?;
    Ok(distance_c(z.z(), w.z()))
}

/// Orientation-preserving isometry `z -> (a z + b) / (conj(b) z + conj(a))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    pub a: Complex64,
    pub b: Complex64,
}

impl MobiusMap {
    pub const IDENTITY: MobiusMap = MobiusMap {
        a: Complex64 { re: 1.0, im: 0.0 },
        b: Complex64 { re: 0.0, im: 0.0 },
    };

    pub fn new(a: Complex64, b: Complex64) -> Result<Self> {
        let m = MobiusMap { a, b };
        m.check()?;
        Ok(m)
    }

    /// Rotation by `theta` about the origin.
    pub fn rotation(theta: f64) -> Self {
        MobiusMap { a: Complex64::from_polar(1.0, theta / 2.0), b: Complex64::new(0.0, 0.0) }
    }

    /// The hyperbolic translation along the diameter through `p` taking 0 to `p`.
    pub fn translation_to(p: Complex64) -> Self {
        let s = 1.0 / (1.0 - p.norm_sqr()).sqrt();
        MobiusMap { a: Complex64::new(s, 0.0), b: p * s }
    }

    pub fn det(&self) -> f64 {
        self.a.norm_sqr() - self.b.norm_sqr()
    }

    pub fn check(&self) -> Result<()> {
        let d = self.det();
        if (d - 1.0).abs() < DET_TOLERANCE {
            Ok(())
        } else {
            Err(Error::Invariant(format!("Mobius determinant {d} differs from 1")))
        }
    }

    /// `self o other`, renormalized to unit determinant.
    pub fn compose(&self, other: &MobiusMap) -> MobiusMap {
        let a = self.a * other.a + self.b * other.b.conj();
        let b = self.a * other.b + self.b * other.a.conj();
        let s = (a.norm_sqr() - b.norm_sqr()).sqrt();
        MobiusMap { a: a / s, b: b / s }
    }

    pub fn inverse(&self) -> MobiusMap {
        MobiusMap { a: self.a.conj(), b: -self.b }
    }

    pub fn apply_c(&self, z: Complex64) -> Complex64 {
        (self.a * z + self.b) / (self.b.conj() * z + self.a.conj())
    }

    /// Complex derivative `1 / (conj(b) z + conj(a))^2`.
    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let d = self.b.conj() * z + self.a.conj();
        1.0 / (d * d)
    }

    /// Unit complex by which the standard frame is rotated under the map.
    pub fn frame_rotation(&self, z: Complex64) -> Complex64 {
        let d = self.derivative(z);
        d / d.norm()
    }

    /// Distance of the origin's image from the origin.
    pub fn displacement(&self) -> f64 {
        2.0 * (self.b.norm()).asinh()
    }

    /// Coefficient distance to `other`, treating `M` and `-M` as equal.
    pub fn coefficient_distance(&self, other: &MobiusMap) -> f64 {
        let plus = (self.a - other.a).norm().max((self.b - other.b).norm());
        let minus = (self.a + other.a).norm().max((self.b + other.b).norm());
        plus.min(minus)
    }
}

pub fn mobius_apply(m: &MobiusMap, z: &DiskPoint) -> Result<DiskPoint> {
    m.check()?;
    z.check()?;
    let w = DiskPoint::from_complex_unchecked(m.apply_c(z.z()));
    w.check()?;
    Ok(w)
}

/// Unit covector `dir` attached to `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub base: DiskPoint,
    pub dir: [f64; 2],
}

impl PhasePoint {
    pub fn new(base: DiskPoint, dir: [f64; 2]) -> Result<Self> {
        let p = PhasePoint { base, dir };
        p.check()?;
        Ok(p)
    }

    pub(crate) fn from_complex(z: Complex64, d: Complex64) -> Self {
        PhasePoint { base: DiskPoint::from_complex_unchecked(z), dir: [d.re, d.im] }
    }

    pub fn check(&self) -> Result<()> {
        self.base.check()?;
        let n = (self.dir[0] * self.dir[0] + self.dir[1] * self.dir[1]).sqrt();
        if (n - 1.0).abs() < 1e-10 {
            Ok(())
        } else {
            Err(Error::Invariant(format!("direction norm {n} differs from 1")))
        }
    }

    pub fn dir_c(&self) -> Complex64 {
        Complex64::new(self.dir[0], self.dir[1])
    }

    /// Isometric image `(g z, dg(dir))`.
    pub fn transformed(&self, g: &MobiusMap) -> PhasePoint {
        let z = self.base.z();
        PhasePoint::from_complex(g.apply_c(z), self.dir_c() * g.frame_rotation(z))
    }
}

/// Closed-form geodesic flow, unchecked. `d` must be a unit complex.
pub fn flow_c(z: Complex64, d: Complex64, t: f64) -> (Complex64, Complex64) {
    let w = d * (t / 2.0).tanh();
    let den = 1.0 + z.conj() * w;
    let zt = (w + z) / den;
    let dt = d / (den * den);
    (zt, dt / dt.norm())
}

/// Geodesic flow for time `t` (negative times run backwards).
///
/// The base point at `t` is the image of the radial geodesic `tanh(t/2) d`
/// under the translation taking 0 to the starting point.
pub fn geodesic_flow(rho: &PhasePoint, t: f64) -> Result<PhasePoint> {
    rho.check()?;
    let (z, d) = flow_c(rho.base.z(), rho.dir_c(), t);
    let out = PhasePoint::from_complex(z, d);
    if out.base.check().is_err() || !d.re.is_finite() {
        return Err(Error::BoundaryReached { t });
    }
    Ok(out)
}

/// Euclidean covector of the unit direction `d` at `z`.
pub fn unit_covector(z: Complex64, d: Complex64) -> Complex64 {
    d * (2.0 / (1.0 - z.norm_sqr()))
}

/// `(1 - |z|^2)^2 |P|^2 / 8 + v`, the Hamiltonian `|xi|^2 / 2 + V` in disk coordinates.
pub fn disk_hamiltonian(z: Complex64, p: Complex64, v: f64) -> f64 {
    let s = 1.0 - z.norm_sqr();
    s * s * p.norm_sqr() / 8.0 + v
}

/// Classical RK4 for the flow of `disk_hamiltonian`, with `grad_v` the Euclidean
/// gradient of the potential term.
pub fn hamiltonian_rk4<G: FnMut(Complex64) -> Result<Complex64>>(
    z: Complex64,
    p: Complex64,
    t: f64,
    steps: usize,
    mut grad_v: G,
) -> Result<(Complex64, Complex64)> {
    let mut field = |z: Complex64, p: Complex64| -> Result<(Complex64, Complex64)> {
        let s = 1.0 - z.norm_sqr();
        if !(s > 0.0) {
            return Err(Error::BoundaryReached { t });
        }
        Ok((p * (s * s / 4.0), z * (s * p.norm_sqr() / 2.0) - grad_v(z)?))
    };
    let dt = t / steps.max(1) as f64;
    let (mut z, mut p) = (z, p);
    for _ in 0..steps.max(1) {
        let (k1z, k1p) = field(z, p)?;
        let (k2z, k2p) = field(z + k1z * (dt / 2.0), p + k1p * (dt / 2.0))?;
        let (k3z, k3p) = field(z + k2z * (dt / 2.0), p + k2p * (dt / 2.0))?;
        let (k4z, k4p) = field(z + k3z * dt, p + k3p * dt)?;
        z += (k1z + 2.0 * k2z + 2.0 * k3z + k4z) * (dt / 6.0);
        p += (k1p + 2.0 * k2p + 2.0 * k3p + k4p) * (dt / 6.0);
    }
    if !(z.norm_sqr() < 1.0 - BOUNDARY_MARGIN) {
        return Err(Error::BoundaryReached { t });
    }
    Ok((z, p))
}

/// Hyperbolic translation along the geodesic from `z1` to `z2`.
pub fn transvection(z1: Complex64, z2: Complex64) -> MobiusMap {
    let to_z1 = MobiusMap::translation_to(z1);
    let w = to_z1.inverse().apply_c(z2);
    to_z1.compose(&MobiusMap::translation_to(w)).compose(&to_z1.inverse())
}

/// Parallel transport of a unit direction from `z1` to `z2` along their geodesic.
pub fn transport_direction(z1: Complex64, z2: Complex64, d: Complex64) -> Complex64 {
    d * transvection(z1, z2).frame_rotation(z1)
}

/// Sasaki-type distance `sqrt(d(x1, x2)^2 + angle^2)` on the unit tangent bundle,
/// comparing directions after parallel transport.
pub fn phase_distance(p: &PhasePoint, q: &PhasePoint) -> f64 {
    let (z1, z2) = (p.base.z(), q.base.z());
    let d = distance_c(z1, z2);
    let moved = transport_direction(z1, z2, p.dir_c());
    let angle = (q.dir_c() / moved).arg();
    (d * d + angle * angle).sqrt()
}

/// Orthonormal frame at a point, vectors given in Euclidean disk coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameChart {
    pub origin: DiskPoint,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
}

impl FrameChart {
    /// Standard frame at `origin` rotated by `angle`.
    pub fn new(origin: DiskPoint, angle: f64) -> Result<Self> {
        origin.check()?;
        let s = (1.0 - origin.norm_sqr()) / 2.0;
        let (sin, cos) = angle.sin_cos();
        Ok(FrameChart { origin, e1: [s * cos, s * sin], e2: [-s * sin, s * cos] })
    }

    pub fn from_vectors(origin: DiskPoint, e1: [f64; 2], e2: [f64; 2]) -> Result<Self> {
        let c = FrameChart { origin, e1, e2 };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        self.origin.check()?;
        let l2 = self.origin.conformal_factor().powi(2);
        let g = |a: [f64; 2], b: [f64; 2]| l2 * (a[0] * b[0] + a[1] * b[1]);
        let errs = [
            (g(self.e1, self.e1) - 1.0).abs(),
            (g(self.e2, self.e2) - 1.0).abs(),
            g(self.e1, self.e2).abs(),
        ];
        if errs.iter().all(|e| *e < 1e-10) {
            Ok(())
        } else {
            Err(Error::Invariant(format!("frame is not orthonormal: {errs:?}")))
        }
    }

    /// Angle of `e1` relative to the standard frame.
    pub fn angle(&self) -> f64 {
        self.e1[1].atan2(self.e1[0])
    }

    /// Components of a unit direction (standard frame) in this frame.
    pub fn components(&self, d: Complex64) -> [f64; 2] {
        let w = d * Complex64::from_polar(1.0, -self.angle());
        [w.re, w.im]
    }

    /// Unit direction (standard frame) with the given frame components.
    pub fn direction(&self, y: [f64; 2]) -> Complex64 {
        let w = Complex64::new(y[0], y[1]) * Complex64::from_polar(1.0, self.angle());
        w / w.norm()
    }
}

/// `exp_x(scale * (y1 e1 + y2 e2))`.
pub fn exp_frame(chart: &FrameChart, y: [f64; 2], scale: f64) -> Result<DiskPoint> {
    if !(scale > 0.0) {
        return Err(Error::Validation(format!("exp_frame scale must be positive, got {scale}")));
    }
    chart.check()?;
    let len = (y[0] * y[0] + y[1] * y[1]).sqrt();
    if len == 0.0 {
        return Ok(chart.origin);
    }
    let rho = PhasePoint::from_complex(chart.origin.z(), chart.direction(y));
    Ok(geodesic_flow(&rho, scale * len)?.base)
}
