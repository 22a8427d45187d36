//! The initial monochromatic Lagrangian state `a0 e^{i B / h}`.
//!
//! The phase is the Busemann function of an ideal point `p`,
//! `B(z) = log(|p - z|^2 / (1 - |z|^2))`, normalized by `B(0) = 0`. Its graph is
//! a leaf of the weak-unstable foliation, and `|grad B| = 1`, `Laplacian B = 1`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_c, DiskPoint, PhasePoint};
use crate::profile::Profile;
use crate::quad::simpson_doubling;
use crate::surface::INRADIUS;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagrangianState {
    /// Ideal point on the unit circle.
    pub boundary_point: [f64; 2],
    pub amplitude_center: DiskPoint,
    pub amplitude_radius: f64,
    /// L2 norm of `a0` over the surface.
    pub amplitude_norm: f64,
    pub profile: Profile,
}

impl LagrangianState {
    pub fn new(boundary_angle: f64, center: DiskPoint, radius: f64, profile: Profile) -> Result<Self> {
        center.check()?;
        profile.validate()?;
        if !(radius > 0.0) {
            return Err(Error::Config(format!("amplitude radius must be positive, got {radius}")));
        }
        // The Dirichlet domain contains the ball of radius INRADIUS about 0.
        let reach = distance_c(Complex64::new(0.0, 0.0), center.z()) + radius;
        if reach >= INRADIUS {
            return Err(Error::Config(format!(
                "amplitude support reaches distance {reach:.4} from 0, it must stay below {INRADIUS:.4}"
            )));
        }
        let norm2 = simpson_doubling(
            |r: f64| profile.eval(r / radius).powi(2) * r.sinh(),
            0.0,
            radius,
            64,
            1e-15,
            1 << 22,
        )?
        .value
            * std::f64::consts::TAU;
        Ok(LagrangianState {
            boundary_point: [boundary_angle.cos(), boundary_angle.sin()],
            amplitude_center: center,
            amplitude_radius: radius,
            amplitude_norm: norm2.sqrt(),
            profile,
        })
    }

    /// Default state: ideal point at angle 0.3, bump of radius `0.25 r_I` at the origin.
    pub fn default_state() -> Self {
        Self::new(0.3, DiskPoint::ORIGIN, 0.25 * INRADIUS, Profile::Polynomial)
            .expect("default state is valid")
    }

    pub fn p(&self) -> Complex64 {
        Complex64::new(self.boundary_point[0], self.boundary_point[1])
    }

    pub fn busemann_c(&self, z: Complex64) -> f64 {
        ((self.p() - z).norm_sqr() / (1.0 - z.norm_sqr())).ln()
    }

    pub fn busemann(&self, x: &DiskPoint) -> f64 {
        self.busemann_c(x.z())
    }

    /// Euclidean gradient of `B`.
    pub fn busemann_gradient_euclidean(&self, z: Complex64) -> Complex64 {
        let d = z - self.p();
        2.0 * d / d.norm_sqr() + 2.0 * z / (1.0 - z.norm_sqr())
    }

    /// Unit direction of `grad B` in the standard frame; it points away from `p`.
    pub fn gradient_dir_c(&self, z: Complex64) -> Complex64 {
        let g = self.busemann_gradient_euclidean(z);
        g / g.norm()
    }

    /// The point `(x, dB(x))` of the Lagrangian graph.
    pub fn lagrangian_point(&self, x: &DiskPoint) -> PhasePoint {
        let d = self.gradient_dir_c(x.z());
        PhasePoint { base: *x, dir: [d.re, d.im] }
    }

    pub fn amplitude_c(&self, z: Complex64) -> f64 {
        self.profile.eval(distance_c(self.amplitude_center.z(), z) / self.amplitude_radius)
    }

    pub fn amplitude_a0(&self, x: &DiskPoint) -> f64 {
        self.amplitude_c(x.z())
    }

    pub fn in_support_c(&self, z: Complex64) -> bool {
        distance_c(self.amplitude_center.z(), z) < self.amplitude_radius
    }
}
