//! Radial cutoff profiles on [0, 1], shared by the amplitude and the potential bumps.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// `(1 - s^2)^4`.
    Polynomial,
    /// 1 on `[0, flat]`, then `1 - S(u)` with `u = (s - flat) / (1 - flat)` and
    /// `S(u) = 35u^4 - 84u^5 + 70u^6 - 20u^7`, which is C^3 at both joins.
    Plateau { flat: f64 },
}

impl Default for Profile {
    fn default() -> Self {
        Profile::Polynomial
    }
}

fn smoother_step(u: f64) -> f64 {
    let u4 = u * u * u * u;
    u4 * (35.0 + u * (-84.0 + u * (70.0 - 20.0 * u)))
}

impl Profile {
    pub fn eval(&self, s: f64) -> f64 {
        let s = s.abs();
        if s >= 1.0 {
            return 0.0;
        }
        match *self {
            Profile::Polynomial => {
                let w = 1.0 - s * s;
                let w2 = w * w;
                w2 * w2
            }
            Profile::Plateau { flat } => {
                if s <= flat {
                    1.0
                } else {
                    1.0 - smoother_step((s - flat) / (1.0 - flat))
                }
            }
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            Profile::Plateau { flat } if !(0.0..1.0).contains(&flat) => Err(crate::Error::Config(
                format!("plateau fraction must lie in [0, 1), got {flat}"),
            )),
            _ => Ok(()),
        }
    }

    /// Human-readable descriptor stored alongside results.
    pub fn describe(&self) -> String {
        match *self {
            Profile::Polynomial => "(1-s^2)^4 on [0,1]".to_string(),
            Profile::Plateau { flat } => format!("1 on [0,{flat}], C^3 septic decay to 0 at s=1"),
        }
    }
}
