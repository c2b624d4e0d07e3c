//! Physical parameters shared by the resolved and homogenized models.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::GeometryMeasures;
use crate::grid::{LayerShear, Stagnant, VelocityField};

/// Grain-layer regime: disconnected grains (a) or a connected sieve (b).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    A,
    B,
}

impl Case {
    /// Exponent in the grain conductivity scaling `ε^{2γ} κ^g`.
    pub fn gamma(self) -> f64 {
        match self {
            Case::A => 0.5,
            Case::B => -0.5,
        }
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            other => Err(Error::Config(format!("unknown case '{other}' (expected a|b)"))),
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::A => "a",
            Case::B => "b",
        })
    }
}

/// Volumetric heat source, W/m³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceProfile {
    Uniform(f64),
    /// `value` where the lateral distance to `center` is at most `radius`, zero elsewhere.
    /// In 2D the distance is `|x₁ − c₁|`; in 3D it is the radius in the `(x₁, x₂)` plane.
    Disc { value: f64, radius: f64, center: [f64; 2] },
    /// `mean + amplitude · cos(2π x₁)`.
    Cosine { mean: f64, amplitude: f64 },
}

impl SourceProfile {
    pub fn zero() -> Self {
        SourceProfile::Uniform(0.0)
    }

    /// The circular-support profile centred at ½ with radius 0.3.
    pub fn standard_disc(value: f64) -> Self {
        SourceProfile::Disc { value, radius: 0.3, center: [0.5, 0.5] }
    }

    pub fn eval(&self, x: &[f64], d: usize) -> f64 {
        match *self {
            SourceProfile::Uniform(v) => v,
            SourceProfile::Disc { value, radius, center } => {
                let r = match d {
                    1 => 0.0,
                    2 => (x[0] - center[0]).abs(),
                    _ => ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)).sqrt(),
                };
                if r <= radius {
                    value
                } else {
                    0.0
                }
            }
            SourceProfile::Cosine { mean, amplitude } => {
                if d == 1 {
                    mean
                } else {
                    mean + amplitude * (2.0 * std::f64::consts::PI * x[0]).cos()
                }
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, SourceProfile::Uniform(_))
    }

    pub fn is_nonnegative(&self) -> bool {
        match *self {
            SourceProfile::Uniform(v) => v >= 0.0,
            SourceProfile::Disc { value, .. } => value >= 0.0,
            SourceProfile::Cosine { mean, amplitude } => mean >= amplitude.abs(),
        }
    }
}

/// Prescribed fluid velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocitySpec {
    Off,
    /// Horizontal shear `(c(x_d) U, 0, 0)` with a cutoff of width ε above the layer.
    Shear { speed: f64 },
}

impl VelocitySpec {
    pub fn is_off(&self) -> bool {
        match *self {
            VelocitySpec::Off => true,
            VelocitySpec::Shear { speed } => speed == 0.0,
        }
    }

    /// Velocity sampler; `eps` sets the cutoff width.
    pub fn field(&self, eps: f64, d: usize) -> Box<dyn VelocityField> {
        match *self {
            VelocitySpec::Off => Box::new(Stagnant),
            VelocitySpec::Shear { speed } => Box::new(LayerShear { speed, eps, d }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub kappa_f: f64,
    pub kappa_s: f64,
    pub kappa_g: f64,
    pub rho_c_f: f64,
    pub rho_c_s: f64,
    pub rho_c_g: f64,
    pub alpha_f: f64,
    pub alpha_s: f64,
    pub f_f: SourceProfile,
    pub f_s: SourceProfile,
    pub f_g: SourceProfile,
    pub case: Case,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            kappa_f: 0.1,
            kappa_s: 1.0,
            kappa_g: 2.0,
            rho_c_f: 1.0,
            rho_c_s: 1.0,
            rho_c_g: 1.0,
            alpha_f: 1.0,
            alpha_s: 1.0,
            f_f: SourceProfile::zero(),
            f_s: SourceProfile::zero(),
            f_g: SourceProfile::Uniform(1.0),
            case: Case::A,
        }
    }
}

impl PhysicalParams {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_f = alpha;
        self.alpha_s = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kappa_f", self.kappa_f),
            ("kappa_s", self.kappa_s),
            ("kappa_g", self.kappa_g),
            ("rho_c_f", self.rho_c_f),
            ("rho_c_s", self.rho_c_s),
            ("rho_c_g", self.rho_c_g),
            ("alpha_f", self.alpha_f),
            ("alpha_s", self.alpha_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Total interfacial exchange `α^f |Γ^f| + α^s |Γ^s|`.
    pub fn alpha_tilde(&self, m: &GeometryMeasures) -> f64 {
        self.alpha_f * m.gamma_f + self.alpha_s * m.gamma_s
    }
}
