use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Reference grain `Z` inside `Y^{d-1} x (-1, 1)`, centred at `(1/2, .., 1/2, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellShape {
    /// Disconnected disc of radius `r` (d = 2).
    Disc2D { r: f64 },
    /// Disconnected ball of radius `r` (d = 3).
    Sphere3D { r: f64 },
    /// Ball of radius `r` joined to its periodic neighbours by cylinders of radius `r_c`
    /// running along `e_1` and `e_2` through the centre (d = 3).
    ConnectedSphereCylinders3D { r: f64, r_c: f64 },
    /// The whole reference slab `Y^{d-1} x (-1, 1)`.
    FullCell { d: usize },
    /// Horizontal slab `Y^{d-1} x (-w/2, w/2)`.
    Slab { d: usize, w: f64 },
}

/// Exact measures of the reference grain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryMeasures {
    pub vol_z: f64,
    /// Upper boundary `Γ^f` (facing the fluid).
    pub gamma_f: f64,
    /// Lower boundary `Γ^s` (facing the solid).
    pub gamma_s: f64,
    /// Flat fluid/solid contact region `Γ^0` of the reference cell.
    pub gamma_0: f64,
}

impl CellShape {
    pub fn dim(&self) -> usize {
        match *self {
            CellShape::Disc2D { .. } => 2,
            CellShape::Sphere3D { .. } | CellShape::ConnectedSphereCylinders3D { .. } => 3,
            CellShape::FullCell { d } | CellShape::Slab { d, .. } => d,
        }
    }

    /// Shapes whose grain layer is connected across cells (the connected-sieve case).
    pub fn is_connected(&self) -> bool {
        matches!(
            self,
            CellShape::ConnectedSphereCylinders3D { .. } | CellShape::FullCell { .. } | CellShape::Slab { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidShape(m));
        match *self {
            CellShape::Disc2D { r } | CellShape::Sphere3D { r } => {
                if !(r > 0.0 && r < 0.5) {
                    return bad(format!("radius {r} must lie in (0, 0.5)"));
                }
            }
            CellShape::ConnectedSphereCylinders3D { r, r_c } => {
                if !(r > 0.0 && r < 0.5) {
                    return bad(format!("radius {r} must lie in (0, 0.5)"));
                }
                if !(r_c > 0.0 && r_c < r) {
                    return bad(format!("connector radius {r_c} must lie in (0, r)"));
                }
                // the two connectors must cross inside the ball
                if r_c * std::f64::consts::SQRT_2 > r {
                    return bad(format!("connector radius {r_c} exceeds r/sqrt(2)"));
                }
            }
            CellShape::FullCell { d } => {
                if !(1..=3).contains(&d) {
                    return bad(format!("dimension {d} not in 1..=3"));
                }
            }
            CellShape::Slab { d, w } => {
                if !(1..=3).contains(&d) {
                    return bad(format!("dimension {d} not in 1..=3"));
                }
                if !(w > 0.0 && w <= 2.0) {
                    return bad(format!("slab thickness {w} must lie in (0, 2]"));
                }
            }
        }
        Ok(())
    }

    /// Membership test in reference coordinates; points on the boundary count as inside.
    pub fn contains(&self, y: &[f64]) -> bool {
        match *self {
            CellShape::Disc2D { r } => sq(y[0] - 0.5) + sq(y[1]) <= r * r,
            CellShape::Sphere3D { r } => sq(y[0] - 0.5) + sq(y[1] - 0.5) + sq(y[2]) <= r * r,
            CellShape::ConnectedSphereCylinders3D { r, r_c } => {
                let (a, b, c) = (y[0] - 0.5, y[1] - 0.5, y[2]);
                a * a + b * b + c * c <= r * r || b * b + c * c <= r_c * r_c || a * a + c * c <= r_c * r_c
            }
            CellShape::FullCell { d } => y[d - 1].abs() <= 1.0,
            CellShape::Slab { d, w } => y[d - 1].abs() <= 0.5 * w,
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// Closed-form measures of the reference grain.
pub fn exact_measures(shape: &CellShape) -> Result<GeometryMeasures> {
    shape.validate()?;
    let m = match *shape {
        CellShape::Disc2D { r } => GeometryMeasures {
            vol_z: PI * r * r,
            gamma_f: PI * r,
            gamma_s: PI * r,
            gamma_0: 1.0 - 2.0 * r,
        },
        CellShape::Sphere3D { r } => GeometryMeasures {
            vol_z: 4.0 / 3.0 * PI * r.powi(3),
            gamma_f: 2.0 * PI * r * r,
            gamma_s: 2.0 * PI * r * r,
            gamma_0: 1.0 - PI * r * r,
        },
        CellShape::ConnectedSphereCylinders3D { r, r_c } => {
            // connector axis leaves the ball at distance s0 from the centre
            let s0 = (r * r - r_c * r_c).sqrt();
            let cap_height = r - s0;
            // volume of one connector that lies inside the ball
            let inside = PI * (2.0 * r_c * r_c * s0 + 2.0 * (r * r * (r - s0) - (r.powi(3) - s0.powi(3)) / 3.0));
            let vol = 4.0 / 3.0 * PI * r.powi(3) + 2.0 * (PI * r_c * r_c - inside);
            let area = 4.0 * PI * r * r - 4.0 * 2.0 * PI * r * cap_height + 2.0 * 2.0 * PI * r_c * (1.0 - 2.0 * s0);
            // strip of half-width r_c clipped by the disc of radius r
            let strip_in_disc = 2.0 * (r_c * s0 + r * r * (r_c / r).asin());
            let cross = PI * r * r + 2.0 * (2.0 * r_c - strip_in_disc);
            GeometryMeasures {
                vol_z: vol,
                gamma_f: 0.5 * area,
                gamma_s: 0.5 * area,
                gamma_0: 1.0 - cross,
            }
        }
        CellShape::FullCell { .. } => GeometryMeasures {
            vol_z: 2.0,
            gamma_f: 1.0,
            gamma_s: 1.0,
            gamma_0: 0.0,
        },
        CellShape::Slab { w, .. } => GeometryMeasures {
            vol_z: w,
            gamma_f: 1.0,
            gamma_s: 1.0,
            gamma_0: 0.0,
        },
    };
    Ok(m)
}

impl fmt::Display for CellShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CellShape::Disc2D { r } => write!(f, "disc(r={r})"),
            CellShape::Sphere3D { r } => write!(f, "sphere(r={r})"),
            CellShape::ConnectedSphereCylinders3D { r, r_c } => write!(f, "connected(r={r}, r_c={r_c})"),
            CellShape::FullCell { d } => write!(f, "full(d={d})"),
            CellShape::Slab { d, w } => write!(f, "slab(d={d}, w={w})"),
        }
    }
}

/// Shape keyword used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Disc,
    Sphere,
    Connected,
    Full,
    Slab,
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "disc" => ShapeKind::Disc,
            "sphere" => ShapeKind::Sphere,
            "connected" => ShapeKind::Connected,
            "full" => ShapeKind::Full,
            "slab" => ShapeKind::Slab,
            other => return Err(Error::Config(format!("unknown shape '{other}'"))),
        })
    }
}
