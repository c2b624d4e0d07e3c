use crate::error::{Error, Result};
use crate::grid::Grid;

use super::raster::rasterize;
use super::shape::CellShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Material {
    Fluid,
    Solid,
    Grain,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Fluid, Material::Solid, Material::Grain];

    pub fn name(self) -> &'static str {
        match self {
            Material::Fluid => "fluid",
            Material::Solid => "solid",
            Material::Grain => "grain",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Material::Fluid => 0,
            Material::Solid => 1,
            Material::Grain => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Material::Fluid),
            1 => Some(Material::Solid),
            2 => Some(Material::Grain),
            _ => None,
        }
    }
}

/// A face between two cells; `lo` is on the negative side along `axis`.
/// For Robin faces `area` already carries the surface-measure correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceFace {
    pub lo: usize,
    pub hi: usize,
    pub axis: usize,
    pub area: f64,
}

/// Box `[0, L_1] x .. x [0, L_{d-1}] x [-H, H]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainExtent {
    pub lateral: [f64; 2],
    pub half_height: f64,
}

impl DomainExtent {
    pub fn new(lateral: &[f64], half_height: f64) -> Self {
        let mut l = [1.0; 2];
        l[..lateral.len()].copy_from_slice(lateral);
        DomainExtent { lateral: l, half_height }
    }
}

/// Material tags on a Cartesian grid with the interface face lists.
#[derive(Debug, Clone)]
pub struct DomainLabels {
    pub grid: Grid,
    pub labels: Vec<Material>,
    /// Fluid|solid contact faces.
    pub sigma0: Vec<InterfaceFace>,
    /// Fluid|grain faces.
    pub sigma_f: Vec<InterfaceFace>,
    /// Solid|grain faces.
    pub sigma_s: Vec<InterfaceFace>,
    /// The flat plane `x_d = 0` of a grain-free layered domain.
    pub sigma: Vec<InterfaceFace>,
}

impl DomainLabels {
    pub fn count(&self, m: Material) -> usize {
        self.labels.iter().filter(|&&l| l == m).count()
    }

    pub fn volume(&self, m: Material) -> f64 {
        self.count(m) as f64 * self.grid.cell_volume()
    }

    pub fn mask(&self, m: Material) -> Vec<bool> {
        self.labels.iter().map(|&l| l == m).collect()
    }
}

fn as_multiple(x: f64, unit: f64) -> Option<usize> {
    let k = (x / unit).round();
    if k >= 1.0 && (k * unit - x).abs() <= 1e-9 * x.abs().max(unit) {
        Some(k as usize)
    } else {
        None
    }
}

fn suggest_spacing(eps: f64, h: f64, half_height: f64) -> f64 {
    let start = ((eps / h) - 1e-9).ceil().max(8.0) as usize;
    (start..start + 10_000)
        .map(|m| eps / m as f64)
        .find(|&hh| as_multiple(half_height, hh).is_some())
        .unwrap_or(eps / 8.0)
}

/// Tiles the rasterized reference grain along `x_d = 0` with period `eps`.
///
/// Requires `eps / h` to be an integer of at least 8, the lateral extent to be a whole
/// number of periods, and `H / h` to be an integer.
pub fn build_perforated_domain(
    shape: &CellShape,
    eps: f64,
    extent: &DomainExtent,
    h: f64,
    lateral_periodic: bool,
) -> Result<DomainLabels> {
    shape.validate()?;
    let d = shape.dim();
    let misaligned = |msg: String| Error::Misaligned { msg, suggested_h: suggest_spacing(eps, h, extent.half_height) };
    if !(eps > 0.0 && h > 0.0) {
        return Err(Error::Config(format!("non-positive eps {eps} or spacing {h}")));
    }
    let m = as_multiple(eps, h).ok_or_else(|| misaligned(format!("spacing {h} does not divide eps {eps}")))?;
    if m < 8 {
        return Err(misaligned(format!("only {m} cells per grain period (need 8)")));
    }
    if extent.half_height < eps {
        return Err(Error::Config(format!("half height {} smaller than eps {eps}", extent.half_height)));
    }
    let nh = as_multiple(extent.half_height, h)
        .ok_or_else(|| misaligned(format!("spacing {h} does not divide half height {}", extent.half_height)))?;
    let mut dims = [1usize; 3];
    let mut spacing = [h; 3];
    let mut origin = [0.0; 3];
    let mut periodic = [false; 3];
    for a in 0..d - 1 {
        let tiles = as_multiple(extent.lateral[a], eps).ok_or_else(|| {
            Error::Misaligned {
                msg: format!("eps {eps} does not divide lateral extent {}", extent.lateral[a]),
                suggested_h: h,
            }
        })?;
        dims[a] = tiles * m;
        periodic[a] = lateral_periodic;
    }
    dims[d - 1] = 2 * nh;
    origin[d - 1] = -extent.half_height;
    spacing[d - 1] = h;
    let grid = Grid::new(d, dims, spacing, origin, periodic);

    let raster = rasterize(shape, m)?;
    let band_lo = nh - m;
    let vert = d - 1;
    let labels: Vec<Material> = (0..grid.ncells())
        .map(|c| {
            let i = grid.coords(c);
            let iv = i[vert];
            if iv >= band_lo && iv < band_lo + 2 * m {
                let mut r = [0usize; 3];
                for a in 0..vert {
                    r[a] = i[a] % m;
                }
                r[vert] = iv - band_lo;
                if raster.inside[raster.grid.index(r)] {
                    return Material::Grain;
                }
            }
            if iv >= nh {
                Material::Fluid
            } else {
                Material::Solid
            }
        })
        .collect();

    let mut out = DomainLabels {
        grid: grid.clone(),
        labels,
        sigma0: Vec::new(),
        sigma_f: Vec::new(),
        sigma_s: Vec::new(),
        sigma: Vec::new(),
    };
    let area = |axis: usize| grid.face_area(axis);
    grid.for_each_face(|lo, hi, axis| {
        use Material::*;
        let pair = (out.labels[lo], out.labels[hi]);
        let face = |a: f64| InterfaceFace { lo, hi, axis, area: a };
        match pair {
            (Fluid, Solid) | (Solid, Fluid) => out.sigma0.push(face(area(axis))),
            (Grain, Fluid) | (Fluid, Grain) => out.sigma_f.push(face(area(axis) * raster.correction_upper)),
            (Grain, Solid) | (Solid, Grain) => out.sigma_s.push(face(area(axis) * raster.correction_lower)),
            _ => {}
        }
    });
    Ok(out)
}

/// Grain-free two-material box: fluid above `x_d = 0`, solid below, with the plane
/// `x_d = 0` listed in `sigma` (`lo` = solid cell, `hi` = fluid cell).
pub fn build_layered_domain(d: usize, extent: &DomainExtent, h: f64, lateral_periodic: bool) -> Result<DomainLabels> {
    if !(1..=3).contains(&d) {
        return Err(Error::Config(format!("dimension {d} not in 1..=3")));
    }
    let nh = as_multiple(extent.half_height, h).ok_or_else(|| Error::Misaligned {
        msg: format!("spacing {h} does not divide half height {}", extent.half_height),
        suggested_h: extent.half_height / (extent.half_height / h).ceil(),
    })?;
    let mut dims = [1usize; 3];
    let mut origin = [0.0; 3];
    let mut periodic = [false; 3];
    for a in 0..d - 1 {
        dims[a] = as_multiple(extent.lateral[a], h).ok_or_else(|| Error::Misaligned {
            msg: format!("spacing {h} does not divide lateral extent {}", extent.lateral[a]),
            suggested_h: extent.lateral[a] / (extent.lateral[a] / h).ceil(),
        })?;
        periodic[a] = lateral_periodic;
    }
    dims[d - 1] = 2 * nh;
    origin[d - 1] = -extent.half_height;
    let grid = Grid::new(d, dims, [h; 3], origin, periodic);
    let vert = d - 1;
    let labels: Vec<Material> = (0..grid.ncells())
        .map(|c| if grid.coords(c)[vert] >= nh { Material::Fluid } else { Material::Solid })
        .collect();
    let area = grid.face_area(vert);
    let sigma = (0..grid.ncells())
        .filter(|&c| grid.coords(c)[vert] == nh - 1)
        .map(|c| InterfaceFace { lo: c, hi: grid.neighbor(c, vert, 1).unwrap(), axis: vert, area })
        .collect();
    Ok(DomainLabels { grid, labels, sigma0: Vec::new(), sigma_f: Vec::new(), sigma_s: Vec::new(), sigma })
}
