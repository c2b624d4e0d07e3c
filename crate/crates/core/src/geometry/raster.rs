use crate::error::{Error, Result};
use crate::grid::Grid;

use super::shape::{exact_measures, CellShape, GeometryMeasures};

/// Where a grain boundary face sits in the reference cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Between an inside and an outside voxel.
    Staircase,
    /// On the top or bottom wall of the reference box (`y_d = ±1`).
    Cap,
}

/// One face of the voxelized grain boundary, seen from the inside cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub axis: usize,
    /// +1 if the face lies on the positive side of `cell` along `axis`.
    pub side: i8,
    pub kind: FaceKind,
    /// Face belongs to `Γ^f` (upper half); otherwise `Γ^s`.
    pub upper: bool,
}

/// Voxelization of a reference grain on a grid with `n` cells per unit length.
///
/// The grid covers `Y^{d-1} x (-1, 1)` with `n^{d-1} x 2n` cells and is periodic in the
/// lateral directions. Staircase surface measure is rescaled by one factor per side so
/// that the corrected upper (lower) boundary measure equals `|Γ^f|` (`|Γ^s|`).
#[derive(Debug, Clone)]
pub struct RasterMask {
    pub shape: CellShape,
    pub resolution: usize,
    pub grid: Grid,
    pub inside: Vec<bool>,
    pub faces: Vec<BoundaryFace>,
    pub correction_upper: f64,
    pub correction_lower: f64,
    pub measures: GeometryMeasures,
}

impl RasterMask {
    pub fn dim(&self) -> usize {
        self.grid.d
    }

    /// Uncorrected area of one voxel face.
    pub fn raw_face_area(&self) -> f64 {
        (1.0 / self.resolution as f64).powi(self.grid.d as i32 - 1)
    }

    pub fn correction(&self, upper: bool) -> f64 {
        if upper {
            self.correction_upper
        } else {
            self.correction_lower
        }
    }

    /// Corrected area of a boundary face.
    pub fn face_area(&self, face: &BoundaryFace) -> f64 {
        self.raw_face_area() * self.correction(face.upper)
    }

    pub fn inside_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Total volume of the inside voxels.
    pub fn raster_volume(&self) -> f64 {
        self.inside_count() as f64 * self.grid.cell_volume()
    }

    /// Corrected measure of the upper or lower boundary.
    pub fn corrected_measure(&self, upper: bool) -> f64 {
        self.faces
            .iter()
            .filter(|f| f.upper == upper)
            .map(|f| self.face_area(f))
            .sum()
    }

    pub fn staircase_faces(&self) -> impl Iterator<Item = &BoundaryFace> {
        self.faces.iter().filter(|f| f.kind == FaceKind::Staircase)
    }
}

/// Voxelizes `shape` with `n` cells per unit length; a cell is inside when its centre is.
pub fn rasterize(shape: &CellShape, n: usize) -> Result<RasterMask> {
    let measures = exact_measures(shape)?;
    if n < 8 {
        return Err(Error::Config(format!("raster resolution {n} below minimum of 8")));
    }
    let d = shape.dim();
    let grid = reference_grid(d, n);
    let vert = d - 1;

    let mut inside = vec![false; grid.ncells()];
    let mut y = [0.0; 3];
    for (c, slot) in inside.iter_mut().enumerate() {
        let x = grid.center(c);
        y[..d].copy_from_slice(&x[..d]);
        *slot = shape.contains(&y[..d]);
    }

    let h = 1.0 / n as f64;
    let mut faces = Vec::new();
    for c in 0..grid.ncells() {
        if !inside[c] {
            continue;
        }
        let yc = grid.center(c)[vert];
        for axis in 0..d {
            for side in [-1i8, 1] {
                let nb = grid.neighbor(c, axis, side as isize);
                let kind = match nb {
                    None => FaceKind::Cap,
                    Some(o) if !inside[o] => FaceKind::Staircase,
                    Some(_) => continue,
                };
                let face_y = if axis == vert { yc + 0.5 * h * side as f64 } else { yc };
                let upper = if face_y == 0.0 { side > 0 } else { face_y > 0.0 };
                faces.push(BoundaryFace { cell: c, axis, side, kind, upper });
            }
        }
    }

    if inside.iter().all(|&b| !b) {
        return Err(Error::InvalidShape(format!("{shape} not resolved at n = {n}")));
    }
    let raw = h.powi(d as i32 - 1);
    let count = |upper: bool| faces.iter().filter(|f| f.upper == upper).count();
    let (nu, nl) = (count(true), count(false));
    if nu == 0 || nl == 0 {
        return Err(Error::InvalidShape(format!("{shape} has an empty boundary side at n = {n}")));
    }
    Ok(RasterMask {
        shape: *shape,
        resolution: n,
        grid,
        inside,
        faces,
        correction_upper: measures.gamma_f / (nu as f64 * raw),
        correction_lower: measures.gamma_s / (nl as f64 * raw),
        measures,
    })
}

/// Grid over `Y^{d-1} x (-1, 1)`, periodic laterally.
pub(crate) fn reference_grid(d: usize, n: usize) -> Grid {
    let h = 1.0 / n as f64;
    let mut dims = [1usize; 3];
    let mut spacing = [1.0; 3];
    let mut origin = [0.0; 3];
    let mut periodic = [false; 3];
    for a in 0..d {
        spacing[a] = h;
        if a + 1 == d {
            dims[a] = 2 * n;
            origin[a] = -1.0;
        } else {
            dims[a] = n;
            periodic[a] = true;
        }
    }
    Grid::new(d, dims, spacing, origin, periodic)
}
