//! Cell-centred finite volumes on Cartesian grids: operator assembly, implicit time
//! stepping, and Krylov solvers.

mod assemble;
mod norms;
mod solver;
mod sparse;
mod stepping;

pub use assemble::{
    assemble_advection, assemble_diffusion, BoundaryCondition, ConductivityMap, LayerShear, OuterBoundary,
    Stagnant, TransmissionRule, TransmissionSpec, UniformFlow, VelocityField,
};
pub use norms::{diff_norm, jump_norm, norm, NormKind};
pub use solver::{solve_linear, solve_with_guess, Method, SolveStats, SolverConfig};
pub use sparse::{BoundaryTerms, CsrMatrix, SparseSystem, TripletBuilder};
pub use stepping::{backward_euler_step, ImplicitStepper};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform Cartesian cell grid in up to three dimensions.
///
/// Axis `d - 1` is the vertical direction; unused axes have one cell. Cell indices run
/// fastest along axis 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub periodic: [bool; 3],
}

impl Grid {
    pub fn new(d: usize, dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], periodic: [bool; 3]) -> Self {
        assert!((1..=3).contains(&d));
        let mut g = Grid { d, dims, spacing, origin, periodic };
        for a in d..3 {
            g.dims[a] = 1;
            g.spacing[a] = 1.0;
            g.origin[a] = 0.0;
            g.periodic[a] = false;
        }
        g
    }

    pub fn vertical(&self) -> usize {
        self.d - 1
    }

    pub fn ncells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn index(&self, i: [usize; 3]) -> usize {
        i[0] + self.dims[0] * (i[1] + self.dims[1] * i[2])
    }

    #[inline]
    pub fn coords(&self, c: usize) -> [usize; 3] {
        let i0 = c % self.dims[0];
        let r = c / self.dims[0];
        [i0, r % self.dims[1], r / self.dims[1]]
    }

    #[inline]
    pub fn center(&self, c: usize) -> [f64; 3] {
        let i = self.coords(c);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = self.origin[a] + (i[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.d).map(|a| self.spacing[a]).product()
    }

    /// Area of a face normal to `axis` (1 in one dimension).
    pub fn face_area(&self, axis: usize) -> f64 {
        (0..self.d).filter(|&a| a != axis).map(|a| self.spacing[a]).product()
    }

    pub fn extent(&self, axis: usize) -> (f64, f64) {
        let lo = self.origin[axis];
        (lo, lo + self.dims[axis] as f64 * self.spacing[axis])
    }

    pub fn domain_volume(&self) -> f64 {
        self.cell_volume() * self.ncells() as f64
    }

    /// Neighbour across the face on `side` (±1) along `axis`, wrapping periodic axes.
    #[inline]
    pub fn neighbor(&self, c: usize, axis: usize, side: isize) -> Option<usize> {
        let mut i = self.coords(c);
        let n = self.dims[axis];
        let j = i[axis] as isize + side;
        if j < 0 || j >= n as isize {
            if !self.periodic[axis] || n == 1 {
                return None;
            }
            i[axis] = j.rem_euclid(n as isize) as usize;
        } else {
            i[axis] = j as usize;
        }
        Some(self.index(i))
    }

    /// Calls `f(lo, hi, axis)` once for every interior face, `lo` being the cell on the
    /// negative side. Periodic wrap faces are included.
    pub fn for_each_face(&self, mut f: impl FnMut(usize, usize, usize)) {
        for axis in 0..self.d {
            let n = self.dims[axis];
            let wrap = self.periodic[axis] && n > 1;
            for c in 0..self.ncells() {
                let i = self.coords(c);
                if i[axis] + 1 < n {
                    let mut j = i;
                    j[axis] += 1;
                    f(c, self.index(j), axis);
                } else if wrap {
                    let mut j = i;
                    j[axis] = 0;
                    f(c, self.index(j), axis);
                }
            }
        }
    }

    /// Cells touching the outer wall on `side` of `axis`.
    pub fn boundary_cells(&self, axis: usize, side: isize) -> Vec<usize> {
        let n = self.dims[axis];
        let target = if side < 0 { 0 } else { n - 1 };
        (0..self.ncells()).filter(|&c| self.coords(c)[axis] == target).collect()
    }

    /// Cell containing the point `x` (clamped to the grid).
    pub fn locate(&self, x: &[f64]) -> usize {
        let mut i = [0usize; 3];
        for a in 0..self.d {
            let t = ((x[a] - self.origin[a]) / self.spacing[a]).floor();
            i[a] = (t.max(0.0) as usize).min(self.dims[a] - 1);
        }
        self.index(i)
    }
}

/// Scalar unknown with one value per cell (or per interface face).
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    pub values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(values: Vec<T>) -> Self {
        Field { values }
    }

    pub fn constant(n: usize, v: T) -> Self {
        Field { values: vec![v; n] }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, T::zero())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.values.len() != expected {
            return Err(Error::GridMismatch { expected, found: self.values.len() });
        }
        Ok(())
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}
