//! Unit-cell problems on the reference grain: correctors for the effective
//! conductivity and the transient grain heat equation driven by a macro trace.

use crate::error::{Error, Result};
use crate::geometry::{rasterize, CellShape, GeometryMeasures, RasterMask};
use crate::grid::{solve_with_guess, CsrMatrix, Field, Grid, Method, SolverConfig, TripletBuilder};
use crate::params::PhysicalParams;
use crate::scalar::Real;

/// Default cells per unit length of the reference cell.
pub const DEFAULT_CELL_RESOLUTION: usize = 64;

/// Ratio `κ_void / κ^g` of the ersatz material outside the grain.
pub const DEFAULT_VOID_RATIO: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct EffectiveConductivity {
    pub d: usize,
    /// `κ̃`, W/(mK); rows and columns beyond `d` and the vertical ones are zero.
    pub tensor: [[f64; 3]; 3],
    /// Zero-mean correctors `ψ_i` on the reference grid, `i < d − 1`.
    pub psi: Vec<Field<f64>>,
    pub measures: GeometryMeasures,
    pub raster: RasterMask,
    pub solver_iterations: Vec<usize>,
}

impl EffectiveConductivity {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.tensor[i][j]
    }
}

/// Options for [`solve_psi_with`].
#[derive(Debug, Clone, Copy)]
pub struct PsiOptions {
    pub kappa_g: f64,
    pub void_ratio: f64,
    pub solver: SolverConfig,
}

impl Default for PsiOptions {
    fn default() -> Self {
        PsiOptions {
            kappa_g: 1.0,
            void_ratio: DEFAULT_VOID_RATIO,
            solver: SolverConfig { method: Method::Cg, max_iter: 200_000, project_nullspace: true, ..Default::default() },
        }
    }
}

/// Effective conductivity of a connected grain layer with `κ^g = 1`.
pub fn solve_psi(shape: &CellShape, n: usize) -> Result<EffectiveConductivity> {
    solve_psi_with(shape, n, &PsiOptions::default())
}

/// Solves the periodic corrector problems with an ersatz material outside the grain and
/// evaluates `κ̃_ij = Σ_faces κ^g (δ_ai + ∂_a ψ_i)(δ_aj + ∂_a ψ_j)` over inside-inside faces.
pub fn solve_psi_with(shape: &CellShape, n: usize, opts: &PsiOptions) -> Result<EffectiveConductivity> {
    match shape {
        CellShape::Disc2D { .. } | CellShape::Sphere3D { .. } => {
            return Err(Error::UnsupportedShape(format!("{shape} is not a connected layer")));
        }
        _ => {}
    }
    if n < 16 {
        return Err(Error::Config(format!("corrector resolution {n} below minimum of 16")));
    }
    if !(opts.kappa_g > 0.0 && opts.void_ratio > 0.0 && opts.void_ratio < 1.0) {
        return Err(Error::Config("corrector needs κ^g > 0 and a void ratio in (0, 1)".into()));
    }
    let raster = rasterize(shape, n)?;
    let components = inside_components(&raster.grid, &raster.inside);
    if components != 1 {
        return Err(Error::Disconnected { components });
    }
    let grid = &raster.grid;
    let d = grid.d;
    let kg = opts.kappa_g;
    let kv = opts.void_ratio * kg;
    let kappa = |c: usize| if raster.inside[c] { kg } else { kv };

    let nc = grid.ncells();
    let mut b = TripletBuilder::with_capacity(nc, 2 * d * nc + nc);
    grid.for_each_face(|lo, hi, axis| {
        let (a, c) = (kappa(lo), kappa(hi));
        b.couple(lo, hi, 2.0 * a * c / (a + c) * grid.face_area(axis) / grid.spacing[axis]);
    });
    let matrix = b.build();

    let mut psi = Vec::new();
    let mut iterations = Vec::new();
    for i in 0..d - 1 {
        let mut rhs = vec![0.0; nc];
        grid.for_each_face(|lo, hi, axis| {
            if axis == i {
                let (a, c) = (kappa(lo), kappa(hi));
                let flux = 2.0 * a * c / (a + c) * grid.face_area(axis);
                rhs[lo] += flux;
                rhs[hi] -= flux;
            }
        });
        let mut x = vec![0.0; nc];
        let stats = solve_with_guess(&matrix, &rhs, &mut x, true, &opts.solver)?;
        iterations.push(stats.iterations);
        psi.push(Field::new(x));
    }

    let mut tensor = [[0.0; 3]; 3];
    let h = grid.spacing[0];
    let dv = grid.cell_volume();
    grid.for_each_face(|lo, hi, axis| {
        if !(raster.inside[lo] && raster.inside[hi]) {
            return;
        }
        let grad: Vec<f64> =
            (0..d - 1).map(|i| (if axis == i { 1.0 } else { 0.0 }) + (psi[i].values[hi] - psi[i].values[lo]) / h).collect();
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                tensor[i][j] += kg * grad[i] * grad[j] * dv;
            }
        }
    });
    Ok(EffectiveConductivity {
        d,
        tensor,
        psi,
        measures: raster.measures,
        raster,
        solver_iterations: iterations,
    })
}

/// Number of face-connected components of the inside cells (periodic wrap included).
pub fn inside_components(grid: &Grid, inside: &[bool]) -> usize {
    let mut seen = vec![false; inside.len()];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..inside.len() {
        if !inside[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(c) = stack.pop() {
            for axis in 0..grid.d {
                for side in [-1, 1] {
                    if let Some(nb) = grid.neighbor(c, axis, side) {
                        if inside[nb] && !seen[nb] {
                            seen[nb] = true;
                            stack.push(nb);
                        }
                    }
                }
            }
        }
    }
    count
}

/// Grain temperature on the inside cells of the reference grid at one interface point.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProblemState<T> {
    /// Index of the interface point `x_j`.
    pub j: usize,
    pub theta: Field<T>,
    pub t: f64,
}

/// Backward-Euler operator for the grain heat equation on `Z` with Robin exchange to a
/// scalar ambient trace. Shared read-only across a bank of cell problems.
#[derive(Debug, Clone)]
pub struct CellOperator<T> {
    pub raster: RasterMask,
    /// Reference-grid index of each unknown.
    pub cells: Vec<usize>,
    matrix: CsrMatrix<T>,
    /// `ρc vol / Δt` per unknown.
    mass: Vec<T>,
    /// `Σ α_k A_face` per unknown; multiplies the trace on the right-hand side.
    robin: Vec<T>,
    /// Corrected upper / lower boundary area per unknown.
    area_f: Vec<f64>,
    area_s: Vec<f64>,
    pub dt: f64,
    pub rho_c: f64,
    solver: SolverConfig,
}

impl<T: Real> CellOperator<T> {
    pub fn new(raster: RasterMask, p: &PhysicalParams, dt: f64, solver: SolverConfig) -> Result<Self> {
        p.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config("cell time step must be positive".into()));
        }
        let grid = &raster.grid;
        let mut index = vec![usize::MAX; grid.ncells()];
        let mut cells = Vec::new();
        for (c, &ins) in raster.inside.iter().enumerate() {
            if ins {
                index[c] = cells.len();
                cells.push(c);
            }
        }
        let n = cells.len();
        let vol = grid.cell_volume();
        let mut b = TripletBuilder::with_capacity(n, 2 * grid.d * n + n);
        grid.for_each_face(|lo, hi, axis| {
            if raster.inside[lo] && raster.inside[hi] {
                b.couple(index[lo], index[hi], T::lit(p.kappa_g * grid.face_area(axis) / grid.spacing[axis]));
            }
        });
        let mut robin = vec![T::zero(); n];
        let mut area_f = vec![0.0; n];
        let mut area_s = vec![0.0; n];
        for f in &raster.faces {
            let k = index[f.cell];
            let a = raster.face_area(f);
            let alpha = if f.upper {
                area_f[k] += a;
                p.alpha_f
            } else {
                area_s[k] += a;
                p.alpha_s
            };
            robin[k] += T::lit(alpha * a);
        }
        let mass: Vec<T> = vec![T::lit(p.rho_c_g * vol / dt); n];
        for k in 0..n {
            b.add(k, k, mass[k] + robin[k]);
        }
        Ok(CellOperator {
            matrix: b.build(),
            cells,
            mass,
            robin,
            area_f,
            area_s,
            dt,
            rho_c: p.rho_c_g,
            raster,
            solver: SolverConfig { method: Method::Cg, project_nullspace: false, ..solver },
        })
    }

    pub fn from_shape(shape: &CellShape, n: usize, p: &PhysicalParams, dt: f64, solver: SolverConfig) -> Result<Self> {
        Self::new(rasterize(shape, n)?, p, dt, solver)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.raster.grid.cell_volume()
    }

    pub fn initial_state(&self, j: usize, value: f64) -> CellProblemState<T> {
        CellProblemState { j, theta: Field::constant(self.len(), T::lit(value)), t: 0.0 }
    }

    /// Advances `state` by one step with ambient temperature `trace` and source `f_g` (W/m³).
    pub fn step(&self, state: &mut CellProblemState<T>, trace: f64, f_g: f64) -> Result<()> {
        let src = T::lit(f_g * self.cell_volume());
        let tr = T::lit(trace);
        let th = &mut state.theta.values;
        let b: Vec<T> = (0..th.len()).map(|k| self.mass[k] * th[k] + self.robin[k] * tr + src).collect();
        solve_with_guess(&self.matrix, &b, th, true, &self.solver)?;
        state.t += self.dt;
        Ok(())
    }

    /// `(g_f, g_s) = (∫_{Γ^f} θ^g, ∫_{Γ^s} θ^g)` with corrected face measures.
    pub fn boundary_exchange_integrals(&self, state: &CellProblemState<T>) -> (f64, f64) {
        let th = &state.theta.values;
        let mut gf = 0.0;
        let mut gs = 0.0;
        for k in 0..th.len() {
            let v = th[k].as_f64();
            gf += self.area_f[k] * v;
            gs += self.area_s[k] * v;
        }
        (gf, gs)
    }

    /// `∫_Z θ^g`.
    pub fn integral(&self, state: &CellProblemState<T>) -> f64 {
        state.theta.values.iter().map(|v| v.as_f64()).sum::<f64>() * self.cell_volume()
    }

    /// `(1/|Z|) ∫_Z θ^g` with the rasterized volume.
    pub fn mean(&self, state: &CellProblemState<T>) -> f64 {
        self.integral(state) / self.raster.raster_volume()
    }

    /// `‖a − b‖²_{L²(Z)}`.
    pub fn diff_sq(&self, a: &CellProblemState<T>, b: &CellProblemState<T>) -> f64 {
        a.theta
            .values
            .iter()
            .zip(&b.theta.values)
            .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
            .sum::<f64>()
            * self.cell_volume()
    }
}

/// One backward-Euler step of a cell problem, returning the new state.
pub fn cell_heat_step<T: Real>(
    op: &CellOperator<T>,
    state: &CellProblemState<T>,
    trace: f64,
    f_g: f64,
) -> Result<CellProblemState<T>> {
    let mut next = state.clone();
    op.step(&mut next, trace, f_g)?;
    Ok(next)
}

pub fn boundary_exchange_integrals<T: Real>(op: &CellOperator<T>, state: &CellProblemState<T>) -> (f64, f64) {
    op.boundary_exchange_integrals(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_spheres_are_rejected() {
        assert!(matches!(solve_psi(&CellShape::Sphere3D { r: 0.3 }, 16), Err(Error::UnsupportedShape(_))));
    }

    #[test]
    fn full_cell_has_trivial_corrector() {
        let k = solve_psi(&CellShape::FullCell { d: 3 }, 16).unwrap();
        for p in &k.psi {
            assert!(p.values.iter().all(|v| v.abs() < 1e-12));
        }
        assert!((k.get(0, 0) - 2.0).abs() < 1e-12);
        assert!((k.get(1, 1) - 2.0).abs() < 1e-12);
        assert_eq!(k.get(2, 2), 0.0);
        assert_eq!(k.get(0, 1), 0.0);
    }

    #[test]
    fn slab_matches_layered_identity() {
        let w = 0.5;
        let k = solve_psi(&CellShape::Slab { d: 2, w }, 32).unwrap();
        assert!(((k.get(0, 0) - w) / w).abs() < 1e-6);
        assert_eq!(k.get(1, 1), 0.0);
    }

    #[test]
    fn component_count() {
        let g = Grid::new(1, [6, 1, 1], [1.0; 3], [0.0; 3], [true, false, false]);
        assert_eq!(inside_components(&g, &[true, false, true, true, false, false]), 2);
        assert_eq!(inside_components(&g, &[true, false, false, true, false, true]), 2);
        assert_eq!(inside_components(&g, &[true, false, true, false, true, false]), 3);
    }

    fn sphere_op(dt: f64, p: &PhysicalParams) -> CellOperator<f64> {
        CellOperator::from_shape(&CellShape::Sphere3D { r: 0.4 }, 16, p, dt, SolverConfig::default()).unwrap()
    }

    #[test]
    fn uniform_equilibrium_unchanged() {
        let p = PhysicalParams::default();
        let op = sphere_op(0.1, &p);
        let s = op.initial_state(0, 0.3);
        let n = cell_heat_step(&op, &s, 0.3, 0.0).unwrap();
        for v in &n.theta.values {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn relaxes_to_ambient_monotonically() {
        let p = PhysicalParams::default();
        let op = sphere_op(0.5, &p);
        let mut s = op.initial_state(0, 0.0);
        let mut prev = 0.0;
        for _ in 0..200 {
            op.step(&mut s, 1.0, 0.0).unwrap();
            let m = op.mean(&s);
            assert!(m >= prev - 1e-14);
            prev = m;
        }
        for v in &s.theta.values {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn stationary_source_balance() {
        let p = PhysicalParams { kappa_g: 2.0, ..Default::default() };
        let op = sphere_op(50.0, &p);
        let mut s = op.initial_state(0, 0.0);
        for _ in 0..60 {
            op.step(&mut s, 0.0, 1.0).unwrap();
        }
        let (gf, gs) = op.boundary_exchange_integrals(&s);
        let vol = op.raster.raster_volume();
        let exchange = p.alpha_f * (0.0 - gf) + p.alpha_s * (0.0 - gs);
        assert!((exchange + vol).abs() < 1e-8 * vol, "{exchange} vs {vol}");
        let mean = op.mean(&s);
        let lead = 0.268 / 2.01;
        assert!(((mean - lead) / lead).abs() < 0.15, "mean {mean}");
    }

    #[test]
    fn exchange_integrals_of_uniform_state() {
        let p = PhysicalParams::default();
        let op = sphere_op(0.1, &p);
        let (gf, gs) = op.boundary_exchange_integrals(&op.initial_state(0, 2.0));
        assert!((gf - 2.0 * op.raster.measures.gamma_f).abs() < 1e-12);
        assert!((gs - 2.0 * op.raster.measures.gamma_s).abs() < 1e-12);
        assert_eq!(op.boundary_exchange_integrals(&op.initial_state(0, 0.0)), (0.0, 0.0));
    }

    #[test]
    fn step_conserves_energy() {
        let p = PhysicalParams { alpha_f: 3.0, alpha_s: 0.5, ..Default::default() };
        let op = sphere_op(0.2, &p);
        let s0 = op.initial_state(0, 0.1);
        let s1 = cell_heat_step(&op, &s0, 1.0, 2.0).unwrap();
        let (gf, gs) = op.boundary_exchange_integrals(&s1);
        let m = op.raster.measures;
        let influx = p.alpha_f * (m.gamma_f - gf) + p.alpha_s * (m.gamma_s - gs);
        let lhs = p.rho_c_g * (op.integral(&s1) - op.integral(&s0));
        let rhs = op.dt * (2.0 * op.raster.raster_volume() + influx);
        assert!(((lhs - rhs) / rhs).abs() < 1e-10);
    }
}
