use crate::error::{Error, Result};
use crate::geometry::{DomainLabels, Material};
use crate::scalar::Real;

use super::sparse::{BoundaryTerms, SparseSystem, TripletBuilder};

/// How heat crosses one class of interface faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmissionRule {
    /// Continuous temperature and flux: two-point flux with the harmonic-mean conductivity.
    PerfectContact,
    /// Flux `α [θ]` across the face, with coefficient in W/(m²K).
    Robin(f64),
    /// No direct coupling; the interface is closed by a separate interface model.
    Detached,
}

/// Rules for fluid|solid (`Σ⁰`), fluid|grain (`Σ^f`) and solid|grain (`Σ^s`) faces.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransmissionSpec {
    pub sigma0: Option<TransmissionRule>,
    pub sigma_f: Option<TransmissionRule>,
    pub sigma_s: Option<TransmissionRule>,
}

impl TransmissionSpec {
    pub fn all_perfect() -> Self {
        let p = Some(TransmissionRule::PerfectContact);
        TransmissionSpec { sigma0: p, sigma_f: p, sigma_s: p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductivityMap {
    pub fluid: f64,
    pub solid: f64,
    pub grain: f64,
}

impl ConductivityMap {
    pub fn get(&self, m: Material) -> f64 {
        match m {
            Material::Fluid => self.fluid,
            Material::Solid => self.solid,
            Material::Grain => self.grain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet(f64),
}

/// Conditions on the top (`x_d = H`) and bottom (`x_d = -H`) walls. Lateral walls are
/// zero-flux unless the grid is periodic there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterBoundary {
    pub top: BoundaryCondition,
    pub bottom: BoundaryCondition,
}

impl OuterBoundary {
    pub fn neumann() -> Self {
        OuterBoundary { top: BoundaryCondition::Neumann, bottom: BoundaryCondition::Neumann }
    }

    pub fn dirichlet_top(value: f64) -> Self {
        OuterBoundary { top: BoundaryCondition::Dirichlet(value), bottom: BoundaryCondition::Neumann }
    }

    pub fn has_dirichlet(&self) -> bool {
        matches!(self.top, BoundaryCondition::Dirichlet(_)) || matches!(self.bottom, BoundaryCondition::Dirichlet(_))
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Two-point flux diffusion operator with transmission conditions on the interface
/// face lists and the configured outer boundary.
pub fn assemble_diffusion<T: Real>(
    labels: &DomainLabels,
    kappa: &ConductivityMap,
    trans: &TransmissionSpec,
    outer: &OuterBoundary,
) -> Result<SparseSystem<T>> {
    for m in [Material::Fluid, Material::Solid, Material::Grain] {
        if !(kappa.get(m) > 0.0) {
            return Err(Error::Config(format!("conductivity of {} must be positive", m.name())));
        }
    }
    let grid = &labels.grid;
    let n = grid.ncells();
    let mut b = TripletBuilder::with_capacity(n, 4 * n * grid.d + n);
    let mut missing = None;
    grid.for_each_face(|lo, hi, axis| {
        let (l, r) = (labels.labels[lo], labels.labels[hi]);
        let area = grid.face_area(axis);
        let h = grid.spacing[axis];
        let coeff = if l == r {
            Some(kappa.get(l) * area / h)
        } else if l != Material::Grain && r != Material::Grain {
            match trans.sigma0 {
                Some(TransmissionRule::PerfectContact) => Some(harmonic(kappa.get(l), kappa.get(r)) * area / h),
                Some(TransmissionRule::Robin(alpha)) => Some(alpha * area),
                Some(TransmissionRule::Detached) => None,
                None => {
                    missing = Some(("fluid", "solid"));
                    None
                }
            }
        } else {
            None
        };
        if let Some(k) = coeff {
            b.couple(lo, hi, T::lit(k));
        }
    });
    if let Some((a, c)) = missing {
        return Err(Error::MissingRule(a, c));
    }
    for (faces, rule, other) in [
        (&labels.sigma_f, trans.sigma_f, "fluid"),
        (&labels.sigma_s, trans.sigma_s, "solid"),
    ] {
        if faces.is_empty() {
            continue;
        }
        let rule = rule.ok_or(Error::MissingRule(other, "grain"))?;
        for f in faces {
            let k = match rule {
                TransmissionRule::Robin(alpha) => {
                    if !(alpha > 0.0) {
                        return Err(Error::Config(format!("Robin coefficient {alpha} must be positive")));
                    }
                    alpha * f.area
                }
                TransmissionRule::PerfectContact => {
                    harmonic(kappa.get(labels.labels[f.lo]), kappa.get(labels.labels[f.hi])) * grid.face_area(f.axis)
                        / grid.spacing[f.axis]
                }
                TransmissionRule::Detached => continue,
            };
            b.couple(f.lo, f.hi, T::lit(k));
        }
    }

    let mut boundary = BoundaryTerms::zeros(n);
    let vert = grid.vertical();
    for (side, bc) in [(1isize, outer.top), (-1, outer.bottom)] {
        if let BoundaryCondition::Dirichlet(value) = bc {
            let area = grid.face_area(vert);
            for c in grid.boundary_cells(vert, side) {
                let k = 2.0 * kappa.get(labels.labels[c]) * area / grid.spacing[vert];
                boundary.diag[c] += T::lit(k);
                boundary.rhs[c] += T::lit(k * value);
            }
        }
    }
    for (c, d) in boundary.diag.iter().enumerate() {
        if *d != T::zero() {
            b.add(c, c, *d);
        }
    }
    Ok(SparseSystem {
        matrix: b.build(),
        rhs: boundary.rhs.clone(),
        singular: !outer.has_dirichlet(),
        symmetric: true,
        boundary,
    })
}

/// Prescribed velocity field, m/s.
pub trait VelocityField: Sync {
    fn velocity(&self, x: [f64; 3]) -> [f64; 3];

    fn is_zero(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stagnant;

impl VelocityField for Stagnant {
    fn velocity(&self, _x: [f64; 3]) -> [f64; 3] {
        [0.0; 3]
    }

    fn is_zero(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformFlow(pub [f64; 3]);

impl VelocityField for UniformFlow {
    fn velocity(&self, _x: [f64; 3]) -> [f64; 3] {
        self.0
    }

    fn is_zero(&self) -> bool {
        self.0 == [0.0; 3]
    }
}

/// Shear flow `v = (c(x_d) U, 0, 0)` with the cutoff `c = clamp((x_d - ε)/ε, 0, 1)`,
/// so `v` vanishes in the grain layer and is divergence free.
#[derive(Debug, Clone, Copy)]
pub struct LayerShear {
    pub speed: f64,
    pub eps: f64,
    pub d: usize,
}

impl LayerShear {
    pub fn cutoff(&self, xd: f64) -> f64 {
        ((xd - self.eps) / self.eps).clamp(0.0, 1.0)
    }
}

impl VelocityField for LayerShear {
    fn velocity(&self, x: [f64; 3]) -> [f64; 3] {
        [self.cutoff(x[self.d - 1]) * self.speed, 0.0, 0.0]
    }

    fn is_zero(&self) -> bool {
        self.speed == 0.0
    }
}

/// First-order upwind convection `div(ρc v θ)` on fluid cells.
pub fn assemble_advection<T: Real>(
    labels: &DomainLabels,
    v: &dyn VelocityField,
    rho_c: f64,
    outer: &OuterBoundary,
) -> Result<SparseSystem<T>> {
    let grid = &labels.grid;
    let n = grid.ncells();
    if v.is_zero() {
        return Ok(SparseSystem::zeros(n));
    }
    for c in 0..n {
        if labels.labels[c] != Material::Fluid {
            let x = grid.center(c);
            let u = v.velocity(x);
            if u.iter().any(|&w| w.abs() > 1e-14) {
                return Err(Error::VelocityOnSolid(x[..grid.d].to_vec()));
            }
        }
    }
    let fluid = |c: usize| labels.labels[c] == Material::Fluid;
    let mut b = TripletBuilder::with_capacity(n, 2 * n * grid.d);
    grid.for_each_face(|lo, hi, axis| {
        if !(fluid(lo) && fluid(hi)) {
            return;
        }
        let mut x = grid.center(lo);
        x[axis] += 0.5 * grid.spacing[axis];
        let flux = rho_c * v.velocity(x)[axis] * grid.face_area(axis);
        if flux > 0.0 {
            b.add(lo, lo, T::lit(flux));
            b.add(hi, lo, T::lit(-flux));
        } else if flux < 0.0 {
            b.add(hi, hi, T::lit(-flux));
            b.add(lo, hi, T::lit(flux));
        }
    });
    let mut boundary = BoundaryTerms::zeros(n);
    let vert = grid.vertical();
    for axis in 0..grid.d {
        if grid.periodic[axis] {
            continue;
        }
        for side in [-1isize, 1] {
            let dirichlet = match (axis == vert, side, outer.top, outer.bottom) {
                (true, 1, BoundaryCondition::Dirichlet(t), _) => Some(t),
                (true, -1, _, BoundaryCondition::Dirichlet(t)) => Some(t),
                _ => None,
            };
            for c in grid.boundary_cells(axis, side) {
                if !fluid(c) {
                    continue;
                }
                let mut x = grid.center(c);
                x[axis] += 0.5 * side as f64 * grid.spacing[axis];
                let out = rho_c * side as f64 * v.velocity(x)[axis] * grid.face_area(axis);
                if out > 0.0 {
                    boundary.diag[c] += T::lit(out);
                } else if out < 0.0 {
                    match dirichlet {
                        Some(t) => boundary.rhs[c] += T::lit(-out * t),
                        // zero-gradient inflow: the ghost value equals the cell value
                        None => boundary.diag[c] += T::lit(out),
                    }
                }
            }
        }
    }
    for (c, d) in boundary.diag.iter().enumerate() {
        if *d != T::zero() {
            b.add(c, c, *d);
        }
    }
    let closed = boundary.diag.iter().chain(&boundary.rhs).all(|v| *v == T::zero());
    Ok(SparseSystem { matrix: b.build(), rhs: boundary.rhs.clone(), singular: closed, symmetric: false, boundary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforated_domain, CellShape, DomainExtent, InterfaceFace};
    use crate::grid::Grid;

    fn rod(labels: Vec<Material>, h: f64, periodic: bool) -> DomainLabels {
        let n = labels.len();
        let grid = Grid::new(1, [n, 1, 1], [h, 1.0, 1.0], [0.0; 3], [periodic, false, false]);
        let mut dom = DomainLabels {
            grid: grid.clone(),
            labels,
            sigma0: vec![],
            sigma_f: vec![],
            sigma_s: vec![],
            sigma: vec![],
        };
        grid.for_each_face(|lo, hi, axis| {
            let f = InterfaceFace { lo, hi, axis, area: 1.0 };
            match (dom.labels[lo], dom.labels[hi]) {
                (Material::Grain, Material::Fluid) | (Material::Fluid, Material::Grain) => dom.sigma_f.push(f),
                (Material::Grain, Material::Solid) | (Material::Solid, Material::Grain) => dom.sigma_s.push(f),
                (a, b) if a != b => dom.sigma0.push(f),
                _ => {}
            }
        });
        dom
    }

    const K1: ConductivityMap = ConductivityMap { fluid: 1.0, solid: 1.0, grain: 1.0 };

    #[test]
    fn two_cell_rod_stiffness() {
        let dom = rod(vec![Material::Fluid, Material::Fluid], 1.0, false);
        let s: SparseSystem<f64> =
            assemble_diffusion(&dom, &K1, &TransmissionSpec::all_perfect(), &OuterBoundary::neumann()).unwrap();
        assert_eq!(s.matrix.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert!(s.singular);
    }

    #[test]
    fn robin_coupling_matrix() {
        let dom = rod(vec![Material::Fluid, Material::Grain], 1.0, false);
        let trans = TransmissionSpec { sigma_f: Some(TransmissionRule::Robin(3.0)), ..Default::default() };
        let s: SparseSystem<f64> = assemble_diffusion(&dom, &K1, &trans, &OuterBoundary::neumann()).unwrap();
        assert_eq!(s.matrix.to_dense(), vec![vec![3.0, -3.0], vec![-3.0, 3.0]]);
    }

    #[test]
    fn two_material_face_uses_harmonic_mean() {
        let dom = rod(vec![Material::Solid, Material::Fluid], 1.0, false);
        let k = ConductivityMap { fluid: 0.1, solid: 1.0, grain: 1.0 };
        let s: SparseSystem<f64> =
            assemble_diffusion(&dom, &k, &TransmissionSpec::all_perfect(), &OuterBoundary::neumann()).unwrap();
        assert!((s.matrix.get(0, 0) - 2.0 * 0.1 / 1.1).abs() < 1e-15);
        assert!((s.matrix.get(0, 0) - 0.1818).abs() < 1e-4);
    }

    #[test]
    fn missing_rule_is_an_error() {
        let dom = rod(vec![Material::Solid, Material::Grain], 1.0, false);
        let trans = TransmissionSpec { sigma0: Some(TransmissionRule::PerfectContact), ..Default::default() };
        let r: Result<SparseSystem<f64>> = assemble_diffusion(&dom, &K1, &trans, &OuterBoundary::neumann());
        assert!(matches!(r, Err(Error::MissingRule(_, _))));
    }

    #[test]
    fn zero_velocity_gives_zero_matrix() {
        let dom = rod(vec![Material::Fluid; 4], 0.25, true);
        let s: SparseSystem<f64> = assemble_advection(&dom, &Stagnant, 1.0, &OuterBoundary::neumann()).unwrap();
        assert_eq!(s.matrix.nnz(), 0);
    }

    #[test]
    fn periodic_upwind_is_circulant() {
        let h = 0.25;
        let rho_c = 2.0;
        let dom = rod(vec![Material::Fluid; 4], h, true);
        let s: SparseSystem<f64> =
            assemble_advection(&dom, &UniformFlow([1.0, 0.0, 0.0]), rho_c, &OuterBoundary::neumann()).unwrap();
        let vol = h;
        let m = s.matrix.to_dense();
        for i in 0..4 {
            assert!((m[i][i] / vol - rho_c / h).abs() < 1e-12);
            assert!((m[i][(i + 3) % 4] / vol + rho_c / h).abs() < 1e-12);
            assert_eq!(m[i].iter().filter(|v| **v != 0.0).count(), 2);
        }
    }

    #[test]
    fn shear_rows_vanish_in_cutoff_layer() {
        let eps = 0.125;
        let dom = build_perforated_domain(
            &CellShape::Disc2D { r: 0.4 },
            eps,
            &DomainExtent::new(&[0.5], 0.5),
            eps / 8.0,
            true,
        )
        .unwrap();
        let v = LayerShear { speed: 1.0, eps, d: 2 };
        let s: SparseSystem<f64> = assemble_advection(&dom, &v, 1.0, &OuterBoundary::neumann()).unwrap();
        for c in 0..dom.grid.ncells() {
            let y = dom.grid.center(c)[1];
            let row: f64 = s.matrix.row(c).map(|(_, v)| v.abs()).sum();
            if y <= eps {
                assert_eq!(row, 0.0, "row at y={y}");
            }
        }
        assert!(s.matrix.nnz() > 0);
        // discrete divergence free: row sums vanish with periodic lateral walls
        for r in s.matrix.row_sums() {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_on_grain_rejected() {
        let dom = rod(vec![Material::Fluid, Material::Grain], 1.0, false);
        let r: Result<SparseSystem<f64>> =
            assemble_advection(&dom, &UniformFlow([1.0, 0.0, 0.0]), 1.0, &OuterBoundary::neumann());
        assert!(matches!(r, Err(Error::VelocityOnSolid(_))));
    }
}
