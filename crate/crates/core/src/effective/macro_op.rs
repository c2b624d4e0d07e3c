use crate::error::{Error, Result};
use crate::geometry::{DomainLabels, Material};
use crate::grid::{
    assemble_advection, assemble_diffusion, solve_with_guess, BoundaryTerms, ConductivityMap, CsrMatrix,
    OuterBoundary, SolverConfig, SparseSystem, TransmissionRule, TransmissionSpec, TripletBuilder, VelocityField,
};
use crate::params::PhysicalParams;
use crate::scalar::Real;

/// Macro heat equation on the grain-free two-material box. Each `Σ` face carries an
/// interface temperature `θ_Σ` closed by the flux balance
/// `k_f (θ_f − θ_Σ) − k_s (θ_Σ − θ_s) = a θ_Σ − b`, eliminated into the two adjacent rows.
#[derive(Debug, Clone)]
pub struct MacroOperator<T> {
    pub labels: DomainLabels,
    /// Bulk operator without any coupling across `Σ`.
    pub base: SparseSystem<T>,
    /// Heat capacity per cell, J/K.
    pub capacity: Vec<T>,
    /// Source per cell, W.
    pub source: Vec<T>,
    /// `2 κ A / h` on each side of every `Σ` face, W/K.
    pub k_f: Vec<f64>,
    pub k_s: Vec<f64>,
    /// Sink slope `a` per face (already multiplied by the face area), W/K.
    pub a: Vec<f64>,
    /// `base` plus the eliminated interface couplings.
    pub coupled: CsrMatrix<T>,
    stepping: Option<CsrMatrix<T>>,
    pub dt: Option<f64>,
    solver: SolverConfig,
}

impl<T: Real> MacroOperator<T> {
    /// `a_density` is the sink slope per unit area of `Σ`, one value per face.
    pub fn new(
        labels: DomainLabels,
        p: &PhysicalParams,
        velocity: &dyn VelocityField,
        outer: &OuterBoundary,
        a_density: &[f64],
        solver: SolverConfig,
    ) -> Result<Self> {
        p.validate()?;
        if labels.sigma.is_empty() {
            return Err(Error::Config("macro domain has no interface faces".into()));
        }
        if a_density.len() != labels.sigma.len() {
            return Err(Error::GridMismatch { expected: labels.sigma.len(), found: a_density.len() });
        }
        if let Some(&bad) = a_density.iter().find(|a| !(**a >= 0.0)) {
            return Err(Error::NegativeSink(bad));
        }
        let kappa = ConductivityMap { fluid: p.kappa_f, solid: p.kappa_s, grain: p.kappa_g };
        let trans = TransmissionSpec { sigma0: Some(TransmissionRule::Detached), ..Default::default() };
        let diffusion = assemble_diffusion::<T>(&labels, &kappa, &trans, outer)?;
        let advection = assemble_advection::<T>(&labels, velocity, p.rho_c_f, outer)?;
        let base = diffusion.combine(&advection);

        let grid = &labels.grid;
        let vol = grid.cell_volume();
        let mut capacity = Vec::with_capacity(grid.ncells());
        let mut source = Vec::with_capacity(grid.ncells());
        for (c, m) in labels.labels.iter().enumerate() {
            let x = grid.center(c);
            let (rc, f) = match m {
                Material::Fluid => (p.rho_c_f, p.f_f.eval(&x, grid.d)),
                Material::Solid => (p.rho_c_s, p.f_s.eval(&x, grid.d)),
                Material::Grain => return Err(Error::Config("macro domain must not contain grain cells".into())),
            };
            capacity.push(T::lit(rc * vol));
            source.push(T::lit(f * vol));
        }
        let mut k_f = Vec::with_capacity(labels.sigma.len());
        let mut k_s = Vec::with_capacity(labels.sigma.len());
        let mut a = Vec::with_capacity(labels.sigma.len());
        for (f, ad) in labels.sigma.iter().zip(a_density) {
            let h = grid.spacing[f.axis];
            k_s.push(2.0 * p.kappa_s * f.area / h);
            k_f.push(2.0 * p.kappa_f * f.area / h);
            a.push(ad * f.area);
        }
        let mut b = TripletBuilder::with_capacity(grid.ncells(), 4 * labels.sigma.len());
        for (i, f) in labels.sigma.iter().enumerate() {
            let d = k_f[i] + k_s[i] + a[i];
            let (s, fl) = (f.lo, f.hi);
            b.add(fl, fl, T::lit(k_f[i] * (1.0 - k_f[i] / d)));
            b.add(s, s, T::lit(k_s[i] * (1.0 - k_s[i] / d)));
            b.add(fl, s, T::lit(-k_f[i] * k_s[i] / d));
            b.add(s, fl, T::lit(-k_f[i] * k_s[i] / d));
        }
        let coupled = base.matrix.add_scaled(&b.build(), T::one());
        Ok(MacroOperator { labels, base, capacity, source, k_f, k_s, a, coupled, stepping: None, dt: None, solver })
    }

    pub fn nfaces(&self) -> usize {
        self.labels.sigma.len()
    }

    pub fn set_dt(&mut self, dt: f64) {
        assert!(dt > 0.0);
        let mass: Vec<T> = self.capacity.iter().map(|c| *c / T::lit(dt)).collect();
        self.stepping = Some(self.coupled.add_diagonal(&mass));
        self.dt = Some(dt);
    }

    /// Right-hand side of the eliminated system for sink offsets `b` (W per face).
    fn rhs(&self, b_face: &[f64]) -> Vec<T> {
        let mut rhs = self.base.rhs.clone();
        for (i, f) in self.labels.sigma.iter().enumerate() {
            let d = self.k_f[i] + self.k_s[i] + self.a[i];
            rhs[f.hi] += T::lit(self.k_f[i] * b_face[i] / d);
            rhs[f.lo] += T::lit(self.k_s[i] * b_face[i] / d);
        }
        rhs
    }

    /// Backward-Euler step from `theta_old`; `theta` holds the initial guess on entry.
    pub fn step_into(&self, theta_old: &[T], b_face: &[f64], theta: &mut [T]) -> Result<usize> {
        let dt = self.dt.expect("time step not set");
        let m = self.stepping.as_ref().expect("time step not set");
        let mut rhs = self.rhs(b_face);
        for i in 0..rhs.len() {
            rhs[i] += self.capacity[i] / T::lit(dt) * theta_old[i] + self.source[i];
        }
        let stats = solve_with_guess(m, &rhs, theta, self.base.symmetric, &self.solver)?;
        Ok(stats.iterations)
    }

    /// Stationary system `A θ = rhs` for fixed sink offsets.
    pub fn stationary_system(&self, b_face: &[f64]) -> SparseSystem<T> {
        let mut rhs = self.rhs(b_face);
        for i in 0..rhs.len() {
            rhs[i] += self.source[i];
        }
        SparseSystem {
            matrix: self.coupled.clone(),
            rhs,
            singular: self.base.singular && self.a.iter().all(|a| *a == 0.0),
            symmetric: self.base.symmetric,
            boundary: self.base.boundary.clone(),
        }
    }

    /// Interface temperature on every `Σ` face.
    pub fn trace(&self, theta: &[T], b_face: &[f64]) -> Vec<f64> {
        self.labels
            .sigma
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d = self.k_f[i] + self.k_s[i] + self.a[i];
                (self.k_f[i] * theta[f.hi].as_f64() + self.k_s[i] * theta[f.lo].as_f64() + b_face[i]) / d
            })
            .collect()
    }

    /// Total heat leaving the macro domain into the grains, `Σ (a θ_Σ − b)`, W.
    pub fn sink(&self, trace: &[f64], b_face: &[f64]) -> f64 {
        trace.iter().zip(&self.a).zip(b_face).map(|((t, a), b)| a * t - b).sum()
    }

    pub fn stored_energy(&self, theta: &[T]) -> f64 {
        self.capacity.iter().zip(theta).map(|(c, t)| c.as_f64() * t.as_f64()).sum()
    }

    pub fn total_source(&self) -> f64 {
        self.source.iter().map(|s| s.as_f64()).sum()
    }

    pub fn boundary(&self) -> &BoundaryTerms<T> {
        &self.base.boundary
    }

    /// Lateral centre of every `Σ` face.
    pub fn face_centers(&self) -> Vec<[f64; 2]> {
        let g = &self.labels.grid;
        self.labels
            .sigma
            .iter()
            .map(|f| {
                let x = g.center(f.lo);
                [x[0], if g.d == 3 { x[1] } else { 0.0 }]
            })
            .collect()
    }
}

/// One macro step for the sink `a θ_Σ − b` per face (densities per unit area), returning
/// the new temperature and the interface trace.
pub fn macro_step_given_exchange<T: Real>(
    op: &MacroOperator<T>,
    theta_old: &[T],
    b_density: &[f64],
) -> Result<(Vec<T>, Vec<f64>)> {
    if b_density.len() != op.nfaces() {
        return Err(Error::GridMismatch { expected: op.nfaces(), found: b_density.len() });
    }
    let b_face: Vec<f64> = op.labels.sigma.iter().zip(b_density).map(|(f, b)| b * f.area).collect();
    let mut theta = theta_old.to_vec();
    op.step_into(theta_old, &b_face, &mut theta)?;
    let trace = op.trace(&theta, &b_face);
    Ok((theta, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layered_domain, DomainExtent};
    use crate::grid::{solve_linear, BoundaryCondition, Stagnant};

    fn op(d: usize, h: f64, outer: OuterBoundary, a: f64) -> MacroOperator<f64> {
        let labels = build_layered_domain(d, &DomainExtent::new(&[0.5; 2][..d - 1], 1.0), h, true).unwrap();
        let n = labels.sigma.len();
        MacroOperator::new(labels, &PhysicalParams::default(), &Stagnant, &outer, &vec![a; n], SolverConfig::default())
            .unwrap()
    }

    #[test]
    fn zero_exchange_is_perfect_contact() {
        let m = op(2, 0.125, OuterBoundary::neumann(), 0.0);
        let k = ConductivityMap { fluid: 0.1, solid: 1.0, grain: 2.0 };
        let perfect = assemble_diffusion::<f64>(&m.labels, &k, &TransmissionSpec::all_perfect(), &OuterBoundary::neumann())
            .unwrap();
        let (a, b) = (m.coupled.to_dense(), perfect.matrix.to_dense());
        for i in 0..a.len() {
            for j in 0..a.len() {
                assert!((a[i][j] - b[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_material_rod() {
        let outer = OuterBoundary { top: BoundaryCondition::Dirichlet(1.0), bottom: BoundaryCondition::Dirichlet(0.0) };
        let m = op(1, 1.0 / 64.0, outer, 0.0);
        let theta = solve_linear(&m.stationary_system(&[0.0]), &SolverConfig::default()).unwrap();
        let tr = m.trace(&theta.values, &[0.0]);
        assert!((tr[0] - 0.1 / 1.1).abs() < 1e-9, "{}", tr[0]);
    }

    #[test]
    fn balanced_sink_changes_nothing() {
        let outer = OuterBoundary { top: BoundaryCondition::Dirichlet(1.0), bottom: BoundaryCondition::Dirichlet(0.0) };
        let m0 = op(1, 1.0 / 32.0, outer, 0.0);
        let th0 = solve_linear(&m0.stationary_system(&[0.0]), &SolverConfig::default()).unwrap();
        let ts = m0.trace(&th0.values, &[0.0])[0];
        let alpha = 2.24;
        let m1 = op(1, 1.0 / 32.0, outer, alpha);
        let th1 = solve_linear(&m1.stationary_system(&[alpha * ts]), &SolverConfig::default()).unwrap();
        for (a, b) in th0.values.iter().zip(&th1.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_sink_rejected() {
        let labels = build_layered_domain(1, &DomainExtent::new(&[], 1.0), 0.25, false).unwrap();
        let r = MacroOperator::<f64>::new(
            labels,
            &PhysicalParams::default(),
            &Stagnant,
            &OuterBoundary::neumann(),
            &[-1.0],
            SolverConfig::default(),
        );
        assert!(matches!(r, Err(Error::NegativeSink(_))));
    }

    #[test]
    fn step_sink_balance() {
        let mut m = op(2, 0.125, OuterBoundary::neumann(), 3.0);
        m.set_dt(0.1);
        let n = m.labels.grid.ncells();
        let old: Vec<f64> = (0..n).map(|i| (i % 7) as f64 * 0.1).collect();
        let b = vec![0.4; m.nfaces()];
        let (new, tr) = macro_step_given_exchange(&m, &old, &b).unwrap();
        let b_face: Vec<f64> = m.labels.sigma.iter().map(|f| 0.4 * f.area).collect();
        let lhs = m.stored_energy(&new) - m.stored_energy(&old);
        let rhs = -0.1 * m.sink(&tr, &b_face);
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }
}
