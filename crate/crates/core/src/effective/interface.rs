use crate::error::{Error, Result};
use crate::geometry::{DomainLabels, GeometryMeasures};
use crate::grid::{solve_with_guess, CsrMatrix, Method, SolverConfig, TripletBuilder};
use crate::params::PhysicalParams;
use crate::scalar::Real;

/// Lower-dimensional heat equation for the connected grain layer on the `Σ` face grid:
/// `|Z| ρc ∂_t θ^g − div(κ̃ ∇θ^g) = |Z| f^g + α̃ (θ_Σ − θ^g)`, zero flux on `∂Σ`.
#[derive(Debug, Clone)]
pub struct InterfaceOperator<T> {
    matrix: CsrMatrix<T>,
    mass: Vec<T>,
    /// `α̃ A` per face.
    exchange: Vec<T>,
    source: Vec<T>,
    /// Face areas.
    pub area: Vec<f64>,
    pub alpha_tilde: f64,
    pub vol_z: f64,
    pub rho_c: f64,
    pub dt: f64,
    solver: SolverConfig,
}

impl<T: Real> InterfaceOperator<T> {
    pub fn new(
        labels: &DomainLabels,
        kappa: &[[f64; 3]; 3],
        measures: &GeometryMeasures,
        p: &PhysicalParams,
        dt: f64,
        solver: SolverConfig,
    ) -> Result<Self> {
        p.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config("interface time step must be positive".into()));
        }
        if !(measures.vol_z > 0.0) {
            return Err(Error::Config("|Z| must be positive".into()));
        }
        let grid = &labels.grid;
        let faces = &labels.sigma;
        let n = faces.len();
        let mut face_of = vec![usize::MAX; grid.ncells()];
        for (i, f) in faces.iter().enumerate() {
            face_of[f.lo] = i;
        }
        let alpha_tilde = p.alpha_tilde(measures);
        let mut b = TripletBuilder::with_capacity(n, 4 * n * grid.d);
        for (i, f) in faces.iter().enumerate() {
            for axis in 0..grid.d - 1 {
                if kappa[axis][axis] < 0.0 {
                    return Err(Error::Config("effective conductivity must be non-negative".into()));
                }
                if let Some(nb) = grid.neighbor(f.lo, axis, 1) {
                    let j = face_of[nb];
                    if j != i && kappa[axis][axis] > 0.0 {
                        let h = grid.spacing[axis];
                        b.couple(i, j, T::lit(kappa[axis][axis] * f.area / (h * h)));
                    }
                }
            }
        }
        let area: Vec<f64> = faces.iter().map(|f| f.area).collect();
        let mass: Vec<T> = area.iter().map(|a| T::lit(measures.vol_z * p.rho_c_g * a / dt)).collect();
        let exchange: Vec<T> = area.iter().map(|a| T::lit(alpha_tilde * a)).collect();
        let source: Vec<T> = faces
            .iter()
            .map(|f| {
                let x = grid.center(f.lo);
                T::lit(measures.vol_z * p.f_g.eval(&x, grid.d) * f.area)
            })
            .collect();
        for i in 0..n {
            b.add(i, i, mass[i] + exchange[i]);
        }
        Ok(InterfaceOperator {
            matrix: b.build(),
            mass,
            exchange,
            source,
            area,
            alpha_tilde,
            vol_z: measures.vol_z,
            rho_c: p.rho_c_g,
            dt,
            solver: SolverConfig { method: Method::Cg, project_nullspace: false, ..solver },
        })
    }

    pub fn len(&self) -> usize {
        self.area.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area.is_empty()
    }

    /// Backward-Euler step from `old` for a given trace; `out` holds the initial guess.
    pub fn step_into(&self, old: &[T], trace: &[f64], out: &mut [T]) -> Result<usize> {
        let b: Vec<T> =
            (0..old.len()).map(|i| self.mass[i] * old[i] + self.source[i] + self.exchange[i] * T::lit(trace[i])).collect();
        Ok(solve_with_guess(&self.matrix, &b, out, true, &self.solver)?.iterations)
    }

    /// `Σ |Z| ρc A θ^g`, J.
    pub fn stored_energy(&self, theta: &[T]) -> f64 {
        theta.iter().zip(&self.area).map(|(t, a)| self.vol_z * self.rho_c * a * t.as_f64()).sum()
    }

    pub fn total_source(&self) -> f64 {
        self.source.iter().map(|s| s.as_f64()).sum()
    }

    /// Face-area weighted `‖a − b‖²_{L²(Σ)}`.
    pub fn diff_sq(&self, a: &[T], b: &[T]) -> f64 {
        a.iter().zip(b).zip(&self.area).map(|((x, y), w)| w * (x.as_f64() - y.as_f64()).powi(2)).sum()
    }
}

/// One step of the interface equation, returning the new grain temperature.
pub fn interface_pde_step<T: Real>(op: &InterfaceOperator<T>, theta_g_old: &[T], trace: &[f64]) -> Result<Vec<T>> {
    if trace.len() != op.len() || theta_g_old.len() != op.len() {
        return Err(Error::GridMismatch { expected: op.len(), found: trace.len().min(theta_g_old.len()) });
    }
    let mut out = theta_g_old.to_vec();
    op.step_into(theta_g_old, trace, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_layered_domain, DomainExtent};
    use crate::params::SourceProfile;

    const TABLE: GeometryMeasures = GeometryMeasures { vol_z: 0.34, gamma_f: 1.12, gamma_s: 1.12, gamma_0: 0.0 };

    fn labels() -> DomainLabels {
        build_layered_domain(3, &DomainExtent::new(&[1.0, 1.0], 0.5), 0.125, true).unwrap()
    }

    #[test]
    fn scalar_relaxation_step() {
        let p = PhysicalParams { f_g: SourceProfile::zero(), ..Default::default() };
        let dt = 0.3;
        let op = InterfaceOperator::<f64>::new(&labels(), &[[0.0; 3]; 3], &TABLE, &p, dt, SolverConfig::default()).unwrap();
        let c = 1.5;
        let old = vec![0.2; op.len()];
        let new = interface_pde_step(&op, &old, &vec![c; op.len()]).unwrap();
        let r = dt * 2.24 / 0.34;
        let expect = (0.2 + r * c) / (1.0 + r);
        for v in new {
            assert!((v - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_uniform_source() {
        let p = PhysicalParams::default();
        let k = [[0.4, 0.0, 0.0], [0.0, 0.4, 0.0], [0.0; 3]];
        let op = InterfaceOperator::<f64>::new(&labels(), &k, &TABLE, &p, 1e6, SolverConfig::default()).unwrap();
        let mut th = vec![0.0; op.len()];
        for _ in 0..5 {
            th = interface_pde_step(&op, &th, &vec![0.0; op.len()]).unwrap();
        }
        for v in th {
            assert!((v - 0.34 / 2.24).abs() < 1e-5);
        }
    }
}
