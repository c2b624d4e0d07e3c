use crate::cell::{CellOperator, CellProblemState, EffectiveConductivity, DEFAULT_CELL_RESOLUTION};
use crate::error::{Error, Result};
use crate::geometry::{build_layered_domain, exact_measures, CellShape, DomainExtent, GeometryMeasures, Material};
use crate::grid::{diff_norm, BoundaryCondition, NormKind, OuterBoundary, SolverConfig};
use crate::micro::InitialCondition;
use crate::params::{Case, PhysicalParams, VelocitySpec};
use crate::scalar::Real;

use super::bank::CellBank;
use super::interface::InterfaceOperator;
use super::macro_op::MacroOperator;

/// Grain cell problems for disconnected grains.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub shape: CellShape,
    /// Cells per unit length of the reference cell.
    pub n: usize,
    /// Number of interface points.
    pub m: usize,
}

impl CellSpec {
    pub fn new(shape: CellShape, m: usize) -> Self {
        CellSpec { shape, n: DEFAULT_CELL_RESOLUTION, m }
    }
}

/// Effective coefficients for a connected grain layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSpec {
    pub kappa: [[f64; 3]; 3],
    pub measures: GeometryMeasures,
}

impl InterfaceSpec {
    /// Tabulated sphere-with-connectors coefficients: `κ̃_ii = 0.2 κ^g`, `|Z| = 0.34`, `|Γ| = 1.12`.
    pub fn tabulated_connected(kappa_g: f64) -> Self {
        let k = 0.2 * kappa_g;
        InterfaceSpec {
            kappa: [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0; 3]],
            measures: GeometryMeasures { vol_z: 0.34, gamma_f: 1.12, gamma_s: 1.12, gamma_0: 0.0 },
        }
    }

    /// From a corrector solve done with unit grain conductivity.
    pub fn from_correctors(k: &EffectiveConductivity, kappa_g: f64) -> Self {
        let mut kappa = k.tensor;
        kappa.iter_mut().flatten().for_each(|v| *v *= kappa_g);
        InterfaceSpec { kappa, measures: k.measures }
    }

    pub fn from_shape_measures(shape: &CellShape, kappa: [[f64; 3]; 3]) -> Result<Self> {
        Ok(InterfaceSpec { kappa, measures: exact_measures(shape)? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Closure {
    Cells(CellSpec),
    Interface(InterfaceSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    pub d: usize,
    pub extent: DomainExtent,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Stopping tolerance on `E`.
    pub tau: f64,
    /// Relaxation factor in `[1, 2)`.
    pub eta: f64,
    pub max_iter: usize,
    pub params: PhysicalParams,
    pub closure: Closure,
    pub velocity: VelocitySpec,
    /// Width of the velocity cutoff layer above `Σ`.
    pub cutoff: f64,
    pub top: BoundaryCondition,
    pub lateral_periodic: bool,
    pub initial: InitialCondition,
    pub solver: SolverConfig,
    /// Fail on a non-converged coupling iteration instead of accepting the last iterate.
    pub strict: bool,
}

impl EffectiveConfig {
    pub fn new(d: usize, lateral: f64, h: f64, params: PhysicalParams, closure: Closure) -> Self {
        EffectiveConfig {
            d,
            extent: DomainExtent::new(&vec![lateral; d - 1], 1.0),
            h,
            dt: 1e-2,
            t_end: 1.0,
            tau: 1e-6,
            eta: 1.0,
            max_iter: 200,
            params,
            closure,
            velocity: VelocitySpec::Off,
            cutoff: 0.1,
            top: BoundaryCondition::Neumann,
            lateral_periodic: true,
            initial: InitialCondition::default(),
            solver: SolverConfig::default(),
            strict: true,
        }
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.solver.validate()?;
        if !(2..=3).contains(&self.d) {
            return Err(Error::Config(format!("effective models need d = 2 or 3, got {}", self.d)));
        }
        if !(1.0..2.0).contains(&self.eta) {
            return Err(Error::Config(format!("relaxation eta = {} outside [1, 2)", self.eta)));
        }
        if !(self.tau > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tau must be positive and max_iter at least 1".into()));
        }
        if !(self.dt > 0.0 && self.t_end >= 0.0) {
            return Err(Error::Config("dt must be positive and t_end non-negative".into()));
        }
        if !self.velocity.is_off() && !(self.cutoff > 0.0) {
            return Err(Error::Config("velocity cutoff width must be positive".into()));
        }
        match (&self.closure, self.params.case) {
            (Closure::Cells(c), Case::A) => {
                if c.shape.dim() != self.d {
                    return Err(Error::Config(format!("cell shape {} does not match d = {}", c.shape, self.d)));
                }
            }
            (Closure::Interface(_), Case::B) => {}
            (_, case) => {
                return Err(Error::Config(format!("closure does not match case {case}")));
            }
        }
        Ok(())
    }
}

/// Grain unknowns: one cell state per bank point, or one value per `Σ` face.
#[derive(Debug, Clone, PartialEq)]
pub enum GrainState<T> {
    Cells(Vec<CellProblemState<T>>),
    Interface(Vec<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveState<T> {
    pub t: f64,
    pub theta: Vec<T>,
    pub grain: GrainState<T>,
    /// Interface temperature per `Σ` face.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub enum GrainModel<T> {
    Cells(CellBank<T>),
    Interface(InterfaceOperator<T>),
}

/// Assembled effective model for a fixed time step.
#[derive(Debug, Clone)]
pub struct EffectiveModel<T> {
    pub cfg: EffectiveConfig,
    pub macro_op: MacroOperator<T>,
    pub grain: GrainModel<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub step: usize,
    pub t: f64,
    /// `E_1, …, E_K`.
    pub errors: Vec<f64>,
    pub eta: f64,
    pub converged: bool,
    /// Inner iterations after the predictor.
    pub iterations: usize,
}

impl IterationReport {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(0.0)
    }

    /// Ratios `E_{i+1} / E_i`.
    pub fn ratios(&self) -> Vec<f64> {
        self.errors.windows(2).filter(|w| w[0] > 0.0).map(|w| w[1] / w[0]).collect()
    }

    /// Geometric rate fitted by least squares to `ln E_i` for `i ≥ 2`.
    pub fn contraction_ratio(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .errors
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, e)| **e > 0.0)
            .map(|(i, e)| (i as f64, e.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some((sxy / sxx).exp())
    }
}

/// One row of the per-step effective ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveLedgerRow {
    pub t: f64,
    pub k_iterations: usize,
    pub e_final: f64,
    pub eta: f64,
    pub energy_stored: f64,
    pub energy_injected: f64,
    pub boundary_inflow: f64,
}

impl<T: Real> EffectiveModel<T> {
    pub fn new(cfg: &EffectiveConfig) -> Result<Self> {
        cfg.validate()?;
        let labels = build_layered_domain(cfg.d, &cfg.extent, cfg.h, cfg.lateral_periodic)?;
        let p = &cfg.params;
        let outer = OuterBoundary { top: cfg.top, bottom: BoundaryCondition::Neumann };
        let velocity = cfg.velocity.field(cfg.cutoff, cfg.d);
        let nf = labels.sigma.len();
        let grid = labels.grid.clone();
        let (grain, a_density) = match &cfg.closure {
            Closure::Cells(spec) => {
                let op = CellOperator::from_shape(&spec.shape, spec.n, p, cfg.dt, cfg.solver)?;
                let axes: Vec<Vec<f64>> = (0..cfg.d - 1)
                    .map(|a| (0..grid.dims[a]).map(|i| grid.origin[a] + (i as f64 + 0.5) * grid.spacing[a]).collect())
                    .collect();
                let centers: Vec<[f64; 2]> = labels
                    .sigma
                    .iter()
                    .map(|f| {
                        let x = grid.center(f.lo);
                        [x[0], if cfg.d == 3 { x[1] } else { 0.0 }]
                    })
                    .collect();
                let bank = CellBank::new(op, cfg.d, cfg.extent.lateral, spec.m, &axes, &centers, p)?;
                let a = bank.a_density();
                (GrainModel::Cells(bank), a)
            }
            Closure::Interface(spec) => {
                let op = InterfaceOperator::new(&labels, &spec.kappa, &spec.measures, p, cfg.dt, cfg.solver)?;
                let a = op.alpha_tilde;
                (GrainModel::Interface(op), a)
            }
        };
        let mut macro_op =
            MacroOperator::new(labels, p, velocity.as_ref(), &outer, &vec![a_density; nf], cfg.solver)?;
        macro_op.set_dt(cfg.dt);
        Ok(EffectiveModel { cfg: cfg.clone(), macro_op, grain })
    }

    pub fn initial_state(&self) -> EffectiveState<T> {
        let ic = &self.cfg.initial;
        let theta: Vec<T> = self
            .macro_op
            .labels
            .labels
            .iter()
            .map(|m| T::lit(if *m == Material::Fluid { ic.fluid } else { ic.solid }))
            .collect();
        let grain = match &self.grain {
            GrainModel::Cells(bank) => GrainState::Cells(bank.initial(ic.grain)),
            GrainModel::Interface(op) => GrainState::Interface(vec![T::lit(ic.grain); op.len()]),
        };
        let b = self.b_face(&grain);
        let trace = self.macro_op.trace(&theta, &b);
        EffectiveState { t: 0.0, theta, grain, trace }
    }

    /// Effective exchange coefficient `α̃` per unit area of `Σ`.
    pub fn alpha_tilde(&self) -> f64 {
        match &self.grain {
            GrainModel::Cells(bank) => bank.a_density(),
            GrainModel::Interface(op) => op.alpha_tilde,
        }
    }

    /// Lateral positions carrying a grain unknown: cell-problem points or `Σ` face centres.
    pub fn grain_points(&self) -> Vec<[f64; 2]> {
        match &self.grain {
            GrainModel::Cells(bank) => bank.points.clone(),
            GrainModel::Interface(_) => self.macro_op.face_centers(),
        }
    }

    /// Sink offset `b` per face in W.
    pub fn b_face(&self, grain: &GrainState<T>) -> Vec<f64> {
        let sigma = &self.macro_op.labels.sigma;
        match (&self.grain, grain) {
            (GrainModel::Cells(bank), GrainState::Cells(s)) => {
                bank.b_density(s).iter().zip(sigma).map(|(b, f)| b * f.area).collect()
            }
            (GrainModel::Interface(op), GrainState::Interface(g)) => {
                g.iter().zip(sigma).map(|(v, f)| op.alpha_tilde * v.as_f64() * f.area).collect()
            }
            _ => panic!("grain state does not match the model"),
        }
    }

    fn grain_step(&self, old: &GrainState<T>, guess: Option<&GrainState<T>>, trace: &[f64]) -> Result<GrainState<T>> {
        match (&self.grain, old) {
            (GrainModel::Cells(bank), GrainState::Cells(s)) => Ok(GrainState::Cells(bank.step(s, trace)?)),
            (GrainModel::Interface(op), GrainState::Interface(g)) => {
                let mut out = match guess {
                    Some(GrainState::Interface(x)) => x.clone(),
                    _ => g.clone(),
                };
                op.step_into(g, trace, &mut out)?;
                Ok(GrainState::Interface(out))
            }
            _ => panic!("grain state does not match the model"),
        }
    }

    fn relax(&self, prev: &GrainState<T>, next: GrainState<T>, eta: f64) -> GrainState<T> {
        let e = T::lit(eta);
        let mix = |a: &[T], b: &mut [T]| {
            for (x, y) in a.iter().zip(b.iter_mut()) {
                *y = *x + e * (*y - *x);
            }
        };
        match (prev, next) {
            (GrainState::Cells(a), GrainState::Cells(mut b)) => {
                for (x, y) in a.iter().zip(b.iter_mut()) {
                    mix(&x.theta.values, &mut y.theta.values);
                }
                GrainState::Cells(b)
            }
            (GrainState::Interface(a), GrainState::Interface(mut b)) => {
                mix(a, &mut b);
                GrainState::Interface(b)
            }
            _ => panic!("grain state does not match the model"),
        }
    }

    /// Squared differences `(e_f², e_s², e_g²)`.
    pub fn error_components(&self, a: &EffectiveState<T>, b: &EffectiveState<T>) -> Result<[f64; 3]> {
        let labels = &self.macro_op.labels;
        if a.theta.len() != b.theta.len() || a.theta.len() != labels.grid.ncells() {
            return Err(Error::GridMismatch { expected: labels.grid.ncells(), found: a.theta.len().min(b.theta.len()) });
        }
        let vol = labels.grid.cell_volume();
        let ef = diff_norm(&a.theta, &b.theta, vol, Some(&labels.mask(Material::Fluid)), NormKind::L2);
        let es = diff_norm(&a.theta, &b.theta, vol, Some(&labels.mask(Material::Solid)), NormKind::L2);
        let eg = match (&self.grain, &a.grain, &b.grain) {
            (GrainModel::Cells(bank), GrainState::Cells(x), GrainState::Cells(y)) if x.len() == y.len() => {
                bank.diff_sq(x, y)
            }
            (GrainModel::Interface(op), GrainState::Interface(x), GrainState::Interface(y)) if x.len() == y.len() => {
                op.diff_sq(x, y)
            }
            _ => return Err(Error::GridMismatch { expected: 0, found: 0 }),
        };
        Ok([ef * ef, es * es, eg])
    }

    pub fn stored_energy(&self, s: &EffectiveState<T>) -> f64 {
        self.macro_op.stored_energy(&s.theta)
            + match (&self.grain, &s.grain) {
                (GrainModel::Cells(bank), GrainState::Cells(c)) => bank.stored_energy(c),
                (GrainModel::Interface(op), GrainState::Interface(g)) => op.stored_energy(g),
                _ => panic!("grain state does not match the model"),
            }
    }

    pub fn total_source(&self) -> f64 {
        self.macro_op.total_source()
            + match &self.grain {
                GrainModel::Cells(bank) => bank.total_source(),
                GrainModel::Interface(op) => op.total_source(),
            }
    }

    /// Cell-averaged grain temperature per bank point, or the interface field.
    pub fn grain_means(&self, s: &EffectiveState<T>) -> Vec<f64> {
        match (&self.grain, &s.grain) {
            (GrainModel::Cells(bank), GrainState::Cells(c)) => bank.means(c),
            (_, GrainState::Interface(g)) => g.iter().map(|v| v.as_f64()).collect(),
            _ => panic!("grain state does not match the model"),
        }
    }
}

/// `E = (e_f² + e_s² + e_g²)^{1/2}` between two iterates.
pub fn compute_e<T: Real>(model: &EffectiveModel<T>, current: &EffectiveState<T>, previous: &EffectiveState<T>) -> Result<f64> {
    Ok(model.error_components(current, previous)?.iter().sum::<f64>().sqrt())
}

/// One time step of the relaxed fixed-point coupling between the macro problem and the
/// grain closure.
pub fn coupled_time_step<T: Real>(
    model: &EffectiveModel<T>,
    state: &EffectiveState<T>,
    step: usize,
) -> Result<(EffectiveState<T>, IterationReport)> {
    let cfg = &model.cfg;
    let op = &model.macro_op;
    let eta = cfg.eta;

    // predictor with the coupling data of the previous time level
    let b0 = model.b_face(&state.grain);
    let mut theta = state.theta.clone();
    op.step_into(&state.theta, &b0, &mut theta)?;
    let trace = op.trace(&theta, &b0);
    let grain = model.grain_step(&state.grain, None, &state.trace)?;
    let mut cur = EffectiveState { t: state.t + cfg.dt, theta, grain, trace };

    let mut errors = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let b = model.b_face(&cur.grain);
        let mut theta_t = cur.theta.clone();
        op.step_into(&state.theta, &b, &mut theta_t)?;
        let trace_t = op.trace(&theta_t, &b);
        let grain_t = model.grain_step(&state.grain, Some(&cur.grain), &trace_t)?;

        let e = T::lit(eta);
        let theta_n: Vec<T> = cur.theta.iter().zip(&theta_t).map(|(a, b)| *a + e * (*b - *a)).collect();
        let trace_n: Vec<f64> = cur.trace.iter().zip(&trace_t).map(|(a, b)| a + eta * (b - a)).collect();
        let grain_n = model.relax(&cur.grain, grain_t, eta);
        let next = EffectiveState { t: cur.t, theta: theta_n, grain: grain_n, trace: trace_n };
        let err = compute_e(model, &next, &cur)?;
        errors.push(err);
        cur = next;
        if !err.is_finite() {
            return Err(Error::CouplingDiverged { iterations: errors.len(), history: errors });
        }
        if err < cfg.tau {
            converged = true;
            break;
        }
    }
    if !converged && cfg.strict {
        return Err(Error::CouplingDiverged { iterations: errors.len(), history: errors });
    }
    let report = IterationReport { step, t: cur.t, iterations: errors.len(), errors, eta, converged };
    Ok((cur, report))
}

#[derive(Debug, Clone)]
pub struct EffectiveRun<T> {
    pub model: EffectiveModel<T>,
    pub state: EffectiveState<T>,
    pub reports: Vec<IterationReport>,
    pub ledger: Vec<EffectiveLedgerRow>,
    pub stored0: f64,
}

impl<T> EffectiveRun<T> {
    pub fn max_iterations(&self) -> usize {
        self.reports.iter().map(|r| r.iterations).max().unwrap_or(0)
    }
}

pub fn run<T: Real>(cfg: &EffectiveConfig) -> Result<EffectiveRun<T>> {
    run_from(EffectiveModel::new(cfg)?, None)
}

/// Runs `model` from `start` (or its initial state) to the configured end time.
pub fn run_from<T: Real>(model: EffectiveModel<T>, start: Option<EffectiveState<T>>) -> Result<EffectiveRun<T>> {
    let mut state = start.unwrap_or_else(|| model.initial_state());
    let stored0 = model.stored_energy(&state);
    let source = model.total_source();
    let dt = model.cfg.dt;
    let mut injected = 0.0;
    let mut inflow = 0.0;
    let mut reports = Vec::new();
    let mut ledger = vec![EffectiveLedgerRow {
        t: state.t,
        k_iterations: 0,
        e_final: 0.0,
        eta: model.cfg.eta,
        energy_stored: stored0,
        energy_injected: 0.0,
        boundary_inflow: 0.0,
    }];
    for k in 0..model.cfg.steps() {
        let (next, report) = coupled_time_step(&model, &state, k + 1)?;
        state = next;
        injected += dt * source;
        inflow += dt * model.macro_op.boundary().inflow(&state.theta).as_f64();
        ledger.push(EffectiveLedgerRow {
            t: state.t,
            k_iterations: report.iterations,
            e_final: report.final_error(),
            eta: report.eta,
            energy_stored: model.stored_energy(&state),
            energy_injected: injected,
            boundary_inflow: inflow,
        });
        reports.push(report);
    }
    Ok(EffectiveRun { model, state, reports, ledger, stored0 })
}
