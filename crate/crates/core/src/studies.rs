//! Reproduction studies: mesh convergence, ε convergence, coupling iteration counts,
//! cell-count sensitivity and line profiles.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ModelKind, RunConfig, StudyKind};
use crate::effective::{self, EffectiveRun};
use crate::error::{Error, Result};
use crate::geometry::{DomainLabels, Material};
use crate::grid::Grid;
use crate::io::{bank_table, extract_profile, fmt_f64, grain_cell_averages, profile_table, CsvTable, FieldDump};
use crate::micro::{self, estimate_growth, EstimateReport, MicroRun};
use crate::params::Case;

/// Final temperature of a run on its grid.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub labels: DomainLabels,
    pub values: Vec<f64>,
}

impl Snapshot {
    pub fn grid(&self) -> &Grid {
        &self.labels.grid
    }

    pub fn dump(&self) -> Result<FieldDump> {
        FieldDump::from_domain(&self.labels, self.values.clone())
    }
}

impl From<&MicroRun<f64>> for Snapshot {
    fn from(r: &MicroRun<f64>) -> Self {
        Snapshot { labels: r.system.labels.clone(), values: r.theta.values.clone() }
    }
}

impl From<&EffectiveRun<f64>> for Snapshot {
    fn from(r: &EffectiveRun<f64>) -> Self {
        Snapshot { labels: r.model.macro_op.labels.clone(), values: r.state.theta.clone() }
    }
}

fn case_of(model: ModelKind) -> Case {
    match model {
        ModelKind::EffectiveB => Case::B,
        _ => Case::A,
    }
}

pub fn run_micro(cfg: &RunConfig) -> Result<MicroRun<f64>> {
    let mc = cfg.micro_config();
    micro::run::<f64>(&mc, &cfg.params)
}

pub fn run_effective(cfg: &RunConfig, case: Case) -> Result<EffectiveRun<f64>> {
    effective::run::<f64>(&cfg.effective_config(case)?)
}

/// Runs `model` and returns its final field.
pub fn run_model(cfg: &RunConfig, model: ModelKind) -> Result<Snapshot> {
    Ok(match model {
        ModelKind::Micro => Snapshot::from(&run_micro(cfg)?),
        m => Snapshot::from(&run_effective(cfg, case_of(m))?),
    })
}

/// Volume-weighted restriction of `fine` onto `coarse`; spacings must nest.
pub fn restrict(fine: &Grid, values: &[f64], coarse: &Grid) -> Result<Vec<f64>> {
    let mut ratio = [1usize; 3];
    for a in 0..coarse.d {
        let r = coarse.spacing[a] / fine.spacing[a];
        let ri = r.round();
        if (r - ri).abs() > 1e-9 || ri < 1.0 || fine.dims[a] != coarse.dims[a] * ri as usize {
            return Err(Error::Config(format!("grids do not nest along axis {a} (ratio {r})")));
        }
        ratio[a] = ri as usize;
    }
    let per = (ratio.iter().product::<usize>()) as f64;
    let mut out = vec![0.0; coarse.ncells()];
    for (c, &v) in values.iter().enumerate().take(fine.ncells()) {
        let i = fine.coords(c);
        out[coarse.index([i[0] / ratio[0], i[1] / ratio[1], i[2] / ratio[2]])] += v;
    }
    out.iter_mut().for_each(|v| *v /= per);
    Ok(out)
}

/// `sqrt(Σ vol (a − b)²)` over cells where `mask` holds.
pub fn l2_diff(grid: &Grid, a: &[f64], b: &[f64], mask: impl Fn(usize) -> bool) -> f64 {
    let vol = grid.cell_volume();
    (0..grid.ncells()).filter(|&c| mask(c)).map(|c| (a[c] - b[c]).powi(2) * vol).sum::<f64>().sqrt()
}

/// Status of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Saturated,
    Failed,
}

impl RunRecord {
    fn ok(label: String) -> Self {
        RunRecord { label, status: RunStatus::Ok, detail: None }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    kind: String,
    config_hash: &'a str,
    sweep: &'a serde_json::Value,
    runs: &'a [RunRecord],
    outputs: Vec<&'a str>,
}

/// Tables, dumps and run records of a finished study.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub kind: StudyKind,
    pub sweep: serde_json::Value,
    pub runs: Vec<RunRecord>,
    pub tables: Vec<(String, CsvTable)>,
    pub dumps: Vec<(String, FieldDump)>,
}

impl StudyOutput {
    /// Writes every table and dump plus `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path, config_hash: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, t) in &self.tables {
            t.write(&dir.join(name))?;
        }
        for (name, d) in &self.dumps {
            d.write(&dir.join(name))?;
        }
        let manifest = Manifest {
            kind: self.kind.to_string(),
            config_hash,
            sweep: &self.sweep,
            runs: &self.runs,
            outputs: self.tables.iter().map(|t| t.0.as_str()).chain(self.dumps.iter().map(|d| d.0.as_str())).collect(),
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshStudy {
    /// Coarse spacings, reference excluded.
    pub h: Vec<f64>,
    pub h_reference: f64,
    pub errors: Vec<f64>,
    /// `orders[i]` between `h[i]` and `h[i + 1]`.
    pub orders: Vec<f64>,
    pub runs: Vec<RunRecord>,
}

impl MeshStudy {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["h", "L2_error_vs_reference", "observed_order"]);
        for (i, (&h, &e)) in self.h.iter().zip(&self.errors).enumerate() {
            let order = if i == 0 { String::new() } else { fmt_f64(self.orders[i - 1]) };
            t.push(vec![fmt_f64(h), fmt_f64(e), order]);
        }
        t
    }
}

/// Runs `model` on every spacing in `h_values` (strictly decreasing) and compares the
/// coarser runs against the last one.
pub fn study_mesh(cfg: &RunConfig, model: ModelKind, h_values: &[f64]) -> Result<MeshStudy> {
    let (&h_ref, coarse) = h_values.split_last().ok_or_else(|| Error::Config("empty h list".into()))?;
    let with_h = |h: f64| RunConfig { h, ..cfg.clone() };
    let reference = run_model(&with_h(h_ref), model)?;
    let results: Vec<Result<f64>> = coarse
        .par_iter()
        .map(|&h| {
            let s = run_model(&with_h(h), model)?;
            let r = restrict(reference.grid(), &reference.values, s.grid())?;
            Ok(l2_diff(s.grid(), &s.values, &r, |_| true))
        })
        .collect();
    let mut errors = Vec::new();
    let mut runs = Vec::new();
    for (h, r) in coarse.iter().zip(results) {
        let label = format!("h={}", fmt_f64(*h));
        match r {
            Ok(e) => {
                errors.push(e);
                runs.push(RunRecord::ok(label));
            }
            Err(e) => {
                errors.push(f64::NAN);
                runs.push(RunRecord { label, status: RunStatus::Failed, detail: Some(e.to_string()) });
            }
        }
    }
    runs.push(RunRecord::ok(format!("h={} (reference)", fmt_f64(h_ref))));
    let orders = coarse
        .windows(2)
        .zip(errors.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect();
    Ok(MeshStudy { h: coarse.to_vec(), h_reference: h_ref, errors, orders, runs })
}

#[derive(Debug, Clone)]
pub struct EpsilonStudy {
    pub eps: Vec<f64>,
    pub diffs: Vec<f64>,
    pub estimates: Vec<EstimateReport>,
    /// Per-group growth relative to the largest ε.
    pub growth: [f64; 7],
    pub runs: Vec<RunRecord>,
}

impl EpsilonStudy {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["eps", "L2_diff_micro_vs_effective"]);
        for (e, d) in self.eps.iter().zip(&self.diffs) {
            t.push_f64(&[*e, *d]);
        }
        t
    }

    pub fn estimates_table(&self) -> CsvTable {
        let mut header = vec!["eps"];
        header.extend(EstimateReport::NAMES);
        let mut t = CsvTable::new(&header);
        for (e, r) in self.eps.iter().zip(&self.estimates) {
            let mut row = vec![*e];
            row.extend(r.groups());
            t.push_f64(&row);
        }
        t
    }
}

/// Micro vs case (a) effective model for each ε; the spacing keeps the configured `h / ε`.
pub fn study_epsilon(cfg: &RunConfig, eps_values: &[f64]) -> Result<EpsilonStudy> {
    let per_eps = cfg.h / cfg.eps;
    let results: Vec<Result<(f64, EstimateReport)>> = eps_values
        .par_iter()
        .map(|&eps| {
            let c = RunConfig { eps, h: eps * per_eps, cutoff: eps, ..cfg.clone() };
            let m = run_micro(&c)?;
            let e = run_effective(&c, Case::A)?;
            let eg = &e.model.macro_op.labels.grid;
            let labels = &m.system.labels;
            let vol = labels.grid.cell_volume();
            let d2: f64 = (0..labels.grid.ncells())
                .filter(|&c| labels.labels[c] != Material::Grain)
                .map(|c| {
                    let x = labels.grid.center(c);
                    (m.theta.values[c] - e.state.theta[eg.locate(&x[..labels.grid.d])]).powi(2) * vol
                })
                .sum();
            Ok((d2.sqrt(), m.estimates))
        })
        .collect();
    let mut diffs = Vec::new();
    let mut estimates = Vec::new();
    let mut runs = Vec::new();
    for (eps, r) in eps_values.iter().zip(results) {
        let (d, est) = r?;
        diffs.push(d);
        estimates.push(est);
        runs.push(RunRecord::ok(format!("eps={}", fmt_f64(*eps))));
    }
    let growth = estimate_growth(&estimates);
    Ok(EpsilonStudy { eps: eps_values.to_vec(), diffs, estimates, growth, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    pub alpha: f64,
    pub eta: f64,
    pub max_iterations: usize,
    /// Mean fitted `E_{i+1}/E_i` over steps with at least three iterates.
    pub mean_contraction_ratio: Option<f64>,
    pub saturated: bool,
    /// `α̃ / (α̃ + ρ^f c^f / Δt)`.
    pub ratio_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStudy {
    pub model: ModelKind,
    pub rows: Vec<IterationRow>,
    pub runs: Vec<RunRecord>,
}

impl IterationStudy {
    pub fn table(&self) -> CsvTable {
        let mut t =
            CsvTable::new(&["alpha", "eta", "max_iterations_over_time_steps", "mean_contraction_ratio"]);
        for r in &self.rows {
            t.push(vec![
                fmt_f64(r.alpha),
                fmt_f64(r.eta),
                r.max_iterations.to_string(),
                r.mean_contraction_ratio.map(fmt_f64).unwrap_or_default(),
            ]);
        }
        t
    }

    pub fn row(&self, alpha: f64, eta: f64) -> Option<&IterationRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.eta == eta)
    }

    pub fn max_iterations(&self, alpha: f64, eta: f64) -> Option<usize> {
        self.row(alpha, eta).map(|r| r.max_iterations)
    }
}

/// Coupling iteration counts over an `α × η` sweep. Non-converged steps saturate at
/// `max_iter` instead of failing.
pub fn study_iterations(cfg: &RunConfig, model: ModelKind, alphas: &[f64], etas: &[f64]) -> Result<IterationStudy> {
    if model == ModelKind::Micro {
        return Err(Error::Config("iteration study needs an effective model".into()));
    }
    let points: Vec<(f64, f64)> = alphas.iter().flat_map(|&a| etas.iter().map(move |&e| (a, e))).collect();
    let results: Vec<Result<IterationRow>> = points
        .par_iter()
        .map(|&(alpha, eta)| {
            let c = RunConfig { eta, params: cfg.params.clone().with_alpha(alpha), ..cfg.clone() };
            let mut ec = c.effective_config(case_of(model))?;
            ec.strict = false;
            let run = effective::run::<f64>(&ec)?;
            let ratios: Vec<f64> = run.reports.iter().filter_map(|r| r.contraction_ratio()).collect();
            let at = run.model.alpha_tilde();
            Ok(IterationRow {
                alpha,
                eta,
                max_iterations: run.max_iterations(),
                mean_contraction_ratio: (!ratios.is_empty())
                    .then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
                saturated: run.reports.iter().any(|r| !r.converged),
                ratio_bound: at / (at + c.params.rho_c_f / c.dt),
            })
        })
        .collect();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for (&(alpha, eta), r) in points.iter().zip(results) {
        let label = format!("alpha={},eta={}", fmt_f64(alpha), fmt_f64(eta));
        let row = r?;
        let status = if row.saturated { RunStatus::Saturated } else { RunStatus::Ok };
        runs.push(RunRecord { label, status, detail: None });
        rows.push(row);
    }
    Ok(IterationStudy { model, rows, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellsStudy {
    pub m: Vec<usize>,
    /// L² difference of the macro temperature against the largest `M`.
    pub diffs: Vec<f64>,
    pub runs: Vec<RunRecord>,
}

impl CellsStudy {
    pub fn table(&self) -> CsvTable {
        let mut t = CsvTable::new(&["M", "L2_diff_vs_largest_M"]);
        for (m, d) in self.m.iter().zip(&self.diffs) {
            t.push(vec![m.to_string(), fmt_f64(*d)]);
        }
        t
    }
}

/// Case (a) runs over the cell counts `m_values` (strictly increasing; the last is the reference).
pub fn study_cells(cfg: &RunConfig, m_values: &[usize]) -> Result<CellsStudy> {
    let &m_ref = m_values.last().ok_or_else(|| Error::Config("empty M list".into()))?;
    let results: Vec<Result<Snapshot>> = m_values
        .par_iter()
        .map(|&m| run_model(&RunConfig { cells_m: m, ..cfg.clone() }, ModelKind::EffectiveA))
        .collect();
    let snaps = results.into_iter().collect::<Result<Vec<_>>>()?;
    let reference = snaps.last().unwrap();
    let diffs = snaps.iter().map(|s| l2_diff(s.grid(), &s.values, &reference.values, |_| true)).collect();
    let runs = m_values
        .iter()
        .map(|m| RunRecord::ok(if *m == m_ref { format!("M={m} (reference)") } else { format!("M={m}") }))
        .collect();
    Ok(CellsStudy { m: m_values.to_vec(), diffs, runs })
}

#[derive(Debug, Clone)]
pub struct ProfileStudy {
    pub dump: FieldDump,
    pub profile: Vec<(f64, f64)>,
    /// Lateral position and mean grain temperature.
    pub grain: Vec<([f64; 2], f64)>,
}

/// Runs `model`, samples the final field along `axis` and reports grain means.
pub fn study_profile(cfg: &RunConfig, model: ModelKind, axis: usize, offsets: &[f64]) -> Result<ProfileStudy> {
    let (snap, grain) = match model {
        ModelKind::Micro => {
            let r = run_micro(cfg)?;
            let s = Snapshot::from(&r);
            let g = grain_cell_averages(&s.dump()?, cfg.eps);
            (s, g)
        }
        m => {
            let r = run_effective(cfg, case_of(m))?;
            let g = grain_profile(&r);
            (Snapshot::from(&r), g)
        }
    };
    let dump = snap.dump()?;
    let profile = extract_profile(&dump, axis, offsets)?;
    Ok(ProfileStudy { dump, profile, grain })
}

/// Mean grain temperature at each grain point of an effective run.
pub fn grain_profile(r: &EffectiveRun<f64>) -> Vec<([f64; 2], f64)> {
    r.model.grain_points().into_iter().zip(r.model.grain_means(&r.state)).collect()
}

fn sweep_json<T: Serialize>(key: &str, values: &[T]) -> serde_json::Value {
    serde_json::json!({ key: values })
}

/// Runs the study configured in `[study]`.
pub fn run_study(cfg: &RunConfig) -> Result<StudyOutput> {
    let spec = cfg.study.as_ref().ok_or_else(|| Error::Config("no [study] section".into()))?;
    let d = cfg.d;
    let out = match spec.kind {
        StudyKind::Mesh => {
            let s = study_mesh(cfg, spec.model, &spec.h_values)?;
            StudyOutput {
                kind: spec.kind,
                sweep: sweep_json("h_values", &spec.h_values),
                runs: s.runs.clone(),
                tables: vec![("mesh.csv".into(), s.table())],
                dumps: vec![],
            }
        }
        StudyKind::Epsilon => {
            let s = study_epsilon(cfg, &spec.eps_values)?;
            StudyOutput {
                kind: spec.kind,
                sweep: sweep_json("eps_values", &spec.eps_values),
                runs: s.runs.clone(),
                tables: vec![("epsilon.csv".into(), s.table()), ("estimates.csv".into(), s.estimates_table())],
                dumps: vec![],
            }
        }
        StudyKind::Iterations => {
            let mut runs = Vec::new();
            let mut tables = Vec::new();
            for model in [ModelKind::EffectiveA, ModelKind::EffectiveB] {
                let name = if model == ModelKind::EffectiveA { "effective-a" } else { "effective-b" };
                let s = study_iterations(cfg, model, &spec.alpha_values, &spec.eta_values)?;
                runs.extend(s.runs.iter().map(|r| RunRecord { label: format!("{name}:{}", r.label), ..r.clone() }));
                tables.push((format!("iterations_{name}.csv"), s.table()));
            }
            StudyOutput {
                kind: spec.kind,
                sweep: serde_json::json!({ "alpha_values": spec.alpha_values, "eta_values": spec.eta_values }),
                runs,
                tables,
                dumps: vec![],
            }
        }
        StudyKind::Cells => {
            let s = study_cells(cfg, &spec.m_values)?;
            StudyOutput {
                kind: spec.kind,
                sweep: sweep_json("m_values", &spec.m_values),
                runs: s.runs.clone(),
                tables: vec![("cells.csv".into(), s.table())],
                dumps: vec![],
            }
        }
        StudyKind::Profile => {
            let offsets = if spec.profile_offset.is_empty() { vec![0.5; d - 1] } else { spec.profile_offset.clone() };
            let s = study_profile(cfg, spec.model, spec.profile_axis, &offsets)?;
            let mut dumps = Vec::new();
            if spec.dump.as_deref().is_some_and(|v| v != "false") {
                dumps.push(("final.glfd".to_string(), s.dump.clone()));
            }
            let points: Vec<[f64; 2]> = s.grain.iter().map(|g| g.0).collect();
            let means: Vec<f64> = s.grain.iter().map(|g| g.1).collect();
            StudyOutput {
                kind: spec.kind,
                sweep: serde_json::json!({ "axis": spec.profile_axis, "offset": offsets }),
                runs: vec![RunRecord::ok("profile".into())],
                tables: vec![("profile.csv".into(), profile_table(&s.profile)), ("grain.csv".into(), bank_table(d, &points, &means))],
                dumps,
            }
        }
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_averages_blocks() {
        let fine = Grid::new(2, [4, 4, 1], [0.25, 0.5, 1.0], [0.0, -1.0, 0.0], [true, false, false]);
        let coarse = Grid::new(2, [2, 2, 1], [0.5, 1.0, 1.0], [0.0, -1.0, 0.0], [true, false, false]);
        let v: Vec<f64> = (0..16).map(|c| fine.center(c)[0] + 3.0 * fine.center(c)[1]).collect();
        let r = restrict(&fine, &v, &coarse).unwrap();
        for c in 0..4 {
            let x = coarse.center(c);
            assert!((r[c] - (x[0] + 3.0 * x[1])).abs() < 1e-14);
        }
        let bad = Grid::new(2, [3, 2, 1], [1.0 / 3.0, 1.0, 1.0], [0.0, -1.0, 0.0], [true, false, false]);
        assert!(restrict(&fine, &v, &bad).is_err());
    }

    #[test]
    fn mesh_table_layout() {
        let s = MeshStudy {
            h: vec![0.5, 0.25],
            h_reference: 0.125,
            errors: vec![4.0, 1.0],
            orders: vec![2.0],
            runs: vec![],
        };
        assert_eq!(s.table().to_string(), "h,L2_error_vs_reference,observed_order\n0.5,4.0,\n0.25,1.0,2.0\n");
    }
}
