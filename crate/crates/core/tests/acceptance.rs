//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.
//!
//! Every threshold lives in a named constant below; none is adjusted per run.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use grainlayer::cell::solve_psi;
use grainlayer::config::{ModelKind, RunConfig};
use grainlayer::effective::EffectiveLedgerRow;
use grainlayer::geometry::{exact_measures, CellShape};
use grainlayer::micro;
use grainlayer::studies::{self, EpsilonStudy, IterationStudy};

// Geometry (criterion 1).
const SPHERE_GAMMA: f64 = 1.005;
const SPHERE_VOL: f64 = 0.268;
const SPHERE_TOL: f64 = 0.001;
const CONNECTED_GAMMA: f64 = 1.12;
const CONNECTED_GAMMA_TOL: f64 = 0.02;
const CONNECTED_VOL: f64 = 0.34;
const CONNECTED_VOL_TOL: f64 = 0.01;

// Effective conductivity of the connected layer, normalised by κ^g (criterion 2).
const KAPPA_RATIO_RANGE: (f64, f64) = (0.17, 0.23);
const KAPPA_OFFDIAG_MAX: f64 = 0.01;
const CELL_RESOLUTION: usize = 64;

// Trivial correctors (criterion 3).
const TRIVIAL_PSI_MAX: f64 = 1e-8;
const SLAB_REL_TOL: f64 = 1e-6;

/// Minimum observed L² order between successive mesh pairs (criterion 4).
const MIN_MESH_ORDER: f64 = 1.8;

// Coupling iteration behaviour (criterion 6).
const RELAXATION_GAIN: f64 = 0.30;
const RATIO_SLACK: f64 = 0.05;

/// Uniform-source cell-count differences must vanish to this level (criterion 7).
const UNIFORM_M_TOL: f64 = 1e-10;

/// Relative energy budget per step (criterion 8).
const BUDGET_REL_TOL: f64 = 1e-8;
/// Slack on the maximum principle from the linear solver tolerance.
const MAX_PRINCIPLE_SLACK: f64 = 1e-9;

/// Largest admissible growth of any estimate group from the coarsest to the finest ε (criterion 9).
const MAX_ESTIMATE_GROWTH: f64 = 1.25;

const BUDGET_5_MIN: Duration = Duration::from_secs(300);
const BUDGET_15_MIN: Duration = Duration::from_secs(900);

fn report(n: u32, ok: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} — {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "criterion {n} failed: {}", detail.as_ref());
}

fn config(text: &str) -> RunConfig {
    RunConfig::from_str_with(text, &[]).expect("acceptance config")
}

#[test]
fn criterion_1_geometry_measures() {
    let s = exact_measures(&CellShape::Sphere3D { r: 0.4 }).unwrap();
    let c = exact_measures(&CellShape::ConnectedSphereCylinders3D { r: 0.4, r_c: 0.2 }).unwrap();
    let ok = (s.gamma_f - SPHERE_GAMMA).abs() <= SPHERE_TOL
        && (s.gamma_s - SPHERE_GAMMA).abs() <= SPHERE_TOL
        && (s.vol_z - SPHERE_VOL).abs() <= SPHERE_TOL
        && (c.gamma_f - CONNECTED_GAMMA).abs() <= CONNECTED_GAMMA_TOL
        && (c.gamma_s - CONNECTED_GAMMA).abs() <= CONNECTED_GAMMA_TOL
        && (c.vol_z - CONNECTED_VOL).abs() <= CONNECTED_VOL_TOL;
    report(
        1,
        ok,
        format!(
            "sphere |Γ^f|={:.4} |Γ^s|={:.4} |Z|={:.4}; connected |Γ^f|={:.4} |Γ^s|={:.4} |Z|={:.4}",
            s.gamma_f, s.gamma_s, s.vol_z, c.gamma_f, c.gamma_s, c.vol_z
        ),
    );
}

#[test]
fn criterion_2_connected_effective_conductivity() {
    let t = Instant::now();
    let k = solve_psi(&CellShape::ConnectedSphereCylinders3D { r: 0.4, r_c: 0.2 }, CELL_RESOLUTION).unwrap();
    let elapsed = t.elapsed();
    let in_range = |v: f64| (KAPPA_RATIO_RANGE.0..=KAPPA_RATIO_RANGE.1).contains(&v);
    let vertical_zero = (0..3).all(|i| k.get(2, i) == 0.0 && k.get(i, 2) == 0.0);
    let ok = in_range(k.get(0, 0))
        && in_range(k.get(1, 1))
        && k.get(0, 1).abs() < KAPPA_OFFDIAG_MAX
        && k.get(1, 0).abs() < KAPPA_OFFDIAG_MAX
        && vertical_zero
        && elapsed <= BUDGET_5_MIN;
    report(
        2,
        ok,
        format!(
            "κ̃11/κg={:.4} κ̃22/κg={:.4} |κ̃12|/κg={:.2e} vertical row/col zero={vertical_zero} ({:.1?})",
            k.get(0, 0),
            k.get(1, 1),
            k.get(0, 1).abs(),
            elapsed
        ),
    );
}

#[test]
fn criterion_3_trivial_correctors() {
    let mut ok = true;
    let mut detail = Vec::new();
    for d in [2, 3] {
        let full = solve_psi(&CellShape::FullCell { d }, 32).unwrap();
        let vol = full.measures.vol_z;
        let psi_max = full.psi.iter().flat_map(|p| p.values.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        let slab = solve_psi(&CellShape::Slab { d, w: 0.5 }, 32).unwrap();
        for i in 0..d - 1 {
            ok &= (full.get(i, i) - vol).abs() <= SLAB_REL_TOL * vol;
            ok &= ((slab.get(i, i) - 0.5) / 0.5).abs() <= SLAB_REL_TOL;
        }
        ok &= psi_max <= TRIVIAL_PSI_MAX;
        detail.push(format!(
            "d={d}: full κ̃11={:.8} (|Z|={vol}), max|ψ|={psi_max:.1e}, slab κ̃11={:.8}",
            full.get(0, 0),
            slab.get(0, 0)
        ));
    }
    report(3, ok, detail.join("; "));
}

const MESH_CONFIG: &str = "
[geometry]
shape = disc
r = 0.4

[physics]
case = b
f_g_profile = cosine
f_g_amplitude = 0.5
top = dirichlet

[discretization]
dt = 0.05
t_end = 0.5
tau = 1e-10
kappa_tilde = table
solver_tol = 1e-12
solver_max_iter = 100000
";

#[test]
fn criterion_4_mesh_convergence() {
    let t = Instant::now();
    let h = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let s = studies::study_mesh(&config(MESH_CONFIG), ModelKind::EffectiveB, &h).unwrap();
    let elapsed = t.elapsed();
    let ok = s.orders.len() == 2 && s.orders.iter().all(|&p| p >= MIN_MESH_ORDER) && elapsed <= BUDGET_5_MIN;
    report(4, ok, format!("errors {:?}, observed orders {:?} ({:.1?})", s.errors, s.orders, elapsed));
}

const EPSILON_CONFIG: &str = "
[geometry]
shape = disc
r = 0.4
eps = 0.1

[physics]
case = a
f_g = 1
velocity = off
top = dirichlet

[discretization]
h = 1/80
dt = 0.1
t_end = 1
cell_n = 8
cells_m = 4
";

fn epsilon_study() -> &'static (EpsilonStudy, Duration) {
    static STUDY: OnceLock<(EpsilonStudy, Duration)> = OnceLock::new();
    STUDY.get_or_init(|| {
        let t = Instant::now();
        let s = studies::study_epsilon(&config(EPSILON_CONFIG), &[0.1, 0.05, 0.025]).unwrap();
        (s, t.elapsed())
    })
}

#[test]
fn criterion_5_epsilon_convergence() {
    let (s, elapsed) = epsilon_study();
    let decreasing = s.diffs.windows(2).all(|w| w[1] < w[0]);
    report(
        5,
        decreasing && *elapsed <= BUDGET_15_MIN,
        format!("ε {:?} → ‖θ_ε − θ_hom‖ {:?} ({:.1?})", s.eps, s.diffs, elapsed),
    );
}

const ITERATION_CONFIG: &str = "
[geometry]
shape = disc
r = 0.4

[physics]
velocity = off

[discretization]
h = 1/32
dt = 0.1
t_end = 0.3
tau = 1e-6
max_iter = 1000
cell_n = 16
cells_m = 4
";

fn check_iterations(s: &IterationStudy) -> (bool, String) {
    let alphas = [0.1, 1.0, 10.0, 100.0];
    let at_one: Vec<usize> = alphas.iter().map(|&a| s.max_iterations(a, 1.0).unwrap()).collect();
    let monotone = at_one.windows(2).all(|w| w[1] >= w[0]);
    let base = s.max_iterations(100.0, 1.0).unwrap() as f64;
    let best = [1.2, 1.4, 1.6, 1.8].iter().map(|&e| s.max_iterations(100.0, e).unwrap()).min().unwrap() as f64;
    let gain = 1.0 - best / base;
    let mut ratio_ok = true;
    let mut ratios = Vec::new();
    for &a in &alphas {
        let row = s.row(a, 1.0).unwrap();
        if let Some(q) = row.mean_contraction_ratio {
            ratio_ok &= q <= row.ratio_bound + RATIO_SLACK;
            ratios.push(format!("{q:.3}≤{:.3}", row.ratio_bound + RATIO_SLACK));
        }
    }
    let saturated = s.rows.iter().any(|r| r.saturated);
    let ok = monotone && gain >= RELAXATION_GAIN && ratio_ok && !saturated;
    (ok, format!("{:?}: K(η=1)={at_one:?}, α=100 gain {:.0}%, ratios [{}]", s.model, 100.0 * gain, ratios.join(", ")))
}

#[test]
fn criterion_6_coupling_iterations() {
    let cfg = config(ITERATION_CONFIG);
    let alphas = [0.1, 1.0, 10.0, 100.0];
    let etas = [1.0, 1.2, 1.4, 1.6, 1.8];
    let mut ok = true;
    let mut detail = Vec::new();
    for model in [ModelKind::EffectiveA, ModelKind::EffectiveB] {
        let s = studies::study_iterations(&cfg, model, &alphas, &etas).unwrap();
        let (o, d) = check_iterations(&s);
        ok &= o;
        detail.push(d);
    }
    report(6, ok, detail.join("; "));
}

const CELLS_CONFIG: &str = "
[geometry]
shape = disc
r = 0.4

[physics]
case = a
f_g_profile = disc
f_g_radius = 0.3
top = dirichlet

[discretization]
h = 1/64
dt = 0.1
t_end = 0.5
tau = 1e-10
cell_n = 32
solver_tol = 1e-13
solver_max_iter = 100000
";

#[test]
fn criterion_7_cell_count_sensitivity() {
    let m = [3, 6, 16, 32];
    let disc = studies::study_cells(&config(CELLS_CONFIG), &m).unwrap();
    let uniform_cfg = RunConfig::from_str_with(CELLS_CONFIG, &["physics.f_g_profile=uniform".into()]).unwrap();
    let uniform = studies::study_cells(&uniform_cfg, &m).unwrap();
    let non_increasing = disc.diffs.windows(2).all(|w| w[1] <= w[0]);
    let flat = uniform.diffs.iter().all(|&d| d < UNIFORM_M_TOL);
    report(7, non_increasing && flat, format!("disc source {:?}; uniform source {:?}", disc.diffs, uniform.diffs));
}

fn effective_budget(ledger: &[EffectiveLedgerRow], stored0: f64) -> f64 {
    ledger
        .iter()
        .map(|r| {
            let scale = r.energy_stored.abs().max(r.energy_injected.abs()).max(stored0.abs());
            (r.energy_stored - stored0 - r.energy_injected - r.boundary_inflow).abs() / scale.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

const CONSERVATION_MICRO: &str = "
[geometry]
shape = disc
r = 0.4
eps = 0.1
lateral = 0.5
half_height = 0.5

[physics]
f_g = 1
f_f = 0.3
initial_fluid = 0.5

[discretization]
dt = 0.05
t_end = 0.5
solver_tol = 1e-12
";

const CONSERVATION_A: &str = "
[geometry]
shape = disc
r = 0.4

[physics]
case = a
f_g_profile = disc
initial_grain = 0.2

[discretization]
h = 1/16
dt = 0.1
t_end = 0.5
tau = 1e-10
cell_n = 16
cells_m = 16
solver_tol = 1e-12
";

const CONSERVATION_B: &str = "
[geometry]
shape = disc
r = 0.4

[physics]
case = b
f_g_profile = cosine
initial_fluid = 0.3

[discretization]
h = 1/16
dt = 0.1
t_end = 0.5
tau = 1e-10
kappa_tilde = table
solver_tol = 1e-12
";

const MAX_PRINCIPLE: &str = "
[geometry]
shape = disc
r = 0.4
eps = 0.1
lateral = 0.5
half_height = 0.5

[physics]
f_g = 0
initial_fluid = 1
initial_solid = 0
initial_grain = 0.5

[discretization]
dt = 0.05
t_end = 0.5
solver_tol = 1e-12
";

#[test]
fn criterion_8_conservation_and_maximum_principle() {
    let m = studies::run_micro(&config(CONSERVATION_MICRO)).unwrap();
    let micro_err = m
        .ledger
        .iter()
        .map(|r| r.imbalance(m.stored0).abs() / r.energy_stored.abs().max(r.energy_injected).max(m.stored0.abs()))
        .fold(0.0, f64::max);

    let a = studies::run_effective(&config(CONSERVATION_A), grainlayer::params::Case::A).unwrap();
    let a_err = effective_budget(&a.ledger, a.stored0);
    let b = studies::run_effective(&config(CONSERVATION_B), grainlayer::params::Case::B).unwrap();
    let b_err = effective_budget(&b.ledger, b.stored0);

    let mp = config(MAX_PRINCIPLE);
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    micro::run_with::<f64>(&mp.micro_config(), &mp.params, |_, th| {
        for &v in th {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    })
    .unwrap();
    let mp_ok = lo >= -MAX_PRINCIPLE_SLACK && hi <= 1.0 + MAX_PRINCIPLE_SLACK;

    let ok = micro_err <= BUDGET_REL_TOL && a_err <= BUDGET_REL_TOL && b_err <= BUDGET_REL_TOL && mp_ok;
    report(
        8,
        ok,
        format!(
            "relative budget: micro {micro_err:.1e}, effective-a {a_err:.1e}, effective-b {b_err:.1e}; \
             diffusion-only range [{lo:.3e}, {hi:.12}] ⊂ [0, 1]"
        ),
    );
}

#[test]
fn criterion_9_uniform_estimates() {
    let (s, _) = epsilon_study();
    let ok = s.growth.iter().all(|&g| g <= MAX_ESTIMATE_GROWTH);
    let pairs: Vec<String> = micro::EstimateReport::NAMES
        .iter()
        .zip(s.growth)
        .map(|(n, g)| format!("{n}={g:.3}"))
        .collect();
    report(9, ok, format!("growth over ε ∈ {:?}: {}", s.eps, pairs.join(" ")));
}
