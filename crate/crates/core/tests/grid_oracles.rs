//! Analytic oracles for the finite-volume core.

use std::f64::consts::PI;

use grainlayer::geometry::{DomainLabels, Material};
use grainlayer::grid::{
    assemble_diffusion, backward_euler_step, norm, solve_linear, BoundaryCondition, ConductivityMap, Grid,
    NormKind, OuterBoundary, SolverConfig, TransmissionSpec,
};

fn fluid_box(grid: Grid) -> DomainLabels {
    let n = grid.ncells();
    DomainLabels { grid, labels: vec![Material::Fluid; n], sigma0: vec![], sigma_f: vec![], sigma_s: vec![], sigma: vec![] }
}

const UNIT: ConductivityMap = ConductivityMap { fluid: 1.0, solid: 1.0, grain: 1.0 };

fn dirichlet_both() -> OuterBoundary {
    OuterBoundary { top: BoundaryCondition::Dirichlet(0.0), bottom: BoundaryCondition::Dirichlet(0.0) }
}

/// `θ_t = θ_xx` on (0, 1), θ = 0 at both ends, θ(·, 0) = 1.
fn rod_series(x: f64, t: f64) -> f64 {
    (0..200)
        .map(|k| {
            let n = (2 * k + 1) as f64;
            4.0 / (n * PI) * (n * PI * x).sin() * (-(n * PI).powi(2) * t).exp()
        })
        .sum()
}

#[test]
fn dirichlet_rod_matches_fourier_series() {
    let n = 256;
    let h = 1.0 / n as f64;
    let dom = fluid_box(Grid::new(1, [n, 1, 1], [h, 1.0, 1.0], [0.0; 3], [false; 3]));
    let sys = assemble_diffusion::<f64>(&dom, &UNIT, &TransmissionSpec::default(), &dirichlet_both()).unwrap();
    let capacity = vec![h; n];
    let source = vec![0.0; n];
    let dt = 1e-4;
    let cfg = SolverConfig::default().with_tol(1e-12);
    let mut theta = vec![1.0; n];
    for _ in 0..1000 {
        theta = backward_euler_step(&sys, &capacity, dt, &theta, &source, &cfg).unwrap().0;
    }
    let err = (0..n).map(|c| (theta[c] - rod_series(dom.grid.center(c)[0], 0.1)).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "L∞ error {err}");
}

#[test]
fn l2_norm_of_identity_function() {
    let n = 100;
    let g = Grid::new(1, [n, 1, 1], [1.0 / n as f64, 1.0, 1.0], [0.0; 3], [false; 3]);
    let x: Vec<f64> = (0..n).map(|c| g.center(c)[0]).collect();
    let v = norm(&x, g.cell_volume(), None, NormKind::L2);
    assert!((v - 1.0 / 3f64.sqrt()).abs() < 1e-3, "{v}");
    assert_eq!(norm(&x, g.cell_volume(), None, NormKind::Linf), x[n - 1]);
}

#[test]
fn constant_field_norm_on_unit_volume() {
    let g = Grid::new(2, [4, 4, 1], [0.25, 0.25, 1.0], [0.0; 3], [false; 3]);
    assert!((norm(&vec![-2.5; 16], g.cell_volume(), None, NormKind::L2) - 2.5).abs() < 1e-14);
}

/// `-Δu = f` on (0,1)×(−1,1), periodic in x, u = 0 at y = ±1, with
/// `u = cos(2πx) sin(π(y+1)/2)`.
fn manufactured_error(n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let grid = Grid::new(2, [n, 2 * n, 1], [h, h, 1.0], [0.0, -1.0, 0.0], [true, false, false]);
    let dom = fluid_box(grid.clone());
    let mut sys = assemble_diffusion::<f64>(&dom, &UNIT, &TransmissionSpec::default(), &dirichlet_both()).unwrap();
    let u = |x: [f64; 3]| (2.0 * PI * x[0]).cos() * (0.5 * PI * (x[1] + 1.0)).sin();
    let k2 = 4.0 * PI * PI + 0.25 * PI * PI;
    let vol = grid.cell_volume();
    sys.rhs = (0..grid.ncells()).map(|c| k2 * u(grid.center(c)) * vol).collect();
    let sol = solve_linear(&sys, &SolverConfig::default().with_tol(1e-13)).unwrap();
    let exact: Vec<f64> = (0..grid.ncells()).map(|c| u(grid.center(c))).collect();
    let diff: Vec<f64> = sol.values.iter().zip(&exact).map(|(a, b)| a - b).collect();
    norm(&diff, vol, None, NormKind::L2)
}

#[test]
fn manufactured_solution_converges_second_order() {
    let e: Vec<f64> = [16, 32, 64].iter().map(|&n| manufactured_error(n)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "errors {e:?}, order {order}");
    }
}

#[test]
fn two_material_rod_is_piecewise_linear() {
    // Steady rod, θ(0) = 0, θ(1) = 1, κ = 1 on the left half and 0.1 on the right:
    // flux q = 1 / (0.5/1 + 0.5/0.1); cell-centred FV is exact for piecewise-linear profiles.
    let n = 64;
    let h = 1.0 / n as f64;
    let mut dom = fluid_box(Grid::new(1, [n, 1, 1], [h, 1.0, 1.0], [0.0; 3], [false; 3]));
    for c in n / 2..n {
        dom.labels[c] = Material::Solid;
    }
    dom.grid.for_each_face(|lo, hi, axis| {
        if dom.labels[lo] != dom.labels[hi] {
            dom.sigma0.push(grainlayer::geometry::InterfaceFace { lo, hi, axis, area: 1.0 });
        }
    });
    let kappa = ConductivityMap { fluid: 1.0, solid: 0.1, grain: 1.0 };
    let outer = OuterBoundary { top: BoundaryCondition::Dirichlet(1.0), bottom: BoundaryCondition::Dirichlet(0.0) };
    let sys = assemble_diffusion::<f64>(&dom, &kappa, &TransmissionSpec::all_perfect(), &outer).unwrap();
    let sol = solve_linear(&sys, &SolverConfig::default().with_tol(1e-14)).unwrap();
    let q = 1.0 / (0.5 + 5.0);
    for c in 0..n {
        let x = dom.grid.center(c)[0];
        let exact = if x < 0.5 { q * x } else { 0.5 * q + q / 0.1 * (x - 0.5) };
        assert!((sol.values[c] - exact).abs() < 1e-9, "cell {c}: {} vs {exact}", sol.values[c]);
    }
}
