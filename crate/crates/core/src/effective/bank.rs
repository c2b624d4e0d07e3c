use rayon::prelude::*;

use crate::cell::{CellOperator, CellProblemState};
use crate::error::{Error, Result};
use crate::params::PhysicalParams;
use crate::scalar::Real;

/// Linear interpolation weights on sorted `nodes`, constant outside the hull.
fn weights_1d(nodes: &[f64], x: f64) -> [(usize, f64); 2] {
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        return [(0, 1.0), (0, 0.0)];
    }
    if x >= nodes[last] {
        return [(last, 1.0), (last, 0.0)];
    }
    let k = nodes.partition_point(|&v| v <= x) - 1;
    let t = (x - nodes[k]) / (nodes[k + 1] - nodes[k]);
    [(k, 1.0 - t), (k + 1, t)]
}

/// Multilinear interpolation from a tensor grid of nodes (`axes[0]` fastest) to points.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorInterp {
    /// Per target point: `(node index, weight)` pairs.
    pub stencils: Vec<Vec<(usize, f64)>>,
}

impl TensorInterp {
    pub fn new(axes: &[Vec<f64>], targets: &[[f64; 2]]) -> Self {
        let stencils = targets
            .iter()
            .map(|x| {
                let wx = weights_1d(&axes[0], x[0]);
                let mut st = Vec::with_capacity(4);
                if axes.len() == 1 {
                    st.extend(wx.iter().filter(|(_, w)| *w != 0.0).copied());
                } else {
                    let n0 = axes[0].len();
                    let wy = weights_1d(&axes[1], x[1]);
                    for (j, b) in wy {
                        for (i, a) in wx {
                            if a * b != 0.0 {
                                st.push((i + n0 * j, a * b));
                            }
                        }
                    }
                }
                st
            })
            .collect();
        TensorInterp { stencils }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.stencils.iter().map(|st| st.iter().map(|(k, w)| w * values[*k]).sum()).collect()
    }
}

/// Uniform point layout over `[0, L_1] (× [0, L_2])`: midpoints of `M` equal segments in
/// 2D, a `√M × √M` grid of midpoints in 3D.
pub fn bank_points(d: usize, lateral: [f64; 2], m: usize) -> Result<(Vec<Vec<f64>>, Vec<[f64; 2]>)> {
    if m == 0 {
        return Err(Error::Config("cell bank needs at least one point".into()));
    }
    let mid = |n: usize, l: f64| (0..n).map(|j| (j as f64 + 0.5) * l / n as f64).collect::<Vec<_>>();
    match d {
        2 => {
            let xs = mid(m, lateral[0]);
            let pts = xs.iter().map(|&x| [x, 0.0]).collect();
            Ok((vec![xs], pts))
        }
        3 => {
            let s = (m as f64).sqrt().round() as usize;
            if s * s != m {
                return Err(Error::Config(format!("cell count {m} is not a perfect square")));
            }
            let (xs, ys) = (mid(s, lateral[0]), mid(s, lateral[1]));
            let mut pts = Vec::with_capacity(m);
            for y in &ys {
                for x in &xs {
                    pts.push([*x, *y]);
                }
            }
            Ok((vec![xs, ys], pts))
        }
        _ => Err(Error::Config(format!("cell bank needs d = 2 or 3, got {d}"))),
    }
}

/// `M` transient grain cell problems attached to points of `Σ`.
#[derive(Debug, Clone)]
pub struct CellBank<T> {
    pub op: CellOperator<T>,
    pub points: Vec<[f64; 2]>,
    /// Quadrature weight `|Σ| / M` of each point.
    pub weight: f64,
    /// Source `f^g(x_j)`, W/m³.
    pub f_g: Vec<f64>,
    /// Face values → points.
    pub to_points: TensorInterp,
    /// Point values → faces.
    pub to_faces: TensorInterp,
    alpha: [f64; 2],
}

impl<T: Real> CellBank<T> {
    /// `face_axes` are the lateral face-centre coordinates of the macro `Σ` grid.
    pub fn new(
        op: CellOperator<T>,
        d: usize,
        lateral: [f64; 2],
        m: usize,
        face_axes: &[Vec<f64>],
        face_centers: &[[f64; 2]],
        p: &PhysicalParams,
    ) -> Result<Self> {
        let (axes, points) = bank_points(d, lateral, m)?;
        let area: f64 = lateral[..d - 1].iter().product();
        let f_g = points
            .iter()
            .map(|x| p.f_g.eval(&[x[0], x[1], 0.0][..], d))
            .collect();
        Ok(CellBank {
            to_points: TensorInterp::new(face_axes, &points),
            to_faces: TensorInterp::new(&axes, face_centers),
            weight: area / m as f64,
            f_g,
            points,
            op,
            alpha: [p.alpha_f, p.alpha_s],
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn initial(&self, value: f64) -> Vec<CellProblemState<T>> {
        (0..self.len()).map(|j| self.op.initial_state(j, value)).collect()
    }

    /// Sink slope per unit area, `Σ_k α^k |Γ^k|`.
    pub fn a_density(&self) -> f64 {
        let m = &self.op.raster;
        self.alpha[0] * m.corrected_measure(true) + self.alpha[1] * m.corrected_measure(false)
    }

    /// Sink offset per unit area on every face, `Σ_k α^k g_k` interpolated from the points.
    pub fn b_density(&self, states: &[CellProblemState<T>]) -> Vec<f64> {
        let nodal: Vec<f64> = states
            .iter()
            .map(|s| {
                let (gf, gs) = self.op.boundary_exchange_integrals(s);
                self.alpha[0] * gf + self.alpha[1] * gs
            })
            .collect();
        self.to_faces.apply(&nodal)
    }

    /// Steps every cell from `old` with the trace interpolated from face values.
    pub fn step(&self, old: &[CellProblemState<T>], face_trace: &[f64]) -> Result<Vec<CellProblemState<T>>> {
        let traces = self.to_points.apply(face_trace);
        old.par_iter()
            .zip(traces.par_iter())
            .zip(self.f_g.par_iter())
            .map(|((s, tr), f)| {
                let mut next = s.clone();
                self.op.step(&mut next, *tr, *f)?;
                Ok(next)
            })
            .collect()
    }

    /// `Σ_j w_j ‖a_j − b_j‖²_{L²(Z)}`.
    pub fn diff_sq(&self, a: &[CellProblemState<T>], b: &[CellProblemState<T>]) -> f64 {
        a.iter().zip(b).map(|(x, y)| self.weight * self.op.diff_sq(x, y)).sum()
    }

    /// `Σ_j w_j ∫_Z ρc θ^g`, J.
    pub fn stored_energy(&self, states: &[CellProblemState<T>]) -> f64 {
        states.iter().map(|s| self.weight * self.op.rho_c * self.op.integral(s)).sum()
    }

    pub fn total_source(&self) -> f64 {
        let vol = self.op.raster.raster_volume();
        self.f_g.iter().map(|f| self.weight * f * vol).sum()
    }

    /// Cell-averaged grain temperature at each point.
    pub fn means(&self, states: &[CellProblemState<T>]) -> Vec<f64> {
        states.iter().map(|s| self.op.mean(s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_nodes() {
        let (axes, pts) = bank_points(3, [1.0, 1.0], 9).unwrap();
        let it = TensorInterp::new(&axes, &pts);
        let v: Vec<f64> = (0..9).map(|k| (k * k) as f64).collect();
        let out = it.apply(&v);
        for k in 0..9 {
            assert!((out[k] - v[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_extrapolation_and_linear_between() {
        let it = TensorInterp::new(&[vec![0.25, 0.75]], &[[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]);
        assert_eq!(it.apply(&[1.0, 3.0]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn non_square_bank_rejected() {
        assert!(bank_points(3, [1.0, 1.0], 6).is_err());
        assert_eq!(bank_points(2, [1.0, 0.0], 4).unwrap().1[1], [0.375, 0.0]);
    }
}
