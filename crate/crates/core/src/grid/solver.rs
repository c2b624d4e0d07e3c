use crate::error::{Error, Result};
use crate::scalar::{dot, norm2, Real};

use super::sparse::{CsrMatrix, SparseSystem};
use super::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Conjugate gradients (symmetric systems).
    Cg,
    /// Stabilized bi-conjugate gradients (advective systems).
    BiCgStab,
    /// CG when the system is flagged symmetric, BiCGStab otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    /// Relative residual target `|b - Ax| / |b|`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Remove the constant mode from residual and iterate (pure Neumann systems).
    pub project_nullspace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { method: Method::Auto, rel_tol: 1e-10, max_iter: 20_000, project_nullspace: false }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::Config(format!("solver tolerance {} outside (0, 1e-4]", self.rel_tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub rel_residual: f64,
    /// Relative residual after every iteration.
    pub history: Vec<f64>,
}

/// Solves `sys` from a zero initial guess.
pub fn solve_linear<T: Real>(sys: &SparseSystem<T>, cfg: &SolverConfig) -> Result<Field<T>> {
    let mut x = vec![T::zero(); sys.n()];
    let mut cfg = *cfg;
    if sys.singular && !cfg.project_nullspace {
        return Err(Error::Config("singular system requires nullspace projection".into()));
    }
    cfg.project_nullspace |= sys.singular;
    solve_with_guess(&sys.matrix, &sys.rhs, &mut x, sys.symmetric, &cfg)?;
    Ok(Field::new(x))
}

/// Solves `A x = b` starting from the contents of `x`, with diagonal (Jacobi) scaling.
pub fn solve_with_guess<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    symmetric: bool,
    cfg: &SolverConfig,
) -> Result<SolveStats> {
    cfg.validate()?;
    assert_eq!(b.len(), a.n);
    assert_eq!(x.len(), a.n);
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();

    let projected: Vec<T>;
    let b = if cfg.project_nullspace {
        let n = T::lit(b.len() as f64);
        let mean = b.iter().copied().sum::<T>() / n;
        let rms = norm2(b) / n.sqrt();
        if mean.abs() > T::lit(cfg.rel_tol) * rms.max(T::min_positive_value()) {
            return Err(Error::IncompatibleRhs { mean: mean.as_f64() });
        }
        let mut v = b.to_vec();
        remove_mean(&mut v);
        projected = v;
        remove_mean(x);
        &projected[..]
    } else {
        b
    };

    let method = match cfg.method {
        Method::Auto if symmetric => Method::Cg,
        Method::Auto => Method::BiCgStab,
        m => m,
    };
    let stats = match method {
        Method::Cg => pcg(a, b, x, &inv_diag, cfg),
        _ => bicgstab(a, b, x, &inv_diag, cfg),
    }?;
    if cfg.project_nullspace {
        remove_mean(x);
    }
    Ok(stats)
}

fn remove_mean<T: Real>(v: &mut [T]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().copied().sum::<T>() / T::lit(v.len() as f64);
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn residual<T: Real>(a: &CsrMatrix<T>, b: &[T], x: &[T], r: &mut [T]) {
    a.matvec_into(x, r);
    for i in 0..r.len() {
        r[i] = b[i] - r[i];
    }
}

fn diverged(iterations: usize, history: &[f64]) -> Error {
    let tail = history[history.len().saturating_sub(8)..].to_vec();
    Error::SolverDiverged { iterations, history: tail }
}

fn pcg<T: Real>(a: &CsrMatrix<T>, b: &[T], x: &mut [T], inv_diag: &[T], cfg: &SolverConfig) -> Result<SolveStats> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0, history: vec![] });
    }
    let tol = T::lit(cfg.rel_tol) * bnorm;
    let mut r = vec![T::zero(); n];
    residual(a, b, x, &mut r);
    if cfg.project_nullspace {
        remove_mean(&mut r);
    }
    let mut history = Vec::new();
    let mut rnorm = norm2(&r);
    if rnorm <= tol {
        return Ok(SolveStats { iterations: 0, rel_residual: (rnorm / bnorm).as_f64(), history });
    }
    let mut z: Vec<T> = r.iter().zip(inv_diag).map(|(r, d)| *r * *d).collect();
    if cfg.project_nullspace {
        remove_mean(&mut z);
    }
    let mut p = z.clone();
    let mut q = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    for it in 1..=cfg.max_iter {
        a.matvec_into(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= T::zero() {
            return Err(diverged(it, &history));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if cfg.project_nullspace {
            remove_mean(&mut r);
        }
        rnorm = norm2(&r);
        history.push((rnorm / bnorm).as_f64());
        if rnorm <= tol {
            return Ok(SolveStats { iterations: it, rel_residual: (rnorm / bnorm).as_f64(), history });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        if cfg.project_nullspace {
            remove_mean(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(diverged(cfg.max_iter, &history))
}

fn bicgstab<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    x: &mut [T],
    inv_diag: &[T],
    cfg: &SolverConfig,
) -> Result<SolveStats> {
    let n = a.n;
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(SolveStats { iterations: 0, rel_residual: 0.0, history: vec![] });
    }
    let tol = T::lit(cfg.rel_tol) * bnorm;
    let mut r = vec![T::zero(); n];
    residual(a, b, x, &mut r);
    let mut history = Vec::new();
    if norm2(&r) <= tol {
        return Ok(SolveStats { iterations: 0, rel_residual: (norm2(&r) / bnorm).as_f64(), history });
    }
    let mut r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    let mut v = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut p_hat = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut s_hat = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    for it in 1..=cfg.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == T::zero() || omega == T::zero() {
            // breakdown: restart the shadow space from the current residual
            residual(a, b, x, &mut r);
            r_hat.copy_from_slice(&r);
            rho = T::one();
            alpha = T::one();
            omega = T::one();
            v.iter_mut().for_each(|e| *e = T::zero());
            p.iter_mut().for_each(|e| *e = T::zero());
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            p_hat[i] = p[i] * inv_diag[i];
        }
        a.matvec_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == T::zero() {
            return Err(diverged(it, &history));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm2(&s);
        if snorm <= tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            history.push((snorm / bnorm).as_f64());
            return Ok(SolveStats { iterations: it, rel_residual: (snorm / bnorm).as_f64(), history });
        }
        for i in 0..n {
            s_hat[i] = s[i] * inv_diag[i];
        }
        a.matvec_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = norm2(&r);
        history.push((rnorm / bnorm).as_f64());
        if rnorm <= tol {
            return Ok(SolveStats { iterations: it, rel_residual: (rnorm / bnorm).as_f64(), history });
        }
    }
    Err(diverged(cfg.max_iter, &history))
}
