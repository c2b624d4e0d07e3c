//! Sectioned `key = value` run configuration with schema validation and CLI overrides.

use std::collections::BTreeMap;
use std::path::Path;

use ini::Ini;
use sha2::{Digest, Sha256};

use crate::cell::{solve_psi_with, PsiOptions, DEFAULT_CELL_RESOLUTION};
use crate::effective::{CellSpec, Closure, EffectiveConfig, InterfaceSpec};
use crate::error::{Error, Result};
use crate::geometry::{CellShape, DomainExtent, ShapeKind};
use crate::grid::{BoundaryCondition, Method, SolverConfig};
use crate::micro::{InitialCondition, MicroConfig};
use crate::params::{Case, PhysicalParams, SourceProfile, VelocitySpec};

const SCHEMA: &[(&str, &[&str])] = &[
    ("geometry", &["shape", "r", "r_c", "w", "d", "eps", "lateral", "half_height", "lateral_periodic"]),
    (
        "physics",
        &[
            "case",
            "kappa_f",
            "kappa_s",
            "kappa_g",
            "rho_c_f",
            "rho_c_s",
            "rho_c_g",
            "alpha_f",
            "alpha_s",
            "f_f",
            "f_s",
            "f_g",
            "f_g_profile",
            "f_g_radius",
            "f_g_amplitude",
            "velocity",
            "speed",
            "top",
            "top_value",
            "initial_fluid",
            "initial_solid",
            "initial_grain",
        ],
    ),
    (
        "discretization",
        &[
            "h",
            "dt",
            "t_end",
            "tau",
            "eta",
            "max_iter",
            "cell_n",
            "cells_m",
            "kappa_tilde",
            "cutoff",
            "solver",
            "solver_tol",
            "solver_max_iter",
        ],
    ),
    (
        "study",
        &[
            "kind",
            "model",
            "h_values",
            "eps_values",
            "alpha_values",
            "eta_values",
            "m_values",
            "profile_axis",
            "profile_offset",
            "dump",
        ],
    ),
];

/// Raw validated key/value pairs, `section -> key -> value`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        let mut raw = RawConfig::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside of a [section]".into()));
                }
                continue;
            };
            for (k, v) in props.iter() {
                raw.set(section, k, v)?;
            }
        }
        Ok(raw)
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) =
            spec.split_once('=').ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override key '{path}' must be section.key")))?;
        self.set(section, key, value)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let (section, key) = (section.trim().to_ascii_lowercase(), key.trim().to_ascii_lowercase());
        let allowed = SCHEMA
            .iter()
            .find(|(s, _)| *s == section)
            .ok_or_else(|| Error::Config(format!("unknown section [{section}]")))?
            .1;
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!("unknown key '{key}' in [{section}]")));
        }
        self.sections.entry(section).or_default().insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section).and_then(|s| s.get(key)).map(String::as_str)
    }

    /// Canonical `[section] key=value` text with sorted keys.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (s, kv) in &self.sections {
            out.push_str(&format!("[{s}]\n"));
            for (k, v) in kv {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn num(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => parse_number(v).map_err(|_| Error::Config(format!("{section}.{key}: '{v}' is not a number"))),
        }
    }

    fn int(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::Config(format!("{section}.{key}: '{v}' is not an integer"))),
        }
    }

    fn flag(&self, section: &str, key: &str, default: bool) -> Result<bool> {
        match self.get(section, key).map(str::to_ascii_lowercase).as_deref() {
            None => Ok(default),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some("false" | "no" | "0" | "off") => Ok(false),
            Some(v) => Err(Error::Config(format!("{section}.{key}: '{v}' is not a boolean"))),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Vec<f64>> {
        match self.get(section, key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_number(s).map_err(|_| Error::Config(format!("{section}.{key}: bad entry '{s}'"))))
                .collect(),
        }
    }
}

/// Accepts plain floats and fractions like `1/16`.
pub fn parse_number(s: &str) -> std::result::Result<f64, ()> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| ())?, b.trim().parse().map_err(|_| ())?);
        if b == 0.0 {
            return Err(());
        }
        return Ok(a / b);
    }
    s.parse().map_err(|_| ())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Mesh,
    Epsilon,
    Iterations,
    Cells,
    Profile,
}

impl std::str::FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "mesh" => StudyKind::Mesh,
            "epsilon" => StudyKind::Epsilon,
            "iterations" => StudyKind::Iterations,
            "cells" => StudyKind::Cells,
            "profile" => StudyKind::Profile,
            o => return Err(Error::Config(format!("unknown study kind '{o}'"))),
        })
    }
}

impl std::fmt::Display for StudyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StudyKind::Mesh => "mesh",
            StudyKind::Epsilon => "epsilon",
            StudyKind::Iterations => "iterations",
            StudyKind::Cells => "cells",
            StudyKind::Profile => "profile",
        })
    }
}

/// Which model a study or run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Micro,
    EffectiveA,
    EffectiveB,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "micro" => ModelKind::Micro,
            "effective-a" | "effective_a" => ModelKind::EffectiveA,
            "effective-b" | "effective_b" => ModelKind::EffectiveB,
            o => return Err(Error::Config(format!("unknown model '{o}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub model: ModelKind,
    pub h_values: Vec<f64>,
    pub eps_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub eta_values: Vec<f64>,
    pub m_values: Vec<usize>,
    pub profile_axis: usize,
    pub profile_offset: Vec<f64>,
    pub dump: Option<String>,
}

impl StudySpec {
    pub fn validate(&self) -> Result<()> {
        let strictly = |v: &[f64], name: &str, dec: bool| -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("study needs a non-empty {name} list")));
            }
            if v.windows(2).any(|w| if dec { w[1] >= w[0] } else { w[1] <= w[0] }) {
                let dir = if dec { "decreasing" } else { "increasing" };
                return Err(Error::Config(format!("{name} must be strictly {dir}")));
            }
            Ok(())
        };
        match self.kind {
            StudyKind::Mesh => {
                strictly(&self.h_values, "h_values", true)?;
                if self.h_values.len() < 3 {
                    return Err(Error::Config("mesh study needs at least three spacings".into()));
                }
            }
            StudyKind::Epsilon => strictly(&self.eps_values, "eps_values", true)?,
            StudyKind::Iterations => {
                strictly(&self.alpha_values, "alpha_values", false)?;
                strictly(&self.eta_values, "eta_values", false)?;
            }
            StudyKind::Cells => {
                let m: Vec<f64> = self.m_values.iter().map(|&m| m as f64).collect();
                strictly(&m, "m_values", false)?;
            }
            StudyKind::Profile => {}
        }
        Ok(())
    }
}

/// Where the connected-layer coefficients come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaTildeSource {
    /// Tabulated sphere-with-connectors values.
    Table,
    /// Solve the corrector problems for the configured shape.
    Correctors,
    /// `κ̃_ii = value · κ^g` for the lateral directions.
    Ratio(f64),
}

/// Fully typed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub raw: RawConfig,
    pub shape: CellShape,
    pub d: usize,
    pub eps: f64,
    pub lateral: f64,
    pub half_height: f64,
    pub lateral_periodic: bool,
    pub params: PhysicalParams,
    pub velocity: VelocitySpec,
    pub top: BoundaryCondition,
    pub initial: InitialCondition,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub tau: f64,
    pub eta: f64,
    pub max_iter: usize,
    pub cell_n: usize,
    pub cells_m: usize,
    pub kappa_tilde: KappaTildeSource,
    pub cutoff: f64,
    pub solver: SolverConfig,
    pub study: Option<StudySpec>,
}

impl RunConfig {
    pub fn from_str_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut raw = RawConfig::parse(text)?;
        for o in overrides {
            raw.apply_override(o)?;
        }
        Self::from_raw(raw)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_with(&text, overrides)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let g = "geometry";
        let kind: ShapeKind = raw.get(g, "shape").unwrap_or("disc").parse()?;
        let r = raw.num(g, "r", 0.4)?;
        let r_c = raw.num(g, "r_c", 0.2)?;
        let w = raw.num(g, "w", 0.5)?;
        let dim_default = match kind {
            ShapeKind::Disc => 2,
            ShapeKind::Sphere | ShapeKind::Connected => 3,
            ShapeKind::Full | ShapeKind::Slab => 2,
        };
        let shape_d = match kind {
            ShapeKind::Full | ShapeKind::Slab => raw.int(g, "d", dim_default)?,
            _ => dim_default,
        };
        let shape = match kind {
            ShapeKind::Disc => CellShape::Disc2D { r },
            ShapeKind::Sphere => CellShape::Sphere3D { r },
            ShapeKind::Connected => CellShape::ConnectedSphereCylinders3D { r, r_c },
            ShapeKind::Full => CellShape::FullCell { d: shape_d },
            ShapeKind::Slab => CellShape::Slab { d: shape_d, w },
        };
        shape.validate()?;
        let d = raw.int(g, "d", shape.dim())?;

        let p = "physics";
        let case: Case = raw.get(p, "case").unwrap_or("a").parse()?;
        let dflt = PhysicalParams::default();
        let f_g_value = raw.num(p, "f_g", 1.0)?;
        let f_g = match raw.get(p, "f_g_profile").unwrap_or("uniform").to_ascii_lowercase().as_str() {
            "uniform" => SourceProfile::Uniform(f_g_value),
            "disc" => SourceProfile::Disc {
                value: f_g_value,
                radius: raw.num(p, "f_g_radius", 0.3)?,
                center: [0.5, 0.5],
            },
            "cosine" => SourceProfile::Cosine { mean: f_g_value, amplitude: raw.num(p, "f_g_amplitude", 0.5)? },
            o => return Err(Error::Config(format!("unknown f_g_profile '{o}'"))),
        };
        let params = PhysicalParams {
            kappa_f: raw.num(p, "kappa_f", dflt.kappa_f)?,
            kappa_s: raw.num(p, "kappa_s", dflt.kappa_s)?,
            kappa_g: raw.num(p, "kappa_g", dflt.kappa_g)?,
            rho_c_f: raw.num(p, "rho_c_f", dflt.rho_c_f)?,
            rho_c_s: raw.num(p, "rho_c_s", dflt.rho_c_s)?,
            rho_c_g: raw.num(p, "rho_c_g", dflt.rho_c_g)?,
            alpha_f: raw.num(p, "alpha_f", dflt.alpha_f)?,
            alpha_s: raw.num(p, "alpha_s", dflt.alpha_s)?,
            f_f: SourceProfile::Uniform(raw.num(p, "f_f", 0.0)?),
            f_s: SourceProfile::Uniform(raw.num(p, "f_s", 0.0)?),
            f_g,
            case,
        };
        params.validate()?;
        let velocity = match raw.get(p, "velocity").unwrap_or("off").to_ascii_lowercase().as_str() {
            "off" | "none" => VelocitySpec::Off,
            "shear" => VelocitySpec::Shear { speed: raw.num(p, "speed", 1.0)? },
            o => return Err(Error::Config(format!("unknown velocity '{o}'"))),
        };
        let top = match raw.get(p, "top").unwrap_or("neumann").to_ascii_lowercase().as_str() {
            "neumann" => BoundaryCondition::Neumann,
            "dirichlet" => BoundaryCondition::Dirichlet(raw.num(p, "top_value", 0.0)?),
            o => return Err(Error::Config(format!("unknown top boundary '{o}'"))),
        };
        let initial = InitialCondition {
            fluid: raw.num(p, "initial_fluid", 0.0)?,
            solid: raw.num(p, "initial_solid", 0.0)?,
            grain: raw.num(p, "initial_grain", 0.0)?,
        };

        let q = "discretization";
        let eps = raw.num(g, "eps", 0.1)?;
        let kappa_tilde = match raw.get(q, "kappa_tilde").unwrap_or("table").to_ascii_lowercase().as_str() {
            "table" => KappaTildeSource::Table,
            "correctors" | "auto" => KappaTildeSource::Correctors,
            v => KappaTildeSource::Ratio(
                parse_number(v).map_err(|_| Error::Config(format!("bad kappa_tilde '{v}'")))?,
            ),
        };
        let method = match raw.get(q, "solver").unwrap_or("auto").to_ascii_lowercase().as_str() {
            "auto" => Method::Auto,
            "cg" => Method::Cg,
            "bicgstab" => Method::BiCgStab,
            o => return Err(Error::Config(format!("unknown solver '{o}'"))),
        };
        let solver = SolverConfig {
            method,
            rel_tol: raw.num(q, "solver_tol", 1e-10)?,
            max_iter: raw.int(q, "solver_max_iter", 20_000)?,
            project_nullspace: false,
        };
        solver.validate()?;

        let s = "study";
        let study = match raw.get(s, "kind") {
            None => None,
            Some(k) => {
                let spec = StudySpec {
                    kind: k.parse()?,
                    model: raw.get(s, "model").unwrap_or("effective-b").parse()?,
                    h_values: raw.list(s, "h_values")?,
                    eps_values: raw.list(s, "eps_values")?,
                    alpha_values: raw.list(s, "alpha_values")?,
                    eta_values: raw.list(s, "eta_values")?,
                    m_values: raw.list(s, "m_values")?.into_iter().map(|v| v as usize).collect(),
                    profile_axis: raw.int(s, "profile_axis", d - 1)?,
                    profile_offset: raw.list(s, "profile_offset")?,
                    dump: raw.get(s, "dump").map(str::to_string),
                };
                spec.validate()?;
                Some(spec)
            }
        };

        let cfg = RunConfig {
            shape,
            d,
            eps,
            lateral: raw.num(g, "lateral", 1.0)?,
            half_height: raw.num(g, "half_height", 1.0)?,
            lateral_periodic: raw.flag(g, "lateral_periodic", true)?,
            params,
            velocity,
            top,
            initial,
            h: raw.num(q, "h", eps / 8.0)?,
            dt: raw.num(q, "dt", 1e-2)?,
            t_end: raw.num(q, "t_end", 1.0)?,
            tau: raw.num(q, "tau", 1e-6)?,
            eta: raw.num(q, "eta", 1.0)?,
            max_iter: raw.int(q, "max_iter", 200)?,
            cell_n: raw.int(q, "cell_n", DEFAULT_CELL_RESOLUTION)?,
            cells_m: raw.int(q, "cells_m", 16)?,
            kappa_tilde,
            cutoff: raw.num(q, "cutoff", eps)?,
            solver,
            study,
            raw,
        };
        if !(2..=3).contains(&cfg.d) {
            return Err(Error::Config(format!("geometry.d = {} not in 2..=3", cfg.d)));
        }
        Ok(cfg)
    }

    pub fn hash(&self) -> String {
        self.raw.hash()
    }

    fn extent(&self, d: usize) -> DomainExtent {
        DomainExtent::new(&vec![self.lateral; d - 1], self.half_height)
    }

    pub fn micro_config(&self) -> MicroConfig {
        MicroConfig {
            eps: self.eps,
            extent: self.extent(self.shape.dim()),
            h: self.h,
            dt: self.dt,
            t_end: self.t_end,
            shape: self.shape,
            velocity: self.velocity,
            top: self.top,
            lateral_periodic: self.lateral_periodic,
            initial: self.initial,
            solver: self.solver,
        }
    }

    /// Effective-model configuration for `case`; case (b) coefficients follow `kappa_tilde`.
    pub fn effective_config(&self, case: Case) -> Result<EffectiveConfig> {
        let params = PhysicalParams { case, ..self.params.clone() };
        let closure = match case {
            Case::A => Closure::Cells(CellSpec { shape: self.shape, n: self.cell_n, m: self.cells_m }),
            Case::B => Closure::Interface(self.interface_spec()?),
        };
        let d = match case {
            Case::A => self.shape.dim(),
            Case::B => self.d,
        };
        Ok(EffectiveConfig {
            d,
            extent: self.extent(d),
            h: self.h,
            dt: self.dt,
            t_end: self.t_end,
            tau: self.tau,
            eta: self.eta,
            max_iter: self.max_iter,
            params,
            closure,
            velocity: self.velocity,
            cutoff: self.cutoff,
            top: self.top,
            lateral_periodic: self.lateral_periodic,
            initial: self.initial,
            solver: self.solver,
            strict: true,
        })
    }

    pub fn interface_spec(&self) -> Result<InterfaceSpec> {
        let kg = self.params.kappa_g;
        match self.kappa_tilde {
            KappaTildeSource::Table => Ok(InterfaceSpec::tabulated_connected(kg)),
            KappaTildeSource::Ratio(r) => {
                let k = r * kg;
                InterfaceSpec::from_shape_measures(&self.shape, [[k, 0.0, 0.0], [0.0, k, 0.0], [0.0; 3]])
            }
            KappaTildeSource::Correctors => {
                let k = solve_psi_with(&self.shape, self.cell_n, &PsiOptions::default())?;
                Ok(InterfaceSpec::from_correctors(&k, kg))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
[geometry]
shape = disc
r = 0.4
eps = 0.1

[physics]
case = a
alpha_f = 10
top = dirichlet

[discretization]
dt = 0.05
";

    #[test]
    fn parses_sample() {
        let c = RunConfig::from_str_with(SAMPLE, &[]).unwrap();
        assert_eq!(c.shape, CellShape::Disc2D { r: 0.4 });
        assert_eq!(c.params.alpha_f, 10.0);
        assert_eq!(c.top, BoundaryCondition::Dirichlet(0.0));
        assert!((c.h - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{SAMPLE}\n[physics]\nalpha = 3\n");
        assert!(matches!(RunConfig::from_str_with(&bad, &[]), Err(Error::Config(_))));
        assert!(RunConfig::from_str_with("[solver]\ntol = 1\n", &[]).is_err());
    }

    #[test]
    fn overrides_apply_and_change_hash() {
        let a = RunConfig::from_str_with(SAMPLE, &[]).unwrap();
        let b = RunConfig::from_str_with(SAMPLE, &["discretization.h=1/160".to_string()]).unwrap();
        assert!((b.h - 1.0 / 160.0).abs() < 1e-15);
        assert_ne!(a.hash(), b.hash());
        assert!(RunConfig::from_str_with(SAMPLE, &["nodot=1".to_string()]).is_err());
        assert!(RunConfig::from_str_with(SAMPLE, &["physics.bogus=1".to_string()]).is_err());
    }

    #[test]
    fn study_lists_validated() {
        let s = format!("{SAMPLE}[study]\nkind = mesh\nh_values = 1/16, 1/32, 1/64\n");
        let c = RunConfig::from_str_with(&s, &[]).unwrap();
        assert_eq!(c.study.unwrap().h_values.len(), 3);
        let s = format!("{SAMPLE}[study]\nkind = mesh\nh_values = 1/16, 1/8, 1/64\n");
        assert!(RunConfig::from_str_with(&s, &[]).is_err());
    }

    #[test]
    fn hash_is_order_independent() {
        let a = RawConfig::parse("[physics]\nkappa_f = 1\nkappa_s = 2\n").unwrap();
        let b = RawConfig::parse("[physics]\nkappa_s = 2\nkappa_f = 1\n").unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}
