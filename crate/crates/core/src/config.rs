//! Run configuration files.
//!
//! A configuration is a sequence of `[section]` headers and `key = value`
//! lines; `#` and `;` start comment lines. Scalars are plain numbers, data
//! fields are expressions in `t, x, y, z` (see [`crate::expr`]) and vector
//! fields are parenthesized tuples of expressions:
//!
//! ```text
//! [mesh]
//! builtin = rect(2, 1, 16, 8, 0.25, 0.75)   # or: path = body.mesh
//!
//! [material]
//! lambda = 1
//! mu = 1
//! rho = 1
//!
//! [contact]
//! gamma = 0
//! epsilon = 1e-3
//! g = 0.01
//!
//! [time]
//! t_end = 2
//! dt = 0.01
//! scheme = midpoint
//!
//! [data]
//! f = (0, 0)
//! F = (0, 0)
//! u0 = (0.02*(y-0.5)*sin(pi*x/2), 0.05*(y-0.5)*sin(pi*x/2))
//! v0 = (0, 0)
//!
//! [output]
//! dir = out
//! every = 10
//! ```
//!
//! `[mesh]` and `[material]` are required. Everything else has a default:
//! `γ = 0`, `ε = 10⁻³`, `g = 0`, the [`TimeParams`] defaults, zero data and
//! output to `./output` with a field snapshot at every step. Unknown
//! sections or keys are errors.
//!
//! A relative mesh `path` is resolved against the directory of the
//! configuration file; a relative output `dir` is taken from the working
//! directory of the process.
//!
//! Keys are matched case-sensitively, so `f` (body force) and `F` (surface
//! traction) are distinct.

use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption};
use thiserror::Error;

use crate::expr::{Expr, ParseError, VectorExpr};
use crate::fem::{FemError, Material, State};
use crate::interface::{ContactParams, CrackQuadrature, InterfaceError};
use crate::mesh::{CrackedMesh, MeshError, RectSpec};
use crate::timestep::{Compatibility, Model, Scheme, StepError, TimeParams};

/// Number of instants in `[0, t_end]` at which `g ≥ 0` is sampled.
const THRESHOLD_SAMPLES: usize = 21;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key `{key}` in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("key `{key}` appears more than once in [{section}]")]
    DuplicateKey { section: String, key: String },
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("[{section}] {key}: {message}")]
    Value { section: String, key: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error(transparent)]
    Step(#[from] StepError),
}

/// Where the mesh comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Builtin(RectSpec),
    /// A mesh file; relative paths are resolved against the config file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write a field snapshot every `every` steps; `0` disables snapshots.
    pub every: usize,
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig { dir: PathBuf::from("output"), every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub mesh: MeshSource,
    pub material: Material,
    pub contact: ContactParams,
    pub time: TimeParams,
    /// Body force density `f(t, x)`.
    pub body: VectorExpr,
    /// Surface traction `F(t, x)` on the Neumann boundary.
    pub traction: VectorExpr,
    pub u0: VectorExpr,
    pub v0: VectorExpr,
    pub output: OutputConfig,
}

/// A configuration turned into an assembled model and its initial state.
#[derive(Debug, Clone)]
pub struct Problem {
    pub model: Model,
    pub initial: State,
    pub compatibility: Compatibility,
    pub time: TimeParams,
}

struct Section<'a> {
    name: &'a str,
    props: &'a ini::Properties,
    used: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn raw(&mut self, key: &'a str) -> Result<Option<&'a str>, ConfigError> {
        let mut values = self.props.get_all(key);
        let first = values.next();
        if values.next().is_some() {
            return Err(ConfigError::DuplicateKey { section: self.name.into(), key: key.into() });
        }
        self.used.push(key);
        Ok(first.map(str::trim))
    }

    fn err(&self, key: &str, message: impl std::fmt::Display) -> ConfigError {
        ConfigError::Value { section: self.name.into(), key: key.into(), message: message.to_string() }
    }

    fn number(&mut self, key: &'a str, default: Option<f64>) -> Result<f64, ConfigError> {
        match self.raw(key)? {
            Some(s) => s.parse::<f64>().map_err(|_| self.err(key, format!("expected a number, got `{s}`"))),
            None => default.ok_or_else(|| self.err(key, "required")),
        }
    }

    fn count(&mut self, key: &'a str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key)? {
            Some(s) => s.parse::<usize>().map_err(|_| self.err(key, format!("expected a non-negative integer, got `{s}`"))),
            None => Ok(default),
        }
    }

    fn expr(&mut self, key: &'a str, default: Expr) -> Result<Expr, ConfigError> {
        match self.raw(key)? {
            Some(s) => Expr::parse(s).map_err(|e: ParseError| self.err(key, e)),
            None => Ok(default),
        }
    }

    fn vector(&mut self, key: &'a str) -> Result<Option<VectorExpr>, ConfigError> {
        match self.raw(key)? {
            Some(s) => VectorExpr::parse(s).map(Some).map_err(|e| self.err(key, e)),
            None => Ok(None),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        for (key, _) in self.props.iter() {
            if !self.used.contains(&key) {
                return Err(ConfigError::UnknownKey { section: self.name.into(), key: key.into() });
            }
        }
        Ok(())
    }
}

impl Config {
    /// Reads and validates a configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Config, ConfigError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let config = Config::parse(&text, base)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses configuration text; relative mesh paths are resolved against
    /// `base`. Only the syntax and per-field ranges are checked here, see
    /// [`Config::validate`] for the checks that need the mesh.
    pub fn parse(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let opts = ParseOption { enabled_quote: false, enabled_escape: false, ..ParseOption::default() };
        let ini = Ini::load_from_str_opt(text, opts)
            .map_err(|e| ConfigError::Syntax { line: e.line + 1, message: e.msg.into_owned() })?;

        let mut sections = std::collections::HashMap::new();
        for (name, props) in ini.iter() {
            match name {
                None if props.is_empty() => {}
                None => {
                    let key = props.iter().next().map(|(k, _)| k).unwrap_or_default();
                    return Err(ConfigError::UnknownKey { section: "<none>".into(), key: key.into() });
                }
                Some(n @ ("mesh" | "material" | "contact" | "time" | "data" | "output")) => {
                    sections.insert(n, Section { name: n, props, used: Vec::new() });
                }
                Some(other) => return Err(ConfigError::UnknownSection(other.into())),
            }
        }

        let mut mesh_sec = sections.remove("mesh").ok_or(ConfigError::Missing("section [mesh]"))?;
        let mesh = match (mesh_sec.raw("builtin")?, mesh_sec.raw("path")?) {
            (Some(spec), None) => MeshSource::Builtin(RectSpec::parse(spec)?),
            (None, Some(p)) => MeshSource::File(base.join(p)),
            (Some(_), Some(_)) => return Err(mesh_sec.err("builtin", "give either `builtin` or `path`, not both")),
            (None, None) => return Err(ConfigError::Missing("[mesh] builtin or path")),
        };
        mesh_sec.finish()?;

        let mut mat = sections.remove("material").ok_or(ConfigError::Missing("section [material]"))?;
        let material = Material::new(mat.number("lambda", None)?, mat.number("mu", None)?, mat.number("rho", None)?)?;
        mat.finish()?;

        let empty = ini::Properties::new();
        let mut take = |name: &'static str| {
            sections.remove(name).unwrap_or(Section { name, props: &empty, used: Vec::new() })
        };

        let mut c = take("contact");
        let contact = ContactParams::new(c.number("gamma", Some(0.0))?, c.number("epsilon", Some(1e-3))?, c.expr("g", Expr::constant(0.0))?)?;
        c.finish()?;

        let mut tm = take("time");
        let d = TimeParams::default();
        let scheme = match tm.raw("scheme")? {
            Some(s) => s.parse::<Scheme>()?,
            None => d.scheme,
        };
        let time = TimeParams {
            t_end: tm.number("t_end", Some(d.t_end))?,
            dt: tm.number("dt", Some(d.dt))?,
            newmark_b: tm.number("newmark_b", Some(d.newmark_b))?,
            newmark_g: tm.number("newmark_g", Some(d.newmark_g))?,
            newton_tol: tm.number("newton_tol", Some(d.newton_tol))?,
            newton_maxit: tm.count("newton_maxit", d.newton_maxit)?,
            scheme,
        };
        tm.finish()?;
        time.validate()?;

        let mut data = take("data");
        let (body, traction, u0, v0) = (data.vector("f")?, data.vector("F")?, data.vector("u0")?, data.vector("v0")?);
        data.finish()?;
        let dim = [&body, &traction, &u0, &v0].into_iter().flatten().map(VectorExpr::dim).max().unwrap_or(2);
        let or_zero = |e: Option<VectorExpr>| e.unwrap_or_else(|| VectorExpr::zero(dim));

        let mut out = take("output");
        let output = OutputConfig {
            dir: match out.raw("dir")? {
                Some(p) => PathBuf::from(p),
                None => OutputConfig::default().dir,
            },
            every: out.count("every", 1)?,
        };
        out.finish()?;

        Ok(Config {
            mesh,
            material,
            contact,
            time,
            body: or_zero(body),
            traction: or_zero(traction),
            u0: or_zero(u0),
            v0: or_zero(v0),
            output,
        })
    }

    pub fn build_mesh(&self) -> Result<CrackedMesh, ConfigError> {
        Ok(match &self.mesh {
            MeshSource::Builtin(spec) => spec.build()?,
            MeshSource::File(path) => CrackedMesh::load(path)?,
        })
    }

    /// Checks everything that needs the mesh: data dimensions and `g ≥ 0`
    /// at every crack quadrature point at 21 instants of `[0, t_end]`.
    pub fn validate(&self) -> Result<CrackedMesh, ConfigError> {
        self.material.validate()?;
        self.contact.validate()?;
        self.time.validate()?;
        let mesh = self.build_mesh()?;
        for (name, e) in [("f", &self.body), ("F", &self.traction), ("u0", &self.u0), ("v0", &self.v0)] {
            // identically zero fields are resized to the mesh by `setup`
            if e.dim() != mesh.dim && !e.is_zero() {
                return Err(ConfigError::Value {
                    section: "data".into(),
                    key: name.into(),
                    message: format!("has {} components but the mesh is {}-dimensional", e.dim(), mesh.dim),
                });
            }
        }
        let quad = CrackQuadrature::new(&mesh)?;
        for k in 0..THRESHOLD_SAMPLES {
            let t = self.time.t_end * k as f64 / (THRESHOLD_SAMPLES - 1) as f64;
            quad.threshold(&self.contact.g, t)?;
        }
        Ok(mesh)
    }

    /// Validates the configuration, assembles the model and computes the
    /// initial state.
    pub fn setup(&self) -> Result<Problem, ConfigError> {
        let mesh = self.validate()?;
        let dim = mesh.dim;
        let fit = |e: &VectorExpr| if e.is_zero() { VectorExpr::zero(dim) } else { e.clone() };
        let model = Model::new(mesh, self.material, self.contact.clone(), fit(&self.body), fit(&self.traction))?;
        let (initial, compatibility) = model.initial_state(&fit(&self.u0), &fit(&self.v0))?;
        Ok(Problem { model, initial, compatibility, time: self.time.clone() })
    }

    /// The same configuration with another penalty parameter.
    pub fn with_epsilon(&self, epsilon: f64) -> Config {
        let mut c = self.clone();
        c.contact.epsilon = epsilon;
        c
    }

    /// The same configuration with another contact weight.
    pub fn with_gamma(&self, gamma: f64) -> Config {
        let mut c = self.clone();
        c.contact.gamma = gamma;
        c
    }
}

/// Built-in configurations used by the tests and the `verify` command.
pub mod fixtures {
    use super::*;

    /// Text of the impact fixture: a 2 × 1 plate on a 16 × 8 grid with a
    /// crack over the middle half of its midline, clamped left and right and
    /// released from a bending prestress that closes the crack faces onto
    /// each other. No loads, constant friction threshold 0.01.
    pub const IMPACT: &str = include_str!("../fixtures/impact.cfg");

    /// The impact fixture with the given contact weight and penalty.
    pub fn impact(gamma: f64, epsilon: f64) -> Config {
        let c = Config::parse(IMPACT, Path::new(".")).expect("built-in fixture parses");
        c.with_gamma(gamma).with_epsilon(epsilon)
    }

    /// Manufactured solution on the uncracked plate `[0, 2] × [0, 1]` with
    /// `λ = μ = ρ = 1`: `u = (sin(πx/2) sin(πy) cos(t), 0)`.
    ///
    /// The body force and the top/bottom tractions are derived from `u` by
    /// hand; the factor `2y − 1` is the outward normal component on the
    /// bottom (`−1`) and top (`+1`) edges.
    pub fn manufactured(nx: usize, ny: usize, dt: f64, t_end: f64) -> Config {
        let text = format!(
            "[mesh]\nbuiltin = rect(2, 1, {nx}, {ny})\n\
             [material]\nlambda = 1\nmu = 1\nrho = 1\n\
             [time]\nt_end = {t_end}\ndt = {dt}\n\
             [data]\n\
             f = ((-1 + 3*(pi/2)^2 + pi^2)*sin(pi*x/2)*sin(pi*y)*cos(t), -2*(pi/2)*pi*cos(pi*x/2)*cos(pi*y)*cos(t))\n\
             F = ((2*y - 1)*pi*sin(pi*x/2)*cos(pi*y)*cos(t), 0)\n\
             u0 = (sin(pi*x/2)*sin(pi*y), 0)\n\
             v0 = (0, 0)\n\
             [output]\nevery = 0\n"
        );
        Config::parse(&text, Path::new(".")).expect("manufactured fixture parses")
    }

    /// Exact solution of [`manufactured`].
    pub fn manufactured_exact() -> VectorExpr {
        VectorExpr::parse("(sin(pi*x/2)*sin(pi*y)*cos(t), 0)").expect("valid expression")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\nbuiltin = rect(2, 1, 4, 2, 0.25, 0.75)\n[material]\nlambda = 1\nmu = 1\nrho = 1\n";

    fn parse(text: &str) -> Result<Config, ConfigError> {
        Config::parse(text, Path::new("/base"))
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.time, TimeParams::default());
        assert_eq!(c.contact.gamma, 0.0);
        assert_eq!(c.contact.epsilon, 1e-3);
        assert!(c.body.is_zero() && c.u0.is_zero());
        assert_eq!(c.output, OutputConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn fixture_parses_and_validates() {
        let c = fixtures::impact(1.0, 1e-2);
        assert_eq!(c.contact.gamma, 1.0);
        assert_eq!(c.contact.epsilon, 1e-2);
        let p = c.setup().unwrap();
        assert!(p.compatibility.holds());
        assert_eq!(p.model.mesh.cells.len(), 2 * 16 * 8);
    }

    #[test]
    fn trailing_comments_are_ignored() {
        let c = parse(&format!("{MINIMAL}[contact]\ngamma = 2   # near displacement contact\n")).unwrap();
        assert_eq!(c.contact.gamma, 2.0);
    }

    #[test]
    fn mesh_path_is_relative_to_config() {
        let c = parse("[mesh]\npath = m.txt\n[material]\nlambda=1\nmu=1\nrho=1\n").unwrap();
        assert_eq!(c.mesh, MeshSource::File(PathBuf::from("/base/m.txt")));
    }

    #[test]
    fn f_and_capital_f_are_distinct() {
        let c = parse(&format!("{MINIMAL}[data]\nf = (1, 2)\nF = (3, 4)\n")).unwrap();
        assert_eq!(c.body.eval(0.0, &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(c.traction.eval(0.0, &[0.0, 0.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        let cases = [
            ("[material]\nlambda = 1\nmu = 1\nrho = 1\n", "missing"),
            ("[mesh]\nbuiltin = rect(2, 1)\n[material]\nlambda=1\nmu=1\nrho=1\n", "rect"),
            (&format!("{MINIMAL}[contact]\nepsilon = 0\n"), "ε"),
            (&format!("{MINIMAL}[contact]\ngamma = -1\n"), "γ"),
            (&format!("{MINIMAL}[time]\nnewmark_g = 0.4\n"), "newmark_g"),
            (&format!("{MINIMAL}[time]\nscheme = euler\n"), "scheme"),
            (&format!("{MINIMAL}[time]\ndt = fast\n"), "number"),
            (&format!("{MINIMAL}[data]\nf = (1, \n"), "f"),
            (&format!("{MINIMAL}[extra]\na = 1\n"), "extra"),
            (&format!("{MINIMAL}[time]\nsteps = 4\n"), "steps"),
            ("[mesh]\nbuiltin = rect(2, 1, 4, 2)\n[material]\nlambda = 1\nmu = 0\nrho = 1\n", "material"),
        ];
        for (text, needle) in cases {
            let err = parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "`{err}` should mention `{needle}`");
        }
    }

    #[test]
    fn validation_needs_the_mesh() {
        let c = parse(&format!("{MINIMAL}[data]\nu0 = (x, 0, 0)\n")).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("u0"));
        let c = parse(&format!("{MINIMAL}[contact]\ng = 0.1 - t\n[time]\nt_end = 1\n")).unwrap();
        assert!(matches!(c.validate(), Err(ConfigError::Interface(InterfaceError::NegativeThreshold { .. }))));
    }

    #[test]
    fn manufactured_data_matches_the_exact_solution() {
        // independent check of the hand-derived f and F: finite differences
        // of the exact field at a few points
        let c = fixtures::manufactured(8, 4, 0.1, 1.0);
        let u = fixtures::manufactured_exact();
        let (lam, mu) = (1.0, 1.0);
        let h = 1e-4;
        let at = |t: f64, x: f64, y: f64| u.eval(t, &[x, y]).unwrap();
        let grad = |t: f64, x: f64, y: f64| {
            let dx: Vec<f64> = (0..2).map(|i| (at(t, x + h, y)[i] - at(t, x - h, y)[i]) / (2.0 * h)).collect();
            let dy: Vec<f64> = (0..2).map(|i| (at(t, x, y + h)[i] - at(t, x, y - h)[i]) / (2.0 * h)).collect();
            [[dx[0], dy[0]], [dx[1], dy[1]]]
        };
        let stress = |t: f64, x: f64, y: f64| {
            let g = grad(t, x, y);
            let div = g[0][0] + g[1][1];
            let mut s = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] = mu * (g[i][j] + g[j][i]) + if i == j { lam * div } else { 0.0 };
                }
            }
            s
        };
        for &(t, x, y) in &[(0.3, 0.4, 0.3), (1.1, 1.3, 0.8), (0.0, 0.7, 0.55)] {
            let utt: Vec<f64> = (0..2).map(|i| (at(t + h, x, y)[i] - 2.0 * at(t, x, y)[i] + at(t - h, x, y)[i]) / (h * h)).collect();
            let sp = |x: f64, y: f64| stress(t, x, y);
            let div_s: Vec<f64> = (0..2)
                .map(|i| (sp(x + h, y)[i][0] - sp(x - h, y)[i][0]) / (2.0 * h) + (sp(x, y + h)[i][1] - sp(x, y - h)[i][1]) / (2.0 * h))
                .collect();
            let f = c.body.eval(t, &[x, y]).unwrap();
            for i in 0..2 {
                assert!((utt[i] - div_s[i] - f[i]).abs() < 1e-4, "component {i}: {} vs {}", utt[i] - div_s[i], f[i]);
            }
            for (yb, n) in [(0.0, -1.0), (1.0, 1.0)] {
                let s = stress(t, x, yb);
                let tr = c.traction.eval(t, &[x, yb]).unwrap();
                for i in 0..2 {
                    assert!((s[i][1] * n - tr[i]).abs() < 1e-6, "traction at y = {yb}");
                }
            }
        }
    }
}
