//! Piecewise-linear vector finite elements on a cracked mesh.
//!
//! The discrete displacement space is P1 on every cell with one block of
//! `dim` dofs per vertex. Because crack vertices are duplicated in the mesh,
//! this space is the discrete counterpart of `H¹` on the cracked domain; the
//! Dirichlet vertices are removed to obtain the space of admissible fields.
//!
//! Two dimensional runs use the plane strain convention: the Lamé constants are
//! used as given, with no plane stress conversion.

pub(crate) mod assembly;
mod solver;
mod sparse;

pub use assembly::{
    assemble_load, assemble_mass, assemble_mass_with, assemble_stiffness, assemble_stiffness_with, cell_stresses, l2_error,
    AssemblyMode, Quadrature, DETERMINISTIC_ENV,
};
pub use solver::{pcg, solve_spd, CgOutcome, SolveError};
pub use sparse::SparseMatrix;

use thiserror::Error;

use crate::expr::EvalError;
use crate::mesh::CrackedMesh;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("cell {cell} is inverted or degenerate (signed measure {measure:e})")]
    InvertedCell { cell: usize, measure: f64 },
    #[error("invalid material: {0}")]
    Material(String),
    #[error("data expression has {got} components, expected {expected}")]
    DataDimension { expected: usize, got: usize },
    #[error("evaluating data at t = {t}, x = {point:?}: {source}")]
    Eval { t: f64, point: Vec<f64>, source: EvalError },
}

/// Isotropic linear elastic material with constant density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Material {
    pub fn new(lambda: f64, mu: f64, rho: f64) -> Result<Material, FemError> {
        let m = Material { lambda, mu, rho };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.mu > 0.0) {
            return Err(FemError::Material(format!("μ must be positive, got {}", self.mu)));
        }
        if !(3.0 * self.lambda + 2.0 * self.mu > 0.0) {
            return Err(FemError::Material(format!(
                "3λ + 2μ must be positive, got λ = {}, μ = {}",
                self.lambda, self.mu
            )));
        }
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(FemError::Material(format!("density must be positive, got {}", self.rho)));
        }
        Ok(())
    }
}

/// Vertex-blocked dof numbering with the Dirichlet dofs flagged.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub dim: usize,
    pub n_vertices: usize,
    pub constrained: Vec<bool>,
    pub n_free: usize,
}

impl DofMap {
    pub fn new(mesh: &CrackedMesh) -> DofMap {
        let dim = mesh.dim;
        let mut constrained = vec![false; mesh.n_vertices() * dim];
        for facet in &mesh.dirichlet_facets {
            for &v in facet {
                for i in 0..dim {
                    constrained[v * dim + i] = true;
                }
            }
        }
        let n_free = constrained.iter().filter(|c| !**c).count();
        DofMap { dim, n_vertices: mesh.n_vertices(), constrained, n_free }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_vertices * self.dim
    }

    #[inline]
    pub fn dof(&self, vertex: usize, component: usize) -> usize {
        vertex * self.dim + component
    }

    /// Zeroes the constrained entries of `v`.
    pub fn apply_constraints(&self, v: &mut [f64]) {
        for (x, &c) in v.iter_mut().zip(&self.constrained) {
            if c {
                *x = 0.0;
            }
        }
    }

    pub fn satisfies_constraints(&self, v: &[f64]) -> bool {
        v.iter().zip(&self.constrained).all(|(x, &c)| !c || *x == 0.0)
    }

    /// Nodal interpolant of a vector field given per vertex.
    pub fn interpolate<E>(
        &self,
        mesh: &CrackedMesh,
        mut field: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    ) -> Result<Vec<f64>, E> {
        let mut out = vec![0.0; self.n_dofs()];
        for (v, p) in mesh.vertices.iter().enumerate() {
            let value = field(&p[..self.dim])?;
            for i in 0..self.dim {
                out[self.dof(v, i)] = value[i];
            }
        }
        self.apply_constraints(&mut out);
        Ok(out)
    }
}

/// Nodal vectors at one time instant.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl State {
    pub fn zeros(n: usize) -> State {
        State { t: 0.0, u: vec![0.0; n], v: vec![0.0; n], a: vec![0.0; n] }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
