//! The finite element realization of [`Dynamics`].

use super::{Dynamics, StepError};
use crate::expr::VectorExpr;
use crate::fem::{
    assemble_load, assemble_mass_with, assemble_stiffness_with, AssemblyMode, DofMap, FemError, Material,
    SparseMatrix, State,
};
use crate::interface::{
    contact_argument, contact_residual, contact_tangent, friction_residual, friction_tangent, jump_eval,
    ContactParams, CrackQuadrature,
};
use crate::mesh::{CrackedMesh, MeshError};

/// Largest violations of the initial compatibility conditions
/// `⟦γu₀ₙ + v₀ₙ⟧ = 0` and `⟦v₀τ⟧ = 0` over the crack quadrature points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Compatibility {
    pub normal: f64,
    pub slip: f64,
}

impl Compatibility {
    pub const TOL: f64 = 1e-10;

    pub fn holds(&self) -> bool {
        self.normal <= Self::TOL && self.slip <= Self::TOL
    }
}

/// Assembled operators and data of one elastodynamic contact problem.
#[derive(Debug, Clone)]
pub struct Model {
    pub mesh: CrackedMesh,
    pub material: Material,
    pub dofs: DofMap,
    pub quad: CrackQuadrature,
    pub contact: ContactParams,
    pub body: VectorExpr,
    pub traction: VectorExpr,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    pinned_mass: SparseMatrix,
    /// Load vector when neither `f` nor `F` depends on time.
    frozen_load: Option<Vec<f64>>,
}

impl Model {
    pub fn new(
        mesh: CrackedMesh,
        material: Material,
        contact: ContactParams,
        body: VectorExpr,
        traction: VectorExpr,
    ) -> Result<Model, StepError> {
        Model::with_mode(mesh, material, contact, body, traction, AssemblyMode::from_env())
    }

    pub fn with_mode(
        mesh: CrackedMesh,
        material: Material,
        contact: ContactParams,
        body: VectorExpr,
        traction: VectorExpr,
        mode: AssemblyMode,
    ) -> Result<Model, StepError> {
        material.validate()?;
        contact.validate()?;
        for e in [&body, &traction] {
            if e.dim() != mesh.dim {
                return Err(FemError::DataDimension { expected: mesh.dim, got: e.dim() }.into());
            }
        }
        let dofs = DofMap::new(&mesh);
        let quad = CrackQuadrature::new(&mesh).map_err(|e: MeshError| StepError::Params(e.to_string()))?;
        let mass = assemble_mass_with(&mesh, &material, mode)?;
        let stiffness = assemble_stiffness_with(&mesh, &material, mode)?;
        let pinned_mass = mass.pin(&dofs.constrained);
        let static_data = body.0.iter().chain(&traction.0).all(|e| e.is_time_independent());
        let mut model = Model {
            mesh,
            material,
            dofs,
            quad,
            contact,
            body,
            traction,
            mass,
            stiffness,
            pinned_mass,
            frozen_load: None,
        };
        if static_data {
            model.frozen_load = Some(model.compute_load(0.0)?);
        }
        Ok(model)
    }

    fn compute_load(&self, t: f64) -> Result<Vec<f64>, StepError> {
        let mut l = assemble_load(&self.mesh, &self.body, &self.traction, self.material.rho, t)?;
        self.dofs.apply_constraints(&mut l);
        Ok(l)
    }

    /// Nodal interpolant of a vector expression at time `t`, zero on `Γ_D`.
    pub fn interpolate(&self, field: &VectorExpr, t: f64) -> Result<Vec<f64>, StepError> {
        if field.dim() != self.mesh.dim {
            return Err(FemError::DataDimension { expected: self.mesh.dim, got: field.dim() }.into());
        }
        self.dofs
            .interpolate(&self.mesh, |x| {
                field.eval(t, x).map_err(|source| FemError::Eval { t, point: x.to_vec(), source })
            })
            .map_err(StepError::from)
    }

    pub fn compatibility(&self, u0: &[f64], v0: &[f64]) -> Compatibility {
        let normal = contact_argument(u0, v0, &self.contact, &self.quad).into_iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let d = self.mesh.dim;
        let slip = jump_eval(v0, &self.quad)
            .into_iter()
            .map(|j| j.tangential[..d].iter().map(|c| c * c).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        Compatibility { normal, slip }
    }

    /// Initial state from nodal `u0`, `v0`, with the consistent acceleration.
    /// Violated compatibility conditions are logged as warnings.
    pub fn initial_state_from(&self, u0: Vec<f64>, v0: Vec<f64>) -> Result<(State, Compatibility), StepError> {
        let compat = self.compatibility(&u0, &v0);
        if compat.normal > Compatibility::TOL {
            log::warn!(
                "initial data violate ⟦γu₀ₙ + v₀ₙ⟧ = 0 on the crack (max {:.3e}); expect an initial layer",
                compat.normal
            );
        }
        if compat.slip > Compatibility::TOL {
            log::warn!("initial data violate ⟦v₀τ⟧ = 0 on the crack (max {:.3e})", compat.slip);
        }
        let a0 = super::initial_acceleration(self, &u0, &v0, 0.0)?;
        Ok((State { t: 0.0, u: u0, v: v0, a: a0 }, compat))
    }

    /// Initial state from expressions evaluated at `t = 0`.
    pub fn initial_state(&self, u0: &VectorExpr, v0: &VectorExpr) -> Result<(State, Compatibility), StepError> {
        let u = self.interpolate(u0, 0.0)?;
        let v = self.interpolate(v0, 0.0)?;
        self.initial_state_from(u, v)
    }
}

impl Dynamics for Model {
    fn n_dofs(&self) -> usize {
        self.dofs.n_dofs()
    }

    fn constrained(&self) -> &[bool] {
        &self.dofs.constrained
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    fn pinned_mass(&self) -> &SparseMatrix {
        &self.pinned_mass
    }

    fn load(&self, t: f64) -> Result<Vec<f64>, StepError> {
        match &self.frozen_load {
            Some(l) => Ok(l.clone()),
            None => self.compute_load(t),
        }
    }

    fn interface(&self, u: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>, StepError> {
        if self.quad.is_empty() {
            return Ok(vec![0.0; u.len()]);
        }
        let mut r = contact_residual(u, v, &self.contact, &self.quad);
        let f = friction_residual(v, t, &self.contact, &self.quad)?;
        r.iter_mut().zip(&f).for_each(|(a, b)| *a += b);
        Ok(r)
    }

    fn interface_tangent(
        &self,
        u: &[f64],
        v: &[f64],
        t: f64,
        coeff_u: f64,
        coeff_v: f64,
    ) -> Result<SparseMatrix, StepError> {
        if self.quad.is_empty() {
            return Ok(SparseMatrix::zeros(u.len()));
        }
        let c = contact_tangent(u, v, &self.contact, &self.quad, coeff_u, coeff_v);
        let f = friction_tangent(v, t, &self.contact, &self.quad, coeff_v)?;
        Ok(if f.nnz() == 0 { c } else { c.linear_combination(1.0, &f, 1.0) })
    }
}
