//! Element integrals for P1 vector fields and their global assembly.
//!
//! Every routine computes element contributions independently and then sums
//! them in cell order. In [`AssemblyMode::Parallel`] the element work is spread
//! over the rayon pool but the summation order is unchanged, so both modes
//! produce bitwise-identical results.

use rayon::prelude::*;

use super::{FemError, Material, SparseMatrix};
use crate::expr::VectorExpr;
use crate::mesh::{sub, Cell, CrackedMesh};

/// Environment variable that forces sequential assembly when set to `1`.
pub const DETERMINISTIC_ENV: &str = "CRACKDYN_DETERMINISTIC";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyMode {
    Sequential,
    Parallel,
}

impl AssemblyMode {
    /// Sequential when `CRACKDYN_DETERMINISTIC=1`, parallel otherwise.
    pub fn from_env() -> AssemblyMode {
        match std::env::var(DETERMINISTIC_ENV) {
            Ok(v) if v.trim() == "1" => AssemblyMode::Sequential,
            _ => AssemblyMode::Parallel,
        }
    }
}

/// Quadrature rule on a reference simplex, in barycentric coordinates. The
/// weights sum to one, so a rule is applied by scaling with the measure of the
/// simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Cell rule exact for polynomials of degree `degree` (2 or 4 in 2D; in 3D
    /// the degree-2 rule is used for both).
    pub fn cell(dim: usize, degree: usize) -> Quadrature {
        match (dim, degree) {
            (2, 0..=2) => Quadrature {
                points: vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]],
                weights: vec![1.0 / 3.0; 3],
            },
            (2, _) => {
                // Strang-Fix six point rule
                let (a1, b1, w1) = (0.108103018168070, 0.445948490915965, 0.223381589678011);
                let (a2, b2, w2) = (0.816847572980459, 0.091576213509771, 0.109951743655322);
                let mut points = Vec::new();
                let mut weights = Vec::new();
                for (a, b, w) in [(a1, b1, w1), (a2, b2, w2)] {
                    points.push(vec![a, b, b]);
                    points.push(vec![b, a, b]);
                    points.push(vec![b, b, a]);
                    weights.extend([w; 3]);
                }
                Quadrature { points, weights }
            }
            _ => {
                let (a, b) = (0.5854101966249685, 0.1381966011250105);
                Quadrature {
                    points: (0..4).map(|k| (0..4).map(|j| if j == k { a } else { b }).collect()).collect(),
                    weights: vec![0.25; 4],
                }
            }
        }
    }

    /// Facet rule: two-point Gauss on segments, edge midpoints on triangles.
    /// Both are exact for quadratics.
    pub fn facet(dim: usize) -> Quadrature {
        if dim == 2 {
            let s = 0.5 / 3f64.sqrt();
            Quadrature { points: vec![vec![0.5 + s, 0.5 - s], vec![0.5 - s, 0.5 + s]], weights: vec![0.5, 0.5] }
        } else {
            Quadrature::cell(2, 2)
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Measure and constant basis gradients of one cell.
pub(crate) struct CellGeometry {
    pub measure: f64,
    pub grads: Vec<[f64; 3]>,
}

pub(crate) fn cell_geometry(mesh: &CrackedMesh, index: usize, cell: &Cell) -> Result<CellGeometry, FemError> {
    let measure = mesh.signed_measure(cell);
    if !(measure > 0.0) {
        return Err(FemError::InvertedCell { cell: index, measure });
    }
    let p: Vec<&[f64; 3]> = cell.vertices.iter().map(|&v| &mesh.vertices[v]).collect();
    let grads = if mesh.dim == 2 {
        let two_a = 2.0 * measure;
        vec![
            [(p[1][1] - p[2][1]) / two_a, (p[2][0] - p[1][0]) / two_a, 0.0],
            [(p[2][1] - p[0][1]) / two_a, (p[0][0] - p[2][0]) / two_a, 0.0],
            [(p[0][1] - p[1][1]) / two_a, (p[1][0] - p[0][0]) / two_a, 0.0],
        ]
    } else {
        let c = [sub(p[1], p[0]), sub(p[2], p[0]), sub(p[3], p[0])];
        let det = 6.0 * measure;
        let row = |a: &[f64; 3], b: &[f64; 3]| {
            [
                (a[1] * b[2] - a[2] * b[1]) / det,
                (a[2] * b[0] - a[0] * b[2]) / det,
                (a[0] * b[1] - a[1] * b[0]) / det,
            ]
        };
        let g1 = row(&c[1], &c[2]);
        let g2 = row(&c[2], &c[0]);
        let g3 = row(&c[0], &c[1]);
        let g0 = [-(g1[0] + g2[0] + g3[0]), -(g1[1] + g2[1] + g3[1]), -(g1[2] + g2[2] + g3[2])];
        vec![g0, g1, g2, g3]
    };
    Ok(CellGeometry { measure, grads })
}

/// Physical coordinates of a barycentric point on a simplex.
pub(crate) fn map_point(mesh: &CrackedMesh, vertices: &[usize], bary: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; mesh.dim];
    for (&v, &b) in vertices.iter().zip(bary) {
        for (k, xk) in x.iter_mut().enumerate() {
            *xk += b * mesh.vertices[v][k];
        }
    }
    x
}

type Triplets = Vec<(usize, usize, f64)>;

fn per_cell<T: Send>(
    mesh: &CrackedMesh,
    mode: AssemblyMode,
    f: impl Fn(usize, &Cell) -> Result<T, FemError> + Sync + Send,
) -> Result<Vec<T>, FemError> {
    match mode {
        AssemblyMode::Sequential => mesh.cells.iter().enumerate().map(|(i, c)| f(i, c)).collect(),
        AssemblyMode::Parallel => mesh.cells.par_iter().enumerate().map(|(i, c)| f(i, c)).collect(),
    }
}

fn collect_matrix(n: usize, parts: Vec<Triplets>) -> SparseMatrix {
    let triplets: Triplets = parts.into_iter().flatten().collect();
    SparseMatrix::from_triplets(n, &triplets)
}

/// Consistent P1 mass matrix scaled by the density, acting on all dofs
/// (Dirichlet pinning is left to the caller).
pub fn assemble_mass(mesh: &CrackedMesh, mat: &Material) -> Result<SparseMatrix, FemError> {
    assemble_mass_with(mesh, mat, AssemblyMode::from_env())
}

pub fn assemble_mass_with(mesh: &CrackedMesh, mat: &Material, mode: AssemblyMode) -> Result<SparseMatrix, FemError> {
    let d = mesh.dim;
    let denom = ((d + 1) * (d + 2)) as f64;
    let parts = per_cell(mesh, mode, |ci, cell| {
        let geo = cell_geometry(mesh, ci, cell)?;
        let mut out = Vec::with_capacity((d + 1) * (d + 1) * d);
        for (a, &va) in cell.vertices.iter().enumerate() {
            for (b, &vb) in cell.vertices.iter().enumerate() {
                let m = mat.rho * geo.measure * if a == b { 2.0 } else { 1.0 } / denom;
                for i in 0..d {
                    out.push((va * d + i, vb * d + i, m));
                }
            }
        }
        Ok(out)
    })?;
    Ok(collect_matrix(mesh.n_vertices() * d, parts))
}

/// Stiffness matrix of `a(u, w) = λ(div u, div w) + 2μ(E(u), E(w))`.
pub fn assemble_stiffness(mesh: &CrackedMesh, mat: &Material) -> Result<SparseMatrix, FemError> {
    assemble_stiffness_with(mesh, mat, AssemblyMode::from_env())
}

pub fn assemble_stiffness_with(
    mesh: &CrackedMesh,
    mat: &Material,
    mode: AssemblyMode,
) -> Result<SparseMatrix, FemError> {
    let d = mesh.dim;
    let parts = per_cell(mesh, mode, |ci, cell| {
        let geo = cell_geometry(mesh, ci, cell)?;
        let g = &geo.grads;
        let mut out = Vec::with_capacity((d + 1) * (d + 1) * d * d);
        for (a, &va) in cell.vertices.iter().enumerate() {
            for (b, &vb) in cell.vertices.iter().enumerate() {
                let gab: f64 = (0..d).map(|k| g[a][k] * g[b][k]).sum();
                for i in 0..d {
                    for j in 0..d {
                        let mut k = mat.lambda * g[a][i] * g[b][j] + mat.mu * g[a][j] * g[b][i];
                        if i == j {
                            k += mat.mu * gab;
                        }
                        out.push((va * d + i, vb * d + j, geo.measure * k));
                    }
                }
            }
        }
        Ok(out)
    })?;
    Ok(collect_matrix(mesh.n_vertices() * d, parts))
}

fn eval_at(expr: &VectorExpr, t: f64, x: &[f64]) -> Result<Vec<f64>, FemError> {
    expr.eval(t, x).map_err(|source| FemError::Eval { t, point: x.to_vec(), source })
}

fn check_dim(mesh: &CrackedMesh, expr: &VectorExpr) -> Result<(), FemError> {
    if expr.dim() != mesh.dim {
        return Err(FemError::DataDimension { expected: mesh.dim, got: expr.dim() });
    }
    Ok(())
}

/// Load vector `ρ(f(t), w) + (F(t), w)_{Γ_N}` for all nodal basis fields `w`.
///
/// Body forces use a degree-2 cell rule and tractions the facet rule of
/// [`Quadrature::facet`]. Zero expressions are skipped.
pub fn assemble_load(
    mesh: &CrackedMesh,
    body: &VectorExpr,
    traction: &VectorExpr,
    rho: f64,
    t: f64,
) -> Result<Vec<f64>, FemError> {
    check_dim(mesh, body)?;
    check_dim(mesh, traction)?;
    let d = mesh.dim;
    let mut load = vec![0.0; mesh.n_vertices() * d];
    if !body.is_zero() {
        let quad = Quadrature::cell(d, 2);
        for (ci, cell) in mesh.cells.iter().enumerate() {
            let geo = cell_geometry(mesh, ci, cell)?;
            for (bary, w) in quad.points.iter().zip(&quad.weights) {
                let x = map_point(mesh, &cell.vertices, bary);
                let f = eval_at(body, t, &x)?;
                for (a, &va) in cell.vertices.iter().enumerate() {
                    let s = rho * w * geo.measure * bary[a];
                    for i in 0..d {
                        load[va * d + i] += s * f[i];
                    }
                }
            }
        }
    }
    if !traction.is_zero() {
        let quad = Quadrature::facet(d);
        for facet in &mesh.neumann_facets {
            let (_, measure) = mesh.facet_normal(facet);
            for (bary, w) in quad.points.iter().zip(&quad.weights) {
                let x = map_point(mesh, facet, bary);
                let f = eval_at(traction, t, &x)?;
                for (a, &va) in facet.iter().enumerate() {
                    let s = w * measure * bary[a];
                    for i in 0..d {
                        load[va * d + i] += s * f[i];
                    }
                }
            }
        }
    }
    Ok(load)
}

/// Cauchy stress `σ(u) = λ div u I + 2μ E(u)` on every cell (constant per
/// cell for P1 fields). In 2D the out-of-plane normal stress of plane strain,
/// `σ₃₃ = λ div u`, is filled in; the other out-of-plane entries are zero.
pub fn cell_stresses(mesh: &CrackedMesh, mat: &Material, u: &[f64]) -> Result<Vec<[[f64; 3]; 3]>, FemError> {
    let d = mesh.dim;
    mesh.cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let geo = cell_geometry(mesh, ci, cell)?;
            let mut grad = [[0.0; 3]; 3];
            for (a, &va) in cell.vertices.iter().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        grad[i][j] += u[va * d + i] * geo.grads[a][j];
                    }
                }
            }
            let div: f64 = (0..d).map(|i| grad[i][i]).sum();
            let mut sigma = [[0.0; 3]; 3];
            for i in 0..d {
                for j in 0..d {
                    sigma[i][j] = mat.mu * (grad[i][j] + grad[j][i]);
                }
                sigma[i][i] += mat.lambda * div;
            }
            if d == 2 {
                sigma[2][2] = mat.lambda * div;
            }
            Ok(sigma)
        })
        .collect()
}

/// `‖u_h − u(t)‖_{L²}` with a degree-4 cell rule in 2D.
pub fn l2_error(mesh: &CrackedMesh, u: &[f64], exact: &VectorExpr, t: f64) -> Result<f64, FemError> {
    check_dim(mesh, exact)?;
    let d = mesh.dim;
    let quad = Quadrature::cell(d, 4);
    let mut sum = 0.0;
    for (ci, cell) in mesh.cells.iter().enumerate() {
        let geo = cell_geometry(mesh, ci, cell)?;
        for (bary, w) in quad.points.iter().zip(&quad.weights) {
            let x = map_point(mesh, &cell.vertices, bary);
            let e = eval_at(exact, t, &x)?;
            for i in 0..d {
                let uh: f64 = cell.vertices.iter().zip(bary).map(|(&v, b)| b * u[v * d + i]).sum();
                sum += w * geo.measure * (uh - e[i]).powi(2);
            }
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{dot, solve_spd, DofMap};
    use crate::mesh::{generate_rect_crack, generate_rect_glued, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_triangle() -> CrackedMesh {
        CrackedMesh {
            dim: 2,
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            cells: vec![Cell { vertices: vec![0, 1, 2], side: Side::Minus }],
            dirichlet_facets: vec![vec![0, 1]],
            neumann_facets: vec![vec![1, 2]],
            crack_pairs: vec![],
        }
    }

    fn unit() -> Material {
        Material::new(1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for q in [Quadrature::cell(2, 2), Quadrature::cell(2, 4), Quadrature::cell(3, 2), Quadrature::facet(2)] {
            assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for p in &q.points {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degree_four_rule_is_exact_for_quartics() {
        // ∫_T λ0² λ1² = 2!2!0! 2! / 6! |T| = 8/720 |T| on the reference triangle
        let q = Quadrature::cell(2, 4);
        let approx: f64 = q.points.iter().zip(&q.weights).map(|(p, w)| w * p[0].powi(2) * p[1].powi(2)).sum();
        assert!((approx - 2.0 * 2.0 * 2.0 / 720.0).abs() < 1e-12);
    }

    #[test]
    fn element_mass_of_unit_triangle() {
        let m = assemble_mass(&unit_triangle(), &unit()).unwrap();
        // scalar component 0 lives on dofs 0, 2, 4
        let expected = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((m.get(2 * a, 2 * b) - expected[a][b] / 24.0).abs() < 1e-15);
                assert_eq!(m.get(2 * a, 2 * b + 1), 0.0);
            }
        }
    }

    #[test]
    fn mass_totals_and_scaling() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 4, (0.25, 0.75)).unwrap();
        let m1 = assemble_mass(&mesh, &Material::new(1.0, 1.0, 1.5).unwrap()).unwrap();
        let m2 = assemble_mass(&mesh, &Material::new(1.0, 1.0, 3.0).unwrap()).unwrap();
        let ones_x: Vec<f64> = (0..mesh.n_vertices() * 2).map(|k| if k % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((m1.bilinear(&ones_x, &ones_x) - 1.5 * 2.0).abs() < 1e-12);
        let d1 = m1.to_dense();
        let d2 = m2.to_dense();
        for (r1, r2) in d1.iter().zip(&d2) {
            for (a, b) in r1.iter().zip(r2) {
                assert_eq!(2.0 * a, *b);
            }
        }
    }

    #[test]
    fn rigid_motions_in_kernel() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 4, (0.25, 0.75)).unwrap();
        let k = assemble_stiffness(&mesh, &Material::new(2.0, 0.7, 1.0).unwrap()).unwrap();
        let n = mesh.n_vertices();
        let mut fields = vec![vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]];
        for (v, p) in mesh.vertices.iter().enumerate() {
            fields[0][2 * v] = 1.0;
            fields[1][2 * v + 1] = 1.0;
            fields[2][2 * v] = -p[1];
            fields[2][2 * v + 1] = p[0];
        }
        let scale = k.norm_inf();
        for f in &fields {
            let r = k.mul_vec(f);
            assert!(r.iter().all(|x| x.abs() <= 1e-12 * scale), "{:?}", r);
        }
    }

    #[test]
    fn uniaxial_patch_test() {
        let mesh = generate_rect_glued(2.0, 1.0, 2, 2).unwrap();
        let mat = Material::new(1.3, 0.6, 1.0).unwrap();
        let alpha = 1e-3;
        let u: Vec<f64> =
            mesh.vertices.iter().flat_map(|p| [alpha * p[0], 0.0]).collect();
        for s in cell_stresses(&mesh, &mat, &u).unwrap() {
            let expected = (mat.lambda + 2.0 * mat.mu) * alpha;
            assert!((s[0][0] - expected).abs() <= 1e-10 * expected);
            assert!((s[1][1] - mat.lambda * alpha).abs() <= 1e-10 * expected);
            assert!((s[2][2] - mat.lambda * alpha).abs() <= 1e-10 * expected);
            assert!(s[0][1].abs() <= 1e-12);
        }
    }

    #[test]
    fn single_tetrahedron() {
        let mesh = CrackedMesh {
            dim: 3,
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            cells: vec![Cell { vertices: vec![0, 1, 2, 3], side: Side::Minus }],
            dirichlet_facets: vec![],
            neumann_facets: vec![],
            crack_pairs: vec![],
        };
        let mat = Material::new(1.3, 0.6, 2.0).unwrap();
        let m = assemble_mass(&mesh, &mat).unwrap();
        // P1 mass on a tetrahedron: ρ|T|(1 + δ_ab)/20 with |T| = 1/6
        for a in 0..4 {
            for b in 0..4 {
                let expected = 2.0 / 6.0 * if a == b { 2.0 } else { 1.0 } / 20.0;
                assert!((m.get(3 * a, 3 * b) - expected).abs() < 1e-15);
                assert_eq!(m.get(3 * a, 3 * b + 1), 0.0);
            }
        }

        let k = assemble_stiffness(&mesh, &mat).unwrap();
        assert!(k.asymmetry() < 1e-14);
        let mut rigid = Vec::new();
        for c in 0..3 {
            rigid.push((0..12).map(|j| if j % 3 == c { 1.0 } else { 0.0 }).collect::<Vec<f64>>());
        }
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let mut f = vec![0.0; 12];
            for (v, p) in mesh.vertices.iter().enumerate() {
                f[3 * v + i] = -p[j];
                f[3 * v + j] = p[i];
            }
            rigid.push(f);
        }
        for f in &rigid {
            assert!(k.mul_vec(f).iter().all(|x| x.abs() < 1e-14));
        }

        let alpha = 1e-2;
        let u: Vec<f64> = mesh.vertices.iter().flat_map(|p| [alpha * p[0], 0.0, 0.0]).collect();
        let energy = 0.5 * dot(&u, &k.mul_vec(&u));
        let expected = 0.5 * (mat.lambda + 2.0 * mat.mu) * alpha * alpha / 6.0;
        assert!((energy - expected).abs() < 1e-14);
        let s = cell_stresses(&mesh, &mat, &u).unwrap()[0];
        assert!((s[0][0] - (mat.lambda + 2.0 * mat.mu) * alpha).abs() < 1e-14);
        assert!((s[1][1] - mat.lambda * alpha).abs() < 1e-14);
        assert!((s[2][2] - mat.lambda * alpha).abs() < 1e-14);
    }

    #[test]
    fn stiffness_symmetric_and_coercive() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 4, (0.25, 0.75)).unwrap();
        let k = assemble_stiffness(&mesh, &unit()).unwrap();
        assert!(k.asymmetry() <= 1e-13 * k.norm_inf());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = k.dim();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (a, b) = (k.bilinear(&v, &w), k.bilinear(&w, &v));
        assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));

        // inverse power iteration for the smallest eigenvalue on free dofs
        let dofs = DofMap::new(&mesh);
        let kp = k.pin(&dofs.constrained);
        let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        dofs.apply_constraints(&mut x);
        let mut lambda_min = 0.0;
        for _ in 0..60 {
            let nx = dot(&x, &x).sqrt();
            x.iter_mut().for_each(|xi| *xi /= nx);
            let y = solve_spd(&kp, &x, 1e-12, 10_000).unwrap();
            lambda_min = 1.0 / dot(&x, &y);
            x = y;
        }
        assert!(lambda_min > 1e-6, "smallest eigenvalue {lambda_min}");
    }

    #[test]
    fn modes_agree_bitwise() {
        let mesh = generate_rect_crack(2.0, 1.0, 8, 4, (0.25, 0.75)).unwrap();
        let mat = unit();
        let a = assemble_stiffness_with(&mesh, &mat, AssemblyMode::Sequential).unwrap();
        let b = assemble_stiffness_with(&mesh, &mat, AssemblyMode::Parallel).unwrap();
        let c = assemble_stiffness_with(&mesh, &mat, AssemblyMode::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(
            assemble_mass_with(&mesh, &mat, AssemblyMode::Sequential).unwrap(),
            assemble_mass_with(&mesh, &mat, AssemblyMode::Parallel).unwrap()
        );
    }

    #[test]
    fn inverted_cell_rejected() {
        let mut mesh = unit_triangle();
        mesh.cells[0].vertices = vec![0, 2, 1];
        assert!(matches!(assemble_mass(&mesh, &unit()), Err(FemError::InvertedCell { cell: 0, .. })));
        assert!(matches!(assemble_stiffness(&mesh, &unit()), Err(FemError::InvertedCell { cell: 0, .. })));
    }

    #[test]
    fn constant_body_force_matches_mass_action() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 4, (0.25, 0.75)).unwrap();
        let rho = 2.5;
        let f = VectorExpr::parse("(0.5, -3)").unwrap();
        let load = assemble_load(&mesh, &f, &VectorExpr::zero(2), rho, 0.0).unwrap();
        let m = assemble_mass(&mesh, &Material::new(1.0, 1.0, rho).unwrap()).unwrap();
        let c: Vec<f64> = (0..mesh.n_vertices()).flat_map(|_| [0.5, -3.0]).collect();
        let expected = m.mul_vec(&c);
        for (a, b) in load.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-13);
        }
        let zero = assemble_load(&mesh, &VectorExpr::zero(2), &VectorExpr::zero(2), rho, 0.0).unwrap();
        assert!(zero.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn top_traction_total() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 4, (0.25, 0.75)).unwrap();
        let p = 0.7;
        // Γ_N is the top (y = 1) and bottom (y = 0) edge; the factor y
        // switches the traction off on the bottom
        let traction = VectorExpr::parse("(0, -0.7*y)").unwrap();
        let load = assemble_load(&mesh, &VectorExpr::zero(2), &traction, 1.0, 0.0).unwrap();
        let total: f64 = load.iter().skip(1).step_by(2).sum();
        assert!((total + p * 2.0).abs() < 1e-13, "{total}");
    }

    #[test]
    fn data_dimension_checked() {
        let mesh = unit_triangle();
        let bad = VectorExpr::parse("(1, 2, 3)").unwrap();
        assert!(matches!(
            assemble_load(&mesh, &bad, &VectorExpr::zero(2), 1.0, 0.0),
            Err(FemError::DataDimension { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn l2_error_of_interpolant() {
        let mesh = generate_rect_glued(2.0, 1.0, 4, 2).unwrap();
        let exact = VectorExpr::parse("(x + 2*y, 3 - y)").unwrap();
        let u: Vec<f64> = mesh.vertices.iter().flat_map(|p| [p[0] + 2.0 * p[1], 3.0 - p[1]]).collect();
        assert!(l2_error(&mesh, &u, &exact, 0.0).unwrap() < 1e-13);
        let zero = vec![0.0; u.len()];
        // ∫ 1 over the 2×1 rectangle
        let one = VectorExpr::parse("(1, 0)").unwrap();
        assert!((l2_error(&mesh, &zero, &one, 0.0).unwrap() - 2f64.sqrt()).abs() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn case() -> impl Strategy<Value = (CrackedMesh, Material, u64)> {
            (2usize..7, 1usize..4, 0.5..3.0f64, 0.5..3.0f64, -0.3..5.0f64, 0.1..5.0f64, 0.1..4.0f64, any::<bool>(), any::<u64>())
                .prop_map(|(nx, half, w, h, lambda, mu, rho, cracked, seed)| {
                    let mesh = if cracked {
                        // the span (0.01, 0.99) always holds the interior midline vertices
                        generate_rect_crack(w, h, nx, 2 * half, (0.01, 0.99)).unwrap()
                    } else {
                        generate_rect_glued(w, h, nx, 2 * half).unwrap()
                    };
                    (mesh, Material { lambda, mu, rho }, seed)
                })
                .prop_filter("admissible material", |(_, m, _)| m.validate().is_ok())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn stiffness_and_mass_invariants((mesh, mat, seed) in case()) {
                let k = assemble_stiffness(&mesh, &mat).unwrap();
                let m = assemble_mass(&mesh, &mat).unwrap();
                prop_assert!(k.is_finite() && m.is_finite());
                prop_assert!(k.asymmetry() <= 1e-13 * k.norm_inf());
                prop_assert!(m.asymmetry() <= 1e-13 * m.norm_inf());

                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = k.dim();
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (a, b) = (k.bilinear(&v, &w), k.bilinear(&w, &v));
                prop_assert!((a - b).abs() <= 1e-13 * k.norm_inf() * n as f64);
                prop_assert!(k.bilinear(&v, &v) >= -1e-13 * k.norm_inf() * n as f64);
                prop_assert!(m.bilinear(&v, &v) > 0.0);

                let nv = mesh.n_vertices();
                let (cx, cy) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                let mut rigid = vec![vec![0.0; 2 * nv]; 3];
                for (i, p) in mesh.vertices.iter().enumerate() {
                    rigid[0][2 * i] = 1.0;
                    rigid[1][2 * i + 1] = 1.0;
                    rigid[2][2 * i] = -(p[1] - cy);
                    rigid[2][2 * i + 1] = p[0] - cx;
                }
                for r in &rigid {
                    let rmax = r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                    prop_assert!(k.mul_vec(r).iter().all(|x| x.abs() <= 1e-12 * k.norm_inf() * rmax));
                }
                // a translation carries the whole mass ρ|Ω|
                prop_assert!((m.bilinear(&rigid[0], &rigid[0]) - mat.rho * mesh.measure()).abs() <= 1e-12 * mat.rho * mesh.measure());

                prop_assert_eq!(assemble_stiffness_with(&mesh, &mat, AssemblyMode::Parallel).unwrap(), k);
                prop_assert_eq!(assemble_mass_with(&mesh, &mat, AssemblyMode::Parallel).unwrap(), m);
            }

            #[test]
            fn dof_map_partitions_dofs((mesh, _mat, _seed) in case()) {
                let dofs = DofMap::new(&mesh);
                let on_dirichlet: std::collections::HashSet<usize> = mesh.dirichlet_facets.iter().flatten().copied().collect();
                for v in 0..mesh.n_vertices() {
                    for c in 0..2 {
                        prop_assert_eq!(dofs.constrained[dofs.dof(v, c)], on_dirichlet.contains(&v));
                    }
                }
                let free = dofs.constrained.iter().filter(|c| !**c).count();
                prop_assert_eq!(free + 2 * on_dirichlet.len(), dofs.n_dofs());
            }
        }
    }
}
