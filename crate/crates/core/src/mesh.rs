//! Simplicial meshes of a domain cut by an interior crack.
//!
//! The interface splits the domain into a `plus` and a `minus` subdomain. Along
//! the crack the mesh carries two copies of every vertex, one referenced by the
//! plus cells and one by the minus cells, so the P1 space on this mesh is
//! exactly the set of fields that are continuous everywhere except across the
//! crack. Vertices on the glued part of the interface and at the crack tips
//! are shared.
//!
//! Each [`CrackPair`] couples a plus-side facet with the geometrically
//! coincident minus-side facet and stores the unit normal pointing from the
//! minus side into the plus side.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh invariant `{invariant}` violated: {detail}")]
    Invariant { invariant: &'static str, detail: String },
    #[error("invalid mesh parameters: {0}")]
    Parameters(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invariant(invariant: &'static str, detail: impl Into<String>) -> MeshError {
    MeshError::Invariant { invariant, detail: detail.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub vertices: Vec<usize>,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrackPair {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrackedMesh {
    pub dim: usize,
    /// Coordinates, padded with zeros beyond `dim`.
    pub vertices: Vec<[f64; 3]>,
    pub cells: Vec<Cell>,
    pub dirichlet_facets: Vec<Vec<usize>>,
    pub neumann_facets: Vec<Vec<usize>>,
    pub crack_pairs: Vec<CrackPair>,
}

/// Aligned vertex lists of one crack pair: `plus[i]` and `minus[i]` sit at the
/// same position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceMap {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

fn sorted(facet: &[usize]) -> Vec<usize> {
    let mut f = facet.to_vec();
    f.sort_unstable();
    f
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

impl CrackedMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn centroid(&self, vertices: &[usize]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for &v in vertices {
            for k in 0..3 {
                c[k] += self.vertices[v][k];
            }
        }
        let n = vertices.len() as f64;
        c.map(|x| x / n)
    }

    /// Unit normal of a facet (segment in 2D, triangle in 3D) and its measure.
    /// The orientation follows the vertex order: in 2D the segment direction
    /// rotated clockwise.
    pub fn facet_normal(&self, facet: &[usize]) -> ([f64; 3], f64) {
        let p0 = &self.vertices[facet[0]];
        let p1 = &self.vertices[facet[1]];
        let e1 = sub(p1, p0);
        let raw = if self.dim == 2 {
            [e1[1], -e1[0], 0.0]
        } else {
            let e2 = sub(&self.vertices[facet[2]], p0);
            cross(&e1, &e2)
        };
        let len = norm(&raw);
        let measure = if self.dim == 2 { len } else { 0.5 * len };
        (raw.map(|x| x / len), measure)
    }

    fn bounding_size(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.vertices {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (0..self.dim).map(|k| hi[k] - lo[k]).fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }

    /// Map from sorted facet to the cells containing it.
    fn facet_cells(&self) -> HashMap<Vec<usize>, Vec<usize>> {
        let mut map: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
        for (ci, cell) in self.cells.iter().enumerate() {
            for skip in 0..cell.vertices.len() {
                let facet: Vec<usize> = cell
                    .vertices
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| v)
                    .collect();
                map.entry(sorted(&facet)).or_default().push(ci);
            }
        }
        map
    }

    /// Checks every structural invariant of a cracked mesh.
    pub fn validate(&self) -> Result<(), MeshError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(invariant("dimension", format!("dim must be 2 or 3, got {}", self.dim)));
        }
        let nv = self.vertices.len();
        for (ci, cell) in self.cells.iter().enumerate() {
            if cell.vertices.len() != self.dim + 1 {
                return Err(invariant("simplex", format!("cell {ci} has {} vertices", cell.vertices.len())));
            }
            if let Some(&v) = cell.vertices.iter().find(|&&v| v >= nv) {
                return Err(invariant("vertex index", format!("cell {ci} references vertex {v}")));
            }
        }
        for facet in self.dirichlet_facets.iter().chain(&self.neumann_facets) {
            if facet.len() != self.dim || facet.iter().any(|&v| v >= nv) {
                return Err(invariant("boundary facet", format!("malformed facet {facet:?}")));
            }
        }
        if self.dirichlet_facets.is_empty() {
            return Err(invariant("dirichlet", "Γ_D must be nonempty"));
        }

        let facet_cells = self.facet_cells();
        for facet in self.dirichlet_facets.iter().chain(&self.neumann_facets) {
            match facet_cells.get(&sorted(facet)) {
                Some(cells) if cells.len() == 1 => {}
                _ => return Err(invariant("boundary facet", format!("{facet:?} is not a boundary facet"))),
            }
        }

        for (pi, pair) in self.crack_pairs.iter().enumerate() {
            if pair.plus.len() != self.dim || pair.minus.len() != self.dim {
                return Err(invariant("crack pair", format!("pair {pi} has malformed facets")));
            }
            if pair.plus.iter().chain(&pair.minus).any(|&v| v >= nv) {
                return Err(invariant("vertex index", format!("pair {pi} references a missing vertex")));
            }
            if sorted(&pair.plus) == sorted(&pair.minus) {
                return Err(invariant("crack pair", format!("pair {pi} has identical plus and minus facets")));
            }
            let n = pair.normal;
            if (norm(&n) - 1.0).abs() > 1e-10 {
                return Err(invariant("unit normal", format!("pair {pi} normal has length {}", norm(&n))));
            }
            let plus_cell = match facet_cells.get(&sorted(&pair.plus)).map(|c| c.as_slice()) {
                Some([c]) if self.cells[*c].side == Side::Plus => *c,
                _ => {
                    return Err(invariant(
                        "crack pair",
                        format!("pair {pi}: plus facet must bound exactly one plus cell"),
                    ))
                }
            };
            let minus_cell = match facet_cells.get(&sorted(&pair.minus)).map(|c| c.as_slice()) {
                Some([c]) if self.cells[*c].side == Side::Minus => *c,
                _ => {
                    return Err(invariant(
                        "crack pair",
                        format!("pair {pi}: minus facet must bound exactly one minus cell"),
                    ))
                }
            };
            // geometric outward normal of the minus cell on its facet
            let (mut geo, _) = self.facet_normal(&pair.minus);
            let inward = sub(&self.centroid(&self.cells[minus_cell].vertices), &self.centroid(&pair.minus));
            if dot(&geo, &inward) > 0.0 {
                geo = geo.map(|x| -x);
            }
            if (dot(&geo, &n) - 1.0).abs() > 1e-9 {
                return Err(invariant(
                    "normal orientation",
                    format!("pair {pi}: stored normal {n:?} differs from minus-side outward normal {geo:?}"),
                ));
            }
            let towards_plus = sub(
                &self.centroid(&self.cells[plus_cell].vertices),
                &self.centroid(&self.cells[minus_cell].vertices),
            );
            if dot(&n, &towards_plus) <= 0.0 {
                return Err(invariant("normal orientation", format!("pair {pi}: normal does not point into Ω₊")));
            }
        }
        // a vertex carried by both sides of a crack pair must sit on the
        // relative boundary of the crack: in some (d-2)-face that belongs to
        // exactly one crack facet
        let remap = self.merge_map();
        let mut subface_count: HashMap<Vec<usize>, usize> = HashMap::new();
        for pair in &self.crack_pairs {
            for skip in 0..pair.minus.len() {
                let face: Vec<usize> = pair
                    .minus
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &v)| remap[v])
                    .collect();
                *subface_count.entry(sorted(&face)).or_default() += 1;
            }
        }
        let mut on_crack_boundary = vec![false; nv];
        for (face, count) in &subface_count {
            if *count == 1 {
                for &v in face {
                    on_crack_boundary[v] = true;
                }
            }
        }
        for map in self.crack_trace_maps()? {
            for (&p, &m) in map.plus.iter().zip(&map.minus) {
                if p == m && !on_crack_boundary[remap[p]] {
                    return Err(invariant(
                        "crack interior",
                        format!("vertex {p} is shared by both sides but lies inside the crack"),
                    ));
                }
            }
        }
        self.check_merged_conformity()
    }

    /// Identifies crack duplicates and checks that the result is conforming:
    /// no facet is shared by more than two cells and every crack facet is
    /// shared by exactly one plus and one minus cell.
    pub fn check_merged_conformity(&self) -> Result<(), MeshError> {
        let merged = self.merged();
        let facet_cells = merged.facet_cells();
        if let Some((facet, cells)) = facet_cells.iter().find(|(_, c)| c.len() > 2) {
            return Err(invariant("conformity", format!("merged facet {facet:?} shared by {} cells", cells.len())));
        }
        let remap = self.merge_map();
        for (pi, pair) in self.crack_pairs.iter().enumerate() {
            let f = sorted(&pair.plus.iter().map(|&v| remap[v]).collect::<Vec<_>>());
            if facet_cells.get(&f).map_or(0, |c| c.len()) != 2 {
                return Err(invariant("conformity", format!("crack pair {pi} does not close up when merged")));
            }
        }
        Ok(())
    }

    fn merge_map(&self) -> Vec<usize> {
        let mut remap: Vec<usize> = (0..self.vertices.len()).collect();
        if let Ok(maps) = self.crack_trace_maps() {
            for map in maps {
                for (&p, &m) in map.plus.iter().zip(&map.minus) {
                    let (lo, hi) = if p < m { (p, m) } else { (m, p) };
                    remap[hi] = remap[lo].min(remap[hi]);
                }
            }
        }
        // resolve chains
        for i in 0..remap.len() {
            let mut r = remap[i];
            while remap[r] != r {
                r = remap[r];
            }
            remap[i] = r;
        }
        remap
    }

    /// The same mesh with every crack duplicate identified with its partner.
    /// Unused duplicate vertices are kept so indices stay comparable.
    pub fn merged(&self) -> CrackedMesh {
        let remap = self.merge_map();
        let map_facet = |f: &Vec<usize>| f.iter().map(|&v| remap[v]).collect::<Vec<_>>();
        CrackedMesh {
            dim: self.dim,
            vertices: self.vertices.clone(),
            cells: self
                .cells
                .iter()
                .map(|c| Cell { vertices: map_facet(&c.vertices), side: c.side })
                .collect(),
            dirichlet_facets: self.dirichlet_facets.iter().map(map_facet).collect(),
            neumann_facets: self.neumann_facets.iter().map(map_facet).collect(),
            crack_pairs: Vec::new(),
        }
    }

    /// For each crack pair, the plus and minus vertex lists aligned by position.
    pub fn crack_trace_maps(&self) -> Result<Vec<TraceMap>, MeshError> {
        let tol = 1e-12 * self.bounding_size();
        self.crack_pairs
            .iter()
            .enumerate()
            .map(|(pi, pair)| {
                let mut minus = Vec::with_capacity(pair.plus.len());
                for &p in &pair.plus {
                    let found = pair
                        .minus
                        .iter()
                        .copied()
                        .find(|&m| norm(&sub(&self.vertices[p], &self.vertices[m])) <= tol);
                    match found {
                        Some(m) => minus.push(m),
                        None => {
                            return Err(invariant(
                                "coincident crack faces",
                                format!("pair {pi}: plus vertex {p} has no coincident minus vertex"),
                            ))
                        }
                    }
                }
                let mut check = sorted(&minus);
                check.dedup();
                if check.len() != pair.minus.len() {
                    return Err(invariant("coincident crack faces", format!("pair {pi}: ambiguous vertex pairing")));
                }
                Ok(TraceMap { plus: pair.plus.clone(), minus })
            })
            .collect()
    }

    /// Signed measure of a cell (area in 2D, volume in 3D).
    pub fn signed_measure(&self, cell: &Cell) -> f64 {
        let v = &cell.vertices;
        let p0 = &self.vertices[v[0]];
        let e1 = sub(&self.vertices[v[1]], p0);
        let e2 = sub(&self.vertices[v[2]], p0);
        if self.dim == 2 {
            0.5 * (e1[0] * e2[1] - e1[1] * e2[0])
        } else {
            let e3 = sub(&self.vertices[v[3]], p0);
            dot(&cross(&e1, &e2), &e3) / 6.0
        }
    }

    /// Total measure of the cells.
    pub fn measure(&self) -> f64 {
        self.cells.iter().map(|c| self.signed_measure(c).abs()).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CrackedMesh, MeshError> {
        let text = std::fs::read_to_string(path)?;
        let mesh = CrackedMesh::parse(&text)?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Serializes in the line-oriented `crackmesh 1` format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "crackmesh 1 {}", self.dim);
        let _ = writeln!(out, "vertices {}", self.vertices.len());
        for p in &self.vertices {
            let coords: Vec<String> = p[..self.dim].iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(out, "{}", coords.join(" "));
        }
        let _ = writeln!(out, "cells {}", self.cells.len());
        for c in &self.cells {
            let ids: Vec<String> = c.vertices.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{} {}", ids.join(" "), c.side.as_str());
        }
        for (name, facets) in [("dirichlet", &self.dirichlet_facets), ("neumann", &self.neumann_facets)] {
            let _ = writeln!(out, "{name} {}", facets.len());
            for f in facets {
                let ids: Vec<String> = f.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(out, "{}", ids.join(" "));
            }
        }
        let _ = writeln!(out, "crackpairs {}", self.crack_pairs.len());
        for pair in &self.crack_pairs {
            let mut fields: Vec<String> = pair.plus.iter().chain(&pair.minus).map(|v| v.to_string()).collect();
            fields.extend(pair.normal[..self.dim].iter().map(|x| format!("{x}")));
            let _ = writeln!(out, "{}", fields.join(" "));
        }
        out
    }

    /// Parses the text format without validating mesh invariants.
    pub fn parse(text: &str) -> Result<CrackedMesh, MeshError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let perr = |line: usize, message: String| MeshError::Parse { line, message };

        let (ln, header) = lines.next().ok_or_else(|| perr(1, "empty mesh file".into()))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 || head[0] != "crackmesh" || head[1] != "1" {
            return Err(perr(ln, format!("expected `crackmesh 1 <dim>`, found `{header}`")));
        }
        let dim: usize = head[2].parse().map_err(|_| perr(ln, format!("bad dimension `{}`", head[2])))?;
        if dim != 2 && dim != 3 {
            return Err(perr(ln, format!("dimension must be 2 or 3, got {dim}")));
        }

        let mut mesh = CrackedMesh {
            dim,
            vertices: Vec::new(),
            cells: Vec::new(),
            dirichlet_facets: Vec::new(),
            neumann_facets: Vec::new(),
            crack_pairs: Vec::new(),
        };
        let mut seen = BTreeMap::new();
        while let Some((ln, line)) = lines.next() {
            let mut words = line.split_whitespace();
            let section = words.next().unwrap_or_default().to_string();
            let count: usize = words
                .next()
                .and_then(|w| w.parse().ok())
                .ok_or_else(|| perr(ln, format!("expected `<section> <count>`, found `{line}`")))?;
            if seen.insert(section.clone(), ln).is_some() {
                return Err(perr(ln, format!("duplicate section `{section}`")));
            }
            for _ in 0..count {
                let (ln, row) = lines
                    .next()
                    .ok_or_else(|| perr(ln, format!("section `{section}` ended early")))?;
                let fields: Vec<&str> = row.split_whitespace().collect();
                let ints = |fs: &[&str]| -> Result<Vec<usize>, MeshError> {
                    fs.iter()
                        .map(|f| f.parse::<usize>().map_err(|_| perr(ln, format!("bad index `{f}`"))))
                        .collect()
                };
                let floats = |fs: &[&str]| -> Result<Vec<f64>, MeshError> {
                    fs.iter()
                        .map(|f| f.parse::<f64>().map_err(|_| perr(ln, format!("bad number `{f}`"))))
                        .collect()
                };
                match section.as_str() {
                    "vertices" => {
                        if fields.len() != dim {
                            return Err(perr(ln, format!("expected {dim} coordinates")));
                        }
                        let c = floats(&fields)?;
                        let mut p = [0.0; 3];
                        p[..dim].copy_from_slice(&c);
                        mesh.vertices.push(p);
                    }
                    "cells" => {
                        if fields.len() != dim + 2 {
                            return Err(perr(ln, format!("expected {} vertex ids and a side", dim + 1)));
                        }
                        let side = match fields[dim + 1] {
                            "plus" | "+" => Side::Plus,
                            "minus" | "-" => Side::Minus,
                            other => return Err(perr(ln, format!("cell side must be plus or minus, got `{other}`"))),
                        };
                        mesh.cells.push(Cell { vertices: ints(&fields[..=dim])?, side });
                    }
                    "dirichlet" | "neumann" => {
                        if fields.len() != dim {
                            return Err(perr(ln, format!("expected {dim} vertex ids")));
                        }
                        let f = ints(&fields)?;
                        if section == "dirichlet" {
                            mesh.dirichlet_facets.push(f);
                        } else {
                            mesh.neumann_facets.push(f);
                        }
                    }
                    "crackpairs" => {
                        if fields.len() != 3 * dim {
                            return Err(perr(
                                ln,
                                format!("expected {dim} plus ids, {dim} minus ids and {dim} normal components"),
                            ));
                        }
                        let ids = ints(&fields[..2 * dim])?;
                        let n = floats(&fields[2 * dim..])?;
                        let mut normal = [0.0; 3];
                        normal[..dim].copy_from_slice(&n);
                        mesh.crack_pairs.push(CrackPair {
                            plus: ids[..dim].to_vec(),
                            minus: ids[dim..].to_vec(),
                            normal,
                        });
                    }
                    other => return Err(perr(ln, format!("unknown section `{other}`"))),
                }
            }
        }
        for required in ["vertices", "cells", "dirichlet"] {
            if !seen.contains_key(required) {
                return Err(perr(text.lines().count(), format!("missing section `{required}`")));
            }
        }
        Ok(mesh)
    }
}

/// Parameters of the built-in structured rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct RectSpec {
    pub width: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Crack extent along the midline as fractions of the width; `None`
    /// produces an uncracked (glued) mesh.
    pub crack_span: Option<(f64, f64)>,
}

impl RectSpec {
    /// Parses `rect(width, height, nx, ny[, a, b])`.
    pub fn parse(spec: &str) -> Result<RectSpec, MeshError> {
        let bad = || MeshError::Parameters(format!("expected `rect(width, height, nx, ny[, a, b])`, got `{spec}`"));
        let inner = spec
            .trim()
            .strip_prefix("rect(")
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(bad)?;
        let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
        if parts.len() != 4 && parts.len() != 6 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
        Ok(RectSpec {
            width: num(parts[0])?,
            height: num(parts[1])?,
            nx: int(parts[2])?,
            ny: int(parts[3])?,
            crack_span: if parts.len() == 6 { Some((num(parts[4])?, num(parts[5])?)) } else { None },
        })
    }

    pub fn build(&self) -> Result<CrackedMesh, MeshError> {
        generate_rect(self.width, self.height, self.nx, self.ny, self.crack_span)
    }
}

impl std::fmt::Display for RectSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "rect({}, {}, {}, {}", self.width, self.height, self.nx, self.ny)?;
        if let Some((a, b)) = self.crack_span {
            write!(f, ", {a}, {b}")?;
        }
        f.write_str(")")
    }
}

/// Structured triangulation of `[0, width] × [0, height]` cut by the
/// horizontal midline, with a crack on the midline over
/// `(a·width, b·width)`.
///
/// Midline vertices strictly inside the crack span are duplicated; the left
/// and right edges are Dirichlet, top and bottom Neumann. `ny` must be even
/// so that the midline is a grid line.
pub fn generate_rect_crack(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    crack_span: (f64, f64),
) -> Result<CrackedMesh, MeshError> {
    generate_rect(width, height, nx, ny, Some(crack_span))
}

/// Same structured rectangle with no crack.
pub fn generate_rect_glued(width: f64, height: f64, nx: usize, ny: usize) -> Result<CrackedMesh, MeshError> {
    generate_rect(width, height, nx, ny, None)
}

fn generate_rect(
    width: f64,
    height: f64,
    nx: usize,
    ny: usize,
    crack_span: Option<(f64, f64)>,
) -> Result<CrackedMesh, MeshError> {
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(MeshError::Parameters(format!("degenerate extents {width} × {height}")));
    }
    if nx < 2 || ny < 2 {
        return Err(MeshError::Parameters(format!("need nx, ny ≥ 2, got {nx} × {ny}")));
    }
    if ny % 2 != 0 {
        return Err(MeshError::Parameters(format!("ny must be even so the midline is a grid line, got {ny}")));
    }
    if let Some((a, b)) = crack_span {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(MeshError::Parameters(format!("crack span ({a}, {b}) must have positive length")));
        }
        if a <= 0.0 || b >= 1.0 {
            return Err(MeshError::Parameters(format!("crack reaches interface boundary: span ({a}, {b})")));
        }
    }

    let mid = ny / 2;
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([width * i as f64 / nx as f64, height * j as f64 / ny as f64, 0.0]);
        }
    }
    // duplicated midline vertices: the plus side gets the new copy
    let mut plus_copy: HashMap<usize, usize> = HashMap::new();
    if let Some((a, b)) = crack_span {
        for i in 0..=nx {
            let frac = i as f64 / nx as f64;
            if frac > a && frac < b {
                let v = idx(i, mid);
                plus_copy.insert(v, vertices.len());
                vertices.push(vertices[v]);
            }
        }
        if plus_copy.is_empty() {
            return Err(MeshError::Parameters(format!(
                "crack span ({a}, {b}) contains no midline vertex at nx = {nx}"
            )));
        }
    }
    let on_plus = |v: usize, side: Side| match side {
        Side::Plus => *plus_copy.get(&v).unwrap_or(&v),
        Side::Minus => v,
    };

    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        let side = if j >= mid { Side::Plus } else { Side::Minus };
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            let m = |v| on_plus(v, side);
            cells.push(Cell { vertices: vec![m(v00), m(v10), m(v11)], side });
            cells.push(Cell { vertices: vec![m(v00), m(v11), m(v01)], side });
        }
    }

    let mut dirichlet_facets = Vec::new();
    let mut neumann_facets = Vec::new();
    for j in 0..ny {
        let side = if j >= mid { Side::Plus } else { Side::Minus };
        dirichlet_facets.push(vec![on_plus(idx(0, j), side), on_plus(idx(0, j + 1), side)]);
        dirichlet_facets.push(vec![on_plus(idx(nx, j), side), on_plus(idx(nx, j + 1), side)]);
    }
    for i in 0..nx {
        neumann_facets.push(vec![idx(i, 0), idx(i + 1, 0)]);
        neumann_facets.push(vec![idx(i, ny), idx(i + 1, ny)]);
    }

    let mut crack_pairs = Vec::new();
    for i in 0..nx {
        let (a, b) = (idx(i, mid), idx(i + 1, mid));
        if plus_copy.contains_key(&a) || plus_copy.contains_key(&b) {
            crack_pairs.push(CrackPair {
                plus: vec![on_plus(a, Side::Plus), on_plus(b, Side::Plus)],
                minus: vec![a, b],
                normal: [0.0, 1.0, 0.0],
            });
        }
    }

    let mesh = CrackedMesh { dim: 2, vertices, cells, dirichlet_facets, neumann_facets, crack_pairs };
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rect_counts() {
        let mesh = generate_rect_crack(2.0, 1.0, 2, 2, (0.25, 0.75)).unwrap();
        assert_eq!(mesh.cells.len(), 8);
        assert_eq!(mesh.vertices.len(), 9 + 1);
        assert_eq!(mesh.crack_pairs.len(), 2);
        for pair in &mesh.crack_pairs {
            assert_eq!(pair.normal, [0.0, 1.0, 0.0]);
        }
        assert!((mesh.measure() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn crack_must_stay_inside_interface() {
        let err = generate_rect_crack(2.0, 1.0, 4, 4, (0.0, 0.5)).unwrap_err();
        assert!(err.to_string().contains("crack reaches interface boundary"), "{err}");
        assert!(generate_rect_crack(2.0, 1.0, 4, 4, (0.5, 1.0)).is_err());
        assert!(generate_rect_crack(2.0, 1.0, 4, 4, (0.6, 0.4)).is_err());
        assert!(generate_rect_crack(0.0, 1.0, 4, 4, (0.2, 0.4)).is_err());
        assert!(generate_rect_crack(2.0, 1.0, 1, 4, (0.2, 0.4)).is_err());
        assert!(generate_rect_crack(2.0, 1.0, 4, 3, (0.2, 0.4)).is_err());
    }

    #[test]
    fn trace_maps_are_coincident() {
        let mesh = generate_rect_crack(2.0, 1.0, 8, 4, (0.2, 0.8)).unwrap();
        let maps = mesh.crack_trace_maps().unwrap();
        assert_eq!(maps.len(), mesh.crack_pairs.len());
        for m in &maps {
            assert_eq!(m.plus.len(), m.minus.len());
            for (&p, &q) in m.plus.iter().zip(&m.minus) {
                assert_eq!(mesh.vertices[p], mesh.vertices[q]);
            }
        }
        let glued = generate_rect_glued(2.0, 1.0, 8, 4).unwrap();
        assert!(glued.crack_trace_maps().unwrap().is_empty());
    }

    #[test]
    fn three_pair_fixture() {
        // hand-built: unit square split at y = 0.5, crack over x in (0, 1)
        // with three facets; vertices 0..4 bottom-of-crack, 5..7 plus copies
        let text = "\
crackmesh 1 2
vertices 11
0 0.5
0.25 0.5
0.5 0.5
0.75 0.5
1 0.5
0.25 0.5
0.5 0.5
0.75 0.5
0 0
1 0
0.5 1
cells 8
0 8 1 minus
1 8 2 minus
2 8 9 minus
2 9 3 minus
3 9 4 minus
0 5 10 plus
5 6 10 plus
6 7 10 plus
dirichlet 1
0 8
neumann 1
8 9
crackpairs 3
5 6 1 2 0 1
6 7 2 3 0 1
7 4 3 4 0 1
";
        let mesh = CrackedMesh::parse(text).unwrap();
        // the last plus cell is not needed for the pairing test
        let maps = mesh.crack_trace_maps().unwrap();
        assert_eq!(maps.len(), 3);
        assert_eq!(maps[0], TraceMap { plus: vec![5, 6], minus: vec![1, 2] });
        assert_eq!(maps[1], TraceMap { plus: vec![6, 7], minus: vec![2, 3] });
        assert_eq!(maps[2], TraceMap { plus: vec![7, 4], minus: vec![3, 4] });
    }

    #[test]
    fn text_round_trip() {
        let mesh = generate_rect_crack(2.0, 1.0, 6, 4, (0.25, 0.75)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        mesh.save(&path).unwrap();
        let back = CrackedMesh::load(&path).unwrap();
        assert_eq!(back, mesh);
    }

    #[test]
    fn load_rejects_noncoincident_pairs() {
        let mesh = generate_rect_crack(2.0, 1.0, 4, 2, (0.2, 0.8)).unwrap();
        let mut bad = mesh.clone();
        let p = bad.crack_pairs[1].plus[0];
        bad.vertices[p][0] += 1e-3;
        let err = CrackedMesh::parse(&bad.to_text()).unwrap().validate().unwrap_err();
        assert!(matches!(err, MeshError::Invariant { .. }), "{err}");
    }

    #[test]
    fn load_rejects_empty_dirichlet() {
        let mut mesh = generate_rect_crack(2.0, 1.0, 4, 2, (0.2, 0.8)).unwrap();
        mesh.dirichlet_facets.clear();
        let err = CrackedMesh::parse(&mesh.to_text()).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("Γ_D must be nonempty"), "{err}");
    }

    #[test]
    fn load_rejects_flipped_normal() {
        let mut mesh = generate_rect_crack(2.0, 1.0, 4, 2, (0.2, 0.8)).unwrap();
        mesh.crack_pairs[0].normal = [0.0, -1.0, 0.0];
        let err = mesh.validate().unwrap_err();
        assert!(err.to_string().contains("normal orientation"), "{err}");
    }

    #[test]
    fn load_rejects_undoubled_crack_vertex() {
        let mut mesh = generate_rect_crack(2.0, 1.0, 8, 2, (0.2, 0.8)).unwrap();
        // glue one interior crack vertex back together
        let pair = mesh.crack_pairs[3].clone();
        let (p, m) = (pair.plus[0], pair.minus[0]);
        for c in &mut mesh.cells {
            for v in &mut c.vertices {
                if *v == p {
                    *v = m;
                }
            }
        }
        for pair in &mut mesh.crack_pairs {
            for v in &mut pair.plus {
                if *v == p {
                    *v = m;
                }
            }
        }
        assert!(mesh.validate().is_err());
    }

    #[test]
    fn parse_errors_report_lines() {
        let err = CrackedMesh::parse("crackmesh 1 2\nvertices 2\n0 0\n0 x\n").unwrap_err();
        match err {
            MeshError::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e}"),
        }
        assert!(CrackedMesh::parse("crackmesh 2 2\n").is_err());
        assert!(CrackedMesh::parse("# only a comment\n").is_err());
    }

    #[test]
    fn normals_point_into_plus_side() {
        let mesh = generate_rect_crack(3.0, 2.0, 9, 6, (0.1, 0.9)).unwrap();
        let fc = mesh.facet_cells();
        for pair in &mesh.crack_pairs {
            let cp = fc[&sorted(&pair.plus)][0];
            let cm = fc[&sorted(&pair.minus)][0];
            let d = sub(&mesh.centroid(&mesh.cells[cp].vertices), &mesh.centroid(&mesh.cells[cm].vertices));
            assert!(dot(&pair.normal, &d) > 0.0);
        }
    }

    #[test]
    fn refinement_contains_coarse_vertices() {
        let coarse = generate_rect_crack(2.0, 1.0, 4, 2, (0.2, 0.8)).unwrap();
        let fine = generate_rect_crack(2.0, 1.0, 8, 4, (0.2, 0.8)).unwrap();
        for p in &coarse.vertices {
            assert!(fine.vertices.iter().any(|q| norm(&sub(p, q)) < 1e-14), "{p:?}");
        }
    }

    #[test]
    fn rect_spec_parses() {
        let s = RectSpec::parse("rect(2, 1, 16, 8, 0.25, 0.75)").unwrap();
        assert_eq!(s.crack_span, Some((0.25, 0.75)));
        assert_eq!(RectSpec::parse(&s.to_string()).unwrap(), s);
        assert_eq!(RectSpec::parse("rect(2,1,4,2)").unwrap().crack_span, None);
        assert!(RectSpec::parse("square(1)").is_err());
    }

    #[test]
    fn merged_mesh_is_conforming() {
        let mesh = generate_rect_crack(2.0, 1.0, 8, 4, (0.2, 0.8)).unwrap();
        let merged = mesh.merged();
        let fc = merged.facet_cells();
        assert!(fc.values().all(|c| c.len() <= 2));
        // interior facets of a structured nx×ny grid: 3nxny - nx - ny
        let interior = fc.values().filter(|c| c.len() == 2).count();
        assert_eq!(interior, 3 * 8 * 4 - 8 - 4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random structured rectangles whose crack span holds at least one
        /// midline vertex.
        fn rect() -> impl Strategy<Value = (f64, f64, usize, usize, (f64, f64))> {
            (0.3..4.0f64, 0.3..4.0f64, 2usize..10, 1usize..5, 0.01..0.49f64, 0.51..0.99f64)
                .prop_map(|(w, h, nx, half, a, b)| (w, h, nx, 2 * half, (a, b)))
                .prop_filter("span holds a grid vertex", |(_, _, nx, _, (a, b))| {
                    (1..*nx).any(|i| {
                        let f = i as f64 / *nx as f64;
                        f > *a && f < *b
                    })
                })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn generated_meshes_satisfy_invariants((w, h, nx, ny, span) in rect()) {
                let mesh = generate_rect_crack(w, h, nx, ny, span).unwrap();
                prop_assert!(mesh.validate().is_ok());
                prop_assert!(!mesh.dirichlet_facets.is_empty());
                prop_assert!((mesh.measure() - w * h).abs() <= 1e-12 * w * h);

                let scale = w.max(h);
                let fc = mesh.facet_cells();
                for pair in &mesh.crack_pairs {
                    for (p, m) in pair.plus.iter().zip(&pair.minus) {
                        prop_assert!(norm(&sub(&mesh.vertices[*p], &mesh.vertices[*m])) <= 1e-12 * scale);
                    }
                    prop_assert!((norm(&pair.normal) - 1.0).abs() < 1e-12);
                    let cp = fc[&sorted(&pair.plus)][0];
                    let cm = fc[&sorted(&pair.minus)][0];
                    prop_assert_eq!(mesh.cells[cp].side, Side::Plus);
                    prop_assert_eq!(mesh.cells[cm].side, Side::Minus);
                    let d = sub(&mesh.centroid(&mesh.cells[cp].vertices), &mesh.centroid(&mesh.cells[cm].vertices));
                    prop_assert!(dot(&pair.normal, &d) > 0.0);
                }
                prop_assert!(mesh.check_merged_conformity().is_ok());
                let merged = mesh.merged().facet_cells();
                prop_assert!(merged.values().all(|c| c.len() <= 2));
                prop_assert_eq!(merged.values().filter(|c| c.len() == 2).count(), 3 * nx * ny - nx - ny);

                prop_assert_eq!(CrackedMesh::parse(&mesh.to_text()).unwrap(), mesh);
            }

            #[test]
            fn refinement_keeps_coarse_vertices((w, h, nx, ny, span) in rect()) {
                let coarse = generate_rect_crack(w, h, nx, ny, span).unwrap();
                let fine = generate_rect_crack(w, h, 2 * nx, 2 * ny, span).unwrap();
                for p in &coarse.vertices {
                    prop_assert!(fine.vertices.iter().any(|q| norm(&sub(p, q)) <= 1e-12 * w.max(h)));
                }
            }
        }
    }
}
