//! Cell complexes over phase-space manifolds.
//!
//! Three families are supported: a uniform periodic grid on the circle, a uniform
//! periodic grid on the flat torus, and closed orientable triangulated surfaces.
//! Each complex stores its signed incidence matrices together with primal and dual
//! cell volumes, from which diagonal Hodge stars are formed.
//!
//! Orientation: on structured grids every edge points in the positive coordinate
//! direction (including the edges that wrap around), and torus faces are traversed
//! counterclockwise. On surfaces edges point from the lower to the higher vertex
//! index and faces keep the orientation of the input (made consistent if needed).

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse signed incidence matrix: the boundary map from `cols` k-cells to `rows` (k-1)-cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, sign)` triples, sorted by column then row.
    pub entries: Vec<(usize, usize, i8)>,
}

impl Incidence {
    fn new(rows: usize, cols: usize, mut entries: Vec<(usize, usize, i8)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (c, r));
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<i64>> {
        let mut m = vec![vec![0i64; self.cols]; self.rows];
        for &(r, c, s) in &self.entries {
            m[r][c] += s as i64;
        }
        m
    }

    /// Exact integer product `self * other`.
    pub fn compose(&self, other: &Incidence) -> Vec<Vec<i64>> {
        assert_eq!(self.cols, other.rows, "incidence shapes do not compose");
        let mut by_row: Vec<Vec<(usize, i64)>> = vec![Vec::new(); other.rows];
        for &(r, c, s) in &other.entries {
            by_row[r].push((c, s as i64));
        }
        let mut out = vec![vec![0i64; other.cols]; self.rows];
        for &(r, mid, s) in &self.entries {
            for &(c, t) in &by_row[mid] {
                out[r][c] += s as i64 * t;
            }
        }
        out
    }

    pub fn column_sums(&self) -> Vec<i64> {
        let mut sums = vec![0i64; self.cols];
        for &(_, c, s) in &self.entries {
            sums[c] += s as i64;
        }
        sums
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeshKind {
    Circle {
        n: usize,
        length: f64,
    },
    Torus {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
    },
    Surface,
}

/// Immutable cell complex with incidence data and metric weights.
#[derive(Debug, Clone)]
pub struct MeshComplex {
    kind: MeshKind,
    dimension: usize,
    points: Vec<[f64; 3]>,
    cells: Vec<Vec<Vec<usize>>>,
    boundary: Vec<Incidence>,
    primal_volumes: Vec<Vec<f64>>,
    dual_volumes: Vec<Vec<f64>>,
    warnings: Vec<String>,
}

impl MeshComplex {
    pub fn kind(&self) -> MeshKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_structured(&self) -> bool {
        !matches!(self.kind, MeshKind::Surface)
    }

    pub fn cell_count(&self, k: usize) -> usize {
        self.cells.get(k).map_or(0, Vec::len)
    }

    pub fn cell_counts(&self) -> Vec<usize> {
        self.cells.iter().map(Vec::len).collect()
    }

    /// Oriented vertex lists of the k-cells.
    pub fn cells(&self, k: usize) -> &[Vec<usize>] {
        &self.cells[k]
    }

    /// Vertex coordinates: `(φ, 0, 0)` on the circle, `(x, y, 0)` on the torus.
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    /// Boundary operator ∂_k for `1 <= k <= dimension`.
    pub fn boundary(&self, k: usize) -> Result<&Incidence> {
        if k == 0 || k > self.dimension {
            return Err(Error::Degree(format!(
                "boundary operator ∂_{k} undefined on a {}-dimensional complex",
                self.dimension
            )));
        }
        Ok(&self.boundary[k - 1])
    }

    pub fn primal_volumes(&self, k: usize) -> &[f64] {
        &self.primal_volumes[k]
    }

    pub fn dual_volumes(&self, k: usize) -> &[f64] {
        &self.dual_volumes[k]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.cells
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k % 2 == 0 {
                    c.len() as i64
                } else {
                    -(c.len() as i64)
                }
            })
            .sum()
    }

    /// Total volume of the manifold (sum of vertex dual volumes).
    pub fn volume(&self) -> f64 {
        self.dual_volumes[0].iter().sum()
    }

    /// Uniform spacings `[hx, hy]` of a structured grid (`hy = 0` on the circle).
    pub fn spacing(&self) -> Option<[f64; 2]> {
        match self.kind {
            MeshKind::Circle { n, length } => Some([length / n as f64, 0.0]),
            MeshKind::Torus { nx, ny, lx, ly } => Some([lx / nx as f64, ly / ny as f64]),
            MeshKind::Surface => None,
        }
    }

    /// Periods of a structured grid along each coordinate.
    pub fn periods(&self) -> Option<Vec<f64>> {
        match self.kind {
            MeshKind::Circle { length, .. } => Some(vec![length]),
            MeshKind::Torus { lx, ly, .. } => Some(vec![lx, ly]),
            MeshKind::Surface => None,
        }
    }

    /// Mean of a vertex field over each k-cell.
    pub fn cell_average(&self, k: usize, vertex_values: &[f64]) -> Vec<f64> {
        self.cells[k]
            .iter()
            .map(|c| c.iter().map(|&v| vertex_values[v]).sum::<f64>() / c.len() as f64)
            .collect()
    }

    /// Diagonal Hodge star on k-cochains for the metric `g = ε·g₀`.
    ///
    /// Entries are `ε^k · dual/primal`. With `ε = 0` the unit-metric star is returned and
    /// flagged as a deterministic-limit object.
    pub fn hodge_star(&self, k: usize, noise: NoiseSpec) -> Result<HodgeStar> {
        if k > self.dimension {
            return Err(Error::Degree(format!(
                "no {k}-forms on a {}-dimensional complex",
                self.dimension
            )));
        }
        let deterministic_limit = noise.epsilon == 0.0;
        let scale = if deterministic_limit {
            1.0
        } else {
            noise.epsilon.powi(k as i32)
        };
        let diag = self.dual_volumes[k]
            .iter()
            .zip(&self.primal_volumes[k])
            .map(|(d, p)| scale * d / p)
            .collect();
        Ok(HodgeStar {
            degree: k,
            diag,
            deterministic_limit,
        })
    }
}

/// Noise intensity multiplying the fixed base metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
}

impl NoiseSpec {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidNoise(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn is_deterministic(&self) -> bool {
        self.epsilon == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HodgeStar {
    pub degree: usize,
    pub diag: Vec<f64>,
    pub deterministic_limit: bool,
}

/// Uniform periodic grid on a circle of circumference `length` with `n` vertices.
pub fn build_circle_grid(n: usize, length: f64) -> Result<MeshComplex> {
    if n < 3 {
        return Err(Error::InvalidResolution(format!(
            "circle grid needs n >= 3, got {n}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidResolution(format!(
            "circle length must be positive, got {length}"
        )));
    }
    let h = length / n as f64;
    let points = (0..n).map(|i| [i as f64 * h, 0.0, 0.0]).collect();
    let vertices = (0..n).map(|i| vec![i]).collect();
    let edges: Vec<Vec<usize>> = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
    let mut entries = Vec::with_capacity(2 * n);
    for (e, edge) in edges.iter().enumerate() {
        entries.push((edge[0], e, -1));
        entries.push((edge[1], e, 1));
    }
    Ok(MeshComplex {
        kind: MeshKind::Circle { n, length },
        dimension: 1,
        points,
        cells: vec![vertices, edges],
        boundary: vec![Incidence::new(n, n, entries)],
        primal_volumes: vec![vec![1.0; n], vec![h; n]],
        dual_volumes: vec![vec![h; n], vec![1.0; n]],
        warnings: Vec::new(),
    })
}

/// Index helpers for the torus grid layout.
///
/// Vertex `(i, j)` and face `(i, j)` (lower-left corner `(i, j)`) both map to `j*nx + i`.
/// The x-edge leaving `(i, j)` is `j*nx + i`; the y-edge leaving `(i, j)` is `nx*ny + j*nx + i`.
#[derive(Debug, Clone, Copy)]
pub struct TorusIndex {
    pub nx: usize,
    pub ny: usize,
}

impl TorusIndex {
    pub fn vertex(&self, i: isize, j: isize) -> usize {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        j * self.nx + i
    }
    pub fn face(&self, i: isize, j: isize) -> usize {
        self.vertex(i, j)
    }
    pub fn x_edge(&self, i: isize, j: isize) -> usize {
        self.vertex(i, j)
    }
    pub fn y_edge(&self, i: isize, j: isize) -> usize {
        self.nx * self.ny + self.vertex(i, j)
    }
    pub fn coords(&self, v: usize) -> (isize, isize) {
        ((v % self.nx) as isize, (v / self.nx) as isize)
    }
}

/// Uniform periodic grid on the flat torus `[0,lx) x [0,ly)`.
pub fn build_torus_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<MeshComplex> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidResolution(format!(
            "torus grid needs nx, ny >= 3, got {nx}x{ny}"
        )));
    }
    if !(lx.is_finite() && lx > 0.0 && ly.is_finite() && ly > 0.0) {
        return Err(Error::InvalidResolution(format!(
            "torus lengths must be positive, got {lx}x{ly}"
        )));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);
    let t = TorusIndex { nx, ny };
    let nv = nx * ny;
    let mut points = Vec::with_capacity(nv);
    let mut vertices = Vec::with_capacity(nv);
    for v in 0..nv {
        let (i, j) = t.coords(v);
        points.push([i as f64 * hx, j as f64 * hy, 0.0]);
        vertices.push(vec![v]);
    }
    let mut edges = vec![Vec::new(); 2 * nv];
    let mut e_entries = Vec::with_capacity(4 * nv);
    let mut faces = Vec::with_capacity(nv);
    let mut f_entries = Vec::with_capacity(4 * nv);
    for v in 0..nv {
        let (i, j) = t.coords(v);
        let ex = t.x_edge(i, j);
        let ey = t.y_edge(i, j);
        edges[ex] = vec![v, t.vertex(i + 1, j)];
        edges[ey] = vec![v, t.vertex(i, j + 1)];
        e_entries.extend([(v, ex, -1), (t.vertex(i + 1, j), ex, 1)]);
        e_entries.extend([(v, ey, -1), (t.vertex(i, j + 1), ey, 1)]);
        let f = t.face(i, j);
        faces.push(vec![
            v,
            t.vertex(i + 1, j),
            t.vertex(i + 1, j + 1),
            t.vertex(i, j + 1),
        ]);
        f_entries.extend([
            (t.x_edge(i, j), f, 1),
            (t.y_edge(i + 1, j), f, 1),
            (t.x_edge(i, j + 1), f, -1),
            (t.y_edge(i, j), f, -1),
        ]);
    }
    let mut edge_primal = vec![hx; nv];
    edge_primal.extend(std::iter::repeat(hy).take(nv));
    let mut edge_dual = vec![hy; nv];
    edge_dual.extend(std::iter::repeat(hx).take(nv));
    Ok(MeshComplex {
        kind: MeshKind::Torus { nx, ny, lx, ly },
        dimension: 2,
        points,
        cells: vec![vertices, edges, faces],
        boundary: vec![
            Incidence::new(nv, 2 * nv, e_entries),
            Incidence::new(2 * nv, nv, f_entries),
        ],
        primal_volumes: vec![vec![1.0; nv], edge_primal, vec![hx * hy; nv]],
        dual_volumes: vec![vec![hx * hy; nv], edge_dual, vec![1.0; nv]],
        warnings: Vec::new(),
    })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn len3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Closed orientable triangulated surface with circumcentric dual volumes.
pub fn build_triangulated_surface(
    vertices: &[[f64; 3]],
    faces: &[[usize; 3]],
) -> Result<MeshComplex> {
    let nv = vertices.len();
    if faces.is_empty() {
        return Err(Error::Topology("surface has no faces".into()));
    }
    for (f, tri) in faces.iter().enumerate() {
        if tri.iter().any(|&v| v >= nv) {
            return Err(Error::Topology(format!(
                "face {f} references a missing vertex"
            )));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::Topology(format!("face {f} is degenerate")));
        }
    }
    let mut warnings = Vec::new();

    // edge -> incident (face, local position) pairs
    let mut edge_faces: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (f, tri) in faces.iter().enumerate() {
        for l in 0..3 {
            let (a, b) = (tri[l], tri[(l + 1) % 3]);
            edge_faces.entry((a.min(b), a.max(b))).or_default().push(f);
        }
    }
    for (&(a, b), fs) in &edge_faces {
        if fs.len() != 2 {
            return Err(Error::Topology(format!(
                "edge ({a},{b}) borders {} faces; the surface must be closed and manifold",
                fs.len()
            )));
        }
    }
    let mut used = vec![false; nv];
    for tri in faces {
        for &v in tri {
            used[v] = true;
        }
    }
    if let Some(v) = used.iter().position(|u| !u) {
        return Err(Error::Topology(format!("vertex {v} belongs to no face")));
    }

    // Make face orientations consistent: adjacent faces must traverse their shared edge
    // in opposite directions.
    let traverses = |tri: &[usize; 3], a: usize, b: usize| -> bool {
        (0..3).any(|l| tri[l] == a && tri[(l + 1) % 3] == b)
    };
    let mut oriented: Vec<[usize; 3]> = faces.to_vec();
    let mut flipped: Vec<Option<bool>> = vec![None; faces.len()];
    let mut adjacency: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); faces.len()];
    for (&(a, b), fs) in &edge_faces {
        adjacency[fs[0]].push((fs[1], a, b));
        adjacency[fs[1]].push((fs[0], a, b));
    }
    let mut any_flip = false;
    for start in 0..faces.len() {
        if flipped[start].is_some() {
            continue;
        }
        flipped[start] = Some(false);
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            for &(g, a, b) in &adjacency[f] {
                let f_ab = traverses(&oriented[f], a, b);
                let g_ab_orig = traverses(&faces[g], a, b);
                match flipped[g] {
                    None => {
                        // g must traverse (a,b) opposite to f
                        let flip = g_ab_orig == f_ab;
                        flipped[g] = Some(flip);
                        if flip {
                            let t = faces[g];
                            oriented[g] = [t[0], t[2], t[1]];
                            any_flip = true;
                        }
                        queue.push_back(g);
                    }
                    Some(_) => {
                        if traverses(&oriented[g], a, b) == f_ab {
                            return Err(Error::Topology("surface is not orientable".into()));
                        }
                    }
                }
            }
        }
    }
    if any_flip {
        warnings.push("some input faces were re-oriented for consistency".to_string());
    }

    let edge_list: Vec<(usize, usize)> = edge_faces.keys().copied().collect();
    let edge_index: BTreeMap<(usize, usize), usize> =
        edge_list.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let ne = edge_list.len();
    let nf = oriented.len();

    let mut e_entries = Vec::with_capacity(2 * ne);
    for (e, &(a, b)) in edge_list.iter().enumerate() {
        e_entries.push((a, e, -1));
        e_entries.push((b, e, 1));
    }
    let mut f_entries = Vec::with_capacity(3 * nf);
    let mut vertex_dual = vec![0.0; nv];
    let mut edge_dual = vec![0.0; ne];
    let mut face_area = vec![0.0; nf];
    let mut obtuse = 0usize;
    for (f, tri) in oriented.iter().enumerate() {
        let p = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let area = 0.5 * len3(cross(sub(p[1], p[0]), sub(p[2], p[0])));
        if !(area > 0.0) {
            return Err(Error::Topology(format!("face {f} has zero area")));
        }
        face_area[f] = area;
        let mut well_centered = true;
        for l in 0..3 {
            let (a, b) = (tri[l], tri[(l + 1) % 3]);
            let e = edge_index[&(a.min(b), a.max(b))];
            f_entries.push((e, f, if a < b { 1 } else { -1 }));
            // angle opposite edge (a,b) sits at the third vertex
            let o = p[(l + 2) % 3];
            let (u, w) = (sub(p[l], o), sub(p[(l + 1) % 3], o));
            let cot = dot3(u, w) / len3(cross(u, w));
            if cot <= 0.0 {
                well_centered = false;
            }
            let elen = len3(sub(p[(l + 1) % 3], p[l]));
            edge_dual[e] += 0.5 * cot * elen;
            let share = cot * elen * elen / 8.0;
            vertex_dual[a] += share;
            vertex_dual[b] += share;
        }
        if !well_centered {
            obtuse += 1;
        }
    }
    if obtuse > 0 {
        warnings.push(format!(
            "{obtuse} triangle(s) are not well-centered; circumcentric dual volumes may be non-positive"
        ));
    }
    let edge_len: Vec<f64> = edge_list
        .iter()
        .map(|&(a, b)| len3(sub(vertices[b], vertices[a])))
        .collect();

    Ok(MeshComplex {
        kind: MeshKind::Surface,
        dimension: 2,
        points: vertices.to_vec(),
        cells: vec![
            (0..nv).map(|v| vec![v]).collect(),
            edge_list.iter().map(|&(a, b)| vec![a, b]).collect(),
            oriented.iter().map(|t| t.to_vec()).collect(),
        ],
        boundary: vec![
            Incidence::new(nv, ne, e_entries),
            Incidence::new(ne, nf, f_entries),
        ],
        primal_volumes: vec![vec![1.0; nv], edge_len, face_area],
        dual_volumes: vec![vertex_dual, edge_dual, vec![1.0; nf]],
        warnings,
    })
}

/// Parses an OFF surface description (triangles only).
pub fn parse_off(text: &str) -> Result<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let tokens: Vec<&str> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .collect();
    let mut pos = 0usize;
    let mut next = |what: &str| -> Result<&str> {
        let t = tokens
            .get(pos)
            .copied()
            .ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))?;
        pos += 1;
        Ok(t)
    };
    let header = next("header")?;
    if header != "OFF" {
        return Err(Error::Parse(format!(
            "expected OFF header, found {header:?}"
        )));
    }
    let count = |t: &str, what: &str| -> Result<usize> {
        t.parse::<usize>()
            .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
    };
    let nv = count(next("vertex count")?, "vertex count")?;
    let nf = count(next("face count")?, "face count")?;
    let _ne = count(next("edge count")?, "edge count")?;
    let mut vertices = Vec::with_capacity(nv);
    for v in 0..nv {
        let mut p = [0.0; 3];
        for c in p.iter_mut() {
            *c = next("vertex")?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("vertex {v}: {e}")))?;
        }
        vertices.push(p);
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let k = count(next("face")?, "face size")?;
        if k != 3 {
            return Err(Error::Parse(format!(
                "face {f} has {k} vertices; only triangles are supported"
            )));
        }
        let mut tri = [0usize; 3];
        for t in tri.iter_mut() {
            *t = count(next("face")?, "face index")?;
        }
        faces.push(tri);
    }
    Ok((vertices, faces))
}

pub fn load_off_surface(text: &str) -> Result<MeshComplex> {
    let (v, f) = parse_off(text)?;
    build_triangulated_surface(&v, &f)
}

/// Regular icosahedron inscribed in the unit sphere (faces counterclockwise seen from outside).
pub fn icosahedron() -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw
        .iter()
        .map(|p: &[f64; 3]| {
            let l = len3(*p);
            [p[0] / l, p[1] / l, p[2] / l]
        })
        .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, faces)
}

/// Icosahedron subdivided `levels` times (each triangle split in four), projected to the unit sphere.
pub fn icosphere(levels: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let (mut vertices, mut faces) = icosahedron();
    for _ in 0..levels {
        let mut midpoint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut mid = |a: usize, b: usize, vs: &mut Vec<[f64; 3]>| -> usize {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vs[a], vs[b]);
                let m = [
                    (p[0] + q[0]) / 2.0,
                    (p[1] + q[1]) / 2.0,
                    (p[2] + q[2]) / 2.0,
                ];
                let l = len3(m);
                vs.push([m[0] / l, m[1] / l, m[2] / l]);
                vs.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Surface area of the unit sphere, for volume checks.
pub const UNIT_SPHERE_AREA: f64 = 4.0 * PI;
