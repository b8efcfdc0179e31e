//! Meshes: loading (gmsh 2.2 ASCII subset, JSON), structured grids, node
//! selection, periodic pairing and point location.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::element::{self, ElementKind};
use crate::error::{Error, Result};

/// Elements of one kind sharing the mesh node numbering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub kind: ElementKind,
    /// `n_el × n_nodes_per_element` row-major.
    pub connectivity: Vec<usize>,
}

impl Block {
    pub fn n_elements(&self) -> usize {
        self.connectivity.len() / self.kind.n_nodes()
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let n = self.kind.n_nodes();
        &self.connectivity[e * n..(e + 1) * n]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub dim: usize,
    /// `n_nodes × dim` row-major.
    pub coords: Vec<f64>,
    pub blocks: Vec<Block>,
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// First block of the given kind.
    pub fn block(&self, kind: ElementKind) -> Option<&Block> {
        self.blocks.iter().find(|b| b.kind == kind)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.dim];
        let mut hi = vec![f64::NEG_INFINITY; self.dim];
        for p in self.coords.chunks(self.dim) {
            for i in 0..self.dim {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        element::bbox_diagonal(&self.coords, self.dim)
    }

    /// Nodal coordinates of element `e` of `block`, `n_nodes × dim`.
    pub fn element_coords(&self, block: &Block, e: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(block.kind.n_nodes() * self.dim);
        for &n in block.element(e) {
            out.extend_from_slice(self.node(n));
        }
        out
    }

    /// Checks dimensions, indices and element orientation.
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::DimensionMismatch(format!(
                "mesh dimension {} not in {{2, 3}}",
                self.dim
            )));
        }
        if self.coords.len() % self.dim != 0 {
            return Err(Error::ShapeMismatch {
                expected: self.coords.len() / self.dim * self.dim,
                got: self.coords.len(),
            });
        }
        if self.coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteValue("mesh coordinates".into()));
        }
        let n = self.n_nodes();
        let diag = self.bbox_diagonal();
        for b in &self.blocks {
            check_kind_dim(b.kind, self.dim)?;
            let n_en = b.kind.n_nodes();
            if b.connectivity.len() % n_en != 0 {
                return Err(Error::ShapeMismatch {
                    expected: b.connectivity.len() / n_en * n_en,
                    got: b.connectivity.len(),
                });
            }
            if let Some(&bad) = b.connectivity.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange(format!("node index {bad} >= {n}")));
            }
            let rule = element::quadrature(b.kind);
            let tol = element::det_threshold(b.kind, diag);
            for e in 0..b.n_elements() {
                let x = self.element_coords(b, e);
                for q in 0..rule.n_points() {
                    let jac = element::jacobian(b.kind, rule.point(q), &x, self.dim)?;
                    if jac.det_j <= tol {
                        return Err(Error::DegenerateElement {
                            elem: e,
                            det_j: jac.det_j,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Keeps the elements of block `block` for which `keep` is true, drops
    /// nodes no longer referenced by any block, and renumbers. Returns the
    /// new mesh and the old-to-new node map.
    pub fn retain_elements(
        &self,
        block: usize,
        keep: impl Fn(usize) -> bool,
    ) -> (Mesh, Vec<Option<usize>>) {
        let mut blocks = self.blocks.clone();
        let b = &self.blocks[block];
        let n_en = b.kind.n_nodes();
        let mut conn = Vec::new();
        for e in 0..b.n_elements() {
            if keep(e) {
                conn.extend_from_slice(&b.connectivity[e * n_en..(e + 1) * n_en]);
            }
        }
        blocks[block].connectivity = conn;
        let mut used = vec![false; self.n_nodes()];
        for b in &blocks {
            for &i in &b.connectivity {
                used[i] = true;
            }
        }
        let mut map = vec![None; self.n_nodes()];
        let mut coords = Vec::new();
        let mut next = 0;
        for (i, u) in used.iter().enumerate() {
            if *u {
                map[i] = Some(next);
                next += 1;
                coords.extend_from_slice(self.node(i));
            }
        }
        for b in &mut blocks {
            for i in &mut b.connectivity {
                *i = map[*i].unwrap();
            }
        }
        (
            Mesh {
                dim: self.dim,
                coords,
                blocks,
            },
            map,
        )
    }

    /// Appends the nodes and blocks of `other`; returns the node offset.
    pub fn append(&mut self, other: &Mesh) -> Result<usize> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch(
                "appending meshes of different dimension".into(),
            ));
        }
        let off = self.n_nodes();
        self.coords.extend_from_slice(&other.coords);
        for ob in &other.blocks {
            let shifted: Vec<usize> = ob.connectivity.iter().map(|i| i + off).collect();
            match self.blocks.iter_mut().find(|b| b.kind == ob.kind) {
                Some(b) => b.connectivity.extend(shifted),
                None => self.blocks.push(Block {
                    kind: ob.kind,
                    connectivity: shifted,
                }),
            }
        }
        Ok(off)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Mesh> {
        let m: Mesh = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    /// Writes the mesh as gmsh 2.2 ASCII.
    pub fn to_gmsh22(&self) -> String {
        use std::fmt::Write;
        let mut s = String::from("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n");
        let _ = writeln!(s, "{}", self.n_nodes());
        for i in 0..self.n_nodes() {
            let p = self.node(i);
            let z = if self.dim == 3 { p[2] } else { 0.0 };
            let _ = writeln!(s, "{} {:.17e} {:.17e} {:.17e}", i + 1, p[0], p[1], z);
        }
        s.push_str("$EndNodes\n$Elements\n");
        let total: usize = self.blocks.iter().map(|b| b.n_elements()).sum();
        let _ = writeln!(s, "{total}");
        let mut id = 1;
        for b in &self.blocks {
            let code = gmsh_code(b.kind);
            for e in 0..b.n_elements() {
                let _ = write!(s, "{id} {code} 2 0 0");
                for &n in b.element(e) {
                    let _ = write!(s, " {}", n + 1);
                }
                s.push('\n');
                id += 1;
            }
        }
        s.push_str("$EndElements\n");
        s
    }
}

fn check_kind_dim(kind: ElementKind, dim: usize) -> Result<()> {
    let ok = match kind {
        ElementKind::Line2 => true,
        ElementKind::Tri3 | ElementKind::Quad4 => dim == 2,
        ElementKind::Tet4 | ElementKind::Tri3Manifold => dim == 3,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{} elements in a {dim}D mesh",
            kind.name()
        )))
    }
}

fn gmsh_code(kind: ElementKind) -> usize {
    match kind {
        ElementKind::Line2 => 1,
        ElementKind::Tri3 | ElementKind::Tri3Manifold => 2,
        ElementKind::Quad4 => 3,
        ElementKind::Tet4 => 4,
    }
}

/// Loads a mesh from `.msh` (gmsh 2.2 ASCII) or `.json`.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Mesh::from_json(&text),
        _ => parse_gmsh22(&text),
    }
}

/// Parses the gmsh 2.2 ASCII subset: nodes plus elements of types
/// 1 (Line2), 2 (Tri3), 3 (Quad4) and 4 (Tet4). Node ids become 0-based.
pub fn parse_gmsh22(text: &str) -> Result<Mesh> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let perr = |line: usize, msg: &str| Error::Parse {
        line,
        msg: msg.to_string(),
    };
    let mut pos = 0;
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let mut xyz: Vec<[f64; 3]> = Vec::new();
    let mut elems: Vec<(ElementKind, Vec<usize>)> = Vec::new();
    let mut saw_format = false;
    while pos < lines.len() {
        let (ln, l) = lines[pos];
        match l {
            "$MeshFormat" => {
                let (vl, v) = *lines
                    .get(pos + 1)
                    .ok_or_else(|| perr(ln, "truncated $MeshFormat"))?;
                let mut it = v.split_whitespace();
                let version = it.next().unwrap_or("");
                if !version.starts_with("2.") {
                    return Err(perr(vl, &format!("unsupported gmsh version {version}")));
                }
                if it.next() != Some("0") {
                    return Err(perr(vl, "only ASCII gmsh files are supported"));
                }
                saw_format = true;
                pos = skip_to(&lines, pos, "$EndMeshFormat")? + 1;
            }
            "$Nodes" => {
                let (cl, c) = *lines
                    .get(pos + 1)
                    .ok_or_else(|| perr(ln, "truncated $Nodes"))?;
                let count: usize = c.parse().map_err(|_| perr(cl, "bad node count"))?;
                for k in 0..count {
                    let (nl, nline) = *lines
                        .get(pos + 2 + k)
                        .ok_or_else(|| perr(cl, "missing node lines"))?;
                    let f: Vec<&str> = nline.split_whitespace().collect();
                    if f.len() < 4 {
                        return Err(perr(nl, "node line needs id x y z"));
                    }
                    let id: usize = f[0].parse().map_err(|_| perr(nl, "bad node id"))?;
                    let mut p = [0.0; 3];
                    for d in 0..3 {
                        p[d] = f[1 + d].parse().map_err(|_| perr(nl, "bad coordinate"))?;
                    }
                    if ids.insert(id, xyz.len()).is_some() {
                        return Err(perr(nl, &format!("duplicate node id {id}")));
                    }
                    xyz.push(p);
                }
                let end = pos + 2 + count;
                if lines.get(end).map(|x| x.1) != Some("$EndNodes") {
                    return Err(perr(
                        lines.get(end).map_or(ln, |x| x.0),
                        "expected $EndNodes",
                    ));
                }
                pos = end + 1;
            }
            "$Elements" => {
                let (cl, c) = *lines
                    .get(pos + 1)
                    .ok_or_else(|| perr(ln, "truncated $Elements"))?;
                let count: usize = c.parse().map_err(|_| perr(cl, "bad element count"))?;
                for k in 0..count {
                    let (el, eline) = *lines
                        .get(pos + 2 + k)
                        .ok_or_else(|| perr(cl, "missing element lines"))?;
                    let f: Vec<usize> = eline
                        .split_whitespace()
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| perr(el, "bad integer in element line"))?;
                    if f.len() < 3 {
                        return Err(perr(el, "element line too short"));
                    }
                    let kind = match f[1] {
                        1 => ElementKind::Line2,
                        2 => ElementKind::Tri3,
                        3 => ElementKind::Quad4,
                        4 => ElementKind::Tet4,
                        other => {
                            return Err(Error::UnsupportedElement(format!(
                                "gmsh element type {other} (line {el})"
                            )))
                        }
                    };
                    let ntags = f[2];
                    let start = 3 + ntags;
                    let n_en = kind.n_nodes();
                    if f.len() != start + n_en {
                        return Err(perr(el, "wrong number of element nodes"));
                    }
                    let mut nodes = Vec::with_capacity(n_en);
                    for &id in &f[start..] {
                        let idx = *ids
                            .get(&id)
                            .ok_or_else(|| perr(el, &format!("unknown node id {id}")))?;
                        nodes.push(idx);
                    }
                    elems.push((kind, nodes));
                }
                let end = pos + 2 + count;
                if lines.get(end).map(|x| x.1) != Some("$EndElements") {
                    return Err(perr(
                        lines.get(end).map_or(ln, |x| x.0),
                        "expected $EndElements",
                    ));
                }
                pos = end + 1;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Unknown section (physical names, data): skip.
                let name = &other[1..];
                pos = skip_to(&lines, pos, &format!("$End{name}"))? + 1;
            }
            _ => return Err(perr(ln, &format!("unexpected line '{l}'"))),
        }
    }
    if !saw_format {
        return Err(perr(1, "missing $MeshFormat"));
    }
    let is_3d =
        elems.iter().any(|(k, _)| *k == ElementKind::Tet4) || xyz.iter().any(|p| p[2] != 0.0);
    let dim = if is_3d { 3 } else { 2 };
    let mut coords = Vec::with_capacity(xyz.len() * dim);
    for p in &xyz {
        coords.extend_from_slice(&p[..dim]);
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (kind, nodes) in elems {
        let kind = if kind == ElementKind::Tri3 && dim == 3 {
            ElementKind::Tri3Manifold
        } else {
            kind
        };
        match blocks.iter_mut().find(|b| b.kind == kind) {
            Some(b) => b.connectivity.extend(nodes),
            None => blocks.push(Block {
                kind,
                connectivity: nodes,
            }),
        }
    }
    let mesh = Mesh {
        dim,
        coords,
        blocks,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn skip_to(lines: &[(usize, &str)], from: usize, tag: &str) -> Result<usize> {
    lines[from..]
        .iter()
        .position(|(_, l)| *l == tag)
        .map(|p| p + from)
        .ok_or_else(|| Error::Parse {
            line: lines[from].0,
            msg: format!("missing {tag}"),
        })
}

/// Structured grid of `counts` cells over the box `extent`.
///
/// 2D: `Tri3` (each cell split along the lower-left to upper-right
/// diagonal) or `Quad4`. 3D: `Tet4`, six tetrahedra per cell sharing the
/// main diagonal. Nodes are numbered row-major with x fastest.
pub fn structured_grid(counts: &[usize], extent: &[[f64; 2]], kind: ElementKind) -> Result<Mesh> {
    let dim = counts.len();
    if extent.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: dim,
            got: extent.len(),
        });
    }
    let needed = match kind {
        ElementKind::Tri3 | ElementKind::Quad4 => 2,
        ElementKind::Tet4 => 3,
        _ => {
            return Err(Error::UnsupportedElement(format!(
                "structured grid of {}",
                kind.name()
            )))
        }
    };
    if dim != needed {
        return Err(Error::DimensionMismatch(format!(
            "{} grid needs {needed} counts",
            kind.name()
        )));
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::InvalidArgument(
            "grid counts must be positive".into(),
        ));
    }
    let np: Vec<usize> = counts.iter().map(|c| c + 1).collect();
    let n_nodes: usize = np.iter().product();
    let mut coords = Vec::with_capacity(n_nodes * dim);
    let coord = |a: usize, i: usize| {
        extent[a][0] + (extent[a][1] - extent[a][0]) * i as f64 / counts[a] as f64
    };
    let mut conn = Vec::new();
    if dim == 2 {
        for j in 0..np[1] {
            for i in 0..np[0] {
                coords.push(coord(0, i));
                coords.push(coord(1, j));
            }
        }
        let id = |i: usize, j: usize| i + np[0] * j;
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if kind == ElementKind::Quad4 {
                    conn.extend_from_slice(&[a, b, c, d]);
                } else {
                    conn.extend_from_slice(&[a, b, c, a, c, d]);
                }
            }
        }
    } else {
        for k in 0..np[2] {
            for j in 0..np[1] {
                for i in 0..np[0] {
                    coords.push(coord(0, i));
                    coords.push(coord(1, j));
                    coords.push(coord(2, k));
                }
            }
        }
        let id = |i: usize, j: usize, k: usize| i + np[0] * (j + np[1] * k);
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for k in 0..counts[2] {
            for j in 0..counts[1] {
                for i in 0..counts[0] {
                    for p in PERMS {
                        let mut off = [0usize; 3];
                        let mut tet = [id(i, j, k); 4];
                        for s in 0..3 {
                            off[p[s]] = 1;
                            tet[s + 1] = id(i + off[0], j + off[1], k + off[2]);
                        }
                        // Odd permutations come out negatively oriented.
                        let odd = matches!(p, [0, 2, 1] | [1, 0, 2] | [2, 1, 0]);
                        if odd {
                            tet.swap(2, 3);
                        }
                        conn.extend_from_slice(&tet);
                    }
                }
            }
        }
    }
    let mesh = Mesh {
        dim,
        coords,
        blocks: vec![Block {
            kind,
            connectivity: conn,
        }],
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Icosahedral sphere of the given radius, refined `level` times by edge
/// midpoint subdivision with projection; triangles are oriented with
/// outward normals (`Tri3Manifold`).
pub fn icosphere(level: usize, radius: f64) -> Result<Mesh> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("radius must be positive".into()));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut pts: Vec<[f64; 3]> = vec![
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
    let mut tris: Vec<[usize; 3]> = vec![
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
    let unit = |p: [f64; 3]| {
        let l = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / l, p[1] / l, p[2] / l]
    };
    pts.iter_mut().for_each(|p| *p = unit(*p));
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for tri in &tris {
            let mut m = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    let (p, q) = (pts[a], pts[b]);
                    pts.push(unit([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                    pts.len() - 1
                });
            }
            next.push([tri[0], m[0], m[2]]);
            next.push([tri[1], m[1], m[0]]);
            next.push([tri[2], m[2], m[1]]);
            next.push(m);
        }
        tris = next;
    }
    Ok(Mesh {
        dim: 3,
        coords: pts.iter().flat_map(|p| p.map(|x| x * radius)).collect(),
        blocks: vec![Block {
            kind: ElementKind::Tri3Manifold,
            connectivity: tris.concat(),
        }],
    })
}

/// Chain of `n` Line2 elements from `a` to `b` (2D or 3D points).
pub fn line_mesh(n: usize, a: &[f64], b: &[f64]) -> Result<Mesh> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "line mesh needs at least one element".into(),
        ));
    }
    let dim = a.len();
    let mut coords = Vec::with_capacity((n + 1) * dim);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        for d in 0..dim {
            coords.push(a[d] + t * (b[d] - a[d]));
        }
    }
    let conn = (0..n).flat_map(|i| [i, i + 1]).collect();
    let mesh = Mesh {
        dim,
        coords,
        blocks: vec![Block {
            kind: ElementKind::Line2,
            connectivity: conn,
        }],
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Node selection rule.
#[derive(Clone, Debug)]
pub enum Selector {
    /// Nodes with `x[axis] == value` within the tolerance.
    Plane { axis: usize, value: f64 },
    /// Nodes on the lower (`max = false`) or upper face of the bounding box.
    BoxFace { axis: usize, max: bool },
    /// Nodes inside the closed box.
    Region { min: Vec<f64>, max: Vec<f64> },
    /// Nodes within `radius` of `center`.
    Ball { center: Vec<f64>, radius: f64 },
}

/// Nodes matching `selector`, ascending. Plane tests use a tolerance of
/// `1e-8 × bbox diagonal`.
pub fn boundary_nodes(mesh: &Mesh, selector: &Selector) -> Vec<usize> {
    let tol = 1e-8 * mesh.bbox_diagonal();
    let (lo, hi) = mesh.bbox();
    (0..mesh.n_nodes())
        .filter(|&i| {
            let x = mesh.node(i);
            match selector {
                Selector::Plane { axis, value } => (x[*axis] - value).abs() <= tol,
                Selector::BoxFace { axis, max } => {
                    let v = if *max { hi[*axis] } else { lo[*axis] };
                    (x[*axis] - v).abs() <= tol
                }
                Selector::Region { min, max } => {
                    (0..mesh.dim).all(|d| x[d] >= min[d] - tol && x[d] <= max[d] + tol)
                }
                Selector::Ball { center, radius } => {
                    let r2: f64 = (0..mesh.dim).map(|d| (x[d] - center[d]).powi(2)).sum();
                    r2.sqrt() <= radius + tol
                }
            }
        })
        .collect()
}

/// Boundary facet of a full-dimensional block.
#[derive(Clone, Debug)]
pub struct Facet {
    pub nodes: Vec<usize>,
    pub element: usize,
    /// Unit outward normal.
    pub normal: Vec<f64>,
}

/// Facets belonging to exactly one element of the first full-dimensional
/// block (edges in 2D, triangles in 3D).
pub fn boundary_facets(mesh: &Mesh) -> Result<Vec<Facet>> {
    let block = mesh
        .blocks
        .iter()
        .find(|b| b.kind.ref_dim() == mesh.dim)
        .ok_or_else(|| Error::InvalidArgument("mesh has no full-dimensional block".into()))?;
    let local: &[&[usize]] = match block.kind {
        ElementKind::Tri3 => &[&[0, 1], &[1, 2], &[2, 0]],
        ElementKind::Quad4 => &[&[0, 1], &[1, 2], &[2, 3], &[3, 0]],
        ElementKind::Tet4 => &[&[0, 2, 1], &[0, 1, 3], &[1, 2, 3], &[0, 3, 2]],
        k => {
            return Err(Error::UnsupportedElement(format!(
                "boundary facets of {}",
                k.name()
            )))
        }
    };
    let mut count: HashMap<Vec<usize>, (usize, Vec<usize>, usize)> = HashMap::new();
    for e in 0..block.n_elements() {
        let el = block.element(e);
        for f in local {
            let nodes: Vec<usize> = f.iter().map(|&a| el[a]).collect();
            let mut key = nodes.clone();
            key.sort_unstable();
            count
                .entry(key)
                .and_modify(|c| c.0 += 1)
                .or_insert((1, nodes, e));
        }
    }
    let d = mesh.dim;
    let mut out: Vec<Facet> = Vec::new();
    for (_, (c, nodes, e)) in count {
        if c != 1 {
            continue;
        }
        let el = block.element(e);
        let mut centroid = vec![0.0; d];
        for &n in el {
            for k in 0..d {
                centroid[k] += mesh.node(n)[k] / el.len() as f64;
            }
        }
        let p0 = mesh.node(nodes[0]);
        let mut normal = if d == 2 {
            let p1 = mesh.node(nodes[1]);
            vec![p1[1] - p0[1], -(p1[0] - p0[0])]
        } else {
            let (p1, p2) = (mesh.node(nodes[1]), mesh.node(nodes[2]));
            let a = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
            let b = [p2[0] - p0[0], p2[1] - p0[1], p2[2] - p0[2]];
            vec![
                a[1] * b[2] - a[2] * b[1],
                a[2] * b[0] - a[0] * b[2],
                a[0] * b[1] - a[1] * b[0],
            ]
        };
        let out_dot: f64 = (0..d).map(|k| normal[k] * (p0[k] - centroid[k])).sum();
        if out_dot < 0.0 {
            normal.iter_mut().for_each(|x| *x = -*x);
        }
        let len = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        normal.iter_mut().for_each(|x| *x /= len);
        out.push(Facet {
            nodes,
            element: e,
            normal,
        });
    }
    out.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    Ok(out)
}

/// Periodic node pairs `(master, slave)` with `x_slave = x_master + translation`.
///
/// Master candidates are nodes on boundary facets facing against the
/// translation, slave candidates those on facets facing along it. Every
/// candidate on either side must find a partner within `tol` (default
/// `1e-8 × bbox diagonal`), otherwise [`Error::UnmatchedNode`] is returned.
/// Pairs are sorted by master index.
pub fn paired_nodes(
    mesh: &Mesh,
    translation: &[f64],
    tol: Option<f64>,
) -> Result<Vec<(usize, usize)>> {
    let d = mesh.dim;
    if translation.len() != d {
        return Err(Error::ShapeMismatch {
            expected: d,
            got: translation.len(),
        });
    }
    let tol = tol.unwrap_or(1e-8 * mesh.bbox_diagonal());
    let tnorm = translation.iter().map(|x| x * x).sum::<f64>().sqrt();
    if tnorm <= tol {
        return Err(Error::InvalidArgument("translation must be nonzero".into()));
    }
    let facets = boundary_facets(mesh)?;
    let mut is_master = vec![false; mesh.n_nodes()];
    let mut is_slave = vec![false; mesh.n_nodes()];
    for f in &facets {
        let c: f64 = (0..d).map(|k| f.normal[k] * translation[k]).sum::<f64>() / tnorm;
        if c < -1e-8 {
            f.nodes.iter().for_each(|&n| is_master[n] = true);
        } else if c > 1e-8 {
            f.nodes.iter().for_each(|&n| is_slave[n] = true);
        }
    }
    let cell = 4.0 * tol;
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / cell).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, _) in is_slave.iter().enumerate().filter(|(_, s)| **s) {
        grid.entry(key(mesh.node(i))).or_default().push(i);
    }
    let mut pairs = Vec::new();
    let mut slave_used = vec![false; mesh.n_nodes()];
    for i in (0..mesh.n_nodes()).filter(|&i| is_master[i]) {
        let target: Vec<f64> = (0..d).map(|k| mesh.node(i)[k] + translation[k]).collect();
        let base = key(&target);
        let mut found = None;
        let n_nb = 3usize.pow(d as u32);
        'search: for code in 0..n_nb {
            let mut k = base.clone();
            let mut c = code;
            for kk in k.iter_mut() {
                *kk += (c % 3) as i64 - 1;
                c /= 3;
            }
            if let Some(cands) = grid.get(&k) {
                for &j in cands {
                    let dist2: f64 = (0..d).map(|a| (mesh.node(j)[a] - target[a]).powi(2)).sum();
                    if dist2.sqrt() <= tol {
                        found = Some(j);
                        break 'search;
                    }
                }
            }
        }
        match found {
            Some(j) => {
                slave_used[j] = true;
                pairs.push((i, j));
            }
            None => return Err(Error::UnmatchedNode { node: i }),
        }
    }
    if let Some(j) = (0..mesh.n_nodes()).find(|&j| is_slave[j] && !slave_used[j]) {
        return Err(Error::UnmatchedNode { node: j });
    }
    Ok(pairs)
}

/// Location of a point inside a simplex element.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEmbedding {
    pub element: usize,
    /// Barycentric coordinates, one per element node.
    pub bary: Vec<f64>,
}

/// Finds, for each point, the containing element of the first simplex block
/// (`Tri3` in 2D, `Tet4` in 3D) by brute force; ties go to the lowest
/// element id.
pub fn locate_points(mesh: &Mesh, points: &[f64]) -> Result<Vec<PointEmbedding>> {
    let d = mesh.dim;
    let block = mesh
        .blocks
        .iter()
        .find(|b| matches!(b.kind, ElementKind::Tri3 | ElementKind::Tet4) && b.kind.ref_dim() == d)
        .ok_or_else(|| {
            Error::UnsupportedElement("point location needs a Tri3 or Tet4 block".into())
        })?;
    if points.len() % d != 0 {
        return Err(Error::ShapeMismatch {
            expected: points.len() / d * d,
            got: points.len(),
        });
    }
    let tol = 1e-10;
    let n_el = block.n_elements();
    // Precompute inverse maps x -> barycentric.
    let mut inv = Vec::with_capacity(n_el);
    for e in 0..n_el {
        let x = mesh.element_coords(block, e);
        let mut a = vec![0.0; d * d];
        for r in 0..d {
            for c in 0..d {
                a[r * d + c] = x[(c + 1) * d + r] - x[r];
            }
        }
        let det = element::det(&a, d);
        inv.push((element::inverse(&a, d, det), x[..d].to_vec()));
    }
    let mut out = Vec::with_capacity(points.len() / d);
    for (pi, p) in points.chunks(d).enumerate() {
        let mut hit = None;
        for (e, (ainv, x0)) in inv.iter().enumerate() {
            let mut lam = vec![0.0; d + 1];
            let mut s = 0.0;
            for r in 0..d {
                let mut v = 0.0;
                for c in 0..d {
                    v += ainv[r * d + c] * (p[c] - x0[c]);
                }
                lam[r + 1] = v;
                s += v;
            }
            lam[0] = 1.0 - s;
            if lam.iter().all(|&l| l >= -tol) {
                hit = Some(PointEmbedding {
                    element: e,
                    bary: lam,
                });
                break;
            }
        }
        out.push(hit.ok_or(Error::PointOutsideMesh { index: pi })?);
    }
    Ok(out)
}
