//! Sparsity patterns, CSR matrices, and sparse Jacobians from compressed
//! (colored) forward-mode evaluations.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dense_hessian, jvp, Residual, ScalarFunctional, TermSink, VectorFunction};
use crate::coloring::Coloring;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::operator::{Integrand, Operator};

/// Structural nonzeros in compressed-row form, columns sorted per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsityPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds from per-row column lists (sorted and deduplicated here).
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            if let Some(&j) = r.last() {
                if j >= n_cols {
                    return Err(Error::IndexOutOfRange(format!("column {j} >= {n_cols}")));
                }
            }
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Ok(SparsityPattern {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col_idx,
        })
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.row(i).binary_search(&j).is_ok()
    }

    /// Position of `(i, j)` in `col_idx`.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .binary_search(&j)
            .ok()
            .map(|p| p + self.row_ptr[i])
    }

    pub fn transpose(&self) -> SparsityPattern {
        let mut count = vec![0usize; self.n_cols + 1];
        for &j in &self.col_idx {
            count[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            count[j + 1] += count[j];
        }
        let row_ptr = count.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut next = count;
        for i in 0..self.n_rows {
            for &j in self.row(i) {
                col_idx[next[j]] = i;
                next[j] += 1;
            }
        }
        SparsityPattern {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_ptr,
            col_idx,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols && *self == self.transpose()
    }

    /// Entry-wise union of two patterns of the same shape.
    pub fn union(&self, other: &SparsityPattern) -> Result<SparsityPattern> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::ShapeMismatch {
                expected: self.n_rows * self.n_cols,
                got: other.n_rows * other.n_cols,
            });
        }
        let rows = (0..self.n_rows)
            .map(|i| self.row(i).iter().chain(other.row(i)).copied().collect())
            .collect();
        SparsityPattern::from_rows(self.n_cols, rows)
    }

    /// Adds a fully dense block coupling all of `dofs` with each other.
    pub fn with_dense_block(&self, dofs: &[usize]) -> Result<SparsityPattern> {
        let mut rows: Vec<Vec<usize>> = (0..self.n_rows).map(|i| self.row(i).to_vec()).collect();
        for &i in dofs {
            if i >= self.n_rows || i >= self.n_cols {
                return Err(Error::IndexOutOfRange(format!("dof {i}")));
            }
            rows[i].extend_from_slice(dofs);
        }
        SparsityPattern::from_rows(self.n_cols, rows)
    }

    /// Fully dense `n × n` pattern.
    pub fn dense(n: usize) -> SparsityPattern {
        SparsityPattern::from_rows(n, vec![(0..n).collect(); n]).unwrap()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<SparsityPattern> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Pattern of a field with `m` components per node coupled through elements
/// with the given connectivities (`(connectivity, nodes per element)`).
pub fn sparsity_from_connectivity(
    n_nodes: usize,
    blocks: &[(&[usize], usize)],
    m: usize,
) -> Result<SparsityPattern> {
    let mut nbr: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for &(conn, n_en) in blocks {
        for el in conn.chunks(n_en) {
            for &a in el {
                if a >= n_nodes {
                    return Err(Error::IndexOutOfRange(format!("node {a} >= {n_nodes}")));
                }
                nbr[a].extend_from_slice(el);
            }
        }
    }
    let mut rows = Vec::with_capacity(n_nodes * m);
    for list in nbr.iter_mut() {
        list.sort_unstable();
        list.dedup();
        let row: Vec<usize> = list
            .iter()
            .flat_map(|&b| (0..m).map(move |c| b * m + c))
            .collect();
        for _ in 0..m {
            rows.push(row.clone());
        }
    }
    SparsityPattern::from_rows(n_nodes * m, rows)
}

/// Pattern induced by all element blocks of a mesh, `m` DoFs per node.
/// Two DoFs are coupled iff their nodes share an element.
pub fn sparsity_from_mesh(mesh: &Mesh, m: usize) -> Result<SparsityPattern> {
    let blocks: Vec<(&[usize], usize)> = mesh
        .blocks
        .iter()
        .map(|b| (b.connectivity.as_slice(), b.kind.n_nodes()))
        .collect();
    sparsity_from_connectivity(mesh.n_nodes(), &blocks, m)
}

/// Structural pattern of the constraint Jacobian `∂g/∂u`, probed at
/// `u = 0` with one JVP per column; entries that are exactly zero are
/// treated as structurally absent.
pub fn constraint_jacobian_pattern<G: VectorFunction>(g: &G) -> Result<SparsityPattern> {
    let n = g.n_inputs();
    let m = g.n_outputs();
    let u = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut rows = vec![Vec::new(); m];
    for j in 0..n {
        e[j] = 1.0;
        let col = jvp(g, &u, &e)?;
        e[j] = 0.0;
        for (i, v) in col.iter().enumerate() {
            if *v != 0.0 {
                rows[i].push(j);
            }
        }
    }
    SparsityPattern::from_rows(n, rows)
}

/// Pattern of the saddle-point matrix `[[K, Bᵀ], [B, 0]]`.
pub fn augment_with_constraints(
    k: &SparsityPattern,
    b: &SparsityPattern,
) -> Result<SparsityPattern> {
    if k.n_rows != k.n_cols || b.n_cols != k.n_cols {
        return Err(Error::ShapeMismatch {
            expected: k.n_cols,
            got: b.n_cols,
        });
    }
    let n = k.n_rows;
    let bt = b.transpose();
    let mut rows = Vec::with_capacity(n + b.n_rows);
    for i in 0..n {
        let mut r = k.row(i).to_vec();
        r.extend(bt.row(i).iter().map(|&c| n + c));
        rows.push(r);
    }
    for i in 0..b.n_rows {
        rows.push(b.row(i).to_vec());
    }
    SparsityPattern::from_rows(n + b.n_rows, rows)
}

/// Compressed-row sparse matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: &SparsityPattern) -> Self {
        CsrMatrix {
            n_rows: pattern.n_rows,
            n_cols: pattern.n_cols,
            row_ptr: pattern.row_ptr.clone(),
            col_idx: pattern.col_idx.clone(),
            values: vec![0.0; pattern.nnz()],
        }
    }

    /// Keeps entries with `|a_ij| > drop_tol`.
    pub fn from_dense(a: &[Vec<f64>], drop_tol: f64) -> Self {
        let n_rows = a.len();
        let n_cols = a.first().map_or(0, |r| r.len());
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in a {
            for (j, &v) in r.iter().enumerate() {
                if v.abs() > drop_tol {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds from unsorted triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        trip: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in trip {
            if i >= n_rows || j >= n_cols {
                return Err(Error::IndexOutOfRange(format!("({i}, {j})")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for r in rows.iter_mut() {
            r.sort_by_key(|x| x.0);
            for &(j, v) in r.iter() {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
        }
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |p| v[p])
    }

    /// Adds `v` to an existing structural entry.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        let start = self.row_ptr[i];
        let c = &self.col_idx[start..self.row_ptr[i + 1]];
        match c.binary_search(&j) {
            Ok(p) => {
                self.values[start + p] += v;
                Ok(())
            }
            Err(_) => Err(Error::IndexOutOfRange(format!(
                "entry ({i}, {j}) not in pattern"
            ))),
        }
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::ShapeMismatch {
                expected: self.n_cols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let trip: Vec<(usize, usize, f64)> = (0..self.n_rows)
            .flat_map(|i| {
                let (c, v) = self.row(i);
                c.iter()
                    .zip(v)
                    .map(move |(&j, &x)| (j, i, x))
                    .collect::<Vec<_>>()
            })
            .collect();
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &trip).unwrap()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in a.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                row[j] += x;
            }
        }
        a
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes MatrixMarket coordinate format (1-based indices).
    pub fn write_matrix_market(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, x)?;
            }
        }
        Ok(())
    }

    /// Reads the MatrixMarket coordinate format written by
    /// [`CsrMatrix::write_matrix_market`].
    pub fn read_matrix_market(text: &str) -> Result<CsrMatrix> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.starts_with('%') && !l.trim().is_empty());
        let perr = |line: usize, msg: &str| Error::Parse {
            line: line + 1,
            msg: msg.into(),
        };
        let (hl, header) = lines.next().ok_or_else(|| perr(0, "empty file"))?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| perr(hl, "bad size line"))?;
        if h.len() != 3 {
            return Err(perr(hl, "size line needs rows cols nnz"));
        }
        let mut trip = Vec::with_capacity(h[2]);
        for (ln, l) in lines {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(ln, "entry needs i j value"));
            }
            let i: usize = f[0].parse().map_err(|_| perr(ln, "bad row"))?;
            let j: usize = f[1].parse().map_err(|_| perr(ln, "bad column"))?;
            let v: f64 = f[2].parse().map_err(|_| perr(ln, "bad value"))?;
            if i == 0 || j == 0 {
                return Err(perr(ln, "indices are 1-based"));
            }
            trip.push((i - 1, j - 1, v));
        }
        CsrMatrix::from_triplets(h[0], h[1], &trip)
    }
}

/// `n_rows × n_colors` matrix of JVPs against the color seeds, column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedJacobian {
    pub n_rows: usize,
    pub n_colors: usize,
    pub data: Vec<f64>,
}

impl CompressedJacobian {
    pub fn column(&self, c: usize) -> &[f64] {
        &self.data[c * self.n_rows..(c + 1) * self.n_rows]
    }

    pub fn get(&self, i: usize, c: usize) -> f64 {
        self.data[c * self.n_rows + i]
    }
}

/// One JVP per color: column `c` is `J(u) s_c` with `s_c` the seed of color
/// `c`. When `parallel` is set the colors are evaluated concurrently.
pub fn compressed_jacobian<V: VectorFunction>(
    r: &V,
    u: &[f64],
    coloring: &Coloring,
    parallel: bool,
) -> Result<CompressedJacobian> {
    if coloring.colors.len() != r.n_inputs() {
        return Err(Error::ShapeMismatch {
            expected: r.n_inputs(),
            got: coloring.colors.len(),
        });
    }
    let n_rows = r.n_outputs();
    let cols: Vec<Vec<f64>> = if parallel {
        (0..coloring.n_colors)
            .into_par_iter()
            .map(|c| jvp(r, u, &coloring.seed(c)))
            .collect::<Result<_>>()?
    } else {
        (0..coloring.n_colors)
            .map(|c| jvp(r, u, &coloring.seed(c)))
            .collect::<Result<_>>()?
    };
    let mut data = Vec::with_capacity(n_rows * coloring.n_colors);
    for c in cols {
        data.extend(c);
    }
    Ok(CompressedJacobian {
        n_rows,
        n_colors: coloring.n_colors,
        data,
    })
}

/// `K_ij = J_comp[i, color(j)]` for every `(i, j)` in the pattern.
pub fn decompress(
    comp: &CompressedJacobian,
    pattern: &SparsityPattern,
    coloring: &Coloring,
) -> Result<CsrMatrix> {
    if pattern.n_rows != comp.n_rows {
        return Err(Error::ShapeMismatch {
            expected: comp.n_rows,
            got: pattern.n_rows,
        });
    }
    if pattern.n_cols != coloring.colors.len() {
        return Err(Error::ShapeMismatch {
            expected: coloring.colors.len(),
            got: pattern.n_cols,
        });
    }
    let mut k = CsrMatrix::zeros(pattern);
    for i in 0..pattern.n_rows {
        for p in pattern.row_ptr[i]..pattern.row_ptr[i + 1] {
            k.values[p] = comp.get(i, coloring.colors[pattern.col_idx[p]]);
        }
    }
    Ok(k)
}

/// Options for [`sparse_jacobian`].
#[derive(Clone, Debug, Default)]
pub struct JacobianOptions {
    /// Evaluate colors concurrently.
    pub parallel: bool,
    /// Number of random columns to cross-check against a canonical-basis
    /// JVP; a mismatch raises [`Error::PatternTooSmall`].
    pub verify_columns: usize,
    pub seed: u64,
}

/// Sparse Jacobian of `r` at `u` through coloring and decompression.
pub fn sparse_jacobian<V: VectorFunction>(
    r: &V,
    u: &[f64],
    pattern: &SparsityPattern,
    coloring: &Coloring,
    opts: &JacobianOptions,
) -> Result<CsrMatrix> {
    let comp = compressed_jacobian(r, u, coloring, opts.parallel)?;
    let k = decompress(&comp, pattern, coloring)?;
    if opts.verify_columns > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let n = pattern.n_cols;
        let kt = k.transpose();
        let mut e = vec![0.0; n];
        for _ in 0..opts.verify_columns {
            let j = rng.gen_range(0..n);
            e[j] = 1.0;
            let exact = jvp(r, u, &e)?;
            e[j] = 0.0;
            let mut recon = vec![0.0; k.n_rows];
            let (rows, vals) = kt.row(j);
            for (&i, &v) in rows.iter().zip(vals) {
                recon[i] = v;
            }
            let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let err = exact
                .iter()
                .zip(&recon)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                / scale;
            if err > 1e-8 {
                return Err(Error::PatternTooSmall { col: j, err });
            }
        }
    }
    Ok(k)
}

/// Sparse Hessian of a functional through the colored pipeline.
pub fn sparse_hessian<F: ScalarFunctional>(
    f: &F,
    u: &[f64],
    pattern: &SparsityPattern,
    coloring: &Coloring,
    opts: &JacobianOptions,
) -> Result<CsrMatrix> {
    sparse_jacobian(&Residual(f), u, pattern, coloring, opts)
}

struct LocalElement<'a, I> {
    op: &'a Operator,
    integrand: &'a I,
    e: usize,
    dofs: Vec<usize>,
}

impl<I: Integrand> ScalarFunctional for LocalElement<'_, I> {
    fn n_dofs(&self) -> usize {
        self.dofs.len()
    }
    fn visit_terms<K: TermSink>(&self, sink: &mut K) -> Result<()> {
        sink.term(
            &self.dofs,
            &self.op.range_term(self.integrand, self.e..self.e + 1),
        )
    }
}

/// Baseline assembly: a dense Hessian per element (via forward-over-reverse
/// on the element energy) scattered into the global pattern, element by
/// element without batching.
pub fn scatter_add_assemble<I: Integrand>(
    op: &Operator,
    integrand: &I,
    u: &[f64],
    pattern: &SparsityPattern,
) -> Result<CsrMatrix> {
    let m = integrand.components();
    if u.len() != op.n_nodes * m {
        return Err(Error::ShapeMismatch {
            expected: op.n_nodes * m,
            got: u.len(),
        });
    }
    let mut k = CsrMatrix::zeros(pattern);
    let k_loc = op.n_en * m;
    let mut global = Vec::with_capacity(k_loc);
    let mut local = LocalElement {
        op,
        integrand,
        e: 0,
        dofs: (0..k_loc).collect(),
    };
    let mut ue = vec![0.0; k_loc];
    for e in 0..op.n_elements() {
        op.gather_dofs(e..e + 1, m, 0, &mut global);
        for (a, &g) in global.iter().enumerate() {
            ue[a] = u[g];
        }
        local.e = e;
        let h = dense_hessian(&local, &ue)?;
        for (a, &ga) in global.iter().enumerate() {
            for (b, &gb) in global.iter().enumerate() {
                if h[a][b] != 0.0 {
                    k.add_to(ga, gb, h[a][b])?;
                }
            }
        }
    }
    Ok(k)
}
