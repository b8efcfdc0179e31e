//! Reference elements: shape functions, quadrature rules and the
//! reference-to-physical map. Everything is generic over [`Scalar`] so the
//! geometry itself can be differentiated.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::error::{Error, Result};

/// Floor applied to `det(J Jᵀ)` before the square root for embedded elements.
pub const SAFE_SQRT_FLOOR: f64 = 1e-30;

/// Relative tolerance for degenerate elements: `detJ <= DET_TOL * diag^d_ref`.
pub const DET_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Line2,
    Tri3,
    Quad4,
    Tet4,
    /// Linear triangle embedded in 3D (surface meshes).
    Tri3Manifold,
}

impl ElementKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Line2 => 2,
            ElementKind::Tri3 | ElementKind::Tri3Manifold => 3,
            ElementKind::Quad4 | ElementKind::Tet4 => 4,
        }
    }

    pub fn ref_dim(self) -> usize {
        match self {
            ElementKind::Line2 => 1,
            ElementKind::Tri3 | ElementKind::Quad4 | ElementKind::Tri3Manifold => 2,
            ElementKind::Tet4 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Line2 => "Line2",
            ElementKind::Tri3 => "Tri3",
            ElementKind::Quad4 => "Quad4",
            ElementKind::Tet4 => "Tet4",
            ElementKind::Tri3Manifold => "Tri3Manifold",
        }
    }

    /// Reference-element nodes, `n_nodes × ref_dim` row-major.
    pub fn reference_nodes(self) -> &'static [f64] {
        match self {
            ElementKind::Line2 => &[-1.0, 1.0],
            ElementKind::Tri3 | ElementKind::Tri3Manifold => &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
            ElementKind::Quad4 => &[-1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0],
            ElementKind::Tet4 => &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        }
    }

    /// Measure of the reference element.
    pub fn reference_measure(self) -> f64 {
        match self {
            ElementKind::Line2 => 2.0,
            ElementKind::Tri3 | ElementKind::Tri3Manifold => 0.5,
            ElementKind::Quad4 => 4.0,
            ElementKind::Tet4 => 1.0 / 6.0,
        }
    }
}

/// Quadrature rule on a reference element.
#[derive(Clone, Debug)]
pub struct QuadRule {
    pub dim: usize,
    /// `n_q × dim` row-major.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadRule {
    pub fn n_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }
}

/// Default rule for each element kind.
pub fn quadrature(kind: ElementKind) -> QuadRule {
    match kind {
        ElementKind::Line2 => QuadRule {
            dim: 1,
            points: vec![0.0],
            weights: vec![2.0],
            degree: 1,
        },
        ElementKind::Tri3 | ElementKind::Tri3Manifold => QuadRule {
            dim: 2,
            points: vec![1.0 / 3.0, 1.0 / 3.0],
            weights: vec![0.5],
            degree: 1,
        },
        ElementKind::Quad4 => {
            let g = 1.0 / 3f64.sqrt();
            QuadRule {
                dim: 2,
                points: vec![-g, -g, g, -g, g, g, -g, g],
                weights: vec![1.0; 4],
                degree: 3,
            }
        }
        ElementKind::Tet4 => QuadRule {
            dim: 3,
            points: vec![0.25, 0.25, 0.25],
            weights: vec![1.0 / 6.0],
            degree: 1,
        },
    }
}

/// Shape function values at reference point `xi`.
pub fn shape_functions<S: Scalar>(kind: ElementKind, xi: &[S]) -> Vec<S> {
    match kind {
        ElementKind::Line2 => vec![(S::one() - xi[0]) * 0.5, (S::one() + xi[0]) * 0.5],
        ElementKind::Tri3 | ElementKind::Tri3Manifold => {
            vec![S::one() - xi[0] - xi[1], xi[0], xi[1]]
        }
        ElementKind::Quad4 => {
            let (x, y) = (xi[0], xi[1]);
            vec![
                (S::one() - x) * (S::one() - y) * 0.25,
                (S::one() + x) * (S::one() - y) * 0.25,
                (S::one() + x) * (S::one() + y) * 0.25,
                (S::one() - x) * (S::one() + y) * 0.25,
            ]
        }
        ElementKind::Tet4 => vec![S::one() - xi[0] - xi[1] - xi[2], xi[0], xi[1], xi[2]],
    }
}

/// Reference gradients `∂N_a/∂ξ_k`, `n_nodes × ref_dim` row-major.
pub fn shape_gradients<S: Scalar>(kind: ElementKind, xi: &[S]) -> Vec<S> {
    let c = S::cst;
    match kind {
        ElementKind::Line2 => vec![c(-0.5), c(0.5)],
        ElementKind::Tri3 | ElementKind::Tri3Manifold => {
            vec![c(-1.0), c(-1.0), c(1.0), c(0.0), c(0.0), c(1.0)]
        }
        ElementKind::Quad4 => {
            let (x, y) = (xi[0], xi[1]);
            let (xm, xp) = (S::one() - x, S::one() + x);
            let (ym, yp) = (S::one() - y, S::one() + y);
            vec![
                -ym * 0.25,
                -xm * 0.25,
                ym * 0.25,
                -xp * 0.25,
                yp * 0.25,
                xp * 0.25,
                -yp * 0.25,
                xm * 0.25,
            ]
        }
        ElementKind::Tet4 => vec![
            c(-1.0),
            c(-1.0),
            c(-1.0),
            c(1.0),
            c(0.0),
            c(0.0),
            c(0.0),
            c(1.0),
            c(0.0),
            c(0.0),
            c(0.0),
            c(1.0),
        ],
    }
}

/// Reference-to-physical map at one point.
#[derive(Clone, Debug)]
pub struct Jacobian<S> {
    pub d_ref: usize,
    pub d_phys: usize,
    /// `J[k][i] = ∂x_i/∂ξ_k`, `d_ref × d_phys` row-major.
    pub j: Vec<S>,
    /// Signed determinant for square maps, `sqrt(det(J Jᵀ))` otherwise.
    pub det_j: S,
    /// `(J Jᵀ)⁻¹`, `d_ref × d_ref`.
    pub g_inv: Vec<S>,
}

/// Determinant of a small square matrix (sizes 1 to 3).
pub fn det<S: Scalar>(a: &[S], n: usize) -> S {
    match n {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => panic!("det: unsupported size {n}"),
    }
}

/// Inverse of a small square matrix (sizes 1 to 3) given its determinant.
pub fn inverse<S: Scalar>(a: &[S], n: usize, d: S) -> Vec<S> {
    let inv_d = S::one() / d;
    match n {
        1 => vec![inv_d],
        2 => vec![a[3] * inv_d, -a[1] * inv_d, -a[2] * inv_d, a[0] * inv_d],
        3 => {
            let c = |i: usize, j: usize| a[i * 3 + j];
            let mut out = vec![S::zero(); 9];
            out[0] = (c(1, 1) * c(2, 2) - c(1, 2) * c(2, 1)) * inv_d;
            out[1] = (c(0, 2) * c(2, 1) - c(0, 1) * c(2, 2)) * inv_d;
            out[2] = (c(0, 1) * c(1, 2) - c(0, 2) * c(1, 1)) * inv_d;
            out[3] = (c(1, 2) * c(2, 0) - c(1, 0) * c(2, 2)) * inv_d;
            out[4] = (c(0, 0) * c(2, 2) - c(0, 2) * c(2, 0)) * inv_d;
            out[5] = (c(0, 2) * c(1, 0) - c(0, 0) * c(1, 2)) * inv_d;
            out[6] = (c(1, 0) * c(2, 1) - c(1, 1) * c(2, 0)) * inv_d;
            out[7] = (c(0, 1) * c(2, 0) - c(0, 0) * c(2, 1)) * inv_d;
            out[8] = (c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0)) * inv_d;
            out
        }
        _ => panic!("inverse: unsupported size {n}"),
    }
}

fn check_dims(kind: ElementKind, xi_len: usize, coords_len: usize, d_phys: usize) -> Result<()> {
    if xi_len != kind.ref_dim() {
        return Err(Error::ShapeMismatch {
            expected: kind.ref_dim(),
            got: xi_len,
        });
    }
    if d_phys < kind.ref_dim() || d_phys > 3 {
        return Err(Error::DimensionMismatch(format!(
            "{} cannot live in {d_phys} physical dimensions",
            kind.name()
        )));
    }
    if kind == ElementKind::Tri3Manifold && d_phys != 3 {
        return Err(Error::DimensionMismatch(
            "Tri3Manifold requires 3D coordinates".into(),
        ));
    }
    let expected = kind.n_nodes() * d_phys;
    if coords_len != expected {
        return Err(Error::ShapeMismatch {
            expected,
            got: coords_len,
        });
    }
    Ok(())
}

/// Jacobian of the element map at `xi`; `coords` is `n_nodes × d_phys`.
pub fn jacobian<S: Scalar>(
    kind: ElementKind,
    xi: &[S],
    coords: &[S],
    d_phys: usize,
) -> Result<Jacobian<S>> {
    check_dims(kind, xi.len(), coords.len(), d_phys)?;
    let d_ref = kind.ref_dim();
    let n_en = kind.n_nodes();
    let dn = shape_gradients(kind, xi);
    let mut j = vec![S::zero(); d_ref * d_phys];
    let mut col = vec![S::zero(); n_en];
    let mut dk = vec![S::zero(); n_en];
    for k in 0..d_ref {
        for a in 0..n_en {
            dk[a] = dn[a * d_ref + k];
        }
        for i in 0..d_phys {
            for a in 0..n_en {
                col[a] = coords[a * d_phys + i];
            }
            j[k * d_phys + i] = S::dot(&dk, &col);
        }
    }
    let mut g = vec![S::zero(); d_ref * d_ref];
    for k in 0..d_ref {
        for l in 0..d_ref {
            g[k * d_ref + l] = S::dot(
                &j[k * d_phys..(k + 1) * d_phys],
                &j[l * d_phys..(l + 1) * d_phys],
            );
        }
    }
    let det_g = det(&g, d_ref);
    let det_j = if d_ref == d_phys {
        det(&j, d_ref)
    } else {
        det_g.max(S::cst(SAFE_SQRT_FLOOR)).sqrt()
    };
    let g_inv = inverse(&g, d_ref, det_g.max(S::cst(SAFE_SQRT_FLOOR)));
    Ok(Jacobian {
        d_ref,
        d_phys,
        j,
        det_j,
        g_inv,
    })
}

/// Physical shape-function gradients `∇N_a = Jᵀ (J Jᵀ)⁻¹ ∂N_a/∂ξ`,
/// `n_nodes × d_phys`, together with `detJ`. For square maps this reduces
/// to `J⁻ᵀ`-style gradients; for embedded elements it is the surface
/// gradient through the pseudo-inverse.
pub fn physical_shape_gradients<S: Scalar>(
    kind: ElementKind,
    xi: &[S],
    coords: &[S],
    d_phys: usize,
) -> Result<(Vec<S>, S)> {
    let jac = jacobian(kind, xi, coords, d_phys)?;
    let d_ref = kind.ref_dim();
    let n_en = kind.n_nodes();
    let dn = shape_gradients(kind, xi);
    let mut out = vec![S::zero(); n_en * d_phys];
    let mut w = vec![S::zero(); d_ref];
    for a in 0..n_en {
        // w = G⁻¹ dN_a
        for k in 0..d_ref {
            w[k] = S::dot(
                &jac.g_inv[k * d_ref..(k + 1) * d_ref],
                &dn[a * d_ref..(a + 1) * d_ref],
            );
        }
        for i in 0..d_phys {
            let mut acc = S::zero();
            for k in 0..d_ref {
                acc += jac.j[k * d_phys + i] * w[k];
            }
            out[a * d_phys + i] = acc;
        }
    }
    Ok((out, jac.det_j))
}

/// Gradient of an interpolated field, `m × d_phys` row-major;
/// `values` is `n_nodes × m`.
pub fn physical_gradient<S: Scalar>(
    kind: ElementKind,
    xi: &[S],
    coords: &[S],
    values: &[S],
    m: usize,
    d_phys: usize,
) -> Result<Vec<S>> {
    let n_en = kind.n_nodes();
    if values.len() != n_en * m {
        return Err(Error::ShapeMismatch {
            expected: n_en * m,
            got: values.len(),
        });
    }
    let (dn, _) = physical_shape_gradients(kind, xi, coords, d_phys)?;
    let mut out = vec![S::zero(); m * d_phys];
    for c in 0..m {
        for i in 0..d_phys {
            let mut acc = S::zero();
            for a in 0..n_en {
                acc += values[a * m + c] * dn[a * d_phys + i];
            }
            out[c * d_phys + i] = acc;
        }
    }
    Ok(out)
}

/// Degeneracy threshold `DET_TOL * diag^d_ref` for a length scale `diag`.
pub fn det_threshold(kind: ElementKind, diag: f64) -> f64 {
    DET_TOL * diag.powi(kind.ref_dim() as i32)
}

/// Diagonal of the bounding box of `n` points of dimension `d`.
pub fn bbox_diagonal(coords: &[f64], d: usize) -> f64 {
    let n = coords.len() / d.max(1);
    if n == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in 0..n {
            lo = lo.min(coords[p * d + i]);
            hi = hi.max(coords[p * d + i]);
        }
        s += (hi - lo) * (hi - lo);
    }
    s.sqrt()
}
