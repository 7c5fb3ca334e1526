//! P1 finite element assembly and a preconditioned conjugate gradient solver.
//!
//! Element integrals use the three-point mid-edge rule.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::surface::{Mat2, Vec2};

/// Compressed sparse row matrix with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the vertex-adjacency pattern of `mesh`.
    pub fn pattern(mesh: &TriMesh) -> Self {
        let n = mesh.vertex_count();
        let mut rows: Vec<Vec<u32>> = vec![Vec::with_capacity(7); n];
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(i as u32);
        }
        for t in &mesh.triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        rows[t[a] as usize].push(t[b]);
                    }
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(&row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::diagonal_matrix(&vec![1.0; n])
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        CsrMatrix {
            n: diag.len(),
            row_ptr: (0..=diag.len()).collect(),
            col_idx: (0..diag.len() as u32).collect(),
            values: diag.to_vec(),
        }
    }

    fn position(&self, i: usize, j: u32) -> Option<usize> {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j as u32).map_or(0.0, |k| self.values[k])
    }

    fn add(&mut self, i: usize, j: u32, v: f64) {
        let k = self
            .position(i, j)
            .expect("entry outside the sparsity pattern");
        self.values[k] += v;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `scale * self + diag(diag)`; the pattern must contain the diagonal.
    pub fn scaled_plus_diagonal(&self, scale: f64, diag: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= scale;
        }
        for (i, d) in diag.iter().enumerate() {
            out.add(i, i as u32, *d);
        }
        out
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Replaces the rows and columns of `nodes` by identity rows, moving the
    /// known values into `rhs` so the matrix stays symmetric.
    pub fn apply_dirichlet(&mut self, rhs: &mut [f64], nodes: &[usize], values: &[f64]) {
        let mut fixed = vec![None; self.n];
        for (&i, &v) in nodes.iter().zip(values) {
            fixed[i] = Some(v);
        }
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                match (fixed[i], fixed[j]) {
                    (Some(_), _) => self.values[k] = if i == j { 1.0 } else { 0.0 },
                    (None, Some(vj)) => {
                        rhs[i] -= self.values[k] * vj;
                        self.values[k] = 0.0;
                    }
                    (None, None) => {}
                }
            }
        }
        for (&i, &v) in nodes.iter().zip(values) {
            rhs[i] = v;
        }
    }
}

/// Barycentric gradients and area of a triangle.
pub fn element_gradients(corners: &[Vec2; 3]) -> ([Vec2; 3], f64) {
    let [a, b, c] = corners;
    let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let area = 0.5 * det;
    let perp = |p: &Vec2, q: &Vec2| Vec2::new(p.y - q.y, q.x - p.x) / det;
    ([perp(b, c), perp(c, a), perp(a, b)], area)
}

/// Mid-edge quadrature points in the order (v0v1, v1v2, v2v0).
pub fn midpoints(corners: &[Vec2; 3]) -> [Vec2; 3] {
    [
        (corners[0] + corners[1]) * 0.5,
        (corners[1] + corners[2]) * 0.5,
        (corners[2] + corners[0]) * 0.5,
    ]
}

/// Element matrix of `∫ ∇ψ_i · K ∇ψ_j` for a constant tensor `K`.
pub fn element_stiffness(corners: &[Vec2; 3], k: &Mat2) -> [[f64; 3]; 3] {
    let (grads, area) = element_gradients(corners);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = area * grads[i].dot(&(k * grads[j]));
        }
    }
    out
}

/// Global stiffness matrix of `∫ ∇ψ_i · K(x) ∇ψ_j`, with `K` averaged over the
/// mid-edge points of each element.
pub fn assemble_stiffness(mesh: &TriMesh, tensor: impl Fn(&Vec2) -> Mat2) -> Result<CsrMatrix> {
    let mut m = CsrMatrix::pattern(mesh);
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let corners = mesh.corners(e);
        let q = midpoints(&corners);
        let k = (tensor(&q[0]) + tensor(&q[1]) + tensor(&q[2])) / 3.0;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly { element: e });
        }
        let local = element_stiffness(&corners, &k);
        for a in 0..3 {
            for b in 0..3 {
                m.add(tri[a] as usize, tri[b], local[a][b]);
            }
        }
    }
    Ok(m)
}

/// Lumped weights `∫ ψ_i w`.
pub fn lumped_weights(mesh: &TriMesh, weight: impl Fn(&Vec2) -> f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.vertex_count()];
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let corners = mesh.corners(e);
        let area = mesh.area(e);
        let q = midpoints(&corners);
        let w = [weight(&q[0]), weight(&q[1]), weight(&q[2])];
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly { element: e });
        }
        // ψ_a is 1/2 at the two midpoints adjacent to vertex a
        out[tri[0] as usize] += area / 6.0 * (w[0] + w[2]);
        out[tri[1] as usize] += area / 6.0 * (w[0] + w[1]);
        out[tri[2] as usize] += area / 6.0 * (w[1] + w[2]);
    }
    Ok(out)
}

/// Load vector `∫ f ψ_i`.
pub fn load_vector(mesh: &TriMesh, f: impl Fn(&Vec2) -> f64) -> Result<Vec<f64>> {
    lumped_weights(mesh, f)
}

/// `∫ F(x, u_h(x))` over the mesh for a nodal field `u`, mid-edge rule.
pub fn integrate_field(mesh: &TriMesh, u: &[f64], f: impl Fn(&Vec2, f64) -> f64) -> f64 {
    let mut total = 0.0;
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let q = midpoints(&mesh.corners(e));
        let v = [u[tri[0] as usize], u[tri[1] as usize], u[tri[2] as usize]];
        let uq = [0.5 * (v[0] + v[1]), 0.5 * (v[1] + v[2]), 0.5 * (v[2] + v[0])];
        total += mesh.area(e) / 3.0 * (f(&q[0], uq[0]) + f(&q[1], uq[1]) + f(&q[2], uq[2]));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    #[default]
    Jacobi,
    /// Zero fill-in incomplete Cholesky; falls back to Jacobi when a pivot
    /// is not positive.
    IncompleteCholesky,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 5000,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lower factor `L` with the sparsity of the lower triangle of the matrix,
/// stored by rows with the diagonal entry last.
struct IncompleteCholesky {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl IncompleteCholesky {
    fn new(m: &CsrMatrix) -> Option<Self> {
        let mut row_ptr = Vec::with_capacity(m.n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..m.n {
            for k in m.row_ptr[i]..m.row_ptr[i + 1] {
                let j = m.col_idx[k] as usize;
                if j <= i {
                    col_idx.push(j as u32);
                    values.push(m.values[k]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        for i in 0..m.n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            if end == start || col_idx[end - 1] as usize != i {
                return None;
            }
            for a in start..end {
                let k = col_idx[a] as usize;
                // sparse dot of rows i and k over columns < k
                let (mut p, mut q) = (start, row_ptr[k]);
                let q_end = row_ptr[k + 1] - 1;
                let mut sum = 0.0;
                while p < a && q < q_end {
                    match col_idx[p].cmp(&col_idx[q]) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            sum += values[p] * values[q];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                if k < i {
                    values[a] = (values[a] - sum) / values[q_end];
                } else {
                    let pivot = values[a] - sum;
                    if !(pivot > 0.0) {
                        return None;
                    }
                    values[a] = pivot.sqrt();
                }
            }
        }
        Some(IncompleteCholesky {
            row_ptr,
            col_idx,
            values,
        })
    }

    /// `z = (L Lᵀ)⁻¹ r`.
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            let mut s = r[i];
            for a in start..end {
                s -= self.values[a] * z[self.col_idx[a] as usize];
            }
            z[i] = s / self.values[end];
        }
        for i in (0..n).rev() {
            let (start, end) = (self.row_ptr[i], self.row_ptr[i + 1] - 1);
            z[i] /= self.values[end];
            let zi = z[i];
            for a in start..end {
                z[self.col_idx[a] as usize] -= self.values[a] * zi;
            }
        }
    }
}

enum Precond {
    Jacobi(Vec<f64>),
    Cholesky(IncompleteCholesky),
}

impl Precond {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match self {
            Precond::Jacobi(inv) => {
                for ((zi, ri), d) in z.iter_mut().zip(r).zip(inv) {
                    *zi = ri * d;
                }
            }
            Precond::Cholesky(ic) => ic.apply(r, z),
        }
    }
}

/// Preconditioned conjugate gradients for a symmetric positive definite
/// matrix, starting from `x0` when given. Returns the solution and the
/// iteration count.
pub fn solve(
    matrix: &CsrMatrix,
    rhs: &[f64],
    x0: Option<&[f64]>,
    options: SolverOptions,
) -> Result<(Vec<f64>, usize)> {
    let n = matrix.n;
    if rhs.len() != n {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has {} entries for a {n}x{n} system",
            rhs.len()
        )));
    }
    let inv_diag: Vec<f64> = matrix
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { f64::NAN })
        .collect();
    if inv_diag.iter().any(|d| !d.is_finite()) {
        return Err(Error::Solver {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], 0));
    }
    let precond = match options.preconditioner {
        Preconditioner::Jacobi => Precond::Jacobi(inv_diag),
        Preconditioner::IncompleteCholesky => match IncompleteCholesky::new(matrix) {
            Some(ic) => Precond::Cholesky(ic),
            None => {
                log::debug!("incomplete Cholesky broke down; using Jacobi");
                Precond::Jacobi(inv_diag)
            }
        },
    };
    let mut r = matrix.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    for it in 0..options.max_iter {
        if res <= options.tol {
            return Ok((x, it));
        }
        matrix.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        if !res.is_finite() {
            break;
        }
    }
    if res <= options.tol {
        return Ok((x, options.max_iter));
    }
    Err(Error::Solver {
        iterations: options.max_iter,
        residual: res,
    })
}
