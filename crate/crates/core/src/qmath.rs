//! Dense complex linear algebra for the handful of small Hermitian matrices
//! (2x2, 4x4, 16x16) this crate works with, plus two-qubit entanglement
//! measures.
//!
//! Matrices are row-major `Vec<Complex64>`. Qubit 0 is the most significant
//! bit of a basis index, so `kron(a, b)` places `a` on qubit 0.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const NORM_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a square.
    pub fn from_row_major(entries: Vec<Complex64>) -> Result<Self> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(Error::Dimension(format!(
                "{} entries do not form a square matrix",
                entries.len()
            )));
        }
        Ok(Self { dim, data: entries })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        Self::from_fn(dim, |i, j| Complex64::new(rows[i][j], 0.0))
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Projector `|v><v|` (not normalized).
    pub fn outer(v: &[Complex64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self[(j, i)].conj())
    }

    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_complex(&self, factor: Complex64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "matmul dimension mismatch");
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.data[i * n + k];
                if aik == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += aik * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `self * v` for a column vector.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.dim, v.len(), "apply dimension mismatch");
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Similarity transform `U self U^dagger`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        u.matmul(self).matmul(&u.dagger())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "comparison dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_abs_diff(&self.dagger()) <= tol
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        self.hermitian_eigen().0
    }

    /// Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.
    ///
    /// Returns ascending eigenvalues and the unitary whose columns are the
    /// matching eigenvectors. Only the Hermitian part of `self` is used.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, ComplexMatrix) {
        let n = self.dim;
        let mut a = self.clone();
        // symmetrize so round-off in the input cannot stall convergence
        for i in 0..n {
            a[(i, i)] = Complex64::new(a[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let avg = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                a[(i, j)] = avg;
                a[(j, i)] = avg.conj();
            }
        }
        let mut vecs = ComplexMatrix::identity(n);
        let scale = a.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);

        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].norm_sqr())
                .sum();
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    let b = apq.norm();
                    if b <= 1e-300 {
                        continue;
                    }
                    let phase = apq / b;
                    let alpha = a[(p, p)].re;
                    let gamma = a[(q, q)].re;
                    let tau = (gamma - alpha) / (2.0 * b);
                    let t = if tau >= 0.0 {
                        1.0 / (tau + (1.0 + tau * tau).sqrt())
                    } else {
                        -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                    };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = t * c;
                    // U = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane
                    let u_pp = Complex64::new(c, 0.0);
                    let u_pq = Complex64::new(s, 0.0);
                    let u_qp = -phase.conj() * s;
                    let u_qq = phase.conj() * c;
                    rotate_columns(&mut a, p, q, u_pp, u_pq, u_qp, u_qq);
                    rotate_rows(&mut a, p, q, u_pp, u_pq, u_qp, u_qq);
                    rotate_columns(&mut vecs, p, q, u_pp, u_pq, u_qp, u_qq);
                }
            }
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
        let values = order.iter().map(|&i| a[(i, i)].re).collect();
        let sorted = ComplexMatrix::from_fn(n, |i, j| vecs[(i, order[j])]);
        (values, sorted)
    }

    /// Applies a real function to the spectrum of a Hermitian matrix.
    pub fn hermitian_map(&self, f: impl Fn(f64) -> f64) -> ComplexMatrix {
        let (values, vecs) = self.hermitian_eigen();
        let mapped = ComplexMatrix::diag(&values.iter().map(|&x| f(x)).collect::<Vec<_>>());
        mapped.conjugate_by(&vecs)
    }
}

// A <- A U on columns p, q
fn rotate_columns(
    a: &mut ComplexMatrix,
    p: usize,
    q: usize,
    u_pp: Complex64,
    u_pq: Complex64,
    u_qp: Complex64,
    u_qq: Complex64,
) {
    for k in 0..a.dim {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * u_pp + akq * u_qp;
        a[(k, q)] = akp * u_pq + akq * u_qq;
    }
}

// A <- U^dagger A on rows p, q
fn rotate_rows(
    a: &mut ComplexMatrix,
    p: usize,
    q: usize,
    u_pp: Complex64,
    u_pq: Complex64,
    u_qp: Complex64,
    u_qq: Complex64,
) {
    for k in 0..a.dim {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
        a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "add dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "sub dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        for i in 0..self.dim {
            let row: Vec<String> = (0..self.dim)
                .map(|j| {
                    let z = self[(i, j)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_fn(2, |i, j| match (i, j) {
        (0, 1) => Complex64::new(0.0, -1.0),
        (1, 0) => Complex64::new(0.0, 1.0),
        _ => ZERO,
    })
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag(&[1.0, -1.0])
}

/// Tensor product with the standard layout `(a ⊗ b)[(i*db + k, j*db + l)] = a[i,j] b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let db = b.dim;
    ComplexMatrix::from_fn(a.dim * db, |r, c| a[(r / db, c / db)] * b[(r % db, c % db)])
}

pub fn kron_vec(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Traces out every subsystem not listed in `keep`.
///
/// `dims` gives the subsystem dimensions in tensor order; `keep` must be
/// sorted, non-empty and in range.
pub fn partial_trace(rho: &ComplexMatrix, keep: &[usize], dims: &[usize]) -> Result<ComplexMatrix> {
    let total: usize = dims.iter().product();
    if total != rho.dim {
        return Err(Error::Dimension(format!(
            "subsystem dims {dims:?} multiply to {total}, matrix is {0}x{0}",
            rho.dim
        )));
    }
    if keep.is_empty()
        || keep.windows(2).any(|w| w[0] >= w[1])
        || keep.iter().any(|&k| k >= dims.len())
    {
        return Err(Error::Dimension(format!(
            "kept subsystems {keep:?} must be sorted, unique and below {}",
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = keep_dims.iter().product();
    let env_dim: usize = traced_dims.iter().product();

    let mut digits = vec![0usize; dims.len()];
    let mut flat_index = |kept: usize, env: usize| -> usize {
        scatter(kept, keep, &keep_dims, &mut digits);
        scatter(env, &traced, &traced_dims, &mut digits);
        digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
    };

    let mut out = ComplexMatrix::zeros(out_dim);
    for i in 0..out_dim {
        for j in 0..out_dim {
            let mut acc = ZERO;
            for e in 0..env_dim {
                let r = flat_index(i, e);
                let c = flat_index(j, e);
                acc += rho[(r, c)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

// Writes the mixed-radix digits of `value` into the slots named by `positions`.
fn scatter(mut value: usize, positions: &[usize], radices: &[usize], digits: &mut [usize]) {
    for (&pos, &radix) in positions.iter().zip(radices).rev() {
        digits[pos] = value % radix;
        value /= radix;
    }
}

/// A Hermitian, positive semidefinite matrix with trace in (0, 1].
///
/// Normalized states have unit trace. Conditional branches keep their trace
/// as the branch weight instead of being renormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates a unit-trace density matrix.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        let rho = Self::unnormalized(mat)?;
        let tr = rho.weight();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::State(format!("trace {tr} is not 1")));
        }
        Ok(rho)
    }

    /// Validates a subnormalized branch state with trace in (0, 1].
    pub fn unnormalized(mat: ComplexMatrix) -> Result<Self> {
        if !matches!(mat.dim(), 2 | 4 | 16) {
            return Err(Error::Dimension(format!("unsupported dimension {}", mat.dim())));
        }
        if !mat.is_hermitian(HERMITIAN_TOL) {
            return Err(Error::State("matrix is not Hermitian".into()));
        }
        let tr = mat.trace();
        if tr.re <= 0.0 || tr.re > 1.0 + TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::State(format!("trace {tr} outside (0, 1]")));
        }
        let min_eig = mat.hermitian_eigenvalues()[0];
        if min_eig < -PSD_TOL {
            return Err(Error::State(format!("negative eigenvalue {min_eig}")));
        }
        Ok(Self { mat })
    }

    /// Pure state `|psi><psi|`.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        check_normalized(psi)?;
        Self::new(ComplexMatrix::outer(psi))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// Trace, i.e. the probability weight of a conditional branch.
    pub fn weight(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.mat.matmul(&self.mat).trace().re
    }

    pub fn partial_trace(&self, keep: &[usize], dims: &[usize]) -> Result<DensityMatrix> {
        Ok(DensityMatrix {
            mat: partial_trace(&self.mat, keep, dims)?,
        })
    }
}

fn check_normalized(psi: &[Complex64]) -> Result<()> {
    let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::Normalization(norm));
    }
    Ok(())
}

/// Shannon entropy in bits of `{p, 1 - p}`.
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Von Neumann entropy in bits of a spectrum; non-positive entries contribute 0.
pub fn spectral_entropy(eigenvalues: &[f64]) -> f64 {
    eigenvalues
        .iter()
        .filter(|&&x| x > 0.0)
        .fold(0.0, |acc, &x| acc - x * x.log2())
}

/// Entropy of entanglement of a pure two-qubit state, in bits.
pub fn entanglement_entropy(psi: &[Complex64]) -> Result<f64> {
    if psi.len() != 4 {
        return Err(Error::Dimension(format!(
            "expected a two-qubit vector, got length {}",
            psi.len()
        )));
    }
    check_normalized(psi)?;
    let reduced = partial_trace(&ComplexMatrix::outer(psi), &[0], &[2, 2])?;
    // closed-form spectrum of a 2x2 Hermitian matrix
    let a = reduced[(0, 0)].re;
    let d = reduced[(1, 1)].re;
    let b = reduced[(0, 1)].norm();
    let disc = (((a - d) * 0.5).powi(2) + b * b).sqrt();
    let mid = (a + d) * 0.5;
    Ok(spectral_entropy(&[mid + disc, mid - disc]).clamp(0.0, 1.0))
}

/// Wootters concurrence of a two-qubit density matrix.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::Dimension(format!(
            "concurrence needs a 4x4 state, got {0}x{0}",
            rho.dim()
        )));
    }
    let yy = kron(&pauli_y(), &pauli_y());
    let flipped = rho.matrix().conj().conjugate_by(&yy);
    let sqrt_rho = rho.matrix().hermitian_map(|x| x.max(0.0).sqrt());
    let m = sqrt_rho.matmul(&flipped).matmul(&sqrt_rho);
    let mut lambdas: Vec<f64> = m
        .hermitian_eigenvalues()
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    Ok((lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0))
}

/// Entanglement of formation of a normalized two-qubit state, in ebits.
pub fn eof(rho: &DensityMatrix) -> Result<f64> {
    if (rho.weight() - 1.0).abs() > TRACE_TOL {
        return Err(Error::State(format!("trace {} is not 1", rho.weight())));
    }
    let c = concurrence(rho)?.min(1.0);
    Ok(eof_from_concurrence(c))
}

pub fn eof_from_concurrence(c: f64) -> f64 {
    binary_entropy((1.0 + (1.0 - c * c).max(0.0).sqrt()) / 2.0)
}
