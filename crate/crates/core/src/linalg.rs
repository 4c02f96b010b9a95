//! Dense complex linear algebra on Hilbert and Liouville space.
//!
//! Density matrices are vectorized row-major: entry `rho[i][j]` lands in slot
//! `i * dim + j`, i.e. the basis vector `|i> (x) <j|*`. Under this ordering the
//! map `rho -> X rho Y^dagger` is the Kronecker product `X (x) conj(Y)`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Dense square operator on a Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(Array2<C64>);

impl Operator {
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::NotSquare { rows: r, cols: c });
        }
        Ok(Self(entries))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(Array2::zeros((dim, dim)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Array2::eye(dim))
    }

    /// Operator with real entries given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let mut m = Array2::zeros((n, n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { rows: n, cols: row.len() });
            }
            for (j, &x) in row.iter().enumerate() {
                m[[i, j]] = C64::new(x, 0.0);
            }
        }
        Self::new(m)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Array2::zeros((n, n));
        for (i, &v) in values.iter().enumerate() {
            m[[i, i]] = C64::new(v, 0.0);
        }
        Self(m)
    }

    /// `|i><j|` on a space of dimension `dim`.
    pub fn basis(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Array2::zeros((dim, dim));
        m[[i, j]] = ONE;
        Self(m)
    }

    /// `|0><1|`: lowers the excited state (index 1) to the ground state (index 0).
    pub fn sigma_minus() -> Self {
        Self::basis(2, 0, 1)
    }

    pub fn sigma_plus() -> Self {
        Self::basis(2, 1, 0)
    }

    /// `sigma_z |0> = +|0>`.
    pub fn sigma_z() -> Self {
        Self::diagonal(&[1.0, -1.0])
    }

    pub fn sigma_x() -> Self {
        Self::sigma_minus() + Self::sigma_plus()
    }

    /// Truncated bosonic annihilation operator on Fock states `0..=n_max`.
    pub fn annihilation(n_max: usize) -> Self {
        let d = n_max + 1;
        let mut m = Array2::zeros((d, d));
        for n in 1..d {
            m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.0
    }

    pub fn dagger(&self) -> Self {
        Self(self.0.t().mapv(|z| z.conj()))
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.t().to_owned())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.mapv(|z| z.conj()))
    }

    pub fn matmul(&self, other: &Operator) -> Self {
        Self(self.0.dot(&other.0))
    }

    pub fn scale(&self, c: C64) -> Self {
        Self(&self.0 * c)
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    /// Largest absolute entry of `A - A^dagger`.
    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.0, &self.0.t().mapv(|z| z.conj()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| *z == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let gram = self.dagger().matmul(self);
        hermitian_eigenvalues(gram.entries())
            .into_iter()
            .fold(0.0, f64::max)
            .max(0.0)
            .sqrt()
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        self.0.dot(v)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        Operator(self.0 * C64::new(rhs, 0.0))
    }
}

impl Mul<C64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: C64) -> Operator {
        Operator(self.0 * rhs)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

/// Density matrix. Construction through [`DensityMatrix::from_matrix`] is
/// unchecked so that coherences like `|0><1|` can be vectorized too;
/// [`DensityMatrix::new`] validates a physical state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Array2<C64>);

impl DensityMatrix {
    pub fn new(entries: Array2<C64>) -> Result<Self> {
        let rho = Self::from_matrix(entries)?;
        rho.check_physical(1.0)?;
        Ok(rho)
    }

    pub fn from_matrix(entries: Array2<C64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c || r == 0 {
            return Err(Error::NotSquare { rows: r, cols: c });
        }
        Ok(Self(entries))
    }

    /// Pure state `|psi><psi|`.
    pub fn pure(psi: &Array1<C64>) -> Self {
        let n = psi.len();
        Self(Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj()))
    }

    /// `|i><i|` on a space of dimension `dim`.
    pub fn basis_state(dim: usize, i: usize) -> Self {
        Self(Operator::basis(dim, i, i).into_inner())
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(Array2::eye(dim) * C64::new(1.0 / dim as f64, 0.0))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<C64> {
        self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.diag().sum()
    }

    pub fn population(&self, i: usize) -> f64 {
        self.0[[i, i]].re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs_diff(&self.0, &self.0.t().mapv(|z| z.conj()))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.0 + &self.0.t().mapv(|z| z.conj())) * C64::new(0.5, 0.0);
        hermitian_eigenvalues(&herm)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Hermitian within 1e-10, trace within 1e-10 of `declared_trace`,
    /// eigenvalues >= -1e-8.
    pub fn check_physical(&self, declared_trace: f64) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidState(format!(
                "not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - declared_trace).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "trace {tr} differs from {declared_trace}"
            )));
        }
        let min = self.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    /// Trace distance `1/2 ||rho - sigma||_1`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let diff = &self.0 - &other.0;
        let herm = (&diff + &diff.t().mapv(|z| z.conj())) * C64::new(0.5, 0.0);
        0.5 * hermitian_eigenvalues(&herm)
            .into_iter()
            .map(f64::abs)
            .sum::<f64>()
    }

    /// Reduce over a labelled basis: basis state `a` carries the label
    /// `(kept, traced)` and the result lives on `0..kept_dim`.
    pub fn reduce(&self, labels: &[(usize, usize)], kept_dim: usize) -> DensityMatrix {
        let mut out = Array2::zeros((kept_dim, kept_dim));
        for (a, &(ka, ta)) in labels.iter().enumerate() {
            for (b, &(kb, tb)) in labels.iter().enumerate() {
                if ta == tb {
                    out[[ka, kb]] += self.0[[a, b]];
                }
            }
        }
        DensityMatrix(out)
    }
}

/// Density matrix flattened to a vector of length `dim^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedState(Array1<C64>);

impl VectorizedState {
    pub fn from_vec(entries: Array1<C64>) -> Result<Self> {
        hilbert_dim(entries.len())?;
        Ok(Self(entries))
    }

    pub fn dim(&self) -> usize {
        (self.0.len() as f64).sqrt().round() as usize
    }

    pub fn entries(&self) -> &Array1<C64> {
        &self.0
    }

    pub fn into_inner(self) -> Array1<C64> {
        self.0
    }

    pub fn trace(&self) -> C64 {
        let d = self.dim();
        (0..d).map(|i| self.0[i * d + i]).sum()
    }

    pub fn devectorize(&self) -> DensityMatrix {
        let d = self.dim();
        DensityMatrix(
            self.0
                .clone()
                .into_shape_with_order((d, d))
                .expect("length is a perfect square"),
        )
    }
}

pub fn vectorize(rho: &DensityMatrix) -> VectorizedState {
    let d = rho.dim();
    let flat: Array1<C64> = rho.0.iter().copied().collect();
    debug_assert_eq!(flat.len(), d * d);
    VectorizedState(flat)
}

pub fn devectorize(v: &VectorizedState) -> DensityMatrix {
    v.devectorize()
}

/// Linear map on vectorized density matrices of a `dim`-dimensional space.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    matrix: Array2<C64>,
}

impl SuperOperator {
    pub fn from_matrix(matrix: Array2<C64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::NotSquare { rows: r, cols: c });
        }
        let dim = hilbert_dim(r)?;
        Ok(Self { dim, matrix })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            matrix: Array2::zeros((dim * dim, dim * dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: Array2::eye(dim * dim),
        }
    }

    /// Hilbert-space dimension `d`; the matrix is `d^2 x d^2`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn apply(&self, v: &VectorizedState) -> VectorizedState {
        VectorizedState(self.matrix.dot(&v.0))
    }

    pub fn apply_raw(&self, v: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(v)
    }

    /// `self * other`, i.e. apply `other` first.
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            matrix: self.matrix.dot(&other.matrix),
        }
    }

    pub fn scale(&self, c: C64) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            matrix: &self.matrix * c,
        }
    }

    pub fn transpose(&self) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            matrix: self.matrix.t().to_owned(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn max_abs_diff(&self, other: &SuperOperator) -> f64 {
        max_abs_diff(&self.matrix, &other.matrix)
    }

    /// `exp(self * t)`.
    pub fn exp(&self, t: f64) -> Result<SuperOperator> {
        matrix_exponential(self, t)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> f64 {
        norm1(&self.matrix)
    }
}

impl Add<&SuperOperator> for &SuperOperator {
    type Output = SuperOperator;
    fn add(self, rhs: &SuperOperator) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Add for SuperOperator {
    type Output = SuperOperator;
    fn add(self, rhs: SuperOperator) -> SuperOperator {
        &self + &rhs
    }
}

impl AddAssign<&SuperOperator> for SuperOperator {
    fn add_assign(&mut self, rhs: &SuperOperator) {
        self.matrix += &rhs.matrix;
    }
}

impl Sub<&SuperOperator> for &SuperOperator {
    type Output = SuperOperator;
    fn sub(self, rhs: &SuperOperator) -> SuperOperator {
        SuperOperator {
            dim: self.dim,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

fn hilbert_dim(len: usize) -> Result<usize> {
    let d = (len as f64).sqrt().round() as usize;
    if d == 0 || d * d != len {
        return Err(Error::NotSquare { rows: len, cols: 0 });
    }
    Ok(d)
}

fn check_same_dim(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn kron_arrays(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for ((i, j), &x) in a.indexed_iter() {
        if x == ZERO {
            continue;
        }
        out.slice_mut(s![i * br..(i + 1) * br, j * bc..(j + 1) * bc])
            .assign(&(b * x));
    }
    out
}

/// Kronecker product `A (x) B`.
pub fn kron(a: &Operator, b: &Operator) -> Operator {
    Operator(kron_arrays(&a.0, &b.0))
}

/// Superoperator of `rho -> X rho Y^dagger`.
pub fn sandwich(x: &Operator, y: &Operator) -> Result<SuperOperator> {
    check_same_dim(x, y)?;
    Ok(SuperOperator {
        dim: x.dim(),
        matrix: kron_arrays(&x.0, &y.0.mapv(|z| z.conj())),
    })
}

/// Superoperator of `rho -> X rho - rho X`.
pub fn commutator_super(x: &Operator) -> SuperOperator {
    let id = Array2::eye(x.dim());
    SuperOperator {
        dim: x.dim(),
        matrix: kron_arrays(&x.0, &id) - kron_arrays(&id, &x.0.t().to_owned()),
    }
}

/// Superoperator of `rho -> X rho + rho X`.
pub fn anticommutator_super(x: &Operator) -> SuperOperator {
    let id = Array2::eye(x.dim());
    SuperOperator {
        dim: x.dim(),
        matrix: kron_arrays(&x.0, &id) + kron_arrays(&id, &x.0.t().to_owned()),
    }
}

/// Lindblad dissipator `D[X] rho = X rho X^dagger - 1/2 {X^dagger X, rho}`.
pub fn dissipator_super(x: &Operator) -> SuperOperator {
    let jump = sandwich(x, x).expect("same operator");
    let decay = anticommutator_super(&x.dagger().matmul(x));
    SuperOperator {
        dim: x.dim(),
        matrix: jump.matrix - decay.matrix * C64::new(0.5, 0.0),
    }
}

/// `-i [H, .]`: the coherent part of a Liouvillian.
pub fn hamiltonian_super(h: &Operator) -> SuperOperator {
    commutator_super(h).scale(-I)
}

/// Lindblad generator `-i[H, .] + sum_k D[C_k]`.
pub fn lindblad_generator(h: &Operator, collapse: &[Operator]) -> Result<SuperOperator> {
    let mut g = hamiltonian_super(h);
    for c in collapse {
        check_same_dim(h, c)?;
        g += &dissipator_super(c);
    }
    Ok(g)
}

// Pade coefficients b_0..b_m for the [m/m] approximant of exp.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error thresholds on ||A||_1 for unit roundoff in double precision.
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

/// `exp(S t)` by scaling and squaring with a diagonal Pade approximant.
pub fn matrix_exponential(s: &SuperOperator, t: f64) -> Result<SuperOperator> {
    if !t.is_finite() || s.matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let matrix = expm(&(&s.matrix * C64::new(t, 0.0)))?;
    Ok(SuperOperator { dim: s.dim, matrix })
}

/// Matrix exponential of an arbitrary square complex matrix.
pub fn expm(a: &Array2<C64>) -> Result<Array2<C64>> {
    let n = a.nrows();
    let id: Array2<C64> = Array2::eye(n);
    let norm = norm1(a);
    if norm == 0.0 {
        return Ok(id);
    }
    for (theta, coeffs) in [
        (THETA3, &PADE3[..]),
        (THETA5, &PADE5[..]),
        (THETA7, &PADE7[..]),
        (THETA9, &PADE9[..]),
    ] {
        if norm <= theta {
            let (u, v) = pade_low(a, &id, coeffs);
            return pade_solve(&u, &v);
        }
    }
    let squarings = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scaled = a * C64::new(2f64.powi(-squarings), 0.0);
    let (u, v) = pade13(&scaled, &id);
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..squarings {
        r = r.dot(&r);
    }
    Ok(r)
}

fn pade_low(a: &Array2<C64>, id: &Array2<C64>, b: &[f64]) -> (Array2<C64>, Array2<C64>) {
    let a2 = a.dot(a);
    let mut powers = vec![id.clone(), a2.clone()];
    while powers.len() < b.len() / 2 {
        let next = powers.last().expect("nonempty").dot(&a2);
        powers.push(next);
    }
    let mut u_inner = Array2::zeros(a.dim());
    let mut v = Array2::zeros(a.dim());
    for (k, p) in powers.iter().enumerate() {
        u_inner.scaled_add(C64::new(b[2 * k + 1], 0.0), p);
        v.scaled_add(C64::new(b[2 * k], 0.0), p);
    }
    (a.dot(&u_inner), v)
}

fn pade13(a: &Array2<C64>, id: &Array2<C64>) -> (Array2<C64>, Array2<C64>) {
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let a2 = a.dot(a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let u_hi = &a6 * b(13) + &a4 * b(11) + &a2 * b(9);
    let u_inner = a6.dot(&u_hi) + &a6 * b(7) + &a4 * b(5) + &a2 * b(3) + id * b(1);
    let u = a.dot(&u_inner);
    let v_hi = &a6 * b(12) + &a4 * b(10) + &a2 * b(8);
    let v = a6.dot(&v_hi) + &a6 * b(6) + &a4 * b(4) + &a2 * b(2) + id * b(0);
    (u, v)
}

/// Solve `(V - U) X = V + U`.
fn pade_solve(u: &Array2<C64>, v: &Array2<C64>) -> Result<Array2<C64>> {
    let n = u.nrows();
    let p = to_nalgebra(&(v - u));
    let q = to_nalgebra(&(v + u));
    let x = p
        .lu()
        .solve(&q)
        .ok_or(Error::Singular("Pade denominator"))?;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| x[(i, j)]))
}

fn to_nalgebra(a: &Array2<C64>) -> DMatrix<C64> {
    let (r, c) = a.dim();
    DMatrix::from_fn(r, c, |i, j| a[[i, j]])
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(a: &Array2<C64>) -> Vec<f64> {
    let mut ev: Vec<f64> = to_nalgebra(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn norm1(a: &Array2<C64>) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}
