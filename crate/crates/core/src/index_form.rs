//! Galerkin discretization of the index form on H_R with piecewise-linear
//! elements, its Morse counts, spectral flow in s and kernel lifts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{assemble_b, CoefficientPath};
use crate::linalg::*;
use crate::symplectic::{j_matrix, BoundaryCondition};

pub const QUADRATURE_POINTS: usize = 3;
pub const FIRST_MESH: usize = 64;
pub const MAX_MESH: usize = 1 << 12;

/// Hat functions on a uniform mesh of [0, T]: interior nodes times C^n plus
/// one function v·h_0 + w·h_N per orthonormal basis vector (v, w) of R.
#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    pub n: usize,
    pub t_end: f64,
    pub elements: usize,
    pub bc: BoundaryCondition,
}

impl GalerkinSpace {
    pub fn new(n: usize, t_end: f64, elements: usize, bc: &BoundaryCondition) -> Result<Self> {
        if elements < 2 {
            return Err(Error::contract("a Galerkin mesh needs at least two elements"));
        }
        if bc.n != n {
            return Err(Error::contract(format!("boundary condition is for n = {}, coefficients have n = {n}", bc.n)));
        }
        if !(t_end > 0.0) {
            return Err(Error::input("time horizon must be positive"));
        }
        Ok(Self { n, t_end, elements, bc: bc.clone() })
    }

    pub fn h(&self) -> f64 {
        self.t_end / self.elements as f64
    }

    pub fn border_dim(&self) -> usize {
        self.bc.dim_r()
    }

    pub fn dim(&self) -> usize {
        self.n * (self.elements - 1) + self.border_dim()
    }

    fn v(&self) -> CMatrix {
        self.bc.r.rows(0, self.n).into_owned()
    }

    fn w(&self) -> CMatrix {
        self.bc.r.rows(self.n, self.n).into_owned()
    }

    /// Values at the N + 1 nodes of the function with coefficients `c`.
    pub fn nodal_values(&self, c: &CVector) -> Vec<CVector> {
        let (n, m) = (self.n, self.elements);
        let border = c.rows(n * (m - 1), self.border_dim()).into_owned();
        let mut out = Vec::with_capacity(m + 1);
        out.push(self.v() * &border);
        for i in 0..m - 1 {
            out.push(c.rows(i * n, n).into_owned());
        }
        out.push(self.w() * &border);
        out
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.elements).map(|k| self.t_end * k as f64 / self.elements as f64).collect()
    }
}

/// Hermitian matrix with block-tridiagonal interior (n×n blocks) and a dense
/// border coupled to every interior block.
#[derive(Debug, Clone)]
pub struct BlockArrow {
    pub n: usize,
    pub k: usize,
    pub diag: Vec<CMatrix>,
    /// off[i] is the block in row i + 1, column i.
    pub off: Vec<CMatrix>,
    /// c[i] is the n×k coupling of interior block i to the border.
    pub c: Vec<CMatrix>,
    pub border: CMatrix,
}

fn sym_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let e = hermitian_part(m).symmetric_eigen();
    (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
}

impl BlockArrow {
    fn zero(n: usize, blocks: usize, k: usize) -> Self {
        Self {
            n,
            k,
            diag: vec![zeros(n, n); blocks],
            off: vec![zeros(n, n); blocks.saturating_sub(1)],
            c: vec![zeros(n, k); blocks],
            border: zeros(k, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.n * self.diag.len() + self.k
    }

    /// self + α·other.
    pub fn axpy(&self, alpha: f64, other: &BlockArrow) -> BlockArrow {
        let a = re(alpha);
        let zip = |x: &[CMatrix], y: &[CMatrix]| x.iter().zip(y).map(|(p, q)| p + q * a).collect::<Vec<_>>();
        BlockArrow {
            n: self.n,
            k: self.k,
            diag: zip(&self.diag, &other.diag),
            off: zip(&self.off, &other.off),
            c: zip(&self.c, &other.c),
            border: &self.border + &other.border * a,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let (n, m) = (self.n, self.diag.len());
        let d = self.dim();
        let mut out = zeros(d, d);
        let b0 = n * m;
        for i in 0..m {
            out.view_mut((i * n, i * n), (n, n)).copy_from(&self.diag[i]);
            out.view_mut((i * n, b0), (n, self.k)).copy_from(&self.c[i]);
            out.view_mut((b0, i * n), (self.k, n)).copy_from(&self.c[i].adjoint());
        }
        for i in 0..self.off.len() {
            out.view_mut(((i + 1) * n, i * n), (n, n)).copy_from(&self.off[i]);
            out.view_mut((i * n, (i + 1) * n), (n, n)).copy_from(&self.off[i].adjoint());
        }
        out.view_mut((b0, b0), (self.k, self.k)).copy_from(&self.border);
        out
    }

    /// Number of negative eigenvalues by block LDL* elimination of the
    /// interior followed by the border Schur complement.
    pub fn negative_inertia(&self) -> usize {
        let mut count = 0;
        let mut schur = self.border.clone();
        let mut dinv_prev = zeros(self.n, self.n);
        let mut y_prev = zeros(self.n, self.k);
        for i in 0..self.diag.len() {
            let mut d = self.diag[i].clone();
            let mut y = self.c[i].clone();
            if i > 0 {
                let l = &self.off[i - 1];
                let ld = l * &dinv_prev;
                d -= &ld * l.adjoint();
                y -= &ld * &y_prev;
            }
            let (ev, v) = sym_eigen(&d);
            count += ev.iter().filter(|&&x| x < 0.0).count();
            let scale = ev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let floor = 1e-14 * scale + f64::MIN_POSITIVE;
            let inv_ev: Vec<f64> = ev.iter().map(|&x| if x.abs() < floor { 1.0 / floor.copysign(x) } else { 1.0 / x }).collect();
            let inv = &v * from_real_diag(&inv_ev) * v.adjoint();
            schur -= y.adjoint() * &inv * &y;
            dinv_prev = inv;
            y_prev = y;
        }
        if self.k > 0 {
            count += sym_eigen(&schur).0.iter().filter(|&&x| x < 0.0).count();
        }
        count
    }
}

/// A_s and the H¹ Gram matrix G on a Galerkin space.
#[derive(Debug, Clone)]
pub struct DiscreteForm {
    pub s: f64,
    pub elements: usize,
    pub quadrature_points: usize,
    pub a: BlockArrow,
    pub g: BlockArrow,
    /// Generalized eigenvalues with |λ| ≤ zero_threshold count as kernel.
    pub zero_threshold: f64,
}

impl DiscreteForm {
    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn dense_a(&self) -> CMatrix {
        self.a.to_dense()
    }

    pub fn dense_g(&self) -> CMatrix {
        self.g.to_dense()
    }

    /// #{λ < μ} for the pencil (A, G).
    pub fn count_below(&self, mu: f64) -> usize {
        self.a.axpy(-mu, &self.g).negative_inertia()
    }
}

/// Zero threshold for generalized eigenvalues: discretization error of a
/// continuum kernel scales like h²·(coefficient size).
pub fn zero_threshold(h: f64, kappa: f64, pol: &TolerancePolicy) -> f64 {
    pol.eig_zero_tol.max(h * h * kappa)
}

fn gauss_points() -> [(f64, f64); 3] {
    let d = 0.5 * 0.6f64.sqrt();
    [(0.5 - d, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + d, 5.0 / 18.0)]
}

/// Local 2×2-block element matrices (K, G) on [t0, t0 + h].
fn element(coeffs: &CoefficientPath, s: f64, t0: f64, h: f64) -> [[CMatrix; 2]; 2] {
    let n = coeffs.n;
    let dh = [-1.0 / h, 1.0 / h];
    let mut k: [[CMatrix; 2]; 2] = std::array::from_fn(|_| std::array::from_fn(|_| zeros(n, n)));
    for (xi, w) in gauss_points() {
        let c = coeffs.at(s, t0 + xi * h);
        let qs = c.q.adjoint();
        let hv = [1.0 - xi, xi];
        for l in 0..2 {
            for m in 0..2 {
                let blk = &c.p * re(dh[l] * dh[m]) + &c.q * re(dh[l] * hv[m]) + &qs * re(hv[l] * dh[m]) + &c.r * re(hv[l] * hv[m]);
                k[l][m] += blk * re(w * h);
            }
        }
    }
    k
}

fn gram_element(n: usize, h: f64) -> [[CMatrix; 2]; 2] {
    let id = identity(n);
    let mass = [[2.0, 1.0], [1.0, 2.0]];
    let stiff = [[1.0, -1.0], [-1.0, 1.0]];
    std::array::from_fn(|l| std::array::from_fn(|m| &id * re(h * mass[l][m] / 6.0 + stiff[l][m] / h)))
}

fn scatter(arrow: &mut BlockArrow, e: usize, elements: usize, loc: &[[CMatrix; 2]; 2], v: &CMatrix, w: &CMatrix) {
    let last = elements - 1;
    if e >= 1 {
        arrow.diag[e - 1] += &loc[0][0];
    }
    if e + 1 <= last {
        arrow.diag[e] += &loc[1][1];
    }
    if e >= 1 && e + 1 <= last {
        arrow.off[e - 1] += &loc[1][0];
    }
    if e == 0 {
        arrow.border += v.adjoint() * &loc[0][0] * v;
        arrow.c[0] += &loc[1][0] * v;
    }
    if e == last {
        arrow.border += w.adjoint() * &loc[1][1] * w;
        arrow.c[last - 1] += &loc[0][1] * w;
    }
}

fn assemble_with_kappa(coeffs: &CoefficientPath, s: f64, gal: &GalerkinSpace, kappa: f64, pol: &TolerancePolicy) -> Result<DiscreteForm> {
    let (n, m, h) = (gal.n, gal.elements, gal.h());
    let k = gal.border_dim();
    let (v, w) = (gal.v(), gal.w());
    let mut a = BlockArrow::zero(n, m - 1, k);
    let mut g = BlockArrow::zero(n, m - 1, k);
    let gloc = gram_element(n, h);
    for e in 0..m {
        let kloc = element(coeffs, s, e as f64 * h, h);
        scatter(&mut a, e, m, &kloc, &v, &w);
        scatter(&mut g, e, m, &gloc, &v, &w);
    }
    for blk in a.diag.iter().chain(std::iter::once(&a.border)) {
        if !is_finite(blk) {
            return Err(Error::numerical("assembled form has non-finite entries"));
        }
    }
    Ok(DiscreteForm { s, elements: m, quadrature_points: QUADRATURE_POINTS, a, g, zero_threshold: zero_threshold(h, kappa, pol) })
}

fn kappa(coeffs: &CoefficientPath) -> f64 {
    1.0 + coeffs.scale_bound()
}

/// (A_s)_ij = I_s(φ_j, φ_i) with 3-point Gauss quadrature per element.
pub fn assemble(coeffs: &CoefficientPath, s: f64, gal: &GalerkinSpace, pol: &TolerancePolicy) -> Result<DiscreteForm> {
    if coeffs.n != gal.n || (coeffs.t_end - gal.t_end).abs() > 1e-14 * gal.t_end {
        return Err(Error::contract("coefficients and Galerkin space disagree on n or T"));
    }
    coeffs.validate(pol)?;
    assemble_with_kappa(coeffs, s, gal, kappa(coeffs), pol)
}

/// (m⁻, m⁰, m⁺) of the pencil (A_s, G) on one mesh.
pub fn morse_index(df: &DiscreteForm) -> MorseCounts {
    let tau = df.zero_threshold;
    let m_minus = df.count_below(-tau);
    let below = df.count_below(tau);
    MorseCounts { m_minus, m_zero: below - m_minus, m_plus: df.dim() - below }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeshCount {
    pub elements: usize,
    pub m_minus: usize,
    pub m_zero: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MorseResult {
    pub m_minus: usize,
    pub m_zero: usize,
    pub meshes: Vec<MeshCount>,
}

/// Mesh refinement schedule N, 2N, 4N, … up to `max`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeshPolicy {
    pub first: usize,
    pub max: usize,
}

impl Default for MeshPolicy {
    fn default() -> Self {
        Self { first: FIRST_MESH, max: MAX_MESH }
    }
}

/// Refine N → 2N until three consecutive meshes give identical counts.
fn stabilize<T: PartialEq + Copy>(mesh: MeshPolicy, mut f: impl FnMut(usize) -> Result<T>, what: &str) -> Result<(T, Vec<(usize, T)>)> {
    let mut trace: Vec<(usize, T)> = Vec::new();
    let mut n = mesh.first.max(2);
    while n <= mesh.max.max(4 * mesh.first) {
        trace.push((n, f(n)?));
        let k = trace.len();
        if k >= 3 && trace[k - 1].1 == trace[k - 2].1 && trace[k - 2].1 == trace[k - 3].1 {
            return Ok((trace[k - 1].1, trace));
        }
        n *= 2;
    }
    Err(Error::Convergence(format!("{what} did not stabilize up to {} elements: {:?}", mesh.max, trace.iter().map(|x| x.0).collect::<Vec<_>>())))
}

/// Mesh-converged Morse index and nullity of I_s for positive definite p.
pub fn morse_index_converged(coeffs: &CoefficientPath, s: f64, bc: &BoundaryCondition, pol: &TolerancePolicy) -> Result<MorseResult> {
    morse_index_converged_with(coeffs, s, bc, pol, MeshPolicy::default())
}

pub fn morse_index_converged_with(coeffs: &CoefficientPath, s: f64, bc: &BoundaryCondition, pol: &TolerancePolicy, mesh: MeshPolicy) -> Result<MorseResult> {
    coeffs.validate(pol)?;
    if !coeffs.p_positive(pol)? {
        return Err(Error::contract("Morse index is only reported for positive definite p"));
    }
    let kap = kappa(coeffs);
    let ((m_minus, m_zero), trace) = stabilize(
        mesh,
        |m| {
            let gal = GalerkinSpace::new(coeffs.n, coeffs.t_end, m, bc)?;
            let c = morse_index(&assemble_with_kappa(coeffs, s, &gal, kap, pol)?);
            Ok((c.m_minus, c.m_zero))
        },
        "Morse index",
    )?;
    let meshes = trace.into_iter().map(|(e, (a, b))| MeshCount { elements: e, m_minus: a, m_zero: b }).collect();
    Ok(MorseResult { m_minus, m_zero, meshes })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralFlowS {
    /// −sf{I_s; 0 ≤ s ≤ 1}.
    pub value: i64,
    pub meshes: Vec<(usize, i64)>,
}

/// −sf of s ↦ (A_s, G) with the δ-shift δ = zero threshold:
/// sf = ν⁻(A_0 + δG) − ν⁻(A_1 + δG).
pub fn spectral_flow_s(coeffs: &CoefficientPath, bc: &BoundaryCondition, pol: &TolerancePolicy) -> Result<SpectralFlowS> {
    spectral_flow_s_with(coeffs, bc, pol, MeshPolicy::default())
}

pub fn spectral_flow_s_with(coeffs: &CoefficientPath, bc: &BoundaryCondition, pol: &TolerancePolicy, mesh: MeshPolicy) -> Result<SpectralFlowS> {
    coeffs.validate(pol)?;
    if !coeffs.p_positive(pol)? && !coeffs.p_is_s_independent() {
        return Err(Error::contract("an indefinite p must not depend on s"));
    }
    let kap = kappa(coeffs);
    let (value, trace) = stabilize(
        mesh,
        |m| {
            let gal = GalerkinSpace::new(coeffs.n, coeffs.t_end, m, bc)?;
            let a0 = assemble_with_kappa(coeffs, 0.0, &gal, kap, pol)?;
            let a1 = assemble_with_kappa(coeffs, 1.0, &gal, kap, pol)?;
            let d = a0.zero_threshold;
            Ok(a1.count_below(-d) as i64 - a0.count_below(-d) as i64)
        },
        "spectral flow",
    )?;
    Ok(SpectralFlowS { value, meshes: trace })
}

/// Dense generalized eigenpairs of (A, G), ascending, with G-orthonormal
/// eigenvectors in Galerkin coordinates.
pub fn pencil_eigen(df: &DiscreteForm) -> Result<(Vec<f64>, CMatrix)> {
    let (l_inv, m) = reduced(df)?;
    let (ev, vecs) = sym_eigen(&m);
    let mut order: Vec<usize> = (0..ev.len()).collect();
    order.sort_by(|&i, &j| ev[i].total_cmp(&ev[j]));
    let values = order.iter().map(|&i| ev[i]).collect();
    let x = l_inv.adjoint() * select_columns(&vecs, &order);
    Ok((values, x))
}

/// (L⁻¹, L⁻¹AL⁻*) for G = LL*.
fn reduced(df: &DiscreteForm) -> Result<(CMatrix, CMatrix)> {
    let g = df.dense_g();
    let d = g.nrows();
    let chol = g.cholesky().ok_or_else(|| Error::numerical("Gram matrix is not positive definite"))?;
    let l_inv = chol.l().solve_lower_triangular(&identity(d)).ok_or_else(|| Error::numerical("singular Cholesky factor"))?;
    let m = &l_inv * df.dense_a() * l_inv.adjoint();
    Ok((l_inv, hermitian_part(&m)))
}

/// The reduced Hermitian matrix G^{-1/2}-congruent to A (via Cholesky).
pub fn reduced_matrix(df: &DiscreteForm) -> Result<CMatrix> {
    Ok(reduced(df)?.1)
}

/// The `count` lowest generalized eigenvalues of (A_s, G) at `samples + 1`
/// equally spaced s on one mesh.
pub fn eigenflow(coeffs: &CoefficientPath, bc: &BoundaryCondition, elements: usize, samples: usize, count: usize, pol: &TolerancePolicy) -> Result<Vec<(f64, Vec<f64>)>> {
    let gal = GalerkinSpace::new(coeffs.n, coeffs.t_end, elements, bc)?;
    let samples = samples.max(1);
    (0..=samples)
        .map(|k| {
            let s = k as f64 / samples as f64;
            let (ev, _) = pencil_eigen(&assemble(coeffs, s, &gal, pol)?)?;
            Ok((s, ev.into_iter().take(count).collect()))
        })
        .collect()
}

/// Basis of the numerical kernel of the pencil.
pub fn kernel_vectors(df: &DiscreteForm) -> Result<CMatrix> {
    let (ev, x) = pencil_eigen(df)?;
    let cols: Vec<usize> = (0..ev.len()).filter(|&i| ev[i].abs() <= df.zero_threshold).collect();
    Ok(select_columns(&x, &cols))
}

#[derive(Debug, Clone)]
pub struct KernelLift {
    /// Element midpoints.
    pub times: Vec<f64>,
    /// u = (pẋ + qx, x) at the midpoints.
    pub u: Vec<CVector>,
    /// Relative residual of u̇ = J b_s u across interior nodes.
    pub residual: f64,
    /// Mesh-dependent bound the residual is expected to respect.
    pub bound: f64,
}

impl KernelLift {
    pub fn consistent(&self) -> bool {
        self.residual <= self.bound
    }
}

/// Lift a kernel vector x to u_{b_s}(x) = (p_s ẋ + q_s x, x).
pub fn kernel_lift(gal: &GalerkinSpace, x: &CVector, coeffs: &CoefficientPath, s: f64) -> Result<KernelLift> {
    if x.len() != gal.dim() {
        return Err(Error::contract(format!("kernel vector has length {}, expected {}", x.len(), gal.dim())));
    }
    let n = gal.n;
    let h = gal.h();
    let nodal = gal.nodal_values(x);
    let mut times = Vec::with_capacity(gal.elements);
    let mut u = Vec::with_capacity(gal.elements);
    for e in 0..gal.elements {
        let t = (e as f64 + 0.5) * h;
        let c = coeffs.at(s, t);
        let dx = (&nodal[e + 1] - &nodal[e]) * re(1.0 / h);
        let xm = (&nodal[e + 1] + &nodal[e]) * re(0.5);
        let y = &c.p * &dx + &c.q * &xm;
        let mut v = CVector::zeros(2 * n);
        v.rows_mut(0, n).copy_from(&y);
        v.rows_mut(n, n).copy_from(&xm);
        times.push(t);
        u.push(v);
    }
    let j = j_matrix(n);
    let umax = u.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut res: f64 = 0.0;
    for e in 1..u.len() {
        let t = e as f64 * h;
        let b = assemble_b(coeffs, s, t)?;
        let r = (&u[e] - &u[e - 1]) * re(1.0 / h) - &j * b * (&u[e] + &u[e - 1]) * re(0.5);
        res = res.max(r.norm());
    }
    let residual = if umax > 0.0 { res / umax } else { 0.0 };
    let kap = kappa(coeffs);
    Ok(KernelLift { times, u, residual, bound: 10.0 * h * kap * kap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{fundamental_solution, frame_change_coeffs, FramePath, MatrixFunction, SolverOptions};
    use crate::maslov::graph_nullity;
    use crate::spectral_flow::{spectral_flow, HermitianFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn pol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn scalar(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, re(x))
    }

    fn jacobi(t_end: f64) -> CoefficientPath {
        CoefficientPath::constant(scalar(1.0), scalar(0.0), scalar(-1.0), t_end).unwrap()
    }

    fn rand_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn stiffness_closed_form() {
        let cp = CoefficientPath::constant(scalar(1.0), scalar(0.0), scalar(0.0), 1.0).unwrap();
        let gal = GalerkinSpace::new(1, 1.0, 4, &BoundaryCondition::dirichlet(1)).unwrap();
        let df = assemble(&cp, 1.0, &gal, &pol()).unwrap();
        let a = df.dense_a();
        let h = 0.25;
        assert_eq!(a.shape(), (3, 3));
        for i in 0..3usize {
            for j in 0..3 {
                let want = if i == j { 2.0 / h } else if i.abs_diff(j) == 1 { -1.0 / h } else { 0.0 };
                assert!((a[(i, j)] - re(want)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn element_integrals_closed_form() {
        // Constant p, q, r on one element of width h.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2;
        let p = hermitian_part(&rand_matrix(&mut rng, n));
        let q = rand_matrix(&mut rng, n);
        let r = hermitian_part(&rand_matrix(&mut rng, n));
        let cp = CoefficientPath::constant(p.clone(), q.clone(), r.clone(), 1.0).unwrap();
        let h = 0.3;
        let k = element(&cp, 1.0, 0.1, h);
        let mass = [[2.0, 1.0], [1.0, 2.0]];
        let dd = [[1.0, -1.0], [-1.0, 1.0]];
        // ∫ḣ_l h_m over the element: rows l, columns m.
        let dh_h = [[-0.5, -0.5], [0.5, 0.5]];
        for l in 0..2 {
            for m in 0..2 {
                let want = &p * re(dd[l][m] / h) + &q * re(dh_h[l][m]) + q.adjoint() * re(dh_h[m][l]) + &r * re(h * mass[l][m] / 6.0);
                assert!((&k[l][m] - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn nonnegative_without_lower_order_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_matrix(&mut rng, 2);
        let p = &x * x.adjoint() + identity(2);
        let cp = CoefficientPath::constant(p, zeros(2, 2), zeros(2, 2), 2.0).unwrap();
        let bc = BoundaryCondition::periodic(2);
        let gal = GalerkinSpace::new(2, 2.0, 16, &bc).unwrap();
        let df = assemble(&cp, 1.0, &gal, &pol()).unwrap();
        let c = morse_index(&df);
        assert_eq!(c.m_minus, 0);
        // Constants satisfy periodic conditions and are in the kernel.
        assert_eq!(c.m_zero, 2);
    }

    #[test]
    fn arrow_inertia_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = rng.random_range(1..=3);
            let p = identity(n) + hermitian_part(&rand_matrix(&mut rng, n)) * re(0.3);
            let q = rand_matrix(&mut rng, n);
            let r = hermitian_part(&rand_matrix(&mut rng, n)) * re(20.0);
            let cp = CoefficientPath::constant(p, q, r, 1.5).unwrap();
            let k = rng.random_range(0..=2 * n);
            let span = CMatrix::from_fn(2 * n, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let bc = BoundaryCondition::from_span(&span, n, &pol()).unwrap();
            let gal = GalerkinSpace::new(n, 1.5, 12, &bc).unwrap();
            let df = assemble(&cp, 1.0, &gal, &pol()).unwrap();
            let (ev, _) = pencil_eigen(&df).unwrap();
            for mu in [-0.7, 0.0, 0.3] {
                let dense = ev.iter().filter(|&&x| x < mu).count();
                assert_eq!(df.count_below(mu), dense);
            }
        }
    }

    #[test]
    fn jacobi_morse_examples() {
        let d = BoundaryCondition::dirichlet(1);
        assert_eq!(morse_index_converged(&jacobi(4.0), 1.0, &d, &pol()).unwrap().m_minus, 1);
        assert_eq!(morse_index_converged(&jacobi(2.0), 1.0, &d, &pol()).unwrap().m_minus, 0);
        let f = BoundaryCondition::free(1);
        let r = morse_index_converged(&jacobi(2.0), 1.0, &f, &pol()).unwrap();
        assert_eq!((r.m_minus, r.m_zero), (1, 0));
    }

    #[test]
    fn jacobi_kernel_at_pi() {
        let d = BoundaryCondition::dirichlet(1);
        let r = morse_index_converged(&jacobi(PI), 1.0, &d, &pol()).unwrap();
        assert_eq!((r.m_minus, r.m_zero), (0, 1));
        let gal = GalerkinSpace::new(1, PI, 256, &d).unwrap();
        let df = assemble(&jacobi(PI), 1.0, &gal, &pol()).unwrap();
        let (ev, _) = pencil_eigen(&df).unwrap();
        assert!(ev[0].abs() < 1e-4);
    }

    #[test]
    fn kernel_lift_is_a_jacobi_field() {
        let d = BoundaryCondition::dirichlet(1);
        let cp = jacobi(PI);
        let gal = GalerkinSpace::new(1, PI, 256, &d).unwrap();
        let df = assemble(&cp, 1.0, &gal, &pol()).unwrap();
        let ker = kernel_vectors(&df).unwrap();
        assert_eq!(ker.ncols(), 1);
        let lift = kernel_lift(&gal, &ker.column(0).into_owned(), &cp, 1.0).unwrap();
        assert!(lift.consistent(), "{} > {}", lift.residual, lift.bound);
        // u(t) ∝ (cos t, sin t).
        let scale = lift.u[0][1] / re(lift.times[0].sin());
        for (t, u) in lift.times.iter().zip(&lift.u) {
            let want = CVector::from_vec(vec![re(t.cos()), re(t.sin())]) * scale;
            assert!((u - want).norm() < 1e-3 * scale.norm(), "t = {t}");
        }
        let gamma = fundamental_solution(&cp, 1.0, SolverOptions::default()).unwrap();
        let u0 = gamma.eval(lift.times[0]).try_inverse().unwrap() * &lift.u[0];
        for (t, u) in lift.times.iter().zip(&lift.u).step_by(16) {
            assert!((gamma.eval(*t) * &u0 - u).norm() < 1e-3 * scale.norm());
        }
    }

    #[test]
    fn no_kernel_gives_empty_lift() {
        let gal = GalerkinSpace::new(1, 2.0, 64, &BoundaryCondition::dirichlet(1)).unwrap();
        let df = assemble(&jacobi(2.0), 1.0, &gal, &pol()).unwrap();
        assert_eq!(kernel_vectors(&df).unwrap().ncols(), 0);
    }

    #[test]
    fn periodic_kernel_matches_hamiltonian_side() {
        let bc = BoundaryCondition::periodic(1);
        let cp = jacobi(2.0 * PI);
        let r = morse_index_converged(&cp, 1.0, &bc, &pol()).unwrap();
        assert_eq!(r.m_zero, 2);
        let gamma = fundamental_solution(&cp, 1.0, SolverOptions::default()).unwrap();
        assert_eq!(graph_nullity(gamma.end_value(), &bc.w, &pol()), 2);
    }

    #[test]
    fn spectral_flow_examples() {
        let d = BoundaryCondition::dirichlet(1);
        assert_eq!(spectral_flow_s(&jacobi(4.0), &d, &pol()).unwrap().value, 1);
        let free = CoefficientPath::constant(scalar(1.0), scalar(0.0), scalar(0.0), 4.0).unwrap();
        assert_eq!(spectral_flow_s(&free, &d, &pol()).unwrap().value, 0);
    }

    #[test]
    fn spectral_flow_positive_p_shortcut() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..3 {
            let q = MatrixFunction::Poly(vec![rand_matrix(&mut rng, 2), rand_matrix(&mut rng, 2)]);
            let r = MatrixFunction::constant(identity(2) * re(-rng.random_range(5.0..25.0)) + hermitian_part(&rand_matrix(&mut rng, 2)) * re(5.0));
            let cp = CoefficientPath::new(2, 1.0, MatrixFunction::constant(identity(2)), q, r).unwrap();
            let bc = BoundaryCondition::periodic(2);
            let sf = spectral_flow_s(&cp, &bc, &pol()).unwrap().value;
            let m1 = morse_index_converged(&cp, 1.0, &bc, &pol()).unwrap().m_minus as i64;
            let m0 = morse_index_converged(&cp, 0.0, &bc, &pol()).unwrap().m_minus as i64;
            assert_eq!(sf, m1 - m0);
        }
    }

    #[test]
    fn dense_reduction_route_agrees() {
        // Coarse mesh: spectral flow of the reduced Hermitian family.
        let cp = jacobi(4.0);
        let bc = BoundaryCondition::dirichlet(1);
        let gal = GalerkinSpace::new(1, 4.0, 32, &bc).unwrap();
        let cp2 = cp.clone();
        let gal2 = gal.clone();
        let fam = HermitianFamily::from_fn(gal.dim(), 8, move |s| reduced_matrix(&assemble(&cp2, s, &gal2, &pol()).unwrap()).unwrap(), &pol()).unwrap();
        let sf = spectral_flow(&fam, &pol()).unwrap().sf;
        let a0 = assemble(&cp, 0.0, &gal, &pol()).unwrap();
        let a1 = assemble(&cp, 1.0, &gal, &pol()).unwrap();
        let d = a0.zero_threshold;
        assert_eq!(-sf, a1.count_below(-d) as i64 - a0.count_below(-d) as i64);
        assert_eq!(-sf, 1);
    }

    #[test]
    fn mesh_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..4 {
            let r = identity(2) * re(-rng.random_range(5.0..25.0)) + hermitian_part(&rand_matrix(&mut rng, 2)) * re(5.0);
            let cp = CoefficientPath::constant(identity(2), rand_matrix(&mut rng, 2), r, 1.0).unwrap();
            let bc = BoundaryCondition::from_span(&CMatrix::from_fn(4, 2, |_, _| c(rng.random_range(-1.0..1.0), 0.0)), 2, &pol()).unwrap();
            let mut prev = 0;
            for m in [8, 16, 32, 64, 128] {
                let gal = GalerkinSpace::new(2, 1.0, m, &bc).unwrap();
                let c = morse_index(&assemble(&cp, 1.0, &gal, &pol()).unwrap());
                assert!(c.m_minus >= prev);
                prev = c.m_minus;
            }
        }
    }

    #[test]
    fn frame_change_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n = 2;
        let q = rand_matrix(&mut rng, n);
        let r = identity(n) * re(-12.0) + hermitian_part(&rand_matrix(&mut rng, n)) * re(4.0);
        let cp = CoefficientPath::constant(identity(n), q, r, 1.0).unwrap();
        let a0 = identity(n) + rand_matrix(&mut rng, n) * re(0.2);
        let a1 = rand_matrix(&mut rng, n) * re(0.3);
        let frame = FramePath::new(MatrixFunction::Poly(vec![a0.clone(), a1.clone()]), 1.0, &pol()).unwrap();
        let cp2 = frame_change_coeffs(&cp, &frame).unwrap();
        let bc = BoundaryCondition::from_span(&CMatrix::from_fn(4, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))), n, &pol()).unwrap();
        // R′ = diag(a(0), a(T))⁻¹ R.
        let dinv = block_diag(&a0, &(&a0 + &a1)).try_inverse().unwrap();
        let bc2 = BoundaryCondition::from_span(&(dinv * &bc.r), n, &pol()).unwrap();
        let m = morse_index_converged(&cp, 1.0, &bc, &pol()).unwrap();
        let m2 = morse_index_converged(&cp2, 1.0, &bc2, &pol()).unwrap();
        assert_eq!((m.m_minus, m.m_zero), (m2.m_minus, m2.m_zero));
    }

    #[test]
    fn indefinite_p_morse_index_is_refused() {
        let cp = CoefficientPath::constant(scalar(-1.0), scalar(0.0), scalar(1.0), 1.0).unwrap();
        assert!(morse_index_converged(&cp, 1.0, &BoundaryCondition::dirichlet(1), &pol()).unwrap_err().is_input());
        assert!(spectral_flow_s(&cp, &BoundaryCondition::dirichlet(1), &pol()).is_ok());
    }
}
