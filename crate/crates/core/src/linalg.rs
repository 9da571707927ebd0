//! Dense complex matrix primitives with a uniform tolerance policy.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TolerancePolicy {
    pub rank_tol: f64,
    pub eig_zero_tol: f64,
    pub residual_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self { rank_tol: 1e-8, eig_zero_tol: 1e-7, residual_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MorseCounts {
    pub m_minus: usize,
    pub m_zero: usize,
    pub m_plus: usize,
}

impl MorseCounts {
    pub fn signature(&self) -> i64 {
        self.m_plus as i64 - self.m_minus as i64
    }

    pub fn dim(&self) -> usize {
        self.m_minus + self.m_zero + self.m_plus
    }
}

/// Spectral norm.
pub fn norm2(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Frobenius norm, used where any consistent norm will do.
pub fn normf(a: &CMatrix) -> f64 {
    a.norm()
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMatrix {
    CMatrix::zeros(r, c)
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * re(0.5)
}

pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut m = zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    m
}

/// Stack `a` on top of `b`.
pub fn vstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.ncols(), b.ncols());
    let mut m = zeros(a.nrows() + b.nrows(), a.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    m
}

pub fn hstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut m = zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

pub fn from_real_diag(d: &[f64]) -> CMatrix {
    let mut m = zeros(d.len(), d.len());
    for (i, &x) in d.iter().enumerate() {
        m[(i, i)] = re(x);
    }
    m
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn inverse(a: &CMatrix) -> Result<CMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::contract("inverse of a non-square matrix"));
    }
    a.clone()
        .lu()
        .try_inverse()
        .filter(is_finite)
        .ok_or_else(|| Error::numerical("matrix inverse failed (singular matrix)"))
}

pub fn smallest_singular_value(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.min()
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

fn check_hermitian(a: &CMatrix, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::contract(format!("expected a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if !is_finite(a) {
        return Err(Error::contract("matrix has non-finite entries"));
    }
    let scale = 1.0 + a.norm();
    let defect = hermitian_defect(a);
    if defect > tol * scale {
        return Err(Error::contract(format!("matrix is not Hermitian (defect {defect:.3e})")));
    }
    Ok(())
}

pub fn hermitian_eigen(a: &CMatrix, pol: &TolerancePolicy) -> Result<HermitianEigen> {
    check_hermitian(a, pol.residual_tol)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: zeros(0, 0) });
    }
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    Ok(HermitianEigen { values, vectors })
}

pub fn hermitian_eigenvalues(a: &CMatrix, pol: &TolerancePolicy) -> Result<Vec<f64>> {
    check_hermitian(a, pol.residual_tol)?;
    if a.nrows() == 0 {
        return Ok(vec![]);
    }
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn counts_from_values(values: &[f64], zero_tol: f64) -> MorseCounts {
    let mut m = MorseCounts::default();
    for &v in values {
        if v < -zero_tol {
            m.m_minus += 1;
        } else if v > zero_tol {
            m.m_plus += 1;
        } else {
            m.m_zero += 1;
        }
    }
    m
}

pub fn morse_counts(a: &CMatrix, pol: &TolerancePolicy) -> Result<MorseCounts> {
    Ok(counts_from_values(&hermitian_eigenvalues(a, pol)?, pol.eig_zero_tol))
}

/// Full singular system of `a`: values descending, with a complete set of
/// right singular vectors (columns of `v`, size cols×cols).
pub(crate) struct FullSvd {
    pub values: Vec<f64>,
    pub v: CMatrix,
}

pub(crate) fn full_svd(a: &CMatrix) -> FullSvd {
    let (r, cols) = a.shape();
    if cols == 0 {
        return FullSvd { values: vec![], v: zeros(0, 0) };
    }
    // Pad wide matrices with zero rows so the thin SVD returns all of V.
    let padded = if r < cols {
        let mut p = zeros(cols, cols);
        p.view_mut((0, 0), (r, cols)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = zeros(cols, cols);
    for (k, &i) in order.iter().enumerate() {
        v.set_column(k, &vt.row(i).adjoint());
    }
    FullSvd { values, v }
}

/// Right singular vectors whose singular value is at most `tol` (absolute).
pub(crate) fn null_space_abs(a: &CMatrix, tol: f64) -> CMatrix {
    let svd = full_svd(a);
    let cols: Vec<usize> = (0..svd.values.len()).filter(|&i| svd.values[i] <= tol).collect();
    select_columns(&svd.v, &cols)
}

pub fn select_columns(a: &CMatrix, cols: &[usize]) -> CMatrix {
    let mut m = zeros(a.nrows(), cols.len());
    for (k, &j) in cols.iter().enumerate() {
        m.set_column(k, &a.column(j));
    }
    m
}

pub fn kernel_basis(a: &CMatrix, pol: &TolerancePolicy) -> CMatrix {
    let svd = full_svd(a);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let thr = pol.rank_tol * smax;
    let cols: Vec<usize> = (0..svd.values.len()).filter(|&i| svd.values[i] <= thr).collect();
    select_columns(&svd.v, &cols)
}

pub fn rank(a: &CMatrix, pol: &TolerancePolicy) -> usize {
    a.ncols() - kernel_basis(a, pol).ncols()
}

/// Orthonormal basis for the span of the columns, with numerical rank
/// decided relative to the largest singular value.
pub fn orthonormalize(a: &CMatrix, pol: &TolerancePolicy) -> CMatrix {
    let (r, cols) = a.shape();
    if cols == 0 || r == 0 {
        return zeros(r, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > pol.rank_tol * smax)
        .collect();
    select_columns(&u, &keep)
}

/// Orthonormal complement of the span of an orthonormal frame.
pub fn orth_complement(f: &CMatrix) -> CMatrix {
    let d = f.nrows();
    let p = identity(d) - f * f.adjoint();
    let eig = hermitian_part(&p).symmetric_eigen();
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    let out = select_columns(&eig.eigenvectors, &keep);
    // Re-orthonormalize to clean up the clustered eigenvalue 1.
    if out.ncols() == 0 {
        out
    } else {
        out.qr().q()
    }
}

/// Intersection of the spans of two orthonormal frames. Directions are kept
/// when the sine of their principal angle is at most `rank_tol`.
pub fn subspace_intersection(f1: &CMatrix, f2: &CMatrix, pol: &TolerancePolicy) -> CMatrix {
    intersection_with_tol(f1, f2, pol.rank_tol)
}

pub(crate) fn intersection_with_tol(f1: &CMatrix, f2: &CMatrix, tol: f64) -> CMatrix {
    assert_eq!(f1.nrows(), f2.nrows());
    if f1.ncols() == 0 || f2.ncols() == 0 {
        return zeros(f1.nrows(), 0);
    }
    let resid = f1 - f2 * (f2.adjoint() * f1);
    let v = null_space_abs(&resid, tol);
    f1 * v
}

/// Sines of the principal angles between span(f1) and span(f2), ascending.
pub fn principal_sines(f1: &CMatrix, f2: &CMatrix) -> Vec<f64> {
    let resid = f1 - f2 * (f2.adjoint() * f1);
    let mut s = full_svd(&resid).values;
    s.reverse();
    s
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method).
/// Returns `assign[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return vec![];
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMatrix {
        CMatrix::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn rand_herm(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        hermitian_part(&rand_matrix(rng, n, n))
    }

    #[test]
    fn eigen_small_cases() {
        let pol = TolerancePolicy::default();
        let e = hermitian_eigen(&from_real_diag(&[1.0, 2.0]), &pol).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0]);
        let swap = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let e = hermitian_eigen(&swap, &pol).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigen_residual_random() {
        let pol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = rand_herm(&mut rng, 5);
        let e = hermitian_eigen(&a, &pol).unwrap();
        let lam = from_real_diag(&e.values);
        assert!((&a * &e.vectors - &e.vectors * lam).norm() < 1e-10);
        assert!((e.vectors.adjoint() * &e.vectors - identity(5)).norm() < 1e-10);
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let pol = TolerancePolicy::default();
        assert!(hermitian_eigen(&zeros(2, 3), &pol).is_err());
        let a = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO]);
        assert!(hermitian_eigen(&a, &pol).is_err());
    }

    #[test]
    fn morse_count_examples() {
        let pol = TolerancePolicy::default();
        let m = morse_counts(&from_real_diag(&[-1.0, 0.0, 2.0]), &pol).unwrap();
        assert_eq!((m.m_minus, m.m_zero, m.m_plus), (1, 1, 1));
        let m = morse_counts(&zeros(3, 3), &pol).unwrap();
        assert_eq!((m.m_minus, m.m_zero, m.m_plus), (0, 3, 0));
        let ones = CMatrix::from_element(2, 2, ONE);
        let m = morse_counts(&ones, &pol).unwrap();
        assert_eq!((m.m_minus, m.m_zero, m.m_plus), (0, 1, 1));
    }

    #[test]
    fn kernel_examples() {
        let pol = TolerancePolicy::default();
        assert_eq!(kernel_basis(&zeros(2, 2), &pol).ncols(), 2);
        assert_eq!(kernel_basis(&identity(3), &pol).ncols(), 0);
        let k = kernel_basis(&CMatrix::from_element(2, 2, ONE), &pol);
        assert_eq!(k.ncols(), 1);
        let v = k.column(0);
        assert!((v[0] + v[1]).norm() < 1e-12);
        assert!((v[0].norm() - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn kernel_of_wide_matrix() {
        let pol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_matrix(&mut rng, 2, 5);
        let k = kernel_basis(&a, &pol);
        assert_eq!(k.ncols(), 3);
        assert!((&a * &k).norm() < 1e-12);
    }

    #[test]
    fn intersection_examples() {
        let pol = TolerancePolicy::default();
        let e1 = CMatrix::from_column_slice(2, 1, &[ONE, ZERO]);
        assert_eq!(subspace_intersection(&e1, &e1, &pol).ncols(), 1);
        let s = 0.5f64.sqrt();
        let a = CMatrix::from_column_slice(2, 1, &[re(s), re(s)]);
        let b = CMatrix::from_column_slice(2, 1, &[re(s), re(-s)]);
        assert_eq!(subspace_intersection(&a, &b, &pol).ncols(), 0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut f1 = zeros(4, 2);
        let mut f2 = zeros(4, 2);
        f1[(0, 0)] = ONE;
        f2[(0, 0)] = ONE;
        for i in 1..4 {
            f1[(i, 1)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            f2[(i, 1)] = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let f1 = orthonormalize(&f1, &pol);
        let f2 = orthonormalize(&f2, &pol);
        let x = subspace_intersection(&f1, &f2, &pol);
        assert_eq!(x.ncols(), 1);
        assert!((x[(0, 0)].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn complement_examples() {
        let e1 = CMatrix::from_column_slice(2, 1, &[ONE, ZERO]);
        let c1 = orth_complement(&e1);
        assert_eq!(c1.ncols(), 1);
        assert!((c1[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert_eq!(orth_complement(&identity(3)).ncols(), 0);
        let pol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = orthonormalize(&rand_matrix(&mut rng, 5, 3), &pol);
        let g = orth_complement(&f);
        assert_eq!(g.ncols(), 2);
        assert!((f.adjoint() * &g).norm() < pol.residual_tol);
    }

    #[test]
    fn assignment_is_optimal_on_small_case() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        fn seeded(seed: u64, n: usize) -> (CMatrix, CMatrix) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Planted kernel so that counts are not generically trivial.
            let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            d[0] = 0.0;
            let q = rand_matrix(&mut rng, n, n).qr().q();
            let a = &q * from_real_diag(&d) * q.adjoint();
            let u = rand_matrix(&mut rng, n, n).qr().q();
            (hermitian_part(&a), u)
        }

        proptest! {
            #[test]
            fn counts_invariant_under_unitary_congruence(seed in 0u64..10_000, n in 1usize..7) {
                let pol = TolerancePolicy::default();
                let (a, u) = seeded(seed, n);
                let b = hermitian_part(&(u.adjoint() * &a * &u));
                prop_assert_eq!(morse_counts(&a, &pol).unwrap(), morse_counts(&b, &pol).unwrap());
            }

            #[test]
            fn eigen_reconstructs(seed in 0u64..10_000, n in 1usize..7) {
                let pol = TolerancePolicy::default();
                let (a, _) = seeded(seed, n);
                let e = hermitian_eigen(&a, &pol).unwrap();
                let back = &e.vectors * from_real_diag(&e.values) * e.vectors.adjoint();
                prop_assert!((back - &a).norm() <= pol.residual_tol * (1.0 + a.norm()));
            }

            #[test]
            fn rank_nullity(seed in 0u64..10_000, r in 1usize..6, k in 1usize..6, rk in 0usize..6) {
                let pol = TolerancePolicy::default();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rk = rk.min(r).min(k);
                let a = rand_matrix(&mut rng, r, rk) * rand_matrix(&mut rng, rk, k);
                let ka = kernel_basis(&a, &pol).ncols() as i64;
                let kas = kernel_basis(&a.adjoint(), &pol).ncols() as i64;
                prop_assert_eq!(ka - kas, k as i64 - r as i64);
            }

            #[test]
            fn intersection_symmetric(seed in 0u64..10_000, d in 2usize..6) {
                let pol = TolerancePolicy::default();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let shared = rand_matrix(&mut rng, d, 1);
                let a = orthonormalize(&hstack(&shared, &rand_matrix(&mut rng, d, 1)), &pol);
                let b = orthonormalize(&hstack(&shared, &rand_matrix(&mut rng, d, d / 2)), &pol);
                let x = subspace_intersection(&a, &b, &pol);
                let y = subspace_intersection(&b, &a, &pol);
                prop_assert_eq!(x.ncols(), y.ncols());
                prop_assert!(principal_sines(&x, &y).iter().all(|&s| s < 1e-8));
            }
        }
    }
}
