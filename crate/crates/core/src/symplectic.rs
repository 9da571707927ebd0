//! Symplectic spaces, Lagrangian frames with their unitary representatives,
//! and the algebra of boundary conditions R ↦ (R^⊥, R^b, W(R), S).

use crate::error::{Error, Result};
use crate::linalg::*;

/// The standard form matrix J = [[0, −I], [I, 0]] on C^{2n}.
pub fn j_matrix(n: usize) -> CMatrix {
    let mut j = zeros(2 * n, 2 * n);
    for k in 0..n {
        j[(k, n + k)] = re(-1.0);
        j[(n + k, k)] = ONE;
    }
    j
}

/// ‖M*JM − J‖ for a 2n×2n matrix.
pub fn symplectic_defect(m: &CMatrix) -> f64 {
    let j = j_matrix(m.nrows() / 2);
    norm2(&(m.adjoint() * &j * m - j))
}

/// Symplectic inverse −J M* J.
pub fn symplectic_inverse(m: &CMatrix) -> CMatrix {
    let j = j_matrix(m.nrows() / 2);
    -(&j * m.adjoint() * &j)
}

/// C^{2m} with the form ω(x, y) = (𝕁x, y), plus orthonormal bases of the
/// eigenspaces ker(𝕁 − i) and ker(𝕁 + i).
#[derive(Debug, Clone)]
pub struct SymplecticSpace {
    pub half_dim: usize,
    pub form: CMatrix,
    x1: CMatrix,
    x2: CMatrix,
}

impl SymplecticSpace {
    /// (C^{2n}, J).
    pub fn standard(n: usize) -> Self {
        let s = re(0.5f64.sqrt());
        let mut x1 = zeros(2 * n, n);
        let mut x2 = zeros(2 * n, n);
        for k in 0..n {
            x1[(k, k)] = s;
            x1[(n + k, k)] = -I * s;
            x2[(k, k)] = s;
            x2[(n + k, k)] = I * s;
        }
        Self { half_dim: n, form: j_matrix(n), x1, x2 }
    }

    /// (C^{4n}, diag(−J, J)), the space of boundary pairs.
    pub fn doubled(n: usize) -> Self {
        let base = Self::standard(n);
        let form = block_diag(&(-j_matrix(n)), &j_matrix(n));
        let x1 = block_diag(&base.x2, &base.x1);
        let x2 = block_diag(&base.x1, &base.x2);
        Self { half_dim: 2 * n, form, x1, x2 }
    }

    /// Any form matrix with 𝕁* = −𝕁 and 𝕁² = −I.
    pub fn from_form(form: CMatrix, pol: &TolerancePolicy) -> Result<Self> {
        let d = form.nrows();
        if d % 2 != 0 || form.ncols() != d {
            return Err(Error::contract("form matrix must be square of even size"));
        }
        if (form.adjoint() + &form).norm() > pol.residual_tol * (1.0 + form.norm())
            || (&form * &form + identity(d)).norm() > pol.residual_tol * (1.0 + form.norm())
        {
            return Err(Error::contract("form matrix must satisfy J* = -J and J^2 = -I"));
        }
        // −i𝕁 is Hermitian with eigenvalue +1 on ker(𝕁 − i) and −1 on ker(𝕁 + i).
        let h = &form * (-I);
        let eig = hermitian_eigen(&hermitian_part(&h), pol)?;
        let pos: Vec<usize> = (0..d).filter(|&i| eig.values[i] > 0.0).collect();
        let neg: Vec<usize> = (0..d).filter(|&i| eig.values[i] < 0.0).collect();
        if pos.len() != neg.len() {
            return Err(Error::contract("form has unbalanced signature"));
        }
        Ok(Self {
            half_dim: d / 2,
            x1: select_columns(&eig.vectors, &pos),
            x2: select_columns(&eig.vectors, &neg),
            form,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.half_dim
    }

    pub fn x1(&self) -> &CMatrix {
        &self.x1
    }

    pub fn x2(&self) -> &CMatrix {
        &self.x2
    }

    pub fn omega(&self, x: &CVector, y: &CVector) -> C64 {
        y.dotc(&(&self.form * x))
    }

    /// The Lagrangian subspace {ξ + Uξ : ξ ∈ X₁} as an orthonormal frame.
    pub fn lagrangian_from_unitary(&self, u: &CMatrix) -> CMatrix {
        (&self.x1 + &self.x2 * u) * re(0.5f64.sqrt())
    }
}

/// Returns (is_lagrangian, ‖Z*𝕁Z‖).
pub fn lagrangian_check(z: &CMatrix, space: &SymplecticSpace, pol: &TolerancePolicy) -> (bool, f64) {
    if z.nrows() != space.dim() {
        return (false, f64::INFINITY);
    }
    let residual = norm2(&(z.adjoint() * &space.form * z));
    (z.ncols() == space.half_dim && residual <= pol.residual_tol, residual)
}

/// Unitary U with span(Z) = {ξ + Uξ : ξ ∈ X₁}, written in the fixed bases of
/// X₁ and X₂.
pub fn unitary_rep(z: &CMatrix, space: &SymplecticSpace, pol: &TolerancePolicy) -> Result<CMatrix> {
    let a = space.x1.adjoint() * z;
    let b = space.x2.adjoint() * z;
    let smin = smallest_singular_value(&a);
    if !(smin > 1e-6) {
        return Err(Error::numerical(format!(
            "projection onto ker(J - i) is singular (sigma_min {smin:.3e}); frame is not Lagrangian"
        )));
    }
    let u = b * inverse(&a)?;
    let m = u.nrows();
    let defect = norm2(&(u.adjoint() * &u - identity(m)));
    if defect > 1e3 * pol.residual_tol.max(1e-12) {
        return Err(Error::numerical(format!("unitary representative defect {defect:.3e}")));
    }
    Ok(u)
}

#[derive(Debug, Clone)]
pub struct LagrangianFrame {
    pub frame: CMatrix,
    pub unitary: CMatrix,
}

impl LagrangianFrame {
    pub fn new(z: &CMatrix, space: &SymplecticSpace, pol: &TolerancePolicy) -> Result<Self> {
        let frame = orthonormalize(z, pol);
        let (ok, residual) = lagrangian_check(&frame, space, pol);
        if !ok {
            return Err(Error::contract(format!(
                "subspace is not Lagrangian (dim {} of {}, residual {residual:.3e})",
                frame.ncols(),
                space.half_dim
            )));
        }
        let unitary = unitary_rep(&frame, space, pol)?;
        Ok(Self { frame, unitary })
    }
}

/// Orthonormal frame of Gr(M) = {(v, Mv)}.
pub fn graph_frame(m: &CMatrix) -> CMatrix {
    let k = m.ncols();
    vstack(&identity(k), m).qr().q()
}

/// Gr(M) ⊆ C^{4n} for a symplectic 2n×2n matrix M.
pub fn graph_lagrangian(m: &CMatrix, space: &SymplecticSpace, pol: &TolerancePolicy) -> Result<LagrangianFrame> {
    let defect = symplectic_defect(m);
    let scale = 1.0 + norm2(m).powi(2);
    if defect > pol.residual_tol * scale {
        return Err(Error::contract(format!("matrix is not symplectic (residual {defect:.3e})")));
    }
    LagrangianFrame::new(&graph_frame(m), space, pol)
}

/// A boundary condition R ⊆ C^{2n} with its derived subspaces.
#[derive(Debug, Clone)]
pub struct BoundaryCondition {
    pub n: usize,
    pub r: CMatrix,
    pub r_perp: CMatrix,
    pub r_b: CMatrix,
    pub w: LagrangianFrame,
    pub s: CMatrix,
}

fn flip(n: usize) -> CMatrix {
    let mut d = identity(2 * n);
    for k in n..2 * n {
        d[(k, k)] = re(-1.0);
    }
    d
}

impl BoundaryCondition {
    /// Build from a spanning set given as the columns of a 2n×k matrix.
    pub fn from_span(span: &CMatrix, n: usize, pol: &TolerancePolicy) -> Result<Self> {
        if span.nrows() != 2 * n {
            return Err(Error::contract(format!(
                "boundary vectors must have length {}, got {}",
                2 * n,
                span.nrows()
            )));
        }
        let r = orthonormalize(span, pol);
        let r_perp = orth_complement(&r);
        let d = flip(n);
        let r_b = &d * &r_perp;

        // W(R): (x, 0, −z, 0)-type vectors from R^⊥ and (0, y, 0, u) from R.
        let mut w = zeros(4 * n, 2 * n);
        for k in 0..r_perp.ncols() {
            for i in 0..n {
                w[(i, k)] = r_perp[(i, k)];
                w[(2 * n + i, k)] = -r_perp[(n + i, k)];
            }
        }
        for k in 0..r.ncols() {
            let col = r_perp.ncols() + k;
            for i in 0..n {
                w[(n + i, col)] = r[(i, k)];
                w[(3 * n + i, col)] = r[(n + i, k)];
            }
        }
        let w = LagrangianFrame::new(&w, &SymplecticSpace::doubled(n), pol)?;

        // S = {x : (x, x) ∈ R^b}.
        let diag = vstack(&identity(n), &identity(n));
        let proj = identity(2 * n) - &r_b * r_b.adjoint();
        let s = null_space_abs(&(proj * diag), pol.rank_tol);
        Ok(Self { n, r, r_perp, r_b, w, s })
    }

    pub fn from_vectors(vectors: &[CVector], n: usize, pol: &TolerancePolicy) -> Result<Self> {
        let mut m = zeros(2 * n, vectors.len());
        for (k, v) in vectors.iter().enumerate() {
            if v.len() != 2 * n {
                return Err(Error::contract(format!("boundary vector {k} has length {}, expected {}", v.len(), 2 * n)));
            }
            m.set_column(k, v);
        }
        Self::from_span(&m, n, pol)
    }

    pub fn dirichlet(n: usize) -> Self {
        Self::from_span(&zeros(2 * n, 0), n, &TolerancePolicy::default()).expect("dirichlet is valid")
    }

    pub fn free(n: usize) -> Self {
        Self::from_span(&identity(2 * n), n, &TolerancePolicy::default()).expect("free is valid")
    }

    pub fn periodic(n: usize) -> Self {
        Self::from_span(&vstack(&identity(n), &identity(n)), n, &TolerancePolicy::default()).expect("periodic is valid")
    }

    pub fn dim_r(&self) -> usize {
        self.r.ncols()
    }

    pub fn dim_s(&self) -> usize {
        self.s.ncols()
    }

    /// S computed as Gr(I) ∩ R^b, projected to its first component.
    pub fn s_via_intersection(&self, pol: &TolerancePolicy) -> CMatrix {
        let n = self.n;
        let diag = vstack(&identity(n), &identity(n)) * re(0.5f64.sqrt());
        let x = subspace_intersection(&diag, &self.r_b, pol);
        orthonormalize(&x.rows(0, n).into_owned(), pol)
    }
}

/// dim(Gr(M) ∩ V) for an n×n matrix M and an orthonormal frame V of C^{2n}.
pub fn graph_intersection_dim(m: &CMatrix, v: &CMatrix, pol: &TolerancePolicy) -> usize {
    subspace_intersection(&graph_frame(m), v, pol).ncols()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMatrix {
        CMatrix::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn same_span(a: &CMatrix, b: &CMatrix) -> bool {
        a.ncols() == b.ncols() && principal_sines(a, b).iter().all(|&s| s < 1e-8)
    }

    #[test]
    fn spaces_have_consistent_eigenbases() {
        for space in [SymplecticSpace::standard(2), SymplecticSpace::doubled(2)] {
            let d = space.dim();
            assert!((&space.form * space.x1() - space.x1() * I).norm() < 1e-14);
            assert!((&space.form * space.x2() + space.x2() * I).norm() < 1e-14);
            let e = hstack(space.x1(), space.x2());
            assert!((e.adjoint() * e - identity(d)).norm() < 1e-14);
        }
    }

    #[test]
    fn lagrangian_check_examples() {
        let pol = TolerancePolicy::default();
        let s1 = SymplecticSpace::standard(1);
        let e1 = CMatrix::from_column_slice(2, 1, &[ONE, ZERO]);
        assert!(lagrangian_check(&e1, &s1, &pol).0);
        let s2 = SymplecticSpace::standard(2);
        let horiz = vstack(&identity(2), &zeros(2, 2));
        assert!(lagrangian_check(&horiz, &s2, &pol).0);
        let mut z = zeros(4, 2);
        z[(0, 0)] = ONE;
        z.set_column(1, &(&s2.form * z.column(0)));
        let (ok, res) = lagrangian_check(&z, &s2, &pol);
        assert!(!ok);
        assert!((res - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitary_rep_fixtures() {
        let pol = TolerancePolicy::default();
        let sp = SymplecticSpace::standard(2);
        let horiz = vstack(&identity(2), &zeros(2, 2));
        let vert = vstack(&zeros(2, 2), &identity(2));
        let uh = unitary_rep(&horiz, &sp, &pol).unwrap();
        let uv = unitary_rep(&vert, &sp, &pol).unwrap();
        // Frozen values for the fixed eigenbases.
        assert!((&uh - identity(2)).norm() < 1e-14);
        assert!((&uv + identity(2)).norm() < 1e-14);
    }

    #[test]
    fn unitary_round_trip_random() {
        let pol = TolerancePolicy::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sp = SymplecticSpace::doubled(2);
        for _ in 0..10 {
            let h = hermitian_part(&rand_matrix(&mut rng, 4, 4));
            let m = (j_matrix(2) * h).exp();
            let lf = graph_lagrangian(&m, &sp, &pol).unwrap();
            let back = sp.lagrangian_from_unitary(&lf.unitary);
            assert!(same_span(&back, &lf.frame));
        }
    }

    #[test]
    fn graph_lagrangian_examples() {
        let pol = TolerancePolicy::default();
        let sp = SymplecticSpace::doubled(1);
        assert!(graph_lagrangian(&identity(2), &sp, &pol).is_ok());
        assert!(graph_lagrangian(&j_matrix(1), &sp, &pol).is_ok());
        let bad = from_real_diag(&[2.0, 1.0]);
        assert!(matches!(graph_lagrangian(&bad, &sp, &pol), Err(Error::Contract(_))));
    }

    #[test]
    fn general_form_matches_standard() {
        let pol = TolerancePolicy::default();
        let sp = SymplecticSpace::from_form(j_matrix(2), &pol).unwrap();
        assert!((&sp.form * sp.x1() - sp.x1() * I).norm() < 1e-12);
        assert!(SymplecticSpace::from_form(identity(2), &pol).is_err());
    }

    #[test]
    fn boundary_examples() {
        let pol = TolerancePolicy::default();
        let d = BoundaryCondition::dirichlet(1);
        assert_eq!((d.r_b.ncols(), d.dim_s()), (2, 1));
        let f = BoundaryCondition::free(2);
        assert_eq!((f.r_b.ncols(), f.dim_s()), (0, 0));
        for n in 1..4 {
            let p = BoundaryCondition::periodic(n);
            assert_eq!(p.dim_s(), n);
            assert!(same_span(&p.r_b, &graph_frame(&identity(n))));
            assert_eq!(p.s_via_intersection(&pol).ncols(), n);
        }
    }

    #[test]
    fn boundary_rejects_bad_length() {
        let pol = TolerancePolicy::default();
        assert!(BoundaryCondition::from_span(&zeros(3, 1), 1, &pol).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_bc(seed: u64, n: usize, k: usize) -> BoundaryCondition {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = k.min(2 * n);
            BoundaryCondition::from_span(&rand_matrix(&mut rng, 2 * n, k), n, &TolerancePolicy::default()).unwrap()
        }

        proptest! {
            #[test]
            fn w_is_lagrangian(seed in 0u64..100_000, n in 1usize..5, k in 0usize..9) {
                let bc = random_bc(seed, n, k);
                let sp = SymplecticSpace::doubled(n);
                prop_assert_eq!(bc.w.frame.ncols(), 2 * n);
                let (ok, res) = lagrangian_check(&bc.w.frame, &sp, &TolerancePolicy::default());
                prop_assert!(ok, "residual {}", res);
            }

            #[test]
            fn b_is_an_involution(seed in 0u64..100_000, n in 1usize..5, k in 0usize..9) {
                let pol = TolerancePolicy::default();
                let bc = random_bc(seed, n, k);
                let bb = BoundaryCondition::from_span(&bc.r_b, n, &pol).unwrap();
                prop_assert!(same_span(&bb.r_b, &bc.r));
            }

            #[test]
            fn s_two_ways(seed in 0u64..100_000, n in 1usize..4, planted in 0usize..3) {
                // Plant (x, x) directions in R^b so S is nontrivial.
                let pol = TolerancePolicy::default();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let planted = planted.min(n);
                let x = rand_matrix(&mut rng, n, planted);
                let extra = rand_matrix(&mut rng, 2 * n, (n - planted).min(1));
                let rb = orthonormalize(&hstack(&vstack(&x, &x), &extra), &pol);
                let r = orth_complement(&(flip(n) * &rb));
                let bc = BoundaryCondition::from_span(&r, n, &pol).unwrap();
                let s2 = bc.s_via_intersection(&pol);
                prop_assert_eq!(bc.dim_s(), planted);
                prop_assert!(same_span(&bc.s, &s2));
            }
        }
    }
}
