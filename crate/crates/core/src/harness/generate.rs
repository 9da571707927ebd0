//! Seeded random instances for the randomized suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hamiltonian::{CoefficientPath, MatrixFunction};
use crate::linalg::*;
use crate::symplectic::BoundaryCondition;

use super::config::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PKind {
    /// p ≡ I.
    Identity,
    /// p = I + ε·H(t) with ‖εH‖ ≤ 0.4.
    Positive,
    /// Constant congruate of diag(±1) with at least one negative sign.
    Indefinite,
}

#[derive(Debug, Clone, Copy)]
pub struct InstanceFlags {
    pub p: PKind,
    /// Degree of the polynomials q(t) and r(t).
    pub degree: usize,
}

impl Default for InstanceFlags {
    fn default() -> Self {
        Self { p: PKind::Identity, degree: 1 }
    }
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn rand_complex(rng: &mut ChaCha8Rng, r: usize, k: usize) -> CMatrix {
    CMatrix::from_fn(r, k, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn rand_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    hermitian_part(&rand_complex(rng, n, n))
}

/// Haar-ish unitary from the QR factor of a random complex matrix.
pub fn rand_unitary(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
    rand_complex(rng, n, n).qr().q()
}

fn normalized(m: CMatrix, bound: f64) -> CMatrix {
    let nm = norm2(&m);
    if nm > 0.0 {
        m * re(bound / nm)
    } else {
        m
    }
}

/// R whose companion S has dimension exactly `dim_s`, with `extra`
/// further generic directions in R^b. Requires dim_s + extra ≤ n.
pub fn planted_boundary(rng: &mut ChaCha8Rng, n: usize, dim_s: usize, extra: usize) -> BoundaryCondition {
    assert!(dim_s + extra <= n, "planted boundary needs dim S + extra ≤ n");
    let s = rand_complex(rng, n, dim_s);
    let rb = hstack(&vstack(&s, &s), &rand_complex(rng, 2 * n, extra));
    // R^b = D·R^⊥ with D = diag(I, −I), so R = (D·R^b)^⊥.
    let mut d_rb = rb.clone();
    for i in n..2 * n {
        for k in 0..d_rb.ncols() {
            d_rb[(i, k)] = -d_rb[(i, k)];
        }
    }
    let pol = TolerancePolicy::default();
    let r = orth_complement(&orthonormalize(&d_rb, &pol));
    BoundaryCondition::from_span(&r, n, &pol).expect("planted boundary is valid")
}

/// R spanned by `graph_dims[i]` vectors of Gr(M_i) and `extra` generic
/// vectors. Needs Σ graph_dims + extra ≤ n for the planted dimensions to be
/// exact.
pub fn boundary_through_graphs(rng: &mut ChaCha8Rng, n: usize, graphs: &[(&CMatrix, usize)], extra: usize) -> BoundaryCondition {
    let mut span = zeros(2 * n, 0);
    for (m, k) in graphs {
        let x = rand_complex(rng, n, *k);
        span = hstack(&span, &vstack(&x, &(*m * &x)));
    }
    span = hstack(&span, &rand_complex(rng, 2 * n, extra));
    BoundaryCondition::from_span(&span, n, &TolerancePolicy::default()).expect("boundary is valid")
}

/// Random frame a(t) = a0 + t·a1 with σ_min(a(t)) > 0.2 on [0, T].
pub fn random_frame(rng: &mut ChaCha8Rng, n: usize, t_end: f64) -> MatrixFunction {
    let a0 = rand_unitary(rng, n) * re(rng.random_range(0.8..1.5));
    let mut a1 = normalized(rand_complex(rng, n, n), rng.random_range(0.2..1.0) / t_end);
    loop {
        let ok = (0..=64).all(|k| {
            let t = t_end * k as f64 / 64.0;
            smallest_singular_value(&(&a0 + &a1 * re(t))) > 0.2
        });
        if ok {
            return MatrixFunction::Poly(vec![a0, a1]);
        }
        a1 *= re(0.5);
    }
}

/// Hermitian polynomial of the given degree with O(scale) coefficients.
pub fn random_hermitian_poly(rng: &mut ChaCha8Rng, n: usize, degree: usize, scale: f64) -> MatrixFunction {
    MatrixFunction::Poly((0..=degree).map(|_| rand_hermitian(rng, n) * re(scale)).collect())
}

fn p_of(rng: &mut ChaCha8Rng, n: usize, kind: PKind) -> MatrixFunction {
    match kind {
        PKind::Identity => MatrixFunction::Constant(identity(n)),
        PKind::Positive => {
            let h0 = normalized(rand_hermitian(rng, n), 0.2);
            let h1 = normalized(rand_hermitian(rng, n), 0.2);
            MatrixFunction::Poly(vec![identity(n) + h0, h1])
        }
        PKind::Indefinite => {
            let neg = rng.random_range(1..=n);
            let signs: Vec<f64> = (0..n).map(|i| if i < neg { -1.0 } else { 1.0 }).collect();
            let mut c = rand_unitary(rng, n);
            for k in 0..n {
                let f = rng.random_range(0.8..1.25);
                for i in 0..n {
                    c[(i, k)] *= re(f);
                }
            }
            MatrixFunction::Constant(c.adjoint() * from_real_diag(&signs) * c)
        }
    }
}

/// A seeded problem on [0, 1]: p per `flags`, q a polynomial, r a strongly
/// negative Hermitian polynomial so the Morse index is usually positive,
/// boundary with dim R = `dim_r` (clamped to [n, 2n]; dim_r = 2n is free).
pub fn generate_instance(seed: u64, n: usize, dim_r: usize, flags: InstanceFlags) -> ProblemSpec {
    let mut rng = rng_for(seed, n as u64);
    let t_end = 1.0;
    let p = p_of(&mut rng, n, flags.p);
    let q = MatrixFunction::Poly((0..=flags.degree).map(|_| rand_complex(&mut rng, n, n)).collect());
    let shift = rng.random_range(5.0..25.0);
    let mut rc: Vec<CMatrix> = (0..=flags.degree).map(|_| rand_hermitian(&mut rng, n) * re(5.0)).collect();
    rc[0] -= identity(n) * re(shift);
    let r = MatrixFunction::Poly(rc);
    // dim R = 2n − dim R^b and dim R^b = dim S + extra with dim S + extra ≤ n.
    let dim_rb = 2 * n - dim_r.clamp(n, 2 * n);
    let dim_s = rng.random_range(0..=dim_rb);
    let bc = planted_boundary(&mut rng, n, dim_s, dim_rb - dim_s);
    let coeffs = CoefficientPath::new(n, t_end, p, q, r).expect("generated coefficients are valid");
    ProblemSpec {
        name: format!("seed{seed}_n{n}"),
        n,
        t_end,
        coeffs,
        bc,
        frame: None,
        pol: TolerancePolicy::default(),
        seed: Some(seed),
    }
}

/// A random dim R in [n, 2n] drawn from the seed.
pub fn random_dim_r(seed: u64, n: usize) -> usize {
    rng_for(seed, 1000 + n as u64).random_range(n..=2 * n)
}

/// Instance plus frame path and a boundary planted so that both Gr(I)∩R and
/// Gr(I)∩R′ are nontrivial in general.
pub fn generate_frame_instance(seed: u64, n: usize) -> ProblemSpec {
    let mut ps = generate_instance(seed, n, random_dim_r(seed, n), InstanceFlags::default());
    let mut rng = rng_for(seed, 2000 + n as u64);
    let frame = random_frame(&mut rng, n, ps.t_end);
    let a0 = frame.eval(0.0);
    let at = frame.eval(ps.t_end);
    // (a0 x, aT x) = (y, aT a0⁻¹ y) lies in R iff (x, x) ∈ R′.
    let m = &at * inverse(&a0).expect("frame is invertible");
    let k_i = rng.random_range(0..=n);
    let k_f = rng.random_range(0..=n - k_i);
    let extra = rng.random_range(0..=n - k_i - k_f);
    let id = identity(n);
    ps.bc = boundary_through_graphs(&mut rng, n, &[(&id, k_i), (&m, k_f)], extra);
    ps.frame = Some(frame);
    ps.name = format!("frame_seed{seed}_n{n}");
    ps
}

/// Frame path and a boundary R meeting Gr(a(0)⁻¹) and Gr(a(T)⁻¹) in planted
/// dimensions.
pub fn generate_lemma45(seed: u64, n: usize) -> (MatrixFunction, f64, BoundaryCondition) {
    let mut rng = rng_for(seed, 3000 + n as u64);
    let t_end = 1.0;
    let frame = random_frame(&mut rng, n, t_end);
    let a0i = inverse(&frame.eval(0.0)).expect("frame is invertible");
    let ati = inverse(&frame.eval(t_end)).expect("frame is invertible");
    let k0 = rng.random_range(0..=n);
    let k1 = rng.random_range(0..=n - k0);
    let extra = rng.random_range(0..=n - k0 - k1);
    let bc = boundary_through_graphs(&mut rng, n, &[(&a0i, k0), (&ati, k1)], extra);
    (frame, t_end, bc)
}

/// Hermitian diag(±d)-congruate with `neg` negative directions.
fn signed_hermitian(rng: &mut ChaCha8Rng, n: usize, neg: usize) -> CMatrix {
    let u = rand_unitary(rng, n);
    let d: Vec<f64> = (0..n).map(|i| if i < neg { -1.0 } else { 1.0 } * rng.random_range(0.5..3.0)).collect();
    &u * from_real_diag(&d) * u.adjoint()
}

/// P(t) = (1 − t)A + tB + t(1 − t)C on [0, 1] with endpoints of independent
/// random signature, and a random boundary.
pub fn generate_thm2(seed: u64, n: usize) -> (MatrixFunction, f64, BoundaryCondition) {
    let mut rng = rng_for(seed, 4000 + n as u64);
    let na = rng.random_range(0..=n);
    let nb = rng.random_range(0..=n);
    let a = signed_hermitian(&mut rng, n, na);
    let b = signed_hermitian(&mut rng, n, nb);
    let cc = rand_hermitian(&mut rng, n) * re(4.0);
    // (1 − t)A + tB + (t − t²)C
    let p = MatrixFunction::Poly(vec![a.clone(), &b - &a + &cc, -cc]);
    let dim_s = rng.random_range(0..=n);
    let extra = rng.random_range(0..=n - dim_s);
    (p, 1.0, planted_boundary(&mut rng, n, dim_s, extra))
}

/// exp(tJH) data and nested boundary spans R1 ⊆ R2.
pub fn generate_concavity(seed: u64, n: usize) -> (CMatrix, f64, CMatrix, CMatrix) {
    let mut rng = rng_for(seed, 5000 + n as u64);
    let h = normalized(rand_hermitian(&mut rng, 2 * n), rng.random_range(2.0..10.0));
    let d2 = rng.random_range(0..=2 * n);
    let d1 = rng.random_range(0..=d2);
    let pol = TolerancePolicy::default();
    let r2 = orthonormalize(&rand_complex(&mut rng, 2 * n, d2), &pol);
    let r1 = if d1 == 0 { zeros(2 * n, 0) } else { &r2 * rand_complex(&mut rng, d2, d1) };
    (h, 1.0, r1, r2)
}

/// Hermitian A of rank ≤ d − 1 (sometimes) and rank-deficient Hermitian P,
/// d ≤ 8. An invertible P makes both sides vanish.
pub fn generate_relative_morse(seed: u64) -> (CMatrix, CMatrix) {
    let mut rng = rng_for(seed, 6000);
    let d = rng.random_range(1..=8);
    let rank = if rng.random_bool(0.6) { rng.random_range(0..=d) } else { d };
    let a = signed_low_rank(&mut rng, d, rank);
    let k = rng.random_range(0..d);
    let p = if rng.random_bool(0.4) {
        // Orthogonal projection onto a random subspace.
        let f = orthonormalize(&rand_complex(&mut rng, d, k), &TolerancePolicy::default());
        &f * f.adjoint()
    } else {
        signed_low_rank(&mut rng, d, k)
    };
    (a, p)
}

fn signed_low_rank(rng: &mut ChaCha8Rng, d: usize, rank: usize) -> CMatrix {
    let u = rand_complex(rng, d, rank);
    let signs: Vec<f64> = (0..rank).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    hermitian_part(&(&u * from_real_diag(&signs) * u.adjoint()))
}

/// Square endpoints A0, A1 with prescribed ranks.
pub fn generate_block_flow(seed: u64) -> (CMatrix, CMatrix) {
    let mut rng = rng_for(seed, 7000);
    let d = rng.random_range(1..=6);
    let low_rank = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(0..=d);
        rand_complex(rng, d, k) * rand_complex(rng, k, d)
    };
    let a0 = low_rank(&mut rng);
    let a1 = low_rank(&mut rng);
    (a0, a1)
}
