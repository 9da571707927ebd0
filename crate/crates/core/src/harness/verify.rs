//! Integer identities checked by two independent pipelines each.
//!
//! Every function returns a report; module errors end up in the report
//! rather than propagating.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::{fundamental_solution, frame_change_coeffs, frame_change_path, FramePath, MatrixFunction, SolverOptions, SymplecticPath};
use crate::index_form::{eigenflow, morse_index_converged_with, spectral_flow_s_with, MeshPolicy};
use crate::linalg::*;
use crate::maslov::{i_w_bc, maslov_monotone};
use crate::spectral_flow::{block_flow_check, morse_formula_check};
use crate::symplectic::{graph_intersection_dim, lagrangian_check, BoundaryCondition, SymplecticSpace};

use super::config::ProblemSpec;
use super::report::VerificationReport;

/// Resolution of the eigenvalue-flow trace attached to index-form reports.
const FLOW_ELEMENTS: usize = 32;
const FLOW_SAMPLES: usize = 16;
const FLOW_COUNT: usize = 6;

/// Largest allowed ‖γ′_frame − γ′_integrated‖ between the two frame-change
/// routes.
pub const ROUTE_TOLERANCE: f64 = 1e-6;

fn run(task: &str, name: &str, f: impl FnOnce(&mut VerificationReport) -> Result<(i64, i64)>) -> VerificationReport {
    let start = Instant::now();
    let mut rep = VerificationReport::new(task, name);
    let out = f(&mut rep);
    rep.finish(out);
    rep.wall_time_s = start.elapsed().as_secs_f64();
    rep
}

fn bump(rep: &mut VerificationReport, key: &str, x: f64) {
    let old = rep.evidence.get(key).and_then(|v| v.as_f64()).unwrap_or(0.0);
    rep.set(key, old.max(x));
}

fn note_path(rep: &mut VerificationReport, g: &SymplecticPath) {
    bump(rep, "max_symplectic_residual", g.max_symplectic_residual);
}

fn note_boundary(rep: &mut VerificationReport, bc: &BoundaryCondition, pol: &TolerancePolicy) -> Result<()> {
    let (ok, res) = lagrangian_check(&bc.w.frame, &SymplecticSpace::doubled(bc.n), pol);
    bump(rep, "w_lagrangian_residual", res);
    if !ok {
        return Err(Error::numerical(format!("W(R) frame is not Lagrangian (residual {res:.3e})")));
    }
    Ok(())
}

fn integrate(rep: &mut VerificationReport, ps: &ProblemSpec, s: f64) -> Result<SymplecticPath> {
    let g = fundamental_solution(&ps.coeffs, s, SolverOptions::default())?;
    note_path(rep, &g);
    Ok(g)
}

/// i_{W(R)}(γ) with both algorithms, which must agree.
fn index_w(rep: &mut VerificationReport, label: &str, g: &SymplecticPath, bc: &BoundaryCondition, pol: &TolerancePolicy) -> Result<i64> {
    note_boundary(rep, bc, pol)?;
    let r = i_w_bc(g, bc, pol)?;
    rep.record_maslov(label, &r);
    match &r.agreement {
        Some(a) if a.agree => Ok(r.index),
        Some(a) => Err(Error::Inconsistency(format!(
            "{label}: only one algorithm succeeded (crossing form: {}, eigenphase: {})",
            a.crossing_form_error.as_deref().unwrap_or("ok"),
            a.eigenphase_error.as_deref().unwrap_or("ok")
        ))),
        None => Err(Error::Inconsistency(format!("{label}: no agreement record"))),
    }
}

/// Lowest generalized eigenvalues of the index form along s on a coarse mesh.
pub fn attach_flow(rep: &mut VerificationReport, ps: &ProblemSpec) {
    if let Ok(flow) = eigenflow(&ps.coeffs, &ps.bc, FLOW_ELEMENTS, FLOW_SAMPLES, FLOW_COUNT, &ps.pol) {
        rep.eigenflow = flow;
    }
}

#[derive(Serialize)]
struct MeshRow {
    elements: usize,
    value: i64,
}

/// −sf{I_s} = i_{W(R)}(γ₁) − i_{W(R)}(γ₀).
pub fn verify_thm1(ps: &ProblemSpec, mesh: MeshPolicy) -> VerificationReport {
    run("thm1", &ps.name, |rep| {
        let pol = &ps.pol;
        let sf = spectral_flow_s_with(&ps.coeffs, &ps.bc, pol, mesh)?;
        rep.set("mesh_trace", sf.meshes.iter().map(|&(e, v)| MeshRow { elements: e, value: v }).collect::<Vec<_>>());
        let g0 = integrate(rep, ps, 0.0)?;
        let g1 = integrate(rep, ps, 1.0)?;
        let i0 = index_w(rep, "gamma_0", &g0, &ps.bc, pol)?;
        let i1 = index_w(rep, "gamma_1", &g1, &ps.bc, pol)?;
        rep.set("i_w_gamma_0", i0);
        rep.set("i_w_gamma_1", i1);
        Ok((sf.value, i1 - i0))
    })
}

/// m⁻(I₁) = i_{W(R)}(γ₁) − dim S for positive definite p.
pub fn verify_cor1(ps: &ProblemSpec, mesh: MeshPolicy) -> VerificationReport {
    run("cor1", &ps.name, |rep| {
        let pol = &ps.pol;
        let m = morse_index_converged_with(&ps.coeffs, 1.0, &ps.bc, pol, mesh)?;
        rep.set("mesh_trace", &m.meshes);
        rep.set("m_zero", m.m_zero);
        let g1 = integrate(rep, ps, 1.0)?;
        let i1 = index_w(rep, "gamma_1", &g1, &ps.bc, pol)?;
        rep.set("i_w_gamma_1", i1);
        rep.set("dim_s", ps.bc.dim_s());
        Ok((m.m_minus as i64, i1 - ps.bc.dim_s() as i64))
    })
}

/// Positive part of the restriction of P to span(S).
fn m_plus_on(p: &CMatrix, s: &CMatrix, pol: &TolerancePolicy) -> Result<usize> {
    if s.ncols() == 0 {
        return Ok(0);
    }
    let restricted = hermitian_part(&(s.adjoint() * p * s));
    let ztol = pol.eig_zero_tol * norm2(p).max(1.0);
    Ok(counts_from_values(&hermitian_eigenvalues(&restricted, pol)?, ztol).m_plus)
}

/// i_{W(R)}(γ) = m⁺(P(T)|_S) − m⁺(P(0)|_S) for γ = [[I, 0], [P, I]].
pub fn verify_thm2(name: &str, p: &MatrixFunction, t_end: f64, bc: &BoundaryCondition, pol: &TolerancePolicy) -> VerificationReport {
    run("thm2", name, |rep| {
        if p.shape().0 != bc.n || !p.is_hermitian_valued() {
            return Err(Error::input("P must be Hermitian with the boundary's size"));
        }
        let g = SymplecticPath::shear(p, t_end);
        note_path(rep, &g);
        let lhs = index_w(rep, "shear", &g, bc, pol)?;
        let hi = m_plus_on(&p.eval(t_end), &bc.s, pol)?;
        let lo = m_plus_on(&p.eval(0.0), &bc.s, pol)?;
        rep.set("dim_s", bc.dim_s());
        rep.set("m_plus_end", hi);
        rep.set("m_plus_start", lo);
        Ok((lhs, hi as i64 - lo as i64))
    })
}

/// R′ = diag(a(0), a(T))⁻¹ R.
fn pulled_back(bc: &BoundaryCondition, a0: &CMatrix, at: &CMatrix, pol: &TolerancePolicy) -> Result<BoundaryCondition> {
    let m = block_diag(&inverse(a0)?, &inverse(at)?);
    BoundaryCondition::from_span(&(m * &bc.r), bc.n, pol)
}

/// max over the grid of ‖x(t) − y(t)‖₂.
fn path_distance(x: &SymplecticPath, y: &SymplecticPath) -> f64 {
    y.grid.iter().map(|&t| norm2(&(x.eval(t) - y.eval(t)))).fold(0.0, f64::max)
}

/// i_{W(R′)}(γ₁′) − i_{W(R)}(γ₁) = dim(Gr(I)∩R′) − dim(Gr(I)∩R), with γ₁′
/// obtained both by transforming γ₁ and by integrating the transformed
/// coefficients.
pub fn verify_thm3(ps: &ProblemSpec) -> VerificationReport {
    run("thm3", &ps.name, |rep| {
        let pol = &ps.pol;
        let frame = ps.frame.clone().ok_or_else(|| Error::input("thm3 needs a frame path"))?;
        let a = FramePath::new(frame, ps.t_end, pol)?;
        let g1 = integrate(rep, ps, 1.0)?;
        let via_frame = frame_change_path(&g1, &a)?;
        note_path(rep, &via_frame);
        let changed = frame_change_coeffs(&ps.coeffs, &a)?;
        let via_ode = fundamental_solution(&changed, 1.0, SolverOptions::default())?;
        note_path(rep, &via_ode);
        let dist = path_distance(&via_frame, &via_ode);
        rep.set("route_distance", dist);
        if !(dist <= ROUTE_TOLERANCE) {
            return Err(Error::Inconsistency(format!("frame-change routes differ by {dist:.3e}")));
        }
        let bc2 = pulled_back(&ps.bc, &a.at(0.0), &a.at(ps.t_end), pol)?;
        let i = index_w(rep, "gamma_1", &g1, &ps.bc, pol)?;
        let i_frame = index_w(rep, "gamma_1_prime_frame", &via_frame, &bc2, pol)?;
        let i_ode = index_w(rep, "gamma_1_prime_ode", &via_ode, &bc2, pol)?;
        if i_frame != i_ode {
            return Err(Error::Inconsistency(format!("frame-change routes give indices {i_frame} and {i_ode}")));
        }
        let id = identity(ps.n);
        let d_new = graph_intersection_dim(&id, &bc2.r, pol);
        let d_old = graph_intersection_dim(&id, &ps.bc.r, pol);
        rep.set("dim_gr_i_cap_r_prime", d_new);
        rep.set("dim_gr_i_cap_r", d_old);
        Ok((i_frame - i, d_new as i64 - d_old as i64))
    })
}

/// i_{W(R)}(diag(a*, a⁻¹)) = dim(Gr(a(0)⁻¹)∩R) − dim(Gr(a(T)⁻¹)∩R).
pub fn verify_lemma45(name: &str, frame: &MatrixFunction, t_end: f64, bc: &BoundaryCondition, pol: &TolerancePolicy) -> VerificationReport {
    run("lemma45", name, |rep| {
        let a = FramePath::new(frame.clone(), t_end, pol)?;
        if a.n() != bc.n {
            return Err(Error::input("frame size does not match the boundary"));
        }
        let g = SymplecticPath::frame_diag(&a);
        note_path(rep, &g);
        let lhs = index_w(rep, "frame_diag", &g, bc, pol)?;
        let d0 = graph_intersection_dim(&inverse(&a.at(0.0))?, &bc.r, pol);
        let d1 = graph_intersection_dim(&inverse(&a.at(t_end))?, &bc.r, pol);
        rep.set("dim_start", d0);
        rep.set("dim_end", d1);
        Ok((lhs, d0 as i64 - d1 as i64))
    })
}

/// Correction term C(M; R1, R2) for nested R1 ⊆ R2 and its pieces.
#[derive(Debug, Clone, Serialize)]
pub struct Concavity {
    pub value: i64,
    pub dim_n: usize,
    pub counts: MorseCounts,
    pub nullity_r2: usize,
    pub hermitian_defect: f64,
}

/// 𝒩 = {(x, y, z, u) ∈ Gr(M) : (x, z) ∈ R1^b, (y, u) ∈ R2} with the form
/// (z₁, u₂) − (x₁, y₂); C = m⁻ + dim ker − dim(Gr(M) ∩ W(R2)).
pub fn concavity_term(m: &CMatrix, bc1: &BoundaryCondition, bc2: &BoundaryCondition, pol: &TolerancePolicy) -> Result<Concavity> {
    let n = bc1.n;
    let top = m.rows(0, n).into_owned();
    let bot = m.rows(n, n).into_owned();
    let first = hstack(&identity(n), &zeros(n, n));
    let second = hstack(&zeros(n, n), &identity(n));
    let p1 = identity(2 * n) - &bc1.r_b * bc1.r_b.adjoint();
    let p2 = identity(2 * n) - &bc2.r * bc2.r.adjoint();
    let l1 = p1 * vstack(&first, &top);
    let l2 = p2 * vstack(&second, &bot);
    let scale = norm2(m).max(1.0);
    let basis = null_space_abs(&vstack(&l1, &l2), pol.rank_tol * scale);
    let (x, y) = (&first * &basis, &second * &basis);
    let (z, u) = (&top * &basis, &bot * &basis);
    let q = u.adjoint() * z - y.adjoint() * x;
    let defect = hermitian_defect(&q);
    if defect > pol.residual_tol * scale * scale {
        return Err(Error::Inconsistency(format!("concavity form is not Hermitian (defect {defect:.3e})")));
    }
    let counts = if q.nrows() == 0 {
        MorseCounts::default()
    } else {
        counts_from_values(&hermitian_eigenvalues(&hermitian_part(&q), pol)?, pol.eig_zero_tol * scale * scale)
    };
    let nullity_r2 = crate::maslov::graph_nullity(m, &bc2.w, pol);
    Ok(Concavity {
        value: counts.m_minus as i64 + counts.m_zero as i64 - nullity_r2 as i64,
        dim_n: basis.ncols(),
        counts,
        nullity_r2,
        hermitian_defect: defect,
    })
}

/// i_{W(R2)}(γ) − i_{W(R1)}(γ) = C(γ(T); R1, R2) + dim(Gr(I)∩R2^b) − dim(Gr(I)∩R1^b).
pub fn verify_concavity(name: &str, g: &SymplecticPath, r1: &CMatrix, r2: &CMatrix, pol: &TolerancePolicy) -> VerificationReport {
    run("concavity", name, |rep| {
        let n = g.n;
        if r1.nrows() != 2 * n || r2.nrows() != 2 * n {
            return Err(Error::input(format!("boundary vectors must have length {}", 2 * n)));
        }
        let start = norm2(&(g.eval(g.span().0) - identity(2 * n)));
        if start > pol.residual_tol.max(1e-8) {
            return Err(Error::input(format!("path must start at the identity (distance {start:.3e})")));
        }
        let bc1 = BoundaryCondition::from_span(r1, n, pol)?;
        let bc2 = BoundaryCondition::from_span(r2, n, pol)?;
        let outside = norm2(&(&bc1.r - &bc2.r * (bc2.r.adjoint() * &bc1.r)));
        if bc1.dim_r() > 0 && outside > pol.rank_tol.sqrt() {
            return Err(Error::input(format!("R1 is not contained in R2 (distance {outside:.3e})")));
        }
        note_path(rep, g);
        let i1 = index_w(rep, "r1", g, &bc1, pol)?;
        let i2 = index_w(rep, "r2", g, &bc2, pol)?;
        let c = concavity_term(g.end_value(), &bc1, &bc2, pol)?;
        let id = identity(n);
        let d2 = graph_intersection_dim(&id, &bc2.r_b, pol);
        let d1 = graph_intersection_dim(&id, &bc1.r_b, pol);
        rep.set("concavity", &c);
        rep.set("dim_gr_i_cap_r2b", d2);
        rep.set("dim_gr_i_cap_r1b", d1);
        Ok((i2 - i1, c.value + d2 as i64 - d1 as i64))
    })
}

/// i_{W(R)}(γ₁) computed two ways, or against an expected value.
pub fn verify_maslov(ps: &ProblemSpec, expected: Option<i64>) -> VerificationReport {
    run("maslov", &ps.name, |rep| {
        let g1 = integrate(rep, ps, 1.0)?;
        let idx = index_w(rep, "gamma_1", &g1, &ps.bc, &ps.pol)?;
        let summary = rep.maslov.last().expect("index recorded");
        let (cf, ep) = (summary.crossing_form.unwrap_or(idx), summary.eigenphase.unwrap_or(idx));
        match expected {
            Some(e) => {
                if cf != ep {
                    return Err(Error::Inconsistency(format!("crossing form {cf} vs eigenphase {ep}")));
                }
                Ok((idx, e))
            }
            None => Ok((cf, ep)),
        }
    })
}

/// Index of a monotone path counted from intersection dimensions, against
/// the crossing-form/eigenphase result.
pub fn verify_monotone(name: &str, g: &SymplecticPath, bc: &BoundaryCondition, pol: &TolerancePolicy) -> VerificationReport {
    run("monotone", name, |rep| {
        note_path(rep, g);
        let idx = index_w(rep, "path", g, bc, pol)?;
        let count = maslov_monotone(g, &bc.w, pol)?;
        rep.set("monotone_count", count);
        Ok((count, idx))
    })
}

/// I(PAP, A) = m⁻(A|_N) + dim ker A|_N − dim ker A.
pub fn verify_relative_morse(name: &str, a: &CMatrix, p: &CMatrix, pol: &TolerancePolicy) -> VerificationReport {
    run("relative_morse", name, |rep| {
        if hermitian_defect(a) > pol.residual_tol * (1.0 + a.norm()) || hermitian_defect(p) > pol.residual_tol * (1.0 + p.norm()) {
            return Err(Error::input("A and P must be Hermitian"));
        }
        rep.set("dim", a.nrows());
        rep.set("rank_a", rank(a, pol));
        morse_formula_check(a, p, pol)
    })
}

/// sf of s ↦ [[0, A(s)*], [A(s), 0]] for the segment A(s) = (1−s)A0 + sA1
/// against dim ker A1 − dim ker A0.
pub fn verify_block_flow(name: &str, a0: &CMatrix, a1: &CMatrix, pol: &TolerancePolicy) -> VerificationReport {
    run("block_flow", name, |rep| {
        let d = a0.nrows();
        rep.set("dim", d);
        rep.set("rank_a0", rank(a0, pol));
        rep.set("rank_a1", rank(a1, pol));
        let (x, y) = (a0.clone(), a1.clone());
        block_flow_check(d, move |s| &x * re(1.0 - s) + &y * re(s), 64, pol)
    })
}
