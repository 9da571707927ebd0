//! Maslov index of a path of Lagrangian pairs (Λ(t), W) and the Maslov-type
//! index i_W(γ) of a symplectic path, by crossing forms and by eigenphase
//! rotation of the unitary representative.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian::SymplecticPath;
use crate::linalg::*;
use crate::symplectic::{graph_frame, j_matrix, unitary_rep, BoundaryCondition, LagrangianFrame, SymplecticSpace};

type FrameFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
pub enum PairSource {
    /// Λ(t) = Gr(γ(t)) in the doubled space.
    Graph(SymplecticPath),
    /// Λ(t) given by a frame-valued function.
    Generic(FrameFn),
}

#[derive(Clone)]
pub struct LagrangianPairPath {
    pub space: SymplecticSpace,
    pub source: PairSource,
    pub fixed: LagrangianFrame,
    pub a: f64,
    pub b: f64,
    pub grid: Vec<f64>,
    /// Constant rotation exp(−δ𝕁/2) applied to Λ(t); zero when unperturbed.
    rotation: f64,
}

impl fmt::Debug for LagrangianPairPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianPairPath")
            .field("span", &(self.a, self.b))
            .field("samples", &self.grid.len())
            .field("rotation", &self.rotation)
            .finish()
    }
}

impl LagrangianPairPath {
    pub fn graph(gamma: &SymplecticPath, w: &LagrangianFrame) -> Self {
        let (a, b) = gamma.span();
        let mut grid = gamma.sample_times().to_vec();
        if grid.len() < 257 {
            grid = (0..=256).map(|k| a + (b - a) * k as f64 / 256.0).collect();
        }
        Self {
            space: SymplecticSpace::doubled(gamma.n),
            source: PairSource::Graph(gamma.clone()),
            fixed: w.clone(),
            a,
            b,
            grid,
            rotation: 0.0,
        }
    }

    pub fn generic(space: SymplecticSpace, frame: impl Fn(f64) -> CMatrix + Send + Sync + 'static, fixed: LagrangianFrame, a: f64, b: f64, samples: usize) -> Self {
        let grid = (0..=samples).map(|k| a + (b - a) * k as f64 / samples as f64).collect();
        Self { space, source: PairSource::Generic(Arc::new(frame)), fixed, a, b, grid, rotation: 0.0 }
    }

    pub fn rotated(&self, delta: f64) -> Self {
        let mut p = self.clone();
        p.rotation = delta;
        p
    }

    pub fn rotation(&self) -> f64 {
        self.rotation
    }

    fn rot_base(&self) -> CMatrix {
        // exp(−δJ/2) on one factor; J² = −I.
        let n = self.space.half_dim / 2;
        let h = 0.5 * self.rotation;
        identity(2 * n) * re(h.cos()) - j_matrix(n) * re(h.sin())
    }

    /// γ(t) and γ̇(t) for graph sources, with the rotation folded in as
    /// E γ E, E = exp(−δJ/2).
    fn graph_at(&self, t: f64) -> Option<(CMatrix, CMatrix)> {
        let PairSource::Graph(g) = &self.source else { return None };
        let (v, dv) = g.eval_with_derivative(t);
        if self.rotation == 0.0 {
            return Some((v, dv));
        }
        let e = self.rot_base();
        Some((&e * v * &e, &e * dv * &e))
    }

    /// Spanning (not necessarily orthonormal) frame of Λ(t).
    fn raw_frame(&self, t: f64) -> CMatrix {
        match &self.source {
            PairSource::Graph(_) => {
                let (g, _) = self.graph_at(t).expect("graph source");
                vstack(&identity(g.ncols()), &g)
            }
            PairSource::Generic(f) => {
                let z = f(t);
                if self.rotation == 0.0 {
                    z
                } else {
                    let h = 0.5 * self.rotation;
                    let d = self.space.dim();
                    (identity(d) * re(h.cos()) - &self.space.form * re(h.sin())) * z
                }
            }
        }
    }

    pub fn frame_at(&self, t: f64) -> CMatrix {
        self.raw_frame(t).qr().q()
    }

    /// Sines of the principal angles between Λ(t) and W, ascending.
    fn sines(&self, z: &CMatrix) -> Vec<f64> {
        let jw = &self.space.form * &self.fixed.frame;
        let mut s = full_svd(&(jw.adjoint() * z)).values;
        s.reverse();
        s
    }

    fn projector(&self, t: f64) -> CMatrix {
        let z = self.frame_at(t);
        &z * z.adjoint()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingRecord {
    pub t_star: f64,
    pub dim: usize,
    #[serde(skip)]
    pub intersection_frame: CMatrix,
    #[serde(skip)]
    pub gamma_form: CMatrix,
    pub gamma_eigenvalues: Vec<f64>,
    pub counts: MorseCounts,
    pub regular: bool,
    /// ‖closed form − finite differences‖ for graph sources.
    pub fd_discrepancy: Option<f64>,
}

impl CrossingRecord {
    pub fn signature(&self) -> i64 {
        self.counts.signature()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MaslovMethod {
    CrossingForm,
    Eigenphase,
    Monotone,
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub crossing_form: Option<i64>,
    pub eigenphase: Option<i64>,
    pub crossing_form_error: Option<String>,
    pub eigenphase_error: Option<String>,
    pub agree: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaslovResult {
    pub index: i64,
    pub crossings: Vec<CrossingRecord>,
    pub method: MaslovMethod,
    /// Rotation δ used to regularize crossings, if any.
    pub perturbation: Option<f64>,
    pub agreement: Option<Agreement>,
    /// dim(Λ(b) ∩ W).
    pub nullity: usize,
}

// ---------------------------------------------------------------------------
// Crossing detection

#[derive(Debug, Clone)]
pub struct Crossing {
    pub t: f64,
    pub frame: CMatrix,
}

/// Zeros (up to `thr`) of a nonnegative Lipschitz gap function on [a, b]
/// located by bisection of cells whose Lipschitz lower envelope can reach
/// 10·thr, then golden-section refinement. Returns (t*, g(t*)) per cluster.
fn locate_minima(g: &dyn Fn(f64) -> f64, grid: &[f64], values: &[f64], lip: f64, thr: f64) -> Result<Vec<(f64, f64)>> {
    let (a, b) = (grid[0], grid[grid.len() - 1]);
    let w_min = 1e-7 * (b - a);
    let cand_thr = 10.0 * thr;
    let mut cells: Vec<(f64, f64, f64, f64)> = grid
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| (t[0], t[1], v[0], v[1]))
        .filter(|&(l, r, gl, gr)| 0.5 * (gl + gr - lip * (r - l)) <= cand_thr)
        .collect();
    let mut evals = 0usize;
    loop {
        if cells.iter().all(|&(l, r, _, _)| r - l <= w_min) {
            break;
        }
        let mut next = Vec::with_capacity(cells.len() * 2);
        for (l, r, gl, gr) in cells {
            if r - l <= w_min {
                next.push((l, r, gl, gr));
                continue;
            }
            let m = 0.5 * (l + r);
            let gm = g(m);
            evals += 1;
            for (x, y, gx, gy) in [(l, m, gl, gm), (m, r, gm, gr)] {
                if 0.5 * (gx + gy - lip * (y - x)) <= cand_thr {
                    next.push((x, y, gx, gy));
                }
            }
        }
        cells = next;
        if evals > 200_000 || cells.len() > 20_000 {
            return Err(Error::Degenerate("crossing search did not isolate crossings".into()));
        }
    }
    // Cluster adjacent cells.
    let mut clusters: Vec<(f64, f64)> = Vec::new();
    for (l, r, _, _) in cells {
        match clusters.last_mut() {
            Some(last) if l <= last.1 + 1e-15 * (b - a) => last.1 = last.1.max(r),
            _ => clusters.push((l, r)),
        }
    }
    let mut out = Vec::new();
    for (l, r) in clusters {
        let (t, v) = golden_min(g, l, r, 1e-14 * (b - a).max(1.0));
        // Endpoints of the cluster can be the minimizer (e.g. at t = a).
        let (gl, gr) = (g(l), g(r));
        let best = [(t, v), (l, gl), (r, gr)].into_iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap();
        out.push(best);
    }
    Ok(out)
}

fn golden_min(g: &dyn Fn(f64) -> f64, mut l: f64, mut r: f64, tol: f64) -> (f64, f64) {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = r - phi * (r - l);
    let mut x2 = l + phi * (r - l);
    let mut f1 = g(x1);
    let mut f2 = g(x2);
    for _ in 0..200 {
        if r - l <= tol {
            break;
        }
        if f1 <= f2 {
            r = x2;
            x2 = x1;
            f2 = f1;
            x1 = r - phi * (r - l);
            f1 = g(x1);
        } else {
            l = x1;
            x1 = x2;
            f1 = f2;
            x2 = l + phi * (r - l);
            f2 = g(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn lipschitz_estimate(pp: &LagrangianPairPath, grid: &[f64]) -> f64 {
    let mut lip: f64 = 0.0;
    let mut prev = pp.projector(grid[0]);
    for k in 1..grid.len() {
        let cur = pp.projector(grid[k]);
        lip = lip.max(norm2(&(&cur - &prev)) / (grid[k] - grid[k - 1]));
        prev = cur;
    }
    2.0 * lip + 1e-12
}

/// Times where Λ(t) ∩ W ≠ {0}, with intersection frames.
pub fn detect_crossings(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<Vec<Crossing>> {
    let thr = pol.rank_tol;
    let gap = |t: f64| pp.sines(&pp.frame_at(t))[0];
    let values: Vec<f64> = pp.grid.iter().map(|&t| gap(t)).collect();
    // An intersection seen on three consecutive samples is not isolated.
    if let Some(k) = values.windows(3).position(|w| w.iter().all(|&x| x <= thr)) {
        return Err(Error::Degenerate(format!("non-isolated intersection near t = {}", pp.grid[k + 1])));
    }
    let lip = lipschitz_estimate(pp, &pp.grid);
    let minima = locate_minima(&gap, &pp.grid, &values, lip, thr)?;
    let span = pp.b - pp.a;
    let probe = 1e-5 * span;
    let mut out: Vec<Crossing> = Vec::new();
    for (t, v) in minima {
        if v > thr {
            continue;
        }
        // Snap to an endpoint when it is itself a crossing.
        let t = if t - pp.a < 1e-9 * span && gap(pp.a) <= thr {
            pp.a
        } else if pp.b - t < 1e-9 * span && gap(pp.b) <= thr {
            pp.b
        } else {
            t
        };
        let left = (t - probe).max(pp.a);
        let right = (t + probe).min(pp.b);
        let persistent = (left < t && gap(left) <= thr) || (right > t && gap(right) <= thr);
        if persistent {
            return Err(Error::Degenerate(format!("non-isolated intersection near t = {t}")));
        }
        if out.last().is_some_and(|c| (c.t - t).abs() < 1e-9 * span) {
            continue;
        }
        let frame = intersection_with_tol(&pp.frame_at(t), &pp.fixed.frame, thr);
        if frame.ncols() == 0 {
            continue;
        }
        out.push(Crossing { t, frame });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Crossing forms

/// Derivative at t of G(s) = B(s)A(s)⁻¹ where Λ(s) = span(Z0·A + 𝕁Z0·B).
fn graph_coordinate(pp: &LagrangianPairPath, z0: &CMatrix, t: f64) -> Result<CMatrix> {
    let z = pp.raw_frame(t);
    let cz = &pp.space.form * z0;
    let a = z0.adjoint() * &z;
    let b = cz.adjoint() * &z;
    Ok(b * inverse(&a)?)
}

fn fd_derivative(pp: &LagrangianPairPath, z0: &CMatrix, t: f64, h: f64) -> Result<CMatrix> {
    let g = |s: f64| graph_coordinate(pp, z0, s);
    let one = |h: f64| -> Result<CMatrix> {
        if t - 2.0 * h < pp.a {
            // Forward, second order.
            Ok((g(t)? * re(-3.0) + g(t + h)? * re(4.0) - g(t + 2.0 * h)?) * re(1.0 / (2.0 * h)))
        } else if t + 2.0 * h > pp.b {
            Ok((g(t)? * re(3.0) - g(t - h)? * re(4.0) + g(t - 2.0 * h)?) * re(1.0 / (2.0 * h)))
        } else {
            Ok((g(t + h)? - g(t - h)?) * re(1.0 / (2.0 * h)))
        }
    };
    // Richardson extrapolation of the second-order formulas.
    let d1 = one(h)?;
    let d2 = one(0.5 * h)?;
    Ok((d2 * re(4.0) - d1) * re(1.0 / 3.0))
}

/// Crossing form Γ on the intersection frame at a crossing, with the
/// finite-difference discrepancy for graph sources.
pub fn crossing_form(pp: &LagrangianPairPath, crossing: &Crossing) -> Result<(CMatrix, Option<f64>)> {
    let t = crossing.t;
    let x = &crossing.frame;
    let z0 = pp.frame_at(t);
    let span = pp.b - pp.a;
    let h = (1e-4 * span).min(1e-3);
    let dg = fd_derivative(pp, &z0, t, h)?;
    let d = z0.adjoint() * x;
    let fd = hermitian_part(&(d.adjoint() * dg.adjoint() * &d));
    match pp.graph_at(t) {
        Some((g, dg)) => {
            // B₂ = −γ*Jγ̇ restricted to the first components.
            let m = g.nrows() / 2;
            let j = j_matrix(m);
            let b2 = -(g.adjoint() * &j * &dg);
            let v = x.rows(0, 2 * m).into_owned();
            let closed = hermitian_part(&(v.adjoint() * b2 * &v));
            let disc = norm2(&(&closed - &fd));
            if disc > 1e-5 * (1.0 + norm2(&closed)) {
                return Err(Error::Inconsistency(format!(
                    "crossing form at t = {t}: closed form and finite differences differ by {disc:.3e}"
                )));
            }
            Ok((closed, Some(disc)))
        }
        None => Ok((fd, None)),
    }
}

fn record(pp: &LagrangianPairPath, c: &Crossing, pol: &TolerancePolicy) -> Result<CrossingRecord> {
    let (gamma, disc) = crossing_form(pp, c)?;
    let ev = hermitian_eigenvalues(&gamma, pol)?;
    let scale = ev.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let counts = counts_from_values(&ev, pol.eig_zero_tol * scale);
    Ok(CrossingRecord {
        t_star: c.t,
        dim: c.frame.ncols(),
        intersection_frame: c.frame.clone(),
        gamma_form: gamma,
        gamma_eigenvalues: ev,
        regular: counts.m_zero == 0,
        counts,
        fd_discrepancy: disc,
    })
}

fn nullity_at(pp: &LagrangianPairPath, t: f64, pol: &TolerancePolicy) -> usize {
    pp.sines(&pp.frame_at(t)).iter().filter(|&&s| s <= pol.rank_tol).count()
}

/// All crossing records without requiring regularity.
pub fn crossing_records(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<Vec<CrossingRecord>> {
    detect_crossings(pp, pol)?.iter().map(|c| record(pp, c, pol)).collect()
}

/// i = m⁺(Γ(a)) − m⁻(Γ(b)) + Σ_{a<t<b} sign Γ(t).
pub fn maslov_index_crossing_form(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<MaslovResult> {
    let records = crossing_records(pp, pol)?;
    let mut index = 0i64;
    for r in &records {
        if !r.regular {
            return Err(Error::Regularity { t_star: r.t_star, m_zero: r.counts.m_zero });
        }
        index += if r.t_star == pp.a {
            r.counts.m_plus as i64
        } else if r.t_star == pp.b {
            -(r.counts.m_minus as i64)
        } else {
            r.signature()
        };
    }
    Ok(MaslovResult {
        index,
        crossings: records,
        method: MaslovMethod::CrossingForm,
        perturbation: (pp.rotation != 0.0).then_some(pp.rotation),
        agreement: None,
        nullity: nullity_at(pp, pp.b, pol),
    })
}

// ---------------------------------------------------------------------------
// Eigenphases

struct PhaseSample {
    phases: Vec<f64>,
    vectors: CMatrix,
}

fn phase_sample(pp: &LagrangianPairPath, t: f64, pol: &TolerancePolicy) -> Result<PhaseSample> {
    let z = pp.frame_at(t);
    let u = unitary_rep(&z, &pp.space, pol)?;
    unitary_eigen(&(pp.fixed.unitary.adjoint() * u))
}

/// Eigenphases and eigenvectors of a unitary V through the Cayley transform
/// of W = e^{iφ}V, i(I − W)(I + W)⁻¹, which is Hermitian with V's
/// eigenvectors. φ keeps −1 away from the spectrum of W. Unlike a Schur
/// iteration this stays well behaved for clustered eigenvalues.
fn unitary_eigen(v: &CMatrix) -> Result<PhaseSample> {
    let m = v.nrows();
    let id = identity(m);
    let candidates = 4 * m + 1;
    let (phi, _) = (0..candidates)
        .map(|k| {
            let phi = 2.0 * PI * k as f64 / candidates as f64;
            (phi, smallest_singular_value(&(&id + v * C64::from_polar(1.0, phi))))
        })
        .fold((0.0, -1.0), |best, x| if x.1 > best.1 { x } else { best });
    let w = v * C64::from_polar(1.0, phi);
    let cayley = (&id - &w) * inverse(&(&id + &w))? * c(0.0, 1.0);
    let e = hermitian_part(&cayley).symmetric_eigen();
    let vectors = e.eigenvectors;
    let phases = (0..m)
        .map(|k| {
            let q = vectors.column(k);
            (q.adjoint() * v * q)[(0, 0)].arg()
        })
        .collect();
    Ok(PhaseSample { phases, vectors })
}

fn wrap(x: f64) -> f64 {
    let mut y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y += 2.0 * PI;
    }
    y
}

const MAX_PHASE_STEP: f64 = 0.5;

/// Match eigenpairs of `next` to `prev` by maximal overlap; returns the
/// permutation (prev index → next index) or None when the step is too large
/// or ambiguous.
fn match_phases(prev: &PhaseSample, next: &PhaseSample) -> Option<Vec<usize>> {
    let m = prev.phases.len();
    let ov = prev.vectors.adjoint() * &next.vectors;
    let cost: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| 1.0 - ov[(i, j)].norm_sqr()).collect()).collect();
    let assign = min_cost_assignment(&cost);
    for i in 0..m {
        let j = assign[i];
        let step = wrap(next.phases[j] - prev.phases[i]).abs();
        if step > MAX_PHASE_STEP {
            return None;
        }
        // A weak overlap is acceptable only inside a cluster of close phases.
        if ov[(i, j)].norm_sqr() < 0.5 {
            let clustered = (0..m).any(|k| k != i && wrap(prev.phases[k] - prev.phases[i]).abs() < MAX_PHASE_STEP)
                || (0..m).any(|k| k != j && wrap(next.phases[k] - next.phases[j]).abs() < MAX_PHASE_STEP);
            if !clustered {
                return None;
            }
        }
    }
    Some(assign)
}

/// −(spectral flow of V(t) = U′⁻¹U(t) through 1) with eigenvalue 1 counted on
/// the non-negative side.
pub fn maslov_index_eigenphase(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<MaslovResult> {
    let span = pp.b - pp.a;
    let min_width = 1e-12 * span.max(1.0);
    let first = phase_sample(pp, pp.a, pol)?;
    let m = first.phases.len();

    // Snap the phases that belong to Λ(a) ∩ W.
    let k_a = nullity_at(pp, pp.a, pol);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| first.phases[i].abs().total_cmp(&first.phases[j].abs()));
    let mut unwrapped = first.phases.clone();
    for &i in order.iter().take(k_a) {
        unwrapped[i] = 0.0;
    }
    let start = unwrapped.clone();

    let mut cur = first;
    let mut t = pp.a;
    // Branch bookkeeping: slot i of `unwrapped` follows eigenpair perm[i] of `cur`.
    let mut perm: Vec<usize> = (0..m).collect();
    let mut targets: Vec<f64> = pp.grid.iter().rev().copied().filter(|&x| x > pp.a).collect();
    while let Some(&next_t) = targets.last() {
        let next = phase_sample(pp, next_t, pol)?;
        let prev_aligned = PhaseSample {
            phases: perm.iter().map(|&k| cur.phases[k]).collect(),
            vectors: select_columns(&cur.vectors, &perm),
        };
        match match_phases(&prev_aligned, &next) {
            Some(assign) => {
                for i in 0..m {
                    unwrapped[i] += wrap(next.phases[assign[i]] - prev_aligned.phases[i]);
                }
                perm = assign;
                cur = next;
                t = next_t;
                targets.pop();
            }
            None => {
                if next_t - t <= min_width {
                    return Err(Error::Degenerate(format!("eigenphase tracking is ambiguous near t = {t}")));
                }
                targets.push(0.5 * (t + next_t));
            }
        }
    }

    // Snap the phases that belong to Λ(b) ∩ W to the nearest multiple of 2π.
    let k_b = nullity_at(pp, pp.b, pol);
    let dist = |x: f64| (x - 2.0 * PI * (x / (2.0 * PI)).round()).abs();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| dist(unwrapped[i]).total_cmp(&dist(unwrapped[j])));
    for &i in order.iter().take(k_b) {
        unwrapped[i] = 2.0 * PI * (unwrapped[i] / (2.0 * PI)).round();
    }
    let sf: i64 = (0..m)
        .map(|i| (unwrapped[i] / (2.0 * PI)).floor() as i64 - (start[i] / (2.0 * PI)).floor() as i64)
        .sum();
    Ok(MaslovResult {
        index: -sf,
        crossings: vec![],
        method: MaslovMethod::Eigenphase,
        perturbation: None,
        agreement: None,
        nullity: k_b,
    })
}

/// Rotation size below every negative endpoint eigenphase of V, so that the
/// rotated path has the same index and no endpoint crossings.
fn admissible_rotation(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<f64> {
    let mut delta: f64 = 0.05;
    for t in [pp.a, pp.b] {
        let s = phase_sample(pp, t, pol)?;
        let k = nullity_at(pp, t, pol);
        let mut ph = s.phases.clone();
        ph.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        for &x in ph.iter().skip(k) {
            if x < 0.0 {
                delta = delta.min(0.5 * x.abs());
            }
        }
    }
    Ok(delta)
}

/// Crossing-form index, retried on a rotated path when crossings are not
/// regular or not isolated.
pub fn maslov_index_crossing_form_regularized(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<MaslovResult> {
    match maslov_index_crossing_form(pp, pol) {
        Ok(r) => Ok(r),
        Err(e @ (Error::Regularity { .. } | Error::Degenerate(_))) => {
            let mut delta = admissible_rotation(pp, pol)?;
            let mut last = e;
            for _ in 0..3 {
                match maslov_index_crossing_form(&pp.rotated(delta), pol) {
                    Ok(r) => return Ok(r),
                    Err(e @ (Error::Regularity { .. } | Error::Degenerate(_))) => last = e,
                    Err(e) => return Err(e),
                }
                delta *= 0.25;
            }
            Err(last)
        }
        Err(e) => Err(e),
    }
}

/// Both algorithms on one pair path. Disagreement is an error.
pub fn maslov_index(pp: &LagrangianPairPath, pol: &TolerancePolicy) -> Result<MaslovResult> {
    let cf = maslov_index_crossing_form_regularized(pp, pol);
    let ep = maslov_index_eigenphase(pp, pol);
    let agreement = Agreement {
        crossing_form: cf.as_ref().ok().map(|r| r.index),
        eigenphase: ep.as_ref().ok().map(|r| r.index),
        crossing_form_error: cf.as_ref().err().map(|e| e.to_string()),
        eigenphase_error: ep.as_ref().err().map(|e| e.to_string()),
        agree: matches!((&cf, &ep), (Ok(x), Ok(y)) if x.index == y.index),
    };
    match (cf, ep) {
        (Ok(x), Ok(y)) if x.index != y.index => Err(Error::Inconsistency(format!(
            "crossing-form index {} differs from eigenphase index {}",
            x.index, y.index
        ))),
        (Ok(mut x), _) => {
            x.agreement = Some(agreement);
            Ok(x)
        }
        (Err(_), Ok(mut y)) => {
            y.agreement = Some(agreement);
            Ok(y)
        }
        (Err(e), Err(_)) => Err(e),
    }
}

/// i_W(γ) for a symplectic path and a Lagrangian W in the doubled space.
pub fn i_w(gamma: &SymplecticPath, w: &LagrangianFrame, pol: &TolerancePolicy) -> Result<MaslovResult> {
    maslov_index(&LagrangianPairPath::graph(gamma, w), pol)
}

/// i_{W(R)}(γ).
pub fn i_w_bc(gamma: &SymplecticPath, bc: &BoundaryCondition, pol: &TolerancePolicy) -> Result<MaslovResult> {
    i_w(gamma, &bc.w, pol)
}

/// Index of a path with −Jγ̇γ⁻¹ ⪰ 0 from intersection dimensions alone:
/// Σ_{a≤s<b} (dim(s) − dim(s⁺)).
pub fn maslov_monotone(gamma: &SymplecticPath, w: &LagrangianFrame, pol: &TolerancePolicy) -> Result<i64> {
    let pp = LagrangianPairPath::graph(gamma, w);
    let n = gamma.n;
    let j = j_matrix(n);
    for &t in &pp.grid {
        let (g, dg) = gamma.eval_with_derivative(t);
        let b1 = hermitian_part(&(-(&j * dg * inverse(&g)?)));
        let ev = hermitian_eigenvalues(&b1, pol)?;
        if ev[0] < -pol.eig_zero_tol * (1.0 + norm2(&b1)) {
            return Err(Error::contract(format!("path is not monotone at t = {t} (eigenvalue {:.3e})", ev[0])));
        }
    }
    let thr = pol.rank_tol;
    let sines: Vec<Vec<f64>> = pp.grid.iter().map(|&t| pp.sines(&pp.frame_at(t))).collect();
    let counts: Vec<usize> = sines.iter().map(|s| s.iter().filter(|&&x| x <= thr).count()).collect();
    let mut index = 0i64;
    for k in 0..counts.len() - 1 {
        index += counts[k].saturating_sub(counts[k + 1]) as i64;
    }
    // Isolated spikes strictly inside cells of constant count.
    let lip = lipschitz_estimate(&pp, &pp.grid);
    let span = pp.b - pp.a;
    let mut found: Vec<f64> = Vec::new();
    for k in 0..counts.len() - 1 {
        let base = counts[k];
        if counts[k + 1] != base || base >= pp.space.half_dim {
            continue;
        }
        let g = |t: f64| pp.sines(&pp.frame_at(t))[base];
        let cell = [pp.grid[k], pp.grid[k + 1]];
        let vals = [sines[k][base], sines[k + 1][base]];
        for (t, v) in locate_minima(&g, &cell, &vals, lip, thr)? {
            if v > thr || t <= pp.grid[k] || t >= pp.grid[k + 1] || found.iter().any(|&f| (f - t).abs() < 1e-9 * span) {
                continue;
            }
            found.push(t);
            index += nullity_at(&pp, t, pol).saturating_sub(base) as i64;
        }
    }
    Ok(index)
}

/// dim(Gr(M) ∩ W) in the doubled space.
pub fn graph_nullity(m: &CMatrix, w: &LagrangianFrame, pol: &TolerancePolicy) -> usize {
    subspace_intersection(&graph_frame(m), &w.frame, pol).ncols()
}
