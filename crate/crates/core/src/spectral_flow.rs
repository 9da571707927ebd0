//! Spectral flow of continuous Hermitian matrix families and the finite
//! dimensional relative Morse index.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::*;

type Generator = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

/// Hermitian matrices A(s) sampled on 0 = s_0 < … < s_M = 1, optionally
/// backed by a generator for refinement.
#[derive(Clone)]
pub struct HermitianFamily {
    pub d: usize,
    pub s: Vec<f64>,
    pub samples: Vec<CMatrix>,
    generator: Option<Generator>,
}

impl fmt::Debug for HermitianFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HermitianFamily")
            .field("d", &self.d)
            .field("samples", &self.s.len())
            .field("generator", &self.generator.is_some())
            .finish()
    }
}

fn check_hermitian(a: &CMatrix, d: usize, pol: &TolerancePolicy) -> Result<()> {
    if a.shape() != (d, d) {
        return Err(Error::contract(format!("family sample has shape {:?}, expected {d}×{d}", a.shape())));
    }
    if !is_finite(a) {
        return Err(Error::input("family sample is not finite"));
    }
    let defect = hermitian_defect(a);
    if defect > pol.residual_tol * (1.0 + a.norm()) {
        return Err(Error::contract(format!("family sample is not Hermitian (defect {defect:.3e})")));
    }
    Ok(())
}

impl HermitianFamily {
    pub fn from_fn(d: usize, intervals: usize, f: impl Fn(f64) -> CMatrix + Send + Sync + 'static, pol: &TolerancePolicy) -> Result<Self> {
        let intervals = intervals.max(1);
        let s: Vec<f64> = (0..=intervals).map(|k| k as f64 / intervals as f64).collect();
        let samples: Vec<CMatrix> = s.iter().map(|&x| f(x)).collect();
        for a in &samples {
            check_hermitian(a, d, pol)?;
        }
        let samples = samples.iter().map(hermitian_part).collect();
        Ok(Self { d, s, samples, generator: Some(Arc::new(f)) })
    }

    pub fn from_samples(s: Vec<f64>, samples: Vec<CMatrix>, pol: &TolerancePolicy) -> Result<Self> {
        if s.len() != samples.len() || s.len() < 2 {
            return Err(Error::contract("a family needs at least two samples with matching parameters"));
        }
        if s[0] != 0.0 || s[s.len() - 1] != 1.0 || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::contract("family parameters must increase from 0 to 1"));
        }
        let d = samples[0].nrows();
        for a in &samples {
            check_hermitian(a, d, pol)?;
        }
        let samples = samples.iter().map(hermitian_part).collect();
        Ok(Self { d, s, samples, generator: None })
    }

    /// A + sB.
    pub fn linear(a: &CMatrix, b: &CMatrix, pol: &TolerancePolicy) -> Result<Self> {
        let (a, b) = (a.clone(), b.clone());
        Self::from_fn(a.nrows(), 16, move |s| &a + &b * re(s), pol)
    }

    pub fn at(&self, s: f64) -> CMatrix {
        if let Some(g) = &self.generator {
            return hermitian_part(&g(s));
        }
        let k = match self.s.binary_search_by(|x| x.total_cmp(&s)) {
            Ok(k) => return self.samples[k].clone(),
            Err(k) => k.clamp(1, self.s.len() - 1),
        };
        let w = (s - self.s[k - 1]) / (self.s[k] - self.s[k - 1]);
        &self.samples[k - 1] * re(1.0 - w) + &self.samples[k] * re(w)
    }

    /// Largest movement ‖A(s_{k+1}) − A(s_k)‖ between consecutive samples.
    pub fn continuity(&self) -> f64 {
        self.samples.windows(2).map(|w| norm2(&(&w[1] - &w[0]))).fold(0.0, f64::max)
    }

    pub fn max_norm(&self) -> f64 {
        self.samples.iter().map(norm2).fold(0.0, f64::max)
    }

    /// s ↦ P(s)* A(s) P(s).
    pub fn congruence(&self, p: impl Fn(f64) -> CMatrix + Send + Sync + 'static, pol: &TolerancePolicy) -> Result<Self> {
        let me = self.clone();
        let intervals = self.s.len() - 1;
        Self::from_fn(self.d, intervals, move |s| {
            let ps = p(s);
            ps.adjoint() * me.at(s) * ps
        }, pol)
    }

    pub fn direct_sum(&self, other: &Self, pol: &TolerancePolicy) -> Result<Self> {
        let (a, b) = (self.clone(), other.clone());
        let intervals = (self.s.len() - 1).max(other.s.len() - 1);
        Self::from_fn(self.d + other.d, intervals, move |s| block_diag(&a.at(s), &b.at(s)), pol)
    }

    /// The family on [lo, hi], reparametrized to [0, 1].
    pub fn restrict(&self, lo: f64, hi: f64, pol: &TolerancePolicy) -> Result<Self> {
        let me = self.clone();
        let intervals = self.s.len() - 1;
        Self::from_fn(self.d, intervals, move |s| me.at(lo + s * (hi - lo)), pol)
    }

    /// Insert midpoints until consecutive samples move less than `limit`.
    fn refined(&self, limit: f64, max_samples: usize) -> Self {
        let Some(g) = &self.generator else { return self.clone() };
        let mut s = vec![self.s[0]];
        let mut samples = vec![self.samples[0].clone()];
        for k in 1..self.s.len() {
            let mut stack = vec![(self.s[k], self.samples[k].clone())];
            while let Some((t, a)) = stack.pop() {
                let (t0, a0) = (s[s.len() - 1], &samples[samples.len() - 1]);
                if norm2(&(&a - a0)) < limit || s.len() + stack.len() >= max_samples || t - t0 < 1e-12 {
                    s.push(t);
                    samples.push(a);
                } else {
                    let m = 0.5 * (t0 + t);
                    stack.push((t, a));
                    stack.push((m, hermitian_part(&g(m))));
                }
            }
        }
        Self { d: self.d, s, samples, generator: self.generator.clone() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    pub s: f64,
    pub negative: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralFlowResult {
    pub sf: i64,
    pub delta_used: f64,
    pub start: MorseCounts,
    pub end: MorseCounts,
    pub trace: Vec<TraceEntry>,
    /// max ‖A(s_{k+1}) − A(s_k)‖ after refinement; certified when < δ/2.
    pub continuity: f64,
    pub certified: bool,
    /// Eigenvalues within 10× the zero threshold, with their parameter.
    pub near_threshold: Vec<(f64, f64)>,
}

const MAX_SAMPLES: usize = 1 << 16;

fn zero_tol(a_norm: f64, pol: &TolerancePolicy) -> f64 {
    pol.eig_zero_tol * a_norm.max(1.0)
}

fn negatives_shifted(a: &CMatrix, delta: f64, pol: &TolerancePolicy) -> Result<usize> {
    let shifted = a + identity(a.nrows()) * re(delta);
    Ok(hermitian_eigenvalues(&shifted, pol)?.iter().filter(|&&x| x < 0.0).count())
}

/// sf = m⁻(A(0) + δI) − m⁻(A(1) + δI), kernel counted on the non-negative
/// side.
pub fn spectral_flow(fam: &HermitianFamily, pol: &TolerancePolicy) -> Result<SpectralFlowResult> {
    let scale = fam.max_norm();
    let ztol = zero_tol(scale, pol);
    let e0 = hermitian_eigenvalues(&fam.samples[0], pol)?;
    let e1 = hermitian_eigenvalues(&fam.samples[fam.samples.len() - 1], pol)?;
    let mut near = Vec::new();
    let mut gap = f64::INFINITY;
    for (s, ev) in [(0.0, &e0), (1.0, &e1)] {
        for &x in ev.iter() {
            if x.abs() > ztol {
                gap = gap.min(x.abs());
            }
            if x.abs() <= 10.0 * ztol && x != 0.0 {
                near.push((s, x));
            }
        }
    }
    let cap = 1e-3 * (1.0 + scale);
    let delta = (0.5 * gap).min(cap);
    if delta <= ztol {
        return Err(Error::Tolerance(format!(
            "endpoint eigenvalue {gap:.3e} is too close to the zero threshold {ztol:.3e} for a δ-shift"
        )));
    }
    let start = counts_from_values(&e0, ztol);
    let end = counts_from_values(&e1, ztol);

    // The shifted matrices see zero-classified eigenvalues as ≥ δ − ztol > 0.
    let first = negatives_shifted(&fam.samples[0], delta, pol)?;
    let last = negatives_shifted(&fam.samples[fam.samples.len() - 1], delta, pol)?;
    let sf = first as i64 - last as i64;
    let first_h = negatives_shifted(&fam.samples[0], 0.5 * delta, pol)?;
    let last_h = negatives_shifted(&fam.samples[fam.samples.len() - 1], 0.5 * delta, pol)?;
    if first_h as i64 - last_h as i64 != sf {
        return Err(Error::Convergence(format!("spectral flow changes when δ = {delta:.3e} is halved")));
    }
    if sf != start.m_minus as i64 - end.m_minus as i64 {
        return Err(Error::Inconsistency("shifted negative counts disagree with endpoint classification".into()));
    }

    let fine = fam.refined(0.5 * delta, MAX_SAMPLES);
    let mut trace = Vec::with_capacity(fine.s.len());
    for (s, a) in fine.s.iter().zip(&fine.samples) {
        trace.push(TraceEntry { s: *s, negative: negatives_shifted(a, delta, pol)? });
    }
    let continuity = fine.continuity();
    Ok(SpectralFlowResult {
        sf,
        delta_used: delta,
        start,
        end,
        trace,
        continuity,
        certified: continuity < 0.5 * delta,
        near_threshold: near,
    })
}

/// I(A, A + B) = −sf{A + sB}.
pub fn relative_morse_index(a: &CMatrix, b: &CMatrix, pol: &TolerancePolicy) -> Result<i64> {
    Ok(-spectral_flow(&HermitianFamily::linear(a, b, pol)?, pol)?.sf)
}

/// Both sides of I(PAP, A) = m⁻(A|_N) + dim ker A|_N − dim ker A with
/// N = {x : ⟨Ax, y⟩ = 0 for all y ∈ im P}.
pub fn morse_formula_check(a: &CMatrix, p: &CMatrix, pol: &TolerancePolicy) -> Result<(i64, i64)> {
    let d = a.nrows();
    let pap = p * a * p;
    let lhs = relative_morse_index(&pap, &(a - &pap), pol)?;
    let f = orthonormalize(p, pol);
    let n = if f.ncols() == 0 { identity(d) } else { kernel_basis(&(f.adjoint() * a), pol) };
    let scale = norm2(a);
    let ztol = zero_tol(scale, pol);
    let restricted = n.adjoint() * a * &n;
    let rc = if restricted.nrows() == 0 { MorseCounts::default() } else { counts_from_values(&hermitian_eigenvalues(&restricted, pol)?, ztol) };
    let ka = counts_from_values(&hermitian_eigenvalues(a, pol)?, ztol).m_zero;
    let rhs = rc.m_minus as i64 + rc.m_zero as i64 - ka as i64;
    Ok((lhs, rhs))
}

fn kernel_dim_separated(a: &CMatrix, ztol: f64) -> Result<usize> {
    let sv = full_svd(a).values;
    if let Some(x) = sv.iter().find(|&&x| x > ztol && x <= 100.0 * ztol) {
        return Err(Error::Tolerance(format!("singular value {x:.3e} is within 100× the kernel threshold")));
    }
    Ok(sv.iter().filter(|&&x| x <= ztol).count() + a.ncols().saturating_sub(sv.len()))
}

/// (sf of [[0, A*], [A, 0]], dim ker A(1) − dim ker A(0)).
pub fn block_flow_check(d: usize, a: impl Fn(f64) -> CMatrix + Send + Sync + 'static, intervals: usize, pol: &TolerancePolicy) -> Result<(i64, i64)> {
    let a = Arc::new(a);
    let a0 = a(0.0);
    let a1 = a(1.0);
    if a0.shape() != (d, d) || a1.shape() != (d, d) {
        return Err(Error::contract(format!("block family must be {d}×{d}")));
    }
    let g = a.clone();
    let fam = HermitianFamily::from_fn(2 * d, intervals, move |s| {
        let x = g(s);
        let z = zeros(d, d);
        vstack(&hstack(&z, &x.adjoint()), &hstack(&x, &z))
    }, pol)?;
    let ztol = zero_tol(fam.max_norm(), pol);
    let k0 = kernel_dim_separated(&a0, ztol)?;
    let k1 = kernel_dim_separated(&a1, ztol)?;
    Ok((spectral_flow(&fam, pol)?.sf, k1 as i64 - k0 as i64))
}

/// Σ_{0<s≤1} (dim ker A_s − lim_{t→s⁻} dim ker A_t) for a nondecreasing
/// family; kernel points are expected on the sample grid.
pub fn monotone_kernel_jumps(fam: &HermitianFamily, pol: &TolerancePolicy) -> Result<i64> {
    let ztol = zero_tol(fam.max_norm(), pol);
    for (k, w) in fam.samples.windows(2).enumerate() {
        let diff = hermitian_part(&(&w[1] - &w[0]));
        let low = hermitian_eigenvalues(&diff, pol)?[0];
        if low < -ztol {
            return Err(Error::contract(format!("family decreases on [{}, {}]", fam.s[k], fam.s[k + 1])));
        }
    }
    let kdim = |a: &CMatrix| -> Result<usize> { Ok(counts_from_values(&hermitian_eigenvalues(a, pol)?, ztol).m_zero) };
    let mut total = 0i64;
    for k in 1..fam.s.len() {
        let here = kdim(&fam.samples[k])?;
        let left = if fam.generator.is_some() {
            kdim(&fam.at(0.5 * (fam.s[k - 1] + fam.s[k])))?
        } else {
            here.min(kdim(&fam.samples[k - 1])?)
        };
        total += here as i64 - left as i64;
    }
    Ok(total)
}
