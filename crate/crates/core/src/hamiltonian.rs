//! Coefficient paths (p, q, r), the Hamiltonian b(t), fundamental solutions
//! of u̇ = J b u, and frame changes of coefficients and paths.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::*;
use crate::symplectic::{j_matrix, symplectic_defect};

pub type ValueAndDerivative = Arc<dyn Fn(f64) -> (CMatrix, CMatrix) + Send + Sync>;

/// A time-dependent matrix.
#[derive(Clone)]
pub enum MatrixFunction {
    Constant(CMatrix),
    /// Σ_k c_k t^k.
    Poly(Vec<CMatrix>),
    /// Linear interpolation between samples (clamped outside the range).
    Samples { times: Vec<f64>, values: Vec<CMatrix> },
    /// Pointwise value and derivative.
    Custom { rows: usize, cols: usize, f: ValueAndDerivative },
}

impl fmt::Debug for MatrixFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(m) => write!(f, "Constant({}x{})", m.nrows(), m.ncols()),
            Self::Poly(c) => write!(f, "Poly(degree {})", c.len().saturating_sub(1)),
            Self::Samples { times, .. } => write!(f, "Samples({} points)", times.len()),
            Self::Custom { rows, cols, .. } => write!(f, "Custom({rows}x{cols})"),
        }
    }
}

impl MatrixFunction {
    pub fn constant(m: CMatrix) -> Self {
        Self::Constant(m)
    }

    pub fn custom(rows: usize, cols: usize, f: impl Fn(f64) -> (CMatrix, CMatrix) + Send + Sync + 'static) -> Self {
        Self::Custom { rows, cols, f: Arc::new(f) }
    }

    pub fn samples(times: Vec<f64>, values: Vec<CMatrix>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::input("samples need at least two times and one value per time"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("sample times must be strictly increasing"));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::input("sample values must share one shape"));
        }
        Ok(Self::Samples { times, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            Self::Constant(m) => m.shape(),
            Self::Poly(c) => c.first().map(|m| m.shape()).unwrap_or((0, 0)),
            Self::Samples { values, .. } => values[0].shape(),
            Self::Custom { rows, cols, .. } => (*rows, *cols),
        }
    }

    fn as_poly(&self) -> Option<Vec<CMatrix>> {
        match self {
            Self::Constant(m) => Some(vec![m.clone()]),
            Self::Poly(c) => Some(c.clone()),
            _ => None,
        }
    }

    fn segment(times: &[f64], t: f64) -> usize {
        let k = times.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(times.len() - 2)
    }

    pub fn eval(&self, t: f64) -> CMatrix {
        match self {
            Self::Constant(m) => m.clone(),
            Self::Poly(c) => {
                let mut acc = zeros(c[0].nrows(), c[0].ncols());
                for m in c.iter().rev() {
                    acc = acc * re(t) + m;
                }
                acc
            }
            Self::Samples { times, values } => {
                let t = t.clamp(times[0], times[times.len() - 1]);
                let k = Self::segment(times, t);
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                &values[k] * re(1.0 - w) + &values[k + 1] * re(w)
            }
            Self::Custom { f, .. } => f(t).0,
        }
    }

    pub fn derivative(&self, t: f64) -> CMatrix {
        match self {
            Self::Constant(m) => zeros(m.nrows(), m.ncols()),
            Self::Poly(c) => {
                let mut acc = zeros(c[0].nrows(), c[0].ncols());
                for (k, m) in c.iter().enumerate().skip(1).rev() {
                    acc = acc * re(t) + m * re(k as f64);
                }
                acc
            }
            Self::Samples { times, values } => {
                // Centered differences at the nodes, one-sided at the ends,
                // linearly interpolated in between.
                let last = times.len() - 1;
                let node = |k: usize| -> CMatrix {
                    let (lo, hi) = if k == 0 {
                        (0, 1)
                    } else if k == last {
                        (last - 1, last)
                    } else {
                        (k - 1, k + 1)
                    };
                    (&values[hi] - &values[lo]) * re(1.0 / (times[hi] - times[lo]))
                };
                let t = t.clamp(times[0], times[last]);
                let k = Self::segment(times, t);
                let w = (t - times[k]) / (times[k + 1] - times[k]);
                node(k) * re(1.0 - w) + node(k + 1) * re(w)
            }
            Self::Custom { f, .. } => f(t).1,
        }
    }

    pub fn value_and_derivative(&self, t: f64) -> (CMatrix, CMatrix) {
        match self {
            Self::Custom { f, .. } => f(t),
            _ => (self.eval(t), self.derivative(t)),
        }
    }

    pub fn is_hermitian_valued(&self) -> bool {
        let (r, k) = self.shape();
        r == k
    }

    /// Pointwise product.
    pub fn mul(&self, other: &MatrixFunction) -> MatrixFunction {
        if let (Some(a), Some(b)) = (self.as_poly(), other.as_poly()) {
            let mut out = vec![zeros(a[0].nrows(), b[0].ncols()); a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            return simplify(out);
        }
        let (f, g) = (self.clone(), other.clone());
        let (rows, _) = self.shape();
        let (_, cols) = other.shape();
        MatrixFunction::custom(rows, cols, move |t| {
            let (a, da) = f.value_and_derivative(t);
            let (b, db) = g.value_and_derivative(t);
            (&a * &b, da * &b + a * db)
        })
    }

    pub fn add(&self, other: &MatrixFunction) -> MatrixFunction {
        if let (Some(mut a), Some(b)) = (self.as_poly(), other.as_poly()) {
            if a.len() < b.len() {
                a.resize(b.len(), zeros(b[0].nrows(), b[0].ncols()));
            }
            for (i, y) in b.iter().enumerate() {
                a[i] += y;
            }
            return simplify(a);
        }
        let (f, g) = (self.clone(), other.clone());
        let (rows, cols) = self.shape();
        MatrixFunction::custom(rows, cols, move |t| {
            let (a, da) = f.value_and_derivative(t);
            let (b, db) = g.value_and_derivative(t);
            (a + b, da + db)
        })
    }

    pub fn adjoint(&self) -> MatrixFunction {
        match self {
            Self::Constant(m) => Self::Constant(m.adjoint()),
            Self::Poly(c) => Self::Poly(c.iter().map(|m| m.adjoint()).collect()),
            Self::Samples { times, values } => Self::Samples {
                times: times.clone(),
                values: values.iter().map(|m| m.adjoint()).collect(),
            },
            Self::Custom { rows, cols, f } => {
                let f = f.clone();
                Self::custom(*cols, *rows, move |t| {
                    let (a, da) = f(t);
                    (a.adjoint(), da.adjoint())
                })
            }
        }
    }

    pub fn derivative_function(&self) -> MatrixFunction {
        if let Some(c) = self.as_poly() {
            if c.len() == 1 {
                return Self::Constant(zeros(c[0].nrows(), c[0].ncols()));
            }
            return simplify(c.iter().enumerate().skip(1).map(|(k, m)| m * re(k as f64)).collect());
        }
        let f = self.clone();
        let (rows, cols) = self.shape();
        // Second derivatives are not needed downstream; report zero.
        MatrixFunction::custom(rows, cols, move |t| (f.derivative(t), zeros(rows, cols)))
    }

    pub fn scale(&self, s: f64) -> MatrixFunction {
        match self {
            Self::Constant(m) => Self::Constant(m * re(s)),
            Self::Poly(c) => Self::Poly(c.iter().map(|m| m * re(s)).collect()),
            Self::Samples { times, values } => Self::Samples {
                times: times.clone(),
                values: values.iter().map(|m| m * re(s)).collect(),
            },
            Self::Custom { rows, cols, f } => {
                let f = f.clone();
                Self::custom(*rows, *cols, move |t| {
                    let (a, da) = f(t);
                    (a * re(s), da * re(s))
                })
            }
        }
    }

    /// (1 − s)·self + s·other.
    pub fn lerp(&self, other: &MatrixFunction, s: f64) -> MatrixFunction {
        self.scale(1.0 - s).add(&other.scale(s))
    }
}

fn simplify(c: Vec<CMatrix>) -> MatrixFunction {
    if c.len() == 1 {
        MatrixFunction::Constant(c.into_iter().next().unwrap())
    } else {
        MatrixFunction::Poly(c)
    }
}

/// s ↦ (p_s, q_s, r_s).
#[derive(Debug, Clone)]
pub enum Homotopy {
    /// p_s = p, q_s = s·q, r_s = s·r.
    Scaled,
    /// Linear interpolation from (p0, q0, r0) at s = 0 to (p, q, r) at s = 1.
    Linear { p0: MatrixFunction, q0: MatrixFunction, r0: MatrixFunction },
}

#[derive(Debug, Clone)]
pub struct CoefficientPath {
    pub n: usize,
    pub t_end: f64,
    pub p: MatrixFunction,
    pub q: MatrixFunction,
    pub r: MatrixFunction,
    pub homotopy: Homotopy,
}

pub struct Coefficients {
    pub p: CMatrix,
    pub q: CMatrix,
    pub r: CMatrix,
}

impl CoefficientPath {
    pub fn new(n: usize, t_end: f64, p: MatrixFunction, q: MatrixFunction, r: MatrixFunction) -> Result<Self> {
        let path = Self { n, t_end, p, q, r, homotopy: Homotopy::Scaled };
        path.check_shapes()?;
        Ok(path)
    }

    pub fn constant(p: CMatrix, q: CMatrix, r: CMatrix, t_end: f64) -> Result<Self> {
        let n = p.nrows();
        Self::new(n, t_end, MatrixFunction::Constant(p), MatrixFunction::Constant(q), MatrixFunction::Constant(r))
    }

    pub fn with_homotopy(mut self, h: Homotopy) -> Result<Self> {
        self.homotopy = h;
        self.check_shapes()?;
        Ok(self)
    }

    fn check_shapes(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::input(format!("time horizon must be positive, got {}", self.t_end)));
        }
        let mut fs = vec![("p", &self.p), ("q", &self.q), ("r", &self.r)];
        if let Homotopy::Linear { p0, q0, r0 } = &self.homotopy {
            fs.extend([("p0", p0), ("q0", q0), ("r0", r0)]);
        }
        for (name, f) in fs {
            if f.shape() != (self.n, self.n) {
                return Err(Error::input(format!(
                    "coefficient {name} has shape {:?}, expected {}x{}",
                    f.shape(),
                    self.n,
                    self.n
                )));
            }
        }
        Ok(())
    }

    pub fn at(&self, s: f64, t: f64) -> Coefficients {
        match &self.homotopy {
            Homotopy::Scaled => Coefficients {
                p: self.p.eval(t),
                q: self.q.eval(t) * re(s),
                r: self.r.eval(t) * re(s),
            },
            Homotopy::Linear { p0, q0, r0 } => Coefficients {
                p: p0.eval(t) * re(1.0 - s) + self.p.eval(t) * re(s),
                q: q0.eval(t) * re(1.0 - s) + self.q.eval(t) * re(s),
                r: r0.eval(t) * re(1.0 - s) + self.r.eval(t) * re(s),
            },
        }
    }

    /// The coefficients of the form at a fixed s, as an s-independent path.
    pub fn at_s(&self, s: f64) -> CoefficientPath {
        let (p, q, r) = match &self.homotopy {
            Homotopy::Scaled => (self.p.clone(), self.q.scale(s), self.r.scale(s)),
            Homotopy::Linear { p0, q0, r0 } => (p0.lerp(&self.p, s), q0.lerp(&self.q, s), r0.lerp(&self.r, s)),
        };
        CoefficientPath { n: self.n, t_end: self.t_end, p, q, r, homotopy: Homotopy::Scaled }
    }

    pub fn check_grid(&self, points: usize) -> Vec<f64> {
        let mut g: Vec<f64> = (0..=points).map(|k| self.t_end * k as f64 / points as f64).collect();
        for f in [&self.p, &self.q, &self.r] {
            if let MatrixFunction::Samples { times, .. } = f {
                g.extend(times.iter().copied().filter(|&t| (0.0..=self.t_end).contains(&t)));
            }
        }
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }

    fn s_values(&self) -> Vec<f64> {
        match self.homotopy {
            Homotopy::Scaled => vec![1.0],
            Homotopy::Linear { .. } => (0..=8).map(|k| k as f64 / 8.0).collect(),
        }
    }

    /// Hermiticity of p and r and invertibility of p on a sampled grid.
    pub fn validate(&self, pol: &TolerancePolicy) -> Result<()> {
        for s in self.s_values() {
            for t in self.check_grid(64) {
                let c = self.at(s, t);
                if !is_finite(&c.p) || !is_finite(&c.q) || !is_finite(&c.r) {
                    return Err(Error::input(format!("non-finite coefficient at t = {t}")));
                }
                for (name, m) in [("p", &c.p), ("r", &c.r)] {
                    if hermitian_defect(m) > pol.residual_tol * (1.0 + m.norm()) {
                        return Err(Error::input(format!("coefficient {name} is not Hermitian at t = {t}")));
                    }
                }
                let smin = smallest_singular_value(&c.p);
                if !(smin > pol.rank_tol) {
                    return Err(Error::SingularCoefficient { t, sigma_min: smin });
                }
            }
        }
        Ok(())
    }

    /// Whether p is positive definite on the check grid.
    pub fn p_positive(&self, pol: &TolerancePolicy) -> Result<bool> {
        for s in self.s_values() {
            for t in self.check_grid(64) {
                let ev = hermitian_eigenvalues(&hermitian_part(&self.at(s, t).p), pol)?;
                if ev[0] <= 0.0 {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Whether p_s does not depend on s.
    pub fn p_is_s_independent(&self) -> bool {
        match &self.homotopy {
            Homotopy::Scaled => true,
            Homotopy::Linear { p0, .. } => self
                .check_grid(32)
                .iter()
                .all(|&t| (p0.eval(t) - self.p.eval(t)).norm() <= 1e-14 * (1.0 + self.p.eval(t).norm())),
        }
    }

    /// Largest ‖p‖ + ‖p⁻¹‖ + ‖q‖ + ‖r‖ seen on the check grid.
    pub fn scale_bound(&self) -> f64 {
        let mut m: f64 = 0.0;
        for s in self.s_values() {
            for t in self.check_grid(32) {
                let c = self.at(s, t);
                let pinv = inverse(&c.p).map(|x| x.norm()).unwrap_or(f64::INFINITY);
                m = m.max(c.p.norm() + pinv + c.q.norm() + c.r.norm());
            }
        }
        m
    }
}

/// b = [[p⁻¹, −p⁻¹q], [−q*p⁻¹, q*p⁻¹q − r]].
pub fn b_from(c: &Coefficients, t: f64) -> Result<CMatrix> {
    let n = c.p.nrows();
    let smin = smallest_singular_value(&c.p);
    if !(smin > 1e-13 * (1.0 + c.p.norm())) {
        return Err(Error::SingularCoefficient { t, sigma_min: smin });
    }
    let pinv = inverse(&c.p)?;
    let pinv_q = &pinv * &c.q;
    let mut b = zeros(2 * n, 2 * n);
    b.view_mut((0, 0), (n, n)).copy_from(&pinv);
    b.view_mut((0, n), (n, n)).copy_from(&(-&pinv_q));
    b.view_mut((n, 0), (n, n)).copy_from(&(-(c.q.adjoint() * &pinv)));
    b.view_mut((n, n), (n, n)).copy_from(&(c.q.adjoint() * &pinv_q - &c.r));
    Ok(hermitian_part(&b))
}

pub fn assemble_b(coeffs: &CoefficientPath, s: f64, t: f64) -> Result<CMatrix> {
    b_from(&coeffs.at(s, t), t)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub steps: Option<usize>,
    pub renormalize: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { steps: None, renormalize: false }
    }
}

pub type Rhs = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

#[derive(Clone)]
enum Dense {
    /// Re-integrate y' = A(t) y from the nearest stored sample.
    Ode(Rhs),
    Exact(ValueAndDerivative),
    Linear,
}

/// A sampled path in Sp(2n, C) that can be evaluated between samples.
#[derive(Clone)]
pub struct SymplecticPath {
    pub n: usize,
    pub grid: Vec<f64>,
    pub values: Vec<CMatrix>,
    pub max_symplectic_residual: f64,
    dense: Dense,
}

impl fmt::Debug for SymplecticPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymplecticPath")
            .field("n", &self.n)
            .field("span", &self.span())
            .field("samples", &self.grid.len())
            .field("max_symplectic_residual", &self.max_symplectic_residual)
            .finish()
    }
}

fn uniform_grid(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|i| if i == k { b } else { a + (b - a) * i as f64 / k as f64 }).collect()
}

fn rk4_step(rhs: &dyn Fn(f64) -> CMatrix, t: f64, h: f64, y: &CMatrix) -> CMatrix {
    let a1 = rhs(t);
    let a2 = rhs(t + 0.5 * h);
    let a3 = rhs(t + h);
    let k1 = &a1 * y;
    let k2 = &a2 * (y + &k1 * re(0.5 * h));
    let k3 = &a2 * (y + &k2 * re(0.5 * h));
    let k4 = &a3 * (y + &k3 * re(h));
    y + (k1 + k2 * re(2.0) + k3 * re(2.0) + k4) * re(h / 6.0)
}

/// Restore M*JM = J by M ← M·S^{-1/2}, S = −J M* J M.
pub fn symplectic_projection(m: &CMatrix) -> CMatrix {
    let d = m.nrows();
    let j = j_matrix(d / 2);
    let s = -(&j * m.adjoint() * &j * m);
    let id = identity(d);
    let mut y = s;
    let mut z = id.clone();
    for _ in 0..4 {
        let t = (&id * re(3.0) - &z * &y) * re(0.5);
        y = &y * &t;
        z = &t * &z;
    }
    m * z
}

/// ‖M*JM − J‖ / ‖M‖²; roundoff in M*JM scales with ‖M‖².
pub fn relative_defect(m: &CMatrix) -> f64 {
    symplectic_defect(m) / norm2(m).powi(2).max(1.0)
}

/// Integrate y' = A(t) y on a uniform grid with `steps` steps.
pub fn integrate_linear(rhs: &dyn Fn(f64) -> CMatrix, y0: &CMatrix, a: f64, b: f64, steps: usize, renormalize: bool) -> (Vec<f64>, Vec<CMatrix>) {
    let grid = uniform_grid(a, b, steps);
    let mut values = Vec::with_capacity(grid.len());
    let mut y = y0.clone();
    values.push(y.clone());
    for k in 0..steps {
        y = rk4_step(rhs, grid[k], grid[k + 1] - grid[k], &y);
        if renormalize {
            y = symplectic_projection(&y);
        }
        values.push(y.clone());
    }
    (grid, values)
}

impl SymplecticPath {
    fn finish(n: usize, grid: Vec<f64>, values: Vec<CMatrix>, dense: Dense) -> Self {
        let max_symplectic_residual = values.iter().map(relative_defect).fold(0.0, f64::max);
        Self { n, grid, values, max_symplectic_residual, dense }
    }

    /// A path with exact value and derivative, sampled on `samples` intervals.
    pub fn from_fn(n: usize, a: f64, b: f64, samples: usize, f: impl Fn(f64) -> (CMatrix, CMatrix) + Send + Sync + 'static) -> Self {
        let grid = uniform_grid(a, b, samples.max(1));
        let values = grid.iter().map(|&t| f(t).0).collect();
        Self::finish(n, grid, values, Dense::Exact(Arc::new(f)))
    }

    /// Samples with linear interpolation in between.
    pub fn from_samples(grid: Vec<f64>, values: Vec<CMatrix>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::input("path samples need a strictly increasing grid of length >= 2"));
        }
        let n = values[0].nrows() / 2;
        if values.iter().any(|v| v.shape() != (2 * n, 2 * n)) {
            return Err(Error::input("path samples must be 2n x 2n"));
        }
        Ok(Self::finish(n, grid, values, Dense::Linear))
    }

    /// γ(t) = [[I, 0], [P(t), I]].
    pub fn shear(p: &MatrixFunction, t_end: f64) -> Self {
        let n = p.shape().0;
        let p = p.clone();
        Self::from_fn(n, 0.0, t_end, 256, move |t| {
            let (v, dv) = p.value_and_derivative(t);
            let mut g = identity(2 * n);
            g.view_mut((n, 0), (n, n)).copy_from(&v);
            let mut dg = zeros(2 * n, 2 * n);
            dg.view_mut((n, 0), (n, n)).copy_from(&dv);
            (g, dg)
        })
    }

    /// γ(t) = exp(t J H) for a constant Hermitian H.
    pub fn exp_hamiltonian(h: &CMatrix, a: f64, b: f64) -> Self {
        let n = h.nrows() / 2;
        let jh = j_matrix(n) * h;
        let samples = ((64.0 * (b - a) * (1.0 + norm2(h))).ceil() as usize).max(256);
        Self::from_fn(n, a, b, samples, move |t| {
            let g = (&jh * re(t)).exp();
            let dg = &jh * &g;
            (g, dg)
        })
    }

    /// diag(a(t)*, a(t)⁻¹).
    pub fn frame_diag(a: &FramePath) -> Self {
        let n = a.n();
        let a = a.clone();
        Self::from_fn(n, 0.0, a.t_end, 256, move |t| {
            let (v, dv) = a.a.value_and_derivative(t);
            let inv = inverse(&v).unwrap_or_else(|_| CMatrix::from_element(n, n, re(f64::NAN)));
            let dinv = -(&inv * dv.clone() * &inv);
            (block_diag(&v.adjoint(), &inv), block_diag(&dv.adjoint(), &dinv))
        })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    pub fn t_end(&self) -> f64 {
        self.span().1
    }

    pub fn end_value(&self) -> &CMatrix {
        self.values.last().expect("non-empty path")
    }

    fn segment(&self, t: f64) -> usize {
        let k = self.grid.partition_point(|&x| x <= t);
        k.saturating_sub(1).min(self.grid.len() - 2)
    }

    pub fn eval(&self, t: f64) -> CMatrix {
        self.eval_with_derivative(t).0
    }

    pub fn eval_with_derivative(&self, t: f64) -> (CMatrix, CMatrix) {
        match &self.dense {
            Dense::Exact(f) => f(t),
            Dense::Ode(rhs) => {
                let (a, b) = self.span();
                let y = if t <= a {
                    self.integrate_from(0, a, t)
                } else if t >= b {
                    self.integrate_from(self.grid.len() - 1, b, t)
                } else {
                    let k = self.segment(t);
                    // Start from the closer sample.
                    if t - self.grid[k] <= self.grid[k + 1] - t {
                        self.integrate_from(k, self.grid[k], t)
                    } else {
                        self.integrate_from(k + 1, self.grid[k + 1], t)
                    }
                };
                let dy = rhs(t) * &y;
                (y, dy)
            }
            Dense::Linear => {
                let (a, b) = self.span();
                let t = t.clamp(a, b);
                let k = self.segment(t);
                let h = self.grid[k + 1] - self.grid[k];
                let w = (t - self.grid[k]) / h;
                let y = &self.values[k] * re(1.0 - w) + &self.values[k + 1] * re(w);
                let dy = (&self.values[k + 1] - &self.values[k]) * re(1.0 / h);
                (y, dy)
            }
        }
    }

    fn integrate_from(&self, k: usize, t0: f64, t: f64) -> CMatrix {
        let Dense::Ode(rhs) = &self.dense else { unreachable!() };
        if t == t0 {
            return self.values[k].clone();
        }
        let sub = 4;
        let h = (t - t0) / sub as f64;
        let mut y = self.values[k].clone();
        for i in 0..sub {
            y = rk4_step(rhs.as_ref(), t0 + i as f64 * h, h, &y);
        }
        y
    }

    /// Recommended sampling times (the stored grid).
    pub fn sample_times(&self) -> &[f64] {
        &self.grid
    }

    pub fn symplecticity_residual(&self) -> f64 {
        self.max_symplectic_residual
    }

    /// t ↦ L γ(t) R for constant L, R.
    pub fn transformed(&self, left: &CMatrix, right: &CMatrix) -> Self {
        let (a, b) = self.span();
        let me = self.clone();
        let (l, r) = (left.clone(), right.clone());
        let k = self.grid.len() - 1;
        Self::from_fn(self.n, a, b, k, move |t| {
            let (g, dg) = me.eval_with_derivative(t);
            (&l * g * &r, &l * dg * &r)
        })
    }

    /// t ↦ γ(φ(t)) for an increasing reparametrization φ of [a, b] with
    /// derivative dφ.
    pub fn reparametrized(&self, phi: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static) -> Self {
        let (a, b) = self.span();
        let me = self.clone();
        let k = self.grid.len() - 1;
        Self::from_fn(self.n, a, b, k, move |t| {
            let (s, ds) = phi(t);
            let (g, dg) = me.eval_with_derivative(s);
            (g, dg * re(ds))
        })
    }

    /// Pointwise product γ₁(t)γ₂(t)⋯ of paths on a common interval.
    pub fn product(paths: &[SymplecticPath]) -> Self {
        let (a, b) = paths[0].span();
        let k = paths.iter().map(|p| p.grid.len() - 1).max().unwrap_or(256);
        let ps = paths.to_vec();
        Self::from_fn(paths[0].n, a, b, k, move |t| {
            let evs: Vec<_> = ps.iter().map(|p| p.eval_with_derivative(t)).collect();
            let mut g = identity(2 * ps[0].n);
            let mut dg = zeros(2 * ps[0].n, 2 * ps[0].n);
            for (v, dv) in &evs {
                dg = &dg * v + &g * dv;
                g = &g * v;
            }
            (g, dg)
        })
    }

    /// Corrupt one stored sample (fault-injection helper).
    pub fn with_corrupted_sample(mut self, k: usize, delta: C64) -> Self {
        self.values[k][(0, 0)] += delta;
        self.max_symplectic_residual = self.values.iter().map(relative_defect).fold(0.0, f64::max);
        self
    }
}

pub fn symplecticity_residual(path: &SymplecticPath) -> f64 {
    path.symplecticity_residual()
}

/// Growth rate of u̇ = Jb u at one time: ‖(Jb)^16‖^{1/16}, which tracks the
/// spectral radius and ignores most of the non-normal inflation of ‖b‖.
fn growth_rate(jb: &CMatrix) -> f64 {
    let mut m = jb.clone();
    for _ in 0..4 {
        m = &m * &m;
    }
    norm2(&m).powf(1.0 / 16.0)
}

/// Initial step count max(128, 32·T·(1 + max rate)).
pub fn default_steps(coeffs: &CoefficientPath, s: f64) -> Result<usize> {
    let j = j_matrix(coeffs.n);
    let mut rate: f64 = 0.0;
    for t in coeffs.check_grid(64) {
        rate = rate.max(growth_rate(&(&j * assemble_b(coeffs, s, t)?)));
    }
    Ok(((32.0 * coeffs.t_end * (1.0 + rate)).ceil() as usize).max(128))
}

/// Fundamental solution γ_s of u̇ = J b_s(t) u, γ_s(0) = I.
///
/// Without an explicit step count the grid is doubled until the fourth-order
/// error estimate of the end value (change/15) is below 1e-10 relative and the
/// symplectic residual is below 1e-8. Per-step projection leaves a roundoff
/// floor near cond(γ)·ε, so renormalized runs use 1e-7 instead.
pub fn fundamental_solution(coeffs: &CoefficientPath, s: f64, opts: SolverOptions) -> Result<SymplecticPath> {
    let n = coeffs.n;
    // Surface singular p before integrating.
    for t in coeffs.check_grid(64) {
        assemble_b(coeffs, s, t)?;
    }
    let j = j_matrix(n);
    let cp = coeffs.clone();
    let rhs: Rhs = Arc::new(move |t| match assemble_b(&cp, s, t) {
        Ok(b) => &j * b,
        Err(_) => CMatrix::from_element(2 * n, 2 * n, re(f64::NAN)),
    });
    let solve = |steps: usize| -> Result<SymplecticPath> {
        let (grid, values) = integrate_linear(rhs.as_ref(), &identity(2 * n), 0.0, coeffs.t_end, steps, opts.renormalize);
        if values.iter().any(|v| !is_finite(v)) {
            return Err(Error::numerical("fundamental solution produced non-finite values"));
        }
        Ok(SymplecticPath::finish(n, grid, values, Dense::Ode(rhs.clone())))
    };
    if let Some(k) = opts.steps {
        return solve(k.max(1));
    }
    let limit = 1e-8;
    let accuracy = if opts.renormalize { 1e-7 } else { 1e-10 };
    let mut steps = default_steps(coeffs, s)?;
    let mut prev = solve(steps)?;
    loop {
        steps *= 2;
        let path = solve(steps)?;
        let end = path.end_value();
        let change = norm2(&(end - prev.end_value())) / norm2(end).max(1.0);
        if change <= 15.0 * accuracy && path.max_symplectic_residual <= limit {
            return Ok(path);
        }
        if steps >= 1 << 20 {
            return Err(Error::Integration { residual: path.max_symplectic_residual.max(change / 15.0), limit });
        }
        prev = path;
    }
}

/// An invertible n×n frame a(t) on [0, T].
#[derive(Debug, Clone)]
pub struct FramePath {
    pub a: MatrixFunction,
    pub t_end: f64,
}

impl FramePath {
    pub fn new(a: MatrixFunction, t_end: f64, pol: &TolerancePolicy) -> Result<Self> {
        let (r, k) = a.shape();
        if r != k {
            return Err(Error::input("frame path must be square"));
        }
        let fp = Self { a, t_end };
        for i in 0..=64 {
            let t = t_end * i as f64 / 64.0;
            let smin = smallest_singular_value(&fp.a.eval(t));
            if !(smin > pol.rank_tol) {
                return Err(Error::input(format!("frame path is singular at t = {t} (sigma_min {smin:.3e})")));
            }
        }
        Ok(fp)
    }

    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    pub fn at(&self, t: f64) -> CMatrix {
        self.a.eval(t)
    }

    pub fn derivative(&self, t: f64) -> CMatrix {
        self.a.derivative(t)
    }
}

/// (p′, q′, r′) with [[p′, q′], [q′*, r′]] = [[a*, 0], [ȧ*, a*]]·[[p, q], [q*, r]]·[[a, ȧ], [0, a]].
pub fn frame_change_coeffs(coeffs: &CoefficientPath, a: &FramePath) -> Result<CoefficientPath> {
    let c = coeffs.at_s(1.0);
    let af = &a.a;
    let da = af.derivative_function();
    let (as_, das) = (af.adjoint(), da.adjoint());
    let qs = c.q.adjoint();
    let p1 = as_.mul(&c.p).mul(af);
    let q1 = as_.mul(&c.p).mul(&da).add(&as_.mul(&c.q).mul(af));
    let r1 = das
        .mul(&c.p)
        .mul(&da)
        .add(&das.mul(&c.q).mul(af))
        .add(&as_.mul(&qs).mul(&da))
        .add(&as_.mul(&c.r).mul(af));
    CoefficientPath::new(coeffs.n, coeffs.t_end, p1, q1, r1)
}

/// γ′(t) = diag(a(t)*, a(t)⁻¹)·γ(t)·diag(a(0)*⁻¹, a(0)).
pub fn frame_change_path(gamma: &SymplecticPath, a: &FramePath) -> Result<SymplecticPath> {
    let n = gamma.n;
    if a.n() != n {
        return Err(Error::contract("frame path size does not match the symplectic path"));
    }
    let a0 = a.at(0.0);
    let right = block_diag(&inverse(&a0.adjoint())?, &a0);
    let left = SymplecticPath::frame_diag(a);
    let g = gamma.clone();
    let (lo, hi) = gamma.span();
    let k = gamma.grid.len() - 1;
    Ok(SymplecticPath::from_fn(n, lo, hi, k, move |t| {
        let (l, dl) = left.eval_with_derivative(t);
        let (v, dv) = g.eval_with_derivative(t);
        (&l * &v * &right, (dl * &v + &l * dv) * &right)
    }))
}

/// Both sides of the transport identity: the integrated solution of
/// ẏ = (P B P⁻¹ + Ṗ P⁻¹) y, y(0) = I, and P γ P(0)⁻¹ with γ̇ = B γ.
pub struct TransportCheck {
    pub grid: Vec<f64>,
    pub integrated: Vec<CMatrix>,
    pub transported: Vec<CMatrix>,
    pub max_difference: f64,
}

pub fn transported_fundamental(b: &MatrixFunction, p: &FramePath, steps: usize) -> Result<TransportCheck> {
    let d = b.shape().0;
    if p.n() != d {
        return Err(Error::contract("transport frame must match the generator size"));
    }
    let t_end = p.t_end;
    let bb = b.clone();
    let (grid, gamma) = integrate_linear(&|t| bb.eval(t), &identity(d), 0.0, t_end, steps, false);
    let pp = p.clone();
    let rhs = move |t: f64| {
        let (pv, dp) = pp.a.value_and_derivative(t);
        let pinv = inverse(&pv).unwrap_or_else(|_| CMatrix::from_element(d, d, re(f64::NAN)));
        &pv * bb.eval(t) * &pinv + dp * pinv
    };
    let (_, integrated) = integrate_linear(&rhs, &identity(d), 0.0, t_end, steps, false);
    let p0inv = inverse(&p.at(0.0))?;
    let transported: Vec<CMatrix> = grid.iter().zip(&gamma).map(|(&t, g)| p.at(t) * g * &p0inv).collect();
    let max_difference = integrated.iter().zip(&transported).map(|(x, y)| norm2(&(x - y))).fold(0.0, f64::max);
    Ok(TransportCheck { grid, integrated, transported, max_difference })
}
