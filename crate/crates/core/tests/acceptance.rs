//! End-to-end acceptance checks. One PASS/FAIL line per criterion; the
//! process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use maslov_core::hamiltonian::{CoefficientPath, MatrixFunction, SymplecticPath};
use maslov_core::harness::config::{ProblemSpec, Suite};
use maslov_core::harness::generate::generate_thm2;
use maslov_core::harness::report::VerificationReport;
use maslov_core::harness::verify::{concavity_term, verify_concavity, verify_cor1, verify_maslov, verify_monotone, verify_thm2};
use maslov_core::harness::{mesh_policy, random_tasks, run_task};
use maslov_core::index_form::{assemble, GalerkinSpace};
use maslov_core::linalg::*;
use maslov_core::symplectic::BoundaryCondition;

type Outcome = std::result::Result<String, String>;

fn scalar(x: f64) -> CMatrix {
    CMatrix::from_element(1, 1, re(x))
}

fn pol() -> TolerancePolicy {
    TolerancePolicy::default()
}

/// Runs a suite and fails on the first report that did not pass.
fn suite(s: Suite, sizes: &[usize], count: usize, seed: u64, sink: &mut Vec<VerificationReport>) -> Outcome {
    let mesh = mesh_policy(None);
    let reports: Vec<VerificationReport> = random_tasks(s, sizes, count, seed, pol()).iter().map(|t| run_task(t, mesh)).collect();
    let total = reports.len();
    let failed: Vec<String> = reports.iter().filter(|r| !r.pass).map(describe).collect();
    let nonzero = reports.iter().filter(|r| r.lhs.is_some_and(|v| v != 0)).count();
    sink.extend(reports);
    if failed.is_empty() {
        Ok(format!("{total}/{total} {} instances ({nonzero} with a nonzero index)", s.name()))
    } else {
        Err(format!("{} of {total} {} instances failed: {}", failed.len(), s.name(), failed.join("; ")))
    }
}

fn describe(r: &VerificationReport) -> String {
    match &r.error {
        Some(e) => format!("{}: {e}", r.name),
        None => format!("{}: {:?} != {:?}", r.name, r.lhs, r.rhs),
    }
}

fn expect(r: &VerificationReport, lhs: i64, rhs: i64) -> std::result::Result<(), String> {
    if r.pass && r.lhs == Some(lhs) && r.rhs == Some(rhs) {
        Ok(())
    } else {
        Err(format!("expected {lhs} = {rhs}, got {}", describe(r)))
    }
}

fn jacobi() -> ProblemSpec {
    ProblemSpec {
        name: "jacobi".into(),
        n: 1,
        t_end: 4.0,
        coeffs: CoefficientPath::constant(scalar(1.0), scalar(0.0), scalar(-1.0), 4.0).unwrap(),
        bc: BoundaryCondition::dirichlet(1),
        frame: None,
        pol: pol(),
        seed: None,
    }
}

fn criterion_1(sink: &mut Vec<VerificationReport>) -> Outcome {
    let ps = jacobi();
    // Dirichlet modes sin(kπt/4) with eigenvalues (kπ/4)² − 1 of −u'' − u.
    let continuum_negative = (1..100).filter(|&k| (k as f64 * PI / 4.0).powi(2) < 1.0).count();
    let start = Instant::now();
    let r = verify_cor1(&ps, mesh_policy(Some(512)));
    let secs = start.elapsed().as_secs_f64();
    let maslov = verify_maslov(&ps, Some(2));
    expect(&r, continuum_negative as i64, 1)?;
    expect(&maslov, 2, 2)?;
    if continuum_negative != 1 {
        return Err(format!("continuum count is {continuum_negative}"));
    }
    // Lowest eigenvalue of the pencil against the H¹-normalized closed form.
    let mu = (PI / 4.0).powi(2);
    let lambda = (mu - 1.0) / (mu + 1.0);
    let gal = GalerkinSpace::new(1, 4.0, 512, &ps.bc).map_err(|e| e.to_string())?;
    let df = assemble(&ps.coeffs, 1.0, &gal, &ps.pol).map_err(|e| e.to_string())?;
    if df.count_below(lambda - 1e-3) != 0 || df.count_below(lambda + 1e-3) != 1 {
        return Err(format!("lowest eigenvalue not within 1e-3 of {lambda:.6}"));
    }
    sink.push(r);
    sink.push(maslov);
    if secs >= 5.0 {
        return Err(format!("took {secs:.2}s at N = 512"));
    }
    Ok(format!("m- = 1, index 2, 1 = 2 - 1 in {secs:.2}s"))
}

fn criterion_2(sink: &mut Vec<VerificationReport>) -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    let msg = suite(Suite::Thm1, &[1, 2, 3], 20, 0, &mut reports);
    let secs = start.elapsed().as_secs_f64();
    for r in &reports {
        let trace: Vec<i64> = r.evidence["mesh_trace"].as_array().into_iter().flatten().filter_map(|x| x["value"].as_i64()).collect();
        let stable = trace.len() >= 3 && trace[trace.len() - 3..].iter().all(|&v| Some(v) == r.lhs);
        if r.pass && !stable {
            return Err(format!("{}: mesh trace {trace:?} not stable over two doublings", r.name));
        }
    }
    sink.extend(reports);
    let msg = msg?;
    if secs >= 120.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!("{msg} in {secs:.1}s"))
}

fn criterion_3(sink: &mut Vec<VerificationReport>) -> Outcome {
    let p = MatrixFunction::Poly(vec![scalar(-1.0), scalar(1.0)]);
    let r = verify_thm2("t_minus_one", &p, 2.0, &BoundaryCondition::dirichlet(1), &pol());
    expect(&r, 1, 1)?;
    sink.push(r);
    suite(Suite::Thm2, &[1, 2, 3], 7, 0, sink)
}

fn criterion_4(sink: &mut Vec<VerificationReport>) -> Outcome {
    let mut reports = Vec::new();
    let msg = suite(Suite::Thm3, &[1, 2, 3], 7, 0, &mut reports);
    let worst = reports.iter().filter_map(|r| r.evidence.get("route_distance").and_then(|v| v.as_f64())).fold(0.0, f64::max);
    sink.extend(reports);
    let msg = msg?;
    if worst > 1e-6 {
        return Err(format!("route distance {worst:.3e}"));
    }
    Ok(format!("{msg}, route distance <= {worst:.2e}"))
}

fn criterion_7(sink: &mut Vec<VerificationReport>) -> Outcome {
    let msg = suite(Suite::Concavity, &[1, 2, 3], 7, 0, sink)?;
    let p = pol();
    let mut checked = 0;
    for seed in 0..12u64 {
        let n = 1 + (seed % 3) as usize;
        let (raw, t_end, bc) = generate_thm2(seed, n);
        // The identity needs γ(0) = I, so shift P to vanish at 0.
        let pf = raw.add(&MatrixFunction::Constant(-raw.eval(0.0)));
        let g = SymplecticPath::shear(&pf, t_end);
        let full = identity(2 * n);
        let same = verify_concavity(&format!("same_{seed}"), &g, &bc.r, &bc.r, &p);
        expect(&same, 0, 0)?;
        let nested = verify_concavity(&format!("full_{seed}"), &g, &bc.r, &full, &p);
        if !nested.pass {
            return Err(describe(&nested));
        }
        let c = concavity_term(g.end_value(), &bc, &BoundaryCondition::free(n), &p).map_err(|e| e.to_string())?;
        // dim S − m⁺(P(T)|_S) from an explicit restriction.
        let pt = pf.eval(t_end);
        let m_plus = if bc.dim_s() == 0 {
            0
        } else {
            let restricted = hermitian_part(&(bc.s.adjoint() * &pt * &bc.s));
            hermitian_eigenvalues(&restricted, &p).map_err(|e| e.to_string())?.iter().filter(|&&x| x > p.eig_zero_tol * norm2(&pt).max(1.0)).count()
        };
        let want = bc.dim_s() as i64 - m_plus as i64;
        if c.value != want {
            return Err(format!("seed {seed}: C = {} but dim S - m+ = {want}", c.value));
        }
        sink.push(same);
        sink.push(nested);
        checked += 1;
    }
    Ok(format!("{msg}; {checked} shear paths match dim S - m+, R1 = R2 gives 0"))
}

fn criterion_9(sink: &mut Vec<VerificationReport>) -> Outcome {
    let p = pol();
    let mut summaries = 0;
    for r in sink.iter() {
        for m in &r.maslov {
            if !(m.agree && m.crossing_form.is_some() && m.crossing_form == m.eigenphase) {
                return Err(format!("{} / {}: crossing form {:?}, eigenphase {:?}", r.name, m.label, m.crossing_form, m.eigenphase));
            }
            summaries += 1;
        }
    }
    let rotation = SymplecticPath::exp_hamiltonian(&identity(2), 0.0, 4.0);
    let r = verify_monotone("rotation", &rotation, &BoundaryCondition::dirichlet(1), &p);
    expect(&r, 2, 2)?;
    let mut fixtures = vec![r];
    let shear = SymplecticPath::shear(&MatrixFunction::Poly(vec![zeros(2, 2), identity(2)]), 1.0);
    for (name, bc) in [("dirichlet", BoundaryCondition::dirichlet(2)), ("periodic", BoundaryCondition::periodic(2)), ("free", BoundaryCondition::free(2))] {
        let d = bc.dim_s() as i64;
        let r = verify_monotone(name, &shear, &bc, &p);
        expect(&r, d, d)?;
        fixtures.push(r);
    }
    for r in &fixtures {
        for m in &r.maslov {
            if !(m.agree && m.crossing_form == m.eigenphase) {
                return Err(format!("{}: routes disagree", r.name));
            }
        }
    }
    sink.extend(fixtures);
    Ok(format!("{summaries} index computations agree; rotation and monotone fixtures match"))
}

fn criterion_10(sink: &[VerificationReport]) -> Outcome {
    let worst = |key: &str| sink.iter().filter_map(|r| r.evidence.get(key).and_then(|v| v.as_f64())).fold(0.0, f64::max);
    let (sym, lag) = (worst("max_symplectic_residual"), worst("w_lagrangian_residual"));
    if sym > 1e-8 {
        return Err(format!("symplectic residual {sym:.3e}"));
    }
    if lag > 1e-9 {
        return Err(format!("W(R) Lagrangian residual {lag:.3e}"));
    }
    // Constant coefficients on a uniform mesh: interior blocks are
    // 2p/h + 2hr/3 on the diagonal and −p/h + (q − q*)/2 + hr/6 below it.
    let n = 2;
    let pm = CMatrix::from_fn(n, n, |i, j| if i == j { re(2.0 + i as f64) } else { c(0.3, if i < j { 0.2 } else { -0.2 }) });
    let q = CMatrix::from_fn(n, n, |i, j| c(0.5 * i as f64 - 0.25 * j as f64, 0.1 * (i + j) as f64));
    let r = CMatrix::from_fn(n, n, |i, j| if i == j { re(-1.5) } else { c(0.4, if i < j { -0.7 } else { 0.7 }) });
    let (t_end, elements) = (1.5, 6);
    let h = t_end / elements as f64;
    let cp = CoefficientPath::constant(pm.clone(), q.clone(), r.clone(), t_end).map_err(|e| e.to_string())?;
    let gal = GalerkinSpace::new(n, t_end, elements, &BoundaryCondition::dirichlet(n)).map_err(|e| e.to_string())?;
    let a = assemble(&cp, 1.0, &gal, &pol()).map_err(|e| e.to_string())?.dense_a();
    let diag = &pm * re(2.0 / h) + &r * re(2.0 * h / 3.0);
    let below = &pm * re(-1.0 / h) + (&q - q.adjoint()) * re(0.5) + &r * re(h / 6.0);
    let mut err: f64 = 0.0;
    for i in 0..elements - 1 {
        err = err.max((a.view((i * n, i * n), (n, n)) - &diag).iter().map(|z| z.norm()).fold(0.0, f64::max));
        if i + 1 < elements - 1 {
            err = err.max((a.view(((i + 1) * n, i * n), (n, n)) - &below).iter().map(|z| z.norm()).fold(0.0, f64::max));
            err = err.max((a.view((i * n, (i + 1) * n), (n, n)) - below.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
    }
    if a.nrows() != n * (elements - 1) || err > 1e-12 {
        return Err(format!("stiffness deviates by {err:.3e}"));
    }
    Ok(format!("symplectic {sym:.1e}, Lagrangian {lag:.1e}, stiffness {err:.1e} over {} reports", sink.len()))
}

fn main() -> ExitCode {
    let mut checked = Vec::new();
    let mut scratch = Vec::new();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |k: usize, label: &'static str, o: Outcome| {
        let (tag, msg) = match &o {
            Ok(m) => ("PASS", m),
            Err(m) => ("FAIL", m),
        };
        println!("{tag} criterion {k:>2} {label}: {msg}");
        results.push((k, label, o));
    };
    record(1, "jacobi fixture", criterion_1(&mut checked));
    record(2, "index form vs Maslov", criterion_2(&mut checked));
    record(3, "shear paths", criterion_3(&mut checked));
    record(4, "frame change", criterion_4(&mut checked));
    record(5, "relative Morse index", suite(Suite::RelativeMorse, &[], 100, 0, &mut scratch));
    record(6, "anti-diagonal blocks", suite(Suite::BlockFlow, &[], 50, 0, &mut scratch));
    record(7, "nested boundaries", criterion_7(&mut checked));
    record(8, "frame paths", suite(Suite::Lemma45, &[1, 2, 3], 7, 0, &mut checked));
    record(9, "dual Maslov agreement", criterion_9(&mut checked));
    checked.extend(scratch);
    record(10, "numerical hygiene", criterion_10(&checked));
    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
