//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use bilevel_prox::gap::{
    dual_gap, eps_lmr_check, penalty_solve, step_stop_check, LmrWitness, PenaltyOptions,
};
use bilevel_prox::convex::{eps_subgrad_residual, Matrix};
use bilevel_prox::inner::verify_certificate;
use bilevel_prox::operator::MonotoneOperator;
use bilevel_prox::oracle::{grid_argmin, grid_sol_vi, raw_eps_check, GridSpec};
use bilevel_prox::run::RunOptions;
use bilevel_prox::sbp::{sbp_run, SbpProblem};
use bilevel_prox::schedule::Schedule;
use bilevel_prox::smpec::{smpec_run, verify_smpec_certificate, SmpecProblem};
use bilevel_prox::trace::{StopReason, Trace};
use bilevel_prox::{ConvexFunction, ConvexSet, Vector};
use common::*;
use nalgebra::{dmatrix, dvector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

const SPACING: f64 = 0.01;
const DIST_TOL: f64 = 1e-3;
const GAP_BAND: f64 = 1e-4;
const GAP_FLOOR: f64 = -1e-6;
const SKEW_TOL: f64 = 1e-6;
const PENALTY_DIST: f64 = 1e-2;
const STOP_EPS0: f64 = 0.1;
const DEGENERATE_TOL: f64 = 1e-8;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Infinity-norm distance from `x` to the nearest point of `set`.
fn inf_dist(x: &Vector, set: &[Vector]) -> f64 {
    set.iter().map(|p| (x - p).amax()).fold(f64::INFINITY, f64::min)
}

/// `S₁` of desk problem A from the grid: minimize `f` over the grid `S₀`.
fn desk_a_reference() -> Vec<Vector> {
    let grid = GridSpec::cube(2, -2.0, 2.0, SPACING).unwrap();
    let s0 = grid_argmin(&desk_a_g(), &desk_a_set(), &grid, 1e-8).unwrap();
    minimize_over(&desk_a_f(), s0)
}

/// `S₁` of desk problem B: minimize `f` over the grid `sol(VI)`.
fn desk_b_reference() -> Vec<Vector> {
    let grid = GridSpec::cube(2, 0.0, 1.0, SPACING).unwrap();
    let s0 = grid_sol_vi(&desk_b_operator(), &desk_b_set(), &grid, 1e-9).unwrap();
    minimize_over(&desk_b_f(), s0)
}

fn minimize_over(f: &ConvexFunction, pts: Vec<Vector>) -> Vec<Vector> {
    let vals: Vec<f64> = pts.iter().map(|p| f.value(p).unwrap()).collect();
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    pts.into_iter().zip(vals).filter(|(_, v)| *v <= min + 1e-12).map(|(p, _)| p).collect()
}

fn summary(t: &Trace) -> String {
    format!(
        "final dist {:.3e}, {} iterations, stop {}",
        t.final_dist().unwrap_or(f64::NAN),
        t.iterations(),
        t.stop
    )
}

fn criterion_1(run: &Trace, seconds: f64) -> Outcome {
    let dist = run.final_dist().unwrap_or(f64::INFINITY);
    let pass = run.stop == StopReason::MaxIter && run.iterations() <= 5000 && dist <= DIST_TOL && seconds < 60.0;
    outcome(pass, format!("{}, {seconds:.1} s", summary(run)))
}

fn criterion_2(run: &Trace) -> Outcome {
    let dist = run.final_dist().unwrap_or(f64::INFINITY);
    let pass = run.stop == StopReason::MaxIter && run.iterations() <= 5000 && dist <= DIST_TOL;
    outcome(pass, summary(run))
}

fn verify_sbp_trace(prob: &SbpProblem, t: &Trace) -> (usize, usize) {
    let mut ok = 0;
    let mut total = 0;
    for w in t.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        let cert = r.step.as_ref().and_then(|s| s.certificate.as_ref()).unwrap();
        total += 1;
        let psi = prob.penalized(r.eps_k).unwrap();
        if verify_certificate(&psi, prob.set(), &r.x, r.lambda_k, &next.x, cert, r.eta_k) {
            ok += 1;
        }
    }
    (ok, total)
}

fn verify_smpec_trace(prob: &SmpecProblem, t: &Trace) -> (usize, usize) {
    let mut ok = 0;
    let mut total = 0;
    for w in t.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        let cert = r.step.as_ref().and_then(|s| s.certificate.as_ref()).unwrap();
        total += 1;
        if verify_smpec_certificate(
            prob.operator(),
            prob.f(),
            r.eps_k,
            prob.set(),
            &r.x,
            r.lambda_k,
            &next.x,
            cert,
            r.eta_k,
        ) {
            ok += 1;
        }
    }
    (ok, total)
}

fn criterion_3(a: &Trace, b: &Trace) -> Outcome {
    let (ok_a, n_a) = verify_sbp_trace(&desk_a(), a);
    let (ok_b, n_b) = verify_smpec_trace(&desk_b(), b);
    let pass = n_a > 0 && n_b > 0 && ok_a == n_a && ok_b == n_b;
    outcome(pass, format!("SBP {ok_a}/{n_a}, SMPEC {ok_b}/{n_b} certificates verified"))
}

fn criterion_4() -> Outcome {
    let op = desk_b_operator();
    let set = desk_b_set();
    let grid = GridSpec::cube(2, 0.0, 1.0, SPACING).unwrap();
    let pts = grid.points_in(&set).unwrap();
    let mut min_gap = f64::INFINITY;
    let mut small = Vec::new();
    for x in &pts {
        let g = dual_gap(&op, &set, x, 1e-9).unwrap().value;
        min_gap = min_gap.min(g);
        if g <= GAP_BAND {
            small.push(x.clone());
        }
    }
    let vi = grid_sol_vi(&op, &set, &grid, 1e-9).unwrap();
    let slack = SPACING + 1e-9;
    let gap_to_vi = small.iter().map(|x| inf_dist(x, &vi)).fold(0.0, f64::max);
    let vi_to_gap = vi.iter().map(|x| inf_dist(x, &small)).fold(0.0, f64::max);
    let pass = !vi.is_empty() && gap_to_vi <= slack && vi_to_gap <= slack && min_gap >= GAP_FLOOR;
    outcome(
        pass,
        format!(
            "{} gap points, {} VI points, max separation {:.3e}/{:.3e}, min g_D {min_gap:.3e}",
            small.len(),
            vi.len(),
            gap_to_vi,
            vi_to_gap
        ),
    )
}

fn criterion_5() -> Outcome {
    let op = MonotoneOperator::affine(dmatrix![0.0, -1.0; 1.0, 0.0], Vector::zeros(2)).unwrap();
    let set = ConvexSet::cube(2, -1.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = dvector![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let g = dual_gap(&op, &set, &x, 1e-9).unwrap().value;
        worst = worst.max((g - (x[0].abs() + x[1].abs())).abs());
    }
    outcome(worst <= SKEW_TOL, format!("max deviation {worst:.3e} over 100 points"))
}

fn criterion_6() -> Outcome {
    let mu: Vec<f64> = (0..=15).map(|k| 2f64.powi(k)).collect();
    let target = dvector![0.0, 0.0];
    let opts = PenaltyOptions {
        feasible_point: Some(target.clone()),
        reference: Some(vec![target.clone()]),
        ..PenaltyOptions::default()
    };
    match penalty_solve(&desk_b(), &mu, 1e-6, &opts) {
        Ok(out) => {
            let last = out.steps.last().unwrap();
            let dist = (&last.x - &target).norm();
            let bounds = out.steps.iter().filter(|s| s.bound_holds == Some(true)).count();
            let pass = out.steps.len() == mu.len() && dist <= PENALTY_DIST && bounds == mu.len();
            outcome(
                pass,
                format!(
                    "{} subproblems, final dist {dist:.3e}, bound held {bounds}/{}, stop {}",
                    out.steps.len(),
                    mu.len(),
                    out.trace.stop
                ),
            )
        }
        Err(e) => outcome(false, format!("penalty path failed: {e}")),
    }
}

fn criterion_7(b: &Trace) -> Outcome {
    let prob = desk_b();
    let mut fired = 0;
    let mut ok = 0;
    let mut errors = Vec::new();
    for w in b.records.windows(2) {
        let (r, next) = (&w[0], &w[1]);
        let step = r.step.as_ref().unwrap();
        let recomputed = step_stop_check(&r.x, &next.x, r.lambda_k, r.eps_k, STOP_EPS0);
        if recomputed != step.stop_flag {
            errors.push(format!("row {} flag mismatch", r.k));
        }
        if !recomputed {
            continue;
        }
        fired += 1;
        let cert = step.certificate.as_ref().unwrap();
        match LmrWitness::from_smpec_step(&prob, r.eps_k, &next.x, cert).and_then(|w| eps_lmr_check(&w, STOP_EPS0)) {
            Ok(true) => ok += 1,
            Ok(false) => errors.push(format!("row {} fails the multiplier rule", r.k)),
            Err(e) => errors.push(format!("row {}: {e}", r.k)),
        }
    }
    let first = errors.first().cloned().unwrap_or_default();
    outcome(
        fired > 0 && ok == fired && errors.is_empty(),
        format!("{ok}/{fired} stopping rows satisfy the multiplier rule {first}").trim_end().to_string(),
    )
}

/// Random `(f, x, v)` whose conjugate supremum is attained at a grid point,
/// so the residual and the raw inequality must agree at the grid level.
fn random_triple(rng: &mut ChaCha8Rng, grid: &GridSpec) -> (ConvexFunction, Vector, Vector) {
    let n = grid.dim();
    let pick = |rng: &mut ChaCha8Rng| {
        Vector::from_iterator(n, (0..n).map(|_| -2.0 + 0.05 * rng.random_range(0..=80) as f64))
    };
    let x = pick(rng);
    match rng.random_range(0..3) {
        0 => {
            let b = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = &b * b.transpose() + Matrix::identity(n, n) * 0.2;
            let c = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y_star = pick(rng);
            let v = &q * &y_star + &c;
            (ConvexFunction::quadratic(q, c, 0.0).unwrap(), x, v)
        }
        1 => {
            let p = pick(rng);
            let w = rng.random_range(0.5..2.0);
            let dir = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let v = dir.normalize() * (w * rng.random_range(0.0..0.95));
            (ConvexFunction::norm2(p, w).unwrap(), x, v)
        }
        _ => {
            // Tangents of y² at even multiples of the spacing, so kinks lie on the grid (1-d only).
            let x = dvector![x[0]];
            let ts: Vec<f64> = (0..4).map(|j| -1.5 + 0.1 * (rng.random_range(0..=10) + 10 * j) as f64).collect();
            let pieces = ts.iter().map(|t| (dvector![2.0 * t], -t * t)).collect();
            let v = dvector![rng.random_range(2.0 * ts[0]..2.0 * ts[3])];
            (ConvexFunction::max_affine(pieces).unwrap(), x, v)
        }
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let grids = [GridSpec::cube(1, -3.0, 3.0, 0.05).unwrap(), GridSpec::cube(2, -3.0, 3.0, 0.05).unwrap()];
    let mut agree = 0;
    let mut first_bad = String::new();
    for i in 0..200 {
        let mut grid = &grids[i % 2];
        let (f, x, v) = random_triple(&mut rng, grid);
        if f.dim() == 1 {
            grid = &grids[0];
        }
        let r = eps_subgrad_residual(&f, &x, &v, None).unwrap().value();
        let above = raw_eps_check(&f, &x, &v, r + 1e-9, grid).unwrap();
        let below = raw_eps_check(&f, &x, &v, r - 1e-6, grid).unwrap();
        if r.is_finite() && above && !below {
            agree += 1;
        } else if first_bad.is_empty() {
            first_bad = format!(" (first disagreement: triple {i}, residual {r:e})");
        }
    }

    let sets = [
        ConvexSet::cube(2, -0.5, 1.0).unwrap(),
        ConvexSet::ball(dvector![0.2, -0.1], 1.1).unwrap(),
        ConvexSet::simplex(2, 1.0).unwrap(),
        ConvexSet::intersection(vec![
            ConvexSet::cube(2, -1.0, 1.0).unwrap(),
            ConvexSet::halfspace(dvector![1.0, 1.0], 0.5).unwrap(),
        ])
        .unwrap(),
    ];
    let grid = GridSpec::cube(2, -2.0, 2.0, SPACING).unwrap();
    let mut proj_ok = 0;
    let mut proj_total = 0;
    for set in &sets {
        let pts = grid.points_in(set).unwrap();
        for _ in 0..10 {
            let x = dvector![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let p = set.project(&x).unwrap();
            let d = (&x - &p).norm();
            let (nearest, dn) = pts
                .iter()
                .map(|q| (q, (&x - q).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            proj_total += 1;
            let box_like = matches!(set, ConvexSet::Box { .. });
            let point_ok = !box_like || (nearest - &p).amax() <= SPACING + 1e-9;
            if set.contains(&p, 1e-9) && d <= dn + 1e-9 && dn - d <= SPACING && point_ok {
                proj_ok += 1;
            }
        }
    }
    outcome(
        agree == 200 && proj_ok == proj_total,
        format!("{agree}/200 residual triples agree{first_bad}, {proj_ok}/{proj_total} projections agree"),
    )
}

fn criterion_9() -> Outcome {
    let x0 = dvector![-2.0, 2.0];
    let sbp = SbpProblem::new(desk_a_f(), ConvexFunction::zero(2), desk_a_set(), x0.clone()).unwrap();
    let smpec = SmpecProblem::new(desk_a_f(), zero_operator(2), desk_a_set(), x0).unwrap();
    let s = Schedule::default();
    let opts = RunOptions::default();
    let (a, b) = match (sbp_run(&sbp, &s, &opts), smpec_run(&smpec, &s, &opts)) {
        (Ok(a), Ok(b)) => (a, b),
        (a, b) => return outcome(false, format!("run failed: {:?} / {:?}", a.err(), b.err())),
    };
    let worst = a
        .records
        .iter()
        .zip(&b.records)
        .map(|(ra, rb)| (&ra.x - &rb.x).amax())
        .fold(0.0, f64::max);
    let pass = a.records.len() == b.records.len() && a.stop == b.stop && worst <= DEGENERATE_TOL;
    outcome(pass, format!("{} iterations each, max iterate difference {worst:.3e}", a.iterations()))
}

fn main() {
    let mut results = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!("criterion {n} ({name}): {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push(o.pass);
    };

    let start = Instant::now();
    let opts_a = RunOptions { reference: Some(desk_a_reference()), ..RunOptions::default() };
    let run_a = sbp_run(&desk_a(), &Schedule::default(), &opts_a).expect("desk problem A run");
    let seconds = start.elapsed().as_secs_f64();
    report(1, "SBP convergence", criterion_1(&run_a, seconds));

    let opts_b = RunOptions {
        reference: Some(desk_b_reference()),
        stop_eps0: Some(STOP_EPS0),
        halt_on_stop: false,
        ..RunOptions::default()
    };
    let run_b = smpec_run(&desk_b(), &Schedule::default(), &opts_b).expect("desk problem B run");
    report(2, "SMPEC convergence", criterion_2(&run_b));
    report(3, "certificate soundness", criterion_3(&run_a, &run_b));
    report(4, "gap-function identity", criterion_4());
    report(5, "skew closed form", criterion_5());
    report(6, "penalty path", criterion_6());
    report(7, "stopping soundness", criterion_7(&run_b));
    report(8, "oracle cross-validation", criterion_8());
    report(9, "degenerate equivalence", criterion_9());

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
