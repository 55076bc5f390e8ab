//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::RngExt;

use cdlab::convexity::{
    build_dyadic_geodesic, calibrate_big_k, k_convexity_report, GeodesicOptions, CONDITION_SLACK,
};
use cdlab::experiments::counterexample::refinement_errors;
use cdlab::experiments::{
    counterexample_run, mgh_check, profile_gates, run_scenario, CounterexampleSetup, Scenario, ScenarioConfig,
};
use cdlab::geometry::c_k;
use cdlab::lemmas::suite::{run_suite, MARGIN_SLACK};
use cdlab::measures::{
    check_cyclical_monotonicity, strip_measure, sup_cost, PlanEntry, TransportPlan, TransportProblem,
};
use cdlab::midpoint::{certify_midpoint, injectivity_derivative_bound};
use cdlab::sampling::rng;
use cdlab::transport::solve_structured;
use cdlab::{Point, Space, SpaceParams};

mod common;
use common::{corpus, exhaustive_best};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn base() -> SpaceParams {
    SpaceParams::new(0.01, 1.0, 0.001).unwrap()
}

fn profile() -> Verdict {
    let gates = profile_gates(&Space::new(base()).unwrap());
    let failing: Vec<&str> = gates.iter().filter(|g| !g.pass).map(|g| g.name.as_str()).collect();
    let fmax = gates.last().unwrap().value;
    verdict(failing.is_empty(), format!("{} gates, max f = {fmax:.6}, failing {failing:?}", gates.len()))
}

fn lemmas() -> Verdict {
    let space = Space::new(base()).unwrap();
    let (sums, _) = run_suite(&space, 1_000_000, 11, false).unwrap();
    let worst = sums.iter().map(|s| s.min_margin).fold(f64::INFINITY, f64::min);
    let pass = sums.iter().all(|s| s.pass() && s.min_margin >= -MARGIN_SLACK);
    let per: Vec<String> = sums.iter().map(|s| format!("{}={}", s.lemma, s.evaluated)).collect();
    verdict(pass, format!("min margin {worst:.3e}; evaluated {}", per.join(" ")))
}

fn midpoint() -> Verdict {
    let space = Space::new(base()).unwrap();
    let p = &space.profile;
    let mut r = rng(3);
    let mut worst = 0.0f64;
    let mut outside = 0;
    for i in 0..100_000 {
        let x0: f64 = r.random_range(-1.0..1.0);
        // half the pairs are close, where branching is decided
        let x1 = if i % 2 == 0 {
            r.random_range(-1.0..1.0)
        } else {
            (x0 + r.random_range(-0.02..0.02)).clamp(-1.0, 1.0)
        };
        let a = Point::new(x0, r.random::<f64>() * p.f(x0));
        let b = Point::new(x1, r.random::<f64>() * p.f(x1));
        let c = certify_midpoint(a, b, p).unwrap();
        worst = worst.max(c.worst());
        outside += usize::from(!c.in_space);
    }
    let bound = injectivity_derivative_bound(0.01);
    let k: f64 = 0.01;
    let oracle = 0.5 - 3.0 * k - (2.0 * k * k + 3.0 * k) / (1.0 - 2.0 * k).powi(2);
    verdict(
        worst <= 1e-9 && outside == 0 && bound > 0.43 && (bound - oracle).abs() < 1e-15,
        format!("max deviation {worst:.3e}, outside {outside}, derivative bound {bound:.6}"),
    )
}

fn ot_oracle() -> Verdict {
    let (mut mismatches, mut violations) = (0, 0);
    let instances = corpus();
    for inst in &instances {
        let n = inst.src.len();
        let lex = TransportProblem::new(vec![1; n], vec![1; n], inst.primary.clone())
            .unwrap()
            .solve_lexicographic(&inst.secondary)
            .unwrap();
        if (lex.primary, lex.secondary) != exhaustive_best(inst) {
            mismatches += 1;
        }
        let entries = lex
            .entries
            .iter()
            .map(|&(i, j, f)| PlanEntry { i, j, mass: f as f64 / n as f64, cost: sup_cost(inst.src[i], inst.dst[j]) })
            .collect();
        let plan = TransportPlan::new(entries, inst.src.clone(), inst.dst.clone());
        violations += check_cyclical_monotonicity(&plan, 10_000, 1).violations;
    }
    verdict(
        mismatches == 0 && violations == 0,
        format!("{} instances, {mismatches} mismatches, {violations} monotonicity violations", instances.len()),
    )
}

fn condition_sweep() -> Verdict {
    let space = Space::new(base()).unwrap();
    let cal = calibrate_big_k(&space, 10_000, 5).unwrap();
    let min = cal.summaries.iter().map(|s| s.min_margin).fold(f64::INFINITY, f64::min);
    let per: Vec<String> = cal.summaries.iter().map(|s| format!("{}:{}", s.branch.name(), s.evaluated)).collect();
    let pass = (1.0..=1e4).contains(&cal.big_k)
        && cal.summaries.iter().all(|s| s.pass() && s.evaluated == 10_000)
        && min >= -CONDITION_SLACK;
    verdict(pass, format!("K = {}, {} evaluations, min margin {min:.3e}, {}", cal.big_k, cal.evaluations, per.join(" ")))
}

fn dyadic_margin(nx: usize, ny: usize) -> f64 {
    let space = Space::new(base()).unwrap();
    let mu0 = strip_measure(&space, -0.5, -0.25, nx, ny).unwrap();
    let mu1 = strip_measure(&space, 0.25, 0.5, nx, ny).unwrap();
    let (_, map) = solve_structured(&space, &mu0, &mu1).unwrap();
    let fam = build_dyadic_geodesic(&space, &mu0, &map, 5, GeodesicOptions::default()).unwrap();
    let rows = k_convexity_report(&fam, 0.0).unwrap();
    assert_eq!(rows.len(), 33);
    rows.iter().map(|r| r.margin).fold(f64::NEG_INFINITY, f64::max)
}

fn dyadic() -> Verdict {
    let coarse = dyadic_margin(100, 10);
    let fine = dyadic_margin(200, 20);
    verdict(
        coarse <= 5e-3 && fine <= 5e-3,
        format!("max margin over 33 dyadic times {coarse:.3e} at 100x10, {fine:.3e} at 200x20"),
    )
}

fn mgh() -> Verdict {
    let k = 0.01;
    let mut pass = true;
    let mut parts = Vec::new();
    for e in [k / 2.0, k / 4.0, k / 8.0] {
        let rep = mgh_check(base().with_epsilon(e).unwrap(), 1_000_000, 9).unwrap();
        pass &= rep.max_distortion <= 2.0 * e && rep.pushforward_error <= 1e-9 && rep.singular_fiber_error <= 1e-9;
        parts.push(format!("eps_n={e}: distortion {:.4e} / {:.4e}, density {:.1e}", rep.max_distortion, 2.0 * e, rep.pushforward_error));
    }
    verdict(pass, parts.join("; "))
}

fn counterexample() -> Verdict {
    let params = SpaceParams::new(0.01, 1.0, 0.0).unwrap();
    let r = counterexample_run(params, CounterexampleSetup { nx: 200, ny: 20, ..Default::default() }).unwrap();
    // expected values from an independent quadrature of the Gaussian constants
    let c = c_k(1.0);
    let cp = cdlab::quadrature::integrate(|y| (-y * y).exp(), 0.0, 0.5, 1e-15);
    let (e0, et, v) = ((4.0 / c).ln(), (4.0 / cp).ln(), (c / cp).ln());
    let errs = refinement_errors(params, &[(50, 5), (100, 11), (200, 21), (400, 41)], 0.75).unwrap();
    let converging = errs.windows(2).all(|w| w[1] < w[0]);
    let pass = (r.ent0 - e0).abs() <= 5e-3
        && r.ent_tbar >= et - 5e-3
        && (r.violation - v).abs() <= 1e-2
        && converging
        && r.violated();
    verdict(
        pass,
        format!(
            "Ent0 {:.4} (exp {e0:.4}), Ent(tbar) {:.4} (exp {et:.4}), violation {:.4} (exp {v:.4}), refinement errors {:?}, verdict {}",
            r.ent0,
            r.ent_tbar,
            r.violation,
            errs.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>(),
            r.verdict
        ),
    )
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        out.insert(path.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&path).unwrap());
    }
    out
}

fn determinism() -> Verdict {
    let scenarios = [
        Scenario::Profile,
        Scenario::Lemmas,
        Scenario::Transport,
        Scenario::Midpoint,
        Scenario::CdCheck,
        Scenario::Mgh,
        Scenario::Counterexample,
        Scenario::Calibrate,
    ];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut files = 0;
    let mut differing = Vec::new();
    for s in scenarios {
        let mut cfg = ScenarioConfig { scenario: Some(s), samples: 2_000, seed: 42, ..Default::default() };
        if s == Scenario::Counterexample {
            cfg.params.epsilon = 0.0;
        }
        let mut runs = Vec::new();
        for root in [a.path(), b.path()] {
            cfg.out = root.join(s.name());
            run_scenario(&cfg).unwrap();
            runs.push(read_all(&cfg.out));
        }
        files += runs[0].len();
        if runs[0] != runs[1] {
            differing.push(s.name());
        }
    }
    verdict(differing.is_empty() && files > 0, format!("{files} report files compared, differing scenarios {differing:?}"))
}

type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 profile gates", profile, Some(Duration::from_secs(1))),
        ("2 lemma suite", lemmas, Some(Duration::from_secs(60))),
        ("3 midpoint certificate", midpoint, Some(Duration::from_secs(30))),
        ("4 OT oracle equivalence", ot_oracle, None),
        ("5 condition sweep", condition_sweep, Some(Duration::from_secs(300))),
        ("6 dyadic convexity", dyadic, None),
        ("7 mGH certificate", mgh, None),
        ("8 counterexample", counterexample, Some(Duration::from_secs(120))),
        ("9 determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let v = run();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|l| took <= l);
        let pass = v.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map(|l| format!(" of {}s", l.as_secs())).unwrap_or_default();
        println!("{} [{name}] {} ({:.2}s{budget})", if pass { "PASS" } else { "FAIL" }, v.detail, took.as_secs_f64());
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
