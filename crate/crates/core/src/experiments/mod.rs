//! End-to-end scenarios and report emission.

pub mod calibration;
pub mod counterexample;
pub mod mgh;

use std::fs;
use std::path::{Path, PathBuf};

use rand::RngExt;
use serde::{Deserialize, Serialize};

use crate::convexity::{
    build_dyadic_geodesic, evaluate_jets, k_convexity_report, midpoint_entropy_gap, sample_jets, summarize,
    write_convexity, write_sweep, GeodesicOptions, SweepBranch,
};
use crate::error::{LabError, Result};
use crate::geometry::{Point, Profile, Space, SpaceParams};
use crate::lemmas::suite::{run_suite, write_rows};
use crate::measures::{check_cyclical_monotonicity, strip_measure};
use crate::midpoint::{certify_midpoint, check_injectivity, injectivity_derivative_bound};
use crate::quadrature::integrate;
use crate::transport::{analytic_family, solve_structured, verify_map_properties, AnalyticFamily};

pub use counterexample::{counterexample_run, eta_construct, CounterexampleReport, CounterexampleSetup};
pub use mgh::{mgh_check, MghReport};

/// Tolerance for discretized convexity margins and entropy gaps.
pub const DISCRETIZATION_TOLERANCE: f64 = 5e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Profile,
    Lemmas,
    Transport,
    Midpoint,
    CdCheck,
    Mgh,
    Counterexample,
    Calibrate,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Profile => "profile",
            Scenario::Lemmas => "lemmas",
            Scenario::Transport => "transport",
            Scenario::Midpoint => "midpoint",
            Scenario::CdCheck => "cd-check",
            Scenario::Mgh => "mgh",
            Scenario::Counterexample => "counterexample",
            Scenario::Calibrate => "calibrate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Option<Scenario>,
    pub params: SpaceParams,
    pub nx: usize,
    pub ny: usize,
    pub depth: u32,
    pub seed: u64,
    pub out: PathBuf,
    /// Sample count for sweeps (per lemma, per branch, or pairs).
    pub samples: usize,
    pub tbar: f64,
    pub alpha: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: None,
            params: SpaceParams { k: 0.01, big_k: 1.0, epsilon: 0.001 },
            nx: 100,
            ny: 10,
            depth: 5,
            seed: 1,
            out: PathBuf::from("reports"),
            samples: 10_000,
            tbar: 0.75,
            alpha: 0.25,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| LabError::Config(e.to_string()))?;
        if self.nx == 0 || self.ny == 0 {
            return Err(LabError::Config("nx and ny must be positive".into()));
        }
        if self.depth > crate::convexity::MAX_DEPTH {
            return Err(LabError::Config(format!("depth must be at most {}", crate::convexity::MAX_DEPTH)));
        }
        if self.samples == 0 {
            return Err(LabError::Config("samples must be positive".into()));
        }
        if !(self.tbar > 0.0 && self.tbar <= 1.0) {
            return Err(LabError::Config("tbar must lie in (0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(LabError::Config("alpha must lie in [0, 1)".into()));
        }
        if self.scenario.is_none() {
            return Err(LabError::Config("no scenario given".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Gate {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Gate {
        Gate { name: name.into(), value, limit, pass: value <= limit }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Gate {
        Gate { name: name.into(), value, limit, pass: value >= limit }
    }

    pub fn holds(name: &str, ok: bool) -> Gate {
        Gate { name: name.into(), value: f64::from(u8::from(ok)), limit: 1.0, pass: ok }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub scenario: Scenario,
    pub pass: bool,
    pub gates: Vec<Gate>,
    pub files: Vec<String>,
}

struct Reports {
    dir: PathBuf,
    files: Vec<String>,
}

impl Reports {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Reports { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        fs::write(self.dir.join(name), s)?;
        self.files.push(name.into());
        Ok(())
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(fs::File) -> Result<()>) -> Result<()> {
        write(fs::File::create(self.dir.join(name))?)?;
        self.files.push(name.into());
        Ok(())
    }
}

/// `ε + ∫ (x - r) φ(r) dr` by adaptive quadrature.
fn profile_by_quadrature(k: f64, epsilon: f64, x: f64) -> (f64, f64) {
    if x <= -k {
        return (epsilon, 0.0);
    }
    let b = x.min(k);
    let f = epsilon + integrate(|r| (x - r) * Profile::phi(k, r), -k, b, 1e-15);
    let df = integrate(|r| Profile::phi(k, r), -k, b, 1e-15);
    (f, df)
}

pub fn profile_gates(space: &Space) -> Vec<Gate> {
    let SpaceParams { k, epsilon, .. } = space.params;
    let p = &space.profile;
    let mut gates = vec![
        Gate::at_most("f(-1) = eps", (p.f(-1.0) - epsilon).abs(), 1e-12),
        Gate::at_most("f'(-1) = 0", p.df(-1.0).abs(), 1e-12),
        Gate::at_most("f(k) = eps + k^2", (p.f(k) - (epsilon + k * k)).abs(), 1e-12),
        Gate::at_most("f(1) = eps + k", (p.f(1.0) - (epsilon + k)).abs(), 1e-12),
    ];
    let mut worst = 0.0f64;
    let mut worst_df = 0.0f64;
    for x in [-1.0, -k, -0.5 * k, 0.0, 0.5 * k, k, 0.5, 1.0] {
        let (fq, dq) = profile_by_quadrature(k, epsilon, x);
        worst = worst.max((p.f(x) - fq).abs());
        worst_df = worst_df.max((p.df(x) - dq).abs());
    }
    gates.push(Gate::at_most("f against quadrature", worst, 1e-12));
    gates.push(Gate::at_most("f' against quadrature", worst_df, 1e-12));
    let n = 100_000;
    let fmax = (0..=n).map(|i| p.f(-1.0 + 2.0 * i as f64 / n as f64)).fold(0.0, f64::max);
    gates.push(Gate { name: "max f < 3k".into(), value: fmax, limit: 3.0 * k, pass: fmax < 3.0 * k });
    gates
}

fn strips(space: &Space, cfg: &ScenarioConfig) -> Result<(crate::measures::DiscreteMeasure, crate::measures::DiscreteMeasure)> {
    Ok((strip_measure(space, -0.5, -0.25, cfg.nx, cfg.ny)?, strip_measure(space, 0.25, 0.5, cfg.nx, cfg.ny)?))
}

#[derive(Serialize)]
struct MidpointSummary {
    pairs: usize,
    per_class: Vec<(String, usize, f64)>,
    worst_deviation: f64,
    outside: usize,
    derivative_bound: f64,
    injectivity: crate::midpoint::InjectivityReport,
}

fn run_midpoint(space: &Space, cfg: &ScenarioConfig, rep: &mut Reports) -> Result<Vec<Gate>> {
    let p = &space.profile;
    let mut rng = crate::sampling::rng(cfg.seed);
    let tags = ["V", "D", "H0", "H1"];
    let mut count = [0usize; 4];
    let mut worst = [0.0f64; 4];
    let mut outside = 0;
    for _ in 0..cfg.samples {
        let x0: f64 = rng.random_range(-1.0..1.0);
        let w = 10f64.powf(rng.random_range(-5.0..0.3));
        let x1 = (x0 + if rng.random::<bool>() { w } else { -w }).clamp(-1.0, 1.0);
        let a = Point::new(x0, rng.random::<f64>() * p.f(x0));
        let b = Point::new(x1, rng.random::<f64>() * p.f(x1));
        let c = certify_midpoint(a, b, p)?;
        let i = c.class.tag as usize;
        count[i] += 1;
        worst[i] = worst[i].max(c.worst());
        if !c.in_space {
            outside += 1;
        }
    }
    let (mu0, _) = strips(space, cfg)?;
    let map = analytic_family(AnalyticFamily::HorizontalRescaled { delta: 0.75 }, space, &mu0)?;
    let grid = mu0.grid.unwrap();
    let inj = check_injectivity(&map.pairs(), p, grid.dx(), grid.ny)?;
    let worst_all = worst.iter().cloned().fold(0.0, f64::max);
    let bound = injectivity_derivative_bound(space.params.k);
    rep.json(
        "midpoint.json",
        &MidpointSummary {
            pairs: cfg.samples,
            per_class: (0..4).map(|i| (tags[i].to_string(), count[i], worst[i])).collect(),
            worst_deviation: worst_all,
            outside,
            derivative_bound: bound,
            injectivity: inj.clone(),
        },
    )?;
    Ok(vec![
        Gate::at_most("midpoint deviation", worst_all, 1e-9),
        Gate::at_most("midpoints outside the space", outside as f64, 0.0),
        Gate::at_least("injectivity derivative bound", bound, 0.0),
        Gate::at_most("midpoint collisions", inj.collisions as f64, 0.0),
    ])
}

fn run_cd_check(space: &Space, cfg: &ScenarioConfig, rep: &mut Reports) -> Result<Vec<Gate>> {
    let mut gates = Vec::new();
    let mut all = Vec::new();
    let mut sums = Vec::new();
    for (b, branch) in SweepBranch::ALL.into_iter().enumerate() {
        let jets = sample_jets(branch, space, cfg.samples, cfg.seed.wrapping_add(b as u64))?;
        let samples = evaluate_jets(space, &jets)?;
        let s = summarize(branch, &samples);
        gates.push(Gate::at_least(&format!("condition margin {}", branch.name()), s.min_margin, -crate::convexity::CONDITION_SLACK));
        sums.push(s);
        all.extend(samples);
    }
    rep.csv("condition_sweep.csv", |f| write_sweep(&all, f))?;
    let (mu0, mu1) = strips(space, cfg)?;
    let (_, map) = solve_structured(space, &mu0, &mu1)?;
    let props = verify_map_properties(space, &map);
    gates.push(Gate::holds("map properties", props.iter().all(|p| p.pass)));
    let gap = midpoint_entropy_gap(space, &mu0, &mu1, &map)?;
    gates.push(Gate::at_most("midpoint entropy gap", gap.gap, DISCRETIZATION_TOLERANCE));
    let fam = build_dyadic_geodesic(space, &mu0, &map, cfg.depth, GeodesicOptions::default())?;
    let rows = k_convexity_report(&fam, 0.0)?;
    let worst = rows.iter().map(|r| r.margin).fold(f64::NEG_INFINITY, f64::max);
    gates.push(Gate::at_most("dyadic convexity margin", worst, DISCRETIZATION_TOLERANCE));
    gates.push(Gate::at_most("geodesic speed deviation", fam.speed_deviation, 1e-9));
    rep.csv("convexity.csv", |f| write_convexity(&rows, f))?;

    #[derive(Serialize)]
    struct CdCheck<'a> {
        params: SpaceParams,
        sweeps: &'a [crate::convexity::SweepSummary],
        map_properties: &'a [crate::transport::PropertyCheck],
        entropy_gap: &'a crate::convexity::EntropyGap,
        depth: u32,
        w2_squared: f64,
        speed_deviation: f64,
        max_convexity_margin: f64,
    }
    rep.json(
        "cd_check.json",
        &CdCheck {
            params: space.params,
            sweeps: &sums,
            map_properties: &props,
            entropy_gap: &gap,
            depth: cfg.depth,
            w2_squared: fam.w2_squared,
            speed_deviation: fam.speed_deviation,
            max_convexity_margin: worst,
        },
    )?;
    Ok(gates)
}

/// Runs one scenario and writes its reports under `cfg.out`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Outcome> {
    cfg.validate()?;
    let scenario = cfg.scenario.unwrap();
    let space = Space::new(cfg.params)?;
    let mut rep = Reports::new(&cfg.out)?;
    let gates = match scenario {
        Scenario::Profile => {
            let gates = profile_gates(&space);
            fs::write(cfg.out.join("profile.json"), space.profile.to_json()? + "\n")?;
            rep.files.push("profile.json".into());
            rep.json("profile_gates.json", &gates)?;
            gates
        }
        Scenario::Lemmas => {
            let (sums, rows) = run_suite(&space, cfg.samples, cfg.seed, true)?;
            rep.json("lemma_summary.json", &sums)?;
            rep.csv("lemma_margins.csv", |f| write_rows(&rows, f))?;
            sums.iter().map(|s| Gate::at_most(&format!("{} failures", s.lemma), s.failures as f64, 0.0)).collect()
        }
        Scenario::Transport => {
            let (mu0, mu1) = strips(&space, cfg)?;
            let (plan, map) = solve_structured(&space, &mu0, &mu1)?;
            let props = verify_map_properties(&space, &map);
            let mono = check_cyclical_monotonicity(&plan, cfg.samples, cfg.seed);
            rep.csv("plan.csv", |f| plan.write_csv(f))?;
            #[derive(Serialize)]
            struct TransportSummary<'a> {
                cost: f64,
                split_fraction: f64,
                properties: &'a [crate::transport::PropertyCheck],
                monotonicity: &'a crate::measures::MonotonicityReport,
            }
            rep.json(
                "transport.json",
                &TransportSummary { cost: plan.cost_value, split_fraction: map.split_fraction, properties: &props, monotonicity: &mono },
            )?;
            let mut gates: Vec<Gate> = props.iter().map(|p| Gate::at_most(&p.property, p.worst_violation, p.tolerance)).collect();
            gates.push(Gate::at_most("monotonicity violations", mono.violations as f64, 0.0));
            gates
        }
        Scenario::Midpoint => run_midpoint(&space, cfg, &mut rep)?,
        Scenario::CdCheck => run_cd_check(&space, cfg, &mut rep)?,
        Scenario::Mgh => {
            let k = cfg.params.k;
            let mut reports = Vec::new();
            for e in [k / 2.0, k / 4.0, k / 8.0] {
                reports.push(mgh_check(cfg.params.with_epsilon(e)?, cfg.samples, cfg.seed)?);
            }
            rep.json("mgh.json", &reports)?;
            reports
                .iter()
                .flat_map(|r| {
                    [
                        Gate::at_most(&format!("distortion eps_n = {}", r.epsilon_n), r.max_distortion, r.distortion_bound),
                        Gate::at_most(&format!("pushforward eps_n = {}", r.epsilon_n), r.pushforward_error, 1e-9),
                    ]
                })
                .collect()
        }
        Scenario::Counterexample => {
            let setup = CounterexampleSetup { nx: cfg.nx, ny: cfg.ny, tbar: cfg.tbar, depth: cfg.depth, alpha: cfg.alpha };
            let r = counterexample_run(cfg.params, setup)?;
            rep.csv("counterexample_entropy.csv", |f| write_convexity(&r.margins, f))?;
            rep.json("counterexample.json", &r)?;
            let mut gates = vec![
                Gate::holds("strict-CD-violated", r.violated()),
                Gate::at_most("Ent(mu_0) error", (r.ent0 - r.ent0_expected).abs(), DISCRETIZATION_TOLERANCE),
                Gate::at_least("Ent at tbar", r.ent_tbar, r.ent_tbar_expected - DISCRETIZATION_TOLERANCE),
            ];
            if let Some(m) = &r.mixing {
                gates.push(Gate::holds("mixing plan violates convexity", m.violated));
            }
            gates
        }
        Scenario::Calibrate => {
            let c = calibration::calibrate(cfg.params, cfg.samples, cfg.seed)?;
            rep.json("calibration.json", &c)?;
            vec![Gate::holds("k calibrated", c.width.k.is_some()), Gate::at_most("K", c.big_k.big_k, 1e4)]
        }
    };
    let pass = gates.iter().all(|g| g.pass);
    let outcome = Outcome { scenario, pass, gates, files: rep.files.clone() };
    rep.json("outcome.json", &outcome)?;
    Ok(Outcome { files: rep.files, ..outcome })
}
