//! Quasi-random sweeps of the margin evaluators over their hypotheses.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    convexity_estimate_margin, gamma_bound_margins, kconvexity_margin, log_inequality_margin,
    ratio_bound_margin, BlendCurve, LineCurve, Margin,
};
use crate::error::Result;
use crate::geometry::{Point, Space};
use crate::sampling::{open_unit, ShiftedSobol};

/// Margins below this count as failures.
pub const MARGIN_SLACK: f64 = 1e-9;

/// Second-derivative constant passed to the convexity estimate. The
/// curves sampled here have `|y''| ≤ 5k/f` by the curvature bound on `γ`
/// with slope at most one.
pub const CURVE_H: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LemmaId {
    LogInequality,
    GammaSlope,
    GammaCurvature,
    ConvexityEstimate,
    KConvexity,
    RatioBound,
}

impl LemmaId {
    pub const ALL: [LemmaId; 6] = [
        LemmaId::LogInequality,
        LemmaId::GammaSlope,
        LemmaId::GammaCurvature,
        LemmaId::ConvexityEstimate,
        LemmaId::KConvexity,
        LemmaId::RatioBound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaId::LogInequality => "log_inequality",
            LemmaId::GammaSlope => "gamma_slope",
            LemmaId::GammaCurvature => "gamma_curvature",
            LemmaId::ConvexityEstimate => "convexity_estimate",
            LemmaId::KConvexity => "k_convexity",
            LemmaId::RatioBound => "ratio_bound",
        }
    }

    fn dims(self) -> usize {
        match self {
            LemmaId::LogInequality => 3,
            LemmaId::GammaSlope | LemmaId::GammaCurvature => 6,
            LemmaId::ConvexityEstimate | LemmaId::KConvexity => 6,
            LemmaId::RatioBound => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaSummary {
    pub lemma: &'static str,
    pub samples: usize,
    pub evaluated: usize,
    pub failures: usize,
    pub rejected: usize,
    pub min_margin: f64,
    pub worst_input: String,
}

impl LemmaSummary {
    pub fn pass(&self) -> bool {
        self.failures == 0 && self.evaluated > 0
    }
}

/// One row of the margin report.
#[derive(Debug, Clone, Serialize)]
pub struct MarginRow {
    pub lemma: &'static str,
    pub input: String,
    pub margin: f64,
    pub pass: bool,
}

pub(crate) fn x_coordinate(sel: f64, u: f64, k: f64) -> f64 {
    // half the points uniform on [-1, 1], half concentrated on the bump
    if sel < 0.5 {
        -1.0 + 2.0 * open_unit(u)
    } else {
        (-1.0 + 2.0 * u) * (4.0 * k).min(1.0)
    }
}

/// Evaluates one lemma at the sample `u ∈ [0,1)^d`. `Ok(None)` marks a
/// sample outside the lemma's hypotheses.
fn evaluate(id: LemmaId, u: &[f64], space: &Space) -> Result<Option<Margin>> {
    let prof = &space.profile;
    let k = space.params.k;
    match id {
        LemmaId::LogInequality => {
            let delta = (2.0 * open_unit(u[1]) - 1.0) / 32.0;
            let a = if u[0] < 0.5 {
                1.0 + 16.0 * delta.abs() * (2.0 * u[2] - 1.0)
            } else {
                10f64.powf(6.0 * u[2] - 3.0)
            };
            if a <= 0.0 {
                return Ok(None);
            }
            log_inequality_margin(a, delta).map(Some)
        }
        LemmaId::GammaSlope | LemmaId::GammaCurvature => {
            let x0 = x_coordinate(u[0], u[1], k);
            let w = 2.0 * 10f64.powf(-4.0 * u[2]);
            let mut x1 = x0 + w;
            if x1 > 1.0 {
                x1 = x0 - w;
            }
            if !(-1.0..=1.0).contains(&x1) || x1 == x0 {
                return Ok(None);
            }
            let p0 = Point::new(x0, u[3] * prof.f(x0));
            let p1 = Point::new(x1, u[4] * prof.f(x1));
            let (slope, curv) = gamma_bound_margins(p0, p1, u[5], prof)?;
            Ok(Some(if id == LemmaId::GammaSlope { slope } else { curv }))
        }
        LemmaId::ConvexityEstimate | LemmaId::KConvexity => {
            let x0 = x_coordinate(u[0], u[1], k);
            let f0 = prof.f(x0);
            let dx = open_unit(u[2]) * (2.0 * f0).min(1.0 - x0);
            let x1 = x0 + dx;
            if !(x1 <= 1.0) || dx <= 0.0 {
                return Ok(None);
            }
            let f1 = prof.f(x1);
            let s_hi = (f1 / dx).min(1.0);
            let blend = u[5] >= 0.5;
            let s_lo = if blend { 0.5 } else { 0.25 };
            if s_hi <= s_lo {
                return Ok(None);
            }
            let s = s_lo + (s_hi - s_lo) * open_unit(u[3]);
            let y1 = s * dx + (f1 - s * dx) * u[4];
            let y0 = y1 - s * dx;
            let run = |m: Result<Margin>| -> Result<Option<Margin>> {
                match m {
                    Ok(m) => Ok(Some(m)),
                    Err(crate::LabError::Inadmissible(_)) | Err(crate::LabError::OutsideSpace { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            };
            if blend {
                let c = BlendCurve { x0, x1, y0, y_end: y0 + 0.5 * dx, lambda: 2.0 * s - 1.0 };
                if id == LemmaId::ConvexityEstimate {
                    run(convexity_estimate_margin(&c, CURVE_H, space))
                } else {
                    run(kconvexity_margin(&c, CURVE_H, space))
                }
            } else {
                let c = LineCurve { x0, x1, y0, slope: s };
                if id == LemmaId::ConvexityEstimate {
                    run(convexity_estimate_margin(&c, CURVE_H, space))
                } else {
                    run(kconvexity_margin(&c, CURVE_H, space))
                }
            }
        }
        LemmaId::RatioBound => {
            let x = x_coordinate(u[0], u[1], k);
            let reach = (1.0 + x).min(1.0 - x);
            if reach <= 0.0 {
                return Ok(None);
            }
            let delta = reach * 10f64.powf(-6.0 * u[2]);
            ratio_bound_margin(x, delta, prof).map(Some)
        }
    }
}

/// Runs `samples` Sobol points through one lemma. When `rows` is given,
/// every evaluated point is appended in sample order.
pub fn run_lemma(
    id: LemmaId,
    space: &Space,
    samples: usize,
    seed: u64,
    rows: Option<&mut Vec<MarginRow>>,
) -> Result<LemmaSummary> {
    let points: Vec<Vec<f64>> = ShiftedSobol::new(id.dims(), seed).take(samples).collect();
    let results: Vec<Option<Margin>> = points
        .par_iter()
        .map(|u| evaluate(id, u, space))
        .collect::<Result<_>>()?;
    let mut summary = LemmaSummary {
        lemma: id.name(),
        samples,
        evaluated: 0,
        failures: 0,
        rejected: 0,
        min_margin: f64::INFINITY,
        worst_input: String::new(),
    };
    let mut out = rows;
    for m in &results {
        let Some(m) = m else {
            summary.rejected += 1;
            continue;
        };
        summary.evaluated += 1;
        let pass = m.holds(MARGIN_SLACK);
        if !pass {
            summary.failures += 1;
        }
        if m.value < summary.min_margin {
            summary.min_margin = m.value;
            summary.worst_input = m.echo();
        }
        if let Some(r) = out.as_deref_mut() {
            r.push(MarginRow { lemma: id.name(), input: m.echo(), margin: m.value, pass });
        }
    }
    Ok(summary)
}

/// Runs every lemma; returns the summaries and, if requested, all rows.
pub fn run_suite(
    space: &Space,
    samples: usize,
    seed: u64,
    keep_rows: bool,
) -> Result<(Vec<LemmaSummary>, Vec<MarginRow>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for id in LemmaId::ALL {
        let r = if keep_rows { Some(&mut rows) } else { None };
        summaries.push(run_lemma(id, space, samples, seed, r)?);
    }
    Ok((summaries, rows))
}

pub fn write_rows<W: Write>(rows: &[MarginRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SpaceParams;

    fn space() -> Space {
        Space::new(SpaceParams::new(0.01, 1.0, 0.001).unwrap()).unwrap()
    }

    #[test]
    fn small_suite_passes() {
        let (sums, rows) = run_suite(&space(), 2000, 3, true).unwrap();
        for s in &sums {
            assert!(s.pass(), "{s:?}");
            assert!(s.evaluated > 500, "{s:?}");
        }
        assert_eq!(rows.len(), sums.iter().map(|s| s.evaluated).sum::<usize>());
    }

    #[test]
    fn rows_are_deterministic() {
        let a = run_suite(&space(), 300, 11, true).unwrap().1;
        let b = run_suite(&space(), 300, 11, true).unwrap().1;
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_rows(&a, &mut ba).unwrap();
        write_rows(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
    }
}
