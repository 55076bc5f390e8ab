//! The spaces `X_{k,ε} = {(x, y) : x ∈ [-1, 1], 0 ≤ y ≤ f(x)}` with the
//! sup-metric, their reference densities, and the classification of point
//! pairs used by the midpoint map.
//!
//! The profile `f` solves `f'' = φ`, `f'(-1) = 0`, `f(-1) = ε` with the bump
//! `φ(x) = ¾(1 - (x/k)²)` on `[-k, k]` (zero elsewhere). It is stored as an
//! exact piecewise quartic:
//!
//! | piece       | `f` in the local variable `t = x - lo` |
//! |-------------|----------------------------------------|
//! | `[-1, -k]`  | `ε`                                    |
//! | `[-k, k]`   | `ε + t³/(4k) - t⁴/(16k²)`              |
//! | `[k, 1]`    | `ε + k² + k t`                         |

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quadrature;

/// Relative slack used when deciding whether a point lies in the space.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub k: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub epsilon: f64,
}

impl SpaceParams {
    pub fn new(k: f64, big_k: f64, epsilon: f64) -> Result<Self> {
        let p = SpaceParams { k, big_k, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let SpaceParams { k, big_k, epsilon } = *self;
        if !(k.is_finite() && big_k.is_finite() && epsilon.is_finite()) {
            return Err(LabError::Parameter("parameters must be finite".into()));
        }
        if !(0.0 <= epsilon && epsilon < k && k < 0.5) {
            return Err(LabError::Parameter(format!(
                "need 0 <= epsilon < k < 1/2, got epsilon = {epsilon}, k = {k}"
            )));
        }
        if big_k < 1.0 {
            return Err(LabError::Parameter(format!("need K >= 1, got {big_k}")));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        SpaceParams::new(self.k, self.big_k, epsilon)
    }

    pub fn with_big_k(&self, big_k: f64) -> Result<Self> {
        SpaceParams::new(self.k, big_k, self.epsilon)
    }
}

/// One polynomial piece of the profile, in the local variable `x - lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePiece {
    pub lo: f64,
    pub hi: f64,
    /// Monomial coefficients of `f`, lowest degree first.
    pub coeffs: [f64; 5],
}

impl ProfilePiece {
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = x - self.lo;
        let c = &self.coeffs;
        let f = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
        let df = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]));
        let d2f = 2.0 * c[2] + t * (6.0 * c[3] + t * 12.0 * c[4]);
        (f, df, d2f)
    }
}

/// The profile `f_{k,ε}` together with its first two derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub k: f64,
    pub epsilon: f64,
    pub pieces: Vec<ProfilePiece>,
}

/// `(f, f', f'')` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub f: f64,
    pub df: f64,
    pub d2f: f64,
}

pub fn build_profile(params: &SpaceParams) -> Result<Profile> {
    params.validate()?;
    let SpaceParams { k, epsilon, .. } = *params;
    let pieces = vec![
        ProfilePiece { lo: -1.0, hi: -k, coeffs: [epsilon, 0.0, 0.0, 0.0, 0.0] },
        ProfilePiece {
            lo: -k,
            hi: k,
            coeffs: [epsilon, 0.0, 0.0, 1.0 / (4.0 * k), -1.0 / (16.0 * k * k)],
        },
        ProfilePiece { lo: k, hi: 1.0, coeffs: [epsilon + k * k, k, 0.0, 0.0, 0.0] },
    ];
    Ok(Profile { k, epsilon, pieces })
}

impl Profile {
    /// The bump `φ = f''`.
    pub fn phi(k: f64, x: f64) -> f64 {
        if x.abs() < k {
            0.75 * (1.0 - (x / k).powi(2))
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: f64) -> Result<ProfileValue> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(LabError::Domain { x });
        }
        let piece = self
            .pieces
            .iter()
            .find(|p| x <= p.hi)
            .unwrap_or_else(|| self.pieces.last().unwrap());
        let (f, df, d2f) = piece.eval(x);
        Ok(ProfileValue { f, df, d2f })
    }

    /// `f(x)`, panicking outside `[-1, 1]`. Used on coordinates already
    /// validated by the caller.
    pub fn f(&self, x: f64) -> f64 {
        self.eval(x).expect("profile evaluated outside [-1, 1]").f
    }

    pub fn df(&self, x: f64) -> f64 {
        self.eval(x).expect("profile evaluated outside [-1, 1]").df
    }

    /// Normalized height `y / f(x)`; zero on the singular segment.
    pub fn ratio(&self, p: Point) -> Result<f64> {
        let f = self.eval(p.x)?.f;
        if f > 0.0 {
            Ok(p.y / f)
        } else if p.y == 0.0 {
            Ok(0.0)
        } else {
            Err(LabError::SingularProfile { x: p.x })
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        if !(-1.0..=1.0).contains(&p.x) || p.y < 0.0 || !p.y.is_finite() {
            return false;
        }
        let f = self.f(p.x);
        p.y <= f * (1.0 + MEMBERSHIP_SLACK)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProfileDump::from(self))?)
    }
}

/// Documented dump schema: breakpoints plus coefficients of `f`, `f'`,
/// `f''` in the local variable `x - lo`, lowest degree first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileDump {
    pub k: f64,
    pub epsilon: f64,
    pub breakpoints: Vec<f64>,
    pub pieces: Vec<PieceDump>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PieceDump {
    pub lo: f64,
    pub hi: f64,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub d2f: Vec<f64>,
}

impl From<&Profile> for ProfileDump {
    fn from(p: &Profile) -> Self {
        let mut breakpoints = vec![p.pieces[0].lo];
        breakpoints.extend(p.pieces.iter().map(|q| q.hi));
        let pieces = p
            .pieces
            .iter()
            .map(|q| {
                let c = q.coeffs;
                PieceDump {
                    lo: q.lo,
                    hi: q.hi,
                    f: c.to_vec(),
                    df: vec![c[1], 2.0 * c[2], 3.0 * c[3], 4.0 * c[4]],
                    d2f: vec![2.0 * c[2], 6.0 * c[3], 12.0 * c[4]],
                }
            })
            .collect();
        ProfileDump { k: p.k, epsilon: p.epsilon, breakpoints, pieces }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

pub fn dist_inf(p: Point, q: Point) -> f64 {
    (p.x - q.x).abs().max((p.y - q.y).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairTag {
    V,
    D,
    H0,
    H1,
}

impl PairTag {
    pub fn is_horizontal(self) -> bool {
        matches!(self, PairTag::H0 | PairTag::H1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairTag::V => "V",
            PairTag::D => "D",
            PairTag::H0 => "H0",
            PairTag::H1 => "H1",
        }
    }
}

impl std::fmt::Display for PairTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairClass {
    pub tag: PairTag,
    /// Sign of `x1 - x0` (-1, 0 or 1).
    pub dx_sign: i8,
    /// Sign of `y1 - y0`.
    pub dy_sign: i8,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Sorts a pair into exactly one of `V`, `D`, `H0`, `H1`.
pub fn classify_pair(p0: Point, p1: Point) -> PairClass {
    let dx = (p1.x - p0.x).abs();
    let dy = (p1.y - p0.y).abs();
    let tag = if dx == dy {
        PairTag::D
    } else if dx < dy {
        PairTag::V
    } else if 0.5 * dx >= dy {
        PairTag::H0
    } else {
        PairTag::H1
    };
    PairClass { tag, dx_sign: sign(p1.x - p0.x), dy_sign: sign(p1.y - p0.y) }
}

/// Value of the reference measure at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Density {
    /// Density with respect to two-dimensional Lebesgue measure.
    Absolute(f64),
    /// The point lies on the singular segment `{f = 0} × {0}` (only when
    /// `ε = 0`), which carries `line_density · H¹`.
    Singular { line_density: f64 },
}

/// `∫_0^1 exp(-K y²) dy`.
pub fn c_k(big_k: f64) -> f64 {
    quadrature::integrate(|y| (-big_k * y * y).exp(), 0.0, 1.0, 1e-13)
}

/// `∫_0^{1/2} exp(-K y²) dy`.
pub fn c_k_prime(big_k: f64) -> f64 {
    quadrature::integrate(|y| (-big_k * y * y).exp(), 0.0, 0.5, 1e-13)
}

/// A fully built space: parameters, profile and the constant `C_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    pub params: SpaceParams,
    pub profile: Profile,
    pub c_k: f64,
}

impl Space {
    pub fn new(params: SpaceParams) -> Result<Self> {
        let profile = build_profile(&params)?;
        Ok(Space { params, profile, c_k: c_k(params.big_k) })
    }

    pub fn big_k(&self) -> f64 {
        self.params.big_k
    }

    pub fn contains(&self, p: Point) -> bool {
        self.profile.contains(p)
    }

    pub fn density(&self, p: Point) -> Result<Density> {
        if !self.contains(p) {
            return Err(LabError::OutsideSpace { x: p.x, y: p.y });
        }
        let f = self.profile.f(p.x);
        if f <= 0.0 {
            return Ok(Density::Singular { line_density: self.c_k });
        }
        let r = p.y / f;
        Ok(Density::Absolute((-self.params.big_k * r * r).exp() / f))
    }

    /// `log m(p)` for points off the singular segment, computed without
    /// forming the exponential.
    pub fn log_density(&self, p: Point) -> Result<f64> {
        if !self.contains(p) {
            return Err(LabError::OutsideSpace { x: p.x, y: p.y });
        }
        let f = self.profile.f(p.x);
        if f <= 0.0 {
            return Err(LabError::SingularProfile { x: p.x });
        }
        let r = p.y / f;
        Ok(-f.ln() - self.params.big_k * r * r)
    }
}
