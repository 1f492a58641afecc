//! Experiment drivers: decay curves, rate fits against exp(λ∫ℓ(u)/u du),
//! boundary Harnack ratios, Θ/Ξ structure and the Dini dichotomy.
//!
//! Everything here runs in double precision.

use crate::engine::derive_seed;
use crate::error::{Error, Result};
use crate::geometry::{Domain, GraphSign};
use crate::killedpaths::{factorization_check, FactorizationConfig, FactorizationTable, PathConfig};
use crate::moduli::{classify_dini, regularize};
use crate::stablelaw::StableIndex;
use crate::wos::{collar_survival, theta_xi, BallEstimator, Estimate, TargetFn, ThetaXi, Wos, WosOptions};
use crate::Modulus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllFamily {
    Zero,
    Constant,
    Power,
    Logpower,
    Table,
    /// ℓ̄ of the `inner` modulus.
    Regularized,
}

/// Serializable description of a modulus ℓ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllConfig {
    pub family: EllFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<EllConfig>>,
}

impl Default for EllConfig {
    fn default() -> Self {
        Self::family(EllFamily::Zero)
    }
}

impl EllConfig {
    fn family(family: EllFamily) -> Self {
        Self {
            family,
            p: None,
            scale: None,
            exponent: None,
            value: None,
            r: None,
            values: None,
            inner: None,
        }
    }

    pub fn logpower(p: f64) -> Self {
        Self {
            p: Some(p),
            ..Self::family(EllFamily::Logpower)
        }
    }

    pub fn power(scale: f64, exponent: f64) -> Self {
        Self {
            scale: Some(scale),
            exponent: Some(exponent),
            ..Self::family(EllFamily::Power)
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            value: Some(value),
            ..Self::family(EllFamily::Constant)
        }
    }

    pub fn regularized(self) -> Self {
        Self {
            inner: Some(Box::new(self)),
            ..Self::family(EllFamily::Regularized)
        }
    }

    /// The modulus without any regularisation wrapper.
    pub fn unwrapped(&self) -> &EllConfig {
        match (&self.family, &self.inner) {
            (EllFamily::Regularized, Some(i)) => i.unwrapped(),
            _ => self,
        }
    }

    /// Builds the modulus; `path` prefixes field names in errors.
    pub fn build_at(&self, path: &str) -> Result<Modulus> {
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| Error::Config {
                path: format!("{path}.{field}"),
                message: format!("required for family {:?}", self.family),
            })
        };
        let wrap = |e: Error| Error::Config {
            path: path.to_string(),
            message: e.to_string(),
        };
        let base = match self.family {
            EllFamily::Zero => Modulus::zero(),
            EllFamily::Constant => Modulus::constant(need(self.value, "value")?).map_err(wrap)?,
            EllFamily::Power => Modulus::power(need(self.scale, "scale")?, need(self.exponent, "exponent")?).map_err(wrap)?,
            EllFamily::Logpower => Modulus::logpower(need(self.p, "p")?).map_err(wrap)?,
            EllFamily::Table => {
                let r = self.r.clone().ok_or_else(|| Error::Config {
                    path: format!("{path}.r"),
                    message: "required for family Table".into(),
                })?;
                let v = self.values.clone().ok_or_else(|| Error::Config {
                    path: format!("{path}.values"),
                    message: "required for family Table".into(),
                })?;
                Modulus::table(r, v).map_err(wrap)?
            }
            EllFamily::Regularized => {
                let inner = self.inner.as_ref().ok_or_else(|| Error::Config {
                    path: format!("{path}.inner"),
                    message: "required for family Regularized".into(),
                })?;
                regularize(&inner.build_at(&format!("{path}.inner"))?).map_err(wrap)?
            }
        };
        Ok(base)
    }

    pub fn build(&self) -> Result<Modulus> {
        self.build_at("ell")
    }

    pub fn describe(&self) -> String {
        match self.family {
            EllFamily::Zero => "zero".to_string(),
            EllFamily::Constant => format!("constant({})", self.value.unwrap_or(f64::NAN)),
            EllFamily::Power => format!(
                "power({}, {})",
                self.scale.unwrap_or(f64::NAN),
                self.exponent.unwrap_or(f64::NAN)
            ),
            EllFamily::Logpower => format!("logpower({})", self.p.unwrap_or(f64::NAN)),
            EllFamily::Table => "table".to_string(),
            EllFamily::Regularized => format!(
                "regularized {}",
                self.inner.as_ref().map(|i| i.describe()).unwrap_or_default()
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DecayCurve,
    Dichotomy,
    Bhp,
    ThetaXi,
    Factorization,
}

/// Which side of the graph of Γ_ℓ the domain lies on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainChoice {
    Halfspace,
    /// D_ℓ, above the graph of Γ_ℓ.
    Upper,
    /// D_{−ℓ}, above the graph of −Γ_ℓ.
    #[default]
    Lower,
}

impl DomainChoice {
    pub fn build(self, d: usize, ell: &Modulus) -> Result<Domain<f64>> {
        match self {
            DomainChoice::Halfspace => Domain::halfspace(d),
            DomainChoice::Upper => Domain::graph(d, ell.clone(), GraphSign::Above),
            DomainChoice::Lower => Domain::graph(d, ell.clone(), GraphSign::Below),
        }
    }

    /// Sign the fitted rate should carry.
    pub fn expected_sign(self) -> i32 {
        match self {
            DomainChoice::Halfspace => 0,
            DomainChoice::Upper => -1,
            DomainChoice::Lower => 1,
        }
    }
}

/// Raw exit probabilities, or Θ/Ξ-scaled ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    Scaled,
}

/// Walk-on-spheres settings exposed in configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WosConfig {
    pub safety: f64,
    pub max_steps: u64,
    pub max_discard_fraction: f64,
    pub ball_estimator: BallEstimator,
}

impl Default for WosConfig {
    fn default() -> Self {
        let o = WosOptions::default();
        Self {
            safety: o.safety,
            max_steps: o.max_steps,
            max_discard_fraction: o.max_discard_fraction,
            ball_estimator: o.ball_estimator,
        }
    }
}

impl WosConfig {
    pub fn options(&self) -> WosOptions {
        WosOptions {
            safety: self.safety,
            max_steps: self.max_steps,
            max_discard_fraction: self.max_discard_fraction,
            ball_estimator: self.ball_estimator,
            progress: None,
        }
    }
}

/// Exterior target set for harmonic-measure comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Ball { center: Vec<f64>, radius: f64 },
    /// {z : lower < z[axis] < upper}; a missing bound is infinite.
    Slab {
        axis: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
    },
}

impl TargetSpec {
    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            TargetSpec::Ball { center, radius } => crate::scalar::dist(z, center) < *radius,
            TargetSpec::Slab { axis, lower, upper } => {
                let v = z[*axis];
                lower.is_none_or(|l| v > l) && upper.is_none_or(|u| v < u)
            }
        }
    }

    /// True when the set cannot meet B(q, radius).
    pub fn clear_of(&self, q: &[f64], radius: f64) -> bool {
        match self {
            TargetSpec::Ball { center, radius: b } => crate::scalar::dist(center, q) >= radius + b,
            TargetSpec::Slab { axis, lower, upper } => {
                let c = q[*axis];
                lower.is_some_and(|l| l >= c + radius) || upper.is_some_and(|u| u <= c - radius)
            }
        }
    }
}

/// Serializable domain description, e.g.
/// `{"kind": "graph", "sign": -1, "ell": {...}}` or
/// `{"kind": "collar", "R": 0.5, "base": {...}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Whole,
    Halfspace,
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// x_d > sign·Γ_ℓ(x_1).
    Graph {
        sign: i32,
        ell: EllConfig,
    },
    Collar {
        #[serde(rename = "R")]
        width: f64,
        base: Box<DomainSpec>,
    },
    IntersectBall {
        base: Box<DomainSpec>,
        center: Vec<f64>,
        radius: f64,
    },
}

impl DomainSpec {
    pub fn build(&self, d: usize) -> Result<Domain<f64>> {
        self.build_at(d, "domain_spec")
    }

    fn build_at(&self, d: usize, path: &str) -> Result<Domain<f64>> {
        let wrap = |e: Error| match e {
            Error::Config { .. } => e,
            other => cfg_err(path, other.to_string()),
        };
        match self {
            DomainSpec::Whole => Domain::whole(d).map_err(wrap),
            DomainSpec::Halfspace => Domain::halfspace(d).map_err(wrap),
            DomainSpec::Ball { center, radius } => Domain::ball(center.clone(), *radius).map_err(wrap),
            DomainSpec::Graph { sign, ell } => {
                let sign = GraphSign::from_int(*sign).map_err(|e| cfg_err(&format!("{path}.sign"), e.to_string()))?;
                Domain::graph(d, ell.build_at(&format!("{path}.ell"))?, sign).map_err(wrap)
            }
            DomainSpec::Collar { width, base } => {
                Domain::collar(base.build_at(d, &format!("{path}.base"))?, *width).map_err(wrap)
            }
            DomainSpec::IntersectBall { base, center, radius } => {
                Domain::intersect_ball(base.build_at(d, &format!("{path}.base"))?, center.clone(), *radius).map_err(wrap)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BhpConfig {
    /// Boundary point Q; defaults to the origin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    pub targets: [TargetSpec; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KilledConfig {
    pub t: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub path: PathConfig,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_d() -> usize {
    2
}

fn default_r() -> f64 {
    0.5
}

/// A complete experiment description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub alpha: f64,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub ell: EllConfig,
    #[serde(rename = "R", default = "default_r")]
    pub big_r: f64,
    /// Start heights r (strictly decreasing).
    pub r_ladder: Vec<f64>,
    /// Walks per ladder point.
    pub n: u64,
    /// Walks for the two smallest r, if different from n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tail: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    /// Output file stem; defaults to the experiment name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub domain: DomainChoice,
    #[serde(default)]
    pub normalization: Normalization,
    /// Explicit domain for the bhp and factorization experiments (overrides `domain`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_spec: Option<DomainSpec>,
    /// Modulus used as the rate regressor; defaults to `ell`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_ell: Option<EllConfig>,
    #[serde(default)]
    pub wos: WosConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bhp: Option<BhpConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killed: Option<KilledConfig>,
}

fn cfg_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the path of the offending field on failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        StableIndex::new(self.alpha, self.d).map_err(|e| cfg_err("alpha", e.to_string()))?;
        if !(self.big_r > 0.0 && self.big_r <= 1.0) {
            return Err(cfg_err("R", "must lie in (0, 1]"));
        }
        if self.n == 0 || self.n_tail == Some(0) {
            return Err(cfg_err("n", "need at least one walk per point"));
        }
        if self.r_ladder.is_empty() {
            return Err(cfg_err("r_ladder", "must not be empty"));
        }
        for (k, &r) in self.r_ladder.iter().enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(cfg_err(&format!("r_ladder[{k}]"), "must be positive and finite"));
            }
            if k > 0 && r >= self.r_ladder[k - 1] {
                return Err(cfg_err(&format!("r_ladder[{k}]"), "ladder must be strictly decreasing"));
            }
        }
        self.ell.build()?;
        if let Some(f) = &self.fit_ell {
            f.build_at("fit_ell")?;
        }
        if let Some(ds) = &self.domain_spec {
            ds.build(self.d)?;
        }
        match self.experiment {
            ExperimentKind::Bhp if self.bhp.is_none() => Err(cfg_err("bhp", "required for the bhp experiment")),
            ExperimentKind::Factorization if self.killed.is_none() => {
                Err(cfg_err("killed", "required for the factorization experiment"))
            }
            _ => Ok(()),
        }
    }

    /// The domain used by experiments that take an arbitrary domain.
    pub fn general_domain(&self) -> Result<Domain<f64>> {
        match &self.domain_spec {
            Some(ds) => ds.build(self.d),
            None => self.domain.build(self.d, &self.ell.build()?),
        }
    }

    pub fn index(&self) -> Result<StableIndex<f64>> {
        StableIndex::new(self.alpha, self.d)
    }

    pub fn stem(&self) -> String {
        self.output.clone().unwrap_or_else(|| {
            match self.experiment {
                ExperimentKind::DecayCurve => "decay_curve",
                ExperimentKind::Dichotomy => "dichotomy",
                ExperimentKind::Bhp => "bhp",
                ExperimentKind::ThetaXi => "theta_xi",
                ExperimentKind::Factorization => "factorization",
            }
            .to_string()
        })
    }

    /// Walk count at ladder position `k`.
    pub fn walks_at(&self, k: usize) -> u64 {
        match self.n_tail {
            Some(t) if k + 2 >= self.r_ladder.len() => t,
            _ => self.n,
        }
    }

    /// Regressor modulus for rate fits.
    pub fn regressor(&self) -> Result<(Modulus, String)> {
        match &self.fit_ell {
            Some(f) => Ok((f.build_at("fit_ell")?, f.describe())),
            None => Ok((self.ell.build()?, self.ell.describe())),
        }
    }
}

/// Dyadic ladder {2^{-k}}, k = k_min..=k_max.
pub fn dyadic_ladder(k_min: i32, k_max: i32) -> Vec<f64> {
    (k_min..=k_max).map(|k| 2f64.powi(-k)).collect()
}

// ---------------------------------------------------------------------------
// Decay curves

/// Relative standard error above which a curve point is flagged.
pub const TARGET_RELATIVE_ERROR: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: f64,
    pub estimate: Estimate,
    /// ∫_r^R ℓ(u)/u du for the domain's ℓ.
    pub dini_integral: f64,
    /// stderr/mean above the relative-error target.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub domain: String,
    pub alpha: f64,
    pub d: usize,
    pub big_r: f64,
    pub normalization: Normalization,
    pub points: Vec<CurvePoint>,
}

pub const CURVE_HEADER: &str = "r,estimate,stderr,n_walks,mean_steps,dini_integral_r_to_R";

impl DecayCurve {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CURVE_HEADER}\n");
        for p in &self.points {
            let e = &p.estimate;
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{},{:e},{:e}",
                p.r, e.mean, e.stderr, e.n_walks, e.mean_steps, p.dini_integral
            );
        }
        s
    }

    /// Builds a curve from given values (used for synthetic fits).
    pub fn synthetic(alpha: f64, big_r: f64, normalization: Normalization, data: &[(f64, f64, f64)]) -> Self {
        let points = data
            .iter()
            .map(|&(r, mean, stderr)| CurvePoint {
                r,
                estimate: Estimate {
                    mean,
                    stderr,
                    n_walks: 0,
                    seed: 0,
                    mean_steps: 0.0,
                    discarded: 0,
                },
                dini_integral: f64::NAN,
                flagged: mean == 0.0 || stderr / mean > TARGET_RELATIVE_ERROR,
            })
            .collect();
        Self {
            domain: "synthetic".into(),
            alpha,
            d: 0,
            big_r,
            normalization,
            points,
        }
    }

    /// (r, estimate·(R/r)^{α/2}, stderr) for raw curves; scaled curves as is.
    pub fn normalized(&self) -> Vec<(f64, f64, f64)> {
        self.points
            .iter()
            .map(|p| {
                let s = match self.normalization {
                    Normalization::Raw => (self.big_r / p.r).powf(self.alpha / 2.0),
                    Normalization::Scaled => 1.0,
                };
                (p.r, p.estimate.mean * s, p.estimate.stderr * s)
            })
            .collect()
    }
}

/// Inputs of [`decay_curve_with`], independent of the JSON layer.
#[derive(Clone, Debug)]
pub struct CurveRequest<'a> {
    pub idx: &'a StableIndex<f64>,
    pub domain: DomainChoice,
    pub ell: &'a Modulus,
    pub ell_name: String,
    pub big_r: f64,
    pub r_ladder: &'a [f64],
    /// Walks per ladder point.
    pub walks: &'a [u64],
    pub seed: u64,
    pub normalization: Normalization,
    pub wos: &'a WosOptions,
}

pub fn decay_curve_with(req: &CurveRequest) -> Result<DecayCurve> {
    let d = req.idx.dim();
    let limit = match req.normalization {
        Normalization::Raw => req.big_r / 2.0,
        Normalization::Scaled => req.big_r,
    };
    if req.walks.len() != req.r_ladder.len() {
        return Err(cfg_err("n", "one walk count per ladder point"));
    }
    for (k, &r) in req.r_ladder.iter().enumerate() {
        if !(r > 0.0 && r <= limit * (1.0 + 1e-12)) {
            return Err(cfg_err(&format!("r_ladder[{k}]"), format!("r = {r} outside (0, {limit}]")));
        }
        if k > 0 && r >= req.r_ladder[k - 1] {
            return Err(cfg_err(&format!("r_ladder[{k}]"), "ladder must be strictly decreasing"));
        }
    }
    let base = req.domain.build(d, req.ell)?;
    let mut points = Vec::with_capacity(req.r_ladder.len());
    for (k, &r) in req.r_ladder.iter().enumerate() {
        let seed = derive_seed(req.seed, k as u64);
        let n = req.walks[k];
        let estimate = match req.normalization {
            Normalization::Raw => {
                let mut x = vec![0.0; d];
                x[d - 1] = r;
                collar_survival(req.idx, &base, req.big_r, &x, n, seed, req.wos)?
            }
            Normalization::Scaled => {
                let variant = match req.domain {
                    DomainChoice::Upper => ThetaXi::Theta,
                    DomainChoice::Lower => ThetaXi::Xi,
                    DomainChoice::Halfspace => {
                        return Err(cfg_err("normalization", "scaled curves need an upper or lower graph domain"))
                    }
                };
                theta_xi(req.idx, variant, req.ell, req.big_r, r, n, seed, req.wos)?
            }
        };
        let dini_integral = if r < req.big_r {
            req.ell.dini_integral(r, req.big_r)?
        } else {
            0.0
        };
        let flagged = estimate.mean == 0.0 || estimate.relative_error() > TARGET_RELATIVE_ERROR;
        points.push(CurvePoint {
            r,
            estimate,
            dini_integral,
            flagged,
        });
    }
    let domain = match req.domain {
        DomainChoice::Halfspace => "halfspace".to_string(),
        DomainChoice::Upper => format!("D_ell, ell = {}", req.ell_name),
        DomainChoice::Lower => format!("D_-ell, ell = {}", req.ell_name),
    };
    Ok(DecayCurve {
        domain,
        alpha: req.idx.alpha(),
        d,
        big_r: req.big_r,
        normalization: req.normalization,
        points,
    })
}

/// Runs the curve described by a config.
pub fn decay_curve(cfg: &ExperimentConfig) -> Result<DecayCurve> {
    decay_curve_opts(cfg, &cfg.wos.options())
}

pub fn decay_curve_opts(cfg: &ExperimentConfig, wos: &WosOptions) -> Result<DecayCurve> {
    cfg.validate()?;
    let idx = cfg.index()?;
    let ell = cfg.ell.build()?;
    let walks: Vec<u64> = (0..cfg.r_ladder.len()).map(|k| cfg.walks_at(k)).collect();
    decay_curve_with(&CurveRequest {
        idx: &idx,
        domain: cfg.domain,
        ell: &ell,
        ell_name: cfg.ell.describe(),
        big_r: cfg.big_r,
        r_ladder: &cfg.r_ladder,
        walks: &walks,
        seed: cfg.seed,
        normalization: cfg.normalization,
        wos,
    })
}

// ---------------------------------------------------------------------------
// Rate fitting

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Coefficient of ∫_r^R ℓ(u)/u du (exactly 0 with zero stderr when ℓ ≡ 0).
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    /// Coefficient of log(r/R); fixed when `constrained`.
    pub slope_check: f64,
    pub slope_stderr: f64,
    /// Power of r the theory predicts (α/2 raw, 0 scaled).
    pub slope_expected: f64,
    pub constrained: bool,
    /// Covariance of (slope, lambda, intercept); zero row/column for a fixed slope.
    pub covariance: [[f64; 3]; 3],
    /// Standardised residuals (log scale).
    pub residuals: Vec<f64>,
    /// Sum of squared standardised residuals.
    pub residual_norm: f64,
    pub r_range: (f64, f64),
    pub regressor: String,
}

impl FitResult {
    /// Sign of λ̂ at `z` standard errors (0 when not resolved).
    pub fn sign_at(&self, z: f64) -> i32 {
        if self.lambda_hat > z * self.lambda_stderr {
            1
        } else if self.lambda_hat < -z * self.lambda_stderr {
            -1
        } else {
            0
        }
    }
}

fn fit_err(msg: impl Into<String>) -> Error {
    Error::Fit(msg.into())
}

/// Inverse of a symmetric positive definite k×k matrix (k ≤ 3) by Gauss–Jordan.
fn invert(a: &[[f64; 3]; 3], k: usize) -> Option<[[f64; 3]; 3]> {
    let mut m = *a;
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate().take(k) {
        row[i] = 1.0;
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        inv.swap(c, piv);
        let p = m[c][c];
        for j in 0..k {
            m[c][j] /= p;
            inv[c][j] /= p;
        }
        for i in 0..k {
            if i != c {
                let f = m[i][c];
                for j in 0..k {
                    m[i][j] -= f * m[c][j];
                    inv[i][j] -= f * inv[c][j];
                }
            }
        }
    }
    Some(inv)
}

/// Smallest eigenvalue bound used to detect collinearity: the determinant of
/// the correlation matrix of the weighted, centred regressors.
const COLLINEARITY_FLOOR: f64 = 1e-10;

/// Weighted least squares of log(estimate) on {log(r/R), ∫_r^R ℓ/u, 1}.
pub fn fit_rate(curve: &DecayCurve, ell: &Modulus, idx: &StableIndex<f64>) -> Result<FitResult> {
    fit_rate_impl(curve, ell, idx, false, "ell")
}

/// As [`fit_rate`] with the log(r/R) coefficient fixed to its predicted value.
pub fn fit_rate_constrained(curve: &DecayCurve, ell: &Modulus, idx: &StableIndex<f64>) -> Result<FitResult> {
    fit_rate_impl(curve, ell, idx, true, "ell")
}

/// Fit with a named regressor, for reports.
pub fn fit_rate_named(
    curve: &DecayCurve,
    ell: &Modulus,
    idx: &StableIndex<f64>,
    constrained: bool,
    name: &str,
) -> Result<FitResult> {
    fit_rate_impl(curve, ell, idx, constrained, name)
}

fn fit_rate_impl(
    curve: &DecayCurve,
    ell: &Modulus,
    idx: &StableIndex<f64>,
    constrained: bool,
    name: &str,
) -> Result<FitResult> {
    let pts = &curve.points;
    if pts.len() < 6 {
        return Err(fit_err(format!("need at least 6 curve points, got {}", pts.len())));
    }
    let (rmin, rmax) = pts
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.r), b.max(p.r)));
    if rmax / rmin < 100.0 * (1.0 - 1e-12) {
        return Err(fit_err(format!("curve spans {:.2} decades, need at least 2", (rmax / rmin).log10())));
    }
    let big_r = curve.big_r;
    let slope_expected = match curve.normalization {
        Normalization::Raw => idx.alpha() / 2.0,
        Normalization::Scaled => 0.0,
    };
    let mut rows = Vec::with_capacity(pts.len());
    for (k, p) in pts.iter().enumerate() {
        let e = &p.estimate;
        if !(e.mean > 0.0) {
            return Err(fit_err(format!("estimate at r = {} (point {k}) is zero; cannot take logs", p.r)));
        }
        let rel = e.stderr / e.mean;
        if !(rel > 0.0 && rel.is_finite()) {
            return Err(fit_err(format!("point {k} (r = {}) has no usable standard error", p.r)));
        }
        let lr = (p.r / big_r).ln();
        let di = if p.r < big_r {
            ell.dini_integral(p.r, big_r)?
        } else {
            -ell.dini_integral(big_r, p.r)?
        };
        rows.push((lr, di, e.mean.ln(), 1.0 / (rel * rel)));
    }
    // columns: 0 = log(r/R), 1 = ∫ℓ/u, 2 = 1; for ℓ ≡ 0 the correction
    // column vanishes identically and λ is zero by construction
    let mut free: Vec<usize> = if constrained { vec![1, 2] } else { vec![0, 1, 2] };
    if ell.is_zero() {
        free.retain(|&c| c != 1);
    }
    let k = free.len();
    let col = |row: &(f64, f64, f64, f64), c: usize| match c {
        0 => row.0,
        1 => row.1,
        _ => 1.0,
    };
    let target = |row: &(f64, f64, f64, f64)| if constrained { row.2 - slope_expected * row.0 } else { row.2 };
    // collinearity: correlation matrix of weighted-centred non-constant columns
    let sw: f64 = rows.iter().map(|r| r.3).sum();
    let varying: Vec<usize> = free.iter().cloned().filter(|&c| c != 2).collect();
    let centred: Vec<Vec<f64>> = varying
        .iter()
        .map(|&c| {
            let m = rows.iter().map(|r| r.3 * col(r, c)).sum::<f64>() / sw;
            rows.iter().map(|r| col(r, c) - m).collect()
        })
        .collect();
    let scales: Vec<f64> = centred
        .iter()
        .map(|v| v.iter().zip(&rows).map(|(x, r)| r.3 * x * x).sum::<f64>().sqrt())
        .collect();
    if let Some(pos) = scales.iter().position(|&s| !(s > 1e-12 * sw.sqrt())) {
        let which = if varying[pos] == 1 { "∫ℓ(u)/u du" } else { "log(r/R)" };
        return Err(fit_err(format!(
            "regressor {which} is constant on the ladder (ℓ ≡ 0?), so it is collinear with the intercept"
        )));
    }
    if varying.len() == 2 {
        let c01 = centred[0]
            .iter()
            .zip(&centred[1])
            .zip(&rows)
            .map(|((a, b), r)| r.3 * a * b)
            .sum::<f64>()
            / (scales[0] * scales[1]);
        if 1.0 - c01 * c01 < COLLINEARITY_FLOOR {
            return Err(fit_err(
                "regressors log(r/R) and ∫ℓ(u)/u du are collinear (ℓ constant on the ladder); fit the power alone",
            ));
        }
    }
    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for r in &rows {
        for (i, &ci) in free.iter().enumerate() {
            xty[i] += r.3 * col(r, ci) * target(r);
            for (j, &cj) in free.iter().enumerate() {
                xtx[i][j] += r.3 * col(r, ci) * col(r, cj);
            }
        }
    }
    let inv = invert(&xtx, k).ok_or_else(|| fit_err("normal equations are singular"))?;
    let mut beta = [0.0; 3];
    for i in 0..k {
        beta[i] = (0..k).map(|j| inv[i][j] * xty[j]).sum();
    }
    // map back to (slope, lambda, intercept)
    let mut coef = [slope_expected, 0.0, 0.0];
    let mut cov = [[0.0; 3]; 3];
    for (i, &ci) in free.iter().enumerate() {
        coef[ci] = beta[i];
        for (j, &cj) in free.iter().enumerate() {
            cov[ci][cj] = inv[i][j];
        }
    }
    let residuals: Vec<f64> = rows
        .iter()
        .map(|r| (r.2 - coef[0] * r.0 - coef[1] * r.1 - coef[2]) * r.3.sqrt())
        .collect();
    let residual_norm = residuals.iter().map(|x| x * x).sum();
    Ok(FitResult {
        lambda_hat: coef[1],
        lambda_stderr: cov[1][1].sqrt(),
        intercept: coef[2],
        intercept_stderr: cov[2][2].sqrt(),
        slope_check: coef[0],
        slope_stderr: cov[0][0].sqrt(),
        slope_expected,
        constrained,
        covariance: cov,
        residuals,
        residual_norm,
        r_range: (rmin, rmax),
        regressor: name.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Boundary Harnack

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhpPoint {
    pub x: Vec<f64>,
    pub delta: f64,
    pub g: Estimate,
    pub h: Estimate,
    /// g(x)/h(x).
    pub quotient: f64,
    /// Standard error of log quotient.
    pub log_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BhpReport {
    pub points: Vec<BhpPoint>,
    /// max over grid pairs of [g(x)/g(y)]/[h(x)/h(y)].
    pub max_double_ratio: f64,
    /// Weighted slope of log(g/h) against log δ (no trend ⇒ ≈ 0).
    pub trend: f64,
    pub trend_stderr: f64,
}

pub const BHP_HEADER: &str = "x_d,delta,g,g_stderr,h,h_stderr,quotient,log_stderr";

impl BhpReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{BHP_HEADER}\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                p.x.last().copied().unwrap_or(f64::NAN),
                p.delta,
                p.g.mean,
                p.g.stderr,
                p.h.mean,
                p.h.stderr,
                p.quotient,
                p.log_stderr
            );
        }
        s
    }
}

/// Compares the two target-indicator harmonic functions g and h along `x_grid`
/// using common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn bhp_ratio_test(
    idx: &StableIndex<f64>,
    domain: &Domain<f64>,
    q: &[f64],
    big_r: f64,
    targets: &[TargetSpec; 2],
    x_grid: &[Vec<f64>],
    n: u64,
    seed: u64,
    wos: &WosOptions,
) -> Result<BhpReport> {
    for (k, t) in targets.iter().enumerate() {
        if !t.clear_of(q, big_r) {
            return Err(cfg_err(&format!("bhp.targets[{k}]"), "target meets B(Q, R)"));
        }
    }
    if x_grid.len() < 2 {
        return Err(cfg_err("r_ladder", "need at least two grid points"));
    }
    let walker = Wos::new(idx, domain.clone())?.with_options(wos.clone());
    let preds: [TargetFn; 2] = [&|z| targets[0].contains(z), &|z| targets[1].contains(z)];
    let mut points = Vec::with_capacity(x_grid.len());
    for (k, x) in x_grid.iter().enumerate() {
        if !domain.contains(x) || crate::scalar::dist(x, q) >= big_r / 2.0 {
            return Err(cfg_err(&format!("r_ladder[{k}]"), "grid point must lie in D ∩ B(Q, R/2)"));
        }
        let est = walker.harmonic_measures(x, &preds, n, derive_seed(seed, k as u64))?;
        let (g, h) = (est[0], est[1]);
        if g.mean == 0.0 || h.mean == 0.0 {
            return Err(Error::Numeric(format!(
                "target {} has zero estimated probability from x = {x:?}",
                if g.mean == 0.0 { 0 } else { 1 }
            )));
        }
        let nn = g.n_walks as f64;
        let same = targets[0] == targets[1];
        // var log(ĝ/ĥ) with Cov(ĝ, ĥ) = −gh/n for disjoint targets
        let var = if same {
            0.0
        } else {
            (1.0 - g.mean) / (nn * g.mean) + (1.0 - h.mean) / (nn * h.mean) + 2.0 / nn
        };
        let (_, delta) = domain.dist_to_boundary(x)?;
        points.push(BhpPoint {
            x: x.clone(),
            delta,
            g,
            h,
            quotient: g.mean / h.mean,
            log_stderr: var.sqrt(),
        });
    }
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.quotient), b.max(p.quotient)));
    let (trend, trend_stderr) = weighted_slope(
        &points
            .iter()
            .map(|p| (p.delta.ln(), p.quotient.ln(), p.log_stderr))
            .collect::<Vec<_>>(),
    );
    Ok(BhpReport {
        points,
        max_double_ratio: hi / lo,
        trend,
        trend_stderr,
    })
}

/// Weighted slope of y on x with its standard error; zero errors give equal weights.
fn weighted_slope(pts: &[(f64, f64, f64)]) -> (f64, f64) {
    let w = |s: f64| if s > 0.0 { 1.0 / (s * s) } else { 1.0 };
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, s) in pts {
        let wi = w(s);
        sw += wi;
        sx += wi * x;
        sy += wi * y;
        sxx += wi * x * x;
        sxy += wi * x * y;
    }
    let den = sw * sxx - sx * sx;
    if den <= 0.0 {
        return (0.0, f64::INFINITY);
    }
    let se = if pts.iter().all(|p| p.2 > 0.0) {
        (sw / den).sqrt()
    } else {
        0.0
    };
    ((sw * sxy - sx * sy) / den, se)
}

// ---------------------------------------------------------------------------
// Dichotomy

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StandardDecay,
    AbnormalDecay,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::StandardDecay => "standard decay",
            Verdict::AbnormalDecay => "abnormal decay",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Factor separating the "standard" band from "abnormal" growth.
pub const DICHOTOMY_FACTOR: f64 = 2.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub ell: String,
    pub is_dini: bool,
    pub curve: DecayCurve,
    /// (r, estimate·(R/r)^{α/2}, stderr).
    pub ratios: Vec<(f64, f64, f64)>,
    /// ratio at the smallest r over ratio at the largest.
    pub growth: f64,
    pub growth_stderr: f64,
    /// max ratio / min ratio.
    pub band: f64,
    /// Consecutive ratios never drop by more than 2σ.
    pub monotone: bool,
    /// Monotone growth by at least DICHOTOMY_FACTOR across the ladder.
    pub growth_target_met: bool,
    /// Rate fit with the power fixed at α/2.
    pub fit: Option<FitResult>,
    /// Unconstrained rate fit.
    pub fit_free: Option<FitResult>,
    pub fit_note: Option<String>,
    /// exp(λ̂ (I(r_min) − I(r_max))), I(r) = ∫_r^R ℓ/u.
    pub predicted_growth: Option<f64>,
    pub verdict: Verdict,
    pub note: String,
}

/// Settings for [`dichotomy_report`].
#[derive(Clone, Debug)]
pub struct DichotomySettings {
    pub big_r: f64,
    pub walks: Vec<u64>,
    pub seed: u64,
    pub wos: WosOptions,
}

/// Normalised collar survival on D_{−ℓ̄} down `r_ladder`, with a verdict.
pub fn dichotomy_report(
    ell: &EllConfig,
    idx: &StableIndex<f64>,
    r_ladder: &[f64],
    settings: &DichotomySettings,
) -> Result<DichotomyReport> {
    if settings.walks.len() != r_ladder.len() {
        return Err(cfg_err("n", "one walk count per ladder point"));
    }
    let raw = ell.unwrapped().clone();
    let dini = classify_dini(&raw.build()?, 1e-12)?;
    let zero = raw.family == EllFamily::Zero;
    let bar_cfg = raw.clone().regularized();
    let (bar, domain) = if zero {
        (Modulus::zero(), DomainChoice::Halfspace)
    } else {
        (bar_cfg.build()?, DomainChoice::Lower)
    };
    let walks = &settings.walks;
    let curve = decay_curve_with(&CurveRequest {
        idx,
        domain,
        ell: &bar,
        ell_name: bar_cfg.describe(),
        big_r: settings.big_r,
        r_ladder,
        walks,
        seed: settings.seed,
        normalization: Normalization::Raw,
        wos: &settings.wos,
    })?;
    let ratios = curve.normalized();
    let (first, last) = (ratios[0], ratios[ratios.len() - 1]);
    let growth = last.1 / first.1;
    let growth_stderr = growth * ((last.2 / last.1).powi(2) + (first.2 / first.1).powi(2)).sqrt();
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let band = hi / lo;
    let monotone = ratios
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 - 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt());
    let (probe, probe_name) = if zero {
        (bar.clone(), ell.describe())
    } else {
        (bar.clone(), bar_cfg.describe())
    };
    let mut notes = Vec::new();
    let fit = match fit_rate_named(&curve, &probe, idx, true, &probe_name) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("constrained fit: {e}"));
            None
        }
    };
    let fit_free = match fit_rate_named(&curve, &probe, idx, false, &probe_name) {
        Ok(f) => Some(f),
        Err(e) => {
            notes.push(format!("free fit: {e}"));
            None
        }
    };
    let predicted_growth = fit.as_ref().map(|f| {
        let span = probe
            .dini_integral(r_ladder[r_ladder.len() - 1], r_ladder[0])
            .unwrap_or(f64::NAN);
        (f.lambda_hat * span).exp()
    });
    let growth_target_met = growth >= DICHOTOMY_FACTOR && monotone;
    // A positive rate on a divergent Dini integral predicts unbounded growth even
    // when the ladder is far too short to show a factor DICHOTOMY_FACTOR.
    let divergent_rate = !dini.is_dini
        && growth > 1.0 + 2.0 * growth_stderr
        && fit.as_ref().is_some_and(|f| f.lambda_hat > 2.0 * f.lambda_stderr);
    let (verdict, note) = if growth_target_met {
        (
            Verdict::AbnormalDecay,
            format!("normalised ratio grows monotonically by {growth:.3}× across the ladder"),
        )
    } else if divergent_rate {
        let f = fit.as_ref().expect("checked");
        (
            Verdict::AbnormalDecay,
            format!(
                "ℓ is not Dini and λ̂ = {:.4} ± {:.4} > 0 with growth {growth:.3} ± {growth_stderr:.3} > 1, so the ratio diverges; \
                 the ladder is too short for {DICHOTOMY_FACTOR}× growth (predicted {:.3}×)",
                f.lambda_hat,
                f.lambda_stderr,
                predicted_growth.unwrap_or(f64::NAN)
            ),
        )
    } else if band <= DICHOTOMY_FACTOR {
        (
            Verdict::StandardDecay,
            format!("normalised ratio stays in a {band:.3}× band (growth {growth:.3} ± {growth_stderr:.3})"),
        )
    } else {
        (
            Verdict::Inconclusive,
            format!("band {band:.3}× exceeds {DICHOTOMY_FACTOR} without monotone ≥ {DICHOTOMY_FACTOR}× growth (growth {growth:.3}, monotone = {monotone})"),
        )
    };
    Ok(DichotomyReport {
        ell: ell.describe(),
        is_dini: dini.is_dini,
        curve,
        ratios,
        growth,
        growth_stderr,
        band,
        monotone,
        growth_target_met,
        fit,
        fit_free,
        fit_note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        predicted_growth,
        verdict,
        note,
    })
}

// ---------------------------------------------------------------------------
// Θ/Ξ structure

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionRow {
    pub r: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub variant: ThetaXi,
    pub curve: DecayCurve,
    /// min over the ladder (the measured c).
    pub lower_bound: f64,
    /// max over the ladder (the measured C).
    pub upper_bound: f64,
    /// Largest ratio between neighbouring ladder values (dyadic ladders: s ∈ [r/2, r]).
    pub comparability: f64,
    /// Θ(r)·∫_r^R ℓ/(uΘ̂) du for Θ; Ξ(r)/∫_r^R ℓ(u)Ξ̂(uℓ(u))/u du for Ξ.
    pub recursion: Vec<RecursionRow>,
    /// max/min of the recursion column.
    pub recursion_spread: f64,
}

impl StructureReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CURVE_HEADER},recursion,recursion_stderr\n");
        for (p, q) in self.curve.points.iter().zip(&self.recursion) {
            let e = &p.estimate;
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{},{:e},{:e},{:e},{:e}",
                p.r, e.mean, e.stderr, e.n_walks, e.mean_steps, p.dini_integral, q.value, q.stderr
            );
        }
        s
    }
}

/// Piecewise-linear interpolation of log values in log r, constant beyond the ends.
fn log_interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let lx = x.ln();
    let n = xs.len();
    if lx <= xs[0] {
        return ys[0].exp();
    }
    if lx >= xs[n - 1] {
        return ys[n - 1].exp();
    }
    let k = xs.partition_point(|&v| v <= lx).min(n - 1);
    let (x0, x1, y0, y1) = (xs[k - 1], xs[k], ys[k - 1], ys[k]);
    (y0 + (y1 - y0) * (lx - x0) / (x1 - x0)).exp()
}

/// Trapezoid rule in log u of g(u) over [a, b].
fn log_trapezoid(a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = 400;
    let (la, lb) = (a.ln(), b.ln());
    let h = (lb - la) / m as f64;
    (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            w * g((la + h * i as f64).exp())
        })
        .sum::<f64>()
        * h
}

fn recursion_values(variant: ThetaXi, ell: &Modulus, big_r: f64, rs: &[f64], vals: &[f64]) -> Vec<f64> {
    // ascending arrays for interpolation
    let mut pairs: Vec<(f64, f64)> = rs.iter().zip(vals).map(|(&r, &v)| (r.ln(), v.max(1e-300).ln())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    rs.iter()
        .zip(vals)
        .map(|(&r, &v)| match variant {
            ThetaXi::Theta => v * log_trapezoid(r, big_r, |u| ell.value(u) / log_interp(&xs, &ys, u)),
            ThetaXi::Xi => {
                let i = log_trapezoid(r, big_r, |u| ell.value(u) * log_interp(&xs, &ys, u * ell.value(u)));
                if i > 0.0 {
                    v / i
                } else {
                    f64::INFINITY
                }
            }
        })
        .collect()
}

/// Bootstrap draws for recursion error bars.
const BOOTSTRAP_DRAWS: usize = 200;

/// Summarises a Θ- or Ξ-scaled curve: bounds, comparability and the recursion columns.
pub fn structure_report(variant: ThetaXi, curve: &DecayCurve, ell: &Modulus, seed: u64) -> Result<StructureReport> {
    if curve.normalization != Normalization::Scaled || curve.points.is_empty() {
        return Err(cfg_err("normalization", "structure report needs a non-empty scaled curve"));
    }
    let rs: Vec<f64> = curve.points.iter().map(|p| p.r).collect();
    let vals: Vec<f64> = curve.points.iter().map(|p| p.estimate.mean).collect();
    let ses: Vec<f64> = curve.points.iter().map(|p| p.estimate.stderr).collect();
    let lower_bound = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let upper_bound = vals.iter().cloned().fold(0.0, f64::max);
    let comparability = vals
        .windows(2)
        .map(|w| (w[0] / w[1]).max(w[1] / w[0]))
        .fold(1.0, f64::max);
    let central = recursion_values(variant, ell, curve.big_r, &rs, &vals);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xB007));
    let mut acc = vec![(0.0, 0.0); rs.len()];
    for _ in 0..BOOTSTRAP_DRAWS {
        let draw: Vec<f64> = vals
            .iter()
            .zip(&ses)
            .map(|(&v, &s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (v + s * z).max(v * 1e-3)
            })
            .collect();
        for (a, x) in acc.iter_mut().zip(recursion_values(variant, ell, curve.big_r, &rs, &draw)) {
            a.0 += x;
            a.1 += x * x;
        }
    }
    let b = BOOTSTRAP_DRAWS as f64;
    let recursion: Vec<RecursionRow> = rs
        .iter()
        .zip(&central)
        .zip(&acc)
        .map(|((&r, &value), &(s, s2))| {
            let m = s / b;
            RecursionRow {
                r,
                value,
                stderr: ((s2 / b - m * m).max(0.0) * b / (b - 1.0)).sqrt(),
            }
        })
        .collect();
    let finite: Vec<f64> = central.iter().cloned().filter(|v| v.is_finite() && *v > 0.0).collect();
    let recursion_spread = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().cloned().fold(0.0, f64::max) / finite.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    Ok(StructureReport {
        variant,
        curve: curve.clone(),
        lower_bound,
        upper_bound,
        comparability,
        recursion,
        recursion_spread,
    })
}

// ---------------------------------------------------------------------------
// Running configs

/// Files written by [`run_experiment`] and a JSON summary of the result.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

fn write(dir: &Path, name: &str, body: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    files.push(p);
    Ok(())
}

fn to_json<S: Serialize>(v: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs a config and writes `<stem>.csv` and `<stem>.json` into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, wos: &WosOptions) -> Result<RunOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::Io(format!("{}: {e}", out_dir.display())))?;
    let idx = cfg.index()?;
    let stem = cfg.stem();
    let mut files = Vec::new();
    let summary = match cfg.experiment {
        ExperimentKind::DecayCurve => {
            let curve = decay_curve_opts(cfg, wos)?;
            write(out_dir, &format!("{stem}.csv"), &curve.to_csv(), &mut files)?;
            let (probe, name) = cfg.regressor()?;
            let fit = fit_rate_named(&curve, &probe, &idx, false, &name);
            let constrained = fit_rate_named(&curve, &probe, &idx, true, &name);
            let v = serde_json::json!({
                "experiment": "decay_curve",
                "domain": curve.domain,
                "fit": fit.as_ref().ok(),
                "fit_error": fit.as_ref().err().map(|e| e.to_string()),
                "fit_constrained": constrained.as_ref().ok(),
                "fit_constrained_error": constrained.as_ref().err().map(|e| e.to_string()),
                "flagged_points": curve.points.iter().filter(|p| p.flagged).map(|p| p.r).collect::<Vec<_>>(),
            });
            write(out_dir, &format!("{stem}.json"), &to_json(&v)?, &mut files)?;
            v
        }
        ExperimentKind::Dichotomy => {
            let walks: Vec<u64> = (0..cfg.r_ladder.len()).map(|k| cfg.walks_at(k)).collect();
            let rep = dichotomy_report(
                &cfg.ell,
                &idx,
                &cfg.r_ladder,
                &DichotomySettings {
                    big_r: cfg.big_r,
                    walks,
                    seed: cfg.seed,
                    wos: wos.clone(),
                },
            )?;
            write(out_dir, &format!("{stem}.csv"), &rep.curve.to_csv(), &mut files)?;
            let v = serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?;
            write(out_dir, &format!("{stem}.json"), &to_json(&v)?, &mut files)?;
            serde_json::json!({
                "experiment": "dichotomy",
                "verdict": rep.verdict.label(),
                "growth": rep.growth,
                "band": rep.band,
                "lambda_hat": rep.fit.as_ref().map(|f| f.lambda_hat),
                "lambda_stderr": rep.fit.as_ref().map(|f| f.lambda_stderr),
            })
        }
        ExperimentKind::Bhp => {
            let bhp = cfg.bhp.as_ref().expect("validated");
            let domain = cfg.general_domain()?;
            let q = bhp.q.clone().unwrap_or_else(|| vec![0.0; cfg.d]);
            let grid: Vec<Vec<f64>> = cfg
                .r_ladder
                .iter()
                .map(|&r| {
                    let mut x = q.clone();
                    x[cfg.d - 1] += r;
                    x
                })
                .collect();
            let rep = bhp_ratio_test(&idx, &domain, &q, cfg.big_r, &bhp.targets, &grid, cfg.n, cfg.seed, wos)?;
            write(out_dir, &format!("{stem}.csv"), &rep.to_csv(), &mut files)?;
            let v = serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?;
            write(out_dir, &format!("{stem}.json"), &to_json(&v)?, &mut files)?;
            serde_json::json!({
                "experiment": "bhp",
                "max_double_ratio": rep.max_double_ratio,
                "trend": rep.trend,
                "trend_stderr": rep.trend_stderr,
            })
        }
        ExperimentKind::ThetaXi => {
            let variant = match cfg.domain {
                DomainChoice::Upper => ThetaXi::Theta,
                DomainChoice::Lower => ThetaXi::Xi,
                DomainChoice::Halfspace => return Err(cfg_err("domain", "theta_xi needs an upper or lower graph domain")),
            };
            let scaled = ExperimentConfig {
                normalization: Normalization::Scaled,
                ..cfg.clone()
            };
            let curve = decay_curve_opts(&scaled, wos)?;
            let rep = structure_report(variant, &curve, &cfg.ell.build()?, cfg.seed)?;
            write(out_dir, &format!("{stem}.csv"), &rep.to_csv(), &mut files)?;
            let v = serde_json::to_value(&rep).map_err(|e| Error::Io(e.to_string()))?;
            write(out_dir, &format!("{stem}.json"), &to_json(&v)?, &mut files)?;
            serde_json::json!({
                "experiment": "theta_xi",
                "lower_bound": rep.lower_bound,
                "upper_bound": rep.upper_bound,
                "comparability": rep.comparability,
                "recursion_spread": rep.recursion_spread,
            })
        }
        ExperimentKind::Factorization => {
            let k = cfg.killed.as_ref().expect("validated");
            let domain = cfg.general_domain()?;
            let grid: Vec<Vec<f64>> = cfg
                .r_ladder
                .iter()
                .map(|&r| {
                    let mut x = vec![0.0; cfg.d];
                    x[cfg.d - 1] = r;
                    x
                })
                .collect();
            let mut y = vec![0.0; cfg.d];
            y[cfg.d - 1] = 2.0 * k.t.powf(1.0 / cfg.alpha);
            let fc = FactorizationConfig {
                path: k.path,
                epsilon: k.epsilon,
                wos: wos.clone(),
            };
            let tab: FactorizationTable = factorization_check(&idx, &domain, k.t, &grid, &y, &fc, cfg.n, cfg.seed)?;
            write(out_dir, &format!("{stem}.csv"), &tab.to_csv(), &mut files)?;
            let v = serde_json::to_value(&tab).map_err(|e| Error::Io(e.to_string()))?;
            write(out_dir, &format!("{stem}.json"), &to_json(&v)?, &mut files)?;
            serde_json::json!({
                "experiment": "factorization",
                "spread": tab.spread,
                "collar_width": tab.collar_width,
            })
        }
    };
    Ok(RunOutput { files, summary })
}
