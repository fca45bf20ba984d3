//! Run configuration read from a TOML file. Exact couplings are `"p/q"`
//! strings; unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the default pass threshold of the task's primary assertions.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub elliptic: EllipticSection,
    #[serde(default)]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub gauge: Option<GaugeSection>,
    #[serde(default)]
    pub collocation: CollocationSection,
    #[serde(default)]
    pub ruijsenaars: Option<RuijsenaarsSection>,
    #[serde(default)]
    pub limit_nonrel: Option<LimitNonrelSection>,
    #[serde(default)]
    pub degenerate: Option<DegenerateSection>,
    #[serde(default)]
    pub specfun: Option<SpecfunSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EllipticSection {
    /// `[Re tau, Im tau]`.
    #[serde(default = "default_tau")]
    pub tau: [f64; 2],
    /// Real nome `p = exp(pi i tau)`; replaces `tau` when given.
    #[serde(default)]
    pub nome: Option<f64>,
}

impl Default for EllipticSection {
    fn default() -> Self {
        EllipticSection {
            tau: default_tau(),
            nome: None,
        }
    }
}

fn default_tau() -> [f64; 2] {
    [0.0, 1.3]
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum GaugePolicy {
    /// Every admissible sign choice.
    #[default]
    All,
    /// Only choices whose space lies in L^2.
    L2,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub l: String,
    /// `l_0 .. l_3`.
    pub l_ext: [String; 4],
    /// Keep only gauge choices of this degree.
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default)]
    pub policy: GaugePolicy,
}

/// An explicit gauge `(a, b_0..b_3)`; overrides enumeration from `[model]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GaugeSection {
    pub n: usize,
    pub a: String,
    pub b: [String; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CollocationSection {
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Number of collocation points; `3 dim + 6` when absent.
    #[serde(default)]
    pub points: Option<usize>,
}

impl Default for CollocationSection {
    fn default() -> Self {
        CollocationSection {
            margin: default_margin(),
            points: None,
        }
    }
}

fn default_margin() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RuijsenaarsSection {
    pub n: usize,
    pub k: u32,
    #[serde(default = "default_draws")]
    pub draws: usize,
    /// Explicit real parameters; when all are given a single run replaces the
    /// random draws.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub nu: Option<[f64; 4]>,
    #[serde(default)]
    pub nubar: Option<[f64; 4]>,
}

fn default_draws() -> usize {
    3
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PairingChoice {
    #[default]
    Untwisted,
    Printed,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LimitNonrelSection {
    #[serde(default = "one")]
    pub n: usize,
    pub a: f64,
    pub b: [f64; 4],
    #[serde(default = "default_kappas")]
    pub kappas: Vec<f64>,
    #[serde(default)]
    pub pairing: PairingChoice,
    /// Fraction of `nu_r + nubar_r` carried by `nu_r`.
    #[serde(default = "half")]
    pub split: f64,
    /// Probe point, one `[re, im]` per coordinate.
    #[serde(default)]
    pub x: Vec<[f64; 2]>,
    /// Second probe point for eliminating the constant.
    #[serde(default)]
    pub x2: Vec<[f64; 2]>,
    /// Any of `cosine`, `wp-shift`, `constant`.
    #[serde(default = "default_functions")]
    pub functions: Vec<String>,
    #[serde(default = "default_shift")]
    pub shift: [f64; 2],
    /// Pass threshold for `|E(last kappa)| / |E(first kappa)|`.
    #[serde(default = "default_final_ratio")]
    pub final_ratio_max: f64,
}

fn default_final_ratio() -> f64 {
    1e-3
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

fn default_kappas() -> Vec<f64> {
    vec![0.1, 0.05, 0.025, 0.0125]
}

fn default_functions() -> Vec<String> {
    vec!["cosine".into(), "wp-shift".into()]
}

fn default_shift() -> [f64; 2] {
    [0.21, 0.33]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DegenerateSection {
    pub n: usize,
    pub l: String,
    pub l0: String,
    pub l1: String,
    pub a_tilde: String,
    /// Degree `L`; exactly one of `big_l` and `b_tilde` must be given.
    #[serde(default)]
    pub big_l: Option<u32>,
    #[serde(default)]
    pub b_tilde: Option<String>,
    /// Overrides of `c1 / pi^2` and `c2 / pi^2`.
    #[serde(default)]
    pub c1_over_pi2: Option<String>,
    #[serde(default)]
    pub c2_over_pi2: Option<String>,
    #[serde(default = "default_ps")]
    pub ps: Vec<f64>,
    /// Real probe points for the gauge limit.
    #[serde(default)]
    pub x: Vec<f64>,
    #[serde(default)]
    pub x2: Vec<f64>,
}

fn default_ps() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecfunSection {
    #[serde(default = "default_taus")]
    pub taus: Vec<[f64; 2]>,
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for SpecfunSection {
    fn default() -> Self {
        SpecfunSection {
            taus: default_taus(),
            points: default_points(),
        }
    }
}

fn default_taus() -> Vec<[f64; 2]> {
    vec![[0.0, 1.0], [0.0, 1.3], [0.3, 1.1]]
}

fn default_points() -> usize {
    20
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }
}
