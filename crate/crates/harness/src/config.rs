//! Experiment configuration: a TOML file with top-level run parameters and
//! one optional section per problem family. See the README for the grammar.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use brwp_core::kernels::KernelVariant;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::de::{DeTable, DeValue};
use toml::{Table, Value};

use crate::error::{ConfigIssue, HarnessError, Location};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Mixture,
    Logistic,
    L12tvDenoise,
    CsHpd,
    GaussianSanity,
    KernelValidation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::Mixture,
        ExperimentKind::Logistic,
        ExperimentKind::L12tvDenoise,
        ExperimentKind::CsHpd,
        ExperimentKind::GaussianSanity,
        ExperimentKind::KernelValidation,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Mixture => "mixture",
            ExperimentKind::Logistic => "logistic",
            ExperimentKind::L12tvDenoise => "l12tv_denoise",
            ExperimentKind::CsHpd => "cs_hpd",
            ExperimentKind::GaussianSanity => "gaussian_sanity",
            ExperimentKind::KernelValidation => "kernel_validation",
        }
    }

    /// Section holding problem-specific parameters, if any.
    fn section(&self) -> Option<&'static str> {
        match self {
            ExperimentKind::Mixture => Some("mixture"),
            ExperimentKind::Logistic => Some("logistic"),
            ExperimentKind::L12tvDenoise | ExperimentKind::CsHpd => Some("imaging"),
            ExperimentKind::GaussianSanity | ExperimentKind::KernelValidation => None,
        }
    }

    fn required(&self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Mixture => &[
                "dims",
                "n_particles",
                "n_iters",
                "h",
                "lambda",
                "mixture.n_centers",
                "mixture.sigma",
            ],
            ExperimentKind::Logistic => &["dims", "n_particles", "n_iters", "h", "logistic.n_data"],
            ExperimentKind::L12tvDenoise => &[
                "n_particles",
                "n_iters",
                "h",
                "lambda",
                "imaging.height",
                "imaging.width",
                "imaging.noise_var",
                "imaging.corruption_var",
                "imaging.gamma",
            ],
            ExperimentKind::CsHpd => &[
                "n_particles",
                "n_iters",
                "h",
                "lambda",
                "imaging.height",
                "imaging.width",
                "imaging.noise_var",
            ],
            ExperimentKind::GaussianSanity => &["dims", "n_particles", "n_iters", "h"],
            ExperimentKind::KernelValidation => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Brwp,
    Myula,
}

mod variant_serde {
    use super::*;

    pub fn serialize<S: serde::Serializer>(v: &KernelVariant, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_str())
    }

    pub fn deserialize<'de, D: serde::Deserializer<'de>>(d: D) -> Result<KernelVariant, D::Error> {
        let s = String::deserialize(d)?;
        KernelVariant::from_str(&s).map_err(serde::de::Error::custom)
    }
}

fn default_variant() -> KernelVariant {
    KernelVariant::Separable
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub spread: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            center: 0.0,
            spread: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub n_centers: usize,
    pub sigma: f64,
    #[serde(default = "MixtureConfig::default_half_width")]
    pub half_width: f64,
    #[serde(default = "MixtureConfig::default_grid_lo")]
    pub grid_lo: f64,
    #[serde(default = "MixtureConfig::default_grid_hi")]
    pub grid_hi: f64,
    #[serde(default = "MixtureConfig::default_grid_points")]
    pub grid_points: usize,
    /// KDE bandwidth `H`, used as a variance.
    #[serde(default = "MixtureConfig::default_kde_bandwidth")]
    pub kde_bandwidth: f64,
    /// Marginals to track; defaults to the first and last coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<usize>>,
}

impl MixtureConfig {
    fn default_half_width() -> f64 {
        10.0
    }
    fn default_grid_lo() -> f64 {
        -30.0
    }
    fn default_grid_hi() -> f64 {
        30.0
    }
    fn default_grid_points() -> usize {
        2001
    }
    fn default_kde_bandwidth() -> f64 {
        0.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    pub n_data: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagingConfig {
    pub height: usize,
    pub width: usize,
    pub noise_var: f64,
    #[serde(default)]
    pub corruption_var: f64,
    #[serde(default)]
    pub gamma: f64,
    /// Dual step; `None` picks `1/(γ²‖L‖²)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default = "ImagingConfig::default_blur_width")]
    pub blur_width: usize,
    /// Keep every `subsample`-th blurred pixel (`m = d / subsample`).
    #[serde(default = "ImagingConfig::default_subsample")]
    pub subsample: usize,
    #[serde(default = "ImagingConfig::default_alphas")]
    pub hpd_alphas: Vec<f64>,
}

impl ImagingConfig {
    fn default_blur_width() -> usize {
        5
    }
    fn default_subsample() -> usize {
        4
    }
    pub fn default_alphas() -> Vec<f64> {
        (1..=19).map(|k| k as f64 * 0.05).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default = "default_variant", with = "variant_serde")]
    pub kernel_variant: KernelVariant,
    #[serde(default)]
    pub dims: usize,
    #[serde(default)]
    pub n_particles: usize,
    #[serde(default)]
    pub n_iters: usize,
    #[serde(default)]
    pub h: f64,
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub seed: u64,
    /// Bandwidth of the gaussian kernel; rule of thumb when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logistic: Option<LogisticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imaging: Option<ImagingConfig>,
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form, with `output_dir` left out so the
    /// same experiment hashes identically wherever it writes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_string(&serde_json::to_value(&c).expect("config serializes"))
            .expect("json value serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn lambda_or(&self, default: f64) -> f64 {
        self.lambda.unwrap_or(default)
    }

    pub fn mixture(&self) -> &MixtureConfig {
        self.mixture
            .as_ref()
            .expect("validated mixture config has a [mixture] section")
    }

    pub fn logistic(&self) -> &LogisticConfig {
        self.logistic
            .as_ref()
            .expect("validated logistic config has a [logistic] section")
    }

    pub fn imaging(&self) -> &ImagingConfig {
        self.imaging
            .as_ref()
            .expect("validated imaging config has an [imaging] section")
    }

    /// Marginals tracked by the mixture experiment.
    pub fn marginals(&self) -> Vec<usize> {
        match self.mixture().marginals.clone() {
            Some(m) => m,
            None if self.dims > 1 => vec![0, self.dims - 1],
            None => vec![0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Float,
    Str,
    IntList,
    FloatList,
}

impl Kind {
    fn name(&self) -> &'static str {
        match self {
            Kind::Int => "an integer",
            Kind::Float => "a number",
            Kind::Str => "a string",
            Kind::IntList => "an array of integers",
            Kind::FloatList => "an array of numbers",
        }
    }
}

const TOP_KEYS: &[(&str, Kind)] = &[
    ("experiment", Kind::Str),
    ("sampler", Kind::Str),
    ("kernel_variant", Kind::Str),
    ("dims", Kind::Int),
    ("n_particles", Kind::Int),
    ("n_iters", Kind::Int),
    ("h", Kind::Float),
    ("beta", Kind::Float),
    ("lambda", Kind::Float),
    ("seed", Kind::Int),
    ("kde_sigma", Kind::Float),
    ("output_dir", Kind::Str),
];

const SECTIONS: &[(&str, &[(&str, Kind)])] = &[
    ("init", &[("center", Kind::Float), ("spread", Kind::Float)]),
    (
        "mixture",
        &[
            ("n_centers", Kind::Int),
            ("sigma", Kind::Float),
            ("half_width", Kind::Float),
            ("grid_lo", Kind::Float),
            ("grid_hi", Kind::Float),
            ("grid_points", Kind::Int),
            ("kde_bandwidth", Kind::Float),
            ("marginals", Kind::IntList),
        ],
    ),
    ("logistic", &[("n_data", Kind::Int)]),
    (
        "imaging",
        &[
            ("height", Kind::Int),
            ("width", Kind::Int),
            ("noise_var", Kind::Float),
            ("corruption_var", Kind::Float),
            ("gamma", Kind::Float),
            ("tau", Kind::Float),
            ("blur_width", Kind::Int),
            ("subsample", Kind::Int),
            ("hpd_alphas", Kind::FloatList),
        ],
    ),
];

/// Where each dotted key came from.
#[derive(Debug, Default)]
struct Locator {
    lines: BTreeMap<String, usize>,
    overrides: BTreeMap<String, String>,
}

impl Locator {
    fn from_source(src: &str) -> Self {
        let mut loc = Locator::default();
        if let Ok(doc) = DeTable::parse(src) {
            walk_spans(doc.get_ref(), "", src, &mut loc.lines);
        }
        loc
    }

    fn locate(&self, key: &str) -> Location {
        if let Some(o) = self.overrides.get(key) {
            return Location::Override(o.clone());
        }
        // fall back to the enclosing section, then to nothing
        let mut k = key;
        loop {
            if let Some(&l) = self.lines.get(k) {
                return Location::Line(l);
            }
            match k.rfind('.') {
                Some(i) => k = &k[..i],
                None => return Location::Unknown,
            }
        }
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

fn walk_spans(t: &DeTable<'_>, prefix: &str, src: &str, out: &mut BTreeMap<String, usize>) {
    for (k, v) in t.iter() {
        let path = if prefix.is_empty() {
            k.get_ref().to_string()
        } else {
            format!("{prefix}.{}", k.get_ref())
        };
        out.entry(path.clone())
            .or_insert_with(|| line_of(src, k.span().start));
        if let DeValue::Table(inner) = v.get_ref() {
            walk_spans(inner, &path, src, out);
        }
    }
}

fn issue(loc: &Locator, key: &str, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue {
        location: loc.locate(key),
        message: message.into(),
    }
}

/// Parses `key=value` (dotted keys allowed). Values use TOML syntax, and
/// anything that does not parse is taken as a bare string.
fn apply_override(doc: &mut Table, raw: &str, loc: &mut Locator) -> Result<(), ConfigIssue> {
    let raw = raw.trim_start_matches("--");
    let (key, value) = raw.split_once('=').ok_or_else(|| ConfigIssue {
        location: Location::Override(raw.to_string()),
        message: "expected key=value".into(),
    })?;
    let key = key.trim();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigIssue {
            location: Location::Override(raw.to_string()),
            message: format!("malformed key `{key}`"),
        });
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigIssue {
            location: Location::Override(raw.to_string()),
            message: format!("`{p}` is not a section"),
        })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    loc.overrides.insert(key.to_string(), raw.to_string());
    Ok(())
}

fn check_kind(v: &mut Value, kind: Kind) -> bool {
    match (kind, &*v) {
        (Kind::Int, Value::Integer(i)) => *i >= 0,
        (Kind::Float, Value::Float(_)) => true,
        (Kind::Float, Value::Integer(i)) => {
            *v = Value::Float(*i as f64);
            true
        }
        (Kind::Str, Value::String(_)) => true,
        (Kind::IntList, Value::Array(a)) => {
            a.iter().all(|x| matches!(x, Value::Integer(i) if *i >= 0))
        }
        (Kind::FloatList, Value::Array(_)) => {
            let Value::Array(a) = v else { unreachable!() };
            a.iter_mut().all(|x| check_kind(x, Kind::Float))
        }
        _ => false,
    }
}

fn check_structure(doc: &mut Table, loc: &Locator) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    for (key, value) in doc.iter_mut() {
        if let Some((_, kind)) = TOP_KEYS.iter().find(|(k, _)| k == key) {
            if !check_kind(value, *kind) {
                issues.push(issue(loc, key, format!("`{key}` must be {}", kind.name())));
            }
        } else if let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == key) {
            let Some(t) = value.as_table_mut() else {
                issues.push(issue(loc, key, format!("`{key}` must be a section")));
                continue;
            };
            for (sub, v) in t.iter_mut() {
                let path = format!("{key}.{sub}");
                match keys.iter().find(|(k, _)| k == sub) {
                    Some((_, kind)) => {
                        if !check_kind(v, *kind) {
                            issues.push(issue(
                                loc,
                                &path,
                                format!("`{path}` must be {}", kind.name()),
                            ));
                        }
                    }
                    None => issues.push(issue(loc, &path, format!("unknown key `{path}`"))),
                }
            }
        } else {
            issues.push(issue(loc, key, format!("unknown key `{key}`")));
        }
    }

    let experiment = match doc.get("experiment") {
        None => {
            issues.push(issue(
                loc,
                "experiment",
                "missing required key `experiment`",
            ));
            None
        }
        Some(Value::String(s)) => {
            let found = ExperimentKind::ALL.into_iter().find(|k| k.as_str() == s);
            if found.is_none() {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.as_str()).collect();
                issues.push(issue(
                    loc,
                    "experiment",
                    format!(
                        "unknown experiment `{s}` (expected one of {})",
                        names.join(", ")
                    ),
                ));
            }
            found
        }
        Some(_) => None,
    };
    if !doc.contains_key("seed") {
        issues.push(issue(loc, "seed", "missing required key `seed`"));
    }
    if let Some(kind) = experiment {
        for key in kind.required() {
            let present = match key.split_once('.') {
                None => doc.contains_key(*key),
                Some((s, k)) => doc
                    .get(s)
                    .and_then(Value::as_table)
                    .is_some_and(|t| t.contains_key(k)),
            };
            if !present {
                issues.push(issue(
                    loc,
                    "experiment",
                    format!(
                        "missing required key `{key}` for experiment {}",
                        kind.as_str()
                    ),
                ));
            }
        }
        for (s, _) in SECTIONS {
            if *s != "init" && doc.contains_key(*s) && kind.section() != Some(*s) {
                issues.push(issue(
                    loc,
                    s,
                    format!("section [{s}] is not used by experiment {}", kind.as_str()),
                ));
            }
        }
    }
    issues
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn nonneg(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

fn check_values(c: &ExperimentConfig, loc: &Locator) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let mut need = |ok: bool, key: &str, msg: String| {
        if !ok {
            issues.push(issue(loc, key, msg));
        }
    };
    if c.experiment == ExperimentKind::KernelValidation {
        return issues;
    }
    let required = c.experiment.required();
    need(
        positive(c.h),
        "h",
        format!("h must be positive and finite, got {}", c.h),
    );
    need(
        c.n_particles >= 1,
        "n_particles",
        "n_particles must be at least 1".into(),
    );
    if required.contains(&"dims") {
        need(c.dims >= 1, "dims", "dims must be at least 1".into());
    }
    need(
        positive(c.beta),
        "beta",
        format!("beta must be positive, got {}", c.beta),
    );
    if let Some(l) = c.lambda {
        need(
            nonneg(l),
            "lambda",
            format!("lambda must be nonnegative, got {l}"),
        );
    }
    if let Some(s) = c.kde_sigma {
        need(
            positive(s),
            "kde_sigma",
            format!("kde_sigma must be positive, got {s}"),
        );
    }
    need(
        nonneg(c.init.spread),
        "init.spread",
        format!("init.spread must be nonnegative, got {}", c.init.spread),
    );
    need(
        c.init.center.is_finite(),
        "init.center",
        "init.center must be finite".into(),
    );

    match c.experiment {
        ExperimentKind::Mixture => {
            let m = c.mixture();
            need(
                positive(m.sigma),
                "mixture.sigma",
                format!("mixture.sigma must be positive, got {}", m.sigma),
            );
            need(
                m.n_centers >= 1,
                "mixture.n_centers",
                "mixture.n_centers must be at least 1".into(),
            );
            need(
                positive(m.half_width),
                "mixture.half_width",
                "mixture.half_width must be positive".into(),
            );
            need(
                m.grid_lo < m.grid_hi && m.grid_lo.is_finite() && m.grid_hi.is_finite(),
                "mixture.grid_lo",
                format!("need grid_lo < grid_hi, got [{}, {}]", m.grid_lo, m.grid_hi),
            );
            need(
                m.grid_points >= 2,
                "mixture.grid_points",
                "mixture.grid_points must be at least 2".into(),
            );
            need(
                positive(m.kde_bandwidth),
                "mixture.kde_bandwidth",
                "mixture.kde_bandwidth must be positive".into(),
            );
            if let Some(ms) = &m.marginals {
                need(
                    !ms.is_empty() && ms.iter().all(|&k| k < c.dims),
                    "mixture.marginals",
                    format!(
                        "mixture.marginals must be non-empty indices below dims = {}",
                        c.dims
                    ),
                );
            }
            need(
                c.beta == 1.0,
                "beta",
                "the exact mixture marginal is only available for beta = 1".into(),
            );
        }
        ExperimentKind::Logistic => {
            need(
                c.dims.is_multiple_of(4),
                "dims",
                format!("logistic dims must be a multiple of 4, got {}", c.dims),
            );
            need(
                c.logistic().n_data >= 1,
                "logistic.n_data",
                "logistic.n_data must be at least 1".into(),
            );
        }
        ExperimentKind::L12tvDenoise | ExperimentKind::CsHpd => {
            let im = c.imaging();
            need(
                im.height >= 2 && im.width >= 2,
                "imaging.height",
                format!("image must be at least 2x2, got {}x{}", im.height, im.width),
            );
            need(
                nonneg(im.noise_var),
                "imaging.noise_var",
                "imaging.noise_var must be nonnegative".into(),
            );
            need(
                nonneg(im.corruption_var),
                "imaging.corruption_var",
                "imaging.corruption_var must be nonnegative".into(),
            );
            need(
                nonneg(im.gamma),
                "imaging.gamma",
                "imaging.gamma must be nonnegative".into(),
            );
            if let Some(t) = im.tau {
                need(
                    nonneg(t),
                    "imaging.tau",
                    format!("imaging.tau must be nonnegative, got {t}"),
                );
            }
            let d = im.height * im.width;
            if c.dims != 0 {
                need(
                    c.dims == d,
                    "dims",
                    format!("dims must equal height*width = {d}, got {}", c.dims),
                );
            }
            if c.experiment == ExperimentKind::CsHpd {
                need(
                    im.blur_width >= 1,
                    "imaging.blur_width",
                    "imaging.blur_width must be at least 1".into(),
                );
                need(
                    im.subsample >= 1 && d.is_multiple_of(im.subsample),
                    "imaging.subsample",
                    format!("imaging.subsample must divide the pixel count {d}"),
                );
                need(
                    !im.hpd_alphas.is_empty() && im.hpd_alphas.iter().all(|&a| a > 0.0 && a < 1.0),
                    "imaging.hpd_alphas",
                    "imaging.hpd_alphas must be non-empty and inside (0, 1)".into(),
                );
            } else {
                need(
                    c.sampler == SamplerKind::Brwp,
                    "sampler",
                    "l12tv_denoise runs the primal-dual BRWP sampler only".into(),
                );
            }
        }
        ExperimentKind::GaussianSanity | ExperimentKind::KernelValidation => {}
    }
    issues
}

/// Parses and validates a config, applying `key=value` overrides first.
/// Every problem found is reported, each with its location.
pub fn parse_config_str(src: &str, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let mut doc: Table = src.parse().map_err(|e: toml::de::Error| {
        HarnessError::Config(vec![ConfigIssue {
            location: e
                .span()
                .map(|s| Location::Line(line_of(src, s.start)))
                .unwrap_or(Location::Unknown),
            message: e.message().to_string(),
        }])
    })?;
    let mut loc = Locator::from_source(src);
    let mut issues = Vec::new();
    for o in overrides {
        if let Err(i) = apply_override(&mut doc, o, &mut loc) {
            issues.push(i);
        }
    }
    issues.extend(check_structure(&mut doc, &loc));
    if !issues.is_empty() {
        return Err(HarnessError::Config(issues));
    }
    let cfg = ExperimentConfig::deserialize(Value::Table(doc)).map_err(|e| {
        HarnessError::Config(vec![ConfigIssue {
            location: Location::Unknown,
            message: e.message().to_string(),
        }])
    })?;
    let issues = check_values(&cfg, &loc);
    if !issues.is_empty() {
        return Err(HarnessError::Config(issues));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    let src = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config_str(&src, overrides)
}

/// Configs shipped with the repository, runnable by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("mixture", include_str!("../../../configs/mixture.toml")),
    (
        "mixture_myula",
        include_str!("../../../configs/mixture_myula.toml"),
    ),
    ("logistic", include_str!("../../../configs/logistic.toml")),
    (
        "logistic_myula",
        include_str!("../../../configs/logistic_myula.toml"),
    ),
    (
        "l12tv_denoise",
        include_str!("../../../configs/l12tv_denoise.toml"),
    ),
    ("cs_hpd", include_str!("../../../configs/cs_hpd.toml")),
    (
        "gaussian_sanity",
        include_str!("../../../configs/gaussian_sanity.toml"),
    ),
    (
        "kernel_validation",
        include_str!("../../../configs/kernel_validation.toml"),
    ),
];

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Accepts a file path or the name of a shipped config.
pub fn load_config(
    name_or_path: &str,
    overrides: &[String],
) -> Result<ExperimentConfig, HarnessError> {
    let path = Path::new(name_or_path);
    if path.exists() {
        return parse_config(path, overrides);
    }
    match builtin_source(name_or_path) {
        Some(src) => parse_config_str(src, overrides),
        None => Err(HarnessError::Io {
            path: path.to_path_buf(),
            message: "no such file and no shipped config by that name".into(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXTURE: &str = r#"
experiment = "mixture"
dims = 20
n_particles = 50
n_iters = 500
h = 0.02
lambda = 0.1
seed = 7

[mixture]
n_centers = 4
sigma = 4.0
"#;

    fn issues(src: &str, overrides: &[&str]) -> Vec<ConfigIssue> {
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        match parse_config_str(src, &o) {
            Err(HarnessError::Config(i)) => i,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_mixture_parses_and_round_trips() {
        let c = parse_config_str(MIXTURE, &[]).unwrap();
        assert_eq!(c.dims, 20);
        assert_eq!(c.n_particles, 50);
        assert_eq!(c.h, 0.02);
        assert_eq!(c.lambda, Some(0.1));
        assert_eq!(c.mixture().n_centers, 4);
        assert_eq!(c.mixture().sigma, 4.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.kernel_variant, KernelVariant::Separable);
        assert_eq!(c.marginals(), vec![0, 19]);
        let back = parse_config_str(&c.to_toml(), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn missing_h_names_the_key() {
        let src = MIXTURE.replace("h = 0.02\n", "");
        let i = issues(&src, &[]);
        assert_eq!(i.len(), 1);
        assert!(i[0].message.contains("`h`"), "{}", i[0]);
        assert_eq!(i[0].location, Location::Line(2));
    }

    #[test]
    fn negative_h_is_rejected_with_its_line() {
        let i = issues(&MIXTURE.replace("h = 0.02", "h = -0.02"), &[]);
        assert_eq!(i.len(), 1);
        assert!(i[0].message.contains("h must be positive"));
        assert_eq!(i[0].location, Location::Line(6));
    }

    #[test]
    fn all_problems_are_reported_at_once() {
        let src = MIXTURE
            .replace("dims = 20", "dims = \"twenty\"")
            .replace("sigma = 4.0", "sigma = 4.0\nbogus = 1")
            .replace("seed = 7", "seed = 7\nstep = 3");
        let i = issues(&src, &[]);
        let text: Vec<String> = i.iter().map(|x| x.to_string()).collect();
        assert_eq!(i.len(), 3, "{text:?}");
        assert!(text
            .iter()
            .any(|t| t.starts_with("line 3:") && t.contains("`dims` must be an integer")));
        assert!(text.iter().any(|t| t.contains("unknown key `step`")));
        assert!(text
            .iter()
            .any(|t| t.starts_with("line 14:") && t.contains("unknown key `mixture.bogus`")));
    }

    #[test]
    fn overrides_apply_and_are_located() {
        let c = parse_config_str(MIXTURE, &["--h=0.05".into(), "mixture.sigma=2".into()]).unwrap();
        assert_eq!(c.h, 0.05);
        assert_eq!(c.mixture().sigma, 2.0);
        let i = issues(MIXTURE, &["--h=-1"]);
        assert_eq!(i[0].location, Location::Override("h=-1".into()));
        let i = issues(MIXTURE, &["--kernel_variant=wide"]);
        assert!(i[0].message.contains("unknown kernel variant"), "{}", i[0]);
    }

    #[test]
    fn hash_ignores_output_dir_and_tracks_values() {
        let a = parse_config_str(MIXTURE, &[]).unwrap();
        let b = parse_config_str(MIXTURE, &["output_dir=\"elsewhere\"".into()]).unwrap();
        let c = parse_config_str(MIXTURE, &["seed=8".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let i = issues("experiment = \"mixture\"\nh = = 1\n", &[]);
        assert_eq!(i[0].location, Location::Line(2));
    }

    #[test]
    fn foreign_sections_and_unknown_experiments_are_rejected() {
        let i = issues(&format!("{MIXTURE}\n[logistic]\nn_data = 3\n"), &[]);
        assert!(i[0].message.contains("[logistic] is not used"), "{}", i[0]);
        let i = issues(&MIXTURE.replace("\"mixture\"", "\"mixtures\""), &[]);
        assert!(i[0].message.contains("unknown experiment"));
    }

    #[test]
    fn kernel_validation_needs_only_a_seed() {
        let c = parse_config_str("experiment = \"kernel_validation\"\nseed = 3\n", &[]).unwrap();
        assert_eq!(c.experiment, ExperimentKind::KernelValidation);
        let i = issues("experiment = \"kernel_validation\"\n", &[]);
        assert!(i[0].message.contains("`seed`"));
    }

    #[test]
    fn imaging_checks() {
        let src = r#"
experiment = "cs_hpd"
n_particles = 10
n_iters = 5
h = 0.02
lambda = 1.0
seed = 1
[imaging]
height = 6
width = 5
noise_var = 0.2
subsample = 4
"#;
        let i = issues(src, &[]);
        assert!(i[0].message.contains("subsample must divide"), "{}", i[0]);
        assert_eq!(i[0].location, Location::Line(12));
        let ok = parse_config_str(src, &["imaging.subsample=3".into()]).unwrap();
        assert_eq!(ok.imaging().hpd_alphas.len(), 19);
        let i = issues(
            &src.replace("cs_hpd", "l12tv_denoise"),
            &["imaging.subsample=3"],
        );
        assert_eq!(i.len(), 2, "{i:?}");
    }

    #[test]
    fn every_shipped_config_parses() {
        for (name, src) in BUILTIN {
            let c = parse_config_str(src, &[]).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(name.starts_with(c.experiment.as_str()), "{name}");
        }
    }
}
