//! Run configuration: a flat `key = value` text format with defaults and
//! validation.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored. Numeric values accept plain literals (`0.25`, `1e-3`),
//! fractions (`1/8`), and powers in numerator or denominator (`1/2^13`,
//! `2^-10`). Keys are case-sensitive; unknown or duplicate keys are errors.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Error;
use crate::forms::FormParams;
use crate::mms::ManufacturedSolution;
use crate::solver::SolverConfig;
use crate::stepping::StepConfig;
use crate::Result;

/// A fully resolved, validated run description.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub dim: usize,
    /// Mesh cells per axis (uniform).
    pub cells: usize,
    /// Velocity polynomial degree.
    pub k1: usize,
    /// Pressure polynomial degree.
    pub k2: usize,
    pub mu: f64,
    pub epsilon: f64,
    pub sigma_int: f64,
    pub sigma_bnd: f64,
    pub sigma_tilde: f64,
    pub delta: f64,
    pub tau: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Data selection: a manufactured solution name or `zero`.
    pub mms: String,
    /// Volume quadrature points per axis.
    pub quad_points: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_iters: usize,
    pub restart: usize,
    /// Emit per-step diagnostics and end-of-run identity residuals.
    pub diagnostics: bool,
    /// Export final fields as a VTK snapshot.
    pub vtk: bool,
    pub out_dir: String,
}

pub const KNOWN_KEYS: &[&str] = &[
    "dim",
    "cells",
    "k1",
    "k2",
    "mu",
    "epsilon",
    "sigma_int",
    "sigma_bnd",
    "sigma_tilde",
    "delta",
    "tau",
    "T",
    "mms",
    "quad_points",
    "rtol",
    "atol",
    "max_iters",
    "restart",
    "diagnostics",
    "vtk",
    "out_dir",
];

/// Parse a configuration text, fill defaults, and validate.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with_overrides(text, &[])
}

/// Parse a configuration text, apply `key=value` overrides on top, then fill
/// defaults and validate. Overrides may also introduce keys absent from the
/// text.
pub fn parse_config_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut entries = BTreeMap::new();
    for (lineno, raw_line) in text.lines().enumerate() {
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(&key, "unknown configuration key"));
        }
        if entries.insert(key.clone(), value).is_some() {
            return Err(Error::config(&key, "duplicate configuration key"));
        }
    }
    for (key, value) in overrides {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(Error::config(key, "unknown configuration key"));
        }
        entries.insert(key.clone(), value.clone());
    }
    resolve(entries)
}

fn resolve(entries: BTreeMap<String, String>) -> Result<RunConfig> {
    let get = |key: &str| entries.get(key).map(String::as_str);
    let require = |key: &'static str| {
        get(key).ok_or_else(|| Error::config(key, "required key is missing"))
    };

    let dim = parse_usize("dim", require("dim")?)?;
    let k1 = parse_usize("k1", require("k1")?)?;
    let config = RunConfig {
        dim,
        cells: parse_usize("cells", require("cells")?)?,
        k1,
        k2: parse_usize("k2", require("k2")?)?,
        mu: opt_number("mu", get("mu"), 1.0)?,
        epsilon: opt_number("epsilon", get("epsilon"), -1.0)?,
        sigma_int: opt_number("sigma_int", get("sigma_int"), 64.0)?,
        sigma_bnd: opt_number("sigma_bnd", get("sigma_bnd"), 128.0)?,
        sigma_tilde: opt_number("sigma_tilde", get("sigma_tilde"), 2.0)?,
        delta: opt_number("delta", get("delta"), StepConfig::default_delta(dim))?,
        tau: parse_number("tau", require("tau")?)?,
        t_end: parse_number("T", require("T")?)?,
        mms: require("mms")?.to_string(),
        quad_points: match get("quad_points") {
            Some(v) => parse_usize("quad_points", v)?,
            None => k1 + 2,
        },
        rtol: opt_number("rtol", get("rtol"), 1e-11)?,
        atol: opt_number("atol", get("atol"), 1e-14)?,
        max_iters: match get("max_iters") {
            Some(v) => parse_usize("max_iters", v)?,
            None => 5000,
        },
        restart: match get("restart") {
            Some(v) => parse_usize("restart", v)?,
            None => 60,
        },
        diagnostics: opt_bool("diagnostics", get("diagnostics"), false)?,
        vtk: opt_bool("vtk", get("vtk"), false)?,
        out_dir: get("out_dir").unwrap_or("out").to_string(),
    };
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::config("dim", "dimension must be 2 or 3"));
        }
        if self.cells == 0 {
            return Err(Error::config("cells", "need at least one cell per axis"));
        }
        if self.k1 < 1 {
            return Err(Error::config("k1", "velocity degree must be at least 1"));
        }
        if self.k2 + 1 < self.k1 || self.k2 > self.k1 + 1 {
            return Err(Error::config(
                "k2",
                format!(
                    "pressure degree k2={} violates k1-1 <= k2 <= k1+1 (k1={})",
                    self.k2, self.k1
                ),
            ));
        }
        if self.epsilon != -1.0 && self.epsilon != 0.0 && self.epsilon != 1.0 {
            return Err(Error::config("epsilon", "must be -1, 0, or 1"));
        }
        for (key, value) in [
            ("mu", self.mu),
            ("sigma_int", self.sigma_int),
            ("sigma_bnd", self.sigma_bnd),
            ("sigma_tilde", self.sigma_tilde),
            ("tau", self.tau),
            ("T", self.t_end),
            ("rtol", self.rtol),
        ] {
            if !(value > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        if !(self.atol >= 0.0) {
            return Err(Error::config("atol", "must be nonnegative"));
        }
        let kappa = self.form_params().kappa();
        let bound = kappa / (2.0 * self.dim as f64);
        if !(self.delta > 0.0 && self.delta <= bound) {
            return Err(Error::config(
                "delta",
                format!("must lie in ]0, {bound}] for epsilon={}, dim={}", self.epsilon, self.dim),
            ));
        }
        if self.quad_points < self.k1 + 1 {
            return Err(Error::config(
                "quad_points",
                format!("need at least k1+1 = {} points per axis", self.k1 + 1),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters", "must be at least 1"));
        }
        if self.restart < 1 {
            return Err(Error::config("restart", "must be at least 1"));
        }
        let solution = ManufacturedSolution::by_name(&self.mms, self.dim, self.mu)
            .map_err(|e| Error::config("mms", e.to_string()))?;
        if let Some(required) = solution.required_dim() {
            if self.dim != required {
                return Err(Error::config(
                    "mms",
                    format!("`{}` is a {required}d solution, config has dim={}", self.mms, self.dim),
                ));
            }
        }
        if let Some(required_mu) = solution.required_viscosity() {
            if self.mu != required_mu {
                return Err(Error::config(
                    "mu",
                    format!("`{}` solves the equations only for mu={required_mu}", self.mms),
                ));
            }
        }
        Ok(())
    }

    pub fn form_params(&self) -> FormParams {
        FormParams {
            epsilon: self.epsilon,
            sigma_int: self.sigma_int,
            sigma_bnd: self.sigma_bnd,
            sigma_tilde: self.sigma_tilde,
        }
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            tau: self.tau,
            mu: self.mu,
            delta: self.delta,
            solver: SolverConfig {
                rtol: self.rtol,
                atol: self.atol,
                max_iters: self.max_iters,
                restart: self.restart,
            },
        }
    }

    pub fn solution(&self) -> Result<ManufacturedSolution> {
        ManufacturedSolution::by_name(&self.mms, self.dim, self.mu)
    }

    /// Echo in the configuration file format (re-parseable).
    pub fn echo(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("cells = {}\n", self.cells));
        s.push_str(&format!("k1 = {}\n", self.k1));
        s.push_str(&format!("k2 = {}\n", self.k2));
        s.push_str(&format!("mu = {:e}\n", self.mu));
        s.push_str(&format!("epsilon = {}\n", self.epsilon));
        s.push_str(&format!("sigma_int = {:e}\n", self.sigma_int));
        s.push_str(&format!("sigma_bnd = {:e}\n", self.sigma_bnd));
        s.push_str(&format!("sigma_tilde = {:e}\n", self.sigma_tilde));
        s.push_str(&format!("delta = {:e}\n", self.delta));
        s.push_str(&format!("tau = {:e}\n", self.tau));
        s.push_str(&format!("T = {:e}\n", self.t_end));
        s.push_str(&format!("mms = {}\n", self.mms));
        s.push_str(&format!("quad_points = {}\n", self.quad_points));
        s.push_str(&format!("rtol = {:e}\n", self.rtol));
        s.push_str(&format!("atol = {:e}\n", self.atol));
        s.push_str(&format!("max_iters = {}\n", self.max_iters));
        s.push_str(&format!("restart = {}\n", self.restart));
        s.push_str(&format!("diagnostics = {}\n", self.diagnostics));
        s.push_str(&format!("vtk = {}\n", self.vtk));
        s.push_str(&format!("out_dir = {}\n", self.out_dir));
        s
    }
}

/// Parse a numeric value: literal, `a/b`, with `base^exp` allowed on either
/// side of the fraction.
fn parse_number(key: &str, text: &str) -> Result<f64> {
    fn power(text: &str) -> Option<f64> {
        let t = text.trim();
        if let Some((base, exp)) = t.split_once('^') {
            let base: f64 = base.trim().parse().ok()?;
            let exp: i32 = exp.trim().parse().ok()?;
            Some(base.powi(exp))
        } else {
            t.parse().ok()
        }
    }
    let value = if let Some((num, den)) = text.split_once('/') {
        match (power(num), power(den)) {
            (Some(n), Some(d)) if d != 0.0 => Some(n / d),
            _ => None,
        }
    } else {
        power(text)
    };
    let value =
        value.ok_or_else(|| Error::config(key, format!("cannot parse number `{text}`")))?;
    if !value.is_finite() {
        return Err(Error::config(key, format!("value `{text}` is not finite")));
    }
    Ok(value)
}

fn opt_number(key: &str, text: Option<&str>, default: f64) -> Result<f64> {
    match text {
        Some(t) => parse_number(key, t),
        None => Ok(default),
    }
}

fn parse_usize(key: &str, text: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse integer `{text}`")))
}

fn opt_bool(key: &str, text: Option<&str>, default: bool) -> Result<bool> {
    match text {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => Err(Error::config(key, format!("expected true or false, got `{other}`"))),
        None => Ok(default),
    }
}
