//! Experiment configuration, JSON reports, raw-sample CSV emission and
//! cross-experiment summaries.
//!
//! Configuration files are flat `key = value` text (a TOML-compatible
//! subset); command-line flags override file values and every resolved value
//! is echoed into the report for provenance. CSV floats are written with 17
//! significant digits so a rerun comparison can be byte-exact.

use crate::error::{FlowError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Resolved parameters of one experiment run. Every field has a default, so
/// a config file only needs the values it wants to change.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Registry name of the experiment.
    pub experiment: String,
    /// Perturbation weight of the reflecting path (delta = 2/mu).
    pub mu: f64,
    /// Squared-Bessel / Jacobi dimension.
    pub delta: f64,
    /// Second Jacobi dimension parameter.
    pub delta_prime: f64,
    /// Terminal local time at level 0.
    pub b: f64,
    /// Negative hitting level for the stopped-Brownian construction.
    pub g: f64,
    /// Path time step.
    pub dt: f64,
    /// Space grid pitch for occupation profiles.
    pub dr: f64,
    /// Local-time window width.
    pub bandwidth: f64,
    /// Flow-parameter pitch of the white-noise grid.
    pub da: f64,
    /// Integration-axis pitch of the white-noise grid.
    pub dx: f64,
    /// Horizon cap for adaptive simulations.
    pub t_max: f64,
    /// Negative-side horizon (nonpositive).
    pub t_neg: f64,
    /// Checkpoint spacing of the time-changed reconstruction.
    pub hat_dt: f64,
    /// Number of Monte Carlo replicas.
    pub replicas: usize,
    /// Base seed; replica k uses the stream (seed, k).
    pub seed: u64,
    /// Output directory for CSV/JSON artifacts.
    pub out: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            mu: 1.0,
            delta: 2.0,
            delta_prime: 0.0,
            b: 1.0,
            g: -1.0,
            dt: 1e-3,
            dr: 2e-3,
            bandwidth: 0.05,
            da: 1e-3,
            dx: 1e-3,
            t_max: 800.0,
            t_neg: -50.0,
            hat_dt: 0.01,
            replicas: 200,
            seed: 1,
            out: "flowlab-out".into(),
        }
    }
}

impl ExperimentConfig {
    /// Parse a flat `key = value` text; `#` starts a comment. Unknown keys
    /// are an error so typos cannot silently fall back to defaults.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                FlowError::Parameter(format!("config line {}: expected key = value", lineno + 1))
            })?;
            self.set(key.trim(), value.trim().trim_matches('"'))?;
        }
        Ok(())
    }

    /// Set one field by key; values are parsed from their string form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num(key: &str, value: &str) -> Result<f64> {
            value.parse::<f64>().map_err(|_| {
                FlowError::Parameter(format!("config key {key}: invalid number {value:?}"))
            })
        }
        match key {
            "experiment" => self.experiment = value.to_string(),
            "mu" => self.mu = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "delta_prime" => self.delta_prime = num(key, value)?,
            "b" => self.b = num(key, value)?,
            "g" => self.g = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "dr" => self.dr = num(key, value)?,
            "bandwidth" => self.bandwidth = num(key, value)?,
            "da" => self.da = num(key, value)?,
            "dx" => self.dx = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "t_neg" => self.t_neg = num(key, value)?,
            "hat_dt" => self.hat_dt = num(key, value)?,
            "replicas" => {
                self.replicas = value.parse().map_err(|_| {
                    FlowError::Parameter(format!("config key replicas: invalid count {value:?}"))
                })?
            }
            "seed" => {
                self.seed = value.parse().map_err(|_| {
                    FlowError::Parameter(format!("config key seed: invalid seed {value:?}"))
                })?
            }
            "out" => self.out = value.to_string(),
            other => {
                return Err(FlowError::Parameter(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// All resolved values as an ordered string map (report provenance).
    /// Floats use the shortest round-trip representation, so
    /// parse(serialize(config)) == config exactly.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("experiment".into(), self.experiment.clone());
        m.insert("mu".into(), self.mu.to_string());
        m.insert("delta".into(), self.delta.to_string());
        m.insert("delta_prime".into(), self.delta_prime.to_string());
        m.insert("b".into(), self.b.to_string());
        m.insert("g".into(), self.g.to_string());
        m.insert("dt".into(), self.dt.to_string());
        m.insert("dr".into(), self.dr.to_string());
        m.insert("bandwidth".into(), self.bandwidth.to_string());
        m.insert("da".into(), self.da.to_string());
        m.insert("dx".into(), self.dx.to_string());
        m.insert("t_max".into(), self.t_max.to_string());
        m.insert("t_neg".into(), self.t_neg.to_string());
        m.insert("hat_dt".into(), self.hat_dt.to_string());
        m.insert("replicas".into(), self.replicas.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("out".into(), self.out.clone());
        m
    }

    /// Serialize back to `key = value` text.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parse a full config from `key = value` text over the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv_text(text)?;
        Ok(cfg)
    }
}

/// One named statistical check inside an experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestRecord {
    /// Role-based name of the check.
    pub name: String,
    /// Tag of the result the check verifies.
    pub theorem: String,
    /// Test statistic (KS distance, chi-square value, estimate error, ...).
    pub statistic: f64,
    /// p-value, or 1.0/0.0 for exact structural checks.
    pub p: f64,
    /// Verdict under the experiment's acceptance rule.
    pub pass: bool,
}

/// Outcome of one experiment: resolved config, per-test verdicts, timing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatReport {
    pub experiment: String,
    pub config: BTreeMap<String, String>,
    pub tests: Vec<TestRecord>,
    pub runtime_s: f64,
    /// Conjunction of the per-test verdicts.
    pub pass: bool,
}

impl StatReport {
    pub fn new(
        experiment: &str,
        config: &ExperimentConfig,
        tests: Vec<TestRecord>,
        runtime_s: f64,
    ) -> Self {
        let pass = !tests.is_empty() && tests.iter().all(|t| t.pass);
        StatReport {
            experiment: experiment.to_string(),
            config: config.to_map(),
            tests,
            runtime_s,
            pass,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Format one float with 17 significant digits (round-trip exact).
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Render a raw-sample table as CSV: header row, one sample per line.
pub fn csv_table(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| csv_float(v)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

/// Fixed summary schema: one row per (experiment, test).
pub const SUMMARY_HEADER: &str = "experiment,test,theorem,statistic,p,verdict";

/// Summary table over a set of reports: CSV plus a human-readable listing.
/// The overall verdict is the conjunction of every report's pass flag.
pub fn emit_summary(reports: &[StatReport]) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(FlowError::Parameter("emit_summary: no reports".into()));
    }
    let mut csv = String::new();
    let _ = writeln!(csv, "{SUMMARY_HEADER}");
    let mut human = String::new();
    let mut all_pass = true;
    for r in reports {
        all_pass &= r.pass;
        for t in &r.tests {
            let verdict = if t.pass { "pass" } else { "fail" };
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.experiment,
                t.name,
                t.theorem,
                csv_float(t.statistic),
                csv_float(t.p),
                verdict
            );
            let _ = writeln!(
                human,
                "{:<22} {:<34} [{}] stat = {:>12.5e}  p = {:>10.4e}  {}",
                r.experiment,
                t.name,
                t.theorem,
                t.statistic,
                t.p,
                if t.pass { "PASS" } else { "FAIL" }
            );
        }
    }
    let _ = writeln!(
        human,
        "overall: {} ({} experiments)",
        if all_pass { "PASS" } else { "FAIL" },
        reports.len()
    );
    Ok((csv, human))
}

/// Load every `*.json` report in a directory, sorted by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<StatReport>> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .collect();
    entries.sort();
    let mut reports = Vec::new();
    for p in entries {
        let text = std::fs::read_to_string(&p)?;
        reports.push(StatReport::from_json(&text)?);
    }
    Ok(reports)
}
