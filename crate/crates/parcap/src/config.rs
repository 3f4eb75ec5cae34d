//! Plain-text key=value experiment configuration. Lines starting with '#'
//! and blank lines are ignored; later keys override earlier ones. Lists are
//! comma separated.

use serde::Serialize;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub dim: usize,
    pub p: f64,
    pub nodes: usize,
    pub steps: usize,
    /// spatial half-width of the domain (interval or disk radius)
    pub halfwidth: f64,
    pub total_time: f64,
    pub rho_list: Vec<f64>,
    pub tau_list: Vec<f64>,
    pub center: Vec<f64>,
    pub tol: f64,
    pub seed: u64,
    pub out_dir: String,
    /// run the refinement pass of the experiment
    pub refine: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: String::new(),
            dim: 1,
            p: 2.0,
            nodes: 65,
            steps: 16,
            halfwidth: 1.0,
            total_time: 1.0,
            rho_list: vec![0.25],
            tau_list: vec![0.25],
            center: vec![0.0],
            tol: 1e-8,
            seed: 0,
            out_dir: "out".into(),
            refine: false,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut center_set = false;
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", ln + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| Error::Config(format!("line {}: bad {what}: {value:?}", ln + 1));
            match key {
                "experiment" => cfg.experiment = value.to_string(),
                "dim" => cfg.dim = value.parse().map_err(|_| bad("dim"))?,
                "p" => cfg.p = value.parse().map_err(|_| bad("p"))?,
                "nodes" => cfg.nodes = value.parse().map_err(|_| bad("nodes"))?,
                "steps" => cfg.steps = value.parse().map_err(|_| bad("steps"))?,
                "halfwidth" => cfg.halfwidth = value.parse().map_err(|_| bad("halfwidth"))?,
                "total_time" => cfg.total_time = value.parse().map_err(|_| bad("total_time"))?,
                "rho_list" => cfg.rho_list = parse_list(value).ok_or_else(|| bad("rho_list"))?,
                "tau_list" => cfg.tau_list = parse_list(value).ok_or_else(|| bad("tau_list"))?,
                "center" => {
                    cfg.center = parse_list(value).ok_or_else(|| bad("center"))?;
                    center_set = true;
                }
                "tol" => cfg.tol = value.parse().map_err(|_| bad("tol"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "out_dir" => cfg.out_dir = value.to_string(),
                "refine" => {
                    cfg.refine = match value {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        _ => return Err(bad("refine")),
                    }
                }
                _ => return Err(Error::Config(format!("line {}: unknown key {key:?}", ln + 1))),
            }
        }
        if !center_set {
            cfg.center = vec![0.0; cfg.dim];
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p <= 1.0 {
            return Err(Error::Config(format!("p must exceed 1, got {}", self.p)));
        }
        if !(1..=2).contains(&self.dim) {
            return Err(Error::Config(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.center.len() != self.dim {
            return Err(Error::Config(format!(
                "center has {} entries for dim {}",
                self.center.len(),
                self.dim
            )));
        }
        if self.halfwidth <= 0.0 || self.total_time <= 0.0 {
            return Err(Error::Config("domain extents must be positive".into()));
        }
        if self.rho_list.is_empty() {
            return Err(Error::Config("rho_list must not be empty".into()));
        }
        for &r in &self.rho_list {
            if r <= 0.0 || r >= self.halfwidth {
                return Err(Error::Config(format!(
                    "rho {r} must lie in (0, halfwidth = {})",
                    self.halfwidth
                )));
            }
        }
        Ok(())
    }
}

fn parse_list(value: &str) -> Option<Vec<f64>> {
    let items: Option<Vec<f64>> = value
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok())
        .collect();
    items.filter(|v| !v.is_empty())
}
