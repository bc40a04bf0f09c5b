//! Plain-text `key = value` run configuration.
//!
//! Lists are comma separated, absent optional keys are omitted, and floats are
//! written in shortest round-trip form so `parse(render(c)) == c`.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use nls_core::{build_grid, DomainSpec, Grid, Kind, SolverOptions};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Defaults to the box centre.
    pub center: Option<[f64; 2]>,
    pub n: usize,
    pub p: f64,
    pub kind: Kind,
    pub lambda: f64,
    /// Defaults to the relevant threshold plus 0.5.
    pub lambda_min: Option<f64>,
    pub lambda_max: f64,
    pub samples: usize,
    pub mu: Vec<f64>,
    /// For `bound`: `mu = fraction * mu_bar` instead of `mu`.
    pub mu_bar_fraction: Option<f64>,
    pub boxes: Vec<f64>,
    pub box_h: f64,
    pub eps: Vec<f64>,
    pub eig_k: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
    pub margin_rel: f64,
    pub nodal_starts: usize,
    pub out_dir: PathBuf,
    pub input: Option<PathBuf>,
    pub dump: bool,
}

impl RunConfig {
    /// Defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            dim: 1,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            center: None,
            n: 255,
            p: 4.0,
            kind: Kind::Signed,
            lambda: 1.0,
            lambda_min: None,
            lambda_max: 100.0,
            samples: 100,
            mu: vec![1.0],
            mu_bar_fraction: None,
            boxes: vec![10.0, 20.0, 40.0],
            box_h: 1.0 / 64.0,
            eps: vec![0.1, 0.05, 0.01, 0.002],
            eig_k: 2,
            seed,
            tol: 1e-8,
            max_iter: 5000,
            margin_rel: 1e-6,
            nodal_starts: 4,
            out_dir: PathBuf::from("out"),
            input: None,
            dump: false,
        }
    }

    pub fn domain(&self) -> DomainSpec {
        let spec = if self.dim == 1 {
            DomainSpec::interval(self.lo[0], self.hi[0])
        } else {
            DomainSpec::rectangle(self.lo[0], self.hi[0], self.lo[1], self.hi[1])
        };
        match self.center {
            Some(c) => spec.with_center(c),
            None => spec,
        }
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(build_grid(self.domain(), self.n)?)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            margin_rel: self.margin_rel,
            seed: self.seed,
            nodal_starts: self.nodal_starts,
            ..SolverOptions::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(1..=2).contains(&self.dim) {
            return bad(format!("dim must be 1 or 2, got {}", self.dim));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("margin_rel", self.margin_rel),
            ("box_h", self.box_h),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.p > 2.0) || !self.p.is_finite() {
            return bad(format!("p must exceed 2, got {}", self.p));
        }
        if self.samples == 0 || self.max_iter == 0 {
            return bad("samples and max_iter must be positive".into());
        }
        if let Some(lo) = self.lambda_min {
            if !(lo < self.lambda_max) {
                return bad(format!(
                    "lambda_min {lo} must be below lambda_max {}",
                    self.lambda_max
                ));
            }
        }
        if self.mu.iter().any(|m| !(*m > 0.0)) {
            return bad("mu values must be positive".into());
        }
        self.domain().validate()?;
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("dim", self.dim.to_string());
        put("lo", floats(&self.lo));
        put("hi", floats(&self.hi));
        if let Some(c) = self.center {
            put("center", floats(&c));
        }
        put("n", self.n.to_string());
        put("p", format!("{:?}", self.p));
        put("kind", self.kind.to_string());
        put("lambda", format!("{:?}", self.lambda));
        if let Some(l) = self.lambda_min {
            put("lambda_min", format!("{l:?}"));
        }
        put("lambda_max", format!("{:?}", self.lambda_max));
        put("samples", self.samples.to_string());
        put("mu", floats(&self.mu));
        if let Some(f) = self.mu_bar_fraction {
            put("mu_bar_fraction", format!("{f:?}"));
        }
        put("boxes", floats(&self.boxes));
        put("box_h", format!("{:?}", self.box_h));
        put("eps", floats(&self.eps));
        put("eig_k", self.eig_k.to_string());
        put("seed", self.seed.to_string());
        put("tol", format!("{:?}", self.tol));
        put("max_iter", self.max_iter.to_string());
        put("margin_rel", format!("{:?}", self.margin_rel));
        put("nodal_starts", self.nodal_starts.to_string());
        put("out_dir", self.out_dir.display().to_string());
        if let Some(i) = &self.input {
            put("input", i.display().to_string());
        }
        put("dump", self.dump.to_string());
        s
    }

    /// Parses a configuration; `seed` is mandatory.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::with_seed(0);
        let mut seen_seed = false;
        let mut seen = std::collections::BTreeSet::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", ln + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key '{k}'",
                    ln + 1
                )));
            }
            cfg.set(k, v)
                .map_err(|e| CliError::Config(format!("line {}: {e}", ln + 1)))?;
            seen_seed |= k == "seed";
        }
        if !seen_seed {
            return Err(CliError::Config("seed is mandatory".into()));
        }
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "dim" => self.dim = scalar(v)?,
            "lo" => self.lo = pair(v)?,
            "hi" => self.hi = pair(v)?,
            "center" => self.center = Some(pair(v)?),
            "n" => self.n = scalar(v)?,
            "p" => self.p = scalar(v)?,
            "kind" => self.kind = scalar(v)?,
            "lambda" => self.lambda = scalar(v)?,
            "lambda_min" => self.lambda_min = Some(scalar(v)?),
            "lambda_max" => self.lambda_max = scalar(v)?,
            "samples" => self.samples = scalar(v)?,
            "mu" => self.mu = list(v)?,
            "mu_bar_fraction" => self.mu_bar_fraction = Some(scalar(v)?),
            "boxes" => self.boxes = list(v)?,
            "box_h" => self.box_h = scalar(v)?,
            "eps" => self.eps = list(v)?,
            "eig_k" => self.eig_k = scalar(v)?,
            "seed" => self.seed = scalar(v)?,
            "tol" => self.tol = scalar(v)?,
            "max_iter" => self.max_iter = scalar(v)?,
            "margin_rel" => self.margin_rel = scalar(v)?,
            "nodal_starts" => self.nodal_starts = scalar(v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "input" => self.input = Some(PathBuf::from(v)),
            "dump" => self.dump = scalar(v)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }
}

fn floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn scalar<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| format!("'{v}': {e}"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| scalar(x.trim())).collect()
}

fn pair(v: &str) -> Result<[f64; 2], String> {
    match list(v)?.as_slice() {
        [a] => Ok([*a, 0.0]),
        [a, b] => Ok([*a, *b]),
        _ => Err(format!("'{v}': expected one or two numbers")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(
            RunConfig::parse("n = 10\n"),
            Err(CliError::Config(_))
        ));
        assert_eq!(RunConfig::parse("seed = 3").unwrap().seed, 3);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(RunConfig::parse("seed = 1\nfoo = 2").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse("seed = 1\np").is_err());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::with_seed(1);
        assert!(c.validate().is_ok());
        c.tol = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::with_seed(1);
        c.p = 2.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::with_seed(1);
        c.center = Some([3.0, 0.0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = RunConfig::parse("# run\n\nseed = 5 # fixed\nkind = nodal\nmu = 1, 2.5\n").unwrap();
        assert_eq!(c.kind, Kind::Nodal);
        assert_eq!(c.mu, vec![1.0, 2.5]);
    }
}
