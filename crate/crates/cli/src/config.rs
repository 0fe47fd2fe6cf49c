//! Flat run configuration: a JSON object of scalar keys, overridden by flags.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use epp_core::grid::{build_grid, Grid, GridConfig};
use epp_core::model::{catalogue, Functional, OscillatorParams};
use epp_core::schwarz::SchwarzConfig;
use epp_core::svi_mc::SimConfig;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Every key the config file (and `--set`) understands.
pub const KEYS: &[&str] = &[
    "c0", "k", "Y", "L", "Ny", "Nz", "tol", "dt", "T", "burn_in", "replicas", "seed", "batches", "cycles",
    "step_cap", "ybar", "ybar1", "schwarz_tol", "max_iter", "f", "lambdas",
];

/// Raw keys as read; `None` means "use the default".
#[derive(Debug, Default, Clone)]
pub struct RunConfig {
    c0: Option<f64>,
    k: Option<f64>,
    y_bound: Option<f64>,
    half_width: Option<f64>,
    ny: Option<usize>,
    nz: Option<usize>,
    tol: Option<f64>,
    dt: Option<f64>,
    horizon: Option<f64>,
    burn_in: Option<f64>,
    replicas: Option<usize>,
    seed: Option<u64>,
    batches: Option<usize>,
    cycles: Option<usize>,
    step_cap: Option<u64>,
    ybar: Option<f64>,
    ybar1: Option<f64>,
    schwarz_tol: Option<f64>,
    max_iter: Option<usize>,
    functionals: Option<Vec<String>>,
    lambdas: Option<Vec<f64>>,
}

fn bad(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn as_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| bad(key, "not a finite number")),
        Value::String(s) => s.trim().parse().map_err(|_| bad(key, format!("expected a number, got {s:?}"))),
        _ => Err(bad(key, format!("expected a number, got {v}"))),
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, CliError> {
    match v {
        Value::Number(n) => n.as_u64().ok_or_else(|| bad(key, format!("expected a non-negative integer, got {n}"))),
        Value::String(s) => s
            .trim()
            .parse()
            .map_err(|_| bad(key, format!("expected a non-negative integer, got {s:?}"))),
        _ => Err(bad(key, format!("expected a non-negative integer, got {v}"))),
    }
}

fn as_usize(key: &str, v: &Value) -> Result<usize, CliError> {
    as_u64(key, v).and_then(|n| usize::try_from(n).map_err(|_| bad(key, "too large")))
}

/// Accepts `"a,b"` or `["a", "b"]`.
fn as_list(key: &str, v: &Value) -> Result<Vec<Value>, CliError> {
    let items: Vec<Value> = match v {
        Value::Array(a) => a.clone(),
        Value::String(s) => s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| Value::String(t.to_string()))
            .collect(),
        Value::Number(_) => vec![v.clone()],
        _ => return Err(bad(key, format!("expected a list, got {v}"))),
    };
    if items.is_empty() {
        return Err(bad(key, "list is empty"));
    }
    Ok(items)
}

/// Parses a `--set` value: JSON if it parses, a bare string otherwise.
pub fn loose_value(s: &str) -> Value {
    serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string()))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        let Value::Object(map) = value else {
            return Err(bad("config", "top level must be a JSON object"));
        };
        let mut cfg = Self::default();
        cfg.merge(&map)?;
        Ok(cfg)
    }

    pub fn merge(&mut self, map: &Map<String, Value>) -> Result<(), CliError> {
        for (key, v) in map {
            self.set(key, v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), CliError> {
        match key {
            "c0" => self.c0 = Some(as_f64(key, v)?),
            "k" => self.k = Some(as_f64(key, v)?),
            "Y" => self.y_bound = Some(as_f64(key, v)?),
            "L" => self.half_width = Some(as_f64(key, v)?),
            "Ny" => self.ny = Some(as_usize(key, v)?),
            "Nz" => self.nz = Some(as_usize(key, v)?),
            "tol" => self.tol = Some(as_f64(key, v)?),
            "dt" => self.dt = Some(as_f64(key, v)?),
            "T" => self.horizon = Some(as_f64(key, v)?),
            "burn_in" => self.burn_in = Some(as_f64(key, v)?),
            "replicas" => self.replicas = Some(as_usize(key, v)?),
            "seed" => self.seed = Some(as_u64(key, v)?),
            "batches" => self.batches = Some(as_usize(key, v)?),
            "cycles" => self.cycles = Some(as_usize(key, v)?),
            "step_cap" => self.step_cap = Some(as_u64(key, v)?),
            "ybar" => self.ybar = Some(as_f64(key, v)?),
            "ybar1" => self.ybar1 = Some(as_f64(key, v)?),
            "schwarz_tol" => self.schwarz_tol = Some(as_f64(key, v)?),
            "max_iter" => self.max_iter = Some(as_usize(key, v)?),
            "f" => {
                let names = as_list(key, v)?
                    .into_iter()
                    .map(|x| match x {
                        Value::String(s) => Ok(s),
                        other => Err(bad(key, format!("functional names are strings, got {other}"))),
                    })
                    .collect::<Result<_, _>>()?;
                self.functionals = Some(names);
            }
            "lambdas" => {
                let ls = as_list(key, v)?
                    .iter()
                    .map(|x| as_f64(key, x))
                    .collect::<Result<_, _>>()?;
                self.lambdas = Some(ls);
            }
            _ => return Err(bad(key, format!("unknown key (known: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Fills defaults and runs every module-level precondition.
    pub fn resolve(&self, default_f: &[&str]) -> Result<Resolved, CliError> {
        let d = OscillatorParams::default();
        let params = OscillatorParams::new(
            self.c0.unwrap_or(d.c0()),
            self.k.unwrap_or(d.k()),
            self.y_bound.unwrap_or(d.y_bound()),
        )?;
        let gd = GridConfig::default_for(&params);
        let grid = GridConfig {
            half_width: self.half_width.unwrap_or(gd.half_width),
            ny: self.ny.unwrap_or(gd.ny),
            nz: self.nz.unwrap_or(gd.nz),
            tol: self.tol.unwrap_or(gd.tol),
        };
        let sd = SimConfig::default();
        let sim = SimConfig {
            dt: self.dt.unwrap_or(sd.dt),
            horizon: self.horizon.unwrap_or(sd.horizon),
            burn_in: self.burn_in.unwrap_or(sd.burn_in),
            replicas: self.replicas.unwrap_or(sd.replicas),
            seed: self.seed.unwrap_or(sd.seed),
            batches: self.batches.unwrap_or(sd.batches),
            cycles: self.cycles.unwrap_or(sd.cycles),
            step_cap: self.step_cap.unwrap_or(sd.step_cap),
        };
        sim.validate()?;
        let xd = SchwarzConfig::default_for(&params);
        let schwarz = SchwarzConfig {
            ybar: self.ybar.unwrap_or(xd.ybar),
            ybar1: self.ybar1.unwrap_or(xd.ybar1),
            tol: self.schwarz_tol.unwrap_or(xd.tol),
            max_iter: self.max_iter.unwrap_or(xd.max_iter),
        };
        let functionals = self
            .functionals
            .clone()
            .unwrap_or_else(|| default_f.iter().map(|s| s.to_string()).collect());
        let lambdas = self.lambdas.clone().unwrap_or_else(|| vec![1.0, 0.1, 0.01, 0.001]);
        if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(bad("lambdas", format!("each lambda must be > 0, got {l}")));
        }
        let built = build_grid(&params, &grid)?;
        // The Schwarz columns depend on the grid, so check them here too.
        schwarz
            .columns(&built)
            .map_err(|e| match e {
                epp_core::Error::InvalidInput { key, reason } => bad(if key == "tol" { "schwarz_tol" } else { key }, reason),
                other => other.into(),
            })?;
        let fs = functionals
            .iter()
            .map(|n| catalogue(n, &params, grid.half_width).map_err(|_| bad("f", format!("unknown functional {n:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let effective = Effective {
            c0: params.c0(),
            k: params.k(),
            y_bound: params.y_bound(),
            half_width: grid.half_width,
            ny: grid.ny,
            nz: grid.nz,
            tol: grid.tol,
            dt: sim.dt,
            horizon: sim.horizon,
            burn_in: sim.burn_in,
            replicas: sim.replicas,
            seed: sim.seed,
            batches: sim.batches,
            cycles: sim.cycles,
            step_cap: sim.step_cap,
            ybar: schwarz.ybar,
            ybar1: schwarz.ybar1,
            schwarz_tol: schwarz.tol,
            max_iter: schwarz.max_iter,
            f: functionals,
            lambdas,
        };
        Ok(Resolved {
            params,
            grid: built,
            sim,
            schwarz,
            functionals: fs,
            effective,
        })
    }
}

/// The fully defaulted configuration, in the same flat key space as the input.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub c0: f64,
    pub k: f64,
    #[serde(rename = "Y")]
    pub y_bound: f64,
    #[serde(rename = "L")]
    pub half_width: f64,
    #[serde(rename = "Ny")]
    pub ny: usize,
    #[serde(rename = "Nz")]
    pub nz: usize,
    pub tol: f64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub burn_in: f64,
    pub replicas: usize,
    pub seed: u64,
    pub batches: usize,
    pub cycles: usize,
    pub step_cap: u64,
    pub ybar: f64,
    pub ybar1: f64,
    pub schwarz_tol: f64,
    pub max_iter: usize,
    pub f: Vec<String>,
    pub lambdas: Vec<f64>,
}

impl Effective {
    /// SHA-256 of the canonical JSON encoding, as lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct Resolved {
    pub params: OscillatorParams,
    pub grid: Arc<Grid>,
    pub sim: SimConfig,
    pub schwarz: SchwarzConfig,
    pub functionals: Vec<Functional>,
    pub effective: Effective,
}

impl Resolved {
    /// A grid with the same parameters but different resolution or width.
    pub fn grid_with(&self, half_width: f64, ny: usize, nz: usize) -> Result<Arc<Grid>, CliError> {
        let cfg = GridConfig {
            half_width,
            ny,
            nz,
            tol: self.grid.tol(),
        };
        Ok(build_grid(&self.params, &cfg)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_resolve() {
        let r = RunConfig::default().resolve(&["one"]).unwrap();
        assert_eq!(r.effective.ny, 241);
        assert_eq!(r.effective.f, vec!["one".to_string()]);
        assert_eq!(r.effective.hash().len(), 64);
    }

    #[test]
    fn unknown_key_is_named() {
        let mut c = RunConfig::default();
        let err = c.set("Lx", &json!(3.0)).unwrap_err();
        assert!(err.to_string().contains("Lx"), "{err}");
    }

    #[test]
    fn range_error_names_key() {
        let mut c = RunConfig::default();
        c.set("dt", &json!(-1.0)).unwrap();
        let err = c.resolve(&["one"]).err().unwrap();
        assert!(err.to_string().contains("dt"), "{err}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn list_forms_agree() {
        let mut a = RunConfig::default();
        a.set("f", &json!("y2, z2")).unwrap();
        let mut b = RunConfig::default();
        b.set("f", &json!(["y2", "z2"])).unwrap();
        assert_eq!(a.functionals, b.functionals);
    }

    #[test]
    fn hash_tracks_values() {
        let base = RunConfig::default().resolve(&["one"]).unwrap().effective.hash();
        let mut c = RunConfig::default();
        c.set("seed", &loose_value("7")).unwrap();
        assert_ne!(base, c.resolve(&["one"]).unwrap().effective.hash());
    }
}
