//! Flat dotted-key experiment configs.
//!
//! One `key = value` pair per line, `#` comments, no nesting. Keys under
//! `phi.` and `f.` other than `.name` are numeric model parameters.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use orlicz_core::nonlinearity::phi_power_model;
use orlicz_core::{
    catalog, make_mesh, model_f, Error as CoreError, Mesh, NFunction, Nonlinearity, Profile,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error at line {line}: {msg}")]
    ConfigParse { line: usize, msg: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub phi_name: String,
    pub phi_params: BTreeMap<String, f64>,
    pub f_name: String,
    pub f_params: BTreeMap<String, f64>,
    pub dim: usize,
    pub extent: (f64, f64),
    pub resolution: usize,
    pub lambdas: Vec<f64>,
    /// interpret `lambdas` as multiples of the witness threshold
    pub lambdas_relative: bool,
    pub profile: Profile,
    pub tol: f64,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
}

fn bad(line: usize, msg: impl Into<String>) -> CliError {
    CliError::ConfigParse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| bad(line, format!("{key}: '{v}' is not a number")))
}

fn parse_list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse_f64(line, key, s))
        .collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut phi_name = None;
    let mut phi_params = BTreeMap::new();
    let mut f_name = None;
    let mut f_params = BTreeMap::new();
    let mut dim = 1usize;
    let mut extent = (0.0, 1.0);
    let mut resolution = None;
    let mut lambdas: Vec<f64> = Vec::new();
    let mut lambdas_relative = false;
    let mut lambda_grid: (Option<f64>, Option<f64>, Option<usize>) = (None, None, None);
    let mut profile = Profile::T1;
    let mut tol = 1e-6;
    let mut seed = 0u64;
    let mut workers = 0usize;
    let mut output_dir = PathBuf::from("out");

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(ln, "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "phi.name" => phi_name = Some(value.to_string()),
            "f.name" => f_name = Some(value.to_string()),
            "mesh.dim" => {
                dim = value
                    .parse()
                    .map_err(|_| bad(ln, format!("mesh.dim: '{value}' is not an integer")))?;
                if dim != 1 && dim != 2 {
                    return Err(bad(ln, format!("mesh.dim must be 1 or 2, got {dim}")));
                }
            }
            "mesh.extent" => {
                let v = parse_list(ln, key, value)?;
                if v.len() != 2 || v[1] <= v[0] {
                    return Err(bad(ln, "mesh.extent needs two increasing numbers 'a b'"));
                }
                extent = (v[0], v[1]);
            }
            "mesh.resolution" => {
                let r: usize = value.parse().map_err(|_| {
                    bad(ln, format!("mesh.resolution: '{value}' is not an integer"))
                })?;
                if r < 4 {
                    return Err(bad(ln, format!("mesh.resolution must be >= 4, got {r}")));
                }
                resolution = Some(r);
            }
            "lambdas" => lambdas = parse_list(ln, key, value)?,
            "lambdas.relative" => {
                lambdas_relative = value
                    .parse()
                    .map_err(|_| bad(ln, "lambdas.relative must be true or false"))?
            }
            "lambdas.min" => lambda_grid.0 = Some(parse_f64(ln, key, value)?),
            "lambdas.max" => lambda_grid.1 = Some(parse_f64(ln, key, value)?),
            "lambdas.count" => {
                lambda_grid.2 = Some(value.parse().map_err(|_| {
                    bad(ln, format!("lambdas.count: '{value}' is not an integer"))
                })?)
            }
            "profile" => {
                profile = value.parse().map_err(|e: String| bad(ln, e))?;
            }
            "tol" => tol = parse_f64(ln, key, value)?,
            "seed" => {
                seed = value
                    .parse()
                    .map_err(|_| bad(ln, format!("seed: '{value}' is not an integer")))?
            }
            "workers" => {
                workers = value
                    .parse()
                    .map_err(|_| bad(ln, format!("workers: '{value}' is not an integer")))?
            }
            "output_dir" => output_dir = PathBuf::from(value),
            _ if key.starts_with("phi.") => {
                phi_params.insert(key[4..].to_string(), parse_f64(ln, key, value)?);
            }
            _ if key.starts_with("f.") => {
                f_params.insert(key[2..].to_string(), parse_f64(ln, key, value)?);
            }
            other => return Err(bad(ln, format!("unknown key '{other}'"))),
        }
    }

    if let (Some(min), Some(max), Some(count)) = lambda_grid {
        if count < 1 || max < min {
            return Err(bad(0, "lambdas.min/max/count do not describe a grid"));
        }
        lambdas = (0..count)
            .map(|k| {
                if count == 1 {
                    min
                } else {
                    min + (max - min) * k as f64 / (count - 1) as f64
                }
            })
            .collect();
    }
    if lambdas.is_empty() {
        return Err(bad(0, "lambdas must be a nonempty list of positive numbers"));
    }
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(bad(0, "lambdas must all be positive"));
    }

    Ok(ExperimentConfig {
        phi_name: phi_name.ok_or_else(|| bad(0, "missing required key phi.name"))?,
        phi_params,
        f_name: f_name.ok_or_else(|| bad(0, "missing required key f.name"))?,
        f_params,
        dim,
        extent,
        resolution: resolution.ok_or_else(|| bad(0, "missing required key mesh.resolution"))?,
        lambdas,
        lambdas_relative,
        profile,
        tol,
        seed,
        workers,
        output_dir,
    })
}

/// A config resolved into concrete objects.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub phi: NFunction,
    pub f: Nonlinearity,
    pub mesh: Arc<Mesh>,
}

pub fn build_experiment(config: ExperimentConfig) -> Result<Experiment> {
    let phi = catalog(&config.phi_name, &config.phi_params).map_err(name_error)?;
    let f = match config.f_name.as_str() {
        // phipow couples the rhs to Phi, so it is built here rather than in model_f
        "phipow" => {
            let alpha = *config.f_params.get("alpha").unwrap_or(&0.5);
            let b = *config.f_params.get("b").unwrap_or(&1.0);
            phi_power_model(&phi, alpha, b)?
        }
        name => model_f(name, &config.f_params).map_err(name_error)?,
    };
    let mesh = make_mesh(config.dim, config.extent, config.resolution)?;
    Ok(Experiment {
        config,
        phi,
        f,
        mesh,
    })
}

fn name_error(e: CoreError) -> CliError {
    match e {
        CoreError::UnknownModel(name, known) => CliError::ConfigParse {
            line: 0,
            msg: format!("unknown model '{name}'; known models: {known}"),
        },
        other => CliError::Core(other),
    }
}
