//! Run configuration: a `key = value` file, overridden by command-line flags.
//!
//! ```text
//! # lines starting with '#' are comments
//! n = 3
//! gamma = 0.5
//! rho_grid = log:0.01:10:50     # also lin:a:b:count or a list 0.5,1,2
//! y_grid = 0.1,0.5,1
//! t_grid = lin:0.5:2:4
//! function = gaussian:1         # gaussian:W, bump:R, constant:C
//! profile = sinh(r)             # warping function for heat-table
//! format = csv                  # or json
//! output = table.csv
//! gate = 1e-2                   # frac-apply pass threshold
//! pv_inner_radius = 0.01
//! abs_tol = 1e-13
//! rel_tol = 1e-10
//! max_nodes = 4000
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use hypfrac::operators::{QuadratureSpec, RadialFunction};

/// A failure mapped onto the exit-code contract.
#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem (exit 2).
    Config(String),
    /// Numerical nonconvergence (exit 3).
    Numerical(String),
    /// A verification gate was missed (exit 1).
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<hypfrac::Error> for CliError {
    fn from(e: hypfrac::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Settings shared by all commands, after merging file and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dim: usize,
    pub gamma: f64,
    pub quadrature: QuadratureSpec,
    pub rho_grid: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub function: String,
    pub profile: String,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub gate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            gamma: 0.5,
            quadrature: QuadratureSpec::default(),
            rho_grid: vec![0.5, 1.0, 2.0],
            y_grid: vec![0.1, 0.5, 1.0, 2.0],
            t_grid: vec![0.1, 1.0],
            function: "gaussian:1".into(),
            profile: "sinh(r)".into(),
            output: None,
            format: Format::Csv,
            gate: 1e-2,
        }
    }
}

/// Parses `key = value` lines; later keys win.
pub fn parse_key_values(src: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in src.lines().enumerate() {
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::default();
        for (k, v) in parse_key_values(&src)? {
            c.set(&k, &v)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> CliResult<()> {
        match key {
            "n" | "dim" => self.dim = num(key, v)?,
            "gamma" => self.gamma = num(key, v)?,
            "rho_grid" => self.rho_grid = parse_grid(v)?,
            "y_grid" => self.y_grid = parse_grid(v)?,
            "t_grid" => self.t_grid = parse_grid(v)?,
            "function" => self.function = v.to_string(),
            "profile" => self.profile = v.to_string(),
            "output" => self.output = Some(PathBuf::from(v)),
            "format" => self.format = parse_format(v)?,
            "gate" => self.gate = num(key, v)?,
            "pv_inner_radius" => self.quadrature.pv_inner_radius = num(key, v)?,
            "outer_cutoff" => self.quadrature.outer_cutoff = num(key, v)?,
            "abs_tol" => self.quadrature.abs_tol = num(key, v)?,
            "rel_tol" => self.quadrature.rel_tol = num(key, v)?,
            "max_nodes" => self.quadrature.max_nodes = num(key, v)?,
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Grids nonempty and finite, quadrature sane.
    pub fn validate(&self) -> CliResult<()> {
        for (name, g) in [("rho", &self.rho_grid), ("y", &self.y_grid), ("t", &self.t_grid)] {
            if g.is_empty() || g.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config(format!("{name} grid must be nonempty and finite")));
            }
        }
        self.quadrature.validate()?;
        Ok(())
    }
}

pub fn parse_format(v: &str) -> CliResult<Format> {
    match v {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(CliError::Config(format!("unknown format '{v}' (csv or json)"))),
    }
}

/// `log:a:b:n`, `lin:a:b:n` or a comma-separated list.
pub fn parse_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Config(format!("bad grid '{spec}'"));
    let parts: Vec<&str> = spec.split(':').collect();
    let g = match parts.as_slice() {
        [kind @ ("log" | "lin"), a, b, n] => {
            let a: f64 = a.parse().map_err(|_| bad())?;
            let b: f64 = b.parse().map_err(|_| bad())?;
            let n: usize = n.parse().map_err(|_| bad())?;
            if n == 0 || (*kind == "log" && !(a > 0.0 && b > 0.0)) {
                return Err(bad());
            }
            if *kind == "log" {
                hypfrac::heat2poisson::log_grid(a, b, n)
            } else if n == 1 {
                vec![a]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
        }
        [list] => list
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<CliResult<Vec<f64>>>()?,
        _ => return Err(bad()),
    };
    if g.is_empty() {
        return Err(bad());
    }
    Ok(g)
}

/// `gaussian:W`, `bump:R` or `constant:C`.
pub fn parse_function(spec: &str) -> CliResult<RadialFunction> {
    let (name, arg) = spec.split_once(':').unwrap_or((spec, "1"));
    let x: f64 = arg
        .parse()
        .map_err(|_| CliError::Config(format!("bad function parameter in '{spec}'")))?;
    let positive = |x: f64| {
        if x > 0.0 {
            Ok(x)
        } else {
            Err(CliError::Config(format!("'{spec}' needs a positive parameter")))
        }
    };
    match name {
        "gaussian" => Ok(RadialFunction::gaussian(positive(x)?)),
        "bump" => Ok(RadialFunction::bump(positive(x)?)),
        "constant" => Ok(RadialFunction::constant(x)),
        _ => Err(CliError::Config(format!(
            "unknown function '{name}' (gaussian, bump or constant)"
        ))),
    }
}
