//! Run configuration: command-line flags overlaid by an optional TOML file.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thermoscheme::measure::{Observable, DEFAULT_MASS_BUDGET};
use thermoscheme::potential::PotentialSpec;
use thermoscheme::report::Condition;
use thermoscheme::scheme::SchemeParams;
use thermoscheme::symbolic::DEFAULT_WORD_BUDGET;
use thermoscheme::transfer::DEFAULT_NODES;
use thermoscheme::Error;
use toml::Spanned;

use crate::Flags;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// Fully resolved settings of one run. Every knob has a default, so an
/// empty configuration runs the doubling map at `t = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub scheme: String,
    pub scheme_params: SchemeParams,
    pub scheme_file: Option<PathBuf>,
    pub potential: PotentialSpec,
    #[serde(rename = "N")]
    pub n: usize,
    pub depth: usize,
    pub n_max: usize,
    pub nodes: usize,
    pub word_budget: u128,
    pub mass_budget: usize,
    pub t_grid: Vec<f64>,
    /// Subtracted as `s·τ` from the potential before evaluating pressure.
    pub shift_s: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub conditions: Vec<Condition>,
    /// Constant `c` for the P3 check on `φ − c`; the normalizing `s` when unset.
    pub p3_shift: Option<f64>,
    pub observables: Vec<Observable>,
    /// Observable whose correlation decay is sampled, if any.
    pub correlation: Option<Observable>,
    pub lag_max: usize,
    pub samples: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scheme: "doubling".into(),
            scheme_params: SchemeParams::new(),
            scheme_file: None,
            potential: PotentialSpec::geometric(0.0),
            n: 200,
            depth: 6,
            n_max: 6,
            nodes: DEFAULT_NODES,
            word_budget: DEFAULT_WORD_BUDGET,
            mass_budget: DEFAULT_MASS_BUDGET,
            t_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            shift_s: 0.0,
            seed: 0,
            out: None,
            format: Format::Csv,
            conditions: Condition::ALL.to_vec(),
            p3_shift: None,
            observables: Vec::new(),
            correlation: None,
            lag_max: 20,
            samples: 200_000,
        }
    }
}

/// `NAME` or `NAME:key=value,key=value`.
pub fn parse_scheme(s: &str) -> Result<(String, SchemeParams), Error> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::Config("empty scheme name".into()));
    }
    let mut params = SchemeParams::new();
    for kv in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("scheme parameter `{kv}`: expected key=value")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("scheme parameter `{k}`: `{v}` is not a number")))?;
        params.insert(k.trim().to_string(), v);
    }
    Ok((name.to_string(), params))
}

/// `a:b:step` (inclusive) or a comma-separated list.
pub fn parse_t_grid(s: &str) -> Result<Vec<f64>, Error> {
    let bad = |what: &str| Error::Config(format!("t grid `{s}`: {what}"));
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(&format!("`{v}` is not a number")));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || !(b >= a) {
            return Err(bad("expected start:end:step with end ≥ start and step > 0"));
        }
        let count = ((b - a) / h + 1e-9).floor() as usize;
        if count > 100_000 {
            return Err(bad("more than 100000 points"));
        }
        // Grid points are a + k·h rounded to 12 digits so decimal steps stay exact.
        return Ok((0..=count)
            .map(|k| ((a + k as f64 * h) * 1e12).round() / 1e12)
            .collect());
    }
    if parts.len() != 1 {
        return Err(bad("expected start:end:step or a comma-separated list"));
    }
    s.split(',').filter(|p| !p.trim().is_empty()).map(num).collect()
}

fn parse_format(s: &str) -> Result<Format, Error> {
    match s.trim().to_ascii_lowercase().as_str() {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        other => Err(Error::Config(format!("unknown format `{other}` (expected csv or json)"))),
    }
}

fn parse_conditions(s: &str) -> Result<Vec<Condition>, Error> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Condition::ALL.to_vec());
    }
    s.split(',').map(|c| c.parse()).collect()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scheme: Option<Spanned<String>>,
    scheme_file: Option<Spanned<String>>,
    potential: Option<Spanned<String>>,
    #[serde(rename = "N")]
    n: Option<Spanned<usize>>,
    depth: Option<Spanned<usize>>,
    n_max: Option<Spanned<usize>>,
    nodes: Option<Spanned<usize>>,
    word_budget: Option<Spanned<u64>>,
    mass_budget: Option<Spanned<usize>>,
    t_grid: Option<Spanned<TGrid>>,
    shift_s: Option<Spanned<f64>>,
    seed: Option<Spanned<u64>>,
    out: Option<Spanned<String>>,
    format: Option<Spanned<String>>,
    conditions: Option<Spanned<Vec<String>>>,
    p3_shift: Option<Spanned<f64>>,
    observables: Option<Spanned<Vec<String>>>,
    correlation: Option<Spanned<String>>,
    lag_max: Option<Spanned<usize>>,
    samples: Option<Spanned<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TGrid {
    Text(String),
    List(Vec<f64>),
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Attach the line of a spanned value to a parse error.
fn cite<T>(src: &str, field: &str, v: &Spanned<T>, e: Error) -> Error {
    let message = match e {
        Error::Config(m) => m,
        other => other.to_string(),
    };
    Error::ConfigAt {
        line: line_of(src, v.span().start),
        field: field.into(),
        message,
    }
}

impl RunConfig {
    pub fn from_flags(flags: &Flags) -> Result<Self, Error> {
        let mut c = RunConfig::default();
        if let Some(s) = &flags.scheme {
            (c.scheme, c.scheme_params) = parse_scheme(s)?;
        }
        if let Some(p) = &flags.scheme_file {
            c.scheme_file = Some(p.clone());
            c.scheme = "custom".into();
        }
        if let Some(p) = &flags.potential {
            c.potential = PotentialSpec::parse(p)?;
        }
        macro_rules! copy {
            ($($f:ident),*) => { $( if let Some(v) = flags.$f { c.$f = v; } )* };
        }
        copy!(n, depth, n_max, nodes, mass_budget, shift_s, seed, lag_max, samples);
        if let Some(b) = flags.word_budget {
            c.word_budget = b as u128;
        }
        if let Some(g) = &flags.t_grid {
            c.t_grid = parse_t_grid(g)?;
        }
        if let Some(o) = &flags.out {
            c.out = Some(o.clone());
        }
        if let Some(f) = &flags.format {
            c.format = parse_format(f)?;
        }
        if let Some(cs) = &flags.conditions {
            c.conditions = parse_conditions(cs)?;
        }
        c.p3_shift = flags.p3_shift;
        c.observables = flags
            .observable
            .iter()
            .map(|o| Observable::parse(o))
            .collect::<Result<_, _>>()?;
        if let Some(o) = &flags.correlation {
            c.correlation = Some(Observable::parse(o)?);
        }
        Ok(c)
    }

    /// Overlay the keys present in a TOML config file; file values win.
    pub fn overlay_file(&mut self, src: &str) -> Result<(), Error> {
        let f: FileConfig = toml::from_str(src).map_err(|e| Error::ConfigAt {
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            field: "<document>".into(),
            message: e.message().to_string(),
        })?;
        if let Some(v) = &f.scheme {
            (self.scheme, self.scheme_params) = parse_scheme(v.get_ref()).map_err(|e| cite(src, "scheme", v, e))?;
            self.scheme_file = None;
        }
        if let Some(v) = &f.scheme_file {
            self.scheme_file = Some(PathBuf::from(v.get_ref()));
            self.scheme = "custom".into();
        }
        if let Some(v) = &f.potential {
            self.potential = PotentialSpec::parse(v.get_ref()).map_err(|e| cite(src, "potential", v, e))?;
        }
        macro_rules! copy {
            ($($f:ident),*) => { $( if let Some(v) = &f.$f { self.$f = *v.get_ref(); } )* };
        }
        copy!(n, depth, n_max, nodes, mass_budget, shift_s, seed, lag_max, samples);
        if let Some(v) = &f.word_budget {
            self.word_budget = *v.get_ref() as u128;
        }
        if let Some(v) = &f.p3_shift {
            self.p3_shift = Some(*v.get_ref());
        }
        if let Some(v) = &f.t_grid {
            self.t_grid = match v.get_ref() {
                TGrid::Text(s) => parse_t_grid(s).map_err(|e| cite(src, "t_grid", v, e))?,
                TGrid::List(l) => l.clone(),
            };
        }
        if let Some(v) = &f.out {
            self.out = Some(PathBuf::from(v.get_ref()));
        }
        if let Some(v) = &f.format {
            self.format = parse_format(v.get_ref()).map_err(|e| cite(src, "format", v, e))?;
        }
        if let Some(v) = &f.conditions {
            self.conditions = v
                .get_ref()
                .iter()
                .map(|c| c.parse())
                .collect::<Result<_, _>>()
                .map_err(|e| cite(src, "conditions", v, e))?;
        }
        if let Some(v) = &f.observables {
            self.observables = v
                .get_ref()
                .iter()
                .map(|o| Observable::parse(o))
                .collect::<Result<_, _>>()
                .map_err(|e| cite(src, "observables", v, e))?;
        }
        if let Some(v) = &f.correlation {
            self.correlation = Some(Observable::parse(v.get_ref()).map_err(|e| cite(src, "correlation", v, e))?);
        }
        Ok(())
    }

    /// The potential with the `shift_s` correction applied.
    pub fn shifted_potential(&self) -> PotentialSpec {
        self.potential.with_shift(-self.shift_s)
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive = [("N", self.n), ("depth", self.depth), ("n_max", self.n_max), ("nodes", self.nodes)];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{k}` must be at least 1")));
        }
        if self.nodes < 4 {
            return Err(Error::Config("`nodes` must be at least 4".into()));
        }
        if !self.shift_s.is_finite() {
            return Err(Error::Config("`shift_s` must be finite".into()));
        }
        Ok(())
    }
}
