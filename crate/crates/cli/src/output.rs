//! Artifact writing. CSV files open with `#` comment lines carrying the
//! code version and truncation; JSON documents carry the same under
//! `"meta"`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version and truncation parameters embedded in every artifact.
pub fn meta(cfg: &RunConfig, command: &str) -> Value {
    json!({
        "program": "thermoscheme",
        "version": VERSION,
        "command": command,
        "scheme": cfg.scheme,
        "scheme_params": cfg.scheme_params,
        "scheme_file": cfg.scheme_file,
        "potential": cfg.potential.to_string(),
        "shift_s": cfg.shift_s,
        "truncation": {
            "N": cfg.n,
            "depth": cfg.depth,
            "n_max": cfg.n_max,
            "nodes": cfg.nodes,
        },
        "seed": cfg.seed,
    })
}

fn header(cfg: &RunConfig, command: &str, effective_n: usize) -> String {
    format!(
        "# thermoscheme {VERSION} {command}\n# scheme={} potential={} shift_s={} N={} depth={} n_max={} nodes={} seed={}\n",
        cfg.scheme_file
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| cfg.scheme.clone()),
        cfg.potential,
        cfg.shift_s,
        effective_n,
        cfg.depth,
        cfg.n_max,
        cfg.nodes,
        cfg.seed
    )
}

/// Shortest round-trip decimal; non-finite values as `inf`, `-inf`, `nan`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:?}")
    }
}

/// Where artifacts go: a directory given by `--out`, or stdout for the
/// JSON document when unset.
pub struct Sink {
    dir: Option<PathBuf>,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: Option<&Path>) -> Result<Self, CliError> {
        if let Some(d) = dir {
            fs::create_dir_all(d).map_err(|e| CliError::Io(d.to_path_buf(), e))?;
        }
        Ok(Sink {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| CliError::Io(path.clone(), e))?;
        f.write_all(bytes).map_err(|e| CliError::Io(path.clone(), e))?;
        self.written.push(path);
        Ok(())
    }

    /// Write a CSV file with the standard header comments.
    pub fn csv(
        &mut self,
        name: &str,
        cfg: &RunConfig,
        command: &str,
        effective_n: usize,
        columns: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        if self.dir.is_none() {
            return Ok(());
        }
        let mut buf = header(cfg, command, effective_n).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            let row_err = |e: csv::Error| CliError::Io(PathBuf::from(name), e.into());
            w.write_record(columns).map_err(row_err)?;
            for r in rows {
                w.write_record(&r).map_err(row_err)?;
            }
            w.flush().map_err(|e| CliError::Io(PathBuf::from(name), e))?;
        }
        self.write(name, &buf)
    }

    /// Write a JSON document to `name`, or print it when there is no
    /// output directory.
    pub fn json<T: Serialize>(&mut self, name: &str, doc: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(doc).expect("serializable document");
        text.push('\n');
        if self.dir.is_none() {
            print!("{text}");
            return Ok(());
        }
        self.write(name, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(2.0), "2.0");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(num(f64::NAN), "nan");
        let v = std::f64::consts::LN_2;
        assert_eq!(num(v).parse::<f64>().unwrap(), v);
    }
}
