//! Run manifest: inputs, analysis grid and engine settings of one run.

use std::path::{Path, PathBuf};

use phca::engine::Sampling;
use phca::scenario::AnalysisGrid;
use serde::{Deserialize, Serialize};

use crate::Failure;

fn random() -> Sampling {
    Sampling::Random
}

fn default_output() -> PathBuf {
    PathBuf::from("phca-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub feeder: PathBuf,
    pub load: PathBuf,
    pub solar: PathBuf,
    /// Builder configuration (TOML); defaults when absent.
    #[serde(default)]
    pub config: Option<PathBuf>,
    #[serde(default)]
    pub grid: AnalysisGrid,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "random")]
    pub sampling: Sampling,
    #[serde(default)]
    pub early_stop: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl RunManifest {
    /// Read a manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<RunManifest, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::schema(format!("{}: {e}", path.display())))?;
        let mut m: RunManifest =
            toml::from_str(&text).map_err(|e| Failure::schema(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut m.feeder, &mut m.load, &mut m.solar, &mut m.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(c) = m.config.as_mut() {
            if c.is_relative() {
                *c = base.join(&*c);
            }
        }
        Ok(m)
    }

    /// Every input readable and the output directory writable.
    pub fn check_paths(&self) -> Result<(), Failure> {
        let inputs = [Some(&self.feeder), Some(&self.load), Some(&self.solar), self.config.as_ref()];
        for p in inputs.into_iter().flatten() {
            std::fs::File::open(p).map_err(|e| Failure::schema(format!("{}: {e}", p.display())))?;
        }
        std::fs::create_dir_all(&self.output)
            .map_err(|e| Failure::schema(format!("{}: {e}", self.output.display())))?;
        let probe = self.output.join(".write-check");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Failure::schema(format!("{} not writable: {e}", self.output.display())))?;
        Ok(())
    }
}

/// `a:step:b` inclusive range or a comma-separated list.
pub fn parse_values(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if !(step > 0.0) || b < a {
                return Err(format!("bad range '{s}'"));
            }
            let n = ((b - a) / step + 1e-9).floor() as usize;
            // round away accumulated binary noise so 0.1:0.1:0.3 gives 0.3
            Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
        [_] => s.split(',').map(num).collect(),
        _ => Err(format!("expected a list or a:step:b, got '{s}'")),
    }
}

/// `a:b` inclusive hour window.
pub fn parse_hours(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got '{s}'"))?;
    let p = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("'{t}': {e}"));
    Ok((p(a)?, p(b)?))
}
