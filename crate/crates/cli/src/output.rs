use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use irw_core::SolveTrace;

/// Everything needed to replay a run. Contains no timestamps or output
/// paths, so identical invocations produce identical manifests.
#[derive(Serialize)]
pub struct RunManifest<'a, F: Serialize> {
    pub subcommand: &'a str,
    pub flags: &'a F,
    pub seed: u64,
    pub version: &'a str,
    /// SHA-256 of every input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self { root: root.to_path_buf() })
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place, so readers never see a partial file.
    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let target = self.root.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        tmp.persist(&target)
            .with_context(|| format!("writing {}", target.display()))?;
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

pub fn p_label(p: f64) -> String {
    format!("p={p}")
}

pub fn trace_file_name(p: f64) -> String {
    format!("trace_p{p}.json")
}

/// Column per trace, row per iteration; traces that stopped early leave
/// their remaining cells empty.
pub fn trajectory_csv(runs: &[(f64, &SolveTrace)], log10: bool) -> String {
    let mut out = String::from("iter");
    for (p, _) in runs {
        out.push(',');
        out.push_str(&p_label(*p));
    }
    out.push('\n');
    let rows = runs.iter().map(|(_, t)| t.objectives.len()).max().unwrap_or(0);
    for i in 0..rows {
        out.push_str(&i.to_string());
        for (_, t) in runs {
            out.push(',');
            if let Some(v) = t.objectives.get(i) {
                let v = if log10 { v.log10() } else { *v };
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}
