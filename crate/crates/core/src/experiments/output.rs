//! Plain-text curve files and the JSON manifest describing them.

use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveAxis {
    N,
    K,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub file: String,
    pub ensemble: String,
    pub model: Option<String>,
    pub rho: f64,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub x_axis: CurveAxis,
    pub y: String,
    #[serde(skip)]
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// `x y` per line, shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (x, y) in &self.points {
            writeln!(s, "{x} {y}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveManifest {
    pub curves: Vec<Curve>,
}

/// Writes each curve under `dir` plus `manifest_name` listing them, and
/// returns every path written.
pub fn write_curves(dir: &Path, manifest_name: &str, curves: &[Curve]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(curves.len() + 1);
    for c in curves {
        let path = dir.join(&c.file);
        std::fs::write(&path, c.to_text())?;
        written.push(path);
    }
    let manifest = CurveManifest {
        curves: curves.to_vec(),
    };
    let path = dir.join(manifest_name);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    written.push(path);
    Ok(written)
}
