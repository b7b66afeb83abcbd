//! Report files: run manifest, visibility tables and plot-ready CSV.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::VisibilityEstimate;
use crate::amplitudes::JointDistribution;
use crate::apparatus::{ApparatusConfig, DetectorId};
use crate::coincidence::{FringeHistogram, FringeSet};
use crate::error::Result;

pub const TOOL_NAME: &str = "dcqe";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the compact JSON form of the config.
pub fn config_hash(config: &ApparatusConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub events: usize,
    pub workers: Option<usize>,
    pub config_sha256: String,
    pub config: ApparatusConfig,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

impl Manifest {
    pub fn new(
        command: impl Into<String>,
        config: &ApparatusConfig,
        seed: u64,
        events: usize,
        workers: Option<usize>,
    ) -> Self {
        Manifest {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: command.into(),
            seed,
            events,
            workers,
            config_sha256: config_hash(config),
            config: config.clone(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }
}

/// Create `dir/name`, run `f` on a buffered writer, and return the path.
pub fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(path)
}

/// `detector,visibility,visibility_se,phase,phase_se,raw_contrast,chi2_per_dof,counts,analytic_visibility`
pub fn write_visibility_csv<W: Write + ?Sized>(
    w: &mut W,
    rows: &[(DetectorId, Option<VisibilityEstimate>, u64, f64)],
) -> Result<()> {
    writeln!(
        w,
        "detector,visibility,visibility_se,phase,phase_se,raw_contrast,chi2_per_dof,counts,analytic_visibility"
    )?;
    for (det, est, counts, analytic) in rows {
        match est {
            Some(e) => writeln!(
                w,
                "{det},{:.6},{:.6},{:.6},{:.6},{:.6},{:.4},{counts},{:.6}",
                e.visibility, e.visibility_se, e.phase, e.phase_se, e.raw_contrast, e.chi2_per_dof, analytic
            )?,
            None => writeln!(w, "{det},,,,,,,{counts},{analytic:.6}")?,
        }
    }
    Ok(())
}

/// Long-format plot data: measured counts per bin center and the analytic
/// expectation scaled to the same total.
pub fn write_fringe_plot_csv<W: Write + ?Sized>(
    w: &mut W,
    fringes: &FringeSet,
    marginal: Option<&FringeHistogram>,
    dist: &JointDistribution,
) -> Result<()> {
    writeln!(w, "series,x,y")?;
    for h in &fringes.histograms {
        let expected = dist.bin_probabilities(h.detector);
        let psum: f64 = expected.iter().sum();
        let scale = if psum > 0.0 { h.total() as f64 / psum } else { 0.0 };
        for ((x, c), p) in h.bin_centers().iter().zip(&h.counts).zip(&expected) {
            writeln!(w, "{}_counts,{x:.6e},{c}", h.detector)?;
            writeln!(w, "{}_analytic,{x:.6e},{:.4}", h.detector, p * scale)?;
        }
    }
    if let Some(m) = marginal {
        for (x, c) in m.bin_centers().iter().zip(&m.counts) {
            writeln!(w, "D0_counts,{x:.6e},{c}")?;
        }
    }
    Ok(())
}
