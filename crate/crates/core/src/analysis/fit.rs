//! Fixed-period sinusoid fit for fringe visibility.
//!
//! Model `I(x) = E·(1 + V·cos(2πx/p + φ))` with `p` fixed. Each bin's
//! expected count is the model integrated over the bin, so the fit is
//! linear in `(E, E·V·cos φ, −E·V·sin φ)` and free of the bin-averaging
//! contrast loss that a center-sampled fit would show.

use std::f64::consts::PI;

use serde::Serialize;

use crate::coincidence::FringeHistogram;
use crate::error::{Error, Result};

pub const MIN_POPULATED_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    /// Fitted visibility, clamped to [0, 1].
    pub visibility: f64,
    /// Fringe phase φ in radians, (−π, π].
    pub phase: f64,
    pub visibility_se: f64,
    pub phase_se: f64,
    /// Fitted mean level E (counts per unit x).
    pub mean_level: f64,
    /// Pearson χ² per degree of freedom with Poisson variances.
    pub chi2_per_dof: f64,
    /// `(max − min)/(max + min)` of the raw bin contents.
    pub raw_contrast: f64,
    pub bins_used: usize,
}

fn solve3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if !det.is_normal() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    Some(inv)
}

/// Fit bin contents `values` (one per bin between consecutive `edges`),
/// using only bins whose centers lie in `[lo, hi]`.
pub fn fit_fringe(edges: &[f64], values: &[f64], period: f64, lo: f64, hi: f64) -> Result<VisibilityEstimate> {
    assert_eq!(edges.len(), values.len() + 1, "edges/values length mismatch");
    let q = 2.0 * PI / period;
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    for (e, &y) in edges.windows(2).zip(values) {
        let c = 0.5 * (e[0] + e[1]);
        if c < lo || c > hi {
            continue;
        }
        let basis = [e[1] - e[0], ((q * e[1]).sin() - (q * e[0]).sin()) / q, ((q * e[0]).cos() - (q * e[1]).cos()) / q];
        rows.push((basis, y));
    }
    let populated = rows.iter().filter(|(_, y)| *y > 0.0).count();
    if populated < MIN_POPULATED_BINS {
        return Err(Error::InsufficientData { populated, required: MIN_POPULATED_BINS });
    }

    let mut xtx = [[0.0; 3]; 3];
    let mut xty = [0.0; 3];
    for (b, y) in &rows {
        for i in 0..3 {
            xty[i] += b[i] * y;
            for j in 0..3 {
                xtx[i][j] += b[i] * b[j];
            }
        }
    }
    let inv = solve3(xtx).ok_or(Error::InsufficientData { populated, required: MIN_POPULATED_BINS })?;
    let beta: [f64; 3] = std::array::from_fn(|i| (0..3).map(|j| inv[i][j] * xty[j]).sum());

    // Sandwich covariance with Poisson variances max(y, 1).
    let mut meat = [[0.0; 3]; 3];
    let mut chi2 = 0.0;
    for (b, y) in &rows {
        let var = y.max(1.0);
        let yhat: f64 = (0..3).map(|i| b[i] * beta[i]).sum();
        chi2 += (y - yhat).powi(2) / var;
        for i in 0..3 {
            for j in 0..3 {
                meat[i][j] += b[i] * b[j] * var;
            }
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] =
                (0..3).flat_map(|k| (0..3).map(move |l| (k, l))).map(|(k, l)| inv[i][k] * meat[k][l] * inv[l][j]).sum();
        }
    }

    let [e, a, b] = beta;
    let r = a.hypot(b);
    let (visibility, phase) = if e > 0.0 { ((r / e).min(1.0), (-b).atan2(a)) } else { (0.0, 0.0) };
    let quad = |g: [f64; 3]| -> f64 {
        (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| g[i] * cov[i][j] * g[j])
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    };
    let (visibility_se, phase_se) = if e > 0.0 && r > 0.0 {
        let vse = quad([-r / (e * e), a / (r * e), b / (r * e)]);
        let pse = quad([0.0, b / (r * r), -a / (r * r)]).min(PI);
        (vse, pse)
    } else {
        (quad([0.0, 1.0 / e.abs().max(f64::MIN_POSITIVE), 0.0]), PI)
    };

    let used: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
    let (mn, mx) = used.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let raw_contrast = if mx + mn > 0.0 { (mx - mn) / (mx + mn) } else { 0.0 };
    let dof = rows.len().saturating_sub(3).max(1) as f64;

    Ok(VisibilityEstimate {
        visibility,
        phase,
        visibility_se,
        phase_se,
        mean_level: e,
        chi2_per_dof: chi2 / dof,
        raw_contrast,
        bins_used: rows.len(),
    })
}

/// Fit over the whole histogram.
pub fn estimate_visibility(hist: &FringeHistogram) -> Result<VisibilityEstimate> {
    estimate_visibility_in(hist, f64::NEG_INFINITY, f64::INFINITY)
}

/// Fit over the bins whose centers lie in `[lo, hi]`.
pub fn estimate_visibility_in(hist: &FringeHistogram, lo: f64, hi: f64) -> Result<VisibilityEstimate> {
    let values: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    fit_fringe(&hist.edges, &values, hist.fringe_period, lo, hi)
}

/// Signed phase difference wrapped to (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}
