//! Timing sweeps: rerun the full pipeline while the effective timing width
//! (or the coincidence window) moves across the reference Δt.

use std::io::Write;

use serde::Serialize;

use super::fit::{estimate_visibility, estimate_visibility_in};
use super::run_pipeline;
use super::stats::spearman;
use crate::amplitudes::{Coherence, Optics, TimingModel};
use crate::apparatus::{Apparatus, DetectorId};
use crate::error::{Error, Result};
use crate::events::SimOptions;
use crate::rng::{derive_seed, domain};

pub const MIN_GRID_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    SigmaEff,
    Window,
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub events: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    /// Reference position; defaults to [`reference_position`].
    pub x_ref: Option<f64>,
    /// Width of the local fit window around `x_ref`, in fringe periods.
    pub fit_periods: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { events: 1_000_000, seed: 0, workers: None, x_ref: None, fit_periods: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: f64,
    pub sigma_eff: f64,
    pub window: f64,
    /// Local-window visibility per idler detector (D1…D4); NaN if unfittable.
    pub visibility: [f64; 4],
    pub visibility_se: [f64; 4],
    pub phase: [f64; 4],
    /// Full-range visibility of the unconditioned D₀ pattern.
    pub marginal_visibility: f64,
    pub coincidences: usize,
    pub true_pairs: usize,
    pub distinguishability_tv: f64,
    pub distinguishability_q: f64,
    pub analytic_visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub x_ref: f64,
    pub delta_t_ref: f64,
    pub fit_range: [f64; 2],
    pub rows: Vec<SweepRow>,
    /// Spearman correlation between the swept parameter and V̂(D1).
    pub spearman_d1: f64,
    /// No step decreases V̂(D1) by more than 3 combined standard errors.
    pub monotone_within_noise: bool,
}

/// Bin center in the outer part of the scan (half to three quarters of the
/// reach, so a few-period fit window stays clear of the center) where
/// `|sin(kΔr)|` is largest, i.e. where the D1/D2 cross term is strongest.
/// Restricted to the central single-slit lobe when a slit width is configured.
pub fn reference_position(app: &Apparatus) -> f64 {
    let c = app.config();
    let [lo, hi] = c.x_range;
    let reach = lo.abs().max(hi.abs());
    let lobe = c.slit_width.map_or(f64::INFINITY, |a| 0.5 * c.wavelength * c.l0 / a);
    let k = app.wavenumber();
    let mut best: Option<(f64, f64)> = None;
    for x in app.bin_centers() {
        let ax = x.abs();
        if ax < 0.5 * reach || ax > 0.75 * reach || ax > lobe {
            continue;
        }
        // prefer the positive side, then the strongest cross term
        let score = (k * app.signal_path_difference(x)).sin().abs() + if x > 0.0 { 1e-9 } else { 0.0 };
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, x));
        }
    }
    best.map_or(0.5 * (lo + hi), |(_, x)| x)
}

/// Local fit window of `periods` fringe periods centered on `x_ref`.
pub fn fit_window(app: &Apparatus, x_ref: f64, periods: f64) -> [f64; 2] {
    let half = 0.5 * periods * app.fringe_period();
    [x_ref - half, x_ref + half]
}

/// `points` log-spaced σ_eff values spanning `[Δt(x_ref)/10, 10·Δt(x_ref)]`.
pub fn default_sigma_grid(app: &Apparatus, x_ref: f64, points: usize) -> Vec<f64> {
    let dt = app.arrival_time_delta(x_ref).exact.abs();
    let (a, b) = ((dt / 10.0).ln(), (dt * 10.0).ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points.max(2) - 1) as f64).exp()).collect()
}

pub fn sweep_timing(
    app: &Apparatus,
    parameter: SweepParameter,
    grid: &[f64],
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if grid.len() < MIN_GRID_POINTS {
        return Err(Error::InvalidConfig(format!(
            "sweep grid needs at least {MIN_GRID_POINTS} points, got {}",
            grid.len()
        )));
    }
    let mut grid = grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let x_ref = opts.x_ref.unwrap_or_else(|| reference_position(app));
    let fit_range = fit_window(app, x_ref, opts.fit_periods);
    let delta_t_ref = app.arrival_time_delta(x_ref).exact;
    let sim = SimOptions { workers: opts.workers, ..SimOptions::default() };

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &value) in grid.iter().enumerate() {
        let point = match parameter {
            SweepParameter::SigmaEff => app.with_effective_timing_width(value)?,
            SweepParameter::Window => app.with_coincidence_window(value)?,
        };
        let seed = derive_seed(opts.seed, domain::SWEEP, i as u64);
        let out = run_pipeline(&point, opts.events, seed, &sim)?;

        let mut visibility = [f64::NAN; 4];
        let mut visibility_se = [f64::NAN; 4];
        let mut phase = [f64::NAN; 4];
        for (k, det) in DetectorId::IDLERS.into_iter().enumerate() {
            if let Ok(est) = estimate_visibility_in(out.fringes.get(det), fit_range[0], fit_range[1]) {
                visibility[k] = est.visibility;
                visibility_se[k] = est.visibility_se;
                phase[k] = est.phase;
            }
        }
        let marginal_visibility = estimate_visibility(&out.marginal).map_or(f64::NAN, |e| e.visibility);

        let timing = TimingModel::from_apparatus(&point);
        let optics = Optics::with_default_convention(point.clone());
        let sep = optics.branch_time_separation(x_ref, DetectorId::D1);
        let dist = timing.distinguishability(sep);
        rows.push(SweepRow {
            parameter: value,
            sigma_eff: timing.sigma_eff(),
            window: point.config().coincidence_window,
            visibility,
            visibility_se,
            phase,
            marginal_visibility,
            coincidences: out.records.len(),
            true_pairs: out.records.iter().filter(|r| r.true_pair).count(),
            distinguishability_tv: dist.total_variation,
            distinguishability_q: dist.quantum,
            analytic_visibility: optics.analytic_visibility(DetectorId::D1, &Coherence::Temporal(timing), x_ref),
        });
    }

    let xs: Vec<f64> = rows.iter().map(|r| r.parameter).collect();
    let v1: Vec<f64> = rows.iter().map(|r| r.visibility[0]).collect();
    let spearman_d1 = spearman(&xs, &v1);
    let monotone_within_noise = rows.windows(2).all(|w| {
        let noise = 3.0 * w[0].visibility_se[0].hypot(w[1].visibility_se[0]);
        w[1].visibility[0] >= w[0].visibility[0] - noise.max(1e-12)
    });
    Ok(SweepResult { parameter, x_ref, delta_t_ref, fit_range, rows, spearman_d1, monotone_within_noise })
}

impl SweepResult {
    /// CSV with one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "parameter,sigma_eff,window,v_d1,v_d2,v_d3,v_d4,se_d1,phase_d1,phase_d2,v_marginal,coincidences,true_pairs,d_tv,d_q,v_analytic"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.9},{:.9},{:.9}",
                r.parameter,
                r.sigma_eff,
                r.window,
                r.visibility[0],
                r.visibility[1],
                r.visibility[2],
                r.visibility[3],
                r.visibility_se[0],
                r.phase[0],
                r.phase[1],
                r.marginal_visibility,
                r.coincidences,
                r.true_pairs,
                r.distinguishability_tv,
                r.distinguishability_q,
                r.analytic_visibility
            )?;
        }
        Ok(())
    }

    /// Long-format plot data (`series,x,y`).
    pub fn write_plot_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "series,x,y")?;
        let ratio = |r: &SweepRow| r.sigma_eff / self.delta_t_ref.abs();
        for r in &self.rows {
            for (k, det) in DetectorId::IDLERS.iter().enumerate() {
                writeln!(w, "V_{det},{:.6e},{:.6}", ratio(r), r.visibility[k])?;
            }
            writeln!(w, "V_analytic,{:.6e},{:.9}", ratio(r), r.analytic_visibility)?;
            writeln!(w, "D_tv,{:.6e},{:.9}", ratio(r), r.distinguishability_tv)?;
            writeln!(w, "V_marginal,{:.6e},{:.6}", ratio(r), r.marginal_visibility)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::ApparatusConfig;

    fn app() -> Apparatus {
        Apparatus::validate(ApparatusConfig::default()).unwrap()
    }

    #[test]
    fn reference_position_is_in_fringe_rich_region() {
        let a = app();
        let x = reference_position(&a);
        assert!((2.5e-3..=3.75e-3).contains(&x), "x_ref = {x}");
        assert!((a.wavenumber() * a.signal_path_difference(x)).sin().abs() > 0.95);
    }

    #[test]
    fn grid_is_log_spaced_over_two_decades() {
        let a = app();
        let x = reference_position(&a);
        let g = default_sigma_grid(&a, x, 10);
        let dt = a.arrival_time_delta(x).exact;
        assert!((g[0] / (dt / 10.0) - 1.0).abs() < 1e-12);
        assert!((g[9] / (dt * 10.0) - 1.0).abs() < 1e-12);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-9));
    }

    #[test]
    fn short_grid_rejected() {
        let a = app();
        assert!(sweep_timing(&a, SweepParameter::SigmaEff, &[1e-15; 4], &SweepOptions::default()).is_err());
    }

    #[test]
    fn small_sweep_analytic_column_is_gamma() {
        let a = app();
        let opts = SweepOptions { events: 20_000, seed: 3, ..SweepOptions::default() };
        let x = reference_position(&a);
        let grid = default_sigma_grid(&a, x, 5);
        let res = sweep_timing(&a, SweepParameter::SigmaEff, &grid, &opts).unwrap();
        let dt = a.arrival_time_delta(x).exact;
        for row in &res.rows {
            let gamma = (-dt * dt / (8.0 * row.sigma_eff * row.sigma_eff)).exp();
            assert!((row.analytic_visibility - gamma).abs() < 1e-6);
        }
        assert_eq!(res.rows.len(), 5);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 6);
    }
}
