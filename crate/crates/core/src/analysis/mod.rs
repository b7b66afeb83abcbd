//! Visibility estimation, timing sweeps, the delayed-choice audit, the
//! stopwatch picture and the scenario/report drivers.

mod fit;
pub mod oracle;
pub mod report;
pub mod scenario;
pub mod stats;
mod sweep;

pub use fit::{
    estimate_visibility, estimate_visibility_in, fit_fringe, wrap_phase, VisibilityEstimate, MIN_POPULATED_BINS,
};
pub use scenario::{run_scenario, Scenario, ScenarioOptions, ScenarioReport};
pub use sweep::{
    default_sigma_grid, fit_window, reference_position, sweep_timing, SweepOptions, SweepParameter, SweepResult,
    SweepRow,
};

use crate::apparatus::{Apparatus, DetectorId, SlitLabel, SPEED_OF_LIGHT};
use crate::coincidence::{
    build_fringes, marginal_histogram, match_coincidences, nominal_offsets, CoincidenceRecord, FringeHistogram,
    FringeSet,
};
use crate::error::Result;
use crate::events::{run_simulation, EventStreams, SimOptions};

/// Output of one simulate → match → histogram run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub streams: EventStreams,
    pub records: Vec<CoincidenceRecord>,
    pub fringes: FringeSet,
    pub marginal: FringeHistogram,
}

pub fn run_pipeline(app: &Apparatus, events: usize, seed: u64, opts: &SimOptions) -> Result<PipelineOutput> {
    let streams = run_simulation(app, events, seed, opts)?;
    let records = match_coincidences(&streams, app.config().coincidence_window, &nominal_offsets(app))?;
    let fringes = build_fringes(&records, app);
    let marginal = marginal_histogram(&streams, app);
    Ok(PipelineOutput { streams, records, fringes, marginal })
}

/// Fit every conditional histogram and the marginal in place; histograms
/// with too few populated bins keep `fit = None`.
pub fn fit_all(out: &mut PipelineOutput) {
    for h in out.fringes.histograms.iter_mut() {
        h.fit = estimate_visibility(h).ok();
    }
    out.marginal.fit = estimate_visibility(&out.marginal).ok();
}

/// Fraction of pairs whose D₀ click precedes the idler's arrival at its
/// first beam splitter. `None` when there is nothing to audit.
pub fn delayed_choice_audit(streams: &EventStreams, app: &Apparatus) -> Option<f64> {
    let margin = app.first_splitter_delay();
    let (mut total, mut ok) = (0usize, 0usize);
    for c in &streams.d0 {
        if let Some(t_emit) = streams.emission_time(c.pair_id) {
            total += 1;
            ok += (c.t < t_emit + margin) as usize;
        }
    }
    (total > 0).then(|| ok as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopwatchReading {
    pub angle_a: f64,
    pub angle_b: f64,
    /// `angle_b − angle_a` modulo 360°, in [0, 360).
    pub difference: f64,
}

/// Hand positions (degrees) of a stopwatch with the given `period` started
/// at emission and stopped by the click from each slit.
pub fn stopwatch_angles(app: &Apparatus, x: f64, period: f64) -> StopwatchReading {
    let hand = |t: f64| 360.0 * (t / period).rem_euclid(1.0);
    let ta = app.signal_path_length(SlitLabel::A, x) / SPEED_OF_LIGHT;
    let tb = app.signal_path_length(SlitLabel::B, x) / SPEED_OF_LIGHT;
    let dt = app.arrival_time_delta(x).exact;
    let mut difference = hand(dt);
    if difference >= 360.0 {
        difference -= 360.0;
    }
    StopwatchReading { angle_a: hand(ta), angle_b: hand(tb), difference }
}

/// Absolute fitted phase difference between the D1 and D2 patterns, in [0, π].
pub fn anti_phase(fringes: &FringeSet) -> Option<f64> {
    let p1 = fringes.get(DetectorId::D1).fit?.phase;
    let p2 = fringes.get(DetectorId::D2).fit?.phase;
    Some(wrap_phase(p1 - p2).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::ApparatusConfig;

    fn app() -> Apparatus {
        Apparatus::validate(ApparatusConfig::default()).unwrap()
    }

    #[test]
    fn audit_default_and_empty() {
        let a = app();
        let s = run_simulation(&a, 10_000, 1, &SimOptions::default()).unwrap();
        assert_eq!(delayed_choice_audit(&s, &a), Some(1.0));
        assert_eq!(delayed_choice_audit(&EventStreams::default(), &a), None);
        // clicks without emission times cannot be audited
        let bare = EventStreams::from_clicks(s.d0.clone(), s.idler.clone());
        assert_eq!(delayed_choice_audit(&bare, &a), None);
    }

    #[test]
    fn audit_with_zero_margin_is_about_half() {
        let mut cfg = ApparatusConfig::default();
        cfg.la = cfg.l0;
        cfg.lb = cfg.l0;
        let a = Apparatus::assume_valid(cfg).unwrap();
        let s = run_simulation(&a, 20_000, 2, &SimOptions::default()).unwrap();
        let f = delayed_choice_audit(&s, &a).unwrap();
        // 5σ binomial band around 1/2
        assert!((f - 0.5).abs() < 5.0 * (0.25f64 / 20_000.0).sqrt(), "f = {f}");
    }

    #[test]
    fn stopwatch() {
        let a = app();
        assert_eq!(stopwatch_angles(&a, 0.0, 1e-12).difference, 0.0);
        let x = 2e-3;
        let dt = a.arrival_time_delta(x).exact;
        let r = stopwatch_angles(&a, x, 8.0 * dt);
        assert!((r.difference - 45.0).abs() < 1e-9);
        let r4 = stopwatch_angles(&a, x, 4.0 * dt);
        assert!((r4.difference - 90.0).abs() < 1e-9);
        // hand difference agrees with the independently read hands
        let from_hands = (r.angle_b - r.angle_a).rem_euclid(360.0);
        assert!((from_hands - r.difference).abs() < 1e-6);
        for x in [1e-4, 1.3e-3, 4.9e-3] {
            let p = 3.3e-15;
            let sum = stopwatch_angles(&a, x, p).difference + stopwatch_angles(&a, -x, p).difference;
            assert!(sum.rem_euclid(360.0) < 1e-9 || (sum.rem_euclid(360.0) - 360.0).abs() < 1e-9);
        }
    }
}
