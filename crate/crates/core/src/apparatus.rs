//! Geometry and physical parameters of the eraser apparatus.
//!
//! Coordinate convention: the D₀ axis is `x`, slit A sits at `x = +d/2` and
//! slit B at `x = -d/2`, both a distance `l0` from the D₀ plane. With this
//! choice `Δt(x) > 0` for `x > 0` (the B path is longer there).
//!
//! Idler topology: slit A feeds BSA, which reflects to D4 and transmits via
//! mirror MA to the final splitter BS; slit B feeds BSB, which reflects to
//! D3 and transmits via MB to BS. BS mixes both arms onto D1 and D2.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const DEFAULT_CONFIG_JSON: &str = include_str!("../data/default_config.json");

pub const MIN_X_BINS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlitLabel {
    A,
    B,
}

impl SlitLabel {
    pub const ALL: [SlitLabel; 2] = [SlitLabel::A, SlitLabel::B];

    pub fn index(self) -> usize {
        match self {
            SlitLabel::A => 0,
            SlitLabel::B => 1,
        }
    }

    pub fn other(self) -> SlitLabel {
        match self {
            SlitLabel::A => SlitLabel::B,
            SlitLabel::B => SlitLabel::A,
        }
    }
}

impl fmt::Display for SlitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlitLabel::A => "A",
            SlitLabel::B => "B",
        })
    }
}

/// A detector. D0 is the only position-resolving one; the position of a D0
/// click is carried alongside the id where needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    D0,
    D1,
    D2,
    D3,
    D4,
}

impl DetectorId {
    pub const IDLERS: [DetectorId; 4] = [DetectorId::D1, DetectorId::D2, DetectorId::D3, DetectorId::D4];

    /// Index into per-idler-detector arrays (D1 → 0 … D4 → 3). `None` for D0.
    pub fn idler_index(self) -> Option<usize> {
        match self {
            DetectorId::D0 => None,
            DetectorId::D1 => Some(0),
            DetectorId::D2 => Some(1),
            DetectorId::D3 => Some(2),
            DetectorId::D4 => Some(3),
        }
    }

    pub fn from_idler_index(i: usize) -> DetectorId {
        Self::IDLERS[i]
    }

    pub fn is_idler(self) -> bool {
        self != DetectorId::D0
    }

    pub fn parse(s: &str) -> Option<DetectorId> {
        Some(match s {
            "D0" => DetectorId::D0,
            "D1" => DetectorId::D1,
            "D2" => DetectorId::D2,
            "D3" => DetectorId::D3,
            "D4" => DetectorId::D4,
            _ => return None,
        })
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorId::D0 => "D0",
            DetectorId::D1 => "D1",
            DetectorId::D2 => "D2",
            DetectorId::D3 => "D3",
            DetectorId::D4 => "D4",
        })
    }
}

/// Whether an idler photon from `slit` can physically reach `det`.
/// D3 only sees B-origin idlers and D4 only A-origin ones.
pub fn is_reachable(slit: SlitLabel, det: DetectorId) -> bool {
    matches!(
        (slit, det),
        (_, DetectorId::D1) | (_, DetectorId::D2) | (SlitLabel::B, DetectorId::D3) | (SlitLabel::A, DetectorId::D4)
    )
}

/// Raw, unvalidated run configuration as read from JSON. All lengths in
/// meters, all times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApparatusConfig {
    pub wavelength: f64,
    pub slit_separation: f64,
    /// Optional slit width; enables a sinc single-slit envelope on D₀.
    #[serde(default)]
    pub slit_width: Option<f64>,
    /// Close one slit (the single-slit arrangement).
    #[serde(default)]
    pub blocked_slit: Option<SlitLabel>,
    pub l0: f64,
    pub la: f64,
    pub lb: f64,
    /// Extra optical length beyond BSA/BSB for every reachable idler route.
    pub idler_segments: BTreeMap<SlitLabel, BTreeMap<DetectorId, f64>>,
    pub envelope_width: f64,
    pub detector_jitter: f64,
    pub coincidence_window: f64,
    pub pair_rate: f64,
    pub x_range: [f64; 2],
    pub x_bins: usize,
}

impl Default for ApparatusConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("bundled default config is valid JSON")
    }
}

impl ApparatusConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn effective_timing_width(&self) -> f64 {
        self.envelope_width.hypot(self.detector_jitter)
    }
}

/// Arrival-time difference at a D₀ position: exact value and the far-field
/// approximation `x·d/(L0·c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeDelta {
    pub exact: f64,
    pub far_field: f64,
}

/// A validated configuration with derived quantities cached. Immutable and
/// freely shareable across threads.
#[derive(Debug, Clone)]
pub struct Apparatus {
    config: ApparatusConfig,
    fringe_period: f64,
    /// [slit][idler index] total optical length slit → detector.
    idler_lengths: [[Option<f64>; 4]; 2],
}

/// Validate a raw configuration. Equivalent to [`Apparatus::validate`].
pub fn validate_config(raw: ApparatusConfig) -> Result<Apparatus> {
    Apparatus::validate(raw)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::NegativeParameter { name, value })
    }
}

impl Apparatus {
    pub fn validate(raw: ApparatusConfig) -> Result<Self> {
        positive("wavelength", raw.wavelength)?;
        positive("slit_separation", raw.slit_separation)?;
        if let Some(a) = raw.slit_width {
            positive("slit_width", a)?;
        }
        positive("l0", raw.l0)?;
        positive("la", raw.la)?;
        positive("lb", raw.lb)?;
        positive("envelope_width", raw.envelope_width)?;
        positive("detector_jitter", raw.detector_jitter)?;
        positive("coincidence_window", raw.coincidence_window)?;
        positive("pair_rate", raw.pair_rate)?;
        let [lo, hi] = raw.x_range;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidConfig(format!("x_range [{lo}, {hi}] is empty or not finite")));
        }
        if raw.x_bins < MIN_X_BINS {
            return Err(Error::InvalidConfig(format!("x_bins = {} is below the minimum of {MIN_X_BINS}", raw.x_bins)));
        }
        if raw.l0 >= raw.la || raw.l0 >= raw.lb {
            return Err(Error::DelayedChoiceOrderViolated(format!(
                "L0 = {} m must be shorter than LA = {} m and LB = {} m",
                raw.l0, raw.la, raw.lb
            )));
        }

        let app = Self::assume_valid(raw)?;

        let first_splitter = app.config.la.min(app.config.lb);
        for x in [lo, hi] {
            for slit in SlitLabel::ALL {
                if app.signal_path_length(slit, x) >= first_splitter {
                    return Err(Error::DelayedChoiceOrderViolated(format!(
                        "signal path at x = {x} m reaches D0 no earlier than the idler reaches its first splitter"
                    )));
                }
            }
        }
        for slit in SlitLabel::ALL {
            for det in DetectorId::IDLERS {
                if let Some(len) = app.idler_path_length(slit, det) {
                    if len <= app.config.l0 {
                        return Err(Error::DelayedChoiceOrderViolated(format!(
                            "idler path {slit}->{det} ({len} m) is not longer than L0"
                        )));
                    }
                }
            }
        }
        Ok(app)
    }

    /// Build derived quantities without the ordering checks. Route and
    /// segment checks still apply. Meant for tests that deliberately break
    /// the delayed-choice geometry.
    #[doc(hidden)]
    pub fn assume_valid(raw: ApparatusConfig) -> Result<Self> {
        let mut idler_lengths = [[None; 4]; 2];
        for (slit, legs) in &raw.idler_segments {
            for (&det, &len) in legs {
                if !is_reachable(*slit, det) {
                    return Err(Error::InvalidRoute { slit: *slit, det });
                }
                if !(len.is_finite() && len >= 0.0) {
                    return Err(Error::NegativeParameter { name: "idler_segments", value: len });
                }
            }
        }
        for slit in SlitLabel::ALL {
            let arm = match slit {
                SlitLabel::A => raw.la,
                SlitLabel::B => raw.lb,
            };
            for det in DetectorId::IDLERS {
                if !is_reachable(slit, det) {
                    continue;
                }
                let seg = raw
                    .idler_segments
                    .get(&slit)
                    .and_then(|m| m.get(&det))
                    .copied()
                    .ok_or(Error::UnreachableDetector { slit, det })?;
                idler_lengths[slit.index()][det.idler_index().unwrap()] = Some(arm + seg);
            }
        }
        let fringe_period = raw.wavelength * raw.l0 / raw.slit_separation;
        Ok(Apparatus { config: raw, fringe_period, idler_lengths })
    }

    pub fn config(&self) -> &ApparatusConfig {
        &self.config
    }

    /// Far-field fringe period λ·L0/d.
    pub fn fringe_period(&self) -> f64 {
        self.fringe_period
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.config.wavelength
    }

    pub fn slit_position(&self, slit: SlitLabel) -> f64 {
        let half = 0.5 * self.config.slit_separation;
        match slit {
            SlitLabel::A => half,
            SlitLabel::B => -half,
        }
    }

    pub fn is_slit_open(&self, slit: SlitLabel) -> bool {
        self.config.blocked_slit != Some(slit)
    }

    /// Exact Euclidean distance from `slit` to position `x` on the D₀ plane.
    pub fn signal_path_length(&self, slit: SlitLabel, x: f64) -> f64 {
        self.config.l0.hypot(x - self.slit_position(slit))
    }

    /// `r_B(x) − r_A(x)`, computed as `(r_B² − r_A²)/(r_B + r_A) = 2xd/(r_A + r_B)`
    /// to avoid cancellation between two nearly equal lengths.
    pub fn signal_path_difference(&self, x: f64) -> f64 {
        let sum = self.signal_path_length(SlitLabel::A, x) + self.signal_path_length(SlitLabel::B, x);
        2.0 * x * self.config.slit_separation / sum
    }

    pub fn arrival_time_delta(&self, x: f64) -> TimeDelta {
        TimeDelta {
            exact: self.signal_path_difference(x) / SPEED_OF_LIGHT,
            far_field: x * self.config.slit_separation / (self.config.l0 * SPEED_OF_LIGHT),
        }
    }

    /// Total optical length slit → idler detector, `None` if unreachable.
    pub fn idler_path_length(&self, slit: SlitLabel, det: DetectorId) -> Option<f64> {
        self.idler_lengths[slit.index()][det.idler_index()?]
    }

    /// Propagation delay slit → idler detector, `None` if unreachable.
    pub fn idler_path_delay(&self, slit: SlitLabel, det: DetectorId) -> Option<f64> {
        self.idler_path_length(slit, det).map(|l| l / SPEED_OF_LIGHT)
    }

    /// Delay from emission until the idler reaches its first beam splitter.
    pub fn first_splitter_delay(&self) -> f64 {
        self.config.la.min(self.config.lb) / SPEED_OF_LIGHT
    }

    pub fn bin_width(&self) -> f64 {
        let [lo, hi] = self.config.x_range;
        (hi - lo) / self.config.x_bins as f64
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let [lo, _] = self.config.x_range;
        let w = self.bin_width();
        (0..=self.config.x_bins).map(|i| lo + w * i as f64).collect()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        let [lo, _] = self.config.x_range;
        let w = self.bin_width();
        (0..self.config.x_bins).map(|i| lo + w * (i as f64 + 0.5)).collect()
    }

    /// Bin index of `x`, or `None` when outside the scan range.
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        let [lo, hi] = self.config.x_range;
        if !(lo..=hi).contains(&x) {
            return None;
        }
        let i = ((x - lo) / self.bin_width()) as usize;
        Some(i.min(self.config.x_bins - 1))
    }

    /// Same apparatus with both timing widths scaled so that
    /// `sqrt(τ² + σ_j²)` equals `sigma_eff`.
    pub fn with_effective_timing_width(&self, sigma_eff: f64) -> Result<Self> {
        positive("sigma_eff", sigma_eff)?;
        let mut cfg = self.config.clone();
        let scale = sigma_eff / cfg.effective_timing_width();
        cfg.envelope_width *= scale;
        cfg.detector_jitter *= scale;
        Self::validate(cfg)
    }

    pub fn with_coincidence_window(&self, window: f64) -> Result<Self> {
        let mut cfg = self.config.clone();
        cfg.coincidence_window = window;
        Self::validate(cfg)
    }
}
