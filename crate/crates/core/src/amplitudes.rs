//! Path amplitudes and joint detection probabilities for the entangled pair.
//!
//! The two-branch state is `(|A⟩|A'⟩ + |B⟩|B'⟩)/√2`. The signal amplitude for
//! branch `s` at D₀ position `x` is a unit phasor `e^{ik r_s(x)}` (times an
//! optional single-slit envelope), and the idler amplitude is the product of
//! beam-splitter and mirror factors along the unique route to the detector.
//! Temporal distinguishability enters through `γ`, which multiplies only the
//! interference cross term.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use statrs::function::erf::erf;

use crate::apparatus::{is_reachable, Apparatus, DetectorId, SlitLabel};
use crate::error::{Error, Result};

pub type ComplexAmplitude = Complex64;

/// 2×2 amplitude matrix indexed `[output][input]`.
pub type SplitterMatrix = [[Complex64; 2]; 2];

/// Sub-cells per histogram bin used for normalization and sampling.
pub const GRID_OVERSAMPLE: usize = 16;

const UNITARITY_TOL: f64 = 1e-12;

/// Largest entry of `U†U − 1`.
pub fn unitarity_deviation(u: &SplitterMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                acc += u[k][i].conj() * u[k][j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).norm());
        }
    }
    worst
}

/// Beam-splitter and mirror phase conventions.
///
/// Port assignment: BSA and BSB take the idler on input 0; output 0 is the
/// reflected port (toward D4 and D3), output 1 the transmitted port (toward
/// MA and MB). The final splitter BS takes the MA arm on input 0 and the MB
/// arm on input 1; output 0 is D1, output 1 is D2.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConvention {
    pub bsa: SplitterMatrix,
    pub bsb: SplitterMatrix,
    pub bs: SplitterMatrix,
    pub mirror_a: Complex64,
    pub mirror_b: Complex64,
}

impl Default for PhaseConvention {
    /// Symmetric splitters (`i` on reflection, `1` on transmission) and a
    /// `−1` phase per mirror.
    fn default() -> Self {
        let s = Self::symmetric_splitter();
        PhaseConvention { bsa: s, bsb: s, bs: s, mirror_a: -Complex64::ONE, mirror_b: -Complex64::ONE }
    }
}

impl PhaseConvention {
    pub fn symmetric_splitter() -> SplitterMatrix {
        let t = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let r = Complex64::new(0.0, FRAC_1_SQRT_2);
        // [output][input]: input 0 reflects to output 0, transmits to output 1.
        [[r, t], [t, r]]
    }

    /// Real Hadamard-type splitter `[[1, 1], [1, −1]]/√2`.
    pub fn hadamard_splitter() -> SplitterMatrix {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        [[h, h], [h, -h]]
    }

    /// General 50-50 unitary `[[e^{ia}, e^{ib}], [e^{ic}, −e^{i(b+c−a)}]]/√2`.
    pub fn general_splitter(a: f64, b: f64, c: f64) -> SplitterMatrix {
        let p = |phi: f64| Complex64::from_polar(FRAC_1_SQRT_2, phi);
        [[p(a), p(b)], [p(c), -p(b + c - a)]]
    }

    pub fn validate(&self) -> Result<()> {
        for u in [&self.bsa, &self.bsb, &self.bs] {
            let dev = unitarity_deviation(u);
            if dev > UNITARITY_TOL {
                return Err(Error::NonUnitary(dev));
            }
        }
        for m in [self.mirror_a, self.mirror_b] {
            if (m.norm() - 1.0).abs() > UNITARITY_TOL {
                return Err(Error::NonUnitary((m.norm() - 1.0).abs()));
            }
        }
        Ok(())
    }

    /// Route factor (without propagation phase) from `slit` to `det`.
    pub fn route_factor(&self, slit: SlitLabel, det: DetectorId) -> Complex64 {
        if !is_reachable(slit, det) {
            return Complex64::ZERO;
        }
        let (first, mirror, bs_in) = match slit {
            SlitLabel::A => (&self.bsa, self.mirror_a, 0),
            SlitLabel::B => (&self.bsb, self.mirror_b, 1),
        };
        match det {
            DetectorId::D3 | DetectorId::D4 => first[0][0],
            DetectorId::D1 => first[1][0] * mirror * self.bs[0][bs_in],
            DetectorId::D2 => first[1][0] * mirror * self.bs[1][bs_in],
            DetectorId::D0 => Complex64::ZERO,
        }
    }
}

/// Photon envelope width and detector jitter, combined in quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingModel {
    pub envelope_width: f64,
    pub detector_jitter: f64,
}

/// Which-path distinguishability carried by arrival times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distinguishability {
    /// Total-variation distance between the two recorded arrival-time densities.
    pub total_variation: f64,
    /// In-principle bound `sqrt(1 − γ²)`.
    pub quantum: f64,
}

impl TimingModel {
    pub fn new(envelope_width: f64, detector_jitter: f64) -> Result<Self> {
        for (name, v) in [("envelope_width", envelope_width), ("detector_jitter", detector_jitter)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NegativeParameter { name, value: v });
            }
        }
        Ok(TimingModel { envelope_width, detector_jitter })
    }

    pub fn from_apparatus(app: &Apparatus) -> Self {
        let c = app.config();
        TimingModel { envelope_width: c.envelope_width, detector_jitter: c.detector_jitter }
    }

    pub fn sigma_eff(&self) -> f64 {
        self.envelope_width.hypot(self.detector_jitter)
    }

    /// Overlap of two Gaussian amplitude envelopes separated by `dt`:
    /// `γ = exp(−dt²/(8σ_eff²))`.
    pub fn overlap(&self, dt: f64) -> f64 {
        let s = self.sigma_eff();
        (-dt * dt / (8.0 * s * s)).exp()
    }

    pub fn distinguishability(&self, dt: f64) -> Distinguishability {
        let s = self.sigma_eff();
        let g = self.overlap(dt);
        Distinguishability {
            total_variation: erf(dt.abs() / (2.0 * std::f64::consts::SQRT_2 * s)),
            quantum: (1.0 - g * g).max(0.0).sqrt(),
        }
    }
}

pub fn temporal_overlap(dt: f64, timing: &TimingModel) -> f64 {
    timing.overlap(dt)
}

pub fn timing_distinguishability(dt: f64, timing: &TimingModel) -> Distinguishability {
    timing.distinguishability(dt)
}

/// Source of the cross-term weight `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coherence {
    /// `γ` from the arrival-time separation of the two branches.
    Temporal(TimingModel),
    /// A fixed `γ`, independent of position.
    Fixed(f64),
}

/// Amplitude calculator bound to one apparatus and phase convention.
#[derive(Debug, Clone)]
pub struct Optics {
    apparatus: Apparatus,
    convention: PhaseConvention,
}

impl Optics {
    pub fn new(apparatus: Apparatus, convention: PhaseConvention) -> Result<Self> {
        convention.validate()?;
        Ok(Optics { apparatus, convention })
    }

    pub fn with_default_convention(apparatus: Apparatus) -> Self {
        Optics { apparatus, convention: PhaseConvention::default() }
    }

    pub fn apparatus(&self) -> &Apparatus {
        &self.apparatus
    }

    pub fn convention(&self) -> &PhaseConvention {
        &self.convention
    }

    fn envelope(&self, x: f64) -> f64 {
        match self.apparatus.config().slit_width {
            None => 1.0,
            Some(a) => {
                let c = self.apparatus.config();
                let u = PI * a * x / (c.wavelength * c.l0);
                if u == 0.0 {
                    1.0
                } else {
                    u.sin() / u
                }
            }
        }
    }

    fn branch_magnitude(&self, slit: SlitLabel, x: f64) -> f64 {
        if self.apparatus.is_slit_open(slit) {
            self.envelope(x) * FRAC_1_SQRT_2
        } else {
            0.0
        }
    }

    /// Signal amplitude at D₀ for the branch through `slit`.
    pub fn slit_amplitude(&self, slit: SlitLabel, x: f64) -> ComplexAmplitude {
        let phase = (self.apparatus.wavenumber() * self.apparatus.signal_path_length(slit, x)).rem_euclid(2.0 * PI);
        Complex64::from_polar(self.branch_magnitude(slit, x), phase)
    }

    /// Idler amplitude along the route to `det`, zero if unreachable.
    pub fn idler_amplitude(&self, slit: SlitLabel, det: DetectorId) -> ComplexAmplitude {
        match self.apparatus.idler_path_length(slit, det) {
            None => Complex64::ZERO,
            Some(len) => {
                let phase = (self.apparatus.wavenumber() * len).rem_euclid(2.0 * PI);
                self.convention.route_factor(slit, det) * Complex64::from_polar(1.0, phase)
            }
        }
    }

    /// Two-photon path-time separation between branches B and A for `det`.
    /// Includes any idler-arm imbalance.
    pub fn branch_time_separation(&self, x: f64, det: DetectorId) -> f64 {
        let signal = self.apparatus.arrival_time_delta(x).exact;
        match (self.apparatus.idler_path_delay(SlitLabel::A, det), self.apparatus.idler_path_delay(SlitLabel::B, det)) {
            (Some(a), Some(b)) => signal + (b - a),
            _ => signal,
        }
    }

    pub fn gamma(&self, coherence: &Coherence, x: f64, det: DetectorId) -> f64 {
        match coherence {
            Coherence::Fixed(g) => *g,
            Coherence::Temporal(t) => t.overlap(self.branch_time_separation(x, det)),
        }
    }

    /// Direct (no-cross-term) weight `|ψ_s α(s, det)|²` of one branch.
    pub fn branch_weight(&self, slit: SlitLabel, x: f64, det: DetectorId) -> f64 {
        let m = self.branch_magnitude(slit, x);
        m * m * self.convention.route_factor(slit, det).norm_sqr()
    }

    /// Cross amplitude `ψ_A α_A · conj(ψ_B α_B)`. The signal phase difference is
    /// taken from the cancellation-free path difference.
    fn cross_amplitude(&self, x: f64, det: DetectorId) -> Complex64 {
        let mag = self.branch_magnitude(SlitLabel::A, x) * self.branch_magnitude(SlitLabel::B, x);
        if mag == 0.0 {
            return Complex64::ZERO;
        }
        let signal =
            Complex64::from_polar(mag, -self.apparatus.wavenumber() * self.apparatus.signal_path_difference(x));
        signal * self.idler_amplitude(SlitLabel::A, det) * self.idler_amplitude(SlitLabel::B, det).conj()
    }

    /// Unnormalized joint weight with an explicit overlap `γ`.
    pub fn joint_weight_with_overlap(&self, x: f64, det: DetectorId, gamma: f64) -> f64 {
        if !det.is_idler() {
            return 0.0;
        }
        let direct = self.branch_weight(SlitLabel::A, x, det) + self.branch_weight(SlitLabel::B, x, det);
        let cross = 2.0 * gamma * self.cross_amplitude(x, det).re;
        (direct + cross).max(0.0)
    }

    pub fn joint_weight(&self, x: f64, det: DetectorId, coherence: &Coherence) -> f64 {
        self.joint_weight_with_overlap(x, det, self.gamma(coherence, x, det))
    }

    /// Visibility of the conditional pattern at `x_ref`:
    /// `2γ|u_A||u_B| / (|u_A|² + |u_B|²)`, zero for one-branch detectors.
    pub fn analytic_visibility(&self, det: DetectorId, coherence: &Coherence, x_ref: f64) -> f64 {
        let a = self.branch_weight(SlitLabel::A, x_ref, det);
        let b = self.branch_weight(SlitLabel::B, x_ref, det);
        if a + b == 0.0 {
            return 0.0;
        }
        2.0 * self.gamma(coherence, x_ref, det) * (a * b).sqrt() / (a + b)
    }

    /// Max−min contrast of the conditional pattern over one fringe period
    /// centered on `x_center`, evaluated on `samples` points with `γ` frozen
    /// at its value at `x_center`.
    pub fn fringe_contrast(&self, det: DetectorId, coherence: &Coherence, x_center: f64, samples: usize) -> f64 {
        let g = self.gamma(coherence, x_center, det);
        let p = self.apparatus.fringe_period();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..samples {
            let x = x_center - p / 2.0 + p * i as f64 / (samples - 1) as f64;
            let w = self.joint_weight_with_overlap(x, det, g);
            lo = lo.min(w);
            hi = hi.max(w);
        }
        if hi + lo == 0.0 {
            0.0
        } else {
            (hi - lo) / (hi + lo)
        }
    }
}

/// Normalized joint density of (D₀ position, idler detector) on the
/// configured scan range, plus sampling cells.
#[derive(Debug, Clone)]
pub struct JointDistribution {
    optics: Optics,
    coherence: Coherence,
    nodes: Vec<f64>,
    /// `[idler][node]` normalized density.
    density: [Vec<f64>; 4],
    /// `[idler][cell]` probability mass (trapezoid), summing to 1 overall.
    cell_mass: [Vec<f64>; 4],
    totals: [f64; 4],
    norm: f64,
}

impl JointDistribution {
    pub fn build(optics: Optics, coherence: Coherence) -> Self {
        let app = optics.apparatus();
        let [lo, _] = app.config().x_range;
        let cells = app.config().x_bins * GRID_OVERSAMPLE;
        let h = app.bin_width() / GRID_OVERSAMPLE as f64;
        let nodes: Vec<f64> = (0..=cells).map(|j| lo + h * j as f64).collect();

        let mut density: [Vec<f64>; 4] = Default::default();
        for (k, det) in DetectorId::IDLERS.into_iter().enumerate() {
            density[k] = nodes.iter().map(|&x| optics.joint_weight(x, det, &coherence)).collect();
        }
        let mut cell_mass: [Vec<f64>; 4] = Default::default();
        for k in 0..4 {
            cell_mass[k] = density[k].windows(2).map(|w| 0.5 * h * (w[0] + w[1])).collect();
        }
        let norm: f64 = cell_mass.iter().flatten().sum();
        assert!(norm > 0.0, "joint distribution has zero total weight");
        for k in 0..4 {
            density[k].iter_mut().for_each(|v| *v /= norm);
            cell_mass[k].iter_mut().for_each(|v| *v /= norm);
        }
        let totals = std::array::from_fn(|k| cell_mass[k].iter().sum());
        JointDistribution { optics, coherence, nodes, density, cell_mass, totals, norm }
    }

    pub fn optics(&self) -> &Optics {
        &self.optics
    }

    pub fn apparatus(&self) -> &Apparatus {
        self.optics.apparatus()
    }

    pub fn coherence(&self) -> &Coherence {
        &self.coherence
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node_density(&self, det: DetectorId) -> &[f64] {
        &self.density[det.idler_index().expect("idler detector")]
    }

    pub fn cell_masses(&self, det: DetectorId) -> &[f64] {
        &self.cell_mass[det.idler_index().expect("idler detector")]
    }

    /// Per-detector total probability.
    pub fn detector_total(&self, det: DetectorId) -> f64 {
        det.idler_index().map_or(0.0, |k| self.totals[k])
    }

    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Normalized joint density at arbitrary `x`.
    pub fn joint_probability(&self, x: f64, det: DetectorId) -> f64 {
        self.optics.joint_weight(x, det, &self.coherence) / self.norm
    }

    /// Sum of the joint density over all idler detectors.
    pub fn marginal_probability(&self, x: f64) -> f64 {
        DetectorId::IDLERS.iter().map(|&d| self.joint_probability(x, d)).sum()
    }

    /// Cross-term-free marginal `(|ψ_A|² + |ψ_B|²)/norm`.
    pub fn marginal_closed_form(&self, x: f64) -> f64 {
        let o = &self.optics;
        let a = o.slit_amplitude(SlitLabel::A, x).norm_sqr();
        let b = o.slit_amplitude(SlitLabel::B, x).norm_sqr();
        (a + b) / self.norm
    }

    /// Probability mass per histogram bin for `det`.
    pub fn bin_probabilities(&self, det: DetectorId) -> Vec<f64> {
        self.cell_masses(det).chunks(GRID_OVERSAMPLE).map(|c| c.iter().sum()).collect()
    }

    pub fn analytic_visibility(&self, det: DetectorId, x_ref: f64) -> f64 {
        self.optics.analytic_visibility(det, &self.coherence, x_ref)
    }
}
