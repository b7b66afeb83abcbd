//! Simulation and analysis of a delayed-choice quantum eraser.
//!
//! The pipeline runs apparatus geometry → path amplitudes and the joint
//! detection distribution → seeded timestamped event streams → coincidence
//! matching and conditional histograms → visibility fits, timing sweeps and
//! reports.

pub mod amplitudes;
pub mod analysis;
pub mod apparatus;
pub mod coincidence;
pub mod error;
pub mod events;
pub mod rng;

pub use amplitudes::{
    Coherence, ComplexAmplitude, Distinguishability, JointDistribution, Optics, PhaseConvention, TimingModel,
};
pub use analysis::{
    delayed_choice_audit, estimate_visibility, run_pipeline, run_scenario, sweep_timing, PipelineOutput, Scenario,
    ScenarioOptions, ScenarioReport, SweepOptions, SweepParameter, SweepResult, VisibilityEstimate,
};
pub use apparatus::{Apparatus, ApparatusConfig, DetectorId, SlitLabel, TimeDelta, SPEED_OF_LIGHT};
pub use coincidence::{
    match_coincidences, nominal_offsets, CoincidenceRecord, FringeHistogram, FringeSet, NominalOffsets,
};
pub use error::{Error, Result};
pub use events::{run_simulation, BiphotonEvent, D0Click, EventStreams, IdlerClick, SimOptions};
