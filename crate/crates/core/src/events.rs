//! Seeded, timestamped biphoton event streams.
//!
//! Positions and idler outcomes are drawn from the analytic
//! [`JointDistribution`] (which already carries the `γ`-modulated
//! interference). Timestamps follow a semiclassical branch-tagged model: each
//! pair is assigned a hidden slit of origin with the no-cross-term weights
//! `|ψ_s α(s, det)|²`, and both clicks are timed along that branch's paths
//! with Gaussian spread `σ_t = sqrt(τ² + σ_j²)`.
//!
//! Randomness: emission gaps come from one sequential stream; every other
//! draw for pair `i` comes from ChaCha stream `i`, so the output does not
//! depend on how the pair range is split across workers.

use std::io::{BufRead, Write};

use log::warn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use crate::amplitudes::{Coherence, JointDistribution, Optics, TimingModel};
use crate::apparatus::{is_reachable, Apparatus, DetectorId, SlitLabel, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::rng::{domain, stream_rng};

/// Default hard cap on pairs per run.
pub const DEFAULT_MAX_EVENTS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub x: f64,
    pub detector: DetectorId,
}

/// One entangled pair. `branch_tag` is the hidden slit of origin, kept only
/// for validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiphotonEvent {
    pub pair_id: u64,
    pub t_emit: f64,
    pub x: f64,
    pub t_d0: f64,
    pub idler_det: DetectorId,
    pub t_idler: f64,
    pub branch_tag: SlitLabel,
}

/// Inverse-transform sampler over (idler detector, grid cell). Positions are
/// uniform within the chosen cell.
#[derive(Debug, Clone)]
pub struct OutcomeSampler {
    edges: Vec<f64>,
    cells: usize,
    /// Cumulative mass over `det * cells + cell`, last entry 1.
    cdf: Vec<f64>,
}

impl OutcomeSampler {
    pub fn new(dist: &JointDistribution) -> Self {
        let masses = DetectorId::IDLERS.map(|d| dist.cell_masses(d).to_vec());
        Self::from_cells(dist.nodes().to_vec(), masses).expect("joint distribution cells are consistent")
    }

    /// Build from explicit cell edges and per-detector cell masses (any
    /// non-negative scale).
    pub fn from_cells(edges: Vec<f64>, masses: [Vec<f64>; 4]) -> Result<Self> {
        let cells = edges.len().saturating_sub(1);
        if cells == 0 || masses.iter().any(|m| m.len() != cells) {
            return Err(Error::InvalidConfig("cell masses do not match cell edges".into()));
        }
        if masses.iter().flatten().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidConfig("cell masses must be finite and non-negative".into()));
        }
        let mut cdf = Vec::with_capacity(4 * cells);
        let mut acc = 0.0;
        for m in masses.iter().flatten() {
            acc += m;
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::InvalidConfig("cell masses sum to zero".into()));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        *cdf.last_mut().unwrap() = 1.0;
        Ok(OutcomeSampler { edges, cells, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let u: f64 = rng.random();
        // first index with cdf > u; zero-mass cells are never selected
        let flat = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        let (det, cell) = (flat / self.cells, flat % self.cells);
        let v: f64 = rng.random();
        let (lo, hi) = (self.edges[cell], self.edges[cell + 1]);
        Outcome { x: lo + v * (hi - lo), detector: DetectorId::from_idler_index(det) }
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(sampler: &OutcomeSampler, rng: &mut R) -> Outcome {
    sampler.sample(rng)
}

/// Draw the hidden branch and both timestamps for a sampled outcome.
pub fn assign_timestamps<R: Rng + ?Sized>(
    optics: &Optics,
    pair_id: u64,
    outcome: Outcome,
    t_emit: f64,
    sigma_t: f64,
    rng: &mut R,
) -> BiphotonEvent {
    let wa = optics.branch_weight(SlitLabel::A, outcome.x, outcome.detector);
    let wb = optics.branch_weight(SlitLabel::B, outcome.x, outcome.detector);
    let u: f64 = rng.random();
    let branch = if u * (wa + wb) < wa { SlitLabel::A } else { SlitLabel::B };
    debug_assert!(is_reachable(branch, outcome.detector));

    let app = optics.apparatus();
    let n0: f64 = rng.sample(StandardNormal);
    let n1: f64 = rng.sample(StandardNormal);
    let idler_delay = app.idler_path_delay(branch, outcome.detector).unwrap_or(f64::NAN);
    BiphotonEvent {
        pair_id,
        t_emit,
        x: outcome.x,
        t_d0: t_emit + app.signal_path_length(branch, outcome.x) / SPEED_OF_LIGHT + sigma_t * n0,
        idler_det: outcome.detector,
        t_idler: t_emit + idler_delay + sigma_t * n1,
        branch_tag: branch,
    }
}

/// Check the per-event invariants. The delayed-choice ordering is only
/// required when `6σ_t` fits inside the geometric margin.
pub fn check_event(app: &Apparatus, ev: &BiphotonEvent, sigma_t: f64) -> std::result::Result<(), String> {
    if !(ev.t_d0 > ev.t_emit && ev.t_idler > ev.t_emit) {
        return Err(format!("pair {}: click precedes emission", ev.pair_id));
    }
    if !is_reachable(ev.branch_tag, ev.idler_det) {
        return Err(format!("pair {}: {} unreachable from {}", ev.pair_id, ev.idler_det, ev.branch_tag));
    }
    if ordering_guaranteed(app, sigma_t) && ev.t_d0 >= ev.t_emit + app.first_splitter_delay() {
        return Err(format!("pair {}: D0 fired after the idler reached its first splitter", ev.pair_id));
    }
    Ok(())
}

/// Whether timing noise is small enough that the delayed-choice ordering
/// is expected to hold for every event.
pub fn ordering_guaranteed(app: &Apparatus, sigma_t: f64) -> bool {
    let c = app.config();
    6.0 * sigma_t < (c.la.min(c.lb) - c.l0) / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct D0Click {
    pub pair_id: u64,
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdlerClick {
    pub pair_id: u64,
    pub detector: DetectorId,
    pub t: f64,
}

/// The two time-sorted inputs of the coincidence circuit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventStreams {
    pub d0: Vec<D0Click>,
    pub idler: Vec<IdlerClick>,
    /// Emission time by pair id, when known (simulated runs).
    emissions: Option<Vec<f64>>,
    /// Hidden branch by pair id; only populated on debug runs.
    branch_tags: Option<Vec<SlitLabel>>,
}

impl EventStreams {
    /// Streams from raw clicks; both are sorted by timestamp (ties by pair id).
    pub fn from_clicks(mut d0: Vec<D0Click>, mut idler: Vec<IdlerClick>) -> Self {
        d0.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.pair_id.cmp(&b.pair_id)));
        idler.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.pair_id.cmp(&b.pair_id)));
        EventStreams { d0, idler, emissions: None, branch_tags: None }
    }

    pub fn from_events(events: &[BiphotonEvent], keep_tags: bool) -> Self {
        let d0 = events.iter().map(|e| D0Click { pair_id: e.pair_id, x: e.x, t: e.t_d0 }).collect();
        let idler =
            events.iter().map(|e| IdlerClick { pair_id: e.pair_id, detector: e.idler_det, t: e.t_idler }).collect();
        let mut s = Self::from_clicks(d0, idler);
        // pair ids are dense in simulated runs
        let n = events.iter().map(|e| e.pair_id + 1).max().unwrap_or(0) as usize;
        let mut emissions = vec![f64::NAN; n];
        let mut tags = vec![SlitLabel::A; n];
        for e in events {
            emissions[e.pair_id as usize] = e.t_emit;
            tags[e.pair_id as usize] = e.branch_tag;
        }
        s.emissions = Some(emissions);
        s.branch_tags = keep_tags.then_some(tags);
        s
    }

    pub fn is_empty(&self) -> bool {
        self.d0.is_empty() && self.idler.is_empty()
    }

    pub fn emission_time(&self, pair_id: u64) -> Option<f64> {
        self.emissions.as_ref()?.get(pair_id as usize).copied().filter(|t| t.is_finite())
    }

    pub fn has_emissions(&self) -> bool {
        self.emissions.is_some()
    }

    pub fn branch_tag(&self, pair_id: u64) -> Option<SlitLabel> {
        self.branch_tags.as_ref()?.get(pair_id as usize).copied()
    }

    pub fn has_branch_tags(&self) -> bool {
        self.branch_tags.is_some()
    }

    /// Write `pair_id,channel,t,x` rows merged in time order (D0 first on
    /// ties). With `debug`, a `branch_tag` column is appended when tags exist.
    pub fn write_csv<W: Write>(&self, mut w: W, debug: bool) -> Result<()> {
        let tags = debug && self.has_branch_tags();
        if tags {
            writeln!(w, "pair_id,channel,t,x,branch_tag")?;
        } else {
            writeln!(w, "pair_id,channel,t,x")?;
        }
        let tag = |id: u64| self.branch_tag(id).map(|t| t.to_string()).unwrap_or_default();
        let (mut i, mut j) = (0, 0);
        while i < self.d0.len() || j < self.idler.len() {
            let take_d0 = j >= self.idler.len() || (i < self.d0.len() && self.d0[i].t <= self.idler[j].t);
            if take_d0 {
                let c = self.d0[i];
                write!(w, "{},D0,{:e},{:e}", c.pair_id, c.t, c.x)?;
                if tags {
                    write!(w, ",{}", tag(c.pair_id))?;
                }
                i += 1;
            } else {
                let c = self.idler[j];
                write!(w, "{},{},{:e},", c.pair_id, c.detector, c.t)?;
                if tags {
                    write!(w, ",{}", tag(c.pair_id))?;
                }
                j += 1;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Read the CSV written by [`write_csv`](Self::write_csv). Hidden tags are
    /// restored when the debug column is present.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(r);
        let headers = rdr.headers()?.clone();
        let has_tags = headers.iter().any(|h| h == "branch_tag");
        let mut d0 = Vec::new();
        let mut idler = Vec::new();
        let mut tags: Vec<(u64, SlitLabel)> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let bad = |reason: &str| Error::MalformedRecord { line, reason: reason.to_string() };
            let pair_id: u64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("pair_id"))?;
            let channel = rec.get(1).and_then(DetectorId::parse).ok_or_else(|| bad("channel"))?;
            let t: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("t"))?;
            if channel == DetectorId::D0 {
                let x: f64 = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(|| bad("x"))?;
                d0.push(D0Click { pair_id, x, t });
            } else {
                if rec.get(3).is_some_and(|s| !s.is_empty()) {
                    return Err(bad("idler rows carry no x"));
                }
                idler.push(IdlerClick { pair_id, detector: channel, t });
            }
            if has_tags {
                match rec.get(4) {
                    Some("A") => tags.push((pair_id, SlitLabel::A)),
                    Some("B") => tags.push((pair_id, SlitLabel::B)),
                    Some("") | None => {}
                    Some(_) => return Err(bad("branch_tag")),
                }
            }
        }
        let mut s = Self::from_clicks(d0, idler);
        if has_tags {
            let n = tags.iter().map(|(id, _)| id + 1).max().unwrap_or(0) as usize;
            let mut v = vec![SlitLabel::A; n];
            for (id, t) in tags {
                v[id as usize] = t;
            }
            s.branch_tags = Some(v);
        }
        Ok(s)
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub max_events: usize,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Keep hidden branch tags in the output streams.
    pub keep_branch_tags: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { max_events: DEFAULT_MAX_EVENTS, workers: None, keep_branch_tags: false }
    }
}

/// Run `f` on a pool with `workers` threads, or inline on the global pool.
pub(crate) fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().expect("thread pool").install(f),
    }
}

/// Joint distribution for the apparatus with its own timing model and the
/// default phase convention.
pub fn default_distribution(app: &Apparatus) -> JointDistribution {
    JointDistribution::build(
        Optics::with_default_convention(app.clone()),
        Coherence::Temporal(TimingModel::from_apparatus(app)),
    )
}

/// Generate `n` pairs as full events (hidden tags included).
pub fn generate_events(dist: &JointDistribution, n: usize, seed: u64, opts: &SimOptions) -> Result<Vec<BiphotonEvent>> {
    if n > opts.max_events {
        return Err(Error::CapacityExceeded { requested: n, cap: opts.max_events });
    }
    let app = dist.apparatus();
    let sigma_t = app.config().effective_timing_width();
    if !ordering_guaranteed(app, sigma_t) {
        warn!("timing spread {sigma_t:e} s is large against the delayed-choice margin; ordering may be violated");
    }

    let rate = app.config().pair_rate;
    let mut gaps = stream_rng(seed, domain::EMISSION, 0);
    let mut t = 0.0f64;
    let emit: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gaps.sample(Exp1);
            t += g / rate;
            t
        })
        .collect();

    let sampler = OutcomeSampler::new(dist);
    let base: ChaCha8Rng = stream_rng(seed, domain::PAIRS, 0);
    let optics = dist.optics();
    Ok(with_workers(opts.workers, || {
        emit.par_iter()
            .enumerate()
            .map(|(i, &t_emit)| {
                let mut rng = base.clone();
                rng.set_stream(i as u64);
                let outcome = sampler.sample(&mut rng);
                assign_timestamps(optics, i as u64, outcome, t_emit, sigma_t, &mut rng)
            })
            .collect()
    }))
}

/// Whole-experiment driver: `n` pairs from a Poisson source at the
/// configured rate, returned as time-sorted streams.
pub fn run_simulation(app: &Apparatus, n: usize, seed: u64, opts: &SimOptions) -> Result<EventStreams> {
    simulate_with(&default_distribution(app), n, seed, opts)
}

pub fn simulate_with(dist: &JointDistribution, n: usize, seed: u64, opts: &SimOptions) -> Result<EventStreams> {
    let events = generate_events(dist, n, seed, opts)?;
    Ok(EventStreams::from_events(&events, opts.keep_branch_tags))
}
