//! The coincidence circuit: window matching of D₀ clicks against idler
//! clicks, and conditional fringe histograms.
//!
//! The window is centered on each detector's nominal idler−signal delay: a
//! D₀ click at `t0` and an idler click at `t1` on detector `d` are
//! coincident iff `|t1 − t0 − offset(d)| ≤ W`.

use std::io::Write;

use rayon::prelude::*;

use crate::analysis::VisibilityEstimate;
use crate::apparatus::{Apparatus, DetectorId, SlitLabel, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::events::EventStreams;

/// Expected idler−signal delay per idler detector (D1…D4).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalOffsets(pub [f64; 4]);

impl NominalOffsets {
    pub fn uniform(offset: f64) -> Self {
        NominalOffsets([offset; 4])
    }

    pub fn get(&self, det: DetectorId) -> f64 {
        self.0[det.idler_index().expect("idler detector")]
    }
}

/// `offset(det)` = mean over reachable slits of `idler_delay(slit, det) − L0/c`.
pub fn nominal_offsets(app: &Apparatus) -> NominalOffsets {
    let signal = app.config().l0 / SPEED_OF_LIGHT;
    NominalOffsets(DetectorId::IDLERS.map(|det| {
        let delays: Vec<f64> = SlitLabel::ALL.iter().filter_map(|&s| app.idler_path_delay(s, det)).collect();
        delays.iter().map(|d| d - signal).sum::<f64>() / delays.len() as f64
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceRecord {
    pub d0_index: usize,
    pub idler_index: usize,
    pub d0_t: f64,
    pub idler_t: f64,
    /// `t_idler − t_d0`.
    pub dt_recorded: f64,
    pub x: f64,
    pub idler_det: DetectorId,
    pub true_pair: bool,
}

fn check_sorted(ts: impl Iterator<Item = f64>, stream: &'static str) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for (index, t) in ts.enumerate() {
        if t < prev || t.is_nan() {
            return Err(Error::UnsortedStream { stream, index });
        }
        prev = t;
    }
    Ok(())
}

/// Greedy single-pass matcher. D₀ clicks are visited in time order; each
/// takes the unused idler click closest to its nominal offset within the
/// window (ties go to the earlier idler index). Each click is used at most
/// once and the output is ordered by D₀ time.
pub fn match_coincidences(
    streams: &EventStreams,
    window: f64,
    offsets: &NominalOffsets,
) -> Result<Vec<CoincidenceRecord>> {
    check_sorted(streams.d0.iter().map(|c| c.t), "d0")?;
    check_sorted(streams.idler.iter().map(|c| c.t), "idler")?;

    // Per-detector index lists stay sorted in `t − offset`.
    let mut by_det: [Vec<usize>; 4] = Default::default();
    for (i, c) in streams.idler.iter().enumerate() {
        if let Some(k) = c.detector.idler_index() {
            by_det[k].push(i);
        }
    }
    let mut start = [0usize; 4];
    let mut used = vec![false; streams.idler.len()];
    let mut out = Vec::new();

    for (d0_index, click) in streams.d0.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for k in 0..4 {
            let off = offsets.0[k];
            let list = &by_det[k];
            while start[k] < list.len() && streams.idler[list[start[k]]].t - off < click.t - window {
                start[k] += 1;
            }
            for &j in &list[start[k]..] {
                let rel = streams.idler[j].t - click.t - off;
                if rel > window {
                    break;
                }
                if used[j] {
                    continue;
                }
                let cost = rel.abs();
                if cost <= window && best.is_none_or(|(c, bj)| cost < c || (cost == c && j < bj)) {
                    best = Some((cost, j));
                }
            }
        }
        if let Some((_, j)) = best {
            used[j] = true;
            let idler = streams.idler[j];
            out.push(CoincidenceRecord {
                d0_index,
                idler_index: j,
                d0_t: click.t,
                idler_t: idler.t,
                dt_recorded: idler.t - click.t,
                x: click.x,
                idler_det: idler.detector,
                true_pair: idler.pair_id == click.pair_id,
            });
        }
    }
    Ok(out)
}

/// Write `d0_t,x,idler_det,idler_t,dt[,true_pair]`.
pub fn write_records_csv<W: Write>(records: &[CoincidenceRecord], mut w: W, with_truth: bool) -> Result<()> {
    if with_truth {
        writeln!(w, "d0_t,x,idler_det,idler_t,dt,true_pair")?;
    } else {
        writeln!(w, "d0_t,x,idler_det,idler_t,dt")?;
    }
    for r in records {
        write!(w, "{:e},{:e},{},{:e},{:e}", r.d0_t, r.x, r.idler_det, r.idler_t, r.dt_recorded)?;
        if with_truth {
            write!(w, ",{}", r.true_pair)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Counts of D₀ positions in the configured x bins, for one conditioning
/// detector (D0 for the unconditioned marginal).
#[derive(Debug, Clone, PartialEq)]
pub struct FringeHistogram {
    pub detector: DetectorId,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// Far-field fringe period used by the fit model.
    pub fringe_period: f64,
    pub fit: Option<VisibilityEstimate>,
}

impl FringeHistogram {
    pub fn empty(detector: DetectorId, app: &Apparatus) -> Self {
        FringeHistogram {
            detector,
            edges: app.bin_edges(),
            counts: vec![0; app.config().x_bins],
            fringe_period: app.fringe_period(),
            fit: None,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Bin-wise sum with another histogram on the same binning.
    pub fn merged(&self, other: &FringeHistogram, detector: DetectorId) -> FringeHistogram {
        assert_eq!(self.edges, other.edges, "histograms use different binning");
        FringeHistogram {
            detector,
            edges: self.edges.clone(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            fringe_period: self.fringe_period,
            fit: None,
        }
    }
}

/// One conditional histogram per idler detector.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeSet {
    pub histograms: [FringeHistogram; 4],
}

impl FringeSet {
    pub fn get(&self, det: DetectorId) -> &FringeHistogram {
        &self.histograms[det.idler_index().expect("idler detector")]
    }

    pub fn get_mut(&mut self, det: DetectorId) -> &mut FringeHistogram {
        &mut self.histograms[det.idler_index().expect("idler detector")]
    }

    /// Write `detector,bin_lo,bin_hi,count` for every histogram.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_histograms_csv(self.histograms.iter(), w)
    }
}

pub fn write_histograms_csv<'a, W: Write>(hists: impl Iterator<Item = &'a FringeHistogram>, mut w: W) -> Result<()> {
    writeln!(w, "detector,bin_lo,bin_hi,count")?;
    for h in hists {
        for (e, c) in h.edges.windows(2).zip(&h.counts) {
            writeln!(w, "{},{:e},{:e},{}", h.detector, e[0], e[1], c)?;
        }
    }
    Ok(())
}

const CHUNK: usize = 1 << 15;

fn accumulate<T: Sync>(items: &[T], app: &Apparatus, key: impl Fn(&T) -> Option<(usize, f64)> + Sync) -> [Vec<u64>; 4] {
    let bins = app.config().x_bins;
    let zero = || -> [Vec<u64>; 4] { std::array::from_fn(|_| vec![0u64; bins]) };
    items
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut h = zero();
            for item in chunk {
                if let Some((k, x)) = key(item) {
                    if let Some(b) = app.bin_index(x) {
                        h[k][b] += 1;
                    }
                }
            }
            h
        })
        .reduce(zero, |mut a, b| {
            for k in 0..4 {
                a[k].iter_mut().zip(&b[k]).for_each(|(x, y)| *x += y);
            }
            a
        })
}

fn into_set(app: &Apparatus, counts: [Vec<u64>; 4]) -> FringeSet {
    let mut k = 0;
    FringeSet {
        histograms: counts.map(|c| {
            let mut h = FringeHistogram::empty(DetectorId::from_idler_index(k), app);
            h.counts = c;
            k += 1;
            h
        }),
    }
}

/// Bin coincidence records by (idler detector, x).
pub fn build_fringes(records: &[CoincidenceRecord], app: &Apparatus) -> FringeSet {
    into_set(app, accumulate(records, app, |r| r.idler_det.idler_index().map(|k| (k, r.x))))
}

/// Unconditioned D₀ position histogram.
pub fn marginal_histogram(streams: &EventStreams, app: &Apparatus) -> FringeHistogram {
    let counts = accumulate(&streams.d0, app, |c| Some((0, c.x)));
    let mut h = FringeHistogram::empty(DetectorId::D0, app);
    h.counts = counts.into_iter().next().unwrap();
    h
}

/// Histograms of (x, detector) over true pairs, joined by pair id without
/// any timing window.
pub fn pair_histograms(streams: &EventStreams, app: &Apparatus) -> FringeSet {
    let n = streams.d0.iter().map(|c| c.pair_id + 1).max().unwrap_or(0) as usize;
    let mut x_of = vec![f64::NAN; n];
    for c in &streams.d0 {
        x_of[c.pair_id as usize] = c.x;
    }
    into_set(
        app,
        accumulate(&streams.idler, app, |c| {
            let x = *x_of.get(c.pair_id as usize)?;
            (!x.is_nan()).then(|| (c.detector.idler_index().unwrap(), x))
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apparatus::ApparatusConfig;
    use crate::events::{D0Click, IdlerClick};

    fn d0(id: u64, t: f64) -> D0Click {
        D0Click { pair_id: id, x: 0.0, t }
    }
    fn idl(id: u64, t: f64) -> IdlerClick {
        IdlerClick { pair_id: id, detector: DetectorId::D1, t }
    }

    #[test]
    fn matches_single_nearby_pair() {
        let s = EventStreams::from_clicks(vec![d0(0, 0.0), d0(1, 100e-6)], vec![idl(0, 0.001e-6), idl(1, 200e-6)]);
        let r = match_coincidences(&s, 5e-6, &NominalOffsets::uniform(0.0)).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].d0_index, r[0].idler_index), (0, 0));
        assert!(r[0].true_pair);
        assert!((r[0].dt_recorded - 0.001e-6).abs() < 1e-20);
    }

    #[test]
    fn empty_idler_stream() {
        let s = EventStreams::from_clicks(vec![d0(0, 0.0)], vec![]);
        assert!(match_coincidences(&s, 1.0, &NominalOffsets::uniform(0.0)).unwrap().is_empty());
    }

    #[test]
    fn unsorted_stream_rejected() {
        let mut s = EventStreams::from_clicks(vec![d0(0, 0.0), d0(1, 1.0)], vec![]);
        s.d0.swap(0, 1);
        assert!(matches!(
            match_coincidences(&s, 1.0, &NominalOffsets::uniform(0.0)),
            Err(Error::UnsortedStream { stream: "d0", index: 1 })
        ));
    }

    #[test]
    fn picks_closest_to_nominal_and_uses_once() {
        // two d0 clicks compete for idlers near offset 10
        let s = EventStreams::from_clicks(vec![d0(0, 0.0), d0(1, 0.5)], vec![idl(7, 10.2), idl(8, 10.6)]);
        let r = match_coincidences(&s, 1.0, &NominalOffsets::uniform(10.0)).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r[0].idler_index, 0);
        // 10.2 is taken; the second d0 falls back to 10.6 (|0.1| < 1)
        assert_eq!(r[1].idler_index, 1);
    }

    #[test]
    fn tie_goes_to_earlier_idler() {
        let s = EventStreams::from_clicks(vec![d0(0, 1.0)], vec![idl(0, 0.5), idl(1, 1.5)]);
        let r = match_coincidences(&s, 1.0, &NominalOffsets::uniform(0.0)).unwrap();
        assert_eq!(r[0].idler_index, 0);
    }

    #[test]
    fn per_detector_offsets() {
        let mut late = idl(0, 5.0);
        late.detector = DetectorId::D3;
        let s = EventStreams::from_clicks(vec![d0(0, 0.0)], vec![idl(1, 1.0), late]);
        let r = match_coincidences(&s, 0.1, &NominalOffsets([1.0, 1.0, 5.0, 1.0])).unwrap();
        assert_eq!(r.len(), 1);
        let r = match_coincidences(&s, 0.1, &NominalOffsets([3.0, 3.0, 5.0, 3.0])).unwrap();
        assert_eq!(r[0].idler_det, DetectorId::D3);
    }

    #[test]
    fn default_offsets() {
        let app = Apparatus::validate(ApparatusConfig::default()).unwrap();
        let off = nominal_offsets(&app);
        for det in DetectorId::IDLERS {
            assert!((off.get(det) - 2.0 / SPEED_OF_LIGHT).abs() < 1e-22);
        }
        let mut cfg = ApparatusConfig::default();
        for legs in cfg.idler_segments.values_mut() {
            legs.values_mut().for_each(|v| *v = 0.0);
        }
        let app = Apparatus::validate(cfg).unwrap();
        let off = nominal_offsets(&app);
        for det in DetectorId::IDLERS {
            assert!((off.get(det) - 5.003e-9).abs() < 1e-12);
            assert!((off.get(det) - 1.5 / SPEED_OF_LIGHT).abs() < 1e-22);
        }
    }

    #[test]
    fn unequal_legs_give_per_detector_offsets() {
        let mut cfg = ApparatusConfig::default();
        cfg.idler_segments.get_mut(&SlitLabel::B).unwrap().insert(DetectorId::D3, 1.5);
        cfg.idler_segments.get_mut(&SlitLabel::A).unwrap().insert(DetectorId::D1, 0.7);
        let app = Apparatus::validate(cfg).unwrap();
        let off = nominal_offsets(&app);
        assert!((off.get(DetectorId::D3) - 3.0 / SPEED_OF_LIGHT).abs() < 1e-22);
        // D1 averages A (3.2 m) and B (3.0 m) routes
        assert!((off.get(DetectorId::D1) - 2.1 / SPEED_OF_LIGHT).abs() < 1e-22);
    }

    #[test]
    fn zero_records_give_zero_histograms() {
        let app = Apparatus::validate(ApparatusConfig::default()).unwrap();
        let set = build_fringes(&[], &app);
        for h in &set.histograms {
            assert_eq!(h.total(), 0);
            assert_eq!(h.counts.len(), 200);
        }
    }

    #[test]
    fn histogram_csv_layout() {
        let app = Apparatus::validate(ApparatusConfig::default()).unwrap();
        let rec = CoincidenceRecord {
            d0_index: 0,
            idler_index: 0,
            d0_t: 1e-9,
            idler_t: 8e-9,
            dt_recorded: 7e-9,
            x: 1e-5,
            idler_det: DetectorId::D2,
            true_pair: true,
        };
        let set = build_fringes(&[rec], &app);
        assert_eq!(set.get(DetectorId::D2).counts[100], 1);
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 4 * 200);
        assert!(text.lines().any(|l| l.starts_with("D2,") && l.ends_with(",1")));
        let mut buf = Vec::new();
        write_records_csv(&[rec], &mut buf, true).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "d0_t,x,idler_det,idler_t,dt,true_pair\n1e-9,1e-5,D2,8e-9,7e-9,true\n"
        );
    }
}
