//! Simulated acquisition: a rate pattern accumulated tick by tick with
//! Poisson counts.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;

use super::protocol::{BinChange, Delta, LiveStatus};
use crate::dataset::{DataError, DataSet};
use crate::synth::{poisson, rng};

/// Accumulated counts of a live acquisition.
///
/// Every tick advances `sequence` by one and records, per bin, the sequence
/// at which its count last changed; a delta since `s` lists every bin whose
/// last change is after `s`, with its absolute count.
#[derive(Debug, Clone)]
pub struct LiveState {
    pattern: DataSet,
    rate_scale: f64,
    offsets: Vec<usize>,
    counts: Vec<f64>,
    last_changed: Vec<u64>,
    sequence: u64,
    elapsed_s: f64,
    total: f64,
    rng: ChaCha8Rng,
}

impl LiveState {
    /// `pattern` holds expected rates in counts/s per bin; `rate_scale`
    /// multiplies them.
    pub fn new(pattern: DataSet, rate_scale: f64, seed: u64) -> Result<LiveState, DataError> {
        if !(rate_scale >= 0.0 && rate_scale.is_finite()) {
            return Err(DataError::Invalid(format!(
                "rate scale must be finite and non-negative, got {rate_scale}"
            )));
        }
        if let Some((id, x)) = pattern
            .spectra()
            .iter()
            .flat_map(|s| s.counts().iter().map(move |&c| (s.id(), c)))
            .find(|(_, c)| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(DataError::Invalid(format!(
                "spectrum {id}: rate {x} is not a finite non-negative number"
            )));
        }
        let mut offsets = Vec::with_capacity(pattern.len() + 1);
        offsets.push(0);
        for s in pattern.spectra() {
            offsets.push(offsets.last().unwrap() + s.nbins());
        }
        let n = *offsets.last().unwrap();
        Ok(LiveState {
            pattern,
            rate_scale,
            offsets,
            counts: vec![0.0; n],
            last_changed: vec![0; n],
            sequence: 0,
            elapsed_s: 0.0,
            total: 0.0,
            rng: rng(seed, 0),
        })
    }

    pub fn sequence(&self) -> u64 {
        self.sequence
    }

    pub fn elapsed_s(&self) -> f64 {
        self.elapsed_s
    }

    pub fn total_counts(&self) -> f64 {
        self.total
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Advances the acquisition by `dt_s` seconds.
    pub fn tick(&mut self, dt_s: f64) {
        self.sequence += 1;
        self.elapsed_s += dt_s;
        let k = dt_s * self.rate_scale;
        let mut i = 0;
        for s in self.pattern.spectra() {
            for &rate in s.counts() {
                let n = poisson(&mut self.rng, rate as f64 * k) as f64;
                if n > 0.0 {
                    self.counts[i] += n;
                    self.last_changed[i] = self.sequence;
                    self.total += n;
                }
                i += 1;
            }
        }
    }

    /// Accumulated counts as a dataset shaped like the pattern, with Poisson
    /// errors.
    pub fn snapshot(&self) -> DataSet {
        let spectra = self
            .pattern
            .spectra()
            .iter()
            .enumerate()
            .map(|(k, s)| {
                let counts: Vec<f32> = self.counts[self.offsets[k]..self.offsets[k + 1]]
                    .iter()
                    .map(|&c| c as f32)
                    .collect();
                let errors = counts.iter().map(|c| c.sqrt()).collect();
                s.with_data(s.xscale().clone(), counts, errors)
                    .expect("shape taken from the pattern")
            })
            .collect();
        self.pattern
            .with_spectra(spectra)
            .expect("ids taken from the pattern")
            .with_title("live")
    }

    /// Every bin changed after `since`, in dataset order. `None` if `since`
    /// lies in the future.
    pub fn delta_since(&self, since: u64) -> Option<Delta> {
        if since > self.sequence {
            return None;
        }
        let mut changes = Vec::new();
        for k in 0..self.pattern.len() {
            for i in self.offsets[k]..self.offsets[k + 1] {
                if self.last_changed[i] > since {
                    changes.push(BinChange {
                        spectrum: k as u32,
                        bin: (i - self.offsets[k]) as u32,
                        count: self.counts[i] as f32,
                    });
                }
            }
        }
        Some(Delta {
            sequence: self.sequence,
            elapsed_s: self.elapsed_s,
            more: false,
            changes,
        })
    }

    pub fn status(&self, paused: bool) -> LiveStatus {
        LiveStatus {
            sequence: self.sequence,
            elapsed_s: self.elapsed_s,
            total_counts: self.total,
            paused,
            n_spectra: self.pattern.len() as u32,
            n_bins: self.counts.len() as u64,
        }
    }
}

/// Applies `delta` to a snapshot taken at an earlier sequence.
pub fn apply_delta(ds: &DataSet, delta: &Delta) -> Result<DataSet, DataError> {
    let mut counts: Vec<Vec<f32>> = ds.spectra().iter().map(|s| s.counts().to_vec()).collect();
    let mut errors: Vec<Vec<f32>> = ds.spectra().iter().map(|s| s.errors().to_vec()).collect();
    for c in &delta.changes {
        let (k, b) = (c.spectrum as usize, c.bin as usize);
        if k >= counts.len() || b >= counts[k].len() {
            return Err(DataError::Invalid(format!(
                "delta addresses bin {b} of spectrum position {k} outside the dataset"
            )));
        }
        counts[k][b] = c.count;
        errors[k][b] = c.count.sqrt();
    }
    let spectra = ds
        .spectra()
        .iter()
        .zip(counts.into_iter().zip(errors))
        .map(|(s, (c, e))| s.with_data(s.xscale().clone(), c, e))
        .collect::<Result<Vec<_>, _>>()?;
    ds.with_spectra(spectra)
}

/// Live state plus the condition variable subscribers wait on.
#[derive(Debug)]
pub struct LiveSource {
    state: Mutex<LiveState>,
    changed: Condvar,
    paused: AtomicBool,
    stop: AtomicBool,
    dt_s: f64,
}

impl LiveSource {
    pub fn new(state: LiveState, dt_s: f64, paused: bool) -> LiveSource {
        LiveSource {
            state: Mutex::new(state),
            changed: Condvar::new(),
            paused: AtomicBool::new(paused),
            stop: AtomicBool::new(false),
            dt_s,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, LiveState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Advances `n` ticks now, paused or not.
    pub fn step(&self, n: u32) {
        {
            let mut s = self.lock();
            for _ in 0..n {
                s.tick(self.dt_s);
            }
        }
        self.changed.notify_all();
    }

    pub fn pause(&self) {
        self.paused.store(true, Ordering::SeqCst);
    }

    pub fn resume(&self) {
        self.paused.store(false, Ordering::SeqCst);
    }

    pub fn is_paused(&self) -> bool {
        self.paused.load(Ordering::SeqCst)
    }

    pub fn status(&self) -> LiveStatus {
        self.lock().status(self.is_paused())
    }

    pub(crate) fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        self.changed.notify_all();
    }

    pub(crate) fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Blocks until the sequence exceeds `after`, the source stops, or
    /// `timeout` passes; returns the current sequence.
    pub fn wait_past(&self, after: u64, timeout: Duration) -> u64 {
        let guard = self.lock();
        let (guard, _) = self
            .changed
            .wait_timeout_while(guard, timeout, |s| s.sequence() <= after && !self.stopped())
            .unwrap_or_else(|p| p.into_inner());
        guard.sequence()
    }

    /// Starts the ticking thread: one tick per `interval` while not paused.
    pub(crate) fn spawn_ticker(self: &Arc<Self>, interval: Duration) -> JoinHandle<()> {
        let src = Arc::clone(self);
        std::thread::spawn(move || {
            while !src.stopped() {
                std::thread::sleep(interval);
                if !src.is_paused() && !src.stopped() {
                    src.step(1);
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Spectrum, XScale, XUnits};

    fn pattern() -> DataSet {
        let scale = XScale::uniform(0.0, 10.0, 10).unwrap();
        let spectra = (0..4)
            .map(|i| {
                let rates = (0..10).map(|b| 0.2 * (i + b) as f32).collect();
                Spectrum::new(i, scale.clone(), rates, None).unwrap()
            })
            .collect();
        DataSet::new("p", XUnits::TofUs, "counts/s", spectra, vec![]).unwrap()
    }

    #[test]
    fn counts_only_grow_and_sequence_advances() {
        let mut s = LiveState::new(pattern(), 1.0, 3).unwrap();
        let mut prev = s.snapshot();
        for k in 1..=20 {
            s.tick(0.5);
            assert_eq!(s.sequence(), k);
            let now = s.snapshot();
            for (a, b) in prev.spectra().iter().zip(now.spectra()) {
                assert!(a.counts().iter().zip(b.counts()).all(|(x, y)| y >= x));
            }
            prev = now;
        }
        assert!(s.total_counts() > 0.0);
        assert_eq!(s.elapsed_s(), 10.0);
    }

    #[test]
    fn replay_reconstructs_every_later_snapshot() {
        let mut s = LiveState::new(pattern(), 2.0, 9).unwrap();
        let mut snaps = vec![s.snapshot()];
        for _ in 0..8 {
            s.tick(1.0);
            snaps.push(s.snapshot());
        }
        let mut replay = LiveState::new(pattern(), 2.0, 9).unwrap();
        let mut deltas = vec![];
        for _ in 0..8 {
            let since = replay.sequence();
            replay.tick(1.0);
            deltas.push(replay.delta_since(since).unwrap());
        }
        for j in 0..8 {
            let mut ds = snaps[j].clone();
            for d in &deltas[j..] {
                ds = apply_delta(&ds, d).unwrap();
            }
            assert_eq!(ds, snaps[8], "from {j}");
            let jump = apply_delta(&snaps[j], &s.delta_since(j as u64).unwrap()).unwrap();
            assert_eq!(jump, snaps[8]);
        }
    }

    #[test]
    fn same_seed_same_counts() {
        let run = |seed| {
            let mut s = LiveState::new(pattern(), 1.0, seed).unwrap();
            (0..5).for_each(|_| s.tick(1.0));
            s.snapshot()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn future_and_current_subscriptions() {
        let mut s = LiveState::new(pattern(), 1.0, 1).unwrap();
        s.tick(1.0);
        assert!(s.delta_since(2).is_none());
        assert!(s.delta_since(1).unwrap().changes.is_empty());
        assert!(LiveState::new(pattern(), -1.0, 1).is_err());
    }
}
