use std::net::ToSocketAddrs;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use super::files::{data_body, DEFAULT_CHUNK};
use super::live::{LiveSource, LiveState};
use super::protocol::{write_message, Delta, ErrorCode, Message, RunSummary};
use super::server::{send_chunked, spawn, Handler, Out, ServerHandle};
use crate::dataset::{DataError, DataSet};
use crate::retrievers::trf::probe_from;
use crate::retrievers::{DatasetKind, Run, RunDataset};
use std::io::Write;

/// Name under which the live dataset is fetched with `GET_DATA`.
pub const LIVE_RUN: &str = "live";

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub rate_scale: f64,
    pub seed: u64,
    /// Wall-clock time between ticks; `None` ticks only on
    /// [`LiveServer::step`].
    pub tick_interval: Option<Duration>,
    /// Simulated acquisition time per tick (s).
    pub dt_s: f64,
    pub start_paused: bool,
    /// Changed bins per `DELTA` frame.
    pub max_changes_per_frame: usize,
}

impl Default for LiveConfig {
    fn default() -> LiveConfig {
        LiveConfig {
            rate_scale: 1.0,
            seed: 0,
            tick_interval: Some(Duration::from_millis(200)),
            dt_s: 1.0,
            start_paused: false,
            max_changes_per_frame: 1 << 20,
        }
    }
}

/// A running live-data server with control over its simulator.
#[derive(Debug)]
pub struct LiveServer {
    handle: ServerHandle,
    source: Arc<LiveSource>,
}

impl LiveServer {
    pub fn local_addr(&self) -> std::net::SocketAddr {
        self.handle.local_addr()
    }

    pub fn source(&self) -> &LiveSource {
        &self.source
    }

    pub fn step(&self, n: u32) {
        self.source.step(n)
    }

    pub fn pause(&self) {
        self.source.pause()
    }

    pub fn resume(&self) {
        self.source.resume()
    }

    pub fn shutdown(self) {
        self.handle.shutdown()
    }

    pub fn wait(self) {
        self.handle.wait()
    }
}

/// Starts a live server accumulating Poisson counts from `pattern` (rates
/// in counts/s per bin).
pub fn serve_live(
    pattern: DataSet,
    cfg: LiveConfig,
    addr: impl ToSocketAddrs,
) -> std::io::Result<LiveServer> {
    let state = LiveState::new(pattern, cfg.rate_scale, cfg.seed)
        .map_err(|e: DataError| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let source = Arc::new(LiveSource::new(state, cfg.dt_s, cfg.start_paused));
    let ticker = cfg.tick_interval.map(|i| source.spawn_ticker(i));
    let handler = LiveHandler {
        source: Arc::clone(&source),
        max_changes: cfg.max_changes_per_frame.max(1),
        ticker: std::sync::Mutex::new(ticker),
    };
    Ok(LiveServer {
        handle: spawn(addr, handler)?,
        source,
    })
}

struct LiveHandler {
    source: Arc<LiveSource>,
    max_changes: usize,
    ticker: std::sync::Mutex<Option<std::thread::JoinHandle<()>>>,
}

impl LiveHandler {
    fn send_delta(&self, out: &mut Out<'_>, d: Delta) -> std::io::Result<()> {
        if d.changes.len() <= self.max_changes {
            return write_message(out, &Message::Delta(d));
        }
        let mut parts = d.changes.chunks(self.max_changes).peekable();
        while let Some(p) = parts.next() {
            write_message(
                out,
                &Message::Delta(Delta {
                    sequence: d.sequence,
                    elapsed_s: d.elapsed_s,
                    more: parts.peek().is_some(),
                    changes: p.to_vec(),
                }),
            )?;
        }
        Ok(())
    }

    fn subscribe(
        &self,
        since: u64,
        max_deltas: u32,
        out: &mut Out<'_>,
        stop: &AtomicBool,
    ) -> std::io::Result<()> {
        let first = self.source.lock().delta_since(since);
        let Some(first) = first else {
            let current = self.source.lock().sequence();
            return write_message(
                out,
                &Message::error(
                    ErrorCode::BadRequest,
                    format!(
                        "subscription since {since} is ahead of the current sequence {current}"
                    ),
                ),
            );
        };
        let mut last = first.sequence;
        self.send_delta(out, first)?;
        out.flush()?;
        let mut sent = 0u32;
        while max_deltas == 0 || sent < max_deltas {
            let stopping =
                || stop.load(std::sync::atomic::Ordering::SeqCst) || self.source.stopped();
            if stopping() {
                break;
            }
            if self.source.wait_past(last, Duration::from_millis(250)) <= last {
                continue;
            }
            let d = self
                .source
                .lock()
                .delta_since(last)
                .expect("sequence only grows");
            last = d.sequence;
            self.send_delta(out, d)?;
            out.flush()?;
            sent += 1;
        }
        Ok(())
    }

    /// Current sequence and the live dataset as a one-dataset run, read
    /// together.
    fn snapshot_run(&self) -> (u64, Run) {
        let (sequence, data) = {
            let s = self.source.lock();
            (s.sequence(), s.snapshot())
        };
        let run = Run {
            instrument: LIVE_RUN.into(),
            run_number: 0,
            start_time: 0,
            datasets: vec![RunDataset {
                kind: DatasetKind::Histogram,
                data,
            }],
        };
        (sequence, run)
    }
}

impl Handler for LiveHandler {
    fn name(&self) -> &str {
        "tofbench live server"
    }

    fn handle(&self, msg: Message, out: &mut Out<'_>, stop: &AtomicBool) -> std::io::Result<()> {
        let reply = match msg {
            Message::StatusRequest => Message::Status(self.source.status()),
            Message::Subscribe { since, max_deltas } => {
                return self.subscribe(since, max_deltas, out, stop)
            }
            Message::ListRuns => {
                let (_, run) = self.snapshot_run();
                let image = data_body(0, &run);
                Message::RunList(vec![RunSummary {
                    name: LIVE_RUN.into(),
                    instrument: run.instrument,
                    run_number: run.run_number,
                    start_time: run.start_time,
                    n_datasets: 1,
                    file_len: (image.len() - 8) as u64,
                }])
            }
            Message::RunInfo { run } if run == LIVE_RUN => {
                let (_, snapshot) = self.snapshot_run();
                let image = data_body(0, &snapshot);
                match probe_from(&image[8..], (image.len() - 8) as u64) {
                    Ok(directory) => Message::RunDirectory { run, directory },
                    Err(e) => Message::error(ErrorCode::Internal, e.to_string()),
                }
            }
            Message::GetData { run, selection } if run == LIVE_RUN => {
                let (sequence, run) = self.snapshot_run();
                match selection.restrict(&[run.datasets[0].data.clone()]) {
                    Ok(mut picked) => {
                        let run = Run {
                            datasets: picked
                                .drain(..)
                                .map(|data| RunDataset {
                                    kind: DatasetKind::Histogram,
                                    data,
                                })
                                .collect(),
                            ..run
                        };
                        return send_chunked(out, &data_body(sequence, &run), DEFAULT_CHUNK);
                    }
                    Err(e) => Message::error(ErrorCode::BadRequest, e.to_string()),
                }
            }
            Message::RunInfo { run } | Message::GetData { run, .. } => Message::error(
                ErrorCode::NotFound,
                format!("no run {run:?}; the live dataset is {LIVE_RUN:?}"),
            ),
            other => Message::error(
                ErrorCode::Unsupported,
                format!("the live server does not handle {:?}", other.msg_type()),
            ),
        };
        write_message(out, &reply)?;
        out.flush()
    }

    fn shutdown(&self) {
        self.source.stop();
        if let Some(t) = self.ticker.lock().unwrap_or_else(|p| p.into_inner()).take() {
            let _ = t.join();
        }
    }
}
