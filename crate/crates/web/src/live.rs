use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::Response;
use serde::Deserialize;
use serde_json::{json, Value};
use tofbench::dataserver::{AbortHandle, Client, ClientOptions, Delta, LiveStatus};
use tokio::sync::mpsc;

use crate::{ApiError, AppState};

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct LiveParams {
    #[serde(default)]
    since: u64,
}

fn status_json(s: &LiveStatus) -> Value {
    json!({
        "type": "status",
        "sequence": s.sequence,
        "elapsed_s": s.elapsed_s,
        "total_counts": s.total_counts,
        "paused": s.paused,
        "n_spectra": s.n_spectra,
        "n_bins": s.n_bins,
    })
}

fn delta_json(d: &Delta) -> Value {
    let changes: Vec<(u32, u32, f32)> = d
        .changes
        .iter()
        .map(|c| (c.spectrum, c.bin, c.count))
        .collect();
    json!({
        "type": "delta",
        "sequence": d.sequence,
        "elapsed_s": d.elapsed_s,
        "changes": changes,
    })
}

/// Forwards the live server's status and then every delta after `since`
/// as JSON text messages: `{"type":"status",..}`, then
/// `{"type":"delta","sequence","elapsed_s","changes":[[spectrum,bin,count],..]}`.
/// Spectrum numbers are positions in the live dataset. A failure is sent as
/// `{"type":"error","message"}` before closing.
pub(crate) async fn live(
    State(state): State<Arc<AppState>>,
    Query(p): Query<LiveParams>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let addr = state
        .live
        .ok_or_else(|| ApiError::NotFound("no live data server configured".into()))?;
    Ok(ws.on_upgrade(move |socket| forward(socket, addr, p.since)))
}

fn pump(
    addr: std::net::SocketAddr,
    since: u64,
    tx: mpsc::Sender<Value>,
    abort_tx: std::sync::mpsc::Sender<AbortHandle>,
) {
    let run = || -> Result<(), tofbench::dataserver::ClientError> {
        // Deltas may be far apart while the source is paused.
        let opts = ClientOptions {
            timeout: None,
            ..ClientOptions::default()
        };
        let mut client = Client::connect_with(addr, opts)?;
        let _ = abort_tx.send(client.abort_handle()?);
        if tx.blocking_send(status_json(&client.status()?)).is_err() {
            return Ok(());
        }
        for d in client.subscribe(since, 0)? {
            if tx.blocking_send(delta_json(&d?)).is_err() {
                break;
            }
        }
        Ok(())
    };
    if let Err(e) = run() {
        let _ = tx.blocking_send(json!({ "type": "error", "message": e.to_string() }));
    }
}

async fn forward(mut socket: WebSocket, addr: std::net::SocketAddr, since: u64) {
    let (tx, mut rx) = mpsc::channel::<Value>(16);
    let (abort_tx, abort_rx) = std::sync::mpsc::channel();
    let worker = tokio::task::spawn_blocking(move || pump(addr, since, tx, abort_tx));
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Some(v) => {
                    let done = v["type"] == "error";
                    if socket.send(Message::Text(v.to_string().into())).await.is_err() || done {
                        break;
                    }
                }
                None => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
        }
    }
    drop(rx);
    if let Ok(h) = abort_rx.try_recv() {
        h.abort();
    }
    let _ = worker.await;
    let _ = socket.send(Message::Close(None)).await;
}
