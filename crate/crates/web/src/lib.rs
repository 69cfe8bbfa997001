//! HTTP/JSON and WebSocket API over the view computations, for the browser
//! viewer.
//!
//! Every endpoint is stateless: each request loads the part of the run it
//! needs (one dataset, or one spectrum) and computes the view from scratch.
//!
//! | route | reply |
//! |---|---|
//! | `GET /api/runs` | run files in the root, plus the live run if configured |
//! | `GET /api/runs/{run}/datasets` | dataset directory of a run |
//! | `GET /api/raster?run&ds&width&height&row_offset&col_offset&compress&scale&aggregate` | image raster, pixels base64 |
//! | `GET /api/readout?<raster params>&px&py` | cursor readout and linked slice channel |
//! | `GET /api/spectrum?run&ds&id` | one spectrum |
//! | `GET /api/slice?run&ds&channel` | time slice grid |
//! | `GET /api/points?run&ds&mode[&channel]` | 3D point cloud |
//! | `GET /api/colormap` | the 256 RGB colormap entries |
//! | `WS /api/live?since` | live status, then deltas as JSON |

mod api;
mod error;
mod live;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::get;
use axum::Router;

pub use api::{DatasetInfo, RasterJson, RunInfo, SpectrumJson};
pub use error::ApiError;

/// Where the API finds its data.
#[derive(Debug, Clone)]
pub struct AppState {
    /// Directory of `*.trf` run files.
    pub root: PathBuf,
    /// Address of a live data server, exposed as run `"live"`.
    pub live: Option<SocketAddr>,
}

impl AppState {
    pub fn new(root: impl Into<PathBuf>) -> AppState {
        AppState {
            root: root.into(),
            live: None,
        }
    }

    pub fn with_live(mut self, addr: SocketAddr) -> AppState {
        self.live = Some(addr);
        self
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/runs", get(api::runs))
        .route("/api/runs/{run}/datasets", get(api::datasets))
        .route("/api/raster", get(api::raster))
        .route("/api/readout", get(api::readout))
        .route("/api/spectrum", get(api::spectrum))
        .route("/api/slice", get(api::slice))
        .route("/api/points", get(api::points))
        .route("/api/colormap", get(api::colormap))
        .route("/api/live", get(live::live))
        .with_state(Arc::new(state))
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
