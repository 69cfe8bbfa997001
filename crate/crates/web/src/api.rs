use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::Json;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tofbench::dataserver::{list_run_files, Client, LIVE_RUN};
use tofbench::dataset::{Attribute, DataSet};
use tofbench::retrievers::{probe, read_runfile, LoadSelection, RunFileDirectory};
use tofbench::views::{
    cursor_readout, find_slice_for_cursor, image_raster, point_cloud, time_slice, Aggregate, Grid,
    IntensityScale, Point, PointMode, RasterResult, Readout, Viewport, COLORMAP,
};

use crate::{ApiError, AppState};

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

/// Runs CPU- and file-bound work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

fn run_path(state: &AppState, run: &str) -> Result<PathBuf, ApiError> {
    let plain = !run.is_empty()
        && !run.starts_with('.')
        && !run.contains(['/', '\\'])
        && run.ends_with(".trf");
    let path = state.root.join(run);
    if plain && path.is_file() {
        Ok(path)
    } else {
        Err(ApiError::NotFound(format!("no run named {run:?}")))
    }
}

fn is_live(state: &AppState, run: &str) -> bool {
    state.live.is_some() && run == LIVE_RUN
}

fn live_client(state: &AppState) -> Result<Client, ApiError> {
    Ok(Client::connect(state.live.expect("live address"))?)
}

fn load(state: &AppState, run: &str, sel: &LoadSelection) -> Result<Vec<DataSet>, ApiError> {
    if is_live(state, run) {
        Ok(live_client(state)?.fetch(LIVE_RUN, sel)?)
    } else {
        Ok(read_runfile(&run_path(state, run)?, sel)?)
    }
}

fn load_dataset(state: &AppState, run: &str, ds: u32) -> Result<DataSet, ApiError> {
    Ok(load(state, run, &LoadSelection::datasets([ds]))?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub name: String,
    pub instrument: String,
    pub run_number: u32,
    pub start_time: i64,
    pub n_datasets: u32,
    pub live: bool,
}

fn run_info(name: String, dir: &RunFileDirectory, live: bool) -> RunInfo {
    RunInfo {
        name,
        instrument: dir.instrument.clone(),
        run_number: dir.run_number,
        start_time: dir.start_time,
        n_datasets: dir.n_datasets(),
        live,
    }
}

pub(crate) async fn runs(State(state): Shared) -> ApiResult<Vec<RunInfo>> {
    blocking(move || {
        let names = list_run_files(&state.root)
            .map_err(|e| ApiError::Internal(format!("{}: {e}", state.root.display())))?;
        let mut out = Vec::with_capacity(names.len() + 1);
        for name in names {
            // Files that are not valid run files are skipped rather than
            // failing the whole listing.
            match probe(&state.root.join(&name)) {
                Ok(dir) => out.push(run_info(name, &dir, false)),
                Err(e) => log::warn!("skipping {name}: {e}"),
            }
        }
        if state.live.is_some() {
            let dir = live_client(&state)?.run_info(LIVE_RUN)?;
            out.push(run_info(LIVE_RUN.into(), &dir, true));
        }
        Ok(Json(out))
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub index: u32,
    pub name: String,
    pub kind: String,
    pub n_spectra: u32,
    pub n_bins: u32,
}

pub(crate) async fn datasets(
    State(state): Shared,
    Path(run): Path<String>,
) -> ApiResult<Vec<DatasetInfo>> {
    blocking(move || {
        let dir = if is_live(&state, &run) {
            live_client(&state)?.run_info(LIVE_RUN)?
        } else {
            probe(&run_path(&state, &run)?)?
        };
        Ok(Json(
            dir.entries
                .iter()
                .enumerate()
                .map(|(i, e)| DatasetInfo {
                    index: i as u32,
                    name: e.name.clone(),
                    kind: e.kind.name().into(),
                    n_spectra: e.n_spectra,
                    n_bins: e.n_bins,
                })
                .collect(),
        ))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct RasterParams {
    run: String,
    #[serde(default)]
    ds: u32,
    width: u32,
    height: u32,
    #[serde(default)]
    row_offset: u32,
    #[serde(default)]
    col_offset: u32,
    #[serde(default = "yes")]
    compress: bool,
    #[serde(default)]
    scale: IntensityScale,
    #[serde(default)]
    aggregate: Aggregate,
    /// Cursor position, for the readout.
    px: Option<u32>,
    py: Option<u32>,
}

fn yes() -> bool {
    true
}

impl RasterParams {
    fn viewport(&self) -> Viewport {
        Viewport {
            width_px: self.width,
            height_px: self.height,
            row_offset: self.row_offset,
            col_offset: self.col_offset,
            horizontal_compression: self.compress,
            intensity_scale: self.scale,
            aggregate: self.aggregate,
        }
    }
}

/// [`RasterResult`] with the pixels as base64 of the row-major u8 indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterJson {
    pub width: u32,
    pub height: u32,
    pub pixels: String,
    pub row_map: Vec<u32>,
    pub row_index: Vec<u32>,
    pub col_map: Vec<(u32, u32)>,
    pub value_range: (f64, f64),
    pub row_height: u32,
    pub n_spectra: u32,
    pub n_bins: u32,
}

impl RasterJson {
    pub fn new(rr: &RasterResult, ds: &DataSet) -> RasterJson {
        RasterJson {
            width: rr.width,
            height: rr.height,
            pixels: base64::engine::general_purpose::STANDARD.encode(&rr.pixels),
            row_map: rr.row_map.clone(),
            row_index: rr.row_index.clone(),
            col_map: rr.col_map.clone(),
            value_range: rr.value_range,
            row_height: rr.row_height,
            n_spectra: ds.len() as u32,
            n_bins: ds.max_nbins() as u32,
        }
    }

    pub fn decode_pixels(&self) -> Result<Vec<u8>, base64::DecodeError> {
        base64::engine::general_purpose::STANDARD.decode(&self.pixels)
    }
}

pub(crate) async fn raster(
    State(state): Shared,
    Query(p): Query<RasterParams>,
) -> ApiResult<RasterJson> {
    blocking(move || {
        let ds = load_dataset(&state, &p.run, p.ds)?;
        let rr = image_raster(&ds, &p.viewport())?;
        Ok(Json(RasterJson::new(&rr, &ds)))
    })
    .await
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ReadoutJson {
    #[serde(flatten)]
    readout: Readout,
    /// Channel a linked slice view should show.
    channel: u32,
}

pub(crate) async fn readout(
    State(state): Shared,
    Query(p): Query<RasterParams>,
) -> ApiResult<ReadoutJson> {
    let (Some(px), Some(py)) = (p.px, p.py) else {
        return Err(ApiError::BadRequest("readout needs px and py".into()));
    };
    blocking(move || {
        let ds = load_dataset(&state, &p.run, p.ds)?;
        let rr = image_raster(&ds, &p.viewport())?;
        Ok(Json(ReadoutJson {
            readout: cursor_readout(&ds, &rr, px, py)?,
            channel: find_slice_for_cursor(&ds, &rr, px, py)?,
        }))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct SpectrumParams {
    run: String,
    #[serde(default)]
    ds: u32,
    id: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub id: u32,
    pub group_id: u32,
    pub label: String,
    pub x_units: String,
    pub y_units: String,
    pub edges: Vec<f64>,
    pub counts: Vec<f32>,
    pub errors: Vec<f32>,
    pub attributes: Vec<Attribute>,
}

pub(crate) async fn spectrum(
    State(state): Shared,
    Query(p): Query<SpectrumParams>,
) -> ApiResult<SpectrumJson> {
    blocking(move || {
        let sel = LoadSelection::datasets([p.ds]).with_spectra([p.id]);
        let ds = load(&state, &p.run, &sel)?.remove(0);
        let s = &ds.spectra()[0];
        Ok(Json(SpectrumJson {
            id: s.id(),
            group_id: s.group_id(),
            label: s.label().into(),
            x_units: ds.x_units().name().into(),
            y_units: ds.y_units().into(),
            edges: s.xscale().edges(),
            counts: s.counts().to_vec(),
            errors: s.errors().to_vec(),
            attributes: s.attributes().to_vec(),
        }))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct SliceParams {
    run: String,
    #[serde(default)]
    ds: u32,
    channel: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct SliceJson {
    channel: u32,
    n_channels: u32,
    #[serde(flatten)]
    grid: Grid,
}

pub(crate) async fn slice(
    State(state): Shared,
    Query(p): Query<SliceParams>,
) -> ApiResult<SliceJson> {
    blocking(move || {
        let ds = load_dataset(&state, &p.run, p.ds)?;
        Ok(Json(SliceJson {
            channel: p.channel,
            n_channels: ds.max_nbins() as u32,
            grid: time_slice(&ds, p.channel)?,
        }))
    })
    .await
}

#[derive(Debug, Clone, Deserialize)]
pub(crate) struct PointsParams {
    run: String,
    #[serde(default)]
    ds: u32,
    #[serde(default = "total")]
    mode: String,
    channel: Option<u32>,
}

fn total() -> String {
    "total".into()
}

pub(crate) async fn points(
    State(state): Shared,
    Query(p): Query<PointsParams>,
) -> ApiResult<Vec<Point>> {
    let mode = match (p.mode.as_str(), p.channel) {
        ("total", _) => PointMode::Total,
        ("channel", Some(c)) => PointMode::Channel(c),
        ("channel", None) => {
            return Err(ApiError::BadRequest(
                "mode=channel needs a channel parameter".into(),
            ))
        }
        (m, _) => {
            return Err(ApiError::BadRequest(format!(
                "unknown mode {m:?}; expected total or channel"
            )))
        }
    };
    blocking(move || {
        let ds = load_dataset(&state, &p.run, p.ds)?;
        Ok(Json(point_cloud(&ds, mode)?))
    })
    .await
}

pub(crate) async fn colormap() -> Json<Vec<[u8; 3]>> {
    Json(COLORMAP.to_vec())
}
