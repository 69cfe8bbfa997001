use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use super::protocol::{write_message, ErrorCode, Message, RunSummary};
use super::server::{send_chunked, spawn, Handler, Out, ServerHandle};
use crate::retrievers::{self, trf, LoadSelection, RetrieverError};

/// Default size of one data frame's body.
pub const DEFAULT_CHUNK: usize = 8 << 20;

#[derive(Debug, Clone)]
pub struct FileServerConfig {
    pub root: PathBuf,
    /// Bytes of reply body per `Data` frame.
    pub chunk: usize,
}

impl FileServerConfig {
    pub fn new(root: impl Into<PathBuf>) -> FileServerConfig {
        FileServerConfig {
            root: root.into(),
            chunk: DEFAULT_CHUNK,
        }
    }
}

/// Serves the `*.trf` files directly inside `root`. Runs are addressed by
/// file name.
pub fn serve_files(
    root: impl Into<PathBuf>,
    addr: impl ToSocketAddrs,
) -> std::io::Result<ServerHandle> {
    serve_files_with(FileServerConfig::new(root), addr)
}

pub fn serve_files_with(
    cfg: FileServerConfig,
    addr: impl ToSocketAddrs,
) -> std::io::Result<ServerHandle> {
    std::fs::read_dir(&cfg.root)?;
    spawn(addr, FileHandler { cfg })
}

struct FileHandler {
    cfg: FileServerConfig,
}

/// Run files in `root`, sorted by name.
pub fn list_run_files(root: &Path) -> std::io::Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_ok_and(|t| t.is_file()))
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".trf"))
        .collect();
    names.sort();
    Ok(names)
}

fn file_error(e: &RetrieverError) -> Message {
    match e.root() {
        RetrieverError::Selection { .. } => Message::error(ErrorCode::BadRequest, e.to_string()),
        _ if e.is_io() => Message::error(ErrorCode::Internal, e.to_string()),
        _ => Message::error(ErrorCode::BadData, e.to_string()),
    }
}

impl FileHandler {
    /// Path of run `name`, or a NotFound reply. Only plain file names inside
    /// the root are addressable.
    fn locate(&self, name: &str) -> Result<PathBuf, Message> {
        let plain = !name.is_empty()
            && !name.starts_with('.')
            && !name.contains(['/', '\\'])
            && name.ends_with(".trf");
        let path = self.cfg.root.join(name);
        if plain && path.is_file() {
            Ok(path)
        } else {
            Err(Message::error(
                ErrorCode::NotFound,
                format!("no run {name:?}"),
            ))
        }
    }
}

impl Handler for FileHandler {
    fn name(&self) -> &str {
        "tofbench file server"
    }

    fn handle(&self, msg: Message, out: &mut Out<'_>, _stop: &AtomicBool) -> std::io::Result<()> {
        let reply = match msg {
            Message::ListRuns => match list_run_files(&self.cfg.root) {
                Err(e) => Message::error(ErrorCode::Internal, e.to_string()),
                Ok(names) => Message::RunList(
                    names
                        .into_iter()
                        .filter_map(|name| match trf::probe(&self.cfg.root.join(&name)) {
                            Ok(d) => Some(RunSummary {
                                instrument: d.instrument.clone(),
                                run_number: d.run_number,
                                start_time: d.start_time,
                                n_datasets: d.n_datasets(),
                                file_len: d.file_len(),
                                name,
                            }),
                            Err(e) => {
                                log::warn!("skipping unreadable run file {name}: {e}");
                                None
                            }
                        })
                        .collect(),
                ),
            },
            Message::RunInfo { run } => match self.locate(&run) {
                Err(m) => m,
                Ok(path) => match trf::probe(&path) {
                    Ok(directory) => Message::RunDirectory { run, directory },
                    Err(e) => file_error(&e),
                },
            },
            Message::GetData { run, selection } => match self.locate(&run) {
                Err(m) => m,
                Ok(path) => match encode_selection(&path, &selection) {
                    Ok(body) => return send_chunked(out, &body, self.cfg.chunk),
                    Err(e) => file_error(&e),
                },
            },
            other => Message::error(
                ErrorCode::Unsupported,
                format!("the file server does not handle {:?}", other.msg_type()),
            ),
        };
        write_message(out, &reply)
    }
}

/// Reply body of a data request: `u64 sequence` then the selection as an
/// in-memory run file.
pub(crate) fn data_body(sequence: u64, run: &retrievers::Run) -> Vec<u8> {
    let mut body = Vec::new();
    body.extend_from_slice(&sequence.to_le_bytes());
    trf::write_run_to(&mut body, run).expect("writing to a Vec cannot fail");
    body
}

fn encode_selection(path: &Path, sel: &LoadSelection) -> retrievers::Result<Vec<u8>> {
    let run = trf::load_run(path, sel)?;
    Ok(data_body(0, &run))
}
