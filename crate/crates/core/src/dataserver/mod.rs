//! TCP servers for run files and live data, and a blocking client.
//!
//! Every message is one frame (see [`protocol`]). A session opens with a
//! client HELLO answered by a server HELLO carrying the same protocol
//! version, and ends with BYE. The file server answers LIST_RUNS, RUN_INFO
//! and GET_DATA from a directory of run files, reading only the selected
//! payload from disk; the live server accumulates Poisson counts from a rate
//! pattern and answers GET_DATA (the current snapshot), SUBSCRIBE (deltas of
//! changed bins) and STATUS.
//!
//! ```no_run
//! use tofbench::dataserver::{serve_files, Client};
//! use tofbench::retrievers::LoadSelection;
//!
//! let server = serve_files("runs", "127.0.0.1:0")?;
//! let mut client = Client::connect(server.local_addr())?;
//! for run in client.list_runs()? {
//!     let first = client.fetch(&run.name, &LoadSelection::all().with_spectra([0]))?;
//!     println!("{}: {} datasets", run.name, first.len());
//! }
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

mod client;
mod files;
mod live;
mod live_server;
pub mod protocol;
mod server;

pub use client::{AbortHandle, Client, ClientError, ClientOptions, Fetched, Subscription};
pub use files::{list_run_files, serve_files, serve_files_with, FileServerConfig, DEFAULT_CHUNK};
pub use live::{apply_delta, LiveSource, LiveState};
pub use live_server::{serve_live, LiveConfig, LiveServer, LIVE_RUN};
pub use protocol::{
    decode_frame, encode_frame, BinChange, Delta, ErrorCode, FrameError, LiveStatus, Message,
    RunSummary,
};
pub use server::ServerHandle;

/// Default TCP port when neither a flag nor `TOFBENCH_PORT` gives one.
pub const DEFAULT_PORT: u16 = 7177;
