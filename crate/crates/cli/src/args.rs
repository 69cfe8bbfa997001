use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "tofbench",
    version,
    about = "Reduce, script, serve and view time-of-flight neutron data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Show a run file's header, datasets and sizes.
    Info { file: PathBuf },
    /// Convert the x axis of every histogram dataset, optionally time-focusing first.
    Convert(ConvertArgs),
    /// Run a batch script.
    Reduce {
        #[arg(long, value_name = "S.tbs")]
        script: PathBuf,
        /// Directory that relative paths in the script resolve against
        /// [default: the script's directory].
        #[arg(long)]
        base_dir: Option<PathBuf>,
    },
    /// Find, index and export single-crystal peaks.
    Peaks(PeaksArgs),
    /// Serve run files over the data protocol, optionally with the web API.
    Serve(ServeArgs),
    /// Serve a simulated live acquisition.
    Live(LiveArgs),
    /// Render a dataset's image view as a binary PGM.
    Raster(RasterArgs),
    /// Generate synthetic data.
    Gen {
        #[command(subcommand)]
        what: GenCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    D,
    Q,
    Wavelength,
    Tof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Trf,
    Ascii,
    Json,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub to: Target,
    /// Reference Bragg angle θ (degrees) and flight paths L1, L2 (m).
    #[arg(long, value_name = "REF_THETA,REF_L1,REF_L2", value_delimiter = ',')]
    pub focus: Option<Vec<f64>>,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output format [default: from the extension, else trf].
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct PeaksArgs {
    /// Run file holding an area-detector volume.
    pub file: PathBuf,
    /// Search the volume for peaks.
    #[arg(long)]
    pub find: bool,
    /// Read peaks from a peak list instead of searching.
    #[arg(long, value_name = "PEAKS.txt", conflicts_with = "find")]
    pub peaks: Option<PathBuf>,
    /// Index the peaks with a UB refined from the assignments in --ub-from.
    #[arg(long, requires = "ub_from")]
    pub index: bool,
    /// Seeded assignments, one `h k l qx qy qz` per line.
    #[arg(long, value_name = "ASSIGN.txt")]
    pub ub_from: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    pub k_sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Which dataset of the run holds the volume.
    #[arg(long, default_value_t = 0)]
    pub ds: u32,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "TOFBENCH_ROOT")]
    pub root: PathBuf,
    #[arg(long, env = "TOFBENCH_PORT", default_value_t = tofbench::dataserver::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Also serve the HTTP/WebSocket view API.
    #[arg(long)]
    pub ui: bool,
    #[arg(long, default_value_t = 8080)]
    pub http_port: u16,
    /// Live data server to expose as run "live" in the view API.
    #[arg(long, value_name = "HOST:PORT")]
    pub live: Option<String>,
}

#[derive(Debug, Args)]
pub struct LiveArgs {
    /// Run file whose first histogram dataset gives the count rates
    /// (counts/s per bin) [default: a generated single-crystal pattern].
    #[arg(long)]
    pub pattern: Option<PathBuf>,
    /// Multiplier on the pattern's rates.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "TOFBENCH_PORT", default_value_t = tofbench::dataserver::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Wall-clock milliseconds per simulated tick.
    #[arg(long, default_value_t = 200)]
    pub tick_ms: u64,
    /// Simulated seconds per tick.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Args)]
pub struct RasterArgs {
    pub file: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub ds: u32,
    #[arg(long)]
    pub width: u32,
    #[arg(long)]
    pub height: u32,
    #[arg(long, default_value_t = 0)]
    pub row_offset: u32,
    #[arg(long, default_value_t = 0)]
    pub col_offset: u32,
    /// Show one bin per column from --col-offset instead of compressing.
    #[arg(long)]
    pub no_compress: bool,
    #[arg(long, value_enum, default_value_t = Scale::Linear)]
    pub scale: Scale,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Powder runs (a temperature scan) plus the reference reduction script.
    Powder {
        #[arg(long, default_value_t = 120)]
        runs: u32,
        #[arg(long, default_value_t = 160)]
        spectra: u32,
        #[arg(long, default_value_t = 5000)]
        bins: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receives runs/*.trf and reduce.tbs.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// A single-crystal detector volume with seeded assignments.
    Scd {
        #[arg(long, default_value_t = 50)]
        reflections: usize,
        /// Relative q noise.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run file to write; the 5 seeded assignments go next to it as
        /// <stem>.assign.txt and the true reflections as <stem>.truth.txt.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// A live count-rate pattern for `tofbench live --pattern`.
    Live {
        #[arg(long, default_value_t = 32)]
        rows: u32,
        #[arg(long, default_value_t = 32)]
        cols: u32,
        #[arg(long, default_value_t = 200)]
        bins: u32,
        #[arg(long, default_value_t = 8)]
        peaks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
}
