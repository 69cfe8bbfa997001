//! A small batch language for repetitive reductions over many run files.
//!
//! Statements are newline-terminated: `name = expr`, a command call
//! `Cmd(arg, ...)`, or `for id in expr ... endfor`. Strings are
//! double-quoted, `&` concatenates, numbers are `f64`. Each command maps
//! onto one library operation; see [`COMMANDS`].
//!
//! ```
//! use tofbench::scripting::{execute, parse, Env};
//!
//! let script = parse("greeting = \"hi\" & \" there\"\nEcho(greeting)\n").unwrap();
//! let mut env = Env::new(".");
//! let mut out = Vec::new();
//! execute(&script, &mut env, &mut out).unwrap();
//! assert_eq!(String::from_utf8(out).unwrap(), "hi there\n");
//! ```

mod ast;
mod interp;
mod lexer;
mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use ast::{Call, Expr, Script, Stmt, StmtKind};
pub use interp::{builtin_files, execute};
pub use parser::parse;

use crate::dataset::{DataSet, Spectrum};
use crate::operators::OpError;
use crate::retrievers::{RetrieverError, Run};

/// The reduction pipeline used for the merged temperature scan: for every run
/// file, take the 90° bank, normalize to the beam monitor, label each spectrum
/// with its run number and start time, and merge.
pub const REFERENCE_SCRIPT: &str = r#"all = EmptyDataSet("tof_us")
for f in files("runs/*.trf")
  r = Load(f)
  b = ExtractBank(r, "bank_angle_deg", 90)
  b = Normalize(b, "monitor")
  b = SetLabel(b, "{run_number} {start_time}")
  all = Merge(all, b)
endfor
Save(all, "merged.trf", "trf")
"#;

/// Commands and builtins with their argument signatures.
pub const COMMANDS: &[(&str, &str)] = &[
    ("EmptyDataSet", "(units)"),
    ("files", "(pattern) -> list of paths, sorted"),
    ("Load", "(path) -> run"),
    ("ExtractBank", "(run|dataset, attribute, value)"),
    (
        "Normalize",
        "(dataset, \"monitor\") | (dataset, \"time\"|\"scalar\", number)",
    ),
    ("SetLabel", "(dataset, template)"),
    ("Merge", "(dataset, dataset)"),
    ("Focus", "(dataset, theta_deg, l1_m, l2_m)"),
    ("ConvertUnits", "(dataset, units)"),
    ("Group", "(dataset[, attribute])"),
    ("Rebin", "(dataset, start, end, nbins)"),
    ("Sort", "(dataset, key[, \"asc\"|\"desc\"])"),
    ("Save", "(run|dataset, path, \"trf\"|\"ascii\"|\"json\")"),
    ("Echo", "(value, ...)"),
];

pub(crate) fn is_command(name: &str) -> bool {
    COMMANDS.iter().any(|(n, _)| *n == name)
}

/// A dataset plus the context it was extracted from.
#[derive(Debug, Clone)]
pub struct DataHandle {
    pub data: Arc<DataSet>,
    /// Beam monitor of the source run, used by `Normalize(ds, "monitor")`.
    pub monitor: Option<Arc<Spectrum>>,
    pub instrument: Option<String>,
}

impl DataHandle {
    pub fn new(data: DataSet) -> DataHandle {
        DataHandle {
            data: Arc::new(data),
            monitor: None,
            instrument: None,
        }
    }

    /// Same provenance, new data.
    fn derive(&self, data: DataSet) -> DataHandle {
        DataHandle {
            data: Arc::new(data),
            monitor: self.monitor.clone(),
            instrument: self.instrument.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    Number(f64),
    Str(String),
    DataSet(DataHandle),
    Run(Arc<Run>),
    List(Vec<Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Number(_) => "number",
            Value::Str(_) => "string",
            Value::DataSet(_) => "dataset",
            Value::Run(_) => "run",
            Value::List(_) => "list",
        }
    }

    pub fn as_dataset(&self) -> Option<&DataSet> {
        match self {
            Value::DataSet(h) => Some(&h.data),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(x) => write!(f, "{x}"),
            Value::Str(s) => f.write_str(s),
            Value::DataSet(h) => write!(
                f,
                "<dataset {:?}: {} spectra, {}>",
                h.data.title(),
                h.data.len(),
                h.data.x_units()
            ),
            Value::Run(r) => write!(
                f,
                "<run {} {}: {} datasets>",
                r.instrument,
                r.run_number,
                r.datasets.len()
            ),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

/// Interpreter state: the variable map and the directory relative paths are
/// resolved against.
#[derive(Debug, Clone)]
pub struct Env {
    pub vars: BTreeMap<String, Value>,
    pub base_dir: PathBuf,
}

impl Env {
    pub fn new(base_dir: impl AsRef<Path>) -> Env {
        Env {
            vars: BTreeMap::new(),
            base_dir: base_dir.as_ref().to_path_buf(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn dataset(&self, name: &str) -> Option<&DataSet> {
        self.get(name).and_then(Value::as_dataset)
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.base_dir.join(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErrorKind {
    Syntax(String),
    UnknownCommand(String),
    Unbound(String),
    /// Wrong argument count or type, or an invalid argument value.
    Argument(String),
    Pattern(String),
    Op(OpError),
    /// Reading or writing a file failed; `io` distinguishes OS-level
    /// failures from malformed content.
    File {
        message: String,
        io: bool,
    },
    Output(String),
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorKind::Syntax(m) => write!(f, "syntax error: {m}"),
            ErrorKind::UnknownCommand(c) => write!(f, "unknown command {c:?}"),
            ErrorKind::Unbound(v) => write!(f, "variable {v:?} is not bound"),
            ErrorKind::Argument(m) => f.write_str(m),
            ErrorKind::Pattern(m) => write!(f, "invalid file pattern: {m}"),
            ErrorKind::Op(e) => write!(f, "{e}"),
            ErrorKind::File { message, .. } => f.write_str(message),
            ErrorKind::Output(m) => write!(f, "writing output: {m}"),
        }
    }
}

impl From<OpError> for ErrorKind {
    fn from(e: OpError) -> Self {
        ErrorKind::Op(e)
    }
}

impl From<RetrieverError> for ErrorKind {
    fn from(e: RetrieverError) -> Self {
        ErrorKind::File {
            io: e.is_io(),
            message: e.to_string(),
        }
    }
}

/// A parse or runtime error attributed to a script position. Runtime errors
/// point at the failing statement; `loops` lists the enclosing for-loops
/// (outermost first) with the loop variable's value at the time.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptError {
    pub line: usize,
    pub col: usize,
    pub kind: ErrorKind,
    pub loops: Vec<LoopFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopFrame {
    pub line: usize,
    pub var: String,
    pub value: String,
}

impl ScriptError {
    pub(crate) fn new(line: usize, col: usize, kind: ErrorKind) -> ScriptError {
        ScriptError {
            line,
            col,
            kind,
            loops: Vec::new(),
        }
    }

    /// Line of the outermost enclosing for-loop, or the statement's own line.
    pub fn top_line(&self) -> usize {
        self.loops.first().map_or(self.line, |l| l.line)
    }
}

impl fmt::Display for ScriptError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}:{}", self.line, self.col)?;
        for l in self.loops.iter().rev() {
            write!(
                f,
                " (in for loop at line {}, {} = {:?})",
                l.line, l.var, l.value
            )?;
        }
        write!(f, ": {}", self.kind)
    }
}

impl std::error::Error for ScriptError {}
