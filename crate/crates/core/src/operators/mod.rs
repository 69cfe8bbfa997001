//! Pure reduction transforms over [`DataSet`](crate::dataset::DataSet)s.
//!
//! Every operation takes its inputs by reference and returns a fresh value.
//! Per-spectrum work runs on the rayon pool; output order always follows
//! input order.

mod combine;
mod focus;
mod rebin;
mod reduce;
mod units;

pub use combine::{extract_group, merge, relabel, sort_spectra, LabelTemplate, SortKey};
pub use focus::{focus_factor, time_focus, FocusParams};
pub use rebin::{rebin, rebin_values};
pub use reduce::{group_spectra, normalize, Normalization};
pub use units::{convert_units, tof_to_wavelength, H_OVER_MN};

use thiserror::Error;

use crate::dataset::{DataError, XUnits};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("spectrum {0} has no detector geometry")]
    MissingGeometry(u32),
    #[error("expected x units {expected}, dataset is in {found}")]
    WrongUnits { expected: XUnits, found: XUnits },
    #[error("cannot combine x units {0} and {1}")]
    UnitMismatch(XUnits, XUnits),
    #[error("spectrum {id}: {reason}")]
    Singular { id: u32, reason: String },
    #[error("spectrum {0} is missing from the grouping")]
    Ungrouped(u32),
    #[error("unknown placeholder {{{0}}} in label template")]
    UnknownPlaceholder(String),
    #[error("unterminated placeholder in label template {0:?}")]
    BadTemplate(String),
    #[error("spectrum {id}: cannot resolve {key:?}")]
    Unresolved { id: u32, key: String },
}

pub type Result<T, E = OpError> = std::result::Result<T, E>;
