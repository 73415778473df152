//! On-disk formats.
//!
//! A run bundle is a directory with `run.json` (run metadata and per-sample
//! metadata) and `retention.csv` (header `sample_id,e0,…,e{E-1}`, one row per
//! sample sorted by id, cells 0 or 1). Everything is written as UTF-8 with LF
//! line endings and floats rounded to 9 significant digits, so identical
//! inputs always produce identical bytes.

mod bundle;
mod reports;

use std::fs;
use std::path::Path;

use serde::Serializer;

pub use bundle::{load_bundle, save_bundle, RunBundle, RETENTION_FILE, RUN_FILE};
pub use reports::{
    read_fits, read_value_columns, write_class_table, write_fits, write_json, write_overlap,
    write_retention_stats, write_selection_counts, write_truth, write_weights, FITS_HEADER,
};

use crate::{Error, Result};

/// `x` with 9 significant digits, in the shortest of fixed or exponent
/// notation (`%.9g` style, trailing zeros removed).
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        format!("{mantissa}e{exp}")
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to the value [`format_float`] would print.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_float(x).parse().expect("formatted float parses")
}

/// Serde helper: finite floats only, rounded to 9 significant digits.
pub fn serialize_f64<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if !x.is_finite() {
        return Err(serde::ser::Error::custom(format!("non-finite value {x} in report")));
    }
    s.serialize_f64(round_sig9(*x))
}

pub fn serialize_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => serialize_f64(v, s),
        None => s.serialize_none(),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(io_err(path))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(io_err(path))
}
