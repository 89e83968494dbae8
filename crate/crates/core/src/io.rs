//! Scenario files, run reports and CSV output.
//!
//! Scenario files are TOML with `[domain]`, `[coefficients]`, `[initial]`
//! and an optional `[numerics]` section. Coefficients are tagged tables:
//!
//! ```toml
//! [domain]
//! lengths = [1.0]
//! cells = [256]
//!
//! [coefficients]
//! alpha = { kind = "gauss_bump", base = 0.5, amp = 1.2, center = 0.5, width = 0.1 }
//! mu = { kind = "constant", value = 1.0 }
//! d_s = { kind = "constant", value = 1.0 }
//! d_i = { kind = "constant", value = 0.01 }
//!
//! [initial]
//! s0 = { kind = "constant", value = 1.0 }
//! i0 = { kind = "cosine", base = 1e-2, amp = 1e-2, freq = 1.0 }
//! ```
//!
//! Every float written by this module carries 17 significant digits so
//! that reports are reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::pde::{TraceRow, TRACE_COLUMNS};
use crate::scenario::{Scenario, ScenarioSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Parses scenario text; table paths resolve against `base_dir`.
pub fn parse_scenario_str(text: &str, base_dir: &Path) -> Result<Scenario> {
    let mut spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
    spec.load_tables(base_dir)?;
    Scenario::new(spec)
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_scenario_str(&text, base)
}

/// Canonical TOML form of a spec (defaults made explicit).
pub fn serialize_scenario(spec: &ScenarioSpec) -> Result<String> {
    toml::to_string(spec).map_err(|e| Error::invalid(format!("cannot serialize scenario: {e}")))
}

/// SHA-256 of the canonical TOML, hex encoded.
pub fn scenario_hash(spec: &ScenarioSpec) -> Result<String> {
    let canonical = serialize_scenario(spec)?;
    Ok(hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// 17 significant digits; positional for exponents in `[-5, 16)`, otherwise
/// scientific. Non-finite values print as `NaN`, `inf`, `-inf`.
pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if !(-5..16).contains(&exp) {
        return sci;
    }
    let (sign, mant) = match mant.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mant),
    };
    let digits: String = mant.chars().filter(|c| *c != '.').collect();
    if exp >= 0 {
        let split = exp as usize + 1;
        format!("{sign}{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("{sign}0.{}{digits}", "0".repeat((-exp - 1) as usize))
    }
}

/// Pretty JSON whose floats go through [`format_f64`].
struct ReportFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for ReportFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17-digit floats and a trailing
/// newline. Non-finite floats become `null`.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = ReportFormatter {
        inner: serde_json::ser::PrettyFormatter::new(),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// The JSON document every subcommand prints.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub scenario_hash: Option<String>,
    pub lambda1: Option<f64>,
    pub classification: Option<String>,
    pub averaged_r0: Option<f64>,
    pub averaged_classification: Option<String>,
    pub d_star: Option<f64>,
    pub s_infinity: Option<f64>,
    pub s_infinity_averaged: Option<f64>,
    pub epsilon_empirical: Option<f64>,
    pub trace_path: Option<String>,
    pub table_path: Option<String>,
    pub field_paths: BTreeMap<String, String>,
    /// Wall-clock seconds per phase; empty unless requested.
    pub timings: BTreeMap<String, f64>,
    /// Subcommand-specific values.
    pub details: BTreeMap<String, serde_json::Value>,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.details.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        to_json_string(self)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Writes a CSV with a header and pre-formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t,mean_S,mean_I,max_I,min_S,flatness,energy,dissipation_cum,grad_energy_S,grad_energy_I`;
/// `energy` is left empty when it is not defined.
pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let f = format_f64;
    write_csv(
        path,
        &TRACE_COLUMNS,
        trace.iter().map(|r| {
            vec![
                f(r.t),
                f(r.mean_s),
                f(r.mean_i),
                f(r.max_i),
                f(r.min_s),
                f(r.flatness),
                r.energy.map(f).unwrap_or_default(),
                f(r.dissipation_cum),
                f(r.grad_energy_s),
                f(r.grad_energy_i),
            ]
        }),
    )
}

/// `t,S,I` rows of an ODE trajectory.
pub fn write_ode_csv(path: &Path, samples: &[(f64, f64, f64)]) -> Result<()> {
    write_csv(
        path,
        &["t", "S", "I"],
        samples
            .iter()
            .map(|&(t, s, i)| vec![format_f64(t), format_f64(s), format_f64(i)]),
    )
}

/// `x,value` (1D) or `x,y,value` (2D) at cell centers, ordered by `y`
/// then `x`. The output reads back as a coefficient table.
pub fn write_field_csv(path: &Path, field: &ScalarField) -> Result<()> {
    let g = field.grid().clone();
    let header: &[&str] = if g.dim() == 1 { &["x", "value"] } else { &["x", "y", "value"] };
    write_csv(
        path,
        header,
        field.values().iter().enumerate().map(|(k, &v)| {
            let c = g.center(k);
            let mut row = vec![format_f64(c[0])];
            if g.dim() == 2 {
                row.push(format_f64(c[1]));
            }
            row.push(format_f64(v));
            row
        }),
    )
}

pub fn path_string(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// `dir/name`, as both a path and its display string.
pub fn out_file(dir: &Path, name: &str) -> (PathBuf, String) {
    let p = dir.join(name);
    let s = path_string(&p);
    (p, s)
}
