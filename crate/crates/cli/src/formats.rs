//! Text formats: solution fields, CSV tables and sorted-key JSON.
//!
//! A field file is a `key = value` header followed by a CSV table:
//!
//! ```text
//! # freq-lab field
//! format_version = 1
//! representation = radial        (or polar)
//! dimension = 3
//! q = 1.5                        (or none)
//! n_radii = 2001
//! n_theta = 0                    (angles of polar fields)
//! step = 0.002
//! truncation_estimate = 1e-9     (or none)
//! r,u,du                         (polar: i,j,u)
//! 0,0.5,0
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so writing and reading a
//! field is lossless.

use std::fmt::Write as _;
use std::path::Path;

use freq_lab_core::field::{PolarGrid, RadialField, Representation, SolutionField};
use freq_lab_core::frequency::FrequencyProfile;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const FIELD_FORMAT_VERSION: u32 = 1;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn write_field(field: &SolutionField, q: Option<f64>) -> String {
    let mut s = String::new();
    s.push_str("# freq-lab field\n");
    let _ = writeln!(s, "format_version = {FIELD_FORMAT_VERSION}");
    match &field.repr {
        Representation::Radial(f) => {
            let _ = writeln!(s, "representation = radial");
            let _ = writeln!(s, "dimension = {}", f.dimension);
            let _ = writeln!(s, "q = {}", opt(q));
            let _ = writeln!(s, "n_radii = {}", f.u.len());
            let _ = writeln!(s, "n_theta = 0");
            let _ = writeln!(s, "step = {}", f.h);
            let _ = writeln!(s, "truncation_estimate = {}", opt(field.truncation_estimate));
            s.push_str("r,u,du\n");
            for i in 0..f.u.len() {
                let _ = writeln!(s, "{},{},{}", f.h * i as f64, f.u[i], f.du[i]);
            }
        }
        Representation::Grid2d(g) => {
            let _ = writeln!(s, "representation = polar");
            let _ = writeln!(s, "dimension = 2");
            let _ = writeln!(s, "q = {}", opt(q));
            let _ = writeln!(s, "n_radii = {}", g.nr);
            let _ = writeln!(s, "n_theta = {}", g.nt);
            let _ = writeln!(s, "step = {}", g.dr);
            let _ = writeln!(s, "truncation_estimate = {}", opt(field.truncation_estimate));
            s.push_str("i,j,u\n");
            for i in 0..g.nr {
                for j in 0..g.nt {
                    let _ = writeln!(s, "{i},{j},{}", g.at(i, j));
                }
            }
        }
    }
    s
}

/// A parsed field file; `q` is informational.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub field: SolutionField,
    pub q: Option<f64>,
}

pub fn read_field_file(path: &Path) -> Result<FieldFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read field {}: {e}", path.display())))?;
    parse_field(&text)
}

pub fn parse_field(text: &str) -> Result<FieldFile, CliError> {
    let bad = |msg: String| CliError::Config(format!("field file: {msg}"));
    let mut header = std::collections::BTreeMap::new();
    let mut lines = text.lines().enumerate();
    let columns = loop {
        let Some((n, line)) = lines.next() else {
            return Err(bad("missing data table".into()));
        };
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) => {
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
            None if line.contains(',') => break line.to_string(),
            None => return Err(bad(format!("line {}: expected `key = value`", n + 1))),
        }
    };
    let get = |k: &str| header.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing `{k}`")));
    let num = |k: &str| -> Result<f64, CliError> { get(k)?.parse::<f64>().map_err(|e| bad(format!("`{k}`: {e}"))) };
    let count = |k: &str| -> Result<usize, CliError> { get(k)?.parse::<usize>().map_err(|e| bad(format!("`{k}`: {e}"))) };
    let opt_num = |k: &str| -> Result<Option<f64>, CliError> {
        match header.get(k).map(String::as_str) {
            None | Some("none") => Ok(None),
            Some(v) => v.parse::<f64>().map(Some).map_err(|e| bad(format!("`{k}`: {e}"))),
        }
    };
    let version = count("format_version")?;
    if version as u32 != FIELD_FORMAT_VERSION {
        return Err(bad(format!("unsupported format_version {version}")));
    }
    let dimension = count("dimension")?;
    let nr = count("n_radii")?;
    let step = num("step")?;
    if nr < 5 || !(step > 0.0) {
        return Err(bad("need at least 5 radii and a positive step".into()));
    }
    let q = opt_num("q")?;
    let truncation_estimate = opt_num("truncation_estimate")?;
    let rows: Vec<(usize, Vec<f64>)> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map(|v| (n + 1, v))
                .map_err(|e| bad(format!("line {}: {e}", n + 1)))
        })
        .collect::<Result<_, _>>()?;
    if let Some((n, _)) = rows.iter().find(|(_, v)| v.len() != 3 || v.iter().any(|x| !x.is_finite())) {
        return Err(bad(format!("line {n}: expected three finite numbers")));
    }
    let repr = match get("representation")? {
        "radial" => {
            if columns.replace(' ', "") != "r,u,du" {
                return Err(bad("radial fields need columns r,u,du".into()));
            }
            if rows.len() != nr {
                return Err(bad(format!("expected {nr} rows, found {}", rows.len())));
            }
            Representation::Radial(RadialField {
                dimension,
                h: step,
                u: rows.iter().map(|(_, v)| v[1]).collect(),
                du: rows.iter().map(|(_, v)| v[2]).collect(),
            })
        }
        "polar" => {
            if dimension != 2 {
                return Err(bad("polar fields are two-dimensional".into()));
            }
            let nt = count("n_theta")?;
            let mut grid = PolarGrid::new(nr, nt, step * (nr - 1) as f64).map_err(|e| bad(e.to_string()))?;
            grid.dr = step;
            if rows.len() != nr * nt {
                return Err(bad(format!("expected {} rows, found {}", nr * nt, rows.len())));
            }
            let mut seen = vec![false; nr * nt];
            for (n, v) in &rows {
                let (i, j) = (v[0] as usize, v[1] as usize);
                if v[0] != i as f64 || v[1] != j as f64 || i >= nr || j >= nt || seen[i * nt + j] {
                    return Err(bad(format!("line {n}: bad or repeated node index")));
                }
                seen[i * nt + j] = true;
                grid.values[i * nt + j] = v[2];
            }
            Representation::Grid2d(grid)
        }
        other => return Err(bad(format!("unknown representation `{other}`"))),
    };
    Ok(FieldFile {
        field: SolutionField { repr, truncation_estimate },
        q,
    })
}

/// CSV with a header row, `.` decimals and `\n` endings.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn profile_csv(p: &FrequencyProfile) -> String {
    csv(
        &["r", "H", "D", "D1", "d", "dprime", "N", "surfaceD"],
        (0..p.len()).map(|i| {
            vec![
                p.r[i],
                p.h[i],
                p.big_d[i],
                p.d1[i],
                p.d[i],
                p.dprime[i],
                p.freq[i].unwrap_or(f64::NAN),
                p.surface_d[i],
            ]
        }),
    )
}

/// Pretty JSON with keys sorted at every level; non-finite numbers become `null`.
pub fn json<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("serializable");
    let mut s = serde_json::to_string_pretty(&sort(v)).expect("serializable");
    s.push('\n');
    s
}

fn sort(v: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match v {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sort(v))).collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sort).collect()),
        other => other,
    }
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
