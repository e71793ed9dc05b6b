//! CSV and JSON writers shared by the library and the CLI.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::proposal::Path;

/// Round-trip formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Paths as CSV with columns `sample_index,t,x1,...,xd`; one row per knot.
pub fn write_paths_csv<W: Write>(mut out: W, paths: &[Path]) -> Result<()> {
    let d = paths.first().map_or(0, |p| p.dim());
    let mut header = vec!["sample_index".to_string(), "t".to_string()];
    header.extend((1..=d).map(|j| format!("x{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (s, path) in paths.iter().enumerate() {
        for (t, x) in path.grid().knots().iter().zip(path.states()) {
            let mut row = vec![s.to_string(), fmt_f64(*t)];
            row.extend(x.iter().map(|&z| fmt_f64(z)));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    Ok(())
}

/// Pretty-printed JSON with lexicographically sorted object keys.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's default map is a BTreeMap, so a round trip through Value sorts keys
    let v = serde_json::to_value(value).map_err(json_err)?;
    let mut s = serde_json::to_string_pretty(&v).map_err(json_err)?;
    s.push('\n');
    Ok(s)
}

fn json_err(e: serde_json::Error) -> crate::error::Error {
    crate::error::Error::InvalidInput(format!("json serialization failed: {e}"))
}
