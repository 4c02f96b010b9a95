//! Green's-function tables on disk: a CSV body with header
//! `t_m,t_int,G,sigma_G` (rows ordered by `t_m`, then `t_int`) and a JSON
//! sidecar next to it holding the grid step and provenance.
//!
//! Every number is written in scientific notation with 17 significant digits,
//! so reading back reproduces each `f64` exactly. A row is at most
//! `4 * 24 + 4 = 100` bytes, which bounds a table file by
//! `22 + 100 * M * K` bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GreensTable, PopulationCurve, TableMeta};

pub const TABLE_HEADER: &str = "t_m,t_int,G,sigma_G";
pub const CURVE_HEADER: &str = "t,P,sigma_P";
pub const TABLE_FORMAT: &str = "weakfield-table-v1";

/// Upper bound on the size of a table file with `rows` grid points.
pub fn table_size_bound(rows: usize) -> usize {
    TABLE_HEADER.len() + 1 + 100 * rows
}

/// 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    dt: f64,
    m_count: usize,
    k_count: usize,
    meta: TableMeta,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Write `contents` to `path` via a temporary file and rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(contents)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn table_csv(table: &GreensTable) -> String {
    let (mc, kc) = table.values.dim();
    let mut out = String::with_capacity(table_size_bound(mc * kc));
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for m in 0..mc {
        for k in 0..kc {
            let row = [table.t_m(m), table.t_int(k), table.values[[m, k]], table.sigma[[m, k]]];
            out.push_str(&row.map(fmt_num).join(","));
            out.push('\n');
        }
    }
    out
}

pub fn write_table(path: &Path, table: &GreensTable) -> Result<()> {
    write_atomic(path, table_csv(table).as_bytes())?;
    let (m_count, k_count) = table.values.dim();
    let side = Sidecar {
        format: TABLE_FORMAT.into(),
        dt: table.dt,
        m_count,
        k_count,
        meta: table.meta.clone(),
    };
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&side)?.as_bytes())
}

fn table_err(path: &Path, msg: String) -> Error {
    Error::Table(format!("{}: {msg}", path.display()))
}

pub fn read_table(path: &Path) -> Result<GreensTable> {
    let side_path = sidecar_path(path);
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(&side_path).map_err(|e| {
        table_err(&side_path, format!("cannot read metadata sidecar: {e}"))
    })?)
    .map_err(|e| table_err(&side_path, format!("malformed metadata: {e}")))?;
    if side.format != TABLE_FORMAT {
        return Err(table_err(&side_path, format!("format `{}`, expected `{TABLE_FORMAT}`", side.format)));
    }
    let text = fs::read_to_string(path)?;
    parse_table(&text, side.dt, side.m_count, side.k_count, side.meta).map_err(|e| match e {
        Error::Table(msg) => table_err(path, msg),
        other => other,
    })
}

/// Parse a CSV body against the grid declared in its sidecar.
pub fn parse_table(text: &str, dt: f64, m_count: usize, k_count: usize, meta: TableMeta) -> Result<GreensTable> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TABLE_HEADER => {}
        Some((_, h)) => {
            return Err(Error::Table(format!(
                "line 1: header `{}` does not match expected `{TABLE_HEADER}`",
                h.trim_end()
            )))
        }
        None => return Err(Error::Table(format!("empty file; expected header `{TABLE_HEADER}`"))),
    }
    let mut values = Array2::zeros((m_count, k_count));
    let mut sigma = Array2::zeros((m_count, k_count));
    let names: Vec<&str> = TABLE_HEADER.split(',').collect();
    let mut count = 0;
    for (i, line) in lines {
        let ln = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Table(format!("line {ln}: expected 4 columns, found {}", fields.len())));
        }
        let mut row = [0.0; 4];
        for (c, f) in fields.iter().enumerate() {
            row[c] = f.trim().parse::<f64>().map_err(|_| {
                Error::Table(format!("line {ln}, column {} (`{}`): cannot parse `{f}` as a number", c + 1, names[c]))
            })?;
        }
        if count >= m_count * k_count {
            return Err(Error::Table(format!("line {ln}: more rows than the {m_count} x {k_count} grid")));
        }
        let (m, k) = (count / k_count, count % k_count);
        for (c, expected) in [(0, m as f64 * dt), (1, k as f64 * dt)] {
            if (row[c] - expected).abs() > 1e-9 * expected.abs().max(dt) {
                return Err(Error::Table(format!(
                    "line {ln}, column {} (`{}`): found {}, expected {expected} for grid point ({m}, {k})",
                    c + 1,
                    names[c],
                    row[c]
                )));
            }
        }
        values[[m, k]] = row[2];
        sigma[[m, k]] = row[3];
        count += 1;
    }
    if count != m_count * k_count {
        return Err(Error::Table(format!(
            "found {count} rows, expected {} for a {m_count} x {k_count} grid",
            m_count * k_count
        )));
    }
    Ok(GreensTable { dt, values, sigma, meta })
}

pub fn curve_csv(curve: &PopulationCurve) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for i in 0..curve.times.len() {
        let row = [curve.times[i], curve.values[i], curve.errors[i]];
        out.push_str(&row.map(fmt_num).join(","));
        out.push('\n');
    }
    out
}

/// Plain numeric series with a header.
pub fn series_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Provenance;
    use rand::{Rng, SeedableRng};

    fn random_table(mc: usize, kc: usize, seed: u64) -> GreensTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut meta = TableMeta::exact("abc".into());
        meta.provenance = Provenance::Sampled { trials: 10, seed, rng: "x".into() };
        meta.n_gamma = Some(0.25);
        GreensTable {
            dt: 0.1 + rng.random::<f64>(),
            values: Array2::from_shape_fn((mc, kc), |_| rng.random::<f64>() * 10f64.powi(rng.random_range(-300..300))),
            sigma: Array2::from_shape_fn((mc, kc), |_| -rng.random::<f64>()),
            meta,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        for seed in 0..5 {
            let t = random_table(7, 5, seed);
            write_table(&p, &t).unwrap();
            assert_eq!(read_table(&p).unwrap(), t);
        }
    }

    #[test]
    fn header_mismatch_names_expected() {
        let e = parse_table("t_m,t_int,G\n", 1.0, 1, 1, TableMeta::exact(String::new())).unwrap_err();
        assert!(e.to_string().contains(TABLE_HEADER));
    }

    #[test]
    fn malformed_cells_located() {
        let body = format!("{TABLE_HEADER}\n0,0,1.0,0\n0,1,abc,0\n");
        let e = parse_table(&body, 1.0, 1, 2, TableMeta::exact(String::new())).unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("column 3") && e.contains("`G`"), "{e}");
        let body = format!("{TABLE_HEADER}\n0,0,1.0\n");
        let e = parse_table(&body, 1.0, 1, 1, TableMeta::exact(String::new())).unwrap_err().to_string();
        assert!(e.contains("line 2") && e.contains("4 columns"), "{e}");
        let body = format!("{TABLE_HEADER}\n0,0,1,0\n5,1,1,0\n");
        let e = parse_table(&body, 1.0, 1, 2, TableMeta::exact(String::new())).unwrap_err().to_string();
        assert!(e.contains("column 1"), "{e}");
        let body = format!("{TABLE_HEADER}\n0,0,1,0\n");
        assert!(parse_table(&body, 1.0, 1, 2, TableMeta::exact(String::new())).is_err());
    }

    #[test]
    fn file_size_bound() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("big.csv");
        let t = random_table(101, 101, 1);
        write_table(&p, &t).unwrap();
        let size = fs::metadata(&p).unwrap().len() as usize;
        assert!(size <= table_size_bound(101 * 101), "{size}");
        // the bound is tight to within the sign and exponent width
        assert!(size > table_size_bound(101 * 101) * 3 / 4);
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
