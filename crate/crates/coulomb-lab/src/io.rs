//! CSV and JSON persistence.
//!
//! Floats are written with 17 significant digits so files round-trip exactly
//! and identical inputs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::equilibrium::EquilibriumMeasure;
use crate::error::{Error, Result};
use crate::kernel::{Configuration, Dimension};

/// Round-trip float formatting used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

fn coordinate_header(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("x{k}")).collect()
}

/// One row per point, columns `x0,x1[,x2]`.
pub fn write_configuration<W: Write>(out: W, config: &Configuration) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(coordinate_header(config.dim().get()))?;
    for p in config.points() {
        w.write_record(p.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn configuration_to_string(config: &Configuration) -> Result<String> {
    let mut buf = Vec::new();
    write_configuration(&mut buf, config)?;
    String::from_utf8(buf).map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn save_configuration(path: &Path, config: &Configuration) -> Result<()> {
    write_configuration(BufWriter::new(File::create(path)?), config)
}

/// Reads a configuration; the dimension comes from the header width.
pub fn read_configuration<R: Read>(input: R) -> Result<Configuration> {
    let mut r = csv::Reader::from_reader(input);
    let d = r.headers()?.len();
    let dim = Dimension::new(d)?;
    let mut coords = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::InvalidInput(format!("row {} has {} columns, expected {d}", line + 1, rec.len())));
        }
        for field in rec.iter() {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::InvalidInput(format!("row {}: cannot parse {field:?}", line + 1)))?;
            coords.push(x);
        }
    }
    Configuration::new(dim, coords)
}

pub fn load_configuration(path: &Path) -> Result<Configuration> {
    read_configuration(File::open(path)?)
}

/// Node table `x0,..,density,potential,support` plus a JSON sidecar at `<path>.json`.
pub fn save_measure(path: &Path, mu: &EquilibriumMeasure) -> Result<()> {
    let d = mu.grid.d();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header = coordinate_header(d);
    header.extend(["density", "potential", "support"].map(String::from));
    w.write_record(&header)?;
    for i in 0..mu.grid.len() {
        let x = mu.grid.node(i);
        let mut row: Vec<String> = x[..d].iter().map(|&v| fmt_f64(v)).collect();
        row.push(fmt_f64(mu.density[i]));
        row.push(fmt_f64(mu.potential[i]));
        row.push(u8::from(mu.support[i]).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    save_json(&sidecar_path(path), &mu.sidecar())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// A table of serializable rows (header from field names).
pub fn write_records<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), rows)
}

/// A table of raw string rows under `header`.
pub fn save_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidInput(format!("row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn configuration_round_trips_exactly() {
        let c = Configuration::new(Dimension::Three, vec![0.1, -1.0 / 3.0, 1e-300, 2.5, std::f64::consts::PI, -7.0]).unwrap();
        let s = configuration_to_string(&c).unwrap();
        assert!(s.starts_with("x0,x1,x2\n"));
        let back = read_configuration(s.as_bytes()).unwrap();
        assert_eq!(back.coords(), c.coords());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        assert!(read_configuration("x0,x1\n1,2\n3\n".as_bytes()).is_err());
    }
}
