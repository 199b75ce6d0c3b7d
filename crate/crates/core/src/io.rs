//! Dataset files: one CSV with the complete, observed and mask matrices and
//! labels, plus a JSON sidecar holding the generating parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Mask, PatternMixture, ScenarioConfig};
use crate::error::{Error, Result};

/// Generating parameters stored next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub scenario: ScenarioConfig,
    pub beta_star: Vec<f64>,
    pub mixture: PatternMixture,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn header(d: usize, with_bayes: bool) -> Vec<String> {
    let mut h: Vec<String> = Vec::with_capacity(3 * d + 2);
    for prefix in ["x", "z", "m"] {
        h.extend((1..=d).map(|j| format!("{prefix}_{j}")));
    }
    h.push("y".into());
    if with_bayes {
        h.push("bayes".into());
    }
    h
}

pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let d = data.d();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(d, data.bayes_probs.is_some()))?;
    let mut rec: Vec<String> = Vec::with_capacity(3 * d + 2);
    for i in 0..data.n() {
        rec.clear();
        rec.extend((0..d).map(|j| data.x_complete[(i, j)].to_string()));
        rec.extend((0..d).map(|j| {
            if data.mask.get(i, j) {
                String::new()
            } else {
                data.z_observed[(i, j)].to_string()
            }
        }));
        rec.extend((0..d).map(|j| (data.mask.get(i, j) as u8).to_string()));
        rec.push(data.y[i].to_string());
        if let Some(b) = &data.bayes_probs {
            rec.push(b[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("line {line}: '{s}' is not a number")))
}

/// Read a dataset CSV. Missing cells are the empty `z_j` entries; they
/// must agree with the `m_j` columns.
pub fn read_dataset_csv<R: Read>(reader: R, scenario: ScenarioConfig) -> Result<Dataset> {
    let mut r = csv::Reader::from_reader(reader);
    let cols: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let with_bayes = cols.last().map(|c| c == "bayes").unwrap_or(false);
    let width = cols.len() - with_bayes as usize;
    if width < 4 || (width - 1) % 3 != 0 {
        return Err(Error::InvalidInput(format!("unexpected dataset header: {}", cols.join(","))));
    }
    let d = (width - 1) / 3;
    if cols != header(d, with_bayes) {
        return Err(Error::InvalidInput(format!("unexpected dataset header: {}", cols.join(","))));
    }
    let (mut x, mut z, mut m, mut y, mut bayes) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        for j in 0..d {
            x.push(parse_f64(&rec[j], line)?);
        }
        let mut mask_row = Vec::with_capacity(d);
        for j in 0..d {
            let missing = match rec[2 * d + j].trim() {
                "0" => false,
                "1" => true,
                other => return Err(Error::InvalidInput(format!("line {line}: mask value '{other}'"))),
            };
            let cell = rec[d + j].trim();
            if missing != cell.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "line {line}: z_{} and m_{} disagree",
                    j + 1,
                    j + 1
                )));
            }
            z.push(if missing { f64::NAN } else { parse_f64(cell, line)? });
            mask_row.push(missing);
        }
        m.push(mask_row);
        y.push(match rec[3 * d].trim() {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(Error::InvalidInput(format!("line {line}: label '{other}'"))),
        });
        if with_bayes {
            bayes.push(parse_f64(&rec[3 * d + 1], line)?);
        }
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, d, &x);
    let z = DMatrix::from_row_slice(n, d, &z);
    let mask = if n == 0 { Mask::none(0, d) } else { Mask::from_rows(&m)? };
    let mut data = Dataset::from_parts(x, z, mask, y, scenario)?;
    if with_bayes {
        data.bayes_probs = Some(bayes);
    }
    Ok(data)
}

/// Write `<path>` and its sidecar `<path>.json` (extension replaced).
pub fn save_dataset(path: &Path, data: &Dataset, mixture: &PatternMixture) -> Result<()> {
    write_dataset_csv(data, BufWriter::new(File::create(path)?))?;
    let sidecar = Sidecar {
        scenario: data.scenario.clone(),
        beta_star: data.scenario.beta_star()?.to_vec(),
        mixture: mixture.clone(),
    };
    let mut f = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(Dataset, Sidecar)> {
    let sidecar: Sidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let data = read_dataset_csv(BufReader::new(File::open(path)?), sidecar.scenario.clone())?;
    Ok((data, sidecar))
}
