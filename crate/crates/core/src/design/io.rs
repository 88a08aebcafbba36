//! CSV formats for candidates and designs.
//!
//! Candidates: header `id,f1,...,fm`, one row per candidate.
//! Designs: header `id,count` (exact) or `id,weight` (approximate).

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use crate::design::{CandidateSet, Design};
use crate::error::{Error, Result};

/// Candidates read from CSV along with the ids found in the file.
#[derive(Clone, Debug)]
pub struct LabeledCandidates {
    pub candidates: CandidateSet,
    /// `ids[k]` is the file id of row `k`.
    pub ids: Vec<usize>,
}

impl LabeledCandidates {
    /// True when ids are exactly `0..N` in order.
    pub fn is_contiguous(&self) -> bool {
        self.ids.iter().enumerate().all(|(k, &id)| k == id)
    }

    /// Re-keys a design read from CSV (support given as file ids) to row
    /// indices of this set.
    pub fn design_from_ids(&self, d: &Design) -> Result<Design> {
        let rows: HashMap<usize, usize> = self.ids.iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let max = d.max_index().unwrap_or(0);
        let mut map = vec![usize::MAX; max + 1];
        for &id in d.support() {
            map[id] = *rows
                .get(&id)
                .ok_or_else(|| Error::InvalidDesign(format!("design refers to unknown id {id}")))?;
        }
        d.remap(&map)
    }
}

pub fn read_candidates<R: Read>(reader: R) -> Result<LabeledCandidates> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("id") || headers.len() < 3 {
        return Err(Error::InvalidCandidates(
            "candidate CSV header must be id,f1,...,fm".into(),
        ));
    }
    let dim = headers.len() - 1;
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id: usize = parse_field(&record, 0)?;
        if !seen.insert(id) {
            return Err(Error::InvalidCandidates(format!("duplicate id {id}")));
        }
        ids.push(id);
        for k in 1..=dim {
            rows.push(parse_field::<f64>(&record, k)?);
        }
    }
    Ok(LabeledCandidates {
        candidates: CandidateSet::from_rows(dim, rows)?,
        ids,
    })
}

/// Writes candidates; `ids` defaults to `0..N`.
pub fn write_candidates<W: Write>(writer: W, cands: &CandidateSet, ids: Option<&[usize]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend((1..=cands.dim()).map(|k| format!("f{k}")));
    wtr.write_record(&header)?;
    for i in 0..cands.len() {
        let id = ids.map_or(i, |ids| ids[i]);
        let mut rec = vec![id.to_string()];
        rec.extend(cands.row(i).iter().map(|x| format!("{x:e}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(record: &csv::StringRecord, k: usize) -> Result<T> {
    let raw = record
        .get(k)
        .ok_or_else(|| Error::InvalidCandidates(format!("missing column {k}")))?;
    raw.parse()
        .map_err(|_| Error::InvalidCandidates(format!("cannot parse {raw:?} in column {k}")))
}

pub fn read_design<R: Read>(reader: R) -> Result<Design> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let exact = match (headers.get(0), headers.get(1), headers.len()) {
        (Some("id"), Some("count"), 2) => true,
        (Some("id"), Some("weight"), 2) => false,
        _ => {
            return Err(Error::InvalidDesign(
                "design CSV header must be id,count or id,weight".into(),
            ))
        }
    };
    let mut counts = Vec::new();
    let mut weights = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let id: usize = parse_field(&record, 0).map_err(bad_design)?;
        if exact {
            counts.push((id, parse_field::<usize>(&record, 1).map_err(bad_design)?));
        } else {
            weights.push((id, parse_field::<f64>(&record, 1).map_err(bad_design)?));
        }
    }
    if exact {
        Design::exact(counts)
    } else {
        Design::approximate(weights)
    }
}

fn bad_design(e: Error) -> Error {
    Error::InvalidDesign(e.to_string())
}

/// Writes `id,count` for exact designs and `id,weight` otherwise.
/// `ids` maps design indices to output ids.
pub fn write_design<W: Write>(writer: W, design: &Design, ids: Option<&[usize]>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let label = |i: usize| ids.map_or(i, |ids| ids[i]).to_string();
    match design.counts() {
        Some(counts) => {
            wtr.write_record(["id", "count"])?;
            for (&i, c) in design.support().iter().zip(counts) {
                wtr.write_record([label(i), c.to_string()])?;
            }
        }
        None => {
            wtr.write_record(["id", "weight"])?;
            for (i, w) in design.iter() {
                wtr.write_record([label(i), format!("{w:e}")])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}
