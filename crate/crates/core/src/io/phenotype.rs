use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const HEADER: [&str; 6] = ["subject_id", "sex", "age", "tpvt", "torrt", "tfat"];
const DEFAULT_AGE_RANGE: (f64, f64) = (0.0, 120.0);

/// Non-imaging phenotypes of one subject. Sex is coded F = 0, M = 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeRecord {
    pub sex: Option<u8>,
    pub age: Option<f64>,
    pub tpvt: Option<f64>,
    pub torrt: Option<f64>,
    pub tfat: Option<f64>,
}

/// A predictable phenotype column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Sex,
    Age,
    Tpvt,
    Torrt,
    Tfat,
}

impl Target {
    pub const ALL: [Target; 5] = [Target::Sex, Target::Age, Target::Tpvt, Target::Torrt, Target::Tfat];

    pub fn name(self) -> &'static str {
        match self {
            Target::Sex => "sex",
            Target::Age => "age",
            Target::Tpvt => "tpvt",
            Target::Torrt => "torrt",
            Target::Tfat => "tfat",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Target::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown target `{s}`")))
    }
}

impl PhenotypeRecord {
    pub fn get(&self, target: Target) -> Option<f64> {
        match target {
            Target::Sex => self.sex.map(f64::from),
            Target::Age => self.age,
            Target::Tpvt => self.tpvt,
            Target::Torrt => self.torrt,
            Target::Tfat => self.tfat,
        }
    }

    pub fn set(&mut self, target: Target, value: Option<f64>) {
        match target {
            Target::Sex => self.sex = value.map(|v| u8::from(v >= 0.5)),
            Target::Age => self.age = value,
            Target::Tpvt => self.tpvt = value,
            Target::Torrt => self.torrt = value,
            Target::Tfat => self.tfat = value,
        }
    }
}

fn parse_sex(cell: &str, line: usize) -> Result<Option<u8>> {
    match cell {
        "" => Ok(None),
        "F" | "f" | "0" => Ok(Some(0)),
        "M" | "m" | "1" => Ok(Some(1)),
        other => Err(Error::Parse { line, detail: format!("sex `{other}` is not F/M/0/1") }),
    }
}

fn parse_value(cell: &str, column: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| Error::Parse { line, detail: format!("{column} `{cell}` is not a number") })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, detail: format!("{column} `{cell}` is not finite") });
    }
    Ok(Some(v))
}

/// Parses the phenotype table (`subject_id,sex,age,tpvt,torrt,tfat`).
/// Empty cells are missing values.
pub fn load_phenotypes(csv_bytes: &[u8]) -> Result<BTreeMap<String, PhenotypeRecord>> {
    load_phenotypes_with_age_range(csv_bytes, DEFAULT_AGE_RANGE)
}

pub fn load_phenotypes_with_age_range(
    csv_bytes: &[u8],
    age_range: (f64, f64),
) -> Result<BTreeMap<String, PhenotypeRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_bytes);
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, detail: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::Format(format!(
            "phenotype header must be `{}`",
            HEADER.join(",")
        )));
    }
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            detail: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| row.get(i).unwrap_or("").trim();
        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(Error::Parse { line, detail: "empty subject_id".into() });
        }
        let record = PhenotypeRecord {
            sex: parse_sex(cell(1), line)?,
            age: parse_value(cell(2), "age", line)?,
            tpvt: parse_value(cell(3), "tpvt", line)?,
            torrt: parse_value(cell(4), "torrt", line)?,
            tfat: parse_value(cell(5), "tfat", line)?,
        };
        if let Some(age) = record.age {
            if age < age_range.0 || age > age_range.1 {
                return Err(Error::Parse {
                    line,
                    detail: format!("age {age} outside [{}, {}]", age_range.0, age_range.1),
                });
            }
        }
        if out.insert(id.clone(), record).is_some() {
            return Err(Error::DuplicateId(id));
        }
    }
    Ok(out)
}

/// Writes the phenotype table; values use the shortest round-trip form.
pub fn write_phenotypes(records: &BTreeMap<String, PhenotypeRecord>) -> Vec<u8> {
    let mut out = HEADER.join(",");
    out.push('\n');
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (id, r) in records {
        let sex = match r.sex {
            Some(0) => "F",
            Some(_) => "M",
            None => "",
        };
        out.push_str(&format!(
            "{id},{sex},{},{},{},{}\n",
            fmt(r.age),
            fmt(r.tpvt),
            fmt(r.torrt),
            fmt(r.tfat)
        ));
    }
    out.into_bytes()
}
