use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::report::fmt_sig17;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignKind {
    /// Fixed, nonrandom surrogate regressors.
    Functional,
    /// I.i.d. surrogate regressors.
    Structural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T> {
    pub x0: T,
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub rows: Vec<Observation<T>>,
    pub kind: DesignKind,
    pub seed: Option<u64>,
    /// Design or sampler description, or the file the rows came from.
    pub source_spec: Option<String>,
}

impl<T: Real> Dataset<T> {
    pub fn new(rows: Vec<Observation<T>>, kind: DesignKind) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            if r.y > 1 {
                return domain(format!("row {i}: y must be 0 or 1, got {}", r.y));
            }
            if !r.x0.is_finite() {
                return domain(format!("row {i}: x0 must be finite"));
            }
        }
        Ok(Self {
            rows,
            kind,
            seed: None,
            source_spec: None,
        })
    }

    pub fn from_pairs(pairs: &[(T, u8)]) -> Result<Self> {
        Self::new(
            pairs.iter().map(|&(x0, y)| Observation { x0, y }).collect(),
            DesignKind::Functional,
        )
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn design(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.x0).collect()
    }

    pub fn distinct_x0(&self) -> usize {
        crate::identify::distinct_count(&self.design()).unwrap_or(0)
    }

    /// CSV with header `x0,y`, LF line endings, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(b"x0,y\n")?;
        for r in &self.rows {
            writeln!(w, "{},{}", fmt_sig17(r.x0.as_f64()), r.y)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Reads the `x0,y` CSV format; parse failures name the offending line.
    pub fn read_csv<R: BufRead>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let err = |line: u64, msg: String| Error::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let headers = rdr.headers().map_err(|e| err(1, e.to_string()))?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (Some(ix), Some(iy)) = (col("x0"), col("y")) else {
            return Err(err(1, format!("expected header `x0,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        };
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                err(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let x0: f64 = rec
                .get(ix)
                .ok_or_else(|| err(line, "missing x0".into()))?
                .parse()
                .map_err(|e| err(line, format!("bad x0: {e}")))?;
            if !x0.is_finite() {
                return Err(err(line, "x0 must be finite".into()));
            }
            let y: u8 = match rec.get(iy) {
                Some("0") => 0,
                Some("1") => 1,
                Some(other) => return Err(err(line, format!("y must be 0 or 1, got `{other}`"))),
                None => return Err(err(line, "missing y".into())),
            };
            rows.push(Observation { x0: T::lit(x0), y });
        }
        let mut ds = Self::new(rows, DesignKind::Functional)?;
        ds.source_spec = Some(source.to_string());
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), &path.display().to_string())
    }
}
