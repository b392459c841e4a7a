//! JSON documents for plants, controllers and sparsity patterns.
//!
//! Matrices are row-major nested arrays. Every document carries
//! `"format": 1`. Floats are written in shortest round-trip form, so
//! parse(emit(x)) == x bit for bit.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fir::{FirController, SparsityPattern};
use crate::lti::{Domain, GeneralizedPlant, PlantDims};

pub const FORMAT_VERSION: u32 = 1;

type Rows = Vec<Vec<f64>>;

fn parse_err(field: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        field: field.to_string(),
        message: message.into(),
    }
}

fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Matrix from rows; `cols` resolves the width of a matrix with no rows.
fn from_rows(field: &str, rows: &Rows, cols: Option<usize>) -> Result<DMatrix<f64>> {
    let width = match (rows.first(), cols) {
        (Some(r), Some(c)) if r.len() != c => {
            return Err(parse_err(
                field,
                format!("rows have {} entries, expected {c}", r.len()),
            ))
        }
        (Some(r), _) => r.len(),
        (None, Some(c)) => c,
        (None, None) => 0,
    };
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(parse_err(
                field,
                format!("row {} has {} entries, expected {width}", i + 1, r.len()),
            ));
        }
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(parse_err(
                field,
                format!("entry ({}, {}) is not finite", i + 1, j + 1),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn check_format(format: u32) -> Result<()> {
    if format != FORMAT_VERSION {
        return Err(parse_err(
            "format",
            format!("unsupported version {format}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| parse_err("document", e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Continuous,
    Discrete,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlantFile {
    pub format: u32,
    pub domain: DomainTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<PlantDims>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B1")]
    pub b1: Rows,
    #[serde(rename = "B2")]
    pub b2: Rows,
    #[serde(rename = "C1")]
    pub c1: Rows,
    #[serde(rename = "C2")]
    pub c2: Rows,
    #[serde(rename = "D11", default, skip_serializing_if = "Option::is_none")]
    pub d11: Option<Rows>,
    #[serde(rename = "D12", default, skip_serializing_if = "Option::is_none")]
    pub d12: Option<Rows>,
    #[serde(rename = "D21", default, skip_serializing_if = "Option::is_none")]
    pub d21: Option<Rows>,
    #[serde(rename = "D22", default, skip_serializing_if = "Option::is_none")]
    pub d22: Option<Rows>,
}

impl PlantFile {
    pub fn from_plant(p: &GeneralizedPlant) -> Self {
        let (domain, ts) = match p.domain {
            Domain::Continuous => (DomainTag::Continuous, None),
            Domain::Discrete(ts) => (DomainTag::Discrete, Some(ts)),
        };
        Self {
            format: FORMAT_VERSION,
            domain,
            ts,
            dims: Some(p.dims()),
            a: to_rows(&p.a),
            b1: to_rows(&p.b1),
            b2: to_rows(&p.b2),
            c1: to_rows(&p.c1),
            c2: to_rows(&p.c2),
            d11: Some(to_rows(&p.d11)),
            d12: Some(to_rows(&p.d12)),
            d21: Some(to_rows(&p.d21)),
            d22: Some(to_rows(&p.d22)),
        }
    }

    pub fn to_plant(&self) -> Result<GeneralizedPlant> {
        check_format(self.format)?;
        let domain = match (self.domain, self.ts) {
            (DomainTag::Continuous, None) => Domain::Continuous,
            (DomainTag::Continuous, Some(_)) => {
                return Err(parse_err("ts", "a continuous plant has no sample time"))
            }
            (DomainTag::Discrete, Some(ts)) if ts > 0.0 && ts.is_finite() => Domain::Discrete(ts),
            (DomainTag::Discrete, Some(ts)) => {
                return Err(parse_err(
                    "ts",
                    format!("sample time must be > 0, got {ts}"),
                ))
            }
            (DomainTag::Discrete, None) => {
                return Err(parse_err("ts", "a discrete plant needs a sample time"))
            }
        };
        let d = self.dims;
        let a = from_rows("A", &self.a, d.map(|d| d.nx))?;
        let nx = a.nrows();
        let b1 = from_rows("B1", &self.b1, d.map(|d| d.nw))?;
        let b2 = from_rows("B2", &self.b2, d.map(|d| d.nu))?;
        let c1 = from_rows("C1", &self.c1, Some(nx))?;
        let c2 = from_rows("C2", &self.c2, Some(nx))?;
        let (nw, nu, nz, ny) = (b1.ncols(), b2.ncols(), c1.nrows(), c2.nrows());
        if let Some(d) = d {
            let got = PlantDims { nx, nw, nu, nz, ny };
            if got != d {
                return Err(parse_err(
                    "dims",
                    format!("declared {d:?} but matrices give {got:?}"),
                ));
            }
        }
        let block = |field: &str, m: &Option<Rows>, r: usize, c: usize| -> Result<DMatrix<f64>> {
            match m {
                None => Ok(DMatrix::zeros(r, c)),
                Some(rows) => {
                    let m = from_rows(field, rows, Some(c))?;
                    if m.nrows() != r {
                        return Err(parse_err(
                            field,
                            format!("has {} rows, expected {r}", m.nrows()),
                        ));
                    }
                    Ok(m)
                }
            }
        };
        let d11 = block("D11", &self.d11, nz, nw)?;
        let d12 = block("D12", &self.d12, nz, nu)?;
        let d21 = block("D21", &self.d21, ny, nw)?;
        let d22 = block("D22", &self.d22, ny, nu)?;
        GeneralizedPlant::new(a, b1, b2, c1, c2, d11, d12, d21, d22, domain)
            .map_err(|e| parse_err("plant", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub mu: f64,
    pub min_eig_f: f64,
    pub closed_loop_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControllerFile {
    pub format: u32,
    pub n_f: usize,
    pub ts: f64,
    pub taps: Vec<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
}

impl ControllerFile {
    pub fn from_controller(
        k: &FirController,
        pattern: Option<&SparsityPattern>,
        certificate: Option<CertificateSummary>,
    ) -> Self {
        Self {
            format: FORMAT_VERSION,
            n_f: k.n_taps(),
            ts: k.ts,
            taps: k.taps().iter().map(to_rows).collect(),
            pattern: pattern.map(|s| s.to_rows()),
            certificate,
        }
    }

    pub fn to_controller(&self) -> Result<FirController> {
        check_format(self.format)?;
        if self.taps.len() != self.n_f {
            return Err(parse_err(
                "taps",
                format!("{} taps listed, n_f = {}", self.taps.len(), self.n_f),
            ));
        }
        let taps = self
            .taps
            .iter()
            .enumerate()
            .map(|(i, t)| from_rows(&format!("taps[{i}]"), t, None))
            .collect::<Result<Vec<_>>>()?;
        FirController::new(taps, self.ts).map_err(|e| parse_err("taps", e.to_string()))
    }

    pub fn pattern(&self) -> Result<Option<SparsityPattern>> {
        self.pattern
            .as_ref()
            .map(|p| pattern_from_rows(p))
            .transpose()
    }
}

fn pattern_from_rows(rows: &[Vec<u8>]) -> Result<SparsityPattern> {
    let m = from_rows(
        "pattern",
        &rows
            .iter()
            .map(|r| r.iter().map(|&v| v as f64).collect())
            .collect(),
        None,
    )?;
    if m.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(parse_err("pattern", "entries must be 0 or 1"));
    }
    SparsityPattern::from_matrix(&m).map_err(|e| parse_err("pattern", e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PatternFile {
    pub format: u32,
    pub pattern: Vec<Vec<u8>>,
}

impl PatternFile {
    pub fn from_pattern(s: &SparsityPattern) -> Self {
        Self {
            format: FORMAT_VERSION,
            pattern: s.to_rows(),
        }
    }

    pub fn to_pattern(&self) -> Result<SparsityPattern> {
        check_format(self.format)?;
        pattern_from_rows(&self.pattern)
    }
}

pub fn parse_plant(text: &str) -> Result<GeneralizedPlant> {
    from_json::<PlantFile>(text)?.to_plant()
}

pub fn emit_plant(p: &GeneralizedPlant) -> String {
    serde_json::to_string_pretty(&PlantFile::from_plant(p)).expect("plain data serializes")
}

pub fn parse_controller(text: &str) -> Result<ControllerFile> {
    let f: ControllerFile = from_json(text)?;
    f.to_controller()?;
    f.pattern()?;
    Ok(f)
}

pub fn emit_controller(f: &ControllerFile) -> String {
    serde_json::to_string_pretty(f).expect("plain data serializes")
}

/// A pattern document, or a bare nested 0/1 array.
pub fn parse_pattern(text: &str) -> Result<SparsityPattern> {
    let v: serde_json::Value = from_json(text)?;
    if v.is_array() {
        let rows: Vec<Vec<u8>> =
            serde_json::from_value(v).map_err(|e| parse_err("pattern", e.to_string()))?;
        return pattern_from_rows(&rows);
    }
    let f: PatternFile =
        serde_json::from_value(v).map_err(|e| parse_err("document", e.to_string()))?;
    f.to_pattern()
}

pub fn emit_pattern(s: &SparsityPattern) -> String {
    serde_json::to_string_pretty(&PatternFile::from_pattern(s)).expect("plain data serializes")
}

pub fn read_to_string(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{ex1_k2, ExampleId};

    #[test]
    fn bundled_plants_roundtrip() {
        for ex in [ExampleId::Ex1, ExampleId::Ex2, ExampleId::Ex3] {
            for p in [ex.continuous_plant(), ex.discrete_plant().unwrap()] {
                let text = emit_plant(&p);
                let back = parse_plant(&text).unwrap();
                assert_eq!(back, p);
                assert_eq!(emit_plant(&back), text);
            }
        }
    }

    #[test]
    fn missing_d_blocks_default_to_zero() {
        let text = r#"{"format": 1, "domain": "discrete", "ts": 0.5,
            "A": [[0.5]], "B1": [[1.0, 0.0]], "B2": [[1.0]],
            "C1": [[1.0]], "C2": [[1.0], [2.0]]}"#;
        let p = parse_plant(text).unwrap();
        assert_eq!(p.d11.shape(), (1, 2));
        assert_eq!(p.d21.shape(), (2, 2));
        assert_eq!(p.d22.shape(), (2, 1));
        assert!(p.d12.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn diagnostics_name_the_field() {
        let text = r#"{"format": 1, "domain": "continuous",
            "A": [[0.0, 1.0], [1.0]], "B1": [[1.0], [0.0]], "B2": [[1.0], [0.0]],
            "C1": [[1.0, 0.0]], "C2": [[1.0, 0.0]]}"#;
        match parse_plant(text) {
            Err(Error::Parse { field, message }) => {
                assert_eq!(field, "A");
                assert!(message.contains("row 2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse_plant(r#"{"format": 1, "domain": "discrete", "A": [[1.0]]}"#) {
            Err(Error::Parse { field, message }) => {
                assert_eq!(field, "document");
                assert!(message.contains("line"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let text = r#"{"format": 2, "domain": "continuous", "A": [[0.0]], "B1": [[1.0]],
            "B2": [[1.0]], "C1": [[1.0]], "C2": [[1.0]]}"#;
        assert!(matches!(parse_plant(text), Err(Error::Parse { field, .. }) if field == "format"));
    }

    #[test]
    fn controller_roundtrip_is_lossless() {
        let k = ex1_k2();
        let mut taps = k.taps().to_vec();
        taps[0][(0, 0)] = 0.1 + 0.2; // not exactly representable in short decimal
        let k = FirController::new(taps, k.ts).unwrap();
        let cert = CertificateSummary {
            mu: 9.0,
            min_eig_f: 1.0 / 3.0,
            closed_loop_norm: 2.0f64.sqrt(),
        };
        let f = ControllerFile::from_controller(
            &k,
            Some(&ExampleId::Ex1.pattern()),
            Some(cert.clone()),
        );
        let text = emit_controller(&f);
        let back = parse_controller(&text).unwrap();
        assert_eq!(back.to_controller().unwrap(), k);
        assert_eq!(back.certificate, Some(cert));
        assert_eq!(back.pattern().unwrap(), Some(ExampleId::Ex1.pattern()));
    }

    #[test]
    fn pattern_documents() {
        let s = ExampleId::Ex3.pattern();
        assert_eq!(parse_pattern(&emit_pattern(&s)).unwrap(), s);
        let bare = parse_pattern("[[1, 0], [0, 1]]").unwrap();
        assert_eq!(bare, SparsityPattern::diagonal(2, 2));
        assert!(parse_pattern("[[1, 2]]").is_err());
    }
}
