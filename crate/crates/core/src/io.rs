//! Canonical on-disk formats.
//!
//! Metadata is a UTF-8 CSV with the header
//! `record_id,person_id,camera_id,frame,is_distractor`. A `person_id` of `-1`
//! marks a distractor and an empty `person_id` an unlabelled record.
//!
//! Features are a little-endian binary matrix with a 16-byte header:
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 4    | magic `STRF`                        |
//! | 4      | 2    | version (u16, currently 1)          |
//! | 6      | 2    | dtype code (u16: 1 = f32, 2 = f64)  |
//! | 8      | 4    | rows (u32)                          |
//! | 12     | 4    | dim (u32)                           |
//!
//! followed by `rows * dim` row-major values. Row `i` belongs to metadata
//! record `i`.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Location, Result};
use crate::model::{Dataset, Detection, Role};

pub const FEATURE_MAGIC: [u8; 4] = *b"STRF";
pub const FEATURE_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: usize = 16;

const METADATA_COLUMNS: [&str; 5] = ["record_id", "person_id", "camera_id", "frame", "is_distractor"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataRecord {
    pub record_id: String,
    pub person_id: Option<u32>,
    pub camera_id: usize,
    pub frame: i64,
    pub is_distractor: bool,
}

fn field<T: std::str::FromStr>(value: &str, column: &str, line: u64) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(Location::Line(line), format!("{column}: cannot parse {value:?}")))
}

fn parse_flag(value: &str, line: u64) -> Result<bool> {
    match value.trim() {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        other => Err(Error::parse(
            Location::Line(line),
            format!("is_distractor: expected 0/1, got {other:?}"),
        )),
    }
}

pub fn parse_metadata_csv<R: Read>(source: R) -> Result<Vec<MetadataRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(Location::Line(1), e.to_string()))?
        .clone();
    let mut columns = [0usize; 5];
    for (slot, name) in columns.iter_mut().zip(METADATA_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(Location::Line(1), format!("missing column {name:?}")))?;
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(Location::Line(line), e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |i: usize| row.get(columns[i]).unwrap_or("");

        let record_id = get(0).trim().to_string();
        if record_id.is_empty() {
            return Err(Error::parse(Location::Line(line), "empty record_id"));
        }
        let raw_person = get(1).trim();
        let mut is_distractor = parse_flag(get(4), line)?;
        let person_id = match raw_person {
            "" => None,
            "-1" => {
                is_distractor = true;
                None
            }
            p => Some(field::<u32>(p, "person_id", line)?),
        };
        let camera_id = field(get(2), "camera_id", line)?;
        let frame = field(get(3), "frame", line)?;
        if !seen.insert(record_id.clone()) {
            return Err(Error::parse(Location::Line(line), format!("duplicate record_id {record_id:?}")));
        }
        out.push(MetadataRecord {
            record_id,
            person_id,
            camera_id,
            frame,
            is_distractor,
        });
    }
    Ok(out)
}

pub fn write_metadata_csv<W: Write>(sink: W, records: &[MetadataRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let to_io = |e: csv::Error| Error::Io(e.into());
    w.write_record(METADATA_COLUMNS).map_err(to_io)?;
    for r in records {
        let person = match (r.person_id, r.is_distractor) {
            (Some(p), _) => p.to_string(),
            (None, true) => "-1".to_string(),
            (None, false) => String::new(),
        };
        w.write_record([
            r.record_id.as_str(),
            &person,
            &r.camera_id.to_string(),
            &r.frame.to_string(),
            if r.is_distractor { "1" } else { "0" },
        ])
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn records_of(d: &Dataset) -> Vec<MetadataRecord> {
    d.detections
        .iter()
        .map(|det| MetadataRecord {
            record_id: det.record_id.clone(),
            person_id: det.person_id,
            camera_id: det.camera_id,
            frame: det.timestamp,
            is_distractor: det.is_distractor,
        })
        .collect()
}

/// Fields encoded in a Market-1501 style image name such as
/// `0002_c1s1_000451_03.jpg`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketName {
    /// `None` for distractors (`-1`).
    pub person_id: Option<u32>,
    /// Zero-based camera index (`c1` is camera 0).
    pub camera_id: usize,
    pub session: u32,
    pub frame: i64,
    pub sequence: u32,
}

impl MarketName {
    pub fn is_distractor(&self) -> bool {
        self.person_id.is_none()
    }
}

fn market_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(-1|\d+)_c(\d+)s(\d+)_(\d+)_(\d+)(?:\.[A-Za-z0-9]+)?$").expect("valid pattern")
    })
}

/// Frame numbers are returned as written; session offsets are not re-based.
pub fn parse_market_filename(name: &str) -> Result<MarketName> {
    let bad = |why: &str| Error::parse(Location::Unknown, format!("{name:?}: {why}"));
    let caps = market_pattern()
        .captures(name)
        .ok_or_else(|| bad("does not match <person>_c<cam>s<session>_<frame>_<seq>"))?;
    let num = |i: usize| caps[i].parse::<u64>().map_err(|_| bad("number out of range"));
    let person_id = match &caps[1] {
        "-1" => None,
        _ => Some(u32::try_from(num(1)?).map_err(|_| bad("person id out of range"))?),
    };
    let camera = num(2)?;
    if camera == 0 {
        return Err(bad("camera numbers start at c1"));
    }
    Ok(MarketName {
        person_id,
        camera_id: (camera - 1) as usize,
        session: num(3)? as u32,
        frame: i64::try_from(num(4)?).map_err(|_| bad("frame out of range"))?,
        sequence: num(5)? as u32,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    Float32,
    Float64,
}

impl Dtype {
    pub fn code(self) -> u16 {
        match self {
            Dtype::Float32 => 1,
            Dtype::Float64 => 2,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            1 => Some(Dtype::Float32),
            2 => Some(Dtype::Float64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Float64 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub version: u16,
    pub dtype: Dtype,
    pub rows: u32,
    pub dim: u32,
}

impl FeatureFileHeader {
    pub fn to_bytes(&self) -> [u8; FEATURE_HEADER_LEN] {
        let mut b = [0u8; FEATURE_HEADER_LEN];
        b[0..4].copy_from_slice(&FEATURE_MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6..8].copy_from_slice(&self.dtype.code().to_le_bytes());
        b[8..12].copy_from_slice(&self.rows.to_le_bytes());
        b[12..16].copy_from_slice(&self.dim.to_le_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; FEATURE_HEADER_LEN]) -> Result<Self> {
        if b[0..4] != FEATURE_MAGIC {
            return Err(Error::parse(Location::Byte(0), "bad magic, expected STRF"));
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != FEATURE_VERSION {
            return Err(Error::parse(Location::Byte(4), format!("unsupported version {version}")));
        }
        let code = u16::from_le_bytes([b[6], b[7]]);
        let dtype =
            Dtype::from_code(code).ok_or_else(|| Error::parse(Location::Byte(6), format!("unknown dtype code {code}")))?;
        Ok(FeatureFileHeader {
            version,
            dtype,
            rows: u32::from_le_bytes([b[8], b[9], b[10], b[11]]),
            dim: u32::from_le_bytes([b[12], b[13], b[14], b[15]]),
        })
    }

    fn payload_len(&self) -> usize {
        self.rows as usize * self.dim as usize * self.dtype.size()
    }
}

pub trait FeatureScalar: Copy + Sized {
    const DTYPE: Dtype;
    fn decode(bytes: &[u8]) -> Self;
    fn encode(self, out: &mut Vec<u8>);
    fn to_f64(self) -> f64;
}

impl FeatureScalar for f32 {
    const DTYPE: Dtype = Dtype::Float32;

    fn decode(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }

    fn encode(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl FeatureScalar for f64 {
    const DTYPE: Dtype = Dtype::Float64;

    fn decode(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }

    fn encode(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn to_f64(self) -> f64 {
        self
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: FeatureScalar> FeatureMatrix<T> {
    pub fn new(rows: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::DimensionMismatch {
                expected: rows * dim,
                actual: data.len(),
            });
        }
        Ok(FeatureMatrix { rows, dim, data })
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_f64(&self) -> FeatureMatrix<f64> {
        FeatureMatrix {
            rows: self.rows,
            dim: self.dim,
            data: self.data.iter().map(|v| v.to_f64()).collect(),
        }
    }
}

pub fn write_feature_matrix<T: FeatureScalar, W: Write>(mut sink: W, m: &FeatureMatrix<T>) -> Result<()> {
    let too_big = |what| Error::InvalidConfig(format!("{what} exceeds u32"));
    let header = FeatureFileHeader {
        version: FEATURE_VERSION,
        dtype: T::DTYPE,
        rows: u32::try_from(m.rows).map_err(|_| too_big("rows"))?,
        dim: u32::try_from(m.dim).map_err(|_| too_big("dim"))?,
    };
    sink.write_all(&header.to_bytes())?;
    let mut buf = Vec::with_capacity(m.data.len() * T::DTYPE.size());
    for v in &m.data {
        v.encode(&mut buf);
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn read_header_and_payload<R: Read>(mut source: R) -> Result<(FeatureFileHeader, Vec<u8>)> {
    let mut head = [0u8; FEATURE_HEADER_LEN];
    let mut got = 0;
    while got < FEATURE_HEADER_LEN {
        match source.read(&mut head[got..])? {
            0 => {
                return Err(Error::parse(
                    Location::Byte(got as u64),
                    "file ends inside the 16-byte header",
                ))
            }
            n => got += n,
        }
    }
    let header = FeatureFileHeader::from_bytes(&head)?;
    let mut payload = Vec::new();
    source.read_to_end(&mut payload)?;
    let expected = header.payload_len();
    if payload.len() != expected {
        return Err(Error::parse(
            Location::Byte((FEATURE_HEADER_LEN + payload.len().min(expected)) as u64),
            format!(
                "payload is {} bytes, header declares {}x{} {:?} = {expected} bytes",
                payload.len(),
                header.rows,
                header.dim,
                header.dtype
            ),
        ));
    }
    Ok((header, payload))
}

fn decode_payload<T: FeatureScalar>(header: &FeatureFileHeader, payload: &[u8]) -> Result<FeatureMatrix<T>> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::decode).collect();
    FeatureMatrix::new(header.rows as usize, header.dim as usize, data)
}

/// Reads a matrix whose stored dtype must be `T`.
pub fn read_feature_matrix<T: FeatureScalar, R: Read>(source: R) -> Result<FeatureMatrix<T>> {
    let (header, payload) = read_header_and_payload(source)?;
    if header.dtype != T::DTYPE {
        return Err(Error::parse(
            Location::Byte(6),
            format!("file holds {:?}, requested {:?}", header.dtype, T::DTYPE),
        ));
    }
    decode_payload(&header, &payload)
}

/// Reads either dtype, widening to f64.
pub fn read_feature_matrix_f64<R: Read>(source: R) -> Result<FeatureMatrix<f64>> {
    let (header, payload) = read_header_and_payload(source)?;
    match header.dtype {
        Dtype::Float32 => Ok(decode_payload::<f32>(&header, &payload)?.to_f64()),
        Dtype::Float64 => decode_payload(&header, &payload),
    }
}

pub fn features_of(d: &Dataset) -> Result<FeatureMatrix<f64>> {
    let data = d.detections.iter().flat_map(|det| det.feature.iter().copied()).collect();
    FeatureMatrix::new(d.len(), d.feature_dim, data)
}

/// Smallest camera count covering every record, never below 2.
pub fn infer_camera_count<'a>(records: impl IntoIterator<Item = &'a MetadataRecord>) -> usize {
    records.into_iter().map(|r| r.camera_id + 1).max().unwrap_or(0).max(2)
}

/// Joins metadata with features by position. `features == None` builds a
/// feature-less dataset (`feature_dim = 0`), enough for fitting transitions.
pub fn join(
    records: &[MetadataRecord],
    features: Option<&FeatureMatrix<f64>>,
    camera_count: usize,
    role: Role,
) -> Result<Dataset> {
    if let Some(f) = features {
        if f.rows != records.len() {
            return Err(Error::Validation(format!(
                "{role}: {} metadata rows but {} feature rows",
                records.len(),
                f.rows
            )));
        }
    }
    let detections = records
        .iter()
        .enumerate()
        .map(|(i, r)| Detection {
            record_id: r.record_id.clone(),
            feature: features.map_or_else(Vec::new, |f| f.row(i).to_vec()),
            camera_id: r.camera_id,
            timestamp: r.frame,
            person_id: r.person_id,
            is_distractor: r.is_distractor,
        })
        .collect();
    let dim = features.map_or(0, |f| f.dim);
    Dataset::validated(detections, camera_count, dim, role)
}
