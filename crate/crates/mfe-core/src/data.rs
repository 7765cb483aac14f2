//! Shared data model: the predictor vector, envelope records, input/output
//! scaling, and the database CSV schema.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Nominal rudder deflection range, degrees.
pub const RUDDER_RANGE: (f64, f64) = (-30.0, 30.0);
/// Flight-path-angle range, degrees.
pub const GAMMA_RANGE: (f64, f64) = (-5.0, 5.0);

/// Predictor 4-vector `[h, gamma, LL, UL]`: altitude, flight path angle, and
/// the lower/upper rudder deflection limits encoding the failure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputVector {
    /// Altitude, ft.
    pub h: f64,
    /// Flight path angle, deg.
    pub gamma: f64,
    /// Rudder lower deflection limit, deg.
    pub ll: f64,
    /// Rudder upper deflection limit, deg.
    pub ul: f64,
}

impl InputVector {
    pub fn new(h: f64, gamma: f64, ll: f64, ul: f64) -> Result<Self> {
        let v = Self { h, gamma, ll, ul };
        v.validate().map_err(|m| Error::Invalid(m))?;
        Ok(v)
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if !(self.h.is_finite() && self.gamma.is_finite() && self.ll.is_finite() && self.ul.is_finite()) {
            return Err("non-finite input component".into());
        }
        if self.h < 0.0 {
            return Err(format!("altitude {} ft below zero", self.h));
        }
        if self.gamma < GAMMA_RANGE.0 || self.gamma > GAMMA_RANGE.1 {
            return Err(format!("gamma {} deg outside [{}, {}]", self.gamma, GAMMA_RANGE.0, GAMMA_RANGE.1));
        }
        if self.ll > self.ul {
            return Err(format!("lower limit {} above upper limit {}", self.ll, self.ul));
        }
        if self.ll < RUDDER_RANGE.0 || self.ul > RUDDER_RANGE.1 {
            return Err(format!(
                "rudder limits [{}, {}] outside [{}, {}]",
                self.ll, self.ul, RUDDER_RANGE.0, RUDDER_RANGE.1
            ));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.h, self.gamma, self.ll, self.ul]
    }
}

/// Targets of one non-empty 2D envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfeTargets {
    /// Number of accepted trim points (envelope contraction characteristic).
    pub n_trim: usize,
    /// Centroid airspeed, knot.
    pub centroid_v: f64,
    /// Centroid turn rate, deg/s.
    pub centroid_psidot: f64,
}

/// One 2D envelope's characteristics. `targets` is `None` for an empty
/// envelope (no feasible trim point on the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfeRecord {
    pub input: InputVector,
    pub targets: Option<MfeTargets>,
}

impl MfeRecord {
    pub fn new(input: InputVector, n_trim: usize, centroid_v: f64, centroid_psidot: f64) -> Result<Self> {
        if n_trim == 0 {
            return Err(Error::Invalid("non-empty record needs n_trim >= 1".into()));
        }
        if !centroid_v.is_finite() || !centroid_psidot.is_finite() {
            return Err(Error::Invalid("non-finite centroid".into()));
        }
        Ok(Self {
            input,
            targets: Some(MfeTargets { n_trim, centroid_v, centroid_psidot }),
        })
    }

    pub fn empty(input: InputVector) -> Self {
        Self { input, targets: None }
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_none()
    }
}

/// Which scalar an experiment regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    NTrim,
    CentroidV,
    CentroidPsidot,
}

impl Target {
    pub fn extract(&self, r: &MfeRecord) -> Option<f64> {
        let t = r.targets.as_ref()?;
        Some(match self {
            Target::NTrim => t.n_trim as f64,
            Target::CentroidV => t.centroid_v,
            Target::CentroidPsidot => t.centroid_psidot,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Target::NTrim => "n_trim",
            Target::CentroidV => "centroid_v",
            Target::CentroidPsidot => "centroid_psidot",
        }
    }
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_trim" | "ntrim" => Ok(Target::NTrim),
            "centroid_v" | "v" => Ok(Target::CentroidV),
            "centroid_psidot" | "psidot" => Ok(Target::CentroidPsidot),
            other => Err(Error::Config(format!("unknown target '{other}'"))),
        }
    }
}

/// Input autoscaling (inverse standard deviations) and per-channel output
/// normalization to [-1, 1], both anchored on the training set only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    /// One positive weight per input variable (h, gamma, LL, UL).
    pub input_weights: [f64; 4],
    pub output_offset: Vec<f64>,
    pub output_halfrange: Vec<f64>,
}

impl ScalingSpec {
    /// Identity scaling for `channels` output channels.
    pub fn unit(channels: usize) -> Self {
        Self {
            input_weights: [1.0; 4],
            output_offset: vec![0.0; channels],
            output_halfrange: vec![1.0; channels],
        }
    }

    /// Fit from training inputs (population standard deviation) and raw
    /// per-channel training targets (min/max midpoint and half range).
    pub fn fit(inputs: &[InputVector], outputs: &[Vec<f64>]) -> Self {
        let mut input_weights = [1.0; 4];
        for k in 0..4 {
            let col: Vec<f64> = inputs.iter().map(|z| z.as_array()[k]).collect();
            let sd = stats::std_population(&col);
            input_weights[k] = if sd > 0.0 { 1.0 / sd } else { 1.0 };
        }
        let mut output_offset = Vec::with_capacity(outputs.len());
        let mut output_halfrange = Vec::with_capacity(outputs.len());
        for ch in outputs {
            let (lo, hi) = ch.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
            let half = 0.5 * (hi - lo);
            output_offset.push(0.5 * (hi + lo));
            output_halfrange.push(if half > 0.0 { half } else { 1.0 });
        }
        Self { input_weights, output_offset, output_halfrange }
    }

    pub fn scale_input(&self, z: &InputVector) -> [f64; 4] {
        let raw = z.as_array();
        [
            raw[0] * self.input_weights[0],
            raw[1] * self.input_weights[1],
            raw[2] * self.input_weights[2],
            raw[3] * self.input_weights[3],
        ]
    }

    pub fn normalize_output(&self, channel: usize, y: f64) -> f64 {
        (y - self.output_offset[channel]) / self.output_halfrange[channel]
    }

    pub fn denormalize_output(&self, channel: usize, y: f64) -> f64 {
        y * self.output_halfrange[channel] + self.output_offset[channel]
    }
}

/// Database CSV header (order is part of the schema).
pub const CSV_HEADER: [&str; 7] = [
    "h_ft",
    "gamma_deg",
    "ll_deg",
    "ul_deg",
    "n_trim",
    "centroid_v_kt",
    "centroid_psidot_dps",
];

/// Write non-empty records as database CSV. Floats use the shortest decimal
/// representation that round-trips bit-exactly.
pub fn write_csv<W: Write>(records: &[MfeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        let t = match &r.targets {
            Some(t) => t,
            None => continue,
        };
        w.write_record([
            r.input.h.to_string(),
            r.input.gamma.to_string(),
            r.input.ll.to_string(),
            r.input.ul.to_string(),
            t.n_trim.to_string(),
            t.centroid_v.to_string(),
            t.centroid_psidot.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_path(records: &[MfeRecord], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_csv(records, f)
}

/// Parse and validate a database CSV. Rows violating record invariants are
/// rejected with their (1-based, header-inclusive) line numbers.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<MfeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    {
        let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
        let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
        if got != CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("bad header {:?}, expected {:?}", got, CSV_HEADER),
            });
        }
    }
    let mut records = Vec::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        if row.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("{} fields, expected {}", row.len(), CSV_HEADER.len()),
            });
        }
        let field = |i: usize| -> Result<f64> {
            row[i].trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("field '{}': {e}", CSV_HEADER[i]),
            })
        };
        let h = field(0)?;
        let gamma = field(1)?;
        let ll = field(2)?;
        let ul = field(3)?;
        let n_trim: usize = row[4].trim().parse().map_err(|e| Error::Parse {
            line,
            message: format!("field 'n_trim': {e}"),
        })?;
        let centroid_v = field(5)?;
        let centroid_psidot = field(6)?;

        let input = InputVector { h, gamma, ll, ul };
        input
            .validate()
            .map_err(|m| Error::InvariantViolation { row: line, message: m })?;
        let record = MfeRecord::new(input, n_trim, centroid_v, centroid_psidot).map_err(|e| {
            Error::InvariantViolation { row: line, message: e.to_string() }
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn read_csv_path(path: &Path) -> Result<Vec<MfeRecord>> {
    let f = std::fs::File::open(path)?;
    read_csv(f)
}

/// FNV-1a content fingerprint over the canonical CSV bytes; identifies the
/// dataset a model artifact was fitted on.
pub fn dataset_fingerprint(records: &[MfeRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("in-memory CSV write");
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in buf {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}
