//! Constrained-degree multivariate polynomial regression.
//!
//! Models are linear in their coefficients over the monomial basis
//! `h^j1 gamma^j2 LL^j3 UL^j4` with the total degree and per-variable
//! maximum exponents capped independently (the `Poly3344` naming scheme
//! encodes the per-variable caps). Inputs are autoscaled to unit variance
//! and targets normalized to [-1, 1] on the training set; fits go through
//! Householder QR.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{InputVector, MfeRecord, ScalingSpec, Target};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::stats;

/// Exponent caps of a polynomial model: total degree plus one maximum
/// exponent per input variable (h, gamma, LL, UL).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialSpec {
    pub total_degree: u32,
    pub per_var_max: [u32; 4],
}

impl PolynomialSpec {
    pub fn new(total_degree: u32, per_var_max: [u32; 4]) -> Result<Self> {
        if total_degree < 1 {
            return Err(Error::Invalid("total degree must be at least 1".into()));
        }
        if per_var_max.iter().any(|&m| m > total_degree) {
            return Err(Error::Invalid(format!(
                "per-variable caps {per_var_max:?} exceed total degree {total_degree}"
            )));
        }
        Ok(Self { total_degree, per_var_max })
    }

    /// Caps from the naming scheme: `Poly3344` means per-variable maxima
    /// (3, 3, 4, 4) with total degree 4 (the largest cap).
    pub fn from_caps(caps: [u32; 4]) -> Result<Self> {
        let d = *caps.iter().max().unwrap();
        Self::new(d, caps)
    }

    /// Parse names like "Poly3344" or bare digit strings like "3344".
    pub fn parse_name(name: &str) -> Result<Self> {
        let digits = name.strip_prefix("Poly").or_else(|| name.strip_prefix("poly")).unwrap_or(name);
        let ds: Vec<u32> = digits.chars().filter_map(|c| c.to_digit(10)).collect();
        if ds.len() != 4 || digits.len() != 4 {
            return Err(Error::Config(format!("cannot parse polynomial spec '{name}'")));
        }
        Self::from_caps([ds[0], ds[1], ds[2], ds[3]])
    }

    pub fn name(&self) -> String {
        format!(
            "Poly{}{}{}{}",
            self.per_var_max[0], self.per_var_max[1], self.per_var_max[2], self.per_var_max[3]
        )
    }
}

/// All exponent 4-tuples with sum <= total degree and each component within
/// its cap, in graded-lexicographic order; the constant term comes first.
pub fn enumerate_terms(spec: &PolynomialSpec) -> Vec<[u32; 4]> {
    let d = spec.total_degree;
    let caps = spec.per_var_max;
    let mut terms = Vec::new();
    for j1 in 0..=caps[0].min(d) {
        for j2 in 0..=caps[1].min(d - j1) {
            for j3 in 0..=caps[2].min(d - j1 - j2) {
                for j4 in 0..=caps[3].min(d - j1 - j2 - j3) {
                    terms.push([j1, j2, j3, j4]);
                }
            }
        }
    }
    terms.sort_by_key(|t| (t.iter().sum::<u32>(), *t));
    terms
}

/// Design matrix over an exponent table: entry (i, k) is the product of
/// scaled input powers for sample i and term k.
pub fn design_matrix(inputs: &[InputVector], exponents: &[[u32; 4]], scaling: &ScalingSpec) -> Matrix {
    assert!(!inputs.is_empty(), "design matrix needs at least one record");
    let mut d = Matrix::zeros(inputs.len(), exponents.len());
    for (i, z) in inputs.iter().enumerate() {
        let s = scaling.scale_input(z);
        let row = d.row_mut(i);
        for (k, exps) in exponents.iter().enumerate() {
            let mut v = 1.0;
            for (x, &e) in s.iter().zip(exps) {
                v *= x.powi(e as i32);
            }
            row[k] = v;
        }
    }
    d
}

/// Training-set goodness-of-fit summary. MSE and residual statistics are on
/// the normalized [-1, 1] output scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub n_train: usize,
    pub n_coefficients: usize,
    pub dof: usize,
    pub train_mse: f64,
    pub r2: f64,
    pub r2_adjusted: f64,
}

/// A fitted polynomial model together with everything needed to predict,
/// produce prediction bounds, and round-trip through JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub spec: PolynomialSpec,
    pub target: Target,
    pub exponent_table: Vec<[u32; 4]>,
    /// Coefficients on the scaled-input / normalized-output basis, in
    /// exponent-table order.
    pub coefficients: Vec<f64>,
    pub scaling: ScalingSpec,
    pub stats: FitStats,
    /// R factor of the design QR; retained for leverage terms in
    /// prediction bounds.
    pub r_factor: Matrix,
    pub dataset_fingerprint: String,
    /// Axis-aligned bounding box of the raw training inputs.
    pub train_hull: ([f64; 4], [f64; 4]),
}

fn extract_targets(records: &[MfeRecord], target: Target) -> Result<(Vec<InputVector>, Vec<f64>)> {
    let mut inputs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        match target.extract(r) {
            Some(y) => {
                inputs.push(r.input);
                ys.push(y);
            }
            None => {
                return Err(Error::Data(format!(
                    "record {i} is an empty envelope; exclude it before fitting"
                )));
            }
        }
    }
    Ok((inputs, ys))
}

fn input_hull(inputs: &[InputVector]) -> ([f64; 4], [f64; 4]) {
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for z in inputs {
        for (k, v) in z.as_array().iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    (lo, hi)
}

/// Fit a polynomial by linear least squares on the selected target.
pub fn fit(records: &[MfeRecord], spec: &PolynomialSpec, target: Target) -> Result<LinearFit> {
    let (inputs, raw_y) = extract_targets(records, target)?;
    let exponents = enumerate_terms(spec);
    let p = exponents.len();
    let m = inputs.len();
    if m <= p {
        return Err(Error::InsufficientData { samples: m, coefficients: p });
    }
    let scaling = ScalingSpec::fit(&inputs, std::slice::from_ref(&raw_y));
    let d = design_matrix(&inputs, &exponents, &scaling);
    let y: Vec<f64> = raw_y.iter().map(|&v| scaling.normalize_output(0, v)).collect();
    let (coefficients, r_factor) = linalg::lsq_solve_with_r(&d, &y)?;

    let pred = d.mul_vec(&coefficients);
    let sse: f64 = pred.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum();
    let mean_y = stats::mean(&y);
    let sst: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let r2_adjusted = adjusted_r2(r2, m, p);

    Ok(LinearFit {
        spec: *spec,
        target,
        exponent_table: exponents,
        coefficients,
        scaling,
        stats: FitStats {
            n_train: m,
            n_coefficients: p,
            dof: m - p,
            train_mse: sse / m as f64,
            r2,
            r2_adjusted,
        },
        r_factor,
        dataset_fingerprint: crate::data::dataset_fingerprint(records),
        train_hull: input_hull(&inputs),
    })
}

pub fn adjusted_r2(r2: f64, m: usize, p: usize) -> f64 {
    if m <= p + 1 {
        return r2;
    }
    1.0 - (1.0 - r2) * (m as f64 - 1.0) / (m as f64 - p as f64 - 1.0)
}

impl LinearFit {
    /// De-normalized scalar prediction at a raw input.
    pub fn predict(&self, input: &InputVector) -> f64 {
        let s = self.scaling.scale_input(input);
        let mut acc = 0.0;
        for (coef, exps) in self.coefficients.iter().zip(&self.exponent_table) {
            let mut v = *coef;
            for (x, &e) in s.iter().zip(exps) {
                v *= x.powi(e as i32);
            }
            acc += v;
        }
        self.scaling.denormalize_output(0, acc)
    }

    /// Prediction rounded to the nearest non-negative integer, for count
    /// targets such as `n_trim`.
    pub fn predict_rounded(&self, input: &InputVector) -> u64 {
        self.predict(input).round().max(0.0) as u64
    }

    /// Coefficients of the polynomial over the RAW inputs and raw output,
    /// folding input autoscaling and output normalization back in.
    pub fn denormalized_coefficients(&self) -> Vec<f64> {
        let half = self.scaling.output_halfrange[0];
        let off = self.scaling.output_offset[0];
        self.coefficients
            .iter()
            .zip(&self.exponent_table)
            .map(|(c, exps)| {
                let mut v = c * half;
                for (w, &e) in self.scaling.input_weights.iter().zip(exps) {
                    v *= w.powi(e as i32);
                }
                if exps.iter().all(|&e| e == 0) {
                    v += off;
                }
                v
            })
            .collect()
    }

    /// True when every component of the input lies inside the training
    /// bounding box.
    pub fn in_train_hull(&self, input: &InputVector) -> bool {
        let (lo, hi) = &self.train_hull;
        input
            .as_array()
            .iter()
            .enumerate()
            .all(|(k, v)| *v >= lo[k] - 1e-12 && *v <= hi[k] + 1e-12)
    }

    /// Prediction interval at the given confidence level:
    /// `yhat +/- t_{dof,(1+c)/2} * s * sqrt(1 + x^T (D^T D)^-1 x)`.
    pub fn prediction_bounds(&self, input: &InputVector, confidence: f64) -> (f64, f64) {
        assert!(confidence > 0.0 && confidence < 1.0, "confidence in (0, 1)");
        let s2 = self.stats.train_mse * self.stats.n_train as f64 / self.stats.dof as f64;
        let x = self.term_row(input);
        // x^T (R^T R)^-1 x = ||R^-T x||^2 via forward substitution.
        let u = forward_substitute_transposed(&self.r_factor, &x);
        let leverage: f64 = u.iter().map(|v| v * v).sum();
        let t = stats::student_t_quantile(0.5 * (1.0 + confidence), self.stats.dof);
        let half_norm = t * s2.sqrt() * (1.0 + leverage).sqrt();
        let center = self.predict(input);
        let half_raw = half_norm * self.scaling.output_halfrange[0];
        (center - half_raw, center + half_raw)
    }

    fn term_row(&self, input: &InputVector) -> Vec<f64> {
        let s = self.scaling.scale_input(input);
        self.exponent_table
            .iter()
            .map(|exps| {
                let mut v = 1.0;
                for (x, &e) in s.iter().zip(exps) {
                    v *= x.powi(e as i32);
                }
                v
            })
            .collect()
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Solve R^T u = x for upper-triangular R.
fn forward_substitute_transposed(r: &Matrix, x: &[f64]) -> Vec<f64> {
    let n = r.cols();
    let mut u = vec![0.0; n];
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= r[(j, i)] * u[j];
        }
        u[i] = s / r[(i, i)];
    }
    u
}

/// Evaluation metrics of a fit over a record set, on the normalized scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub r2: f64,
    pub r2_adjusted: f64,
    pub residuals: Vec<f64>,
}

pub fn metrics(fit: &LinearFit, records: &[MfeRecord]) -> Result<Metrics> {
    let (inputs, raw_y) = extract_targets(records, fit.target)?;
    if inputs.is_empty() {
        return Err(Error::Data("metrics need at least one record".into()));
    }
    let y: Vec<f64> = raw_y.iter().map(|&v| fit.scaling.normalize_output(0, v)).collect();
    let pred: Vec<f64> = inputs
        .iter()
        .map(|z| fit.scaling.normalize_output(0, fit.predict(z)))
        .collect();
    let residuals: Vec<f64> = pred.iter().zip(&y).map(|(p, t)| p - t).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    let mean_y = stats::mean(&y);
    let sst: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    Ok(Metrics {
        mse: sse / y.len() as f64,
        r2,
        r2_adjusted: adjusted_r2(r2, y.len(), fit.stats.n_coefficients),
        residuals,
    })
}

/// Absolute prediction error as a percentage of the observation.
pub fn error_percentage(y: f64, yhat: f64) -> Result<f64> {
    if y == 0.0 {
        return Err(Error::DivisionByZero {
            context: "error percentage of a zero observation".into(),
        });
    }
    Ok((y - yhat).abs() / y.abs() * 100.0)
}

/// One candidate's row in the degree diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticEntry {
    pub spec: PolynomialSpec,
    pub n_coefficients: usize,
    /// None when the fit failed outright (rank-deficient design).
    pub train_mse: Option<f64>,
    pub test_mse: Option<f64>,
    /// Mean normalized squared error over the mid-range probe points.
    pub probe_mse: Option<f64>,
    pub rank_deficient: bool,
    pub over_specified: bool,
}

/// Probe-based over-specification diagnostic across a candidate family.
///
/// Every candidate is fitted on `train` and scored on `test` and on held-out
/// mid-range `probes` (inputs with known targets). A candidate is flagged
/// over-specified when its design matrix is rank deficient or its probe MSE
/// exceeds ten times its test MSE — the oscillatory-interpolation failure
/// mode that test-set MSE alone does not expose. Entries come back ranked,
/// flagged candidates last.
pub fn degree_diagnostic(
    train: &[MfeRecord],
    test: &[MfeRecord],
    specs: &[PolynomialSpec],
    target: Target,
    probes: &[(InputVector, f64)],
) -> Result<Vec<DiagnosticEntry>> {
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        let n_coefficients = enumerate_terms(spec).len();
        match fit(train, spec, target) {
            Ok(f) => {
                let test_m = metrics(&f, test)?;
                let probe_mse = if probes.is_empty() {
                    None
                } else {
                    let sum: f64 = probes
                        .iter()
                        .map(|(z, y)| {
                            let e = f.scaling.normalize_output(0, f.predict(z))
                                - f.scaling.normalize_output(0, *y);
                            e * e
                        })
                        .sum();
                    Some(sum / probes.len() as f64)
                };
                let over = match probe_mse {
                    Some(p) => p > 10.0 * test_m.mse.max(f64::MIN_POSITIVE),
                    None => false,
                };
                entries.push(DiagnosticEntry {
                    spec: *spec,
                    n_coefficients,
                    train_mse: Some(f.stats.train_mse),
                    test_mse: Some(test_m.mse),
                    probe_mse,
                    rank_deficient: false,
                    over_specified: over,
                });
            }
            Err(Error::RankDeficient { .. }) => entries.push(DiagnosticEntry {
                spec: *spec,
                n_coefficients,
                train_mse: None,
                test_mse: None,
                probe_mse: None,
                rank_deficient: true,
                over_specified: true,
            }),
            Err(e) => return Err(e),
        }
    }
    entries.sort_by(|a, b| {
        let key = |e: &DiagnosticEntry| {
            (
                e.over_specified,
                e.probe_mse.unwrap_or(f64::INFINITY),
                e.test_mse.unwrap_or(f64::INFINITY),
            )
        };
        let (ka, kb) = (key(a), key(b));
        ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
    });
    Ok(entries)
}
