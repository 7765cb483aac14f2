//! Two-layer feedforward network: tanh hidden layer, linear output layer.
//!
//! Training runs Levenberg-Marquardt on the full-batch residual vector with
//! the Jacobian assembled from backpropagated Marquardt sensitivities (one
//! row per sample-channel pair). Initialization is Nguyen-Widrow, stopping
//! is validation-based, and model selection takes the best of several
//! restarts. A single-sample SGD step is included as an independent
//! reference for the sensitivity recursion.

use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InputVector, MfeRecord, ScalingSpec, Target};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nlsq::{lm_solve_observed, LmConfig, ResidualModel, StepControl, Termination};

/// Fixed input dimension (h, gamma, LL, UL).
pub const INPUT_DIM: usize = 4;

/// Weights and biases of the two layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// Hidden weights, S1 x R.
    pub w1: Matrix,
    /// Hidden biases, length S1.
    pub b1: Vec<f64>,
    /// Output weights, S2 x S1.
    pub w2: Matrix,
    /// Output biases, length S2.
    pub b2: Vec<f64>,
}

/// Total coefficient count: S1 (R + 1) + S2 (S1 + 1).
pub fn param_count(s1: usize, r: usize, s2: usize) -> usize {
    s1 * (r + 1) + s2 * (s1 + 1)
}

impl MlpParams {
    pub fn zeros(s1: usize, s2: usize) -> Self {
        Self {
            w1: Matrix::zeros(s1, INPUT_DIM),
            b1: vec![0.0; s1],
            w2: Matrix::zeros(s2, s1),
            b2: vec![0.0; s2],
        }
    }

    pub fn hidden_count(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_count(&self) -> usize {
        self.w2.rows()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.hidden_count(), INPUT_DIM, self.output_count())
    }

    /// Flatten as (w1 row-major, b1, w2 row-major, b2); the Jacobian column
    /// order and all artifacts use this layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(self.w1.data());
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(self.w2.data());
        v.extend_from_slice(&self.b2);
        v
    }

    pub fn unflatten(s1: usize, s2: usize, flat: &[f64]) -> Result<Self> {
        let expected = param_count(s1, INPUT_DIM, s2);
        if flat.len() != expected {
            return Err(Error::ShapeMismatch {
                context: format!("{} parameters for S1={s1}, S2={s2} (need {expected})", flat.len()),
            });
        }
        let mut off = 0;
        let take = |off: &mut usize, n: usize| {
            let s = &flat[*off..*off + n];
            *off += n;
            s.to_vec()
        };
        let w1 = Matrix::new(s1, INPUT_DIM, take(&mut off, s1 * INPUT_DIM))?;
        let b1 = take(&mut off, s1);
        let w2 = Matrix::new(s2, s1, take(&mut off, s2 * s1))?;
        let b2 = take(&mut off, s2);
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Hidden activations tanh(w1 z + b1).
    pub fn hidden(&self, z: &[f64; INPUT_DIM]) -> Vec<f64> {
        (0..self.hidden_count())
            .map(|l| {
                let row = self.w1.row(l);
                (row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.b1[l]).tanh()
            })
            .collect()
    }

    /// Network output w2 tanh(w1 z + b1) + b2 at a pre-scaled input.
    pub fn forward(&self, z: &[f64; INPUT_DIM]) -> Vec<f64> {
        let a1 = self.hidden(z);
        (0..self.output_count())
            .map(|e| {
                self.w2.row(e).iter().zip(&a1).map(|(w, a)| w * a).sum::<f64>() + self.b2[e]
            })
            .collect()
    }
}

/// Nguyen-Widrow initialization: hidden rows at magnitude `0.7 S1^(1/R)`
/// with random directions, biases spaced so the active regions tile the
/// [-1, 1] input interval; output layer small uniform random.
pub fn nguyen_widrow_init(s1: usize, s2: usize, seed: u64) -> MlpParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let magnitude = 0.7 * (s1 as f64).powf(1.0 / INPUT_DIM as f64);
    let mut p = MlpParams::zeros(s1, s2);
    for l in 0..s1 {
        let mut dir = [0.0; INPUT_DIM];
        loop {
            for d in &mut dir {
                *d = rng.gen_range(-1.0..1.0);
            }
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-3 {
                for d in &mut dir {
                    *d /= n;
                }
                break;
            }
        }
        for (k, d) in dir.iter().enumerate() {
            p.w1[(l, k)] = magnitude * d;
        }
        p.b1[l] = if s1 == 1 {
            0.0
        } else {
            let spacing = -1.0 + 2.0 * l as f64 / (s1 as f64 - 1.0);
            magnitude * spacing * p.w1[(l, 0)].signum()
        };
    }
    for e in 0..s2 {
        for l in 0..s1 {
            p.w2[(e, l)] = rng.gen_range(-0.5..0.5);
        }
        p.b2[e] = rng.gen_range(-0.5..0.5);
    }
    p
}

/// Jacobian of the residual map e = y - a2 over a batch of scaled inputs:
/// `m S2` rows ordered sample-major, columns in flatten() order. Rows come
/// from backpropagating the Marquardt sensitivities with the output layer
/// seeded at minus the (identity) linear-activation derivative.
pub fn marquardt_jacobian(params: &MlpParams, batch: &[[f64; INPUT_DIM]]) -> Matrix {
    assert!(!batch.is_empty(), "Jacobian needs a nonempty batch");
    let s1 = params.hidden_count();
    let s2 = params.output_count();
    let p = params.param_count();
    let w1_len = s1 * INPUT_DIM;
    let w2_off = w1_len + s1;
    let b2_off = w2_off + s2 * s1;

    let mut jac = Matrix::zeros(batch.len() * s2, p);
    for (i, z) in batch.iter().enumerate() {
        let a1 = params.hidden(z);
        for eps in 0..s2 {
            let row = jac.row_mut(i * s2 + eps);
            // Output layer: lambda2 = -1 on channel eps.
            for (l, a) in a1.iter().enumerate() {
                row[w2_off + eps * s1 + l] = -a;
            }
            row[b2_off + eps] = -1.0;
            // Hidden layer: lambda1 = M1 (W2)^T lambda2.
            for (l, a) in a1.iter().enumerate() {
                let lambda1 = -(1.0 - a * a) * params.w2[(eps, l)];
                for (k, x) in z.iter().enumerate() {
                    row[l * INPUT_DIM + k] = lambda1 * x;
                }
                row[w1_len + l] = lambda1;
            }
        }
    }
    jac
}

/// One standard-backpropagation update on a single (scaled input, target)
/// pair. Reference implementation validating the sensitivity recursion
/// independently of the LM path.
pub fn sgd_backprop_step(
    params: &MlpParams,
    z: &[f64; INPUT_DIM],
    y: &[f64],
    sigma: f64,
) -> MlpParams {
    assert!(sigma > 0.0, "learning rate must be positive");
    assert_eq!(y.len(), params.output_count());
    let a1 = params.hidden(z);
    let a2 = params.forward(z);
    let e: Vec<f64> = y.iter().zip(&a2).map(|(t, o)| t - o).collect();

    // lambda2 = -2 M2 e with M2 = I for the linear output layer.
    let lambda2: Vec<f64> = e.iter().map(|v| -2.0 * v).collect();
    // lambda1 = M1 (W2)^T lambda2 with M1 = diag(1 - a1^2).
    let lambda1: Vec<f64> = (0..params.hidden_count())
        .map(|l| {
            let back: f64 = (0..params.output_count())
                .map(|eps| params.w2[(eps, l)] * lambda2[eps])
                .sum();
            (1.0 - a1[l] * a1[l]) * back
        })
        .collect();

    let mut out = params.clone();
    for eps in 0..params.output_count() {
        for l in 0..params.hidden_count() {
            out.w2[(eps, l)] -= sigma * lambda2[eps] * a1[l];
        }
        out.b2[eps] -= sigma * lambda2[eps];
    }
    for l in 0..params.hidden_count() {
        for k in 0..INPUT_DIM {
            out.w1[(l, k)] -= sigma * lambda1[l] * z[k];
        }
        out.b1[l] -= sigma * lambda1[l];
    }
    out
}

/// What the network regresses on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkOutput {
    /// Single channel (S2 = 1).
    Scalar(Target),
    /// Both centroid coordinates (S2 = 2).
    Centroid,
}

impl NetworkOutput {
    pub fn channels(&self) -> usize {
        match self {
            NetworkOutput::Scalar(_) => 1,
            NetworkOutput::Centroid => 2,
        }
    }

    pub fn extract(&self, r: &MfeRecord) -> Option<Vec<f64>> {
        let t = r.targets.as_ref()?;
        Some(match self {
            NetworkOutput::Scalar(target) => vec![match target {
                Target::NTrim => t.n_trim as f64,
                Target::CentroidV => t.centroid_v,
                Target::CentroidPsidot => t.centroid_psidot,
            }],
            NetworkOutput::Centroid => vec![t.centroid_v, t.centroid_psidot],
        })
    }
}

/// How the winning restart is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Lowest validation MSE (default).
    #[default]
    Validation,
    /// Lowest test-set MSE. Selecting on the test fold leaks it into model
    /// choice; only use to mirror published protocols.
    TestSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub restarts: usize,
    pub max_epochs: usize,
    /// Fraction of the records carved out as validation when `train` splits
    /// internally.
    pub validation_fraction: f64,
    /// Consecutive validation-MSE increases tolerated before stopping.
    pub max_validation_failures: usize,
    pub lm: LmConfig,
    /// Reference SGD learning rate (not used by the LM path).
    pub sigma: f64,
    pub seed: u64,
    pub selection: SelectionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 15,
            max_epochs: 200,
            validation_fraction: 0.1,
            max_validation_failures: 6,
            lm: LmConfig::default(),
            sigma: 1e-3,
            seed: 0,
            selection: SelectionMode::Validation,
        }
    }
}

/// One per-epoch row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub test_mse: Option<f64>,
}

/// A trained network: parameters at the best-validation epoch, its scaling,
/// and the training history of the winning restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNetwork {
    pub params: MlpParams,
    pub output: NetworkOutput,
    pub scaling: ScalingSpec,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub restart_index: usize,
    pub seed: u64,
    pub all_runs_stalled: bool,
}

impl TrainedNetwork {
    /// De-normalized prediction at a raw input.
    pub fn predict(&self, input: &InputVector) -> Vec<f64> {
        let z = self.scaling.scale_input(input);
        self.params
            .forward(&z)
            .iter()
            .enumerate()
            .map(|(ch, &v)| self.scaling.denormalize_output(ch, v))
            .collect()
    }

    /// Per-sample multi-output MSE on the normalized scale over records.
    pub fn normalized_mse(&self, records: &[MfeRecord]) -> Result<f64> {
        let (xs, ys) = normalized_dataset(records, &self.output, &self.scaling)?;
        Ok(dataset_mse(&self.params, &xs, &ys))
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

    /// Per-epoch MSE series as CSV (epoch, train, validation, test).
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epoch,train_mse,validation_mse,test_mse")?;
        for r in &self.history {
            writeln!(
                out,
                "{},{},{},{}",
                r.epoch,
                r.train_mse,
                r.validation_mse,
                r.test_mse.map_or(String::new(), |v| v.to_string())
            )?;
        }
        Ok(())
    }
}

struct MlpResiduals {
    s1: usize,
    s2: usize,
    inputs: Vec<[f64; INPUT_DIM]>,
    /// Normalized targets, sample-major (m x S2).
    targets: Vec<Vec<f64>>,
}

impl ResidualModel for MlpResiduals {
    fn param_count(&self) -> usize {
        param_count(self.s1, INPUT_DIM, self.s2)
    }

    fn residuals(&self, eta: &[f64]) -> Vec<f64> {
        let p = MlpParams::unflatten(self.s1, self.s2, eta).expect("flattened length fixed");
        let mut e = Vec::with_capacity(self.inputs.len() * self.s2);
        for (z, y) in self.inputs.iter().zip(&self.targets) {
            let out = p.forward(z);
            for (t, o) in y.iter().zip(&out) {
                e.push(t - o);
            }
        }
        e
    }

    fn jacobian(&self, eta: &[f64]) -> Option<Matrix> {
        let p = MlpParams::unflatten(self.s1, self.s2, eta).expect("flattened length fixed");
        Some(marquardt_jacobian(&p, &self.inputs))
    }
}

fn normalized_dataset(
    records: &[MfeRecord],
    output: &NetworkOutput,
    scaling: &ScalingSpec,
) -> Result<(Vec<[f64; INPUT_DIM]>, Vec<Vec<f64>>)> {
    let mut xs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let raw = output
            .extract(r)
            .ok_or_else(|| Error::Data(format!("record {i} is an empty envelope")))?;
        xs.push(scaling.scale_input(&r.input));
        ys.push(
            raw.iter()
                .enumerate()
                .map(|(ch, &v)| scaling.normalize_output(ch, v))
                .collect(),
        );
    }
    Ok((xs, ys))
}

/// Mean over samples of the per-sample channel-averaged squared error.
fn dataset_mse(params: &MlpParams, xs: &[[f64; INPUT_DIM]], ys: &[Vec<f64>]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let s2 = params.output_count() as f64;
    let total: f64 = xs
        .iter()
        .zip(ys)
        .map(|(z, y)| {
            let out = params.forward(z);
            y.iter().zip(&out).map(|(t, o)| (t - o) * (t - o)).sum::<f64>() / s2
        })
        .sum();
    total / xs.len() as f64
}

struct RestartOutcome {
    params: MlpParams,
    history: Vec<EpochRecord>,
    best_epoch: usize,
    best_val: f64,
    test_at_best: Option<f64>,
    stalled: bool,
}

fn run_restart(
    s1: usize,
    s2: usize,
    model: &MlpResiduals,
    val: &(Vec<[f64; INPUT_DIM]>, Vec<Vec<f64>>),
    test: &Option<(Vec<[f64; INPUT_DIM]>, Vec<Vec<f64>>)>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<RestartOutcome> {
    let init = nguyen_widrow_init(s1, s2, seed);
    let eta0 = init.flatten();

    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_eta = eta0.clone();
    let mut best_epoch = 0;
    let mut test_at_best = None;
    let mut failures = 0;

    let lm_cfg = LmConfig { max_iter: cfg.max_epochs, ..cfg.lm.clone() };
    let (_, trace) = lm_solve_observed(model, &eta0, &lm_cfg, |epoch, eta, f| {
        let params = MlpParams::unflatten(s1, s2, eta).expect("flattened length fixed");
        // f is the summed squared residual over all rows; the per-sample
        // channel-averaged MSE divides by m and S2.
        let train_mse = f / (model.inputs.len() as f64 * s2 as f64);
        let validation_mse = dataset_mse(&params, &val.0, &val.1);
        let test_mse = test.as_ref().map(|(xs, ys)| dataset_mse(&params, xs, ys));
        history.push(EpochRecord { epoch, train_mse, validation_mse, test_mse });

        if validation_mse < best_val {
            best_val = validation_mse;
            best_eta = eta.to_vec();
            best_epoch = epoch;
            test_at_best = test_mse;
            failures = 0;
        } else {
            failures += 1;
            if failures >= cfg.max_validation_failures {
                return StepControl::Stop;
            }
        }
        StepControl::Continue
    })?;

    Ok(RestartOutcome {
        params: MlpParams::unflatten(s1, s2, &best_eta)?,
        history,
        best_epoch,
        best_val,
        test_at_best,
        stalled: trace.termination == Termination::StalledAtNonStationary,
    })
}

/// Train on pre-assembled folds. The test fold is optional and only used
/// for history curves and the paper-faithful selection mode.
pub fn train_with_folds(
    train: &[MfeRecord],
    validation: &[MfeRecord],
    test: Option<&[MfeRecord]>,
    s1: usize,
    output: NetworkOutput,
    cfg: &TrainConfig,
) -> Result<TrainedNetwork> {
    if train.is_empty() || validation.is_empty() {
        return Err(Error::Data("training and validation folds must be nonempty".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }
    if cfg.selection == SelectionMode::TestSet && test.is_none() {
        return Err(Error::Config("test-set selection needs a test fold".into()));
    }
    let s2 = output.channels();

    let inputs: Vec<InputVector> = train.iter().map(|r| r.input).collect();
    let mut channels: Vec<Vec<f64>> = vec![Vec::with_capacity(train.len()); s2];
    for (i, r) in train.iter().enumerate() {
        let raw = output
            .extract(r)
            .ok_or_else(|| Error::Data(format!("record {i} is an empty envelope")))?;
        for (ch, v) in raw.iter().enumerate() {
            channels[ch].push(*v);
        }
    }
    let scaling = ScalingSpec::fit(&inputs, &channels);

    let (train_x, train_y) = normalized_dataset(train, &output, &scaling)?;
    let val_set = normalized_dataset(validation, &output, &scaling)?;
    let test_set = match test {
        Some(t) => Some(normalized_dataset(t, &output, &scaling)?),
        None => None,
    };
    let model = MlpResiduals { s1, s2, inputs: train_x, targets: train_y };

    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let run_seeds: Vec<u64> = (0..cfg.restarts).map(|_| seeder.gen()).collect();

    let outcomes: Vec<Result<RestartOutcome>> = run_seeds
        .par_iter()
        .map(|&s| run_restart(s1, s2, &model, &val_set, &test_set, cfg, s))
        .collect();

    let mut best: Option<(usize, RestartOutcome)> = None;
    let mut all_stalled = true;
    for (idx, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        if !o.stalled {
            all_stalled = false;
        }
        let metric = match cfg.selection {
            SelectionMode::Validation => o.best_val,
            SelectionMode::TestSet => o.test_at_best.unwrap_or(f64::INFINITY),
        };
        let better = match &best {
            Some((_, b)) => {
                let best_metric = match cfg.selection {
                    SelectionMode::Validation => b.best_val,
                    SelectionMode::TestSet => b.test_at_best.unwrap_or(f64::INFINITY),
                };
                metric < best_metric
            }
            None => true,
        };
        if better {
            best = Some((idx, o));
        }
    }
    let (restart_index, outcome) = best.expect("at least one restart ran");

    Ok(TrainedNetwork {
        params: outcome.params,
        output,
        scaling,
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        restart_index,
        seed: cfg.seed,
        all_runs_stalled: all_stalled,
    })
}

/// Train with an internal seeded validation split of `validation_fraction`.
pub fn train(
    records: &[MfeRecord],
    s1: usize,
    output: NetworkOutput,
    cfg: &TrainConfig,
) -> Result<TrainedNetwork> {
    if records.len() < 10 {
        return Err(Error::Data("too few records to carve a validation fold".into()));
    }
    let mut indices: Vec<usize> = (0..records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x76616c69646174);
    indices.shuffle(&mut rng);
    let n_val = ((records.len() as f64 * cfg.validation_fraction).round() as usize).max(1);
    let (val_idx, train_idx) = indices.split_at(n_val);
    let val: Vec<MfeRecord> = val_idx.iter().map(|&i| records[i].clone()).collect();
    let train_recs: Vec<MfeRecord> = train_idx.iter().map(|&i| records[i].clone()).collect();
    train_with_folds(&train_recs, &val, None, s1, output, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_jacobian;

    #[test]
    fn parameter_counts() {
        assert_eq!(param_count(10, 4, 1), 61);
        assert_eq!(param_count(22, 4, 2), 156);
        assert_eq!(param_count(1, 4, 1), 7);
    }

    #[test]
    fn forward_zero_network_is_zero() {
        let p = MlpParams::zeros(3, 2);
        assert_eq!(p.forward(&[1.0, -2.0, 0.5, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_constant_through_dead_hidden_layer() {
        let mut p = MlpParams::zeros(1, 1);
        p.w2[(0, 0)] = 3.0;
        p.b2[0] = 1.0;
        for z in [[0.0; 4], [1.0, 2.0, 3.0, 4.0]] {
            assert_eq!(p.forward(&z), vec![1.0]);
        }
    }

    #[test]
    fn forward_hand_checked_scalar_chain() {
        // w1 z + b1 = 0.5, output = w2 tanh(0.5) + b2.
        let mut p = MlpParams::zeros(1, 1);
        p.w1[(0, 0)] = 0.5;
        p.b1[0] = 0.0;
        p.w2[(0, 0)] = 2.0;
        p.b2[0] = -0.25;
        let y = p.forward(&[1.0, 0.0, 0.0, 0.0])[0];
        let expect = 2.0 * 0.462117157260010_f64 - 0.25;
        assert!((y - expect).abs() < 1e-12);
    }

    #[test]
    fn nguyen_widrow_row_magnitudes() {
        let p = nguyen_widrow_init(10, 1, 3);
        let want = 0.7 * 10f64.powf(0.25);
        for l in 0..10 {
            let norm: f64 = (0..INPUT_DIM).map(|k| p.w1[(l, k)] * p.w1[(l, k)]).sum::<f64>().sqrt();
            assert!((norm - want).abs() < 1e-12, "row {l}: {norm} vs {want}");
        }
    }

    #[test]
    fn nguyen_widrow_determinism_and_seed_sensitivity() {
        let a = nguyen_widrow_init(5, 2, 42);
        let b = nguyen_widrow_init(5, 2, 42);
        let c = nguyen_widrow_init(5, 2, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn nguyen_widrow_single_neuron_bias_zero() {
        let p = nguyen_widrow_init(1, 1, 7);
        assert_eq!(p.b1[0], 0.0);
    }

    #[test]
    fn flatten_round_trip() {
        let p = nguyen_widrow_init(4, 2, 9);
        let flat = p.flatten();
        assert_eq!(flat.len(), param_count(4, 4, 2));
        let q = MlpParams::unflatten(4, 2, &flat).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn jacobian_shape_single_sample_two_channels() {
        let p = nguyen_widrow_init(3, 2, 1);
        let j = marquardt_jacobian(&p, &[[0.1, 0.2, 0.3, 0.4]]);
        assert_eq!(j.rows(), 2);
        assert_eq!(j.cols(), p.param_count());
    }

    #[test]
    fn jacobian_output_weight_columns_are_negative_activations() {
        let p = nguyen_widrow_init(4, 1, 11);
        let z = [0.3, -0.5, 0.2, 0.8];
        let a1 = p.hidden(&z);
        let j = marquardt_jacobian(&p, &[z]);
        let w2_off = 4 * INPUT_DIM + 4;
        for l in 0..4 {
            assert!((j[(0, w2_off + l)] + a1[l]).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences_over_random_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for draw in 0..10 {
            let s1 = rng.gen_range(1..=8);
            let s2 = rng.gen_range(1..=2);
            let batch: Vec<[f64; INPUT_DIM]> = (0..6)
                .map(|_| {
                    [
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(-1.5..1.5),
                    ]
                })
                .collect();
            let targets: Vec<Vec<f64>> =
                (0..6).map(|_| (0..s2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let model = MlpResiduals { s1, s2, inputs: batch, targets };
            let eta: Vec<f64> = (0..param_count(s1, INPUT_DIM, s2))
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let analytic = model.jacobian(&eta).unwrap();
            let numeric = fd_jacobian(|x| model.residuals(x), &eta, 1e-6).unwrap();
            for i in 0..analytic.rows() {
                for j in 0..analytic.cols() {
                    let (a, n) = (analytic[(i, j)], numeric[(i, j)]);
                    assert!(
                        (a - n).abs() <= 1e-5 * n.abs().max(1.0),
                        "draw {draw} ({i},{j}): {a} vs {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn sgd_zero_error_leaves_parameters_unchanged() {
        let p = nguyen_widrow_init(2, 1, 5);
        let z = [0.4, -0.1, 0.7, 0.0];
        let y = p.forward(&z);
        let q = sgd_backprop_step(&p, &z, &y, 1e-3);
        assert_eq!(p, q);
    }

    #[test]
    fn sgd_step_decreases_single_sample_error() {
        let p = nguyen_widrow_init(1, 1, 6);
        let z = [0.3, 0.3, -0.3, 0.1];
        let y = [0.9];
        let err = |p: &MlpParams| {
            let o = p.forward(&z)[0];
            (y[0] - o) * (y[0] - o)
        };
        let before = err(&p);
        let after = err(&sgd_backprop_step(&p, &z, &y, 1e-3));
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn sgd_output_bias_update_is_minus_sigma_lambda2() {
        let p = nguyen_widrow_init(3, 2, 8);
        let z = [0.2, -0.6, 0.4, 0.9];
        let y = [0.5, -0.5];
        let sigma = 1e-2;
        let out = p.forward(&z);
        let q = sgd_backprop_step(&p, &z, &y, sigma);
        for eps in 0..2 {
            let lambda2 = -2.0 * (y[eps] - out[eps]);
            assert!((q.b2[eps] - (p.b2[eps] - sigma * lambda2)).abs() < 1e-15);
        }
    }

    fn synthetic_net_records(n: usize, seed: u64) -> (Vec<MfeRecord>, MlpParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = nguyen_widrow_init(3, 1, seed ^ 0xbeef);
        let inputs: Vec<InputVector> = (0..n)
            .map(|_| {
                InputVector::new(
                    rng.gen_range(0.0..30000.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-30.0..0.0),
                    rng.gen_range(0.0..30.0),
                )
                .unwrap()
            })
            .collect();
        let pre = ScalingSpec::fit(&inputs, &[vec![0.0; n]]);
        let records = inputs
            .iter()
            .map(|z| {
                let y = truth.forward(&pre.scale_input(z))[0];
                MfeRecord::new(*z, 1, y, 0.0).unwrap()
            })
            .collect();
        (records, truth)
    }

    #[test]
    fn generate_then_recover_small_network() {
        let (records, _) = synthetic_net_records(200, 17);
        let cfg = TrainConfig {
            restarts: 8,
            max_epochs: 300,
            max_validation_failures: 50,
            seed: 3,
            ..TrainConfig::default()
        };
        let net = train(&records, 3, NetworkOutput::Scalar(Target::CentroidV), &cfg).unwrap();
        let train_mse = net.normalized_mse(&records).unwrap();
        assert!(train_mse < 1e-8, "train MSE {train_mse}");
    }

    #[test]
    fn stored_params_achieve_min_validation_in_history() {
        let (records, _) = synthetic_net_records(150, 23);
        // Add noise so validation actually turns upward at some point.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let noisy: Vec<MfeRecord> = records
            .iter()
            .map(|r| {
                let t = r.targets.as_ref().unwrap();
                MfeRecord::new(r.input, 1, t.centroid_v + rng.gen_range(-0.05..0.05), 0.0).unwrap()
            })
            .collect();
        let cfg = TrainConfig { restarts: 3, max_epochs: 60, seed: 5, ..TrainConfig::default() };
        let net = train(&noisy, 4, NetworkOutput::Scalar(Target::CentroidV), &cfg).unwrap();
        let min_val = net
            .history
            .iter()
            .map(|e| e.validation_mse)
            .fold(f64::INFINITY, f64::min);
        let best = net.history.iter().find(|e| e.epoch == net.best_epoch).unwrap();
        assert!(best.validation_mse <= min_val + 1e-15);
    }

    #[test]
    fn output_channel_permutation_symmetry() {
        // Swapping the output channels together with the w2/b2 rows of the
        // starting point permutes the whole LM trajectory: the objective
        // sequence is identical and the final parameters are the permuted
        // image of each other.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let s1 = 3;
        let inputs: Vec<[f64; INPUT_DIM]> = (0..80)
            .map(|_| {
                [
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(-1.5..1.5),
                ]
            })
            .collect();
        let targets: Vec<Vec<f64>> = inputs
            .iter()
            .map(|z| vec![(z[0] + 0.2 * z[1]).tanh(), 0.5 * z[2] - 0.3 * z[3]])
            .collect();
        let swapped: Vec<Vec<f64>> = targets.iter().map(|t| vec![t[1], t[0]]).collect();

        let init = nguyen_widrow_init(s1, 2, 5);
        let mut permuted = init.clone();
        for l in 0..s1 {
            let tmp = permuted.w2[(0, l)];
            permuted.w2[(0, l)] = permuted.w2[(1, l)];
            permuted.w2[(1, l)] = tmp;
        }
        permuted.b2.swap(0, 1);

        let m1 = MlpResiduals { s1, s2: 2, inputs: inputs.clone(), targets };
        let m2 = MlpResiduals { s1, s2: 2, inputs, targets: swapped };
        let cfg = LmConfig { max_iter: 25, ..LmConfig::default() };
        let (eta1, t1) = lm_solve_observed(&m1, &init.flatten(), &cfg, |_, _, _| {
            StepControl::Continue
        })
        .unwrap();
        let (eta2, t2) = lm_solve_observed(&m2, &permuted.flatten(), &cfg, |_, _, _| {
            StepControl::Continue
        })
        .unwrap();

        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.max(1e-12));
        }
        let p1 = MlpParams::unflatten(s1, 2, &eta1).unwrap();
        let p2 = MlpParams::unflatten(s1, 2, &eta2).unwrap();
        for l in 0..s1 {
            assert!((p1.w2[(0, l)] - p2.w2[(1, l)]).abs() < 1e-7);
            assert!((p1.w2[(1, l)] - p2.w2[(0, l)]).abs() < 1e-7);
        }
    }

    #[test]
    fn forward_lipschitz_bound_spot_check() {
        let p = nguyen_widrow_init(6, 1, 37);
        // Operator-norm bound via Frobenius norms (an upper bound on the
        // product of spectral norms).
        let bound = p.w1.frobenius_norm() * p.w2.frobenius_norm();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let za = [a[0], a[1], a[2], a[3]];
            let zb = [b[0], b[1], b[2], b[3]];
            let dy = (p.forward(&za)[0] - p.forward(&zb)[0]).abs();
            let dx: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            assert!(dy <= bound * dx + 1e-12);
        }
    }

    #[test]
    fn artifact_round_trip() {
        let (records, _) = synthetic_net_records(80, 43);
        let cfg = TrainConfig { restarts: 1, max_epochs: 15, seed: 2, ..TrainConfig::default() };
        let net = train(&records, 2, NetworkOutput::Scalar(Target::CentroidV), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save_json(&path).unwrap();
        assert_eq!(TrainedNetwork::load_json(&path).unwrap(), net);
        let mut csv = Vec::new();
        net.write_history_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("epoch,train_mse"));
    }
}
