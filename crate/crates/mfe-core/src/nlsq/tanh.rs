//! The tanh basis-expansion model family: an offset plus B hyperbolic
//! tangent units, each with an amplitude and an affine form over the four
//! scaled inputs. B = 1, 2, 3 give the 7-, 13-, and 19-coefficient models.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InputVector, MfeRecord, ScalingSpec, Target};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nlsq::{lm_solve, LmConfig, ResidualModel, SolveTrace, Termination};

pub const INPUT_DIM: usize = 4;

/// Number of tanh units; the parameter count is `1 + 6B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TanhModelSpec {
    pub basis_count: usize,
}

impl TanhModelSpec {
    pub fn new(basis_count: usize) -> Result<Self> {
        if basis_count == 0 {
            return Err(Error::Invalid("tanh model needs at least one basis".into()));
        }
        Ok(Self { basis_count })
    }

    pub fn param_count(&self) -> usize {
        1 + 6 * self.basis_count
    }

    /// "f7", "f13", "f19" naming.
    pub fn name(&self) -> String {
        format!("f{}", self.param_count())
    }
}

/// Evaluate the model at a pre-scaled input.
///
/// Layout of `eta`: offset, then per basis an amplitude followed by four
/// input weights and an inner bias.
pub fn tanh_model_eval(spec: &TanhModelSpec, eta: &[f64], z_scaled: &[f64; INPUT_DIM]) -> f64 {
    debug_assert_eq!(eta.len(), spec.param_count());
    let mut acc = eta[0];
    for b in 0..spec.basis_count {
        let base = 1 + 6 * b;
        let amplitude = eta[base];
        let inner = eta[base + 1] * z_scaled[0]
            + eta[base + 2] * z_scaled[1]
            + eta[base + 3] * z_scaled[2]
            + eta[base + 4] * z_scaled[3]
            + eta[base + 5];
        acc += amplitude * inner.tanh();
    }
    acc
}

/// Residuals `y_i - f(eta, z_i)` over a normalized dataset, with the
/// analytic Jacobian.
pub struct TanhResiduals {
    pub spec: TanhModelSpec,
    pub inputs: Vec<[f64; INPUT_DIM]>,
    pub targets: Vec<f64>,
}

impl ResidualModel for TanhResiduals {
    fn param_count(&self) -> usize {
        self.spec.param_count()
    }

    fn residuals(&self, eta: &[f64]) -> Vec<f64> {
        self.inputs
            .iter()
            .zip(&self.targets)
            .map(|(z, y)| y - tanh_model_eval(&self.spec, eta, z))
            .collect()
    }

    fn jacobian(&self, eta: &[f64]) -> Option<Matrix> {
        let m = self.inputs.len();
        let p = self.param_count();
        let mut jac = Matrix::zeros(m, p);
        for (i, z) in self.inputs.iter().enumerate() {
            let row = jac.row_mut(i);
            // d e_i / d offset = -1.
            row[0] = -1.0;
            for b in 0..self.spec.basis_count {
                let base = 1 + 6 * b;
                let amplitude = eta[base];
                let inner = eta[base + 1] * z[0]
                    + eta[base + 2] * z[1]
                    + eta[base + 3] * z[2]
                    + eta[base + 4] * z[3]
                    + eta[base + 5];
                let t = inner.tanh();
                let sech2 = 1.0 - t * t;
                row[base] = -t;
                for (k, zk) in z.iter().enumerate() {
                    row[base + 1 + k] = -amplitude * sech2 * zk;
                }
                row[base + 5] = -amplitude * sech2;
            }
        }
        Some(jac)
    }
}

/// A fitted tanh model with its scaling, ready for prediction and GSA use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhModel {
    pub spec: TanhModelSpec,
    pub target: Target,
    pub params: Vec<f64>,
    pub scaling: ScalingSpec,
}

impl TanhModel {
    pub fn predict(&self, input: &InputVector) -> f64 {
        let z = self.scaling.scale_input(input);
        let y = tanh_model_eval(&self.spec, &self.params, &z);
        self.scaling.denormalize_output(0, y)
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

/// Outcome of a multi-restart fit.
#[derive(Debug, Clone)]
pub struct TanhFit {
    pub model: TanhModel,
    pub trace: SolveTrace,
    /// Final squared residual norm on the training set.
    pub train_objective: f64,
    /// Normalized MSE on the held-out set the winner was selected by.
    pub eval_mse: f64,
    /// Train MSE on the normalized scale.
    pub train_mse: f64,
    /// Set when no restart met the gradient tolerance; the best stalled
    /// result is still returned.
    pub all_runs_stalled: bool,
    /// Index of the winning restart.
    pub restart_index: usize,
}

/// Draw a random start uniform in [-1, 1]. The pool size supports the
/// shared-prefix protocol: drawing the largest model's vector and truncating
/// gives every smaller model the identical leading coefficients.
pub fn random_start(spec: &TanhModelSpec, pool_basis: usize, seed: u64) -> Vec<f64> {
    let pool = pool_basis.max(spec.basis_count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let full: Vec<f64> = (0..1 + 6 * pool).map(|_| rng.gen_range(-1.0..1.0)).collect();
    full[..spec.param_count()].to_vec()
}

fn normalized_dataset(
    records: &[MfeRecord],
    target: Target,
    scaling: &ScalingSpec,
) -> Result<(Vec<[f64; INPUT_DIM]>, Vec<f64>)> {
    let mut xs = Vec::with_capacity(records.len());
    let mut ys = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let y = target
            .extract(r)
            .ok_or_else(|| Error::Data(format!("record {i} is an empty envelope")))?;
        xs.push(scaling.scale_input(&r.input));
        ys.push(scaling.normalize_output(0, y));
    }
    Ok((xs, ys))
}

/// Multi-restart fit: run LM from `restarts` seeded random starts and keep
/// the run with the lowest MSE on the held-out `eval` records.
#[allow(clippy::too_many_arguments)]
pub fn fit_tanh_family(
    train: &[MfeRecord],
    eval: &[MfeRecord],
    target: Target,
    spec: &TanhModelSpec,
    restarts: usize,
    seed: u64,
    cfg: &LmConfig,
    shared_pool_basis: Option<usize>,
) -> Result<TanhFit> {
    if train.is_empty() {
        return Err(Error::Data("tanh fit needs training records".into()));
    }
    if restarts == 0 {
        return Err(Error::Config("need at least one restart".into()));
    }
    let inputs: Vec<InputVector> = train.iter().map(|r| r.input).collect();
    let raw_y: Vec<f64> = train
        .iter()
        .enumerate()
        .map(|(i, r)| {
            target.extract(r).ok_or_else(|| Error::Data(format!("record {i} is an empty envelope")))
        })
        .collect::<Result<_>>()?;
    let scaling = ScalingSpec::fit(&inputs, std::slice::from_ref(&raw_y));

    let (train_x, train_y) = normalized_dataset(train, target, &scaling)?;
    let (eval_x, eval_y) = normalized_dataset(eval, target, &scaling)?;
    let model = TanhResiduals { spec: *spec, inputs: train_x, targets: train_y };
    let pool = shared_pool_basis.unwrap_or(spec.basis_count);

    // Per-restart seeds are derived up front so concurrent execution cannot
    // perturb the draw order.
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let run_seeds: Vec<u64> = (0..restarts).map(|_| seeder.gen()).collect();

    let runs: Vec<Result<(Vec<f64>, SolveTrace)>> = run_seeds
        .par_iter()
        .map(|&s| {
            let eta0 = random_start(spec, pool, s);
            lm_solve(&model, &eta0, cfg)
        })
        .collect();

    let mut best: Option<(usize, Vec<f64>, SolveTrace, f64)> = None;
    let mut any_converged = false;
    for (idx, run) in runs.into_iter().enumerate() {
        let (eta, trace) = run?;
        if trace.termination != Termination::StalledAtNonStationary {
            any_converged = true;
        }
        let eval_mse = if eval_x.is_empty() {
            trace.objective / model.targets.len() as f64
        } else {
            let sse: f64 = eval_x
                .iter()
                .zip(&eval_y)
                .map(|(z, y)| {
                    let d = y - tanh_model_eval(spec, &eta, z);
                    d * d
                })
                .sum();
            sse / eval_x.len() as f64
        };
        let better = match &best {
            Some((_, _, _, best_mse)) => eval_mse < *best_mse,
            None => true,
        };
        if better {
            best = Some((idx, eta, trace, eval_mse));
        }
    }

    let (restart_index, params, trace, eval_mse) = best.expect("at least one restart ran");
    let train_mse = trace.objective / model.targets.len() as f64;
    Ok(TanhFit {
        model: TanhModel { spec: *spec, target, params, scaling },
        train_objective: trace.objective,
        train_mse,
        eval_mse,
        all_runs_stalled: !any_converged,
        restart_index,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fd_jacobian;

    #[test]
    fn zero_parameters_give_zero() {
        let spec = TanhModelSpec::new(1).unwrap();
        let eta = vec![0.0; spec.param_count()];
        assert_eq!(tanh_model_eval(&spec, &eta, &[0.3, -0.5, 0.1, 0.9]), 0.0);
    }

    #[test]
    fn zero_inner_form_gives_constant() {
        let spec = TanhModelSpec::new(1).unwrap();
        // offset 1, amplitude 2, all inner coefficients zero: tanh(0) = 0.
        let eta = vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        for z in [[0.0; 4], [1.0, -2.0, 3.0, -4.0], [5.0; 4]] {
            assert_eq!(tanh_model_eval(&spec, &eta, &z), 1.0);
        }
    }

    #[test]
    fn saturated_unit_respects_amplitude_bound() {
        let spec = TanhModelSpec::new(1).unwrap();
        let eta = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1e6];
        for z in [[0.0; 4], [1.0, 1.0, 1.0, 1.0], [-3.0, 2.0, 0.5, -0.5]] {
            let y = tanh_model_eval(&spec, &eta, &z);
            assert!(y.abs() <= 1.0 + 1e-12);
            assert!((y - 1.0).abs() < 1e-9, "saturates to +1");
        }
    }

    #[test]
    fn output_bounded_by_amplitude_sum() {
        let spec = TanhModelSpec::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let eta: Vec<f64> = (0..spec.param_count()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let z = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let amp_sum: f64 = (0..3).map(|b| eta[1 + 6 * b].abs()).sum();
            let y = tanh_model_eval(&spec, &eta, &z);
            assert!((y - eta[0]).abs() <= amp_sum + 1e-12);
        }
    }

    #[test]
    fn analytic_jacobian_matches_finite_differences() {
        let spec = TanhModelSpec::new(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = TanhResiduals {
            spec,
            inputs: (0..20)
                .map(|_| {
                    [
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    ]
                })
                .collect(),
            targets: (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        for _ in 0..10 {
            let eta: Vec<f64> = (0..spec.param_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let analytic = model.jacobian(&eta).unwrap();
            let numeric = fd_jacobian(|x| model.residuals(x), &eta, 1e-6).unwrap();
            for i in 0..analytic.rows() {
                for j in 0..analytic.cols() {
                    let (a, n) = (analytic[(i, j)], numeric[(i, j)]);
                    assert!(
                        (a - n).abs() <= 1e-5 * n.abs().max(1.0),
                        "({i},{j}): {a} vs {n}"
                    );
                }
            }
        }
    }

    #[test]
    fn shared_prefix_initialization() {
        let small = TanhModelSpec::new(1).unwrap();
        let large = TanhModelSpec::new(3).unwrap();
        let a = random_start(&small, 3, 42);
        let b = random_start(&large, 3, 42);
        assert_eq!(a.len(), 7);
        assert_eq!(b.len(), 19);
        assert_eq!(&a[..], &b[..7], "excess parameters omitted, prefix shared");
    }

    #[test]
    fn generate_then_recover_f7() {
        let spec = TanhModelSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth: Vec<f64> = vec![0.3, 0.8, 0.6, -0.4, 0.5, -0.7, 0.2];
        let records: Vec<MfeRecord> = (0..150)
            .map(|_| {
                let z = InputVector::new(
                    rng.gen_range(0.0..30000.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-30.0..0.0),
                    rng.gen_range(0.0..30.0),
                )
                .unwrap();
                MfeRecord::new(z, 1, 0.0, 0.0).unwrap()
            })
            .collect();
        // Bake targets through the same scaling the fit will derive; input
        // weights depend only on inputs, and the normalized target range
        // stays within the affine family the offset/amplitude absorb.
        let inputs: Vec<InputVector> = records.iter().map(|r| r.input).collect();
        let pre = ScalingSpec::fit(&inputs, &[vec![0.0; records.len()]]);
        let records: Vec<MfeRecord> = records
            .into_iter()
            .map(|r| {
                let z = pre.scale_input(&r.input);
                let y = tanh_model_eval(&spec, &truth, &z);
                MfeRecord::new(r.input, 1, y, 0.0).unwrap()
            })
            .collect();

        let fit = fit_tanh_family(
            &records,
            &records,
            Target::CentroidV,
            &spec,
            15,
            2024,
            &LmConfig::default(),
            None,
        )
        .unwrap();
        assert!(fit.train_objective < 1e-10, "best F* = {}", fit.train_objective);
    }

    #[test]
    fn single_restart_fixed_seed_is_deterministic() {
        let spec = TanhModelSpec::new(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<MfeRecord> = (0..60)
            .map(|_| {
                let z = InputVector::new(
                    rng.gen_range(0.0..30000.0),
                    rng.gen_range(-5.0..5.0),
                    -10.0,
                    10.0,
                )
                .unwrap();
                MfeRecord::new(z, 1, (z.h / 30000.0).tanh() + 0.1 * z.gamma, 0.0).unwrap()
            })
            .collect();
        let run = || {
            fit_tanh_family(
                &records,
                &records,
                Target::CentroidV,
                &spec,
                1,
                7,
                &LmConfig::default(),
                None,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.eval_mse, b.eval_mse);
    }

    #[test]
    fn model_artifact_round_trips() {
        let spec = TanhModelSpec::new(2).unwrap();
        let model = TanhModel {
            spec,
            target: Target::NTrim,
            params: (0..13).map(|i| (i as f64 * 0.37).sin()).collect(),
            scaling: ScalingSpec::unit(1),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tanh.json");
        model.save_json(&path).unwrap();
        assert_eq!(TanhModel::load_json(&path).unwrap(), model);
    }
}
