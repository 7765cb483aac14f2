//! Variance-based global sensitivity analysis.
//!
//! Latin-hypercube base samples, radial (column-substitution) sample plans,
//! first-order (Saltelli 2010) and total-order (Jansen) Sobol estimators,
//! closed second-order estimates from an extended plan, percentile-bootstrap
//! confidence intervals, and convergence sweeps over a base-sample schedule.

use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::stats;

/// One independent, uniformly distributed input factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

/// The box of independent factors an analysis varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpace {
    factors: Vec<Factor>,
}

impl FactorSpace {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Config("factor space needs at least one factor".into()));
        }
        for f in &factors {
            if !(f.lower < f.upper) {
                return Err(Error::Config(format!(
                    "factor '{}' needs lower < upper, got [{}, {}]",
                    f.name, f.lower, f.upper
                )));
            }
        }
        let mut names: Vec<String> = factors.iter().map(|f| f.name.to_lowercase()).collect();
        names.sort();
        names.dedup();
        if names.len() != factors.len() {
            return Err(Error::Config("factor names must be unique".into()));
        }
        Ok(Self { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    /// The rudder deflection limits are mutually dependent (LL <= UL), so a
    /// plan over both is rejected: fix one of them or analyze the jamming
    /// angle (LL = UL) as a single factor.
    fn check_independent(&self) -> Result<()> {
        let lower: Vec<String> = self.factors.iter().map(|f| f.name.to_lowercase()).collect();
        if lower.iter().any(|n| n == "ll") && lower.iter().any(|n| n == "ul") {
            return Err(Error::CorrelatedFactors {
                a: "ll".into(),
                b: "ul".into(),
                guidance: "deflection limits co-vary; fix one limit at a constant or use the \
                           jam parametrization (ll = ul) as a single factor"
                    .into(),
            });
        }
        Ok(())
    }
}

/// Latin-hypercube sample: per column, exactly one point in each of the N
/// equal-width strata, uniform within the stratum, strata independently
/// permuted across columns.
pub fn lhs_sample(space: &FactorSpace, n: usize, seed: u64) -> Matrix {
    assert!(n >= 2, "LHS needs at least two samples");
    let h = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(n, h);
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, f) in space.factors.iter().enumerate() {
        strata.shuffle(&mut rng);
        let width = (f.upper - f.lower) / n as f64;
        for (i, &s) in strata.iter().enumerate() {
            let u: f64 = rng.gen();
            out[(i, j)] = f.lower + (s as f64 + u) * width;
        }
    }
    out
}

/// Radial sample plan: base matrices A and B plus the column-substituted
/// blocks AB^(j) (and BA^(j) when second-order indices are requested).
#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub space: FactorSpace,
    pub n: usize,
    pub matrix_a: Matrix,
    pub matrix_b: Matrix,
    /// AB^(j): A with column j taken from B.
    pub ab: Vec<Matrix>,
    /// BA^(j): B with column j taken from A; present only for second-order
    /// plans.
    pub ba: Option<Vec<Matrix>>,
    pub seed: u64,
}

/// Model evaluations over every plan block, row-aligned with the plan.
#[derive(Debug, Clone)]
pub struct PlanEvaluations {
    pub ya: Vec<f64>,
    pub yb: Vec<f64>,
    pub yab: Vec<Vec<f64>>,
    pub yba: Option<Vec<Vec<f64>>>,
}

/// Evaluations needed by a plan of `h` factors and `n` base samples.
pub fn evaluation_count(h: usize, n: usize, second_order: bool) -> usize {
    if second_order {
        (2 + 2 * h) * n
    } else {
        (2 + h) * n
    }
}

/// Build a sample plan from two independent LHS draws.
pub fn plan_samples(
    space: &FactorSpace,
    n: usize,
    seed: u64,
    want_second_order: bool,
) -> Result<SamplePlan> {
    space.check_independent()?;
    if n < 2 {
        return Err(Error::Config("sample plan needs N >= 2".into()));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let seed_a: u64 = seeder.gen();
    let seed_b: u64 = seeder.gen();
    let matrix_a = lhs_sample(space, n, seed_a);
    let matrix_b = lhs_sample(space, n, seed_b);
    let h = space.dim();

    let substituted = |base: &Matrix, other: &Matrix, j: usize| {
        Matrix::from_fn(n, h, |i, k| if k == j { other[(i, k)] } else { base[(i, k)] })
    };
    let ab: Vec<Matrix> = (0..h).map(|j| substituted(&matrix_a, &matrix_b, j)).collect();
    let ba = want_second_order
        .then(|| (0..h).map(|j| substituted(&matrix_b, &matrix_a, j)).collect());

    Ok(SamplePlan { space: space.clone(), n, matrix_a, matrix_b, ab, ba, seed })
}

impl SamplePlan {
    pub fn evaluation_count(&self) -> usize {
        evaluation_count(self.space.dim(), self.n, self.ba.is_some())
    }

    /// Run the model over every block. Rows fan out across threads; outputs
    /// are indexed, so the result does not depend on scheduling.
    pub fn evaluate<F>(&self, model: F) -> PlanEvaluations
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        let eval_matrix = |m: &Matrix| -> Vec<f64> {
            (0..m.rows()).into_par_iter().map(|i| model(m.row(i))).collect()
        };
        PlanEvaluations {
            ya: eval_matrix(&self.matrix_a),
            yb: eval_matrix(&self.matrix_b),
            yab: self.ab.iter().map(&eval_matrix).collect(),
            yba: self.ba.as_ref().map(|blocks| blocks.iter().map(&eval_matrix).collect()),
        }
    }
}

/// Point estimates with optional bootstrap intervals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolResult {
    pub factors: Vec<String>,
    pub n: usize,
    pub estimator_first: String,
    pub estimator_total: String,
    pub s_first: Vec<f64>,
    pub s_total: Vec<f64>,
    /// Upper-triangle (j, i, S_ji) closed second-order estimates.
    pub s_second: Option<Vec<(usize, usize, f64)>>,
    pub ci_first: Option<Vec<(f64, f64)>>,
    pub ci_total: Option<Vec<(f64, f64)>>,
    pub variance: f64,
    pub seed: u64,
}

fn check_finite(vals: &[f64]) -> Result<()> {
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteEvaluation { index: i });
    }
    Ok(())
}

/// Core estimators over a row subset (identity for the point estimate,
/// resampled rows for the bootstrap).
fn estimate_on_rows(
    evals: &PlanEvaluations,
    rows: &[usize],
) -> (f64, Vec<f64>, Vec<f64>, Option<Vec<(usize, usize, f64)>>) {
    let n = rows.len() as f64;
    let h = evals.yab.len();

    let mut mean = 0.0;
    for &i in rows {
        mean += evals.ya[i] + evals.yb[i];
    }
    mean /= 2.0 * n;
    let mut variance = 0.0;
    for &i in rows {
        variance += (evals.ya[i] - mean) * (evals.ya[i] - mean)
            + (evals.yb[i] - mean) * (evals.yb[i] - mean);
    }
    variance /= 2.0 * n;

    let mut s_first = Vec::with_capacity(h);
    let mut s_total = Vec::with_capacity(h);
    for j in 0..h {
        let yab = &evals.yab[j];
        let mut vj = 0.0;
        let mut tj = 0.0;
        for &i in rows {
            vj += evals.yb[i] * (yab[i] - evals.ya[i]);
            let d = evals.ya[i] - yab[i];
            tj += d * d;
        }
        s_first.push(vj / n / variance);
        s_total.push(tj / (2.0 * n) / variance);
    }

    let s_second = evals.yba.as_ref().map(|yba| {
        // Closed second-order estimator: (1/N) sum f(BA_j) f(AB_i) - f0^2
        // estimates V_j + V_i + V_ji.
        let mut f02 = 0.0;
        for &k in rows {
            f02 += evals.ya[k] * evals.yb[k];
        }
        f02 /= n;
        let mut out = Vec::new();
        for j in 0..h {
            for i in j + 1..h {
                let mut closed = 0.0;
                for &k in rows {
                    closed += yba[j][k] * evals.yab[i][k];
                }
                closed = closed / n - f02;
                out.push((j, i, closed / variance - s_first[j] - s_first[i]));
            }
        }
        out
    });

    (variance, s_first, s_total, s_second)
}

/// First/total (and, when planned, second) Sobol indices from a plan's
/// evaluations.
pub fn estimate(plan: &SamplePlan, evals: &PlanEvaluations) -> Result<SobolResult> {
    if plan.n < 100 {
        return Err(Error::Config(format!("estimation needs N >= 100, got {}", plan.n)));
    }
    check_finite(&evals.ya)?;
    check_finite(&evals.yb)?;
    for block in &evals.yab {
        check_finite(block)?;
    }
    if let Some(yba) = &evals.yba {
        for block in yba {
            check_finite(block)?;
        }
    }

    let rows: Vec<usize> = (0..plan.n).collect();
    let (variance, s_first, s_total, s_second) = estimate_on_rows(evals, &rows);
    let mean = (stats::mean(&evals.ya) + stats::mean(&evals.yb)) / 2.0;
    if variance <= 1e-14 * mean * mean {
        return Err(Error::DegenerateVariance { variance });
    }

    Ok(SobolResult {
        factors: plan.space.names(),
        n: plan.n,
        estimator_first: "saltelli-2010".into(),
        estimator_total: "jansen".into(),
        s_first,
        s_total,
        s_second,
        ci_first: None,
        ci_total: None,
        variance,
        seed: plan.seed,
    })
}

/// Percentile-bootstrap intervals on the first/total indices: plan rows are
/// resampled jointly across all blocks to preserve the pairing.
pub fn bootstrap_ci(
    plan: &SamplePlan,
    evals: &PlanEvaluations,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(Vec<(f64, f64)>, Vec<(f64, f64)>)> {
    if resamples == 0 {
        return Err(Error::Config("bootstrap needs at least one resample".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Config("bootstrap level must be in (0, 1)".into()));
    }
    let h = plan.space.dim();
    let n = plan.n;

    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let resample_seeds: Vec<u64> = (0..resamples).map(|_| seeder.gen()).collect();
    let draws: Vec<(Vec<f64>, Vec<f64>)> = resample_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let (_, s1, st, _) = estimate_on_rows(evals, &rows);
            (s1, st)
        })
        .collect();

    let lo_q = (1.0 - level) / 2.0;
    let hi_q = 1.0 - lo_q;
    let interval = |extract: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| {
        let mut v: Vec<f64> = draws.iter().map(extract).collect();
        v.sort_by(f64::total_cmp);
        (stats::percentile(&v, lo_q), stats::percentile(&v, hi_q))
    };

    let ci_first: Vec<(f64, f64)> = (0..h).map(|j| interval(&move |d| d.0[j])).collect();
    let ci_total: Vec<(f64, f64)> = (0..h).map(|j| interval(&move |d| d.1[j])).collect();
    Ok((ci_first, ci_total))
}

/// Indices plus bootstrap intervals in one call.
pub fn analyze<F>(
    space: &FactorSpace,
    model: F,
    n: usize,
    seed: u64,
    want_second_order: bool,
    bootstrap: Option<(usize, f64)>,
) -> Result<SobolResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let plan = plan_samples(space, n, seed, want_second_order)?;
    let evals = plan.evaluate(model);
    let mut result = estimate(&plan, &evals)?;
    if let Some((b, level)) = bootstrap {
        let (ci_first, ci_total) = bootstrap_ci(&plan, &evals, b, level, seed ^ 0x626f6f74)?;
        result.ci_first = Some(ci_first);
        result.ci_total = Some(ci_total);
    }
    Ok(result)
}

/// One [`SobolResult`] per entry of an increasing base-sample schedule.
pub fn convergence_sweep<F>(
    space: &FactorSpace,
    model: F,
    schedule: &[usize],
    seed: u64,
    bootstrap: (usize, f64),
) -> Result<Vec<SobolResult>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if schedule.is_empty() {
        return Err(Error::Config("convergence sweep needs a schedule".into()));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("schedule must be strictly increasing".into()));
    }
    schedule
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            analyze(space, &model, n, seed.wrapping_add(k as u64), false, Some(bootstrap))
        })
        .collect()
}

/// Convergence series as CSV: N, factor, S, S_T, ci_lo, ci_hi (first-order
/// interval).
pub fn write_convergence_csv<W: Write>(results: &[SobolResult], mut out: W) -> Result<()> {
    writeln!(out, "N,factor,S,S_T,ci_lo,ci_hi")?;
    for r in results {
        for (j, name) in r.factors.iter().enumerate() {
            let (lo, hi) = r.ci_first.as_ref().map_or((f64::NAN, f64::NAN), |ci| ci[j]);
            writeln!(out, "{},{},{},{},{},{}", r.n, name, r.s_first[j], r.s_total[j], lo, hi)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space(h: usize) -> FactorSpace {
        FactorSpace::new(
            (0..h)
                .map(|j| Factor { name: format!("x{j}"), lower: 0.0, upper: 1.0 })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn lhs_stratification_per_column() {
        let space = unit_space(2);
        let m = lhs_sample(&space, 4, 7);
        for j in 0..2 {
            let mut seen = [false; 4];
            for i in 0..4 {
                let v = m[(i, j)];
                assert!((0.0..1.0).contains(&v));
                let stratum = (v * 4.0).floor() as usize;
                assert!(!seen[stratum], "two samples in stratum {stratum} of column {j}");
                seen[stratum] = true;
            }
        }
    }

    #[test]
    fn lhs_same_seed_identical() {
        let space = unit_space(3);
        assert_eq!(lhs_sample(&space, 16, 99), lhs_sample(&space, 16, 99));
        assert_ne!(lhs_sample(&space, 16, 99), lhs_sample(&space, 16, 100));
    }

    #[test]
    fn lhs_column_means_near_midpoint() {
        let space = FactorSpace::new(vec![
            Factor { name: "a".into(), lower: -2.0, upper: 4.0 },
            Factor { name: "b".into(), lower: 10.0, upper: 30.0 },
        ])
        .unwrap();
        let n = 10_000;
        let m = lhs_sample(&space, n, 3);
        let bound = 3.0 / (12.0 * n as f64).sqrt();
        for (j, (mid, range)) in [(1.0, 6.0), (20.0, 20.0)].iter().enumerate() {
            let mean: f64 = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
            assert!(
                ((mean - mid) / range).abs() <= bound,
                "column {j} mean {mean} vs {mid}"
            );
        }
    }

    #[test]
    fn plan_arithmetic() {
        assert_eq!(evaluation_count(3, 500_000, false), 2_500_000);
        assert_eq!(evaluation_count(3, 4_000_000, false), 20_000_000);
        assert_eq!(evaluation_count(3, 1000, true), 8000);
        let plan = plan_samples(&unit_space(3), 200, 1, true).unwrap();
        assert_eq!(plan.evaluation_count(), 8 * 200);
        let evals = plan.evaluate(|x| x[0] + x[1] + x[2]);
        let total = evals.ya.len()
            + evals.yb.len()
            + evals.yab.iter().map(Vec::len).sum::<usize>()
            + evals.yba.as_ref().map_or(0, |b| b.iter().map(Vec::len).sum());
        assert_eq!(total, plan.evaluation_count());
    }

    #[test]
    fn correlated_limits_rejected_with_guidance() {
        let space = FactorSpace::new(vec![
            Factor { name: "h".into(), lower: 0.0, upper: 30000.0 },
            Factor { name: "ll".into(), lower: -30.0, upper: 0.0 },
            Factor { name: "ul".into(), lower: 0.0, upper: 30.0 },
        ])
        .unwrap();
        match plan_samples(&space, 100, 0, false) {
            Err(Error::CorrelatedFactors { guidance, .. }) => {
                assert!(guidance.contains("jam"));
            }
            other => panic!("expected CorrelatedFactors, got {other:?}"),
        }
    }

    fn additive_result(n: usize, seed: u64, second: bool) -> SobolResult {
        let space = unit_space(3);
        let plan = plan_samples(&space, n, seed, second).unwrap();
        let evals = plan.evaluate(|x| x[0] + 2.0 * x[1] + 3.0 * x[2]);
        estimate(&plan, &evals).unwrap()
    }

    #[test]
    fn additive_model_indices() {
        // V_i = c_i^2/12, V = 14/12: S = (1/14, 4/14, 9/14).
        let r = additive_result(10_000, 42, true);
        let want = [1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0];
        for j in 0..3 {
            assert!((r.s_first[j] - want[j]).abs() <= 0.02, "S_{j} = {}", r.s_first[j]);
            assert!((r.s_total[j] - want[j]).abs() <= 0.02, "ST_{j} = {}", r.s_total[j]);
            assert!((r.s_total[j] - r.s_first[j]).abs() <= 0.02);
        }
        let sum: f64 = r.s_first.iter().sum();
        assert!((0.98..=1.02).contains(&sum), "sum {sum}");
        for (_, _, sji) in r.s_second.unwrap() {
            assert!(sji.abs() <= 0.03, "S_ji = {sji}");
        }
    }

    #[test]
    fn first_below_total_within_noise() {
        let space = unit_space(3);
        let plan = plan_samples(&space, 10_000, 5, false).unwrap();
        // Interacting model: product term couples x0 and x1.
        let evals = plan.evaluate(|x| x[0] * x[1] + 0.5 * x[2]);
        let r = estimate(&plan, &evals).unwrap();
        for j in 0..3 {
            assert!(r.s_first[j] <= r.s_total[j] + 0.02);
        }
    }

    #[test]
    fn constant_model_is_degenerate() {
        let space = unit_space(2);
        let plan = plan_samples(&space, 500, 9, false).unwrap();
        let evals = plan.evaluate(|_| 3.25);
        assert!(matches!(estimate(&plan, &evals), Err(Error::DegenerateVariance { .. })));
    }

    fn ishigami(x: &[f64]) -> f64 {
        let (a, b) = (7.0, 0.1);
        x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
    }

    /// Closed-form Ishigami indices for a = 7, b = 0.1 over [-pi, pi]^3.
    fn ishigami_exact() -> ([f64; 3], [f64; 3]) {
        let (a, b) = (7.0_f64, 0.1_f64);
        let pi = std::f64::consts::PI;
        let v1 = 0.5 * (1.0 + b * pi.powi(4) / 5.0).powi(2);
        let v2 = a * a / 8.0;
        let v13 = b * b * pi.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
        let v = v1 + v2 + v13;
        (
            [v1 / v, v2 / v, 0.0],
            [(v1 + v13) / v, v2 / v, v13 / v],
        )
    }

    #[test]
    fn ishigami_within_bootstrap_intervals() {
        let space = FactorSpace::new(
            ["x1", "x2", "x3"]
                .iter()
                .map(|n| Factor {
                    name: n.to_string(),
                    lower: -std::f64::consts::PI,
                    upper: std::f64::consts::PI,
                })
                .collect(),
        )
        .unwrap();
        let r = analyze(&space, ishigami, 20_000, 11, false, Some((400, 0.95))).unwrap();
        let (s_want, st_want) = ishigami_exact();
        let ci_first = r.ci_first.as_ref().unwrap();
        let ci_total = r.ci_total.as_ref().unwrap();
        for j in 0..3 {
            let (lo, hi) = ci_first[j];
            assert!(lo <= s_want[j] && s_want[j] <= hi, "S_{j}: {:?} vs {}", ci_first[j], s_want[j]);
            let (lo, hi) = ci_total[j];
            assert!(lo <= st_want[j] && st_want[j] <= hi, "ST_{j}: {:?} vs {}", ci_total[j], st_want[j]);
            // Intervals contain the point estimates.
            assert!(ci_first[j].0 <= r.s_first[j] && r.s_first[j] <= ci_first[j].1);
            assert!(ci_total[j].0 <= r.s_total[j] && r.s_total[j] <= ci_total[j].1);
        }
    }

    #[test]
    fn bootstrap_single_resample_degenerates_to_point() {
        let space = unit_space(2);
        let plan = plan_samples(&space, 500, 13, false).unwrap();
        let evals = plan.evaluate(|x| x[0] + 0.5 * x[1]);
        let (ci_first, _) = bootstrap_ci(&plan, &evals, 1, 0.95, 77).unwrap();
        for (lo, hi) in ci_first {
            assert_eq!(lo, hi, "a single resample has a point interval");
        }
    }

    #[test]
    fn intervals_shrink_with_n() {
        let space = unit_space(3);
        let widths = |n: usize| -> f64 {
            let plan = plan_samples(&space, n, 21, false).unwrap();
            let evals = plan.evaluate(|x| x[0] + 2.0 * x[1] + 3.0 * x[2]);
            let (ci, _) = bootstrap_ci(&plan, &evals, 300, 0.95, 5).unwrap();
            ci.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / 3.0
        };
        let (w_small, w_large) = (widths(1000), widths(100_000));
        assert!(
            w_small > w_large,
            "N = 1e3 width {w_small} must exceed N = 1e5 width {w_large}"
        );
    }

    #[test]
    fn convergence_sweep_slope_and_consistency() {
        let space = unit_space(3);
        let schedule = [500, 2000, 8000, 32_000];
        let results = convergence_sweep(
            &space,
            |x| x[0] + 2.0 * x[1] + 3.0 * x[2],
            &schedule,
            3,
            (300, 0.95),
        )
        .unwrap();
        assert_eq!(results.len(), schedule.len());

        // Mean CI width shrinks ~ 1/sqrt(N): log-log slope -0.5 +/- 0.15.
        let points: Vec<(f64, f64)> = results
            .iter()
            .map(|r| {
                let w: f64 = r
                    .ci_first
                    .as_ref()
                    .unwrap()
                    .iter()
                    .map(|(lo, hi)| hi - lo)
                    .sum::<f64>()
                    / 3.0;
                ((r.n as f64).ln(), w.ln())
            })
            .collect();
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");

        // The two largest-N estimates agree within the larger interval.
        let (last, prev) = (&results[3], &results[2]);
        for j in 0..3 {
            let (lo, hi) = prev.ci_first.as_ref().unwrap()[j];
            assert!(lo <= last.s_first[j] && last.s_first[j] <= hi);
        }

        // Single-entry schedule is a single result.
        let single =
            convergence_sweep(&space, |x| x[0] + x[1] + x[2], &[1000], 9, (100, 0.95)).unwrap();
        assert_eq!(single.len(), 1);

        let mut csv = Vec::new();
        write_convergence_csv(&results, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("N,factor,S,S_T,ci_lo,ci_hi"));
        assert_eq!(text.lines().count(), 1 + 4 * 3);
    }

    #[test]
    fn monotone_affine_rescale_leaves_indices_unchanged() {
        // Rescaling a factor's box together with the model intake is the
        // identity on the sampled physics, so indices match exactly under
        // the same seed (the LHS draw maps affinely).
        let space1 = unit_space(3);
        let space2 = FactorSpace::new(vec![
            Factor { name: "x0".into(), lower: 0.0, upper: 10.0 },
            Factor { name: "x1".into(), lower: 0.0, upper: 1.0 },
            Factor { name: "x2".into(), lower: 0.0, upper: 1.0 },
        ])
        .unwrap();
        let f1 = |x: &[f64]| x[0].powi(2) + 2.0 * x[1] * x[0] + 3.0 * x[2];
        let f2 = |x: &[f64]| {
            let x0 = x[0] / 10.0;
            x0.powi(2) + 2.0 * x[1] * x0 + 3.0 * x[2]
        };
        let plan1 = plan_samples(&space1, 4000, 17, false).unwrap();
        let plan2 = plan_samples(&space2, 4000, 17, false).unwrap();
        let r1 = estimate(&plan1, &plan1.evaluate(f1)).unwrap();
        let r2 = estimate(&plan2, &plan2.evaluate(f2)).unwrap();
        for j in 0..3 {
            assert!((r1.s_first[j] - r2.s_first[j]).abs() < 1e-12);
            assert!((r1.s_total[j] - r2.s_total[j]).abs() < 1e-12);
        }
    }
}
