//! Database construction: the failure-by-flight-condition job grid and the
//! record extraction shared with CSV ingestion.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InputVector, MfeRecord};
use crate::envelope::sweep::{sweep_mfe2d, GridSpec, Mfe2d};
use crate::envelope::trim::TrimSolverConfig;
use crate::envelope::{enumerate_failure_cases, DynamicsModel, FailureCase};
use crate::error::Result;

/// Database altitudes, ft.
pub const ALTITUDES_FT: [f64; 4] = [0.0, 10_000.0, 20_000.0, 30_000.0];

/// Database flight path angles, deg.
pub const GAMMAS_DEG: [f64; 11] =
    [-5.0, -4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0];

/// One 2D-envelope job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub h: f64,
    pub gamma: f64,
    pub failure: FailureCase,
}

/// The full job set: every failure case crossed with the four altitudes
/// (112 3D envelopes) and the eleven flight path angles (1232 2D jobs).
pub fn enumerate_jobs() -> Vec<Job> {
    let mut jobs = Vec::new();
    for failure in enumerate_failure_cases() {
        for h in ALTITUDES_FT {
            for gamma in GAMMAS_DEG {
                jobs.push(Job { h, gamma, failure });
            }
        }
    }
    jobs
}

/// Provenance and bookkeeping of a generated database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatabaseMeta {
    pub total_jobs: usize,
    pub empty_jobs: usize,
    pub grid: GridSpec,
    pub model_fingerprint: String,
    pub runtime_seconds: f64,
}

/// Sweep every job and return one record per non-empty envelope plus
/// metadata. Jobs are independent and run concurrently; the output order
/// follows the job order, so identical inputs give identical databases.
pub fn build_database<M: DynamicsModel + ?Sized>(
    model: &M,
    jobs: &[Job],
    grid: &GridSpec,
    cfg: &TrimSolverConfig,
) -> Result<(Vec<MfeRecord>, DatabaseMeta)> {
    let started = Instant::now();
    let sweeps: Vec<Result<Mfe2d>> = jobs
        .par_iter()
        .map(|job| sweep_mfe2d(job.h, job.gamma, job.failure, model, grid, cfg))
        .collect();

    let mut records = Vec::new();
    let mut empty_jobs = 0;
    for sweep in sweeps {
        let mfe = sweep?;
        match mfe.centroid {
            Some((cv, cp)) => {
                let input = InputVector::new(mfe.h, mfe.gamma, mfe.failure.ll, mfe.failure.ul)?;
                records.push(MfeRecord::new(input, mfe.n_trim, cv, cp)?);
            }
            None => empty_jobs += 1,
        }
    }

    let meta = DatabaseMeta {
        total_jobs: jobs.len(),
        empty_jobs,
        grid: *grid,
        model_fingerprint: model.fingerprint(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((records, meta))
}

/// Parse a database CSV, validating every row.
pub fn ingest_csv(path: &Path) -> Result<Vec<MfeRecord>> {
    crate::data::read_csv_path(path)
}
