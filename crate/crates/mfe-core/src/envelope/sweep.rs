//! Grid sweep of one 2D envelope in the (airspeed, turn-rate) plane.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::envelope::trim::{default_start, solve_trim, TrimOutcome, TrimPoint, TrimSolverConfig};
use crate::envelope::{ControlVector, DynamicsModel, FailureCase, StateVector, TrimProblem};
use crate::error::Result;

/// Node spacing of the (V, psidot) grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub v_min: f64,
    pub v_max: f64,
    pub v_step: f64,
    pub psidot_min: f64,
    pub psidot_max: f64,
    pub psidot_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        // One-knot and 0.2 deg/s increments over the surrogate's envelope
        // extent; the psidot range is configuration, not physics.
        Self {
            v_min: 75.0,
            v_max: 245.0,
            v_step: 1.0,
            psidot_min: -6.0,
            psidot_max: 6.0,
            psidot_step: 0.2,
        }
    }
}

impl GridSpec {
    /// Coarse grid for fast sweeps (5-knot, 1 deg/s increments).
    pub fn coarse() -> Self {
        Self { v_step: 5.0, psidot_step: 1.0, ..Self::default() }
    }

    fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        assert!(step > 0.0 && max >= min, "bad grid axis");
        let n = ((max - min) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| min + i as f64 * step).collect()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        Self::axis(self.v_min, self.v_max, self.v_step)
    }

    pub fn psidot_nodes(&self) -> Vec<f64> {
        Self::axis(self.psidot_min, self.psidot_max, self.psidot_step)
    }

    pub fn node_count(&self) -> usize {
        self.v_nodes().len() * self.psidot_nodes().len()
    }

    pub fn label(&self) -> String {
        format!(
            "V[{},{}]x{} psidot[{},{}]x{}",
            self.v_min, self.v_max, self.v_step, self.psidot_min, self.psidot_max, self.psidot_step
        )
    }
}

/// One accepted grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedNode {
    /// Target airspeed of the node, knot.
    pub v: f64,
    /// Target turn rate of the node, deg/s.
    pub psidot: f64,
    pub point: TrimPoint,
}

/// A swept 2D envelope at fixed altitude, flight path angle, and failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mfe2d {
    pub h: f64,
    pub gamma: f64,
    pub failure: FailureCase,
    pub grid: GridSpec,
    pub nodes: Vec<AcceptedNode>,
    pub n_trim: usize,
    /// Mean (V, psidot) of the accepted nodes; None for an empty envelope.
    pub centroid: Option<(f64, f64)>,
}

impl Mfe2d {
    pub fn is_empty(&self) -> bool {
        self.n_trim == 0
    }
}

type Seed = (StateVector, ControlVector);

/// Sweep every node, warm-starting each solve from the nearest previously
/// accepted neighbor: rows run outward in V from the grid center, and each
/// row runs outward in turn rate from zero.
pub fn sweep_mfe2d<M: DynamicsModel + ?Sized>(
    h: f64,
    gamma: f64,
    failure: FailureCase,
    model: &M,
    grid: &GridSpec,
    cfg: &TrimSolverConfig,
) -> Result<Mfe2d> {
    let v_nodes = grid.v_nodes();
    let psidot_nodes = grid.psidot_nodes();

    let v_center = 0.5 * (grid.v_min + grid.v_max);
    let center_idx = v_nodes
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| (*a - v_center).abs().total_cmp(&(*b - v_center).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut row_order: Vec<usize> = (center_idx..v_nodes.len()).collect();
    row_order.extend((0..center_idx).rev());

    // Turn-rate arms: outward from zero, non-negative then negative.
    let mut arm_pos: Vec<f64> = psidot_nodes.iter().copied().filter(|&p| p >= 0.0).collect();
    arm_pos.sort_by(f64::total_cmp);
    let mut arm_neg: Vec<f64> = psidot_nodes.iter().copied().filter(|&p| p < 0.0).collect();
    arm_neg.sort_by(|a, b| b.total_cmp(a));

    let mut nodes = Vec::new();
    let mut seed_above: Option<Seed> = None; // carried upward in V
    let mut seed_below: Option<Seed> = None; // carried downward in V

    for &vi in &row_order {
        let v = v_nodes[vi];
        let row_seed = if vi >= center_idx { seed_above } else { seed_below };
        let mut row_first: Option<Seed> = None;

        for arm in [&arm_pos, &arm_neg] {
            let mut prev: Option<Seed> = row_first.or(row_seed);
            for &psidot in arm {
                let problem = TrimProblem::new(h, v, gamma, psidot, failure)?;
                let start = prev.unwrap_or_else(|| default_start(&problem));
                let outcome = solve_trim(&problem, model, start, cfg)?;
                if let TrimOutcome::Accepted(point) = outcome {
                    prev = Some((point.state, point.control));
                    if row_first.is_none() {
                        row_first = prev;
                    }
                    if point.classification.accepted() {
                        nodes.push(AcceptedNode { v, psidot, point: *point });
                    }
                } else if prev.is_some() {
                    // One retry from a cold start before giving up the node.
                    let problem2 = TrimProblem::new(h, v, gamma, psidot, failure)?;
                    if let TrimOutcome::Accepted(point) =
                        solve_trim(&problem2, model, default_start(&problem2), cfg)?
                    {
                        prev = Some((point.state, point.control));
                        if row_first.is_none() {
                            row_first = prev;
                        }
                        if point.classification.accepted() {
                            nodes.push(AcceptedNode { v, psidot, point: *point });
                        }
                    }
                }
            }
        }

        if vi >= center_idx {
            seed_above = row_first.or(seed_above);
            if vi == center_idx {
                seed_below = row_first;
            }
        } else {
            seed_below = row_first.or(seed_below);
        }
    }

    nodes.sort_by(|a, b| a.v.total_cmp(&b.v).then(a.psidot.total_cmp(&b.psidot)));
    let n_trim = nodes.len();
    let centroid = if n_trim > 0 {
        let (sv, sp) = nodes
            .iter()
            .fold((0.0, 0.0), |(sv, sp), n| (sv + n.v, sp + n.psidot));
        Some((sv / n_trim as f64, sp / n_trim as f64))
    } else {
        None
    };

    Ok(Mfe2d { h, gamma, failure, grid: *grid, nodes, n_trim, centroid })
}

/// Per-envelope detail rows: one line per accepted node with state,
/// control, and classification.
pub fn write_mfe_details<W: Write>(mfe: &Mfe2d, mut out: W) -> Result<()> {
    writeln!(
        out,
        "v_kt,psidot_dps,V,alpha,beta,p,q,r,phi,theta,throttle,elevator,aileron,rudder,cost,classification"
    )?;
    for n in &mfe.nodes {
        let s = &n.point.state;
        let c = &n.point.control;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            n.v,
            n.psidot,
            s.v,
            s.alpha,
            s.beta,
            s.p,
            s.q,
            s.r,
            s.phi,
            s.theta,
            c.throttle,
            c.elevator,
            c.aileron,
            c.rudder,
            n.point.cost,
            n.point.classification.label()
        )?;
    }
    Ok(())
}
