//! Node-visit schedules and the mixing analysis of the fixed ring.
//!
//! Nodes are numbered `0..n` internally. On the fixed ring the token visits
//! `0, 1, .., n-1, 0, 1, ..`; on the randomized ring every round of `n` hops
//! is an independent uniformly random permutation of the nodes.
//!
//! When nodes are skipped on the fixed ring, the sequence of *updating*
//! nodes is a Markov chain whose transition matrix is circulant; its second
//! largest eigenvalue modulus controls how fast the chain forgets its start.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Fixed logical ring.
    SkipRing,
    /// Fresh random permutation of the nodes in every round.
    SkipRandRing,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::SkipRing => "skip-ring",
            Scheme::SkipRandRing => "skip-rand-ring",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RingTopology {
    n: usize,
    scheme: Scheme,
}

impl RingTopology {
    pub fn new(n: usize, scheme: Scheme) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("ring topology", format!("need at least 2 nodes, got {n}")));
        }
        Ok(RingTopology { n, scheme })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Mixing constant of the schedule at skip probability `p`.
    pub fn lambda1(&self, p: f64) -> Result<f64> {
        lambda1(self.n, p, self.scheme)
    }
}

/// The full node path of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitPlan {
    n: usize,
    nodes: Vec<usize>,
}

impl VisitPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h_max(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Node visited at (0-based) hop `h`.
    pub fn node(&self, h: usize) -> usize {
        self.nodes[h]
    }

    pub fn rounds(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.chunks(self.n)
    }
}

/// Builds the node path for `h_max` hops. The randomized ring draws one
/// Fisher–Yates shuffle per round from `rng`; the fixed ring ignores it.
pub fn build_plan<R: Rng + ?Sized>(
    topology: &RingTopology,
    h_max: usize,
    rng: &mut R,
) -> Result<VisitPlan> {
    let n = topology.n;
    if h_max == 0 || h_max % n != 0 {
        return Err(Error::InvalidInput(format!(
            "h_max ({h_max}) must be a positive multiple of the node count ({n})"
        )));
    }
    let mut nodes = Vec::with_capacity(h_max);
    let mut round: Vec<usize> = (0..n).collect();
    for _ in 0..h_max / n {
        if topology.scheme == Scheme::SkipRandRing {
            round.sort_unstable();
            round.shuffle(rng);
        }
        nodes.extend_from_slice(&round);
    }
    Ok(VisitPlan { n, nodes })
}

fn check_open_unit(op: &'static str, p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(op, format!("p must be in (0, 1), got {p}")));
    }
    Ok(())
}

/// Transition matrix of the updating-node chain on the fixed ring:
/// `Q[i][j] = (1-p)/(1-p^n) * p^((j-i-1) mod n)`.
pub fn transition_matrix(n: usize, p: f64) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(Error::domain("transition_matrix", format!("need n >= 2, got {n}")));
    }
    check_open_unit("transition_matrix", p)?;
    let row = transition_row(n, p);
    Ok((0..n)
        .map(|i| (0..n).map(|j| row[(j + n - i) % n]).collect())
        .collect())
}

/// First row of the (circulant) transition matrix.
fn transition_row(n: usize, p: f64) -> Vec<f64> {
    // 1 - p^n via expm1 stays accurate as p -> 1
    let norm = (1.0 - p) / -((n as f64) * p.ln()).exp_m1();
    (0..n)
        .map(|j| norm * p.powi(((j + n - 1) % n) as i32))
        .collect()
}

/// Eigenvalue moduli of a circulant matrix, via a direct DFT of its first
/// row: `lambda_j = sum_k c_k exp(2 pi i j k / n)`.
pub fn circulant_eigen_moduli(first_row: &[f64]) -> Vec<f64> {
    let n = first_row.len();
    (0..n)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &c) in first_row.iter().enumerate() {
                let angle = 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                re += c * angle.cos();
                im += c * angle.sin();
            }
            re.hypot(im)
        })
        .collect()
}

/// Eigenvalue moduli of the fixed-ring transition matrix, computed from the
/// circulant structure.
pub fn transition_eigen_moduli(n: usize, p: f64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::domain("transition_eigen_moduli", format!("need n >= 2, got {n}")));
    }
    check_open_unit("transition_eigen_moduli", p)?;
    Ok(circulant_eigen_moduli(&transition_row(n, p)))
}

/// Closed-form modulus of the `j`-th eigenvalue of `Q`:
/// `(1-p) / sqrt(1 + p^2 - 2 p cos(2 pi j / n))`.
pub fn eigen_modulus(n: usize, p: f64, j: usize) -> f64 {
    let c = (2.0 * PI * j as f64 / n as f64).cos();
    (1.0 - p) / ((1.0 + p * p) - 2.0 * p * c).sqrt()
}

/// Second-largest eigenvalue modulus `|lambda_1|` of the updating-node chain.
/// Defined as 0 for the randomized ring.
pub fn lambda1(n: usize, p: f64, scheme: Scheme) -> Result<f64> {
    if n < 2 {
        return Err(Error::domain("lambda1", format!("need n >= 2, got {n}")));
    }
    match scheme {
        Scheme::SkipRandRing => {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::domain("lambda1", format!("p must be in [0, 1), got {p}")));
            }
            Ok(0.0)
        }
        Scheme::SkipRing => {
            check_open_unit("lambda1", p)?;
            Ok(eigen_modulus(n, p, 1))
        }
    }
}

/// Upper bound `sqrt(n) |lambda_1|^h` on the l1 distance between the
/// fixed-ring chain after `h` steps and the uniform distribution.
pub fn mixing_bound(n: usize, p: f64, h: u32) -> Result<f64> {
    let l = lambda1(n, p, Scheme::SkipRing)?;
    Ok((n as f64).sqrt() * l.powi(h as i32))
}

/// Exact distribution of the updating node after `h` chain steps, started
/// at `start`. Propagates a probability vector rather than forming `Q^h`.
pub fn distribution_after(n: usize, p: f64, start: usize, h: usize) -> Result<Vec<f64>> {
    let row = {
        check_open_unit("distribution_after", p)?;
        if n < 2 || start >= n {
            return Err(Error::domain("distribution_after", format!("bad n={n} or start={start}")));
        }
        transition_row(n, p)
    };
    let mut pi = vec![0.0; n];
    pi[start] = 1.0;
    let mut next = vec![0.0; n];
    for _ in 0..h {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (k, &q) in row.iter().enumerate() {
                next[(i + k) % n] += mass * q;
            }
        }
        std::mem::swap(&mut pi, &mut next);
    }
    Ok(pi)
}

/// `||pi - uniform||_1`.
pub fn l1_to_uniform(pi: &[f64]) -> f64 {
    let u = 1.0 / pi.len() as f64;
    pi.iter().map(|&x| (x - u).abs()).sum()
}
