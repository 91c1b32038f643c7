//! Token-passing projected noisy SGD with straggler skipping.
//!
//! At every hop the visited node draws a computation time `T`. If it finishes
//! within the timeout it updates the token with
//! `theta <- Pi_W(theta - eta (grad + N))`, `eta = zeta / sqrt(c)`,
//! `N ~ N(0, sigma^2 I)`, where `c` counts updates starting at 1; otherwise the
//! token moves on unchanged after waiting `t_skip`.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::latency::{LatencyModel, SkipPolicy, Timeout};
use crate::schedule::{build_plan, RingTopology, VisitPlan};

/// Euclidean ball of radius `d_W / 2` centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionDomain {
    radius: f64,
}

impl ProjectionDomain {
    pub fn with_diameter(d_w: f64) -> Result<Self> {
        if !(d_w > 0.0 && d_w.is_finite()) {
            return Err(Error::InvalidInput(format!("diameter must be positive, got {d_w}")));
        }
        Ok(ProjectionDomain { radius: d_w / 2.0 })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn project_in_place(&self, v: &mut [f64]) {
        let norm = l2_norm(v);
        if norm > self.radius {
            let scale = self.radius / norm;
            v.iter_mut().for_each(|x| *x *= scale);
            // rounding can leave the result a few ulps outside the ball
            while l2_norm(v) > self.radius {
                v.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
            }
        }
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projection of `v` onto `domain`.
pub fn project(domain: &ProjectionDomain, v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    domain.project_in_place(&mut out);
    out
}

/// `1 / (1 + e^-z)` without overflow.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^-m)` without overflow.
fn log1p_exp_neg(m: f64) -> f64 {
    if m >= 0.0 {
        (-m).exp().ln_1p()
    } else {
        -m + m.exp().ln_1p()
    }
}

/// Mean logistic loss `1/|B| sum ln(1 + exp(-y theta.x))` over `rows`.
pub fn logistic_loss(theta: &[f64], data: &Dataset, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let total: f64 = rows
        .iter()
        .map(|&i| log1p_exp_neg(data.label(i) * dot(theta, data.row(i))))
        .sum();
    Ok(total / rows.len() as f64)
}

/// Gradient of [`logistic_loss`]: `-1/|B| sum y x sigmoid(-y theta.x)`.
pub fn logistic_gradient(theta: &[f64], data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; theta.len()];
    logistic_gradient_into(theta, data, rows, &mut grad)?;
    Ok(grad)
}

fn logistic_gradient_into(theta: &[f64], data: &Dataset, rows: &[usize], grad: &mut [f64]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for &i in rows {
        let x = data.row(i);
        let y = data.label(i);
        let w = -y * sigmoid(-y * dot(theta, x));
        grad.iter_mut().zip(x).for_each(|(g, xj)| *g += w * xj);
    }
    let scale = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    LogisticRegression,
}

/// Differentiable local loss with Lipschitz constant `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossModel {
    pub kind: LossKind,
    pub lipschitz: f64,
}

impl LossModel {
    /// Logistic loss on unit-norm features is 1-Lipschitz.
    pub fn logistic() -> Self {
        LossModel {
            kind: LossKind::LogisticRegression,
            lipschitz: 1.0,
        }
    }

    pub fn loss(&self, theta: &[f64], data: &Dataset, rows: &[usize]) -> Result<f64> {
        match self.kind {
            LossKind::LogisticRegression => logistic_loss(theta, data, rows),
        }
    }

    pub fn gradient_into(&self, theta: &[f64], data: &Dataset, rows: &[usize], grad: &mut [f64]) -> Result<()> {
        match self.kind {
            LossKind::LogisticRegression => logistic_gradient_into(theta, data, rows, grad),
        }
    }
}

/// Fraction of `rows` whose label disagrees with `sign(theta.x)`, counting
/// `theta.x = 0` as `+1`.
pub fn classification_error(theta: &[f64], data: &Dataset, rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let wrong = rows
        .iter()
        .filter(|&&i| {
            let pred = if dot(theta, data.row(i)) >= 0.0 { 1.0 } else { -1.0 };
            pred != data.label(i)
        })
        .count();
    wrong as f64 / rows.len() as f64
}

/// The model vector passed around the ring with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub theta: Vec<f64>,
    /// Updates applied so far.
    pub updates: u64,
    pub hops: u64,
    pub cumulative_latency: f64,
}

impl Token {
    pub fn zeros(d: usize) -> Self {
        Token {
            theta: vec![0.0; d],
            updates: 0,
            hops: 0,
            cumulative_latency: 0.0,
        }
    }

    /// Step size of the next update, `zeta / sqrt(updates + 1)`.
    pub fn learning_rate(&self, zeta: f64) -> f64 {
        zeta / ((self.updates + 1) as f64).sqrt()
    }
}

/// Scratch space reused across updates.
#[derive(Debug, Clone, Default)]
pub struct StepBuffers {
    grad: Vec<f64>,
}

/// One non-straggler update of `token` with the gradient on `rows`.
/// Returns the norm of the (noise-free) gradient.
#[allow(clippy::too_many_arguments)]
pub fn token_step<R: Rng + ?Sized>(
    token: &mut Token,
    data: &Dataset,
    rows: &[usize],
    loss: &LossModel,
    domain: &ProjectionDomain,
    sigma: f64,
    zeta: f64,
    noise_rng: &mut R,
    buffers: &mut StepBuffers,
) -> Result<f64> {
    let d = token.theta.len();
    buffers.grad.resize(d, 0.0);
    loss.gradient_into(&token.theta, data, rows, &mut buffers.grad)?;
    let grad_norm = l2_norm(&buffers.grad);
    let eta = token.learning_rate(zeta);
    for (t, g) in token.theta.iter_mut().zip(&buffers.grad) {
        let z: f64 = StandardNormal.sample(noise_rng);
        *t -= eta * (g + sigma * z);
    }
    domain.project_in_place(&mut token.theta);
    token.updates += 1;
    Ok(grad_norm)
}

/// Independent random streams derived from one master seed. Latency draws,
/// noise draws and schedule/batch draws never share state, so changing one
/// knob does not perturb the other realizations.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub latency: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub shuffle: ChaCha8Rng,
}

impl RunStreams {
    pub fn from_seed(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        RunStreams {
            latency: stream(0),
            noise: stream(1),
            shuffle: stream(2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: u64,
    pub updates: u64,
    pub cumulative_latency_s: f64,
    /// Present every `eval_every` hops and at the last hop.
    pub test_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub hops: Vec<HopRecord>,
    pub final_theta: Vec<f64>,
    pub max_theta_norm: f64,
    pub max_gradient_norm: f64,
}

impl RunRecord {
    pub fn updates(&self) -> u64 {
        self.hops.last().map_or(0, |h| h.updates)
    }

    pub fn total_latency(&self) -> f64 {
        self.hops.last().map_or(0.0, |h| h.cumulative_latency_s)
    }

    pub fn final_test_error(&self) -> Option<f64> {
        self.hops.iter().rev().find_map(|h| h.test_error)
    }

    /// Cumulative latency at the first evaluation with test error at most
    /// `target`.
    pub fn latency_to_error(&self, target: f64) -> Option<f64> {
        self.hops
            .iter()
            .find(|h| h.test_error.is_some_and(|e| e <= target))
            .map(|h| h.cumulative_latency_s)
    }

    /// Writes the time series as CSV below a single `#` comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, comment: &str) -> Result<()> {
        writeln!(out, "# {}", comment.replace('\n', " "))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["hop", "updates", "cumulative_latency_s", "test_error"])?;
        for h in &self.hops {
            w.write_record([
                h.hop.to_string(),
                h.updates.to_string(),
                h.cumulative_latency_s.to_string(),
                h.test_error.map(|e| e.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a single training run needs besides its seed.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub topology: RingTopology,
    pub h_max: usize,
    pub data: &'a Dataset,
    /// Training rows held by each node.
    pub partitions: &'a [Vec<usize>],
    /// Rows used for the test error.
    pub test_rows: &'a [usize],
    pub loss: LossModel,
    pub domain: ProjectionDomain,
    pub model: LatencyModel,
    pub policy: SkipPolicy,
    pub sigma: f64,
    pub zeta: f64,
    pub batch_size: usize,
    /// Test error is evaluated every this many hops.
    pub eval_every: usize,
}

impl Simulation<'_> {
    fn validate(&self, plan: &VisitPlan) -> Result<()> {
        if self.partitions.len() != plan.n() {
            return Err(Error::InvalidInput(format!(
                "{} partitions for a ring of {} nodes",
                self.partitions.len(),
                plan.n()
            )));
        }
        if let Some(v) = self.partitions.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("node {v} holds no training rows")));
        }
        if self
            .partitions
            .iter()
            .flatten()
            .chain(self.test_rows)
            .any(|&i| i >= self.data.len())
        {
            return Err(Error::InvalidInput("row index beyond the dataset".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidInput("batch size and evaluation interval must be positive".into()));
        }
        if !(self.sigma >= 0.0) || !(self.zeta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need sigma >= 0 and zeta > 0 (got {}, {})",
                self.sigma, self.zeta
            )));
        }
        Ok(())
    }

    /// Runs with a node path drawn from the seed's shuffle stream.
    pub fn run(&self, seed: u64) -> Result<RunRecord> {
        let mut streams = RunStreams::from_seed(seed);
        let plan = build_plan(&self.topology, self.h_max, &mut streams.shuffle)?;
        self.run_plan(&plan, seed, streams)
    }

    /// Runs along a given node path. Per hop the latency stream is drawn
    /// first; on an update the shuffle stream then picks the mini-batch and
    /// the noise stream supplies `d` normals.
    pub fn run_plan(&self, plan: &VisitPlan, seed: u64, mut streams: RunStreams) -> Result<RunRecord> {
        self.validate(plan)?;
        let sampler = self.model.sampler();
        let timeout = self.policy.t_skip();
        let chi = self.policy.chi();
        let skip_cost = match timeout {
            Timeout::Finite(t) => chi + t,
            Timeout::Infinite => f64::INFINITY,
        };

        let mut token = Token::zeros(self.data.dim());
        let mut buffers = StepBuffers::default();
        let mut batch = Vec::with_capacity(self.batch_size);
        let mut hops = Vec::with_capacity(plan.h_max() + 1);
        let mut max_theta_norm: f64 = 0.0;
        let mut max_gradient_norm: f64 = 0.0;
        hops.push(HopRecord {
            hop: 0,
            updates: 0,
            cumulative_latency_s: 0.0,
            test_error: Some(classification_error(&token.theta, self.data, self.test_rows)),
        });

        for (h, &node) in plan.nodes().iter().enumerate() {
            let t: f64 = sampler.sample(&mut streams.latency);
            if timeout.admits(t) {
                let rows = &self.partitions[node];
                batch.clear();
                let m = self.batch_size.min(rows.len());
                batch.extend(index::sample(&mut streams.shuffle, rows.len(), m).iter().map(|j| rows[j]));
                let g = token_step(
                    &mut token,
                    self.data,
                    &batch,
                    &self.loss,
                    &self.domain,
                    self.sigma,
                    self.zeta,
                    &mut streams.noise,
                    &mut buffers,
                )?;
                debug_assert!(g <= self.loss.lipschitz + 1e-9, "gradient norm {g} exceeds k");
                max_gradient_norm = max_gradient_norm.max(g);
                token.cumulative_latency += chi + t;
            } else {
                token.cumulative_latency += skip_cost;
            }
            token.hops += 1;
            max_theta_norm = max_theta_norm.max(l2_norm(&token.theta));
            let hop = h + 1;
            let evaluate = hop % self.eval_every == 0 || hop == plan.h_max();
            hops.push(HopRecord {
                hop: hop as u64,
                updates: token.updates,
                cumulative_latency_s: token.cumulative_latency,
                test_error: evaluate.then(|| classification_error(&token.theta, self.data, self.test_rows)),
            });
        }

        Ok(RunRecord {
            seed,
            hops,
            final_theta: token.theta,
            max_theta_norm,
            max_gradient_norm,
        })
    }
}
