//! Implementations of the command-line verbs. Each verb has a pure part that
//! returns rows and a thin part that writes them as CSV.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use skipring::convergence::{error_bound, ConvergenceParams};
use skipring::data::{load_csv, preprocess, split, Dataset, Split};
use skipring::latency::{expected_total_latency, optimal_t_skip, LatencyModel};
use skipring::privacy::privacy_bound;
use skipring::schedule::RingTopology;
use skipring::sgd::{LossModel, ProjectionDomain, RunRecord, Simulation};

use crate::config::{Axis, RunConfig};
use crate::error::{CliError, Result};

/// Stream of the per-seed generator reserved for the train/test split; the
/// simulator itself uses streams 0 to 2.
const SPLIT_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsRow {
    pub h_max: u64,
    pub avg_latency_s: f64,
    pub error_bound: f64,
    pub epsilon_skip: f64,
}

/// Expected latency, convergence bound and privacy level at every grid point.
pub fn bounds(cfg: &RunConfig) -> Result<Vec<BoundsRow>> {
    cfg.validate()?;
    let model = cfg.latency_model()?;
    let policy = cfg.skip_policy()?;
    let sigma = cfg.sigma()?;
    cfg.bounds
        .h_grid
        .iter()
        .map(|&h| {
            let conv = ConvergenceParams::for_scheme(
                cfg.scheme,
                cfg.sgd.d_w,
                cfg.privacy.k,
                cfg.bounds.d,
                sigma,
                cfg.sgd.zeta,
                cfg.n,
                policy.p(),
                h,
            )?;
            let privacy = privacy_bound(&cfg.privacy_params(h)?)?;
            Ok(BoundsRow {
                h_max: h,
                avg_latency_s: expected_total_latency(&model, &policy, h),
                error_bound: error_bound(&conv)?,
                epsilon_skip: privacy.epsilon_skip,
            })
        })
        .collect()
}

fn provenance(command: &str, cfg: &RunConfig, seed: Option<u64>) -> String {
    let seed = seed.map_or_else(
        || format!("{:?}", cfg.seeds),
        |s| s.to_string(),
    );
    format!(
        "skipring {} command={command} seed={seed} config={}",
        env!("CARGO_PKG_VERSION"),
        cfg.to_json_line()
    )
}

/// Writes serializable rows below a single `#` provenance line.
pub fn write_rows<W: Write, T: Serialize>(mut out: W, comment: &str, rows: &[T]) -> Result<()> {
    writeln!(out, "# {comment}")?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(fs::File::create(path)?)
}

pub fn write_bounds(path: &Path, cfg: &RunConfig, rows: &[BoundsRow]) -> Result<()> {
    let file = create(path)?;
    write_rows(std::io::BufWriter::new(file), &provenance("bounds", cfg, None), rows)
}

/// The three latency models of the reference experiment.
pub fn reference_models() -> Vec<LatencyModel> {
    vec![
        LatencyModel::exponential(1.0).expect("valid"),
        LatencyModel::gamma(0.25, 1.0).expect("valid"),
        LatencyModel::pareto_ii(3.0, 2.0).expect("valid"),
    ]
}

/// Optimal timeout for each model, formatted as CSV.
pub fn optimal_tskip_report(models: &[LatencyModel], chi: f64) -> Result<String> {
    let mut out = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["model", "t_skip", "p", "objective"])?;
        for m in models {
            let opt = optimal_t_skip(m, chi)?;
            w.write_record([m.to_string(), opt.t_skip.to_string(), opt.p.to_string(), opt.objective.to_string()])?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is utf-8"))
}

/// Loads and preprocesses the configured dataset.
pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (raw, _) = load_csv(&cfg.data.path, &cfg.load_options())?;
    Ok(preprocess(&raw))
}

/// Train/test split and node partition used by the run with `seed`.
pub fn split_for_seed(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    Ok(split(data, cfg.data.train_fraction, cfg.n, &mut rng)?)
}

/// One training run: split the data with the seed's split stream, then
/// simulate with the seed's simulator streams.
pub fn train_seed(cfg: &RunConfig, data: &Dataset, seed: u64) -> Result<RunRecord> {
    let parts = split_for_seed(cfg, data, seed)?;
    let sim = Simulation {
        topology: RingTopology::new(cfg.n, cfg.scheme)?,
        h_max: cfg.h_max as usize,
        data,
        partitions: &parts.partitions,
        test_rows: &parts.test,
        loss: LossModel {
            lipschitz: cfg.privacy.k,
            ..LossModel::logistic()
        },
        domain: ProjectionDomain::with_diameter(cfg.sgd.d_w)?,
        model: cfg.latency_model()?,
        policy: cfg.skip_policy()?,
        sigma: cfg.sigma()?,
        zeta: cfg.sgd.zeta,
        batch_size: cfg.sgd.batch_size,
        eval_every: cfg.eval_every(),
    };
    Ok(sim.run(seed)?)
}

/// Runs every configured seed in parallel; results keep the seed order.
pub fn train_on(cfg: &RunConfig, data: &Dataset) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    cfg.seeds.par_iter().map(|&s| train_seed(cfg, data, s)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateRow {
    pub latency_s: f64,
    pub mean_test_error: f64,
    pub std_test_error: f64,
    pub seeds: usize,
}

/// Test error of `record` as a step function of cumulative latency: the last
/// evaluation at or before `latency`.
pub fn error_at_latency(record: &RunRecord, latency: f64) -> Option<f64> {
    record
        .hops
        .iter()
        .take_while(|h| h.cumulative_latency_s <= latency)
        .filter_map(|h| h.test_error)
        .last()
}

/// Mean and standard deviation across seeds of the test error on `buckets`
/// equally spaced latencies up to the shortest run's total latency.
pub fn aggregate(records: &[RunRecord], buckets: usize) -> Vec<AggregateRow> {
    let horizon = records
        .iter()
        .map(RunRecord::total_latency)
        .fold(f64::INFINITY, f64::min);
    if records.is_empty() || !horizon.is_finite() {
        return Vec::new();
    }
    (0..=buckets)
        .map(|b| {
            let latency = horizon * b as f64 / buckets as f64;
            let errs: Vec<f64> = records.iter().filter_map(|r| error_at_latency(r, latency)).collect();
            let k = errs.len() as f64;
            let mean = errs.iter().sum::<f64>() / k;
            let var = if errs.len() > 1 {
                errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            AggregateRow {
                latency_s: latency,
                mean_test_error: mean,
                std_test_error: var.sqrt(),
                seeds: errs.len(),
            }
        })
        .collect()
}

/// Writes one CSV per seed plus the aggregate into `dir`; returns the paths.
pub fn write_training(dir: &Path, cfg: &RunConfig, records: &[RunRecord]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for r in records {
        let path = dir.join(format!("train_seed{}.csv", r.seed));
        let file = create(&path)?;
        r.write_csv(std::io::BufWriter::new(file), &provenance("train", cfg, Some(r.seed)))?;
        paths.push(path);
    }
    let path = dir.join("train_aggregate.csv");
    let file = create(&path)?;
    write_rows(
        std::io::BufWriter::new(file),
        &provenance("train", cfg, None),
        &aggregate(records, cfg.sgd.latency_buckets),
    )?;
    paths.push(path);
    Ok(paths)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    Bounds,
    Train,
}

impl std::str::FromStr for SweepMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounds" => Ok(SweepMode::Bounds),
            "train" => Ok(SweepMode::Train),
            other => Err(CliError::Usage(format!("unknown sweep mode '{other}'; expected bounds or train"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub cell: usize,
    pub axis: String,
    pub value: f64,
    pub path: PathBuf,
}

/// Runs `mode` once per value of `axis` in parallel. Each cell writes its own
/// output; `index.csv` is written last.
pub fn sweep(cfg: &RunConfig, axis: Axis, values: &[f64], mode: SweepMode, out_dir: &Path) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(CliError::Usage("sweep needs at least one value".into()));
    }
    let cells: Vec<(usize, f64, RunConfig)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut c = cfg.clone();
            c.set_axis(axis, v)?;
            c.validate()?;
            Ok((i, v, c))
        })
        .collect::<Result<_>>()?;
    let data = match mode {
        SweepMode::Train => Some(load_dataset(cfg)?),
        SweepMode::Bounds => None,
    };
    fs::create_dir_all(out_dir)?;
    let done: Vec<SweepCell> = cells
        .par_iter()
        .map(|(i, v, c)| {
            let stem = format!("cell{i:03}_{}_{v}", axis.name());
            let path = match &data {
                None => {
                    let path = out_dir.join(format!("{stem}.csv"));
                    write_bounds(&path, c, &bounds(c)?)?;
                    path
                }
                Some(d) => {
                    let dir = out_dir.join(&stem);
                    write_training(&dir, c, &train_on(c, d)?)?;
                    dir
                }
            };
            info!("sweep cell {i} ({} = {v}) done", axis.name());
            Ok(SweepCell {
                cell: *i,
                axis: axis.name().to_owned(),
                value: *v,
                path,
            })
        })
        .collect::<Result<_>>()?;
    let index = create(&out_dir.join("index.csv"))?;
    write_rows(std::io::BufWriter::new(index), &provenance("sweep", cfg, None), &done)?;
    Ok(done)
}
