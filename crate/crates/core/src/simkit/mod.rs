//! Seeded data-generating processes on rook grids and a Monte Carlo driver.
//!
//! A replicate draws `x1 ~ N(0, 1)` and `x2 ~ N(2, 1)`, forms
//! `eta = (I - rho W)⁻¹ [1 x1 x2] beta` and samples the response from the
//! family at `mu = g⁻¹(eta)`. All randomness comes from [`rng::stream_rng`],
//! so every data set is a pure function of `(seed, replicate_index)`.

pub mod rng;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{GsarError, Result};
use crate::estimator::{fit, fit_glm, FitConfig, FitData};
use crate::family::{FamilyId, FamilySpec};
use crate::spalg::SpatialOperator;
use crate::weights::{build_rook_grid, SpatialWeights};
use rng::{stream_rng, Stream};

/// Largest `|rho_true|` accepted by a scenario.
pub const SIM_RHO_MAX: f64 = 0.95;
pub const DEFAULT_BETA: [f64; 3] = [0.5, -0.5, 1.0];
pub const DEFAULT_REPLICATES: usize = 100;
/// Binomial trial counts are uniform on `1..=MAX_TRIALS`.
pub const MAX_TRIALS: u64 = 100;
/// Environment variable capping the worker threads of [`run_replicates`].
pub const THREADS_ENV: &str = "GSAR_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimScenario {
    pub family: FamilySpec,
    pub rows: usize,
    pub cols: usize,
    pub rho_true: f64,
    /// Intercept, `x1`, `x2`.
    pub beta_true: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl SimScenario {
    pub fn new(family: FamilySpec, rows: usize, cols: usize, rho_true: f64, seed: u64) -> Self {
        Self {
            family,
            rows,
            cols,
            rho_true,
            beta_true: DEFAULT_BETA.to_vec(),
            replicates: DEFAULT_REPLICATES,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.n() < 4 {
            return Err(GsarError::InvalidInput(format!(
                "grid {}x{} has fewer than 4 cells",
                self.rows, self.cols
            )));
        }
        if !(self.rho_true.abs() <= SIM_RHO_MAX) {
            return Err(GsarError::InvalidInput(format!(
                "rho {} outside the supported range [-{SIM_RHO_MAX}, {SIM_RHO_MAX}]",
                self.rho_true
            )));
        }
        if self.beta_true.len() != 3 || self.beta_true.iter().any(|b| !b.is_finite()) {
            return Err(GsarError::InvalidInput(
                "beta must hold three finite values (intercept, x1, x2)".into(),
            ));
        }
        if self.replicates == 0 {
            return Err(GsarError::InvalidInput("replicates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<SpatialWeights> {
        build_rook_grid(self.rows, self.cols)
    }
}

/// One simulated data set together with its true linear predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub data: FitData,
    pub eta: DVector<f64>,
}

/// Draws replicate `index` of `scn`, building the grid weights.
pub fn simulate_dataset(scn: &SimScenario, index: u64) -> Result<(SimDataset, SpatialWeights)> {
    scn.validate()?;
    let w = scn.weights()?;
    let ds = simulate_on(scn, &w, index)?;
    Ok((ds, w))
}

/// Draws replicate `index` of `scn` on prebuilt weights `w`.
pub fn simulate_on(scn: &SimScenario, w: &SpatialWeights, index: u64) -> Result<SimDataset> {
    let n = scn.n();
    if w.n() != n {
        return Err(GsarError::DimensionMismatch(format!("weights have n = {}, grid has {n}", w.n())));
    }
    let mut cov = stream_rng(scn.seed, index, Stream::Covariates);
    let x1: Vec<f64> = (0..n).map(|_| cov.sample(StandardNormal)).collect();
    let x2: Vec<f64> = (0..n).map(|_| 2.0 + cov.sample::<f64, _>(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x1[i],
        _ => x2[i],
    });

    let beta = DVector::from_column_slice(&scn.beta_true);
    let eta = if scn.rho_true == 0.0 {
        &x * &beta
    } else {
        SpatialOperator::new(w, scn.rho_true)?.eta(&x, &beta)
    };
    if let Some(i) = eta.iter().position(|e| !e.is_finite()) {
        return Err(GsarError::NonFinite { index: i });
    }

    let spec = scn.family;
    let mut resp = stream_rng(scn.seed, index, Stream::Response);
    let mut trials_rng = stream_rng(scn.seed, index, Stream::Trials);
    let mut y = DVector::zeros(n);
    let mut trials = DVector::from_element(n, 1.0);
    for i in 0..n {
        let mu = spec.inv_link(eta[i]);
        let m = if spec.family() == FamilyId::Binomial {
            trials_rng.random_range(1..=MAX_TRIALS)
        } else {
            1
        };
        trials[i] = m as f64;
        y[i] = draw_response(spec, mu, m, &mut resp).map_err(|_| GsarError::NonFinite { index: i })?;
    }
    Ok(SimDataset {
        data: FitData::with_trials(y, trials, x),
        eta,
    })
}

/// One response at mean `mu`; binomial draws return the proportion out of
/// `trials`.
pub(crate) fn draw_response<R: Rng + ?Sized>(spec: FamilySpec, mu: f64, trials: u64, rng: &mut R) -> Result<f64> {
    let bad = || GsarError::InvalidInput(format!("cannot sample {} at mean {mu}", spec.family()));
    let y = match spec.family() {
        FamilyId::Normal => Normal::new(mu, 1.0).map_err(|_| bad())?.sample(rng),
        FamilyId::Poisson => Poisson::new(mu).map_err(|_| bad())?.sample(rng),
        FamilyId::Gamma => Gamma::new(1.0, mu).map_err(|_| bad())?.sample(rng),
        FamilyId::Binomial => {
            let s = Binomial::new(trials, mu).map_err(|_| bad())?.sample(rng);
            s as f64 / trials as f64
        }
        FamilyId::NegativeBinomial => {
            let k = spec.aux().expect("validated at construction");
            let lambda = Gamma::new(k, mu / k).map_err(|_| bad())?.sample(rng);
            if lambda <= 0.0 {
                0.0
            } else {
                Poisson::new(lambda).map_err(|_| bad())?.sample(rng)
            }
        }
    };
    if y.is_finite() {
        Ok(y)
    } else {
        Err(bad())
    }
}

/// Options of [`run_replicates_with`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Also fit the GLM with the lag `Wy` as an extra covariate.
    pub compare_glm: bool,
    /// Record wall-clock time per replicate; breaks bitwise reproducibility.
    pub timings: bool,
    /// Worker threads; `None` reads [`THREADS_ENV`], then uses all cores.
    pub threads: Option<usize>,
}

/// GLM fit with the spatial lag of the response as a covariate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmLagFit {
    /// Coefficient of `Wy`.
    pub lag_coef: f64,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub index: u64,
    pub converged: bool,
    /// `NaN` when the replicate failed.
    pub rho_hat: f64,
    pub beta_hat: Vec<f64>,
    pub runtime_ms: Option<f64>,
    pub error: Option<String>,
    pub glm_lag: Option<GlmLagFit>,
}

impl ReplicateRow {
    pub fn usable(&self) -> bool {
        self.converged && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    /// Sample standard deviation; `None` with fewer than two values.
    pub sd: Option<f64>,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl ParamSummary {
    fn from_values(name: &str, truth: f64, values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let sd = (values.len() > 1)
            .then(|| (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt());
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            name: name.to_string(),
            truth,
            mean,
            bias: mean - truth,
            sd,
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub scenario: SimScenario,
    pub rows: Vec<ReplicateRow>,
    /// `rho` then `beta_0..`, over converged replicates only.
    pub aggregates: Vec<ParamSummary>,
    pub n_usable: usize,
    /// Replicates that errored or did not converge.
    pub failures: usize,
    pub all_failed: bool,
}

impl SimReport {
    fn assemble(scenario: SimScenario, mut rows: Vec<ReplicateRow>) -> Self {
        rows.sort_by_key(|r| r.index);
        let aggregates = aggregate(&scenario, &rows);
        let n_usable = rows.iter().filter(|r| r.usable()).count();
        Self {
            failures: rows.len() - n_usable,
            all_failed: n_usable == 0,
            n_usable,
            aggregates,
            rows,
            scenario,
        }
    }

    pub fn summary(&self, name: &str) -> Option<&ParamSummary> {
        self.aggregates.iter().find(|s| s.name == name)
    }

    /// Recomputes the aggregates from the rows and compares them.
    pub fn is_consistent(&self, tol: f64) -> bool {
        let again = aggregate(&self.scenario, &self.rows);
        let close = |a: f64, b: f64| (a - b).abs() <= tol;
        again.len() == self.aggregates.len()
            && again.iter().zip(&self.aggregates).all(|(a, b)| {
                a.name == b.name
                    && close(a.mean, b.mean)
                    && close(a.median, b.median)
                    && close(a.q25, b.q25)
                    && close(a.q75, b.q75)
                    && a.sd.zip(b.sd).map_or(a.sd == b.sd, |(x, y)| close(x, y))
            })
    }

    /// One row per replicate:
    /// `index,converged,rho_hat,beta_hat_0..,runtime_ms[,glm_lag_coef,glm_beta_0..]`.
    pub fn to_csv(&self) -> String {
        let p = self.scenario.beta_true.len();
        let with_glm = self.rows.iter().any(|r| r.glm_lag.is_some());
        let mut header = vec!["index".to_string(), "converged".into(), "rho_hat".into()];
        header.extend((0..p).map(|k| format!("beta_hat_{k}")));
        header.push("runtime_ms".into());
        if with_glm {
            header.push("glm_lag_coef".into());
            header.extend((0..p).map(|k| format!("glm_beta_{k}")));
        }
        let mut out = header.join(",");
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![r.index.to_string(), r.converged.to_string(), fmt_num(r.rho_hat)];
            fields.extend((0..p).map(|k| r.beta_hat.get(k).map_or(String::new(), |b| fmt_num(*b))));
            fields.push(r.runtime_ms.map_or(String::new(), fmt_num));
            if with_glm {
                match &r.glm_lag {
                    Some(g) => {
                        fields.push(fmt_num(g.lag_coef));
                        fields.extend(g.beta.iter().map(|b| fmt_num(*b)));
                    }
                    None => fields.extend(std::iter::repeat_n(String::new(), p + 1)),
                }
            }
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip decimal; empty for `NaN`.
fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

fn aggregate(scn: &SimScenario, rows: &[ReplicateRow]) -> Vec<ParamSummary> {
    let usable: Vec<&ReplicateRow> = rows.iter().filter(|r| r.usable()).collect();
    if usable.is_empty() {
        return Vec::new();
    }
    let rho: Vec<f64> = usable.iter().map(|r| r.rho_hat).collect();
    let mut out = vec![ParamSummary::from_values("rho", scn.rho_true, &rho)];
    for (k, &truth) in scn.beta_true.iter().enumerate() {
        let vals: Vec<f64> = usable.iter().map(|r| r.beta_hat[k]).collect();
        out.push(ParamSummary::from_values(&format!("beta_{k}"), truth, &vals));
    }
    out
}

/// Thread count from [`THREADS_ENV`], or the available parallelism.
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Fits every replicate of `scn`; failures are recorded, never raised.
pub fn run_replicates(scn: &SimScenario, cfg: &FitConfig) -> Result<SimReport> {
    run_replicates_with(scn, cfg, &RunOptions::default())
}

pub fn run_replicates_with(scn: &SimScenario, cfg: &FitConfig, opts: &RunOptions) -> Result<SimReport> {
    scn.validate()?;
    cfg.validate()?;
    let w = scn.weights()?;
    let threads = opts.threads.unwrap_or_else(threads_from_env);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| GsarError::InvalidInput(format!("thread pool: {e}")))?;
    let rows: Vec<ReplicateRow> = pool.install(|| {
        (0..scn.replicates as u64)
            .into_par_iter()
            .map(|idx| run_one(scn, &w, cfg, opts, idx))
            .collect()
    });
    Ok(SimReport::assemble(scn.clone(), rows))
}

fn run_one(scn: &SimScenario, w: &SpatialWeights, cfg: &FitConfig, opts: &RunOptions, index: u64) -> ReplicateRow {
    let start = Instant::now();
    let failed = |e: GsarError| ReplicateRow {
        index,
        converged: false,
        rho_hat: f64::NAN,
        beta_hat: Vec::new(),
        runtime_ms: None,
        error: Some(e.to_string()),
        glm_lag: None,
    };
    let ds = match simulate_on(scn, w, index) {
        Ok(ds) => ds,
        Err(e) => return failed(e),
    };
    let fitted = match fit(&ds.data, w, scn.family, cfg) {
        Ok(f) => f,
        Err(e) => return failed(e),
    };
    let glm_lag = if opts.compare_glm {
        glm_with_lag(&ds.data, w, scn.family).ok()
    } else {
        None
    };
    ReplicateRow {
        index,
        converged: fitted.converged,
        rho_hat: fitted.rho_hat,
        beta_hat: fitted.beta_hat.iter().copied().collect(),
        runtime_ms: opts.timings.then(|| start.elapsed().as_secs_f64() * 1e3),
        error: None,
        glm_lag,
    }
}

/// Baseline: ordinary GLM on `[X, Wy]`.
pub fn glm_with_lag(data: &FitData, w: &SpatialWeights, spec: FamilySpec) -> Result<GlmLagFit> {
    let (n, p) = (data.n(), data.p());
    let lag = w.mul_vec(data.y.as_slice());
    let x = DMatrix::from_fn(n, p + 1, |i, j| if j < p { data.x[(i, j)] } else { lag[i] });
    let aug = FitData::with_trials(data.y.clone(), data.trials.clone(), x);
    let g = fit_glm(&aug, spec)?;
    Ok(GlmLagFit {
        lag_coef: g.beta[p],
        beta: g.beta.rows(0, p).iter().copied().collect(),
    })
}
