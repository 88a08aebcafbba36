//! The end-to-end procedure:
//!
//! 1. approximate optimum `w*` and standardization by `M*^{-1/2}`,
//! 2. a good exact design `w⁺` on the support of `w*`,
//! 3. the augmentation condition,
//! 4. the exchange condition,
//! 5. an exact search on the survivors (oracle when it fits the budget).

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{solve_approx, ApproxSolution, ApproxSummary};
use crate::design::io::{read_candidates, write_candidates, write_design, LabeledCandidates};
use crate::design::{efficiency, standardize, CandidateSet, Design, ModelSummary};
use crate::error::{Error, Result};
use crate::exact::{
    brute_force_exact, compute_w_plus, greedy_start, multi_start_exchange, multiset_count, DesignRecord,
    ExchangeOptions, WPlusMethod, WPlusOptions, DEFAULT_ORACLE_BUDGET, REL_IMPROVE_TOL,
};
use crate::generators::InstanceSpec;
use crate::prune::{prune, PruneOptions, PruneReport, ScanMode};

/// A generated instance or a candidate CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Generator(InstanceSpec),
    Csv { csv: PathBuf },
}

impl InstanceSource {
    pub fn load(&self) -> Result<LabeledCandidates> {
        match self {
            InstanceSource::Generator(spec) => {
                let candidates = spec.build()?;
                let ids = (0..candidates.len()).collect();
                Ok(LabeledCandidates { candidates, ids })
            }
            InstanceSource::Csv { csv } => read_candidates(File::open(csv)?),
        }
    }
}

fn default_tol() -> f64 {
    1e-9
}
fn default_budget() -> u64 {
    DEFAULT_ORACLE_BUDGET
}
fn default_restarts() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub instance: InstanceSource,
    pub n: usize,
    #[serde(default = "default_tol")]
    pub approx_tol: f64,
    /// Tolerance of the maximum-variance set; `1e-5·m` when absent.
    #[serde(default)]
    pub delta_support: Option<f64>,
    #[serde(default)]
    pub scan_mode: ScanMode,
    #[serde(default = "default_budget")]
    pub oracle_budget: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn new(instance: InstanceSource, n: usize) -> Self {
        PipelineConfig {
            instance,
            n,
            approx_tol: default_tol(),
            delta_support: None,
            scan_mode: ScanMode::Full,
            oracle_budget: default_budget(),
            seed: 0,
            restarts: default_restarts(),
            out_dir: None,
        }
    }

    pub fn from_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.approx_tol > 0.0 && self.approx_tol < 1.0) {
            return Err(Error::Config(format!("approx_tol {} not in (0, 1)", self.approx_tol)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if let Some(d) = self.delta_support {
            if !(d >= 0.0) {
                return Err(Error::Config(format!("delta_support {d} must be nonnegative")));
            }
        }
        Ok(())
    }

    fn check_dimension(&self, m: usize) -> Result<()> {
        if self.n < m {
            return Err(Error::Config(format!("n = {} is below the model dimension {m}", self.n)));
        }
        Ok(())
    }

    /// Exchange options for a labeled random stream.
    fn exchange_options(&self, stream: Stream) -> ExchangeOptions {
        ExchangeOptions {
            rel_improve_tol: REL_IMPROVE_TOL,
            restarts: self.restarts,
            seed: derive_seed(self.seed, stream),
        }
    }

    fn w_plus_options(&self) -> WPlusOptions {
        WPlusOptions {
            delta_support: self.delta_support,
            oracle_budget: self.oracle_budget,
            exchange: self.exchange_options(Stream::WPlusRestarts),
        }
    }
}

/// Labeled random streams derived from the configuration seed.
#[derive(Clone, Copy, Debug)]
pub enum Stream {
    WPlusRestarts = 1,
    FinalRestarts = 2,
}

/// Seed of the labeled stream `stream` under `seed`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalSolver {
    Oracle,
    Heuristic,
}

/// Wall-clock seconds per step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimings {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    #[serde(rename = "N")]
    pub n_candidates: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    pub m: usize,
    pub n: usize,
    pub approx: ApproxSummary,
    pub eff_plus: f64,
    pub w_plus_method: WPlusMethod,
    pub w_plus: DesignRecord,
    pub augmentation_threshold: f64,
    pub scan_mode: ScanMode,
    pub final_solver: FinalSolver,
    /// "optimal" for the oracle, "heuristic, no gap" otherwise.
    pub final_gap: String,
    pub final_design: DesignRecord,
    /// `det M(w)` of the final design in the original coordinates.
    pub final_det: f64,
    /// `det M(w)^{1/m}`
    pub final_phi: f64,
    pub final_eff: f64,
    /// Number of optimal designs found by the oracle (0 for the heuristic).
    pub optimal_designs: usize,
    /// Survivor ids after both conditions.
    pub survivors: Vec<usize>,
    pub seed: u64,
    pub timings: StepTimings,
}

impl PipelineReport {
    /// The report as JSON without timings, for reproducibility checks.
    pub fn stable_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timings");
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

/// Everything the pipeline produced, in candidate indices.
#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub candidates: LabeledCandidates,
    pub approx: ApproxSolution,
    pub w_plus: Design,
    pub prune: PruneReport,
    pub final_design: Design,
}

pub(crate) trait StepContext<T> {
    fn step(self, name: &'static str) -> Result<T>;
}

impl<T> StepContext<T> for Result<T> {
    fn step(self, name: &'static str) -> Result<T> {
        self.map_err(|e| e.at_step(name))
    }
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let labeled = cfg.instance.load().step("load")?;
    let outcome = run_on(cfg, labeled)?;
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &outcome).step("write")?;
    }
    Ok(outcome)
}

/// Runs the five steps on already loaded candidates.
pub fn run_on(cfg: &PipelineConfig, labeled: LabeledCandidates) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let cands = &labeled.candidates;
    let (m, n) = (cands.dim(), cfg.n);
    cfg.check_dimension(m)?;

    let t = Instant::now();
    let approx = solve_approx(cands, cfg.approx_tol).step("approx")?;
    let s = standardize(cands, &approx.mstar).step("standardize")?;
    let mut approx_s = ApproxSolution::from_design(&s, approx.design.clone()).step("standardize")?;
    approx_s.iterations = approx.iterations;
    let t1 = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let w_plus = compute_w_plus(&s, &approx_s, n, &cfg.w_plus_options()).step("w_plus")?;
    let t2 = t.elapsed().as_secs_f64();

    let popts = PruneOptions {
        scan_mode: cfg.scan_mode,
        delta_support: cfg.delta_support,
    };
    let pr = prune(&s, &approx_s, &w_plus.design, &popts).step("prune")?;

    let t = Instant::now();
    let (final_design, solver, optimal_designs) = final_search(cfg, &s, &pr.survivors, &w_plus.design).step("final")?;
    let t5 = t.elapsed().as_secs_f64();

    let summary = ModelSummary::of(cands, &final_design)?;
    let final_eff = efficiency(&final_design, &approx.mstar, cands)?;
    let ids = &labeled.ids;
    let report = PipelineReport {
        n_candidates: cands.len(),
        n1: pr.n1,
        n2: pr.n2,
        m,
        n,
        approx: approx.summary(),
        eff_plus: pr.eff_plus,
        w_plus_method: w_plus.method,
        w_plus: DesignRecord::new(&w_plus.design, Some(ids)),
        augmentation_threshold: pr.augmentation_threshold,
        scan_mode: cfg.scan_mode,
        final_solver: solver,
        final_gap: match solver {
            FinalSolver::Oracle => "optimal".into(),
            FinalSolver::Heuristic => "heuristic, no gap".into(),
        },
        final_design: DesignRecord::new(&final_design, Some(ids)),
        final_det: summary.det(),
        final_phi: summary.phi,
        final_eff,
        optimal_designs,
        survivors: pr.survivors.iter().map(|&i| ids[i]).collect(),
        seed: cfg.seed,
        timings: StepTimings {
            t1,
            t2,
            t3: pr.timings.augmentation_s,
            t4: pr.timings.exchange_s,
            t5,
        },
    };
    Ok(PipelineOutcome {
        report,
        candidates: labeled,
        approx,
        w_plus: w_plus.design,
        prune: pr,
        final_design,
    })
}

/// Exact search restricted to `survivors`; returns the design in full indices.
fn final_search(
    cfg: &PipelineConfig,
    s: &CandidateSet,
    survivors: &[usize],
    w_plus: &Design,
) -> Result<(Design, FinalSolver, usize)> {
    let sub = s.subset(survivors)?;
    let n = cfg.n;
    if multiset_count(survivors.len(), n) <= cfg.oracle_budget as u128 {
        let r = brute_force_exact(&sub, n, cfg.oracle_budget)?;
        return Ok((r.best.remap(survivors)?, FinalSolver::Oracle, r.optimal_designs.len()));
    }
    let all: Vec<usize> = (0..survivors.len()).collect();
    let local: Option<Vec<(usize, usize)>> = w_plus
        .support()
        .iter()
        .zip(w_plus.counts().expect("exact"))
        .map(|(i, &c)| survivors.binary_search(i).ok().map(|k| (k, c)))
        .collect();
    let start = match local {
        Some(pairs) => Design::exact(pairs)?,
        None => greedy_start(&sub, &all, n)?,
    };
    let found = multi_start_exchange(&sub, &start, &all, &cfg.exchange_options(Stream::FinalRestarts))?;
    let found = found.design.remap(survivors)?;
    let phi_found = ModelSummary::of(s, &found)?.logdet;
    let phi_plus = ModelSummary::of(s, w_plus)?.logdet;
    let best = if phi_plus > phi_found { w_plus.clone() } else { found };
    Ok((best, FinalSolver::Heuristic, 0))
}

/// Writes `report.json`, `survivors.csv` and `design.csv` into `dir`.
pub fn write_outputs(dir: &Path, out: &PipelineOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let f = BufWriter::new(File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(f, &out.report)?;
    let ids = &out.candidates.ids;
    let surv = &out.prune.survivors;
    let sub = out.candidates.candidates.subset(surv)?;
    let surv_ids: Vec<usize> = surv.iter().map(|&i| ids[i]).collect();
    write_candidates(BufWriter::new(File::create(dir.join("survivors.csv"))?), &sub, Some(&surv_ids))?;
    write_design(BufWriter::new(File::create(dir.join("design.csv"))?), &out.final_design, Some(ids))?;
    Ok(())
}

/// Brute-force check that pruning kept every optimal support point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    #[serde(rename = "N")]
    pub n_candidates: usize,
    pub n: usize,
    pub eff_plus: f64,
    pub sstar_n: Vec<usize>,
    pub survivors_aug: Vec<usize>,
    pub survivors: Vec<usize>,
    /// Members of `sstar_n` missing from `survivors`.
    pub missing: Vec<usize>,
    pub contained: bool,
}

impl VerifyReport {
    pub fn into_result(self) -> Result<VerifyReport> {
        if self.contained {
            Ok(self)
        } else {
            Err(Error::SafetyViolation { missing: self.missing })
        }
    }
}

/// Runs steps 1–4 and the oracle on the full instance; ids in the report
/// are candidate ids.
pub fn verify(cfg: &PipelineConfig) -> Result<VerifyReport> {
    cfg.validate()?;
    let labeled = cfg.instance.load().step("load")?;
    verify_on(cfg, &labeled)
}

pub fn verify_on(cfg: &PipelineConfig, labeled: &LabeledCandidates) -> Result<VerifyReport> {
    let cands = &labeled.candidates;
    cfg.check_dimension(cands.dim())?;
    let oracle = brute_force_exact(cands, cfg.n, cfg.oracle_budget).step("oracle")?;
    let approx = solve_approx(cands, cfg.approx_tol).step("approx")?;
    let s = standardize(cands, &approx.mstar).step("standardize")?;
    let approx_s = ApproxSolution::from_design(&s, approx.design.clone()).step("standardize")?;
    let w_plus = compute_w_plus(&s, &approx_s, cfg.n, &cfg.w_plus_options()).step("w_plus")?;
    let popts = PruneOptions {
        scan_mode: cfg.scan_mode,
        delta_support: cfg.delta_support,
    };
    let pr = prune(&s, &approx_s, &w_plus.design, &popts).step("prune")?;
    let missing: Vec<usize> = oracle
        .sstar_n
        .iter()
        .copied()
        .filter(|i| pr.survivors.binary_search(i).is_err())
        .collect();
    let ids = &labeled.ids;
    let map = |v: &[usize]| v.iter().map(|&i| ids[i]).collect::<Vec<_>>();
    Ok(VerifyReport {
        n_candidates: cands.len(),
        n: cfg.n,
        eff_plus: pr.eff_plus,
        sstar_n: map(&oracle.sstar_n),
        survivors_aug: map(&pr.survivors_aug),
        survivors: map(&pr.survivors),
        contained: missing.is_empty(),
        missing: map(&missing),
    })
}

/// One line of a sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_candidates: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t5: f64,
    pub eff_plus: f64,
}

/// Repeats the pipeline for every `(seed, n)` pair. For Gaussian instances
/// the seed also replaces the instance seed.
pub fn sweep(base: &PipelineConfig, seeds: &[u64], ns: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &seed in seeds {
        for &n in ns {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.n = n;
            cfg.out_dir = None;
            if let InstanceSource::Generator(InstanceSpec::Gaussian { seed: s, .. }) = &mut cfg.instance {
                *s = seed;
            }
            let r = run_pipeline(&cfg)?.report;
            rows.push(SweepRow {
                seed,
                n,
                n_candidates: r.n_candidates,
                n1: r.n1,
                n2: r.n2,
                t1: r.timings.t1,
                t2: r.timings.t2,
                t3: r.timings.t3,
                t4: r.timings.t4,
                t5: r.timings.t5,
                eff_plus: r.eff_plus,
            });
        }
    }
    Ok(rows)
}

pub fn write_sweep<W: std::io::Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
