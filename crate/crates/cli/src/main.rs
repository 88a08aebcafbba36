use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dprune_core::approx::{solve_approx, ApproxSolution};
use dprune_core::design::io::{read_design, write_candidates, write_design, LabeledCandidates};
use dprune_core::design::{standardize, Design};
use dprune_core::exact::{brute_force_exact, compute_w_plus, DesignRecord};
use dprune_core::generators::InstanceSpec;
use dprune_core::pipeline::{
    derive_seed, run_on, sweep, verify_on, write_outputs, write_sweep, InstanceSource, PipelineConfig, Stream,
};
use dprune_core::prune::{prune, PruneOptions, ScanMode};
use dprune_core::{Error, Result};

#[derive(Parser)]
#[command(name = "dprune", version, about = "D-optimal exact designs with safe candidate pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance as candidate CSV.
    Gen {
        /// Instance spec as inline JSON or a path to a JSON file.
        #[arg(long)]
        instance: String,
        /// Output CSV file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimal approximate design: approx.csv and approx.json.
    Approx {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
    },
    /// Exact design of size n: w+ by default, or the full oracle.
    Exact {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
        /// Approximate design CSV (id,weight); solved if omitted.
        #[arg(long)]
        approx: Option<PathBuf>,
        /// Enumerate all designs and write every optimal one.
        #[arg(long)]
        oracle: bool,
    },
    /// Apply the augmentation and exchange conditions.
    Prune {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
        /// Approximate design CSV (id,weight); solved if omitted.
        #[arg(long)]
        approx: Option<PathBuf>,
        /// Exact design CSV (id,count) used as w+; computed if omitted.
        #[arg(long)]
        w_plus: Option<PathBuf>,
    },
    /// Run all five steps.
    Pipeline {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
    },
    /// Check by brute force that pruning kept every optimal support point.
    Verify {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
    },
    /// Repeat the pipeline over seeds and sizes; writes a CSV table.
    Sweep {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        opts: OptionArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Comma-separated design sizes; defaults to --n.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Pipeline config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Candidate CSV with header id,f1,...,fm.
    #[arg(long, conflicts_with = "instance")]
    candidates: Option<PathBuf>,
    /// Instance spec as inline JSON or a path to a JSON file.
    #[arg(long)]
    instance: Option<String>,
}

#[derive(Args)]
struct OptionArgs {
    /// Exact design size.
    #[arg(long)]
    n: Option<usize>,
    /// Approximate solver tolerance on the efficiency bound.
    #[arg(long)]
    tol: Option<f64>,
    /// Tolerance of the maximum-variance set.
    #[arg(long)]
    delta_support: Option<f64>,
    #[arg(long, value_parser = ["full", "maxvar"])]
    scan_mode: Option<String>,
    /// Largest number of designs the enumeration oracle may visit.
    #[arg(long)]
    oracle_budget: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (output file for sweep).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_spec(text: &str) -> Result<InstanceSpec> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        Ok(serde_json::from_str(trimmed)?)
    } else {
        Ok(serde_json::from_reader(File::open(text)?)?)
    }
}

/// Builds the configuration from the config file, then applies flags.
fn build_config(input: &InputArgs, opts: &OptionArgs, need_n: bool) -> Result<PipelineConfig> {
    let mut cfg = match &input.config {
        Some(path) => PipelineConfig::from_json(path)?,
        None => {
            let source = match (&input.candidates, &input.instance) {
                (Some(csv), _) => InstanceSource::Csv { csv: csv.clone() },
                (None, Some(spec)) => InstanceSource::Generator(parse_spec(spec)?),
                (None, None) => {
                    return Err(Error::Config("one of --config, --candidates or --instance is required".into()))
                }
            };
            PipelineConfig::new(source, 0)
        }
    };
    if input.config.is_some() {
        if let Some(csv) = &input.candidates {
            cfg.instance = InstanceSource::Csv { csv: csv.clone() };
        } else if let Some(spec) = &input.instance {
            cfg.instance = InstanceSource::Generator(parse_spec(spec)?);
        }
    }
    if let Some(n) = opts.n {
        cfg.n = n;
    }
    if let Some(t) = opts.tol {
        cfg.approx_tol = t;
    }
    if let Some(d) = opts.delta_support {
        cfg.delta_support = Some(d);
    }
    if let Some(s) = &opts.scan_mode {
        cfg.scan_mode = s.parse::<ScanMode>()?;
    }
    if let Some(b) = opts.oracle_budget {
        cfg.oracle_budget = b;
    }
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    if let Some(o) = &opts.out {
        cfg.out_dir = Some(o.clone());
    }
    if need_n && cfg.n == 0 {
        return Err(Error::Config("--n is required".into()));
    }
    if !need_n && cfg.n == 0 {
        cfg.n = 1;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &PipelineConfig) -> Result<Option<&Path>> {
    if let Some(dir) = &cfg.out_dir {
        fs::create_dir_all(dir)?;
    }
    Ok(cfg.out_dir.as_deref())
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, value)?;
    writeln!(stdout)?;
    Ok(())
}

/// Loads the approximate design from `path` or solves for it.
fn load_approx(labeled: &LabeledCandidates, path: Option<&Path>, tol: f64) -> Result<ApproxSolution> {
    match path {
        Some(p) => {
            let d = labeled.design_from_ids(&read_design(File::open(p)?)?)?;
            ApproxSolution::from_design(&labeled.candidates, d)
        }
        None => solve_approx(&labeled.candidates, tol),
    }
}

fn w_plus_options(cfg: &PipelineConfig) -> dprune_core::exact::WPlusOptions {
    dprune_core::exact::WPlusOptions {
        delta_support: cfg.delta_support,
        oracle_budget: cfg.oracle_budget,
        exchange: dprune_core::exact::ExchangeOptions {
            restarts: cfg.restarts,
            seed: derive_seed(cfg.seed, Stream::WPlusRestarts),
            ..Default::default()
        },
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { instance, out } => {
            let cands = parse_spec(&instance)?.build()?;
            match out {
                Some(path) => write_candidates(BufWriter::new(File::create(path)?), &cands, None),
                None => write_candidates(io::stdout().lock(), &cands, None),
            }
        }
        Command::Approx { input, opts } => {
            let cfg = build_config(&input, &opts, false)?;
            let labeled = cfg.instance.load()?;
            let sol = solve_approx(&labeled.candidates, cfg.approx_tol)?;
            if let Some(dir) = out_dir(&cfg)? {
                write_design(create(dir, "approx.csv")?, &sol.design, Some(&labeled.ids))?;
                serde_json::to_writer_pretty(create(dir, "approx.json")?, &sol.summary())?;
            }
            print_json(&sol.summary())
        }
        Command::Exact {
            input,
            opts,
            approx,
            oracle,
        } => {
            let cfg = build_config(&input, &opts, true)?;
            let labeled = cfg.instance.load()?;
            let ids = &labeled.ids;
            let dir = out_dir(&cfg)?;
            if oracle {
                let r = brute_force_exact(&labeled.candidates, cfg.n, cfg.oracle_budget)?;
                let all: Vec<DesignRecord> = r.optimal_designs.iter().map(|d| DesignRecord::new(d, Some(ids))).collect();
                if let Some(dir) = dir {
                    write_design(create(dir, "design.csv")?, &r.best, Some(ids))?;
                    serde_json::to_writer_pretty(create(dir, "optimal_designs.json")?, &all)?;
                }
                let sstar: Vec<usize> = r.sstar_n.iter().map(|&i| ids[i]).collect();
                return print_json(&serde_json::json!({
                    "phi": r.phi,
                    "optimal_designs": all,
                    "sstar_n": sstar,
                    "solver": "oracle",
                }));
            }
            let sol = load_approx(&labeled, approx.as_deref(), cfg.approx_tol)?;
            let w = compute_w_plus(&labeled.candidates, &sol, cfg.n, &w_plus_options(&cfg))?;
            if let Some(dir) = dir {
                write_design(create(dir, "w_plus.csv")?, &w.design, Some(ids))?;
            }
            print_json(&serde_json::json!({
                "eff": w.eff,
                "method": w.method,
                "design": DesignRecord::new(&w.design, Some(ids)),
            }))
        }
        Command::Prune {
            input,
            opts,
            approx,
            w_plus,
        } => {
            let cfg = build_config(&input, &opts, w_plus.is_none())?;
            let labeled = cfg.instance.load()?;
            let cands = &labeled.candidates;
            let sol = load_approx(&labeled, approx.as_deref(), cfg.approx_tol)?;
            let s = standardize(cands, &sol.mstar)?;
            let sol_s = ApproxSolution::from_design(&s, sol.design.clone())?;
            let wp: Design = match &w_plus {
                Some(p) => labeled.design_from_ids(&read_design(File::open(p)?)?)?,
                None => compute_w_plus(&s, &sol_s, cfg.n, &w_plus_options(&cfg))?.design,
            };
            let popts = PruneOptions {
                scan_mode: cfg.scan_mode,
                delta_support: cfg.delta_support,
            };
            let mut report = prune(&s, &sol_s, &wp, &popts)?;
            let survivors = report.survivors.clone();
            report.survivors = survivors.iter().map(|&i| labeled.ids[i]).collect();
            report.survivors_aug = report.survivors_aug.iter().map(|&i| labeled.ids[i]).collect();
            if let Some(dir) = out_dir(&cfg)? {
                serde_json::to_writer_pretty(create(dir, "prune.json")?, &report)?;
                let sub = cands.subset(&survivors)?;
                write_candidates(create(dir, "survivors.csv")?, &sub, Some(&report.survivors))?;
            }
            print_json(&report)
        }
        Command::Pipeline { input, opts } => {
            let cfg = build_config(&input, &opts, true)?;
            let labeled = cfg.instance.load()?;
            let outcome = run_on(&cfg, labeled)?;
            if let Some(dir) = &cfg.out_dir {
                write_outputs(dir, &outcome)?;
            }
            let r = &outcome.report;
            eprintln!(
                "N={} N1={} N2={} eff_plus={:.6} det={:.6e} det^(1/m)={:.6e} ({})",
                r.n_candidates, r.n1, r.n2, r.eff_plus, r.final_det, r.final_phi, r.final_gap
            );
            print_json(r)
        }
        Command::Verify { input, opts } => {
            let cfg = build_config(&input, &opts, true)?;
            let labeled = cfg.instance.load()?;
            let report = verify_on(&cfg, &labeled)?;
            if let Some(dir) = out_dir(&cfg)? {
                serde_json::to_writer_pretty(create(dir, "verify.json")?, &report)?;
            }
            print_json(&report)?;
            report.into_result().map(|_| ())
        }
        Command::Sweep {
            input,
            opts,
            seeds,
            sizes,
        } => {
            let mut cfg = build_config(&input, &opts, sizes.is_empty())?;
            let out = cfg.out_dir.take();
            let sizes = if sizes.is_empty() { vec![cfg.n] } else { sizes };
            let rows = sweep(&cfg, &seeds, &sizes)?;
            match out {
                Some(path) => write_sweep(BufWriter::new(File::create(path)?), &rows),
                None => write_sweep(io::stdout().lock(), &rows),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
