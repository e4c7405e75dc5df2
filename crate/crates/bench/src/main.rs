use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use eax_bench::grid::PAR10_MEAN_ROW;
use eax_core::ab::{trace_ab_cycles, ESet, UnionGraph};
use eax_core::instance::{generate_rue, Instance, DEFAULT_NEIGHBOR_K};
use eax_core::rng::seeded_rng;
use eax_core::solver::{evolve_with, LogRecord, RatioMask, SolverConfig, Variant};
use eax_core::tour::Tour;
use eax_core::validity::{check_eset, mirror_test};

#[derive(Parser)]
#[command(
    name = "eax",
    version,
    about = "EAX genetic algorithm for the symmetric Euclidean TSP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one TSPLIB instance.
    Solve {
        file: PathBuf,
        #[arg(long, default_value = "vanilla")]
        variant: Variant,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Cutoff in seconds.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Target length; defaults to the optimum sidecar when present.
        #[arg(long)]
        target: Option<i64>,
        #[arg(long, default_value_t = 100)]
        pop: usize,
        #[arg(long = "children-s1", default_value_t = 30)]
        children_s1: usize,
        #[arg(long = "children-s2", default_value_t = 20)]
        children_s2: usize,
        /// JSON-lines run log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Restart from a fresh population on convergence.
        #[arg(long)]
        restart: bool,
        #[arg(long = "max-generations")]
        max_generations: Option<u64>,
        /// Record optimal edges gained/lost per offspring (needs an optimal tour sidecar).
        #[arg(long)]
        instrument: bool,
        /// JSON ratio mask for the ratio_based variant.
        #[arg(long = "ratio-mask")]
        ratio_mask: Option<PathBuf>,
        #[arg(long = "neighbor-k", default_value_t = DEFAULT_NEIGHBOR_K)]
        neighbor_k: usize,
        /// Write the best tour (1-based ids) here.
        #[arg(long = "tour-out")]
        tour_out: Option<PathBuf>,
    },
    /// Run a benchmark grid described by a JSON config.
    Bench { config: PathBuf },
    /// Trace the AB-cycles of two tours and check each one.
    Check {
        file: PathBuf,
        #[arg(long = "tour-a")]
        tour_a: PathBuf,
        #[arg(long = "tour-b")]
        tour_b: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a random uniform Euclidean instance in TSPLIB format.
    GenRue {
        n: usize,
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        side: u64,
    },
}

fn load(file: &Path, k: usize) -> Result<Instance> {
    Instance::load(file, k).with_context(|| format!("loading {}", file.display()))
}

fn read_tour(inst: &Instance, path: &Path) -> Result<Tour> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Tour::parse_dump(inst, &text).with_context(|| format!("parsing tour {}", path.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Solve {
            file,
            variant,
            seed,
            cutoff,
            target,
            pop,
            children_s1,
            children_s2,
            log,
            restart,
            max_generations,
            instrument,
            ratio_mask,
            neighbor_k,
            tour_out,
        } => {
            let inst = load(&file, neighbor_k)?;
            let ratio_mask = match ratio_mask {
                Some(p) => RatioMask::from_json(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => RatioMask::default(),
            };
            if instrument && inst.optimal_tour().is_none() {
                bail!(
                    "--instrument needs an optimal tour in the sidecar of {}",
                    file.display()
                );
            }
            let cfg = SolverConfig {
                population_size: pop,
                n_children_stage1: children_s1,
                n_children_stage2: children_s2,
                variant,
                ratio_mask,
                restart,
                cutoff_secs: cutoff,
                target: target.or(inst.known_optimum()),
                seed,
                neighbor_k,
                max_generations,
                instrument,
                ..Default::default()
            };
            let mut log_out = match &log {
                Some(p) => Some(BufWriter::new(
                    File::create(p).with_context(|| format!("creating {}", p.display()))?,
                )),
                None => None,
            };
            let mut log_err = None;
            let res = evolve_with(&inst, &cfg, |r| {
                if let Some(w) = log_out.as_mut() {
                    if let Err(e) =
                        writeln!(w, "{}", LogRecord::Generation(r.clone()).to_json_line())
                    {
                        log_err.get_or_insert(e);
                    }
                }
            })?;
            let summary = res.summary(&inst, &cfg);
            if let Some(mut w) = log_out {
                if let Some(e) = log_err {
                    return Err(e).context("writing run log");
                }
                writeln!(w, "{}", LogRecord::Summary(summary.clone()).to_json_line())?;
                w.flush()?;
            }
            if let Some(p) = tour_out {
                std::fs::write(&p, res.best_tour.dump() + "\n")
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench { config } => {
            let out = eax_bench::run_grid(&config)?;
            println!(
                "{:<24} {:<14} {:>5} {:>7} {:>14}",
                "instance", "variant", "runs", "solved", "par10_s"
            );
            for r in &out.par10 {
                if r.instance == PAR10_MEAN_ROW {
                    continue;
                }
                println!(
                    "{:<24} {:<14} {:>5} {:>7} {:>14.3}",
                    r.instance,
                    r.variant,
                    r.runs,
                    r.solved,
                    r.par10_us as f64 / 1e6
                );
            }
            for r in out.par10.iter().filter(|r| r.instance == PAR10_MEAN_ROW) {
                println!(
                    "{:<24} {:<14} {:>5} {:>7} {:>14.3}",
                    "mean",
                    r.variant,
                    r.runs,
                    r.solved,
                    r.par10_us as f64 / 1e6
                );
            }
            let failed = out.rows.iter().filter(|r| !r.error.is_empty()).count();
            if failed > 0 {
                eprintln!("{failed} run(s) failed; see runs.csv");
            }
            if !out.parse_failures.is_empty() {
                for (path, e) in &out.parse_failures {
                    eprintln!("failed to load {path}: {e}");
                }
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            file,
            tour_a,
            tour_b,
            seed,
        } => {
            let inst = load(&file, DEFAULT_NEIGHBOR_K)?;
            let a = read_tour(&inst, &tour_a)?;
            let b = read_tour(&inst, &tour_b)?;
            let g = UnionGraph::build(&a, &b)?;
            let cycles = trace_ab_cycles(&g, &mut seeded_rng(seed));
            println!(
                "{:>5} {:>7} {:>8} {:>9} {:<20} {:<6}",
                "cycle", "edges", "portals", "subtours", "path", "mirror"
            );
            for (i, c) in cycles.iter().enumerate() {
                let (p, v) = check_eset(&a, &b, &ESet::single(c))?;
                println!(
                    "{:>5} {:>7} {:>8} {:>9} {:<20} {:<6}",
                    i,
                    c.len(),
                    p.portal_count(),
                    v.subtour_count,
                    format!("{:?}", v.fast_path),
                    format!("{:?}", mirror_test(&p))
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenRue { n, seed, side } => {
            print!("{}", generate_rue(n, side, seed)?.to_tsplib());
            Ok(ExitCode::SUCCESS)
        }
    }
}
