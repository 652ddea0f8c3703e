use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hcloud::bucketize::{PartitionConfig, SchemeRegistry};
use hcloud::catalog::{load_catalog, save_catalog, Catalog};
use hcloud::costmodel::{calibrate, CostMode, CostModel, CostWeights};
use hcloud::crypto::SecretKey;
use hcloud::engine::{
    execute, load_fragments, read_plaintext, write_fragments, write_plaintext, EngineHarness,
    ExecOptions, ExecutionTrace, SimProfile, Stores,
};
use hcloud::partitioner::{all_private, solve, Instance, Method, PlacementPlan};
use hcloud::queryir::{parse_workload_queries, plan_query, HybridPlan, Query};
use hcloud::report::{sweep, Axis, Bench, SweepBase};
use hcloud::workload::{generate_data, generate_workload_sql, GeneratorConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hybrid-cloud placement, query splitting and simulated execution.
#[derive(Parser)]
#[command(name = "hcloud", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Catalog file.
    #[arg(long, global = true, default_value = "data/catalog.toml")]
    catalog: PathBuf,
    /// Cost weights file; built-in defaults when absent.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    /// Hex-encoded secret key.
    #[arg(long, global = true, default_value = "data/key.hex")]
    key_file: PathBuf,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// How public and private costs combine per query.
    #[arg(long, global = true, default_value = "sum")]
    cost_mode: CostMode,
    /// Partitions for every sensitive attribute, instead of per-type defaults.
    #[arg(long, global = true)]
    partitions: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate TPC-H-shaped data, its catalog, a key and a workload.
    Generate {
        #[arg(long, default_value_t = 0.001)]
        scale: f64,
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
        #[arg(long, default_value = "data/workload.sql")]
        workload_out: PathBuf,
        #[arg(long, default_value_t = 100)]
        workload_size: usize,
        #[arg(long, default_value_t = 0.3)]
        capacity_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        sensitive_fraction: f64,
        /// Permit scale factors above the desk-scale guard.
        #[arg(long)]
        allow_large: bool,
    },
    /// Estimate cost weights by timing calibration queries on the engine.
    Calibrate {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "data/weights.toml")]
        out: PathBuf,
        /// Private-to-public slowdown ratio injected into the engine.
        #[arg(long)]
        private_ratio: Option<f64>,
    },
    /// Choose the private attribute set for a workload.
    Partition {
        #[arg(long, default_value = "data/workload.sql")]
        workload: PathBuf,
        #[arg(long, default_value = "dp")]
        method: Method,
        /// Hill-climbing iteration bound.
        #[arg(long, default_value_t = 500)]
        bound: usize,
        #[arg(long, default_value = "data/plan.json")]
        out: PathBuf,
    },
    /// Split each workload query into public, private and combining plans.
    Rewrite {
        #[arg(long, default_value = "data/workload.sql")]
        workload: PathBuf,
        #[arg(long, default_value = "data/plan.json")]
        plan: PathBuf,
        /// JSON lines, one hybrid plan per query; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fragment the data under a placement and execute the workload.
    Run {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "data/workload.sql")]
        workload: PathBuf,
        #[arg(long, default_value = "data/plan.json")]
        plan: PathBuf,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Run the two clouds one after the other.
        #[arg(long)]
        sequential: bool,
    },
    /// Modeled cost against simulated time, for one plan or a sweep.
    Report {
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long, default_value = "data/workload.sql")]
        workload: PathBuf,
        /// Sweep this axis (P, W or S); otherwise report on --plan.
        #[arg(long)]
        axis: Option<Axis>,
        /// Comma-separated axis values; the axis defaults when absent.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "all-public,all-private,dp")]
        methods: Vec<Method>,
        #[arg(long, default_value = "data/plan.json")]
        plan: PathBuf,
        #[arg(long, default_value = "data/report.tsv")]
        tsv_out: PathBuf,
        #[arg(long, default_value_t = 500)]
        bound: usize,
    },
}

impl Global {
    fn weights(&self) -> Result<CostWeights> {
        match &self.weights {
            Some(p) => Ok(CostWeights::load(p)?),
            None => Ok(CostWeights::default()),
        }
    }

    fn partition_config(&self) -> PartitionConfig {
        self.partitions
            .map(PartitionConfig::uniform)
            .unwrap_or_default()
    }

    fn catalog(&self) -> Result<Catalog> {
        Ok(load_catalog(&self.catalog)?)
    }

    fn key(&self) -> Result<SecretKey> {
        Ok(SecretKey::load(&self.key_file)?)
    }

    fn workload(&self, path: &Path, catalog: &Catalog) -> Result<Vec<Query>> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading workload {}", path.display()))?;
        Ok(parse_workload_queries(&text, catalog)?)
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn generate(g: &Global, cmd: &Command) -> Result<()> {
    let Command::Generate {
        scale,
        out_dir,
        workload_out,
        workload_size,
        capacity_fraction,
        sensitive_fraction,
        allow_large,
    } = cmd
    else {
        unreachable!()
    };
    let config = GeneratorConfig {
        scale_factor: *scale,
        seed: g.seed,
        workload_size: *workload_size,
        capacity_fraction: *capacity_fraction,
        sensitive_fraction: *sensitive_fraction,
        allow_large: *allow_large,
    };
    let data = generate_data(&config)?;
    write_plaintext(&data.catalog, &data.tables, &out_dir.join("plaintext"))?;
    save_catalog(&data.catalog, &g.catalog)?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    SecretKey::generate(&mut rng).save(&g.key_file)?;
    write_file(workload_out, &generate_workload_sql(&config)?)?;
    let rows: usize = data.tables.values().map(|t| t.len()).sum();
    println!(
        "generated {} relations, {rows} rows, {} attributes ({} sensitive), capacity {} of {} units",
        data.tables.len(),
        data.catalog.attributes().len(),
        data.catalog.attributes().iter().filter(|a| a.sensitive).count(),
        data.catalog.capacity(),
        data.catalog.total_size()
    );
    Ok(())
}

fn run_calibrate(g: &Global, data_dir: &Path, out: &Path, ratio: Option<f64>) -> Result<()> {
    let catalog = g.catalog()?;
    let tables = read_plaintext(&catalog, &data_dir.join("plaintext"))?;
    let profile = match ratio {
        Some(r) if r > 0.0 => SimProfile::with_private_ratio(r),
        Some(r) => bail!("private ratio must be positive, got {r}"),
        None => SimProfile::from_weights(&g.weights()?),
    };
    let mut harness = EngineHarness {
        catalog: &catalog,
        tables: &tables,
        key: g.key()?,
        config: g.partition_config(),
        options: ExecOptions {
            profile,
            ..Default::default()
        },
        seed: g.seed,
    };
    let w = calibrate(&mut harness)?;
    w.save(out)?;
    println!(
        "w1={:e} w2={:e} w3={:e} w4={:e} (w1/w2 = {:.3})",
        w.w1,
        w.w2,
        w.w3,
        w.w4,
        w.w1 / w.w2
    );
    Ok(())
}

fn run_partition(g: &Global, workload: &Path, method: Method, bound: usize, out: &Path) -> Result<()> {
    let catalog = g.catalog()?;
    let queries = g.workload(workload, &catalog)?;
    let model = CostModel::new(&catalog, g.partition_config(), g.weights()?, g.cost_mode)?;
    let inst = Instance::new(&model, &queries, catalog.capacity());
    let plan = match method {
        Method::AllPrivate => all_private(&inst, true)?,
        m => solve(&inst, m, bound, g.seed)?,
    };
    plan.save(out)?;
    println!(
        "{}: {} private attributes, {} of {} units, cost {:.4}",
        plan.method,
        plan.private_set.len(),
        plan.private_size(&catalog),
        catalog.capacity(),
        plan.achieved_cost
    );
    Ok(())
}

/// The catalog with a saved placement applied. Relaxed all-private plans
/// may exceed the capacity.
fn placed_catalog(catalog: &Catalog, plan_path: &Path) -> Result<Catalog> {
    let plan = PlacementPlan::load(plan_path)?;
    let base = if plan.method == Method::AllPrivate {
        catalog.with_capacity(u64::MAX)?
    } else {
        catalog.clone()
    };
    Ok(base.apply_placement(&plan)?)
}

fn run_rewrite(g: &Global, workload: &Path, plan: &Path, out: Option<&Path>) -> Result<()> {
    let catalog = g.catalog()?;
    let placed = placed_catalog(&catalog, plan)?;
    let queries = g.workload(workload, &placed)?;
    let schemes = SchemeRegistry::build(&placed, g.partition_config(), &g.key()?.ident_key())?;
    let mut lines = String::new();
    for q in &queries {
        let hp = plan_query(q, &placed, &schemes)?;
        if out.is_none() {
            println!("-- {}\n{hp}", q.to_sql());
        }
        lines.push_str(&hp.to_json_line());
        lines.push('\n');
    }
    if let Some(path) = out {
        write_file(path, &lines)?;
        println!("wrote {} plans to {}", queries.len(), path.display());
    }
    Ok(())
}

fn run_workload(
    g: &Global,
    data_dir: &Path,
    workload: &Path,
    plan: &Path,
    trace_out: Option<&Path>,
    sequential: bool,
) -> Result<()> {
    let catalog = g.catalog()?;
    let placed = placed_catalog(&catalog, plan)?;
    let queries = g.workload(workload, &placed)?;
    let key = g.key()?;
    let config = g.partition_config();
    let schemes = SchemeRegistry::build(&placed, config, &key.ident_key())?;
    let tables = read_plaintext(&catalog, &data_dir.join("plaintext"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    write_fragments(&Stores::build(&tables, &placed, &schemes, &key, &mut rng)?, data_dir)?;
    let stores = load_fragments(&placed, data_dir)?;
    let options = ExecOptions {
        profile: SimProfile::from_weights(&g.weights()?),
        parallel: !sequential,
        ..Default::default()
    };
    let mut traces: Vec<ExecutionTrace> = Vec::with_capacity(queries.len());
    let mut weighted = 0.0;
    for (i, q) in queries.iter().enumerate() {
        let hp: HybridPlan = plan_query(q, &placed, &schemes)?;
        let (rs, trace) = execute(&hp, &stores, &key, &options)?;
        log::info!("query {i}: {} rows, {:.6}s simulated", rs.rows.len(), trace.total_secs);
        log::debug!("query {i} trace:\n{}", trace.report());
        weighted += q.freq as f64 * trace.total_secs;
        traces.push(trace);
    }
    if let Some(path) = trace_out {
        let mut text = String::new();
        for (i, t) in traces.iter().enumerate() {
            text.push_str(&format!("# query {i}\n{}\n", t.report()));
        }
        write_file(path, &text)?;
    }
    let rows: u64 = traces.iter().map(|t| t.result_rows).sum();
    println!(
        "ran {} queries: {rows} result rows, weighted simulated time {weighted:.4}s",
        queries.len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_report(
    g: &Global,
    data_dir: &Path,
    workload: &Path,
    axis: Option<Axis>,
    values: &[f64],
    methods: &[Method],
    plan: &Path,
    tsv_out: &Path,
    bound: usize,
) -> Result<()> {
    let catalog = g.catalog()?;
    let queries = g.workload(workload, &catalog)?;
    let tables = read_plaintext(&catalog, &data_dir.join("plaintext"))?;
    let key = g.key()?;
    let weights = g.weights()?;
    let bench = Bench {
        catalog: &catalog,
        tables: &tables,
        workload: &queries,
        key: &key,
        weights,
        mode: g.cost_mode,
        options: ExecOptions {
            profile: SimProfile::from_weights(&weights),
            ..Default::default()
        },
        seed: g.seed,
        bound,
    };
    match axis {
        None => {
            let placed = placed_catalog(&catalog, plan)?;
            let report = bench.run(&placed, g.partition_config())?;
            print!("{}", report.to_text());
            let mut tsv = String::from("query\tfreq\trows\tmodeled_cost\tmeasured_secs\n");
            for q in &report.queries {
                tsv.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\n",
                    q.index, q.freq, q.rows, q.modeled_cost, q.measured_secs
                ));
            }
            write_file(tsv_out, &tsv)?;
        }
        Some(axis) => {
            let values = if values.is_empty() {
                axis.default_values()
            } else {
                values.to_vec()
            };
            let base = SweepBase {
                partitions: g.partition_config(),
                capacity_fraction: catalog.capacity() as f64 / catalog.total_size() as f64,
                sensitive_fraction: catalog.attributes().iter().filter(|a| a.sensitive).count() as f64
                    / catalog.attributes().len() as f64,
            };
            let report = sweep(&bench, axis, &values, methods, base)?;
            print!("{}", report.to_table());
            write_file(tsv_out, &report.to_tsv())?;
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        cmd @ Command::Generate { .. } => generate(g, cmd),
        Command::Calibrate {
            data_dir,
            out,
            private_ratio,
        } => run_calibrate(g, data_dir, out, *private_ratio),
        Command::Partition {
            workload,
            method,
            bound,
            out,
        } => run_partition(g, workload, *method, *bound, out),
        Command::Rewrite { workload, plan, out } => run_rewrite(g, workload, plan, out.as_deref()),
        Command::Run {
            data_dir,
            workload,
            plan,
            trace_out,
            sequential,
        } => run_workload(g, data_dir, workload, plan, trace_out.as_deref(), *sequential),
        Command::Report {
            data_dir,
            workload,
            axis,
            values,
            methods,
            plan,
            tsv_out,
            bound,
        } => run_report(g, data_dir, workload, *axis, values, methods, plan, tsv_out, *bound),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e
                .chain()
                .find_map(|c| c.downcast_ref::<hcloud::Error>())
                .map_or("config", hcloud::Error::class);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{class}]: {msg}");
            ExitCode::from(match class {
                "config" => 2,
                "data" => 3,
                "planning" => 4,
                _ => 5,
            })
        }
    }
}
