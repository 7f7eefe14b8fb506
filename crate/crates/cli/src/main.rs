//! Command-line orchestration: dataset generation, r-separation reports,
//! full reliability assessments, quantitative fault-tree analysis, and
//! multi-run result tables. Every stochastic step is reproducible from
//! the configured seed, and outputs are byte-identical across thread
//! counts.

mod fmt;
mod run;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use fmt::sig6;
use relikit_core::dataset::{
    estimate_r_separation, generate_synthetic, load_csv, save_csv, MixtureSpec,
};
use relikit_core::fta::{
    allocate_budget, chain_to_path, evaluate_te, sensitivity, AllocationPolicy, EventChain,
    FaultTree,
};
use run::{parse_convention, parse_metric, RunSpec};

#[derive(Parser)]
#[command(name = "relikit", version, about = "Operational reliability assessment toolkit")]
struct Cli {
    /// Worker threads; defaults to RELIKIT_THREADS or all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset from a mixture spec.
    Gen {
        /// Mixture spec JSON: components plus a label rule.
        #[arg(long)]
        mixture: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the r-separation of a dataset.
    Rsep {
        #[arg(long)]
        data: PathBuf,
        /// half | raw
        #[arg(long)]
        convention: Option<String>,
        /// linf | l2
        #[arg(long)]
        metric: Option<String>,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the reliability assessment pipeline.
    Assess {
        #[arg(long)]
        data: PathBuf,
        /// Held-out set for the test-error line.
        #[arg(long)]
        test_data: Option<PathBuf>,
        /// knn:<k> | oracle:<path.json> | cmd:<program args...>
        #[arg(long)]
        model: String,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Cell radius as a fraction of r_hat (default 0.9).
        #[arg(long)]
        epsilon_frac: Option<f64>,
        /// kde | flat | mixture:<path.json>
        #[arg(long, default_value = "kde")]
        op: String,
        /// gaussian | exponential
        #[arg(long)]
        kernel: Option<String>,
        /// silverman | cv | fixed:<h>
        #[arg(long)]
        bandwidth: Option<String>,
        /// Enable KDE boundary reflection correction.
        #[arg(long)]
        reflect: bool,
        /// Bootstrap replicates for the cell OP variance; 0 disables.
        #[arg(long, default_value_t = 100)]
        bootstrap: usize,
        /// Robustness samples per cell.
        #[arg(long, default_value_t = 1000)]
        ns: usize,
        /// Votes used to resolve an empty cell's label.
        #[arg(long, default_value_t = 30)]
        resolve_samples: usize,
        /// Escalate vote ties to cross-boundary instead of picking the
        /// smallest class id.
        #[arg(long)]
        strict_ties: bool,
        /// Resolve empty-cell labels from the oracle model's truth rule.
        #[arg(long)]
        truth_from_oracle: bool,
        /// full | sampled:<k> | kgrid:<k1,k2,...>
        #[arg(long, default_value = "full")]
        mode: String,
        /// Significance levels for upper bounds; repeatable.
        #[arg(long, value_delimiter = ',', default_value = "0.025")]
        alpha: Vec<f64>,
        #[arg(long)]
        convention: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        seed: u64,
        /// Result JSON path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-cell JSON-lines report path.
        #[arg(long)]
        cells: Option<PathBuf>,
        /// k-convergence CSV path (kgrid mode).
        #[arg(long)]
        kconv: Option<PathBuf>,
    },
    /// Evaluate a fault tree: TE probability, sensitivities, allocation.
    Fta {
        #[arg(long)]
        tree: PathBuf,
        /// Event-chain JSON (array of event ids); repeatable.
        #[arg(long)]
        chain: Vec<PathBuf>,
        /// Basic events for sensitivity analysis, or "all".
        #[arg(long)]
        sensitivity: Option<String>,
        #[arg(long, default_value_t = 1e-4)]
        delta: f64,
        /// Back-allocate this TE target to basic-event budgets.
        #[arg(long)]
        allocate: Option<f64>,
        /// uniform | subset:<id,id,...>
        #[arg(long, default_value = "uniform")]
        policy: String,
        /// Write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run a batch of assessments and emit one CSV row per run.
    Table {
        /// Config JSON: {"runs": [ ... ]}.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Measure and report seconds per cell (non-deterministic output).
        #[arg(long)]
        timing: bool,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => std::env::var("RELIKIT_THREADS")
            .ok()
            .map(|v| v.parse().context("RELIKIT_THREADS must be an integer"))
            .transpose()?,
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("initializing thread pool")?;
    }
    match cli.command {
        Command::Gen { mixture, n, seed, out } => cmd_gen(&mixture, n, seed, &out),
        Command::Rsep {
            data,
            convention,
            metric,
            json,
        } => cmd_rsep(&data, convention.as_deref(), metric.as_deref(), json.as_deref()),
        Command::Assess { .. } => cmd_assess(cli.command),
        Command::Fta {
            tree,
            chain,
            sensitivity,
            delta,
            allocate,
            policy,
            json,
        } => cmd_fta(
            &tree,
            &chain,
            sensitivity.as_deref(),
            delta,
            allocate,
            &policy,
            json.as_deref(),
        ),
        Command::Table { config, out, timing } => cmd_table(&config, &out, timing),
    }
}

fn cmd_gen(mixture: &Path, n: usize, seed: u64, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(mixture)
        .with_context(|| format!("reading {}", mixture.display()))?;
    let spec = MixtureSpec::from_json(&text)?;
    let ds = generate_synthetic(&spec, n, seed)?;
    save_csv(&ds, out)?;
    println!("wrote {} points (d={}) to {}", ds.n(), ds.dim(), out.display());
    Ok(())
}

fn cmd_rsep(
    data: &Path,
    convention: Option<&str>,
    metric: Option<&str>,
    json: Option<&Path>,
) -> Result<()> {
    let ds = load_csv(data)?;
    let rsep = estimate_r_separation(&ds, parse_convention(convention)?, parse_metric(metric)?)?;
    println!("r_hat                {}", sig6(rsep.r_hat));
    println!("convention           {:?}", rsep.convention);
    println!("metric               {:?}", rsep.metric);
    println!("min cross distance   {}", sig6(rsep.min_cross_distance));
    println!(
        "witness pair         points {} and {}",
        rsep.witness_pair.0, rsep.witness_pair.1
    );
    if let Some(path) = json {
        write_json(path, &rsep)?;
    }
    Ok(())
}

fn cmd_assess(command: Command) -> Result<()> {
    let Command::Assess {
        data,
        test_data,
        model,
        epsilon,
        epsilon_frac,
        op,
        kernel,
        bandwidth,
        reflect,
        bootstrap,
        ns,
        resolve_samples,
        strict_ties,
        truth_from_oracle,
        mode,
        alpha,
        convention,
        metric,
        seed,
        out,
        cells,
        kconv,
    } = command
    else {
        unreachable!("dispatched from assess arm");
    };
    let spec = RunSpec {
        name: None,
        data,
        test_data,
        model,
        epsilon,
        epsilon_frac,
        op,
        kernel,
        bandwidth,
        reflect,
        bootstrap,
        ns,
        resolve_samples,
        strict_ties,
        truth_from_oracle,
        mode,
        alpha,
        convention,
        metric,
        seed,
    };
    let executed = run::execute(&spec, Path::new("."))?;
    let report = &executed.outcome.report;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let grid: Vec<String> = report.cells_per_axis.iter().map(|c| c.to_string()).collect();
    println!("mode                 {:?}", report.result.mode);
    println!("cells                {} ({} total)", grid.join("x"), report.total_cells);
    println!("epsilon              {}", sig6(report.epsilon));
    println!("r_hat                {}", sig6(report.r_separation.r_hat));
    println!("train error          {}", sig6(executed.train_error));
    println!("test error           {}", sig6(executed.test_error));
    println!("pmi mean             {}", sig6(report.result.pmi.mean));
    println!("pmi variance         {}", sig6(report.result.pmi.variance));
    println!("acu mean             {}", sig6(report.result.acu.mean));
    println!("acu variance         {}", sig6(report.result.acu.variance));
    for (level, value) in &report.result.ub {
        println!("ub({level})            {}", sig6(*value));
    }
    if let Some(k) = report.result.k {
        println!("k                    {k}");
    }
    if let Some(path) = &out {
        write_json(path, report)?;
    }
    if let Some(path) = &cells {
        let mut buf = String::new();
        for record in &executed.outcome.cells {
            buf.push_str(&serde_json::to_string(record)?);
            buf.push('\n');
        }
        std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &kconv {
        let series = executed
            .outcome
            .k_series
            .as_ref()
            .context("kconv output needs --mode kgrid:<k,...>")?;
        let mut buf = String::from("k,pmi_mean,pmi_var,pmi_ub,acu_mean,acu_var,acu_ub\n");
        for p in series {
            buf.push_str(&format!(
                "{},{:?},{:?},{:?},{:?},{:?},{:?}\n",
                p.k,
                p.pmi.mean,
                p.pmi.variance,
                p.pmi_ub,
                p.acu.mean,
                p.acu.variance,
                p.acu_ub
            ));
        }
        std::fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct FtaReport {
    te: String,
    te_probability: f64,
    method: relikit_core::fta::EvalMethod,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    sensitivities: Vec<(String, f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    allocation: Option<relikit_core::fta::Allocation>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    chains: Vec<String>,
    independence_note: String,
}

fn cmd_fta(
    tree_path: &Path,
    chains: &[PathBuf],
    sens: Option<&str>,
    delta: f64,
    allocate: Option<f64>,
    policy: &str,
    json: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(tree_path)
        .with_context(|| format!("reading {}", tree_path.display()))?;
    let tree = FaultTree::from_json(&text)?;
    let eval = tree.evaluate_detailed()?;
    println!("te,probability,method");
    println!("{},{:?},{:?}", tree.te_id(), eval.probability, eval.method);

    let mut chain_ids = Vec::new();
    for path in chains {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let chain: EventChain = serde_json::from_str(&text)
            .with_context(|| format!("parsing chain {}", path.display()))?;
        chain_to_path(&chain, &tree)?;
        println!("chain,{},valid", chain.0.join(">"));
        chain_ids.push(chain.0.join(">"));
    }

    let mut sensitivities = Vec::new();
    if let Some(list) = sens {
        let ids: Vec<String> = if list == "all" {
            tree.basic_event_ids().iter().map(|s| s.to_string()).collect()
        } else {
            list.split(',').map(String::from).collect()
        };
        println!("be,probability,dTE_dp");
        for id in ids {
            let p = tree.be_probability(&id)?;
            let s = sensitivity(&tree, &id, delta)?;
            println!("{id},{p:?},{s:?}");
            sensitivities.push((id, p, s));
        }
    }

    let mut allocation = None;
    if let Some(target) = allocate {
        let policy = match policy {
            "uniform" => AllocationPolicy::UniformScaling,
            other => match other.strip_prefix("subset:") {
                Some(ids) => AllocationPolicy::FixedSubset {
                    ids: ids.split(',').map(String::from).collect(),
                },
                None => bail!("unknown policy {other:?} (expected uniform|subset:<ids>)"),
            },
        };
        let alloc = allocate_budget(&tree, target, &policy)?;
        println!("allocation,target,{target:?},scale,{:?},achieved,{:?}", alloc.scale, alloc.achieved_te);
        println!("be,current,allocated");
        for (id, p) in &alloc.be_prob {
            println!("{id},{:?},{p:?}", tree.be_probability(id)?);
        }
        allocation = Some(alloc);
    }

    if let Some(path) = json {
        write_json(
            path,
            &FtaReport {
                te: tree.te_id().to_string(),
                te_probability: eval.probability,
                method: eval.method,
                sensitivities,
                allocation,
                chains: chain_ids,
                independence_note: "basic events are treated as mutually independent".into(),
            },
        )?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct TableConfig {
    runs: Vec<RunSpec>,
}

fn cmd_table(config: &Path, out: &Path, timing: bool) -> Result<()> {
    let text =
        std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let table: TableConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", config.display()))?;
    if table.runs.is_empty() {
        bail!("config declares no runs");
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let mut csv = String::from(
        "name,train_error,test_error,r_separation,epsilon,cells,acu,lambda_mean,lambda_var,ub_0.975,seconds_per_cell\n",
    );
    for (i, spec) in table.runs.iter().enumerate() {
        let name = spec.name.clone().unwrap_or_else(|| format!("run{}", i + 1));
        let executed = run::execute(spec, base)
            .with_context(|| format!("run {name}"))?;
        let report = &executed.outcome.report;
        for w in &report.warnings {
            eprintln!("warning [{name}]: {w}");
        }
        let grid: Vec<String> = report.cells_per_axis.iter().map(|c| c.to_string()).collect();
        let ub = report
            .result
            .ub
            .get("0.975")
            .or_else(|| report.result.ub.values().next())
            .copied()
            .unwrap_or(f64::NAN);
        let seconds_per_cell = if timing {
            sig6(executed.elapsed_seconds / report.evaluated.max(1) as f64)
        } else {
            "NA".into()
        };
        csv.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{},{},{seconds_per_cell}\n",
            sig6(executed.train_error),
            sig6(executed.test_error),
            sig6(report.r_separation.r_hat),
            sig6(report.epsilon),
            grid.join("x"),
            sig6(report.result.acu.mean),
            sig6(report.result.pmi.mean),
            sig6(report.result.pmi.variance),
            sig6(ub),
        ));
    }
    std::fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    print!("{csv}");
    std::io::stdout().flush()?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
