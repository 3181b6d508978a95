use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wsn_consensus::experiment::{
    build_scenario, run_convergence, run_optimize, run_selfcheck, run_variance_sweep,
    trial_seeds, ExperimentConfig, Fault,
};
use wsn_consensus::network::GainDomain;
use wsn_consensus::Result;

#[derive(Parser)]
#[command(name = "wsn-consensus", version, about = "Decentralized ML estimation and gain optimization for sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a connected graph and channel model.
    Topology(Common),
    /// Optimize sensor gains and write the optimizer trace.
    Optimize(Common),
    /// Run decentralized estimation and write the per-node trace.
    Consensus(Common),
    /// Compare ML variance of optimized, all-ones and random gains.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated network sizes.
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
    },
    /// Run the randomized invariant suite.
    Selfcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, hide = true, default_value = "none")]
        inject_fault: FaultArg,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed of all trial randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Trials per network size (sweep only).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    constraint: Option<ConstraintArg>,
    /// ADMM penalty.
    #[arg(long)]
    rho: Option<f64>,
    /// Outer stopping tolerance of the optimizer.
    #[arg(long)]
    xi: Option<f64>,
    /// Number of sensors.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstraintArg {
    FixedEnergy,
    Unimodular,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    LambdaSign,
    Hadamard,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(c) = self.constraint {
            cfg.constraint = match c {
                ConstraintArg::FixedEnergy => GainDomain::FixedEnergy,
                ConstraintArg::Unimodular => GainDomain::Unimodular,
            };
        }
        if let Some(r) = self.rho {
            cfg.admm.rho = r;
        }
        if let Some(x) = self.xi {
            cfg.opt.xi = x;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn writer(&self, cfg: &ExperimentConfig) -> Result<Writer> {
        fs::create_dir_all(&self.out_dir)?;
        let w = Writer(self.out_dir.clone());
        w.write("config.json", &(cfg.to_json() + "\n"))?;
        Ok(w)
    }
}

struct Writer(PathBuf);

impl Writer {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        fs::write(self.0.join(name), contents)?;
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}

fn json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn topology(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let out = common.writer(&cfg)?;
    let model = build_scenario(&cfg, cfg.n, &trial_seeds(cfg.master_seed, cfg.n, 0))?;
    model.graph.save(&out.path("graph.json"))?;
    model.save(&out.path("model.json"))?;
    println!(
        "n={} edges={} -> {}",
        model.node_count(),
        model.graph.edge_count(),
        display(&out.0)
    );
    Ok(())
}

fn optimize(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let out = common.writer(&cfg)?;
    let res = run_optimize(&cfg)?;
    for (name, contents) in res.files() {
        out.write(&name, &contents)?;
    }
    out.write("plan.json", &json(&res.outcome.plan.to_file())?)?;
    res.model.graph.save(&out.path("graph.json"))?;
    res.model.save(&out.path("model.json"))?;
    println!(
        "variance {} -> {} in {} round(s)",
        res.outcome.initial_variance(),
        res.outcome.final_variance(),
        res.outcome.rounds.len()
    );
    Ok(())
}

fn consensus(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let out = common.writer(&cfg)?;
    let res = run_convergence(&cfg)?;
    out.write("consensus_trace.csv", &res.trace_csv())?;
    out.write("reference.csv", &res.reference_csv())?;
    out.write("gains.csv", &wsn_consensus::optimizer::gains_csv(&res.gains))?;
    println!(
        "theta_ml={} iterations={} final disagreement={:e}",
        res.reference,
        res.trace.iterations(),
        res.trace.final_disagreement(res.reference)
    );
    Ok(())
}

fn sweep(common: &Common, n_list: &Option<Vec<usize>>) -> Result<()> {
    let mut cfg = common.config()?;
    if let Some(l) = n_list {
        cfg.n_list = l.clone();
    }
    let out = common.writer(&cfg)?;
    let res = run_variance_sweep(&cfg)?;
    out.write("sweep_summary.csv", &res.summary_csv())?;
    out.write("sweep_trials.csv", &res.trials_csv())?;
    print!("{}", res.summary_csv());
    Ok(())
}

fn selfcheck(common: &Common, fault: FaultArg) -> Result<bool> {
    let seed = common.seed.unwrap_or(0);
    let fault = match fault {
        FaultArg::None => Fault::None,
        FaultArg::LambdaSign => Fault::LambdaSignFlip,
        FaultArg::Hadamard => Fault::HadamardMatrixProduct,
    };
    let report = run_selfcheck(seed, fault);
    print!("{}", report.summary());
    if let Some(f) = report.first_failure() {
        eprintln!("selfcheck failed: {}", f.name);
        return Ok(false);
    }
    Ok(true)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Topology(c) => topology(c).map(|_| true),
        Command::Optimize(c) => optimize(c).map(|_| true),
        Command::Consensus(c) => consensus(c).map(|_| true),
        Command::Sweep { common, n_list } => sweep(common, n_list).map(|_| true),
        Command::Selfcheck {
            common,
            inject_fault,
        } => selfcheck(common, *inject_fault),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
