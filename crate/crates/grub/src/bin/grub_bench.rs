//! Benchmark front end: composes workload generators, replication policies,
//! and the simulator into repeatable experiments emitting plot-ready CSV.
//!
//! Exit codes: 0 success, 1 validation error, 2 property failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use grub::decision::{self, MemorylessState};
use grub::gas::GasSchedule;
use grub::sim::{self, Policy, SimConfig, SpBehavior};
use grub::trace::{parse_trace, serialize_trace, Trace};
use grub::workloads::{
    self, KeyDistribution, MixPhaseSpec, PhaseSpec, RatioSpec, ReadsPerWriteDistribution,
    YcsbPhase,
};

#[derive(Parser)]
#[command(name = "grub-bench", about = "Workload-adaptive replication benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy in a spec over the same workload.
    Run(RunArgs),
    /// Sweep one parameter, one summary row per value.
    Sweep(SweepArgs),
    /// Run the competitiveness, integrity, and freshness property suites.
    Verify,
    /// Generate a workload and write it as a trace file.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the spec's policy list (repeatable).
    #[arg(long)]
    policy: Vec<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    policy: Vec<String>,
    /// One of: ratio, k, record_words, data_size.
    #[arg(long)]
    param: String,
    /// Comma-separated parameter values.
    #[arg(long)]
    values: String,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug)]
struct CliError(String);

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSpec {
    name: String,
    workload: WorkloadSpec,
    #[serde(default)]
    policies: Vec<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    config: ConfigOverrides,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum WorkloadSpec {
    Ratio {
        reads_per_write: f64,
        total_ops: u64,
        #[serde(default = "one")]
        key_count: u64,
        #[serde(default = "one")]
        record_words: u64,
    },
    Distribution {
        /// "eth-price-oracle", "btc-relay", or a CSV path.
        table: String,
        writes: u64,
        /// Expand each write into a batch over this many asset keys.
        #[serde(default)]
        asset_count: Option<u64>,
        #[serde(default)]
        batch_size: Option<u64>,
    },
    YcsbMix {
        phases: Vec<String>,
        ops_per_phase: u64,
        key_count: u64,
        #[serde(default = "default_distribution")]
        key_distribution: String,
        #[serde(default = "one")]
        record_words: u64,
    },
    TraceFile {
        path: PathBuf,
    },
}

fn one() -> u64 {
    1
}

fn default_distribution() -> String {
    "zipfian".to_string()
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigOverrides {
    epoch_len: Option<u64>,
    block_time: Option<u64>,
    finality_blocks: Option<u64>,
    propagation_delay: Option<u64>,
    always_digest: Option<bool>,
    gas: Option<GasSchedule>,
}

impl ConfigOverrides {
    fn apply(&self, mut cfg: SimConfig) -> SimConfig {
        if let Some(v) = self.epoch_len {
            cfg.epoch_len = v;
        }
        if let Some(v) = self.block_time {
            cfg.block_time = v;
        }
        if let Some(v) = self.finality_blocks {
            cfg.finality_blocks = v;
        }
        if let Some(v) = self.propagation_delay {
            cfg.propagation_delay = v;
        }
        if let Some(v) = self.always_digest {
            cfg.always_digest = v;
        }
        if let Some(g) = self.gas {
            cfg.schedule = g;
        }
        cfg
    }
}

/// "memoryless:2", "memorizing:8:1", "adaptive-k1:3", "adaptive-k2:3",
/// "bl1", "bl2", "offline-optimal"
fn parse_policy(name: &str) -> Result<PolicyChoice, CliError> {
    let parts: Vec<&str> = name.split(':').collect();
    let bad = || CliError(format!("unknown policy `{}`", name));
    let arg = |i: usize| -> Result<u64, CliError> {
        parts
            .get(i)
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())
    };
    Ok(match parts[0] {
        "memoryless" => PolicyChoice::Sim(Policy::Memoryless(arg(1)? as u32)),
        "memorizing" => PolicyChoice::Sim(Policy::Memorizing(arg(1)? as u32, arg(2)? as u32)),
        "adaptive-k1" => PolicyChoice::Sim(Policy::AdaptiveK1 {
            window: arg(1)? as usize,
        }),
        "adaptive-k2" => PolicyChoice::Sim(Policy::AdaptiveK2 {
            window: arg(1)? as usize,
        }),
        "bl1" => PolicyChoice::Sim(Policy::Bl1),
        "bl2" => PolicyChoice::Sim(Policy::Bl2),
        "offline-optimal" => PolicyChoice::OfflineOptimal,
        _ => return Err(bad()),
    })
}

enum PolicyChoice {
    Sim(Policy),
    OfflineOptimal,
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError(format!("cannot read spec {}: {}", path.display(), e)))?;
    let spec: ExperimentSpec =
        toml::from_str(&text).map_err(|e| CliError(format!("bad spec: {}", e)))?;
    Ok(spec)
}

fn resolve_workload(spec: &WorkloadSpec, seed: u64) -> Result<Trace, CliError> {
    Ok(match spec {
        WorkloadSpec::Ratio {
            reads_per_write,
            total_ops,
            key_count,
            record_words,
        } => workloads::gen_ratio(
            &RatioSpec {
                reads_per_write: *reads_per_write,
                total_ops: *total_ops,
                key_count: *key_count,
                record_words: *record_words,
            },
            seed,
        )?,
        WorkloadSpec::Distribution {
            table,
            writes,
            asset_count,
            batch_size,
        } => {
            let dist = match table.as_str() {
                "eth-price-oracle" => ReadsPerWriteDistribution::eth_price_oracle(),
                "btc-relay" => ReadsPerWriteDistribution::btc_relay(),
                path => ReadsPerWriteDistribution::from_csv(
                    &fs::read_to_string(path)
                        .map_err(|e| CliError(format!("cannot read table {}: {}", path, e)))?,
                )?,
            };
            let base = workloads::gen_from_distribution(&dist, *writes, seed);
            match (asset_count, batch_size) {
                (Some(a), Some(b)) => workloads::multi_asset_feed(&base, *a, *b, seed)?,
                (None, None) => base,
                _ => {
                    return Err(CliError(
                        "asset_count and batch_size must be given together".to_string(),
                    ))
                }
            }
        }
        WorkloadSpec::YcsbMix {
            phases,
            ops_per_phase,
            key_count,
            key_distribution,
            record_words,
        } => {
            let dist = match key_distribution.as_str() {
                "uniform" => KeyDistribution::Uniform,
                "zipfian" => KeyDistribution::Zipfian(0.99),
                "latest" => KeyDistribution::Latest,
                other => return Err(CliError(format!("unknown key distribution `{}`", other))),
            };
            let mut specs = Vec::new();
            for p in phases {
                let phase = match p.as_str() {
                    "A" => YcsbPhase::A,
                    "B" => YcsbPhase::B,
                    "E" => YcsbPhase::E,
                    "F" => YcsbPhase::F,
                    other => return Err(CliError(format!("unknown phase `{}`", other))),
                };
                specs.push(PhaseSpec {
                    phase,
                    op_count: *ops_per_phase,
                    key_count: *key_count,
                    key_distribution: dist,
                    record_words: *record_words,
                });
            }
            workloads::gen_mix(&MixPhaseSpec { phases: specs }, seed)?
        }
        WorkloadSpec::TraceFile { path } => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError(format!("cannot read trace {}: {}", path.display(), e)))?;
            parse_trace(&text)?
        }
    })
}

fn out_dir(cli_out: &Path) -> PathBuf {
    match std::env::var_os("GRUB_OUT_DIR") {
        Some(dir) => PathBuf::from(dir),
        None => cli_out.to_path_buf(),
    }
}

fn policy_slug(name: &str) -> String {
    name.replace(':', "-")
}

struct PolicyOutcome {
    name: String,
    total_gas: u64,
    per_op_gas: f64,
    ledger_csv: Option<String>,
}

fn run_policies(
    trace: &Trace,
    cfg: &SimConfig,
    policy_names: &[String],
) -> Result<Vec<PolicyOutcome>, CliError> {
    let mut outcomes = Vec::new();
    for name in policy_names {
        let outcome = match parse_policy(name)? {
            PolicyChoice::Sim(policy) => {
                let mut c = cfg.clone();
                c.policy = policy;
                let r = sim::run(trace, &c)?;
                PolicyOutcome {
                    name: name.clone(),
                    total_gas: r.ledger.total_gas(),
                    per_op_gas: r.ledger.per_op_gas(),
                    ledger_csv: Some(r.ledger.csv()),
                }
            }
            PolicyChoice::OfflineOptimal => {
                let costs = sim::amortized_costs(&cfg.schedule, 1);
                let (_, gas) = decision::offline_optimal(trace, &costs)?;
                PolicyOutcome {
                    name: name.clone(),
                    total_gas: gas,
                    per_op_gas: gas as f64 / trace.len() as f64,
                    ledger_csv: None,
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

fn baseline_totals(trace: &Trace, cfg: &SimConfig) -> Result<(u64, u64), CliError> {
    let bl1 = sim::run_baseline(trace, cfg, Policy::Bl1)?.ledger.total_gas();
    let bl2 = sim::run_baseline(trace, cfg, Policy::Bl2)?.ledger.total_gas();
    Ok((bl1, bl2))
}

fn savings(baseline: u64, total: u64) -> f64 {
    if baseline == 0 {
        0.0
    } else {
        (baseline as f64 - total as f64) / baseline as f64
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let policies = if args.policy.is_empty() {
        spec.policies.clone()
    } else {
        args.policy.clone()
    };
    if policies.is_empty() {
        return Err(CliError("policy list is empty".to_string()));
    }
    let trace = resolve_workload(&spec.workload, seed)?;
    let cfg = spec.config.apply(SimConfig::default()).validated()?;
    let (bl1, bl2) = baseline_totals(&trace, &cfg)?;
    let outcomes = run_policies(&trace, &cfg, &policies)?;

    let dir = out_dir(&args.out);
    fs::create_dir_all(&dir)?;
    let mut summary = String::from("policy,total_gas,per_op_gas,savings_vs_bl1,savings_vs_bl2\n");
    for o in &outcomes {
        if let Some(csv) = &o.ledger_csv {
            let path = dir.join(format!("{}_{}.csv", spec.name, policy_slug(&o.name)));
            fs::write(path, csv)?;
        }
        summary.push_str(&format!(
            "{},{},{:.2},{:.4},{:.4}\n",
            o.name,
            o.total_gas,
            o.per_op_gas,
            savings(bl1, o.total_gas),
            savings(bl2, o.total_gas),
        ));
    }
    let summary_path = dir.join(format!("{}_summary.csv", spec.name));
    fs::write(&summary_path, &summary)?;
    print!("{}", summary);
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let policies = if args.policy.is_empty() {
        spec.policies.clone()
    } else {
        args.policy.clone()
    };
    if policies.is_empty() {
        return Err(CliError("policy list is empty".to_string()));
    }
    let values: Vec<f64> = args
        .values
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError(format!("bad sweep values `{}`", args.values)))?;
    if values.is_empty() {
        return Err(CliError("sweep needs at least one value".to_string()));
    }

    let mut rows = String::from("param,value,policy,total_gas,per_op_gas\n");
    let mut per_value_baselines: Vec<(f64, f64, f64)> = Vec::new();
    for &value in &values {
        let mut workload_spec = spec.workload.clone_for_sweep()?;
        let mut policies = policies.clone();
        match args.param.as_str() {
            "ratio" => workload_spec.set_ratio(value)?,
            "record_words" => workload_spec.set_record_words(value as u64)?,
            "data_size" => workload_spec.set_key_count(value as u64)?,
            "k" => {
                policies = policies
                    .iter()
                    .map(|p| {
                        if p.starts_with("memoryless") {
                            format!("memoryless:{}", value as u64)
                        } else {
                            p.clone()
                        }
                    })
                    .collect();
            }
            other => return Err(CliError(format!("unknown sweep parameter `{}`", other))),
        }
        let trace = resolve_workload(&workload_spec, seed)?;
        let cfg = spec.config.apply(SimConfig::default()).validated()?;
        let bl1 = sim::run_baseline(&trace, &cfg, Policy::Bl1)?.ledger.per_op_gas();
        let bl2 = sim::run_baseline(&trace, &cfg, Policy::Bl2)?.ledger.per_op_gas();
        per_value_baselines.push((value, bl1, bl2));
        for o in run_policies(&trace, &cfg, &policies)? {
            rows.push_str(&format!(
                "{},{},{},{},{:.2}\n",
                args.param, value, o.name, o.total_gas, o.per_op_gas
            ));
        }
    }

    let dir = out_dir(&args.out);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(format!("{}_sweep_{}.csv", spec.name, args.param)), &rows)?;
    print!("{}", rows);
    if args.param == "ratio" {
        let crossover = per_value_baselines
            .iter()
            .find(|(_, bl1, bl2)| bl2 <= bl1)
            .map(|(v, _, _)| *v);
        let line = match crossover {
            Some(v) => format!("crossover_ratio,{}\n", v),
            None => "crossover_ratio,none\n".to_string(),
        };
        fs::write(dir.join(format!("{}_crossover.csv", spec.name)), &line)?;
        print!("{}", line);
    }
    Ok(())
}

impl WorkloadSpec {
    fn clone_for_sweep(&self) -> Result<WorkloadSpec, CliError> {
        match self {
            WorkloadSpec::Ratio {
                reads_per_write,
                total_ops,
                key_count,
                record_words,
            } => Ok(WorkloadSpec::Ratio {
                reads_per_write: *reads_per_write,
                total_ops: *total_ops,
                key_count: *key_count,
                record_words: *record_words,
            }),
            _ => Err(CliError(
                "sweeps require a ratio workload spec".to_string(),
            )),
        }
    }

    fn set_ratio(&mut self, value: f64) -> Result<(), CliError> {
        match self {
            WorkloadSpec::Ratio { reads_per_write, .. } => {
                *reads_per_write = value;
                Ok(())
            }
            _ => Err(CliError("ratio sweep requires a ratio workload".to_string())),
        }
    }

    fn set_record_words(&mut self, value: u64) -> Result<(), CliError> {
        match self {
            WorkloadSpec::Ratio { record_words, .. } => {
                *record_words = value.max(1);
                Ok(())
            }
            _ => Err(CliError("record_words sweep requires a ratio workload".to_string())),
        }
    }

    fn set_key_count(&mut self, value: u64) -> Result<(), CliError> {
        match self {
            WorkloadSpec::Ratio { key_count, .. } => {
                *key_count = value.max(1);
                Ok(())
            }
            _ => Err(CliError("data_size sweep requires a ratio workload".to_string())),
        }
    }
}

/// One named property of the verify suite.
struct Property {
    name: &'static str,
    run: fn() -> Result<(), String>,
}

fn prop_memoryless_competitive() -> Result<(), String> {
    let schedule = GasSchedule::default();
    let costs = sim::amortized_costs(&schedule, 1);
    let k = schedule.default_k();
    for n in 1..=50u32 {
        let trace = decision::worst_case_memoryless(k, n).map_err(|e| e.to_string())?;
        let mut decider = MemorylessState::new(k).map_err(|e| e.to_string())?;
        let online = decision::replay_gas(&trace, &mut decider, &costs).map_err(|e| e.to_string())?;
        let (_, opt) = decision::offline_optimal(&trace, &costs).map_err(|e| e.to_string())?;
        if online > 2 * opt + schedule.tx_base {
            return Err(format!(
                "n={}: online {} > 2*opt {} + base (seed n={})",
                n, online, opt, n
            ));
        }
    }
    Ok(())
}

fn prop_adversarial_sp_rejected() -> Result<(), String> {
    let trace = workloads::gen_ratio(
        &RatioSpec {
            reads_per_write: 4.0,
            total_ops: 200,
            key_count: 4,
            record_words: 1,
        },
        13,
    )
    .map_err(|e| e.to_string())?;
    for behavior in [SpBehavior::ForgeValue, SpBehavior::StaleServe] {
        let cfg = SimConfig {
            sp_behavior: behavior,
            ..SimConfig::default()
        };
        let r = sim::run(&trace, &cfg).map_err(|e| e.to_string())?;
        if r.integrity_failures == 0 {
            return Err(format!("{:?} produced no rejected proofs (seed 13)", behavior));
        }
        if behavior == SpBehavior::ForgeValue && r.delivered_ok > 0 {
            return Err("forged deliver accepted (seed 13)".to_string());
        }
    }
    Ok(())
}

fn prop_freshness() -> Result<(), String> {
    for seed in 0..10u64 {
        let trace = workloads::gen_ratio(
            &RatioSpec {
                reads_per_write: 3.0,
                total_ops: 300,
                key_count: 8,
                record_words: 1,
            },
            seed,
        )
        .map_err(|e| e.to_string())?;
        let cfg = SimConfig::default();
        let r = sim::run(&trace, &cfg).map_err(|e| e.to_string())?;
        if !sim::check_freshness(&r, &cfg) {
            return Err(format!("freshness violated (seed {})", seed));
        }
    }
    Ok(())
}

fn cmd_verify() -> Result<bool, CliError> {
    let properties = [
        Property {
            name: "memoryless-2-competitive",
            run: prop_memoryless_competitive,
        },
        Property {
            name: "adversarial-sp-rejected",
            run: prop_adversarial_sp_rejected,
        },
        Property {
            name: "freshness-bound",
            run: prop_freshness,
        },
    ];
    let mut all_ok = true;
    for p in &properties {
        match (p.run)() {
            Ok(()) => println!("PASS {}", p.name),
            Err(msg) => {
                all_ok = false;
                println!("FAIL {}: {}", p.name, msg);
            }
        }
    }
    Ok(all_ok)
}

fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let spec = load_spec(&args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let trace = resolve_workload(&spec.workload, seed)?;
    let dir = out_dir(&args.out);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("{}.trace", spec.name));
    fs::write(&path, serialize_trace(&trace))?;
    // quick composition summary for the log
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for op in &trace {
        let k = match op {
            grub::trace::Operation::Write { .. } => "writes",
            grub::trace::Operation::Read { .. } => "reads",
            grub::trace::Operation::Scan { .. } => "scans",
        };
        *counts.entry(k).or_insert(0) += 1;
    }
    println!(
        "wrote {} ({} ops: {:?})",
        path.display(),
        trace.len(),
        counts
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                eprintln!("{}", e);
                return ExitCode::from(1);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args).map(|_| true),
        Command::Sweep(args) => cmd_sweep(args).map(|_| true),
        Command::Verify => cmd_verify(),
        Command::Gen(args) => cmd_gen(args).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(CliError(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
    }
}
