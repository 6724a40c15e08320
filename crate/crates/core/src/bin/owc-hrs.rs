use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use owc_hrs::config::ScenarioConfig;
use owc_hrs::dataset::{generate, DatasetFile, FeatureMode, GenerateOptions, Split};
use owc_hrs::dnn::{train, NetworkSpec, NetworkWeights, TrainConfig};
use owc_hrs::experiments::{eval_csv, evaluate_model, run_report, run_sweep, sweep_csv, Scheme, SweepSpec, SweepVariable};
use owc_hrs::optimizer::UtilityMode;
use owc_hrs::pipeline::Instance;
use owc_hrs::rates::RateReport;
use owc_hrs::{Error, Result};

/// Hierarchical rate-splitting power allocation for laser-based optical
/// wireless networks.
#[derive(Parser)]
#[command(name = "owc-hrs", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scenario seed, or master seed for dataset and sweep runs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Channel gains of one scenario.
    Channel,
    /// Per-message SINRs and rates of one scheme.
    Rates {
        /// hrs (solver allocation), hrs-uniform, rs or oma.
        #[arg(long, default_value = "hrs-uniform")]
        scheme: String,
        #[arg(long, default_value = "log-message")]
        utility: UtilityMode,
    },
    /// Solve the power allocation of one scenario.
    Optimize {
        #[arg(long, default_value = "log-message")]
        utility: UtilityMode,
    },
    /// Generate a labelled dataset (CSV plus `.meta.json` sidecar).
    GenDataset {
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value = "log-message")]
        utility: UtilityMode,
        #[arg(long, default_value = "demand-and-gain")]
        features: FeatureMode,
    },
    /// Train the surrogate network on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
    },
    /// Compare a trained model with the dataset labels.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train, validation or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sweep beam waist, user count or SNR and average sum rates.
    Sweep {
        /// beamwaist, users or snr.
        #[arg(long)]
        variable: SweepVariable,
        /// Comma-separated sweep values (um, users or dB).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Comma-separated subset of opt, dnn, hrs-uniform, rs, oma.
        #[arg(long, value_delimiter = ',', default_value = "opt,hrs-uniform,rs,oma")]
        schemes: Vec<Scheme>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Utility maximised by the opt scheme.
        #[arg(long, default_value = "sum")]
        utility: UtilityMode,
    },
    /// Human-readable comparison of all schemes on one scenario.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "log-message")]
        utility: UtilityMode,
    },
}

/// Result of a subcommand: exit 2 when the allocation problem is infeasible.
enum Outcome {
    Done,
    Infeasible,
}

fn load_config(g: &Global) -> Result<ScenarioConfig> {
    match &g.config {
        Some(p) => ScenarioConfig::from_path(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn required_out(g: &Global) -> Result<&Path> {
    g.out
        .as_deref()
        .ok_or_else(|| Error::Config("this subcommand needs --out".into()))
}

fn rates_csv(r: &RateReport, inst: &Instance, scheme: &str) -> String {
    let mut out = String::from("message,user,group,sinr,rate\n");
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let plan = &inst.plan;
    if !r.sinr_oc.is_empty() {
        let _ = writeln!(out, "oc,*,*,{:.16e},{:.16e}", min(&r.sinr_oc), r.r_oc);
    }
    for (g, members) in plan.group_members.iter().enumerate() {
        if let Some(&rate) = r.r_ic.get(g) {
            let s: Vec<f64> = members.iter().map(|&k| r.sinr_ic[k]).collect();
            let _ = writeln!(out, "ic,*,{},{:.16e},{:.16e}", g + 1, min(&s), rate);
        }
    }
    for (k, (s, rate)) in r.sinr_p.iter().zip(&r.r_p).enumerate() {
        let group = match scheme {
            "oma" => "*".to_string(),
            "rs" => "1".to_string(),
            _ => (plan.assignment[k] + 1).to_string(),
        };
        let _ = writeln!(out, "p,{},{group},{s:.16e},{rate:.16e}", k + 1);
    }
    let _ = writeln!(out, "sum_rate={:.16e}", r.sum_rate);
    out
}

fn run(cli: Cli) -> Result<Outcome> {
    let g = &cli.global;
    if g.threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))?;

    match cli.command {
        Command::Channel => {
            let cfg = load_config(g)?;
            let inst = Instance::from_config(&cfg, g.seed)?;
            emit(g.out.as_deref(), &inst.channel.to_csv())?;
        }
        Command::Rates { scheme, utility } => {
            let cfg = load_config(g)?;
            let inst = Instance::from_config(&cfg, g.seed)?;
            let report = match scheme.as_str() {
                "hrs" => {
                    let res = inst.solve(utility, g.seed)?;
                    inst.hrs_rates(&res.allocation)?
                }
                "hrs-uniform" => inst.uniform_hrs()?,
                "rs" => inst.conventional_rs()?,
                "oma" => inst.oma()?,
                other => return Err(Error::Config(format!("unknown scheme {other:?}"))),
            };
            emit(g.out.as_deref(), &rates_csv(&report, &inst, &scheme))?;
        }
        Command::Optimize { utility } => {
            let cfg = load_config(g)?;
            let inst = Instance::from_config(&cfg, g.seed)?;
            let res = inst.solve(utility, g.seed)?;
            let a = &res.allocation;
            let mut out = String::from("slot,index,power\n");
            let _ = writeln!(out, "oc,1,{:.16e}", a.p_oc);
            for (i, p) in a.p_ic.iter().enumerate() {
                let _ = writeln!(out, "ic,{},{p:.16e}", i + 1);
            }
            for (i, p) in a.p_p.iter().enumerate() {
                let _ = writeln!(out, "p,{},{p:.16e}", i + 1);
            }
            let _ = writeln!(out, "utility={:.16e}", res.utility);
            let _ = writeln!(out, "sum_rate={:.16e}", res.sum_rate);
            let _ = writeln!(out, "feasible={}", res.feasible);
            let _ = writeln!(out, "qos_met={}", res.qos_met);
            emit(g.out.as_deref(), &out)?;
            if !(res.feasible && res.qos_met) {
                return Ok(Outcome::Infeasible);
            }
        }
        Command::GenDataset { n, utility, features } => {
            let cfg = load_config(g)?;
            let out = required_out(g)?;
            let opts = GenerateOptions {
                n,
                master_seed: g.seed,
                utility_mode: utility,
                feature_mode: features,
                workers: g.threads,
            };
            let data = generate(&cfg, &opts)?;
            data.save(out)?;
        }
        Command::Train { data, epochs, batch, lr } => {
            let out = required_out(g)?;
            let ds = DatasetFile::load(&data)?;
            let spec = NetworkSpec::new(ds.k, ds.g, ds.feature_mode);
            let cfg = TrainConfig {
                epochs,
                batch_size: batch,
                learning_rate: lr,
                seed: g.seed,
            };
            let res = train(&ds, &spec, &cfg)?;
            res.weights.save(out)?;
            let mut hist = String::from("epoch,train_loss,validation_loss\n");
            for e in &res.history {
                let _ = writeln!(hist, "{},{:.16e},{:.16e}", e.epoch, e.train, e.validation);
            }
            let mut loss_path = out.as_os_str().to_owned();
            loss_path.push(".loss.csv");
            emit(Some(Path::new(&loss_path)), &hist)?;
        }
        Command::Eval { model, data, split } => {
            let split = match split.as_str() {
                "train" => Split::Train,
                "validation" => Split::Validation,
                "test" => Split::Test,
                other => return Err(Error::Config(format!("unknown split {other:?}"))),
            };
            let w = NetworkWeights::load(&model)?;
            let ds = DatasetFile::load(&data)?;
            let summary = evaluate_model(&ds, &w, split)?;
            emit(g.out.as_deref(), &eval_csv(&summary))?;
        }
        Command::Sweep {
            variable,
            values,
            trials,
            schemes,
            model,
            utility,
        } => {
            let cfg = load_config(g)?;
            let weights = model.as_deref().map(NetworkWeights::load).transpose()?;
            let spec = SweepSpec {
                variable,
                values: values.unwrap_or_else(|| variable.default_values()),
                trials,
                schemes,
                master_seed: g.seed,
                opt_mode: utility,
            };
            let rows = run_sweep(&spec, &cfg, weights.as_ref())?;
            emit(g.out.as_deref(), &sweep_csv(&rows))?;
        }
        Command::Report { model, utility } => {
            let cfg = load_config(g)?;
            let weights = model.as_deref().map(NetworkWeights::load).transpose()?;
            let text = run_report(&cfg, g.seed, utility, weights.as_ref())?;
            emit(g.out.as_deref(), &text)?;
        }
    }
    Ok(Outcome::Done)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Infeasible) => ExitCode::from(2),
        Err(e @ Error::Infeasible(_)) => {
            eprintln!("owc-hrs: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("owc-hrs: {e}");
            ExitCode::from(1)
        }
    }
}
