//! Parameter sweeps comparing the solver and the surrogate against the
//! baseline schemes, a per-scenario text report, and surrogate evaluation on
//! a dataset split.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::config::{default_groups, ScenarioConfig};
use crate::dataset::{instance_features, scenario_seed, DatasetFile, Split};
use crate::dnn::{predict, rmse, NetworkWeights};
use crate::error::{Error, Result};
use crate::optimizer::{power_feasible, UtilityMode};
use crate::pipeline::Instance;
use crate::rates::{PowerAllocation, RateReport};

const MAX_DRAWS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    /// Beam waist in micrometres.
    BeamWaist,
    /// Number of users; groups follow `max(1, K / 3)`.
    Users,
    /// Median single-user SNR in dB, reached by scaling the power budget.
    Snr,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::BeamWaist => "beamwaist",
            SweepVariable::Users => "users",
            SweepVariable::Snr => "snr",
        }
    }

    /// Inclusive admissible range of sweep values.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            SweepVariable::BeamWaist => (5.0, 20.0),
            SweepVariable::Users => (2.0, 10.0),
            SweepVariable::Snr => (5.0, 35.0),
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepVariable::BeamWaist => vec![5.0, 10.0, 15.0, 20.0],
            SweepVariable::Users => vec![2.0, 4.0, 6.0, 8.0, 10.0],
            SweepVariable::Snr => vec![5.0, 15.0, 25.0, 35.0],
        }
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beamwaist" => Ok(SweepVariable::BeamWaist),
            "users" => Ok(SweepVariable::Users),
            "snr" => Ok(SweepVariable::Snr),
            other => Err(Error::Config(format!("unknown sweep variable {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Opt,
    Dnn,
    HrsUniform,
    Rs,
    Oma,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Opt, Scheme::Dnn, Scheme::HrsUniform, Scheme::Rs, Scheme::Oma];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Opt => "opt",
            Scheme::Dnn => "dnn",
            Scheme::HrsUniform => "hrs-uniform",
            Scheme::Rs => "rs",
            Scheme::Oma => "oma",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    pub master_seed: u64,
    /// Utility the `opt` scheme maximises.
    pub opt_mode: UtilityMode,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, trials: usize, master_seed: u64) -> Self {
        Self {
            variable,
            values: variable.default_values(),
            trials,
            schemes: vec![Scheme::Opt, Scheme::HrsUniform, Scheme::Rs, Scheme::Oma],
            master_seed,
            opt_mode: UtilityMode::Sum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::domain("sweep range is empty"));
        }
        if self.trials == 0 {
            return Err(Error::domain("sweep needs at least one trial per point"));
        }
        if self.schemes.is_empty() {
            return Err(Error::domain("sweep needs at least one scheme"));
        }
        let (lo, hi) = self.variable.bounds();
        for &v in &self.values {
            if !(v >= lo && v <= hi) {
                return Err(Error::domain(format!(
                    "{} value {v} outside [{lo}, {hi}]",
                    self.variable.name()
                )));
            }
            if self.variable == SweepVariable::Users && v.fract() != 0.0 {
                return Err(Error::domain(format!("user count {v} is not an integer")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: f64,
    pub scheme: Scheme,
    pub mean_sum_rate: f64,
    pub std_sum_rate: f64,
    pub trials: usize,
}

/// Scenario space at one sweep point.
pub fn point_config(base: &ScenarioConfig, variable: SweepVariable, value: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    match variable {
        SweepVariable::BeamWaist => cfg.constants.beam_waist = value / 1e6,
        SweepVariable::Users => {
            let k = value as usize;
            cfg.users.count = k;
            cfg.users.groups = Some(default_groups(k));
            cfg.users.positions = None;
            cfg.users.demands = None;
        }
        SweepVariable::Snr => {}
    }
    cfg
}

/// Total power at which the instance's median single-user SNR equals `snr_db`.
pub fn power_for_snr(inst: &Instance, snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0) / inst.median_snr(1.0)
}

/// Instance for one trial: the first connected draw from the trial's seeds.
pub fn trial_instance(cfg: &ScenarioConfig, master_seed: u64, trial: u64) -> Result<Instance> {
    for attempt in 0..MAX_DRAWS {
        match Instance::from_config(cfg, scenario_seed(master_seed, trial, attempt)) {
            Err(Error::DisconnectedUser(_)) => continue,
            other => return other,
        }
    }
    Err(Error::Generation(format!("trial {trial}: no connected scenario in {MAX_DRAWS} draws")))
}

/// Sum rate of one scheme on one instance.
pub fn scheme_sum_rate(
    inst: &Instance,
    scheme: Scheme,
    opt_mode: UtilityMode,
    seed: u64,
    model: Option<&NetworkWeights>,
) -> Result<f64> {
    Ok(match scheme {
        Scheme::Opt => inst.solve(opt_mode, seed)?.sum_rate,
        Scheme::Dnn => {
            let model = model.ok_or_else(|| Error::Config("scheme dnn needs a model".into()))?;
            let p = predict(model, &instance_features(inst), &inst.plan, &inst.constraints)?;
            inst.hrs_rates(&p.allocation)?.sum_rate
        }
        Scheme::HrsUniform => inst.uniform_hrs()?.sum_rate,
        Scheme::Rs => inst.conventional_rs()?.sum_rate,
        Scheme::Oma => inst.oma()?.sum_rate,
    })
}

fn trial_rates(
    spec: &SweepSpec,
    cfg: &ScenarioConfig,
    value: f64,
    trial: usize,
    model: Option<&NetworkWeights>,
) -> Result<Vec<f64>> {
    let mut inst = trial_instance(cfg, spec.master_seed, trial as u64)?;
    if spec.variable == SweepVariable::Snr {
        let p = power_for_snr(&inst, value);
        inst = inst.with_total_power(p);
    }
    let seed = inst.scenario.rng_seed;
    spec.schemes
        .iter()
        .map(|&s| scheme_sum_rate(&inst, s, spec.opt_mode, seed, model))
        .collect()
}

/// Mean and sample standard deviation of sum rates per point and scheme.
/// Trials reuse the same seeds at every point.
pub fn run_sweep(spec: &SweepSpec, base: &ScenarioConfig, model: Option<&NetworkWeights>) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let wants_dnn = spec.schemes.contains(&Scheme::Dnn);
    if wants_dnn && model.is_none() {
        return Err(Error::Config("scheme dnn requires a model".into()));
    }
    let mut rows = Vec::new();
    for &value in &spec.values {
        let cfg = point_config(base, spec.variable, value);
        cfg.validate()?;
        if let (true, Some(m)) = (wants_dnn, model) {
            if m.spec.users != cfg.users.count || m.spec.groups != cfg.num_groups() {
                return Err(Error::Dimension(format!(
                    "model trained for K={}, G={}; sweep point has K={}, G={}",
                    m.spec.users,
                    m.spec.groups,
                    cfg.users.count,
                    cfg.num_groups()
                )));
            }
        }
        let per_trial: Vec<Vec<f64>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| trial_rates(spec, &cfg, value, t, model))
            .collect::<Result<_>>()?;
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            let xs: Vec<f64> = per_trial.iter().map(|r| r[si]).collect();
            let (mean, std) = mean_std(&xs);
            rows.push(SweepRow {
                variable: spec.variable,
                value,
                scheme,
                mean_sum_rate: mean,
                std_sum_rate: std,
                trials: spec.trials,
            });
        }
    }
    Ok(rows)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("variable,value,scheme,mean_sum_rate,std_sum_rate,trials\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{}",
            r.variable.name(),
            r.value,
            r.scheme.name(),
            r.mean_sum_rate,
            r.std_sum_rate,
            r.trials
        );
    }
    out
}

fn fmt_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("[{}]", items.join(", "))
}

fn write_scheme(out: &mut String, name: &str, alloc: Option<&PowerAllocation>, r: &RateReport) {
    let _ = writeln!(out, "scheme {name}");
    if let Some(a) = alloc {
        let _ = writeln!(out, "  p_oc = {}", a.p_oc);
        let _ = writeln!(out, "  p_ic = {}", fmt_list(&a.p_ic));
        let _ = writeln!(out, "  p_p = {}", fmt_list(&a.p_p));
    }
    let _ = writeln!(out, "  r_oc = {}", r.r_oc);
    if !r.r_ic.is_empty() {
        let _ = writeln!(out, "  r_ic = {}", fmt_list(&r.r_ic));
    }
    let _ = writeln!(out, "  r_p = {}", fmt_list(&r.r_p));
    let _ = writeln!(out, "  sum_rate = {}", r.sum_rate);
}

/// Human-readable comparison of every scheme on the scenario drawn with `seed`.
pub fn run_report(cfg: &ScenarioConfig, seed: u64, mode: UtilityMode, model: Option<&NetworkWeights>) -> Result<String> {
    let inst = Instance::from_config(cfg, seed)?;
    let mut out = String::new();
    let k = inst.plan.num_users();
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "users = {k}, groups = {}, access points = {}", inst.plan.num_groups, inst.channel.num_aps());
    let _ = writeln!(out, "demands = {}", fmt_list(&inst.scenario.demands));
    for (g, members) in inst.plan.group_members.iter().enumerate() {
        let names: Vec<String> = members.iter().map(|u| (u + 1).to_string()).collect();
        let _ = writeln!(out, "group {}: users {}", g + 1, names.join(" "));
    }
    if inst.precoders.any_fallback() {
        let _ = writeln!(out, "note: some groups could not be separated by the outer precoder");
    }

    let opt = inst.solve(mode, seed)?;
    let opt_rates = inst.hrs_rates(&opt.allocation)?;
    let _ = writeln!(out, "utility mode = {mode}");
    write_scheme(&mut out, "opt", Some(&opt.allocation), &opt_rates);
    let _ = writeln!(out, "  utility = {}", opt.utility);
    let _ = writeln!(out, "  feasible = {}, qos_met = {}", opt.feasible, opt.qos_met);

    if let Some(m) = model {
        let p = predict(m, &instance_features(&inst), &inst.plan, &inst.constraints)?;
        let r = inst.hrs_rates(&p.allocation)?;
        write_scheme(&mut out, "dnn", Some(&p.allocation), &r);
        let _ = writeln!(out, "  total_discrepancy = {}", p.total_discrepancy);
        let gap = 1.0 - r.sum_rate / opt_rates.sum_rate;
        let _ = writeln!(out, "dnn_gap = {gap}");
    }
    let uni = inst.uniform_hrs_allocation()?;
    write_scheme(&mut out, "hrs-uniform", Some(&uni), &inst.hrs_rates(&uni)?);
    write_scheme(&mut out, "rs", None, &inst.conventional_rs()?);
    write_scheme(&mut out, "oma", None, &inst.oma()?);
    Ok(out)
}

/// Per-sample comparison of surrogate and solver labels.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub sample_id: usize,
    pub solver_sum_rate: f64,
    pub dnn_sum_rate: f64,
    pub solver_utility: f64,
    pub dnn_utility: f64,
    /// RMSE between normalised prediction and label.
    pub rmse: f64,
    pub feasible: bool,
    pub total_discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub rows: Vec<EvalRow>,
    pub mean_rmse: f64,
    /// Mean over samples of `dnn_sum_rate / solver_sum_rate`.
    pub mean_ratio: f64,
    pub mean_utility_gap: f64,
    pub feasible_fraction: f64,
}

/// Evaluate a model on one split of a dataset against the stored labels.
pub fn evaluate_model(data: &DatasetFile, model: &NetworkWeights, split: Split) -> Result<EvalSummary> {
    if model.spec.users != data.k || model.spec.groups != data.g {
        return Err(Error::Dimension(format!(
            "model trained for K={}, G={}; dataset has K={}, G={}",
            model.spec.users, model.spec.groups, data.k, data.g
        )));
    }
    let idx = match split {
        Split::Train => &data.split_indices.train,
        Split::Validation => &data.split_indices.validation,
        Split::Test => &data.split_indices.test,
    };
    if idx.is_empty() {
        return Err(Error::domain("evaluation split is empty"));
    }
    let rows: Vec<EvalRow> = idx
        .par_iter()
        .map(|&i| {
            let inst = data.instance(i)?;
            let s = &data.samples[i];
            let p = predict(model, &s.features, &inst.plan, &inst.constraints)?;
            let r = inst.hrs_rates(&p.allocation)?;
            let label = data.label_allocation(i);
            let label_rates = inst.hrs_rates(&label)?;
            let out = model.forward(&data.input(i)[..model.spec.input_dim()])?;
            Ok(EvalRow {
                sample_id: i,
                solver_sum_rate: label_rates.sum_rate,
                dnn_sum_rate: r.sum_rate,
                solver_utility: crate::optimizer::utility(&label_rates, data.utility_mode),
                dnn_utility: crate::optimizer::utility(&r, data.utility_mode),
                rmse: rmse(&out, &data.target(i))?,
                feasible: power_feasible(&p.allocation, &inst.plan, &inst.constraints),
                total_discrepancy: p.total_discrepancy,
            })
        })
        .collect::<Result<_>>()?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    Ok(EvalSummary {
        mean_rmse: mean(&|r| r.rmse),
        mean_ratio: mean(&|r| r.dnn_sum_rate / r.solver_sum_rate),
        mean_utility_gap: mean(&|r| r.solver_utility - r.dnn_utility),
        feasible_fraction: rows.iter().filter(|r| r.feasible).count() as f64 / n,
        rows,
    })
}

pub fn eval_csv(summary: &EvalSummary) -> String {
    let mut out = String::from(
        "sample_id,solver_sum_rate,dnn_sum_rate,solver_utility,dnn_utility,rmse,feasible,total_discrepancy\n",
    );
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.sample_id,
            r.solver_sum_rate,
            r.dnn_sum_rate,
            r.solver_utility,
            r.dnn_utility,
            r.rmse,
            r.feasible,
            r.total_discrepancy
        );
    }
    let _ = writeln!(out, "mean_rmse={:.16e}", summary.mean_rmse);
    let _ = writeln!(out, "mean_sum_rate_ratio={:.16e}", summary.mean_ratio);
    let _ = writeln!(out, "mean_utility_gap={:.16e}", summary.mean_utility_gap);
    let _ = writeln!(out, "feasible_fraction={:.16e}", summary.feasible_fraction);
    out
}
