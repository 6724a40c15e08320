//! Power allocation over the inner-common and private messages with a fixed
//! outer-common power.
//!
//! The variable vector is `x = (p_ic[0..G], p_p[0..K])`. The feasible set is
//! the box `0 <= p_p <= user_cap`, the per-group caps, and the total budget
//! `p_oc + sum(x) <= P_T`. The minimum-rate requirement enters the objective
//! as a quadratic penalty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grouping::GroupingPlan;
use crate::rates::{power_split, LinkGains, PowerAllocation, RateReport, HRS_ALPHA};

/// Feasibility tolerance on every power constraint.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Offset inside the per-message logarithm of the proportional-fair utility.
pub const LOG_EPSILON: f64 = 1e-6;
/// Weight of the minimum-rate penalty.
pub const QOS_PENALTY: f64 = 100.0;
const RANDOM_STARTS: usize = 8;
const MAX_ITERATIONS: usize = 5000;
const STALL_WINDOW: usize = 20;
const REL_IMPROVEMENT_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;
const INITIAL_STEP: f64 = 0.1;
const MIN_STEP: f64 = 1e-12;
const ACTIVE_TOL: f64 = 1e-9;
const TANGENT_SWEEPS: usize = 8;
const RIDGE_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    /// Total budget `P_T`, W.
    pub p_total_cap: f64,
    /// Fixed outer-common power, W.
    pub p_oc_fixed: f64,
    /// Cap on `p_ic[g] + sum of the group's privates`, per group.
    pub group_caps: Vec<f64>,
    /// Cap on each private power.
    pub user_cap: f64,
    /// Minimum sum rate, bit/s/Hz.
    pub r_min: f64,
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<()> {
        let caps_ok = self.p_total_cap >= 0.0
            && self.p_oc_fixed >= 0.0
            && self.user_cap >= 0.0
            && self.group_caps.iter().all(|&c| c >= 0.0);
        if !caps_ok {
            return Err(Error::domain(format!("all caps must be >= 0: {self:?}")));
        }
        if self.p_oc_fixed > self.p_total_cap {
            return Err(Error::Infeasible(format!(
                "fixed outer-common power {} exceeds the budget {}",
                self.p_oc_fixed, self.p_total_cap
            )));
        }
        Ok(())
    }

    /// Budget left for the variable messages.
    pub fn variable_budget(&self) -> f64 {
        self.p_total_cap - self.p_oc_fixed
    }

    /// Same constraints with every power scaled by `c`.
    pub fn scaled_power(&self, c: f64) -> Self {
        Self {
            p_total_cap: self.p_total_cap * c,
            p_oc_fixed: self.p_oc_fixed * c,
            group_caps: self.group_caps.iter().map(|g| g * c).collect(),
            user_cap: self.user_cap * c,
            r_min: self.r_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UtilityMode {
    /// Plain sum of message rates.
    Sum,
    /// Sum of `ln(rate + eps)` over every message (proportional fairness).
    #[default]
    LogMessage,
}

impl std::str::FromStr for UtilityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(UtilityMode::Sum),
            "log-message" => Ok(UtilityMode::LogMessage),
            other => Err(Error::Config(format!(
                "unknown utility mode {other:?} (expected \"sum\" or \"log-message\")"
            ))),
        }
    }
}

impl std::fmt::Display for UtilityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            UtilityMode::Sum => "sum",
            UtilityMode::LogMessage => "log-message",
        })
    }
}

fn utility_of(r_oc: f64, r_ic: &[f64], r_p: &[f64], mode: UtilityMode) -> f64 {
    match mode {
        UtilityMode::Sum => r_oc + r_ic.iter().sum::<f64>() + r_p.iter().sum::<f64>(),
        UtilityMode::LogMessage => {
            let l = |r: f64| (r + LOG_EPSILON).ln();
            l(r_oc) + r_ic.iter().map(|&r| l(r)).sum::<f64>() + r_p.iter().map(|&r| l(r)).sum::<f64>()
        }
    }
}

pub fn utility(report: &RateReport, mode: UtilityMode) -> f64 {
    utility_of(report.r_oc, &report.r_ic, &report.r_p, mode)
}

/// `(feasible, qos_met)`: power constraints within [`FEASIBILITY_TOL`], and
/// the minimum sum rate.
pub fn check_feasibility(
    alloc: &PowerAllocation,
    plan: &GroupingPlan,
    cons: &ConstraintSet,
    report: &RateReport,
) -> (bool, bool) {
    (power_feasible(alloc, plan, cons), report.sum_rate >= cons.r_min)
}

pub fn power_feasible(alloc: &PowerAllocation, plan: &GroupingPlan, cons: &ConstraintSet) -> bool {
    let tol = FEASIBILITY_TOL;
    if alloc.p_ic.len() != plan.num_groups || alloc.p_p.len() != plan.num_users() {
        return false;
    }
    let all_finite = std::iter::once(alloc.p_oc)
        .chain(alloc.p_ic.iter().copied())
        .chain(alloc.p_p.iter().copied())
        .all(f64::is_finite);
    if !all_finite {
        return false;
    }
    let nonneg = alloc.p_oc >= -tol && alloc.p_ic.iter().chain(&alloc.p_p).all(|&p| p >= -tol);
    let budget = alloc.total() <= cons.p_total_cap + tol;
    let groups = (0..plan.num_groups).all(|g| alloc.group_total(plan, g) <= cons.group_caps[g] + tol);
    let users = alloc.p_p.iter().all(|&p| p <= cons.user_cap + tol);
    nonneg && budget && groups && users
}

/// Map a raw `(p_ic, p_p)` vector onto the feasible set: clip, then scale
/// down over-cap groups, then scale down everything if over budget.
pub fn project_feasible(x: &[f64], plan: &GroupingPlan, cons: &ConstraintSet) -> Result<PowerAllocation> {
    cons.validate()?;
    let g = plan.num_groups;
    let k = plan.num_users();
    if x.len() != g + k || cons.group_caps.len() != g {
        return Err(Error::Dimension(format!(
            "projection expects {} variables and {g} group caps, got {} and {}",
            g + k,
            x.len(),
            cons.group_caps.len()
        )));
    }
    let mut v: Vec<f64> = x.iter().map(|&p| if p > 0.0 { p } else { 0.0 }).collect();
    for p in &mut v[g..] {
        *p = p.min(cons.user_cap);
    }
    for (grp, members) in plan.group_members.iter().enumerate() {
        let sum = v[grp] + members.iter().map(|&u| v[g + u]).sum::<f64>();
        let cap = cons.group_caps[grp];
        if sum > cap {
            let s = cap / sum;
            v[grp] *= s;
            for &u in members {
                v[g + u] *= s;
            }
        }
    }
    let total: f64 = v.iter().sum();
    let budget = cons.variable_budget();
    if cons.p_oc_fixed + total > cons.p_total_cap {
        let s = budget / total;
        for p in &mut v {
            *p *= s;
        }
    }
    Ok(PowerAllocation::from_variables(cons.p_oc_fixed, &v, g))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub allocation: PowerAllocation,
    /// Utility of the returned allocation (without the minimum-rate penalty).
    pub utility: f64,
    /// Penalised objective the search maximised.
    pub objective: f64,
    pub sum_rate: f64,
    pub feasible: bool,
    pub qos_met: bool,
    pub iterations: usize,
    pub restarts_used: usize,
}

/// Penalised objective over the variable vector for one problem instance.
pub struct Objective<'a> {
    pub gains: &'a LinkGains,
    pub plan: &'a GroupingPlan,
    pub cons: &'a ConstraintSet,
    pub mode: UtilityMode,
    r_ic: Vec<f64>,
    r_p: Vec<f64>,
    clamped: Vec<f64>,
}

impl<'a> Objective<'a> {
    pub fn new(gains: &'a LinkGains, plan: &'a GroupingPlan, cons: &'a ConstraintSet, mode: UtilityMode) -> Self {
        Self {
            gains,
            plan,
            cons,
            mode,
            r_ic: vec![0.0; plan.num_groups],
            r_p: vec![0.0; plan.num_users()],
            clamped: vec![0.0; plan.num_groups + plan.num_users()],
        }
    }

    /// `(objective, utility, sum_rate)` at `x`; negative entries count as zero.
    pub fn eval(&mut self, x: &[f64]) -> (f64, f64, f64) {
        for (c, &v) in self.clamped.iter_mut().zip(x) {
            *c = v.max(0.0);
        }
        let g = self.plan.num_groups;
        let r_oc = self.gains.message_rates_into(
            self.cons.p_oc_fixed,
            &self.clamped[..g],
            &self.clamped[g..],
            &mut self.r_ic,
            &mut self.r_p,
        );
        let sum = r_oc + self.r_ic.iter().sum::<f64>() + self.r_p.iter().sum::<f64>();
        let u = utility_of(r_oc, &self.r_ic, &self.r_p, self.mode);
        let shortfall = (self.cons.r_min - sum).max(0.0);
        (u - QOS_PENALTY * shortfall * shortfall, u, sum)
    }

    pub fn value(&mut self, x: &[f64]) -> f64 {
        self.eval(x).0
    }
}

/// Start points: equal split over all variable slots, the beta/alpha split,
/// then random feasible points.
pub fn start_points(plan: &GroupingPlan, cons: &ConstraintSet, seed: u64) -> Result<Vec<Vec<f64>>> {
    let g = plan.num_groups;
    let k = plan.num_users();
    let n = g + k;
    let budget = cons.variable_budget();
    let mut starts = vec![vec![budget / n as f64; n]];
    starts.push(beta_alpha_start(plan, cons)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_STARTS {
        let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let fill = rng.gen::<f64>();
        let s: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|r| r / s * fill * budget).collect());
    }
    starts
        .into_iter()
        .map(|x| project_feasible(&x, plan, cons).map(|a| a.variables()))
        .collect()
}

/// The uniform HRS split whose outer-common share equals the fixed power.
pub fn beta_alpha_allocation(plan: &GroupingPlan, cons: &ConstraintSet) -> Result<PowerAllocation> {
    cons.validate()?;
    let p_t = cons.p_total_cap;
    let beta = if p_t > 0.0 { 1.0 - cons.p_oc_fixed / p_t } else { 1.0 };
    let mut a = power_split(p_t, beta.max(f64::MIN_POSITIVE), HRS_ALPHA, plan.num_groups, plan.num_users())?;
    a.p_oc = cons.p_oc_fixed;
    Ok(a)
}

fn beta_alpha_start(plan: &GroupingPlan, cons: &ConstraintSet) -> Result<Vec<f64>> {
    Ok(beta_alpha_allocation(plan, cons)?.variables())
}

pub struct Ascent {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Remove the components of `d` that push through an active constraint, so
/// the step slides along the boundary instead of being scaled back.
fn tangent_direction(x: &[f64], d: &mut [f64], plan: &GroupingPlan, cons: &ConstraintSet) {
    let g = plan.num_groups;
    let tol = ACTIVE_TOL * cons.p_total_cap;
    let budget_active = x.iter().sum::<f64>() >= cons.variable_budget() - tol;
    let group_vars = |grp: usize| std::iter::once(grp).chain(plan.group_members[grp].iter().map(|&u| g + u));
    let group_active: Vec<bool> = (0..g)
        .map(|grp| group_vars(grp).map(|i| x[i]).sum::<f64>() >= cons.group_caps[grp] - tol)
        .collect();
    let mut blocked = vec![false; d.len()];
    for _ in 0..TANGENT_SWEEPS {
        for (i, b) in blocked.iter_mut().enumerate() {
            let at_cap = i >= g && x[i] >= cons.user_cap - tol;
            if (x[i] <= tol && d[i] < 0.0) || (at_cap && d[i] > 0.0) {
                *b = true;
            }
            if *b {
                d[i] = 0.0;
            }
        }
        let mut changed = false;
        let mut slide = |idx: &mut dyn Iterator<Item = usize>, d: &mut [f64]| {
            let free: Vec<usize> = idx.filter(|&i| !blocked[i]).collect();
            let push: f64 = free.iter().map(|&i| d[i]).sum();
            if push > 0.0 && !free.is_empty() {
                let m = push / free.len() as f64;
                for &i in &free {
                    d[i] -= m;
                }
                changed = true;
            }
        };
        for grp in 0..g {
            if group_active[grp] {
                slide(&mut group_vars(grp), d);
            }
        }
        if budget_active {
            slide(&mut (0..d.len()), d);
        }
        if !changed {
            break;
        }
    }
}

fn line_search(obj: &mut Objective<'_>, x: &[f64], fx: f64, dir: &[f64]) -> Result<Option<(Vec<f64>, f64, f64)>> {
    let scale = obj.cons.p_total_cap;
    let mut step = INITIAL_STEP * scale;
    while step >= MIN_STEP * scale {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + step * di).collect();
        let cand = project_feasible(&trial, obj.plan, obj.cons)?.variables();
        let fc = obj.value(&cand);
        if fc > fx {
            return Ok(Some((cand, fc, step)));
        }
        step *= 0.5;
    }
    Ok(None)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|g| g * g).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|g| g / norm).collect())
}

/// Projected gradient ascent from one start. When steps collapse (the
/// iterate sits on a kink of a min-rate term) the bisector of the last two
/// gradient directions is tried as well, which follows the kink, and the
/// better of the candidate steps is taken.
pub fn ascend(obj: &mut Objective<'_>, start: Vec<f64>) -> Result<Ascent> {
    let n = start.len();
    let scale = obj.cons.p_total_cap;
    let h = FD_STEP * scale;
    let mut x = start;
    let mut fx = obj.value(&x);
    let mut grad = vec![0.0; n];
    let mut probe = x.clone();
    let mut prev_dir: Option<Vec<f64>> = None;
    let mut last_step = INITIAL_STEP * scale;
    let mut stalled = 0;
    let mut iterations = 0;
    if scale <= 0.0 {
        return Ok(Ascent { x, value: fx, iterations });
    }
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..n {
            probe.copy_from_slice(&x);
            probe[i] = x[i] + h;
            let up = obj.value(&probe);
            probe[i] = x[i] - h;
            let down = obj.value(&probe);
            grad[i] = (up - down) / (2.0 * h);
        }
        tangent_direction(&x, &mut grad, obj.plan, obj.cons);
        let Some(dir) = unit(&grad) else { break };
        let mut accepted = line_search(obj, &x, fx, &dir)?;
        if last_step < RIDGE_STEP * scale {
            let bisector = prev_dir
                .as_ref()
                .and_then(|p| unit(&dir.iter().zip(p).map(|(a, b)| a + b).collect::<Vec<_>>()));
            // log utilities curve sharply near zero power; a step scaled by
            // the current powers keeps small entries from overshooting
            let scaled = if obj.mode == UtilityMode::LogMessage {
                let mut d: Vec<f64> = dir.iter().zip(&x).map(|(d, xi)| d * xi).collect();
                tangent_direction(&x, &mut d, obj.plan, obj.cons);
                unit(&d)
            } else {
                None
            };
            for alt_dir in [bisector, scaled].into_iter().flatten() {
                if let Some(alt) = line_search(obj, &x, fx, &alt_dir)? {
                    if accepted.as_ref().map_or(true, |a| alt.1 > a.1) {
                        accepted = Some(alt);
                    }
                }
            }
        }
        prev_dir = Some(dir);
        let Some((cand, fc, step)) = accepted else { break };
        last_step = step;
        let rel = (fc - fx) / fx.abs().max(1e-12);
        x = cand;
        fx = fc;
        if rel < REL_IMPROVEMENT_TOL {
            stalled += 1;
            if stalled >= STALL_WINDOW {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    Ok(Ascent { x, value: fx, iterations })
}

fn finish(
    obj: &mut Objective<'_>,
    x: &[f64],
    iterations: usize,
    restarts_used: usize,
) -> Result<SolveResult> {
    let (objective, utility, sum_rate) = obj.eval(x);
    let allocation = PowerAllocation::from_variables(obj.cons.p_oc_fixed, x, obj.plan.num_groups);
    let feasible = power_feasible(&allocation, obj.plan, obj.cons);
    Ok(SolveResult {
        allocation,
        utility,
        objective,
        sum_rate,
        feasible,
        qos_met: sum_rate >= obj.cons.r_min,
        iterations,
        restarts_used,
    })
}

/// Multi-start projected gradient ascent with finite-difference gradients and
/// backtracking steps. Deterministic for a given seed.
pub fn solve(
    gains: &LinkGains,
    plan: &GroupingPlan,
    cons: &ConstraintSet,
    mode: UtilityMode,
    seed: u64,
) -> Result<SolveResult> {
    check_instance(gains, plan, cons)?;
    let mut obj = Objective::new(gains, plan, cons, mode);
    let starts = start_points(plan, cons, seed)?;
    let restarts = starts.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for start in starts {
        let run = ascend(&mut obj, start)?;
        iterations += run.iterations;
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().map_or(true, |(_, v)| run.value > *v) {
            best = Some((run.x, run.value));
        }
    }
    let (x, _) = best.expect("at least one start");
    finish(&mut obj, &x, iterations, restarts)
}

fn check_instance(gains: &LinkGains, plan: &GroupingPlan, cons: &ConstraintSet) -> Result<()> {
    cons.validate()?;
    if gains.num_users() != plan.num_users() || gains.num_groups() != plan.num_groups {
        return Err(Error::Dimension("link gains and grouping disagree".into()));
    }
    if cons.group_caps.len() != plan.num_groups {
        return Err(Error::Dimension(format!(
            "{} group caps for {} groups",
            cons.group_caps.len(),
            plan.num_groups
        )));
    }
    Ok(())
}

/// Largest `G + K` the exhaustive grid accepts.
pub const GRID_MAX_VARIABLES: usize = 4;

/// Exhaustive search over the grid `{0, d, 2d, ...}` per variable with
/// `d = (P_T - p_oc) / resolution`, keeping feasible points only.
pub fn grid_oracle(
    gains: &LinkGains,
    plan: &GroupingPlan,
    cons: &ConstraintSet,
    mode: UtilityMode,
    resolution: usize,
) -> Result<SolveResult> {
    check_instance(gains, plan, cons)?;
    let n = plan.num_groups + plan.num_users();
    if n > GRID_MAX_VARIABLES {
        return Err(Error::domain(format!(
            "grid oracle supports at most {GRID_MAX_VARIABLES} variables, instance has {n}"
        )));
    }
    if resolution == 0 {
        return Err(Error::domain("grid resolution must be >= 1"));
    }
    let delta = cons.variable_budget() / resolution as f64;
    let mut obj = Objective::new(gains, plan, cons, mode);
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluated = 0;
    loop {
        for (xi, &i) in x.iter_mut().zip(&idx) {
            *xi = i as f64 * delta;
        }
        let alloc = PowerAllocation::from_variables(cons.p_oc_fixed, &x, plan.num_groups);
        if power_feasible(&alloc, plan, cons) {
            evaluated += 1;
            let v = obj.value(&x);
            if best.as_ref().map_or(true, |(_, b)| v > *b) {
                best = Some((x.clone(), v));
            }
        }
        // odometer increment
        let mut d = 0;
        loop {
            if d == n {
                let (bx, _) = best.expect("the zero point is always feasible");
                return finish(&mut obj, &bx, evaluated, 0);
            }
            idx[d] += 1;
            if idx[d] <= resolution {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
