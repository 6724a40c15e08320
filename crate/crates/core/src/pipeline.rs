//! One problem instance: scenario → channel → groups → precoders → link gains.

use crate::channel::{build_channel, ChannelMatrix, Scenario};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::grouping::{kmeans_group, GroupingPlan};
use crate::optimizer::{beta_alpha_allocation, solve, ConstraintSet, SolveResult, UtilityMode};
use crate::precoding::{build_precoders, PrecoderSet};
use crate::rates::{
    conventional_rs_rate, oma_rate, power_split, LinkGains, PowerAllocation, RateReport, RsAllocation, HRS_ALPHA,
    HRS_BETA, RS_PRIVATE_FRACTION,
};

#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub channel: ChannelMatrix,
    pub plan: GroupingPlan,
    pub precoders: PrecoderSet,
    pub gains: LinkGains,
    pub constraints: ConstraintSet,
}

impl Instance {
    pub fn build(scenario: Scenario, num_groups: usize, constraints: ConstraintSet) -> Result<Self> {
        let channel = build_channel(&scenario)?;
        let points: Vec<[f64; 2]> = scenario.user_positions.iter().map(|p| [p.x, p.y]).collect();
        let plan = kmeans_group(&points, num_groups, scenario.rng_seed)?;
        let precoders = build_precoders(&channel, &plan)?;
        let gains = LinkGains::new(&channel, &plan, &precoders)?;
        Ok(Self {
            scenario,
            channel,
            plan,
            precoders,
            gains,
            constraints,
        })
    }

    /// Realise the config's scenario for `seed` and build the instance.
    pub fn from_config(cfg: &ScenarioConfig, seed: u64) -> Result<Self> {
        let scenario = cfg.realize(seed)?;
        let cons = cfg.constraints_for(&scenario);
        Self::build(scenario, cfg.num_groups(), cons)
    }

    /// Replace the power budget, scaling every cap with it.
    pub fn with_total_power(mut self, p_total: f64) -> Self {
        let c = p_total / self.constraints.p_total_cap;
        self.constraints = self.constraints.scaled_power(c);
        self
    }

    pub fn hrs_rates(&self, alloc: &PowerAllocation) -> Result<RateReport> {
        self.gains.rates(alloc)
    }

    /// HRS with the fixed beta/alpha split of the whole budget.
    pub fn uniform_hrs_allocation(&self) -> Result<PowerAllocation> {
        power_split(
            self.constraints.p_total_cap,
            HRS_BETA,
            HRS_ALPHA,
            self.plan.num_groups,
            self.plan.num_users(),
        )
    }

    /// The solver's beta/alpha start point (outer-common share = fixed power).
    pub fn solver_uniform_allocation(&self) -> Result<PowerAllocation> {
        beta_alpha_allocation(&self.plan, &self.constraints)
    }

    pub fn uniform_hrs(&self) -> Result<RateReport> {
        self.hrs_rates(&self.uniform_hrs_allocation()?)
    }

    pub fn conventional_rs(&self) -> Result<RateReport> {
        let alloc = RsAllocation::uniform(
            self.constraints.p_total_cap,
            RS_PRIVATE_FRACTION,
            self.channel.num_users(),
        );
        conventional_rs_rate(&self.channel, &alloc)
    }

    pub fn oma(&self) -> Result<RateReport> {
        oma_rate(&self.channel, self.constraints.p_total_cap)
    }

    pub fn solve(&self, mode: UtilityMode, seed: u64) -> Result<SolveResult> {
        solve(&self.gains, &self.plan, &self.constraints, mode, seed)
    }

    /// Median matched-filter SNR across users at power `p`.
    pub fn median_snr(&self, p: f64) -> f64 {
        let mut s = self.channel.single_user_snr(p);
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        }
    }
}
