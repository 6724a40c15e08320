//! SINRs and achievable rates of hierarchical rate splitting (HRS), plus the
//! conventional single-tier RS and time-shared OMA baselines.
//!
//! Decoding order at user k of group g:
//! 1. outer-common message, everything else treated as noise;
//! 2. after cancelling it, the own group's inner-common message;
//! 3. after cancelling that, the own private message, with the remaining
//!    privates and the other groups' inner-common messages as noise.

use nalgebra::DMatrix;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::grouping::GroupingPlan;
use crate::precoding::{build_precoders, PrecoderSet};

/// Private-message fraction of the conventional RS baseline.
pub const RS_PRIVATE_FRACTION: f64 = 0.75;
/// Group-message fraction of the uniform HRS baseline.
pub const HRS_BETA: f64 = 0.8;
/// Private fraction within groups of the uniform HRS baseline.
pub const HRS_ALPHA: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub p_oc: f64,
    pub p_ic: Vec<f64>,
    pub p_p: Vec<f64>,
}

impl PowerAllocation {
    pub fn total(&self) -> f64 {
        self.p_oc + self.p_ic.iter().sum::<f64>() + self.p_p.iter().sum::<f64>()
    }

    /// Power of group `g`: its inner-common plus its members' privates.
    pub fn group_total(&self, plan: &GroupingPlan, g: usize) -> f64 {
        self.p_ic[g] + plan.group_members[g].iter().map(|&k| self.p_p[k]).sum::<f64>()
    }

    /// The variable part `(p_ic, p_p)` as one vector.
    pub fn variables(&self) -> Vec<f64> {
        self.p_ic.iter().chain(&self.p_p).copied().collect()
    }

    pub fn from_variables(p_oc: f64, x: &[f64], num_groups: usize) -> Self {
        Self {
            p_oc,
            p_ic: x[..num_groups].to_vec(),
            p_p: x[num_groups..].to_vec(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            p_oc: self.p_oc * c,
            p_ic: self.p_ic.iter().map(|p| p * c).collect(),
            p_p: self.p_p.iter().map(|p| p * c).collect(),
        }
    }
}

/// Fixed-fraction split: `P(1-beta)` to the outer-common message,
/// `P beta (1-alpha) / G` to each inner-common and `P beta alpha / K` to each private.
pub fn power_split(p_total: f64, beta: f64, alpha: f64, g: usize, k: usize) -> Result<PowerAllocation> {
    for (name, v) in [("beta", beta), ("alpha", alpha)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    if !(p_total >= 0.0 && p_total.is_finite()) {
        return Err(Error::domain(format!("total power must be >= 0, got {p_total}")));
    }
    if g == 0 || k == 0 {
        return Err(Error::domain("power split needs g >= 1 and k >= 1"));
    }
    Ok(PowerAllocation {
        p_oc: p_total * (1.0 - beta),
        p_ic: vec![p_total * beta * (1.0 - alpha) / g as f64; g],
        p_p: vec![p_total * beta * alpha / k as f64; k],
    })
}

/// Per-user SINRs of every message a user decodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub sinr_oc: Vec<f64>,
    pub sinr_ic: Vec<f64>,
    pub sinr_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr_oc: Vec<f64>,
    pub sinr_ic: Vec<f64>,
    pub sinr_p: Vec<f64>,
    /// bit/s/Hz
    pub r_oc: f64,
    /// One entry per group (empty for schemes without inner-common messages).
    pub r_ic: Vec<f64>,
    pub r_p: Vec<f64>,
    pub sum_rate: f64,
}

impl RateReport {
    /// Every message rate in order: outer-common, inner-commons, privates.
    pub fn message_rates(&self) -> impl Iterator<Item = f64> + '_ {
        std::iter::once(self.r_oc).chain(self.r_ic.iter().copied()).chain(self.r_p.iter().copied())
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Squared effective gains `|h_k^T b|^2` of every transmit beam at every user,
/// for a fixed channel, grouping and precoder set.
#[derive(Debug, Clone)]
pub struct LinkGains {
    /// `|h_k^T w_oc|^2`, per user.
    pub outer_common: Vec<f64>,
    /// `|h_k^T B_l w_ic,l|^2`, K x G.
    pub inner_common: DMatrix<f64>,
    /// `|h_k^T B_g(j) w_j|^2`, K x K (row: receiving user, column: private message).
    pub private: DMatrix<f64>,
    pub assignment: Vec<usize>,
    pub group_members: Vec<Vec<usize>>,
    pub noise_variance: f64,
}

impl LinkGains {
    pub fn new(channel: &ChannelMatrix, plan: &GroupingPlan, prec: &PrecoderSet) -> Result<Self> {
        let h = &channel.gains;
        let k = h.nrows();
        if plan.num_users() != k || prec.outer.len() != plan.num_groups || prec.w_oc.len() != h.ncols() {
            return Err(Error::Dimension(format!(
                "channel {k}x{}, plan with {} users/{} groups, precoders for {} groups",
                h.ncols(),
                plan.num_users(),
                plan.num_groups,
                prec.outer.len()
            )));
        }
        let sq = |v: f64| v * v;
        let outer_common = (0..k).map(|u| sq(h.row(u).dot(&prec.w_oc.transpose()))).collect();
        let ic_beams: Vec<_> = (0..plan.num_groups).map(|g| prec.inner_common_beam(g)).collect();
        let p_beams: Vec<_> = (0..k).map(|j| prec.private_beam(plan, j)).collect();
        let inner_common = DMatrix::from_fn(k, plan.num_groups, |u, g| sq(h.row(u).dot(&ic_beams[g].transpose())));
        let private = DMatrix::from_fn(k, k, |u, j| sq(h.row(u).dot(&p_beams[j].transpose())));
        Ok(Self {
            outer_common,
            inner_common,
            private,
            assignment: plan.assignment.clone(),
            group_members: plan.group_members.clone(),
            noise_variance: channel.noise_variance,
        })
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_groups(&self) -> usize {
        self.group_members.len()
    }

    fn check(&self, alloc: &PowerAllocation) -> Result<()> {
        if alloc.p_ic.len() != self.num_groups() || alloc.p_p.len() != self.num_users() {
            return Err(Error::Dimension(format!(
                "allocation has {} inner-common and {} private powers, expected {} and {}",
                alloc.p_ic.len(),
                alloc.p_p.len(),
                self.num_groups(),
                self.num_users()
            )));
        }
        Ok(())
    }

    /// SINR triple of user `k` (outer-common, inner-common, private).
    #[inline]
    fn user_sinrs(&self, k: usize, p_oc: f64, p_ic: &[f64], p_p: &[f64]) -> (f64, f64, f64) {
        let g = self.assignment[k];
        let mut other_privates = 0.0;
        for (j, &p) in p_p.iter().enumerate() {
            if j != k {
                other_privates += p * self.private[(k, j)];
            }
        }
        let own_private = p_p[k] * self.private[(k, k)];
        let mut other_ic = 0.0;
        for (l, &p) in p_ic.iter().enumerate() {
            if l != g {
                other_ic += p * self.inner_common[(k, l)];
            }
        }
        let own_ic = p_ic[g] * self.inner_common[(k, g)];
        let noise = self.noise_variance;
        let oc = ratio(
            p_oc * self.outer_common[k],
            other_privates + own_private + other_ic + own_ic + noise,
        );
        let ic = ratio(own_ic, other_privates + own_private + other_ic + noise);
        let p = ratio(own_private, other_privates + other_ic + noise);
        (oc, ic, p)
    }

    pub fn sinrs(&self, alloc: &PowerAllocation) -> Result<SinrReport> {
        self.check(alloc)?;
        let k = self.num_users();
        let mut r = SinrReport {
            sinr_oc: Vec::with_capacity(k),
            sinr_ic: Vec::with_capacity(k),
            sinr_p: Vec::with_capacity(k),
        };
        for u in 0..k {
            let (oc, ic, p) = self.user_sinrs(u, alloc.p_oc, &alloc.p_ic, &alloc.p_p);
            r.sinr_oc.push(oc);
            r.sinr_ic.push(ic);
            r.sinr_p.push(p);
        }
        Ok(r)
    }

    pub fn rates(&self, alloc: &PowerAllocation) -> Result<RateReport> {
        Ok(rates_from_sinrs(self.sinrs(alloc)?, &self.group_members))
    }

    /// Message rates without building a report: returns `(r_oc, r_ic, r_p)`
    /// written into the provided buffers. Used in the solver's inner loop.
    pub fn message_rates_into(&self, p_oc: f64, p_ic: &[f64], p_p: &[f64], r_ic: &mut [f64], r_p: &mut [f64]) -> f64 {
        let mut min_oc = f64::INFINITY;
        for v in r_ic.iter_mut() {
            *v = f64::INFINITY;
        }
        for k in 0..self.num_users() {
            let (oc, ic, p) = self.user_sinrs(k, p_oc, p_ic, p_p);
            min_oc = min_oc.min(oc);
            let g = self.assignment[k];
            r_ic[g] = r_ic[g].min(ic);
            r_p[k] = (1.0 + p).log2();
        }
        for v in r_ic.iter_mut() {
            *v = (1.0 + *v).log2();
        }
        (1.0 + min_oc).log2()
    }
}

/// Common-message rates from the per-user SINRs: each common message is
/// decoded by all its intended users, so its rate is set by the weakest one.
pub fn rates_from_sinrs(s: SinrReport, group_members: &[Vec<usize>]) -> RateReport {
    let log = |x: f64| (1.0 + x).log2();
    let min_oc = s.sinr_oc.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_oc = if s.sinr_oc.is_empty() { 0.0 } else { log(min_oc) };
    let r_ic: Vec<f64> = group_members
        .iter()
        .map(|m| log(m.iter().map(|&k| s.sinr_ic[k]).fold(f64::INFINITY, f64::min)))
        .collect();
    let r_p: Vec<f64> = s.sinr_p.iter().map(|&x| log(x)).collect();
    let sum_rate = r_oc + r_ic.iter().sum::<f64>() + r_p.iter().sum::<f64>();
    RateReport {
        sinr_oc: s.sinr_oc,
        sinr_ic: s.sinr_ic,
        sinr_p: s.sinr_p,
        r_oc,
        r_ic,
        r_p,
        sum_rate,
    }
}

pub fn hrs_sinrs(
    channel: &ChannelMatrix,
    plan: &GroupingPlan,
    prec: &PrecoderSet,
    alloc: &PowerAllocation,
) -> Result<SinrReport> {
    LinkGains::new(channel, plan, prec)?.sinrs(alloc)
}

pub fn hrs_rates(sinrs: SinrReport, plan: &GroupingPlan) -> RateReport {
    rates_from_sinrs(sinrs, &plan.group_members)
}

/// Conventional (single-tier) RS powers: one common message plus one private per user.
#[derive(Debug, Clone, PartialEq)]
pub struct RsAllocation {
    pub p_common: f64,
    pub p_private: Vec<f64>,
}

impl RsAllocation {
    /// `1 - t` of the budget to the common message, `t / K` to each private.
    pub fn uniform(p_total: f64, private_fraction: f64, k: usize) -> Self {
        Self {
            p_common: p_total * (1.0 - private_fraction),
            p_private: vec![p_total * private_fraction / k as f64; k],
        }
    }
}

/// Single-tier RS with zero-forcing privates and a matched common beam.
pub fn conventional_rs_rate(channel: &ChannelMatrix, alloc: &RsAllocation) -> Result<RateReport> {
    let k = channel.num_users();
    if alloc.p_private.len() != k {
        return Err(Error::Dimension(format!(
            "{} private powers for {k} users",
            alloc.p_private.len()
        )));
    }
    let plan = GroupingPlan::single(k);
    let prec = build_precoders(channel, &plan)?;
    let h = &channel.gains;
    let beams: Vec<_> = (0..k).map(|j| prec.private_beam(&plan, j)).collect();
    let sq = |v: f64| v * v;
    let mut sinr_c = Vec::with_capacity(k);
    let mut sinr_p = Vec::with_capacity(k);
    for u in 0..k {
        let row = h.row(u);
        let mut interference = 0.0;
        for (j, b) in beams.iter().enumerate() {
            if j != u {
                interference += alloc.p_private[j] * sq(row.dot(&b.transpose()));
            }
        }
        let own = alloc.p_private[u] * sq(row.dot(&beams[u].transpose()));
        let common = alloc.p_common * sq(row.dot(&prec.w_oc.transpose()));
        sinr_c.push(ratio(common, interference + own + channel.noise_variance));
        sinr_p.push(ratio(own, interference + channel.noise_variance));
    }
    let log = |x: f64| (1.0 + x).log2();
    let r_oc = log(sinr_c.iter().cloned().fold(f64::INFINITY, f64::min));
    let r_p: Vec<f64> = sinr_p.iter().map(|&x| log(x)).collect();
    let sum_rate = r_oc + r_p.iter().sum::<f64>();
    Ok(RateReport {
        sinr_oc: sinr_c,
        sinr_ic: Vec::new(),
        sinr_p,
        r_oc,
        r_ic: Vec::new(),
        r_p,
        sum_rate,
    })
}

/// Equal time sharing: each user gets the full budget for `1/K` of the time
/// with a matched-filter beam.
pub fn oma_rate(channel: &ChannelMatrix, p_total: f64) -> Result<RateReport> {
    if !(p_total >= 0.0) {
        return Err(Error::domain(format!("total power must be >= 0, got {p_total}")));
    }
    let k = channel.num_users();
    let sinr_p: Vec<f64> = (0..k)
        .map(|u| ratio(p_total * channel.row_energy(u), channel.noise_variance))
        .collect();
    let r_p: Vec<f64> = sinr_p.iter().map(|&s| (1.0 + s).log2() / k as f64).collect();
    let sum_rate = r_p.iter().sum();
    Ok(RateReport {
        sinr_oc: Vec::new(),
        sinr_ic: Vec::new(),
        sinr_p,
        r_oc: 0.0,
        r_ic: Vec::new(),
        r_p,
        sum_rate,
    })
}
