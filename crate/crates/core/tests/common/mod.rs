#![allow(dead_code)]

use nalgebra::DVector;
use owc_hrs::channel::ChannelMatrix;
use owc_hrs::grouping::GroupingPlan;
use owc_hrs::precoding::PrecoderSet;
use owc_hrs::rates::PowerAllocation;

/// Per-user SINRs `(outer-common, inner-common, private)` evaluated term by
/// term from the transmit beams, without the library's link-gain tables.
pub fn sinr_by_terms(
    ch: &ChannelMatrix,
    plan: &GroupingPlan,
    prec: &PrecoderSet,
    a: &PowerAllocation,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k_users = ch.num_users();
    let g_groups = plan.num_groups;
    let gain = |k: usize, beam: &DVector<f64>| -> f64 {
        let mut s = 0.0;
        for l in 0..ch.num_aps() {
            s += ch.gains[(k, l)] * beam[l];
        }
        s * s
    };
    let ic_beams: Vec<DVector<f64>> = (0..g_groups).map(|g| prec.inner_common_beam(g)).collect();
    let p_beams: Vec<DVector<f64>> = (0..k_users).map(|j| prec.private_beam(plan, j)).collect();
    let sigma2 = ch.noise_variance;
    let safe = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };

    let mut oc = Vec::new();
    let mut ic = Vec::new();
    let mut pr = Vec::new();
    for k in 0..k_users {
        let g = plan.assignment[k];
        let all_ic: f64 = (0..g_groups).map(|l| a.p_ic[l] * gain(k, &ic_beams[l])).sum();
        let other_ic: f64 = (0..g_groups)
            .filter(|&l| l != g)
            .map(|l| a.p_ic[l] * gain(k, &ic_beams[l]))
            .sum();
        let all_p: f64 = (0..k_users).map(|j| a.p_p[j] * gain(k, &p_beams[j])).sum();
        let other_p: f64 = (0..k_users)
            .filter(|&j| j != k)
            .map(|j| a.p_p[j] * gain(k, &p_beams[j]))
            .sum();
        let own_p = a.p_p[k] * gain(k, &p_beams[k]);
        let own_ic = a.p_ic[g] * gain(k, &ic_beams[g]);

        oc.push(safe(a.p_oc * gain(k, &prec.w_oc), all_ic + all_p + sigma2));
        ic.push(safe(own_ic, other_ic + all_p + sigma2));
        pr.push(safe(own_p, other_ic + other_p + sigma2));
    }
    (oc, ic, pr)
}

/// Largest relative deviation of `got` from `want`; exact zeros must match exactly.
pub fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(&g, &w)| {
            if w == 0.0 {
                if g == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((g - w) / w).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
