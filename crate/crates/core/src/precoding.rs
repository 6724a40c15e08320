//! Two-tier precoders: block-diagonalising outer precoders per group,
//! zero-forcing inner precoders within each group, and matched beams for the
//! common messages.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::grouping::GroupingPlan;

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    /// Outer-common beam, length L, unit norm.
    pub w_oc: DVector<f64>,
    /// Per group, `B_g` (L x r_g) with orthonormal columns.
    pub outer: Vec<DMatrix<f64>>,
    /// Per group, `W_g` (r_g x K_g) with unit-norm columns, one per member.
    pub inner: Vec<DMatrix<f64>>,
    /// Per group, the inner-common beam `w_ic,g` (length r_g, unit norm).
    pub inner_common: Vec<DVector<f64>>,
    /// Groups whose outer precoder fell back to the identity because the
    /// other groups' channels leave no null space.
    pub no_outer_separation: Vec<bool>,
}

impl PrecoderSet {
    /// Transmit beam (length L) of the private message of `user`.
    pub fn private_beam(&self, plan: &GroupingPlan, user: usize) -> DVector<f64> {
        let g = plan.assignment[user];
        &self.outer[g] * self.inner[g].column(plan.index_in_group(user))
    }

    /// Transmit beam (length L) of the inner-common message of group `g`.
    pub fn inner_common_beam(&self, g: usize) -> DVector<f64> {
        &self.outer[g] * &self.inner_common[g]
    }

    pub fn any_fallback(&self) -> bool {
        self.no_outer_separation.iter().any(|&f| f)
    }
}

fn rank_tolerance(singular: &[f64], rows: usize, cols: usize) -> f64 {
    let max = singular.iter().cloned().fold(0.0, f64::max);
    rows.max(cols) as f64 * max * f64::EPSILON
}

/// Orthonormal basis (columns) of the null space of `rows`, or `None` when
/// the null space is trivial.
pub fn null_space(rows: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let l = rows.ncols();
    if rows.nrows() == 0 {
        return Some(DMatrix::identity(l, l));
    }
    // pad to at least L rows so the SVD returns the full right basis
    let m = rows.nrows().max(l);
    let mut padded = DMatrix::zeros(m, l);
    padded.rows_mut(0, rows.nrows()).copy_from(rows);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sv = svd.singular_values.as_slice();
    let tol = rank_tolerance(sv, rows.nrows(), l);
    let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= tol).collect();
    if null.is_empty() {
        return None;
    }
    let mut basis = DMatrix::zeros(l, null.len());
    for (c, &i) in null.iter().enumerate() {
        basis.set_column(c, &v_t.row(i).transpose());
    }
    Some(basis)
}

fn unit_or(v: DVector<f64>, fallback: impl FnOnce() -> DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        v / n
    } else {
        fallback()
    }
}

fn first_axis(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[0] = 1.0;
    e
}

fn select_rows(h: &DMatrix<f64>, users: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(users.len(), h.ncols(), |i, j| h[(users[i], j)])
}

pub fn build_precoders(channel: &ChannelMatrix, plan: &GroupingPlan) -> Result<PrecoderSet> {
    let h = &channel.gains;
    let (k, l) = (h.nrows(), h.ncols());
    if plan.num_users() != k {
        return Err(Error::Dimension(format!(
            "grouping covers {} users, channel has {k}",
            plan.num_users()
        )));
    }

    let w_oc = unit_or(h.row_sum().transpose(), || first_axis(l));

    let mut outer = Vec::with_capacity(plan.num_groups);
    let mut inner = Vec::with_capacity(plan.num_groups);
    let mut inner_common = Vec::with_capacity(plan.num_groups);
    let mut no_outer_separation = Vec::with_capacity(plan.num_groups);
    for (g, members) in plan.group_members.iter().enumerate() {
        let others: Vec<usize> = (0..k).filter(|&u| plan.assignment[u] != g).collect();
        let (b, fallback) = match null_space(&select_rows(h, &others)) {
            Some(b) => (b, false),
            None => (DMatrix::identity(l, l), true),
        };
        let effective = select_rows(h, members) * &b;
        let r = b.ncols();

        let eps = members.len().max(r) as f64 * effective.norm() * f64::EPSILON;
        let pinv = effective
            .clone()
            .pseudo_inverse(eps.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::Dimension(e.to_string()))?;
        let mut w = DMatrix::zeros(r, members.len());
        for j in 0..members.len() {
            let col = unit_or(pinv.column(j).into_owned(), || {
                unit_or(effective.row(j).transpose(), || first_axis(r))
            });
            w.set_column(j, &col);
        }
        let w_ic = unit_or(effective.row_sum().transpose(), || first_axis(r));

        outer.push(b);
        inner.push(w);
        inner_common.push(w_ic);
        no_outer_separation.push(fallback);
    }

    Ok(PrecoderSet {
        w_oc,
        outer,
        inner,
        inner_common,
        no_outer_separation,
    })
}
