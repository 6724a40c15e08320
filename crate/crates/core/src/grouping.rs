//! Position-based user grouping with Lloyd's K-means.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingPlan {
    pub num_groups: usize,
    /// Group index of each user.
    pub assignment: Vec<usize>,
    /// Users of each group, ascending.
    pub group_members: Vec<Vec<usize>>,
}

impl GroupingPlan {
    /// Build a plan from an assignment vector. Groups are relabelled in order
    /// of their lowest-indexed member.
    pub fn from_assignment(assignment: &[usize]) -> Result<Self> {
        let mut relabel: Vec<Option<usize>> = Vec::new();
        let mut next = 0;
        let mut out = Vec::with_capacity(assignment.len());
        for &a in assignment {
            if a >= relabel.len() {
                relabel.resize(a + 1, None);
            }
            let label = *relabel[a].get_or_insert_with(|| {
                next += 1;
                next - 1
            });
            out.push(label);
        }
        if out.is_empty() {
            return Err(Error::domain("grouping needs at least one user"));
        }
        let mut group_members = vec![Vec::new(); next];
        for (k, &g) in out.iter().enumerate() {
            group_members[g].push(k);
        }
        Ok(Self {
            num_groups: next,
            assignment: out,
            group_members,
        })
    }

    /// Everyone in one group.
    pub fn single(num_users: usize) -> Self {
        Self::from_assignment(&vec![0; num_users]).expect("num_users >= 1")
    }

    pub fn num_users(&self) -> usize {
        self.assignment.len()
    }

    /// Position of `user` within its group's member list.
    pub fn index_in_group(&self, user: usize) -> usize {
        let g = self.assignment[user];
        self.group_members[g]
            .iter()
            .position(|&u| u == user)
            .expect("assignment and members agree")
    }
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn nearest(p: &[f64; 2], centers: &[[f64; 2]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn wcss(points: &[[f64; 2]], centers: &[[f64; 2]], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &a)| dist2(p, &centers[a])).sum()
}

/// Partition users into `g` groups from their horizontal positions.
pub fn kmeans_group(points: &[[f64; 2]], g: usize, seed: u64) -> Result<GroupingPlan> {
    kmeans_trace(points, g, seed).map(|(plan, _)| plan)
}

/// Like [`kmeans_group`], also returning the within-cluster sum of squares
/// after every Lloyd iteration.
pub fn kmeans_trace(points: &[[f64; 2]], g: usize, seed: u64) -> Result<(GroupingPlan, Vec<f64>)> {
    let k = points.len();
    if g == 0 || g > k {
        return Err(Error::domain(format!("group count {g} must lie in [1, {k}]")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::domain("user positions must be finite"));
    }

    // farthest-point seeding from a random first centre
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.gen_range(0..k)]];
    let mut min_d: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < g {
        let (idx, _) = min_d
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
        centers.push(points[idx]);
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(dist2(p, &centers[centers.len() - 1]));
        }
    }

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        repair_empty(points, &mut centers, &mut assignment);
        let mut sums = vec![[0.0f64; 3]; g];
        for (p, &a) in points.iter().zip(&assignment) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            sums[a][2] += 1.0;
        }
        let mut shift: f64 = 0.0;
        for (c, s) in centers.iter_mut().zip(&sums) {
            let next = [s[0] / s[2], s[1] / s[2]];
            shift = shift.max(dist2(c, &next).sqrt());
            *c = next;
        }
        trace.push(wcss(points, &centers, &assignment));
        if shift < SHIFT_TOLERANCE {
            break;
        }
        for (a, p) in assignment.iter_mut().zip(points) {
            // keep the current centre on ties so Lloyd steps never oscillate
            let cand = nearest(p, &centers);
            if dist2(p, &centers[cand]) < dist2(p, &centers[*a]) {
                *a = cand;
            }
        }
    }
    repair_empty(points, &mut centers, &mut assignment);
    Ok((GroupingPlan::from_assignment(&assignment)?, trace))
}

/// Give every empty cluster the farthest point of the currently largest one.
fn repair_empty(points: &[[f64; 2]], centers: &mut [[f64; 2]], assignment: &mut [usize]) {
    let g = centers.len();
    loop {
        let mut counts = vec![0usize; g];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let largest = (0..g).fold(0, |best, i| if counts[i] > counts[best] { i } else { best });
        let far = (0..points.len())
            .filter(|&i| assignment[i] == largest)
            .fold(None::<(usize, f64)>, |acc, i| {
                let d = dist2(&points[i], &centers[largest]);
                match acc {
                    Some((_, bd)) if bd >= d => acc,
                    _ => Some((i, d)),
                }
            })
            .expect("largest cluster is non-empty")
            .0;
        assignment[far] = empty;
        centers[empty] = points[far];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all assignments into exactly `g` non-empty labels.
    fn brute_force_best(points: &[[f64; 2]], g: usize) -> Vec<Vec<usize>> {
        let k = points.len();
        let mut best = (f64::INFINITY, Vec::new());
        let total = g.pow(k as u32);
        for code in 0..total {
            let mut c = code;
            let labels: Vec<usize> = (0..k)
                .map(|_| {
                    let l = c % g;
                    c /= g;
                    l
                })
                .collect();
            let mut cost = 0.0;
            let mut ok = true;
            for l in 0..g {
                let members: Vec<&[f64; 2]> = (0..k).filter(|&i| labels[i] == l).map(|i| &points[i]).collect();
                if members.is_empty() {
                    ok = false;
                    break;
                }
                let n = members.len() as f64;
                let cx = members.iter().map(|p| p[0]).sum::<f64>() / n;
                let cy = members.iter().map(|p| p[1]).sum::<f64>() / n;
                cost += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
            }
            if ok && cost < best.0 - 1e-12 {
                best = (cost, GroupingPlan::from_assignment(&labels).unwrap().group_members);
            }
        }
        best.1
    }

    #[test]
    fn two_obvious_clusters() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0]];
        let expected = brute_force_best(&pts, 2);
        assert_eq!(expected, vec![vec![0, 1], vec![2, 3]]);
        for seed in 0..10 {
            assert_eq!(kmeans_group(&pts, 2, seed).unwrap().group_members, expected);
        }
    }

    #[test]
    fn single_and_singleton_groups() {
        let pts = [[0.3, 1.0], [2.0, 2.0], [4.0, 0.5], [1.0, 4.5], [3.3, 3.3]];
        let one = kmeans_group(&pts, 1, 5).unwrap();
        assert_eq!(one.group_members, vec![vec![0, 1, 2, 3, 4]]);
        let all = kmeans_group(&pts, 5, 5).unwrap();
        assert_eq!(all.num_groups, 5);
        assert!(all.group_members.iter().all(|m| m.len() == 1));
    }

    #[test]
    fn duplicates_still_fill_every_group() {
        let pts = [[1.0, 1.0]; 4];
        let plan = kmeans_group(&pts, 4, 0).unwrap();
        assert!(plan.group_members.iter().all(|m| m.len() == 1));
    }

    #[test]
    fn too_many_groups_is_rejected() {
        assert!(kmeans_group(&[[0.0, 0.0]], 2, 0).is_err());
        assert!(kmeans_group(&[[0.0, 0.0]], 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariants(
            pts in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 1..14),
            g_frac in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let g = 1 + ((pts.len() - 1) as f64 * g_frac) as usize;
            let (plan, trace) = kmeans_trace(&pts, g, seed).unwrap();
            prop_assert_eq!(plan.num_groups, g);
            prop_assert_eq!(plan.group_members.iter().map(Vec::len).sum::<usize>(), pts.len());
            prop_assert!(plan.group_members.iter().all(|m| !m.is_empty()));
            for (k, &a) in plan.assignment.iter().enumerate() {
                prop_assert!(plan.group_members[a].contains(&k));
            }
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].max(1.0));
            }
            prop_assert_eq!(kmeans_group(&pts, g, seed).unwrap(), plan);
        }
    }
}
