//! Square assignment problems on dense `f64` cost matrices.
//!
//! [`hungarian`] is the O(n³) shortest-augmenting-path form of the Kuhn-Munkres
//! algorithm with row and column potentials. Small instances (n ≤ 3) go
//! through an enumeration fast path, which is exact and cheaper than setting
//! up potentials.

use alloc::vec;
use alloc::vec::Vec;

/// An optimal assignment: `perm[row] = column`.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub cost: f64,
    pub perm: Vec<usize>,
}

/// Minimum-cost perfect matching of the row-major `n × n` matrix `cost`.
pub fn hungarian(cost: &[f64], n: usize) -> Assignment {
    debug_assert_eq!(cost.len(), n * n);
    match n {
        0 => Assignment {
            cost: 0.0,
            perm: Vec::new(),
        },
        1 => Assignment {
            cost: cost[0],
            perm: vec![0],
        },
        2 | 3 => enumerate_small(cost, n),
        _ => kuhn_munkres(cost, n),
    }
}

fn enumerate_small(cost: &[f64], n: usize) -> Assignment {
    const P2: [[usize; 2]; 2] = [[0, 1], [1, 0]];
    const P3: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut best = f64::INFINITY;
    let mut best_perm: &[usize] = &[];
    let mut consider = |p: &'static [usize]| {
        let c: f64 = p.iter().enumerate().map(|(r, &col)| cost[r * n + col]).sum();
        if c < best {
            best = c;
            best_perm = p;
        }
    };
    if n == 2 {
        P2.iter().for_each(|p| consider(p));
    } else {
        P3.iter().for_each(|p| consider(p));
    }
    Assignment {
        cost: best,
        perm: best_perm.to_vec(),
    }
}

fn kuhn_munkres(cost: &[f64], n: usize) -> Assignment {
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    // Recompute the cost from the matching rather than from the potentials.
    let total = perm.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum();
    Assignment { cost: total, perm }
}

/// The lexicographically smallest permutation among all optimal ones.
///
/// Rows are fixed greedily: row `r` takes the smallest column whose forced
/// choice still admits an optimal completion. Costs within `rel_tol` of the
/// optimum count as ties.
pub fn canonical_assignment(cost: &[f64], n: usize, rel_tol: f64) -> Assignment {
    let best = hungarian(cost, n);
    let slack = rel_tol * (1.0 + best.cost.abs());
    let mut perm = vec![usize::MAX; n];
    let mut free_cols: Vec<usize> = (0..n).collect();
    let mut fixed_cost = 0.0;
    for row in 0..n {
        let rest_rows: Vec<usize> = (row + 1..n).collect();
        let mut chosen = None;
        for (slot, &col) in free_cols.iter().enumerate() {
            let rest_cols: Vec<usize> = free_cols
                .iter()
                .copied()
                .filter(|&c| c != col)
                .collect();
            let m = rest_rows.len();
            let mut sub = vec![0.0; m * m];
            for (a, &r) in rest_rows.iter().enumerate() {
                for (b, &c) in rest_cols.iter().enumerate() {
                    sub[a * m + b] = cost[r * n + c];
                }
            }
            let completion = hungarian(&sub, m).cost;
            let total = fixed_cost + cost[row * n + col] + completion;
            if total <= best.cost + slack {
                chosen = Some((slot, col));
                break;
            }
        }
        // The optimal column for this row always qualifies, so `chosen` is set.
        let (slot, col) = chosen.expect("an optimal completion exists");
        perm[row] = col;
        fixed_cost += cost[row * n + col];
        free_cols.remove(slot);
    }
    let total = perm.iter().enumerate().map(|(r, &c)| cost[r * n + c]).sum();
    Assignment { cost: total, perm }
}
