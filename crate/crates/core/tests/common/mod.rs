//! Independent oracles for the acceptance suite. Everything here is written
//! against first principles (flood fill, brute-force scans, tableau simplex)
//! rather than the library's own algorithms, so agreement is meaningful.

use ndarray::Array2;
use rand::Rng;
use topotrack::field::ScalarField;
use topotrack::measure::MeasureNetwork;

/// Counts 8-connected components of `{f >= v}` by breadth-first flood fill.
/// Missing pixels never join a component.
pub fn flood_fill_count(f: &ScalarField, v: f64) -> usize {
    let (w, h) = (f.width, f.height);
    let inside = |idx: usize| !f.missing[idx] && f.values[idx] >= v;
    let mut seen = vec![false; w * h];
    let mut queue = Vec::new();
    let mut count = 0;
    for start in 0..w * h {
        if seen[start] || !inside(start) {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push(start);
        while let Some(idx) = queue.pop() {
            let (col, row) = (idx % w, idx / w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nc, nr) = (col as i64 + dc, row as i64 + dr);
                    if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                        continue;
                    }
                    let nidx = nr as usize * w + nc as usize;
                    if !seen[nidx] && inside(nidx) {
                        seen[nidx] = true;
                        queue.push(nidx);
                    }
                }
            }
        }
    }
    count
}

/// Brute-force local-maximum scan under the total order
/// `(value desc, row-major index asc)`: a pixel is a maximum when it precedes
/// all eight neighbors. Returns sorted row-major indices.
pub fn local_max_scan(f: &ScalarField) -> Vec<usize> {
    let (w, h) = (f.width, f.height);
    let precedes = |a: usize, b: usize| {
        f.values[a] > f.values[b] || (f.values[a] == f.values[b] && a < b)
    };
    let mut out = Vec::new();
    for idx in 0..w * h {
        if f.missing[idx] {
            continue;
        }
        let (col, row) = (idx % w, idx / w);
        let mut is_max = true;
        'nb: for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nc, nr) = (col as i64 + dc, row as i64 + dr);
                if nc < 0 || nr < 0 || nc >= w as i64 || nr >= h as i64 {
                    continue;
                }
                let nidx = nr as usize * w + nc as usize;
                if !f.missing[nidx] && !precedes(idx, nidx) {
                    is_max = false;
                    break 'nb;
                }
            }
        }
        if is_max {
            out.push(idx);
        }
    }
    out
}

/// Random discrete-valued field: small level count provokes plateaus and
/// sweep-order tie-breaks.
pub fn random_field<R: Rng>(rng: &mut R, w: usize, h: usize, levels: u32) -> ScalarField {
    let mut f = ScalarField::new(w, h, (1.0, 1.0)).unwrap();
    f.values = (0..w * h).map(|_| rng.random_range(0..levels) as f64).collect();
    f
}

/// Random measure network with uniform masses over `n` nodes, random
/// symmetric relation and random planar attributes inside `span_km`.
pub fn random_network<R: Rng>(rng: &mut R, n: usize, span_km: f64) -> MeasureNetwork {
    let mut masses = vec![1.0 / n as f64; n];
    if n > 1 {
        let partial: f64 = masses[..n - 1].iter().sum();
        masses[n - 1] = 1.0 - partial;
    } else {
        masses[0] = 1.0;
    }
    let mut distances = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = rng.random_range(0.0..10.0);
            distances[(i, j)] = d;
            distances[(j, i)] = d;
        }
    }
    let attributes = (0..n)
        .map(|_| (rng.random_range(0.0..span_km), rng.random_range(0.0..span_km)))
        .collect();
    MeasureNetwork {
        node_ids: (0..n as u32).collect(),
        masses,
        distances,
        attributes,
    }
}

/// Minimizes `c . x` over `{ x >= 0, a_ub x <= b_ub, a_eq x = b_eq }` with a
/// dense two-phase tableau simplex. Bland's rule picks both the entering
/// column and the leaving row, so the walk over basic feasible solutions
/// (polytope vertices) terminates without cycling. Panics on infeasible or
/// malformed input: the oracle is only ever handed feasible programs.
pub fn lp_minimize(
    c: &[f64],
    a_ub: &[Vec<f64>],
    b_ub: &[f64],
    a_eq: &[Vec<f64>],
    b_eq: &[f64],
) -> f64 {
    const EPS: f64 = 1e-10;
    let n = c.len();
    let rows = a_ub.len() + a_eq.len();
    let slacks = a_ub.len();
    let arts = a_eq.len();
    let total = n + slacks + arts;

    // Tableau: one row per constraint, columns [structural | slack | art | rhs].
    let mut t = vec![vec![0.0f64; total + 1]; rows];
    let mut basis = vec![0usize; rows];
    for (i, (row, &b)) in a_ub.iter().zip(b_ub).enumerate() {
        assert!(b >= -EPS, "ub right-hand side must be nonnegative");
        assert_eq!(row.len(), n);
        t[i][..n].copy_from_slice(row);
        t[i][n + i] = 1.0;
        t[i][total] = b.max(0.0);
        basis[i] = n + i;
    }
    for (k, (row, &b)) in a_eq.iter().zip(b_eq).enumerate() {
        let i = slacks + k;
        assert!(b >= -EPS, "eq right-hand side must be nonnegative");
        assert_eq!(row.len(), n);
        t[i][..n].copy_from_slice(row);
        t[i][n + slacks + k] = 1.0;
        t[i][total] = b.max(0.0);
        basis[i] = n + slacks + k;
    }

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, e: usize| {
        let scale = t[r][e];
        for x in t[r].iter_mut() {
            *x /= scale;
        }
        let prow = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[e];
            if factor == 0.0 {
                continue;
            }
            for (x, p) in row.iter_mut().zip(&prow) {
                *x -= factor * p;
            }
        }
        basis[r] = e;
    };

    // One simplex phase: minimizes `cost . x` over the current tableau,
    // never letting columns in `banned..` (re)enter.
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], banned: usize| {
        loop {
            let mut entering = None;
            for j in 0..banned {
                if basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * t[i][j])
                        .sum::<f64>();
                if reduced < -EPS {
                    entering = Some(j);
                    break; // Bland: first improving column.
                }
            }
            let Some(e) = entering else { break };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][e] > EPS {
                    let ratio = t[i][total] / t[i][e];
                    let better = match leave {
                        None => true,
                        // Bland: on ratio ties keep the lowest basic index.
                        Some((li, lr)) => {
                            ratio < lr - EPS || (ratio < lr + EPS && basis[i] < basis[li])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let (r, _) = leave.expect("unbounded linear program in oracle");
            pivot(t, basis, r, e);
        }
    };

    // Phase 1: drive the artificials to zero.
    let mut cost1 = vec![0.0; total];
    cost1[n + slacks..total].fill(1.0);
    run(&mut t, &mut basis, &cost1, total);
    let phase1: f64 = basis
        .iter()
        .enumerate()
        .map(|(i, &b)| if b >= n + slacks { t[i][total] } else { 0.0 })
        .sum();
    assert!(phase1 <= 1e-8, "oracle linear program is infeasible ({phase1})");

    // Phase 2: true objective; artificial columns may not re-enter.
    let mut cost2 = vec![0.0; total];
    cost2[..n].copy_from_slice(c);
    run(&mut t, &mut basis, &cost2, n + slacks);

    basis
        .iter()
        .enumerate()
        .map(|(i, &b)| if b < n { c[b] * t[i][total] } else { 0.0 })
        .sum()
}

/// Exact partial-transport optimum `min <cost, C>` subject to
/// `C 1 <= p1`, `C^T 1 <= p2`, `1^T C 1 = m`, `C >= 0`, via [`lp_minimize`].
pub fn partial_ot_optimum(cost: &Array2<f64>, p1: &[f64], p2: &[f64], m: f64) -> f64 {
    let (n1, n2) = cost.dim();
    let var = |i: usize, j: usize| i * n2 + j;
    let c: Vec<f64> = (0..n1 * n2).map(|k| cost[(k / n2, k % n2)]).collect();
    let mut a_ub = Vec::with_capacity(n1 + n2);
    let mut b_ub = Vec::with_capacity(n1 + n2);
    for i in 0..n1 {
        let mut row = vec![0.0; n1 * n2];
        for j in 0..n2 {
            row[var(i, j)] = 1.0;
        }
        a_ub.push(row);
        b_ub.push(p1[i]);
    }
    for j in 0..n2 {
        let mut row = vec![0.0; n1 * n2];
        for i in 0..n1 {
            row[var(i, j)] = 1.0;
        }
        a_ub.push(row);
        b_ub.push(p2[j]);
    }
    let a_eq = vec![vec![1.0; n1 * n2]];
    let b_eq = vec![m];
    lp_minimize(&c, &a_ub, &b_ub, &a_eq, &b_eq)
}
