//! Exact balanced transportation solver.
//!
//! Classic transportation simplex: northwest-corner start, dual (u, v)
//! recomputation over the basis tree, most-negative entering rule with a
//! least-index fallback after a run of degenerate pivots so the method cannot
//! cycle. Solutions are basic, so cells outside the final basis are exact
//! zeros.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub flows: Array2<f64>,
    pub objective: f64,
}

struct Basis {
    rows: usize,
    cols: usize,
    /// Basic cells `(i, j, flow)`; always `rows + cols - 1` entries.
    cells: Vec<(usize, usize, f64)>,
}

impl Basis {
    /// Node indexing for the basis tree: rows are 0..R, columns R..R+C.
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for (idx, &(i, j, _)) in self.cells.iter().enumerate() {
            adj[i].push(idx);
            adj[self.rows + j].push(idx);
        }
        adj
    }

    /// Solves `u_i + v_j = c_ij` over the spanning tree of basic cells.
    fn duals(&self, cost: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut u = vec![f64::NAN; self.rows];
        let mut v = vec![f64::NAN; self.cols];
        u[0] = 0.0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut seen = vec![false; self.rows + self.cols];
        seen[0] = true;
        while let Some(node) = queue.pop_front() {
            for &idx in &adj[node] {
                let (i, j, _) = self.cells[idx];
                let other = if node < self.rows { self.rows + j } else { i };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                if other < self.rows {
                    u[other] = cost[(other, j)] - v[j];
                } else {
                    v[other - self.rows] = cost[(i, other - self.rows)] - u[i];
                }
                queue.push_back(other);
            }
        }
        (u, v)
    }

    /// Unique path of basic cells between row `i` and column `j`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let target = self.rows + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.rows + self.cols];
        let mut seen = vec![false; self.rows + self.cols];
        seen[i] = true;
        let mut queue = std::collections::VecDeque::from([i]);
        'bfs: while let Some(node) = queue.pop_front() {
            for &idx in &adj[node] {
                let (ci, cj, _) = self.cells[idx];
                let other = if node < self.rows { self.rows + cj } else { ci };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                parent[other] = Some((node, idx));
                if other == target {
                    break 'bfs;
                }
                queue.push_back(other);
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while node != i {
            let (prev, idx) = parent[node].expect("basis tree is connected");
            path.push(idx);
            node = prev;
        }
        path.reverse();
        path
    }
}

fn northwest_corner(supplies: &[f64], demands: &[f64]) -> Basis {
    let (rows, cols) = (supplies.len(), demands.len());
    let mut a = supplies.to_vec();
    let mut b = demands.to_vec();
    let mut cells = Vec::with_capacity(rows + cols - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let theta = a[i].min(b[j]).max(0.0);
        cells.push((i, j, theta));
        a[i] -= theta;
        b[j] -= theta;
        if i == rows - 1 && j == cols - 1 {
            break;
        }
        if (a[i] <= b[j] && i < rows - 1) || j == cols - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    Basis { rows, cols, cells }
}

/// Exact minimum-cost plan for a balanced problem (`sum supplies` equals
/// `sum demands` up to float drift, which the start-up rule absorbs).
pub fn balanced_transport(
    cost: &Array2<f64>,
    supplies: &[f64],
    demands: &[f64],
) -> Result<TransportPlan> {
    let (rows, cols) = cost.dim();
    if rows != supplies.len() || cols != demands.len() {
        return Err(Error::InvalidArgument("transport shape mismatch".into()));
    }
    if supplies.iter().chain(demands.iter()).any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument(
            "transport supplies and demands must be nonnegative".into(),
        ));
    }
    let scale = cost.iter().fold(1.0f64, |m, &c| m.max(c.abs()));
    let tol = 1e-12 * scale;
    let mut basis = northwest_corner(supplies, demands);

    let max_pivots = 1000 + 200 * (rows * cols);
    let degen_limit = 4 * (rows + cols);
    let mut degen_run = 0usize;
    let mut bland = false;

    for _pivot in 0..max_pivots {
        let (u, v) = basis.duals(cost);
        let mut entering: Option<(f64, usize, usize)> = None;
        'scan: for i in 0..rows {
            for j in 0..cols {
                let rc = cost[(i, j)] - u[i] - v[j];
                if rc < -tol {
                    if bland {
                        entering = Some((rc, i, j));
                        break 'scan;
                    }
                    match entering {
                        Some((best, _, _)) if best <= rc => {}
                        _ => entering = Some((rc, i, j)),
                    }
                }
            }
        }
        let Some((_, ei, ej)) = entering else {
            let objective = basis.cells.iter().map(|&(i, j, f)| cost[(i, j)] * f).sum();
            let mut flows = Array2::zeros((rows, cols));
            for &(i, j, f) in &basis.cells {
                flows[(i, j)] += f.max(0.0);
            }
            return Ok(TransportPlan { flows, objective });
        };

        // Entering cell gains +theta; path cells alternate -, +, ... so odd
        // positions lose flow.
        let path = basis.path(ei, ej);
        let mut leaving: Option<(f64, usize, usize, usize)> = None;
        for (pos, &idx) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let (i, j, flow) = basis.cells[idx];
                let key = (flow, i, j, idx);
                match leaving {
                    Some((lf, li, lj, _)) if (lf, li, lj) <= (flow, i, j) => {}
                    _ => leaving = Some(key),
                }
            }
        }
        let (theta, _, _, leave_idx) = leaving.expect("cycle has a leaving candidate");

        for (pos, &idx) in path.iter().enumerate() {
            if idx == leave_idx {
                continue;
            }
            if pos % 2 == 0 {
                let f = basis.cells[idx].2;
                basis.cells[idx].2 = if f <= theta { 0.0 } else { f - theta };
            } else {
                basis.cells[idx].2 += theta;
            }
        }
        basis.cells[leave_idx] = (ei, ej, theta);

        if theta <= tol {
            degen_run += 1;
            if degen_run > degen_limit {
                bland = true;
            }
        } else {
            degen_run = 0;
        }
    }
    Err(Error::SolverStalled(max_pivots))
}
