//! Partial fused Gromov-Wasserstein matching between measure networks.
//!
//! The relaxed coupling set for mass `m` is
//! `{ C >= 0 : C 1 <= p1, C^T 1 <= p2, 1^T C 1 = m }`.
//! The objective blends attribute and structural misfit:
//! `F(C) = (1 - alpha) <D_A^q, C> + alpha * sum |W1(i,k) - W2(j,l)|^q C_ij C_kl`,
//! minimized by conditional gradient. Each linearized step is solved exactly
//! by adding one virtual supply row and demand column that absorb the
//! unmatched mass, with a prohibitively expensive virtual-virtual cell, and
//! running the balanced transportation simplex on the extended problem.

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};
use crate::measure::MeasureNetwork;
use crate::transport::balanced_transport;

/// Coupling entries below this mass are treated as numerically empty by the
/// displacement screen in [`auto_select_mass`].
pub const MASS_EPSILON: f64 = 1e-6;

const MAX_ITERATIONS: usize = 200;
const RELATIVE_DECREASE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Coupling {
    pub matrix: Array2<f64>,
    /// Total transported mass, `matrix.sum()`.
    pub mass: f64,
}

impl Coupling {
    /// Checks the relaxed marginal constraints within `tol`.
    pub fn is_feasible(&self, p1: &[f64], p2: &[f64], m: f64, tol: f64) -> bool {
        let (n1, n2) = self.matrix.dim();
        if n1 != p1.len() || n2 != p2.len() {
            return false;
        }
        if self.matrix.iter().any(|&x| x < -tol) {
            return false;
        }
        for (i, row) in self.matrix.rows().into_iter().enumerate() {
            if row.sum() > p1[i] + tol {
                return false;
            }
        }
        for (j, col) in self.matrix.columns().into_iter().enumerate() {
            if col.sum() > p2[j] + tol {
                return false;
            }
        }
        (self.matrix.sum() - m).abs() <= tol
    }
}

#[derive(Debug, Clone)]
pub struct PfgwResult {
    /// Final objective value (q-th power form).
    pub distance_q: f64,
    pub coupling: Coupling,
    /// Conditional-gradient update steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// Objective after each evaluation, nonincreasing.
    pub objective_trace: Vec<f64>,
}

/// Outcome of the descending mass search.
#[derive(Debug, Clone)]
pub struct MassSelection {
    pub m: f64,
    pub result: PfgwResult,
    /// True when no mass in the range passed the displacement screen and the
    /// lowest-mass coupling was returned with far entries zeroed.
    pub screen_fallback: bool,
}

fn validate_marginals(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("marginal vector is empty".into()));
    }
    if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("marginals must be nonnegative and finite".into()));
    }
    Ok(())
}

/// Exact partial optimal transport: minimizes `<cost, C>` over couplings
/// moving exactly mass `m` under relaxed marginals `p1`, `p2`.
pub fn solve_partial_linear_ot(
    cost: &Array2<f64>,
    p1: &[f64],
    p2: &[f64],
    m: f64,
) -> Result<Coupling> {
    let (n1, n2) = cost.dim();
    if n1 != p1.len() || n2 != p2.len() {
        return Err(Error::InvalidArgument("cost shape does not match marginals".into()));
    }
    validate_marginals(p1)?;
    validate_marginals(p2)?;
    let s1: f64 = p1.iter().sum();
    let s2: f64 = p2.iter().sum();
    let cap = s1.min(s2);
    if !(m > 0.0) || m > cap + 1e-9 {
        return Err(Error::MassOutOfRange { m, max: cap });
    }
    let m_eff = m.min(cap);

    // Extended balanced problem: a virtual supply row absorbs unmet demand
    // and a virtual demand column absorbs unsent supply, both at zero cost;
    // the virtual-virtual cell is priced out so real mass lands at m.
    let shift = cost.iter().fold(0.0f64, |acc, &c| acc.min(c));
    let peak = cost.iter().fold(0.0f64, |acc, &c| acc.max(c - shift));
    let forbid = 2.0 * peak + 1.0;
    let mut ext = Array2::zeros((n1 + 1, n2 + 1));
    for i in 0..n1 {
        for j in 0..n2 {
            ext[(i, j)] = cost[(i, j)] - shift;
        }
    }
    ext[(n1, n2)] = forbid;

    let mut supplies = p1.to_vec();
    supplies.push((s2 - m_eff).max(0.0));
    let mut demands = p2.to_vec();
    demands.push((s1 - m_eff).max(0.0));

    let plan = balanced_transport(&ext, &supplies, &demands)?;
    let mut matrix = plan.flows.slice(ndarray::s![..n1, ..n2]).to_owned();

    // Degenerate pivots can leave 1e-17-scale dust on basic cells; clear it
    // when it is collectively negligible so empty cells are exact zeros.
    let dust: f64 = matrix.iter().filter(|&&x| x.abs() < 1e-12).map(|&x| x.abs()).sum();
    if dust <= 1e-10 {
        matrix.mapv_inplace(|x| if x.abs() < 1e-12 { 0.0 } else { x });
    }
    let mass = matrix.sum();
    Ok(Coupling { matrix, mass })
}

/// Per-solve context for the conditional-gradient iteration.
struct Objective<'a> {
    dq: Array2<f64>,
    w1: &'a Array2<f64>,
    w2: &'a Array2<f64>,
    w1sq: Array2<f64>,
    w2sq: Array2<f64>,
    alpha: f64,
    q: u32,
}

impl<'a> Objective<'a> {
    fn new(net1: &'a MeasureNetwork, net2: &'a MeasureNetwork, alpha: f64, q: u32) -> Self {
        let (n1, n2) = (net1.len(), net2.len());
        let mut dq = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let (x1, y1) = net1.attributes[i];
                let (x2, y2) = net2.attributes[j];
                let d2 = (x1 - x2) * (x1 - x2) + (y1 - y2) * (y1 - y2);
                dq[(i, j)] = if q == 2 { d2 } else { d2.sqrt().powi(q as i32) };
            }
        }
        Objective {
            dq,
            w1: &net1.distances,
            w2: &net2.distances,
            w1sq: net1.distances.mapv(|x| x * x),
            w2sq: net2.distances.mapv(|x| x * x),
            alpha,
            q,
        }
    }

    /// `L(C)_ij = sum_kl |W1(i,k) - W2(j,l)|^q C_kl`.
    fn structural(&self, c: &Array2<f64>) -> Array2<f64> {
        let (n1, n2) = c.dim();
        if self.q == 2 {
            // |a-b|^2 = a^2 + b^2 - 2ab splits into three matrix products.
            let row_mass: Array1<f64> = c.sum_axis(Axis(1));
            let col_mass: Array1<f64> = c.sum_axis(Axis(0));
            let a = self.w1sq.dot(&row_mass);
            let b = self.w2sq.dot(&col_mass);
            let cross = self.w1.dot(c).dot(self.w2);
            let mut out = Array2::zeros((n1, n2));
            for i in 0..n1 {
                for j in 0..n2 {
                    out[(i, j)] = a[i] + b[j] - 2.0 * cross[(i, j)];
                }
            }
            out
        } else {
            let mut out = Array2::zeros((n1, n2));
            for i in 0..n1 {
                for j in 0..n2 {
                    let mut acc = 0.0;
                    for k in 0..n1 {
                        for l in 0..n2 {
                            let gap = (self.w1[(i, k)] - self.w2[(j, l)]).abs();
                            acc += gap.powi(self.q as i32) * c[(k, l)];
                        }
                    }
                    out[(i, j)] = acc;
                }
            }
            out
        }
    }

    fn value_with(&self, c: &Array2<f64>, lc: &Array2<f64>) -> f64 {
        let lin: f64 = self.dq.iter().zip(c.iter()).map(|(d, x)| d * x).sum();
        let quad: f64 = lc.iter().zip(c.iter()).map(|(l, x)| l * x).sum();
        (1.0 - self.alpha) * lin + self.alpha * quad
    }

    fn value(&self, c: &Array2<f64>) -> f64 {
        let lc = self.structural(c);
        self.value_with(c, &lc)
    }

    fn gradient(&self, lc: &Array2<f64>) -> Array2<f64> {
        let mut g = lc.mapv(|x| 2.0 * self.alpha * x);
        g.scaled_add(1.0 - self.alpha, &self.dq);
        g
    }
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Orders a network pair canonically so that solving `(N1, N2)` and
/// `(N2, N1)` runs the same computation, mirrored.
fn canonical_order(net1: &MeasureNetwork, net2: &MeasureNetwork) -> bool {
    use std::cmp::Ordering;
    let cmp_f64s = |a: &[f64], b: &[f64]| -> Ordering {
        for (x, y) in a.iter().zip(b.iter()) {
            let o = x.total_cmp(y);
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    };
    let order = net1
        .len()
        .cmp(&net2.len())
        .then_with(|| cmp_f64s(&net1.masses, &net2.masses))
        .then_with(|| {
            let a1: Vec<f64> = net1.attributes.iter().flat_map(|&(x, y)| [x, y]).collect();
            let a2: Vec<f64> = net2.attributes.iter().flat_map(|&(x, y)| [x, y]).collect();
            cmp_f64s(&a1, &a2)
        })
        .then_with(|| {
            cmp_f64s(
                net1.distances.as_slice().expect("row-major"),
                net2.distances.as_slice().expect("row-major"),
            )
        });
    order != std::cmp::Ordering::Greater
}

/// Conditional-gradient solve from the product initialization `m p1 p2^T`.
pub fn solve_pfgw(
    net1: &MeasureNetwork,
    net2: &MeasureNetwork,
    alpha: f64,
    m: f64,
    q: u32,
) -> Result<PfgwResult> {
    solve_pfgw_from(net1, net2, alpha, m, q, None)
}

/// Conditional-gradient solve with an optional warm-start coupling.
pub fn solve_pfgw_from(
    net1: &MeasureNetwork,
    net2: &MeasureNetwork,
    alpha: f64,
    m: f64,
    q: u32,
    init: Option<&Array2<f64>>,
) -> Result<PfgwResult> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if q == 0 {
        return Err(Error::InvalidArgument("exponent q must be at least 1".into()));
    }
    if canonical_order(net1, net2) {
        return solve_oriented(net1, net2, alpha, m, q, init.cloned());
    }
    let flipped = init.map(|c| c.t().to_owned());
    let mut result = solve_oriented(net2, net1, alpha, m, q, flipped)?;
    result.coupling.matrix = result.coupling.matrix.t().to_owned();
    Ok(result)
}

fn solve_oriented(
    net1: &MeasureNetwork,
    net2: &MeasureNetwork,
    alpha: f64,
    m: f64,
    q: u32,
    init: Option<Array2<f64>>,
) -> Result<PfgwResult> {
    let (n1, n2) = (net1.len(), net2.len());
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidArgument("measure networks must be nonempty".into()));
    }
    let (p1, p2) = (&net1.masses, &net2.masses);
    let s1: f64 = p1.iter().sum();
    let s2: f64 = p2.iter().sum();
    let cap = s1.min(s2);
    if !(m > 0.0) || m > cap + 1e-9 {
        return Err(Error::MassOutOfRange { m, max: cap });
    }

    let mut c = match init {
        Some(c0) => {
            if c0.dim() != (n1, n2) {
                return Err(Error::InvalidArgument("warm-start coupling has wrong shape".into()));
            }
            let probe = Coupling { matrix: c0.clone(), mass: c0.sum() };
            if !probe.is_feasible(p1, p2, m, 1e-6) {
                return Err(Error::InvalidArgument("warm-start coupling is infeasible".into()));
            }
            c0
        }
        None => {
            let mut c0 = Array2::zeros((n1, n2));
            for i in 0..n1 {
                for j in 0..n2 {
                    c0[(i, j)] = m * p1[i] * p2[j] / (s1 * s2);
                }
            }
            c0
        }
    };

    let objective = Objective::new(net1, net2, alpha, q);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::INFINITY;

    loop {
        let lc = objective.structural(&c);
        let obj = objective.value_with(&c, &lc);
        trace.push(obj);
        if prev.is_finite() {
            let decrease = prev - obj;
            if decrease <= RELATIVE_DECREASE * prev.abs().max(1e-30) {
                converged = true;
                break;
            }
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        prev = obj;

        let grad = objective.gradient(&lc);
        let direction = solve_partial_linear_ot(&grad, p1, p2, m)?;
        let delta = &direction.matrix - &c;

        // The objective restricted to the segment is the quadratic
        // a g^2 + b g + obj.
        let l_delta = objective.structural(&delta);
        let a = objective.alpha * inner(&l_delta, &delta);
        let b = (1.0 - objective.alpha) * inner(&objective.dq, &delta)
            + 2.0 * objective.alpha * inner(&lc, &delta);
        let gamma = if a > 0.0 {
            (-b / (2.0 * a)).clamp(0.0, 1.0)
        } else if a + b <= 0.0 {
            1.0
        } else {
            0.0
        };
        c.scaled_add(gamma, &delta);
        iterations += 1;
    }

    // Prefer an exact vertex when it matches the reached objective: resolve
    // the final linearization and keep the vertex if it is at least as good.
    let lc = objective.structural(&c);
    let mut best_obj = objective.value_with(&c, &lc);
    let grad = objective.gradient(&lc);
    if let Ok(vertex) = solve_partial_linear_ot(&grad, p1, p2, m) {
        let vertex_obj = objective.value(&vertex.matrix);
        if vertex_obj <= best_obj {
            c = vertex.matrix;
            best_obj = vertex_obj;
            trace.push(vertex_obj);
        }
    }

    let mass = c.sum();
    Ok(PfgwResult {
        distance_q: best_obj,
        coupling: Coupling { matrix: c, mass },
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Euclidean attribute distances in km, the screen used by the mass search.
fn attribute_km(net1: &MeasureNetwork, net2: &MeasureNetwork) -> Array2<f64> {
    let mut d = Array2::zeros((net1.len(), net2.len()));
    for i in 0..net1.len() {
        for j in 0..net2.len() {
            let (x1, y1) = net1.attributes[i];
            let (x2, y2) = net2.attributes[j];
            d[(i, j)] = ((x1 - x2) * (x1 - x2) + (y1 - y2) * (y1 - y2)).sqrt();
        }
    }
    d
}

/// Copies of both networks with attributes scaled so the largest
/// cross-network distance is 1 and structural relations scaled by their
/// shared maximum. Makes the two fused terms range-comparable.
pub fn normalized_pair(
    net1: &MeasureNetwork,
    net2: &MeasureNetwork,
) -> (MeasureNetwork, MeasureNetwork) {
    let km = attribute_km(net1, net2);
    let attr_scale = km.iter().fold(0.0f64, |a, &d| a.max(d)).max(f64::MIN_POSITIVE);
    let w_peak = net1
        .distances
        .iter()
        .chain(net2.distances.iter())
        .fold(0.0f64, |a, &w| a.max(w))
        .max(f64::MIN_POSITIVE);
    let scale = |net: &MeasureNetwork| MeasureNetwork {
        node_ids: net.node_ids.clone(),
        masses: net.masses.clone(),
        distances: net.distances.mapv(|w| w / w_peak),
        attributes: net.attributes.iter().map(|&(x, y)| (x / attr_scale, y / attr_scale)).collect(),
    };
    (scale(net1), scale(net2))
}

/// Walks the mass grid from `m_range.1` down in steps of `m_step` and keeps
/// the first coupling whose entries of at least [`MASS_EPSILON`] all connect
/// nodes within `max_match_km`. When no mass qualifies, the lowest-mass
/// coupling is returned with far entries zeroed and the fallback flag set.
/// With `normalize`, the solve runs on range-normalized copies while the
/// screen always measures raw km.
#[allow(clippy::too_many_arguments)]
pub fn auto_select_mass(
    net1: &MeasureNetwork,
    net2: &MeasureNetwork,
    alpha: f64,
    q: u32,
    m_range: (f64, f64),
    m_step: f64,
    max_match_km: f64,
    normalize: bool,
) -> Result<MassSelection> {
    let (lo, hi) = m_range;
    if !(lo <= hi) {
        return Err(Error::EmptyMassRange { lo, hi });
    }
    if !(lo > 0.0) || hi > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "mass range [{lo}, {hi}] must sit inside (0, 1]"
        )));
    }
    if !(m_step > 0.0) {
        return Err(Error::InvalidArgument(format!("m_step must be positive, got {m_step}")));
    }
    if !(max_match_km > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "max_match_km must be positive, got {max_match_km}"
        )));
    }

    let km = attribute_km(net1, net2);
    let offenders = |c: &Array2<f64>| -> bool {
        c.indexed_iter()
            .any(|((i, j), &mass)| mass >= MASS_EPSILON && km[(i, j)] > max_match_km)
    };
    let scaled = if normalize { Some(normalized_pair(net1, net2)) } else { None };
    let (solve1, solve2) = match &scaled {
        Some((a, b)) => (a, b),
        None => (net1, net2),
    };

    let mut m = hi;
    let mut last: Option<(f64, PfgwResult)> = None;
    while m >= lo - 1e-12 {
        let result = solve_pfgw(solve1, solve2, alpha, m, q)?;
        if !offenders(&result.coupling.matrix) {
            return Ok(MassSelection { m, result, screen_fallback: false });
        }
        last = Some((m, result));
        m -= m_step;
    }

    let (m, mut result) = last.expect("mass grid is nonempty");
    for ((i, j), entry) in result.coupling.matrix.indexed_iter_mut() {
        if km[(i, j)] > max_match_km {
            *entry = 0.0;
        }
    }
    result.coupling.mass = result.coupling.matrix.sum();
    result.distance_q = Objective::new(solve1, solve2, alpha, q).value(&result.coupling.matrix);
    Ok(MassSelection { m, result, screen_fallback: true })
}
