//! Exact solvers for the allocation problem.
//!
//! The model is a multiple-choice knapsack: each patient is a class, the
//! applicable treatments are its options, and the budget couples the classes.
//! Three interchangeable solvers are provided:
//!
//! - [`SolverKind::Exhaustive`] — plain enumeration; the test oracle.
//! - [`SolverKind::DynamicProgram`] — DP over (patient, scaled residual
//!   budget); costs are first reduced by each patient's cheapest option so the
//!   capacity axis only spans the overhead, not the full budget.
//! - [`SolverKind::BranchAndBound`] — depth-first search with an LP-relaxation
//!   bound (per-patient dominance removal + upper concave hull + greedy
//!   best-ratio fill) and a greedy warm-start incumbent.
//!
//! All solvers agree on the rounded-cost semantics: each treatment cost is
//! rounded *up* to a multiple of `cost_resolution` and the budget rounded
//! *down*, so any assignment feasible in rounded units is feasible against the
//! true budget. Values within 1e-6 relative of an exact multiple snap to it,
//! keeping catalogs quoted in 2–3 decimals exact at the default resolution.
//!
//! Tie-breaking: `Exhaustive` prefers, among equal objectives, the lower total
//! cost and then the lexicographically smallest chosen vector. The DP and B&B
//! are deterministic but may return a different member of the optimal set; the
//! objective always matches the oracle.

use crate::model::{Assignment, ScenarioInstance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which solve path to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    Exhaustive,
    DynamicProgram,
    BranchAndBound,
}

/// Solve outcome plus effort accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub assignment: Assignment,
    pub kind: SolverKind,
    /// Enumerated leaves (exhaustive), DP states, or expanded B&B nodes.
    pub nodes_or_states: u64,
    /// Root LP-relaxation bound (B&B only).
    pub lp_bound: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolveError {
    #[error("no assignment fits the budget")]
    Infeasible,
    #[error("budget/cost_resolution exceeds the DP state bound; raise cost_resolution or use branch-and-bound")]
    ResolutionOverflow,
}

/// DP state-count ceiling (patients × capacity cells).
const MAX_DP_STATES: u64 = 200_000_000;
/// Absolute slack when pruning against the incumbent.
const PRUNE_EPS: f64 = 1e-12;

/// Round `x/res` up to an integer, snapping to the nearest integer when `x`
/// is within 1e-6 relative of an exact multiple (so decimal-quoted costs are
/// represented exactly despite binary floating point).
fn units_ceil(x: f64, res: f64) -> i64 {
    let q = x / res;
    let r = q.round();
    if (q - r).abs() <= 1e-6 * q.abs().max(1.0) {
        r as i64
    } else {
        q.ceil() as i64
    }
}

fn units_floor(x: f64, res: f64) -> i64 {
    let q = x / res;
    let r = q.round();
    if (q - r).abs() <= 1e-6 * q.abs().max(1.0) {
        r as i64
    } else {
        q.floor() as i64
    }
}

/// One selectable option of a patient, in rounded cost units.
#[derive(Debug, Clone, Copy)]
struct Option_ {
    treatment: usize,
    w: i64,
    v: f64,
}

/// Instance preprocessed into per-patient option lists with reduced costs.
struct Prepped {
    /// Per patient, options sorted by (w asc, v desc, treatment asc); weights
    /// reduced by the patient's minimum weight.
    options: Vec<Vec<Option_>>,
    /// Value of each patient's cheapest option (the reduction baseline).
    base_v: Vec<f64>,
    /// Residual capacity after paying every patient's cheapest option.
    capacity: i64,
    /// True when patient i has exactly the same option list as patient i−1;
    /// used by B&B to break the permutation symmetry of identical patients.
    same_as_prev: Vec<bool>,
}

fn prep(inst: &ScenarioInstance, res: f64) -> Result<Prepped, SolveError> {
    let n = inst.n_patients();
    let mut options = Vec::with_capacity(n);
    let mut base_v = Vec::with_capacity(n);
    let mut base_w_total: i64 = 0;
    for (i, p) in inst.patients.iter().enumerate() {
        let mut opts: Vec<Option_> = inst
            .applicable(p.illness)
            .map(|j| Option_ {
                treatment: j,
                w: units_ceil(inst.treatments[j].oeb, res),
                v: inst.realized_csr[i][j],
            })
            .collect();
        if opts.is_empty() {
            return Err(SolveError::Infeasible);
        }
        opts.sort_by(|a, b| {
            a.w.cmp(&b.w)
                .then(b.v.partial_cmp(&a.v).unwrap())
                .then(a.treatment.cmp(&b.treatment))
        });
        let wmin = opts[0].w;
        base_w_total += wmin;
        base_v.push(opts[0].v);
        for o in &mut opts {
            o.w -= wmin;
        }
        options.push(opts);
    }
    let capacity = units_floor(inst.budget, res) - base_w_total;
    if capacity < 0 {
        return Err(SolveError::Infeasible);
    }
    let same_as_prev: Vec<bool> = (0..n)
        .map(|i| {
            i > 0
                && options[i].len() == options[i - 1].len()
                && options[i]
                    .iter()
                    .zip(&options[i - 1])
                    .all(|(a, b)| a.treatment == b.treatment && a.w == b.w && a.v == b.v)
        })
        .collect();
    Ok(Prepped {
        options,
        base_v,
        capacity,
        same_as_prev,
    })
}

/// Solve the instance exactly under rounded-cost semantics.
pub fn solve(
    inst: &ScenarioInstance,
    kind: SolverKind,
    cost_resolution: f64,
) -> Result<SolveReport, SolveError> {
    assert!(cost_resolution > 0.0, "cost_resolution must be positive");
    let prepped = prep(inst, cost_resolution)?;
    let (chosen, nodes, lp_bound) = match kind {
        SolverKind::Exhaustive => {
            let (c, n) = solve_exhaustive(inst, &prepped);
            (c, n, None)
        }
        SolverKind::DynamicProgram => {
            let (c, n) = solve_dp(&prepped)?;
            (c, n, None)
        }
        SolverKind::BranchAndBound => {
            let (c, n, b) = solve_bnb(&prepped);
            (c, n, Some(b))
        }
    };
    let (objective, total_cost) = inst.evaluate(&chosen);
    Ok(SolveReport {
        assignment: Assignment {
            chosen,
            objective,
            total_cost,
        },
        kind,
        nodes_or_states: nodes,
        lp_bound,
    })
}

// ---------------------------------------------------------------- exhaustive

fn solve_exhaustive(inst: &ScenarioInstance, p: &Prepped) -> (Vec<usize>, u64) {
    let n = p.options.len();
    let mut current = vec![0usize; n]; // option index per patient
    let mut best: Option<(f64, f64, Vec<usize>)> = None; // (value, true cost, chosen)
    let mut leaves = 0u64;

    // depth-first lexicographic enumeration with a feasibility cut
    fn rec(
        inst: &ScenarioInstance,
        p: &Prepped,
        d: usize,
        cap: i64,
        val: f64,
        current: &mut Vec<usize>,
        best: &mut Option<(f64, f64, Vec<usize>)>,
        leaves: &mut u64,
    ) {
        if d == p.options.len() {
            *leaves += 1;
            let chosen: Vec<usize> = current
                .iter()
                .enumerate()
                .map(|(i, &oi)| p.options[i][oi].treatment)
                .collect();
            let (_, cost) = inst.evaluate(&chosen);
            let better = match best {
                None => true,
                Some((bv, bc, bchosen)) => {
                    val > *bv
                        || (val == *bv && (cost < *bc || (cost == *bc && chosen < *bchosen)))
                }
            };
            if better {
                *best = Some((val, cost, chosen));
            }
            return;
        }
        for (oi, o) in p.options[d].iter().enumerate() {
            if o.w > cap {
                continue;
            }
            current[d] = oi;
            rec(inst, p, d + 1, cap - o.w, val + o.v, current, best, leaves);
        }
    }
    rec(
        inst,
        p,
        0,
        p.capacity,
        0.0,
        &mut current,
        &mut best,
        &mut leaves,
    );
    let (_, _, chosen) = best.expect("cheapest cover is always feasible after prep");
    (chosen, leaves)
}

// ------------------------------------------------------------------------ dp

fn solve_dp(p: &Prepped) -> Result<(Vec<usize>, u64), SolveError> {
    let n = p.options.len();
    let cap = p.capacity as u64;
    let states = (n as u64).saturating_mul(cap + 1);
    if states > MAX_DP_STATES || cap >= i64::MAX as u64 {
        return Err(SolveError::ResolutionOverflow);
    }
    let width = (cap + 1) as usize;
    // choice[i][c]: best option index for patient i given residual capacity c,
    // assuming patients i..n are still unassigned (suffix DP).
    let mut choice = vec![0u16; n * width];
    let mut next = vec![0.0f64; width];
    let mut cur = vec![0.0f64; width];
    for i in (0..n).rev() {
        for c in 0..width {
            let mut best = f64::NEG_INFINITY;
            let mut best_oi = u16::MAX;
            for (oi, o) in p.options[i].iter().enumerate() {
                let w = o.w as usize;
                if w > c {
                    continue;
                }
                let v = o.v + next[c - w];
                if v > best {
                    best = v;
                    best_oi = oi as u16;
                }
            }
            // option 0 has reduced weight 0, so every capacity is feasible
            cur[c] = best;
            choice[i * width + c] = best_oi;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let mut chosen = Vec::with_capacity(n);
    let mut c = cap as usize;
    for (i, opts) in p.options.iter().enumerate() {
        let oi = choice[i * width + c] as usize;
        chosen.push(opts[oi].treatment);
        c -= opts[oi].w as usize;
    }
    Ok((chosen, states))
}

// ------------------------------------------------------ LP relaxation + B&B

/// One concave-hull segment of a patient's option set: upgrading from hull
/// point `from` to `from + 1` costs `dw` units and gains `dv` value.
#[derive(Debug, Clone, Copy)]
struct Segment {
    patient: usize,
    seg_idx: usize,
    dw: i64,
    dv: f64,
    ratio: f64,
}

/// Upper concave hull of a patient's (weight, value) options, starting from
/// the reduced-cost base. Returns hull points as indices into the sorted
/// option list (hull[0] is the base option).
fn concave_hull(opts: &[Option_]) -> Vec<usize> {
    let mut hull: Vec<usize> = vec![0];
    for (oi, o) in opts.iter().enumerate().skip(1) {
        let last = &opts[*hull.last().unwrap()];
        if o.w == last.w || o.v <= last.v {
            continue; // dominated: no cheaper, no better
        }
        hull.push(oi);
        // restore concavity: drop interior points with non-increasing ratio
        while hull.len() >= 3 {
            let a = &opts[hull[hull.len() - 3]];
            let b = &opts[hull[hull.len() - 2]];
            let c = &opts[hull[hull.len() - 1]];
            // keep b only if slope(a,b) > slope(b,c)
            if (b.v - a.v) * (c.w - b.w) as f64 > (c.v - b.v) * (b.w - a.w) as f64 {
                break;
            }
            hull.remove(hull.len() - 2);
        }
    }
    hull
}

fn build_segments(p: &Prepped) -> Vec<Segment> {
    let mut segs = Vec::new();
    for (i, opts) in p.options.iter().enumerate() {
        let hull = concave_hull(opts);
        for k in 1..hull.len() {
            let a = &opts[hull[k - 1]];
            let b = &opts[hull[k]];
            let dw = b.w - a.w;
            let dv = b.v - a.v;
            segs.push(Segment {
                patient: i,
                seg_idx: k - 1,
                dw,
                dv,
                ratio: dv / dw as f64,
            });
        }
    }
    // steepest first; equal ratios keep (patient, seg) order so a patient's
    // own segments stay in hull order
    segs.sort_by(|a, b| {
        b.ratio
            .partial_cmp(&a.ratio)
            .unwrap()
            .then(a.patient.cmp(&b.patient))
            .then(a.seg_idx.cmp(&b.seg_idx))
    });
    segs
}

/// Continuous-relaxation optimum via dominance removal + greedy ratio fill,
/// on true (unrounded) costs. Standard MCKP relaxation bound.
pub fn lp_relaxation_bound(inst: &ScenarioInstance) -> Result<f64, SolveError> {
    let mut base_total = 0.0;
    let mut budget_left = inst.budget;
    let mut segs: Vec<(f64, f64)> = Vec::new(); // (ratio, width) in true cost
    for (i, patient) in inst.patients.iter().enumerate() {
        let mut opts: Vec<(f64, f64)> = inst
            .applicable(patient.illness)
            .map(|j| (inst.treatments[j].oeb, inst.realized_csr[i][j]))
            .collect();
        if opts.is_empty() {
            return Err(SolveError::Infeasible);
        }
        opts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
        base_total += opts[0].1;
        budget_left -= opts[0].0;
        // hull over (cost, value) pairs
        let mut hull: Vec<(f64, f64)> = vec![opts[0]];
        for &(w, v) in &opts[1..] {
            let &(lw, lv) = hull.last().unwrap();
            if w <= lw || v <= lv {
                continue;
            }
            hull.push((w, v));
            while hull.len() >= 3 {
                let (aw, av) = hull[hull.len() - 3];
                let (bw, bv) = hull[hull.len() - 2];
                let (cw, cv) = hull[hull.len() - 1];
                if (bv - av) * (cw - bw) > (cv - bv) * (bw - aw) {
                    break;
                }
                hull.remove(hull.len() - 2);
            }
        }
        for k in 1..hull.len() {
            let dw = hull[k].0 - hull[k - 1].0;
            let dv = hull[k].1 - hull[k - 1].1;
            segs.push((dv / dw, dw));
        }
    }
    if budget_left < -1e-9 {
        return Err(SolveError::Infeasible);
    }
    segs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut bound = base_total;
    let mut cap = budget_left.max(0.0);
    for (ratio, dw) in segs {
        if cap <= 0.0 {
            break;
        }
        let take = dw.min(cap);
        bound += take * ratio;
        cap -= take;
    }
    Ok(bound)
}

// ----------------------------------------------------------------------- bnb

struct Bnb<'a> {
    p: &'a Prepped,
    /// Segments grouped by exact ratio value, steepest group first.
    group_ratio: Vec<f64>,
    /// group -> list of (patient, width); used to retire a patient's widths.
    group_of_seg: Vec<Vec<(usize, i64)>>,
    /// Remaining fractional width per group among patients not yet fixed.
    avail: Vec<i64>,
    /// Σ base_v over patients d..n.
    suffix_base: Vec<f64>,
    best_val: f64,
    best_chosen: Vec<usize>, // option index per patient
    nodes: u64,
    current: Vec<usize>,
}

impl<'a> Bnb<'a> {
    /// Greedy fractional fill over the remaining segment groups.
    fn bound_tail(&self, mut cap: i64) -> f64 {
        let mut gain = 0.0;
        for (g, &ratio) in self.group_ratio.iter().enumerate() {
            if cap <= 0 {
                break;
            }
            let take = self.avail[g].min(cap);
            if take > 0 {
                gain += take as f64 * ratio;
                cap -= take;
            }
        }
        gain
    }

    fn dfs(&mut self, d: usize, cap: i64, val: f64) {
        self.nodes += 1;
        let n = self.p.options.len();
        if d == n {
            if val > self.best_val + PRUNE_EPS {
                self.best_val = val;
                self.best_chosen = self.current.clone();
            }
            return;
        }
        // retire this patient's hull widths from the fractional pool
        let mut retired: Vec<(usize, i64)> = Vec::new();
        for (g, segs) in self.group_of_seg.iter().enumerate() {
            for &(patient, w) in segs {
                if patient == d {
                    retired.push((g, w));
                }
            }
        }
        for &(g, w) in &retired {
            self.avail[g] -= w;
        }

        // symmetry breaking: identical patients take non-decreasing option
        // indices, so each multiset of choices is explored exactly once
        let min_oi = if self.p.same_as_prev[d] {
            self.current[d - 1]
        } else {
            0
        };

        // children ordered by value desc so the dive follows the greedy path
        let mut order: Vec<usize> = (min_oi..self.p.options[d].len()).collect();
        order.sort_by(|&a, &b| {
            let oa = &self.p.options[d][a];
            let ob = &self.p.options[d][b];
            ob.v.partial_cmp(&oa.v)
                .unwrap()
                .then(oa.w.cmp(&ob.w))
                .then(oa.treatment.cmp(&ob.treatment))
        });
        for oi in order {
            let o = self.p.options[d][oi];
            if o.w > cap {
                continue;
            }
            let child_val = val + o.v;
            let bound = child_val + self.suffix_base[d + 1] + self.bound_tail(cap - o.w);
            if bound <= self.best_val + PRUNE_EPS {
                continue;
            }
            self.current[d] = oi;
            self.dfs(d + 1, cap - o.w, child_val);
        }

        for &(g, w) in &retired {
            self.avail[g] += w;
        }
    }
}

fn solve_bnb(p: &Prepped) -> (Vec<usize>, u64, f64) {
    let n = p.options.len();
    let segs = build_segments(p);

    // group equal-ratio segments so the bound is O(#distinct ratios)
    let mut group_ratio: Vec<f64> = Vec::new();
    let mut group_of_seg: Vec<Vec<(usize, i64)>> = Vec::new();
    let mut seg_group: Vec<usize> = Vec::new();
    for s in &segs {
        if group_ratio.last() != Some(&s.ratio) {
            group_ratio.push(s.ratio);
            group_of_seg.push(Vec::new());
        }
        let g = group_ratio.len() - 1;
        group_of_seg[g].push((s.patient, s.dw));
        seg_group.push(g);
    }
    let avail: Vec<i64> = group_of_seg
        .iter()
        .map(|v| v.iter().map(|&(_, w)| w).sum())
        .collect();

    let mut suffix_base = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_base[i] = suffix_base[i + 1] + p.base_v[i];
    }

    // warm-start incumbent: walk segments steepest-first, taking each whole
    // segment when it is the patient's next hull step and fits the capacity
    let mut hull_pos: Vec<usize> = vec![0; n];
    let mut hulls: Vec<Vec<usize>> = p.options.iter().map(|o| concave_hull(o)).collect();
    let mut cap = p.capacity;
    let mut warm_val = suffix_base[0];
    for s in &segs {
        if s.seg_idx == hull_pos[s.patient] && s.dw <= cap {
            hull_pos[s.patient] += 1;
            cap -= s.dw;
            warm_val += s.dv;
        }
    }
    let warm_chosen: Vec<usize> = (0..n)
        .map(|i| hulls[i][hull_pos[i]])
        .collect();
    hulls.clear();

    let lp_bound = {
        let mut cap = p.capacity;
        let mut gain = 0.0;
        for (g, &ratio) in group_ratio.iter().enumerate() {
            if cap <= 0 {
                break;
            }
            let take = avail[g].min(cap);
            if take > 0 {
                gain += take as f64 * ratio;
                cap -= take;
            }
        }
        suffix_base[0] + gain
    };

    let mut bnb = Bnb {
        p,
        group_ratio,
        group_of_seg,
        avail,
        suffix_base,
        best_val: warm_val,
        best_chosen: warm_chosen,
        nodes: 0,
        current: vec![0; n],
    };
    bnb.dfs(0, p.capacity, 0.0);

    let chosen = bnb
        .best_chosen
        .iter()
        .enumerate()
        .map(|(i, &oi)| p.options[i][oi].treatment)
        .collect();
    (chosen, bnb.nodes, lp_bound)
}
