//! Max-min-rate time allocation: feasibility analysis, slot lower bounds,
//! the polyblock outer-approximation solver, and an exhaustive grid-search
//! certifier.
//!
//! The solver works on a [`SlotProblem`]: a vector of per-frame slot
//! fractions with per-slot lower bounds (from the sensing constraints) and
//! one rate term per vehicle, each tied to a sensing slot and the
//! communication slot that directly follows it. The objective
//! `min_k rate_k(eta)` is monotone nondecreasing in every coordinate, which
//! is what the polyblock construction exploits: a shrinking union of boxes
//! whose upper corners (vertices) always dominate the feasible simplex
//! slice `{eta >= lower, sum(eta) = 1}`.
//!
//! Each vertex carries an upper bound on the rate achievable inside its
//! box. A plain objective evaluation at the vertex is a valid bound but
//! hopeless in practice: near the simplex the projection cuts shrink and
//! the vertex count explodes long before a 1e-3 relative gap closes. The
//! bound used here instead relaxes the box to a one-parameter family: for a
//! trial rate `t` and slack parameter `sigma`, every sensing slot may use up
//! to `sigma` beyond its required time, and the total required time is
//! swept slot-by-slot. `t(sigma)` is unimodal, so a scan plus golden
//! section gives the family's supremum. The same sweep yields a feasible
//! allocation achieving nearly the bound, which seeds the incumbent; on the
//! rare instances where a residual gap persists, vertex bounds are
//! recomputed with an exact nested-search chain solve.

use serde::Serialize;

use crate::channel::ArrayConfig;
use crate::perf::{self, PerfModel, RadioConstants};
use crate::{Error, Result};

/// Hard cap on the polyblock vertex set.
pub const VERTEX_CAP: usize = 1_000_000;

/// Iteration at which stalled solves switch to exact vertex bounds.
const RESCUE_ITER: usize = 64;

/// The vector of per-frame slot fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAllocation {
    pub eta: Vec<f64>,
}

impl TimeAllocation {
    pub fn sum(&self) -> f64 {
        self.eta.iter().sum()
    }

    /// On-simplex check: componentwise within `[lower, 1]` and summing to 1.
    pub fn is_feasible(&self, lower: &[f64], tol: f64) -> bool {
        self.eta.len() == lower.len()
            && self
                .eta
                .iter()
                .zip(lower)
                .all(|(e, lo)| *e >= lo - tol && *e <= 1.0 + tol)
            && (self.sum() - 1.0).abs() <= tol
    }
}

/// Rate of one vehicle as a function of its communication-slot and
/// sensing-slot fractions.
#[derive(Debug, Clone)]
pub enum RateLaw {
    /// `log2(1 + c * h_tilde(x, v(e)))` per unit communication time, where
    /// `v(e) = var_proc * a_phi / (var_proc * e + a_phi)` is the tracked
    /// variance at sensing fraction `e`. Stored in evaluated form:
    /// `h_tilde(x, v) = p / sqrt(v) * (1 + exp(-q / v))`.
    Tracked { c: f64, p: f64, q: f64, var_proc: f64, a_phi: f64 },
    /// Fixed rate per unit communication time (no sensing dependence).
    Linear { rate_per_time: f64 },
}

impl RateLaw {
    /// Builds the tracked-variance law from a vehicle's performance model.
    pub fn tracked(pm: &PerfModel) -> Self {
        let s = pm.phi_pred.sin();
        let pi = std::f64::consts::PI;
        RateLaw::Tracked {
            c: pm.c_k,
            p: 1.0 / (2.0 * pi * s * s).sqrt(),
            q: 2.0 * (pi - pm.phi_pred) * (pi - pm.phi_pred),
            var_proc: pm.var_proc,
            a_phi: pm.a_phi,
        }
    }

    /// Rate per unit communication time given the sensing fraction.
    pub fn rate_density(&self, eta_sense: f64) -> f64 {
        match *self {
            RateLaw::Tracked { c, p, q, var_proc, a_phi } => {
                let v = var_proc * a_phi / (var_proc * eta_sense + a_phi);
                let ht = p / v.sqrt() * (1.0 + (-q / v).exp());
                (1.0 + c * ht).log2()
            }
            RateLaw::Linear { rate_per_time } => rate_per_time,
        }
    }
}

/// One vehicle's slots and rate law. `comm_slot` must be `sense_slot + 1`.
#[derive(Debug, Clone)]
pub struct VehicleRate {
    pub sense_slot: usize,
    pub comm_slot: usize,
    pub law: RateLaw,
}

/// A monotone max-min slot-allocation problem.
#[derive(Debug, Clone)]
pub struct SlotProblem {
    /// Per-slot minimum fractions (sensing constraints; 0 elsewhere).
    pub lower: Vec<f64>,
    /// Per-vehicle rate terms, ordered by slot.
    pub vehicles: Vec<VehicleRate>,
}

impl SlotProblem {
    pub fn new(lower: Vec<f64>, vehicles: Vec<VehicleRate>) -> Result<Self> {
        let dims = lower.len();
        let mut last_comm = 0;
        for (i, v) in vehicles.iter().enumerate() {
            if v.comm_slot != v.sense_slot + 1 || v.comm_slot >= dims {
                return Err(Error::InvalidInput(format!(
                    "vehicle {i}: slots ({}, {}) must be adjacent and in range",
                    v.sense_slot, v.comm_slot
                )));
            }
            if i > 0 && v.sense_slot < last_comm {
                return Err(Error::InvalidInput(
                    "vehicle slots must be ordered and communication slots distinct".into(),
                ));
            }
            last_comm = v.comm_slot;
        }
        if lower.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::InvalidInput("slot lower bounds must be >= 0".into()));
        }
        Ok(Self { lower, vehicles })
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    /// Budget left after the slot lower bounds; negative means infeasible.
    pub fn slack(&self) -> f64 {
        1.0 - self.lower.iter().sum::<f64>()
    }

    /// Per-slot upper bounds `1 - sum(lower_without_this_slot)`.
    pub fn upper_bounds(&self) -> Vec<f64> {
        let total: f64 = self.lower.iter().sum();
        self.lower.iter().map(|lo| 1.0 - (total - lo)).collect()
    }

    /// Rate of vehicle `k` under `eta`.
    pub fn rate(&self, k: usize, eta: &[f64]) -> f64 {
        let v = &self.vehicles[k];
        eta[v.comm_slot] * v.law.rate_density(eta[v.sense_slot])
    }

    /// `min_k rate_k(eta)`; well-defined off the simplex too.
    pub fn objective(&self, eta: &[f64]) -> f64 {
        self.vehicles
            .iter()
            .enumerate()
            .map(|(k, _)| self.rate(k, eta))
            .fold(f64::INFINITY, f64::min)
    }
}

/// The per-frame allocation problem for the shared-slot protocol: `K`
/// vehicles, `K + 1` slots, vehicle `k`'s sensing in slot `k - 1` and its
/// communication in slot `k`.
#[derive(Debug, Clone)]
pub struct ProblemP2 {
    pub models: Vec<PerfModel>,
    pub gamma_th: f64,
    pub radio: RadioConstants,
    pub arrays: ArrayConfig,
}

impl ProblemP2 {
    /// Full-frame echo SNRs (allocation fraction 1) per vehicle.
    pub fn full_frame_snrs(&self) -> Vec<f64> {
        self.models
            .iter()
            .map(|pm| perf::echo_snr_closed_form(1.0, pm, &self.radio, &self.arrays))
            .collect()
    }

    /// Lowers the problem to the generic slot form.
    pub fn slot_problem(&self) -> Result<SlotProblem> {
        let lower = eta_lower_bounds(self);
        let vehicles = self
            .models
            .iter()
            .enumerate()
            .map(|(k, pm)| VehicleRate {
                sense_slot: k,
                comm_slot: k + 1,
                law: RateLaw::tracked(pm),
            })
            .collect();
        SlotProblem::new(lower, vehicles)
    }
}

/// `min_k rate_k` under `eta`, using the closed-form rate expressions.
pub fn objective(p: &ProblemP2, eta: &TimeAllocation) -> Result<f64> {
    if eta.eta.len() != p.models.len() + 1 {
        return Err(Error::InvalidInput(format!(
            "allocation has {} entries, expected {}",
            eta.eta.len(),
            p.models.len() + 1
        )));
    }
    Ok(p.slot_problem()?.objective(&eta.eta))
}

/// Feasibility threshold: the largest sensing SNR achievable simultaneously
/// by all vehicles, together with the equalizing allocation that attains it
/// (communication slot of the last vehicle empty).
///
/// With full-frame SNRs `c_k`, equal echo SNRs require
/// `eta_{k-1} proportional to 1 / c_k`, so the threshold is the harmonic
/// form `1 / sum_k (1 / c_k)`. The problem is feasible iff
/// `gamma_th <= max_gamma`.
pub fn feasibility_max_snr(p: &ProblemP2) -> (f64, TimeAllocation) {
    let snrs = p.full_frame_snrs();
    let inv_sum: f64 = snrs.iter().map(|c| 1.0 / c).sum();
    let max_gamma = 1.0 / inv_sum;
    let mut eta = vec![0.0; snrs.len() + 1];
    for (k, c) in snrs.iter().enumerate() {
        eta[k] = (1.0 / c) / inv_sum;
    }
    (max_gamma, TimeAllocation { eta })
}

/// Per-slot minimum sensing fractions `gamma_th / c_k`; the final
/// communication-only slot has lower bound 0.
pub fn eta_lower_bounds(p: &ProblemP2) -> Vec<f64> {
    let mut lower: Vec<f64> = p
        .full_frame_snrs()
        .iter()
        .map(|c| p.gamma_th / c)
        .collect();
    lower.push(0.0);
    lower
}

/// Projects a dominating point onto the simplex along the segment from the
/// lower-bound corner: `phi_i = (eta_i - lo_i) * (1 - sum(lo)) /
/// (sum(eta) - sum(lo)) + lo_i`.
pub fn project_to_simplex(eta: &[f64], lower: &[f64]) -> Result<TimeAllocation> {
    let se: f64 = eta.iter().sum();
    let sl: f64 = lower.iter().sum();
    if se <= sl {
        return Err(Error::DegenerateProjection);
    }
    let lambda = (1.0 - sl) / (se - sl);
    Ok(TimeAllocation {
        eta: eta
            .iter()
            .zip(lower)
            .map(|(e, lo)| (e - lo) * lambda + lo)
            .collect(),
    })
}

/// One row of the solver's convergence trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub cbv: f64,
    pub upper_bound: f64,
    pub vertices: usize,
}

/// Result of a polyblock solve.
#[derive(Debug, Clone)]
pub struct PolyblockSolution {
    pub allocation: TimeAllocation,
    pub value: f64,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Solves the shared-slot problem to relative accuracy `epsilon`.
///
/// Errors with the feasibility threshold when the sensing constraints can
/// not all be met; returns the best incumbent with `converged = false` when
/// `max_iters` runs out first.
pub fn polyblock_solve(
    p: &ProblemP2,
    epsilon: f64,
    max_iters: usize,
) -> Result<PolyblockSolution> {
    let (max_gamma, _) = feasibility_max_snr(p);
    if p.gamma_th > max_gamma {
        return Err(Error::Infeasible { gamma_th: p.gamma_th, max_gamma });
    }
    polyblock_solve_slots(&p.slot_problem()?, epsilon, max_iters)
}

/// Exhaustive grid certifier over the feasible slice `{eta >= lower,
/// sum = 1}`, gridded barycentrically at the given resolution. Returns
/// `None` exactly when the sensing constraints are infeasible.
pub fn grid_oracle(
    p: &ProblemP2,
    resolution: usize,
) -> Result<Option<(TimeAllocation, f64)>> {
    if p.models.len() > 3 {
        return Err(Error::InvalidInput(
            "grid oracle is desk-scale only (K <= 3)".into(),
        ));
    }
    grid_oracle_slots(&p.slot_problem()?, resolution)
}

/// Grid certifier on the generic slot form.
pub fn grid_oracle_slots(
    sp: &SlotProblem,
    resolution: usize,
) -> Result<Option<(TimeAllocation, f64)>> {
    let d = sp.dims();
    if resolution == 0 || d == 0 {
        return Err(Error::InvalidInput("empty grid".into()));
    }
    let combos = compositions_count(resolution, d);
    if combos > 2e8 {
        return Err(Error::InvalidInput(format!(
            "grid of {combos:.1e} points is beyond desk scale"
        )));
    }
    let slack = sp.slack();
    if slack < 0.0 {
        return Ok(None);
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut counts = vec![0usize; d];
    enumerate_compositions(resolution, d, &mut counts, &mut |m| {
        let eta: Vec<f64> = m
            .iter()
            .zip(&sp.lower)
            .map(|(mi, lo)| lo + slack * *mi as f64 / resolution as f64)
            .collect();
        let value = sp.objective(&eta);
        let better = match &best {
            None => true,
            Some((_, bv)) => value > *bv,
        };
        if better {
            best = Some((eta, value));
        }
    });
    Ok(best.map(|(eta, value)| (TimeAllocation { eta }, value)))
}

fn compositions_count(n: usize, d: usize) -> f64 {
    // C(n + d - 1, d - 1)
    let mut c = 1.0f64;
    for i in 0..d - 1 {
        c = c * (n + d - 1 - i) as f64 / (d - 1 - i) as f64;
    }
    c
}

fn enumerate_compositions(
    n: usize,
    d: usize,
    buf: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    fn rec(rem: usize, idx: usize, d: usize, buf: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if idx == d - 1 {
            buf[idx] = rem;
            f(buf);
            return;
        }
        for m in 0..=rem {
            buf[idx] = m;
            rec(rem - m, idx + 1, d, buf, f);
        }
    }
    rec(n, 0, d, buf, f);
}

// ---------------------------------------------------------------------------
// Polyblock internals
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct HeapEntry {
    bound: f64,
    id: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.id == other.id
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// One slot-by-slot sweep for trial rate `t` with sensing-slack `sigma`:
/// every sensing slot may run for up to `sigma` beyond its required time
/// (capped by the box corner `z`), and each communication slot must cover
/// `t` at the resulting rate density. Returns the total required time and
/// the allocation that produced it, or `None` when the box cannot support
/// `t` at this slack.
fn sweep(sp: &SlotProblem, z: &[f64], t: f64, sigma: f64) -> Option<(f64, Vec<f64>)> {
    let mut need = sp.lower.clone();
    let mut caps = vec![0.0f64; sp.vehicles.len()];
    for (k, v) in sp.vehicles.iter().enumerate() {
        let cap = z[v.sense_slot].min(need[v.sense_slot] + sigma);
        let rho = v.law.rate_density(cap);
        let req = if rho > 0.0 { t / rho } else { f64::INFINITY };
        let c = need[v.comm_slot].max(req);
        if c > z[v.comm_slot] * (1.0 + 1e-12) + 1e-15 {
            return None;
        }
        need[v.comm_slot] = c;
        caps[k] = cap;
    }
    let tot = need.iter().sum();
    for (k, v) in sp.vehicles.iter().enumerate() {
        if caps[k] > need[v.sense_slot] {
            need[v.sense_slot] = caps[k];
        }
    }
    Some((tot, need))
}

/// Largest `t` with `sweep` total `<= 1 - sigma`, by bisection.
fn t_of_sigma(sp: &SlotProblem, z: &[f64], sigma: f64, tmax: f64) -> f64 {
    let feasible = |t: f64| matches!(sweep(sp, z, t, sigma), Some((tot, _)) if tot <= 1.0 - sigma);
    if feasible(tmax) {
        return tmax;
    }
    let (mut lo, mut hi) = (0.0f64, tmax);
    for _ in 0..44 {
        let t = 0.5 * (lo + hi);
        if feasible(t) {
            lo = t;
        } else {
            hi = t;
        }
    }
    lo
}

/// Relaxation bound for the box `[lower, z]` plus a feasible allocation
/// achieving nearly the bound (before simplex projection).
fn scan_bound(sp: &SlotProblem, z: &[f64]) -> (f64, Option<Vec<f64>>) {
    let raw = sp.objective(z);
    if raw <= 0.0 {
        return (0.0, None);
    }
    let smax = sp.slack().max(0.0);
    const NSCAN: usize = 16;
    let mut best_t = f64::NEG_INFINITY;
    let mut best_sigma = 0.0;
    for i in 0..=NSCAN {
        let sigma = smax * i as f64 / NSCAN as f64;
        let t = t_of_sigma(sp, z, sigma, raw);
        if t > best_t {
            best_t = t;
            best_sigma = sigma;
        }
    }
    // Golden refinement around the best scan cell; t(sigma) is unimodal
    // (its derivative sign is driven by a sum of decreasing elasticities).
    let cell = smax / NSCAN as f64;
    let (mut a, mut b) = (
        (best_sigma - cell).max(0.0),
        (best_sigma + cell).min(smax),
    );
    let gr = 0.618_033_988_749_894_9;
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = t_of_sigma(sp, z, c, raw);
    let mut fd = t_of_sigma(sp, z, d, raw);
    for _ in 0..28 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = t_of_sigma(sp, z, c, raw);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = t_of_sigma(sp, z, d, raw);
        }
    }
    let (sg, tg) = if fc >= fd { (c, fc) } else { (d, fd) };
    if tg > best_t {
        best_t = tg;
        best_sigma = sg;
    }
    let point = sweep(sp, z, t_of_sigma(sp, z, best_sigma, raw), best_sigma)
        .map(|(_, pt)| pt);
    (best_t.min(raw), point)
}

fn golden_min(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, iters: usize) -> (f64, f64) {
    if b <= a {
        return (a, f(a));
    }
    let gr = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (a, b);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimal total slot time supporting rate `t` inside the box, by nested
/// search over the sensing-slot times (exact for these rate laws, whose
/// densities are concave in the sensing fraction). Exponential in the
/// number of sensing slots; used only as the stall rescue for small `K`.
fn chain_min_total(
    sp: &SlotProblem,
    z: &[f64],
    t: f64,
    out: Option<&mut Vec<f64>>,
) -> f64 {
    let d = sp.dims();
    // slot roles
    let mut comm_vehicle = vec![usize::MAX; d];
    let mut is_sense = vec![false; d];
    for (k, v) in sp.vehicles.iter().enumerate() {
        comm_vehicle[v.comm_slot] = k;
        is_sense[v.sense_slot] = true;
    }

    fn rec(
        sp: &SlotProblem,
        z: &[f64],
        t: f64,
        comm_vehicle: &[usize],
        is_sense: &[bool],
        i: usize,
        prev: f64,
        out: Option<&mut Vec<f64>>,
    ) -> f64 {
        if i == sp.dims() {
            return 0.0;
        }
        let mut lo = sp.lower[i];
        if comm_vehicle[i] != usize::MAX {
            let rho = sp.vehicles[comm_vehicle[i]].law.rate_density(prev);
            let req = if rho > 0.0 { t / rho } else { f64::INFINITY };
            lo = lo.max(req);
        }
        if lo > z[i] * (1.0 + 1e-12) + 1e-15 {
            return f64::INFINITY;
        }
        let x = if is_sense[i] {
            let mut cost = |x: f64| {
                x + rec(sp, z, t, comm_vehicle, is_sense, i + 1, x, None)
            };
            let (mut xb, mut vb) = golden_min(&mut cost, lo, z[i], 24);
            for cand in [lo, z[i]] {
                let v = cost(cand);
                if v < vb {
                    xb = cand;
                    vb = v;
                }
            }
            let _ = vb;
            xb
        } else {
            lo
        };
        let rest = match out {
            Some(buf) => {
                buf[i] = x;
                rec(sp, z, t, comm_vehicle, is_sense, i + 1, x, Some(buf))
            }
            None => rec(sp, z, t, comm_vehicle, is_sense, i + 1, x, None),
        };
        x + rest
    }

    rec(sp, z, t, &comm_vehicle, &is_sense, 0, 0.0, out)
}

/// Exact bound (and near-optimal point) for the box, by bisection on the
/// achievable rate over the chain solve.
fn exact_bound(sp: &SlotProblem, z: &[f64]) -> (f64, Option<Vec<f64>>) {
    let raw = sp.objective(z);
    if raw <= 0.0 {
        return (0.0, None);
    }
    if chain_min_total(sp, z, raw, None) <= 1.0 {
        let mut buf = vec![0.0; sp.dims()];
        chain_min_total(sp, z, raw, Some(&mut buf));
        return (raw, Some(buf));
    }
    let (mut lo, mut hi) = (0.0f64, raw);
    let mut best: Option<Vec<f64>> = None;
    for _ in 0..46 {
        let t = 0.5 * (lo + hi);
        if chain_min_total(sp, z, t, None) <= 1.0 {
            lo = t;
            let mut buf = vec![0.0; sp.dims()];
            chain_min_total(sp, z, t, Some(&mut buf));
            best = Some(buf);
        } else {
            hi = t;
        }
    }
    (hi, best)
}

/// Polyblock solver on the generic slot problem.
pub fn polyblock_solve_slots(
    sp: &SlotProblem,
    epsilon: f64,
    max_iters: usize,
) -> Result<PolyblockSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    let d = sp.dims();
    let slack = sp.slack();
    if slack < -1e-12 {
        return Err(Error::InvalidInput(
            "slot lower bounds exceed the frame".into(),
        ));
    }
    let lower = &sp.lower;
    if slack <= 1e-15 {
        // The lower corner is the only feasible point.
        let value = sp.objective(lower);
        return Ok(PolyblockSolution {
            allocation: TimeAllocation { eta: lower.clone() },
            value,
            trace: vec![TraceRow { iter: 0, cbv: value, upper_bound: value, vertices: 0 }],
            converged: true,
        });
    }

    let upper = sp.upper_bounds();
    let exact_eligible = sp.vehicles.len() <= 4;

    let mut coords: Vec<Option<Vec<f64>>> = Vec::new();
    let mut heap = std::collections::BinaryHeap::new();
    let mut cbv = f64::NEG_INFINITY;
    let mut best: Option<TimeAllocation> = None;
    let mut trace = Vec::new();
    let mut exact_mode = false;

    macro_rules! consider {
        ($pt:expr) => {
            if let Ok(q) = project_to_simplex($pt, lower) {
                let f = sp.objective(&q.eta);
                if f > cbv {
                    cbv = f;
                    best = Some(q);
                }
            }
        };
    }

    let bound_of = |sp: &SlotProblem, z: &[f64], exact: bool| {
        if exact {
            exact_bound(sp, z)
        } else {
            scan_bound(sp, z)
        }
    };

    let (b0, pt0) = bound_of(sp, &upper, false);
    if let Some(pt) = &pt0 {
        consider!(pt);
    }
    coords.push(Some(upper.clone()));
    heap.push(HeapEntry { bound: b0, id: 0 });
    let mut live = 1usize;

    let mut cbv_prev = 0.0f64;
    let mut iter = 0usize;
    let mut converged = false;
    let mut rbar = b0;

    while iter < max_iters {
        // Deterministic selection: max bound, ties broken by the
        // lexicographically smallest vertex.
        let (vid, bound) = loop {
            let top = match heap.pop() {
                Some(e) => e,
                None => break (usize::MAX, f64::NEG_INFINITY),
            };
            if coords[top.id].is_none() {
                continue;
            }
            let mut ties = vec![top.id];
            while let Some(peek) = heap.peek() {
                if peek.bound == top.bound {
                    let e = heap.pop().unwrap();
                    if coords[e.id].is_some() {
                        ties.push(e.id);
                    }
                } else {
                    break;
                }
            }
            if ties.len() > 1 {
                ties.sort_by(|&a, &b| {
                    let (xa, xb) = (coords[a].as_ref().unwrap(), coords[b].as_ref().unwrap());
                    xa.iter()
                        .zip(xb.iter())
                        .map(|(u, v)| u.total_cmp(v))
                        .find(|o| o.is_ne())
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.cmp(&b))
                });
                for &other in &ties[1..] {
                    heap.push(HeapEntry { bound: top.bound, id: other });
                }
            }
            break (ties[0], top.bound);
        };
        if vid == usize::MAX {
            // Vertex set exhausted: the incumbent is optimal.
            converged = true;
            break;
        }
        rbar = bound;
        let z = coords[vid].take().unwrap();
        live -= 1;

        let proj = match project_to_simplex(&z, lower) {
            Ok(q) => q,
            Err(_) => continue,
        };
        let f = sp.objective(&proj.eta);
        if f > cbv {
            cbv = f;
            best = Some(proj.clone());
        }

        iter += 1;
        trace.push(TraceRow { iter, cbv, upper_bound: rbar, vertices: live });

        if iter >= 2 && cbv_prev > 0.0 && (rbar - cbv) / cbv_prev <= epsilon {
            converged = true;
            break;
        }
        cbv_prev = cbv;

        if !exact_mode && exact_eligible && iter >= RESCUE_ITER {
            // Stalled: re-bound every live vertex with the exact chain solve.
            exact_mode = true;
            let mut fresh = std::collections::BinaryHeap::new();
            for (id, c) in coords.iter().enumerate() {
                if let Some(zc) = c {
                    let (b, pt) = bound_of(sp, zc, true);
                    if let Some(pt) = &pt {
                        consider!(pt);
                    }
                    fresh.push(HeapEntry { bound: b, id });
                }
            }
            heap = fresh;
        }

        for i in 0..d {
            let mut child = z.clone();
            child[i] = proj.eta[i];
            if child.iter().sum::<f64>() < 1.0 - 1e-12 {
                continue;
            }
            let (b, pt) = bound_of(sp, &child, exact_mode);
            if let Some(pt) = &pt {
                consider!(pt);
            }
            if b <= cbv * (1.0 + 1e-12) {
                continue;
            }
            if live >= VERTEX_CAP {
                return Err(Error::ResourceLimit(VERTEX_CAP));
            }
            coords.push(Some(child));
            heap.push(HeapEntry { bound: b, id: coords.len() - 1 });
            live += 1;
        }
    }

    let best = best.unwrap_or(TimeAllocation { eta: lower.clone() });
    let value = sp.objective(&best.eta);
    Ok(PolyblockSolution { allocation: best, value, trace, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ArrayConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn radio() -> RadioConstants {
        RadioConstants {
            power_w: 0.1,
            symbols_per_frame: 1e4,
            sigma_s2: 1e-8,
            sigma_c2: 1e-8,
            sigma_r2: 0.1,
        }
    }

    fn arrays() -> ArrayConfig {
        ArrayConfig::new(10, 100).unwrap()
    }

    fn problem(phis: &[f64], dists: &[f64], gamma_th: f64) -> ProblemP2 {
        let radio = radio();
        let arrays = arrays();
        let models = phis
            .iter()
            .zip(dists)
            .map(|(phi, d)| {
                PerfModel::build(*phi, *d, 0.01, 1e-3, 2.0, &radio, &arrays).unwrap()
            })
            .collect();
        ProblemP2 { models, gamma_th, radio, arrays }
    }

    fn random_feasible_problem(rng: &mut ChaCha8Rng, k: usize) -> ProblemP2 {
        let phis: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2 * PI..0.8 * PI)).collect();
        let dists: Vec<f64> = (0..k).map(|_| rng.gen_range(15.0..55.0)).collect();
        let mut p = problem(&phis, &dists, 0.0);
        let (max_gamma, _) = feasibility_max_snr(&p);
        p.gamma_th = rng.gen_range(0.2..0.8) * max_gamma;
        p
    }

    #[test]
    fn objective_zero_allocations() {
        let p = problem(&[PI / 2.0], &[10.0], 0.0);
        let z = TimeAllocation { eta: vec![0.0, 0.0] };
        assert_eq!(objective(&p, &z).unwrap(), 0.0);
        // All time on sensing, none on communication.
        let z = TimeAllocation { eta: vec![1.0, 0.0] };
        assert_eq!(objective(&p, &z).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_single_vehicle_is_full_frame() {
        let p = problem(&[PI / 2.0], &[10.0], 0.0);
        let (max_gamma, eta) = feasibility_max_snr(&p);
        let full = p.full_frame_snrs()[0];
        assert!((max_gamma - full).abs() < 1e-9 * full);
        assert!((eta.eta[0] - 1.0).abs() < 1e-12);
        assert_eq!(eta.eta[1], 0.0);
    }

    #[test]
    fn feasibility_identical_vehicles_split_evenly() {
        let p = problem(&[PI / 2.0; 3], &[20.0; 3], 0.0);
        let (max_gamma, eta) = feasibility_max_snr(&p);
        let full = p.full_frame_snrs()[0];
        assert!((max_gamma - full / 3.0).abs() < 1e-9 * full);
        for k in 0..3 {
            assert!((eta.eta[k] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert_eq!(eta.eta[3], 0.0);
    }

    #[test]
    fn feasibility_matches_simplex_grid_max_min_snr() {
        // Brute-force the max-min sensing SNR over the simplex and compare.
        let p = problem(&[0.45 * PI, 0.55 * PI, 0.6 * PI], &[20.0, 25.0, 30.0], 0.0);
        let snrs = p.full_frame_snrs();
        let res = 400usize;
        let mut best = 0.0f64;
        for m0 in 0..=res {
            for m1 in 0..=(res - m0) {
                let m2 = res - m0 - m1;
                let g = (m0 as f64 / res as f64 * snrs[0])
                    .min(m1 as f64 / res as f64 * snrs[1])
                    .min(m2 as f64 / res as f64 * snrs[2]);
                best = best.max(g);
            }
        }
        let (max_gamma, eta) = feasibility_max_snr(&p);
        assert!(
            (max_gamma - best).abs() < 1e-3 * max_gamma,
            "closed form {max_gamma} vs grid {best}"
        );
        // The equalizer meets its own threshold exactly.
        for k in 0..3 {
            assert!((eta.eta[k] * snrs[k] - max_gamma).abs() < 1e-9 * max_gamma);
        }
    }

    #[test]
    fn lower_bounds_reference_value() {
        let p = problem(&[PI / 2.0], &[10.0], 1e3);
        let lb = eta_lower_bounds(&p);
        assert!((lb[0] - 0.025_066_282_746_31).abs() < 1e-9);
        assert_eq!(lb[1], 0.0);
        let p0 = problem(&[PI / 2.0], &[10.0], 0.0);
        assert!(eta_lower_bounds(&p0).iter().all(|l| *l == 0.0));
    }

    #[test]
    fn lower_bound_sum_vs_feasibility_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let mut p = random_feasible_problem(&mut rng, 3);
            let (max_gamma, _) = feasibility_max_snr(&p);
            p.gamma_th = max_gamma * rng.gen_range(0.5..1.5);
            let sum: f64 = eta_lower_bounds(&p).iter().sum();
            assert_eq!(sum > 1.0, p.gamma_th > max_gamma * (1.0 + 1e-12).min(1.0 + 1e-9));
        }
    }

    #[test]
    fn projection_examples() {
        let q = project_to_simplex(&[0.5, 0.5, 0.5, 0.5], &[0.0; 4]).unwrap();
        for e in &q.eta {
            assert!((e - 0.25).abs() < 1e-15);
        }
        // Already on the simplex: fixed point.
        let q = project_to_simplex(&[0.3, 0.3, 0.4], &[0.1, 0.0, 0.0]).unwrap();
        assert!((q.eta[0] - 0.3).abs() < 1e-12);
        assert!((q.eta[2] - 0.4).abs() < 1e-12);
        let q = project_to_simplex(&[0.7, 0.6, 0.5], &[0.1, 0.0, 0.0]).unwrap();
        assert!((q.eta[0] - 0.417_647_058_823_529_4).abs() < 1e-12);
        assert!((q.eta[1] - 0.317_647_058_823_529_4).abs() < 1e-12);
        assert!((q.eta[2] - 0.264_705_882_352_941_2).abs() < 1e-12);
        assert!((q.sum() - 1.0).abs() < 1e-12);
        assert!(project_to_simplex(&[0.05, 0.0, 0.0], &[0.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn polyblock_single_vehicle_matches_fine_scan() {
        let p = problem(&[PI / 2.0], &[10.0], 1e3);
        let sol = polyblock_solve(&p, 1e-4, 100_000).unwrap();
        assert!(sol.converged);
        // 1-D problem: scan eta_0 finely.
        let sp = p.slot_problem().unwrap();
        let lb = &sp.lower;
        let mut best = 0.0f64;
        for i in 0..=200_000 {
            let e0 = lb[0] + (1.0 - lb[0]) * i as f64 / 200_000.0;
            best = best.max(sp.objective(&[e0, 1.0 - e0]));
        }
        assert!(
            sol.value >= best * (1.0 - 2e-4),
            "polyblock {} vs scan {best}",
            sol.value
        );
        assert!(sol.allocation.is_feasible(lb, 1e-9));
    }

    #[test]
    fn polyblock_infeasible_carries_threshold() {
        let mut p = problem(&[PI / 2.0, 0.6 * PI], &[25.0, 30.0], 0.0);
        let (max_gamma, _) = feasibility_max_snr(&p);
        p.gamma_th = max_gamma * 1.01;
        match polyblock_solve(&p, 1e-3, 1000) {
            Err(Error::Infeasible { gamma_th, max_gamma: mg }) => {
                assert!((gamma_th - p.gamma_th).abs() < 1e-9 * gamma_th);
                assert!((mg - max_gamma).abs() < 1e-9 * mg);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn polyblock_symmetric_vehicles_get_symmetric_allocation() {
        let p = problem(&[PI / 2.0; 3], &[20.0; 3], 50.0);
        let sol = polyblock_solve(&p, 1e-3, 100_000).unwrap();
        assert!(sol.converged);
        // Identical vehicles: sensing slots 0..2 equal among themselves up
        // to the solver tolerance.
        let e = &sol.allocation.eta;
        let rates: Vec<f64> = (0..3)
            .map(|k| {
                let sp = p.slot_problem().unwrap();
                sp.rate(k, e)
            })
            .collect();
        let rmin = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let rmax = rates.iter().cloned().fold(0.0f64, f64::max);
        assert!((rmax - rmin) / rmin < 5e-3, "rates {rates:?}");
    }

    #[test]
    fn polyblock_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_feasible_problem(&mut rng, 3);
        let sol = polyblock_solve(&p, 1e-3, 100_000).unwrap();
        assert!(sol.converged);
        for w in sol.trace.windows(2) {
            assert!(w[1].cbv >= w[0].cbv - 1e-15);
            assert!(w[1].upper_bound <= w[0].upper_bound + 1e-12);
        }
        for row in &sol.trace {
            assert!(row.upper_bound >= row.cbv - 1e-12);
        }
    }

    #[test]
    fn polyblock_beats_grid_on_random_battery() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for trial in 0..10 {
            let p = random_feasible_problem(&mut rng, 3);
            let eps = 1e-3;
            let sol = polyblock_solve(&p, eps, 200_000).unwrap();
            let (_, grid_val) = grid_oracle(&p, 100).unwrap().expect("feasible");
            assert!(
                sol.value >= grid_val * (1.0 - eps) - 1e-12,
                "trial {trial}: polyblock {} below grid {}",
                sol.value,
                grid_val
            );
            assert!(sol
                .allocation
                .is_feasible(&eta_lower_bounds(&p), 1e-9));
        }
    }

    #[test]
    fn polyblock_handles_dedicated_slot_layout() {
        // 2K-slot layout: sensing and communication in separate slots.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = random_feasible_problem(&mut rng, 3);
        let shared = p.slot_problem().unwrap();
        let mut lower = vec![0.0; 6];
        let mut vehicles = Vec::new();
        for (k, v) in shared.vehicles.iter().enumerate() {
            lower[2 * k] = shared.lower[k];
            vehicles.push(VehicleRate {
                sense_slot: 2 * k,
                comm_slot: 2 * k + 1,
                law: v.law.clone(),
            });
        }
        let sp = SlotProblem::new(lower, vehicles).unwrap();
        let sol = polyblock_solve_slots(&sp, 1e-3, 200_000).unwrap();
        assert!(sol.converged);
        // Dedicated slots can never beat shared ones.
        let shared_sol = polyblock_solve_slots(&shared, 1e-3, 200_000).unwrap();
        assert!(shared_sol.value >= sol.value * (1.0 - 2e-3));
    }

    #[test]
    fn objective_is_monotone_under_domination() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let p = random_feasible_problem(&mut rng, 3);
        let sp = p.slot_problem().unwrap();
        for _ in 0..1000 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            let b: Vec<f64> = a
                .iter()
                .map(|x| (x + rng.gen_range(0.0..0.3)).min(1.0))
                .collect();
            assert!(sp.objective(&b) >= sp.objective(&a) - 1e-12);
        }
    }

    #[test]
    fn grid_oracle_smallest_case_enumerates_simplex() {
        let p = problem(&[PI / 2.0], &[10.0], 0.0);
        let (alloc, value) = grid_oracle(&p, 2).unwrap().unwrap();
        // Candidate points are [1,0], [0.5,0.5], [0,1]; the best is the one
        // maximizing min-rate, never [1,0] (zero comm) nor [0,1] with
        // nothing... sensing of zero still allows a rate via the prior.
        assert!((alloc.sum() - 1.0).abs() < 1e-12);
        assert!(value > 0.0);
        let sp = p.slot_problem().unwrap();
        let cands = [
            sp.objective(&[1.0, 0.0]),
            sp.objective(&[0.5, 0.5]),
            sp.objective(&[0.0, 1.0]),
        ];
        let best = cands.iter().cloned().fold(0.0f64, f64::max);
        assert!((value - best).abs() < 1e-12);
    }

    #[test]
    fn grid_oracle_infeasible_verdict_matches_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..10 {
            let mut p = random_feasible_problem(&mut rng, 3);
            let (max_gamma, _) = feasibility_max_snr(&p);
            for factor in [0.999, 1.001] {
                p.gamma_th = max_gamma * factor;
                let verdict = grid_oracle(&p, 200).unwrap();
                assert_eq!(verdict.is_some(), factor < 1.0, "factor {factor}");
            }
        }
    }
}
