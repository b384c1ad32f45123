//! Monte Carlo learning sets of candidate balancing dispatches.
//!
//! Sample `i` of a set is a pure function of `(context, seed, i)`: all of its
//! random draws come from `SampleRng::new(seed, i)`.

use serde::{Deserialize, Serialize};

use crate::assets::{
    dg_marginal_feasible, dispatch_profit, storage_feasible, AssetPortfolio, BatteryBank, CostModel, DgSetpoint,
    Dispatch,
};
use crate::dtree::LabeledSample;
use crate::error::{Error, Result};
use crate::network::{check_constraints, solve_power_flow, BusId, NetworkModel, Violation};
use crate::rng::SampleRng;

/// Allocation stops once the unassigned requirement falls below this, kW.
pub const ALLOCATION_TOLERANCE_KW: f64 = 0.1;
/// Abort generation when more than this fraction of attempts is skipped.
pub const SKIP_BUDGET: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// The microgrid must raise net generation (or cut demand).
    Deficit,
    /// The microgrid must lower net generation (or absorb energy).
    Excess,
}

impl Direction {
    pub fn of(signed_kw: f64) -> Self {
        if signed_kw >= 0.0 {
            Direction::Deficit
        } else {
            Direction::Excess
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Deficit => 1.0,
            Direction::Excess => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    /// Every DG unit on `bus` trips.
    DgLoss { bus: BusId },
    /// Demand departs from forecast; served loads are scaled to carry it.
    LoadDeviation,
    /// Forced disconnection: the import at the interconnection must be
    /// balanced internally. The magnitude is recomputed per sample.
    Islanding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancingRequirement {
    pub direction: Direction,
    pub magnitude_kw: f64,
    pub origin: Origin,
}

impl BalancingRequirement {
    pub fn signed_kw(&self) -> f64 {
        self.direction.sign() * self.magnitude_kw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledDg {
    pub p_kw: f64,
    pub r_kw: f64,
    pub committed: bool,
}

/// Operating point at hour `t` and the day-ahead schedule for `t+1`.
/// Vectors align with the portfolio's `dg`, `storage` and `loads` lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub hour: u32,
    pub load_now_kw: Vec<f64>,
    pub load_next_kw: Vec<f64>,
    pub dg: Vec<ScheduledDg>,
    pub storage_kw: Vec<f64>,
    pub soc: Vec<f64>,
}

impl SystemState {
    pub fn validate(&self, assets: &AssetPortfolio) -> Result<()> {
        let checks = [
            ("load_now", self.load_now_kw.len(), assets.loads.len()),
            ("load_next", self.load_next_kw.len(), assets.loads.len()),
            ("dg", self.dg.len(), assets.dg.len()),
            ("storage", self.storage_kw.len(), assets.storage.len()),
            ("soc", self.soc.len(), assets.storage.len()),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::Validation(format!("state {what}: {got} entries for {want} assets")));
            }
        }
        if self.load_now_kw.iter().chain(&self.load_next_kw).any(|&v| !(v >= 0.0)) {
            return Err(Error::Validation("loads must be non-negative".into()));
        }
        for (u, s) in assets.dg.iter().zip(&self.dg) {
            if s.committed && !dg_marginal_feasible(u, s.p_kw, if u.kind.is_dispatchable() { s.r_kw } else { 0.0 }) {
                return Err(Error::Validation(format!(
                    "{}: scheduled {} kW + {} kW reserve is infeasible",
                    u.id, s.p_kw, s.r_kw
                )));
            }
        }
        Ok(())
    }

    /// Scheduled import at the interconnection for `t+1`, kW.
    pub fn scheduled_import_kw(&self) -> f64 {
        let load: f64 = self.load_next_kw.iter().sum();
        let gen: f64 = self.dg.iter().filter(|d| d.committed).map(|d| d.p_kw).sum();
        load - gen - self.storage_kw.iter().sum::<f64>()
    }

    /// Storage banks with the state's SOC applied.
    pub fn banks(&self, assets: &AssetPortfolio) -> Vec<BatteryBank> {
        assets
            .storage
            .iter()
            .zip(&self.soc)
            .map(|(b, &soc)| BatteryBank { soc, ..b.clone() })
            .collect()
    }
}

/// Everything a sample depends on besides `(seed, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsContext {
    pub network: NetworkModel,
    pub assets: AssetPortfolio,
    pub costs: CostModel,
    pub state: SystemState,
    pub requirement: BalancingRequirement,
}

impl LsContext {
    pub fn new(
        network: NetworkModel,
        assets: AssetPortfolio,
        costs: CostModel,
        state: SystemState,
        requirement: BalancingRequirement,
    ) -> Result<Self> {
        state.validate(&assets)?;
        if !(requirement.magnitude_kw >= 0.0) {
            return Err(Error::InvalidParameter("requirement magnitude must be non-negative".into()));
        }
        let assets = AssetPortfolio {
            storage: state.banks(&assets),
            ..assets
        };
        Ok(Self {
            network,
            assets,
            costs,
            state,
            requirement,
        })
    }

    pub fn islanded(&self) -> bool {
        matches!(self.requirement.origin, Origin::Islanding)
    }

    /// Ordered attribute names: DG setpoints, storage setpoints, then served
    /// load of every curtailable group.
    pub fn attribute_names(&self) -> Vec<String> {
        let a = &self.assets;
        a.dg.iter()
            .map(|u| u.id.clone())
            .chain(a.storage.iter().map(|b| b.id.clone()))
            .chain(a.loads.iter().filter(|l| l.curtailable).map(|l| l.id.clone()))
            .collect()
    }

    pub fn attributes_of(&self, d: &Dispatch) -> Vec<f64> {
        d.dg.iter()
            .map(|s| s.p_kw)
            .chain(d.storage_kw.iter().copied())
            .chain(
                self.assets
                    .loads
                    .iter()
                    .zip(&d.served_kw)
                    .filter(|(l, _)| l.curtailable)
                    .map(|(_, &v)| v),
            )
            .collect()
    }
}

/// Each group uniform between its current load and its forecast.
pub fn sample_loads(state: &SystemState, rng: &mut SampleRng) -> Vec<f64> {
    state
        .load_now_kw
        .iter()
        .zip(&state.load_next_kw)
        .map(|(&now, &next)| rng.uniform_between(now, next))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Actor {
    DgUp(usize),
    DgStart(usize),
    DgDown(usize),
    Discharge(usize),
    Charge(usize),
    Curtail(usize),
}

/// Remaining capacity of an actor in the current partial dispatch.
fn headroom(ctx: &LsContext, d: &Dispatch, actor: Actor, remaining: f64) -> f64 {
    let a = &ctx.assets;
    match actor {
        Actor::DgUp(i) => {
            let u = &a.dg[i];
            let cap = if u.kind.is_dispatchable() { u.rated_kw } else { u.availability_kw };
            if d.dg[i].committed {
                (cap - d.dg[i].p_kw).max(0.0)
            } else {
                0.0
            }
        }
        Actor::DgStart(i) => {
            let u = &a.dg[i];
            if d.dg[i].committed || remaining < u.technical_min_kw {
                0.0
            } else {
                u.rated_kw
            }
        }
        Actor::DgDown(i) => {
            let u = &a.dg[i];
            if d.dg[i].committed {
                (d.dg[i].p_kw - u.technical_min_kw).max(0.0)
            } else {
                0.0
            }
        }
        Actor::Discharge(i) => (a.storage[i].up_reserve_kw() - d.storage_kw[i]).max(0.0),
        Actor::Charge(i) => (a.storage[i].down_reserve_kw() + d.storage_kw[i]).max(0.0),
        Actor::Curtail(j) => d.served_kw[j].max(0.0),
    }
}

fn actors(ctx: &LsContext, direction: Direction) -> Vec<Actor> {
    let a = &ctx.assets;
    let islanded = ctx.islanded();
    let mut out = Vec::new();
    match direction {
        Direction::Deficit => {
            for (i, u) in a.dg.iter().enumerate() {
                if ctx.state.dg[i].committed || !u.kind.is_dispatchable() {
                    out.push(Actor::DgUp(i));
                } else {
                    out.push(Actor::DgStart(i));
                }
            }
            out.extend((0..a.storage.len()).map(Actor::Discharge));
            if islanded {
                out.extend(
                    a.loads
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| l.curtailable)
                        .map(|(j, _)| Actor::Curtail(j)),
                );
            }
        }
        Direction::Excess => {
            for (i, u) in a.dg.iter().enumerate() {
                if u.kind.is_dispatchable() || islanded {
                    out.push(Actor::DgDown(i));
                }
            }
            out.extend((0..a.storage.len()).map(Actor::Charge));
        }
    }
    out
}

fn apply(ctx: &LsContext, d: &mut Dispatch, actor: Actor, kw: f64) {
    match actor {
        Actor::DgUp(i) => d.dg[i].p_kw += kw,
        Actor::DgStart(i) => {
            d.dg[i].committed = true;
            d.dg[i].started = true;
            d.dg[i].p_kw = kw.max(ctx.assets.dg[i].technical_min_kw);
        }
        Actor::DgDown(i) => d.dg[i].p_kw -= kw,
        Actor::Discharge(i) => d.storage_kw[i] += kw,
        Actor::Charge(i) => d.storage_kw[i] -= kw,
        Actor::Curtail(j) => {
            d.served_kw[j] -= kw;
            d.curtailment_kw[j] += kw;
        }
    }
}

/// Total capacity available in `direction` from the scheduled operating point.
pub fn total_flexibility(ctx: &LsContext, base: &Dispatch, direction: Direction) -> f64 {
    actors(ctx, direction)
        .into_iter()
        .map(|a| headroom(ctx, base, a, f64::INFINITY))
        .sum()
}

/// The operating point before any balancing action: scheduled setpoints,
/// served loads as given, the disturbance of the requirement applied.
/// Returns the dispatch and the signed power still to be balanced.
pub fn disturbed_dispatch(ctx: &LsContext, loads_kw: &[f64]) -> (Dispatch, f64) {
    let st = &ctx.state;
    let islanded = ctx.islanded();
    let mut d = Dispatch {
        dg: st
            .dg
            .iter()
            .map(|s| DgSetpoint {
                p_kw: if s.committed { s.p_kw } else { 0.0 },
                r_kw: 0.0,
                committed: s.committed,
                started: false,
                deloaded_kw: 0.0,
            })
            .collect(),
        storage_kw: st.storage_kw.clone(),
        curtailment_kw: vec![0.0; loads_kw.len()],
        served_kw: loads_kw.to_vec(),
        exchange_kwh: if islanded { 0.0 } else { st.scheduled_import_kw() },
        reserve_kw: 0.0,
    };
    let req = &ctx.requirement;
    let need = match req.origin {
        Origin::Islanding => d.net_import_kw(),
        Origin::LoadDeviation => {
            let total: f64 = loads_kw.iter().sum();
            if total > 0.0 {
                let scale = 1.0 + req.signed_kw() / total;
                for v in &mut d.served_kw {
                    *v *= scale.max(0.0);
                }
            }
            req.signed_kw()
        }
        Origin::DgLoss { bus } => {
            for (sp, u) in d.dg.iter_mut().zip(&ctx.assets.dg) {
                if u.bus == bus {
                    *sp = DgSetpoint::default();
                }
            }
            req.signed_kw()
        }
    };
    finish(ctx, &mut d);
    (d, need)
}

/// Derives reserve offers and de-loading from the setpoints.
fn finish(ctx: &LsContext, d: &mut Dispatch) {
    let islanded = ctx.islanded();
    let mut reserve = 0.0;
    for ((sp, u), s) in d.dg.iter_mut().zip(&ctx.assets.dg).zip(&ctx.state.dg) {
        sp.deloaded_kw = if s.committed { (s.p_kw - sp.p_kw).max(0.0) } else { 0.0 };
        sp.r_kw = if sp.committed && u.kind.is_dispatchable() && !islanded {
            (u.rated_kw - sp.p_kw).min(s.r_kw).max(0.0)
        } else {
            0.0
        };
        reserve += sp.r_kw;
    }
    d.reserve_kw = reserve;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSample {
    pub sample_index: u32,
    pub loads_kw: Vec<f64>,
    pub dispatch: Dispatch,
    /// Signed power the allocation had to cover, kW.
    pub requirement_kw: f64,
    pub allocated_kw: f64,
    pub profit: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub slack_injection_kw: f64,
    pub losses_kw: f64,
}

/// Random allocation of `need` (signed, + is deficit) over eligible actors.
/// `None` when the flexibility cannot cover it.
pub fn sample_dispatch(ctx: &LsContext, base: &Dispatch, need: f64, rng: &mut SampleRng) -> Option<Dispatch> {
    let direction = Direction::of(need);
    let mut remaining = need.abs();
    let mut d = base.clone();
    if remaining < ALLOCATION_TOLERANCE_KW {
        return Some(d);
    }
    let pool = actors(ctx, direction);
    if total_flexibility(ctx, base, direction) < remaining - ALLOCATION_TOLERANCE_KW {
        return None;
    }
    while remaining >= ALLOCATION_TOLERANCE_KW {
        let eligible: Vec<(Actor, f64)> = pool
            .iter()
            .map(|&a| (a, headroom(ctx, &d, a, remaining)))
            .filter(|&(_, h)| h > 1e-9)
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let (actor, room) = eligible[rng.below(eligible.len())];
        let mut kw = (rng.uniform_open0() * remaining).min(room);
        if let Actor::DgStart(i) = actor {
            kw = kw.max(ctx.assets.dg[i].technical_min_kw).min(remaining);
        }
        // Sweep up a sliver that would otherwise take many rounds.
        if remaining - kw < ALLOCATION_TOLERANCE_KW && room >= remaining {
            kw = remaining;
        }
        apply(ctx, &mut d, actor, kw);
        remaining -= kw;
    }
    finish(ctx, &mut d);
    Some(d)
}

/// Builds sample `index` from scratch. `Ok(None)` when it is skipped for
/// lack of flexibility.
pub fn generate_sample(ctx: &LsContext, seed: u64, index: u32) -> Result<Option<GeneratedSample>> {
    let mut rng = SampleRng::new(seed, index as u64);
    let loads = sample_loads(&ctx.state, &mut rng);
    let (base, need) = disturbed_dispatch(ctx, &loads);
    let Some(dispatch) = sample_dispatch(ctx, &base, need, &mut rng) else {
        return Ok(None);
    };
    debug_assert!(dispatch_is_admissible(ctx, &dispatch));
    let allocated = net_change(&base, &dispatch);
    let inj = ctx.assets.bus_injections(&ctx.network, &dispatch)?;
    let pf = solve_power_flow(&ctx.network, &inj)?;
    let report = check_constraints(&ctx.network, &pf);
    let profit = dispatch_profit(&dispatch, &ctx.costs, &ctx.assets)?;
    Ok(Some(GeneratedSample {
        sample_index: index,
        loads_kw: loads,
        dispatch,
        requirement_kw: need,
        allocated_kw: allocated,
        profit,
        feasible: report.feasible,
        violations: report.violations,
        slack_injection_kw: pf.slack_injection_kw,
        losses_kw: pf.losses_kw,
    }))
}

/// Signed balancing contribution of `after` relative to `before`, kW.
pub fn net_change(before: &Dispatch, after: &Dispatch) -> f64 {
    before.net_import_kw() - after.net_import_kw()
}

/// Per-actor technical checks on a finished dispatch, with a small
/// tolerance for accumulated rounding.
pub fn dispatch_is_admissible(ctx: &LsContext, d: &Dispatch) -> bool {
    const EPS: f64 = 1e-6;
    let a = &ctx.assets;
    let dg_ok = a.dg.iter().zip(&d.dg).all(|(u, sp)| {
        if !sp.committed {
            return sp.p_kw == 0.0;
        }
        let cap = if u.kind.is_dispatchable() { u.rated_kw } else { u.availability_kw };
        sp.p_kw >= u.technical_min_kw - EPS && sp.r_kw >= 0.0 && sp.p_kw + sp.r_kw <= cap + EPS
    });
    let storage_ok = a.storage.iter().zip(&d.storage_kw).all(|(b, &p)| {
        let rounded = (p / EPS).round() * EPS;
        storage_feasible(b, p, 1.0) || storage_feasible(b, rounded - rounded.signum() * EPS, 1.0)
    });
    let loads_ok = d
        .served_kw
        .iter()
        .zip(&d.curtailment_kw)
        .all(|(&s, &c)| s >= -EPS && c >= -EPS);
    dg_ok && storage_ok && loads_ok
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsRecord {
    pub sample_index: u32,
    pub attributes: Vec<f64>,
    pub profit: f64,
    pub feasible: bool,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningSet {
    pub attribute_names: Vec<String>,
    pub seed: u64,
    pub attempted: u32,
    pub skipped: u32,
    pub threshold: Option<f64>,
    pub top_pct: Option<f64>,
    pub records: Vec<LsRecord>,
}

impl LsRecord {
    pub fn from_sample(ctx: &LsContext, s: &GeneratedSample) -> Self {
        LsRecord {
            sample_index: s.sample_index,
            attributes: ctx.attributes_of(&s.dispatch),
            profit: s.profit,
            feasible: s.feasible,
            label: None,
        }
    }
}

/// Generates the records for indices `[start, end)`, in index order.
/// Returns the kept records and the number skipped.
pub fn generate_range(ctx: &LsContext, seed: u64, start: u32, end: u32) -> Result<(Vec<LsRecord>, u32)> {
    let mut kept = Vec::with_capacity((end - start) as usize);
    let mut skipped = 0;
    for i in start..end {
        match generate_sample(ctx, seed, i)? {
            Some(s) => kept.push(LsRecord::from_sample(ctx, &s)),
            None => skipped += 1,
        }
    }
    Ok((kept, skipped))
}

/// Checks that some flexibility exists in the requirement's direction.
pub fn check_flexibility(ctx: &LsContext) -> Result<()> {
    let loads = ctx.state.load_next_kw.clone();
    let (base, need) = disturbed_dispatch(ctx, &loads);
    let direction = if ctx.islanded() { Direction::of(need) } else { ctx.requirement.direction };
    if total_flexibility(ctx, &base, direction) <= 0.0 {
        return Err(Error::NoFlexibility);
    }
    Ok(())
}

/// Assembles a learning set from parts and enforces the skip budget.
pub fn assemble(names: Vec<String>, seed: u64, n: u32, mut records: Vec<LsRecord>, skipped: u32) -> Result<LearningSet> {
    records.sort_by_key(|r| r.sample_index);
    if n > 0 && skipped as f64 > SKIP_BUDGET * n as f64 {
        return Err(Error::SkipBudget {
            attempted: n as usize,
            skipped: skipped as usize,
        });
    }
    if skipped > 0 {
        log::info!("{skipped} of {n} samples skipped for lack of flexibility");
    }
    Ok(LearningSet {
        attribute_names: names,
        seed,
        attempted: n,
        skipped,
        threshold: None,
        top_pct: None,
        records,
    })
}

pub fn generate_ls(ctx: &LsContext, n: u32, seed: u64) -> Result<LearningSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample count must be at least 1".into()));
    }
    check_flexibility(ctx)?;
    let (records, skipped) = generate_range(ctx, seed, 0, n)?;
    assemble(ctx.attribute_names(), seed, n, records, skipped)
}

/// Profit value separating the most profitable `top_pct` of `profits`:
/// the `(1 - top_pct)` quantile with lower interpolation. A fraction of one
/// yields negative infinity so every value lies above it.
pub fn cost_threshold(profits: &[f64], top_pct: f64) -> Result<f64> {
    if profits.is_empty() {
        return Err(Error::EmptyCosts);
    }
    if !(top_pct > 0.0 && top_pct <= 1.0) {
        return Err(Error::InvalidParameter(format!("top fraction {top_pct} outside (0, 1]")));
    }
    if top_pct >= 1.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let mut sorted = profits.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = ((1.0 - top_pct) * (sorted.len() - 1) as f64 + 1e-9).floor() as usize;
    Ok(sorted[pos.min(sorted.len() - 1)])
}

pub fn label(profit: f64, feasible: bool, threshold: f64) -> bool {
    feasible && profit > threshold
}

impl LearningSet {
    pub fn profits(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.profit).collect()
    }

    /// Labels every record against `threshold`.
    pub fn label_with(&self, threshold: f64, top_pct: Option<f64>) -> LearningSet {
        let mut out = self.clone();
        out.threshold = Some(threshold);
        out.top_pct = top_pct;
        for r in &mut out.records {
            r.label = Some(label(r.profit, r.feasible, threshold));
        }
        out
    }

    /// Labels against the Top-`top_pct` threshold of this set's own profits.
    pub fn label_top(&self, top_pct: f64) -> Result<LearningSet> {
        let thr = cost_threshold(&self.profits(), top_pct)?;
        Ok(self.label_with(thr, Some(top_pct)))
    }

    /// Training and test samples: every third index is held out.
    pub fn split_train_test(&self) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
        self.labeled().into_iter().partition(|s| s.sample_index % 3 != 2)
    }

    pub fn labeled(&self) -> Vec<LabeledSample> {
        self.records
            .iter()
            .map(|r| LabeledSample {
                sample_index: r.sample_index,
                attributes: r.attributes.clone(),
                label: r.label.unwrap_or(false),
                profit: r.profit,
            })
            .collect()
    }

    pub fn true_fraction(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.label == Some(true)).count() as f64 / self.records.len() as f64
    }
}

/// Bit-exact learning-set serialization. All integers and floats are
/// little-endian; floats are IEEE-754 binary64.
///
/// ```text
/// magic "PCLS" | u8 version = 1
/// u32 attribute count | per attribute: u32 byte length, UTF-8 name
/// u64 seed | u32 attempted | u32 skipped
/// u8 threshold flag | f64 threshold | u8 top flag | f64 top fraction
/// u32 record count | per record:
///     u32 sample index | f64 x attribute count | f64 profit
///     u8 feasible | u8 label (0 false, 1 true, 2 unlabeled)
/// ```
pub mod canonical {
    use super::*;

    pub const MAGIC: &[u8; 4] = b"PCLS";
    pub const VERSION: u8 = 1;

    pub fn encode_record(out: &mut Vec<u8>, r: &LsRecord) {
        out.extend_from_slice(&r.sample_index.to_le_bytes());
        for v in &r.attributes {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&r.profit.to_le_bytes());
        out.push(r.feasible as u8);
        out.push(match r.label {
            Some(false) => 0,
            Some(true) => 1,
            None => 2,
        });
    }

    pub fn encode(ls: &LearningSet) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(ls.attribute_names.len() as u32).to_le_bytes());
        for n in &ls.attribute_names {
            out.extend_from_slice(&(n.len() as u32).to_le_bytes());
            out.extend_from_slice(n.as_bytes());
        }
        out.extend_from_slice(&ls.seed.to_le_bytes());
        out.extend_from_slice(&ls.attempted.to_le_bytes());
        out.extend_from_slice(&ls.skipped.to_le_bytes());
        for opt in [ls.threshold, ls.top_pct] {
            out.push(opt.is_some() as u8);
            out.extend_from_slice(&opt.unwrap_or(0.0).to_le_bytes());
        }
        out.extend_from_slice(&(ls.records.len() as u32).to_le_bytes());
        for r in &ls.records {
            encode_record(&mut out, r);
        }
        out
    }

    pub struct Reader<'a> {
        buf: &'a [u8],
        pos: usize,
    }

    impl<'a> Reader<'a> {
        pub fn new(buf: &'a [u8]) -> Self {
            Self { buf, pos: 0 }
        }

        pub fn remaining(&self) -> usize {
            self.buf.len() - self.pos
        }

        pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.remaining() < n {
                return Err(Error::Format(format!("truncated at byte {}", self.pos)));
            }
            let s = &self.buf[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }

        pub fn u8(&mut self) -> Result<u8> {
            Ok(self.bytes(1)?[0])
        }

        pub fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
        }

        pub fn u64(&mut self) -> Result<u64> {
            Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
        }

        pub fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
        }

        pub fn string(&mut self) -> Result<String> {
            let n = self.u32()? as usize;
            String::from_utf8(self.bytes(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
        }
    }

    pub fn decode_record(r: &mut Reader<'_>, n_attr: usize) -> Result<LsRecord> {
        let sample_index = r.u32()?;
        let attributes = (0..n_attr).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let profit = r.f64()?;
        let feasible = match r.u8()? {
            0 => false,
            1 => true,
            v => return Err(Error::Format(format!("feasible flag {v}"))),
        };
        let label = match r.u8()? {
            0 => Some(false),
            1 => Some(true),
            2 => None,
            v => return Err(Error::Format(format!("label byte {v}"))),
        };
        Ok(LsRecord {
            sample_index,
            attributes,
            profit,
            feasible,
            label,
        })
    }

    pub fn decode(buf: &[u8]) -> Result<LearningSet> {
        let mut r = Reader::new(buf);
        if r.bytes(4)? != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n_attr = r.u32()? as usize;
        let attribute_names = (0..n_attr).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
        let seed = r.u64()?;
        let attempted = r.u32()?;
        let skipped = r.u32()?;
        let mut opt = || -> Result<Option<f64>> {
            let flag = r.u8()?;
            let v = r.f64()?;
            Ok((flag != 0).then_some(v))
        };
        let threshold = opt()?;
        let top_pct = opt()?;
        let n = r.u32()? as usize;
        let records = (0..n).map(|_| decode_record(&mut r, n_attr)).collect::<Result<Vec<_>>>()?;
        if r.remaining() != 0 {
            return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
        }
        Ok(LearningSet {
            attribute_names,
            seed,
            attempted,
            skipped,
            threshold,
            top_pct,
            records,
        })
    }
}
