//! Hour-ahead balancing plans: requirement magnitudes, one learning set per
//! direction relabeled at every profitability level, and rule fallback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::assets::dispatch_profit;
use crate::dtree::{train, MrReport, Op, Rule, TrainConfig};
use crate::error::{Error, Result};
use crate::lsgen::{
    disturbed_dispatch, generate_ls, total_flexibility, BalancingRequirement, Direction, LearningSet, LsContext,
    Origin, SystemState,
};
use crate::planner::DeviationModel;
use crate::scenario::Scenario;

/// Profitability levels of the case study, loosest first.
pub const DEFAULT_LEVELS: [f64; 6] = [0.35, 0.30, 0.25, 0.20, 0.15, 0.10];
pub const DEADBAND_FRACTION: f64 = 0.033;

/// Largest sudden shortfall: the biggest single-bus DG injection plus its
/// reserve, or the largest upward load deviation.
pub fn max_deficit(sc: &Scenario, state: &SystemState, dev: &DeviationModel) -> f64 {
    largest_bus_loss(sc, state).map_or(0.0, |(_, kw)| kw).max(dev.load_upper() * state.load_next_kw.iter().sum::<f64>())
}

fn largest_bus_loss(sc: &Scenario, state: &SystemState) -> Option<(u32, f64)> {
    let mut per_bus: BTreeMap<u32, f64> = BTreeMap::new();
    for (u, s) in sc.assets.dg.iter().zip(&state.dg) {
        if s.committed {
            *per_bus.entry(u.bus).or_default() += s.p_kw + s.r_kw;
        }
    }
    per_bus
        .into_iter()
        .fold(None, |best, (bus, kw)| match best {
            Some((_, b)) if b >= kw => best,
            _ => Some((bus, kw)),
        })
}

/// Largest sudden surplus: the largest downward load deviation, or the
/// simultaneous upward deviation of every DG unit of one weather type.
pub fn max_excess(sc: &Scenario, state: &SystemState, dev: &DeviationModel) -> f64 {
    let load = -dev.load_lower() * state.load_next_kw.iter().sum::<f64>();
    let mut by_type: BTreeMap<&str, f64> = BTreeMap::new();
    for (u, s) in sc.assets.dg.iter().zip(&state.dg) {
        if u.kind.is_dispatchable() || !s.committed {
            continue;
        }
        let up = dev.upper_for(u.kind.weather_type());
        *by_type.entry(u.kind.weather_type()).or_default() += up * u.availability_kw;
    }
    by_type.into_values().fold(load.max(0.0), f64::max)
}

pub fn within_deadband(deviation_kw: f64, nominal_load_kw: f64) -> bool {
    deviation_kw.abs() <= DEADBAND_FRACTION * nominal_load_kw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub levels: Vec<f64>,
    pub samples: u32,
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS.to_vec(),
            samples: 1000,
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::InvalidParameter("at least one profitability level is required".into()));
        }
        if let Some(l) = self.levels.iter().find(|&&l| !(l > 0.0 && l <= 1.0)) {
            return Err(Error::InvalidParameter(format!("level {l} outside (0, 1]")));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter("sample count must be at least 1".into()));
        }
        self.train.validate()
    }

    /// Levels ordered loosest (largest fraction) first.
    fn ordered_levels(&self) -> Vec<f64> {
        let mut levels = self.levels.clone();
        levels.sort_by(|a, b| b.total_cmp(a));
        levels.dedup();
        levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelPlan {
    pub top_pct: f64,
    pub threshold: f64,
    pub true_fraction: f64,
    /// True rules in merit order; empty when none could be extracted.
    pub rules: Vec<Rule>,
    pub mr: Option<MrReport>,
}

impl LevelPlan {
    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingPlan {
    pub hour: u32,
    pub direction: Direction,
    pub requirement: BalancingRequirement,
    pub attribute_names: Vec<String>,
    /// Loosest level first.
    pub levels: Vec<LevelPlan>,
    pub attempted: u32,
    pub skipped: u32,
    /// Why the plan is empty, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BalancingPlan {
    fn empty(hour: u32, requirement: BalancingRequirement, note: &str) -> Self {
        Self {
            hour,
            direction: requirement.direction,
            requirement,
            attribute_names: Vec::new(),
            levels: Vec::new(),
            attempted: 0,
            skipped: 0,
            note: Some(note.to_string()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(LevelPlan::is_empty)
    }

    /// The most profitable level that produced a rule, with its first rule.
    pub fn best(&self) -> Option<(&LevelPlan, &Rule)> {
        self.levels.iter().rev().find_map(|l| l.rules.first().map(|r| (l, r)))
    }
}

pub fn context(sc: &Scenario, state: &SystemState, req: BalancingRequirement) -> Result<LsContext> {
    LsContext::new(sc.network.clone(), sc.assets.clone(), sc.costs, state.clone(), req)
}

/// Trains one tree per level on a labeled copy of `ls`.
pub fn plan_levels(ls: &LearningSet, cfg: &PlanConfig) -> Result<Vec<LevelPlan>> {
    let mut out = Vec::new();
    for top in cfg.ordered_levels() {
        let labeled = ls.label_top(top)?;
        let (train_set, test_set) = labeled.split_train_test();
        let threshold = labeled.threshold.expect("labeled set has a threshold");
        if train_set.is_empty() {
            out.push(LevelPlan {
                top_pct: top,
                threshold,
                true_fraction: labeled.true_fraction(),
                rules: Vec::new(),
                mr: None,
            });
            continue;
        }
        let tree = train(&ls.attribute_names, &train_set, &cfg.train)?;
        let mr = if test_set.is_empty() { None } else { Some(tree.evaluate_mr(&test_set)?) };
        out.push(LevelPlan {
            top_pct: top,
            threshold,
            true_fraction: labeled.true_fraction(),
            rules: tree.extract_rules(),
            mr,
        });
    }
    Ok(out)
}

/// Full plan for one explicit requirement.
pub fn plan_requirement(
    sc: &Scenario,
    state: &SystemState,
    req: BalancingRequirement,
    cfg: &PlanConfig,
) -> Result<(BalancingPlan, LearningSet)> {
    cfg.validate()?;
    let ctx = context(sc, state, req)?;
    let ls = generate_ls(&ctx, cfg.samples, cfg.seed)?;
    let levels = plan_levels(&ls, cfg)?;
    let plan = BalancingPlan {
        hour: state.hour + 1,
        direction: req.direction,
        requirement: req,
        attribute_names: ls.attribute_names.clone(),
        levels,
        attempted: ls.attempted,
        skipped: ls.skipped,
        note: None,
    };
    Ok((plan, ls))
}

/// Deficit and excess requirements of the hour, sized by the worst case.
pub fn hour_requirements(sc: &Scenario, state: &SystemState) -> (BalancingRequirement, BalancingRequirement) {
    let dev = &sc.deviation;
    let load_up = dev.load_upper() * state.load_next_kw.iter().sum::<f64>();
    let deficit = match largest_bus_loss(sc, state) {
        Some((bus, kw)) if kw > load_up => BalancingRequirement {
            direction: Direction::Deficit,
            magnitude_kw: kw,
            origin: Origin::DgLoss { bus },
        },
        _ => BalancingRequirement {
            direction: Direction::Deficit,
            magnitude_kw: load_up,
            origin: Origin::LoadDeviation,
        },
    };
    let excess = BalancingRequirement {
        direction: Direction::Excess,
        magnitude_kw: max_excess(sc, state, dev),
        origin: Origin::LoadDeviation,
    };
    (deficit, excess)
}

/// Deficit and excess plans for hour `t+1`.
pub fn plan_hour(sc: &Scenario, state: &SystemState, cfg: &PlanConfig) -> Result<(BalancingPlan, BalancingPlan)> {
    cfg.validate()?;
    let (deficit, excess) = hour_requirements(sc, state);
    let mut plans = Vec::with_capacity(2);
    for req in [deficit, excess] {
        if within_deadband(req.magnitude_kw, sc.meta.nominal_total_load_kw) {
            plans.push(BalancingPlan::empty(state.hour + 1, req, "within deadband"));
            continue;
        }
        plans.push(plan_requirement(sc, state, req, cfg)?.0);
    }
    let excess = plans.pop().expect("two plans");
    let deficit = plans.pop().expect("two plans");
    Ok((deficit, excess))
}

/// Minimum net change needed to balance below, kW.
const ZERO_EXCHANGE_KW: f64 = 0.1;

/// Plan for a forced disconnection at hour `t+1`: the scheduled import must
/// be met internally.
/// Requirement posed by disconnecting at the scheduled import.
pub fn islanding_requirement(state: &SystemState) -> BalancingRequirement {
    let import = state.scheduled_import_kw();
    BalancingRequirement {
        direction: Direction::of(import),
        magnitude_kw: import.abs(),
        origin: Origin::Islanding,
    }
}

pub fn plan_islanding(sc: &Scenario, state: &SystemState, cfg: &PlanConfig) -> Result<BalancingPlan> {
    cfg.validate()?;
    let req = islanding_requirement(state);
    if req.magnitude_kw < ZERO_EXCHANGE_KW {
        return Ok(BalancingPlan::empty(state.hour + 1, req, "zero net exchange at disconnection"));
    }
    let ctx = context(sc, state, req)?;
    let (base, need) = disturbed_dispatch(&ctx, &state.load_next_kw);
    let available = total_flexibility(&ctx, &base, Direction::of(need));
    if available + ZERO_EXCHANGE_KW < need.abs() {
        return Err(Error::Shortfall {
            required: need.abs(),
            available,
            shortfall: need.abs() - available,
        });
    }
    Ok(plan_requirement(sc, state, req, cfg)?.0)
}

/// Misclassification rates of one level averaged over repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrSummary {
    pub top_pct: f64,
    /// Runs whose test set produced a rate.
    pub runs: u32,
    pub mean_mr: f64,
    pub mean_mrr: f64,
    pub min_mr: f64,
    pub max_mr: f64,
}

/// Islanding plans for seeds `cfg.seed .. cfg.seed + repeats` and their
/// per-level mr/mrr summary, loosest level first.
pub fn evaluate_mr(
    sc: &Scenario,
    state: &SystemState,
    cfg: &PlanConfig,
    repeats: u32,
) -> Result<(Vec<MrSummary>, Vec<BalancingPlan>)> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("at least one repeat is required".into()));
    }
    let plans = (0..repeats as u64)
        .map(|r| {
            let run = PlanConfig {
                seed: cfg.seed.wrapping_add(r),
                ..cfg.clone()
            };
            plan_islanding(sc, state, &run)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = cfg
        .ordered_levels()
        .into_iter()
        .enumerate()
        .map(|(i, top)| {
            let rates: Vec<MrReport> = plans.iter().filter_map(|p| p.levels.get(i).and_then(|l| l.mr)).collect();
            let n = rates.len() as f64;
            MrSummary {
                top_pct: top,
                runs: rates.len() as u32,
                mean_mr: rates.iter().map(|m| m.mr).sum::<f64>() / n,
                mean_mrr: rates.iter().map(|m| m.mrr).sum::<f64>() / n,
                min_mr: rates.iter().map(|m| m.mr).fold(f64::INFINITY, f64::min),
                max_mr: rates.iter().map(|m| m.mr).fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok((summary, plans))
}

/// The most profitable rule whose `>=` predicates are all within the
/// realized capabilities. Attributes absent from `realized` are taken as
/// unconstrained, and `<` predicates are always satisfiable.
pub fn select_rule<'a>(plan: &'a BalancingPlan, realized: &BTreeMap<String, f64>) -> Option<(&'a LevelPlan, &'a Rule)> {
    plan.levels.iter().rev().find_map(|level| {
        level
            .rules
            .iter()
            .find(|r| {
                r.predicates.iter().all(|p| match (p.op, realized.get(&p.attribute)) {
                    (Op::Ge, Some(&cap)) => cap >= p.threshold,
                    _ => true,
                })
            })
            .map(|r| (level, r))
    })
}

/// Threshold of the most profitable non-empty level minus that of `selected`.
pub fn forecast_error_cost(plan: &BalancingPlan, selected: &LevelPlan) -> f64 {
    plan.best().map_or(0.0, |(top, _)| top.threshold - selected.threshold)
}

/// Profit of the disturbed hour with no balancing action taken.
pub fn baseline_profit(sc: &Scenario, state: &SystemState, req: BalancingRequirement) -> Result<f64> {
    let ctx = context(sc, state, req)?;
    let (d, _) = disturbed_dispatch(&ctx, &state.load_next_kw);
    dispatch_profit(&d, &ctx.costs, &ctx.assets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtree::Predicate;

    #[test]
    fn deadband_edges() {
        assert!(within_deadband(90.0, 2730.0));
        assert!(!within_deadband(95.0, 2730.0));
        assert!(within_deadband(0.0, 2730.0));
        assert_eq!(within_deadband(-95.0, 2730.0), within_deadband(95.0, 2730.0));
    }

    fn rule(attr: &str, thr: f64, profit: f64) -> Rule {
        Rule {
            predicates: vec![Predicate {
                attribute: attr.into(),
                op: Op::Ge,
                threshold: thr,
            }],
            label: true,
            purity: 1.0,
            promoted: false,
            leaf_id: 3,
            support: 10,
            min_profit: profit,
            mean_profit: profit,
            mean_attributes: vec![],
        }
    }

    fn plan() -> BalancingPlan {
        let req = BalancingRequirement {
            direction: Direction::Deficit,
            magnitude_kw: 100.0,
            origin: Origin::LoadDeviation,
        };
        let level = |top: f64, thr: f64, rules: Vec<Rule>| LevelPlan {
            top_pct: top,
            threshold: thr,
            true_fraction: top,
            rules,
            mr: None,
        };
        BalancingPlan {
            hour: 1,
            direction: Direction::Deficit,
            requirement: req,
            attribute_names: vec!["PV@13".into()],
            levels: vec![
                level(0.2, 7.93, vec![rule("PV@13", 50.0, 8.0)]),
                level(0.15, 8.45, vec![rule("PV@13", 100.0, 9.0)]),
                level(0.1, 9.0, vec![]),
            ],
            attempted: 10,
            skipped: 0,
            note: None,
        }
    }

    #[test]
    fn fallback_to_lower_level() {
        let p = plan();
        let at_forecast = BTreeMap::from([("PV@13".to_string(), 108.0)]);
        let (lvl, _) = select_rule(&p, &at_forecast).unwrap();
        assert_eq!(lvl.top_pct, 0.15);
        assert_eq!(forecast_error_cost(&p, lvl), 0.0);

        let short = BTreeMap::from([("PV@13".to_string(), 70.0)]);
        let (lvl, _) = select_rule(&p, &short).unwrap();
        assert_eq!(lvl.top_pct, 0.2);
        assert!((forecast_error_cost(&p, lvl) - (8.45 - 7.93)).abs() < 1e-12);

        let none = BTreeMap::from([("PV@13".to_string(), 10.0)]);
        assert!(select_rule(&p, &none).is_none());
    }
}
