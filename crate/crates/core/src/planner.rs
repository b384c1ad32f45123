//! Storage sizing: an annual set of forecast-deviation events and the cost of
//! covering them for each candidate battery capacity and preferred SOC.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::assets::DgKind;
use crate::balancer::{baseline_profit, context, plan_requirement, PlanConfig, DEADBAND_FRACTION};
use crate::error::{Error, Result};
use crate::lsgen::{disturbed_dispatch, total_flexibility, BalancingRequirement, Direction, Origin, SystemState};
use crate::rng::SampleRng;
use crate::scenario::Scenario;

pub const HOURS_PER_YEAR: usize = 8760;
pub const DEFICIT_BINS_KW: [f64; 6] = [100.0, 150.0, 200.0, 250.0, 300.0, 350.0];
pub const EXCESS_BINS_KW: [f64; 3] = [100.0, 150.0, 200.0];
/// Events lie outside the mu +/- 2 sigma band of the forecast error.
const TAIL_Z: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Load,
    Pv,
    Wind,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Load, Source::Pv, Source::Wind];

    fn stream(self) -> u64 {
        self as u64
    }
}

/// Forecast-error envelope of one source, as fractions of the source value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceEnvelope {
    /// RMS forecast error.
    pub sigma: f64,
    pub lower: f64,
    pub upper: f64,
    pub extreme_lower: f64,
    pub extreme_upper: f64,
    pub events: u32,
    pub scales_with_load: bool,
}

impl SourceEnvelope {
    fn bounds(&self, extreme: bool) -> (f64, f64) {
        if extreme {
            (self.extreme_lower, self.extreme_upper)
        } else {
            (self.lower, self.upper)
        }
    }

    fn is_zero(&self, extreme: bool) -> bool {
        let (lo, hi) = self.bounds(extreme);
        self.sigma == 0.0 || (lo == 0.0 && hi == 0.0) || self.events == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationModel {
    pub deadband_fraction: f64,
    /// Use the extreme envelopes for PV and wind.
    #[serde(default)]
    pub extreme: bool,
    pub load: SourceEnvelope,
    pub pv: SourceEnvelope,
    pub wind: SourceEnvelope,
}

impl Default for DeviationModel {
    fn default() -> Self {
        let env = |sigma, lower, upper, xl, xu, scales| SourceEnvelope {
            sigma,
            lower,
            upper,
            extreme_lower: xl,
            extreme_upper: xu,
            events: 402,
            scales_with_load: scales,
        };
        Self {
            deadband_fraction: DEADBAND_FRACTION,
            extreme: false,
            load: env(0.033, -0.15, 0.15, -0.15, 0.15, true),
            pv: env(0.035, -0.35, 0.0, -0.5, 0.0, true),
            wind: env(0.057, -0.15, 0.15, -0.4, 0.4, false),
        }
    }
}

impl DeviationModel {
    pub fn envelope(&self, s: Source) -> &SourceEnvelope {
        match s {
            Source::Load => &self.load,
            Source::Pv => &self.pv,
            Source::Wind => &self.wind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.deadband_fraction) {
            return Err(Error::Validation("deadband fraction outside [0, 1)".into()));
        }
        for s in Source::ALL {
            let e = self.envelope(s);
            let inside = |v: f64| (-1.0..=1.0).contains(&v);
            if !(inside(e.lower) && inside(e.upper) && inside(e.extreme_lower) && inside(e.extreme_upper)) {
                return Err(Error::Validation(format!("{s:?} envelope outside [-1, 1]")));
            }
            if e.lower > 0.0 || e.upper < 0.0 || e.sigma < 0.0 {
                return Err(Error::Validation(format!("{s:?} envelope must straddle zero")));
            }
        }
        Ok(())
    }

    pub fn load_upper(&self) -> f64 {
        self.load.bounds(false).1
    }

    pub fn load_lower(&self) -> f64 {
        self.load.bounds(false).0
    }

    /// Upward envelope of a DG weather type ("pv" or "wind").
    pub fn upper_for(&self, weather_type: &str) -> f64 {
        match weather_type {
            "pv" => self.pv.bounds(self.extreme).1,
            "wind" => self.wind.bounds(self.extreme).1,
            _ => 0.0,
        }
    }
}

/// Synthetic hourly loading as a fraction of the rated load:
/// `mean * (1 + diurnal * cos(2pi (h - peak_hour) / 24)) * (1 + seasonal * cos(2pi (d - peak_day) / 365))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileShape {
    pub mean_fraction: f64,
    pub diurnal_amplitude: f64,
    pub seasonal_amplitude: f64,
    pub peak_hour: f64,
    pub peak_day: f64,
}

impl Default for ProfileShape {
    fn default() -> Self {
        Self {
            mean_fraction: 0.6,
            diurnal_amplitude: 0.25,
            seasonal_amplitude: 0.1,
            peak_hour: 18.0,
            peak_day: 15.0,
        }
    }
}

pub fn synthetic_profile(shape: &ProfileShape, rated_load_kw: f64) -> Vec<f64> {
    use std::f64::consts::TAU;
    (0..HOURS_PER_YEAR)
        .map(|h| {
            let hour = (h % 24) as f64;
            let day = (h / 24) as f64;
            let diurnal = 1.0 + shape.diurnal_amplitude * (TAU * (hour - shape.peak_hour) / 24.0).cos();
            let seasonal = 1.0 + shape.seasonal_amplitude * (TAU * (day - shape.peak_day) / 365.0).cos();
            rated_load_kw * shape.mean_fraction * diurnal * seasonal
        })
        .collect()
}

/// Reads a user profile: one kW value per line, 8760 lines.
pub fn parse_profile(text: &str) -> Result<Vec<f64>> {
    let values = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.parse::<f64>().map_err(|e| Error::Parse(format!("profile value {l:?}: {e}"))))
        .collect::<Result<Vec<f64>>>()?;
    if values.len() != HOURS_PER_YEAR {
        return Err(Error::InvalidParameter(format!(
            "profile has {} values, expected {HOURS_PER_YEAR}",
            values.len()
        )));
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub source: Source,
    pub hour: u32,
    /// Deviation of the source value, as a fraction of it.
    pub fraction: f64,
    /// Balancing need, kW; positive is a deficit.
    pub kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedEvent {
    pub hour: u32,
    pub sources: Vec<Source>,
    pub kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualEvents {
    pub raw: Vec<RawEvent>,
    /// Coincident events summed per hour, deadband-internal results dropped.
    pub combined: Vec<CombinedEvent>,
    pub dropped: usize,
    pub deadband_kw: f64,
}

impl AnnualEvents {
    pub fn raw_count(&self, s: Source) -> usize {
        self.raw.iter().filter(|e| e.source == s).count()
    }
}

/// Draws the annual deviation events. Per source, event hours are uniform
/// without replacement; magnitudes are `sigma * |z|` with `z` standard
/// normal conditioned on `|z| > 2`, capped at the envelope. Load and PV
/// events scale with the hour's loading, wind events with the wind rating.
pub fn generate_annual_events(
    model: &DeviationModel,
    profile: &[f64],
    wind_rated_kw: f64,
    nominal_load_kw: f64,
    seed: u64,
) -> Result<AnnualEvents> {
    if profile.len() != HOURS_PER_YEAR {
        return Err(Error::InvalidParameter(format!(
            "profile has {} hours, expected {HOURS_PER_YEAR}",
            profile.len()
        )));
    }
    model.validate()?;
    let normal = Normal::standard();
    let tail = normal.sf(TAIL_Z);
    let mut raw = Vec::new();
    for source in Source::ALL {
        let env = model.envelope(source);
        let extreme = model.extreme && source != Source::Load;
        if env.is_zero(extreme) {
            continue;
        }
        let (lo, hi) = env.bounds(extreme);
        let mut rng = SampleRng::new(seed, source.stream());
        let hours = rng.sample_without_replacement(HOURS_PER_YEAR, env.events as usize);
        for h in hours {
            let upward = if lo == 0.0 {
                true
            } else if hi == 0.0 {
                false
            } else {
                rng.uniform() < 0.5
            };
            let z = normal.inverse_cdf(1.0 - rng.uniform_open0() * tail);
            let cap = if upward { hi } else { -lo };
            let magnitude = (env.sigma * z).min(cap);
            let fraction = if upward { magnitude } else { -magnitude };
            let base = if env.scales_with_load { profile[h] } else { wind_rated_kw };
            let kw = match source {
                Source::Load => fraction * base,
                Source::Pv | Source::Wind => -fraction * base,
            };
            raw.push(RawEvent {
                source,
                hour: h as u32,
                fraction,
                kw,
            });
        }
    }
    let deadband_kw = model.deadband_fraction * nominal_load_kw;
    let mut by_hour: BTreeMap<u32, (Vec<Source>, f64)> = BTreeMap::new();
    for e in &raw {
        let slot = by_hour.entry(e.hour).or_default();
        slot.0.push(e.source);
        slot.1 += e.kw;
    }
    let total = by_hour.len();
    let combined: Vec<CombinedEvent> = by_hour
        .into_iter()
        .filter(|(_, (_, kw))| kw.abs() > deadband_kw)
        .map(|(hour, (mut sources, kw))| {
            sources.sort();
            CombinedEvent { hour, sources, kw }
        })
        .collect();
    Ok(AnnualEvents {
        dropped: total - combined.len(),
        raw,
        combined,
        deadband_kw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequirementBin {
    /// Signed bin edge, kW; positive edges are deficits.
    pub edge_kw: i32,
}

impl RequirementBin {
    pub fn direction(&self) -> Direction {
        Direction::of(self.edge_kw as f64)
    }

    pub fn magnitude_kw(&self) -> f64 {
        (self.edge_kw as f64).abs()
    }

    /// The load-deviation requirement an event of this bin poses.
    pub fn requirement(&self) -> BalancingRequirement {
        BalancingRequirement {
            direction: self.direction(),
            magnitude_kw: self.magnitude_kw(),
            origin: Origin::LoadDeviation,
        }
    }
}

/// Smallest covering bin edge, or `None` inside the deadband. Deviations
/// beyond the outermost edge clamp to it with a warning.
pub fn bin_requirement(kw: f64, deadband_kw: f64) -> Option<RequirementBin> {
    if kw.abs() <= deadband_kw {
        return None;
    }
    let edges: &[f64] = if kw > 0.0 { &DEFICIT_BINS_KW } else { &EXCESS_BINS_KW };
    let edge = match edges.iter().find(|&&e| e >= kw.abs()) {
        Some(&e) => e,
        None => {
            let e = *edges.last().expect("non-empty");
            log::warn!("deviation {kw:.1} kW beyond the outermost bin; clamped to {e} kW");
            e
        }
    };
    Some(RequirementBin {
        edge_kw: (edge * kw.signum()) as i32,
    })
}

/// Event counts per bin.
pub fn bin_counts(events: &AnnualEvents) -> BTreeMap<RequirementBin, u32> {
    let mut out = BTreeMap::new();
    for e in &events.combined {
        if let Some(b) = bin_requirement(e.kw, events.deadband_kw) {
            *out.entry(b).or_insert(0) += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageOption {
    pub capacity_kwh: f64,
    pub preferred_soc: f64,
}

impl StorageOption {
    /// The planning scenario with the capacity split across banks in
    /// proportion to converter rating and every bank at the preferred SOC.
    pub fn apply(&self, sc: &Scenario) -> Result<Scenario> {
        let planning = sc
            .planning
            .as_ref()
            .ok_or_else(|| Error::Validation("scenario has no planning section".into()))?;
        let total_conv: f64 = sc.assets.storage.iter().map(|b| b.converter_kw).sum();
        let mut out = sc.clone();
        for b in &mut out.assets.storage {
            b.capacity_kwh = self.capacity_kwh * b.converter_kw / total_conv;
            b.soc = self.preferred_soc;
            b.preferred_soc = self.preferred_soc;
        }
        out.schedule = planning.schedule.clone();
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinAppraisal {
    pub bin: RequirementBin,
    pub events: u32,
    pub covered: bool,
    pub cost_per_event: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionAppraisal {
    pub option: StorageOption,
    pub deficit_cost: f64,
    pub excess_cost: f64,
    pub total_cost: f64,
    pub suitable: bool,
    pub bins: Vec<BinAppraisal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningTable {
    pub rows: Vec<OptionAppraisal>,
    pub bin_counts: Vec<(RequirementBin, u32)>,
    pub combined_events: usize,
}

impl PlanningTable {
    pub fn get(&self, capacity_kwh: f64, preferred_soc: f64) -> Option<&OptionAppraisal> {
        self.rows
            .iter()
            .find(|r| r.option.capacity_kwh == capacity_kwh && r.option.preferred_soc == preferred_soc)
    }
}

/// Options listed in the scenario's planning section, capacity-major.
pub fn scenario_options(sc: &Scenario) -> Vec<StorageOption> {
    sc.planning
        .as_ref()
        .map(|p| {
            p.capacities_kwh
                .iter()
                .flat_map(|&c| {
                    p.preferred_socs.iter().map(move |&s| StorageOption {
                        capacity_kwh: c,
                        preferred_soc: s,
                    })
                })
                .collect()
        })
        .unwrap_or_default()
}

/// Annual events for the scenario's planning profile.
pub fn scenario_events(sc: &Scenario, profile: Option<&[f64]>, seed: u64) -> Result<AnnualEvents> {
    let shape = sc.planning.as_ref().map(|p| p.profile).unwrap_or_default();
    let synthetic;
    let profile = match profile {
        Some(p) => p,
        None => {
            synthetic = synthetic_profile(&shape, sc.rated_load_kw());
            &synthetic
        }
    };
    let wind: f64 = sc
        .assets
        .dg
        .iter()
        .filter(|u| u.kind == DgKind::Wg)
        .map(|u| u.rated_kw)
        .sum();
    generate_annual_events(&sc.deviation, profile, wind, sc.meta.nominal_total_load_kw, seed)
}

/// Cost of covering one event of `bin` with the most profitable rule,
/// relative to leaving the disturbance unbalanced. `None` when the option's
/// flexibility cannot cover the bin.
pub fn event_cost(sc: &Scenario, state: &SystemState, bin: RequirementBin, cfg: &PlanConfig) -> Result<Option<f64>> {
    let req = bin.requirement();
    let ctx = context(sc, state, req)?;
    let (base, _) = disturbed_dispatch(&ctx, &state.load_next_kw);
    if total_flexibility(&ctx, &base, req.direction) + 1e-9 < req.magnitude_kw {
        return Ok(None);
    }
    let baseline = baseline_profit(sc, state, req)?;
    let (plan, ls) = match plan_requirement(sc, state, req, cfg) {
        Ok(v) => v,
        Err(Error::SkipBudget { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    if !ls.records.iter().any(|r| r.feasible) {
        return Ok(None);
    }
    let best = match plan.best() {
        Some((_, rule)) => rule.mean_profit,
        None => plan.levels.first().map(|l| l.threshold).unwrap_or(baseline),
    };
    Ok(Some((baseline - best).max(0.0)))
}

pub fn appraise(
    sc: &Scenario,
    options: &[StorageOption],
    events: &AnnualEvents,
    cfg: &PlanConfig,
) -> Result<PlanningTable> {
    if events.combined.is_empty() {
        return Err(Error::InvalidParameter("no deviation events to appraise".into()));
    }
    let counts = bin_counts(events);
    let rows = std::thread::scope(|scope| {
        let handles: Vec<_> = options
            .iter()
            .map(|opt| scope.spawn(|| appraise_option(sc, opt, &counts, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("appraisal thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(PlanningTable {
        rows,
        bin_counts: counts.into_iter().collect(),
        combined_events: events.combined.len(),
    })
}

fn appraise_option(
    sc: &Scenario,
    opt: &StorageOption,
    counts: &BTreeMap<RequirementBin, u32>,
    cfg: &PlanConfig,
) -> Result<OptionAppraisal> {
    let variant = opt.apply(sc)?;
    let state = variant.state()?;
    let mut bins = Vec::new();
    let (mut deficit, mut excess, mut suitable) = (0.0, 0.0, true);
    for (&bin, &n) in counts {
        let cost = event_cost(&variant, &state, bin, cfg)?;
        let per = cost.unwrap_or(0.0);
        match (cost, bin.direction()) {
            (None, _) => suitable = false,
            (Some(_), Direction::Deficit) => deficit += per * n as f64,
            (Some(_), Direction::Excess) => excess += per * n as f64,
        }
        bins.push(BinAppraisal {
            bin,
            events: n,
            covered: cost.is_some(),
            cost_per_event: per,
        });
    }
    Ok(OptionAppraisal {
        option: *opt,
        deficit_cost: deficit,
        excess_cost: excess,
        total_cost: deficit + excess,
        suitable,
        bins,
    })
}
