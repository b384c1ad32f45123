//! Generators, battery banks, load groups and the dispatch-profit function.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, BusInjection, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgKind {
    Chp,
    Pv,
    Bipv,
    Wg,
}

impl DgKind {
    pub fn is_dispatchable(self) -> bool {
        matches!(self, DgKind::Chp)
    }

    /// Units that share weather exposure deviate together.
    pub fn weather_type(self) -> &'static str {
        match self {
            DgKind::Chp => "chp",
            DgKind::Pv | DgKind::Bipv => "pv",
            DgKind::Wg => "wind",
        }
    }
}

/// Quadratic running cost `a*P^2 + b*P + c` in £/h with P in kW.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub c: f64,
}

impl CostCurve {
    pub fn eval(&self, p_kw: f64) -> f64 {
        self.a * p_kw * p_kw + self.b * p_kw + self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgUnit {
    pub id: String,
    pub bus: BusId,
    pub kind: DgKind,
    pub rated_kw: f64,
    #[serde(default)]
    pub technical_min_kw: f64,
    #[serde(default)]
    pub cost: CostCurve,
    #[serde(default)]
    pub startup_cost: f64,
    /// £/kWh charged for every kWh the unit runs below its day-ahead setpoint.
    #[serde(default)]
    pub deload_cost: f64,
    #[serde(default)]
    pub committed: bool,
    /// Forecast available power for hour t+1 (stochastic kinds).
    #[serde(default)]
    pub availability_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryBank {
    pub id: String,
    pub bus: BusId,
    pub capacity_kwh: f64,
    pub converter_kw: f64,
    pub soc: f64,
    pub preferred_soc: f64,
    pub min_soc: f64,
    /// £/kWh for charging. Negative values credit the stored energy.
    pub charge_cost: f64,
    pub discharge_cost: f64,
    #[serde(default = "default_overload")]
    pub overload_factor: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
}

fn default_overload() -> f64 {
    1.2
}

fn default_efficiency() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadClass {
    Domestic,
    Landlord,
    Chiller,
    Ev,
    CommunityCentre,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadGroup {
    pub id: String,
    pub bus: BusId,
    pub class: LoadClass,
    pub rated_kva: f64,
    /// Retail price paid by the group, £/kWh.
    pub price: f64,
    #[serde(default)]
    pub curtailable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curtailment_cost: Option<f64>,
    #[serde(default = "default_pf")]
    pub power_factor: f64,
    /// Forecast demand for hour t+1.
    #[serde(default)]
    pub forecast_kw: f64,
}

fn default_pf() -> f64 {
    0.95
}

impl LoadGroup {
    pub fn reactive_ratio(&self) -> f64 {
        let pf = self.power_factor.clamp(1e-6, 1.0);
        (1.0 - pf * pf).sqrt() / pf
    }

    /// Active-power ceiling implied by the kVA rating.
    pub fn rated_kw(&self) -> f64 {
        self.rated_kva * self.power_factor
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Wholesale energy price, £/kWh.
    pub energy_price: f64,
    /// Spinning-reserve price, £/kW for the hour.
    pub reserve_price: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssetPortfolio {
    #[serde(default)]
    pub dg: Vec<DgUnit>,
    #[serde(default)]
    pub storage: Vec<BatteryBank>,
    #[serde(default)]
    pub loads: Vec<LoadGroup>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DgSetpoint {
    pub p_kw: f64,
    pub r_kw: f64,
    pub committed: bool,
    pub started: bool,
    /// Output below the day-ahead setpoint, kW.
    pub deloaded_kw: f64,
}

/// One candidate hour-ahead operating point. Vectors are aligned with the
/// portfolio's `dg`, `storage` and `loads` lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dispatch {
    pub dg: Vec<DgSetpoint>,
    /// Converter setpoints, kW; positive discharges.
    pub storage_kw: Vec<f64>,
    /// Interrupted demand per load group, kW (zero for firm groups).
    pub curtailment_kw: Vec<f64>,
    pub served_kw: Vec<f64>,
    /// Energy bought from the market for the hour, kWh; negative sells.
    pub exchange_kwh: f64,
    /// Total reserve offered, kW.
    pub reserve_kw: f64,
}

impl Dispatch {
    /// Import at the interconnection implied by the setpoints (losses excluded).
    pub fn net_import_kw(&self) -> f64 {
        let load: f64 = self.served_kw.iter().sum();
        let gen: f64 = self.dg.iter().map(|d| d.p_kw).sum();
        let storage: f64 = self.storage_kw.iter().sum();
        load - gen - storage
    }

    fn check_shape(&self, portfolio: &AssetPortfolio) -> Result<()> {
        let checks = [
            ("dg", self.dg.len(), portfolio.dg.len()),
            ("storage", self.storage_kw.len(), portfolio.storage.len()),
            ("curtailment", self.curtailment_kw.len(), portfolio.loads.len()),
            ("served", self.served_kw.len(), portfolio.loads.len()),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::DispatchMismatch(format!(
                    "{what}: {got} entries for {want} assets"
                )));
            }
        }
        for (i, lg) in portfolio.loads.iter().enumerate() {
            if !lg.curtailable && self.curtailment_kw[i] != 0.0 {
                return Err(Error::DispatchMismatch(format!(
                    "load group {} is not curtailable",
                    lg.id
                )));
            }
        }
        Ok(())
    }
}

/// Hour-ahead dispatch profit in £ for the hour:
///
/// ```text
/// -ρE·E + ρR·R + Σ ρL·Load
///   - Σ_DG [ C(P+R)·I + SC·J ]
///   - Σ_int C_int·R_int
///   - Σ_str C_str·|P_str|
/// ```
///
/// The DG cost function also carries the unit's de-loading charge. Storage
/// uses its discharge cost for positive setpoints and its charge cost for
/// negative ones.
pub fn dispatch_profit(d: &Dispatch, cm: &CostModel, portfolio: &AssetPortfolio) -> Result<f64> {
    d.check_shape(portfolio)?;
    let mut profit = -cm.energy_price * d.exchange_kwh + cm.reserve_price * d.reserve_kw;
    for (lg, &served) in portfolio.loads.iter().zip(&d.served_kw) {
        profit += lg.price * served;
    }
    for (unit, sp) in portfolio.dg.iter().zip(&d.dg) {
        if sp.committed {
            profit -= unit.cost.eval(sp.p_kw + sp.r_kw);
        }
        if sp.started {
            profit -= unit.startup_cost;
        }
        profit -= unit.deload_cost * sp.deloaded_kw;
    }
    for (lg, &cut) in portfolio.loads.iter().zip(&d.curtailment_kw) {
        profit -= lg.curtailment_cost.unwrap_or(0.0) * cut;
    }
    for (bank, &p) in portfolio.storage.iter().zip(&d.storage_kw) {
        let unit_cost = if p >= 0.0 {
            bank.discharge_cost
        } else {
            bank.charge_cost
        };
        profit -= unit_cost * p.abs();
    }
    Ok(profit)
}

/// Technical feasibility of a DG setpoint and reserve offer.
pub fn dg_marginal_feasible(u: &DgUnit, p: f64, r: f64) -> bool {
    if u.kind.is_dispatchable() {
        p >= u.technical_min_kw && r >= 0.0 && p + r <= u.rated_kw
    } else {
        (0.0..=u.availability_kw).contains(&p) && r == 0.0
    }
}

impl BatteryBank {
    /// SOC after holding setpoint `p` (positive discharges) for `duration_h`.
    pub fn soc_after(&self, p: f64, duration_h: f64) -> f64 {
        let energy = if p >= 0.0 {
            p * duration_h / self.efficiency
        } else {
            p * duration_h * self.efficiency
        };
        self.soc - energy / self.capacity_kwh
    }

    /// Up (discharge) capability for one hour.
    pub fn up_reserve_kw(&self) -> f64 {
        let energy = ((self.soc - self.min_soc) * self.capacity_kwh * self.efficiency).max(0.0);
        (self.converter_kw * self.overload_factor).min(energy)
    }

    /// Down (charge) capability for one hour.
    pub fn down_reserve_kw(&self) -> f64 {
        let energy = ((1.0 - self.soc) * self.capacity_kwh / self.efficiency).max(0.0);
        self.converter_kw.min(energy)
    }
}

/// Converter and SOC feasibility of holding `p` for `duration_h` hours.
pub fn storage_feasible(b: &BatteryBank, p: f64, duration_h: f64) -> bool {
    if p == 0.0 {
        return true;
    }
    let factor = if duration_h <= 1.0 {
        b.overload_factor
    } else {
        1.0
    };
    if p.abs() > b.converter_kw * factor + 1e-9 {
        return false;
    }
    let soc = b.soc_after(p, duration_h);
    soc >= b.min_soc - 1e-12 && soc <= 1.0 + 1e-12
}

/// An asset with a forecast and a rating, so a fractional deviation can be applied.
pub trait Forecasted {
    fn forecast_kw(&self) -> f64;
    fn rated_kw(&self) -> f64;
}

impl Forecasted for DgUnit {
    fn forecast_kw(&self) -> f64 {
        if self.kind.is_dispatchable() {
            self.rated_kw
        } else {
            self.availability_kw
        }
    }

    fn rated_kw(&self) -> f64 {
        self.rated_kw
    }
}

impl Forecasted for LoadGroup {
    fn forecast_kw(&self) -> f64 {
        self.forecast_kw
    }

    fn rated_kw(&self) -> f64 {
        LoadGroup::rated_kw(self)
    }
}

/// `forecast * (1 + deviation)` clamped to `[0, rated]`.
pub fn apply_deviation(asset: &impl Forecasted, deviation: f64) -> f64 {
    (asset.forecast_kw() * (1.0 + deviation)).clamp(0.0, asset.rated_kw())
}

impl AssetPortfolio {
    pub fn validate(&self, net: &NetworkModel) -> Result<()> {
        let buses: HashSet<BusId> = net.buses.iter().map(|b| b.id).collect();
        let mut ids = HashSet::new();
        let refs = self
            .dg
            .iter()
            .map(|u| (&u.id, u.bus))
            .chain(self.storage.iter().map(|b| (&b.id, b.bus)))
            .chain(self.loads.iter().map(|l| (&l.id, l.bus)));
        for (id, bus) in refs {
            if !buses.contains(&bus) {
                return Err(Error::Validation(format!(
                    "asset {id} references unknown bus {bus}"
                )));
            }
            if !ids.insert(id.clone()) {
                return Err(Error::Validation(format!("duplicate asset id {id}")));
            }
        }
        for u in &self.dg {
            if !(0.0..=u.rated_kw).contains(&u.technical_min_kw) {
                return Err(Error::Validation(format!(
                    "{}: technical minimum outside [0, rated]",
                    u.id
                )));
            }
            if !(0.0..=u.rated_kw).contains(&u.availability_kw) {
                return Err(Error::Validation(format!(
                    "{}: availability outside [0, rated]",
                    u.id
                )));
            }
            if !u.kind.is_dispatchable() && (u.technical_min_kw != 0.0 || u.startup_cost != 0.0) {
                return Err(Error::Validation(format!(
                    "{}: stochastic units have no technical minimum or start-up cost",
                    u.id
                )));
            }
        }
        for b in &self.storage {
            if b.capacity_kwh <= 0.0 || b.converter_kw <= 0.0 {
                return Err(Error::Validation(format!(
                    "{}: capacity and converter rating must be positive",
                    b.id
                )));
            }
            if !(b.min_soc <= b.soc && b.soc <= 1.0) {
                return Err(Error::Validation(format!(
                    "{}: SOC {} outside [{}, 1]",
                    b.id, b.soc, b.min_soc
                )));
            }
            if !(b.efficiency > 0.0 && b.efficiency <= 1.0) {
                return Err(Error::Validation(format!(
                    "{}: efficiency must be in (0, 1]",
                    b.id
                )));
            }
        }
        for l in &self.loads {
            if l.curtailable != l.curtailment_cost.is_some() {
                return Err(Error::Validation(format!(
                    "{}: curtailment cost must be given iff the group is curtailable",
                    l.id
                )));
            }
            if l.price < 0.0 {
                return Err(Error::Validation(format!("{}: negative price", l.id)));
            }
        }
        Ok(())
    }

    /// Per-bus injections for a dispatch, aligned with `net.buses`.
    /// Generation runs at unity power factor; loads at their group power factor.
    pub fn bus_injections(&self, net: &NetworkModel, d: &Dispatch) -> Result<Vec<BusInjection>> {
        d.check_shape(self)?;
        let index = net.bus_index();
        let pos = |bus: BusId| index.get(&bus).copied().ok_or(Error::UnknownBus(bus));
        let mut inj = vec![BusInjection::default(); net.buses.len()];
        for (u, sp) in self.dg.iter().zip(&d.dg) {
            inj[pos(u.bus)?].p_kw += sp.p_kw;
        }
        for (b, &p) in self.storage.iter().zip(&d.storage_kw) {
            inj[pos(b.bus)?].p_kw += p;
        }
        for (l, &served) in self.loads.iter().zip(&d.served_kw) {
            let k = pos(l.bus)?;
            inj[k].p_kw -= served;
            inj[k].q_kvar -= served * l.reactive_ratio();
        }
        Ok(inj)
    }
}
