//! Scenario files: network, assets, prices, the day-ahead schedule and the
//! planning inputs in one TOML document.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assets::{AssetPortfolio, CostModel, LoadClass};
use crate::error::{Error, Result};
use crate::lsgen::{ScheduledDg, SystemState};
use crate::network::NetworkModel;
use crate::planner::{DeviationModel, ProfileShape};

/// The bundled planned-community scenario.
pub const BUNDLED: &str = include_str!("../../../scenarios/pcmg.scenario");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub nominal_total_load_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgEntry {
    pub id: String,
    pub p_kw: f64,
    #[serde(default)]
    pub r_kw: f64,
    #[serde(default = "yes")]
    pub committed: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageEntry {
    pub id: String,
    pub p_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadEntry {
    pub id: String,
    pub now_kw: f64,
}

/// Day-ahead schedule for hour `t+1` and the loading at `t`.
/// Omitted DG units run at availability (stochastic) or stay off (CHP);
/// omitted loads are flat at their forecast.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub hour: u32,
    #[serde(default)]
    pub dg: Vec<DgEntry>,
    #[serde(default)]
    pub storage: Vec<StorageEntry>,
    #[serde(default)]
    pub loads: Vec<LoadEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Planning {
    pub capacities_kwh: Vec<f64>,
    pub preferred_socs: Vec<f64>,
    /// Typical operating point the annual events are appraised against.
    pub schedule: Schedule,
    #[serde(default)]
    pub profile: ProfileShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub meta: Meta,
    pub network: NetworkModel,
    pub costs: CostModel,
    pub assets: AssetPortfolio,
    pub schedule: Schedule,
    #[serde(default)]
    pub deviation: DeviationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planning: Option<Planning>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled scenario is valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.assets.validate(&self.network)?;
        self.deviation.validate()?;
        if !(self.meta.nominal_total_load_kw > 0.0) {
            return Err(Error::Validation("nominal total load must be positive".into()));
        }
        self.state_for(&self.schedule)?;
        if let Some(p) = &self.planning {
            self.state_for(&p.schedule)?;
            if p.capacities_kwh.iter().any(|&c| !(c > 0.0)) {
                return Err(Error::Validation("storage capacities must be positive".into()));
            }
            let min_soc = self.assets.storage.iter().map(|b| b.min_soc).fold(0.0, f64::max);
            if p.preferred_socs.iter().any(|&s| !(s > min_soc && s <= 1.0)) {
                return Err(Error::Validation(format!("preferred SOC must lie in ({min_soc}, 1]")));
            }
            if self.assets.storage.is_empty() {
                return Err(Error::Validation("planning needs at least one battery converter".into()));
            }
        }
        Ok(())
    }

    /// Operating state described by `schedule`.
    pub fn state_for(&self, schedule: &Schedule) -> Result<SystemState> {
        let a = &self.assets;
        let lookup = |kind: &str, id: &str, known: &HashMap<&str, usize>| -> Result<usize> {
            known
                .get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("schedule references unknown {kind} {id}")))
        };
        let dg_ix: HashMap<&str, usize> = a.dg.iter().enumerate().map(|(i, u)| (u.id.as_str(), i)).collect();
        let st_ix: HashMap<&str, usize> = a.storage.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
        let ld_ix: HashMap<&str, usize> = a.loads.iter().enumerate().map(|(i, l)| (l.id.as_str(), i)).collect();

        let mut dg: Vec<ScheduledDg> = a
            .dg
            .iter()
            .map(|u| {
                let stochastic = !u.kind.is_dispatchable();
                ScheduledDg {
                    p_kw: if stochastic { u.availability_kw } else { 0.0 },
                    r_kw: 0.0,
                    committed: stochastic,
                }
            })
            .collect();
        for e in &schedule.dg {
            let i = lookup("DG unit", &e.id, &dg_ix)?;
            dg[i] = ScheduledDg {
                p_kw: e.p_kw,
                r_kw: e.r_kw,
                committed: e.committed,
            };
        }
        let mut storage_kw = vec![0.0; a.storage.len()];
        for e in &schedule.storage {
            storage_kw[lookup("battery bank", &e.id, &st_ix)?] = e.p_kw;
        }
        let load_next_kw: Vec<f64> = a.loads.iter().map(|l| l.forecast_kw).collect();
        let mut load_now_kw = load_next_kw.clone();
        for e in &schedule.loads {
            load_now_kw[lookup("load group", &e.id, &ld_ix)?] = e.now_kw;
        }
        let state = SystemState {
            hour: schedule.hour,
            load_now_kw,
            load_next_kw,
            dg,
            storage_kw,
            soc: a.storage.iter().map(|b| b.soc).collect(),
        };
        state.validate(a)?;
        Ok(state)
    }

    /// The day-ahead operating state of the scenario.
    pub fn state(&self) -> Result<SystemState> {
        self.state_for(&self.schedule)
    }

    /// Deterministic JSON form: sorted keys, shortest round-trip floats.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_json().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex(&self.digest())
    }

    pub fn from_canonical_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    /// Sum of the active-power ratings of all load groups.
    pub fn rated_load_kw(&self) -> f64 {
        self.assets.loads.iter().map(|l| l.rated_kw()).sum()
    }

    /// Load groups of one class, by position.
    pub fn loads_of(&self, class: LoadClass) -> Vec<usize> {
        self.assets
            .loads
            .iter()
            .enumerate()
            .filter(|(_, l)| l.class == class)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_parses() {
        let sc = Scenario::bundled();
        assert_eq!(sc.network.buses.len(), 21);
        assert_eq!(sc.assets.dg.len(), 12);
        assert_eq!(sc.assets.storage.len(), 4);
    }

    #[test]
    fn digest_survives_round_trip() {
        let sc = Scenario::bundled();
        let back = Scenario::from_canonical_json(&sc.canonical_json()).unwrap();
        assert_eq!(back, sc);
        assert_eq!(back.digest(), sc.digest());
        let retoml = toml::to_string(&sc).unwrap();
        assert_eq!(Scenario::parse(&retoml).unwrap().digest(), sc.digest());
    }

    #[test]
    fn dangling_bus_rejected() {
        let text = BUNDLED.replacen("bus = 4\n", "bus = 99\n", 1);
        assert_ne!(text, BUNDLED);
        assert!(matches!(Scenario::parse(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn parse_error_names_location() {
        let err = Scenario::parse("[meta]\nname = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line") || msg.contains("name"), "{msg}");
    }
}
