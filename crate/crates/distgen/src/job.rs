use pcmg_core::assets::{AssetPortfolio, CostModel};
use pcmg_core::lsgen::{BalancingRequirement, LsContext, SystemState};
use pcmg_core::network::NetworkModel;
use pcmg_core::Scenario;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Everything a worker needs besides the requirement and index range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationJob {
    pub network: NetworkModel,
    pub assets: AssetPortfolio,
    pub costs: CostModel,
    pub state: SystemState,
}

impl GenerationJob {
    pub fn new(sc: &Scenario, state: &SystemState) -> Self {
        Self {
            network: sc.network.clone(),
            assets: sc.assets.clone(),
            costs: sc.costs,
            state: state.clone(),
        }
    }

    /// JSON with sorted keys and round-trip floats.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("job serializes");
        serde_json::to_vec(&value).expect("value serializes")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Job(e.to_string()))
    }

    pub fn context(&self, req: BalancingRequirement) -> Result<LsContext> {
        Ok(LsContext::new(
            self.network.clone(),
            self.assets.clone(),
            self.costs,
            self.state.clone(),
            req,
        )?)
    }
}

pub fn digest(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}
