//! Interactive instance navigation under ambiguous category queries.
//!
//! An agent explores a grid world, gathers every instance of the queried
//! category into a candidate pool, and narrows the pool down with yes/no
//! questions chosen by recursive comparative judgment.

pub mod baselines;
pub mod explore;
pub mod harness;
pub mod judge;
pub mod oracle;
pub mod pool;
pub mod world;

use serde::{Deserialize, Serialize};

/// Every module's knobs; the JSON config file mirrors this layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub world: world::WorldConfig,
    pub explore: explore::ExploreConfig,
    pub pool: pool::PoolConfig,
    pub judge: judge::JudgeConfig,
    pub oracle: oracle::OracleConfig,
    pub baselines: baselines::BaselineConfig,
    pub harness: harness::HarnessConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
