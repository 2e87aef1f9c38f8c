//! Bootstrap file for `pams init`.
//!
//! ```toml
//! genesis_time = 1700000000   # seconds; defaults to now
//! validators = ["v1", "v2", "v3"]
//!
//! [[users]]
//! id = "admin"
//! display_name = "Records Office"
//! roles = ["administrator"]
//! ```

use serde::Deserialize;

use pams_core::ledger::make_genesis;
use pams_core::{Block, Payload, Role};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapUser {
    pub id: String,
    #[serde(default)]
    pub display_name: Option<String>,
    pub roles: Vec<Role>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bootstrap {
    #[serde(default)]
    pub genesis_time: Option<u64>,
    pub validators: Vec<String>,
    #[serde(default)]
    pub users: Vec<BootstrapUser>,
}

impl Bootstrap {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn payloads(&self) -> Vec<Payload> {
        let users = self.users.iter().map(|u| Payload::AddUser {
            user_id: u.id.clone(),
            display_name: u.display_name.clone().unwrap_or_else(|| u.id.clone()),
            roles: u.roles.iter().copied().collect(),
        });
        let validators = self.validators.iter().map(|v| Payload::AddValidator { validator_id: v.clone() });
        users.chain(validators).collect()
    }

    pub fn genesis(&self, now_secs: u64) -> Result<Block, CliError> {
        make_genesis(&self.payloads(), self.genesis_time.unwrap_or(now_secs))
            .map_err(|e| CliError::invalid("InvalidBootstrap", e.to_string()))
    }
}
