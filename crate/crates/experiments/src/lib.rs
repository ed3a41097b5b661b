//! Campaign runner for the FASA toolkit: JSON campaign documents, a
//! deterministic parallel trial runner, CSV/JSON artifacts and the analytic
//! self-check behind `fasa-sim validate`.

pub mod campaign;
pub mod config;
pub mod output;
pub mod validate;

pub use campaign::{run_campaign, CampaignOutput, ResultRow};
pub use config::{parse_campaign, Campaign, CampaignKind, ConfigError};
pub use output::write_outputs;
