//! Peer-to-peer heterogeneous fusion between agents with overlapping tasks.
//!
//! Agents exchange factors over the variables they have in common. With the
//! channel filter (HS-CF) each link keeps a graph of the information already
//! shared and only the difference is sent. With covariance intersection (HS-CI)
//! the raw marginal is sent and the receiver mixes it with its own marginal.

mod agent;
mod message;
mod omega;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use agent::{FusionAgent, StateSpec};
pub use message::FusionMessage;
pub use omega::optimize_omega;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionAlgorithm {
    HsCf,
    HsCi,
}

impl FusionAlgorithm {
    pub fn code(self) -> u8 {
        match self {
            FusionAlgorithm::HsCf => 0,
            FusionAlgorithm::HsCi => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(FusionAlgorithm::HsCf),
            1 => Ok(FusionAlgorithm::HsCi),
            other => Err(Error::Decode(format!("unknown fusion algorithm code {other}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FusionAlgorithm::HsCf => "hscf",
            FusionAlgorithm::HsCi => "hsci",
        }
    }
}

impl std::str::FromStr for FusionAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hscf" | "cf" => Ok(FusionAlgorithm::HsCf),
            "hsci" | "ci" => Ok(FusionAlgorithm::HsCi),
            other => Err(Error::Config(format!("unknown fusion algorithm {other:?}"))),
        }
    }
}

/// Cost minimized when choosing the covariance-intersection weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaCost {
    #[default]
    Trace,
    LogDet,
}

/// When a channel filter records an outgoing message.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelUpdate {
    /// As soon as the message is prepared, whether or not it arrives.
    #[default]
    OnSend,
    /// Only once delivery is acknowledged.
    OnAck,
}

/// Initial content of a channel filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelInit {
    Empty,
    /// The agent's prior marginal over the common variables, for priors known to
    /// both ends of the link.
    #[default]
    PriorMarginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionSettings {
    pub algo: FusionAlgorithm,
    pub conservative: bool,
    pub omega_cost: OmegaCost,
    pub channel_update: ChannelUpdate,
}

impl FusionSettings {
    pub fn new(algo: FusionAlgorithm, conservative: bool) -> Self {
        FusionSettings {
            algo,
            conservative,
            omega_cost: OmegaCost::default(),
            channel_update: ChannelUpdate::default(),
        }
    }
}
