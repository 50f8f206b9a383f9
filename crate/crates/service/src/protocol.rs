//! Line-delimited JSON wire messages.
//!
//! Every line is one object with a `type` field. Numbers are plain JSON
//! numbers; absent optional values are `null`.

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Session settings a client may send with `hello`. Every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireConfig {
    pub dt_tick: Option<f64>,
    pub controller: Option<String>,
    pub preset: Option<String>,
    pub kp: Option<f64>,
    pub kv: Option<f64>,
    pub ks: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub omega: Option<f64>,
    pub eps_th: Option<f64>,
    pub max_inner_iters: Option<usize>,
    pub eps_floor: Option<f64>,
    pub horizon: Option<f64>,
    pub filter_window: Option<usize>,
    pub feature_channel: Option<String>,
    pub opc_horizon: Option<usize>,
    /// Initial VP state `(x, vx, y, vy)`.
    pub x0: Option<[f64; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        #[serde(default)]
        config: Box<WireConfig>,
    },
    Hp {
        t: f64,
        x: f64,
        y: f64,
    },
    SoloUpload {
        /// `[t, x, y]` rows at a uniform period.
        samples: Vec<[f64; 3]>,
    },
    SetGains {
        kp: f64,
        kv: f64,
        ks: f64,
    },
    Bye,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        session_id: u64,
        dt_tick: f64,
    },
    Vp {
        t: f64,
        x: f64,
        y: f64,
    },
    Metrics {
        t: f64,
        rmse: Option<f64>,
        cv: Option<f64>,
        svm: Option<f64>,
        eps: Option<f64>,
        k: usize,
    },
    Fault {
        code: String,
        message: String,
        t: Option<f64>,
    },
}

impl ServerMessage {
    pub fn fault(code: &str, message: impl Into<String>, t: Option<f64>) -> Self {
        Self::Fault {
            code: code.to_string(),
            message: message.into(),
            t,
        }
    }
}

pub fn parse_client(line: &str) -> Result<ClientMessage, ServiceError> {
    serde_json::from_str(line.trim()).map_err(|e| ServiceError::Protocol(e.to_string()))
}

pub fn parse_server(line: &str) -> Result<ServerMessage, ServiceError> {
    serde_json::from_str(line.trim()).map_err(|e| ServiceError::Protocol(e.to_string()))
}

/// One line without the trailing newline. Non-finite numbers become `null`.
pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("wire messages always serialize")
}
