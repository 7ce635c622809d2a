//! From-scratch classifiers: logistic regression, a feedforward network and
//! two-layer many-to-one GRU/LSTM networks.

pub mod cells;
pub mod gradcheck;
pub mod logreg;
pub mod network;
pub mod optim;
pub mod persist;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cells::{Activation, Dense, GruCell, LstmCell};
pub use gradcheck::{gradient_check, gradient_check_corrupted, GradCheckReport, ToyConfig};
pub use logreg::{LogRegFit, LogRegParams};
pub use network::{Network, NetworkConfig};
pub use optim::RmsProp;
pub use persist::{ModelParams, TrainRecord, TrainedModel};
pub use train::{train_network, EpochRecord, TrainConfig, TrainMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "logreg")]
    LogReg,
    Dnn,
    Gru,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::LogReg, ModelKind::Dnn, ModelKind::Gru, ModelKind::Lstm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Dnn => "dnn",
            ModelKind::Gru => "gru",
            ModelKind::Lstm => "lstm",
        }
    }

    pub fn is_network(self) -> bool {
        self != ModelKind::LogReg
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown model kind `{s}`")))
    }
}

/// Named views over every trainable array, in a fixed order.
pub trait ParamBlocks<T> {
    fn blocks(&self) -> Vec<(String, &[T])>;
    fn blocks_mut(&mut self) -> Vec<(String, &mut [T])>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }
}

/// Serde adapters writing arrays as nested JSON lists.
pub(crate) mod nested {
    pub mod matrix {
        use ndarray::Array2;
        use serde::de::Error as _;
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        use crate::scalar::Real;

        pub fn serialize<T: Real, S: Serializer>(m: &Array2<T>, s: S) -> Result<S::Ok, S::Error> {
            let rows: Vec<Vec<T>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
            rows.serialize(s)
        }

        pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Array2<T>, D::Error> {
            let rows: Vec<Vec<T>> = Deserialize::deserialize(d)?;
            let n = rows.len();
            let cols = rows.first().map_or(0, Vec::len);
            if rows.iter().any(|r| r.len() != cols) {
                return Err(D::Error::custom("ragged matrix"));
            }
            let flat: Vec<T> = rows.into_iter().flatten().collect();
            Array2::from_shape_vec((n, cols), flat).map_err(D::Error::custom)
        }
    }

    pub mod vector {
        use ndarray::Array1;
        use serde::{Deserialize, Deserializer, Serializer};

        use crate::scalar::Real;

        pub fn serialize<T: Real, S: Serializer>(v: &Array1<T>, s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter())
        }

        pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> Result<Array1<T>, D::Error> {
            let v: Vec<T> = Deserialize::deserialize(d)?;
            Ok(Array1::from_vec(v))
        }
    }
}
