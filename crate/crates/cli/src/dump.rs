//! JSON state dumps: a layout header and row-major `[re, im]` entries.

use openmaps::linalg::{c, CMatrix};
use openmaps::register::{DensityOperator, RegisterError, RegisterLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDump {
    pub dims: Vec<usize>,
    pub ancilla: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    pub entries: Vec<[f64; 2]>,
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("malformed state dump: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Register(#[from] RegisterError),
    #[error("dump holds {got} entries, layout needs {want}")]
    EntryCount { got: usize, want: usize },
}

impl StateDump {
    pub fn from_state(rho: &DensityOperator) -> Self {
        let m = rho.matrix();
        let d = m.nrows();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        let layout = rho.layout();
        Self { dims: layout.dims().to_vec(), ancilla: layout.ancilla(), step: None, token: None, entries }
    }

    /// Rebuilds the state; validates trace, hermiticity and positivity.
    pub fn to_state(&self) -> Result<DensityOperator, DumpError> {
        let layout = RegisterLayout::new(self.dims.clone(), self.ancilla)?;
        let d = layout.dim();
        if self.entries.len() != d * d {
            return Err(DumpError::EntryCount { got: self.entries.len(), want: d * d });
        }
        let m = CMatrix::from_fn(d, d, |i, j| {
            let [re, im] = self.entries[i * d + j];
            c(re, im)
        });
        Ok(DensityOperator::new(layout, m)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DumpError> {
        Ok(serde_json::from_str(text)?)
    }
}
