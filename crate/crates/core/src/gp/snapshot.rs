//! Versioned JSON dump of a model's hyperparameters and training data.
//!
//! Floats are written in shortest round-trip form, so a load reproduces
//! the parameters and inputs bit for bit. The prior mean is not stored; a
//! loaded model has a zero prior unless the caller attaches one.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{GpError, GpModel, KernelParams, TrainingSet};

pub const SNAPSHOT_FORMAT: &str = "gp-mfrl.gp-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSnapshot {
    pub format: String,
    pub version: u32,
    pub params: KernelParams,
    pub capacity: Option<usize>,
    pub data: TrainingSet,
}

impl GpSnapshot {
    pub fn of(model: &GpModel) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            version: SNAPSHOT_VERSION,
            params: model.params().clone(),
            capacity: model.capacity(),
            data: model.data().clone(),
        }
    }

    pub fn write_to(&self, w: impl Write) -> Result<(), GpError> {
        serde_json::to_writer_pretty(w, self).map_err(|e| GpError::Snapshot(e.to_string()))
    }

    pub fn read_from(r: impl Read) -> Result<Self, GpError> {
        let snap: Self = serde_json::from_reader(r).map_err(|e| GpError::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(GpError::Snapshot(format!("unexpected format tag {:?}", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(GpError::Snapshot(format!("unsupported snapshot version {}", snap.version)));
        }
        Ok(snap)
    }

    pub fn into_model(self) -> Result<GpModel, GpError> {
        GpModel::new(self.params)?
            .with_capacity(None)?
            .with_data(self.data)?
            .with_capacity(self.capacity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_exact(
            sig in 1e-3f64..1e3,
            ls in proptest::collection::vec(1e-3f64..1e3, 3),
            noise in 0.0f64..10.0,
            pts in proptest::collection::vec((proptest::collection::vec(-1e6f64..1e6, 3), -1e6f64..1e6), 1..8),
        ) {
            let params = KernelParams::new(sig, ls, noise.max(1e-6)).unwrap();
            let (inputs, outputs): (Vec<_>, Vec<_>) = pts.into_iter().unzip();
            let data = TrainingSet::new(inputs, outputs).unwrap();
            let snap = GpSnapshot {
                format: SNAPSHOT_FORMAT.into(),
                version: SNAPSHOT_VERSION,
                params,
                capacity: Some(50),
                data,
            };
            let mut buf = Vec::new();
            snap.write_to(&mut buf).unwrap();
            let back = GpSnapshot::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(back, snap);
        }
    }

    #[test]
    fn loaded_model_predicts_identically() {
        let data = TrainingSet::new(vec![vec![0.1, 0.2], vec![1.5, -0.3]], vec![1.0, -2.0]).unwrap();
        let model = GpModel::fit(KernelParams::new(1.1, vec![0.5, 2.0], 0.03).unwrap(), data).unwrap();
        let mut buf = Vec::new();
        GpSnapshot::of(&model).write_to(&mut buf).unwrap();
        let loaded = GpSnapshot::read_from(buf.as_slice()).unwrap().into_model().unwrap();
        let q = [0.7, 0.1];
        assert_eq!(model.predict(&q).unwrap(), loaded.predict(&q).unwrap());
    }

    #[test]
    fn wrong_version_is_rejected() {
        let json = r#"{"format":"gp-mfrl.gp-snapshot","version":9,"params":{"signal_std":1.0,"lengthscales":[1.0],"noise_var":0.1},"capacity":null,"data":{"inputs":[],"outputs":[]}}"#;
        assert!(GpSnapshot::read_from(json.as_bytes()).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"format":"gp-mfrl.gp-snapshot","version":1,"extra":1,"params":{"signal_std":1.0,"lengthscales":[1.0],"noise_var":0.1},"capacity":null,"data":{"inputs":[],"outputs":[]}}"#;
        assert!(GpSnapshot::read_from(json.as_bytes()).is_err());
    }
}
