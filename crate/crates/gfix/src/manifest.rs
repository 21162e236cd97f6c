//! Run-configuration manifest: which tensors to adapt, at what rank, plus
//! optional lambda/grid/seed overrides. JSON on disk.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::TensorArchive;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSelection {
    /// Tensor name in the base/target archives.
    pub name: String,
    /// Where the tensor shape splits into the 2-D weight view.
    pub split_axis: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub layers: Vec<LayerSelection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_refine_passes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<ManifestPaths>,
}

/// Optional default file locations carried with the run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Manifest {
    pub fn from_json(json: &str) -> Result<Manifest> {
        let m: Manifest = serde_json::from_str(json)?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Manifest> {
        Manifest::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        for l in &self.layers {
            if l.name.is_empty() {
                return Err(Error::InvalidConfig("layer selection with empty name".into()));
            }
            if l.rank == 0 {
                return Err(Error::InvalidConfig(format!("layer {:?} has rank 0", l.name)));
            }
            if l.split_axis == 0 {
                return Err(Error::InvalidConfig(format!(
                    "layer {:?} has split_axis 0 (must be >= 1)",
                    l.name
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if self.layers[..i].iter().any(|p| p.name == l.name) {
                return Err(Error::InvalidConfig(format!("layer {:?} selected twice", l.name)));
            }
        }
        Ok(())
    }

    /// Checks that every referenced tensor exists in `archive`.
    pub fn validate_against(&self, archive: &TensorArchive) -> Result<()> {
        self.validate()?;
        for l in &self.layers {
            archive.require(&l.name)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn round_trips_through_json() {
        let m = Manifest {
            layers: vec![LayerSelection { name: "w".into(), split_axis: 1, rank: 4 }],
            lambdas: Some(vec![0.03, 0.01]),
            seed: Some(7),
            ..Default::default()
        };
        let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.layers.len(), 1);
        assert_eq!(back.lambdas, Some(vec![0.03, 0.01]));
        assert_eq!(back.seed, Some(7));
    }

    #[test]
    fn rejects_bad_selections() {
        assert!(Manifest::from_json(r#"{"layers":[{"name":"","split_axis":1,"rank":2}]}"#).is_err());
        assert!(Manifest::from_json(r#"{"layers":[{"name":"w","split_axis":0,"rank":2}]}"#).is_err());
        assert!(Manifest::from_json(r#"{"layers":[{"name":"w","split_axis":1,"rank":0}]}"#).is_err());
        let twice = r#"{"layers":[
            {"name":"w","split_axis":1,"rank":2},
            {"name":"w","split_axis":1,"rank":3}]}"#;
        assert!(Manifest::from_json(twice).is_err());
    }

    #[test]
    fn validate_against_checks_existence() {
        let m = Manifest::from_json(r#"{"layers":[{"name":"w","split_axis":1,"rank":2}]}"#).unwrap();
        let mut archive = TensorArchive::new();
        assert!(m.validate_against(&archive).is_err());
        archive.insert(Tensor::from_f64("w", vec![4, 4], vec![0.0; 16]).unwrap()).unwrap();
        assert!(m.validate_against(&archive).is_ok());
    }
}
