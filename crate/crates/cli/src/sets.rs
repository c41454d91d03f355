use std::path::Path;

use acl_core::{AclError, Averaging, VoxelSet};
use serde::{Deserialize, Serialize};

use crate::commands::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Set file contents. `E` takes balls; `F` takes balls with an optional
/// dilation range, or a relative superlevel of `Aχ_E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum SetSpec {
    Superlevel {
        superlevel: f64,
    },
    Balls {
        balls: Vec<Ball>,
        #[serde(default, rename = "rRange")]
        r_range: Option<(f64, f64)>,
    },
}

pub fn load(path: &Path) -> Result<SetSpec, CliError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| AclError::Domain(format!("invalid set file {}: {e}", path.display())).into())
}

fn in_balls(balls: &[Ball], x: &[f64]) -> bool {
    balls.iter().any(|b| b.center.iter().zip(x).map(|(c, v)| (c - v).powi(2)).sum::<f64>() <= b.radius * b.radius)
}

fn check_dims(balls: &[Ball], d: usize) -> Result<(), CliError> {
    match balls.iter().find(|b| b.center.len() != d || b.radius <= 0.0) {
        Some(b) => Err(AclError::Domain(format!("ball {:?} does not fit dimension {d}", b.center)).into()),
        None => Ok(()),
    }
}

pub fn build_e(spec: &SetSpec, op: &Averaging) -> Result<VoxelSet, CliError> {
    match spec {
        SetSpec::Balls { balls, .. } => {
            check_dims(balls, op.grid.dim())?;
            Ok(VoxelSet::from_spatial_fn(&op.grid, |x| in_balls(balls, x)))
        }
        SetSpec::Superlevel { .. } => Err(AclError::Domain("E must be given as balls".into()).into()),
    }
}

pub fn build_f(spec: &SetSpec, op: &Averaging, e: &VoxelSet) -> Result<VoxelSet, CliError> {
    match spec {
        SetSpec::Balls { balls, r_range } => {
            check_dims(balls, op.grid.dim())?;
            let (lo, hi) = r_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
            Ok(VoxelSet::from_dilated_fn(&op.grid, |x, r| r >= lo && r <= hi && in_balls(balls, x)))
        }
        SetSpec::Superlevel { superlevel } => {
            let a = op.apply_set(e);
            let max = a.iter().cloned().fold(0.0, f64::max);
            Ok(VoxelSet::superlevel(&op.grid, &a, superlevel * max))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_shapes() {
        let b: SetSpec = serde_json::from_str(r#"{"balls":[{"center":[0,0],"radius":0.5}]}"#).unwrap();
        assert!(matches!(b, SetSpec::Balls { r_range: None, .. }));
        let s: SetSpec = serde_json::from_str(r#"{"superlevel":0.4}"#).unwrap();
        assert_eq!(s, SetSpec::Superlevel { superlevel: 0.4 });
        assert!(serde_json::from_str::<SetSpec>(r#"{"radius":1}"#).is_err());
    }
}
