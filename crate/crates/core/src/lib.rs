//! Restricted weak-type machinery for averages over dilated polynomial curves.

pub mod curves;
pub mod decomposition;
pub mod error;
pub mod extremal;
pub mod jacobian;
pub mod linalg;
pub mod operator;
pub mod poly;
pub mod quad;
pub mod refinement;
pub mod seed;

pub use curves::{CurveSpec, PolyCurve, WeightedMeasure};
pub use error::{AclError, Result};
pub use operator::{Averaging, BilinearStats, Grid, VoxelSet};
pub use poly::{QPoly, Rat};
pub use refinement::chart::{CaseTag, ChartLayout, Color, PreColor};
