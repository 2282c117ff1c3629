//! Period integrals, theta functions and exact identity checks for the
//! level-0 sl_N Knizhnik-Zamolodchikov solutions on Z_N curves
//! s^N = prod (z - lambda_j).

pub mod curve;
pub mod differentials;
pub mod error;
pub mod homology;
pub mod json;
pub mod kz;
pub mod linalg;
pub mod mp;
pub mod par;
pub mod partition;
pub mod periods;
pub mod poly;
pub mod quadrature;
pub mod theta;
pub mod verify;

pub use curve::{validate_curve, CurveSpec, SheetPoint};
pub use error::{Error, Result};
pub use partition::{enumerate_partitions, OrderedPartition};
