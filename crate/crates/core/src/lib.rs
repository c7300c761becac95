//! Parameter-free non-redundant clustering. Several clusterings of one
//! dataset are found in mutually orthogonal subspaces, and the number of
//! subspaces, their dimensionalities, cluster counts and outliers are all
//! chosen by minimizing a description length.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod mdl;
pub mod metrics;
pub mod model;
pub mod nrkmeans;
pub mod search;
pub mod synth;

pub use dataset::{DataGeometry, DataMatrix, MaxDistMode};
pub use error::{Error, Result};
pub use mdl::{CostBreakdown, MdlConstants};
pub use metrics::{LabelMatrix, Metric};
pub use model::{NrModel, Projection, Rotation, Subspace};
