//! Exact matrix-level simulation of the block-encoding pipeline.
//!
//! Every encoding carries the matrix it encodes, its subnormalization, an
//! error bound and a tally of oracle calls. Nothing here samples a quantum
//! state except the optional shot-noise mode of the Hadamard test.

pub mod chebyshev;
pub mod encoding;
pub mod geodesic;
pub mod kernel;
pub mod local;
pub mod pipeline;
pub mod power;
pub mod sums;
pub mod verify;

pub use chebyshev::{ChebSeries, ChebyshevApprox};
pub use encoding::{BlockEncoding, ColumnEncoding, CostCounter};
pub use geodesic::{DifferenceScope, GeodesicDiag, GeodesicDiagAll, InverseDistance};
pub use kernel::{ChainLink, KernelGram};
pub use local::{CenteredGram, LocalDimReadout, NeighborReadout};
pub use power::{power_method_matrix, power_method_pca, Eigenpair, PowerIteration, PowerOptions, PowerResult};
pub use sums::{FitSums, Sampling};
pub use pipeline::{qsim_estimate, run_pipeline, PipelineTrace, PointTrace};
pub use verify::{qverify, VerifyReport};
