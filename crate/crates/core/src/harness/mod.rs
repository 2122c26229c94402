//! Oracles, seeded fixtures, a fixed-step optimizer and reports used to turn
//! qualitative claims about the fusion and distillation stages into checks.

pub mod descent;
pub mod fixtures;
pub mod gradcheck;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod synth;

pub use descent::{toy_descent, Descent, DescentConfig};
pub use gradcheck::{run_gradcheck, GradTarget};
pub use oracle::{brute_force_lof, finite_difference_gradient, gradient_check, GradCheck};
pub use report::{calibration_report, CalibrationReport, ClusterStat};
pub use rng::SplitMix64;
pub use synth::{synth_block_features, SynthConfig, SynthFixture};
