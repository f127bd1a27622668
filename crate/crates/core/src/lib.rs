pub mod diagnostics;
pub mod dynamics;
pub mod harmonics;
pub mod pint;
pub mod scenarios;
pub mod stability;
pub mod stepping;

pub use harmonics::{GridField, HarmonicsError, SpectralField, SphereGeometry, SphereTransform, Truncation};
pub use num_complex::Complex64;
pub use dynamics::{PrognosticState, SweModel, ViscositySpec};
pub use pint::{IterationTrace, LevelSpec, PintConfig, PintError, PintParams, RunStatus, SweProblem};
pub use stepping::{Scheme, SettlsMode, Stepper, StepperConfig, StepperState};
