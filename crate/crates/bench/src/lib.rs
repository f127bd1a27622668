//! Fixtures shared by the criterion benches in `benches/`.

use std::sync::Arc;

use sphere_pint::dynamics::{PrognosticState, SweModel};
use sphere_pint::scenarios::gaussian_bumps;
use sphere_pint::stepping::{Stepper, StepperConfig};
use sphere_pint::{SphereGeometry, SphereTransform};

pub fn transform(m: usize) -> Arc<SphereTransform> {
    Arc::new(SphereTransform::for_wavenumber(m, SphereGeometry::earth()).expect("valid truncation"))
}

pub fn bumps(m: usize) -> PrognosticState {
    let tr = transform(m);
    gaussian_bumps(tr.truncation(), tr.geometry()).expect("bumps initial state")
}

pub fn stepper(m: usize, config: StepperConfig) -> Stepper {
    Stepper::new(SweModel::new(transform(m)), config).expect("valid stepper")
}
