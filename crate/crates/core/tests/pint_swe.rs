use sphere_pint::dynamics::{PrognosticState, ViscositySpec};
use sphere_pint::pint::{
    fine_serial, mgrit_run, parareal_run, CycleKind, LevelSpec, PintConfig, PintParams, PintProblem, RunStatus,
    SweProblem,
};
use sphere_pint::scenarios::gaussian_bumps;
use sphere_pint::stepping::{SettlsMode, StepperConfig};
use sphere_pint::{SphereGeometry, Truncation};

fn config(m0: usize, m1: usize, nrelax: usize, coarse: StepperConfig) -> PintConfig {
    let dt0 = 900.0;
    let n0 = 16;
    PintConfig {
        nlevels: 2,
        cfactor: 2,
        nrelax,
        levels: vec![
            LevelSpec {
                truncation: m0,
                stepper: StepperConfig::imex(dt0),
            },
            LevelSpec {
                truncation: m1,
                stepper: coarse,
            },
        ],
        t_final: n0 as f64 * dt0,
        n0,
        chunk_size: None,
        max_iters: 8,
        cycle: CycleKind::FThenV,
    }
}

fn bumps(m: usize) -> PrognosticState {
    gaussian_bumps(Truncation::new(m).unwrap(), &SphereGeometry::earth()).unwrap()
}

fn rel(a: &PrognosticState, b: &PrognosticState) -> f64 {
    a.sub(b).max_abs() / b.max_abs()
}

fn max_rel(a: &[PrognosticState], b: &[PrognosticState]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel(x, y)).fold(0.0, f64::max)
}

fn run_exactness(coarse: StepperConfig) {
    let cfg = config(16, 8, 0, coarse);
    let problem = SweProblem::new(&cfg, SphereGeometry::earth()).unwrap();
    let params = cfg.params();
    let u0 = bumps(16);
    let trace = parareal_run(&problem, &params, &u0, 2).unwrap();
    assert_eq!(trace.status, RunStatus::Completed);
    let fine = fine_serial(&problem, &params, &u0).unwrap();
    let errs: Vec<f64> = trace.iterates.iter().map(|it| max_rel(it, &fine)).collect();
    assert!(errs[8] <= 1e-10, "{errs:?}");
    assert!(errs[0] > 1e-6, "{errs:?}");
}

#[test]
fn parareal_reaches_fine_solution_after_n_iterations_imex_coarse() {
    run_exactness(StepperConfig::imex(1800.0).with_viscosity(ViscositySpec::new(2, 1e5).unwrap()));
}

#[test]
fn parareal_reaches_fine_solution_after_n_iterations_settls_coarse() {
    run_exactness(StepperConfig::settls(1800.0, SettlsMode::TwoStep));
}

#[test]
fn mgrit_two_level_matches_parareal_with_spatial_coarsening() {
    let cfg = config(16, 8, 0, StepperConfig::imex(1800.0));
    let problem = SweProblem::new(&cfg, SphereGeometry::earth()).unwrap();
    let params = PintParams {
        max_iters: 4,
        ..cfg.params()
    };
    let u0 = bumps(16);
    let a = parareal_run(&problem, &params, &u0, 2).unwrap();
    let b = mgrit_run(&problem, &params, &u0, 2).unwrap();
    for (x, y) in a.iterates.iter().zip(&b.iterates) {
        assert!(max_rel(x, y) <= 1e-12);
    }
}

#[test]
fn mgrit_relaxation_bound_on_swe() {
    let cfg = config(16, 16, 1, StepperConfig::imex(1800.0));
    let problem = SweProblem::new(&cfg, SphereGeometry::earth()).unwrap();
    let params = PintParams {
        max_iters: 4,
        ..cfg.params()
    };
    let u0 = bumps(16);
    let trace = mgrit_run(&problem, &params, &u0, 2).unwrap();
    let fine = fine_serial(&problem, &params, &u0).unwrap();
    assert_eq!(params.exactness_bound(), 4);
    assert!(max_rel(&trace.iterates[4], &fine) <= 1e-10);
    assert!(max_rel(&trace.iterates[3], &fine) > 1e-10);
}

#[test]
fn three_level_hierarchy_reaches_fine_solution() {
    let dt0 = 900.0;
    let cfg = PintConfig {
        nlevels: 3,
        cfactor: 2,
        nrelax: 1,
        levels: vec![
            LevelSpec {
                truncation: 16,
                stepper: StepperConfig::imex(dt0),
            },
            LevelSpec {
                truncation: 12,
                stepper: StepperConfig::imex(2.0 * dt0),
            },
            LevelSpec {
                truncation: 12,
                stepper: StepperConfig::settls(4.0 * dt0, SettlsMode::TwoStep),
            },
        ],
        t_final: 16.0 * dt0,
        n0: 16,
        chunk_size: Some(4),
        max_iters: 4,
        cycle: CycleKind::FThenV,
    };
    let problem = SweProblem::new(&cfg, SphereGeometry::earth()).unwrap();
    let params = cfg.params();
    let u0 = bumps(16);
    let trace = mgrit_run(&problem, &params, &u0, 2).unwrap();
    let fine = fine_serial(&problem, &params, &u0).unwrap();
    let errs: Vec<f64> = trace.iterates.iter().map(|it| max_rel(it, &fine)).collect();
    assert_eq!(params.exactness_bound(), 4);
    assert!(errs[4] <= 1e-10, "{errs:?}");
    assert!(errs[0] > 1e-6, "{errs:?}");
}

#[test]
fn swe_trace_independent_of_worker_count() {
    let cfg = config(16, 8, 1, StepperConfig::settls(1800.0, SettlsMode::TwoStep));
    let problem = SweProblem::new(&cfg, SphereGeometry::earth()).unwrap();
    let params = PintParams {
        max_iters: 2,
        chunk_size: 3,
        ..cfg.params()
    };
    let u0 = bumps(16);
    let a = mgrit_run(&problem, &params, &u0, 1).unwrap();
    let b = mgrit_run(&problem, &params, &u0, 4).unwrap();
    assert_eq!(a.iterates, b.iterates);
    assert_eq!(problem.num_levels(), 2);
}
