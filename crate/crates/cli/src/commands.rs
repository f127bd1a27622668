//! The four subcommands. Each writes into `config.output_dir` and finishes
//! with a `manifest.json` echoing the resolved configuration.

use std::time::Instant;

use anyhow::anyhow;
use serde::Serialize;
use sphere_pint::diagnostics::{ke_spectrum, ErrorRecord, ErrorTarget, SpectrumRow};
use sphere_pint::dynamics::{viscosity_coefficient_from_damping_time, PrognosticState, SweModel};
use sphere_pint::pint::{
    fine_serial, mgrit_run, parareal_run, speedup_report, LevelSpec, RunStatus, SweProblem,
};
use sphere_pint::stability::{region_scan, xi_tilde_l, PintQuery, StabilityQuery, StabilityScheme};
use sphere_pint::stepping::{Stepper, StepperState};
use sphere_pint::{SphereGeometry, Truncation};

use crate::config::{Algorithm, ConfigError, ExperimentConfig};
use crate::output::{f, OutDir};
use crate::RunError;

#[derive(Serialize)]
struct Manifest<'a, E: Serialize> {
    command: &'a str,
    config: &'a ExperimentConfig,
    status: RunStatus,
    outputs: &'a [String],
    #[serde(flatten)]
    extra: E,
}

fn finish<E: Serialize>(
    out: &mut OutDir,
    command: &str,
    cfg: &ExperimentConfig,
    status: RunStatus,
    extra: E,
) -> Result<(), RunError> {
    let outputs = out.written.clone();
    out.json(
        "manifest.json",
        &Manifest {
            command,
            config: cfg,
            status: status.clone(),
            outputs: &outputs,
            extra,
        },
    )?;
    match status {
        RunStatus::Completed => Ok(()),
        RunStatus::BlowUp { iteration, slice, reason } => Err(RunError::BlowUp(format!(
            "iteration {iteration}, slice {slice}: {reason}"
        ))),
    }
}

fn trunc(m: usize) -> Result<Truncation, RunError> {
    Truncation::new(m).map_err(|e| ConfigError::Invalid(e.to_string()).into())
}

fn stepper_for(spec: &LevelSpec, geometry: SphereGeometry) -> Result<Stepper, RunError> {
    let model = SweModel::with_truncation(trunc(spec.truncation)?, geometry).map_err(anyhow::Error::from)?;
    Stepper::new(model, spec.stepper).map_err(|e| ConfigError::Invalid(e.to_string()).into())
}

fn initial_state(cfg: &ExperimentConfig, m: usize) -> Result<PrognosticState, RunError> {
    let geometry = cfg.geometry();
    Ok(cfg
        .scenario()?
        .initial_state(trunc(m)?, &geometry)
        .map_err(anyhow::Error::from)?)
}

fn spectrum_rows<'a>(
    source: &'a str,
    k: Option<usize>,
    rows: Vec<SpectrumRow>,
) -> impl Iterator<Item = Vec<String>> + 'a {
    rows.into_iter().map(move |r| {
        vec![
            source.to_string(),
            k.map(|k| k.to_string()).unwrap_or_default(),
            r.n.to_string(),
            f(r.wavelength_m),
            f(r.energy),
        ]
    })
}

const SPECTRUM_HEADER: [&str; 5] = ["source", "k", "n", "wavelength_m", "energy"];

/// Step count after which `t` is reached, if it falls on a step.
fn step_index(t: f64, dt: f64, n_max: usize) -> Option<usize> {
    let n = (t / dt).round();
    ((n * dt - t).abs() <= 1e-9 * t.abs().max(dt) && n >= 0.0 && n as usize <= n_max).then_some(n as usize)
}

/// Serial integration that stops at the first non-finite state.
fn march(
    stepper: &Stepper,
    u0: PrognosticState,
    steps: usize,
    mut at_step: impl FnMut(usize, &PrognosticState),
) -> Result<(PrognosticState, RunStatus), RunError> {
    let mut s = StepperState::new(u0);
    at_step(0, &s.current);
    for i in 0..steps {
        s = match stepper.step(&s) {
            Ok(next) => next,
            Err(e) => return Ok((s.current, blow_up(i + 1, e.to_string()))),
        };
        if !s.current.is_finite() {
            return Ok((s.current, blow_up(i + 1, "non-finite state".into())));
        }
        at_step(i + 1, &s.current);
    }
    Ok((s.current, RunStatus::Completed))
}

fn blow_up(step: usize, reason: String) -> RunStatus {
    RunStatus::BlowUp {
        iteration: 0,
        slice: step,
        reason,
    }
}

fn error_rows(records: &[ErrorRecord]) -> Vec<Vec<String>> {
    records
        .iter()
        .flat_map(|r| r.rows())
        .map(|r| {
            let target = match r.target {
                ErrorTarget::Fine => "fine",
                ErrorTarget::Reference => "reference",
            };
            vec![r.k.to_string(), r.rnorm, target.to_string(), f(r.value)]
        })
        .collect()
}

/// Serial fine run plus the error-vs-Δt table.
pub fn run_serial(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let geometry = cfg.geometry();
    let mut out = OutDir::create(&cfg.output_dir)?;
    let t_final = cfg.horizon()?;
    let fine = stepper_for(&cfg.fine, geometry)?;
    let steps = cfg.steps_for(cfg.fine.dt())?;

    let mut wanted = Vec::new();
    for &t in &cfg.diagnostics.spectrum_times {
        let Some(i) = step_index(t, cfg.fine.dt(), steps) else {
            return Err(ConfigError::Invalid(format!(
                "spectrum time {t} s is not a step of the fine run (dt = {}, t_final = {t_final})",
                cfg.fine.dt()
            ))
            .into());
        };
        wanted.push(i);
    }
    let mut spectra = Vec::new();
    let radius = geometry.radius;
    let (final_state, status) = march(&fine, initial_state(cfg, cfg.fine.truncation)?, steps, |i, s| {
        if wanted.contains(&i) {
            spectra.push((i, ke_spectrum(s, radius)));
        }
    })?;
    spectra.sort_by_key(|(i, _)| *i);
    let dt = cfg.fine.dt();
    let times: Vec<String> = spectra.iter().map(|(i, _)| f(*i as f64 * dt)).collect();
    out.csv(
        "spectrum.csv",
        &["t", "n", "wavelength_m", "energy"],
        spectra.into_iter().zip(&times).flat_map(|((_, rows), t)| {
            rows.into_iter()
                .map(move |r| vec![t.clone(), r.n.to_string(), f(r.wavelength_m), f(r.energy)])
        }),
    )?;
    out.snapshot("snapshot_final.csv", &final_state)?;
    if status.is_blow_up() {
        return finish(&mut out, "run-serial", cfg, status, ());
    }

    if !cfg.serial.dt_values.is_empty() {
        let mut finals = Vec::new();
        for &dt in &cfg.serial.dt_values {
            let spec = LevelSpec {
                truncation: cfg.fine.truncation,
                stepper: sphere_pint::stepping::StepperConfig { dt, ..cfg.fine.stepper },
            };
            let s = stepper_for(&spec, geometry)?;
            let (state, st) = march(&s, initial_state(cfg, spec.truncation)?, cfg.steps_for(dt)?, |_, _| {})?;
            if st.is_blow_up() {
                out.csv("dt_errors.csv", &["dt", "rnorm", "value"], Vec::new())?;
                return finish(&mut out, "run-serial", cfg, st, ());
            }
            finals.push((dt, state));
        }
        let reference = match &cfg.reference {
            Some(spec) => {
                let s = stepper_for(spec, geometry)?;
                let (state, st) =
                    march(&s, initial_state(cfg, spec.truncation)?, cfg.steps_for(spec.dt())?, |_, _| {})?;
                if st.is_blow_up() {
                    return finish(&mut out, "run-serial", cfg, st, ());
                }
                state
            }
            None => {
                let smallest = finals
                    .iter()
                    .min_by(|a, b| a.0.total_cmp(&b.0))
                    .map(|(_, s)| s.clone())
                    .ok_or_else(|| anyhow!("no dt values"))?;
                smallest
            }
        };
        let transform = fine.model().transform();
        let rnorms = usable_rnorms(cfg, reference.truncation().max_wavenumber());
        let mut rows = Vec::new();
        for (dt, state) in &finals {
            let rec = ErrorRecord::phi_errors(0, ErrorTarget::Reference, state, &reference, &rnorms, transform)
                .map_err(anyhow::Error::from)?;
            for r in rec.rows() {
                rows.push(vec![f(*dt), r.rnorm, f(r.value)]);
            }
        }
        out.csv("dt_errors.csv", &["dt", "rnorm", "value"], rows)?;
    }
    finish(&mut out, "run-serial", cfg, status, ())
}

fn usable_rnorms(cfg: &ExperimentConfig, cap: usize) -> Vec<usize> {
    cfg.diagnostics.rnorms.iter().copied().filter(|&r| r <= cap).collect()
}

#[derive(Serialize)]
struct PintExtra {
    iterations: usize,
    exactness_bound: usize,
}

/// PinT run with errors against the fine serial solution and, when
/// configured, a separate reference solution.
pub fn run_pint(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let geometry = cfg.geometry();
    let pc = cfg.pint_config()?;
    let algorithm = cfg.pint.as_ref().map(|p| p.algorithm).unwrap_or_default();
    let problem = SweProblem::new(&pc, geometry)?;
    let params = pc.params();
    let mut out = OutDir::create(&cfg.output_dir)?;
    let u0 = initial_state(cfg, cfg.fine.truncation)?;

    let clock = Instant::now();
    let fine = fine_serial(&problem, &params, &u0)?;
    let t_ref = clock.elapsed();
    let fine_final = fine.last().ok_or_else(|| anyhow!("empty fine trajectory"))?.clone();
    if !fine_final.is_finite() {
        return Err(RunError::BlowUp("the fine serial solution is not finite".into()));
    }

    let reference = match &cfg.reference {
        Some(spec) => {
            let s = stepper_for(spec, geometry)?;
            let (state, st) = march(&s, initial_state(cfg, spec.truncation)?, cfg.steps_for(spec.dt())?, |_, _| {})?;
            if st.is_blow_up() {
                return Err(RunError::BlowUp("the reference solution is not finite".into()));
            }
            Some(state)
        }
        None => None,
    };

    let trace = match algorithm {
        Algorithm::Mgrit => mgrit_run(&problem, &params, &u0, cfg.workers)?,
        Algorithm::Parareal => parareal_run(&problem, &params, &u0, cfg.workers)?,
    };

    let rnorms = &cfg.diagnostics.rnorms;
    let fine_err = problem
        .final_time_errors(&trace.iterates, ErrorTarget::Fine, &fine_final, rnorms)
        .map_err(anyhow::Error::from)?;
    let ref_err = match &reference {
        Some(r) => {
            let rn = usable_rnorms(cfg, r.truncation().max_wavenumber());
            problem
                .final_time_errors(&trace.iterates, ErrorTarget::Reference, r, &rn)
                .map_err(anyhow::Error::from)?
        }
        None => Vec::new(),
    };
    let mut records = Vec::new();
    for k in 0..fine_err.len() {
        records.push(fine_err[k].clone());
        if let Some(r) = ref_err.get(k) {
            records.push(r.clone());
        }
    }
    out.csv("errors.csv", &["k", "rnorm", "target", "value"], error_rows(&records))?;

    let radius = geometry.radius;
    let mut spectra: Vec<Vec<String>> = Vec::new();
    spectra.extend(spectrum_rows("fine", None, ke_spectrum(&fine_final, radius)));
    if let Some(r) = &reference {
        spectra.extend(spectrum_rows("reference", None, ke_spectrum(r, radius)));
    }
    let mut ks = cfg.diagnostics.spectrum_iterations.clone();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        if let Some(last) = trace.iterates.get(k).and_then(|it| it.last()) {
            spectra.extend(spectrum_rows("pint", Some(k), ke_spectrum(last, radius)));
        }
    }
    out.csv("spectrum.csv", &SPECTRUM_HEADER, spectra)?;
    if let Some(last) = trace.last().and_then(|it| it.last()) {
        out.snapshot("snapshot_final.csv", last)?;
    }

    // Wall-clock columns; the only output that varies between runs.
    let speed = speedup_report(&trace, t_ref, cfg.workers);
    out.csv(
        "speedup.csv",
        &["iteration", "workers", "t_pint_s", "t_ref_s", "speedup"],
        speed.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                r.workers.to_string(),
                f(r.t_pint),
                f(r.t_ref),
                f(r.speedup),
            ]
        }),
    )?;
    let extra = PintExtra {
        iterations: trace.completed_iterations(),
        exactness_bound: params.exactness_bound(),
    };
    finish(&mut out, "run-pint", cfg, trace.status.clone(), extra)
}

#[derive(Serialize)]
struct RegionEntry {
    file: String,
    kind: &'static str,
    xi_l_multiple: f64,
    query: StabilityQuery,
    stable_count: usize,
    total: usize,
}

#[derive(Serialize)]
struct StabilityExtra {
    xi_tilde_l_im: f64,
    regions: Vec<RegionEntry>,
}

fn scheme_name(s: StabilityScheme) -> &'static str {
    match s {
        StabilityScheme::Imex => "imex",
        StabilityScheme::Settls => "settls",
    }
}

/// Region rasters for the serial schemes, Parareal `k` sweeps and MGRIT
/// `nrelax` sweeps, one CSV each.
pub fn stability(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let s = &cfg.stability;
    let mut out = OutDir::create(&cfg.output_dir)?;
    let xt = xi_tilde_l(s.phibar, s.radius);
    let mut queries: Vec<(String, &'static str, f64, StabilityQuery)> = Vec::new();
    for (xi_idx, &mult) in s.xi_l_multiples.iter().enumerate() {
        let xi_l = xt * mult;
        let base = |scheme| {
            let mut q = StabilityQuery::serial(xi_l, scheme).with_grid(s.grid);
            q.imex_variant = s.imex_variant;
            q
        };
        for scheme in [StabilityScheme::Imex, StabilityScheme::Settls] {
            queries.push((
                format!("region_serial_{}_xl{xi_idx}.csv", scheme_name(scheme)),
                "serial",
                mult,
                base(scheme),
            ));
        }
        for &coarse in &s.coarse_schemes {
            for &k in &s.parareal_iterations {
                let p = PintQuery {
                    n: s.n,
                    k,
                    nf: s.cfactor,
                    nc: 1,
                    nrelax: 0,
                    fine: StabilityScheme::Imex,
                    coarse,
                };
                queries.push((
                    format!("region_parareal_{}_k{k}_xl{xi_idx}.csv", scheme_name(coarse)),
                    "parareal",
                    mult,
                    base(StabilityScheme::Imex).with_pint(p),
                ));
            }
            for &nr in &s.mgrit_nrelax {
                let p = PintQuery {
                    n: s.n,
                    k: s.mgrit_iteration,
                    nf: s.cfactor,
                    nc: 1,
                    nrelax: nr,
                    fine: StabilityScheme::Imex,
                    coarse,
                };
                queries.push((
                    format!("region_mgrit_{}_nr{nr}_xl{xi_idx}.csv", scheme_name(coarse)),
                    "mgrit",
                    mult,
                    base(StabilityScheme::Imex).with_pint(p),
                ));
            }
        }
    }
    for (_, _, _, q) in &queries {
        q.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    }

    let mut regions = Vec::new();
    for (file, kind, mult, q) in queries {
        let raster = region_scan(&q).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        out.csv(
            &file,
            &["re", "im", "stable"],
            raster
                .points()
                .map(|(re, im, st)| vec![f(re), f(im), u8::from(st).to_string()]),
        )?;
        regions.push(RegionEntry {
            stable_count: raster.stable_count(),
            total: raster.mask.len(),
            file,
            kind,
            xi_l_multiple: mult,
            query: q,
        });
    }
    let extra = StabilityExtra {
        xi_tilde_l_im: xt.im,
        regions,
    };
    out.json("regions.json", &extra)?;
    finish(&mut out, "stability", cfg, RunStatus::Completed, extra)
}

/// `ν(τ; M, q)` and `b̂(n; Δt, q, ν)` tables.
pub fn viscosity_table(cfg: &ExperimentConfig) -> Result<(), RunError> {
    let v = &cfg.viscosity_table;
    let radius = cfg.geometry().radius;
    let mut out = OutDir::create(&cfg.output_dir)?;
    let mut coeffs = Vec::new();
    for &m in &v.truncations {
        for &q in &v.orders {
            for &tau in &v.damping_times {
                let nu = viscosity_coefficient_from_damping_time(m, q, tau, radius)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                coeffs.push(vec![m.to_string(), q.to_string(), f(tau), f(nu)]);
            }
        }
    }
    out.csv("viscosity_coefficients.csv", &["truncation", "order", "tau_s", "coeff"], coeffs)?;

    let mut damping = Vec::new();
    for spec in &v.damping_specs {
        spec.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for n in 0..=v.damping_truncation {
            damping.push(vec![
                spec.order.to_string(),
                f(spec.coeff),
                f(v.damping_dt),
                n.to_string(),
                f(spec.damping_factor(n, v.damping_dt, radius)),
            ]);
        }
    }
    out.csv("damping_factors.csv", &["order", "coeff", "dt", "n", "factor"], damping)?;
    finish(&mut out, "viscosity-table", cfg, RunStatus::Completed, ())
}
