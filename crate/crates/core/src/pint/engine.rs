use std::time::Instant;

use rayon::prelude::*;

use super::{
    settls_boundary_policy, IterationTrace, PintError, PintParams, PintProblem, PintState, RunStatus, BLOWUP_FACTOR,
};
use crate::stepping::{SettlsMode, StepError};

/// A failed step, tagged with the level-0 slice it happened in.
struct Failure {
    slice: usize,
    error: StepError,
}

type Res<T> = Result<T, Failure>;

fn at(slice: usize) -> impl Fn(StepError) -> Failure {
    move |error| Failure { slice, error }
}

/// Runs `f(n)` for `n in 0..count` on the current pool. Results come back in
/// index order and the lowest failing index wins, so the outcome does not
/// depend on scheduling.
fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> Res<T> + Sync + Send) -> Res<Vec<T>> {
    let out: Vec<Res<T>> = (0..count).into_par_iter().map(f).collect();
    out.into_iter().collect()
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, PintError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PintError::Pool(e.to_string()))
}

/// Values at every point of one level plus its FAS forcing `g`.
struct Level<S> {
    pts: Vec<S>,
    g: Vec<Option<S>>,
}

struct Ctx<'a, P: PintProblem> {
    problem: &'a P,
    params: &'a PintParams,
}

impl<P: PintProblem> Ctx<'_, P> {
    fn m(&self) -> usize {
        self.params.cfactor
    }

    fn coarsest(&self) -> usize {
        self.params.nlevels - 1
    }

    /// Level-0 slice containing step `i` of `level`.
    fn slice_of(&self, level: usize, i: usize) -> usize {
        if level == 0 {
            i / self.m()
        } else {
            i * self.m().pow(level as u32 - 1)
        }
    }

    fn policy(&self, level: usize) -> Vec<SettlsMode> {
        settls_boundary_policy(
            level,
            self.params.nlevels,
            self.m(),
            self.params.steps(level),
            self.params.chunk_size,
        )
    }

    /// Step `i` on `level` from `u`, with `prev` used only where the policy
    /// allows it.
    fn step_at(
        &self,
        level: usize,
        policy: &[SettlsMode],
        i: usize,
        u: &P::State,
        prev: Option<&P::State>,
    ) -> Res<P::State> {
        let prev = if self.problem.uses_history(level) && policy[i] == SettlsMode::TwoStep {
            prev
        } else {
            None
        };
        self.problem
            .step(level, u, prev)
            .map_err(at(self.slice_of(level, i)))
    }

    /// `cfactor` steps of a non-coarsest level from C-point `n`, adding the
    /// forcing after each step.
    fn slice_prop(&self, level: usize, g: &[Option<P::State>], n: usize, x: &P::State) -> Res<P::State> {
        let mut x = x.clone();
        for j in 0..self.m() {
            let i = n * self.m() + j;
            x = self
                .problem
                .step(level, &x, None)
                .map_err(at(self.slice_of(level, i)))?;
            if let Some(gi) = &g[i + 1] {
                x = x.plus(gi);
            }
        }
        Ok(x)
    }

    fn serial_solve(&self, level: usize, data: &mut Level<P::State>) -> Res<()> {
        let policy = self.policy(level);
        for i in 0..data.pts.len() - 1 {
            let prev = if i > 0 { Some(&data.pts[i - 1]) } else { None };
            let mut next = self.step_at(level, &policy, i, &data.pts[i], prev)?;
            if let Some(gi) = &data.g[i + 1] {
                next = next.plus(gi);
            }
            data.pts[i + 1] = next;
        }
        Ok(())
    }

    fn relax(&self, level: usize, c: &mut [P::State], g: &[Option<P::State>]) -> Res<Vec<P::State>> {
        let slices = c.len() - 1;
        for _ in 0..self.params.nrelax {
            let next = par_map(slices, |n| self.slice_prop(level, g, n, &c[n]))?;
            for (n, v) in next.into_iter().enumerate() {
                c[n + 1] = v;
            }
        }
        par_map(slices, |n| self.slice_prop(level, g, n, &c[n]))
    }

    /// One cycle on `level`, updating its C-point values in place.
    fn cycle(&self, level: usize, data: &mut Level<P::State>, f_cycle: bool) -> Res<()> {
        if level == self.coarsest() {
            return self.serial_solve(level, data);
        }
        let m = self.m();
        let slices = (data.pts.len() - 1) / m;
        let mut c: Vec<P::State> = (0..=slices).map(|n| data.pts[n * m].clone()).collect();
        let w = self.relax(level, &mut c, &data.g)?;

        let coarse = level + 1;
        let coarse_policy = self.policy(coarse);
        let rc: Vec<P::State> = c.iter().map(|u| self.problem.restrict(level, u)).collect();
        let rw: Vec<P::State> = w.iter().map(|u| self.problem.restrict(level, u)).collect();
        let tau = par_map(slices, |n| {
            let prev = if n > 0 { Some(&rc[n - 1]) } else { None };
            let phi = self.step_at(coarse, &coarse_policy, n, &rc[n], prev)?;
            Ok(rw[n].minus(&phi))
        })?;

        let mut pts = Vec::with_capacity(slices + 1);
        pts.push(rc[0].clone());
        pts.extend(rw.iter().cloned());
        let mut g = Vec::with_capacity(slices + 1);
        g.push(None);
        g.extend(tau.into_iter().map(Some));
        let mut coarse_data = Level { pts, g };

        if coarse == self.coarsest() {
            self.serial_solve(coarse, &mut coarse_data)?;
        } else if f_cycle {
            self.cycle(coarse, &mut coarse_data, true)?;
            self.cycle(coarse, &mut coarse_data, false)?;
        } else {
            self.cycle(coarse, &mut coarse_data, false)?;
        }

        let same = self.problem.same_space(level);
        for n in 0..slices {
            let v = &coarse_data.pts[n + 1];
            data.pts[(n + 1) * m] = if same {
                v.clone()
            } else {
                w[n].plus(&self.problem.prolong(level, &v.minus(&rw[n])))
            };
        }
        Ok(())
    }

    /// Coarse serial sweep on level 1, prolonged to level-0 C-points.
    fn initial_guess(&self, u0: &P::State) -> Res<Vec<P::State>> {
        let slices = self.params.slices();
        let mut data = Level {
            pts: vec![self.problem.restrict(0, u0); slices + 1],
            g: vec![None; slices + 1],
        };
        self.serial_solve(1, &mut data)?;
        let same = self.problem.same_space(0);
        let mut out = Vec::with_capacity(slices + 1);
        out.push(u0.clone());
        for v in &data.pts[1..] {
            out.push(if same { v.clone() } else { self.problem.prolong(0, v) });
        }
        Ok(out)
    }

    fn iterate(&self, c: &[P::State]) -> Res<Vec<P::State>> {
        let m = self.m();
        let slices = c.len() - 1;
        let mut pts = Vec::with_capacity(slices * m + 1);
        for v in &c[..slices] {
            pts.extend(std::iter::repeat(v.clone()).take(m));
        }
        pts.push(c[slices].clone());
        let mut data = Level {
            g: vec![None; pts.len()],
            pts,
        };
        let f_cycle = self.params.cycle == super::CycleKind::FThenV;
        self.cycle(0, &mut data, f_cycle)?;
        Ok((0..=slices).map(|n| data.pts[n * m].clone()).collect())
    }
}

fn check_params<P: PintProblem>(problem: &P, params: &PintParams) -> Result<(), PintError> {
    params.validate()?;
    if problem.num_levels() < params.nlevels {
        return Err(PintError::InvalidConfig(format!(
            "problem has {} levels, configuration asks for {}",
            problem.num_levels(),
            params.nlevels
        )));
    }
    Ok(())
}

/// First slice whose value is non-finite or beyond [`BLOWUP_FACTOR`] times
/// the initial size.
fn blow_up<S: PintState>(c: &[S], scale: f64) -> Option<(usize, String)> {
    let limit = BLOWUP_FACTOR * scale.max(f64::MIN_POSITIVE);
    c.iter().enumerate().find_map(|(n, s)| {
        if !s.is_finite() {
            Some((n, "non-finite value".to_string()))
        } else if s.max_abs() > limit {
            Some((n, format!("magnitude {:e} exceeds {:e}", s.max_abs(), limit)))
        } else {
            None
        }
    })
}

/// Produces iterate 0 with `next(0, None)` and then `max_iters` more from
/// the previous iterate, recording wall time and stopping at the first
/// blow-up.
fn run_loop<S: PintState>(
    params: &PintParams,
    scale: f64,
    mut next: impl FnMut(Option<&[S]>) -> Res<Vec<S>>,
) -> IterationTrace<S> {
    let mut trace = IterationTrace {
        iterates: Vec::new(),
        wall: Vec::new(),
        status: RunStatus::Completed,
    };
    for k in 0..=params.max_iters {
        let t = Instant::now();
        let r = next(trace.iterates.last().map(Vec::as_slice));
        let failure = match r {
            Err(f) => Some((f.slice, f.error.to_string())),
            Ok(c) => match blow_up(&c, scale) {
                Some(b) => Some(b),
                None => {
                    trace.wall.push(t.elapsed());
                    trace.iterates.push(c);
                    None
                }
            },
        };
        if let Some((slice, reason)) = failure {
            trace.status = RunStatus::BlowUp {
                iteration: k,
                slice,
                reason,
            };
            break;
        }
    }
    trace
}

/// MGRIT with F(CF)^nrelax relaxation and FAS coarse-grid correction.
///
/// Each iteration relaxes on level 0, builds the coarse problem from the
/// restricted relaxed values and the τ-correction, solves it recursively
/// (serially on the coarsest level) and corrects the C-points relative to the
/// relaxed values. With two levels and `nrelax = 0` this is Parareal.
pub fn mgrit_run<P: PintProblem>(
    problem: &P,
    params: &PintParams,
    u0: &P::State,
    workers: usize,
) -> Result<IterationTrace<P::State>, PintError> {
    check_params(problem, params)?;
    let pool = build_pool(workers)?;
    let ctx = Ctx { problem, params };
    Ok(pool.install(|| {
        run_loop(params, u0.max_abs(), |prev| match prev {
            None => ctx.initial_guess(u0),
            Some(c) => ctx.iterate(c),
        })
    }))
}

/// One MGRIT iteration from the given level-0 C-point values.
pub fn mgrit_iteration<P: PintProblem>(
    problem: &P,
    params: &PintParams,
    c_points: &[P::State],
) -> Result<Vec<P::State>, PintError> {
    check_params(problem, params)?;
    if c_points.len() != params.slices() + 1 {
        return Err(PintError::InvalidConfig(format!(
            "expected {} C-point values, got {}",
            params.slices() + 1,
            c_points.len()
        )));
    }
    Ctx { problem, params }
        .iterate(c_points)
        .map_err(|f| PintError::Step(f.error))
}

/// Classic Parareal: `U^{k+1}_{n+1} = G(U^{k+1}_n) + F(U^k_n) − G(U^k_n)`,
/// with `G` applied on level 1 between a restriction and a prolongation.
pub fn parareal_run<P: PintProblem>(
    problem: &P,
    params: &PintParams,
    u0: &P::State,
    workers: usize,
) -> Result<IterationTrace<P::State>, PintError> {
    check_params(problem, params)?;
    if params.nlevels != 2 || params.nrelax != 0 {
        return Err(PintError::InvalidConfig(
            "Parareal needs nlevels = 2 and nrelax = 0".into(),
        ));
    }
    let pool = build_pool(workers)?;
    let ctx = Ctx { problem, params };
    let slices = params.slices();
    let policy = ctx.policy(1);
    let same = problem.same_space(0);
    let lift = |v: P::State| if same { v } else { problem.prolong(0, &v) };
    let no_forcing: Vec<Option<P::State>> = vec![None; params.n0 + 1];

    Ok(pool.install(|| {
        // G(U^k_n) from the previous iteration.
        let mut g_old: Vec<P::State> = Vec::new();
        run_loop(params, u0.max_abs(), |u_old| {
            let fine = match u_old {
                Some(u_old) => Some(par_map(slices, |n| ctx.slice_prop(0, &no_forcing, n, &u_old[n]))?),
                None => None,
            };
            let mut u = vec![u0.clone()];
            let mut g_new = Vec::with_capacity(slices);
            let mut prev_r: Option<P::State> = None;
            for n in 0..slices {
                let r = problem.restrict(0, &u[n]);
                let gn = lift(ctx.step_at(1, &policy, n, &r, prev_r.as_ref())?);
                prev_r = Some(r);
                u.push(match &fine {
                    Some(f) => gn.plus(&f[n].minus(&g_old[n])),
                    None => gn.clone(),
                });
                g_new.push(gn);
            }
            g_old = g_new;
            Ok(u)
        })
    }))
}

/// Serial level-0 solution at the C-points, propagated slice by slice exactly
/// as the fine sweeps of the iterations do.
pub fn fine_serial<P: PintProblem>(problem: &P, params: &PintParams, u0: &P::State) -> Result<Vec<P::State>, PintError> {
    check_params(problem, params)?;
    let ctx = Ctx { problem, params };
    let no_forcing: Vec<Option<P::State>> = vec![None; params.n0 + 1];
    let mut out = vec![u0.clone()];
    for n in 0..params.slices() {
        let next = ctx
            .slice_prop(0, &no_forcing, n, &out[n])
            .map_err(|f| PintError::Step(f.error))?;
        out.push(next);
    }
    Ok(out)
}

/// Output of [`relax_fcf`].
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxed<S> {
    /// C-point values after the `nrelax` CF sweeps.
    pub c_points: Vec<S>,
    /// Value reached at the end of each slice by the final F-sweep.
    pub slice_ends: Vec<S>,
}

/// F(CF)^nrelax relaxation on level 0 of `problem`.
pub fn relax_fcf<P: PintProblem>(
    problem: &P,
    params: &PintParams,
    c_points: &[P::State],
    nrelax: usize,
) -> Result<Relaxed<P::State>, PintError> {
    check_params(problem, params)?;
    let local = PintParams { nrelax, ..*params };
    let ctx = Ctx { problem, params: &local };
    let no_forcing: Vec<Option<P::State>> = vec![None; (c_points.len() - 1) * params.cfactor + 1];
    let mut c = c_points.to_vec();
    let w = ctx
        .relax(0, &mut c, &no_forcing)
        .map_err(|f| PintError::Step(f.error))?;
    Ok(Relaxed {
        c_points: c,
        slice_ends: w,
    })
}
