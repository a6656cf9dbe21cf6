//! Forward prediction by fixed-point iteration of the parameter equations.
//!
//! At every future time point the integrative outputs advance by one Euler
//! step, pure inputs are taken from an exogenous series or held, and the
//! remaining parameters are solved by Gauss-Seidel sweeps. When a sweep stops
//! contracting, the offending parameters are found by probing their ranges.

use crate::error::{Error, Result};
use crate::graph::ComponentKind;
use crate::monotone::golden_min;
use crate::network::{eval_frame, forward_pass, Frame, Model, StepContext, TimeGrid, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct PredictConfig {
    /// Abort tolerance on the largest per-sweep change.
    pub iteration_error: f64,
    pub max_iterations: usize,
    pub probe_points: usize,
    pub horizon: usize,
    pub step: f64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            iteration_error: 1e-8,
            max_iterations: 200,
            probe_points: 64,
            horizon: 0,
            step: 1.0,
        }
    }
}

impl PredictConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.iteration_error > 0.0 && self.iteration_error.is_finite()) {
            return Err(Error::RejectedInput("iteration_error must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::RejectedInput("step must be positive".into()));
        }
        if self.max_iterations == 0 || self.probe_points < 2 {
            return Err(Error::RejectedInput(
                "max_iterations must be positive and probe_points at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub iterations_used: usize,
    pub used_fallback: bool,
    pub converged: bool,
    /// Largest change of one Gauss-Seidel sweep from the returned state.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub grid: TimeGrid,
    /// One series per parameter, in declaration order.
    pub trajectories: Trajectory,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Prediction {
    pub fn converged(&self) -> bool {
        self.diagnostics.iter().all(|d| d.converged)
    }
}

/// Time context of one solve: the previous grid point's node values and the
/// step to it, or nothing for a stand-alone algebraic solve in which
/// integrative outputs keep their state values.
#[derive(Clone, Debug, Default)]
pub struct SolveContext {
    prev: Option<(Frame, f64)>,
}

impl SolveContext {
    pub fn standalone() -> Self {
        Self::default()
    }
}

/// Parameter indices whose value comes from a same-step equation.
fn algebraic(model: &Model) -> Vec<usize> {
    let graph = model.graph();
    let plan = model.plan();
    graph
        .parameters
        .iter()
        .enumerate()
        .filter_map(|(p, decl)| {
            let v = model.node_index(&decl.node)?;
            let c = plan.driver[v]?;
            (graph.components[c].kind != ComponentKind::Integrative).then_some(p)
        })
        .collect()
}

fn frame(model: &Model, state: &[f64], ctx: &SolveContext) -> Result<Frame> {
    let plan = model.plan();
    let given = |v: usize| plan.topo.param_of[v].map(|p| state[p]);
    let initial = |v: usize| plan.topo.param_of[v].map_or(0.0, |p| state[p]);
    eval_frame(
        model,
        &StepContext {
            given: &given,
            initial: &initial,
            prev: ctx.prev.as_ref().map(|(f, dt)| (f, *dt)),
            open_loop: false,
        },
    )
}

fn net_of(model: &Model, state: &[f64], ctx: &SolveContext, p: usize) -> Result<f64> {
    let v = model.node_index(&model.graph().parameters[p].node).expect("validated parameter");
    Ok(frame(model, state, ctx)?.net[v])
}

/// One in-place sweep over the algebraic parameters in declaration order;
/// each takes its clamped net value given the entries before it (already
/// updated) and after it (from the previous sweep). Returns the per-parameter
/// absolute changes.
pub fn gauss_seidel_sweep(model: &Model, state: &mut [f64], ctx: &SolveContext) -> Result<Vec<f64>> {
    let mut delta = vec![0.0; state.len()];
    for p in algebraic(model) {
        let net = net_of(model, state, ctx, p)?;
        let new = model.graph().parameters[p].clamp(net);
        delta[p] = (new - state[p]).abs();
        state[p] = new;
    }
    Ok(delta)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
}

fn sweep_residual(model: &Model, state: &[f64], ctx: &SolveContext) -> Result<f64> {
    let mut copy = state.to_vec();
    Ok(max_abs(&gauss_seidel_sweep(model, &mut copy, ctx)?))
}

/// Sum of squared equation defects of the algebraic parameters, with
/// unclamped nets.
fn defect(model: &Model, state: &[f64], ctx: &SolveContext, alg: &[usize]) -> Result<f64> {
    let f = frame(model, state, ctx)?;
    let graph = model.graph();
    let mut sum = 0.0;
    for &p in alg {
        let v = model.node_index(&graph.parameters[p].node).expect("validated parameter");
        let d = f.net[v] - state[p];
        sum += d * d;
    }
    Ok(if sum.is_nan() { f64::INFINITY } else { sum })
}

/// Solves the algebraic parameters at one time point.
///
/// Sweeps until the largest change drops below `iteration_error`. When a
/// parameter's change fails to shrink between sweeps, that parameter joins
/// the probing set: each probing round scans its range on `probe_points`
/// values, minimizing the summed squared equation defect, and refines the
/// best value by golden-section search. Ties go to the value closest to the
/// pre-probing value, then to the lower value. A Gauss-Seidel sweep still
/// decides when to stop.
pub fn solve_state(
    model: &Model,
    guess: &[f64],
    ctx: &SolveContext,
    config: &PredictConfig,
) -> Result<(Vec<f64>, StepDiagnostics)> {
    let graph = model.graph();
    let e = config.iteration_error;
    let mut state: Vec<f64> = guess
        .iter()
        .zip(&graph.parameters)
        .map(|(x, p)| p.clamp(*x))
        .collect();
    let alg = algebraic(model);
    if alg.is_empty() {
        return Ok((
            state,
            StepDiagnostics {
                iterations_used: 0,
                used_fallback: false,
                converged: true,
                residual: 0.0,
            },
        ));
    }

    let mut last: Option<Vec<f64>> = None;
    let mut failing = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations {
        let before = state.clone();
        let delta = gauss_seidel_sweep(model, &mut state, ctx)?;
        iterations += 1;
        let residual = max_abs(&delta);
        if residual < e {
            return Ok((
                before,
                StepDiagnostics {
                    iterations_used: iterations,
                    used_fallback: false,
                    converged: true,
                    residual,
                },
            ));
        }
        if let Some(prev) = &last {
            if residual >= max_abs(prev) {
                failing = alg.iter().copied().filter(|&p| delta[p] >= e && delta[p] >= prev[p]).collect();
                state = before;
                break;
            }
        }
        last = Some(delta);
    }
    if failing.is_empty() {
        let residual = sweep_residual(model, &state, ctx)?;
        return Ok((
            state,
            StepDiagnostics {
                iterations_used: iterations,
                used_fallback: false,
                converged: residual < e,
                residual,
            },
        ));
    }

    let anchor = state.clone();
    let mut residual = f64::INFINITY;
    while iterations < config.max_iterations {
        iterations += 1;
        for &p in &failing {
            state[p] = probe(model, &state, ctx, &alg, p, anchor[p], config.probe_points)?;
        }
        for &p in &alg {
            if !failing.contains(&p) {
                let net = net_of(model, &state, ctx, p)?;
                state[p] = graph.parameters[p].clamp(net);
            }
        }
        residual = sweep_residual(model, &state, ctx)?;
        if residual < e {
            break;
        }
    }
    Ok((
        state,
        StepDiagnostics {
            iterations_used: iterations,
            used_fallback: true,
            converged: residual < e,
            residual,
        },
    ))
}

fn probe(
    model: &Model,
    state: &[f64],
    ctx: &SolveContext,
    alg: &[usize],
    p: usize,
    anchor: f64,
    points: usize,
) -> Result<f64> {
    let decl = &model.graph().parameters[p];
    let mut work = state.to_vec();
    let mut eval = |x: f64| -> Result<f64> {
        work[p] = x;
        defect(model, &work, ctx, alg)
    };
    let grid: Vec<f64> = (0..points)
        .map(|i| decl.min + (decl.max - decl.min) * i as f64 / (points - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(points);
    for &x in &grid {
        values.push(eval(x)?);
    }
    let better = |fa: f64, xa: f64, fb: f64, xb: f64| -> bool {
        let tie = (fa - fb).abs() <= 1e-12 * fa.abs().max(fb.abs());
        if !tie {
            return fa < fb;
        }
        let (da, db) = ((xa - anchor).abs(), (xb - anchor).abs());
        da < db || (da == db && xa < xb)
    };
    let mut best = 0;
    for i in 1..points {
        if better(values[i], grid[i], values[best], grid[best]) {
            best = i;
        }
    }
    let (mut x, mut f) = (grid[best], values[best]);
    let current = eval(state[p])?;
    if better(current, state[p], f, x) {
        x = state[p];
        f = current;
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(points - 1)];
    let mut failure = None;
    let refined = golden_min(lo.min(x), hi.max(x), |t| match eval(t) {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let fr = eval(refined)?;
    Ok(if fr < f { refined } else { x })
}

/// Predicts every parameter `horizon` steps of size `step` past the last
/// history record.
///
/// Pure-input parameters with a column in `exogenous` take the value at the
/// matching time (every future time must be present); all others hold their
/// last history value. Predicted parameters are clamped to their ranges.
pub fn predict(
    model: &Model,
    history: &Trajectory,
    exogenous: Option<&Trajectory>,
    config: &PredictConfig,
) -> Result<Prediction> {
    config.check()?;
    if history.is_empty() {
        return Err(Error::InsufficientSamples {
            required: 1,
            available: 0,
        });
    }
    let graph = model.graph();
    let plan = model.plan();
    let memo = forward_pass(model, history)?;
    let mut prev = memo.frames.last().expect("non-empty history").clone();
    let t_last = *history.grid.points().last().expect("non-empty history");
    let grid = TimeGrid::new((1..=config.horizon).map(|k| t_last + config.step * k as f64).collect())?;

    let z = graph.parameters.len();
    let idx: Vec<usize> = graph
        .parameters
        .iter()
        .map(|p| model.node_index(&p.node).expect("validated parameter"))
        .collect();
    let pure: Vec<bool> = idx.iter().map(|&v| plan.driver[v].is_none()).collect();
    let integrative: Vec<bool> = idx
        .iter()
        .map(|&v| plan.driver[v].is_some_and(|c| graph.components[c].kind == ComponentKind::Integrative))
        .collect();
    let external: Vec<Option<&[f64]>> = graph
        .parameters
        .iter()
        .enumerate()
        .map(|(p, decl)| {
            if pure[p] {
                exogenous.and_then(|ex| ex.get(&decl.node))
            } else {
                None
            }
        })
        .collect();

    let mut state: Vec<f64> = idx.iter().map(|&v| prev.value[v]).collect();
    let mut series = vec![Vec::with_capacity(config.horizon); z];
    let mut diagnostics = Vec::with_capacity(config.horizon);
    for &t in grid.points() {
        for p in 0..z {
            if let Some(s) = external[p] {
                let ex = exogenous.expect("external series come from exogenous");
                let row = ex
                    .grid
                    .points()
                    .iter()
                    .position(|&u| (u - t).abs() <= 1e-9 * t.abs().max(1.0))
                    .ok_or_else(|| {
                        Error::RejectedInput(format!(
                            "exogenous series for `{}` has no value at t = {t}",
                            graph.parameters[p].node
                        ))
                    })?;
                state[p] = s[row];
            }
        }
        let ctx = SolveContext {
            prev: Some((prev.clone(), config.step)),
        };
        let advanced = frame(model, &state, &ctx)?;
        for p in 0..z {
            if integrative[p] {
                state[p] = graph.parameters[p].clamp(advanced.net[idx[p]]);
            }
        }
        let (solved, diag) = solve_state(model, &state, &ctx, config)?;
        state = solved;
        for p in 0..z {
            series[p].push(state[p]);
        }
        diagnostics.push(diag);
        prev = frame(model, &state, &ctx)?;
    }

    let mut trajectories = Trajectory::new(grid.clone());
    for (p, s) in series.into_iter().enumerate() {
        trajectories.insert(graph.parameters[p].node.clone(), s)?;
    }
    Ok(Prediction {
        grid,
        trajectories,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::fixtures::{reference_model, reference_specs, soil_graph};
    use crate::graph::{ComponentId, NodeId};
    use crate::io::parse_graph;
    use crate::monotone::{FamilyConfig, MonotoneSpec};
    use crate::network::ComponentSpec;
    use crate::simulate::simulate_model;

    /// p1 = a * p2 and p2 = b * p1 + c.
    fn linear_toy(a: f64, b: f64, c: f64) -> Model {
        let g = parse_graph(
            "param p1 range -10 10\nparam p2 range -10 10\n\
             coupling synchronous ++ from p2 to p1\ncoupling synchronous ++ from p1 to p2\n",
        )
        .unwrap();
        let family = FamilyConfig::default();
        let specs = BTreeMap::from([
            (ComponentId::new("u1"), ComponentSpec::Univariate(MonotoneSpec::affine_in_family(a, 0.0, &family))),
            (ComponentId::new("u2"), ComponentSpec::Univariate(MonotoneSpec::affine_in_family(b, c, &family))),
        ]);
        Model::new(g, specs).unwrap()
    }

    #[test]
    fn sweep_uses_fresh_entries() {
        let model = linear_toy(0.5, 0.5, 1.0);
        let ctx = SolveContext::standalone();
        let mut state = vec![0.0, 0.0];
        gauss_seidel_sweep(&model, &mut state, &ctx).unwrap();
        assert_eq!(state, vec![0.0, 1.0]);
    }

    #[test]
    fn contraction_reaches_the_fixed_point_geometrically() {
        let model = linear_toy(0.5, 0.5, 1.0);
        let ctx = SolveContext::standalone();
        let exact = [2.0 / 3.0, 4.0 / 3.0];
        let mut state = vec![0.0, 0.0];
        let mut err = f64::INFINITY;
        for _ in 0..30 {
            gauss_seidel_sweep(&model, &mut state, &ctx).unwrap();
            let e = (state[0] - exact[0]).abs().max((state[1] - exact[1]).abs());
            assert!(e < err || e == 0.0);
            err = e;
        }
        let config = PredictConfig::default();
        let (s, diag) = solve_state(&model, &[0.0, 0.0], &ctx, &config).unwrap();
        assert!(diag.converged && !diag.used_fallback);
        assert!(diag.residual < config.iteration_error);
        assert!((s[0] - exact[0]).abs() < 1e-8 && (s[1] - exact[1]).abs() < 1e-8, "{s:?}");
    }

    #[test]
    fn fixed_point_guess_returns_at_once() {
        let model = linear_toy(0.5, 0.5, 1.0);
        let guess = [2.0 / 3.0, 4.0 / 3.0];
        let (s, diag) = solve_state(&model, &guess, &SolveContext::standalone(), &PredictConfig::default()).unwrap();
        assert_eq!(diag.iterations_used, 1);
        assert_eq!(s, guess.to_vec());
    }

    #[test]
    fn divergent_toy_falls_back_to_probing() {
        let model = linear_toy(2.0, 2.0, 1.0);
        let ctx = SolveContext::standalone();
        let config = PredictConfig::default();
        let (s, diag) = solve_state(&model, &[0.0, 0.0], &ctx, &config).unwrap();
        assert!(diag.used_fallback);
        // the probed residual is no worse than at any grid point of the range
        let res = |x: &[f64]| sweep_residual(&model, x, &ctx).unwrap();
        let best = res(&s);
        assert!((best - diag.residual).abs() < 1e-12);
        for i in 0..=40 {
            let x = -10.0 + 0.5 * i as f64;
            assert!(best <= res(&[x, s[1]]) + 1e-12, "p1 = {x}");
        }
        assert!((s[0] + 2.0 / 3.0).abs() < 1e-6 && (s[1] + 1.0 / 3.0).abs() < 1e-6, "{s:?}");
    }

    #[test]
    fn pure_inputs_are_left_alone() {
        let g = parse_graph("param a range 0 1\nparam b range 0 1\n").unwrap();
        let model = Model::new(g, BTreeMap::new()).unwrap();
        let mut state = vec![0.3, 0.9];
        let delta = gauss_seidel_sweep(&model, &mut state, &SolveContext::standalone()).unwrap();
        assert_eq!(state, vec![0.3, 0.9]);
        assert_eq!(delta, vec![0.0, 0.0]);
    }

    fn constant_exogenous(start: f64, count: usize, sunshine: f64, precipitation: &dyn Fn(usize) -> f64) -> Trajectory {
        let grid = TimeGrid::uniform(start, 1.0, count).unwrap();
        Trajectory::new(grid)
            .with("sunshine", vec![sunshine; count])
            .unwrap()
            .with("precipitation", (0..count).map(precipitation).collect())
            .unwrap()
    }

    /// Precipitation whose uptake balances evaporation at the given state.
    fn balancing_precipitation(sunshine: f64, moisture: f64) -> f64 {
        let specs = reference_specs();
        let ComponentSpec::Modulator(evap) = &specs[&ComponentId::new("u1")] else { unreachable!() };
        let ComponentSpec::Univariate(uptake) = &specs[&ComponentId::new("u2")] else { unreachable!() };
        uptake.invert(evap.eval(sunshine, moisture))
    }

    fn history(sunshine: f64, precipitation: f64, moisture: f64, count: usize) -> Trajectory {
        constant_exogenous(0.0, count, sunshine, &|_| precipitation)
            .with("moisture", vec![moisture; count])
            .unwrap()
    }

    #[test]
    fn equilibrium_is_held() {
        let (s, m) = (5.0, 40.0);
        let p = balancing_precipitation(s, m);
        assert!((0.0..=10.0).contains(&p), "{p}");
        let model = reference_model();
        let config = PredictConfig {
            horizon: 25,
            ..Default::default()
        };
        let ex = constant_exogenous(4.0, 26, s, &|_| p);
        let pred = predict(&model, &history(s, p, m, 5), Some(&ex), &config).unwrap();
        let moisture = pred.trajectories.get(&NodeId::new("moisture")).unwrap();
        assert_eq!(moisture.len(), 25);
        assert!(moisture.iter().all(|x| (x - m).abs() < 1e-9), "{moisture:?}");
        assert!(pred.converged());
    }

    #[test]
    fn more_rain_raises_moisture_like_the_simulator() {
        let (s, m) = (5.0, 40.0);
        let p = balancing_precipitation(s, m);
        let model = reference_model();
        let horizon = 40;
        let config = PredictConfig {
            horizon,
            ..Default::default()
        };
        let wet = p + 2.0;
        let ex = constant_exogenous(4.0, horizon + 1, s, &|_| wet);
        let pred = predict(&model, &history(s, p, m, 5), Some(&ex), &config).unwrap();
        let moisture = pred.trajectories.get(&NodeId::new("moisture")).unwrap();
        // explicit Euler: the first step still sees the old precipitation
        assert!((moisture[0] - m).abs() < 1e-9);
        assert!(moisture.windows(2).all(|w| w[1] > w[0]), "{moisture:?}");

        // the simulator started from the last history point, with the
        // precipitation that history ended on for the first Euler step
        let oracle_ex = constant_exogenous(4.0, horizon + 1, s, &|j| if j == 0 { p } else { wet });
        let initial = BTreeMap::from([(NodeId::new("moisture"), m)]);
        let sim = simulate_model(&model, &oracle_ex, &initial).unwrap();
        let expect = &sim.get(&NodeId::new("moisture")).unwrap()[1..];
        for (a, b) in moisture.iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_horizon_is_empty() {
        let pred = predict(&reference_model(), &history(5.0, 5.0, 40.0, 3), None, &PredictConfig::default()).unwrap();
        assert!(pred.grid.is_empty());
        assert!(pred.diagnostics.is_empty());
        assert_eq!(pred.trajectories.len(), 0);
    }

    #[test]
    fn predictions_stay_in_range_and_inputs_hold() {
        let model = reference_model();
        let config = PredictConfig {
            horizon: 200,
            ..Default::default()
        };
        // a long drought drives moisture toward its floor
        let pred = predict(&model, &history(9.0, 0.0, 20.0, 3), None, &config).unwrap();
        for decl in &model.graph().parameters {
            let s = pred.trajectories.get(&decl.node).unwrap();
            assert!(s.iter().all(|x| (decl.min..=decl.max).contains(x)), "{}", decl.node);
        }
        assert!(pred.trajectories.get(&NodeId::new("sunshine")).unwrap().iter().all(|&x| x == 9.0));
    }

    #[test]
    fn missing_exogenous_values_name_the_parameter() {
        let config = PredictConfig {
            horizon: 5,
            ..Default::default()
        };
        let ex = constant_exogenous(4.0, 3, 5.0, &|_| 5.0);
        let e = predict(&reference_model(), &history(5.0, 5.0, 40.0, 3), Some(&ex), &config).unwrap_err();
        assert!(e.to_string().contains("sunshine"), "{e}");
    }

    #[test]
    fn soil_graph_has_no_algebraic_parameters() {
        let model = Model::identity(soil_graph(), &FamilyConfig::default()).unwrap();
        assert!(algebraic(&model).is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn converged_steps_meet_the_abort_tolerance(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -5.0f64..5.0, g in (-10.0f64..10.0, -10.0f64..10.0)) {
                let model = linear_toy(a.abs().max(1e-3) * a.signum(), b.abs().max(1e-3) * b.signum(), c);
                let config = PredictConfig::default();
                let ctx = SolveContext::standalone();
                let (s, d) = solve_state(&model, &[g.0, g.1], &ctx, &config).unwrap();
                prop_assert!(s.iter().all(|x| (-10.0..=10.0).contains(x)));
                if d.converged {
                    prop_assert!(d.residual < config.iteration_error);
                    prop_assert!(sweep_residual(&model, &s, &ctx).unwrap() <= config.iteration_error);
                }
            }

            #[test]
            fn soil_predictions_stay_in_range(sun in 0.0f64..10.0, rain in 0.0f64..10.0, m in 0.0f64..100.0) {
                let config = PredictConfig { horizon: 60, ..Default::default() };
                let pred = predict(&reference_model(), &history(sun, rain, m, 2), None, &config).unwrap();
                for decl in &reference_model().graph().parameters {
                    let s = pred.trajectories.get(&decl.node).unwrap();
                    prop_assert!(s.iter().all(|x| (decl.min..=decl.max).contains(x)));
                }
            }
        }
    }
}
