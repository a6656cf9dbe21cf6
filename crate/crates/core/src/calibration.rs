//! Fitting every coupling of a graph to recorded time series.
//!
//! Each cycle refits the components one at a time: a component's inputs come
//! from a forward pass over the records, its output from a backward pass, and
//! the passes are refreshed after every refit. Between cycles the constants
//! are perturbed by simulated annealing.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::{count_regression_constants, validate_graph, ComponentId, ComponentKind, Graph, NodeId, ParameterDecl};
use crate::monotone::{fit_bivariate, fit_univariate, FamilyConfig, ModulatorSpec, MonotoneSpec};
use crate::network::{causal_difference, forward_pass, BackwardPass, ComponentSpec, Model, PassMemo, Trajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    /// Temperature multiplier per cycle, in `(0, 1)`.
    pub cooling_factor: f64,
    /// Perturbation standard deviation per unit temperature, relative to each
    /// constant's data-derived range.
    pub perturbation_scale: f64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            initial_temperature: 1.0,
            cooling_factor: 0.95,
            perturbation_scale: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub max_cycles: usize,
    /// Acceptable total error; `None` means 2% of the widest parameter range.
    pub target_error: Option<f64>,
    pub anneal: AnnealConfig,
    pub seed: u64,
    pub family: FamilyConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            max_cycles: 200,
            target_error: None,
            anneal: AnnealConfig::default(),
            seed: 0,
            family: FamilyConfig::default(),
        }
    }
}

impl CalibrationConfig {
    pub fn check(&self) -> Result<()> {
        self.family.check()?;
        let a = &self.anneal;
        let bad = |m: String| Err(Error::RejectedInput(m));
        if self.max_cycles == 0 {
            return bad("max_cycles must be positive".into());
        }
        if let Some(t) = self.target_error {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("target_error must be positive, got {t}"));
            }
        }
        if !(a.initial_temperature > 0.0 && a.initial_temperature.is_finite()) {
            return bad(format!("initial_temperature must be positive, got {}", a.initial_temperature));
        }
        if !(a.cooling_factor > 0.0 && a.cooling_factor < 1.0) {
            return bad(format!("cooling_factor must lie in (0, 1), got {}", a.cooling_factor));
        }
        if !(a.perturbation_scale > 0.0 && a.perturbation_scale.is_finite()) {
            return bad(format!("perturbation_scale must be positive, got {}", a.perturbation_scale));
        }
        Ok(())
    }

    pub fn target_for(&self, graph: &Graph) -> f64 {
        self.target_error.unwrap_or(0.02 * graph.widest_range())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationResult {
    pub model: Model,
    pub epsilon_hat: f64,
    /// Observed parameters in declaration order.
    pub per_parameter_errors: Vec<(NodeId, f64)>,
    pub cycles_used: usize,
    pub record_count: usize,
    pub constant_count: usize,
    pub determinacy_ok: bool,
    pub relevant: bool,
    pub target_error: f64,
    /// Components left unfitted in the last cycle for lack of samples.
    pub skipped: Vec<ComponentId>,
    pub seed: u64,
}

/// Largest deviation between a parameter's records and its net value.
/// Parameters without a driving component have error 0.
pub fn parameter_error(model: &Model, records: &Trajectory, param: &ParameterDecl) -> Result<f64> {
    if !param.observed {
        return Err(Error::LatentParameter(param.node.to_string()));
    }
    let memo = forward_pass(model, records)?;
    Ok(error_from_memo(model, records, &memo, &param.node))
}

fn error_from_memo(model: &Model, records: &Trajectory, memo: &PassMemo, node: &NodeId) -> f64 {
    let v = model.node_index(node).expect("validated parameter");
    if model.plan().driver[v].is_none() {
        return 0.0;
    }
    let rec = records.get(node).expect("checked by the forward pass");
    let net = memo.net_series(v);
    rec.iter()
        .zip(&net)
        .map(|(r, n)| (r - n).abs())
        .fold(0.0, |acc, d| if d.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(d) })
}

/// Error of every observed parameter, in declaration order.
pub fn parameter_errors(model: &Model, records: &Trajectory) -> Result<Vec<(NodeId, f64)>> {
    let memo = forward_pass(model, records)?;
    Ok(model
        .graph()
        .parameters
        .iter()
        .filter(|p| p.observed)
        .map(|p| (p.node.clone(), error_from_memo(model, records, &memo, &p.node)))
        .collect())
}

/// Largest parameter error; `NaN` errors count as infinite.
pub fn total_error(model: &Model, records: &Trajectory) -> Result<f64> {
    Ok(max_error(&parameter_errors(model, records)?))
}

fn max_error(errors: &[(NodeId, f64)]) -> f64 {
    errors
        .iter()
        .map(|(_, e)| if e.is_nan() { f64::INFINITY } else { *e })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CycleOutcome {
    pub model: Model,
    pub skipped: Vec<ComponentId>,
}

/// Refits every calibratable component once, inputs before outputs, with the
/// forward and backward passes refreshed after each refit.
pub fn regression_cycle(
    model: &Model,
    records: &Trajectory,
    family: &FamilyConfig,
    rng: &mut dyn RngCore,
) -> Result<CycleOutcome> {
    let mut model = model.clone();
    let mut skipped = Vec::new();
    let order = model.plan().order.clone();
    for c in order {
        let memo = forward_pass(&model, records)?;
        let fitted = {
            let mut back = BackwardPass::new(&model, records, &memo, rng)?;
            refit(&model, records, &memo, &mut back, c, family)
        };
        match fitted {
            Ok(spec) => model.set_spec_at(c, spec),
            Err(Error::Underdetermined { .. }) | Err(Error::RejectedInput(_)) => {
                skipped.push(model.graph().components[c].id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(CycleOutcome { model, skipped })
}

fn refit(
    model: &Model,
    records: &Trajectory,
    memo: &PassMemo,
    back: &mut BackwardPass<'_>,
    c: usize,
    family: &FamilyConfig,
) -> Result<ComponentSpec> {
    let plan = model.plan();
    let comp = &model.graph().components[c];
    let inputs = plan.inputs(c);
    let target = back.series(plan.output(c))?.to_vec();
    let grid = &records.grid;
    match comp.kind {
        ComponentKind::Modulator => {
            let a = memo.value_series(inputs[0].0);
            let b = memo.value_series(inputs[1].0);
            let triples: Vec<_> = (0..target.len()).map(|j| (a[j], b[j], target[j])).collect();
            Ok(ComponentSpec::Modulator(fit_bivariate(
                &triples,
                family,
                model.spec_at(c).modulator(),
            )?))
        }
        ComponentKind::Summator => unreachable!("summators are not calibratable"),
        kind => {
            let (so, si) = comp.variant.expect("coupling variant").coupling_signs();
            let x = memo.value_series(inputs[0].0);
            let pairs: Vec<(f64, f64)> = match kind {
                ComponentKind::Synchronous => x.iter().zip(&target).map(|(x, y)| (si * x, so * y)).collect(),
                ComponentKind::Differential => (0..x.len())
                    .map(|j| (si * causal_difference(&x, grid, j), so * target[j]))
                    .collect(),
                _ => (0..x.len().saturating_sub(1))
                    .map(|j| (si * x[j], so * (target[j + 1] - target[j]) / grid.step(j + 1)))
                    .collect(),
            };
            Ok(ComponentSpec::Univariate(fit_univariate(
                &pairs,
                family,
                model.spec_at(c).univariate(),
            )?))
        }
    }
}

/// `true` for downhill moves, else with probability `exp(-delta / T)` decided
/// by the uniform draw `u` in `[0, 1)`.
pub fn metropolis_accept(delta: f64, temperature: f64, u: f64) -> bool {
    delta <= 0.0 || u < (-delta / temperature).exp()
}

#[derive(Clone, Debug)]
pub struct AnnealOutcome {
    /// The proposal when accepted, otherwise the unchanged input model.
    pub model: Model,
    pub accepted: bool,
    pub previous_error: f64,
    pub proposed_error: f64,
}

/// Perturbs every constant with Gaussian noise of standard deviation
/// `perturbation_scale * temperature * range`, where `range` is the
/// constant's scale in the current data, clamps, and applies the Metropolis
/// test on the total error.
pub fn anneal_step(
    model: &Model,
    records: &Trajectory,
    config: &CalibrationConfig,
    temperature: f64,
    current_error: f64,
    rng: &mut dyn RngCore,
) -> Result<AnnealOutcome> {
    let memo = forward_pass(model, records)?;
    let mut proposal = model.clone();
    let scale = config.anneal.perturbation_scale * temperature;
    for c in model.plan().order.clone() {
        let spec = model.spec_at(c);
        let ranges = constant_ranges(model, records, &memo, c);
        let k: Vec<f64> = spec
            .constants()
            .iter()
            .zip(&ranges)
            .map(|(k, r)| {
                let z: f64 = rng.sample(StandardNormal);
                k + z * scale * r
            })
            .collect();
        proposal.set_spec_at(c, spec.with_constants(&k)?.clamp_constraints(&config.family));
    }
    let proposed = total_error(&proposal, records)?;
    let proposed_error = if proposed.is_nan() { f64::INFINITY } else { proposed };
    let u: f64 = rng.random();
    let accepted = proposed_error.is_finite() && metropolis_accept(proposed_error - current_error, temperature, u);
    Ok(AnnealOutcome {
        model: if accepted { proposal } else { model.clone() },
        accepted,
        previous_error: current_error,
        proposed_error,
    })
}

fn span(values: impl IntoIterator<Item = f64>) -> f64 {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// Data scale of every constant of `spec` evaluated on `xs`: slope by
/// output over input span, offset and weights by output span, centers and
/// scales by input span.
fn univariate_ranges(spec: &MonotoneSpec, xs: &[f64], floor: f64) -> Vec<f64> {
    let sx = span(xs.iter().copied()).max(floor);
    let sy = span(xs.iter().map(|&x| spec.eval(x))).max(floor);
    let mut r = vec![sy / sx, sy];
    for _ in &spec.terms {
        r.extend([sy, sx, sx]);
    }
    r
}

fn constant_ranges(model: &Model, records: &Trajectory, memo: &PassMemo, c: usize) -> Vec<f64> {
    let plan = model.plan();
    let comp = &model.graph().components[c];
    let inputs = plan.inputs(c);
    let floor = 1e-6 * (1.0 + model.graph().widest_range());
    match model.spec_at(c) {
        ComponentSpec::Modulator(m) => {
            let (s1, s2) = m.signs();
            let a: Vec<f64> = memo.value_series(inputs[0].0).iter().map(|x| s1 * x).collect();
            let b: Vec<f64> = memo.value_series(inputs[1].0).iter().map(|x| s2 * x).collect();
            let g: Vec<f64> = a.iter().zip(&b).map(|(a, b)| m.left.eval(*a) + m.right.eval(*b)).collect();
            let mut r = univariate_ranges(&m.outer, &g, floor);
            r.extend(univariate_ranges(&m.left, &a, floor));
            r.extend(univariate_ranges(&m.right, &b, floor));
            r
        }
        ComponentSpec::Univariate(s) => {
            let (_, si) = comp.variant.expect("coupling variant").coupling_signs();
            let x = memo.value_series(inputs[0].0);
            let xs: Vec<f64> = match comp.kind {
                ComponentKind::Differential => (0..x.len())
                    .map(|j| si * causal_difference(&x, &records.grid, j))
                    .collect(),
                _ => x.iter().map(|v| si * v).collect(),
            };
            univariate_ranges(s, &xs, floor)
        }
    }
}

#[derive(Clone, Copy)]
struct Window {
    lo: f64,
    hi: f64,
}

impl Window {
    fn flipped(self, sign: f64) -> Window {
        let (a, b) = (sign * self.lo, sign * self.hi);
        Window { lo: a.min(b), hi: a.max(b) }
    }

    fn span(self) -> f64 {
        self.hi - self.lo
    }

    fn mid(self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

fn random_univariate(rng: &mut dyn RngCore, input: Window, output: Window, family: &FamilyConfig) -> MonotoneSpec {
    let sx = input.span();
    let sy = output.span();
    let slope = sy / sx * rng.random_range(0.3..1.0);
    let mut spec = MonotoneSpec::affine(slope, 0.0);
    for _ in 0..family.term_count {
        let w = sy * rng.random_range(0.0..0.5);
        let c = rng.random_range(input.lo..input.hi);
        let s = sx * rng.random_range(0.1..0.5);
        spec = spec.with_term(w, c, s);
    }
    spec.offset = output.mid() - spec.eval(input.mid());
    spec.clamp_constraints(family)
}

/// Random constants scaled to the parameter ranges: each function maps its
/// input window into its output window with a random slope and random
/// logistic steps.
pub fn random_model(graph: &Graph, records: &Trajectory, family: &FamilyConfig, rng: &mut dyn RngCore) -> Result<Model> {
    let identity = Model::identity(graph.clone(), family)?;
    let plan = identity.plan();
    let widest = graph.widest_range().max(1.0);
    let duration = match records.grid.points() {
        [first, .., last] => last - first,
        _ => 1.0,
    };
    let window = |v: usize| match plan.topo.param_of[v] {
        Some(p) => Window {
            lo: graph.parameters[p].min,
            hi: graph.parameters[p].max,
        },
        None => Window {
            lo: -0.5 * widest,
            hi: 0.5 * widest,
        },
    };
    let rate = |w: Window| {
        let r = w.span() / duration;
        Window { lo: -r, hi: r }
    };
    let mut model = identity.clone();
    for c in 0..graph.components.len() {
        let comp = &graph.components[c];
        if !comp.kind.is_calibratable() {
            continue;
        }
        let inputs = plan.inputs(c);
        let out = window(plan.output(c));
        let spec = match comp.kind {
            ComponentKind::Modulator => {
                let variant = comp.variant.expect("modulator variant");
                let (s1, s2) = variant.modulator_signs();
                let unit = Window { lo: 0.0, hi: 1.0 };
                let left = random_univariate(rng, window(inputs[0].0).flipped(s1), unit, family);
                let right = random_univariate(rng, window(inputs[1].0).flipped(s2), unit, family);
                let outer = random_univariate(rng, Window { lo: 0.0, hi: 2.0 }, out, family);
                ComponentSpec::Modulator(ModulatorSpec {
                    outer,
                    left,
                    right,
                    variant,
                })
            }
            kind => {
                let (so, si) = comp.variant.expect("coupling variant").coupling_signs();
                let input = window(inputs[0].0);
                let (input, output) = match kind {
                    ComponentKind::Integrative => (input, rate(out)),
                    ComponentKind::Differential => (rate(input), out),
                    _ => (input, out),
                };
                ComponentSpec::Univariate(random_univariate(rng, input.flipped(si), output.flipped(so), family))
            }
        };
        model.set_spec_at(c, spec);
    }
    Ok(model)
}

/// Runs the full calibration loop from a seeded random initialization and
/// returns the best model seen.
pub fn calibrate(graph: &Graph, records: &Trajectory, config: &CalibrationConfig) -> Result<CalibrationResult> {
    validate_graph(graph).into_result()?;
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = random_model(graph, records, &config.family, &mut rng)?;
    calibrate_from(init, records, config, &mut rng)
}

/// The calibration loop started from a given model.
pub fn calibrate_from(
    init: Model,
    records: &Trajectory,
    config: &CalibrationConfig,
    rng: &mut dyn RngCore,
) -> Result<CalibrationResult> {
    config.check()?;
    let graph = init.graph().clone();
    let constant_count = count_regression_constants(&graph, &config.family)?;
    let target = config.target_for(&graph);
    let t0 = config.anneal.initial_temperature;
    let mut temperature = t0;

    let mut model = init;
    let mut best_error = total_error(&model, records)?;
    let mut best = model.clone();
    let mut skipped = Vec::new();
    let mut cycles_used = 0;
    for cycle in 1..=config.max_cycles {
        cycles_used = cycle;
        let outcome = regression_cycle(&model, records, &config.family, rng)?;
        model = outcome.model;
        skipped = outcome.skipped;
        let err = total_error(&model, records)?;
        if err < best_error {
            best_error = err;
            best = model.clone();
        }
        if err <= target {
            break;
        }
        temperature = (config.anneal.cooling_factor * temperature).max(1e-9 * t0);
        let step = anneal_step(&model, records, config, temperature, err, rng)?;
        if step.accepted && step.proposed_error < best_error {
            best_error = step.proposed_error;
            best = step.model.clone();
        }
        model = step.model;
    }

    let per_parameter_errors = parameter_errors(&best, records)?;
    let epsilon_hat = max_error(&per_parameter_errors);
    Ok(CalibrationResult {
        model: best,
        epsilon_hat,
        per_parameter_errors,
        cycles_used,
        record_count: records.len(),
        constant_count,
        determinacy_ok: records.len() >= constant_count,
        relevant: epsilon_hat <= target,
        target_error: target,
        skipped,
        seed: config.seed,
    })
}

/// Runs `restarts` calibrations with seeds `seed, seed + 1, ...` in parallel
/// and keeps the lowest total error, the earliest restart on ties.
pub fn calibrate_restarts(
    graph: &Graph,
    records: &Trajectory,
    config: &CalibrationConfig,
    restarts: usize,
) -> Result<CalibrationResult> {
    let restarts = restarts.max(1);
    let results: Vec<Result<CalibrationResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..restarts)
            .map(|r| {
                let cfg = CalibrationConfig {
                    seed: config.seed.wrapping_add(r as u64),
                    ..config.clone()
                };
                s.spawn(move || calibrate(graph, records, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("calibration thread panicked"))
            .collect()
    });
    let mut best: Option<CalibrationResult> = None;
    for r in results {
        let r = r?;
        if best.as_ref().is_none_or(|b| r.epsilon_hat < b.epsilon_hat) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one restart"))
}
