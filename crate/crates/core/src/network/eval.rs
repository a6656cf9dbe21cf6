use super::{Model, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{ComponentKind, NodeId, SignVariant};
use crate::monotone::MonotoneSpec;

/// Node values at one grid point.
///
/// `value` is what consumers see; `net` is what the node's driving component
/// produces (`NaN` for undriven nodes). They differ only for nodes whose value
/// is supplied from outside, such as recorded parameters.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Frame {
    pub value: Vec<f64>,
    pub net: Vec<f64>,
}

pub(crate) struct StepContext<'a> {
    /// Externally supplied node values.
    pub given: &'a dyn Fn(usize) -> Option<f64>,
    /// Integrative outputs at the first grid point.
    pub initial: &'a dyn Fn(usize) -> f64,
    /// Previous frame and the step to it; `None` at the first grid point.
    pub prev: Option<(&'a Frame, f64)>,
    /// Integrative outputs accumulate on their own previous net rather than
    /// on the previous visible value.
    pub open_loop: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum Mark {
    Pending,
    Active,
    Done,
}

struct FrameEval<'m, 'c> {
    model: &'m Model,
    ctx: &'c StepContext<'c>,
    value: Vec<f64>,
    net: Vec<f64>,
    mark: Vec<Mark>,
}

impl FrameEval<'_, '_> {
    fn resolve(&mut self, v: usize) -> Result<f64> {
        match self.mark[v] {
            Mark::Done => return Ok(self.value[v]),
            Mark::Active => return Err(Error::AlgebraicLoop(self.name(v))),
            Mark::Pending => {}
        }
        if let Some(x) = (self.ctx.given)(v) {
            self.value[v] = x;
            self.mark[v] = Mark::Done;
            return Ok(x);
        }
        self.mark[v] = Mark::Active;
        let x = self.compute_net(v)?;
        self.net[v] = x;
        self.value[v] = x;
        self.mark[v] = Mark::Done;
        Ok(x)
    }

    fn name(&self, v: usize) -> String {
        self.model.graph().nodes[v].to_string()
    }

    fn compute_net(&mut self, v: usize) -> Result<f64> {
        let plan = self.model.plan();
        let c = plan.driver[v].ok_or_else(|| Error::UnresolvedNode(self.name(v)))?;
        let comp = &self.model.graph().components[c];
        let inputs = plan.inputs(c);
        Ok(match comp.kind {
            ComponentKind::Summator => {
                let mut sum = 0.0;
                for &(i, s) in inputs {
                    sum += s * self.resolve(i)?;
                }
                sum
            }
            ComponentKind::Modulator => {
                let a = self.resolve(inputs[0].0)?;
                let b = self.resolve(inputs[1].0)?;
                self.model.spec_at(c).modulator().eval(a, b)
            }
            ComponentKind::Synchronous => {
                let (so, si) = signs(comp.variant);
                let x = self.resolve(inputs[0].0)?;
                so * self.model.spec_at(c).univariate().eval(si * x)
            }
            ComponentKind::Differential => {
                let (so, si) = signs(comp.variant);
                let i = inputs[0].0;
                let x = self.resolve(i)?;
                let rate = match self.ctx.prev {
                    Some((pf, dt)) => (x - pf.value[i]) / dt,
                    None => 0.0,
                };
                so * self.model.spec_at(c).univariate().eval(si * rate)
            }
            ComponentKind::Integrative => match self.ctx.prev {
                None => (self.ctx.initial)(v),
                Some((pf, dt)) => {
                    let (so, si) = signs(comp.variant);
                    let base = if self.ctx.open_loop { pf.net[v] } else { pf.value[v] };
                    base + so * self.model.spec_at(c).univariate().eval(si * pf.value[inputs[0].0]) * dt
                }
            },
        })
    }
}

fn signs(variant: Option<SignVariant>) -> (f64, f64) {
    variant.expect("couplings carry a variant").coupling_signs()
}

/// Evaluates every node at one grid point, including the net of every driven
/// node whose value is supplied.
pub(crate) fn eval_frame(model: &Model, ctx: &StepContext<'_>) -> Result<Frame> {
    let n = model.graph().nodes.len();
    let mut ev = FrameEval {
        model,
        ctx,
        value: vec![f64::NAN; n],
        net: vec![f64::NAN; n],
        mark: vec![Mark::Pending; n],
    };
    for v in 0..n {
        ev.resolve(v)?;
    }
    for v in 0..n {
        if model.plan().driver[v].is_some() && ev.net[v].is_nan() {
            ev.net[v] = ev.compute_net(v)?;
        }
    }
    Ok(Frame {
        value: ev.value,
        net: ev.net,
    })
}

/// Forward values of every node over a record set, tagged with the model
/// they were computed from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PassMemo {
    pub(crate) frames: Vec<Frame>,
    pub(crate) grid: Option<TimeGrid>,
    fingerprint: Option<u64>,
}

impl PassMemo {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub(crate) fn is_current(&self, model: &Model, records: &Trajectory) -> bool {
        self.fingerprint == Some(model.fingerprint()) && self.grid.as_ref() == Some(&records.grid)
    }

    /// Value seen by consumers of `node` at index `j`.
    pub fn value(&self, model: &Model, node: &NodeId, j: usize) -> Option<f64> {
        let v = model.node_index(node)?;
        self.frames.get(j).map(|f| f.value[v])
    }

    /// Output of the component driving `node` at index `j`.
    pub fn net(&self, model: &Model, node: &NodeId, j: usize) -> Option<f64> {
        let v = model.node_index(node)?;
        self.frames.get(j).map(|f| f.net[v])
    }

    pub(crate) fn value_series(&self, v: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.value[v]).collect()
    }

    pub(crate) fn net_series(&self, v: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f.net[v]).collect()
    }
}

/// Forward pass over recorded data: observed parameters take their records,
/// everything else is derived from them.
///
/// Integrative outputs start from the first record when observed, from the
/// range midpoint when latent, and from zero otherwise; each accumulates its
/// own net so that a recorded parameter's net is the open-loop integral.
pub fn forward_pass(model: &Model, records: &Trajectory) -> Result<PassMemo> {
    let graph = model.graph();
    let plan = model.plan();
    let n = graph.nodes.len();
    let mut series: Vec<Option<&[f64]>> = vec![None; n];
    for p in graph.parameters.iter().filter(|p| p.observed) {
        let v = model.node_index(&p.node).expect("validated parameter");
        let s = records
            .get(&p.node)
            .ok_or_else(|| Error::RejectedInput(format!("records lack observed parameter `{}`", p.node)))?;
        series[v] = Some(s);
    }
    for p in graph.parameters.iter().filter(|p| !p.observed) {
        let v = model.node_index(&p.node).expect("validated parameter");
        if plan.driver[v].is_none() {
            return Err(Error::RejectedInput(format!(
                "latent parameter `{}` has no driving component",
                p.node
            )));
        }
    }
    let initial = |v: usize| -> f64 {
        if let Some(s) = series[v] {
            return s[0];
        }
        match plan.topo.param_of[v] {
            Some(p) => 0.5 * (graph.parameters[p].min + graph.parameters[p].max),
            None => 0.0,
        }
    };

    let mut frames: Vec<Frame> = Vec::with_capacity(records.len());
    for j in 0..records.len() {
        let given = |v: usize| series[v].map(|s| s[j]);
        let ctx = StepContext {
            given: &given,
            initial: &initial,
            prev: frames.last().map(|f| (f, records.grid.step(j))),
            open_loop: true,
        };
        let frame = eval_frame(model, &ctx)?;
        frames.push(frame);
    }
    Ok(PassMemo {
        frames,
        grid: Some(records.grid.clone()),
        fingerprint: Some(model.fingerprint()),
    })
}

/// Forward value of `node` at index `j`, refreshing `memo` first when it was
/// built from another model or grid.
pub fn forward_node(
    model: &Model,
    records: &Trajectory,
    node: &NodeId,
    j: usize,
    memo: &mut PassMemo,
) -> Result<f64> {
    let v = model
        .node_index(node)
        .ok_or_else(|| Error::UnresolvedNode(node.to_string()))?;
    if j >= records.len() {
        return Err(Error::RejectedInput(format!("index {j} beyond {} records", records.len())));
    }
    if !memo.is_current(model, records) {
        *memo = forward_pass(model, records)?;
    }
    Ok(memo.frames[j].value[v])
}

/// Central difference inside the grid, one-sided at both ends.
pub fn finite_difference(series: &[f64], grid: &TimeGrid, j: usize) -> Result<f64> {
    let c = grid.len();
    if c < 2 || series.len() < c {
        return Err(Error::InsufficientSamples {
            required: 2,
            available: c.min(series.len()),
        });
    }
    let t = grid.points();
    let (a, b) = if j == 0 {
        (0, 1)
    } else if j + 1 >= c {
        (c - 2, c - 1)
    } else {
        (j - 1, j + 1)
    };
    Ok((series[b] - series[a]) / (t[b] - t[a]))
}

/// Backward difference `(x[j] - x[j-1]) / dt`; zero at `j = 0`. This is the
/// rate a differential coupling sees during stepped evaluation.
pub fn causal_difference(series: &[f64], grid: &TimeGrid, j: usize) -> f64 {
    if j == 0 {
        0.0
    } else {
        (series[j] - series[j - 1]) / grid.step(j)
    }
}

/// Explicit Euler integral of an integrative coupling driven by `input`.
pub fn integrate_coupling(
    spec: &MonotoneSpec,
    variant: SignVariant,
    input: &[f64],
    grid: &TimeGrid,
    x0: f64,
) -> Vec<f64> {
    let (so, si) = variant.coupling_signs();
    let mut out = Vec::with_capacity(grid.len());
    if grid.is_empty() {
        return out;
    }
    out.push(x0);
    for j in 1..grid.len() {
        let prev = out[j - 1];
        out.push(prev + so * spec.eval(si * input[j - 1]) * grid.step(j));
    }
    out
}
