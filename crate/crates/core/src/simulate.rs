//! Deterministic forward simulation of a fully specified model.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{ComponentId, Graph, NodeId};
use crate::network::{eval_frame, ComponentSpec, Frame, Model, StepContext, Trajectory};

/// Simulates `graph` with explicit specs. See [`simulate_model`].
pub fn simulate(
    graph: Graph,
    specs: BTreeMap<ComponentId, ComponentSpec>,
    exogenous: &Trajectory,
    initial: &BTreeMap<NodeId, f64>,
) -> Result<Trajectory> {
    simulate_model(&Model::new(graph, specs)?, exogenous, initial)
}

/// Evaluates every node on the exogenous grid.
///
/// Parameters without a driving component take their exogenous series.
/// Integrative outputs start from `initial`, else from their range midpoint
/// when they are parameters, else from zero. Values are never clamped.
pub fn simulate_model(model: &Model, exogenous: &Trajectory, initial: &BTreeMap<NodeId, f64>) -> Result<Trajectory> {
    let graph = model.graph();
    let plan = model.plan();
    let n = graph.nodes.len();
    let mut inputs: Vec<Option<&[f64]>> = vec![None; n];
    for p in &graph.parameters {
        let v = model.node_index(&p.node).expect("validated parameter");
        if plan.driver[v].is_none() {
            let s = exogenous.get(&p.node).ok_or_else(|| {
                Error::RejectedInput(format!("exogenous series for parameter `{}` is missing", p.node))
            })?;
            inputs[v] = Some(s);
        }
    }
    let start: Vec<f64> = (0..n)
        .map(|v| {
            let node = &graph.nodes[v];
            initial.get(node).copied().unwrap_or_else(|| match plan.topo.param_of[v] {
                Some(p) => 0.5 * (graph.parameters[p].min + graph.parameters[p].max),
                None => 0.0,
            })
        })
        .collect();
    let init = |v: usize| start[v];

    let mut frames: Vec<Frame> = Vec::with_capacity(exogenous.len());
    for j in 0..exogenous.len() {
        let given = |v: usize| inputs[v].map(|s| s[j]);
        let ctx = StepContext {
            given: &given,
            initial: &init,
            prev: frames.last().map(|f| (f, exogenous.grid.step(j))),
            open_loop: false,
        };
        frames.push(eval_frame(model, &ctx)?);
    }
    let mut out = Trajectory::new(exogenous.grid.clone());
    for (v, node) in graph.nodes.iter().enumerate() {
        out.insert(node.clone(), frames.iter().map(|f| f.value[v]).collect())?;
    }
    Ok(out)
}

/// Observed-parameter columns only, in declaration order: the shape of a
/// record file.
pub fn observed_records(graph: &Graph, trajectory: &Trajectory) -> Result<Trajectory> {
    let mut out = Trajectory::new(trajectory.grid.clone());
    for p in graph.parameters.iter().filter(|p| p.observed) {
        let s = trajectory
            .get(&p.node)
            .ok_or_else(|| Error::UnresolvedNode(p.node.to_string()))?;
        out.insert(p.node.clone(), s.to_vec())?;
    }
    Ok(out)
}
