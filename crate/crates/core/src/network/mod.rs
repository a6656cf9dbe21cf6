//! Fully specified models and their evaluation over a discrete time grid.
//!
//! Time is discretized explicitly: an integrative coupling advances its
//! output by an Euler step from the previous grid point, a differential
//! coupling sees the backward difference of its input (zero at the first
//! point), and all other components act within a single grid point.

mod backward;
mod eval;

pub use backward::{backward_node, BackwardPass};
pub use eval::{causal_difference, finite_difference, forward_node, forward_pass, integrate_coupling, PassMemo};
pub(crate) use eval::{eval_frame, Frame, StepContext};

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, VecDeque};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{validate_graph, ComponentId, ComponentKind, Graph, NodeId, Topology};
use crate::monotone::{FamilyConfig, ModulatorSpec, MonotoneSpec};

/// Strictly ascending time points.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    t: Vec<f64>,
}

impl TimeGrid {
    pub fn new(t: Vec<f64>) -> Result<Self> {
        for (i, w) in t.windows(2).enumerate() {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(w[1] > w[0]) {
                return Err(Error::NonAscendingGrid { index: i + 1 });
            }
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::RejectedInput(format!("time point {i} is not finite")));
        }
        Ok(TimeGrid { t })
    }

    pub fn uniform(start: f64, step: f64, count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| start + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.t
    }

    /// `t[j] - t[j-1]`; requires `j >= 1`.
    pub fn step(&self, j: usize) -> f64 {
        self.t[j] - self.t[j - 1]
    }
}

/// Per-node value series on a shared grid. `NaN` marks an unknown entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    columns: Vec<(NodeId, Vec<f64>)>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid) -> Self {
        Trajectory {
            grid,
            columns: Vec::new(),
        }
    }

    /// Adds or replaces a series.
    pub fn insert(&mut self, node: impl Into<NodeId>, values: Vec<f64>) -> Result<()> {
        let node = node.into();
        if values.len() != self.grid.len() {
            return Err(Error::RejectedInput(format!(
                "series `{node}` has {} values for a grid of {}",
                values.len(),
                self.grid.len()
            )));
        }
        match self.columns.iter_mut().find(|(n, _)| *n == node) {
            Some(slot) => slot.1 = values,
            None => self.columns.push((node, values)),
        }
        Ok(())
    }

    pub fn with(mut self, node: impl Into<NodeId>, values: Vec<f64>) -> Result<Self> {
        self.insert(node, values)?;
        Ok(self)
    }

    pub fn get(&self, node: &NodeId) -> Option<&[f64]> {
        self.columns.iter().find(|(n, _)| n == node).map(|(_, v)| v.as_slice())
    }

    pub fn names(&self) -> impl Iterator<Item = &NodeId> {
        self.columns.iter().map(|(n, _)| n)
    }

    pub fn columns(&self) -> impl Iterator<Item = (&NodeId, &[f64])> {
        self.columns.iter().map(|(n, v)| (n, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ComponentSpec {
    Univariate(MonotoneSpec),
    Modulator(ModulatorSpec),
}

impl ComponentSpec {
    pub fn constants(&self) -> Vec<f64> {
        match self {
            ComponentSpec::Univariate(s) => s.constants(),
            ComponentSpec::Modulator(s) => s.constants(),
        }
    }

    pub fn constant_count(&self) -> usize {
        match self {
            ComponentSpec::Univariate(s) => s.constant_count(),
            ComponentSpec::Modulator(s) => s.constant_count(),
        }
    }

    pub fn clamp_constraints(&self, family: &FamilyConfig) -> Self {
        match self {
            ComponentSpec::Univariate(s) => ComponentSpec::Univariate(s.clamp_constraints(family)),
            ComponentSpec::Modulator(s) => ComponentSpec::Modulator(s.clamp_constraints(family)),
        }
    }

    pub fn satisfies(&self, family: &FamilyConfig) -> bool {
        match self {
            ComponentSpec::Univariate(s) => s.satisfies(family),
            ComponentSpec::Modulator(s) => s.satisfies(family),
        }
    }

    /// Same layout, constants replaced.
    pub fn with_constants(&self, k: &[f64]) -> Result<Self> {
        if k.len() != self.constant_count() {
            return Err(Error::RejectedInput(format!(
                "expected {} constants, got {}",
                self.constant_count(),
                k.len()
            )));
        }
        Ok(match self {
            ComponentSpec::Univariate(_) => ComponentSpec::Univariate(MonotoneSpec::from_constants(k)?),
            ComponentSpec::Modulator(s) => ComponentSpec::Modulator(ModulatorSpec::from_constants(s.variant, k)?),
        })
    }

    pub(crate) fn univariate(&self) -> &MonotoneSpec {
        match self {
            ComponentSpec::Univariate(s) => s,
            ComponentSpec::Modulator(_) => unreachable!("kind checked at model construction"),
        }
    }

    pub(crate) fn modulator(&self) -> &ModulatorSpec {
        match self {
            ComponentSpec::Modulator(s) => s,
            ComponentSpec::Univariate(_) => unreachable!("kind checked at model construction"),
        }
    }
}

/// Graph-derived lookup tables shared by every pass over a model.
#[derive(Debug)]
pub(crate) struct Plan {
    pub topo: Topology,
    pub driver: Vec<Option<usize>>,
    pub observed: Vec<bool>,
    /// Distance, in components, to the nearest observed parameter downstream.
    pub rank: Vec<Option<usize>>,
    /// Calibratable components, inputs before outputs.
    pub order: Vec<usize>,
}

impl Plan {
    fn new(graph: &Graph) -> Self {
        let topo = Topology::new(graph);
        let n = topo.node_count();
        let driver: Vec<Option<usize>> = topo.drivers.iter().map(|d| d.first().copied()).collect();
        let observed: Vec<bool> = (0..n)
            .map(|v| topo.param_of[v].is_some_and(|p| graph.parameters[p].observed))
            .collect();

        let mut rank = vec![None; n];
        let mut queue = VecDeque::new();
        for v in 0..n {
            if observed[v] {
                rank[v] = Some(0);
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            let r = rank[v].expect("queued nodes are ranked");
            if let Some(c) = driver[v] {
                let (inputs, _) = topo.wiring[c].as_ref().expect("validated wiring");
                for &(i, _) in inputs {
                    if rank[i].is_none() {
                        rank[i] = Some(r + 1);
                        queue.push_back(i);
                    }
                }
            }
        }

        // Kahn order over same-step dependencies; observed parameters and
        // integrative outputs do not wait for their drivers.
        let mut indegree = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for (c, comp) in graph.components.iter().enumerate() {
            let Some((inputs, out)) = &topo.wiring[c] else { continue };
            if comp.kind == ComponentKind::Integrative || observed[*out] {
                continue;
            }
            for &(i, _) in inputs {
                succ[i].push(*out);
                indegree[*out] += 1;
            }
        }
        let mut ready: VecDeque<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut position = vec![usize::MAX; n];
        let mut next = 0;
        while let Some(v) = ready.pop_front() {
            position[v] = next;
            next += 1;
            for &w in &succ[v] {
                indegree[w] -= 1;
                if indegree[w] == 0 {
                    ready.push_back(w);
                }
            }
        }
        let mut order: Vec<usize> = (0..graph.components.len())
            .filter(|&c| graph.components[c].kind.is_calibratable() && topo.wiring[c].is_some())
            .collect();
        order.sort_by_key(|&c| (position[topo.wiring[c].as_ref().unwrap().1], c));

        Plan {
            topo,
            driver,
            observed,
            rank,
            order,
        }
    }

    pub fn inputs(&self, c: usize) -> &[(usize, f64)] {
        &self.topo.wiring[c].as_ref().expect("validated wiring").0
    }

    pub fn output(&self, c: usize) -> usize {
        self.topo.wiring[c].as_ref().expect("validated wiring").1
    }
}

/// A validated graph with one spec per calibratable component.
#[derive(Clone, Debug)]
pub struct Model {
    graph: Arc<Graph>,
    plan: Arc<Plan>,
    specs: Vec<Option<ComponentSpec>>,
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.graph == other.graph && self.specs == other.specs
    }
}

impl Model {
    pub fn new(graph: Graph, specs: BTreeMap<ComponentId, ComponentSpec>) -> Result<Self> {
        validate_graph(&graph).into_result()?;
        for id in specs.keys() {
            match graph.component(id) {
                Some(c) if c.kind.is_calibratable() => {}
                Some(_) => {
                    return Err(Error::SpecMismatch {
                        component: id.to_string(),
                        reason: "summators take no constants".into(),
                    })
                }
                None => return Err(Error::UnresolvedNode(id.to_string())),
            }
        }
        let mut slots = vec![None; graph.components.len()];
        for (i, c) in graph.components.iter().enumerate() {
            if !c.kind.is_calibratable() {
                continue;
            }
            let spec = specs.get(&c.id).ok_or_else(|| Error::MissingSpec(c.id.to_string()))?;
            check_spec_kind(c, spec)?;
            slots[i] = Some(spec.clone());
        }
        let plan = Arc::new(Plan::new(&graph));
        Ok(Model {
            graph: Arc::new(graph),
            plan,
            specs: slots,
        })
    }

    /// Every calibratable component set to the identity, padded with
    /// zero-weight terms to the family's shape.
    pub fn identity(graph: Graph, family: &FamilyConfig) -> Result<Self> {
        let unit = MonotoneSpec::affine_in_family(1.0, 0.0, family);
        let specs = graph
            .components
            .iter()
            .filter(|c| c.kind.is_calibratable())
            .map(|c| {
                let spec = match c.kind {
                    ComponentKind::Modulator => ComponentSpec::Modulator(ModulatorSpec {
                        outer: unit.clone(),
                        left: unit.clone(),
                        right: unit.clone(),
                        variant: c.variant.expect("modulators carry a variant"),
                    }),
                    _ => ComponentSpec::Univariate(unit.clone()),
                };
                (c.id.clone(), spec)
            })
            .collect();
        Self::new(graph, specs)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub(crate) fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn spec(&self, id: &ComponentId) -> Option<&ComponentSpec> {
        let i = self.graph.components.iter().position(|c| &c.id == id)?;
        self.specs[i].as_ref()
    }

    /// Specs in component declaration order.
    pub fn specs(&self) -> impl Iterator<Item = (&ComponentId, &ComponentSpec)> {
        self.graph
            .components
            .iter()
            .zip(&self.specs)
            .filter_map(|(c, s)| s.as_ref().map(|s| (&c.id, s)))
    }

    pub fn set_spec(&mut self, id: &ComponentId, spec: ComponentSpec) -> Result<()> {
        let i = self
            .graph
            .components
            .iter()
            .position(|c| &c.id == id)
            .ok_or_else(|| Error::UnresolvedNode(id.to_string()))?;
        if !self.graph.components[i].kind.is_calibratable() {
            return Err(Error::SpecMismatch {
                component: id.to_string(),
                reason: "summators take no constants".into(),
            });
        }
        check_spec_kind(&self.graph.components[i], &spec)?;
        self.specs[i] = Some(spec);
        Ok(())
    }

    pub(crate) fn spec_at(&self, c: usize) -> &ComponentSpec {
        self.specs[c].as_ref().expect("calibratable components carry specs")
    }

    pub(crate) fn set_spec_at(&mut self, c: usize, spec: ComponentSpec) {
        self.specs[c] = Some(spec);
    }

    pub fn constant_count(&self) -> usize {
        self.specs.iter().flatten().map(ComponentSpec::constant_count).sum()
    }

    pub fn satisfies(&self, family: &FamilyConfig) -> bool {
        self.specs.iter().flatten().all(|s| s.satisfies(family))
    }

    pub(crate) fn node_index(&self, node: &NodeId) -> Option<usize> {
        self.plan.topo.index.get(node).copied()
    }

    /// Hash of every constant's bit pattern; identifies the model a memo was
    /// built from.
    pub(crate) fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for spec in self.specs.iter().flatten() {
            for k in spec.constants() {
                k.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

fn check_spec_kind(c: &crate::graph::Component, spec: &ComponentSpec) -> Result<()> {
    let mismatch = |reason: &str| {
        Err(Error::SpecMismatch {
            component: c.id.to_string(),
            reason: reason.into(),
        })
    };
    match (c.kind, spec) {
        (ComponentKind::Modulator, ComponentSpec::Modulator(m)) => {
            if Some(m.variant) != c.variant {
                return mismatch("modulator variant differs from the graph");
            }
            if m.outer.terms.len() != m.left.terms.len() || m.left.terms.len() != m.right.terms.len() {
                return mismatch("modulator legs differ in term count");
            }
            Ok(())
        }
        (ComponentKind::Modulator, _) => mismatch("a modulator needs a bivariate spec"),
        (_, ComponentSpec::Univariate(_)) => Ok(()),
        _ => mismatch("a coupling needs a univariate spec"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Component, ParameterDecl, SignVariant};

    #[test]
    fn grid_rejects_repeats() {
        assert!(matches!(
            TimeGrid::new(vec![1.0, 1.0, 2.0]),
            Err(Error::NonAscendingGrid { index: 1 })
        ));
        assert_eq!(TimeGrid::uniform(0.0, 0.5, 3).unwrap().points(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn trajectory_checks_length() {
        let mut t = Trajectory::new(TimeGrid::uniform(0.0, 1.0, 3).unwrap());
        assert!(t.insert("a", vec![1.0, 2.0]).is_err());
        t.insert("a", vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(t.get(&NodeId::new("a")).unwrap(), &[1.0, 2.0, 3.0]);
    }

    fn chain() -> Graph {
        Graph {
            parameters: vec![ParameterDecl::new("p", 0.0, 1.0), ParameterDecl::new("q", 0.0, 1.0)],
            nodes: vec!["p".into(), "q".into()],
            components: vec![Component::coupling(
                "u1",
                ComponentKind::Synchronous,
                SignVariant::PP,
                "p",
                "q",
            )],
        }
    }

    #[test]
    fn model_requires_every_spec() {
        assert!(matches!(Model::new(chain(), BTreeMap::new()), Err(Error::MissingSpec(_))));
        let m = Model::identity(chain(), &FamilyConfig::default()).unwrap();
        assert_eq!(m.constant_count(), 5);
    }

    #[test]
    fn model_rejects_wrong_spec_kind() {
        let mut specs = BTreeMap::new();
        specs.insert(
            ComponentId::new("u1"),
            ComponentSpec::Modulator(ModulatorSpec::identity(SignVariant::PP)),
        );
        assert!(matches!(Model::new(chain(), specs), Err(Error::SpecMismatch { .. })));
    }
}
