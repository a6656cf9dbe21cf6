//! Graph data model for parameters, bilateral couplings and operators, and the
//! structural well-formedness rules a graph must satisfy before it can be
//! calibrated.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::monotone::FamilyConfig;

/// Identifier of a state variable. Unique within a graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(id: impl Into<String>) -> Self {
        ComponentId(id.into())
    }

    /// Positional id used by the text format: `u1`, `u2`, ...
    pub fn positional(index: usize) -> Self {
        ComponentId(format!("u{}", index + 1))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId(s.to_string())
    }
}

/// A parameter: a state variable with a declared value range, either measured
/// (`observed`) or latent.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterDecl {
    pub node: NodeId,
    pub min: f64,
    pub max: f64,
    pub observed: bool,
}

impl ParameterDecl {
    pub fn new(node: impl Into<String>, min: f64, max: f64) -> Self {
        ParameterDecl {
            node: NodeId::new(node),
            min,
            max,
            observed: true,
        }
    }

    pub fn latent(mut self) -> Self {
        self.observed = false;
        self
    }

    pub fn name(&self) -> &str {
        self.node.as_str()
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

/// Two-character sign tag of a coupling or modulator (`++`, `+-`, `-+`, `--`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignVariant {
    PP,
    PM,
    MP,
    MM,
}

impl SignVariant {
    pub fn parse(tag: &str) -> Option<Self> {
        match tag {
            "++" => Some(SignVariant::PP),
            "+-" => Some(SignVariant::PM),
            "-+" => Some(SignVariant::MP),
            "--" => Some(SignVariant::MM),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            SignVariant::PP => "++",
            SignVariant::PM => "+-",
            SignVariant::MP => "-+",
            SignVariant::MM => "--",
        }
    }

    pub fn is_legal_for(self, kind: ComponentKind) -> bool {
        match kind {
            ComponentKind::Integrative | ComponentKind::Synchronous | ComponentKind::Differential => {
                matches!(self, SignVariant::PP | SignVariant::PM | SignVariant::MP)
            }
            ComponentKind::Modulator => {
                matches!(self, SignVariant::PP | SignVariant::PM | SignVariant::MM)
            }
            ComponentKind::Summator => false,
        }
    }

    /// `(output sign, input sign)` of a bilateral coupling: the coupling
    /// computes `out_sign * g(in_sign * x)` for its increasing m-function `g`.
    pub fn coupling_signs(self) -> (f64, f64) {
        match self {
            SignVariant::PP => (1.0, 1.0),
            SignVariant::PM => (-1.0, 1.0),
            SignVariant::MP => (1.0, -1.0),
            SignVariant::MM => (-1.0, -1.0),
        }
    }

    /// Signs applied to the first and second modulator inputs.
    pub fn modulator_signs(self) -> (f64, f64) {
        match self {
            SignVariant::PP => (1.0, 1.0),
            SignVariant::PM => (1.0, -1.0),
            SignVariant::MP => (-1.0, 1.0),
            SignVariant::MM => (-1.0, -1.0),
        }
    }
}

impl fmt::Display for SignVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    Integrative,
    Synchronous,
    Differential,
    Summator,
    Modulator,
}

impl ComponentKind {
    pub fn is_bilateral(self) -> bool {
        matches!(
            self,
            ComponentKind::Integrative | ComponentKind::Synchronous | ComponentKind::Differential
        )
    }

    /// Bilateral couplings and modulators carry regression constants;
    /// summators are fully defined by their signs.
    pub fn is_calibratable(self) -> bool {
        self != ComponentKind::Summator
    }

    pub fn keyword(self) -> &'static str {
        match self {
            ComponentKind::Integrative => "integrative",
            ComponentKind::Synchronous => "synchronous",
            ComponentKind::Differential => "differential",
            ComponentKind::Summator => "summator",
            ComponentKind::Modulator => "modulator",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub id: ComponentId,
    pub kind: ComponentKind,
    /// Absent for summators.
    pub variant: Option<SignVariant>,
    /// Bilateral couplings and modulators carry `Sign::Plus` on every input;
    /// summator inputs carry their own sign.
    pub inputs: Vec<(NodeId, Sign)>,
    pub output: NodeId,
}

impl Component {
    pub fn coupling(
        id: impl Into<String>,
        kind: ComponentKind,
        variant: SignVariant,
        from: impl Into<String>,
        to: impl Into<String>,
    ) -> Self {
        Component {
            id: ComponentId::new(id),
            kind,
            variant: Some(variant),
            inputs: vec![(NodeId::new(from), Sign::Plus)],
            output: NodeId::new(to),
        }
    }

    pub fn modulator(
        id: impl Into<String>,
        variant: SignVariant,
        in1: impl Into<String>,
        in2: impl Into<String>,
        output: impl Into<String>,
    ) -> Self {
        Component {
            id: ComponentId::new(id),
            kind: ComponentKind::Modulator,
            variant: Some(variant),
            inputs: vec![(NodeId::new(in1), Sign::Plus), (NodeId::new(in2), Sign::Plus)],
            output: NodeId::new(output),
        }
    }

    pub fn summator(id: impl Into<String>, output: impl Into<String>, inputs: &[(&str, Sign)]) -> Self {
        Component {
            id: ComponentId::new(id),
            kind: ComponentKind::Summator,
            variant: None,
            inputs: inputs.iter().map(|(n, s)| (NodeId::new(*n), *s)).collect(),
            output: NodeId::new(output),
        }
    }

    fn has_input(&self, node: &NodeId) -> bool {
        self.inputs.iter().any(|(n, _)| n == node)
    }
}

/// An uncalibrated hypothesis: parameters, internal nodes and their wiring.
///
/// `nodes` lists every state variable, parameters included.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Graph {
    pub parameters: Vec<ParameterDecl>,
    pub nodes: Vec<NodeId>,
    pub components: Vec<Component>,
}

impl Graph {
    pub fn parameter(&self, node: &NodeId) -> Option<&ParameterDecl> {
        self.parameters.iter().find(|p| &p.node == node)
    }

    pub fn component(&self, id: &ComponentId) -> Option<&Component> {
        self.components.iter().find(|c| &c.id == id)
    }

    pub fn calibratable(&self) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(|c| c.kind.is_calibratable())
    }

    /// The widest declared parameter range, or 0 for a graph without
    /// parameters.
    pub fn widest_range(&self) -> f64 {
        self.parameters.iter().map(ParameterDecl::span).fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    DuplicateNode,
    UnknownNode,
    DegenerateRange,
    Arity,
    IllegalVariant,
    DirectFeedback,
    /// A node is the output of at most one component.
    OutputUniqueness,
    /// Every component input is driven by a component output or a parameter.
    UndrivenInput,
    /// Every component output feeds a component input or is a parameter.
    DanglingOutput,
    /// Every component output can be derived from at least one parameter.
    UnreachableOutput,
    /// Every node admits a forward and a backward derivation.
    NotComputable,
    /// Directed cycles must pass through an integrative coupling or an
    /// observed parameter.
    AlgebraicCycle,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::DuplicateNode => "duplicate-node",
            Rule::UnknownNode => "unknown-node",
            Rule::DegenerateRange => "degenerate-range",
            Rule::Arity => "arity",
            Rule::IllegalVariant => "illegal-variant",
            Rule::DirectFeedback => "direct-feedback",
            Rule::OutputUniqueness => "output-uniqueness",
            Rule::UndrivenInput => "undriven-input",
            Rule::DanglingOutput => "dangling-output",
            Rule::UnreachableOutput => "unreachable-output",
            Rule::NotComputable => "not-computable",
            Rule::AlgebraicCycle => "algebraic-cycle",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub component: Option<ComponentId>,
    pub node: Option<NodeId>,
    pub message: String,
}

impl Violation {
    fn on_node(rule: Rule, node: &NodeId, message: String) -> Self {
        Violation {
            rule,
            component: None,
            node: Some(node.clone()),
            message,
        }
    }

    fn on_component(rule: Rule, c: &Component, message: String) -> Self {
        Violation {
            rule,
            component: Some(c.id.clone()),
            node: None,
            message,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.rule)?;
        if let Some(c) = &self.component {
            write!(f, " component {c}")?;
        }
        if let Some(n) = &self.node {
            write!(f, " node {n}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn rules(&self) -> BTreeSet<Rule> {
        self.violations.iter().map(|v| v.rule).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGraph(self.violations))
        }
    }
}

/// Resolved `(input node, sign)` list and output node of one component.
pub(crate) type Wiring = (Vec<(usize, f64)>, usize);

/// Index-based view of the resolvable part of a graph.
#[derive(Clone, Debug)]
pub(crate) struct Topology {
    pub index: HashMap<NodeId, usize>,
    /// `None` where a component references an unknown node.
    pub wiring: Vec<Option<Wiring>>,
    pub drivers: Vec<Vec<usize>>,
    pub consumers: Vec<Vec<usize>>,
    pub param_of: Vec<Option<usize>>,
}

impl Topology {
    pub fn new(graph: &Graph) -> Self {
        let mut index = HashMap::new();
        for (i, n) in graph.nodes.iter().enumerate() {
            index.entry(n.clone()).or_insert(i);
        }
        let n = graph.nodes.len();
        let mut drivers = vec![Vec::new(); n];
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut wiring = Vec::with_capacity(graph.components.len());
        for (ci, c) in graph.components.iter().enumerate() {
            let inputs: Option<Vec<(usize, f64)>> = c
                .inputs
                .iter()
                .map(|(node, s)| index.get(node).map(|&i| (i, s.value())))
                .collect();
            let output = index.get(&c.output).copied();
            match (inputs, output) {
                (Some(inputs), Some(output)) => {
                    drivers[output].push(ci);
                    for &(i, _) in &inputs {
                        if !consumers[i].contains(&ci) {
                            consumers[i].push(ci);
                        }
                    }
                    wiring.push(Some((inputs, output)));
                }
                _ => wiring.push(None),
            }
        }
        let mut param_of = vec![None; n];
        for (pi, p) in graph.parameters.iter().enumerate() {
            if let Some(&i) = index.get(&p.node) {
                param_of[i].get_or_insert(pi);
            }
        }
        Topology {
            index,
            wiring,
            drivers,
            consumers,
            param_of,
        }
    }

    pub fn node_count(&self) -> usize {
        self.drivers.len()
    }
}

/// Checks every structural rule and reports each violation. Never fails.
pub fn validate_graph(graph: &Graph) -> ValidationReport {
    let mut out = Vec::new();

    let mut seen = HashMap::new();
    for n in &graph.nodes {
        if seen.insert(n.clone(), ()).is_some() {
            out.push(Violation::on_node(Rule::DuplicateNode, n, "declared more than once".into()));
        }
    }
    let mut seen_params = HashMap::new();
    for p in &graph.parameters {
        if !seen.contains_key(&p.node) {
            out.push(Violation::on_node(
                Rule::UnknownNode,
                &p.node,
                "parameter node is not declared".into(),
            ));
        }
        if seen_params.insert(p.node.clone(), ()).is_some() {
            out.push(Violation::on_node(
                Rule::DuplicateNode,
                &p.node,
                "parameter declared more than once".into(),
            ));
        }
        // also catches NaN bounds
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(p.min < p.max) {
            out.push(Violation::on_node(
                Rule::DegenerateRange,
                &p.node,
                format!("range [{}, {}] is empty or degenerate", p.min, p.max),
            ));
        }
    }

    for c in &graph.components {
        for node in c.inputs.iter().map(|(n, _)| n).chain(std::iter::once(&c.output)) {
            if !seen.contains_key(node) {
                out.push(Violation {
                    rule: Rule::UnknownNode,
                    component: Some(c.id.clone()),
                    node: Some(node.clone()),
                    message: "reference to an undeclared node".into(),
                });
            }
        }
        let arity_ok = match c.kind {
            k if k.is_bilateral() => c.inputs.len() == 1,
            ComponentKind::Modulator => c.inputs.len() == 2,
            _ => c.inputs.len() >= 2,
        };
        if !arity_ok {
            out.push(Violation::on_component(
                Rule::Arity,
                c,
                format!("{} with {} input(s)", c.kind, c.inputs.len()),
            ));
        }
        match (c.kind, c.variant) {
            (ComponentKind::Summator, None) => {}
            (ComponentKind::Summator, Some(v)) => out.push(Violation::on_component(
                Rule::IllegalVariant,
                c,
                format!("summators carry no variant, found `{v}`"),
            )),
            (kind, None) => out.push(Violation::on_component(
                Rule::IllegalVariant,
                c,
                format!("{kind} requires a variant"),
            )),
            (kind, Some(v)) if !v.is_legal_for(kind) => out.push(Violation::on_component(
                Rule::IllegalVariant,
                c,
                format!("variant `{v}` is not allowed for a {kind}"),
            )),
            _ => {}
        }
        let no_feedback = matches!(
            c.kind,
            ComponentKind::Synchronous | ComponentKind::Summator | ComponentKind::Modulator
        );
        if no_feedback && c.has_input(&c.output) {
            out.push(Violation::on_component(
                Rule::DirectFeedback,
                c,
                format!("{} output `{}` feeds its own input", c.kind, c.output),
            ));
        }
    }

    structural_rules(graph, &Topology::new(graph), &mut out);
    ValidationReport { violations: out }
}

fn structural_rules(graph: &Graph, topo: &Topology, out: &mut Vec<Violation>) {
    let n = topo.node_count();
    let is_param = |i: usize| topo.param_of[i].is_some();
    let wired = || {
        topo.wiring
            .iter()
            .enumerate()
            .filter_map(|(ci, w)| w.as_ref().map(|(ins, o)| (ci, ins, *o)))
    };

    for (i, d) in topo.drivers.iter().enumerate() {
        if d.len() > 1 {
            let ids: Vec<_> = d.iter().map(|&c| graph.components[c].id.to_string()).collect();
            out.push(Violation::on_node(
                Rule::OutputUniqueness,
                &graph.nodes[i],
                format!("output of {} components ({})", d.len(), ids.join(", ")),
            ));
        }
    }

    // Undriven inputs are reported once and then treated as sources, so the
    // derived reachability and computability checks do not repeat them.
    let mut source = vec![false; n];
    for (i, src) in source.iter_mut().enumerate() {
        if is_param(i) {
            *src = true;
        } else if topo.drivers[i].is_empty() && !topo.consumers[i].is_empty() {
            *src = true;
            out.push(Violation::on_node(
                Rule::UndrivenInput,
                &graph.nodes[i],
                "component input is neither a parameter nor any component's output".into(),
            ));
        }
    }

    let mut dangling = vec![false; n];
    for (ci, _, o) in wired() {
        if !is_param(o) && topo.consumers[o].is_empty() && !dangling[o] {
            dangling[o] = true;
            out.push(Violation::on_component(
                Rule::DanglingOutput,
                &graph.components[ci],
                format!("output `{}` feeds nothing and is not a parameter", graph.nodes[o]),
            ));
        }
    }

    let mut reached = source.clone();
    loop {
        let mut changed = false;
        for (_, ins, o) in wired() {
            if !reached[o] && ins.iter().any(|&(i, _)| reached[i]) {
                reached[o] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut unreachable_comp = vec![false; graph.components.len()];
    for (ci, ins, _) in wired() {
        if !ins.iter().any(|&(i, _)| reached[i]) {
            unreachable_comp[ci] = true;
            out.push(Violation::on_component(
                Rule::UnreachableOutput,
                &graph.components[ci],
                "output cannot be derived from any parameter".into(),
            ));
        }
    }
    let explained = |i: usize| {
        !topo.drivers[i].is_empty() && topo.drivers[i].iter().all(|&c| unreachable_comp[c])
    };

    // Forward derivation: greatest fixed point inside the reached set, so
    // loops closed through integrative couplings stay computable.
    let mut forward = reached.clone();
    loop {
        let mut changed = false;
        for i in 0..n {
            if forward[i] && !source[i] {
                let ok = topo.drivers[i].iter().any(|&c| {
                    topo.wiring[c]
                        .as_ref()
                        .is_some_and(|(ins, _)| ins.iter().all(|&(x, _)| forward[x]))
                });
                if !ok {
                    forward[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    // Backward derivation: least fixed point from parameters through
    // consumers. Dangling outputs are already reported above.
    let mut backward: Vec<bool> = (0..n).map(|i| is_param(i) || dangling[i]).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            if !backward[i]
                && topo.consumers[i]
                    .iter()
                    .any(|&c| topo.wiring[c].as_ref().is_some_and(|(_, o)| backward[*o]))
            {
                backward[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for i in 0..n {
        if explained(i) {
            continue;
        }
        let (f, b) = (forward[i], backward[i]);
        if f && b {
            continue;
        }
        let what = match (f, b) {
            (false, false) => "neither forward nor backward derivable",
            (false, true) => "not forward derivable from parameters",
            _ => "no backward derivation path to a parameter",
        };
        out.push(Violation::on_node(Rule::NotComputable, &graph.nodes[i], what.into()));
    }

    let observed = |i: usize| topo.param_of[i].is_some_and(|p| graph.parameters[p].observed);
    let mut dg = DiGraph::<usize, ()>::new();
    let handles: Vec<_> = (0..n).map(|i| dg.add_node(i)).collect();
    for (ci, ins, o) in wired() {
        let c = &graph.components[ci];
        if c.kind == ComponentKind::Integrative || observed(o) {
            continue;
        }
        for &(i, _) in ins {
            if observed(i) || (i == o && c.kind != ComponentKind::Differential) {
                continue;
            }
            dg.add_edge(handles[i], handles[o], ());
        }
    }
    let mut cycles: Vec<Vec<usize>> = petgraph::algo::tarjan_scc(&dg)
        .into_iter()
        .map(|scc| {
            let mut v: Vec<usize> = scc.into_iter().map(|h| dg[h]).collect();
            v.sort_unstable();
            v
        })
        .filter(|v| v.len() > 1 || dg.contains_edge(handles[v[0]], handles[v[0]]))
        .collect();
    cycles.sort();
    for cyc in cycles {
        let names: Vec<_> = cyc.iter().map(|&i| graph.nodes[i].to_string()).collect();
        out.push(Violation::on_node(
            Rule::AlgebraicCycle,
            &graph.nodes[cyc[0]],
            format!(
                "cycle through {} without an integrative coupling or observed parameter",
                names.join(" -> ")
            ),
        ));
    }
}

/// Total number of regression constants over all calibratable components.
pub fn count_regression_constants(graph: &Graph, family: &FamilyConfig) -> Result<usize> {
    validate_graph(graph).into_result()?;
    Ok(graph
        .components
        .iter()
        .map(|c| constants_for(c.kind, family))
        .sum())
}

pub(crate) fn constants_for(kind: ComponentKind, family: &FamilyConfig) -> usize {
    match kind {
        ComponentKind::Summator => 0,
        ComponentKind::Modulator => family.modulator_constant_count(),
        _ => family.univariate_constant_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{soil_graph, INVALID_GRAPHS};
    use crate::io::{parse_graph, parse_unchecked};

    #[test]
    fn soil_graph_is_well_formed() {
        let report = validate_graph(&soil_graph());
        assert!(report.is_ok(), "{:?}", report.violations);
    }

    #[test]
    fn each_invalid_fixture_breaks_its_rule_only() {
        for f in INVALID_GRAPHS {
            let g = parse_unchecked(f.text).unwrap_or_else(|e| panic!("{}: {e}", f.name));
            let rules = validate_graph(&g).rules();
            assert_eq!(rules, BTreeSet::from([f.rule]), "{}", f.name);
        }
    }

    #[test]
    fn violations_name_the_offender() {
        let g = parse_graph("param a range 0 1\nparam p range 0 1\nnode b\nmodulator ++ inputs a b output b\ncoupling synchronous ++ from b to p\n").unwrap();
        let report = validate_graph(&g);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].component, Some(ComponentId::new("u1")));
    }

    #[test]
    fn validation_is_deterministic() {
        for f in INVALID_GRAPHS {
            let g = parse_unchecked(f.text).unwrap();
            assert_eq!(validate_graph(&g), validate_graph(&g));
        }
    }

    #[test]
    fn integrative_loop_is_legal() {
        let g = parse_graph(
            "param p range 0 1\nparam q range 0 1\nnode a\nsummator output a inputs +p -q\ncoupling integrative ++ from a to q\n",
        )
        .unwrap();
        assert!(validate_graph(&g).is_ok());
    }

    #[test]
    fn constant_counts() {
        let family = FamilyConfig::default();
        // two couplings of 5 plus a modulator of 3 * 5; the summator is fixed
        assert_eq!(count_regression_constants(&soil_graph(), &family).unwrap(), 25);
        let g = parse_graph("param a range 0 1\nparam b range 0 1\nparam c range 0 1\nsummator output c inputs +a -b\n").unwrap();
        assert_eq!(count_regression_constants(&g, &family).unwrap(), 0);
        let g = parse_graph("param a range 0 1\nparam b range 0 1\ncoupling integrative ++ from a to b\n").unwrap();
        assert_eq!(count_regression_constants(&g, &family).unwrap(), 5);
        let bad = parse_unchecked("param a range 0 1\ncoupling synchronous ++ from a to a\n").unwrap();
        assert!(matches!(count_regression_constants(&bad, &family), Err(Error::InvalidGraph(_))));
    }
}
