//! Bundled example graph, a known nonlinear model on it, and a corpus of
//! malformed graphs with the rule each one breaks.

use std::collections::BTreeMap;

use crate::graph::{ComponentId, Graph, NodeId, Rule};
use crate::io::parse_graph;
use crate::monotone::{ModulatorSpec, MonotoneSpec};
use crate::network::{ComponentSpec, Model, TimeGrid, Trajectory};
use crate::simulate::{observed_records, simulate_model};

/// Soil moisture fed by precipitation and drained by an evaporation surface
/// over sunshine and moisture.
pub const SOIL_GRAPH: &str = include_str!("../fixtures/soil.nmpc");

pub fn soil_graph() -> Graph {
    parse_graph(SOIL_GRAPH).expect("bundled graph parses")
}

/// Constants of the reference model, in component order: evaporation
/// surface, precipitation uptake, moisture integrator.
pub fn reference_specs() -> BTreeMap<ComponentId, ComponentSpec> {
    let evaporation = ModulatorSpec {
        outer: MonotoneSpec::affine(0.8, -0.9).with_term(2.0, 5.0, 1.5),
        left: MonotoneSpec::affine(0.3, 0.0).with_term(1.0, 5.0, 1.5),
        right: MonotoneSpec::affine(0.06, 0.0).with_term(0.8, 50.0, 10.0),
        variant: crate::graph::SignVariant::PP,
    };
    let uptake = MonotoneSpec::affine(0.6, 0.3).with_term(2.0, 5.0, 1.2);
    let integrator = MonotoneSpec::affine(1.5, -0.5).with_term(1.0, 0.0, 2.0);
    BTreeMap::from([
        (ComponentId::new("u1"), ComponentSpec::Modulator(evaporation)),
        (ComponentId::new("u2"), ComponentSpec::Univariate(uptake)),
        (ComponentId::new("u4"), ComponentSpec::Univariate(integrator)),
    ])
}

pub fn reference_model() -> Model {
    Model::new(soil_graph(), reference_specs()).expect("reference model is consistent")
}

/// Sunshine and precipitation on a unit-step grid of `count` points, as two
/// incommensurate oscillations inside their ranges.
pub fn soil_exogenous(count: usize) -> Trajectory {
    let grid = TimeGrid::uniform(0.0, 1.0, count).expect("positive step");
    let t = grid.points().to_vec();
    let tau = std::f64::consts::TAU;
    let sunshine = t.iter().map(|t| 5.0 + 3.5 * (tau * t / 47.0).sin()).collect();
    let precipitation = t
        .iter()
        .map(|t| 5.0 + 3.0 * (tau * t / 31.0 + 1.0).sin() + 1.0 * (tau * t / 13.0).cos())
        .collect();
    Trajectory::new(grid)
        .with("sunshine", sunshine)
        .and_then(|t| t.with("precipitation", precipitation))
        .expect("series match the grid")
}

pub const SOIL_INITIAL_MOISTURE: f64 = 40.0;

/// Full simulated trajectory of the reference model over `count` points.
pub fn reference_trajectory(count: usize) -> Trajectory {
    let initial = BTreeMap::from([(NodeId::new("moisture"), SOIL_INITIAL_MOISTURE)]);
    simulate_model(&reference_model(), &soil_exogenous(count), &initial).expect("reference model simulates")
}

/// Observed-parameter records of the reference model over `count` points.
pub fn reference_records(count: usize) -> Trajectory {
    observed_records(&soil_graph(), &reference_trajectory(count)).expect("all observed nodes simulated")
}

/// A malformed graph document and the single rule it breaks.
pub struct InvalidFixture {
    pub name: &'static str,
    pub text: &'static str,
    pub rule: Rule,
}

macro_rules! invalid {
    ($($name:literal => $rule:ident),* $(,)?) => {
        &[$(InvalidFixture {
            name: $name,
            text: include_str!(concat!("../fixtures/invalid/", $name, ".nmpc")),
            rule: Rule::$rule,
        }),*]
    };
}

pub const INVALID_GRAPHS: &[InvalidFixture] = invalid![
    "double_output" => OutputUniqueness,
    "coupling_feedback" => DirectFeedback,
    "summator_feedback" => DirectFeedback,
    "modulator_feedback" => DirectFeedback,
    "isolated_node" => NotComputable,
    "no_backward_path" => NotComputable,
    "undriven_input" => UndrivenInput,
    "dangling_output" => DanglingOutput,
    "orphan_loop" => UnreachableOutput,
    "algebraic_cycle" => AlgebraicCycle,
    "illegal_coupling_variant" => IllegalVariant,
    "illegal_modulator_variant" => IllegalVariant,
    "short_summator" => Arity,
    "degenerate_range" => DegenerateRange,
    "unknown_node" => UnknownNode,
];
