use rand::{Rng, RngCore};

use super::{Model, PassMemo, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{ComponentKind, NodeId};
use crate::monotone::{Bounds, InputBox};

/// Backward derivation of node series from recorded parameters through
/// inverted components, on top of one forward memo.
///
/// Series are computed on demand and cached, so one random path choice
/// holds for every index of a node.
pub struct BackwardPass<'a> {
    model: &'a Model,
    records: &'a Trajectory,
    memo: &'a PassMemo,
    rng: &'a mut dyn RngCore,
    cache: Vec<Option<Vec<f64>>>,
}

impl<'a> BackwardPass<'a> {
    /// Fails with `StaleMemo` unless `memo` was computed from this model and
    /// record grid.
    pub fn new(
        model: &'a Model,
        records: &'a Trajectory,
        memo: &'a PassMemo,
        rng: &'a mut dyn RngCore,
    ) -> Result<Self> {
        if memo.is_empty() && !records.is_empty() {
            return Err(Error::StaleMemo("no forward pass has been run".into()));
        }
        if !memo.is_current(model, records) {
            return Err(Error::StaleMemo("memo was built from other constants or records".into()));
        }
        Ok(BackwardPass {
            model,
            records,
            memo,
            rng,
            cache: vec![None; model.graph().nodes.len()],
        })
    }

    pub fn node_series(&mut self, node: &NodeId) -> Result<Vec<f64>> {
        let v = self
            .model
            .node_index(node)
            .ok_or_else(|| Error::UnresolvedNode(node.to_string()))?;
        Ok(self.series(v)?.to_vec())
    }

    pub(crate) fn series(&mut self, v: usize) -> Result<&[f64]> {
        if self.cache[v].is_none() {
            let s = self.derive(v)?;
            self.cache[v] = Some(s);
        }
        Ok(self.cache[v].as_deref().expect("filled above"))
    }

    fn derive(&mut self, v: usize) -> Result<Vec<f64>> {
        let plan = self.model.plan();
        let node = &self.model.graph().nodes[v];
        if plan.observed[v] {
            return Ok(self.records.get(node).expect("checked by the forward pass").to_vec());
        }
        let Some(rank) = plan.rank[v] else {
            return Ok(self.memo.value_series(v));
        };
        let candidates: Vec<usize> = plan.topo.consumers[v]
            .iter()
            .copied()
            .filter(|&c| plan.rank[plan.output(c)].is_some_and(|r| r < rank))
            .collect();
        let c = match candidates.len() {
            0 => return Ok(self.memo.value_series(v)),
            1 => candidates[0],
            n => candidates[self.rng.random_range(0..n)],
        };
        let target = self.series(plan.output(c))?.to_vec();
        self.invert_through(c, v, &target)
    }

    fn invert_through(&self, c: usize, v: usize, target: &[f64]) -> Result<Vec<f64>> {
        let model = self.model;
        let plan = model.plan();
        let comp = &model.graph().components[c];
        let grid = &self.records.grid;
        let len = target.len();
        let inputs = plan.inputs(c);
        Ok(match comp.kind {
            ComponentKind::Synchronous => {
                let (so, si) = comp.variant.expect("coupling variant").coupling_signs();
                let spec = model.spec_at(c).univariate();
                target.iter().map(|&y| si * spec.invert(so * y)).collect()
            }
            ComponentKind::Integrative => {
                let (so, si) = comp.variant.expect("coupling variant").coupling_signs();
                let spec = model.spec_at(c).univariate();
                let mut x: Vec<f64> = (0..len.saturating_sub(1))
                    .map(|j| {
                        let rate = (target[j + 1] - target[j]) / grid.step(j + 1);
                        si * spec.invert(so * rate)
                    })
                    .collect();
                if len > 0 {
                    x.push(self.memo.frames[len - 1].value[v]);
                }
                x
            }
            ComponentKind::Differential => {
                let (so, si) = comp.variant.expect("coupling variant").coupling_signs();
                let spec = model.spec_at(c).univariate();
                let mut x = Vec::with_capacity(len);
                if len > 0 {
                    x.push(self.memo.frames[0].value[v]);
                }
                for j in 1..len {
                    let rate = si * spec.invert(so * target[j]);
                    x.push(x[j - 1] + rate * grid.step(j));
                }
                x
            }
            ComponentKind::Summator => {
                let k = inputs.iter().position(|&(i, _)| i == v).expect("consumer has this input");
                let sign = inputs[k].1;
                let out = plan.output(c);
                let share = inputs.len() as f64;
                (0..len)
                    .map(|j| {
                        let f = &self.memo.frames[j];
                        f.value[v] + sign * (target[j] - f.net[out]) / share
                    })
                    .collect()
            }
            ComponentKind::Modulator => {
                let spec = model.spec_at(c).modulator();
                let (a, b) = (inputs[0].0, inputs[1].0);
                let first = a == v;
                let bx = InputBox {
                    x1: self.input_bounds(a),
                    x2: self.input_bounds(b),
                };
                let (lo, hi) = spec.attainable_range(&bx);
                (0..len)
                    .map(|j| {
                        let f = &self.memo.frames[j];
                        let q = (f.value[a], f.value[b]);
                        let y = target[j].clamp(lo, hi);
                        let p = spec.level_nearest(y, q, &bx).unwrap_or(q);
                        if first {
                            p.0
                        } else {
                            p.1
                        }
                    })
                    .collect()
            }
        })
    }

    /// Declared range for parameters, otherwise the forward span padded by a
    /// tenth on each side; always contains every forward value.
    fn input_bounds(&self, v: usize) -> Bounds {
        let (mut lo, mut hi) = self
            .memo
            .frames
            .iter()
            .map(|f| f.value[v])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        match self.model.plan().topo.param_of[v] {
            Some(p) => {
                let decl = &self.model.graph().parameters[p];
                lo = lo.min(decl.min);
                hi = hi.max(decl.max);
            }
            None => {
                let pad = 0.1 * (hi - lo) + 1e-9 * (1.0 + lo.abs().max(hi.abs()));
                lo -= pad;
                hi += pad;
            }
        }
        Bounds::new(lo, hi)
    }
}

/// Backward value of `node` at index `j`. With several admissible consumer
/// paths one is picked uniformly with `rng`; with one, `rng` is untouched.
pub fn backward_node(
    model: &Model,
    records: &Trajectory,
    node: &NodeId,
    j: usize,
    memo: &PassMemo,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let series = BackwardPass::new(model, records, memo, rng)?.node_series(node)?;
    series
        .get(j)
        .copied()
        .ok_or_else(|| Error::RejectedInput(format!("index {j} beyond {} records", series.len())))
}
