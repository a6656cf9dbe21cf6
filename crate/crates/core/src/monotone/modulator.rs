use super::{FamilyConfig, MonotoneSpec};
use crate::error::{Error, Result};
use crate::graph::SignVariant;

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bounds { lo, hi }
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputBox {
    pub x1: Bounds,
    pub x2: Bounds,
}

impl InputBox {
    pub fn new(x1: (f64, f64), x2: (f64, f64)) -> Self {
        InputBox {
            x1: Bounds::new(x1.0, x1.1),
            x2: Bounds::new(x2.0, x2.1),
        }
    }
}

/// Bivariate surface `F(u(s1*x1) + v(s2*x2))` with `(s1, s2)` given by the
/// variant. Each partial derivative has the constant sign of its `s_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulatorSpec {
    pub outer: MonotoneSpec,
    pub left: MonotoneSpec,
    pub right: MonotoneSpec,
    pub variant: SignVariant,
}

const SCAN_POINTS: usize = 32;

impl ModulatorSpec {
    pub fn identity(variant: SignVariant) -> Self {
        ModulatorSpec {
            outer: MonotoneSpec::identity(),
            left: MonotoneSpec::identity(),
            right: MonotoneSpec::identity(),
            variant,
        }
    }

    pub fn signs(&self) -> (f64, f64) {
        self.variant.modulator_signs()
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        self.outer.eval(self.inner(x1, x2))
    }

    fn inner(&self, x1: f64, x2: f64) -> f64 {
        let (s1, s2) = self.signs();
        self.left.eval(s1 * x1) + self.right.eval(s2 * x2)
    }

    /// `(dm/dx1, dm/dx2)`.
    pub fn gradient(&self, x1: f64, x2: f64) -> (f64, f64) {
        let (s1, s2) = self.signs();
        let f = self.outer.derivative(self.inner(x1, x2));
        (
            s1 * f * self.left.derivative(s1 * x1),
            s2 * f * self.right.derivative(s2 * x2),
        )
    }

    /// Gradient of `eval(x1, x2)` with respect to `constants()`.
    pub(crate) fn constant_gradient(&self, x1: f64, x2: f64, out: &mut [f64]) {
        let (s1, s2) = self.signs();
        let (a1, a2) = (s1 * x1, s2 * x2);
        let g = self.left.eval(a1) + self.right.eval(a2);
        let f = self.outer.derivative(g);
        let no = self.outer.constant_count();
        let nl = self.left.constant_count();
        self.outer.constant_gradient(g, &mut out[..no]);
        self.left.constant_gradient(a1, &mut out[no..no + nl]);
        self.right.constant_gradient(a2, &mut out[no + nl..]);
        for v in &mut out[no..] {
            *v *= f;
        }
    }

    pub fn clamp_constraints(&self, family: &FamilyConfig) -> Self {
        ModulatorSpec {
            outer: self.outer.clamp_constraints(family),
            left: self.left.clamp_constraints(family),
            right: self.right.clamp_constraints(family),
            variant: self.variant,
        }
    }

    pub fn satisfies(&self, family: &FamilyConfig) -> bool {
        self.outer.satisfies(family) && self.left.satisfies(family) && self.right.satisfies(family)
    }

    pub fn constant_count(&self) -> usize {
        self.outer.constant_count() + self.left.constant_count() + self.right.constant_count()
    }

    /// Outer, left and right constants, concatenated.
    pub fn constants(&self) -> Vec<f64> {
        let mut k = self.outer.constants();
        k.extend(self.left.constants());
        k.extend(self.right.constants());
        k
    }

    /// Splits `k` into three equally sized univariate blocks.
    pub fn from_constants(variant: SignVariant, k: &[f64]) -> Result<Self> {
        if !k.len().is_multiple_of(3) {
            return Err(Error::RejectedInput(format!(
                "a modulator needs three equal constant blocks, got {} constants",
                k.len()
            )));
        }
        let n = k.len() / 3;
        Ok(ModulatorSpec {
            outer: MonotoneSpec::from_constants(&k[..n])?,
            left: MonotoneSpec::from_constants(&k[n..2 * n])?,
            right: MonotoneSpec::from_constants(&k[2 * n..])?,
            variant,
        })
    }

    pub(crate) fn constant_bounds(&self, family: &FamilyConfig) -> Vec<(f64, f64)> {
        let mut b = self.outer.constant_bounds(family);
        b.extend(self.left.constant_bounds(family));
        b.extend(self.right.constant_bounds(family));
        b
    }

    /// `(min, max)` of the surface over the box, attained at corners.
    pub fn attainable_range(&self, bx: &InputBox) -> (f64, f64) {
        let corners = [
            self.eval(bx.x1.lo, bx.x2.lo),
            self.eval(bx.x1.lo, bx.x2.hi),
            self.eval(bx.x1.hi, bx.x2.lo),
            self.eval(bx.x1.hi, bx.x2.hi),
        ];
        corners
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Point of the level set `{m = y}` inside `bx` closest to `q`.
    ///
    /// The level set is a monotone curve; it is sampled once along `x1` and
    /// once along `x2`, and every local minimum of the distance is refined by
    /// golden-section search in the parametrization it was found in.
    pub fn level_nearest(&self, y: f64, q: (f64, f64), bx: &InputBox) -> Result<(f64, f64)> {
        let (s1, s2) = self.signs();
        let z = self.outer.invert(y);
        let x2_of = |x1: f64| s2 * self.right.invert(z - self.left.eval(s1 * x1));
        let x1_of = |x2: f64| s1 * self.left.invert(z - self.right.eval(s2 * x2));

        let span1 = interval_on_curve(x1_of(bx.x2.lo), x1_of(bx.x2.hi), bx.x1);
        let span2 = interval_on_curve(x2_of(bx.x1.lo), x2_of(bx.x1.hi), bx.x2);
        let (Some(span1), Some(span2)) = (span1, span2) else {
            let (lo, hi) = self.attainable_range(bx);
            return Err(Error::Unattainable { target: y, lo, hi });
        };

        let dist = |p: (f64, f64)| (p.0 - q.0).powi(2) + (p.1 - q.1).powi(2);
        let along1 = |x1: f64| (x1, x2_of(x1));
        let along2 = |x2: f64| (x1_of(x2), x2);

        let mut best = along1(span1.0);
        let mut best_d = dist(best);
        let mut consider = |p: (f64, f64)| {
            let d = dist(p);
            if d < best_d {
                best_d = d;
                best = p;
            }
        };
        for (span, curve) in [
            (span1, &along1 as &dyn Fn(f64) -> (f64, f64)),
            (span2, &along2 as &dyn Fn(f64) -> (f64, f64)),
        ] {
            let ts: Vec<f64> = (0..=SCAN_POINTS)
                .map(|i| span.0 + (span.1 - span.0) * i as f64 / SCAN_POINTS as f64)
                .collect();
            let ds: Vec<f64> = ts.iter().map(|&t| dist(curve(t))).collect();
            for i in 0..ts.len() {
                let left_ok = i == 0 || ds[i] <= ds[i - 1];
                let right_ok = i + 1 == ts.len() || ds[i] <= ds[i + 1];
                if !(left_ok && right_ok) {
                    continue;
                }
                let lo = ts[i.saturating_sub(1)];
                let hi = ts[(i + 1).min(ts.len() - 1)];
                consider(curve(ts[i]));
                consider(curve(golden_min(lo, hi, |t| dist(curve(t)))));
            }
        }
        Ok(best)
    }
}

/// Part of `bounds` spanned by a level curve between its two crossings of the
/// opposite box edges, or `None` when the curve misses the box.
fn interval_on_curve(a: f64, b: f64, bounds: Bounds) -> Option<(f64, f64)> {
    let lo = a.min(b).max(bounds.lo);
    let hi = a.max(b).min(bounds.hi);
    let slack = 1e-12 * (1.0 + bounds.lo.abs().max(bounds.hi.abs()));
    if lo > hi + slack || lo.is_nan() || hi.is_nan() {
        None
    } else {
        Some((lo.min(hi), hi.max(lo)))
    }
}

pub(crate) fn golden_min(mut a: f64, mut b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}
