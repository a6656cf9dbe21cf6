//! Strictly increasing parametric functions: a linear floor plus a sum of
//! non-negative logistic steps,
//!
//! ```text
//! m(x) = b + a*x + sum_j w_j * sigmoid((x - c_j) / s_j)
//! ```
//!
//! With `a >= slope_floor > 0` and `w_j >= 0` the derivative never drops below
//! `a`, so every function of the family is globally invertible on the reals.

mod fit;
mod modulator;

pub use fit::{fit_bivariate, fit_univariate, rms_residual, rms_residual_bivariate};
pub use modulator::{Bounds, InputBox, ModulatorSpec};
pub(crate) use modulator::golden_min;

use crate::error::{Error, Result};

/// Standard logistic function; `sigmoid(0) = 0.5`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn sigmoid_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 - s)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmoidTerm {
    pub weight: f64,
    pub center: f64,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonotoneSpec {
    pub slope: f64,
    pub offset: f64,
    pub terms: Vec<SigmoidTerm>,
}

/// Shape and fitting settings shared by every monotone function of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyConfig {
    /// Number of logistic terms per function.
    pub term_count: usize,
    /// Lower bound for linear slopes and logistic scales.
    pub slope_floor: f64,
    /// Upper bound for logistic weights.
    pub weight_cap: f64,
    pub fit_iterations: usize,
    pub fit_tolerance: f64,
}

impl Default for FamilyConfig {
    fn default() -> Self {
        FamilyConfig {
            term_count: 1,
            slope_floor: 1e-6,
            weight_cap: 1e6,
            fit_iterations: 200,
            fit_tolerance: 1e-9,
        }
    }
}

impl FamilyConfig {
    pub fn univariate_constant_count(&self) -> usize {
        2 + 3 * self.term_count
    }

    /// Outer function plus two legs, each a full univariate spec.
    pub fn modulator_constant_count(&self) -> usize {
        3 * self.univariate_constant_count()
    }

    pub fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::RejectedInput(format!("{name} must be positive, got {v}")))
            }
        };
        positive("slope_floor", self.slope_floor)?;
        positive("weight_cap", self.weight_cap)?;
        positive("fit_tolerance", self.fit_tolerance)?;
        if self.fit_iterations == 0 {
            return Err(Error::RejectedInput("fit_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Relative residual the root finder drives towards; well below any
/// configured fit tolerance.
const INVERT_TOLERANCE: f64 = 1e-13;

impl MonotoneSpec {
    pub fn identity() -> Self {
        Self::affine(1.0, 0.0)
    }

    pub fn affine(slope: f64, offset: f64) -> Self {
        MonotoneSpec {
            slope,
            offset,
            terms: Vec::new(),
        }
    }

    pub fn with_term(mut self, weight: f64, center: f64, scale: f64) -> Self {
        self.terms.push(SigmoidTerm {
            weight,
            center,
            scale,
        });
        self
    }

    /// Builds a spec with `term_count` zero-weight terms.
    pub fn affine_in_family(slope: f64, offset: f64, family: &FamilyConfig) -> Self {
        let mut spec = Self::affine(slope, offset);
        for _ in 0..family.term_count {
            spec = spec.with_term(0.0, 0.0, 1.0);
        }
        spec
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().fold(self.offset + self.slope * x, |acc, t| {
            acc + t.weight * sigmoid((x - t.center) / t.scale)
        })
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.terms.iter().fold(self.slope, |acc, t| {
            acc + t.weight * sigmoid_prime((x - t.center) / t.scale) / t.scale
        })
    }

    /// Gradient of `eval(x)` with respect to `constants()`.
    pub(crate) fn constant_gradient(&self, x: f64, out: &mut [f64]) {
        out[0] = x;
        out[1] = 1.0;
        for (j, t) in self.terms.iter().enumerate() {
            let z = (x - t.center) / t.scale;
            let sp = sigmoid_prime(z);
            out[2 + 3 * j] = sigmoid(z);
            out[3 + 3 * j] = -t.weight * sp / t.scale;
            out[4 + 3 * j] = -t.weight * sp * z / t.scale;
        }
    }

    pub fn invert(&self, y: f64) -> f64 {
        self.invert_with_tolerance(y, INVERT_TOLERANCE)
    }

    /// Returns `x` with `|eval(x) - y| <= tolerance * max(1, |y|)`, using a
    /// geometrically grown bracket and safeguarded Newton steps.
    pub fn invert_with_tolerance(&self, y: f64, tolerance: f64) -> f64 {
        if !y.is_finite() {
            return if y.is_nan() { f64::NAN } else { y.signum() * f64::INFINITY };
        }
        let accept = tolerance * y.abs().max(1.0);
        let x0 = if self.terms.is_empty() {
            0.0
        } else {
            self.terms.iter().map(|t| t.center).sum::<f64>() / self.terms.len() as f64
        };
        let f0 = self.eval(x0) - y;
        if f0 == 0.0 {
            return x0;
        }
        let dir = if f0 < 0.0 { 1.0 } else { -1.0 };
        let mut step = (f0.abs() / self.derivative(x0)).max(1e-12 * (1.0 + x0.abs()));
        let (mut lo, mut hi);
        let mut near = x0;
        loop {
            let far = x0 + dir * step;
            let ff = self.eval(far) - y;
            if ff == 0.0 {
                return far;
            }
            if (ff > 0.0) == (dir > 0.0) {
                if dir > 0.0 {
                    lo = near;
                    hi = far;
                } else {
                    lo = far;
                    hi = near;
                }
                break;
            }
            near = far;
            step *= 2.0;
            if !step.is_finite() {
                return near;
            }
        }

        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let fx = self.eval(x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.derivative(x);
            let mut next = x - fx / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let settled = (next - x).abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs())
                || hi - lo <= 4.0 * f64::EPSILON * (1.0 + x.abs());
            x = next;
            if settled && fx.abs() <= accept {
                break;
            }
            if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    /// Projects every constant into its admissible range. Idempotent.
    pub fn clamp_constraints(&self, family: &FamilyConfig) -> Self {
        let finite_or = |v: f64, d: f64| if v.is_finite() { v } else { d };
        MonotoneSpec {
            slope: finite_or(self.slope, family.slope_floor).max(family.slope_floor),
            offset: finite_or(self.offset, 0.0),
            terms: self
                .terms
                .iter()
                .map(|t| SigmoidTerm {
                    weight: finite_or(t.weight, 0.0).clamp(0.0, family.weight_cap),
                    center: finite_or(t.center, 0.0),
                    scale: finite_or(t.scale, 1.0).max(family.slope_floor),
                })
                .collect(),
        }
    }

    pub fn satisfies(&self, family: &FamilyConfig) -> bool {
        self.slope >= family.slope_floor
            && self.offset.is_finite()
            && self.terms.iter().all(|t| {
                (0.0..=family.weight_cap).contains(&t.weight)
                    && t.center.is_finite()
                    && t.scale >= family.slope_floor
                    && t.scale.is_finite()
            })
    }

    pub fn constant_count(&self) -> usize {
        2 + 3 * self.terms.len()
    }

    /// `[slope, offset, w_1, c_1, s_1, ...]`
    pub fn constants(&self) -> Vec<f64> {
        let mut k = Vec::with_capacity(self.constant_count());
        k.push(self.slope);
        k.push(self.offset);
        for t in &self.terms {
            k.extend([t.weight, t.center, t.scale]);
        }
        k
    }

    pub fn from_constants(k: &[f64]) -> Result<Self> {
        if k.len() < 2 || !(k.len() - 2).is_multiple_of(3) {
            return Err(Error::RejectedInput(format!(
                "a monotone spec needs 2 + 3J constants, got {}",
                k.len()
            )));
        }
        Ok(MonotoneSpec {
            slope: k[0],
            offset: k[1],
            terms: k[2..]
                .chunks_exact(3)
                .map(|c| SigmoidTerm {
                    weight: c[0],
                    center: c[1],
                    scale: c[2],
                })
                .collect(),
        })
    }

    /// Per-constant `(lower, upper)` bounds; `clamp_constraints` is the
    /// projection onto this box.
    pub(crate) fn constant_bounds(&self, family: &FamilyConfig) -> Vec<(f64, f64)> {
        let mut b = vec![(family.slope_floor, f64::INFINITY), (f64::NEG_INFINITY, f64::INFINITY)];
        for _ in &self.terms {
            b.extend([
                (0.0, family.weight_cap),
                (f64::NEG_INFINITY, f64::INFINITY),
                (family.slope_floor, f64::INFINITY),
            ]);
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_identity_and_affine() {
        assert_eq!(MonotoneSpec::identity().eval(3.7), 3.7);
        assert_eq!(MonotoneSpec::affine(1.0, 2.0).eval(0.0), 2.0);
    }

    #[test]
    fn eval_single_term_at_center() {
        // sigmoid(0) = 1/2 analytically, so 0.5*0 + 2*(1/2) = 1
        let spec = MonotoneSpec::affine(0.5, 0.0).with_term(2.0, 0.0, 1.0);
        assert!((spec.eval(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invert_simple_cases() {
        assert_eq!(MonotoneSpec::identity().invert(-4.2), -4.2);
        let x = MonotoneSpec::affine(2.0, 1.0).invert(5.0);
        assert!((x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invert_steep_and_flat_regions() {
        let family = FamilyConfig::default();
        let spec = MonotoneSpec::affine(family.slope_floor, 0.0)
            .with_term(50.0, 3.0, 0.01)
            .with_term(1.0, -20.0, 5.0);
        for &y in &[-1.0, 0.2, 10.0, 25.0, 50.5, 51.0] {
            let x = spec.invert(y);
            assert!((spec.eval(x) - y).abs() <= 1e-9 * y.abs().max(1.0), "y={y} x={x}");
        }
    }

    #[test]
    fn clamp_examples() {
        let family = FamilyConfig::default();
        let neg = MonotoneSpec::affine(-1.0, 0.0).clamp_constraints(&family);
        assert_eq!(neg.slope, family.slope_floor);

        let valid = MonotoneSpec::affine(0.5, 1.0).with_term(2.0, 0.0, 1.0);
        assert_eq!(valid.clamp_constraints(&family), valid);

        let w = MonotoneSpec::identity().with_term(-5.0, 0.0, 1.0).clamp_constraints(&family);
        assert_eq!(w.terms[0].weight, 0.0);
    }

    #[test]
    fn constants_layout() {
        let spec = MonotoneSpec::affine(2.0, -1.0).with_term(3.0, 4.0, 5.0);
        assert_eq!(spec.constants(), vec![2.0, -1.0, 3.0, 4.0, 5.0]);
        assert_eq!(MonotoneSpec::from_constants(&spec.constants()).unwrap(), spec);
        assert!(MonotoneSpec::from_constants(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = MonotoneSpec::affine(0.7, 0.3).with_term(1.5, 0.4, 0.8);
        let x = 0.9;
        let mut g = vec![0.0; 5];
        spec.constant_gradient(x, &mut g);
        let k = spec.constants();
        for i in 0..k.len() {
            let h = 1e-6;
            let mut kp = k.clone();
            kp[i] += h;
            let mut km = k.clone();
            km[i] -= h;
            let fd = (MonotoneSpec::from_constants(&kp).unwrap().eval(x)
                - MonotoneSpec::from_constants(&km).unwrap().eval(x))
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7, "constant {i}: {fd} vs {}", g[i]);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn spec_strategy() -> impl Strategy<Value = MonotoneSpec> {
            (
                1e-3f64..5.0,
                -10.0f64..10.0,
                proptest::collection::vec((0.0f64..20.0, -10.0f64..10.0, 0.05f64..5.0), 0..3),
            )
                .prop_map(|(a, b, terms)| {
                    terms
                        .into_iter()
                        .fold(MonotoneSpec::affine(a, b), |s, (w, c, sc)| s.with_term(w, c, sc))
                })
        }

        proptest! {
            #[test]
            fn strictly_increasing(spec in spec_strategy(), x in -20.0f64..20.0, dx in 1e-3f64..5.0) {
                prop_assert!(spec.eval(x) < spec.eval(x + dx));
            }

            #[test]
            fn invert_round_trip(spec in spec_strategy(), x in -10.0f64..10.0) {
                let back = spec.invert(spec.eval(x));
                prop_assert!((back - x).abs() <= 1e-6 * x.abs().max(1.0));
            }

            #[test]
            fn clamp_is_idempotent(a in -5.0f64..5.0, w in -5.0f64..5.0, s in -1.0f64..2.0) {
                let family = FamilyConfig::default();
                let once = MonotoneSpec::affine(a, 0.0).with_term(w, 0.0, s).clamp_constraints(&family);
                prop_assert!(once.satisfies(&family));
                prop_assert_eq!(once.clamp_constraints(&family), once);
            }
        }
    }
}
