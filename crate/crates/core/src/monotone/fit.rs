use nalgebra::{DMatrix, DVector};

use super::{FamilyConfig, ModulatorSpec, MonotoneSpec};
use crate::error::{Error, Result};

/// Least-squares fit of a univariate spec to `(x, y)` pairs, started at
/// `init` (after projection). The objective never exceeds its value at the
/// projected `init`.
pub fn fit_univariate(pairs: &[(f64, f64)], family: &FamilyConfig, init: &MonotoneSpec) -> Result<MonotoneSpec> {
    let init = init.clamp_constraints(family);
    check_samples("univariate fit", pairs.len(), init.constant_count())?;
    if pairs.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::RejectedInput("non-finite sample in univariate fit".into()));
    }
    let bounds = init.constant_bounds(family);
    let k = levenberg_marquardt(
        init.constants(),
        &bounds,
        pairs.len(),
        family,
        |k, r, mut jac| {
            let spec = MonotoneSpec::from_constants(k).expect("layout preserved");
            let mut row = vec![0.0; k.len()];
            for (i, &(x, y)) in pairs.iter().enumerate() {
                r[i] = spec.eval(x) - y;
                if let Some(jac) = jac.as_deref_mut() {
                    spec.constant_gradient(x, &mut row);
                    for (c, v) in row.iter().enumerate() {
                        jac[(i, c)] = *v;
                    }
                }
            }
        },
    );
    Ok(MonotoneSpec::from_constants(&k)?.clamp_constraints(family))
}

/// Least-squares fit of a modulator surface to `(x1, x2, y)` triples.
pub fn fit_bivariate(
    triples: &[(f64, f64, f64)],
    family: &FamilyConfig,
    init: &ModulatorSpec,
) -> Result<ModulatorSpec> {
    let init = init.clamp_constraints(family);
    check_samples("modulator fit", triples.len(), init.constant_count())?;
    if triples.iter().any(|&(a, b, y)| !a.is_finite() || !b.is_finite() || !y.is_finite()) {
        return Err(Error::RejectedInput("non-finite sample in modulator fit".into()));
    }
    let variant = init.variant;
    let bounds = init.constant_bounds(family);
    let k = levenberg_marquardt(
        init.constants(),
        &bounds,
        triples.len(),
        family,
        |k, r, mut jac| {
            let spec = ModulatorSpec::from_constants(variant, k).expect("layout preserved");
            let mut row = vec![0.0; k.len()];
            for (i, &(x1, x2, y)) in triples.iter().enumerate() {
                r[i] = spec.eval(x1, x2) - y;
                if let Some(jac) = jac.as_deref_mut() {
                    spec.constant_gradient(x1, x2, &mut row);
                    for (c, v) in row.iter().enumerate() {
                        jac[(i, c)] = *v;
                    }
                }
            }
        },
    );
    Ok(ModulatorSpec::from_constants(variant, &k)?.clamp_constraints(family))
}

pub fn rms_residual(spec: &MonotoneSpec, pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    (pairs.iter().map(|&(x, y)| (spec.eval(x) - y).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt()
}

pub fn rms_residual_bivariate(spec: &ModulatorSpec, triples: &[(f64, f64, f64)]) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    (triples
        .iter()
        .map(|&(a, b, y)| (spec.eval(a, b) - y).powi(2))
        .sum::<f64>()
        / triples.len() as f64)
        .sqrt()
}

fn check_samples(context: &str, available: usize, required: usize) -> Result<()> {
    if available < required {
        return Err(Error::Underdetermined {
            context: context.into(),
            required,
            available,
        });
    }
    Ok(())
}

fn project(k: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in k.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// Box-constrained Levenberg-Marquardt with Marquardt diagonal scaling.
///
/// Only steps that strictly lower the sum of squares are taken. Constants
/// sitting on a bound whose gradient points outward are frozen for the step.
fn levenberg_marquardt<F>(
    mut k: Vec<f64>,
    bounds: &[(f64, f64)],
    n: usize,
    family: &FamilyConfig,
    mut residuals: F,
) -> Vec<f64>
where
    F: FnMut(&[f64], &mut [f64], Option<&mut DMatrix<f64>>),
{
    let p = k.len();
    project(&mut k, bounds);
    let mut r = vec![0.0; n];
    let mut jac = DMatrix::zeros(n, p);
    residuals(&k, &mut r, Some(&mut jac));
    let mut sse = sum_squares(&r);
    if !sse.is_finite() {
        return k;
    }
    let stop = family.fit_tolerance.powi(2) * n as f64;
    let mut lambda = 1e-3;
    let mut trial = vec![0.0; n];

    for _ in 0..family.fit_iterations {
        if sse <= stop {
            break;
        }
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let mut h = jac.tr_mul(&jac);
        let frozen: Vec<bool> = (0..p)
            .map(|i| {
                let (lo, hi) = bounds[i];
                (k[i] <= lo && g[i] > 0.0) || (k[i] >= hi && g[i] < 0.0)
            })
            .collect();
        let scale = (0..p).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
        for i in 0..p {
            if frozen[i] {
                for j in 0..p {
                    h[(i, j)] = 0.0;
                    h[(j, i)] = 0.0;
                }
            }
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = h.clone();
            for i in 0..p {
                if frozen[i] {
                    a[(i, i)] = 1.0;
                } else {
                    a[(i, i)] += lambda * (h[(i, i)] + 1e-12 * scale);
                }
            }
            let rhs = DVector::from_iterator(p, (0..p).map(|i| if frozen[i] { 0.0 } else { -g[i] }));
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut cand: Vec<f64> = k.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            project(&mut cand, bounds);
            if cand == k {
                break;
            }
            residuals(&cand, &mut trial, None);
            let cand_sse = sum_squares(&trial);
            if cand_sse.is_finite() && cand_sse < sse {
                let gain = sse - cand_sse;
                k = cand;
                sse = cand_sse;
                std::mem::swap(&mut r, &mut trial);
                residuals(&k, &mut r, Some(&mut jac));
                lambda = (lambda / 3.0).max(1e-12);
                accepted = gain > 1e-15 * sse.max(f64::MIN_POSITIVE);
                if !accepted {
                    // negligible progress: stop
                    return k;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    k
}

fn sum_squares(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}
