//! Acceptance suite: one PASS/FAIL line per criterion with its measured
//! figures and runtime. Exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nmpc::calibration::{calibrate, calibrate_restarts, CalibrationConfig};
use nmpc::fixtures::{
    reference_model, reference_records, reference_trajectory, soil_exogenous, soil_graph, INVALID_GRAPHS,
};
use nmpc::graph::{validate_graph, ComponentId, SignVariant};
use nmpc::io::{parse_graph, parse_unchecked};
use nmpc::monotone::{FamilyConfig, InputBox, ModulatorSpec, MonotoneSpec};
use nmpc::network::{backward_node, forward_pass, ComponentSpec, Model, Trajectory};
use nmpc::predictor::{predict, solve_state, PredictConfig, SolveContext};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_spec(rng: &mut ChaCha8Rng) -> MonotoneSpec {
    let family = FamilyConfig::default();
    MonotoneSpec::affine(rng.random_range(1e-3..5.0), rng.random_range(-10.0..10.0))
        .with_term(
            rng.random_range(0.0..10.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(0.1..10.0),
        )
        .clamp_constraints(&family)
}

fn monotone_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let family = FamilyConfig::default();
    let (mut order_violations, mut invalid, mut worst) = (0usize, 0usize, 0.0f64);
    for _ in 0..1000 {
        let spec = random_spec(&mut rng);
        if !spec.satisfies(&family) {
            invalid += 1;
        }
        let mut xs: Vec<f64> = (0..100).map(|_| rng.random_range(-50.0..50.0)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let ys: Vec<f64> = xs.iter().map(|&x| spec.eval(x)).collect();
        order_violations += ys.windows(2).filter(|w| w[1] <= w[0]).count();
        for (&x, &y) in xs.iter().zip(&ys) {
            worst = worst.max((spec.invert(y) - x).abs() / x.abs().max(1.0));
        }
    }
    verdict(
        order_violations == 0 && invalid == 0 && worst <= 1e-6,
        format!("order violations {order_violations}, invalid specs {invalid}, worst round trip {worst:.2e}"),
    )
}

fn random_modulator(rng: &mut ChaCha8Rng, variant: SignVariant) -> ModulatorSpec {
    let leg = |rng: &mut ChaCha8Rng| {
        MonotoneSpec::affine(rng.random_range(0.05..3.0), rng.random_range(-2.0..2.0)).with_term(
            rng.random_range(0.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(0.2..3.0),
        )
    };
    ModulatorSpec {
        outer: leg(rng),
        left: leg(rng),
        right: leg(rng),
        variant,
    }
}

/// A point of the level set `m = y` with the given first (or second)
/// coordinate, when one exists inside the box.
fn level_point(m: &ModulatorSpec, y: f64, free: f64, first: bool, bx: &InputBox) -> Option<(f64, f64)> {
    let (s1, s2) = m.signs();
    let z = m.outer.invert(y);
    let p = if first {
        (free, s2 * m.right.invert(z - m.left.eval(s1 * free)))
    } else {
        (s1 * m.left.invert(z - m.right.eval(s2 * free)), free)
    };
    let inside = bx.x1.contains(p.0, 0.0) && bx.x2.contains(p.1, 0.0);
    let on_level = (m.eval(p.0, p.1) - y).abs() <= 1e-9 * y.abs().max(1.0);
    (inside && on_level).then_some(p)
}

fn modulator_suite() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let bx = InputBox::new((-5.0, 5.0), (-5.0, 5.0));
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    let (mut slice_violations, mut level_misses, mut closer_probes, mut worst_level) = (0usize, 0usize, 0usize, 0.0f64);
    for variant in [SignVariant::PP, SignVariant::PM, SignVariant::MM] {
        for _ in 0..500 {
            let m = random_modulator(&mut rng, variant);
            let (s1, s2) = m.signs();
            let fixed = rng.random_range(-5.0..5.0);
            let mut xs: Vec<f64> = (0..50).map(|_| rng.random_range(-5.0..5.0)).collect();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            for w in xs.windows(2) {
                if s1 * (m.eval(w[1], fixed) - m.eval(w[0], fixed)) <= 0.0 {
                    slice_violations += 1;
                }
                if s2 * (m.eval(fixed, w[1]) - m.eval(fixed, w[0])) <= 0.0 {
                    slice_violations += 1;
                }
            }

            let p = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let q = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let y = m.eval(p.0, p.1);
            let Ok(r) = m.level_nearest(y, q, &bx) else {
                level_misses += 1;
                continue;
            };
            let miss = (m.eval(r.0, r.1) - y).abs() / y.abs().max(1.0);
            worst_level = worst_level.max(miss);
            if miss > 1e-6 {
                level_misses += 1;
            }
            let dr = dist(r, q);
            for k in 0..1000 {
                let free = rng.random_range(-5.0..5.0);
                if let Some(probe) = level_point(&m, y, free, k % 2 == 0, &bx) {
                    if dist(probe, q) < dr - 1e-6 {
                        closer_probes += 1;
                    }
                }
            }
        }
    }
    verdict(
        slice_violations == 0 && level_misses == 0 && closer_probes == 0,
        format!(
            "slice violations {slice_violations}, level misses {level_misses} (worst {worst_level:.2e}), closer probes {closer_probes}"
        ),
    )
}

fn consistency() -> Verdict {
    let model = reference_model();
    let records = reference_records(200);
    let memo = forward_pass(&model, &records).expect("forward pass");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for node in &model.graph().nodes {
        for j in 0..records.len() {
            let b = backward_node(&model, &records, node, j, &memo, &mut rng).expect("backward value");
            let f = memo.value(&model, node, j).expect("forward value");
            worst = worst.max((b - f).abs());
        }
    }
    verdict(worst <= 1e-6, format!("max |backward - forward| {worst:.2e} over 200 records"))
}

fn recovery() -> Verdict {
    let graph = soil_graph();
    let records = reference_records(300);
    let config = CalibrationConfig::default();
    let a = calibrate_restarts(&graph, &records, &config, 5).expect("calibration");
    let b = calibrate_restarts(&graph, &records, &config, 5).expect("calibration");
    let target = 0.02 * 100.0;
    let identical = a.epsilon_hat.to_bits() == b.epsilon_hat.to_bits() && a.model == b.model;
    verdict(
        a.epsilon_hat <= target && a.relevant && identical,
        format!(
            "epsilon {:.4} vs target {target} after {} cycles, rerun identical {identical}",
            a.epsilon_hat, a.cycles_used
        ),
    )
}

fn determinacy() -> Verdict {
    let config = CalibrationConfig {
        max_cycles: 3,
        ..Default::default()
    };
    let r = calibrate(&soil_graph(), &reference_records(20), &config).expect("calibration");
    verdict(
        !r.determinacy_ok && r.record_count < r.constant_count,
        format!(
            "{} records for {} constants, determinacy_ok {}",
            r.record_count, r.constant_count, r.determinacy_ok
        ),
    )
}

fn linear_toy(a: f64, b: f64, c: f64) -> Model {
    let g = parse_graph(
        "param p1 range -10 10\nparam p2 range -10 10\n\
         coupling synchronous ++ from p2 to p1\ncoupling synchronous ++ from p1 to p2\n",
    )
    .expect("toy graph");
    let family = FamilyConfig::default();
    let spec = |k: f64, d: f64| ComponentSpec::Univariate(MonotoneSpec::affine_in_family(k, d, &family));
    Model::new(
        g,
        BTreeMap::from([(ComponentId::new("u1"), spec(a, 0.0)), (ComponentId::new("u2"), spec(b, c))]),
    )
    .expect("toy model")
}

fn gauss_seidel() -> Verdict {
    let config = PredictConfig {
        iteration_error: 1e-8,
        ..Default::default()
    };
    let ctx = SolveContext::standalone();
    let (s, d) = solve_state(&linear_toy(0.5, 0.5, 1.0), &[0.0, 0.0], &ctx, &config).expect("contraction");
    let err = (s[0] - 2.0 / 3.0).abs().max((s[1] - 4.0 / 3.0).abs());
    let (_, dd) = solve_state(&linear_toy(2.0, 2.0, 1.0), &[0.0, 0.0], &ctx, &config).expect("divergent");
    verdict(
        err <= 1e-8 && d.iterations_used <= 60 && !d.used_fallback && dd.used_fallback,
        format!(
            "contraction error {err:.1e} in {} sweeps, divergent toy fallback {}",
            d.iterations_used, dd.used_fallback
        ),
    )
}

fn self_consistency() -> Verdict {
    let (start, horizon) = (200, 100);
    let truth = reference_trajectory(start + horizon);
    let graph = soil_graph();
    let mut history = Trajectory::new(nmpc::network::TimeGrid::new(truth.grid.points()[..start].to_vec()).expect("grid"));
    for p in graph.parameters.iter().filter(|p| p.observed) {
        history
            .insert(p.node.clone(), truth.get(&p.node).expect("simulated")[..start].to_vec())
            .expect("history column");
    }
    let config = PredictConfig {
        horizon,
        ..Default::default()
    };
    let exogenous = soil_exogenous(start + horizon);
    let pred = predict(&reference_model(), &history, Some(&exogenous), &config).expect("prediction");
    let mut worst = 0.0f64;
    for p in &graph.parameters {
        let a = pred.trajectories.get(&p.node).expect("predicted");
        let b = &truth.get(&p.node).expect("simulated")[start..];
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    // both sides use the same explicit Euler scheme, so no discretization
    // gap accumulates between them
    verdict(
        worst <= 1e-4 && pred.converged(),
        format!("max deviation {worst:.2e} over {horizon} steps"),
    )
}

fn validator() -> Verdict {
    let mut wrong = Vec::new();
    for f in INVALID_GRAPHS {
        let report = validate_graph(&parse_unchecked(f.text).expect("fixture parses"));
        let rules = report.rules();
        if rules.len() != 1 || !rules.contains(&f.rule) {
            wrong.push(f.name);
        }
    }
    let soil_clean = validate_graph(&soil_graph()).is_ok();
    verdict(
        wrong.is_empty() && soil_clean && INVALID_GRAPHS.len() >= 12,
        format!(
            "{} malformed fixtures, mismatched {:?}, bundled graph clean {soil_clean}",
            INVALID_GRAPHS.len(),
            wrong
        ),
    )
}

fn cli_round_trip() -> Verdict {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let run = |dir: &Path| -> Result<Vec<Vec<u8>>, String> {
        let steps: Vec<Vec<String>> = vec![
            vec!["validate".into(), fixtures.join("soil.nmpc").display().to_string()],
            vec![
                "simulate".into(),
                fixtures.join("soil_model.nmpc").display().to_string(),
                fixtures.join("soil_exogenous.csv").display().to_string(),
                "--initial".into(),
                "moisture=40".into(),
                "-o".into(),
                dir.join("records.csv").display().to_string(),
            ],
            vec![
                "calibrate".into(),
                fixtures.join("soil.nmpc").display().to_string(),
                dir.join("records.csv").display().to_string(),
                "--seed".into(),
                "7".into(),
                "-o".into(),
                dir.join("model.nmpc").display().to_string(),
                "--report".into(),
                dir.join("report.json").display().to_string(),
            ],
            vec![
                "predict".into(),
                dir.join("model.nmpc").display().to_string(),
                dir.join("records.csv").display().to_string(),
                "--horizon".into(),
                "50".into(),
                "-o".into(),
                dir.join("prediction.csv").display().to_string(),
            ],
        ];
        for args in steps {
            let out = Command::new(env!("CARGO_BIN_EXE_nmpc"))
                .args(&args)
                .env_remove("NMPC_SEED")
                .output()
                .map_err(|e| e.to_string())?;
            if !out.status.success() {
                return Err(format!("`{}` exited with {}", args[0], out.status));
            }
        }
        ["records.csv", "model.nmpc", "report.json", "prediction.csv"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let (a, b) = (tempfile::tempdir().expect("temp dir"), tempfile::tempdir().expect("temp dir"));
    match (run(a.path()), run(b.path())) {
        (Ok(x), Ok(y)) => {
            let stable = x == y;
            verdict(stable, format!("all commands exit 0, outputs byte-identical across runs {stable}"))
        }
        (Err(e), _) | (_, Err(e)) => verdict(false, e),
    }
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 9] = [
        ("monotone family", Duration::from_secs(5), monotone_suite),
        ("modulator signs and level sets", Duration::from_secs(10), modulator_suite),
        ("forward/backward consistency", Duration::from_secs(1), consistency),
        ("synthetic recovery", Duration::from_secs(60), recovery),
        ("determinacy flag", Duration::MAX, determinacy),
        ("Gauss-Seidel and fallback", Duration::from_secs(1), gauss_seidel),
        ("prediction self-consistency", Duration::from_secs(2), self_consistency),
        ("validator corpus", Duration::MAX, validator),
        ("CLI round trip", Duration::MAX, cli_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let in_time = took <= *limit;
        let pass = v.pass && in_time;
        if !pass {
            failed += 1;
        }
        let budget = if *limit == Duration::MAX {
            String::new()
        } else {
            format!(" (limit {:.0?})", limit)
        };
        println!(
            "{} criterion {}: {name}: {}; {:.3?}{budget}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            took
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
