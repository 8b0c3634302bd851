//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#![allow(clippy::excessive_precision)]

use std::process::ExitCode;
use std::time::{Duration, Instant};

use depthfuse::experiment::{execute, suites, sweep, sweep_csv, Arm, ExperimentConfig, ExperimentResult, SweepAxis};
use depthfuse::fusion::{analytic_update, update_from_weights, FusionConfig};
use depthfuse::geometry::{roundtrip_candidate, CameraIntrinsics, CameraPose};
use depthfuse::grid::Grid;
use depthfuse::matching::build_cost_volume;
use depthfuse::metrics::{compute_metrics, MetricsReport};
use depthfuse::probability::{
    consistency_threshold, gaussian_pdf, sample_candidates, within_kappa_sigma, BinCoefficients, GaussianDepthMap,
};
use depthfuse::synthetic::{make_window, CameraSpec, PriorModel, TrajectorySpec};
use nalgebra::{Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn timed(limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail += &format!(
                "; runtime {:.2}s exceeds {:.0}s",
                took.as_secs_f64(),
                limit.as_secs_f64()
            );
        }
    }
    (o, took)
}

// ---------------------------------------------------------------- oracles

fn phi(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn probit_bisect(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn oracle_bins(n: usize, beta: f64) -> Vec<f64> {
    let p_star = libm::erf(beta / std::f64::consts::SQRT_2);
    let tail = (1.0 - p_star) / 2.0;
    let edge = |k: usize| probit_bisect(k as f64 / n as f64 * p_star + tail);
    (1..=n).map(|k| 0.5 * (edge(k - 1) + edge(k))).collect()
}

/// Standard normal mass on `[a, b]` by composite 16-point Gauss-Legendre.
fn normal_mass(a: f64, b: f64) -> f64 {
    const X: [f64; 8] = [
        0.0950125098376374,
        0.2816035507792589,
        0.4580167776572274,
        0.6178762444026438,
        0.7554044083550030,
        0.8656312023878318,
        0.9445750230732326,
        0.9894009349916499,
    ];
    const W: [f64; 8] = [
        0.1894506104550685,
        0.1826034150449236,
        0.1691565193950025,
        0.1495959888165767,
        0.1246289712555339,
        0.0951585116824928,
        0.0622535239386479,
        0.0271524594117541,
    ];
    let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (c, r) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (x, w) in X.iter().zip(W) {
            total += w * r * (pdf(c - r * x) + pdf(c + r * x));
        }
    }
    total
}

// ------------------------------------------------------------- criteria

fn sampling_math() -> Outcome {
    let mut worst_oracle = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut worst_anti = 0.0f64;
    for &beta in &[1.0, 2.0, 3.0, 5.0] {
        for n in 1..=64 {
            let c = BinCoefficients::new(n, beta).unwrap();
            let oracle = oracle_bins(n, beta);
            for (b, o) in c.b().iter().zip(&oracle) {
                worst_oracle = worst_oracle.max((b - o).abs());
            }
            let edges = c.edges();
            let target = c.p_star() / n as f64;
            for k in 0..n {
                worst_mass = worst_mass.max((normal_mass(edges[k], edges[k + 1]) - target).abs());
            }
            for k in 0..n {
                worst_anti = worst_anti.max((c.b()[k] + c.b()[n - 1 - k]).abs());
            }
        }
    }
    let single = BinCoefficients::new(1, 3.0).unwrap().b() == [0.0];
    outcome(
        worst_oracle < 1e-6 && worst_mass < 1e-9 && worst_anti < 1e-12 && single,
        format!(
            "max |b - oracle| = {worst_oracle:.2e}, max |mass - P*/N| = {worst_mass:.2e}, \
             max |b_k + b_(N+1-k)| = {worst_anti:.2e}, N=1 -> [0]: {single}"
        ),
    )
}

fn random_pose(rng: &mut ChaCha8Rng) -> CameraPose {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = if axis.norm() < 1e-3 { Vector3::z() } else { axis };
    CameraPose::from_axis_angle(
        Unit::new_normalize(axis).into_inner(),
        rng.random_range(-3.0..3.0),
        Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        ),
    )
}

fn geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_rt = 0.0f64;
    for _ in 0..100_000 {
        let k = CameraIntrinsics::new(
            rng.random_range(50.0..800.0),
            rng.random_range(50.0..800.0),
            rng.random_range(10.0..320.0),
            rng.random_range(10.0..240.0),
            640,
            480,
        )
        .unwrap();
        let pose = random_pose(&mut rng);
        let (u, v) = (rng.random_range(0.0..639.0), rng.random_range(0.0..479.0));
        let d = rng.random_range(0.1..50.0);
        let p = roundtrip_candidate(u, v, d, &pose, &k, &pose, &k).unwrap();
        worst_rt = worst_rt
            .max((p.u - u).abs())
            .max((p.v - v).abs())
            .max((p.depth - d).abs());
    }

    // Neighbour translated by +b along x sees a fronto-parallel point at
    // u' = u - fx * b / d.
    let mut worst_disp = 0.0f64;
    let k = CameraIntrinsics::new(130.0, 130.0, 80.0, 60.0, 160, 120).unwrap();
    for _ in 0..10_000 {
        let (u, v) = (rng.random_range(0.0..159.0), rng.random_range(0.0..119.0));
        let d = rng.random_range(0.5..20.0);
        let b = rng.random_range(-0.5..0.5);
        let nbr = CameraPose::from_translation(Vector3::new(-b, 0.0, 0.0));
        let p = roundtrip_candidate(u, v, d, &CameraPose::identity(), &k, &nbr, &k).unwrap();
        worst_disp = worst_disp.max((p.u - (u - k.fx * b / d)).abs()).max((p.v - v).abs());
    }

    let synth = make_window(
        &suites::objects().scene,
        &CameraSpec::default(),
        &TrajectorySpec::standard(),
        None,
        &PriorModel::default(),
    )
    .unwrap();
    let window = synth.window;
    let coeffs = BinCoefficients::new(5, 3.0).unwrap();
    let cands = sample_candidates(&window.reference().prior, &coeffs, 0.1).unwrap();
    let base = build_cost_volume(&window, &cands, 5.0, true).unwrap();
    let mut worst_gauge = 0.0f64;
    let mut counts_equal = true;
    for _ in 0..3 {
        let g = random_pose(&mut rng);
        let moved = build_cost_volume(&window.regauged(&g), &cands, 5.0, true).unwrap();
        for y in 0..base.height() {
            for x in 0..base.width() {
                for (a, b) in base.scores(x, y).iter().zip(moved.scores(x, y)) {
                    worst_gauge = worst_gauge.max((a - b).abs());
                }
                counts_equal &= base.view_counts(x, y) == moved.view_counts(x, y);
            }
        }
    }
    outcome(
        worst_rt < 1e-9 && worst_disp < 1e-9 && worst_gauge < 1e-6 && counts_equal,
        format!(
            "round-trip max err {worst_rt:.2e} (1e5 samples), disparity law max err {worst_disp:.2e}, \
             gauge max score diff {worst_gauge:.2e}, view counts equal: {counts_equal}"
        ),
    )
}

fn consistency_gate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    let mut accepted = 0;
    for _ in 0..100_000 {
        let mu = rng.random_range(0.1..20.0);
        let sigma = rng.random_range(1e-3..5.0);
        let kappa = rng.random_range(0.1..10.0);
        let d = mu + sigma * rng.random_range(-12.0..12.0);
        let literal = gaussian_pdf(d, mu, sigma) > consistency_threshold(sigma, kappa);
        let gate = within_kappa_sigma(d, mu, sigma, kappa);
        mismatches += usize::from(literal != gate);
        accepted += usize::from(gate);
    }

    let synth = make_window(
        &suites::objects().scene,
        &CameraSpec::default(),
        &TrajectorySpec::standard(),
        None,
        &PriorModel::default(),
    )
    .unwrap();
    let coeffs = BinCoefficients::new(5, 3.0).unwrap();
    let cands = sample_candidates(&synth.window.reference().prior, &coeffs, 0.1).unwrap();
    let weighted = build_cost_volume(&synth.window, &cands, f64::INFINITY, true).unwrap();
    let plain = build_cost_volume(&synth.window, &cands, 5.0, false).unwrap();
    let bits = |v: &depthfuse::CostVolume| -> Vec<(u64, u16)> {
        (0..v.height())
            .flat_map(|y| (0..v.width()).map(move |x| (x, y)))
            .flat_map(|(x, y)| {
                v.scores(x, y)
                    .iter()
                    .zip(v.view_counts(x, y))
                    .map(|(s, c)| (s.to_bits(), *c))
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    let bitwise = bits(&weighted) == bits(&plain);
    outcome(
        mismatches == 0 && bitwise,
        format!(
            "predicate mismatches {mismatches}/100000 ({accepted} inside the band), \
             kappa=inf volume bit-identical to unweighted: {bitwise}"
        ),
    )
}

fn fusion_limits() -> Outcome {
    let c = BinCoefficients::new(5, 3.0).unwrap();
    let cfg = FusionConfig::default();
    let (mu, sigma) = (2.0, 0.3);
    let mut one_hot_exact = true;
    for k in 0..5 {
        let mut w = [0.0; 5];
        w[k] = 1.0;
        let (m, _) = update_from_weights(&w, mu, sigma, &c, cfg.sigma_min);
        one_hot_exact &= m == mu + c.b()[k] * sigma;
    }
    let (m, s) = analytic_update(&[0.42; 5], &[4; 5], mu, sigma, &c, &cfg);
    let expected_ratio = (c.b().iter().map(|b| b * b).sum::<f64>() / 5.0).sqrt();
    let ratio = s / sigma;
    let fixture = 1.2620210627102638;
    let pass = one_hot_exact
        && (m - mu).abs() < 1e-9
        && (ratio - expected_ratio).abs() < 1e-9
        && (ratio - fixture).abs() < 1e-9;
    outcome(
        pass,
        format!(
            "one-hot exact: {one_hot_exact}; uniform scores: |mu_new - mu| = {:.1e}, sigma ratio {ratio:.13} \
             (sqrt(sum b^2/N) = {expected_ratio:.13}, fixture {fixture})",
            (m - mu).abs()
        ),
    )
}

fn run_suite(configs: &[ExperimentConfig], arm: Arm, n_iter: usize) -> Vec<ExperimentResult> {
    configs
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.arm = arm;
            c.fusion.n_iter = n_iter;
            execute(&c).unwrap()
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn convergence() -> Outcome {
    let results = run_suite(&suites::standard_suite(), Arm::PsCw, 4);
    let per_iter: Vec<f64> = (0..4)
        .map(|i| {
            mean(
                results
                    .iter()
                    .map(|r| r.trace.iterations[i].metrics.as_ref().unwrap().rmse),
            )
        })
        .collect();
    let monotone = per_iter.windows(2).all(|w| w[1] <= w[0]);
    let mut halved = true;
    let mut ratios = Vec::new();
    for r in &results {
        let ratio = r.fused_report().abs_rel / r.prior_report().abs_rel;
        halved &= ratio <= 0.5;
        ratios.push(format!("{}={ratio:.3}", r.config.name));
    }
    let prior_rmse = mean(results.iter().map(|r| r.prior_report().rmse));
    outcome(
        monotone && halved,
        format!(
            "mean RMSE prior {prior_rmse:.4} -> iters {} ; abs_rel fused/prior: {}",
            per_iter.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "),
            ratios.join(", ")
        ),
    )
}

fn ps_vs_us() -> Outcome {
    let suite = suites::standard_suite();
    let ps = run_suite(&suite, Arm::Ps, 1);
    let us = run_suite(&suite, Arm::Us, 1);
    let ps_rmse = mean(ps.iter().map(|r| r.fused_report().rmse));
    let us_rmse = mean(us.iter().map(|r| r.fused_report().rmse));
    let prior_rmse = mean(ps.iter().map(|r| r.prior_report().rmse));
    let per_scene = ps
        .iter()
        .zip(&us)
        .all(|(p, u)| p.fused_report().rmse < u.fused_report().rmse);
    let margin_prior = us_rmse - prior_rmse;
    let margin_ps = us_rmse - ps_rmse;
    outcome(
        ps_rmse < us_rmse && per_scene && (margin_prior > 0.0 || margin_ps > 0.0),
        format!(
            "N_s=5 n_iter=1 mean RMSE: PS {ps_rmse:.4}, US {us_rmse:.4}, prior {prior_rmse:.4}; \
             US - prior = {margin_prior:+.4}, US - PS = {margin_ps:+.4}; PS < US on every scene: {per_scene}"
        ),
    )
}

fn cw_rescue() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in suites::corruption_suite() {
        let start = Instant::now();
        let ps = run_suite(std::slice::from_ref(&c), Arm::Ps, c.fusion.n_iter).remove(0);
        let cw = run_suite(std::slice::from_ref(&c), Arm::PsCw, c.fusion.n_iter).remove(0);
        let took = start.elapsed().as_secs_f64();
        let (prior_r, ps_r) = ps.region_reports().unwrap();
        let (_, cw_r) = cw.region_reports().unwrap();
        let ok = cw_r.rmse <= ps_r.rmse && cw_r.rmse <= 1.5 * prior_r.rmse && took < 60.0;
        pass &= ok;
        parts.push(format!(
            "{} [{}] region RMSE prior {:.4} PS {:.4} PS+CW {:.4} ({:.2}x prior, {:.1}s)",
            c.name,
            if ok { "ok" } else { "fail" },
            prior_r.rmse,
            ps_r.rmse,
            cw_r.rmse,
            cw_r.rmse / prior_r.rmse,
            took
        ));
    }
    outcome(pass, parts.join("; "))
}

fn nll_direction() -> Outcome {
    let results = run_suite(&suites::standard_suite(), Arm::PsCw, FusionConfig::default().n_iter);
    let prior = mean(results.iter().map(|r| r.prior_report().nll));
    let fused = mean(results.iter().map(|r| r.fused_report().nll));
    let per_scene = results.iter().all(|r| r.fused_report().nll < r.prior_report().nll);
    outcome(
        fused < prior,
        format!("mean NLL prior {prior:.4} -> fused {fused:.4}; lower on every scene: {per_scene}"),
    )
}

fn metrics_module() -> Outcome {
    let gt = Grid::from_vec(3, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0]).unwrap();
    let pred = GaussianDepthMap::new(
        Grid::from_vec(3, 3, vec![1.1, 2.6, 2.0, 4.0, 6.5, 3.0, 8.0, 15.0, 9.5]).unwrap(),
        Grid::from_vec(3, 3, vec![0.1, 0.5, 1.0, 0.2, 2.0, 0.25, 1.0, 4.0, 0.5]).unwrap(),
    )
    .unwrap();
    let m = compute_metrics(&pred, &gt, None, None, "fixture").unwrap();
    // Evaluated independently at 40 significant digits.
    let expected = [
        ("abs_rel", m.abs_rel, 0.28902116402116402116),
        ("sq_rel", m.sq_rel, 0.97402116402116402116),
        ("abs_diff", m.abs_diff, 1.6333333333333333333),
        ("rmse", m.rmse, 2.6430201579926619159),
        ("rmse_log", m.rmse_log, 0.36624513562048415189),
        ("delta_1", m.delta_1, 44.444444444444444444),
        ("delta_2", m.delta_2, 77.777777777777777778),
        ("delta_3", m.delta_3, 88.888888888888888889),
        ("nll", m.nll, 7.9919255348902120702),
    ];
    let mut worst = 0.0f64;
    let mut worst_name = "";
    for (name, got, want) in expected {
        let err = (got - want).abs();
        if err > worst {
            worst = err;
            worst_name = name;
        }
    }
    let fixtures_ok = worst < 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut monotone = true;
    let mut scale_exact = true;
    let mut log_err = 0.0f64;
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..12), rng.random_range(1..12));
        let g = Grid::from_fn(w, h, |_, _| rng.random_range(0.2..20.0));
        let p = Grid::from_fn(w, h, |_, _| rng.random_range(0.2..20.0));
        let s = Grid::filled(w, h, 0.5);
        let map = GaussianDepthMap::new(p.clone(), s.clone()).unwrap();
        let r = compute_metrics(&map, &g, None, None, "").unwrap();
        monotone &= r.delta_1 <= r.delta_2 && r.delta_2 <= r.delta_3;
        for c in [2.0, 0.25] {
            let map_c = GaussianDepthMap::new(p.map(|v| v * c), s.clone()).unwrap();
            let rc = compute_metrics(&map_c, &g.map(|v| v * c), None, None, "").unwrap();
            scale_exact &= rc.abs_rel == r.abs_rel
                && (rc.delta_1, rc.delta_2, rc.delta_3) == (r.delta_1, r.delta_2, r.delta_3)
                && rc.abs_diff == c * r.abs_diff
                && rc.rmse == c * r.rmse
                && rc.sq_rel == c * r.sq_rel;
            log_err = log_err.max((rc.rmse_log - r.rmse_log).abs());
        }
    }
    outcome(
        fixtures_ok && monotone && scale_exact && log_err < 1e-12,
        format!(
            "3x3 fixture max err {worst:.1e} ({worst_name}); delta monotone: {monotone}; \
             power-of-two scaling exact: {scale_exact}; rmse_log drift {log_err:.1e}"
        ),
    )
}

fn determinism() -> Outcome {
    let mut configs = [suites::objects(), suites::moving_box()];
    configs[1].arm = Arm::Us;
    let run = |threads: usize| -> Vec<Vec<u8>> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            configs
                .iter()
                .flat_map(|c| {
                    let r = execute(c).unwrap();
                    let mut trace = Vec::new();
                    let reports: Vec<MetricsReport> =
                        r.trace.iterations.iter().map(|s| s.metrics.clone().unwrap()).collect();
                    MetricsReport::write_csv(&reports, &mut trace).unwrap();
                    [r.metrics_csv().unwrap(), trace]
                })
                .chain(std::iter::once({
                    let rows = sweep(&configs[0], SweepAxis::NIter, &[1.0, 2.0], false).unwrap();
                    sweep_csv(SweepAxis::NIter, &rows).unwrap()
                }))
                .collect()
        })
    };
    let baseline = run(1);
    let identical = [2, 3, 8].iter().all(|&t| run(t) == baseline);
    let again = run(1) == baseline;
    outcome(
        identical && again,
        format!("metrics, trace and sweep CSVs byte-identical across 1/2/3/8 threads: {identical}; repeat run identical: {again}"),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Option<u64>, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("1 sampling math", Some(5), sampling_math),
        ("2 geometry", Some(10), geometry),
        ("3 consistency gate", Some(5), consistency_gate),
        ("4 fusion limits", Some(1), fusion_limits),
        ("5 convergence trend", Some(60), convergence),
        ("6 PS vs US", None, ps_vs_us),
        ("7 CW rescue", Some(180), cw_rescue),
        ("8 NLL direction", None, nll_direction),
        ("9 metrics module", None, metrics_module),
        ("10 determinism", None, determinism),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let (o, took) = timed(limit.map(Duration::from_secs), f);
        failed += usize::from(!o.pass);
        println!(
            "criterion {name:<22} {} ({:.2}s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
