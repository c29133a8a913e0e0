//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use encodebench::features::{build_oasm, oasm_sigma_grid, zscore_fit_apply, FeatureSpace};
use encodebench::metrics::{omega, phi, r2_oos};
use encodebench::pipeline::{run_analysis, AnalysisConfig};
use encodebench::ridge::{apply_band_scaling, banded_search, ridge_solve, Band, BandedSearchConfig, RidgeConfig};
use encodebench::splits::{plan_grouped, SplitMode, SplitPlan};
use encodebench::stats::{bh_fdr, chance_level_test, paired_squared_error_ttest};
use encodebench::synthgen::{build_preset, even_participants, generate, write_dataset, Preset, SynthSpec};
use ndarray::{array, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Gaussian elimination with partial pivoting: solves `a x = b`.
fn solve(mut a: Array2<f64>, mut b: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for k in 0..n {
        let pivot = (k..n).max_by(|&i, &j| a[[i, k]].abs().total_cmp(&a[[j, k]].abs())).unwrap();
        for c in 0..n {
            a.swap([k, c], [pivot, c]);
        }
        for c in 0..b.ncols() {
            b.swap([k, c], [pivot, c]);
        }
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for c in k..n {
                a[[i, c]] -= f * a[[k, c]];
            }
            for c in 0..b.ncols() {
                b[[i, c]] -= f * b[[k, c]];
            }
        }
    }
    let mut x = Array2::zeros(b.dim());
    for i in (0..n).rev() {
        for c in 0..b.ncols() {
            let tail: f64 = (i + 1..n).map(|j| a[[i, j]] * x[[j, c]]).sum();
            x[[i, c]] = (b[[i, c]] - tail) / a[[i, i]];
        }
    }
    x
}

/// Centred ridge through the normal equations with one penalty per column.
fn normal_equation_predict(x: &Array2<f64>, y: &Array2<f64>, x_eval: &Array2<f64>, penalties: &[f64]) -> Array2<f64> {
    let xm = x.mean_axis(Axis(0)).unwrap();
    let ym = y.mean_axis(Axis(0)).unwrap();
    let xc = x - &xm;
    let yc = y - &ym;
    let mut gram = xc.t().dot(&xc);
    for (j, p) in penalties.iter().enumerate() {
        gram[[j, j]] += p;
    }
    let w = solve(gram, xc.t().dot(&yc));
    (x_eval - &xm).dot(&w) + &ym
}

fn c1_ridge_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let alphas: Vec<f64> = RidgeConfig::default().alphas.into_iter().filter(|&a| a > 0.0).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(1..=10);
        let n = rng.random_range(p + 2..=30);
        let units = rng.random_range(1..=5);
        let x = normal(&mut rng, n, p);
        let y = x.dot(&normal(&mut rng, p, units)) + normal(&mut rng, n, units);
        let x_eval = normal(&mut rng, 7, p);
        let got = ridge_solve(&x, &y, &x_eval, &alphas).map_err(|e| e.to_string())?;
        for (alpha, pred) in alphas.iter().zip(&got) {
            let want = normal_equation_predict(&x, &y, &x_eval, &vec![*alpha; p]);
            worst = worst.max(max_abs_diff(pred, &want));
        }
        let ls = ridge_solve(&x, &y, &x_eval, &[0.0]).map_err(|e| e.to_string())?;
        worst = worst.max(max_abs_diff(&ls[0], &normal_equation_predict(&x, &y, &x_eval, &vec![0.0; p])));
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 problems, max deviation {worst:.1e}"))
}

fn c2_banded_penalty() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (p1, p2) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let n = rng.random_range(p1 + p2 + 2..=30);
        let bands = [Band::new("a", normal(&mut rng, n + 5, p1)), Band::new("b", normal(&mut rng, n + 5, p2))];
        let y = normal(&mut rng, n, 3);
        let gamma = [rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)];
        let alpha = 2f64.powi(rng.random_range(-5..=8));
        let scaled = apply_band_scaling(&bands, &gamma).map_err(|e| e.to_string())?;
        let (train, eval) = (scaled.slice(s![..n, ..]).to_owned(), scaled.slice(s![n.., ..]).to_owned());
        let got = &ridge_solve(&train, &y, &eval, &[alpha]).map_err(|e| e.to_string())?[0];
        let raw = apply_band_scaling(&bands, &[1.0, 1.0]).map_err(|e| e.to_string())?;
        let penalties: Vec<f64> = (0..p1 + p2)
            .map(|j| alpha / if j < p1 { gamma[0] } else { gamma[1] }.powi(2))
            .collect();
        let want = normal_equation_predict(
            &raw.slice(s![..n, ..]).to_owned(),
            &y,
            &raw.slice(s![n.., ..]).to_owned(),
            &penalties,
        );
        worst = worst.max(max_abs_diff(got, &want));
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;
    Ok(format!("20 problems, max deviation {worst:.1e}"))
}

fn c3_metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let y = normal(&mut rng, 12, 4);
    let base = Array2::from_shape_fn((12, 4), |(_, u)| u as f64 * 0.1);
    let perfect = r2_oos(&y, &y, &base).map_err(|e| e.to_string())?;
    ensure(perfect.iter().all(|&r| r == 1.0), || format!("perfect predictions {perfect}"))?;
    let chance = r2_oos(&y, &base, &base).map_err(|e| e.to_string())?;
    ensure(chance.iter().all(|&r| r == 0.0), || format!("intercept predictions {chance}"))?;
    let hand = r2_oos(&array![[0.0], [2.0]], &array![[2.0], [0.0]], &array![[1.0], [1.0]]).map_err(|e| e.to_string())?;
    ensure(hand[0] == -3.0, || format!("hand example {}", hand[0]))?;
    let m = [0.1, 0.3, 0.05, 0.2];
    let participants = [1, 1, 2, 2];
    let o = omega(&m, &m, &[0.2, 0.4, 0.1, 0.3], &participants).map_err(|e| e.to_string())?;
    ensure(o.summary.mean == 100.0 && o.summary.per_participant.iter().all(|&v| v == 100.0), || {
        format!("omega on tie {:?}", o.summary)
    })?;
    let f = phi(&m, &m, &participants).map_err(|e| e.to_string())?;
    ensure(f.summary.mean == 0.0, || format!("phi on tie {:?}", f.summary))?;
    Ok("R2 = 1, 0, -3; omega 100%, phi 0%".into())
}

fn c4_fold_counts() -> Check {
    let cases = [
        (Preset::PereiraExp1, 8, 7),
        (Preset::PereiraExp2, 6, 5),
        (Preset::Fedorenko, 13, 12),
        (Preset::Blank, 8, 7),
    ];
    let mut seen = Vec::new();
    for (preset, outer, inner) in cases {
        let data = build_preset(preset, 0).map_err(|e| e.to_string())?;
        let plan = data.split.plan(&data.recording, None).map_err(|e| e.to_string())?;
        let counts = plan.inner_counts();
        ensure(plan.n_outer() == outer && counts.iter().all(|&c| c == inner), || {
            format!("{}: {} outer, inner {:?}", preset.name(), plan.n_outer(), counts)
        })?;
        seen.push(format!("{} {outer}/{inner}", preset.name()));
    }
    Ok(seen.join(", "))
}

fn oasm_clipped_mean(report: &encodebench::pipeline::RunReport, mode: SplitMode) -> f64 {
    report.mode(mode).unwrap().model_summary("OASM").unwrap().clipped.mean
}

fn c5_shuffle_contamination() -> Check {
    let mut passed = 0;
    let mut worst = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..20u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data = build_preset(Preset::ShuffleDemo, seed).map_err(|e| e.to_string())?;
        ensure(
            data.recording.n_units() >= 200 && data.recording.sample_blocks.last() == Some(&95),
            || "shuffle-demo layout".into(),
        )?;
        write_dataset(dir.path(), &data).map_err(|e| e.to_string())?;
        let mut config = AnalysisConfig::for_dataset(&data);
        config.seed = seed;
        let report = run_analysis(&config, dir.path()).map_err(|e| e.to_string())?;
        let shuffled = oasm_clipped_mean(&report, SplitMode::Shuffled);
        let contiguous = oasm_clipped_mean(&report, SplitMode::Contiguous);
        worst = (worst.0.min(shuffled), worst.1.max(contiguous.abs()));
        if shuffled > 0.3 && contiguous.abs() <= 0.05 {
            passed += 1;
        }
    }
    ensure(passed >= 19, || format!("{passed}/20 seeds passed"))?;
    Ok(format!(
        "{passed}/20 seeds; lowest shuffled {:.3}, largest |contiguous| {:.4}",
        worst.0, worst.1
    ))
}

fn c6_subsumption() -> Check {
    let mut values = Vec::new();
    for seed in 0..10u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data = build_preset(Preset::SubsumptionDemo, seed).map_err(|e| e.to_string())?;
        write_dataset(dir.path(), &data).map_err(|e| e.to_string())?;
        let mut config = AnalysisConfig::for_dataset(&data);
        config.oasm = None;
        config.modes = vec![SplitMode::Contiguous];
        config.seed = seed;
        let report = run_analysis(&config, dir.path()).map_err(|e| e.to_string())?;
        let entry = report.modes[0].omega_for("SP+SL").ok_or("no omega for SP+SL")?;
        let summary = entry.summary.as_ref().ok_or_else(|| format!("omega failed: {:?}", entry.error))?;
        values.push(summary.mean);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    ensure(mean >= 95.0, || format!("mean omega {mean:.2}% over {values:?}"))?;
    Ok(format!(
        "mean omega {mean:.2}% (range {:.2}..{:.2})",
        values.iter().cloned().fold(f64::INFINITY, f64::min),
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    ))
}

/// Lower-tail Student t probability from the regularized incomplete beta of
/// an independent library.
fn reference_p(t: f64, nu: f64) -> f64 {
    let tail = 0.5 * statrs::function::beta::beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    if t < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

fn c7_statistics() -> Check {
    let bh = bh_fdr(&[0.01, 0.02, 0.04], &[1, 1, 1], 0.05).map_err(|e| e.to_string())?;
    ensure(bh == vec![true, true, true], || format!("BH example {bh:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst: f64 = 0.0;
    for n in [3usize, 30, 300] {
        let y = normal(&mut rng, n, 6);
        let a = &y + &(normal(&mut rng, n, 6) * 0.8);
        let b = &y + &(normal(&mut rng, n, 6) * 1.0);
        let test = paired_squared_error_ttest(&y, &a, &b).map_err(|e| e.to_string())?;
        for (t, p) in test.t.iter().zip(&test.p) {
            worst = worst.max((p - reference_p(*t, (n - 1) as f64)).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("p-value deviation {worst:e}"))?;

    // Pure noise, independent samples, a model on unrelated features.
    let blocks: Vec<i64> = (0..192).map(|i| i / 4).collect();
    let (mut units, mut raw, mut fdr) = (0usize, 0usize, 0usize);
    for seed in 0..20u64 {
        let data = generate(&SynthSpec {
            n_units: 50,
            block_ids: blocks.clone(),
            sample_categories: None,
            signal_features: Vec::new(),
            autocorr_sigma: 0.0,
            noise_scale: 1.0,
            signal_scale: 0.0,
            participants: even_participants(50, 5),
            seed,
        })
        .map_err(|e| e.to_string())?;
        let mut frng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let features = FeatureSpace::new("R", normal(&mut frng, 192, 10), "R").map_err(|e| e.to_string())?;
        let plan = plan_grouped(&blocks, 8, None).map_err(|e| e.to_string())?;
        let fit = banded_search(
            &[Band::new("R", features.data)],
            &data.recording.responses,
            &plan,
            &RidgeConfig::default(),
            &BandedSearchConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let result = chance_level_test(
            &data.recording.responses,
            &fit.test_predictions,
            &fit.intercept_predictions,
            &data.recording.unit_participants,
            0.05,
        )
        .map_err(|e| e.to_string())?;
        units += result.p.len();
        raw += result.p.iter().filter(|&&p| p < 0.05).count();
        fdr += result.n_rejected();
    }
    let raw_rate = raw as f64 / units as f64;
    let fdr_rate = fdr as f64 / units as f64;
    ensure(raw_rate <= 0.07, || format!("{raw}/{units} below 0.05 before FDR"))?;
    ensure(fdr_rate <= 0.01, || format!("{fdr}/{units} rejected after FDR"))?;
    Ok(format!(
        "BH ok; p deviation {worst:.1e}; noise: {raw}/{units} raw, {fdr}/{units} after FDR"
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_encodebench"))
        .args(args)
        .env_remove("ENCODEBENCH_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn payload_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "timings.json" {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn c8_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let data = root.join("data");
    cli(&["synth", "--preset", "pereira-exp2", "--seed", "11", "--output", data.to_str().unwrap()])?;
    // A shorter random search keeps the run quick; every stochastic path is still exercised.
    let config = data.join("analysis.json");
    let mut value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&config).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    value["search"]["max_iters"] = 40.into();
    value["search"]["patience"] = 10.into();
    fs::write(&config, value.to_string()).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for threads in ["1", "8"] {
        let out = root.join(format!("report_{threads}"));
        cli(&[
            "compare", "--config", config.to_str().unwrap(), "--seed", "3", "--threads", threads, "--output",
            out.to_str().unwrap(),
        ])?;
        runs.push(payload_files(&out));
    }
    ensure(runs[0].len() > 3, || "report is missing files".into())?;
    let names: Vec<&String> = runs[0].iter().map(|(n, _)| n).collect();
    ensure(runs[0] == runs[1], || {
        let differing: Vec<&String> =
            runs[0].iter().zip(&runs[1]).filter(|(a, b)| a != b).map(|(a, _)| &a.0).collect();
        format!("payloads differ: {differing:?}")
    })?;
    Ok(format!("{} payload files byte-identical across 1 and 8 threads", names.len()))
}

fn c9_oasm_structure() -> Check {
    let blocks: Vec<i64> = [5usize, 9, 3, 12].iter().enumerate().flat_map(|(b, &len)| vec![b as i64; len]).collect();
    let n = blocks.len();
    for sigma in [0.5, 2.0, 5.0] {
        let f = build_oasm(n, &blocks, sigma).map_err(|e| e.to_string())?;
        let gram = f.data.dot(&f.data.t());
        for i in 0..n {
            for j in 0..n {
                if blocks[i] != blocks[j] && gram[[i, j]] != 0.0 {
                    return Err(format!("rows {i},{j} overlap at sigma {sigma}"));
                }
            }
        }
    }
    let tiny = build_oasm(n, &blocks, 1e-3).map_err(|e| e.to_string())?;
    let dev = max_abs_diff(&tiny.data, &Array2::eye(n));
    ensure(dev <= 1e-9, || format!("small-sigma deviation {dev:e}"))?;
    let grid = oasm_sigma_grid();
    let even = grid.windows(2).all(|w| ((w[1] - w[0]) - 0.1).abs() < 1e-12);
    ensure(grid.len() == 50 && grid[0] == 0.1 && grid[49] == 5.0 && even, || format!("grid {grid:?}"))?;
    Ok(format!("cross-block dots exactly 0; identity deviation {dev:.1e}; grid 50 values 0.1..5.0"))
}

/// Plain nested-CV ridge with per-unit penalty choice.
fn alpha_grid_oracle(x: &Array2<f64>, y: &Array2<f64>, plan: &SplitPlan, alphas: &[f64]) -> Array2<f64> {
    let units = y.ncols();
    let mut preds = Array2::zeros(y.dim());
    for outer in &plan.outer_folds {
        let mut sse = vec![vec![0.0; units]; alphas.len()];
        for inner in &outer.inner_folds {
            let (zt, zv, _) =
                zscore_fit_apply(&x.select(Axis(0), &inner.train), &[&x.select(Axis(0), &inner.validation)]).unwrap();
            let yv = y.select(Axis(0), &inner.validation);
            for (a, p) in ridge_solve(&zt, &y.select(Axis(0), &inner.train), &zv[0], alphas).unwrap().iter().enumerate() {
                for u in 0..units {
                    sse[a][u] += p.column(u).iter().zip(yv.column(u)).map(|(p, y)| (y - p) * (y - p)).sum::<f64>();
                }
            }
        }
        let rest = outer.non_test(plan.n_samples);
        let (zt, ze, _) = zscore_fit_apply(&x.select(Axis(0), &rest), &[&x.select(Axis(0), &outer.test)]).unwrap();
        let refit = ridge_solve(&zt, &y.select(Axis(0), &rest), &ze[0], alphas).unwrap();
        for u in 0..units {
            // Lowest SSE equals highest pooled R²; ties keep the smaller penalty.
            let best = (1..alphas.len()).fold(0, |b, a| if sse[a][u] < sse[b][u] { a } else { b });
            for (r, &s) in outer.test.iter().enumerate() {
                preds[[s, u]] = refit[best][[r, u]];
            }
        }
    }
    preds
}

fn c10_search_sanity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let ids: Vec<i64> = (0..60).map(|i| i / 4).collect();
    let plan = plan_grouped(&ids, 5, None).map_err(|e| e.to_string())?;
    let ridge = RidgeConfig::default();
    for dims in [5, 90] {
        let x = normal(&mut rng, 60, dims);
        let y = x.dot(&normal(&mut rng, dims, 4)) * 0.3 + normal(&mut rng, 60, 4);
        let fit = banded_search(&[Band::new("x", x.clone())], &y, &plan, &ridge, &BandedSearchConfig::default())
            .map_err(|e| e.to_string())?;
        ensure(fit.test_predictions == alpha_grid_oracle(&x, &y, &plan, &ridge.alphas), || {
            format!("single band with {dims} dims differs from alpha-grid selection")
        })?;
    }

    // Three random bands under the default rule: the random phase stays within the cap.
    let bands: Vec<Band> = (0..3).map(|b| Band::new(&format!("b{b}"), normal(&mut rng, 60, 2 + b))).collect();
    let y = normal(&mut rng, 60, 3);
    let fit = banded_search(&bands, &y, &plan, &ridge, &BandedSearchConfig::default()).map_err(|e| e.to_string())?;
    let most = fit.outer.iter().map(|o| o.trace.random_iterations).max().unwrap_or(0);
    ensure(most <= 1000, || format!("{most} random iterations"))?;

    // Patience as long as the cap: the cap binds.
    let small_ids: Vec<i64> = (0..24).map(|i| i / 4).collect();
    let small_plan = plan_grouped(&small_ids, 3, None).map_err(|e| e.to_string())?;
    let capped = BandedSearchConfig {
        patience: 1000,
        min_improvement: f64::MIN_POSITIVE,
        ..BandedSearchConfig::default()
    };
    let small_bands: Vec<Band> = (0..2).map(|b| Band::new(&format!("c{b}"), normal(&mut rng, 24, 2))).collect();
    let fit = banded_search(&small_bands, &normal(&mut rng, 24, 2), &small_plan, &RidgeConfig { alphas: vec![1.0] }, &capped)
        .map_err(|e| e.to_string())?;
    ensure(fit.outer.iter().all(|o| o.trace.random_iterations == 1000), || {
        "cap of 1000 iterations not enforced".into()
    })?;

    // Plateau: two copies of one band with an unpenalized fit score the same
    // for every weighting, so the rule fires after exactly 50 stale draws.
    let shared = normal(&mut rng, 60, 3);
    let plateau = [Band::new("p", shared.clone()), Band::new("q", shared)];
    let fit = banded_search(
        &plateau,
        &normal(&mut rng, 60, 2),
        &plan,
        &RidgeConfig { alphas: vec![0.0] },
        &BandedSearchConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(
        fit.outer.iter().all(|o| o.trace.early_stopped && o.trace.random_iterations == 50 && o.trace.mask_candidates == 3),
        || format!("plateau traces {:?}", fit.outer.iter().map(|o| &o.trace).collect::<Vec<_>>()),
    )?;
    Ok(format!("single band exact (primal and dual); max {most} iterations; cap 1000; plateau stop after 50"))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "ridge oracle equivalence", budget: Some(Duration::from_secs(10)), run: c1_ridge_oracle },
        Criterion { id: 2, name: "banded-penalty equivalence", budget: Some(Duration::from_secs(5)), run: c2_banded_penalty },
        Criterion { id: 3, name: "metric identities", budget: None, run: c3_metric_identities },
        Criterion { id: 4, name: "fold counts", budget: None, run: c4_fold_counts },
        Criterion { id: 5, name: "shuffled-split contamination", budget: Some(Duration::from_secs(300)), run: c5_shuffle_contamination },
        Criterion { id: 6, name: "omega subsumption", budget: Some(Duration::from_secs(600)), run: c6_subsumption },
        Criterion { id: 7, name: "statistics oracles", budget: None, run: c7_statistics },
        Criterion { id: 8, name: "determinism across thread counts", budget: None, run: c8_determinism },
        Criterion { id: 9, name: "OASM structure", budget: None, run: c9_oasm_structure },
        Criterion { id: 10, name: "search sanity", budget: None, run: c10_search_sanity },
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in criteria.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.1?}, budget {b:?}")),
            (o, _) => o,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(e) => {
                failed += 1;
                ("FAIL", e.as_str())
            }
        };
        println!("[{tag}] criterion {:>2} {} ({:.1?}): {detail}", c.id, c.name, elapsed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
