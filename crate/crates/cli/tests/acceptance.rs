//! Acceptance suite: one line per criterion, non-zero exit if any fails.

#[path = "../../gbt/tests/support/oracle.rs"]
mod oracle;

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use demand_core::baselines::ForecastSource;
use demand_core::eval::{weighted_mae, weighted_rmse};
use demand_core::pipeline::{run, Inputs, Predictor, Prepared, RunOutput};
use demand_core::preprocess::{detect_fake_zeros, smooth_panel};
use demand_core::seasonal::standardize_year;
use demand_core::synth::{generate_panel, SynthData, SynthSpec};
use demand_core::{ProductId, ProductSeries, RunConfig, SalesPanel};
use demand_gbt::{grad_hess, LossKind, Matrix, Tree, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 0;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, outcome: Outcome) -> Outcome {
    let timing = format!("{:.2}s of {}s", elapsed.as_secs_f64(), limit.as_secs());
    match outcome {
        Ok(d) if elapsed <= limit => Ok(format!("{d}; {timing}")),
        Ok(d) => Err(format!("{d}; too slow: {timing}")),
        Err(d) => Err(format!("{d}; {timing}")),
    }
}

fn gradients() -> Outcome {
    let ys = [0.0, 1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0, 34.0, 50.0];
    let fs = [-3.0, -1.5, -0.5, 0.0, 0.3, 1.0, 1.7, 2.5, 3.2, 4.0];
    let mut worst: f64 = 0.0;
    for loss in [LossKind::PoissonLogLink, LossKind::Squared] {
        for &y in &ys {
            for &f in &fs {
                let (g, h) = grad_hess(loss, y, f).map_err(|e| e.to_string())?;
                let d1 = 1e-5;
                let fd_g = (loss.loss(y, f + d1) - loss.loss(y, f - d1)) / (2.0 * d1);
                let d2 = 1e-3;
                let fd_h = (loss.loss(y, f + d2) - 2.0 * loss.loss(y, f) + loss.loss(y, f - d2))
                    / (d2 * d2);
                worst = worst
                    .max((g - fd_g).abs() / g.abs().max(1.0))
                    .max((h - fd_h).abs() / h.abs().max(1.0));
            }
        }
    }
    check(
        worst <= 1e-6,
        format!("max relative error {worst:.2e} over 2 x 100 points"),
    )
}

fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix {
    let n = rng.random_range(2..=64);
    let p = rng.random_range(1..=4);
    let kinds: Vec<u8> = (0..p).map(|_| rng.random_range(0..3)).collect();
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        for &kind in &kinds {
            values.push(match kind {
                0 => rng.random_range(0..4) as f64,
                1 => rng.random_range(-2.0..2.0),
                _ if rng.random_bool(0.2) => f64::NAN,
                _ => rng.random_range(0..10) as f64 * 0.5,
            });
        }
    }
    Matrix::new((0..p).map(|i| format!("f{i}")).collect(), n, values).unwrap()
}

fn tree_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for case in 0..50 {
        let m = random_matrix(&mut rng);
        let params = TreeParams {
            max_depth: rng.random_range(1..=6),
            lambda: [0.0, 0.5, 1.0][rng.random_range(0..3)],
            min_split_loss: [0.0, 0.01, 0.2][rng.random_range(0..3)],
            min_child_weight: [0.0, 1.0][rng.random_range(0..2)],
            max_delta_step: [0.0, 0.7][rng.random_range(0..2)],
        };
        let loss = if rng.random_bool(0.5) {
            LossKind::PoissonLogLink
        } else {
            LossKind::Squared
        };
        let (g, h): (Vec<f64>, Vec<f64>) = (0..m.n_rows())
            .map(|_| {
                let y = rng.random_range(0..20) as f64;
                grad_hess(loss, y, rng.random_range(-1.0..2.5)).unwrap()
            })
            .unzip();
        let tree = Tree::fit(&m, &g, &h, &params).map_err(|e| e.to_string())?;
        oracle::compare(&tree, &oracle::oracle_tree(&m, &g, &h, &params))
            .map_err(|d| format!("matrix {case}: {d}"))?;
    }
    Ok("50 of 50 trees identical to brute force".into())
}

fn synth_panel() -> SynthData {
    generate_panel(&SynthSpec {
        n_products: 500,
        n_categories: 20,
        weeks: 200,
        lifetime_median: 30.0,
        seed: SEED,
        ..SynthSpec::default()
    })
    .unwrap()
}

fn inputs(d: &SynthData) -> Inputs {
    Inputs {
        panel: d.panel.clone(),
        catalog: d.catalog.clone(),
        covariates: d.covariates.clone(),
    }
}

fn global_config() -> RunConfig {
    RunConfig {
        train_len: 170,
        valid_len: 10,
        test_len: 20,
        cold_start_filter: 6,
        seed: SEED,
        ..RunConfig::default()
    }
}

fn global_vs_local(out: &RunOutput) -> Outcome {
    let (model, es) = (&out.reports[0].report, &out.reports[1].report);
    let (m, e) = (model.group("all").unwrap(), es.group("all").unwrap());
    let (rmse, mae) = (m.rmse / e.rmse, m.mae / e.mae);
    check(
        rmse <= 0.90 && mae <= 0.95,
        format!(
            "RMSE ratio {rmse:.3} (<= 0.90), MAE ratio {mae:.3} (<= 0.95) on {} rows",
            m.rows
        ),
    )
}

fn cold_start(d: &SynthData) -> Outcome {
    let config = RunConfig {
        cold_start_filter: 0,
        ..global_config()
    };
    let out = run(&inputs(d), &config).map_err(|e| e.to_string())?;
    if !matches!(out.predictor, Predictor::Gbt(_)) {
        return Err("boosted model was not fitted".into());
    }
    let young: Vec<_> = out
        .test_rows
        .iter()
        .filter(|r| r.life_at_target < 12)
        .collect();
    if young.is_empty() {
        return Err("no young products in the test range".into());
    }
    let mut fallbacks = 0;
    for r in &young {
        let observed = d
            .panel
            .series_of(&r.product)
            .unwrap()
            .on_sale_weeks_before(r.origin + 1);
        if observed < 2 {
            if r.baseline.source != ForecastSource::CategoryMean {
                return Err(format!(
                    "{} week {}: ES used {:?}",
                    r.product, r.target, r.baseline.source
                ));
            }
            fallbacks += 1;
        }
        if !(r.forecast.is_finite() && r.forecast >= 0.0) {
            return Err(format!(
                "{} week {}: forecast {}",
                r.product, r.target, r.forecast
            ));
        }
    }
    let col =
        |f: fn(&&demand_core::pipeline::TestRow) -> f64| young.iter().map(f).collect::<Vec<_>>();
    let (y, p) = (col(|r| r.actual), col(|r| r.price));
    let gbt = weighted_rmse(&y, &col(|r| r.forecast), &p).unwrap();
    let es = weighted_rmse(&y, &col(|r| r.baseline.value), &p).unwrap();
    check(
        gbt < es && fallbacks > 0,
        format!(
            "{} rows under 12 weeks: RMSE {gbt:.1} vs ES {es:.1}; {fallbacks} ES category-mean fallbacks",
            young.len()
        ),
    )
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn seasonality_recovery(d: &SynthData) -> Outcome {
    // As many patterns as the generator has seasonal families.
    let config = RunConfig {
        clusters: SynthSpec::default().n_families,
        ..global_config()
    };
    let prepared =
        Prepared::fit(&inputs(d), &config, config.train_len).map_err(|e| e.to_string())?;
    let model = prepared.seasonality.ok_or("no seasonality model")?;
    let mut worst = (f64::INFINITY, String::new());
    let mut checked = 0;
    for (category, truth) in &d.truth.category_curves {
        if d.catalog.members(category).len() < 20 {
            continue;
        }
        checked += 1;
        let r = pearson(model.pattern_for_category(category), truth);
        if r < worst.0 {
            worst = (r, category.0.clone());
        }
    }
    check(
        checked > 0 && worst.0 >= 0.9,
        format!(
            "{checked} categories, min r {:.3} ({}) with k = {}",
            worst.0, worst.1, config.clusters
        ),
    )
}

fn standardization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_sum: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    let mut years = 0;
    while years < 1000 {
        let tau = rng.random_range(4..=60);
        let on: Vec<bool> = (0..tau).map(|_| rng.random_bool(0.75)).collect();
        let x: Vec<f64> = (0..tau).map(|_| rng.random_range(0.0..300.0)).collect();
        let Ok(s) = standardize_year(&x, &on) else {
            continue;
        };
        years += 1;
        let listed = on.iter().filter(|&&v| v).count() as f64;
        worst_sum = worst_sum.max((s.iter().flatten().sum::<f64>() - listed / tau as f64).abs());
        let e = rng.random_range(-30..30);
        let pow2: Vec<f64> = x.iter().map(|v| v * 2f64.powi(e)).collect();
        if standardize_year(&pow2, &on).unwrap() != s {
            return Err(format!(
                "power-of-two scaling 2^{e} changed the standardized year"
            ));
        }
        let c = rng.random_range(1e-3..1e3);
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        for (a, b) in s
            .iter()
            .flatten()
            .zip(standardize_year(&scaled, &on).unwrap().iter().flatten())
        {
            worst_scale = worst_scale.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
        }
    }
    check(
        worst_sum <= 1e-9 && worst_scale <= 1e-12,
        format!(
            "1000 years: max sum error {worst_sum:.1e}; bitwise under 2^k scaling, max relative drift {worst_scale:.1e} otherwise"
        ),
    )
}

fn fake_zeros(d: &SynthData) -> Outcome {
    let mask = detect_fake_zeros(&d.panel);
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (flags, truth) in mask.iter().zip(&d.truth.stockout) {
        for (&f, &t) in flags.iter().zip(truth) {
            match (f, t) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
    }
    let recall = tp as f64 / (tp + fneg).max(1) as f64;
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    check(
        tp > 0 && recall >= 0.9 && precision >= 0.8,
        format!(
            "{} stockout weeks: recall {recall:.3} (>= 0.90), precision {precision:.3} (>= 0.80)",
            tp + fneg
        ),
    )
}

/// Cap rule written out week by week.
fn cap_oracle(y: &[u32], on: &[bool], window: usize, gamma: f64) -> Vec<f64> {
    let mut x: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let Some(first) = on.iter().position(|&s| s) else {
        return x;
    };
    let last = on.iter().rposition(|&s| s).unwrap();
    for t in first..=last {
        let lo = if t >= first + window {
            t - window
        } else {
            first
        };
        let n = t - lo;
        if n < 2 {
            continue;
        }
        let mut sum = 0.0;
        for u in lo..t {
            sum += y[u] as f64;
        }
        let mean = sum / n as f64;
        let mut ss = 0.0;
        for u in lo..t {
            ss += (y[u] as f64 - mean) * (y[u] as f64 - mean);
        }
        let cap = mean + gamma * (ss / n as f64).sqrt();
        if y[t] as f64 > cap {
            x[t] = cap;
        }
    }
    x
}

fn smoothing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut capped = 0;
    for case in 0..1000 {
        let n = rng.random_range(3..=24);
        let a = rng.random_range(0..n);
        let b = rng.random_range(a + 1..=n);
        let on: Vec<bool> = (0..n).map(|t| t >= a && t < b).collect();
        let units: Vec<u32> = (0..n)
            .map(|t| match (on[t], rng.random_bool(0.15)) {
                (false, _) => 0,
                (true, true) => rng.random_range(20..200),
                (true, false) => rng.random_range(0..12),
            })
            .collect();
        let window = rng.random_range(2..=10);
        let gamma = rng.random_range(0.5..4.0);
        let expected = cap_oracle(&units, &on, window, gamma);
        let panel = SalesPanel::new(
            n,
            vec![(
                ProductId::from("p"),
                ProductSeries {
                    units,
                    on_sale: on,
                    in_stock: vec![true; n],
                },
            )],
        )
        .unwrap();
        let got = smooth_panel(&panel, window, gamma).map_err(|e| e.to_string())?;
        if got.x[0] != expected {
            return Err(format!(
                "series {case} differs: {:?} vs {expected:?}",
                got.x[0]
            ));
        }
        capped += got.capped_mask[0].iter().filter(|&&c| c).count();
    }
    Ok(format!(
        "1000 of 1000 series identical; {capped} weeks capped"
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg =
        "synth_products = 60\nsynth_categories = 4\nsynth_weeks = 80\ntau = 26\nclusters = 3\n\
               train_len = 60\nvalid_len = 6\ntest_len = 8\nrounds = 80\noverride_ranges = true\n";
    fs::write(dir.path().join("c.cfg"), cfg).map_err(|e| e.to_string())?;
    for out in ["a", "b"] {
        let o = Command::new(env!("CARGO_BIN_EXE_demandcast"))
            .args([
                "pipeline",
                "--config",
                "c.cfg",
                "--seed",
                "7",
                "--out-dir",
                out,
            ])
            .current_dir(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
    }
    let files = [
        "predictions.csv",
        "report.csv",
        "model.json",
        "manifest.json",
        "seasonality.csv",
    ];
    for f in files {
        let a = fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(dir.path().join("b").join(f)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok(format!(
        "{} artifacts byte-identical across two runs",
        files.len()
    ))
}

fn early_stopping(out: &RunOutput) -> Outcome {
    let Predictor::Gbt(model) = &out.predictor else {
        return Err("boosted model was not fitted".into());
    };
    let h = model.history();
    let best = model.best_round();
    let min = h.valid_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    let worst_rise = h
        .train_loss
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        h.valid_loss[best] == min && worst_rise <= 1e-9,
        format!(
            "best round {best} of {} has the minimum validation loss {min:.5}; largest training-loss rise {worst_rise:.1e}",
            h.valid_loss.len() - 1
        ),
    )
}

fn metric_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..50) as f64).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..60.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..200.0)).collect();
        let c = rng.random_range(0.01..100.0);
        let cp: Vec<f64> = p.iter().map(|v| v * c).collect();
        let (r, rc) = (
            weighted_rmse(&y, &f, &p).unwrap(),
            weighted_rmse(&y, &f, &cp).unwrap(),
        );
        let (m, mc) = (
            weighted_mae(&y, &f, &p).unwrap(),
            weighted_mae(&y, &f, &cp).unwrap(),
        );
        if (rc - c * r).abs() > 1e-10 * c * r || (mc - m).abs() > 1e-12 * m.max(1.0) {
            return Err(format!(
                "case {case}: scaling by {c} gave RMSE {r} -> {rc}, MAE {m} -> {mc}"
            ));
        }
        let yf: Vec<f64> = y.iter().map(|v| v + 1.0).collect();
        if weighted_rmse(&yf, &yf, &p).unwrap() != 0.0 || weighted_mae(&yf, &yf, &p).unwrap() != 0.0
        {
            return Err(format!("case {case}: exact forecasts score non-zero"));
        }
        let exact = y.iter().zip(&f).all(|(a, b)| a == b);
        if (r == 0.0) != exact || (m == 0.0) != exact {
            return Err(format!("case {case}: zero error without exact forecasts"));
        }
    }
    Ok("1000 cases: RMSE linear in price scale, MAE invariant, zero iff exact".into())
}

fn timed(f: impl FnOnce() -> Outcome) -> (Outcome, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let secs = Duration::from_secs;

    let (o, t) = timed(gradients);
    results.push((1, "gradient correctness", within(t, secs(1), o)));
    let (o, t) = timed(tree_oracle);
    results.push((2, "tree oracle", within(t, secs(30), o)));

    let data = synth_panel();
    let start = Instant::now();
    let main_out = run(&inputs(&data), &global_config()).map_err(|e| e.to_string());
    let t = start.elapsed();
    results.push((
        3,
        "global vs local",
        match &main_out {
            Ok(out) => within(t, secs(300), global_vs_local(out)),
            Err(e) => Err(e.clone()),
        },
    ));
    results.push((4, "cold start", cold_start(&data)));
    results.push((5, "seasonality recovery", seasonality_recovery(&data)));
    results.push((6, "standardization identity", standardization()));
    results.push((7, "fake-zero repair", fake_zeros(&data)));
    results.push((8, "smoothing oracle", smoothing()));
    results.push((9, "determinism", determinism()));
    match &main_out {
        Ok(out) => results.push((10, "early stopping", early_stopping(out))),
        Err(e) => results.push((10, "early stopping", Err(e.clone()))),
    }
    results.push((11, "metric algebra", metric_algebra()));

    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS  criterion {n:>2}  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {n:>2}  {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
