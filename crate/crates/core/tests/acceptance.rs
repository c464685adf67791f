//! Acceptance checks. Each prints one PASS/FAIL line; the process fails if any
//! check fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use chval::ame::{
    build_design_matrix, default_lambda_grid, normalization_constant_v, run_subset_experiments, sample_subsets,
    select_lambda_cv, solve_lasso, solve_ols,
};
use chval::characteristics::zscore_standardize;
use chval::config::{LearnerConfig, MlpConfig, OlsConfig, RunConfig, SrtConfig};
use chval::corpus::{make_synthetic, SyntheticKind, SyntheticSpec};
use chval::curves::{point_addition_curve, point_removal_curve, Direction, Ordering};
use chval::metrics::{kendall_tau_distance, pearson};
use chval::mlpbv::{batch_loss, mlp_gradient, predict_values, train_mlpbv, MlpModel};
use chval::rng::{SeedSpec, Stream};
use chval::shapley::{exact_shapley, mc_shapley};
use chval::srt::{extract_rules, train_srtbv};
use chval::utility::{AdditiveUtility, CachedUtility, ClassifierUtility};
use chval::valuation::{Registry, ValuationContext};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = SeedSpec::new(seed).stream(Stream::Synthetic);
    Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for seed in 0..3 {
        let mut spec = SyntheticSpec::new(SyntheticKind::GaussianBlobs, 8, 2, 2, 0.25);
        spec.n_validation = 200;
        spec.n_test = 10;
        let corpus = make_synthetic(&spec, SeedSpec::new(seed)).map_err(|e| e.to_string())?;
        let utility = ClassifierUtility::new(&corpus, LearnerConfig::default(), SeedSpec::new(seed));
        let cached = CachedUtility::new(&utility);
        let exact = exact_shapley(&cached, true).map_err(|e| e.to_string())?;
        let mc = mc_shapley(&cached, 200_000, &SeedSpec::new(seed)).map_err(|e| e.to_string())?;
        let range = exact.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - exact.iter().cloned().fold(f64::INFINITY, f64::min);
        if range <= 0.0 {
            return Err(format!("game {seed} has a constant Shapley vector"));
        }
        let diff = exact.iter().zip(&mc.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff / range);
        details.push(format!("range {range:.3}"));
    }
    let elapsed = start.elapsed();
    check(
        worst <= 0.01 && elapsed < Duration::from_secs(120),
        format!("max |exact - mc| / range = {worst:.5} (<= 0.01) over 3 games ({}), {elapsed:.1?}", details.join(", ")),
    )
}

/// Centered-utility OLS on an additive game: returns `(β, w, v)`.
fn additive_ols() -> Result<(Array1<f64>, Vec<f64>, f64), String> {
    let n = 50;
    let p_grid = [0.2, 0.4, 0.6, 0.8];
    let mut w: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    w.shuffle(&mut SeedSpec::new(11).stream(Stream::Synthetic));
    let utility = AdditiveUtility { weights: w.clone() };
    let seed = SeedSpec::new(11);
    let masks = sample_subsets(n, 2500, &p_grid, &seed).map_err(|e| e.to_string())?;
    let mut r = run_subset_experiments(&utility, &masks).map_err(|e| e.to_string())?;
    r -= r.mean().unwrap();
    let design = build_design_matrix(&masks, &p_grid).map_err(|e| e.to_string())?;
    let solution = solve_ols(design.x.view(), r.view(), &OlsConfig::default()).map_err(|e| e.to_string())?;
    let v = normalization_constant_v(&p_grid).map_err(|e| e.to_string())?;
    Ok((solution.beta, w, v))
}

fn additive_ranking() -> Outcome {
    let start = Instant::now();
    let (beta, w, _) = additive_ols()?;
    let tau = kendall_tau_distance(beta.as_slice().unwrap(), &w).map_err(|e| e.to_string())?;
    let rho = pearson(beta.as_slice().unwrap(), &w).unwrap_or(f64::NAN);
    let elapsed = start.elapsed();
    check(
        tau <= 0.05 && rho >= 0.99 && elapsed < Duration::from_secs(60),
        format!("Kendall-tau distance {tau:.4} (<= 0.05), Pearson {rho:.4} (>= 0.99), {elapsed:.1?}"),
    )
}

fn additive_scaling() -> Outcome {
    let (beta, w, v) = additive_ols()?;
    let mut magnitudes: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    magnitudes.sort_by(f64::total_cmp);
    let median = magnitudes[magnitudes.len() / 2];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (b, wi) in beta.iter().zip(&w) {
        if wi.abs() >= median {
            worst = worst.max((b * v.sqrt() - wi).abs() / wi.abs());
            checked += 1;
        }
    }
    check(worst <= 0.10, format!("max |β√v - w| / |w| = {worst:.4} (<= 0.10) on {checked} largest-|w| samples, v = {v:.4}"))
}

fn lasso_sparsity() -> Outcome {
    let (n, m) = (200, 120);
    let p_grid = [0.2, 0.4, 0.6, 0.8];
    let mut failures = Vec::new();
    for seed in 0..5u64 {
        let spec = SeedSpec::new(100 + seed);
        let mut rng = spec.stream(Stream::Synthetic);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let mut support: Vec<usize> = idx[..5].to_vec();
        support.sort_unstable();
        let mut planted = Array1::<f64>::zeros(n);
        for &j in &support {
            let magnitude = rng.random_range(1.0..2.0);
            planted[j] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        }
        let masks = sample_subsets(n, m, &p_grid, &spec).map_err(|e| e.to_string())?;
        let x = build_design_matrix(&masks, &p_grid).map_err(|e| e.to_string())?.x;
        let r = x.dot(&planted);
        let grid = default_lambda_grid(x.view(), r.view(), 20);
        let selection = select_lambda_cv(x.view(), r.view(), &grid, 5, &spec).map_err(|e| e.to_string())?;
        let beta = solve_lasso(x.view(), r.view(), selection.lambda).map_err(|e| e.to_string())?.beta;
        let found: Vec<usize> = (0..n).filter(|&j| beta[j] != 0.0).collect();
        if found != support {
            failures.push(format!("seed {seed}: planted {support:?}, found {found:?}"));
        }
    }
    check(failures.is_empty(), if failures.is_empty() { "exact support, no false positives, 5/5 seeds".into() } else { failures.join("; ") })
}

fn mlp_gradient_check() -> Outcome {
    let (n, m, hidden) = (30, 12, 16);
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let u = gaussian(n, 11, 200 + seed);
        let x = gaussian(m, n, 300 + seed);
        let r = gaussian(m, 1, 400 + seed).column(0).to_owned();
        let model = MlpModel::random(11, hidden, seed);
        let grad = mlp_gradient(&model, x.view(), r.view(), u.view()).map_err(|e| e.to_string())?.flatten();
        let theta = model.flatten();
        let mut rng = SeedSpec::new(500 + seed).stream(Stream::LearnerInit);
        for _ in 0..100 {
            let k = rng.random_range(0..theta.len());
            let h = 1e-5;
            let mut shifted = model.clone();
            let mut t = theta.clone();
            t[k] = theta[k] + h;
            shifted.set_flat(&t).map_err(|e| e.to_string())?;
            let plus = batch_loss(&shifted, x.view(), r.view(), u.view()).map_err(|e| e.to_string())?;
            t[k] = theta[k] - h;
            shifted.set_flat(&t).map_err(|e| e.to_string())?;
            let minus = batch_loss(&shifted, x.view(), r.view(), u.view()).map_err(|e| e.to_string())?;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.2e} (<= 1e-4) over 5 models x 100 coordinates"))
}

fn mlpbv_learnability() -> Outcome {
    let start = Instant::now();
    let (n, m) = (300, 75);
    let p_grid = [0.2, 0.4, 0.6, 0.8];
    let mut worst_mlp = 0.0f64;
    let mut best_ols = f64::INFINITY;
    for seed in 0..3u64 {
        let u = zscore_standardize(gaussian(n, 11, 600 + seed).view()).map_err(|e| e.to_string())?.values;
        let g = u.column(0).to_owned();
        let spec = SeedSpec::new(seed);
        let masks = sample_subsets(n, m, &p_grid, &spec).map_err(|e| e.to_string())?;
        let x = build_design_matrix(&masks, &p_grid).map_err(|e| e.to_string())?.x;
        let r = x.dot(&g);
        let ensemble = train_mlpbv(x.view(), r.view(), u.view(), &MlpConfig::default(), &spec).map_err(|e| e.to_string())?;
        let values = predict_values(&ensemble, u.view()).map_err(|e| e.to_string())?;
        let ols = solve_ols(x.view(), r.view(), &OlsConfig::default()).map_err(|e| e.to_string())?;
        worst_mlp = worst_mlp.max(kendall_tau_distance(values.as_slice().unwrap(), g.as_slice().unwrap()).map_err(|e| e.to_string())?);
        best_ols = best_ols.min(kendall_tau_distance(ols.beta.as_slice().unwrap(), g.as_slice().unwrap()).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();
    check(
        worst_mlp <= 0.15 && best_ols > 0.3 && elapsed < Duration::from_secs(300),
        format!("MLPbV Kendall-tau distance <= {worst_mlp:.4} (<= 0.15), ame-ols >= {best_ols:.4} (> 0.3) over 3 seeds, {elapsed:.1?}"),
    )
}

fn srt_recovery() -> Outcome {
    let (n, m) = (300, 600);
    let p_grid = [0.2, 0.4, 0.6, 0.8];
    let centers = [-1.5, 0.0, 1.5];
    let levels = [-0.5, 0.25, 1.0];
    let seed = SeedSpec::new(21);
    let mut rng = seed.stream(Stream::Synthetic);
    let plateau: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut u = Array2::<f64>::zeros((n, 11));
    for i in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let c = centers[plateau[i]] + 0.05 * z;
        u[[i, 0]] = c;
        // Remaining statistics are noisy copies of the first.
        for d in 1..11 {
            let z: f64 = StandardNormal.sample(&mut rng);
            u[[i, d]] = c + 0.3 * z;
        }
    }
    let g: Array1<f64> = plateau.iter().map(|&p| levels[p]).collect();
    let masks = sample_subsets(n, m, &p_grid, &seed).map_err(|e| e.to_string())?;
    let x = build_design_matrix(&masks, &p_grid).map_err(|e| e.to_string())?.x;
    let r = x.dot(&g);
    let config = SrtConfig { growth_rounds: 3, ..SrtConfig::default() };
    let training = train_srtbv(x.view(), r.view(), u.view(), &config, &seed).map_err(|e| e.to_string())?;
    let model = &training.model;

    let mut worst = 0.0f64;
    let sample_leaves = model.sample_leaves();
    for (l, leaf) in model.leaves.iter().enumerate() {
        let members: Vec<usize> = (0..n).filter(|&i| sample_leaves[i] == l).collect();
        for &i in &members {
            let target = levels[plateau[i]];
            worst = worst.max((leaf.beta - target).abs() / target.abs());
        }
    }
    let objectives: Vec<f64> = training.rounds.iter().map(|r| r.objective).collect();
    let monotone = objectives.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));

    let rules = extract_rules(model).map_err(|e| e.to_string())?;
    let covered = (0..rules.groups.len()).all(|g| rules.rules.iter().any(|r| r.group_index == g));
    let exactly_one = model.cells.iter().all(|cell| rules.matching_rules(cell).len() == 1);
    check(
        worst <= 0.05 && monotone && covered && exactly_one,
        format!(
            "max leaf error {:.2}% (<= 5%) over {} leaves, objective non-increasing {monotone} {:?}, every group has a rule {covered}, every sample matches one rule {exactly_one}",
            worst * 100.0,
            model.leaves.len(),
            objectives.iter().map(|o| format!("{o:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn downstream_curves() -> Outcome {
    let mut lines = Vec::new();
    let mut all = true;
    let mut sums = [0.0f64; 4];
    for seed in 0..5u64 {
        let spec = SyntheticSpec::new(SyntheticKind::GaussianBlobs, 500, 2, 2, 0.1);
        let corpus = make_synthetic(&spec, SeedSpec::new(seed)).map_err(|e| e.to_string())?;
        let config = RunConfig { seed, subsets: chval::config::SubsetConfig { count: corpus.len(), ..Default::default() }, ..RunConfig::default() };
        let ctx = ValuationContext::new(&corpus, &config);
        let values = Registry::with_builtins().get("mlpbv").and_then(|m| m.value(&ctx)).map_err(|e| e.to_string())?.result.values;
        let s = SeedSpec::new(seed);
        let learner = &config.learner;
        let run = |direction: Direction, order: Ordering| -> Result<f64, String> {
            let curve = match direction {
                Direction::Removal => point_removal_curve(&corpus, &values, learner, order, Some(5), &s),
                Direction::Addition => point_addition_curve(&corpus, &values, learner, order, Some(5), &s),
            };
            curve.map(|c| c.final_accuracy()).map_err(|e| e.to_string())
        };
        let removal_value = run(Direction::Removal, Ordering::Value)?;
        let removal_random = run(Direction::Removal, Ordering::Random)?;
        let addition_value = run(Direction::Addition, Ordering::Value)?;
        let addition_random = run(Direction::Addition, Ordering::Random)?;
        for (acc, x) in sums.iter_mut().zip([removal_value, removal_random, addition_value, addition_random]) {
            *acc += x / 5.0;
        }
        all &= removal_value < removal_random && addition_value < addition_random;
        lines.push(format!("seed {seed}: removal {removal_value:.3}<{removal_random:.3}, addition {addition_value:.3}<{addition_random:.3}"));
    }
    check(
        all,
        format!(
            "step-K accuracy, value vs random, mean removal {:.3} vs {:.3}, mean addition {:.3} vs {:.3}; {}",
            sums[0],
            sums[1],
            sums[2],
            sums[3],
            lines.join("; ")
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_chval"))
        .arg("--out")
        .arg(dir)
        .arg("--config")
        .arg(dir.join("config.toml"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!("chval {args:?} failed: {}", String::from_utf8_lossy(&status.stderr)))
    }
}

fn determinism() -> Outcome {
    let config = "seed = 5\n[subsets]\ncount = 60\n[mlp]\nepochs = 20\nhidden = 8\n[shapley]\npermutations = 10\n";
    let methods = ["ame-ols", "ame-lasso", "mlpbv", "srtbv", "exact", "mc"];
    let mut outputs = Vec::new();
    for workers in ["1", "4"] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("config.toml"), config).map_err(|e| e.to_string())?;
        run_cli(dir.path(), &["gen-data", "--n", "12"])?;
        for method in methods {
            run_cli(dir.path(), &["--workers", workers, "value", "--method", method])?;
        }
        outputs.push(std::fs::read(dir.path().join("values.json")).map_err(|e| e.to_string())?);
    }
    check(
        outputs[0] == outputs[1],
        format!("values.json for {} methods byte-identical across runs with 1 and 4 workers ({} bytes)", methods.len(), outputs[0].len()),
    )
}

fn parameterization() -> Outcome {
    let mut seen = Vec::new();
    for (hidden, expected) in [(50, 651), (75, 976), (100, 1301)] {
        for n in [20, 60] {
            let u = gaussian(n, 11, n as u64);
            let masks = sample_subsets(n, 10, &[0.5], &SeedSpec::new(1)).map_err(|e| e.to_string())?;
            let x = build_design_matrix(&masks, &[0.5]).map_err(|e| e.to_string())?.x;
            let r = Array1::<f64>::zeros(10);
            let config = MlpConfig { hidden, epochs: 1, ..MlpConfig::default() };
            let ensemble = train_mlpbv(x.view(), r.view(), u.view(), &config, &SeedSpec::new(1)).map_err(|e| e.to_string())?;
            let count = ensemble.parameter_count();
            if count != expected || count != 13 * hidden + 1 {
                return Err(format!("H = {hidden}, N = {n}: {count} parameters, expected {expected}"));
            }
        }
        seen.push(format!("H={hidden}:{expected}"));
    }
    Ok(format!("parameter counts {} equal 13H+1 for N in {{20, 60}}", seen.join(" ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("additive game ranking", additive_ranking),
        ("additive game scaling", additive_scaling),
        ("lasso sparsity", lasso_sparsity),
        ("mlp gradient", mlp_gradient_check),
        ("mlpbv learnability", mlpbv_learnability),
        ("srt recovery", srt_recovery),
        ("downstream curves", downstream_curves),
        ("determinism", determinism),
        ("fixed parameterization", parameterization),
    ];
    let mut failed = 0;
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        match criterion() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
