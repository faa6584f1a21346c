//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use asv::attribution::{exact_asv, exact_shapley_subset_form, mc_asv, GlobalConfig, Method};
use asv::data::Dataset;
use asv::models::{evaluate, train, NetworkModel, TrainConfig};
use asv::rng::stream;
use asv::scenarios::admissions::{DEPARTMENT, GENDER};
use asv::scenarios::{
    admissions_summary, generate, run_fairness_audit, run_feature_selection_study, FeatureSelectionConfig,
    MarkovConfig, ProcessSpec,
};
use asv::value::{Explainer, Marginalizer, Strategy, TableGame, ValueConfig};
use asv::{Coalition, OrderingSpec, Result};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let outcome = f().unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    });
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = outcome.pass && in_time;
    let timing = match limit {
        Some(l) => format!("{:.1}s, limit {}s", elapsed.as_secs_f64(), l.as_secs()),
        None => format!("{:.1}s", elapsed.as_secs_f64()),
    };
    let line = format!(
        "{} [{id}] {name}: {} ({timing})\n",
        if pass { "PASS" } else { "FAIL" },
        outcome.detail
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
    pass
}

fn random_game<R: Rng>(n: usize, rng: &mut R) -> TableGame {
    TableGame::from_fn(n, |_| rng.random_range(-1.0..1.0))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn swap(s: Coalition, i: usize, j: usize) -> Coalition {
    let mut t = s.without(i).without(j);
    if s.contains(i) {
        t = t.with(j);
    }
    if s.contains(j) {
        t = t.with(i);
    }
    t
}

const GAMES: usize = 240;

fn axioms() -> Result<Outcome> {
    let mut rng = stream(101, 0);
    let (mut eff, mut lin, mut null, mut sym) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..GAMES {
        let n = rng.random_range(2..=8);
        let spec = OrderingSpec::random(n, &mut rng)?;
        let mut u = random_game(n, &mut rng);
        let mut w = random_game(n, &mut rng);
        let phi_u = exact_asv(&mut u, &spec, n)?;
        eff = eff.max((phi_u.sum() - (u.get(Coalition::full(n)) - u.get(Coalition::empty(n)))).abs());

        let (alpha, beta) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mut mix = u.combine(alpha, &w, beta);
        let phi_w = exact_asv(&mut w, &spec, n)?;
        let phi_mix = exact_asv(&mut mix, &spec, n)?;
        let expected: Vec<f64> = phi_u
            .means()
            .iter()
            .zip(phi_w.means())
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        lin = lin.max(max_abs_diff(&phi_mix.means(), &expected));

        let i = rng.random_range(0..n);
        let mut dummy = TableGame::from_fn(n, |s| u.get(s.without(i)));
        null = null.max(exact_asv(&mut dummy, &spec, n)?.values[i].value.abs());

        let j = (i + rng.random_range(1..n)) % n;
        let mut symmetric = TableGame::from_fn(n, |s| u.get(s) + u.get(swap(s, i, j)));
        let phi = exact_asv(&mut symmetric, &OrderingSpec::uniform(n)?, n)?;
        sym = sym.max((phi.values[i].value - phi.values[j].value).abs());
    }
    let tol = 1e-9;
    Ok(Outcome {
        pass: eff <= tol && lin <= tol && null <= tol && sym <= tol,
        detail: format!(
            "{GAMES} games, max gaps: efficiency {eff:.1e}, linearity {lin:.1e}, nullity {null:.1e}, symmetry {sym:.1e} (tol {tol:.0e})"
        ),
    })
}

fn oracles() -> Result<Outcome> {
    let mut rng = stream(102, 0);
    let mut dual = 0.0f64;
    let (mut within, mut pairs) = (0usize, 0usize);
    for _ in 0..GAMES {
        let n = rng.random_range(2..=8);
        let mut v = random_game(n, &mut rng);
        let enumerated = exact_asv(&mut v, &OrderingSpec::uniform(n)?, n)?;
        let subset_form = exact_shapley_subset_form(&mut v, n)?;
        dual = dual.max(max_abs_diff(&enumerated.means(), &subset_form.means()));

        let spec = OrderingSpec::random(n, &mut rng)?;
        let exact = exact_asv(&mut v, &spec, n)?;
        let mc = mc_asv(&mut v, &spec, 10_000, &mut rng)?;
        for (m, e) in mc.values.iter().zip(&exact.values) {
            pairs += 1;
            if (m.value - e.value).abs() <= 4.0 * m.stderr + 1e-12 {
                within += 1;
            }
        }
    }
    let frac = within as f64 / pairs as f64;
    Ok(Outcome {
        pass: dual <= 1e-9 && frac >= 0.99,
        detail: format!(
            "enumeration vs subset formula max gap {dual:.1e}; sampling within 4 stderr in {within}/{pairs} pairs ({:.2}%)",
            100.0 * frac
        ),
    })
}

fn two_feature_closed_forms() -> Result<Outcome> {
    let n = 2;
    let c = |bits| Coalition::from_bits(n, bits).expect("n = 2");
    let tables: [[f64; 4]; 3] = [
        [0.25, 0.625, 0.375, 0.875],
        [0.5, 0.125, 0.75, 0.0625],
        [-1.5, 0.25, 2.0, -0.75],
    ];
    let mut ok = true;
    for values in tables {
        let mut v = TableGame::new(n, values.to_vec())?;
        let (e, v1, v2, v12) = (v.get(c(0)), v.get(c(1)), v.get(c(2)), v.get(c(3)));
        let uniform = exact_asv(&mut v, &OrderingSpec::uniform(n)?, n)?.means();
        ok &= uniform[0] == 0.5 * (v1 - e) + 0.5 * (v12 - v2);
        ok &= uniform[1] == 0.5 * (v12 - v1) + 0.5 * (v2 - e);
        let ordered = exact_asv(&mut v, &OrderingSpec::chain(n)?, n)?.means();
        ok &= ordered[0] == v1 - e;
        ok &= ordered[1] == v12 - v1;
    }
    Ok(Outcome {
        pass: ok,
        detail: format!("{} value tables, uniform and first-feature-first weights, bitwise equality", tables.len()),
    })
}

/// `|p̂ − p| / sqrt(p(1−p)/n)`.
fn z_of(p_hat: f64, p: f64, n: usize) -> f64 {
    (p_hat - p).abs() / (p * (1.0 - p) / n as f64).sqrt()
}

fn generator_fidelity() -> Result<Outcome> {
    let rows = 100_000;
    let mut zs = Vec::new();
    let mut unfair_rates = (0.0, 0.0);
    for (spec, seed) in [(ProcessSpec::FairAdmissions, 401), (ProcessSpec::UnfairAdmissions, 402)] {
        let process = spec.build()?;
        let g = generate(process.as_ref(), rows, seed)?;
        let s = admissions_summary(&g.dataset)?;
        let men = (s.share_men * rows as f64).round() as usize;
        let women = rows - men;
        zs.push(("P(gender=1)", z_of(s.share_men, 0.5, rows)));
        zs.push(("P(dept=1|women)", z_of(s.p_department1_women, 0.8, women)));
        zs.push(("P(dept=1|men)", z_of(s.p_department1_men, 0.2, men)));
        zs.push(("class balance", z_of(s.admission_rate, 0.5, rows)));
        if matches!(spec, ProcessSpec::UnfairAdmissions) {
            let mut referred = [0usize; 2];
            for (r, h) in g.hidden.iter().enumerate() {
                referred[g.dataset.row(r)[GENDER] as usize] += h[0] as usize;
            }
            zs.push(("P(referral|women)", z_of(referred[0] as f64 / women as f64, 1.0 / 3.0, women)));
            zs.push(("P(referral|men)", z_of(referred[1] as f64 / men as f64, 2.0 / 3.0, men)));
            unfair_rates = (s.admission_rate_men, s.admission_rate_women);
        }
    }
    let (worst_name, worst_z) = zs.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let params_ok = zs.iter().all(|(_, z)| *z <= 3.0);
    let rates_ok = (unfair_rates.0 - 0.64).abs() <= 0.02 && (unfair_rates.1 - 0.36).abs() <= 0.02;
    Ok(Outcome {
        pass: params_ok && rates_ok,
        detail: format!(
            "{} parameters within 3 sigma: {params_ok} (worst {worst_name} at {worst_z:.2} sigma); unfair admission rates men {:.1}% / women {:.1}% vs 64% / 36% +- 2",
            zs.len(),
            100.0 * unfair_rates.0,
            100.0 * unfair_rates.1
        ),
    })
}

struct Fitted {
    test: Arc<Dataset>,
    model: NetworkModel,
}

const ADMISSIONS_ROWS: usize = 40_000;

fn fit_admissions(spec: &ProcessSpec, seed: u64) -> Result<Fitted> {
    let process = spec.build()?;
    let data = generate(process.as_ref(), ADMISSIONS_ROWS, seed)?.dataset;
    let (train_set, test_set) = data.split(0.75, seed)?;
    let (model, _) = train(&train_set, &TrainConfig::mlp(seed))?;
    Ok(Fitted {
        test: Arc::new(test_set),
        model,
    })
}

fn accuracy_bands(fair: &Fitted, unfair: &Fitted) -> Result<Outcome> {
    let a_fair = evaluate(&fair.model, &fair.test)?.max_class_accuracy;
    let a_unfair = evaluate(&unfair.model, &unfair.test)?.max_class_accuracy;
    let ok_fair = (a_fair - 0.736).abs() <= 0.02;
    let ok_unfair = (a_unfair - 0.732).abs() <= 0.02;
    let bayes = ProcessSpec::UnfairAdmissions.build()?.bayes_accuracy();
    Ok(Outcome {
        pass: ok_fair && ok_unfair,
        detail: format!(
            "fair {:.2}% (target 73.6 +- 2: {ok_fair}); unfair {:.2}% (target 73.2 +- 2: {ok_unfair}; Bayes limit {:.2}%)",
            100.0 * a_fair,
            100.0 * a_unfair,
            100.0 * bayes
        ),
    })
}

fn fairness(fair: &Fitted, unfair: &Fitted) -> Result<Outcome> {
    let vcfg = ValueConfig::new(Strategy::Empirical, 100, 601);
    let gcfg = GlobalConfig {
        method: Method::Exact,
        permutations: 1,
        budget: None,
        workers: 1,
        enumeration_cap: 10,
    };
    let audit = |f: &Fitted| {
        let marg = Marginalizer::from_config(&vcfg, Arc::clone(&f.test), None)?;
        let explainer = Explainer::new(&f.model, &marg, &vcfg);
        run_fairness_audit(&explainer, &f.test, &[DEPARTMENT], &[GENDER], &gcfg)
    };
    let rf = audit(fair)?;
    let ru = audit(unfair)?;
    let (gf, gu) = (rf.sensitive_attributes[0].asv, ru.sensitive_attributes[0].asv);
    let evals = rf.attribution.value_evaluations.max(ru.attribution.value_evaluations);
    let fair_ok = gf.value.abs() <= 3.0 * gf.stderr;
    let unfair_ok = gu.value > 3.0 * gu.stderr;
    Ok(Outcome {
        pass: fair_ok && unfair_ok && evals <= 100_000,
        detail: format!(
            "gender ASV fair {:.5} +- {:.5} (z {:.2}), unfair {:.5} +- {:.5} (z {:.2}); {evals} value evaluations per model",
            gf.value,
            gf.stderr,
            gf.value / gf.stderr,
            gu.value,
            gu.stderr,
            gu.value / gu.stderr
        ),
    })
}

fn telescoping() -> Result<Outcome> {
    let spec = ProcessSpec::Markov(MarkovConfig::with_steps(12));
    let process = spec.build()?;
    let data = generate(process.as_ref(), 10_000, 701)?.dataset;
    let cfg = FeatureSelectionConfig {
        trials: 5,
        train: TrainConfig::logistic(701),
        value: ValueConfig::new(Strategy::Generative, 100, 701),
        test_fraction: 0.25,
        budget: None,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let study = run_feature_selection_study(&data, Some(process), &cfg)?;
    let worst = study
        .steps
        .iter()
        .map(|s| s.gap / s.band)
        .fold(0.0, f64::max);
    let telescopes = study.telescoping_gap <= 1e-12;
    Ok(Outcome {
        pass: study.all_agree && telescopes && study.decay.passes,
        detail: format!(
            "{} steps agree: {} (worst gap/band {worst:.2}); final cumulative vs A(N)-A({{}}) gap {:.1e}; decay check {} (first-vs-last z {:.1})",
            study.steps.len(),
            study.all_agree,
            study.telescoping_gap,
            study.decay.passes,
            study.decay.first_over_last_z
        ),
    })
}

fn uniformity() -> Result<Outcome> {
    let mut rng = stream(801, 0);
    let alpha = 0.001;
    let mut passed = 0;
    let mut worst_p = 1.0f64;
    let mut tested = 0;
    while tested < 20 {
        let n = rng.random_range(3..=6);
        let spec = OrderingSpec::random(n, &mut rng)?;
        let support = spec.enumerate_consistent(n)?;
        let k = support.len();
        if k < 2 {
            continue;
        }
        tested += 1;
        let index: std::collections::HashMap<Vec<usize>, usize> =
            support.iter().enumerate().map(|(i, p)| (p.order().to_vec(), i)).collect();
        let draws = (200 * k).max(2000);
        let mut counts = vec![0usize; k];
        for _ in 0..draws {
            let p = spec.sample_consistent(&mut rng)?;
            let slot = index.get(p.order()).copied();
            match slot {
                Some(i) => counts[i] += 1,
                None => {
                    return Ok(Outcome {
                        pass: false,
                        detail: format!("sampled an inconsistent ordering {:?}", p.order()),
                    })
                }
            }
        }
        let expected = draws as f64 / k as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let dist = ChiSquared::new((k - 1) as f64).expect("df > 0");
        let p_value = 1.0 - dist.cdf(stat);
        worst_p = worst_p.min(p_value);
        if stat <= dist.inverse_cdf(1.0 - alpha) {
            passed += 1;
        }
    }
    Ok(Outcome {
        pass: passed == tested,
        detail: format!("{passed}/{tested} specs pass chi-square at alpha {alpha} (smallest p-value {worst_p:.4})"),
    })
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>> {
    let out = Command::new(env!("CARGO_BIN_EXE_asv")).args(args).output()?;
    if !out.status.success() {
        return Err(asv::AsvError::InvalidArgument(format!(
            "asv {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )));
    }
    Ok(out.stdout)
}

fn pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let d = dir.to_str().expect("utf-8 path");
    let data = format!("{d}/data.csv");
    let model = format!("{d}/model.json");
    let mut outputs = Vec::new();
    run_cli(&["gen-data", "unfair-admissions", "--rows", "3000", "--seed", "9", "--out", d])?;
    outputs.push(("manifest".into(), std::fs::read(format!("{d}/manifest.json"))?));
    outputs.push(("data".into(), std::fs::read(&data)?));
    let metrics = run_cli(&["train", "--data", &data, "--model", "mlp", "--seed", "9", "--out", &model])?;
    outputs.push(("train".into(), metrics));
    outputs.push(("model".into(), std::fs::read(&model)?));
    for strategy in ["off-manifold", "empirical", "generative"] {
        let out = run_cli(&[
            "explain", "--model", &model, "--data", &data, "--spec", "uniform", "--global", "--budget", "300",
            "--permutations", "20", "--seed", "9", "--workers", "3", "--strategy", strategy,
        ])?;
        outputs.push((format!("explain {strategy}"), out));
    }
    let out = run_cli(&[
        "fairness", "--model", &model, "--data", &data, "--resolving", "department", "--sensitive", "gender",
        "--seed", "9", "--workers", "2", "--budget", "500",
    ])?;
    outputs.push(("fairness".into(), out));
    let out = run_cli(&["featselect", "--T", "4", "--rows", "2000", "--trials", "2", "--budget", "200", "--seed", "9", "--workers", "2"])?;
    outputs.push(("featselect".into(), out));
    outputs.push(("oracle-check".into(), run_cli(&["oracle-check", "--games", "5", "--seed", "9", "--permutations", "500"])?));
    Ok(outputs)
}

fn determinism() -> Result<Outcome> {
    // Both runs use one path, since the resolved config echoes it.
    let dir = std::env::temp_dir().join(format!("asv-determinism-{}", std::process::id()));
    let run = || -> Result<Vec<(String, Vec<u8>)>> {
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir)?;
        let out = pipeline(&dir);
        std::fs::remove_dir_all(&dir)?;
        out
    };
    let first = run()?;
    let second = run()?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Ok(Outcome {
        pass: differing.is_empty() && first.len() == second.len(),
        detail: if differing.is_empty() {
            format!("{} outputs byte-identical across two runs", first.len())
        } else {
            format!("outputs differ: {}", differing.join(", "))
        },
    })
}

fn main() {
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let mut all = true;
    all &= check(1, "axioms on random games", mins(1), axioms);
    all &= check(2, "oracle equivalence", mins(5), oracles);
    all &= check(3, "two-feature closed forms", None, two_feature_closed_forms);
    all &= check(4, "generator fidelity", None, generator_fidelity);

    let mut fitted = None;
    all &= check(5, "model accuracy bands", mins(2), || {
        let fair = fit_admissions(&ProcessSpec::FairAdmissions, 501)?;
        let unfair = fit_admissions(&ProcessSpec::UnfairAdmissions, 502)?;
        let outcome = accuracy_bands(&fair, &unfair)?;
        fitted = Some((fair, unfair));
        Ok(outcome)
    });
    all &= check(6, "fairness pattern", None, || match &fitted {
        Some((fair, unfair)) => fairness(fair, unfair),
        None => Ok(Outcome {
            pass: false,
            detail: "models unavailable".into(),
        }),
    });
    all &= check(7, "telescoping study", mins(10), telescoping);
    all &= check(8, "ordering sampler uniformity", None, uniformity);
    all &= check(9, "CLI determinism", None, determinism);
    if !all {
        std::process::exit(1);
    }
}
