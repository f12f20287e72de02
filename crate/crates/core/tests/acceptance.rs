//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.
//! Run with `cargo test -p areatol --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use areatol::campaign::{Shape, Skill};
use areatol::geometry::{Point, Polygon, SizeClass};
use areatol::io::Config;
use areatol::linear_model::{anova_table, fit_model, Dataset, ModelSpec, SsType};
use areatol::pipeline::{analyze_campaign, run_analyze, run_simulate};
use areatol::precision::{critical_difference, repeatability_limit, reproducibility_limit, LimitMode};
use areatol::robust_stats::{describe, detect_outliers, lilliefors_statistic, LillieforsNull, MonteCarlo, OutlierConfig};
use areatol::simulator::{generate_campaign, Contamination, ImageModel, OperatorErrorModel, SimulationPlan};
use areatol::special::normal_quantile;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_printed_limits_follow_from_printed_sds() {
    // (repeatability SD, reproducibility SD, expected r, expected R)
    let rows = [(0.92, 1.02, 2.58, 2.86), (1.85, 1.85, 5.18, 5.18), (2.22, 3.13, 6.22, 8.76)];
    let tol = 0.01 + 1e-9;
    let mut pass = true;
    let mut detail = Vec::new();
    for (sd_rep, sd_repro, want_rep, want_repro) in rows {
        let rep = repeatability_limit(sd_rep, 0.95, 2, LimitMode::RuleOfThumb).unwrap();
        let repro = reproducibility_limit(sd_repro, 0.95, 2, LimitMode::RuleOfThumb).unwrap();
        pass &= (rep - want_rep).abs() <= tol && (repro - want_repro).abs() <= tol;
        detail.push(format!("({sd_rep}, {sd_repro}) -> ({rep:.3}, {repro:.3})"));
    }
    report(1, pass, detail.join("; "));
}

#[test]
fn criterion_2_distribution_summary_matches_printed_table() {
    let n = 1642;
    // standardized normal scores rescaled to mean -0.059 and SD 0.990
    let z: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
    let m = z.iter().sum::<f64>() / n as f64;
    let s = (z.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let sample: Vec<f64> = z.iter().map(|v| -0.059 + 0.990 * (v - m) / s).collect();
    let d = describe(&sample).unwrap();
    let pass = (d.std_err_mean - 0.024).abs() <= 0.001
        && (d.ci95_lower + 0.106).abs() <= 0.001
        && (d.ci95_upper + 0.011).abs() <= 0.001
        && (d.mean + 0.059).abs() < 1e-12
        && (d.std_dev - 0.990).abs() < 1e-12;
    report(
        2,
        pass,
        format!("SEM {:.4}, CI ({:.4}, {:.4}), n {}", d.std_err_mean, d.ci95_lower, d.ci95_upper, d.n),
    );
}

#[test]
fn criterion_3_critical_difference_matches_high_precision_value() {
    // sqrt((2.8*1.02)^2 - (2.8*0.92)^2 * (1 - 1/3)) / sqrt(10) at 40 digits
    const ORACLE: f64 = 0.610_973_430_955_334_9;
    let cd = critical_difference(1.02, 0.92, 5, &[3.0; 5]).unwrap();
    let pass = (cd - 0.611).abs() <= 0.001 && (cd - ORACLE).abs() < 1e-12;
    report(3, pass, format!("CD = {cd:.6} (oracle {ORACLE:.6}); printed CD values are not targets"));
}

fn closure_plan(seed: u64) -> SimulationPlan {
    // fixed operator biases whose (p - 1)-denominator SD is exactly 0.5
    let a = 0.4f64.sqrt();
    let biases = [-a, -a / 2.0, 0.0, a / 2.0, a];
    SimulationPlan {
        parcels: 200,
        operators: biases
            .iter()
            .enumerate()
            .map(|(i, &bias)| OperatorErrorModel { id: format!("op{}", i + 1), skill: Skill::Skilled, bias, sd: 1.0 })
            .collect(),
        images: vec![ImageModel { id: "ortho".into(), kind: "orthophoto".into(), gsd: Some(0.5), noise_multiplier: 1.0 }],
        replicates: 3,
        seed,
        ..Default::default()
    }
}

fn config(seed: u64) -> Config {
    Config::from_toml(&format!("[monte_carlo]\nseed = {seed}\n"), Path::new(".")).unwrap()
}

#[test]
fn criterion_4_end_to_end_recovers_injected_precision() {
    let start = Instant::now();
    let sim = generate_campaign(&closure_plan(2024)).unwrap();
    let analysis = analyze_campaign(&sim.campaign, &config(7), BTreeMap::new()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let p = &analysis.report.images[0].precision;
    let (true_rep, true_repepro) = (1.0, 1.25f64.sqrt());
    let err_rep = (p.sd_repeatability - true_rep).abs() / true_rep;
    let err_repro = (p.sd_reproducibility - true_repepro).abs() / true_repepro;
    let pass = err_rep <= 0.05 && err_repro <= 0.10 && elapsed < 60.0;
    report(
        4,
        pass,
        format!(
            "sd_r {:.4} ({:+.2}%), sd_R {:.4} vs {:.4} ({:+.2}%), {:.1} s",
            p.sd_repeatability,
            100.0 * (p.sd_repeatability - true_rep) / true_rep,
            p.sd_reproducibility,
            true_repepro,
            100.0 * (p.sd_reproducibility - true_repepro) / true_repepro,
            elapsed
        ),
    );
}

#[test]
fn criterion_5_lilliefors_size_and_power() {
    let mc = MonteCarlo::new(10_000, 5);
    let null50 = LillieforsNull::new(50, &mc).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let trials = 10_000;
    let rejections = (0..trials)
        .filter(|_| {
            let x: Vec<f64> = (0..50).map(|_| StandardNormal.sample(&mut rng)).collect();
            null50.p_value(lilliefors_statistic(&x).unwrap()) < 0.05
        })
        .count();
    let size = rejections as f64 / trials as f64;

    let null1000 = LillieforsNull::new(1000, &MonteCarlo::new(2_000, 6)).unwrap();
    let power_trials = 200;
    let detected = (0..power_trials)
        .filter(|_| {
            let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
            null1000.p_value(lilliefors_statistic(&x).unwrap()) < 0.05
        })
        .count();
    let power = detected as f64 / power_trials as f64;
    let pass = (size - 0.05).abs() <= 0.01 && power > 0.99;
    report(5, pass, format!("type-I rate {size:.4} over {trials} normal samples (n = 50); power {power:.3} on uniform n = 1000"));
}

#[test]
fn criterion_6_outlier_recall_and_false_flags() {
    let alpha = 0.05;
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in [11, 12, 13] {
        let mut plan = closure_plan(seed);
        plan.parcels = 185;
        plan.images = ["ortho", "fore", "aft"]
            .iter()
            .map(|id| ImageModel { id: id.to_string(), kind: "any".into(), gsd: None, noise_multiplier: 1.0 })
            .collect();
        // sd_r = 1, so gross errors of at least 10 sd_r
        plan.contamination = Some(Contamination { rate: 0.016, min_magnitude: 10.0, max_magnitude: 80.0 });
        let sim = generate_campaign(&plan).unwrap();
        let records = sim.campaign.build_buffer_table().unwrap();
        let rep = detect_outliers(&records, &OutlierConfig::new(alpha, MonteCarlo::new(10_000, seed))).unwrap();
        let mut flagged = vec![false; records.len()];
        for &i in &rep.flagged {
            flagged[i] = true;
        }
        let truth: Vec<bool> = records.iter().map(|r| sim.contaminated[r.observation]).collect();
        let contaminated = truth.iter().filter(|&&t| t).count();
        let hits = (0..records.len()).filter(|&i| truth[i] && flagged[i]).count();
        let false_flags = (0..records.len()).filter(|&i| !truth[i] && flagged[i]).count();
        let recall = hits as f64 / contaminated as f64;
        let ffr = false_flags as f64 / (records.len() - contaminated) as f64;
        pass &= recall >= 0.95 && ffr <= alpha + 0.02;
        lines.push(format!(
            "seed {seed}: {contaminated}/{} contaminated, recall {recall:.3}, false-flag rate {ffr:.4}",
            records.len()
        ));
    }
    report(6, pass, lines.join("; "));
}

/// Projection onto the column space of `x`.
fn projector(x: &DMatrix<f64>) -> DMatrix<f64> {
    // orthonormal basis X V / sqrt(lambda) from the eigenvectors of X'X
    let eig = nalgebra::SymmetricEigen::new(x.transpose() * x);
    let top = eig.eigenvalues.max();
    let keep: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] > 1e-12 * top).collect();
    let mut basis = x * eig.eigenvectors.select_columns(&keep);
    for (c, &i) in keep.iter().enumerate() {
        basis.column_mut(c).scale_mut(1.0 / eig.eigenvalues[i].sqrt());
    }
    &basis * basis.transpose()
}

/// One-hot indicators of the cells formed by `factors` (intercept if empty).
fn indicators(levels: &[Vec<usize>], factors: &[usize], sizes: &[usize], n: usize) -> DMatrix<f64> {
    let cells: usize = factors.iter().map(|&f| sizes[f]).product();
    let mut x = DMatrix::zeros(n, cells);
    for row in 0..n {
        let mut cell = 0;
        for &f in factors {
            cell = cell * sizes[f] + levels[f][row];
        }
        x[(row, cell)] = 1.0;
    }
    x
}

fn hstack(blocks: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, cols.max(1));
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (n, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

fn subsets(s: &[usize]) -> Vec<Vec<usize>> {
    (0..(1u32 << s.len())).map(|m| s.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, &f)| f).collect()).collect()
}

#[test]
fn criterion_7_anova_matches_projection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let names = ["a", "b", "c"];
    let mut worst = 0.0f64;
    let mut designs = 0;
    let mut compared = 0;
    while designs < 100 {
        let k = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(2..=3)).collect();
        let reps = rng.random_range(1..=5);
        let mut terms: Vec<Vec<usize>> = (0..k).map(|f| vec![f]).collect();
        for s in subsets(&(0..k).collect::<Vec<_>>()) {
            if s.len() >= 2 && rng.random::<bool>() {
                terms.push(s);
            }
        }
        let cells: usize = sizes.iter().product();
        let n = cells * reps;
        let mut levels = vec![Vec::with_capacity(n); k];
        for cell in 0..cells {
            for _ in 0..reps {
                let mut rest = cell;
                for f in (0..k).rev() {
                    levels[f].push(rest % sizes[f]);
                    rest /= sizes[f];
                }
            }
        }
        let y: Vec<f64> = (0..n)
            .map(|i| levels.iter().map(|l| l[i] as f64 * 0.7).sum::<f64>() + 3.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();

        // oracle: in a balanced layout the effect space of a term is
        // P(term and its sub-terms) - P(sub-terms), and these spaces are
        // mutually orthogonal, so the model space is their direct sum
        let yv = nalgebra::DVector::from_vec(y.clone());
        let effect = |t: &Vec<usize>| {
            let subs: Vec<DMatrix<f64>> =
                subsets(t).into_iter().filter(|s| s.len() < t.len()).map(|s| indicators(&levels, &s, &sizes, n)).collect();
            let p_sub = projector(&hstack(&subs, n));
            let p_term = projector(&hstack(&[subs, vec![indicators(&levels, t, &sizes, n)]].concat(), n));
            p_term - p_sub
        };
        let effects: Vec<DMatrix<f64>> = terms.iter().map(effect).collect();
        let p_full = effects.iter().fold(projector(&indicators(&levels, &[], &sizes, n)), |acc, e| acc + e);
        let resid = &yv - &p_full * &yv;
        let rss = resid.dot(&resid);
        let df_res = n - p_full.trace().round() as usize;
        if df_res == 0 {
            continue;
        }
        designs += 1;

        let mut data = Dataset::new(y.clone());
        for f in 0..k {
            data = data.with_factor(names[f], levels[f].iter().map(|l| format!("L{l}")));
        }
        let spec_terms: Vec<String> =
            terms.iter().map(|t| t.iter().map(|&f| names[f]).collect::<Vec<_>>().join("*")).collect();
        let fit = fit_model(&data, &ModelSpec::parse(&spec_terms).unwrap()).unwrap();
        let table = anova_table(&fit, SsType::Marginal).unwrap();

        for (e, row) in effects.iter().zip(&table.rows) {
            let fitted = e * &yv;
            let df = e.trace().round() as usize;
            let f_oracle = (fitted.dot(&fitted) / df as f64) / (rss / df_res as f64);
            let f = row.f.expect("balanced terms are testable");
            assert_eq!(row.df, df);
            worst = worst.max((f - f_oracle).abs() / f_oracle.abs().max(1e-300));
            compared += 1;
        }
    }
    report(7, worst <= 1e-8, format!("{compared} F ratios over 100 balanced designs, worst relative error {worst:.2e}"));
}

fn star_polygon(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let n = rng.random_range(3..=30);
    let step = std::f64::consts::TAU / n as f64;
    let centre = (rng.random_range(-1e6..1e6), rng.random_range(-1e6..1e6));
    (0..n)
        .map(|i| {
            let a = (i as f64 + rng.random_range(-0.4..0.4)) * step;
            let r = rng.random_range(1.0..500.0);
            Point::new(centre.0 + r * a.cos(), centre.1 + r * a.sin())
        })
        .collect()
}

#[test]
fn criterion_8_area_and_perimeter_invariances() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 1000 {
        let v = star_polygon(&mut rng);
        let Ok(p) = Polygon::new(v.clone()) else { continue };
        tested += 1;
        let (a, l) = (p.area(), p.perimeter());
        let s = rng.random_range(0.01..100.0);
        let (tx, ty) = (rng.random_range(-1e5..1e5), rng.random_range(-1e5..1e5));
        let scaled = Polygon::new(v.iter().map(|q| Point::new(q.x * s, q.y * s)).collect()).unwrap();
        let moved = Polygon::new(v.iter().map(|q| Point::new(q.x + tx, q.y + ty)).collect()).unwrap();
        let reversed = Polygon::new(v.iter().rev().copied().collect()).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        worst = worst
            .max(rel(scaled.area(), a * s * s))
            .max(rel(scaled.perimeter(), l * s))
            .max(rel(moved.area(), a))
            .max(rel(moved.perimeter(), l))
            .max(rel(reversed.area(), a))
            .max(rel(reversed.perimeter(), l));
    }
    report(8, worst <= 1e-9, format!("{tested} polygons, worst relative deviation {worst:.2e}"));
}

#[test]
fn criterion_9_identical_seeds_give_identical_reports() {
    let plan = SimulationPlan {
        parcels: 30,
        shape_mix: [(Shape::Simple, 0.5), (Shape::Complex, 0.5)].into(),
        size_mix: [(SizeClass::Small, 0.5), (SizeClass::Large, 0.5)].into(),
        contamination: Some(Contamination { rate: 0.02, min_magnitude: 10.0, max_magnitude: 40.0 }),
        ..Default::default()
    };
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(3);
        cfg.simulation = Some(SimulationPlan { seed: 3, ..plan.clone() });
        cfg.output.dir = dir.path().to_path_buf();
        run_simulate(&cfg).unwrap();
        let analyze = Config::load(&dir.path().join("analyze.toml")).unwrap();
        run_analyze(&analyze).unwrap();
        std::fs::read(dir.path().join("analysis").join("report.json")).unwrap()
    };
    let (a, b) = (run(), run());
    report(9, a == b, format!("two simulate + analyze runs, report.json {} and {} bytes", a.len(), b.len()));
}
