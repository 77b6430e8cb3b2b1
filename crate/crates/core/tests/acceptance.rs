//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines show up in plain `cargo test` output.
//! A criterion can be reported as FAIL while its implementation checks still hold; only
//! the implementation checks decide the exit status (see `Outcome::hard`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hashtag_lifecycle::episode::{build_episode, detect};
use hashtag_lifecycle::growth::fit_armax;
use hashtag_lifecycle::pipeline::{run_pipeline, PipelineConfig};
use hashtag_lifecycle::report::{Cell, ModelTable, TableKind, TableRow};
use hashtag_lifecycle::survival::{fit_cox, fit_cox_counting, km, median_survival, rows_from_records, SurvivalRecord};
use hashtag_lifecycle::synth::{
    gen_armax_series, gen_debate_scenario, gen_survival_cohort, logistic_curve, poisson_logistic_curve,
    quantile_cohort, ArmaxTruth, ScenarioSpec,
};
use hashtag_lifecycle::taxonomy::{adjusted_rand_index, cluster, label_classes, standardize, FeatureVector, TrajectoryClass};
use hashtag_lifecycle::trajectory::{summarize_curve, SplineOptions};
use hashtag_lifecycle::vibrancy::{env_series, frame_series};

struct Outcome {
    pass: bool,
    /// Implementation checks that must hold even when the statistical target is missed.
    hard: bool,
    detail: String,
}

impl Outcome {
    fn strict(pass: bool, detail: String) -> Self {
        Self { pass, hard: pass, detail }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn trajectory_accuracy() -> Outcome {
    let opts = SplineOptions::default();
    let mut worst_growth: f64 = 0.0;
    let mut worst_te: i64 = 0;
    let mut slowest = Duration::ZERO;
    for size in [1e2, 1e3, 1e4] {
        for rate in [0.005, 0.02, 0.1] {
            let mid = 99f64.ln() / rate + 20.0;
            let curve = logistic_curve(size, rate, mid);
            let t = Instant::now();
            let a = summarize_curve(curve, &opts).expect("noise-free curve fits");
            slowest = slowest.max(t.elapsed());
            worst_growth = worst_growth.max(rel(a.summary.growth, size * rate / 4.0));
            let te = (mid + 99f64.ln() / rate).round() as i64;
            worst_te = worst_te.max((a.summary.t_e - te).abs());
        }
    }
    let (size, rate) = (1e4, 0.02);
    let mid = 99f64.ln() / rate + 20.0;
    let mut hits = 0;
    for seed in 0..50 {
        let curve = poisson_logistic_curve(size, rate, mid, seed);
        let t = Instant::now();
        let a = summarize_curve(curve, &opts).expect("noisy curve fits");
        slowest = slowest.max(t.elapsed());
        if rel(a.summary.growth, size * rate / 4.0) <= 0.10 {
            hits += 1;
        }
    }
    let pass = worst_growth <= 0.02 && worst_te <= 2 && hits >= 45 && slowest < Duration::from_secs(5);
    Outcome::strict(
        pass,
        format!(
            "noise-free worst growth error {:.3}%, worst t_e error {worst_te} min; Poisson growth within 10% in {hits}/50; slowest curve {slowest:.2?}",
            100.0 * worst_growth
        ),
    )
}

/// Detection over 20 debate scenarios, plus per-minute conservation on each.
fn detection_and_conservation() -> (Outcome, Outcome) {
    let mut exact = 0;
    let mut sizes_ok = true;
    let mut slowest = Duration::ZERO;
    let mut events = 0;
    let mut conserved = true;
    let mut minutes_checked = 0usize;
    let mut first_bad = String::new();
    for seed in 0..20 {
        let spec = ScenarioSpec::debate(seed);
        let (stream, truth) = gen_debate_scenario(&spec).expect("scenario");
        events = events.max(stream.len());
        let cfg = &spec.episodes[0];
        let ep = cfg.episode_id.as_str();
        let t = Instant::now();
        let d = detect(&stream, cfg).expect("detect");
        slowest = slowest.max(t.elapsed());
        sizes_ok &= truth.novel(ep).len() == 23 && truth.pop(ep).len() == 12 && truth.relevant(ep).len() == 10;
        if d.novel == truth.novel(ep) && d.pop == truth.pop(ep) && d.relevant == truth.relevant(ep) {
            exact += 1;
        }

        let totals = &truth.totals[ep];
        for tag in &d.relevant {
            let he = build_episode(&stream, cfg, tag).expect("episode");
            let frames = frame_series(&he, cfg);
            let env = env_series(&he, &stream, cfg);
            // first minute each retweet source is seen
            let mut first_seen: BTreeMap<&str, i64> = BTreeMap::new();
            for e in &he.events {
                if let Some(src) = &e.retweet_of {
                    first_seen.entry(src.as_str()).or_insert(cfg.minute_of(e.timestamp));
                }
            }
            let mut seen: Vec<i64> = first_seen.values().copied().collect();
            seen.sort_unstable();
            for (f, v) in frames.iter().zip(&env) {
                let m = f.minute as usize;
                let recount = seen.partition_point(|&s| s <= f.minute) as u64;
                let ok = f.minute == v.minute
                    && f.rt + v.rt_env == totals.retweets[m]
                    && f.rp + v.rp_env == totals.replies[m]
                    && f.src_alpha == recount;
                minutes_checked += 1;
                if !ok && conserved {
                    conserved = false;
                    first_bad = format!("seed {seed} tag {tag} minute {m}");
                }
            }
        }
    }
    let detection = Outcome::strict(
        exact == 20 && sizes_ok && slowest < Duration::from_secs(10),
        format!("exact novel/pop/relevant sets in {exact}/20 scenarios (23/12/10 planted); up to {events} events; slowest detection {slowest:.2?}"),
    );
    let conservation = Outcome::strict(
        conserved,
        if conserved {
            format!("{minutes_checked} tag-minutes: rt, rp complements and src_alpha recount all exact")
        } else {
            format!("first mismatch at {first_bad}")
        },
    );
    (detection, conservation)
}

fn armax_recovery() -> Outcome {
    let truth = ArmaxTruth::reference();
    let mut targets: Vec<(String, f64)> = ["rt", "rp", "src_alpha", "follow_alpha"]
        .iter()
        .zip(&truth.beta)
        .map(|(n, b)| (n.to_string(), *b))
        .collect();
    targets.extend([
        ("phi1".to_string(), truth.phi1),
        ("phi2".to_string(), truth.phi2),
        ("psi".to_string(), truth.psi),
    ]);
    let mut hits = vec![0usize; targets.len()];
    let mut ll_ok = 0;
    let mut slowest = Duration::ZERO;
    for seed in 0..50 {
        let design = gen_armax_series(&truth, 200, 60, seed).expect("series");
        let t = Instant::now();
        let fit = fit_armax(&design).expect("fit");
        slowest = slowest.max(t.elapsed());
        let arma = [(fit.phi1, fit.arma_se[0]), (fit.phi2, fit.arma_se[1]), (fit.psi, fit.arma_se[2])];
        for (i, (name, target)) in targets.iter().enumerate() {
            let (est, se) = match i {
                0..=3 => {
                    let c = fit.coefficient(name).expect("coefficient");
                    (c.estimate, c.se)
                }
                _ => arma[i - 4],
            };
            if (est - target).abs() <= 2.0 * se {
                hits[i] += 1;
            }
        }
        if fit.loglik >= fit.start_loglik {
            ll_ok += 1;
        }
    }
    let coverage: Vec<String> = targets.iter().zip(&hits).map(|((n, _), h)| format!("{n} {h}/50")).collect();
    Outcome::strict(
        hits.iter().all(|&h| h >= 45) && ll_ok == 50 && slowest < Duration::from_secs(30),
        format!(
            "within 2 SE: {}; loglik >= OLS start in {ll_ok}/50; slowest fit {slowest:.2?}",
            coverage.join(", ")
        ),
    )
}

fn cox_recovery() -> Outcome {
    let names = vec!["group".to_string()];
    let target = std::f64::consts::LN_2;
    let mut hits = 0;
    let mut worst_score: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    let mut betas = Vec::new();
    for seed in 0..50 {
        let (records, _) = gen_survival_cohort(&[target], 0.01, 1000, f64::INFINITY, seed).expect("cohort");
        let t = Instant::now();
        let fixed = fit_cox(&names, &records).expect("fixed fit");
        slowest = slowest.max(t.elapsed());
        let t = Instant::now();
        let counting = fit_cox_counting(&names, &rows_from_records(&records)).expect("counting fit");
        slowest = slowest.max(t.elapsed());
        let b = fixed.beta("group").expect("group");
        betas.push(b);
        if (b - target).abs() <= 0.1 {
            hits += 1;
        }
        worst_score = worst_score.max(fixed.score_norm).max(counting.score_norm);
        worst_gap = worst_gap.max((b - counting.beta("group").expect("group")).abs());
    }
    let mean = betas.iter().sum::<f64>() / 50.0;
    let sd = (betas.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / 49.0).sqrt();
    let hard = worst_score < 1e-6 && worst_gap < 1e-8 && slowest < Duration::from_secs(10);
    // the estimator must at least be unbiased to within Monte Carlo error
    let centered = (mean - target).abs() < 3.0 * sd / 50f64.sqrt();
    Outcome {
        pass: hard && hits >= 45,
        hard: hard && centered,
        detail: format!(
            "within 0.1 of ln 2 in {hits}/50 (mean {mean:.4}, sd {sd:.4}); max score norm {worst_score:.1e}; counting vs fixed gap {worst_gap:.1e}; slowest fit {slowest:.2?}"
        ),
    }
}

fn km_exactness() -> Outcome {
    let rec = |d: f64, e: bool| SurvivalRecord {
        tag: String::new(),
        duration: d,
        event: e,
        covariates: vec![],
    };
    // times 1,2,2,3+,4,5+,5 ; hand product-limit values
    let data = vec![
        rec(1.0, true),
        rec(2.0, true),
        rec(2.0, true),
        rec(3.0, false),
        rec(4.0, true),
        rec(5.0, false),
        rec(5.0, true),
    ];
    let curve = km(&data).expect("km");
    let s1 = 6.0 / 7.0;
    let s2 = s1 * 4.0 / 6.0;
    let s4 = s2 * 2.0 / 3.0;
    let s5 = s4 * 1.0 / 2.0;
    let expect = [(0.0, 1.0), (1.0, s1), (2.0, s2), (3.0, s2), (4.0, s4), (5.0, s5)];
    let g4 = 1.0 / (7.0 * 6.0) + 2.0 / (6.0 * 4.0) + 1.0 / (3.0 * 2.0);
    let mut fixtures_ok = curve.rows.len() == expect.len();
    for (r, (t, s)) in curve.rows.iter().zip(expect) {
        fixtures_ok &= r.time == t && (r.survival - s).abs() <= 4.0 * f64::EPSILON;
    }
    let var4 = curve.rows[4].variance;
    fixtures_ok &= (var4 - s4 * s4 * g4).abs() <= 1e-15;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut monotone = true;
    for _ in 0..300 {
        let n = rng.random_range(1..60);
        let recs: Vec<SurvivalRecord> = (0..n)
            .map(|_| rec(rng.random_range(0..40) as f64, rng.random_bool(0.7)))
            .collect();
        let c = km(&recs).expect("km");
        monotone &= c.rows[0].time == 0.0 && c.rows[0].survival == 1.0;
        monotone &= c.rows.windows(2).all(|w| w[1].survival <= w[0].survival);
    }
    let median = median_survival(&km(&quantile_cohort(401, 120.0)).expect("km")).unwrap_or(f64::NAN);
    Outcome::strict(
        fixtures_ok && monotone && (median - 120.0).abs() <= 1.0,
        format!("hand fixtures exact: {fixtures_ok}; nonincreasing from S(0)=1 on 300 random inputs: {monotone}; planted 120-min cohort median {median}"),
    )
}

fn classification() -> Outcome {
    let mut worst_ari: f64 = 1.0;
    let mut winner_ok = true;
    let mut min_sep = f64::INFINITY;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let noise = Normal::new(0.0, 1.0).expect("normal");
        let mut features = Vec::new();
        let mut planted = Vec::new();
        for i in 0..60 {
            let winner = i % 5 == 0;
            let c = if winner { 12.0 } else { 0.0 };
            let mut draw = |base: f64| base + c + noise.sample(&mut rng);
            features.push(FeatureVector::new(format!("t{i}"), draw(20.0), draw(40.0), draw(30.0)));
            planted.push(usize::from(winner));
        }
        let z = standardize(&features);
        // separation between planted centres in units of the pooled within-cluster sd
        let mut centres = [[0.0; 3]; 2];
        let mut counts = [0.0; 2];
        for (p, &l) in z.iter().zip(&planted) {
            counts[l] += 1.0;
            for j in 0..3 {
                centres[l][j] += p[j];
            }
        }
        for l in 0..2 {
            for j in 0..3 {
                centres[l][j] /= counts[l];
            }
        }
        let mut ss = 0.0;
        for (p, &l) in z.iter().zip(&planted) {
            ss += (0..3).map(|j| (p[j] - centres[l][j]).powi(2)).sum::<f64>();
        }
        let within_sd = (ss / (3.0 * (z.len() as f64 - 2.0))).sqrt();
        let dist = (0..3).map(|j| (centres[0][j] - centres[1][j]).powi(2)).sum::<f64>().sqrt();
        min_sep = min_sep.min(dist / within_sd);

        let model = cluster(&features, 2, seed).expect("cluster");
        worst_ari = worst_ari.min(adjusted_rand_index(&model.labels, &planted));
        let labels = label_classes(&model, &features).expect("labels");
        // winner class must hold the cluster with the larger mean final size
        let mean_size = |cl: usize| {
            let v: Vec<f64> = features
                .iter()
                .zip(&model.labels)
                .filter(|(_, &l)| l == cl)
                .map(|(f, _)| f.final_size)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let bigger = if mean_size(0) > mean_size(1) { 0 } else { 1 };
        winner_ok &= labels
            .iter()
            .all(|a| (a.class == TrajectoryClass::Winner) == (a.cluster == bigger));
    }
    Outcome::strict(
        worst_ari >= 0.9 && winner_ok && min_sep >= 5.0,
        format!("min separation {min_sep:.1} sd; worst ARI over 20 seeds {worst_ari:.3}; winner on larger-final-size cluster: {winner_ok}"),
    )
}

fn report_fidelity() -> Outcome {
    let growth = ModelTable {
        title: "Growth models".into(),
        kind: TableKind::Growth,
        columns: vec!["Winner".into(), "Also-ran".into()],
        rows: vec![TableRow {
            variable: "rt".into(),
            cells: vec![
                Some(Cell {
                    value: 0.0626,
                    se: 0.0239,
                    p_value: 0.0088,
                }),
                Some(Cell {
                    value: 0.2651,
                    se: 0.0073,
                    p_value: 1e-30,
                }),
            ],
        }],
        loglik: vec![Some(-476.54), Some(-26760.69)],
        aic: vec![Some(971.07), Some(53539.38)],
        n_obs: vec![None, None],
    };
    let persistence = ModelTable {
        title: "Persistence models".into(),
        kind: TableKind::Persistence,
        columns: vec!["Winner".into(), "Also-ran".into()],
        rows: vec![TableRow {
            variable: "follow_alpha".into(),
            cells: vec![
                Some(Cell {
                    value: 0.9935,
                    se: 0.0003,
                    p_value: 0.02,
                }),
                Some(Cell {
                    value: 0.99996,
                    se: 0.0002,
                    p_value: 0.5,
                }),
            ],
        }],
        loglik: vec![Some(-15.92968), Some(-1028.731)],
        aic: vec![Some(39.85936), Some(2065.461)],
        n_obs: vec![None, None],
    };
    let g = growth.to_text();
    let p = persistence.to_text();
    let gcsv = growth.to_csv().expect("csv");
    let checks = [
        g.contains("0.2651*** (0.0073)"),
        g.contains("0.0626** (0.0239)"),
        p.contains("0.9935* (0.0003)"),
        p.contains("1.000 (0.0002)"),
        g.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["Variables", "Winner", "Also-ran"]),
        g.lines().any(|l| l.starts_with("Loglik") && l.contains("-476.54") && l.contains("-26760.69")),
        g.lines().any(|l| l.starts_with("AIC") && l.contains("971.07")),
        p.lines().any(|l| l.starts_with("Loglik") && l.contains("-15.92968") && l.contains("-1028.731")),
        p.lines().any(|l| l.starts_with("AIC") && l.contains("39.85936") && l.contains("2065.461")),
        gcsv.starts_with("Variables,Winner,Also-ran\n") && gcsv.contains("Loglik,") && gcsv.contains("AIC,"),
    ];
    let ok = checks.iter().filter(|&&c| c).count();
    Outcome::strict(
        ok == checks.len(),
        format!("{ok}/{} layout and fixture checks, including \"0.2651*** (0.0073)\" and \"0.9935* (0.0003)\"", checks.len()),
    )
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in fs::read_dir(dir).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).expect("prefix").to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).expect("read"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let spec = ScenarioSpec::standard(2024);
    let (stream, truth) = gen_debate_scenario(&spec).expect("scenario");
    let input = tmp.path().join("events.jsonl");
    hashtag_lifecycle::event::write_jsonl(&stream, fs::File::create(&input).expect("create")).expect("write");
    let mut times = Vec::new();
    let mut trees = Vec::new();
    let mut exit = 0;
    let mut labels_ok = true;
    for run in ["a", "b"] {
        let mut cfg = PipelineConfig::new(vec![input.clone()], spec.episodes.clone(), tmp.path().join(run));
        cfg.seed = spec.seed;
        cfg.with_env = true;
        let t = Instant::now();
        let bundle = run_pipeline(&cfg).expect("pipeline");
        times.push(t.elapsed());
        exit = exit.max(bundle.exit_code());
        labels_ok &= bundle
            .assignments
            .iter()
            .all(|a| truth.label(&a.tag) == Some(a.class));
        trees.push(tree(&cfg.out));
    }
    let identical = trees[0] == trees[1];
    let files = trees[0].len();
    let relevant: BTreeSet<String> = spec.episodes.iter().flat_map(|e| truth.relevant(&e.episode_id)).collect();
    let slowest = times.iter().max().copied().unwrap_or_default();
    Outcome::strict(
        identical && slowest < Duration::from_secs(120) && exit == 0,
        format!(
            "{} events, {} relevant tags; two runs byte-identical over {files} files: {identical}; slowest run {slowest:.2?}; exit status {exit}; classes match planted labels: {labels_ok}",
            stream.len(),
            relevant.len()
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let (c2, c3) = detection_and_conservation();
    let outcomes = [
        ("1", "trajectory accuracy", trajectory_accuracy()),
        ("2", "detection correctness", c2),
        ("3", "feature conservation", c3),
        ("4", "ARMAX recovery", armax_recovery()),
        ("5", "Cox recovery", cox_recovery()),
        ("6", "KM exactness", km_exactness()),
        ("7", "classification", classification()),
        ("8", "report fidelity", report_fidelity()),
        ("9", "end-to-end determinism", end_to_end()),
    ];
    println!();
    for (id, name, o) in &outcomes {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} [{name}] {}", o.detail);
    }
    let passed = outcomes.iter().filter(|(_, _, o)| o.pass).count();
    let broken: Vec<&str> = outcomes.iter().filter(|(_, _, o)| !o.hard).map(|(id, _, _)| *id).collect();
    println!("{passed}/{} criteria pass ({:.1?})", outcomes.len(), started.elapsed());
    if broken.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("implementation checks failed for criteria {}", broken.join(", "));
        ExitCode::FAILURE
    }
}
