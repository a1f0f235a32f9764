//! Acceptance criteria, one line per criterion. Exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use occupancy::exactdist::{enumerate_pmf, exact_pmf, low_boxes_all_occupied, DpConfig};
use occupancy::experiments::{lecam_report, rate_study, RateMethod, RateStudy};
use occupancy::lemmas::run_suite;
use occupancy::metrics::{local_distance, total_variation, Pmf};
use occupancy::moments::{moments, MomentMode, Statistic};
use occupancy::occusim::{
    condition_ratios, conditional_moments, conditional_pmf_given_m, decomposition_estimate,
    sample_histogram, two_stage_sample,
};
use occupancy::tpoisson::{TranslatedPoisson, WINDOW_EPS};
use occupancy::weights::WeightModel;

use common::*;

type Outcome = (bool, String);

fn small_models() -> Vec<WeightModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    for len in 1..=5 {
        out.push(WeightModel::explicit(vec![1.0 / len as f64; len]).unwrap());
        for _ in 0..30 {
            out.push(WeightModel::explicit(random_model(&mut rng, len)).unwrap());
        }
    }
    out.push(WeightModel::explicit(vec![0.5, 0.3, 0.2]).unwrap());
    out.push(WeightModel::explicit(vec![0.5, 0.3, 0.15, 0.05]).unwrap());
    out
}

fn small_stats() -> [Statistic; 3] {
    [
        Statistic::occupied(),
        Statistic::exactly(1),
        Statistic::exactly(2),
    ]
}

fn sup_diff(a: &Pmf, b: &Pmf) -> f64 {
    let lo = a.offset.min(b.offset);
    let hi = a.end().max(b.end());
    (lo..hi)
        .map(|k| (a.mass(k) - b.mass(k)).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut cases = 0;
    for model in small_models() {
        let probs: Vec<f64> = (1..=model.support_len().unwrap())
            .map(|j| model.prob(j))
            .collect();
        for n in 1..=6 {
            for stat in small_stats() {
                let dp = exact_pmf(&model, n, stat, DpConfig::full(&model).unwrap()).unwrap();
                let en = enumerate_pmf(&model, n, stat).unwrap();
                worst = worst.max(sup_diff(&dp, &en));
                for (k, p) in statistic_law(&probs, n, stat) {
                    worst_oracle = worst_oracle.max((dp.mass(k) - p).abs());
                }
                cases += 1;
            }
        }
    }
    let pass = worst <= 1e-12 && worst_oracle <= 1e-12;
    (
        pass,
        format!("{cases} cases, max |dp - enumeration| = {worst:.2e}, max |dp - allocation oracle| = {worst_oracle:.2e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    for model in small_models() {
        for n in 1..=6 {
            for stat in small_stats() {
                let pmf = exact_pmf(&model, n, stat, DpConfig::full(&model).unwrap()).unwrap();
                for mode in [MomentMode::ExactPairwise, MomentMode::HybridLargeScale] {
                    let m = moments(&model, n, stat, mode).unwrap();
                    worst = worst
                        .max((m.mu - pmf.mean()).abs())
                        .max((m.var - pmf.variance()).abs());
                }
            }
        }
    }
    let probs: Vec<f64> = {
        let raw: Vec<f64> = (1..=200).map(|j| 1.0 / (j * j) as f64).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect()
    };
    let model = WeightModel::explicit(probs).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut details = Vec::new();
    for n in [100u64, 1000] {
        for stat in [Statistic::occupied(), Statistic::exactly(1)] {
            let m = moments(&model, n, stat, MomentMode::ExactPairwise).unwrap();
            let hist = sample_histogram(&model, n, stat, 100_000, 2024 + n).unwrap();
            let s = sample_moments(&hist);
            let zm = (s.mean - m.mu).abs() / s.mean_se;
            let zv = (s.var - m.var).abs() / s.var_se;
            worst_z = worst_z.max(zm).max(zv);
            details.push(format!(
                "n={n} {:?}: z_mean={zm:.2} z_var={zv:.2}",
                stat.kind
            ));
        }
    }
    (
        worst <= 1e-10 && worst_z <= 4.0,
        format!(
            "max exact gap {worst:.2e}; Monte Carlo {}",
            details.join(", ")
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut models = vec![vec![0.5, 0.3, 0.15, 0.05]];
    for _ in 0..5 {
        models.push(random_model(&mut rng, 4));
    }
    let mut worst: f64 = 0.0;
    for probs in &models {
        let (j0, _) = WeightModel::explicit(probs.clone()).unwrap().split_j0();
        for n in 1..=3 {
            let a = two_stage_law(probs, n, j0);
            let b = restricted_law(probs, n, j0);
            for key in a.keys().chain(b.keys()) {
                let d = (a.get(key).unwrap_or(&0.0) - b.get(key).unwrap_or(&0.0)).abs();
                worst = worst.max(d);
            }
        }
    }
    let model = WeightModel::explicit(vec![0.5, 0.3, 0.15, 0.05]).unwrap();
    let (j0, _) = model.split_j0();
    let n = 12u64;
    let reps = 100_000u64;
    let mut tables: BTreeMap<usize, Vec<u64>> =
        (j0..=4).map(|j| (j, vec![0; n as usize + 1])).collect();
    for i in 0..reps {
        let s = two_stage_sample(&model, n, 90_000_000 + i).unwrap();
        for (j, t) in tables.iter_mut() {
            t[*s.counts.get(j).unwrap_or(&0) as usize] += 1;
        }
    }
    let mut min_p: f64 = 1.0;
    for (j, t) in &tables {
        let expected: Vec<f64> = (0..=n)
            .map(|k| reps as f64 * binom(n, k, model.prob(*j)))
            .collect();
        min_p = min_p.min(chi_square_pvalue(t, &expected));
    }
    (
        worst <= 1e-12 && min_p > 1e-4,
        format!("max |two-stage - restricted| = {worst:.2e}; smallest marginal chi-square p-value {min_p:.3}"),
    )
}

fn criterion_4() -> Outcome {
    let model = WeightModel::zeta(2.0).unwrap();
    let mut violations = 0;
    let mut count = 0;
    let mut worst_tv: f64 = 0.0;
    let mut worst_loc: f64 = 0.0;
    for (n, base) in [(200u64, 0u64), (2000, 10_000)] {
        let jn = model.tail_profile(n).jn;
        for i in 0..500 {
            let s = two_stage_sample(&model, n, 7_000_000 + base + i).unwrap();
            let m = s.stage_one.as_ref().unwrap();
            for stat in [
                Statistic::occupied().from_box(jn),
                Statistic::exactly(1).from_box(jn),
            ] {
                let (mu, s2) = conditional_moments(m, &model, &stat).unwrap();
                let law = conditional_pmf_given_m(m, &model, &stat).unwrap();
                let tp = TranslatedPoisson::fit(mu, s2).unwrap().window(WINDOW_EPS);
                let tv = total_variation(&law, &tp);
                let loc = local_distance(&law, &tp);
                let b_tv = if s2 > 0.0 {
                    (4.0 / s2.sqrt()).min(1.0)
                } else {
                    1.0
                };
                let b_loc = if s2 > 0.0 { (280.0 / s2).min(1.0) } else { 1.0 };
                if tv.value > b_tv + tv.uncertainty || loc.value > b_loc + loc.uncertainty {
                    violations += 1;
                }
                worst_tv = worst_tv.max(tv.value / b_tv);
                worst_loc = worst_loc.max(loc.value / b_loc);
                count += 1;
            }
        }
    }
    (
        violations == 0,
        format!(
            "{count} conditional laws from 1000 stage-one outcomes, {violations} violations; largest d_TV/bound {worst_tv:.3}, d_loc/bound {worst_loc:.3}"
        ),
    )
}

const RATE_GRID: [u64; 5] = [250, 500, 1000, 2000, 4000];

fn rate_outcome(study: &RateStudy) -> Outcome {
    let tv = study.tv_fit.map(|f| f.slope);
    let loc = study.loc_fit.map(|f| f.slope);
    let pass = tv.is_some_and(|s| (-1.5..=-0.6).contains(&s))
        && loc.is_some_and(|s| (-2.6..=-1.5).contains(&s))
        && study.tv_spread.is_some_and(|s| s <= 3.0)
        && study.loc_spread.is_some_and(|s| s <= 3.0);
    let flagged = study
        .rows
        .iter()
        .filter(|r| r.tv_inconclusive || r.loc_inconclusive)
        .map(|r| r.n.to_string())
        .collect::<Vec<_>>();
    let premise = study
        .warnings
        .iter()
        .filter(|w| w.contains("premise"))
        .count();
    (
        pass,
        format!(
            "slope d_TV {} (fit over {} rows), slope d_loc {} (over {}), spread sigma*d_TV {}, sigma^2*d_loc {}; inconclusive rows [{}]; {premise} rows below the n_0 premise",
            fmt_opt(tv),
            study.tv_fit.map_or(0, |f| f.points),
            fmt_opt(loc),
            study.loc_fit.map_or(0, |f| f.points),
            fmt_opt(study.tv_spread),
            fmt_opt(study.loc_spread),
            flagged.join(",")
        ),
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("absent".into(), |v| format!("{v:.3}"))
}

fn criterion_5() -> Outcome {
    let model = WeightModel::zeta(2.0).unwrap();
    let study = rate_study(
        &model,
        Statistic::occupied(),
        &RATE_GRID,
        RateMethod::MonteCarlo,
        1_000_000,
        7,
    )
    .unwrap();
    rate_outcome(&study)
}

fn criterion_6() -> Outcome {
    let model = WeightModel::zeta(2.0).unwrap();
    let study = rate_study(
        &model,
        Statistic::exactly(1),
        &RATE_GRID,
        RateMethod::MonteCarlo,
        1_000_000,
        7,
    )
    .unwrap();
    rate_outcome(&study)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut explicit = vec![vec![0.5, 0.3, 0.15, 0.05], vec![0.1; 10], {
        let raw: Vec<f64> = (1..=12).map(|j| 0.5f64.powi(j)).collect();
        let t: f64 = raw.iter().sum();
        raw.iter().map(|x| x / t).collect()
    }];
    for len in [6, 15, 40] {
        explicit.push(random_model(&mut rng, len));
    }
    let mut checked = 0;
    let mut failures = Vec::new();
    let mut max_ratio: f64 = 0.0;
    for probs in &explicit {
        let model = WeightModel::explicit(probs.clone()).unwrap();
        for n in [10u64, 30, 100, 300, 1000] {
            let rep = lecam_report(&model, n).unwrap();
            for e in &rep.entries {
                checked += 1;
                if rep.pn > 0.0 {
                    max_ratio = max_ratio.max(e.d_tv / rep.pn);
                }
                if !e.holds {
                    failures.push(format!(
                        "len {} n {n}: d_TV {:.3e} > P_n {:.3e}",
                        probs.len(),
                        e.d_tv,
                        rep.pn
                    ));
                }
            }
            if n >= 100 && rep.low_boxes_ok == Some(false) {
                failures.push(format!(
                    "len {} n {n}: low boxes {:?}",
                    probs.len(),
                    rep.low_boxes_occupied
                ));
            }
        }
    }
    let mut low_checked = 0;
    let mut skipped = Vec::new();
    for (a, ns) in [
        (1.5, vec![100u64, 1000, 10_000]),
        (2.0, vec![100, 1000, 10_000, 100_000]),
        (3.0, vec![100, 10_000, 1_000_000]),
    ] {
        let model = WeightModel::zeta(a).unwrap();
        for n in ns {
            let jn = model.tail_profile(n).jn;
            if jn <= 1 {
                continue;
            }
            let v = match low_boxes_all_occupied(&model, n, jn - 1) {
                Ok(v) => v,
                Err(_) => {
                    skipped.push(format!("zeta {a} n {n} (j_n = {jn})"));
                    continue;
                }
            };
            low_checked += 1;
            if v < 1.0 - (n as f64).powi(-3) {
                failures.push(format!("zeta {a} n {n}: low boxes {v}"));
            }
        }
    }
    (
        failures.is_empty(),
        format!(
            "{checked} restricted comparisons (largest d_TV / P_n = {max_ratio:.3}), {low_checked} zeta low-box checks, beyond the subset guard: [{}]; failures: [{}]",
            skipped.join(", "),
            failures.join("; ")
        ),
    )
}

fn criterion_8() -> Outcome {
    let rep = run_suite(42, 10_000);
    let mut parts = Vec::new();
    for p in &rep.parts {
        let tag = if p.informational {
            " (informational)"
        } else {
            ""
        };
        parts.push(format!(
            "{} {}/{} failed, {} vacuous{tag}",
            p.lemma_id, p.failed, p.instances, p.vacuous
        ));
    }
    (rep.all_pass, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let model = WeightModel::zeta(2.0).unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for n in [256u64, 1024, 4096] {
        for stat in [Statistic::occupied(), Statistic::exactly(1)] {
            let d = decomposition_estimate(&model, n, stat, 4000, 500 + n).unwrap();
            let gap = d.sigma2 - d.rho2 - d.tau2;
            let z = gap.abs() / d.std_errors.identity;
            let r = condition_ratios(&d).unwrap();
            let bounded = |x: f64| (1e-2..=1e2).contains(&x);
            let ok = z <= 4.0 && bounded(r.nu2_over_rho2) && bounded(r.rho2_over_sigma2);
            pass &= ok;
            lines.push(format!(
                "n={n} {:?}: identity z={z:.2}, nu2/rho2={:.3}, rho2/sigma2={:.3}",
                stat.kind, r.nu2_over_rho2, r.rho2_over_sigma2
            ));
        }
    }
    (pass, lines.join("; "))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (
            1,
            "exact law equals enumeration",
            Duration::from_secs(10),
            criterion_1,
        ),
        (
            2,
            "moment consistency",
            Duration::from_secs(120),
            criterion_2,
        ),
        (
            3,
            "two-stage construction",
            Duration::from_secs(60),
            criterion_3,
        ),
        (
            4,
            "conditional approximation bounds",
            Duration::from_secs(60),
            criterion_4,
        ),
        (
            5,
            "rate for occupied boxes",
            Duration::from_secs(1200),
            criterion_5,
        ),
        (
            6,
            "rate for singletons",
            Duration::from_secs(1200),
            criterion_6,
        ),
        (
            7,
            "Le Cam bound and low boxes",
            Duration::from_secs(60),
            criterion_7,
        ),
        (
            8,
            "lemma oracle suite",
            Duration::from_secs(300),
            criterion_8,
        ),
        (
            9,
            "decomposition identity and ratios",
            Duration::from_secs(600),
            criterion_9,
        ),
    ];
    // ACCEPTANCE_ONLY=3,7 restricts the run to the listed criteria
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, limit, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = run();
        let took = start.elapsed();
        let in_time = took <= limit;
        let pass = ok && in_time;
        println!(
            "criterion {id} ({name}): {} in {:.1}s (limit {}s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
        if !pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {ran} criteria run pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
