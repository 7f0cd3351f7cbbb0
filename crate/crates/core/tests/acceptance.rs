//! Acceptance criteria 1-10, one PASS/FAIL line each.
//!
//! Criteria listed in `EXPECTED_FAILURES` are reported but do not fail the run;
//! any other failure exits nonzero.

use std::process::ExitCode;
use std::time::Instant;

use bcprior::clustering::{kmeans_ovl, ClusterConfig, Clusterer};
use bcprior::densities::{
    Component, DatasetSummary, Endpoint, MixturePrior, PosteriorDensity, Provenance, Repr,
    WeightedComponent,
};
use bcprior::evidence::{build_profile_with, clustered_at, profile_cluster_config, ProfileConfig};
use bcprior::fixtures::{
    nausea_data, one_cluster_scenario, three_cluster_scenario, two_cluster_data,
    two_cluster_low_ids, two_cluster_scenario,
};
use bcprior::overlap::ovl;
use bcprior::posterior::update;
use bcprior::rng::{derive_str, rng_from};
use bcprior::simkit::{
    estimation_study, generate_external, oc_study, Method, OcConfig, ScenarioConfig, Setting,
    T_TEST_LABEL,
};
use bcprior::synthesis::{ess, SynthConfig};
use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

const EXPECTED_FAILURES: [u32; 4] = [2, 4, 5, 8];
const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn profile_config(endpoint: Endpoint, threshold: f64, seed: u64) -> ProfileConfig {
    ProfileConfig {
        threshold,
        cluster: profile_cluster_config(),
        synth: SynthConfig::for_endpoint(endpoint).with_seed(seed),
        seed,
    }
}

fn normal_post(i: usize, mean: f64, sd: f64) -> PosteriorDensity {
    PosteriorDensity::new(
        format!("s{i}"),
        10,
        Repr::Parametric(Component::Normal { mean, sd }),
    )
    .unwrap()
}

/// Every labeling of `h` items into exactly `k` nonempty blocks, up to relabeling.
fn set_partitions(h: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(
        i: usize,
        used: usize,
        h: usize,
        k: usize,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if i == h {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        if k - used > h - i {
            return;
        }
        for l in 0..=used.min(k - 1) {
            cur.push(l);
            rec(i + 1, used.max(l + 1), h, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, 0, h, k, &mut Vec::new(), &mut out);
    out
}

fn criterion_1() -> Outcome {
    let mut rng = rng_from(101);
    let mut hits = 0;
    for inst in 0..100 {
        let h = rng.random_range(4..=8);
        let k = rng.random_range(2..=3);
        let posts: Vec<PosteriorDensity> = (0..h)
            .map(|i| normal_post(i, rng.random_range(0.0..1.0), rng.random_range(0.05..0.3)))
            .collect();
        let found = kmeans_ovl(&posts, k, 7000 + inst, 10, 100).unwrap().oci;
        let clusterer = Clusterer::new(&posts, ClusterConfig::default()).unwrap();
        let best = set_partitions(h, k)
            .iter()
            .map(|labels| clusterer.partition(labels, k).unwrap().oci)
            .fold(f64::NEG_INFINITY, f64::max);
        if found >= best - 1e-6 {
            hits += 1;
        }
    }
    outcome(
        hits >= 95,
        format!("k-means attained the exhaustive optimum in {hits}/100 instances"),
    )
}

fn criterion_2() -> Outcome {
    let two = build_profile_with(
        &two_cluster_data(),
        &profile_config(Endpoint::Continuous, 0.60, SEED),
    )
    .unwrap();
    let nausea = build_profile_with(
        &nausea_data(),
        &profile_config(Endpoint::Binary, 0.60, SEED),
    )
    .unwrap();
    let raised = nausea.with_threshold(0.70).unwrap();
    outcome(
        two.k_star == 2 && nausea.k_star == 3 && raised.k_star == 6,
        format!(
            "two-cluster K* = {} (want 2), nausea K* = {} (want 3), nausea at 0.70 K* = {} (want 6)",
            two.k_star, nausea.k_star, raised.k_star
        ),
    )
}

fn criterion_3() -> Outcome {
    let data = two_cluster_data();
    let entry = clustered_at(&data, 2, &profile_config(Endpoint::Continuous, 0.60, SEED)).unwrap();
    let mut low: Vec<String> = entry.partition.member_ids()[0].clone();
    low.sort();
    let mut want: Vec<String> = two_cluster_low_ids()
        .iter()
        .map(|s| s.to_string())
        .collect();
    want.sort();
    outcome(low == want, format!("low cluster {{{}}}", low.join(",")))
}

fn external(cfg: &ScenarioConfig) -> Vec<DatasetSummary> {
    generate_external(cfg, derive_str(cfg.seed, "external"))
        .unwrap()
        .into_iter()
        .map(|g| g.summary)
        .collect()
}

fn criterion_4() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for cfg in [
        one_cluster_scenario(),
        two_cluster_scenario(),
        three_cluster_scenario(),
    ] {
        let pcfg = ProfileConfig {
            threshold: cfg.threshold,
            cluster: profile_cluster_config(),
            synth: SynthConfig::for_endpoint(Endpoint::Continuous)
                .with_seed(derive_str(cfg.seed, "synthesis")),
            seed: derive_str(cfg.seed, "clustering"),
        };
        let profile = build_profile_with(&external(&cfg), &pcfg).unwrap();
        let oei = profile.oei_sequence();
        let mut worst = 0.0f64;
        let mut run = f64::NEG_INFINITY;
        for &v in &oei {
            worst = worst.max(run - v);
            run = run.max(v);
        }
        pass &= worst <= 0.01;
        details.push(format!("{} max drop {worst:.4}", cfg.name));
    }
    outcome(pass, details.join(", "))
}

fn criterion_5() -> Outcome {
    let data = nausea_data();
    let entry = clustered_at(&data, 3, &profile_config(Endpoint::Binary, 0.60, SEED)).unwrap();
    let w = &entry.outer_weights;
    let region_ess: Vec<f64> = entry
        .cluster_priors
        .iter()
        .zip(w)
        .map(|(p, &wm)| wm * ess(p, None).unwrap().total)
        .collect();
    let want_w = [0.18, 0.47, 0.35];
    let want_e = [8.4, 25.6, 5.4];
    let weights_ok = w.iter().zip(want_w).all(|(a, b)| (a - b).abs() <= 0.02);
    let order_ok = region_ess[1] > region_ess[0] && region_ess[0] > region_ess[2];
    let ess_ok = region_ess
        .iter()
        .zip(want_e)
        .all(|(a, b)| (a - b).abs() <= 0.4 * b);
    outcome(
        weights_ok && order_ok && ess_ok,
        format!(
            "weights ({:.3}, {:.3}, {:.3}), region ESS ({:.1}, {:.1}, {:.1})",
            w[0], w[1], w[2], region_ess[0], region_ess[1], region_ess[2]
        ),
    )
}

fn criterion_6() -> Outcome {
    let entry = clustered_at(
        &nausea_data(),
        1,
        &profile_config(Endpoint::Binary, 0.60, SEED),
    )
    .unwrap();
    let total = ess(&entry.prior, None).unwrap().total;
    outcome((total - 5.7).abs() <= 3.0, format!("MAP ESS {total:.2}"))
}

fn criterion_7() -> Outcome {
    let cfg = two_cluster_scenario();
    let report = estimation_study(&cfg, &Method::BORROWING).unwrap();
    let get = |s, m| report.row(s, 10, m).unwrap();
    let tb = get(Setting::Consistency, Method::Bcmap)
        .trimmed_at(0.05)
        .unwrap();
    let tm = get(Setting::Consistency, Method::Map)
        .trimmed_at(0.05)
        .unwrap();
    let rb = get(Setting::Inconsistency, Method::Bcmap).rmse;
    let rr = get(Setting::Inconsistency, Method::RobustBcmap).rmse;
    outcome(
        tb < tm && rr <= rb - 0.01,
        format!(
            "k = {}, trimmed BCMAP {tb:.4} vs MAP {tm:.4}, inconsistency rBCMAP {rr:.4} vs BCMAP {rb:.4}",
            report.priors.k
        ),
    )
}

fn criterion_8() -> Outcome {
    let cfg = OcConfig::default();
    let report = oc_study(&cfg).unwrap();
    let power = |m: &str, sizes| report.row(m, 0.2, sizes).unwrap().power;
    let pb = power(Method::Bcmap.label(), (10, 30));
    let pm = power(Method::Map.label(), (10, 30));
    let pf = power(T_TEST_LABEL, (10, 30));
    let pf30 = power(T_TEST_LABEL, (30, 30));
    let max_t1 = report.rows.iter().map(|r| r.type1).fold(0.0, f64::max);
    outcome(
        pb - pm >= 0.05 && pm - pf >= 0.05 && max_t1 <= 0.07 && (pf30 - 0.81).abs() <= 0.04,
        format!(
            "power BCMAP {pb:.3}, MAP {pm:.3}, t-test {pf:.3}, t-test 30:30 {pf30:.3}, max type-1 {max_t1:.3}"
        ),
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn criterion_9() -> Outcome {
    let mut rng = rng_from(909);
    let mut bad = 0;
    let tol = 1e-10;
    for i in 0..1000 {
        let m = rng.random_range(1..=3);
        let ws: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..1.0)).collect();
        let wsum: f64 = ws.iter().sum();
        let binary = i % 2 == 0;
        let comps: Vec<Component> = (0..m)
            .map(|_| {
                if binary {
                    Component::Beta {
                        a: rng.random_range(0.5..20.0),
                        b: rng.random_range(0.5..20.0),
                    }
                } else {
                    Component::Normal {
                        mean: rng.random_range(-1.0..1.0),
                        sd: rng.random_range(0.05..1.0),
                    }
                }
            })
            .collect();
        let prior = MixturePrior::new(
            comps
                .iter()
                .zip(&ws)
                .map(|(&component, &w)| WeightedComponent {
                    component,
                    weight: w / wsum,
                })
                .collect(),
            Provenance::Map,
        )
        .unwrap();
        let n: u64 = rng.random_range(1..=60);
        let (data, expected): (DatasetSummary, Vec<(Component, f64)>) = if binary {
            let r = rng.random_range(0..=n);
            let lb = |a: f64, b: f64| ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
            let raw: Vec<(Component, f64)> = comps
                .iter()
                .zip(&ws)
                .map(|(c, &w)| match *c {
                    Component::Beta { a, b } => {
                        let (a1, b1) = (a + r as f64, b + (n - r) as f64);
                        (
                            Component::Beta { a: a1, b: b1 },
                            w * (lb(a1, b1) - lb(a, b)).exp(),
                        )
                    }
                    _ => unreachable!(),
                })
                .collect();
            (DatasetSummary::binary("x", r, n).unwrap(), raw)
        } else {
            let ybar = rng.random_range(-1.0..1.0);
            let s = rng.random_range(0.1..2.0);
            let se2 = s * s / n as f64;
            let raw: Vec<(Component, f64)> = comps
                .iter()
                .zip(&ws)
                .map(|(c, &w)| match *c {
                    Component::Normal { mean, sd } => {
                        let t2 = sd * sd;
                        let post_mean = (mean * se2 + ybar * t2) / (t2 + se2);
                        let post_sd = (t2 * se2 / (t2 + se2)).sqrt();
                        let marg = Normal::new(mean, (t2 + se2).sqrt()).unwrap().pdf(ybar);
                        (
                            Component::Normal {
                                mean: post_mean,
                                sd: post_sd,
                            },
                            w * marg,
                        )
                    }
                    _ => unreachable!(),
                })
                .collect();
            (DatasetSummary::continuous("x", n, ybar, s).unwrap(), raw)
        };
        let z: f64 = expected.iter().map(|e| e.1).sum();
        let got = update(&prior, &data).unwrap();
        let ok = got.components().iter().zip(&expected).all(|(g, (c, w))| {
            let params = match (g.component, *c) {
                (Component::Beta { a, b }, Component::Beta { a: a1, b: b1 }) => {
                    close(a, a1, tol) && close(b, b1, tol)
                }
                (Component::Normal { mean, sd }, Component::Normal { mean: m1, sd: s1 }) => {
                    close(mean, m1, tol) && close(sd, s1, tol)
                }
                _ => false,
            };
            params && close(g.weight, w / z, 1e-9)
        });
        if !ok {
            bad += 1;
        }
    }
    outcome(
        bad == 0,
        format!("{bad}/1000 updates disagree with the closed form"),
    )
}

fn criterion_10() -> Outcome {
    let std = Normal::standard();
    let sigma = 0.7;
    let mut worst = 0.0f64;
    for i in 0..20 {
        let delta = 0.15 * i as f64;
        let f = Component::Normal {
            mean: 0.0,
            sd: sigma,
        };
        let g = Component::Normal {
            mean: delta,
            sd: sigma,
        };
        let want = 2.0 * std.cdf(-delta / (2.0 * sigma));
        worst = worst.max((ovl(&f, &g) - want).abs());
    }
    outcome(
        worst <= 1e-3,
        format!("max abs error {worst:.2e} over 20 separations"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = Vec::new();
    for (id, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let secs = start.elapsed().as_secs_f64();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && EXPECTED_FAILURES.contains(&id) {
            " [known]"
        } else {
            ""
        };
        println!(
            "criterion {id:>2}: {status}{note} ({secs:.1}s) {}",
            o.detail
        );
        if !o.pass && !EXPECTED_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
