//! Subcommand implementations.

use std::fs;
use std::path::Path;

use bcprior::clustering::Partition;
use bcprior::densities::{
    read_datasets_csv, read_datasets_json, Component, DatasetSummary, Endpoint, MixturePrior,
};
use bcprior::evidence::{
    build_profile_with, clustered_at, profile_cluster_config, ProfileConfig, ProfileEntry,
};
use bcprior::simkit::{
    estimation_study_with, generate_external, oc_study_with, Method, OcConfig, PriorSet,
    ScenarioConfig,
};
use bcprior::synthesis::{ess, rbcmap, EssReport, SynthConfig, WeaklyInformativeSpec};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::output::{io_err, sha256_hex, CliError, CliResult, Metadata, OutDir};
use crate::{Common, Format, Mode};

fn load_data(path: &Path) -> CliResult<(Vec<DatasetSummary>, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let data = if is_json {
        read_datasets_json(&bytes[..])?
    } else {
        read_datasets_csv(&bytes[..])?
    };
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no datasets", path.display())));
    }
    if data.iter().any(|d| d.endpoint != data[0].endpoint) {
        return Err(CliError::Data(format!(
            "{}: mixed endpoints",
            path.display()
        )));
    }
    Ok((data, bytes))
}

fn load_config<T: DeserializeOwned>(path: &Path) -> CliResult<(T, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    let cfg = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        CliError::Data(format!("{}: field `{at}`: {}", path.display(), e.inner()))
    })?;
    Ok((cfg, bytes))
}

fn config_invalid(path: &Path, e: bcprior::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn check_threshold(threshold: f64) -> CliResult<()> {
    if threshold > 0.0 && threshold <= 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--threshold {threshold} outside (0, 1]"
        )))
    }
}

fn check_k(k: usize, h: usize) -> CliResult<()> {
    if k == 0 || k > h {
        return Err(CliError::Usage(format!("--k {k} must lie in 1..={h}")));
    }
    Ok(())
}

fn profile_config(endpoint: Endpoint, threshold: f64, seed: u64) -> ProfileConfig {
    ProfileConfig {
        threshold,
        cluster: profile_cluster_config(),
        synth: SynthConfig::for_endpoint(endpoint).with_seed(seed),
        seed,
    }
}

/// Members of each cluster in input order.
fn members<'a>(data: &'a [DatasetSummary], partition: &Partition) -> Vec<Vec<&'a DatasetSummary>> {
    let mut out = vec![Vec::new(); partition.k];
    for d in data {
        if let Some(&c) = partition.assignment.get(&d.source_id) {
            out[c - 1].push(d);
        }
    }
    out
}

fn print_membership(data: &[DatasetSummary], partition: &Partition) {
    println!("{:<8} {:>7} {:>7}  members", "cluster", "sources", "N");
    for (m, ds) in members(data, partition).iter().enumerate() {
        let n: u64 = ds.iter().map(|d| d.n_obs).sum();
        let ids: Vec<&str> = ds.iter().map(|d| d.source_id.as_str()).collect();
        println!("{:<8} {:>7} {:>7}  {}", m + 1, ds.len(), n, ids.join(" "));
    }
    println!("OCI = {:.4}", partition.oci);
}

fn write_partition(
    out: &OutDir,
    data: &[DatasetSummary],
    partition: &Partition,
    format: Format,
) -> CliResult<()> {
    match format {
        Format::Json => out.write_json("partition.json", "partition", partition)?,
        Format::Csv => out.write_with("partition.csv", |w| {
            use std::io::Write;
            writeln!(w, "source_id,cluster")?;
            for d in data {
                writeln!(w, "{},{}", d.source_id, partition.assignment[&d.source_id])?;
            }
            Ok(())
        })?,
    };
    Ok(())
}

pub fn cluster(
    path: &Path,
    k: Option<usize>,
    threshold: f64,
    seed: u64,
    common: &Common,
) -> CliResult<()> {
    check_threshold(threshold)?;
    let (data, bytes) = load_data(path)?;
    if let Some(k) = k {
        check_k(k, data.len())?;
    }
    let inputs = json!({ "data_sha256": sha256_hex(&bytes), "k": k, "threshold": threshold, "format": format!("{:?}", common.format) });
    let out = OutDir::create(
        common.out_dir.clone(),
        Metadata::new("cluster", &inputs, seed),
    )?;
    let pcfg = profile_config(data[0].endpoint, threshold, seed);
    match k {
        Some(k) => {
            let entry = clustered_at(&data, k, &pcfg)?;
            println!("k = {k}");
            print_membership(&data, &entry.partition);
            write_partition(&out, &data, &entry.partition, common.format)?;
        }
        None => {
            let profile = build_profile_with(&data, &pcfg)?;
            println!("{:>3} {:>8} {:>8}", "k", "OEI", "SOEI");
            for e in &profile.per_k {
                println!(
                    "{:>3} {:>8.4} {:>8.4}",
                    e.k,
                    e.oei,
                    e.soei.unwrap_or(f64::NAN)
                );
            }
            for inv in &profile.inversions {
                eprintln!(
                    "warning: OEI drops to {:.4} at k = {} (previous maximum {:.4})",
                    inv.oei, inv.k, inv.previous_max
                );
            }
            println!("K* = {}", profile.k_star);
            let entry = profile.selected();
            print_membership(&data, &entry.partition);
            write_partition(&out, &data, &entry.partition, common.format)?;
            if common.format == Format::Json {
                out.write_json("profile.json", "profile", &profile)?;
            }
            out.write_with("soei.csv", |w| profile.write_soei_csv(w))?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Region {
    region: String,
    weight: f64,
    ess: f64,
    sources: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Synthesis {
    mode: String,
    k: usize,
    prior: MixturePrior,
    regions: Vec<Region>,
    ess: EssReport,
    reference_variance: Option<f64>,
}

/// Pooled observation variance; the unit-information scale for normal ESS.
fn reference_variance(data: &[DatasetSummary]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for d in data {
        if let Some(sd) = d.sd() {
            let df = d.n_obs.saturating_sub(1) as f64;
            num += df * sd * sd;
            den += df;
        }
    }
    (den > 0.0).then(|| num / den)
}

fn region_table(
    entry: &ProfileEntry,
    data: &[DatasetSummary],
    scale: f64,
    rv: Option<f64>,
) -> CliResult<Vec<Region>> {
    members(data, &entry.partition)
        .iter()
        .zip(entry.cluster_priors.iter().zip(&entry.outer_weights))
        .enumerate()
        .map(|(m, (ds, (p, &ow)))| {
            Ok(Region {
                region: (m + 1).to_string(),
                weight: scale * ow,
                ess: scale * ow * ess(p, rv)?.total,
                sources: ds.iter().map(|d| d.source_id.clone()).collect(),
            })
        })
        .collect()
}

fn params(c: &Component) -> (&'static str, f64, f64) {
    match *c {
        Component::Normal { mean, sd } => ("normal", mean, sd),
        Component::Beta { a, b } => ("beta", a, b),
    }
}

pub fn synthesize(
    path: &Path,
    mode: Mode,
    w: Option<f64>,
    threshold: f64,
    k: Option<usize>,
    seed: u64,
    common: &Common,
) -> CliResult<()> {
    check_threshold(threshold)?;
    if w.is_some() && mode != Mode::Rbcmap {
        return Err(CliError::Usage("--w applies only to --mode rbcmap".into()));
    }
    let w = w.unwrap_or(0.5);
    if !(0.0..=1.0).contains(&w) {
        return Err(CliError::Usage(format!("--w {w} outside [0, 1]")));
    }
    if mode == Mode::Map && k.is_some_and(|k| k != 1) {
        return Err(CliError::Usage("--mode map uses a single cluster".into()));
    }
    let (data, bytes) = load_data(path)?;
    if let Some(k) = k {
        check_k(k, data.len())?;
    }
    let endpoint = data[0].endpoint;
    let mode_name = format!("{mode:?}").to_lowercase();
    let inputs = json!({
        "data_sha256": sha256_hex(&bytes), "mode": mode_name, "w": w, "threshold": threshold, "k": k,
        "format": format!("{:?}", common.format),
    });
    let out = OutDir::create(
        common.out_dir.clone(),
        Metadata::new("synthesize", &inputs, seed),
    )?;
    let pcfg = profile_config(endpoint, threshold, seed);
    let entry = match (mode, k) {
        (Mode::Map, _) => clustered_at(&data, 1, &pcfg)?,
        (_, Some(k)) => clustered_at(&data, k, &pcfg)?,
        (_, None) => {
            let profile = build_profile_with(&data, &pcfg)?;
            println!("K* = {}", profile.k_star);
            profile.selected().clone()
        }
    };
    let rv = match endpoint {
        Endpoint::Binary => None,
        Endpoint::Continuous => reference_variance(&data),
    };
    let (prior, scale) = match mode {
        Mode::Rbcmap => (
            rbcmap(
                &entry.prior,
                &WeaklyInformativeSpec::for_endpoint(endpoint).with_w(w),
            )?,
            1.0 - w,
        ),
        _ => (entry.prior.clone(), 1.0),
    };
    let mut regions = if scale > 0.0 {
        region_table(&entry, &data, scale, rv)?
    } else {
        Vec::new()
    };
    if mode == Mode::Rbcmap && w > 0.0 {
        let vague = WeaklyInformativeSpec::for_endpoint(endpoint).prior();
        regions.push(Region {
            region: "vague".into(),
            weight: w,
            ess: w * ess(&vague, rv)?.total,
            sources: Vec::new(),
        });
    }
    let total = ess(&prior, rv)?;

    println!(
        "{:<10} {:<7} {:>10} {:>10} {:>8} {:>8}",
        "component", "family", "param1", "param2", "weight", "ESS"
    );
    for (i, (c, e)) in prior
        .components()
        .iter()
        .zip(&total.per_component)
        .enumerate()
    {
        let (fam, p1, p2) = params(&c.component);
        println!(
            "{:<10} {:<7} {:>10.3} {:>10.3} {:>8.3} {:>8.2}",
            i + 1,
            fam,
            p1,
            p2,
            c.weight,
            e
        );
    }
    println!();
    println!("{:<8} {:>8} {:>8}  sources", "region", "weight", "ESS");
    for r in &regions {
        let line = format!(
            "{:<8} {:>8.3} {:>8.2}  {}",
            r.region,
            r.weight,
            r.ess,
            r.sources.join(" ")
        );
        println!("{}", line.trim_end());
    }
    println!("total ESS = {:.2}", total.total);

    let artifact = Synthesis {
        mode: mode_name,
        k: entry.k,
        prior,
        regions,
        ess: total,
        reference_variance: rv,
    };
    match common.format {
        Format::Json => out.write_json("prior.json", "synthesis", &artifact)?,
        Format::Csv => out.write_with("prior.csv", |w| {
            use std::io::Write;
            writeln!(w, "component,family,param1,param2,weight,ess")?;
            for (i, (c, e)) in artifact
                .prior
                .components()
                .iter()
                .zip(&artifact.ess.per_component)
                .enumerate()
            {
                let (fam, p1, p2) = params(&c.component);
                writeln!(w, "{},{fam},{p1},{p2},{},{e}", i + 1, c.weight)?;
            }
            Ok(())
        })?,
    };
    Ok(())
}

pub fn simulate(path: &Path, seed: Option<u64>, common: &Common) -> CliResult<()> {
    let (mut cfg, _) = load_config::<ScenarioConfig>(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| config_invalid(path, e))?;
    let inputs = json!({ "config": &cfg, "format": format!("{:?}", common.format) });
    let out = OutDir::create(
        common.out_dir.clone(),
        Metadata::new("simulate", &inputs, cfg.seed),
    )?;

    let external: Vec<DatasetSummary> =
        generate_external(&cfg, bcprior::rng::derive_str(cfg.seed, "external"))?
            .into_iter()
            .map(|g| g.summary)
            .collect();
    eprintln!("[{}] external data: {} sources", cfg.name, external.len());
    let priors = PriorSet::build(&external, &cfg, &Method::BORROWING)?;
    eprintln!(
        "[{}] priors built, clustered prior uses k = {}",
        cfg.name, priors.k
    );
    eprintln!(
        "[{}] running {} replications per setting and size",
        cfg.name, cfg.replications
    );
    let report = estimation_study_with(&cfg, priors)?;

    println!("scenario {} (k = {})", report.scenario, report.priors.k);
    print!("{:<14} {:>5} {:<7} {:>8}", "setting", "n", "method", "RMSE");
    for f in &cfg.trim {
        print!(" {:>9}", format!("trim{:.0}%", f * 100.0));
    }
    println!();
    for r in &report.rows {
        print!(
            "{:<14} {:>5} {:<7} {:>8.4}",
            format!("{:?}", r.setting).to_lowercase(),
            r.n_new,
            r.method.label(),
            r.rmse
        );
        for t in &r.trimmed {
            print!(" {:>9.4}", t.rmse);
        }
        println!();
    }
    match common.format {
        Format::Json => out.write_json("rmse.json", "report", &report)?,
        Format::Csv => out.write_with("rmse.csv", |w| report.write_csv(w))?,
    };
    Ok(())
}

pub fn oc(path: &Path, seed: Option<u64>, common: &Common) -> CliResult<()> {
    let (mut cfg, _) = load_config::<OcConfig>(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate().map_err(|e| config_invalid(path, e))?;
    let inputs = json!({ "config": &cfg, "format": format!("{:?}", common.format) });
    let out = OutDir::create(
        common.out_dir.clone(),
        Metadata::new("oc", &inputs, cfg.seed),
    )?;

    let sc = &cfg.scenario;
    let external: Vec<DatasetSummary> =
        generate_external(sc, bcprior::rng::derive_str(sc.seed, "external"))?
            .into_iter()
            .map(|g| g.summary)
            .collect();
    eprintln!("[oc] external data: {} sources", external.len());
    let priors = PriorSet::build(&external, sc, &cfg.methods)?;
    eprintln!("[oc] priors built, clustered prior uses k = {}", priors.k);
    eprintln!("[oc] running {} replications per arm", cfg.replications);
    let report = oc_study_with(&cfg, priors)?;

    println!(
        "{:<8} {:>7} {:>6} {:>7} {:>7} {:>7}",
        "method", "theta_c", "arms", "eta", "type1", "power"
    );
    for r in &report.rows {
        let eta = r
            .eta
            .map(|e| format!("{e:.3}"))
            .unwrap_or_else(|| "-".into());
        let arms = format!("{}:{}", r.n_control, r.n_treatment);
        println!(
            "{:<8} {:>7} {:>6} {:>7} {:>7.3} {:>7.3}",
            r.method, r.theta_c, arms, eta, r.type1, r.power
        );
    }
    match common.format {
        Format::Json => out.write_json("oc.json", "report", &report)?,
        Format::Csv => out.write_with("oc.csv", |w| report.write_csv(w))?,
    };
    Ok(())
}
