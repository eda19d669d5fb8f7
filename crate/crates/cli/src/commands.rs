use std::path::{Path, PathBuf};

use calibfair::data::{generate_synthetic, parse_csv, split, write_csv, SyntheticSpec};
use calibfair::metrics::{evaluate_attribute, PerformanceMetric, RELIABILITY_CSV_HEADER};
use calibfair::model::{predict, read_checkpoint};
use calibfair::pipeline::{self, evaluate_model, train_method, TradeoffRow, DEFAULT_SPLIT};
use calibfair::{Dataset, EvalReport, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::output::{self, DataDigest, RunManifest};
use crate::{CliError, CliResult, DataArgs, EvalArgs, GenDataArgs, ModelArgs, SweepArgs, TrainArgs};

/// Spec file layout: the cohort definition plus the seed it was drawn with.
#[derive(Serialize, Deserialize)]
struct SpecFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(flatten)]
    spec: SyntheticSpec,
}

fn spec_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.spec.json"))
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let spec = match (&args.preset, &args.spec) {
        (Some(name), _) => SyntheticSpec::preset(name, args.samples)
            .ok_or_else(|| CliError::Usage(format!("unknown preset {name:?}")))?,
        (None, Some(path)) => {
            let bytes = output::read_input(path)?;
            let file: SpecFile = serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            file.spec
        }
        (None, None) => return Err(CliError::Usage("need --preset or --spec".into())),
    };
    let dataset: Dataset = generate_synthetic(&spec, args.seed)?;
    let mut csv = Vec::new();
    write_csv(&dataset, &mut csv)?;
    output::write_atomic(&args.out, &csv)?;
    output::write_json(
        &spec_path(&args.out),
        &SpecFile {
            seed: Some(args.seed),
            spec,
        },
    )?;
    log::info!("wrote {} rows to {}", dataset.len(), args.out.display());
    Ok(())
}

struct Loaded {
    dataset: Dataset,
    digest: DataDigest,
    attributes: Vec<String>,
}

fn load_data(args: &DataArgs) -> CliResult<Loaded> {
    if args.bins == 0 {
        return Err(CliError::Usage("--bins must be >= 1".into()));
    }
    let bytes = output::read_input(&args.data)?;
    let (dataset, warnings) = parse_csv::<f64, _>(bytes.as_slice(), &args.data)?;
    for w in warnings {
        log::warn!("{w}");
    }
    let attributes = if args.attrs.is_empty() {
        dataset.attributes().iter().map(|a| a.name.clone()).collect()
    } else {
        for a in &args.attrs {
            dataset.require_attribute(a)?;
        }
        args.attrs.clone()
    };
    if attributes.is_empty() {
        return Err(CliError::Usage(format!("{} has no attribute columns", args.data.display())));
    }
    let digest = DataDigest {
        path: args.data.clone(),
        sha256: output::sha256_hex(&bytes),
        rows: dataset.len(),
    };
    Ok(Loaded {
        dataset,
        digest,
        attributes,
    })
}

fn build_config(model: &ModelArgs, method: calibfair::pipeline::Method, seed: u64) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::for_method(method);
    config.gamma = model.gamma;
    config.clusters = model.clusters;
    config.gap_mode = model.gap_mode;
    config.jtt_lambda = model.jtt_lambda;
    config.groupdro_eta = model.groupdro_eta;
    config.groupdro_loss = model.groupdro_loss;
    config.oracle_attribute = model.oracle_attr.clone();
    config.stage1_epochs = model.stage1_epochs;
    config.stage2_epochs = model.stage2_epochs;
    config.batch_size = model.batch_size;
    config.adam.lr = model.lr;
    config.hidden_dims = model.hidden.clone();
    config.seed = seed;
    config.validate()?;
    Ok(config)
}

fn check_oracle(config: &TrainConfig, dataset: &Dataset) -> CliResult<()> {
    if let Some(name) = &config.oracle_attribute {
        dataset.require_attribute(name)?;
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let config = build_config(&args.model, args.method, args.seed)?;
    let loaded = load_data(&args.data)?;
    check_oracle(&config, &loaded.dataset)?;
    let parts = split(&loaded.dataset, DEFAULT_SPLIT, args.data.split_seed, true)?;

    let dir = args.out.join(output::run_dir_name(args.method, args.seed));
    let manifest_config = serde_json::json!({
        "train": config,
        "split_seed": args.data.split_seed,
        "split_fractions": DEFAULT_SPLIT,
        "attributes": loaded.attributes,
        "bins": args.data.bins,
    });
    let manifest = RunManifest::start("train", manifest_config, loaded.digest.clone());
    let mut summary = Vec::new();
    output::with_manifest(&dir, manifest, || {
        let artifacts = train_method(&config, &loaded.dataset, &parts)?;
        let reports = evaluate_model(&artifacts, &loaded.dataset, &parts.test, &loaded.attributes, args.data.bins)?;
        let outputs = output::write_run(&dir, &artifacts, &reports)?;
        summary = output::summary_lines(&reports);
        Ok(outputs)
    })?;
    for line in summary {
        println!("{line}");
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let loaded = load_data(&args.data)?;
    let bytes = output::read_input(&args.checkpoint)?;
    let model = read_checkpoint::<f64, _>(bytes.as_slice(), &args.checkpoint)?;
    if model.layer_dims().first() != Some(&loaded.dataset.num_features()) {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} features, data has {}",
            model.layer_dims()[0],
            loaded.dataset.num_features()
        )));
    }
    let indices: Vec<usize> = match args.subset.as_str() {
        "test" => split(&loaded.dataset, DEFAULT_SPLIT, args.data.split_seed, true)?.test,
        _ => (0..loaded.dataset.len()).collect(),
    };
    let records = predict(&model, &loaded.dataset, &indices)?;
    let metric = PerformanceMetric::for_classes(loaded.dataset.num_classes());
    let reports = loaded
        .attributes
        .iter()
        .map(|a| {
            let attr = loaded.dataset.require_attribute(a)?;
            evaluate_attribute(&records, attr, &indices, metric, args.data.bins)
        })
        .collect::<calibfair::Result<Vec<EvalReport>>>()?;

    if let Some(dir) = &args.out {
        let manifest_config = serde_json::json!({
            "checkpoint": args.checkpoint,
            "checkpoint_sha256": output::sha256_hex(&bytes),
            "subset": args.subset,
            "split_seed": args.data.split_seed,
            "attributes": loaded.attributes,
            "bins": args.data.bins,
        });
        let manifest = RunManifest::start("eval", manifest_config, loaded.digest.clone());
        output::with_manifest(dir, manifest, || output::write_reports(dir, &reports))?;
    }
    for line in output::summary_lines(&reports) {
        println!("{line}");
    }
    Ok(())
}

/// Parses `a..b` / `a..=b` (inclusive) or a comma list of seeds.
pub fn parse_seeds(text: &str) -> CliResult<Vec<u64>> {
    let bad = |why: &str| CliError::Usage(format!("invalid --seeds {text:?}: {why}"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad("expected non-negative integers"));
    let seeds = if let Some((lo, hi)) = text.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(bad("range start exceeds end"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',').map(num).collect::<CliResult<Vec<u64>>>()?
    };
    let mut seen = seeds.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != seeds.len() {
        return Err(bad("duplicate seed"));
    }
    Ok(seeds)
}

/// Thread cap from `CALIBFAIR_THREADS`, if set.
fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var("CALIBFAIR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("CALIBFAIR_THREADS={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

fn tradeoff_csv(table: &calibfair::TradeoffTable) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn sweep(args: &SweepArgs) -> CliResult<()> {
    let seeds = parse_seeds(&args.seeds)?;
    if args.methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    let mut methods = Vec::new();
    for &m in &args.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let threads = thread_cap()?;
    let base = build_config(&args.model, methods[0], 0)?;
    for &m in &methods {
        build_config(&args.model, m, 0)?;
    }
    let loaded = load_data(&args.data)?;
    check_oracle(&base, &loaded.dataset)?;
    let parts = split(&loaded.dataset, DEFAULT_SPLIT, args.data.split_seed, true)?;

    let manifest_config = serde_json::json!({
        "train": base,
        "methods": methods,
        "seeds": seeds,
        "split_seed": args.data.split_seed,
        "split_fractions": DEFAULT_SPLIT,
        "attributes": loaded.attributes,
        "bins": args.data.bins,
    });
    let manifest = RunManifest::start("sweep", manifest_config, loaded.digest.clone());
    let out = &args.out;
    output::with_manifest(out, manifest, || {
        let outcome = pipeline::sweep(
            &base,
            &methods,
            &seeds,
            &loaded.dataset,
            &parts,
            &loaded.attributes,
            args.data.bins,
            threads,
        )?;
        let mut outputs = Vec::new();
        for run in &outcome.runs {
            let name = output::run_dir_name(run.method, run.seed);
            let dir = out.join(&name);
            let config = TrainConfig {
                method: run.method,
                seed: run.seed,
                ..base.clone()
            };
            let run_manifest = RunManifest::start(
                "sweep",
                serde_json::json!({ "train": config, "split_seed": args.data.split_seed }),
                loaded.digest.clone(),
            );
            output::with_manifest(&dir, run_manifest, || output::write_run(&dir, &run.artifacts, &run.reports))?;
            outputs.push(name);
        }
        output::write_atomic(&out.join("tradeoff.csv"), &tradeoff_csv(&outcome.table)?)?;
        output::write_json(&out.join("tradeoff.json"), &outcome.table)?;
        outputs.extend(["tradeoff.csv".to_string(), "tradeoff.json".to_string()]);
        for &method in &methods {
            let mut buf = format!("seed,{RELIABILITY_CSV_HEADER}\n").into_bytes();
            for run in outcome.runs.iter().filter(|r| r.method == method) {
                for report in &run.reports {
                    calibfair::metrics::write_reliability_rows(report, &format!("{},", run.seed), &mut buf)?;
                }
            }
            let name = format!("reliability_{method}.csv");
            output::write_atomic(&out.join(&name), &buf)?;
            outputs.push(name);
        }
        for row in &outcome.table.rows {
            println!("{}", row_summary(row));
        }
        Ok(outputs)
    })
}

fn row_summary(r: &TradeoffRow<f64>) -> String {
    format!(
        "method={} attr={} worstF1={:.4}+-{:.4} worstQECE={:.4}+-{:.4}",
        r.method, r.attribute, r.worst_performance_mean, r.worst_performance_std, r.worst_qece_mean, r.worst_qece_std
    )
}
