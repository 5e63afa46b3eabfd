use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use schmidt_circuits::dataio::{self, CsvOptions, Dataset, SyntheticSpec, TaskKind};
use schmidt_circuits::hybrid::{self, ExperimentConfig, Mode};
use schmidt_circuits::training::{self, AdamWConfig, FitOptions};
use schmidt_circuits::{ansatz, tensornet, DataVector};

use crate::output::{ensure_dir, num, write_csv, write_json};
use crate::{usage, CountArgs, DataArgs, DecomposeArgs, Failure, FitArgs, GenArgs, TrainArgs};

/// A registered name, or a path when the value names a `.csv` file or
/// contains a path separator.
fn load(args: &DataArgs) -> Result<Dataset, Failure> {
    let data = args.data.as_deref().ok_or_else(|| usage("--data is required"))?;
    let is_path = data.ends_with(".csv") || data.contains(std::path::MAIN_SEPARATOR) || data.contains('/');
    if is_path {
        let opts = CsvOptions {
            label_column: args.label_column.clone().unwrap_or_else(|| dataio::DEFAULT_LABEL_COLUMN.into()),
            n: args.qubits,
            keep_columns: None,
            kind: TaskKind::Classification,
        };
        return Ok(dataio::load_csv_with(Path::new(data), &opts)?);
    }
    if args.qubits.is_some() || args.label_column.is_some() {
        return Err(usage("--qubits and --label-column apply to CSV paths only"));
    }
    Ok(dataio::load_named(data, dataio::data_dir_from_env().as_deref())?)
}

fn data_config(args: &DataArgs, ds: &Dataset) -> Value {
    json!({
        "data": args.data,
        "dataset": ds.name,
        "label_column": args.label_column.as_deref().unwrap_or(dataio::DEFAULT_LABEL_COLUMN),
        "qubits": ds.n,
        "zscore": args.zscore,
    })
}

fn out_dir(out: &Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = out.clone().ok_or_else(|| usage("--out is required"))?;
    ensure_dir(&dir)?;
    Ok(dir)
}

fn merge_objects(mut a: Value, b: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut a, b) {
        a.extend(b);
    }
    a
}

/// `k` from the flag, else the registry, else the mean vector of a 100-row subset.
fn resolve_k(k: Option<usize>, ds: &Dataset, vectors: &[DataVector], gamma: f64, seed: u64) -> Result<usize, Failure> {
    if let Some(k) = k {
        return Ok(k);
    }
    if let Some(k) = dataio::lookup(&ds.name).ok().and_then(|i| i.default_k) {
        return Ok(k);
    }
    Ok(hybrid::select_k(vectors, gamma, 100, seed)?.0)
}

pub fn decompose(args: DecomposeArgs) -> Result<(), Failure> {
    let gamma = args.gamma.unwrap_or(0.3);
    let sample = args.sample.unwrap_or(100);
    let seed = args.seed.unwrap_or(0);
    if !(gamma >= 0.0) || sample == 0 {
        return Err(usage("--gamma must be non-negative and --sample at least 1"));
    }
    let dir = out_dir(&args.out)?;
    let ds = load(&args.data)?;
    let vec = dataio::to_vectors(&ds, args.data.zscore)?;
    let rows = dataio::sample_indices(vec.vectors.len(), sample, seed);
    let subset: Vec<DataVector> = rows.iter().map(|&i| vec.vectors[i].clone()).collect();
    let mean = tensornet::mean_vector(&subset)?;
    let full = tensornet::decompose(&mean)?;
    let trunc = full.truncate(gamma, usize::MAX);

    let config = merge_objects(
        data_config(&args.data, &ds),
        json!({"command": "decompose", "gamma": gamma, "sample": sample, "seed": seed}),
    );
    let export = serde_json::value::RawValue::from_string(trunc.export(&full).to_json()?)
        .map_err(anyhow::Error::from)?;
    let mut text = serde_json::to_string_pretty(&json!({"config": config, "decomposition": export}))
        .map_err(anyhow::Error::from)?;
    text.push('\n');
    std::fs::write(dir.join("decomposition.json"), text).map_err(anyhow::Error::from)?;

    let csv_rows: Vec<Vec<String>> = full
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| vec![i.to_string(), num(t.coeff), num(t.coeff * t.coeff), (i < trunc.k).to_string()])
        .collect();
    write_csv(&dir.join("coefficients.csv"), &config, &["index", "coeff", "probability", "kept"], &csv_rows)?;

    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": config,
            "n": ds.n,
            "rows": rows.len(),
            "terms": full.terms.len(),
            "k": trunc.k,
            "delta_psi": trunc.delta_psi,
        }),
    )?;
    println!("{}: n = {}, terms = {}, k = {}, delta_psi = {}", ds.name, ds.n, full.terms.len(), trunc.k, num(trunc.delta_psi));
    Ok(())
}

pub fn fit_circuit(args: FitArgs) -> Result<(), Failure> {
    let gamma = args.gamma.unwrap_or(0.3);
    let seed = args.seed.unwrap_or(0);
    let sample = if args.single { 1 } else { args.sample.unwrap_or(20) };
    let opts = FitOptions {
        iters: args.iters.unwrap_or(300),
        runs: args.runs.unwrap_or(5),
        seed,
        adamw: AdamWConfig { lr: args.lr.unwrap_or(AdamWConfig::default().lr), ..Default::default() },
    };
    if opts.iters == 0 || opts.runs == 0 || sample == 0 {
        return Err(usage("--iters, --runs and --sample must be at least 1"));
    }
    let dir = out_dir(&args.out)?;
    let ds = load(&args.data)?;
    let vec = dataio::to_vectors(&ds, args.data.zscore)?;
    let k = resolve_k(args.k, &ds, &vec.vectors, gamma, seed)?;
    let spec = ansatz::build_spec(ds.n, k)?;
    let rows = dataio::sample_indices(vec.vectors.len(), sample, seed);
    let chosen: Vec<DataVector> = rows.iter().map(|&i| vec.vectors[i].clone()).collect();
    let batch = training::targets_for(&chosen, k)?;
    let baseline = training::identity_loss(&spec, &batch)?;
    let reports = training::fit_batch(&spec, &batch, &opts)?;
    let mean_best = training::mean_best(&reports);

    let config = merge_objects(
        data_config(&args.data, &ds),
        json!({
            "command": "fit-circuit",
            "k": k,
            "gamma": gamma,
            "single": args.single,
            "sample": sample,
            "runs": opts.runs,
            "iters": opts.iters,
            "seed": seed,
            "adamw": opts.adamw,
        }),
    );
    for r in &reports {
        let best = r.best_curve();
        let csv_rows: Vec<Vec<String>> = r
            .loss_history
            .iter()
            .zip(&best)
            .enumerate()
            .map(|(i, (l, b))| vec![i.to_string(), num(*l), num(*b)])
            .collect();
        write_csv(&dir.join(format!("run_{}.csv", r.run)), &config, &["iter", "loss", "best"], &csv_rows)?;
    }
    write_json(
        &dir.join("summary.json"),
        &json!({
            "config": config,
            "n": spec.n,
            "k": spec.k,
            "ancillas": spec.a,
            "param_count": spec.param_count(),
            "rows": rows,
            "identity_loss": baseline,
            "runs": reports.iter().map(|r| json!({
                "run": r.run,
                "seed": r.seed,
                "best_loss": r.best_loss,
                "final_loss": r.loss_history.last(),
                "best_params": r.best_params,
            })).collect::<Vec<_>>(),
            "mean_best": mean_best,
        }),
    )?;
    println!("{}: k = {k}, identity loss = {}, mean best = {}", ds.name, num(baseline), num(mean_best));
    Ok(())
}

pub fn train(args: TrainArgs, hybrid_mode: bool) -> Result<(), Failure> {
    let mode = match (hybrid_mode, args.mode.as_deref()) {
        (true, None | Some("hybrid")) => Mode::Hybrid,
        (true, Some(other)) => return Err(usage(format!("train-hybrid does not take --mode {other}"))),
        (false, None) => Mode::ClassicalOriginal,
        (false, Some(m)) => match m.parse::<Mode>()? {
            Mode::Hybrid => return Err(usage("use train-hybrid for the hybrid model")),
            classical => classical,
        },
    };
    let defaults = ExperimentConfig::default();
    let dir = out_dir(&args.out)?;
    let ds = load(&args.data)?;
    let cfg = ExperimentConfig {
        dataset: ds.name.clone(),
        mode,
        gamma: args.gamma.unwrap_or(defaults.gamma),
        k: args.k,
        max_samples: args.max_samples.unwrap_or(defaults.max_samples),
        folds: args.folds.unwrap_or(defaults.folds),
        epochs: args.epochs.unwrap_or(defaults.epochs),
        batch_size: args.batch_size.unwrap_or(defaults.batch_size),
        seed: args.seed.unwrap_or(defaults.seed),
        adamw: AdamWConfig { lr: args.lr.unwrap_or(defaults.adamw.lr), ..defaults.adamw },
        zscore: args.data.zscore,
        renormalize_reduced: !args.no_renormalize,
        freeze_quantum: args.freeze_quantum,
    };
    let report = hybrid::run_on(&cfg, &ds)?;

    let mut config = merge_objects(data_config(&args.data, &ds), serde_json::to_value(&cfg).map_err(anyhow::Error::from)?);
    config["command"] = json!(if hybrid_mode { "train-hybrid" } else { "train-classical" });
    config["k"] = json!(report.k);
    for f in &report.per_fold {
        let rows: Vec<Vec<String>> = f
            .train_loss
            .iter()
            .zip(&f.val_accuracy)
            .enumerate()
            .map(|(e, (l, a))| vec![(e + 1).to_string(), num(*l), num(*a)])
            .collect();
        write_csv(&dir.join(format!("fold_{}.csv", f.fold)), &config, &["epoch", "train_loss", "val_accuracy"], &rows)?;
    }
    let mut summary = serde_json::to_value(&report).map_err(anyhow::Error::from)?;
    summary["config"] = config;
    write_json(&dir.join("summary.json"), &summary)?;
    println!(
        "{} {}: accuracy {:.3} ± {:.3} over {} folds (validation split); parameters {} quantum + {} classical = {}",
        ds.name,
        mode.as_str(),
        report.mean_acc,
        report.std_acc,
        report.per_fold.len(),
        report.param_counts.quantum,
        report.param_counts.classical,
        report.param_counts.total
    );
    Ok(())
}

pub fn count_params(args: CountArgs) -> Result<(), Failure> {
    let mode: Mode = args.mode.as_deref().unwrap_or("hybrid").parse()?;
    let names: Vec<String> = match args.data.as_deref() {
        None | Some("all") => dataio::CLASSIFICATION_DATASETS.iter().map(|s| s.to_string()).collect(),
        Some(name) => vec![name.to_string()],
    };
    let mut lines = vec![format!(
        "{:<15} {:<19} {:>6} {:>3} {:>8} {:>10} {:>6}",
        "dataset", "mode", "qubits", "k", "quantum", "classical", "total"
    )];
    let mut notes = Vec::new();
    for name in &names {
        let info = dataio::lookup(name)?;
        let classes = hybrid::known_classes(name).ok_or_else(|| schmidt_circuits::Error::NotClassification(name.clone()))?;
        let k = args.k.or(info.default_k).unwrap_or(1);
        let c = hybrid::count_parameters(mode, info.qubits, k, classes)?;
        lines.push(format!(
            "{:<15} {:<19} {:>6} {:>3} {:>8} {:>10} {:>6}",
            name,
            mode.as_str(),
            info.qubits,
            k,
            c.quantum,
            c.classical,
            c.total
        ));
        if mode != Mode::Hybrid {
            let q = hybrid::count_parameters(Mode::Hybrid, info.qubits, k, classes)?.quantum;
            notes.push(format!(
                "note: {name}: the commonly quoted count for this model is {}, which equals {} classical + {q} circuit parameters",
                c.classical + q,
                c.classical
            ));
        }
    }
    lines.extend(notes);
    println!("{}", lines.join("\n"));
    Ok(())
}

pub fn gen_data(args: GenArgs) -> Result<(), Failure> {
    let base = SyntheticSpec::new(args.n.unwrap_or(5));
    let spec = SyntheticSpec {
        classes: args.classes.unwrap_or(base.classes),
        informative: args.informative.unwrap_or(base.informative),
        separation: args.separation.unwrap_or(base.separation),
        samples: args.samples.unwrap_or(base.samples),
        seed: args.seed.unwrap_or(base.seed),
        ..base
    };
    let out = args.out.clone().ok_or_else(|| usage("--out is required"))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let ds = dataio::make_classification(&spec)?;
    let labels = ds.labels()?;
    let config = json!({"command": "gen-data", "spec": spec});
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push("label");
    let rows: Vec<Vec<String>> = ds
        .features
        .iter()
        .zip(labels)
        .map(|(row, l)| row.iter().map(|x| num(*x)).chain([l.to_string()]).collect())
        .collect();
    write_csv(&out, &config, &header, &rows)?;
    println!("wrote {} rows x {} features to {}", ds.len(), ds.dim(), out.display());
    Ok(())
}
