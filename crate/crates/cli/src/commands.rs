use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use graphssl_core::encoder::Checkpoint;
use graphssl_core::eval::{evaluate, EvalReport};
use graphssl_core::trainer::{pretrain, write_loss_history};
use graphssl_core::tudataset::{fetch_dataset, load_tudataset, TuSourceConfig};
use graphssl_core::{Dataset, Error};
use rayon::prelude::*;

use crate::ablate::{Axis, Grid};
use crate::config::Settings;
use crate::record::{append_records, read_records, RunRecord};
use crate::svg::{emit_svg_linechart, Labels, Series};
use crate::{AblateArgs, Command, EvalArgs, FetchArgs, PretrainArgs, ReportArgs};

/// A command line that parsed but cannot be acted on.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub(crate) fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Fetch(a) => fetch(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn fetch(args: FetchArgs) -> anyhow::Result<()> {
    let mut cfg = TuSourceConfig::new(&args.data_dir, &args.dataset);
    if let Some(url) = args.url {
        cfg = cfg.with_base_url(url);
    }
    let dir = fetch_dataset(&cfg)?;
    let ds = load_tudataset(&cfg)?;
    println!(
        "{}: {} graphs, {} classes, {} features in {}",
        ds.name(),
        ds.len(),
        ds.num_classes(),
        ds.feature_dim(),
        dir.display()
    );
    Ok(())
}

fn load_dataset(s: &Settings) -> anyhow::Result<Dataset> {
    let cfg = TuSourceConfig::new(&s.data_dir, &s.dataset);
    load_tudataset(&cfg).map_err(|e| match e {
        Error::MissingFile(path) => anyhow!(
            "dataset {} not found ({} is missing); run `graphssl fetch --dataset {} --data-dir {}` first",
            s.dataset,
            path.display(),
            s.dataset,
            s.data_dir.display()
        ),
        other => other.into(),
    })
}

fn pretrain_cmd(args: PretrainArgs) -> anyhow::Result<()> {
    let s = args.run.settings()?;
    let cfg = s.train_config().map_err(|e| usage(e.to_string()))?;
    let ds = load_dataset(&s)?;
    let result = pretrain(&ds, &cfg)?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}-seed{}", s.dataset, s.loss.name(), s.seed)));
    let final_loss = *result.loss_history.last().expect("at least one epoch");
    let mut ckpt = Checkpoint::new(result.params);
    for (k, v) in s.pairs() {
        ckpt.meta.insert(k.to_owned(), v);
    }
    ckpt.meta.insert("final_loss".into(), final_loss.to_string());
    ckpt.meta.insert("runtime_s".into(), result.wall_time.as_secs_f64().to_string());
    let ckpt_path = out.join("checkpoint.txt");
    let loss_path = out.join("loss_history.csv");
    ckpt.save(&ckpt_path)?;
    write_loss_history(&loss_path, &result.loss_history)?;
    println!(
        "{} {} seed {}: loss {} -> {} in {:.1}s",
        s.dataset,
        s.loss.name(),
        s.seed,
        result.loss_history[0],
        final_loss,
        result.wall_time.as_secs_f64()
    );
    println!("wrote {} and {}", ckpt_path.display(), loss_path.display());
    Ok(())
}

const EVAL_KEYS: [&str; 7] = ["dataset", "data-dir", "folds", "repeats", "probe-epochs", "probe-lr", "l2"];

fn record(s: &Settings, report: &EvalReport, final_loss: f64, runtime_s: f64) -> RunRecord {
    RunRecord {
        dataset: s.dataset.clone(),
        loss: s.loss.name().to_owned(),
        aug_a: s.aug_a.name().to_owned(),
        aug_b: s.aug_b.name().to_owned(),
        ratio: s.ratio,
        batch_size: s.batch_size,
        projector_dim: s.projector_dim,
        lambda: s.lambda,
        mu: s.mu,
        nu: s.nu,
        p: s.p,
        seed: s.seed,
        accuracy_mean: report.accuracy_mean,
        accuracy_std: report.accuracy_std,
        final_loss,
        runtime_s,
    }
}

fn print_record(r: &RunRecord) {
    println!(
        "{} {} {}+{}@{} batch {} proj {} lambda {} mu {} p {} seed {}: accuracy {:.4} ± {:.4}, final loss {:.4}",
        r.dataset,
        r.loss,
        r.aug_a,
        r.aug_b,
        r.ratio,
        r.batch_size,
        r.projector_dim,
        r.lambda,
        r.mu,
        r.p,
        r.seed,
        r.accuracy_mean,
        r.accuracy_std,
        r.final_loss
    );
}

fn eval_cmd(args: EvalArgs) -> anyhow::Result<()> {
    let start = Instant::now();
    if let Some((k, _)) = args.run.overrides().into_iter().find(|(k, _)| !EVAL_KEYS.contains(k)) {
        return Err(usage(format!(
            "--{k} only affects pre-training; eval reads it from the checkpoint"
        )));
    }
    let user = args.run.settings()?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let mut s = Settings::default();
    for (k, v) in &ckpt.meta {
        if crate::config::KEYS.contains(&k.as_str()) {
            s.set(k, v).with_context(|| format!("checkpoint {}", args.checkpoint.display()))?;
        }
    }
    if args.run.dataset.is_some() {
        s.dataset = user.dataset.clone();
    }
    s.data_dir = user.data_dir.clone();
    s.folds = user.folds;
    s.repeats = user.repeats;
    s.probe_epochs = user.probe_epochs;
    s.probe_lr = user.probe_lr;
    s.l2 = user.l2;
    let meta_f64 = |key: &str| -> anyhow::Result<f64> {
        ckpt.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| anyhow!("checkpoint {} lacks {key}", args.checkpoint.display()))
    };
    let final_loss = meta_f64("final_loss")?;
    let train_time = meta_f64("runtime_s")?;
    let probe = s.probe_config().map_err(|e| usage(e.to_string()))?;
    let ds = load_dataset(&s)?;
    let report = evaluate(&ckpt.params, &ds, &probe)?;
    let r = record(&s, &report, final_loss, train_time + start.elapsed().as_secs_f64());
    append_records(&args.records, std::slice::from_ref(&r))?;
    print_record(&r);
    println!("appended to {}", args.records.display());
    Ok(())
}

/// Pre-trains and evaluates one configuration.
pub fn run_cell(s: &Settings, ds: &Dataset) -> anyhow::Result<RunRecord> {
    let start = Instant::now();
    let cfg = s.train_config()?;
    let probe = s.probe_config()?;
    let result = pretrain(ds, &cfg)?;
    let report = evaluate(&result.params, ds, &probe)?;
    let final_loss = *result.loss_history.last().expect("at least one epoch");
    Ok(record(s, &report, final_loss, start.elapsed().as_secs_f64()))
}

fn ablate_cmd(args: AblateArgs) -> anyhow::Result<()> {
    let base = args.run.settings()?;
    let grid = Grid::parse(&args.axes, &args.values)?;
    let cells = grid.cells(&base)?;
    for c in &cells {
        c.train_config().and_then(|_| c.probe_config()).map_err(|e| usage(e.to_string()))?;
    }
    let ds = load_dataset(&base)?;
    println!("{} cells on {}", cells.len(), base.dataset);
    let results: Vec<anyhow::Result<RunRecord>> = cells.par_iter().map(|c| run_cell(c, &ds)).collect();
    let records = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    records.iter().for_each(print_record);
    append_records(&args.out, &records)?;
    println!("appended {} rows to {}", records.len(), args.out.display());
    Ok(())
}

fn metric_column(metric: &str) -> anyhow::Result<(&'static str, &'static str)> {
    match metric.replace('_', "-").as_str() {
        "accuracy" | "accuracy-mean" => Ok(("accuracy_mean", "linear evaluation accuracy")),
        "final-loss" | "loss" => Ok(("final_loss", "final training loss")),
        other => Err(usage(format!("unknown metric '{other}'; use accuracy or final-loss"))),
    }
}

/// Mean metric per x value, one series per dataset and loss.
pub fn series_for_axis(records: &[RunRecord], x_column: &str, y_column: &str) -> Vec<Series> {
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for r in records {
        let (Some(x), Some(y)) = (r.numeric(x_column), r.numeric(y_column)) else {
            continue;
        };
        let key = format!("{} {}", r.dataset, r.loss);
        // Order-preserving key for non-negative and negative floats alike.
        let bits = if x >= 0.0 { x.to_bits() ^ (1 << 63) } else { !x.to_bits() };
        let slot = groups.entry(key).or_default().entry(bits).or_insert((x, 0.0, 0));
        slot.1 += y;
        slot.2 += 1;
    }
    groups
        .into_iter()
        .map(|(name, points)| Series {
            name,
            points: points.into_values().map(|(x, sum, n)| (x, sum / n as f64)).collect(),
        })
        .collect()
}

fn read_history(path: &Path) -> anyhow::Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut points = Vec::new();
    for row in reader.deserialize() {
        let (epoch, loss): (f64, f64) = row.with_context(|| format!("parsing {}", path.display()))?;
        points.push((epoch, loss));
    }
    if points.is_empty() {
        bail!("{} has no epochs", path.display());
    }
    Ok(points)
}

fn history_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("history");
    match path.parent().and_then(|p| p.file_name()).and_then(|s| s.to_str()) {
        Some(dir) if stem == "loss_history" => dir.to_owned(),
        _ => stem.to_owned(),
    }
}

fn report_cmd(args: ReportArgs) -> anyhow::Result<()> {
    if args.input.is_none() && args.histories.is_empty() {
        return Err(usage("report needs --in with --axis, or --history"));
    }
    if args.input.is_some() != !args.axes.is_empty() {
        return Err(usage("--in and --axis must be given together"));
    }
    let charts = args.axes.len() + usize::from(!args.histories.is_empty());
    let target = |default_name: String, default_dir: &Path| -> PathBuf {
        match &args.out {
            Some(out) if charts == 1 => out.clone(),
            Some(dir) => dir.join(default_name),
            None => default_dir.join(default_name),
        }
    };
    if let Some(input) = &args.input {
        let (y_column, y_label) = metric_column(&args.metric)?;
        let records = read_records(input)?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("runs").to_owned();
        let dir = input.parent().map(Path::to_path_buf).unwrap_or_default();
        for axis_name in &args.axes {
            let axis: Axis = axis_name.parse()?;
            let x_column = axis
                .column()
                .ok_or_else(|| usage(format!("axis {axis} is not numeric and cannot be plotted")))?;
            let series = series_for_axis(&records, x_column, y_column);
            if series.is_empty() {
                bail!("{} has no rows to plot", input.display());
            }
            let path = target(format!("{stem}-{axis}.svg"), &dir);
            let labels = Labels { title: &format!("{y_label} vs {axis}"), x: axis.name(), y: y_label };
            emit_svg_linechart(&series, &labels, &path)?;
            println!("wrote {}", path.display());
        }
    }
    if !args.histories.is_empty() {
        let mut series = Vec::new();
        for path in &args.histories {
            let points = read_history(path)?;
            let first = points[0].1;
            series.push(Series {
                name: history_name(path),
                points: points.into_iter().map(|(e, l)| (e, l / first)).collect(),
            });
        }
        let path = target("loss_curves.svg".into(), Path::new(""));
        let labels = Labels { title: "normalised training loss", x: "epoch", y: "loss / first-epoch loss" };
        emit_svg_linechart(&series, &labels, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
