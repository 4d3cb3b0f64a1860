use std::path::{Path, PathBuf};

use eids::baselines::{knn_fit, knn_predict, logistic_predict, logistic_train, BaselinePrediction};
use eids::chisel::{
    apply_mask, chi2_scores, numeric_only, ranked, score_report_csv, score_report_text, select_top_k,
    SelectionMask,
};
use eids::data::{
    fit_encoder, load_csv, load_frame, save_frame, transform, AttackClass, EncoderState, FeatureFrame,
    LabelView, Split,
};
use eids::idsmodel::{
    build_model, encoder_digest, load_checkpoint, predict, save_checkpoint, train, Axis, Head,
    ModelCheckpoint, TrainingMetadata,
};
use eids::metrics::{confusion, emit_report, fmt_secs, EvalReport, ReportFormat};
use serde::{Deserialize, Serialize};

use crate::config::{set, Effective, RunConfig};
use crate::error::{CliError, Result};
use crate::{
    AxisArg, BaselineArg, BenchArgs, Cli, Command, EvalArgs, FormatArg, IngestArgs, PredictArgs,
    SelectArgs, TaskArg, TrainArgs,
};

const MODEL_NAME: &str = "CNN-BiLSTM";

impl From<TaskArg> for LabelView {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Binary => LabelView::Binary,
            TaskArg::Multi => LabelView::Multi,
        }
    }
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::Features => Axis::Features,
            AxisArg::Channels => Axis::Channels,
        }
    }
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Text => ReportFormat::Text,
        }
    }
}

/// Stable file names under the output directory.
struct Layout {
    out: PathBuf,
}

impl Layout {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
    fn train_cache(&self) -> PathBuf {
        self.path("train.eids")
    }
    fn test_cache(&self) -> PathBuf {
        self.path("test.eids")
    }
    fn encoder(&self) -> PathBuf {
        self.path("encoder.json")
    }
    fn mask(&self) -> PathBuf {
        self.path("mask.json")
    }
    fn model(&self) -> PathBuf {
        self.path("model.eidm")
    }
    fn train_summary(&self) -> PathBuf {
        self.path("train_summary.json")
    }
}

/// Side facts of a training run that do not belong in the checkpoint.
#[derive(Debug, Serialize, Deserialize)]
struct TrainSummary {
    train_time_s: f64,
    param_count: usize,
    epochs_run: usize,
    final_loss: Option<f64>,
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    log::info!("writing {}", path.display());
    std::fs::write(path, body).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn load_mask(path: &Path) -> Result<SelectionMask> {
    Ok(SelectionMask::from_json(&read_text(path)?)?)
}

fn load_encoder(path: &Path) -> Result<EncoderState> {
    EncoderState::from_json(&read_text(path)?)
        .map_err(|e| CliError::Contract(format!("{}: {e}", path.display())))
}

fn class_names(view: LabelView) -> Vec<String> {
    match view {
        LabelView::Binary => vec!["Normal".into(), "Attack".into()],
        LabelView::Multi => AttackClass::names(),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.out, cli.out);
    set(&mut cfg.seed, cli.seed);
    match cli.command {
        Command::Ingest(a) => ingest(cfg, a),
        Command::Select(a) => select(cfg, a),
        Command::Train(a) => train_cmd(cfg, a),
        Command::Eval(a) => eval(cfg, a),
        Command::Predict(a) => predict_cmd(cfg, a),
        Command::Bench(a) => bench(cfg, a),
    }
}

fn print_histogram(frame: &FeatureFrame) {
    let h = frame.class_histogram();
    for c in AttackClass::ALL {
        println!("  {:>2} {:<15} {:>8}", c.id() + 1, c.name(), h[c.id() as usize]);
    }
}

fn ingest(mut cfg: RunConfig, a: IngestArgs) -> Result<()> {
    set(&mut cfg.data.train, a.train);
    set(&mut cfg.data.test, a.test);
    let eff = cfg.resolve(20)?;
    let train_path = eff.data.train.clone().ok_or_else(|| {
        CliError::Config("no training CSV: pass --train or set EIDS_DATA_DIR".into())
    })?;
    let test_path = eff
        .data
        .test
        .clone()
        .ok_or_else(|| CliError::Config("no test CSV: pass --test or set EIDS_DATA_DIR".into()))?;
    let layout = Layout { out: eff.out.clone() };

    let train_recs = load_csv(&train_path, Split::Train)?;
    let test_recs = load_csv(&test_path, Split::Test)?;
    let enc = fit_encoder(&train_recs)?;
    let train_frame = transform(&train_recs, &enc, Split::Train)?;
    let test_frame = transform(&test_recs, &enc, Split::Test)?;

    ensure_dir(&layout.out)?;
    save_frame(&train_frame, &layout.train_cache())?;
    save_frame(&test_frame, &layout.test_cache())?;
    write(&layout.encoder(), enc.to_json())?;

    for (name, f) in [("train", &train_frame), ("test", &test_frame)] {
        println!("{name}: {} rows, {} features", f.n_rows(), f.n_features());
        print_histogram(f);
    }
    println!("wrote {}", layout.out.display());
    Ok(())
}

fn select(mut cfg: RunConfig, a: SelectArgs) -> Result<()> {
    set(&mut cfg.select.k, a.k);
    set(&mut cfg.select.label_view, a.label_view.map(Into::into));
    if a.numeric_only {
        cfg.select.numeric_only = Some(true);
    }
    let eff = cfg.resolve(20)?;
    let layout = Layout { out: eff.out.clone() };
    let frame = load_frame(&layout.train_cache())?;
    let mut scores = chi2_scores(&frame, eff.select.label_view)?;
    if eff.select.numeric_only {
        scores = numeric_only(scores);
    }
    let mask = select_top_k(&scores, eff.select.k)?;
    write(&layout.path("scores.csv"), score_report_csv(&scores))?;
    write(&layout.path("scores.txt"), score_report_text(&scores))?;
    write(&layout.mask(), mask.to_json())?;
    println!(
        "chi-square against {} labels, {} features scored",
        eff.select.label_view,
        scores.len()
    );
    for (rank, s) in ranked(&scores).iter().take(mask.k()).enumerate() {
        println!("  {:>2} {:<20} {:.2e}", rank + 1, s.feature, s.score);
    }
    println!("kept {} features → {}", mask.k(), layout.mask().display());
    Ok(())
}

fn train_cmd(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    set(&mut cfg.train.task, a.task.map(Into::into));
    set(&mut cfg.train.lr, a.lr);
    set(&mut cfg.train.epochs, a.epochs);
    set(&mut cfg.train.batch_size, a.batch_size);
    set(&mut cfg.train.class_weights, a.class_weights);
    set(&mut cfg.train.validation_fraction, a.validation_fraction);
    set(&mut cfg.model.axis, a.axis.map(Into::into));
    set(&mut cfg.model.conv_filters, a.conv_filters);
    set(&mut cfg.model.conv_kernel, a.conv_kernel);
    set(&mut cfg.model.lstm_hidden, a.lstm_hidden);
    set(&mut cfg.model.dense_units, a.dense_units);
    set(&mut cfg.model.dropout, a.dropout);

    let out = cfg.out.clone().unwrap_or_else(|| crate::config::DEFAULT_OUT.into());
    let layout = Layout { out };
    let mask = load_mask(&layout.mask())?;
    let eff = cfg.resolve(mask.k())?;
    log::debug!("effective config: {}", eff.to_json());
    let frame = apply_mask(&load_frame(&layout.train_cache())?, &mask)?;
    let digest = match layout.encoder().exists() {
        true => Some(encoder_digest(&load_encoder(&layout.encoder())?)),
        false => None,
    };

    let mut model = build_model(&eff.architecture, eff.seed)?;
    println!(
        "training {} model ({} parameters) on {} rows: lr {} epochs {} batch {} class weights {}",
        eff.train.task,
        model.param_count(),
        frame.n_rows(),
        eff.train.lr,
        eff.train.epochs,
        eff.train.batch_size,
        eff.train.use_class_weights
    );
    let outcome = train(&mut model, &frame, &eff.train)?;
    let summary = TrainSummary {
        train_time_s: outcome.train_time_s,
        param_count: model.param_count(),
        epochs_run: outcome.trace.len(),
        final_loss: outcome.final_loss(),
    };
    let ckpt = ModelCheckpoint {
        model,
        mask,
        encoder_digest: digest,
        metadata: TrainingMetadata {
            seed: eff.seed,
            epochs_run: outcome.trace.len(),
            final_loss: outcome.final_loss(),
            train_config: Some(eff.train.clone()),
        },
    };
    save_checkpoint(&ckpt, &layout.model())?;
    write(&layout.path("trace.csv"), outcome.trace_csv())?;
    write(
        &layout.train_summary(),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    if let Some(loss) = outcome.final_loss() {
        println!("final loss {loss:.5}");
    }
    println!("train time {} s", fmt_secs(outcome.train_time_s));
    println!("wrote {}", layout.model().display());
    Ok(())
}

fn report_formats(eff: &Effective, flag: Option<Vec<FormatArg>>) -> Vec<ReportFormat> {
    flag.map(|f| f.into_iter().map(Into::into).collect())
        .unwrap_or_else(|| eff.report_formats.clone())
}

fn write_reports(report: &EvalReport, formats: &[ReportFormat], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for &f in formats {
        match f {
            ReportFormat::Json => emit_report(report, f, &dir.join("report.json"))?,
            ReportFormat::Csv => {
                write(&dir.join("report.csv"), report.metrics_csv())?;
                emit_report(report, f, &dir.join("confusion.csv"))?;
            }
            ReportFormat::Text => emit_report(report, f, &dir.join("report.txt"))?,
        }
    }
    Ok(())
}

/// Fails when the checkpoint was trained on frames built by a different
/// encoder than the one in the output directory.
fn check_encoder(layout: &Layout, ckpt: &ModelCheckpoint) -> Result<()> {
    if let (Some(want), true) = (&ckpt.encoder_digest, layout.encoder().exists()) {
        let have = encoder_digest(&load_encoder(&layout.encoder())?);
        if &have != want {
            return Err(CliError::Contract(format!(
                "{} does not match the encoder the checkpoint was trained with",
                layout.encoder().display()
            )));
        }
    }
    Ok(())
}

fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    set(&mut cfg.train.task, a.task.map(Into::into));
    set(&mut cfg.baseline.knn_k, a.knn_k);
    let out = cfg.out.clone().unwrap_or_else(|| crate::config::DEFAULT_OUT.into());
    let layout = Layout { out };
    match a.baseline {
        Some(b) => eval_baseline(cfg, &layout, b, a.all_features, a.format),
        None => eval_checkpoint(cfg, &layout, a.checkpoint, a.format),
    }
}

fn eval_checkpoint(
    mut cfg: RunConfig,
    layout: &Layout,
    checkpoint: Option<PathBuf>,
    format: Option<Vec<FormatArg>>,
) -> Result<()> {
    let ckpt = load_checkpoint(&checkpoint.unwrap_or_else(|| layout.model()))?;
    let head = ckpt.model.head();
    if let Some(task) = cfg.train.task {
        ckpt.model.expect_task(task)?;
    }
    cfg.train.task = Some(head.task());
    check_encoder(layout, &ckpt)?;
    let eff = cfg.resolve(ckpt.mask.k())?;
    let test = apply_mask(&load_frame(&layout.test_cache())?, &ckpt.mask)?;
    let pred = predict(&ckpt.model, &test)?;
    let view = head.task();
    let cm = confusion(test.labels(view), &pred.labels(), view.n_classes())?.with_names(class_names(view));
    let train_time = std::fs::read_to_string(layout.train_summary())
        .ok()
        .and_then(|s| serde_json::from_str::<TrainSummary>(&s).ok())
        .map(|s| s.train_time_s);
    let config = serde_json::json!({
        "run": eff.to_json(),
        "checkpoint": {
            "architecture": ckpt.model.spec(),
            "parameters": ckpt.model.param_count(),
            "mask": ckpt.mask.names,
            "encoder_digest": ckpt.encoder_digest,
            "metadata": ckpt.metadata,
        },
    });
    let report = EvalReport::new(&view.to_string(), MODEL_NAME, cm, train_time, pred.seconds, config)?;
    write_reports(&report, &report_formats(&eff, format), &layout.out)?;
    print!("{}", report.render_text());
    Ok(())
}

fn eval_baseline(
    cfg: RunConfig,
    layout: &Layout,
    which: BaselineArg,
    all_features: bool,
    format: Option<Vec<FormatArg>>,
) -> Result<()> {
    let train_full = load_frame(&layout.train_cache())?;
    let test_full = load_frame(&layout.test_cache())?;
    let mask = if all_features {
        SelectionMask::identity(&train_full)
    } else {
        load_mask(&layout.mask())?
    };
    let eff = cfg.resolve(mask.k())?;
    let train_f = apply_mask(&train_full, &mask)?;
    let test_f = apply_mask(&test_full, &mask)?;
    let view = eff.train.task;
    let start = std::time::Instant::now();
    let (name, dir, pred, train_time): (&str, &str, BaselinePrediction, f64) = match which {
        BaselineArg::Logistic => {
            let m = logistic_train(&train_f, &eff.baseline.logistic)?;
            let t = start.elapsed().as_secs_f64();
            ("Logistic Regression", "logistic", logistic_predict(&m, &test_f)?, t)
        }
        BaselineArg::Knn => {
            let m = knn_fit(&train_f, view, eff.baseline.knn_k)?;
            let t = start.elapsed().as_secs_f64();
            ("KNN", "knn", knn_predict(&m, &test_f)?, t)
        }
    };
    let cm = confusion(test_f.labels(view), &pred.labels, view.n_classes())?.with_names(class_names(view));
    let config = serde_json::json!({
        "run": eff.to_json(),
        "baseline": dir,
        "features": mask.names,
    });
    let report = EvalReport::new(&view.to_string(), name, cm, Some(train_time), pred.seconds, config)?;
    write_reports(&report, &report_formats(&eff, format), &layout.out.join(dir))?;
    print!("{}", report.render_text());
    Ok(())
}

fn predict_cmd(cfg: RunConfig, a: PredictArgs) -> Result<()> {
    let out = cfg.out.clone().unwrap_or_else(|| crate::config::DEFAULT_OUT.into());
    let layout = Layout { out };
    let ckpt = load_checkpoint(&a.checkpoint.unwrap_or_else(|| layout.model()))?;
    let frame = match a.csv {
        Some(csv) => {
            let enc = load_encoder(&layout.encoder())?;
            check_encoder(&layout, &ckpt)?;
            transform(&load_csv(&csv, Split::Test)?, &enc, Split::Test)?
        }
        None => load_frame(&a.input.unwrap_or_else(|| layout.test_cache()))?,
    };
    let frame = apply_mask(&frame, &ckpt.mask)?;
    let pred = predict(&ckpt.model, &frame)?;
    let labels = pred.labels();
    let head = ckpt.model.head();
    let names = class_names(head.task());
    let mut body = match head {
        Head::Binary => String::from("row,predicted,label,p_attack\n"),
        Head::Multi => format!(
            "row,predicted,label,{}\n",
            names.iter().map(|n| format!("p_{n}")).collect::<Vec<_>>().join(",")
        ),
    };
    for (i, &l) in labels.iter().enumerate() {
        let probs: Vec<String> = pred.probs.row(i).iter().map(|p| p.to_string()).collect();
        body.push_str(&format!("{i},{l},{},{}\n", names[l as usize], probs.join(",")));
    }
    let output = a.output.unwrap_or_else(|| layout.path("predictions.csv"));
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write(&output, body)?;
    println!(
        "{} rows predicted in {} s → {}",
        labels.len(),
        fmt_secs(pred.seconds),
        output.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct BenchStats {
    repeat: usize,
    rows: usize,
    seconds: Vec<f64>,
    min_s: f64,
    median_s: f64,
    mean_s: f64,
}

fn bench(cfg: RunConfig, a: BenchArgs) -> Result<()> {
    if a.repeat == 0 {
        return Err(CliError::Config("--repeat must be at least 1".into()));
    }
    let out = cfg.out.clone().unwrap_or_else(|| crate::config::DEFAULT_OUT.into());
    let layout = Layout { out };
    let ckpt = load_checkpoint(&a.checkpoint.unwrap_or_else(|| layout.model()))?;
    let frame = apply_mask(&load_frame(&layout.test_cache())?, &ckpt.mask)?;
    let mut seconds = Vec::with_capacity(a.repeat);
    for _ in 0..a.repeat {
        seconds.push(predict(&ckpt.model, &frame)?.seconds);
    }
    let mut sorted = seconds.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    };
    let stats = BenchStats {
        repeat: a.repeat,
        rows: frame.n_rows(),
        min_s: sorted[0],
        median_s: median,
        mean_s: seconds.iter().sum::<f64>() / seconds.len() as f64,
        seconds,
    };
    ensure_dir(&layout.out)?;
    write(
        &layout.path("bench.json"),
        serde_json::to_string_pretty(&stats).expect("stats serialize"),
    )?;
    println!(
        "{} passes over {} rows: min {} s, median {} s, mean {} s",
        stats.repeat,
        stats.rows,
        fmt_secs(stats.min_s),
        fmt_secs(stats.median_s),
        fmt_secs(stats.mean_s)
    );
    Ok(())
}
