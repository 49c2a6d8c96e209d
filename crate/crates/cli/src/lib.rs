//! Command implementations behind the `relattn` binary.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use relattn::corpus::{
    corpus_stats, load_corpus, load_pretrained_vectors, read_vectors, save_corpus, EmbeddingTable, EntityKb,
    Instance, NIL_LABEL,
};
use relattn::depfeat::assemble_local_features;
use relattn::eval::{
    attention_heatmap, ensemble_vote, predict_corpus, robustness_bins, write_bins_tsv, HeatmapFormat,
    MetricsReport, PredictionReport,
};
use relattn::model::{gradient_check, random_tiny_setup, InitOptions, Model, PreparedInstance, Vocabs};
use relattn::numcore::FdReport;
use relattn::train::{train_runs, TrainLog};

pub use config::{parse_config, parse_flags, parse_pairs, Command, RunConfig, KEYS};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

/// What a finished command reports back to `main`.
#[derive(Debug)]
pub enum Status {
    Ok,
    /// The command ran but its check failed (exit code 1).
    CheckFailed(String),
}

pub fn run(cfg: &RunConfig) -> Result<Status> {
    eprint!("{}", cfg.render());
    if let Some(out) = &cfg.paths.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_text(out.join("config.txt"), &cfg.render())?;
    }
    match cfg.command {
        Command::Prepare => prepare(cfg),
        Command::Train => train(cfg),
        Command::Eval => eval(cfg),
        Command::Predict => predict(cfg),
        Command::Analyze => analyze(cfg),
        Command::Gradcheck => gradcheck(cfg),
    }
}

fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| anyhow!("missing required path `{key}`"))
}

fn load(cfg: &RunConfig, p: &Option<PathBuf>, key: &str) -> Result<Vec<Instance>> {
    let path = required(p, key)?;
    load_corpus(path, cfg.format).with_context(|| format!("loading {key} corpus"))
}

fn load_kb(cfg: &RunConfig, dim: usize, needed: bool) -> Result<Option<EntityKb>> {
    match &cfg.paths.kb {
        Some(p) => Ok(Some(
            EntityKb::load(p, cfg.paths.type_map.as_deref(), dim).context("loading entity vectors")?,
        )),
        None if needed => bail!("features include wiki but no `kb` path was given"),
        None => Ok(None),
    }
}

fn prepare_all(model: &Model, data: &[Instance], kb: Option<&EntityKb>) -> Result<Vec<PreparedInstance>> {
    data.iter()
        .map(|i| model.prepare(i, kb).map_err(Into::into))
        .collect()
}

fn prepare(cfg: &RunConfig) -> Result<Status> {
    let out = cfg.out_dir()?;
    let mut stats = BTreeMap::new();
    for (key, p) in [("train", &cfg.paths.train), ("dev", &cfg.paths.dev), ("test", &cfg.paths.test)] {
        if p.is_none() {
            continue;
        }
        let data = load(cfg, p, key)?;
        save_corpus(out.join(format!("{key}.jsonl")), &data)?;
        let s = corpus_stats(&data);
        println!(
            "{key}: {} instances, {} relations, {:.1}% nil, average length {:.2}",
            s.count, s.num_relations, s.nil_percent, s.avg_length
        );
        stats.insert(key, s);
    }
    write_json(out.join("stats.json"), &stats)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct RunSummary {
    seed: u64,
    best_epoch: usize,
    dev_f1: f64,
}

#[derive(Serialize)]
struct TrainSummary {
    runs: Vec<RunSummary>,
    median_run: usize,
    dev: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble_dev: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble_test: Option<MetricsReport>,
}

fn save_run(dir: &Path, model: &Model, log: &TrainLog) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    model.save(dir.join("model.json"))?;
    log.save(dir.join("train_log.jsonl"))?;
    Ok(())
}

fn report_metrics(name: &str, m: &MetricsReport) {
    println!(
        "{name}: P {:.4} R {:.4} F1 {:.4} (tp {} fp {} fn {})",
        m.precision, m.recall, m.f1, m.tp, m.fp, m.fn_
    );
}

fn train(cfg: &RunConfig) -> Result<Status> {
    let out = cfg.out_dir()?;
    let train = load(cfg, &cfg.paths.train, "train")?;
    let dev = load(cfg, &cfg.paths.dev, "dev")?;
    let test = match &cfg.paths.test {
        Some(_) => Some(load(cfg, &cfg.paths.test, "test")?),
        None => None,
    };
    let mut hp = cfg.hp.clone();
    let features = cfg.train.features;
    let kb = load_kb(cfg, hp.wiki_dim, features.wiki)?;
    let vocabs = Vocabs::build(&train, cfg.min_freq);
    let word_vectors = match &cfg.paths.vectors {
        Some(p) => Some(load_pretrained_vectors(p, &vocabs.words, hp.word_dim, cfg.train.seed)?),
        None => None,
    };
    let extra_vectors: Option<EmbeddingTable> = match &cfg.paths.extra_vectors {
        Some(p) => {
            let (dim, _) = read_vectors(p, None)?;
            hp.extra_word_dim = dim;
            Some(load_pretrained_vectors(p, &vocabs.words, dim, cfg.train.seed)?)
        }
        None => None,
    };
    let build = |seed: u64| {
        Model::new(
            hp.clone(),
            cfg.train.variant,
            features,
            vocabs.clone(),
            InitOptions {
                seed,
                word_vectors: word_vectors.clone(),
                extra_vectors: extra_vectors.clone(),
            },
        )
    };
    let template = build(cfg.train.seed)?;
    let train_p = prepare_all(&template, &train, kb.as_ref())?;
    let dev_p = prepare_all(&template, &dev, kb.as_ref())?;
    drop(template);

    let multi = train_runs(build, &train_p, &dev_p, &cfg.train, cfg.runs)?;
    let mut dev_reports = Vec::new();
    let mut test_reports = Vec::new();
    let mut runs = Vec::new();
    for (k, ((model, log), &seed)) in multi.runs.iter().zip(&multi.seeds).enumerate() {
        let dir = if cfg.runs == 1 { out.to_path_buf() } else { out.join(format!("run{k}")) };
        save_run(&dir, model, log)?;
        let dev_r = predict_corpus(model, &dev, kb.as_ref())?;
        dev_r.save_json(dir.join("dev_predictions.json"))?;
        write_json(dir.join("dev_metrics.json"), &dev_r.metrics(NIL_LABEL)?)?;
        if let Some(test) = &test {
            let r = predict_corpus(model, test, kb.as_ref())?;
            r.save_json(dir.join("test_predictions.json"))?;
            write_json(dir.join("test_metrics.json"), &r.metrics(NIL_LABEL)?)?;
            test_reports.push(r);
        }
        let best = log.best().map_or(0, |r| r.epoch);
        eprintln!("run {k} (seed {seed}): best dev F1 {:.4} at epoch {best}", log.best_dev_f1());
        runs.push(RunSummary {
            seed,
            best_epoch: best,
            dev_f1: log.best_dev_f1(),
        });
        dev_reports.push(dev_r);
    }
    let m = multi.median;
    let dev_m = dev_reports[m].metrics(NIL_LABEL)?;
    report_metrics(&format!("median run {m} dev"), &dev_m);
    let mut summary = TrainSummary {
        runs,
        median_run: m,
        dev: dev_m,
        ensemble_dev: None,
        test: None,
        ensemble_test: None,
    };
    if let Some(r) = test_reports.get(m) {
        let t = r.metrics(NIL_LABEL)?;
        report_metrics(&format!("median run {m} test"), &t);
        summary.test = Some(t);
    }
    if cfg.runs > 1 {
        multi.median_run().0.save(out.join("model.json"))?;
        let ens = ensemble_vote(&dev_reports)?;
        ens.save_json(out.join("ensemble_dev_predictions.json"))?;
        let e = ens.metrics(NIL_LABEL)?;
        report_metrics("ensemble dev", &e);
        summary.ensemble_dev = Some(e);
        if !test_reports.is_empty() {
            let ens = ensemble_vote(&test_reports)?;
            ens.save_json(out.join("ensemble_test_predictions.json"))?;
            let e = ens.metrics(NIL_LABEL)?;
            report_metrics("ensemble test", &e);
            summary.ensemble_test = Some(e);
        }
    }
    write_json(out.join("summary.json"), &summary)?;
    Ok(Status::Ok)
}

/// Predictions of one checkpoint, or the vote of several.
fn checkpoint_report(cfg: &RunConfig, data: &[Instance]) -> Result<PredictionReport> {
    let mut reports = Vec::new();
    for path in &cfg.paths.checkpoint {
        let model = Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        let kb = load_kb(cfg, model.arch.hp.wiki_dim, model.arch.features.wiki)?;
        let r = predict_corpus(&model, data, kb.as_ref())
            .with_context(|| format!("checkpoint {} does not fit this corpus", path.display()))?;
        reports.push(r);
    }
    match reports.len() {
        0 => bail!("missing required path `checkpoint`"),
        1 => Ok(reports.pop().expect("one report")),
        _ => Ok(ensemble_vote(&reports)?),
    }
}

fn eval(cfg: &RunConfig) -> Result<Status> {
    let out = cfg.out_dir()?;
    let data = load(cfg, &cfg.paths.test, "test")?;
    let report = checkpoint_report(cfg, &data)?;
    report.save_json(out.join("predictions.json"))?;
    let m = report.metrics(NIL_LABEL)?;
    write_json(out.join("metrics.json"), &m)?;
    report_metrics("test", &m);
    Ok(Status::Ok)
}

fn predict(cfg: &RunConfig) -> Result<Status> {
    let out = cfg.out_dir()?;
    let data = load(cfg, &cfg.paths.test, "test")?;
    let report = checkpoint_report(cfg, &data)?;
    report.save_json(out.join("predictions.json"))?;
    for p in &report.predictions {
        println!("{}\t{}", p.id, p.predicted);
    }
    Ok(Status::Ok)
}

fn file_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn analyze(cfg: &RunConfig) -> Result<Status> {
    let out = cfg.out_dir()?;
    let data = load(cfg, &cfg.paths.test, "test")?;
    let pred_path = required(&cfg.paths.predictions, "predictions")?;
    let text = fs::read_to_string(pred_path).with_context(|| format!("reading {}", pred_path.display()))?;
    let report: PredictionReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", pred_path.display()))?;

    let by_id: HashMap<&str, &Instance> = data.iter().map(|i| (i.id.as_str(), i)).collect();
    let instances = report
        .predictions
        .iter()
        .map(|p| {
            by_id
                .get(p.id.as_str())
                .map(|&i| i.clone())
                .ok_or_else(|| anyhow!("prediction for {} has no instance in the test corpus", p.id))
        })
        .collect::<Result<Vec<_>>>()?;
    let size = cfg.bin_size.unwrap_or_else(|| cfg.axis.default_bin_size());
    let bins = robustness_bins(&instances, &report.predicted(), &report.golds(), cfg.axis, size, NIL_LABEL)?;
    let bins_path = out.join(format!("bins_{}.tsv", cfg.axis));
    let f = File::create(&bins_path).with_context(|| format!("creating {}", bins_path.display()))?;
    write_bins_tsv(&bins, BufWriter::new(f))?;
    println!("{} bins written to {}", bins.len(), bins_path.display());

    let ids: Vec<String> = if cfg.ids.is_empty() {
        report.predictions.iter().take(10).map(|p| p.id.clone()).collect()
    } else {
        cfg.ids.clone()
    };
    let local_dir = out.join("local_features");
    fs::create_dir_all(&local_dir)?;
    for id in &ids {
        let inst = by_id.get(id.as_str()).ok_or_else(|| anyhow!("unknown instance id {id}"))?;
        let feats = assemble_local_features(&inst.tree()?, inst.subj, inst.obj, cfg.hp.dist_mode)?;
        let path = local_dir.join(format!("{}.tsv", file_name(id)));
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        feats.write_tsv(&inst.forms(), BufWriter::new(f))?;
    }
    let ext = match cfg.heatmap_format {
        HeatmapFormat::Csv => "csv",
        HeatmapFormat::Html => "html",
    };
    attention_heatmap(&report, &instances, &ids, out.join(format!("heatmap.{ext}")), cfg.heatmap_format)?;
    Ok(Status::Ok)
}

pub fn gradcheck_report(cfg: &RunConfig) -> Result<FdReport> {
    let variant = cfg.train.variant;
    let (mut model, prep) = random_tiny_setup(cfg.train.seed, variant)?;
    Ok(gradient_check(
        &mut model,
        &prep,
        variant,
        cfg.train.features,
        cfg.train.dropout,
        cfg.eps,
        cfg.train.seed,
    )?)
}

fn gradcheck(cfg: &RunConfig) -> Result<Status> {
    let r = gradcheck_report(cfg)?;
    let at = r.worst.as_ref().map(|(n, i)| format!(" at {n}[{i}]")).unwrap_or_default();
    println!("max relative error {:.3e}{at} over {} scalars", r.max_rel_error, r.checked);
    if let Some(out) = &cfg.paths.out {
        write_text(
            out.join("gradcheck.txt"),
            &format!("max_rel_error = {:e}\nchecked = {}\n", r.max_rel_error, r.checked),
        )?;
    }
    if r.max_rel_error < GRADCHECK_TOL {
        Ok(Status::Ok)
    } else {
        Ok(Status::CheckFailed(format!(
            "max relative error {:.3e} exceeds {GRADCHECK_TOL:e}",
            r.max_rel_error
        )))
    }
}
