use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

use relattn::corpus::CorpusFormat;
use relattn::depfeat::DistanceMode;
use relattn::eval::{Axis, HeatmapFormat};
use relattn::model::HyperParams;
use relattn::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Prepare,
    Train,
    Eval,
    Predict,
    Analyze,
    Gradcheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Predict => "predict",
            Command::Analyze => "analyze",
            Command::Gradcheck => "gradcheck",
        }
    }

    fn required(self) -> &'static [&'static str] {
        match self {
            Command::Prepare => &["train", "out"],
            Command::Train => &["train", "dev", "out"],
            Command::Eval | Command::Predict => &["checkpoint", "test", "out"],
            Command::Analyze => &["predictions", "test", "out"],
            Command::Gradcheck => &[],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub extra_vectors: Option<PathBuf>,
    pub kb: Option<PathBuf>,
    pub type_map: Option<PathBuf>,
    pub checkpoint: Vec<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub paths: Paths,
    pub format: CorpusFormat,
    pub hp: HyperParams,
    pub train: TrainConfig,
    pub runs: usize,
    pub min_freq: usize,
    pub axis: Axis,
    /// Defaults to the axis' own bin size.
    pub bin_size: Option<usize>,
    /// Instances shown by `analyze`; empty means the first ten predictions.
    pub ids: Vec<String>,
    pub heatmap_format: HeatmapFormat,
    pub eps: f64,
}

/// Every accepted key, in the order the resolved config is written.
pub const KEYS: &[&str] = &[
    "train",
    "dev",
    "test",
    "vectors",
    "extra_vectors",
    "kb",
    "type_map",
    "checkpoint",
    "predictions",
    "out",
    "format",
    "word_dim",
    "pos_dim",
    "ner_dim",
    "position_dim",
    "hidden",
    "layers",
    "attention_hidden",
    "heads",
    "distance_dim",
    "sdp_hidden",
    "type_dim",
    "wiki_dim",
    "key_dim",
    "max_pos",
    "max_dist",
    "dist_mode",
    "batch_size",
    "lr0",
    "decay",
    "clip",
    "dropout",
    "word_dropout",
    "max_epochs",
    "patience",
    "seed",
    "variant",
    "features",
    "runs",
    "min_freq",
    "axis",
    "bin_size",
    "ids",
    "heatmap_format",
    "eps",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("bad value {value:?} for key `{key}`: {e}"))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn show(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn defaults(command: Command) -> Self {
        RunConfig {
            command,
            paths: Paths::default(),
            format: CorpusFormat::Pairified,
            hp: HyperParams::default(),
            train: TrainConfig::default(),
            runs: 1,
            min_freq: 1,
            axis: Axis::SentLen,
            bin_size: None,
            ids: Vec::new(),
            heatmap_format: HeatmapFormat::Csv,
            eps: 1e-4,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let hp = &mut self.hp;
        let t = &mut self.train;
        match key {
            "train" => self.paths.train = path(v),
            "dev" => self.paths.dev = path(v),
            "test" => self.paths.test = path(v),
            "vectors" => self.paths.vectors = path(v),
            "extra_vectors" => self.paths.extra_vectors = path(v),
            "kb" => self.paths.kb = path(v),
            "type_map" => self.paths.type_map = path(v),
            "checkpoint" => self.paths.checkpoint = list(v).into_iter().map(PathBuf::from).collect(),
            "predictions" => self.paths.predictions = path(v),
            "out" => self.paths.out = path(v),
            "format" => self.format = v.parse()?,
            "word_dim" => hp.word_dim = num(key, v)?,
            "pos_dim" => hp.pos_dim = num(key, v)?,
            "ner_dim" => hp.ner_dim = num(key, v)?,
            "position_dim" => hp.position_dim = num(key, v)?,
            "hidden" => hp.hidden = num(key, v)?,
            "layers" => hp.layers = num(key, v)?,
            "attention_hidden" => hp.attention_hidden = num(key, v)?,
            "heads" => hp.heads = num(key, v)?,
            "distance_dim" => hp.distance_dim = num(key, v)?,
            "sdp_hidden" => hp.sdp_hidden = num(key, v)?,
            "type_dim" => hp.type_dim = num(key, v)?,
            "wiki_dim" => hp.wiki_dim = num(key, v)?,
            "key_dim" => hp.key_dim = if v.is_empty() || v == "auto" { None } else { Some(num(key, v)?) },
            "max_pos" => hp.max_pos = num(key, v)?,
            "max_dist" => hp.max_dist = num(key, v)?,
            "dist_mode" => {
                hp.dist_mode = match v {
                    "span" => DistanceMode::Span,
                    "head" => DistanceMode::Head,
                    _ => bail!("bad value {v:?} for key `dist_mode` (expected span or head)"),
                }
            }
            "batch_size" => t.batch_size = num(key, v)?,
            "lr0" => t.lr0 = num(key, v)?,
            "decay" => t.decay = num(key, v)?,
            "clip" => t.clip = num(key, v)?,
            "dropout" => t.dropout = num(key, v)?,
            "word_dropout" => t.word_dropout = num(key, v)?,
            "max_epochs" => t.max_epochs = num(key, v)?,
            "patience" => t.patience = num(key, v)?,
            "seed" => t.seed = num(key, v)?,
            "variant" => t.variant = v.parse()?,
            "features" => t.features = v.parse()?,
            "runs" => self.runs = num(key, v)?,
            "min_freq" => self.min_freq = num(key, v)?,
            "axis" => self.axis = v.parse()?,
            "bin_size" => self.bin_size = if v.is_empty() { None } else { Some(num(key, v)?) },
            "ids" => self.ids = list(v),
            "heatmap_format" => self.heatmap_format = v.parse()?,
            "eps" => self.eps = num(key, v)?,
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    /// The value of `key` in the form `set` accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let p = &self.paths;
        let hp = &self.hp;
        let t = &self.train;
        Ok(match key {
            "train" => show(&p.train),
            "dev" => show(&p.dev),
            "test" => show(&p.test),
            "vectors" => show(&p.vectors),
            "extra_vectors" => show(&p.extra_vectors),
            "kb" => show(&p.kb),
            "type_map" => show(&p.type_map),
            "checkpoint" => p
                .checkpoint
                .iter()
                .map(|c| c.display().to_string())
                .collect::<Vec<_>>()
                .join(","),
            "predictions" => show(&p.predictions),
            "out" => show(&p.out),
            "format" => match self.format {
                CorpusFormat::Pairified => "pairified",
                CorpusFormat::AllPairsSentence => "all-pairs-sentence",
            }
            .into(),
            "word_dim" => hp.word_dim.to_string(),
            "pos_dim" => hp.pos_dim.to_string(),
            "ner_dim" => hp.ner_dim.to_string(),
            "position_dim" => hp.position_dim.to_string(),
            "hidden" => hp.hidden.to_string(),
            "layers" => hp.layers.to_string(),
            "attention_hidden" => hp.attention_hidden.to_string(),
            "heads" => hp.heads.to_string(),
            "distance_dim" => hp.distance_dim.to_string(),
            "sdp_hidden" => hp.sdp_hidden.to_string(),
            "type_dim" => hp.type_dim.to_string(),
            "wiki_dim" => hp.wiki_dim.to_string(),
            "key_dim" => hp.key_dim.map_or("auto".into(), |k| k.to_string()),
            "max_pos" => hp.max_pos.to_string(),
            "max_dist" => hp.max_dist.to_string(),
            "dist_mode" => match hp.dist_mode {
                DistanceMode::Span => "span",
                DistanceMode::Head => "head",
            }
            .into(),
            "batch_size" => t.batch_size.to_string(),
            "lr0" => t.lr0.to_string(),
            "decay" => t.decay.to_string(),
            "clip" => t.clip.to_string(),
            "dropout" => t.dropout.to_string(),
            "word_dropout" => t.word_dropout.to_string(),
            "max_epochs" => t.max_epochs.to_string(),
            "patience" => t.patience.to_string(),
            "seed" => t.seed.to_string(),
            "variant" => t.variant.to_string(),
            "features" => t.features.to_string(),
            "runs" => self.runs.to_string(),
            "min_freq" => self.min_freq.to_string(),
            "axis" => self.axis.to_string(),
            "bin_size" => self.bin_size.map(|b| b.to_string()).unwrap_or_default(),
            "ids" => self.ids.join(","),
            "heatmap_format" => match self.heatmap_format {
                HeatmapFormat::Csv => "csv",
                HeatmapFormat::Html => "html",
            }
            .into(),
            "eps" => self.eps.to_string(),
            _ => bail!("unknown key `{key}`"),
        })
    }

    /// `key = value` lines for every key, readable by `parse_config`.
    pub fn render(&self) -> String {
        let mut s = format!("# resolved configuration for `{}`\n", self.command.name());
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("listed key"));
        }
        s
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.paths
            .out
            .as_deref()
            .ok_or_else(|| anyhow!("missing required path `out` for command {}", self.command.name()))
    }

    pub fn validate(&self) -> Result<()> {
        for &key in self.command.required() {
            if self.get(key)?.is_empty() {
                bail!("missing required path `{key}` for command {}", self.command.name());
            }
        }
        if self.runs == 0 {
            bail!("runs must be at least 1");
        }
        if !(self.eps > 0.0) {
            bail!("eps must be positive, got {}", self.eps);
        }
        self.hp.validate()?;
        self.train.validate()?;
        Ok(())
    }
}

/// Splits `key = value` text; `#` starts a comment line.
pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key = value", origin.display(), i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// `--key value` and `--key=value` pairs.
pub fn parse_flags(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let flag = a
            .strip_prefix("--")
            .ok_or_else(|| anyhow!("expected --key value, got {a:?}"))?;
        let (k, v) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| anyhow!("flag --{flag} needs a value"))?;
                (flag.to_string(), v.clone())
            }
        };
        out.push((k.replace('-', "_"), v));
    }
    Ok(out)
}

/// Built-in defaults, then the file, then the flags.
pub fn parse_config(command: Command, file: Option<&Path>, flags: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(file) = file {
        let text = std::fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
        for (k, v) in parse_pairs(&text, file)? {
            cfg.set(&k, &v).with_context(|| format!("in {}", file.display()))?;
        }
    }
    for (k, v) in flags {
        cfg.set(k, v).context("in command-line flags")?;
    }
    cfg.validate()?;
    Ok(cfg)
}
