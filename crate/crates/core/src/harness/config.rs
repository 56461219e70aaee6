//! Experiment configuration and its flat `key = value` text form.
//!
//! ```text
//! # comments start with '#'
//! id               = quant16
//! train            = data/train.ftch       # FTCH, relative to this file
//! test             = data/test.ftch
//! codec            = quantize              # identity | quantize | thin | autoencode
//! k                = 16                    # k_quant, k_thin or k_ae
//! stats            = data/pretrain.fsta    # required by quantize
//! ae_weights       = data/ae.faew          # required by autoencode
//! budget           = 4MiB                  # bytes, or with KiB/MiB/GiB; OR
//! slots            = 1000                  # explicit N (exactly one of the two)
//! s_model          = 0
//! classes_per_task = 2
//! seeds            = 0,1,2
//! head             = linear                # or mlp:<hidden>
//! batch_size       = 16
//! lr_max           = 0.05
//! lr_min           = 0.0005
//! sgdr_t0          = 1
//! sgdr_t_mult      = 2
//! cycles           = 5
//! mix_p            = 0.5
//! mix_alpha        = 1.0
//! per_task_eval    = false
//! ```
//!
//! A grid file uses the same keys. Lines before the first `[name]` header
//! are shared defaults; each `[name]` section is one grid cell whose id is
//! `name`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::codec::{AeWeights, CodecConfig, CodecKind, RangeStats};
use crate::error::{Error, Result};
use crate::head::{Architecture, HeadConfig};
use crate::tensor_io::Dataset;

#[derive(Debug, Clone)]
pub enum DataSource {
    File(PathBuf),
    Memory(Arc<Dataset>),
}

#[derive(Debug, Clone)]
pub enum StatsSource {
    File(PathBuf),
    Inline(RangeStats),
}

#[derive(Debug, Clone)]
pub enum WeightsSource {
    File(PathBuf),
    Inline(Arc<AeWeights>),
}

/// How many slots the memory gets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capacity {
    /// Largest N whose total storage fits the budget in bytes.
    Budget(u64),
    Slots(usize),
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: String,
    pub train: DataSource,
    pub test: DataSource,
    pub codec: CodecConfig,
    pub stats: Option<StatsSource>,
    pub ae_weights: Option<WeightsSource>,
    pub capacity: Capacity,
    pub s_model: u64,
    /// Training settings; input size, class count and seed are filled in
    /// per run.
    pub head: HeadConfig,
    pub classes_per_task: usize,
    pub seeds: Vec<u64>,
    pub per_task_eval: bool,
}

impl ExperimentConfig {
    pub fn new(
        id: impl Into<String>,
        train: DataSource,
        test: DataSource,
        capacity: Capacity,
    ) -> Self {
        Self {
            id: id.into(),
            train,
            test,
            codec: CodecConfig::Identity,
            stats: None,
            ae_weights: None,
            capacity,
            s_model: 0,
            head: HeadConfig::new(1, 1),
            classes_per_task: 2,
            seeds: vec![0, 1, 2],
            per_task_eval: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config(format!("{}: seed list is empty", self.id)));
        }
        if self.classes_per_task < 1 {
            return Err(Error::Config(format!(
                "{}: classes_per_task must be >= 1",
                self.id
            )));
        }
        match self.codec.kind() {
            CodecKind::Quantize if self.stats.is_none() => {
                return Err(Error::Config(format!(
                    "{}: quantize needs a stats file",
                    self.id
                )))
            }
            CodecKind::Autoencode if self.ae_weights.is_none() => {
                return Err(Error::Config(format!(
                    "{}: autoencode needs ae_weights",
                    self.id
                )))
            }
            _ => {}
        }
        let mut head = self.head.clone();
        head.input_dim = head.input_dim.max(1);
        head.class_count = head.class_count.max(1);
        head.validate()
    }
}

/// `4194304`, `4MiB`, `4.5 KiB`, `6 MB` (MB is read as MiB).
pub fn parse_bytes(s: &str) -> Result<u64> {
    let t = s.trim();
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "kib" | "kb" | "k" => 1 << 10,
        "mib" | "mb" | "m" => 1 << 20,
        "gib" | "gb" | "g" => 1 << 30,
        other => {
            return Err(Error::Config(format!(
                "unknown size unit `{other}` in `{s}`"
            )))
        }
    };
    if let Ok(v) = num.parse::<u64>() {
        return v
            .checked_mul(scale)
            .ok_or_else(|| Error::Config(format!("size `{s}` overflows")));
    }
    let v: f64 = num
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse size `{s}`")))?;
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("size `{s}` must be non-negative")));
    }
    Ok((v * scale as f64).floor() as u64)
}

type Entries = Vec<(Option<String>, String, String)>;

/// Key-value entries tagged with their section, plus section names in order.
fn parse_kv(text: &str) -> Result<(Entries, Vec<String>)> {
    let mut section = None;
    let mut sections = Vec::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if name.is_empty() {
                return Err(Error::Config(format!("line {}: empty section name", n + 1)));
            }
            if sections.iter().any(|s| s == name) {
                return Err(Error::Config(format!("duplicate grid cell `{name}`")));
            }
            sections.push(name.to_string());
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        out.push((
            section.clone(),
            k.trim().to_ascii_lowercase(),
            v.trim().to_string(),
        ));
    }
    Ok((out, sections))
}

fn build(id: &str, map: &BTreeMap<String, String>, base: &Path) -> Result<ExperimentConfig> {
    let get = |k: &str| map.get(k).map(String::as_str);
    let need = |k: &str| get(k).ok_or_else(|| Error::Config(format!("{id}: missing key `{k}`")));
    let path = |v: &str| {
        let p = PathBuf::from(v);
        if p.is_relative() {
            base.join(p)
        } else {
            p
        }
    };
    fn num<T: std::str::FromStr>(id: &str, k: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Config(format!("{id}: cannot parse `{k} = {v}`")))
    }

    const KNOWN: &[&str] = &[
        "id",
        "train",
        "test",
        "codec",
        "k",
        "stats",
        "ae_weights",
        "budget",
        "slots",
        "s_model",
        "classes_per_task",
        "seeds",
        "head",
        "batch_size",
        "lr_max",
        "lr_min",
        "sgdr_t0",
        "sgdr_t_mult",
        "cycles",
        "mix_p",
        "mix_alpha",
        "per_task_eval",
    ];
    if let Some(k) = map.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(Error::Config(format!("{id}: unknown key `{k}`")));
    }

    let capacity = match (get("budget"), get("slots")) {
        (Some(b), None) => Capacity::Budget(parse_bytes(b)?),
        (None, Some(n)) => Capacity::Slots(num(id, "slots", n)?),
        (Some(_), Some(_)) => {
            return Err(Error::Config(format!(
                "{id}: set exactly one of `budget` and `slots`"
            )))
        }
        (None, None) => return Err(Error::Config(format!("{id}: set `budget` or `slots`"))),
    };
    let mut cfg = ExperimentConfig::new(
        get("id").unwrap_or(id),
        DataSource::File(path(need("train")?)),
        DataSource::File(path(need("test")?)),
        capacity,
    );
    let kind: CodecKind = get("codec").unwrap_or("identity").parse()?;
    cfg.codec = CodecConfig::from_parts(kind, get("k"))?;
    cfg.stats = get("stats").map(|v| StatsSource::File(path(v)));
    cfg.ae_weights = get("ae_weights").map(|v| WeightsSource::File(path(v)));
    if let Some(v) = get("s_model") {
        cfg.s_model = parse_bytes(v)?;
    }
    if let Some(v) = get("classes_per_task") {
        cfg.classes_per_task = num(id, "classes_per_task", v)?;
    }
    if let Some(v) = get("seeds") {
        cfg.seeds = v
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| num(id, "seeds", s))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = get("per_task_eval") {
        cfg.per_task_eval = num(id, "per_task_eval", v)?;
    }
    let h = &mut cfg.head;
    if let Some(v) = get("head") {
        h.architecture = match v.split_once(':') {
            None if v.eq_ignore_ascii_case("linear") => Architecture::Linear,
            Some((a, w)) if a.trim().eq_ignore_ascii_case("mlp") => Architecture::Mlp {
                hidden: num(id, "head", w.trim())?,
            },
            _ => {
                return Err(Error::Config(format!(
                    "{id}: head must be `linear` or `mlp:<width>`"
                )))
            }
        };
    }
    if let Some(v) = get("batch_size") {
        h.batch_size = num(id, "batch_size", v)?;
    }
    if let Some(v) = get("lr_max") {
        h.lr_max = num(id, "lr_max", v)?;
    }
    if let Some(v) = get("lr_min") {
        h.lr_min = num(id, "lr_min", v)?;
    }
    if let Some(v) = get("sgdr_t0") {
        h.sgdr_t0 = num(id, "sgdr_t0", v)?;
    }
    if let Some(v) = get("sgdr_t_mult") {
        h.sgdr_t_mult = num(id, "sgdr_t_mult", v)?;
    }
    if let Some(v) = get("cycles") {
        h.cycles = num(id, "cycles", v)?;
    }
    if let Some(v) = get("mix_p") {
        h.mix_p = num(id, "mix_p", v)?;
    }
    if let Some(v) = get("mix_alpha") {
        h.mix_alpha = num(id, "mix_alpha", v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One experiment from flat text; relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let (entries, sections) = parse_kv(text)?;
    if !sections.is_empty() {
        return Err(Error::Config(
            "single-run configs cannot contain sections".into(),
        ));
    }
    let map = entries.into_iter().map(|(_, k, v)| (k, v)).collect();
    build("run", &map, base)
}

/// Grid of experiments, one per `[section]`.
pub fn parse_grid(text: &str, base: &Path) -> Result<Vec<ExperimentConfig>> {
    let (entries, sections) = parse_kv(text)?;
    if sections.is_empty() {
        return Err(Error::Config("grid has no `[cell]` sections".into()));
    }
    let defaults: BTreeMap<String, String> = entries
        .iter()
        .filter(|(s, _, _)| s.is_none())
        .map(|(_, k, v)| (k.clone(), v.clone()))
        .collect();
    let mut cells: Vec<(String, BTreeMap<String, String>)> = sections
        .into_iter()
        .map(|n| (n, defaults.clone()))
        .collect();
    for (section, k, v) in entries {
        if let Some(name) = section {
            let cell = cells
                .iter_mut()
                .find(|(n, _)| *n == name)
                .expect("section recorded");
            cell.1.insert(k, v);
        }
    }
    cells
        .into_iter()
        .map(|(name, mut map)| {
            map.entry("id".into()).or_insert_with(|| name.clone());
            build(&name, &map, base)
        })
        .collect()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Vec<ExperimentConfig>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_grid(&text, path.parent().unwrap_or(Path::new(".")))
}
