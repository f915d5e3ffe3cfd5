//! TOML run configuration.
//!
//! Every key is optional; missing keys take the library defaults. The
//! top-level `seed` overrides the seeds of the dataset, training and
//! explainer sections.

use anyhow::{anyhow, bail, Context, Result};
use gnnx_core::explainer::ExplainConfig;
use gnnx_core::gcn::{Optimizer, TrainConfig};
use gnnx_core::motif::EnumerationLimits;
use gnnx_core::synth::{BaShapesParams, TreeCyclesParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    BaShapes,
    TreeCycles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GtMode {
    /// Planted motifs as generated.
    Annotated,
    /// Motif search over the named sub-motifs.
    Named,
    /// Motif search over enumerated connected edge sets.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaShapesSection {
    pub base_nodes: usize,
    pub num_motifs: usize,
    pub ba_attachment: usize,
    pub noise_fraction: f64,
    pub feature_dim: usize,
    pub attach_bottom_only: bool,
}

impl Default for BaShapesSection {
    fn default() -> Self {
        let p = BaShapesParams::default();
        BaShapesSection {
            base_nodes: p.base_nodes,
            num_motifs: p.num_motifs,
            ba_attachment: p.ba_attachment,
            noise_fraction: p.noise_fraction,
            feature_dim: p.feature_dim,
            attach_bottom_only: p.attach_bottom_only,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeCyclesSection {
    pub tree_levels: usize,
    pub num_motifs: usize,
    pub cycle_size: usize,
    pub noise_fraction: f64,
    pub feature_dim: usize,
}

impl Default for TreeCyclesSection {
    fn default() -> Self {
        let p = TreeCyclesParams::default();
        TreeCyclesSection {
            tree_levels: p.tree_levels,
            num_motifs: p.num_motifs,
            cycle_size: p.cycle_size,
            noise_fraction: p.noise_fraction,
            feature_dim: p.feature_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub train_fraction: f64,
    pub optimizer: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        let c = TrainConfig::default();
        TrainSection {
            hidden_dim: c.hidden_dim,
            num_layers: c.num_layers,
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            train_fraction: c.train_fraction,
            optimizer: c.optimizer.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub size_coeff: f64,
    pub entropy_coeff: f64,
    pub init_logit: f64,
    pub init_noise: f64,
    pub optimizer: String,
}

impl Default for ExplainSection {
    fn default() -> Self {
        let c = ExplainConfig::default();
        ExplainSection {
            epochs: c.epochs,
            learning_rate: c.learning_rate,
            size_coeff: c.size_coeff,
            entropy_coeff: c.entropy_coeff,
            init_logit: c.init_logit,
            init_noise: c.init_noise,
            optimizer: c.optimizer.as_str().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Thresholds reported in the recall table and flip-rate section.
    pub thresholds: Vec<usize>,
    /// Threshold at which precision and recall enter the per-class metric
    /// table.
    pub table_threshold: usize,
    pub grid: Vec<usize>,
    pub gamma: f64,
    pub gt_mode: GtMode,
    pub max_edges: usize,
    pub cap: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let limits = EnumerationLimits::default();
        EvalSection {
            thresholds: vec![6, 20],
            table_threshold: 6,
            grid: vec![4, 6, 8, 12, 20],
            gamma: 0.25,
            gt_mode: GtMode::Annotated,
            max_edges: limits.max_edges,
            cap: limits.cap,
        }
    }
}

impl EvalSection {
    pub fn limits(&self) -> EnumerationLimits {
        EnumerationLimits {
            max_edges: self.max_edges,
            cap: self.cap,
            allow_truncation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: Dataset,
    pub ba_shapes: BaShapesSection,
    pub tree_cycles: TreeCyclesSection,
    pub train: TrainSection,
    pub explain: ExplainSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: Dataset::BaShapes,
            ba_shapes: BaShapesSection::default(),
            tree_cycles: TreeCyclesSection::default(),
            train: TrainSection::default(),
            explain: ExplainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn optimizer(name: &str) -> Result<Optimizer> {
    Optimizer::parse(name).ok_or_else(|| anyhow!("unknown optimizer {name:?} (expected gd or adam)"))
}

impl RunConfig {
    /// Parses TOML text, then applies `key.path=value` overrides (values in
    /// TOML syntax, bare words taken as strings).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).context("parsing config")?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("override {item:?} is not KEY=VALUE"))?;
            let value = parse_value(raw.trim());
            set_path(&mut table, key.trim(), value)?;
        }
        let config: RunConfig = toml::Value::Table(table).try_into().context("invalid config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => crate::io::read(p)?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.ba_shapes().validate()?;
        self.tree_cycles().validate()?;
        self.train_config()?.validate()?;
        self.explain_config()?.validate()?;
        if self.eval.grid.is_empty() {
            bail!("eval.grid must not be empty");
        }
        if !(self.eval.gamma >= 0.0 && self.eval.gamma.is_finite()) {
            bail!("eval.gamma must be finite and >= 0");
        }
        Ok(())
    }

    pub fn ba_shapes(&self) -> BaShapesParams {
        let s = &self.ba_shapes;
        BaShapesParams {
            base_nodes: s.base_nodes,
            num_motifs: s.num_motifs,
            ba_attachment: s.ba_attachment,
            noise_fraction: s.noise_fraction,
            feature_dim: s.feature_dim,
            attach_bottom_only: s.attach_bottom_only,
            seed: self.seed,
        }
    }

    pub fn tree_cycles(&self) -> TreeCyclesParams {
        let s = &self.tree_cycles;
        TreeCyclesParams {
            tree_levels: s.tree_levels,
            num_motifs: s.num_motifs,
            cycle_size: s.cycle_size,
            noise_fraction: s.noise_fraction,
            feature_dim: s.feature_dim,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let s = &self.train;
        Ok(TrainConfig {
            hidden_dim: s.hidden_dim,
            num_layers: s.num_layers,
            epochs: s.epochs,
            learning_rate: s.learning_rate,
            weight_decay: s.weight_decay,
            train_fraction: s.train_fraction,
            optimizer: optimizer(&s.optimizer)?,
            seed: self.seed,
        })
    }

    pub fn explain_config(&self) -> Result<ExplainConfig> {
        let s = &self.explain;
        Ok(ExplainConfig {
            epochs: s.epochs,
            learning_rate: s.learning_rate,
            size_coeff: s.size_coeff,
            entropy_coeff: s.entropy_coeff,
            init_logit: s.init_logit,
            init_noise: s.init_noise,
            optimizer: optimizer(&s.optimizer)?,
            seed: self.seed,
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty override key"))?;
    let mut cur = table;
    for part in parts {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {part:?} is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
