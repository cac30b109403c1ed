use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aligner::{EmConfig, NoiseScope};
use crate::corpus::SynthConfig;
use crate::distill::TagMode;
use crate::error::{Error, Problems, Result};
use crate::fsio;
use crate::optim::TrainConfig;
use crate::seed;

/// Every knob of a run. Per-stage seeds are not read from the file: they are
/// derived from `seed` and the stage name when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    /// Name of the system trained and evaluated by `train` / `eval`.
    pub system: Option<String>,
    pub synth: SynthConfig,
    /// External corpus; when set, `gen` imports it instead of synthesizing one.
    pub corpus: Option<CorpusPaths>,
    pub aligner: EmConfig,
    pub noise: NoiseConfig,
    pub teacher: TeacherConfig,
    pub distill: DistillConfig,
    pub prior: PriorConfig,
    pub nat: TrainConfig,
    pub metrics: MetricsConfig,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            out: PathBuf::from("runs/default"),
            system: None,
            synth: SynthConfig::default(),
            corpus: None,
            aligner: EmConfig::default(),
            noise: NoiseConfig::default(),
            teacher: TeacherConfig::default(),
            distill: DistillConfig::default(),
            prior: PriorConfig::default(),
            nat: TrainConfig::default(),
            metrics: MetricsConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub train_src: PathBuf,
    pub train_tgt: PathBuf,
    pub test_src: PathBuf,
    pub test_tgt: PathBuf,
}

/// Alignment-distribution noise applied to the lexicon behind the WAD prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub ratio: f64,
    pub scope: NoiseScope,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherKind {
    /// Autoregressive toy teacher trained on the raw corpus.
    #[default]
    Trained,
    /// Ground-truth word-for-word teacher with controlled Low-bucket errors.
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub low_freq_error_rate: f64,
    pub train: TrainConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig { kind: TeacherKind::Trained, low_freq_error_rate: 0.3, train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Raw,
    #[default]
    Kd,
    Mix,
    TaggedMix,
    Curriculum,
}

impl Strategy {
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Raw => "raw",
            Strategy::Kd => "kd",
            Strategy::Mix => "mix",
            Strategy::TaggedMix => "tagged-mix",
            Strategy::Curriculum => "curriculum",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub strategy: Strategy,
    /// Which sentences of a tagged mix carry their tag token.
    pub tag: TagMode,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig { strategy: Strategy::Kd, tag: TagMode::Distilled }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorChoice {
    #[default]
    None,
    Wad,
    Sdd,
    Both,
}

impl PriorChoice {
    pub fn uses_wad(self) -> bool {
        matches!(self, PriorChoice::Wad | PriorChoice::Both)
    }

    pub fn uses_sdd(self) -> bool {
        matches!(self, PriorChoice::Sdd | PriorChoice::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub kind: PriorChoice,
    pub tau: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { kind: PriorChoice::None, tau: 2.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Count AoLC per test occurrence instead of per source type.
    pub occurrence_weighted: bool,
    /// Explicit `[cutoff_low, cutoff_high]`; percentile defaults otherwise.
    pub cutoffs: Option<[u64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub noise_ratios: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { noise_ratios: vec![0.0, 0.02, 0.05] }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_value(text.parse::<toml::Table>().map_err(|e| Error::invalid(e.to_string()))?)
    }

    pub fn from_value(table: toml::Table) -> Result<Self> {
        table.try_into().map_err(|e: toml::de::Error| Error::invalid(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact("config", path.to_path_buf()));
        }
        Self::from_toml(&fsio::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Copy with every stage seed derived from the global seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.synth.seed = seed::derive(self.seed, "synth");
        c.teacher.train.seed = seed::derive(self.seed, "teacher");
        c.nat.seed = seed::derive(self.seed, "nat");
        c
    }

    pub fn stage_seed(&self, name: &str) -> u64 {
        seed::derive(self.seed, name)
    }

    /// Default name of the configured system, e.g. `nat-kd+both`.
    pub fn system_name(&self) -> String {
        if let Some(name) = &self.system {
            return name.clone();
        }
        let mut name = format!("nat-{}", self.distill.strategy.label());
        match self.prior.kind {
            PriorChoice::None => {}
            PriorChoice::Wad => name.push_str("+wad"),
            PriorChoice::Sdd => name.push_str("+sdd"),
            PriorChoice::Both => name.push_str("+both"),
        }
        if self.prior.kind.uses_wad() && self.noise.ratio > 0.0 {
            name.push_str(&format!("+noise{}", self.noise.ratio));
        }
        name
    }

    pub fn validate(&self) -> Result<()> {
        let mut p = Problems::new();
        if self.corpus.is_none() {
            p.extend("synth", self.synth.validate());
        }
        p.extend("aligner", self.aligner.validate());
        p.extend("teacher.train", self.teacher.train.validate());
        p.extend("nat", self.nat.validate());
        p.check((0.0..=1.0).contains(&self.noise.ratio), || "noise.ratio must lie in [0, 1]".into());
        p.check((0.0..=1.0).contains(&self.teacher.low_freq_error_rate), || {
            "teacher.low_freq_error_rate must lie in [0, 1]".into()
        });
        p.check(self.prior.tau > 0.0 && self.prior.tau.is_finite(), || "prior.tau must be positive".into());
        p.check(self.teacher.kind != TeacherKind::Oracle || self.corpus.is_none(), || {
            "the oracle teacher needs the synthetic ground truth; unset [corpus]".into()
        });
        p.check(self.distill.strategy != Strategy::Curriculum || self.prior.kind == PriorChoice::None, || {
            "priors cannot be combined with the curriculum strategy".into()
        });
        p.check(self.experiment.noise_ratios.iter().all(|r| (0.0..=1.0).contains(r)), || {
            "experiment.noise_ratios must lie in [0, 1]".into()
        });
        if let Some([lo, hi]) = self.metrics.cutoffs {
            p.check(lo <= hi, || "metrics.cutoffs must be non-decreasing".into());
        }
        if let Some(name) = &self.system {
            p.check(!name.is_empty() && !name.contains(['/', '\\']), || "system name must be a plain file name".into());
        }
        p.into_result()
    }
}

/// Applies a dotted `key=value` override to a parsed config table. Values are
/// read as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| Error::invalid(format!("override {spec:?} lacks '='")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for part in parents {
        let entry = cur.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| Error::invalid(format!("override {key:?}: {part} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_overrides() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        let mut t: toml::Table = "seed = 3\n[nat]\nsteps = 10\n".parse().unwrap();
        apply_override(&mut t, "nat.lr=0.25").unwrap();
        apply_override(&mut t, "prior.kind=both").unwrap();
        apply_override(&mut t, "out=runs/x").unwrap();
        let c = PipelineConfig::from_value(t).unwrap();
        assert_eq!((c.seed, c.nat.steps, c.nat.lr), (3, 10, 0.25));
        assert_eq!(c.prior.kind, PriorChoice::Both);
        assert_eq!(c.out, PathBuf::from("runs/x"));
        assert_eq!(c.system_name(), "nat-kd+both");
    }

    #[test]
    fn validation_is_aggregated() {
        let mut c = PipelineConfig::default();
        c.prior.tau = 0.0;
        c.noise.ratio = 2.0;
        c.nat.lr = -1.0;
        let Err(Error::Validation(msgs)) = c.validate() else { panic!("expected validation error") };
        assert!(msgs.len() >= 3, "{msgs:?}");
        assert!(PipelineConfig::from_toml("bogus = 1").unwrap_err().is_validation());
    }

    #[test]
    fn resolved_seeds_follow_global_seed() {
        let a = PipelineConfig { seed: 7, ..PipelineConfig::default() }.resolved();
        let b = PipelineConfig { seed: 8, ..PipelineConfig::default() }.resolved();
        assert_ne!(a.nat.seed, b.nat.seed);
        assert_eq!(a.nat.seed, seed::derive(7, "nat"));
    }
}
