//! Benchmark configuration file: sections `[data]`, `[models]`, `[training]`,
//! `[horizons]` and `[seeds]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tkat_core::data::WindowSpec;
use tkat_core::kan::GridSpec;
use tkat_core::models::{ModelDims, ModelKind};
use tkat_core::recurrent::{CandidateActivation, TkanSpec};
use tkat_core::train::TrainConfig;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub data: DataSection,
    pub models: ModelsSection,
    #[serde(default)]
    pub training: TrainingSection,
    pub horizons: ValuesSection<usize>,
    pub seeds: ValuesSection<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Series file, relative to the config file.
    pub csv: Option<PathBuf>,
    /// Built-in generator, used when `csv` is absent.
    pub synthetic: Option<SyntheticSection>,
    /// Target column; defaults to the first series.
    pub target: Option<String>,
    #[serde(default = "default_past_len")]
    pub past_len: usize,
    #[serde(default = "default_median_window")]
    pub median_window: usize,
    /// Directory for windowed-sample caches, relative to the config file.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    #[serde(default = "default_hours")]
    pub hours: usize,
    #[serde(default = "default_assets")]
    pub assets: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub names: Vec<String>,
    #[serde(default = "default_width")]
    pub d_model: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Units of the recurrent baselines and the MLP.
    #[serde(default = "default_width")]
    pub hidden: usize,
    #[serde(default = "default_baseline_layers")]
    pub baseline_layers: usize,
    #[serde(default = "default_embed_width")]
    pub embed_width: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_spline_order")]
    pub spline_order: usize,
    #[serde(default)]
    pub tanh_candidate: bool,
    #[serde(default)]
    pub positional_encoding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Wall-clock cap per cell, checked after every epoch.
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuesSection<T> {
    pub values: Vec<T>,
}

fn default_past_len() -> usize {
    30
}
fn default_median_window() -> usize {
    336
}
fn default_hours() -> usize {
    4000
}
fn default_assets() -> usize {
    5
}
fn default_width() -> usize {
    100
}
fn default_heads() -> usize {
    4
}
fn default_baseline_layers() -> usize {
    2
}
fn default_embed_width() -> usize {
    1
}
fn default_grid_size() -> usize {
    5
}
fn default_spline_order() -> usize {
    3
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            plateau_patience: t.plateau_patience,
            plateau_factor: t.plateau_factor,
            timeout_secs: None,
        }
    }
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: BenchConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data.csv);
        resolve(&mut cfg.data.cache_dir);
        Ok(cfg)
    }

    /// Canonical TOML text, the input of [`BenchConfig::sha256`].
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(BenchError::Config(m));
        if self.models.names.is_empty() {
            return fail("[models] names is empty".into());
        }
        self.model_kinds()?;
        if self.horizons.values.is_empty() || self.horizons.values.contains(&0) {
            return fail("[horizons] values must be a non-empty list of positive integers".into());
        }
        if self.seeds.values.is_empty() {
            return fail("[seeds] values is empty".into());
        }
        match (&self.data.csv, &self.data.synthetic) {
            (Some(_), Some(_)) => return fail("[data] sets both csv and synthetic".into()),
            (None, None) => return fail("[data] needs a csv path or a synthetic section".into()),
            _ => {}
        }
        if self.data.past_len == 0 || self.data.median_window == 0 {
            return fail("[data] past_len and median_window must be positive".into());
        }
        if let Some(t) = self.training.timeout_secs {
            if t.is_nan() || t <= 0.0 {
                return fail("[training] timeout_secs must be positive".into());
            }
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    /// Models in config order; duplicates are rejected.
    pub fn model_kinds(&self) -> Result<Vec<ModelKind>> {
        let mut kinds: Vec<ModelKind> = Vec::new();
        for name in &self.models.names {
            let kind: ModelKind = name
                .parse()
                .map_err(|e: tkat_core::Error| BenchError::Config(e.to_string()))?;
            if kinds.contains(&kind) {
                return Err(BenchError::Config(format!("model `{name}` listed twice")));
            }
            kinds.push(kind);
        }
        Ok(kinds)
    }

    pub fn window_spec(&self, horizon: usize) -> WindowSpec {
        let mut spec = WindowSpec::new(self.data.past_len, horizon);
        spec.median_window = self.data.median_window;
        spec
    }

    pub fn model_dims(&self, n_observed: usize, n_known: usize, horizon: usize) -> ModelDims {
        let m = &self.models;
        let mut dims = ModelDims::new(n_observed, n_known, self.data.past_len, horizon);
        dims.d_model = m.d_model;
        dims.heads = m.heads;
        dims.hidden = m.hidden;
        dims.baseline_layers = m.baseline_layers;
        dims.embed_width = m.embed_width;
        dims.positional_encoding = m.positional_encoding;
        dims.tkan = TkanSpec {
            grid: GridSpec {
                grid_size: m.grid_size,
                order: m.spline_order,
                ..GridSpec::default()
            },
            candidate: if m.tanh_candidate {
                CandidateActivation::Tanh
            } else {
                CandidateActivation::Sigmoid
            },
            ..TkanSpec::default()
        };
        dims
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            early_stop_patience: t.early_stop_patience,
            plateau_patience: t.plateau_patience,
            plateau_factor: t.plateau_factor,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[data]
synthetic = { hours = 800 }
past_len = 6

[models]
names = ["TKAT", "gru"]

[horizons]
values = [1, 3]

[seeds]
values = [0, 1]
"#;

    #[test]
    fn defaults_fill_in() {
        let c = BenchConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.data.synthetic.as_ref().unwrap().assets, 5);
        assert_eq!(c.data.median_window, 336);
        assert_eq!(c.models.d_model, 100);
        assert_eq!(c.training, TrainingSection::default());
        assert_eq!(c.model_kinds().unwrap().len(), 2);
        assert_eq!(c.window_spec(3).horizon, 3);
    }

    #[test]
    fn canonical_form_is_stable() {
        let c = BenchConfig::from_toml(MINIMAL).unwrap();
        let again = BenchConfig::from_toml(&c.canonical()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.sha256(), again.sha256());
        assert_eq!(c.sha256().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            MINIMAL.replace(r#"names = ["TKAT", "gru"]"#, "names = []"),
            MINIMAL.replace(r#""gru""#, r#""transformer""#),
            MINIMAL.replace(r#""gru""#, r#""tkat""#),
            MINIMAL.replace("values = [1, 3]", "values = []"),
            MINIMAL.replace("values = [1, 3]", "values = [0]"),
            MINIMAL.replace("values = [0, 1]", "values = []"),
            MINIMAL.replace("synthetic = { hours = 800 }", ""),
            MINIMAL.replace("past_len = 6", "past_len = 6\ncsv = \"x.csv\""),
            MINIMAL.replace("past_len = 6", "past_lenn = 6"),
            format!("{MINIMAL}\n[training]\nplateau_factor = 1.5\n"),
        ];
        for text in bad {
            assert!(BenchConfig::from_toml(&text).is_err(), "{text}");
        }
    }
}
