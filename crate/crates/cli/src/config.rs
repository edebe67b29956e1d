//! Run configuration: one TOML file, paths relative to the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use drivetext_core::agreement::MacroAverage;
use drivetext_core::gateway::BackendSpec;
use drivetext_core::keyness::DEFAULT_ALPHA0;
use drivetext_core::race::{ModelSettings, DEFAULT_TAU_ACCEPT};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    /// Labels produced by `classify` (classifications.jsonl in the output dir).
    #[default]
    Classified,
    /// The `label` field of the corpus file.
    Corpus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub backend: Option<BackendSpec>,
    /// TOML or JSON file holding a backend spec; alternative to `backend`.
    #[serde(default)]
    pub backend_path: Option<PathBuf>,
}

fn default_max_tokens() -> u32 {
    512
}

impl MemberConfig {
    pub fn settings(&self) -> ModelSettings {
        ModelSettings {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    pub fn backend_spec(&self) -> Result<BackendSpec> {
        match (&self.backend, &self.backend_path) {
            (Some(b), None) => Ok(b.clone()),
            (None, Some(p)) => {
                let text =
                    std::fs::read_to_string(p).with_context(|| format!("reading backend spec {}", p.display()))?;
                if p.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
                } else {
                    toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
                }
            }
            (Some(_), Some(_)) => bail!(
                "model `{}`: set either backend or backend_path, not both",
                self.model_id
            ),
            (None, None) => bail!("model `{}`: no backend configured", self.model_id),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub m1: MemberConfig,
    pub m2: MemberConfig,
    pub m3: MemberConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeynessConfig {
    #[serde(default = "default_alpha0")]
    pub alpha0: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub stopword_path: Option<PathBuf>,
}

fn default_alpha0() -> f64 {
    DEFAULT_ALPHA0
}

fn default_top_k() -> usize {
    20
}

impl Default for KeynessConfig {
    fn default() -> Self {
        KeynessConfig {
            alpha0: default_alpha0(),
            top_k: default_top_k(),
            stopword_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntaxConfig {
    #[serde(default)]
    pub lexicon_path: Option<PathBuf>,
    #[serde(default)]
    pub cue_path: Option<PathBuf>,
    #[serde(default = "default_min_share")]
    pub min_share: f64,
}

fn default_min_share() -> f64 {
    0.10
}

impl Default for SyntaxConfig {
    fn default() -> Self {
        SyntaxConfig {
            lexicon_path: None,
            cue_path: None,
            min_share: default_min_share(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_min_n")]
    pub min_n: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_fraction() -> f64 {
    0.10
}

fn default_min_n() -> usize {
    2
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            fraction: default_fraction(),
            min_n: default_min_n(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DevModeConfig {
    /// Tiebreak model (m3) alone.
    #[default]
    Single,
    Ensemble,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    #[serde(default = "default_tau")]
    pub tau_accept: f64,
    #[serde(default)]
    pub dev_mode: DevModeConfig,
}

fn default_tau() -> f64 {
    DEFAULT_TAU_ACCEPT
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            tau_accept: default_tau(),
            dev_mode: DevModeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub macro_average: MacroAverage,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub corpus_path: Option<PathBuf>,
    /// Bundled taxonomy when absent.
    #[serde(default)]
    pub taxonomy_path: Option<PathBuf>,
    #[serde(default)]
    pub conllu_path: Option<PathBuf>,
    #[serde(default)]
    pub annotations_path: Option<PathBuf>,
    /// Bundled prompt template when absent.
    #[serde(default)]
    pub template_path: Option<PathBuf>,
    #[serde(default)]
    pub dev_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub label_source: LabelSource,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default)]
    pub keyness: KeynessConfig,
    #[serde(default)]
    pub syntax: SyntaxConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub refine: RefineConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_parallelism() -> usize {
    4
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn rebase_opt(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(p) = p {
        rebase(base, p);
    }
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).context("invalid run configuration")?;
        cfg.rebase(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.corpus_path,
            &mut self.taxonomy_path,
            &mut self.conllu_path,
            &mut self.annotations_path,
            &mut self.template_path,
            &mut self.dev_path,
            &mut self.cache_dir,
            &mut self.keyness.stopword_path,
            &mut self.syntax.lexicon_path,
            &mut self.syntax.cue_path,
        ] {
            rebase_opt(base, p);
        }
        rebase(base, &mut self.output_dir);
        if let Some(e) = &mut self.ensemble {
            for m in [&mut e.m1, &mut e.m2, &mut e.m3] {
                rebase_opt(base, &mut m.backend_path);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        Ok(())
    }

    /// A configured input path that must exist.
    pub fn input<'a>(&self, value: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path> {
        let Some(p) = value else {
            bail!("`{key}` is not set; add it to the config file or pass {flag}");
        };
        if !p.exists() {
            bail!("{key} `{}` does not exist", p.display());
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_rebasing() {
        let cfg = RunConfig::parse(
            "corpus_path = \"c.jsonl\"\n[keyness]\nalpha0 = 50.0\n",
            Path::new("/data"),
        )
        .unwrap();
        assert_eq!(cfg.corpus_path.unwrap(), Path::new("/data/c.jsonl"));
        assert_eq!(cfg.output_dir, Path::new("/data/out"));
        assert_eq!(cfg.keyness.alpha0, 50.0);
        assert_eq!(cfg.keyness.top_k, 20);
        assert_eq!(cfg.sampling.min_n, 2);
        assert_eq!(cfg.refine.tau_accept, DEFAULT_TAU_ACCEPT);
        assert_eq!(RunConfig::default().parallelism, 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("corpus = \"x\"\n", Path::new(".")).is_err());
    }

    #[test]
    fn member_backend_inline() {
        let text = r#"
[ensemble.m1]
model_id = "small"
backend = { kind = "mock", default_reply = "LABEL: A" }
[ensemble.m2]
model_id = "small-2"
backend = { kind = "http", endpoint = "http://localhost:1/v1/chat/completions" }
[ensemble.m3]
model_id = "large"
backend_path = "m3.toml"
"#;
        let cfg = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        let e = cfg.ensemble.unwrap();
        assert!(matches!(e.m1.backend_spec().unwrap(), BackendSpec::Mock(_)));
        assert!(matches!(e.m2.backend_spec().unwrap(), BackendSpec::Http { .. }));
        assert_eq!(e.m3.backend_path.unwrap(), Path::new("/cfg/m3.toml"));
    }
}
