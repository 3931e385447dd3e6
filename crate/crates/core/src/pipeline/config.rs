use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LangClass;
use crate::embed_init::DecomposeBasis;
use crate::error::{Error, Result};
use crate::metrics::{EntropySupport, SizeUnit, DEFAULT_ALPHA};
use crate::schedule::{MixtureParams, Strategy};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusPaths {
    pub ar: Vec<PathBuf>,
    pub en: Vec<PathBuf>,
    pub mc: Vec<PathBuf>,
    pub other: Vec<PathBuf>,
}

impl CorpusPaths {
    pub fn by_class(&self) -> [(LangClass, &[PathBuf]); 4] {
        [
            (LangClass::Arabic, &self.ar),
            (LangClass::English, &self.en),
            (LangClass::MathCode, &self.mc),
            (LangClass::Other, &self.other),
        ]
    }

    fn all(&self) -> impl Iterator<Item = &PathBuf> {
        self.ar
            .iter()
            .chain(&self.en)
            .chain(&self.mc)
            .chain(&self.other)
    }
}

/// Either a vocabulary file, or an alphabet drawn from the whole corpus
/// plus `extra_merges` merges learned on the non-Arabic documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSource {
    pub vocab: Option<PathBuf>,
    pub extra_merges: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub strategy: Strategy,
    pub budget: u64,
    pub stages: usize,
    /// Cumulative targets for the explicit strategy.
    pub targets: Vec<u64>,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            strategy: Strategy::Exponential,
            budget: 12_800,
            stages: 16,
            targets: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub corpus: CorpusPaths,
    pub base: BaseSource,
    pub expansion: ExpansionConfig,
    pub mixture: MixtureParams,
    /// Tokens (under the base vocabulary) sampled into each stage's slice.
    pub per_stage_tokens: u64,
    pub alpha: f64,
    pub size_unit: SizeUnit,
    pub entropy_support: EntropySupport,
    /// Share of Arabic documents held out for evaluation.
    pub heldout_fraction: f64,
    /// Learn new merges only from Arabic-script words of the Arabic slice.
    pub restrict_script: bool,
    pub decompose_basis: DecomposeBasis,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            out_dir: PathBuf::from("vexp-out"),
            seed: 0,
            threads: None,
            corpus: CorpusPaths::default(),
            base: BaseSource::default(),
            expansion: ExpansionConfig::default(),
            mixture: MixtureParams::default(),
            per_stage_tokens: 30_000_000_000,
            alpha: DEFAULT_ALPHA,
            size_unit: SizeUnit::Bytes,
            entropy_support: EntropySupport::FullVocab,
            heldout_fraction: 0.1,
            restrict_script: true,
            decompose_basis: DecomposeBasis::Base,
        }
    }
}

impl RunConfig {
    /// Parses a TOML config. Relative paths are resolved against the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Validation(vec![format!("{}: {e}", path.display())]))?;
        let root = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(root);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    pub fn resolve_paths(&mut self, root: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        };
        for list in [
            &mut self.corpus.ar,
            &mut self.corpus.en,
            &mut self.corpus.mc,
            &mut self.corpus.other,
        ] {
            list.iter_mut().for_each(fix);
        }
        if let Some(v) = self.base.vocab.as_mut() {
            fix(v);
        }
        fix(&mut self.out_dir);
    }

    /// Checks every structural constraint and reports all failures together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let exp = &self.expansion;
        if exp.strategy == Strategy::Explicit {
            if exp.targets.len() < 2 {
                errs.push("stages >= 2: explicit targets need at least 2 entries".to_owned());
            }
            if exp.targets.first().is_some_and(|&t| t != 0) {
                errs.push("explicit targets must start at 0".to_owned());
            }
            if exp.targets.windows(2).any(|w| w[1] < w[0]) {
                errs.push("explicit targets must be non-decreasing".to_owned());
            }
            if exp.targets.last().is_some_and(|&t| t == 0) {
                errs.push("budget >= 1: explicit targets must end above 0".to_owned());
            }
        } else {
            if exp.stages < 2 {
                errs.push(format!("stages >= 2 (got {})", exp.stages));
            }
            if exp.budget < 1 {
                errs.push("budget >= 1 (got 0)".to_owned());
            }
            if !exp.targets.is_empty() {
                errs.push(format!(
                    "targets are only used by the explicit strategy, not {}",
                    exp.strategy
                ));
            }
        }
        let m = &self.mixture;
        if !(m.start_pct.is_finite() && m.end_pct.is_finite() && m.constant_pct.is_finite()) {
            errs.push("mixture percentages must be finite".to_owned());
        } else {
            if !(0.0 <= m.start_pct && m.start_pct < m.end_pct) {
                errs.push(format!(
                    "mixture needs 0 <= start_pct < end_pct (got {} and {})",
                    m.start_pct, m.end_pct
                ));
            }
            if m.constant_pct < 0.0 || m.end_pct + m.constant_pct > 100.0 {
                errs.push(format!(
                    "mixture needs end_pct + constant_pct <= 100 (got {} + {})",
                    m.end_pct, m.constant_pct
                ));
            }
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0 && self.alpha != 1.0) {
            errs.push(format!(
                "alpha must be positive and not 1 (got {})",
                self.alpha
            ));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            errs.push(format!(
                "heldout_fraction must be in [0, 1) (got {})",
                self.heldout_fraction
            ));
        }
        if self.per_stage_tokens == 0 {
            errs.push("per_stage_tokens must be >= 1".to_owned());
        }
        if self.threads == Some(0) {
            errs.push("threads must be >= 1".to_owned());
        }
        if self.corpus.ar.is_empty() {
            errs.push("corpus.ar must list at least one Arabic corpus file".to_owned());
        }
        for p in self.corpus.all() {
            if !p.is_file() {
                errs.push(format!("corpus file not found: {}", p.display()));
            }
        }
        if let Some(v) = &self.base.vocab {
            if !v.is_file() {
                errs.push(format!("base vocabulary not found: {}", v.display()));
            }
            if self.base.extra_merges > 0 {
                errs.push("base.extra_merges is ignored when base.vocab is set".to_owned());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn stages(&self) -> usize {
        match self.expansion.strategy {
            Strategy::Explicit => self.expansion.targets.len(),
            _ => self.expansion.stages,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_corpus() -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let ar = dir.path().join("ar.jsonl");
        fs::write(&ar, "{\"id\":\"1\",\"lang\":\"ar\",\"text\":\"كتب\"}\n").unwrap();
        let cfg = RunConfig {
            corpus: CorpusPaths {
                ar: vec![ar],
                ..Default::default()
            },
            ..Default::default()
        };
        (dir, cfg)
    }

    #[test]
    fn defaults_mirror_reference_run() {
        let (_dir, cfg) = with_corpus();
        cfg.validate().unwrap();
        assert_eq!(cfg.expansion.stages, 16);
        assert_eq!(cfg.expansion.budget, 12_800);
        assert_eq!(
            cfg.mixture,
            MixtureParams {
                start_pct: 30.0,
                end_pct: 90.0,
                constant_pct: 5.0
            }
        );
        assert_eq!(cfg.per_stage_tokens, 30_000_000_000);
    }

    #[test]
    fn reports_all_errors() {
        let (_dir, mut cfg) = with_corpus();
        cfg.expansion.stages = 1;
        cfg.expansion.budget = 0;
        cfg.corpus
            .en
            .push(PathBuf::from("/definitely/missing.jsonl"));
        let Err(Error::Validation(errs)) = cfg.validate() else {
            panic!("expected validation errors")
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs[0].contains("stages >= 2"));
    }

    #[test]
    fn parses_toml() {
        let cfg = RunConfig::from_toml(
            "seed = 3\nper_stage_tokens = 1000\n[expansion]\nstrategy = \"uniform\"\nbudget = 64\nstages = 4\n[corpus]\nar = [\"a.jsonl\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.expansion.strategy, Strategy::Uniform);
        assert_eq!(cfg.mixture.end_pct, 90.0);
        assert!(RunConfig::from_toml("bogus_key = 1").is_err());
    }
}
