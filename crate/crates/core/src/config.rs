//! TOML run configuration.
//!
//! Every section is optional except `data` and `[ingest].target`; missing
//! values fall back to the defaults of the corresponding module.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BootstrapConfig, BreakSchedule};
use crate::combine::{McsConfig, McsStatistic, DEFAULT_ETA_GRID, DEFAULT_META_LAMBDA};
use crate::data::{q, IngestConfig, QuarterIndex};
use crate::error::{Error, Result};
use crate::hpo::{SearchSpace, StudyConfig};
use crate::learners::{LearnerOptions, ModelKind};
use crate::par::derive_seed;
use crate::windows::{Horizon, VALIDATION_QUARTERS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HorizonConfig {
    pub first_test: QuarterIndex,
    pub last_test: QuarterIndex,
    pub covid_start: QuarterIndex,
    pub covid_end: QuarterIndex,
    pub validation_quarters: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        HorizonConfig {
            first_test: q(2017, 1),
            last_test: q(2023, 2),
            covid_start: q(2020, 1),
            covid_end: q(2020, 4),
            validation_quarters: VALIDATION_QUARTERS,
        }
    }
}

impl HorizonConfig {
    pub fn horizon(&self) -> Horizon {
        let mut h = Horizon::with_covid(self.first_test, self.last_test, self.covid_start, self.covid_end);
        h.validation_quarters = self.validation_quarters;
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HpoSection {
    pub n_trials: usize,
    pub gamma: f64,
    pub n_startup: usize,
    pub candidates: usize,
}

impl Default for HpoSection {
    fn default() -> Self {
        let s = StudyConfig::default();
        HpoSection { n_trials: s.n_trials, gamma: s.gamma, n_startup: s.n_startup, candidates: s.candidates }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapSection {
    pub enabled: bool,
    pub block_len: usize,
    pub replicates: usize,
    pub alpha: f64,
    pub breaks: Vec<QuarterIndex>,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        let b = BootstrapConfig::default();
        BootstrapSection {
            enabled: true,
            block_len: b.block_len,
            replicates: b.replicates,
            alpha: b.alpha,
            breaks: BreakSchedule::default().breaks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McsSection {
    pub alpha: f64,
    pub replicates: usize,
    pub block_len: usize,
    pub statistic: McsStatistic,
}

impl Default for McsSection {
    fn default() -> Self {
        let m = McsConfig::default();
        McsSection { alpha: m.alpha, replicates: m.replicates, block_len: m.block_len, statistic: m.statistic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombineSection {
    /// Learning rate of the reported single EWA combination.
    pub ewa_eta: f64,
    pub eta_grid: Vec<f64>,
    pub meta_lambda: f64,
    /// Combine only the MCS survivors; otherwise the whole roster.
    pub use_mcs: bool,
}

impl Default for CombineSection {
    fn default() -> Self {
        CombineSection { ewa_eta: 0.1, eta_grid: DEFAULT_ETA_GRID.to_vec(), meta_lambda: DEFAULT_META_LAMBDA, use_mcs: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Quarterly CSV; relative paths resolve against the config file.
    pub data: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_models")]
    pub models: Vec<String>,
    /// Name of the benchmark used for ratios and tests.
    #[serde(default = "default_benchmark")]
    pub benchmark: String,
    pub ingest: IngestConfig,
    #[serde(default)]
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub hpo: HpoSection,
    #[serde(default)]
    pub learners: LearnerOptions,
    /// Per-model search-space overrides keyed by model name.
    #[serde(default)]
    pub spaces: BTreeMap<String, SearchSpace>,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub mcs: McsSection,
    #[serde(default)]
    pub combine: CombineSection,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

fn default_seed() -> u64 {
    42
}

fn default_top_k() -> usize {
    10
}

fn default_benchmark() -> String {
    "RW".into()
}

fn default_models() -> Vec<String> {
    ModelKind::ALL.iter().map(|m| m.name().to_string()).collect()
}

impl RunConfig {
    pub fn new(data: impl Into<PathBuf>, target: &str) -> Self {
        RunConfig {
            data: data.into(),
            output_dir: default_output(),
            cache_dir: None,
            seed: default_seed(),
            models: default_models(),
            benchmark: default_benchmark(),
            ingest: IngestConfig::new(target),
            horizon: HorizonConfig::default(),
            hpo: HpoSection::default(),
            learners: LearnerOptions::default(),
            spaces: BTreeMap::new(),
            bootstrap: BootstrapSection::default(),
            mcs: McsSection::default(),
            combine: CombineSection::default(),
            top_k: default_top_k(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.data);
        resolve(&mut cfg.output_dir);
        if let Some(c) = cfg.cache_dir.as_mut() {
            resolve(c);
        }
        if let Some(m) = cfg.ingest.monthly.as_mut() {
            let mut p = PathBuf::from(&m.path);
            resolve(&mut p);
            m.path = p.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn roster(&self) -> Result<Vec<ModelKind>> {
        let mut out: Vec<ModelKind> = Vec::new();
        for name in &self.models {
            let m: ModelKind = name.parse()?;
            if out.contains(&m) {
                return Err(Error::Config(format!("model {} listed twice", m.name())));
            }
            out.push(m);
        }
        if out.is_empty() {
            return Err(Error::Config("model roster is empty".into()));
        }
        Ok(out)
    }

    /// Keeps only the named models (roster order is preserved).
    pub fn filter_roster(&mut self, keep: &[String]) -> Result<()> {
        let wanted: Vec<ModelKind> = keep.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        let roster = self.roster()?;
        let kept: Vec<String> = roster.iter().filter(|m| wanted.contains(m)).map(|m| m.name().to_string()).collect();
        if kept.is_empty() {
            return Err(Error::Config("roster filter removed every model".into()));
        }
        self.models = kept;
        Ok(())
    }

    pub fn benchmark_kind(&self) -> Result<ModelKind> {
        self.benchmark.parse()
    }

    pub fn space_for(&self, model: ModelKind) -> Result<SearchSpace> {
        let over = self.spaces.iter().find(|(k, _)| k.parse::<ModelKind>().ok() == Some(model));
        let space = match over {
            Some((_, s)) => s.clone(),
            None => model.default_space(),
        };
        if !space.is_empty() {
            space.validate()?;
        }
        Ok(space)
    }

    pub fn study(&self, model: ModelKind, split: usize) -> StudyConfig {
        StudyConfig {
            n_trials: self.hpo.n_trials,
            gamma: self.hpo.gamma,
            n_startup: self.hpo.n_startup,
            candidates: self.hpo.candidates,
            seed: derive_seed(derive_seed(self.seed, model as u64), split as u64),
        }
    }

    pub fn bootstrap_config(&self, model: ModelKind, split: usize) -> BootstrapConfig {
        BootstrapConfig {
            block_len: self.bootstrap.block_len,
            replicates: self.bootstrap.replicates,
            alpha: self.bootstrap.alpha,
            seed: derive_seed(derive_seed(self.seed ^ 0xB007, model as u64), split as u64),
        }
    }

    pub fn breaks(&self) -> BreakSchedule {
        BreakSchedule { breaks: self.bootstrap.breaks.clone() }
    }

    pub fn mcs_config(&self) -> McsConfig {
        McsConfig {
            alpha: self.mcs.alpha,
            replicates: self.mcs.replicates,
            block_len: self.mcs.block_len,
            statistic: self.mcs.statistic,
            seed: derive_seed(self.seed, 0x3C5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let roster = self.roster()?;
        let bench = self.benchmark_kind()?;
        if !roster.contains(&bench) {
            return Err(Error::Config(format!("benchmark {} is not in the model roster", bench.name())));
        }
        for key in self.spaces.keys() {
            let m: ModelKind = key.parse()?;
            self.space_for(m)?;
        }
        self.ingest.transform.validate()?;
        self.study(roster[0], 0).validate()?;
        self.learners.validate()?;
        self.bootstrap_config(roster[0], 0).validate()?;
        self.breaks().validate()?;
        self.mcs_config().validate()?;
        if self.horizon.last_test < self.horizon.first_test {
            return Err(Error::Config("horizon ends before it starts".into()));
        }
        if self.combine.eta_grid.is_empty() || self.combine.eta_grid.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("eta grid must be nonempty and nonnegative".into()));
        }
        if !(self.combine.meta_lambda >= 0.0 && self.combine.ewa_eta >= 0.0) {
            return Err(Error::Config("EWA rates must be nonnegative".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        Ok(())
    }

    /// Stable digest of the configuration, used for cache keys.
    pub fn digest(&self) -> Result<u64> {
        Ok(fnv1a(serde_json::to_string(self)?.as_bytes()))
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
data = "gdp.csv"
[ingest]
target = "gdp_growth"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.hpo.n_trials, 60);
        assert_eq!(c.horizon.validation_quarters, 12);
        assert_eq!(c.bootstrap.replicates, 1000);
        assert_eq!(c.bootstrap.block_len, 4);
        assert_eq!(c.mcs.replicates, 10_000);
        assert_eq!(c.mcs.alpha, 0.10);
        assert_eq!(c.ingest.transform.neg_shock_threshold, -2.5);
        assert_eq!(c.ingest.transform.pos_shock_threshold, 5.0);
        assert_eq!(c.roster().unwrap().len(), 12);
        assert_eq!(c.breaks(), BreakSchedule::default());
        let h = c.horizon.horizon();
        assert_eq!(h, Horizon::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::new("x.csv", "y");
        c.spaces.insert("Ridge".into(), SearchSpace::new().with("alpha", crate::hpo::Domain::log_real(0.1, 1.0)));
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest().unwrap(), c.digest().unwrap());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_model = format!("models = [\"RW\", \"SVM\"]\n{MINIMAL}");
        assert!(matches!(RunConfig::from_toml(&bad_model), Err(Error::Config(_))));
        let no_bench = format!("models = [\"Ridge\"]\n{MINIMAL}");
        assert!(RunConfig::from_toml(&no_bench).is_err());
        let dup = format!("models = [\"RW\", \"rw\"]\n{MINIMAL}");
        assert!(RunConfig::from_toml(&dup).is_err());
        let alpha = format!("{MINIMAL}[bootstrap]\nalpha = 0.7\n");
        assert!(RunConfig::from_toml(&alpha).is_err());
        assert!(matches!(RunConfig::from_toml("data = 3"), Err(Error::Toml(_))));
    }

    #[test]
    fn roster_filter_keeps_order() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.filter_roster(&["ridge".into(), "rw".into()]).unwrap();
        assert_eq!(c.models, vec!["RW".to_string(), "Ridge".to_string()]);
        assert!(c.filter_roster(&["GRU".into()]).is_err());
    }

    #[test]
    fn seeds_differ_by_model_and_split() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_ne!(c.study(ModelKind::Ridge, 0).seed, c.study(ModelKind::Ridge, 1).seed);
        assert_ne!(c.study(ModelKind::Ridge, 0).seed, c.study(ModelKind::En, 0).seed);
    }
}
