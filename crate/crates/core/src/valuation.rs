//! Valuation methods behind one interface, looked up by name.
//!
//! Every method receives a [`ValuationContext`], which computes the shared inputs
//! (subset experiments, traced training, characteristics) on first use and hands
//! the same copy to every method afterwards.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array1, Array2};
use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ame::{default_lambda_grid, select_lambda_cv, solve_lasso, solve_ols, SubsetExperiments};
use crate::characteristics::{extract_characteristics, CharacteristicsMatrix};
use crate::config::RunConfig;
use crate::corpus::{hex, Corpus};
use crate::error::{Error, Result};
use crate::learners::{train_with_trace, TrainingTrace};
use crate::mlpbv::{predict_values, train_mlpbv, MlpEnsemble};
use crate::rng::SeedSpec;
use crate::shapley::{exact_shapley, mc_shapley};
use crate::srt::{extract_rules, train_srtbv, RuleSet, SrtTraining};
use crate::utility::{CachedUtility, ClassifierUtility, Utility};

pub fn config_hash(config: &RunConfig) -> String {
    hex(&Sha256::digest(config.to_toml_string().as_bytes()))
}

/// Shared, lazily computed inputs of one valuation run.
pub struct ValuationContext<'a> {
    pub corpus: &'a Corpus,
    pub config: &'a RunConfig,
    pub seed: SeedSpec,
    experiments: OnceCell<SubsetExperiments>,
    trace: OnceCell<TrainingTrace>,
    characteristics: OnceCell<CharacteristicsMatrix>,
}

impl<'a> ValuationContext<'a> {
    pub fn new(corpus: &'a Corpus, config: &'a RunConfig) -> Self {
        Self {
            corpus,
            config,
            seed: SeedSpec::new(config.seed),
            experiments: OnceCell::new(),
            trace: OnceCell::new(),
            characteristics: OnceCell::new(),
        }
    }

    /// Reuses cached subset experiments when they were produced for this corpus,
    /// `M`, rate grid and seed; otherwise they are ignored.
    pub fn with_experiments(self, experiments: SubsetExperiments) -> Self {
        let s = &self.config.subsets;
        if experiments.matches(&self.corpus.content_hash(), s.count, &s.p_grid, &self.seed) {
            let _ = self.experiments.set(experiments);
        } else {
            log::warn!("cached subset experiments do not match this corpus and configuration; recomputing");
        }
        self
    }

    pub fn with_trace(self, trace: TrainingTrace) -> Self {
        let _ = self.trace.set(trace);
        self
    }

    pub fn with_characteristics(self, characteristics: CharacteristicsMatrix) -> Self {
        let _ = self.characteristics.set(characteristics);
        self
    }

    pub fn utility(&self) -> ClassifierUtility<'a> {
        ClassifierUtility::new(self.corpus, self.config.learner.clone(), self.seed)
    }

    pub fn experiments(&self) -> Result<&SubsetExperiments> {
        self.experiments.get_or_try_init(|| {
            let s = &self.config.subsets;
            SubsetExperiments::run(&self.utility(), self.corpus.content_hash(), s.count, &s.p_grid, &self.seed)
        })
    }

    pub fn trace(&self) -> Result<&TrainingTrace> {
        self.trace.get_or_try_init(|| train_with_trace(self.corpus, &self.config.trace, self.config.learner.l2, self.seed))
    }

    pub fn characteristics(&self) -> Result<&CharacteristicsMatrix> {
        self.characteristics.get_or_try_init(|| {
            let trace = self.trace()?;
            extract_characteristics(trace, self.corpus, self.config.trace.neighbors)
        })
    }

    /// `(X̂, R)`, with `R` mean-centered when configured.
    pub fn regression(&self) -> Result<(Array2<f64>, Array1<f64>)> {
        let experiments = self.experiments()?;
        let design = experiments.design()?;
        let mut r = experiments.utility_vector();
        if self.config.subsets.center_utility {
            let mean = r.mean().unwrap_or(0.0);
            r -= mean;
        }
        Ok((design.x, r))
    }
}

/// Method-specific by-products kept alongside the values.
#[derive(Debug, Clone)]
pub enum Artifacts {
    None,
    Lasso { lambda: f64 },
    Mlp(Box<MlpEnsemble>),
    Srt { training: Box<SrtTraining>, rules: Box<RuleSet> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    /// Number of subset experiments the method consumed (0 if none).
    pub subsets: usize,
    /// Wall-clock seconds, left out of serialized output.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuationResult {
    pub method: String,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<Vec<f64>>,
    pub provenance: Provenance,
}

pub struct Valuation {
    pub result: ValuationResult,
    pub artifacts: Artifacts,
}

pub trait Valuator: Send + Sync {
    /// Canonical id, e.g. `ame-ols`.
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    fn description(&self) -> &'static str;

    /// Whether the method consumes the subset experiments.
    fn uses_subsets(&self) -> bool {
        true
    }

    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)>;

    fn value(&self, ctx: &ValuationContext) -> Result<Valuation> {
        let start = Instant::now();
        let (values, std_error, artifacts) = self.compute(ctx)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{} produced non-finite values", self.name())));
        }
        let provenance = Provenance {
            config_hash: config_hash(ctx.config),
            seed: ctx.config.seed,
            subsets: if self.uses_subsets() { ctx.config.subsets.count } else { 0 },
            runtime_seconds: start.elapsed().as_secs_f64(),
        };
        Ok(Valuation {
            result: ValuationResult { method: self.name().to_string(), values, std_error, provenance },
            artifacts,
        })
    }
}

struct AmeOls;
struct AmeLasso;
struct Mlpbv;
struct Srtbv;
struct ExactShapley;
struct McShapley;

impl Valuator for AmeOls {
    fn name(&self) -> &'static str {
        "ame-ols"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["ols", "ame"]
    }
    fn description(&self) -> &'static str {
        "least-squares regression of subset utilities on the scaled membership matrix"
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let (x, r) = ctx.regression()?;
        let solution = solve_ols(x.view(), r.view(), &ctx.config.ols)?;
        if !solution.converged {
            log::warn!("OLS stopped after {} iterations without reaching the tolerance", solution.iterations);
        }
        Ok((solution.beta.to_vec(), None, Artifacts::None))
    }
}

impl Valuator for AmeLasso {
    fn name(&self) -> &'static str {
        "ame-lasso"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["lasso"]
    }
    fn description(&self) -> &'static str {
        "L1-penalized regression with the penalty chosen by cross-validation"
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let (x, r) = ctx.regression()?;
        let cfg = &ctx.config.lasso;
        let grid = cfg.lambda_grid.clone().unwrap_or_else(|| default_lambda_grid(x.view(), r.view(), cfg.grid_size));
        let selection = select_lambda_cv(x.view(), r.view(), &grid, cfg.folds, &ctx.seed)?;
        let solution = solve_lasso(x.view(), r.view(), selection.lambda)?;
        Ok((solution.beta.to_vec(), None, Artifacts::Lasso { lambda: selection.lambda }))
    }
}

impl Valuator for Mlpbv {
    fn name(&self) -> &'static str {
        "mlpbv"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["mlp"]
    }
    fn description(&self) -> &'static str {
        "shared perceptron over training characteristics, fit through the subset regression"
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let (x, r) = ctx.regression()?;
        let u = ctx.characteristics()?;
        let mut ensemble = train_mlpbv(x.view(), r.view(), u.values.view(), &ctx.config.mlp, &ctx.seed)?;
        ensemble.standardization = u.standardization.clone();
        let values = predict_values(&ensemble, u.values.view())?;
        Ok((values.to_vec(), None, Artifacts::Mlp(Box::new(ensemble))))
    }
}

impl Valuator for Srtbv {
    fn name(&self) -> &'static str {
        "srtbv"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["srt"]
    }
    fn description(&self) -> &'static str {
        "sparse regression tree over discretized characteristics with readable rules"
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let (x, r) = ctx.regression()?;
        let u = ctx.characteristics()?;
        let training = train_srtbv(x.view(), r.view(), u.values.view(), &ctx.config.srt, &ctx.seed)?;
        let rules = extract_rules(&training.model)?;
        let values = training.model.values().to_vec();
        Ok((values, None, Artifacts::Srt { training: Box::new(training), rules: Box::new(rules) }))
    }
}

impl Valuator for ExactShapley {
    fn name(&self) -> &'static str {
        "exact-shapley"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["exact"]
    }
    fn description(&self) -> &'static str {
        "Shapley values by enumerating every coalition (small corpora only)"
    }
    fn uses_subsets(&self) -> bool {
        false
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let utility = ctx.utility();
        Ok((exact_shapley(&utility, ctx.config.shapley.normalized)?, None, Artifacts::None))
    }
}

impl Valuator for McShapley {
    fn name(&self) -> &'static str {
        "mc-shapley"
    }
    fn aliases(&self) -> &'static [&'static str] {
        &["mc"]
    }
    fn description(&self) -> &'static str {
        "Shapley values estimated from random permutations"
    }
    fn uses_subsets(&self) -> bool {
        false
    }
    fn compute(&self, ctx: &ValuationContext) -> Result<(Vec<f64>, Option<Vec<f64>>, Artifacts)> {
        let utility = ctx.utility();
        let estimate = if utility.num_players() <= 20 {
            mc_shapley(&CachedUtility::new(&utility), ctx.config.shapley.permutations, &ctx.seed)?
        } else {
            mc_shapley(&utility, ctx.config.shapley.permutations, &ctx.seed)?
        };
        Ok((estimate.values, Some(estimate.std_error), Artifacts::None))
    }
}

/// Name-indexed collection of valuation methods.
#[derive(Default)]
pub struct Registry {
    methods: BTreeMap<&'static str, Box<dyn Valuator>>,
    aliases: BTreeMap<&'static str, &'static str>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::new();
        registry.register(Box::new(AmeOls));
        registry.register(Box::new(AmeLasso));
        registry.register(Box::new(Mlpbv));
        registry.register(Box::new(Srtbv));
        registry.register(Box::new(ExactShapley));
        registry.register(Box::new(McShapley));
        registry
    }

    pub fn register(&mut self, method: Box<dyn Valuator>) {
        for alias in method.aliases() {
            self.aliases.insert(alias, method.name());
        }
        self.methods.insert(method.name(), method);
    }

    pub fn get(&self, name: &str) -> Result<&dyn Valuator> {
        let key = self.aliases.get(name).copied().unwrap_or(name);
        self.methods.get(key).map(|m| m.as_ref()).ok_or_else(|| Error::UnknownMethod(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.methods.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_names_and_aliases() {
        let r = Registry::with_builtins();
        assert_eq!(r.names(), vec!["ame-lasso", "ame-ols", "exact-shapley", "mc-shapley", "mlpbv", "srtbv"]);
        assert_eq!(r.get("exact").unwrap().name(), "exact-shapley");
        assert_eq!(r.get("mc").unwrap().name(), "mc-shapley");
        assert_eq!(r.get("srtbv").unwrap().name(), "srtbv");
        assert!(matches!(r.get("knn"), Err(Error::UnknownMethod(_))));
    }
}
