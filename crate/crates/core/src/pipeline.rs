//! End-to-end experiment: split, scale, tier, fit and explain per tier, aggregate, compare.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{gbdt_feature_importance, gbdt_fit, GbdtParams};
use crate::config::ExperimentConfig;
use crate::dataset::Dataset;
use crate::diversity::{
    align_sme_ranks, diversity_report, rank_features, DiversityReport, RankSource, RankVector,
    SmeRanks,
};
use crate::ensemble::{aggregate_tiers, GlobalImportance, Provenance, TierResult};
use crate::error::{QfiError, Result};
use crate::model::{Classifier, ModelKind};
use crate::qsim::FeatureMapSpec;
use crate::qsvc::{compute_metrics, Metrics, QuantumSvc};
use crate::tiers::{
    apply_scaling_to, assign_tiers, fit_scaling, rank_by_label_correlation, split, take_columns,
    take_labels, take_rows, TierAssignment,
};
use crate::vqc::{vqc_fit, OptimizerKind, VqcSpec};
use crate::xai::{classifier_ale_importance, classifier_permutation_importance, ImportanceMethod, ImportanceVector};

/// Optional inputs that are not part of the configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    pub sme: Option<&'a SmeRanks>,
    /// Use this partition instead of the correlation-ranked one.
    pub tiers: Option<&'a TierAssignment>,
    /// Where to write each tier's QSVC training kernel.
    pub kernel_dir: Option<&'a Path>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tier_id: usize,
    pub features: Vec<usize>,
    pub metrics: Metrics,
    /// Explainer output, aligned with `features`.
    pub raw_importance: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub training_loss: Option<f64>,
}

/// One model family explained with one method across all tiers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model_id: String,
    pub tiered: bool,
    pub tiers: Vec<TierReport>,
    /// Unweighted mean of the tier accuracies.
    pub accuracy: f64,
    pub global_importance: GlobalImportance,
    pub ranks: RankVector,
}

impl ModelRun {
    pub fn model(&self) -> ModelKind {
        self.global_importance.provenance.model
    }

    pub fn explainer(&self) -> ImportanceMethod {
        self.global_importance.provenance.explainer
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TierTiming {
    pub model_id: String,
    pub tier_id: usize,
    /// Seconds since the run started.
    pub started_s: f64,
    pub finished_s: f64,
}

/// Wall-clock measurements; the only part of a report that varies between identical runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_s: f64,
    pub tiers: Vec<TierTiming>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub feature_names: Vec<String>,
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub tier_assignment: TierAssignment,
    pub primary: ModelRun,
    /// Classical comparison run, present when the primary model is quantum.
    pub baseline: Option<ModelRun>,
    pub sme_ranks: Option<RankVector>,
    pub sme_dropped: Vec<String>,
    pub diversity: Vec<DiversityReport>,
    pub timing: Timing,
}

pub const TIMING_FIELD: &str = "timing";

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// The report with wall-clock fields removed, for comparing runs.
    pub fn deterministic_json(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove(TIMING_FIELD);
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    pub fn runs(&self) -> impl Iterator<Item = &ModelRun> {
        std::iter::once(&self.primary).chain(self.baseline.as_ref())
    }
}

struct Prepared {
    x_train: Array2<f64>,
    y_train: Vec<u8>,
    x_test: Array2<f64>,
    y_test: Vec<u8>,
}

/// SplitMix64 finalizer; spreads small stream ids over the seed space.
fn mix(seed: u64, stream: u64, tier: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(tier.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SUBSAMPLE: u64 = 1;
const STREAM_MODEL: u64 = 2;
const STREAM_EXPLAIN: u64 = 3;

pub fn model_id(model: ModelKind, explainer: ImportanceMethod) -> String {
    format!("{model}+{explainer}")
}

struct TierOutcome {
    report: TierReport,
    result: TierResult,
    timing: TierTiming,
}

struct ModelPlan<'a> {
    model: ModelKind,
    explainer: ImportanceMethod,
    tiers: &'a TierAssignment,
    tiered: bool,
}

fn run_tier(
    plan: &ModelPlan,
    tier_id: usize,
    config: &ExperimentConfig,
    data: &Prepared,
    options: &RunOptions,
    started: Instant,
) -> Result<TierOutcome> {
    let t0 = started.elapsed().as_secs_f64();
    let features = &plan.tiers.tiers[tier_id];
    let x_train = take_columns(data.x_train.view(), features);
    let x_test = take_columns(data.x_test.view(), features);
    let id = model_id(plan.model, plan.explainer);

    let mut gain = None;
    let mut training_loss = None;
    let model: Box<dyn Classifier + Send> = match plan.model {
        ModelKind::Qsvc => {
            let spec = FeatureMapSpec::new(features.len(), config.reps)?;
            let (svc, gram) = QuantumSvc::fit_with_kernel(x_train.view(), &data.y_train, &spec, config.c)?;
            if let Some(dir) = options.kernel_dir {
                gram.save(&dir.join(format!("tier_{tier_id:02}_train.qkm")))?;
            }
            Box::new(svc)
        }
        ModelKind::Vqc => {
            let spec = VqcSpec {
                feature_map: FeatureMapSpec::new(features.len(), config.reps)?,
                ansatz_reps: config.ansatz_reps,
                optimizer: OptimizerKind::Spsa,
                max_iterations: config.spsa_iterations,
                seed: mix(config.seed, STREAM_MODEL, tier_id as u64),
            };
            let vqc = vqc_fit(x_train.view(), &data.y_train, &spec)?;
            training_loss = Some(vqc.final_loss);
            Box::new(vqc)
        }
        ModelKind::Gbdt => {
            let gbdt = gbdt_fit(x_train.view(), &data.y_train, &GbdtParams::default())?;
            gain = Some(gbdt_feature_importance(&gbdt)?.scores);
            Box::new(gbdt)
        }
    };

    let metrics = compute_metrics(&model.predict(x_test.view())?, &data.y_test)?;
    let raw = match plan.explainer {
        ImportanceMethod::Pi => classifier_permutation_importance(
            model.as_ref(),
            x_test.view(),
            &data.y_test,
            config.n_repeats_pi,
            mix(config.seed, STREAM_EXPLAIN, tier_id as u64),
        )?,
        ImportanceMethod::Ale => {
            classifier_ale_importance(model.as_ref(), x_test.view(), config.ale_intervals)?
        }
        ImportanceMethod::Gain => gain.ok_or_else(|| {
            QfiError::validation(format!("gain importance is not available for {}", plan.model))
        })?,
    };
    let importance = ImportanceVector::new(raw.clone(), plan.explainer, id.clone())?;
    let t1 = started.elapsed().as_secs_f64();
    Ok(TierOutcome {
        report: TierReport {
            tier_id,
            features: features.clone(),
            metrics,
            raw_importance: raw,
            training_loss,
        },
        result: TierResult {
            tier_id,
            model_accuracy: metrics.accuracy,
            importance,
            metrics,
        },
        timing: TierTiming {
            model_id: id,
            tier_id,
            started_s: t0,
            finished_s: t1,
        },
    })
}

fn run_model(
    plan: &ModelPlan,
    config: &ExperimentConfig,
    data: &Prepared,
    options: &RunOptions,
    started: Instant,
) -> Result<(ModelRun, Vec<TierTiming>)> {
    let n_tiers = plan.tiers.n_tiers();
    let one = |t: usize| {
        log::info!("{} tier {t}/{n_tiers}", model_id(plan.model, plan.explainer));
        run_tier(plan, t, config, data, options, started).map_err(|e| QfiError::Tier {
            tier: t,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<TierOutcome> = if config.parallel {
        (0..n_tiers).into_par_iter().map(one).collect::<Result<_>>()?
    } else {
        (0..n_tiers).map(one).collect::<Result<_>>()?
    };

    let provenance = Provenance {
        model: plan.model,
        explainer: plan.explainer,
    };
    let results: Vec<TierResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let (global_importance, accuracy) = aggregate_tiers(&results, plan.tiers, provenance)?;
    let source = if plan.model.is_quantum() {
        RankSource::Quantum
    } else {
        RankSource::Classical
    };
    let ranks = rank_features(&global_importance.scores, source);
    let mut timings = Vec::with_capacity(n_tiers);
    let mut tiers = Vec::with_capacity(n_tiers);
    for o in outcomes {
        timings.push(o.timing);
        tiers.push(o.report);
    }
    Ok((
        ModelRun {
            model_id: model_id(plan.model, plan.explainer),
            tiered: plan.tiered,
            tiers,
            accuracy,
            global_importance,
            ranks,
        },
        timings,
    ))
}

fn prepare(config: &ExperimentConfig, dataset: &Dataset) -> Result<(Dataset, Prepared)> {
    let mut data = dataset.clone();
    if let Some(cap) = config.max_rows.filter(|&m| m < dataset.n_rows()) {
        // a stratified "training part" of the requested size is the subsample
        let fraction = cap as f64 / dataset.n_rows() as f64;
        let keep = split(&dataset.y, fraction, mix(config.seed, STREAM_SUBSAMPLE, 0))?.train;
        data = dataset.select_rows(&keep);
    }
    let parts = split(&data.y, config.train_fraction, config.seed)?;
    let x_train_raw = take_rows(data.x.view(), &parts.train);
    let x_test_raw = take_rows(data.x.view(), &parts.test);
    let scaling = fit_scaling(x_train_raw.view())?;
    let prepared = Prepared {
        x_train: apply_scaling_to(&scaling, x_train_raw.view(), config.angle_range)?,
        y_train: take_labels(&data.y, &parts.train),
        x_test: apply_scaling_to(&scaling, x_test_raw.view(), config.angle_range)?,
        y_test: take_labels(&data.y, &parts.test),
    };
    Ok((data, prepared))
}

/// Correlation-ranked tiers computed on the scaled training part.
fn default_tiers(config: &ExperimentConfig, x_train: ArrayView2<f64>, y_train: &[u8]) -> Result<TierAssignment> {
    let ordering = rank_by_label_correlation(x_train, y_train)?;
    assign_tiers(&ordering, x_train.ncols(), config.tier_size)
}

/// The tier partition `run_experiment` would use for this config and dataset.
pub fn compute_tiers(config: &ExperimentConfig, dataset: &Dataset) -> Result<TierAssignment> {
    config.validate()?;
    let (_, prepared) = prepare(config, dataset)?;
    default_tiers(config, prepared.x_train.view(), &prepared.y_train)
}

pub fn run_experiment(
    config: &ExperimentConfig,
    dataset: &Dataset,
    options: &RunOptions,
) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let (data, prepared) = prepare(config, dataset)?;
    let tier_assignment = match options.tiers {
        Some(t) => {
            if t.n_features != data.n_features() {
                return Err(QfiError::validation(format!(
                    "tier file covers {} features, dataset has {}",
                    t.n_features,
                    data.n_features()
                )));
            }
            t.clone()
        }
        None => default_tiers(config, prepared.x_train.view(), &prepared.y_train)?,
    };
    if let Some(dir) = options.kernel_dir {
        std::fs::create_dir_all(dir).map_err(|e| QfiError::io(dir, e))?;
    }

    let plan = ModelPlan {
        model: config.model,
        explainer: config.explainer,
        tiers: &tier_assignment,
        tiered: true,
    };
    let (primary, mut timings) = run_model(&plan, config, &prepared, options, started)?;

    let baseline = if config.model.is_quantum() {
        let all_features;
        let tiers = if config.classical_tiered {
            &tier_assignment
        } else {
            let d = data.n_features();
            all_features = assign_tiers(&(0..d).collect::<Vec<_>>(), d, d)?;
            &all_features
        };
        let plan = ModelPlan {
            model: ModelKind::Gbdt,
            explainer: config.classical_importance,
            tiers,
            tiered: config.classical_tiered,
        };
        let no_kernels = RunOptions {
            kernel_dir: None,
            ..*options
        };
        let (run, t) = run_model(&plan, config, &prepared, &no_kernels, started)?;
        timings.extend(t);
        Some(run)
    } else {
        None
    };

    let (sme_ranks, sme_dropped) = match options.sme {
        Some(sme) => {
            let aligned = align_sme_ranks(sme, &data.feature_names)?;
            (Some(aligned.ranks), aligned.dropped)
        }
        None => (None, Vec::new()),
    };

    let mut diversity = Vec::new();
    let runs: Vec<(&ModelRun, Option<&ModelRun>)> = match &baseline {
        Some(b) => vec![(&primary, Some(b)), (b, Some(&primary))],
        None => vec![(&primary, None)],
    };
    for (run, other) in runs {
        if other.is_none() && sme_ranks.is_none() {
            continue;
        }
        diversity.push(diversity_report(
            run.model_id.clone(),
            run.accuracy,
            &run.global_importance.scores,
            &run.ranks,
            other.map(|o| &o.ranks),
            sme_ranks.as_ref(),
        )?);
    }

    Ok(RunReport {
        config: config.clone(),
        feature_names: data.feature_names.clone(),
        n_rows: data.n_rows(),
        n_train: prepared.y_train.len(),
        n_test: prepared.y_test.len(),
        tier_assignment,
        primary,
        baseline,
        sme_ranks,
        sme_dropped,
        diversity,
        timing: Timing {
            total_s: started.elapsed().as_secs_f64(),
            tiers: timings,
        },
    })
}
