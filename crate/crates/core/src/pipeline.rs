//! End-to-end orchestration: datasets, segment surrogates, surrogate
//! flowpipe, error model and calibration, confident flowpipe, validation.
//!
//! Every parallel stage is an order-preserving map followed by a sequential
//! fold, so artifacts are byte-identical for any thread count.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{
    calibrate, fit_error_model, inflating_hypercubes, log_volume_baseline, log_volume_pca, prediction_errors,
    CalibrationResult, ConformalError, ErrorModel, PredictionError, ResidualKind,
};
use crate::neural::{interpolate, train_segment, Mlp, NeuralError, SegmentPlan, TrainConfig, TrainReport};
use crate::reach::{network_reach, ReachError, ReachMode, ReachOptions};
use crate::sets::{BoundsMethod, Hyperbox, SetError, StarSet};
use crate::systems::{make_dataset, Role, SystemError, SystemSpec, TrajectoryDataset};

pub const FLOWPIPE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing artifact {}: run the `{phase}` phase first", path.display())]
    MissingArtifact { path: PathBuf, phase: Phase },
    #[error("invalid flowpipe: {0}")]
    Flowpipe(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Reach(#[from] ReachError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub description: String,
    pub system: SystemSection,
    pub plan: PlanSection,
    pub train: TrainSection,
    #[serde(default)]
    pub reach: ReachSection,
    pub conformal: ConformalSection,
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Name of a built-in benchmark; exclusive with `spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SystemSpec>,
    /// Noise covariance multiplier of the deployment system used for validation.
    #[serde(default = "one")]
    pub deployment_covariance_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub horizon: usize,
    /// Uniform segment length; ignored when `lengths` is given.
    #[serde(default = "one_usize")]
    pub segment_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    /// First state index (1-based) that must be covered.
    #[serde(default = "one_usize")]
    pub start_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub trajectories: usize,
    pub data_seed: u64,
    pub seed: u64,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    /// Train every `stride`-th active segment and interpolate the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolation_stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReachSection {
    pub mode: ReachMode,
    pub max_stars: usize,
    pub approx_bounds: BoundsMethod,
}

impl Default for ReachSection {
    fn default() -> Self {
        let o = ReachOptions::default();
        Self {
            mode: ReachMode::Exact,
            max_stars: o.max_stars,
            approx_bounds: o.approx_bounds,
        }
    }
}

impl ReachSection {
    pub fn options(&self) -> ReachOptions {
        ReachOptions {
            max_stars: self.max_stars,
            approx_bounds: self.approx_bounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalSection {
    pub calibration_trajectories: usize,
    pub data_seed: u64,
    pub delta: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_residual")]
    pub residual: ResidualKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub trials: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn default_learning_rate() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_batch_size() -> usize {
    TrainConfig::default().batch_size
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_validation_fraction() -> f64 {
    TrainConfig::default().validation_fraction
}
fn default_residual() -> ResidualKind {
    ResidualKind::Pca
}

impl RunConfig {
    /// Parses and validates; errors name the offending key path.
    pub fn from_json_str(s: &str) -> Result<Self, PipelineError> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            PipelineError::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| {
            PipelineError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |k: &str, m: String| Err(PipelineError::Config(format!("at `{k}`: {m}")));
        self.system_spec()?;
        let s = self.system.deployment_covariance_scale;
        if !(s > 0.0 && s.is_finite()) {
            return bad("system.deployment_covariance_scale", format!("must be > 0, got {s}"));
        }
        let plan = self.plan()?;
        if self.train.trajectories < 2 {
            return bad("train.trajectories", "need at least 2".into());
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return bad("train", "batch_size and epochs must be ≥ 1".into());
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            return bad("train.learning_rate", "must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.train.validation_fraction) {
            return bad("train.validation_fraction", "must lie in [0, 1)".into());
        }
        if self.train.hidden.contains(&0) {
            return bad("train.hidden", "widths must be ≥ 1".into());
        }
        if let Some(stride) = self.train.interpolation_stride {
            if stride < 2 {
                return bad("train.interpolation_stride", "must be ≥ 2".into());
            }
            let segs = plan.segments();
            if segs.iter().any(|sg| sg.len != segs[0].len) {
                return bad(
                    "train.interpolation_stride",
                    "interpolation needs equal active segment lengths".into(),
                );
            }
        }
        if self.reach.max_stars == 0 {
            return bad("reach.max_stars", "must be ≥ 1".into());
        }
        let c = &self.conformal;
        if c.calibration_trajectories == 0 {
            return bad("conformal.calibration_trajectories", "must be ≥ 1".into());
        }
        if !(c.delta > 0.0 && c.delta < 1.0) {
            return bad("conformal.delta", format!("must lie in (0, 1), got {}", c.delta));
        }
        if !(c.tau >= 0.0 && c.tau.is_finite()) {
            return bad("conformal.tau", format!("must be ≥ 0, got {}", c.tau));
        }
        if self.validate.trials == 0 {
            return bad("validate.trials", "must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn system_spec(&self) -> Result<SystemSpec, PipelineError> {
        let spec = match (&self.system.builtin, &self.system.spec) {
            (Some(name), None) => SystemSpec::builtin(name)
                .ok_or_else(|| PipelineError::Config(format!("at `system.builtin`: unknown system `{name}`")))?,
            (None, Some(spec)) => spec.clone(),
            _ => {
                return Err(PipelineError::Config(
                    "at `system`: give exactly one of `builtin` or `spec`".into(),
                ))
            }
        };
        spec.validate()
            .map_err(|e| PipelineError::Config(format!("at `system.spec`: {e}")))?;
        Ok(spec)
    }

    pub fn deployment_spec(&self) -> Result<SystemSpec, PipelineError> {
        Ok(self.system_spec()?.shift(self.system.deployment_covariance_scale)?)
    }

    pub fn plan(&self) -> Result<SegmentPlan, PipelineError> {
        let p = &self.plan;
        let plan = match &p.lengths {
            Some(l) => SegmentPlan::new(p.horizon, l.clone()),
            None => SegmentPlan::uniform(p.horizon, p.segment_length),
        }
        .and_then(|plan| plan.with_start_step(p.start_step))
        .map_err(|e| PipelineError::Config(format!("at `plan`: {e}")))?;
        Ok(plan)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            hidden: t.hidden.clone(),
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            validation_fraction: t.validation_fraction,
        }
    }
}

// ---------------------------------------------------------------------------
// Surrogates

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum SurrogateSource {
    Trained { report: TrainReport },
    Interpolated { lower: usize, upper: usize, lambda: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrainSummary {
    pub index: usize,
    #[serde(flatten)]
    pub source: SurrogateSource,
}

/// Trains one surrogate per active segment, or only every `stride`-th one
/// (plus the last) and fills the gaps by parameter interpolation.
pub fn train_surrogates(
    dataset: &TrajectoryDataset,
    plan: &SegmentPlan,
    cfg: &TrainConfig,
    stride: Option<usize>,
) -> Result<(Vec<Mlp>, Vec<SegmentTrainSummary>), PipelineError> {
    let segs = plan.segments();
    let last = segs.len() - 1;
    let anchors: Vec<usize> = match stride {
        None => (0..segs.len()).collect(),
        Some(s) => (0..segs.len()).filter(|p| p % s == 0 || *p == last).collect(),
    };
    let trained = anchors
        .par_iter()
        .map(|&p| train_segment(dataset, plan, segs[p].index, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut nets: Vec<Option<Mlp>> = vec![None; segs.len()];
    let mut summaries: Vec<Option<SegmentTrainSummary>> = vec![None; segs.len()];
    for (&p, (net, report)) in anchors.iter().zip(trained) {
        nets[p] = Some(net);
        summaries[p] = Some(SegmentTrainSummary {
            index: segs[p].index,
            source: SurrogateSource::Trained { report },
        });
    }
    if let Some(s) = stride {
        let folded: BTreeMap<usize, Mlp> = anchors
            .iter()
            .map(|&p| (p, nets[p].as_ref().expect("anchor trained").fold_normalizers()))
            .collect();
        for p in 0..segs.len() {
            if nets[p].is_some() {
                continue;
            }
            let lo = (p / s) * s;
            let hi = (lo + s).min(last);
            let lambda = (p - lo) as f64 / (hi - lo) as f64;
            nets[p] = Some(interpolate(&folded[&lo], &folded[&hi], lambda)?);
            summaries[p] = Some(SegmentTrainSummary {
                index: segs[p].index,
                source: SurrogateSource::Interpolated {
                    lower: segs[lo].index,
                    upper: segs[hi].index,
                    lambda,
                },
            });
        }
    }
    Ok((
        nets.into_iter().map(|n| n.expect("every segment filled")).collect(),
        summaries.into_iter().map(|s| s.expect("every segment filled")).collect(),
    ))
}

// ---------------------------------------------------------------------------
// Flowpipes

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowpipeKind {
    Surrogate,
    Confident,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowpipeSegment {
    pub index: usize,
    pub offset: usize,
    pub len: usize,
    pub stars: Vec<StarSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypercube: Option<StarSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationMeta {
    pub residual: ResidualKind,
    pub delta: f64,
    pub tau: f64,
    pub rank: usize,
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flowpipe {
    pub format_version: u32,
    pub kind: FlowpipeKind,
    pub mode: ReachMode,
    pub state_dim: usize,
    pub plan: SegmentPlan,
    pub segments: Vec<FlowpipeSegment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflation: Option<InflationMeta>,
}

impl Flowpipe {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Flowpipe(m));
        if self.format_version != FLOWPIPE_FORMAT_VERSION {
            return bad(format!("format version {} unsupported", self.format_version));
        }
        self.plan.validate()?;
        let segs = self.plan.segments();
        if segs.len() != self.segments.len() {
            return bad(format!("{} segments, plan has {}", self.segments.len(), segs.len()));
        }
        for (s, p) in self.segments.iter().zip(&segs) {
            if (s.index, s.offset, s.len) != (p.index, p.offset, p.len) {
                return bad(format!("segment {} does not match the plan", s.index));
            }
            let d = self.state_dim * s.len;
            if s.stars.iter().chain(&s.hypercube).any(|st| st.dim() != d) {
                return bad(format!("segment {} stars must have dimension {d}", s.index));
            }
            if (self.kind == FlowpipeKind::Confident) != s.hypercube.is_some() {
                return bad(format!("segment {}: hypercube presence does not match kind", s.index));
            }
        }
        if (self.kind == FlowpipeKind::Confident) != self.inflation.is_some() {
            return bad("inflation metadata does not match kind".into());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let fp: Flowpipe = read_json(path)?;
        fp.validate()?;
        Ok(fp)
    }

    /// Single whole-trajectory star; only defined when every segment holds
    /// exactly one star.
    pub fn concatenated(&self) -> Result<StarSet, PipelineError> {
        let parts: Vec<StarSet> = self
            .segments
            .iter()
            .map(|s| match s.stars.as_slice() {
                [one] => Ok(one.clone()),
                _ => Err(PipelineError::Flowpipe(format!(
                    "segment {} holds {} stars; concatenation needs exactly one",
                    s.index,
                    s.stars.len()
                ))),
            })
            .collect::<Result<_, _>>()?;
        Ok(StarSet::concatenate(&parts)?)
    }

    pub fn star_count(&self) -> usize {
        self.segments.iter().map(|s| s.stars.len()).sum()
    }
}

/// Reach sets of every active segment's surrogate over the initial box.
pub fn surrogate_flowpipe(
    nets: &[Mlp],
    plan: &SegmentPlan,
    initial: &Hyperbox,
    mode: ReachMode,
    opts: &ReachOptions,
) -> Result<Flowpipe, PipelineError> {
    let segs = plan.segments();
    if nets.len() != segs.len() {
        return Err(PipelineError::Flowpipe(format!(
            "{} surrogates for {} active segments",
            nets.len(),
            segs.len()
        )));
    }
    let n = initial.dim();
    for (net, s) in nets.iter().zip(&segs) {
        if net.output_dim() != n * s.len {
            return Err(PipelineError::Flowpipe(format!(
                "surrogate for segment {} outputs {} values, expected {}",
                s.index,
                net.output_dim(),
                n * s.len
            )));
        }
    }
    let input = StarSet::from_box(initial)?;
    let segments = nets
        .par_iter()
        .zip(segs.par_iter())
        .map(|(net, s)| {
            Ok(FlowpipeSegment {
                index: s.index,
                offset: s.offset,
                len: s.len,
                stars: network_reach(net, &input, mode, opts)?,
                hypercube: None,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(Flowpipe {
        format_version: FLOWPIPE_FORMAT_VERSION,
        kind: FlowpipeKind::Surrogate,
        mode,
        state_dim: n,
        plan: plan.clone(),
        segments,
        inflation: None,
    })
}

/// `X = X̄ ⊕ δX`, segment by segment.
pub fn confident_flowpipe(
    surrogate: &Flowpipe,
    hypercubes: &[StarSet],
    inflation: InflationMeta,
) -> Result<Flowpipe, PipelineError> {
    if surrogate.kind != FlowpipeKind::Surrogate {
        return Err(PipelineError::Flowpipe("can only inflate a surrogate flowpipe".into()));
    }
    if hypercubes.len() != surrogate.segments.len() {
        return Err(PipelineError::Flowpipe(format!(
            "{} hypercubes for {} segments",
            hypercubes.len(),
            surrogate.segments.len()
        )));
    }
    let segments = surrogate
        .segments
        .par_iter()
        .zip(hypercubes.par_iter())
        .map(|(s, h)| {
            Ok(FlowpipeSegment {
                stars: s
                    .stars
                    .iter()
                    .map(|st| st.minkowski_sum(h))
                    .collect::<Result<_, _>>()?,
                hypercube: Some(h.clone()),
                ..s.clone()
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(Flowpipe {
        kind: FlowpipeKind::Confident,
        segments,
        inflation: Some(inflation),
        ..surrogate.clone()
    })
}

/// Star lists with cached bounding boxes for fast rejection.
pub struct MembershipIndex<'a> {
    segments: Vec<Vec<(Hyperbox, &'a StarSet)>>,
}

const PREFILTER_TOL: f64 = 1e-6;

impl<'a> MembershipIndex<'a> {
    pub fn new(fp: &'a Flowpipe) -> Result<Self, PipelineError> {
        let segments = fp
            .segments
            .par_iter()
            .map(|s| {
                let mut out = Vec::with_capacity(s.stars.len());
                for st in &s.stars {
                    match st.bounds(BoundsMethod::Lp) {
                        Ok(b) => out.push((b, st)),
                        Err(SetError::EmptySet) => {}
                        Err(e) => return Err(e.into()),
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self { segments })
    }

    /// Whether `y` lies in the union of segment `pos`.
    pub fn contains(&self, pos: usize, y: &[f64]) -> bool {
        self.segments[pos]
            .iter()
            .any(|(b, st)| b.contains(y, PREFILTER_TOL) && st.contains(y))
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSummary {
    pub pca: f64,
    pub baseline: f64,
    pub pca_segments: Vec<f64>,
    pub baseline_segments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub trials: usize,
    pub hits: usize,
    pub coverage: f64,
    pub delta: f64,
    pub tau: f64,
    /// Trials violating each active segment.
    pub segment_violations: Vec<usize>,
    /// Trials whose first violation is at each active segment.
    pub first_violation: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_volumes: Option<VolumeSummary>,
}

/// Per-trial, per-segment hit flags for `trials` fresh deployment trajectories.
pub fn segment_hits(
    fp: &Flowpipe,
    spec: &SystemSpec,
    trials: usize,
    seed: u64,
) -> Result<Vec<Vec<bool>>, PipelineError> {
    if spec.state_dim != fp.state_dim {
        return Err(PipelineError::Flowpipe(format!(
            "deployment system has dimension {}, flowpipe {}",
            spec.state_dim, fp.state_dim
        )));
    }
    let data = make_dataset(spec, fp.plan.horizon(), trials, Role::Validation, seed)?;
    let index = MembershipIndex::new(fp)?;
    Ok(data
        .records
        .par_iter()
        .map(|r| {
            fp.segments
                .iter()
                .enumerate()
                .map(|(pos, s)| index.contains(pos, &r.states[s.offset..s.offset + s.len].concat()))
                .collect()
        })
        .collect())
}

/// Empirical coverage of a confident flowpipe over fresh trajectories of the
/// deployment system.
pub fn validate_coverage(
    fp: &Flowpipe,
    spec: &SystemSpec,
    trials: usize,
    seed: u64,
) -> Result<CoverageReport, PipelineError> {
    let meta = match (&fp.kind, &fp.inflation) {
        (FlowpipeKind::Confident, Some(m)) => m,
        _ => return Err(PipelineError::Flowpipe("coverage needs a confident flowpipe".into())),
    };
    if trials == 0 {
        return Err(PipelineError::Config("at `validate.trials`: must be ≥ 1".into()));
    }
    let hits = segment_hits(fp, spec, trials, seed)?;
    Ok(summarize_hits(&hits, fp.segments.len(), meta.delta, meta.tau))
}

fn summarize_hits(hits: &[Vec<bool>], segments: usize, delta: f64, tau: f64) -> CoverageReport {
    let mut segment_violations = vec![0; segments];
    let mut first_violation = vec![0; segments];
    let mut total = 0;
    for h in hits {
        let mut first = true;
        for (pos, &ok) in h.iter().enumerate() {
            if !ok {
                segment_violations[pos] += 1;
                if first {
                    first_violation[pos] += 1;
                    first = false;
                }
            }
        }
        total += first as usize;
    }
    CoverageReport {
        trials: hits.len(),
        hits: total,
        coverage: total as f64 / hits.len() as f64,
        delta,
        tau,
        segment_violations,
        first_violation,
        log_volumes: None,
    }
}

// ---------------------------------------------------------------------------
// Error model and calibration

/// Calibration of both residual kinds on the same calibration errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFile {
    pub selected: ResidualKind,
    pub pca: CalibrationResult,
    pub baseline: CalibrationResult,
}

impl CalibrationFile {
    pub fn get(&self, kind: ResidualKind) -> &CalibrationResult {
        match kind {
            ResidualKind::Pca => &self.pca,
            ResidualKind::Baseline => &self.baseline,
        }
    }

    pub fn inflation(&self, kind: ResidualKind) -> InflationMeta {
        let c = self.get(kind);
        InflationMeta {
            residual: kind,
            delta: c.delta,
            tau: c.tau,
            rank: c.rank,
            quantile: c.quantile,
        }
    }
}

pub fn dataset_errors(
    dataset: &TrajectoryDataset,
    nets: &[Mlp],
    plan: &SegmentPlan,
) -> Result<Vec<PredictionError>, PipelineError> {
    Ok(dataset
        .records
        .par_iter()
        .map(|r| prediction_errors(r, nets, plan))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Fits the error model on training errors and calibrates both residual kinds
/// on the calibration errors.
pub fn fit_and_calibrate(
    nets: &[Mlp],
    plan: &SegmentPlan,
    train: &TrajectoryDataset,
    calibration: &TrajectoryDataset,
    cfg: &ConformalSection,
) -> Result<(ErrorModel, CalibrationFile), PipelineError> {
    if train.role != Role::Train {
        return Err(NeuralError::WrongRole(train.role.to_string()).into());
    }
    if calibration.role != Role::Calibration {
        return Err(NeuralError::WrongRole(calibration.role.to_string()).into());
    }
    let mut model = fit_error_model(&dataset_errors(train, nets, plan)?, plan)?;
    let calib_errors = dataset_errors(calibration, nets, plan)?;
    let residuals = |kind| {
        calib_errors
            .iter()
            .map(|e| model.residual(kind, e))
            .collect::<Result<Vec<f64>, _>>()
    };
    let pca = calibrate(&residuals(ResidualKind::Pca)?, cfg.delta, cfg.tau)?;
    let baseline = calibrate(&residuals(ResidualKind::Baseline)?, cfg.delta, cfg.tau)?;
    let file = CalibrationFile {
        selected: cfg.residual,
        pca,
        baseline,
    };
    model.calibration = Some(file.get(cfg.residual).meta(cfg.residual));
    Ok((model, file))
}

pub fn volume_summary(model: &ErrorModel, cal: &CalibrationFile) -> VolumeSummary {
    let n = model.segments.len();
    let pca_segments: Vec<f64> = (0..n).map(|p| log_volume_pca(model, cal.pca.quantile, p)).collect();
    let baseline_segments: Vec<f64> = (0..n)
        .map(|p| log_volume_baseline(model.alpha_segment(p), cal.baseline.quantile))
        .collect();
    VolumeSummary {
        pca: pca_segments.iter().sum(),
        baseline: baseline_segments.iter().sum(),
        pca_segments,
        baseline_segments,
    }
}

pub fn inflate(
    surrogate: &Flowpipe,
    model: &ErrorModel,
    cal: &CalibrationFile,
    kind: ResidualKind,
) -> Result<Flowpipe, PipelineError> {
    let cubes = inflating_hypercubes(model, kind, cal.get(kind).quantile)?;
    confident_flowpipe(surrogate, &cubes, cal.inflation(kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub rank: usize,
    pub quantile: f64,
    pub log_volume: f64,
    pub segment_log_volumes: Vec<f64>,
    pub coverage: f64,
    pub hits: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub pca: MethodSummary,
    pub baseline: MethodSummary,
    /// `log vol(PCA) − log vol(baseline)`.
    pub log_volume_difference: f64,
    /// `vol(PCA) / vol(baseline)`.
    pub volume_ratio: f64,
}

/// PCA against baseline inflation on the same surrogate, calibration and
/// validation trajectories.
pub fn compare_methods(
    surrogate: &Flowpipe,
    model: &ErrorModel,
    cal: &CalibrationFile,
    deployment: &SystemSpec,
    trials: usize,
    seed: u64,
) -> Result<Comparison, PipelineError> {
    let vols = volume_summary(model, cal);
    let summary = |kind: ResidualKind, log_volume: f64, segs: Vec<f64>| -> Result<MethodSummary, PipelineError> {
        let fp = inflate(surrogate, model, cal, kind)?;
        let rep = validate_coverage(&fp, deployment, trials, seed)?;
        let c = cal.get(kind);
        Ok(MethodSummary {
            rank: c.rank,
            quantile: c.quantile,
            log_volume,
            segment_log_volumes: segs,
            coverage: rep.coverage,
            hits: rep.hits,
            trials: rep.trials,
        })
    };
    let pca = summary(ResidualKind::Pca, vols.pca, vols.pca_segments.clone())?;
    let baseline = summary(ResidualKind::Baseline, vols.baseline, vols.baseline_segments.clone())?;
    let diff = vols.pca - vols.baseline;
    Ok(Comparison {
        pca,
        baseline,
        log_volume_difference: diff,
        volume_ratio: diff.exp(),
    })
}

/// Writes `step,dim,lower,upper` rows from LP bounds of each segment's star union.
pub fn write_bounds_csv(fp: &Flowpipe, path: &Path) -> Result<usize, PipelineError> {
    let boxes = fp
        .segments
        .par_iter()
        .map(|s| {
            let d = fp.state_dim * s.len;
            let mut lo = vec![f64::INFINITY; d];
            let mut hi = vec![f64::NEG_INFINITY; d];
            for st in &s.stars {
                match st.bounds(BoundsMethod::Lp) {
                    Ok(b) => {
                        for i in 0..d {
                            lo[i] = lo[i].min(b.lower[i]);
                            hi[i] = hi[i].max(b.upper[i]);
                        }
                    }
                    Err(SetError::EmptySet) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            Ok((lo, hi))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "dim", "lower", "upper"])?;
    let mut rows = 0;
    for (s, (lo, hi)) in fp.segments.iter().zip(boxes) {
        for k in 0..s.len {
            for l in 0..fp.state_dim {
                let j = k * fp.state_dim + l;
                w.write_record([
                    (s.offset + k + 1).to_string(),
                    (l + 1).to_string(),
                    lo[j].to_string(),
                    hi[j].to_string(),
                ])?;
                rows += 1;
            }
        }
    }
    w.flush()?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Phases and artifacts

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Simulate,
    Train,
    Reach,
    Calibrate,
    Inflate,
    Validate,
    Report,
    Compare,
}

impl Phase {
    /// Phases chained by a full run, in order.
    pub const RUN: [Phase; 7] = [
        Phase::Simulate,
        Phase::Train,
        Phase::Reach,
        Phase::Calibrate,
        Phase::Inflate,
        Phase::Validate,
        Phase::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Simulate => "simulate",
            Phase::Train => "train",
            Phase::Reach => "reach",
            Phase::Calibrate => "calibrate",
            Phase::Inflate => "inflate",
            Phase::Validate => "validate",
            Phase::Report => "report",
            Phase::Compare => "compare",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Phase {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Phase::RUN
            .iter()
            .chain(&[Phase::Compare])
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| PipelineError::Config(format!("unknown phase `{s}`")))
    }
}

/// Artifact layout under an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    root: PathBuf,
}

impl Artifacts {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dataset(&self, role: Role) -> (PathBuf, PathBuf) {
        let d = self.root.join("data");
        (d.join(format!("{role}.csv")), d.join(format!("{role}.meta.json")))
    }

    pub fn model(&self, segment: usize) -> PathBuf {
        self.root.join("models").join(format!("segment_{segment:05}.json"))
    }

    pub fn train_report(&self) -> PathBuf {
        self.root.join("models").join("train_report.json")
    }

    pub fn surrogate_flowpipe(&self) -> PathBuf {
        self.root.join("surrogate_flowpipe.json")
    }

    pub fn error_model(&self) -> PathBuf {
        self.root.join("error_model.json")
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration.json")
    }

    pub fn confident_flowpipe(&self) -> PathBuf {
        self.root.join("confident_flowpipe.json")
    }

    pub fn coverage(&self) -> PathBuf {
        self.root.join("coverage.json")
    }

    pub fn bounds(&self) -> PathBuf {
        self.root.join("bounds.csv")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }

    pub fn comparison(&self) -> PathBuf {
        self.root.join("comparison.json")
    }

    /// Wall-clock record; the only non-deterministic artifact.
    pub fn timings(&self) -> PathBuf {
        self.root.join("timings.json")
    }

    fn require(&self, path: PathBuf, phase: Phase) -> Result<PathBuf, PipelineError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact { path, phase })
        }
    }

    fn load_dataset(&self, role: Role) -> Result<TrajectoryDataset, PipelineError> {
        let (csv, meta) = self.dataset(role);
        let csv = self.require(csv, Phase::Simulate)?;
        let meta = self.require(meta, Phase::Simulate)?;
        let ds = TrajectoryDataset::load(&csv, &meta)?;
        if ds.role != role {
            return Err(NeuralError::WrongRole(ds.role.to_string()).into());
        }
        Ok(ds)
    }

    fn load_models(&self, plan: &SegmentPlan) -> Result<Vec<Mlp>, PipelineError> {
        plan.segments()
            .iter()
            .map(|s| Ok(Mlp::load(&self.require(self.model(s.index), Phase::Train)?)?))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub description: String,
    pub system: String,
    pub mode: ReachMode,
    pub residual: ResidualKind,
    pub delta: f64,
    pub tau: f64,
    pub calibration_count: usize,
    pub rank: usize,
    pub quantile: f64,
    pub segments: usize,
    pub star_count: usize,
    pub bounds_rows: usize,
    pub coverage: CoverageReport,
}

/// Runs one phase, reading earlier artifacts and writing its own.
pub fn run_phase(cfg: &RunConfig, phase: Phase, art: &Artifacts) -> Result<(), PipelineError> {
    cfg.validate()?;
    let plan = cfg.plan()?;
    match phase {
        Phase::Simulate => {
            let spec = cfg.system_spec()?;
            let sets = [
                (Role::Train, cfg.train.trajectories, cfg.train.data_seed),
                (Role::Calibration, cfg.conformal.calibration_trajectories, cfg.conformal.data_seed),
            ];
            for (role, count, seed) in sets {
                let ds = make_dataset(&spec, plan.horizon(), count, role, seed)?;
                let (csv, meta) = art.dataset(role);
                ensure_parent(&csv)?;
                ds.save(&csv, &meta)?;
            }
        }
        Phase::Train => {
            let ds = art.load_dataset(Role::Train)?;
            let (nets, summaries) = train_surrogates(&ds, &plan, &cfg.train_config(), cfg.train.interpolation_stride)?;
            for (net, s) in nets.iter().zip(plan.segments()) {
                let p = art.model(s.index);
                ensure_parent(&p)?;
                net.save(&p)?;
            }
            write_json(&art.train_report(), &summaries)?;
        }
        Phase::Reach => {
            let nets = art.load_models(&plan)?;
            let spec = cfg.system_spec()?;
            let fp = surrogate_flowpipe(&nets, &plan, &spec.initial_set, cfg.reach.mode, &cfg.reach.options())?;
            fp.save(&art.surrogate_flowpipe())?;
        }
        Phase::Calibrate => {
            let nets = art.load_models(&plan)?;
            let train = art.load_dataset(Role::Train)?;
            let calib = art.load_dataset(Role::Calibration)?;
            let (model, cal) = fit_and_calibrate(&nets, &plan, &train, &calib, &cfg.conformal)?;
            model.save(&art.error_model())?;
            write_json(&art.calibration(), &cal)?;
        }
        Phase::Inflate => {
            let surrogate = Flowpipe::load(&art.require(art.surrogate_flowpipe(), Phase::Reach)?)?;
            let model = ErrorModel::load(&art.require(art.error_model(), Phase::Calibrate)?)?;
            let cal: CalibrationFile = read_json(&art.require(art.calibration(), Phase::Calibrate)?)?;
            inflate(&surrogate, &model, &cal, cal.selected)?.save(&art.confident_flowpipe())?;
        }
        Phase::Validate => {
            let fp = Flowpipe::load(&art.require(art.confident_flowpipe(), Phase::Inflate)?)?;
            let model = ErrorModel::load(&art.require(art.error_model(), Phase::Calibrate)?)?;
            let cal: CalibrationFile = read_json(&art.require(art.calibration(), Phase::Calibrate)?)?;
            let mut rep = validate_coverage(&fp, &cfg.deployment_spec()?, cfg.validate.trials, cfg.validate.seed)?;
            rep.log_volumes = Some(volume_summary(&model, &cal));
            write_json(&art.coverage(), &rep)?;
        }
        Phase::Report => {
            let fp = Flowpipe::load(&art.require(art.confident_flowpipe(), Phase::Inflate)?)?;
            let coverage: CoverageReport = read_json(&art.require(art.coverage(), Phase::Validate)?)?;
            let cal: CalibrationFile = read_json(&art.require(art.calibration(), Phase::Calibrate)?)?;
            let rows = write_bounds_csv(&fp, &art.bounds())?;
            let c = cal.get(cal.selected);
            let report = RunReport {
                description: cfg.description.clone(),
                system: cfg.system_spec()?.name,
                mode: fp.mode,
                residual: cal.selected,
                delta: c.delta,
                tau: c.tau,
                calibration_count: c.count,
                rank: c.rank,
                quantile: c.quantile,
                segments: fp.segments.len(),
                star_count: fp.star_count(),
                bounds_rows: rows,
                coverage,
            };
            write_json(&art.report(), &report)?;
        }
        Phase::Compare => {
            let surrogate = Flowpipe::load(&art.require(art.surrogate_flowpipe(), Phase::Reach)?)?;
            let model = ErrorModel::load(&art.require(art.error_model(), Phase::Calibrate)?)?;
            let cal: CalibrationFile = read_json(&art.require(art.calibration(), Phase::Calibrate)?)?;
            let cmp = compare_methods(
                &surrogate,
                &model,
                &cal,
                &cfg.deployment_spec()?,
                cfg.validate.trials,
                cfg.validate.seed,
            )?;
            write_json(&art.comparison(), &cmp)?;
        }
    }
    Ok(())
}

/// Runs `phase` and records its wall-clock seconds in the timings file.
pub fn run_timed(cfg: &RunConfig, phase: Phase, art: &Artifacts) -> Result<f64, PipelineError> {
    let start = Instant::now();
    run_phase(cfg, phase, art)?;
    let secs = start.elapsed().as_secs_f64();
    let path = art.timings();
    let mut timings: BTreeMap<String, f64> = if path.exists() {
        read_json(&path).unwrap_or_default()
    } else {
        BTreeMap::new()
    };
    timings.insert(phase.name().to_string(), secs);
    write_json(&path, &timings)?;
    Ok(secs)
}

/// Every phase of a full run, in order.
pub fn run_all(cfg: &RunConfig, art: &Artifacts) -> Result<(), PipelineError> {
    for phase in Phase::RUN {
        run_timed(cfg, phase, art)?;
    }
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::linear2d;
    use nalgebra::{DMatrix, DVector};

    fn constant_net(value: &[f64]) -> Mlp {
        let n = value.len();
        Mlp::from_layers(vec![DMatrix::zeros(n, 2)], vec![DVector::from_column_slice(value)]).unwrap()
    }

    fn identity_net() -> Mlp {
        Mlp::from_layers(vec![DMatrix::identity(2, 2)], vec![DVector::zeros(2)]).unwrap()
    }

    fn unit_box() -> Hyperbox {
        Hyperbox::new(vec![-1.0; 2], vec![1.0; 2]).unwrap()
    }

    fn cube(half: f64) -> StarSet {
        StarSet::from_box(&Hyperbox::new(vec![-half; 2], vec![half; 2]).unwrap()).unwrap()
    }

    fn meta() -> InflationMeta {
        InflationMeta {
            residual: ResidualKind::Pca,
            delta: 0.9,
            tau: 0.0,
            rank: 1,
            quantile: 1.0,
        }
    }

    fn confident(nets: &[Mlp], plan: &SegmentPlan, half: f64) -> Flowpipe {
        let s = surrogate_flowpipe(nets, plan, &unit_box(), ReachMode::Exact, &ReachOptions::default()).unwrap();
        let cubes = vec![cube(half); nets.len()];
        confident_flowpipe(&s, &cubes, meta()).unwrap()
    }

    const CONFIG: &str = r#"{
        "system": { "builtin": "linear2d" },
        "plan": { "horizon": 4 },
        "train": { "trajectories": 10, "data_seed": 1, "seed": 2 },
        "conformal": { "calibration_trajectories": 10, "data_seed": 3, "delta": 0.5 },
        "validate": { "trials": 5, "seed": 4 }
    }"#;

    #[test]
    fn config_errors_name_the_key() {
        assert!(RunConfig::from_json_str(CONFIG).is_ok());
        let unknown = CONFIG.replace(r#""seed": 2"#, r#""seed": 2, "sede": 3"#);
        let e = RunConfig::from_json_str(&unknown).unwrap_err().to_string();
        assert!(e.contains("`train.sede`"), "{e}");
        let typed = CONFIG.replace(r#""delta": 0.5"#, r#""delta": "high""#);
        let e = RunConfig::from_json_str(&typed).unwrap_err().to_string();
        assert!(e.contains("conformal.delta"), "{e}");
        let range = CONFIG.replace(r#""delta": 0.5"#, r#""delta": 1.5"#);
        let e = RunConfig::from_json_str(&range).unwrap_err().to_string();
        assert!(e.contains("conformal.delta"), "{e}");
    }

    #[test]
    fn constant_surrogate_gives_point_flowpipe() {
        let plan = SegmentPlan::unit(2).unwrap();
        let nets = vec![constant_net(&[0.3, -0.2]), constant_net(&[1.0, 2.0])];
        let fp = confident(&nets, &plan, 0.0);
        fp.validate().unwrap();
        let idx = MembershipIndex::new(&fp).unwrap();
        assert!(idx.contains(0, &[0.3, -0.2]));
        assert!(!idx.contains(0, &[0.3, -0.1]));
        assert!(idx.contains(1, &[1.0, 2.0]));
    }

    #[test]
    fn zero_hypercube_leaves_surrogate_unchanged() {
        let plan = SegmentPlan::unit(1).unwrap();
        let fp = confident(&[identity_net()], &plan, 0.0);
        let idx = MembershipIndex::new(&fp).unwrap();
        for (y, inside) in [([1.0, -1.0], true), ([0.2, 0.7], true), ([1.01, 0.0], false)] {
            assert_eq!(idx.contains(0, &y), inside, "{y:?}");
        }
    }

    #[test]
    fn box_plus_box_is_wider_box() {
        let plan = SegmentPlan::unit(1).unwrap();
        let fp = confident(&[identity_net()], &plan, 0.5);
        let idx = MembershipIndex::new(&fp).unwrap();
        assert!(idx.contains(0, &[1.4, -1.4]));
        assert!(!idx.contains(0, &[1.6, 0.0]));
        let tmp = tempfile::tempdir().unwrap();
        let rows = write_bounds_csv(&fp, &tmp.path().join("b.csv")).unwrap();
        assert_eq!(rows, 2);
        let text = fs::read_to_string(tmp.path().join("b.csv")).unwrap();
        assert_eq!(text.lines().nth(1), Some("1,1,-1.5,1.5"));
    }

    #[test]
    fn bounds_rows_cover_every_step_and_dimension() {
        let plan = SegmentPlan::uniform(6, 2).unwrap();
        let net = || Mlp::from_layers(vec![DMatrix::zeros(4, 2)], vec![DVector::zeros(4)]).unwrap();
        let fp = surrogate_flowpipe(&[net(), net(), net()], &plan, &unit_box(), ReachMode::Approx, &ReachOptions::default())
            .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        assert_eq!(write_bounds_csv(&fp, &tmp.path().join("b.csv")).unwrap(), 2 * 6);
    }

    #[test]
    fn coverage_extremes() {
        let spec = linear2d(0.9, 0.2, 0.05, 0.9);
        let plan = SegmentPlan::unit(3).unwrap();
        let nets = vec![constant_net(&[0.0, 0.0]); 3];
        let huge = validate_coverage(&confident(&nets, &plan, 100.0), &spec, 200, 9).unwrap();
        assert_eq!(huge.coverage, 1.0);
        assert_eq!(huge.segment_violations, vec![0, 0, 0]);
        let point = validate_coverage(&confident(&nets, &plan, 0.0), &spec, 200, 9).unwrap();
        assert_eq!(point.hits, 0);
        assert_eq!(point.first_violation, vec![200, 0, 0]);
    }

    #[test]
    fn hits_summary_counts_first_violation() {
        let hits = vec![vec![true, true, true], vec![true, false, false], vec![false, true, false]];
        let r = summarize_hits(&hits, 3, 0.9, 0.01);
        assert_eq!(r.hits, 1);
        assert_eq!(r.trials, 3);
        assert!((r.coverage - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.segment_violations, vec![1, 1, 2]);
        assert_eq!(r.first_violation, vec![1, 1, 0]);
    }

    #[test]
    fn strided_training_interpolates_between_anchors() {
        let spec = linear2d(0.9, 0.2, 0.05, 0.9);
        let ds = make_dataset(&spec, 5, 20, Role::Train, 1).unwrap();
        let plan = SegmentPlan::unit(5).unwrap();
        let cfg = TrainConfig {
            hidden: vec![3],
            epochs: 2,
            ..TrainConfig::default()
        };
        let (nets, sums) = train_surrogates(&ds, &plan, &cfg, Some(3)).unwrap();
        assert_eq!(nets.len(), 5);
        let lambdas: Vec<Option<f64>> = sums
            .iter()
            .map(|s| match s.source {
                SurrogateSource::Trained { .. } => None,
                SurrogateSource::Interpolated { lambda, .. } => Some(lambda),
            })
            .collect();
        // Anchors at positions 0, 3 and the last one, 4.
        assert_eq!(lambdas, vec![None, Some(1.0 / 3.0), Some(2.0 / 3.0), None, None]);
        match &sums[1].source {
            SurrogateSource::Interpolated { lower, upper, .. } => {
                assert_eq!((*lower, *upper), (sums[0].index, sums[3].index))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn phases_parse_and_report_missing_inputs() {
        for p in Phase::RUN.iter().chain(&[Phase::Compare]) {
            assert_eq!(p.name().parse::<Phase>().unwrap(), *p);
        }
        assert!("deploy".parse::<Phase>().is_err());
        let cfg = RunConfig::from_json_str(CONFIG).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let err = run_phase(&cfg, Phase::Reach, &Artifacts::new(tmp.path())).unwrap_err();
        assert!(
            matches!(err, PipelineError::MissingArtifact { phase: Phase::Train, .. }),
            "{err}"
        );
    }

    #[test]
    fn flowpipe_rejects_inconsistent_kind() {
        let plan = SegmentPlan::unit(1).unwrap();
        let mut fp = confident(&[identity_net()], &plan, 0.1);
        fp.inflation = None;
        assert!(fp.validate().is_err());
    }
}
