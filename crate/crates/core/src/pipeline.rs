//! End-to-end assessment runs: partition, per-cell OP and unastuteness
//! estimation, and assembly into a reliability result, in full-partition
//! and sampled-frame modes.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::assembly::{
    assemble_full, assemble_sampled, assumption, confidence_key, confidence_upper_bound,
    draw_balls, k_convergence, AssessmentMode, AssumptionRecord, AssumptionStatus,
    KConvergencePoint, ReliabilityResult,
};
use crate::classifier::{Classifier, TruthRule};
use crate::dataset::{ClassId, LabeledDataset, Metric, MixtureSpec, RSepConvention, RSeparation};
use crate::error::{PipelineError, RobustnessError};
use crate::estimate::{Estimate, EstimateMethod};
use crate::op_model::{
    build_sample_frame, cell_op, cell_op_quadrature, fit_kde, BandwidthPolicy, Ball, BootstrapKde,
    Kernel, SampleFrame,
};
use crate::partition::{
    build_partition, resolve_empty_label, CellIndex, CellStatus, Partition, VoteTieRule,
};
use crate::robustness::{
    acu, AcuMode, AstutenessEstimator, CellRobustnessQuery, ConditionalOp,
};

/// Where per-cell operational-profile mass comes from.
#[derive(Debug, Clone)]
pub enum OpSource {
    /// KDE fit to the dataset; variance from bootstrap resampling when a
    /// replicate count is given.
    Kde {
        kernel: Kernel,
        policy: BandwidthPolicy,
        reflect: bool,
        bootstrap: Option<usize>,
    },
    /// Closed-form mixture density; exact per-cell mass via midpoint
    /// quadrature when `quadrature` nodes per axis are given, otherwise
    /// center density times cell volume. Zero variance.
    AnalyticMixture {
        spec: MixtureSpec,
        quadrature: Option<usize>,
    },
    /// Every cell carries mass 1/m with zero variance (sampled mode:
    /// equal ball weights).
    Flat,
}

impl OpSource {
    fn tag(&self) -> &'static str {
        match self {
            OpSource::Kde { .. } => "kde",
            OpSource::AnalyticMixture { .. } => "mixture",
            OpSource::Flat => "flat",
        }
    }
}

/// How empty cells obtain their ground-truth label.
#[derive(Debug, Clone)]
pub enum GroundTruthSource {
    /// Majority vote over classifier predictions inside the cell.
    Vote { samples: usize, tie: VoteTieRule },
    /// A known truth rule evaluated at the cell center; used for
    /// estimator validation against analytic oracles.
    TruthRule(TruthRule),
}

/// Cell radius, either direct or as a fraction of the r-separation.
#[derive(Debug, Clone, Copy)]
pub enum EpsilonSpec {
    Fixed(f64),
    FractionOfR(f64),
}

#[derive(Debug, Clone)]
pub enum RunMode {
    Full,
    Sampled { k: usize },
    KGrid { grid: Vec<usize> },
}

#[derive(Debug, Clone)]
pub struct AssessConfig {
    pub epsilon: EpsilonSpec,
    pub convention: RSepConvention,
    pub metric: Metric,
    pub op: OpSource,
    pub truth: GroundTruthSource,
    /// Per-cell robustness sample budget.
    pub sample_budget: usize,
    pub alphas: Vec<f64>,
    pub mode: RunMode,
    pub seed: u64,
    /// Full mode refuses partitions above this cell count.
    pub max_full_cells: u128,
}

impl AssessConfig {
    pub fn defaults(mode: RunMode, seed: u64) -> Self {
        AssessConfig {
            epsilon: EpsilonSpec::FractionOfR(0.9),
            convention: RSepConvention::default(),
            metric: Metric::default(),
            op: OpSource::Kde {
                kernel: Kernel::Gaussian,
                policy: BandwidthPolicy::RuleOfThumb,
                reflect: false,
                bootstrap: Some(100),
            },
            truth: GroundTruthSource::Vote {
                samples: 30,
                tie: VoteTieRule::SmallestClassId,
            },
            sample_budget: 1000,
            alphas: vec![0.025],
            mode,
            seed,
            max_full_cells: 2_000_000,
        }
    }
}

/// One line of the JSON-lines cell report; covers both partition cells and
/// sampled frame balls.
#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub index: Vec<u32>,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<ClassId>,
    pub n_members: usize,
    /// The label came from voting or a truth rule rather than members;
    /// auditors can target these cells.
    pub empty_resolved: bool,
    pub op_mean: f64,
    pub op_var: f64,
    pub lambda_mean: f64,
    pub lambda_var: f64,
    pub method: EstimateMethod,
    pub n_s: usize,
}

/// Full machine-readable outcome of a run.
#[derive(Debug, Clone, Serialize)]
pub struct AssessReport {
    #[serde(flatten)]
    pub result: ReliabilityResult,
    pub epsilon: f64,
    pub cells_per_axis: Vec<u32>,
    /// Total cells in the partition (full mode) as a float to tolerate
    /// astronomically fine grids.
    pub total_cells: f64,
    /// Cells or balls actually evaluated.
    pub evaluated: usize,
    pub normal_cells: usize,
    pub empty_resolved_cells: usize,
    pub cross_boundary_cells: usize,
    pub r_separation: RSeparation,
    pub op_source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kde: Option<crate::op_model::KdeModelDoc>,
    pub warnings: Vec<String>,
}

/// Everything a run produces: the report, the per-cell records, and the
/// k-convergence series when a k grid was requested.
pub struct AssessOutcome {
    pub report: AssessReport,
    pub cells: Vec<CellRecord>,
    pub k_series: Option<Vec<KConvergencePoint>>,
}

/// Run the full pipeline on a dataset and classifier.
pub fn run_assess(
    cfg: &AssessConfig,
    ds: &LabeledDataset,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
) -> Result<AssessOutcome, PipelineError> {
    let rsep = crate::dataset::estimate_r_separation(ds, cfg.convention, cfg.metric)?;
    let epsilon = match cfg.epsilon {
        EpsilonSpec::Fixed(e) => e,
        EpsilonSpec::FractionOfR(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(PipelineError::Config(format!(
                    "epsilon fraction must lie in (0,1), got {f}"
                )));
            }
            f * rsep.r_hat
        }
    };
    let partition = build_partition(ds, &rsep, epsilon)?;
    match &cfg.mode {
        RunMode::Full => run_full(cfg, ds, classifier, estimator, &rsep, partition),
        RunMode::Sampled { k } => {
            run_sampled(cfg, ds, classifier, estimator, &rsep, partition, &[*k])
        }
        RunMode::KGrid { grid } => {
            run_sampled(cfg, ds, classifier, estimator, &rsep, partition, grid)
        }
    }
}

struct OpEvaluator<'a> {
    source: &'a OpSource,
    kde: Option<crate::op_model::KdeModel>,
    bootstrap: Option<BootstrapKde>,
    flat_mass: f64,
}

impl<'a> OpEvaluator<'a> {
    fn prepare(
        cfg: &'a AssessConfig,
        ds: &LabeledDataset,
        total_cells: f64,
    ) -> Result<Self, PipelineError> {
        let (kde, bootstrap) = match &cfg.op {
            OpSource::Kde {
                kernel,
                policy,
                reflect,
                bootstrap,
            } => {
                let model = fit_kde(ds, *kernel, policy.clone(), *reflect)?;
                let boot = match bootstrap {
                    Some(b) => Some(BootstrapKde::new(ds.n(), *b, cfg.seed)?),
                    None => None,
                };
                (Some(model), boot)
            }
            _ => (None, None),
        };
        Ok(OpEvaluator {
            source: &cfg.op,
            kde,
            bootstrap,
            flat_mass: 1.0 / total_cells,
        })
    }

    fn cell_estimate(&self, lo: &[f64], hi: &[f64], center: &[f64], v_c: f64) -> Estimate {
        match self.source {
            OpSource::Kde { .. } => cell_op(
                self.kde.as_ref().expect("kde prepared"),
                self.bootstrap.as_ref(),
                center,
                v_c,
            ),
            OpSource::AnalyticMixture { spec, quadrature } => match quadrature {
                Some(q) => cell_op_quadrature(&|x| spec.density(x), lo, hi, *q),
                None => Estimate::exact(spec.density(center) * v_c),
            },
            OpSource::Flat => Estimate::exact(self.flat_mass),
        }
    }

    /// Frame-ball weight at a dataset point.
    fn ball_weight(&self, point: &[f64], v_c: f64) -> f64 {
        match self.source {
            OpSource::Kde { .. } => {
                self.kde.as_ref().expect("kde prepared").density(point) * v_c
            }
            OpSource::AnalyticMixture { spec, .. } => spec.density(point) * v_c,
            OpSource::Flat => 1.0,
        }
    }

    fn doc(&self) -> Option<crate::op_model::KdeModelDoc> {
        self.kde.as_ref().map(|k| k.to_doc(None))
    }
}

fn run_full(
    cfg: &AssessConfig,
    ds: &LabeledDataset,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
    rsep: &RSeparation,
    partition: Partition,
) -> Result<AssessOutcome, PipelineError> {
    let spec = &partition.spec;
    let m = spec
        .total_cells()
        .filter(|&m| m <= cfg.max_full_cells)
        .ok_or_else(|| {
            PipelineError::Partition(crate::error::PartitionError::TooManyCells {
                m: spec.total_cells().unwrap_or(u128::MAX),
                cap: cfg.max_full_cells,
            })
        })?;
    let total_cells = m as f64;
    let op_eval = OpEvaluator::prepare(cfg, ds, total_cells)?;
    let indices: Vec<CellIndex> = spec.iter_indices().collect();

    let per_cell: Vec<(Estimate, Estimate, CellRecord)> = indices
        .par_iter()
        .map(|index| evaluate_cell(cfg, ds, classifier, estimator, &partition, &op_eval, index))
        .collect::<Result<_, PipelineError>>()?;

    let pairs: Vec<(Estimate, Estimate)> =
        per_cell.iter().map(|(op, l, _)| (*op, *l)).collect();
    let lambdas: Vec<Estimate> = per_cell.iter().map(|(_, l, _)| *l).collect();
    let records: Vec<CellRecord> = per_cell.into_iter().map(|(_, _, r)| r).collect();

    let pmi = assemble_full(&pairs)?;
    let acu_est = acu(&lambdas, AcuMode::FullPartition)?;
    let (ub, ub_clamped) = bounds(&pmi, &cfg.alphas)?;

    let normal_cells = records.iter().filter(|r| r.status == "normal").count();
    let empty_resolved_cells = records.iter().filter(|r| r.empty_resolved).count();
    let cross_cells = records.iter().filter(|r| r.status == "cross_boundary").count();

    let assumptions = ledger(cfg, rsep, cross_cells, empty_resolved_cells, false);
    let result = ReliabilityResult {
        mode: AssessmentMode::FullPartition,
        pmi,
        acu: acu_est,
        ub,
        bound_method: "normal_approximation".into(),
        ub_clamped,
        variance_clamped: false,
        k: None,
        seed: cfg.seed,
        assumptions,
    };
    let report = AssessReport {
        result,
        epsilon: spec.epsilon,
        cells_per_axis: spec.counts_per_axis.clone(),
        total_cells,
        evaluated: records.len(),
        normal_cells,
        empty_resolved_cells,
        cross_boundary_cells: cross_cells,
        r_separation: *rsep,
        op_source: cfg.op.tag().into(),
        kde: op_eval.doc(),
        warnings: partition.warnings.clone(),
    };
    Ok(AssessOutcome {
        report,
        cells: records,
        k_series: None,
    })
}

fn evaluate_cell(
    cfg: &AssessConfig,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
    partition: &Partition,
    op_eval: &OpEvaluator,
    index: &CellIndex,
) -> Result<(Estimate, Estimate, CellRecord), PipelineError> {
    let spec = &partition.spec;
    let center = spec.center(index);
    let (lo, hi) = spec.cell_box(index);
    let v_c = spec.cell_volume();
    let op = op_eval.cell_estimate(&lo, &hi, &center, v_c);

    let status = partition.status_of(index);
    let n_members = partition
        .cells
        .get(index)
        .map(|c| c.member_point_ids.len())
        .unwrap_or(0);

    let (status_tag, label, empty_resolved, lambda, n_s) = match status {
        CellStatus::CrossBoundary => {
            let lambda = crate::robustness::assign_cross_boundary(status)?;
            ("cross_boundary", None, false, lambda, 0)
        }
        CellStatus::Normal { label } => {
            let lambda = smc_for_cell(cfg, classifier, estimator, spec, index, &center, label)?;
            ("normal", Some(label), false, lambda, cfg.sample_budget)
        }
        CellStatus::Empty { .. } => {
            let resolved = match &cfg.truth {
                GroundTruthSource::Vote { samples, tie } => {
                    resolve_empty_label(spec, index, classifier, *samples, cfg.seed, *tie).label
                }
                GroundTruthSource::TruthRule(rule) => Some(rule.label(&center)),
            };
            match resolved {
                Some(label) => {
                    let lambda =
                        smc_for_cell(cfg, classifier, estimator, spec, index, &center, label)?;
                    ("empty", Some(label), true, lambda, cfg.sample_budget)
                }
                None => {
                    // Tie under the strict rule: conservative assignment.
                    let lambda = Estimate::new(1.0, 0.0, EstimateMethod::Assigned);
                    ("empty", None, true, lambda, 0)
                }
            }
        }
    };
    let record = CellRecord {
        index: index.0.clone(),
        status: status_tag.into(),
        label,
        n_members,
        empty_resolved,
        op_mean: op.mean,
        op_var: op.variance,
        lambda_mean: lambda.mean,
        lambda_var: lambda.variance,
        method: lambda.method,
        n_s,
    };
    Ok((op, lambda, record))
}

fn smc_for_cell(
    cfg: &AssessConfig,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
    spec: &crate::partition::CellSpec,
    index: &CellIndex,
    center: &[f64],
    ground_truth: ClassId,
) -> Result<Estimate, RobustnessError> {
    let query = CellRobustnessQuery {
        center: center.to_vec(),
        radius: spec.epsilon,
        ground_truth,
        conditional_op: ConditionalOp::Uniform,
        sample_budget: cfg.sample_budget,
        master_seed: cfg.seed,
        stream_index: index.stream_index(),
    };
    estimator.estimate(classifier, &query)
}

fn run_sampled(
    cfg: &AssessConfig,
    ds: &LabeledDataset,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
    rsep: &RSeparation,
    partition: Partition,
    k_grid: &[usize],
) -> Result<AssessOutcome, PipelineError> {
    let spec = &partition.spec;
    let total_cells = spec.total_cells().map(|m| m as f64).unwrap_or(f64::INFINITY);
    let op_eval = OpEvaluator::prepare(cfg, ds, total_cells)?;
    let v_c = spec.cell_volume();
    let frame = SampleFrame::new(
        (0..ds.n())
            .map(|i| {
                let p = ds.point(i);
                Ball {
                    center: p.to_vec(),
                    radius: spec.epsilon,
                    weight: op_eval.ball_weight(p, v_c),
                    label: ds.label(i),
                }
            })
            .collect(),
    );
    run_sampled_frame(cfg, classifier, estimator, rsep, &partition, frame, k_grid, &op_eval)
}

#[allow(clippy::too_many_arguments)]
fn run_sampled_frame(
    cfg: &AssessConfig,
    classifier: &dyn Classifier,
    estimator: &dyn AstutenessEstimator,
    rsep: &RSeparation,
    partition: &Partition,
    frame: SampleFrame,
    k_grid: &[usize],
    op_eval: &OpEvaluator,
) -> Result<AssessOutcome, PipelineError> {
    let k_max = *k_grid.last().ok_or_else(|| {
        PipelineError::Config("sampled mode needs at least one k".into())
    })?;

    // Pre-compute lambda per distinct drawn ball in parallel, then feed
    // the cached values through the serial convergence walk.
    let draws = draw_balls(&frame, k_max, cfg.seed)?;
    let mut distinct: Vec<usize> = draws.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let lambda_by_ball: BTreeMap<usize, Estimate> = distinct
        .par_iter()
        .map(|&i| {
            let ball = &frame.balls[i];
            let query = CellRobustnessQuery {
                center: ball.center.clone(),
                radius: ball.radius,
                ground_truth: ball.label,
                conditional_op: ConditionalOp::Uniform,
                sample_budget: cfg.sample_budget,
                master_seed: cfg.seed,
                stream_index: crate::rng::fold_index(&[i as u32]),
            };
            estimator.estimate(classifier, &query).map(|e| (i, e))
        })
        .collect::<Result<_, RobustnessError>>()?;

    let series = k_convergence(&frame, k_grid, cfg.seed, primary_alpha(cfg), |i, _| {
        Ok(lambda_by_ball[&i])
    })?;

    let k = k_max;
    let lambdas: Vec<Estimate> = draws.iter().map(|&i| lambda_by_ball[&i]).collect();
    let sampled = assemble_sampled(&frame, &draws, &lambdas)?;
    let acu_est = acu(&lambdas, AcuMode::Sampled)?;
    let (ub, ub_clamped) = bounds(&sampled.estimate, &cfg.alphas)?;

    let records: Vec<CellRecord> = distinct
        .iter()
        .map(|&i| {
            let ball = &frame.balls[i];
            let lambda = lambda_by_ball[&i];
            CellRecord {
                index: vec![i as u32],
                status: "ball".into(),
                label: Some(ball.label),
                n_members: 1,
                empty_resolved: false,
                op_mean: ball.weight,
                op_var: 0.0,
                lambda_mean: lambda.mean,
                lambda_var: lambda.variance,
                method: lambda.method,
                n_s: cfg.sample_budget,
            }
        })
        .collect();

    let assumptions = ledger(
        cfg,
        rsep,
        partition.cross_boundary_count(),
        0,
        true,
    );
    let result = ReliabilityResult {
        mode: AssessmentMode::Sampled,
        pmi: sampled.estimate,
        acu: acu_est,
        ub,
        bound_method: "normal_approximation".into(),
        ub_clamped,
        variance_clamped: sampled.variance_clamped,
        k: Some(k),
        seed: cfg.seed,
        assumptions,
    };
    let report = AssessReport {
        result,
        epsilon: partition.spec.epsilon,
        cells_per_axis: partition.spec.counts_per_axis.clone(),
        total_cells: partition
            .spec
            .total_cells()
            .map(|m| m as f64)
            .unwrap_or(f64::INFINITY),
        evaluated: distinct.len(),
        normal_cells: 0,
        empty_resolved_cells: 0,
        cross_boundary_cells: partition.cross_boundary_count(),
        r_separation: *rsep,
        op_source: cfg.op.tag().into(),
        kde: op_eval.doc(),
        warnings: partition.warnings.clone(),
    };
    Ok(AssessOutcome {
        report,
        cells: records,
        k_series: if k_grid.len() > 1 { Some(series) } else { None },
    })
}

fn primary_alpha(cfg: &AssessConfig) -> f64 {
    cfg.alphas.first().copied().unwrap_or(0.025)
}

fn bounds(
    estimate: &Estimate,
    alphas: &[f64],
) -> Result<(BTreeMap<String, f64>, bool), PipelineError> {
    let mut ub = BTreeMap::new();
    let mut clamped = false;
    for &alpha in alphas {
        let b = confidence_upper_bound(estimate, alpha)?;
        clamped |= b.clamped;
        ub.insert(confidence_key(alpha), b.value);
    }
    Ok((ub, clamped))
}

fn ledger(
    cfg: &AssessConfig,
    rsep: &RSeparation,
    cross_cells: usize,
    empty_resolved: usize,
    sampled: bool,
) -> Vec<AssumptionRecord> {
    let mut out = Vec::with_capacity(7);
    out.push(assumption(
        1,
        "r_stable_ground_truth",
        AssumptionStatus::Declared,
        format!(
            "r_hat={:.6e} ({:?}, {:?}) estimated from the dataset",
            rsep.r_hat, rsep.convention, rsep.metric
        ),
    ));
    let (op_status, op_note) = match cfg.op {
        OpSource::Kde { .. } => (
            AssumptionStatus::Declared,
            "dataset treated as a random sample of the operational profile; \
             not verifiable from data alone",
        ),
        _ => (
            AssumptionStatus::NotApplicable,
            "operational profile supplied analytically",
        ),
    };
    out.push(assumption(2, "dataset_represents_op", op_status, op_note));
    out.push(if cross_cells == 0 {
        assumption(
            3,
            "single_label_per_cell",
            AssumptionStatus::CheckedOk,
            "no cross-boundary cells observed",
        )
    } else {
        assumption(
            3,
            "single_label_per_cell",
            AssumptionStatus::Violated,
            format!("{cross_cells} cross-boundary cells assigned unastuteness 1"),
        )
    });
    out.push(match (&cfg.truth, empty_resolved) {
        (GroundTruthSource::TruthRule(_), _) => assumption(
            4,
            "model_beats_random_in_cell",
            AssumptionStatus::NotApplicable,
            "empty-cell labels taken from a known truth rule",
        ),
        (_, 0) => assumption(
            4,
            "model_beats_random_in_cell",
            AssumptionStatus::NotApplicable,
            "no empty cells required label voting",
        ),
        (_, n) => assumption(
            4,
            "model_beats_random_in_cell",
            AssumptionStatus::Declared,
            format!("{n} empty cells label-voted; flagged in the cell report for audit"),
        ),
    });
    out.push(assumption(
        5,
        "uniform_conditional_op",
        AssumptionStatus::Declared,
        "inputs inside a cell treated as uniformly distributed",
    ));
    out.push(if sampled {
        assumption(
            6,
            "independent_estimates",
            AssumptionStatus::NotApplicable,
            "sampled-mode estimator does not combine per-cell variances",
        )
    } else {
        assumption(
            6,
            "independent_estimates",
            AssumptionStatus::Declared,
            "cell OP and unastuteness treated as independent; covariances dropped",
        )
    });
    out.push(if sampled {
        assumption(
            7,
            "sampling_dominates_uncertainty",
            AssumptionStatus::Declared,
            "variance reflects the draw of k balls only; estimator variances excluded",
        )
    } else {
        assumption(
            7,
            "sampling_dominates_uncertainty",
            AssumptionStatus::NotApplicable,
            "full partition evaluated",
        )
    });
    out
}

/// Build a sample frame from a full partition's cells: one ball per cell,
/// weighted by its OP estimate and labeled by the resolved ground truth.
/// This realizes the view of the m cells as the sampling population.
pub fn frame_from_cells(
    spec: &crate::partition::CellSpec,
    cells: &[CellRecord],
) -> SampleFrame {
    let balls = cells
        .iter()
        .filter_map(|r| {
            r.label.map(|label| Ball {
                center: spec.center(&CellIndex(r.index.clone())),
                radius: spec.epsilon,
                weight: r.op_mean,
                label,
            })
        })
        .collect();
    SampleFrame::new(balls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{OracleClassifier, Region, TruthRule};
    use crate::dataset::{generate_synthetic, LabelRule, MixtureComponent};
    use crate::robustness::SmcEstimator;

    fn mixture() -> MixtureSpec {
        MixtureSpec {
            components: vec![
                MixtureComponent {
                    mean: vec![0.25, 0.5],
                    scale: vec![0.08, 0.12],
                    weight: 0.5,
                },
                MixtureComponent {
                    mean: vec![0.75, 0.5],
                    scale: vec![0.08, 0.12],
                    weight: 0.5,
                },
            ],
            label_rule: LabelRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
        }
    }

    fn oracle() -> OracleClassifier {
        OracleClassifier::new(
            "strip",
            2,
            TruthRule::Halfplane {
                normal: vec![1.0, 0.0],
                offset: 0.5,
            },
            Region::Box {
                lo: vec![0.2, 0.3],
                hi: vec![0.3, 0.7],
            },
        )
        .unwrap()
    }

    fn small_config(mode: RunMode) -> AssessConfig {
        let mut cfg = AssessConfig::defaults(mode, 7);
        cfg.epsilon = EpsilonSpec::Fixed(0.05);
        cfg.op = OpSource::AnalyticMixture {
            spec: mixture(),
            quadrature: None,
        };
        cfg.truth = GroundTruthSource::TruthRule(TruthRule::Halfplane {
            normal: vec![1.0, 0.0],
            offset: 0.5,
        });
        cfg.sample_budget = 200;
        cfg
    }

    #[test]
    fn full_run_produces_consistent_report() {
        let ds = generate_synthetic(&mixture(), 150, 3).unwrap();
        let cfg = small_config(RunMode::Full);
        let out = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        assert_eq!(out.report.result.mode, AssessmentMode::FullPartition);
        assert_eq!(out.report.evaluated, 400); // 20x20 cells
        assert!(out.report.result.pmi.mean > 0.0 && out.report.result.pmi.mean < 1.0);
        assert!(out.report.result.bounds_are_consistent());
        assert_eq!(out.report.result.assumptions.len(), 7);
        // pmi should roughly reflect the flip-region mass.
        assert!(out.report.result.pmi.mean < 0.6);
    }

    #[test]
    fn full_run_is_deterministic() {
        let ds = generate_synthetic(&mixture(), 100, 3).unwrap();
        let cfg = small_config(RunMode::Full);
        let a = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        let b = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        assert_eq!(a.report.result.pmi, b.report.result.pmi);
        assert_eq!(a.report.result.acu, b.report.result.acu);
    }

    #[test]
    fn sampled_run_reports_k() {
        let ds = generate_synthetic(&mixture(), 100, 5).unwrap();
        let cfg = small_config(RunMode::Sampled { k: 40 });
        let out = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        assert_eq!(out.report.result.mode, AssessmentMode::Sampled);
        assert_eq!(out.report.result.k, Some(40));
        assert!(out.report.result.pmi.variance >= 0.0);
    }

    #[test]
    fn kgrid_run_emits_series() {
        let ds = generate_synthetic(&mixture(), 100, 5).unwrap();
        let cfg = small_config(RunMode::KGrid {
            grid: vec![5, 10, 20],
        });
        let out = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        let series = out.k_series.unwrap();
        assert_eq!(series.len(), 3);
        assert_eq!(series.last().unwrap().k, 20);
    }

    #[test]
    fn flat_op_makes_pmi_equal_acu() {
        let ds = generate_synthetic(&mixture(), 120, 9).unwrap();
        let mut cfg = small_config(RunMode::Full);
        cfg.op = OpSource::Flat;
        let out = run_assess(&cfg, &ds, &oracle(), &SmcEstimator).unwrap();
        let diff = (out.report.result.pmi.mean - out.report.result.acu.mean).abs();
        assert!(diff <= 1e-12, "diff {diff}");
    }

    #[test]
    fn bad_epsilon_fraction_rejected() {
        let ds = generate_synthetic(&mixture(), 50, 9).unwrap();
        let mut cfg = small_config(RunMode::Full);
        cfg.epsilon = EpsilonSpec::FractionOfR(1.5);
        assert!(matches!(
            run_assess(&cfg, &ds, &oracle(), &SmcEstimator),
            Err(PipelineError::Config(_))
        ));
    }
}
