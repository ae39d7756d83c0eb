use std::fmt::Write as _;
use std::path::PathBuf;

use log::{info, warn};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::stages::{
    claim_output_dir, cost_matrix, evaluate_plan, load_dataset, prepare, read_plan, scale_cost, solve,
    write_features, write_plan, AccuracyReport, Layout, PlanSidecar,
};
use crate::cost::{pairwise_cost, Metric, DEFAULT_BLOCK_BUDGET};
use crate::dataset::{rotate_image, subsample_per_class, Image};
use crate::error::{Error, Result};
use crate::eval::{classical_mds, interclass_distance_stats, rotation_distance_grid, Separation};
use crate::io;
use crate::ot::{SolverKind, SolverParams, TransportPlan};
use crate::spectra::{embed_image, Representation};

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub files: Vec<PathBuf>,
    pub rows_a: usize,
    pub rows_b: usize,
}

/// Split, rotate and embed; writes one feature file per half and
/// representation under `<output>/features`.
pub fn cmd_embed(cfg: &ExperimentConfig) -> Result<EmbedOutcome> {
    let layout = Layout::new(&cfg.output.dir);
    claim_output_dir(&layout, &cfg.to_toml()?)?;
    let prepared = prepare(cfg, &layout)?;
    let files = write_features(&layout, &prepared)?;
    Ok(EmbedOutcome {
        files,
        rows_a: prepared.labels_a.len(),
        rows_b: prepared.labels_b.len(),
    })
}

/// Inputs of a standalone transport solve between two feature files.
#[derive(Debug, Clone)]
pub struct TransportArgs {
    pub features_a: PathBuf,
    pub features_b: PathBuf,
    pub plan: PathBuf,
    pub metric: Metric,
    pub solver: SolverKind,
    pub params: SolverParams,
    pub normalize_cost: bool,
    pub block_budget: usize,
}

impl TransportArgs {
    pub fn new(features_a: PathBuf, features_b: PathBuf, plan: PathBuf) -> Self {
        Self {
            features_a,
            features_b,
            plan,
            metric: Metric::L1,
            solver: SolverKind::Sinkhorn,
            params: SolverParams::default(),
            normalize_cost: false,
            block_budget: DEFAULT_BLOCK_BUDGET,
        }
    }
}

/// Cost, solve, and write the plan with its JSON sidecar. A plan that did
/// not converge is still written; check `diagnostics.converged`.
pub fn cmd_transport(args: &TransportArgs) -> Result<TransportPlan> {
    if !(args.params.epsilon > 0.0 && args.params.epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {}",
            args.params.epsilon
        )));
    }
    let (ha, a) = io::read_features(&args.features_a)?;
    let (hb, b) = io::read_features(&args.features_b)?;
    if (ha.radial_bins, ha.angular_bins) != (hb.radial_bins, hb.angular_bins) {
        return Err(Error::Shape("feature files come from different polar grids".into()));
    }
    let (cost, scale) = cost_matrix(a.view(), b.view(), args.metric, args.normalize_cost, args.block_budget)
        .map_err(|e| e.in_stage("cost"))?;
    let plan = solve(cost.view(), args.solver, &args.params).map_err(|e| e.in_stage("solve"))?;
    let sidecar = PlanSidecar {
        dataset: None,
        representation: None,
        metric: args.metric,
        epsilon: args.params.epsilon,
        cost_scale: scale,
        solver: args.solver,
        tol: args.params.tol,
        max_iter: args.params.max_iter,
        p: plan.p.clone(),
        q: plan.q.clone(),
        diagnostics: plan.diagnostics.clone(),
    };
    write_plan(&args.plan, &plan, &sidecar)?;
    Ok(plan)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub plan: PathBuf,
    pub source_labels: PathBuf,
    pub target_labels: PathBuf,
    /// Defaults to one more than the largest label seen.
    pub num_classes: Option<usize>,
    pub output_dir: PathBuf,
}

/// Accuracy JSON, confusion CSV and PGM, and per-class accuracy CSV.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<AccuracyReport> {
    let (gamma, sidecar) = read_plan(&args.plan)?;
    let src = io::read_labels(&args.source_labels)?;
    let dst = io::read_labels(&args.target_labels)?;
    let num_classes = args
        .num_classes
        .unwrap_or_else(|| src.iter().chain(&dst).max().map_or(0, |m| m + 1));
    let report = AccuracyReport {
        dataset: sidecar.dataset.clone(),
        metric: Some(sidecar.metric),
        representation: sidecar.representation,
        epsilon: Some(sidecar.epsilon),
        accuracy: 0.0,
        per_class_accuracy: Vec::new(),
    };
    evaluate_plan(gamma.view(), &src, &dst, num_classes, &args.output_dir, report)
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub representation: Representation,
    pub metric: Metric,
    pub epsilon: f64,
    pub direction: String,
    pub accuracy: f64,
    pub converged: bool,
    pub marginal_violation: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub rows: Vec<SummaryRow>,
    pub summary: PathBuf,
}

impl PipelineReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn accuracy(&self, representation: Representation, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.representation == representation && r.metric == metric)
            .map(|r| r.accuracy)
    }
}

pub const SUMMARY_HEADER: &str =
    "representation,metric,epsilon,direction,accuracy,converged,marginal_violation,iterations";

/// Split, rotate, embed, cost, solve and evaluate for every combination of
/// representation, metric and epsilon in `cfg`, then write
/// `summary.csv`. Existing artifacts in the output directory are reused.
pub fn cmd_pipeline(cfg: &ExperimentConfig) -> Result<PipelineReport> {
    let layout = Layout::new(&cfg.output.dir);
    claim_output_dir(&layout, &cfg.to_toml()?)?;
    let prepared = prepare(cfg, &layout)?;
    write_features(&layout, &prepared)?;

    let swap = cfg.split.swap_direction;
    let (src_labels, dst_labels) = if swap {
        (&prepared.labels_b, &prepared.labels_a)
    } else {
        (&prepared.labels_a, &prepared.labels_b)
    };
    let (rotated, plain) = if prepared.info.rotated_half_a {
        ("rotated", "unrotated")
    } else {
        ("unrotated", "unrotated")
    };
    let direction = if swap {
        format!("{plain}->{rotated}")
    } else {
        format!("{rotated}->{plain}")
    };

    let t = &cfg.transport;
    let mut rows = Vec::new();
    for half in &prepared.features {
        let repr = half.representation;
        let (x, y) = if swap { (&half.b, &half.a) } else { (&half.a, &half.b) };
        for &metric in &t.metrics {
            let cost_path = layout.cost(repr, metric);
            let raw = if cost_path.exists() {
                io::read_matrix(&cost_path).map_err(|e| e.in_stage("cost"))?
            } else {
                info!("cost {repr}/{metric}: {} x {}", x.nrows(), y.nrows());
                let (c, _) = cost_matrix(x.view(), y.view(), metric, false, t.block_budget)
                    .map_err(|e| e.in_stage("cost"))?;
                io::write_matrix(&cost_path, c.view()).map_err(|e| e.in_stage("cost"))?;
                c
            };
            let (cost, scale) = scale_cost(raw, t.normalize_cost)?;

            for &eps in &t.epsilons {
                let tag = Layout::tag(repr, metric, eps);
                let plan_path = layout.plan(&tag);
                let (gamma, diagnostics) = if plan_path.exists() {
                    let (g, s) = read_plan(&plan_path).map_err(|e| e.in_stage("solve"))?;
                    (g, s.diagnostics)
                } else {
                    info!("solving {tag} with {}", t.solver);
                    let params = cfg.solver_params(eps);
                    let plan = solve(cost.view(), t.solver, &params).map_err(|e| e.in_stage("solve"))?;
                    let sidecar = PlanSidecar {
                        dataset: Some(cfg.dataset.name.clone()),
                        representation: Some(repr),
                        metric,
                        epsilon: eps,
                        cost_scale: scale,
                        solver: t.solver,
                        tol: t.tol,
                        max_iter: t.max_iter,
                        p: plan.p.clone(),
                        q: plan.q.clone(),
                        diagnostics: plan.diagnostics.clone(),
                    };
                    write_plan(&plan_path, &plan, &sidecar).map_err(|e| e.in_stage("solve"))?;
                    (plan.gamma, plan.diagnostics)
                };
                if !diagnostics.converged {
                    warn!(
                        "{tag} did not converge: marginal violation {:e} after {} iterations",
                        diagnostics.marginal_violation, diagnostics.iterations
                    );
                }
                let report = AccuracyReport {
                    dataset: Some(cfg.dataset.name.clone()),
                    metric: Some(metric),
                    representation: Some(repr),
                    epsilon: Some(eps),
                    accuracy: 0.0,
                    per_class_accuracy: Vec::new(),
                };
                let report = evaluate_plan(
                    gamma.view(),
                    src_labels,
                    dst_labels,
                    prepared.info.num_classes,
                    &layout.eval_dir(&tag),
                    report,
                )
                .map_err(|e| e.in_stage("evaluate"))?;
                info!("{tag}: accuracy {:.4}", report.accuracy);
                rows.push(SummaryRow {
                    representation: repr,
                    metric,
                    epsilon: eps,
                    direction: direction.clone(),
                    accuracy: report.accuracy,
                    converged: diagnostics.converged,
                    marginal_violation: diagnostics.marginal_violation,
                    iterations: diagnostics.iterations,
                });
            }
        }
    }

    let summary = layout.summary();
    io::write_atomic(&summary, summary_csv(&rows).as_bytes())?;
    Ok(PipelineReport { rows, summary })
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.representation,
            r.metric,
            r.epsilon,
            r.direction,
            r.accuracy,
            r.converged,
            r.marginal_violation,
            r.iterations
        )
        .unwrap();
    }
    out
}

/// Sampling for the figure commands: `per_class` images of every class,
/// each rotated through all multiples of `step_degrees`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureArgs {
    pub per_class: usize,
    pub step_degrees: f64,
    pub metric: Metric,
    pub seed: u64,
}

impl FigureArgs {
    pub fn angles(&self) -> Vec<f64> {
        let count = (360.0 / self.step_degrees).round() as usize;
        (0..count).map(|i| i as f64 * self.step_degrees).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(Error::InvalidParameter("per_class must be positive".into()));
        }
        if !(self.step_degrees > 0.0 && self.step_degrees <= 360.0) {
            return Err(Error::InvalidParameter(format!(
                "angle step must be in (0, 360], got {}",
                self.step_degrees
            )));
        }
        Ok(())
    }
}

/// Images sampled per class from the normalized dataset, plus the fill
/// value for rotated-out pixels.
fn sample_by_class(cfg: &ExperimentConfig, args: &FigureArgs) -> Result<(Vec<Vec<Image>>, f64, (usize, usize))> {
    args.validate()?;
    let set = load_dataset(cfg)?;
    let sample = subsample_per_class(&set, args.per_class, args.seed)?;
    let fill = set.background();
    let dim = set
        .image_dim()
        .ok_or_else(|| Error::Degenerate("dataset is empty".into()))?;
    let mut by_class = vec![Vec::new(); sample.num_classes()];
    for (img, &l) in sample.images().iter().zip(sample.labels()) {
        by_class[l].push(img.clone());
    }
    Ok((by_class, fill, dim))
}

/// Rotated copies of every sampled image: features (one row each), labels
/// and angles, class-major then image then angle.
fn rotated_features(
    by_class: &[Vec<Image>],
    angles: &[f64],
    representation: Representation,
    cfg: &ExperimentConfig,
    dim: (usize, usize),
    fill: f64,
) -> Result<(Array2<f64>, Vec<usize>, Vec<f64>)> {
    use rayon::prelude::*;
    let polar = cfg.polar_config(dim);
    let jobs: Vec<(usize, &Image, f64)> = by_class
        .iter()
        .enumerate()
        .flat_map(|(k, imgs)| imgs.iter().flat_map(move |img| angles.iter().map(move |&a| (k, img, a))))
        .collect();
    let rows: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(_, img, angle)| {
            let rotated = rotate_image(&img.view(), angle, fill);
            embed_image(&rotated.view(), representation, polar, fill)
        })
        .collect::<Result<_>>()?;
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let x = Array2::from_shape_vec((jobs.len(), d), flat).expect("rows share a length");
    let labels = jobs.iter().map(|j| j.0).collect();
    let used_angles = jobs.iter().map(|j| j.2).collect();
    Ok((x, labels, used_angles))
}

#[derive(Debug, Clone)]
pub struct MdsOutcome {
    pub representation: Representation,
    pub coordinates: Array2<f64>,
    pub labels: Vec<usize>,
    pub file: PathBuf,
}

/// Two-dimensional classical MDS of rotated copies of sampled images, for
/// every representation in `cfg`; one CSV (`x,y,label,angle`) each under
/// `<output>/mds`.
pub fn cmd_mds(cfg: &ExperimentConfig, args: &FigureArgs) -> Result<Vec<MdsOutcome>> {
    let (by_class, fill, dim) = sample_by_class(cfg, args)?;
    let angles = args.angles();
    let mut out = Vec::new();
    for &repr in &cfg.embedding.representations {
        let (x, labels, used) = rotated_features(&by_class, &angles, repr, cfg, dim, fill)?;
        info!("MDS of {} {repr} features", x.nrows());
        let d = pairwise_cost(x.view(), x.view(), args.metric)?.values;
        // exact symmetry for the eigen-solver
        let d = (&d + &d.t()) / 2.0;
        let coordinates = classical_mds(d.view(), 2)?;
        let mut table = Array2::zeros((x.nrows(), 4));
        for i in 0..x.nrows() {
            table[[i, 0]] = coordinates[[i, 0]];
            table[[i, 1]] = coordinates[[i, 1]];
            table[[i, 2]] = labels[i] as f64;
            table[[i, 3]] = used[i];
        }
        let file = cfg.output.dir.join("mds").join(format!("{repr}_{}.csv", args.metric));
        io::write_csv(&file, table.view(), Some(&["x", "y", "label", "angle"]))?;
        out.push(MdsOutcome {
            representation: repr,
            coordinates,
            labels,
            file,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DistStatsOutcome {
    pub representation: Representation,
    /// One `A x A` rotation grid per class.
    pub grids: Vec<Array2<f64>>,
    /// Class-by-class mean distances over all rotated copies.
    pub interclass: Array2<f64>,
    pub separation: Separation,
}

/// Per-class rotation distance grids and inter/intra-class distance
/// statistics for every representation in `cfg`, as CSV and PGM under
/// `<output>/diststats`.
pub fn cmd_diststats(cfg: &ExperimentConfig, args: &FigureArgs) -> Result<Vec<DistStatsOutcome>> {
    let (by_class, fill, dim) = sample_by_class(cfg, args)?;
    let angles = args.angles();
    let root = cfg.output.dir.join("diststats");
    let metric = args.metric;
    let mut out = Vec::new();
    for &repr in &cfg.embedding.representations {
        let grids = rotation_distance_grid(&by_class, &angles, metric, repr, cfg.polar_config(dim), fill)?;
        for (k, g) in grids.iter().enumerate() {
            let stem = format!("grid_{repr}_{metric}_class{k}");
            io::write_csv(&root.join(format!("{stem}.csv")), g.view(), None)?;
            io::write_pgm(&root.join(format!("{stem}.pgm")), g.view())?;
        }
        let (x, labels, _) = rotated_features(&by_class, &angles, repr, cfg, dim, fill)?;
        let interclass = interclass_distance_stats(x.view(), &labels, metric, by_class.len())?;
        let stem = format!("interclass_{repr}_{metric}");
        io::write_csv(&root.join(format!("{stem}.csv")), interclass.view(), None)?;
        io::write_pgm(&root.join(format!("{stem}.pgm")), interclass.view())?;
        let separation = Separation::of(&interclass);
        out.push(DistStatsOutcome {
            representation: repr,
            grids,
            interclass,
            separation,
        });
    }
    Ok(out)
}
