use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    latent_cost_interval, linear_scfe_cost_interval, linear_validity_condition,
    linear_weight_gap_bound, ntk_scfe_cost_interval, ntk_validity_with_gap, ntk_weight_gap,
    BoundInterval, BoundKind, NtkWeightGap, ValidityCondition,
};
use crate::datasets::{load_csv_split, make_synthetic, split, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Vector};
use crate::models::{decoder_lipschitz_upper, Classifier, LinearModel, Predictor, VaeModel};
use crate::recourse::{cchvae_search, gsm_search, scfe_search, Method, RecourseOutcome};
use crate::training::{train_linear, train_mlp, train_ntk_rounds, train_vae, VaeConfig};

use super::config::{DatasetSource, ExperimentConfig, ModelFamily};
use super::metrics::{adversarial_accuracy, metric_cost, metric_validity};

/// One row of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model_family: String,
    pub depth: usize,
    pub width: usize,
    pub method: Method,
    pub epsilon: f64,
    pub seed: u64,
    pub n_attempted: usize,
    pub validity: Option<f64>,
    pub mean_cost: Option<f64>,
    pub cost_diff_vs_eps0: Option<f64>,
    pub adv_accuracy: f64,
    pub bound_violations: usize,
    pub bound_vacuous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub epsilon: f64,
    pub seed: u64,
    pub instance_id: usize,
    pub interval: BoundInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub epsilon: f64,
    pub seed: u64,
    pub instance_id: usize,
    pub condition: ValidityCondition,
    /// Validity of the non-robust model's counterfactual under the non-robust model.
    pub valid_nr: bool,
    /// Validity of the robust model's counterfactual under the robust model.
    pub valid_r: bool,
}

/// Linear weight gap against the smallest per-instance bound over the training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearWeightGap {
    pub weight_gap: f64,
    pub bound_min: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub epsilon: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub test_accuracy: f64,
    pub adv_accuracy: f64,
    pub linear_weight_gap: Option<LinearWeightGap>,
    pub ntk_weight_gap: Option<NtkWeightGap>,
    pub decoder_lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    pub bounds: Vec<BoundRecord>,
    pub conditions: Vec<ConditionRecord>,
    pub cells: Vec<CellSummary>,
}

impl SweepReport {
    pub fn empty(config: ExperimentConfig) -> Self {
        Self {
            config,
            rows: Vec::new(),
            bounds: Vec::new(),
            conditions: Vec::new(),
            cells: Vec::new(),
        }
    }

    pub fn total_violations(&self) -> usize {
        self.bounds
            .iter()
            .filter(|b| b.interval.is_violation())
            .count()
    }

    pub fn total_vacuous(&self) -> usize {
        self.bounds.iter().filter(|b| b.interval.vacuous).count()
    }
}

type Outcomes = BTreeMap<Method, Vec<(usize, RecourseOutcome)>>;

struct SeedContext {
    seed: u64,
    train: Dataset,
    test: Dataset,
    baseline: Predictor,
    vae: Option<VaeModel>,
    baseline_outcomes: Outcomes,
}

struct CellOutput {
    summary: CellSummary,
    outcomes: Outcomes,
    bounds: Vec<BoundRecord>,
    conditions: Vec<ConditionRecord>,
}

fn cell_context(eps: f64, seed: u64) -> String {
    format!("epsilon={eps} seed={seed}")
}

/// Train/test split for one run seed.
pub fn load_run_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Dataset)> {
    match &cfg.dataset {
        DatasetSource::Synthetic { .. } => {
            let ds = make_synthetic(&cfg.dataset.synthetic_spec(seed).expect("synthetic"))?;
            split(&ds, cfg.test_fraction, seed)
        }
        DatasetSource::Csv { path, schema } => {
            load_csv_split(path, schema, cfg.test_fraction, seed)
        }
    }
}

/// Trains the configured model family at radius `eps`; the kernel family perturbs
/// its anchors against `baseline` when one is given.
pub fn train_family(
    cfg: &ExperimentConfig,
    train: &Dataset,
    eps: f64,
    seed: u64,
    baseline: Option<&Predictor>,
) -> Result<Predictor> {
    let tc = cfg.train.with_epsilon(eps).with_seed(seed);
    Ok(match cfg.model {
        ModelFamily::Linear => train_linear(train, &tc)?.into(),
        ModelFamily::Ntk { beta, rounds } => {
            train_ntk_rounds(&train.x, &train.y, beta, eps, baseline, rounds)?.into()
        }
        ModelFamily::Mlp { depth, width } => train_mlp(train, depth, width, &tc)?.into(),
    })
}

/// Indices of test rows labelled −1 by `model`, at most `cap` of them.
pub fn negative_indices<M: Classifier + ?Sized>(
    model: &M,
    test: &Dataset,
    cap: Option<usize>,
) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..test.len() {
        if model.label(&test.row(i))? < 0.0 {
            out.push(i);
            if cap.is_some_and(|c| out.len() >= c) {
                break;
            }
        }
    }
    Ok(out)
}

/// Runs one recourse method on one instance with the per-instance seed used by sweeps.
pub fn recourse_instance(
    cfg: &ExperimentConfig,
    method: Method,
    model: &Predictor,
    vae: Option<&VaeModel>,
    x: &Vector,
    seed: u64,
    instance: usize,
) -> Result<RecourseOutcome> {
    match method {
        Method::Scfe => scfe_search(model, x, &cfg.scfe),
        Method::Gsm => {
            let mut p = cfg.gsm;
            p.seed = derive_seed(derive_seed(p.seed, seed), instance as u64);
            gsm_search(model, x, &p)
        }
        Method::Cchvae => {
            let mut p = cfg.cchvae;
            p.seed = derive_seed(derive_seed(p.seed, seed), instance as u64);
            let vae = vae.ok_or_else(|| Error::param("vae", "CCHVAE needs a trained VAE"))?;
            cchvae_search(model, vae, x, &p)
        }
    }
}

fn run_methods(
    cfg: &ExperimentConfig,
    model: &Predictor,
    vae: Option<&VaeModel>,
    test: &Dataset,
    seed: u64,
    eps: f64,
) -> Result<Outcomes> {
    let idx = negative_indices(model, test, cfg.max_instances)?;
    let mut all = BTreeMap::new();
    for &method in &cfg.methods {
        let outs = idx
            .par_iter()
            .map(|&i| {
                recourse_instance(cfg, method, model, vae, &test.row(i), seed, i)
                    .map(|o| (i, o))
                    .map_err(|e| {
                        e.context(format!(
                            "{} method={method} instance={i}",
                            cell_context(eps, seed)
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        all.insert(method, outs);
    }
    Ok(all)
}

/// VAE settings for one run seed.
pub fn vae_config_for(cfg: &ExperimentConfig, seed: u64) -> VaeConfig {
    VaeConfig {
        seed: derive_seed(cfg.vae.seed, seed),
        ..cfg.vae
    }
}

fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let ctx = |e: Error| e.context(cell_context(0.0, seed));
    let (train, test) = load_run_data(cfg, seed).map_err(ctx)?;
    let baseline = train_family(cfg, &train, 0.0, seed, None).map_err(ctx)?;
    let vae = if cfg.methods.contains(&Method::Cchvae) {
        Some(
            train_vae(&train, &vae_config_for(cfg, seed))
                .map_err(|e| e.context(format!("vae seed={seed}")))?,
        )
    } else {
        None
    };
    let baseline_outcomes = run_methods(cfg, &baseline, vae.as_ref(), &test, seed, 0.0)?;
    Ok(SeedContext {
        seed,
        train,
        test,
        baseline,
        vae,
        baseline_outcomes,
    })
}

fn accuracy<M: Classifier + ?Sized>(model: &M, ds: &Dataset) -> Result<f64> {
    let mut correct = 0;
    for i in 0..ds.len() {
        if model.label(&ds.row(i))? == ds.y[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// `‖ζ‖` of the closed-form SCFE step; a zero weight vector yields no step.
fn linear_step(model: &LinearModel, x: &Vector, s: f64, lambda: f64) -> Vector {
    let wn2 = model.w.norm_squared();
    if wn2 == 0.0 {
        return x.clone();
    }
    x + &model.w * ((s - model.w.dot(x)) / (lambda + wn2))
}

fn linear_checks(
    cfg: &ExperimentConfig,
    ctx: &SeedContext,
    nr: &LinearModel,
    r: &LinearModel,
    eps: f64,
) -> Result<(Vec<BoundRecord>, Vec<ConditionRecord>, LinearWeightGap)> {
    let (s, lambda) = (cfg.scfe.target, cfg.scfe.lambda_init);
    let (n_ep, lr) = (cfg.train.epochs, cfg.train.learning_rate);
    let mut bounds = Vec::new();
    let mut conditions = Vec::new();
    for i in 0..ctx.test.len() {
        let x = ctx.test.row(i);
        let cf_nr = linear_step(nr, &x, s, lambda);
        let cf_r = linear_step(r, &x, s, lambda);
        let empirical = (&cf_nr - &x).norm() - (&cf_r - &x).norm();
        let delta = linear_weight_gap_bound(&x, n_ep, lr, eps)?;
        bounds.push(BoundRecord {
            epsilon: eps,
            seed: ctx.seed,
            instance_id: i,
            interval: linear_scfe_cost_interval(&nr.w, delta, lambda, empirical)?,
        });
        conditions.push(ConditionRecord {
            epsilon: eps,
            seed: ctx.seed,
            instance_id: i,
            condition: linear_validity_condition(&nr.w, delta, &cf_nr, &cf_r)?,
            valid_nr: nr.label(&cf_nr)? > 0.0,
            valid_r: r.label(&cf_r)? > 0.0,
        });
    }
    let mut bound_min = f64::INFINITY;
    for i in 0..ctx.train.len() {
        bound_min = bound_min.min(linear_weight_gap_bound(&ctx.train.row(i), n_ep, lr, eps)?);
    }
    let weight_gap = (&nr.w - &r.w).norm();
    Ok((
        bounds,
        conditions,
        LinearWeightGap {
            weight_gap,
            bound_min,
            holds: weight_gap <= bound_min,
        },
    ))
}

fn paired<'a>(
    a: &'a [(usize, RecourseOutcome)],
    b: &'a [(usize, RecourseOutcome)],
) -> impl Iterator<Item = (usize, &'a RecourseOutcome, &'a RecourseOutcome)> {
    let lookup: BTreeMap<usize, &RecourseOutcome> = b.iter().map(|(i, o)| (*i, o)).collect();
    a.iter()
        .filter_map(move |(i, o)| lookup.get(i).map(|r| (*i, o, *r)))
}

fn run_cell(cfg: &ExperimentConfig, ctx: &SeedContext, eps: f64) -> Result<CellOutput> {
    let seed = ctx.seed;
    let wrap = |e: Error| e.context(cell_context(eps, seed));
    let model = if eps == 0.0 {
        ctx.baseline.clone()
    } else {
        train_family(cfg, &ctx.train, eps, seed, Some(&ctx.baseline)).map_err(wrap)?
    };
    let outcomes = if eps == 0.0 {
        ctx.baseline_outcomes.clone()
    } else {
        run_methods(cfg, &model, ctx.vae.as_ref(), &ctx.test, seed, eps)?
    };

    let mut bounds = Vec::new();
    let mut conditions = Vec::new();
    let mut linear_gap = None;
    let mut ntk_gap = None;

    if cfg.methods.contains(&Method::Scfe) {
        match (&ctx.baseline, &model) {
            (Predictor::Linear(nr), Predictor::Linear(r)) => {
                let (b, c, g) = linear_checks(cfg, ctx, nr, r, eps).map_err(wrap)?;
                bounds.extend(b);
                conditions.extend(c);
                linear_gap = Some(g);
            }
            (Predictor::Ntk(nr), Predictor::Ntk(r)) => {
                let gap = ntk_weight_gap(nr, r).map_err(wrap)?;
                let (a, b) = (
                    &ctx.baseline_outcomes[&Method::Scfe],
                    &outcomes[&Method::Scfe],
                );
                for (i, o_nr, o_r) in paired(a, b) {
                    let x = ctx.test.row(i);
                    let inst =
                        |e: Error| e.context(format!("{} instance={i}", cell_context(eps, seed)));
                    if o_nr.valid && o_r.valid {
                        let empirical = o_nr.cost.unwrap() - o_r.cost.unwrap();
                        bounds.push(BoundRecord {
                            epsilon: eps,
                            seed,
                            instance_id: i,
                            interval: ntk_scfe_cost_interval(nr, r, &x, empirical).map_err(inst)?,
                        });
                    }
                    if let (Some(cf_nr), Some(cf_r)) = (&o_nr.x_cf, &o_r.x_cf) {
                        conditions.push(ConditionRecord {
                            epsilon: eps,
                            seed,
                            instance_id: i,
                            condition: ntk_validity_with_gap(nr, r, &gap, cf_nr, cf_r)
                                .map_err(inst)?,
                            valid_nr: o_nr.valid,
                            valid_r: o_r.valid,
                        });
                    }
                }
                ntk_gap = Some(gap);
            }
            _ => {}
        }
    }

    let lipschitz = ctx.vae.as_ref().map(decoder_lipschitz_upper);
    if let (Some(l_g), Some(a), Some(b)) = (
        lipschitz,
        ctx.baseline_outcomes.get(&Method::Cchvae),
        outcomes.get(&Method::Cchvae),
    ) {
        for (i, o_nr, o_r) in paired(a, b) {
            if let (Some(r_nr), Some(r_r), true, true) =
                (o_nr.latent_radius, o_r.latent_radius, o_nr.valid, o_r.valid)
            {
                let empirical = o_nr.cost.unwrap() - o_r.cost.unwrap();
                bounds.push(BoundRecord {
                    epsilon: eps,
                    seed,
                    instance_id: i,
                    interval: latent_cost_interval(l_g, r_nr, r_r, empirical).map_err(wrap)?,
                });
            }
        }
    }

    let summary = CellSummary {
        epsilon: eps,
        seed,
        n_train: ctx.train.len(),
        n_test: ctx.test.len(),
        test_accuracy: accuracy(&model, &ctx.test).map_err(wrap)?,
        adv_accuracy: adversarial_accuracy(&model, &ctx.test, cfg.attack_epsilon).map_err(wrap)?,
        linear_weight_gap: linear_gap,
        ntk_weight_gap: ntk_gap,
        decoder_lipschitz: lipschitz,
    };
    Ok(CellOutput {
        summary,
        outcomes,
        bounds,
        conditions,
    })
}

fn bound_kinds(method: Method) -> &'static [BoundKind] {
    match method {
        Method::Scfe => &[BoundKind::LinearScfe, BoundKind::NtkScfe],
        Method::Gsm => &[],
        Method::Cchvae => &[BoundKind::Cchvae],
    }
}

/// Runs the full protocol: a baseline per seed, one robust model per `(ε, seed)`,
/// every configured recourse method on the negatively predicted test
/// instances, and every applicable bound check. Output order is fixed by the
/// configuration, never by scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let contexts = cfg
        .seeds
        .par_iter()
        .map(|&s| prepare_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..contexts.len())
        .flat_map(|c| (0..cfg.epsilons.len()).map(move |e| (c, e)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(c, e)| run_cell(cfg, &contexts[c], cfg.epsilons[e]).map(|out| ((c, e), out)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let (depth, width) = cfg.model.shape();
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for (e, &eps) in cfg.epsilons.iter().enumerate() {
            for (c, ctx) in contexts.iter().enumerate() {
                let cell = &cells[&(c, e)];
                let base = &cells[&(c, 0)];
                let outs: Vec<RecourseOutcome> = cell.outcomes[&method]
                    .iter()
                    .map(|(_, o)| o.clone())
                    .collect();
                let base_outs: Vec<RecourseOutcome> = base.outcomes[&method]
                    .iter()
                    .map(|(_, o)| o.clone())
                    .collect();
                let mean_cost = metric_cost(&outs);
                let cost_diff = match (mean_cost, metric_cost(&base_outs)) {
                    (Some(a), Some(b)) => Some(a - b),
                    _ => None,
                };
                let kinds = bound_kinds(method);
                let relevant = cell
                    .bounds
                    .iter()
                    .filter(|b| kinds.contains(&b.interval.kind));
                let (mut violations, mut vacuous) = (0, 0);
                for b in relevant {
                    violations += b.interval.is_violation() as usize;
                    vacuous += b.interval.vacuous as usize;
                }
                rows.push(ResultRow {
                    dataset: cfg.name.clone(),
                    model_family: cfg.model.name().to_string(),
                    depth,
                    width,
                    method,
                    epsilon: eps,
                    seed: ctx.seed,
                    n_attempted: outs.len(),
                    validity: if outs.is_empty() {
                        None
                    } else {
                        Some(metric_validity(&outs)?)
                    },
                    mean_cost,
                    cost_diff_vs_eps0: cost_diff,
                    adv_accuracy: cell.summary.adv_accuracy,
                    bound_violations: violations,
                    bound_vacuous: vacuous,
                });
            }
        }
    }

    let mut report = SweepReport::empty(cfg.clone());
    report.rows = rows;
    for (_, cell) in cells {
        report.bounds.extend(cell.bounds);
        report.conditions.extend(cell.conditions);
        report.cells.push(cell.summary);
    }
    Ok(report)
}
