use nalgebra::DMatrix;
use reclab_core::bounds::{linear_scfe_cost_interval, linear_weight_gap_bound};
use reclab_core::datasets::{make_synthetic, split, Dataset, SyntheticSpec};
use reclab_core::harness::{adversarial_accuracy, DEFAULT_EPSILONS};
use reclab_core::harness::{
    emit_report, monotone_with_tolerance, read_results, run_sweep, ExperimentConfig, ModelFamily,
};
use reclab_core::models::Classifier;
use reclab_core::recourse::{
    cchvae_search, gsm_search, scfe_closed_form, scfe_search, CchvaeParams, GsmParams, Method,
};
use reclab_core::training::{train_linear, train_mlp, train_vae, TrainConfig, VaeConfig};

fn blobs(n: usize, d: usize, sep: f64, noise: f64, seed: u64) -> Dataset {
    make_synthetic(&SyntheticSpec::new(n, d, sep, noise, seed)).unwrap()
}

fn total_variance(ds: &Dataset) -> f64 {
    let mean = ds.x.row_mean();
    (0..ds.len())
        .map(|i| (ds.x.row(i) - &mean).norm_squared())
        .sum::<f64>()
        / ds.len() as f64
}

/// Mean squared residual of the best rank-`k` affine reconstruction.
fn pca_error(ds: &Dataset, k: usize) -> f64 {
    let mean = ds.x.row_mean();
    let centered = DMatrix::from_fn(ds.len(), ds.dim(), |i, j| ds.x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / ds.len() as f64;
    let mut eig: Vec<f64> = cov.symmetric_eigen().eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    eig[..ds.dim() - k].iter().sum()
}

#[test]
fn vae_beats_mean_predictor_and_tracks_pca() {
    let ds = blobs(150, 3, 2.0, 0.5, 4);
    let (train, test) = split(&ds, 0.2, 4).unwrap();
    let vae = train_vae(&train, &VaeConfig::default()).unwrap();
    assert_eq!(vae.latent_dim, 2);
    let errs: Vec<f64> = (0..test.len())
        .map(|i| vae.reconstruction_error(&test.row(i)).unwrap())
        .collect();
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    assert!(
        mean < total_variance(&test),
        "{mean} vs {}",
        total_variance(&test)
    );
    assert!(
        mean <= 2.0 * pca_error(&test, 2),
        "{mean} vs pca {}",
        pca_error(&test, 2)
    );
    assert!(mean <= vae.val_recon_mean + 3.0 * vae.val_recon_std);
}

#[test]
fn cchvae_is_valid_on_blobs_with_linear_model() {
    let ds = blobs(300, 2, 0.5, 0.5, 11);
    let (train, test) = split(&ds, 0.5, 11).unwrap();
    let model = train_linear(&train, &TrainConfig::default()).unwrap();
    let vae = train_vae(&train, &VaeConfig::default()).unwrap();
    let negatives: Vec<usize> = (0..test.len())
        .filter(|&i| model.label(&test.row(i)).unwrap() < 0.0)
        .take(100)
        .collect();
    assert_eq!(negatives.len(), 100);
    let mut valid = 0;
    for (k, &i) in negatives.iter().enumerate() {
        let p = CchvaeParams {
            seed: k as u64,
            ..Default::default()
        };
        let o = cchvae_search(&model, &vae, &test.row(i), &p).unwrap();
        if o.valid {
            valid += 1;
            let radii_ok = o.latent_radius.unwrap() == p.radius_at(o.iterations - 1);
            assert!(radii_ok);
        }
    }
    assert!(valid >= 90, "{valid}/100");
}

#[test]
fn valid_outcomes_recheck_and_costs_recompute() {
    let ds = blobs(100, 2, 2.0, 0.5, 5);
    let (train, test) = split(&ds, 0.3, 5).unwrap();
    let mlp = train_mlp(&train, 2, 4, &TrainConfig::default()).unwrap();
    let lin = train_linear(&train, &TrainConfig::default()).unwrap();
    for i in 0..test.len() {
        let x = test.row(i);
        for (model, name) in [
            (&mlp as &dyn Classifier, "mlp"),
            (&lin as &dyn Classifier, "linear"),
        ] {
            if model.label(&x).unwrap() > 0.0 {
                continue;
            }
            let outs = [
                scfe_search(model, &x, &Default::default()).unwrap(),
                gsm_search(
                    model,
                    &x,
                    &GsmParams {
                        seed: i as u64,
                        ..Default::default()
                    },
                )
                .unwrap(),
            ];
            for o in outs {
                if let Some(cf) = &o.x_cf {
                    assert!(((cf - &x).norm() - o.cost.unwrap()).abs() <= 1e-12);
                }
                if o.valid {
                    assert_eq!(
                        model.label(o.x_cf.as_ref().unwrap()).unwrap(),
                        1.0,
                        "{name} {}",
                        o.method
                    );
                }
            }
        }
    }
}

#[test]
fn closed_form_pairs_stay_inside_linear_interval() {
    let ds = blobs(150, 2, 6.0, 1.5, 9);
    let (train, test) = split(&ds, 0.5, 9).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        learning_rate: 0.05,
        ..Default::default()
    };
    let nr = train_linear(&train, &cfg).unwrap();
    let r = train_linear(&train, &cfg.with_epsilon(0.1)).unwrap();
    let mut non_vacuous = 0;
    for i in 0..test.len() {
        let x = test.row(i);
        let delta = linear_weight_gap_bound(&x, cfg.epochs, cfg.learning_rate, 0.1).unwrap();
        let a = scfe_closed_form(&nr, &x, 0.405, 1.0).unwrap().cost.unwrap();
        let b = scfe_closed_form(&r, &x, 0.405, 1.0).unwrap().cost.unwrap();
        let iv = linear_scfe_cost_interval(&nr.w, delta, 1.0, (a - b).abs()).unwrap();
        assert!(!iv.is_violation(), "{iv:?}");
        non_vacuous += !iv.vacuous as usize;
    }
    assert!(non_vacuous > 0, "all intervals vacuous");
}

#[test]
fn fgsm_accuracy_rises_with_training_radius() {
    let ds = blobs(200, 2, 2.0, 0.5, 3);
    let (train, test) = split(&ds, 0.2, 3).unwrap();
    let acc: Vec<f64> = DEFAULT_EPSILONS
        .iter()
        .map(|&e| {
            let m = train_linear(&train, &TrainConfig::default().with_epsilon(e)).unwrap();
            adversarial_accuracy(&m, &test, 0.1).unwrap()
        })
        .collect();
    assert!(monotone_with_tolerance(&acc, false, 0.02), "{acc:?}");
}

#[test]
fn report_accounting_matches_bounds_file() {
    let mut cfg = ExperimentConfig::default();
    cfg.epsilons = vec![0.0, 0.1, 0.3];
    cfg.seeds = vec![0, 1];
    cfg.methods = vec![Method::Scfe, Method::Cchvae];
    cfg.max_instances = Some(15);
    cfg.vae.epochs = 300;
    let rep = run_sweep(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&rep, dir.path()).unwrap();

    let mut reader = csv::Reader::from_path(&paths.bounds).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (ci, vi) = (col("contained"), col("vacuous"));
    let mut uncontained = 0;
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        rows += 1;
        if &rec[ci] == "false" && &rec[vi] == "false" {
            uncontained += 1;
        }
    }
    assert_eq!(rows, rep.bounds.len());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&paths.summary).unwrap()).unwrap();
    assert_eq!(summary["total_violations"], uncontained);
    assert_eq!(summary["version"], env!("CARGO_PKG_VERSION"));

    let back = read_results(&paths.results).unwrap();
    assert_eq!(back, rep.rows);
    assert_eq!(back.len(), 2 * 3 * 2);
    for r in back.iter().filter(|r| r.epsilon == 0.0) {
        assert!(r.cost_diff_vs_eps0.is_none_or(|d| d == 0.0));
    }
    for r in &back {
        assert!(r.validity.is_none_or(|v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn zero_epsilon_grid_gives_zero_empirical_gaps() {
    for model in [
        ModelFamily::Linear,
        ModelFamily::Ntk {
            beta: 0.5,
            rounds: 1,
        },
    ] {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset = reclab_core::harness::DatasetSource::Synthetic {
            n_per_class: 40,
            d: 2,
            class_separation: 1.0,
            noise_std: 0.5,
            seed: 0,
        };
        cfg.model = model;
        cfg.epsilons = vec![0.0];
        cfg.seeds = vec![0];
        cfg.methods = vec![Method::Scfe];
        let rep = run_sweep(&cfg).unwrap();
        assert!(!rep.bounds.is_empty());
        for b in &rep.bounds {
            assert_eq!(b.interval.empirical, 0.0);
            assert!(b.interval.contained);
            assert!(b.interval.upper > 0.0);
        }
    }
}
