use egolsm::analysis::{centralities, clustering_accuracy, correlation_table, pearson};
use egolsm::init::{decompose_initial, initialize, InitConfig};
use egolsm::error::Error;
use egolsm::experiment::CENTERING_MONITOR_C;
use egolsm::metrics::{centering_distortion, error_metric, imbalance, neighborhood_diagnostics, procrustes_align};
use egolsm::model::{
    gradient, log_one_minus_sigmoid, logit, neg_log_likelihood, AdjacencyMatrix, LatentModel, Likelihood, Params,
};
use egolsm::rng::RngSpec;
use egolsm::simgen::{apply_scenario, gen_simulation1, sample_adjacency, GroundTruth, MixtureParams, Scenario};
use egolsm::solver::{compute_step_sizes, fit, pgd_step, project, ProjectionMode, SolverConfig, StepSizes};
use egolsm::view::PartialView;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Instance {
    x: DMatrix<f64>,
    params: Params,
    view: PartialView,
}

fn random_params(n: usize, k: usize, rng: &mut impl Rng) -> Params {
    let z = DMatrix::from_fn(n, k, |_, _| { let v: f64 = StandardNormal.sample(rng); 0.6 * v });
    let alpha = DVector::from_fn(n, |_, _| rng.random_range(-1.0..0.0));
    Params {
        z,
        alpha,
        beta: rng.random_range(-1.0..1.0),
    }
}

fn random_covariates(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = rng.random_range(-1.0..1.0);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    x
}

/// A random model, an adjacency drawn from it and a view with a random
/// neighborhood of at least two nodes.
fn instance(seed: u64, n: usize, k: usize, full: bool) -> Instance {
    let mut rng = RngSpec::new(seed, 0).rng();
    let x = random_covariates(n, &mut rng);
    let truth = random_params(n, k, &mut rng);
    let a = sample_adjacency(&truth.theta(&x).unwrap(), &mut rng).unwrap();
    let view = if full {
        PartialView::full(&a)
    } else {
        let n_s = rng.random_range(2..n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        PartialView::with_members(&a, order[0], &order[1..n_s]).unwrap()
    };
    let params = random_params(n, k, &mut rng);
    Instance { x, params, view }
}

fn objective(inst: &Instance, p: &Params, kind: Likelihood) -> f64 {
    neg_log_likelihood(&inst.view, &p.theta(&inst.x).unwrap(), kind).unwrap()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn random_orthogonal(k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(rng));
    m.qr().q()
}

/// Group-mean of each column over `𝒮` and over its complement.
fn group_column_sums(z: &DMatrix<f64>, view: &PartialView) -> f64 {
    let mut worst: f64 = 0.0;
    for group in [view.members(), view.outsiders()] {
        for c in 0..z.ncols() {
            let s: f64 = group.iter().map(|&i| z[(i, c)]).sum();
            worst = worst.max(s.abs());
        }
    }
    worst
}

fn small_sim(seed: u64, n: usize) -> (GroundTruth, AdjacencyMatrix) {
    let truth = gen_simulation1(&MixtureParams::new(n, 2), &mut RngSpec::new(seed, 0).rng()).unwrap();
    let a = sample_adjacency(&truth.model.theta().unwrap(), &mut RngSpec::new(seed, 1).rng()).unwrap();
    (truth, a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), n in 5usize..13, k in 1usize..4, full in any::<bool>(), conditional in any::<bool>()) {
        let inst = instance(seed, n, k, full);
        let kind = if conditional { Likelihood::Conditional } else { Likelihood::Full };
        let g = gradient(&inst.view, &inst.x, &inst.params, kind).unwrap();
        let h = 1e-5;
        let check = |analytic: f64, plus: Params, minus: Params| {
            let fd = (objective(&inst, &plus, kind) - objective(&inst, &minus, kind)) / (2.0 * h);
            (analytic - fd).abs() <= 1e-5 * (1.0 + fd.abs())
        };
        for i in 0..n {
            for c in 0..k {
                let (mut p, mut m) = (inst.params.clone(), inst.params.clone());
                p.z[(i, c)] += h;
                m.z[(i, c)] -= h;
                prop_assert!(check(g.z[(i, c)], p, m), "Z[{i},{c}]");
            }
            let (mut p, mut m) = (inst.params.clone(), inst.params.clone());
            p.alpha[i] += h;
            m.alpha[i] -= h;
            prop_assert!(check(g.alpha[i], p, m), "alpha[{i}]");
        }
        let (mut p, mut m) = (inst.params.clone(), inst.params.clone());
        p.beta += h;
        m.beta -= h;
        prop_assert!(check(g.beta, p, m), "beta");
    }

    #[test]
    fn each_block_moves_against_its_gradient(seed in any::<u64>(), n in 5usize..13, k in 1usize..4, full in any::<bool>()) {
        let mut inst = instance(seed, n, k, full);
        inst.params.z = inst.view.center_rows(&inst.params.z).unwrap();
        let config = SolverConfig::default();
        let steps = compute_step_sizes(&inst.params.z, &inst.view, &inst.x, config.eta).unwrap();
        let (next, _) = pgd_step(&inst.params, &inst.view, &inst.x, &steps, &config, 0).unwrap();
        let g = gradient(&inst.view, &inst.x, &inst.params, config.likelihood).unwrap();

        let dz = &next.z - &inst.params.z;
        let descent_z = inst.view.center_rows(&(-&g.z)).unwrap();
        if descent_z.norm() > 1e-9 {
            prop_assert!(cosine(dz.as_slice(), descent_z.as_slice()) >= 1.0 - 1e-8);
        }
        for group in [inst.view.members(), inst.view.outsiders()] {
            let da: Vec<f64> = group.iter().map(|&i| next.alpha[i] - inst.params.alpha[i]).collect();
            let ga: Vec<f64> = group.iter().map(|&i| -g.alpha[i]).collect();
            if ga.iter().any(|v| v.abs() > 1e-9) {
                prop_assert!(cosine(&da, &ga) >= 1.0 - 1e-8);
            }
        }
        let db = next.beta - inst.params.beta;
        prop_assert!(db * -g.beta >= 0.0);
    }

    #[test]
    fn mask_and_centering_algebra(seed in any::<u64>(), n in 4usize..14, k in 1usize..4, full in any::<bool>()) {
        let inst = instance(seed, n, k, full);
        let mut rng = RngSpec::new(seed, 9).rng();
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let masked = inst.view.mask(&m).unwrap();
        prop_assert_eq!(&inst.view.mask(&masked).unwrap(), &masked);
        let (b, bm) = (inst.view.blocks(&m), inst.view.blocks(&masked));
        prop_assert!(bm.oo.iter().all(|&v| v == 0.0));
        prop_assert_eq!(&bm.ss, &b.ss);
        prop_assert_eq!(&bm.so, &b.so);
        prop_assert_eq!(&bm.os, &b.os);
        if inst.view.is_full() {
            prop_assert_eq!(&masked, &m);
        }

        let centered = inst.view.center_rows(&inst.params.z).unwrap();
        prop_assert!(group_column_sums(&centered, &inst.view) < 1e-10);
        let twice = inst.view.center_rows(&centered).unwrap();
        prop_assert!((&twice - &centered).amax() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent(seed in any::<u64>(), n in 4usize..14, k in 1usize..4, full in any::<bool>(), theoretical in any::<bool>()) {
        let mut inst = instance(seed, n, k, full);
        inst.params.z *= 3.0;
        inst.params.alpha *= 4.0;
        inst.params.beta *= 5.0;
        let config = SolverConfig {
            projection: if theoretical { ProjectionMode::Theoretical } else { ProjectionMode::Practical },
            ..SolverConfig::default()
        };
        let once = project(&inst.params, &inst.view, &inst.x, &config).unwrap();
        let twice = project(&once, &inst.view, &inst.x, &config).unwrap();
        prop_assert!((&twice.z - &once.z).amax() < 1e-12);
        prop_assert!((&twice.alpha - &once.alpha).amax() < 1e-12);
        prop_assert!((twice.beta - once.beta).abs() < 1e-12);
    }

    #[test]
    fn small_steps_never_raise_the_objective(seed in any::<u64>(), n in 6usize..14, k in 1usize..3, full in any::<bool>(), scale in 1e-6f64..1e-4) {
        let inst = instance(seed, n, k, full);
        let config = SolverConfig::default();
        let mut params = project(&inst.params, &inst.view, &inst.x, &config).unwrap();
        let z_op = params.z.norm().max(1.0);
        let steps = StepSizes {
            z: scale / (n as f64 * z_op * z_op),
            alpha_s: scale / n as f64,
            alpha_out: scale / n as f64,
            beta: scale / (1.0 + inst.x.norm_squared()),
        };
        let mut last = f64::INFINITY;
        for t in 0..10 {
            let (next, value) = pgd_step(&params, &inst.view, &inst.x, &steps, &config, t).unwrap();
            prop_assert!(value <= last + 1e-12 * value.abs().max(1.0), "{} -> {}", last, value);
            last = value;
            params = next;
        }
    }

    #[test]
    fn theta_is_bitwise_symmetric(seed in any::<u64>(), n in 2usize..20, k in 1usize..4) {
        let inst = instance(seed, n.max(3), k, true);
        let theta = inst.params.theta(&inst.x).unwrap();
        prop_assert_eq!(&theta, &theta.transpose());
    }

    #[test]
    fn procrustes_error_is_rotation_invariant(seed in any::<u64>(), n in 3usize..20, k in 1usize..4) {
        let mut rng = RngSpec::new(seed, 3).rng();
        let z_ref = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        let z_hat = DMatrix::from_fn(n, k, |_, _| StandardNormal.sample(&mut rng));
        let q = random_orthogonal(k, &mut rng);
        let (_, rotated_only) = procrustes_align(&(&z_ref * &q), &z_ref).unwrap();
        prop_assert!(rotated_only < 1e-9);
        let (_, base) = procrustes_align(&z_hat, &z_ref).unwrap();
        let (_, turned) = procrustes_align(&(&z_hat * &q), &z_ref).unwrap();
        prop_assert!((base - turned).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn imbalance_is_rotation_invariant(seed in any::<u64>(), n in 4usize..14, k in 1usize..4, full in any::<bool>()) {
        let inst = instance(seed, n, k, full);
        let q = random_orthogonal(k, &mut RngSpec::new(seed, 4).rng());
        let (u, _) = imbalance(&inst.params.z, &inst.view, 1.0).unwrap();
        let (u_rot, _) = imbalance(&(&inst.params.z * q), &inst.view, 1.0).unwrap();
        prop_assert!((u - u_rot).abs() <= 1e-10 * (1.0 + u));
    }

    #[test]
    fn accuracy_ignores_label_names(seed in any::<u64>(), n in 1usize..40, kl in 1usize..6, kt in 1usize..6) {
        let mut rng = RngSpec::new(seed, 5).rng();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..kl)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..kt)).collect();
        let mut perm: Vec<usize> = (0..kl).collect();
        for i in (1..kl).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let renamed: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let base = clustering_accuracy(&labels, &truth).unwrap();
        prop_assert!((base - clustering_accuracy(&renamed, &truth).unwrap()).abs() < 1e-12);

        let mut counts = vec![0usize; kt];
        for &t in &truth {
            counts[t] += 1;
        }
        let prior = *counts.iter().max().unwrap() as f64 / n as f64;
        let trivial = clustering_accuracy(&vec![0; n], &truth).unwrap();
        prop_assert!((trivial - prior).abs() < 1e-12);
    }

    #[test]
    fn degrees_sum_to_twice_the_edges(seed in any::<u64>(), n in 2usize..25) {
        let inst = instance(seed, n.max(5), 2, true);
        let a = AdjacencyMatrix::new(inst.view.b().clone()).unwrap();
        let total: usize = centralities(&a).unwrap().iter().map(|c| c.degree).sum();
        prop_assert_eq!(total, 2 * a.edge_count());
    }

    #[test]
    fn spearman_equals_pearson_on_ranks(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = RngSpec::new(seed, 6).rng();
        let shuffled = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut v: Vec<f64> = (1..=n).map(|i| i as f64).collect();
            for i in (1..n).rev() {
                v.swap(i, rng.random_range(0..=i));
            }
            v
        };
        let x = shuffled(&mut rng);
        let y = shuffled(&mut rng);
        let table = correlation_table(&x, &y).unwrap();
        prop_assert!((table.spearman.unwrap() - pearson(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn initialization_is_group_centered(seed in any::<u64>(), n in 6usize..16, k in 1usize..3, full in any::<bool>()) {
        let inst = instance(seed, n, k, full);
        let init = initialize(&inst.view, &inst.x, &InitConfig::new(k)).unwrap();
        prop_assert!(init.is_finite());
        prop_assert!(group_column_sums(&init.z, &inst.view) < 1e-8);
    }

    #[test]
    fn logit_of_the_pair_mean_minimizes_the_pair_loss(b in 0.01f64..0.99) {
        let loss = |t: f64| -(b * t + log_one_minus_sigmoid(t));
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = hi - ratio * (hi - lo);
            let d = lo + ratio * (hi - lo);
            if loss(c) < loss(d) { hi = d } else { lo = c }
        }
        let t = 0.5 * (lo + hi);
        prop_assert!((t - logit(b).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn fits_are_deterministic(seed in any::<u64>(), n in 10usize..24, full in any::<bool>()) {
        let inst = instance(seed, n, 2, full);
        let run = || {
            let init = initialize(&inst.view, &inst.x, &InitConfig::new(2)).unwrap();
            fit(&inst.view, &inst.x, init, &SolverConfig { iterations: 15, ..SolverConfig::default() }, None)
        };
        let (a, b) = match (run(), run()) {
            (Err(Error::DegenerateInit), Err(Error::DegenerateInit)) => return Err(TestCaseError::reject("no latent signal")),
            (a, b) => (a.unwrap(), b.unwrap()),
        };
        prop_assert_eq!(a.params.z.as_slice(), b.params.z.as_slice());
        prop_assert_eq!(a.params.alpha.as_slice(), b.params.alpha.as_slice());
        prop_assert_eq!(a.params.beta.to_bits(), b.params.beta.to_bits());
        prop_assert_eq!(a.objective_trace, b.objective_trace);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn error_metric_dominates_its_latent_term(seed in any::<u64>(), center in 0usize..60, full in any::<bool>()) {
        let (truth, a) = small_sim(seed, 60);
        let view = if full { PartialView::full(&a) } else { PartialView::build(&a, center).unwrap() };
        let init = initialize(&view, &truth.model.x, &InitConfig::new(2)).unwrap();
        let report = error_metric(&init, &truth, &view, false).unwrap();
        let latent = report.z_ref_op.powi(2) * report.delta_z_f.powi(2);
        prop_assert!(report.e_t >= latent * (1.0 - 1e-12));
        prop_assert!(report.e_t >= 0.0 && report.delta_theta_f_sq >= report.delta_s_theta_f_sq * (1.0 - 1e-12));
    }

    #[test]
    fn simulation_is_normalized(seed in any::<u64>(), half in 5usize..40) {
        let n = 2 * half;
        let (truth, a) = small_sim(seed, n);
        let gram = truth.model.gram();
        prop_assert!((gram.norm() - n as f64).abs() < 1e-8 * n as f64);
        prop_assert!((truth.model.x.norm() - n as f64).abs() < 1e-8 * n as f64);
        let m = a.matrix();
        prop_assert_eq!(m, &m.transpose());
        prop_assert!((0..n).all(|i| m[(i, i)] == 0.0));
        prop_assert!(m.iter().all(|&v| v == 0.0 || v == 1.0));

        let hub = apply_scenario(&a, 0, Scenario::Full, &mut RngSpec::new(seed, 2).rng()).unwrap();
        prop_assert_eq!(PartialView::build(&hub, 0).unwrap().n_s(), n);
    }
}

#[test]
fn noiseless_full_information_decomposes_exactly() {
    for seed in 0..4 {
        let n = 40;
        let mut rng = RngSpec::new(seed, 7).rng();
        let x = random_covariates(n, &mut rng);
        let mut params = random_params(n, 2, &mut rng);
        let a = AdjacencyMatrix::empty(n);
        let view = PartialView::full(&a);
        params.z = view.center_rows(&params.z).unwrap();
        let model = LatentModel::new(params.clone(), x.clone()).unwrap();
        let p = model.probabilities().unwrap();
        let config = InitConfig { refine_rounds: 500, clip_eps: 1e-12, ..InitConfig::new(2) };
        let decomposition = decompose_initial(&p, &x, &view, &config).unwrap();
        let truth = GroundTruth::from_model(model, None).unwrap();
        let report = error_metric(&decomposition.params, &truth, &view, false).unwrap();
        assert!(report.delta_theta_f_sq.sqrt() < 1e-6, "seed {seed}: {}", report.delta_theta_f_sq.sqrt());
        assert!(report.e_t < 1e-10, "seed {seed}: e_0 = {}", report.e_t);
    }
}

#[test]
fn centering_monitor_is_reported() {
    let mut flagged = 0;
    let mut checked = 0;
    for seed in 0..4 {
        let (truth, a) = small_sim(seed, 80);
        for center in [0, 40] {
            let view = PartialView::build(&a, center).unwrap();
            let d = neighborhood_diagnostics(&truth, &view).unwrap();
            if d.r_s < 0.1 {
                continue;
            }
            let distortion = centering_distortion(&truth.model.z, &view).unwrap();
            assert!(distortion.is_finite() && d.u_s.is_finite());
            checked += 1;
            if distortion > CENTERING_MONITOR_C * d.u_s * d.u_s / d.r_s {
                flagged += 1;
            }
        }
    }
    println!("centering monitor: {flagged} of {checked} flagged");
}
