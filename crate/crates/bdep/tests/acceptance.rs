//! End-to-end acceptance gate. Each test exercises one headline guarantee
//! of the crate and prints a single pass line; tolerances combine exact
//! identities, closed-form anchors, oracle equivalence, and scaling trends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdep::experiments::{correction_experiment, entropy_experiment, CorrectionConfig, EntropyConfig};
use bdep::kmc::{run_ensemble, InitialCondition, Observable};
use bdep::master;
use bdep::measures::{
    diffusivity, diffusivity_via_covariance, mobility, relative_entropy_general,
    relative_entropy_products, ProductMeasure, Transport,
};
use bdep::model::{
    logit, Configuration, DriveSchedule, FieldFn, GradientDecomposition, RateModel, TimeFn,
};
use bdep::pde::{
    apriori_diagnostics, fit_slope, quasi_static_gap, quasi_static_profiles,
    solve_correction_uniform, solve_parabolic, solve_stationary, GridProfile, SolverParams,
};

fn presets() -> [RateModel; 2] {
    [RateModel::ssep(), RateModel::two_body()]
}

#[test]
fn a01_gradient_identity() {
    for model in presets() {
        let residual = model.gradient_residual();
        assert!(
            residual <= 1e-12,
            "{}: gradient residual {}",
            model.name(),
            residual
        );
    }
    // A corrupted decomposition must be detected.
    let good = RateModel::two_body();
    let mut parts = good.decomposition().parts.clone();
    parts[2].measure = vec![(0, 1.0), (1, -1.0)];
    let corrupted = RateModel::new(
        "corrupted",
        good.rate_function().clone(),
        GradientDecomposition { parts },
    )
    .expect("still a zero-mass decomposition");
    assert!(!corrupted.verify_gradient());
    println!("acceptance 01 gradient identity: PASS");
}

#[test]
fn a02_transport_identities() {
    for model in presets() {
        let transport = Transport::from_model(&model);
        for k in 1..=19 {
            let theta = k as f64 * 0.05;
            let d = diffusivity(&model, theta);
            let chi = mobility(&model, theta);
            let einstein = (d - chi * transport.f_second(theta)).abs();
            assert!(einstein <= 1e-12, "{} theta {}: {}", model.name(), theta, einstein);
            let d_cov = diffusivity_via_covariance(&model, theta);
            assert!(
                (d_cov - d).abs() <= 1e-10,
                "{} theta {}: D_cov {} vs D {}",
                model.name(),
                theta,
                d_cov,
                d
            );
        }
    }
    println!("acceptance 02 transport identities: PASS");
}

#[test]
fn a03_entropy_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let sites = rng.gen_range(1..=12usize);
        let n = sites + 1;
        let draw = |rng: &mut ChaCha8Rng| -> ProductMeasure {
            ProductMeasure::new((0..sites).map(|_| rng.gen_range(0.05..0.95)).collect()).unwrap()
        };
        let mu = draw(&mut rng);
        let pi = draw(&mut rng);
        let closed = relative_entropy_products(&mu, &pi);
        let brute = relative_entropy_general(&mu.as_vector().unwrap(), &pi).unwrap();
        assert!(
            (closed - brute).abs() <= 1e-12,
            "N = {}: {} vs {}",
            n,
            closed,
            brute
        );
    }
    println!("acceptance 03 entropy oracle equivalence: PASS");
}

#[test]
fn a04_sampler_matches_exact_evolution() {
    let n = 6;
    let model = RateModel::ssep();
    let drive = DriveSchedule {
        alpha_left: TimeFn::Sine {
            base: 0.35,
            amp: 0.15,
            omega: 2.0,
            phase: 0.0,
        },
        alpha_right: TimeFn::Linear {
            base: 0.6,
            slope: 0.15,
        },
        field: FieldFn::Constant { value: 0.5 },
        epsilon: 1.0,
        ell: 1.0,
    };
    let theta_time = 100.0;
    let checkpoints = [0.3, 0.65, 1.0];
    let replicas = 10_000;
    let mu = ProductMeasure::homogeneous(n, 0.5).unwrap();

    let ens = run_ensemble(
        &model,
        &drive,
        n,
        theta_time,
        &InitialCondition::Product(mu.clone()),
        &checkpoints,
        &[Observable::SiteOccupancy],
        replicas,
        77,
    )
    .unwrap();

    let p0 = mu.as_vector().unwrap();
    let exact = master::evolve_forward(&p0, &model, &drive, theta_time, n, &checkpoints).unwrap();
    for (cp, (t, p)) in exact.iter().enumerate() {
        for j in 1..n {
            let exact_mean: f64 = p
                .iter()
                .enumerate()
                .filter(|(key, _)| (key >> (j - 1)) & 1 == 1)
                .map(|(_, &w)| w)
                .sum();
            let mc = ens.mean[cp][j - 1];
            let sigma = ens.stderr[cp][j - 1].max(1e-12);
            assert!(
                (mc - exact_mean).abs() <= 4.0 * sigma,
                "t = {}, site {}: MC {} vs exact {} (sigma {})",
                t,
                j,
                mc,
                exact_mean,
                sigma
            );
        }
    }
    println!("acceptance 04 sampler-vs-exact equivalence: PASS");
}

#[test]
fn a05_detailed_balance_and_stationarity() {
    let alpha = 0.35;
    for model in presets() {
        for n in [4usize, 5, 6] {
            let drive = DriveSchedule::equilibrium(alpha);
            let gen = master::build_generator(&model, &drive, 0.0, n).unwrap();
            let pi = ProductMeasure::homogeneous(n, alpha)
                .unwrap()
                .as_vector()
                .unwrap();
            for s in 0..gen.states {
                for &(t, r) in &gen.rows[s] {
                    let back = gen.rows[t]
                        .iter()
                        .find(|&&(b, _)| b == s)
                        .map(|&(_, rr)| rr)
                        .expect("reverse edge");
                    let res = (pi[s] * r - pi[t] * back).abs();
                    assert!(res <= 1e-12, "{} N {}: edge residual {}", model.name(), n, res);
                }
            }
            let stationary = master::stationary_state(&model, &drive, 0.0, n).unwrap();
            for (a, b) in stationary.iter().zip(pi.iter()) {
                assert!((a - b).abs() <= 1e-12, "{} N {}", model.name(), n);
            }
        }
    }
    println!("acceptance 05 detailed balance and stationarity: PASS");
}

#[test]
fn a06_pde_anchors() {
    // Heat-equation closed form.
    for m in [64usize, 128] {
        let transport = Transport::constant_d(1.0);
        let drive = DriveSchedule::equilibrium(0.5);
        let pi = std::f64::consts::PI;
        let rho0 = GridProfile::from_fn(m, 0.0, |x| 0.5 + 0.1 * (pi * x).sin());
        let params = SolverParams {
            m,
            ..SolverParams::for_ell(1.0)
        };
        let sol = solve_parabolic(&transport, &drive, &rho0, &[0.1], &params).unwrap();
        let decay = (-pi * pi * 0.1).exp();
        let err = sol.profiles[0]
            .values
            .iter()
            .enumerate()
            .fold(0.0f64, |acc, (i, &v)| {
                let x = i as f64 / m as f64;
                acc.max((v - (0.5 + 0.1 * decay * (pi * x).sin())).abs())
            });
        assert!(err <= 8.0 / (m * m) as f64, "M = {}: error {}", m, err);
    }

    // Stationary linear profile, node-exact.
    let transport = Transport::constant_d(1.0);
    let rho = solve_stationary(&transport, 0.2, 0.8, |_| 0.0, 256).unwrap();
    for (i, &v) in rho.values.iter().enumerate() {
        let x = i as f64 / 256.0;
        assert!((v - (0.2 + 0.6 * x)).abs() <= 1e-10);
    }

    // Correction closed form at M = 256.
    let d0 = 2.0;
    let a = 0.1;
    let transport = Transport::constant_d(d0);
    let v = solve_correction_uniform(&transport, 0.5, a, 256, 0.0).unwrap();
    for (i, &val) in v.values.iter().enumerate() {
        let x = i as f64 / 256.0;
        assert!((val - a * x * (x - 1.0) / (2.0 * d0)).abs() <= 1e-8);
    }
    println!("acceptance 06 macroscopic anchors: PASS");
}

#[test]
fn a07_quasi_static_limit() {
    let transport = Transport::constant_d(1.0);
    // Chemical potential logit(0.4 + 0.05 sin t), i.e. this boundary density.
    let alpha = TimeFn::Sine {
        base: 0.4,
        amp: 0.05,
        omega: 1.0,
        phase: 0.0,
    };
    assert!((logit(alpha.eval(0.3)) - (0.4f64 + 0.05 * 0.3f64.sin()).ln()
        + (1.0 - 0.4 - 0.05 * 0.3f64.sin()).ln())
    .abs()
        < 1e-12);
    let rows = quasi_static_gap(
        &transport,
        &alpha,
        |x| x * (1.0 - x),
        &[10.0, 100.0, 1000.0],
        &[1.0],
        128,
    )
    .unwrap();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    println!("quasi-static gaps at t = 1: {:?}", gaps);
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{:?}", gaps);
    assert!(gaps[2] <= 0.1 * gaps[0], "{:?}", gaps);
    println!("acceptance 07 quasi-static limit: PASS");
}

#[test]
fn a08_apriori_bound_shapes() {
    let transport = Transport::constant_d(1.0);
    let alpha = TimeFn::Sine {
        base: 0.4,
        amp: 0.1,
        omega: 1.0,
        phase: 0.0,
    };
    let times: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let mut family = Vec::new();
    for nu in [10.0, 100.0, 1000.0] {
        let sol = quasi_static_profiles(&transport, &alpha, |x| x * (1.0 - x), nu, &times, 128)
            .unwrap();
        family.push((nu, 1.0 / nu, sol.profiles));
    }
    let report = apriori_diagnostics(&transport, &alpha, &family, |_| 0.0);
    println!(
        "plateau slope {:.4}, envelope B {:.4}",
        report.plateau_slope, report.dxx_envelope
    );
    assert!(
        (-1.3..=-0.7).contains(&report.plateau_slope),
        "slope {}",
        report.plateau_slope
    );
    assert!(report.dxx_envelope < 50.0, "B {}", report.dxx_envelope);
    println!("acceptance 08 a-priori bound shapes: PASS");
}

#[test]
fn a09_correction_experiment_trend() {
    let model = RateModel::ssep();
    let alpha = TimeFn::Linear {
        base: 0.4,
        slope: 0.1,
    };
    let mut ratios = Vec::new();
    for n in [128usize, 256, 512] {
        let config = CorrectionConfig {
            n,
            epsilon: None, // N^{-1/5}
            k_block: None, // ceil(N^{2/5})
            checkpoints: vec![0.5],
            replicas: 200,
            base_seed: 2024,
            m_grid: 256,
            c_fit: 0.1,
        };
        let report = correction_experiment(&model, &alpha, |x| x * (1.0 - x), &config).unwrap();
        let s = &report.summaries[0];
        println!(
            "N = {}: eps = {:.4}, K = {}, L1 = {:.5e}, band = {:.5e}, events = {}",
            n, report.epsilon, report.k_block, s.l1_distance, s.band, report.total_events
        );
        assert!(
            s.l1_distance <= s.band,
            "N = {}: L1 {} outside band {}",
            n,
            s.l1_distance,
            s.band
        );
        ratios.push(s.l1_distance / s.band);
    }
    println!("band-normalized residuals: {:?}", ratios);
    // Trend check: the normalized residual must not grow along the family.
    assert!(
        ratios[2] <= ratios[0] + 0.15,
        "normalized residuals grew: {:?}",
        ratios
    );
    println!("acceptance 09 correction experiment trend: PASS");
}

#[test]
fn a10_exact_entropy_trend() {
    let model = RateModel::ssep();
    let alpha = TimeFn::Linear {
        base: 0.4,
        slope: 0.05,
    };
    let n = 10usize;
    let epsilon = 0.3;
    let theta_base = (n * n) as f64 / epsilon;
    let times: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
    let run = |theta_time: f64| {
        let config = EntropyConfig {
            n,
            epsilon,
            theta_time,
            times: times.clone(),
            m_grid: 100,
        };
        entropy_experiment(&model, &alpha, |_| 0.0, &config).unwrap()
    };
    let base = run(theta_base);
    for row in &base.rows {
        assert!(
            row.h_normalized < 0.05,
            "t = {}: normalized entropy {}",
            row.t,
            row.h_normalized
        );
    }
    let fast = run(10.0 * theta_base);
    let h_base = base.rows.last().unwrap().h_normalized;
    let h_fast = fast.rows.last().unwrap().h_normalized;
    println!("normalized entropy at t = 1: {:.3e} (base) vs {:.3e} (10x speed)", h_base, h_fast);
    assert!(h_fast < h_base, "{} vs {}", h_fast, h_base);
    println!("acceptance 10 exact entropy trend: PASS");
}

// Shared sanity check used by several criteria: the block-density estimator
// is unbiased on product measures.
#[test]
fn block_estimator_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mu = ProductMeasure::homogeneous(40, 0.3).unwrap();
    let mut acc = 0.0;
    let reps = 4000;
    for _ in 0..reps {
        let eta: Configuration = mu.sample(&mut rng);
        acc += bdep::kmc::block_density(&eta, 20, 3);
    }
    let mean = acc / reps as f64;
    assert!((mean - 0.3).abs() < 0.02, "{}", mean);
}

// fit_slope is part of the diagnostics contract; pin it here too.
#[test]
fn slope_fit_sanity() {
    let pts: Vec<(f64, f64)> = (1..=4).map(|k| (k as f64, 2.0 * k as f64 + 1.0)).collect();
    assert!((fit_slope(&pts) - 2.0).abs() < 1e-12);
}
