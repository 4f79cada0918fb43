//! End-to-end fits on clean and noisy data.

use ddeid::data::{add_noise, generate_true, NoiseSpec};
use ddeid::loss::{NormKind, NormType};
use ddeid::models::{dynamics_by_name, initial_condition_by_name};
use ddeid::trainer::{fit, FitConfig, StopReason};
use ddeid::Delay;

fn exponential_data(level: f64, seed: u64) -> ddeid::data::Dataset {
    let f = dynamics_by_name("exponential").unwrap();
    let h = initial_condition_by_name("affine", 1).unwrap();
    let clean =
        generate_true(f.as_ref(), h.as_ref(), &[-2.0, -2.0], Delay::new(1.0).unwrap(), &[1.5, 4.0], 10.0, 0.1).unwrap();
    add_noise(&clean, NoiseSpec { level, seed }).unwrap()
}

fn exponential_config(t_final: f64) -> FitConfig {
    let mut cfg = FitConfig::new("exponential", "affine", vec![-1.5, -2.5], 2.0, vec![2.25, 2.8], t_final);
    cfg.loss.running = NormKind::new(NormType::Euclidean);
    cfg
}

#[test]
fn clean_exponential_recovers_truth() {
    let data = exponential_data(0.0, 0);
    let r = fit(&exponential_config(9.9), data.times(), data.values()).unwrap();
    assert_eq!(r.stop_reason, StopReason::LossBelowMin);
    assert!(r.final_loss.unwrap() < 0.01);
    assert!((r.tau - 1.0).abs() < 0.02, "tau {}", r.tau);
    for th in &r.theta {
        assert!((th + 2.0).abs() < 0.1, "theta {:?}", r.theta);
    }
}

/// model, history family, true (θ, τ, φ), initial (θ, τ, φ), horizon
type Case = (&'static str, &'static str, &'static [f64], f64, &'static [f64], &'static [f64], f64, &'static [f64], f64);

#[test]
fn loss_decreases_for_every_model() {
    let cases: [Case; 4] = [
        ("logistic", "periodic", &[2.0, 1.5], 1.0, &[-0.5, 3.0, 2.0], &[1.0, 1.0], 0.5, &[-0.25, 6.0, 2.6], 10.0),
        (
            "enso",
            "periodic",
            &[1.0, 1.0, 0.75],
            5.0,
            &[-0.25, 1.0, 1.5],
            &[1.5, 0.8, 1.2],
            6.0,
            &[-0.3, 0.8, 1.95],
            10.0,
        ),
        ("cheyne", "affine", &[1.0, 7.0, 2.0], 0.25, &[-5.0, 2.0], &[2.0, 12.0, 1.5], 0.5, &[0.0, 2.0], 3.0),
        (
            "hiv",
            "periodic",
            &[],
            1.0,
            &[1.0, 3.0, 0.0, 1.0, 3.0, 0.0, 10.0, 8.0, 0.0],
            &[],
            0.25,
            &[1.0, 1.0, 1.0, 1.2, 3.6, 0.0, 0.0, 0.0, 0.0],
            10.0,
        ),
    ];
    for (model, ic, th, tau, phi, th0, tau0, phi0, t_final) in cases {
        let f = dynamics_by_name(model).unwrap();
        let h = initial_condition_by_name(ic, f.dim()).unwrap();
        let dt = if model == "cheyne" { 0.025 } else { 0.1 };
        let data = generate_true(f.as_ref(), h.as_ref(), th, Delay::new(tau).unwrap(), phi, t_final, dt).unwrap();
        let mut cfg = FitConfig::new(model, ic, th0.to_vec(), tau0, phi0.to_vec(), *data.times().last().unwrap());
        cfg.offset_from_data = matches!(model, "cheyne" | "hiv");
        cfg.n_epochs = 100;
        if model == "enso" {
            cfg.n_tau = 50;
        }
        let r = fit(&cfg, data.times(), data.values()).unwrap();
        assert_ne!(r.stop_reason, StopReason::BlowUp, "{model}");
        assert!(r.final_loss.unwrap() < r.loss_history[0], "{model}: {:?} vs {}", r.final_loss, r.loss_history[0]);
    }
}

#[test]
fn identical_inputs_give_identical_fits() {
    let data = exponential_data(0.3, 7);
    let mut cfg = exponential_config(9.9);
    cfg.n_epochs = 60;
    let a = fit(&cfg, data.times(), data.values()).unwrap();
    let b = fit(&cfg, data.times(), data.values()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn epoch_budget_is_respected() {
    let data = exponential_data(0.9, 3);
    let mut cfg = exponential_config(9.9);
    cfg.n_epochs = 5;
    let r = fit(&cfg, data.times(), data.values()).unwrap();
    assert_eq!(r.stop_reason, StopReason::EpochsExhausted);
    assert_eq!(r.loss_history.len(), 5);
    assert_eq!(r.grad_history.len(), 5);
}

#[test]
fn tau_never_drops_below_floor() {
    let data = exponential_data(0.0, 0);
    let mut cfg = exponential_config(9.9);
    cfg.tau = 0.01;
    cfg.lr0 = 0.5;
    cfg.n_epochs = 30;
    let r = fit(&cfg, data.times(), data.values()).unwrap();
    assert!(r.tau >= cfg.tau_floor);
}

#[test]
fn noise_stream_depends_only_on_seed() {
    let a = exponential_data(0.3, 5);
    let b = exponential_data(0.3, 5);
    let c = exponential_data(0.3, 6);
    assert_eq!(a.values(), b.values());
    assert_ne!(a.values(), c.values());
}
