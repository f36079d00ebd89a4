//! Directional training-dynamics checks on the separable synthetic toy:
//! loss drops early, positive-pair similarity climbs, and the gap widens over
//! the first epochs for most seeds. No fixed values, direction only.

use gapalign::gapmetrics::EmaState;
use gapalign::graphdata::{make_split, synth_sbm, SbmConfig};
use gapalign::trainer::{run_training, TrainConfig};

#[test]
fn separable_toy_training_dynamics() {
    let mut loss_ok = 0;
    let mut pos_ok = 0;
    let mut rho_ok = 0;
    for seed in 0..5u64 {
        let g = synth_sbm(&SbmConfig {
            nodes_per_class: 100,
            n_classes: 3,
            p_intra: 0.8,
            p_inter: 0.05,
            feature_noise: 0.3,
            proto_separation: 2.0,
            dim: None,
            seed,
        })
        .unwrap();
        let split = make_split(&g, Some(10), 0.2, seed).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            monitor_enabled: false,
            seed,
            ..TrainConfig::default()
        };
        let run = run_training(&g, &split, &cfg).unwrap();

        if run.curves[19].loss < run.curves[0].loss {
            loss_ok += 1;
        }

        let mut ema = EmaState::new(0.9);
        let pos: Vec<f64> = run
            .curves
            .iter()
            .map(|r| ema.update(r.report.sim_pos).unwrap())
            .collect();
        if pos.windows(2).take(9).all(|w| w[1] > w[0]) {
            pos_ok += 1;
        }

        let gaps: Vec<f64> = run.curves.iter().map(|r| r.report.gap).collect();
        let mean_rho: f64 = gaps.windows(2).take(10).map(|w| w[1] - w[0]).sum::<f64>() / 10.0;
        if mean_rho > 0.0 {
            rho_ok += 1;
        }
    }
    assert_eq!(loss_ok, 5, "loss at epoch 20 must undercut epoch 1 on all seeds");
    assert!(pos_ok >= 4, "smoothed sim_pos must climb early for >= 4/5 seeds, got {pos_ok}");
    assert!(rho_ok >= 4, "mean gap rate over first 10 epochs must be positive for >= 4/5 seeds, got {rho_ok}");
}
