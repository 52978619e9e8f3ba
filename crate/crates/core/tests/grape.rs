mod common;

use noisecontrol::bounds::eigenstate_initial_condition;
use noisecontrol::grape::{fidelity_and_gradient, fidelity_with, final_coefficients, synthesize, SynthesisConfig, TargetPhases};
use noisecontrol::lindblad::ControlPulse;
use noisecontrol::spinalg::{double_well_model, ModelSystem};
use noisecontrol::states::{delta_r_norm, random_transformation, to_eigenbasis, AmplitudePhaseState, TransformationSpec};

/// Target reached exactly by `pulse`, so that F = 1 there.
fn reachable_target(model: &ModelSystem, pulse: &ControlPulse, psi_i: &AmplitudePhaseState) -> AmplitudePhaseState {
    let c = final_coefficients(model, pulse, psi_i).unwrap();
    let r = c.iter().map(|z| z.norm()).collect();
    let phi = c.iter().map(|z| z.arg()).collect();
    AmplitudePhaseState::new(r, phi, model.basis_id()).unwrap()
}

#[test]
fn gradient_vanishes_at_unit_fidelity() {
    let mut rng = common::rng(21);
    for trial in 0..10 {
        let d = 2 + trial % 5;
        let model = common::random_model(d, 2, &mut rng);
        let pulse = common::random_pulse(8, 2, 0.1, 1.0, 0.0, &mut rng);
        let psi_i = to_eigenbasis(&common::random_state(d, &mut rng), &model).unwrap();
        let psi_f = reachable_target(&model, &pulse, &psi_i);
        for mode in [TargetPhases::Fixed, TargetPhases::Free] {
            let (f, g) = fidelity_and_gradient(&model, &pulse, &psi_i, &psi_f, mode).unwrap();
            assert!((f - 1.0).abs() < 1e-12, "F = {f}");
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm < 1e-6, "trial {trial} {mode:?}: |grad| = {norm:e}");
        }
    }
}

#[test]
fn free_phase_gradient_matches_central_differences() {
    let mut rng = common::rng(4);
    for trial in 0..20 {
        let d = 2 + trial % 5;
        let model = common::random_model(d, 2, &mut rng);
        let pulse = common::random_pulse(6, 2, 0.15, 1.0, 0.0, &mut rng);
        let psi_i = to_eigenbasis(&common::random_state(d, &mut rng), &model).unwrap();
        let psi_f = to_eigenbasis(&common::random_state(d, &mut rng), &model).unwrap();
        let (_, g) = fidelity_and_gradient(&model, &pulse, &psi_i, &psi_f, TargetPhases::Free).unwrap();
        let h = 1e-6;
        for s in 0..pulse.n_seg() {
            for k in 0..2 {
                let shifted = |delta: f64| {
                    let mut v = pulse.values().clone();
                    v[[s, k]] += delta;
                    fidelity_with(&model, &pulse.with_values(v).unwrap(), &psi_i, &psi_f, TargetPhases::Free).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let err = (fd - g[[s, k]]).abs();
                assert!(err <= 1e-5 * g[[s, k]].abs().max(1e-3), "trial {trial} ({s},{k}): {fd} vs {}", g[[s, k]]);
            }
        }
    }
}

fn small_transfer(n: usize, distance: f64, seed: u64) -> (ModelSystem, TransformationSpec) {
    let model = double_well_model(n, 1.0, 0.3, 1.7).unwrap();
    let psi_i = eigenstate_initial_condition(&model, n / 2).unwrap();
    let psi_f = random_transformation(&psi_i, distance, seed).unwrap();
    let spec = TransformationSpec::new(psi_i, psi_f, distance).unwrap();
    (model, spec)
}

#[test]
fn four_atom_transfer_converges() {
    let (model, spec) = small_transfer(4, 0.1, 7);
    assert!((delta_r_norm(&spec).unwrap() - 0.1).abs() < 1e-12);
    let cfg = SynthesisConfig { t_total: 2.0, n_seg: 40, max_iter: 500, fidelity_goal: 0.999, ..Default::default() };
    let res = synthesize(&model, spec.psi_i(), spec.psi_f(), &cfg).unwrap();
    assert!(res.converged && res.fidelity >= 0.999, "F = {} after {}", res.fidelity, res.iterations);
    assert!(res.iterations <= 500);
}

#[test]
fn synthesis_is_deterministic_and_monotone() {
    let (model, spec) = small_transfer(4, 0.2, 3);
    let cfg = SynthesisConfig { t_total: 2.0, n_seg: 30, seed: 17, amplitude_penalty: 1e-4, polish: true, max_iter: 80, ..Default::default() };
    let a = synthesize(&model, spec.psi_i(), spec.psi_f(), &cfg).unwrap();
    let b = synthesize(&model, spec.psi_i(), spec.psi_f(), &cfg).unwrap();
    assert_eq!(a.pulse.values(), b.pulse.values());
    assert_eq!(a.objective_history, b.objective_history);
    assert!(a.objective_history.windows(2).all(|w| w[1] > w[0]), "objective decreased");
    let c = synthesize(&model, spec.psi_i(), spec.psi_f(), &SynthesisConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(a.pulse.values(), c.pulse.values());
}

#[test]
fn amplitude_penalty_shrinks_the_pulse() {
    let (model, spec) = small_transfer(2, 0.2, 5);
    let run = |penalty: f64| {
        let cfg = SynthesisConfig { t_total: 2.0, n_seg: 20, amplitude_penalty: penalty, polish: true, max_iter: 300, ..Default::default() };
        let res = synthesize(&model, spec.psi_i(), spec.psi_f(), &cfg).unwrap();
        res.pulse.values().iter().map(|v| v * v).sum::<f64>()
    };
    assert!(run(1e-2) < run(0.0));
}
