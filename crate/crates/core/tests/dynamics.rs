use proptest::prelude::*;
use snnf_core::dynamics::{check, scenario, simulate, simulate_inputs, CurrentProfile, ScenarioName};
use snnf_core::neurons::{evaluate_sequence, NeuronParams, ResetMode};
use snnf_core::tensor::Tensor;

#[test]
fn shipped_scenarios_pass() {
    for name in ScenarioName::ALL {
        let out = scenario(name).run().unwrap();
        assert!(out.passed, "{}: {}", name.name(), out.detail);
    }
}

#[test]
fn phasic_fires_once_at_onset() {
    let out = scenario(ScenarioName::Phasic).run().unwrap();
    assert_eq!(out.traces[0].1.spike_steps(), vec![0]);
}

#[test]
fn lif_never_rebounds() {
    let taus: Vec<f64> = (3..=20).map(|k| k as f64 / 2.0).collect();
    assert_eq!((taus[0], *taus.last().unwrap()), (1.5, 10.0));
    for &tau in &taus {
        for reset in [ResetMode::Soft, ResetMode::Hard] {
            for amplitude in [0.5, 1.0, 3.0, 10.0, 100.0] {
                for (onset, offset) in [(0, 1), (2, 10), (1, 15)] {
                    let profile = CurrentProfile::inhibitory_release(amplitude, onset, offset);
                    let stimuli = [("inhibition", profile)];
                    let trace = simulate(&NeuronParams::lif(tau, reset), &profile, 20).unwrap();
                    let (passed, detail) = check(ScenarioName::Rebound, &stimuli, &[("inhibition", trace)]);
                    assert!(!passed, "LIF tau={tau} rebounded: {detail}");
                }
            }
        }
    }
}

fn neuron_strategy() -> impl Strategy<Value = NeuronParams> {
    let reset = prop_oneof![Just(ResetMode::Soft), Just(ResetMode::Hard)];
    prop_oneof![
        reset.clone().prop_map(NeuronParams::integrate_and_fire),
        (1.01f64..10.0, reset.clone()).prop_map(|(tau, r)| NeuronParams::lif(tau, r)),
        (prop::collection::vec(-3.0f64..3.0, 6), reset.clone()).prop_map(|(a, r)| NeuronParams::plif(a, r)),
        (
            prop::collection::vec(-2.0f64..2.0, 6),
            prop::collection::vec(-2.0f64..2.0, 6),
            reset
        )
            .prop_map(|(l, i, r)| NeuronParams::ulif(l, i, r)),
    ]
}

proptest! {
    #[test]
    fn simulate_matches_tape(params in neuron_strategy(), xs in prop::collection::vec(-2.0f64..3.0, 6), v_reset in -0.5f64..0.5) {
        let params = params.with_reset_potential(v_reset);
        let trace = simulate_inputs(&params, &xs).unwrap();
        let (s, h, v) = evaluate_sequence(&params, &Tensor::new(vec![6, 1], xs.clone()).unwrap()).unwrap();
        prop_assert_eq!(s.data(), &trace.s[..]);
        prop_assert_eq!(h.data(), &trace.h[..]);
        prop_assert_eq!(v.data(), &trace.v[..]);
    }

    #[test]
    fn trace_invariants(params in neuron_strategy(), xs in prop::collection::vec(-2.0f64..3.0, 6)) {
        let tr = simulate_inputs(&params, &xs).unwrap();
        let c = &params.config;
        for t in 0..6 {
            prop_assert_eq!(tr.s[t] == 1.0, tr.h[t] >= c.v_threshold);
            let expect = match c.reset {
                ResetMode::Soft => tr.h[t] - c.v_threshold * tr.s[t],
                ResetMode::Hard => tr.h[t] * (1.0 - tr.s[t]) + c.v_reset * tr.s[t],
            };
            prop_assert_eq!(tr.v[t], expect);
        }
    }
}
