use nonlinear_response::evolution::{Channel, Dynamics, Evolver, PulseSchedule, TimedOperator};
use nonlinear_response::gpsr::{default_rules, equal_amplitude_order, responses, MultiIndex};
use nonlinear_response::models::{build_pump, build_xxz, correlation, ground_state, spin_current, Boundary, PumpSpec};
use nonlinear_response::operators::Axis;
use nonlinear_response::oracle::{nested_commutator_dense, nested_commutator_response, pulse_summed_response};
use proptest::prelude::*;

fn xxz_dynamics(delta: f64, h_e: f64, evolver: Evolver, channels: Vec<Channel>) -> Dynamics {
    let h = build_xxz(4, delta, h_e, Boundary::Open).unwrap();
    Dynamics::new(&h, PulseSchedule::new(channels).unwrap(), evolver, ground_state(&h).unwrap()).unwrap()
}

fn x_pump(site: usize, times: Vec<f64>) -> Channel {
    Channel { generator: build_pump(&PumpSpec::local(site, Axis::X), 4).unwrap(), times }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_pulse_orders_match_oracle(delta in 0.0f64..2.0, h_e in 0.0f64..1.0, t in 0.0f64..5.0) {
        let dynamics = xxz_dynamics(delta, h_e, Evolver::Exact, vec![x_pump(1, vec![0.0])]);
        let rules = default_rules(&dynamics, 4).unwrap();
        let a = correlation(4, &[(2, Axis::Z), (3, Axis::X)]).unwrap();
        let betas: Vec<MultiIndex> = (1..=4).map(|m| MultiIndex::single(m).unwrap()).collect();
        for s in responses(&dynamics, &rules, &a, &[t], &betas).unwrap() {
            let oracle = pulse_summed_response(&dynamics, &a, t, &s.beta).unwrap();
            prop_assert!((s.values[0] - oracle).abs() < 1e-9, "order {}: {} vs {}", s.order(), s.values[0], oracle);
        }
    }

    #[test]
    fn trotterised_two_channel_response_matches_oracle(t2 in 0.2f64..1.5, t in 1.5f64..4.0) {
        let dynamics = xxz_dynamics(0.5, 0.4, Evolver::Trotter1 { n_steps: 4 }, vec![x_pump(1, vec![0.0]), x_pump(2, vec![t2])]);
        let rules = default_rules(&dynamics, 3).unwrap();
        let a = spin_current(4, 1, 2, Axis::Z).unwrap();
        for beta in MultiIndex::all_of_order(2, 3) {
            let gpsr = responses(&dynamics, &rules, &a, &[t], std::slice::from_ref(&beta)).unwrap()[0].values[0];
            let oracle = pulse_summed_response(&dynamics, &a, t, &beta).unwrap();
            prop_assert!((gpsr - oracle).abs() < 1e-9);
        }
    }
}

#[test]
fn matrix_free_and_dense_oracles_agree() {
    let h = build_xxz(4, 1.3, 0.2, Boundary::Open).unwrap();
    let psi0 = ground_state(&h).unwrap();
    let b1 = build_pump(&PumpSpec::local(0, Axis::X), 4).unwrap();
    let b2 = build_pump(&PumpSpec::cosine(1), 4).unwrap();
    let a = correlation(4, &[(1, Axis::Y), (2, Axis::Y)]).unwrap();
    let seq = [TimedOperator { op: &b2, time: 1.1 }, TimedOperator { op: &b1, time: 0.4 }, TimedOperator { op: &b1, time: 0.0 }];
    for t in [1.1, 2.0, 3.3] {
        let free = nested_commutator_response(&h, &a, &seq, t, &psi0).unwrap();
        let dense = nested_commutator_dense(&h, &a, &seq, t, &psi0).unwrap();
        assert!((free - dense).abs() < 1e-11, "{free} vs {dense}");
    }
}

#[test]
fn repeated_pulses_in_one_channel_use_the_sumset() {
    let dynamics = xxz_dynamics(0.8, 0.1, Evolver::Exact, vec![x_pump(1, vec![0.0, 0.7])]);
    let rules = default_rules(&dynamics, 3).unwrap();
    let a = correlation(4, &[(1, Axis::X)]).unwrap();
    let times = [1.0, 2.5];
    for m in 1..=3 {
        let gpsr = equal_amplitude_order(&dynamics, &rules, &a, &times, m).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let oracle = pulse_summed_response(&dynamics, &a, t, &MultiIndex::single(m).unwrap()).unwrap();
            assert!((gpsr[k] - oracle).abs() < 1e-9, "order {m}, t = {t}");
        }
    }
}
