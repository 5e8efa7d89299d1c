mod common;

use common::{oracle_step, OracleNeuron, OracleParams};
use proptest::prelude::*;
use tinysnn::encoding::SpikeTrain;
use tinysnn::metrics::OpCounts;
use tinysnn::network::{NoPlasticity, WeightMatrix};
use tinysnn::{LayerParams, NetworkModel};

fn oracle_params(p: &LayerParams) -> OracleParams {
    OracleParams {
        v_rest: p.v_rest,
        v_reset: p.v_reset,
        v_thresh_base: p.v_thresh_base,
        tau_mem: p.tau_mem,
        theta_inc: p.theta_inc,
        tau_theta: p.tau_theta,
        t_refrac: p.t_refrac,
        w_inh: p.w_inh,
    }
}

fn run_both(w: Vec<Vec<f64>>, params: LayerParams, inputs: &[Vec<bool>]) {
    let n_in = w.len();
    let n = w[0].len();
    let flat: Vec<f64> = w.iter().flatten().copied().collect();
    let mut model = NetworkModel::with_weights(WeightMatrix::from_vec(n_in, n, flat).unwrap(), 1.0, params).unwrap();
    let op = oracle_params(&params);
    let mut neurons = vec![
        OracleNeuron {
            v: params.v_rest,
            theta: 0.0,
            refrac: 0
        };
        n
    ];
    let mut ops = OpCounts::default();
    for (t, x) in inputs.iter().enumerate() {
        let got = model.step_layer(x, &mut ops).unwrap();
        let want = oracle_step(&mut neurons, &w, x, &op);
        assert_eq!(got, want, "spikes at step {t}");
        for (j, s) in model.states.iter().enumerate() {
            assert_eq!(s.v_mem, neurons[j].v, "v_mem of {j} at step {t}");
            assert_eq!(s.theta, neurons[j].theta, "theta of {j} at step {t}");
            assert_eq!(s.refrac_remaining, neurons[j].refrac, "refractory of {j} at step {t}");
        }
    }
}

fn single_input(pattern: &str) -> Vec<Vec<bool>> {
    pattern.chars().map(|c| vec![c == '1']).collect()
}

#[test]
fn single_spike_fires_first_neuron_only() {
    let mut model = NetworkModel::with_weights(
        WeightMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
        1.0,
        LayerParams::default(),
    )
    .unwrap();
    let out = model.step_layer(&[true], &mut OpCounts::default()).unwrap();
    assert_eq!(out, vec![true, false]);
    assert_eq!(model.states[0].v_mem, 0.0);
    assert_eq!(model.states[1].v_mem, 0.0);
}

#[test]
fn high_threshold_integrates_without_firing() {
    let params = LayerParams {
        v_thresh_base: 2.0,
        ..LayerParams::default()
    };
    let mut model = NetworkModel::with_weights(WeightMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(), 1.0, params)
        .unwrap();
    let out = model.step_layer(&[true], &mut OpCounts::default()).unwrap();
    assert_eq!(out, vec![false, false]);
    assert_eq!(model.states[0].v_mem, 1.0);
}

#[test]
fn three_consecutive_spikes_respect_refractory() {
    let train = SpikeTrain::from_dense(&[vec![true, true, true]]).unwrap();
    let mut model = NetworkModel::with_weights(
        WeightMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(),
        1.0,
        LayerParams::default(),
    )
    .unwrap();
    let counts = model.present_sample(&train, None, &mut OpCounts::default()).unwrap();
    // fires at step 1, then is refractory for the next five steps
    assert_eq!(counts, vec![1, 0]);
    let short_refrac = LayerParams {
        t_refrac: 0,
        ..LayerParams::default()
    };
    let mut model = NetworkModel::with_weights(WeightMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap(), 1.0, short_refrac)
        .unwrap();
    let counts = model.present_sample(&train, None, &mut OpCounts::default()).unwrap();
    assert_eq!(counts, vec![3, 0]);
}

#[test]
fn twenty_step_scenarios_match_oracle() {
    let patterns = [
        "10000000000000000000",
        "11100000000000000000",
        "11111111111111111111",
        "10101010101010101010",
        "11011001110100011101",
        "00000000000000000000",
    ];
    let settings = [
        (vec![vec![1.0, 0.0]], LayerParams::default()),
        (
            vec![vec![1.0, 0.0]],
            LayerParams {
                v_thresh_base: 2.0,
                ..LayerParams::default()
            },
        ),
        (
            vec![vec![0.3, 0.25]],
            LayerParams {
                t_refrac: 2,
                theta_inc: 0.05,
                tau_theta: 10.0,
                ..LayerParams::default()
            },
        ),
        (
            vec![vec![0.45, 0.4]],
            LayerParams {
                t_refrac: 1,
                w_inh: 0.3,
                tau_mem: 4.0,
                v_rest: -0.1,
                v_reset: -0.2,
                ..LayerParams::default()
            },
        ),
    ];
    for (w, params) in &settings {
        for p in patterns {
            run_both(w.clone(), *params, &single_input(p));
        }
    }
}

proptest! {
    #[test]
    fn random_networks_match_oracle(
        n_in in 1usize..5,
        n in 1usize..5,
        seed_w in proptest::collection::vec(0.0f64..1.0, 25),
        raster in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 5), 30),
        thresh in 0.2f64..2.0,
        w_inh in 0.0f64..0.5,
        t_refrac in 0u32..4,
    ) {
        let w: Vec<Vec<f64>> = (0..n_in).map(|i| (0..n).map(|j| seed_w[i * 5 + j]).collect()).collect();
        let params = LayerParams { v_thresh_base: thresh, w_inh, t_refrac, tau_theta: 50.0, ..LayerParams::default() };
        let inputs: Vec<Vec<bool>> = raster.iter().map(|r| r[..n_in].to_vec()).collect();
        run_both(w, params, &inputs);
    }

    #[test]
    fn competition_only_firing_neurons_rise(
        seed_w in proptest::collection::vec(0.0f64..1.0, 6),
        raster in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 2), 25),
    ) {
        let w = WeightMatrix::from_vec(2, 3, seed_w).unwrap();
        let mut model = NetworkModel::with_weights(w, 1.0, LayerParams { w_inh: 0.2, ..LayerParams::default() }).unwrap();
        let mut ops = OpCounts::default();
        for x in &raster {
            let before: Vec<f64> = model.states.iter().map(|s| s.v_mem).collect();
            let out = model.step_layer(x, &mut ops).unwrap();
            prop_assert!(model.weights.as_slice().iter().all(|w| (0.0..=1.0).contains(w)));
            if out.iter().any(|s| *s) {
                for j in 0..3 {
                    // non-firing neurons can only gain their own drive minus inhibition
                    if !out[j] {
                        let drive: f64 = (0..2).filter(|&i| x[i]).map(|i| model.weights.get(i, j)).sum();
                        let leak = (0.0 - before[j]) / 100.0;
                        prop_assert!(model.states[j].v_mem <= (before[j] + leak + drive - 0.2).max(0.0) + 1e-12);
                    }
                }
            }
        }
    }
}

#[test]
fn plasticity_hook_adapts_theta_inference_freezes_it() {
    let w = WeightMatrix::from_vec(1, 1, vec![1.0]).unwrap();
    let mut model = NetworkModel::with_weights(w, 1.0, LayerParams::default()).unwrap();
    let train = SpikeTrain::from_dense(&[vec![true; 10]]).unwrap();
    model.present_sample(&train, None, &mut OpCounts::default()).unwrap();
    assert_eq!(model.states[0].theta, 0.0);
    let mut hook = NoPlasticity;
    model.present_sample(&train, Some(&mut hook), &mut OpCounts::default()).unwrap();
    assert!(model.states[0].theta > 0.0);
    let theta = model.states[0].theta;
    model.reset_dynamic_state();
    model.reset_dynamic_state();
    assert_eq!(model.states[0].theta, theta);
    let silent = vec![false];
    assert_eq!(model.step_layer(&silent, &mut OpCounts::default()).unwrap(), vec![false]);
}
