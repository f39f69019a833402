mod common;

use neuacf::nn::Activation;
use neuacf::FusionMode;

fn check(l: usize, fusion: FusionMode, output: Activation) {
    for seed in 0..3 {
        let (mut model, features, batch) =
            common::gradient_fixture(l, fusion.clone(), output, seed);
        let err = common::gradient_check(&mut model, &features, &batch, 1e-6);
        assert!(
            err < 1e-5,
            "{fusion} L={l} {output:?} seed {seed}: relative error {err:e}"
        );
    }
}

#[test]
fn attention_gradients() {
    for l in [2, 3] {
        check(l, FusionMode::Attention, Activation::Relu);
        check(l, FusionMode::Attention, Activation::Identity);
    }
}

#[test]
fn self_attention_gradients() {
    for l in [2, 3] {
        check(l, FusionMode::SelfAttention, Activation::Relu);
        check(l, FusionMode::SelfAttention, Activation::Identity);
    }
}

#[test]
fn average_and_single_gradients() {
    check(3, FusionMode::Average, Activation::Relu);
    check(2, FusionMode::Single("B".into()), Activation::Identity);
}
