use proptest::prelude::*;
use snnf_core::readout::{aggregate_mean, aggregate_quantized, cross_entropy};
use snnf_core::tensor::{Tape, Tensor};

proptest! {
    #[test]
    fn unit_weights_equal_mean_bitwise(
        steps in 1usize..9,
        batch in 1usize..4,
        classes in 1usize..6,
        seed in prop::collection::vec(-50.0f64..50.0, 9 * 4 * 6),
    ) {
        let n = steps * batch * classes;
        let o = Tensor::new(vec![steps, batch, classes], seed[..n].to_vec()).unwrap();
        let mut tape = Tape::new();
        let ov = tape.constant(o);
        let w = tape.constant(Tensor::from_vec(vec![1.0; steps]));
        let m = aggregate_mean(&mut tape, ov).unwrap();
        let q = aggregate_quantized(&mut tape, ov, w).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(tape.value(m)), bits(tape.value(q)));
    }

    #[test]
    fn uniform_logits_cost_log_classes(classes in 2usize..50, batch in 1usize..5, level in -100.0f64..100.0) {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::full(&[batch, classes], level));
        let labels: Vec<usize> = (0..batch).map(|b| b % classes).collect();
        let loss = cross_entropy(&mut tape, l, &labels).unwrap();
        prop_assert!((tape.value(loss).item() - (classes as f64).ln()).abs() <= 1e-12);
    }
}
