use proptest::prelude::*;
use srnerv_core::model::{bind, forward_frame, Binding};
use srnerv_core::tensor::Graph;
use srnerv_testkit::gradcheck::{check_generate, check_ops, generate_instance, project};
use srnerv_testkit::Lcg;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_op_matches_central_differences(seed in any::<u64>()) {
        if let Err(e) = check_ops(seed) {
            prop_assert!(false, "{}", e);
        }
    }

    #[test]
    fn generate_matches_central_differences(seed in any::<u64>()) {
        if let Err(e) = check_generate(seed) {
            prop_assert!(false, "{}", e);
        }
    }
}

#[test]
fn trainable_binding_reaches_every_leaf() {
    let (case, _) = generate_instance(11);
    let mut g = Graph::<f64>::new();
    let bound = bind(&mut g, &case.store, Binding::Trainable);
    let out = forward_frame(&mut g, &case.store, &bound.used, case.t).unwrap();
    let l = project(&mut g, out);
    g.backward(l).unwrap();
    for (p, v) in case.store.params().iter().zip(&bound.leaves) {
        let grad = g.grad(*v).unwrap();
        assert!(
            grad.data().iter().any(|x| *x != 0.0),
            "{} has no gradient",
            p.name
        );
    }
}

#[test]
fn fake_quant_passes_gradients_straight_through() {
    let mut r = Lcg(4);
    let x = r.tensor(&[3, 4, 2], 1.0);
    let mut g = Graph::<f64>::new();
    let v = g.param(x.clone());
    let q = g.fake_quant(v, 6);
    let l = project(&mut g, q);
    g.backward(l).unwrap();
    let through = g.grad(v).unwrap();

    let mut g2 = Graph::<f64>::new();
    let v2 = g2.param(x);
    let l2 = project(&mut g2, v2);
    g2.backward(l2).unwrap();
    assert_eq!(through, g2.grad(v2).unwrap());
}
