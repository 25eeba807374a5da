use proptest::prelude::*;

use marginlab::geometry::max_margin_linear;
use marginlab::predictors::{layer_norms, normalized_margin, rebalance_layers, HomogeneousMlp, LinearPredictor, Predictor};
use marginlab::risk::Objective;
use marginlab::{Dataset, LossKind, WeightVector};

fn dataset(d: usize, n: usize) -> impl Strategy<Value = Dataset> {
    (
        prop::collection::vec(prop::collection::vec(-2.0..2.0f64, d), n),
        prop::collection::vec(any::<bool>(), n),
    )
        .prop_map(|(rows, signs)| {
            let labels = signs.into_iter().map(|s| if s { 1.0 } else { -1.0 }).collect();
            Dataset::new(rows, labels, None).unwrap()
        })
}

fn weights(n: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.1..10.0f64, n).prop_map(|w| WeightVector::new(w, 10.0).unwrap())
}

fn loss() -> impl Strategy<Value = LossKind> {
    prop_oneof![Just(LossKind::Exponential), Just(LossKind::Logistic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_differences(
        data in dataset(3, 5),
        w in weights(5),
        theta in prop::collection::vec(-1.0..1.0f64, 3),
        loss in loss(),
        lambda in prop_oneof![Just(0.0), 0.0..0.5f64],
    ) {
        let p = LinearPredictor::new(3);
        let obj = Objective::new(&p, &data, &w, loss, lambda, 2.0).unwrap();
        let g = obj.gradient(&theta).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (obj.risk(&up).unwrap().risk - obj.risk(&down).unwrap().risk) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + g[i].abs()), "coordinate {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn mlp_output_is_homogeneous(
        theta in prop::collection::vec(-1.0..1.0f64, 2 * 4 + 4),
        x in prop::collection::vec(-2.0..2.0f64, 2),
        c in 0.1..10.0f64,
    ) {
        let net = HomogeneousMlp::relu(vec![2, 4, 1]).unwrap();
        let f = net.forward(&theta, &x).unwrap();
        let scaled: Vec<f64> = theta.iter().map(|v| v * c).collect();
        let fc = net.forward(&scaled, &x).unwrap();
        prop_assert!((fc - c * c * f).abs() <= 1e-12 * (1.0 + (c * c * f).abs()));
    }

    #[test]
    fn normalized_margin_is_scale_invariant(
        data in dataset(2, 6),
        theta in prop::collection::vec(-1.0..1.0f64, 2 * 3 + 3),
        c in 0.1..10.0f64,
    ) {
        let net = HomogeneousMlp::relu(vec![2, 3, 1]).unwrap();
        prop_assume!(theta.iter().any(|v| v.abs() > 1e-3));
        let scaled: Vec<f64> = theta.iter().map(|v| v * c).collect();
        let a = normalized_margin(&net, &theta, &data).unwrap().gamma_tilde;
        let b = normalized_margin(&net, &scaled, &data).unwrap().gamma_tilde;
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn rebalancing_is_idempotent_and_preserves_outputs(
        theta in prop::collection::vec(0.05..1.0f64, 2 * 3 + 3),
        x in prop::collection::vec(-2.0..2.0f64, 2),
    ) {
        let net = HomogeneousMlp::relu(vec![2, 3, 1]).unwrap();
        let once = rebalance_layers(&net, &theta).unwrap();
        let twice = rebalance_layers(&net, once.as_slice()).unwrap();
        prop_assert!((&once - &twice).norm() <= 1e-12 * once.norm());
        let norms = layer_norms(&net, once.as_slice());
        prop_assert!((norms[0] - norms[1]).abs() <= 1e-12 * norms[0]);
        let f = net.forward(&theta, &x).unwrap();
        let g = net.forward(once.as_slice(), &x).unwrap();
        prop_assert!((f - g).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn risk_is_monotone_in_each_weight(
        data in dataset(2, 4),
        w in weights(4),
        theta in prop::collection::vec(-3.0..3.0f64, 2),
        i in 0usize..4,
        bump in 0.01..5.0f64,
        loss in loss(),
    ) {
        let p = LinearPredictor::new(2);
        let mut raised = w.as_slice().to_vec();
        raised[i] += bump;
        let w2 = WeightVector::new(raised, 20.0).unwrap();
        let a = Objective::unregularized(&p, &data, &w, loss).unwrap().risk(&theta).unwrap().log_risk;
        let b = Objective::unregularized(&p, &data, &w2, loss).unwrap().risk(&theta).unwrap().log_risk;
        prop_assert!(b >= a);
    }

    #[test]
    fn log_risk_agrees_with_direct_sum(
        data in dataset(2, 5),
        w in weights(5),
        theta in prop::collection::vec(-5.0..5.0f64, 2),
    ) {
        let p = LinearPredictor::new(2);
        let obj = Objective::unregularized(&p, &data, &w, LossKind::Exponential).unwrap();
        let direct: f64 = (0..data.len())
            .map(|i| {
                let m = data.label(i) * p.forward(&theta, data.row(i)).unwrap();
                w.as_slice()[i] * (-m).exp()
            })
            .sum::<f64>()
            / data.len() as f64;
        let r = obj.risk(&theta).unwrap();
        prop_assert!((r.log_risk - direct.ln()).abs() <= 1e-12 * (1.0 + direct.ln().abs()));
        prop_assert!((r.risk - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn certificate_margin_is_attained_and_not_beaten(
        data in dataset(2, 5),
        probe in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let cert = max_margin_linear(&data).unwrap();
        prop_assume!(cert.separable());
        let attained = cert.primal_margin(&data).unwrap();
        prop_assert!((attained - cert.gamma_star).abs() <= 1e-6);
        let norm = (probe[0] * probe[0] + probe[1] * probe[1]).sqrt();
        prop_assume!(norm > 1e-6);
        let probe_margin = (0..data.len())
            .map(|i| data.label(i) * (probe[0] * data.row(i)[0] + probe[1] * data.row(i)[1]) / norm)
            .fold(f64::INFINITY, f64::min);
        prop_assert!(probe_margin <= cert.gamma_star + cert.duality_gap + 1e-9);
    }
}
