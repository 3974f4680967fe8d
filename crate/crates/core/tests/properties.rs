use bffg::cli::{verify_trial, Family};
use bffg::{
    compose_kernels, instances, pullback, pushforward, run_bffg_exact, tensor_kernels, FiniteMeasure, HPotential,
    Kernel, ModelFile, Point, RandomStream, Space, Weight,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn rows(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, m), n).prop_map(|rs| {
        rs.into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|x| x / s).collect()
            })
            .collect()
    })
}

fn sizes() -> impl Strategy<Value = (usize, usize, usize)> {
    (2usize..6, 2usize..6, 2usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composition_and_tensor_stay_stochastic(
        (a, b, c) in sizes(),
        seed in any::<u64>(),
    ) {
        let s = &mut RandomStream::new(seed);
        let k1 = instances::discrete_kernel(a, b, s);
        let k2 = instances::discrete_kernel(b, c, s);
        let composed = compose_kernels(&k1, &k2).unwrap();
        for r in composed.matrix().unwrap().row_iter() {
            prop_assert!((r.sum() - 1.0).abs() < 1e-12);
        }
        let t = tensor_kernels(&k1, &k2);
        let mu = FiniteMeasure::product(vec![
            FiniteMeasure::discrete(instances::probability_vector(a, s)).unwrap(),
            FiniteMeasure::discrete(instances::probability_vector(b, s)).unwrap(),
        ]).unwrap();
        prop_assert!((pushforward(&t, &mu).unwrap().total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_respects_composition(
        k1 in rows(3, 4),
        k2 in rows(4, 2),
        h in prop::collection::vec(0.0f64..5.0, 2),
    ) {
        prop_assume!(h.iter().any(|x| *x > 0.0));
        let (k1, k2) = (Kernel::discrete(k1).unwrap(), Kernel::discrete(k2).unwrap());
        let h = HPotential::discrete(h).unwrap();
        let direct = pullback(&compose_kernels(&k1, &k2).unwrap(), &h).unwrap();
        let stepwise = pullback(&k1, &pullback(&k2, &h).unwrap()).unwrap();
        let space = Space::Finite(3);
        let gap = (direct.to_table(&space).unwrap() - stepwise.to_table(&space).unwrap()).amax();
        prop_assert!(gap < 1e-12);
    }

    #[test]
    fn pushforward_is_linear_in_mass(k in rows(3, 3), w in prop::collection::vec(0.0f64..2.0, 3), c in 0.1f64..10.0) {
        prop_assume!(w.iter().any(|x| *x > 0.0));
        let k = Kernel::discrete(k).unwrap();
        let mu = FiniteMeasure::discrete(w).unwrap();
        let a = pushforward(&k, &mu.scale(c)).unwrap();
        let b = pushforward(&k, &mu).unwrap().scale(c);
        prop_assert!(a.max_abs_deviation(&b, &Space::Finite(3)).unwrap() < 1e-12 * c.max(1.0));
        prop_assert!((a.total_mass() - c * mu.total_mass()).abs() < 1e-12 * c.max(1.0));
    }

    #[test]
    fn gaussian_pullback_respects_composition(
        b1 in -1.5f64..1.5, beta1 in -1.0f64..1.0, q1 in 0.1f64..2.0,
        b2 in -1.5f64..1.5, beta2 in -1.0f64..1.0, q2 in 0.1f64..2.0,
        f in -2.0f64..2.0, h in 0.0f64..2.0, x in -3.0f64..3.0,
    ) {
        let k1 = Kernel::linear_gaussian_1d(b1, beta1, q1).unwrap();
        let k2 = Kernel::linear_gaussian_1d(b2, beta2, q2).unwrap();
        let g = HPotential::gaussian(0.0, vec![f], DMatrix::from_element(1, 1, h)).unwrap();
        let p = Point::real(&[x]);
        let direct = pullback(&compose_kernels(&k1, &k2).unwrap(), &g).unwrap().log_evaluate(&p).unwrap();
        let stepwise = pullback(&k1, &pullback(&k2, &g).unwrap()).unwrap().log_evaluate(&p).unwrap();
        prop_assert!((direct - stepwise).abs() < 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn equivalence_holds_on_random_instances(seed in any::<u64>()) {
        let (seq, par) = verify_trial(Family::Discrete, seed).unwrap();
        prop_assert!(seq.max_abs_deviation <= 1e-12 && par.max_abs_deviation <= 1e-12);
        prop_assert!(seq.message_error <= 1e-10 && par.message_error <= 1e-12);
        let (seq, par) = verify_trial(Family::Gaussian, seed).unwrap();
        prop_assert!(seq.relative_deviation() <= 1e-10 && par.relative_deviation() <= 1e-10);
    }

    #[test]
    fn weights_agree_across_scales(logs in prop::collection::vec(-400.0f64..400.0, 1..8)) {
        let mut w = Weight::ONE;
        for l in &logs {
            w = w.mul_log(*l);
        }
        let total: f64 = logs.iter().sum();
        prop_assert!((w.log() - total).abs() < 1e-9 * total.abs().max(1.0));
        // log scale is sticky: it is used as soon as some partial product leaves the linear range
        let left = logs
            .iter()
            .scan(0.0, |acc, l| {
                *acc += l;
                Some(*acc)
            })
            .any(|p: f64| !(1e-300..=1e300).contains(&p.exp()));
        prop_assert_eq!(w.is_log(), left);
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), path in prop::collection::vec(any::<bool>(), 0..6)) {
        let mut a = RandomStream::from_path(seed, &path);
        let mut b = RandomStream::from_path(seed, &path);
        for _ in 0..8 {
            let u = a.next_uniform();
            prop_assert!((0.0..1.0).contains(&u));
            prop_assert_eq!(u, b.next_uniform());
        }
        let (l, r) = RandomStream::new(seed).split();
        prop_assert_ne!(l, r);
    }

    #[test]
    fn random_models_round_trip_through_json(seed in any::<u64>(), len in 1usize..5) {
        let s = &mut RandomStream::new(seed);
        let mut v = serde_json::json!({
            "version": "bffg-model-v1",
            "nodes": [{"id": "r", "space": {"finite": 3}, "role": "root"}],
            "edges": [],
            "root_value": 0,
            "observations": []
        });
        let mut prev = "r".to_string();
        for i in 0..len {
            let (x, y) = (format!("x{i}"), format!("y{i}"));
            v["nodes"].as_array_mut().unwrap().push(serde_json::json!({"id": x, "space": {"finite": 3}, "role": "latent"}));
            v["nodes"].as_array_mut().unwrap().push(serde_json::json!({"id": y, "space": {"finite": 2}, "role": "leaf"}));
            let m = |r, c, s: &mut RandomStream| bffg::linalg::to_rows(&instances::stochastic_matrix(r, c, s));
            v["edges"].as_array_mut().unwrap().push(serde_json::json!({"from": prev, "to": x, "kernel": {"type": "discrete", "matrix": m(3, 3, s)}, "backward": {"type": "discrete", "matrix": m(3, 3, s)}}));
            v["edges"].as_array_mut().unwrap().push(serde_json::json!({"from": x, "to": y, "kernel": {"type": "discrete", "matrix": m(3, 2, s)}}));
            v["observations"].as_array_mut().unwrap().push(serde_json::json!({"leaf": y, "value": i % 2}));
            prev = x;
        }
        let model = ModelFile::parse(&v.to_string()).unwrap().to_tree().unwrap();
        let text = ModelFile::from_tree(&model).unwrap().to_json_pretty();
        let again = ModelFile::parse(&text).unwrap().to_tree().unwrap();
        prop_assert_eq!(&model, &again);
        let (a, b) = (run_bffg_exact(&model).unwrap(), run_bffg_exact(&again).unwrap());
        prop_assert_eq!(a, b);
    }
}
