//! Cross-module property tests: algebraic invariants that must hold for all
//! inputs, not just the hand-picked oracle cases in the unit suites.

use edg_core::config::{parse_config_str, serialize_config};
use edg_core::datagen::{gen_rotated_gaussian, gen_sine, split_train_val, DomainRole};
use edg_core::dda::{transform_augment_value, TransformerParams};
use edg_core::nn::{cross_entropy_value, Activation};
use edg_core::report::sample_std;
use edg_core::rng::derive_stream;
use edg_core::tensor::{self, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Softmax rows form a probability distribution regardless of the logit
    // scale, and a constant per-row shift leaves the distribution unchanged.
    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(
        rows in 1usize..5,
        cols in 2usize..6,
        scale in 0.1f64..30.0,
        shift in -40.0f64..40.0,
        raw in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let data: Vec<f64> = raw.iter().take(rows * cols).map(|v| v * scale).collect();
        let x = Tensor::matrix(rows, cols, data.clone()).unwrap();
        let p = tensor::softmax(&x).unwrap();
        for i in 0..rows {
            let s: f64 = p.data()[i * cols..(i + 1) * cols].iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-10, "row {i} sums to {s}");
        }
        let shifted = Tensor::matrix(rows, cols, data.iter().map(|v| v + shift).collect()).unwrap();
        let q = tensor::softmax(&shifted).unwrap();
        for (a, b) in p.data().iter().zip(q.data()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    // Cross entropy is non-negative and invariant to per-row logit shifts.
    #[test]
    fn cross_entropy_shift_invariant_and_nonnegative(
        rows in 1usize..5,
        cols in 2usize..5,
        shift in -25.0f64..25.0,
        raw in prop::collection::vec(-8.0f64..8.0, 20),
        label_pick in prop::collection::vec(0usize..100, 4),
    ) {
        let data: Vec<f64> = raw.iter().take(rows * cols).copied().collect();
        let labels: Vec<usize> = (0..rows).map(|i| label_pick[i] % cols).collect();
        let x = Tensor::matrix(rows, cols, data.clone()).unwrap();
        let ce = cross_entropy_value(&x, &labels).unwrap();
        prop_assert!(ce >= 0.0, "cross entropy {ce} negative");
        let shifted = Tensor::matrix(rows, cols, data.iter().map(|v| v + shift).collect()).unwrap();
        let ce2 = cross_entropy_value(&shifted, &labels).unwrap();
        prop_assert!((ce - ce2).abs() <= 1e-9, "{ce} vs {ce2}");
    }

    // With freshly initialized value/skip nets (zeroed last layers) the
    // augmentation is exactly the identity on queries — for every feature
    // dimension, history shape, and input values, bit for bit.
    #[test]
    fn augmentation_is_identity_at_init(
        d in 1usize..4,
        hidden in 1usize..5,
        n in 1usize..5,
        m in 1usize..6,
        seed in 0u64..1000,
        raw in prop::collection::vec(-10.0f64..10.0, 12),
    ) {
        let mut rng = derive_stream(seed, "prop.tf", 0);
        let tf = TransformerParams::init(&[d, hidden, d], Activation::Relu, &mut rng).unwrap();
        let z = Tensor::matrix(n, d, raw.iter().cycle().take(n * d).copied().collect()).unwrap();
        let hist = Tensor::matrix(m, d, (0..m * d).map(|i| (i as f64).sin()).collect()).unwrap();
        let out = transform_augment_value(&tf, &z, &[&hist]).unwrap();
        prop_assert_eq!(out.data(), z.data());
    }

    // The sine generator's labels are exactly the advertised rule, samples
    // stay inside the documented box, and each domain covers its strip.
    #[test]
    fn sine_generator_labels_match_rule(
        n_domains in 3usize..8,
        n_per in 4usize..24,
        amp in 0.5f64..2.0,
        margin in 0.1f64..1.0,
        seed in 0u64..500,
    ) {
        let ds = gen_sine(n_domains, n_per, 1, amp, margin, seed).unwrap();
        let again = gen_sine(n_domains, n_per, 1, amp, margin, seed).unwrap();
        prop_assert_eq!(&ds, &again, "generator must be deterministic");
        let strip = std::f64::consts::PI / 3.0;
        for dom in ds.sources.iter().chain(&ds.targets) {
            for i in 0..dom.n() {
                let x1 = dom.x.at2(i, 0);
                let x2 = dom.x.at2(i, 1);
                prop_assert!(x1 >= (dom.t - 1) as f64 * strip && x1 < dom.t as f64 * strip);
                prop_assert!(x2.abs() <= amp + margin);
                prop_assert_eq!(dom.y[i], usize::from(x2 > amp * (x1).sin()));
            }
        }
    }

    // Rotated Gaussian: deterministic, last n_targets domains tagged and
    // positioned as targets, domain indices contiguous from 1.
    #[test]
    fn rotated_gaussian_roles_and_determinism(
        n_domains in 3usize..9,
        n_per in 2usize..20,
        delta in 1.0f64..45.0,
        n_targets in 1usize..3,
        seed in 0u64..500,
    ) {
        prop_assume!(n_targets < n_domains - 1);
        let ds = gen_rotated_gaussian(n_domains, n_per, delta, n_targets, seed).unwrap();
        let again = gen_rotated_gaussian(n_domains, n_per, delta, n_targets, seed).unwrap();
        prop_assert_eq!(&ds, &again);
        prop_assert_eq!(ds.sources.len() + ds.targets.len(), n_domains);
        prop_assert_eq!(ds.targets.len(), n_targets);
        for (i, dom) in ds.sources.iter().chain(&ds.targets).enumerate() {
            prop_assert_eq!(dom.t, i + 1, "contiguous domain indices");
            let want = if i < ds.sources.len() { DomainRole::Source } else { DomainRole::Target };
            prop_assert_eq!(dom.role, want);
            prop_assert_eq!(dom.n(), n_per);
        }
    }

    // Train/val splits partition every source domain: sizes add up, the row
    // multiset is preserved, and the split is deterministic in the seed.
    #[test]
    fn split_partitions_each_domain(
        frac in 0.15f64..0.85,
        n_per in 4usize..30,
        seed in 0u64..200,
    ) {
        let ds = gen_rotated_gaussian(4, n_per, 10.0, 1, seed).unwrap();
        let (tr, va) = split_train_val(&ds, frac, seed).unwrap();
        for ((t, v), orig) in tr.sources.iter().zip(&va.sources).zip(&ds.sources) {
            let expect_train = ((n_per as f64) * frac).round().clamp(1.0, (n_per - 1) as f64);
            prop_assert_eq!(t.n(), expect_train as usize);
            prop_assert_eq!(t.n() + v.n(), orig.n());
            let row_bits = |dom: &edg_core::datagen::DomainSamples, i: usize| {
                (dom.x.at2(i, 0).to_bits(), dom.x.at2(i, 1).to_bits(), dom.y[i])
            };
            let mut got: Vec<_> = (0..t.n()).map(|i| row_bits(t, i)).collect();
            got.extend((0..v.n()).map(|i| row_bits(v, i)));
            let mut want: Vec<_> = (0..orig.n()).map(|i| row_bits(orig, i)).collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }
    }

    // Configs round-trip: parse(serialize(cfg)) == cfg across methods,
    // datasets, and hyperparameter values.
    #[test]
    fn config_round_trips(
        method_ix in 0usize..3,
        dataset_ix in 0usize..2,
        alpha in 0.01f64..4.0,
        lambda in 0.0f64..1.0,
        batch in 1usize..64,
        val_frac in 0.05f64..0.95,
        seeds in prop::collection::btree_set(0u64..50, 1..5),
    ) {
        let method = ["dda", "ldda", "erm"][method_ix];
        let dataset = ["rotated_gaussian", "sine"][dataset_ix];
        let seeds_txt = seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
        let mut text = format!(
            "method={method}\ndataset={dataset}\nseeds={seeds_txt}\nval_frac={val_frac}\n"
        );
        if method == "dda" {
            text.push_str(&format!("alpha={alpha}\nlambda={lambda}\nbatch={batch}\n"));
        }
        let cfg = parse_config_str(&text).unwrap();
        let round = parse_config_str(&serialize_config(&cfg)).unwrap();
        prop_assert_eq!(cfg, round);
    }

    // Sample std: non-negative, zero for constants, translation invariant.
    #[test]
    fn sample_std_translation_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 1..12),
        c in -50.0f64..50.0,
    ) {
        let s = sample_std(&xs);
        prop_assert!(s >= 0.0);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let spread = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!((s - sample_std(&shifted)).abs() <= 1e-9 * (1.0 + spread + c.abs()));
        // Not exactly 0: the mean of n copies of c can differ from c by an ulp.
        let constant = vec![c; xs.len()];
        prop_assert!(sample_std(&constant) <= 1e-12 * (1.0 + c.abs()));
    }
}
