use proptest::prelude::*;
use randtest::engine::{randomization_pvalue, randomization_test};
use randtest::schemes::{AssignmentPattern, RandomizationScheme, Transformation};
use randtest::statistics::{
    stat_centered_diff, stat_diff_sums, stat_fisher_match, OutcomeVector, StatisticKind,
    StatisticSpec,
};

fn pattern(n: usize) -> impl Strategy<Value = AssignmentPattern> {
    prop::collection::vec(any::<bool>(), n).prop_map(|b| AssignmentPattern::from_bools(&b))
}

fn outcomes(n: usize) -> impl Strategy<Value = OutcomeVector> {
    prop::collection::vec(-50.0..50.0f64, n).prop_map(|v| OutcomeVector::new(v).unwrap())
}

fn permutation(n: usize) -> impl Strategy<Value = Transformation> {
    Just((0..n).collect::<Vec<_>>())
        .prop_shuffle()
        .prop_map(|p| Transformation::permutation(p).unwrap())
}

fn sign_flip(n: usize) -> impl Strategy<Value = Transformation> {
    prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], n)
        .prop_map(|s| Transformation::sign_flip(s).unwrap())
}

fn transformation_pair(n: usize) -> impl Strategy<Value = (Transformation, Transformation)> {
    prop_oneof![
        (permutation(n), permutation(n)),
        (sign_flip(n), sign_flip(n)),
    ]
}

fn forced_balance_case() -> impl Strategy<Value = (usize, usize, Vec<i32>)> {
    (1usize..=4).prop_flat_map(|half| {
        let n = 2 * half;
        (
            Just(n),
            0..RandomizationScheme::forced_balance(n).unwrap().size() as usize,
            prop::collection::vec(-20..20i32, n),
        )
    })
}

proptest! {
    #[test]
    fn centered_diff_is_shifted_diff_sums(
        (w, y) in (2usize..20).prop_flat_map(|n| (pattern(n), outcomes(n)))
    ) {
        let n = w.len() as f64;
        let k = w.count_ones() as f64;
        let expected = stat_diff_sums(&w, &y).unwrap() - (2.0 * k - n) * y.mean();
        let got = stat_centered_diff(&w, &y).unwrap();
        prop_assert!((got - expected).abs() <= 1e-9 * (1.0 + expected.abs()), "{got} vs {expected}");
    }

    #[test]
    fn fisher_match_is_symmetric((a, b) in (1usize..40).prop_flat_map(|n| (pattern(n), pattern(n)))) {
        let ab = stat_fisher_match(&a, &b).unwrap();
        prop_assert_eq!(ab, stat_fisher_match(&b, &a).unwrap());
        let brute = (0..a.len()).filter(|&i| a.get(i) && b.get(i)).count() as u64;
        prop_assert_eq!(ab, brute);
    }

    #[test]
    fn composition_acts_as_function_composition(
        ((g, h), x) in (1usize..9).prop_flat_map(|n| (transformation_pair(n), outcomes(n)))
    ) {
        let composed = g.compose(&h).unwrap().apply(x.values()).unwrap();
        let stepwise = g.apply(&h.apply(x.values()).unwrap()).unwrap();
        prop_assert_eq!(composed, stepwise);
        prop_assert!(g.compose(&g.inverse()).unwrap().is_identity());
        prop_assert!(g.inverse().compose(&g).unwrap().is_identity());
    }

    #[test]
    fn ltt_reference_distribution_ignores_the_guess(guess_index in 0usize..70, truth_index in 0usize..70) {
        let scheme = RandomizationScheme::ltt(4).unwrap();
        let patterns = scheme.patterns().unwrap();
        let guess = &patterns[guess_index];
        let mut counts = [0u32; 5];
        for w in patterns {
            counts[stat_fisher_match(w, guess).unwrap() as usize] += 1;
        }
        prop_assert_eq!(counts, [1, 16, 36, 16, 1]);
        let p = randomization_pvalue(
            &scheme,
            &patterns[truth_index],
            &OutcomeVector::from(guess),
            &StatisticSpec::upper(StatisticKind::FisherMatch),
        )
        .unwrap()
        .exact()
        .unwrap();
        let correct = patterns[truth_index].overlap(guess);
        prop_assert_eq!(p.num, counts[correct..].iter().sum::<u32>() as u128);
    }

    #[test]
    fn raising_a_treated_response_never_raises_p(
        (n, w_index, y) in forced_balance_case(),
        bump in 1..10i32,
        pick in any::<prop::sample::Index>(),
    ) {
        let scheme = RandomizationScheme::forced_balance(n).unwrap();
        let w = &scheme.patterns().unwrap()[w_index];
        let treated: Vec<usize> = (0..n).filter(|&i| w.get(i)).collect();
        let i = treated[pick.index(treated.len())];
        let stat = StatisticSpec::upper(StatisticKind::DiffSums);
        let before = OutcomeVector::new(y.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let mut raised = before.values().to_vec();
        raised[i] += f64::from(bump);
        let after = OutcomeVector::new(raised).unwrap();
        let p0 = randomization_pvalue(&scheme, w, &before, &stat).unwrap().exact().unwrap();
        let p1 = randomization_pvalue(&scheme, w, &after, &stat).unwrap().exact().unwrap();
        prop_assert!(p1 <= p0, "{p1} > {p0}");
    }

    #[test]
    fn exhaustive_size_never_exceeds_alpha(
        y in prop::collection::vec(0..4i32, 6),
        alpha in 0.01..0.99f64,
        continuous in outcomes(6),
        use_ties in any::<bool>(),
    ) {
        let scheme = RandomizationScheme::bernoulli(6, true).unwrap();
        let y = if use_ties {
            OutcomeVector::new(y.iter().map(|&v| f64::from(v)).collect()).unwrap()
        } else {
            continuous
        };
        let stat = StatisticSpec::upper(StatisticKind::DiffSums);
        let patterns = scheme.patterns().unwrap();
        let rejections = patterns
            .iter()
            .filter(|w| randomization_test(&scheme, w, &y, &stat, alpha).unwrap().reject)
            .count();
        let bound = (alpha * patterns.len() as f64).floor() as usize;
        prop_assert!(rejections <= bound, "{rejections} > {bound}");
        if !use_ties {
            prop_assert_eq!(rejections, bound);
        }
    }
}
