use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use randtest::combinatorics::binomial;
use randtest::engine::{monte_carlo_pvalue, randomization_pvalue, randomization_test};
use randtest::ltt::level_table;
use randtest::power::{simulate, NullModel, SimConfig};
use randtest::schemes::{
    check_group, AssignmentPattern, CovariateWeighting, RandomizationScheme, Transformation,
    TransformationGroup, Witness,
};
use randtest::statistics::{OutcomeVector, Sidedness, StatisticKind, StatisticSpec};

fn first_half(n: usize) -> AssignmentPattern {
    AssignmentPattern::from_mask((1u64 << (n / 2)) - 1, n)
}

#[test]
fn forced_balance_size_matches_brute_force() {
    for n in (2..=16).step_by(2) {
        let brute = (0u64..1 << n)
            .filter(|m| m.count_ones() as usize == n / 2)
            .count() as u128;
        let scheme = RandomizationScheme::forced_balance(n).unwrap();
        assert_eq!(scheme.size(), brute, "n = {n}");
        assert_eq!(binomial(n as u64, n as u64 / 2), Some(brute));
        assert_eq!(scheme.patterns().unwrap().len() as u128, brute);
    }
}

#[test]
fn covariate_size_matches_brute_force() {
    for n in [4usize, 8, 12] {
        let a = (1u64 << (n / 2)) - 1;
        let b = ((1u64 << n) - 1) ^ a;
        let brute = (0u64..1 << n)
            .filter(|m| (m & a).count_ones() == (m & b).count_ones())
            .count() as u128;
        let scheme =
            RandomizationScheme::covariate_balanced(n, first_half(n), CovariateWeighting::Uniform)
                .unwrap();
        assert_eq!(scheme.size(), brute, "n = {n}");
        assert_eq!(scheme.patterns().unwrap().len() as u128, brute);
    }
}

/// Checks every pattern's frequency against its probability within 5 sigma
/// and returns the chi-square statistic.
fn frequency_check(scheme: &RandomizationScheme, draws: u32, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<AssignmentPattern, u32> = HashMap::new();
    for _ in 0..draws {
        *counts.entry(scheme.sample(&mut rng)).or_default() += 1;
    }
    let patterns = scheme.patterns().unwrap();
    assert_eq!(counts.len(), patterns.len(), "sampled outside the scheme");
    let mut chi2 = 0.0;
    for w in patterns {
        let p = scheme.weight(w);
        let expected = p * f64::from(draws);
        let observed = f64::from(counts[w]);
        let sigma = (expected * (1.0 - p)).sqrt();
        assert!(
            (observed - expected).abs() <= 5.0 * sigma,
            "{w}: {observed} vs {expected}"
        );
        chi2 += (observed - expected).powi(2) / expected;
    }
    chi2
}

#[test]
fn uniform_sampling_frequencies() {
    let scheme = RandomizationScheme::forced_balance(8).unwrap();
    let chi2 = frequency_check(&scheme, 70_000, 1);
    // 69 degrees of freedom; mean 69, sd about 11.7
    assert!(chi2 < 69.0 + 5.0 * 11.75, "chi-square {chi2}");
}

#[test]
fn sequential_covariate_law() {
    let stratum = first_half(4);
    let scheme =
        RandomizationScheme::covariate_balanced(4, stratum.clone(), CovariateWeighting::Sequential)
            .unwrap();
    // coin flips in stratum A, then a uniform subset of B of the same size
    for w in scheme.patterns().unwrap() {
        let l = w.overlap(&stratum) as u64;
        let expected = 0.25 / binomial(2, l).unwrap() as f64;
        assert!((scheme.weight(w) - expected).abs() < 1e-15, "{w}");
    }
    let total: f64 = scheme
        .patterns()
        .unwrap()
        .iter()
        .map(|w| scheme.weight(w))
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
    let chi2 = frequency_check(&scheme, 80_000, 2);
    // 5 degrees of freedom
    assert!(chi2 < 5.0 + 5.0 * 3.2, "chi-square {chi2}");
}

#[test]
fn monte_carlo_tracks_exact_p_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stat = StatisticSpec::upper(StatisticKind::CenteredDiff);
    for scheme in [
        RandomizationScheme::forced_balance(10).unwrap(),
        RandomizationScheme::bernoulli(9, true).unwrap(),
    ] {
        for _ in 0..5 {
            let y =
                OutcomeVector::new((0..scheme.n()).map(|_| rng.random::<f64>()).collect()).unwrap();
            let w = scheme.sample(&mut rng);
            let exact = randomization_pvalue(&scheme, &w, &y, &stat)
                .unwrap()
                .to_f64();
            let draws = 20_000;
            let mc = monte_carlo_pvalue(&scheme, &w, &y, &stat, draws, &mut rng)
                .unwrap()
                .to_f64();
            let sigma = (exact * (1.0 - exact) / draws as f64).sqrt();
            assert!(
                (mc - exact).abs() <= 3.0 * sigma + 1.0 / draws as f64,
                "{}: mc {mc} exact {exact}",
                scheme.label()
            );
        }
    }
}

#[test]
fn ltt_tail_sums() {
    for m in 1..=8usize {
        let n = 2 * m;
        let guess = first_half(n);
        let truths: Vec<AssignmentPattern> = (0u64..1 << n)
            .filter(|x| x.count_ones() as usize == m)
            .map(|x| AssignmentPattern::from_mask(x, n))
            .collect();
        let table = level_table(m).unwrap();
        assert_eq!(table.len(), m + 1);
        for row in &table {
            let brute = truths
                .iter()
                .filter(|t| t.overlap(&guess) >= row.min_correct)
                .count() as u128;
            assert_eq!(row.level.num, brute, "m = {m}, j = {}", row.min_correct);
            assert_eq!(row.level.den, truths.len() as u128);
        }
    }
}

#[test]
fn ltt_exhaustive_size_at_attainable_levels() {
    let scheme = RandomizationScheme::ltt(4).unwrap();
    let guess = OutcomeVector::from(&AssignmentPattern::from_mask(0b0110_1001, 8));
    let stat = StatisticSpec::upper(StatisticKind::FisherMatch);
    for row in level_table(4).unwrap().iter().skip(1) {
        let alpha = row.level.to_f64();
        let rejections = scheme
            .patterns()
            .unwrap()
            .iter()
            .filter(|w| {
                randomization_test(&scheme, w, &guess, &stat, alpha)
                    .unwrap()
                    .reject
            })
            .count() as u128;
        assert_eq!(rejections, row.level.num, "alpha = {}", row.level);
    }
}

#[test]
fn symmetric_group_minus_one_element_fails() {
    for n in 3..=4 {
        let full = TransformationGroup::symmetric(n).unwrap();
        let all = full.elements().unwrap();
        for drop in [0, 1, all.len() - 1] {
            let mut elements = all.to_vec();
            let removed = elements.remove(drop);
            let set = TransformationGroup::from_elements("partial", elements.clone()).unwrap();
            let report = check_group(&set).unwrap();
            assert!(!report.is_group);
            assert_eq!(report.has_identity, !removed.is_identity());
            for w in &report.witnesses {
                match w {
                    Witness::NotClosed { g, h, composite } => {
                        assert_eq!(&g.compose(h).unwrap(), composite);
                        assert!(!elements.contains(composite));
                    }
                    Witness::MissingInverse { element, inverse } => {
                        assert_eq!(&element.inverse(), inverse);
                        assert!(!elements.contains(inverse));
                    }
                }
            }
        }
    }
}

#[test]
fn cyclic_subgroups_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let s5 = TransformationGroup::symmetric(5).unwrap();
    for _ in 0..20 {
        let generator = s5.sample(&mut rng);
        let cyclic = TransformationGroup::cyclic(&generator).unwrap();
        let report = check_group(&cyclic).unwrap();
        assert!(report.is_group, "{}", cyclic.label());
        assert!(report.witnesses.is_empty());
    }
    let flip: Transformation = "+-+-".parse().unwrap();
    let cyclic = TransformationGroup::cyclic(&flip).unwrap();
    assert_eq!(cyclic.order(), 2);
    assert!(check_group(&cyclic).unwrap().is_group);
}

#[test]
fn simulated_size_respects_alpha() {
    for (scheme_a, scheme_b, n) in [
        ("forced-balance", "bernoulli-nc", 8),
        ("ltt", "bernoulli", 6),
    ] {
        let config = SimConfig {
            n,
            scheme_a: scheme_a.into(),
            scheme_b: scheme_b.into(),
            effect: 1.0,
            null_model: NullModel::Normal,
            alpha_grid: vec![0.01, 0.05, 0.1, 0.2],
            replications: 4000,
            seed: 17,
            statistic: StatisticKind::CenteredDiff,
            sidedness: Sidedness::TwoSided,
        };
        let table = simulate(&config).unwrap();
        for row in &table.rows {
            let se = (row.alpha * (1.0 - row.alpha) / 4000.0).sqrt();
            assert!(
                row.size <= row.alpha + 3.0 * se,
                "{} at {}: {}",
                row.test,
                row.alpha,
                row.size
            );
        }
    }
}

#[test]
fn levels_between_attainable_points_share_results() {
    let mut config = SimConfig::reference_study(23);
    config.replications = 2000;
    let table = simulate(&config).unwrap();
    let at = |test: &str, alpha: f64| table.row(test, alpha).unwrap();
    let (low, high) = (at("bernoulli-nc", 1.0 / 254.0), at("bernoulli-nc", 0.005));
    assert_eq!(low.size_rejections, high.size_rejections);
    assert_eq!(low.power_rejections, high.power_rejections);
    for alpha in [1.0 / 254.0, 0.005, 0.01] {
        let row = at("forced-balance", alpha);
        assert_eq!(row.size_rejections + row.power_rejections, 0);
    }
}
