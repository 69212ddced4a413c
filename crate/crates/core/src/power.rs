//! Monte Carlo size and power studies.
//!
//! Every replication draws from its own ChaCha8 stream, selected by
//! `(test, arm, replication)` on top of the base seed, so results do not
//! depend on how replications are scheduled across threads. Tallies are
//! integer counts and the reduction is order-insensitive.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::engine::{group_statistic_values_serial, statistic_values, ValidatedGroup};
use crate::error::{invalid, Result};
use crate::rational::{alpha_floor, threshold_index, Fraction};
use crate::schemes::{
    scheme_by_name, AssignmentPattern, RandomizationScheme, Transformation, TransformationGroup,
};
use crate::statistics::{OutcomeVector, Sidedness, StatisticKind, StatisticSpec};

/// Response distribution for a unit with no treatment effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NullModel {
    /// `|Z|` with `Z ~ N(0, 1)`.
    #[default]
    HalfNormal,
    Normal,
}

impl NullModel {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        match self {
            NullModel::HalfNormal => z.abs(),
            NullModel::Normal => z,
        }
    }
}

fn default_statistic() -> StatisticKind {
    StatisticKind::CenteredDiff
}

/// Configuration of a two-scheme size/power comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    pub scheme_a: String,
    pub scheme_b: String,
    /// Additive shift applied to treated units under the alternative.
    pub effect: f64,
    #[serde(default)]
    pub null_model: NullModel,
    /// Levels as numbers or `"num/den"` strings.
    #[serde(deserialize_with = "deserialize_alphas")]
    pub alpha_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_statistic")]
    pub statistic: StatisticKind,
    #[serde(default)]
    pub sidedness: Sidedness,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AlphaEntry {
    Number(f64),
    Text(String),
}

/// Parses `"0.05"` or `"1/254"`.
pub fn parse_alpha(s: &str) -> Result<f64> {
    let s = s.trim();
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad_alpha(s))?;
            let den: f64 = den.trim().parse().map_err(|_| bad_alpha(s))?;
            num / den
        }
        None => s.parse().map_err(|_| bad_alpha(s))?,
    };
    Ok(value)
}

fn bad_alpha(s: &str) -> crate::Error {
    crate::Error::InvalidArgument(format!("cannot parse significance level {s:?}"))
}

fn deserialize_alphas<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    Vec::<AlphaEntry>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            AlphaEntry::Number(x) => Ok(x),
            AlphaEntry::Text(s) => parse_alpha(&s).map_err(serde::de::Error::custom),
        })
        .collect()
}

impl SimConfig {
    /// The two-test comparison at `n = 8` with an additive shift of 2.
    pub fn reference_study(seed: u64) -> Self {
        SimConfig {
            n: 8,
            scheme_a: "forced-balance".into(),
            scheme_b: "bernoulli-nc".into(),
            effect: 2.0,
            null_model: NullModel::HalfNormal,
            alpha_grid: vec![1.0 / 254.0, 0.005, 0.01, 0.02, 0.05],
            replications: 10_000,
            seed,
            statistic: StatisticKind::CenteredDiff,
            sidedness: Sidedness::Upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.alpha_grid.is_empty() {
            return invalid("alpha grid is empty");
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return invalid(format!("alpha {a} is outside (0, 1)"));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("alpha grid must be strictly increasing");
        }
        if !self.effect.is_finite() {
            return invalid("effect must be finite");
        }
        StatisticSpec::new(self.statistic, self.sidedness)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub test: String,
    pub alpha: f64,
    pub size: f64,
    pub power: f64,
    pub se_size: f64,
    pub se_power: f64,
    pub size_rejections: u64,
    pub power_rejections: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTable {
    pub replications: u64,
    pub seed: u64,
    pub rows: Vec<SimRow>,
}

impl SimTable {
    pub fn row(&self, test: &str, alpha: f64) -> Option<&SimRow> {
        self.rows
            .iter()
            .find(|r| r.test == test && r.alpha == alpha)
    }

    /// CSV with header `test,alpha,size,power,se_size,se_power`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,alpha,size,power,se_size,se_power\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.test, r.alpha, r.size, r.power, r.se_size, r.se_power
            ));
        }
        out
    }
}

/// Binomial standard error `sqrt(p (1 - p) / reps)`.
pub fn standard_error(rate: f64, replications: u64) -> f64 {
    (rate * (1.0 - rate) / replications as f64).sqrt()
}

/// A scheme with its patterns enumerated once for repeated exact p-values.
struct PreparedScheme<'a> {
    scheme: &'a RandomizationScheme,
    patterns: &'a [AssignmentPattern],
    floors: Vec<u128>,
}

impl<'a> PreparedScheme<'a> {
    fn new(scheme: &'a RandomizationScheme, alphas: &[f64]) -> Result<Self> {
        let patterns = scheme.patterns()?;
        let r = patterns.len() as u128;
        Ok(PreparedScheme {
            scheme,
            patterns,
            floors: alphas.iter().map(|&a| alpha_floor(a, r)).collect(),
        })
    }

    /// Per-alpha rejection flags for one simulated experiment.
    fn decide(
        &self,
        w: &AssignmentPattern,
        y: &OutcomeVector,
        stat: &StatisticSpec,
        alphas: &[f64],
    ) -> Result<Vec<bool>> {
        let observed = stat.evaluate(w, y.values())?;
        let values = statistic_values(self.patterns, y, stat)?;
        if self.scheme.is_uniform() {
            let count = values.iter().filter(|&&t| t >= observed).count() as u128;
            Ok(self.floors.iter().map(|&f| count <= f).collect())
        } else {
            let mass: f64 = self
                .patterns
                .iter()
                .zip(&values)
                .filter(|(_, &t)| t >= observed)
                .map(|(p, _)| self.scheme.weight(p))
                .sum();
            Ok(alphas.iter().map(|&a| mass <= a).collect())
        }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn simulate_experiment(
    prepared: &PreparedScheme<'_>,
    config: &SimConfig,
    stat: &StatisticSpec,
    effect: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let w = prepared.scheme.sample(rng);
    let values = (0..config.n)
        .map(|i| {
            let base = config.null_model.draw(rng);
            if w.get(i) {
                base + effect
            } else {
                base
            }
        })
        .collect();
    let y = OutcomeVector::new(values)?;
    prepared.decide(&w, &y, stat, &config.alpha_grid)
}

fn with_workers<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the study on the global thread pool.
pub fn simulate(config: &SimConfig) -> Result<SimTable> {
    with_workers(None, || simulate_inner(config))?
}

/// Runs the study on a dedicated pool of `workers` threads.
pub fn simulate_with_workers(config: &SimConfig, workers: usize) -> Result<SimTable> {
    with_workers(Some(workers), || simulate_inner(config))?
}

fn simulate_inner(config: &SimConfig) -> Result<SimTable> {
    config.validate()?;
    let stat = StatisticSpec::new(config.statistic, config.sidedness)?;
    let reps = config.replications;
    let mut rows = Vec::new();
    for (test_idx, name) in [&config.scheme_a, &config.scheme_b].into_iter().enumerate() {
        let scheme = scheme_by_name(name, config.n)?;
        let prepared = PreparedScheme::new(&scheme, &config.alpha_grid)?;
        let mut tallies = [
            vec![0u64; config.alpha_grid.len()],
            vec![0u64; config.alpha_grid.len()],
        ];
        for (arm, effect) in [(0u64, 0.0), (1u64, config.effect)] {
            let counts = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let stream = (rep << 2) | ((test_idx as u64) << 1) | arm;
                    let mut rng = stream_rng(config.seed, stream);
                    simulate_experiment(&prepared, config, &stat, effect, &mut rng)
                })
                .try_fold(
                    || vec![0u64; config.alpha_grid.len()],
                    |mut acc, decisions| {
                        for (a, d) in acc.iter_mut().zip(decisions?) {
                            *a += u64::from(d);
                        }
                        Ok::<_, crate::Error>(acc)
                    },
                )
                .try_reduce(
                    || vec![0u64; config.alpha_grid.len()],
                    |mut a, b| {
                        for (x, y) in a.iter_mut().zip(b) {
                            *x += y;
                        }
                        Ok(a)
                    },
                )?;
            tallies[arm as usize] = counts;
        }
        for (i, &alpha) in config.alpha_grid.iter().enumerate() {
            let size = tallies[0][i] as f64 / reps as f64;
            let power = tallies[1][i] as f64 / reps as f64;
            rows.push(SimRow {
                test: scheme.label().to_owned(),
                alpha,
                size,
                power,
                se_size: standard_error(size, reps),
                se_power: standard_error(power, reps),
                size_rejections: tallies[0][i],
                power_rejections: tallies[1][i],
            });
        }
    }
    Ok(SimTable {
        replications: reps,
        seed: config.seed,
        rows,
    })
}

/// `R`, the minimum p-value `1/R` and the spacing of attainable levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub label: String,
    pub n: usize,
    pub r: u128,
    pub min_p: Fraction,
    pub spacing: Fraction,
}

pub fn resolution_report(scheme: &RandomizationScheme) -> Result<Resolution> {
    if !scheme.is_uniform() {
        return invalid("resolution is defined for uniform schemes");
    }
    let r = scheme.size();
    Ok(Resolution {
        label: scheme.label().to_owned(),
        n: scheme.n(),
        r,
        min_p: Fraction::new(1, r),
        spacing: Fraction::new(1, r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rejections: u64,
    pub replications: u64,
    pub rate: f64,
    pub se: f64,
}

/// Which route a group size study takes.
#[derive(Debug, Clone, Copy)]
pub enum GroupPath<'a> {
    /// Validates the group first, as the safe test does.
    Checked(&'a TransformationGroup),
    /// Uses the element set as given.
    Unchecked(&'a [Transformation]),
}

/// Empirical rejection rate of the threshold rule under i.i.d. null data.
#[allow(clippy::too_many_arguments)]
pub fn group_null_rejection_rate(
    path: GroupPath<'_>,
    stat: &StatisticSpec,
    labels: &AssignmentPattern,
    alpha: f64,
    null_model: NullModel,
    replications: u64,
    seed: u64,
) -> Result<RateEstimate> {
    if replications == 0 {
        return invalid("replications must be at least 1");
    }
    let elements = match path {
        GroupPath::Checked(group) => ValidatedGroup::new(group)?.group().elements()?,
        GroupPath::Unchecked(elements) => elements,
    };
    if elements.is_empty() {
        return invalid("empty transformation set");
    }
    let n = labels.len();
    let k = threshold_index(alpha, elements.len() as u128) as usize;
    let rejections = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(seed, rep);
            let x = OutcomeVector::new((0..n).map(|_| null_model.draw(&mut rng)).collect())?;
            let observed = stat.evaluate(labels, x.values())?;
            let mut values = group_statistic_values_serial(elements, &x, stat, labels)?;
            let (_, kth, _) = values.select_nth_unstable_by(k - 1, f64::total_cmp);
            Ok(u64::from(observed > *kth))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let rate = rejections as f64 / replications as f64;
    Ok(RateEstimate {
        rejections,
        replications,
        rate,
        se: standard_error(rate, replications),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> SimConfig {
        SimConfig {
            replications: 400,
            ..SimConfig::reference_study(seed)
        }
    }

    #[test]
    fn alpha_strings() {
        assert_eq!(parse_alpha("1/254").unwrap(), 1.0 / 254.0);
        assert_eq!(parse_alpha("0.05").unwrap(), 0.05);
        assert!(parse_alpha("x").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(1);
        assert!(c.validate().is_ok());
        c.alpha_grid = vec![0.05, 0.01];
        assert!(c.validate().is_err());
        c.alpha_grid = vec![0.0];
        assert!(c.validate().is_err());
        let mut c = small_config(1);
        c.replications = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_determinism_across_workers() {
        let c = small_config(7);
        let one = simulate_with_workers(&c, 1).unwrap();
        let four = simulate_with_workers(&c, 4).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.to_csv(), four.to_csv());
    }

    #[test]
    fn zero_effect_power_equals_size_in_distribution() {
        let c = SimConfig {
            effect: 0.0,
            replications: 2000,
            ..SimConfig::reference_study(11)
        };
        let t = simulate(&c).unwrap();
        for r in &t.rows {
            let margin = 4.0 * (r.se_size.max(1e-3) + r.se_power.max(1e-3));
            assert!((r.size - r.power).abs() <= margin, "{r:?}");
        }
    }

    #[test]
    fn forced_balance_has_no_power_below_one_seventieth() {
        let mut c = small_config(3);
        c.alpha_grid = vec![0.004, 0.01];
        let t = simulate(&c).unwrap();
        for alpha in [0.004, 0.01] {
            let row = t.row("forced-balance", alpha).unwrap();
            assert_eq!(row.power_rejections, 0);
            assert_eq!(row.size_rejections, 0);
        }
    }

    #[test]
    fn resolutions() {
        let fb = RandomizationScheme::forced_balance(8).unwrap();
        let r = resolution_report(&fb).unwrap();
        assert_eq!(
            (r.r, r.min_p, r.spacing),
            (70, Fraction::new(1, 70), Fraction::new(1, 70))
        );
        let b = RandomizationScheme::bernoulli(8, true).unwrap();
        assert_eq!(resolution_report(&b).unwrap().r, 254);
        let one = RandomizationScheme::custom("one", vec!["01".parse().unwrap()], None).unwrap();
        let r = resolution_report(&one).unwrap();
        assert_eq!(
            (r.r, r.min_p, r.spacing),
            (1, Fraction::new(1, 1), Fraction::new(1, 1))
        );
    }

    #[test]
    fn csv_header() {
        let t = simulate(&small_config(5)).unwrap();
        let csv = t.to_csv();
        assert!(csv.starts_with("test,alpha,size,power,se_size,se_power\n"));
        assert_eq!(csv.lines().count(), 11);
    }

    #[test]
    fn toml_alpha_fractions() {
        let json = r#"{"n":8,"scheme_a":"forced-balance","scheme_b":"bernoulli-nc","effect":2.0,
            "alpha_grid":["1/254",0.005],"replications":10,"seed":1}"#;
        let c: SimConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.alpha_grid, vec![1.0 / 254.0, 0.005]);
        assert_eq!(c.statistic, StatisticKind::CenteredDiff);
        assert_eq!(c.null_model, NullModel::HalfNormal);
    }
}
