//! Binomial coefficients and fixed-weight bitmask enumeration.

/// `C(n, k)` in exact integer arithmetic. Returns `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(acc)
}

/// Iterates every `n`-bit mask with exactly `k` bits set, in increasing order.
#[derive(Debug, Clone)]
pub struct FixedWeightMasks {
    next: Option<u64>,
    limit: u64,
}

impl FixedWeightMasks {
    pub fn new(n: u32, k: u32) -> Self {
        assert!(n < 64, "mask enumeration supports at most 63 bits");
        let limit = 1u64 << n;
        let next = if k > n {
            None
        } else if k == 0 {
            Some(0)
        } else {
            Some((1u64 << k) - 1)
        };
        FixedWeightMasks { next, limit }
    }
}

impl Iterator for FixedWeightMasks {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        let current = self.next?;
        self.next = if current == 0 {
            None
        } else {
            // Gosper's hack
            let c = current & current.wrapping_neg();
            let r = current + c;
            let succ = (((r ^ current) >> 2) / c) | r;
            (succ < self.limit).then_some(succ)
        };
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(8, 4), Some(70));
        assert_eq!(binomial(6, 3), Some(20));
        assert_eq!(binomial(4, 0), Some(1));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(binomial(64, 32), Some(1_832_624_140_942_590_534));
    }

    #[test]
    fn masks_match_popcount_filter() {
        for n in 0..=10u32 {
            for k in 0..=n + 1 {
                let fast: Vec<u64> = FixedWeightMasks::new(n, k).collect();
                let slow: Vec<u64> = (0..1u64 << n).filter(|m| m.count_ones() == k).collect();
                assert_eq!(fast, slow, "n={n} k={k}");
            }
        }
    }
}
