//! Closed-form operation counts for the in-subarray multiply.

/// Number of single-bit AND partial products in an `n`-bit multiply:
/// `(1 + 2 + ... + (n-1)) * 2 + n`, i.e. `n^2`.
pub fn and_count(n: u32) -> u64 {
    let n = n as u64;
    (1..n).sum::<u64>() * 2 + n
}

/// Number of ADD operations in an `n`-bit multiply:
/// `(1 + 2 + ... + (n-2)) * 2 + (n-1) + 1` for `n >= 2`, zero for `n == 1`.
pub fn add_count(n: u32) -> u64 {
    if n < 2 {
        return 0;
    }
    let n = n as u64;
    (1..n - 1).sum::<u64>() * 2 + (n - 1) + 1
}

/// AAP commands issued by one `n`-bit multiply.
///
/// `3n^2 + 3(n-1)^2 + 4` for `n <= 2`, `3n^2 + 4(n-1)^3 + 4(n-1)` above that.
pub fn mul_aap_count(n: u32) -> u64 {
    let n = n as u64;
    if n <= 2 {
        3 * n * n + 3 * (n - 1) * (n - 1) + 4
    } else {
        let m = n - 1;
        3 * n * n + 4 * m * m * m + 4 * m
    }
}

/// AAP commands for a standalone `n`-bit majority-based addition.
pub fn add_aap_count(n: u32) -> u64 {
    4 * n as u64 + 1
}

/// AAP commands taken by each accumulator ADD inside an `n`-bit multiply (`n > 2`).
pub fn intermediate_add_aap_count(n: u32) -> u64 {
    4 * (n as u64 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn and_counts() {
        assert_eq!(and_count(2), 4);
        assert_eq!(and_count(1), 1);
        assert_eq!(and_count(4), 16);
        for n in 1..=16 {
            assert_eq!(and_count(n), (n * n) as u64);
        }
    }

    #[test]
    fn add_counts() {
        assert_eq!(add_count(2), 2);
        assert_eq!(add_count(1), 0);
        assert_eq!(add_count(4), 10);
        for n in 2..=16u64 {
            assert_eq!(add_count(n as u32), (n - 2) * (n - 1) + n);
        }
    }

    #[test]
    fn mul_aap_counts() {
        assert_eq!(mul_aap_count(1), 7);
        assert_eq!(mul_aap_count(2), 19);
        assert_eq!(mul_aap_count(4), 48 + 108 + 12);
        assert_eq!(mul_aap_count(8), 1592);
    }

    #[test]
    fn wide_branch_splits_into_and_and_add_costs() {
        for n in 3..=16 {
            assert_eq!(
                mul_aap_count(n),
                3 * and_count(n) + add_count(n) * intermediate_add_aap_count(n)
            );
        }
    }
}
