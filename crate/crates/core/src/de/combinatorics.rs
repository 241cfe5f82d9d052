use num_bigint::BigUint;

use crate::error::{Error, Result};

/// Exact binomial coefficient C(n, k).
pub fn combinations_count(n: u64, k: u64) -> Result<BigUint> {
    if k > n {
        return Err(Error::InvalidArgument(format!("C({n}, {k}) needs k <= n")));
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    // After step i the accumulator equals C(n - k + i, i), so each
    // division is exact.
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_values() {
        assert_eq!(combinations_count(4, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(combinations_count(9, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(combinations_count(9, 9).unwrap(), BigUint::from(1u32));
        assert_eq!(combinations_count(0, 0).unwrap(), BigUint::from(1u32));
        assert!(combinations_count(3, 4).is_err());
    }

    #[test]
    fn pascal_rule() {
        for n in 1..40u64 {
            for k in 1..n {
                assert_eq!(
                    combinations_count(n, k).unwrap(),
                    combinations_count(n - 1, k - 1).unwrap() + combinations_count(n - 1, k).unwrap()
                );
            }
        }
    }
}
