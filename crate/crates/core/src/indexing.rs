//! Mixed-radix helpers for tables indexed by discrete configurations.
//!
//! Throughout the crate a "configuration" of discrete variables with
//! cardinalities `cards` is stored row-major with the FIRST variable as the
//! most significant digit, so enumeration order is lexicographic.

/// Number of configurations (product of cardinalities; 1 for no variables).
pub(crate) fn config_count(cards: &[usize]) -> usize {
    cards.iter().product()
}

/// Flat index of one configuration.
pub(crate) fn index_of(cards: &[usize], cfg: &[usize]) -> usize {
    debug_assert_eq!(cards.len(), cfg.len());
    let mut idx = 0;
    for (&card, &c) in cards.iter().zip(cfg) {
        debug_assert!(c < card);
        idx = idx * card + c;
    }
    idx
}

/// Configuration at a flat index (inverse of `index_of`).
pub(crate) fn config_of(cards: &[usize], mut idx: usize) -> Vec<usize> {
    let mut cfg = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        cfg[i] = idx % cards[i];
        idx /= cards[i];
    }
    cfg
}

/// Lexicographic enumeration of every configuration.
pub(crate) fn configs(cards: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    (0..config_count(cards)).map(move |i| config_of(cards, i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_indices() {
        let cards = [3, 2, 4];
        for i in 0..config_count(&cards) {
            let cfg = config_of(&cards, i);
            assert_eq!(index_of(&cards, &cfg), i);
        }
    }

    #[test]
    fn empty_domain_has_one_config() {
        assert_eq!(config_count(&[]), 1);
        assert_eq!(config_of(&[], 0), Vec::<usize>::new());
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let all: Vec<_> = configs(&[2, 2]).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }
}
