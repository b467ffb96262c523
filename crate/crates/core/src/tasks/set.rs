//! SET triples: cards have 4 attributes with 3 values each (81 cards); a
//! triple is a SET iff every attribute column is all-equal or all-distinct,
//! equivalently iff every column sums to 0 mod 3.

use crate::engine::{tag, Rng};
use crate::error::{LabError, Result};

pub const N_ATTRS: usize = 4;
pub const N_VALUES: usize = 3;
pub const N_CARDS: usize = 81;
/// One-hot width per card: 4 attributes x 3 values.
pub const D_CARD: usize = N_ATTRS * N_VALUES;

pub type Card = [u8; N_ATTRS];

#[derive(Debug, Clone, PartialEq)]
pub struct SetTriple {
    pub cards: [Card; 3],
    /// 3 x 12 one-hot concatenation, row-major.
    pub embedding: [f64; 3 * D_CARD],
    pub label: bool,
}

/// Card with index c in 0..81, base-3 digits most significant first.
pub fn card_from_index(c: usize) -> Card {
    [
        ((c / 27) % 3) as u8,
        ((c / 9) % 3) as u8,
        ((c / 3) % 3) as u8,
        (c % 3) as u8,
    ]
}

pub fn card_index(card: &Card) -> usize {
    card.iter().fold(0usize, |acc, &v| acc * 3 + v as usize)
}

pub fn one_hot_embedding(cards: &[Card; 3]) -> [f64; 3 * D_CARD] {
    let mut e = [0.0f64; 3 * D_CARD];
    for (k, card) in cards.iter().enumerate() {
        for (a, &v) in card.iter().enumerate() {
            e[k * D_CARD + a * N_VALUES + v as usize] = 1.0;
        }
    }
    e
}

/// True iff each attribute column is all-equal or all-distinct. Uses the
/// mod-3 formulation: a column of three values in {0,1,2} sums to 0 mod 3
/// exactly when the values are all equal or pairwise distinct.
pub fn is_set(cards: &[Card; 3]) -> Result<bool> {
    for card in cards {
        for &v in card {
            if v >= N_VALUES as u8 {
                return Err(LabError::contract(format!(
                    "card attribute value {v} out of range 0..{N_VALUES}"
                )));
            }
        }
    }
    Ok((0..N_ATTRS).all(|a| {
        (cards[0][a] + cards[1][a] + cards[2][a]) % 3 == 0
    }))
}

/// The unique third card completing (x, y) to a SET.
pub fn complete_card(x: &Card, y: &Card) -> Card {
    let mut z = [0u8; N_ATTRS];
    for a in 0..N_ATTRS {
        z[a] = (6 - x[a] - y[a]) % 3;
    }
    z
}

impl SetTriple {
    pub fn new(cards: [Card; 3]) -> Result<Self> {
        let label = is_set(&cards)?;
        if cards[0] == cards[1] || cards[0] == cards[2] || cards[1] == cards[2] {
            return Err(LabError::contract("triple contains duplicate cards"));
        }
        Ok(SetTriple { embedding: one_hot_embedding(&cards), cards, label })
    }
}

/// Samples n triples: a uniformly random SET with probability 1/2, otherwise
/// a uniformly random non-SET; card order is then shuffled.
///
/// SETs are drawn by picking an ordered pair of distinct cards and completing
/// it; each SET arises from exactly 6 ordered pairs, so the draw is uniform.
pub fn gen_set_dataset(n: usize, seed: u64) -> Result<Vec<SetTriple>> {
    if n == 0 {
        return Err(LabError::config("need at least one triple"));
    }
    let mut rng = Rng::stream(seed, &[tag("set")]);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let want_set = rng.next_f64() < 0.5;
        let mut cards = if want_set {
            let x = card_from_index(rng.below(N_CARDS));
            let y = loop {
                let y = card_from_index(rng.below(N_CARDS));
                if y != x {
                    break y;
                }
            };
            [x, y, complete_card(&x, &y)]
        } else {
            loop {
                let ids = rng.sample_distinct(N_CARDS, 3);
                let c = [
                    card_from_index(ids[0]),
                    card_from_index(ids[1]),
                    card_from_index(ids[2]),
                ];
                if !is_set(&c)? {
                    break c;
                }
            }
        };
        rng.shuffle(&mut cards);
        let triple = SetTriple::new(cards)?;
        debug_assert_eq!(triple.label, want_set);
        out.push(triple);
    }
    Ok(out)
}

/// 12-bit pairwise-sameness encoding: for each attribute and each unordered
/// card pair {(0,1),(0,2),(1,2)}, a bit that is 1 iff the pair agrees on that
/// attribute. Attribute-major layout: bits[attr*3 + pair].
pub fn symbolic_relations(t: &SetTriple) -> [f64; 12] {
    const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
    let mut bits = [0.0f64; 12];
    for a in 0..N_ATTRS {
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            if t.cards[i][a] == t.cards[j][a] {
                bits[a * 3 + p] = 1.0;
            }
        }
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn canonical_examples_match_the_rule() {
        let t = |a: Card, b: Card, c: Card| is_set(&[a, b, c]).unwrap();
        assert!(t([0, 0, 0, 0], [1, 1, 1, 1], [2, 2, 2, 2]));
        assert!(t([0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 0, 2]));
        assert!(!t([0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 2]));
    }

    #[test]
    fn out_of_range_value_is_a_contract_error() {
        assert!(is_set(&[[0, 0, 0, 3], [0, 0, 0, 1], [0, 0, 0, 2]]).is_err());
    }

    #[test]
    fn mod3_rule_agrees_with_same_or_distinct_on_all_triples() {
        for i in 0..N_CARDS {
            for j in (i + 1)..N_CARDS {
                for k in (j + 1)..N_CARDS {
                    let c = [card_from_index(i), card_from_index(j), card_from_index(k)];
                    let by_mod = is_set(&c).unwrap();
                    let by_rule = (0..N_ATTRS).all(|a| {
                        let (x, y, z) = (c[0][a], c[1][a], c[2][a]);
                        (x == y && y == z) || (x != y && y != z && x != z)
                    });
                    assert_eq!(by_mod, by_rule);
                }
            }
        }
    }

    #[test]
    fn exhaustive_enumeration_counts_1080_sets() {
        let mut count = 0usize;
        let mut total = 0usize;
        for i in 0..N_CARDS {
            for j in (i + 1)..N_CARDS {
                for k in (j + 1)..N_CARDS {
                    total += 1;
                    let c = [card_from_index(i), card_from_index(j), card_from_index(k)];
                    if is_set(&c).unwrap() {
                        count += 1;
                    }
                }
            }
        }
        assert_eq!(total, 85_320);
        assert_eq!(count, 1080);
    }

    #[test]
    fn completion_always_forms_a_set() {
        for i in 0..N_CARDS {
            for j in 0..N_CARDS {
                if i == j {
                    continue;
                }
                let (x, y) = (card_from_index(i), card_from_index(j));
                let z = complete_card(&x, &y);
                assert!(is_set(&[x, y, z]).unwrap());
                assert_ne!(z, x);
                assert_ne!(z, y);
            }
        }
    }

    #[test]
    fn generated_triples_are_valid_and_roughly_balanced() {
        let triples = gen_set_dataset(10_000, 13).unwrap();
        let mut positives = 0usize;
        for t in &triples {
            assert_eq!(t.label, is_set(&t.cards).unwrap());
            assert_ne!(t.cards[0], t.cards[1]);
            assert_ne!(t.cards[0], t.cards[2]);
            assert_ne!(t.cards[1], t.cards[2]);
            if t.label {
                positives += 1;
            }
        }
        let frac = positives as f64 / triples.len() as f64;
        assert!((frac - 0.5).abs() < 0.05, "label fraction {frac}");
    }

    #[test]
    fn embedding_is_three_card_one_hot() {
        let t = SetTriple::new([[0, 1, 2, 0], [1, 1, 0, 2], [2, 1, 1, 1]]).unwrap();
        for (k, card) in t.cards.iter().enumerate() {
            let row = &t.embedding[k * D_CARD..(k + 1) * D_CARD];
            assert_eq!(row.iter().sum::<f64>(), N_ATTRS as f64);
            for (a, &v) in card.iter().enumerate() {
                assert_eq!(row[a * N_VALUES + v as usize], 1.0);
            }
        }
    }

    #[test]
    fn symbolic_relations_known_patterns() {
        // All attributes pairwise distinct: every bit 0.
        let t = SetTriple::new([[0, 0, 0, 0], [1, 1, 1, 1], [2, 2, 2, 2]]).unwrap();
        assert_eq!(symbolic_relations(&t), [0.0; 12]);
        // Shared first attribute only: exactly the first 3 bits set.
        let t = SetTriple::new([[0, 0, 0, 0], [0, 1, 1, 1], [0, 2, 2, 2]]).unwrap();
        let bits = symbolic_relations(&t);
        assert_eq!(&bits[..3], &[1.0, 1.0, 1.0]);
        assert_eq!(&bits[3..], &[0.0; 9]);
    }

    #[test]
    fn label_is_a_function_of_the_12_bits() {
        // Across all 85,320 triples, equal bit-vectors never disagree on the
        // label, so the symbolic encoding is a sufficient statistic.
        let mut by_bits: HashMap<[u8; 12], bool> = HashMap::new();
        for i in 0..N_CARDS {
            for j in (i + 1)..N_CARDS {
                for k in (j + 1)..N_CARDS {
                    let cards = [card_from_index(i), card_from_index(j), card_from_index(k)];
                    let t = SetTriple::new(cards).unwrap();
                    let key: [u8; 12] =
                        std::array::from_fn(|b| symbolic_relations(&t)[b] as u8);
                    if let Some(&prev) = by_bits.get(&key) {
                        assert_eq!(prev, t.label, "bits {key:?} carry both labels");
                    } else {
                        by_bits.insert(key, t.label);
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        assert_eq!(gen_set_dataset(100, 4).unwrap(), gen_set_dataset(100, 4).unwrap());
        assert_ne!(gen_set_dataset(100, 4).unwrap(), gen_set_dataset(100, 5).unwrap());
    }
}
