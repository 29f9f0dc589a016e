use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;

use crate::domain::{Campaign, Subscriber};

/// One eligibility bit per campaign, in instance campaign order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EligibilitySignature {
    width: usize,
    words: Vec<u64>,
}

impl EligibilitySignature {
    pub fn zeros(width: usize) -> Self {
        EligibilitySignature {
            width,
            words: vec![0; width.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: impl IntoIterator<Item = bool>) -> Self {
        let bits: Vec<bool> = bits.into_iter().collect();
        let mut sig = Self::zeros(bits.len());
        for (j, b) in bits.into_iter().enumerate() {
            if b {
                sig.set(j);
            }
        }
        sig
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, j: usize) {
        assert!(j < self.width, "bit {j} outside width {}", self.width);
        self.words[j / 64] |= 1 << (j % 64);
    }

    pub fn get(&self, j: usize) -> bool {
        j < self.width && self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + bit)
            })
        })
    }
}

/// Lexicographic over the bit string `b0 b1 b2 …` with `0 < 1`.
impl Ord for EligibilitySignature {
    fn cmp(&self, other: &Self) -> Ordering {
        self.words
            .iter()
            .map(|w| w.reverse_bits())
            .cmp(other.words.iter().map(|w| w.reverse_bits()))
            .then(self.width.cmp(&other.width))
    }
}

impl PartialOrd for EligibilitySignature {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Renders as a bit string, campaign 0 first: `110`.
impl fmt::Display for EligibilitySignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.width {
            f.write_str(if self.get(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

pub fn eligibility_signature(
    subscriber: &Subscriber,
    campaigns: &[Campaign],
) -> EligibilitySignature {
    let mut sig = EligibilitySignature::zeros(campaigns.len());
    for (j, campaign) in campaigns.iter().enumerate() {
        if campaign.predicate.evaluate(&subscriber.kpis) {
            sig.set(j);
        }
    }
    sig
}

/// Signatures for every subscriber, computed in parallel, returned in input order.
pub fn signatures(subscribers: &[Subscriber], campaigns: &[Campaign]) -> Vec<EligibilitySignature> {
    subscribers
        .par_iter()
        .with_min_len(1024)
        .map(|s| eligibility_signature(s, campaigns))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{KpiKind, KpiSchema, KpiValue, KpiVector, Money};
    use crate::targeting::parse_predicate;

    fn campaigns(preds: &[&str]) -> Vec<Campaign> {
        let schema = KpiSchema::from_pairs([("arpu", KpiKind::Numeric)]);
        preds
            .iter()
            .enumerate()
            .map(|(j, p)| Campaign {
                id: format!("c{j}"),
                predicate: parse_predicate(p, &schema).unwrap(),
                price: Money::from_units(1),
                frequency_cap: 1,
            })
            .collect()
    }

    fn sub(arpu: f64) -> Subscriber {
        Subscriber {
            id: "s".into(),
            kpis: KpiVector(vec![KpiValue::Numeric(arpu)]),
            frequency_cap: 1,
        }
    }

    #[test]
    fn three_campaign_signature() {
        let c = campaigns(&["TRUE", "arpu >= 5", "arpu < 5"]);
        let sig = eligibility_signature(&sub(7.0), &c);
        assert_eq!(sig.to_string(), "110");
        assert_eq!(sig.count_ones(), 2);
        assert_eq!(sig.ones().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn zero_width() {
        let sig = eligibility_signature(&sub(1.0), &[]);
        assert_eq!(sig.width(), 0);
        assert!(sig.is_zero());
        assert_eq!(sig.to_string(), "");
    }

    #[test]
    fn identical_predicates_share_bits() {
        let c = campaigns(&["arpu > 3", "arpu > 3"]);
        for x in [0.0, 3.0, 3.5, 10.0] {
            let sig = eligibility_signature(&sub(x), &c);
            assert_eq!(sig.get(0), sig.get(1));
        }
    }

    #[test]
    fn ordering_is_lexicographic_on_bits() {
        let a = EligibilitySignature::from_bits([false, true, true]);
        let b = EligibilitySignature::from_bits([true, false, false]);
        assert!(a < b);
        let wide_a = EligibilitySignature::from_bits((0..130).map(|j| j == 129));
        let wide_b = EligibilitySignature::from_bits((0..130).map(|j| j == 64));
        assert!(wide_a < wide_b);
        assert_eq!(wide_a.ones().collect::<Vec<_>>(), vec![129]);
    }
}
