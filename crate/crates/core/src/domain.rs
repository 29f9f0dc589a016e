//! Value types shared by every stage of the allocation pipeline.
//!
//! Everything here is immutable once an [`Instance`] is assembled. Money is
//! carried as integer micro-units so objectives compare exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::targeting::TargetPredicate;

/// Micro-units per whole unit of currency.
pub const MICROS_PER_UNIT: i64 = 1_000_000;

/// An amount of money in integer micro-units (10^-6 of a currency unit).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_micros(micros: i64) -> Self {
        Money(micros)
    }

    pub fn from_units(units: i64) -> Self {
        Money(units * MICROS_PER_UNIT)
    }

    pub fn micros(self) -> i64 {
        self.0
    }

    pub fn times(self, count: u64) -> Money {
        Money(self.0 * count as i64)
    }
}

impl std::ops::Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

/// Shortest exact decimal rendering: `20000` micros prints as `0.02`, `2000000` as `2`.
impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let units = abs / MICROS_PER_UNIT as u64;
        let frac = abs % MICROS_PER_UNIT as u64;
        if frac == 0 {
            write!(f, "{sign}{units}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{sign}{units}.{}", digits.trim_end_matches('0'))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid decimal amount {text:?}: {reason}")]
pub struct DecimalError {
    pub text: String,
    pub reason: &'static str,
}

/// Parses a plain decimal (`12`, `0.02`, `-3.5`) with at most six fractional
/// digits into micro-units. Exponents and more precision are rejected.
pub fn parse_micros(text: &str) -> Result<i64, DecimalError> {
    let err = |reason| DecimalError {
        text: text.to_string(),
        reason,
    };
    let s = text.trim();
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("expected digits before the decimal point"));
    }
    if !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("expected digits after the decimal point"));
    }
    if body.contains('.') && frac_part.is_empty() {
        return Err(err("expected digits after the decimal point"));
    }
    if frac_part.len() > 6 {
        return Err(err("more than six fractional digits"));
    }
    let units: i64 = int_part.parse().map_err(|_| err("amount out of range"))?;
    let frac: i64 = if frac_part.is_empty() {
        0
    } else {
        format!("{frac_part:0<6}")
            .parse()
            .map_err(|_| err("bad fraction"))?
    };
    let micros = units
        .checked_mul(MICROS_PER_UNIT)
        .and_then(|m| m.checked_add(frac))
        .ok_or_else(|| err("amount out of range"))?;
    Ok(if negative { -micros } else { micros })
}

impl FromStr for Money {
    type Err = DecimalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_micros(s).map(Money)
    }
}

impl Serialize for Money {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Attribute kind of a KPI column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KpiKind {
    Numeric,
    Categorical,
}

impl fmt::Display for KpiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KpiKind::Numeric => f.write_str("numeric"),
            KpiKind::Categorical => f.write_str("categorical"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KpiAttribute {
    pub name: String,
    pub kind: KpiKind,
}

/// Interned id of a categorical KPI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryId(pub u32);

/// String dictionary for categorical KPI values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    ids: HashMap<String, CategoryId>,
    strings: Vec<String>,
}

impl Interner {
    pub fn intern(&mut self, value: &str) -> CategoryId {
        if let Some(&id) = self.ids.get(value) {
            return id;
        }
        let id = CategoryId(self.strings.len() as u32);
        self.strings.push(value.to_string());
        self.ids.insert(value.to_string(), id);
        id
    }

    pub fn lookup(&self, value: &str) -> Option<CategoryId> {
        self.ids.get(value).copied()
    }

    pub fn resolve(&self, id: CategoryId) -> Option<&str> {
        self.strings.get(id.0 as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.strings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strings.is_empty()
    }
}

/// Ordered KPI columns plus the dictionary of categorical values seen so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KpiSchema {
    attributes: Vec<KpiAttribute>,
    categories: Interner,
}

impl KpiSchema {
    pub fn new(attributes: Vec<KpiAttribute>) -> Self {
        KpiSchema {
            attributes,
            categories: Interner::default(),
        }
    }

    /// Convenience constructor from `(name, kind)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, KpiKind)>) -> Self {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, kind)| KpiAttribute {
                    name: name.to_string(),
                    kind,
                })
                .collect(),
        )
    }

    pub fn attributes(&self) -> &[KpiAttribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn categories(&self) -> &Interner {
        &self.categories
    }

    pub fn intern(&mut self, value: &str) -> CategoryId {
        self.categories.intern(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KpiValue {
    Numeric(f64),
    Categorical(CategoryId),
}

impl KpiValue {
    pub fn kind(&self) -> KpiKind {
        match self {
            KpiValue::Numeric(_) => KpiKind::Numeric,
            KpiValue::Categorical(_) => KpiKind::Categorical,
        }
    }
}

/// One value per schema attribute, in schema order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KpiVector(pub Vec<KpiValue>);

impl KpiVector {
    pub fn get(&self, attr: usize) -> Option<&KpiValue> {
        self.0.get(attr)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subscriber {
    pub id: String,
    pub kpis: KpiVector,
    pub frequency_cap: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub id: String,
    pub predicate: TargetPredicate,
    /// Price per impression.
    pub price: Money,
    /// Impression budget for one run.
    pub frequency_cap: u64,
}

/// Price-proportional minimum fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FairnessConfig {
    pub enabled: bool,
    /// Floor strength in parts per million, `0..=1_000_000`.
    pub min_fill_ppm: u32,
}

impl FairnessConfig {
    pub const PPM: u32 = 1_000_000;

    pub fn disabled() -> Self {
        Self::default()
    }

    /// Enables fairness with a decimal fraction such as `"0.5"`.
    pub fn with_fraction(text: &str) -> Result<Self, DecimalError> {
        let micros = parse_micros(text)?;
        if !(0..=MICROS_PER_UNIT).contains(&micros) {
            return Err(DecimalError {
                text: text.to_string(),
                reason: "fraction must lie in [0, 1]",
            });
        }
        Ok(FairnessConfig {
            enabled: true,
            min_fill_ppm: micros as u32,
        })
    }

    pub fn min_fill_fraction(&self) -> f64 {
        self.min_fill_ppm as f64 / Self::PPM as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub schema: KpiSchema,
    pub subscribers: Vec<Subscriber>,
    pub campaigns: Vec<Campaign>,
    pub fairness: FairnessConfig,
}

impl Instance {
    pub fn campaign_index(&self, id: &str) -> Option<usize> {
        self.campaigns.iter().position(|c| c.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    DuplicateAttribute,
    EmptyAttributeName,
    DuplicateSubscriberId,
    DuplicateCampaignId,
    KpiLengthMismatch {
        expected: usize,
        found: usize,
    },
    KpiKindMismatch {
        attribute: String,
        expected: KpiKind,
    },
    NonFiniteKpi {
        attribute: String,
    },
    UnknownCategory {
        attribute: String,
    },
    NegativePrice,
    InvalidPredicate(String),
    FairnessOutOfRange,
    NoCampaigns,
}

/// One invariant breach found by [`validate_instance`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Subscriber id, campaign id, attribute name, or empty for instance-wide breaches.
    pub subject: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ViolationKind::*;
        let s = &self.subject;
        match &self.kind {
            DuplicateAttribute => write!(f, "attribute {s:?} appears more than once"),
            EmptyAttributeName => write!(f, "attribute name is empty"),
            DuplicateSubscriberId => write!(f, "duplicate subscriber id {s:?}"),
            DuplicateCampaignId => write!(f, "duplicate campaign id {s:?}"),
            KpiLengthMismatch { expected, found } => {
                write!(
                    f,
                    "subscriber {s:?} has {found} KPI values, schema has {expected}"
                )
            }
            KpiKindMismatch {
                attribute,
                expected,
            } => write!(f, "subscriber {s:?}: {attribute} must be {expected}"),
            NonFiniteKpi { attribute } => {
                write!(f, "subscriber {s:?}: {attribute} is not finite")
            }
            UnknownCategory { attribute } => {
                write!(
                    f,
                    "subscriber {s:?}: {attribute} holds an id missing from the dictionary"
                )
            }
            NegativePrice => write!(f, "campaign {s:?} has a negative price"),
            InvalidPredicate(why) => write!(f, "campaign {s:?}: {why}"),
            FairnessOutOfRange => write!(f, "min fill fraction lies outside [0, 1]"),
            NoCampaigns => write!(f, "instance has no campaigns"),
        }
    }
}

/// Checks every type invariant of an instance. Returns one record per breach;
/// an empty list means the instance is valid.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, subject: &str, kind| {
        out.push(Violation {
            subject: subject.to_string(),
            kind,
        })
    };

    let schema = &instance.schema;
    let mut names = HashSet::new();
    for attr in schema.attributes() {
        if attr.name.is_empty() {
            push(&mut out, "", ViolationKind::EmptyAttributeName);
        } else if !names.insert(attr.name.as_str()) {
            push(&mut out, &attr.name, ViolationKind::DuplicateAttribute);
        }
    }

    let mut ids = HashSet::new();
    for sub in &instance.subscribers {
        if !ids.insert(sub.id.as_str()) {
            push(&mut out, &sub.id, ViolationKind::DuplicateSubscriberId);
        }
        if sub.kpis.len() != schema.len() {
            push(
                &mut out,
                &sub.id,
                ViolationKind::KpiLengthMismatch {
                    expected: schema.len(),
                    found: sub.kpis.len(),
                },
            );
            continue;
        }
        for (value, attr) in sub.kpis.0.iter().zip(schema.attributes()) {
            match value {
                KpiValue::Numeric(x) if attr.kind == KpiKind::Numeric => {
                    if !x.is_finite() {
                        push(
                            &mut out,
                            &sub.id,
                            ViolationKind::NonFiniteKpi {
                                attribute: attr.name.clone(),
                            },
                        );
                    }
                }
                KpiValue::Categorical(id) if attr.kind == KpiKind::Categorical => {
                    if schema.categories().resolve(*id).is_none() {
                        push(
                            &mut out,
                            &sub.id,
                            ViolationKind::UnknownCategory {
                                attribute: attr.name.clone(),
                            },
                        );
                    }
                }
                _ => push(
                    &mut out,
                    &sub.id,
                    ViolationKind::KpiKindMismatch {
                        attribute: attr.name.clone(),
                        expected: attr.kind,
                    },
                ),
            }
        }
    }

    if instance.campaigns.is_empty() {
        push(&mut out, "", ViolationKind::NoCampaigns);
    }
    let mut campaign_ids = HashSet::new();
    for campaign in &instance.campaigns {
        if !campaign_ids.insert(campaign.id.as_str()) {
            push(&mut out, &campaign.id, ViolationKind::DuplicateCampaignId);
        }
        if campaign.price < Money::ZERO {
            push(&mut out, &campaign.id, ViolationKind::NegativePrice);
        }
        if let Err(e) = campaign.predicate.check(schema) {
            push(
                &mut out,
                &campaign.id,
                ViolationKind::InvalidPredicate(e.to_string()),
            );
        }
    }

    if instance.fairness.min_fill_ppm > FairnessConfig::PPM {
        push(&mut out, "", ViolationKind::FairnessOutOfRange);
    }
    out
}

/// Final per-subscriber allocation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AllocationResult {
    /// Campaign indices assigned to each subscriber, aligned with
    /// `Instance::subscribers`, ascending and distinct.
    pub assignments: Vec<Vec<usize>>,
    pub objective: Money,
    /// Impressions per campaign id.
    pub per_campaign_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ObjectiveError {
    #[error("unknown campaign id {0:?}")]
    UnknownCampaign(String),
}

/// `Σ_j price_j · count_j` over the given per-campaign counts.
pub fn objective_value(
    counts: &BTreeMap<String, u64>,
    campaigns: &[Campaign],
) -> Result<Money, ObjectiveError> {
    let prices: HashMap<&str, Money> = campaigns.iter().map(|c| (c.id.as_str(), c.price)).collect();
    counts
        .iter()
        .map(|(id, &count)| {
            prices
                .get(id.as_str())
                .map(|p| p.times(count))
                .ok_or_else(|| ObjectiveError::UnknownCampaign(id.clone()))
        })
        .sum()
}

impl AllocationResult {
    /// Independent re-check of every allocation invariant: subscriber caps,
    /// campaign caps, distinctness, eligibility, count and objective
    /// bookkeeping. Runs in O(Σ assignments) plus one predicate evaluation per
    /// assigned pair.
    pub fn verify(&self, instance: &Instance) -> Result<(), String> {
        if self.assignments.len() != instance.subscribers.len() {
            return Err(format!(
                "{} assignment lists for {} subscribers",
                self.assignments.len(),
                instance.subscribers.len()
            ));
        }
        let mut counts = vec![0u64; instance.campaigns.len()];
        for (sub, assigned) in instance.subscribers.iter().zip(&self.assignments) {
            if assigned.len() > sub.frequency_cap as usize {
                return Err(format!(
                    "subscriber {:?} receives {} ads over cap {}",
                    sub.id,
                    assigned.len(),
                    sub.frequency_cap
                ));
            }
            if assigned.windows(2).any(|w| w[0] >= w[1]) {
                return Err(format!(
                    "subscriber {:?} has repeated or unsorted campaigns",
                    sub.id
                ));
            }
            for &j in assigned {
                let campaign = instance
                    .campaigns
                    .get(j)
                    .ok_or_else(|| format!("campaign index {j} out of range"))?;
                if !campaign.predicate.evaluate(&sub.kpis) {
                    return Err(format!(
                        "subscriber {:?} is not eligible for campaign {:?}",
                        sub.id, campaign.id
                    ));
                }
                counts[j] += 1;
            }
        }
        for (campaign, &count) in instance.campaigns.iter().zip(&counts) {
            if count > campaign.frequency_cap {
                return Err(format!(
                    "campaign {:?} delivers {count} over cap {}",
                    campaign.id, campaign.frequency_cap
                ));
            }
            let recorded = self
                .per_campaign_counts
                .get(&campaign.id)
                .copied()
                .unwrap_or(0);
            if recorded != count {
                return Err(format!(
                    "campaign {:?} count recorded {recorded}, actual {count}",
                    campaign.id
                ));
            }
        }
        let objective = objective_value(&self.per_campaign_counts, &instance.campaigns)
            .map_err(|e| e.to_string())?;
        if objective != self.objective {
            return Err(format!(
                "objective recorded {}, recomputed {objective}",
                self.objective
            ));
        }
        Ok(())
    }

    pub fn total_impressions(&self) -> u64 {
        self.per_campaign_counts.values().sum()
    }
}
