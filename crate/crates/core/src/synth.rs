//! Seeded synthetic instances, from desk-scale benchmarks down to the tiny
//! instances the oracle can enumerate.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Campaign, FairnessConfig, Instance, KpiAttribute, KpiKind, KpiSchema, KpiValue, KpiVector,
    Money, Subscriber,
};
use crate::optimizer::{IpModel, Variable, ORACLE_PAIR_BUDGET};
use crate::targeting::{parse_predicate, signatures};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnSpec {
    /// Uniform on `[min, max)` rounded to `decimals` places.
    Numeric {
        name: String,
        min: f64,
        max: f64,
        decimals: u32,
    },
    Categorical {
        name: String,
        values: Vec<String>,
    },
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        match self {
            ColumnSpec::Numeric { name, .. } | ColumnSpec::Categorical { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CapSpec {
    Constant {
        value: u32,
    },
    Uniform {
        min: u32,
        max: u32,
    },
    /// Subscriber `i` gets cap `i + 1`, so no two subscribers share a group.
    Distinct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub subscribers: usize,
    pub campaigns: usize,
    /// Number of distinct predicates campaigns draw from; `None` gives every
    /// campaign its own predicate.
    pub predicate_pool: Option<usize>,
    /// Approximate share of subscribers each predicate matches.
    pub target_fraction: f64,
    pub caps: CapSpec,
    pub columns: Vec<ColumnSpec>,
    /// Campaign budgets as a share of the subscriber count.
    pub campaign_cap_fraction: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 1,
            subscribers: 1000,
            campaigns: 10,
            predicate_pool: None,
            target_fraction: 0.2,
            caps: CapSpec::Uniform { min: 1, max: 3 },
            columns: default_columns(),
            campaign_cap_fraction: 0.05,
        }
    }
}

pub fn default_columns() -> Vec<ColumnSpec> {
    let num = |name: &str, min: f64, max: f64, decimals| ColumnSpec::Numeric {
        name: name.into(),
        min,
        max,
        decimals,
    };
    vec![
        num("arpu", 0.0, 100.0, 2),
        num("tenure", 0.0, 120.0, 0),
        num("data_gb", 0.0, 50.0, 1),
        num("age", 18.0, 80.0, 0),
        ColumnSpec::Categorical {
            name: "region".into(),
            values: ["N", "S", "E", "W", "C"].map(String::from).to_vec(),
        },
        ColumnSpec::Categorical {
            name: "plan".into(),
            values: ["prepaid", "postpaid", "hybrid"].map(String::from).to_vec(),
        },
    ]
}

fn round_to(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).floor() / scale
}

fn random_predicate(rng: &mut ChaCha8Rng, columns: &[ColumnSpec], fraction: f64) -> String {
    match columns.choose(rng) {
        None => "TRUE".to_string(),
        Some(ColumnSpec::Numeric {
            name,
            min,
            max,
            decimals,
        }) => {
            let width = (max - min) * fraction.clamp(0.0, 1.0);
            let lo = round_to(rng.gen_range(*min..=(max - width).max(*min)), *decimals);
            let hi = round_to(lo + width, *decimals);
            format!("{name} >= {lo} AND {name} < {hi}")
        }
        Some(ColumnSpec::Categorical { name, values }) => {
            let k =
                ((values.len() as f64 * fraction).round() as usize).clamp(1, values.len().max(1));
            let mut picked: Vec<&String> = values.choose_multiple(rng, k).collect();
            picked.sort();
            let list: Vec<String> = picked.iter().map(|v| format!("{v:?}")).collect();
            format!("{name} IN {{{}}}", list.join(", "))
        }
    }
}

/// Builds an instance from `spec`. Identical specs give identical instances.
pub fn generate(spec: &SyntheticSpec) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut schema = KpiSchema::new(
        spec.columns
            .iter()
            .map(|c| KpiAttribute {
                name: c.name().to_string(),
                kind: match c {
                    ColumnSpec::Numeric { .. } => KpiKind::Numeric,
                    ColumnSpec::Categorical { .. } => KpiKind::Categorical,
                },
            })
            .collect(),
    );
    let category_ids: Vec<Vec<_>> = spec
        .columns
        .iter()
        .map(|c| match c {
            ColumnSpec::Categorical { values, .. } => {
                values.iter().map(|v| schema.intern(v)).collect()
            }
            ColumnSpec::Numeric { .. } => Vec::new(),
        })
        .collect();

    let width = spec.subscribers.max(1).to_string().len();
    let subscribers: Vec<Subscriber> = (0..spec.subscribers)
        .map(|i| {
            let kpis = spec
                .columns
                .iter()
                .zip(&category_ids)
                .map(|(c, ids)| match c {
                    ColumnSpec::Numeric {
                        min, max, decimals, ..
                    } => KpiValue::Numeric(round_to(rng.gen_range(*min..*max), *decimals)),
                    ColumnSpec::Categorical { .. } => {
                        KpiValue::Categorical(*ids.choose(&mut rng).expect("non-empty values"))
                    }
                })
                .collect();
            let frequency_cap = match spec.caps {
                CapSpec::Constant { value } => value,
                CapSpec::Uniform { min, max } => rng.gen_range(min..=max.max(min)),
                CapSpec::Distinct => i as u32 + 1,
            };
            Subscriber {
                id: format!("s{i:0width$}"),
                kpis: KpiVector(kpis),
                frequency_cap,
            }
        })
        .collect();

    let pool: Vec<String> = match spec.predicate_pool {
        Some(n) => (0..n)
            .map(|_| random_predicate(&mut rng, &spec.columns, spec.target_fraction))
            .collect(),
        None => Vec::new(),
    };
    let budget = ((spec.subscribers as f64 * spec.campaign_cap_fraction).ceil() as u64).max(1);
    let cwidth = spec.campaigns.max(1).to_string().len();
    let campaigns: Vec<Campaign> = (0..spec.campaigns)
        .map(|j| {
            let text = if pool.is_empty() {
                random_predicate(&mut rng, &spec.columns, spec.target_fraction)
            } else {
                pool[j % pool.len()].clone()
            };
            let price = Money::from_micros(rng.gen_range(1..=100) * 10_000);
            let frequency_cap = rng.gen_range(budget / 2..=budget);
            Campaign {
                id: format!("c{j:0cwidth$}"),
                predicate: parse_predicate(&text, &schema).expect("generated predicates parse"),
                price,
                frequency_cap,
            }
        })
        .collect();

    Instance {
        schema,
        subscribers,
        campaigns,
        fairness: FairnessConfig::disabled(),
    }
}

/// A random instance with at most [`ORACLE_PAIR_BUDGET`] eligible pairs.
pub fn random_small_instance(rng: &mut impl Rng) -> Instance {
    let mut schema = KpiSchema::from_pairs([("x", KpiKind::Numeric), ("r", KpiKind::Categorical)]);
    let cats = ["a", "b", "c"].map(|v| schema.intern(v));

    let n_campaigns = rng.gen_range(1..=4);
    let campaigns: Vec<Campaign> = (0..n_campaigns)
        .map(|j| {
            let text = small_predicate(rng, 2);
            Campaign {
                id: format!("c{j}"),
                predicate: parse_predicate(&text, &schema).expect("generated predicates parse"),
                price: Money::from_micros(rng.gen_range(0..=5) * 500_000),
                frequency_cap: rng.gen_range(0..=5),
            }
        })
        .collect();

    let n_subscribers = rng.gen_range(0..=9);
    let mut subscribers: Vec<Subscriber> = (0..n_subscribers)
        .map(|i| Subscriber {
            id: format!("s{i}"),
            kpis: KpiVector(vec![
                KpiValue::Numeric(rng.gen_range(0..5) as f64),
                KpiValue::Categorical(cats[rng.gen_range(0..3)]),
            ]),
            frequency_cap: rng.gen_range(0..=3),
        })
        .collect();
    // Larger instances than the budget are trimmed from the end.
    let sigs = signatures(&subscribers, &campaigns);
    let mut pairs = 0;
    let keep = sigs
        .iter()
        .take_while(|s| {
            pairs += s.count_ones();
            pairs <= ORACLE_PAIR_BUDGET
        })
        .count();
    subscribers.truncate(keep);

    Instance {
        schema,
        subscribers,
        campaigns,
        fairness: FairnessConfig::disabled(),
    }
}

fn small_predicate(rng: &mut impl Rng, depth: u32) -> String {
    let leaf = |rng: &mut dyn rand::RngCore| -> String {
        match rng.gen_range(0..6) {
            0 => "TRUE".into(),
            1 => format!("x >= {}", rng.gen_range(0..5)),
            2 => format!("x < {}", rng.gen_range(1..5)),
            3 => format!("x != {}", rng.gen_range(0..5)),
            4 => format!("r == \"{}\"", ["a", "b", "c", "z"][rng.gen_range(0..4)]),
            _ => "r IN {\"a\", \"b\"}".into(),
        }
    };
    if depth == 0 || rng.gen_bool(0.5) {
        return leaf(rng);
    }
    match rng.gen_range(0..3) {
        0 => format!("NOT ({})", small_predicate(rng, depth - 1)),
        1 => format!(
            "({}) AND ({})",
            small_predicate(rng, depth - 1),
            small_predicate(rng, depth - 1)
        ),
        _ => format!(
            "({}) OR ({})",
            small_predicate(rng, depth - 1),
            small_predicate(rng, depth - 1)
        ),
    }
}

/// A random group-level model. Groups have uniform member caps, so the size
/// bound is `min(FC, size)` as produced by formulation.
pub fn random_group_model(rng: &mut impl Rng, with_floors: bool) -> IpModel {
    let n_groups = rng.gen_range(0..=10);
    let n_campaigns = rng.gen_range(1..=5);
    let campaign_caps: Vec<u64> = (0..n_campaigns).map(|_| rng.gen_range(0..=12)).collect();
    let prices: Vec<Money> = (0..n_campaigns)
        .map(|_| Money::from_micros(rng.gen_range(0..=40) * 250_000))
        .collect();
    let mut model = IpModel {
        name: crate::optimizer::DEFAULT_MODEL_NAME.into(),
        campaign_caps: campaign_caps.clone(),
        ..IpModel::default()
    };
    let mut reachable = vec![0u64; n_campaigns];
    for g in 0..n_groups {
        let size: u64 = rng.gen_range(1..=6);
        let cap: u64 = rng.gen_range(1..=3);
        let fc = size * cap;
        model.group_caps.push(fc);
        for j in 0..n_campaigns {
            if rng.gen_bool(0.6) {
                reachable[j] += size;
                model.variables.push(Variable {
                    group: g,
                    campaign: j,
                    upper: size.min(campaign_caps[j]),
                    price: prices[j],
                });
            }
        }
    }
    if with_floors {
        model.floors = Some(
            campaign_caps
                .iter()
                .zip(&reachable)
                .map(|(&cap, &reach)| rng.gen_range(0..=cap.min(reach)))
                .collect(),
        );
    }
    model
}
