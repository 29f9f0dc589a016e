//! The scaling transform: subscribers that share an eligibility signature and a
//! frequency cap collapse into one group, and the integer program is written
//! over groups instead of subscribers.

use std::collections::HashMap;

use serde::Serialize;

use crate::domain::Instance;
use crate::targeting::{signatures, EligibilitySignature};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupKey {
    pub signature: EligibilitySignature,
    /// Frequency cap shared by every member.
    pub cap_bucket: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubscriberGroup {
    pub key: GroupKey,
    /// Indices into `Instance::subscribers`, descending frequency cap then ascending id.
    pub members: Vec<usize>,
    /// Sum of member frequency caps.
    pub frequency_cap: u64,
}

impl SubscriberGroup {
    pub fn size(&self) -> u64 {
        self.members.len() as u64
    }

    pub fn member_ids<'a>(&'a self, instance: &'a Instance) -> impl Iterator<Item = &'a str> + 'a {
        self.members
            .iter()
            .map(|&i| instance.subscribers[i].id.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct GroupStats {
    pub group_count: u64,
    pub variable_count_scaled: u64,
    pub variable_count_unscaled: u64,
}

impl GroupStats {
    /// Unscaled over scaled variable counts; zero when there is nothing to scale.
    pub fn reduction_ratio(&self) -> f64 {
        if self.variable_count_scaled == 0 {
            0.0
        } else {
            self.variable_count_unscaled as f64 / self.variable_count_scaled as f64
        }
    }
}

/// Partition of an instance's subscribers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    /// Canonical order: signature bits lexicographically, then cap.
    pub groups: Vec<SubscriberGroup>,
    /// Subscribers eligible for nothing or with frequency cap 0, in input order.
    pub null_group: Vec<usize>,
    /// Σ popcount(signature) over null-group members; they still own variables
    /// in the unscaled program.
    null_group_pairs: u64,
}

impl Grouping {
    pub fn stats(&self) -> GroupStats {
        let scaled: u64 = self
            .groups
            .iter()
            .map(|g| g.key.signature.count_ones())
            .sum();
        let unscaled: u64 = self
            .groups
            .iter()
            .map(|g| g.key.signature.count_ones() * g.size())
            .sum::<u64>()
            + self.null_group_pairs;
        GroupStats {
            group_count: self.groups.len() as u64,
            variable_count_scaled: scaled,
            variable_count_unscaled: unscaled,
        }
    }

    /// Which group (if any) each subscriber landed in.
    pub fn group_of(&self, subscriber_count: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; subscriber_count];
        for (g, group) in self.groups.iter().enumerate() {
            for &i in &group.members {
                out[i] = Some(g);
            }
        }
        out
    }
}

/// Groups subscribers by (signature, exact frequency cap).
pub fn build_groups(instance: &Instance) -> Grouping {
    let sigs = signatures(&instance.subscribers, &instance.campaigns);
    build_groups_from_signatures(instance, sigs)
}

/// As [`build_groups`], reusing precomputed signatures (one per subscriber).
pub fn build_groups_from_signatures(
    instance: &Instance,
    sigs: Vec<EligibilitySignature>,
) -> Grouping {
    assert_eq!(sigs.len(), instance.subscribers.len());
    let mut buckets: HashMap<GroupKey, Vec<usize>> = HashMap::new();
    let mut null_group = Vec::new();
    let mut null_group_pairs = 0;
    for (i, (sub, signature)) in instance.subscribers.iter().zip(sigs).enumerate() {
        if sub.frequency_cap == 0 || signature.is_zero() {
            null_group_pairs += signature.count_ones();
            null_group.push(i);
            continue;
        }
        buckets
            .entry(GroupKey {
                signature,
                cap_bucket: sub.frequency_cap,
            })
            .or_default()
            .push(i);
    }

    let mut groups: Vec<SubscriberGroup> = buckets
        .into_iter()
        .map(|(key, mut members)| {
            let subs = &instance.subscribers;
            members.sort_by(|&a, &b| {
                subs[b]
                    .frequency_cap
                    .cmp(&subs[a].frequency_cap)
                    .then_with(|| subs[a].id.cmp(&subs[b].id))
            });
            let frequency_cap = members.iter().map(|&i| subs[i].frequency_cap as u64).sum();
            SubscriberGroup {
                key,
                members,
                frequency_cap,
            }
        })
        .collect();
    groups.sort_by(|a, b| a.key.cmp(&b.key));

    Grouping {
        groups,
        null_group,
        null_group_pairs,
    }
}
