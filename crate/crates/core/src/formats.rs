//! File formats: subscribers CSV, campaigns JSON, allocations CSV and the
//! ranked-ad JSON-lines export.
//!
//! Subscriber headers are `id,fc,<kpi>...`. A KPI column may carry a `:num`
//! or `:cat` suffix; untyped columns are numeric when every value parses as a
//! number and categorical otherwise.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AllocationResult, Campaign, Instance, KpiAttribute, KpiKind, KpiSchema, KpiValue, KpiVector,
    Money, Subscriber,
};
use crate::targeting::{parse_predicate, ParseErrorKind};

pub const DEFAULT_MAX_ROW_ERRORS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("missing header row")]
    MissingHeader,
    #[error("bad header: {0}")]
    Header(String),
    #[error("{}", render_rows(.errors, *.truncated))]
    Rows {
        errors: Vec<RowError>,
        truncated: bool,
    },
    #[error("malformed campaign JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Campaign(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn render_rows(errors: &[RowError], truncated: bool) -> String {
    let mut s = errors
        .iter()
        .map(RowError::to_string)
        .collect::<Vec<_>>()
        .join("\n");
    if truncated {
        s.push_str("\n(further errors suppressed)");
    }
    s
}

fn parse_header(header: &csv::StringRecord) -> Result<Vec<(String, Option<KpiKind>)>, FormatError> {
    let fields: Vec<&str> = header.iter().collect();
    if fields.len() < 2 || fields[0] != "id" || fields[1] != "fc" {
        return Err(FormatError::Header(format!(
            "expected `id,fc,...`, found {:?}",
            fields.join(",")
        )));
    }
    let mut seen = HashSet::new();
    let mut columns = Vec::new();
    for field in &fields[2..] {
        let (name, kind) = match field.rsplit_once(':') {
            Some((name, "num")) => (name, Some(KpiKind::Numeric)),
            Some((name, "cat")) => (name, Some(KpiKind::Categorical)),
            _ => (*field, None),
        };
        if name.is_empty() {
            return Err(FormatError::Header("empty attribute name".into()));
        }
        if name == "id" || name == "fc" || !seen.insert(name.to_string()) {
            return Err(FormatError::Header(format!("duplicate column {name:?}")));
        }
        columns.push((name.to_string(), kind));
    }
    Ok(columns)
}

/// Reads subscribers and derives the schema from the header. Stops after
/// `max_errors` row errors.
pub fn read_subscribers(
    input: impl Read,
    max_errors: usize,
) -> Result<(KpiSchema, Vec<Subscriber>), FormatError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(FormatError::MissingHeader),
    };
    let columns = parse_header(&header)?;
    let width = columns.len() + 2;

    let mut errors = Vec::new();
    let mut truncated = false;
    let push = |errors: &mut Vec<RowError>, line: u64, message: String| {
        if errors.len() < max_errors.max(1) {
            errors.push(RowError { line, message });
            false
        } else {
            true
        }
    };

    let mut rows = Vec::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            truncated |= push(
                &mut errors,
                line,
                format!("expected {width} fields, found {}", record.len()),
            );
            continue;
        }
        rows.push((line, record));
    }

    let kinds: Vec<KpiKind> = columns
        .iter()
        .enumerate()
        .map(|(k, (_, kind))| {
            kind.unwrap_or_else(|| {
                if rows
                    .iter()
                    .all(|(_, r)| r[k + 2].trim().parse::<f64>().is_ok())
                {
                    KpiKind::Numeric
                } else {
                    KpiKind::Categorical
                }
            })
        })
        .collect();
    let mut schema = KpiSchema::new(
        columns
            .iter()
            .zip(&kinds)
            .map(|((name, _), &kind)| KpiAttribute {
                name: name.clone(),
                kind,
            })
            .collect(),
    );

    let mut ids = HashSet::new();
    let mut subscribers = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        let id = record[0].to_string();
        if id.is_empty() {
            truncated |= push(&mut errors, line, "empty subscriber id".into());
            continue;
        }
        let fc = match record[1].trim().parse::<u32>() {
            Ok(fc) => fc,
            Err(_) => {
                truncated |= push(
                    &mut errors,
                    line,
                    format!("fc {:?} is not a non-negative integer", &record[1]),
                );
                continue;
            }
        };
        let mut values = Vec::with_capacity(kinds.len());
        let mut bad = None;
        for (k, &kind) in kinds.iter().enumerate() {
            let raw = &record[k + 2];
            match kind {
                KpiKind::Numeric => match raw.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(KpiValue::Numeric(v)),
                    Ok(_) => {
                        bad = Some(format!("non-finite value for {:?}", columns[k].0));
                        break;
                    }
                    Err(_) => {
                        bad = Some(format!("{raw:?} is not a number for {:?}", columns[k].0));
                        break;
                    }
                },
                KpiKind::Categorical => values.push(KpiValue::Categorical(schema.intern(raw))),
            }
        }
        if let Some(message) = bad {
            truncated |= push(&mut errors, line, message);
            continue;
        }
        if !ids.insert(id.clone()) {
            truncated |= push(&mut errors, line, format!("duplicate subscriber id {id:?}"));
            continue;
        }
        subscribers.push(Subscriber {
            id,
            kpis: KpiVector(values),
            frequency_cap: fc,
        });
    }
    if !errors.is_empty() {
        return Err(FormatError::Rows { errors, truncated });
    }
    Ok((schema, subscribers))
}

pub fn write_subscribers(
    out: impl Write,
    schema: &KpiSchema,
    subscribers: &[Subscriber],
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "fc".to_string()];
    header.extend(schema.attributes().iter().map(|a| match a.kind {
        KpiKind::Numeric => a.name.clone(),
        KpiKind::Categorical => format!("{}:cat", a.name),
    }));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for s in subscribers {
        row.clear();
        row.push(s.id.clone());
        row.push(s.frequency_cap.to_string());
        for value in &s.kpis.0 {
            row.push(match value {
                KpiValue::Numeric(v) => v.to_string(),
                KpiValue::Categorical(id) => schema
                    .categories()
                    .resolve(*id)
                    .unwrap_or_default()
                    .to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PriceField {
    Text(String),
    Number(serde_json::Number),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignRecord {
    id: String,
    predicate: String,
    price: PriceField,
    frequency_cap: u64,
}

#[derive(Serialize)]
struct CampaignOut<'a> {
    id: &'a str,
    predicate: String,
    price: Money,
    frequency_cap: u64,
}

/// Reads campaigns, parsing predicates against `schema`.
pub fn read_campaigns(input: impl Read, schema: &KpiSchema) -> Result<Vec<Campaign>, FormatError> {
    let records: Vec<CampaignRecord> = serde_json::from_reader(input)?;
    let mut ids = HashSet::new();
    let mut campaigns = Vec::with_capacity(records.len());
    for r in records {
        if !ids.insert(r.id.clone()) {
            return Err(FormatError::Campaign(format!(
                "duplicate campaign id {:?}",
                r.id
            )));
        }
        let price_text = match &r.price {
            PriceField::Text(s) => s.clone(),
            PriceField::Number(n) => n.to_string(),
        };
        let price: Money = price_text
            .parse()
            .map_err(|e| FormatError::Campaign(format!("campaign {}: {e}", r.id)))?;
        if price < Money::ZERO {
            return Err(FormatError::Campaign(format!(
                "campaign {}: negative price",
                r.id
            )));
        }
        let predicate = parse_predicate(&r.predicate, schema).map_err(|e| {
            let what = match &e.kind {
                ParseErrorKind::Syntax { .. } => "syntax error",
                ParseErrorKind::UnknownAttribute(_) => "unknown attribute",
                ParseErrorKind::TypeMismatch { .. } => "type mismatch",
            };
            FormatError::Campaign(format!("{what} in campaign {}: {e}", r.id))
        })?;
        campaigns.push(Campaign {
            id: r.id,
            predicate,
            price,
            frequency_cap: r.frequency_cap,
        });
    }
    Ok(campaigns)
}

pub fn write_campaigns(out: impl Write, campaigns: &[Campaign]) -> Result<(), FormatError> {
    let records: Vec<CampaignOut> = campaigns
        .iter()
        .map(|c| CampaignOut {
            id: &c.id,
            predicate: c.predicate.to_string(),
            price: c.price,
            frequency_cap: c.frequency_cap,
        })
        .collect();
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &records)?;
    writeln!(out)?;
    Ok(())
}

/// `subscriber_id,campaign_id`, subscribers in input order, campaigns in
/// instance order.
pub fn write_allocations(
    out: impl Write,
    instance: &Instance,
    result: &AllocationResult,
) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subscriber_id", "campaign_id"])?;
    for (sub, assigned) in instance.subscribers.iter().zip(&result.assignments) {
        for &j in assigned {
            w.write_record([sub.id.as_str(), instance.campaigns[j].id.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAd {
    pub campaign: String,
    pub price: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedAdRecord {
    pub subscriber: String,
    pub ads: Vec<RankedAd>,
}

/// Assigned campaigns by descending price, ties by campaign id.
pub fn ranked_records(instance: &Instance, result: &AllocationResult) -> Vec<RankedAdRecord> {
    instance
        .subscribers
        .iter()
        .zip(&result.assignments)
        .map(|(sub, assigned)| {
            let mut ads: Vec<RankedAd> = assigned
                .iter()
                .map(|&j| RankedAd {
                    campaign: instance.campaigns[j].id.clone(),
                    price: instance.campaigns[j].price,
                })
                .collect();
            ads.sort_by(|a, b| {
                b.price
                    .cmp(&a.price)
                    .then_with(|| a.campaign.cmp(&b.campaign))
            });
            RankedAdRecord {
                subscriber: sub.id.clone(),
                ads,
            }
        })
        .collect()
}

pub fn write_ranked(
    mut out: impl Write,
    instance: &Instance,
    result: &AllocationResult,
) -> Result<(), FormatError> {
    for record in ranked_records(instance, result) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
