//! Most-recent-versus-prior comparisons for numeric lab and vital series.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::record::{attr, Coding, EvidenceItem};

/// Relative tolerance under which two values count as unchanged.
pub const FLAT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Flat,
    Single,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Rising => "rising",
            Direction::Falling => "falling",
            Direction::Flat => "flat",
            Direction::Single => "single value",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub at: DateTime<Utc>,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendEntry {
    pub code: Coding,
    pub display: String,
    pub latest: TrendPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<TrendPoint>,
    pub direction: Direction,
    pub latest_evidence_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_evidence_id: Option<String>,
}

pub fn direction_between(latest: f64, prior: f64) -> Direction {
    let scale = latest.abs().max(prior.abs());
    if (latest - prior).abs() <= FLAT_TOLERANCE * scale {
        Direction::Flat
    } else if latest > prior {
        Direction::Rising
    } else {
        Direction::Falling
    }
}

/// One entry per code that has at least one dated numeric value.
///
type Series<'a> = BTreeMap<(String, String), Vec<(DateTime<Utc>, f64, &'a EvidenceItem)>>;

/// `latest` is the newest value; `prior` the newest value strictly older
/// than it. Among values sharing the newest instant the first in input
/// order wins. Entries are ordered by (system, code).
pub fn compute_trends(lab_items: &[EvidenceItem]) -> Vec<TrendEntry> {
    let mut series: Series = BTreeMap::new();
    for item in lab_items {
        let (Some(code), Some(at), Some(value)) = (item.primary_code(), item.effective_at, item.numeric_value()) else {
            continue;
        };
        series
            .entry((code.system.clone(), code.code.clone()))
            .or_default()
            .push((at, value, item));
    }

    series
        .into_values()
        .map(|mut points| {
            // stable: equal instants keep input order
            points.sort_by_key(|p| std::cmp::Reverse(p.0));
            let (latest_at, latest_value, latest_item) = points[0];
            let prior = points.iter().find(|(at, _, _)| *at < latest_at);
            let point = |at: DateTime<Utc>, value: f64, item: &EvidenceItem| TrendPoint {
                at,
                value,
                unit: item.attr(attr::UNIT).map(str::to_string),
            };
            TrendEntry {
                code: latest_item.primary_code().cloned().expect("filtered on code"),
                display: latest_item.display.clone(),
                latest: point(latest_at, latest_value, latest_item),
                prior: prior.map(|&(at, v, item)| point(at, v, item)),
                direction: prior.map_or(Direction::Single, |&(_, v, _)| direction_between(latest_value, v)),
                latest_evidence_id: latest_item.evidence_id.clone(),
                prior_evidence_id: prior.map(|(_, _, item)| item.evidence_id.clone()),
            }
        })
        .collect()
}
