//! Collapsing of repeated entries such as re-issued medication orders.

use std::collections::HashMap;

use chrono::NaiveDate;

use super::record::{attr, EvidenceItem};
use crate::resource::SectionKey;

/// Items with equal keys describe the same fact on the same day.
///
/// Value-bearing attributes are part of the key, so two observations of one
/// code at one time with different values are a conflict to surface, not a
/// duplicate to hide.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DedupKey {
    pub section: SectionKey,
    pub system: String,
    pub code: String,
    pub day: Option<NaiveDate>,
    pub status: Option<String>,
    pub value: Option<String>,
    pub unit: Option<String>,
    pub dose: Option<String>,
}

/// `None` for items without a code; those never collapse.
pub fn dedup_key(item: &EvidenceItem) -> Option<DedupKey> {
    let coding = item.primary_code()?;
    Some(DedupKey {
        section: item.section,
        system: coding.system.clone(),
        code: coding.code.clone(),
        day: item.effective_at.map(|t| t.date_naive()),
        status: item.status.clone(),
        value: item.attr(attr::VALUE).map(str::to_string),
        unit: item.attr(attr::UNIT).map(str::to_string),
        dose: item.attr(attr::DOSE).map(str::to_string),
    })
}

/// Collapses each group of equal-key items into its most recent member.
///
/// The survivor takes the group's position of first appearance, its
/// `duplicate_count` becomes the group total, and the other members' ids
/// are listed under `collapsed_ids`. Ties on timestamp keep the earlier
/// item. Running this twice changes nothing.
pub fn deduplicate(items: Vec<EvidenceItem>) -> Vec<EvidenceItem> {
    let mut out: Vec<EvidenceItem> = Vec::with_capacity(items.len());
    let mut slot_of: HashMap<DedupKey, usize> = HashMap::new();
    let mut absorbed: Vec<Vec<String>> = Vec::with_capacity(items.len());

    for item in items {
        let Some(key) = dedup_key(&item) else {
            out.push(item);
            absorbed.push(vec![]);
            continue;
        };
        match slot_of.get(&key) {
            None => {
                slot_of.insert(key, out.len());
                out.push(item);
                absorbed.push(vec![]);
            }
            Some(&slot) => {
                let current = &mut out[slot];
                let total = current.duplicate_count + item.duplicate_count;
                let loser = if item.effective_at > current.effective_at {
                    std::mem::replace(current, item)
                } else {
                    item
                };
                current.duplicate_count = total;
                let ids = &mut absorbed[slot];
                ids.push(loser.evidence_id.clone());
                if let Some(prev) = loser.attr(attr::COLLAPSED_IDS) {
                    ids.extend(prev.split(',').map(str::to_string));
                }
            }
        }
    }

    for (item, mut ids) in out.iter_mut().zip(absorbed) {
        if ids.is_empty() {
            continue;
        }
        if let Some(prev) = item.attributes.remove(attr::COLLAPSED_IDS) {
            ids.extend(prev.split(',').map(str::to_string));
        }
        ids.sort();
        ids.dedup();
        item.attributes.insert(attr::COLLAPSED_IDS.to_string(), ids.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use chrono::{DateTime, TimeZone, Utc};

    use super::*;
    use crate::normalizer::record::Coding;
    use crate::resource::ResourceType;

    fn med(id: &str, at: DateTime<Utc>) -> EvidenceItem {
        EvidenceItem {
            evidence_id: format!("MedicationRequest/{id}"),
            resource_type: ResourceType::MedicationRequest,
            section: SectionKey::Medications,
            display: "Amlodipine 5 MG Oral Tablet".into(),
            codes: vec![Coding {
                system: "http://www.nlm.nih.gov/research/umls/rxnorm".into(),
                code: "197361".into(),
                display: None,
            }],
            effective_at: Some(at),
            status: Some("active".into()),
            attributes: BTreeMap::from([("dose".to_string(), "1 tablet daily".to_string())]),
            duplicate_count: 1,
            source_url: String::new(),
        }
    }

    #[test]
    fn same_day_orders_collapse_to_the_latest() {
        let day = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();
        let items = vec![
            med("m1", day),
            med("m2", day + chrono::Duration::hours(4)),
            med("m3", day + chrono::Duration::hours(1)),
        ];
        let out = deduplicate(items);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].evidence_id, "MedicationRequest/m2");
        assert_eq!(out[0].duplicate_count, 3);
        assert_eq!(
            out[0].attr(attr::COLLAPSED_IDS),
            Some("MedicationRequest/m1,MedicationRequest/m3")
        );
    }

    #[test]
    fn different_days_stay_apart() {
        let day = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();
        let out = deduplicate(vec![med("a", day), med("b", day + chrono::Duration::days(1))]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn uncoded_items_never_collapse() {
        let day = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();
        let mut a = med("a", day);
        let mut b = med("b", day);
        a.codes.clear();
        b.codes.clear();
        assert_eq!(deduplicate(vec![a, b]).len(), 2);
    }

    #[test]
    fn differing_values_are_not_duplicates() {
        let day = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();
        let mut a = med("a", day);
        let mut b = med("b", day);
        a.attributes.insert("value".into(), "5".into());
        b.attributes.insert("value".into(), "6".into());
        assert_eq!(deduplicate(vec![a, b]).len(), 2);
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(deduplicate(vec![]).is_empty());
    }

    #[test]
    fn idempotent_and_count_preserving() {
        let day = Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap();
        let once = deduplicate(vec![
            med("a", day),
            med("b", day),
            med("c", day + chrono::Duration::days(2)),
        ]);
        let twice = deduplicate(once.clone());
        assert_eq!(once, twice);
        assert_eq!(once.iter().map(|i| i.duplicate_count).sum::<u32>(), 3);
    }
}
