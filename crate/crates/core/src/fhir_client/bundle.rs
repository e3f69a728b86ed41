//! Decoding of FHIR search-set Bundles and single-resource reads.
//!
//! Input is whatever the server sent, so nothing here panics on malformed
//! JSON; every failure is a [`BundleError`].

use serde_json::Value;

use crate::resource::ResourceType;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("response is not valid JSON: {0}")]
    Json(String),
    #[error("expected a JSON object")]
    NotAnObject,
    #[error("expected resourceType `{expected}`, found `{found}`")]
    WrongResourceType { expected: String, found: String },
    #[error("resource has no id")]
    MissingId,
    #[error("Bundle.entry is not an array")]
    MalformedEntries,
    #[error("Bundle.link is not an array")]
    MalformedLinks,
}

/// One page of a patient-scoped search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchPage {
    /// Entry resources of the searched type, each with a non-empty id.
    pub resources: Vec<Value>,
    /// Entries dropped: included resources, OperationOutcomes, or entries
    /// without a usable resource.
    pub skipped: usize,
    /// `link[relation = "next"].url`, verbatim.
    pub next: Option<String>,
    pub total: Option<u64>,
}

/// Decodes one search-set page, keeping only entries of `expected` type.
pub fn parse_search_page(body: &str, expected: ResourceType) -> Result<SearchPage, BundleError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BundleError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or(BundleError::NotAnObject)?;
    let rt = obj.get("resourceType").and_then(Value::as_str).unwrap_or("");
    if rt != "Bundle" {
        return Err(BundleError::WrongResourceType {
            expected: "Bundle".into(),
            found: rt.into(),
        });
    }

    let next = match obj.get("link") {
        None | Some(Value::Null) => None,
        Some(Value::Array(links)) => links.iter().find_map(|link| {
            let relation = link.get("relation").and_then(Value::as_str)?;
            if relation != "next" {
                return None;
            }
            link.get("url")
                .and_then(Value::as_str)
                .filter(|u| !u.is_empty())
                .map(str::to_string)
        }),
        Some(_) => return Err(BundleError::MalformedLinks),
    };

    let entries: &[Value] = match obj.get("entry") {
        None | Some(Value::Null) => &[],
        Some(Value::Array(entries)) => entries,
        Some(_) => return Err(BundleError::MalformedEntries),
    };

    let mut resources = Vec::with_capacity(entries.len());
    let mut skipped = 0;
    for entry in entries {
        let mode = entry.get("search").and_then(|s| s.get("mode")).and_then(Value::as_str);
        if matches!(mode, Some("include") | Some("outcome")) {
            skipped += 1;
            continue;
        }
        match entry.get("resource") {
            Some(resource) if check_resource(resource, expected).is_ok() => {
                resources.push(resource.clone());
            }
            _ => skipped += 1,
        }
    }

    Ok(SearchPage {
        resources,
        skipped,
        next,
        total: obj.get("total").and_then(Value::as_u64),
    })
}

/// Decodes the body of a direct read such as `GET Patient/{id}`.
pub fn parse_resource(body: &str, expected: ResourceType) -> Result<Value, BundleError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BundleError::Json(e.to_string()))?;
    check_resource(&value, expected)?;
    Ok(value)
}

/// Checks `resourceType` and `id` of a resource payload.
pub fn check_resource(resource: &Value, expected: ResourceType) -> Result<(), BundleError> {
    let obj = resource.as_object().ok_or(BundleError::NotAnObject)?;
    let found = obj.get("resourceType").and_then(Value::as_str).unwrap_or("");
    if found != expected.as_str() {
        return Err(BundleError::WrongResourceType {
            expected: expected.as_str().into(),
            found: found.into(),
        });
    }
    match obj.get("id").and_then(Value::as_str) {
        Some(id) if !id.trim().is_empty() => Ok(()),
        _ => Err(BundleError::MissingId),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bundle(entries: Value, next: Option<&str>) -> String {
        let mut links = vec![json!({"relation": "self", "url": "http://x/Condition?patient=1"})];
        if let Some(n) = next {
            links.push(json!({"relation": "next", "url": n}));
        }
        json!({"resourceType": "Bundle", "type": "searchset", "total": 3, "link": links, "entry": entries}).to_string()
    }

    #[test]
    fn keeps_matching_entries_and_follows_next() {
        let body = bundle(
            json!([
                {"resource": {"resourceType": "Condition", "id": "c1"}, "search": {"mode": "match"}},
                {"resource": {"resourceType": "Condition", "id": "c2"}},
                {"resource": {"resourceType": "Patient", "id": "p1"}, "search": {"mode": "include"}},
                {"resource": {"resourceType": "OperationOutcome", "id": "oo"}, "search": {"mode": "outcome"}},
                {"resource": {"resourceType": "Condition"}},
                {"fullUrl": "http://x/Condition/c9"}
            ]),
            Some("http://x/Condition?patient=1&page=2"),
        );
        let page = parse_search_page(&body, ResourceType::Condition).unwrap();
        assert_eq!(page.resources.len(), 2);
        assert_eq!(page.skipped, 4);
        assert_eq!(page.next.as_deref(), Some("http://x/Condition?patient=1&page=2"));
        assert_eq!(page.total, Some(3));
    }

    #[test]
    fn empty_searchset() {
        let body = json!({"resourceType": "Bundle", "type": "searchset", "total": 0}).to_string();
        let page = parse_search_page(&body, ResourceType::Immunization).unwrap();
        assert!(page.resources.is_empty());
        assert_eq!(page.next, None);
    }

    #[test]
    fn rejects_non_bundles() {
        assert!(matches!(
            parse_search_page("{\"resourceType\":\"OperationOutcome\"}", ResourceType::Goal),
            Err(BundleError::WrongResourceType { .. })
        ));
        assert!(matches!(
            parse_search_page("[]", ResourceType::Goal),
            Err(BundleError::NotAnObject)
        ));
        assert!(matches!(
            parse_search_page("not json", ResourceType::Goal),
            Err(BundleError::Json(_))
        ));
        assert_eq!(
            parse_search_page("{\"resourceType\":\"Bundle\",\"entry\":{}}", ResourceType::Goal),
            Err(BundleError::MalformedEntries)
        );
    }

    #[test]
    fn direct_read() {
        let ok = parse_resource(r#"{"resourceType":"Patient","id":"p1"}"#, ResourceType::Patient);
        assert!(ok.is_ok());
        assert_eq!(
            parse_resource(r#"{"resourceType":"Patient","id":""}"#, ResourceType::Patient),
            Err(BundleError::MissingId)
        );
    }
}
