//! Plain-text and markdown views of a [`SummaryDocument`].
//!
//! Both are pure functions of the document. The only dates printed are the
//! clinical dates already inside statements.

use std::fmt::Write;

use super::document::{StatementKind, SummaryDocument, SummaryStatement};

fn refs_suffix(st: &SummaryStatement) -> String {
    if st.evidence_refs.is_empty() {
        String::new()
    } else {
        format!(" [{}]", st.evidence_refs.join(", "))
    }
}

pub fn render_text(doc: &SummaryDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", doc.patient_header);
    for section in doc.sections() {
        let _ = writeln!(out, "\n== {} ==", section.key.label());
        for st in &section.statements {
            let _ = writeln!(out, "{}{}", st.text, refs_suffix(st));
        }
    }
    let _ = writeln!(out, "\n{}", doc.disclaimer);
    out
}

pub fn render_markdown(doc: &SummaryDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}", doc.patient_header);
    for section in doc.sections() {
        let _ = writeln!(out, "\n## {}\n", section.key.label());
        for st in &section.statements {
            match st.kind {
                StatementKind::MissingData => {
                    let _ = writeln!(out, "- _{}_", st.text);
                }
                _ => {
                    let _ = writeln!(out, "- {}{}", st.text, refs_suffix(st));
                }
            }
        }
    }
    let _ = writeln!(out, "\n> {}", doc.disclaimer);
    out
}
