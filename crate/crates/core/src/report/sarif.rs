use super::Report;
use crate::detect::{Confidence, Finding};
use crate::Smell;
use serde_json::{json, Value};

pub const SARIF_VERSION: &str = "2.1.0";
const SARIF_SCHEMA: &str = "https://json.schemastore.org/sarif-2.1.0.json";

fn rule_name(s: Smell) -> String {
    s.title().split_whitespace().collect()
}

fn level(c: Confidence) -> &'static str {
    match c {
        Confidence::Confirmed => "error",
        Confidence::Likely => "warning",
        Confidence::Static => "note",
    }
}

fn rule(s: Smell) -> Value {
    json!({
        "id": s.id(),
        "name": rule_name(s),
        "shortDescription": { "text": s.title() },
        "fullDescription": { "text": s.description() },
        "defaultConfiguration": { "level": "warning" },
    })
}

fn result(f: &Finding) -> Value {
    let idx = Smell::ALL.iter().position(|s| *s == f.smell).unwrap_or(0);
    let loc = &f.primary_location;
    json!({
        "ruleId": f.smell.id(),
        "ruleIndex": idx,
        "level": level(f.confidence),
        "message": { "text": f.message },
        "locations": [{
            "physicalLocation": {
                "artifactLocation": { "uri": loc.file },
                "region": {
                    "startLine": loc.line.max(1),
                    "startColumn": loc.column.max(1),
                    "charOffset": loc.start,
                    "charLength": loc.length,
                },
            },
            "logicalLocations": [{
                "fullyQualifiedName": format!("{}.{}", f.contract, f.function),
                "kind": "function",
            }],
        }],
        "properties": {
            "confidence": f.confidence.as_str(),
            "contract": f.contract,
            "function": f.function,
            "verification": f.verification,
            "metadata": f.metadata,
        },
    })
}

/// SARIF 2.1.0 log with one rule per smell and one result per finding.
pub fn emit_sarif(report: &Report) -> Value {
    let results: Vec<Value> = report.findings().map(result).collect();
    json!({
        "$schema": SARIF_SCHEMA,
        "version": SARIF_VERSION,
        "runs": [{
            "tool": {
                "driver": {
                    "name": report.tool.name,
                    "version": report.tool.version,
                    "rules": Smell::ALL.iter().map(|s| rule(*s)).collect::<Vec<_>>(),
                },
            },
            "results": results,
            "properties": { "mode": report.mode, "timing": report.timing },
        }],
    })
}
