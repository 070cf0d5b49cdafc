//! Fixtures shared by the benchmarks.

use lle_core::kb::{load_kb, KnowledgeBase};
use lle_core::rule::Formula;
use serde_json::json;

pub const DEMO: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../demo");

pub fn demo(name: &str) -> Vec<u8> {
    std::fs::read(format!("{DEMO}/{name}")).expect("demo fixture")
}

/// `(v0 AND v1) OR (v2 AND v3) OR ...` over `vars` distinct atoms.
pub fn wide_rule(vars: usize) -> String {
    (0..vars)
        .collect::<Vec<_>>()
        .chunks(2)
        .map(|c| c.iter().map(|i| format!("v{i}")).collect::<Vec<_>>().join(" AND "))
        .map(|clause| format!("({clause})"))
        .collect::<Vec<_>>()
        .join(" OR ")
}

/// Left-leaning implication chain of the given length.
pub fn deep_formula(len: usize) -> Formula {
    (1..len).fold(Formula::var("v0"), |acc, i| Formula::implies(acc, Formula::var(format!("v{i}"))))
}

/// A KB with `recs` recommendations whose relevance rules each use `vars`
/// atoms.
pub fn synthetic_kb(recs: usize, vars: usize) -> KnowledgeBase {
    let factors: Vec<_> = (0..vars + recs)
        .map(|i| json!({"name": format!("v{i}"), "question": format!("Question {i}?")}))
        .collect();
    let recommendations: Vec<_> = (0..recs)
        .map(|r| {
            json!({
                "id": format!("rec{r}"),
                "title": format!("Item {r}"),
                "category": "lab",
                "relevance_rule": wide_rule(vars),
                "completion_rule": format!("v{}", vars + r),
            })
        })
        .collect();
    let doc = json!({
        "namespace": "bench.synthetic",
        "version": "1",
        "factors": factors,
        "recommendations": recommendations,
    });
    load_kb(doc.to_string().as_bytes()).expect("synthetic kb")
}
