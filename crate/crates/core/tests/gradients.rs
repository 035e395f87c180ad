#[path = "support/gradsuite.rs"]
mod gradsuite;

use gradsuite::MAX_RELATIVE_ERROR;

fn assert_all(cases: Vec<gradsuite::CaseResult>) {
    let bad: Vec<_> = cases
        .iter()
        .filter(|c| !(c.max_relative_error < MAX_RELATIVE_ERROR))
        .map(|c| format!("{}#{}: {:.3e}", c.name, c.instance, c.max_relative_error))
        .collect();
    assert!(bad.is_empty(), "gradient mismatches: {bad:?}");
}

#[test]
fn primitives_match_central_differences() {
    assert_all(gradsuite::primitive_cases(20));
}

#[test]
fn gru_cell_matches_central_differences() {
    assert_all(gradsuite::gru_cell_cases(20));
}

#[test]
fn attention_matches_central_differences() {
    assert_all(gradsuite::attention_cases(20));
}

#[test]
fn full_models_match_central_differences() {
    for v in [
        dlban_core::classifier::Variant::BigruAttention,
        dlban_core::classifier::Variant::Gru,
        dlban_core::classifier::Variant::Lstm,
    ] {
        assert_all(gradsuite::model_cases(20, v));
    }
}
