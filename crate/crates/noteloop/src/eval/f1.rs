//! Token-level F1 with SQuAD-style answer normalization.

use std::collections::HashMap;

use crate::eval::EvalError;

/// Lowercases, strips ASCII punctuation, drops the articles a/an/the, and
/// collapses whitespace. Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    no_punct
        .split_whitespace()
        .filter(|token| !matches!(*token, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens(text: &str) -> Vec<String> {
    normalize_answer(text).split_whitespace().map(str::to_string).collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

fn f1_single(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let pred_counts = counts(pred);
    let gold_counts = counts(gold);
    let overlap: usize = pred_counts
        .iter()
        .map(|(token, n)| n.min(gold_counts.get(token).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best multiset-overlap F1 of the prediction against any gold answer.
pub fn token_f1(pred: &str, golds: &[String]) -> Result<f64, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::Precondition("golds must be non-empty".into()));
    }
    let pred_tokens = tokens(pred);
    Ok(golds
        .iter()
        .map(|gold| f1_single(&pred_tokens, &tokens(gold)))
        .fold(0.0f64, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golds(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalization_rules() {
        assert_eq!(normalize_answer("The Walls and Bridges"), "walls and bridges");
        assert_eq!(normalize_answer("Atlético Madrid."), "atlético madrid");
        assert_eq!(normalize_answer(""), "");
    }

    #[test]
    fn normalization_is_idempotent() {
        for s in ["The Quick, Brown Fox!", "  a  an the  ", "Tōkyō (東京)"] {
            let once = normalize_answer(s);
            assert_eq!(normalize_answer(&once), once);
        }
    }

    #[test]
    fn identity_scores_one() {
        assert_eq!(token_f1("Warsaw", &golds(&["Warsaw"])).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_scores_zero() {
        assert_eq!(token_f1("Paris", &golds(&["Warsaw"])).unwrap(), 0.0);
    }

    #[test]
    fn partial_overlap_hand_case() {
        // pred 4 tokens, gold 2, overlap 2: P=0.5, R=1.0, F1=2/3.
        let f1 = token_f1("Notre Dame Law School", &golds(&["Notre Dame"])).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn takes_the_best_gold() {
        let f1 = token_f1("Walls and Bridges", &golds(&["Nope", "The Walls and Bridges"])).unwrap();
        assert_eq!(f1, 1.0);
    }

    #[test]
    fn empty_golds_is_an_error() {
        assert!(token_f1("x", &[]).is_err());
    }

    #[test]
    fn both_empty_after_normalization_is_a_match() {
        assert_eq!(token_f1("the", &golds(&["a an"])).unwrap(), 1.0);
        assert_eq!(token_f1("something", &golds(&["the"])).unwrap(), 0.0);
    }

    #[test]
    fn multiset_counting_not_set_counting() {
        // "b b" vs "b": overlap is min(2,1)=1, P=1/2, R=1, F1=2/3.
        let f1 = token_f1("b b", &golds(&["b"])).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }
}
