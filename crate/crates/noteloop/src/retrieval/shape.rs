//! Document shaping for the baseline loops: first paragraph, term lookup,
//! and word-bounded chunking.

use crate::types::RetrievedDocument;

/// Splits a markdown body into trimmed, non-empty paragraph blocks.
pub fn paragraphs(body: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut start = None;
    let mut last_end = 0;
    for (offset, line) in split_lines_with_offsets(body) {
        if line.trim().is_empty() {
            if let Some(s) = start.take() {
                blocks.push(body[s..offset].trim());
            }
        } else if start.is_none() {
            start = Some(offset);
        }
        last_end = offset + line.len();
    }
    if let Some(s) = start {
        blocks.push(body[s..last_end].trim());
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

fn split_lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split_inclusive('\n').scan(0usize, |offset, line| {
        let start = *offset;
        *offset += line.len();
        Some((start, line.trim_end_matches('\n')))
    })
}

/// Text up to the first blank line, with heading blocks skipped.
pub fn first_paragraph(doc: &RetrievedDocument) -> String {
    paragraphs(&doc.body_markdown)
        .into_iter()
        .find(|block| !block.starts_with('#'))
        .unwrap_or("")
        .to_string()
}

/// All paragraphs containing `term` (case-insensitive), in document order.
pub fn lookup(doc: &RetrievedDocument, term: &str) -> Vec<String> {
    if term.trim().is_empty() {
        return Vec::new();
    }
    let needle = term.to_lowercase();
    paragraphs(&doc.body_markdown)
        .into_iter()
        .filter(|block| block.to_lowercase().contains(&needle))
        .map(str::to_string)
        .collect()
}

/// Paragraph-aligned chunks of at most `max_words` words each. Oversized
/// paragraphs split at sentence boundaries, oversized sentences at words.
pub fn chunk(doc: &RetrievedDocument, max_words: usize) -> Vec<String> {
    assert!(max_words >= 1, "max_words must be at least 1");
    let mut pieces: Vec<String> = Vec::new();
    for block in paragraphs(&doc.body_markdown) {
        if word_count(block) <= max_words {
            pieces.push(block.to_string());
        } else {
            for sentence in split_sentences(block) {
                if word_count(&sentence) <= max_words {
                    pieces.push(sentence);
                } else {
                    pieces.extend(split_by_words(&sentence, max_words));
                }
            }
        }
    }

    // Greedy packing keeps chunk count low without reordering.
    let mut chunks: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut current_words = 0;
    for piece in pieces {
        let words = word_count(&piece);
        if current_words > 0 && current_words + words > max_words {
            chunks.push(std::mem::take(&mut current));
            current_words = 0;
        }
        if !current.is_empty() {
            current.push_str("\n\n");
        }
        current.push_str(&piece);
        current_words += words;
    }
    if !current.is_empty() {
        chunks.push(current);
    }
    chunks
}

fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

fn split_sentences(block: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = block.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            let boundary = chars.peek().map(|n| n.is_whitespace()).unwrap_or(true);
            if boundary && !current.trim().is_empty() {
                sentences.push(current.trim().to_string());
                current.clear();
            }
        }
    }
    if !current.trim().is_empty() {
        sentences.push(current.trim().to_string());
    }
    sentences
}

fn split_by_words(text: &str, max_words: usize) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    words.chunks(max_words).map(|w| w.join(" ")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::DocumentSource;

    fn doc(body: &str) -> RetrievedDocument {
        RetrievedDocument {
            title: "T".into(),
            source: DocumentSource::WikipediaApi,
            body_markdown: body.into(),
            rank: 1,
            fetch_url: None,
        }
    }

    #[test]
    fn first_paragraph_stops_at_blank_line() {
        assert_eq!(first_paragraph(&doc("Intro.\n\nSecond.")), "Intro.");
    }

    #[test]
    fn first_paragraph_skips_headings() {
        assert_eq!(first_paragraph(&doc("# Title\n\nIntro.\n\nMore.")), "Intro.");
    }

    #[test]
    fn single_paragraph_is_returned_whole() {
        assert_eq!(first_paragraph(&doc("Only paragraph here.")), "Only paragraph here.");
    }

    #[test]
    fn lookup_finds_containing_paragraphs() {
        let d = doc("Early life.\n\nKavanaugh graduated from Yale Law School in 1990.\n\nCareer.");
        let hits = lookup(&d, "Yale Law School");
        assert_eq!(hits, vec!["Kavanaugh graduated from Yale Law School in 1990.".to_string()]);
    }

    #[test]
    fn lookup_absent_term_is_empty() {
        assert!(lookup(&doc("Nothing here."), "Yale").is_empty());
    }

    #[test]
    fn lookup_returns_multiple_matches_in_order() {
        let d = doc("First yale mention.\n\nUnrelated.\n\nSecond YALE mention.");
        let hits = lookup(&d, "yale");
        assert_eq!(hits.len(), 2);
        assert!(hits[0].starts_with("First"));
        assert!(hits[1].starts_with("Second"));
    }

    fn words(n: usize, tag: &str) -> String {
        (0..n).map(|i| format!("{tag}{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn two_small_paragraphs_pack_into_one_chunk() {
        let body = format!("{}\n\n{}", words(50, "a"), words(50, "b"));
        assert_eq!(chunk(&doc(&body), 120).len(), 1);
    }

    #[test]
    fn two_large_paragraphs_stay_separate() {
        let body = format!("{}\n\n{}", words(100, "a"), words(100, "b"));
        assert_eq!(chunk(&doc(&body), 120).len(), 2);
    }

    #[test]
    fn empty_body_yields_no_chunks() {
        assert!(chunk(&doc(""), 120).is_empty());
    }

    #[test]
    fn chunking_is_a_partition_of_the_body() {
        let body = format!(
            "{}. {}. {}\n\nshort one",
            words(80, "x"),
            words(90, "y"),
            words(10, "z")
        );
        let d = doc(&body);
        let chunks = chunk(&d, 60);
        let rejoined: Vec<String> =
            chunks.join(" ").split_whitespace().map(str::to_string).collect();
        let original: Vec<String> = body.split_whitespace().map(str::to_string).collect();
        assert_eq!(rejoined, original);
        for c in &chunks {
            assert!(word_count(c) <= 60);
        }
    }
}
