use std::sync::LazyLock;

use regex::Regex;

use super::types::{Step, TokenRecord};
use super::ModelError;

/// A blank line (possibly containing spaces or tabs) separates steps.
static SEPARATOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\n\s*\n").expect("separator regex"));

/// Fallback boundary: a line starting a numbered step ("Step 3:", "2.", "4)").
static NUMBERED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?m)^(?:Step\s+\d+\s*[:.)]|\d+\s*[.)]\s)").expect("numbered regex")
});

/// Splits a solution into steps and assigns each token to exactly one step.
///
/// The primary rule splits on blank lines; when the text contains none, a
/// secondary rule splits at lines with a numbered-step prefix. Separator
/// bytes are excluded from step texts but stay inside token spans, so
/// concatenating the token texts of all steps reproduces the input exactly.
///
/// A token goes to the earliest step whose body overlaps its byte span: a
/// separator-leading token ("\n\nThen") belongs to the step it opens, while
/// a token that finishes one body and opens the next stays with the earlier
/// step. Tokens made only of separator bytes stay with the preceding step.
pub fn split_into_steps(text: &str, tokens: &[TokenRecord]) -> Result<Vec<Step>, ModelError> {
    if text.trim().is_empty() {
        return Err(ModelError::EmptySolution);
    }
    check_alignment(text, tokens)?;

    let bodies = body_ranges(text);
    debug_assert!(!bodies.is_empty(), "non-blank text must yield a body");

    let mut steps: Vec<Step> = bodies
        .iter()
        .enumerate()
        .map(|(i, &(start, end))| Step {
            index: i + 1,
            text: text[start..end].to_string(),
            tokens: Vec::new(),
        })
        .collect();

    let mut offset = 0usize;
    let mut floor = 0usize;
    for token in tokens {
        let end = offset + token.text.len();
        let step = assign_step(&bodies, offset, end, floor);
        floor = step;
        steps[step].tokens.push(token.clone());
        offset = end;
    }

    Ok(steps)
}

/// Earliest body overlapping `[start, end)`; separator-only tokens stay
/// with the step owning their first byte. `floor` keeps assignments
/// monotone so reconstruction preserves token order.
fn assign_step(bodies: &[(usize, usize)], start: usize, end: usize, floor: usize) -> usize {
    let mut owner = floor;
    for (i, &(body_start, body_end)) in bodies.iter().enumerate().skip(floor) {
        if body_start >= end {
            break;
        }
        if start < body_end && end > body_start {
            return i;
        }
        if body_start <= start {
            owner = i;
        }
    }
    owner
}

/// Concatenates the token texts of every step, reproducing the exact text
/// the steps were split from.
pub fn reconstruct_text(steps: &[Step]) -> String {
    let mut out = String::new();
    for step in steps {
        for token in &step.tokens {
            out.push_str(&token.text);
        }
    }
    out
}

fn check_alignment(text: &str, tokens: &[TokenRecord]) -> Result<(), ModelError> {
    let mut offset = 0usize;
    for token in tokens {
        let end = offset + token.text.len();
        if end > text.len() || &text[offset..end] != token.text {
            return Err(ModelError::TokenMismatch { at: offset });
        }
        offset = end;
    }
    if offset != text.len() {
        return Err(ModelError::TokenMismatch { at: offset });
    }
    Ok(())
}

/// Byte ranges of step bodies, in order. Empty bodies (leading or trailing
/// separators) are dropped.
fn body_ranges(text: &str) -> Vec<(usize, usize)> {
    let separators: Vec<(usize, usize)> = SEPARATOR
        .find_iter(text)
        .map(|m| (m.start(), m.end()))
        .collect();

    if separators.is_empty() {
        let starts: Vec<usize> = NUMBERED.find_iter(text).map(|m| m.start()).collect();
        let mut boundaries = vec![0usize];
        boundaries.extend(starts.into_iter().filter(|&s| s > 0));
        let mut ranges = Vec::with_capacity(boundaries.len());
        for (i, &start) in boundaries.iter().enumerate() {
            let end = boundaries.get(i + 1).copied().unwrap_or(text.len());
            if start < end {
                ranges.push((start, end));
            }
        }
        return ranges;
    }

    let mut ranges = Vec::with_capacity(separators.len() + 1);
    let mut cursor = 0usize;
    for (sep_start, sep_end) in separators {
        if sep_start > cursor {
            ranges.push((cursor, sep_start));
        }
        cursor = sep_end;
    }
    if cursor < text.len() {
        ranges.push((cursor, text.len()));
    }
    ranges
}
