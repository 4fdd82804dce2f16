use std::sync::LazyLock;

use regex::Regex;

static FRAC: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\\[dt]?frac\s*\{([^{}]+)\}\s*\{([^{}]+)\}").expect("frac regex")
});
static FRAC_SHORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\[dt]?frac\s*(\d)\s*(\d)").expect("short frac regex"));
static TEXT_CMD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\text\s*\{([^{}]*)\}").expect("text regex"));
static SPACING: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\\left|\\right|\\[,;!:]|\\ ").expect("spacing regex"));
static THOUSANDS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d),(\d{3})").expect("thousands regex"));
static ANSWER_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)(?:final\s+)?answer\s*(?:is|:)\s*(.+)$").expect("answer-line regex")
});

/// Canonicalizes an answer string so that textual variants of the same value
/// compare equal.
///
/// The pipeline unwraps presentation (boxed markers, `####` markers, outer
/// dollar signs, a trailing `lhs = rhs` equation, trailing periods), rewrites
/// simple LaTeX fractions, collapses whitespace, removes thousands
/// separators, and canonicalizes numeric values: decimals lose redundant
/// zeros and fractions are reduced, rendering as exact decimals when the
/// denominator allows ("1/2" and "0.5" meet at "0.5"). Non-numeric answers
/// are lowercased per word (single letters keep case so variable names
/// survive). The function is idempotent.
pub fn normalize_answer(raw: &str) -> String {
    let mut s = raw.trim().to_string();

    for _ in 0..8 {
        let before = s.clone();
        s = unwrap_once(&s);
        if s == before {
            break;
        }
    }

    for _ in 0..8 {
        let before = s.clone();
        s = FRAC.replace_all(&s, "$1/$2").into_owned();
        s = FRAC_SHORT.replace_all(&s, "$1/$2").into_owned();
        s = TEXT_CMD.replace_all(&s, "$1").into_owned();
        s = SPACING.replace_all(&s, "").into_owned();
        if s == before {
            break;
        }
    }

    s = s.split_whitespace().collect::<Vec<_>>().join(" ");

    loop {
        let replaced = THOUSANDS.replace_all(&s, "${1}${2}").into_owned();
        if replaced == s {
            break;
        }
        s = replaced;
    }

    if let Some(canon) = canonical_number(&s) {
        return canon;
    }

    lowercase_words(&s)
}

/// True when both strings canonicalize to the same answer.
pub fn answers_match(a: &str, b: &str) -> bool {
    normalize_answer(a) == normalize_answer(b)
}

/// Pulls the final answer out of a solution text.
///
/// Priority: the last balanced `\boxed{...}` group, then the text after the
/// last `####` marker (to end of line), then an "answer is ..." / "answer:"
/// phrase scanning lines from the bottom. Returns the raw capture; callers
/// normalize separately. `None` marks the solution format-invalid.
pub fn extract_final_answer(text: &str) -> Option<String> {
    if let Some(content) = last_boxed_content(text) {
        return Some(content.trim().to_string());
    }

    if let Some(pos) = text.rfind("####") {
        let rest = &text[pos + 4..];
        let line = rest.split('\n').next().unwrap_or("").trim();
        if !line.is_empty() {
            return Some(line.to_string());
        }
    }

    for line in text.lines().rev() {
        if let Some(caps) = ANSWER_LINE.captures(line) {
            let ans = caps[1].trim();
            if !ans.is_empty() {
                return Some(ans.to_string());
            }
        }
    }

    None
}

/// One pass of presentation unwrapping; `normalize_answer` iterates this to
/// a fixed point so that nested wrappers cannot defeat idempotence.
fn unwrap_once(input: &str) -> String {
    let mut s = input.trim().to_string();

    if let Some(content) = last_boxed_content(&s) {
        s = content.trim().to_string();
    }

    if let Some(pos) = s.rfind("####") {
        s = s[pos + 4..].trim().to_string();
    }

    s = s.trim_matches('$').trim().to_string();

    if let Some(pos) = s.rfind('=') {
        let rhs = s[pos + 1..].trim();
        if !rhs.is_empty() {
            s = rhs.to_string();
        }
    }

    while s.ends_with('.') {
        s.pop();
        s = s.trim_end().to_string();
    }

    s
}

/// Content of the last balanced `\boxed{...}` group, scanning occurrences
/// from the end; unbalanced groups are skipped.
fn last_boxed_content(text: &str) -> Option<String> {
    const MARKER: &str = r"\boxed{";
    let mut search_end = text.len();
    while let Some(pos) = text[..search_end].rfind(MARKER) {
        let body_start = pos + MARKER.len();
        let mut depth = 1usize;
        for (i, c) in text[body_start..].char_indices() {
            match c {
                '{' => depth += 1,
                '}' => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(text[body_start..body_start + i].to_string());
                    }
                }
                _ => {}
            }
        }
        search_end = pos;
    }
    None
}

/// Canonical form of a numeric answer: a plain decimal, or a reduced
/// fraction when the value has no finite decimal expansion.
fn canonical_number(s: &str) -> Option<String> {
    if let Some(d) = canon_decimal(s) {
        return Some(d);
    }

    let (num_raw, den_raw) = s.split_once('/')?;
    let num = parse_int(num_raw.trim())?;
    let den = parse_int(den_raw.trim())?;
    if den == 0 {
        return None;
    }

    let mut p = num;
    let mut q = den;
    if q < 0 {
        p = -p;
        q = -q;
    }
    let g = gcd(p.unsigned_abs(), q.unsigned_abs()) as i128;
    if g > 1 {
        p /= g;
        q /= g;
    }

    if q == 1 {
        return Some(p.to_string());
    }
    if let Some(decimal) = finite_decimal(p, q) {
        return Some(decimal);
    }
    Some(format!("{p}/{q}"))
}

/// Canonical decimal: optional sign, redundant zeros stripped, zero without
/// a sign. Returns `None` when the string is not a plain decimal literal.
fn canon_decimal(s: &str) -> Option<String> {
    let (sign, body) = match s.as_bytes().first()? {
        b'-' => (true, &s[1..]),
        b'+' => (false, &s[1..]),
        _ => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    if body.matches('.').count() > 1 {
        return None;
    }

    let int_trimmed = int_part.trim_start_matches('0');
    let frac_trimmed = frac_part.trim_end_matches('0');
    let int_canon = if int_trimmed.is_empty() { "0" } else { int_trimmed };

    let mut out = String::new();
    let is_zero = int_canon == "0" && frac_trimmed.is_empty();
    if sign && !is_zero {
        out.push('-');
    }
    out.push_str(int_canon);
    if !frac_trimmed.is_empty() {
        out.push('.');
        out.push_str(frac_trimmed);
    }
    Some(out)
}

/// Signed integer with a digit-count guard that keeps i128 arithmetic exact.
fn parse_int(s: &str) -> Option<i128> {
    let (sign, body) = match s.as_bytes().first()? {
        b'-' => (-1i128, &s[1..]),
        b'+' => (1, &s[1..]),
        _ => (1, s),
    };
    if body.is_empty() || body.len() > 18 || !body.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    body.parse::<i128>().ok().map(|v| sign * v)
}

/// Exact decimal expansion of p/q when q factors as 2^a * 5^b.
fn finite_decimal(p: i128, q: i128) -> Option<String> {
    let mut rest = q;
    let mut twos = 0u32;
    let mut fives = 0u32;
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    if rest != 1 {
        return None;
    }
    let scale = twos.max(fives);
    if scale > 18 {
        return None;
    }

    let mut numerator = p.checked_abs()?;
    for _ in 0..(scale - twos) {
        numerator = numerator.checked_mul(2)?;
    }
    for _ in 0..(scale - fives) {
        numerator = numerator.checked_mul(5)?;
    }

    let digits = numerator.to_string();
    let scale = scale as usize;
    let (int_part, frac_part) = if digits.len() > scale {
        let split = digits.len() - scale;
        (digits[..split].to_string(), digits[split..].to_string())
    } else {
        ("0".to_string(), format!("{:0>width$}", digits, width = scale))
    };
    let frac_trimmed = frac_part.trim_end_matches('0');

    let mut out = String::new();
    let is_zero = int_part == "0" && frac_trimmed.is_empty();
    if p < 0 && !is_zero {
        out.push('-');
    }
    out.push_str(&int_part);
    if !frac_trimmed.is_empty() {
        out.push('.');
        out.push_str(frac_trimmed);
    }
    Some(out)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn lowercase_words(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut run = String::new();
    for c in s.chars() {
        if c.is_ascii_alphabetic() {
            run.push(c);
        } else {
            flush_run(&mut out, &mut run);
            out.push(c);
        }
    }
    flush_run(&mut out, &mut run);
    out
}

fn flush_run(out: &mut String, run: &mut String) {
    if run.len() >= 2 {
        out.push_str(&run.to_ascii_lowercase());
    } else {
        out.push_str(run);
    }
    run.clear();
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxed_fraction_and_decimal_agree() {
        let a = normalize_answer("\\boxed{\\frac{1}{2}}");
        let b = normalize_answer("1/2");
        let c = normalize_answer("0.5");
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(c, "0.5");
    }

    #[test]
    fn trailing_equation_keeps_rhs() {
        assert_eq!(normalize_answer("x = 3"), "3");
        assert_eq!(normalize_answer("y=2x = 10"), "10");
        assert_eq!(normalize_answer("= "), "=");
    }

    #[test]
    fn thousands_separators_are_removed() {
        assert_eq!(normalize_answer("1,000"), "1000");
        assert_eq!(normalize_answer("12,345,678"), "12345678");
        assert_eq!(normalize_answer("1,00"), "1,00", "not a thousands pattern");
    }

    #[test]
    fn numeric_canonicalization() {
        assert_eq!(normalize_answer("007"), "7");
        assert_eq!(normalize_answer("2.50"), "2.5");
        assert_eq!(normalize_answer(".5"), "0.5");
        assert_eq!(normalize_answer("-0.0"), "0");
        assert_eq!(normalize_answer("+42"), "42");
        assert_eq!(normalize_answer("4/8"), "0.5");
        assert_eq!(normalize_answer("2/3"), "2/3");
        assert_eq!(normalize_answer("-4/6"), "-2/3");
        assert_eq!(normalize_answer("6/-4"), "-1.5");
        assert_eq!(normalize_answer("6/3"), "2");
        assert_eq!(normalize_answer("1/8"), "0.125");
        assert_eq!(normalize_answer("1/0"), "1/0", "division by zero left textual");
    }

    #[test]
    fn presentation_wrappers_unwrap() {
        assert_eq!(normalize_answer("$\\boxed{12}$"), "12");
        assert_eq!(normalize_answer("#### 42"), "42");
        assert_eq!(normalize_answer("so the total is 9."), "so the total is 9");
        assert_eq!(normalize_answer("\\boxed{\\boxed{5}}"), "5");
        assert_eq!(normalize_answer("\\text{blue}"), "blue");
    }

    #[test]
    fn words_lowercase_but_single_letters_survive() {
        assert_eq!(normalize_answer("Even"), "even");
        assert_eq!(normalize_answer("X"), "X");
        assert_eq!(normalize_answer("N and M"), "N and M");
    }

    #[test]
    fn normalize_is_idempotent_on_spec_examples() {
        for raw in [
            "\\boxed{\\frac{1}{2}}",
            "x = 3",
            "1,000",
            "$\\frac{3}{4}$",
            "#### -12.",
            "The Answer",
            "\\text{\\text{deep}}",
            "$$5$$",
            "a = b = 1/3",
        ] {
            let once = normalize_answer(raw);
            assert_eq!(normalize_answer(&once), once, "not idempotent for {raw:?}");
        }
    }

    #[test]
    fn extract_prefers_last_boxed_group() {
        let text = "First \\boxed{3} then revised: \\boxed{\\frac{1}{2}} done";
        assert_eq!(extract_final_answer(text).unwrap(), "\\frac{1}{2}");
    }

    #[test]
    fn extract_handles_marker_and_phrase_fallbacks() {
        assert_eq!(extract_final_answer("steps...\n#### 42").unwrap(), "42");
        assert_eq!(
            extract_final_answer("work\nThe final answer is 7.").unwrap(),
            "7."
        );
        assert_eq!(extract_final_answer("Answer: 13\nmore text").unwrap(), "13");
        assert_eq!(extract_final_answer("no conclusion here"), None);
    }

    #[test]
    fn extract_skips_unbalanced_boxed() {
        assert_eq!(extract_final_answer("\\boxed{5} and \\boxed{oops").unwrap(), "5");
        assert_eq!(extract_final_answer("\\boxed{never closed"), None);
    }

    #[test]
    fn answers_match_merges_variants() {
        assert!(answers_match("\\boxed{1/2}", "0.5"));
        assert!(answers_match("x = 1,000", "1000"));
        assert!(!answers_match("2/3", "0.67"));
    }
}
