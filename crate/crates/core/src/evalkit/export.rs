//! Training-data export: one record per labeled solution, with the problem
//! and step texts flattened into a single tagged input string and one
//! '+'/'-' label character per step.
//!
//! Format: `input = esc(problem) "\n" esc(step_1) TAG ... esc(step_T) TAG`
//! where TAG is the step-tag character and esc escapes backslash, the tag
//! character, and newlines. Escaping newlines keeps the single raw newline
//! after the problem unambiguous, so a parser can invert the format exactly.

use serde::{Deserialize, Serialize};

use crate::model::{LabeledSolution, Question};

use super::EvalError;

/// Separator inserted after every step in a training input.
pub const STEP_TAG: char = 'ş';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub question_id: String,
    /// Problem and tagged steps, escaped as one line.
    pub input: String,
    /// One character per step: '+' for a valid step, '-' from the error on.
    pub target: String,
}

/// Escapes backslash (first), the step tag, and newlines.
pub fn escape_step_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            STEP_TAG => {
                out.push('\\');
                out.push(STEP_TAG);
            }
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Inverts [`escape_step_text`]. Rejects dangling or unknown escapes.
pub fn unescape_step_text(text: &str) -> Result<String, EvalError> {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some(STEP_TAG) => out.push(STEP_TAG),
            Some('n') => out.push('\n'),
            Some(other) => {
                return Err(EvalError::MalformedRecord(format!(
                    "unknown escape '\\{other}'"
                )))
            }
            None => {
                return Err(EvalError::MalformedRecord(
                    "dangling escape at end of input".into(),
                ))
            }
        }
    }
    Ok(out)
}

/// Tags that delimit steps, i.e. step-tag characters outside any escape.
pub fn count_unescaped_tags(input: &str) -> usize {
    let mut count = 0;
    let mut escaped = false;
    for c in input.chars() {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == STEP_TAG {
            count += 1;
        }
    }
    count
}

/// Builds the training record for one labeled solution.
pub fn export_training_record(problem: &str, labeled: &LabeledSolution) -> TrainingRecord {
    let mut input = escape_step_text(problem);
    input.push('\n');
    for step in &labeled.solution.steps {
        input.push_str(&escape_step_text(&step.text));
        input.push(STEP_TAG);
    }
    let target: String = labeled
        .labels
        .iter()
        .map(|&valid| if valid { '+' } else { '-' })
        .collect();
    TrainingRecord {
        question_id: labeled.solution.question_id.clone(),
        input,
        target,
    }
}

/// Exports every labeled solution, joining problems by question id.
pub fn export_training_data(
    labeled: &[LabeledSolution],
    questions: &[Question],
) -> Result<Vec<TrainingRecord>, EvalError> {
    labeled
        .iter()
        .map(|l| {
            let question = questions
                .iter()
                .find(|q| q.id == l.solution.question_id)
                .ok_or_else(|| EvalError::UnknownQuestion(l.solution.question_id.clone()))?;
            Ok(export_training_record(&question.statement, l))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRecord {
    pub problem: String,
    pub steps: Vec<String>,
    pub labels: Vec<bool>,
}

/// Inverts [`export_training_record`] exactly: recovers the problem, the
/// step texts, and the labels, or explains why the record is malformed.
pub fn parse_training_record(record: &TrainingRecord) -> Result<ParsedRecord, EvalError> {
    // Split the input at unescaped tags.
    let mut segments: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut escaped = false;
    for c in record.input.chars() {
        if escaped {
            current.push(c);
            escaped = false;
        } else if c == '\\' {
            current.push(c);
            escaped = true;
        } else if c == STEP_TAG {
            segments.push(std::mem::take(&mut current));
        } else {
            current.push(c);
        }
    }
    if escaped {
        return Err(EvalError::MalformedRecord(
            "dangling escape at end of input".into(),
        ));
    }
    if !current.is_empty() {
        return Err(EvalError::MalformedRecord(
            "input does not end at a step tag".into(),
        ));
    }
    if segments.is_empty() {
        return Err(EvalError::MalformedRecord("no step tags in input".into()));
    }

    // The first segment is "esc(problem)\nesc(step_1)"; escaped newlines are
    // the two characters '\' 'n', so the first raw newline is the boundary.
    let head = &segments[0];
    let split = head.find('\n').ok_or_else(|| {
        EvalError::MalformedRecord("missing problem/step boundary newline".into())
    })?;
    let problem = unescape_step_text(&head[..split])?;
    let mut steps = vec![unescape_step_text(&head[split + 1..])?];
    for segment in &segments[1..] {
        steps.push(unescape_step_text(segment)?);
    }

    let labels: Vec<bool> = record
        .target
        .chars()
        .map(|c| match c {
            '+' => Ok(true),
            '-' => Ok(false),
            other => Err(EvalError::MalformedRecord(format!(
                "target character '{other}' is not '+' or '-'"
            ))),
        })
        .collect::<Result<_, _>>()?;
    if labels.len() != steps.len() {
        return Err(EvalError::MalformedRecord(format!(
            "{} labels for {} steps",
            labels.len(),
            steps.len()
        )));
    }

    Ok(ParsedRecord {
        problem,
        steps,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnnotationMethod, SampledSolution, Step, TokenRecord};
    use crate::rng::SimRng;

    fn labeled(problem_steps: &[&str], labels: &[bool]) -> LabeledSolution {
        let solution = SampledSolution {
            question_id: "q".into(),
            generator_tag: "t".into(),
            final_answer: Some("1".into()),
            is_correct: Some(labels.iter().all(|&l| l)),
            sequence_uncertainty: None,
            steps: problem_steps
                .iter()
                .enumerate()
                .map(|(i, text)| Step {
                    index: i + 1,
                    text: text.to_string(),
                    tokens: vec![TokenRecord::new("w", -1.0).unwrap()],
                })
                .collect(),
        };
        if labels.iter().all(|&l| l) {
            LabeledSolution::all_true(solution).unwrap()
        } else {
            let error = labels.iter().position(|&l| !l).unwrap() + 1;
            LabeledSolution::split_at_error(solution, error, AnnotationMethod::Uncertainty).unwrap()
        }
    }

    #[test]
    fn export_produces_aligned_tags_and_targets() {
        let record = export_training_record(
            "What is 2 + 2?",
            &labeled(&["First double.", "Then conclude."], &[true, false]),
        );
        assert_eq!(record.target, "+-");
        assert_eq!(count_unescaped_tags(&record.input), 2);
        assert_eq!(
            record.input,
            format!("What is 2 + 2?\nFirst double.{STEP_TAG}Then conclude.{STEP_TAG}")
        );
    }

    #[test]
    fn round_trip_recovers_texts_with_tag_characters() {
        let steps = ["contains ş here", "back\\slash", "multi\nline"];
        let record = export_training_record("problem ş with\ntag", &labeled(&steps, &[true, true, false]));
        // Escaped input stays on one line.
        assert!(!record.input[..record.input.len()].contains("\nline"));
        let parsed = parse_training_record(&record).unwrap();
        assert_eq!(parsed.problem, "problem ş with\ntag");
        assert_eq!(parsed.steps, steps);
        assert_eq!(parsed.labels, vec![true, true, false]);
    }

    #[test]
    fn thousand_random_solutions_round_trip_exactly() {
        let mut rng = SimRng::new(0xE0F);
        let alphabet: Vec<char> = "abc ş\\\n+-ş0".chars().collect();
        for _ in 0..1000 {
            let num_steps = 1 + rng.gen_range(6) as usize;
            let steps: Vec<String> = (0..num_steps)
                .map(|_| {
                    let len = 1 + rng.gen_range(12) as usize;
                    (0..len)
                        .map(|_| alphabet[rng.gen_range(alphabet.len() as u64) as usize])
                        .collect()
                })
                .collect();
            let step_refs: Vec<&str> = steps.iter().map(String::as_str).collect();
            // Monotone labels: a prefix of trues, then falses.
            let split = rng.gen_range(num_steps as u64 + 1) as usize;
            let labels: Vec<bool> = (0..num_steps).map(|i| i < split).collect();
            let problem: String = (0..1 + rng.gen_range(20) as usize)
                .map(|_| alphabet[rng.gen_range(alphabet.len() as u64) as usize])
                .collect();

            let record = export_training_record(&problem, &labeled(&step_refs, &labels));
            assert_eq!(count_unescaped_tags(&record.input), num_steps);
            assert_eq!(record.target.chars().count(), num_steps);
            let parsed = parse_training_record(&record).unwrap();
            assert_eq!(parsed.problem, problem);
            assert_eq!(parsed.steps, steps);
            assert_eq!(parsed.labels, labels);
        }
    }

    #[test]
    fn export_joins_questions_by_id() {
        let questions = vec![Question::new("q", "the problem", "1").unwrap()];
        let records =
            export_training_data(&[labeled(&["only step"], &[true])], &questions).unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].input.starts_with("the problem\n"));

        let missing = export_training_data(
            &[labeled(&["only step"], &[true])],
            &[Question::new("other", "x", "1").unwrap()],
        );
        assert!(matches!(missing, Err(EvalError::UnknownQuestion(id)) if id == "q"));
    }

    #[test]
    fn malformed_records_are_rejected_with_reasons() {
        let good = export_training_record("p", &labeled(&["s"], &[true]));

        let mut trailing = good.clone();
        trailing.input.push('x');
        assert!(parse_training_record(&trailing).is_err());

        let mut no_tags = good.clone();
        no_tags.input = "p\ns".into();
        assert!(parse_training_record(&no_tags).is_err());

        let mut bad_target = good.clone();
        bad_target.target = "?".into();
        assert!(parse_training_record(&bad_target).is_err());

        let mut short_target = good.clone();
        short_target.target = "".into();
        assert!(parse_training_record(&short_target).is_err());

        let mut no_boundary = good.clone();
        no_boundary.input = format!("ps{STEP_TAG}");
        assert!(parse_training_record(&no_boundary).is_err());

        assert!(unescape_step_text("bad \\q escape").is_err());
        assert!(unescape_step_text("dangling\\").is_err());
    }
}
