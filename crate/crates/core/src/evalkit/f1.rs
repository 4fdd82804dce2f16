//! Error-location F1: harmonic mean of accuracy on erroneous solutions
//! (exact first-error step match) and accuracy on correct solutions
//! (predicting no error).

use serde::Serialize;

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct F1Report {
    /// Fraction of erroneous references whose predicted step matches.
    pub error_accuracy: f64,
    /// Fraction of correct references predicted as error-free.
    pub correct_accuracy: f64,
    /// Harmonic mean of the two accuracies; 0 when both are 0.
    pub f1: f64,
    pub error_cases: usize,
    pub correct_cases: usize,
}

/// Compares predicted first-error steps against references. `None` means
/// "the solution is correct". An empty class contributes accuracy 0 with a
/// warning rather than an error, so degenerate benchmarks still report.
pub fn processbench_f1(
    predictions: &[Option<usize>],
    references: &[Option<usize>],
) -> Result<F1Report, EvalError> {
    if predictions.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            references: references.len(),
        });
    }

    let mut error_cases = 0usize;
    let mut error_hits = 0usize;
    let mut correct_cases = 0usize;
    let mut correct_hits = 0usize;
    for (pred, reference) in predictions.iter().zip(references) {
        match reference {
            Some(step) => {
                error_cases += 1;
                if *pred == Some(*step) {
                    error_hits += 1;
                }
            }
            None => {
                correct_cases += 1;
                if pred.is_none() {
                    correct_hits += 1;
                }
            }
        }
    }

    if error_cases == 0 {
        log::warn!("no erroneous references; error accuracy defaults to 0");
    }
    if correct_cases == 0 {
        log::warn!("no correct references; correct accuracy defaults to 0");
    }
    let error_accuracy = if error_cases > 0 {
        error_hits as f64 / error_cases as f64
    } else {
        0.0
    };
    let correct_accuracy = if correct_cases > 0 {
        correct_hits as f64 / correct_cases as f64
    } else {
        0.0
    };
    let f1 = if error_accuracy + correct_accuracy == 0.0 {
        0.0
    } else {
        2.0 * error_accuracy * correct_accuracy / (error_accuracy + correct_accuracy)
    };

    Ok(F1Report {
        error_accuracy,
        correct_accuracy,
        f1,
        error_cases,
        correct_cases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_matches_the_hand_computed_example() {
        // Errors: 1 of 2 exact. Correct: 2 of 3 predicted error-free.
        let references = [Some(2), Some(3), None, None, None];
        let predictions = [Some(2), Some(1), None, None, Some(4)];
        let report = processbench_f1(&predictions, &references).unwrap();
        assert!((report.error_accuracy - 0.5).abs() < 1e-12);
        assert!((report.correct_accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((report.f1 - 4.0 / 7.0).abs() < 1e-12);
        assert_eq!(report.error_cases, 2);
        assert_eq!(report.correct_cases, 3);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let references = [Some(1), None, Some(5)];
        let report = processbench_f1(&references, &references).unwrap();
        assert_eq!(report.f1, 1.0);
    }

    #[test]
    fn near_miss_on_step_index_is_a_miss() {
        let report = processbench_f1(&[Some(3)], &[Some(2)]).unwrap();
        assert_eq!(report.error_accuracy, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn empty_classes_default_to_zero_accuracy() {
        // Only correct references: error accuracy 0 drags f1 to 0.
        let report = processbench_f1(&[None, None], &[None, None]).unwrap();
        assert_eq!(report.correct_accuracy, 1.0);
        assert_eq!(report.error_accuracy, 0.0);
        assert_eq!(report.f1, 0.0);

        let report = processbench_f1(&[Some(1)], &[Some(1)]).unwrap();
        assert_eq!(report.error_accuracy, 1.0);
        assert_eq!(report.correct_accuracy, 0.0);
        assert_eq!(report.f1, 0.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            processbench_f1(&[None], &[None, None]),
            Err(EvalError::LengthMismatch {
                predictions: 1,
                references: 2
            })
        ));
    }

    #[test]
    fn empty_inputs_report_zeroes() {
        let report = processbench_f1(&[], &[]).unwrap();
        assert_eq!(report.f1, 0.0);
        assert_eq!(report.error_cases, 0);
        assert_eq!(report.correct_cases, 0);
    }
}
