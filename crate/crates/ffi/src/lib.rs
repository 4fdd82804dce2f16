//! C ABI over the core library.
//!
//! - **Opaque handles**: C sees pointers, never struct layouts.
//! - **Error codes**: every fallible call returns [`UnprmStatus`]; results
//!   come back through out-parameters.
//! - **Explicit memory management**: strings returned through out-parameters
//!   are freed with `unprm_string_free`, vote sets with `unprm_vote_set_free`.
//! - **Thread-local errors**: `unprm_last_error()` describes the most recent
//!   failure on the calling thread.
//!
//! ```c
//! #include "unprm.h"
//!
//! UnprmVoteSet *set = unprm_vote_set_new();
//! unprm_vote_set_add(set, "\\boxed{42}", 0.91);
//! unprm_vote_set_add(set, "42", 0.85);
//! unprm_vote_set_add(set, "41", 0.99);
//! char *answer = NULL;
//! if (unprm_vote_set_hmr(set, &answer) == UNPRM_STATUS_OK) {
//!     printf("%s\n", answer); /* 42 */
//!     unprm_string_free(answer);
//! }
//! unprm_vote_set_free(set);
//! ```

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::fmt::Display;
use std::ptr;

use libc::c_char;

use unprm::aggregate::{group_pairs, pairs_hmr, pairs_wrf, top_group};
use unprm::model::{answers_match, normalize_answer};
use unprm::uncertainty::{perplexity, sequence_entropy, softmax_probs};

/// Result code for every fallible call. `UNPRM_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnprmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A numeric argument was out of range or not finite.
    InvalidArgument = 3,
    /// The input held no usable elements.
    Empty = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: impl Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

fn fail(status: UnprmStatus, message: impl Display) -> UnprmStatus {
    set_last_error(message);
    status
}

/// Message for the most recent failure on the calling thread. The pointer
/// stays valid until the next failing call on the same thread; never free it.
#[no_mangle]
pub extern "C" fn unprm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static string; never free it.
#[no_mangle]
pub extern "C" fn unprm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned through an out-parameter of this library.
///
/// # Safety
/// `s` must be null or a pointer previously returned by this library and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn unprm_string_free(s: *mut c_char) {
    if s.is_null() {
        return;
    }
    drop(CString::from_raw(s));
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, UnprmStatus> {
    if ptr.is_null() {
        return Err(fail(
            UnprmStatus::NullArgument,
            format!("{name} must not be null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| {
        fail(
            UnprmStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8: {e}"),
        )
    })
}

fn string_out(value: String, out: *mut *mut c_char) -> UnprmStatus {
    match CString::new(value.replace('\0', " ")) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            UnprmStatus::Ok
        }
        Err(e) => fail(UnprmStatus::InvalidArgument, e),
    }
}

/// Canonicalizes a final answer (strips wrappers and formatting, reduces
/// fractions) and writes a newly allocated string to `out`.
///
/// # Safety
/// `raw` must be a valid NUL-terminated string and `out` a valid pointer.
/// The caller frees `*out` with `unprm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unprm_normalize_answer(
    raw: *const c_char,
    out: *mut *mut c_char,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let raw = match str_arg(raw, "raw") {
        Ok(s) => s,
        Err(status) => return status,
    };
    string_out(normalize_answer(raw), out)
}

/// Writes whether two final answers are equivalent after canonicalization.
///
/// # Safety
/// `a` and `b` must be valid NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn unprm_answers_match(
    a: *const c_char,
    b: *const c_char,
    out: *mut bool,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let a = match str_arg(a, "a") {
        Ok(s) => s,
        Err(status) => return status,
    };
    let b = match str_arg(b, "b") {
        Ok(s) => s,
        Err(status) => return status,
    };
    *out = answers_match(a, b);
    UnprmStatus::Ok
}

unsafe fn slice_args<'a>(
    values: *const f64,
    len: usize,
    name: &str,
) -> Result<&'a [f64], UnprmStatus> {
    if values.is_null() {
        return Err(fail(
            UnprmStatus::NullArgument,
            format!("{name} must not be null"),
        ));
    }
    if len == 0 {
        return Err(fail(UnprmStatus::Empty, format!("{name} must not be empty")));
    }
    Ok(std::slice::from_raw_parts(values, len))
}

/// Converts token log-probabilities to a probability distribution via
/// softmax, writing `len` values to `out`.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles and `out` to `len`
/// writable doubles; the ranges must not alias.
#[no_mangle]
pub unsafe extern "C" fn unprm_softmax_probs(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let logprobs = match slice_args(logprobs, len, "logprobs") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match softmax_probs(logprobs) {
        Ok(probs) => {
            ptr::copy_nonoverlapping(probs.as_ptr(), out, len);
            UnprmStatus::Ok
        }
        Err(e) => fail(UnprmStatus::InvalidArgument, e),
    }
}

/// Writes the entropy of the softmax distribution over `logprobs` to `out`.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn unprm_sequence_entropy(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let logprobs = match slice_args(logprobs, len, "logprobs") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match sequence_entropy(logprobs) {
        Ok(value) => {
            *out = value;
            UnprmStatus::Ok
        }
        Err(e) => fail(UnprmStatus::InvalidArgument, e),
    }
}

/// Writes `exp(-mean(logprobs))`, the sequence perplexity, to `out`.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles and `out` to one writable
/// double.
#[no_mangle]
pub unsafe extern "C" fn unprm_perplexity(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let logprobs = match slice_args(logprobs, len, "logprobs") {
        Ok(s) => s,
        Err(status) => return status,
    };
    match perplexity(logprobs) {
        Ok(value) => {
            *out = value;
            UnprmStatus::Ok
        }
        Err(e) => fail(UnprmStatus::InvalidArgument, e),
    }
}

/// Candidate answers paired with solution-level rewards, aggregated by the
/// `unprm_vote_set_*` functions. Opaque; create with `unprm_vote_set_new`,
/// free with `unprm_vote_set_free`.
pub struct UnprmVoteSet {
    pairs: Vec<(String, f64)>,
}

/// Allocates an empty vote set; free it with `unprm_vote_set_free`.
#[no_mangle]
pub extern "C" fn unprm_vote_set_new() -> *mut UnprmVoteSet {
    Box::into_raw(Box::new(UnprmVoteSet { pairs: Vec::new() }))
}

/// Frees a vote set.
///
/// # Safety
/// `set` must be null or a pointer from `unprm_vote_set_new`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_free(set: *mut UnprmVoteSet) {
    if set.is_null() {
        return;
    }
    drop(Box::from_raw(set));
}

/// Number of candidates added so far; zero when `set` is null.
///
/// # Safety
/// `set` must be null or a live vote-set pointer.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_len(set: *const UnprmVoteSet) -> usize {
    set.as_ref().map_or(0, |s| s.pairs.len())
}

/// Adds one candidate: a final answer and that solution's reward (its
/// minimum step score). The answer is canonicalized on entry so textual
/// variants of the same value land in one group; aggregation results
/// return the canonical form.
///
/// # Safety
/// `set` must be a live vote-set pointer and `answer` a valid NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_add(
    set: *mut UnprmVoteSet,
    answer: *const c_char,
    reward: f64,
) -> UnprmStatus {
    let Some(set) = set.as_mut() else {
        return fail(UnprmStatus::NullArgument, "set must not be null");
    };
    let answer = match str_arg(answer, "answer") {
        Ok(s) => s,
        Err(status) => return status,
    };
    if !reward.is_finite() {
        return fail(
            UnprmStatus::InvalidArgument,
            format!("reward must be finite, got {reward}"),
        );
    }
    set.pairs.push((normalize_answer(answer), reward));
    UnprmStatus::Ok
}

unsafe fn answer_out(
    choice: Option<String>,
    out: *mut *mut c_char,
) -> UnprmStatus {
    match choice {
        Some(answer) => string_out(answer, out),
        None => fail(UnprmStatus::Empty, "no candidate had a usable answer"),
    }
}

/// Writes the most frequent canonical answer to `out` (ties keep the
/// earliest-added answer).
///
/// # Safety
/// `set` must be a live vote-set pointer and `out` a valid pointer. The
/// caller frees `*out` with `unprm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_majority(
    set: *const UnprmVoteSet,
    out: *mut *mut c_char,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let Some(set) = set.as_ref() else {
        return fail(UnprmStatus::NullArgument, "set must not be null");
    };
    let groups = group_pairs(&set.pairs);
    answer_out(top_group(&groups).map(|g| g.answer.clone()), out)
}

/// Hybrid aggregation: the majority answer when it reaches half the set,
/// otherwise the answer of the highest-reward candidate. Writes the choice
/// to `out`.
///
/// # Safety
/// `set` must be a live vote-set pointer and `out` a valid pointer. The
/// caller frees `*out` with `unprm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_hmr(
    set: *const UnprmVoteSet,
    out: *mut *mut c_char,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let Some(set) = set.as_ref() else {
        return fail(UnprmStatus::NullArgument, "set must not be null");
    };
    answer_out(pairs_hmr(&set.pairs), out)
}

/// Weighted-fusion aggregation: per answer group, `alpha` weights the
/// normalized mean reward against normalized frequency. Writes the best
/// group's answer to `out`.
///
/// # Safety
/// `set` must be a live vote-set pointer and `out` a valid pointer. The
/// caller frees `*out` with `unprm_string_free`.
#[no_mangle]
pub unsafe extern "C" fn unprm_vote_set_wrf(
    set: *const UnprmVoteSet,
    alpha: f64,
    out: *mut *mut c_char,
) -> UnprmStatus {
    if out.is_null() {
        return fail(UnprmStatus::NullArgument, "out must not be null");
    }
    let Some(set) = set.as_ref() else {
        return fail(UnprmStatus::NullArgument, "set must not be null");
    };
    match pairs_wrf(&set.pairs, alpha) {
        Ok(choice) => answer_out(choice, out),
        Err(e) => fail(UnprmStatus::InvalidArgument, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take_string(ptr: *mut c_char) -> String {
        let value = CStr::from_ptr(ptr).to_str().unwrap().to_owned();
        unprm_string_free(ptr);
        value
    }

    #[test]
    fn version_is_a_static_utf8_string() {
        let ptr = unprm_version();
        let text = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap();
        assert_eq!(text, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn normalize_answer_round_trips_through_c_strings() {
        let raw = c("\\boxed{\\frac{2}{4}}");
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { unprm_normalize_answer(raw.as_ptr(), &mut out) };
        assert_eq!(status, UnprmStatus::Ok);
        assert_eq!(unsafe { take_string(out) }, "0.5");
    }

    #[test]
    fn null_and_invalid_arguments_set_the_thread_error() {
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { unprm_normalize_answer(ptr::null(), &mut out) };
        assert_eq!(status, UnprmStatus::NullArgument);
        let message = unsafe { CStr::from_ptr(unprm_last_error()) }
            .to_str()
            .unwrap();
        assert!(message.contains("raw"));

        let bad = [0x66u8, 0xFF, 0x00]; // invalid UTF-8, NUL-terminated
        let status = unsafe {
            unprm_normalize_answer(bad.as_ptr() as *const c_char, &mut out)
        };
        assert_eq!(status, UnprmStatus::InvalidUtf8);
    }

    #[test]
    fn answers_match_compares_canonical_forms() {
        let a = c("0.5");
        let b = c("\\frac{1}{2}");
        let mut equal = false;
        let status = unsafe { unprm_answers_match(a.as_ptr(), b.as_ptr(), &mut equal) };
        assert_eq!(status, UnprmStatus::Ok);
        assert!(equal);
    }

    #[test]
    fn softmax_entropy_and_perplexity_agree_with_the_core() {
        let logprobs = [-0.5, -1.0, -2.0];
        let mut probs = [0.0f64; 3];
        let status =
            unsafe { unprm_softmax_probs(logprobs.as_ptr(), logprobs.len(), probs.as_mut_ptr()) };
        assert_eq!(status, UnprmStatus::Ok);
        let expected = softmax_probs(&logprobs).unwrap();
        assert_eq!(probs.to_vec(), expected);

        let mut entropy = 0.0f64;
        let status =
            unsafe { unprm_sequence_entropy(logprobs.as_ptr(), logprobs.len(), &mut entropy) };
        assert_eq!(status, UnprmStatus::Ok);
        assert_eq!(entropy, sequence_entropy(&logprobs).unwrap());

        let mut ppl = 0.0f64;
        let status = unsafe { unprm_perplexity(logprobs.as_ptr(), logprobs.len(), &mut ppl) };
        assert_eq!(status, UnprmStatus::Ok);
        assert_eq!(ppl, perplexity(&logprobs).unwrap());
    }

    #[test]
    fn empty_slices_are_rejected() {
        let mut out = 0.0f64;
        let values = [0.0f64];
        let status = unsafe { unprm_sequence_entropy(values.as_ptr(), 0, &mut out) };
        assert_eq!(status, UnprmStatus::Empty);
    }

    #[test]
    fn vote_set_majority_merges_canonical_duplicates() {
        unsafe {
            let set = unprm_vote_set_new();
            for (answer, reward) in [("0.5", 0.2), ("\\frac{1}{2}", 0.3), ("3", 0.9)] {
                let answer = c(answer);
                assert_eq!(
                    unprm_vote_set_add(set, answer.as_ptr(), reward),
                    UnprmStatus::Ok
                );
            }
            assert_eq!(unprm_vote_set_len(set), 3);

            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(unprm_vote_set_majority(set, &mut out), UnprmStatus::Ok);
            assert_eq!(take_string(out), "0.5");
            unprm_vote_set_free(set);
        }
    }

    #[test]
    fn vote_set_hmr_falls_back_to_the_reward_argmax() {
        unsafe {
            let set = unprm_vote_set_new();
            // Four distinct answers: no majority, highest reward wins.
            for (answer, reward) in [("1", 0.2), ("2", 0.9), ("3", 0.4), ("4", 0.5)] {
                let answer = c(answer);
                unprm_vote_set_add(set, answer.as_ptr(), reward);
            }
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(unprm_vote_set_hmr(set, &mut out), UnprmStatus::Ok);
            assert_eq!(take_string(out), "2");
            unprm_vote_set_free(set);
        }
    }

    #[test]
    fn vote_set_wrf_validates_alpha_and_fuses_scores() {
        unsafe {
            let set = unprm_vote_set_new();
            for (answer, reward) in [("7", 0.9), ("7", 0.7), ("8", 0.8)] {
                let answer = c(answer);
                unprm_vote_set_add(set, answer.as_ptr(), reward);
            }
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(unprm_vote_set_wrf(set, 0.5, &mut out), UnprmStatus::Ok);
            assert_eq!(take_string(out), "7");

            assert_eq!(
                unprm_vote_set_wrf(set, 1.5, &mut out),
                UnprmStatus::InvalidArgument
            );
            unprm_vote_set_free(set);
        }
    }

    #[test]
    fn empty_vote_set_reports_empty() {
        unsafe {
            let set = unprm_vote_set_new();
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(unprm_vote_set_majority(set, &mut out), UnprmStatus::Empty);
            assert_eq!(unprm_vote_set_hmr(set, &mut out), UnprmStatus::Empty);
            unprm_vote_set_free(set);
        }
    }

    #[test]
    fn null_handles_are_rejected_not_dereferenced() {
        unsafe {
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(
                unprm_vote_set_majority(ptr::null(), &mut out),
                UnprmStatus::NullArgument
            );
            let answer = c("1");
            assert_eq!(
                unprm_vote_set_add(ptr::null_mut(), answer.as_ptr(), 0.5),
                UnprmStatus::NullArgument
            );
            unprm_vote_set_free(ptr::null_mut());
            unprm_string_free(ptr::null_mut());
            assert_eq!(unprm_vote_set_len(ptr::null()), 0);
        }
    }
}
