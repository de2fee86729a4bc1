//! Verification loop: retry a step, feeding each failure back into the next attempt.

use serde::{Deserialize, Serialize};

/// One failed try: what was produced and why it was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub output: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoopOutcome<T> {
    Verified {
        value: T,
        /// Failed attempts before the verified one.
        transcript: Vec<Attempt>,
        calls: u32,
    },
    Exhausted {
        transcript: Vec<Attempt>,
    },
}

impl<T> LoopOutcome<T> {
    pub fn calls(&self) -> u32 {
        match self {
            LoopOutcome::Verified { calls, .. } => *calls,
            LoopOutcome::Exhausted { transcript } => transcript.len() as u32,
        }
    }

    pub fn value(self) -> Option<T> {
        match self {
            LoopOutcome::Verified { value, .. } => Some(value),
            LoopOutcome::Exhausted { .. } => None,
        }
    }
}

/// Runs `step` at most `max_retries` times until `verify` accepts its output.
///
/// `step` sees every earlier failure. A step error counts as a failed attempt with empty output.
pub fn verification_loop<T, S, V>(mut step: S, mut verify: V, max_retries: u32) -> LoopOutcome<T>
where
    S: FnMut(&[Attempt]) -> Result<T, String>,
    V: FnMut(&T) -> Result<(), String>,
    T: std::fmt::Debug,
{
    let mut transcript = Vec::new();
    for call in 1..=max_retries {
        match step(&transcript) {
            Ok(value) => match verify(&value) {
                Ok(()) => {
                    return LoopOutcome::Verified {
                        value,
                        transcript,
                        calls: call,
                    }
                }
                Err(error) => transcript.push(Attempt {
                    output: format!("{value:?}"),
                    error,
                }),
            },
            Err(error) => transcript.push(Attempt {
                output: String::new(),
                error,
            }),
        }
    }
    LoopOutcome::Exhausted { transcript }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_success_takes_one_call() {
        let out = verification_loop(|_| Ok(1), |_| Ok(()), 3);
        assert_eq!(out.calls(), 1);
    }

    #[test]
    fn succeeds_on_third_try_with_feedback() {
        let mut seen = Vec::new();
        let out = verification_loop(
            |t| {
                seen.push(t.len());
                Ok(t.len())
            },
            |v| if *v == 2 { Ok(()) } else { Err(format!("{v} is wrong")) },
            3,
        );
        assert_eq!(seen, [0, 1, 2]);
        match out {
            LoopOutcome::Verified {
                value,
                transcript,
                calls,
            } => {
                assert_eq!((value, calls), (2, 3));
                assert_eq!(transcript[1].error, "1 is wrong");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn always_failing_exhausts_after_max() {
        let mut calls = 0;
        let out: LoopOutcome<()> = verification_loop(
            |_| {
                calls += 1;
                Ok(())
            },
            |_| Err("no".into()),
            3,
        );
        assert_eq!(calls, 3);
        assert!(matches!(out, LoopOutcome::Exhausted { ref transcript } if transcript.len() == 3));
    }
}
