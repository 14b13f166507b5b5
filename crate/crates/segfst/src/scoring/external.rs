//! Scorer backed by an external process speaking newline-delimited
//! JSON on stdin/stdout.
//!
//! One request per line: `{"id": .., "window": [..], "prefix": [..],
//! "candidates": [..]}`, answered by `{"id": .., "logprobs": [..]}`
//! with one finite number per candidate, in order. The delimiter is
//! sent as its surface form and the end-of-output candidate as
//! `"</s>"`. Anything else, or silence past the timeout, turns into a
//! scoring error rather than a hang.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::fst::Candidate;
use crate::scoring::{Scorer, ScorerContext, ScoringError};

#[derive(Serialize)]
struct WireRequest<'a> {
    id: u64,
    window: Vec<&'a str>,
    prefix: Vec<&'a str>,
    candidates: Vec<&'a str>,
}

#[derive(Deserialize)]
struct WireResponse {
    id: u64,
    logprobs: Vec<f64>,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// Child-process scorer. The child is spawned once and reused across
/// calls; it is killed on drop.
pub struct ExternalScorer {
    io: Mutex<Io>,
    timeout: Duration,
}

struct Io {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Drop for Io {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl ExternalScorer {
    /// Spawns `command[0]` with the remaining elements as arguments.
    pub fn spawn(command: &[String], timeout: Duration) -> Result<Self, ScoringError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ScoringError::Unavailable("empty scorer command".to_owned()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| ScoringError::Unavailable(format!("could not spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("stdin was piped");
        let stdout = child.stdout.take().expect("stdout was piped");

        // Reads happen on their own thread so a stalled child costs us
        // a timeout, not a deadlock.
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });

        Ok(ExternalScorer {
            io: Mutex::new(Io { child, stdin, lines, next_id: 0 }),
            timeout,
        })
    }
}

impl Scorer for ExternalScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        let mut io = self.io.lock().expect("scorer lock");
        io.next_id += 1;
        let request = WireRequest {
            id: io.next_id,
            window: ctx.window.tokens().iter().map(String::as_str).collect(),
            prefix: ctx.prefix_text(),
            candidates: candidates.iter().map(|&c| ctx.candidate_text(c)).collect(),
        };
        let mut line = serde_json::to_string(&request).expect("request serializes");
        line.push('\n');
        io.stdin
            .write_all(line.as_bytes())
            .and_then(|()| io.stdin.flush())
            .map_err(|e| ScoringError::Unavailable(format!("write to scorer failed: {e}")))?;

        let line = match io.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => {
                return Err(ScoringError::Unavailable(format!("read from scorer failed: {e}")))
            }
            Err(RecvTimeoutError::Timeout) => {
                return Err(ScoringError::Unavailable(format!(
                    "scorer did not answer within {:?}",
                    self.timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(ScoringError::Unavailable("scorer closed its output".to_owned()))
            }
        };
        let response: WireResponse = serde_json::from_str(&line)
            .map_err(|e| ScoringError::Unavailable(format!("malformed scorer response: {e}")))?;
        if response.id != request.id {
            return Err(ScoringError::Unavailable(format!(
                "scorer answered request {} while {} was pending",
                response.id, request.id
            )));
        }
        if response.logprobs.len() != candidates.len() {
            return Err(ScoringError::Unavailable(format!(
                "scorer returned {} scores for {} candidates",
                response.logprobs.len(),
                candidates.len()
            )));
        }
        if let Some(bad) = response.logprobs.iter().find(|v| !v.is_finite()) {
            return Err(ScoringError::Unavailable(format!(
                "scorer returned a non-finite log-probability: {bad}"
            )));
        }
        Ok(response.logprobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::{Label, SymbolTable};
    use crate::text::TokenSeq;

    fn ctx_fixture() -> (TokenSeq, SymbolTable) {
        let window = TokenSeq::from_line("t", "a b");
        let mut table = SymbolTable::new();
        for tok in window.tokens() {
            table.intern(tok).unwrap();
        }
        (window, table)
    }

    fn ask(scorer: &ExternalScorer) -> Result<Vec<f64>, ScoringError> {
        let (window, table) = ctx_fixture();
        let prefix = [table.label("a").unwrap()];
        let ctx = ScorerContext { window: &window, prefix: &prefix, table: &table };
        let candidates =
            [Candidate::Emit(table.label("b").unwrap()), Candidate::Emit(Label::Delimiter), Candidate::End];
        scorer.score_next(&ctx, &candidates)
    }

    fn cmd(parts: &[&str]) -> Vec<String> {
        parts.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn spawn_failure_is_reported() {
        let err = ExternalScorer::spawn(&cmd(&["/nonexistent/scorer"]), DEFAULT_TIMEOUT)
            .err()
            .expect("spawn must fail");
        assert!(matches!(err, ScoringError::Unavailable(_)));
    }

    #[test]
    fn empty_command_is_rejected() {
        assert!(ExternalScorer::spawn(&[], DEFAULT_TIMEOUT).is_err());
    }

    #[test]
    fn well_behaved_child_round_trips() {
        // Answers every request with fixed scores for three candidates,
        // echoing the id back via sed.
        let script = r#"while IFS= read -r line; do
            id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
            printf '{"id": %s, "logprobs": [-1.0, -2.5, -3.0]}\n' "$id"
        done"#;
        let scorer = ExternalScorer::spawn(&cmd(&["sh", "-c", script]), DEFAULT_TIMEOUT).unwrap();
        assert_eq!(ask(&scorer).unwrap(), vec![-1.0, -2.5, -3.0]);
        assert_eq!(ask(&scorer).unwrap(), vec![-1.0, -2.5, -3.0]);
    }

    #[test]
    fn requests_carry_window_prefix_and_candidates() {
        // The child checks the first request's fields before answering.
        let script = r#"IFS= read -r line
        case "$line" in
            *'"window":["a","b"]'*'"prefix":["a"]'*'"candidates":["b","<SENT>","</s>"]'*)
                printf '{"id": 1, "logprobs": [-1.0, -2.0, -3.0]}\n' ;;
            *)  printf 'unexpected request\n' ;;
        esac"#;
        let scorer = ExternalScorer::spawn(&cmd(&["sh", "-c", script]), DEFAULT_TIMEOUT).unwrap();
        assert_eq!(ask(&scorer).unwrap(), vec![-1.0, -2.0, -3.0]);
    }

    #[test]
    fn malformed_response_is_an_error() {
        let scorer = ExternalScorer::spawn(&cmd(&["cat"]), DEFAULT_TIMEOUT).unwrap();
        let err = ask(&scorer).err().expect("echoed request is not a response");
        assert!(matches!(err, ScoringError::Unavailable(_)), "{err}");
    }

    #[test]
    fn wrong_candidate_count_is_an_error() {
        let script = r#"while IFS= read -r line; do
            printf '{"id": 1, "logprobs": [-1.0]}\n'
        done"#;
        let scorer = ExternalScorer::spawn(&cmd(&["sh", "-c", script]), DEFAULT_TIMEOUT).unwrap();
        let err = ask(&scorer).err().expect("one score for three candidates");
        assert!(err.to_string().contains("3 candidates"), "{err}");
    }

    #[test]
    fn mismatched_id_is_an_error() {
        let script = r#"while IFS= read -r line; do
            printf '{"id": 999, "logprobs": [-1.0, -2.0, -3.0]}\n'
        done"#;
        let scorer = ExternalScorer::spawn(&cmd(&["sh", "-c", script]), DEFAULT_TIMEOUT).unwrap();
        assert!(ask(&scorer).is_err());
    }

    #[test]
    fn silent_child_times_out() {
        let scorer =
            ExternalScorer::spawn(&cmd(&["sleep", "60"]), Duration::from_millis(100)).unwrap();
        let err = ask(&scorer).err().expect("sleep never answers");
        assert!(err.to_string().contains("did not answer"), "{err}");
    }

    #[test]
    fn exiting_child_is_reported_not_hung() {
        let scorer = ExternalScorer::spawn(&cmd(&["true"]), DEFAULT_TIMEOUT).unwrap();
        let err = ask(&scorer).err().expect("child exited immediately");
        assert!(matches!(err, ScoringError::Unavailable(_)), "{err}");
    }
}
