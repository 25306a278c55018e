//! Timed scenario scripts: `<time_ms> <command...>` per line, `#` comments.

use std::io::{BufRead, Write};

use thiserror::Error;

use crate::cli::session::{parse_command, Command, Session, USAGE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    /// 1-based source line.
    pub line: usize,
    pub at_ms: u64,
    pub command: Command,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    let mut steps = Vec::new();
    let mut last = 0u64;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |message: String| ScriptError { line, message };
        let (time, rest) = body
            .split_once(char::is_whitespace)
            .ok_or_else(|| err("expected <time_ms> <command>".into()))?;
        let at_ms: u64 = time
            .parse()
            .map_err(|_| err(format!("bad time {time:?}")))?;
        if at_ms < last {
            return Err(err(format!("time {at_ms} ms goes back before {last} ms")));
        }
        last = at_ms;
        let command = parse_command(rest).map_err(err)?;
        steps.push(ScriptStep {
            line,
            at_ms,
            command,
            text: rest.trim().to_string(),
        });
    }
    Ok(Script { steps })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioOutcome {
    pub transcript: Vec<String>,
    /// One entry per failed expectation, naming the step.
    pub failures: Vec<String>,
}

impl ScenarioOutcome {
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.failures.is_empty())
    }
}

/// Runs each step once the executive clock reaches its time (relative to the start).
pub fn run_script(script: &Script, session: &mut Session) -> ScenarioOutcome {
    let mut out = ScenarioOutcome::default();
    let base = session.now_ns();
    for step in &script.steps {
        session.advance_to(base + step.at_ms * 1_000_000);
        out.transcript.push(format!("[{} ms] {}", step.at_ms, step.text));
        let outcome = session.execute(&step.command);
        out.transcript.extend(outcome.lines.iter().cloned());
        if outcome.expectation_failed {
            out.failures.push(format!(
                "line {}: {} ({})",
                step.line,
                step.text,
                outcome.lines.join("; ")
            ));
        }
        if outcome.quit {
            break;
        }
    }
    out
}

/// Reads commands until EOF or `quit`. Returns the status of the last command (0 ok, 1 failed).
pub fn run_shell(input: impl BufRead, mut output: impl Write, session: &mut Session, prompt: bool) -> i32 {
    let mut status = 0;
    if prompt {
        let _ = writeln!(output, "{USAGE}");
        let _ = write!(output, "> ");
        let _ = output.flush();
    }
    for line in input.lines() {
        let Ok(line) = line else { break };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            if prompt {
                let _ = write!(output, "> ");
                let _ = output.flush();
            }
            continue;
        }
        let outcome = session.execute_line(trimmed);
        for l in &outcome.lines {
            let _ = writeln!(output, "{l}");
        }
        status = i32::from(!outcome.ok);
        if outcome.quit {
            break;
        }
        if prompt {
            let _ = write!(output, "> ");
            let _ = output.flush();
        }
    }
    status
}
