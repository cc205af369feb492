//! Token counting for length budgets and BLEU.
//!
//! Budgets are only as meaningful as the tokenizer behind them: a 512-token
//! budget under [`TokenizerSpec::Whitespace`] is not the same amount of text
//! as 512 subword tokens of a language model. Use
//! [`TokenizerSpec::External`] to count with a model's own tokenizer.
//!
//! Built-in tokenizers:
//!
//! * `whitespace`: split on runs of Unicode whitespace.
//! * `intl`: whitespace split, then every punctuation character becomes its
//!   own token, close to the `13a` convention. ASCII punctuation except `'`
//!   and `-` is split; `.` and `,` stay attached between two digits; `-` is
//!   split only after a digit. Non-ASCII punctuation covers U+00A1, U+00AB,
//!   U+00BB, U+00BF, U+2010-U+2027, U+2030-U+205E and the CJK punctuation
//!   listed below.
//! * `char-cjk`: every CJK character is a token; other text falls back to
//!   whitespace splitting. CJK characters are the unified ideograph blocks
//!   U+3400-U+4DBF, U+4E00-U+9FFF, U+20000-U+2A6DF, U+2A700-U+2EBEF,
//!   U+30000-U+323AF, the compatibility ideographs U+F900-U+FAFF and
//!   U+2F800-U+2FA1F, plus fullwidth punctuation U+3001-U+303F,
//!   U+FF01-U+FF0F, U+FF1A-U+FF20, U+FF3B-U+FF40 and U+FF5B-U+FF65.
//!
//! External tokenizers speak a line protocol over stdin/stdout: each request
//! is the text with line breaks escaped as the two characters `\n`, each reply
//! is one line of space-separated tokens (an empty line means no tokens).

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum TokenizeError {
    #[error("external tokenizer command is empty")]
    EmptyCommand,
    #[error("unknown tokenizer {0:?}, expected whitespace, intl, char-cjk or external:<cmd>")]
    UnknownSpec(String),
    #[error("failed to start external tokenizer: {0}")]
    Spawn(#[source] std::io::Error),
    #[error("external tokenizer exited (exit code {})", .0.map_or("none".to_string(), |c| c.to_string()))]
    Exited(Option<i32>),
    #[error("external tokenizer protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub enum TokenizerSpec {
    #[default]
    Whitespace,
    Intl,
    CharCjk,
    External(String),
}

impl fmt::Display for TokenizerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerSpec::Whitespace => f.write_str("whitespace"),
            TokenizerSpec::Intl => f.write_str("intl"),
            TokenizerSpec::CharCjk => f.write_str("char-cjk"),
            TokenizerSpec::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

impl FromStr for TokenizerSpec {
    type Err = TokenizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" => Ok(TokenizerSpec::Whitespace),
            "intl" => Ok(TokenizerSpec::Intl),
            "char-cjk" | "char_cjk" => Ok(TokenizerSpec::CharCjk),
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(TokenizerSpec::External(cmd.to_string())),
                Some(_) => Err(TokenizeError::EmptyCommand),
                None => Err(TokenizeError::UnknownSpec(s.to_string())),
            },
        }
    }
}

/// Ordered, non-empty tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        TokenSequence(tokens.into_iter().filter(|t| !t.is_empty()).collect())
    }
}

impl AsRef<[String]> for TokenSequence {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

struct ExternalProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl ExternalProcess {
    fn spawn(command: &str) -> Result<Self, TokenizeError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(TokenizeError::Spawn)?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        Ok(Self {
            child,
            stdin,
            stdout,
        })
    }

    fn exit_error(&mut self) -> TokenizeError {
        self.stdin = None;
        TokenizeError::Exited(self.child.wait().ok().and_then(|s| s.code()))
    }

    fn request(&mut self, text: &str) -> Result<Vec<String>, TokenizeError> {
        let line = escape_request(text);
        let stdin = self.stdin.as_mut().ok_or(TokenizeError::Exited(None))?;
        if writeln!(stdin, "{line}").and_then(|_| stdin.flush()).is_err() {
            return Err(self.exit_error());
        }
        let mut reply = String::new();
        match self.stdout.read_line(&mut reply) {
            Ok(0) => Err(self.exit_error()),
            Ok(_) if !reply.ends_with('\n') => Err(TokenizeError::Protocol(
                "reply not terminated by a newline".into(),
            )),
            Ok(_) => Ok(reply.split_whitespace().map(str::to_string).collect()),
            Err(e) => Err(TokenizeError::Protocol(e.to_string())),
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Escapes line breaks so the text fits on one request line.
pub fn escape_request(text: &str) -> String {
    text.replace("\r\n", "\\n").replace(['\n', '\r'], "\\n")
}

/// A tokenizer instance. Built-in kinds are pure; an external tokenizer owns
/// one subprocess and serializes requests to it.
pub struct Tokenizer {
    spec: TokenizerSpec,
    external: Option<Mutex<Option<ExternalProcess>>>,
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tokenizer").field("spec", &self.spec).finish()
    }
}

impl Tokenizer {
    pub fn new(spec: TokenizerSpec) -> Result<Self, TokenizeError> {
        let external = match &spec {
            TokenizerSpec::External(cmd) if cmd.trim().is_empty() => {
                return Err(TokenizeError::EmptyCommand)
            }
            TokenizerSpec::External(_) => Some(Mutex::new(None)),
            _ => None,
        };
        Ok(Self { spec, external })
    }

    pub fn whitespace() -> Self {
        Self::new(TokenizerSpec::Whitespace).expect("built-in")
    }

    pub fn spec(&self) -> &TokenizerSpec {
        &self.spec
    }

    /// True when the token count of `a + " " + b` always equals the sum of
    /// the counts of `a` and `b`. Holds for every built-in kind.
    pub fn is_additive(&self) -> bool {
        self.external.is_none()
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence, TokenizeError> {
        let tokens = match &self.spec {
            TokenizerSpec::Whitespace => text.split_whitespace().map(str::to_string).collect(),
            TokenizerSpec::Intl => intl_tokens(text),
            TokenizerSpec::CharCjk => cjk_tokens(text),
            TokenizerSpec::External(cmd) => {
                let slot = self.external.as_ref().expect("external tokenizer state");
                let mut guard = slot.lock().unwrap_or_else(|e| e.into_inner());
                if guard.is_none() {
                    *guard = Some(ExternalProcess::spawn(cmd)?);
                }
                let result = guard.as_mut().unwrap().request(text);
                if result.is_err() {
                    // Start a fresh process on the next call.
                    *guard = None;
                }
                result?
            }
        };
        Ok(TokenSequence(tokens))
    }

    pub fn count(&self, text: &str) -> Result<usize, TokenizeError> {
        match self.spec {
            TokenizerSpec::Whitespace => Ok(text.split_whitespace().count()),
            _ => self.tokenize(text).map(|t| t.len()),
        }
    }
}

/// One-shot convenience around [`Tokenizer`].
pub fn tokenize(text: &str, spec: &TokenizerSpec) -> Result<TokenSequence, TokenizeError> {
    Tokenizer::new(spec.clone())?.tokenize(text)
}

pub fn count_tokens(text: &str, spec: &TokenizerSpec) -> Result<usize, TokenizeError> {
    Tokenizer::new(spec.clone())?.count(text)
}

fn is_intl_punct(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation() && c != '\'' && c != '-';
    }
    matches!(c,
        '\u{A1}' | '\u{AB}' | '\u{BB}' | '\u{BF}'
        | '\u{2010}'..='\u{2027}'
        | '\u{2030}'..='\u{205E}')
        || is_fullwidth_punct(c)
}

fn is_fullwidth_punct(c: char) -> bool {
    matches!(c,
        '\u{3001}'..='\u{303F}'
        | '\u{FF01}'..='\u{FF0F}'
        | '\u{FF1A}'..='\u{FF20}'
        | '\u{FF3B}'..='\u{FF40}'
        | '\u{FF5B}'..='\u{FF65}')
}

pub fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{3400}'..='\u{4DBF}'
        | '\u{4E00}'..='\u{9FFF}'
        | '\u{F900}'..='\u{FAFF}'
        | '\u{20000}'..='\u{2A6DF}'
        | '\u{2A700}'..='\u{2EBEF}'
        | '\u{2F800}'..='\u{2FA1F}'
        | '\u{30000}'..='\u{323AF}')
        || is_fullwidth_punct(c)
}

/// Splits each whitespace token into runs, emitting characters selected by
/// `standalone` as single tokens.
fn split_runs(text: &str, standalone: impl Fn(&[char], usize) -> bool) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut run = String::new();
        for i in 0..chars.len() {
            if standalone(&chars, i) {
                if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
                out.push(chars[i].to_string());
            } else {
                run.push(chars[i]);
            }
        }
        if !run.is_empty() {
            out.push(run);
        }
    }
    out
}

fn intl_tokens(text: &str) -> Vec<String> {
    split_runs(text, |chars, i| {
        let digit_at = |j: Option<usize>| j.and_then(|j| chars.get(j)).is_some_and(char::is_ascii_digit);
        let prev_digit = digit_at(i.checked_sub(1));
        match chars[i] {
            '.' | ',' => !(prev_digit && digit_at(Some(i + 1))),
            '-' => prev_digit,
            c => is_intl_punct(c),
        }
    })
}

fn cjk_tokens(text: &str) -> Vec<String> {
    split_runs(text, |chars, i| is_cjk(chars[i]))
}
