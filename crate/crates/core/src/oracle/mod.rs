//! User simulators and entailment verifiers.
//!
//! A [`Verifier`] turns (description, attribute) into three-way NLI logits.
//! The built-in [`StructuredVerifier`] reads structured attribute sets; the
//! [`SidecarVerifier`] forwards rendered text to an external model over HTTP.
//! A [`Responder`] answers binary questions about the target, either from
//! ground truth ([`SimulatedUser`]) or from a person at a terminal
//! ([`TerminalUser`]).

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{AttributeValue, InstanceSpec};

/// Environment variable consulted when no sidecar URL is configured.
pub const SIDECAR_ENV: &str = "COMPNAV_SIDECAR_URL";

pub const ENTAIL_LOGITS: VerdictLogits = VerdictLogits {
    entail: 4.0,
    neutral: 0.0,
    contradict: -4.0,
};
pub const CONTRADICT_LOGITS: VerdictLogits = VerdictLogits {
    entail: -4.0,
    neutral: 0.0,
    contradict: 4.0,
};
pub const NEUTRAL_LOGITS: VerdictLogits = VerdictLogits {
    entail: -2.0,
    neutral: 2.0,
    contradict: -2.0,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("sidecar transport error: {0}")]
    Transport(String),
    #[error("sidecar timed out after {0} ms")]
    Timeout(u64),
    #[error("sidecar returned http status {0}")]
    Status(u16),
    #[error("sidecar protocol error: {message}; payload: {payload}")]
    Protocol { message: String, payload: String },
    #[error("input ended before an answer was given")]
    EndOfInput,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub error_rate: f64,
    pub reveal_k: usize,
    pub sidecar_url: Option<String>,
    pub sidecar_timeout_ms: u64,
    pub sidecar_max_in_flight: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            error_rate: 0.0,
            reveal_k: 3,
            sidecar_url: None,
            sidecar_timeout_ms: 2000,
            sidecar_max_in_flight: 4,
        }
    }
}

impl OracleConfig {
    /// Configured sidecar URL, falling back to [`SIDECAR_ENV`].
    pub fn resolved_sidecar_url(&self) -> Option<String> {
        self.sidecar_url
            .clone()
            .or_else(|| std::env::var(SIDECAR_ENV).ok())
            .filter(|u| !u.trim().is_empty())
    }

    /// The sidecar verifier when a URL is available, else the built-in one.
    pub fn verifier(&self) -> Box<dyn Verifier> {
        match self.resolved_sidecar_url() {
            Some(url) => Box::new(SidecarVerifier::new(
                &url,
                Duration::from_millis(self.sidecar_timeout_ms),
                self.sidecar_max_in_flight,
            )),
            None => Box::new(StructuredVerifier),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictLogits {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl VerdictLogits {
    pub fn is_finite(&self) -> bool {
        self.entail.is_finite() && self.neutral.is_finite() && self.contradict.is_finite()
    }
}

/// What a verifier sees of a candidate: its structured attributes and the
/// rendered description text.
#[derive(Debug, Clone, Copy)]
pub struct Premise<'a> {
    pub attributes: &'a [AttributeValue],
    pub text: &'a str,
}

/// Hypothesis sentence for attribute `a`.
pub fn hypothesis_text(a: &AttributeValue) -> String {
    format!("The instance has {}.", a.phrase)
}

pub trait Verifier: Send + Sync {
    fn verify(&self, premise: &Premise<'_>, hypothesis: &AttributeValue) -> Result<VerdictLogits, OracleError>;
}

/// Rule table over structured attribute sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuredVerifier;

/// Entail if `a` is in `d`, contradict if `d` has `a`'s attribute with a
/// different value, neutral otherwise.
pub fn verify(d: &[AttributeValue], a: &AttributeValue) -> VerdictLogits {
    if d.contains(a) {
        ENTAIL_LOGITS
    } else if d.iter().any(|x| x.attribute == a.attribute) {
        CONTRADICT_LOGITS
    } else {
        NEUTRAL_LOGITS
    }
}

impl Verifier for StructuredVerifier {
    fn verify(&self, premise: &Premise<'_>, hypothesis: &AttributeValue) -> Result<VerdictLogits, OracleError> {
        Ok(verify(premise.attributes, hypothesis))
    }
}

#[derive(Serialize)]
struct EntailRequest<'a> {
    premise: &'a str,
    hypothesis: &'a str,
}

/// HTTP client for an external NLI model: `POST <base>/entail`.
pub struct SidecarVerifier {
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    slot_free: Condvar,
}

impl std::fmt::Debug for SidecarVerifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarVerifier")
            .field("endpoint", &self.endpoint)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl SidecarVerifier {
    pub fn new(base_url: &str, timeout: Duration, max_in_flight: usize) -> Self {
        let base = base_url.trim_end_matches('/');
        let endpoint = if base.ends_with("/entail") {
            base.to_owned()
        } else {
            format!("{base}/entail")
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint,
            timeout,
            agent,
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(0),
            slot_free: Condvar::new(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Sends one premise/hypothesis pair and parses the logits.
    pub fn sidecar_verify(&self, premise: &str, hypothesis: &str) -> Result<VerdictLogits, OracleError> {
        {
            let mut n = self.in_flight.lock().expect("in-flight counter");
            while *n >= self.max_in_flight {
                n = self.slot_free.wait(n).expect("in-flight counter");
            }
            *n += 1;
        }
        let result = self.request(premise, hypothesis);
        *self.in_flight.lock().expect("in-flight counter") -= 1;
        self.slot_free.notify_one();
        result
    }

    fn request(&self, premise: &str, hypothesis: &str) -> Result<VerdictLogits, OracleError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .send_json(EntailRequest { premise, hypothesis });
        let mut resp = match resp {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Err(OracleError::Timeout(self.timeout.as_millis() as u64))
            }
            Err(e) => return Err(OracleError::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(OracleError::Status(status));
        }
        let body = match resp.body_mut().read_to_string() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => {
                return Err(OracleError::Timeout(self.timeout.as_millis() as u64))
            }
            Err(e) => return Err(OracleError::Transport(e.to_string())),
        };
        let logits: VerdictLogits = serde_json::from_str(&body).map_err(|e| {
            log::error!("malformed sidecar response: {body}");
            OracleError::Protocol {
                message: e.to_string(),
                payload: body.clone(),
            }
        })?;
        if !logits.is_finite() {
            return Err(OracleError::Protocol {
                message: "non-finite logits".into(),
                payload: body,
            });
        }
        Ok(logits)
    }
}

impl Verifier for SidecarVerifier {
    fn verify(&self, premise: &Premise<'_>, hypothesis: &AttributeValue) -> Result<VerdictLogits, OracleError> {
        self.sidecar_verify(premise.text, &hypothesis_text(hypothesis))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reply {
    Yes,
    No,
    Open(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAnswer {
    pub reply: Reply,
    pub token_count: usize,
    pub revealed: Vec<AttributeValue>,
}

impl UserAnswer {
    fn binary(yes: bool) -> Self {
        Self {
            reply: if yes { Reply::Yes } else { Reply::No },
            token_count: 1,
            revealed: Vec::new(),
        }
    }

    pub fn is_yes(&self) -> bool {
        self.reply == Reply::Yes
    }
}

pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Ground-truth yes/no for `a` against the target's attributes, flipped with
/// probability `error_rate`. One uniform draw is consumed per call.
pub fn answer_binary<R: Rng>(target: &[AttributeValue], a: &AttributeValue, error_rate: f64, rng: &mut R) -> UserAnswer {
    let truth = verify(target, a) == ENTAIL_LOGITS;
    let flip = rng.gen::<f64>() < error_rate;
    UserAnswer::binary(truth != flip)
}

/// Answers an open-ended question about `asked_about` with up to `reveal_k`
/// target attributes not yet revealed, the asked attribute first.
pub fn answer_open(
    target: &InstanceSpec,
    asked_about: &str,
    already_revealed: &BTreeSet<AttributeValue>,
    reveal_k: usize,
) -> UserAnswer {
    let fresh: Vec<&AttributeValue> = target
        .attribute_values()
        .filter(|a| !already_revealed.contains(*a))
        .collect();
    let mut order: Vec<&AttributeValue> = fresh.iter().copied().filter(|a| a.attribute == asked_about).collect();
    order.extend(fresh.iter().copied().filter(|a| a.attribute != asked_about));
    let revealed: Vec<AttributeValue> = order.into_iter().take(reveal_k).cloned().collect();
    let text = if revealed.is_empty() {
        "Nothing new to add about the target object.".to_owned()
    } else {
        let mut t = String::from("Sure, here is what I know about the target.");
        for a in &revealed {
            t.push_str(&format!(" It has {}.", a.phrase));
        }
        t
    };
    UserAnswer {
        token_count: count_tokens(&text),
        reply: Reply::Open(text),
        revealed,
    }
}

/// Question text for attribute `a`.
pub fn question_text(a: &AttributeValue) -> String {
    format!("Does the target have {}?", a.phrase)
}

/// Something that answers binary questions about the target.
pub trait Responder {
    fn ask_binary(&mut self, attribute: &AttributeValue) -> Result<UserAnswer, OracleError>;

    /// Progress notices (re-exploration and the like); ignored by default.
    fn notify(&mut self, _message: &str) {}
}

/// Answers from the target's ground-truth attributes.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    attributes: Vec<AttributeValue>,
    error_rate: f64,
    rng: ChaCha8Rng,
}

impl SimulatedUser {
    pub fn new(target: &InstanceSpec, error_rate: f64, seed: u64) -> Self {
        Self {
            attributes: target.attribute_values().cloned().collect(),
            error_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Responder for SimulatedUser {
    fn ask_binary(&mut self, attribute: &AttributeValue) -> Result<UserAnswer, OracleError> {
        Ok(answer_binary(&self.attributes, attribute, self.error_rate, &mut self.rng))
    }
}

/// Routes questions to a person: prints the question and reads `y`/`n`.
pub struct TerminalUser<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> TerminalUser<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> Responder for TerminalUser<R, W> {
    fn ask_binary(&mut self, attribute: &AttributeValue) -> Result<UserAnswer, OracleError> {
        loop {
            write!(self.output, "{} [y/n] ", question_text(attribute))?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(OracleError::EndOfInput);
            }
            match line.trim().to_ascii_lowercase().as_str() {
                "y" | "yes" => return Ok(UserAnswer::binary(true)),
                "n" | "no" => return Ok(UserAnswer::binary(false)),
                other => writeln!(self.output, "please answer y or n (got '{other}')")?,
            }
        }
    }

    fn notify(&mut self, message: &str) {
        let _ = writeln!(self.output, "{message}");
    }
}
