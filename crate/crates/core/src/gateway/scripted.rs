//! Scripted backend for tests: canned replies keyed by prompt, a fixed
//! reply, or an arbitrary function. Counts invocations.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::digest::fnv1a64;

use super::{BackendKind, CompletionBackend, CompletionRequest, GatewayError};

type ReplyFn = Box<dyn Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync>;

pub struct ScriptedBackend {
    by_prompt: Mutex<HashMap<String, String>>,
    fallback: ReplyFn,
    invocations: AtomicUsize,
}

impl ScriptedBackend {
    /// Reply with `text` to every request.
    pub fn always(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::with_fn(move |_| Ok(text.clone()))
    }

    /// Reply with a short deterministic token derived from the request, so
    /// distinct requests get distinct texts.
    pub fn echo_seeded() -> Self {
        Self::with_fn(|req| {
            Ok(format!(
                "reply-{:016x}",
                fnv1a64(super::cache_key(req).as_bytes())
            ))
        })
    }

    /// Fail every invocation.
    pub fn failing() -> Self {
        Self::with_fn(|_| {
            Err(GatewayError::BackendUnavailable {
                attempts: 1,
                last_error: "scripted failure".into(),
            })
        })
    }

    pub fn with_fn(
        f: impl Fn(&CompletionRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            by_prompt: Mutex::new(HashMap::new()),
            fallback: Box::new(f),
            invocations: AtomicUsize::new(0),
        }
    }

    /// Register a canned reply for an exact user prompt.
    pub fn script(&self, prompt: impl Into<String>, reply: impl Into<String>) {
        self.by_prompt
            .lock()
            .expect("script lock")
            .insert(prompt.into(), reply.into());
    }

    /// How many times the backend was actually invoked.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for ScriptedBackend {
    fn invoke(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        if let Some(reply) = self
            .by_prompt
            .lock()
            .expect("script lock")
            .get(&req.user_prompt)
        {
            return Ok(reply.clone());
        }
        (self.fallback)(req)
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }
}
