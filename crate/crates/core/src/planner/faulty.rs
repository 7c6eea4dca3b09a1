use std::collections::BTreeMap;
use std::sync::Mutex;

use super::{PlannerBackend, PlannerError, PlannerReply, PlannerRequest, TemplateId, TokenUsage};

/// What a faulty call returns instead of the inner reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultMode {
    /// A reply with no parsable structure.
    Garbage,
    /// A retryable transport error.
    Transport,
}

/// Wraps a backend and corrupts the first `count` calls of one template.
pub struct FaultyPlanner<B> {
    inner: B,
    template: TemplateId,
    count: usize,
    mode: FaultMode,
    seen: Mutex<BTreeMap<TemplateId, usize>>,
}

impl<B: PlannerBackend> FaultyPlanner<B> {
    pub fn new(inner: B, template: TemplateId, count: usize, mode: FaultMode) -> Self {
        Self {
            inner,
            template,
            count,
            mode,
            seen: Mutex::new(BTreeMap::new()),
        }
    }
}

impl<B: PlannerBackend> PlannerBackend for FaultyPlanner<B> {
    fn complete(&self, request: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        if request.template == self.template {
            let mut seen = self.seen.lock().expect("fault counter");
            let n = seen.entry(request.template).or_default();
            *n += 1;
            if *n <= self.count {
                return match self.mode {
                    FaultMode::Garbage => {
                        let text = "I think everyone should just do their best!".to_string();
                        Ok(PlannerReply {
                            usage: TokenUsage {
                                prompt_tokens: super::estimate_tokens(
                                    &request.render().into_iter().map(|m| m.content).collect::<String>(),
                                ),
                                completion_tokens: super::estimate_tokens(&text),
                            },
                            text,
                        })
                    }
                    FaultMode::Transport => Err(PlannerError::Transport {
                        message: "injected fault".into(),
                        retryable: true,
                    }),
                };
            }
        }
        self.inner.complete(request)
    }

    fn is_live(&self) -> bool {
        self.inner.is_live()
    }
}
