//! Participant specs, agent implementations, prompts and reply validation.

mod agent;
pub mod policy;
mod prompt;
mod provider;
mod reply;
mod spec;

pub use agent::{
    abort_round, apply_action, build_agent, round_history, run_ai_round, think_time_ms, Action, Agent,
    AgentError, LlmAgent, Observation, RoundLimits, RoundOutcome, ScriptedAgent, DEFAULT_MAX_ATTEMPTS,
    submit_round,
};
pub use prompt::{
    build_director_prompt, build_matcher_prompt, composite_ref, partner_prefix, sequence_state_header, ChatLine,
    ContextMessage, PromptBundle, SequenceSlot, SequenceStateMessage, FEEDBACK_HEADER,
};
pub use provider::{
    chat_history, parse_composite_ref, CompletionProvider, CompletionRequest, MessageRole, MockLlmProvider,
    ProviderError, ProviderMessage, ReplayProvider, SymbolicAssets,
};
pub use reply::{
    check_director_order, parse_director_reply, parse_director_reply_with, parse_matcher_reply,
    parse_matcher_reply_with, DirectorReasoning, DirectorReply, MatcherReasoning, MatcherReply, ReplyError,
    Selection,
};
pub use spec::{ParticipantKind, ParticipantSpec, ReasoningEffort, Role, ScriptedBehavior};
