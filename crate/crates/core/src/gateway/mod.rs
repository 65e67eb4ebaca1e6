// SPDX-License-Identifier: Apache-2.0

//! Model access: prompt construction, response parsing, providers.

mod feedback;
mod filter;
mod prompt;
mod provider;

pub use feedback::{
    FeedbackKind, FeedbackLine, FeedbackMessage, LineStatus, ALL_EQUAL_HEADER,
    DIFFERENTIATING_HEADER, GENERATOR_NAME, TRY_AGAIN,
};
pub use filter::{
    build_filter_prompt, parse_filter_response, FilterDecision, JudgeVerdict, FILTER_TEMPLATE,
};
pub use prompt::{
    build_probe_prompt, build_probe_prompt_capped, fenced, parse_probe_response, ProbeResponse,
    Transcript, TurnRecord, PROBE_INSTRUCTIONS_V1,
};
pub use provider::{
    ChatProvider, ChatRequest, DecodeParams, HttpProvider, LlmGateway, ProviderError, RequestKind,
    RetryPolicy, Sampled, ScriptBook, ScriptedProvider, API_KEY_ENV,
};
