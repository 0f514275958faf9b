//! Retrieval-augmented agent framework for materials-science question
//! answering: a categorized knowledge base, a tool hub, a two-stage
//! retriever, an assessor/executor agent, inductive tool construction and an
//! evaluation harness. Everything runs offline against scripted or replayed
//! providers.

pub mod agent;
pub mod config;
pub mod eval;
pub mod itc;
pub mod knowledge_base;
pub mod llm;
pub mod retriever;
pub mod session;
pub mod tool_hub;
