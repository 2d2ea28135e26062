//! Generate, sanitize, execute and repair test drafts under a retry budget.

mod draft;
mod engine;
mod prompt;
mod sanitize;

pub use draft::{NonUtf8Draft, PoCDraft, Provenance};
pub use engine::{run_engine, run_loop, AcceptAll, Acceptance, DraftPrompter, EngineConfig, EngineError, EngineResult, GrePrompter, LoopIo};
pub use prompt::{
    append_feedback, build_generation_prompt, import_path, task_sections, PromptContext, EXEMPLAR, SECTION_CODE,
    SECTION_EXEMPLAR, SECTION_FEEDBACK, SECTION_FINDING, SECTION_PREVIOUS, SECTION_PROJECT,
};
pub use sanitize::{function_set, sanitize_draft, sanitize_with, SanitizeError, SanitizeTarget};
