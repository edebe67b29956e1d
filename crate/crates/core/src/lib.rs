//! Corpus analytics for natural-language driving explanations.
//!
//! - [`corpus`]: explanations, taxonomies, annotations and CoNLL-U parses
//! - [`gateway`]: chat-completion client with retries, caching and a mock backend
//! - [`race`]: self-consistent chain-of-thought classification and the prompt refinement loop
//! - [`keyness`]: log-odds keyness with an informative Dirichlet prior
//! - [`syntax`]: dependency features, causal cues, grammar families and slot templates
//! - [`agreement`]: accuracy, macro-F1, Cohen's and Fleiss' kappa, sampling and confusion matrices

pub mod agreement;
pub mod corpus;
pub mod gateway;
pub mod keyness;
pub mod race;
pub mod syntax;

pub use agreement::{AgreementLevel, AgreementReport, ConfusionMatrix, LabeledPair};
pub use corpus::{Explanation, ParsedExplanation, Taxonomy, Token};
pub use gateway::{BackendSpec, ChatRequest, ChatResponse, Gateway};
pub use keyness::{ContextCounts, KeynessScore, LemmaStream, PriorSpec};
pub use race::{ClassificationOutcome, ClassificationResult, PromptTemplate, ReasoningTrace};
pub use syntax::{GrammarFamily, SlotTemplate, SyntacticFeatures, SyntacticSignature};
