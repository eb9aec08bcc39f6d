//! Prompt graphs inserted into a downstream graph and tuned against a
//! frozen backbone.

mod graph;
mod tune;

pub use graph::{
    build_cross_edges, build_inner_edges, insert_normalized, insert_prompt, normalize_backward, normalize_prompt,
    normalize_with_stats, FeatureStats, NormCache, PromptGraph, PromptedGraph, STD_FLOOR,
};
pub use tune::{
    make_ablation, predict, prompted_encode, prompted_encode_rows, tune, Pipeline, PromptState,
    TuneConfig, TuneEpoch, TuneObjective, TuneOutcome, Variant, PROMPT_MAGIC,
};
