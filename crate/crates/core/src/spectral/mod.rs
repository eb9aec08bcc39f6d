//! Spectral filters, eigendecomposition and frequency-domain diagnostics.

mod decomposition;
mod diagnostics;
mod filters;

pub use decomposition::{eigendecompose, eigendecompose_with_limit, SpectralDecomposition, DEFAULT_DENSE_LIMIT};
pub use diagnostics::{
    class_distance_expectations, high_freq_area, high_freq_profile, profile_mean, spectral_energy, srl,
    theorem1_check, write_filter_curves_tsv, write_profile_tsv, ClassDistances, Theorem1Report,
};
pub use filters::{
    beta_constant, beta_filter_apply, beta_filter_apply_rows, filter_response, lambda_grid, triple_filter_response, BetaFilter, FilterBank,
    ReferenceFilter, SpectralFilter,
};
