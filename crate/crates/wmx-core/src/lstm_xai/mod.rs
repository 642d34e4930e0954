//! LSTM interpretability: hidden-state traces with the κ and μ cell filters,
//! relevance propagation, latent-to-pixel mapping and saliency scores.

mod lrp;
mod pixels;
mod probe;
mod trace;

pub use lrp::{epsilon_rule, lrp, lrp_from, multiplicative_rule, EpsilonFlow, RelevanceVector, DEFAULT_EPSILON};
pub use pixels::{
    compare_saliency, latent_sensitivity, relevance_to_pixels, PixelMapConfig, RelevanceHeatmap, SaliencyScores,
};
pub use probe::{
    class_changes, grid_inputs, grid_probe, write_probe, AnomalyReport, CellAnomaly, ClassDelta, ProbeCell,
    ProbeConfig, ProbeInput, ProbeResult,
};
pub use trace::{
    kappa_filter, kappa_score, mu_filter, record_trace, CellRanking, FilterKind, HiddenTrace, MuMode, RankedCell,
};
