//! Trial scoring and verification metrics.

mod evaluate;
mod metrics;
mod trials;

pub use evaluate::{embed_utterances, evaluate, score_trials, EvalReport, ScoreStats, HISTOGRAM_BINS};
pub use metrics::{
    cosine_score, dcf_at, det_points, eer, eer_from_points, min_dcf, min_dcf_from_points, DcfParams, DetPoint, ScoreSet,
};
pub use trials::{format_scores, parse_scores, read_scores, ScoredTrial, Trial, TrialList};
