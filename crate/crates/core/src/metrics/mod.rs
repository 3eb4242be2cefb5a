//! Grounding and captioning metrics.

mod attention;
mod bbox;
mod bleu;
mod grounding;
mod model_eval;
mod predictions;
mod report;

pub use attention::{attention_accuracy, attention_hit, AttentionCase};
pub use model_eval::{evaluate_split, scene_pool, score_predictions, EvalOutcome};
pub use bbox::{iou, validate_box, Box4};
pub use bleu::bleu;
pub use grounding::{
    f1_per_class, f1_per_sentence, sentence_counts, ClassScores, PoolEntry, PredOutcome,
    PredictedObject, SentenceEval, IOU_THRESHOLD,
};
pub use predictions::{read_predictions, write_predictions, PredictionRecord};
pub use report::GroundingReport;

pub(crate) use bbox::iou_unchecked;
