//! Aggregated evaluation report with JSON and CSV emission.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::grounding::ClassScores;

/// Split-level grounding and language scores.
///
/// Attention accuracies are absent when scoring externally supplied
/// predictions, which carry no attention internals.
#[derive(Clone, Debug, Serialize)]
pub struct GroundingReport {
    pub sentences: usize,
    pub per_class: Vec<ClassScores>,
    pub macro_f1_all: f64,
    pub macro_f1_loc: f64,
    pub f1_all_per_sent: f64,
    pub f1_loc_per_sent: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_accuracy_decoder: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention_accuracy_localizer: Option<f64>,
}

fn fmt_f64(v: f64) -> String {
    // Full round-trip precision so reports are comparable bit for bit.
    format!("{v:?}")
}

impl GroundingReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// One row per class plus `macro` and `per_sentence` summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("row,class,generated,annotated,prec_all,rec_all,f1_all,prec_loc,rec_loc,f1_loc\n");
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "class,{},{},{},{},{},{},{},{},{}",
                c.class,
                c.generated,
                c.annotated,
                fmt_f64(c.prec_all),
                fmt_f64(c.rec_all),
                fmt_f64(c.f1_all),
                fmt_f64(c.prec_loc),
                fmt_f64(c.rec_loc),
                fmt_f64(c.f1_loc),
            );
        }
        let _ = writeln!(
            out,
            "macro,,,,,,{},,,{}",
            fmt_f64(self.macro_f1_all),
            fmt_f64(self.macro_f1_loc)
        );
        let _ = writeln!(
            out,
            "per_sentence,,,,,,{},,,{}",
            fmt_f64(self.f1_all_per_sent),
            fmt_f64(self.f1_loc_per_sent)
        );
        out
    }

    /// Every reported score lies in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(crate::error::Error::numeric(format!(
                    "report field {name} = {v} is outside [0, 1]"
                )));
            }
            Ok(())
        };
        unit("macro_f1_all", self.macro_f1_all)?;
        unit("macro_f1_loc", self.macro_f1_loc)?;
        unit("f1_all_per_sent", self.f1_all_per_sent)?;
        unit("f1_loc_per_sent", self.f1_loc_per_sent)?;
        unit("bleu1", self.bleu1)?;
        unit("bleu4", self.bleu4)?;
        for c in &self.per_class {
            for (name, v) in [
                ("prec_all", c.prec_all),
                ("rec_all", c.rec_all),
                ("f1_all", c.f1_all),
                ("prec_loc", c.prec_loc),
                ("rec_loc", c.rec_loc),
                ("f1_loc", c.f1_loc),
            ] {
                unit(name, v)?;
            }
        }
        if let Some(v) = self.attention_accuracy_decoder {
            unit("attention_accuracy_decoder", v)?;
        }
        if let Some(v) = self.attention_accuracy_localizer {
            unit("attention_accuracy_localizer", v)?;
        }
        Ok(())
    }
}
