//! Region localizer: scores regions for one word and re-attends.

use crate::error::{Error, Result};
use crate::model::params::{LocalizerNodes, ParamNodes};
use crate::numcore::{Graph, NodeId};

/// Localizer output for one step.
#[derive(Clone, Copy, Debug)]
pub struct Localized {
    /// Region distribution, length `n`.
    pub beta: NodeId,
    /// Beta-weighted region feature, length `region_dim`.
    pub region: NodeId,
}

/// Scores every region against a query derived from `word` (or, for the
/// hidden-state variant, from `h_a`), then softmaxes and pools the bank.
///
/// For the word-driven variants the only inputs are the word embedding row
/// and the region bank, so no gradient can reach the decode pass from here.
pub fn localize(
    g: &mut Graph,
    nodes: &ParamNodes,
    bank: NodeId,
    word: usize,
    h_a: Option<NodeId>,
) -> Result<Localized> {
    let query = match nodes.localizer {
        LocalizerNodes::Linear { w_l } => {
            let e = g.row(nodes.w_e, word);
            g.matvec(w_l, e)
        }
        LocalizerNodes::Mlp { w_l1, w_l2 } => {
            let e = g.row(nodes.w_e, word);
            let hidden_pre = g.matvec(w_l1, e);
            let hidden = g.tanh(hidden_pre);
            g.matvec(w_l2, hidden)
        }
        LocalizerNodes::UseHiddenA { w_l } => {
            let h = h_a.ok_or_else(|| {
                Error::config("localizer variant use_ha needs the attention hidden state")
            })?;
            g.matvec(w_l, h)
        }
    };
    let scores = g.mattvec(bank, query);
    let beta = g.softmax(scores);
    let region = g.matvec(bank, beta);
    Ok(Localized { beta, region })
}
