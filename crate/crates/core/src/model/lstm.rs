//! Single LSTM cell with packed gate weights.

use crate::numcore::{Graph, NodeId, Tensor};

/// Packed LSTM parameters: one `4H x (input + H)` weight matrix and one
/// `4H` bias, gate rows ordered `[input, forget, cell, output]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmWeights {
    pub w: Tensor,
    pub b: Tensor,
}

impl LstmWeights {
    /// Hidden size implied by the bias length.
    pub fn hidden(&self) -> usize {
        self.b.len() / 4
    }
}

/// One cell step: `(x, h, c) -> (h', c')`.
///
/// Gate order is `[i, f, g, o]`:
/// `i,f,o = sigmoid`, `g = tanh`, `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_step(
    g: &mut Graph,
    w: NodeId,
    b: NodeId,
    x: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    hidden: usize,
) -> (NodeId, NodeId) {
    let xh = g.concat(&[x, h_prev]);
    let lin = g.matvec(w, xh);
    let pre = g.add(lin, b);
    let i_pre = g.slice(pre, 0, hidden);
    let f_pre = g.slice(pre, hidden, hidden);
    let g_pre = g.slice(pre, 2 * hidden, hidden);
    let o_pre = g.slice(pre, 3 * hidden, hidden);
    let i = g.sigmoid(i_pre);
    let f = g.sigmoid(f_pre);
    let gg = g.tanh(g_pre);
    let o = g.sigmoid(o_pre);
    let fc = g.mul(f, c_prev);
    let ig = g.mul(i, gg);
    let c = g.add(fc, ig);
    let c_act = g.tanh(c);
    let h = g.mul(o, c_act);
    (h, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-computed single step, hidden=2, input=2 (verified against an
    /// independent evaluation of the gate equations).
    #[test]
    fn single_step_oracle() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::matrix(
            8,
            4,
            vec![
                0.1, 0.2, -0.1, 0.05, //
                0.0, -0.3, 0.2, 0.1, //
                0.15, 0.1, 0.0, -0.2, //
                -0.1, 0.25, 0.3, 0.0, //
                0.2, -0.15, 0.1, 0.1, //
                0.05, 0.0, -0.25, 0.2, //
                -0.2, 0.1, 0.05, -0.05, //
                0.3, -0.1, 0.0, 0.15,
            ],
        ));
        let b = g.constant(Tensor::vector(vec![
            0.01, -0.02, 1.0, 1.0, 0.03, 0.0, -0.01, 0.02,
        ]));
        let x = g.constant(Tensor::vector(vec![0.3, -0.2]));
        let h0 = g.constant(Tensor::vector(vec![0.1, -0.1]));
        let c0 = g.constant(Tensor::vector(vec![0.05, 0.2]));
        let (h, c) = lstm_step(&mut g, w, b, x, h0, c0, 2);

        let want_c = [0.096256485628216384, 0.12885272452672777];
        let want_h = [0.046061967490048789, 0.067752251083625856];
        for (got, want) in g.value(c).data().iter().zip(want_c) {
            assert!((got - want).abs() < 1e-12, "c: {got} vs {want}");
        }
        for (got, want) in g.value(h).data().iter().zip(want_h) {
            assert!((got - want).abs() < 1e-12, "h: {got} vs {want}");
        }
    }

    #[test]
    fn zero_weights_give_biased_gates_only() {
        // With zero weights and zero bias, g-gate is tanh(0)=0, so c'=f*c and
        // h' = o*tanh(c') with i=f=o=0.5.
        let mut g = Graph::new();
        let w = g.constant(Tensor::zeros_matrix(8, 5));
        let b = g.constant(Tensor::zeros_vector(8));
        let x = g.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let h0 = g.constant(Tensor::zeros_vector(2));
        let c0 = g.constant(Tensor::vector(vec![0.4, -0.8]));
        let (h, c) = lstm_step(&mut g, w, b, x, h0, c0, 2);
        for (k, &cv) in g.value(c).data().iter().enumerate() {
            assert!((cv - 0.5 * g.value(c0).data()[k]).abs() < 1e-15);
        }
        for (k, &hv) in g.value(h).data().iter().enumerate() {
            let want = 0.5 * (0.5 * g.value(c0).data()[k]).tanh();
            assert!((hv - want).abs() < 1e-15);
        }
    }

    #[test]
    fn state_shapes_are_hidden_sized() {
        let mut g = Graph::new();
        let w = g.constant(Tensor::zeros_matrix(12, 7));
        let b = g.constant(Tensor::zeros_vector(12));
        let x = g.constant(Tensor::zeros_vector(4));
        let h0 = g.constant(Tensor::zeros_vector(3));
        let c0 = g.constant(Tensor::zeros_vector(3));
        let (h, c) = lstm_step(&mut g, w, b, x, h0, c0, 3);
        assert_eq!(g.value(h).len(), 3);
        assert_eq!(g.value(c).len(), 3);
    }
}
