//! Recurrent and attention building blocks.
//!
//! Layers own [`ParamId`]s into a [`ParamStore`]; every forward call records
//! onto a [`Graph`] so the same code serves training and decoding.

use crate::graph::{Graph, Var};
use crate::params::{Initializer, ParamId, ParamStore};
use crate::tensor::{Result, TensorError};

fn check_width(g: &Graph, v: Var, width: usize, op: &'static str) -> Result<()> {
    if g.shape(v) != [width] {
        return Err(TensorError::ShapeMismatch {
            op,
            left: vec![width],
            right: g.shape(v).to_vec(),
        });
    }
    Ok(())
}

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(W_z x + U_z h + b_z)
/// r  = σ(W_r x + U_r h + b_r)
/// h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h′ = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        let mut w = |name: &str, shape: &[usize]| {
            store.insert(format!("{prefix}.{name}"), init.weight(shape))
        };
        let (w_z, w_r, w_h) = (
            w("w_z", &[hidden, input]),
            w("w_r", &[hidden, input]),
            w("w_h", &[hidden, input]),
        );
        let (u_z, u_r, u_h) = (
            w("u_z", &[hidden, hidden]),
            w("u_r", &[hidden, hidden]),
            w("u_h", &[hidden, hidden]),
        );
        let mut b = |name: &str| store.insert(format!("{prefix}.{name}"), init.bias(hidden));
        let (b_z, b_r, b_h) = (b("b_z"), b("b_r"), b("b_h"));
        GruCell {
            input,
            hidden,
            w_z,
            w_r,
            w_h,
            u_z,
            u_r,
            u_h,
            b_z,
            b_r,
            b_h,
        }
    }

    pub fn num_params(input: usize, hidden: usize) -> usize {
        3 * (hidden * input + hidden * hidden + hidden)
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        check_width(g, x, self.input, "gru_step")?;
        check_width(g, h, self.hidden, "gru_step")?;
        let p = |g: &mut Graph, id| g.param(id);
        let (w_z, u_z, b_z) = (p(g, self.w_z), p(g, self.u_z), p(g, self.b_z));
        let (w_r, u_r, b_r) = (p(g, self.w_r), p(g, self.u_r), p(g, self.b_r));
        let (w_h, u_h, b_h) = (p(g, self.w_h), p(g, self.u_h), p(g, self.b_h));

        let z = g.affine(&[(w_z, x), (u_z, h)], Some(b_z))?;
        let z = g.sigmoid(z)?;
        let r = g.affine(&[(w_r, x), (u_r, h)], Some(b_r))?;
        let r = g.sigmoid(r)?;
        let rh = g.mul(r, h)?;
        let cand = g.affine(&[(w_h, x), (u_h, rh)], Some(b_h))?;
        let cand = g.tanh(cand)?;
        let delta = g.sub(cand, h)?;
        let step = g.mul(z, delta)?;
        g.add(h, step)
    }
}

/// Zero vector of the given width (initial recurrent state).
pub fn zero_state(g: &mut Graph, width: usize) -> Var {
    g.constant(crate::tensor::Tensor::zeros(&[width]))
}

/// A forward and a backward GRU over the same sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct BiRnn {
    pub forward: GruCell,
    pub backward: GruCell,
}

#[derive(Debug, Clone)]
pub struct BiRnnOutput {
    /// `[forward_t ; backward_t]` for every position.
    pub states: Vec<Var>,
    /// Forward state after the last input.
    pub forward_final: Var,
    /// Backward state after consuming the sequence right-to-left, i.e. the
    /// one produced at the first position.
    pub backward_final: Var,
}

impl BiRnn {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        input: usize,
        hidden: usize,
    ) -> Self {
        BiRnn {
            forward: GruCell::new(store, init, &format!("{prefix}.fwd"), input, hidden),
            backward: GruCell::new(store, init, &format!("{prefix}.bwd"), input, hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn run(&self, g: &mut Graph, inputs: &[Var]) -> Result<BiRnnOutput> {
        if inputs.is_empty() {
            return Err(TensorError::Empty("run_birnn"));
        }
        let n = self.hidden();
        let mut h = zero_state(g, n);
        let mut fwd = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let x = g.dropout(x)?;
            h = self.forward.step(g, x, h)?;
            fwd.push(h);
        }
        let mut h = zero_state(g, self.backward.hidden);
        let mut bwd = vec![h; inputs.len()];
        for (i, &x) in inputs.iter().enumerate().rev() {
            let x = g.dropout(x)?;
            h = self.backward.step(g, x, h)?;
            bwd[i] = h;
        }
        let states = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        Ok(BiRnnOutput {
            states,
            forward_final: *fwd.last().unwrap(),
            backward_final: bwd[0],
        })
    }
}

/// Character-to-word composition: `w = W_f h_f + W_b h_b + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordComposer {
    pub rnn: BiRnn,
    pub w_f: ParamId,
    pub w_b: ParamId,
    pub bias: ParamId,
    pub output: usize,
}

impl WordComposer {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        input: usize,
        hidden: usize,
        output: usize,
    ) -> Self {
        let rnn = BiRnn::new(store, init, &format!("{prefix}.rnn"), input, hidden);
        let w_f = store.insert(format!("{prefix}.w_f"), init.weight(&[output, hidden]));
        let w_b = store.insert(format!("{prefix}.w_b"), init.weight(&[output, hidden]));
        let bias = store.insert(format!("{prefix}.b"), init.bias(output));
        WordComposer {
            rnn,
            w_f,
            w_b,
            bias,
            output,
        }
    }

    pub fn compose(&self, g: &mut Graph, char_embeddings: &[Var]) -> Result<Var> {
        if char_embeddings.is_empty() {
            return Err(TensorError::Empty("compose_word"));
        }
        let out = self.rnn.run(g, char_embeddings)?;
        let (w_f, w_b, b) = (g.param(self.w_f), g.param(self.w_b), g.param(self.bias));
        g.affine(
            &[(w_f, out.forward_final), (w_b, out.backward_final)],
            Some(b),
        )
    }
}

/// Dot-product attention over a `sources × width` memory matrix.
///
/// Returns the context vector and the attention weights.
pub fn attend_memory(g: &mut Graph, query: Var, memory: Var) -> Result<(Var, Var)> {
    let (qs, ms) = (g.shape(query).to_vec(), g.shape(memory).to_vec());
    if ms.len() != 2 || ms[0] == 0 {
        return Err(TensorError::Empty("attend"));
    }
    if qs != [ms[1]] {
        return Err(TensorError::ShapeMismatch {
            op: "attend",
            left: qs,
            right: ms,
        });
    }
    g.count_attention();
    let scores = g.matmul(memory, query)?;
    let weights = g.softmax(scores)?;
    let context = g.matmul(weights, memory)?;
    Ok((context, weights))
}

/// [`attend_memory`] over a list of encoder states.
pub fn attend(g: &mut Graph, query: Var, states: &[Var]) -> Result<(Var, Var)> {
    if states.is_empty() {
        return Err(TensorError::Empty("attend"));
    }
    let memory = g.stack_rows(states)?;
    attend_memory(g, query, memory)
}

/// `tanh(W [context ; hidden])`.
pub fn attentional_vector(g: &mut Graph, context: Var, hidden: Var, w: Var) -> Result<Var> {
    let joined = g.concat(&[context, hidden])?;
    let proj = g.matmul(w, joined)?;
    g.tanh(proj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionLayer {
    /// Index of the layer whose output queries the source.
    pub index: usize,
    /// Projection of `[context ; output]`, shape `width × 2·width`.
    pub w: ParamId,
}

/// Stacked GRUs with optional attention insertion and residual connections.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedRnn {
    pub layers: Vec<GruCell>,
    pub attention: Option<AttentionLayer>,
    /// `(from, to)`: the output of layer `from` is added to the output of
    /// layer `to`.
    pub residual: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct StackStep {
    pub output: Var,
    pub hidden: Vec<Var>,
    pub context: Option<Var>,
    pub attention_weights: Option<Var>,
}

impl StackedRnn {
    pub fn new(
        store: &mut ParamStore,
        init: &mut Initializer,
        prefix: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        attention_index: Option<usize>,
        residual: Vec<(usize, usize)>,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(TensorError::Empty("stacked rnn"));
        }
        if let Some(i) = attention_index.filter(|&i| i >= layers) {
            return Err(TensorError::IndexOutOfRange {
                op: "stacked rnn attention",
                position: 0,
                index: i,
                bound: layers,
            });
        }
        if let Some(&(from, to)) = residual.iter().find(|&&(f, t)| f >= t || t >= layers) {
            return Err(TensorError::IndexOutOfRange {
                op: "stacked rnn residual",
                position: from,
                index: to,
                bound: layers,
            });
        }
        let cells = (0..layers)
            .map(|l| {
                GruCell::new(
                    store,
                    init,
                    &format!("{prefix}.l{l}"),
                    if l == 0 { input } else { hidden },
                    hidden,
                )
            })
            .collect();
        let attention = attention_index.map(|index| AttentionLayer {
            index,
            w: store.insert(
                format!("{prefix}.attn_w"),
                init.weight(&[hidden, 2 * hidden]),
            ),
        });
        Ok(StackedRnn {
            layers: cells,
            attention,
            residual,
        })
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map(|c| c.hidden).unwrap_or(0)
    }

    pub fn initial_state(&self, g: &mut Graph) -> Vec<Var> {
        self.layers
            .iter()
            .map(|c| zero_state(g, c.hidden))
            .collect()
    }

    /// One time step through every layer. `memory` is the encoder-state
    /// matrix and is required when the stack has an attention layer.
    pub fn step(
        &self,
        g: &mut Graph,
        x: Var,
        hidden: &[Var],
        memory: Option<Var>,
    ) -> Result<StackStep> {
        if hidden.len() != self.layers.len() {
            return Err(TensorError::ShapeMismatch {
                op: "stacked_step",
                left: vec![self.layers.len()],
                right: vec![hidden.len()],
            });
        }
        let mut outputs: Vec<Var> = Vec::with_capacity(self.layers.len());
        let mut new_hidden = Vec::with_capacity(self.layers.len());
        let (mut context, mut weights) = (None, None);
        let mut input = x;
        for (l, cell) in self.layers.iter().enumerate() {
            let inp = g.dropout(input)?;
            let h = cell.step(g, inp, hidden[l])?;
            new_hidden.push(h);
            let mut out = h;
            for &(from, _) in self.residual.iter().filter(|(_, to)| *to == l) {
                out = g.add(out, outputs[from])?;
            }
            if let Some(att) = self.attention.as_ref().filter(|a| a.index == l) {
                let memory = memory.ok_or(TensorError::Empty("attention memory"))?;
                let (c, w) = attend_memory(g, out, memory)?;
                let wp = g.param(att.w);
                out = attentional_vector(g, c, out, wp)?;
                context = Some(c);
                weights = Some(w);
            }
            outputs.push(out);
            input = out;
        }
        Ok(StackStep {
            output: input,
            hidden: new_hidden,
            context,
            attention_weights: weights,
        })
    }
}
