//! Peephole LSTM.
//!
//! For input `x`, previous output `h` and previous cell `c`:
//!
//! ```text
//! i  = sigmoid(P_i x + Q_i h + R_i * c     + b_i)
//! f  = sigmoid(P_f x + Q_f h + R_f * c     + b_f)
//! c~ = tanh   (P_c x + Q_c h               + b_c)
//! c' = f * c + i * c~
//! o  = sigmoid(P_o x + Q_o h + R_o * c'    + b_o)
//! h' = o * tanh(c')
//! ```
//!
//! `R_*` are diagonal (stored as vectors) and the output gate looks at the
//! *updated* cell. Gate blocks are stored stacked in the order i, f, c, o.

use super::tensor::{axpy, dot};
use super::{NnError, Result, Tensor};

pub(crate) const GATE_I: usize = 0;
pub(crate) const GATE_F: usize = 1;
pub(crate) const GATE_C: usize = 2;
pub(crate) const GATE_O: usize = 3;

/// Row-major `[rows, cols]` to `[cols, rows]`.
fn transpose(m: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; m.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub units: usize,
    pub input_dim: usize,
    /// `P`, `[4 * units, input_dim]`
    pub input_weights: Tensor,
    /// `Q`, `[4 * units, units]`
    pub recurrent_weights: Tensor,
    /// Diagonals of `R_i`, `R_f`, `R_o`, `[3 * units]`.
    pub peephole: Tensor,
    /// `[4 * units]`
    pub bias: Tensor,
    /// When false the peephole terms are treated as zero and never trained.
    pub use_peephole: bool,
}

/// Destination slices for one step.
struct StepOut<'a> {
    i: &'a mut [f64],
    f: &'a mut [f64],
    g: &'a mut [f64],
    o: &'a mut [f64],
    h: &'a mut [f64],
    c: &'a mut [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

/// Gate activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmGates {
    pub input: Vec<f64>,
    pub forget: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        LstmCell {
            units,
            input_dim,
            input_weights: Tensor::zeros(&[4 * units, input_dim]),
            recurrent_weights: Tensor::zeros(&[4 * units, units]),
            peephole: Tensor::zeros(&[3 * units]),
            bias: Tensor::zeros(&[4 * units]),
            use_peephole: true,
        }
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState { h: vec![0.0; self.units], c: vec![0.0; self.units] }
    }

    fn peep(&self, gate: usize, k: usize) -> f64 {
        if !self.use_peephole {
            return 0.0;
        }
        let slot = match gate {
            GATE_I => 0,
            GATE_F => 1,
            _ => 2,
        };
        self.peephole.values()[slot * self.units + k]
    }

    /// One recurrence step from pre-computed `P x + b` (`4 * units` values).
    fn step_from_projection(&self, proj: &[f64], prev: &LstmState) -> (LstmState, LstmGates) {
        let u = self.units;
        let mut z = proj.to_vec();
        let mut gates = LstmGates {
            input: vec![0.0; u],
            forget: vec![0.0; u],
            candidate: vec![0.0; u],
            output: vec![0.0; u],
        };
        let mut next = self.zero_state();
        let out = StepOut {
            i: &mut gates.input,
            f: &mut gates.forget,
            g: &mut gates.candidate,
            o: &mut gates.output,
            h: &mut next.h,
            c: &mut next.c,
        };
        self.step_in_place(&transpose(self.recurrent_weights.values(), 4 * u, u), &mut z, &prev.h, &prev.c, out);
        (next, gates)
    }

    /// The recurrence kernel shared by `step` and the layer: `z` holds
    /// `P x + b` on entry and is used as scratch; `qt` is `Q` transposed.
    #[inline]
    fn step_in_place(&self, qt: &[f64], z: &mut [f64], h_prev: &[f64], c_prev: &[f64], out: StepOut<'_>) {
        let u = self.units;
        // column sweeps vectorize; row dot products are latency bound
        for (j, &h) in h_prev.iter().enumerate() {
            axpy(z, h, &qt[j * 4 * u..(j + 1) * 4 * u]);
        }
        for k in 0..u {
            let i = sigmoid(z[GATE_I * u + k] + self.peep(GATE_I, k) * c_prev[k]);
            let f = sigmoid(z[GATE_F * u + k] + self.peep(GATE_F, k) * c_prev[k]);
            let g = z[GATE_C * u + k].tanh();
            let ck = f * c_prev[k] + i * g;
            let o = sigmoid(z[GATE_O * u + k] + self.peep(GATE_O, k) * ck);
            out.i[k] = i;
            out.f[k] = f;
            out.g[k] = g;
            out.o[k] = o;
            out.c[k] = ck;
            out.h[k] = o * ck.tanh();
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; 4 * self.units];
        let pt = transpose(self.input_weights.values(), 4 * self.units, self.input_dim);
        self.project_into(&pt, x, &mut z);
        z
    }

    /// `z = P x + b` with `pt` the transpose of `P`.
    #[inline]
    fn project_into(&self, pt: &[f64], x: &[f64], z: &mut [f64]) {
        z.copy_from_slice(self.bias.values());
        let rows = 4 * self.units;
        for (j, &v) in x.iter().enumerate() {
            axpy(z, v, &pt[j * rows..(j + 1) * rows]);
        }
    }

    /// Advances the cell by one input vector.
    pub fn step(&self, x: &[f64], prev: &LstmState) -> Result<(LstmState, LstmGates)> {
        if x.len() != self.input_dim {
            return Err(NnError::Shape(format!("LSTM expects input dim {}, got {}", self.input_dim, x.len())));
        }
        if prev.h.len() != self.units || prev.c.len() != self.units {
            return Err(NnError::Shape(format!("LSTM state must have {} units", self.units)));
        }
        Ok(self.step_from_projection(&self.project(x), prev))
    }

    /// Runs the cell over `xs` (`[T, input_dim]`) from a zero state and
    /// returns the final output `h_T`.
    pub fn run_sequence(&self, xs: &Tensor) -> Result<Vec<f64>> {
        match xs.shape() {
            [t, d] if *d == self.input_dim && *t >= 1 => {}
            [0, _] => return Err(NnError::Shape("LSTM sequence is empty".into())),
            s => return Err(NnError::Shape(format!("LSTM sequence must be [T, {}], got {s:?}", self.input_dim))),
        }
        let mut state = self.zero_state();
        for t in 0..xs.shape()[0] {
            state = self.step(xs.row(t), &state)?.0;
        }
        Ok(state.h)
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.input_weights, &mut self.recurrent_weights, &mut self.peephole, &mut self.bias]
    }

    pub(crate) fn params(&self) -> [&Tensor; 4] {
        [&self.input_weights, &self.recurrent_weights, &self.peephole, &self.bias]
    }
}

/// LSTM layer over a `[features, T]` input (time along the second axis).
/// Returns `[units, T]` when `return_sequences`, else the final `[units]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub cell: LstmCell,
    pub return_sequences: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct LstmCache {
    steps: usize,
    /// `[T, D]`
    xs: Vec<f64>,
    /// `[T + 1, U]`, row 0 is the initial state.
    hs: Vec<f64>,
    cs: Vec<f64>,
    /// `[T, U]` each.
    gi: Vec<f64>,
    gf: Vec<f64>,
    gc: Vec<f64>,
    go: Vec<f64>,
}

impl Lstm {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_cached(x).map(|(t, _)| t)
    }

    pub(crate) fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, LstmCache)> {
        let cell = &self.cell;
        let (d, t_n) = match x.shape() {
            [d, t] => (*d, *t),
            s => return Err(NnError::Shape(format!("LSTM layer input must be [features, T], got {s:?}"))),
        };
        if d != cell.input_dim {
            return Err(NnError::Shape(format!("LSTM expects {} features, got {d}", cell.input_dim)));
        }
        if t_n == 0 {
            return Err(NnError::Shape("LSTM sequence is empty".into()));
        }
        let u = cell.units;
        let mut xs = vec![0.0; t_n * d];
        for f in 0..d {
            for (t, &v) in x.row(f).iter().enumerate() {
                xs[t * d + f] = v;
            }
        }
        let mut cache = LstmCache {
            steps: t_n,
            xs,
            hs: vec![0.0; (t_n + 1) * u],
            cs: vec![0.0; (t_n + 1) * u],
            gi: vec![0.0; t_n * u],
            gf: vec![0.0; t_n * u],
            gc: vec![0.0; t_n * u],
            go: vec![0.0; t_n * u],
        };
        let mut z = vec![0.0; 4 * u];
        let pt = transpose(cell.input_weights.values(), 4 * u, d);
        let qt = transpose(cell.recurrent_weights.values(), 4 * u, u);
        for t in 0..t_n {
            cell.project_into(&pt, &cache.xs[t * d..(t + 1) * d], &mut z);
            let span = t * u..(t + 1) * u;
            // rows t and t + 1 of the state history
            let (hs_prev, hs_next) = cache.hs[t * u..(t + 2) * u].split_at_mut(u);
            let (cs_prev, cs_next) = cache.cs[t * u..(t + 2) * u].split_at_mut(u);
            let out = StepOut {
                i: &mut cache.gi[span.clone()],
                f: &mut cache.gf[span.clone()],
                g: &mut cache.gc[span.clone()],
                o: &mut cache.go[span],
                h: hs_next,
                c: cs_next,
            };
            cell.step_in_place(&qt, &mut z, hs_prev, cs_prev, out);
        }
        let out = if self.return_sequences {
            let mut seq = vec![0.0; u * t_n];
            for t in 0..t_n {
                for k in 0..u {
                    seq[k * t_n + t] = cache.hs[(t + 1) * u + k];
                }
            }
            Tensor::new(&[u, t_n], seq)?
        } else {
            Tensor::vector(cache.hs[t_n * u..].to_vec())
        };
        Ok((out, cache))
    }

    /// Backpropagation through time. Accumulates parameter gradients and
    /// returns the `[features, T]` input gradient.
    pub(crate) fn backward(&mut self, cache: &LstmCache, dout: &Tensor) -> Tensor {
        let cell = &self.cell;
        let (u, d, t_n) = (cell.units, cell.input_dim, cache.steps);
        let peep = cell.use_peephole;
        let r = cell.peephole.values().to_vec();
        let (r_i, r_f, r_o) = (&r[..u], &r[u..2 * u], &r[2 * u..]);

        let mut dr = vec![0.0; 3 * u];
        let mut db = vec![0.0; 4 * u];
        let mut dxs = vec![0.0; t_n * d];

        let mut dh_next = vec![0.0; u];
        let mut dc_next = vec![0.0; u];
        // pre-activation gradients of every step, [T, 4U]
        let mut da_all = vec![0.0; t_n * 4 * u];
        let q = cell.recurrent_weights.values();
        for t in (0..t_n).rev() {
            let at = |v: &[f64], k: usize| v[t * u + k];
            let c_prev = &cache.cs[t * u..(t + 1) * u];
            let c_now = &cache.cs[(t + 1) * u..(t + 2) * u];
            let da = &mut da_all[t * 4 * u..(t + 1) * 4 * u];
            for k in 0..u {
                let dh = dh_next[k]
                    + if self.return_sequences {
                        dout.values()[k * t_n + t]
                    } else if t + 1 == t_n {
                        dout.values()[k]
                    } else {
                        0.0
                    };
                let (i, f, g, o) = (at(&cache.gi, k), at(&cache.gf, k), at(&cache.gc, k), at(&cache.go, k));
                let tc = c_now[k].tanh();
                let da_o = dh * tc * o * (1.0 - o);
                let mut dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                if peep {
                    dc += da_o * r_o[k];
                }
                let da_i = dc * g * i * (1.0 - i);
                let da_f = dc * c_prev[k] * f * (1.0 - f);
                let da_c = dc * i * (1.0 - g * g);
                let mut dcp = dc * f;
                if peep {
                    dcp += da_i * r_i[k] + da_f * r_f[k];
                    dr[k] += da_i * c_prev[k];
                    dr[u + k] += da_f * c_prev[k];
                    dr[2 * u + k] += da_o * c_now[k];
                }
                dc_next[k] = dcp;
                da[GATE_I * u + k] = da_i;
                da[GATE_F * u + k] = da_f;
                da[GATE_C * u + k] = da_c;
                da[GATE_O * u + k] = da_o;
            }
            // only the recurrent path is needed before the next (earlier) step
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (row, &a) in da.iter().enumerate() {
                if a != 0.0 {
                    axpy(&mut dh_next, a, &q[row * u..(row + 1) * u]);
                }
            }
        }

        // the remaining products do not depend on step order; accumulate
        // dP and dQ transposed so every update is a long contiguous sweep
        let rows = 4 * u;
        let pt = transpose(cell.input_weights.values(), rows, d);
        let mut dpt = vec![0.0; d * rows];
        let mut dqt = vec![0.0; u * rows];
        for t in 0..t_n {
            let da = &da_all[t * rows..(t + 1) * rows];
            axpy(&mut db, 1.0, da);
            for (j, &x) in cache.xs[t * d..(t + 1) * d].iter().enumerate() {
                axpy(&mut dpt[j * rows..(j + 1) * rows], x, da);
                dxs[t * d + j] = dot(&pt[j * rows..(j + 1) * rows], da);
            }
            for (j, &h) in cache.hs[t * u..(t + 1) * u].iter().enumerate() {
                axpy(&mut dqt[j * rows..(j + 1) * rows], h, da);
            }
        }
        let dp = transpose(&dpt, d, rows);
        let dq = transpose(&dqt, u, rows);

        for (g, v) in self.cell.input_weights.grad_mut().iter_mut().zip(&dp) {
            *g += v;
        }
        for (g, v) in self.cell.recurrent_weights.grad_mut().iter_mut().zip(&dq) {
            *g += v;
        }
        if peep {
            for (g, v) in self.cell.peephole.grad_mut().iter_mut().zip(&dr) {
                *g += v;
            }
        }
        for (g, v) in self.cell.bias.grad_mut().iter_mut().zip(&db) {
            *g += v;
        }

        let mut dx = vec![0.0; d * t_n];
        for t in 0..t_n {
            for f in 0..d {
                dx[f * t_n + t] = dxs[t * d + f];
            }
        }
        Tensor::new(&[d, t_n], dx).expect("input gradient shape")
    }
}
