//! Four-gate LSTM cell and the bidirectional wrapper.
//!
//! Gate pre-activations are packed in the order input, forget, output,
//! candidate: rows `[0, H)` of the kernel belong to the input gate, `[H, 2H)`
//! to the forget gate and so on.
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)    f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)    g = tanh(W_g x + U_g h + b_g)
//! c' = f ⊙ c + i ⊙ g            h' = o ⊙ tanh(c')
//! ```

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::scalar::{sigmoid, Scalar};

/// Borrowed weights of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell<'a, T> {
    /// `[4H][D]`
    pub kernel: &'a [T],
    /// `[4H][H]`
    pub recurrent: &'a [T],
    /// `[4H]`
    pub bias: &'a [T],
    pub input_size: usize,
    pub hidden: usize,
}

/// Owned LSTM weights, mostly for tests and tooling.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams<T> {
    pub kernel: Vec<T>,
    pub recurrent: Vec<T>,
    pub bias: Vec<T>,
    pub input_size: usize,
    pub hidden: usize,
}

impl<T: Scalar> LstmCellParams<T> {
    pub fn zeros(input_size: usize, hidden: usize) -> Self {
        Self {
            kernel: vec![T::zero(); 4 * hidden * input_size],
            recurrent: vec![T::zero(); 4 * hidden * hidden],
            bias: vec![T::zero(); 4 * hidden],
            input_size,
            hidden,
        }
    }

    pub fn view(&self) -> LstmCell<'_, T> {
        LstmCell {
            kernel: &self.kernel,
            recurrent: &self.recurrent,
            bias: &self.bias,
            input_size: self.input_size,
            hidden: self.hidden,
        }
    }

    /// Mutable bias slice of one gate (0 = input, 1 = forget, 2 = output, 3 = candidate).
    pub fn gate_bias_mut(&mut self, gate: usize) -> &mut [T] {
        let h = self.hidden;
        &mut self.bias[gate * h..(gate + 1) * h]
    }
}

impl<T: Scalar> LstmCell<'_, T> {
    fn check(&self, x: &[T], h_prev: &[T], c_prev: &[T]) -> Result<(), NnError> {
        let (d, h) = (self.input_size, self.hidden);
        if self.kernel.len() != 4 * h * d || self.recurrent.len() != 4 * h * h || self.bias.len() != 4 * h {
            return Err(NnError::ShapeMismatch(format!("LSTM weights inconsistent with D={d}, H={h}")));
        }
        if x.len() != d || h_prev.len() != h || c_prev.len() != h {
            return Err(NnError::ShapeMismatch(format!(
                "LSTM step expects x[{d}], h[{h}], c[{h}]; got x[{}], h[{}], c[{}]",
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        Ok(())
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell_step<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    cell: &LstmCell<'_, T>,
) -> Result<(Vec<T>, Vec<T>), NnError> {
    cell.check(x, h_prev, c_prev)?;
    let step = step_forward(x, h_prev, c_prev, cell);
    Ok((step.h, step.c))
}

/// Activations kept for the backward pass of one step.
#[derive(Debug, Clone)]
pub(crate) struct StepCache<T> {
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates `[i | f | o | g]`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

pub(crate) fn step_forward<T: Scalar>(x: &[T], h_prev: &[T], c_prev: &[T], cell: &LstmCell<'_, T>) -> StepCache<T> {
    let (d, h) = (cell.input_size, cell.hidden);
    let mut gates = cell.bias.to_vec();
    for (r, z) in gates.iter_mut().enumerate() {
        let wrow = &cell.kernel[r * d..][..d];
        let urow = &cell.recurrent[r * h..][..h];
        let mut s = T::zero();
        for (&w, &v) in wrow.iter().zip(x) {
            s += w * v;
        }
        for (&u, &v) in urow.iter().zip(h_prev) {
            s += u * v;
        }
        *z += s;
    }
    for (r, z) in gates.iter_mut().enumerate() {
        *z = if r < 3 * h { sigmoid(*z) } else { z.tanh() };
    }
    let mut c = vec![T::zero(); h];
    let mut tanh_c = vec![T::zero(); h];
    let mut hn = vec![T::zero(); h];
    for j in 0..h {
        let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        hn[j] = o * tanh_c[j];
    }
    StepCache { h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, c, tanh_c, h: hn }
}

/// Gradient sinks for one LSTM direction.
pub(crate) struct LstmGrads<'a, T> {
    pub kernel: &'a mut [T],
    pub recurrent: &'a mut [T],
    pub bias: &'a mut [T],
}

/// Backpropagates through one step given `dh`/`dc` arriving at its outputs.
/// Accumulates weight gradients and `dx`; returns `(dh_prev, dc_prev)`.
pub(crate) fn step_backward<T: Scalar>(
    cache: &StepCache<T>,
    x: &[T],
    dh: &[T],
    dc: &[T],
    cell: &LstmCell<'_, T>,
    grads: &mut LstmGrads<'_, T>,
    dx: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let (d, h) = (cell.input_size, cell.hidden);
    let one = T::one();
    let mut dz = vec![T::zero(); 4 * h];
    let mut dc_prev = vec![T::zero(); h];
    for j in 0..h {
        let (i, f, o, g) = (cache.gates[j], cache.gates[h + j], cache.gates[2 * h + j], cache.gates[3 * h + j]);
        let tc = cache.tanh_c[j];
        let d_o = dh[j] * tc;
        let dct = dc[j] + dh[j] * o * (one - tc * tc);
        let di = dct * g;
        let dg = dct * i;
        let df = dct * cache.c_prev[j];
        dc_prev[j] = dct * f;
        dz[j] = di * i * (one - i);
        dz[h + j] = df * f * (one - f);
        dz[2 * h + j] = d_o * o * (one - o);
        dz[3 * h + j] = dg * (one - g * g);
    }
    let mut dh_prev = vec![T::zero(); h];
    for (r, &g) in dz.iter().enumerate() {
        grads.bias[r] += g;
        let wrow = &cell.kernel[r * d..][..d];
        let dwrow = &mut grads.kernel[r * d..][..d];
        for k in 0..d {
            dwrow[k] += g * x[k];
            dx[k] += g * wrow[k];
        }
        let urow = &cell.recurrent[r * h..][..h];
        let durow = &mut grads.recurrent[r * h..][..h];
        for k in 0..h {
            durow[k] += g * cache.h_prev[k];
            dh_prev[k] += g * urow[k];
        }
    }
    (dh_prev, dc_prev)
}

/// Runs one direction over `t` rows of `features` (row-major `t × D`) in the
/// given time order, starting from zero state.
pub(crate) fn run_direction<T: Scalar>(
    features: &[T],
    order: impl Iterator<Item = usize>,
    cell: &LstmCell<'_, T>,
) -> Vec<(usize, StepCache<T>)> {
    let (d, h) = (cell.input_size, cell.hidden);
    let mut hs = vec![T::zero(); h];
    let mut cs = vec![T::zero(); h];
    let mut out = Vec::new();
    for t in order {
        let step = step_forward(&features[t * d..][..d], &hs, &cs, cell);
        hs.clone_from(&step.h);
        cs.clone_from(&step.c);
        out.push((t, step));
    }
    out
}

/// Hidden trajectory of a unidirectional LSTM over `t × D` inputs.
pub fn lstm_forward_sequence<T: Scalar>(features: &[T], cell: &LstmCell<'_, T>) -> Result<Vec<Vec<T>>, NnError> {
    check_features(features, cell.input_size)?;
    let t = features.len() / cell.input_size;
    Ok(run_direction(features, 0..t, cell).into_iter().map(|(_, s)| s.h).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiMode {
    /// `T × 2H`: row `t` is `[h_t^f ; h_t^b]`.
    Sequence,
    /// `2H`: `[h_T^f ; h_1^b]`, the final state of each direction.
    Clip,
}

fn check_features<T>(features: &[T], d: usize) -> Result<(), NnError> {
    if d == 0 || features.is_empty() || !features.len().is_multiple_of(d) {
        return Err(NnError::ShapeMismatch(format!(
            "features of length {} are not a nonempty T×{d} matrix",
            features.len()
        )));
    }
    Ok(())
}

pub fn bilstm_forward<T: Scalar>(
    features: &[T],
    fwd: &LstmCell<'_, T>,
    bwd: &LstmCell<'_, T>,
    mode: BiMode,
) -> Result<Vec<T>, NnError> {
    check_features(features, fwd.input_size)?;
    if bwd.input_size != fwd.input_size || bwd.hidden != fwd.hidden {
        return Err(NnError::ShapeMismatch("forward and backward LSTM shapes differ".into()));
    }
    let d = fwd.input_size;
    let h = fwd.hidden;
    let t = features.len() / d;
    let f = run_direction(features, 0..t, fwd);
    let b = run_direction(features, (0..t).rev(), bwd);
    Ok(match mode {
        BiMode::Clip => {
            let mut out = f[t - 1].1.h.clone();
            out.extend_from_slice(&b[t - 1].1.h);
            out
        }
        BiMode::Sequence => {
            let mut out = vec![T::zero(); t * 2 * h];
            for (ti, s) in &f {
                out[ti * 2 * h..][..h].copy_from_slice(&s.h);
            }
            for (ti, s) in &b {
                out[ti * 2 * h + h..][..h].copy_from_slice(&s.h);
            }
            out
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_zero_hidden() {
        let p = LstmCellParams::<f64>::zeros(4, 3);
        let (h, c) = lstm_cell_step(&[1.0, -2.0, 3.0, 0.5], &[0.0; 3], &[0.0; 3], &p.view()).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_carries_cell_state() {
        let mut p = LstmCellParams::<f64>::zeros(2, 3);
        p.gate_bias_mut(1).fill(50.0);
        p.gate_bias_mut(0).fill(-50.0);
        let c_prev = [0.3, -0.7, 0.9];
        let (_, c) = lstm_cell_step(&[0.4, 0.1], &[0.2, 0.1, -0.3], &c_prev, &p.view()).unwrap();
        for (a, b) in c.iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        let p = LstmCellParams::<f32>::zeros(2, 3);
        assert!(matches!(
            lstm_cell_step(&[0.0; 3], &[0.0; 3], &[0.0; 3], &p.view()),
            Err(NnError::ShapeMismatch(_))
        ));
        assert!(bilstm_forward(&[0.0f32; 5], &p.view(), &p.view(), BiMode::Clip).is_err());
    }
}
