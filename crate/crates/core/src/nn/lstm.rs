//! LSTM cell, sequence forward pass, and backpropagation through time.
//!
//! Gate layout is a single stacked affine map: `z = W_ih·x + W_hh·h + b` with
//! `z` split into blocks `[i, f, g, o]` of `units` each, then
//! `c' = sigmoid(f)⊙c + sigmoid(i)⊙tanh(g)` and `h' = sigmoid(o)⊙tanh(c')`.
//! One shared bias vector (not the common pair) keeps the parameter count at
//! `4·(units·input + units² + units)`.

use super::layers::sigmoid;
use super::{NnError, Tensor};

/// Borrowed weight set for one LSTM layer.
pub struct LstmWeights<'a> {
    /// `[4·units, input_dim]`
    pub w_ih: &'a Tensor,
    /// `[4·units, units]`
    pub w_hh: &'a Tensor,
    /// `[4·units]`, gate order i, f, g, o
    pub bias: &'a Tensor,
    pub units: usize,
}

impl LstmWeights<'_> {
    fn input_dim(&self) -> usize {
        self.w_ih.shape()[1]
    }

    fn check(&self, x_len: usize, h_len: usize, c_len: usize) -> Result<(), NnError> {
        let u = self.units;
        let d = self.input_dim();
        let ok = self.w_ih.shape() == [4 * u, d]
            && self.w_hh.shape() == [4 * u, u]
            && self.bias.shape() == [4 * u]
            && x_len == d
            && h_len == u
            && c_len == u;
        if ok {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch {
                context: format!(
                    "lstm_step: units={}, input_dim={}, got x[{}] h[{}] c[{}]",
                    u, d, x_len, h_len, c_len
                ),
            })
        }
    }
}

/// Gate activations for one step, saved for BPTT.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(super) struct LstmCache {
    steps: Vec<StepCache>,
    units: usize,
    input_dim: usize,
    seq_len: usize,
}

fn step_raw(x: &[f64], h: &[f64], c: &[f64], w: &LstmWeights) -> StepCache {
    let u = w.units;
    let d = w.input_dim();
    let wih = w.w_ih.data();
    let whh = w.w_hh.data();
    let bias = w.bias.data();
    let mut z = bias.to_vec();
    for (row, zv) in z.iter_mut().enumerate() {
        let wx = &wih[row * d..(row + 1) * d];
        let wh = &whh[row * u..(row + 1) * u];
        *zv += wx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            + wh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>();
    }
    let i: Vec<f64> = z[0..u].iter().map(|v| sigmoid(*v)).collect();
    let f: Vec<f64> = z[u..2 * u].iter().map(|v| sigmoid(*v)).collect();
    let g: Vec<f64> = z[2 * u..3 * u].iter().map(|v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * u..4 * u].iter().map(|v| sigmoid(*v)).collect();
    let c_new: Vec<f64> = (0..u).map(|j| f[j] * c[j] + i[j] * g[j]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..u).map(|j| o[j] * tanh_c[j]).collect();
    StepCache {
        x: x.to_vec(),
        i,
        f,
        g,
        o,
        c: c_new,
        tanh_c,
        h: h_new,
    }
}

/// One LSTM cell update: `(x, h, c) -> (h', c')`.
pub fn lstm_step(
    x: &Tensor,
    h: &Tensor,
    c: &Tensor,
    w: &LstmWeights,
) -> Result<(Tensor, Tensor), NnError> {
    w.check(x.numel(), h.numel(), c.numel())?;
    let step = step_raw(x.data(), h.data(), c.data(), w);
    Ok((Tensor::from_vec(step.h), Tensor::from_vec(step.c)))
}

/// Runs the cell over a `[input_dim, steps]` sequence from zero state and
/// returns the final hidden state `[units]`.
pub(super) fn lstm_forward(x: &Tensor, w: &LstmWeights) -> (Tensor, LstmCache) {
    let d = x.shape()[0];
    let steps = x.shape()[1];
    let u = w.units;
    let xd = x.data();
    let mut h = vec![0.0; u];
    let mut c = vec![0.0; u];
    let mut cache = LstmCache {
        steps: Vec::with_capacity(steps),
        units: u,
        input_dim: d,
        seq_len: steps,
    };
    for t in 0..steps {
        let x_t: Vec<f64> = (0..d).map(|ch| xd[ch * steps + t]).collect();
        let step = step_raw(&x_t, &h, &c, w);
        h = step.h.clone();
        c = step.c.clone();
        cache.steps.push(step);
    }
    (Tensor::from_vec(h), cache)
}

/// BPTT over the full sequence. `dh_last` is the loss gradient w.r.t. the
/// final hidden state. Returns `(dW_ih, dW_hh, db, dX)`.
pub(super) fn lstm_backward(
    w: &LstmWeights,
    cache: &LstmCache,
    dh_last: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor) {
    let u = cache.units;
    let d = cache.input_dim;
    let steps = cache.seq_len;
    let wih = w.w_ih.data();
    let whh = w.w_hh.data();
    let mut dw_ih = vec![0.0; 4 * u * d];
    let mut dw_hh = vec![0.0; 4 * u * u];
    let mut db = vec![0.0; 4 * u];
    let mut dx = vec![0.0; d * steps];
    let mut dh = dh_last.data().to_vec();
    let mut dc = vec![0.0; u];
    for t in (0..steps).rev() {
        let s = &cache.steps[t];
        let zeros = vec![0.0; u];
        let (h_prev, c_prev) = if t == 0 {
            (&zeros, &zeros)
        } else {
            (&cache.steps[t - 1].h, &cache.steps[t - 1].c)
        };
        // dz blocks in gate order i, f, g, o (pre-activation gradients).
        let mut dz = vec![0.0; 4 * u];
        for j in 0..u {
            let dct = dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]) + dc[j];
            dz[j] = dct * s.g[j] * s.i[j] * (1.0 - s.i[j]);
            dz[u + j] = dct * c_prev[j] * s.f[j] * (1.0 - s.f[j]);
            dz[2 * u + j] = dct * s.i[j] * (1.0 - s.g[j] * s.g[j]);
            dz[3 * u + j] = dh[j] * s.tanh_c[j] * s.o[j] * (1.0 - s.o[j]);
            dc[j] = dct * s.f[j];
        }
        for (row, &dzv) in dz.iter().enumerate() {
            if dzv == 0.0 {
                continue;
            }
            db[row] += dzv;
            for k in 0..d {
                dw_ih[row * d + k] += dzv * s.x[k];
            }
            for k in 0..u {
                dw_hh[row * u + k] += dzv * h_prev[k];
            }
        }
        // dh for the previous step and dx for this step.
        let mut dh_prev = vec![0.0; u];
        for (row, &dzv) in dz.iter().enumerate() {
            if dzv == 0.0 {
                continue;
            }
            for k in 0..u {
                dh_prev[k] += whh[row * u + k] * dzv;
            }
            for k in 0..d {
                dx[k * steps + t] += wih[row * d + k] * dzv;
            }
        }
        dh = dh_prev;
    }
    (
        Tensor::new(vec![4 * u, d], dw_ih).expect("lstm dW_ih"),
        Tensor::new(vec![4 * u, u], dw_hh).expect("lstm dW_hh"),
        Tensor::new(vec![4 * u], db).expect("lstm db"),
        Tensor::new(vec![d, steps], dx).expect("lstm dX"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights(u: usize, d: usize, fill: f64) -> (Tensor, Tensor, Tensor) {
        (
            Tensor::new(vec![4 * u, d], vec![fill; 4 * u * d]).unwrap(),
            Tensor::new(vec![4 * u, u], vec![fill; 4 * u * u]).unwrap(),
            Tensor::new(vec![4 * u], vec![fill; 4 * u]).unwrap(),
        )
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let (w_ih, w_hh, bias) = weights(3, 2, 0.0);
        let w = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            units: 3,
        };
        let x = Tensor::from_vec(vec![5.0, -2.0]);
        let h = Tensor::from_vec(vec![0.0; 3]);
        let c = Tensor::from_vec(vec![0.0; 3]);
        let (h2, c2) = lstm_step(&x, &h, &c, &w).unwrap();
        // tanh(0) = 0 makes the candidate zero, so c' = 0 and h' = 0.
        assert!(h2.data().iter().all(|v| *v == 0.0));
        assert!(c2.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_preserves_cell() {
        // f-gate bias +50 -> sigmoid ~ 1; i-gate bias -50 -> sigmoid ~ 0.
        let u = 2;
        let w_ih = Tensor::zeros(vec![4 * u, 1]);
        let w_hh = Tensor::zeros(vec![4 * u, u]);
        let mut bias = vec![0.0; 4 * u];
        bias[0..u].iter_mut().for_each(|b| *b = -50.0);
        bias[u..2 * u].iter_mut().for_each(|b| *b = 50.0);
        let bias = Tensor::new(vec![4 * u], bias).unwrap();
        let w = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            units: u,
        };
        let x = Tensor::from_vec(vec![0.7]);
        let h = Tensor::from_vec(vec![0.0; u]);
        let c = Tensor::from_vec(vec![0.4, -0.9]);
        let (_, c2) = lstm_step(&x, &h, &c, &w).unwrap();
        for (a, b) in c2.data().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-6, "c' {} vs c {}", a, b);
        }
    }

    #[test]
    fn single_unit_scalar_arithmetic() {
        // units=1, all weights 0.1, x=1, h=c=0. Computed step by step with
        // scalar f64 ops as the oracle.
        let (w_ih, w_hh, bias) = weights(1, 1, 0.1);
        let w = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            units: 1,
        };
        let x = Tensor::from_vec(vec![1.0]);
        let h = Tensor::from_vec(vec![0.0]);
        let c = Tensor::from_vec(vec![0.0]);
        let (h2, c2) = lstm_step(&x, &h, &c, &w).unwrap();

        let z = 0.1f64 * 1.0 + 0.1 * 0.0 + 0.1; // same for every gate
        let sig = 1.0 / (1.0 + (-z).exp());
        let expected_c = sig * 0.0 + sig * z.tanh();
        let expected_h = sig * expected_c.tanh();
        assert!((c2.data()[0] - expected_c).abs() < 1e-15);
        assert!((h2.data()[0] - expected_h).abs() < 1e-15);
    }

    #[test]
    fn step_rejects_bad_shapes() {
        let (w_ih, w_hh, bias) = weights(2, 3, 0.1);
        let w = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            units: 2,
        };
        let x = Tensor::from_vec(vec![1.0; 4]); // input_dim is 3
        let h = Tensor::from_vec(vec![0.0; 2]);
        let c = Tensor::from_vec(vec![0.0; 2]);
        assert!(lstm_step(&x, &h, &c, &w).is_err());
    }

    #[test]
    fn forward_matches_repeated_steps() {
        let (w_ih, w_hh, bias) = weights(2, 1, 0.2);
        let w = LstmWeights {
            w_ih: &w_ih,
            w_hh: &w_hh,
            bias: &bias,
            units: 2,
        };
        let x = Tensor::new(vec![1, 3], vec![0.5, -0.25, 1.0]).unwrap();
        let (h_seq, _) = lstm_forward(&x, &w);

        let mut h = Tensor::from_vec(vec![0.0; 2]);
        let mut c = Tensor::from_vec(vec![0.0; 2]);
        for v in [0.5, -0.25, 1.0] {
            let (h2, c2) = lstm_step(&Tensor::from_vec(vec![v]), &h, &c, &w).unwrap();
            h = h2;
            c = c2;
        }
        for (a, b) in h_seq.data().iter().zip(h.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
