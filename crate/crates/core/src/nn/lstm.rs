use super::{sigmoid, Matrix, ParamSet, Rng};
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

/// Weights of one LSTM cell. `w_*` are `[hidden × input]`, `u_*` are
/// `[hidden × hidden]`. Gates: forget (f), input (i), output (o) and the
/// candidate cell input (a).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_f: Matrix,
    pub w_i: Matrix,
    pub w_o: Matrix,
    pub w_a: Matrix,
    pub u_f: Matrix,
    pub u_i: Matrix,
    pub u_o: Matrix,
    pub u_a: Matrix,
    pub b_f: Vec<f64>,
    pub b_i: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_a: Vec<f64>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Matrix::zeros(hidden, input);
        let u = || Matrix::zeros(hidden, hidden);
        Self {
            w_f: w(),
            w_i: w(),
            w_o: w(),
            w_a: w(),
            u_f: u(),
            u_i: u(),
            u_o: u(),
            u_a: u(),
            b_f: vec![0.0; hidden],
            b_i: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_a: vec![0.0; hidden],
        }
    }

    /// Uniform `±1/sqrt(input + hidden)` initialization.
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        let bound = 1.0 / ((input + hidden).max(1) as f64).sqrt();
        for s in p.param_slices_mut() {
            for v in s.iter_mut() {
                *v = rng.gen_range(-bound..=bound);
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_f.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_f.rows
    }

    fn check(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
        let (n, h) = (self.input_dim(), self.hidden_dim());
        let ws = [&self.w_f, &self.w_i, &self.w_o, &self.w_a];
        let us = [&self.u_f, &self.u_i, &self.u_o, &self.u_a];
        let bs = [&self.b_f, &self.b_i, &self.b_o, &self.b_a];
        let consistent = ws.iter().all(|m| m.rows == h && m.cols == n)
            && us.iter().all(|m| m.rows == h && m.cols == h)
            && bs.iter().all(|b| b.len() == h);
        if !consistent || x.len() != n || h_prev.len() != h || c_prev.len() != h {
            return Err(Error::ModelShape(format!(
                "lstm cell in={n} hidden={h} given x={} h={} c={}",
                x.len(),
                h_prev.len(),
                c_prev.len()
            )));
        }
        Ok(())
    }

    fn gate(w: &Matrix, u: &Matrix, b: &[f64], x: &[f64], h: &[f64], act: fn(f64) -> f64) -> Vec<f64> {
        let mut z = b.to_vec();
        w.matvec_acc(x, &mut z);
        u.matvec_acc(h, &mut z);
        z.into_iter().map(act).collect()
    }

    pub fn forward_cached(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<LstmCache> {
        self.check(x, h_prev, c_prev)?;
        let f = Self::gate(&self.w_f, &self.u_f, &self.b_f, x, h_prev, sigmoid);
        let i = Self::gate(&self.w_i, &self.u_i, &self.b_i, x, h_prev, sigmoid);
        let o = Self::gate(&self.w_o, &self.u_o, &self.b_o, x, h_prev, sigmoid);
        let a = Self::gate(&self.w_a, &self.u_a, &self.b_a, x, h_prev, f64::tanh);
        let c: Vec<f64> = (0..f.len()).map(|k| f[k] * c_prev[k] + i[k] * a[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();
        Ok(LstmCache { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), f, i, o, a, c, tanh_c, h })
    }

    /// Backward through one step given upstream `dh` and `dc`. Accumulates
    /// into `grads`; returns `(dx, dh_prev, dc_prev)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        dh: &[f64],
        dc: &[f64],
        grads: &mut LstmCellParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = cache.f.len();
        let mut dz_f = vec![0.0; n];
        let mut dz_i = vec![0.0; n];
        let mut dz_o = vec![0.0; n];
        let mut dz_a = vec![0.0; n];
        let mut dc_prev = vec![0.0; n];
        for k in 0..n {
            let (f, i, o, a, t) = (cache.f[k], cache.i[k], cache.o[k], cache.a[k], cache.tanh_c[k]);
            let dc_total = dc[k] + dh[k] * o * (1.0 - t * t);
            dz_o[k] = dh[k] * t * o * (1.0 - o);
            dz_f[k] = dc_total * cache.c_prev[k] * f * (1.0 - f);
            dz_i[k] = dc_total * a * i * (1.0 - i);
            dz_a[k] = dc_total * i * (1.0 - a * a);
            dc_prev[k] = dc_total * f;
        }
        let mut dx = vec![0.0; self.input_dim()];
        let mut dh_prev = vec![0.0; n];
        let gates = [
            (&dz_f, &self.w_f, &self.u_f, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f),
            (&dz_i, &self.w_i, &self.u_i, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i),
            (&dz_o, &self.w_o, &self.u_o, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o),
            (&dz_a, &self.w_a, &self.u_a, &mut grads.w_a, &mut grads.u_a, &mut grads.b_a),
        ];
        for (dz, w, u, gw, gu, gb) in gates {
            gw.add_outer(dz, &cache.x, 1.0);
            gu.add_outer(dz, &cache.h_prev, 1.0);
            for (g, d) in gb.iter_mut().zip(dz.iter()) {
                *g += d;
            }
            w.matvec_t_acc(dz, &mut dx);
            u.matvec_t_acc(dz, &mut dh_prev);
        }
        (dx, dh_prev, dc_prev)
    }
}

impl ParamSet for LstmCellParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![
            &self.w_f.data,
            &self.w_i.data,
            &self.w_o.data,
            &self.w_a.data,
            &self.u_f.data,
            &self.u_i.data,
            &self.u_o.data,
            &self.u_a.data,
            &self.b_f,
            &self.b_i,
            &self.b_o,
            &self.b_a,
        ]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w_f.data,
            &mut self.w_i.data,
            &mut self.w_o.data,
            &mut self.w_a.data,
            &mut self.u_f.data,
            &mut self.u_i.data,
            &mut self.u_o.data,
            &mut self.u_a.data,
            &mut self.b_f,
            &mut self.b_i,
            &mut self.b_o,
            &mut self.b_a,
        ]
    }
}

/// One LSTM step: returns `(h_t, c_t)`.
pub fn lstm_cell(p: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let cache = p.forward_cached(x, h_prev, c_prev)?;
    Ok((cache.h, cache.c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_input_error, max_param_error};
    use crate::nn::seeded_rng;

    #[test]
    fn zero_params_halve_the_cell() {
        let p = LstmCellParams::zeros(2, 3);
        let v = [1.0, -2.0, 0.5];
        let (h, c) = lstm_cell(&p, &[0.3, 0.7], &[0.0; 3], &v).unwrap();
        for k in 0..3 {
            assert_eq!(c[k], 0.5 * v[k]);
            assert_eq!(h[k], 0.5 * (0.5 * v[k]).tanh());
        }
        let (h, c) = lstm_cell(&p, &[0.3, 0.7], &[0.0; 3], &[0.0; 3]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_carry_the_cell() {
        let mut p = LstmCellParams::new(2, 3, &mut seeded_rng(1));
        p.b_f = vec![40.0; 3];
        p.b_i = vec![-40.0; 3];
        let c_prev = [0.9, -0.4, 0.1];
        let (_, c) = lstm_cell(&p, &[0.2, -0.5], &[0.1, 0.1, 0.1], &c_prev).unwrap();
        for k in 0..3 {
            assert!((c[k] - c_prev[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn shape_errors() {
        let p = LstmCellParams::zeros(2, 3);
        assert!(lstm_cell(&p, &[1.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(lstm_cell(&p, &[1.0, 2.0], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = seeded_rng(7);
        for _ in 0..100 {
            let (n, h) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let p = LstmCellParams::new(n, h, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h0: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c0: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wh: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let wc: Vec<f64> = (0..h).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let loss = |p: &LstmCellParams, x: &[f64], h0: &[f64], c0: &[f64]| {
                let (h, c) = lstm_cell(p, x, h0, c0).unwrap();
                h.iter().zip(&wh).map(|(a, b)| a * b).sum::<f64>() + c.iter().zip(&wc).map(|(a, b)| a * b).sum::<f64>()
            };
            let cache = p.forward_cached(&x, &h0, &c0).unwrap();
            let mut g = p.zeros_like();
            let (dx, dh0, dc0) = p.backward(&cache, &wh, &wc, &mut g);
            assert!(max_param_error(&p, &g, |p| loss(p, &x, &h0, &c0)) < 1e-4);
            assert!(max_input_error(&x, &dx, |x| loss(&p, x, &h0, &c0)) < 1e-4);
            assert!(max_input_error(&h0, &dh0, |h| loss(&p, &x, h, &c0)) < 1e-4);
            assert!(max_input_error(&c0, &dc0, |c| loss(&p, &x, &h0, c)) < 1e-4);
        }
    }
}
