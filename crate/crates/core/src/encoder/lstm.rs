//! LSTM cell and batched sequence kernels with backpropagation through time.
//!
//! Sequences are laid out time-major as `[step][batch][feature]` so that the
//! input projection for a whole sequence is one matrix product and each
//! recurrent step touches a contiguous `batch × 4H` block. Gate blocks are
//! ordered input, forget, candidate, output.

use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{matmul_into, MatRef, Real, Tensor};

use super::uniform_init;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T: Real = f32> {
    /// `4H × I`
    pub wx: Tensor<T>,
    /// `4H × H`
    pub wh: Tensor<T>,
    /// `4H`
    pub b: Tensor<T>,
}

impl<T: Real> LstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wx: Tensor::zeros(&[4 * hidden, input]),
            wh: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Glorot-uniform weights, forget-gate bias 1, other biases 0.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        uniform_init(&mut p.wx, input, 4 * hidden, rng);
        uniform_init(&mut p.wh, hidden, 4 * hidden, rng);
        p.b.data_mut()[hidden..2 * hidden].fill(T::ONE);
        p
    }

    pub fn cast<U: Real>(&self) -> LstmParams<U> {
        LstmParams { wx: self.wx.cast(), wh: self.wh.cast(), b: self.b.cast() }
    }

    pub fn hidden(&self) -> usize {
        self.wh.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.wx.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let (g4, i) = self.wx.dims2()?;
        let (g4h, h) = self.wh.dims2()?;
        if h == 0 || i == 0 || g4 != 4 * h || g4h != g4 || self.b.shape() != [g4] {
            return Err(Error::dim(format!(
                "inconsistent LSTM parameters: wx {:?}, wh {:?}, b {:?}",
                self.wx.shape(),
                self.wh.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    pub fn tensors(&self) -> [&Tensor<T>; 3] {
        [&self.wx, &self.wh, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor<T>; 3] {
        [&mut self.wx, &mut self.wh, &mut self.b]
    }
}

/// One cell update for a single sample.
pub fn lstm_step<T: Real>(x: &[T], h: &[T], c: &[T], p: &LstmParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    p.validate()?;
    let (hid, inp) = (p.hidden(), p.input());
    if x.len() != inp || h.len() != hid || c.len() != hid {
        return Err(Error::dim(format!(
            "lstm_step got x[{}], h[{}], c[{}] for I={inp}, H={hid}",
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let mut z = p.b.data().to_vec();
    for (r, zr) in z.iter_mut().enumerate() {
        let wx = &p.wx.data()[r * inp..(r + 1) * inp];
        let wh = &p.wh.data()[r * hid..(r + 1) * hid];
        *zr += wx.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        *zr += wh.iter().zip(h).map(|(&a, &b)| a * b).sum::<T>();
    }
    let mut h_new = vec![T::ZERO; hid];
    let mut c_new = vec![T::ZERO; hid];
    for j in 0..hid {
        let i = z[j].sigmoid();
        let f = z[hid + j].sigmoid();
        let g = z[2 * hid + j].tanh();
        let o = z[3 * hid + j].sigmoid();
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * c_new[j].tanh();
    }
    Ok((h_new, c_new))
}

/// Activations retained from a batched sequence pass.
#[derive(Debug, Clone)]
pub struct LstmCache<T: Real = f32> {
    steps: usize,
    batch: usize,
    reverse: bool,
    x: Vec<T>,
    /// post-nonlinearity gates, `[step][batch][4H]`
    gates: Vec<T>,
    cells: Vec<T>,
    tanh_cells: Vec<T>,
    hidden: Vec<T>,
}

#[inline]
fn time_index(s: usize, steps: usize, reverse: bool) -> usize {
    if reverse {
        steps - 1 - s
    } else {
        s
    }
}

/// Runs the cell over `steps` time steps for `batch` independent sequences
/// starting from zero state. With `reverse`, steps are consumed from last to
/// first; outputs stay indexed by original time position.
///
/// Returns hidden states laid out `[step][batch][H]`.
pub fn lstm_sequence_forward<T: Real>(
    x: &[T],
    steps: usize,
    batch: usize,
    p: &LstmParams<T>,
    reverse: bool,
) -> Result<(Vec<T>, LstmCache<T>)> {
    p.validate()?;
    let (hid, inp) = (p.hidden(), p.input());
    let g4 = 4 * hid;
    let rows = steps * batch;
    if x.len() != rows * inp || rows == 0 {
        return Err(Error::dim(format!(
            "sequence buffer of {} values for {steps} steps × {batch} batch × {inp} inputs",
            x.len()
        )));
    }

    let mut gates = vec![T::ZERO; rows * g4];
    for row in gates.chunks_exact_mut(g4) {
        row.copy_from_slice(p.b.data());
    }
    matmul_into(MatRef::new(x, rows, inp), MatRef::new(p.wx.data(), g4, inp).t(), T::ONE, &mut gates);

    let mut cells = vec![T::ZERO; rows * hid];
    let mut tanh_cells = vec![T::ZERO; rows * hid];
    let mut hidden = vec![T::ZERO; rows * hid];
    let wh_t = MatRef::new(p.wh.data(), g4, hid).t();

    for s in 0..steps {
        let t = time_index(s, steps, reverse);
        let prev = (s > 0).then(|| time_index(s - 1, steps, reverse));
        let block = &mut gates[t * batch * g4..(t + 1) * batch * g4];
        if let Some(tp) = prev {
            let hp = &hidden[tp * batch * hid..(tp + 1) * batch * hid];
            matmul_into(MatRef::new(hp, batch, hid), wh_t, T::ONE, block);
        }
        for b in 0..batch {
            let z = &mut block[b * g4..(b + 1) * g4];
            let row = (t * batch + b) * hid;
            for j in 0..hid {
                let i = z[j].sigmoid();
                let f = z[hid + j].sigmoid();
                let g = z[2 * hid + j].tanh();
                let o = z[3 * hid + j].sigmoid();
                z[j] = i;
                z[hid + j] = f;
                z[2 * hid + j] = g;
                z[3 * hid + j] = o;
                let c_prev = prev.map_or(T::ZERO, |tp| cells[(tp * batch + b) * hid + j]);
                let c = f * c_prev + i * g;
                let tc = c.tanh();
                cells[row + j] = c;
                tanh_cells[row + j] = tc;
                hidden[row + j] = o * tc;
            }
        }
    }
    if !hidden.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("LSTM hidden state".into()));
    }

    let cache = LstmCache { steps, batch, reverse, x: x.to_vec(), gates, cells, tanh_cells, hidden: hidden.clone() };
    Ok((hidden, cache))
}

/// Backpropagates `d_hidden` (gradient of the loss with respect to every
/// output hidden state, `[step][batch][H]`) through the sequence.
///
/// Returns the input gradient (`[step][batch][I]`) and parameter gradients.
pub fn lstm_sequence_backward<T: Real>(
    cache: &LstmCache<T>,
    p: &LstmParams<T>,
    d_hidden: &[T],
) -> Result<(Vec<T>, LstmParams<T>)> {
    let (hid, inp) = (p.hidden(), p.input());
    let g4 = 4 * hid;
    let (steps, batch, reverse) = (cache.steps, cache.batch, cache.reverse);
    let rows = steps * batch;
    if d_hidden.len() != rows * hid || cache.x.len() != rows * inp {
        return Err(Error::dim(format!(
            "LSTM backward got {} upstream values, expected {}",
            d_hidden.len(),
            rows * hid
        )));
    }

    let mut dz = vec![T::ZERO; rows * g4];
    let mut dh_next = vec![T::ZERO; batch * hid];
    let mut dc_next = vec![T::ZERO; batch * hid];
    let one = T::ONE;

    for s in (0..steps).rev() {
        let t = time_index(s, steps, reverse);
        let prev = (s > 0).then(|| time_index(s - 1, steps, reverse));
        for b in 0..batch {
            let row = (t * batch + b) * hid;
            let a = &cache.gates[(t * batch + b) * g4..(t * batch + b + 1) * g4];
            let d = &mut dz[(t * batch + b) * g4..(t * batch + b + 1) * g4];
            for j in 0..hid {
                let (i, f, g, o) = (a[j], a[hid + j], a[2 * hid + j], a[3 * hid + j]);
                let tc = cache.tanh_cells[row + j];
                let dh = d_hidden[row + j] + dh_next[b * hid + j];
                let d_o = dh * tc;
                let dc = dh * o * (one - tc * tc) + dc_next[b * hid + j];
                let c_prev = prev.map_or(T::ZERO, |tp| cache.cells[(tp * batch + b) * hid + j]);
                dc_next[b * hid + j] = dc * f;
                d[j] = dc * g * i * (one - i);
                d[hid + j] = dc * c_prev * f * (one - f);
                d[2 * hid + j] = dc * i * (one - g * g);
                d[3 * hid + j] = d_o * o * (one - o);
            }
        }
        if prev.is_some() {
            let block = &dz[t * batch * g4..(t + 1) * batch * g4];
            matmul_into(
                MatRef::new(block, batch, g4),
                MatRef::new(p.wh.data(), g4, hid),
                T::ZERO,
                &mut dh_next,
            );
        }
    }

    let mut grads = LstmParams::zeros(inp, hid);
    matmul_into(
        MatRef::new(&dz, rows, g4).t(),
        MatRef::new(&cache.x, rows, inp),
        T::ZERO,
        grads.wx.data_mut(),
    );

    // hidden state each step consumed, aligned with that step's gates
    let mut h_prev = vec![T::ZERO; rows * hid];
    for s in 1..steps {
        let t = time_index(s, steps, reverse);
        let tp = time_index(s - 1, steps, reverse);
        h_prev[t * batch * hid..(t + 1) * batch * hid]
            .copy_from_slice(&cache.hidden[tp * batch * hid..(tp + 1) * batch * hid]);
    }
    matmul_into(MatRef::new(&dz, rows, g4).t(), MatRef::new(&h_prev, rows, hid), T::ZERO, grads.wh.data_mut());

    let db = grads.b.data_mut();
    for row in dz.chunks_exact(g4) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }

    let mut dx = vec![T::ZERO; rows * inp];
    matmul_into(MatRef::new(&dz, rows, g4), MatRef::new(p.wx.data(), g4, inp), T::ZERO, &mut dx);
    Ok((dx, grads))
}
