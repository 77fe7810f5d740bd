//! Instance encoder: two 1-D convolutions, then a global-average-pool branch
//! and a gated-recurrent branch over the conv output, concatenated and
//! projected to `d` features. Forward and exact reverse-mode gradients.
//!
//! Convolutions use "same" zero padding (left pad `(k - 1) / 2`), so the
//! temporal length stays `W` through both layers. The recurrent cell is the
//! reset/update formulation:
//!
//! ```text
//! r  = sigmoid(Wi_r u + bi_r + Wh_r h + bh_r)
//! z  = sigmoid(Wi_z u + bi_z + Wh_z h + bh_z)
//! n  = tanh(Wi_n u + bi_n + r * (Wh_n h + bh_n))
//! h' = (1 - z) * n + z * h
//! ```

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const CONV1_FILTERS: usize = 32;
pub const CONV1_WIDTH: usize = 8;
pub const CONV2_FILTERS: usize = 32;
pub const CONV2_WIDTH: usize = 5;
pub const HIDDEN: usize = 32;
pub const DEFAULT_FEATURE_DIM: usize = 64;
const CONCAT: usize = CONV2_FILTERS + HIDDEN;
const GATES: usize = 3;

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub conv1_w: Range<usize>,
    pub conv1_b: Range<usize>,
    pub conv2_w: Range<usize>,
    pub conv2_b: Range<usize>,
    pub gru_wi: Range<usize>,
    pub gru_wh: Range<usize>,
    pub gru_bi: Range<usize>,
    pub gru_bh: Range<usize>,
    pub proj_w: Range<usize>,
    pub proj_b: Range<usize>,
}

impl Layout {
    pub fn new(channels: usize, feature_dim: usize) -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Layout {
            conv1_w: take(CONV1_FILTERS * channels * CONV1_WIDTH),
            conv1_b: take(CONV1_FILTERS),
            conv2_w: take(CONV2_FILTERS * CONV1_FILTERS * CONV2_WIDTH),
            conv2_b: take(CONV2_FILTERS),
            gru_wi: take(GATES * HIDDEN * CONV2_FILTERS),
            gru_wh: take(GATES * HIDDEN * HIDDEN),
            gru_bi: take(GATES * HIDDEN),
            gru_bh: take(GATES * HIDDEN),
            proj_w: take(feature_dim * CONCAT),
            proj_b: take(feature_dim),
        }
    }

    pub fn total(&self) -> usize {
        self.proj_b.end
    }

    fn blocks(&self) -> [(&'static str, Range<usize>); 10] {
        [
            ("conv1.weight", self.conv1_w.clone()),
            ("conv1.bias", self.conv1_b.clone()),
            ("conv2.weight", self.conv2_w.clone()),
            ("conv2.bias", self.conv2_b.clone()),
            ("gru.weight_input", self.gru_wi.clone()),
            ("gru.weight_hidden", self.gru_wh.clone()),
            ("gru.bias_input", self.gru_bi.clone()),
            ("gru.bias_hidden", self.gru_bh.clone()),
            ("proj.weight", self.proj_w.clone()),
            ("proj.bias", self.proj_b.clone()),
        ]
    }
}

/// Encoder weights as one flat vector; also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub channels: usize,
    pub feature_dim: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSummary {
    pub blocks: Vec<(&'static str, usize)>,
    pub total: usize,
}

impl EncoderParams {
    pub fn zeros(channels: usize, feature_dim: usize) -> Self {
        let n = Layout::new(channels, feature_dim).total();
        EncoderParams {
            channels,
            feature_dim,
            values: vec![0.0; n],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer. The recurrent
    /// cell uses the hidden size as fan-in for all of its tensors.
    pub fn init(channels: usize, feature_dim: usize, rng: &mut SeededRng) -> Self {
        let mut p = EncoderParams::zeros(channels, feature_dim);
        let l = p.layout();
        let fans = [
            (l.conv1_w.start..l.conv1_b.end, channels * CONV1_WIDTH),
            (l.conv2_w.start..l.conv2_b.end, CONV1_FILTERS * CONV2_WIDTH),
            (l.gru_wi.start..l.gru_bh.end, HIDDEN),
            (l.proj_w.start..l.proj_b.end, CONCAT),
        ];
        for (range, fan_in) in fans {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p.values[range] {
                *v = rng.uniform_range(-bound, bound);
            }
        }
        p
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.channels, self.feature_dim)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn describe(&self) -> ParamSummary {
        let layout = self.layout();
        ParamSummary {
            blocks: layout.blocks().into_iter().map(|(n, r)| (n, r.len())).collect(),
            total: layout.total(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        EncoderParams::zeros(self.channels, self.feature_dim)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace {
    width: usize,
    input: Vec<f64>,
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    // per step: hidden state entering the step, gates r, z, n and Wh_n h + bh_n
    hidden: Vec<f64>,
    gate_r: Vec<f64>,
    gate_z: Vec<f64>,
    gate_n: Vec<f64>,
    hn: Vec<f64>,
    concat: Vec<f64>,
    output: Vec<f64>,
}

impl EncoderTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn into_output(self) -> Vec<f64> {
        self.output
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_window(window: &[Vec<f64>], params: &EncoderParams) -> Result<usize> {
    if window.len() != params.channels {
        return Err(Error::Shape(format!(
            "window has {} channels, encoder expects {}",
            window.len(),
            params.channels
        )));
    }
    let width = window[0].len();
    if window.iter().any(|row| row.len() != width) {
        return Err(Error::Shape("window rows have unequal lengths".into()));
    }
    if width < CONV1_WIDTH {
        return Err(Error::Shape(format!(
            "window width {width} shorter than first kernel width {CONV1_WIDTH}"
        )));
    }
    Ok(width)
}

/// `out[o][t] = bias[o] + sum_{c,k} w[o][c][k] * x[c][t + k - pad]`
fn conv_forward(
    x: &[f64],
    in_ch: usize,
    width: usize,
    w: &[f64],
    b: &[f64],
    out_ch: usize,
    kernel: usize,
    out: &mut [f64],
) {
    let pad = (kernel - 1) / 2;
    for o in 0..out_ch {
        let row = &mut out[o * width..(o + 1) * width];
        row.fill(b[o]);
        for c in 0..in_ch {
            let xs = &x[c * width..(c + 1) * width];
            let ws = &w[(o * in_ch + c) * kernel..(o * in_ch + c + 1) * kernel];
            for (k, &wk) in ws.iter().enumerate() {
                // t + k - pad in [0, width)
                let t_lo = pad.saturating_sub(k);
                let t_hi = (width + pad).saturating_sub(k).min(width);
                for t in t_lo..t_hi {
                    row[t] += wk * xs[t + k - pad];
                }
            }
        }
    }
}

fn conv_backward(
    x: &[f64],
    in_ch: usize,
    width: usize,
    w: &[f64],
    out_ch: usize,
    kernel: usize,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let pad = (kernel - 1) / 2;
    let mut dx = dx;
    for o in 0..out_ch {
        let drow = &dout[o * width..(o + 1) * width];
        db[o] += drow.iter().sum::<f64>();
        for c in 0..in_ch {
            let xs = &x[c * width..(c + 1) * width];
            let base = (o * in_ch + c) * kernel;
            for k in 0..kernel {
                let t_lo = pad.saturating_sub(k);
                let t_hi = (width + pad).saturating_sub(k).min(width);
                let mut acc = 0.0;
                for t in t_lo..t_hi {
                    acc += drow[t] * xs[t + k - pad];
                }
                dw[base + k] += acc;
                if let Some(dx) = dx.as_deref_mut() {
                    let wk = w[base + k];
                    let dxs = &mut dx[c * width..(c + 1) * width];
                    for t in t_lo..t_hi {
                        dxs[t + k - pad] += drow[t] * wk;
                    }
                }
            }
        }
    }
}

/// `y += A x` with `A` row-major `rows x cols`.
fn matvec_add(a: &[f64], x: &[f64], rows: usize, cols: usize, y: &mut [f64]) {
    for (i, yi) in y.iter_mut().enumerate().take(rows) {
        let row = &a[i * cols..(i + 1) * cols];
        *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `dx += A^T dy`, `dA += dy x^T`.
fn matvec_backward(
    a: &[f64],
    x: &[f64],
    dy: &[f64],
    rows: usize,
    cols: usize,
    da: &mut [f64],
    dx: &mut [f64],
) {
    for i in 0..rows {
        let g = dy[i];
        if g == 0.0 {
            continue;
        }
        let row = &a[i * cols..(i + 1) * cols];
        let drow = &mut da[i * cols..(i + 1) * cols];
        for j in 0..cols {
            drow[j] += g * x[j];
            dx[j] += g * row[j];
        }
    }
}

pub fn forward_trace(window: &[Vec<f64>], params: &EncoderParams) -> Result<EncoderTrace> {
    let width = check_window(window, params)?;
    let l = params.layout();
    let p = &params.values;
    let m = params.channels;

    let input: Vec<f64> = window.iter().flat_map(|r| r.iter().copied()).collect();

    let mut z1 = vec![0.0; CONV1_FILTERS * width];
    conv_forward(
        &input,
        m,
        width,
        &p[l.conv1_w.clone()],
        &p[l.conv1_b.clone()],
        CONV1_FILTERS,
        CONV1_WIDTH,
        &mut z1,
    );
    let h1: Vec<f64> = z1.iter().map(|&v| v.max(0.0)).collect();

    let mut z2 = vec![0.0; CONV2_FILTERS * width];
    conv_forward(
        &h1,
        CONV1_FILTERS,
        width,
        &p[l.conv2_w.clone()],
        &p[l.conv2_b.clone()],
        CONV2_FILTERS,
        CONV2_WIDTH,
        &mut z2,
    );
    let h2: Vec<f64> = z2.iter().map(|&v| v.max(0.0)).collect();

    let mut concat = vec![0.0; CONCAT];
    for o in 0..CONV2_FILTERS {
        concat[o] = h2[o * width..(o + 1) * width].iter().sum::<f64>() / width as f64;
    }

    let wi = &p[l.gru_wi.clone()];
    let wh = &p[l.gru_wh.clone()];
    let bi = &p[l.gru_bi.clone()];
    let bh = &p[l.gru_bh.clone()];
    let block = HIDDEN * CONV2_FILTERS;
    let hblock = HIDDEN * HIDDEN;

    let mut hidden = vec![0.0; (width + 1) * HIDDEN];
    let mut gate_r = vec![0.0; width * HIDDEN];
    let mut gate_z = vec![0.0; width * HIDDEN];
    let mut gate_n = vec![0.0; width * HIDDEN];
    let mut hn_all = vec![0.0; width * HIDDEN];
    let mut u = vec![0.0; CONV2_FILTERS];
    for t in 0..width {
        for (c, uc) in u.iter_mut().enumerate() {
            *uc = h2[c * width + t];
        }
        let (before, after) = hidden.split_at_mut((t + 1) * HIDDEN);
        let h = &before[t * HIDDEN..];
        let h_next = &mut after[..HIDDEN];

        let mut ar = bi[..HIDDEN].to_vec();
        let mut az = bi[HIDDEN..2 * HIDDEN].to_vec();
        let mut an = bi[2 * HIDDEN..].to_vec();
        matvec_add(&wi[..block], &u, HIDDEN, CONV2_FILTERS, &mut ar);
        matvec_add(&wi[block..2 * block], &u, HIDDEN, CONV2_FILTERS, &mut az);
        matvec_add(&wi[2 * block..], &u, HIDDEN, CONV2_FILTERS, &mut an);
        for i in 0..HIDDEN {
            ar[i] += bh[i];
            az[i] += bh[HIDDEN + i];
        }
        matvec_add(&wh[..hblock], h, HIDDEN, HIDDEN, &mut ar);
        matvec_add(&wh[hblock..2 * hblock], h, HIDDEN, HIDDEN, &mut az);
        let mut hn = bh[2 * HIDDEN..].to_vec();
        matvec_add(&wh[2 * hblock..], h, HIDDEN, HIDDEN, &mut hn);

        let s = t * HIDDEN;
        for i in 0..HIDDEN {
            let r = sigmoid(ar[i]);
            let z = sigmoid(az[i]);
            let n = (an[i] + r * hn[i]).tanh();
            gate_r[s + i] = r;
            gate_z[s + i] = z;
            gate_n[s + i] = n;
            hn_all[s + i] = hn[i];
            h_next[i] = (1.0 - z) * n + z * h[i];
        }
    }
    concat[CONV2_FILTERS..].copy_from_slice(&hidden[width * HIDDEN..]);

    let d = params.feature_dim;
    let mut output = p[l.proj_b.clone()].to_vec();
    matvec_add(&p[l.proj_w.clone()], &concat, d, CONCAT, &mut output);

    Ok(EncoderTrace {
        width,
        input,
        z1,
        h1,
        z2,
        h2,
        hidden,
        gate_r,
        gate_z,
        gate_n,
        hn: hn_all,
        concat,
        output,
    })
}

/// Maps an `M x W` window to a `d`-dimensional feature vector.
pub fn encode(window: &[Vec<f64>], params: &EncoderParams) -> Result<Vec<f64>> {
    forward_trace(window, params).map(EncoderTrace::into_output)
}

/// Accumulates `d(upstream . output)/d(params)` into `grads` and returns the
/// input gradient, flattened channel-major.
pub fn backward_into(
    trace: &EncoderTrace,
    params: &EncoderParams,
    upstream: &[f64],
    grads: &mut EncoderParams,
) -> Result<Vec<f64>> {
    if upstream.len() != params.feature_dim {
        return Err(Error::Shape(format!(
            "upstream gradient has length {}, expected {}",
            upstream.len(),
            params.feature_dim
        )));
    }
    if grads.values.len() != params.values.len() {
        return Err(Error::Shape("gradient buffer does not match parameters".into()));
    }
    let l = params.layout();
    let p = &params.values;
    let g = &mut grads.values;
    let width = trace.width;
    let m = params.channels;
    let d = params.feature_dim;

    // projection
    for j in 0..d {
        g[l.proj_b.start + j] += upstream[j];
    }
    let mut dconcat = vec![0.0; CONCAT];
    matvec_backward(
        &p[l.proj_w.clone()],
        &trace.concat,
        upstream,
        d,
        CONCAT,
        &mut g[l.proj_w.clone()],
        &mut dconcat,
    );

    // pooling branch
    let mut dh2 = vec![0.0; CONV2_FILTERS * width];
    for o in 0..CONV2_FILTERS {
        let share = dconcat[o] / width as f64;
        dh2[o * width..(o + 1) * width].fill(share);
    }

    // recurrent branch, reverse time
    let block = HIDDEN * CONV2_FILTERS;
    let hblock = HIDDEN * HIDDEN;
    let mut dh = dconcat[CONV2_FILTERS..].to_vec();
    let mut u = vec![0.0; CONV2_FILTERS];
    let mut du = vec![0.0; CONV2_FILTERS];
    let mut dh_prev = vec![0.0; HIDDEN];
    let mut da_r = vec![0.0; HIDDEN];
    let mut da_z = vec![0.0; HIDDEN];
    let mut da_n = vec![0.0; HIDDEN];
    let mut dhn = vec![0.0; HIDDEN];
    for t in (0..width).rev() {
        let s = t * HIDDEN;
        let h_prev = &trace.hidden[s..s + HIDDEN];
        for (c, uc) in u.iter_mut().enumerate() {
            *uc = trace.h2[c * width + t];
        }
        for i in 0..HIDDEN {
            let r = trace.gate_r[s + i];
            let z = trace.gate_z[s + i];
            let n = trace.gate_n[s + i];
            let dn = dh[i] * (1.0 - z);
            let dz = dh[i] * (h_prev[i] - n);
            dh_prev[i] = dh[i] * z;
            da_n[i] = dn * (1.0 - n * n);
            let dr = da_n[i] * trace.hn[s + i];
            dhn[i] = da_n[i] * r;
            da_z[i] = dz * z * (1.0 - z);
            da_r[i] = dr * r * (1.0 - r);
        }
        du.fill(0.0);
        let (wi_g, wh_g) = (l.gru_wi.start, l.gru_wh.start);
        for (gate, da) in [(0usize, &da_r), (1, &da_z), (2, &da_n)] {
            let wi_r = l.gru_wi.start + gate * block..l.gru_wi.start + (gate + 1) * block;
            matvec_backward(
                &p[wi_r.clone()],
                &u,
                da,
                HIDDEN,
                CONV2_FILTERS,
                &mut g[wi_g + gate * block..wi_g + (gate + 1) * block],
                &mut du,
            );
            for i in 0..HIDDEN {
                g[l.gru_bi.start + gate * HIDDEN + i] += da[i];
            }
        }
        for (gate, da) in [(0usize, &da_r), (1, &da_z), (2, &dhn)] {
            let wh_r = l.gru_wh.start + gate * hblock..l.gru_wh.start + (gate + 1) * hblock;
            matvec_backward(
                &p[wh_r.clone()],
                h_prev,
                da,
                HIDDEN,
                HIDDEN,
                &mut g[wh_g + gate * hblock..wh_g + (gate + 1) * hblock],
                &mut dh_prev,
            );
            for i in 0..HIDDEN {
                g[l.gru_bh.start + gate * HIDDEN + i] += da[i];
            }
        }
        for c in 0..CONV2_FILTERS {
            dh2[c * width + t] += du[c];
        }
        dh.copy_from_slice(&dh_prev);
    }

    // conv2
    let dz2: Vec<f64> = dh2
        .iter()
        .zip(&trace.z2)
        .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
        .collect();
    let mut dh1 = vec![0.0; CONV1_FILTERS * width];
    {
        let (lo, hi) = g.split_at_mut(l.conv2_b.start);
        conv_backward(
            &trace.h1,
            CONV1_FILTERS,
            width,
            &p[l.conv2_w.clone()],
            CONV2_FILTERS,
            CONV2_WIDTH,
            &dz2,
            &mut lo[l.conv2_w.clone()],
            &mut hi[..CONV2_FILTERS],
            Some(&mut dh1),
        );
    }

    // conv1
    let dz1: Vec<f64> = dh1
        .iter()
        .zip(&trace.z1)
        .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
        .collect();
    let mut dx = vec![0.0; m * width];
    {
        let (lo, hi) = g.split_at_mut(l.conv1_b.start);
        conv_backward(
            &trace.input,
            m,
            width,
            &p[l.conv1_w.clone()],
            CONV1_FILTERS,
            CONV1_WIDTH,
            &dz1,
            &mut lo[l.conv1_w.clone()],
            &mut hi[..CONV1_FILTERS],
            Some(&mut dx),
        );
    }
    Ok(dx)
}

/// Exact gradients of `upstream . encode(window, params)` with respect to
/// every parameter and to the input window (`M x W`).
pub fn encode_backward(
    window: &[Vec<f64>],
    params: &EncoderParams,
    upstream: &[f64],
) -> Result<(EncoderParams, Vec<Vec<f64>>)> {
    let trace = forward_trace(window, params)?;
    let mut grads = params.zeros_like();
    let dx = backward_into(&trace, params, upstream, &mut grads)?;
    let width = trace.width;
    let input_grad = dx.chunks(width).map(<[f64]>::to_vec).collect();
    Ok((grads, input_grad))
}
