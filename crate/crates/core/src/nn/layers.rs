//! Layer kernels. The free functions are the pure forward maps; the layer
//! structs wrap them with parameters, training caches and backward passes.

use rand::Rng;

use super::linalg::{gemm, MatRef};
use super::{NnError, Result, Scalar, Tensor};

/// A trainable parameter with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![T::zero(); value.len()];
        Self { shape, value, grad }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

fn mismatch(msg: String) -> NnError {
    NnError::ShapeMismatch(msg)
}

/// Same-padded 1-D convolution. `weight` is `[kernel, in_channels, filters]`
/// and the left padding is `(kernel - 1) / 2`.
pub fn conv1d<T: Scalar>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    kernel: usize,
    filters: usize,
) -> Result<Tensor<T>> {
    let (b, l, c) = x.dims3()?;
    if kernel == 0 || weight.len() != kernel * c * filters || bias.len() != filters {
        return Err(mismatch(format!(
            "conv weights {} / bias {} do not fit kernel {kernel}, {c} channels, {filters} filters",
            weight.len(),
            bias.len()
        )));
    }
    let pl = (kernel - 1) / 2;
    let mut padded = vec![T::zero(); (l + kernel - 1) * c];
    let mut out = vec![T::zero(); b * l * filters];
    let w = MatRef::row_major(weight, kernel * c, filters);
    // Few filters make the output too narrow for the gemm kernel; compute
    // the transposed product instead.
    let transposed = filters < 32 && l >= filters;
    let mut yt = vec![T::zero(); if transposed { filters * l } else { 0 }];
    for s in 0..b {
        padded[pl * c..(pl + l) * c].copy_from_slice(&x.data()[s * l * c..(s + 1) * l * c]);
        let o = &mut out[s * l * filters..(s + 1) * l * filters];
        if transposed {
            let at = MatRef { data: &padded, rows: kernel * c, cols: l, row_stride: 1, col_stride: c };
            gemm(T::one(), MatRef::transposed(weight, kernel * c, filters), at, T::zero(), &mut yt);
            for (t, row) in o.chunks_exact_mut(filters).enumerate() {
                for (fi, v) in row.iter_mut().enumerate() {
                    *v = yt[fi * l + t] + bias[fi];
                }
            }
        } else {
            let a = MatRef { data: &padded, rows: l, cols: kernel * c, row_stride: c, col_stride: 1 };
            for row in o.chunks_exact_mut(filters) {
                row.copy_from_slice(bias);
            }
            gemm(T::one(), a, w, T::one(), o);
        }
    }
    Tensor::new(vec![b, l, filters], out)
}

/// Number of rows (all leading axes) and channels (last axis).
fn rows_channels<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize)> {
    match x.shape() {
        [b, l, c] => Ok((b * l, *c)),
        [b, c] => Ok((*b, *c)),
        s => Err(mismatch(format!("batch norm expects rank 2 or 3, got {s:?}"))),
    }
}

/// Per-channel affine normalization with fixed statistics.
pub fn batchnorm1d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: f64,
) -> Result<Tensor<T>> {
    let (_, c) = rows_channels(x)?;
    if [gamma.len(), beta.len(), mean.len(), var.len()].iter().any(|&n| n != c) {
        return Err(mismatch(format!("batch norm parameters do not match {c} channels")));
    }
    let scale: Vec<T> =
        (0..c).map(|j| gamma[j] / T::of_f64((var[j].as_f64() + eps).sqrt())).collect();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        for j in 0..c {
            row[j] = (row[j] - mean[j]) * scale[j] + beta[j];
        }
    }
    Ok(out)
}

pub fn elu<T: Scalar>(x: &Tensor<T>, alpha: f64) -> Tensor<T> {
    let a = T::of_f64(alpha);
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v <= T::zero() {
            *v = a * v.exp_m1();
        }
    }
    out
}

/// Non-overlapping max pooling along the length axis (floor division, so a
/// length shorter than `pool` gives an empty output). Also returns, per
/// output element, the input position of the maximum; ties go to the first.
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>, pool: usize) -> Result<(Tensor<T>, Vec<u32>)> {
    let (b, l, c) = x.dims3()?;
    if pool == 0 {
        return Err(mismatch("pool size must be positive".into()));
    }
    let lo = l / pool;
    let mut out = vec![T::zero(); b * lo * c];
    let mut arg = vec![0u32; b * lo * c];
    let xd = x.data();
    for s in 0..b {
        for t in 0..lo {
            let o = (s * lo + t) * c;
            let base = (s * l + t * pool) * c;
            out[o..o + c].copy_from_slice(&xd[base..base + c]);
            arg[o..o + c].fill((t * pool) as u32);
            for i in 1..pool {
                let row = base + i * c;
                for j in 0..c {
                    if xd[row + j] > out[o + j] {
                        out[o + j] = xd[row + j];
                        arg[o + j] = (t * pool + i) as u32;
                    }
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, lo, c], out)?, arg))
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (empty when `rate` is zero, in which case no randomness is consumed).
pub fn dropout<T: Scalar, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut R,
) -> (Tensor<T>, Vec<T>) {
    if rate <= 0.0 {
        return (x.clone(), Vec::new());
    }
    let keep = T::of_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect();
    let mut out = x.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= *m;
    }
    (out, mask)
}

/// Fully connected layer. `weight` is `[inputs, units]`.
pub fn dense<T: Scalar>(x: &Tensor<T>, weight: &[T], bias: &[T], units: usize) -> Result<Tensor<T>> {
    let (b, f) = x.dims2()?;
    if weight.len() != f * units || bias.len() != units {
        return Err(mismatch(format!("dense weights do not fit {f} -> {units}")));
    }
    let mut out = vec![T::zero(); b * units];
    for row in out.chunks_exact_mut(units) {
        row.copy_from_slice(bias);
    }
    gemm(
        T::one(),
        MatRef::row_major(x.data(), b, f),
        MatRef::row_major(weight, f, units),
        T::one(),
        &mut out,
    );
    Tensor::new(vec![b, units], out)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid probabilities and mean binary cross-entropy, both computed from
/// logits in the overflow-free form `max(z,0) - z t + ln(1 + e^-|z|)`.
pub fn sigmoid_bce<T: Scalar>(logits: &[T], targets: &[T]) -> Result<(Vec<T>, f64)> {
    if logits.len() != targets.len() || logits.is_empty() {
        return Err(mismatch(format!(
            "{} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    let probs = logits
        .iter()
        .zip(targets)
        .map(|(&z, &t)| {
            let (z, t) = (z.as_f64(), t.as_f64());
            loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
            T::of_f64(sigmoid(z))
        })
        .collect();
    Ok((probs, loss / logits.len() as f64))
}

#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub kernel: usize,
    pub in_channels: usize,
    pub filters: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(kernel: usize, in_channels: usize, filters: usize, weight: Vec<T>) -> Self {
        Self {
            kernel,
            in_channels,
            filters,
            weight: Param::new(vec![kernel, in_channels, filters], weight),
            bias: Param::new(vec![filters], vec![T::zero(); filters]),
            input: None,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv1d(x, &self.weight.value, &self.bias.value, self.kernel, self.filters)
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.take().ok_or(NnError::StaleCache)?;
        let (b, l, c) = x.dims3()?;
        let (k, f) = (self.kernel, self.filters);
        if dy.shape() != [b, l, f] {
            return Err(mismatch(format!("conv gradient shape {:?}", dy.shape())));
        }
        let pl = (k - 1) / 2;
        let left = k - 1 - pl;
        // Input gradient strategy: with few input channels a direct product
        // has a very narrow output, so form dY W^T (width k*c) and scatter
        // it back (col2im); otherwise correlate the padded dY with the
        // flipped kernel [k', f, c] = W[k - 1 - k', c, f].
        let col2im = need_dx && c < f;
        let mut wt = Vec::new();
        if need_dx && !col2im {
            wt = vec![T::zero(); k * f * c];
            let w = &self.weight.value;
            for kp in 0..k {
                for fi in 0..f {
                    for ci in 0..c {
                        wt[(kp * f + fi) * c + ci] = w[((k - 1 - kp) * c + ci) * f + fi];
                    }
                }
            }
        }
        let mut padded = vec![T::zero(); (l + k - 1) * c];
        let mut dypad = vec![T::zero(); if need_dx && !col2im { (l + k - 1) * f } else { 0 }];
        let mut cols = vec![T::zero(); if col2im { l * k * c } else { 0 }];
        let mut dx = vec![T::zero(); if need_dx { b * l * c } else { 0 }];
        for s in 0..b {
            padded[pl * c..(pl + l) * c].copy_from_slice(&x.data()[s * l * c..(s + 1) * l * c]);
            let dys = &dy.data()[s * l * f..(s + 1) * l * f];
            let at = MatRef { data: &padded, rows: k * c, cols: l, row_stride: 1, col_stride: c };
            gemm(T::one(), at, MatRef::row_major(dys, l, f), T::one(), &mut self.weight.grad);
            for row in dys.chunks_exact(f) {
                for (g, &v) in self.bias.grad.iter_mut().zip(row) {
                    *g += v;
                }
            }
            if col2im {
                gemm(
                    T::one(),
                    MatRef::row_major(dys, l, f),
                    MatRef::transposed(&self.weight.value, k * c, f),
                    T::zero(),
                    &mut cols,
                );
                let dxs = &mut dx[s * l * c..(s + 1) * l * c];
                for t in 0..l {
                    // Output position t reads input t + j - pl for tap j.
                    let j0 = pl.saturating_sub(t);
                    let j1 = k.min(l + pl - t);
                    for j in j0..j1 {
                        let src = &cols[(t * k + j) * c..(t * k + j + 1) * c];
                        let dst = &mut dxs[(t + j - pl) * c..(t + j - pl + 1) * c];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    }
                }
            } else if need_dx {
                dypad[left * f..(left + l) * f].copy_from_slice(dys);
                let a = MatRef { data: &dypad, rows: l, cols: k * f, row_stride: f, col_stride: 1 };
                gemm(
                    T::one(),
                    a,
                    MatRef::row_major(&wt, k * f, c),
                    T::zero(),
                    &mut dx[s * l * c..(s + 1) * l * c],
                );
            }
        }
        if need_dx {
            Ok(Some(Tensor::new(vec![b, l, c], dx)?))
        } else {
            Ok(None)
        }
    }
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<f64>,
    shape: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct BatchNorm1d<T> {
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize, momentum: f64, eps: f64) -> Self {
        Self {
            channels,
            momentum,
            eps,
            gamma: Param::new(vec![channels], vec![T::one(); channels]),
            beta: Param::new(vec![channels], vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            cache: None,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm1d(
            x,
            &self.gamma.value,
            &self.beta.value,
            &self.running_mean,
            &self.running_var,
            self.eps,
        )
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, c) = rows_channels(x)?;
        if c != self.channels {
            return Err(mismatch(format!("batch norm got {c} channels, expected {}", self.channels)));
        }
        let mut mean = vec![0.0f64; c];
        for row in x.data().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; c];
        for row in x.data().chunks_exact(c) {
            for j in 0..c {
                let d = row[j].as_f64() - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();

        let mut xhat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for row in x.data().chunks_exact(c) {
            for j in 0..c {
                let h = T::of_f64((row[j].as_f64() - mean[j]) * inv_std[j]);
                xhat.push(h);
                out.push(self.gamma.value[j] * h + self.beta.value[j]);
            }
        }
        let m = self.momentum;
        for j in 0..c {
            self.running_mean[j] =
                T::of_f64(m * self.running_mean[j].as_f64() + (1.0 - m) * mean[j]);
            self.running_var[j] = T::of_f64(m * self.running_var[j].as_f64() + (1.0 - m) * var[j]);
        }
        self.cache = Some(BnCache { xhat, inv_std, shape: x.shape().to_vec() });
        Tensor::new(x.shape().to_vec(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or(NnError::StaleCache)?;
        if dy.shape() != cache.shape.as_slice() {
            return Err(mismatch(format!("batch norm gradient shape {:?}", dy.shape())));
        }
        let c = self.channels;
        let n = (dy.len() / c) as f64;
        let mut sdy = vec![0.0f64; c];
        let mut sdyx = vec![0.0f64; c];
        for (g, h) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                sdy[j] += g[j].as_f64();
                sdyx[j] += g[j].as_f64() * h[j].as_f64();
            }
        }
        for j in 0..c {
            self.gamma.grad[j] += T::of_f64(sdyx[j]);
            self.beta.grad[j] += T::of_f64(sdy[j]);
        }
        let coef: Vec<f64> =
            (0..c).map(|j| self.gamma.value[j].as_f64() * cache.inv_std[j] / n).collect();
        let mut dx = Vec::with_capacity(dy.len());
        for (g, h) in dy.data().chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for j in 0..c {
                let v = coef[j] * (n * g[j].as_f64() - sdy[j] - h[j].as_f64() * sdyx[j]);
                dx.push(T::of_f64(v));
            }
        }
        Tensor::new(cache.shape, dx)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub pool: usize,
    cache: Option<(Vec<usize>, Vec<u32>)>,
}

impl MaxPool1d {
    pub fn new(pool: usize) -> Self {
        Self { pool, cache: None }
    }

    fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, arg) = self.cache.take().ok_or(NnError::StaleCache)?;
        let (b, l, c) = (shape[0], shape[1], shape[2]);
        let lo = l / self.pool;
        if dy.shape() != [b, lo, c] {
            return Err(mismatch(format!("pool gradient shape {:?}", dy.shape())));
        }
        let mut dx = vec![T::zero(); b * l * c];
        for s in 0..b {
            for t in 0..lo {
                for j in 0..c {
                    let o = (s * lo + t) * c + j;
                    dx[(s * l + arg[o] as usize) * c + j] += dy.data()[o];
                }
            }
        }
        Tensor::new(shape, dx)
    }
}

#[derive(Debug, Clone)]
pub struct Dropout<T> {
    pub rate: f64,
    mask: Option<Vec<T>>,
}

impl<T: Scalar> Dropout<T> {
    pub fn new(rate: f64) -> Self {
        Self { rate, mask: None }
    }
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub units: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, units: usize, weight: Vec<T>) -> Self {
        Self {
            inputs,
            units,
            weight: Param::new(vec![inputs, units], weight),
            bias: Param::new(vec![units], vec![T::zero(); units]),
            input: None,
        }
    }

    fn backward(&mut self, dy: &Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        let x = self.input.take().ok_or(NnError::StaleCache)?;
        let (b, f) = x.dims2()?;
        let u = self.units;
        if dy.shape() != [b, u] {
            return Err(mismatch(format!("dense gradient shape {:?}", dy.shape())));
        }
        gemm(
            T::one(),
            MatRef::transposed(x.data(), b, f),
            MatRef::row_major(dy.data(), b, u),
            T::one(),
            &mut self.weight.grad,
        );
        for row in dy.data().chunks_exact(u) {
            for (g, &v) in self.bias.grad.iter_mut().zip(row) {
                *g += v;
            }
        }
        if !need_dx {
            return Ok(None);
        }
        let mut dx = vec![T::zero(); b * f];
        gemm(
            T::one(),
            MatRef::row_major(dy.data(), b, u),
            MatRef::transposed(&self.weight.value, f, u),
            T::zero(),
            &mut dx,
        );
        Ok(Some(Tensor::new(vec![b, f], dx)?))
    }
}

/// One stage of the network.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv1d(Conv1d<T>),
    BatchNorm1d(BatchNorm1d<T>),
    Elu { alpha: f64, input: Option<Tensor<T>> },
    MaxPool1d(MaxPool1d),
    Dropout(Dropout<T>),
    Flatten { shape: Option<Vec<usize>> },
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn elu(alpha: f64) -> Self {
        Layer::Elu { alpha, input: None }
    }

    pub fn flatten() -> Self {
        Layer::Flatten { shape: None }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::BatchNorm1d(_) => "batchnorm1d",
            Layer::Elu { .. } => "elu",
            Layer::MaxPool1d(_) => "maxpool1d",
            Layer::Dropout(_) => "dropout",
            Layer::Flatten { .. } => "flatten",
            Layer::Dense(_) => "dense",
        }
    }

    /// Inference-mode forward pass; does not touch any state.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => l.forward(x),
            Layer::BatchNorm1d(l) => l.forward(x),
            Layer::Elu { alpha, .. } => Ok(elu(x, *alpha)),
            Layer::MaxPool1d(l) => Ok(maxpool1d(x, l.pool)?.0),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten { .. } => flatten(x),
            Layer::Dense(l) => dense(x, &l.weight.value, &l.bias.value, l.units),
        }
    }

    /// Training-mode forward pass; caches what [`Layer::backward`] needs and
    /// updates batch-norm running statistics.
    pub fn forward_train<R: Rng + ?Sized>(&mut self, x: &Tensor<T>, rng: &mut R) -> Result<Tensor<T>> {
        match self {
            Layer::Conv1d(l) => {
                let y = l.forward(x)?;
                l.input = Some(x.clone());
                Ok(y)
            }
            Layer::BatchNorm1d(l) => l.forward_train(x),
            Layer::Elu { alpha, input } => {
                let y = elu(x, *alpha);
                *input = Some(x.clone());
                Ok(y)
            }
            Layer::MaxPool1d(l) => {
                let (y, arg) = maxpool1d(x, l.pool)?;
                l.cache = Some((x.shape().to_vec(), arg));
                Ok(y)
            }
            Layer::Dropout(l) => {
                let (y, mask) = dropout(x, l.rate, rng);
                l.mask = Some(mask);
                Ok(y)
            }
            Layer::Flatten { shape } => {
                let y = flatten(x)?;
                *shape = Some(x.shape().to_vec());
                Ok(y)
            }
            Layer::Dense(l) => {
                let y = dense(x, &l.weight.value, &l.bias.value, l.units)?;
                l.input = Some(x.clone());
                Ok(y)
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient
    /// (`None` when `need_dx` is false and the layer can skip it).
    pub fn backward(&mut self, dy: Tensor<T>, need_dx: bool) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv1d(l) => l.backward(&dy, need_dx),
            Layer::BatchNorm1d(l) => l.backward(&dy).map(Some),
            Layer::Elu { alpha, input } => {
                let x = input.take().ok_or(NnError::StaleCache)?;
                if x.shape() != dy.shape() {
                    return Err(mismatch(format!("elu gradient shape {:?}", dy.shape())));
                }
                let a = T::of_f64(*alpha);
                let mut dx = dy;
                for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if v <= T::zero() {
                        *g *= a * v.exp();
                    }
                }
                Ok(Some(dx))
            }
            Layer::MaxPool1d(l) => l.backward(&dy).map(Some),
            Layer::Dropout(l) => {
                let mask = l.mask.take().ok_or(NnError::StaleCache)?;
                let mut dx = dy;
                if !mask.is_empty() {
                    if mask.len() != dx.len() {
                        return Err(mismatch("dropout gradient size".into()));
                    }
                    for (g, m) in dx.data_mut().iter_mut().zip(&mask) {
                        *g *= *m;
                    }
                }
                Ok(Some(dx))
            }
            Layer::Flatten { shape } => {
                let shape = shape.take().ok_or(NnError::StaleCache)?;
                Ok(Some(dy.reshape(shape)?))
            }
            Layer::Dense(l) => l.backward(&dy, need_dx),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv1d(l) => l.input = None,
            Layer::BatchNorm1d(l) => l.cache = None,
            Layer::Elu { input, .. } => *input = None,
            Layer::MaxPool1d(l) => l.cache = None,
            Layer::Dropout(l) => l.mask = None,
            Layer::Flatten { shape } => *shape = None,
            Layer::Dense(l) => l.input = None,
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv1d(l) => vec![&l.weight, &l.bias],
            Layer::BatchNorm1d(l) => vec![&l.gamma, &l.beta],
            Layer::Dense(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv1d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm1d(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Dense(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }
}

fn flatten<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let b = x.batch();
    let f = if b == 0 { 0 } else { x.len() / b };
    x.clone().reshape(vec![b, f])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: Vec<usize>, scale: f64) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|i| ((i as f64) * scale).sin()).collect()).unwrap()
    }

    fn naive_conv(x: &Tensor<f64>, w: &[f64], bias: &[f64], k: usize, f: usize) -> Vec<f64> {
        let (b, l, c) = x.dims3().unwrap();
        let pl = (k - 1) as isize / 2;
        let mut out = vec![0.0; b * l * f];
        for s in 0..b {
            for t in 0..l {
                for fi in 0..f {
                    let mut acc = bias[fi];
                    for j in 0..k {
                        let src = t as isize + j as isize - pl;
                        if src < 0 || src >= l as isize {
                            continue;
                        }
                        for ci in 0..c {
                            acc += x.data()[(s * l + src as usize) * c + ci] * w[(j * c + ci) * f + fi];
                        }
                    }
                    out[(s * l + t) * f + fi] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_direct_summation_for_odd_and_even_kernels() {
        for k in [1, 2, 3, 4, 7] {
            let x = ramp(vec![2, 9, 3], 0.31);
            let w: Vec<f64> = (0..k * 3 * 4).map(|i| (i as f64 * 0.17).cos()).collect();
            let bias = [0.1, -0.2, 0.3, 0.0];
            let y = conv1d(&x, &w, &bias, k, 4).unwrap();
            assert_eq!(y.shape(), &[2, 9, 4]);
            for (a, b) in y.data().iter().zip(naive_conv(&x, &w, &bias, k, 4)) {
                assert!((a - b).abs() < 1e-12, "k={k}");
            }
        }
    }

    #[test]
    fn maxpool_picks_first_maximum_and_floors_length() {
        let x = Tensor::new(vec![1, 5, 1], vec![1.0, 3.0, 3.0, 2.0, 9.0]).unwrap();
        let (y, arg) = maxpool1d(&x, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0]);
        assert_eq!(arg, vec![1, 2]);
        let x = Tensor::new(vec![1, 4, 1], vec![5.0, 5.0, 1.0, 1.0]).unwrap();
        assert_eq!(maxpool1d(&x, 2).unwrap().1, vec![0, 2]);
        assert_eq!(maxpool1d(&x, 5).unwrap().0.shape(), &[1, 0, 1]);
        assert!(maxpool1d(&x, 0).is_err());
    }

    #[test]
    fn elu_values() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        let y = elu(&x, 1.0);
        assert!((y.data()[0] - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(&y.data()[1..], &[0.0, 2.0]);
    }

    #[test]
    fn dropout_is_inverted_and_zero_rate_is_identity() {
        let x = Tensor::new(vec![10_000], vec![1.0; 10_000]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (y, mask) = dropout(&x, 0.25, &mut rng);
        assert_eq!(mask.len(), 10_000);
        let mean = y.data().iter().sum::<f64>() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05);
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        let (y0, m0) = dropout(&x, 0.0, &mut rng);
        assert!(m0.is_empty());
        assert_eq!(y0, x);
    }

    #[test]
    fn dense_matches_naive() {
        let x = ramp(vec![3, 4], 0.5);
        let w: Vec<f64> = (0..8).map(|i| i as f64 * 0.1 - 0.3).collect();
        let y = dense(&x, &w, &[1.0, -1.0], 2).unwrap();
        for s in 0..3 {
            for u in 0..2 {
                let want: f64 =
                    [1.0, -1.0][u] + (0..4).map(|i| x.data()[s * 4 + i] * w[i * 2 + u]).sum::<f64>();
                assert!((y.data()[s * 2 + u] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bce_is_stable_and_matches_naive_for_moderate_logits() {
        let (p, loss) = sigmoid_bce(&[0.3f64, -1.2], &[1.0, 0.0]).unwrap();
        let naive = -((sigmoid(0.3)).ln() + (1.0 - sigmoid(-1.2)).ln()) / 2.0;
        assert!((loss - naive).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let (_, big) = sigmoid_bce(&[1000.0f64, -1000.0], &[0.0, 1.0]).unwrap();
        assert!((big - 1000.0).abs() < 1e-9);
        assert!(sigmoid_bce::<f64>(&[], &[]).is_err());
    }

    #[test]
    fn batchnorm_train_normalizes_and_updates_running_stats() {
        let mut bn = BatchNorm1d::<f64>::new(2, 0.9, 1e-5);
        let x = Tensor::new(vec![2, 2, 2], vec![1.0, 10.0, 3.0, 20.0, 5.0, 30.0, 7.0, 40.0]).unwrap();
        let y = bn.forward_train(&x).unwrap();
        for j in 0..2 {
            let col: Vec<f64> = y.data().iter().skip(j).step_by(2).copied().collect();
            let m = col.iter().sum::<f64>() / 4.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
        assert!((bn.running_mean[0] - 0.1 * 4.0).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_without_forward_is_stale() {
        let mut layer = Layer::<f64>::elu(1.0);
        let dy = Tensor::zeros(vec![1, 2]);
        assert!(matches!(layer.backward(dy, true), Err(NnError::StaleCache)));
    }
}
