//! Image branch, concatenation with pose and wrench, MLP trunk and dueling heads.

use rand::Rng;

use super::layers::{col2im, dense_backward, dense_forward, im2col, relu_inplace, relu_mask, ConvGeom};
use super::{NnError, Real, Tensor};
use crate::env::StateObs;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub image_size: usize,
    pub conv_channels: Vec<usize>,
    /// Width of the dense layer after flattening the image features.
    pub image_dense: usize,
    /// Length of the pose + wrench vector joined after the image branch.
    pub aux: usize,
    pub trunk: Vec<usize>,
    pub n_actions: usize,
}

impl Architecture {
    pub fn standard() -> Self {
        Self {
            image_size: 64,
            conv_channels: vec![8, 16, 32],
            image_dense: 128,
            aux: 11,
            trunk: vec![128, 64],
            n_actions: 27,
        }
    }

    /// Small variant used for finite-difference checks.
    pub fn downsized() -> Self {
        Self { image_size: 16, conv_channels: vec![2, 3, 4], image_dense: 8, aux: 11, trunk: vec![8, 6], n_actions: 27 }
    }

    fn conv_geoms(&self) -> Vec<ConvGeom> {
        let mut out = Vec::with_capacity(self.conv_channels.len());
        let (mut h, mut c) = (self.image_size, 1);
        for &oc in &self.conv_channels {
            let g = ConvGeom { h, w: h, c, oc };
            h = g.oh();
            c = oc;
            out.push(g);
        }
        out
    }

    pub fn flat_features(&self) -> usize {
        match self.conv_geoms().last() {
            Some(g) => g.oh() * g.ow() * g.oc,
            None => self.image_size * self.image_size,
        }
    }

    pub fn pixels(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims_ok = self.image_size > 0
            && !self.conv_channels.is_empty()
            && self.conv_channels.iter().all(|&c| c > 0)
            && self.image_dense > 0
            && self.trunk.iter().all(|&t| t > 0)
            && !self.trunk.is_empty()
            && self.n_actions > 0;
        if dims_ok {
            Ok(())
        } else {
            Err(NnError::Shape(format!("degenerate architecture {}", self.descriptor())))
        }
    }

    /// Canonical text form stored in checkpoints.
    pub fn descriptor(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "img{};conv{};dense{};aux{};trunk{};act{}",
            self.image_size,
            list(&self.conv_channels),
            self.image_dense,
            self.aux,
            list(&self.trunk),
            self.n_actions
        )
    }

    pub fn parse_descriptor(s: &str) -> Option<Self> {
        let parts: Vec<&str> = s.split(';').collect();
        if parts.len() != 6 {
            return None;
        }
        let one = |p: &str, tag: &str| p.strip_prefix(tag)?.parse::<usize>().ok();
        let list = |p: &str, tag: &str| -> Option<Vec<usize>> {
            let body = p.strip_prefix(tag)?;
            if body.is_empty() {
                return Some(Vec::new());
            }
            body.split(',').map(|x| x.parse().ok()).collect()
        };
        Some(Self {
            image_size: one(parts[0], "img")?,
            conv_channels: list(parts[1], "conv")?,
            image_dense: one(parts[2], "dense")?,
            aux: one(parts[3], "aux")?,
            trunk: list(parts[4], "trunk")?,
            n_actions: one(parts[5], "act")?,
        })
    }

    /// (name, out, in) of every layer in declaration order.
    pub fn layer_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut v = Vec::new();
        for (i, g) in self.conv_geoms().iter().enumerate() {
            v.push((format!("conv{}", i + 1), g.oc, g.patch()));
        }
        v.push(("image_dense".into(), self.image_dense, self.flat_features()));
        let mut prev = self.image_dense + self.aux;
        for (i, &t) in self.trunk.iter().enumerate() {
            v.push((format!("trunk{}", i + 1), t, prev));
            prev = t;
        }
        v.push(("value".into(), 1, prev));
        v.push(("advantage".into(), self.n_actions, prev));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub name: String,
    /// out × in
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Network parameters; the same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNet<T> {
    arch: Architecture,
    layers: Vec<Layer<T>>,
}

/// Inputs for a batch of states: images row-major per sample, then the auxiliary
/// vectors `[pose_n, wrench_n]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch<T> {
    pub len: usize,
    pub images: Vec<T>,
    pub aux: Vec<T>,
}

impl<T: Real> Batch<T> {
    pub fn new() -> Self {
        Self { len: 0, images: Vec::new(), aux: Vec::new() }
    }

    pub fn clear(&mut self) {
        self.len = 0;
        self.images.clear();
        self.aux.clear();
    }

    pub fn push(&mut self, s: &StateObs) {
        self.images.extend(s.image.values().map(T::from_f64));
        self.aux.extend(s.pose_n.iter().chain(&s.wrench_n).map(|&v| T::from_f64(v)));
        self.len += 1;
    }

    pub fn from_obs<'a>(states: impl IntoIterator<Item = &'a StateObs>) -> Self {
        let mut b = Self::new();
        for s in states {
            b.push(s);
        }
        b
    }
}

/// Activations kept from the last forward pass for backpropagation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache<T> {
    batch: usize,
    cols: Vec<Vec<T>>,
    conv_out: Vec<Vec<T>>,
    image_feat: Vec<T>,
    joined: Vec<T>,
    trunk_out: Vec<Vec<T>>,
    value: Vec<T>,
    adv: Vec<T>,
    q: Vec<T>,
    scratch_a: Vec<T>,
    scratch_b: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn new() -> Self {
        Self {
            batch: 0,
            cols: Vec::new(),
            conv_out: Vec::new(),
            image_feat: Vec::new(),
            joined: Vec::new(),
            trunk_out: Vec::new(),
            value: Vec::new(),
            adv: Vec::new(),
            q: Vec::new(),
            scratch_a: Vec::new(),
            scratch_b: Vec::new(),
        }
    }

    pub fn q(&self) -> &[T] {
        &self.q
    }

    pub fn value(&self) -> &[T] {
        &self.value
    }

    pub fn advantage(&self) -> &[T] {
        &self.adv
    }
}

/// `qᵢ = val + (advᵢ − mean(adv))`.
pub fn dueling_combine<T: Real>(val: T, adv: &[T]) -> Vec<T> {
    let mean = adv.iter().copied().sum::<T>() / T::from_f64(adv.len() as f64);
    adv.iter().map(|&a| val + (a - mean)).collect()
}

/// `½(q_tar − q_pre)²`.
pub fn loss<T: Real>(q_pre: T, q_tar: T) -> T {
    let d = q_tar - q_pre;
    T::from_f64(0.5) * d * d
}

/// Gradient of `loss` with respect to `q_pre`.
pub fn loss_grad<T: Real>(q_pre: T, q_tar: T) -> T {
    -(q_tar - q_pre)
}

impl<T: Real> DuelingNet<T> {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch
            .layer_shapes()
            .into_iter()
            .map(|(name, out, inp)| Layer { name, weight: Tensor::zeros(&[out, inp]), bias: Tensor::zeros(&[out]) })
            .collect();
        Self { arch: arch.clone(), layers }
    }

    /// Uniform fan-in initialization: weights in ±√(6/fan_in) for ReLU layers and
    /// ±√(1/fan_in) for the two heads; biases start at zero.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut net = Self::zeros(arch);
        let n = net.layers.len();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let fan_in = layer.weight.shape()[1] as f64;
            let bound = if i + 2 >= n { (1.0 / fan_in).sqrt() } else { (6.0 / fan_in).sqrt() };
            for w in layer.weight.data_mut() {
                *w = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        net
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Every parameter in declaration order, weights before biases per layer.
    pub fn params(&self) -> impl Iterator<Item = &T> {
        self.layers.iter().flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.layers.iter_mut().flat_map(|l| l.weight.data.iter_mut().chain(l.bias.data.iter_mut()))
    }

    /// Parameter tensors as flat slices, in the order of `params`.
    pub fn slices(&self) -> impl Iterator<Item = &[T]> {
        self.layers.iter().flat_map(|l| [l.weight.data(), l.bias.data()])
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.layers.iter_mut().flat_map(|l| [l.weight.data.as_mut_slice(), l.bias.data.as_mut_slice()])
    }

    pub fn set_zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(T::ZERO);
            l.bias.fill(T::ZERO);
        }
    }

    pub fn copy_from(&mut self, other: &Self) {
        debug_assert_eq!(self.arch, other.arch);
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.data.copy_from_slice(&b.weight.data);
            a.bias.data.copy_from_slice(&b.bias.data);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weight.all_finite() && l.bias.all_finite())
    }

    pub fn cast<U: Real>(&self) -> DuelingNet<U> {
        DuelingNet {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer { name: l.name.clone(), weight: l.weight.cast(), bias: l.bias.cast() })
                .collect(),
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<(), NnError> {
        let a = &self.arch;
        if batch.images.len() != batch.len * a.pixels() || batch.aux.len() != batch.len * a.aux {
            return Err(NnError::Shape(format!(
                "batch of {} needs {} pixels and {} aux values, got {} and {}",
                batch.len,
                batch.len * a.pixels(),
                batch.len * a.aux,
                batch.images.len(),
                batch.aux.len()
            )));
        }
        Ok(())
    }

    /// Evaluates Q for every sample; the result is `batch.len × n_actions`.
    pub fn forward<'c>(&self, batch: &Batch<T>, cache: &'c mut ForwardCache<T>) -> Result<&'c [T], NnError> {
        self.check_batch(batch)?;
        let a = &self.arch;
        let b = batch.len;
        let geoms = a.conv_geoms();
        let nc = geoms.len();
        cache.batch = b;
        cache.cols.resize_with(nc, Vec::new);
        cache.conv_out.resize_with(nc, Vec::new);
        cache.trunk_out.resize_with(a.trunk.len(), Vec::new);

        for (i, g) in geoms.iter().enumerate() {
            let input: &[T] = if i == 0 { &batch.images } else { &cache.conv_out[i - 1] };
            let mut cols = std::mem::take(&mut cache.cols[i]);
            im2col(g, b, input, &mut cols);
            let l = &self.layers[i];
            let rows = b * g.oh() * g.ow();
            dense_forward(&cols, rows, g.patch(), l.weight.data(), l.bias.data(), &mut cache.conv_out[i]);
            relu_inplace(&mut cache.conv_out[i]);
            cache.cols[i] = cols;
        }

        let flat = &cache.conv_out[nc - 1];
        let l = &self.layers[nc];
        dense_forward(flat, b, a.flat_features(), l.weight.data(), l.bias.data(), &mut cache.image_feat);
        relu_inplace(&mut cache.image_feat);

        let width = a.image_dense + a.aux;
        cache.joined.clear();
        cache.joined.reserve(b * width);
        for s in 0..b {
            cache.joined.extend_from_slice(&cache.image_feat[s * a.image_dense..(s + 1) * a.image_dense]);
            cache.joined.extend_from_slice(&batch.aux[s * a.aux..(s + 1) * a.aux]);
        }

        let mut prev_width = width;
        for (t, &w) in a.trunk.iter().enumerate() {
            let mut out = std::mem::take(&mut cache.trunk_out[t]);
            let input: &[T] = if t == 0 { &cache.joined } else { &cache.trunk_out[t - 1] };
            let l = &self.layers[nc + 1 + t];
            dense_forward(input, b, prev_width, l.weight.data(), l.bias.data(), &mut out);
            relu_inplace(&mut out);
            cache.trunk_out[t] = out;
            prev_width = w;
        }

        let h = cache.trunk_out.last().expect("non-empty trunk");
        let nt = nc + 1 + a.trunk.len();
        let (lv, la) = (&self.layers[nt], &self.layers[nt + 1]);
        dense_forward(h, b, prev_width, lv.weight.data(), lv.bias.data(), &mut cache.value);
        dense_forward(h, b, prev_width, la.weight.data(), la.bias.data(), &mut cache.adv);

        let n = a.n_actions;
        cache.q.clear();
        for s in 0..b {
            let q = dueling_combine(cache.value[s], &cache.adv[s * n..(s + 1) * n]);
            cache.q.extend_from_slice(&q);
        }
        debug_assert!(cache.q.iter().all(|v| v.is_finite()), "non-finite Q values");
        Ok(&cache.q)
    }

    /// Q values for one state.
    pub fn forward_obs(&self, s: &StateObs) -> Vec<T> {
        let batch = Batch::from_obs([s]);
        let mut cache = ForwardCache::new();
        self.forward(&batch, &mut cache).expect("observation matches the architecture").to_vec()
    }

    /// Accumulates into `grads` the gradient of `Σ dq·q` given the last forward pass.
    pub fn backward(&self, cache: &mut ForwardCache<T>, dq: &[T], grads: &mut DuelingNet<T>) -> Result<(), NnError> {
        let a = &self.arch;
        let b = cache.batch;
        let n = a.n_actions;
        if dq.len() != b * n || grads.arch != self.arch {
            return Err(NnError::Shape(format!("dq has {} entries for a batch of {b}", dq.len())));
        }
        let geoms = a.conv_geoms();
        let nc = geoms.len();
        let nt = nc + 1 + a.trunk.len();

        // dueling heads
        let mut dv = vec![T::ZERO; b];
        let mut dadv = vec![T::ZERO; b * n];
        let inv_n = T::ONE / T::from_f64(n as f64);
        for s in 0..b {
            let row = &dq[s * n..(s + 1) * n];
            let total: T = row.iter().copied().sum();
            dv[s] = total;
            for j in 0..n {
                dadv[s * n + j] = row[j] - total * inv_n;
            }
        }
        let h_width = *a.trunk.last().expect("non-empty trunk");
        let mut dh = std::mem::take(&mut cache.scratch_a);
        let mut tmp = std::mem::take(&mut cache.scratch_b);
        {
            let h = &cache.trunk_out[a.trunk.len() - 1];
            let (gv, ga) = split_pair(&mut grads.layers, nt);
            dense_backward(
                h,
                b,
                h_width,
                self.layers[nt].weight.data(),
                &dv,
                gv.weight.data_mut(),
                gv.bias.data_mut(),
                Some(&mut dh),
            );
            dense_backward(
                h,
                b,
                h_width,
                self.layers[nt + 1].weight.data(),
                &dadv,
                ga.weight.data_mut(),
                ga.bias.data_mut(),
                Some(&mut tmp),
            );
            for (x, y) in dh.iter_mut().zip(&tmp) {
                *x += *y;
            }
        }

        // trunk, last to first
        for t in (0..a.trunk.len()).rev() {
            relu_mask(&cache.trunk_out[t], &mut dh);
            let input: &[T] = if t == 0 { &cache.joined } else { &cache.trunk_out[t - 1] };
            let in_width = if t == 0 { a.image_dense + a.aux } else { a.trunk[t - 1] };
            let li = nc + 1 + t;
            let g = &mut grads.layers[li];
            dense_backward(
                input,
                b,
                in_width,
                self.layers[li].weight.data(),
                &dh,
                g.weight.data_mut(),
                g.bias.data_mut(),
                Some(&mut tmp),
            );
            std::mem::swap(&mut dh, &mut tmp);
        }

        // split off the image part of the joined vector
        let width = a.image_dense + a.aux;
        tmp.clear();
        for s in 0..b {
            tmp.extend_from_slice(&dh[s * width..s * width + a.image_dense]);
        }
        std::mem::swap(&mut dh, &mut tmp);
        relu_mask(&cache.image_feat, &mut dh);
        {
            let g = &mut grads.layers[nc];
            let input = &cache.conv_out[nc - 1];
            dense_backward(
                input,
                b,
                a.flat_features(),
                self.layers[nc].weight.data(),
                &dh,
                g.weight.data_mut(),
                g.bias.data_mut(),
                Some(&mut tmp),
            );
            std::mem::swap(&mut dh, &mut tmp);
        }

        // convolutions, last to first
        for i in (0..nc).rev() {
            let geo = &geoms[i];
            relu_mask(&cache.conv_out[i], &mut dh);
            let rows = b * geo.oh() * geo.ow();
            let g = &mut grads.layers[i];
            let dcols = if i > 0 { Some(&mut tmp) } else { None };
            dense_backward(
                &cache.cols[i],
                rows,
                geo.patch(),
                self.layers[i].weight.data(),
                &dh,
                g.weight.data_mut(),
                g.bias.data_mut(),
                dcols,
            );
            if i > 0 {
                col2im(geo, b, &tmp, &mut dh);
            }
        }

        cache.scratch_a = dh;
        cache.scratch_b = tmp;
        Ok(())
    }
}

fn split_pair<T>(layers: &mut [Layer<T>], i: usize) -> (&mut Layer<T>, &mut Layer<T>) {
    let (lo, hi) = layers.split_at_mut(i + 1);
    (&mut lo[i], &mut hi[0])
}
