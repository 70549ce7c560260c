//! Factored-mean convolution: a spatial convolution into `f` factor maps,
//! multiplicative noise on the factor maps, then a 1x1 mixing convolution.
//!
//! Valid padding, stride 1. The default noise granularity is one scalar per
//! factor map per example; per-pixel noise is available behind a flag.
//! Collapsing the two stages gives a single kernel
//! `K[o,i,.,.] = sum_f K2[o,f] K1[f,i,.,.]`.

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::rng::RngState;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FaMeConvLayer {
    /// Spatial kernels, `(f, c_in, kh, kw)`.
    pub kernel_spatial: Tensor,
    /// 1x1 mixing weights, `(c_out, f)`.
    pub kernel_mix: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
    pub noise: NoiseSpec,
    /// Draw an independent value per pixel of each factor map instead of one
    /// scalar per map.
    pub per_pixel_noise: bool,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    /// Clean factor maps, `(batch, f, oh, ow)`.
    pub maps: Tensor,
    /// Factor maps after noise.
    pub noisy: Tensor,
    /// Sampled noise: `(batch, f)` per-map or `(batch, f, oh, ow)` per-pixel.
    pub noise: Tensor,
    pub preact: Tensor,
    pub output: Tensor,
}

#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub d_spatial: Tensor,
    pub d_mix: Tensor,
    pub d_bias: Tensor,
}

/// Valid-mode stride-1 convolution of `(batch, c_in, h, w)` with kernels
/// `(n_k, c_in, kh, kw)`, no bias.
pub fn conv2d_valid(input: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    if input.rank() != 4 || kernels.rank() != 4 {
        return Err(Error::ShapeMismatch(format!(
            "conv2d_valid: input {:?}, kernels {:?}",
            input.shape(),
            kernels.shape()
        )));
    }
    let [b, c_in, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2], input.shape()[3]];
    let [nk, kc, kh, kw] = [
        kernels.shape()[0],
        kernels.shape()[1],
        kernels.shape()[2],
        kernels.shape()[3],
    ];
    if kc != c_in {
        return Err(Error::ShapeMismatch(format!(
            "conv2d_valid: {c_in} input channels vs kernel {kc}"
        )));
    }
    if kh > h || kw > w {
        return Err(Error::ShapeMismatch(format!(
            "conv2d_valid: kernel {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = vec![0.0; b * nk * oh * ow];
    let ind = input.data();
    let kd = kernels.data();
    for bi in 0..b {
        for k in 0..nk {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..c_in {
                        for a in 0..kh {
                            let irow = ((bi * c_in + c) * h + (y + a)) * w + x;
                            let krow = ((k * c_in + c) * kh + a) * kw;
                            for bb in 0..kw {
                                acc += ind[irow + bb] * kd[krow + bb];
                            }
                        }
                    }
                    out[((bi * nk + k) * oh + y) * ow + x] = acc;
                }
            }
        }
    }
    Tensor::new(vec![b, nk, oh, ow], out)
}

fn as_image_batch(t: &Tensor) -> Result<(Tensor, bool)> {
    match t.rank() {
        3 => {
            let s = t.shape().to_vec();
            Ok((t.reshaped(vec![1, s[0], s[1], s[2]])?, true))
        }
        4 => Ok((t.clone(), false)),
        _ => Err(Error::ShapeMismatch(format!(
            "expected rank-3 or rank-4 image tensor, got {:?}",
            t.shape()
        ))),
    }
}

impl FaMeConvLayer {
    pub fn new(
        kernel_spatial: Tensor,
        kernel_mix: Tensor,
        bias: Tensor,
        activation: Activation,
        noise: NoiseSpec,
    ) -> Result<Self> {
        if kernel_spatial.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "spatial kernels must be rank-4, got {:?}",
                kernel_spatial.shape()
            )));
        }
        let (c_out, f_mix) = kernel_mix.dims2("conv mixing kernel")?;
        if f_mix != kernel_spatial.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "factor extents disagree: spatial {} vs mix {f_mix}",
                kernel_spatial.shape()[0]
            )));
        }
        if bias.rank() != 1 || bias.len() != c_out {
            return Err(Error::ShapeMismatch(format!(
                "conv bias length {} vs c_out {c_out}",
                bias.len()
            )));
        }
        noise.validate()?;
        Ok(FaMeConvLayer {
            kernel_spatial,
            kernel_mix,
            bias,
            activation,
            noise,
            per_pixel_noise: false,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn init(
        c_out: usize,
        c_in: usize,
        factor: usize,
        kh: usize,
        kw: usize,
        activation: Activation,
        noise: NoiseSpec,
        rng: &mut RngState,
    ) -> Result<Self> {
        let fan_in = (c_in * kh * kw) as f64;
        let s1 = (1.0 / fan_in).sqrt();
        let s2 = (2.0 / factor as f64).sqrt();
        let k1 = (0..factor * c_in * kh * kw)
            .map(|_| s1 * rng.next_gaussian())
            .collect();
        let k2 = (0..c_out * factor).map(|_| s2 * rng.next_gaussian()).collect();
        FaMeConvLayer::new(
            Tensor::new(vec![factor, c_in, kh, kw], k1)?,
            Tensor::new(vec![c_out, factor], k2)?,
            Tensor::zeros(vec![c_out])?,
            activation,
            noise,
        )
    }

    pub fn factor_width(&self) -> usize {
        self.kernel_spatial.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.kernel_mix.shape()[0]
    }

    /// Training forward with caller-supplied noise (`(batch, f)` for per-map,
    /// `(batch, f, oh, ow)` for per-pixel).
    pub fn forward_train_with_noise(
        &self,
        image: &Tensor,
        noise: &Tensor,
    ) -> Result<(Tensor, ConvCache)> {
        let (img, was_single) = as_image_batch(image)?;
        let maps = conv2d_valid(&img, &self.kernel_spatial)?;
        let [b, f, oh, ow] = [maps.shape()[0], maps.shape()[1], maps.shape()[2], maps.shape()[3]];

        let noisy = if noise.rank() == 2 {
            if noise.shape() != [b, f] {
                return Err(Error::ShapeMismatch(format!(
                    "per-map noise {:?} vs expected [{b}, {f}]",
                    noise.shape()
                )));
            }
            let mut data = maps.data().to_vec();
            for bi in 0..b {
                for fi in 0..f {
                    let r = noise.data()[bi * f + fi];
                    let base = (bi * f + fi) * oh * ow;
                    for v in &mut data[base..base + oh * ow] {
                        *v *= r;
                    }
                }
            }
            Tensor::new(vec![b, f, oh, ow], data)?
        } else {
            maps.elemwise_mul(noise)?
        };

        // 1x1 mixing is a matrix product in channel space per pixel.
        let noisy_mat = noisy.reshaped(vec![b * f, oh * ow])?;
        let mut pre = vec![0.0; b * self.c_out() * oh * ow];
        for bi in 0..b {
            for o in 0..self.c_out() {
                let dst = &mut pre[(bi * self.c_out() + o) * oh * ow..][..oh * ow];
                dst.fill(self.bias.data()[o]);
                for fi in 0..f {
                    let w = self.kernel_mix.data()[o * f + fi];
                    let src = noisy_mat.row(bi * f + fi);
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        let preact = Tensor::new(vec![b, self.c_out(), oh, ow], pre)?;
        let output = self.activation.apply(&preact)?;
        output.check_finite("fame conv output")?;
        let out = if was_single {
            output.reshaped(vec![self.c_out(), oh, ow])?
        } else {
            output.clone()
        };
        Ok((
            out,
            ConvCache { maps, noisy, noise: noise.clone(), preact, output },
        ))
    }

    /// Training forward with fresh noise per factor map (or per pixel) per
    /// example.
    pub fn forward_train(&self, image: &Tensor, rng: &mut RngState) -> Result<(Tensor, ConvCache)> {
        let (img, _) = as_image_batch(image)?;
        let b = img.shape()[0];
        let f = self.factor_width();
        let noise = if self.per_pixel_noise {
            let (h, w) = (img.shape()[2], img.shape()[3]);
            let (kh, kw) = (self.kernel_spatial.shape()[2], self.kernel_spatial.shape()[3]);
            if kh > h || kw > w {
                return Err(Error::ShapeMismatch(format!(
                    "conv: kernel {kh}x{kw} larger than input {h}x{w}"
                )));
            }
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            self.noise
                .sample_matrix(b * f, oh * ow, rng)?
                .reshaped(vec![b, f, oh, ow])?
        } else {
            self.noise.sample_matrix(b, f, rng)?
        };
        self.forward_train_with_noise(image, &noise)
    }

    /// Single collapsed kernel and bias of the mean network.
    pub fn collapse(&self) -> Result<(Tensor, Tensor)> {
        let f = self.factor_width();
        let [_, c_in, kh, kw] = [
            self.kernel_spatial.shape()[0],
            self.kernel_spatial.shape()[1],
            self.kernel_spatial.shape()[2],
            self.kernel_spatial.shape()[3],
        ];
        let c_out = self.c_out();
        let mut k = vec![0.0; c_out * c_in * kh * kw];
        let plane = c_in * kh * kw;
        for o in 0..c_out {
            for fi in 0..f {
                let w = self.kernel_mix.data()[o * f + fi];
                let src = &self.kernel_spatial.data()[fi * plane..(fi + 1) * plane];
                let dst = &mut k[o * plane..(o + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        Ok((
            Tensor::new(vec![c_out, c_in, kh, kw], k)?,
            self.bias.clone(),
        ))
    }

    /// Deterministic test forward: one convolution with the collapsed kernel.
    pub fn forward_test(&self, image: &Tensor) -> Result<Tensor> {
        let (img, was_single) = as_image_batch(image)?;
        let (kernel, bias) = self.collapse()?;
        let mut pre = conv2d_valid(&img, &kernel)?;
        let [b, c_out, oh, ow] = [
            pre.shape()[0],
            pre.shape()[1],
            pre.shape()[2],
            pre.shape()[3],
        ];
        for bi in 0..b {
            for o in 0..c_out {
                let base = (bi * c_out + o) * oh * ow;
                let bv = bias.data()[o];
                for v in &mut pre.data_mut()[base..base + oh * ow] {
                    *v += bv;
                }
            }
        }
        let out = self.activation.apply(&pre)?;
        if was_single {
            out.reshaped(vec![c_out, oh, ow])
        } else {
            Ok(out)
        }
    }

    /// Gradients of a scalar loss with respect to both kernels and the bias,
    /// holding the sampled noise fixed.
    pub fn backward(&self, image: &Tensor, cache: &ConvCache, d_out: &Tensor) -> Result<ConvGrads> {
        let (img, _) = as_image_batch(image)?;
        let d_out4 = if d_out.rank() == 3 {
            let s = d_out.shape().to_vec();
            d_out.reshaped(vec![1, s[0], s[1], s[2]])?
        } else {
            d_out.clone()
        };
        let d_pre = self.activation.backward(&cache.preact, &cache.output, &d_out4)?;
        let [b, c_out, oh, ow] = [
            d_pre.shape()[0],
            d_pre.shape()[1],
            d_pre.shape()[2],
            d_pre.shape()[3],
        ];
        let f = self.factor_width();
        let pix = oh * ow;

        let mut d_bias = vec![0.0; c_out];
        for bi in 0..b {
            for (o, db) in d_bias.iter_mut().enumerate() {
                let base = (bi * c_out + o) * pix;
                *db += d_pre.data()[base..base + pix].iter().sum::<f64>();
            }
        }

        let mut d_mix = vec![0.0; c_out * f];
        let mut d_noisy = vec![0.0; b * f * pix];
        for bi in 0..b {
            for o in 0..c_out {
                let dp = &d_pre.data()[(bi * c_out + o) * pix..][..pix];
                for fi in 0..f {
                    let nz = &cache.noisy.data()[(bi * f + fi) * pix..][..pix];
                    let mut acc = 0.0;
                    for (a, bb) in dp.iter().zip(nz) {
                        acc += a * bb;
                    }
                    d_mix[o * f + fi] += acc;
                    let w = self.kernel_mix.data()[o * f + fi];
                    let dn = &mut d_noisy[(bi * f + fi) * pix..][..pix];
                    for (d, &g) in dn.iter_mut().zip(dp) {
                        *d += w * g;
                    }
                }
            }
        }

        // Through the noise: d_maps = d_noisy . r.
        if cache.noise.rank() == 2 {
            for bi in 0..b {
                for fi in 0..f {
                    let r = cache.noise.data()[bi * f + fi];
                    for v in &mut d_noisy[(bi * f + fi) * pix..][..pix] {
                        *v *= r;
                    }
                }
            }
        } else {
            for (v, &r) in d_noisy.iter_mut().zip(cache.noise.data()) {
                *v *= r;
            }
        }

        // Gradient of the spatial kernels: correlate d_maps with the input.
        let [_, c_in, h, w] = [
            img.shape()[0],
            img.shape()[1],
            img.shape()[2],
            img.shape()[3],
        ];
        let (kh, kw) = (self.kernel_spatial.shape()[2], self.kernel_spatial.shape()[3]);
        let mut d_spatial = vec![0.0; f * c_in * kh * kw];
        for bi in 0..b {
            for fi in 0..f {
                let dm = &d_noisy[(bi * f + fi) * pix..][..pix];
                for c in 0..c_in {
                    for a in 0..kh {
                        for bb in 0..kw {
                            let mut acc = 0.0;
                            for y in 0..oh {
                                let irow = ((bi * c_in + c) * h + (y + a)) * w + bb;
                                let drow = y * ow;
                                for x in 0..ow {
                                    acc += dm[drow + x] * img.data()[irow + x];
                                }
                            }
                            d_spatial[((fi * c_in + c) * kh + a) * kw + bb] += acc;
                        }
                    }
                }
            }
        }

        Ok(ConvGrads {
            d_spatial: Tensor::new(vec![f, c_in, kh, kw], d_spatial)?,
            d_mix: Tensor::new(vec![c_out, f], d_mix)?,
            d_bias: Tensor::new(vec![c_out], d_bias)?,
        })
    }
}
