//! Binary checkpoints: little-endian, magic `FAME`, version 1.
//!
//! Layout:
//! - magic `b"FAME"`, version `u32`
//! - length-prefixed (u64) UTF-8 canonical config text
//! - `epoch: u64`, `updates_done: u64`
//! - input-noise block
//! - `n_layers: u32`, then per layer: kind `u8`, activation `u8`, noise
//!   block, parameter tensors in declaration order (dense/dropout: W, b;
//!   factored: U, V, b), each tensor as rank `u32`, extents `u32...`,
//!   values `f64...`
//! - per-layer initialization norms (`f64` each)
//! - velocity tensor count `u32` + tensors (same framing)
//! - RNG stream count `u32` + `(key u64, counter u64)` pairs, input stream
//!   first, then one per layer
//!
//! A checkpoint must end exactly there; trailing bytes or truncation are
//! rejected. `load(save(x))` is bit-identical and a resumed run reproduces
//! the uninterrupted one exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::layers::{DenseLayer, DropoutWrapper, FaMeDenseLayer};
use crate::network::{Network, NoiseStreams, StackLayer};
use crate::noise::NoiseSpec;
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FAME";
pub const VERSION: u32 = 1;

/// Training progress that must survive a save/load cycle for exact resume.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub updates_done: usize,
    pub init_norms: Vec<f64>,
    pub noise_streams: NoiseStreams,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config_text: String,
    pub network: Network,
    pub velocities: Vec<Tensor>,
    pub state: TrainState,
}

fn w_u32(out: &mut impl Write, v: u32) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_u64(out: &mut impl Write, v: u64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_f64(out: &mut impl Write, v: f64) -> Result<()> {
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn w_tensor(out: &mut impl Write, t: &Tensor) -> Result<()> {
    w_u32(out, t.rank() as u32)?;
    for &d in t.shape() {
        w_u32(out, d as u32)?;
    }
    for &v in t.data() {
        w_f64(out, v)?;
    }
    Ok(())
}

fn w_noise(out: &mut impl Write, n: Option<NoiseSpec>) -> Result<()> {
    match n {
        None => {
            out.write_all(&[0u8])?;
            w_f64(out, 0.0)?;
            w_f64(out, 0.0)?;
        }
        Some(NoiseSpec::Bernoulli { p }) => {
            out.write_all(&[1u8])?;
            w_f64(out, p)?;
            w_f64(out, 0.0)?;
        }
        Some(NoiseSpec::Gaussian { mean, std }) => {
            out.write_all(&[2u8])?;
            w_f64(out, mean)?;
            w_f64(out, std)?;
        }
    }
    Ok(())
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| Error::Checkpoint(format!("truncated while reading {what}")))?;
        Ok(buf)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self, what: &str) -> Result<Tensor> {
        let rank = self.u32(what)? as usize;
        if rank == 0 || rank > 4 {
            return Err(Error::Checkpoint(format!("{what}: bad tensor rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32(what)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f64(what)?);
        }
        Tensor::new(shape, data)
    }

    fn noise(&mut self, what: &str) -> Result<Option<NoiseSpec>> {
        let tag = self.u8(what)?;
        let a = self.f64(what)?;
        let b = self.f64(what)?;
        match tag {
            0 => Ok(None),
            1 => Ok(Some(NoiseSpec::Bernoulli { p: a })),
            2 => Ok(Some(NoiseSpec::Gaussian { mean: a, std: b })),
            _ => Err(Error::Checkpoint(format!("{what}: bad noise tag {tag}"))),
        }
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
        Activation::Softmax => 2,
    }
}

fn activation_from(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Relu),
        2 => Ok(Activation::Softmax),
        _ => Err(Error::Checkpoint(format!("bad activation code {code}"))),
    }
}

pub fn save_checkpoint(
    path: &Path,
    config_text: &str,
    network: &Network,
    velocities: &[Tensor],
    state: &TrainState,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    w_u32(&mut out, VERSION)?;
    w_u64(&mut out, config_text.len() as u64)?;
    out.write_all(config_text.as_bytes())?;
    w_u64(&mut out, state.epoch as u64)?;
    w_u64(&mut out, state.updates_done as u64)?;
    w_noise(&mut out, network.input_noise)?;
    w_u32(&mut out, network.layers.len() as u32)?;
    for layer in &network.layers {
        match layer {
            StackLayer::Dense(l) => {
                out.write_all(&[0u8])?;
                out.write_all(&[activation_code(l.activation)])?;
                w_noise(&mut out, None)?;
                w_tensor(&mut out, &l.weights)?;
                w_tensor(&mut out, &l.bias)?;
            }
            StackLayer::Fame(l) => {
                out.write_all(&[1u8])?;
                out.write_all(&[activation_code(l.activation)])?;
                w_noise(&mut out, Some(l.noise))?;
                w_tensor(&mut out, &l.factor_u)?;
                w_tensor(&mut out, &l.factor_v)?;
                w_tensor(&mut out, &l.bias)?;
            }
            StackLayer::Dropout(l) => {
                out.write_all(&[2u8])?;
                out.write_all(&[activation_code(l.inner.activation)])?;
                w_noise(&mut out, Some(l.noise))?;
                w_tensor(&mut out, &l.inner.weights)?;
                w_tensor(&mut out, &l.inner.bias)?;
            }
        }
    }
    if state.init_norms.len() != network.layers.len() {
        return Err(Error::Checkpoint(format!(
            "{} init norms for {} layers",
            state.init_norms.len(),
            network.layers.len()
        )));
    }
    for &n in &state.init_norms {
        w_f64(&mut out, n)?;
    }
    w_u32(&mut out, velocities.len() as u32)?;
    for v in velocities {
        w_tensor(&mut out, v)?;
    }
    let streams = &state.noise_streams;
    w_u32(&mut out, 1 + streams.layers.len() as u32)?;
    let (k, c) = streams.input.state();
    w_u64(&mut out, k)?;
    w_u64(&mut out, c)?;
    for s in &streams.layers {
        let (k, c) = s.state();
        w_u64(&mut out, k)?;
        w_u64(&mut out, c)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = Reader { inner: BufReader::new(File::open(path)?) };
    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic {magic:?}, expected {MAGIC:?}"
        )));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let cfg_len = r.u64("config length")? as usize;
    let config_text = String::from_utf8(r.bytes(cfg_len, "config text")?)
        .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
    let epoch = r.u64("epoch")? as usize;
    let updates_done = r.u64("updates_done")? as usize;
    let input_noise = r.noise("input noise")?;
    let n_layers = r.u32("layer count")? as usize;

    let mut layers = Vec::with_capacity(n_layers);
    for i in 0..n_layers {
        let what = format!("layer {i}");
        let kind = r.u8(&what)?;
        let activation = activation_from(r.u8(&what)?)?;
        let noise = r.noise(&what)?;
        let layer = match kind {
            0 => StackLayer::Dense(DenseLayer::new(
                r.tensor(&what)?,
                r.tensor(&what)?,
                activation,
            )?),
            1 => {
                let noise = noise.ok_or_else(|| {
                    Error::Checkpoint(format!("{what}: factored layer without noise"))
                })?;
                StackLayer::Fame(FaMeDenseLayer::new(
                    r.tensor(&what)?,
                    r.tensor(&what)?,
                    r.tensor(&what)?,
                    activation,
                    noise,
                )?)
            }
            2 => {
                let noise = noise.ok_or_else(|| {
                    Error::Checkpoint(format!("{what}: dropout layer without noise"))
                })?;
                StackLayer::Dropout(DropoutWrapper::new(
                    DenseLayer::new(r.tensor(&what)?, r.tensor(&what)?, activation)?,
                    noise,
                )?)
            }
            _ => return Err(Error::Checkpoint(format!("{what}: bad layer kind {kind}"))),
        };
        layers.push(layer);
    }
    let network = Network::new(input_noise, layers)?;

    let mut init_norms = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        init_norms.push(r.f64("init norms")?);
    }
    let n_vel = r.u32("velocity count")? as usize;
    let mut velocities = Vec::with_capacity(n_vel);
    for _ in 0..n_vel {
        velocities.push(r.tensor("velocity")?);
    }
    let n_streams = r.u32("rng stream count")? as usize;
    if n_streams != 1 + n_layers {
        return Err(Error::Checkpoint(format!(
            "{n_streams} rng streams for {n_layers} layers"
        )));
    }
    let input = RngState::from_state(r.u64("rng")?, r.u64("rng")?);
    let mut layer_streams = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        layer_streams.push(RngState::from_state(r.u64("rng")?, r.u64("rng")?));
    }
    // Exactly at EOF now.
    if r.inner.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }

    Ok(Checkpoint {
        config_text,
        network,
        velocities,
        state: TrainState {
            epoch,
            updates_done,
            init_norms,
            noise_streams: NoiseStreams { input, layers: layer_streams },
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseSpec;

    fn random_network(seed: u64) -> Network {
        let mut rng = RngState::new(seed);
        Network::new(
            Some(NoiseSpec::Gaussian { mean: 1.0, std: 0.5 }),
            vec![
                StackLayer::Fame(
                    FaMeDenseLayer::init(
                        5,
                        4,
                        4,
                        Activation::Relu,
                        NoiseSpec::Gaussian { mean: 1.0, std: 1.0 },
                        &mut rng,
                    )
                    .unwrap(),
                ),
                StackLayer::Dropout(
                    DropoutWrapper::new(
                        DenseLayer::init(3, 5, Activation::Identity, &mut rng),
                        NoiseSpec::Bernoulli { p: 0.8 },
                    )
                    .unwrap(),
                ),
            ],
        )
        .unwrap()
    }

    fn random_state(net: &Network, seed: u64) -> (Vec<Tensor>, TrainState) {
        let mut rng = RngState::new(seed);
        let mut velocities = Vec::new();
        net.visit_params(&mut |t, _| {
            let data = (0..t.len()).map(|_| rng.next_gaussian()).collect();
            velocities.push(Tensor::new(t.shape().to_vec(), data).unwrap());
        });
        let mut streams = NoiseStreams::new(seed, net.layers.len());
        for _ in 0..13 {
            streams.input.next_u64();
            streams.layers[0].next_gaussian();
        }
        (
            velocities,
            TrainState {
                epoch: 4,
                updates_done: 129,
                init_norms: vec![1.25, 0.75],
                noise_streams: streams,
            },
        )
    }

    fn tmp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("fame-ckpt-{}-{name}", std::process::id()))
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let net = random_network(7);
        let (vel, state) = random_state(&net, 8);
        let path = tmp("roundtrip");
        save_checkpoint(&path, "cfg=1\n", &net, &vel, &state).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.config_text, "cfg=1\n");
        assert_eq!(ck.network, net);
        assert_eq!(ck.velocities, vel);
        assert_eq!(ck.state.epoch, 4);
        assert_eq!(ck.state.updates_done, 129);
        assert_eq!(ck.state.init_norms, state.init_norms);
        assert_eq!(ck.state.noise_streams.input, state.noise_streams.input);
        assert_eq!(ck.state.noise_streams.layers, state.noise_streams.layers);

        // Saving the loaded checkpoint gives identical bytes.
        let path2 = tmp("roundtrip2");
        save_checkpoint(&path2, &ck.config_text, &ck.network, &ck.velocities, &ck.state)
            .unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn tampered_magic_is_rejected() {
        let net = random_network(9);
        let (vel, state) = random_state(&net, 10);
        let path = tmp("magic");
        save_checkpoint(&path, "", &net, &vel, &state).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn truncation_and_trailing_bytes_are_rejected() {
        let net = random_network(11);
        let (vel, state) = random_state(&net, 12);
        let path = tmp("trunc");
        save_checkpoint(&path, "x=1\n", &net, &vel, &state).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));

        let mut extended = bytes.clone();
        extended.push(0);
        std::fs::write(&path, extended).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let net = random_network(13);
        let (vel, state) = random_state(&net, 14);
        let path = tmp("version");
        save_checkpoint(&path, "", &net, &vel, &state).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 99;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
