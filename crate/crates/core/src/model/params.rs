use super::{Float, ModelConfig, ModelError};
use crate::concepts::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_layer_norm(&self) -> bool {
        self.shape.len() == 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct LnIdx {
    pub g: usize,
    pub b: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct AttnIdx {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct FfnIdx {
    pub w1: usize,
    pub w2: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct EncLayerIdx {
    pub ln1: LnIdx,
    pub attn: AttnIdx,
    pub ln2: LnIdx,
    pub ffn: FfnIdx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct DecLayerIdx {
    pub ln1: LnIdx,
    pub self_attn: AttnIdx,
    pub ln2: LnIdx,
    pub cross: AttnIdx,
    pub ln3: LnIdx,
    pub ffn: FfnIdx,
}

/// Tensor indices for every named parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub embed: usize,
    /// Output projection; equal to `embed` when tied.
    pub out: usize,
    pub enc_pos: usize,
    pub dec_pos: usize,
    pub enc: Vec<EncLayerIdx>,
    pub enc_ln: LnIdx,
    pub dec: Vec<DecLayerIdx>,
    pub dec_ln: LnIdx,
}

struct Builder<T> {
    tensors: Vec<Tensor<T>>,
}

impl<T: Float> Builder<T> {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        self.tensors.push(Tensor::zeros(name, shape));
        self.tensors.len() - 1
    }

    fn ln(&mut self, prefix: &str, d: usize) -> LnIdx {
        LnIdx {
            g: self.add(format!("{prefix}.g"), vec![d]),
            b: self.add(format!("{prefix}.b"), vec![d]),
        }
    }

    fn attn(&mut self, prefix: &str, d: usize) -> AttnIdx {
        AttnIdx {
            wq: self.add(format!("{prefix}.wq"), vec![d, d]),
            wk: self.add(format!("{prefix}.wk"), vec![d, d]),
            wv: self.add(format!("{prefix}.wv"), vec![d, d]),
            wo: self.add(format!("{prefix}.wo"), vec![d, d]),
        }
    }

    fn ffn(&mut self, prefix: &str, d: usize, f: usize) -> FfnIdx {
        FfnIdx {
            w1: self.add(format!("{prefix}.w1"), vec![d, f]),
            w2: self.add(format!("{prefix}.w2"), vec![f, d]),
        }
    }
}

fn build<T: Float>(cfg: &ModelConfig, tied: bool) -> (Vec<Tensor<T>>, Layout) {
    let (d, f, l) = (cfg.d_model, cfg.d_ffn, cfg.max_seq_len);
    let mut b = Builder { tensors: Vec::new() };
    let embed = b.add("embed".into(), vec![cfg.vocab_size, d]);
    let enc_pos = b.add("enc.pos".into(), vec![l, d]);
    let dec_pos = b.add("dec.pos".into(), vec![l, d]);
    let enc = (0..cfg.n_enc_layers)
        .map(|i| EncLayerIdx {
            ln1: b.ln(&format!("enc.{i}.ln1"), d),
            attn: b.attn(&format!("enc.{i}.attn"), d),
            ln2: b.ln(&format!("enc.{i}.ln2"), d),
            ffn: b.ffn(&format!("enc.{i}.ffn"), d, f),
        })
        .collect();
    let enc_ln = b.ln("enc.ln", d);
    let dec = (0..cfg.n_dec_layers)
        .map(|i| DecLayerIdx {
            ln1: b.ln(&format!("dec.{i}.ln1"), d),
            self_attn: b.attn(&format!("dec.{i}.self"), d),
            ln2: b.ln(&format!("dec.{i}.ln2"), d),
            cross: b.attn(&format!("dec.{i}.cross"), d),
            ln3: b.ln(&format!("dec.{i}.ln3"), d),
            ffn: b.ffn(&format!("dec.{i}.ffn"), d, f),
        })
        .collect();
    let dec_ln = b.ln("dec.ln", d);
    let out = if tied {
        embed
    } else {
        b.add("out".into(), vec![cfg.vocab_size, d])
    };
    (
        b.tensors,
        Layout {
            embed,
            out,
            enc_pos,
            dec_pos,
            enc,
            enc_ln,
            dec,
            dec_ln,
        },
    )
}

/// The single parameter store shared by every role the model plays.
///
/// The token embedding doubles as the output projection. Each mutable access
/// bumps `version`, which invalidates outstanding forward traces.
#[derive(Clone, Debug)]
pub struct ParameterStore<T> {
    config: ModelConfig,
    tensors: Vec<Tensor<T>>,
    pub(crate) layout: Layout,
    version: u64,
}

impl<T: Float> ParameterStore<T> {
    /// All-zero parameters with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let (tensors, layout) = build(config, true);
        Ok(Self {
            config: config.clone(),
            tensors,
            layout,
            version: 0,
        })
    }

    /// Truncated-normal (std 0.02, cut at two standard deviations) weights,
    /// unit layer-norm gains and zero layer-norm biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        let mut p = Self::zeros(config)?;
        let mut rng = SeededRng::new(seed);
        for t in &mut p.tensors {
            if t.is_layer_norm() {
                let fill = if t.name.ends_with(".g") { T::one() } else { T::zero() };
                t.data.iter_mut().for_each(|x| *x = fill);
            } else {
                for x in &mut t.data {
                    let z = loop {
                        let z = rng.normal();
                        if z.abs() <= 2.0 {
                            break z;
                        }
                    };
                    *x = T::of(0.02 * z);
                }
            }
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    /// Mutable access; invalidates existing traces.
    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        self.version += 1;
        &mut self.tensors
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn data(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Flat coordinate access, used by finite-difference checks.
    pub fn get_flat(&self, tensor: usize, offset: usize) -> T {
        self.tensors[tensor].data[offset]
    }

    pub fn set_flat(&mut self, tensor: usize, offset: usize, value: T) {
        self.version += 1;
        self.tensors[tensor].data[offset] = value;
    }

    /// Element-wise conversion to another precision.
    pub fn cast<U: Float>(&self) -> ParameterStore<U> {
        ParameterStore {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|x| U::of(x.as_f64())).collect(),
                })
                .collect(),
            layout: self.layout.clone(),
            version: 0,
        }
    }

    pub(crate) fn from_tensors(config: &ModelConfig, tensors: Vec<Tensor<T>>) -> Result<Self, ModelError> {
        let mut p = Self::zeros(config)?;
        if tensors.len() != p.tensors.len() {
            return Err(ModelError::Manifest(format!(
                "expected {} tensors, found {}",
                p.tensors.len(),
                tensors.len()
            )));
        }
        for (have, want) in tensors.iter().zip(&p.tensors) {
            if have.name != want.name || have.shape != want.shape {
                return Err(ModelError::ShapeMismatch {
                    tensor: want.name.clone(),
                    expected: want.shape.clone(),
                    found: have.shape.clone(),
                });
            }
        }
        p.tensors = tensors;
        Ok(p)
    }

    /// Copy with a separate output projection initialised to the embedding.
    #[cfg(test)]
    pub(crate) fn untied(&self) -> Self {
        let (mut tensors, layout) = build::<T>(&self.config, false);
        for (t, src) in tensors.iter_mut().zip(&self.tensors) {
            t.data.clone_from(&src.data);
        }
        tensors[layout.out].data.clone_from(&self.tensors[layout.embed].data);
        Self {
            config: self.config.clone(),
            tensors,
            layout,
            version: 0,
        }
    }

    /// Gradient buffers with matching shapes.
    pub fn zeros_like(&self) -> Gradients<T> {
        Gradients {
            tensors: self.tensors.iter().map(|t| vec![T::zero(); t.numel()]).collect(),
        }
    }
}

/// One gradient buffer per parameter tensor, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Float> Gradients<T> {
    pub(crate) fn get_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.tensors[idx]
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, scale: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().flatten().all(|x| *x == T::zero())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.as_f64().abs()))
    }
}
