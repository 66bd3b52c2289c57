//! Sequential layer stacks that record what the backward pass needs.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

use super::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, dropout_backward, dropout_forward, he_init,
    leaky_relu, leaky_relu_backward, maxpool_backward, maxpool_forward, PoolIndices,
};

/// Forward-pass mode. Training mode samples dropout masks and records the
/// caches required by [`LayerStack::backward`].
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Inference,
}

impl Mode<'_> {
    fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }
}

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv2d {
        name: String,
        weight: Param<T>,
        bias: Param<T>,
        /// False for the first layer, whose input gradient nobody reads.
        input_grad: bool,
        cache: Option<Tensor<T>>,
    },
    LeakyRelu {
        cache: Option<Tensor<T>>,
    },
    MaxPool {
        cache: Option<(Vec<usize>, PoolIndices)>,
    },
    Dropout {
        rate: f64,
        cache: Option<Tensor<T>>,
    },
    Flatten {
        cache: Option<Vec<usize>>,
    },
    Dense {
        name: String,
        weight: Param<T>,
        bias: Param<T>,
        cache: Option<Tensor<T>>,
    },
}

impl<T: Real> Layer<T> {
    /// He-initialized 3x3 convolution; biases start at zero.
    pub fn conv(name: &str, cin: usize, cout: usize, input_grad: bool, rng: &mut Rng) -> Result<Self> {
        Ok(Layer::Conv2d {
            name: name.to_string(),
            weight: Param::new(he_init(&[3, 3, cin, cout], 9 * cin, rng)?),
            bias: Param::new(Tensor::zeros(&[cout])),
            input_grad,
            cache: None,
        })
    }

    pub fn dense(name: &str, n_in: usize, n_out: usize, rng: &mut Rng) -> Result<Self> {
        Ok(Layer::Dense {
            name: name.to_string(),
            weight: Param::new(he_init(&[n_in, n_out], n_in, rng)?),
            bias: Param::new(Tensor::zeros(&[n_out])),
            cache: None,
        })
    }

    pub fn leaky_relu() -> Self {
        Layer::LeakyRelu { cache: None }
    }

    pub fn max_pool() -> Self {
        Layer::MaxPool { cache: None }
    }

    pub fn dropout(rate: f64) -> Self {
        Layer::Dropout { rate, cache: None }
    }

    pub fn flatten() -> Self {
        Layer::Flatten { cache: None }
    }

    pub fn forward(&mut self, x: Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        let train = mode.is_train();
        match self {
            Layer::Conv2d { weight, bias, cache, .. } => {
                let y = conv2d_forward(&x, &weight.value, &bias.value)?;
                *cache = train.then_some(x);
                Ok(y)
            }
            Layer::LeakyRelu { cache } => {
                let y = leaky_relu(&x);
                *cache = train.then_some(x);
                Ok(y)
            }
            Layer::MaxPool { cache } => {
                let (y, idx) = maxpool_forward(&x)?;
                *cache = train.then(|| (x.shape().to_vec(), idx));
                Ok(y)
            }
            Layer::Dropout { rate, cache } => match mode {
                Mode::Train(rng) => {
                    let (y, mask) = dropout_forward(&x, *rate, rng, true)?;
                    *cache = Some(mask);
                    Ok(y)
                }
                Mode::Inference => {
                    *cache = None;
                    Ok(x)
                }
            },
            Layer::Flatten { cache } => {
                let shape = x.shape().to_vec();
                if shape.is_empty() {
                    return Err(Error::shape("flatten: scalar input"));
                }
                let batch = shape[0];
                let rest: usize = shape[1..].iter().product();
                *cache = train.then_some(shape);
                x.reshape(&[batch, rest])
            }
            Layer::Dense { weight, bias, cache, .. } => {
                let y = dense_forward(&x, &weight.value, &bias.value)?;
                *cache = train.then_some(x);
                Ok(y)
            }
        }
    }

    /// Consumes the recorded cache, accumulates parameter gradients and
    /// returns the gradient with respect to the layer input.
    pub fn backward(&mut self, grad: Tensor<T>) -> Result<Tensor<T>> {
        let missing = || Error::State("backward called without a recorded forward pass".into());
        match self {
            Layer::Conv2d {
                weight,
                bias,
                input_grad,
                cache,
                ..
            } => {
                let x = cache.take().ok_or_else(missing)?;
                let g = conv2d_backward(&x, &weight.value, &grad, *input_grad)?;
                weight.grad.add_assign(&g.weights)?;
                bias.grad.add_assign(&g.bias)?;
                Ok(g.input.unwrap_or_else(|| Tensor::zeros(x.shape())))
            }
            Layer::LeakyRelu { cache } => {
                let x = cache.take().ok_or_else(missing)?;
                Ok(leaky_relu_backward(&x, &grad))
            }
            Layer::MaxPool { cache } => {
                let (shape, idx) = cache.take().ok_or_else(missing)?;
                maxpool_backward(&shape, &idx, &grad)
            }
            Layer::Dropout { cache, .. } => {
                let mask = cache.take().ok_or_else(missing)?;
                dropout_backward(&mask, &grad)
            }
            Layer::Flatten { cache } => {
                let shape = cache.take().ok_or_else(missing)?;
                grad.reshape(&shape)
            }
            Layer::Dense { weight, bias, cache, .. } => {
                let x = cache.take().ok_or_else(missing)?;
                let g = dense_backward(&x, &weight.value, &grad)?;
                weight.grad.add_assign(&g.weights)?;
                bias.grad.add_assign(&g.bias)?;
                Ok(g.input)
            }
        }
    }

    /// `(name, param)` pairs, e.g. `conv1.weight`.
    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        match self {
            Layer::Conv2d { name, weight, bias, .. } | Layer::Dense { name, weight, bias, .. } => {
                vec![(format!("{name}.weight"), weight), (format!("{name}.bias"), bias)]
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        match self {
            Layer::Conv2d { name, weight, bias, .. } | Layer::Dense { name, weight, bias, .. } => {
                vec![(format!("{name}.weight"), weight), (format!("{name}.bias"), bias)]
            }
            _ => Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct LayerStack<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> LayerStack<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        LayerStack { layers }
    }

    pub fn forward(&mut self, mut x: Tensor<T>, mode: &mut Mode<'_>) -> Result<Tensor<T>> {
        for layer in &mut self.layers {
            x = layer.forward(x, mode)?;
        }
        Ok(x)
    }

    /// Reverse-mode pass through every layer, last to first.
    pub fn backward(&mut self, mut grad: Tensor<T>) -> Result<Tensor<T>> {
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(grad)?;
        }
        Ok(grad)
    }

    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.grad.fill(T::zero());
        }
    }
}
