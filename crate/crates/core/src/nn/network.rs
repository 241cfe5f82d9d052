use crate::error::{Error, Result};
use crate::nn::layer::Layer;
use crate::nn::loss::{Batch, LossKind, OutputLoss, TargetLoss};
use crate::sparsity::SparsityMask;
use crate::tensor::Tensor;

/// Role of a parameter tensor inside its layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
}

/// Location of a parameter tensor. Parameter tensors are numbered in layer
/// order, weights before bias; that flat number is what masks, candidate sets
/// and packed files refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamInfo {
    pub layer: usize,
    pub slot: usize,
    pub role: ParamRole,
    pub len: usize,
}

/// One gradient tensor per parameter tensor, in flat parameter order.
pub type Gradients = Vec<Tensor>;

/// An ordered stack of layers over a fixed per-sample input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network and checks that consecutive layer shapes compose.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("invalid input shape {input_shape:?}")));
        }
        let net = Network {
            input_shape,
            layers,
        };
        net.shapes()?;
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Per-sample shapes: `shapes()[0]` is the input, `shapes()[i + 1]` the
    /// output of layer `i`.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> usize {
        self.shapes()
            .map(|s| s.last().unwrap().iter().product())
            .unwrap_or(0)
    }

    pub fn param_infos(&self) -> Vec<ParamInfo> {
        let mut out = Vec::new();
        for (layer, l) in self.layers.iter().enumerate() {
            for (slot, t) in l.params().into_iter().enumerate() {
                out.push(ParamInfo {
                    layer,
                    slot,
                    role: if slot == 0 {
                        ParamRole::Weight
                    } else {
                        ParamRole::Bias
                    },
                    len: t.len(),
                });
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param(&self, index: usize) -> Option<&Tensor> {
        self.params().into_iter().nth(index)
    }

    pub fn param_mut(&mut self, index: usize) -> Option<&mut Tensor> {
        self.params_mut().into_iter().nth(index)
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Flat indices of weight tensors (kernels included), excluding biases.
    pub fn weight_tensors(&self) -> Vec<usize> {
        self.param_infos()
            .iter()
            .enumerate()
            .filter(|(_, p)| p.role == ParamRole::Weight)
            .map(|(i, _)| i)
            .collect()
    }

    fn check_inputs(&self, inputs: &Tensor) -> Result<usize> {
        let per_sample: usize = self.input_shape.iter().product();
        if inputs.shape().len() < 2 || inputs.row_len() != per_sample {
            return Err(Error::Shape(format!(
                "input {:?} does not match network input {:?}",
                inputs.shape(),
                self.input_shape
            )));
        }
        Ok(inputs.rows())
    }

    /// Activations for every layer boundary, input first.
    fn activations(&self, inputs: &Tensor) -> Result<Vec<Vec<f64>>> {
        let n = self.check_inputs(inputs)?;
        let shapes = self.shapes()?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(inputs.data().to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(i, acts.last().unwrap(), n, &shapes[i])?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Output tensor `[n, out_len]`.
    pub fn forward(&self, inputs: &Tensor) -> Result<Tensor> {
        let n = self.check_inputs(inputs)?;
        let shapes = self.shapes()?;
        let mut cur: Option<Vec<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let src = cur.as_deref().unwrap_or(inputs.data());
            cur = Some(layer.forward(i, src, n, &shapes[i])?);
        }
        let data = cur.unwrap_or_else(|| inputs.data().to_vec());
        let out_len = data.len() / n;
        let out = Tensor::new(vec![n, out_len], data)?;
        if !out.all_finite() {
            return Err(Error::NonFinite("forward".into()));
        }
        Ok(out)
    }

    /// Loss value and gradients of an arbitrary output loss.
    pub fn loss_and_gradients(
        &self,
        inputs: &Tensor,
        loss: &dyn OutputLoss,
    ) -> Result<(f64, Gradients)> {
        let n = self.check_inputs(inputs)?;
        let shapes = self.shapes()?;
        let acts = self.activations(inputs)?;
        let out_data = acts.last().unwrap().clone();
        let out_len = out_data.len() / n;
        let outputs = Tensor::new(vec![n, out_len], out_data)?;
        let (value, grad_out) = loss.loss_and_grad(&outputs)?;
        if grad_out.shape() != outputs.shape() {
            return Err(Error::Shape("loss gradient shape differs from outputs".into()));
        }

        let mut grads: Gradients = self
            .params()
            .iter()
            .map(|t| Tensor::zeros(t.shape().to_vec()))
            .collect();
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let start = *acc;
                *acc += l.params().len();
                Some(start)
            })
            .collect();

        let mut g = grad_out.into_data();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let np = layer.params().len();
            let slot = &mut grads[offsets[i]..offsets[i] + np];
            g = layer.backward(i, &acts[i], &acts[i + 1], &g, n, &shapes[i], slot)?;
        }
        if !value.is_finite() || grads.iter().any(|t| !t.all_finite()) {
            return Err(Error::NonFinite("backward".into()));
        }
        Ok((value, grads))
    }

    /// Gradients of `loss_kind` against the batch targets.
    pub fn backward(&self, batch: &Batch, loss_kind: LossKind) -> Result<Gradients> {
        let targets = batch
            .targets
            .as_ref()
            .ok_or_else(|| Error::MissingTargets("backward needs batch targets".into()))?;
        let loss = TargetLoss {
            kind: loss_kind,
            targets,
        };
        Ok(self.loss_and_gradients(&batch.inputs, &loss)?.1)
    }

    /// `w ← w − lr·g`; positions pruned in `mask` stay exactly zero.
    pub fn sgd_step(
        &mut self,
        grads: &[Tensor],
        lr: f64,
        mask: Option<&SparsityMask>,
    ) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        let params = self.params();
        if grads.len() != params.len()
            || grads.iter().zip(&params).any(|(g, p)| g.shape() != p.shape())
        {
            return Err(Error::Shape("gradients do not match parameters".into()));
        }
        if let Some(m) = mask {
            m.check_network(self)?;
        }
        for (t, (p, g)) in self.params_mut().into_iter().zip(grads).enumerate() {
            for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * gv;
            }
            if let Some(m) = mask {
                for i in m.tensor(t).iter_ones() {
                    p.data_mut()[i] = 0.0;
                }
            }
            if !p.all_finite() {
                return Err(Error::NonFinite(format!("sgd_step on parameter tensor {t}")));
            }
        }
        Ok(())
    }

    /// Fraction of samples whose argmax output equals the label.
    pub fn accuracy(&self, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::Empty("accuracy over an empty dataset".into()));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::Shape(format!(
                "{} labels for {} samples",
                labels.len(),
                inputs.rows()
            )));
        }
        let pred = self.forward(inputs)?.argmax_rows();
        let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}
