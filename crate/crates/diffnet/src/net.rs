use rand::Rng;

use crate::error::{dim_err, DiffnetError, Result};
use crate::layers::{cache_out_shape, BackwardCtx, Cache, GradFault, Layer, LayerSpec};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// A sequential network over a fixed per-sample input shape.
///
/// [`Net::forward`] records what [`Net::backward`] needs; the record is
/// consumed by the backward pass, so a second backward without a fresh
/// forward is an error. [`Net::infer`] evaluates without recording.
#[derive(Debug)]
pub struct Net {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    params: ParamStore,
    record: Option<Vec<Cache>>,
    fault: Option<GradFault>,
}

impl Clone for Net {
    fn clone(&self) -> Self {
        Self {
            input_shape: self.input_shape.clone(),
            output_shape: self.output_shape.clone(),
            specs: self.specs.clone(),
            layers: self.layers.clone(),
            params: self.params.clone(),
            record: None,
            fault: self.fault,
        }
    }
}

impl Net {
    /// Builds the layer stack, registering parameters as `{prefix}/{index}/...`.
    pub fn new(prefix: &str, input_shape: &[usize], specs: &[LayerSpec], rng: &mut impl Rng) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return dim_err(format!("invalid input shape {input_shape:?}"));
        }
        let mut params = ParamStore::new();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, spec) in specs.iter().enumerate() {
            let (layer, next) = Layer::build(spec, &shape, &format!("{prefix}/{i}"), &mut params, rng)?;
            layers.push(layer);
            shape = next;
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            output_shape: shape,
            specs: specs.to_vec(),
            layers,
            params,
            record: None,
            fault: None,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Renames every parameter prefix, e.g. when deriving a target copy.
    pub fn rename_params(&mut self, from: &str, to: &str) -> Result<()> {
        self.params = self.params.renamed(from, to)?;
        Ok(())
    }

    #[doc(hidden)]
    pub fn set_fault(&mut self, fault: Option<GradFault>) {
        self.fault = fault;
    }

    fn shaped_input(&self, input: &Tensor) -> Result<Tensor> {
        if input.shape().len() < 2 || input.sample_len() != self.input_len() {
            return dim_err(format!(
                "network expects per-sample shape {:?} ({} values), got tensor of shape {:?}",
                self.input_shape,
                self.input_len(),
                input.shape()
            ));
        }
        let mut shape = vec![input.batch()];
        shape.extend_from_slice(&self.input_shape);
        input.clone().reshape(shape)
    }

    fn run(&self, input: &Tensor, record: bool, mut pattern: Option<&mut Vec<bool>>) -> Result<(Tensor, Vec<Cache>)> {
        let mut x = self.shaped_input(input)?;
        let mut caches = Vec::with_capacity(if record { self.layers.len() } else { 0 });
        for layer in &self.layers {
            let (y, c) = layer.forward(x, &self.params, record, pattern.as_deref_mut())?;
            x = y;
            if let Some(c) = c {
                caches.push(c);
            }
        }
        if !x.all_finite() {
            return Err(DiffnetError::Numeric("non-finite network output".into()));
        }
        Ok((x, caches))
    }

    /// Forward pass that records intermediates for a later backward pass.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.record = None;
        let (y, caches) = self.run(input, true, None)?;
        self.record = Some(caches);
        Ok(y)
    }

    /// Forward pass without recording; leaves any pending record untouched.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false, None)?.0)
    }

    /// Like [`Net::infer`], also returning the sign pattern of every relu
    /// pre-activation. Two evaluations with equal patterns lie in the same
    /// piecewise-smooth region.
    pub fn infer_with_pattern(&self, input: &Tensor) -> Result<(Tensor, Vec<bool>)> {
        let mut pattern = Vec::new();
        let (y, _) = self.run(input, false, Some(&mut pattern))?;
        Ok((y, pattern))
    }

    fn backward_impl(&mut self, upstream: &Tensor, param_grads: bool, want_input: bool) -> Result<Option<Tensor>> {
        let mut caches = self
            .record
            .take()
            .ok_or_else(|| DiffnetError::State("backward requires a preceding forward".into()))?;
        let batch = upstream.batch();
        if upstream.sample_len() != self.output_len() {
            return dim_err(format!(
                "upstream gradient has {} values per sample, network emits {}",
                upstream.sample_len(),
                self.output_len()
            ));
        }
        if param_grads {
            self.params.zero_grads();
        }
        let mut ctx = BackwardCtx { store: &mut self.params, param_grads, fault: self.fault };
        let mut g = Some(upstream.clone());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let cache = caches.pop().expect("one cache per layer");
            let shape = cache_out_shape(layer, &cache, batch);
            let grad = g.take().expect("upstream gradient present").reshape(shape)?;
            g = layer.backward(cache, grad, &mut ctx, want_input || i > 0)?;
            if g.is_none() && i > 0 {
                break;
            }
        }
        if !want_input {
            return Ok(None);
        }
        let mut g = g.expect("input gradient was requested");
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.input_shape);
        g = g.reshape(shape)?;
        Ok(Some(g))
    }

    /// Populates (overwrites) every gradient slot and returns the input gradient.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Tensor> {
        Ok(self.backward_impl(upstream, true, true)?.expect("input gradient"))
    }

    /// Populates gradient slots without propagating to the network input.
    pub fn backward_params(&mut self, upstream: &Tensor) -> Result<()> {
        self.backward_impl(upstream, true, false).map(|_| ())
    }

    /// Input gradient only; parameter gradient slots are left untouched.
    pub fn backward_input(&mut self, upstream: &Tensor) -> Result<Tensor> {
        Ok(self.backward_impl(upstream, false, true)?.expect("input gradient"))
    }
}
