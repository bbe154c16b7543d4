//! Dual-branch fusion encoder: a residual image branch and a dense tracking
//! branch, concatenated into one state feature vector.

use diffnet::{BranchSpec, LayerSpec, Net, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::Action;
use crate::error::{contract, CoreError, Result};
use crate::observation::{Observation, TRACKING_LEN};

pub const IMAGE_FEATURES: usize = 100;
pub const TRACKING_FEATURES: usize = 16;
pub const STATE_FEATURES: usize = IMAGE_FEATURES + TRACKING_FEATURES;
pub const STATE_ACTION_FEATURES: usize = STATE_FEATURES + 2;

/// Fixed per-entry scaling applied to the raw tracking vector so every
/// entry is O(1): speed over 10 m/s, offsets over the default half-width,
/// curvatures times 10.
pub const TRACKING_SCALE: [f64; TRACKING_LEN] = [0.1, 1.0, 1.0, 1.0 / 1.75, 10.0, 10.0, 10.0, 1.0];

/// Which sensor inputs reach the encoder; the masked branch sees zeros.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Fusion,
    Image,
    Sensor,
}

impl Modality {
    pub fn uses_image(self) -> bool {
        matches!(self, Modality::Fusion | Modality::Image)
    }

    pub fn uses_tracking(self) -> bool {
        matches!(self, Modality::Fusion | Modality::Sensor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub height: usize,
    pub width: usize,
    /// Output channels of the stride-2 residual blocks, in order.
    pub channels: Vec<usize>,
    /// Set from the run configuration rather than read from the network section.
    #[serde(skip)]
    pub modality: Modality,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, channels: vec![4, 8, 16], modality: Modality::Fusion }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.channels.contains(&0) {
            return contract("the image branch needs at least one residual block with nonzero channels");
        }
        let down = 1usize << self.channels.len();
        if self.height == 0 || self.width == 0 || self.height % down != 0 || self.width % down != 0 {
            return contract(format!(
                "image {}×{} is not divisible by {down} for {} stride-2 blocks",
                self.height,
                self.width,
                self.channels.len()
            ));
        }
        Ok(())
    }

    fn image_len(&self) -> usize {
        self.height * self.width
    }

    fn image_branch(&self) -> Vec<LayerSpec> {
        let mut layers = Vec::new();
        let mut cin = 1;
        for (i, &cout) in self.channels.iter().enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::ResidualBlock { in_channels: cin, out_channels: cout, stride: 2 });
            cin = cout;
        }
        let down = 1 << self.channels.len();
        let flat = cin * (self.height / down) * (self.width / down);
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::Dense { inputs: flat, outputs: IMAGE_FEATURES });
        layers
    }
}

/// One encoder instance; every function approximator owns its own.
#[derive(Debug, Clone)]
pub struct FusionEncoder {
    cfg: EncoderConfig,
    net: Net,
}

impl FusionEncoder {
    /// Parameters are registered under `{prefix}/...`.
    pub fn new(prefix: &str, cfg: EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let spec = LayerSpec::Concat(vec![
            BranchSpec { name: "image".into(), shape: vec![1, cfg.height, cfg.width], layers: cfg.image_branch() },
            BranchSpec {
                name: "tracking".into(),
                shape: vec![TRACKING_LEN],
                layers: vec![LayerSpec::Dense { inputs: TRACKING_LEN, outputs: TRACKING_FEATURES }],
            },
        ]);
        let net = Net::new(prefix, &[cfg.image_len() + TRACKING_LEN], &[spec], rng)?;
        debug_assert_eq!(net.output_len(), STATE_FEATURES);
        Ok(Self { cfg, net })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn net(&self) -> &Net {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Net {
        &mut self.net
    }

    /// Flat network input for a batch: masked image then scaled, masked tracking vector.
    pub fn input(&self, batch: &[&Observation]) -> Result<Tensor> {
        if batch.is_empty() {
            return Err(CoreError::Dimension("empty observation batch".into()));
        }
        let row = self.cfg.image_len() + TRACKING_LEN;
        let mut data = Vec::with_capacity(batch.len() * row);
        for obs in batch {
            if obs.height() != self.cfg.height || obs.width() != self.cfg.width {
                return Err(CoreError::Dimension(format!(
                    "observation image is {}×{}, encoder expects {}×{}",
                    obs.height(),
                    obs.width(),
                    self.cfg.height,
                    self.cfg.width
                )));
            }
            if self.cfg.modality.uses_image() {
                data.extend_from_slice(obs.image());
            } else {
                data.extend(std::iter::repeat_n(0.0, self.cfg.image_len()));
            }
            if self.cfg.modality.uses_tracking() {
                data.extend(obs.tracking().iter().zip(TRACKING_SCALE).map(|(v, s)| v * s));
            } else {
                data.extend([0.0; TRACKING_LEN]);
            }
        }
        Ok(Tensor::new(vec![batch.len(), row], data)?)
    }

    /// Batch encoding that records for [`FusionEncoder::backward_params`].
    pub fn forward(&mut self, batch: &[&Observation]) -> Result<Tensor> {
        let x = self.input(batch)?;
        let y = self.net.forward(&x)?;
        debug_assert_eq!(y.sample_len(), STATE_FEATURES);
        Ok(y)
    }

    /// Batch encoding without recording.
    pub fn infer(&self, batch: &[&Observation]) -> Result<Tensor> {
        let y = self.net.infer(&self.input(batch)?)?;
        debug_assert_eq!(y.sample_len(), STATE_FEATURES);
        Ok(y)
    }

    pub fn backward_params(&mut self, upstream: &Tensor) -> Result<()> {
        Ok(self.net.backward_params(upstream)?)
    }

    /// 116 features: 100 image features followed by 16 tracking features.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.infer(&[obs])?.into_data())
    }

    /// [`FusionEncoder::encode`] followed by `[throttle, steer]`.
    pub fn encode_with_action(&self, obs: &Observation, action: [f64; 2]) -> Result<Vec<f64>> {
        let action = Action::new(action[0], action[1])?;
        let mut e = self.encode(obs)?;
        e.extend_from_slice(&action.to_array());
        debug_assert_eq!(e.len(), STATE_ACTION_FEATURES);
        Ok(e)
    }
}

/// Appends each row's action to a `[batch, 116]` feature tensor.
pub fn append_actions(features: &Tensor, actions: &[[f64; 2]]) -> Result<Tensor> {
    if features.batch() != actions.len() {
        return Err(CoreError::Dimension(format!(
            "{} feature rows but {} actions",
            features.batch(),
            actions.len()
        )));
    }
    let width = features.sample_len() + 2;
    let mut data = Vec::with_capacity(actions.len() * width);
    for (row, a) in features.rows().zip(actions) {
        data.extend_from_slice(row);
        data.extend_from_slice(a);
    }
    Ok(Tensor::new(vec![actions.len(), width], data)?)
}
