//! Joint learning of a state map `χ`, its inverse `η`, a controlled transition `ψ` on the
//! intrinsic state, and a Lyapunov function `V`, from overlapping window pairs of a
//! nonlinear system. The learned controller applies the input slot of `η(ψ(χ(w̃)))`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, BoundLyapunov, BoundNet, DenseNet, LyapunovHead, ParamVector, Tape};
use crate::autodiff::{DEFAULT_LOWER, DEFAULT_UPPER};
use crate::behavior_data::{Normalizer, SignalLayout, WindowSelectors};
use crate::error::{check_dim, Error, Result};

mod control;
mod data;
mod loss;
mod train;

pub use control::{control_action, eval_model, rollout_predicted, CalibController, EvalReport, Prediction};
pub use data::PairSet;
pub use loss::{loss_and_grad, loss_controlled, loss_intrinsic, LossReport, LossTerms, PairBatch};
pub use train::{train, EpochMetrics, TrainReport, METRICS_FILE, CHECKPOINT_FILE};

/// Hidden widths of the four networks and the Lyapunov envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    /// Hidden layers of `χ`, `η` and `ψ`.
    pub hidden: Vec<usize>,
    /// Hidden layers of the Lyapunov shape network `φ`.
    pub lyap_hidden: Vec<usize>,
    pub lower: f64,
    pub upper: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            lyap_hidden: vec![128, 128],
            lower: DEFAULT_LOWER,
            upper: DEFAULT_UPPER,
        }
    }
}

impl Architecture {
    /// Narrower networks that train in minutes on one CPU core.
    pub fn compact() -> Self {
        Self {
            hidden: vec![64, 64],
            lyap_hidden: vec![32, 32],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda_chi: f64,
    pub lambda_eta: f64,
    pub lambda_w: f64,
    pub lambda_inf: f64,
    pub lambda_e: f64,
    pub lambda_v: f64,
    pub lambda_grad: f64,
    /// Required per-step decay of `V`.
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_chi: 1.0,
            lambda_eta: 1.0,
            lambda_w: 1.0,
            lambda_inf: 1e-5,
            lambda_e: 1.0,
            lambda_v: 1.0,
            lambda_grad: 10.0,
            beta: 0.05,
            lr: 1e-3,
            batch_size: 256,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.lambda_chi,
            self.lambda_eta,
            self.lambda_w,
            self.lambda_inf,
            self.lambda_e,
            self.lambda_v,
            self.lambda_grad,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidConfig(format!("loss weights must be finite and nonnegative: {weights:?}")));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || self.batch_size == 0 {
            return Err(Error::InvalidConfig("lr and batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// The four learned maps plus everything needed to apply them to physical windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibModel {
    depth: usize,
    g_dim: usize,
    layout: Arc<SignalLayout>,
    normalizer: Normalizer,
    chi: DenseNet,
    eta: DenseNet,
    psi: DenseNet,
    lyap: LyapunovHead,
    seed: u64,
}

pub(crate) struct BoundModel {
    pub chi: BoundNet,
    pub eta: BoundNet,
    pub psi: BoundNet,
    pub lyap: BoundLyapunov,
}

impl CalibModel {
    /// Xavier-initialized model with `g_dim = (L+1)·u_dim + n_B`.
    pub fn new(
        layout: Arc<SignalLayout>,
        depth: usize,
        n_b: usize,
        normalizer: Normalizer,
        arch: &Architecture,
        seed: u64,
    ) -> Result<Self> {
        check_dim("normalizer", layout.w_dim(), normalizer.w_dim())?;
        let g_dim = (depth + 1) * layout.u_dim() + n_b;
        if g_dim == 0 {
            return Err(Error::InvalidConfig("intrinsic dimension is zero".into()));
        }
        let d = (depth + 1) * layout.w_dim();
        let dims = |i: usize, o: usize| {
            let mut v = vec![i];
            v.extend_from_slice(&arch.hidden);
            v.push(o);
            v
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chi = DenseNet::xavier(&dims(d, g_dim), Activation::Tanh, &mut rng)?;
        let eta = DenseNet::xavier(&dims(g_dim, d), Activation::Tanh, &mut rng)?;
        let psi = DenseNet::xavier(&dims(g_dim, g_dim), Activation::Tanh, &mut rng)?;
        let lyap = LyapunovHead::xavier(g_dim, &arch.lyap_hidden, arch.lower, arch.upper, &mut rng)?;
        Ok(Self {
            depth,
            g_dim,
            layout,
            normalizer,
            chi,
            eta,
            psi,
            lyap,
            seed,
        })
    }

    /// Assemble a model from given networks; dimensions are checked.
    pub fn from_parts(
        layout: Arc<SignalLayout>,
        depth: usize,
        normalizer: Normalizer,
        chi: DenseNet,
        eta: DenseNet,
        psi: DenseNet,
        lyap: LyapunovHead,
    ) -> Result<Self> {
        let d = (depth + 1) * layout.w_dim();
        let g = chi.output_dim();
        check_dim("state map input", d, chi.input_dim())?;
        check_dim("parameterization input", g, eta.input_dim())?;
        check_dim("parameterization output", d, eta.output_dim())?;
        check_dim("transition input", g, psi.input_dim())?;
        check_dim("transition output", g, psi.output_dim())?;
        check_dim("lyapunov input", g, lyap.g_dim())?;
        check_dim("normalizer", layout.w_dim(), normalizer.w_dim())?;
        Ok(Self {
            depth,
            g_dim: g,
            layout,
            normalizer,
            chi,
            eta,
            psi,
            lyap,
            seed: 0,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn g_dim(&self) -> usize {
        self.g_dim
    }

    pub fn window_len(&self) -> usize {
        (self.depth + 1) * self.layout.w_dim()
    }

    pub fn layout(&self) -> &Arc<SignalLayout> {
        &self.layout
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn selectors(&self) -> WindowSelectors {
        WindowSelectors::new(self.depth, &self.layout)
    }

    pub fn chi(&self) -> &DenseNet {
        &self.chi
    }

    pub fn eta(&self) -> &DenseNet {
        &self.eta
    }

    pub fn psi(&self) -> &DenseNet {
        &self.psi
    }

    pub fn lyapunov(&self) -> &LyapunovHead {
        &self.lyap
    }

    pub fn lyapunov_mut(&mut self) -> &mut LyapunovHead {
        &mut self.lyap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// All parameters: `χ`, `η`, `ψ`, then `φ`.
    pub fn params(&self) -> ParamVector {
        ParamVector::pack(&[&self.chi, &self.eta, &self.psi, self.lyap.phi()])
    }

    pub fn set_params(&mut self, p: &ParamVector) -> Result<()> {
        let Self { chi, eta, psi, lyap, .. } = self;
        p.unpack(&mut [chi, eta, psi, lyap.phi_mut()])
    }

    pub fn n_params(&self) -> usize {
        self.chi.n_params() + self.eta.n_params() + self.psi.n_params() + self.lyap.phi().n_params()
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            chi: self.chi.bind(tape),
            eta: self.eta.bind(tape),
            psi: self.psi.bind(tape),
            lyap: self.lyap.bind(tape),
        }
    }

    /// `χ` on normalized windows (rows).
    pub fn encode(&self, windows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.chi.forward_batch(windows)
    }

    /// `η` on intrinsic states (rows), giving normalized windows.
    pub fn decode(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.eta.forward_batch(g)
    }

    /// `ψ` on intrinsic states (rows).
    pub fn transition(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.psi.forward_batch(g)
    }

    pub fn save(&self, path: &Path, train_config: Option<&TrainConfig>) -> Result<()> {
        let ck = Checkpoint {
            layer_dims: LayerDims {
                chi: self.chi.dims().to_vec(),
                eta: self.eta.dims().to_vec(),
                psi: self.psi.dims().to_vec(),
                phi: self.lyap.phi().dims().to_vec(),
            },
            activation: self.chi.activation(),
            a: self.lyap.lower(),
            b: self.lyap.upper(),
            params: self.params().0,
            normalizer: self.normalizer.clone(),
            depth: self.depth,
            g_dim: self.g_dim,
            seed: self.seed,
            layout: (*self.layout).clone(),
            train_config: train_config.cloned(),
        };
        fs::write(path, serde_json::to_string_pretty(&ck)?)?;
        Ok(())
    }

    /// Load a checkpoint; returns the model and the training configuration it was saved with.
    pub fn load(path: &Path) -> Result<(Self, Option<TrainConfig>)> {
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        let dims = &ck.layer_dims;
        let act = ck.activation;
        let mut model = Self::from_parts(
            Arc::new(ck.layout),
            ck.depth,
            ck.normalizer,
            DenseNet::zeros(&dims.chi, act)?,
            DenseNet::zeros(&dims.eta, act)?,
            DenseNet::zeros(&dims.psi, act)?,
            LyapunovHead::new(ck.a, ck.b, DenseNet::zeros(&dims.phi, act)?)?,
        )
        .map_err(|e| Error::Format(format!("checkpoint {}: {e}", path.display())))?;
        if model.g_dim != ck.g_dim {
            return Err(Error::Format(format!("checkpoint g_dim {} disagrees with its networks", ck.g_dim)));
        }
        model.set_params(&ParamVector(ck.params))?;
        model.seed = ck.seed;
        Ok((model, ck.train_config))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerDims {
    chi: Vec<usize>,
    eta: Vec<usize>,
    psi: Vec<usize>,
    phi: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    layer_dims: LayerDims,
    activation: Activation,
    a: f64,
    b: f64,
    params: Vec<f64>,
    normalizer: Normalizer,
    #[serde(rename = "L")]
    depth: usize,
    g_dim: usize,
    seed: u64,
    layout: SignalLayout,
    train_config: Option<TrainConfig>,
}
