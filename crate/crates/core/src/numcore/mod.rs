//! Dense numeric building blocks: tensors, parameters with Adam, and the
//! layers used by the encoders and agents.

pub mod attention;
pub mod fm;
pub mod gradcheck;
pub mod gru;
pub mod layers;
pub mod params;
pub mod tensor;

pub use attention::{AttentionCache, TargetAttention};
pub use fm::{second_order, FmLayer};
pub use gru::{GruCache, GruCell};
pub use layers::{Activation, LayerKind, LayerSpec, Linear, Mlp, MlpCache};
pub use params::{AdamConfig, Init, Param, ParamId, ParamStore};
pub use tensor::Tensor;
