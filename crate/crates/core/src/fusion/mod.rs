//! Attention machinery: multi-head self- and cross-attention, bottleneck
//! fusion, the audio-to-video fusion block and the shared encoder.

pub mod attention;
pub mod av_block;
pub mod bottleneck;
pub mod encoder;
pub mod layers;

pub use attention::{cross_attention_layer, mha, Attended, AttentionParams};
pub use av_block::AvFusionBlock;
pub use bottleneck::{check_bottleneck_tokens, BottleneckLayer, BottleneckOutput};
pub use encoder::{Encoder, TransformerLayer};
pub use layers::{learned_tokens, FeedForward, LayerNorm, Linear, Mlp};
