//! Composite building blocks shared by the backbone, neck and head.

mod attention;
mod conv;
mod csp;
mod sobel;
mod spd;
mod sppf;

pub use attention::{heads_for, A2C2f, A2Unit, ABlock, AreaAttention, Qkv, HEAD_DIM, MLP_RATIO};
pub use conv::{Conv, ConvBnAct};
pub use csp::{Bottleneck, C3k, C3k2};
pub use sobel::{SobelConv, SOBEL_X, SOBEL_Y};
pub use spd::{depth_to_space, space_to_depth, SpdConv, SPD_ORDER};
pub use sppf::Sppf;
