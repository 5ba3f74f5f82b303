//! The encoder-decoder network, reflection padding and checkpoint files.

mod checkpoint;
mod net;
mod padding;
mod spec;

pub use checkpoint::{
    decode_container, encode_container, load_checkpoint, load_checkpoint_for, save_checkpoint,
};
pub use net::ConsistencyNet;
pub use padding::{crop, pad_reflect, CropRecord};
pub(crate) use padding::pad_reflect_tensor;
pub use spec::{Backbone, FinalActivation, NetSpec};
