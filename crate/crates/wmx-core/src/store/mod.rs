//! Bit-exact file formats: model containers, frame datasets, palettes, PPM
//! images and trace/action CSVs.

mod fnv;
mod frames;
mod model;
mod ppm;
mod trace;

pub use fnv::fnv1a64;
pub use frames::{
    channel_argmax, class, palette_path, ClassFrame, FrameDataset, Palette, PaletteEntry, Vectorization, CLASS_COUNT,
    FRAME_HEIGHT, FRAME_WIDTH,
};
pub use model::{
    load_model, manifest_path, pack_model, save_model, unpack_model, weights_path, Activation, BasisMeta, FrameShape,
    LayerKind, LayerSpec, ModelKind, ModelManifest, Stage, Tensor, TensorMap, TensorRecord, DTYPE_F32,
};
pub use ppm::{write_ppm, RgbImage};
pub use trace::{read_actions_csv, read_trace_csv, write_actions_csv, write_trace_csv, TraceTable};
