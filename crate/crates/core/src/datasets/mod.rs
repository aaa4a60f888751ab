//! External data ingestion and dataset loading.

mod dataset;
pub mod idx;
mod loader;
pub mod mnist;
mod resize;

pub use dataset::{quantize, Dataset};
pub use idx::{read_idx, write_idx, IdxArray};
pub use loader::{load_manifest, DatasetHandle};
pub use mnist::{compose_mnist_dataset, compose_mnist_stickers, compose_sticker, MnistStickerSpec};
pub use resize::resize_bilinear;
