//! Image IO, preprocessing, augmentation, annotation fusion and the
//! synthetic dataset generator.

pub mod augment;
mod dataset;
mod fusion;
mod preprocess;
mod raw;
mod synth;

pub use augment::{augment, AugmentParams};
pub use dataset::{
    write_synthetic, Label, LabeledDataset, LabeledItem, Manifest, ManifestEntry, Provenance,
    MANIFEST_FILE,
};
pub use fusion::{confidence_map, fuse_expert_masks};
pub use preprocess::{
    crop_and_resize, preprocess, standardize, to_tensor, PreprocessConfig, PreprocessedImage,
    DEFAULT_SIZE, MIN_SIZE,
};
pub use raw::{
    crop_black_margins, load_mask, resize, save_mask, transform_mask, CropBox, RawImage,
    DEFAULT_CROP_THRESHOLD,
};
pub use synth::{
    generate_synthetic, retina_disc, SynthConfig, SyntheticImage, SyntheticLesion,
    EXPERTS_WITH_NOISE,
};
