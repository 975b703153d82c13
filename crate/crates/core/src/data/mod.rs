//! Image datasets: IDX ingestion, the mixed-domain source/target split,
//! synthetic three-domain data and exact quarter-turn rotations.

mod idx;
mod imageset;
mod rotate;
mod split;
mod synth;

pub use idx::{
    load_idx_images, load_idx_labels, parse_idx, read_idx, write_idx, write_idx_images,
    write_idx_labels, IdxArray, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use imageset::ImageSet;
pub use rotate::rotate_image;
pub(crate) use rotate::rotate_into;
pub use split::{build_mixed_source, Domain, MixedSplit, SplitSpec};
pub use synth::{synth_domains, SYNTH_CLASSES, SYNTH_DOMAIN_NAMES, SYNTH_SIDE};
