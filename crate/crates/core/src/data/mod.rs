//! Synthetic phantom populations, measurement simulation, dataset splits
//! and the on-disk formats.

mod container;
mod dataset;
mod export;
mod phantom;
mod record;

pub use container::{Container, Section, SectionKind, CONTAINER_MAGIC};
pub use dataset::{
    load_image, load_record, record_from_container, record_to_container, save_image, save_record,
    Dataset, Manifest, ManifestEntry, SplitRole, MANIFEST,
};
pub use export::{export_pgm, read_pgm, window_sidecar};
pub use phantom::{
    base_phantom, gen_family, rasterize, subject_ellipses, Ellipse, Family, PhantomFamilyConfig,
    ELLIPSE_FAMILY, SHEPP_LOGAN,
};
pub use record::{simulate_measurements, split, MeasurementRecord, Split};
