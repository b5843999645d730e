//! Forward model of the multicore multimode fiber imager.

mod correlation;
mod fiber;
mod model;
mod render;

pub use correlation::{angle_correlation, spectral_correlation, CorrelationCurve};
pub use fiber::{mode_count, FiberSpec, SourceModel, WavelengthGrid, MAX_INCIDENCE_DEG};
pub use model::{
    band_disk_intensities, band_nodes, build_core_model, disk_pixels, patch_from_disk,
    synthesize_band, synthesize_patch, synthesize_polarized, CoreModel, Patch, Polarization,
    GRAIN_SIGMA_PX, REFERENCE_INCIDENCE_DEG,
};
pub use render::{
    render_bundle, render_bundle_linear, BundleLayout, Camera, LinearFrame, DEFAULT_GAIN,
};
