//! Ultrasound beamforming at desk scale: a point-scatterer RF simulator,
//! delay-and-sum reference beamformers for focused and plane-wave
//! acquisition, acquisition subsampling schemes, a from-scratch trainable
//! convolutional beamformer, and the image-quality metrics to compare them.

pub mod bmode;
pub mod cube;
pub mod das;
pub mod deepbf;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod probe;
pub mod sim;
pub mod subsample;

pub use bmode::BModeImage;
pub use cube::{EventKind, IQLine, RFCube};
pub use das::{
    das_focused, das_planewave_compound, delay_align_focused, delay_align_planewave,
    envelope_log_compress, hilbert_analytic, rx_delay_focused, rx_delay_planewave,
    AlignedFocused, AlignedPlanewave, BeamformedLines, EnvelopeSource,
};
pub use error::{CoreError, Result};
pub use metrics::{cnr, cyst_rois, gcnr, gcnr_from_values, psnr, ssim, Roi};
pub use probe::{
    default_probe, depth_index_to_meters, factor_label, meters_to_depth_index,
    subsampling_factor, ProbeConfig,
};
pub use sim::{
    add_noise, angle_set, make_cyst_phantom, simulate_focused_frame, simulate_focused_rf,
    simulate_planewave_frame, simulate_planewave_rf, CystSpec, Phantom, Pulse, Scatterer,
};
pub use subsample::{apply_mask, center_pair, make_focused_mask, make_pw_subset, MaskKind, SamplingMask};
