//! From raw frames to correlation products: PCI signal, probe and
//! background PCA, windowing, PSD/CPSD with artifact removal, 1D CCFs, the
//! Van Hove matrix and the dynamical structure factor.
//!
//! Transforms are unitary with the physics sign convention, see [`crate::fourier`].

pub mod correlation;
pub mod image;
pub mod pca;
pub mod pipeline;
pub mod spectral;

pub use correlation::{assemble_van_hove, dsf, lag_axis, symmetrize, to_1d_ccf, Dsf, VanHove};
pub use image::{extract_fluctuations, pca_probe_reconstruct, pci_signal, Window, WindowGeometry};
pub use pipeline::{AnalysisConfig, CcfEstimate, FluctuationSet, SmallK};
pub use spectral::{
    cpsd, pca_small_k_removal, psd, remove_shot_noise_offset, small_k_mask, KMask, KMaskSpec, Retain,
};
