//! Line-shape model and least-squares fits: sound speed from CCF slices,
//! condensate-fraction dependence of c, and straight-line amplitude fits.

pub mod ccf_fit;
pub mod lineshape;
pub mod linear;
pub mod lm;

pub use ccf_fit::{fit_global, fit_individual, initial_guess, FitMode, FitOptions, FitResult, FitSlice, SliceFit};
pub use lineshape::{DispersionModel, LineShapeModel, LineShapeParams};
pub use linear::{
    amplitude_ratio, calibrate_omega_ratio_sq, fit_line, fit_sound_vs_rc, template_amplitude, template_projections,
    LineFit, SoundFit, SoundPoint,
};
pub use lm::{levenberg_marquardt, LmOptions, LmResult, Problem};
