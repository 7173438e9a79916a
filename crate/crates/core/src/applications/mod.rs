//! Closed-form QFIs for beam displacement and pulse separation, and their
//! recomputation through the general pipeline.

pub mod beam;
pub mod pipeline;
pub mod pulse;

pub use beam::{
    apply_loss_substitutions, displacement_qfi_coherent, displacement_qfi_coherent_squeezed,
    displacement_qfi_coherent_squeezed_average, displacement_qfi_general, displacement_qfi_thermal,
    displacement_qfi_thermal_squeezed, displacement_qfi_thermal_thermal,
    parameter_dependent_loss_term, squeezing_fraction, squeezing_split, BeamGeometry, BeamScenario,
    Loss,
};
pub use pipeline::ClosedForm;
pub use pulse::{
    gaussian_pulse_constants, pulse_mode_constants, pulse_mode_constants_quadrature,
    pulse_qfi_coherent_squeezed, pulse_qfi_thermal_squeezed, sld_coefficients, LimitForm,
    PulseConstants, SldCoefficients,
};
