//! Multi-spectral physically based renderer: Fresnel materials with complex
//! indices of refraction, spectral transmittance maps, a Rayleigh-attenuated
//! sun, two-pass photon mapping, and a domain-decomposition scheduler that
//! migrates rays between spatial sub-domains.

pub mod colorimetry;
pub mod ddm;
pub mod demo;
pub mod math;
pub mod render;
pub mod scene;
pub mod spectral;
pub mod sunlight;
