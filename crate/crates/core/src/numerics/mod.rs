//! Numerical kernel: normal functions, quadrature, root finding, RNG streams.

pub mod normal;
pub mod quadrature;
pub mod rng;
pub mod root;

pub use normal::{
    log_norm_cdf, log_norm_pdf, log_norm_sf, mills_lower, mills_upper, norm_cdf, norm_pdf,
    norm_quantile, norm_sf,
};
pub use quadrature::{integrate, QuadratureConfig, QuadratureGrid, DEFAULT_PANELS, GL_ORDER, TAIL_SD};
pub use rng::{derive_stream, ReplicateRng};
pub use root::{find_root, find_root_expanding};
