//! B-spline bases and Kolmogorov–Arnold layers.

mod layer;
mod network;
mod spline;

pub use layer::KanLayer;
pub use network::{KanNetwork, KanTrace};
pub use spline::{bspline_basis, SplineGrid};
