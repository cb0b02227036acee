//! Small dense-network kernel: tanh multilayer perceptrons with hand-written
//! reverse-mode gradients, Adam, and a state-independent diagonal Gaussian head.

mod adam;
mod gaussian;
mod mlp;

pub use adam::Adam;
pub use gaussian::{GaussianHead, LOG_STD_MAX, LOG_STD_MIN};
pub use mlp::{BatchTrace, Gradients, Mlp, Trace};

/// Euclidean norm over several gradient slices taken together.
pub fn global_norm<'a>(parts: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    parts
        .into_iter()
        .flat_map(|p| p.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// Rescale all slices so that their joint norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_global_norm(parts: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let norm = global_norm(parts.iter().map(|p| &**p));
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for part in parts.iter_mut() {
            for g in part.iter_mut() {
                *g *= scale;
            }
        }
    }
    norm
}
