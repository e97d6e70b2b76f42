use crate::types::Frame;

use super::reacher::ReacherState;

/// Binary red detector: `R > 0.7·255`, `G < 0.3·255`, `B < 0.3·255`.
#[inline]
pub fn is_red(px: [u8; 3]) -> bool {
    let [r, g, b] = px.map(f64::from);
    r > 0.7 * 255.0 && g < 0.3 * 255.0 && b < 0.3 * 255.0
}

/// Weight 1 at pixel `(H/2, W/2)` decaying linearly with Euclidean distance
/// to 0 at the nearest edge distance `min(H, W)/2`.
pub fn radial_weights(height: usize, width: usize) -> Vec<f64> {
    let (cy, cx) = ((height / 2) as f64, (width / 2) as f64);
    let reach = (height.min(width) as f64) / 2.0;
    let mut w = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let r = ((y as f64 - cy).powi(2) + (x as f64 - cx).powi(2)).sqrt();
            w.push((1.0 - r / reach).max(0.0));
        }
    }
    w
}

/// `clip((c / hw) · Σ M ⊙ W, lo, hi)` with the given weight matrix.
pub fn reward_visual_weighted(frame: &Frame, weights: &[f64], coef: f64, lo: f64, hi: f64) -> f64 {
    let (h, w) = (frame.height(), frame.width());
    assert_eq!(weights.len(), h * w, "weight matrix shape");
    let hits: f64 = frame
        .pixels()
        .chunks_exact(3)
        .zip(weights)
        .filter(|(px, _)| is_red([px[0], px[1], px[2]]))
        .map(|(_, &wt)| wt)
        .sum();
    (coef / (h * w) as f64 * hits).clamp(lo, hi)
}

/// Visual reacher reward with the radial weight matrix.
pub fn reward_visual(frame: &Frame, coef: f64, lo: f64, hi: f64) -> f64 {
    let weights = radial_weights(frame.height(), frame.width());
    reward_visual_weighted(frame, &weights, coef, lo, hi)
}

/// 1 when the camera is within `threshold` of the target (closed ball).
pub fn reward_sparse(state: &ReacherState, threshold: f64) -> f64 {
    let d = ((state.camera[0] - state.target[0]).powi(2)
        + (state.camera[1] - state.target[1]).powi(2))
    .sqrt();
    if d <= threshold {
        1.0
    } else {
        0.0
    }
}
