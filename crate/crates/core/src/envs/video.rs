use crate::rng::{fnv1a64, RngStream};

/// Seeding tag of evaluation background videos.
pub const VIDEO_NAMESPACE: &str = "video";
/// Seeding tag of augmentation images; must never equal a video namespace.
pub const AUGMENT_NAMESPACE: &str = "augment-images";

/// Per-channel drifting sinusoidal plane:
/// `0.5 + 0.5 sin(2π(u x/W + v y/H + w t + φ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProceduralVideo {
    pub namespace: String,
    pub index: u64,
    /// `[u, v, w, φ]` for each of R, G, B.
    pub channels: [[f64; 4]; 3],
}

impl ProceduralVideo {
    pub fn new(namespace: &str, index: u64) -> Self {
        let seed = fnv1a64(namespace.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        let mut rng = RngStream::new(seed);
        let mut channels = [[0.0; 4]; 3];
        for ch in &mut channels {
            let sign = |r: &mut RngStream| if r.uniform() < 0.5 { -1.0 } else { 1.0 };
            let u = sign(&mut rng) * rng.uniform_range(0.5, 4.0);
            let v = sign(&mut rng) * rng.uniform_range(0.5, 4.0);
            let w = sign(&mut rng) * rng.uniform_range(0.02, 0.2);
            let phi = rng.uniform();
            *ch = [u, v, w, phi];
        }
        ProceduralVideo {
            namespace: namespace.to_string(),
            index,
            channels,
        }
    }

    /// Intensity in `[0, 1]` at continuous image coordinates.
    #[inline]
    pub fn value(&self, x: f64, y: f64, width: f64, height: f64, t: f64, c: usize) -> f64 {
        let [u, v, w, phi] = self.channels[c];
        let arg = 2.0 * std::f64::consts::PI * (u * x / width + v * y / height + w * t + phi);
        0.5 + 0.5 * arg.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_video_and_bounded() {
        let a = ProceduralVideo::new(VIDEO_NAMESPACE, 3);
        assert_eq!(a, ProceduralVideo::new(VIDEO_NAMESPACE, 3));
        assert_ne!(a, ProceduralVideo::new(VIDEO_NAMESPACE, 4));
        for i in 0..200 {
            let v = a.value(i as f64 * 0.7, i as f64 * 1.3, 48.0, 48.0, i as f64, i % 3);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn namespaces_never_share_parameters() {
        assert_ne!(VIDEO_NAMESPACE, AUGMENT_NAMESPACE);
        let videos: Vec<_> = (0..200).map(|i| ProceduralVideo::new(VIDEO_NAMESPACE, i)).collect();
        for i in 0..200 {
            let img = ProceduralVideo::new(AUGMENT_NAMESPACE, i);
            assert!(videos.iter().all(|v| v.channels != img.channels));
        }
    }
}
