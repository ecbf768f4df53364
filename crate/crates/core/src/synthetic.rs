//! Seeded procedural test sequences: a moving, pulsing sinusoidal texture
//! under a blob envelope, plus optional per-frame noise.

use core::convert::Infallible;
use core::f64::consts::TAU;

use rand::Rng;

use crate::plane::{FramePlanes, FrameSource, Plane, VideoGeometry};
use crate::rng;

/// Content parameters of one synthetic scene.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SceneParams {
    pub luma_base: f64,
    pub luma_amplitude: f64,
    /// Carrier frequency in cycles per pixel, horizontal and vertical.
    pub carrier: (f64, f64),
    /// Envelope period in pixels.
    pub envelope_period: f64,
    /// Motion in pixels per frame.
    pub velocity: (f64, f64),
    /// Relative depth of the temporal amplitude modulation, in `[0, 1]`.
    pub pulse_depth: f64,
    /// Period of the modulation in frames.
    pub pulse_period: f64,
    pub chroma_base: (f64, f64),
    pub chroma_amplitude: (f64, f64),
    /// Half-width of the uniform pixel noise, redrawn every frame.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            luma_base: 128.0,
            luma_amplitude: 40.0,
            carrier: (0.11, 0.07),
            envelope_period: 96.0,
            velocity: (1.5, 0.5),
            pulse_depth: 0.3,
            pulse_period: 16.0,
            chroma_base: (128.0, 128.0),
            chroma_amplitude: (12.0, 8.0),
            noise: 2.0,
            seed: 0,
        }
    }
}

impl SceneParams {
    /// A scene with no motion, modulation or noise: every frame is identical.
    pub fn still(self) -> Self {
        Self {
            velocity: (0.0, 0.0),
            pulse_depth: 0.0,
            noise: 0.0,
            ..self
        }
    }

    /// Draws a scene from broad ranges; `index` selects one of many scenes
    /// under the same `seed`.
    pub fn random(seed: u64, index: u64) -> Self {
        let mut r = rng::stream(seed, &[0x5ce7e, index]);
        let luma_amplitude = r.random_range(4.0..70.0);
        let luma_base = r.random_range(60.0..196.0);
        Self {
            luma_base,
            luma_amplitude,
            carrier: (r.random_range(0.02..0.45), r.random_range(0.02..0.45)),
            envelope_period: r.random_range(32.0..192.0),
            velocity: (r.random_range(-4.0..4.0), r.random_range(-2.0..2.0)),
            pulse_depth: r.random_range(0.0..0.8),
            pulse_period: r.random_range(6.0..40.0),
            chroma_base: (r.random_range(96.0..160.0), r.random_range(96.0..160.0)),
            chroma_amplitude: (r.random_range(0.0..40.0), r.random_range(0.0..40.0)),
            noise: r.random_range(0.0..8.0),
            seed: rng::derive_seed(seed, &[index]),
        }
    }
}

fn to_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 255.0)) as u8
}

/// Lazily rendered synthetic sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    geometry: VideoGeometry,
    scene: SceneParams,
}

impl SyntheticSequence {
    pub fn new(geometry: VideoGeometry, scene: SceneParams) -> Self {
        Self { geometry, scene }
    }

    pub fn scene(&self) -> &SceneParams {
        &self.scene
    }

    fn pulse(&self, t: f64) -> f64 {
        let s = &self.scene;
        (1.0 + s.pulse_depth * libm::sin(TAU * t / s.pulse_period.max(1.0))) / (1.0 + s.pulse_depth)
    }

    /// Envelope in `[0, 1]` at a luma-grid position.
    fn envelope(&self, x: f64, y: f64) -> f64 {
        let p = self.scene.envelope_period.max(1.0);
        0.5 + 0.5 * libm::sin(TAU * x / p) * libm::cos(TAU * y / p)
    }

    pub fn render(&self, index: usize) -> FramePlanes {
        let s = &self.scene;
        let g = &self.geometry;
        let t = index as f64;
        let (dx, dy) = (s.velocity.0 * t, s.velocity.1 * t);
        let amp = s.luma_amplitude * self.pulse(t);
        let mut noise = rng::stream(s.seed, &[index as u64]);
        let mut jitter = |v: f64| {
            if s.noise > 0.0 {
                v + noise.random_range(-s.noise..s.noise)
            } else {
                v
            }
        };

        let y = Plane::from_fn(g.width, g.height, |row, col| {
            let x = col as f64 - dx;
            let yy = row as f64 - dy;
            let carrier = libm::sin(TAU * (s.carrier.0 * x + s.carrier.1 * yy));
            to_u8(jitter(s.luma_base + amp * self.envelope(x, yy) * carrier))
        });
        let (cw, ch) = (g.chroma_width(), g.chroma_height());
        let chroma = |base: f64, a: f64, phase: f64, jitter: &mut dyn FnMut(f64) -> f64| {
            Plane::from_fn(cw, ch, |row, col| {
                let x = 2.0 * col as f64 - dx;
                let yy = 2.0 * row as f64 - dy;
                let carrier = libm::sin(TAU * (0.5 * s.carrier.1 * x + 0.5 * s.carrier.0 * yy) + phase);
                to_u8(jitter(base + a * self.pulse(t) * self.envelope(yy, x) * carrier))
            })
        };
        let u = chroma(s.chroma_base.0, s.chroma_amplitude.0, 0.0, &mut jitter);
        let v = chroma(s.chroma_base.1, s.chroma_amplitude.1, 1.3, &mut jitter);
        FramePlanes::new(index, y, u, v)
    }
}

impl FrameSource for SyntheticSequence {
    type Error = Infallible;

    fn geometry(&self) -> VideoGeometry {
        self.geometry
    }

    fn read_frame(&self, index: usize) -> Result<FramePlanes, Infallible> {
        Ok(self.render(index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> VideoGeometry {
        VideoGeometry::new(64, 48, 8).unwrap().with_frame_count(4)
    }

    #[test]
    fn deterministic() {
        let s = SyntheticSequence::new(geom(), SceneParams::random(3, 7));
        assert_eq!(s.render(2), s.render(2));
        let other = SyntheticSequence::new(geom(), SceneParams::random(3, 8));
        assert_ne!(s.render(2), other.render(2));
    }

    #[test]
    fn still_scene_repeats() {
        let s = SyntheticSequence::new(geom(), SceneParams::default().still());
        let a = s.render(0);
        let b = s.render(3);
        assert_eq!(a.y, b.y);
        assert_eq!(a.u, b.u);
        assert_eq!(a.v, b.v);
    }

    #[test]
    fn planes_match_geometry() {
        let g = geom();
        let s = SyntheticSequence::new(g, SceneParams::default());
        assert!(s.render(1).check_geometry(&g).is_ok());
    }
}
