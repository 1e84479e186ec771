//! Procedural benchmark: textured rectangles translating over a textured
//! static background. Normal clips move every sprite at `(speed, 0)` pixels
//! per frame; anomalous clips move at `speed_factor` times that or in the
//! orthogonal direction.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cad::FramePair;
use crate::error::{Error, Result};
use crate::mixer::stream_rng;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Normal,
    /// Same direction, `speed_factor` times faster.
    Fast,
    /// Normal speed, orthogonal (downward) direction.
    Sideways,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpriteConfig {
    pub height: usize,
    pub width: usize,
    /// Normal horizontal speed in pixels per frame.
    pub speed: usize,
    pub speed_factor: usize,
    pub sprites_per_clip: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub train_clips: usize,
    pub train_frames: usize,
    /// Test clips per motion kind.
    pub test_clips: usize,
    pub test_frames: usize,
    pub seed: u64,
}

impl Default for SpriteConfig {
    fn default() -> Self {
        SpriteConfig {
            height: 48,
            width: 64,
            speed: 2,
            speed_factor: 3,
            sprites_per_clip: 2,
            min_size: 8,
            max_size: 12,
            train_clips: 60,
            train_frames: 10,
            test_clips: 20,
            test_frames: 6,
            seed: 7,
        }
    }
}

impl SpriteConfig {
    pub fn velocity(&self, motion: Motion) -> (usize, usize) {
        match motion {
            Motion::Normal => (self.speed, 0),
            Motion::Fast => (self.speed * self.speed_factor, 0),
            Motion::Sideways => (0, self.speed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.speed == 0 || self.speed_factor < 2 {
            return Err(Error::Config("sprite speed must be positive and the factor at least 2".into()));
        }
        if self.min_size < 3 || self.max_size < self.min_size {
            return Err(Error::Config("invalid sprite size range".into()));
        }
        if self.train_frames < 2 || self.test_frames < 2 {
            return Err(Error::Config("clips need at least two frames".into()));
        }
        for motion in [Motion::Normal, Motion::Fast, Motion::Sideways] {
            let (vx, vy) = self.velocity(motion);
            let frames = self.train_frames.max(self.test_frames) - 1;
            let frames = if motion == Motion::Normal { frames } else { self.test_frames - 1 };
            if self.max_size + vx * frames >= self.width || self.max_size + vy * frames >= self.height {
                return Err(Error::Config(format!(
                    "a {}x{} frame cannot hold {motion:?} sprites for the configured clip length",
                    self.height, self.width
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Sprite {
    x: usize,
    y: usize,
    h: usize,
    w: usize,
    phase: (f32, f32),
    period: (f32, f32),
    level: f32,
}

/// A generated clip: frames `[1, 1, H, W]` in `[-1, 1]` and the motion kind.
#[derive(Clone, Debug)]
pub struct SpriteClip {
    pub motion: Motion,
    pub frames: Vec<Tensor>,
    /// Per-frame pixel masks (1 where a sprite covers the pixel).
    pub masks: Vec<Vec<bool>>,
}

impl SpriteClip {
    pub fn label(&self) -> u8 {
        u8::from(self.motion != Motion::Normal)
    }

    pub fn pairs(&self) -> Result<Vec<FramePair>> {
        self.frames
            .windows(2)
            .map(|w| FramePair::new(w[0].clone(), w[1].clone()))
            .collect()
    }
}

fn background(cfg: &SpriteConfig, rng: &mut impl Rng) -> Vec<f32> {
    let waves: Vec<(f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.15..0.6),
                rng.gen_range(0.15..0.6),
                rng.gen_range(0.0..std::f32::consts::TAU),
            )
        })
        .collect();
    let mut bg = vec![0.0; cfg.height * cfg.width];
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let v: f32 = waves
                .iter()
                .map(|&(a, b, p)| (a * x as f32 + p).sin() * (b * y as f32 - p).cos())
                .sum();
            bg[y * cfg.width + x] = -0.4 + 0.1 * v;
        }
    }
    bg
}

fn render(cfg: &SpriteConfig, bg: &[f32], sprites: &[Sprite]) -> (Tensor, Vec<bool>) {
    let mut img = bg.to_vec();
    let mut mask = vec![false; img.len()];
    for s in sprites {
        for v in 0..s.h {
            for u in 0..s.w {
                let (py, px) = (s.y + v, s.x + u);
                let tex = (std::f32::consts::TAU * u as f32 / s.period.0 + s.phase.0).sin()
                    * (std::f32::consts::TAU * v as f32 / s.period.1 + s.phase.1).cos();
                img[py * cfg.width + px] = (s.level + 0.3 * tex).clamp(-1.0, 1.0);
                mask[py * cfg.width + px] = true;
            }
        }
    }
    let t = Tensor::new([1, 1, cfg.height, cfg.width], img).expect("fixed shape");
    (t, mask)
}

/// Generates clip `index` of a split. Identical arguments give identical clips.
pub fn generate_clip(cfg: &SpriteConfig, stream: u64, index: u64, motion: Motion, frames: usize) -> SpriteClip {
    let mut rng = stream_rng(cfg.seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15), stream);
    let bg = background(cfg, &mut rng);
    let (vx, vy) = cfg.velocity(motion);
    let travel = (vx * (frames - 1), vy * (frames - 1));
    let mut sprites: Vec<Sprite> = (0..cfg.sprites_per_clip)
        .map(|_| {
            let h = rng.gen_range(cfg.min_size..=cfg.max_size);
            let w = rng.gen_range(cfg.min_size..=cfg.max_size);
            Sprite {
                x: rng.gen_range(0..cfg.width - w - travel.0),
                y: rng.gen_range(0..cfg.height - h - travel.1),
                h,
                w,
                phase: (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28)),
                period: (rng.gen_range(3.0..6.0), rng.gen_range(3.0..6.0)),
                level: rng.gen_range(0.3..0.6),
            }
        })
        .collect();
    let mut out = SpriteClip {
        motion,
        frames: Vec::with_capacity(frames),
        masks: Vec::with_capacity(frames),
    };
    for _ in 0..frames {
        let (t, m) = render(cfg, &bg, &sprites);
        out.frames.push(t);
        out.masks.push(m);
        for s in &mut sprites {
            s.x += vx;
            s.y += vy;
        }
    }
    out
}

/// Stream ids keep the train and test splits independent.
const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

pub fn training_clips(cfg: &SpriteConfig) -> Vec<SpriteClip> {
    (0..cfg.train_clips as u64)
        .map(|i| generate_clip(cfg, TRAIN_STREAM, i, Motion::Normal, cfg.train_frames))
        .collect()
}

/// `test_clips` clips of each motion kind, interleaved.
pub fn test_clips(cfg: &SpriteConfig) -> Vec<SpriteClip> {
    let mut out = Vec::with_capacity(3 * cfg.test_clips);
    for i in 0..cfg.test_clips as u64 {
        for (k, motion) in [Motion::Normal, Motion::Fast, Motion::Sideways].into_iter().enumerate() {
            out.push(generate_clip(cfg, TEST_STREAM, 3 * i + k as u64, motion, cfg.test_frames));
        }
    }
    out
}

/// Exhaustive block-matching motion estimate, the reference detector.
///
/// For every pixel that changed between the frames, the displacement
/// `(dx, dy)` in `[-radius, radius]²` minimising the patch SSD between the
/// current frame at `p` and the previous frame at `p + (dx, dy)` is taken as
/// the backward flow at `p`.
pub struct BlockMatcher {
    pub radius: isize,
    pub half_patch: isize,
    pub change_threshold: f32,
}

impl Default for BlockMatcher {
    fn default() -> Self {
        BlockMatcher {
            radius: 8,
            half_patch: 2,
            change_threshold: 0.02,
        }
    }
}

impl BlockMatcher {
    /// Backward flow vectors at changed pixels.
    pub fn estimate(&self, pair: &FramePair) -> Vec<(f64, f64)> {
        let s = pair.prev().shape();
        let (h, w) = (s[2] as isize, s[3] as isize);
        let prev = pair.prev().data();
        let curr = pair.curr().data();
        let at = |img: &[f32], y: isize, x: isize| img[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
        let mut out = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if (at(prev, y, x) - at(curr, y, x)).abs() <= self.change_threshold {
                    continue;
                }
                let mut best = (f32::INFINITY, 0isize, 0isize);
                for dy in -self.radius..=self.radius {
                    for dx in -self.radius..=self.radius {
                        let mut ssd = 0.0;
                        for v in -self.half_patch..=self.half_patch {
                            for u in -self.half_patch..=self.half_patch {
                                let d = at(curr, y + v, x + u) - at(prev, y + v + dy, x + u + dx);
                                ssd += d * d;
                            }
                        }
                        // Ties resolve towards the smaller displacement.
                        let better = ssd < best.0
                            || (ssd == best.0 && dx.abs() + dy.abs() < best.1.abs() + best.2.abs());
                        if better {
                            best = (ssd, dx, dy);
                        }
                    }
                }
                out.push((best.1 as f64, best.2 as f64));
            }
        }
        out
    }

    /// Median backward flow over a set of (normal) training pairs.
    pub fn fit(&self, pairs: &[FramePair]) -> (f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in pairs {
            for (fx, fy) in self.estimate(p) {
                xs.push(fx);
                ys.push(fy);
            }
        }
        (median(&mut xs), median(&mut ys))
    }

    /// Mean distance of the estimated motion from the normal motion.
    pub fn score(&self, pair: &FramePair, normal: (f64, f64)) -> f64 {
        let est = self.estimate(pair);
        if est.is_empty() {
            return 0.0;
        }
        est.iter()
            .map(|(fx, fy)| ((fx - normal.0).powi(2) + (fy - normal.1).powi(2)).sqrt())
            .sum::<f64>()
            / est.len() as f64
    }
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
