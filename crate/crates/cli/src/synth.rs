//! Procedural test pictures: smooth backgrounds, hard-edged shapes and
//! patches of periodic or noisy texture.

use std::f64::consts::PI;

use intra_core::Frame;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u: f64 = rng.gen_range(1e-12..1.0);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
}

enum Fill {
    Flat(f64),
    Ramp { base: f64, gx: f64, gy: f64 },
    Grating { base: f64, amp: f64, fx: f64, fy: f64, phase: f64 },
    Checker { lo: f64, hi: f64, cell: usize },
    Noise { base: f64, sigma: f64 },
}

enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    HalfPlane { nx: f64, ny: f64, c: f64 },
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Ellipse { cx, cy, rx, ry } => ((x - cx) / rx).powi(2) + ((y - cy) / ry).powi(2) <= 1.0,
            Shape::HalfPlane { nx, ny, c } => nx * x + ny * y >= c,
        }
    }
}

impl Fill {
    fn value(&self, x: usize, y: usize, rng: &mut ChaCha8Rng) -> f64 {
        let (xf, yf) = (x as f64, y as f64);
        match *self {
            Fill::Flat(v) => v,
            Fill::Ramp { base, gx, gy } => base + gx * xf + gy * yf,
            Fill::Grating { base, amp, fx, fy, phase } => base + amp * (2.0 * PI * (fx * xf + fy * yf) + phase).sin(),
            Fill::Checker { lo, hi, cell } => {
                if (x / cell + y / cell) % 2 == 0 {
                    lo
                } else {
                    hi
                }
            }
            Fill::Noise { base, sigma } => base + sigma * gauss(rng),
        }
    }
}

fn random_fill(rng: &mut ChaCha8Rng, textured: bool) -> Fill {
    let base = rng.gen_range(30.0..225.0);
    if !textured {
        return if rng.gen_bool(0.5) {
            Fill::Flat(base)
        } else {
            Fill::Ramp {
                base,
                gx: rng.gen_range(-0.4..0.4),
                gy: rng.gen_range(-0.4..0.4),
            }
        };
    }
    match rng.gen_range(0..3) {
        0 => {
            let period = rng.gen_range(3.0..16.0);
            let angle: f64 = rng.gen_range(0.0..PI);
            Fill::Grating {
                base,
                amp: rng.gen_range(10.0..50.0),
                fx: angle.cos() / period,
                fy: angle.sin() / period,
                phase: rng.gen_range(0.0..2.0 * PI),
            }
        }
        1 => Fill::Checker {
            lo: base - rng.gen_range(10.0..40.0),
            hi: base + rng.gen_range(10.0..40.0),
            cell: rng.gen_range(2..9),
        },
        _ => Fill::Noise {
            base,
            sigma: rng.gen_range(4.0..20.0),
        },
    }
}

fn random_shape(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Shape {
    match rng.gen_range(0..3) {
        0 => {
            let (x0, y0) = (rng.gen_range(-0.2 * w..0.9 * w), rng.gen_range(-0.2 * h..0.9 * h));
            Shape::Rect {
                x0,
                y0,
                x1: x0 + rng.gen_range(8.0..0.7 * w),
                y1: y0 + rng.gen_range(8.0..0.7 * h),
            }
        }
        1 => Shape::Ellipse {
            cx: rng.gen_range(0.0..w),
            cy: rng.gen_range(0.0..h),
            rx: rng.gen_range(5.0..0.4 * w),
            ry: rng.gen_range(5.0..0.4 * h),
        },
        _ => {
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let (nx, ny) = (a.cos(), a.sin());
            Shape::HalfPlane {
                nx,
                ny,
                c: nx * rng.gen_range(0.0..w) + ny * rng.gen_range(0.0..h),
            }
        }
    }
}

/// One picture, fully determined by `seed`.
pub fn synth_frame(width: usize, height: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let mut plane = vec![0.0f64; width * height];

    // background: ramp plus a few soft blobs
    let bg = Fill::Ramp {
        base: rng.gen_range(40.0..200.0),
        gx: rng.gen_range(-0.5..0.5),
        gy: rng.gen_range(-0.5..0.5),
    };
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.gen_range(0..4))
        .map(|_| {
            (
                rng.gen_range(0.0..w),
                rng.gen_range(0.0..h),
                rng.gen_range(8.0..40.0),
                rng.gen_range(-50.0..50.0),
            )
        })
        .collect();
    for y in 0..height {
        for x in 0..width {
            let mut v = bg.value(x, y, &mut rng);
            for &(cx, cy, s, a) in &blobs {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                v += a * (-d2 / (2.0 * s * s)).exp();
            }
            plane[y * width + x] = v;
        }
    }

    // layered shapes; roughly a third carry texture
    let texture_bias = rng.gen_range(0.1..0.6);
    for _ in 0..rng.gen_range(1..7) {
        let shape = random_shape(&mut rng, w, h);
        let textured = rng.gen_bool(texture_bias);
        let fill = random_fill(&mut rng, textured);
        for y in 0..height {
            for x in 0..width {
                if shape.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    plane[y * width + x] = fill.value(x, y, &mut rng);
                }
            }
        }
    }

    let sigma = rng.gen_range(0.0..2.5);
    let luma: Vec<u8> = plane
        .iter()
        .map(|&v| (v + sigma * gauss(&mut rng)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::from_luma(width, height, &luma).expect("positive size")
}

/// Picture size for corpus entry `index`: mostly 128×128, every tenth
/// picture has dimensions that need padding.
pub fn corpus_size(index: usize) -> (usize, usize) {
    if index % 10 == 9 {
        (144, 112)
    } else {
        (128, 128)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(synth_frame(64, 64, 5), synth_frame(64, 64, 5));
        assert_ne!(synth_frame(64, 64, 5), synth_frame(64, 64, 6));
    }

    #[test]
    fn pictures_have_structure() {
        for seed in 0..8 {
            let f = synth_frame(128, 128, seed);
            let v = f.visible();
            let mean = v.iter().map(|&x| x as f64).sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(var > 1.0, "seed {seed} is flat");
        }
    }
}
