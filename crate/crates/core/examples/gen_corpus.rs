//! Writes the synthetic 256x256 test corpus.
//!
//! `cargo run -p detalloc-core --example gen_corpus -- corpus/`
//!
//! Every scene is procedurally drawn from a fixed seed: a smooth or lightly
//! textured background with a handful of high-contrast "objects" on top, and
//! mild Gaussian-ish sensor noise.

use std::path::PathBuf;

use detalloc_core::image::{save_pgm, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 256;

struct Canvas {
    px: Vec<f64>,
}

impl Canvas {
    fn new(f: impl Fn(f64, f64) -> f64) -> Self {
        let mut px = Vec::with_capacity(N * N);
        for y in 0..N {
            for x in 0..N {
                px.push(f(x as f64, y as f64));
            }
        }
        Canvas { px }
    }

    fn paint(&mut self, inside: impl Fn(f64, f64) -> bool, value: impl Fn(f64, f64) -> f64) {
        for y in 0..N {
            for x in 0..N {
                let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
                if inside(fx, fy) {
                    self.px[y * N + x] = value(fx, fy);
                }
            }
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, value: impl Fn(f64, f64) -> f64) {
        self.paint(move |x, y| (x - cx).powi(2) + (y - cy).powi(2) < r * r, value);
    }

    fn rect(&mut self, x0: f64, y0: f64, w: f64, h: f64, value: impl Fn(f64, f64) -> f64) {
        self.paint(move |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h, value);
    }

    fn noise(&mut self, rng: &mut ChaCha8Rng, sigma: f64) {
        for v in &mut self.px {
            // sum of uniforms, roughly normal
            let n: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * 0.866;
            *v += sigma * n;
        }
    }

    fn finish(self) -> Image {
        Image::new(
            N,
            N,
            self.px.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
        )
        .unwrap()
    }
}

fn stripes(period: f64, angle: f64, lo: f64, hi: f64) -> impl Fn(f64, f64) -> f64 {
    let (s, c) = angle.sin_cos();
    move |x, y| {
        let t = ((x * c + y * s) / period).rem_euclid(1.0);
        if t < 0.5 {
            lo
        } else {
            hi
        }
    }
}

fn checker(cell: f64, lo: f64, hi: f64) -> impl Fn(f64, f64) -> f64 {
    move |x, y| {
        if ((x / cell).floor() as i64 + (y / cell).floor() as i64) % 2 == 0 {
            lo
        } else {
            hi
        }
    }
}

fn shapes(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|x, y| 90.0 + 0.25 * x + 0.1 * y);
    c.disc(70.0, 80.0, 38.0, stripes(6.0, 0.6, 40.0, 210.0));
    c.rect(150.0, 40.0, 70.0, 55.0, checker(7.0, 30.0, 200.0));
    c.disc(180.0, 185.0, 30.0, |x, y| {
        120.0 + 70.0 * ((x * 0.4).sin() * (y * 0.35).cos())
    });
    c.noise(rng, 2.0);
    c.finish()
}

fn street(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|_, y| {
        if y < 110.0 {
            200.0 - 0.4 * y
        } else {
            95.0 + 0.15 * (y - 110.0)
        }
    });
    for (i, x0) in [20.0, 105.0, 185.0].iter().enumerate() {
        let body = 50.0 + 40.0 * i as f64;
        c.rect(*x0, 140.0, 58.0, 30.0, move |_, _| body);
        c.rect(x0 + 6.0, 125.0, 44.0, 16.0, move |_, _| body + 20.0);
        c.rect(x0 + 10.0, 128.0, 14.0, 10.0, |_, _| 225.0);
        c.rect(x0 + 30.0, 128.0, 14.0, 10.0, |_, _| 225.0);
        c.disc(x0 + 12.0, 172.0, 7.0, |_, _| 20.0);
        c.disc(x0 + 46.0, 172.0, 7.0, |_, _| 20.0);
    }
    c.rect(0.0, 200.0, 256.0, 4.0, |x, _| {
        if (x / 16.0) as i64 % 2 == 0 {
            230.0
        } else {
            95.0
        }
    });
    c.noise(rng, 2.5);
    c.finish()
}

fn portrait(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|x, y| 60.0 + 40.0 * ((x * 0.01).sin() + (y * 0.013).cos()));
    c.paint(
        |x, y| ((x - 128.0) / 62.0).powi(2) + ((y - 120.0) / 82.0).powi(2) < 1.0,
        |x, y| 165.0 + 0.1 * (x - 128.0) - 0.05 * (y - 120.0),
    );
    c.disc(104.0, 100.0, 10.0, |_, _| 240.0);
    c.disc(152.0, 100.0, 10.0, |_, _| 240.0);
    c.disc(104.0, 100.0, 4.5, |_, _| 15.0);
    c.disc(152.0, 100.0, 4.5, |_, _| 15.0);
    c.rect(124.0, 112.0, 8.0, 28.0, |_, _| 135.0);
    c.rect(103.0, 158.0, 50.0, 7.0, |_, _| 70.0);
    c.paint(
        |x, y| ((x - 128.0) / 66.0).powi(2) + ((y - 70.0) / 36.0).powi(2) < 1.0 && y < 74.0,
        stripes(3.0, 1.4, 25.0, 70.0),
    );
    c.noise(rng, 2.0);
    c.finish()
}

fn birds(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|x, y| 150.0 + 0.35 * y - 0.05 * x);
    let pos: Vec<(f64, f64)> = (0..9)
        .map(|_| (rng.gen_range(20.0..236.0), rng.gen_range(20.0..200.0)))
        .collect();
    for (bx, by) in pos {
        c.paint(
            move |x, y| {
                let dx = (x - bx).abs();
                dx < 11.0 && ((y - by) - 0.55 * dx).abs() < 1.8
            },
            |_, _| 25.0,
        );
    }
    c.rect(0.0, 220.0, 256.0, 36.0, |x, y| {
        60.0 + 25.0 * ((x * 0.9).sin() * (y * 1.3).cos())
    });
    c.noise(rng, 1.5);
    c.finish()
}

fn grass(rng: &mut ChaCha8Rng) -> Image {
    let tex: Vec<f64> = (0..N * N).map(|_| rng.gen_range(-35.0..35.0)).collect();
    let mut c = Canvas::new(|x, y| 110.0 + tex[y as usize * N + x as usize] * (y / 256.0));
    c.disc(80.0, 130.0, 34.0, |x, _| 210.0 - 0.3 * x);
    c.disc(80.0, 130.0, 12.0, |_, _| 30.0);
    c.rect(160.0, 60.0, 60.0, 90.0, stripes(8.0, 0.0, 35.0, 220.0));
    c.noise(rng, 2.0);
    c.finish()
}

fn checkers(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|_, _| 128.0);
    c.rect(24.0, 24.0, 64.0, 64.0, checker(4.0, 20.0, 235.0));
    c.rect(150.0, 40.0, 80.0, 40.0, checker(10.0, 60.0, 190.0));
    c.rect(60.0, 150.0, 120.0, 60.0, stripes(5.0, 0.8, 30.0, 220.0));
    c.noise(rng, 1.5);
    c.finish()
}

fn text(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|x, y| 235.0 - 0.04 * (x + y));
    let mut glyphs = vec![];
    for line in 0..6 {
        let y0 = 30.0 + line as f64 * 30.0;
        let mut x = 24.0 + rng.gen_range(0.0..10.0);
        let end = if line == 5 { 140.0 } else { 230.0 };
        while x < end {
            let w = rng.gen_range(6.0..11.0);
            let h = rng.gen_range(9.0..14.0);
            glyphs.push((x, y0 + 14.0 - h, w, h, rng.gen_range(0..3)));
            x += w + if rng.gen_bool(0.2) { 9.0 } else { 2.5 };
        }
    }
    for (x0, y0, w, h, kind) in glyphs {
        match kind {
            0 => c.rect(x0, y0, w, h, |_, _| 30.0),
            1 => c.rect(x0, y0, w, 2.0, |_, _| 30.0),
            _ => c.rect(x0, y0, 2.0, h, |_, _| 30.0),
        }
        c.rect(x0, y0 + h - 2.0, w, 2.0, |_, _| 30.0);
    }
    c.noise(rng, 1.5);
    c.finish()
}

fn night(rng: &mut ChaCha8Rng) -> Image {
    let mut c = Canvas::new(|_, y| 18.0 + 0.05 * y);
    for (x0, w, h) in [
        (10.0, 50.0, 150.0),
        (70.0, 40.0, 110.0),
        (125.0, 60.0, 180.0),
        (200.0, 45.0, 130.0),
    ] {
        let top = 256.0 - h;
        c.rect(x0, top, w, h, |_, _| 40.0);
        let mut wy = top + 8.0;
        while wy < 246.0 {
            let mut wx = x0 + 5.0;
            while wx < x0 + w - 8.0 {
                if rng.gen_bool(0.55) {
                    let lum = rng.gen_range(170.0..250.0);
                    c.rect(wx, wy, 6.0, 7.0, move |_, _| lum);
                }
                wx += 10.0;
            }
            wy += 14.0;
        }
    }
    c.disc(215.0, 40.0, 14.0, |_, _| 230.0);
    c.noise(rng, 2.0);
    c.finish()
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "corpus".into()));
    std::fs::create_dir_all(&dir).expect("create output directory");
    let scenes: [(&str, fn(&mut ChaCha8Rng) -> Image); 8] = [
        ("birds", birds),
        ("checkers", checkers),
        ("grass", grass),
        ("night", night),
        ("portrait", portrait),
        ("shapes", shapes),
        ("street", street),
        ("text", text),
    ];
    for (i, (name, draw)) in scenes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed + i as u64);
        let img = draw(&mut rng);
        let path = dir.join(format!("{name}.pgm"));
        save_pgm(&img, &path).expect("write image");
        println!("{}", path.display());
    }
}
