//! Three visually distinct 28x28 image families with ten classes each,
//! used as a network-free stand-in for the MNIST-family domains.

use ndarray::Array2;

use super::ImageSet;
use crate::ndmath::RandomStream;

pub const SYNTH_SIDE: usize = 28;
pub const SYNTH_CLASSES: usize = 10;
pub const SYNTH_DOMAIN_NAMES: [&str; 3] = ["bars", "discs", "speckle"];

/// Generates `n` images per domain. Each family lives in its own
/// horizontal band of the canvas: the band is bright and carries dark
/// glyphs, the rest of the image is a dim haze. The families' mean images
/// therefore disagree pixel by pixel.
///
/// * `bars`: top band, one vertical bar whose position is the class.
/// * `discs`: middle band, one disc; position and radius encode the class.
/// * `speckle`: bottom band, random dots whose density is the class.
pub fn synth_domains(rng: &mut RandomStream, n: usize) -> [ImageSet; 3] {
    let mut bars_rng = rng.derive(1);
    let mut discs_rng = rng.derive(2);
    let mut speckle_rng = rng.derive(3);
    [
        family(n, 0, &mut bars_rng, draw_bar),
        family(n, 1, &mut discs_rng, draw_disc),
        family(n, 2, &mut speckle_rng, draw_speckle),
    ]
}

/// Row ranges of the three bands.
const BANDS: [(usize, usize); 3] = [(0, 9), (9, 19), (19, 28)];
const HAZE: f64 = 0.3;
const PAPER: f64 = 0.95;
const INK: f64 = 0.05;

type Glyph = fn(usize, usize, (usize, usize), usize, &mut GlyphParams) -> bool;

/// Per-image random parameters of a glyph, drawn before rendering.
struct GlyphParams {
    a: f64,
    b: f64,
    density: f64,
    rng: RandomStream,
}

fn family(n: usize, domain: usize, rng: &mut RandomStream, glyph: Glyph) -> ImageSet {
    let px = SYNTH_SIDE * SYNTH_SIDE;
    let band = BANDS[domain];
    let mut images = Array2::zeros((n, px));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in images.rows_mut().into_iter().enumerate() {
        let class = i % SYNTH_CLASSES;
        let mut params = GlyphParams {
            a: rng.uniform() - 0.5,
            b: rng.uniform() - 0.5,
            density: 0.0,
            rng: rng.derive(i as u64),
        };
        let img = row.as_slice_mut().expect("contiguous");
        for r in 0..SYNTH_SIDE {
            for c in 0..SYNTH_SIDE {
                let inside = r >= band.0 && r < band.1;
                let base = if !inside {
                    HAZE
                } else if glyph(r, c, band, class, &mut params) {
                    INK
                } else {
                    PAPER
                };
                img[r * SYNTH_SIDE + c] = noisy(base, 0.05, rng);
            }
        }
        labels.push(class as u8);
    }
    ImageSet::new(images, SYNTH_SIDE, SYNTH_SIDE)
        .and_then(|s| s.with_labels(labels))
        .expect("generated pixels stay in [0, 1]")
        .with_domain(SYNTH_DOMAIN_NAMES[domain])
}

fn noisy(base: f64, amp: f64, rng: &mut RandomStream) -> f64 {
    (base + amp * (2.0 * rng.uniform() - 1.0)).clamp(0.0, 1.0)
}

fn draw_bar(_r: usize, c: usize, _band: (usize, usize), class: usize, p: &mut GlyphParams) -> bool {
    let center = 2.5 + 2.5 * class as f64 + p.a;
    (c as f64 - center).abs() <= 1.0
}

fn draw_disc(r: usize, c: usize, band: (usize, usize), class: usize, p: &mut GlyphParams) -> bool {
    let radius = 2.5 + (class % 2) as f64 * 1.5;
    let cx = 4.0 + 4.5 * (class / 2) as f64 + p.a;
    let cy = (band.0 + band.1) as f64 / 2.0 - 0.5 + p.b;
    (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2) <= radius * radius
}

fn draw_speckle(_r: usize, _c: usize, _band: (usize, usize), class: usize, p: &mut GlyphParams) -> bool {
    if p.density == 0.0 {
        p.density = 0.04 + 0.045 * class as f64;
    }
    p.rng.uniform() < p.density
}
