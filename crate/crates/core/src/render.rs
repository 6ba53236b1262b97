//! PNG output for heatmaps and saliency overlays.
//!
//! Display normalization happens here and nowhere else; every quantitative
//! routine works on raw values.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::codecs::png::PngEncoder;
use image::{ImageEncoder, Rgb, RgbImage};
use ndarray::{Array2, Array4, ArrayView2, ArrayView3};

use crate::error::{Error, Result};
use crate::heatmap::Heatmap;
use crate::io::{write_tensor, Dtype, Tensor};
use crate::saliency::{binarize, rr_from_masks, RrEntry, RrFlag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Colormap {
    #[default]
    Viridis,
    Magma,
    Gray,
    Jet,
}

// 17 evenly spaced control points of each map
const VIRIDIS: [[f64; 3]; 17] = [
    [0.267, 0.0049, 0.3294],
    [0.2823, 0.095, 0.4173],
    [0.2788, 0.1755, 0.4834],
    [0.259, 0.2515, 0.5247],
    [0.2297, 0.3224, 0.5457],
    [0.1994, 0.3876, 0.5546],
    [0.1727, 0.4488, 0.5579],
    [0.149, 0.5081, 0.5573],
    [0.1276, 0.5669, 0.5506],
    [0.1206, 0.6258, 0.5335],
    [0.1579, 0.6838, 0.5017],
    [0.2461, 0.7389, 0.452],
    [0.3692, 0.7889, 0.3829],
    [0.516, 0.8312, 0.2943],
    [0.6785, 0.8637, 0.1895],
    [0.8456, 0.8873, 0.0997],
    [0.9932, 0.9062, 0.1439],
];

const MAGMA: [[f64; 3]; 17] = [
    [0.0015, 0.0005, 0.0139],
    [0.0396, 0.0311, 0.1335],
    [0.1131, 0.0655, 0.2768],
    [0.2117, 0.062, 0.4186],
    [0.3167, 0.0717, 0.4854],
    [0.4147, 0.1104, 0.5047],
    [0.5128, 0.1482, 0.5076],
    [0.6136, 0.1818, 0.4985],
    [0.7164, 0.215, 0.4753],
    [0.8169, 0.2559, 0.4365],
    [0.9043, 0.3196, 0.3881],
    [0.9609, 0.4183, 0.3596],
    [0.9867, 0.5356, 0.3822],
    [0.9961, 0.6537, 0.4462],
    [0.9969, 0.7696, 0.5349],
    [0.9924, 0.8843, 0.6401],
    [0.9871, 0.9914, 0.7495],
];

const JET: [[f64; 3]; 17] = [
    [0.0, 0.0, 0.5],
    [0.0, 0.0, 0.7852],
    [0.0, 0.002, 1.0],
    [0.0, 0.2529, 1.0],
    [0.0, 0.5039, 1.0],
    [0.0, 0.7549, 1.0],
    [0.0854, 1.0, 0.8824],
    [0.2878, 1.0, 0.6799],
    [0.4902, 1.0, 0.4775],
    [0.6926, 1.0, 0.2751],
    [0.895, 1.0, 0.0727],
    [1.0, 0.8141, 0.0],
    [1.0, 0.5817, 0.0],
    [1.0, 0.3493, 0.0],
    [1.0, 0.1169, 0.0],
    [0.7674, 0.0, 0.0],
    [0.5, 0.0, 0.0],
];

impl Colormap {
    /// RGB in `[0, 1]` for `t` in `[0, 1]`.
    pub fn sample(self, t: f64) -> [f64; 3] {
        let t = t.clamp(0.0, 1.0);
        let table = match self {
            Colormap::Gray => return [t, t, t],
            Colormap::Viridis => &VIRIDIS,
            Colormap::Magma => &MAGMA,
            Colormap::Jet => &JET,
        };
        let pos = t * (table.len() - 1) as f64;
        let lo = (pos.floor() as usize).min(table.len() - 2);
        let f = pos - lo as f64;
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = table[lo][c] + f * (table[lo + 1][c] - table[lo][c]);
        }
        out
    }
}

impl FromStr for Colormap {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "viridis" => Ok(Colormap::Viridis),
            "magma" => Ok(Colormap::Magma),
            "gray" | "grey" => Ok(Colormap::Gray),
            "jet" => Ok(Colormap::Jet),
            other => Err(format!("unknown colormap {other:?}")),
        }
    }
}

impl fmt::Display for Colormap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Colormap::Viridis => "viridis",
            Colormap::Magma => "magma",
            Colormap::Gray => "gray",
            Colormap::Jet => "jet",
        })
    }
}

/// Min-max scaling to `[0, 1]`; a constant map becomes 0.5 everywhere.
pub fn display_normalize(values: ArrayView2<'_, f64>) -> Array2<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Array2::from_elem(values.dim(), 0.5);
    }
    values.mapv(|v| (v - lo) / (hi - lo))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_underlay(underlay: Option<ArrayView3<'_, f64>>, dims: (usize, usize)) -> Result<()> {
    if let Some(u) = underlay {
        if u.shape() != [dims.0, dims.1, 3] {
            return Err(Error::shape("underlay", &[dims.0, dims.1, 3], u.shape()));
        }
    }
    Ok(())
}

/// Colorizes `values` and alpha-blends it over `underlay` when given.
pub fn colorize(
    values: ArrayView2<'_, f64>,
    cmap: Colormap,
    underlay: Option<ArrayView3<'_, f64>>,
    alpha: f64,
) -> Result<RgbImage> {
    let (h, w) = values.dim();
    check_underlay(underlay, (h, w))?;
    let norm = display_normalize(values);
    let mut img = RgbImage::new(w as u32, h as u32);
    for ((r, c), t) in norm.indexed_iter() {
        let col = cmap.sample(*t);
        let px = match underlay {
            Some(u) => [0, 1, 2].map(|ch| to_u8((1.0 - alpha) * u[[r, c, ch]] + alpha * col[ch])),
            None => col.map(to_u8),
        };
        img.put_pixel(c as u32, r as u32, Rgb(px));
    }
    Ok(img)
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    PngEncoder::new(&mut buf)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::InvalidArgument(format!("png encoding failed: {e}")))?;
    Ok(buf)
}

pub fn write_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_png(img)?).map_err(|e| Error::io(path, e))
}

/// Path of the raw-values file written next to a PNG.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("npy")
}

pub const HEATMAP_ALPHA: f64 = 0.5;

/// Writes the heatmap PNG and its raw values beside it.
pub fn render_heatmap(
    hm: &Heatmap,
    underlay: Option<ArrayView3<'_, f64>>,
    cmap: Colormap,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let img = colorize(hm.values.view(), cmap, underlay, HEATMAP_ALPHA)?;
    write_png(&img, path)?;
    write_tensor(&Tensor::from_array(&hm.values), sidecar_path(path))
}

// 3×5 glyphs, rows top to bottom, 3 bits per row
fn glyph(ch: char) -> [u8; 5] {
    match ch {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '=' => [0, 7, 0, 7, 0],
        '%' => [5, 1, 2, 4, 5],
        '-' => [0, 0, 7, 0, 0],
        'R' => [6, 5, 6, 5, 5],
        'i' => [2, 0, 2, 2, 2],
        'n' => [0, 6, 5, 5, 5],
        'f' => [3, 2, 7, 2, 2],
        'a' => [0, 3, 5, 5, 3],
        ' ' => [0; 5],
        _ => [7, 7, 7, 7, 7],
    }
}

/// Draws `text` with its top-left corner at `(x, y)`; pixels outside the
/// image are dropped.
pub fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: [u8; 3], scale: u32) {
    for (i, ch) in text.chars().enumerate() {
        let ox = x + i as u32 * 4 * scale;
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..3u32 {
                if bits >> (2 - col) & 1 == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (px, py) = (ox + col * scale + dx, y + row as u32 * scale + dy);
                        if px < img.width() && py < img.height() {
                            img.put_pixel(px, py, Rgb(color));
                        }
                    }
                }
            }
        }
    }
}

/// Mask pixels with a 4-neighbour outside the mask or on the image border.
pub fn contour(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        mask[[r, c]]
            && (r == 0
                || c == 0
                || r + 1 == h
                || c + 1 == w
                || !mask[[r - 1, c]]
                || !mask[[r + 1, c]]
                || !mask[[r, c - 1]]
                || !mask[[r, c + 1]])
    })
}

pub fn format_rr(e: &RrEntry) -> String {
    match e.flag {
        RrFlag::Finite => format!("{:.2}", e.value),
        RrFlag::Infinite => "inf".into(),
        RrFlag::Undefined => "nan".into(),
    }
}

const AIS_HUE: [f64; 3] = [1.0, 0.15, 0.1];
const SAL_HUE: [f64; 3] = [0.1, 0.85, 1.0];
const TEXT_SCALE: u32 = 2;

/// Top-`q`% contours of both maps for each level over the underlay, with the
/// relative risk per level printed in a bottom margin. The masks go to a
/// `[levels × 2 × H × W]` file (AIS first) beside the PNG.
pub fn overlay_contours(
    ais_map: ArrayView2<'_, f64>,
    sal_map: ArrayView2<'_, f64>,
    underlay: Option<ArrayView3<'_, f64>>,
    levels: &[f64],
    path: impl AsRef<Path>,
) -> Result<Vec<RrEntry>> {
    let path = path.as_ref();
    if ais_map.dim() != sal_map.dim() {
        return Err(Error::shape("saliency map", ais_map.shape(), sal_map.shape()));
    }
    let (h, w) = ais_map.dim();
    check_underlay(underlay, (h, w))?;

    let mut masks = Array4::<f64>::zeros((levels.len(), 2, h, w));
    let mut entries = Vec::with_capacity(levels.len());
    let mut cr_masks = Vec::with_capacity(levels.len());
    for (l, &q) in levels.iter().enumerate() {
        let cr = binarize(ais_map, 100.0 - q)?.pixels;
        let sal = binarize(sal_map, 100.0 - q)?.pixels;
        for ((r, c), v) in cr.indexed_iter() {
            masks[[l, 0, r, c]] = *v as u8 as f64;
            masks[[l, 1, r, c]] = sal[[r, c]] as u8 as f64;
        }
        entries.push(rr_from_masks(q, &cr, &sal));
        cr_masks.push((cr, sal));
    }

    let line_h = 6 * TEXT_SCALE + 2;
    let margin = levels.len() as u32 * line_h + 4;
    let mut img = RgbImage::new(w as u32, h as u32 + margin);
    for r in 0..h {
        for c in 0..w {
            let px = match underlay {
                Some(u) => [0, 1, 2].map(|ch| to_u8(0.6 * u[[r, c, ch]])),
                None => [40, 40, 40],
            };
            img.put_pixel(c as u32, r as u32, Rgb(px));
        }
    }
    // widest level first so the tightest contours end up on top
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|a, b| levels[*b].total_cmp(&levels[*a]).then(a.cmp(b)));
    for (rank, &l) in order.iter().enumerate() {
        let intensity = (rank + 1) as f64 / order.len() as f64;
        let (cr, sal) = &cr_masks[l];
        for (mask, hue) in [(sal, SAL_HUE), (cr, AIS_HUE)] {
            let color = hue.map(|v| to_u8(0.35 + 0.65 * intensity * v));
            for ((r, c), on) in contour(mask).indexed_iter() {
                if *on {
                    img.put_pixel(c as u32, r as u32, Rgb(color));
                }
            }
        }
    }
    for (i, e) in entries.iter().enumerate() {
        let label = format!("{}% RR={}", e.q, format_rr(e));
        draw_text(&mut img, 2, h as u32 + 2 + i as u32 * line_h, &label, [255, 255, 255], TEXT_SCALE);
    }
    write_png(&img, path)?;
    let masks = Tensor::from_array(&masks).with_dtype(Dtype::F4);
    write_tensor(&masks, path.with_extension("masks.npy"))?;
    Ok(entries)
}
