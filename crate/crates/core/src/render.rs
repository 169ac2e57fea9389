//! PNG heatmaps of grid documents.
//!
//! Path-loss ramp, low to high:
//!
//! | t    | colour  |
//! |------|---------|
//! | 0.00 | #0000FF |
//! | 0.25 | #00BFFF |
//! | 0.50 | #00FF7F |
//! | 0.75 | #FFD700 |
//! | 0.90 | #FF4500 |
//! | 1.00 | #800080 |
//!
//! SINR ramp, low to high: #8B0000, #FF8C00 (0.3), #FFFF00 (0.5), #7CFC00
//! (0.75), #006400. No-data cells are #808080.

use crate::grid_doc::{GridDocument, GridKind};

pub type Rgb = [u8; 3];

pub const NODATA_COLOR: Rgb = [0x80, 0x80, 0x80];

#[derive(Debug, Clone, Copy)]
pub struct ColorRamp {
    pub stops: &'static [(f64, Rgb)],
}

pub const PATH_LOSS_RAMP: ColorRamp = ColorRamp {
    stops: &[
        (0.00, [0x00, 0x00, 0xFF]),
        (0.25, [0x00, 0xBF, 0xFF]),
        (0.50, [0x00, 0xFF, 0x7F]),
        (0.75, [0xFF, 0xD7, 0x00]),
        (0.90, [0xFF, 0x45, 0x00]),
        (1.00, [0x80, 0x00, 0x80]),
    ],
};

pub const SINR_RAMP: ColorRamp = ColorRamp {
    stops: &[
        (0.00, [0x8B, 0x00, 0x00]),
        (0.30, [0xFF, 0x8C, 0x00]),
        (0.50, [0xFF, 0xFF, 0x00]),
        (0.75, [0x7C, 0xFC, 0x00]),
        (1.00, [0x00, 0x64, 0x00]),
    ],
};

impl ColorRamp {
    pub fn for_kind(kind: GridKind) -> Self {
        match kind {
            GridKind::RadioMap => PATH_LOSS_RAMP,
            GridKind::SinrMap => SINR_RAMP,
        }
    }

    /// Colour at `t`, clamped to `[0, 1]` and linearly interpolated.
    pub fn color(&self, t: f64) -> Rgb {
        let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
        for w in self.stops.windows(2) {
            let (t0, c0) = w[0];
            let (t1, c1) = w[1];
            if t <= t1 {
                let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
                let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
                return [mix(c0[0], c1[0]), mix(c0[1], c1[1]), mix(c0[2], c1[2])];
            }
        }
        self.stops.last().map(|s| s.1).unwrap_or(NODATA_COLOR)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Pixels per cell edge.
    pub scale: u32,
    /// Fixed value range; defaults to the data range.
    pub range: Option<(f64, f64)>,
    pub legend: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { scale: 4, range: None, legend: true }
    }
}

/// Maps each cell to its colour, row-major with row 0 at the south edge.
pub fn cell_colors(doc: &GridDocument, ramp: &ColorRamp, range: Option<(f64, f64)>) -> Vec<Rgb> {
    let (lo, hi) = range.or_else(|| doc.value_range()).unwrap_or((0.0, 1.0));
    let span = hi - lo;
    doc.values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if doc.is_nodata(k) {
                NODATA_COLOR
            } else if span > 0.0 {
                ramp.color((v - lo) / span)
            } else {
                ramp.color(0.5)
            }
        })
        .collect()
}

const LEGEND_WIDTH: u32 = 56;
const GLYPH_W: u32 = 3;
const GLYPH_H: u32 = 5;

// 3x5 bitmaps, one row per u8 (low 3 bits, MSB left).
fn glyph(c: char) -> [u8; 5] {
    match c {
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
        '-' => [0, 0, 7, 0, 0],
        '.' => [0, 0, 0, 0, 2],
        'd' => [1, 1, 7, 5, 7],
        'B' => [6, 5, 6, 5, 6],
        _ => [0; 5],
    }
}

struct Canvas {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&fill);
        }
        Self { width, height, pixels }
    }

    fn put(&mut self, x: u32, y: u32, c: Rgb) {
        if x < self.width && y < self.height {
            let o = ((y * self.width + x) * 3) as usize;
            self.pixels[o..o + 3].copy_from_slice(&c);
        }
    }

    fn fill_rect(&mut self, x: u32, y: u32, w: u32, h: u32, c: Rgb) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    fn text(&mut self, x: u32, y: u32, s: &str, c: Rgb) {
        for (n, ch) in s.chars().enumerate() {
            let rows = glyph(ch);
            let ox = x + n as u32 * (GLYPH_W + 1);
            for (ry, bits) in rows.iter().enumerate() {
                for rx in 0..GLYPH_W {
                    if bits & (1 << (GLYPH_W - 1 - rx)) != 0 {
                        self.put(ox + rx, y + ry as u32, c);
                    }
                }
            }
        }
    }
}

/// Renders the document as an RGB PNG with north up and an optional dB legend.
pub fn render_png(doc: &GridDocument, opts: &RenderOptions) -> Result<Vec<u8>, String> {
    doc.validate()?;
    let ramp = ColorRamp::for_kind(doc.kind);
    let range = opts.range.or_else(|| doc.value_range()).unwrap_or((0.0, 1.0));
    let colors = cell_colors(doc, &ramp, Some(range));
    let scale = opts.scale.max(1);
    let map_w = doc.width as u32 * scale;
    let map_h = doc.height as u32 * scale;
    let legend_w = if opts.legend { LEGEND_WIDTH } else { 0 };
    let height = if opts.legend { map_h.max(64) } else { map_h };
    let mut canvas = Canvas::new(map_w + legend_w, height, [0xFF, 0xFF, 0xFF]);

    for j in 0..doc.height {
        let row_px = map_h - (j as u32 + 1) * scale;
        for i in 0..doc.width {
            let c = colors[j * doc.width + i];
            canvas.fill_rect(i as u32 * scale, row_px, scale, scale, c);
        }
    }

    if opts.legend {
        let bar_x = map_w + 6;
        let (top, bottom) = (10, height - 10);
        let bar_h = bottom - top;
        for y in 0..bar_h {
            let t = 1.0 - y as f64 / (bar_h - 1).max(1) as f64;
            canvas.fill_rect(bar_x, top + y, 10, 1, ramp.color(t));
        }
        let black = [0, 0, 0];
        canvas.text(bar_x + 13, top, &format!("{:.0}", range.1), black);
        canvas.text(bar_x + 13, bottom - GLYPH_H, &format!("{:.0}", range.0), black);
        canvas.text(bar_x + 13, top + bar_h / 2 - 2, "dB", black);
    }

    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, canvas.width, canvas.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let title = match doc.kind {
            GridKind::RadioMap => "best path loss (dB)",
            GridKind::SinrMap => "SINR (dB)",
        };
        enc.add_text_chunk("Title".into(), title.into()).map_err(|e| e.to_string())?;
        enc.add_text_chunk("Range".into(), format!("{:.3} {:.3} dB", range.0, range.1))
            .map_err(|e| e.to_string())?;
        let mut writer = enc.write_header().map_err(|e| e.to_string())?;
        writer.write_image_data(&canvas.pixels).map_err(|e| e.to_string())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_doc::NODATA;

    fn doc(values: Vec<f64>, w: usize, h: usize) -> GridDocument {
        let serving = values.iter().map(|v| if *v == NODATA { -1 } else { 1 }).collect();
        GridDocument {
            version: 1,
            kind: GridKind::RadioMap,
            units: "dB".into(),
            origin_lat: 0.0,
            origin_lon: 0.0,
            resolution_m: 5.0,
            width: w,
            height: h,
            nodata: NODATA,
            values,
            serving,
        }
    }

    #[test]
    fn ramp_endpoints() {
        assert_eq!(PATH_LOSS_RAMP.color(0.0), [0, 0, 255]);
        assert_eq!(PATH_LOSS_RAMP.color(1.0), [0x80, 0, 0x80]);
        assert_eq!(PATH_LOSS_RAMP.color(2.0), [0x80, 0, 0x80]);
        assert_eq!(PATH_LOSS_RAMP.color(-1.0), [0, 0, 255]);
    }

    #[test]
    fn two_by_two_with_nodata() {
        let d = doc(vec![0.0, 50.0, 100.0, NODATA], 2, 2);
        let colors = cell_colors(&d, &PATH_LOSS_RAMP, None);
        assert_eq!(colors[0], [0, 0, 255]);
        assert_eq!(colors[1], PATH_LOSS_RAMP.color(0.5));
        assert_eq!(colors[2], [0x80, 0, 0x80]);
        assert_eq!(colors[3], NODATA_COLOR);
    }

    #[test]
    fn constant_grid_is_uniform() {
        let d = doc(vec![70.0; 9], 3, 3);
        let colors = cell_colors(&d, &PATH_LOSS_RAMP, None);
        assert!(colors.iter().all(|c| *c == colors[0]));
    }

    #[test]
    fn png_has_expected_size_and_signature() {
        let d = doc(vec![60.0, 80.0, 100.0, NODATA, 90.0, 70.0], 3, 2);
        let png = render_png(&d, &RenderOptions { scale: 2, range: None, legend: false }).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        let decoder = png::Decoder::new(std::io::Cursor::new(&png));
        let reader = decoder.read_info().unwrap();
        let info = reader.info();
        assert_eq!((info.width, info.height), (6, 4));
    }

    #[test]
    fn png_north_is_up() {
        // Row 0 (south) blue, row 1 (north) purple.
        let d = doc(vec![0.0, 100.0], 1, 2);
        let png = render_png(&d, &RenderOptions { scale: 1, range: None, legend: false }).unwrap();
        let mut reader = png::Decoder::new(std::io::Cursor::new(&png)).read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        reader.next_frame(&mut buf).unwrap();
        assert_eq!(&buf[0..3], &[0x80, 0, 0x80]);
        assert_eq!(&buf[3..6], &[0, 0, 255]);
    }
}
