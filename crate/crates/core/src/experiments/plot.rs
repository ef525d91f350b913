//! Minimal raster charts: line curves and an annotated heatmap, drawn with
//! an 8×8 bitmap font.

use font8x8::UnicodeFonts;
use image::{Rgb, RgbImage};

pub(crate) const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
pub(crate) const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
pub(crate) const GRID: Rgb<u8> = Rgb([225, 225, 225]);
pub(crate) const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub(crate) const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);

pub(crate) struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(w: u32, h: u32) -> Self {
        Self { img: RgbImage::from_pixel(w, h, WHITE) }
    }

    pub fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    pub fn fill_rect(&mut self, x: i64, y: i64, w: i64, h: i64, c: Rgb<u8>) {
        for yy in y..y + h {
            for xx in x..x + w {
                self.put(xx, yy, c);
            }
        }
    }

    /// Bresenham line, `thickness` pixels wide.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), thickness: i64, c: Rgb<u8>) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        let r = thickness / 2;
        loop {
            self.fill_rect(x - r, y - r, thickness, thickness, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }

    pub fn text(&mut self, x: i64, y: i64, s: &str, scale: i64, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            let Some(glyph) = font8x8::BASIC_FONTS.get(ch) else { continue };
            let ox = x + i as i64 * 8 * scale;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..8 {
                    if bits & (1 << col) != 0 {
                        self.fill_rect(ox + col * scale, y + row as i64 * scale, scale, scale, c);
                    }
                }
            }
        }
    }

    pub fn text_centered(&mut self, cx: i64, y: i64, s: &str, scale: i64, c: Rgb<u8>) {
        let w = text_width(s, scale);
        self.text(cx - w / 2, y, s, scale, c);
    }
}

pub(crate) fn text_width(s: &str, scale: i64) -> i64 {
    s.chars().count() as i64 * 8 * scale
}

pub(crate) struct Series<'a> {
    pub label: &'a str,
    pub color: Rgb<u8>,
    /// One value per epoch; gaps are skipped.
    pub values: Vec<Option<f64>>,
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else if span >= 1.0 {
        format!("{v:.1}")
    } else if span >= 0.1 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Line chart with epoch (1-based) on the x axis.
pub(crate) fn line_chart(title: &str, y_label: &str, series: &[Series<'_>]) -> RgbImage {
    let (w, h) = (800i64, 500i64);
    let (left, right, top, bottom) = (80i64, 20i64, 50i64, 60i64);
    let mut cv = Canvas::new(w as u32, h as u32);
    let points = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(1);

    let all: Vec<f64> = series.iter().flat_map(|s| s.values.iter().flatten().copied()).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let px = |epoch: usize| -> i64 {
        if points == 1 {
            left + plot_w / 2
        } else {
            left + ((epoch - 1) as f64 / (points - 1) as f64 * plot_w as f64).round() as i64
        }
    };
    let py = |v: f64| -> i64 { top + ((hi - v) / (hi - lo) * plot_h as f64).round() as i64 };

    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let y = py(v);
        cv.line((left, y), (left + plot_w, y), 1, GRID);
        let label = tick_label(v, hi - lo);
        cv.text(left - 8 - text_width(&label, 1), y - 4, &label, 1, BLACK);
    }
    let step = points.div_ceil(10).max(1);
    for epoch in (1..=points).filter(|e| (e - 1) % step == 0 || *e == points) {
        let x = px(epoch);
        cv.line((x, top + plot_h), (x, top + plot_h + 5), 1, BLACK);
        cv.text_centered(x, top + plot_h + 10, &epoch.to_string(), 1, BLACK);
    }
    cv.line((left, top), (left, top + plot_h), 2, BLACK);
    cv.line((left, top + plot_h), (left + plot_w, top + plot_h), 2, BLACK);
    cv.text_centered(w / 2, 15, title, 2, BLACK);
    cv.text_centered(left + plot_w / 2, h - 25, "epoch", 1, BLACK);
    cv.text(8, top - 20, y_label, 1, BLACK);

    for s in series {
        let pts: Vec<(i64, i64)> =
            s.values.iter().enumerate().filter_map(|(i, v)| v.filter(|v| v.is_finite()).map(|v| (px(i + 1), py(v)))).collect();
        for pair in pts.windows(2) {
            cv.line(pair[0], pair[1], 2, s.color);
        }
        for &(x, y) in &pts {
            cv.fill_rect(x - 3, y - 3, 7, 7, s.color);
        }
    }
    let mut ly = top + 10;
    for s in series {
        let lx = left + plot_w - 160;
        cv.fill_rect(lx, ly, 20, 8, s.color);
        cv.text(lx + 28, ly, s.label, 1, BLACK);
        ly += 16;
    }
    cv.img
}

/// Heatmap of an integer matrix with a count in every cell.
pub(crate) fn heatmap(title: &str, row_names: &[String], col_names: &[String], cells: &[Vec<u64>]) -> RgbImage {
    let n = cells.len() as i64;
    let cell = 120i64;
    let label_w = row_names.iter().map(|s| text_width(s, 1)).max().unwrap_or(0) + 40;
    let (top, bottom) = (60i64, 70i64);
    let w = label_w + n * cell + 20;
    let h = top + n * cell + bottom;
    let mut cv = Canvas::new(w as u32, h as u32);
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;

    for (i, row) in cells.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let t = v as f64 / max;
            let shade = |full: f64, none: f64| (none + (full - none) * t).round() as u8;
            let color = Rgb([shade(8.0, 247.0), shade(48.0, 251.0), shade(107.0, 255.0)]);
            let (x, y) = (label_w + j as i64 * cell, top + i as i64 * cell);
            cv.fill_rect(x, y, cell, cell, color);
            let ink = if t > 0.5 { WHITE } else { BLACK };
            cv.text_centered(x + cell / 2, y + cell / 2 - 8, &v.to_string(), 2, ink);
        }
    }
    for k in 0..=n {
        cv.line((label_w + k * cell, top), (label_w + k * cell, top + n * cell), 1, BLACK);
        cv.line((label_w, top + k * cell), (label_w + n * cell, top + k * cell), 1, BLACK);
    }
    for (i, name) in row_names.iter().enumerate() {
        cv.text(label_w - 10 - text_width(name, 1), top + i as i64 * cell + cell / 2 - 4, name, 1, BLACK);
    }
    for (j, name) in col_names.iter().enumerate() {
        cv.text_centered(label_w + j as i64 * cell + cell / 2, top + n * cell + 10, name, 1, BLACK);
    }
    cv.text_centered(w / 2, 15, title, 2, BLACK);
    cv.text_centered(label_w + n * cell / 2, h - 30, "predicted", 1, BLACK);
    cv.text(8, top - 18, "true", 1, BLACK);
    cv.img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_draws_ink() {
        let mut cv = Canvas::new(40, 10);
        cv.text(0, 0, "A1", 1, BLACK);
        assert!(cv.img.pixels().any(|p| *p == BLACK));
        assert_eq!(text_width("abc", 2), 48);
    }

    #[test]
    fn single_point_chart() {
        let img = line_chart("t", "y", &[Series { label: "a", color: BLUE, values: vec![Some(0.5)] }]);
        assert_eq!(img.dimensions(), (800, 500));
        assert!(img.pixels().any(|p| *p == BLUE));
    }
}
