use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in pixels, `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn intersection(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Intersection over union.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / (self.area() + other.area() - inter)
    }

    /// Intersection over the smaller of the two areas.
    pub fn overlap_min(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / self.area().min(other.area())
    }

    /// Intersection over this box's area.
    pub fn overlap_self(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other);
        if inter == 0.0 {
            return 0.0;
        }
        inter / self.area()
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BoundingBox {
        BoundingBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }
}


/// Model window size and where the object sits inside it.
///
/// The object occupies a centred `object_w_frac × object_h_frac` part of
/// the window, so annotation boxes (body only) and windows (body plus
/// context) convert into each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowGeometry {
    pub window_w: usize,
    pub window_h: usize,
    pub object_w_frac: f64,
    pub object_h_frac: f64,
}

impl Default for WindowGeometry {
    fn default() -> Self {
        WindowGeometry {
            window_w: 60,
            window_h: 120,
            object_w_frac: 0.5,
            object_h_frac: 1.0,
        }
    }
}

impl WindowGeometry {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if self.window_w == 0 || self.window_h == 0 || !frac_ok(self.object_w_frac) || !frac_ok(self.object_h_frac) {
            return Err(Error::invalid(format!("invalid window geometry {self:?}")));
        }
        Ok(())
    }

    /// Object height in model pixels.
    pub fn object_h(&self) -> f64 {
        self.object_h_frac * self.window_h as f64
    }

    /// Object box inside a window with top-left `(x, y)` and pixel scale
    /// `sx × sy` (window pixels per model pixel).
    pub fn object_in_window(&self, x: f64, y: f64, sx: f64, sy: f64) -> BoundingBox {
        let (ww, wh) = (self.window_w as f64 * sx, self.window_h as f64 * sy);
        let (ow, oh) = (ww * self.object_w_frac, wh * self.object_h_frac);
        BoundingBox::new(x + (ww - ow) / 2.0, y + (wh - oh) / 2.0, ow, oh)
    }

    /// Window at model aspect around an object box: height-anchored and
    /// centred on the box.
    pub fn window_for_object(&self, b: &BoundingBox) -> BoundingBox {
        let wh = b.h / self.object_h_frac;
        let ww = wh * self.window_w as f64 / self.window_h as f64;
        let (cx, cy) = b.center();
        BoundingBox::new(cx - ww / 2.0, cy - wh / 2.0, ww, wh)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_width_shift_has_iou_one_third() {
        let a = BoundingBox::new(10.0, 10.0, 40.0, 100.0);
        let b = a.translate(20.0, 0.0);
        assert!((a.iou(&b) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&a.translate(40.0, 0.0)), 0.0);
    }

    #[test]
    fn min_area_overlap_of_nested_boxes_is_one() {
        let outer = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        let inner = BoundingBox::new(2.0, 2.0, 3.0, 3.0);
        assert_eq!(outer.overlap_min(&inner), 1.0);
        assert!((inner.overlap_self(&outer) - 1.0).abs() < 1e-15);
        assert!((outer.overlap_self(&inner) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn window_and_object_boxes_invert() {
        let g = WindowGeometry {
            window_w: 60,
            window_h: 120,
            object_w_frac: 0.64,
            object_h_frac: 0.8,
        };
        let obj = BoundingBox::new(30.0, 40.0, 38.4, 96.0);
        let win = g.window_for_object(&obj);
        assert_eq!((win.w, win.h), (60.0, 120.0));
        let back = g.object_in_window(win.x, win.y, 1.0, 1.0);
        assert!(back.iou(&obj) > 1.0 - 1e-12);
    }
}
