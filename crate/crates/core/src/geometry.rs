//! Axis-aligned bounding boxes in image pixel space.
//!
//! Everything here is a pure function of its inputs. Comparisons against
//! pruning thresholds happen elsewhere and use the raw values returned here,
//! with no epsilon adjustment.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgnError};

/// Number of components in a relative-position edge feature.
pub const EDGE_DIM: usize = 5;

pub type EdgeFeature = [f64; EDGE_DIM];

/// Rectangle with top-left `(x_tl, y_tl)` and bottom-right `(x_br, y_br)`.
///
/// Construction always yields canonical corner order: swapped coordinates are
/// exchanged rather than rejected. Serialized as `[x_tl, y_tl, x_br, y_br]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_tl: f64,
    y_tl: f64,
    x_br: f64,
    y_br: f64,
}

impl From<[f64; 4]> for BoundingBox {
    fn from(c: [f64; 4]) -> Self {
        BoundingBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.coords()
    }
}

impl BoundingBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        BoundingBox {
            x_tl: x0.min(x1),
            y_tl: y0.min(y1),
            x_br: x0.max(x1),
            y_br: y0.max(y1),
        }
    }

    /// Box of the given size whose center sits at `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x_tl(&self) -> f64 {
        self.x_tl
    }
    pub fn y_tl(&self) -> f64 {
        self.y_tl
    }
    pub fn x_br(&self) -> f64 {
        self.x_br
    }
    pub fn y_br(&self) -> f64 {
        self.y_br
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_tl, self.y_tl, self.x_br, self.y_br]
    }

    pub fn width(&self) -> f64 {
        self.x_br - self.x_tl
    }

    pub fn height(&self) -> f64 {
        self.y_br - self.y_tl
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// True when both extents are strictly positive.
    pub fn is_proper(&self) -> bool {
        self.width() > 0.0 && self.height() > 0.0
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BoundingBox::new(
            self.x_tl + dx,
            self.y_tl + dy,
            self.x_br + dx,
            self.y_br + dy,
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        BoundingBox::new(self.x_tl * s, self.y_tl * s, self.x_br * s, self.y_br * s)
    }

    /// Clip to `[0, w] x [0, h]`. Returns the clipped box and whether it changed.
    pub fn clamp_to(&self, w: f64, h: f64) -> (Self, bool) {
        let c = BoundingBox::new(
            self.x_tl.clamp(0.0, w),
            self.y_tl.clamp(0.0, h),
            self.x_br.clamp(0.0, w),
            self.y_br.clamp(0.0, h),
        );
        (c, c != *self)
    }

    /// Area of the intersection (0 for disjoint or touching boxes).
    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = (self.x_br.min(other.x_br) - self.x_tl.max(other.x_tl)).max(0.0);
        let h = (self.y_br.min(other.y_br) - self.y_tl.max(other.y_tl)).max(0.0);
        w * h
    }

    /// Smallest box covering both.
    pub fn enclosing(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_tl: self.x_tl.min(other.x_tl),
            y_tl: self.y_tl.min(other.y_tl),
            x_br: self.x_br.max(other.x_br),
            y_br: self.y_br.max(other.y_br),
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_tl && x <= self.x_br && y >= self.y_tl && y <= self.y_br
    }
}

fn require_proper(b: &BoundingBox, role: &str) -> Result<()> {
    if b.is_proper() {
        Ok(())
    } else {
        Err(SsgnError::Geometry(format!(
            "{role} box {:?} has zero width or height",
            b.coords()
        )))
    }
}

/// Position of `src` relative to the reference box `reference`:
/// corner offsets from the reference center, normalized by the reference
/// width/height, followed by the area ratio.
pub fn edge_feature(src: &BoundingBox, reference: &BoundingBox) -> Result<EdgeFeature> {
    require_proper(reference, "reference")?;
    let (cx, cy) = reference.center();
    let (w, h) = (reference.width(), reference.height());
    Ok([
        (src.x_tl - cx) / w,
        (src.y_tl - cy) / h,
        (src.x_br - cx) / w,
        (src.y_br - cy) / h,
        (src.width() * src.height()) / (w * h),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IouKind {
    #[serde(rename = "iou")]
    IoU,
    #[serde(rename = "giou")]
    GIoU,
    #[serde(rename = "diou")]
    DIoU,
    #[serde(rename = "ciou")]
    CIoU,
}

impl IouKind {
    pub const ALL: [IouKind; 4] = [IouKind::IoU, IouKind::GIoU, IouKind::DIoU, IouKind::CIoU];
}

impl std::str::FromStr for IouKind {
    type Err = SsgnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iou" => Ok(IouKind::IoU),
            "giou" => Ok(IouKind::GIoU),
            "diou" => Ok(IouKind::DIoU),
            "ciou" => Ok(IouKind::CIoU),
            other => Err(SsgnError::Config(format!("unknown IoU variant `{other}`"))),
        }
    }
}

fn plain_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    inter / union
}

/// IoU and its generalized, distance and complete variants.
pub fn iou_family(kind: IouKind, a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    require_proper(a, "first")?;
    require_proper(b, "second")?;
    let iou = plain_iou(a, b);
    let value = match kind {
        IouKind::IoU => iou,
        IouKind::GIoU => {
            let hull = a.enclosing(b).area();
            let inter = a.intersection_area(b);
            let union = a.area() + b.area() - inter;
            iou - (hull - union).max(0.0) / hull
        }
        IouKind::DIoU => iou - diou_penalty(a, b),
        IouKind::CIoU => {
            let v = 4.0 / (std::f64::consts::PI * std::f64::consts::PI)
                * ((a.width() / a.height()).atan() - (b.width() / b.height()).atan()).powi(2);
            let denom = (1.0 - iou) + v;
            let alpha = if denom == 0.0 { 0.0 } else { v / denom };
            iou - diou_penalty(a, b) - alpha * v
        }
    };
    Ok(value)
}

/// Squared center distance over squared enclosing diagonal.
fn diou_penalty(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let rho2 = (ax - bx).powi(2) + (ay - by).powi(2);
    let hull = a.enclosing(b);
    let c2 = hull.width().powi(2) + hull.height().powi(2);
    if c2 == 0.0 {
        0.0
    } else {
        rho2 / c2
    }
}

pub fn diou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    iou_family(IouKind::DIoU, a, b)
}

/// Euclidean distance between box centers.
pub fn center_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Shortest distance between the two rectangles; 0 when they touch or overlap.
pub fn gap_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let dx = (a.x_tl - b.x_br).max(b.x_tl - a.x_br).max(0.0);
    let dy = (a.y_tl - b.y_br).max(b.y_tl - a.y_br).max(0.0);
    dx.hypot(dy)
}

/// `max(A_ab / A_a, A_ab / A_b)`: the larger fraction of either box covered by
/// the intersection.
pub fn overlap_ratio(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return Err(SsgnError::Geometry(format!(
            "overlap ratio needs positive areas, got {:?} and {:?}",
            a.coords(),
            b.coords()
        )));
    }
    let inter = a.intersection_area(b);
    Ok((inter / a.area()).max(inter / b.area()))
}
