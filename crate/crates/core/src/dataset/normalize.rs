use crate::geometry::{BoundingBox, IncidentAngle};

/// Regression target in `[−1, 1]⁶`: box corners via `2x − 1`, then
/// `a_entry / 90` and `a_rot / 180`.
pub fn normalize(bbox: &BoundingBox, angle: &IncidentAngle) -> [f64; 6] {
    let b = normalize_box(bbox);
    let a = normalize_angle(angle);
    [b[0], b[1], b[2], b[3], a[0], a[1]]
}

pub fn normalize_box(bbox: &BoundingBox) -> [f64; 4] {
    bbox.to_array().map(|c| 2.0 * c - 1.0)
}

pub fn normalize_angle(angle: &IncidentAngle) -> [f64; 2] {
    [angle.a_entry / 90.0, angle.a_rot / 180.0]
}

/// Inverse of [`normalize`]. Out-of-range values (as a model may produce)
/// are clamped, sorted and wrapped into valid ranges.
pub fn denormalize(v: &[f64; 6]) -> (BoundingBox, IncidentAngle) {
    let bbox = denormalize_box(&[v[0], v[1], v[2], v[3]]);
    (bbox, denormalize_angle(&[v[4], v[5]]))
}

pub fn denormalize_box(v: &[f64; 4]) -> BoundingBox {
    BoundingBox::from_prediction(v.map(|c| (c + 1.0) * 0.5))
}

pub fn denormalize_angle(v: &[f64; 2]) -> IncidentAngle {
    IncidentAngle::from_prediction(v[0] * 90.0, v[1] * 180.0)
}
