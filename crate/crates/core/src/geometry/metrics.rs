use super::annotation::BoundingBox;

/// Intersection over union of two boxes; 0 when they do not overlap.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Circular distance between two angles in degrees, in `[0, 180]`.
pub fn angular_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    #[test]
    fn iou_fixtures() {
        let a = bb(0.1, 0.1, 0.5, 0.6);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bb(0.0, 0.0, 0.2, 0.2), &bb(0.5, 0.5, 0.7, 0.7)), 0.0);
        let v = iou(&bb(0.0, 0.0, 0.4, 0.4), &bb(0.2, 0.0, 0.6, 0.4));
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        // Touching edges share no area.
        assert_eq!(iou(&bb(0.0, 0.0, 0.2, 0.2), &bb(0.2, 0.0, 0.4, 0.2)), 0.0);
    }

    #[test]
    fn angular_error_fixtures() {
        assert_eq!(angular_error(10.0, 10.0), 0.0);
        assert_eq!(angular_error(-170.0, 175.0), 15.0);
        assert_eq!(angular_error(350.0, 10.0), 20.0);
        assert_eq!(angular_error(0.0, 180.0), 180.0);
        assert_eq!(angular_error(10.0, 360.0), 10.0);
    }
}
