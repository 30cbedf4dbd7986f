//! Color-wheel visualization of a flow field: hue encodes direction,
//! saturation encodes magnitude relative to the field maximum.

use super::FlowField;

/// Render a field as interleaved 8-bit RGB. An all-zero field renders
/// uniformly white; the strongest vector reaches full saturation.
pub fn flow_to_color(field: &FlowField) -> Vec<u8> {
    let max_mag = field.max_magnitude();
    let mut rgb = Vec::with_capacity(field.vectors().len() * 3);
    for &(dx, dy) in field.vectors() {
        let (dx, dy) = (dx as f64, dy as f64);
        let mag = (dx * dx + dy * dy).sqrt();
        let sat = if max_mag > 0.0 {
            (mag / max_mag).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let hue = dy.atan2(dx); // [-pi, pi]
        let (r, g, b) = hsv_to_rgb(hue, sat);
        rgb.extend_from_slice(&[r, g, b]);
    }
    rgb
}

/// Hue in radians, saturation in [0,1], value fixed at 1.
fn hsv_to_rgb(hue: f64, sat: f64) -> (u8, u8, u8) {
    let h = (hue / (2.0 * std::f64::consts::PI)).rem_euclid(1.0) * 6.0;
    let i = h.floor() as i32 % 6;
    let f = h - h.floor();
    let p = 1.0 - sat;
    let q = 1.0 - sat * f;
    let t = 1.0 - sat * (1.0 - f);
    let (r, g, b) = match i {
        0 => (1.0, t, p),
        1 => (q, 1.0, p),
        2 => (p, 1.0, t),
        3 => (p, q, 1.0),
        4 => (t, p, 1.0),
        _ => (1.0, p, q),
    };
    let to8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    (to8(r), to8(g), to8(b))
}
