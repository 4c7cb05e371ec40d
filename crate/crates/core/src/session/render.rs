use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::Session;
use crate::error::Result;

/// Overlay colors, indexed by `(object_id - 1) % len`.
pub const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [255, 225, 25],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
];

pub const OVERLAY_ALPHA: f64 = 0.5;

pub fn palette_color(object_id: u32) -> [u8; 3] {
    PALETTE[(object_id.max(1) as usize - 1) % PALETTE.len()]
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LegendEntry {
    pub object_id: u32,
    pub class_id: u32,
    pub class_name: String,
    pub color: [u8; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Composite {
    pub image: RgbImage,
    pub legend: Vec<LegendEntry>,
}

fn blend(base: u8, over: u8) -> u8 {
    (base as f64 * (1.0 - OVERLAY_ALPHA) + over as f64 * OVERLAY_ALPHA).round() as u8
}

/// The frame with every object's mask blended in its palette color, objects
/// drawn in id order.
pub fn visualize(session: &Session, frame: usize) -> Result<Composite> {
    let mut image = (*session.video().frame(frame)?).clone();
    let mut legend = Vec::new();
    for obj in session.objects().values() {
        let color = palette_color(obj.object_id);
        legend.push(LegendEntry {
            object_id: obj.object_id,
            class_id: obj.class_id,
            class_name: obj.class_name.clone(),
            color,
        });
        let Some(mask) = session.object_mask(frame, obj.object_id) else { continue };
        for (x, y, px) in image.enumerate_pixels_mut() {
            if mask.get(x, y) {
                *px = Rgb([blend(px[0], color[0]), blend(px[1], color[1]), blend(px[2], color[2])]);
            }
        }
    }
    Ok(Composite { image, legend })
}
