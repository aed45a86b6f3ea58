//! Static overview heatmap: one viridis stripe per catalog channel, in
//! catalog order, time running left to right.

use std::path::Path;

use gaitlens_core::explain::ChannelRows;
use gaitlens_core::{catalog, CYCLE_LEN};
use image::{Rgb, RgbImage};

use crate::error::{Result, ServiceError};

pub const STRIPE_HEIGHT: u32 = 12;
pub const STRIPE_GAP: u32 = 1;
pub const COLUMN_WIDTH: u32 = 4;

/// Renders the 29 rows scaled to `[0, vmax]`. Missing rows are drawn at the
/// bottom of the scale.
pub fn render_overview(rows: &ChannelRows, vmax: f64) -> Result<RgbImage> {
    if !(vmax > 0.0 && vmax.is_finite()) {
        return Err(ServiceError::InvalidInput(format!("colour scale maximum {vmax} must be positive")));
    }
    let n = catalog().len() as u32;
    let width = CYCLE_LEN as u32 * COLUMN_WIDTH;
    let height = n * (STRIPE_HEIGHT + STRIPE_GAP) - STRIPE_GAP;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    for (row, channel) in catalog().iter().enumerate() {
        let top = row as u32 * (STRIPE_HEIGHT + STRIPE_GAP);
        for t in 0..CYCLE_LEN {
            let v = rows.get(channel).map_or(0.0, |r| r[t]);
            let c = colorous::VIRIDIS.eval_continuous((v / vmax).clamp(0.0, 1.0));
            for dx in 0..COLUMN_WIDTH {
                for dy in 0..STRIPE_HEIGHT {
                    img.put_pixel(t as u32 * COLUMN_WIDTH + dx, top + dy, Rgb([c.r, c.g, c.b]));
                }
            }
        }
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| ServiceError::InvalidInput(format!("cannot write {}: {e}", path.display())))
}
