//! Forward tile rasterization: front-to-back alpha compositing of prepared
//! splats, parallel over tiles.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::camera::{CameraPose, FisheyeIntrinsics};
use crate::img::Image;
use crate::scene::SceneModel;

use super::{
    prepare_view, splat_alpha, PreparedView, RenderOptions, RenderedImage, TILE_SIZE,
    TRANSMITTANCE_FLOOR,
};

struct TileOut {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    rgb: Vec<f64>,
    alpha: Vec<f64>,
    contrib: Vec<u32>,
}

/// Renders the scene from one view.
///
/// Deterministic: the output is a pure function of the inputs, independent
/// of thread count (tiles are independent and stitched in index order).
pub fn render(
    scene: &SceneModel,
    pose: &CameraPose,
    intr: &FisheyeIntrinsics,
    opts: &RenderOptions,
) -> RenderedImage {
    let pv = prepare_view(scene, pose, intr, opts);
    render_prepared(&pv, intr, opts)
}

pub(super) fn render_prepared(
    pv: &PreparedView,
    intr: &FisheyeIntrinsics,
    opts: &RenderOptions,
) -> RenderedImage {
    let (w, h) = (intr.width as usize, intr.height as usize);
    debug_assert_eq!(pv.tile_lists.len(), pv.tiles_x * pv.tiles_y);
    let tiles: Vec<TileOut> = (0..pv.tile_lists.len())
        .into_par_iter()
        .map(|t| forward_tile(pv, t, w, h, &opts.background))
        .collect();

    let mut out = RenderedImage {
        image: Image::new(w, h),
        alpha: vec![0.0; w * h],
        contrib: vec![0; w * h],
    };
    for tile in &tiles {
        for ty in 0..tile.h {
            for tx in 0..tile.w {
                let (x, y) = (tile.x0 + tx, tile.y0 + ty);
                let src = ty * tile.w + tx;
                out.image.set(
                    x,
                    y,
                    [
                        tile.rgb[src * 3],
                        tile.rgb[src * 3 + 1],
                        tile.rgb[src * 3 + 2],
                    ],
                );
                out.alpha[y * w + x] = tile.alpha[src];
                out.contrib[y * w + x] = tile.contrib[src];
            }
        }
    }
    out
}

fn forward_tile(pv: &PreparedView, t: usize, w: usize, h: usize, bg: &[f64; 3]) -> TileOut {
    let tx0 = (t % pv.tiles_x) * TILE_SIZE;
    let ty0 = (t / pv.tiles_x) * TILE_SIZE;
    let tw = TILE_SIZE.min(w - tx0);
    let th = TILE_SIZE.min(h - ty0);
    let mut tile = TileOut {
        x0: tx0,
        y0: ty0,
        w: tw,
        h: th,
        rgb: vec![0.0; tw * th * 3],
        alpha: vec![0.0; tw * th],
        contrib: vec![0; tw * th],
    };
    let list = &pv.tile_lists[t];
    for py in 0..th {
        for px in 0..tw {
            let pixel = Vector2::new(
                (tx0 + px) as f64 + 0.5,
                (ty0 + py) as f64 + 0.5,
            );
            let mut transmittance = 1.0f64;
            let mut color = [0.0f64; 3];
            let mut n = 0u32;
            for &si in list {
                let sp = &pv.splats[si as usize];
                let Some((alpha, _, _)) = splat_alpha(sp, pixel) else {
                    continue;
                };
                let next = transmittance * (1.0 - alpha);
                if next < TRANSMITTANCE_FLOOR {
                    break;
                }
                for ch in 0..3 {
                    color[ch] += sp.color[ch] * alpha * transmittance;
                }
                transmittance = next;
                n += 1;
            }
            let dst = py * tw + px;
            for ch in 0..3 {
                tile.rgb[dst * 3 + ch] = color[ch] + transmittance * bg[ch];
            }
            tile.alpha[dst] = 1.0 - transmittance;
            tile.contrib[dst] = n;
        }
    }
    tile
}
