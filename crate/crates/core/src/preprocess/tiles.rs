use std::io::Write;

use rayon::prelude::*;

use super::image::{RasterImage, Rgb, TissueMask};
use crate::error::{Error, Result};

/// Edge length of every patch fed to the encoder.
pub const TILE_SIZE: u32 = 256;

/// Default minimum tissue fraction for a tile to be kept.
pub const DEFAULT_MIN_TISSUE_FRACTION: f64 = 0.5;

/// Top-left corners of non-overlapping square tiles, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileGrid {
    pub tile_size: u32,
    pub tiles: Vec<(u32, u32)>,
    pub source_dims: (u32, u32),
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    /// CSV export with header `x,y`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y")?;
        for (x, y) in &self.tiles {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }

    fn check_in_bounds(&self, dims: (u32, u32)) -> Result<()> {
        let s = self.tile_size as u64;
        for &(x, y) in &self.tiles {
            if x as u64 + s > dims.0 as u64 || y as u64 + s > dims.1 as u64 {
                return Err(Error::contract(format!(
                    "tile ({x}, {y}) of size {s} exceeds {}x{}",
                    dims.0, dims.1
                )));
            }
        }
        Ok(())
    }
}

/// All full tiles of `tile_size` that fit in `dims`; partial edge tiles are
/// dropped.
pub fn build_tile_grid(dims: (u32, u32), tile_size: u32) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::contract("tile_size must be >= 1"));
    }
    let cols = dims.0 / tile_size;
    let rows = dims.1 / tile_size;
    let tiles = (0..rows)
        .flat_map(|j| (0..cols).map(move |i| (i * tile_size, j * tile_size)))
        .collect();
    Ok(TileGrid {
        tile_size,
        tiles,
        source_dims: dims,
    })
}

fn tissue_fraction(mask: &TissueMask, x: u32, y: u32, size: u32) -> f64 {
    mask.count_in_block(x, y, size) as f64 / (size as f64 * size as f64)
}

/// Keeps tiles whose tissue fraction is at least `min_tissue_fraction`.
pub fn filter_tiles(grid: &TileGrid, mask: &TissueMask, min_tissue_fraction: f64) -> Result<TileGrid> {
    if mask.dims() != grid.source_dims {
        return Err(Error::contract(format!(
            "mask dims {:?} differ from grid source dims {:?}",
            mask.dims(),
            grid.source_dims
        )));
    }
    if !(0.0..=1.0).contains(&min_tissue_fraction) {
        return Err(Error::contract(format!(
            "min_tissue_fraction must lie in [0, 1], got {min_tissue_fraction}"
        )));
    }
    grid.check_in_bounds(mask.dims())?;
    let tiles = grid
        .tiles
        .iter()
        .copied()
        .filter(|&(x, y)| tissue_fraction(mask, x, y, grid.tile_size) >= min_tissue_fraction)
        .collect();
    Ok(TileGrid { tiles, ..grid.clone() })
}

/// A square block of pixels copied out of a slide.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub origin: (u32, u32),
    pub size: u32,
    pub pixels: Vec<Rgb>,
    pub tissue_fraction: f64,
}

impl Patch {
    /// Raw RGB bytes, row-major.
    pub fn bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// Copies one patch per tile, in grid order.
pub fn extract_patches(image: &RasterImage, grid: &TileGrid, mask: &TissueMask) -> Result<Vec<Patch>> {
    if mask.dims() != image.dims() {
        return Err(Error::contract(format!(
            "mask dims {:?} differ from image dims {:?}",
            mask.dims(),
            image.dims()
        )));
    }
    grid.check_in_bounds(image.dims())?;
    let size = grid.tile_size;
    Ok(grid
        .tiles
        .par_iter()
        .map(|&(x, y)| {
            let mut pixels = Vec::with_capacity(size as usize * size as usize);
            for row in y..y + size {
                pixels.extend_from_slice(&image.row(row)[x as usize..(x + size) as usize]);
            }
            Patch {
                origin: (x, y),
                size,
                pixels,
                tissue_fraction: tissue_fraction(mask, x, y, size),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_counts() {
        let g = build_tile_grid((12800, 10240), TILE_SIZE).unwrap();
        assert_eq!(g.len(), 2000);
        assert_eq!(g.tiles[0], (0, 0));
        assert_eq!(g.tiles[1], (256, 0));
        assert_eq!(g.tiles[50], (0, 256));

        let one = build_tile_grid((300, 300), 256).unwrap();
        assert_eq!(one.tiles, vec![(0, 0)]);
        assert!(build_tile_grid((255, 1000), 256).unwrap().is_empty());
        assert!(build_tile_grid((10, 10), 0).is_err());
    }

    #[test]
    fn filter_extremes_and_boundary() {
        let grid = build_tile_grid((512, 256), 256).unwrap();
        let all = TissueMask::filled(512, 256, true);
        assert_eq!(filter_tiles(&grid, &all, 1.0).unwrap(), grid);
        let none = TissueMask::filled(512, 256, false);
        assert!(filter_tiles(&grid, &none, 0.5).unwrap().is_empty());

        // left tile: exactly half its rows are tissue
        let mut half = TissueMask::filled(512, 256, false);
        for y in 0..128 {
            for x in 0..256 {
                half.set(x, y, true);
            }
        }
        assert_eq!(half.count_in_block(0, 0, 256), 32768);
        let kept = filter_tiles(&grid, &half, 0.5).unwrap();
        assert_eq!(kept.tiles, vec![(0, 0)]);

        assert!(filter_tiles(&grid, &TissueMask::filled(256, 256, true), 0.5).is_err());
    }

    #[test]
    fn extract_identity_and_order() {
        let pixels: Vec<Rgb> = (0..256 * 256).map(|i| [(i % 251) as u8, (i / 256) as u8, 7]).collect();
        let img = RasterImage::new(256, 256, pixels.clone()).unwrap();
        let mask = TissueMask::filled(256, 256, true);
        let grid = build_tile_grid(img.dims(), 256).unwrap();
        let patches = extract_patches(&img, &grid, &mask).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].pixels, pixels);
        assert_eq!(patches[0].tissue_fraction, 1.0);

        let empty = TileGrid { tiles: vec![], ..grid.clone() };
        assert!(extract_patches(&img, &empty, &mask).unwrap().is_empty());

        let oob = TileGrid { tiles: vec![(128, 0)], ..grid };
        assert!(matches!(extract_patches(&img, &oob, &mask), Err(Error::Contract(_))));
    }

    #[test]
    fn two_thousand_patches_row_major() {
        // same 50x40 layout as a 12800x10240 slide, at 1/16 scale
        let img = RasterImage::filled(800, 640, [200, 100, 180]).unwrap();
        let mask = TissueMask::filled(800, 640, true);
        let grid = build_tile_grid(img.dims(), 16).unwrap();
        let patches = extract_patches(&img, &grid, &mask).unwrap();
        assert_eq!(patches.len(), 2000);
        let origins: Vec<_> = patches.iter().map(|p| p.origin).collect();
        assert_eq!(origins, grid.tiles);
        assert!(patches.iter().all(|p| p.pixels.len() == 256));
    }

    #[test]
    fn grid_csv() {
        let g = build_tile_grid((512, 256), 256).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y\n0,0\n256,0\n");
    }

    proptest! {
        #[test]
        fn grid_is_disjoint_and_complete(w in 1u32..100, h in 1u32..100, s in 1u32..20) {
            let g = build_tile_grid((w, h), s).unwrap();
            prop_assert_eq!(g.len(), ((w / s) * (h / s)) as usize);
            for (a, &(ax, ay)) in g.tiles.iter().enumerate() {
                prop_assert!(ax + s <= w && ay + s <= h);
                prop_assert!(ax % s == 0 && ay % s == 0);
                for &(bx, by) in &g.tiles[a + 1..] {
                    let disjoint = ax + s <= bx || bx + s <= ax || ay + s <= by || by + s <= ay;
                    prop_assert!(disjoint);
                }
            }
        }

        #[test]
        fn filtering_is_monotone(bits in prop::collection::vec(any::<bool>(), 64), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let mask = TissueMask::new(8, 8, bits).unwrap();
            let grid = build_tile_grid((8, 8), 2).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let n_lo = filter_tiles(&grid, &mask, lo).unwrap().len();
            let n_hi = filter_tiles(&grid, &mask, hi).unwrap().len();
            prop_assert!(n_hi <= n_lo);
        }
    }
}
