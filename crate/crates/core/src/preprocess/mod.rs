//! Tissue segmentation and tiling of raster slide images.

mod image;
mod segment;
mod tiles;

pub use self::image::{RasterImage, Rgb, TissueMask};
pub use segment::{saturation_value, segment_tissue, SegmentParams};
pub use tiles::{
    build_tile_grid, extract_patches, filter_tiles, Patch, TileGrid, DEFAULT_MIN_TISSUE_FRACTION, TILE_SIZE,
};
