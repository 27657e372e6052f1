//! Vectorization toolkit for scanned hand-drawn cadastral maps.
//!
//! The library turns a grayscale scan of a plot-boundary map into a cleaned
//! vector model: binarize, separate boundary ink from digit annotations,
//! bridge scan gaps, thin to a one-pixel skeleton, trace the skeleton into
//! polylines, smooth out tracing artifacts, close the line work into plot
//! polygons, and attach recognized plot numbers. The [`pipeline`] module glues
//! the stages together; everything else is usable on its own.

pub mod gapfill;
pub mod glyphs;
pub mod imageio;
pub mod metrics;
pub mod ocr;
pub mod pipeline;
pub mod polygonize;
pub mod raster;
pub mod skeleton;
pub mod smoothing;
pub mod vecmodel;
