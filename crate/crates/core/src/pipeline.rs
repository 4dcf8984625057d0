//! End-to-end driver: matching, filtering, interpolation and refinement.
//!
//! Configuration is a flat `key = value` file. A `preset` line is expanded
//! first, wherever it appears; all other keys then override in file order.
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | `kitti` or `sintel` |
//! | `seed` | seed for matching and consensus |
//! | `matching.descriptor` | `census` or `sift` |
//! | `matching.iterations` | propagation rounds per scale |
//! | `matching.patch_radius` | census half-width or SIFT radius |
//! | `matching.random_search_radius` | px |
//! | `matching.random_searches` | random searches per round (0..=4) |
//! | `matching.kd_leaf_budget` | integer, or `exact` |
//! | `matching.sub_sub_scales` | `true` / `false` |
//! | `matching.min_dimension` | coarsest level size |
//! | `filter.epsilon` | consistency threshold, px |
//! | `filter.min_matches` | valid pixels per 3x3 block |
//! | `filter.min_region_area` | px |
//! | `filter.region_flow_tolerance` | px |
//! | `geodesic.offset` | distance cost per pixel |
//! | `geodesic.connectivity` | `4` or `8` |
//! | `superpixels.grid_step` | px |
//! | `interp.neighborhood_size` | support matches per superpixel |
//! | `interp.inlier_threshold` | px |
//! | `interp.ransac_iterations` | |
//! | `interp.propagation_rounds` | |
//! | `interp.weight_sigma_factor` | fraction of the diagonal distance |
//! | `variational.outer_iterations` | warping iterations |
//! | `variational.inner_iterations` | fixed-point iterations |
//! | `variational.sor_iterations` | |
//! | `variational.sor_omega` | |
//! | `variational.alpha` | smoothness weight |
//! | `variational.gamma` | gradient-constancy weight |
//! | `variational.epsilon` | robust function constant |
//! | `variational.intensity_scale` | factor on Lab values in the data term |

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::color::to_cielab;
use crate::edges::{detect_edges, Connectivity, EdgeMap, GeodesicParams};
use crate::error::{Error, Result};
use crate::filter::{combine_checks, region_filter, sparsify, FilterParams, MatchSet};
use crate::flowio::{visualize, write_flo};
use crate::interpolator::{interpolate, InterpParams, Interpolation};
use crate::matcher::{match_full, DescriptorKind, MatchingParams};
use crate::raster::{FlowField, Image};
use crate::superpixels::{segment, SuperpixelSegmentation};
use crate::variational::{refine, VariationalParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Kitti,
    Sintel,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kitti" => Ok(Preset::Kitti),
            "sintel" => Ok(Preset::Sintel),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Kitti => "kitti",
            Preset::Sintel => "sintel",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Preset the configuration was expanded from.
    pub preset: Preset,
    pub matching: MatchingParams,
    pub filter: FilterParams,
    pub geodesic: GeodesicParams,
    pub interp: InterpParams,
    pub variational: VariationalParams,
    /// Superpixel seed spacing, px.
    pub grid_step: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::preset(Preset::Sintel)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl PipelineConfig {
    pub fn preset(preset: Preset) -> Self {
        let (epsilon, min_matches, grid_step, neighborhood, outer, matching) = match preset {
            Preset::Kitti => (1.0, 7, 20, 150, 2, MatchingParams::sift()),
            Preset::Sintel => (7.0, 4, 50, 200, 5, MatchingParams::census()),
        };
        PipelineConfig {
            preset,
            matching,
            filter: FilterParams {
                epsilon,
                min_matches,
                ..FilterParams::default()
            },
            geodesic: GeodesicParams::default(),
            interp: InterpParams {
                neighborhood_size: neighborhood,
                ..InterpParams::default()
            },
            variational: VariationalParams {
                outer_iterations: outer,
                ..VariationalParams::default()
            },
            grid_step,
        }
    }

    /// Sets the seed of every randomized stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.set_seed(seed);
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.matching.seed = seed;
        self.interp.seed = seed;
    }

    pub fn seed(&self) -> u64 {
        self.matching.seed
    }

    /// Every failure is reported as [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidInput(msg) => Error::Config(msg),
            e => e,
        };
        self.matching.validate().map_err(as_config)?;
        self.filter.validate().map_err(as_config)?;
        self.interp.validate().map_err(as_config)?;
        self.variational.validate().map_err(as_config)?;
        if !(self.geodesic.euclidean_offset > 0.0) {
            return Err(Error::Config("geodesic.offset must be positive".into()));
        }
        if self.grid_step < 5 {
            return Err(Error::Config("superpixels.grid_step must be at least 5".into()));
        }
        Ok(())
    }

    /// Parses `key = value` text on top of the default configuration.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut config = match entries.iter().rev().find(|(k, _)| k == "preset") {
            Some((_, v)) => PipelineConfig::preset(v.parse()?),
            None => PipelineConfig::default(),
        };
        for (k, v) in entries.iter().filter(|(k, _)| k != "preset") {
            config.set(k, v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| crate::error::open_error(path, e))?;
        PipelineConfig::from_text(&text)
    }

    /// Applies one override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.matching;
        let f = &mut self.filter;
        let i = &mut self.interp;
        let var = &mut self.variational;
        match key {
            "seed" => self.set_seed(parse(key, value)?),
            "matching.descriptor" => {
                m.descriptor = match value.to_ascii_lowercase().as_str() {
                    "census" => DescriptorKind::CensusCieLab,
                    "sift" => DescriptorKind::Sift,
                    _ => return Err(Error::Config(format!("unknown descriptor `{value}`"))),
                }
            }
            "matching.iterations" => m.iterations = parse(key, value)?,
            "matching.patch_radius" => m.patch_radius = parse(key, value)?,
            "matching.random_search_radius" => m.random_search_radius = parse(key, value)?,
            "matching.random_searches" => m.random_searches_per_iteration = parse(key, value)?,
            "matching.kd_leaf_budget" => {
                m.kd_leaf_budget = if value.eq_ignore_ascii_case("exact") {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "matching.sub_sub_scales" => m.pyramid.sub_sub_scales = parse(key, value)?,
            "matching.min_dimension" => m.pyramid.min_dimension = parse(key, value)?,
            "filter.epsilon" => f.epsilon = parse(key, value)?,
            "filter.min_matches" => f.min_matches = parse(key, value)?,
            "filter.min_region_area" => f.min_region_area = parse(key, value)?,
            "filter.region_flow_tolerance" => f.region_flow_tolerance = parse(key, value)?,
            "geodesic.offset" => self.geodesic.euclidean_offset = parse(key, value)?,
            "geodesic.connectivity" => {
                self.geodesic.connectivity = match value {
                    "4" => Connectivity::Four,
                    "8" => Connectivity::Eight,
                    _ => return Err(Error::Config(format!("connectivity must be 4 or 8, got `{value}`"))),
                }
            }
            "superpixels.grid_step" => self.grid_step = parse(key, value)?,
            "interp.neighborhood_size" => i.neighborhood_size = parse(key, value)?,
            "interp.inlier_threshold" => i.inlier_threshold = parse(key, value)?,
            "interp.ransac_iterations" => i.ransac_iterations = parse(key, value)?,
            "interp.propagation_rounds" => i.propagation_rounds = parse(key, value)?,
            "interp.weight_sigma_factor" => i.weight_sigma_factor = parse(key, value)?,
            "variational.outer_iterations" => var.outer_iterations = parse(key, value)?,
            "variational.inner_iterations" => var.inner_fixed_point_iterations = parse(key, value)?,
            "variational.sor_iterations" => var.sor_iterations = parse(key, value)?,
            "variational.sor_omega" => var.sor_omega = parse(key, value)?,
            "variational.alpha" => var.alpha = parse(key, value)?,
            "variational.gamma" => var.gamma = parse(key, value)?,
            "variational.epsilon" => var.robust_epsilon = parse(key, value)?,
            "variational.intensity_scale" => var.intensity_scale = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Interpolation parameters with the geodesic offset applied.
    pub fn effective_interp(&self) -> InterpParams {
        InterpParams {
            euclidean_offset: self.geodesic.euclidean_offset,
            ..self.interp.clone()
        }
    }
}

/// Final flow and the intermediate results of every stage.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub flow: FlowField,
    /// Dense forward matching result.
    pub forward: Option<FlowField>,
    pub matches: MatchSet,
    pub edges: EdgeMap,
    pub segmentation: SuperpixelSegmentation,
    pub interpolation: Interpolation,
    pub timings: Vec<(&'static str, Duration)>,
}

impl PipelineOutput {
    /// Writes `matches.txt`, `edges.edg`, `labels.png`, `interpolated.flo`,
    /// `flow.flo` and `flow.png` into `dir`.
    pub fn dump(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.matches.save(dir.join(MATCHES_FILE))?;
        self.edges.save(dir.join(EDGES_FILE))?;
        self.segmentation.save_labels_png(dir.join(LABELS_FILE))?;
        write_flo(dir.join(INTERPOLATED_FILE), &self.interpolation.flow)?;
        write_flo(dir.join("flow.flo"), &self.flow)?;
        visualize(&self.flow, None).save_png8(dir.join("flow.png"))?;
        Ok(())
    }
}

pub const MATCHES_FILE: &str = "matches.txt";
pub const EDGES_FILE: &str = "edges.edg";
pub const LABELS_FILE: &str = "labels.png";
pub const INTERPOLATED_FILE: &str = "interpolated.flo";

/// Frames as CIELab, the working color space of every stage.
pub fn prepare_frames(img1: &Image, img2: &Image) -> Result<(Image, Image)> {
    if img1.dims() != img2.dims() {
        return Err(Error::DimensionMismatch {
            expected: img1.dims(),
            found: img2.dims(),
        });
    }
    Ok((to_cielab(img1)?, to_cielab(img2)?))
}

fn timed<T>(
    timings: &mut Vec<(&'static str, Duration)>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push((stage, start.elapsed()));
    Ok(out)
}

/// Dense matching both ways and filtering down to sparse matches.
pub fn compute_matches(config: &PipelineConfig, lab1: &Image, lab2: &Image) -> Result<(FlowField, MatchSet)> {
    let mut timings = Vec::new();
    compute_matches_timed(config, lab1, lab2, &mut timings)
}

fn compute_matches_timed(
    config: &PipelineConfig,
    lab1: &Image,
    lab2: &Image,
    timings: &mut Vec<(&'static str, Duration)>,
) -> Result<(FlowField, MatchSet)> {
    let alt = config.matching.alternate();
    let (fwd, (bwd_main, bwd_alt)) = timed(timings, "match", || {
        let (fwd, bwd) = rayon::join(
            || match_full(lab1, lab2, &config.matching),
            || {
                rayon::join(
                    || match_full(lab2, lab1, &config.matching),
                    || match_full(lab2, lab1, &alt),
                )
            },
        );
        Ok((fwd?, (bwd.0?, bwd.1?)))
    })?;
    let matches = timed(timings, "filter", || {
        let (checked, errors) = combine_checks(&fwd, &bwd_main, &bwd_alt, config.filter.epsilon)?;
        let kept = region_filter(&checked, &config.filter);
        Ok(sparsify(&kept, &errors, &config.filter))
    })?;
    Ok((fwd, matches))
}

/// Runs every stage on an RGB or grayscale pair. Without `edges`, the
/// boundary map is detected from frame 1.
pub fn run_pipeline(
    config: &PipelineConfig,
    img1: &Image,
    img2: &Image,
    edges: Option<EdgeMap>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let (lab1, lab2) = prepare_frames(img1, img2).map_err(|e| e.in_stage("input"))?;
    let mut timings = Vec::new();
    let (fwd, matches) = compute_matches_timed(config, &lab1, &lab2, &mut timings)?;
    let mut out = finish(config, &lab1, &lab2, matches, edges, timings)?;
    out.forward = Some(fwd);
    Ok(out)
}

/// Resumes after filtering from a saved match set (and optional edges).
pub fn resume_from_matches(
    config: &PipelineConfig,
    img1: &Image,
    img2: &Image,
    matches: MatchSet,
    edges: Option<EdgeMap>,
) -> Result<PipelineOutput> {
    config.validate()?;
    let (lab1, lab2) = prepare_frames(img1, img2).map_err(|e| e.in_stage("input"))?;
    finish(config, &lab1, &lab2, matches, edges, Vec::new())
}

/// Runs only the refinement on a saved interpolated flow.
pub fn resume_from_interpolated(
    config: &PipelineConfig,
    img1: &Image,
    img2: &Image,
    dense: &FlowField,
) -> Result<FlowField> {
    config.validate()?;
    let (lab1, lab2) = prepare_frames(img1, img2).map_err(|e| e.in_stage("input"))?;
    refine(&lab1, &lab2, dense, &config.variational).map_err(|e| e.in_stage("refine"))
}

fn finish(
    config: &PipelineConfig,
    lab1: &Image,
    lab2: &Image,
    matches: MatchSet,
    edges: Option<EdgeMap>,
    mut timings: Vec<(&'static str, Duration)>,
) -> Result<PipelineOutput> {
    let edges = timed(&mut timings, "edges", || match edges {
        Some(e) if e.dims() != lab1.dims() => Err(Error::DimensionMismatch {
            expected: lab1.dims(),
            found: e.dims(),
        }),
        Some(e) => Ok(e),
        None => Ok(detect_edges(lab1)),
    })?;
    let segmentation = timed(&mut timings, "segment", || segment(lab1, config.grid_step))?;
    let interp = config.effective_interp();
    let interpolation = timed(&mut timings, "interpolate", || {
        interpolate(&matches, &segmentation, &edges, &interp)
    })?;
    let flow = timed(&mut timings, "refine", || {
        refine(lab1, lab2, &interpolation.flow, &config.variational)
    })?;
    Ok(PipelineOutput {
        flow,
        forward: None,
        matches,
        edges,
        segmentation,
        interpolation,
        timings,
    })
}
