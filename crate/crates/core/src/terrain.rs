//! Procedural terrain: four parameterized families sampled as 1-D height
//! profiles, the 10x10 training curriculum, and the five-section evaluation
//! strip.

use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

pub const SECTION_LENGTH: f64 = 8.0;
pub const RESOLUTION: f64 = 0.02;
pub const GRID_ROWS: usize = 10;
pub const GRID_COLS: usize = 10;
pub const EVAL_SECTIONS: usize = 5;
pub const SPAWN_PAD: f64 = 2.0;

const STAIR_TREAD: f64 = 0.31;
const STAIR_BORDER: f64 = 0.5;
const STEPPED_MARGIN: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerrainKind {
    Flat,
    Bumpy,
    StairPyramid,
    StairPit,
    Stepped,
}

/// Terrain families as seen by experts and the CLI. `Stairs` covers both
/// pyramids and pits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerrainFamily {
    Flat,
    Bumpy,
    Stairs,
    Stepped,
}

impl TerrainFamily {
    pub const EXPERTS: [TerrainFamily; 3] =
        [TerrainFamily::Bumpy, TerrainFamily::Stairs, TerrainFamily::Stepped];

    pub fn name(self) -> &'static str {
        match self {
            TerrainFamily::Flat => "flat",
            TerrainFamily::Bumpy => "bumpy",
            TerrainFamily::Stairs => "stairs",
            TerrainFamily::Stepped => "stepped",
        }
    }

    /// Kind used for section `index` of a strip or column `index` of a grid.
    pub fn kind_for(self, index: usize) -> TerrainKind {
        match self {
            TerrainFamily::Flat => TerrainKind::Flat,
            TerrainFamily::Bumpy => TerrainKind::Bumpy,
            TerrainFamily::Stairs if index.is_multiple_of(2) => TerrainKind::StairPyramid,
            TerrainFamily::Stairs => TerrainKind::StairPit,
            TerrainFamily::Stepped => TerrainKind::Stepped,
        }
    }
}

impl fmt::Display for TerrainFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(TerrainFamily::Flat),
            "bumpy" => Ok(TerrainFamily::Bumpy),
            "stairs" => Ok(TerrainFamily::Stairs),
            "stepped" => Ok(TerrainFamily::Stepped),
            other => Err(Error::Config(format!(
                "unknown terrain `{other}` (expected flat, bumpy, stairs or stepped)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainSpec {
    pub kind: TerrainKind,
    pub difficulty: f64,
    pub seed: u64,
    pub length: f64,
    pub resolution: f64,
}

impl TerrainSpec {
    pub fn new(kind: TerrainKind, difficulty: f64, seed: u64) -> Self {
        Self {
            kind,
            difficulty,
            seed,
            length: SECTION_LENGTH,
            resolution: RESOLUTION,
        }
    }

    pub fn sample_count(&self) -> Result<usize> {
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::Config(format!(
                "terrain difficulty {} outside [0, 1]",
                self.difficulty
            )));
        }
        if !(self.resolution > 0.0 && self.length > 0.0) {
            return Err(Error::Config("terrain length and resolution must be positive".into()));
        }
        let n = (self.length / self.resolution).round();
        if (n * self.resolution - self.length).abs() > 1e-9 * self.length.max(1.0) {
            return Err(Error::Config(format!(
                "length {} is not a whole number of {} m samples",
                self.length, self.resolution
            )));
        }
        Ok(n as usize)
    }
}

/// Bumpy amplitude: heights are drawn from `[-A, A]`.
pub fn bump_amplitude(difficulty: f64) -> f64 {
    0.12 * difficulty
}

pub fn stair_step_height(difficulty: f64) -> f64 {
    0.05 + 0.15 * difficulty
}

pub fn stair_platform_width(difficulty: f64) -> f64 {
    (2.4 - 1.6 * difficulty).max(0.8)
}

pub fn stepped_height_range(difficulty: f64) -> (f64, f64) {
    (0.02, 0.02 + 0.13 * difficulty)
}

/// Uniformly sampled height profile; sample `k` sits at `origin_x + k * resolution`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    heights: Vec<f64>,
    origin_x: f64,
    resolution: f64,
}

impl HeightField {
    pub fn new(heights: Vec<f64>, origin_x: f64, resolution: f64) -> Result<Self> {
        if heights.is_empty() {
            return Err(Error::Config("height field needs at least one sample".into()));
        }
        if !(resolution > 0.0) || !origin_x.is_finite() {
            return Err(Error::Config("height field resolution must be positive".into()));
        }
        if let Some(i) = heights.iter().position(|h| !h.is_finite()) {
            return Err(Error::Numerical(format!("height sample {i} is not finite")));
        }
        Ok(Self {
            heights,
            origin_x,
            resolution,
        })
    }

    pub fn flat(length: f64, resolution: f64) -> Self {
        let n = (length / resolution).round().max(1.0) as usize;
        Self {
            heights: vec![0.0; n],
            origin_x: 0.0,
            resolution,
        }
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn origin_x(&self) -> f64 {
        self.origin_x
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    /// Covered extent: `len * resolution`.
    pub fn length(&self) -> f64 {
        self.heights.len() as f64 * self.resolution
    }

    pub fn end_x(&self) -> f64 {
        self.origin_x + self.length()
    }

    /// Nearest-sample lookup, clamped to the edge samples outside the field.
    pub fn height_at(&self, x: f64) -> f64 {
        let k = ((x - self.origin_x) / self.resolution).round();
        let k = if k.is_nan() { 0.0 } else { k.clamp(0.0, (self.heights.len() - 1) as f64) };
        self.heights[k as usize]
    }

    /// Piecewise-linear surface through the samples: `(height, slope)`.
    /// Used for contact, where a continuous surface keeps normals defined on
    /// stair risers.
    pub fn surface_at(&self, x: f64) -> (f64, f64) {
        let n = self.heights.len();
        let u = (x - self.origin_x) / self.resolution;
        if n == 1 || !(u > 0.0) {
            return (self.heights[0], 0.0);
        }
        if u >= (n - 1) as f64 {
            return (self.heights[n - 1], 0.0);
        }
        let k = u.floor() as usize;
        let t = u - k as f64;
        let (h0, h1) = (self.heights[k], self.heights[k + 1]);
        (h0 + t * (h1 - h0), (h1 - h0) / self.resolution)
    }

    /// Append `other`'s samples after this field's last one.
    pub fn extend(&mut self, other: &HeightField) -> Result<()> {
        if (other.resolution - self.resolution).abs() > 1e-12 {
            return Err(Error::Config("cannot join height fields of different resolution".into()));
        }
        self.heights.extend_from_slice(&other.heights);
        Ok(())
    }

    /// Plain-text export: a `heightfield v1 <resolution> <origin_x> <n>` header
    /// followed by one height per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(16 * self.heights.len() + 64);
        let _ = writeln!(
            out,
            "heightfield v1 {} {} {}",
            self.resolution,
            self.origin_x,
            self.heights.len()
        );
        for h in &self.heights {
            let _ = writeln!(out, "{h}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty height field file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "heightfield" || parts[1] != "v1" {
            return Err(Error::Config(format!("bad height field header `{header}`")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number `{s}` in height field")))
        };
        let resolution = parse(parts[2])?;
        let origin_x = parse(parts[3])?;
        let n: usize = parts[4]
            .parse()
            .map_err(|_| Error::Config(format!("bad sample count `{}`", parts[4])))?;
        let heights = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| parse(l.trim()))
            .collect::<Result<Vec<f64>>>()?;
        if heights.len() != n {
            return Err(Error::Config(format!(
                "height field header declares {n} samples, found {}",
                heights.len()
            )));
        }
        HeightField::new(heights, origin_x, resolution)
    }
}

/// Stair profile as a function of distance from the section centre.
fn stair_profile(spec: &TerrainSpec, n: usize) -> Vec<f64> {
    let step = stair_step_height(spec.difficulty);
    let half_platform = 0.5 * stair_platform_width(spec.difficulty);
    let half = 0.5 * spec.length;
    let steps = ((half - STAIR_BORDER - half_platform) / STAIR_TREAD + 1e-9).floor().max(0.0);
    let sign = if spec.kind == TerrainKind::StairPit { -1.0 } else { 1.0 };
    let centre = 0.5 * n as f64;
    (0..n)
        .map(|k| {
            // whole-sample offsets keep mirrored samples bit-identical
            let u = (k as f64 - centre).abs() * spec.resolution;
            let descended = if u <= half_platform {
                0.0
            } else {
                ((u - half_platform) / STAIR_TREAD).ceil()
            };
            sign * (steps - descended).max(0.0) * step
        })
        .collect()
}

pub fn generate_terrain(spec: &TerrainSpec) -> Result<HeightField> {
    let n = spec.sample_count()?;
    let mut rng = stream_rng(spec.seed, 0);
    let heights = match spec.kind {
        TerrainKind::Flat => vec![0.0; n],
        TerrainKind::Bumpy => {
            let amplitude = bump_amplitude(spec.difficulty);
            let raw: Vec<f64> = (0..n)
                .map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0))
                .collect();
            (0..n)
                .map(|i| {
                    let lo = i.saturating_sub(1);
                    let hi = (i + 1).min(n - 1);
                    raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
                })
                .collect()
        }
        TerrainKind::StairPyramid | TerrainKind::StairPit => stair_profile(spec, n),
        TerrainKind::Stepped => {
            let (h_min, h_max) = stepped_height_range(spec.difficulty);
            let mut heights = vec![0.0; n];
            let mut x = STEPPED_MARGIN + rng.random_range(0.0..0.6);
            loop {
                let block = rng.random_range(0.4..1.0);
                let height = if h_max > h_min { rng.random_range(h_min..h_max) } else { h_min };
                if x + block > spec.length - STEPPED_MARGIN {
                    break;
                }
                let first = (x / spec.resolution).round() as usize;
                let last = ((x + block) / spec.resolution).round() as usize;
                for h in &mut heights[first..last.min(n)] {
                    *h = height;
                }
                // gaps average 1.05 m against 0.7 m blocks: ~40% coverage
                x += block + rng.random_range(0.6..1.5);
            }
            heights
        }
    };
    HeightField::new(heights, 0.0, spec.resolution)
}

/// The 10x10 training grid. Row `r` has difficulty `r / 9`; each row's ten
/// cells are laid end to end so that a robot leaving its cell walks onto the
/// neighbouring cell of the same difficulty.
#[derive(Debug, Clone)]
pub struct CurriculumGrid {
    cells: Vec<TerrainSpec>,
    rows: Vec<Arc<HeightField>>,
}

impl CurriculumGrid {
    /// Grid for one terrain family; stair grids alternate pyramid and pit columns.
    pub fn new(family: TerrainFamily, seed: u64) -> Result<Self> {
        Self::build(seed, |c| family.kind_for(c))
    }

    /// Grid in which every row interleaves bumpy, stair and stepped cells.
    pub fn mixed(seed: u64) -> Result<Self> {
        Self::build(seed, |c| match c % 3 {
            0 => TerrainKind::Bumpy,
            1 => TerrainFamily::Stairs.kind_for(c / 3),
            _ => TerrainKind::Stepped,
        })
    }

    fn build(seed: u64, kind_of_column: impl Fn(usize) -> TerrainKind) -> Result<Self> {
        let mut cells = Vec::with_capacity(GRID_ROWS * GRID_COLS);
        for r in 0..GRID_ROWS {
            for c in 0..GRID_COLS {
                cells.push(TerrainSpec::new(
                    kind_of_column(c),
                    r as f64 / (GRID_ROWS - 1) as f64,
                    derive_seed(seed, (r * GRID_COLS + c) as u64),
                ));
            }
        }
        let mut rows = Vec::with_capacity(GRID_ROWS);
        for r in 0..GRID_ROWS {
            let mut field = generate_terrain(&cells[r * GRID_COLS])?;
            for c in 1..GRID_COLS {
                field.extend(&generate_terrain(&cells[r * GRID_COLS + c])?)?;
            }
            rows.push(Arc::new(field));
        }
        Ok(Self { cells, rows })
    }

    pub fn cell(&self, row: usize, col: usize) -> &TerrainSpec {
        &self.cells[row * GRID_COLS + col]
    }

    pub fn cells(&self) -> &[TerrainSpec] {
        &self.cells
    }

    pub fn row_field(&self, row: usize) -> &Arc<HeightField> {
        &self.rows[row]
    }

    /// Centre of cell `col` in its row's coordinates.
    pub fn spawn_x(&self, col: usize) -> f64 {
        (col as f64 + 0.5) * SECTION_LENGTH
    }
}

/// Evaluation strip: a flat 2 m spawn pad followed by five sections of the
/// family at one difficulty, each with its own seed.
pub fn eval_strip(family: TerrainFamily, difficulty: f64, seed: u64) -> Result<HeightField> {
    let pad = TerrainSpec {
        kind: TerrainKind::Flat,
        difficulty: 0.0,
        seed,
        length: SPAWN_PAD,
        resolution: RESOLUTION,
    };
    let mut field = generate_terrain(&pad)?;
    for s in 0..EVAL_SECTIONS {
        let spec = TerrainSpec::new(family.kind_for(s), difficulty, derive_seed(seed, s as u64));
        field.extend(&generate_terrain(&spec)?)?;
    }
    Ok(field)
}
