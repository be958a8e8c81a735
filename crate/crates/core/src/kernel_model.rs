//! Domain types of the synthetic kernel template and the index arithmetic
//! shared by analysis, code generation and the cost model.
//!
//! A kernel instance is a [`TemplateParams`] (what one work unit computes and
//! how it walks the target array) paired with a [`LaunchConfig`] (how the 2D
//! grid of work units is spread over workgroups and workitems).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Where the home coordinate of the target-array access sits for each
/// work unit and loop iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HomeAccessPattern {
    XYReuse,
    XReuseRow,
    XReuseCol,
    YReuseRow,
    YReuseCol,
    NoReuseRowMajor,
    NoReuseColMajor,
}

impl HomeAccessPattern {
    pub const ALL: [HomeAccessPattern; 7] = [
        HomeAccessPattern::XYReuse,
        HomeAccessPattern::XReuseRow,
        HomeAccessPattern::XReuseCol,
        HomeAccessPattern::YReuseRow,
        HomeAccessPattern::YReuseCol,
        HomeAccessPattern::NoReuseRowMajor,
        HomeAccessPattern::NoReuseColMajor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HomeAccessPattern::XYReuse => "xy-reuse",
            HomeAccessPattern::XReuseRow => "x-reuse-row",
            HomeAccessPattern::XReuseCol => "x-reuse-col",
            HomeAccessPattern::YReuseRow => "y-reuse-row",
            HomeAccessPattern::YReuseCol => "y-reuse-col",
            HomeAccessPattern::NoReuseRowMajor => "no-reuse-row-major",
            HomeAccessPattern::NoReuseColMajor => "no-reuse-col-major",
        }
    }

    /// Position in [`HomeAccessPattern::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// The affine `(row, col)` functions of `(wu_x, wu_y, i, j)` for this
    /// pattern with loop trip counts `n` (loop i) and `m` (loop j).
    pub fn home_map(self, n: u32, m: u32) -> HomeMap {
        let (n, m) = (i64::from(n), i64::from(m));
        let z = AffineIndex::ZERO;
        let (row, col) = match self {
            HomeAccessPattern::XYReuse => (AffineIndex { i: 1, ..z }, AffineIndex { j: 1, ..z }),
            HomeAccessPattern::XReuseRow => (AffineIndex { wu_y: 1, ..z }, AffineIndex { j: 1, ..z }),
            HomeAccessPattern::XReuseCol => (AffineIndex { j: 1, ..z }, AffineIndex { wu_y: 1, ..z }),
            HomeAccessPattern::YReuseRow => (AffineIndex { wu_x: 1, ..z }, AffineIndex { j: 1, ..z }),
            HomeAccessPattern::YReuseCol => (AffineIndex { j: 1, ..z }, AffineIndex { wu_x: 1, ..z }),
            HomeAccessPattern::NoReuseRowMajor => (
                AffineIndex { wu_y: n, i: 1, ..z },
                AffineIndex { wu_x: m, j: 1, ..z },
            ),
            HomeAccessPattern::NoReuseColMajor => (
                AffineIndex { wu_y: m, j: 1, ..z },
                AffineIndex { wu_x: n, i: 1, ..z },
            ),
        };
        HomeMap { row, col }
    }

    /// Patterns whose loop i runs over the large N value set.
    pub fn long_i_loop(self) -> bool {
        matches!(
            self,
            HomeAccessPattern::XYReuse | HomeAccessPattern::XReuseRow | HomeAccessPattern::YReuseRow
        )
    }

    /// Patterns whose loop j runs over the large M value set.
    pub fn long_j_loop(self) -> bool {
        matches!(
            self,
            HomeAccessPattern::XYReuse | HomeAccessPattern::XReuseCol | HomeAccessPattern::YReuseCol
        )
    }
}

impl fmt::Display for HomeAccessPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HomeAccessPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HomeAccessPattern::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown home access pattern `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StencilShape {
    Rectangular,
    Diamond,
    Star,
}

impl StencilShape {
    pub const ALL: [StencilShape; 3] = [StencilShape::Rectangular, StencilShape::Diamond, StencilShape::Star];

    pub fn name(self) -> &'static str {
        match self {
            StencilShape::Rectangular => "rect",
            StencilShape::Diamond => "diamond",
            StencilShape::Star => "star",
        }
    }
}

impl fmt::Display for StencilShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StencilShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StencilShape::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown stencil shape `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StencilPattern {
    pub shape: StencilShape,
    pub radius: u32,
}

impl StencilPattern {
    pub fn new(shape: StencilShape, radius: u32) -> Self {
        StencilPattern { shape, radius }
    }

    pub fn offsets(&self) -> Vec<(i64, i64)> {
        stencil_offsets(*self)
    }
}

/// Offsets `(d_row, d_col)` read around the home coordinate, in row-major
/// order. Radius 0 yields only `(0, 0)` for every shape.
pub fn stencil_offsets(stencil: StencilPattern) -> Vec<(i64, i64)> {
    let r = i64::from(stencil.radius);
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            let keep = match stencil.shape {
                StencilShape::Rectangular => true,
                StencilShape::Diamond => dr.abs() + dc.abs() <= r,
                StencilShape::Star => dr == 0 || dc == 0,
            };
            if keep {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// The 13 template knobs plus output-array geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TemplateParams {
    pub in_h: u32,
    pub in_w: u32,
    pub out_h: u32,
    pub out_w: u32,
    pub pattern: HomeAccessPattern,
    pub n: u32,
    pub m: u32,
    pub stencil: StencilPattern,
    pub num_comp_ilb: u32,
    pub num_comp_ep: u32,
    pub num_coal_ilb: u32,
    pub num_coal_ep: u32,
    pub num_uncoal_ilb: u32,
    pub num_uncoal_ep: u32,
}

impl TemplateParams {
    pub fn home_map(&self) -> HomeMap {
        self.pattern.home_map(self.n, self.m)
    }

    pub fn num_target_accesses(&self) -> usize {
        stencil_offsets(self.stencil).len()
    }

    pub fn ctx_accesses(&self) -> u32 {
        self.num_coal_ilb + self.num_coal_ep + self.num_uncoal_ilb + self.num_uncoal_ep
    }
}

impl Default for TemplateParams {
    fn default() -> Self {
        TemplateParams {
            in_h: 2048,
            in_w: 2048,
            out_h: 2048,
            out_w: 2048,
            pattern: HomeAccessPattern::XYReuse,
            n: 8,
            m: 8,
            stencil: StencilPattern::new(StencilShape::Rectangular, 0),
            num_comp_ilb: 0,
            num_comp_ep: 0,
            num_coal_ilb: 0,
            num_coal_ep: 0,
            num_uncoal_ilb: 0,
            num_uncoal_ep: 0,
        }
    }
}

/// Grid (total workitems) and workgroup geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaunchConfig {
    pub grid_x: u32,
    pub grid_y: u32,
    pub wg_x: u32,
    pub wg_y: u32,
}

impl LaunchConfig {
    pub fn new(grid_x: u32, grid_y: u32, wg_x: u32, wg_y: u32) -> Self {
        LaunchConfig { grid_x, grid_y, wg_x, wg_y }
    }

    pub fn grid_size(&self) -> u64 {
        u64::from(self.grid_x) * u64::from(self.grid_y)
    }

    pub fn wg_size(&self) -> u64 {
        u64::from(self.wg_x) * u64::from(self.wg_y)
    }

    pub fn num_groups_x(&self) -> u32 {
        self.grid_x / self.wg_x
    }

    pub fn num_groups_y(&self) -> u32 {
        self.grid_y / self.wg_y
    }
}

/// Bounds on launch geometry applied by validation and the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaunchLimits {
    pub min_grid_size: u64,
    pub max_wg_size: u64,
}

impl Default for LaunchLimits {
    fn default() -> Self {
        LaunchLimits { min_grid_size: 512, max_wg_size: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelInstance {
    pub params: TemplateParams,
    pub launch: LaunchConfig,
}

impl KernelInstance {
    pub fn new(params: TemplateParams, launch: LaunchConfig) -> Self {
        KernelInstance { params, launch }
    }

    /// Work units each workitem processes along x.
    pub fn num_wus_x(&self) -> u32 {
        self.params.out_w / self.launch.grid_x
    }

    pub fn num_wus_y(&self) -> u32 {
        self.params.out_h / self.launch.grid_y
    }

    pub fn wus_per_workitem(&self) -> u64 {
        u64::from(self.num_wus_x()) * u64::from(self.num_wus_y())
    }

    /// Work unit processed by `wi` of group `wg` at work-unit iteration `iter`.
    pub fn work_unit(&self, wg: GridPos, wi: GridPos, iter: GridPos) -> GridPos {
        work_unit_for(&self.launch, &self.params, wg, wi, iter)
    }
}

/// An element of the target array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coord {
    pub row: i64,
    pub col: i64,
}

impl Coord {
    pub fn new(row: i64, col: i64) -> Self {
        Coord { row, col }
    }
}

/// An `(x, y)` position in a launch space: workgroup id, local workitem id,
/// work-unit iteration or work-unit coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GridPos {
    pub x: i64,
    pub y: i64,
}

impl GridPos {
    pub fn new(x: i64, y: i64) -> Self {
        GridPos { x, y }
    }
}

/// `wu_x·wu_x + wu_y·wu_y + i·i + j·j` with integer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AffineIndex {
    pub wu_x: i64,
    pub wu_y: i64,
    pub i: i64,
    pub j: i64,
}

impl AffineIndex {
    pub const ZERO: AffineIndex = AffineIndex { wu_x: 0, wu_y: 0, i: 0, j: 0 };

    pub fn eval(&self, wu: GridPos, i: i64, j: i64) -> i64 {
        self.wu_x * wu.x + self.wu_y * wu.y + self.i * i + self.j * j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HomeMap {
    pub row: AffineIndex,
    pub col: AffineIndex,
}

impl HomeMap {
    pub fn eval(&self, wu: GridPos, i: i64, j: i64) -> Coord {
        Coord::new(self.row.eval(wu, i, j), self.col.eval(wu, i, j))
    }
}

/// Home coordinate `(idx_o, idx_i)` of work unit `wu` at loop indices `(i, j)`.
pub fn home_coordinate(pattern: HomeAccessPattern, wu: GridPos, i: i64, j: i64, params: &TemplateParams) -> Coord {
    pattern.home_map(params.n, params.m).eval(wu, i, j)
}

/// Blocked over workgroups, cyclic over the workitems of a group:
/// `wu = wg·(wg_dim·NUM_WUS) + iter·wg_dim + wi` per dimension.
pub fn work_unit_for(launch: &LaunchConfig, params: &TemplateParams, wg: GridPos, wi: GridPos, iter: GridPos) -> GridPos {
    let wus_x = i64::from(params.out_w / launch.grid_x);
    let wus_y = i64::from(params.out_h / launch.grid_y);
    let (wgw, wgh) = (i64::from(launch.wg_x), i64::from(launch.wg_y));
    GridPos::new(
        wg.x * (wgw * wus_x) + iter.x * wgw + wi.x,
        wg.y * (wgh * wus_y) + iter.y * wgh + wi.y,
    )
}

/// A broken invariant, worded for people.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn validate_instance(instance: &KernelInstance) -> std::result::Result<(), Vec<Violation>> {
    validate_instance_with(instance, &LaunchLimits::default())
}

pub fn validate_instance_with(instance: &KernelInstance, limits: &LaunchLimits) -> std::result::Result<(), Vec<Violation>> {
    let mut v = Vec::new();
    let p = &instance.params;
    let l = &instance.launch;
    let mut bad = |msg: String| v.push(Violation(msg));

    for (name, val) in [("in_h", p.in_h), ("in_w", p.in_w), ("out_h", p.out_h), ("out_w", p.out_w), ("n", p.n), ("m", p.m)] {
        if val == 0 {
            bad(format!("{name} must be at least 1"));
        }
    }
    for (name, val) in [("grid_x", l.grid_x), ("grid_y", l.grid_y), ("wg_x", l.wg_x), ("wg_y", l.wg_y)] {
        if !val.is_power_of_two() {
            bad(format!("{name} {val} is not a power of two"));
        }
    }
    if l.wg_x > l.grid_x {
        bad(format!("wg_x {} > grid_x {}", l.wg_x, l.grid_x));
    }
    if l.wg_y > l.grid_y {
        bad(format!("wg_y {} > grid_y {}", l.wg_y, l.grid_y));
    }
    if l.wg_size() > limits.max_wg_size {
        bad(format!("workgroup size {} > {}", l.wg_size(), limits.max_wg_size));
    }
    if l.grid_size() < limits.min_grid_size {
        bad(format!("grid size {} < {}", l.grid_size(), limits.min_grid_size));
    }
    if l.grid_x == 0 || !p.out_w.is_multiple_of(l.grid_x) {
        bad(format!("grid_x {} does not divide out_w {}", l.grid_x, p.out_w));
    }
    if l.grid_y == 0 || !p.out_h.is_multiple_of(l.grid_y) {
        bad(format!("grid_y {} does not divide out_h {}", l.grid_y, p.out_h));
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Like [`validate_instance`] but folds violations into an [`Error`].
pub fn check_instance(instance: &KernelInstance) -> Result<()> {
    validate_instance(instance).map_err(Error::InvalidInstance)
}
