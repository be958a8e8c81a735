//! Feature extraction for a kernel instance.
//!
//! Reuse degree, non-coalescing degree and the cached footprint are computed
//! in closed form from the affine home map.

use std::fmt;

use crate::cost::{self, Variant};
use crate::device::DeviceDescriptor;
use crate::error::Result;
use crate::kernel_model::{check_instance, AffineIndex, Coord, GridPos, KernelInstance, LaunchConfig};

/// How the target array sits in memory.
///
/// The array is padded by an apron of the stencil reach on every side, so
/// the logical element `(-r, -r)` is the first stored element, and each row
/// is padded to a whole number of transactions. The stored width also covers
/// every home column the instance can reach, so stencil reads never leave
/// the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetLayout {
    pub apron_rows: i64,
    pub apron_cols: i64,
    pub pitch_elems: i64,
    pub element_bytes: i64,
}

impl TargetLayout {
    pub fn for_instance(instance: &KernelInstance, dev: &DeviceDescriptor) -> Self {
        let p = &instance.params;
        let offsets = p.stencil.offsets();
        let apron_rows = offsets.iter().map(|o| o.0.abs()).max().unwrap_or(0);
        let apron_cols = offsets.iter().map(|o| o.1.abs()).max().unwrap_or(0);
        let map = p.home_map();
        let far = GridPos::new(i64::from(p.out_w) - 1, i64::from(p.out_h) - 1);
        let max_home_col = map.col.eval(far, i64::from(p.n) - 1, i64::from(p.m) - 1);
        let cols = i64::from(p.in_w).max(max_home_col + 1) + 2 * apron_cols;
        let seg = dev.elements_per_transaction() as i64;
        TargetLayout {
            apron_rows,
            apron_cols,
            pitch_elems: round_up(cols, seg),
            element_bytes: dev.element_bytes as i64,
        }
    }

    /// Column index within a stored row.
    pub fn physical_col(&self, col: i64) -> i64 {
        col + self.apron_cols
    }

    pub fn element_index(&self, c: Coord) -> i64 {
        (c.row + self.apron_rows) * self.pitch_elems + self.physical_col(c.col)
    }

    pub fn address(&self, c: Coord) -> i64 {
        self.element_index(c) * self.element_bytes
    }
}

pub(crate) fn round_up(v: i64, to: i64) -> i64 {
    (v + to - 1).div_euclid(to) * to
}

pub(crate) fn align_down(v: i64, to: i64) -> i64 {
    v.div_euclid(to) * to
}

/// Distinct transaction-aligned segments touched by one warp-wide access.
pub fn warp_transactions(addresses: &[i64], dev: &DeviceDescriptor) -> u64 {
    let tx = dev.transaction_bytes as i64;
    let mut segs: Vec<i64> = addresses.iter().map(|a| a.div_euclid(tx)).collect();
    segs.sort_unstable();
    segs.dedup();
    segs.len() as u64
}

/// Lanes of one warp as a rectangle of local workitem ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WarpRect {
    pub x0: i64,
    pub y0: i64,
    pub width: i64,
    pub height: i64,
}

impl WarpRect {
    pub fn lanes(&self) -> i64 {
        self.width * self.height
    }
}

/// Warps of a workgroup, formed by linearizing workitems x-fastest. With
/// power-of-two workgroup sides every warp is a rectangle.
pub fn warps_of(launch: &LaunchConfig, warp_size: u64) -> Vec<WarpRect> {
    let (wx, wy) = (i64::from(launch.wg_x), i64::from(launch.wg_y));
    let ws = warp_size as i64;
    let total = wx * wy;
    let mut out = Vec::new();
    let mut start = 0;
    while start < total {
        let lanes = ws.min(total - start);
        let y0 = start / wx;
        let x0 = start % wx;
        let rect = if lanes <= wx {
            WarpRect { x0, y0, width: lanes, height: 1 }
        } else {
            WarpRect { x0: 0, y0, width: wx, height: lanes / wx }
        };
        out.push(rect);
        start += lanes;
    }
    out
}

/// Smallest region of the target array cached per workgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub row_span: u64,
    pub col_span: u64,
    /// Stored width in elements: start aligned down to a segment boundary,
    /// width rounded up to whole segments, maximized over every block
    /// alignment the launch produces.
    pub padded_col_span: u64,
    pub bytes: u64,
}

/// The 18 model inputs, in fixed order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub reuse_degree: f64,
    pub lmem_bytes: f64,
    pub noncoalescing_degree: f64,
    pub num_target_accesses: f64,
    pub offset_min_row: f64,
    pub offset_max_row: f64,
    pub offset_min_col: f64,
    pub offset_max_col: f64,
    pub comp_ilb: f64,
    pub comp_ep: f64,
    pub ctx_coal_ilb: f64,
    pub ctx_uncoal_ilb: f64,
    pub ctx_coal_ep: f64,
    pub ctx_uncoal_ep: f64,
    pub regs_per_thread: f64,
    pub grid_size: f64,
    pub wg_size: f64,
    pub wus_per_workitem: f64,
}

pub const NUM_FEATURES: usize = 18;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "reuse_degree",
    "lmem_bytes",
    "noncoalescing_degree",
    "num_target_accesses",
    "offset_min_row",
    "offset_max_row",
    "offset_min_col",
    "offset_max_col",
    "comp_ilb",
    "comp_ep",
    "ctx_coal_ilb",
    "ctx_uncoal_ilb",
    "ctx_coal_ep",
    "ctx_uncoal_ep",
    "regs_per_thread",
    "grid_size",
    "wg_size",
    "wus_per_workitem",
];

impl FeatureVector {
    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [
            self.reuse_degree,
            self.lmem_bytes,
            self.noncoalescing_degree,
            self.num_target_accesses,
            self.offset_min_row,
            self.offset_max_row,
            self.offset_min_col,
            self.offset_max_col,
            self.comp_ilb,
            self.comp_ep,
            self.ctx_coal_ilb,
            self.ctx_uncoal_ilb,
            self.ctx_coal_ep,
            self.ctx_uncoal_ep,
            self.regs_per_thread,
            self.grid_size,
            self.wg_size,
            self.wus_per_workitem,
        ]
    }

    pub fn from_array(a: [f64; NUM_FEATURES]) -> Self {
        FeatureVector {
            reuse_degree: a[0],
            lmem_bytes: a[1],
            noncoalescing_degree: a[2],
            num_target_accesses: a[3],
            offset_min_row: a[4],
            offset_max_row: a[5],
            offset_min_col: a[6],
            offset_max_col: a[7],
            comp_ilb: a[8],
            comp_ep: a[9],
            ctx_coal_ilb: a[10],
            ctx_uncoal_ilb: a[11],
            ctx_coal_ep: a[12],
            ctx_uncoal_ep: a[13],
            regs_per_thread: a[14],
            grid_size: a[15],
            wg_size: a[16],
            wus_per_workitem: a[17],
        }
    }

    /// Checks the invariants every extracted vector satisfies.
    pub fn check(&self, warp_size: u64) -> std::result::Result<(), String> {
        let a = self.to_array();
        if let Some(i) = a.iter().position(|v| !v.is_finite()) {
            return Err(format!("{} is not finite", FEATURE_NAMES[i]));
        }
        if self.reuse_degree < 1.0 {
            return Err(format!("reuse_degree {} < 1", self.reuse_degree));
        }
        if !(1.0..=warp_size as f64).contains(&self.noncoalescing_degree) {
            return Err(format!("noncoalescing_degree {} outside [1, {warp_size}]", self.noncoalescing_degree));
        }
        if self.num_target_accesses < 1.0 {
            return Err("num_target_accesses < 1".into());
        }
        if self.offset_min_row > self.offset_max_row || self.offset_min_col > self.offset_max_col {
            return Err("offset bounds inverted".into());
        }
        Ok(())
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, v)) in FEATURE_NAMES.iter().zip(self.to_array()).enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{name}={v}")?;
        }
        Ok(())
    }
}

/// Average number of workitems of a workgroup sharing each home element.
///
/// The home map is injective in the work-unit coordinates it depends on, so
/// every workitem along an unused dimension shares the same elements.
pub fn reuse_degree(instance: &KernelInstance) -> f64 {
    let map = instance.params.home_map();
    let uses_x = map.row.wu_x != 0 || map.col.wu_x != 0;
    let uses_y = map.row.wu_y != 0 || map.col.wu_y != 0;
    let mut shared = 1u64;
    if !uses_x {
        shared *= u64::from(instance.launch.wg_x);
    }
    if !uses_y {
        shared *= u64::from(instance.launch.wg_y);
    }
    shared as f64
}

/// Distinct values of `a·x + b·y` over `x < w`, `y < h`.
fn distinct_values(a: i64, b: i64, w: i64, h: i64) -> i64 {
    match (a, b) {
        (0, 0) => 1,
        (0, _) => h,
        (_, 0) => w,
        _ => {
            let mut v: Vec<i64> = (0..w).flat_map(|x| (0..h).map(move |y| a * x + b * y)).collect();
            v.sort_unstable();
            v.dedup();
            v.len() as i64
        }
    }
}

/// Segments spanned by `count` elements starting at `start` with
/// `stride` elements between them, within one stored row.
fn progression_segments(start: i64, stride: i64, count: i64, elem_bytes: i64, tx: i64) -> i64 {
    if count <= 1 || stride == 0 {
        return 1;
    }
    if stride * elem_bytes >= tx {
        return count;
    }
    let first = (start * elem_bytes).div_euclid(tx);
    let last = ((start + (count - 1) * stride) * elem_bytes).div_euclid(tx);
    last - first + 1
}

/// Average transactions per warp for the target access at stencil offset
/// `(d_row, d_col)`, over every warp of workgroup 0 at iteration 0 and every
/// `(i, j)`.
pub fn access_transactions(instance: &KernelInstance, dev: &DeviceDescriptor, layout: &TargetLayout, d_col: i64) -> f64 {
    let p = &instance.params;
    let map = p.home_map();
    let (row, col) = (map.row, map.col);
    let tx = dev.transaction_bytes as i64;
    let eb = layout.element_bytes;
    let warps = warps_of(&instance.launch, dev.warp_size);

    let depends = |a: &AffineIndex| (a.wu_x != 0, a.wu_y != 0);
    let (rx, ry) = depends(&row);
    let (cx, cy) = depends(&col);
    // Every home pattern drives row and column from different work-unit
    // coordinates, which the per-warp lattice count below relies on.
    assert!(!((rx && cx) || (ry && cy)), "row and column share a work-unit coordinate");

    let n = i64::from(p.n);
    let m = i64::from(p.m);
    let i_vals: Vec<i64> = if col.i != 0 { (0..n).collect() } else { vec![0] };
    let j_vals: Vec<i64> = if col.j != 0 { (0..m).collect() } else { vec![0] };
    let samples = (i_vals.len() * j_vals.len()) as f64;

    let mut total = 0.0;
    for w in &warps {
        let rows = distinct_values(row.wu_x, row.wu_y, w.width, w.height);
        let (stride, count) = match (cx, cy) {
            (true, false) => (col.wu_x, w.width),
            (false, true) => (col.wu_y, w.height),
            _ => (0, 1),
        };
        let mut per_warp = 0i64;
        for &i in &i_vals {
            for &j in &j_vals {
                let start = layout.physical_col(col.eval(GridPos::new(w.x0, w.y0), i, j) + d_col);
                per_warp += progression_segments(start, stride, count, eb, tx);
            }
        }
        total += (rows * per_warp) as f64 / samples;
    }
    total / warps.len() as f64
}

/// Average transactions per warp induced by the home access in the
/// unoptimized kernel.
pub fn coalescing_degree(instance: &KernelInstance, dev: &DeviceDescriptor) -> f64 {
    let layout = TargetLayout::for_instance(instance, dev);
    access_transactions(instance, dev, &layout, 0)
}

/// Sum over all stencil reads of their per-warp transaction averages.
pub fn stencil_transactions(instance: &KernelInstance, dev: &DeviceDescriptor) -> f64 {
    let layout = TargetLayout::for_instance(instance, dev);
    let offsets = instance.params.stencil.offsets();
    let mut by_col: Vec<(i64, usize)> = Vec::new();
    for (_, dc) in offsets {
        match by_col.iter_mut().find(|(c, _)| *c == dc) {
            Some(e) => e.1 += 1,
            None => by_col.push((dc, 1)),
        }
    }
    by_col
        .into_iter()
        .map(|(dc, k)| k as f64 * access_transactions(instance, dev, &layout, dc))
        .sum()
}

fn affine_range(a: &AffineIndex, wu0: GridPos, wg: (i64, i64), n: i64, m: i64) -> (i64, i64) {
    let lo = a.eval(wu0, 0, 0);
    let hi = a.eval(GridPos::new(wu0.x + wg.0 - 1, wu0.y + wg.1 - 1), n - 1, m - 1);
    (lo, hi)
}

pub fn footprint(instance: &KernelInstance, dev: &DeviceDescriptor) -> Footprint {
    let p = &instance.params;
    let l = &instance.launch;
    let map = p.home_map();
    let layout = TargetLayout::for_instance(instance, dev);
    let offsets = p.stencil.offsets();
    let min_dr = offsets.iter().map(|o| o.0).min().unwrap_or(0);
    let max_dr = offsets.iter().map(|o| o.0).max().unwrap_or(0);
    let min_dc = offsets.iter().map(|o| o.1).min().unwrap_or(0);
    let max_dc = offsets.iter().map(|o| o.1).max().unwrap_or(0);
    let wg = (i64::from(l.wg_x), i64::from(l.wg_y));
    let (n, m) = (i64::from(p.n), i64::from(p.m));
    let origin = GridPos::new(0, 0);

    let (r_lo, r_hi) = affine_range(&map.row, origin, wg, n, m);
    let (c_lo, c_hi) = affine_range(&map.col, origin, wg, n, m);
    let row_span = (r_hi - r_lo + 1 + max_dr - min_dr) as u64;
    let col_span = c_hi - c_lo + 1 + max_dc - min_dc;

    // The region of the workgroup block at (bx, by) starts at
    // col(bx·wg_x, by·wg_y) + min_dc; its alignment within a segment is
    // periodic in bx and by with period at most one segment.
    let seg = dev.elements_per_transaction() as i64;
    let blocks_x = i64::from(p.out_w / l.wg_x).min(seg);
    let blocks_y = i64::from(p.out_h / l.wg_y).min(seg);
    let mut padded = 0;
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let start = layout.physical_col(map.col.eval(GridPos::new(bx * wg.0, by * wg.1), 0, 0) + min_dc);
            let aligned = align_down(start, seg);
            padded = padded.max(round_up(start + col_span - aligned, seg));
        }
    }
    let padded_col_span = padded as u64;
    Footprint {
        row_span,
        col_span: col_span as u64,
        padded_col_span,
        bytes: row_span * padded_col_span * dev.element_bytes,
    }
}

pub fn extract_features(instance: &KernelInstance, dev: &DeviceDescriptor) -> Result<FeatureVector> {
    check_instance(instance)?;
    let p = &instance.params;
    let offsets = p.stencil.offsets();
    let min = |f: fn(&(i64, i64)) -> i64| offsets.iter().map(f).min().unwrap_or(0) as f64;
    let max = |f: fn(&(i64, i64)) -> i64| offsets.iter().map(f).max().unwrap_or(0) as f64;
    Ok(FeatureVector {
        reuse_degree: reuse_degree(instance),
        lmem_bytes: footprint(instance, dev).bytes as f64,
        noncoalescing_degree: coalescing_degree(instance, dev),
        num_target_accesses: offsets.len() as f64,
        offset_min_row: min(|o| o.0),
        offset_max_row: max(|o| o.0),
        offset_min_col: min(|o| o.1),
        offset_max_col: max(|o| o.1),
        comp_ilb: f64::from(p.num_comp_ilb),
        comp_ep: f64::from(p.num_comp_ep),
        ctx_coal_ilb: f64::from(p.num_coal_ilb),
        ctx_uncoal_ilb: f64::from(p.num_uncoal_ilb),
        ctx_coal_ep: f64::from(p.num_coal_ep),
        ctx_uncoal_ep: f64::from(p.num_uncoal_ep),
        regs_per_thread: cost::estimate_registers(p, Variant::Baseline, dev) as f64,
        grid_size: instance.launch.grid_size() as f64,
        wg_size: instance.launch.wg_size() as f64,
        wus_per_workitem: instance.wus_per_workitem() as f64,
    })
}
