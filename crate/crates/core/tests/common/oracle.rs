//! Brute-force counterparts of the closed-form features.
//!
//! Everything here walks individual workitems, loop iterations and byte
//! addresses, with its own copy of the home-coordinate table; nothing reads
//! the affine coefficients the closed forms use. Meant for small geometries.

use std::collections::{HashMap, HashSet};

use lmtune::access::{Footprint, TargetLayout};
use lmtune::kernel_model::{Coord, GridPos};
use lmtune::{DeviceDescriptor, HomeAccessPattern as P, KernelInstance};

fn workitems(instance: &KernelInstance) -> Vec<GridPos> {
    let (wx, wy) = (i64::from(instance.launch.wg_x), i64::from(instance.launch.wg_y));
    (0..wx * wy).map(|lin| GridPos::new(lin % wx, lin / wx)).collect()
}

fn home(instance: &KernelInstance, wg: GridPos, wi: GridPos, iter: GridPos, i: i64, j: i64) -> Coord {
    let l = &instance.launch;
    let (wgx, wgy) = (i64::from(l.wg_x), i64::from(l.wg_y));
    let x = wg.x * wgx * i64::from(instance.num_wus_x()) + iter.x * wgx + wi.x;
    let y = wg.y * wgy * i64::from(instance.num_wus_y()) + iter.y * wgy + wi.y;
    let (n, m) = (i64::from(instance.params.n), i64::from(instance.params.m));
    let (row, col) = match instance.params.pattern {
        P::XYReuse => (i, j),
        P::XReuseRow => (y, j),
        P::XReuseCol => (j, y),
        P::YReuseRow => (x, j),
        P::YReuseCol => (j, x),
        P::NoReuseRowMajor => (y * n + i, x * m + j),
        P::NoReuseColMajor => (y * m + j, x * n + i),
    };
    Coord::new(row, col)
}

fn warp_transactions(addresses: &[i64], dev: &DeviceDescriptor) -> u64 {
    let tx = dev.transaction_bytes as i64;
    addresses.iter().map(|a| a.div_euclid(tx)).collect::<HashSet<_>>().len() as u64
}

fn loop_indices(instance: &KernelInstance) -> impl Iterator<Item = (i64, i64)> {
    let (n, m) = (i64::from(instance.params.n), i64::from(instance.params.m));
    (0..n).flat_map(move |i| (0..m).map(move |j| (i, j)))
}

/// Access-weighted average, over every home access of workgroup 0 at
/// iteration `iter`, of the number of distinct workitems touching the
/// accessed element.
pub fn reuse_degree_at(instance: &KernelInstance, iter: GridPos) -> f64 {
    let wg = GridPos::default();
    let mut touched: HashMap<Coord, HashSet<GridPos>> = HashMap::new();
    let mut accesses = Vec::new();
    for wi in workitems(instance) {
        for (i, j) in loop_indices(instance) {
            let c = home(instance, wg, wi, iter, i, j);
            touched.entry(c).or_default().insert(wi);
            accesses.push(c);
        }
    }
    let sum: usize = accesses.iter().map(|c| touched[c].len()).sum();
    sum as f64 / accesses.len() as f64
}

pub fn reuse_degree(instance: &KernelInstance) -> f64 {
    reuse_degree_at(instance, GridPos::default())
}

/// Mean transactions per warp for the target read at `offset`, averaged
/// over every warp of workgroup 0 at iteration `iter` and every `(i, j)`.
pub fn access_transactions_at(
    instance: &KernelInstance,
    dev: &DeviceDescriptor,
    layout: &TargetLayout,
    offset: (i64, i64),
    iter: GridPos,
) -> f64 {
    let items = workitems(instance);
    let wg = GridPos::default();
    let mut total = 0u64;
    let mut samples = 0u64;
    for warp in items.chunks(dev.warp_size as usize) {
        for (i, j) in loop_indices(instance) {
            let addrs: Vec<i64> = warp
                .iter()
                .map(|&wi| {
                    let h = home(instance, wg, wi, iter, i, j);
                    layout.address(Coord::new(h.row + offset.0, h.col + offset.1))
                })
                .collect();
            total += warp_transactions(&addrs, dev);
            samples += 1;
        }
    }
    total as f64 / samples as f64
}

pub fn access_transactions(instance: &KernelInstance, dev: &DeviceDescriptor, layout: &TargetLayout, offset: (i64, i64)) -> f64 {
    access_transactions_at(instance, dev, layout, offset, GridPos::default())
}

pub fn coalescing_degree(instance: &KernelInstance, dev: &DeviceDescriptor) -> f64 {
    let layout = TargetLayout::for_instance(instance, dev);
    access_transactions(instance, dev, &layout, (0, 0))
}

pub fn stencil_transactions(instance: &KernelInstance, dev: &DeviceDescriptor) -> f64 {
    let layout = TargetLayout::for_instance(instance, dev);
    instance
        .params
        .stencil
        .offsets()
        .into_iter()
        .map(|o| access_transactions(instance, dev, &layout, o))
        .sum()
}

/// Bounding box of every element one workgroup block reads, over every
/// block of the launch. Spans come from block 0; the stored width is the
/// largest segment-aligned width any block needs.
pub fn footprint(instance: &KernelInstance, dev: &DeviceDescriptor) -> Footprint {
    let layout = TargetLayout::for_instance(instance, dev);
    let offsets = instance.params.stencil.offsets();
    let items = workitems(instance);
    let seg = dev.transaction_bytes as i64;
    let eb = layout.element_bytes;
    let l = &instance.launch;

    let mut first: Option<(u64, u64)> = None;
    let mut padded_bytes = 0i64;
    for gy in 0..i64::from(l.num_groups_y()) {
        for gx in 0..i64::from(l.num_groups_x()) {
            for iy in 0..i64::from(instance.num_wus_y()) {
                for ix in 0..i64::from(instance.num_wus_x()) {
                    let (wg, iter) = (GridPos::new(gx, gy), GridPos::new(ix, iy));
                    let mut rows = (i64::MAX, i64::MIN);
                    let mut cols = (i64::MAX, i64::MIN);
                    for &wi in &items {
                        for (i, j) in loop_indices(instance) {
                            let h = home(instance, wg, wi, iter, i, j);
                            for &(dr, dc) in &offsets {
                                let addr = layout.address(Coord::new(h.row + dr, h.col + dc));
                                let row = addr.div_euclid(layout.pitch_elems * eb);
                                let col_byte = addr.rem_euclid(layout.pitch_elems * eb);
                                rows = (rows.0.min(row), rows.1.max(row));
                                cols = (cols.0.min(col_byte), cols.1.max(col_byte + eb));
                            }
                        }
                    }
                    let spans = ((rows.1 - rows.0 + 1) as u64, ((cols.1 - cols.0) / eb) as u64);
                    first.get_or_insert(spans);
                    let start = cols.0.div_euclid(seg) * seg;
                    let end = (cols.1 + seg - 1).div_euclid(seg) * seg;
                    padded_bytes = padded_bytes.max(end - start);
                }
            }
        }
    }
    let (row_span, col_span) = first.expect("launch has at least one block");
    let padded_col_span = (padded_bytes / eb) as u64;
    Footprint {
        row_span,
        col_span,
        padded_col_span,
        bytes: row_span * padded_col_span * dev.element_bytes,
    }
}
