//! Host-side reference execution of a [`KernelProgram`].
//!
//! Workgroups run one at a time. Within a work-unit iteration the optimized
//! variant first performs the cooperative copy for every workitem, then the
//! compute phase, which is exactly what the two barriers enforce on a device.
//! Tile slots the copy never wrote are tracked, so a read of one is an error
//! rather than a silently wrong value.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::access::align_down;
use crate::error::{Error, Result};
use crate::kernel_model::GridPos;

use super::{KernelProgram, Section, Stmt, FMA_ADD, FMA_MUL};

#[derive(Debug, Clone, PartialEq)]
pub struct Inputs {
    /// Padded target array, `rows × pitch` elements.
    pub target: Vec<f32>,
    /// Auxiliary array `in2`, `out_h × out_w` elements.
    pub aux: Vec<f32>,
}

/// Stored elements of the padded target array the program can touch.
pub fn target_len(program: &KernelProgram) -> usize {
    let p = &program.instance.params;
    let far = GridPos::new(i64::from(p.out_w) - 1, i64::from(p.out_h) - 1);
    let max_row = program.home.row.eval(far, i64::from(p.n) - 1, i64::from(p.m) - 1);
    let rows = i64::from(p.in_h).max(max_row + 1) + 2 * program.layout.apron_rows;
    (rows * program.layout.pitch_elems) as usize
}

impl Inputs {
    /// Uniform values in `[-1, 1)` from a seeded generator.
    pub fn random(program: &KernelProgram, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &program.instance.params;
        let aux_len = p.out_h as usize * p.out_w as usize;
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>();
        let target = draw(target_len(program));
        let aux = draw(aux_len);
        Inputs { target, aux }
    }
}

struct Tile {
    cols: i64,
    data: Vec<Option<f32>>,
    row0: i64,
    col0: i64,
}

fn fetch<T: Copy>(buf: &[T], idx: i64, what: &str) -> Result<T> {
    usize::try_from(idx)
        .ok()
        .and_then(|i| buf.get(i).copied())
        .ok_or_else(|| Error::InvalidInput(format!("{what} index {idx} out of bounds")))
}

/// Runs every work unit and returns `out`, row-major `out_h × out_w`.
pub fn run(program: &KernelProgram, inputs: &Inputs) -> Result<Vec<f32>> {
    let inst = &program.instance;
    let p = &inst.params;
    let l = &inst.launch;
    let (wgw, wgh) = (i64::from(l.wg_x), i64::from(l.wg_y));
    let (nwx, nwy) = (i64::from(inst.num_wus_x()), i64::from(inst.num_wus_y()));
    let (out_w, out_h) = (i64::from(p.out_w), i64::from(p.out_h));
    let mut out = vec![f32::NAN; (out_w * out_h) as usize];

    for gy in 0..i64::from(l.num_groups_y()) {
        for gx in 0..i64::from(l.num_groups_x()) {
            for iy in 0..nwy {
                for ix in 0..nwx {
                    let blk = GridPos::new(gx * (wgw * nwx) + ix * wgw, gy * (wgh * nwy) + iy * wgh);
                    let tile = match &program.stage {
                        Some(_) => Some(stage_region(program, inputs, blk)?),
                        None => None,
                    };
                    for wiy in 0..wgh {
                        for wix in 0..wgw {
                            let wu = GridPos::new(blk.x + wix, blk.y + wiy);
                            let v = work_unit(program, inputs, tile.as_ref(), wu)?;
                            out[(wu.y * out_w + wu.x) as usize] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn stage_region(program: &KernelProgram, inputs: &Inputs, blk: GridPos) -> Result<Tile> {
    let plan = program.stage.as_ref().expect("optimized program");
    let layout = &program.layout;
    let row0 = program.home.row.eval(blk, 0, 0) + plan.min_d_row;
    let col0 = align_down(program.home.col.eval(blk, 0, 0) + plan.min_d_col + layout.apron_cols, plan.seg_elems);
    let mut tile = Tile { cols: plan.cols, data: vec![None; (plan.rows * plan.cols) as usize], row0, col0 };
    let wg_size = program.instance.launch.wg_size() as i64;
    for lin in 0..wg_size {
        let warp = lin / program.warp_size;
        let lane = lin % program.warp_size;
        for s in plan.segments_of_warp(warp) {
            let r = s / plan.segs_per_row;
            let c = (s % plan.segs_per_row) * plan.seg_elems;
            let mut k = lane;
            while k < plan.seg_elems {
                let src = (row0 + r + layout.apron_rows) * layout.pitch_elems + col0 + c + k;
                tile.data[(r * plan.cols + c + k) as usize] = Some(fetch(&inputs.target, src, "target")?);
                k += plan.warp_lanes;
            }
        }
    }
    Ok(tile)
}

fn work_unit(program: &KernelProgram, inputs: &Inputs, tile: Option<&Tile>, wu: GridPos) -> Result<f32> {
    let p = &program.instance.params;
    let mut acc = 0.0f32;
    for i in 0..i64::from(p.n) {
        for j in 0..i64::from(p.m) {
            let mut v = 0.0f32;
            for stmt in &program.loop_body {
                v = step(program, inputs, tile, wu, (i, j), Section::LoopBody, stmt, v)?;
            }
            acc += v;
        }
    }
    let mut v = acc;
    for stmt in &program.epilogue {
        v = step(program, inputs, tile, wu, (0, 0), Section::Epilogue, stmt, v)?;
    }
    Ok(v)
}

#[allow(clippy::too_many_arguments)]
fn step(
    program: &KernelProgram,
    inputs: &Inputs,
    tile: Option<&Tile>,
    wu: GridPos,
    (i, j): (i64, i64),
    section: Section,
    stmt: &Stmt,
    v: f32,
) -> Result<f32> {
    let p = &program.instance.params;
    let layout = &program.layout;
    let (out_w, out_h) = (i64::from(p.out_w), i64::from(p.out_h));
    Ok(match *stmt {
        Stmt::TargetRead { d_row, d_col, seed } => {
            let home = program.home.eval(wu, i, j);
            let x = match tile {
                None => {
                    let idx = (home.row + d_row + layout.apron_rows) * layout.pitch_elems
                        + home.col
                        + d_col
                        + layout.apron_cols;
                    fetch(&inputs.target, idx, "target")?
                }
                Some(t) => {
                    let r = home.row + d_row - t.row0;
                    let c = home.col + d_col + layout.apron_cols - t.col0;
                    if c < 0 || c >= t.cols {
                        return Err(Error::InvalidInput(format!("tile column {c} outside [0, {})", t.cols)));
                    }
                    fetch(&t.data, r * t.cols + c, "tile")?
                        .ok_or_else(|| Error::InvalidInput(format!("tile slot ({r}, {c}) read before the copy wrote it")))?
                }
            };
            if seed {
                x
            } else {
                v + x
            }
        }
        Stmt::CtxRead { coalesced, slot } => {
            let (i, j) = match section {
                Section::LoopBody => (i, j),
                Section::Epilogue => (0, 0),
            };
            let slot = i64::from(slot);
            let idx = if coalesced {
                ((wu.y + i + slot) % out_h) * out_w + (wu.x + j) % out_w
            } else {
                ((wu.x + j + slot) % out_h) * out_w + (wu.y + i) % out_w
            };
            v + fetch(&inputs.aux, idx, "in2")?
        }
        Stmt::Fma => v.mul_add(FMA_MUL, FMA_ADD),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access;
    use crate::device::DeviceDescriptor;
    use crate::kernel_model::{HomeAccessPattern as P, KernelInstance, LaunchConfig, StencilPattern, StencilShape, TemplateParams};

    fn small(pattern: P, shape: StencilShape, r: u32, launch: LaunchConfig) -> KernelInstance {
        KernelInstance::new(
            TemplateParams {
                in_h: 64,
                in_w: 64,
                out_h: 32,
                out_w: 32,
                pattern,
                n: 4,
                m: 2,
                stencil: StencilPattern::new(shape, r),
                num_comp_ilb: 5,
                num_comp_ep: 3,
                num_coal_ilb: 1,
                num_coal_ep: 2,
                num_uncoal_ilb: 1,
                num_uncoal_ep: 1,
            },
            launch,
        )
    }

    #[test]
    fn variants_agree_on_every_pattern() {
        let dev = DeviceDescriptor::default();
        for pattern in P::ALL {
            for (k, launch) in [LaunchConfig::new(32, 16, 8, 4), LaunchConfig::new(16, 32, 16, 2)].into_iter().enumerate() {
                let inst = small(pattern, StencilShape::ALL[k + 1], 1, launch);
                let fp = access::footprint(&inst, &dev);
                let base = KernelProgram::baseline(&inst, &dev).unwrap();
                let opt = KernelProgram::optimized(&inst, &fp, &dev).unwrap();
                let inputs = Inputs::random(&base, 11);
                let a = run(&base, &inputs).unwrap();
                let b = run(&opt, &inputs).unwrap();
                assert!(a.iter().all(|v| v.is_finite()));
                assert_eq!(a, b, "{pattern}");
            }
        }
    }

    #[test]
    fn missing_copy_is_detected() {
        let dev = DeviceDescriptor::default();
        let inst = small(P::XYReuse, StencilShape::Rectangular, 1, LaunchConfig::new(32, 16, 8, 4));
        let fp = access::footprint(&inst, &dev);
        let mut opt = KernelProgram::optimized(&inst, &fp, &dev).unwrap();
        if let Some(plan) = opt.stage.as_mut() {
            plan.rows -= 1;
        }
        let inputs = Inputs::random(&opt, 3);
        assert!(run(&opt, &inputs).is_err());
    }
}
