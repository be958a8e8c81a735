#![allow(dead_code)]

pub mod cart;
pub mod oracle;

use lmtune::{HomeAccessPattern as P, KernelInstance, LaunchConfig, StencilPattern, StencilShape, TemplateParams};

/// Small-geometry instance for brute-force checks.
pub fn small_instance(
    pattern: P,
    shape: StencilShape,
    radius: u32,
    (n, m): (u32, u32),
    (wg_x, wg_y): (u32, u32),
    out: u32,
) -> KernelInstance {
    let grid = out / 4;
    KernelInstance::new(
        TemplateParams {
            in_h: 256,
            in_w: 256,
            out_h: out,
            out_w: out,
            pattern,
            n,
            m,
            stencil: StencilPattern::new(shape, radius),
            ..Default::default()
        },
        LaunchConfig::new(grid, grid, wg_x, wg_y),
    )
}

pub const WORKGROUPS: [(u32, u32); 3] = [(8, 8), (32, 4), (16, 16)];

pub fn trip_counts(p: P) -> (u32, u32) {
    match p {
        P::NoReuseRowMajor | P::NoReuseColMajor => (2, 2),
        P::XYReuse => (4, 8),
        _ => (4, 2),
    }
}

/// Every pattern, stencil shape, radius 0..=2 and workgroup shape.
pub fn feature_grid() -> Vec<KernelInstance> {
    let mut out = Vec::new();
    for p in P::ALL {
        for shape in StencilShape::ALL {
            for r in 0..=2 {
                for wg in WORKGROUPS {
                    out.push(small_instance(p, shape, r, trip_counts(p), wg, 128));
                }
            }
        }
    }
    out
}
