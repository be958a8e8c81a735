//! OpenCL C emission for the synthetic kernel template.
//!
//! Both variants are first built as a [`KernelProgram`], a statement list
//! fixed by the template parameters. [`KernelProgram::render`] prints it as
//! OpenCL C; [`interp`] executes the same program on the host so the two
//! variants can be compared without a GPU.

pub mod interp;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::access::{self, Footprint, TargetLayout};
use crate::cost::{copy_transaction_count, Variant};
use crate::device::DeviceDescriptor;
use crate::error::{Error, Result};
use crate::kernel_model::{check_instance, AffineIndex, HomeMap, KernelInstance};

/// Multiplier and addend of every emitted fused multiply-add. Both are exact
/// in binary32; the multiplier is close to one so the result keeps
/// depending on every value read.
pub const FMA_MUL: f32 = 0.999_023_44;
pub const FMA_ADD: f32 = 0.000_976_562_5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSource {
    pub variant: Variant,
    pub source_text: String,
    pub entry_name: String,
    pub compile_defines: Vec<(String, String)>,
}

impl KernelSource {
    /// `-D NAME=value` flags, one per binding.
    pub fn build_options(&self) -> Vec<String> {
        self.compile_defines.iter().map(|(k, v)| format!("-D {k}={v}")).collect()
    }
}

/// Where a statement sits in the work unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    LoopBody,
    Epilogue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stmt {
    /// Read of the target array at `home + (d_row, d_col)`. The first read
    /// of the loop body seeds the running value; later ones add to it.
    TargetRead { d_row: i64, d_col: i64, seed: bool },
    /// Read of the auxiliary array `in2`, folded into the running value.
    CtxRead { coalesced: bool, slot: u32 },
    /// `v = fma(v, FMA_MUL, FMA_ADD)`.
    Fma,
}

/// Geometry of the cooperative copy into local memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StagePlan {
    pub rows: i64,
    pub cols: i64,
    pub segs_per_row: i64,
    pub seg_elems: i64,
    pub min_d_row: i64,
    pub min_d_col: i64,
    pub num_warps: i64,
    pub warp_lanes: i64,
}

impl StagePlan {
    pub fn segments(&self) -> i64 {
        self.rows * self.segs_per_row
    }

    /// Segments copied by `warp`, in issue order.
    pub fn segments_of_warp(&self, warp: i64) -> impl Iterator<Item = i64> + '_ {
        (warp..self.segments()).step_by(self.num_warps as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelProgram {
    pub variant: Variant,
    pub instance: KernelInstance,
    pub layout: TargetLayout,
    pub home: HomeMap,
    pub warp_size: i64,
    pub loop_body: Vec<Stmt>,
    pub epilogue: Vec<Stmt>,
    pub stage: Option<StagePlan>,
}

impl KernelProgram {
    pub fn baseline(instance: &KernelInstance, dev: &DeviceDescriptor) -> Result<Self> {
        check_instance(instance)?;
        Ok(Self::build(instance, dev, Variant::Baseline, None))
    }

    pub fn optimized(instance: &KernelInstance, fp: &Footprint, dev: &DeviceDescriptor) -> Result<Self> {
        check_instance(instance)?;
        if fp.bytes > dev.lmem_capacity_bytes {
            return Err(Error::OptimizationInfeasible { needed: fp.bytes, capacity: dev.lmem_capacity_bytes });
        }
        let offsets = instance.params.stencil.offsets();
        let seg_elems = dev.elements_per_transaction() as i64;
        let wg = instance.launch.wg_size() as i64;
        let ws = dev.warp_size as i64;
        let stage = StagePlan {
            rows: fp.row_span as i64,
            cols: fp.padded_col_span as i64,
            segs_per_row: fp.padded_col_span as i64 / seg_elems,
            seg_elems,
            min_d_row: offsets.iter().map(|o| o.0).min().unwrap_or(0),
            min_d_col: offsets.iter().map(|o| o.1).min().unwrap_or(0),
            num_warps: (wg + ws - 1) / ws,
            warp_lanes: wg.min(ws),
        };
        Ok(Self::build(instance, dev, Variant::Optimized, Some(stage)))
    }

    fn build(instance: &KernelInstance, dev: &DeviceDescriptor, variant: Variant, stage: Option<StagePlan>) -> Self {
        let p = &instance.params;
        let mut loop_body: Vec<Stmt> = p
            .stencil
            .offsets()
            .into_iter()
            .enumerate()
            .map(|(k, (d_row, d_col))| Stmt::TargetRead { d_row, d_col, seed: k == 0 })
            .collect();
        loop_body.extend((0..p.num_coal_ilb).map(|slot| Stmt::CtxRead { coalesced: true, slot }));
        loop_body.extend((0..p.num_uncoal_ilb).map(|slot| Stmt::CtxRead { coalesced: false, slot }));
        loop_body.extend((0..p.num_comp_ilb).map(|_| Stmt::Fma));

        let mut epilogue: Vec<Stmt> = (0..p.num_coal_ep).map(|slot| Stmt::CtxRead { coalesced: true, slot }).collect();
        epilogue.extend((0..p.num_uncoal_ep).map(|slot| Stmt::CtxRead { coalesced: false, slot }));
        epilogue.extend((0..p.num_comp_ep).map(|_| Stmt::Fma));

        KernelProgram {
            variant,
            instance: *instance,
            layout: TargetLayout::for_instance(instance, dev),
            home: p.home_map(),
            warp_size: dev.warp_size as i64,
            loop_body,
            epilogue,
            stage,
        }
    }

    pub fn entry_name(&self) -> String {
        format!("lmt_{}", self.variant.name())
    }

    pub fn compile_defines(&self) -> Vec<(String, String)> {
        let inst = &self.instance;
        let p = &inst.params;
        let mut d: Vec<(String, String)> = vec![
            ("N".into(), p.n.to_string()),
            ("M".into(), p.m.to_string()),
            ("OUT_H".into(), p.out_h.to_string()),
            ("OUT_W".into(), p.out_w.to_string()),
            ("IN_PITCH".into(), self.layout.pitch_elems.to_string()),
            ("APRON_R".into(), self.layout.apron_rows.to_string()),
            ("APRON_C".into(), self.layout.apron_cols.to_string()),
            ("WG_W".into(), inst.launch.wg_x.to_string()),
            ("WG_H".into(), inst.launch.wg_y.to_string()),
            ("NUM_WUS_X".into(), inst.num_wus_x().to_string()),
            ("NUM_WUS_Y".into(), inst.num_wus_y().to_string()),
        ];
        if let Some(s) = &self.stage {
            d.extend([
                ("LROWS".into(), s.rows.to_string()),
                ("LCOLS".into(), s.cols.to_string()),
                ("SEGS_PER_ROW".into(), s.segs_per_row.to_string()),
                ("SEG_ELEMS".into(), s.seg_elems.to_string()),
                ("MIN_DR".into(), s.min_d_row.to_string()),
                ("MIN_DC".into(), s.min_d_col.to_string()),
                ("WARP_SIZE".into(), self.warp_size.to_string()),
                ("NUM_WARPS".into(), s.num_warps.to_string()),
                ("WARP_LANES".into(), s.warp_lanes.to_string()),
            ]);
        }
        d
    }

    pub fn render(&self) -> KernelSource {
        KernelSource {
            variant: self.variant,
            source_text: self.render_text(),
            entry_name: self.entry_name(),
            compile_defines: self.compile_defines(),
        }
    }

    fn render_text(&self) -> String {
        let mut s = String::new();
        let p = &self.instance.params;
        let _ = writeln!(
            s,
            "/* {} {}x{} {}{} ({}) */",
            p.pattern,
            p.n,
            p.m,
            p.stencil.shape,
            p.stencil.radius,
            self.variant.name()
        );
        let _ = writeln!(
            s,
            "__kernel void {}(__global const float* restrict in, __global const float* restrict in2, __global float* restrict out)",
            self.entry_name()
        );
        s.push_str("{\n");
        s.push_str("    const int wg_x = get_group_id(0);\n");
        s.push_str("    const int wg_y = get_group_id(1);\n");
        s.push_str("    const int wi_x = get_local_id(0);\n");
        s.push_str("    const int wi_y = get_local_id(1);\n");
        if self.stage.is_some() {
            s.push_str("    const int lin = wi_y * WG_W + wi_x;\n");
            s.push_str("    const int warp = lin / WARP_SIZE;\n");
            s.push_str("    const int lane = lin % WARP_SIZE;\n");
            s.push_str("    __local float tile[LROWS * LCOLS];\n");
        }
        s.push_str("    for (int iter_y = 0; iter_y < NUM_WUS_Y; ++iter_y) {\n");
        s.push_str("        for (int iter_x = 0; iter_x < NUM_WUS_X; ++iter_x) {\n");
        s.push_str("            const int blk_x = wg_x * (WG_W * NUM_WUS_X) + iter_x * WG_W;\n");
        s.push_str("            const int blk_y = wg_y * (WG_H * NUM_WUS_Y) + iter_y * WG_H;\n");
        s.push_str("            const int wu_x = blk_x + wi_x;\n");
        s.push_str("            const int wu_y = blk_y + wi_y;\n");
        if self.stage.is_some() {
            let _ = writeln!(
                s,
                "            const int reg_r = {} + MIN_DR;",
                affine_text(&self.home.row, "blk_x", "blk_y", "0", "0")
            );
            let _ = writeln!(
                s,
                "            const int reg_c = (({} + MIN_DC + APRON_C) / SEG_ELEMS) * SEG_ELEMS;",
                affine_text(&self.home.col, "blk_x", "blk_y", "0", "0")
            );
            s.push_str("            barrier(CLK_LOCAL_MEM_FENCE);\n");
            s.push_str("            /* cooperative copy */\n");
            s.push_str("            for (int s = warp; s < LROWS * SEGS_PER_ROW; s += NUM_WARPS) {\n");
            s.push_str("                const int r = s / SEGS_PER_ROW;\n");
            s.push_str("                const int c = (s % SEGS_PER_ROW) * SEG_ELEMS;\n");
            s.push_str("                for (int k = lane; k < SEG_ELEMS; k += WARP_LANES) {\n");
            s.push_str(
                "                    tile[r * LCOLS + c + k] = in[(reg_r + r + APRON_R) * IN_PITCH + reg_c + c + k];\n",
            );
            s.push_str("                }\n");
            s.push_str("            }\n");
            s.push_str("            barrier(CLK_LOCAL_MEM_FENCE);\n");
        }
        s.push_str("            float acc = 0.0f;\n");
        s.push_str("            /* loop nest */\n");
        s.push_str("            for (int i = 0; i < N; ++i) {\n");
        s.push_str("                for (int j = 0; j < M; ++j) {\n");
        let _ = writeln!(s, "                    const int idx_o = {};", affine_text(&self.home.row, "wu_x", "wu_y", "i", "j"));
        let _ = writeln!(s, "                    const int idx_i = {};", affine_text(&self.home.col, "wu_x", "wu_y", "i", "j"));
        for stmt in &self.loop_body {
            let _ = writeln!(s, "                    {}", self.stmt_text(stmt, Section::LoopBody));
        }
        s.push_str("                    acc += v;\n");
        s.push_str("                }\n");
        s.push_str("            }\n");
        s.push_str("            /* epilogue */\n");
        s.push_str("            float v = acc;\n");
        for stmt in &self.epilogue {
            let _ = writeln!(s, "            {}", self.stmt_text(stmt, Section::Epilogue));
        }
        s.push_str("            out[wu_y * OUT_W + wu_x] = v;\n");
        s.push_str("        }\n");
        s.push_str("    }\n");
        s.push_str("}\n");
        s
    }

    fn stmt_text(&self, stmt: &Stmt, section: Section) -> String {
        match *stmt {
            Stmt::TargetRead { d_row, d_col, seed } => {
                let lhs = if seed { "float v =" } else { "v +=" };
                match self.stage {
                    None => format!(
                        "{lhs} in[(idx_o + {} + APRON_R) * IN_PITCH + (idx_i + {} + APRON_C)];",
                        paren(d_row),
                        paren(d_col)
                    ),
                    Some(_) => format!(
                        "{lhs} tile[(idx_o + {} - reg_r) * LCOLS + (idx_i + {} + APRON_C - reg_c)];",
                        paren(d_row),
                        paren(d_col)
                    ),
                }
            }
            Stmt::CtxRead { coalesced, slot } => {
                let (i, j) = match section {
                    Section::LoopBody => ("i", "j"),
                    Section::Epilogue => ("0", "0"),
                };
                if coalesced {
                    format!("v += in2[((wu_y + {i} + {slot}) % OUT_H) * OUT_W + (wu_x + {j}) % OUT_W];")
                } else {
                    format!("v += in2[((wu_x + {j} + {slot}) % OUT_H) * OUT_W + (wu_y + {i}) % OUT_W];")
                }
            }
            Stmt::Fma => format!("v = fma(v, {:?}f, {:?}f);", FMA_MUL, FMA_ADD),
        }
    }
}

fn paren(v: i64) -> String {
    if v < 0 {
        format!("({v})")
    } else {
        v.to_string()
    }
}

fn affine_text(a: &AffineIndex, x: &str, y: &str, i: &str, j: &str) -> String {
    let terms: Vec<String> = [(a.wu_x, x), (a.wu_y, y), (a.i, i), (a.j, j)]
        .into_iter()
        .filter(|&(c, v)| c != 0 && v != "0")
        .map(|(c, v)| if c == 1 { v.to_string() } else { format!("{c} * {v}") })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        format!("({})", terms.join(" + "))
    }
}

pub fn emit_baseline(instance: &KernelInstance, dev: &DeviceDescriptor) -> Result<KernelSource> {
    Ok(KernelProgram::baseline(instance, dev)?.render())
}

pub fn emit_optimized(instance: &KernelInstance, fp: &Footprint, dev: &DeviceDescriptor) -> Result<KernelSource> {
    Ok(KernelProgram::optimized(instance, fp, dev)?.render())
}

/// Stem shared by both variants' files: `<pattern>_<n>x<m>_<stencil><r>`.
pub fn file_stem(instance: &KernelInstance) -> String {
    let p = &instance.params;
    format!("{}_{}x{}_{}{}", p.pattern, p.n, p.m, p.stencil.shape, p.stencil.radius)
}

/// Writes `<stem>_<variant>.cl` plus a `<stem>_<variant>.defines` manifest
/// for each feasible variant. Returns the `.cl` paths written.
pub fn write_kernel_files(dir: &Path, instance: &KernelInstance, dev: &DeviceDescriptor) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fp = access::footprint(instance, dev);
    let mut sources = vec![emit_baseline(instance, dev)?];
    match emit_optimized(instance, &fp, dev) {
        Ok(src) => sources.push(src),
        Err(Error::OptimizationInfeasible { .. }) => {}
        Err(e) => return Err(e),
    }
    let stem = file_stem(instance);
    let mut written = Vec::new();
    for src in sources {
        let cl = dir.join(format!("{stem}_{}.cl", src.variant.name()));
        fs::write(&cl, &src.source_text).map_err(|e| Error::io(&cl, e))?;
        let manifest = dir.join(format!("{stem}_{}.defines", src.variant.name()));
        let mut text = src.build_options().join("\n");
        text.push('\n');
        fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
        written.push(cl);
    }
    Ok(written)
}

/// Transactions the copy loop issues for one staged region.
pub fn staged_copy_transactions(fp: &Footprint, dev: &DeviceDescriptor) -> u64 {
    copy_transaction_count(fp, dev)
}

/// Structural problems with emitted source: unbalanced delimiters or a
/// `__kernel` count other than one.
pub fn structural_problems(text: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let mut stack = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for ch in line.chars() {
            match ch {
                '(' | '{' | '[' => stack.push(ch),
                ')' | '}' | ']' => {
                    let want = match ch {
                        ')' => '(',
                        '}' => '{',
                        _ => '[',
                    };
                    if stack.pop() != Some(want) {
                        problems.push(format!("line {}: unmatched `{ch}`", line_no + 1));
                    }
                }
                _ => {}
            }
        }
    }
    if !stack.is_empty() {
        problems.push(format!("{} unclosed delimiters", stack.len()));
    }
    let kernels = text.matches("__kernel").count();
    if kernels != 1 {
        problems.push(format!("{kernels} `__kernel` functions"));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_model::{HomeAccessPattern as P, LaunchConfig, StencilPattern, StencilShape, TemplateParams};

    fn instance(pattern: P, n: u32, m: u32, r: u32, launch: LaunchConfig) -> KernelInstance {
        KernelInstance::new(
            TemplateParams {
                pattern,
                n,
                m,
                stencil: StencilPattern::new(StencilShape::Rectangular, r),
                num_comp_ilb: 19,
                num_comp_ep: 23,
                num_coal_ilb: 2,
                num_uncoal_ilb: 1,
                num_coal_ep: 3,
                num_uncoal_ep: 1,
                ..Default::default()
            },
            launch,
        )
    }

    fn section<'a>(text: &'a str, start: &str, end: &str) -> &'a str {
        let a = text.find(start).unwrap();
        let b = text[a..].find(end).unwrap() + a;
        &text[a..b]
    }

    #[test]
    fn baseline_counts() {
        let dev = DeviceDescriptor::default();
        let inst = instance(P::XYReuse, 8, 8, 0, LaunchConfig::new(512, 512, 16, 16));
        let src = emit_baseline(&inst, &dev).unwrap();
        let body = section(&src.source_text, "/* loop nest */", "/* epilogue */");
        let ep = section(&src.source_text, "/* epilogue */", "out[");
        assert_eq!(body.matches("fma(").count(), 19);
        assert_eq!(ep.matches("fma(").count(), 23);
        assert_eq!(body.matches(" in[").count(), 1);
        assert_eq!(body.matches("in2[").count(), 3);
        assert_eq!(ep.matches("in2[").count(), 4);
        assert!(!src.source_text.contains("__local"));
        assert!(structural_problems(&src.source_text).is_empty());
        assert_eq!(src.source_text.matches("out[").count(), 1);
    }

    #[test]
    fn optimized_structure() {
        let dev = DeviceDescriptor::default();
        let inst = instance(P::XYReuse, 32, 32, 0, LaunchConfig::new(512, 512, 16, 16));
        let fp = access::footprint(&inst, &dev);
        let src = emit_optimized(&inst, &fp, &dev).unwrap();
        let text = &src.source_text;
        assert!(text.contains("__local float tile[LROWS * LCOLS];"));
        let wu_loop = section(text, "for (int iter_y", "/* loop nest */");
        assert!(wu_loop.matches("barrier(").count() >= 2);
        let nest = section(text, "/* loop nest */", "/* epilogue */");
        assert_eq!(nest.matches(" in[").count(), 0);
        assert!(structural_problems(text).is_empty());
        let defines: std::collections::HashMap<_, _> = src.compile_defines.iter().cloned().collect();
        assert_eq!(defines["LROWS"], "32");
        assert_eq!(defines["LCOLS"], "32");
        assert_eq!(defines["NUM_WARPS"], "8");
    }

    #[test]
    fn copy_plan_distributes_segments() {
        let dev = DeviceDescriptor::default();
        let inst = instance(P::XYReuse, 32, 32, 0, LaunchConfig::new(512, 512, 16, 16));
        let fp = access::footprint(&inst, &dev);
        let prog = KernelProgram::optimized(&inst, &fp, &dev).unwrap();
        let plan = prog.stage.unwrap();
        assert_eq!(plan.segments(), 32);
        assert_eq!(staged_copy_transactions(&fp, &dev), 32);
        for w in 0..plan.num_warps {
            assert_eq!(plan.segments_of_warp(w).count(), 4);
        }
    }

    #[test]
    fn optimized_rejects_oversized_region() {
        let dev = DeviceDescriptor::default();
        let inst = instance(P::NoReuseRowMajor, 8, 8, 2, LaunchConfig::new(1024, 1024, 32, 32));
        let fp = access::footprint(&inst, &dev);
        assert!(matches!(emit_optimized(&inst, &fp, &dev), Err(Error::OptimizationInfeasible { .. })));
    }

    #[test]
    fn structural_checker_catches_imbalance() {
        assert!(!structural_problems("__kernel void f() { (").is_empty());
        assert!(!structural_problems("void f() {}").is_empty());
        assert!(structural_problems("__kernel void f() { a[(1)]; }").is_empty());
    }

    #[test]
    fn kernel_files_and_manifest() {
        let dev = DeviceDescriptor::default();
        let dir = tempfile::tempdir().unwrap();
        let inst = instance(P::YReuseCol, 2, 16, 1, LaunchConfig::new(512, 512, 32, 4));
        let paths = write_kernel_files(dir.path(), &inst, &dev).unwrap();
        let names: Vec<_> = paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, ["y-reuse-col_2x16_rect1_baseline.cl", "y-reuse-col_2x16_rect1_optimized.cl"]);
        let manifest = fs::read_to_string(dir.path().join("y-reuse-col_2x16_rect1_optimized.defines")).unwrap();
        assert!(manifest.lines().all(|l| l.starts_with("-D ") && l.contains('=')));
        assert!(manifest.contains("-D N=2\n"));
    }
}
