//! Analytical execution-time model for the baseline and local-memory
//! variants of a kernel instance, and the speedup label derived from it.
//!
//! Per warp and per work unit, with `C` compute cycles and `T` DRAM
//! transactions:
//!
//! ```text
//! total = wus_per_workitem · ( max(C, T·issue) + T·dram_latency / active_warps )
//! ```
//!
//! The first term is issue throughput, the second is memory latency the
//! resident warps fail to hide. Occupancy couples the two variants: the
//! optimized kernel holds local memory and extra registers, so fewer warps
//! are resident and every remaining transaction is exposed more.

use crate::access::{self, Footprint};
use crate::device::DeviceDescriptor;
use crate::error::{Error, Result};
use crate::kernel_model::{KernelInstance, TemplateParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    Optimized,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Optimized => "optimized",
        }
    }
}

/// Registers reserved for the copy loop's index bookkeeping.
pub const COPY_REGISTERS: u64 = 4;

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Estimated registers per thread. The optimized variant always uses
/// [`COPY_REGISTERS`] more than the baseline.
pub fn estimate_registers(params: &TemplateParams, variant: Variant, dev: &DeviceDescriptor) -> u64 {
    let raw = 10
        + params.num_target_accesses() as u64
        + ceil_div(u64::from(params.num_comp_ilb), 4)
        + ceil_div(u64::from(params.num_comp_ep), 8)
        + 2 * u64::from(params.ctx_accesses());
    let base = raw.clamp(10, dev.max_regs_per_thread.max(10));
    match variant {
        Variant::Baseline => base,
        Variant::Optimized => base + COPY_REGISTERS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceUsage {
    pub regs_per_thread: u64,
    pub lmem_per_wg: u64,
    pub wg_size: u64,
    pub warps_per_wg: u64,
}

impl ResourceUsage {
    pub fn new(regs_per_thread: u64, lmem_per_wg: u64, wg_size: u64, dev: &DeviceDescriptor) -> Self {
        ResourceUsage {
            regs_per_thread,
            lmem_per_wg,
            wg_size,
            warps_per_wg: ceil_div(wg_size, dev.warp_size),
        }
    }
}

/// Resident warps per multiprocessor, never below one.
pub fn occupancy(usage: &ResourceUsage, dev: &DeviceDescriptor) -> f64 {
    let by_lmem = dev.lmem_capacity_bytes.checked_div(usage.lmem_per_wg).unwrap_or(u64::MAX);
    let by_regs = dev.register_file_per_sm / (usage.regs_per_thread * usage.wg_size).max(1);
    let by_warps = dev.max_warps_per_sm / usage.warps_per_wg.max(1);
    let groups = dev.max_workgroups_per_sm.min(by_lmem).min(by_regs).min(by_warps);
    (groups * usage.warps_per_wg).max(1) as f64
}

/// Transactions to stage a footprint: one per stored row segment.
pub fn copy_transaction_count(fp: &Footprint, dev: &DeviceDescriptor) -> u64 {
    fp.row_span * (fp.padded_col_span * dev.element_bytes / dev.transaction_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeEstimate {
    pub compute_cycles: f64,
    pub mem_transactions: f64,
    pub active_warps: f64,
    pub total_cycles: f64,
}

/// Every quantity of an instance the time model reads. Exposed so sweeps
/// can vary one term while holding the rest fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub wus_per_workitem: f64,
    /// Iterations of the `i`/`j` nest.
    pub loop_iters: f64,
    pub comp_ilb: f64,
    pub comp_ep: f64,
    pub stencil_reads: f64,
    /// Sum over stencil reads of mean transactions per warp, baseline layout.
    pub stencil_transactions: f64,
    pub ctx_coal_ilb: f64,
    pub ctx_uncoal_ilb: f64,
    pub ctx_coal_ep: f64,
    pub ctx_uncoal_ep: f64,
    pub copy_transactions: f64,
    pub regs_baseline: u64,
    pub regs_optimized: u64,
    pub lmem_per_wg: u64,
    pub wg_size: u64,
}

impl CostTerms {
    pub fn for_instance(instance: &KernelInstance, dev: &DeviceDescriptor) -> Self {
        let p = &instance.params;
        let fp = access::footprint(instance, dev);
        CostTerms {
            wus_per_workitem: instance.wus_per_workitem() as f64,
            loop_iters: f64::from(p.n) * f64::from(p.m),
            comp_ilb: f64::from(p.num_comp_ilb),
            comp_ep: f64::from(p.num_comp_ep),
            stencil_reads: p.num_target_accesses() as f64,
            stencil_transactions: access::stencil_transactions(instance, dev),
            ctx_coal_ilb: f64::from(p.num_coal_ilb),
            ctx_uncoal_ilb: f64::from(p.num_uncoal_ilb),
            ctx_coal_ep: f64::from(p.num_coal_ep),
            ctx_uncoal_ep: f64::from(p.num_uncoal_ep),
            copy_transactions: copy_transaction_count(&fp, dev) as f64,
            regs_baseline: estimate_registers(p, Variant::Baseline, dev),
            regs_optimized: estimate_registers(p, Variant::Optimized, dev),
            lmem_per_wg: fp.bytes,
            wg_size: instance.launch.wg_size(),
        }
    }

    pub fn time(&self, variant: Variant, dev: &DeviceDescriptor) -> Result<TimeEstimate> {
        let ws = dev.warp_size as f64;
        let issue = dev.issue_cycles_per_op;
        let ctx_loop = self.ctx_coal_ilb + self.ctx_uncoal_ilb * ws;
        let ctx_ep = self.ctx_coal_ep + self.ctx_uncoal_ep * ws;
        let mut compute = issue * (self.comp_ilb * self.loop_iters + self.comp_ep);
        let (usage, mem) = match variant {
            Variant::Baseline => (
                ResourceUsage::new(self.regs_baseline, 0, self.wg_size, dev),
                self.loop_iters * (self.stencil_transactions + ctx_loop) + ctx_ep,
            ),
            Variant::Optimized => {
                if self.lmem_per_wg > dev.lmem_capacity_bytes {
                    return Err(Error::OptimizationInfeasible {
                        needed: self.lmem_per_wg,
                        capacity: dev.lmem_capacity_bytes,
                    });
                }
                let usage = ResourceUsage::new(self.regs_optimized, self.lmem_per_wg, self.wg_size, dev);
                compute += self.stencil_reads * self.loop_iters;
                let copy = self.copy_transactions / usage.warps_per_wg as f64;
                (usage, copy + self.loop_iters * ctx_loop + ctx_ep)
            }
        };
        let active = occupancy(&usage, dev);
        let per_wu = compute.max(mem * issue) + mem * dev.dram_latency_cycles / active;
        // An empty work unit still costs one issue slot.
        let total = (self.wus_per_workitem * per_wu).max(issue);
        Ok(TimeEstimate {
            compute_cycles: compute,
            mem_transactions: mem,
            active_warps: active,
            total_cycles: total,
        })
    }

    /// Baseline over optimized time; 0 when the region does not fit.
    pub fn speedup(&self, dev: &DeviceDescriptor) -> f64 {
        let base = self.time(Variant::Baseline, dev).expect("baseline time is always defined");
        match self.time(Variant::Optimized, dev) {
            Ok(opt) => base.total_cycles / opt.total_cycles,
            Err(_) => 0.0,
        }
    }
}

pub fn kernel_time(instance: &KernelInstance, variant: Variant, dev: &DeviceDescriptor) -> Result<TimeEstimate> {
    crate::kernel_model::check_instance(instance)?;
    CostTerms::for_instance(instance, dev).time(variant, dev)
}

/// `T_baseline / T_optimized`, or 0 when the optimization cannot be applied.
pub fn label_speedup(instance: &KernelInstance, dev: &DeviceDescriptor) -> f64 {
    CostTerms::for_instance(instance, dev).speedup(dev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel_model::{HomeAccessPattern as P, LaunchConfig, StencilPattern, StencilShape};

    fn dev() -> DeviceDescriptor {
        DeviceDescriptor::default()
    }

    #[test]
    fn register_estimates() {
        let p = TemplateParams::default();
        assert_eq!(estimate_registers(&p, Variant::Baseline, &dev()), 11);
        let p = TemplateParams {
            num_comp_ilb: 44,
            num_comp_ep: 48,
            num_coal_ilb: 2,
            num_coal_ep: 2,
            num_uncoal_ilb: 2,
            num_uncoal_ep: 2,
            stencil: StencilPattern::new(StencilShape::Star, 2),
            ..Default::default()
        };
        assert_eq!(estimate_registers(&p, Variant::Baseline, &dev()), 52);
        let heavy = TemplateParams { num_coal_ilb: 13, num_coal_ep: 13, ..p };
        assert_eq!(estimate_registers(&heavy, Variant::Baseline, &dev()), 63);
        for params in [p, heavy, TemplateParams::default()] {
            let b = estimate_registers(&params, Variant::Baseline, &dev());
            let o = estimate_registers(&params, Variant::Optimized, &dev());
            assert_eq!(o - b, 4);
        }
    }

    #[test]
    fn occupancy_examples() {
        let d = dev();
        let u = ResourceUsage::new(11, 0, 256, &d);
        assert_eq!(u.warps_per_wg, 8);
        assert_eq!(occupancy(&u, &d), 48.0);
        let u = ResourceUsage::new(11, 48 * 1024, 256, &d);
        assert_eq!(occupancy(&u, &d), 8.0);
        let u = ResourceUsage::new(63, 0, 1024, &d);
        assert_eq!(occupancy(&u, &d), 1.0);
    }

    #[test]
    fn copy_transactions() {
        let d = dev();
        let fp = |r, c| Footprint { row_span: r, col_span: c, padded_col_span: c, bytes: r * c * 4 };
        assert_eq!(copy_transaction_count(&fp(32, 32), &d), 32);
        assert_eq!(copy_transaction_count(&fp(34, 64), &d), 68);
        assert_eq!(copy_transaction_count(&fp(1, 32), &d), 1);
    }

    fn pure_terms() -> CostTerms {
        CostTerms {
            wus_per_workitem: 4.0,
            loop_iters: 64.0,
            comp_ilb: 20.0,
            comp_ep: 10.0,
            stencil_reads: 0.0,
            stencil_transactions: 0.0,
            ctx_coal_ilb: 0.0,
            ctx_uncoal_ilb: 0.0,
            ctx_coal_ep: 0.0,
            ctx_uncoal_ep: 0.0,
            copy_transactions: 0.0,
            regs_baseline: 20,
            regs_optimized: 20,
            lmem_per_wg: 0,
            wg_size: 256,
        }
    }

    #[test]
    fn pure_compute_limit() {
        let d = dev();
        let t = pure_terms();
        let base = t.time(Variant::Baseline, &d).unwrap();
        assert_eq!(base.total_cycles, 4.0 * 4.0 * (20.0 * 64.0 + 10.0));
        assert_eq!(t.speedup(&d), 1.0);
        let with_copy = CostTerms { copy_transactions: 64.0, lmem_per_wg: 4096, ..t };
        assert!(with_copy.speedup(&d) < 1.0);
    }

    #[test]
    fn y_reuse_row_terms() {
        let d = dev();
        let inst = KernelInstance::new(
            TemplateParams { pattern: P::YReuseRow, n: 1, m: 64, ..Default::default() },
            LaunchConfig::new(512, 512, 32, 1),
        );
        let t = CostTerms::for_instance(&inst, &d);
        let base = t.time(Variant::Baseline, &d).unwrap();
        assert_eq!(base.mem_transactions, 64.0 * 32.0);
        let fp = access::footprint(&inst, &d);
        let opt = t.time(Variant::Optimized, &d).unwrap();
        assert_eq!(opt.mem_transactions, copy_transaction_count(&fp, &d) as f64);
        assert!(t.speedup(&d) > 1.0);
    }

    #[test]
    fn speedup_signs() {
        let d = dev();
        let reuse = KernelInstance::new(
            TemplateParams { pattern: P::XYReuse, n: 32, m: 32, ..Default::default() },
            LaunchConfig::new(512, 512, 16, 16),
        );
        assert!(label_speedup(&reuse, &d) > 1.0);
        let private = KernelInstance::new(
            TemplateParams { pattern: P::NoReuseRowMajor, n: 1, m: 1, num_comp_ilb: 10, ..Default::default() },
            LaunchConfig::new(512, 512, 32, 4),
        );
        let s = label_speedup(&private, &d);
        assert!(s > 0.0 && s < 1.0, "{s}");
    }

    #[test]
    fn infeasible_is_zero() {
        let d = dev();
        let big = KernelInstance::new(
            TemplateParams { pattern: P::NoReuseRowMajor, n: 8, m: 8, ..Default::default() },
            LaunchConfig::new(1024, 1024, 32, 32),
        );
        assert!(access::footprint(&big, &d).bytes > d.lmem_capacity_bytes);
        assert_eq!(label_speedup(&big, &d), 0.0);
        assert!(matches!(
            kernel_time(&big, Variant::Optimized, &d),
            Err(Error::OptimizationInfeasible { .. })
        ));
    }

    #[test]
    fn deterministic_and_positive() {
        let d = dev();
        let inst = KernelInstance::new(
            TemplateParams { pattern: P::XReuseCol, n: 4, m: 16, num_coal_ilb: 3, ..Default::default() },
            LaunchConfig::new(256, 1024, 8, 32),
        );
        let a = kernel_time(&inst, Variant::Baseline, &d).unwrap();
        let b = kernel_time(&inst, Variant::Baseline, &d).unwrap();
        assert_eq!(a.total_cycles.to_bits(), b.total_cycles.to_bits());
        assert!(a.total_cycles > 0.0);
    }
}
