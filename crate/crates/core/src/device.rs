/// Hardware constants consumed by feature extraction and the cost model.
///
/// Defaults describe a compute-capability-2.0 class device: 128-byte DRAM
/// segments, 32-lane warps, 48 KiB of local memory per multiprocessor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceDescriptor {
    pub transaction_bytes: u64,
    pub warp_size: u64,
    pub element_bytes: u64,
    pub lmem_capacity_bytes: u64,
    pub max_warps_per_sm: u64,
    pub max_workgroups_per_sm: u64,
    pub register_file_per_sm: u64,
    pub max_regs_per_thread: u64,
    pub dram_latency_cycles: f64,
    pub issue_cycles_per_op: f64,
}

impl Default for DeviceDescriptor {
    fn default() -> Self {
        DeviceDescriptor {
            transaction_bytes: 128,
            warp_size: 32,
            element_bytes: 4,
            lmem_capacity_bytes: 48 * 1024,
            max_warps_per_sm: 48,
            max_workgroups_per_sm: 8,
            register_file_per_sm: 32768,
            max_regs_per_thread: 63,
            dram_latency_cycles: 400.0,
            issue_cycles_per_op: 4.0,
        }
    }
}

impl DeviceDescriptor {
    /// Elements per DRAM segment.
    pub fn elements_per_transaction(&self) -> u64 {
        self.transaction_bytes / self.element_bytes
    }

    pub fn validate(&self) -> Result<(), String> {
        let ints = [
            ("transaction_bytes", self.transaction_bytes),
            ("warp_size", self.warp_size),
            ("element_bytes", self.element_bytes),
            ("lmem_capacity_bytes", self.lmem_capacity_bytes),
            ("max_warps_per_sm", self.max_warps_per_sm),
            ("max_workgroups_per_sm", self.max_workgroups_per_sm),
            ("register_file_per_sm", self.register_file_per_sm),
            ("max_regs_per_thread", self.max_regs_per_thread),
        ];
        for (name, v) in ints {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if !(self.dram_latency_cycles > 0.0 && self.dram_latency_cycles.is_finite()) {
            return Err("dram_latency_cycles must be positive".into());
        }
        if !(self.issue_cycles_per_op > 0.0 && self.issue_cycles_per_op.is_finite()) {
            return Err("issue_cycles_per_op must be positive".into());
        }
        if !self.transaction_bytes.is_power_of_two() {
            return Err(format!("transaction_bytes {} is not a power of two", self.transaction_bytes));
        }
        if !self.warp_size.is_power_of_two() {
            return Err(format!("warp_size {} is not a power of two", self.warp_size));
        }
        if !self.transaction_bytes.is_multiple_of(self.element_bytes) {
            return Err("transaction_bytes must be a multiple of element_bytes".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let d = DeviceDescriptor::default();
        d.validate().unwrap();
        assert_eq!(d.elements_per_transaction(), 32);
    }

    #[test]
    fn rejects_non_power_of_two_segment() {
        let d = DeviceDescriptor { transaction_bytes: 96, ..Default::default() };
        assert!(d.validate().is_err());
        let d = DeviceDescriptor { warp_size: 0, ..Default::default() };
        assert!(d.validate().is_err());
    }
}
