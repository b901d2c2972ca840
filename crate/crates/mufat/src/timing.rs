//! Timing model of the storage medium.
//!
//! Two numbers describe the medium: the per-byte write time `t_w` and the
//! address-jump response time `t_jump` (the fixed penalty paid whenever the
//! write head moves to a non-consecutive sector, erase cost folded in).
//! Every duration in the simulator is derived from byte counts and jump
//! counts through [`FlashTimingParams::elapsed`], in exact integer
//! nanoseconds: `t_w` is stored as a rational so that 160 MB/s maps to
//! exactly 25/4 ns per byte on every platform.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Size of one sector, the smallest read/write unit, in bytes.
pub const SECTOR_BYTES: u64 = 512;
/// Bytes of one FAT entry.
pub const FAT_ENTRY_BYTES: u64 = 4;
/// FAT entries per sector.
pub const FAT_ENTRIES_PER_SECTOR: u64 = SECTOR_BYTES / FAT_ENTRY_BYTES;
/// Bytes of one FDT record.
pub const FDT_ENTRY_BYTES: u64 = 32;
/// FDT records per sector.
pub const FDT_ENTRIES_PER_SECTOR: u64 = SECTOR_BYTES / FDT_ENTRY_BYTES;

/// Decimal megabyte, used for data rates ("160 MB/s" means 160e6 B/s).
pub const MB: u64 = 1_000_000;
/// Binary kibibyte, used for packet and file sizes.
pub const KIB: u64 = 1024;
/// Binary mebibyte.
pub const MIB: u64 = 1024 * 1024;
/// Binary gibibyte.
pub const GIB: u64 = 1024 * 1024 * 1024;

/// Physical timing and geometry of the flash medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashTimingParams {
    /// Numerator of the per-byte write time in ns.
    pub t_w_num: u64,
    /// Denominator of the per-byte write time in ns.
    pub t_w_den: u64,
    /// Address-jump response time in ns.
    pub t_jump_ns: u64,
    /// Sector size in bytes; fixed at 512.
    pub sector_bytes: u64,
    /// Sectors per cluster (the paper's C).
    pub sectors_per_cluster: u64,
    /// Total data-region size in bytes; must be a whole number of clusters.
    pub volume_capacity: u64,
}

impl Default for FlashTimingParams {
    /// Calibrated defaults: 512 B sectors, C = 16, t_w = 6.25 ns/B
    /// (a 160 MB/s medium) and t_jump chosen so that the per-cluster
    /// management ratio of the plain per-cluster scheme is 102.2.
    fn default() -> Self {
        FlashTimingParams {
            t_w_num: 25,
            t_w_den: 4,
            t_jump_ns: 1_308_160,
            sector_bytes: SECTOR_BYTES,
            sectors_per_cluster: 16,
            volume_capacity: 512 * GIB,
        }
    }
}

impl FlashTimingParams {
    /// Validates all structural invariants, returning `self` on success.
    pub fn validated(self) -> Result<Self> {
        if self.t_w_num == 0 || self.t_w_den == 0 {
            return Err(Error::Config("t_w must be positive".into()));
        }
        if self.t_jump_ns == 0 {
            return Err(Error::Config("t_jump must be positive".into()));
        }
        if self.sector_bytes != SECTOR_BYTES {
            return Err(Error::Config(format!(
                "sector size must be {SECTOR_BYTES} B, got {}",
                self.sector_bytes
            )));
        }
        if self.sectors_per_cluster == 0 {
            return Err(Error::Config("sectors_per_cluster must be >= 1".into()));
        }
        // Sector writes must map to whole nanoseconds so that all sums stay
        // exact integers.
        if (self.t_w_num * self.sector_bytes) % self.t_w_den != 0 {
            return Err(Error::Config(
                "t_w denominator must divide one sector's write time".into(),
            ));
        }
        // The jump response is "dozens of or even hundreds of times" a
        // sector write; enforce the lower bound.
        if self.jump_to_sector_write_ratio() < 10.0 {
            return Err(Error::Config(format!(
                "t_jump must be at least 10x a sector write (ratio {:.2})",
                self.jump_to_sector_write_ratio()
            )));
        }
        if self.volume_capacity == 0 || self.volume_capacity % self.cluster_bytes() != 0 {
            return Err(Error::Config(format!(
                "volume capacity {} is not a whole number of {}-byte clusters",
                self.volume_capacity,
                self.cluster_bytes()
            )));
        }
        Ok(self)
    }

    /// Bytes per cluster.
    pub fn cluster_bytes(&self) -> u64 {
        self.sector_bytes * self.sectors_per_cluster
    }

    /// Number of clusters in the data region.
    pub fn cluster_count(&self) -> u64 {
        self.volume_capacity / self.cluster_bytes()
    }

    /// How many times longer an address jump is than one sector write.
    pub fn jump_to_sector_write_ratio(&self) -> f64 {
        self.t_jump_ns as f64 / (self.sector_bytes as f64 * self.t_w_ns())
    }

    /// Per-byte write time as a float, for reporting only.
    pub fn t_w_ns(&self) -> f64 {
        self.t_w_num as f64 / self.t_w_den as f64
    }

    /// Raw medium write rate in decimal MB/s (no management overhead).
    pub fn medium_rate_mb_s(&self) -> f64 {
        1e9 / self.t_w_ns() / MB as f64
    }

    /// Duration of writing `bytes` bytes plus `jumps` address jumps.
    ///
    /// Exact integer nanoseconds. Every byte count the simulator charges is
    /// a whole number of sectors, so the rational product never truncates;
    /// the debug assertion guards that accounting invariant.
    #[inline]
    pub fn elapsed(&self, bytes: u64, jumps: u64) -> u64 {
        let prod = bytes as u128 * self.t_w_num as u128;
        debug_assert!(
            prod % self.t_w_den as u128 == 0,
            "non-integral write duration for {bytes} bytes"
        );
        let write_ns = prod / self.t_w_den as u128;
        let total = write_ns + jumps as u128 * self.t_jump_ns as u128;
        u64::try_from(total).expect("duration overflow: configuration out of range")
    }

    /// Time to write one full cluster of data, including its address jump.
    pub fn cluster_data_write_time(&self) -> u64 {
        self.elapsed(self.cluster_bytes(), 1)
    }

    /// Time to update both mirror FATs (one sector each).
    pub fn fat_update_time(&self) -> u64 {
        self.elapsed(2 * self.sector_bytes, 2)
    }

    /// Time to update the FDT (one sector).
    pub fn fdt_update_time(&self) -> u64 {
        self.elapsed(self.sector_bytes, 1)
    }

    /// Per-cluster management ratio of the plain scheme that flushes both
    /// FATs and the FDT after every cluster: 4 jumps against the pure byte
    /// time of one cluster.
    pub fn mu_per_cluster_original(&self) -> f64 {
        4.0 * self.t_jump_ns as f64 / (self.cluster_bytes() as f64 * self.t_w_ns())
    }
}
