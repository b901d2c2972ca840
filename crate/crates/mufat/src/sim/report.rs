use serde::{Deserialize, Serialize};

use crate::strategy::Charges;
use crate::timing::FlashTimingParams;
use crate::volume::MetadataCounters;

/// Result of one simulation run.
///
/// Time decomposes exactly: `total_ns == data_ns + mgmt_ns`, where data
/// time is the pure byte-writing time and management time carries all
/// FAT/FDT/pre-allocation traffic plus every address jump, data-write
/// jumps included.
/// `setup_ns` holds session-scoped preparation (the whole-FAT claim and its
/// final release) that happens outside the storage phase and is excluded
/// from `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub total_ns: u64,
    pub data_ns: u64,
    pub mgmt_ns: u64,
    pub setup_ns: u64,
    /// Management-to-data time ratio.
    pub mu: f64,
    /// Effective storage rate in decimal MB/s: medium rate over (mu + 1).
    pub effective_mb_s: f64,
    pub counters: MetadataCounters,
    pub overflow_events: u64,
    pub files_written: u64,
    /// Canonical strategy string per stream.
    pub strategies: Vec<String>,
    pub seed: u64,
    pub fast_path_used: bool,
    pub charge_read_jumps: bool,
}

impl SimulationReport {
    pub(crate) fn from_charges(
        timing: &FlashTimingParams,
        charges: &Charges,
        counters: MetadataCounters,
        overflow_events: u64,
        files_written: u64,
        strategies: Vec<String>,
        seed: u64,
        fast_path_used: bool,
        charge_read_jumps: bool,
    ) -> SimulationReport {
        let data_ns = timing.elapsed(charges.data_bytes, 0);
        let mgmt_ns = timing.elapsed(charges.mgmt_bytes, charges.mgmt_jumps);
        let setup_ns = timing.elapsed(charges.setup_bytes, charges.setup_jumps);
        let mu = mgmt_ns as f64 / data_ns as f64;
        SimulationReport {
            total_ns: data_ns + mgmt_ns,
            data_ns,
            mgmt_ns,
            setup_ns,
            mu,
            effective_mb_s: timing.medium_rate_mb_s() / (mu + 1.0),
            counters,
            overflow_events,
            files_written,
            strategies,
            seed,
            fast_path_used,
            charge_read_jumps,
        }
    }
}
