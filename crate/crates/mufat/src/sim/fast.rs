//! Closed-form simulation for a single periodic stream.
//!
//! With one periodic stream and a drop-free cache, the receipt sequence is
//! fully determined by the file sizes and the strategy — packet timing
//! never matters. This path computes the same byte/jump totals the event
//! engine would produce, in O(files + flush events) integer arithmetic, so
//! oracle labeling can run hundreds of strategies per sample in
//! microseconds. Any discrepancy from the event engine is a bug; the
//! equivalence suite compares the two bit for bit.

use crate::sim::engine::RunConfig;
use crate::sim::report::SimulationReport;
use crate::strategy::{
    Charges, DataWrite, FatQuery, FatUpdate, FdtQuery, FdtUpdate, StrategyTuple,
    CACHED_REFILL_ENTRIES,
};
use crate::timing::{FAT_ENTRIES_PER_SECTOR, FDT_ENTRIES_PER_SECTOR, SECTOR_BYTES};
use crate::volume::MetadataCounters;
use crate::workload::Arrival;
use crate::{Error, Result};

/// The closed forms cover one periodic stream with a cache that can never
/// drop (per-packet FDT flushing interleaves with packet boundaries and is
/// left to the event engine).
pub(crate) fn eligible(cfg: &RunConfig, tuples: &[StrategyTuple]) -> bool {
    cfg.workload.streams.len() == 1
        && cfg.workload.streams[0].arrival == Arrival::Periodic
        && cfg.workload.cache_bytes_per_stream >= cfg.workload.streams[0].total_bytes
        && tuples[0].fdt_update != FdtUpdate::PerPacket
        && matches!(
            tuples[0].data_write,
            DataWrite::PerSector | DataWrite::PerCluster | DataWrite::Burst(_)
        )
}

struct Emit {
    charges: Charges,
    counters: MetadataCounters,
    read_charged: bool,
}

impl Emit {
    fn fat_flush(&mut self, sectors: u64, runs: u64, setup: bool, release: bool) {
        if sectors == 0 {
            return;
        }
        let bytes = 2 * SECTOR_BYTES * sectors;
        if setup {
            self.charges.setup_bytes += bytes;
            self.charges.setup_jumps += 2 * runs;
        } else {
            self.charges.mgmt_bytes += bytes;
            self.charges.mgmt_jumps += 2 * runs;
        }
        self.counters.fat_sector_writes += 2 * sectors;
        self.counters.fat_jumps += 2 * runs;
        if release {
            self.counters.prealloc_release_bytes += bytes;
        }
    }

    fn fdt_flush(&mut self, sectors: u64, runs: u64) {
        if sectors == 0 {
            return;
        }
        self.charges.mgmt_bytes += SECTOR_BYTES * sectors;
        self.charges.mgmt_jumps += runs;
        self.counters.fdt_sector_writes += sectors;
        self.counters.fdt_jumps += runs;
    }

    fn fat_reads(&mut self, n: u64) {
        if self.read_charged && n > 0 {
            self.charges.mgmt_jumps += n;
            self.counters.fat_read_jumps += n;
        }
    }

    fn fdt_reads(&mut self, n: u64) {
        if self.read_charged && n > 0 {
            self.charges.mgmt_jumps += n;
            self.counters.fdt_read_jumps += n;
        }
    }

    fn data_bytes(&mut self, bytes: u64) {
        self.charges.data_bytes += bytes;
        self.counters.data_bytes += bytes;
    }

    fn data_jumps(&mut self, n: u64) {
        self.charges.mgmt_jumps += n;
        self.counters.data_jumps += n;
    }
}

/// Multiples of `m` in the closed interval `[a, b]`, `a >= 1`.
fn multiples_in(m: u64, a: u64, b: u64) -> u64 {
    debug_assert!(a >= 1);
    if b < a {
        return 0;
    }
    b / m - (a - 1) / m
}

pub(crate) fn run_fast(cfg: &RunConfig, tuples: &[StrategyTuple]) -> Result<SimulationReport> {
    let t = tuples[0];
    let s = &cfg.workload.streams[0];
    let timing = cfg.timing;
    let spc = timing.sectors_per_cluster;
    let fat_eps = FAT_ENTRIES_PER_SECTOR;
    let n_cap = timing.cluster_count();
    let file_count = s.total_bytes.div_ceil(s.file_bytes);

    // Per-file geometry: (bytes, sectors written, clusters, base cluster).
    let mut files: Vec<(u64, u64, u64, u64)> = Vec::with_capacity(file_count as usize);
    let mut base = 0u64;
    for i in 0..file_count {
        let bytes = if i + 1 == file_count {
            s.total_bytes - i * s.file_bytes
        } else {
            s.file_bytes
        };
        let sectors = bytes.div_ceil(SECTOR_BYTES);
        let clusters = sectors.div_ceil(spc);
        files.push((bytes, sectors, clusters, base));
        base += clusters;
    }
    let n_total = base;
    if n_total > n_cap {
        return Err(Error::VolumeFull);
    }

    let mut e = Emit {
        charges: Charges::default(),
        counters: MetadataCounters::default(),
        read_charged: cfg.charge_read_jumps,
    };
    let r = cfg.charge_read_jumps;

    // ----- reads ----------------------------------------------------------
    if t.fdt_query == FdtQuery::ScanOnDemand {
        e.fdt_reads(file_count);
    }
    // Pre-allocating modes consume their claim; only the mount-time
    // pre-scan is charged for them.
    let prealloc = matches!(t.fat_update, FatUpdate::FilePrealloc | FatUpdate::FullPrealloc);
    match t.fat_query {
        FatQuery::ScanOnDemand if !prealloc => e.fat_reads(n_total),
        FatQuery::CachedFreelist if !prealloc => {
            e.fat_reads(n_total.div_ceil(CACHED_REFILL_ENTRIES))
        }
        FatQuery::PrescanAll => e.fat_reads(1),
        _ => {}
    }

    // ----- data -----------------------------------------------------------
    for &(_, sectors, _, _) in &files {
        e.data_bytes(sectors * SECTOR_BYTES);
    }

    // ----- FAT traffic ----------------------------------------------------
    match t.fat_update {
        FatUpdate::PerCluster => {
            for &(_, sectors, clusters, fbase) in &files {
                let complete = sectors / spc;
                // Completion flush after each complete cluster: one sector,
                // plus the previous link's sector at 128-entry crossings.
                let crossings = if complete >= 2 {
                    multiples_in(fat_eps, fbase + 1, fbase + complete - 1)
                } else {
                    0
                };
                e.fat_flush(complete + crossings, complete, false, false);
                // Close-time flush covers a trailing partial cluster's link.
                if sectors % spc != 0 {
                    let g_last = fbase + clusters - 1;
                    let two = clusters >= 2 && g_last % fat_eps == 0;
                    e.fat_flush(1 + u64::from(two), 1, false, false);
                }
            }
        }
        FatUpdate::BatchDeferred(n) => {
            let n = n as u64;
            let mut flushed_files = 0u64;
            let emit_range = |e: &mut Emit, lo_file: u64, hi_file: u64| {
                let (_, _, clusters, fbase) = files[hi_file as usize];
                let lo_sector = files[lo_file as usize].3 / fat_eps;
                let hi_sector = (fbase + clusters - 1) / fat_eps;
                e.fat_flush(hi_sector - lo_sector + 1, 1, false, false);
            };
            let mut k = n;
            while k <= file_count {
                emit_range(&mut e, k - n, k - 1);
                flushed_files = k;
                k += n;
            }
            if flushed_files < file_count {
                emit_range(&mut e, flushed_files, file_count - 1);
            }
        }
        FatUpdate::FilePrealloc => {
            let hi = (n_cap - 1) / fat_eps;
            for &(_, _, clusters, fbase) in &files {
                // Claim every free cluster, one contiguous run.
                e.fat_flush(hi - fbase / fat_eps + 1, 1, false, false);
                // Release the unconsumed tail, sealed at the last cluster.
                let g_last = fbase + clusters - 1;
                e.fat_flush(hi - g_last / fat_eps + 1, 1, false, true);
            }
        }
        FatUpdate::FullPrealloc => {
            // One whole-FAT claim per session, finalized at the end.
            e.fat_flush((n_cap - 1) / fat_eps + 1, 1, true, false);
            let mut ranges: Vec<(u64, u64)> = files
                .iter()
                .map(|&(_, _, clusters, fbase)| {
                    let sec = (fbase + clusters - 1) / fat_eps;
                    (sec, sec)
                })
                .collect();
            if n_total < n_cap {
                ranges.push((n_total / fat_eps, (n_cap - 1) / fat_eps));
            }
            ranges.sort_unstable();
            let mut merged: Vec<(u64, u64)> = Vec::new();
            for (a, b) in ranges {
                match merged.last_mut() {
                    Some((_, pb)) if a <= *pb + 1 => *pb = (*pb).max(b),
                    _ => merged.push((a, b)),
                }
            }
            let sectors: u64 = merged.iter().map(|&(a, b)| b - a + 1).sum();
            e.fat_flush(sectors, merged.len() as u64, true, true);
        }
    }

    // ----- FDT traffic ----------------------------------------------------
    match t.fdt_update {
        FdtUpdate::PerCluster => {
            for &(_, sectors, _, _) in &files {
                e.fdt_flush(sectors / spc, sectors / spc);
                e.fdt_flush(1, 1); // close
            }
        }
        FdtUpdate::PerFileClose | FdtUpdate::PerPacket => {
            for _ in &files {
                e.fdt_flush(1, 1);
            }
        }
        FdtUpdate::BatchDeferred(m) => {
            let m = m as u64;
            let mut flushed = 0u64;
            let emit_slots = |e: &mut Emit, lo: u64, hi: u64| {
                let lo_sector = lo / FDT_ENTRIES_PER_SECTOR;
                let hi_sector = hi / FDT_ENTRIES_PER_SECTOR;
                e.fdt_flush(hi_sector - lo_sector + 1, 1);
            };
            let mut k = m;
            while k <= file_count {
                emit_slots(&mut e, k - m, k - 1);
                flushed = k;
                k += m;
            }
            if flushed < file_count {
                emit_slots(&mut e, flushed, file_count - 1);
            }
        }
    }

    // ----- data jumps -----------------------------------------------------
    // Jumps happen where management activity moved the head between two
    // data writes, or where the data layout itself breaks (a file whose
    // written sectors do not fill its clusters).
    let per_cluster_seam = t.fat_update == FatUpdate::PerCluster
        || t.fdt_update == FdtUpdate::PerCluster
        || (r && !prealloc && t.fat_query == FatQuery::ScanOnDemand);

    // First write of the run: jumps only if something already moved the
    // head. Every charged query mode reads at or before the first
    // allocation, and pre-allocation claims always write the FAT first.
    let g0 = r || matches!(t.fat_update, FatUpdate::FilePrealloc | FatUpdate::FullPrealloc);
    if g0 {
        e.data_jumps(1);
    }

    for (i, &(_, sectors, clusters, fbase)) in files.iter().enumerate() {
        // Intra-file seams.
        if clusters >= 2 {
            if per_cluster_seam {
                e.data_jumps(clusters - 1);
            } else if r && !prealloc && t.fat_query == FatQuery::CachedFreelist {
                e.data_jumps(multiples_in(
                    CACHED_REFILL_ENTRIES,
                    fbase + 1,
                    fbase + clusters - 1,
                ));
            }
        }
        // Gap to the next file.
        if (i as u64) + 1 == file_count {
            break;
        }
        let aligned = sectors == clusters * spc;
        let k = i as u64 + 1; // 1-based close index
        // Per-cluster FAT upkeep always writes after the file's last data:
        // the completion flush when the final cluster fills exactly, the
        // close-time flush otherwise.
        let close_group = t.fat_update == FatUpdate::PerCluster
            || matches!(t.fat_update, FatUpdate::BatchDeferred(n) if k % n as u64 == 0)
            || t.fat_update == FatUpdate::FilePrealloc
            || matches!(t.fdt_update, FdtUpdate::PerCluster | FdtUpdate::PerFileClose)
            || matches!(t.fdt_update, FdtUpdate::BatchDeferred(m) if k % m as u64 == 0);
        let next_base = fbase + clusters;
        let open_group = (r && t.fdt_query == FdtQuery::ScanOnDemand)
            || t.fat_update == FatUpdate::FilePrealloc
            || (r && !prealloc && t.fat_query == FatQuery::ScanOnDemand)
            || (r
                && !prealloc
                && t.fat_query == FatQuery::CachedFreelist
                && next_base % CACHED_REFILL_ENTRIES == 0);
        if !aligned || close_group || open_group {
            e.data_jumps(1);
        }
    }

    let data_ns = timing.elapsed(e.charges.data_bytes, 0);
    if data_ns == 0 {
        return Err(Error::Config("no data reached the medium: mu undefined".into()));
    }

    Ok(SimulationReport::from_charges(
        &timing,
        &e.charges,
        e.counters,
        0,
        file_count,
        vec![t.to_string()],
        cfg.seed,
        true,
        cfg.charge_read_jumps,
    ))
}
