//! Logical FAT file-system state: two mirrored FATs, one FDT, and the data
//! region, with dirty-sector tracking so strategies control when metadata
//! reaches the medium.
//!
//! Every mutation is accounted as a receipt of `(bytes, jumps)` that the
//! harness feeds through the timing model. Jump counting follows the write
//! head: a write run that does not continue the previous flash address costs
//! one jump. Data-write jumps are classified at the source:
//!
//! * [`DataJumpKind::Resume`] — the write would have continued the previous
//!   data run but a metadata write moved the head in between. This jump
//!   exists only because of file management and is charged to management
//!   time.
//! * [`DataJumpKind::Switch`] — a genuine change of data location (first
//!   write, another stream's region, fragmentation). Charged to data time.
//!
//! Metadata writes always pay one jump per contiguous dirty-sector run, per
//! FAT mirror. Reads are unmodeled unless `charge_read_jumps` is set, in
//! which case each read excursion costs one jump and moves the head.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::timing::{
    FlashTimingParams, FAT_ENTRIES_PER_SECTOR, FDT_ENTRIES_PER_SECTOR, SECTOR_BYTES,
};
use crate::{Error, Result};

/// FAT entry value for an unused cluster.
pub const FAT_FREE: u32 = u32::MAX;
/// FAT entry value terminating a chain.
pub const FAT_EOC: u32 = u32::MAX - 1;
/// Sectors reserved for the file directory table (1024 records).
pub const FDT_SECTORS: u64 = 64;

/// Receipt for a metadata write burst (flush, claim, release).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlushReceipt {
    pub bytes: u64,
    pub jumps: u64,
}

/// Classification of a data-write address jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataJumpKind {
    /// The run would have been contiguous; management moved the head.
    Resume,
    /// Genuine data-layout discontinuity.
    Switch,
}

/// Receipt for one data write run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataReceipt {
    pub bytes: u64,
    pub jump: Option<DataJumpKind>,
}

/// Monotone per-run counters of flash traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataCounters {
    pub data_bytes: u64,
    pub data_jumps: u64,
    pub fat_sector_writes: u64,
    pub fat_jumps: u64,
    pub fdt_sector_writes: u64,
    pub fdt_jumps: u64,
    pub prealloc_release_bytes: u64,
    pub fat_read_jumps: u64,
    pub fdt_read_jumps: u64,
}

/// One 32-byte directory record.
#[derive(Debug, Clone)]
pub struct FdtEntry {
    pub name: [u8; 11],
    pub size: u64,
    pub first_cluster: Option<u32>,
    pub open: bool,
}

/// Who holds a pre-allocation claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimOwner {
    /// Per-file claim (whole-free-space pre-allocation).
    File(usize),
    /// Session-wide claim (whole-FAT pre-allocation).
    Session,
}

/// A pre-allocated chain of clusters not yet consumed by data writes.
#[derive(Debug, Clone)]
struct Claim {
    owner: ClaimOwner,
    /// Unconsumed cluster ranges `[start, end)`, chained in order.
    segments: VecDeque<(u32, u32)>,
    last_consumed: Option<u32>,
}

impl Claim {
    fn remaining(&self) -> u64 {
        self.segments
            .iter()
            .map(|&(a, b)| (b - a) as u64)
            .sum::<u64>()
    }
}

/// Consistency violations reported by [`Volume::verify_consistency`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Violation {
    ChainCycle { cluster: u32 },
    ChainIntoFree { cluster: u32 },
    SizeMismatch { slot: usize, chain_clusters: u64, expected_clusters: u64 },
    EmptyFileShape { slot: usize },
    OccupancyMismatch { cluster: u32 },
    OrphanClusters { count: u64 },
    DirtyAfterRun { fat_sectors: usize, fdt_sectors: usize },
    OutstandingClaim,
    FileStillOpen { slot: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Word-packed occupancy bitmap over clusters.
#[derive(Debug, Clone)]
struct Bitmap {
    words: Vec<u64>,
    len: u64,
    ones: u64,
}

impl Bitmap {
    fn new(len: u64) -> Self {
        let words = vec![0u64; len.div_ceil(64) as usize];
        Bitmap { words, len, ones: 0 }
    }

    #[inline]
    fn get(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: u64) {
        let w = &mut self.words[(i / 64) as usize];
        let mask = 1u64 << (i % 64);
        if *w & mask == 0 {
            *w |= mask;
            self.ones += 1;
        }
    }

    #[inline]
    fn clear(&mut self, i: u64) {
        let w = &mut self.words[(i / 64) as usize];
        let mask = 1u64 << (i % 64);
        if *w & mask != 0 {
            *w &= !mask;
            self.ones -= 1;
        }
    }

    /// First zero bit at or after `from`, not wrapping.
    fn next_zero_from(&self, from: u64) -> Option<u64> {
        if from >= self.len {
            return None;
        }
        let mut wi = (from / 64) as usize;
        let mut masked = !self.words[wi] & (!0u64 << (from % 64));
        loop {
            if masked != 0 {
                let bit = wi as u64 * 64 + masked.trailing_zeros() as u64;
                return (bit < self.len).then_some(bit);
            }
            wi += 1;
            if wi >= self.words.len() {
                return None;
            }
            masked = !self.words[wi];
        }
    }
}

/// The mutable file-system state of one simulated medium.
#[derive(Debug, Clone)]
pub struct Volume {
    timing: FlashTimingParams,
    charge_read_jumps: bool,
    fat: Vec<u32>,
    occupancy: Bitmap,
    dirty_fat: BTreeSet<u32>,
    dirty_fdt: BTreeSet<u32>,
    fdt: Vec<FdtEntry>,
    claims: Vec<Claim>,
    /// Global flash sector address of the last write (or charged read).
    head: Option<u64>,
    /// End sector of the most recent data write.
    last_data_end: Option<u64>,
    counters: MetadataCounters,
    alloc_hint: u32,
}

impl Volume {
    /// Formats a fresh volume: every cluster FREE, empty FDT, zero counters.
    pub fn format(timing: FlashTimingParams, charge_read_jumps: bool) -> Result<Volume> {
        let timing = timing.validated()?;
        let clusters = timing.cluster_count();
        if clusters > (FAT_EOC - 1) as u64 {
            return Err(Error::Config(format!(
                "volume of {clusters} clusters exceeds the 4-byte FAT entry range"
            )));
        }
        Ok(Volume {
            timing,
            charge_read_jumps,
            fat: vec![FAT_FREE; clusters as usize],
            occupancy: Bitmap::new(clusters),
            dirty_fat: BTreeSet::new(),
            dirty_fdt: BTreeSet::new(),
            fdt: Vec::new(),
            claims: Vec::new(),
            head: None,
            last_data_end: None,
            counters: MetadataCounters::default(),
            alloc_hint: 0,
        })
    }

    pub fn timing(&self) -> &FlashTimingParams {
        &self.timing
    }

    pub fn counters(&self) -> &MetadataCounters {
        &self.counters
    }

    pub fn cluster_count(&self) -> u64 {
        self.fat.len() as u64
    }

    pub fn free_clusters(&self) -> u64 {
        self.cluster_count() - self.occupancy.ones
    }

    pub fn charges_read_jumps(&self) -> bool {
        self.charge_read_jumps
    }

    /// Sectors per FAT copy.
    pub fn fat_sectors(&self) -> u64 {
        self.cluster_count().div_ceil(FAT_ENTRIES_PER_SECTOR)
    }

    fn fat1_start(&self) -> u64 {
        self.fat_sectors()
    }

    fn fdt_start(&self) -> u64 {
        2 * self.fat_sectors()
    }

    fn data_start(&self) -> u64 {
        self.fdt_start() + FDT_SECTORS
    }

    fn fat_sector_of(&self, cluster: u32) -> u32 {
        (cluster as u64 / FAT_ENTRIES_PER_SECTOR) as u32
    }

    fn fdt_sector_of(&self, slot: usize) -> u32 {
        (slot as u64 / FDT_ENTRIES_PER_SECTOR) as u32
    }

    // ----- reads ---------------------------------------------------------

    /// Charges one FAT read excursion covering the entry of `cluster`.
    /// Returns the jumps charged (0 when reads are unmodeled).
    pub fn charge_fat_read(&mut self, cluster: u32) -> u64 {
        if !self.charge_read_jumps {
            return 0;
        }
        let sector = self.fat_sector_of(cluster) as u64;
        self.head = Some(sector);
        self.counters.fat_read_jumps += 1;
        1
    }

    /// Charges one sequential read pass over `sectors` FAT sectors starting
    /// at sector 0 (used by pre-scan and cached-freelist refills).
    pub fn charge_fat_scan(&mut self, last_sector: u64) -> u64 {
        if !self.charge_read_jumps {
            return 0;
        }
        self.head = Some(last_sector.min(self.fat_sectors().saturating_sub(1)));
        self.counters.fat_read_jumps += 1;
        1
    }

    /// Charges one FDT read excursion up to the sector of `slot`.
    pub fn charge_fdt_read(&mut self, slot: usize) -> u64 {
        if !self.charge_read_jumps {
            return 0;
        }
        self.head = Some(self.fdt_start() + self.fdt_sector_of(slot) as u64);
        self.counters.fdt_read_jumps += 1;
        1
    }

    // ----- allocation ----------------------------------------------------

    /// Lowest free cluster at or after `hint`, wrapping once.
    pub fn find_free_cluster(&self, hint: u32) -> Result<u32> {
        let n = self.cluster_count();
        let hint = (hint as u64).min(n.saturating_sub(1));
        if let Some(c) = self.occupancy.next_zero_from(hint) {
            return Ok(c as u32);
        }
        if let Some(c) = self.occupancy.next_zero_from(0) {
            if c < hint {
                return Ok(c as u32);
            }
        }
        Err(Error::VolumeFull)
    }

    /// Allocation hint shared by all sequential allocators.
    pub fn alloc_hint(&self) -> u32 {
        self.alloc_hint
    }

    /// Appends `next` to a chain: `FAT[next] = EOC`, `FAT[prev] = next`.
    /// Affected FAT sectors are marked dirty in both mirrors.
    pub fn link_cluster(&mut self, prev: Option<u32>, next: u32) -> Result<()> {
        let ni = next as usize;
        if ni >= self.fat.len() {
            return Err(Error::CorruptChain(next, "cluster out of range".into()));
        }
        if self.fat[ni] != FAT_FREE {
            return Err(Error::DoubleAllocate(next));
        }
        if let Some(p) = prev {
            let pi = p as usize;
            if pi >= self.fat.len() || self.fat[pi] == FAT_FREE {
                return Err(Error::CorruptChain(p, "previous cluster not allocated".into()));
            }
            if self.fat[pi] != FAT_EOC {
                return Err(Error::CorruptChain(p, "previous cluster is not a chain tail".into()));
            }
            self.fat[pi] = next;
            self.dirty_fat.insert(self.fat_sector_of(p));
        }
        self.fat[ni] = FAT_EOC;
        self.occupancy.set(next as u64);
        self.dirty_fat.insert(self.fat_sector_of(next));
        self.alloc_hint = next.saturating_add(1);
        Ok(())
    }

    // ----- flushes -------------------------------------------------------

    fn run_stats(sorted: impl IntoIterator<Item = u32>) -> (u64, u64, Option<u32>) {
        let mut sectors = 0u64;
        let mut runs = 0u64;
        let mut prev: Option<u32> = None;
        let mut last = None;
        for s in sorted {
            sectors += 1;
            if prev.map_or(true, |p| s != p + 1) {
                runs += 1;
            }
            prev = Some(s);
            last = Some(s);
        }
        (sectors, runs, last)
    }

    /// Writes every dirty FAT sector to both mirrors. Consecutive dirty
    /// sectors cost one jump (per mirror).
    pub fn flush_fat(&mut self) -> FlushReceipt {
        let dirty = std::mem::take(&mut self.dirty_fat);
        let (sectors, runs, last) = Self::run_stats(dirty);
        if sectors == 0 {
            return FlushReceipt::default();
        }
        let receipt = FlushReceipt {
            bytes: 2 * SECTOR_BYTES * sectors,
            jumps: 2 * runs,
        };
        self.counters.fat_sector_writes += 2 * sectors;
        self.counters.fat_jumps += 2 * runs;
        self.head = Some(self.fat1_start() + last.unwrap() as u64);
        receipt
    }

    /// Writes every dirty FDT sector (single copy).
    pub fn flush_fdt(&mut self) -> FlushReceipt {
        let dirty = std::mem::take(&mut self.dirty_fdt);
        let (sectors, runs, last) = Self::run_stats(dirty);
        if sectors == 0 {
            return FlushReceipt::default();
        }
        let receipt = FlushReceipt {
            bytes: SECTOR_BYTES * sectors,
            jumps: runs,
        };
        self.counters.fdt_sector_writes += sectors;
        self.counters.fdt_jumps += runs;
        self.head = Some(self.fdt_start() + last.unwrap() as u64);
        receipt
    }

    pub fn dirty_fat_sectors(&self) -> usize {
        self.dirty_fat.len()
    }

    pub fn dirty_fdt_sectors(&self) -> usize {
        self.dirty_fdt.len()
    }

    // ----- data region ---------------------------------------------------

    /// Writes `sectors` sectors into `cluster` starting at `sector_off`.
    pub fn write_data(&mut self, cluster: u32, sector_off: u64, sectors: u64) -> Result<DataReceipt> {
        if sectors == 0 {
            return Err(Error::Config("zero-byte data write".into()));
        }
        let ci = cluster as usize;
        if ci >= self.fat.len() || self.fat[ci] == FAT_FREE {
            return Err(Error::CorruptChain(cluster, "write into unallocated cluster".into()));
        }
        let c = self.timing.sectors_per_cluster;
        debug_assert!(sector_off + sectors <= c);
        let first = self.data_start() + cluster as u64 * c + sector_off;
        let last = first + sectors - 1;

        let jump = match self.head {
            None => None,
            Some(h) if first == h + 1 => None,
            Some(_) => {
                if self.last_data_end.map_or(false, |e| first == e + 1) {
                    Some(DataJumpKind::Resume)
                } else {
                    Some(DataJumpKind::Switch)
                }
            }
        };
        let bytes = sectors * SECTOR_BYTES;
        self.counters.data_bytes += bytes;
        if jump.is_some() {
            self.counters.data_jumps += 1;
        }
        self.head = Some(last);
        self.last_data_end = Some(last);
        Ok(DataReceipt { bytes, jump })
    }

    // ----- FDT records ---------------------------------------------------

    /// Creates a directory record (auto-named `Fnnnnnnn.BIN`), marking its
    /// sector dirty. Returns the slot index.
    pub fn create_file(&mut self) -> Result<usize> {
        let slot = self.fdt.len();
        if slot as u64 >= FDT_SECTORS * FDT_ENTRIES_PER_SECTOR {
            return Err(Error::FdtFull);
        }
        let mut name = *b"F0000000BIN";
        let digits = format!("{:07}", (slot + 1) % 10_000_000);
        name[1..8].copy_from_slice(digits.as_bytes());
        self.fdt.push(FdtEntry {
            name,
            size: 0,
            first_cluster: None,
            open: true,
        });
        self.dirty_fdt.insert(self.fdt_sector_of(slot));
        Ok(slot)
    }

    pub fn fdt_entries(&self) -> &[FdtEntry] {
        &self.fdt
    }

    /// Updates a record's size (and first cluster on first append).
    pub fn update_file(&mut self, slot: usize, size: u64, first_cluster: Option<u32>) {
        let e = &mut self.fdt[slot];
        e.size = size;
        e.first_cluster = first_cluster;
        self.dirty_fdt.insert(self.fdt_sector_of(slot));
    }

    /// Marks a record closed; the sector becomes dirty.
    pub fn close_file(&mut self, slot: usize) {
        self.fdt[slot].open = false;
        self.dirty_fdt.insert(self.fdt_sector_of(slot));
    }

    // ----- pre-allocation claims -----------------------------------------

    /// Chains every currently free cluster into one pre-allocated chain for
    /// `owner` and writes all touched FAT sectors immediately. The flush is
    /// one run per contiguous free range, per mirror.
    pub fn claim_all_free(&mut self, owner: ClaimOwner) -> Result<FlushReceipt> {
        let mut segments: VecDeque<(u32, u32)> = VecDeque::new();
        let n = self.cluster_count();
        let mut i = 0u64;
        while let Some(start) = self.occupancy.next_zero_from(i) {
            let mut end = start;
            while end < n && !self.occupancy.get(end) {
                end += 1;
            }
            segments.push_back((start as u32, end as u32));
            i = end;
        }
        if segments.is_empty() {
            return Err(Error::VolumeFull);
        }
        // Link all segments into one chain in index order.
        let flat_next = |segs: &VecDeque<(u32, u32)>, idx: usize| -> Option<u32> {
            segs.get(idx).map(|&(a, _)| a)
        };
        let mut sector_set: Vec<(u64, u64)> = Vec::new();
        for (si, &(a, b)) in segments.iter().enumerate() {
            for c in a..b {
                let next = if c + 1 < b {
                    c + 1
                } else {
                    flat_next(&segments, si + 1).unwrap_or(FAT_EOC)
                };
                self.fat[c as usize] = if next == FAT_EOC { FAT_EOC } else { next };
                self.occupancy.set(c as u64);
            }
            let s0 = a as u64 / FAT_ENTRIES_PER_SECTOR;
            let s1 = (b as u64 - 1) / FAT_ENTRIES_PER_SECTOR;
            sector_set.push((s0, s1));
        }
        let receipt = self.immediate_fat_write(&sector_set);
        self.claims.push(Claim {
            owner,
            segments,
            last_consumed: None,
        });
        Ok(receipt)
    }

    /// Immediate FAT write over inclusive sector ranges (merged), both
    /// mirrors, bypassing the dirty set.
    fn immediate_fat_write(&mut self, ranges: &[(u64, u64)]) -> FlushReceipt {
        let mut merged: Vec<(u64, u64)> = Vec::new();
        let mut sorted = ranges.to_vec();
        sorted.sort_unstable();
        for (a, b) in sorted {
            match merged.last_mut() {
                Some((_, pb)) if a <= *pb + 1 => *pb = (*pb).max(b),
                _ => merged.push((a, b)),
            }
        }
        let sectors: u64 = merged.iter().map(|&(a, b)| b - a + 1).sum();
        let runs = merged.len() as u64;
        if sectors == 0 {
            return FlushReceipt::default();
        }
        self.counters.fat_sector_writes += 2 * sectors;
        self.counters.fat_jumps += 2 * runs;
        self.head = Some(self.fat1_start() + merged.last().unwrap().1);
        FlushReceipt {
            bytes: 2 * SECTOR_BYTES * sectors,
            jumps: 2 * runs,
        }
    }

    fn claim_idx(&self, owner: ClaimOwner) -> Option<usize> {
        self.claims.iter().position(|c| c.owner == owner)
    }

    pub fn has_claim(&self, owner: ClaimOwner) -> bool {
        self.claim_idx(owner).is_some()
    }

    /// Hands the next pre-allocated cluster of `owner`'s claim to the caller.
    pub fn consume_claim(&mut self, owner: ClaimOwner) -> Option<u32> {
        let idx = self.claim_idx(owner)?;
        let claim = &mut self.claims[idx];
        let &(a, b) = claim.segments.front()?;
        claim.last_consumed = Some(a);
        if a + 1 < b {
            *claim.segments.front_mut().unwrap() = (a + 1, b);
        } else {
            claim.segments.pop_front();
        }
        Some(a)
    }

    /// Splits the largest outstanding claim, transferring the unconsumed
    /// back half to `thief`. One boundary entry is rewritten (the donor's
    /// new tail becomes EOC), flushed immediately.
    pub fn split_largest_claim_for(&mut self, thief: ClaimOwner) -> Result<FlushReceipt> {
        let donor_idx = self
            .claims
            .iter()
            .enumerate()
            .max_by_key(|(_, c)| c.remaining())
            .map(|(i, _)| i)
            .filter(|&i| self.claims[i].remaining() >= 2)
            .ok_or(Error::VolumeFull)?;
        let take = self.claims[donor_idx].remaining() / 2;
        let mut stolen: VecDeque<(u32, u32)> = VecDeque::new();
        let mut need = take;
        while need > 0 {
            let (a, b) = *self.claims[donor_idx].segments.back().unwrap();
            let len = (b - a) as u64;
            if len <= need {
                stolen.push_front((a, b));
                self.claims[donor_idx].segments.pop_back();
                need -= len;
            } else {
                let cut = b - need as u32;
                *self.claims[donor_idx].segments.back_mut().unwrap() = (a, cut);
                stolen.push_front((cut, b));
                need = 0;
            }
        }
        // The donor's new last unconsumed cluster must terminate its chain.
        let boundary = match self.claims[donor_idx].segments.back() {
            Some(&(_, b)) => b - 1,
            // Donor fully consumed its kept part; cut at the last consumed.
            None => self.claims[donor_idx].last_consumed.ok_or(Error::VolumeFull)?,
        };
        self.fat[boundary as usize] = FAT_EOC;
        let s = boundary as u64 / FAT_ENTRIES_PER_SECTOR;
        let receipt = self.immediate_fat_write(&[(s, s)]);
        if self.claims[donor_idx].segments.is_empty() {
            self.claims.remove(donor_idx);
        }
        self.claims.push(Claim {
            owner: thief,
            segments: stolen,
            last_consumed: None,
        });
        Ok(receipt)
    }

    /// Releases the unconsumed remainder of `owner`'s claim back to FREE and
    /// seals the consumed chain with EOC. Returns the release receipt; the
    /// freed byte volume is tracked in `prealloc_release_bytes`.
    pub fn release_claim(&mut self, owner: ClaimOwner) -> FlushReceipt {
        let Some(idx) = self.claim_idx(owner) else {
            return FlushReceipt::default();
        };
        let claim = self.claims.remove(idx);
        let mut ranges: Vec<(u64, u64)> = Vec::new();
        for &(a, b) in &claim.segments {
            for c in a..b {
                self.fat[c as usize] = FAT_FREE;
                self.occupancy.clear(c as u64);
            }
            ranges.push((
                a as u64 / FAT_ENTRIES_PER_SECTOR,
                (b as u64 - 1) / FAT_ENTRIES_PER_SECTOR,
            ));
        }
        if let Some(last) = claim.last_consumed {
            self.fat[last as usize] = FAT_EOC;
            let s = last as u64 / FAT_ENTRIES_PER_SECTOR;
            ranges.push((s, s));
        }
        if ranges.is_empty() {
            return FlushReceipt::default();
        }
        let receipt = self.immediate_fat_write(&ranges);
        self.counters.prealloc_release_bytes += receipt.bytes;
        receipt
    }

    /// Seals per-file chain boundaries inside a session-wide claim and
    /// releases the remainder. `boundaries` are the last clusters of each
    /// file carved from the session chain.
    pub fn finalize_session_claim(&mut self, boundaries: &[u32]) -> FlushReceipt {
        let mut ranges: Vec<(u64, u64)> = Vec::new();
        for &b in boundaries {
            self.fat[b as usize] = FAT_EOC;
            let s = b as u64 / FAT_ENTRIES_PER_SECTOR;
            ranges.push((s, s));
        }
        let Some(idx) = self.claim_idx(ClaimOwner::Session) else {
            if ranges.is_empty() {
                return FlushReceipt::default();
            }
            let receipt = self.immediate_fat_write(&ranges);
            self.counters.prealloc_release_bytes += receipt.bytes;
            return receipt;
        };
        let claim = self.claims.remove(idx);
        for &(a, b) in &claim.segments {
            for c in a..b {
                self.fat[c as usize] = FAT_FREE;
                self.occupancy.clear(c as u64);
            }
            ranges.push((
                a as u64 / FAT_ENTRIES_PER_SECTOR,
                (b as u64 - 1) / FAT_ENTRIES_PER_SECTOR,
            ));
        }
        if ranges.is_empty() {
            return FlushReceipt::default();
        }
        let receipt = self.immediate_fat_write(&ranges);
        self.counters.prealloc_release_bytes += receipt.bytes;
        receipt
    }

    pub fn outstanding_claims(&self) -> usize {
        self.claims.len()
    }

    /// Points an existing chain tail at the head of a pre-linked claim
    /// segment. The tail's sector becomes dirty (flushed per policy).
    pub fn graft_chain(&mut self, prev: u32, head: u32) -> Result<()> {
        let pi = prev as usize;
        if pi >= self.fat.len() || self.fat[pi] != FAT_EOC {
            return Err(Error::CorruptChain(prev, "graft target is not a chain tail".into()));
        }
        self.fat[pi] = head;
        self.dirty_fat.insert(self.fat_sector_of(prev));
        Ok(())
    }

    /// Rewrites one link inside a session-wide pre-allocated chain without
    /// charging traffic: the fixed layout is presumed planned before the
    /// session, so consumption order was already encoded in the claim.
    pub fn relink_preallocated(&mut self, prev: u32, next: u32) {
        if self.fat[prev as usize] != next {
            self.fat[prev as usize] = next;
        }
    }

    // ----- verification ---------------------------------------------------

    /// Checks chain acyclicity, occupancy/FAT agreement, FDT size versus
    /// chain length for closed files, and post-run cleanliness. Violations
    /// are data, not faults.
    pub fn verify_consistency(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let n = self.cluster_count();
        let mut visited = Bitmap::new(n);

        for (slot, e) in self.fdt.iter().enumerate() {
            if e.open {
                v.push(Violation::FileStillOpen { slot });
            }
            match (e.first_cluster, e.size) {
                (None, 0) => continue,
                (None, _) | (Some(_), 0) => {
                    v.push(Violation::EmptyFileShape { slot });
                    continue;
                }
                (Some(first), size) => {
                    let mut len = 0u64;
                    let mut c = first;
                    loop {
                        if c as u64 >= n || self.fat[c as usize] == FAT_FREE {
                            v.push(Violation::ChainIntoFree { cluster: c });
                            break;
                        }
                        if visited.get(c as u64) {
                            v.push(Violation::ChainCycle { cluster: c });
                            break;
                        }
                        visited.set(c as u64);
                        len += 1;
                        match self.fat[c as usize] {
                            FAT_EOC => break,
                            next => c = next,
                        }
                        if len > n {
                            v.push(Violation::ChainCycle { cluster: c });
                            break;
                        }
                    }
                    let expected = size.div_ceil(self.timing.cluster_bytes());
                    if len != expected && !e.open {
                        v.push(Violation::SizeMismatch {
                            slot,
                            chain_clusters: len,
                            expected_clusters: expected,
                        });
                    }
                }
            }
        }

        let mut occupied = 0u64;
        for c in 0..n {
            let in_fat = self.fat[c as usize] != FAT_FREE;
            if in_fat {
                occupied += 1;
            }
            if in_fat != self.occupancy.get(c) {
                v.push(Violation::OccupancyMismatch { cluster: c as u32 });
                if v.len() > 32 {
                    return v;
                }
            }
        }
        if visited.ones != occupied && self.claims.is_empty() {
            v.push(Violation::OrphanClusters {
                count: occupied.abs_diff(visited.ones),
            });
        }
        if !self.claims.is_empty() {
            v.push(Violation::OutstandingClaim);
        }
        if !self.dirty_fat.is_empty() || !self.dirty_fdt.is_empty() {
            v.push(Violation::DirtyAfterRun {
                fat_sectors: self.dirty_fat.len(),
                fdt_sectors: self.dirty_fdt.len(),
            });
        }
        v
    }

    /// Debug dump: run-length-encoded FAT, FDT records, counters.
    pub fn dump_json(&self) -> serde_json::Value {
        let mut rle: Vec<(u64, u64, i64)> = Vec::new();
        let encode = |v: u32| -> i64 {
            match v {
                FAT_FREE => -1,
                FAT_EOC => -2,
                next => next as i64,
            }
        };
        let mut i = 0usize;
        while i < self.fat.len() {
            // Free and EOC runs compress; chain links compress when they
            // form the sequential pattern c -> c+1.
            let start = i;
            let val = self.fat[i];
            let mut len = 1usize;
            if val == FAT_FREE || val == FAT_EOC {
                while i + len < self.fat.len() && self.fat[i + len] == val {
                    len += 1;
                }
                rle.push((start as u64, len as u64, encode(val)));
            } else {
                while i + len < self.fat.len()
                    && self.fat[i + len] == (i + len + 1) as u32
                    && self.fat[i + len - 1] == (i + len) as u32
                {
                    len += 1;
                }
                rle.push((start as u64, len as u64, i64::MIN));
            }
            i += len;
        }
        json!({
            "clusters": self.cluster_count(),
            "fat_rle": rle,
            "fdt": self.fdt.iter().map(|e| json!({
                "name": String::from_utf8_lossy(&e.name),
                "size": e.size,
                "first_cluster": e.first_cluster,
                "open": e.open,
            })).collect::<Vec<_>>(),
            "counters": self.counters,
            "free_clusters": self.free_clusters(),
        })
    }

    #[cfg(test)]
    pub(crate) fn poke_fat(&mut self, cluster: u32, value: u32) {
        self.fat[cluster as usize] = value;
        if value == FAT_FREE {
            self.occupancy.clear(cluster as u64);
        } else {
            self.occupancy.set(cluster as u64);
        }
    }
}
