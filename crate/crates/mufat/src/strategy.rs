//! The five-dimensional file-management strategy space, the four named
//! baseline presets, and the per-stream driver that executes a strategy
//! against a [`Volume`] through open / packet / close hooks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::timing::SECTOR_BYTES;
use crate::volume::{ClaimOwner, DataReceipt, FlushReceipt, Volume};
use crate::workload::WorkloadSpec;
use crate::{Error, Result};

/// How free clusters are located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FatQuery {
    /// Read the FAT around the allocation point on every allocation.
    ScanOnDemand,
    /// Keep an in-memory free list, refilled by reading a block of FAT
    /// sectors (1024 entries per excursion).
    CachedFreelist,
    /// One sequential FAT pass at mount builds the whole free list.
    PrescanAll,
}

/// When FAT mutations are written back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FatUpdate {
    /// Flush after every cluster.
    PerCluster,
    /// Claim the whole free space for the file at open, release at close.
    FilePrealloc,
    /// Claim the whole FAT once per session (requires pre-scan).
    FullPrealloc,
    /// Accumulate dirt; flush after every n file closes.
    BatchDeferred(u8),
}

/// How directory lookups are served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FdtQuery {
    /// Read the FDT on every file open.
    ScanOnDemand,
    /// In-memory directory mirror.
    CachedDir,
}

/// When FDT mutations are written back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FdtUpdate {
    PerCluster,
    PerPacket,
    PerFileClose,
    BatchDeferred(u8),
}

/// Granularity of data-region writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DataWrite {
    /// Write sectors as soon as packets provide them.
    PerSector,
    /// Accumulate one cluster, then write it.
    PerCluster,
    /// Accumulate k clusters, then write the burst as one run.
    Burst(u8),
}

/// One point of the strategy space Y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct StrategyTuple {
    pub fat_query: FatQuery,
    pub fat_update: FatUpdate,
    pub fdt_query: FdtQuery,
    pub fdt_update: FdtUpdate,
    pub data_write: DataWrite,
}

/// The four baseline presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselinePreset {
    OriginalFat,
    Acpa,
    Fpfqa,
    Fpfpa,
}

impl BaselinePreset {
    pub const ALL: [BaselinePreset; 4] = [
        BaselinePreset::OriginalFat,
        BaselinePreset::Acpa,
        BaselinePreset::Fpfqa,
        BaselinePreset::Fpfpa,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BaselinePreset::OriginalFat => "original_fat",
            BaselinePreset::Acpa => "acpa",
            BaselinePreset::Fpfqa => "fpfqa",
            BaselinePreset::Fpfpa => "fpfpa",
        }
    }

    pub fn from_name(name: &str) -> Option<BaselinePreset> {
        Self::ALL.iter().copied().find(|p| p.name() == name)
    }
}

/// Fixed tuple of each baseline.
pub fn preset(name: BaselinePreset) -> StrategyTuple {
    match name {
        BaselinePreset::OriginalFat => StrategyTuple {
            fat_query: FatQuery::ScanOnDemand,
            fat_update: FatUpdate::PerCluster,
            fdt_query: FdtQuery::ScanOnDemand,
            fdt_update: FdtUpdate::PerCluster,
            data_write: DataWrite::PerCluster,
        },
        BaselinePreset::Acpa => StrategyTuple {
            fat_query: FatQuery::PrescanAll,
            fat_update: FatUpdate::FilePrealloc,
            fdt_query: FdtQuery::CachedDir,
            fdt_update: FdtUpdate::PerFileClose,
            data_write: DataWrite::PerCluster,
        },
        BaselinePreset::Fpfqa => StrategyTuple {
            fat_query: FatQuery::PrescanAll,
            fat_update: FatUpdate::FullPrealloc,
            fdt_query: FdtQuery::CachedDir,
            fdt_update: FdtUpdate::PerFileClose,
            data_write: DataWrite::Burst(8),
        },
        BaselinePreset::Fpfpa => StrategyTuple {
            fat_query: FatQuery::CachedFreelist,
            fat_update: FatUpdate::BatchDeferred(16),
            fdt_query: FdtQuery::CachedDir,
            fdt_update: FdtUpdate::BatchDeferred(16),
            data_write: DataWrite::PerCluster,
        },
    }
}

impl StrategyTuple {
    /// Validates parameter ranges and the pre-scan prerequisite of
    /// whole-FAT pre-allocation.
    pub fn validated(self) -> Result<Self> {
        if let FatUpdate::BatchDeferred(n) = self.fat_update {
            if !(1..=64).contains(&n) {
                return Err(Error::Config(format!("fat batch size {n} out of 1..=64")));
            }
        }
        if let FdtUpdate::BatchDeferred(n) = self.fdt_update {
            if !(1..=64).contains(&n) {
                return Err(Error::Config(format!("fdt batch size {n} out of 1..=64")));
            }
        }
        if let DataWrite::Burst(k) = self.data_write {
            if !(1..=32).contains(&k) {
                return Err(Error::Config(format!("burst size {k} out of 1..=32")));
            }
        }
        if self.fat_update == FatUpdate::FullPrealloc && self.fat_query != FatQuery::PrescanAll {
            return Err(Error::Config(
                "full pre-allocation requires the pre-scan query method".into(),
            ));
        }
        Ok(self)
    }
}

/// Whether `tuple` can run `workload`. Whole-FAT pre-allocation needs a
/// fixed storage pattern: it is ruled out when two or more streams
/// interleave in non-deterministic order.
pub fn applicable(tuple: &StrategyTuple, workload: &WorkloadSpec) -> bool {
    if tuple.fat_update != FatUpdate::FullPrealloc {
        return true;
    }
    let nondeterministic = workload.streams.iter().any(|s| s.arrival.is_random());
    !(workload.streams.len() >= 2 && nondeterministic)
}

impl fmt::Display for StrategyTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let fatq = match self.fat_query {
            FatQuery::ScanOnDemand => "scan",
            FatQuery::CachedFreelist => "cached",
            FatQuery::PrescanAll => "prescan",
        };
        let fatu = match self.fat_update {
            FatUpdate::PerCluster => "per_cluster".to_string(),
            FatUpdate::FilePrealloc => "file_prealloc".to_string(),
            FatUpdate::FullPrealloc => "full_prealloc".to_string(),
            FatUpdate::BatchDeferred(n) => format!("batch{n}"),
        };
        let fdtq = match self.fdt_query {
            FdtQuery::ScanOnDemand => "scan",
            FdtQuery::CachedDir => "cached",
        };
        let fdtu = match self.fdt_update {
            FdtUpdate::PerCluster => "per_cluster".to_string(),
            FdtUpdate::PerPacket => "per_packet".to_string(),
            FdtUpdate::PerFileClose => "close".to_string(),
            FdtUpdate::BatchDeferred(n) => format!("batch{n}"),
        };
        let data = match self.data_write {
            DataWrite::PerSector => "per_sector".to_string(),
            DataWrite::PerCluster => "per_cluster".to_string(),
            DataWrite::Burst(k) => format!("burst{k}"),
        };
        write!(f, "fatq={fatq},fatu={fatu},fdtq={fdtq},fdtu={fdtu},data={data}")
    }
}

impl FromStr for StrategyTuple {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut fatq = None;
        let mut fatu = None;
        let mut fdtq = None;
        let mut fdtu = None;
        let mut data = None;
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad strategy token `{part}`")))?;
            let bad = || Error::Config(format!("bad strategy value `{part}`"));
            match key.trim() {
                "fatq" => {
                    fatq = Some(match value {
                        "scan" => FatQuery::ScanOnDemand,
                        "cached" => FatQuery::CachedFreelist,
                        "prescan" => FatQuery::PrescanAll,
                        _ => return Err(bad()),
                    })
                }
                "fatu" => {
                    fatu = Some(match value {
                        "per_cluster" => FatUpdate::PerCluster,
                        "file_prealloc" => FatUpdate::FilePrealloc,
                        "full_prealloc" => FatUpdate::FullPrealloc,
                        v => {
                            let n = v.strip_prefix("batch").ok_or_else(bad)?;
                            FatUpdate::BatchDeferred(n.parse().map_err(|_| bad())?)
                        }
                    })
                }
                "fdtq" => {
                    fdtq = Some(match value {
                        "scan" => FdtQuery::ScanOnDemand,
                        "cached" => FdtQuery::CachedDir,
                        _ => return Err(bad()),
                    })
                }
                "fdtu" => {
                    fdtu = Some(match value {
                        "per_cluster" => FdtUpdate::PerCluster,
                        "per_packet" => FdtUpdate::PerPacket,
                        "close" => FdtUpdate::PerFileClose,
                        v => {
                            let n = v.strip_prefix("batch").ok_or_else(bad)?;
                            FdtUpdate::BatchDeferred(n.parse().map_err(|_| bad())?)
                        }
                    })
                }
                "data" => {
                    data = Some(match value {
                        "per_sector" => DataWrite::PerSector,
                        "per_cluster" => DataWrite::PerCluster,
                        v => {
                            let k = v.strip_prefix("burst").ok_or_else(bad)?;
                            DataWrite::Burst(k.parse().map_err(|_| bad())?)
                        }
                    })
                }
                _ => return Err(Error::Config(format!("unknown strategy key `{key}`"))),
            }
        }
        let missing = |what: &str| Error::Config(format!("strategy string missing `{what}`"));
        StrategyTuple {
            fat_query: fatq.ok_or_else(|| missing("fatq"))?,
            fat_update: fatu.ok_or_else(|| missing("fatu"))?,
            fdt_query: fdtq.ok_or_else(|| missing("fdtq"))?,
            fdt_update: fdtu.ok_or_else(|| missing("fdtu"))?,
            data_write: data.ok_or_else(|| missing("data"))?,
        }
        .validated()
    }
}

impl Serialize for StrategyTuple {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StrategyTuple {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Accounting buckets
// ---------------------------------------------------------------------------

/// Aggregated flash traffic, split into the three time buckets. Byte and
/// jump counts stay integers; the harness converts them to durations once.
///
/// Data time is pure byte time: every address jump, including the jumps of
/// data writes themselves, is management overhead. That keeps the data
/// denominator identical across strategies, which is what makes their
/// overhead ratios comparable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Charges {
    pub data_bytes: u64,
    pub mgmt_bytes: u64,
    pub mgmt_jumps: u64,
    pub setup_bytes: u64,
    pub setup_jumps: u64,
}

impl Charges {
    pub fn mgmt(&mut self, r: FlushReceipt) {
        self.mgmt_bytes += r.bytes;
        self.mgmt_jumps += r.jumps;
    }

    pub fn mgmt_read(&mut self, jumps: u64) {
        self.mgmt_jumps += jumps;
    }

    pub fn setup(&mut self, r: FlushReceipt) {
        self.setup_bytes += r.bytes;
        self.setup_jumps += r.jumps;
    }

    /// Routes a data receipt: bytes to data time, any jump to management.
    pub fn data(&mut self, r: DataReceipt) {
        self.data_bytes += r.bytes;
        if r.jump.is_some() {
            self.mgmt_jumps += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Per-session shared state
// ---------------------------------------------------------------------------

/// Strategy state shared by all streams of one simulation.
#[derive(Debug, Default)]
pub struct SessionState {
    /// The mount-time FAT pre-scan has been charged.
    pub prescan_charged: bool,
    /// The session-wide whole-FAT claim exists.
    pub full_claimed: bool,
    /// Last cluster of each file carved out of the session claim.
    pub full_boundaries: Vec<u32>,
    /// Allocations still covered by the last cached-freelist refill.
    pub cached_credit: u64,
}

/// FAT entries covered by one cached-freelist refill excursion (8 sectors).
pub const CACHED_REFILL_ENTRIES: u64 = 8 * 128;

// ---------------------------------------------------------------------------
// Stream driver
// ---------------------------------------------------------------------------

#[derive(Debug)]
struct OpenFile {
    slot: usize,
    /// Bytes accepted from packets.
    logical_bytes: u64,
    /// Accepted bytes not yet written out.
    pending_bytes: u64,
    first_cluster: Option<u32>,
    last_cluster: Option<u32>,
    /// Sectors written into the last cluster.
    fill_sectors: u64,
    clusters: u64,
}

/// Drives one stream's files through a strategy tuple.
#[derive(Debug)]
pub struct StreamDriver {
    pub tuple: StrategyTuple,
    file_bytes: u64,
    file: Option<OpenFile>,
    fat_closes_pending: u8,
    fdt_closes_pending: u8,
    files_written: u64,
    /// A non-prealloc file is consuming a stolen claim.
    holds_claim: bool,
}

impl StreamDriver {
    pub fn new(tuple: StrategyTuple, file_bytes: u64) -> Result<StreamDriver> {
        if file_bytes == 0 {
            return Err(Error::Config("file size must be positive".into()));
        }
        Ok(StreamDriver {
            tuple: tuple.validated()?,
            file_bytes,
            file: None,
            fat_closes_pending: 0,
            fdt_closes_pending: 0,
            files_written: 0,
            holds_claim: false,
        })
    }

    pub fn files_written(&self) -> u64 {
        self.files_written
    }

    pub fn has_open_file(&self) -> bool {
        self.file.is_some()
    }

    /// Opens the next file of this stream.
    pub fn on_file_open(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
    ) -> Result<()> {
        debug_assert!(self.file.is_none(), "file already open");
        let slot = vol.create_file()?;
        if self.tuple.fdt_query == FdtQuery::ScanOnDemand {
            charges.mgmt_read(vol.charge_fdt_read(slot));
        }
        if self.tuple.fat_query == FatQuery::PrescanAll && !session.prescan_charged {
            charges.mgmt_read(vol.charge_fat_scan(vol.fat_sectors().saturating_sub(1)));
            session.prescan_charged = true;
        }
        self.file = Some(OpenFile {
            slot,
            logical_bytes: 0,
            pending_bytes: 0,
            first_cluster: None,
            last_cluster: None,
            fill_sectors: 0,
            clusters: 0,
        });
        match self.tuple.fat_update {
            FatUpdate::FilePrealloc => {
                let owner = ClaimOwner::File(slot);
                match vol.claim_all_free(owner) {
                    Ok(r) => charges.mgmt(r),
                    Err(Error::VolumeFull) if vol.outstanding_claims() > 0 => {
                        charges.mgmt(vol.split_largest_claim_for(owner)?);
                    }
                    Err(e) => return Err(e),
                }
                self.holds_claim = true;
            }
            FatUpdate::FullPrealloc => {
                if !session.full_claimed {
                    let r = vol.claim_all_free(ClaimOwner::Session)?;
                    charges.setup(r);
                    session.full_claimed = true;
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Feeds one packet into the stream. Opens and closes files as the
    /// configured file size dictates.
    pub fn on_packet(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
        packet_bytes: u64,
    ) -> Result<()> {
        let mut left = packet_bytes;
        while left > 0 {
            if self.file.is_none() {
                self.on_file_open(vol, session, charges)?;
            }
            let room = {
                let f = self.file.as_ref().unwrap();
                self.file_bytes - f.logical_bytes
            };
            let take = left.min(room);
            {
                let f = self.file.as_mut().unwrap();
                f.logical_bytes += take;
                f.pending_bytes += take;
            }
            left -= take;

            let unit = match self.tuple.data_write {
                DataWrite::PerSector => SECTOR_BYTES,
                DataWrite::PerCluster => vol.timing().cluster_bytes(),
                DataWrite::Burst(k) => k as u64 * vol.timing().cluster_bytes(),
            };
            let drainable = {
                let f = self.file.as_ref().unwrap();
                f.pending_bytes / unit * unit
            };
            if drainable > 0 {
                self.write_out(vol, session, charges, drainable / SECTOR_BYTES)?;
                self.file.as_mut().unwrap().pending_bytes -= drainable;
            }

            let complete = self.file.as_ref().unwrap().logical_bytes == self.file_bytes;
            if complete {
                self.on_file_close(vol, session, charges)?;
            } else if left == 0 && self.tuple.fdt_update == FdtUpdate::PerPacket {
                let f = self.file.as_ref().unwrap();
                vol.update_file(f.slot, f.logical_bytes, f.first_cluster);
                charges.mgmt(vol.flush_fdt());
            }
        }
        Ok(())
    }

    /// Closes the open file: drains buffered data (final partial sector
    /// rounds up), finalizes its directory record, and performs the
    /// close-time strategy work (release, batch flushes).
    pub fn on_file_close(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
    ) -> Result<()> {
        {
            let pending = self.file.as_ref().map(|f| f.pending_bytes).unwrap_or(0);
            if pending > 0 {
                let sectors = pending.div_ceil(SECTOR_BYTES);
                self.write_out(vol, session, charges, sectors)?;
                self.file.as_mut().unwrap().pending_bytes = 0;
            }
        }
        let f = self.file.take().expect("no open file to close");
        vol.update_file(f.slot, f.logical_bytes, f.first_cluster);
        vol.close_file(f.slot);

        match self.tuple.fat_update {
            FatUpdate::FilePrealloc => {
                charges.mgmt(vol.release_claim(ClaimOwner::File(f.slot)));
                self.holds_claim = false;
            }
            FatUpdate::FullPrealloc => {
                if let Some(last) = f.last_cluster {
                    session.full_boundaries.push(last);
                }
            }
            FatUpdate::BatchDeferred(n) => {
                self.fat_closes_pending += 1;
                if self.fat_closes_pending >= n {
                    charges.mgmt(vol.flush_fat());
                    self.fat_closes_pending = 0;
                }
            }
            FatUpdate::PerCluster => {
                // Links of a trailing partial cluster are still dirty.
                charges.mgmt(vol.flush_fat());
            }
        }
        if self.holds_claim {
            charges.mgmt(vol.release_claim(ClaimOwner::File(f.slot)));
            self.holds_claim = false;
        }

        match self.tuple.fdt_update {
            FdtUpdate::PerCluster | FdtUpdate::PerPacket | FdtUpdate::PerFileClose => {
                charges.mgmt(vol.flush_fdt());
            }
            FdtUpdate::BatchDeferred(n) => {
                self.fdt_closes_pending += 1;
                if self.fdt_closes_pending >= n {
                    charges.mgmt(vol.flush_fdt());
                    self.fdt_closes_pending = 0;
                }
            }
        }
        self.files_written += 1;
        Ok(())
    }

    /// End-of-run: close a dangling open file.
    pub fn finish(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
    ) -> Result<()> {
        if self.file.is_some() {
            self.on_file_close(vol, session, charges)?;
        }
        Ok(())
    }

    fn write_out(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
        mut sectors: u64,
    ) -> Result<()> {
        let c = vol.timing().sectors_per_cluster;
        while sectors > 0 {
            let need_cluster = {
                let f = self.file.as_ref().unwrap();
                f.last_cluster.is_none() || f.fill_sectors == c
            };
            if need_cluster {
                self.allocate_cluster(vol, session, charges)?;
            }
            let f = self.file.as_mut().unwrap();
            let room = c - f.fill_sectors;
            let n = room.min(sectors);
            let receipt = vol.write_data(f.last_cluster.unwrap(), f.fill_sectors, n)?;
            charges.data(receipt);
            f.fill_sectors += n;
            sectors -= n;
            if f.fill_sectors == c {
                self.cluster_complete(vol, charges);
            }
        }
        Ok(())
    }

    fn cluster_complete(&mut self, vol: &mut Volume, charges: &mut Charges) {
        if self.tuple.fat_update == FatUpdate::PerCluster {
            charges.mgmt(vol.flush_fat());
        }
        if self.tuple.fdt_update == FdtUpdate::PerCluster {
            let f = self.file.as_ref().unwrap();
            let written = f.clusters * vol.timing().cluster_bytes();
            vol.update_file(f.slot, written.min(f.logical_bytes), f.first_cluster);
            charges.mgmt(vol.flush_fdt());
        }
    }

    fn allocate_cluster(
        &mut self,
        vol: &mut Volume,
        session: &mut SessionState,
        charges: &mut Charges,
    ) -> Result<()> {
        let slot = self.file.as_ref().unwrap().slot;
        let prev = self.file.as_ref().unwrap().last_cluster;
        let cluster = match self.tuple.fat_update {
            FatUpdate::FilePrealloc => {
                let owner = ClaimOwner::File(slot);
                match vol.consume_claim(owner) {
                    Some(cl) => cl,
                    None => {
                        // Claim exhausted mid-file: grab whatever is free
                        // again, or split another claim.
                        match vol.claim_all_free(owner) {
                            Ok(r) => charges.mgmt(r),
                            Err(Error::VolumeFull) if vol.outstanding_claims() > 0 => {
                                charges.mgmt(vol.split_largest_claim_for(owner)?);
                            }
                            Err(e) => return Err(e),
                        }
                        let head = vol.consume_claim(owner).ok_or(Error::VolumeFull)?;
                        if let Some(p) = prev {
                            vol.graft_chain(p, head)?;
                        }
                        head
                    }
                }
            }
            FatUpdate::FullPrealloc => {
                let cl = vol.consume_claim(ClaimOwner::Session).ok_or(Error::VolumeFull)?;
                // The fixed layout is presumed planned in advance; keep the
                // on-flash links consistent with actual consumption order
                // without charging storage-time FAT traffic.
                if let Some(p) = prev {
                    vol.relink_preallocated(p, cl);
                }
                cl
            }
            _ => {
                if self.holds_claim {
                    if let Some(cl) = vol.consume_claim(ClaimOwner::File(slot)) {
                        self.finish_alloc(cl, prev, true);
                        return Ok(());
                    }
                    self.holds_claim = false;
                }
                self.charge_query(vol, session, charges);
                match vol.find_free_cluster(vol.alloc_hint()) {
                    Ok(cl) => {
                        vol.link_cluster(prev, cl)?;
                        cl
                    }
                    Err(Error::VolumeFull) if vol.outstanding_claims() > 0 => {
                        let owner = ClaimOwner::File(slot);
                        charges.mgmt(vol.split_largest_claim_for(owner)?);
                        self.holds_claim = true;
                        let head = vol.consume_claim(owner).ok_or(Error::VolumeFull)?;
                        if let Some(p) = prev {
                            vol.graft_chain(p, head)?;
                        }
                        head
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        self.finish_alloc(cluster, prev, false);
        Ok(())
    }

    fn finish_alloc(&mut self, cluster: u32, _prev: Option<u32>, _from_claim: bool) {
        let f = self.file.as_mut().unwrap();
        if f.first_cluster.is_none() {
            f.first_cluster = Some(cluster);
        }
        f.last_cluster = Some(cluster);
        f.fill_sectors = 0;
        f.clusters += 1;
    }

    fn charge_query(&self, vol: &mut Volume, session: &mut SessionState, charges: &mut Charges) {
        match self.tuple.fat_query {
            FatQuery::ScanOnDemand => {
                charges.mgmt_read(vol.charge_fat_read(vol.alloc_hint()));
            }
            FatQuery::CachedFreelist => {
                if session.cached_credit == 0 {
                    charges.mgmt_read(vol.charge_fat_read(vol.alloc_hint()));
                    session.cached_credit = CACHED_REFILL_ENTRIES;
                }
                session.cached_credit -= 1;
            }
            FatQuery::PrescanAll => {
                // Free list built at mount; nothing per call.
            }
        }
    }

    /// Pending batched closes, for tests.
    pub fn batch_state(&self) -> (u8, u8) {
        (self.fat_closes_pending, self.fdt_closes_pending)
    }
}
