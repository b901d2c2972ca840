// Exhaustive small-config sweep: fast path versus event engine.
use mufat::sim::{run_simulation, RunConfig, StrategyChoice};
use mufat::strategy::{DataWrite, FatQuery, FatUpdate, FdtQuery, FdtUpdate, StrategyTuple};
use mufat::timing::FlashTimingParams;
use mufat::workload::{DataType, WorkloadSpec};

fn main() {
    let fat_q = [FatQuery::ScanOnDemand, FatQuery::CachedFreelist, FatQuery::PrescanAll];
    let fat_u = [
        FatUpdate::PerCluster,
        FatUpdate::FilePrealloc,
        FatUpdate::FullPrealloc,
        FatUpdate::BatchDeferred(2),
        FatUpdate::BatchDeferred(16),
    ];
    let fdt_u = [
        FdtUpdate::PerCluster,
        FdtUpdate::PerFileClose,
        FdtUpdate::BatchDeferred(2),
        FdtUpdate::BatchDeferred(16),
    ];
    let data = [DataWrite::PerSector, DataWrite::PerCluster, DataWrite::Burst(3)];
    let timing = FlashTimingParams { volume_capacity: 4096 * 8192, ..Default::default() };
    let mut checked = 0u64;
    let mut bad = 0u64;
    for fq in fat_q {
        for fu in fat_u {
            if fu == FatUpdate::FullPrealloc && fq != FatQuery::PrescanAll {
                continue;
            }
            for du in fdt_u {
                for dw in data {
                    for fdq in [FdtQuery::ScanOnDemand, FdtQuery::CachedDir] {
                        let tuple = StrategyTuple {
                            fat_query: fq, fat_update: fu, fdt_query: fdq,
                            fdt_update: du, data_write: dw,
                        };
                        for (file, total, packet) in [
                            (8192u64, 16384u64, 2048u64),
                            (8192, 8 * 8192, 8192),
                            (3 * 8192 + 512, 10 * 8192, 2048),
                            (140 * 8192, 300 * 8192 + 1536, 16384),
                            (8192 + 4096, 5 * 8192, 512),
                        ] {
                            for reads in [false, true] {
                                let mut w = WorkloadSpec::single(
                                    DataType::RadarEcho, 4_000_000, packet, total);
                                w.streams[0].file_bytes = file;
                                let cfg = RunConfig {
                                    timing, workload: w,
                                    strategy: StrategyChoice::Tuple(tuple),
                                    seed: 0, fast_path: true, charge_read_jumps: reads,
                                    violation_dump: None,
                                };
                                let mut slow = cfg.clone();
                                slow.fast_path = false;
                                let mut f = run_simulation(&cfg).unwrap();
                                let s = run_simulation(&slow).unwrap();
                                if !f.fast_path_used {
                                    continue;
                                }
                                checked += 1;
                                f.fast_path_used = false;
                                let fj = serde_json::to_string(&f).unwrap();
                                let sj = serde_json::to_string(&s).unwrap();
                                if fj != sj {
                                    bad += 1;
                                    if bad < 4 {
                                        println!("MISMATCH {tuple} file={file} total={total} packet={packet} reads={reads}");
                                        println!("  fast mgmt={} dj={}", f.mgmt_ns, f.counters.data_jumps);
                                        println!("  slow mgmt={} dj={}", s.mgmt_ns, s.counters.data_jumps);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    println!("checked {checked} fast-path configs, {bad} mismatches");
}
