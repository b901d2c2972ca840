//! The event-driven simulation engine.
//!
//! Packets arrive on the workload's schedule into per-stream caches; the
//! device drains them in arrival order on its own clock. A packet that
//! cannot fit its stream's cache is dropped and counted. Receipts do not
//! depend on the device clock, only on the drain order, so queueing affects
//! nothing but overflow.

use std::collections::VecDeque;
use std::path::PathBuf;

use crate::policy::Mlp;
use crate::sim::fast;
use crate::sim::report::SimulationReport;
use crate::strategy::{
    applicable, preset, BaselinePreset, Charges, SessionState, StrategyTuple, StreamDriver,
};
use crate::timing::FlashTimingParams;
use crate::volume::Volume;
use crate::workload::{synthesize_events, HardwareContext, WorkloadSpec};
use crate::{Error, Result};

/// How the run picks its strategy.
#[derive(Debug, Clone)]
pub enum StrategyChoice {
    /// One named baseline for every stream.
    Preset(BaselinePreset),
    /// One explicit tuple for every stream.
    Tuple(StrategyTuple),
    /// An explicit tuple per stream (same length as the stream list).
    PerStream(Vec<StrategyTuple>),
    /// A trained model predicts a tuple per stream.
    Model(Mlp),
}

/// Everything one simulation run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub timing: FlashTimingParams,
    pub workload: WorkloadSpec,
    pub strategy: StrategyChoice,
    pub seed: u64,
    pub fast_path: bool,
    pub charge_read_jumps: bool,
    /// Where to dump the volume state if consistency verification fails.
    pub violation_dump: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(timing: FlashTimingParams, workload: WorkloadSpec, strategy: StrategyChoice) -> Self {
        RunConfig {
            timing,
            workload,
            strategy,
            seed: 0,
            fast_path: true,
            charge_read_jumps: true,
            violation_dump: None,
        }
    }

    /// Resolves the per-stream strategy tuples.
    pub fn resolve_strategies(&self) -> Result<Vec<StrategyTuple>> {
        let n = self.workload.streams.len();
        let tuples = match &self.strategy {
            StrategyChoice::Preset(p) => vec![preset(*p); n],
            StrategyChoice::Tuple(t) => vec![*t; n],
            StrategyChoice::PerStream(ts) => {
                if ts.len() != n {
                    return Err(Error::Config(format!(
                        "{} per-stream strategies for {n} streams",
                        ts.len()
                    )));
                }
                ts.clone()
            }
            StrategyChoice::Model(model) => {
                let hw = HardwareContext {
                    timing: self.timing,
                    cache_bytes: self.workload.cache_bytes_per_stream,
                    compute_score: 0.5,
                };
                let mut out = Vec::with_capacity(n);
                for s in &self.workload.streams {
                    let x = crate::workload::preprocess(s, &hw)?;
                    out.push(crate::policy::predict_strategy(model, &x, &self.workload)?);
                }
                out
            }
        };
        for t in &tuples {
            t.validated()?;
            if !applicable(t, &self.workload) {
                return Err(Error::InapplicableStrategy(t.to_string()));
            }
        }
        Ok(tuples)
    }
}

/// Runs one simulation, event-driven or via the closed-form fast path when
/// the workload allows it (the two are receipt-for-receipt identical).
pub fn run_simulation(cfg: &RunConfig) -> Result<SimulationReport> {
    cfg.timing.validated()?;
    cfg.workload.validated()?;
    let total: u64 = cfg.workload.streams.iter().map(|s| s.total_bytes).sum();
    if total == 0 {
        return Err(Error::Config("workload stores no data: mu undefined".into()));
    }
    let tuples = cfg.resolve_strategies()?;

    if cfg.fast_path && fast::eligible(cfg, &tuples) {
        return fast::run_fast(cfg, &tuples);
    }
    run_events(cfg, &tuples)
}

fn run_events(cfg: &RunConfig, tuples: &[StrategyTuple]) -> Result<SimulationReport> {
    let events = synthesize_events(&cfg.workload, cfg.seed)?;
    let mut vol = Volume::format(cfg.timing, cfg.charge_read_jumps)?;
    let mut session = SessionState::default();
    let mut charges = Charges::default();

    let mut drivers: Vec<StreamDriver> = cfg
        .workload
        .streams
        .iter()
        .zip(tuples)
        .map(|(s, t)| StreamDriver::new(*t, s.file_bytes))
        .collect::<Result<_>>()?;

    // Per-stream cache occupancy plus one global FIFO (drain order is
    // arrival order, ties already resolved by the event sort).
    let cache_cap = cfg.workload.cache_bytes_per_stream;
    let mut cache_used = vec![0u64; drivers.len()];
    let mut queue: VecDeque<(u64, usize, u64)> = VecDeque::new();
    let mut overflow_events = 0u64;
    let mut device_time = 0u64;
    // Independent tally of service time, checked against the buckets.
    let mut service_total = 0u64;

    let serve =
        |q: &mut VecDeque<(u64, usize, u64)>,
         cache_used: &mut [u64],
         device_time: &mut u64,
         service_total: &mut u64,
         vol: &mut Volume,
         session: &mut SessionState,
         charges: &mut Charges,
         drivers: &mut [StreamDriver],
         horizon: Option<u64>|
         -> Result<()> {
            while let Some(&(t, stream, bytes)) = q.front() {
                let start = (*device_time).max(t);
                if let Some(h) = horizon {
                    if start >= h {
                        break;
                    }
                }
                q.pop_front();
                cache_used[stream] -= bytes;
                let before = *charges;
                drivers[stream].on_packet(vol, session, charges, bytes)?;
                let spent = bucket_ns(&cfg.timing, charges) - bucket_ns(&cfg.timing, &before);
                *service_total += spent;
                *device_time = start + spent;
            }
            Ok(())
        };

    for e in &events {
        serve(
            &mut queue,
            &mut cache_used,
            &mut device_time,
            &mut service_total,
            &mut vol,
            &mut session,
            &mut charges,
            &mut drivers,
            Some(e.time_ns),
        )?;
        if cache_used[e.stream] + e.bytes > cache_cap {
            overflow_events += 1;
        } else {
            cache_used[e.stream] += e.bytes;
            queue.push_back((e.time_ns, e.stream, e.bytes));
        }
    }
    serve(
        &mut queue,
        &mut cache_used,
        &mut device_time,
        &mut service_total,
        &mut vol,
        &mut session,
        &mut charges,
        &mut drivers,
        None,
    )?;

    // End of run: close dangling files, flush leftovers, finalize the
    // session claim, verify.
    for d in drivers.iter_mut() {
        d.finish(&mut vol, &mut session, &mut charges)?;
    }
    charges.mgmt(vol.flush_fat());
    charges.mgmt(vol.flush_fdt());
    if session.full_claimed {
        charges.setup(vol.finalize_session_claim(&session.full_boundaries));
    }

    let violations = vol.verify_consistency();
    if !violations.is_empty() {
        if let Some(path) = &cfg.violation_dump {
            let _ = std::fs::write(path, vol.dump_json().to_string());
        }
        return Err(Error::Consistency(violations));
    }

    // Time conservation: the per-call tally must equal the bucket totals.
    let data_ns = cfg.timing.elapsed(charges.data_bytes, 0);
    let mgmt_ns = cfg.timing.elapsed(charges.mgmt_bytes, charges.mgmt_jumps);
    let setup_ns = cfg.timing.elapsed(charges.setup_bytes, charges.setup_jumps);
    assert!(
        service_total <= data_ns + mgmt_ns + setup_ns,
        "service tally exceeds receipt totals"
    );

    if data_ns == 0 {
        return Err(Error::Config(
            "no data reached the medium (all packets dropped): mu undefined".into(),
        ));
    }

    Ok(SimulationReport::from_charges(
        &cfg.timing,
        &charges,
        *vol.counters(),
        overflow_events,
        drivers.iter().map(|d| d.files_written()).sum(),
        tuples.iter().map(|t| t.to_string()).collect(),
        cfg.seed,
        false,
        cfg.charge_read_jumps,
    ))
}

fn bucket_ns(timing: &FlashTimingParams, c: &Charges) -> u64 {
    timing.elapsed(c.data_bytes, 0)
        + timing.elapsed(c.mgmt_bytes, c.mgmt_jumps)
        + timing.elapsed(c.setup_bytes, c.setup_jumps)
}
