//! The six-row benchmark: representative workload mixes, each run under
//! the four baselines and the learned selector, 2 GiB per cell.

use serde_json::json;

use crate::policy::Mlp;
use crate::sim::engine::{run_simulation, RunConfig, StrategyChoice};
use crate::sim::report::SimulationReport;
use crate::strategy::{applicable, preset, BaselinePreset};
use crate::timing::{FlashTimingParams, GIB, MIB, SECTOR_BYTES};
use crate::workload::{Arrival, DataType, StreamSpec, WorkloadSpec};
use crate::Result;

/// Column order of the table.
pub const COLUMNS: [&str; 5] = ["original_fat", "acpa", "fpfqa", "fpfpa", "learned"];

/// One table cell: a full report, or None where the strategy is not
/// applicable (rendered as "/").
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub name: String,
    pub workload: WorkloadSpec,
    pub cells: Vec<Option<SimulationReport>>,
}

#[derive(Debug, Clone)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchRow>,
}

/// Splits 2 GiB across streams proportionally to rate, sector-aligned,
/// one file per stream (the whole test stores as one recording per source).
fn mix(name: &str, specs: &[(DataType, u64, u64, Arrival)], seed: u64) -> (String, WorkloadSpec) {
    let total = 2 * GIB;
    let rate_sum: u64 = specs.iter().map(|s| s.1).sum();
    let streams: Vec<StreamSpec> = specs
        .iter()
        .map(|&(data_type, rate_bps, packet_bytes, arrival)| {
            let share = (total as u128 * rate_bps as u128 / rate_sum as u128) as u64;
            let bytes = (share / SECTOR_BYTES * SECTOR_BYTES).max(packet_bytes);
            StreamSpec {
                data_type,
                rate_bps,
                packet_bytes,
                total_bytes: bytes,
                file_bytes: bytes,
                arrival,
            }
        })
        .collect();
    (
        name.to_string(),
        WorkloadSpec { streams, cache_bytes_per_stream: 16 * MIB, seed },
    )
}

/// The five low-rate sources of the mixed-random rows.
fn low_rate_streams() -> Vec<(DataType, u64, u64, Arrival)> {
    vec![
        (DataType::Status, 512_000, 8192, Arrival::Random),
        (DataType::Gps, 8_000, 2048, Arrival::Random),
        (DataType::Sensor, 8_000, 2048, Arrival::Random),
        (DataType::Params, 128_000, 4096, Arrival::Random),
        (DataType::Usb, 896_000, 65_536, Arrival::Random),
    ]
}

/// The six benchmark rows.
pub fn table_rows(seed: u64) -> Vec<(String, WorkloadSpec)> {
    let mut rows = Vec::new();
    rows.push(mix(
        "radar echo 16 MB/s",
        &[(DataType::RadarEcho, 16_000_000, 65_536, Arrival::Periodic)],
        seed,
    ));
    rows.push(mix(
        "radar echo 80 MB/s",
        &[(DataType::RadarEcho, 80_000_000, 65_536, Arrival::Periodic)],
        seed,
    ));
    rows.push(mix(
        "echo 16 MB/s + processing 1 MB/s",
        &[
            (DataType::RadarEcho, 16_000_000, 65_536, Arrival::Periodic),
            (DataType::ProcResults, 1_000_000, 65_536, Arrival::Periodic),
        ],
        seed,
    ));
    rows.push(mix(
        "echo 80 MB/s + processing 5 MB/s",
        &[
            (DataType::RadarEcho, 80_000_000, 65_536, Arrival::Periodic),
            (DataType::ProcResults, 5_000_000, 65_536, Arrival::Periodic),
        ],
        seed,
    ));
    rows.push(mix("five low-rate types, random", &low_rate_streams(), seed));
    let mut with_echo = vec![(DataType::RadarEcho, 80_000_000, 65_536, Arrival::Periodic)];
    with_echo.extend(low_rate_streams());
    rows.push(mix("echo 80 MB/s + five low-rate random", &with_echo, seed));
    rows
}

/// Runs the whole table. Cells where a baseline is not applicable stay
/// empty; everything else carries its full report.
pub fn benchmark_suite(
    timing: FlashTimingParams,
    model: &Mlp,
    seed: u64,
) -> Result<BenchmarkTable> {
    let mut rows = Vec::new();
    for (name, workload) in table_rows(seed) {
        let mut cells = Vec::new();
        for col in COLUMNS {
            let strategy = match col {
                "original_fat" => StrategyChoice::Preset(BaselinePreset::OriginalFat),
                "acpa" => StrategyChoice::Preset(BaselinePreset::Acpa),
                "fpfqa" => StrategyChoice::Preset(BaselinePreset::Fpfqa),
                "fpfpa" => StrategyChoice::Preset(BaselinePreset::Fpfpa),
                _ => StrategyChoice::Model(model.clone()),
            };
            if let StrategyChoice::Preset(p) = &strategy {
                if !applicable(&preset(*p), &workload) {
                    cells.push(None);
                    continue;
                }
            }
            let cfg = RunConfig {
                timing,
                workload: workload.clone(),
                strategy,
                seed,
                fast_path: true,
                charge_read_jumps: true,
                violation_dump: None,
            };
            cells.push(Some(run_simulation(&cfg)?));
        }
        rows.push(BenchRow { name, workload, cells });
    }
    Ok(BenchmarkTable { rows })
}

impl BenchmarkTable {
    pub fn mu(&self, row: usize, column: &str) -> Option<f64> {
        let c = COLUMNS.iter().position(|c| *c == column)?;
        self.rows.get(row)?.cells.get(c)?.as_ref().map(|r| r.mu)
    }

    /// Table CSV with "/" for inapplicable cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# schema-version: 1\n");
        out.push_str("row,workload,");
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},\"{}\"", i + 1, row.name));
            for cell in &row.cells {
                match cell {
                    Some(r) => out.push_str(&format!(",{}", format_mu(r.mu))),
                    None => out.push_str(",/"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Full per-cell reports as JSON, for inspection.
    pub fn to_json(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "workload": r.name,
                    "cells": COLUMNS.iter().zip(&r.cells).map(|(c, cell)| {
                        json!({ "column": c, "report": cell })
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serializes")
    }
}

fn format_mu(mu: f64) -> String {
    if mu >= 0.01 {
        format!("{mu:.3}")
    } else {
        format!("{mu:.2e}")
    }
}
