//! Stream definitions, the training grid, packet-arrival event synthesis,
//! and preprocessing of stream + hardware descriptions into the fixed
//! 18-value feature vector consumed by the strategy selector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::strategy::StrategyTuple;
use crate::timing::{FlashTimingParams, GIB, KIB, MIB};
use crate::{Error, Result};

/// The seven stored data types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    RadarEcho,
    ProcResults,
    Status,
    Gps,
    Sensor,
    Params,
    Usb,
}

impl DataType {
    pub const ALL: [DataType; 7] = [
        DataType::RadarEcho,
        DataType::ProcResults,
        DataType::Status,
        DataType::Gps,
        DataType::Sensor,
        DataType::Params,
        DataType::Usb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DataType::RadarEcho => "radar_echo",
            DataType::ProcResults => "proc_results",
            DataType::Status => "status",
            DataType::Gps => "gps",
            DataType::Sensor => "sensor",
            DataType::Params => "params",
            DataType::Usb => "usb",
        }
    }

    pub fn from_name(s: &str) -> Option<DataType> {
        Self::ALL.iter().copied().find(|t| t.name() == s)
    }

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|t| t == self).unwrap()
    }

    /// Source interface of each data type.
    pub fn interface(&self) -> Interface {
        match self {
            DataType::RadarEcho => Interface::Adc,
            DataType::ProcResults | DataType::Status | DataType::Params => {
                Interface::FpgaInternal
            }
            DataType::Gps | DataType::Sensor => Interface::Uart,
            DataType::Usb => Interface::Usb,
        }
    }
}

/// Hardware interfaces, UARTs collapsed into one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interface {
    Adc,
    FpgaInternal,
    Uart,
    Usb,
}

impl Interface {
    pub fn index(&self) -> usize {
        match self {
            Interface::Adc => 0,
            Interface::FpgaInternal => 1,
            Interface::Uart => 2,
            Interface::Usb => 3,
        }
    }
}

/// Packet arrival pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arrival {
    Periodic,
    Random,
}

impl Arrival {
    pub fn is_random(&self) -> bool {
        matches!(self, Arrival::Random)
    }
}

/// One data stream to store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub data_type: DataType,
    /// Average data rate in bytes per second.
    pub rate_bps: u64,
    /// Bytes per packet.
    pub packet_bytes: u64,
    /// Total bytes this stream stores over the run.
    pub total_bytes: u64,
    /// Bytes per file; the stream rolls to a new file at this size.
    pub file_bytes: u64,
    pub arrival: Arrival,
}

impl StreamSpec {
    pub fn validated(&self) -> Result<()> {
        if self.rate_bps == 0 || self.packet_bytes == 0 || self.total_bytes == 0 {
            return Err(Error::Config("stream rates and sizes must be positive".into()));
        }
        if self.file_bytes == 0 {
            return Err(Error::Config("file size must be positive".into()));
        }
        Ok(())
    }
}

/// Default file size for a stream: 4 seconds of data, at least 64 MiB,
/// at most 2 GiB.
pub fn default_file_bytes(rate_bps: u64) -> u64 {
    (4 * rate_bps).clamp(64 * MIB, 2 * GIB)
}

/// A full workload: concurrent streams plus the per-stream cache budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub streams: Vec<StreamSpec>,
    pub cache_bytes_per_stream: u64,
    pub seed: u64,
}

impl WorkloadSpec {
    pub fn validated(&self) -> Result<()> {
        if self.streams.is_empty() {
            return Err(Error::Config("workload needs at least one stream".into()));
        }
        for s in &self.streams {
            s.validated()?;
        }
        let max_packet = self.streams.iter().map(|s| s.packet_bytes).max().unwrap();
        if self.cache_bytes_per_stream < max_packet {
            return Err(Error::Config(format!(
                "per-stream cache {} smaller than the largest packet {max_packet}",
                self.cache_bytes_per_stream
            )));
        }
        Ok(())
    }

    /// Convenience: one stream storing `total_bytes` as a single file.
    pub fn single(
        data_type: DataType,
        rate_bps: u64,
        packet_bytes: u64,
        total_bytes: u64,
    ) -> WorkloadSpec {
        WorkloadSpec {
            streams: vec![StreamSpec {
                data_type,
                rate_bps,
                packet_bytes,
                total_bytes,
                file_bytes: total_bytes,
                arrival: Arrival::Periodic,
            }],
            cache_bytes_per_stream: total_bytes.max(packet_bytes),
            seed: 0,
        }
    }
}

// ---------------------------------------------------------------------------
// Event synthesis
// ---------------------------------------------------------------------------

/// One packet arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Event {
    pub time_ns: u64,
    pub stream: usize,
    pub bytes: u64,
}

/// Expands a workload into its time-sorted packet arrivals. Deterministic
/// for a given seed: periodic streams emit at exact rational multiples,
/// random streams jitter each gap uniformly in [0.5, 1.5) of nominal.
/// Ties are broken by stream index.
pub fn synthesize_events(workload: &WorkloadSpec, seed: u64) -> Result<Vec<Event>> {
    workload.validated()?;
    let mut events: Vec<Event> = Vec::new();
    for (idx, s) in workload.streams.iter().enumerate() {
        let full = s.total_bytes / s.packet_bytes;
        let tail = s.total_bytes % s.packet_bytes;
        let nominal = |k: u64| -> u64 {
            // Arrival of the k-th packet (1-based) at exact rational time.
            ((k as u128 * s.packet_bytes as u128 * 1_000_000_000) / s.rate_bps as u128) as u64
        };
        match s.arrival {
            Arrival::Periodic => {
                for k in 1..=full {
                    events.push(Event { time_ns: nominal(k), stream: idx, bytes: s.packet_bytes });
                }
                if tail > 0 {
                    events.push(Event { time_ns: nominal(full + 1), stream: idx, bytes: tail });
                }
            }
            Arrival::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ (idx as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let gap = nominal(1).max(1);
                let mut t = 0u64;
                let mut emit = |t: &mut u64, bytes: u64, events: &mut Vec<Event>| {
                    let r: u64 = rng.gen();
                    let jitter = gap / 2 + ((gap as u128 * r as u128) >> 64) as u64;
                    *t += jitter.max(1);
                    events.push(Event { time_ns: *t, stream: idx, bytes });
                };
                for _ in 0..full {
                    emit(&mut t, s.packet_bytes, &mut events);
                }
                if tail > 0 {
                    emit(&mut t, tail, &mut events);
                }
            }
        }
    }
    events.sort_by_key(|e| (e.time_ns, e.stream));
    Ok(events)
}

// ---------------------------------------------------------------------------
// Feature preprocessing
// ---------------------------------------------------------------------------

/// Length of the flattened feature vector.
pub const FEATURE_LEN: usize = 18;

/// The preprocessed labeled input: 8 feature groups flattened to 18 values.
///
/// Layout: `[log2 file, log2 packet, log2 rate, type one-hot (7),
/// interface one-hot (4), compute score, log2 cache, log2 capacity,
/// log10 jump-to-sector-write ratio]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_LEN]);

/// Hardware context needed to encode the resource feature groups.
#[derive(Debug, Clone, Copy)]
pub struct HardwareContext {
    pub timing: FlashTimingParams,
    pub cache_bytes: u64,
    /// Relative compute budget in [0, 1]; no further semantics claimed.
    pub compute_score: f64,
}

impl Default for HardwareContext {
    fn default() -> Self {
        HardwareContext {
            timing: FlashTimingParams::default(),
            cache_bytes: 16 * MIB,
            compute_score: 0.5,
        }
    }
}

/// Encodes one stream plus hardware context into the feature vector.
pub fn preprocess(spec: &StreamSpec, hw: &HardwareContext) -> Result<FeatureVector> {
    spec.validated()?;
    if hw.cache_bytes == 0 {
        return Err(Error::Config("cache size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&hw.compute_score) {
        return Err(Error::Config("compute score must lie in [0, 1]".into()));
    }
    let mut x = [0.0f64; FEATURE_LEN];
    x[0] = (spec.file_bytes as f64).log2();
    x[1] = (spec.packet_bytes as f64).log2();
    x[2] = (spec.rate_bps as f64).log2();
    x[3 + spec.data_type.index()] = 1.0;
    x[10 + spec.data_type.interface().index()] = 1.0;
    x[14] = hw.compute_score;
    x[15] = (hw.cache_bytes as f64).log2();
    x[16] = (hw.timing.volume_capacity as f64).log2();
    x[17] = hw.timing.jump_to_sector_write_ratio().log10();
    debug_assert!(x.iter().all(|v| v.is_finite()));
    Ok(FeatureVector(x))
}

// ---------------------------------------------------------------------------
// Training grid
// ---------------------------------------------------------------------------

/// One row of the training set.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub id: usize,
    pub spec: StreamSpec,
    pub features: FeatureVector,
    pub label: Option<StrategyTuple>,
    pub mu_best: Option<f64>,
}

/// Emits the exact cartesian training grid: 960 radar-echo, 512
/// processing-results, 1024 status, 160 GPS, 160 sensor, 512 parameter and
/// 1024 USB samples (4352 total). Rates step in binary kB/MB so that each
/// published row count is exact.
pub fn generate_training_grid(hw: &HardwareContext) -> Vec<TrainingSample> {
    let mut rows: Vec<(DataType, u64, u64)> = Vec::new();
    let push_grid =
        |rows: &mut Vec<(DataType, u64, u64)>, ty: DataType, rates: Vec<u64>, packets: Vec<u64>| {
            for r in &rates {
                for p in &packets {
                    rows.push((ty, *r, *p));
                }
            }
        };

    let steps = |from: u64, to: u64, step: u64| -> Vec<u64> {
        (0..).map(|i| from + i * step).take_while(|v| *v <= to).collect()
    };

    push_grid(
        &mut rows,
        DataType::RadarEcho,
        steps(MIB, 120 * MIB, 2 * MIB),
        steps(16 * KIB, 256 * KIB, 16 * KIB),
    );
    push_grid(
        &mut rows,
        DataType::ProcResults,
        steps(MIB, 32 * MIB, MIB),
        steps(16 * KIB, 256 * KIB, 16 * KIB),
    );
    // 1 kB - 32 kB at 2 kB intervals reads as 1, 3, ..., 31: that is the
    // only spacing matching the published count of 16 packet sizes.
    push_grid(
        &mut rows,
        DataType::Status,
        steps(16 * KIB, 1024 * KIB, 16 * KIB),
        steps(KIB, 32 * KIB, 2 * KIB),
    );
    push_grid(
        &mut rows,
        DataType::Gps,
        steps(2 * KIB, 10 * KIB, 2 * KIB),
        steps(KIB, 32 * KIB, KIB),
    );
    push_grid(
        &mut rows,
        DataType::Sensor,
        steps(2 * KIB, 10 * KIB, 2 * KIB),
        steps(KIB, 32 * KIB, KIB),
    );
    push_grid(
        &mut rows,
        DataType::Params,
        steps(16 * KIB, 256 * KIB, 16 * KIB),
        steps(KIB, 32 * KIB, KIB),
    );
    push_grid(
        &mut rows,
        DataType::Usb,
        steps(128 * KIB, 16 * MIB, 128 * KIB),
        steps(16 * KIB, 128 * KIB, 16 * KIB),
    );

    rows.into_iter()
        .enumerate()
        .map(|(id, (data_type, rate_bps, packet_bytes))| {
            let spec = StreamSpec {
                data_type,
                rate_bps,
                packet_bytes,
                total_bytes: default_file_bytes(rate_bps),
                file_bytes: default_file_bytes(rate_bps),
                arrival: Arrival::Periodic,
            };
            let features = preprocess(&spec, hw).expect("grid specs are valid");
            TrainingSample { id, spec, features, label: None, mu_best: None }
        })
        .collect()
}

/// Grid CSV: documented header, UTF-8, LF line endings.
pub fn grid_to_csv(samples: &[TrainingSample]) -> String {
    let mut out = String::from("# schema-version: 1\n");
    out.push_str("sample_id,data_type,rate_bps,packet_b,file_b,total_b,arrival\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.id,
            s.spec.data_type.name(),
            s.spec.rate_bps,
            s.spec.packet_bytes,
            s.spec.file_bytes,
            s.spec.total_bytes,
            match s.spec.arrival {
                Arrival::Periodic => "periodic",
                Arrival::Random => "random",
            },
        ));
    }
    out
}

/// Parses a grid CSV produced by [`grid_to_csv`].
pub fn grid_from_csv(text: &str, hw: &HardwareContext) -> Result<Vec<TrainingSample>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("sample_id") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() < 7 {
            return Err(Error::Config(format!("bad grid row `{line}`")));
        }
        let parse = |v: &str| -> Result<u64> {
            v.parse().map_err(|_| Error::Config(format!("bad number `{v}`")))
        };
        let spec = StreamSpec {
            data_type: DataType::from_name(cols[1])
                .ok_or_else(|| Error::Config(format!("unknown data type `{}`", cols[1])))?,
            rate_bps: parse(cols[2])?,
            packet_bytes: parse(cols[3])?,
            file_bytes: parse(cols[4])?,
            total_bytes: parse(cols[5])?,
            arrival: match cols[6] {
                "periodic" => Arrival::Periodic,
                "random" => Arrival::Random,
                other => return Err(Error::Config(format!("bad arrival `{other}`"))),
            },
        };
        let features = preprocess(&spec, hw)?;
        out.push(TrainingSample {
            id: parse(cols[0])? as usize,
            spec,
            features,
            label: None,
            mu_best: None,
        });
    }
    Ok(out)
}
