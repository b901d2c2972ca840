//! The learned strategy selector: a small feed-forward network trained
//! layer by layer on oracle-labeled samples, mapping a stream's feature
//! vector to one strategy class per dimension.

mod mlp;
mod oracle;
mod train;

#[cfg(test)]
mod tests;

pub use mlp::{Activation, Dense, Forward, Mlp, HEAD_SIZES};
pub use oracle::{
    default_strategy_grid, evaluate_cost, label_by_oracle, label_workload, labeled_to_csv,
    labels_from_csv, preset_grid, sample_workload, CostRecord, OracleContext,
};
pub use train::{batch_loss, loss_and_grads, train, EpochStat, Grads, TrainConfig, TrainReport};

use crate::strategy::{
    applicable, DataWrite, FatQuery, FatUpdate, FdtQuery, FdtUpdate, StrategyTuple,
};
use crate::workload::{FeatureVector, WorkloadSpec};
use crate::Result;

/// Batch parameter a predicted `BatchDeferred` class carries.
pub const PREDICTED_BATCH_N: u8 = 16;
/// Burst parameter a predicted `Burst` class carries.
pub const PREDICTED_BURST_K: u8 = 8;

/// Head class indices of a strategy tuple, in head order.
pub fn tuple_classes(t: &StrategyTuple) -> [usize; 5] {
    [
        match t.fat_query {
            FatQuery::ScanOnDemand => 0,
            FatQuery::CachedFreelist => 1,
            FatQuery::PrescanAll => 2,
        },
        match t.fat_update {
            FatUpdate::PerCluster => 0,
            FatUpdate::FilePrealloc => 1,
            FatUpdate::FullPrealloc => 2,
            FatUpdate::BatchDeferred(_) => 3,
        },
        match t.fdt_query {
            FdtQuery::ScanOnDemand => 0,
            FdtQuery::CachedDir => 1,
        },
        match t.fdt_update {
            FdtUpdate::PerCluster => 0,
            FdtUpdate::PerPacket => 1,
            FdtUpdate::PerFileClose => 2,
            FdtUpdate::BatchDeferred(_) => 3,
        },
        match t.data_write {
            DataWrite::PerSector => 0,
            DataWrite::PerCluster => 1,
            DataWrite::Burst(_) => 2,
        },
    ]
}

/// Builds a tuple from head class indices, using the default parameters for
/// the parameterized classes.
pub fn classes_to_tuple(classes: [usize; 5]) -> StrategyTuple {
    StrategyTuple {
        fat_query: match classes[0] {
            0 => FatQuery::ScanOnDemand,
            1 => FatQuery::CachedFreelist,
            _ => FatQuery::PrescanAll,
        },
        fat_update: match classes[1] {
            0 => FatUpdate::PerCluster,
            1 => FatUpdate::FilePrealloc,
            2 => FatUpdate::FullPrealloc,
            _ => FatUpdate::BatchDeferred(PREDICTED_BATCH_N),
        },
        fdt_query: match classes[2] {
            0 => FdtQuery::ScanOnDemand,
            _ => FdtQuery::CachedDir,
        },
        fdt_update: match classes[3] {
            0 => FdtUpdate::PerCluster,
            1 => FdtUpdate::PerPacket,
            2 => FdtUpdate::PerFileClose,
            _ => FdtUpdate::BatchDeferred(PREDICTED_BATCH_N),
        },
        data_write: match classes[4] {
            0 => DataWrite::PerSector,
            1 => DataWrite::PerCluster,
            _ => DataWrite::Burst(PREDICTED_BURST_K),
        },
    }
}

/// Argmax per head (ties to the lowest index), masked to tuples that are
/// structurally valid and applicable to the workload. If the argmax tuple
/// is ruled out, the FAT-update head greedily falls back to its next most
/// probable class.
pub fn predict_strategy(
    model: &Mlp,
    x: &FeatureVector,
    workload: &WorkloadSpec,
) -> Result<StrategyTuple> {
    let probs = model.forward(x).head_probs;
    let argmax = |p: &[f64]| -> usize {
        let mut best = 0;
        for (i, v) in p.iter().enumerate() {
            if *v > p[best] {
                best = i;
            }
        }
        best
    };
    let mut classes = [0usize; 5];
    for (h, p) in probs.iter().enumerate() {
        classes[h] = argmax(p);
    }
    let mut tuple = classes_to_tuple(classes);
    // Whole-FAT pre-allocation is the only constrained class: it needs the
    // pre-scan query and a deterministic workload.
    if tuple.fat_update == FatUpdate::FullPrealloc {
        let valid = tuple.fat_query == FatQuery::PrescanAll && applicable(&tuple, workload);
        if !valid {
            let mut order: Vec<usize> = (0..probs[1].len()).collect();
            order.sort_by(|&a, &b| {
                probs[1][b].partial_cmp(&probs[1][a]).unwrap().then(a.cmp(&b))
            });
            let next = order
                .into_iter()
                .find(|&c| c != 2)
                .expect("head has non-full-prealloc classes");
            classes[1] = next;
            tuple = classes_to_tuple(classes);
        }
    }
    Ok(tuple.validated()?)
}
