use serde::{Deserialize, Serialize};

use super::Axis;
use crate::linalg::FlopSink;

/// Attribution bucket for floating-point work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopPhase {
    PowerIteration,
    Orthogonalization,
    ErrorFeedback,
    WeightUpdate,
    NewtonSchulz,
    Other,
}

impl FlopPhase {
    pub const ALL: [FlopPhase; 6] = [
        FlopPhase::PowerIteration,
        FlopPhase::Orthogonalization,
        FlopPhase::ErrorFeedback,
        FlopPhase::WeightUpdate,
        FlopPhase::NewtonSchulz,
        FlopPhase::Other,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Communication volume per axis and FLOPs per device.
///
/// Collectives charge the logical element count of the matrix they move to
/// the axis they run over; a collective over an axis of size 1 charges
/// nothing. FLOPs are kept per device and per phase; the reported figure is
/// the maximum over devices.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostLedger {
    dp_elements: u64,
    fs_elements: u64,
    tp_elements: u64,
    flops: Vec<[u64; FlopPhase::ALL.len()]>,
}

/// Serializable view of a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub dp_elements: u64,
    pub fs_elements: u64,
    pub tp_elements: u64,
    pub flops: u64,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_transfer(&mut self, axis: Axis, elements: u64) {
        *self.counter(axis) += elements;
    }

    pub fn elements(&self, axis: Axis) -> u64 {
        match axis {
            Axis::Dp => self.dp_elements,
            Axis::Fs => self.fs_elements,
            Axis::Tp => self.tp_elements,
        }
    }

    fn counter(&mut self, axis: Axis) -> &mut u64 {
        match axis {
            Axis::Dp => &mut self.dp_elements,
            Axis::Fs => &mut self.fs_elements,
            Axis::Tp => &mut self.tp_elements,
        }
    }

    /// A sink that charges FLOPs to `device` under `phase`.
    pub fn device(&mut self, device: usize, phase: FlopPhase) -> DeviceFlops<'_> {
        if self.flops.len() <= device {
            self.flops.resize(device + 1, [0; FlopPhase::ALL.len()]);
        }
        DeviceFlops {
            slot: &mut self.flops[device][phase.slot()],
        }
    }

    pub fn add_flops(&mut self, device: usize, phase: FlopPhase, flops: u64) {
        self.device(device, phase).add_flops(flops);
    }

    pub fn device_flops(&self, device: usize) -> u64 {
        self.flops.get(device).map_or(0, |p| p.iter().sum())
    }

    pub fn device_phase_flops(&self, device: usize, phase: FlopPhase) -> u64 {
        self.flops.get(device).map_or(0, |p| p[phase.slot()])
    }

    pub fn flops_per_device(&self) -> u64 {
        (0..self.flops.len()).map(|d| self.device_flops(d)).max().unwrap_or(0)
    }

    pub fn phase_flops_per_device(&self, phase: FlopPhase) -> u64 {
        self.flops.iter().map(|p| p[phase.slot()]).max().unwrap_or(0)
    }

    /// Adds another ledger's counts into this one, device by device.
    pub fn merge(&mut self, other: &CostLedger) {
        self.dp_elements += other.dp_elements;
        self.fs_elements += other.fs_elements;
        self.tp_elements += other.tp_elements;
        if self.flops.len() < other.flops.len() {
            self.flops.resize(other.flops.len(), [0; FlopPhase::ALL.len()]);
        }
        for (mine, theirs) in self.flops.iter_mut().zip(&other.flops) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot {
            dp_elements: self.dp_elements,
            fs_elements: self.fs_elements,
            tp_elements: self.tp_elements,
            flops: self.flops_per_device(),
        }
    }
}

/// FLOP sink borrowed from a [`CostLedger`].
pub struct DeviceFlops<'a> {
    slot: &'a mut u64,
}

impl FlopSink for DeviceFlops<'_> {
    fn add_flops(&mut self, flops: u64) {
        *self.slot += flops;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_device_max() {
        let mut l = CostLedger::new();
        l.add_flops(0, FlopPhase::PowerIteration, 10);
        l.add_flops(1, FlopPhase::PowerIteration, 7);
        l.add_flops(1, FlopPhase::WeightUpdate, 5);
        assert_eq!(l.flops_per_device(), 12);
        assert_eq!(l.phase_flops_per_device(FlopPhase::PowerIteration), 10);
        l.record_transfer(Axis::Tp, 3);
        let json = serde_json::to_string(&l.snapshot()).unwrap();
        assert_eq!(json, r#"{"dp_elements":0,"fs_elements":0,"tp_elements":3,"flops":12}"#);
        l.reset();
        assert_eq!(l.snapshot(), LedgerSnapshot::default());
    }

    #[test]
    fn merge_adds_per_device() {
        let mut a = CostLedger::new();
        a.add_flops(0, FlopPhase::Other, 4);
        a.record_transfer(Axis::Dp, 1);
        let mut b = CostLedger::new();
        b.add_flops(2, FlopPhase::Other, 6);
        b.add_flops(0, FlopPhase::Other, 1);
        b.record_transfer(Axis::Dp, 2);
        a.merge(&b);
        assert_eq!(a.device_flops(0), 5);
        assert_eq!(a.device_flops(2), 6);
        assert_eq!(a.elements(Axis::Dp), 3);
    }
}
