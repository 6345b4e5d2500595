use std::fmt;

use serde::{Deserialize, Serialize};

use super::MeshError;

/// One of the three parallelism axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Dp,
    Fs,
    Tp,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Dp, Axis::Fs, Axis::Tp];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Dp => "DP",
            Axis::Fs => "FS",
            Axis::Tp => "TP",
        })
    }
}

/// Position of a device on the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Coord {
    pub dp: usize,
    pub fs: usize,
    pub tp: usize,
}

impl Coord {
    pub fn get(&self, axis: Axis) -> usize {
        match axis {
            Axis::Dp => self.dp,
            Axis::Fs => self.fs,
            Axis::Tp => self.tp,
        }
    }

    pub fn with(mut self, axis: Axis, value: usize) -> Self {
        match axis {
            Axis::Dp => self.dp = value,
            Axis::Fs => self.fs = value,
            Axis::Tp => self.tp = value,
        }
        self
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(dp={}, fs={}, tp={})", self.dp, self.fs, self.tp)
    }
}

/// A `dp × fs × tp` grid of simulated devices.
///
/// Devices are array slots indexed in `(dp, fs, tp)` lexicographic order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceMesh {
    dp: usize,
    fs: usize,
    tp: usize,
}

impl DeviceMesh {
    pub fn new(dp: usize, fs: usize, tp: usize) -> Result<Self, MeshError> {
        for (axis, size) in [(Axis::Dp, dp), (Axis::Fs, fs), (Axis::Tp, tp)] {
            if size == 0 {
                return Err(MeshError::EmptyAxis { axis });
            }
        }
        Ok(Self { dp, fs, tp })
    }

    pub fn single() -> Self {
        Self { dp: 1, fs: 1, tp: 1 }
    }

    pub fn size(&self, axis: Axis) -> usize {
        match axis {
            Axis::Dp => self.dp,
            Axis::Fs => self.fs,
            Axis::Tp => self.tp,
        }
    }

    pub fn num_devices(&self) -> usize {
        self.dp * self.fs * self.tp
    }

    pub fn index_of(&self, c: Coord) -> usize {
        (c.dp * self.fs + c.fs) * self.tp + c.tp
    }

    pub fn coord_of(&self, index: usize) -> Coord {
        Coord {
            dp: index / (self.fs * self.tp),
            fs: (index / self.tp) % self.fs,
            tp: index % self.tp,
        }
    }

    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.num_devices()).map(|i| self.coord_of(i))
    }
}

impl fmt::Display for DeviceMesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.dp, self.fs, self.tp)
    }
}

impl std::str::FromStr for DeviceMesh {
    type Err = MeshError;

    /// Parses `DPxFSxTP`, e.g. `2x2x1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<usize> = s
            .split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| MeshError::Parse(s.to_string()))?;
        match parts.as_slice() {
            [dp, fs, tp] => DeviceMesh::new(*dp, *fs, *tp),
            _ => Err(MeshError::Parse(s.to_string())),
        }
    }
}
