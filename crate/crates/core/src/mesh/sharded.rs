use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{Axis, Coord, DeviceMesh, MeshError};
use crate::linalg::DenseMatrix;

/// Which matrix dimension an axis partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dim {
    Rows,
    Cols,
}

/// Placement of a logical `rows×cols` matrix on a mesh.
///
/// Each dimension is either replicated or split into contiguous equal blocks
/// along one mesh axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSpec {
    pub rows: usize,
    pub cols: usize,
    pub row_axis: Option<Axis>,
    pub col_axis: Option<Axis>,
}

impl ShardSpec {
    pub fn new(rows: usize, cols: usize, row_axis: Option<Axis>, col_axis: Option<Axis>) -> Self {
        Self {
            rows,
            cols,
            row_axis,
            col_axis,
        }
    }

    pub fn replicated(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, None, None)
    }

    pub fn axis(&self, dim: Dim) -> Option<Axis> {
        match dim {
            Dim::Rows => self.row_axis,
            Dim::Cols => self.col_axis,
        }
    }

    pub fn with_axis(mut self, dim: Dim, axis: Option<Axis>) -> Self {
        match dim {
            Dim::Rows => self.row_axis = axis,
            Dim::Cols => self.col_axis = axis,
        }
        self
    }

    pub fn shards_along(&self, axis: Axis) -> bool {
        self.row_axis == Some(axis) || self.col_axis == Some(axis)
    }

    /// Logical element count.
    pub fn elements(&self) -> u64 {
        (self.rows as u64) * (self.cols as u64)
    }

    pub fn validate(&self, mesh: &DeviceMesh) -> Result<(), MeshError> {
        if let (Some(r), Some(c)) = (self.row_axis, self.col_axis) {
            if r == c {
                return Err(MeshError::SameAxis { axis: r });
            }
        }
        for (dim, len) in [(Dim::Rows, self.rows), (Dim::Cols, self.cols)] {
            if let Some(axis) = self.axis(dim) {
                let size = mesh.size(axis);
                if len % size != 0 {
                    return Err(MeshError::Indivisible {
                        dim,
                        len,
                        axis,
                        size,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn local_shape(&self, mesh: &DeviceMesh) -> (usize, usize) {
        let div = |axis: Option<Axis>| axis.map_or(1, |a| mesh.size(a));
        (self.rows / div(self.row_axis), self.cols / div(self.col_axis))
    }

    /// Block of rows (or columns) held by the device at `coord`.
    pub fn block(&self, mesh: &DeviceMesh, coord: Coord, dim: Dim) -> Range<usize> {
        let (lr, lc) = self.local_shape(mesh);
        let (len, axis) = match dim {
            Dim::Rows => (lr, self.row_axis),
            Dim::Cols => (lc, self.col_axis),
        };
        let start = axis.map_or(0, |a| coord.get(a) * len);
        start..start + len
    }
}

/// Per-device local blocks of a logical matrix.
///
/// Shards are stored in device-index order. A matrix that does not vary along
/// an axis it is not sharded on carries identical copies there; a matrix that
/// does vary (local momentum, partial products before a reduction) simply
/// holds different data in those slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardedMatrix {
    spec: ShardSpec,
    mesh: DeviceMesh,
    shards: Vec<DenseMatrix>,
}

impl ShardedMatrix {
    pub fn from_shards(
        spec: ShardSpec,
        mesh: DeviceMesh,
        shards: Vec<DenseMatrix>,
    ) -> Result<Self, MeshError> {
        spec.validate(&mesh)?;
        if shards.len() != mesh.num_devices() {
            return Err(MeshError::ShardCount {
                expected: mesh.num_devices(),
                got: shards.len(),
            });
        }
        let expected = spec.local_shape(&mesh);
        for (i, s) in shards.iter().enumerate() {
            if s.shape() != expected {
                return Err(MeshError::ShardShape {
                    coord: mesh.coord_of(i),
                    expected,
                    got: s.shape(),
                });
            }
        }
        Ok(Self { spec, mesh, shards })
    }

    pub fn from_fn(
        spec: ShardSpec,
        mesh: DeviceMesh,
        mut f: impl FnMut(Coord) -> DenseMatrix,
    ) -> Result<Self, MeshError> {
        let shards = mesh.coords().map(&mut f).collect();
        Self::from_shards(spec, mesh, shards)
    }

    /// Contiguous block partition of `full`; replicated dimensions are copied.
    pub fn shard(full: &DenseMatrix, spec: ShardSpec, mesh: DeviceMesh) -> Result<Self, MeshError> {
        if full.shape() != (spec.rows, spec.cols) {
            return Err(MeshError::FullShape {
                expected: (spec.rows, spec.cols),
                got: full.shape(),
            });
        }
        spec.validate(&mesh)?;
        Self::from_fn(spec, mesh, |c| block_of(full, &spec, &mesh, c))
    }

    /// Like [`shard`](Self::shard), but DP replica `d` is cut from `per_replica[d]`.
    pub fn shard_per_replica(
        per_replica: &[DenseMatrix],
        spec: ShardSpec,
        mesh: DeviceMesh,
    ) -> Result<Self, MeshError> {
        if per_replica.len() != mesh.size(Axis::Dp) {
            return Err(MeshError::ShardCount {
                expected: mesh.size(Axis::Dp),
                got: per_replica.len(),
            });
        }
        for full in per_replica {
            if full.shape() != (spec.rows, spec.cols) {
                return Err(MeshError::FullShape {
                    expected: (spec.rows, spec.cols),
                    got: full.shape(),
                });
            }
        }
        spec.validate(&mesh)?;
        Self::from_fn(spec, mesh, |c| block_of(&per_replica[c.dp], &spec, &mesh, c))
    }

    pub fn spec(&self) -> &ShardSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &DeviceMesh {
        &self.mesh
    }

    pub fn shards(&self) -> &[DenseMatrix] {
        &self.shards
    }

    pub fn local(&self, coord: Coord) -> &DenseMatrix {
        &self.shards[self.mesh.index_of(coord)]
    }

    /// Reassembles the full matrix from the devices that agree with `base`
    /// on every axis the spec does not shard along.
    pub fn assemble_from(&self, base: Coord) -> DenseMatrix {
        let mut full = DenseMatrix::zeros(self.spec.rows, self.spec.cols);
        for c in self.mesh.coords() {
            let matches = Axis::ALL
                .iter()
                .all(|&a| self.spec.shards_along(a) || c.get(a) == base.get(a));
            if matches {
                let rows = self.spec.block(&self.mesh, c, Dim::Rows);
                let cols = self.spec.block(&self.mesh, c, Dim::Cols);
                full.set_block(rows.start, cols.start, self.local(c));
            }
        }
        full
    }

    pub fn assemble(&self) -> DenseMatrix {
        self.assemble_from(Coord { dp: 0, fs: 0, tp: 0 })
    }

    /// The full matrix as seen by DP replica `dp`.
    pub fn assemble_replica(&self, dp: usize) -> DenseMatrix {
        self.assemble_from(Coord { dp, fs: 0, tp: 0 })
    }

    /// Applies a local computation on every device.
    pub fn map_local<E>(
        &self,
        spec: ShardSpec,
        mut f: impl FnMut(Coord, &DenseMatrix) -> Result<DenseMatrix, E>,
    ) -> Result<Self, E>
    where
        E: From<MeshError>,
    {
        let shards = self
            .mesh
            .coords()
            .zip(&self.shards)
            .map(|(c, s)| f(c, s))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self::from_shards(spec, self.mesh, shards)?)
    }

    /// Zips two sharded matrices on the same mesh through a local computation.
    pub fn zip_local<E>(
        &self,
        other: &Self,
        spec: ShardSpec,
        mut f: impl FnMut(Coord, &DenseMatrix, &DenseMatrix) -> Result<DenseMatrix, E>,
    ) -> Result<Self, E>
    where
        E: From<MeshError>,
    {
        if self.mesh != other.mesh {
            return Err(MeshError::MeshMismatch.into());
        }
        let shards = self
            .mesh
            .coords()
            .zip(self.shards.iter().zip(&other.shards))
            .map(|(c, (a, b))| f(c, a, b))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Self::from_shards(spec, self.mesh, shards)?)
    }

    /// Splits a replicated dimension along `axis` by local slicing. Moves no data.
    pub fn split(&self, dim: Dim, axis: Axis) -> Result<Self, MeshError> {
        if self.spec.axis(dim).is_some() {
            return Err(MeshError::AlreadySharded { dim });
        }
        let spec = self.spec.with_axis(dim, Some(axis));
        spec.validate(&self.mesh)?;
        let mesh = self.mesh;
        let shards = mesh
            .coords()
            .zip(&self.shards)
            .map(|(c, s)| {
                let range = spec.block(&mesh, c, dim);
                match dim {
                    Dim::Rows => s.rows_range(range.start, range.end),
                    Dim::Cols => s.cols_range(range.start, range.end),
                }
            })
            .collect();
        Self::from_shards(spec, mesh, shards)
    }

    /// True when every group of devices along `axis` holds byte-identical shards.
    pub fn is_replicated_along(&self, axis: Axis) -> bool {
        self.mesh.coords().all(|c| {
            let first = self.local(c.with(axis, 0));
            self.local(c).as_slice().iter().map(|v| v.to_bits())
                .eq(first.as_slice().iter().map(|v| v.to_bits()))
        })
    }

    /// Largest elementwise difference between copies along `axis`.
    pub fn max_divergence_along(&self, axis: Axis) -> f64 {
        self.mesh
            .coords()
            .map(|c| self.local(c).max_abs_diff(self.local(c.with(axis, 0))))
            .fold(0.0, f64::max)
    }

    /// Mean of the assembled replicas over DP, folded in replica order.
    pub fn dp_mean(&self) -> DenseMatrix {
        let dp = self.mesh.size(Axis::Dp);
        let mut acc = self.assemble_replica(0);
        for d in 1..dp {
            acc.add_scaled(1.0, &self.assemble_replica(d)).expect("same spec");
        }
        acc.scale(1.0 / dp as f64)
    }
}

fn block_of(full: &DenseMatrix, spec: &ShardSpec, mesh: &DeviceMesh, c: Coord) -> DenseMatrix {
    let rows = spec.block(mesh, c, Dim::Rows);
    let cols = spec.block(mesh, c, Dim::Cols);
    full.rows_range(rows.start, rows.end).cols_range(cols.start, cols.end)
}
