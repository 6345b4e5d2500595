use super::{Axis, CostLedger, Coord, Dim, MeshError, ShardSpec, ShardedMatrix};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

/// Devices that differ from `c` only along `axis`, in axis order.
fn group(c: Coord, axis: Axis, size: usize) -> impl Iterator<Item = Coord> {
    (0..size).map(move |a| c.with(axis, a))
}

fn check_group(x: &ShardedMatrix, c: Coord, axis: Axis) -> Result<(), MeshError> {
    let size = x.mesh().size(axis);
    let first = c.with(axis, 0);
    let first_shape = x.local(first).shape();
    for other in group(c, axis, size) {
        let shape = x.local(other).shape();
        if shape != first_shape {
            return Err(MeshError::ShapeMismatch {
                first,
                first_shape,
                second: other,
                second_shape: shape,
            });
        }
    }
    Ok(())
}

/// Element-wise sum or mean over every group of devices along `axis`.
///
/// Contributions are folded left in coordinate order, so every member of a
/// group ends up with the same bytes.
pub fn all_reduce(
    x: &ShardedMatrix,
    op: ReduceOp,
    axis: Axis,
    ledger: &mut CostLedger,
) -> Result<ShardedMatrix, MeshError> {
    if x.spec().shards_along(axis) {
        return Err(MeshError::ReduceAlongShardedAxis { axis });
    }
    let mesh = *x.mesh();
    let size = mesh.size(axis);
    if size == 1 {
        return Ok(x.clone());
    }
    let mut shards: Vec<Option<DenseMatrix>> = vec![None; mesh.num_devices()];
    for c in mesh.coords().filter(|c| c.get(axis) == 0) {
        check_group(x, c, axis)?;
        let mut members = group(c, axis, size);
        let mut acc = x.local(members.next().expect("nonempty group")).clone();
        for m in members {
            acc.add_scaled(1.0, x.local(m))?;
        }
        if op == ReduceOp::Mean {
            acc.scale_in_place(1.0 / size as f64);
        }
        for m in group(c, axis, size) {
            shards[mesh.index_of(m)] = Some(acc.clone());
        }
    }
    ledger.record_transfer(axis, x.spec().elements());
    ShardedMatrix::from_shards(*x.spec(), mesh, shards.into_iter().map(Option::unwrap).collect())
}

/// Concatenates the blocks of `dim` held along `axis`, leaving every member
/// of the group with the full extent of that dimension.
pub fn all_gather(
    x: &ShardedMatrix,
    axis: Axis,
    dim: Dim,
    ledger: &mut CostLedger,
) -> Result<ShardedMatrix, MeshError> {
    if x.spec().axis(dim) != Some(axis) {
        return Err(MeshError::NotShardedAlong { axis, dim });
    }
    let mesh = *x.mesh();
    let size = mesh.size(axis);
    let spec: ShardSpec = x.spec().with_axis(dim, None);
    let mut shards: Vec<Option<DenseMatrix>> = vec![None; mesh.num_devices()];
    for c in mesh.coords().filter(|c| c.get(axis) == 0) {
        check_group(x, c, axis)?;
        let parts: Vec<DenseMatrix> = group(c, axis, size).map(|m| x.local(m).clone()).collect();
        let full = match dim {
            Dim::Rows => DenseMatrix::vstack(&parts)?,
            Dim::Cols => DenseMatrix::hstack(&parts)?,
        };
        for m in group(c, axis, size) {
            shards[mesh.index_of(m)] = Some(full.clone());
        }
    }
    if size > 1 {
        ledger.record_transfer(axis, x.spec().elements());
    }
    ShardedMatrix::from_shards(spec, mesh, shards.into_iter().map(Option::unwrap).collect())
}
