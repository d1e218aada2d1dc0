//! Parcellation into near-equal blocks and the spatial machinery of the
//! sSGLMM prior: adjacency, graph Laplacian Q = diag(A1) − A, the leading
//! eigenvectors M of A, and the reduced precision Q_s = M'QM.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Partition of the voxel grid into G contiguous axis-aligned blocks.
#[derive(Debug, Clone)]
pub struct Parcellation {
    dims: Vec<usize>,
    splits: Vec<usize>,
    assignment: Vec<usize>,
    parcels: Vec<Vec<usize>>,
}

impl Parcellation {
    pub fn n_parcels(&self) -> usize {
        self.parcels.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Per-axis split counts actually used.
    pub fn splits(&self) -> &[usize] {
        &self.splits
    }

    /// Parcel id per voxel.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Voxel indices of one parcel, ascending.
    pub fn parcel(&self, g: usize) -> &[usize] {
        &self.parcels[g]
    }

    /// Grid coordinates of one parcel's voxels.
    pub fn parcel_coords(&self, g: usize) -> Vec<Vec<usize>> {
        self.parcels[g]
            .iter()
            .map(|&v| index_to_coords(v, &self.dims))
            .collect()
    }
}

fn index_to_coords(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut coords = vec![0; dims.len()];
    for axis in (0..dims.len()).rev() {
        coords[axis] = index % dims[axis];
        index /= dims[axis];
    }
    coords
}

/// All ways to write g as an ordered product of `axes` factors.
fn factorizations(g: usize, axes: usize) -> Vec<Vec<usize>> {
    if axes == 1 {
        return vec![vec![g]];
    }
    let mut out = Vec::new();
    for f in 1..=g {
        if g % f == 0 {
            for mut rest in factorizations(g / f, axes - 1) {
                let mut v = vec![f];
                v.append(&mut rest);
                out.push(v);
            }
        }
    }
    out
}

/// Split the grid into G axis-aligned blocks of near-equal geometry. G is
/// factored across axes so block side lengths stay as close to equal as
/// possible; each axis is divided into floor/ceil-length runs.
pub fn parcellate(dims: &[usize], g: usize) -> Result<Parcellation> {
    let n_voxels: usize = dims.iter().product();
    if g == 0 || g > n_voxels {
        return Err(Error::InvalidArgument(format!(
            "parcel count {} out of range for {} voxels",
            g, n_voxels
        )));
    }
    let candidates: Vec<Vec<usize>> = factorizations(g, dims.len())
        .into_iter()
        .filter(|splits| splits.iter().zip(dims).all(|(&s, &d)| s <= d))
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "cannot factor {} parcels over grid {:?}",
            g, dims
        )));
    }
    // Prefer the factorization with the most even block side lengths.
    let splits = candidates
        .into_iter()
        .min_by(|a, b| {
            let cost = |splits: &[usize]| {
                let sides: Vec<f64> = splits
                    .iter()
                    .zip(dims)
                    .map(|(&s, &d)| d as f64 / s as f64)
                    .collect();
                let mean = sides.iter().sum::<f64>() / sides.len() as f64;
                sides.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
            };
            cost(a).total_cmp(&cost(b))
        })
        .unwrap();

    let boundaries: Vec<Vec<usize>> = splits
        .iter()
        .zip(dims)
        .map(|(&s, &d)| (0..=s).map(|i| i * d / s).collect())
        .collect();
    let block_of = |coord: usize, axis: usize| -> usize {
        let b = &boundaries[axis];
        (0..b.len() - 1)
            .find(|&i| coord >= b[i] && coord < b[i + 1])
            .expect("coordinate inside grid")
    };

    let n_parcels: usize = splits.iter().product();
    let mut assignment = vec![0usize; n_voxels];
    let mut parcels = vec![Vec::new(); n_parcels];
    for v in 0..n_voxels {
        let coords = index_to_coords(v, dims);
        let mut parcel = 0;
        for (axis, &c) in coords.iter().enumerate() {
            parcel = parcel * splits[axis] + block_of(c, axis);
        }
        assignment[v] = parcel;
        parcels[parcel].push(v);
    }
    Ok(Parcellation {
        dims: dims.to_vec(),
        splits,
        assignment,
        parcels,
    })
}

/// Which voxel pairs count as neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighborhood {
    /// Face-sharing only (4 in 2D, 6 in 3D).
    Edge,
    /// Face- or corner-sharing (8 in 2D, 26 in 3D). The default.
    EdgeCorner,
}

/// Binary symmetric adjacency over one parcel's voxel coordinates.
pub fn build_adjacency(coords: &[Vec<usize>], neighborhood: Neighborhood) -> Result<DMatrix<f64>> {
    if coords.is_empty() {
        return Err(Error::InvalidArgument("empty parcel".into()));
    }
    let n = coords.len();
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let deltas: Vec<i64> = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(&a, &b)| (a as i64 - b as i64).abs())
                .collect();
            let max_delta = deltas.iter().copied().max().unwrap_or(0);
            let sum_delta: i64 = deltas.iter().sum();
            let neighbor = match neighborhood {
                Neighborhood::Edge => sum_delta == 1,
                Neighborhood::EdgeCorner => max_delta == 1,
            };
            if neighbor {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    Ok(adj)
}

/// Graph Laplacian Q = diag(A1) − A.
pub fn laplacian(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n {
        return Err(Error::Shape("adjacency not square".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if adjacency[(i, j)] != adjacency[(j, i)] {
                return Err(Error::Shape("adjacency not symmetric".into()));
            }
        }
    }
    let degrees: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
    let mut q = -adjacency.clone();
    for i in 0..n {
        q[(i, i)] += degrees[i];
    }
    Ok(q)
}

/// First q principal eigenvectors of the adjacency matrix, columns ordered by
/// descending eigenvalue. Each column's sign is fixed so its
/// largest-magnitude entry is positive; equal eigenvalues are ordered by the
/// ascending index of that entry.
pub fn eigenbasis(adjacency: &DMatrix<f64>, q: usize) -> Result<DMatrix<f64>> {
    let n = adjacency.nrows();
    if q == 0 || q > n {
        return Err(Error::InvalidArgument(format!(
            "eigenbasis size {} out of range for {} voxels",
            q, n
        )));
    }
    let eig = SymmetricEigen::new(adjacency.clone());
    let mut order: Vec<usize> = (0..n).collect();
    let anchor = |col: usize| -> usize {
        let column = eig.eigenvectors.column(col);
        let mut best = 0;
        for i in 1..n {
            if column[i].abs() > column[best].abs() {
                best = i;
            }
        }
        best
    };
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then_with(|| anchor(a).cmp(&anchor(b)))
    });
    let mut m = DMatrix::zeros(n, q);
    for (out_col, &src_col) in order.iter().take(q).enumerate() {
        let column = eig.eigenvectors.column(src_col);
        let sign = if column[anchor(src_col)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            m[(i, out_col)] = sign * column[i];
        }
    }
    Ok(m)
}

/// Default eigenvector count: one eigenvector per ~25 voxels.
pub fn default_q(parcel_size: usize) -> usize {
    let scaled = (parcel_size as f64 / 25.0).round() as usize;
    scaled.max(3).min(parcel_size)
}

/// Immutable spatial machinery of one parcel.
#[derive(Debug, Clone)]
pub struct ParcelGraph {
    pub adjacency: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    /// V_g × q synthetic spatial predictor matrix M.
    pub eigenbasis: DMatrix<f64>,
    /// q × q reduced precision Q_s = M'QM.
    pub prior_precision: DMatrix<f64>,
    pub q: usize,
}

impl ParcelGraph {
    pub fn new(coords: &[Vec<usize>], neighborhood: Neighborhood, q: usize) -> Result<Self> {
        let adjacency = build_adjacency(coords, neighborhood)?;
        let laplacian = laplacian(&adjacency)?;
        let m = eigenbasis(&adjacency, q)?;
        let prior_precision = m.transpose() * &laplacian * &m;
        // Symmetrize against roundoff.
        let prior_precision = (&prior_precision + prior_precision.transpose()) * 0.5;
        Ok(Self {
            adjacency,
            laplacian,
            eigenbasis: m,
            prior_precision,
            q,
        })
    }

    pub fn n_voxels(&self) -> usize {
        self.adjacency.nrows()
    }
}
