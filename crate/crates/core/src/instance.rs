//! Problem instances: the linear map, right-hand side, and dimensions.
//!
//! An instance fixes the feasible set `{X : A(X) = b, rank(X) <= r}`.
//! Internally every instance is stored with `m >= n`; user input with
//! `m < n` is transposed on construction and transposed back on output,
//! recorded by the `transposed` flag. Dense maps act on `vec(X)` in
//! column-major stacking (columns of X concatenated left to right); this
//! basis choice is fixed so that instance files are portable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{gaussian_matrix, stream_rng};
use crate::SPEC_VERSION;

/// The linear map, in the internal (normalized) orientation.
#[derive(Clone, Debug, PartialEq)]
pub enum MapSpec {
    /// `l x (m*n)` matrix acting on `vec(X)`, column-major.
    Dense { rows: DMatrix<f64> },
    /// Distinct observed entries, 0-based, sorted lexicographically.
    EntryMask { indices: Vec<(usize, usize)> },
}

/// Map family selector for [`generate_planted`].
#[derive(Clone, Copy, Debug)]
pub enum MapKind {
    /// Dense Gaussian map with `l` rows, each scaled by `1/sqrt(l)`.
    Dense { l: usize },
    /// Entry mask observing `round(density * m * n)` distinct entries.
    Mask { density: f64 },
}

/// Immutable problem data. Safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    m: usize,
    n: usize,
    r: usize,
    map: MapSpec,
    b: DVector<f64>,
    transposed: bool,
    seed: Option<u64>,
}

/// Known feasible point certifying that the feasible set is nonempty.
#[derive(Clone, Debug)]
pub struct PlantedWitness {
    /// Rank-`<= r` feasible matrix, in the user's orientation.
    pub x_star: DMatrix<f64>,
    /// Frobenius norms of the generating factors `(G, H)`.
    pub factor_norms: (f64, f64),
}

impl Instance {
    /// Builds an instance from user-orientation data, normalizing to `m >= n`.
    ///
    /// `map` and the mask indices are interpreted against the user shape
    /// `(m, n)` and converted internally when a transpose is required.
    pub fn new(m: usize, n: usize, r: usize, map: MapSpec, b: DVector<f64>) -> Result<Self> {
        validate_dims(m, n, r)?;
        let transposed = m < n;
        let (mi, ni) = if transposed { (n, m) } else { (m, n) };
        let map = if transposed { transpose_map(map, m, n) } else { map };
        let inst = Instance { m: mi, n: ni, r, map, b, transposed, seed: None };
        inst.validate_map()?;
        Ok(inst)
    }

    fn validate_map(&self) -> Result<()> {
        match &self.map {
            MapSpec::Dense { rows } => {
                if rows.ncols() != self.m * self.n {
                    return Err(Error::InvalidDimensions(format!(
                        "dense map has {} columns, expected m*n = {}",
                        rows.ncols(),
                        self.m * self.n
                    )));
                }
                if rows.nrows() != self.b.len() {
                    return Err(Error::InvalidDimensions(format!(
                        "dense map has {} rows but b has length {}",
                        rows.nrows(),
                        self.b.len()
                    )));
                }
            }
            MapSpec::EntryMask { indices } => {
                if indices.len() != self.b.len() {
                    return Err(Error::InvalidDimensions(format!(
                        "mask has {} indices but b has length {}",
                        indices.len(),
                        self.b.len()
                    )));
                }
                let mut seen = std::collections::HashSet::new();
                for &(i, j) in indices {
                    if i >= self.m || j >= self.n {
                        return Err(Error::InvalidDimensions(format!(
                            "mask index ({}, {}) out of range for {}x{}",
                            i, j, self.m, self.n
                        )));
                    }
                    if !seen.insert((i, j)) {
                        return Err(Error::InvalidDimensions(format!(
                            "mask index ({}, {}) repeated",
                            i, j
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Internal (normalized) shape, with `m >= n`.
    pub fn shape_internal(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    /// Shape as the user supplied it.
    pub fn shape_user(&self) -> (usize, usize) {
        if self.transposed {
            (self.n, self.m)
        } else {
            (self.m, self.n)
        }
    }

    pub fn rank_bound(&self) -> usize {
        self.r
    }

    /// Number of affine constraints; zero means no affine term.
    pub fn num_constraints(&self) -> usize {
        self.b.len()
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Operator norm of the map, `max_{|X|=1} |A(X)|` (1 for a nonempty mask).
    pub fn operator_norm(&self) -> f64 {
        match &self.map {
            MapSpec::Dense { rows } => {
                if rows.nrows() == 0 {
                    0.0
                } else {
                    crate::residual::singular_values_checked(rows)
                        .map(|s| s.first().copied().unwrap_or(0.0))
                        .unwrap_or(f64::NAN)
                }
            }
            MapSpec::EntryMask { indices } => {
                if indices.is_empty() {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Converts a user-orientation matrix into the internal orientation.
    pub fn to_internal(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (mu, nu) = self.shape_user();
        if x.nrows() != mu || x.ncols() != nu {
            return Err(Error::DimensionMismatch {
                expected: format!("{}x{}", mu, nu),
                got: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        Ok(if self.transposed { x.transpose() } else { x.clone() })
    }

    /// Converts an internal-orientation matrix back to the user orientation.
    pub fn to_user(&self, x: DMatrix<f64>) -> DMatrix<f64> {
        if self.transposed {
            x.transpose()
        } else {
            x
        }
    }

    pub(crate) fn apply_map_internal(&self, x: &DMatrix<f64>) -> DVector<f64> {
        match &self.map {
            MapSpec::Dense { rows } => {
                if rows.nrows() == 0 {
                    return DVector::zeros(0);
                }
                rows * DVector::from_column_slice(x.as_slice())
            }
            MapSpec::EntryMask { indices } => {
                DVector::from_iterator(indices.len(), indices.iter().map(|&(i, j)| x[(i, j)]))
            }
        }
    }

    pub(crate) fn apply_adjoint_internal(&self, y: &DVector<f64>) -> DMatrix<f64> {
        match &self.map {
            MapSpec::Dense { rows } => {
                let z = rows.transpose() * y;
                DMatrix::from_column_slice(self.m, self.n, z.as_slice())
            }
            MapSpec::EntryMask { indices } => {
                let mut z = DMatrix::zeros(self.m, self.n);
                for (k, &(i, j)) in indices.iter().enumerate() {
                    z[(i, j)] = y[k];
                }
                z
            }
        }
    }

    /// Affine residual `A(X) - b` against an internal-orientation point.
    pub(crate) fn affine_residual_internal(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.apply_map_internal(x) - &self.b
    }

    /// Serializable file form (always in the normalized orientation).
    pub fn to_file(&self) -> InstanceFile {
        let map = match &self.map {
            MapSpec::Dense { rows } => MapFile::Dense {
                rows: (0..rows.nrows())
                    .map(|i| rows.row(i).iter().copied().collect())
                    .collect(),
            },
            MapSpec::EntryMask { indices } => MapFile::Mask {
                // 1-based in files
                indices: indices.iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            },
        };
        InstanceFile {
            m: self.m,
            n: self.n,
            r: self.r,
            map,
            b: self.b.iter().copied().collect(),
            transposed: self.transposed,
            seed: self.seed,
            spec_version: SPEC_VERSION.to_string(),
        }
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        validate_dims(file.m, file.n, file.r)?;
        let map = match file.map {
            MapFile::Dense { rows } => {
                let l = rows.len();
                let width = file.m * file.n;
                let mut flat = Vec::with_capacity(l * width);
                for row in &rows {
                    if row.len() != width {
                        return Err(Error::InvalidDimensions(format!(
                            "dense map row has length {}, expected {}",
                            row.len(),
                            width
                        )));
                    }
                    flat.extend_from_slice(row);
                }
                MapSpec::Dense { rows: DMatrix::from_row_slice(l, width, &flat) }
            }
            MapFile::Mask { indices } => {
                let mut idx = Vec::with_capacity(indices.len());
                for [i, j] in indices {
                    if i == 0 || j == 0 {
                        return Err(Error::InvalidDimensions(
                            "mask indices are 1-based in files".into(),
                        ));
                    }
                    idx.push((i - 1, j - 1));
                }
                MapSpec::EntryMask { indices: idx }
            }
        };
        // Foreign files may carry m < n; normalize and flip the flag so the
        // recorded orientation still refers to the original user input.
        let needs_flip = file.m < file.n;
        let (mi, ni) = if needs_flip { (file.n, file.m) } else { (file.m, file.n) };
        let map = if needs_flip { transpose_map(map, file.m, file.n) } else { map };
        let inst = Instance {
            m: mi,
            n: ni,
            r: file.r,
            map,
            b: DVector::from_vec(file.b),
            transposed: file.transposed ^ needs_flip,
            seed: file.seed,
        };
        inst.validate_map()?;
        Ok(inst)
    }

    /// Canonical JSON bytes; the instance hash is SHA-256 over these.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("instance serialization cannot fail")
    }

    /// Hex SHA-256 of the canonical JSON, used for report provenance.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{:02x}", b)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.canonical_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: InstanceFile = serde_json::from_str(&text)?;
        Self::from_file(file)
    }
}

fn validate_dims(m: usize, n: usize, r: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidDimensions(format!("dimensions must be positive, got {}x{}", m, n)));
    }
    if r > m.min(n) {
        return Err(Error::InvalidDimensions(format!(
            "rank bound {} exceeds min(m, n) = {}",
            r,
            m.min(n)
        )));
    }
    Ok(())
}

/// Rewrites a map given against an `m x n` layout to act on the transpose.
///
/// Column `i + j*m` of a dense map (entry `(i, j)` of `X`) becomes column
/// `j + i*n` (entry `(j, i)` of `X^T`); mask indices swap.
fn transpose_map(map: MapSpec, m: usize, n: usize) -> MapSpec {
    match map {
        MapSpec::Dense { rows } => {
            let l = rows.nrows();
            let mut out = DMatrix::zeros(l, m * n);
            for j in 0..n {
                for i in 0..m {
                    out.set_column(j + i * n, &rows.column(i + j * m));
                }
            }
            MapSpec::Dense { rows: out }
        }
        MapSpec::EntryMask { indices } => {
            let mut idx: Vec<(usize, usize)> = indices.into_iter().map(|(i, j)| (j, i)).collect();
            idx.sort_unstable();
            MapSpec::EntryMask { indices: idx }
        }
    }
}

/// Generates a feasible instance from a planted rank-`r` witness.
///
/// `X* = G H` with standard-normal factors, `b := A(X*)`, so the feasible
/// set is guaranteed nonempty. Deterministic in `seed`: factors, map, and
/// mask sampling each draw from their own stream.
pub fn generate_planted(
    m: usize,
    n: usize,
    r: usize,
    kind: MapKind,
    seed: u64,
) -> Result<(Instance, PlantedWitness)> {
    validate_dims(m, n, r)?;
    let transposed = m < n;
    let (mi, ni) = if transposed { (n, m) } else { (m, n) };

    let g = gaussian_matrix(&mut stream_rng(seed, 0), mi, r);
    let h = gaussian_matrix(&mut stream_rng(seed, 1), r, ni);
    let x_star_int = &g * &h;

    let map = match kind {
        MapKind::Dense { l } => {
            let mut rows = gaussian_matrix(&mut stream_rng(seed, 2), l, mi * ni);
            if l > 0 {
                rows /= (l as f64).sqrt();
            }
            MapSpec::Dense { rows }
        }
        MapKind::Mask { density } => {
            if !(density > 0.0 && density <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "mask density must lie in (0, 1], got {}",
                    density
                )));
            }
            let total = mi * ni;
            let l = (density * total as f64).round() as usize;
            if l == 0 {
                return Err(Error::InvalidArgument(format!(
                    "density {} yields an empty mask on a {}x{} matrix",
                    density, m, n
                )));
            }
            let mut rng = stream_rng(seed, 2);
            let mut picked: Vec<usize> =
                rand::seq::index::sample(&mut rng, total, l).into_iter().collect();
            picked.sort_unstable();
            let indices = picked.into_iter().map(|k| (k % mi, k / mi)).collect();
            MapSpec::EntryMask { indices }
        }
    };

    let mut inst = Instance {
        m: mi,
        n: ni,
        r,
        map,
        b: DVector::zeros(0),
        transposed,
        seed: Some(seed),
    };
    inst.b = inst.apply_map_internal(&x_star_int);
    inst.validate_map()?;

    let witness = PlantedWitness {
        factor_norms: (g.norm(), h.norm()),
        x_star: inst.to_user(x_star_int),
    };
    Ok((inst, witness))
}

/// Applies the map to a user-orientation point: `A(X)`.
pub fn apply_map(inst: &Instance, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let xi = inst.to_internal(x)?;
    Ok(inst.apply_map_internal(&xi))
}

/// Applies the adjoint: the unique `Z` with `<Z, X> = <y, A(X)>` for all `X`.
///
/// Returned in the user orientation.
pub fn apply_adjoint(inst: &Instance, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    if y.len() != inst.num_constraints() {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", inst.num_constraints()),
            got: format!("length {}", y.len()),
        });
    }
    Ok(inst.to_user(inst.apply_adjoint_internal(y)))
}

/// Instance file schema. Mask indices are 1-based in files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub map: MapFile,
    pub b: Vec<f64>,
    pub transposed: bool,
    pub seed: Option<u64>,
    pub spec_version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum MapFile {
    Dense { rows: Vec<Vec<f64>> },
    Mask { indices: Vec<[usize; 2]> },
}

/// Point file schema: row-major entries in the user orientation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointFile {
    pub m: usize,
    pub n: usize,
    pub entries: Vec<f64>,
}

pub fn write_point(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let file = PointFile {
        m: x.nrows(),
        n: x.ncols(),
        entries: x.transpose().as_slice().to_vec(),
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_point(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let file: PointFile = serde_json::from_str(&text)?;
    if file.entries.len() != file.m * file.n {
        return Err(Error::InvalidDimensions(format!(
            "point file has {} entries, expected {}x{} = {}",
            file.entries.len(),
            file.m,
            file.n,
            file.m * file.n
        )));
    }
    Ok(DMatrix::from_row_slice(file.m, file.n, &file.entries))
}
