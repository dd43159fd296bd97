//! Finite cluster shapes, their eigenvalues, and compactly supported
//! eigenstates.
//!
//! Connected induced subgraphs are enumerated up to translation by BFS
//! over single-vertex extensions with canonical-form dedup (the
//! fixed-polyomino construction generalized to arbitrary orbits). The
//! union of the spectra of all shapes up to a truncation size is the
//! candidate set for IDS discontinuities; every one of its eigenvalues
//! can be realized inside a percolation configuration by an eigenvector
//! of finite support.

use crate::error::{Error, Result};
use crate::lattice::{boundary_shell, BoxRegion, PeriodicGraph, Vertex};
use crate::operator::{compress, operator_norm_bound, HoppingKernel, Provenance};
use crate::percolation::Configuration;
use crate::spectral::{
    box_compression, degeneracy_tolerance, eigen_decomposition, eigenvalues,
    ensure_sequential_solver,
};
use faer::{Mat, Side};
use rayon::prelude::*;
use std::collections::{HashMap, HashSet, VecDeque};
use std::io::Write;

/// Default cap on the shape truncation size. Growth is combinatorial:
/// on the square lattice the per-size counts run 1, 2, 6, 19, 63, 216,
/// 760, 2725, 9910, 36446 up to size 10; three-dimensional graphs grow
/// much faster, so pick truncations accordingly.
pub const DEFAULT_SHAPE_CAP: usize = 10;

/// A connected induced subgraph up to translation, stored in canonical
/// form: translated so its smallest vertex sits at cell 0, vertex list
/// sorted. Dedup is by exact canonical vertex set; point-group symmetry
/// is deliberately not quotiented out.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClusterShape {
    vertices: Vec<Vertex>,
}

impl ClusterShape {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn size(&self) -> usize {
        self.vertices.len()
    }

    /// Canonical form of an arbitrary nonempty vertex set.
    pub fn canonical(mut vertices: Vec<Vertex>) -> ClusterShape {
        let anchor = vertices.iter().min().unwrap().cell.clone();
        for v in &mut vertices {
            for (c, a) in v.cell.iter_mut().zip(&anchor) {
                *c -= a;
            }
        }
        vertices.sort();
        ClusterShape { vertices }
    }
}

/// All connected induced subgraphs of size 1..=max_size containing a
/// cell-0 representative, deduplicated by translation. Deterministic
/// order: by size, then lexicographically on the canonical vertex list.
pub fn enumerate_shapes(graph: &PeriodicGraph, max_size: usize) -> Result<Vec<ClusterShape>> {
    enumerate_shapes_capped(graph, max_size, DEFAULT_SHAPE_CAP)
}

pub fn enumerate_shapes_capped(
    graph: &PeriodicGraph,
    max_size: usize,
    cap: usize,
) -> Result<Vec<ClusterShape>> {
    if max_size == 0 {
        return Err(Error::InvalidParameter(
            "shape size must be at least 1".into(),
        ));
    }
    if max_size > cap {
        return Err(Error::ShapeCapExceeded {
            requested: max_size,
            cap,
        });
    }
    let mut all: Vec<ClusterShape> = Vec::new();
    let mut level: Vec<ClusterShape> = (0..graph.orbit_count())
        .map(|orbit| ClusterShape::canonical(vec![Vertex::new(orbit, vec![0; graph.dimension()])]))
        .collect();
    level.sort_by(|a, b| a.vertices.cmp(&b.vertices));
    for size in 1..=max_size {
        all.extend(level.iter().cloned());
        if size == max_size {
            break;
        }
        let mut next: HashSet<ClusterShape> = HashSet::new();
        for shape in &level {
            let members: HashSet<&Vertex> = shape.vertices.iter().collect();
            for v in &shape.vertices {
                for n in graph.neighbors(v) {
                    if members.contains(&n) {
                        continue;
                    }
                    let mut grown = shape.vertices.clone();
                    grown.push(n.clone());
                    next.insert(ClusterShape::canonical(grown));
                }
            }
        }
        let mut next: Vec<ClusterShape> = next.into_iter().collect();
        next.sort_by(|a, b| a.vertices.cmp(&b.vertices));
        level = next;
    }
    Ok(all)
}

/// One eigenvalue of the truncated finite-cluster spectrum, with its
/// witnesses: (shape index, multiplicity within that shape's spectrum).
#[derive(Clone, Debug)]
pub struct ClusterEigenvalue {
    pub energy: f64,
    pub min_witness_size: usize,
    pub witness_count: usize,
    pub witnesses: Vec<(usize, usize)>,
}

/// Union of the spectra of all shapes up to the truncation size,
/// clustered at the degeneracy tolerance.
#[derive(Clone, Debug)]
pub struct FiniteClusterSpectrum {
    pub truncation: usize,
    pub levels: Vec<ClusterEigenvalue>,
    pub shapes: Vec<ClusterShape>,
    pub tolerance: f64,
}

impl FiniteClusterSpectrum {
    pub fn energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.energy).collect()
    }

    pub fn contains(&self, energy: f64) -> bool {
        self.levels
            .iter()
            .any(|l| (l.energy - energy).abs() <= self.tolerance)
    }

    /// CSV `energy,min_witness_size,witness_count`.
    pub fn write_csv(&self, out: &mut impl Write, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(out, "# {line}")?;
        }
        writeln!(out, "energy,min_witness_size,witness_count")?;
        for l in &self.levels {
            writeln!(
                out,
                "{:.16e},{},{}",
                l.energy, l.min_witness_size, l.witness_count
            )?;
        }
        Ok(())
    }
}

pub fn finite_cluster_spectrum(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    max_size: usize,
) -> Result<FiniteClusterSpectrum> {
    finite_cluster_spectrum_capped(graph, kernel, max_size, DEFAULT_SHAPE_CAP)
}

pub fn finite_cluster_spectrum_capped(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    max_size: usize,
    cap: usize,
) -> Result<FiniteClusterSpectrum> {
    let shapes = enumerate_shapes_capped(graph, max_size, cap)?;
    let tolerance = degeneracy_tolerance(operator_norm_bound(kernel, graph));

    // per-shape diagonalization runs concurrently; the merge is a sort,
    // so the result does not depend on completion order
    let mut pairs: Vec<(f64, usize)> = shapes
        .par_iter()
        .enumerate()
        .map(|(idx, shape)| -> Result<Vec<(f64, usize)>> {
            let op = compress(
                graph,
                kernel,
                shape.vertices().to_vec(),
                Provenance {
                    kernel: kernel.name().to_string(),
                    region: format!("shape{idx}"),
                    ..Provenance::default()
                },
            )?;
            Ok(eigenvalues(&op)?
                .values
                .into_iter()
                .map(|v| (v, idx))
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut levels: Vec<ClusterEigenvalue> = Vec::new();
    let mut start = 0usize;
    for i in 0..=pairs.len() {
        let boundary = i == pairs.len() || (i > 0 && pairs[i].0 - pairs[i - 1].0 > tolerance);
        if boundary && i > start {
            let chunk = &pairs[start..i];
            let energy = chunk.iter().map(|p| p.0).sum::<f64>() / chunk.len() as f64;
            let mut by_shape: HashMap<usize, usize> = HashMap::new();
            for &(_, idx) in chunk {
                *by_shape.entry(idx).or_insert(0) += 1;
            }
            let mut witnesses: Vec<(usize, usize)> = by_shape.into_iter().collect();
            witnesses.sort();
            let min_witness_size = witnesses
                .iter()
                .map(|&(idx, _)| shapes[idx].size())
                .min()
                .unwrap();
            levels.push(ClusterEigenvalue {
                energy,
                min_witness_size,
                witness_count: chunk.len(),
                witnesses,
            });
            start = i;
        }
    }

    Ok(FiniteClusterSpectrum {
        truncation: max_size,
        levels,
        shapes,
        tolerance,
    })
}

/// An eigenvector of the percolation operator supported on finitely many
/// vertices, certified by a residual bound on an enlarged region.
#[derive(Clone, Debug)]
pub struct CompactEigenstate {
    pub energy: f64,
    /// (vertex, coefficient), box order, pruned of numerically-zero rows.
    pub support: Vec<(Vertex, f64)>,
    /// Diameter of the support in the full graph.
    pub diameter: usize,
    pub residual: f64,
    /// Residual acceptance threshold the state was certified against.
    pub tolerance: f64,
}

impl CompactEigenstate {
    pub fn support_size(&self) -> usize {
        self.support.len()
    }
}

/// Default residual tolerance: 1e-9 · K · sqrt(support size).
pub fn default_residual_tolerance(norm_bound: f64, support_size: usize) -> f64 {
    1e-9 * norm_bound.max(1.0) * (support_size.max(1) as f64).sqrt()
}

/// Residual ‖H f − E f‖ / ‖f‖ of the zero-extended support vector on the
/// support enlarged by `enlargement` graph steps.
fn compact_state_residual(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    state: &CompactEigenstate,
    enlargement: usize,
) -> Result<f64> {
    if state.support.is_empty() {
        return Err(Error::InvalidParameter(
            "compact state has empty support".into(),
        ));
    }
    for (v, _) in &state.support {
        if !cfg.is_active(v) {
            return Err(Error::InvalidParameter(format!(
                "support vertex {v} is not active in this configuration"
            )));
        }
    }
    // active ball of the requested radius around the support
    let mut seen: HashSet<Vertex> = state.support.iter().map(|(v, _)| v.clone()).collect();
    let mut frontier: VecDeque<(Vertex, usize)> =
        seen.iter().cloned().map(|v| (v, 0usize)).collect();
    while let Some((v, d)) = frontier.pop_front() {
        if d == enlargement {
            continue;
        }
        for n in graph.neighbors(&v) {
            if seen.insert(n.clone()) {
                frontier.push_back((n, d + 1));
            }
        }
    }
    let mut region: Vec<Vertex> = seen.into_iter().filter(|v| cfg.is_active(v)).collect();
    region.sort();

    let op = compress(graph, kernel, region, Provenance::default())?;
    let n = op.dim();
    let mut f = vec![0.0f64; n];
    for (v, value) in &state.support {
        let pos = op.vertex_position(v).expect("support is inside the region");
        f[pos] = *value;
    }
    let mut y = vec![0.0f64; n];
    for &(i, j, v) in &op.matrix().entries {
        y[i] += v * f[j];
        if i != j {
            y[j] += v * f[i];
        }
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        let r = y[i] - state.energy * f[i];
        num += r * r;
        den += f[i] * f[i];
    }
    if den == 0.0 {
        return Err(Error::InvalidParameter(
            "compact state has zero norm".into(),
        ));
    }
    Ok((num / den).sqrt())
}

/// Certify a compact eigenstate: extend by zero to the support enlarged
/// by `enlargement` ≥ R, apply the compression there, and test the
/// residual against the state's tolerance. A `true` verdict cannot flip
/// under a larger enlargement because the kernel range is R.
pub fn verify_compact_eigenstate(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    state: &CompactEigenstate,
    enlargement: usize,
) -> Result<bool> {
    if enlargement < kernel.range() {
        return Err(Error::InvalidParameter(format!(
            "enlargement {enlargement} must be at least the hopping range {}",
            kernel.range()
        )));
    }
    Ok(compact_state_residual(graph, kernel, cfg, state, enlargement)? <= state.tolerance)
}

/// Entries smaller than this (relative to the largest coefficient) are
/// treated as numerical zeros when extracting the support.
const SUPPORT_PRUNE_REL: f64 = 1e-12;

/// Search the numerical eigenspace of the box compression at `energy`
/// for vectors vanishing on ∂_R Λ. Such vectors extend by zero to
/// eigenvectors of the full percolation operator. Every returned state
/// is certified via [`verify_compact_eigenstate`] at enlargement R.
pub fn molecular_search(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    region: &BoxRegion,
    energy: f64,
    tau_res: Option<f64>,
) -> Result<Vec<CompactEigenstate>> {
    if !energy.is_finite() {
        return Err(Error::InvalidParameter("search energy must be finite".into()));
    }
    let bound = operator_norm_bound(kernel, graph);
    if energy.abs() > bound {
        return Ok(Vec::new());
    }
    let tolerance = degeneracy_tolerance(bound);
    let op = box_compression(graph, kernel, cfg, region, None)?;
    if op.dim() == 0 {
        return Ok(Vec::new());
    }
    let shell: HashSet<Vertex> = boundary_shell(graph, region, kernel.range())
        .into_iter()
        .collect();
    let shell_flag: Vec<bool> = op.vertices().iter().map(|v| shell.contains(v)).collect();
    let eig = eigen_decomposition(&op)?;

    let mut states = Vec::new();
    for block in &eig.blocks {
        let cluster: Vec<usize> = block
            .values
            .iter()
            .enumerate()
            .filter(|(_, &v)| (v - energy).abs() <= tolerance)
            .map(|(j, _)| j)
            .collect();
        if cluster.is_empty() {
            continue;
        }
        let shell_rows: Vec<usize> = block
            .positions
            .iter()
            .enumerate()
            .filter(|(_, &p)| shell_flag[p])
            .map(|(local, _)| local)
            .collect();
        let k = cluster.len();

        // combinations of eigenspace columns vanishing on the shell:
        // null-ish eigenvectors of the k x k Gram matrix of shell rows
        let combos: Vec<Vec<f64>> = if shell_rows.is_empty() {
            (0..k)
                .map(|a| {
                    let mut c = vec![0.0; k];
                    c[a] = 1.0;
                    c
                })
                .collect()
        } else {
            let mut gram = Mat::<f64>::zeros(k, k);
            for (a, &ja) in cluster.iter().enumerate() {
                for (b, &jb) in cluster.iter().enumerate().skip(a) {
                    let mut s = 0.0;
                    for &r in &shell_rows {
                        s += block.vectors[(r, ja)] * block.vectors[(r, jb)];
                    }
                    gram[(a, b)] = s;
                    gram[(b, a)] = s;
                }
            }
            ensure_sequential_solver();
            let gram_eig = gram
                .self_adjoint_eigen(Side::Lower)
                .map_err(|_| Error::Invariant("eigensolver failed on the Gram matrix".into()))?;
            let threshold = default_residual_tolerance(bound, block.positions.len());
            (0..k)
                .filter(|&a| gram_eig.S()[a].max(0.0).sqrt() <= threshold)
                .map(|a| (0..k).map(|b| gram_eig.U()[(b, a)]).collect())
                .collect()
        };

        for combo in combos {
            // assemble the global vector of this combination
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            let mut max_abs = 0.0f64;
            for (local, &pos) in block.positions.iter().enumerate() {
                let mut x = 0.0;
                for (a, &ja) in cluster.iter().enumerate() {
                    x += combo[a] * block.vectors[(local, ja)];
                }
                max_abs = max_abs.max(x.abs());
                coeffs.push((pos, x));
            }
            if max_abs == 0.0 {
                continue;
            }
            let support: Vec<(Vertex, f64)> = coeffs
                .into_iter()
                .filter(|&(_, x)| x.abs() > SUPPORT_PRUNE_REL * max_abs)
                .map(|(pos, x)| (op.vertices()[pos].clone(), x))
                .collect();
            if support.is_empty() {
                continue;
            }
            // Rayleigh quotient in the eigenbasis
            let norm_sq: f64 = combo.iter().map(|c| c * c).sum();
            let state_energy: f64 = cluster
                .iter()
                .zip(&combo)
                .map(|(&j, c)| c * c * block.values[j])
                .sum::<f64>()
                / norm_sq;
            let tol =
                tau_res.unwrap_or_else(|| default_residual_tolerance(bound, support.len()));
            let diameter = support_diameter(graph, &support);
            let mut state = CompactEigenstate {
                energy: state_energy,
                support,
                diameter,
                residual: f64::INFINITY,
                tolerance: tol,
            };
            let residual =
                compact_state_residual(graph, kernel, cfg, &state, kernel.range())?;
            if residual <= tol {
                state.residual = residual;
                states.push(state);
            }
        }
    }
    Ok(states)
}

fn support_diameter(graph: &PeriodicGraph, support: &[(Vertex, f64)]) -> usize {
    let spread: i64 = (0..graph.dimension())
        .map(|axis| {
            let lo = support.iter().map(|(v, _)| v.cell[axis]).min().unwrap();
            let hi = support.iter().map(|(v, _)| v.cell[axis]).max().unwrap();
            hi - lo
        })
        .sum();
    let cutoff = ((spread as usize) + 2) * (graph.orbit_count() + 2) + 4;
    let mut diameter = 0usize;
    for (i, (v, _)) in support.iter().enumerate() {
        for (w, _) in support.iter().skip(i + 1) {
            if let Some(d) = graph.graph_distance(v, w, cutoff, None) {
                diameter = diameter.max(d);
            }
        }
    }
    diameter
}
