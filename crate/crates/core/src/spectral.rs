//! Spectra of compressed operators.
//!
//! The nonzero pattern of a compression splits into connected components
//! (percolation clusters); each block is solved independently with a
//! dense symmetric eigensolver and the eigenvalues are merged. Blocks
//! larger than [`MAX_DENSE_BLOCK`] are rejected outright: counting
//! functions need the complete spectrum and a silent iterative fallback
//! would corrupt them.
//!
//! The closed-walk trace route ([`moment_walks`]) recomputes spectral
//! moments without ever touching the eigensolver, which makes the pair
//! (eigenvalues, walk traces) the strongest internal cross-check.

use crate::error::{Error, Result};
use crate::lattice::{boundary_shell, BoxRegion, PeriodicGraph};
use crate::operator::{
    compress, BoundaryPerturbation, CompressedOperator, HoppingKernel, Provenance,
    SparseSymmetric,
};
use crate::percolation::{active_vertices, Configuration};
use faer::{Mat, Par, Side};
use std::io::Write;
use std::sync::Once;

/// Dense solver cap; larger connected blocks are rejected.
pub const MAX_DENSE_BLOCK: usize = 4096;

/// Cap on the closed-walk moment order.
pub const MAX_WALK_MOMENT: usize = 8;

/// Relative degeneracy tolerance: τ_deg = 1e-8 · K.
pub fn degeneracy_tolerance(norm_bound: f64) -> f64 {
    1e-8 * norm_bound.max(1.0)
}

static FAER_MODE: Once = Once::new();

/// Per-matrix solves run sequentially so results are independent of the
/// worker count; parallelism lives one level up (blocks, realizations).
pub(crate) fn ensure_sequential_solver() {
    FAER_MODE.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Eigenvalues of a compression, sorted nondecreasing.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub dim: usize,
    pub provenance: Provenance,
}

impl Spectrum {
    /// One eigenvalue per line at 17 significant digits, preceded by a
    /// provenance header.
    pub fn write_dump(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# {}", self.provenance)?;
        for v in &self.values {
            writeln!(out, "{v:.16e}")?;
        }
        Ok(())
    }
}

/// Eigenvalues plus eigenvectors, kept in block form. `positions` maps
/// local block indices to positions in the operator's vertex list;
/// `vectors.col(j)` belongs to `values[j]`.
pub struct EigenBlock {
    pub positions: Vec<usize>,
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub struct EigenDecomposition {
    pub dim: usize,
    pub blocks: Vec<EigenBlock>,
}

impl EigenDecomposition {
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self
            .blocks
            .iter()
            .flat_map(|b| b.values.iter().copied())
            .collect();
        all.sort_by(f64::total_cmp);
        all
    }
}

/// Connected components of the nonzero pattern, each sorted, ordered by
/// smallest member.
fn split_blocks(dim: usize, entries: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for &(i, j, _) in entries {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..dim {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn check_finite(matrix: &SparseSymmetric) -> Result<()> {
    for &(i, j, v) in &matrix.entries {
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry { row: i, col: j });
        }
    }
    Ok(())
}

fn block_entries<'a>(
    entries: &'a [(usize, usize, f64)],
    positions: &[usize],
) -> Vec<(usize, usize, f64)> {
    let local: std::collections::HashMap<usize, usize> =
        positions.iter().enumerate().map(|(l, &g)| (g, l)).collect();
    entries
        .iter()
        .filter(|&&(i, j, _)| local.contains_key(&i) && local.contains_key(&j))
        .map(|&(i, j, v)| (local[&i], local[&j], v))
        .collect()
}

fn dense_from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Mat<f64> {
    let mut m = Mat::zeros(n, n);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
        if i != j {
            m[(j, i)] = v;
        }
    }
    m
}

fn solve_block_values(n: usize, entries: &[(usize, usize, f64)]) -> Result<Vec<f64>> {
    if n > MAX_DENSE_BLOCK {
        return Err(Error::BlockTooLarge {
            dim: n,
            max: MAX_DENSE_BLOCK,
        });
    }
    if n == 1 {
        let diag = entries
            .iter()
            .find(|&&(i, j, _)| i == 0 && j == 0)
            .map(|&(_, _, v)| v)
            .unwrap_or(0.0);
        return Ok(vec![diag]);
    }
    ensure_sequential_solver();
    let m = dense_from_entries(n, entries);
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::Invariant("dense eigensolver failed to converge".into()))
}

/// Full spectrum of a compressed operator via blockwise dense solves.
pub fn eigenvalues(op: &CompressedOperator) -> Result<Spectrum> {
    check_finite(op.matrix())?;
    let blocks = split_blocks(op.dim(), &op.matrix().entries);
    let mut values = Vec::with_capacity(op.dim());
    for positions in blocks {
        let local = block_entries(&op.matrix().entries, &positions);
        values.extend(solve_block_values(positions.len(), &local)?);
    }
    values.sort_by(f64::total_cmp);

    // internal cross-checks: trace identity and Gershgorin containment
    let n = op.dim();
    if n > 0 {
        let bound = op.matrix().gershgorin_bound().max(1.0);
        let trace_err = (values.iter().sum::<f64>() - op.trace()).abs();
        if trace_err > 1e-9 * n as f64 * bound {
            return Err(Error::Invariant(format!(
                "eigenvalue sum deviates from trace by {trace_err}"
            )));
        }
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs > bound * (1.0 + 1e-12) + 1e-12 {
            return Err(Error::Invariant(format!(
                "eigenvalue {max_abs} escapes the Gershgorin bound {bound}"
            )));
        }
    }
    Ok(Spectrum {
        values,
        dim: n,
        provenance: op.provenance().clone(),
    })
}

/// Blockwise eigendecomposition with eigenvectors.
pub fn eigen_decomposition(op: &CompressedOperator) -> Result<EigenDecomposition> {
    check_finite(op.matrix())?;
    let blocks = split_blocks(op.dim(), &op.matrix().entries);
    let mut out = Vec::with_capacity(blocks.len());
    for positions in blocks {
        let n = positions.len();
        if n > MAX_DENSE_BLOCK {
            return Err(Error::BlockTooLarge {
                dim: n,
                max: MAX_DENSE_BLOCK,
            });
        }
        let local = block_entries(&op.matrix().entries, &positions);
        if n == 1 {
            let diag = local.first().map(|&(_, _, v)| v).unwrap_or(0.0);
            let mut vectors = Mat::zeros(1, 1);
            vectors[(0, 0)] = 1.0;
            out.push(EigenBlock {
                positions,
                values: vec![diag],
                vectors,
            });
            continue;
        }
        ensure_sequential_solver();
        let m = dense_from_entries(n, &local);
        let eig = m
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Invariant("dense eigensolver failed to converge".into()))?;
        let values: Vec<f64> = (0..n).map(|i| eig.S()[i]).collect();
        let vectors = eig.U().to_owned();
        out.push(EigenBlock {
            positions,
            values,
            vectors,
        });
    }
    Ok(EigenDecomposition {
        dim: op.dim(),
        blocks: out,
    })
}

/// Normalized eigenvalue counting: #{i : λ_i < energy} / normalizer.
/// The inequality is strict and comparisons are exact.
pub fn counting(spectrum: &Spectrum, energy: f64, normalizer: usize) -> f64 {
    debug_assert!(normalizer >= 1);
    spectrum.values.partition_point(|&v| v < energy) as f64 / normalizer as f64
}

/// Spectral moment Σ λ_i^m / normalizer.
pub fn moment_spectral(spectrum: &Spectrum, m: usize, normalizer: usize) -> f64 {
    spectrum.values.iter().map(|v| v.powi(m as i32)).sum::<f64>() / normalizer as f64
}

/// Row-major full adjacency built from the upper triangle; shared by the
/// walk-trace routines.
fn adjacency_rows(matrix: &SparseSymmetric) -> Vec<Vec<(usize, f64)>> {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); matrix.dim];
    for &(i, j, v) in &matrix.entries {
        rows[i].push((j, v));
        if i != j {
            rows[j].push((i, v));
        }
    }
    rows
}

/// Σ_{v ∈ subset} (M^m)_{v,v} for m = 0..=m_max via repeated sparse
/// matrix-vector products of indicator columns. Never calls the
/// eigensolver.
fn walk_traces(rows: &[Vec<(usize, f64)>], subset: &[usize], m_max: usize) -> Vec<f64> {
    let n = rows.len();
    let mut traces = vec![0.0f64; m_max + 1];
    traces[0] = subset.len() as f64;
    if m_max == 0 || n == 0 {
        return traces;
    }
    let mut x = vec![0.0f64; n];
    let mut y = vec![0.0f64; n];
    for &v in subset {
        x.iter_mut().for_each(|e| *e = 0.0);
        x[v] = 1.0;
        for m in 1..=m_max {
            y.iter_mut().for_each(|e| *e = 0.0);
            for i in 0..n {
                let xi = x[i];
                if xi != 0.0 {
                    for &(j, val) in &rows[i] {
                        y[j] += val * xi;
                    }
                }
            }
            std::mem::swap(&mut x, &mut y);
            traces[m] += x[v];
        }
    }
    traces
}

/// Compression of the kernel to the active vertices of a box, with an
/// optional boundary perturbation added.
pub fn box_compression(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    region: &BoxRegion,
    pert: Option<&BoundaryPerturbation>,
) -> Result<CompressedOperator> {
    let active = active_vertices(graph, cfg, region);
    let provenance = Provenance {
        kernel: kernel.name().to_string(),
        seed: cfg.law().master_seed(),
        realization: cfg.law().realization(),
        region: region.describe(),
        perturbation: String::new(),
    };
    let op = compress(graph, kernel, active.clone(), provenance)?;
    match pert {
        None => Ok(op),
        Some(p) => {
            let realized =
                crate::operator::realize_perturbation(graph, kernel, region, cfg, &active, p)?;
            op.plus(&realized, &p.label())
        }
    }
}

/// Spectral moments of the box compression for every order up to `m_max`,
/// computed by the closed-walk route. Divided by `normalizer`.
pub fn walk_moments(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    region: &BoxRegion,
    m_max: usize,
    pert: Option<&BoundaryPerturbation>,
    normalizer: usize,
) -> Result<Vec<f64>> {
    if m_max > MAX_WALK_MOMENT {
        return Err(Error::MomentTooLarge {
            m: m_max,
            max: MAX_WALK_MOMENT,
        });
    }
    let op = box_compression(graph, kernel, cfg, region, pert)?;
    check_finite(op.matrix())?;
    let rows = adjacency_rows(op.matrix());
    let subset: Vec<usize> = (0..op.dim()).collect();
    let traces = walk_traces(&rows, &subset, m_max);
    Ok(traces
        .into_iter()
        .map(|t| t / normalizer as f64)
        .collect())
}

/// Single walk moment of order `m` (independent oracle for
/// [`moment_spectral`]).
pub fn moment_walks(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    region: &BoxRegion,
    m: usize,
    pert: Option<&BoundaryPerturbation>,
    normalizer: usize,
) -> Result<f64> {
    Ok(walk_moments(graph, kernel, cfg, region, m, pert, normalizer)?[m])
}

/// |Λ|⁻¹ |Tr((H^Λ)^m) − Tr(χ_Λ H^m)|, the boundary cost of truncating
/// before taking powers. The second trace is exact: walk entries of H^m
/// at v reach at most m · max_offset cells, so it is evaluated on the box
/// enlarged by that margin. The result is checked against the a-priori
/// bound |∂_{Rm}Λ| · deg₊^(m²R) · C^m / |Λ|.
pub fn boundary_trace_gap(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    cfg: &Configuration,
    region: &BoxRegion,
    m: usize,
) -> Result<f64> {
    if m > MAX_WALK_MOMENT {
        return Err(Error::MomentTooLarge {
            m,
            max: MAX_WALK_MOMENT,
        });
    }
    let volume = region.vertex_count(graph) as f64;

    let inner_op = box_compression(graph, kernel, cfg, region, None)?;
    let rows_inner = adjacency_rows(inner_op.matrix());
    let all_inner: Vec<usize> = (0..inner_op.dim()).collect();
    let trace_inner = walk_traces(&rows_inner, &all_inner, m)[m];

    let margin = m * kernel.max_entry_offset();
    let enlarged = region.enlarged(margin);
    let outer_op = box_compression(graph, kernel, cfg, &enlarged, None)?;
    let subset: Vec<usize> = outer_op
        .vertices()
        .iter()
        .enumerate()
        .filter(|(_, v)| region.contains_cell(&v.cell))
        .map(|(i, _)| i)
        .collect();
    let rows_outer = adjacency_rows(outer_op.matrix());
    let trace_outer = walk_traces(&rows_outer, &subset, m)[m];

    let gap = (trace_outer - trace_inner).abs() / volume;

    let shell = boundary_shell(graph, region, kernel.range() * m).len() as f64;
    let bound = shell
        * (graph.max_degree() as f64).powi((m * m * kernel.range()) as i32)
        * kernel.bound().max(1.0).powi(m as i32)
        / volume;
    if gap > bound {
        return Err(Error::Invariant(format!(
            "boundary trace gap {gap} exceeds its a-priori bound {bound}"
        )));
    }
    Ok(gap)
}

/// Eigenvalues clustered by single linkage: a new cluster starts whenever
/// the gap to the previous value exceeds the tolerance.
#[derive(Clone, Debug)]
pub struct DegeneracyList {
    /// (representative energy = cluster mean, multiplicity)
    pub clusters: Vec<(f64, usize)>,
    pub tolerance: f64,
}

impl DegeneracyList {
    pub fn total_multiplicity(&self) -> usize {
        self.clusters.iter().map(|c| c.1).sum()
    }
}

pub fn degeneracy_cluster(spectrum: &Spectrum, tolerance: f64) -> DegeneracyList {
    let mut clusters = Vec::new();
    let mut iter = spectrum.values.iter().copied();
    if let Some(first) = iter.next() {
        let mut sum = first;
        let mut count = 1usize;
        let mut last = first;
        for v in iter {
            if v - last > tolerance {
                clusters.push((sum / count as f64, count));
                sum = 0.0;
                count = 0;
            }
            sum += v;
            count += 1;
            last = v;
        }
        clusters.push((sum / count as f64, count));
    }
    DegeneracyList {
        clusters,
        tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_preset, BoxRegion, LatticePreset, Vertex};
    use crate::operator::{kernel_preset, operator_norm_bound, KernelPreset};
    use crate::percolation::PercolationLaw;

    fn v(orbit: usize, cell: &[i64]) -> Vertex {
        Vertex::new(orbit, cell.to_vec())
    }

    fn all_active() -> Configuration {
        Configuration::from_law(PercolationLaw::uniform(1.0, 2, 0).unwrap())
    }

    #[test]
    fn tiny_spectra() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();

        let single = compress(&chain, &k, vec![v(0, &[0])], Provenance::default()).unwrap();
        assert_eq!(eigenvalues(&single).unwrap().values, vec![0.0]);

        let dimer = compress(
            &chain,
            &k,
            vec![v(0, &[0]), v(0, &[1])],
            Provenance::default(),
        )
        .unwrap();
        let s = eigenvalues(&dimer).unwrap();
        assert!((s.values[0] + 1.0).abs() < 1e-12);
        assert!((s.values[1] - 1.0).abs() < 1e-12);

        let path3 = compress(
            &chain,
            &k,
            vec![v(0, &[0]), v(0, &[1]), v(0, &[2])],
            Provenance::default(),
        )
        .unwrap();
        let s = eigenvalues(&path3).unwrap();
        let sqrt2 = 2f64.sqrt();
        assert!((s.values[0] + sqrt2).abs() < 1e-12);
        assert!(s.values[1].abs() < 1e-12);
        assert!((s.values[2] - sqrt2).abs() < 1e-12);
    }

    #[test]
    fn counting_strictness() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();
        let dimer = compress(
            &chain,
            &k,
            vec![v(0, &[0]), v(0, &[1])],
            Provenance::default(),
        )
        .unwrap();
        let s = eigenvalues(&dimer).unwrap();
        assert_eq!(counting(&s, 0.0, 2), 0.5);
        assert_eq!(counting(&s, -1.0, 2), 0.0); // strict inequality
        assert_eq!(counting(&s, 1.0 + 1e-9, 2), 1.0);

        let path3 = compress(
            &chain,
            &k,
            vec![v(0, &[0]), v(0, &[1]), v(0, &[2])],
            Provenance::default(),
        )
        .unwrap();
        let s3 = eigenvalues(&path3).unwrap();
        assert!((counting(&s3, 0.1, 3) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn moments_trivial_cases() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();
        let cfg = all_active();
        let region = BoxRegion::cube(1, 32);
        let n = 32;

        let m0 = moment_walks(&chain, &k, &cfg, &region, 0, None, n).unwrap();
        assert_eq!(m0, 1.0);
        let m1 = moment_walks(&chain, &k, &cfg, &region, 1, None, n).unwrap();
        assert_eq!(m1, 0.0);
        let m2 = moment_walks(&chain, &k, &cfg, &region, 2, None, n).unwrap();
        assert!((m2 - (2.0 * n as f64 - 2.0) / n as f64).abs() < 1e-12);
    }

    #[test]
    fn moment_identity_spectral_vs_walks() {
        let square = build_preset(LatticePreset::Square);
        let k = kernel_preset(&square, KernelPreset::Adjacency).unwrap();
        let kk = operator_norm_bound(&k, &square);
        let region = BoxRegion::cube(2, 8);
        let n = region.vertex_count(&square);
        for r in 0..3 {
            let cfg =
                Configuration::from_law(PercolationLaw::new(vec![0.6], 5, r).unwrap());
            let op = box_compression(&square, &k, &cfg, &region, None).unwrap();
            let spec = eigenvalues(&op).unwrap();
            let walks = walk_moments(&square, &k, &cfg, &region, 6, None, n).unwrap();
            for m in 0..=6 {
                let a = moment_spectral(&spec, m, n);
                assert!(
                    (a - walks[m]).abs() <= 1e-8 * kk.powi(m as i32),
                    "m={m} spectral={a} walks={}",
                    walks[m]
                );
            }
        }
    }

    #[test]
    fn moment_cap_enforced() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();
        let cfg = all_active();
        let region = BoxRegion::cube(1, 4);
        assert!(matches!(
            moment_walks(&chain, &k, &cfg, &region, 9, None, 4),
            Err(Error::MomentTooLarge { .. })
        ));
    }

    #[test]
    fn trace_identities() {
        let square = build_preset(LatticePreset::Square);
        let k = kernel_preset(&square, KernelPreset::Adjacency).unwrap();
        let cfg =
            Configuration::from_law(PercolationLaw::new(vec![0.7], 12, 0).unwrap());
        let region = BoxRegion::cube(2, 10);
        let op = box_compression(&square, &k, &cfg, &region, None).unwrap();
        let spec = eigenvalues(&op).unwrap();
        let n = op.dim().max(1) as f64;
        let bound = op.matrix().gershgorin_bound().max(1.0);
        let sum: f64 = spec.values.iter().sum();
        assert!((sum - op.trace()).abs() <= 1e-9 * n * bound);
        let sum_sq: f64 = spec.values.iter().map(|x| x * x).sum();
        assert!((sum_sq - op.frobenius_squared()).abs() <= 1e-9 * n * bound * bound);
        // for adjacency: Tr M² = 2 · #edges
        let edges = op.matrix().entries.len() as f64;
        assert_eq!(op.frobenius_squared(), 2.0 * edges);
    }

    #[test]
    fn block_solve_matches_whole_matrix_solve() {
        let square = build_preset(LatticePreset::Square);
        let k = kernel_preset(&square, KernelPreset::Adjacency).unwrap();
        let region = BoxRegion::cube(2, 14);
        for r in 0..3 {
            let cfg =
                Configuration::from_law(PercolationLaw::new(vec![0.8], 77, r).unwrap());
            let op = box_compression(&square, &k, &cfg, &region, None).unwrap();
            if op.dim() == 0 {
                continue;
            }
            let blockwise = eigenvalues(&op).unwrap().values;
            // dense solve of the whole matrix, ignoring block structure
            ensure_sequential_solver();
            let dense = dense_from_entries(op.dim(), &op.matrix().entries);
            let mut whole = dense.self_adjoint_eigenvalues(Side::Lower).unwrap();
            whole.sort_by(f64::total_cmp);
            assert_eq!(blockwise.len(), whole.len());
            for (a, b) in blockwise.iter().zip(&whole) {
                assert!((a - b).abs() < 1e-9, "block {a} vs dense {b}");
            }
        }
    }

    #[test]
    fn bipartite_spectra_are_symmetric() {
        for preset in [
            LatticePreset::Chain,
            LatticePreset::Square,
            LatticePreset::Honeycomb,
        ] {
            let g = build_preset(preset);
            let k = kernel_preset(&g, KernelPreset::Adjacency).unwrap();
            let cfg =
                Configuration::from_law(PercolationLaw::uniform(0.8, g.orbit_count(), 3).unwrap());
            let region = BoxRegion::cube(g.dimension(), 6);
            let op = box_compression(&g, &k, &cfg, &region, None).unwrap();
            let s = eigenvalues(&op).unwrap();
            let n = s.values.len();
            for i in 0..n {
                let mirrored = -s.values[n - 1 - i];
                assert!(
                    (s.values[i] - mirrored).abs() < 1e-9,
                    "spectrum not symmetric for {preset:?}"
                );
            }
        }
    }

    #[test]
    fn gap_trivial_and_chain_exact() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();
        let cfg = all_active();
        let region = BoxRegion::cube(1, 20);
        assert_eq!(
            boundary_trace_gap(&chain, &k, &cfg, &region, 1).unwrap(),
            0.0
        );
        let gap2 = boundary_trace_gap(&chain, &k, &cfg, &region, 2).unwrap();
        assert!((gap2 - 2.0 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn gap_vanishes_for_interior_cluster() {
        let square = build_preset(LatticePreset::Square);
        let k = kernel_preset(&square, KernelPreset::Adjacency).unwrap();
        let law = PercolationLaw::uniform(0.0, 1, 0).unwrap();
        let cfg = Configuration::with_overrides(
            law,
            [
                (v(0, &[4, 4]), true),
                (v(0, &[4, 5]), true),
                (v(0, &[5, 4]), true),
            ],
        );
        let region = BoxRegion::cube(2, 10);
        for m in 0..=4 {
            assert_eq!(
                boundary_trace_gap(&square, &k, &cfg, &region, m).unwrap(),
                0.0,
                "m={m}"
            );
        }
    }

    #[test]
    fn degeneracy_clustering() {
        let spec = Spectrum {
            values: vec![-1.0, -1.0 + 1e-12, 0.0, 0.5, 0.5 + 1e-12, 0.5 + 2e-12],
            dim: 6,
            provenance: Provenance::default(),
        };
        let list = degeneracy_cluster(&spec, 1e-9);
        assert_eq!(list.total_multiplicity(), 6);
        assert_eq!(list.clusters.len(), 3);
        assert_eq!(list.clusters[0].1, 2);
        assert_eq!(list.clusters[1].1, 1);
        assert_eq!(list.clusters[2].1, 3);
    }

    #[test]
    fn spectrum_dump_format() {
        let chain = build_preset(LatticePreset::Chain);
        let k = kernel_preset(&chain, KernelPreset::Adjacency).unwrap();
        let dimer = compress(
            &chain,
            &k,
            vec![v(0, &[0]), v(0, &[1])],
            Provenance {
                kernel: "adjacency".into(),
                seed: 1,
                realization: 2,
                region: "[0]+2".into(),
                perturbation: String::new(),
            },
        )
        .unwrap();
        let s = eigenvalues(&dimer).unwrap();
        let mut buf = Vec::new();
        s.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# kernel=adjacency seed=1 realization=2"));
        assert_eq!(text.lines().count(), 3);
    }
}
