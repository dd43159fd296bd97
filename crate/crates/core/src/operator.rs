//! Finite-hopping-range operators, their compressions to finite vertex
//! sets, and boundary perturbations.
//!
//! A kernel assigns a real coupling to pairs of orbits at a relative cell
//! offset. Stored entries are canonical (one per symmetric pair), which
//! makes symmetry exact by construction. Equivariance under translation
//! is structural: entries never depend on the absolute cell.

use crate::error::{Error, Result};
use crate::hashing;
use crate::lattice::{boundary_shell, BoxRegion, PeriodicGraph, Vertex};
use crate::percolation::Configuration;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

/// Canonical key for a kernel entry: `(a, b, o)` identified with
/// `(b, a, -o)`, the lexicographically smaller representative kept.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct EntryKey {
    orbit_a: usize,
    orbit_b: usize,
    offset: Vec<i64>,
}

impl EntryKey {
    fn canonical(orbit_a: usize, orbit_b: usize, offset: Vec<i64>) -> Self {
        let direct = EntryKey {
            orbit_a,
            orbit_b,
            offset: offset.clone(),
        };
        let reversed = EntryKey {
            orbit_a: orbit_b,
            orbit_b: orbit_a,
            offset: offset.iter().map(|o| -o).collect(),
        };
        if direct <= reversed {
            direct
        } else {
            reversed
        }
    }
}

/// Symmetric, translation-equivariant kernel of finite range.
///
/// Range semantics are strict: entries must vanish at graph distance
/// `>= range`, so the adjacency kernel (entries at distance 1) carries
/// `range = 2`. Presets compute the minimal valid range automatically.
#[derive(Clone, Debug)]
pub struct HoppingKernel {
    name: String,
    range: usize,
    bound: f64,
    entries: BTreeMap<EntryKey, f64>,
    // per-orbit stencil, both directions: (orbit_b, offset, value)
    stencil: Vec<Vec<(usize, Vec<i64>, f64)>>,
}

/// BFS cutoff when measuring the graph distance of a kernel entry during
/// validation; entries that far apart are rejected.
const ENTRY_DISTANCE_CAP: usize = 64;

impl HoppingKernel {
    /// Build a kernel from raw entries `(orbit_a, orbit_b, offset, value)`.
    /// Symmetric duplicates must agree in value; zero entries are dropped;
    /// the range is the maximal entry distance plus one.
    pub fn new(
        name: impl Into<String>,
        graph: &PeriodicGraph,
        raw_entries: Vec<(usize, usize, Vec<i64>, f64)>,
    ) -> Result<Self> {
        let mut entries: BTreeMap<EntryKey, f64> = BTreeMap::new();
        for (a, b, offset, value) in raw_entries {
            if a >= graph.orbit_count() || b >= graph.orbit_count() {
                return Err(Error::InvalidKernel(format!(
                    "entry ({a},{b},{offset:?}) references an orbit >= {}",
                    graph.orbit_count()
                )));
            }
            if offset.len() != graph.dimension() {
                return Err(Error::InvalidKernel(format!(
                    "entry ({a},{b}) offset has length {}, expected {}",
                    offset.len(),
                    graph.dimension()
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidKernel(format!(
                    "entry ({a},{b},{offset:?}) has non-finite value"
                )));
            }
            if value == 0.0 {
                continue;
            }
            let key = EntryKey::canonical(a, b, offset);
            if let Some(&prev) = entries.get(&key) {
                if prev != value {
                    return Err(Error::InvalidKernel(format!(
                        "symmetry violated: entries ({},{},{:?}) carry both {prev} and {value}",
                        key.orbit_a, key.orbit_b, key.offset
                    )));
                }
            } else {
                entries.insert(key, value);
            }
        }

        // minimal valid range under the strict inequality
        let mut max_dist = 0usize;
        for key in entries.keys() {
            let v = Vertex::new(key.orbit_a, vec![0; graph.dimension()]);
            let w = Vertex::new(key.orbit_b, key.offset.clone());
            let dist = graph
                .graph_distance(&v, &w, ENTRY_DISTANCE_CAP, None)
                .ok_or_else(|| {
                    Error::InvalidKernel(format!(
                        "entry ({},{},{:?}) connects sites farther than {ENTRY_DISTANCE_CAP} steps",
                        key.orbit_a, key.orbit_b, key.offset
                    ))
                })?;
            max_dist = max_dist.max(dist);
        }
        let range = max_dist + 1;
        let bound = entries.values().fold(0.0f64, |m, v| m.max(v.abs()));

        let mut stencil: Vec<Vec<(usize, Vec<i64>, f64)>> =
            vec![Vec::new(); graph.orbit_count()];
        for (key, &value) in &entries {
            stencil[key.orbit_a].push((key.orbit_b, key.offset.clone(), value));
            let is_self_symmetric =
                key.orbit_a == key.orbit_b && key.offset.iter().all(|&o| o == 0);
            if !is_self_symmetric {
                stencil[key.orbit_b].push((
                    key.orbit_a,
                    key.offset.iter().map(|o| -o).collect(),
                    value,
                ));
            }
        }
        for row in &mut stencil {
            row.sort_by(|x, y| (x.0, &x.1).cmp(&(y.0, &y.1)));
        }

        Ok(HoppingKernel {
            name: name.into(),
            range,
            bound,
            entries,
            stencil,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Hopping range R; entries vanish at graph distance >= R.
    pub fn range(&self) -> usize {
        self.range
    }

    /// Entry bound C = max |H(v,w)|.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Largest |offset|_∞ over the stored entries; a walk of m kernel
    /// steps moves at most m times this many cells per axis.
    pub fn max_entry_offset(&self) -> usize {
        self.entries
            .keys()
            .flat_map(|k| k.offset.iter().map(|o| o.unsigned_abs() as usize))
            .max()
            .unwrap_or(0)
    }

    /// Kernel value H(v, w).
    pub fn value(&self, v: &Vertex, w: &Vertex) -> f64 {
        let offset: Vec<i64> = w.cell.iter().zip(&v.cell).map(|(a, b)| a - b).collect();
        let key = EntryKey::canonical(v.orbit, w.orbit, offset);
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Neighbor templates with values for a given orbit (both directions).
    pub fn stencil(&self, orbit: usize) -> &[(usize, Vec<i64>, f64)] {
        &self.stencil[orbit]
    }

    /// Parse the kernel file format: one entry per line
    /// `orbit_a orbit_b o_1 ... o_d value`; symmetric completion is
    /// automatic and conflicting duplicates are rejected by line.
    pub fn from_text(
        name: impl Into<String>,
        graph: &PeriodicGraph,
        text: &str,
    ) -> Result<Self> {
        let d = graph.dimension();
        let mut raw = Vec::new();
        for (idx, line_raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line_raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != d + 3 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `orbit_a orbit_b {d} offsets value`"),
                });
            }
            let parse_int = |s: &str| -> Result<i64> {
                s.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("expected integer, got `{s}`"),
                })
            };
            let a = parse_int(fields[0])?;
            let b = parse_int(fields[1])?;
            if a < 0 || b < 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "orbit indices must be nonnegative".into(),
                });
            }
            let offset = fields[2..2 + d]
                .iter()
                .map(|s| parse_int(s))
                .collect::<Result<Vec<i64>>>()?;
            let value: f64 = fields[d + 2].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("expected real value, got `{}`", fields[d + 2]),
            })?;
            raw.push((a as usize, b as usize, offset, value));
        }
        HoppingKernel::new(name, graph, raw)
    }

    /// Canonical text form (one canonical entry per line).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            out.push_str(&format!("{} {}", key.orbit_a, key.orbit_b));
            for o in &key.offset {
                out.push_str(&format!(" {o}"));
            }
            out.push_str(&format!(" {value}\n"));
        }
        out
    }
}

/// Built-in kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelPreset {
    Adjacency,
    Laplacian,
    /// Nearest plus next-nearest hopping with couplings (t1, t2).
    Nnn(f64, f64),
}

pub fn kernel_preset(graph: &PeriodicGraph, preset: KernelPreset) -> Result<HoppingKernel> {
    match preset {
        KernelPreset::Adjacency => {
            let raw = graph
                .generators()
                .iter()
                .map(|g| (g.orbit_a, g.orbit_b, g.offset.clone(), 1.0))
                .collect();
            HoppingKernel::new("adjacency", graph, raw)
        }
        KernelPreset::Laplacian => {
            // adjacency minus the full-graph degree on the diagonal; the
            // degree is taken in the periodic graph, not in the random
            // subgraph, so equivariance survives site deletion
            let mut raw: Vec<(usize, usize, Vec<i64>, f64)> = graph
                .generators()
                .iter()
                .map(|g| (g.orbit_a, g.orbit_b, g.offset.clone(), 1.0))
                .collect();
            for orbit in 0..graph.orbit_count() {
                raw.push((
                    orbit,
                    orbit,
                    vec![0; graph.dimension()],
                    -(graph.orbit_degree(orbit) as f64),
                ));
            }
            HoppingKernel::new("laplacian", graph, raw)
        }
        KernelPreset::Nnn(t1, t2) => {
            let mut raw: Vec<(usize, usize, Vec<i64>, f64)> = graph
                .generators()
                .iter()
                .map(|g| (g.orbit_a, g.orbit_b, g.offset.clone(), t1))
                .collect();
            if t2 != 0.0 {
                // orbit pairs at graph distance exactly two
                let mut seen: HashSet<EntryKey> = HashSet::new();
                for orbit in 0..graph.orbit_count() {
                    let origin = Vertex::new(orbit, vec![0; graph.dimension()]);
                    let mut first: HashSet<Vertex> = HashSet::new();
                    for n in graph.neighbors(&origin) {
                        first.insert(n);
                    }
                    for n in first.clone() {
                        for nn in graph.neighbors(&n) {
                            if nn == origin || first.contains(&nn) {
                                continue;
                            }
                            let key =
                                EntryKey::canonical(orbit, nn.orbit, nn.cell.clone());
                            if seen.insert(key) {
                                raw.push((orbit, nn.orbit, nn.cell, t2));
                            }
                        }
                    }
                }
            }
            HoppingKernel::new("nnn", graph, raw)
        }
    }
}

/// Deterministic a-priori bound K = C · 2 · deg₊^R on the operator norm;
/// every eigenvalue of every compression lies in [-K, K].
pub fn operator_norm_bound(kernel: &HoppingKernel, graph: &PeriodicGraph) -> f64 {
    kernel.bound * 2.0 * (graph.max_degree() as f64).powi(kernel.range as i32)
}

/// Sparse symmetric matrix stored as the sorted upper triangle
/// (row <= col), each unordered pair exactly once.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    pub fn zero(dim: usize) -> Self {
        SparseSymmetric {
            dim,
            entries: Vec::new(),
        }
    }

    fn normalize(&mut self) -> Result<()> {
        self.entries.sort_by_key(|&(i, j, _)| (i, j));
        for w in self.entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Invariant(format!(
                    "duplicate matrix entry at ({},{})",
                    w[0].0, w[0].1
                )));
            }
        }
        Ok(())
    }

    /// Entrywise sum.
    pub fn plus(&self, other: &SparseSymmetric) -> Result<SparseSymmetric> {
        if self.dim != other.dim {
            return Err(Error::Invariant(format!(
                "matrix dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in self.entries.iter().chain(other.entries.iter()) {
            *merged.entry((i, j)).or_insert(0.0) += v;
        }
        Ok(SparseSymmetric {
            dim: self.dim,
            entries: merged
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
        })
    }

    /// Largest Gershgorin radius bound max_i Σ_j |M(i,j)|.
    pub fn gershgorin_bound(&self) -> f64 {
        let mut row_sum = vec![0.0f64; self.dim];
        for &(i, j, v) in &self.entries {
            row_sum[i] += v.abs();
            if i != j {
                row_sum[j] += v.abs();
            }
        }
        row_sum.into_iter().fold(0.0, f64::max)
    }
}

/// Where a compressed operator came from; echoed into output headers.
#[derive(Clone, Debug, Default)]
pub struct Provenance {
    pub kernel: String,
    pub seed: u64,
    pub realization: u64,
    pub region: String,
    pub perturbation: String,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kernel={} seed={} realization={} box={} pert={}",
            self.kernel,
            self.seed,
            self.realization,
            if self.region.is_empty() { "-" } else { &self.region },
            if self.perturbation.is_empty() {
                "none"
            } else {
                &self.perturbation
            },
        )
    }
}

/// Principal submatrix of a kernel on an ordered vertex list.
#[derive(Clone, Debug)]
pub struct CompressedOperator {
    vertices: Vec<Vertex>,
    index: HashMap<Vertex, usize>,
    matrix: SparseSymmetric,
    provenance: Provenance,
}

impl CompressedOperator {
    pub fn dim(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex_position(&self, v: &Vertex) -> Option<usize> {
        self.index.get(v).copied()
    }

    pub fn matrix(&self) -> &SparseSymmetric {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Exact trace (sum of diagonal entries).
    pub fn trace(&self) -> f64 {
        self.matrix
            .entries
            .iter()
            .filter(|&&(i, j, _)| i == j)
            .map(|&(_, _, v)| v)
            .sum()
    }

    /// Σ_{v,w} M(v,w)² = Tr M².
    pub fn frobenius_squared(&self) -> f64 {
        self.matrix
            .entries
            .iter()
            .map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum()
    }

    /// Entrywise sum with a perturbation matrix over the same vertex list.
    pub fn plus(&self, pert: &SparseSymmetric, label: &str) -> Result<CompressedOperator> {
        let matrix = self.matrix.plus(pert)?;
        let mut provenance = self.provenance.clone();
        provenance.perturbation = label.to_string();
        Ok(CompressedOperator {
            vertices: self.vertices.clone(),
            index: self.index.clone(),
            matrix,
            provenance,
        })
    }
}

/// Compress the kernel to a duplicate-free ordered vertex list.
pub fn compress(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    vertices: Vec<Vertex>,
    provenance: Provenance,
) -> Result<CompressedOperator> {
    let mut index: HashMap<Vertex, usize> = HashMap::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        if index.insert(v.clone(), i).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate vertex {v} in compression list"
            )));
        }
        if v.orbit >= graph.orbit_count() {
            return Err(Error::InvalidParameter(format!(
                "vertex {v} references an orbit >= {}",
                graph.orbit_count()
            )));
        }
    }
    let mut entries = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        for (orbit_b, offset, value) in kernel.stencil(v.orbit) {
            let w = Vertex::new(*orbit_b, v.cell.iter().zip(offset).map(|(c, o)| c + o).collect());
            if let Some(&j) = index.get(&w) {
                if i <= j {
                    entries.push((i, j, *value));
                }
            }
        }
    }
    let mut matrix = SparseSymmetric {
        dim: vertices.len(),
        entries,
    };
    matrix.normalize()?;
    Ok(CompressedOperator {
        vertices,
        index,
        matrix,
        provenance,
    })
}

/// Boundary perturbation families of bounded strength and width.
///
/// `width` counts shell thickness: the realized matrix is supported on
/// pairs with both endpoints in ∂_width Λ (hence within the admissible
/// class with boundary parameter 2·width). For `PeriodicWrap` the width
/// is implied by the kernel range and the field is ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPerturbation {
    pub kind: PerturbationKind,
    pub strength: f64,
    pub width: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PerturbationKind {
    /// Torus closure: kernel entries that would leave the box re-enter on
    /// the opposite side.
    PeriodicWrap,
    /// `strength · δ_{v,w}` on the shell ∂_width Λ.
    DiagonalPotential,
    /// Hash-addressed symmetric entries in [-strength, strength] on all
    /// pairs of shell vertices.
    RandomSymmetric,
}

impl BoundaryPerturbation {
    pub fn periodic_wrap() -> Self {
        BoundaryPerturbation {
            kind: PerturbationKind::PeriodicWrap,
            strength: 0.0,
            width: 0,
            seed: 0,
        }
    }

    pub fn diagonal(strength: f64, width: usize) -> Self {
        BoundaryPerturbation {
            kind: PerturbationKind::DiagonalPotential,
            strength,
            width,
            seed: 0,
        }
    }

    pub fn random_symmetric(strength: f64, width: usize, seed: u64) -> Self {
        BoundaryPerturbation {
            kind: PerturbationKind::RandomSymmetric,
            strength,
            width,
            seed,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            PerturbationKind::PeriodicWrap => "periodic_wrap".to_string(),
            PerturbationKind::DiagonalPotential => {
                format!("diagonal_potential(s={},w={})", self.strength, self.width)
            }
            PerturbationKind::RandomSymmetric => format!(
                "random_symmetric(s={},w={},seed={})",
                self.strength, self.width, self.seed
            ),
        }
    }
}

/// Realize a boundary perturbation as a sparse symmetric matrix over the
/// given ordered active-vertex list of the box. The result is validated
/// against the perturbation axioms (symmetry is structural; bound and
/// shell support are checked) and violations report the failing axiom.
pub fn realize_perturbation(
    graph: &PeriodicGraph,
    kernel: &HoppingKernel,
    region: &BoxRegion,
    cfg: &Configuration,
    active: &[Vertex],
    pert: &BoundaryPerturbation,
) -> Result<SparseSymmetric> {
    let index: HashMap<&Vertex, usize> = active.iter().zip(0..).collect();
    let mut accum: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    let effective_width = match pert.kind {
        PerturbationKind::PeriodicWrap => 2 * kernel.range(),
        _ => pert.width,
    };
    let shell: HashSet<Vertex> = boundary_shell(graph, region, effective_width)
        .into_iter()
        .collect();

    match pert.kind {
        PerturbationKind::PeriodicWrap => {
            let sides = region.sides();
            let corner = region.corner();
            for v in active {
                let &i = index.get(v).unwrap();
                for (orbit_b, offset, value) in kernel.stencil(v.orbit) {
                    let raw_cell: Vec<i64> =
                        v.cell.iter().zip(offset).map(|(c, o)| c + o).collect();
                    if region.contains_cell(&raw_cell) {
                        continue;
                    }
                    let wrapped: Vec<i64> = raw_cell
                        .iter()
                        .zip(corner)
                        .zip(sides)
                        .map(|((&c, &lo), &len)| {
                            let len = len as i64;
                            lo + (c - lo).rem_euclid(len)
                        })
                        .collect();
                    let w = Vertex::new(*orbit_b, wrapped);
                    if !cfg.is_active(&w) {
                        continue;
                    }
                    let Some(&j) = index.get(&w) else { continue };
                    // both directions of the stencil visit each wrapped
                    // pair once from each side; keep i <= j and take the
                    // diagonal at half weight since it is seen twice
                    if i < j {
                        *accum.entry((i, j)).or_insert(0.0) += value;
                    } else if i == j {
                        *accum.entry((i, j)).or_insert(0.0) += value / 2.0;
                    }
                }
            }
        }
        PerturbationKind::DiagonalPotential => {
            for v in active {
                if shell.contains(v) {
                    let &i = index.get(v).unwrap();
                    if pert.strength != 0.0 {
                        accum.insert((i, i), pert.strength);
                    }
                }
            }
        }
        PerturbationKind::RandomSymmetric => {
            if pert.strength != 0.0 {
                let shell_active: Vec<(usize, &Vertex)> = active
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| shell.contains(v))
                    .collect();
                for (a, &(i, vi)) in shell_active.iter().enumerate() {
                    for &(j, vj) in shell_active.iter().skip(a) {
                        let mut words: Vec<u64> =
                            vec![vi.orbit as u64];
                        words.extend(vi.cell.iter().map(|&c| c as u64));
                        words.push(vj.orbit as u64);
                        words.extend(vj.cell.iter().map(|&c| c as u64));
                        let u = hashing::unit_f64(hashing::chain(pert.seed, &words));
                        let value = pert.strength * (2.0 * u - 1.0);
                        accum.insert((i, j), value);
                    }
                }
            }
        }
    }

    let matrix = SparseSymmetric {
        dim: active.len(),
        entries: accum
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect(),
    };

    // axiom checks on the realized matrix
    let max_abs = matrix
        .entries
        .iter()
        .fold(0.0f64, |m, &(_, _, v)| m.max(v.abs()));
    let strength_cap = match pert.kind {
        PerturbationKind::PeriodicWrap => kernel.bound(),
        _ => pert.strength.abs(),
    };
    if max_abs > strength_cap + 1e-15 {
        return Err(Error::InvalidPerturbation(format!(
            "boundedness violated: |B(v,w)| = {max_abs} exceeds {strength_cap}"
        )));
    }
    for &(i, j, _) in &matrix.entries {
        if !shell.contains(&active[i]) || !shell.contains(&active[j]) {
            return Err(Error::InvalidPerturbation(format!(
                "support violated: entry ({},{}) leaves the boundary shell of width {effective_width}",
                active[i], active[j]
            )));
        }
    }
    Ok(matrix)
}
