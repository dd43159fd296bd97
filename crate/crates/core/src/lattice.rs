//! Periodic graphs with a ℤᵈ translation action and a finite quotient.
//!
//! A graph is described by its vertex orbits and a list of edge generators
//! `(orbit_a, orbit_b, offset)`: the full graph has a vertex `(orbit, cell)`
//! for every orbit and every cell in ℤᵈ, and an edge between `(a, c)` and
//! `(b, c + offset)` for every generator and every cell. Axis-aligned boxes
//! of cells play the role of the exhaustion sequence; their boundary shells
//! shrink relative to the volume, which is what every limit theorem here
//! rests on.

use crate::error::{Error, Result};
use std::collections::{HashSet, VecDeque};
use std::fmt;

/// A vertex of the periodic graph: an orbit index plus a cell in ℤᵈ.
/// Translation by γ ∈ ℤᵈ acts on the cell and fixes the orbit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vertex {
    pub orbit: usize,
    pub cell: Vec<i64>,
}

impl Vertex {
    pub fn new(orbit: usize, cell: Vec<i64>) -> Self {
        Vertex { orbit, cell }
    }

    pub fn translated(&self, shift: &[i64]) -> Vertex {
        Vertex {
            orbit: self.orbit,
            cell: self.cell.iter().zip(shift).map(|(c, s)| c + s).collect(),
        }
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}; ", self.orbit)?;
        for (i, c) in self.cell.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// One orbit of edges under translation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeGenerator {
    pub orbit_a: usize,
    pub orbit_b: usize,
    pub offset: Vec<i64>,
}

impl EdgeGenerator {
    pub fn new(orbit_a: usize, orbit_b: usize, offset: Vec<i64>) -> Self {
        EdgeGenerator {
            orbit_a,
            orbit_b,
            offset,
        }
    }

    /// The same undirected edge class read from the other endpoint.
    fn reversed(&self) -> EdgeGenerator {
        EdgeGenerator {
            orbit_a: self.orbit_b,
            orbit_b: self.orbit_a,
            offset: self.offset.iter().map(|o| -o).collect(),
        }
    }

    fn canonical(&self) -> EdgeGenerator {
        let rev = self.reversed();
        if *self <= rev {
            self.clone()
        } else {
            rev
        }
    }
}

/// ℤᵈ-periodic graph with finitely many vertex orbits.
#[derive(Clone, Debug)]
pub struct PeriodicGraph {
    name: String,
    dimension: usize,
    orbit_count: usize,
    generators: Vec<EdgeGenerator>,
    degrees: Vec<usize>,
    // per-orbit neighbor templates, both directions of every generator
    stencil: Vec<Vec<(usize, Vec<i64>)>>,
}

impl PeriodicGraph {
    /// Validates all structural invariants: index ranges, no self-loops,
    /// no duplicate edge classes, and connectivity (bounded BFS, see
    /// `check_connected`).
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        orbit_count: usize,
        generators: Vec<EdgeGenerator>,
    ) -> Result<Self> {
        let name = name.into();
        if dimension == 0 {
            return Err(Error::InvalidGraph("dimension must be positive".into()));
        }
        if orbit_count == 0 {
            return Err(Error::InvalidGraph("orbit count must be positive".into()));
        }
        if generators.is_empty() {
            return Err(Error::InvalidGraph("no edge generators".into()));
        }

        let mut canon_seen: HashSet<EdgeGenerator> = HashSet::new();
        for g in &generators {
            if g.offset.len() != dimension {
                return Err(Error::InvalidGraph(format!(
                    "generator ({},{}) has offset of length {}, expected {}",
                    g.orbit_a,
                    g.orbit_b,
                    g.offset.len(),
                    dimension
                )));
            }
            if g.orbit_a >= orbit_count || g.orbit_b >= orbit_count {
                return Err(Error::InvalidGraph(format!(
                    "generator ({},{}) references an orbit >= {}",
                    g.orbit_a, g.orbit_b, orbit_count
                )));
            }
            if g.orbit_a == g.orbit_b && g.offset.iter().all(|&o| o == 0) {
                return Err(Error::InvalidGraph(format!(
                    "self-loop generator at orbit {}",
                    g.orbit_a
                )));
            }
            if !canon_seen.insert(g.canonical()) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge class ({},{},{:?})",
                    g.orbit_a, g.orbit_b, g.offset
                )));
            }
        }

        let mut degrees = vec![0usize; orbit_count];
        let mut stencil: Vec<Vec<(usize, Vec<i64>)>> = vec![Vec::new(); orbit_count];
        for g in &generators {
            stencil[g.orbit_a].push((g.orbit_b, g.offset.clone()));
            let rev = g.reversed();
            stencil[rev.orbit_a].push((rev.orbit_b, rev.offset.clone()));
            if g.orbit_a == g.orbit_b {
                degrees[g.orbit_a] += 2;
            } else {
                degrees[g.orbit_a] += 1;
                degrees[g.orbit_b] += 1;
            }
        }
        for row in &mut stencil {
            row.sort();
        }

        let graph = PeriodicGraph {
            name,
            dimension,
            orbit_count,
            generators,
            degrees,
            stencil,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    /// Connectivity check by bounded BFS in the infinite graph.
    ///
    /// The graph is connected iff every `(orbit, δ)` with `|δ|_∞ ≤ 1` is
    /// reachable from `(0, 0)`: paths to arbitrary vertices are then
    /// obtained by composing translated copies. The BFS is confined to
    /// cells with `|c|_∞ ≤ M`; for exotic generator sets whose connecting
    /// paths wander farther than that the check rejects with a clear
    /// message rather than looping forever.
    fn check_connected(&self) -> Result<()> {
        let o_max = self
            .generators
            .iter()
            .flat_map(|g| g.offset.iter().map(|o| o.unsigned_abs()))
            .max()
            .unwrap_or(1)
            .max(1) as i64;
        let radius = 4 * (o_max + self.orbit_count as i64);

        let mut targets: HashSet<Vertex> = HashSet::new();
        let mut deltas: Vec<Vec<i64>> = vec![vec![]];
        for _ in 0..self.dimension {
            let mut next = Vec::new();
            for d in &deltas {
                for step in [-1i64, 0, 1] {
                    let mut e = d.clone();
                    e.push(step);
                    next.push(e);
                }
            }
            deltas = next;
        }
        for orbit in 0..self.orbit_count {
            for d in &deltas {
                targets.insert(Vertex::new(orbit, d.clone()));
            }
        }

        let start = Vertex::new(0, vec![0; self.dimension]);
        let mut seen: HashSet<Vertex> = HashSet::new();
        let mut queue = VecDeque::new();
        seen.insert(start.clone());
        targets.remove(&start);
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            if targets.is_empty() {
                return Ok(());
            }
            for w in self.neighbors(&v) {
                if w.cell.iter().any(|c| c.abs() > radius) {
                    continue;
                }
                if seen.insert(w.clone()) {
                    targets.remove(&w);
                    queue.push_back(w);
                }
            }
        }
        if targets.is_empty() {
            Ok(())
        } else {
            let miss = targets.iter().min().unwrap();
            Err(Error::InvalidGraph(format!(
                "graph is not connected: {miss} unreachable from (0; 0) within cell radius {radius}"
            )))
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn orbit_count(&self) -> usize {
        self.orbit_count
    }

    pub fn generators(&self) -> &[EdgeGenerator] {
        &self.generators
    }

    /// Degree of any vertex in the given orbit.
    pub fn orbit_degree(&self, orbit: usize) -> usize {
        self.degrees[orbit]
    }

    /// Maximum vertex degree deg₊ (finite by construction).
    pub fn max_degree(&self) -> usize {
        *self.degrees.iter().max().unwrap()
    }

    /// Largest |offset|_∞ over the edge generators.
    pub fn max_offset(&self) -> i64 {
        self.generators
            .iter()
            .flat_map(|g| g.offset.iter().map(|o| o.abs()))
            .max()
            .unwrap_or(0)
            .max(1)
    }

    /// All neighbors of `v` in the full graph, sorted.
    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        self.stencil[v.orbit]
            .iter()
            .map(|(orbit, offset)| Vertex {
                orbit: *orbit,
                cell: v.cell.iter().zip(offset).map(|(c, o)| c + o).collect(),
            })
            .collect()
    }

    /// BFS distance between `v` and `w`, `None` when it exceeds `cutoff`.
    /// When `restrict_to` is given, paths may only use vertices of that
    /// set (distances in a subgraph can exceed distances in the full
    /// graph). Both endpoints must belong to the set.
    pub fn graph_distance(
        &self,
        v: &Vertex,
        w: &Vertex,
        cutoff: usize,
        restrict_to: Option<&HashSet<Vertex>>,
    ) -> Option<usize> {
        if let Some(set) = restrict_to {
            if !set.contains(v) || !set.contains(w) {
                return None;
            }
        }
        if v == w {
            return Some(0);
        }
        let mut seen: HashSet<Vertex> = HashSet::new();
        seen.insert(v.clone());
        let mut frontier = vec![v.clone()];
        for dist in 1..=cutoff {
            let mut next = Vec::new();
            for u in &frontier {
                for n in self.neighbors(u) {
                    if let Some(set) = restrict_to {
                        if !set.contains(&n) {
                            continue;
                        }
                    }
                    if n == *w {
                        return Some(dist);
                    }
                    if seen.insert(n.clone()) {
                        next.push(n);
                    }
                }
            }
            if next.is_empty() {
                return None;
            }
            frontier = next;
        }
        None
    }

    /// Parse the crystal-graph text format:
    /// a header line `d orbit_count`, then one generator per line
    /// `orbit_a orbit_b o_1 ... o_d`. `#` starts a comment.
    pub fn from_text(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut generators = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_int = |s: &str| -> Result<i64> {
                s.parse::<i64>().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("expected integer, got `{s}`"),
                })
            };
            match header {
                None => {
                    if fields.len() != 2 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "header must be `d orbit_count`".into(),
                        });
                    }
                    let d = parse_int(fields[0])?;
                    let oc = parse_int(fields[1])?;
                    if d <= 0 || oc <= 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "dimension and orbit count must be positive".into(),
                        });
                    }
                    header = Some((d as usize, oc as usize));
                }
                Some((d, _)) => {
                    if fields.len() != 2 + d {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("expected `orbit_a orbit_b` plus {d} offsets"),
                        });
                    }
                    let a = parse_int(fields[0])?;
                    let b = parse_int(fields[1])?;
                    if a < 0 || b < 0 {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: "orbit indices must be nonnegative".into(),
                        });
                    }
                    let offset = fields[2..]
                        .iter()
                        .map(|s| parse_int(s))
                        .collect::<Result<Vec<i64>>>()?;
                    generators.push(EdgeGenerator::new(a as usize, b as usize, offset));
                }
            }
        }
        let (d, oc) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header line".into(),
        })?;
        PeriodicGraph::new(name, d, oc, generators)
    }

    /// Canonical text form; `from_text(to_text(g))` reproduces the graph
    /// and re-serialization is byte-identical.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.dimension, self.orbit_count));
        for g in &self.generators {
            out.push_str(&format!("{} {}", g.orbit_a, g.orbit_b));
            for o in &g.offset {
                out.push_str(&format!(" {o}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Built-in crystal graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticePreset {
    Chain,
    Square,
    Cubic,
    Triangular,
    Honeycomb,
}

impl std::str::FromStr for LatticePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(LatticePreset::Chain),
            "square" => Ok(LatticePreset::Square),
            "cubic" => Ok(LatticePreset::Cubic),
            "triangular" => Ok(LatticePreset::Triangular),
            "honeycomb" => Ok(LatticePreset::Honeycomb),
            _ => Err(Error::UnknownPreset(s.into())),
        }
    }
}

pub fn build_preset(preset: LatticePreset) -> PeriodicGraph {
    let gen = |a, b, o: Vec<i64>| EdgeGenerator::new(a, b, o);
    let g = match preset {
        LatticePreset::Chain => {
            PeriodicGraph::new("chain", 1, 1, vec![gen(0, 0, vec![1])])
        }
        LatticePreset::Square => PeriodicGraph::new(
            "square",
            2,
            1,
            vec![gen(0, 0, vec![1, 0]), gen(0, 0, vec![0, 1])],
        ),
        LatticePreset::Cubic => PeriodicGraph::new(
            "cubic",
            3,
            1,
            vec![
                gen(0, 0, vec![1, 0, 0]),
                gen(0, 0, vec![0, 1, 0]),
                gen(0, 0, vec![0, 0, 1]),
            ],
        ),
        LatticePreset::Triangular => PeriodicGraph::new(
            "triangular",
            2,
            1,
            vec![
                gen(0, 0, vec![1, 0]),
                gen(0, 0, vec![0, 1]),
                gen(0, 0, vec![1, 1]),
            ],
        ),
        LatticePreset::Honeycomb => PeriodicGraph::new(
            "honeycomb",
            2,
            2,
            vec![
                gen(0, 1, vec![0, 0]),
                gen(0, 1, vec![-1, 0]),
                gen(0, 1, vec![0, -1]),
            ],
        ),
    };
    g.expect("presets satisfy all graph invariants")
}

/// Axis-aligned box of cells; the vertex set is every orbit over every
/// cell of the box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxRegion {
    corner: Vec<i64>,
    sides: Vec<usize>,
}

impl BoxRegion {
    pub fn new(corner: Vec<i64>, sides: Vec<usize>) -> Result<Self> {
        if corner.len() != sides.len() {
            return Err(Error::InvalidParameter(
                "box corner and side lists must have equal length".into(),
            ));
        }
        if sides.is_empty() || sides.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter(
                "box side lengths must be positive".into(),
            ));
        }
        Ok(BoxRegion { corner, sides })
    }

    /// Cube anchored at the origin.
    pub fn cube(dimension: usize, side: usize) -> Self {
        BoxRegion::new(vec![0; dimension], vec![side; dimension]).unwrap()
    }

    pub fn corner(&self) -> &[i64] {
        &self.corner
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn dimension(&self) -> usize {
        self.sides.len()
    }

    pub fn cell_count(&self) -> usize {
        self.sides.iter().product()
    }

    /// Number of vertices |Λ| = orbit_count · ∏ L_i.
    pub fn vertex_count(&self, graph: &PeriodicGraph) -> usize {
        self.cell_count() * graph.orbit_count()
    }

    pub fn contains_cell(&self, cell: &[i64]) -> bool {
        cell.len() == self.corner.len()
            && cell.iter().zip(&self.corner).zip(&self.sides).all(
                |((&c, &lo), &len)| c >= lo && c < lo + len as i64,
            )
    }

    /// All cells in lexicographic order (last coordinate fastest).
    pub fn cells(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::with_capacity(self.cell_count());
        let d = self.dimension();
        let mut cur = self.corner.clone();
        loop {
            out.push(cur.clone());
            let mut axis = d;
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                cur[axis] += 1;
                if cur[axis] < self.corner[axis] + self.sides[axis] as i64 {
                    break;
                }
                cur[axis] = self.corner[axis];
            }
        }
    }

    /// Position of `v` in `box_vertices` order, if inside.
    pub fn vertex_index(&self, graph: &PeriodicGraph, v: &Vertex) -> Option<usize> {
        if v.orbit >= graph.orbit_count() || !self.contains_cell(&v.cell) {
            return None;
        }
        let mut flat = 0usize;
        for ((&c, &lo), &len) in v.cell.iter().zip(&self.corner).zip(&self.sides) {
            flat = flat * len + (c - lo) as usize;
        }
        Some(flat * graph.orbit_count() + v.orbit)
    }

    /// Box enlarged by `margin` cells in every direction.
    pub fn enlarged(&self, margin: usize) -> BoxRegion {
        BoxRegion {
            corner: self.corner.iter().map(|c| c - margin as i64).collect(),
            sides: self.sides.iter().map(|s| s + 2 * margin).collect(),
        }
    }

    /// Box shrunk by `margin` cells in every direction, if nonempty.
    pub fn shrunk(&self, margin: usize) -> Option<BoxRegion> {
        if self.sides.iter().any(|&s| s <= 2 * margin) {
            return None;
        }
        Some(BoxRegion {
            corner: self.corner.iter().map(|c| c + margin as i64).collect(),
            sides: self.sides.iter().map(|s| s - 2 * margin).collect(),
        })
    }

    pub fn describe(&self) -> String {
        let corner = self
            .corner
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let sides = self
            .sides
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("x");
        format!("[{corner}]+{sides}")
    }
}

/// All vertices of the box in deterministic order: cells lexicographic,
/// orbits innermost. `BoxRegion::vertex_index` inverts this order.
pub fn box_vertices(graph: &PeriodicGraph, region: &BoxRegion) -> Vec<Vertex> {
    let mut out = Vec::with_capacity(region.vertex_count(graph));
    for cell in region.cells() {
        for orbit in 0..graph.orbit_count() {
            out.push(Vertex::new(orbit, cell.clone()));
        }
    }
    out
}

/// Thickened inner boundary ∂_h Λ = {v ∈ Λ : dist(v, Λᶜ) ≤ h}, distances
/// taken in the full graph. Returned in box order; empty for h = 0.
pub fn boundary_shell(graph: &PeriodicGraph, region: &BoxRegion, h: usize) -> Vec<Vertex> {
    if h == 0 {
        return Vec::new();
    }
    let verts = box_vertices(graph, region);
    let n = verts.len();
    let mut dist = vec![usize::MAX; n];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for (i, v) in verts.iter().enumerate() {
        if graph
            .neighbors(v)
            .iter()
            .any(|w| !region.contains_cell(&w.cell))
        {
            dist[i] = 1;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        if dist[i] >= h {
            continue;
        }
        for w in graph.neighbors(&verts[i]) {
            if let Some(j) = region.vertex_index(graph, &w) {
                if dist[j] > dist[i] + 1 {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
    }
    verts
        .into_iter()
        .enumerate()
        .filter(|(i, _)| dist[*i] <= h)
        .map(|(_, v)| v)
        .collect()
}

/// |∂_h Λ| / |Λ|.
pub fn boundary_ratio(graph: &PeriodicGraph, region: &BoxRegion, h: usize) -> f64 {
    boundary_shell(graph, region, h).len() as f64 / region.vertex_count(graph) as f64
}

/// Strictly increasing side lengths of nested cubes anchored at a common
/// corner; the finite stand-in for an admissible exhaustion.
#[derive(Clone, Debug)]
pub struct ExhaustionSchedule {
    corner: Vec<i64>,
    sides: Vec<usize>,
}

impl ExhaustionSchedule {
    pub fn new(corner: Vec<i64>, sides: Vec<usize>) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidParameter("empty exhaustion schedule".into()));
        }
        if sides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "schedule sides must be strictly increasing".into(),
            ));
        }
        if sides[0] == 0 {
            return Err(Error::InvalidParameter(
                "schedule sides must be positive".into(),
            ));
        }
        Ok(ExhaustionSchedule { corner, sides })
    }

    pub fn anchored(dimension: usize, sides: Vec<usize>) -> Result<Self> {
        ExhaustionSchedule::new(vec![0; dimension], sides)
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn boxes(&self) -> Vec<BoxRegion> {
        self.sides
            .iter()
            .map(|&s| BoxRegion {
                corner: self.corner.clone(),
                sides: vec![s; self.corner.len()],
            })
            .collect()
    }
}
