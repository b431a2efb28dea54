//! Hierarchical navigable small-world graph over inner-product similarity.
//!
//! Construction follows the standard recipe: geometric level assignment
//! with normalization 1/ln(M) from a seeded generator, `ef_construction`
//! beam search per layer, heuristic neighbour selection (candidates must be
//! closer to the base point than to any already-selected neighbour, pruned
//! survivors backfill), and a doubled degree bound on the ground layer.
//! Vectors are stored as `f32` exactly as inserted, so persistence is
//! byte-for-byte reproducible.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::collections::BTreeMap;
use std::path::Path;

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IndexError;

/// Graph construction and search parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HnswConfig {
    /// Links created per node per layer; the ground layer allows `2·m`.
    pub m: usize,
    /// Beam width while inserting.
    pub ef_construction: usize,
    /// Default beam width while searching.
    pub ef_search: usize,
    /// Seed for level assignment.
    pub seed: u64,
}

impl Default for HnswConfig {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 192,
            seed: 0,
        }
    }
}

impl HnswConfig {
    /// Reject degenerate parameterizations.
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.m < 2 {
            return Err(IndexError::InvalidConfig(format!(
                "m must be at least 2, got {}",
                self.m
            )));
        }
        if self.ef_construction == 0 || self.ef_search == 0 {
            return Err(IndexError::InvalidConfig(
                "ef_construction and ef_search must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One search hit: the stored id and its inner-product score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub score: f32,
}

/// Navigable small-world index over inner-product similarity.
#[derive(Debug, Clone)]
pub struct HnswIndex {
    config: HnswConfig,
    dim: usize,
    /// Flattened vectors, node-major.
    vectors: Vec<f32>,
    /// External id per node, in insertion order.
    ids: Vec<u32>,
    id_to_node: BTreeMap<u32, usize>,
    /// Top layer of each node.
    levels: Vec<usize>,
    /// Adjacency: node -> layer -> neighbour node indices.
    neighbors: Vec<Vec<Vec<u32>>>,
    entry: usize,
    max_level: usize,
    rng: ChaCha8Rng,
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl HnswIndex {
    /// Empty index for `dim`-dimensional vectors.
    pub fn new(dim: usize, config: HnswConfig) -> Result<Self, IndexError> {
        config.validate()?;
        if dim == 0 {
            return Err(IndexError::InvalidConfig("dim must be positive".into()));
        }
        Ok(Self {
            config,
            dim,
            vectors: Vec::new(),
            ids: Vec::new(),
            id_to_node: BTreeMap::new(),
            levels: Vec::new(),
            neighbors: Vec::new(),
            entry: 0,
            max_level: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
        })
    }

    /// Build an index by inserting `items` in order.
    pub fn build(
        dim: usize,
        config: HnswConfig,
        items: impl IntoIterator<Item = (u32, Vec<f32>)>,
    ) -> Result<Self, IndexError> {
        let mut index = Self::new(dim, config)?;
        for (id, v) in items {
            index.insert(id, &v)?;
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &HnswConfig {
        &self.config
    }

    /// Stored ids in insertion order.
    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Stored vector for an external id.
    pub fn get(&self, id: u32) -> Option<&[f32]> {
        self.id_to_node.get(&id).map(|&n| self.vector(n))
    }

    fn vector(&self, node: usize) -> &[f32] {
        &self.vectors[node * self.dim..(node + 1) * self.dim]
    }

    fn max_links(&self, level: usize) -> usize {
        if level == 0 {
            2 * self.config.m
        } else {
            self.config.m
        }
    }

    /// Geometric level draw: floor(−ln(U)·(1/ln M)).
    fn draw_level(&mut self) -> usize {
        let u: f64 = 1.0 - self.rng.random::<f64>(); // (0, 1]
        let ml = 1.0 / (self.config.m as f64).ln();
        ((-u.ln()) * ml).floor().min(32.0) as usize
    }

    fn check_vector(&self, v: &[f32], what: &'static str) -> Result<(), IndexError> {
        if v.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(IndexError::NonFinite(what));
        }
        Ok(())
    }

    /// Greedy hill climb at one layer: follow the best-improving link until
    /// no neighbour scores higher.
    fn greedy_descend(&self, query: &[f32], mut ep: usize, level: usize) -> usize {
        let mut best = dot(query, self.vector(ep));
        loop {
            let mut improved = false;
            for &nb in &self.neighbors[ep][level] {
                let s = dot(query, self.vector(nb as usize));
                if s > best {
                    best = s;
                    ep = nb as usize;
                    improved = true;
                }
            }
            if !improved {
                return ep;
            }
        }
    }

    /// Beam search at one layer from multiple entry points. Returns up to
    /// `ef` hits as `(score, node)`, unordered.
    fn search_layer(
        &self,
        query: &[f32],
        entries: &[usize],
        ef: usize,
        level: usize,
    ) -> Vec<(f32, usize)> {
        let mut visited = vec![false; self.ids.len()];
        // Max-heap of frontier candidates: best score first, then lowest node.
        let mut frontier: BinaryHeap<(OrderedFloat<f32>, Reverse<usize>)> = BinaryHeap::new();
        // Min-heap of current results: worst score on top for eviction.
        let mut results: BinaryHeap<(Reverse<OrderedFloat<f32>>, usize)> = BinaryHeap::new();
        for &e in entries {
            if visited[e] {
                continue;
            }
            visited[e] = true;
            let s = dot(query, self.vector(e));
            frontier.push((OrderedFloat(s), Reverse(e)));
            results.push((Reverse(OrderedFloat(s)), e));
        }
        while results.len() > ef {
            results.pop();
        }
        while let Some((OrderedFloat(c_score), Reverse(c_node))) = frontier.pop() {
            let worst = results.peek().map(|(Reverse(OrderedFloat(s)), _)| *s);
            if results.len() >= ef && worst.is_some_and(|w| c_score < w) {
                break;
            }
            for &nb in &self.neighbors[c_node][level] {
                let nb = nb as usize;
                if visited[nb] {
                    continue;
                }
                visited[nb] = true;
                let s = dot(query, self.vector(nb));
                let worst = results.peek().map(|(Reverse(OrderedFloat(s)), _)| *s);
                if results.len() < ef || worst.is_none_or(|w| s > w) {
                    frontier.push((OrderedFloat(s), Reverse(nb)));
                    results.push((Reverse(OrderedFloat(s)), nb));
                    if results.len() > ef {
                        results.pop();
                    }
                }
            }
        }
        results
            .into_iter()
            .map(|(Reverse(OrderedFloat(s)), n)| (s, n))
            .collect()
    }

    /// Heuristic neighbour selection: walk candidates best-first, keeping
    /// those strictly closer to the base point (whose similarity each
    /// candidate carries) than to every neighbour already kept; pruned
    /// candidates backfill remaining slots in order.
    fn select_heuristic(&self, mut cands: Vec<(f32, usize)>, m: usize) -> Vec<u32> {
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("scores are finite")
                .then(a.1.cmp(&b.1))
        });
        let mut selected: Vec<usize> = Vec::with_capacity(m);
        let mut pruned: Vec<usize> = Vec::new();
        for &(s_base, c) in &cands {
            if selected.len() >= m {
                break;
            }
            let c_vec = self.vector(c);
            let diverse = selected
                .iter()
                .all(|&r| dot(c_vec, self.vector(r)) < s_base);
            if diverse {
                selected.push(c);
            } else {
                pruned.push(c);
            }
        }
        for c in pruned {
            if selected.len() >= m {
                break;
            }
            selected.push(c);
        }
        selected.into_iter().map(|n| n as u32).collect()
    }

    /// Insert one vector under an unused id.
    pub fn insert(&mut self, id: u32, vector: &[f32]) -> Result<(), IndexError> {
        self.check_vector(vector, "inserted vector")?;
        if self.id_to_node.contains_key(&id) {
            return Err(IndexError::DuplicateId(id));
        }
        let node = self.ids.len();
        let level = self.draw_level();
        self.vectors.extend_from_slice(vector);
        self.ids.push(id);
        self.id_to_node.insert(id, node);
        self.levels.push(level);
        self.neighbors.push(vec![Vec::new(); level + 1]);

        if node == 0 {
            self.entry = 0;
            self.max_level = level;
            return Ok(());
        }

        // Descend greedily through layers above the new node's top.
        let mut ep = self.entry;
        let mut lev = self.max_level;
        while lev > level {
            ep = self.greedy_descend(vector, ep, lev);
            lev -= 1;
        }

        // Connect on every shared layer, reusing the beam as entry points.
        let mut entries = vec![ep];
        let top_connect = level.min(self.max_level);
        for lev in (0..=top_connect).rev() {
            let beam = self.search_layer(vector, &entries, self.config.ef_construction, lev);
            let links = self.select_heuristic(beam.clone(), self.config.m);
            self.neighbors[node][lev] = links.clone();
            for nb in links {
                let nb = nb as usize;
                self.neighbors[nb][lev].push(node as u32);
                let bound = self.max_links(lev);
                if self.neighbors[nb][lev].len() > bound {
                    let base = self.vector(nb).to_vec();
                    let cands: Vec<(f32, usize)> = self.neighbors[nb][lev]
                        .iter()
                        .map(|&x| (dot(&base, self.vector(x as usize)), x as usize))
                        .collect();
                    let shrunk = self.select_heuristic(cands, bound);
                    self.neighbors[nb][lev] = shrunk;
                }
            }
            entries = beam.into_iter().map(|(_, n)| n).collect();
        }

        if level > self.max_level {
            self.max_level = level;
            self.entry = node;
        }
        Ok(())
    }

    /// Top-`k` approximate neighbours with the configured `ef_search`.
    pub fn search(&self, query: &[f32], k: usize) -> Result<Vec<Neighbor>, IndexError> {
        self.search_with_ef(query, k, self.config.ef_search)
    }

    /// Top-`k` approximate neighbours with an explicit beam width.
    pub fn search_with_ef(
        &self,
        query: &[f32],
        k: usize,
        ef: usize,
    ) -> Result<Vec<Neighbor>, IndexError> {
        self.check_vector(query, "query vector")?;
        if self.is_empty() || k == 0 {
            return Ok(Vec::new());
        }
        let mut ep = self.entry;
        for lev in (1..=self.max_level).rev() {
            ep = self.greedy_descend(query, ep, lev);
        }
        let beam = self.search_layer(query, &[ep], ef.max(k), 0);
        let mut hits: Vec<Neighbor> = beam
            .into_iter()
            .map(|(score, node)| Neighbor {
                id: self.ids[node],
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then(a.id.cmp(&b.id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    // ------------------------------------------------------- persistence

    const MAGIC: &'static [u8; 8] = b"TRBLHNSW";
    const VERSION: u32 = 1;

    /// Serialize to the checksummed v1 byte format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        for v in [
            self.config.m as u64,
            self.config.ef_construction as u64,
            self.config.ef_search as u64,
            self.config.seed,
            self.dim as u64,
            self.ids.len() as u64,
            self.entry as u64,
            self.max_level as u64,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for node in 0..self.ids.len() {
            out.extend_from_slice(&self.ids[node].to_le_bytes());
            out.extend_from_slice(&(self.levels[node] as u64).to_le_bytes());
            for x in self.vector(node) {
                out.extend_from_slice(&x.to_le_bytes());
            }
            for layer in &self.neighbors[node] {
                out.extend_from_slice(&(layer.len() as u64).to_le_bytes());
                for nb in layer {
                    out.extend_from_slice(&nb.to_le_bytes());
                }
            }
        }
        let checksum = Sha256::digest(&out);
        out.extend_from_slice(&checksum);
        out
    }

    /// Parse and validate the v1 byte format, verifying the checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let perr = |msg: String| IndexError::Persistence(msg);
        if bytes.len() < 32 {
            return Err(perr("file shorter than its checksum".into()));
        }
        let (payload, stored) = bytes.split_at(bytes.len() - 32);
        let computed = Sha256::digest(payload);
        if stored != computed.as_slice() {
            return Err(IndexError::ChecksumMismatch);
        }

        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], IndexError> {
            if *pos + n > payload.len() {
                return Err(IndexError::Persistence(format!(
                    "truncated at offset {}",
                    *pos
                )));
            }
            let s = &payload[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u32_at = |pos: &mut usize| -> Result<u32, IndexError> {
            Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };
        let u64_at = |pos: &mut usize| -> Result<u64, IndexError> {
            Ok(u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
        };
        let usize_at = |pos: &mut usize| -> Result<usize, IndexError> {
            let v = u64_at(pos)?;
            usize::try_from(v).map_err(|_| IndexError::Persistence(format!("huge length {v}")))
        };

        if take(&mut pos, 8)? != Self::MAGIC {
            return Err(perr("bad magic".into()));
        }
        let version = u32_at(&mut pos)?;
        if version != Self::VERSION {
            return Err(perr(format!("unsupported version {version}")));
        }
        let config = HnswConfig {
            m: usize_at(&mut pos)?,
            ef_construction: usize_at(&mut pos)?,
            ef_search: usize_at(&mut pos)?,
            seed: u64_at(&mut pos)?,
        };
        config.validate()?;
        let dim = usize_at(&mut pos)?;
        let n = usize_at(&mut pos)?;
        let entry = usize_at(&mut pos)?;
        let max_level = usize_at(&mut pos)?;

        let mut index = Self::new(dim, config)?;
        index.entry = entry;
        index.max_level = max_level;
        for node in 0..n {
            let id = u32_at(&mut pos)?;
            let level = usize_at(&mut pos)?;
            if level > 32 {
                return Err(perr(format!("implausible level {level}")));
            }
            let raw = take(&mut pos, dim * 4)?;
            let mut v = Vec::with_capacity(dim);
            for chunk in raw.chunks_exact(4) {
                v.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(IndexError::NonFinite("stored vector"));
            }
            if index.id_to_node.insert(id, node).is_some() {
                return Err(IndexError::DuplicateId(id));
            }
            index.vectors.extend_from_slice(&v);
            index.ids.push(id);
            index.levels.push(level);
            let mut layers = Vec::with_capacity(level + 1);
            for _ in 0..=level {
                let count = usize_at(&mut pos)?;
                let mut layer = Vec::with_capacity(count);
                for _ in 0..count {
                    layer.push(u32_at(&mut pos)?);
                }
                layers.push(layer);
            }
            index.neighbors.push(layers);
        }
        if pos != payload.len() {
            return Err(perr(format!("{} trailing bytes", payload.len() - pos)));
        }
        // Structural validation.
        for (node, layers) in index.neighbors.iter().enumerate() {
            for (lev, layer) in layers.iter().enumerate() {
                for &nb in layer {
                    let nb = nb as usize;
                    if nb >= n || index.levels[nb] < lev {
                        return Err(perr(format!(
                            "node {node} links to invalid neighbour {nb} at layer {lev}"
                        )));
                    }
                }
            }
        }
        if n > 0 {
            if entry >= n || index.levels[entry] != max_level {
                return Err(perr("entry point inconsistent with levels".into()));
            }
            if index.levels.iter().any(|&l| l > max_level) {
                return Err(perr("node level above max_level".into()));
            }
            // Replay the level generator so later inserts continue the
            // original deterministic stream.
            for _ in 0..n {
                let _ = index.rng.random::<f64>();
            }
        }
        Ok(index)
    }

    /// Write the index to a file.
    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Read an index from a file.
    pub fn load(path: &Path) -> Result<Self, IndexError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
