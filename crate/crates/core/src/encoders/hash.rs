//! Multi-resolution hash encoding.
//!
//! Each level is a trainable table of `F`-dimensional entries addressed by
//! the vertices of a regular grid. Coarse levels whose `(res + 1)^d` vertices
//! fit in `T` entries are indexed densely; finer levels use XOR-of-primes
//! spatial hashing modulo `T`. Features are d-linearly interpolated from the
//! `2^d` corners of the enclosing cell and levels are concatenated coarse to
//! fine.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::{BackwardRule, Tape, Tensor, Var};
use crate::{Error, Real, Result};

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];
const ROW_BLOCK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashEncodingConfig {
    /// Number of levels `L`.
    pub levels: usize,
    /// Entries per level `T`; a power of two.
    pub table_size: usize,
    /// Features per entry `F`.
    pub features_per_entry: usize,
    /// Resolution of the coarsest level.
    pub base_resolution: usize,
    /// Growth factor between consecutive levels.
    pub per_level_scale: f64,
}

impl HashEncodingConfig {
    /// L = 10, T = 2^18, F = 8, N_min = 2, b = 2.
    pub fn paper() -> Self {
        Self {
            levels: 10,
            table_size: 1 << 18,
            features_per_entry: 8,
            base_resolution: 2,
            per_level_scale: 2.0,
        }
    }

    /// L = 8, T = 2^14, F = 4, N_min = 2, b = 2; sized for 64–128 px images.
    pub fn desk() -> Self {
        Self {
            levels: 8,
            table_size: 1 << 14,
            features_per_entry: 4,
            base_resolution: 2,
            per_level_scale: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_entry == 0 || self.base_resolution == 0 {
            return Err(Error::Config("hash levels, features and base resolution must be positive".into()));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::Config(format!("table size {} is not a power of two", self.table_size)));
        }
        if self.table_size > u32::MAX as usize {
            return Err(Error::Config("table size exceeds 2^32".into()));
        }
        if !(self.per_level_scale > 1.0) {
            return Err(Error::Config(format!("per-level scale {} must exceed 1", self.per_level_scale)));
        }
        Ok(())
    }

    /// `floor(N_min · b^level)`.
    pub fn resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.per_level_scale.powi(level as i32)).floor() as usize
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_entry
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub resolution: usize,
    pub entries: usize,
    /// First entry of this level in the flattened table.
    pub offset: usize,
    pub dense: bool,
}

/// Level layout of a hash encoding over `dims`-dimensional coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct HashEncoding {
    cfg: HashEncodingConfig,
    dims: usize,
    levels: Vec<Level>,
    total_entries: usize,
}

impl HashEncoding {
    pub fn new(cfg: HashEncodingConfig, dims: usize) -> Result<Self> {
        cfg.validate()?;
        if !(1..=3).contains(&dims) {
            return Err(Error::Config(format!("hash encoding supports 1–3 dims, got {dims}")));
        }
        let mut levels = Vec::with_capacity(cfg.levels);
        let mut offset = 0;
        for l in 0..cfg.levels {
            let resolution = cfg.resolution(l).max(1);
            let dense_count = (resolution as u128 + 1).pow(dims as u32);
            let dense = dense_count <= cfg.table_size as u128;
            let entries = if dense { dense_count as usize } else { cfg.table_size };
            levels.push(Level {
                resolution,
                entries,
                offset,
                dense,
            });
            offset += entries;
        }
        Ok(Self {
            cfg,
            dims,
            levels,
            total_entries: offset,
        })
    }

    pub fn config(&self) -> &HashEncodingConfig {
        &self.cfg
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn output_dim(&self) -> usize {
        self.cfg.output_dim()
    }

    /// Shape of the flattened table: `[Σ entries, F]`.
    pub fn table_shape(&self) -> [usize; 2] {
        [self.total_entries, self.cfg.features_per_entry]
    }

    pub fn param_count(&self) -> usize {
        self.total_entries * self.cfg.features_per_entry
    }

    /// Entries drawn uniformly from `[-scale, scale]`.
    pub fn init_table(&self, rng: &mut impl Rng, scale: f64) -> Tensor {
        let n = self.param_count();
        let data = (0..n)
            .map(|_| rng.random_range(-scale..=scale) as Real)
            .collect();
        Tensor::new(self.table_shape().to_vec(), data).expect("table shape")
    }

    /// Entry index of a grid vertex within its level (0..entries).
    pub fn vertex_index(&self, level: usize, vertex: &[u32]) -> usize {
        let lv = &self.levels[level];
        if lv.dense {
            let stride = lv.resolution as u64 + 1;
            let mut idx = 0u64;
            let mut s = 1u64;
            for &v in vertex {
                idx += v as u64 * s;
                s *= stride;
            }
            idx as usize
        } else {
            let mut h = 0u32;
            for (k, &v) in vertex.iter().enumerate() {
                h ^= v.wrapping_mul(PRIMES[k]);
            }
            (h as usize) & (self.cfg.table_size - 1)
        }
    }

    fn check_inputs(&self, table: &Tensor, coords: &Tensor) -> Result<usize> {
        if table.shape() != self.table_shape() {
            return Err(Error::dim(format!(
                "hash table shape {:?}, expected {:?}",
                table.shape(),
                self.table_shape()
            )));
        }
        let (rows, d) = coords.dims2()?;
        if d != self.dims {
            return Err(Error::dim(format!("coords have {d} dims, encoding expects {}", self.dims)));
        }
        if let Some(bad) = coords.data().iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::Domain(format!("coordinate {bad} outside [0, 1]")));
        }
        Ok(rows)
    }

    /// Features without recording a graph.
    pub fn encode_values(&self, table: &Tensor, coords: &Tensor) -> Result<Tensor> {
        let rows = self.check_inputs(table, coords)?;
        let (out, _) = self.forward(table, coords, rows, false);
        Tensor::new(vec![rows, self.output_dim()], out)
    }

    /// Records the encoding on `tape`; gradients flow to `table` only.
    pub fn encode(&self, tape: &mut Tape, table: Var, coords: &Tensor) -> Result<Var> {
        let rows = self.check_inputs(tape.value(table), coords)?;
        let (out, cache) = self.forward(tape.value(table), coords, rows, tape.requires_grad(table));
        let output = Tensor::new(vec![rows, self.output_dim()], out)?;
        let rule = HashBackward {
            levels: self.levels.clone(),
            features: self.cfg.features_per_entry,
            corners: 1 << self.dims,
            rows,
            cache,
        };
        tape.custom(vec![table], output, Box::new(rule))
    }

    fn forward(
        &self,
        table: &Tensor,
        coords: &Tensor,
        rows: usize,
        keep_cache: bool,
    ) -> (Vec<Real>, Option<Corners>) {
        let d = self.dims;
        let f = self.cfg.features_per_entry;
        let nl = self.levels.len();
        let corners = 1usize << d;
        let width = nl * f;
        let per_row = nl * corners;
        let tab = table.data();
        let cds = coords.data();

        let mut out = vec![0.0; rows * width];
        let mut index = if keep_cache { vec![0u32; rows * per_row] } else { Vec::new() };
        let mut weight = if keep_cache { vec![0.0; rows * per_row] } else { Vec::new() };

        let work = |r0: usize, out: &mut [Real], idx_out: Option<(&mut [u32], &mut [Real])>| {
            let mut idx_out = idx_out;
            let mut base = [0u32; 3];
            let mut frac = [0.0f64; 3];
            let mut vertex = [0u32; 3];
            for (j, row) in out.chunks_exact_mut(width).enumerate() {
                let r = r0 + j;
                let c = &cds[r * d..(r + 1) * d];
                for (l, lv) in self.levels.iter().enumerate() {
                    let res = lv.resolution as f64;
                    for k in 0..d {
                        let p = c[k] as f64 * res;
                        let i0 = (p.floor() as u32).min(lv.resolution as u32 - 1);
                        base[k] = i0;
                        frac[k] = p - i0 as f64;
                    }
                    let dst = &mut row[l * f..(l + 1) * f];
                    for corner in 0..corners {
                        let mut w = 1.0f64;
                        for k in 0..d {
                            let hi = (corner >> k) & 1 == 1;
                            vertex[k] = base[k] + hi as u32;
                            w *= if hi { frac[k] } else { 1.0 - frac[k] };
                        }
                        let e = lv.offset + self.vertex_index(l, &vertex[..d]);
                        let w = w as Real;
                        let src = &tab[e * f..(e + 1) * f];
                        for (o, &s) in dst.iter_mut().zip(src) {
                            *o += w * s;
                        }
                        if let Some((ix, wt)) = idx_out.as_mut() {
                            let slot = j * per_row + l * corners + corner;
                            ix[slot] = e as u32;
                            wt[slot] = w;
                        }
                    }
                }
            }
        };

        if keep_cache {
            out.par_chunks_mut(ROW_BLOCK * width)
                .zip(index.par_chunks_mut(ROW_BLOCK * per_row))
                .zip(weight.par_chunks_mut(ROW_BLOCK * per_row))
                .enumerate()
                .for_each(|(b, ((o, ix), wt))| work(b * ROW_BLOCK, o, Some((ix, wt))));
            (out, Some(Corners { index, weight }))
        } else {
            out.par_chunks_mut(ROW_BLOCK * width)
                .enumerate()
                .for_each(|(b, o)| work(b * ROW_BLOCK, o, None));
            (out, None)
        }
    }
}

struct Corners {
    index: Vec<u32>,
    weight: Vec<Real>,
}

struct HashBackward {
    levels: Vec<Level>,
    features: usize,
    corners: usize,
    rows: usize,
    cache: Option<Corners>,
}

impl BackwardRule for HashBackward {
    fn name(&self) -> &'static str {
        "hash_encode"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &[Real],
        needs: &[bool],
    ) -> Vec<Option<Vec<Real>>> {
        let Some(cache) = self.cache.as_ref().filter(|_| needs[0]) else {
            return vec![None];
        };
        let f = self.features;
        let nl = self.levels.len();
        let per_row = nl * self.corners;
        let mut grad = vec![0.0; inputs[0].numel()];

        // Levels own disjoint table ranges, so they scatter independently.
        let mut slices = Vec::with_capacity(nl);
        let mut rest: &mut [Real] = &mut grad;
        for lv in &self.levels {
            let (head, tail) = rest.split_at_mut(lv.entries * f);
            slices.push(head);
            rest = tail;
        }
        slices
            .into_par_iter()
            .enumerate()
            .for_each(|(l, dst)| {
                let offset = self.levels[l].offset;
                for r in 0..self.rows {
                    let go = &grad_output[(r * nl + l) * f..(r * nl + l + 1) * f];
                    let base = r * per_row + l * self.corners;
                    for c in 0..self.corners {
                        let e = cache.index[base + c] as usize - offset;
                        let w = cache.weight[base + c];
                        for (g, &v) in dst[e * f..(e + 1) * f].iter_mut().zip(go) {
                            *g += w * v;
                        }
                    }
                }
            });
        vec![Some(grad)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_layout() {
        let enc = HashEncoding::new(HashEncodingConfig::desk(), 2).unwrap();
        let res: Vec<usize> = enc.levels().iter().map(|l| l.resolution).collect();
        assert_eq!(res, vec![2, 4, 8, 16, 32, 64, 128, 256]);
        let entries: Vec<usize> = enc.levels().iter().map(|l| l.entries).collect();
        assert_eq!(entries, vec![9, 25, 81, 289, 1089, 4225, 16384, 16384]);
        assert_eq!(enc.output_dim(), 32);
        assert_eq!(enc.param_count(), 38486 * 4);
    }

    #[test]
    fn config_validation() {
        let mut cfg = HashEncodingConfig::desk();
        cfg.table_size = 1000;
        assert!(cfg.validate().is_err());
        let mut cfg = HashEncodingConfig::desk();
        cfg.per_level_scale = 1.0;
        assert!(cfg.validate().is_err());
    }
}
