//! Truncated signed distance field fused from posed depth observations.
//!
//! The volume is organised as sparse blocks of `voxels_per_side`³ dense
//! voxels. Integration marches the voxels along each sensor ray through a
//! truncation-length tube centred on the observed point, so every update
//! stays local to observed surface.

use crate::cloud::PointCloud;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Isometry3, Point3, Vector3};
use std::collections::HashMap;
use std::io::Read;
use std::path::Path;
use thiserror::Error;

/// Voxels with at most this weight are treated as unobserved by surface
/// extraction.
pub const MIN_SURFACE_WEIGHT: f32 = 0.5;

const MAGIC: &[u8; 4] = b"FMTS";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TsdfError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid tsdf file: {0}")]
    BadFormat(String),
    #[error("cannot integrate an empty observation")]
    EmptyObservation,
    #[error("invalid tsdf config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsdfConfig {
    /// Voxel edge length in metres.
    pub voxel_size: f64,
    /// Voxels per block edge; must be a power of two.
    pub voxels_per_side: usize,
    /// Signed distances are clamped to ±this value (metres).
    pub truncation_distance: f64,
    /// Per-voxel observation weight saturates here.
    pub max_weight: f64,
}

impl Default for TsdfConfig {
    fn default() -> Self {
        TsdfConfig {
            voxel_size: 0.004,
            voxels_per_side: 64,
            truncation_distance: 0.016,
            max_weight: 10_000.0,
        }
    }
}

impl TsdfConfig {
    pub fn validate(&self) -> Result<(), TsdfError> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(TsdfError::BadConfig("voxel_size must be positive".into()));
        }
        if !self.voxels_per_side.is_power_of_two() {
            return Err(TsdfError::BadConfig(
                "voxels_per_side must be a power of two".into(),
            ));
        }
        if self.truncation_distance < self.voxel_size || self.truncation_distance.is_nan() {
            return Err(TsdfError::BadConfig(
                "truncation_distance must be at least one voxel".into(),
            ));
        }
        if self.max_weight <= 0.0 || self.max_weight.is_nan() {
            return Err(TsdfError::BadConfig("max_weight must be positive".into()));
        }
        Ok(())
    }
}

/// Point cloud in the sensor frame together with the sensor-to-world pose.
#[derive(Debug, Clone)]
pub struct PosedCloud {
    pub cloud: PointCloud,
    pub sensor_pose: Isometry3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Voxel {
    /// Truncated signed distance in metres (positive in front of surface).
    pub tsdf: f32,
    pub weight: f32,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    voxels: Vec<Voxel>,
}

#[derive(Debug, Clone)]
pub struct TsdfGrid {
    config: TsdfConfig,
    blocks: HashMap<[i32; 3], Block>,
    /// Observation points dropped for being non-finite or coincident with
    /// the sensor origin.
    skipped_points: u64,
}

impl TsdfGrid {
    pub fn new(config: TsdfConfig) -> Result<Self, TsdfError> {
        config.validate()?;
        Ok(TsdfGrid {
            config,
            blocks: HashMap::new(),
            skipped_points: 0,
        })
    }

    pub fn config(&self) -> &TsdfConfig {
        &self.config
    }

    pub fn skipped_points(&self) -> u64 {
        self.skipped_points
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn observed_voxel_count(&self) -> usize {
        self.blocks
            .values()
            .flat_map(|b| &b.voxels)
            .filter(|v| v.weight > 0.0)
            .count()
    }

    pub fn voxel_center(&self, v: [i32; 3]) -> Point3<f64> {
        Point3::new(
            (v[0] as f64 + 0.5) * self.config.voxel_size,
            (v[1] as f64 + 0.5) * self.config.voxel_size,
            (v[2] as f64 + 0.5) * self.config.voxel_size,
        )
    }

    pub fn voxel_at(&self, v: [i32; 3]) -> Option<Voxel> {
        let vps = self.config.voxels_per_side as i32;
        let block = [
            v[0].div_euclid(vps),
            v[1].div_euclid(vps),
            v[2].div_euclid(vps),
        ];
        let local = [
            v[0].rem_euclid(vps) as usize,
            v[1].rem_euclid(vps) as usize,
            v[2].rem_euclid(vps) as usize,
        ];
        let vps = self.config.voxels_per_side;
        self.blocks
            .get(&block)
            .map(|b| b.voxels[(local[2] * vps + local[1]) * vps + local[0]])
    }

    /// All allocated voxels with their global grid coordinates. Voxels that
    /// were allocated but never updated keep the default (0, 0) state.
    pub fn voxels(&self) -> impl Iterator<Item = ([i32; 3], Voxel)> + '_ {
        let vps = self.config.voxels_per_side;
        self.blocks.iter().flat_map(move |(block, b)| {
            b.voxels.iter().enumerate().map(move |(i, voxel)| {
                let local = [i % vps, (i / vps) % vps, i / (vps * vps)];
                let coord = [
                    block[0] * vps as i32 + local[0] as i32,
                    block[1] * vps as i32 + local[1] as i32,
                    block[2] * vps as i32 + local[2] as i32,
                ];
                (coord, *voxel)
            })
        })
    }

    fn update_voxel(&mut self, v: [i32; 3], sdf: f64) {
        let vps = self.config.voxels_per_side as i32;
        let block_key = [
            v[0].div_euclid(vps),
            v[1].div_euclid(vps),
            v[2].div_euclid(vps),
        ];
        let local = [
            v[0].rem_euclid(vps) as usize,
            v[1].rem_euclid(vps) as usize,
            v[2].rem_euclid(vps) as usize,
        ];
        let vps = self.config.voxels_per_side;
        let block = self.blocks.entry(block_key).or_insert_with(|| Block {
            voxels: vec![Voxel::default(); vps * vps * vps],
        });
        let voxel = &mut block.voxels[(local[2] * vps + local[1]) * vps + local[0]];
        let w = voxel.weight as f64;
        voxel.tsdf = ((w * voxel.tsdf as f64 + sdf) / (w + 1.0)) as f32;
        voxel.weight = ((w + 1.0).min(self.config.max_weight)) as f32;
    }

    /// Fuses one posed observation. Points must be in the sensor frame; each
    /// contributes weight 1 to the voxels of the truncation tube around it.
    pub fn integrate(&mut self, obs: &PosedCloud) -> Result<(), TsdfError> {
        if obs.cloud.is_empty() {
            return Err(TsdfError::EmptyObservation);
        }
        let origin = Point3::from(obs.sensor_pose.translation.vector);
        let trunc = self.config.truncation_distance;
        for p in &obs.cloud.points {
            let world = obs.sensor_pose * p;
            if !(world.x.is_finite() && world.y.is_finite() && world.z.is_finite()) {
                self.skipped_points += 1;
                continue;
            }
            let depth = (world - origin).norm();
            if depth <= f64::EPSILON {
                self.skipped_points += 1;
                continue;
            }
            let dir = (world - origin) / depth;
            let start = world - dir * trunc;
            let end = world + dir * trunc;
            let mut updates: Vec<([i32; 3], f64)> = Vec::with_capacity(16);
            walk_voxels(&start, &end, self.config.voxel_size, |v| {
                let center = self.voxel_center(v);
                let sdf = (depth - (center - origin).dot(&dir)).clamp(-trunc, trunc);
                updates.push((v, sdf));
            });
            for (v, sdf) in updates {
                self.update_voxel(v, sdf);
            }
        }
        Ok(())
    }

    /// Zero crossings of the field: for every pair of face-adjacent observed
    /// voxels with opposite signs (scanned in +x/+y/+z so each crossing is
    /// emitted once), the linear interpolation of the crossing point.
    /// Iteration is sorted, so output order is deterministic.
    pub fn extract_surface(&self) -> PointCloud {
        let mut out = PointCloud::new("world");
        let vps = self.config.voxels_per_side as i32;
        let mut keys: Vec<[i32; 3]> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let base = [key[0] * vps, key[1] * vps, key[2] * vps];
            let block = &self.blocks[&key];
            for lz in 0..vps {
                for ly in 0..vps {
                    for lx in 0..vps {
                        let vps_u = self.config.voxels_per_side;
                        let voxel = block.voxels
                            [((lz as usize) * vps_u + ly as usize) * vps_u + lx as usize];
                        if voxel.weight <= MIN_SURFACE_WEIGHT {
                            continue;
                        }
                        let v = [base[0] + lx, base[1] + ly, base[2] + lz];
                        for axis in 0..3 {
                            let mut n = v;
                            n[axis] += 1;
                            let Some(neighbour) = self.voxel_at(n) else {
                                continue;
                            };
                            if neighbour.weight <= MIN_SURFACE_WEIGHT {
                                continue;
                            }
                            let a = voxel.tsdf as f64;
                            let b = neighbour.tsdf as f64;
                            if a * b >= 0.0 {
                                continue;
                            }
                            let t = a / (a - b);
                            let ca = self.voxel_center(v);
                            let cb = self.voxel_center(n);
                            out.points.push(ca + (cb - ca) * t);
                        }
                    }
                }
            }
        }
        out
    }

    /// Writes the grid as a little-endian binary file (versioned, blocks in
    /// sorted order, byte-stable for identical grids).
    pub fn write(&self, path: &Path) -> Result<(), TsdfError> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).expect("vec write");
        out.write_f64::<LittleEndian>(self.config.voxel_size)
            .expect("vec write");
        out.write_u32::<LittleEndian>(self.config.voxels_per_side as u32)
            .expect("vec write");
        out.write_f64::<LittleEndian>(self.config.truncation_distance)
            .expect("vec write");
        out.write_f64::<LittleEndian>(self.config.max_weight)
            .expect("vec write");
        out.write_u64::<LittleEndian>(self.skipped_points)
            .expect("vec write");
        out.write_u64::<LittleEndian>(self.blocks.len() as u64)
            .expect("vec write");
        let mut keys: Vec<[i32; 3]> = self.blocks.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            for c in key {
                out.write_i32::<LittleEndian>(c).expect("vec write");
            }
            for voxel in &self.blocks[&key].voxels {
                out.write_f32::<LittleEndian>(voxel.tsdf).expect("vec write");
                out.write_f32::<LittleEndian>(voxel.weight).expect("vec write");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, TsdfError> {
        let data = std::fs::read(path)?;
        let mut r = data.as_slice();
        let bad = |msg: &str| TsdfError::BadFormat(msg.to_string());

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        if version != VERSION {
            return Err(TsdfError::BadFormat(format!(
                "unsupported version {version}"
            )));
        }
        let voxel_size = r.read_f64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        let voxels_per_side =
            r.read_u32::<LittleEndian>().map_err(|_| bad("truncated header"))? as usize;
        let truncation_distance =
            r.read_f64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        let max_weight = r.read_f64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        let skipped_points =
            r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))?;
        let block_count = r.read_u64::<LittleEndian>().map_err(|_| bad("truncated header"))?;

        let config = TsdfConfig {
            voxel_size,
            voxels_per_side,
            truncation_distance,
            max_weight,
        };
        let mut grid = TsdfGrid::new(config).map_err(|e| bad(&format!("{e}")))?;
        grid.skipped_points = skipped_points;

        let per_block = voxels_per_side * voxels_per_side * voxels_per_side;
        for _ in 0..block_count {
            let mut key = [0i32; 3];
            for c in &mut key {
                *c = r.read_i32::<LittleEndian>().map_err(|_| bad("truncated block table"))?;
            }
            let mut voxels = Vec::with_capacity(per_block);
            for _ in 0..per_block {
                let tsdf = r
                    .read_f32::<LittleEndian>()
                    .map_err(|_| bad("truncated voxel payload"))?;
                let weight = r
                    .read_f32::<LittleEndian>()
                    .map_err(|_| bad("truncated voxel payload"))?;
                voxels.push(Voxel { tsdf, weight });
            }
            if grid.blocks.insert(key, Block { voxels }).is_some() {
                return Err(bad("duplicate block"));
            }
        }
        Ok(grid)
    }
}

/// Visits every voxel the segment [start, end] passes through, in order,
/// each exactly once (Amanatides-Woo traversal).
fn walk_voxels(
    start: &Point3<f64>,
    end: &Point3<f64>,
    voxel_size: f64,
    mut visit: impl FnMut([i32; 3]),
) {
    let to_voxel = |p: &Point3<f64>| {
        [
            (p.x / voxel_size).floor() as i32,
            (p.y / voxel_size).floor() as i32,
            (p.z / voxel_size).floor() as i32,
        ]
    };
    let mut v = to_voxel(start);
    let v_end = to_voxel(end);
    visit(v);
    if v == v_end {
        return;
    }
    let d: Vector3<f64> = end - start;
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        if d[i] > 0.0 {
            step[i] = 1;
            t_max[i] = ((v[i] as f64 + 1.0) * voxel_size - start[i]) / d[i];
            t_delta[i] = voxel_size / d[i];
        } else if d[i] < 0.0 {
            step[i] = -1;
            t_max[i] = (v[i] as f64 * voxel_size - start[i]) / d[i];
            t_delta[i] = voxel_size / -d[i];
        }
    }
    let cap = (v_end[0] - v[0]).unsigned_abs()
        + (v_end[1] - v[1]).unsigned_abs()
        + (v_end[2] - v[2]).unsigned_abs();
    for _ in 0..cap {
        let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
        v[axis] += step[axis];
        t_max[axis] += t_delta[axis];
        visit(v);
        if v == v_end {
            return;
        }
    }
}
