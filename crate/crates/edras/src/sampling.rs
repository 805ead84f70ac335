//! Collocation-selection strategies: uniform refill, RAR, RAD, RAR-D,
//! top-m energy-dissipation ranking, and the full density-aware adaptive
//! scheme (threshold, prune, per-cell refill).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{BoundaryPoint, Domain, SpaceTimePoint, Vec2};
use crate::model::{BcKind, PdeSystem};
use crate::network::SolutionModel;
use crate::{Error, Result};

/// The live collocation set: interior, boundary, and initial pools with
/// per-point caches of the bulk/boundary residual and dissipation density.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub interior: Vec<SpaceTimePoint>,
    pub boundary: Vec<BoundaryPoint>,
    pub initial: Vec<SpaceTimePoint>,
    /// Target field value per initial point (the segment's handoff data).
    pub initial_target: Vec<f64>,
    /// |residual| per interior point; empty when stale.
    pub interior_residual: Vec<f64>,
    /// Dissipation-rate density per interior point; empty when stale.
    pub interior_edrd: Vec<f64>,
    pub boundary_residual: Vec<f64>,
    pub boundary_edrd: Vec<f64>,
    /// Parameter hash of the model the caches were computed against.
    pub model_stamp: u64,
}

impl TrainingSet {
    pub fn new(
        interior: Vec<SpaceTimePoint>,
        boundary: Vec<BoundaryPoint>,
        initial: Vec<SpaceTimePoint>,
    ) -> Self {
        Self { interior, boundary, initial, ..Default::default() }
    }

    pub fn caches_fresh(&self, model: &SolutionModel) -> bool {
        self.model_stamp == model_stamp(model)
            && self.interior_residual.len() == self.interior.len()
            && self.interior_edrd.len() == self.interior.len()
    }

    /// Recomputes residual and dissipation caches against `model`.
    pub fn refresh_caches(
        &mut self,
        model: &SolutionModel,
        sys: &PdeSystem,
        domain: &Domain,
    ) -> Result<()> {
        self.interior_residual.clear();
        self.interior_edrd.clear();
        for p in &self.interior {
            let s = model.evaluate_with_derivatives(p.x, p.t, None)?;
            self.interior_residual.push(sys.bulk_residual_density(&s)?);
            self.interior_edrd.push(sys.edrd_bulk(&s));
        }
        self.boundary_residual.clear();
        self.boundary_edrd.clear();
        for bp in &self.boundary {
            match sys.bc_kind {
                BcKind::Dynamic => {
                    let s =
                        model.evaluate_with_derivatives(bp.position, bp.time, Some((domain, bp)))?;
                    self.boundary_residual.push(sys.boundary_residual_density(&s)?);
                    self.boundary_edrd.push(sys.edrd_boundary(&s));
                }
                BcKind::Neumann => {
                    let s =
                        model.evaluate_with_derivatives(bp.position, bp.time, Some((domain, bp)))?;
                    self.boundary_residual.push(sys.neumann_residual_density(&s)?);
                    self.boundary_edrd.push(0.0);
                }
                BcKind::Periodic1d => {
                    self.boundary_residual.push(0.0);
                    self.boundary_edrd.push(0.0);
                }
            }
        }
        self.model_stamp = model_stamp(model);
        Ok(())
    }
}

/// FNV-1a over the raw parameter bits of every segment.
pub fn model_stamp(model: &SolutionModel) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for seg in &model.segments {
        for p in &seg.net.params {
            for byte in p.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

/// A dense candidate set drawn fresh for one resampling event.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    pub interior: Vec<SpaceTimePoint>,
    pub boundary: Vec<BoundaryPoint>,
    pub seed: u64,
}

impl CandidatePool {
    /// Draws `n_interior` interior and `n_boundary` boundary candidates
    /// uniformly over the domain and time range.
    pub fn generate(
        domain: &Domain,
        t_range: (f64, f64),
        n_interior: usize,
        n_boundary: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = crate::seed::rng(seed);
        let interior = domain.sample_interior(n_interior, t_range, &mut rng)?;
        let boundary = if n_boundary > 0 {
            domain.sample_boundary(n_boundary, t_range, &mut rng)?
        } else {
            Vec::new()
        };
        Ok(Self { interior, boundary, seed })
    }
}

/// Axis-aligned space-time cells used for density bookkeeping. 1D domains
/// use nt x nx rectangles; 2D domains nt x nx x ny boxes. Boundary cells
/// are nt x ntheta arcs (nt x 2 endpoint bins on an interval).
#[derive(Debug, Clone)]
pub struct CellGrid {
    pub t_range: (f64, f64),
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    pub ntheta: usize,
    pub bbox: (Vec2, Vec2),
    pub center: Vec2,
    /// Target interior points per cell.
    pub d_f0: usize,
    /// Target boundary points per boundary cell.
    pub d_b0: usize,
}

impl CellGrid {
    /// Default resolutions, with per-cell targets derived from the total
    /// point budget (rounded up).
    pub fn for_domain(
        domain: &Domain,
        t_range: (f64, f64),
        n_interior_target: usize,
        n_boundary_target: usize,
    ) -> Self {
        let (nt, nx, ny, ntheta) = match domain.dim() {
            1 => (10, 20, 1, 2),
            _ => (10, 14, 14, 16),
        };
        let (lo, hi) = domain.bounding_box();
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let n_cells = nt * nx * ny;
        let n_bcells = nt * ntheta;
        Self {
            t_range,
            nt,
            nx,
            ny,
            ntheta,
            bbox: (lo, hi),
            center,
            d_f0: n_interior_target.div_ceil(n_cells),
            d_b0: n_boundary_target.div_ceil(n_bcells),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nt * self.nx * self.ny
    }

    pub fn n_boundary_cells(&self) -> usize {
        self.nt * self.ntheta
    }

    fn bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
        if n <= 1 || hi <= lo {
            return 0;
        }
        (((v - lo) / (hi - lo) * n as f64).floor() as isize).clamp(0, n as isize - 1) as usize
    }

    pub fn cell_of(&self, p: &SpaceTimePoint) -> usize {
        let it = Self::bin(p.t, self.t_range.0, self.t_range.1, self.nt);
        let ix = Self::bin(p.x[0], self.bbox.0[0], self.bbox.1[0], self.nx);
        let iy = Self::bin(p.x[1], self.bbox.0[1], self.bbox.1[1], self.ny);
        (it * self.nx + ix) * self.ny + iy
    }

    pub fn boundary_cell_of(&self, bp: &BoundaryPoint) -> usize {
        let it = Self::bin(bp.time, self.t_range.0, self.t_range.1, self.nt);
        let ith = if self.ntheta == 2 {
            usize::from(bp.position[0] >= self.center[0])
        } else {
            let th = (bp.position[1] - self.center[1])
                .atan2(bp.position[0] - self.center[0])
                .rem_euclid(std::f64::consts::TAU);
            Self::bin(th, 0.0, std::f64::consts::TAU, self.ntheta)
        };
        it * self.ntheta + ith
    }
}

/// Indices of the `m` largest scores, ties broken by lowest index.
pub fn rar_select(scores: &[f64], m: usize) -> Result<Vec<usize>> {
    if m > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {m} points from a pool of {}",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    idx.truncate(m);
    Ok(idx)
}

/// `m` indices drawn i.i.d. with replacement, probability proportional to
/// the score. All-zero scores fall back to uniform with a logged warning.
pub fn rad_sample(scores: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(Error::EmptySet("rad candidate pool"));
    }
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        log::warn!("all-zero residuals in rad_sample; falling back to uniform");
        return Ok((0..m).map(|_| rng.gen_range(0..scores.len())).collect());
    }
    let mut cdf = Vec::with_capacity(scores.len());
    let mut acc = 0.0;
    for s in scores {
        acc += s;
        cdf.push(acc);
    }
    Ok((0..m)
        .map(|_| {
            let u = rng.gen_range(0.0..total);
            cdf.partition_point(|c| *c <= u).min(scores.len() - 1)
        })
        .collect())
}

/// Top-m ranking by dissipation-rate density; same conventions as
/// `rar_select`.
pub fn edras_topm(edrd: &[f64], m: usize) -> Result<Vec<usize>> {
    rar_select(edrd, m)
}

/// Dissipation thresholds: one third of the mean density over the interior
/// pool and over the boundary pool. An empty boundary pool (or a regime
/// without boundary dissipation) yields a zero boundary threshold.
pub fn edras_thresholds(ts: &TrainingSet) -> Result<(f64, f64)> {
    if ts.interior_edrd.is_empty() {
        return Err(Error::EmptySet("interior dissipation cache"));
    }
    let e_f0 = ts.interior_edrd.iter().sum::<f64>() / (3.0 * ts.interior_edrd.len() as f64);
    let e_b0 = if ts.boundary_edrd.is_empty() {
        0.0
    } else {
        ts.boundary_edrd.iter().sum::<f64>() / (3.0 * ts.boundary_edrd.len() as f64)
    };
    Ok((e_f0, e_b0))
}

/// Removes interior points with dissipation density strictly below `e_f0`
/// and boundary points strictly below `e_b0`.
pub fn edras_prune(ts: &mut TrainingSet, e_f0: f64, e_b0: f64) -> (usize, usize) {
    let keep_i: Vec<bool> = ts.interior_edrd.iter().map(|e| *e >= e_f0).collect();
    let keep_b: Vec<bool> = ts.boundary_edrd.iter().map(|e| *e >= e_b0).collect();
    retain_by_mask(&mut ts.interior, &keep_i);
    retain_by_mask(&mut ts.interior_residual, &keep_i);
    retain_by_mask(&mut ts.interior_edrd, &keep_i);
    retain_by_mask(&mut ts.boundary, &keep_b);
    retain_by_mask(&mut ts.boundary_residual, &keep_b);
    retain_by_mask(&mut ts.boundary_edrd, &keep_b);
    (
        keep_i.iter().filter(|k| !**k).count(),
        keep_b.iter().filter(|k| !**k).count(),
    )
}

/// Alternative pruning mode: removes exactly the `m_f` interior and `m_b`
/// boundary points with the smallest dissipation density.
pub fn edras_prune_smallest(ts: &mut TrainingSet, m_f: usize, m_b: usize) -> (usize, usize) {
    let smallest_mask = |edrd: &[f64], m: usize| -> Vec<bool> {
        let mut idx: Vec<usize> = (0..edrd.len()).collect();
        idx.sort_by(|&a, &b| {
            edrd[a].partial_cmp(&edrd[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        let mut keep = vec![true; edrd.len()];
        for &i in idx.iter().take(m.min(edrd.len())) {
            keep[i] = false;
        }
        keep
    };
    let keep_i = smallest_mask(&ts.interior_edrd, m_f);
    let keep_b = smallest_mask(&ts.boundary_edrd, m_b);
    retain_by_mask(&mut ts.interior, &keep_i);
    retain_by_mask(&mut ts.interior_residual, &keep_i);
    retain_by_mask(&mut ts.interior_edrd, &keep_i);
    retain_by_mask(&mut ts.boundary, &keep_b);
    retain_by_mask(&mut ts.boundary_residual, &keep_b);
    retain_by_mask(&mut ts.boundary_edrd, &keep_b);
    (
        keep_i.iter().filter(|k| !**k).count(),
        keep_b.iter().filter(|k| !**k).count(),
    )
}

fn retain_by_mask<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut it = keep.iter();
    v.retain(|_| *it.next().unwrap_or(&true));
}

/// Per-candidate scores over the pool interior: (|residual|, edrd).
pub fn score_pool_interior(
    pool: &CandidatePool,
    model: &SolutionModel,
    sys: &PdeSystem,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut res = Vec::with_capacity(pool.interior.len());
    let mut edrd = Vec::with_capacity(pool.interior.len());
    for p in &pool.interior {
        let s = model.evaluate_with_derivatives(p.x, p.t, None)?;
        res.push(sys.bulk_residual_density(&s)?);
        edrd.push(sys.edrd_bulk(&s));
    }
    Ok((res, edrd))
}

/// Tops every deficient cell up to the grid's density target using the
/// highest-dissipation candidates available in that cell. Returns
/// (interior added, boundary added).
pub fn edras_density_refill(
    ts: &mut TrainingSet,
    grid: &CellGrid,
    pool: &CandidatePool,
    model: &SolutionModel,
    sys: &PdeSystem,
    domain: &Domain,
) -> Result<(usize, usize)> {
    let mut counts = vec![0usize; grid.n_cells()];
    for p in &ts.interior {
        counts[grid.cell_of(p)] += 1;
    }
    let (pool_res, pool_edrd) = score_pool_interior(pool, model, sys)?;
    // Candidates per cell, best-first.
    let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); grid.n_cells()];
    for (i, p) in pool.interior.iter().enumerate() {
        by_cell[grid.cell_of(p)].push(i);
    }
    let mut added_i = 0usize;
    for (cell, cands) in by_cell.iter_mut().enumerate() {
        if counts[cell] >= grid.d_f0 {
            continue;
        }
        let deficit = grid.d_f0 - counts[cell];
        cands.sort_by(|&a, &b| {
            pool_edrd[b]
                .partial_cmp(&pool_edrd[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        if cands.len() < deficit {
            log::warn!(
                "cell {cell}: pool exhausted, adding {} of deficit {deficit}",
                cands.len()
            );
        }
        for &i in cands.iter().take(deficit) {
            ts.interior.push(pool.interior[i]);
            ts.interior_residual.push(pool_res[i]);
            ts.interior_edrd.push(pool_edrd[i]);
            added_i += 1;
        }
    }

    let mut added_b = 0usize;
    if sys.bc_kind == BcKind::Dynamic && !pool.boundary.is_empty() {
        let mut bcounts = vec![0usize; grid.n_boundary_cells()];
        for bp in &ts.boundary {
            bcounts[grid.boundary_cell_of(bp)] += 1;
        }
        let mut pool_bres = Vec::with_capacity(pool.boundary.len());
        let mut pool_bedrd = Vec::with_capacity(pool.boundary.len());
        for bp in &pool.boundary {
            let s = model.evaluate_with_derivatives(bp.position, bp.time, Some((domain, bp)))?;
            pool_bres.push(sys.boundary_residual_density(&s)?);
            pool_bedrd.push(sys.edrd_boundary(&s));
        }
        let mut by_bcell: Vec<Vec<usize>> = vec![Vec::new(); grid.n_boundary_cells()];
        for (i, bp) in pool.boundary.iter().enumerate() {
            by_bcell[grid.boundary_cell_of(bp)].push(i);
        }
        for (cell, cands) in by_bcell.iter_mut().enumerate() {
            if bcounts[cell] >= grid.d_b0 {
                continue;
            }
            let deficit = grid.d_b0 - bcounts[cell];
            cands.sort_by(|&a, &b| {
                pool_bedrd[b]
                    .partial_cmp(&pool_bedrd[a])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            if cands.len() < deficit {
                log::warn!(
                    "boundary cell {cell}: pool exhausted, adding {} of deficit {deficit}",
                    cands.len()
                );
            }
            for &i in cands.iter().take(deficit) {
                ts.boundary.push(pool.boundary[i]);
                ts.boundary_residual.push(pool_bres[i]);
                ts.boundary_edrd.push(pool_bedrd[i]);
                added_b += 1;
            }
        }
    }
    Ok((added_i, added_b))
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    Rar,
    Rad,
    RarD,
    EdrasTopm,
    EdrasFull,
    EdrasRarCombo,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "rar" => Ok(Self::Rar),
            "rad" => Ok(Self::Rad),
            "rar_d" => Ok(Self::RarD),
            "edras_topm" => Ok(Self::EdrasTopm),
            "edras_full" => Ok(Self::EdrasFull),
            "edras_rar_combo" => Ok(Self::EdrasRarCombo),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Uniform => "uniform",
            Self::Rar => "rar",
            Self::Rad => "rad",
            Self::RarD => "rar_d",
            Self::EdrasTopm => "edras_topm",
            Self::EdrasFull => "edras_full",
            Self::EdrasRarCombo => "edras_rar_combo",
        };
        f.write_str(s)
    }
}

/// What one resampling event did to the training set.
#[derive(Debug, Clone, Copy, Default)]
pub struct ResampleOutcome {
    pub added_interior: usize,
    pub removed_interior: usize,
    pub added_boundary: usize,
    pub removed_boundary: usize,
}

/// Runs one resampling event. Top-m strategies append `m` interior points
/// from the pool (duplicate picks across combo halves are de-duplicated and
/// backfilled from the next-ranked candidates); `edras_full` runs the
/// threshold / prune / density-refill pipeline and ignores `m`. The total
/// interior count never exceeds `cap`.
#[allow(clippy::too_many_arguments)]
pub fn resample_step(
    strategy: Strategy,
    ts: &mut TrainingSet,
    pool: &CandidatePool,
    grid: &CellGrid,
    model: &SolutionModel,
    sys: &PdeSystem,
    domain: &Domain,
    m: usize,
    cap: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ResampleOutcome> {
    let mut out = ResampleOutcome::default();
    let room = cap.saturating_sub(ts.interior.len());
    if room == 0 {
        log::warn!("training set at cap {cap}; resample event skipped");
        return Ok(out);
    }
    let picks: Vec<usize> = match strategy {
        Strategy::Uniform => (0..m.min(pool.interior.len())).collect(),
        Strategy::Rar => {
            let (res, _) = score_pool_interior(pool, model, sys)?;
            rar_select(&res, m.min(res.len()))?
        }
        Strategy::Rad => {
            let (res, _) = score_pool_interior(pool, model, sys)?;
            let mut picks = rad_sample(&res, m, rng)?;
            picks.sort_unstable();
            picks.dedup();
            picks
        }
        Strategy::RarD => {
            let (res, _) = score_pool_interior(pool, model, sys)?;
            let half = m / 2;
            let mut picks = rar_select(&res, (m - half).min(res.len()))?;
            let drawn = rad_sample(&res, half, rng)?;
            backfill_unique(&mut picks, drawn.into_iter(), half);
            picks
        }
        Strategy::EdrasTopm => {
            let (_, edrd) = score_pool_interior(pool, model, sys)?;
            edras_topm(&edrd, m.min(edrd.len()))?
        }
        Strategy::EdrasRarCombo => {
            let (res, edrd) = score_pool_interior(pool, model, sys)?;
            let m_e = m.div_ceil(2).min(edrd.len());
            let mut picks = edras_topm(&edrd, m_e)?;
            let ranked = rar_select(&res, res.len())?;
            backfill_unique(&mut picks, ranked.into_iter(), m / 2);
            picks
        }
        Strategy::EdrasFull => {
            if !ts.caches_fresh(model) {
                ts.refresh_caches(model, sys, domain)?;
            }
            let (rem_i, rem_b) = if ts.interior.is_empty() {
                (0, 0)
            } else {
                let (e_f0, e_b0) = edras_thresholds(ts)?;
                edras_prune(ts, e_f0, e_b0)
            };
            let (add_i, add_b) = edras_density_refill(ts, grid, pool, model, sys, domain)?;
            out.removed_interior = rem_i;
            out.removed_boundary = rem_b;
            out.added_interior = add_i;
            out.added_boundary = add_b;
            enforce_cap(ts, cap);
            return Ok(out);
        }
    };
    let (res, edrd) = if strategy == Strategy::Uniform {
        (None, None)
    } else {
        let (r, e) = score_pool_interior(pool, model, sys)?;
        (Some(r), Some(e))
    };
    for &i in picks.iter().take(room) {
        ts.interior.push(pool.interior[i]);
        if let (Some(r), Some(e)) = (&res, &edrd) {
            if ts.interior_residual.len() + 1 == ts.interior.len() {
                ts.interior_residual.push(r[i]);
                ts.interior_edrd.push(e[i]);
            }
        }
        out.added_interior += 1;
    }
    Ok(out)
}

/// Appends items from `extra` to `picks`, skipping duplicates, until
/// `count` new entries have been added or `extra` is exhausted.
fn backfill_unique(
    picks: &mut Vec<usize>,
    extra: impl Iterator<Item = usize>,
    count: usize,
) {
    let mut added = 0usize;
    for i in extra {
        if added == count {
            break;
        }
        if !picks.contains(&i) {
            picks.push(i);
            added += 1;
        }
    }
}

fn enforce_cap(ts: &mut TrainingSet, cap: usize) {
    if ts.interior.len() > cap {
        log::warn!("training set saturated at cap {cap}");
        ts.interior.truncate(cap);
        ts.interior_residual.truncate(cap);
        ts.interior_edrd.truncate(cap);
    }
}

/// Appends one row per resampling event to a CSV log.
pub struct SamplingLog {
    writer: std::io::BufWriter<std::fs::File>,
}

impl SamplingLog {
    pub fn create(path: &std::path::Path) -> Result<Self> {
        use std::io::Write;
        let mut writer = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            writer,
            "event,strategy,added_interior,removed_interior,added_boundary,removed_boundary,interior_total"
        )?;
        Ok(Self { writer })
    }

    pub fn record(
        &mut self,
        event: usize,
        strategy: Strategy,
        outcome: &ResampleOutcome,
        interior_total: usize,
    ) -> Result<()> {
        use std::io::Write;
        writeln!(
            self.writer,
            "{event},{strategy},{},{},{},{},{interior_total}",
            outcome.added_interior,
            outcome.removed_interior,
            outcome.added_boundary,
            outcome.removed_boundary
        )?;
        self.writer.flush()?;
        Ok(())
    }
}
