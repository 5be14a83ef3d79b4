//! Convergent cross mapping.
//!
//! A scalar series is delay-embedded into a shadow manifold; nearest
//! neighbors of each manifold point (restricted to a library subset and a
//! Theiler exclusion window) produce simplex-projection weights that estimate
//! the contemporaneous value of another series. Cross-map skill is the
//! Pearson correlation between estimates and truth; plotting skill against
//! library size gives the convergence curve that serves as the causal
//! influence measure: to assess the influence of X on Y, the manifold built
//! from Y estimates X.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::Trajectory;
use crate::seeds::stream_seed;
use crate::stats::{kendall_tau, mean, pearson, sample_sd};

#[derive(Debug, Error, PartialEq)]
pub enum CcmError {
    #[error("series too short: length {len}, need at least {min} for this embedding")]
    SeriesTooShort { len: usize, min: usize },
    #[error("series length mismatch: reader has {reader_len}, source has {source_len}")]
    LengthMismatch {
        reader_len: usize,
        source_len: usize,
    },
    #[error("series contains a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("invalid embedding spec: {0}")]
    InvalidSpec(String),
    #[error("not enough eligible neighbors: needed {needed}, found {eligible}")]
    NotEnoughNeighbors { needed: usize, eligible: usize },
    #[error("library size {size} exceeds available manifold points {available}")]
    LibraryTooLarge { size: usize, available: usize },
    #[error("library size {size} is below the minimum {min} (embedding dim + 1)")]
    LibraryTooSmall { size: usize, min: usize },
    #[error("library sizes must be strictly ascending and non-empty")]
    BadLibrarySizes,
    #[error("need at least {min} library sizes for a convergence verdict, got {got}")]
    TooFewLibrarySizes { got: usize, min: usize },
}

/// One observed coordinate of one agent over time, unit time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSeries {
    values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(values: Vec<f64>) -> Result<Self, CcmError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CcmError::NonFinite { index });
        }
        Ok(ScalarSeries { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Delay-embedding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    /// Embedding dimension E.
    pub dim: usize,
    /// Lag between coordinates, in steps.
    pub tau: usize,
    /// Temporal exclusion half-window for neighbor searches.
    pub theiler: usize,
}

impl Default for EmbeddingSpec {
    fn default() -> Self {
        EmbeddingSpec {
            dim: 3,
            tau: 2,
            theiler: 10,
        }
    }
}

impl EmbeddingSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim < 1 {
            return Err("embedding dim must be >= 1".into());
        }
        if self.tau < 1 {
            return Err("embedding tau must be >= 1".into());
        }
        Ok(())
    }

    /// Shortest series this spec can embed (one manifold point).
    pub fn min_series_len(&self) -> usize {
        (self.dim - 1) * self.tau + 1
    }

    /// Simplex neighbor count, E + 1.
    pub fn n_neighbors(&self) -> usize {
        self.dim + 1
    }
}

/// Delay-coordinate reconstruction of a scalar series. Point `k` is
/// `(x[t], x[t - tau], ..., x[t - (E-1) tau])` with `t = origin_index(k)`;
/// points are ordered by time.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowManifold {
    dim: usize,
    offset: usize,
    coords: Vec<f64>,
    n_points: usize,
}

impl ShadowManifold {
    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    /// Time index of point `k`'s most recent coordinate.
    pub fn origin_index(&self, k: usize) -> usize {
        k + self.offset
    }
}

/// Build the shadow manifold of `series` under `spec`.
pub fn delay_embed(
    series: &ScalarSeries,
    spec: &EmbeddingSpec,
) -> Result<ShadowManifold, CcmError> {
    spec.validate().map_err(CcmError::InvalidSpec)?;
    let offset = (spec.dim - 1) * spec.tau;
    let len = series.len();
    if len < offset + 1 {
        return Err(CcmError::SeriesTooShort {
            len,
            min: spec.min_series_len(),
        });
    }
    let n_points = len - offset;
    let x = series.values();
    let mut coords = Vec::with_capacity(n_points * spec.dim);
    for k in 0..n_points {
        let t = k + offset;
        for d in 0..spec.dim {
            coords.push(x[t - d * spec.tau]);
        }
    }
    Ok(ShadowManifold {
        dim: spec.dim,
        offset,
        coords,
        n_points,
    })
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Fixed-capacity best-k accumulator ordered by (squared distance, index);
/// the index tie-break keeps results fully deterministic.
struct KBest {
    k: usize,
    entries: Vec<(f64, usize)>,
}

impl KBest {
    fn new(k: usize) -> Self {
        KBest {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    fn clear(&mut self) {
        self.entries.clear();
    }

    fn push(&mut self, d2: f64, idx: usize) {
        if self.entries.len() == self.k {
            let worst = self.entries[self.k - 1];
            if d2 > worst.0 || (d2 == worst.0 && idx > worst.1) {
                return;
            }
        }
        let pos = self
            .entries
            .iter()
            .position(|&(ed, ei)| d2 < ed || (d2 == ed && idx < ei))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, (d2, idx));
        self.entries.truncate(self.k);
    }

    fn is_full(&self) -> bool {
        self.entries.len() == self.k
    }
}

/// The `k` nearest manifold points to `query` by Euclidean distance,
/// excluding the query itself and any point whose origin time lies within
/// +-`theiler` steps of the query's. Ties break toward the lower point
/// index; results are sorted ascending by distance.
pub fn find_neighbors(
    manifold: &ShadowManifold,
    query: usize,
    k: usize,
    theiler: usize,
) -> Result<Vec<(usize, f64)>, CcmError> {
    assert!(query < manifold.len(), "query index out of range");
    assert!(k >= 1, "k must be at least 1");
    let qp = manifold.point(query);
    let qt = manifold.origin_index(query) as i64;
    let mut best = KBest::new(k);
    let mut eligible = 0usize;
    for c in 0..manifold.len() {
        if c == query {
            continue;
        }
        if (manifold.origin_index(c) as i64 - qt).unsigned_abs() as usize <= theiler {
            continue;
        }
        eligible += 1;
        best.push(dist_sq(manifold.point(c), qp), c);
    }
    if eligible < k {
        return Err(CcmError::NotEnoughNeighbors {
            needed: k,
            eligible,
        });
    }
    Ok(best
        .entries
        .iter()
        .map(|&(d2, idx)| (idx, d2.sqrt()))
        .collect())
}

/// Simplex-projection estimate of `source` at the query's origin time, using
/// the `dim + 1` nearest library points in the reader manifold.
///
/// Weights are `u_j = exp(-d_j / d_1)` normalized to sum 1; when the nearest
/// distance is zero, all zero-distance neighbors share uniform weight.
pub fn cross_map_estimate(
    reader: &ShadowManifold,
    source: &ScalarSeries,
    library: &[usize],
    query: usize,
    theiler: usize,
) -> Result<f64, CcmError> {
    let k = reader.dim() + 1;
    let mut best = KBest::new(k);
    cross_map_core(reader, source.values(), library, query, theiler, &mut best)
}

fn cross_map_core(
    reader: &ShadowManifold,
    source_values: &[f64],
    library: &[usize],
    query: usize,
    theiler: usize,
    best: &mut KBest,
) -> Result<f64, CcmError> {
    let k = reader.dim() + 1;
    let qp = reader.point(query);
    let qt = reader.origin_index(query) as i64;
    best.clear();
    let mut eligible = 0usize;
    for &c in library {
        if c == query {
            continue;
        }
        if (reader.origin_index(c) as i64 - qt).unsigned_abs() as usize <= theiler {
            continue;
        }
        eligible += 1;
        best.push(dist_sq(reader.point(c), qp), c);
    }
    if !best.is_full() {
        return Err(CcmError::NotEnoughNeighbors {
            needed: k,
            eligible,
        });
    }

    let entries = &best.entries;
    let d1 = entries[0].0.sqrt();
    if d1 == 0.0 {
        // uniform weights over the exact matches
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(d2, idx) in entries.iter() {
            if d2 == 0.0 {
                sum += source_values[reader.origin_index(idx)];
                count += 1;
            }
        }
        return Ok(sum / count as f64);
    }
    let mut weight_sum = 0.0;
    let mut acc = 0.0;
    for &(d2, idx) in entries.iter() {
        let u = (-(d2.sqrt()) / d1).exp();
        weight_sum += u;
        acc += u * source_values[reader.origin_index(idx)];
    }
    Ok(acc / weight_sum)
}

/// How library points are drawn for each skill evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryMode {
    /// Uniform draws without replacement (the standard convergence test).
    Subsample,
    /// The first L manifold points; deterministic, no dispersion.
    Prefix,
}

/// Cross-map skill rho as a function of library size, with subsample
/// dispersion.
#[derive(Debug, Clone, PartialEq)]
pub struct CcmCurve {
    pub library_sizes: Vec<usize>,
    pub rho_mean: Vec<f64>,
    pub rho_sd: Vec<f64>,
    pub n_subsamples: usize,
}

impl CcmCurve {
    pub fn len(&self) -> usize {
        self.library_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.library_sizes.is_empty()
    }

    pub fn final_rho(&self) -> f64 {
        self.rho_mean.last().copied().unwrap_or(f64::NAN)
    }

    /// True when any entry carries the NaN sentinel for a degenerate
    /// (constant) series.
    pub fn is_degenerate(&self) -> bool {
        self.rho_mean.iter().any(|r| r.is_nan())
    }
}

/// Cross-map skill at one library size: mean and SD of rho over seeded
/// subsample draws. Collapses to a single evaluation when the library covers
/// every point. A constant source yields the flagged NaN sentinel.
pub fn ccm_skill(
    reader: &ScalarSeries,
    source: &ScalarSeries,
    spec: &EmbeddingSpec,
    library_size: usize,
    n_subsamples: usize,
    seed: u64,
) -> Result<(f64, f64), CcmError> {
    let manifold = embed_pair(reader, source, spec)?;
    let truths = truth_values(&manifold, source.values());
    let rhos = skill_samples(
        &manifold,
        source.values(),
        &truths,
        spec,
        library_size,
        n_subsamples,
        seed,
        LibraryMode::Subsample,
    )?;
    Ok((mean(&rhos), sample_sd(&rhos)))
}

fn embed_pair(
    reader: &ScalarSeries,
    source: &ScalarSeries,
    spec: &EmbeddingSpec,
) -> Result<ShadowManifold, CcmError> {
    if reader.len() != source.len() {
        return Err(CcmError::LengthMismatch {
            reader_len: reader.len(),
            source_len: source.len(),
        });
    }
    delay_embed(reader, spec)
}

fn truth_values(manifold: &ShadowManifold, source_values: &[f64]) -> Vec<f64> {
    (0..manifold.len())
        .map(|q| source_values[manifold.origin_index(q)])
        .collect()
}

/// Per-subsample rho values for one library size. Seeds are split per
/// subsample off `stream_seed(seed, library_size)`, so a curve row equals a
/// direct `ccm_skill` call with the same arguments.
#[allow(clippy::too_many_arguments)]
fn skill_samples(
    manifold: &ShadowManifold,
    source_values: &[f64],
    truths: &[f64],
    spec: &EmbeddingSpec,
    library_size: usize,
    n_subsamples: usize,
    seed: u64,
    mode: LibraryMode,
) -> Result<Vec<f64>, CcmError> {
    let n = manifold.len();
    let k = spec.n_neighbors();
    if library_size > n {
        return Err(CcmError::LibraryTooLarge {
            size: library_size,
            available: n,
        });
    }
    if library_size < k {
        return Err(CcmError::LibraryTooSmall {
            size: library_size,
            min: k,
        });
    }
    if n_subsamples == 0 {
        return Err(CcmError::InvalidSpec("n_subsamples must be >= 1".into()));
    }
    let effective = if library_size == n || mode == LibraryMode::Prefix {
        1
    } else {
        n_subsamples
    };
    let l_base = stream_seed(seed, library_size as u64);
    (0..effective)
        .into_par_iter()
        .map(|s| {
            let library: Vec<usize> = match mode {
                LibraryMode::Prefix => (0..library_size).collect(),
                LibraryMode::Subsample if library_size == n => (0..n).collect(),
                LibraryMode::Subsample => {
                    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(l_base, s as u64 + 1));
                    let mut v = rand::seq::index::sample(&mut rng, n, library_size).into_vec();
                    v.sort_unstable();
                    v
                }
            };
            subsample_rho(manifold, source_values, truths, &library, spec.theiler)
        })
        .collect()
}

/// One library draw evaluated over every query, monomorphized per embedding
/// dimension for the common cases. The library is gathered into contiguous
/// arrays once so the per-query scan is a linear sweep.
fn subsample_rho(
    manifold: &ShadowManifold,
    source_values: &[f64],
    truths: &[f64],
    library: &[usize],
    theiler: usize,
) -> Result<f64, CcmError> {
    match manifold.dim() {
        1 => subsample_rho_dim::<1>(manifold, source_values, truths, library, theiler),
        2 => subsample_rho_dim::<2>(manifold, source_values, truths, library, theiler),
        3 => subsample_rho_dim::<3>(manifold, source_values, truths, library, theiler),
        4 => subsample_rho_dim::<4>(manifold, source_values, truths, library, theiler),
        5 => subsample_rho_dim::<5>(manifold, source_values, truths, library, theiler),
        _ => subsample_rho_generic(manifold, source_values, truths, library, theiler),
    }
}

fn subsample_rho_dim<const DIM: usize>(
    manifold: &ShadowManifold,
    source_values: &[f64],
    truths: &[f64],
    library: &[usize],
    theiler: usize,
) -> Result<f64, CcmError> {
    let k = DIM + 1;
    let (points, rest) = manifold.coords.as_chunks::<DIM>();
    debug_assert!(rest.is_empty());

    let lib_points: Vec<[f64; DIM]> = library.iter().map(|&c| points[c]).collect();
    let lib_origins: Vec<i64> = library
        .iter()
        .map(|&c| manifold.origin_index(c) as i64)
        .collect();
    let lib_source: Vec<f64> = library
        .iter()
        .map(|&c| source_values[manifold.origin_index(c)])
        .collect();

    // (d2, slot-in-library); the library is sorted ascending, so slot order
    // matches point-index order and preserves the documented tie-break
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    let mut estimates = Vec::with_capacity(manifold.len());
    for (q, &qp) in points.iter().enumerate().take(manifold.len()) {
        let qt = manifold.origin_index(q) as i64;
        best.clear();
        let mut worst = f64::INFINITY;
        let mut eligible = 0usize;
        for (j, p) in lib_points.iter().enumerate() {
            // the query itself always falls inside the exclusion window
            if (lib_origins[j] - qt).unsigned_abs() as usize <= theiler {
                continue;
            }
            eligible += 1;
            let mut d2 = 0.0;
            for i in 0..DIM {
                let d = p[i] - qp[i];
                d2 += d * d;
            }
            if d2 > worst {
                continue;
            }
            if best.len() == k && d2 == worst {
                continue; // equal to current worst: lower slot already kept
            }
            let pos = best
                .iter()
                .position(|&(bd, _)| d2 < bd)
                .unwrap_or(best.len());
            best.insert(pos, (d2, j));
            best.truncate(k);
            if best.len() == k {
                worst = best[k - 1].0;
            }
        }
        if best.len() < k {
            return Err(CcmError::NotEnoughNeighbors {
                needed: k,
                eligible,
            });
        }
        estimates.push(simplex_estimate(&best, &lib_source));
    }
    Ok(pearson(&estimates, truths))
}

fn subsample_rho_generic(
    manifold: &ShadowManifold,
    source_values: &[f64],
    truths: &[f64],
    library: &[usize],
    theiler: usize,
) -> Result<f64, CcmError> {
    let k = manifold.dim() + 1;
    let mut best = KBest::new(k);
    let mut estimates = Vec::with_capacity(manifold.len());
    for q in 0..manifold.len() {
        estimates.push(cross_map_core(
            manifold,
            source_values,
            library,
            q,
            theiler,
            &mut best,
        )?);
    }
    Ok(pearson(&estimates, truths))
}

/// Exponential simplex weights over the selected neighbors; `values[slot]`
/// holds the source value at each library slot's origin time.
fn simplex_estimate(best: &[(f64, usize)], values: &[f64]) -> f64 {
    let d1 = best[0].0.sqrt();
    if d1 == 0.0 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &(d2, slot) in best {
            if d2 == 0.0 {
                sum += values[slot];
                count += 1;
            }
        }
        return sum / count as f64;
    }
    let mut weight_sum = 0.0;
    let mut acc = 0.0;
    for &(d2, slot) in best {
        let u = (-(d2.sqrt()) / d1).exp();
        weight_sum += u;
        acc += u * values[slot];
    }
    acc / weight_sum
}

/// Full convergence curve: `ccm_skill` at each library size. The
/// (size, subsample) grid is evaluated in parallel; per-cell seeds are
/// pre-derived so the result is bit-identical to serial execution.
pub fn ccm_curve(
    reader: &ScalarSeries,
    source: &ScalarSeries,
    spec: &EmbeddingSpec,
    library_sizes: &[usize],
    n_subsamples: usize,
    seed: u64,
) -> Result<CcmCurve, CcmError> {
    ccm_curve_with_mode(
        reader,
        source,
        spec,
        library_sizes,
        n_subsamples,
        seed,
        LibraryMode::Subsample,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn ccm_curve_with_mode(
    reader: &ScalarSeries,
    source: &ScalarSeries,
    spec: &EmbeddingSpec,
    library_sizes: &[usize],
    n_subsamples: usize,
    seed: u64,
    mode: LibraryMode,
) -> Result<CcmCurve, CcmError> {
    if library_sizes.is_empty() || library_sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CcmError::BadLibrarySizes);
    }
    let manifold = embed_pair(reader, source, spec)?;
    let truths = truth_values(&manifold, source.values());

    let per_size: Vec<Result<Vec<f64>, CcmError>> = library_sizes
        .par_iter()
        .map(|&l| {
            skill_samples(
                &manifold,
                source.values(),
                &truths,
                spec,
                l,
                n_subsamples,
                seed,
                mode,
            )
        })
        .collect();

    let mut rho_mean = Vec::with_capacity(library_sizes.len());
    let mut rho_sd = Vec::with_capacity(library_sizes.len());
    for samples in per_size {
        let samples = samples?;
        rho_mean.push(mean(&samples));
        rho_sd.push(sample_sd(&samples));
    }
    Ok(CcmCurve {
        library_sizes: library_sizes.to_vec(),
        rho_mean,
        rho_sd,
        n_subsamples,
    })
}

/// Default library grid: 10 log-spaced sizes from 50 up to `available - 1`,
/// deduplicated. Falls back to a short linear grid for small manifolds.
pub fn default_library_sizes(available: usize) -> Vec<usize> {
    let max = available.saturating_sub(1);
    let lo = 50usize;
    if max <= lo {
        let mut v: Vec<usize> = (2..=max).collect();
        v.dedup();
        return v;
    }
    let n = 10usize;
    let (lo_f, hi_f) = (lo as f64, max as f64);
    let mut sizes: Vec<usize> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (lo_f * (hi_f / lo_f).powf(t)).round() as usize
        })
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
}

/// Thresholds for the convergence verdict; config-exposed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceThresholds {
    pub min_delta_rho: f64,
    pub min_monotonicity: f64,
    pub min_final_rho: f64,
}

impl Default for ConvergenceThresholds {
    fn default() -> Self {
        ConvergenceThresholds {
            min_delta_rho: 0.05,
            min_monotonicity: 0.5,
            min_final_rho: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceScore {
    /// rho at the largest library minus rho at the smallest.
    pub delta_rho: f64,
    /// Kendall rank correlation between library size and rho.
    pub monotonicity: f64,
    pub final_rho: f64,
    pub convergent: bool,
    /// Set when the curve carries NaN sentinels from a constant series.
    pub degenerate: bool,
}

/// Classify a curve as convergent (increasing skill with library size, the
/// signature of true causal coupling). Degenerate curves are never
/// convergent.
pub fn convergence_score(
    curve: &CcmCurve,
    thresholds: &ConvergenceThresholds,
) -> Result<ConvergenceScore, CcmError> {
    if curve.len() < 3 {
        return Err(CcmError::TooFewLibrarySizes {
            got: curve.len(),
            min: 3,
        });
    }
    if curve.is_degenerate() {
        return Ok(ConvergenceScore {
            delta_rho: f64::NAN,
            monotonicity: f64::NAN,
            final_rho: f64::NAN,
            convergent: false,
            degenerate: true,
        });
    }
    let delta_rho = curve.rho_mean.last().unwrap() - curve.rho_mean.first().unwrap();
    let sizes: Vec<f64> = curve.library_sizes.iter().map(|&l| l as f64).collect();
    let monotonicity = kendall_tau(&sizes, &curve.rho_mean);
    let final_rho = curve.final_rho();
    Ok(ConvergenceScore {
        delta_rho,
        monotonicity,
        final_rho,
        convergent: delta_rho > thresholds.min_delta_rho
            && monotonicity > thresholds.min_monotonicity
            && final_rho > thresholds.min_final_rho,
        degenerate: false,
    })
}

/// Per-channel and averaged convergence curves for one ordered agent pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCcm {
    pub x: CcmCurve,
    pub y: CcmCurve,
    /// Pointwise mean of the x and y channels.
    pub mean: CcmCurve,
}

/// Cross-map the positions of two agents of a trajectory: the x coordinates
/// form one reader/source pair and the y coordinates another; the two curves
/// are averaged pointwise. `reader_agent` is the agent hypothesized to be
/// influenced; `source_agent` is the agent whose influence is measured.
#[allow(clippy::too_many_arguments)]
pub fn agent_ccm(
    trajectory: &Trajectory,
    reader_agent: usize,
    source_agent: usize,
    spec: &EmbeddingSpec,
    library_sizes: &[usize],
    n_subsamples: usize,
    seed: u64,
    mode: LibraryMode,
) -> Result<AgentCcm, CcmError> {
    let reader_x = trajectory.position_series(reader_agent, 0);
    let source_x = trajectory.position_series(source_agent, 0);
    let reader_y = trajectory.position_series(reader_agent, 1);
    let source_y = trajectory.position_series(source_agent, 1);
    let x = ccm_curve_with_mode(
        &reader_x,
        &source_x,
        spec,
        library_sizes,
        n_subsamples,
        stream_seed(seed, 0x10),
        mode,
    )?;
    let y = ccm_curve_with_mode(
        &reader_y,
        &source_y,
        spec,
        library_sizes,
        n_subsamples,
        stream_seed(seed, 0x11),
        mode,
    )?;
    let mean_curve = average_curves(&[&x, &y]);
    Ok(AgentCcm {
        x,
        y,
        mean: mean_curve,
    })
}

/// Pointwise mean of several curves sharing one library grid; rho_sd is the
/// mean of the input dispersions.
pub fn average_curves(curves: &[&CcmCurve]) -> CcmCurve {
    assert!(!curves.is_empty());
    let sizes = curves[0].library_sizes.clone();
    for c in curves {
        assert_eq!(c.library_sizes, sizes, "curves must share a library grid");
    }
    let n = sizes.len();
    let count = curves.len() as f64;
    let rho_mean = (0..n)
        .map(|i| curves.iter().map(|c| c.rho_mean[i]).sum::<f64>() / count)
        .collect();
    let rho_sd = (0..n)
        .map(|i| curves.iter().map(|c| c.rho_sd[i]).sum::<f64>() / count)
        .collect();
    CcmCurve {
        library_sizes: sizes,
        rho_mean,
        rho_sd,
        n_subsamples: curves[0].n_subsamples,
    }
}

/// Aggregate sample curves (e.g. one per episode) into mean and SD across
/// samples at each library size.
pub fn aggregate_curves(curves: &[&CcmCurve]) -> CcmCurve {
    assert!(!curves.is_empty());
    let sizes = curves[0].library_sizes.clone();
    for c in curves {
        assert_eq!(c.library_sizes, sizes, "curves must share a library grid");
    }
    let n = sizes.len();
    let mut rho_mean = Vec::with_capacity(n);
    let mut rho_sd = Vec::with_capacity(n);
    for i in 0..n {
        let samples: Vec<f64> = curves.iter().map(|c| c.rho_mean[i]).collect();
        rho_mean.push(mean(&samples));
        rho_sd.push(sample_sd(&samples));
    }
    CcmCurve {
        library_sizes: sizes,
        rho_mean,
        rho_sd,
        n_subsamples: curves.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> ScalarSeries {
        ScalarSeries::new(values.to_vec()).unwrap()
    }

    fn spec(dim: usize, tau: usize, theiler: usize) -> EmbeddingSpec {
        EmbeddingSpec { dim, tau, theiler }
    }

    /// x' = r x (1 - x), the classic chaotic map.
    fn logistic(r: f64, x0: f64, n: usize, burn_in: usize) -> ScalarSeries {
        let mut x = x0;
        let mut out = Vec::with_capacity(n);
        for i in 0..n + burn_in {
            x = r * x * (1.0 - x);
            if i >= burn_in {
                out.push(x);
            }
        }
        series(&out)
    }

    #[test]
    fn identity_embedding() {
        let s = series(&[1.0, 2.0, 3.0]);
        let m = delay_embed(&s, &spec(1, 1, 0)).unwrap();
        assert_eq!(m.len(), 3);
        for k in 0..3 {
            assert_eq!(m.point(k), &[s.values()[k]]);
            assert_eq!(m.origin_index(k), k);
        }
    }

    #[test]
    fn hand_embedding() {
        let s = series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let m = delay_embed(&s, &spec(2, 1, 0)).unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(m.point(0), &[2.0, 1.0]);
        assert_eq!(m.point(1), &[3.0, 2.0]);
        assert_eq!(m.point(2), &[4.0, 3.0]);
        assert_eq!(m.point(3), &[5.0, 4.0]);
        assert_eq!(m.origin_index(0), 1);
        assert_eq!(m.origin_index(3), 4);
    }

    #[test]
    fn point_count_formula() {
        let s = ScalarSeries::new(vec![0.5; 2000]).unwrap();
        let m = delay_embed(&s, &spec(3, 2, 0)).unwrap();
        assert_eq!(m.len(), 1996);
    }

    #[test]
    fn too_short_series_names_minimum() {
        let s = series(&[1.0, 2.0, 3.0]);
        let err = delay_embed(&s, &spec(3, 2, 0)).unwrap_err();
        assert_eq!(err, CcmError::SeriesTooShort { len: 3, min: 5 });
    }

    #[test]
    fn non_finite_series_rejected() {
        let err = ScalarSeries::new(vec![1.0, f64::NAN]).unwrap_err();
        assert_eq!(err, CcmError::NonFinite { index: 1 });
    }

    // points 0, 1, 4, 9 as E=1; query = the point with value 4;
    // distances to 0, 1, 9 are 4, 3, 5 -> neighbors [(1, 3), (0, 4)]
    #[test]
    fn find_neighbors_hand_case() {
        let m = delay_embed(&series(&[0.0, 1.0, 4.0, 9.0]), &spec(1, 1, 0)).unwrap();
        let got = find_neighbors(&m, 2, 2, 0).unwrap();
        assert_eq!(got, vec![(1, 3.0), (0, 4.0)]);
    }

    #[test]
    fn find_neighbors_tie_breaks_to_lower_index() {
        let m = delay_embed(&series(&[5.0, 5.0, 5.0, 5.0]), &spec(1, 1, 0)).unwrap();
        let got = find_neighbors(&m, 0, 2, 0).unwrap();
        assert_eq!(got, vec![(1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn find_neighbors_theiler_exclusion() {
        let m = delay_embed(&series(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]), &spec(1, 1, 0)).unwrap();
        // theiler 2 removes indices 1..=5 around query 3 except 0
        let got = find_neighbors(&m, 3, 1, 2).unwrap();
        assert_eq!(got, vec![(0, 3.0)]);
        let err = find_neighbors(&m, 3, 2, 2).unwrap_err();
        assert_eq!(
            err,
            CcmError::NotEnoughNeighbors {
                needed: 2,
                eligible: 1
            }
        );
    }

    #[test]
    fn brute_force_equivalence_small_series() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let len = rng.random_range(8..=50);
            let vals: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = series(&vals);
            let e = spec(2, 1, 0);
            let m = delay_embed(&s, &e).unwrap();
            for theiler in [0usize, 2] {
                for q in 0..m.len() {
                    for k in 1..=3usize {
                        // exhaustive oracle
                        let mut all: Vec<(f64, usize)> = (0..m.len())
                            .filter(|&c| {
                                c != q
                                    && (m.origin_index(c) as i64 - m.origin_index(q) as i64)
                                        .unsigned_abs()
                                        as usize
                                        > theiler
                            })
                            .map(|c| (dist_sq(m.point(c), m.point(q)), c))
                            .collect();
                        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        let expected: Vec<(usize, f64)> =
                            all.iter().take(k).map(|&(d2, c)| (c, d2.sqrt())).collect();
                        match find_neighbors(&m, q, k, theiler) {
                            Ok(got) => assert_eq!(got, expected),
                            Err(_) => assert!(all.len() < k),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constant_source_estimate_is_constant() {
        let reader = logistic(3.9, 0.4, 60, 0);
        let source = ScalarSeries::new(vec![2.5; 60]).unwrap();
        let m = delay_embed(&reader, &spec(2, 1, 0)).unwrap();
        let library: Vec<usize> = (0..m.len()).collect();
        let est = cross_map_estimate(&m, &source, &library, 10, 0).unwrap();
        assert!((est - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_distance_duplicate_returns_source_at_duplicate() {
        // manifold with an exact duplicate of the query point far from the
        // query in time
        let s = series(&[1.0, 7.0, 3.0, 9.0, 5.0, 1.0, 7.0, 8.0, 2.0, 4.0]);
        let e = spec(2, 1, 0);
        let m = delay_embed(&s, &e).unwrap();
        // point 0 = (7, 1) at t=1; point 5 = (7, 1) at t=6: duplicates
        assert_eq!(m.point(0), m.point(5));
        let source = series(&[10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0]);
        let library = vec![5usize];
        // k = dim + 1 = 3 > |library|, so use a wider library with the
        // duplicate plus two fillers; the duplicate takes all the weight
        let library = {
            let mut l = library;
            l.extend([2usize, 3]);
            l.sort_unstable();
            l
        };
        let est = cross_map_estimate(&m, &source, &library, 0, 0).unwrap();
        assert_eq!(est, source.values()[m.origin_index(5)]);
    }

    // Five-point hand example, E = 1 so k = 2, explicit exponential weight
    // arithmetic.
    #[test]
    fn cross_map_hand_weights() {
        let reader = series(&[0.0, 1.0, 4.0, 9.0, 16.0]);
        let source = series(&[10.0, 20.0, 30.0, 40.0, 50.0]);
        let m = delay_embed(&reader, &spec(1, 1, 0)).unwrap();
        // query = point 2 (value 4), library = {0, 1, 3, 4}
        // distances: 4, 3, 5, 12 -> nearest two: (1, d=3), (0, d=4)
        let est = cross_map_estimate(&m, &source, &[0, 1, 3, 4], 2, 0).unwrap();
        let u1 = (-3.0_f64 / 3.0).exp();
        let u2 = (-4.0_f64 / 3.0).exp();
        let expected = (u1 * 20.0 + u2 * 10.0) / (u1 + u2);
        assert!((est - expected).abs() < 1e-12);
    }

    #[test]
    fn self_prediction_of_logistic_map() {
        let s = logistic(3.9, 0.4, 500, 100);
        let e = spec(2, 1, 5);
        let n = delay_embed(&s, &e).unwrap().len();
        let (rho, sd) = ccm_skill(&s, &s, &e, n, 1, 7).unwrap();
        assert!(rho >= 0.99, "self-prediction rho = {rho}");
        assert_eq!(sd, 0.0);
    }

    // Statistical oracle: cross-mapping independent white noise from a
    // deterministic map yields |rho| near zero across seeds.
    #[test]
    fn white_noise_source_has_no_skill() {
        use rand::Rng;
        let reader = logistic(3.9, 0.4, 1000, 100);
        let e = spec(2, 1, 5);
        let n = delay_embed(&reader, &e).unwrap().len();
        let mut below_01 = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1.0)).collect();
            let source = ScalarSeries::new(noise).unwrap();
            let (rho, _) = ccm_skill(&reader, &source, &e, n, 1, seed).unwrap();
            assert!(rho.abs() < 0.2, "seed {seed}: |rho| = {}", rho.abs());
            if rho.abs() < 0.1 {
                below_01 += 1;
            }
        }
        assert!(below_01 >= 19, "only {below_01}/20 seeds below 0.1");
    }

    // Doubling the subsample count moves the mean by less than twice the
    // standard error.
    #[test]
    fn subsample_count_stability() {
        let reader = logistic(3.9, 0.41, 800, 100);
        let source = logistic(3.7, 0.23, 800, 100);
        let e = spec(2, 1, 5);
        for l in [100usize, 300] {
            let (mean_10, _) = ccm_skill(&reader, &source, &e, l, 10, 33).unwrap();
            let (mean_20, sd_20) = ccm_skill(&reader, &source, &e, l, 20, 33).unwrap();
            let budget = 2.0 * sd_20 / 10.0_f64.sqrt();
            assert!(
                (mean_10 - mean_20).abs() < budget,
                "L={l}: |{mean_10} - {mean_20}| not below {budget}"
            );
        }
    }

    #[test]
    fn full_library_is_seed_independent() {
        let s = logistic(3.9, 0.4, 300, 100);
        let e = spec(2, 1, 5);
        let n = delay_embed(&s, &e).unwrap().len();
        let a = ccm_skill(&s, &s, &e, n, 1, 1).unwrap();
        let b = ccm_skill(&s, &s, &e, n, 5, 999).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_source_skill_is_nan_sentinel() {
        let reader = logistic(3.9, 0.4, 200, 0);
        let source = ScalarSeries::new(vec![1.0; 200]).unwrap();
        let e = spec(2, 1, 0);
        let (rho, _) = ccm_skill(&reader, &source, &e, 100, 2, 3).unwrap();
        assert!(rho.is_nan());
        let curve = ccm_curve(&reader, &source, &e, &[50, 100, 150], 2, 3).unwrap();
        assert!(curve.is_degenerate());
        let score = convergence_score(&curve, &ConvergenceThresholds::default()).unwrap();
        assert!(!score.convergent);
        assert!(score.degenerate);
    }

    // The gathered/monomorphized scan must agree bit-for-bit with the plain
    // per-query reference path (`cross_map_estimate` + pearson).
    #[test]
    fn optimized_subsample_path_matches_reference_path() {
        let reader = logistic(3.9, 0.37, 400, 100);
        let source = logistic(3.7, 0.54, 400, 100);
        for dim in [1usize, 2, 3, 4, 6] {
            let e = spec(dim, 2, 4);
            let m = delay_embed(&reader, &e).unwrap();
            let n = m.len();
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            let mut library = rand::seq::index::sample(&mut rng, n, n / 2).into_vec();
            library.sort_unstable();

            let truths = truth_values(&m, source.values());
            let optimized =
                subsample_rho(&m, source.values(), &truths, &library, e.theiler).unwrap();

            let mut estimates = Vec::with_capacity(n);
            for q in 0..n {
                estimates.push(cross_map_estimate(&m, &source, &library, q, e.theiler).unwrap());
            }
            let reference = pearson(&estimates, &truths);
            assert_eq!(optimized, reference, "dim {dim}");
        }
    }

    #[test]
    fn curve_row_matches_direct_skill_call() {
        let reader = logistic(3.9, 0.31, 300, 100);
        let source = logistic(3.7, 0.62, 300, 100);
        let e = spec(2, 1, 5);
        let sizes = [50usize, 120, 250];
        let curve = ccm_curve(&reader, &source, &e, &sizes, 6, 42).unwrap();
        for (i, &l) in sizes.iter().enumerate() {
            let (m, sd) = ccm_skill(&reader, &source, &e, l, 6, 42).unwrap();
            assert_eq!(curve.rho_mean[i], m);
            assert_eq!(curve.rho_sd[i], sd);
        }
    }

    #[test]
    fn bad_library_sizes_rejected() {
        let s = logistic(3.9, 0.4, 200, 0);
        let e = spec(2, 1, 0);
        assert_eq!(
            ccm_curve(&s, &s, &e, &[50, 50], 2, 1).unwrap_err(),
            CcmError::BadLibrarySizes
        );
        assert_eq!(
            ccm_curve(&s, &s, &e, &[], 2, 1).unwrap_err(),
            CcmError::BadLibrarySizes
        );
        assert_eq!(
            ccm_curve(&s, &s, &e, &[50, 10_000], 2, 1).unwrap_err(),
            CcmError::LibraryTooLarge {
                size: 10_000,
                available: 199
            }
        );
    }

    // Estimates are convex combinations of source values, so an affine map
    // of the source transforms estimates and truths alike and Pearson rho is
    // unchanged for any a != 0 (including negative a: both sides flip).
    #[test]
    fn skill_is_affine_invariant_in_the_source() {
        let reader = logistic(3.9, 0.4, 400, 100);
        let source = logistic(3.8, 0.7, 400, 100);
        let e = spec(2, 1, 5);
        let (rho, _) = ccm_skill(&reader, &source, &e, 200, 4, 11).unwrap();
        let scaled =
            ScalarSeries::new(source.values().iter().map(|v| 2.5 * v + 7.0).collect()).unwrap();
        let (rho_scaled, _) = ccm_skill(&reader, &scaled, &e, 200, 4, 11).unwrap();
        assert!((rho - rho_scaled).abs() < 1e-9, "{rho} vs {rho_scaled}");
        let flipped =
            ScalarSeries::new(source.values().iter().map(|v| -1.5 * v).collect()).unwrap();
        let (rho_flipped, _) = ccm_skill(&reader, &flipped, &e, 200, 4, 11).unwrap();
        assert!((rho - rho_flipped).abs() < 1e-9);
    }

    #[test]
    fn time_shift_sanity_on_smooth_series() {
        // smooth deterministic signal: two incommensurate sines
        let n = 600usize;
        let f = |t: f64| (0.11 * t).sin() + 0.5 * (0.053 * t + 1.0).sin();
        let reader: Vec<f64> = (0..n).map(|t| f(t as f64)).collect();
        let shift = 3usize; // one step beyond theiler = 2
        let source: Vec<f64> = (0..n).map(|t| f((t + shift) as f64)).collect();
        let e = spec(3, 1, 2);
        let reader = series(&reader);
        let source = series(&source);
        let avail = delay_embed(&reader, &e).unwrap().len();
        let (rho, _) = ccm_skill(&reader, &source, &e, avail, 1, 0).unwrap();
        assert!(rho > 0.99, "time-shift rho = {rho}");
    }

    #[test]
    fn prefix_mode_has_zero_dispersion_and_is_deterministic() {
        let reader = logistic(3.9, 0.4, 300, 100);
        let e = spec(2, 1, 5);
        let a = ccm_curve_with_mode(
            &reader,
            &reader,
            &e,
            &[50, 120, 250],
            8,
            1,
            LibraryMode::Prefix,
        )
        .unwrap();
        let b = ccm_curve_with_mode(
            &reader,
            &reader,
            &e,
            &[50, 120, 250],
            8,
            2,
            LibraryMode::Prefix,
        )
        .unwrap();
        assert_eq!(a.rho_mean, b.rho_mean);
        assert!(a.rho_sd.iter().all(|&sd| sd == 0.0));
    }

    #[test]
    fn convergence_score_definitions() {
        let th = ConvergenceThresholds::default();
        let rising = CcmCurve {
            library_sizes: vec![10, 20, 40],
            rho_mean: vec![0.2, 0.5, 0.8],
            rho_sd: vec![0.0; 3],
            n_subsamples: 1,
        };
        let s = convergence_score(&rising, &th).unwrap();
        assert!(s.convergent);
        assert_eq!(s.monotonicity, 1.0);
        assert!((s.delta_rho - 0.6).abs() < 1e-15);

        let flat = CcmCurve {
            library_sizes: vec![10, 20, 40],
            rho_mean: vec![0.0, 0.0, 0.0],
            rho_sd: vec![0.0; 3],
            n_subsamples: 1,
        };
        let s = convergence_score(&flat, &th).unwrap();
        assert!(!s.convergent);

        let short = CcmCurve {
            library_sizes: vec![10, 20],
            rho_mean: vec![0.0, 0.1],
            rho_sd: vec![0.0; 2],
            n_subsamples: 1,
        };
        assert_eq!(
            convergence_score(&short, &th).unwrap_err(),
            CcmError::TooFewLibrarySizes { got: 2, min: 3 }
        );
    }

    #[test]
    fn default_library_grid_shape() {
        let sizes = default_library_sizes(1996);
        assert_eq!(sizes.first(), Some(&50));
        assert_eq!(sizes.last(), Some(&1995));
        assert_eq!(sizes.len(), 10);
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
    }
}
