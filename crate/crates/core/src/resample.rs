//! SMOTE oversampling followed by Tomek-link cleaning.
//!
//! Distances are squared Euclidean over the flattened window vectors and are
//! computed on demand (no distance matrix is stored), so memory stays linear
//! in the number of points. The brute-force `O(n^2 d)` neighbor search is the
//! cost hotspot of this stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::LabeledWindow;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("need more than {k} eligible points, have {available}")]
    NotEnoughPoints { k: usize, available: usize },
    #[error("minority class has {count} samples, SMOTE with k={k} needs more than k")]
    NotEnoughMinority { count: usize, k: usize },
    #[error("labels must be binary, found {0}")]
    NonBinaryLabel(u8),
    #[error("{points} points but {labels} labels")]
    LengthMismatch { points: usize, labels: usize },
    #[error("k_neighbors must be >= 1")]
    InvalidK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkRemoval {
    /// Drop both members of every link.
    Both,
    /// Drop only the member from the majority class.
    MajorityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    pub k_neighbors: usize,
    pub link_removal: LinkRemoval,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            link_removal: LinkRemoval::Both,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub negative: usize,
    pub positive: usize,
}

impl ClassCounts {
    pub fn of(labels: &[u8]) -> Self {
        let positive = labels.iter().filter(|&&l| l == 1).count();
        Self {
            negative: labels.len() - positive,
            positive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub n_synthetic: usize,
    pub n_links: usize,
    /// Points dropped by link removal.
    pub n_links_removed: usize,
    pub before: ClassCounts,
    pub after_smote: ClassCounts,
    pub after: ClassCounts,
}

pub fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    // Four independent accumulators keep the loop vectorizable.
    let mut acc = [0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in ca.by_ref().zip(cb.by_ref()) {
        for j in 0..4 {
            let d = f64::from(x[j]) - f64::from(y[j]);
            acc[j] += d * d;
        }
    }
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| (f64::from(*x) - f64::from(*y)).powi(2))
        .sum();
    acc.iter().sum::<f64>() + tail
}

/// Which points are candidate neighbors.
#[derive(Debug, Clone, Copy)]
pub enum Neighborhood<'a> {
    All,
    /// Only points whose label equals the query's.
    SameClass(&'a [u8]),
}

/// Indices of the `k` nearest points to `points[query]`, nearest first,
/// excluding the query. Ties go to the lower index.
pub fn knn<P: AsRef<[f32]>>(
    points: &[P],
    query: usize,
    k: usize,
    neighborhood: Neighborhood<'_>,
) -> Result<Vec<usize>, ResampleError> {
    let q = points[query].as_ref();
    let mut cands: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .filter(|&(i, _)| match neighborhood {
            Neighborhood::All => true,
            Neighborhood::SameClass(labels) => labels[i] == labels[query],
        })
        .map(|(i, p)| (squared_distance(q, p.as_ref()), i))
        .collect();
    if k > cands.len() {
        return Err(ResampleError::NotEnoughPoints {
            k,
            available: cands.len(),
        });
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(cands.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Generate `n_synthetic` points by interpolating between minority samples
/// and one of their `k` nearest minority neighbors.
///
/// The generator is consumed in a fixed order per synthetic point: base
/// index, neighbor slot, interpolation weight.
pub fn smote<P: AsRef<[f32]>, R: Rng>(
    minority: &[P],
    k: usize,
    n_synthetic: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f32>>, ResampleError> {
    if n_synthetic == 0 {
        return Ok(Vec::new());
    }
    if k == 0 {
        return Err(ResampleError::InvalidK);
    }
    if minority.len() <= k {
        return Err(ResampleError::NotEnoughMinority {
            count: minority.len(),
            k,
        });
    }
    let neighbors: Vec<Vec<usize>> = (0..minority.len())
        .map(|i| knn(minority, i, k, Neighborhood::All))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(n_synthetic);
    for _ in 0..n_synthetic {
        let base = rng.random_range(0..minority.len());
        let nn = neighbors[base][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        let (x, y) = (minority[base].as_ref(), minority[nn].as_ref());
        out.push(
            x.iter()
                .zip(y)
                .map(|(&a, &b)| {
                    let a = f64::from(a);
                    (a + lambda * (f64::from(b) - a)) as f32
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Mutual cross-class nearest-neighbor pairs `(i, j)` with `i < j`.
pub fn tomek_links<P: AsRef<[f32]>>(points: &[P], labels: &[u8]) -> Vec<(usize, usize)> {
    if points.len() < 2 {
        return Vec::new();
    }
    let nearest: Vec<usize> = (0..points.len())
        .map(|i| knn(points, i, 1, Neighborhood::All).expect("n >= 2")[0])
        .collect();
    (0..points.len())
        .filter_map(|i| {
            let j = nearest[i];
            (i < j && nearest[j] == i && labels[i] != labels[j]).then_some((i, j))
        })
        .collect()
}

fn check_labels(n_points: usize, labels: &[u8]) -> Result<(), ResampleError> {
    if n_points != labels.len() {
        return Err(ResampleError::LengthMismatch {
            points: n_points,
            labels: labels.len(),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(ResampleError::NonBinaryLabel(l));
    }
    Ok(())
}

/// SMOTE the minority class up to the majority count, then drop Tomek links
/// found on the combined set (one pass).
///
/// Synthetic points are appended after the originals.
pub fn smote_tomek(
    points: Vec<Vec<f32>>,
    labels: Vec<u8>,
    config: &ResampleConfig,
) -> Result<(Vec<Vec<f32>>, Vec<u8>, ResampleReport), ResampleError> {
    let out = smote_tomek_tracked(points, labels, config)?;
    Ok((out.points, out.labels, out.report))
}

struct Resampled {
    points: Vec<Vec<f32>>,
    labels: Vec<u8>,
    /// Index into the input for surviving originals, `None` for synthetic.
    origins: Vec<Option<usize>>,
    report: ResampleReport,
}

fn smote_tomek_tracked(
    mut points: Vec<Vec<f32>>,
    mut labels: Vec<u8>,
    config: &ResampleConfig,
) -> Result<Resampled, ResampleError> {
    check_labels(points.len(), &labels)?;
    if config.k_neighbors == 0 {
        return Err(ResampleError::InvalidK);
    }
    let n_orig = points.len();
    let before = ClassCounts::of(&labels);
    let (minority, majority_count) = if before.positive <= before.negative {
        (1u8, before.negative)
    } else {
        (0u8, before.positive)
    };
    let majority = 1 - minority;
    let minority_idx: Vec<usize> = (0..n_orig).filter(|&i| labels[i] == minority).collect();
    let n_synthetic = majority_count - minority_idx.len();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let synthetic = {
        let members: Vec<&[f32]> = minority_idx.iter().map(|&i| points[i].as_slice()).collect();
        smote(&members, config.k_neighbors, n_synthetic, &mut rng)?
    };
    points.extend(synthetic);
    labels.resize(points.len(), minority);
    let after_smote = ClassCounts::of(&labels);

    let links = tomek_links(&points, &labels);
    let mut drop = vec![false; points.len()];
    for &(i, j) in &links {
        match config.link_removal {
            LinkRemoval::Both => {
                drop[i] = true;
                drop[j] = true;
            }
            LinkRemoval::MajorityOnly => {
                drop[if labels[i] == majority { i } else { j }] = true;
            }
        }
    }
    let n_links_removed = drop.iter().filter(|&&d| d).count();
    let mut out_points = Vec::with_capacity(points.len() - n_links_removed);
    let mut out_labels = Vec::with_capacity(out_points.capacity());
    let mut origins = Vec::with_capacity(out_points.capacity());
    for (i, (p, l)) in points.into_iter().zip(labels).enumerate() {
        if !drop[i] {
            out_points.push(p);
            out_labels.push(l);
            origins.push((i < n_orig).then_some(i));
        }
    }
    let after = ClassCounts::of(&out_labels);
    Ok(Resampled {
        points: out_points,
        labels: out_labels,
        origins,
        report: ResampleReport {
            n_synthetic,
            n_links: links.len(),
            n_links_removed,
            before,
            after_smote,
            after,
        },
    })
}

/// [`smote_tomek`] over labeled windows. Synthetic windows take the subject
/// id `"synthetic"` and a window start of `-1`.
pub fn balance_windows(
    windows: Vec<LabeledWindow>,
    config: &ResampleConfig,
) -> Result<(Vec<LabeledWindow>, ResampleReport), ResampleError> {
    let mut meta = Vec::with_capacity(windows.len());
    let mut points = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        meta.push((w.subject_id, w.window_start_s));
        points.push(w.samples);
        labels.push(w.label);
    }
    let r = smote_tomek_tracked(points, labels, config)?;
    let windows = r
        .points
        .into_iter()
        .zip(r.labels)
        .zip(r.origins)
        .map(|((samples, label), origin)| {
            let (subject_id, window_start_s) = match origin {
                Some(i) => meta[i].clone(),
                None => ("synthetic".to_string(), -1.0),
            };
            LabeledWindow {
                subject_id,
                window_start_s,
                label,
                samples,
            }
        })
        .collect();
    Ok((windows, r.report))
}
