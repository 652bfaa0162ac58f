//! Scenario clustering (K-Means, diagonal Gaussian mixtures) and
//! entropy-based element importance.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzeError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("k = {k} exceeds the {rows} available rows")]
    KTooLarge { k: usize, rows: usize },
    #[error("mixture fitting needs more rows than components (rows = {rows}, k = {k})")]
    InsufficientData { k: usize, rows: usize },
    #[error("mixture component {0} lost all its mass")]
    SingularComponent(usize),
    #[error("feature matrix is not rectangular at row {0}")]
    Ragged(usize),
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("element {0} has no observations")]
    NoObservations(String),
    #[error("feature file: {0}")]
    Format(String),
}

/// Rows are scenarios, columns named numeric features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, AnalyzeError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::with_ids(ids, names, rows)
    }

    pub fn with_ids(ids: Vec<String>, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, AnalyzeError> {
        let cols = names.len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(AnalyzeError::Ragged(r));
            }
            if let Some(c) = row.iter().position(|v| !v.is_finite()) {
                return Err(AnalyzeError::NonFinite { row: r, col: c });
            }
            data.extend_from_slice(row);
        }
        if ids.len() != rows.len() {
            return Err(AnalyzeError::Ragged(ids.len().min(rows.len())));
        }
        Ok(FeatureMatrix { ids, names, data })
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((0..self.rows()).map(|i| self.row(i)[j]).collect())
    }

    /// Keeps only the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            names: self.names.clone(),
            data: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    /// Per-column population variance.
    pub fn column_variances(&self) -> Vec<f64> {
        let n = self.rows().max(1) as f64;
        (0..self.cols())
            .map(|j| {
                let mean = (0..self.rows()).map(|i| self.row(i)[j]).sum::<f64>() / n;
                (0..self.rows()).map(|i| (self.row(i)[j] - mean).powi(2)).sum::<f64>() / n
            })
            .collect()
    }

    /// Z-scored copy; constant columns are only centered.
    pub fn standardized(&self) -> FeatureMatrix {
        let n = self.rows().max(1) as f64;
        let means: Vec<f64> = (0..self.cols())
            .map(|j| (0..self.rows()).map(|i| self.row(i)[j]).sum::<f64>() / n)
            .collect();
        let sds: Vec<f64> = self.column_variances().iter().map(|v| v.sqrt()).collect();
        let mut out = self.clone();
        let c = self.cols();
        for (k, v) in out.data.iter_mut().enumerate() {
            let j = k % c;
            *v -= means[j];
            if sds[j] > 0.0 {
                *v /= sds[j];
            }
        }
        out
    }

    /// CSV with an `id` column followed by the feature columns.
    pub fn to_csv(&self) -> String {
        let mut out = format!("id,{}\n", self.names.join(","));
        for i in 0..self.rows() {
            let cells: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&format!("{},{}\n", self.ids[i], cells.join(",")));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, AnalyzeError> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| AnalyzeError::Format(e.to_string()))?.clone();
        let has_id = headers.get(0).map(str::trim) == Some("id");
        let names: Vec<String> = headers.iter().skip(usize::from(has_id)).map(|h| h.trim().to_string()).collect();
        let (mut ids, mut rows) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| AnalyzeError::Format(e.to_string()))?;
            ids.push(if has_id { rec[0].trim().to_string() } else { i.to_string() });
            let row = rec
                .iter()
                .skip(usize::from(has_id))
                .map(|c| c.trim().parse::<f64>().map_err(|_| AnalyzeError::Format(format!("row {}: {c:?}", i + 1))))
                .collect::<Result<Vec<f64>, _>>()?;
            rows.push(row);
        }
        Self::with_ids(ids, names, rows)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterKind {
    Kmeans,
    Gmm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub kind: ClusterKind,
    pub k: usize,
    pub feature_names: Vec<String>,
    /// K-Means centroids or mixture means.
    pub centers: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Diagonal covariances, one vector per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<Vec<f64>>>,
    /// Hard assignment per row (argmax responsibility for mixtures).
    pub assignment: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsibilities: Option<Vec<Vec<f64>>>,
    /// Inertia (K-Means) or log-likelihood (mixture) after every step.
    pub objective_trace: Vec<f64>,
}

impl ClusterModel {
    /// Row indices assigned to `cluster`.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    /// Cluster holding the most rows (lowest index on ties).
    pub fn largest_cluster(&self) -> usize {
        (0..self.k)
            .max_by_key(|&c| (self.members(c).len(), std::cmp::Reverse(c)))
            .unwrap_or(0)
    }
}

fn kmeans_pp(x: &FeatureMatrix, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut centers = vec![x.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = x.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(x: &FeatureMatrix, centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = (0..x.rows())
        .map(|i| {
            let (best, d) = centers
                .iter()
                .enumerate()
                .map(|(c, ctr)| (c, sq_dist(x.row(i), ctr)))
                .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
            inertia += d;
            best
        })
        .collect();
    (labels, inertia)
}

/// Lloyd's algorithm from k-means++ seeding. Stops after `max_iter` updates
/// or once no centroid moves by `tol` or more.
pub fn kmeans(x: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel, AnalyzeError> {
    if k == 0 {
        return Err(AnalyzeError::InvalidK);
    }
    if k > x.rows() {
        return Err(AnalyzeError::KTooLarge { k, rows: x.rows() });
    }
    let mut rng = seed::rng(seed);
    let mut centers = kmeans_pp(x, k, &mut rng);
    let (mut labels, inertia) = assign(x, &centers);
    let mut trace = vec![inertia];
    let d = x.cols();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in labels.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        let (l, inertia) = assign(x, &centers);
        labels = l;
        trace.push(inertia);
        if shift < tol {
            break;
        }
    }
    Ok(ClusterModel {
        kind: ClusterKind::Kmeans,
        k,
        feature_names: x.names.clone(),
        centers,
        weights: None,
        variances: None,
        assignment: labels,
        responsibilities: None,
        objective_trace: trace,
    })
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

struct Mixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

/// E-step: responsibilities and total log-likelihood.
fn e_step(x: &FeatureMatrix, m: &Mixture) -> (Vec<Vec<f64>>, f64) {
    let k = m.weights.len();
    let mut ll = 0.0;
    let mut resp = Vec::with_capacity(x.rows());
    let mut logp = vec![0.0; k];
    for i in 0..x.rows() {
        let row = x.row(i);
        for j in 0..k {
            let mut s = m.weights[j].ln();
            for ((v, mu), var) in row.iter().zip(&m.means[j]).zip(&m.vars[j]) {
                s -= 0.5 * (LN_2PI + var.ln() + (v - mu) * (v - mu) / var);
            }
            logp[j] = s;
        }
        let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logp.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        ll += lse;
        resp.push(logp.iter().map(|l| (l - lse).exp()).collect());
    }
    (resp, ll)
}

fn m_step(x: &FeatureMatrix, resp: &[Vec<f64>], floor: &[f64]) -> Result<Mixture, AnalyzeError> {
    let k = resp[0].len();
    let n = x.rows() as f64;
    let d = x.cols();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut vars = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        if !(nk > 1e-10 * n) {
            return Err(AnalyzeError::SingularComponent(j));
        }
        let mut mu = vec![0.0; d];
        for (i, r) in resp.iter().enumerate() {
            for (m, v) in mu.iter_mut().zip(x.row(i)) {
                *m += r[j] * v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= nk);
        let mut var = vec![0.0; d];
        for (i, r) in resp.iter().enumerate() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mu) {
                *s += r[j] * (v - m) * (v - m);
            }
        }
        for (s, f) in var.iter_mut().zip(floor) {
            *s = (*s / nk).max(*f);
        }
        weights.push(nk / n);
        means.push(mu);
        vars.push(var);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Mixture { weights, means, vars })
}

/// EM for a Gaussian mixture with diagonal covariances, seeded from K-Means.
/// Variances are floored at `1e-6` times the feature's overall variance.
pub fn gmm_fit(x: &FeatureMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterModel, AnalyzeError> {
    if k == 0 {
        return Err(AnalyzeError::InvalidK);
    }
    if x.rows() <= k {
        return Err(AnalyzeError::InsufficientData { k, rows: x.rows() });
    }
    let floor: Vec<f64> = x.column_variances().iter().map(|v| (1e-6 * v).max(1e-12)).collect();
    let init = kmeans(x, k, seed, 100, 1e-9)?;
    let hard: Vec<Vec<f64>> = init
        .assignment
        .iter()
        .map(|&c| (0..k).map(|j| if j == c { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut mix = m_step(x, &hard, &floor)?;
    let (mut resp, mut ll) = e_step(x, &mix);
    let mut trace = vec![ll];
    for _ in 0..max_iter {
        mix = m_step(x, &resp, &floor)?;
        let (r, new_ll) = e_step(x, &mix);
        resp = r;
        trace.push(new_ll);
        let gain = new_ll - ll;
        ll = new_ll;
        if gain.abs() < tol {
            break;
        }
    }
    let assignment = resp
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &p)| if p > acc.1 { (j, p) } else { acc })
                .0
        })
        .collect();
    Ok(ClusterModel {
        kind: ClusterKind::Gmm,
        k,
        feature_names: x.names.clone(),
        centers: mix.means,
        weights: Some(mix.weights),
        variances: Some(mix.vars),
        assignment,
        responsibilities: Some(resp),
        objective_trace: trace,
    })
}

fn comb2(n: u64) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings must have equal length");
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| comb2(c)).sum();
    let sa: f64 = ra.values().map(|&c| comb2(c)).sum();
    let sb: f64 = rb.values().map(|&c| comb2(c)).sum();
    let expected = sa * sb / comb2(n);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Entropy of each element's observed level distribution and the normalized
/// importance weight derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    /// Shannon entropy in bits.
    pub entropy: BTreeMap<String, f64>,
    /// Entropies normalized onto the simplex.
    pub weight: BTreeMap<String, f64>,
    /// Observed relative frequency of each level.
    pub level_probability: BTreeMap<String, BTreeMap<String, f64>>,
}

impl ImportanceScores {
    /// Entropy contribution `-p log2 p` of one level; 0 for unseen levels.
    pub fn level_contribution(&self, element: &str, level: &str) -> f64 {
        match self.level_probability.get(element).and_then(|m| m.get(level)) {
            Some(&p) if p > 0.0 => -p * p.log2(),
            _ => 0.0,
        }
    }
}

/// Normalizes non-negative scores to sum to one; all-zero scores become
/// uniform.
pub fn flatten(scores: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let total: f64 = scores.values().sum();
    if scores.is_empty() {
        return BTreeMap::new();
    }
    if total > 0.0 {
        scores.iter().map(|(k, v)| (k.clone(), v / total)).collect()
    } else {
        let u = 1.0 / scores.len() as f64;
        scores.keys().map(|k| (k.clone(), u)).collect()
    }
}

pub fn importance_scores(levels: &BTreeMap<String, Vec<String>>) -> Result<ImportanceScores, AnalyzeError> {
    let mut entropy = BTreeMap::new();
    let mut level_probability = BTreeMap::new();
    for (element, obs) in levels {
        if obs.is_empty() {
            return Err(AnalyzeError::NoObservations(element.clone()));
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for o in obs {
            *counts.entry(o.clone()).or_default() += 1;
        }
        let n = obs.len() as f64;
        let probs: BTreeMap<String, f64> = counts.into_iter().map(|(l, c)| (l, c as f64 / n)).collect();
        let h = probs.values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum::<f64>();
        entropy.insert(element.clone(), h.max(0.0));
        level_probability.insert(element.clone(), probs);
    }
    let weight = flatten(&entropy);
    Ok(ImportanceScores {
        entropy,
        weight,
        level_probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per: usize, sigma: f64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, (cx, cy)) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push(vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)]);
                labels.push(c);
            }
        }
        (FeatureMatrix::new(vec!["a".into(), "b".into()], rows).unwrap(), labels)
    }

    #[test]
    fn single_point() {
        let x = FeatureMatrix::new(vec!["a".into()], vec![vec![3.5]]).unwrap();
        let m = kmeans(&x, 1, 0, 10, 1e-9).unwrap();
        assert_eq!(m.centers, vec![vec![3.5]]);
        assert_eq!(*m.objective_trace.last().unwrap(), 0.0);
        assert_eq!(kmeans(&x, 2, 0, 10, 1e-9), Err(AnalyzeError::KTooLarge { k: 2, rows: 1 }));
        assert_eq!(kmeans(&x, 0, 0, 10, 1e-9), Err(AnalyzeError::InvalidK));
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let (x, truth) = blobs(11, 100, 0.5);
        let m = kmeans(&x, 3, 5, 100, 1e-9).unwrap();
        assert!(adjusted_rand_index(&m.assignment, &truth) >= 0.99);
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(m, kmeans(&x, 3, 5, 100, 1e-9).unwrap());
    }

    #[test]
    fn kmeans_with_duplicate_rows() {
        let (x, _) = blobs(2, 20, 0.5);
        let idx: Vec<usize> = (0..x.rows()).chain(0..x.rows()).collect();
        let doubled = x.select_rows(&idx);
        let m = kmeans(&doubled, 3, 1, 100, 1e-12).unwrap();
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn gmm_single_component() {
        let mut rng = seed::rng(4);
        let n = 500;
        let normal = Normal::new(5.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![normal.sample(&mut rng)]).collect();
        let x = FeatureMatrix::new(vec!["v".into()], rows).unwrap();
        let m = gmm_fit(&x, 1, 0, 50, 1e-10).unwrap();
        assert!((m.centers[0][0] - 5.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(m.responsibilities.unwrap().iter().all(|r| r[0] == 1.0));
        assert!((m.weights.unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_balanced_mixture() {
        let mut rng = seed::rng(8);
        let a = Normal::new(-5.0, 1.0).unwrap();
        let b = Normal::new(5.0, 1.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..1000)
            .map(|i| vec![if i % 2 == 0 { a.sample(&mut rng) } else { b.sample(&mut rng) }])
            .collect();
        let x = FeatureMatrix::new(vec!["v".into()], rows).unwrap();
        let m = gmm_fit(&x, 2, 3, 200, 1e-10).unwrap();
        let w = m.weights.as_ref().unwrap();
        assert!(w.iter().all(|w| (w - 0.5).abs() < 0.05), "{w:?}");
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.objective_trace.windows(2).all(|p| p[1] >= p[0] - 1e-9));
        assert_eq!(gmm_fit(&x.select_rows(&[0, 1]), 2, 0, 10, 1e-6).unwrap_err(), AnalyzeError::InsufficientData { k: 2, rows: 2 });
    }

    #[test]
    fn ari_reference_values() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[0, 0, 1, 2]) - 0.571_428_571_428_571_5).abs() < 1e-12);
    }

    #[test]
    fn entropy_scores() {
        let mut levels = BTreeMap::new();
        levels.insert("light".to_string(), vec!["day".to_string(); 5]);
        levels.insert(
            "surface".to_string(),
            ["dry", "wet", "icy", "snow"].iter().map(|s| s.to_string()).collect(),
        );
        let s = importance_scores(&levels).unwrap();
        assert_eq!(s.entropy["light"], 0.0);
        assert_eq!(s.entropy["surface"], 2.0);
        assert_eq!(s.weight["surface"], 1.0);
        assert_eq!(s.level_contribution("surface", "wet"), 0.5);

        let raw: BTreeMap<String, f64> = [("a".to_string(), 1.0), ("b".to_string(), 3.0)].into();
        let w = flatten(&raw);
        assert_eq!((w["a"], w["b"]), (0.25, 0.75));
        let zero: BTreeMap<String, f64> = [("a".to_string(), 0.0), ("b".to_string(), 0.0)].into();
        assert_eq!(flatten(&zero)["a"], 0.5);
        levels.insert("empty".into(), vec![]);
        assert!(importance_scores(&levels).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let x = FeatureMatrix::with_ids(
            vec!["e1".into(), "e2".into()],
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 2.5], vec![-3.0, 0.125]],
        )
        .unwrap();
        assert_eq!(FeatureMatrix::from_csv(&x.to_csv()).unwrap(), x);
        assert_eq!(
            FeatureMatrix::new(vec!["a".into()], vec![vec![f64::NAN]]),
            Err(AnalyzeError::NonFinite { row: 0, col: 0 })
        );
    }
}
