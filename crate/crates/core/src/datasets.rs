//! Datasets with protected-group labels: CSV ingestion, standardisation,
//! subsampling and synthetic skewed blobs.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seed;

/// Points of `U` with one protected-group index per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Matrix,
    groups: Vec<usize>,
    n_groups: usize,
    group_names: Option<Vec<String>>,
}

/// Row indices of each protected group. The lists partition `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupIndex {
    members: Vec<Vec<usize>>,
}

impl GroupIndex {
    pub fn group(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.members.iter().map(Vec::as_slice)
    }
}

impl Dataset {
    /// Validates that every group in `0..n_groups` has a member and that all
    /// features are finite.
    pub fn new(
        points: Matrix,
        groups: Vec<usize>,
        n_groups: usize,
        group_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if groups.len() != points.rows() {
            return Err(Error::shape(format!(
                "{} group labels for {} points",
                groups.len(),
                points.rows()
            )));
        }
        if points.rows() == 0 {
            return Err(Error::Dataset("dataset has no rows".into()));
        }
        if !points.is_finite() {
            return Err(Error::Dataset("non-finite feature value".into()));
        }
        let mut counts = vec![0usize; n_groups];
        for &g in &groups {
            if g >= n_groups {
                return Err(Error::Dataset(format!(
                    "group index {g} outside 0..{n_groups}"
                )));
            }
            counts[g] += 1;
        }
        if let Some(j) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!("group {j} has no members")));
        }
        if let Some(names) = &group_names {
            if names.len() != n_groups {
                return Err(Error::shape(format!(
                    "{} group names for {n_groups} groups",
                    names.len()
                )));
            }
        }
        Ok(Self {
            points,
            groups,
            n_groups,
            group_names,
        })
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_names(&self) -> Option<&[String]> {
        self.group_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    /// ψ: the rows belonging to each protected group.
    pub fn group_index(&self) -> GroupIndex {
        let mut members = vec![Vec::new(); self.n_groups];
        for (r, &g) in self.groups.iter().enumerate() {
            members[g].push(r);
        }
        GroupIndex { members }
    }

    fn with_rows(&self, idx: &[usize]) -> Result<Self> {
        Dataset::new(
            self.points.select_rows(idx),
            idx.iter().map(|&i| self.groups[i]).collect(),
            self.n_groups,
            self.group_names.clone(),
        )
    }
}

/// Result of [`load_csv`]: the dataset plus how many rows were dropped for
/// missing values.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty()
        || c == "?"
        || c.eq_ignore_ascii_case("na")
        || c.eq_ignore_ascii_case("nan")
        || c.eq_ignore_ascii_case("null")
}

/// Reads a headered CSV. Groups are encoded in order of first appearance;
/// rows with a missing group or feature value are dropped. When
/// `feature_columns` is `None`, every column except the group column is a
/// feature.
pub fn load_csv(
    path: impl AsRef<Path>,
    group_column: &str,
    feature_columns: Option<&[String]>,
) -> Result<LoadedCsv> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let group_col = find(group_column)?;
    let feature_cols: Vec<usize> = match feature_columns {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len()).filter(|&c| c != group_col).collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Dataset("no feature columns selected".into()));
    }

    let mut label_ids: HashMap<String, usize> = HashMap::new();
    let mut names = Vec::new();
    let mut data = Vec::new();
    let mut groups = Vec::new();
    let mut dropped = 0usize;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let label = rec.get(group_col).unwrap_or("");
        let cells: Vec<&str> = feature_cols
            .iter()
            .map(|&c| rec.get(c).unwrap_or(""))
            .collect();
        if is_missing(label) || cells.iter().any(|c| is_missing(c)) {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(cells.len());
        for (cell, &c) in cells.iter().zip(&feature_cols) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                path: path.to_path_buf(),
                message: format!(
                    "row {}: column `{}` value `{cell}` is not numeric",
                    line + 2,
                    &headers[c]
                ),
            })?;
            if !v.is_finite() {
                dropped += 1;
                row.clear();
                break;
            }
            row.push(v);
        }
        if row.len() != feature_cols.len() {
            continue;
        }
        let next = label_ids.len();
        let id = *label_ids.entry(label.to_string()).or_insert_with(|| {
            names.push(label.to_string());
            next
        });
        data.extend(row);
        groups.push(id);
    }
    if groups.is_empty() {
        return Err(Error::Dataset(format!(
            "{} has no complete rows",
            path.display()
        )));
    }
    if names.len() < 2 {
        return Err(Error::Dataset(format!(
            "group column `{group_column}` has {} distinct value(s); need at least 2",
            names.len()
        )));
    }
    let points = Matrix::from_vec(groups.len(), feature_cols.len(), data)?;
    let n_groups = names.len();
    Ok(LoadedCsv {
        dataset: Dataset::new(points, groups, n_groups, Some(names))?,
        dropped_rows: dropped,
    })
}

/// Per-feature z-scores with the sample standard deviation; constant
/// features become all zeros.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    let x = ds.points();
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid("standardising needs at least two rows"));
    }
    let means = x.column_means();
    let mut sds = vec![0.0; x.cols()];
    for row in x.row_iter() {
        for ((s, v), m) in sds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut sds {
        *s = (*s / (n - 1) as f64).sqrt();
    }
    let scale = |c: usize, v: f64| {
        let centred = v - means[c];
        // Relative test so rounding noise in a constant column maps to zero.
        if sds[c] <= 1e-12 * means[c].abs().max(1.0) {
            0.0
        } else {
            centred / sds[c]
        }
    };
    let z = Matrix::from_fn(n, x.cols(), |r, c| scale(c, x[(r, c)]));
    Dataset::new(z, ds.groups.clone(), ds.n_groups, ds.group_names.clone())
}

const SUBSAMPLE_ATTEMPTS: usize = 100;

/// Uniform sample of `m` rows without replacement that keeps every group.
/// Row order of the original file is preserved.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    let n = ds.len();
    if m > n {
        return Err(Error::invalid(format!("cannot sample {m} of {n} rows")));
    }
    if m == n {
        return Ok(ds.clone());
    }
    let mut rng = seed::rng_for(seed, seed::stream::SUBSAMPLE);
    for _ in 0..SUBSAMPLE_ATTEMPTS {
        let mut idx = index::sample(&mut rng, n, m).into_vec();
        idx.sort_unstable();
        let mut seen = vec![false; ds.n_groups];
        for &i in &idx {
            seen[ds.groups[i]] = true;
        }
        if seen.iter().all(|&s| s) {
            return ds.with_rows(&idx);
        }
    }
    Err(Error::Dataset(format!(
        "no sample of {m} rows kept all {} groups after {SUBSAMPLE_ATTEMPTS} attempts",
        ds.n_groups
    )))
}

/// Gaussian blobs whose group mix is skewed towards one group per blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobConfig {
    pub n: usize,
    pub d: usize,
    pub groups: usize,
    pub blobs: usize,
    /// 0 gives every blob the global group mix, 1 makes each blob single-group.
    pub skew: f64,
    /// Distance between adjacent blob centres.
    pub spread: f64,
    pub std: f64,
    pub seed: u64,
}

impl BlobConfig {
    /// One blob per group, centres 3 apart, unit variance.
    pub fn new(n: usize, d: usize, groups: usize, skew: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            groups,
            blobs: groups,
            skew,
            spread: 3.0,
            std: 1.0,
            seed,
        }
    }

    pub fn blobs(mut self, blobs: usize) -> Self {
        self.blobs = blobs;
        self
    }

    pub fn spread(mut self, spread: f64) -> Self {
        self.spread = spread;
        self
    }

    fn centre(&self, b: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.d];
        if self.blobs == 1 {
            return c;
        }
        if self.d == 1 {
            c[0] = b as f64 * self.spread;
        } else {
            let angle = std::f64::consts::TAU * b as f64 / self.blobs as f64;
            let radius = self.spread / (2.0 * (std::f64::consts::PI / self.blobs as f64).sin());
            c[0] = radius * angle.cos();
            c[1] = radius * angle.sin();
        }
        c
    }

    /// Group counts inside a blob of `size` points, largest-remainder rounded.
    fn group_counts(&self, b: usize, size: usize) -> Vec<usize> {
        let g = self.groups;
        let dominant = b % g;
        let base = (1.0 - self.skew) / g as f64;
        let shares: Vec<f64> = (0..g)
            .map(|j| {
                let p = if j == dominant {
                    base + self.skew
                } else {
                    base
                };
                p * size as f64
            })
            .collect();
        let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
        let mut left = size - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..g).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - shares[a].floor();
            let rb = shares[b] - shares[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &j in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[j] += 1;
            left -= 1;
        }
        counts
    }

    pub fn generate(&self) -> Result<SkewedBlobs> {
        if self.groups < 2 {
            return Err(Error::invalid("need at least two groups"));
        }
        if !(0.0..=1.0).contains(&self.skew) {
            return Err(Error::invalid(format!("skew {} outside [0, 1]", self.skew)));
        }
        if self.blobs == 0 || self.d == 0 || self.n < self.blobs {
            return Err(Error::invalid("need n ≥ blobs ≥ 1 and d ≥ 1"));
        }
        let mut rng = seed::rng_for(self.seed, seed::stream::FIXTURE);
        let mut data = Vec::with_capacity(self.n * self.d);
        let mut groups = Vec::with_capacity(self.n);
        let mut blob_labels = Vec::with_capacity(self.n);
        for b in 0..self.blobs {
            let size = self.n / self.blobs + usize::from(b < self.n % self.blobs);
            let centre = self.centre(b);
            for (j, count) in self.group_counts(b, size).into_iter().enumerate() {
                for _ in 0..count {
                    for &c in &centre {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        data.push(c + self.std * z);
                    }
                    groups.push(j);
                    blob_labels.push(b);
                }
            }
        }
        // Interleave rows so file order carries no blob structure.
        let n = groups.len();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let points = Matrix::from_vec(n, self.d, data)?.select_rows(&perm);
        let groups = perm.iter().map(|&i| groups[i]).collect();
        let blob_labels = perm.iter().map(|&i| blob_labels[i]).collect();
        let names = (0..self.groups).map(|j| format!("g{j}")).collect();
        Ok(SkewedBlobs {
            dataset: Dataset::new(points, groups, self.groups, Some(names))?,
            blob_labels,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SkewedBlobs {
    pub dataset: Dataset,
    /// Generating blob of each row.
    pub blob_labels: Vec<usize>,
}

/// One blob per group with the default geometry.
pub fn make_skewed_blobs(n: usize, d: usize, g: usize, skew: f64, seed: u64) -> Result<Dataset> {
    Ok(BlobConfig::new(n, d, g, skew, seed).generate()?.dataset)
}

/// Evenly spaced 1-D points: `left` rows of group 0 starting at 0 and
/// `right` rows of group 1 starting at `gap`, both `step` apart.
pub fn two_group_line(left: usize, right: usize, step: f64, gap: f64) -> Result<Dataset> {
    if left == 0 || right == 0 {
        return Err(Error::invalid("both groups need at least one point"));
    }
    if !(step.is_finite() && gap.is_finite() && step > 0.0) {
        return Err(Error::invalid("step must be positive and gap finite"));
    }
    let pts: Vec<f64> = (0..left)
        .map(|i| i as f64 * step)
        .chain((0..right).map(|i| gap + i as f64 * step))
        .collect();
    let groups = (0..left).map(|_| 0).chain((0..right).map(|_| 1)).collect();
    Dataset::new(
        Matrix::column(&pts),
        groups,
        2,
        Some(vec!["g0".into(), "g1".into()]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_group_line_layout() {
        let ds = two_group_line(3, 2, 0.5, 10.0).unwrap();
        assert_eq!(ds.points().as_slice(), &[0.0, 0.5, 1.0, 10.0, 10.5]);
        assert_eq!(ds.groups(), &[0, 0, 0, 1, 1]);
        assert!(two_group_line(0, 2, 0.5, 1.0).is_err());
    }
    use std::io::Write;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_simple_csv() {
        let f = write_csv("x,y,grp\n1,2,a\n3,4,a\n5,6,b\n7,8,b\n");
        let loaded = load_csv(f.path(), "grp", None).unwrap();
        let ds = loaded.dataset;
        assert_eq!((ds.len(), ds.dim(), ds.n_groups()), (4, 2, 2));
        assert_eq!(ds.groups(), &[0, 0, 1, 1]);
        assert_eq!(loaded.dropped_rows, 0);
        assert_eq!(
            ds.group_names().unwrap(),
            &["a".to_string(), "b".to_string()]
        );
    }

    #[test]
    fn drops_rows_with_missing_values() {
        let f = write_csv("x,y,grp\n1,2,a\n3,,a\n5,6,b\n7,8,b\n");
        let loaded = load_csv(f.path(), "grp", None).unwrap();
        assert_eq!(loaded.dataset.len(), 3);
        assert_eq!(loaded.dropped_rows, 1);
    }

    #[test]
    fn three_labels_partition_rows() {
        let f = write_csv("grp,x\nc,0\na,1\nb,2\nc,3\na,4\nb,5\nb,6\n");
        let ds = load_csv(f.path(), "grp", Some(&["x".to_string()]))
            .unwrap()
            .dataset;
        assert_eq!(ds.n_groups(), 3);
        let psi = ds.group_index();
        // first-appearance order: c=0, a=1, b=2
        assert_eq!(psi.group(0), &[0, 3]);
        assert_eq!(psi.group(1), &[1, 4]);
        assert_eq!(psi.group(2), &[2, 5, 6]);
        assert_eq!(psi.sizes().iter().sum::<usize>(), ds.len());
    }

    #[test]
    fn load_errors() {
        let f = write_csv("x,grp\n1,a\n2,a\n");
        assert!(matches!(
            load_csv(f.path(), "grp", None),
            Err(Error::Dataset(_))
        ));
        match load_csv(f.path(), "sex", None) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "sex"),
            other => panic!("{other:?}"),
        }
        let empty = write_csv("x,grp\n,a\n2,\n");
        assert!(load_csv(empty.path(), "grp", None).is_err());
        let bad = write_csv("x,grp\n1,a\nfoo,b\n");
        assert!(matches!(
            load_csv(bad.path(), "grp", None),
            Err(Error::Csv { .. })
        ));
        assert!(matches!(
            load_csv("/no/such/file.csv", "grp", None),
            Err(Error::Io { .. })
        ));
    }

    fn tiny(points: &[[f64; 1]], groups: &[usize]) -> Dataset {
        Dataset::new(Matrix::from_rows(points).unwrap(), groups.to_vec(), 2, None).unwrap()
    }

    #[test]
    fn standardize_two_points_and_constant() {
        let ds = Dataset::new(
            Matrix::from_rows(&[[0.0, 5.0], [2.0, 5.0]]).unwrap(),
            vec![0, 1],
            2,
            None,
        )
        .unwrap();
        let z = standardize(&ds).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z.points()[(0, 0)] + s).abs() < 1e-12);
        assert!((z.points()[(1, 0)] - s).abs() < 1e-12);
        assert_eq!(z.points().col(1), vec![0.0, 0.0]);
    }

    #[test]
    fn standardize_random_moments_and_idempotence() {
        let mut rng = seed::rng(3);
        let x = Matrix::from_fn(20, 3, |_, c| rng.random_range(-10.0..10.0) * (c + 1) as f64);
        let groups = (0..20).map(|i| i % 2).collect();
        let ds = Dataset::new(x, groups, 2, None).unwrap();
        let z = standardize(&ds).unwrap();
        for c in 0..3 {
            let col = z.points().col(c);
            let mean = col.iter().sum::<f64>() / 20.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
            assert!(mean.abs() <= 1e-10);
            assert!((sd - 1.0).abs() <= 1e-10);
        }
        let zz = standardize(&z).unwrap();
        assert!(zz.points().sub(z.points()).unwrap().max_abs() <= 1e-10);
    }

    #[test]
    fn subsample_rules() {
        let ds = tiny(
            &[[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]],
            &[0, 0, 0, 0, 0, 1],
        );
        assert_eq!(subsample(&ds, 6, 99).unwrap(), ds);
        let a = subsample(&ds, 3, 5).unwrap();
        let b = subsample(&ds, 3, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_groups(), 2);
        // m = g: the only valid samples hold the lone group-1 row plus one other
        for s in 0..20 {
            let sub = subsample(&ds, 2, s).unwrap();
            let mut gs = sub.groups().to_vec();
            gs.sort();
            assert_eq!(gs, vec![0, 1]);
        }
        assert!(subsample(&ds, 7, 0).is_err());
    }

    #[test]
    fn subsample_gives_up_after_cap() {
        // group 1 has a single row; sampling 1 row of 2000 almost never keeps both groups
        let mut pts = vec![[0.0]; 2000];
        pts[0] = [1.0];
        let mut g = vec![0; 2000];
        g[1999] = 1;
        let ds = tiny(&pts, &g);
        assert!(matches!(subsample(&ds, 1, 1), Err(Error::Dataset(_))));
    }

    #[test]
    fn blobs_are_deterministic_and_skewed() {
        let a = BlobConfig::new(200, 2, 2, 0.6, 1).generate().unwrap();
        let b = BlobConfig::new(200, 2, 2, 0.6, 1).generate().unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.blob_labels, b.blob_labels);
        for blob in 0..2 {
            let mut counts = [0usize; 2];
            for (r, &bl) in a.blob_labels.iter().enumerate() {
                if bl == blob {
                    counts[a.dataset.groups()[r]] += 1;
                }
            }
            assert_eq!(counts[blob], 80);
            assert_eq!(counts[1 - blob], 20);
        }
    }

    #[test]
    fn zero_skew_blobs_mirror_global_mix() {
        let sb = BlobConfig::new(120, 3, 3, 0.0, 2)
            .blobs(2)
            .generate()
            .unwrap();
        for blob in 0..2 {
            let mut counts = [0usize; 3];
            for (r, &bl) in sb.blob_labels.iter().enumerate() {
                if bl == blob {
                    counts[sb.dataset.groups()[r]] += 1;
                }
            }
            assert_eq!(counts, [20, 20, 20]);
        }
    }

    #[test]
    fn blob_validation() {
        assert!(make_skewed_blobs(10, 2, 1, 0.5, 0).is_err());
        assert!(make_skewed_blobs(10, 2, 2, 1.5, 0).is_err());
        // a single blob at full skew leaves group 1 empty
        assert!(BlobConfig::new(10, 2, 2, 1.0, 0)
            .blobs(1)
            .generate()
            .is_err());
    }
}
