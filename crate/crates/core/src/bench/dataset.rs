use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labelled feature table. Missing cells are `NaN` until [`clean`] runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, label_names: Vec<String>, feature_names: Vec<String>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Contract(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Contract(format!(
                "{} feature columns but {} names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= label_names.len()) {
            return Err(Error::Contract(format!("label {bad} has no name")));
        }
        Ok(Self { features: features.as_standard_layout().into_owned(), labels, label_names, feature_names })
    }

    /// Dataset with generic names `f0, f1, ...` and `class0, class1, ...`.
    pub fn from_arrays(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let names = (0..features.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(features, labels, (0..k).map(|c| format!("class{c}")).collect(), names)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows in the given order, label names unchanged.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            label_names: self.label_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Drops label names no row uses and re-encodes labels densely.
    fn compact_labels(mut self) -> Dataset {
        let used: BTreeSet<usize> = self.labels.iter().copied().collect();
        if used.len() == self.label_names.len() {
            return self;
        }
        let used: Vec<usize> = used.into_iter().collect();
        self.label_names = used.iter().map(|&l| self.label_names[l].clone()).collect();
        for l in self.labels.iter_mut() {
            *l = used.binary_search(l).expect("label present");
        }
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, label_column)
}

/// Parses a header-first CSV: the label column is integer-encoded in
/// lexicographic order and every other column must be numeric or empty.
pub fn read_csv<R: Read>(reader: R, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(format!("cannot read header: {e}")))?.clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(Error::Format("CSV has no header row".into()));
    }
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Format(format!("label column {label_column:?} not in header")))?;
    let feature_names: Vec<String> =
        header.iter().enumerate().filter(|&(j, _)| j != label_idx).map(|(_, h)| h.to_string()).collect();

    let mut values = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::Format(format!("row {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::Format(format!("row {line}: expected {} cells, found {}", header.len(), record.len())));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                if cell.is_empty() {
                    return Err(Error::Format(format!("row {line}: empty label")));
                }
                raw_labels.push(cell.to_string());
            } else if cell.is_empty() {
                values.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Format(format!("row {line}, column {:?}: {cell:?} is not numeric", &header[j]))
                })?;
                values.push(v);
            }
        }
    }
    let label_names: Vec<String> = raw_labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let labels = raw_labels.iter().map(|l| label_names.binary_search(l).expect("known label")).collect();
    let features = Array2::from_shape_vec((raw_labels.len(), feature_names.len()), values)
        .map_err(|e| Error::Format(e.to_string()))?;
    Dataset::new(features, labels, label_names, feature_names)
}

/// Drops rows with a missing value and, if `soma_column` is given, rows whose
/// soma surface is zero. Survivors keep their order.
pub fn clean(ds: &Dataset, soma_column: Option<&str>) -> Result<Dataset> {
    let soma = soma_column
        .map(|name| {
            ds.feature_names
                .iter()
                .position(|f| f == name)
                .ok_or_else(|| Error::Config(format!("soma column {name:?} not found")))
        })
        .transpose()?;
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&i| {
            let row = ds.features.row(i);
            row.iter().all(|v| v.is_finite()) && soma.is_none_or(|s| row[s] != 0.0)
        })
        .collect();
    if keep.len() == ds.len() {
        return Ok(ds.clone());
    }
    Ok(ds.subset(&keep).compact_labels())
}

fn rows_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Splits `total` across classes proportionally to `counts` by largest
/// remainder (ties to the lower class).
fn allocate(counts: &[usize], total: usize) -> Vec<usize> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts.iter().map(|&c| c as f64 * total as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = total - alloc.iter().sum::<usize>();
    for &c in order.iter().cycle().take(counts.len() * 2) {
        if left == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    alloc
}

fn shuffled_classes(labels: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = rows_by_class(labels);
    for rows in by_class.iter_mut() {
        rows.shuffle(&mut rng);
    }
    by_class
}

/// Stratified shuffle split; returns sorted `(train, test)` row indices.
pub fn split_indices(labels: &[usize], label_names: &[String], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {test_fraction}")));
    }
    let by_class = shuffled_classes(labels, seed);
    for (c, rows) in by_class.iter().enumerate() {
        if rows.len() == 1 {
            let name = label_names.get(c).cloned().unwrap_or_else(|| c.to_string());
            return Err(Error::Data(format!("class {name:?} has a single sample and cannot be split")));
        }
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let total_test = (labels.len() as f64 * test_fraction).round() as usize;
    let alloc = allocate(&counts, total_test);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (rows, &t) in by_class.iter().zip(&alloc) {
        test.extend_from_slice(&rows[..t]);
        train.extend_from_slice(&rows[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(&ds.labels, &ds.label_names, test_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Seeded stratified subsample of `cap` rows (all rows if `cap >= n`),
/// returned in original order.
pub fn stratified_sample(labels: &[usize], cap: usize, seed: u64) -> Vec<usize> {
    if cap >= labels.len() {
        return (0..labels.len()).collect();
    }
    let by_class = shuffled_classes(labels, seed);
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let alloc = allocate(&counts, cap);
    let mut keep: Vec<usize> = by_class.iter().zip(&alloc).flat_map(|(rows, &a)| rows[..a].to_vec()).collect();
    keep.sort_unstable();
    keep
}

/// Stratified k-fold: rows of each shuffled class are dealt to folds with a
/// counter that carries over between classes. Returns sorted validation
/// indices per fold.
pub fn kfold_indices(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::Config(format!("folds must be at least 2, got {folds}")));
    }
    let by_class = shuffled_classes(labels, seed);
    if let Some((c, rows)) = by_class.iter().enumerate().find(|(_, r)| !r.is_empty() && r.len() < folds) {
        return Err(Error::Data(format!("class {c} has {} samples, fewer than {folds} folds", rows.len())));
    }
    let mut out = vec![Vec::new(); folds];
    let mut counter = 0;
    for rows in &by_class {
        for &i in rows {
            out[counter % folds].push(i);
            counter += 1;
        }
    }
    for f in out.iter_mut() {
        f.sort_unstable();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexicographic_label_encoding() {
        let csv = "a,type,b\n1,pyramidal,2\n3,basket,4\n5,pyramidal,6\n";
        let ds = read_csv(csv.as_bytes(), "type").unwrap();
        assert_eq!(ds.label_names, vec!["basket", "pyramidal"]);
        assert_eq!(ds.labels, vec![1, 0, 1]);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.features.row(1).to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(read_csv("".as_bytes(), "type"), Err(Error::Format(_))));
        assert!(matches!(read_csv("a,b\n1,2\n".as_bytes(), "type"), Err(Error::Format(_))));
        match read_csv("a,type\nx,p\n".as_bytes(), "type") {
            Err(Error::Format(m)) => assert!(m.contains("row 2") && m.contains("\"a\"")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forty_three_feature_columns() {
        let header: Vec<String> = (0..43).map(|j| format!("m{j}")).chain(["label".into()]).collect();
        let row: Vec<String> = (0..43).map(|j| j.to_string()).chain(["x".into()]).collect();
        let csv = format!("{}\n{}\n", header.join(","), row.join(","));
        assert_eq!(read_csv(csv.as_bytes(), "label").unwrap().feature_names.len(), 43);
    }

    #[test]
    fn cleaning_rules() {
        let csv = "soma,f,label\n1,2,a\n0,3,b\n2,,a\n4,5,b\n";
        let ds = read_csv(csv.as_bytes(), "label").unwrap();
        let cleaned = clean(&ds, None).unwrap();
        assert_eq!(cleaned.len(), 3);
        let cleaned = clean(&ds, Some("soma")).unwrap();
        assert_eq!(cleaned.features.column(0).to_vec(), vec![1.0, 4.0]);
        assert!(matches!(clean(&ds, Some("nope")), Err(Error::Config(_))));
        let tidy = clean(&cleaned, None).unwrap();
        assert_eq!(tidy, cleaned);
    }

    #[test]
    fn cleaning_drops_vanished_classes() {
        let ds = read_csv("f,label\n,a\n1,b\n2,c\n".as_bytes(), "label").unwrap();
        let c = clean(&ds, None).unwrap();
        assert_eq!(c.label_names, vec!["b", "c"]);
        assert_eq!(c.labels, vec![0, 1]);
    }

    #[test]
    fn stratified_split_counts() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let names = vec!["a".to_string(), "b".to_string()];
        let (train, test) = split_indices(&labels, &names, 0.2, 7).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 10);
        assert_eq!(split_indices(&labels, &names, 0.2, 7).unwrap(), (train, test));
        let lonely = vec![0, 0, 1];
        match split_indices(&lonely, &names, 0.2, 0) {
            Err(Error::Data(m)) => assert!(m.contains("\"b\"")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_proportions_within_one_sample() {
        let labels: Vec<usize> = (0..97).map(|i| [0, 0, 0, 1, 1, 2, 3][i % 7]).collect();
        let names: Vec<String> = (0..4).map(|c| c.to_string()).collect();
        let (_, test) = split_indices(&labels, &names, 0.3, 1).unwrap();
        for c in 0..4 {
            let n_c = labels.iter().filter(|&&l| l == c).count() as f64;
            let t_c = test.iter().filter(|&&i| labels[i] == c).count() as f64;
            assert!((t_c - 0.3 * n_c).abs() <= 1.0);
        }
    }

    #[test]
    fn kfold_sizes_and_partition() {
        let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
        let folds = kfold_indices(&labels, 5, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 20));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(matches!(kfold_indices(&[0, 0, 1], 2, 0), Err(Error::Data(_))));
    }

    #[test]
    fn stratified_sample_keeps_proportions() {
        let labels: Vec<usize> = (0..1000).map(|i| usize::from(i % 4 == 0)).collect();
        let s = stratified_sample(&labels, 260, 5);
        assert_eq!(s.len(), 260);
        assert_eq!(s.iter().filter(|&&i| labels[i] == 1).count(), 65);
        assert_eq!(stratified_sample(&labels, 5000, 5).len(), 1000);
    }
}
