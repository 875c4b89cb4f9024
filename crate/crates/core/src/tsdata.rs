//! Series containers, long-CSV ingestion, temporal partitioning and
//! time-delay embedding.
//!
//! The only on-disk format is the "long" layout with a mandatory
//! `unique_id,ds,y` header. `ds` is an opaque sort key: when every key of a
//! series parses as a number the rows are ordered numerically, otherwise
//! lexicographically (ISO dates sort correctly either way).

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// One univariate series.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    id: String,
    period: usize,
    values: Vec<f64>,
}

impl Series {
    pub fn new(id: impl Into<String>, period: usize, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if period == 0 {
            return Err(Error::InvalidSeries {
                id,
                reason: "period must be at least 1".into(),
            });
        }
        if values.is_empty() {
            return Err(Error::InvalidSeries {
                id,
                reason: "series is empty".into(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries {
                id,
                reason: format!("non-finite value at index {i}"),
            });
        }
        Ok(Self { id, period, values })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn period(&self) -> usize {
        self.period
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

    /// Copy of the observations in `range`, keeping id and period.
    ///
    /// Panics if the range is empty or out of bounds.
    pub fn view(&self, range: Range<usize>) -> Series {
        assert!(
            !range.is_empty() && range.end <= self.values.len(),
            "invalid view {range:?} of a series of length {}",
            self.values.len()
        );
        Series {
            id: self.id.clone(),
            period: self.period,
            values: self.values[range].to_vec(),
        }
    }

    /// Same observations under a different id.
    pub fn with_id(&self, id: impl Into<String>) -> Series {
        Series {
            id: id.into(),
            period: self.period,
            values: self.values.clone(),
        }
    }

    /// Build a series from values that are already known to be valid.
    pub(crate) fn from_parts(id: String, period: usize, values: Vec<f64>) -> Series {
        debug_assert!(!values.is_empty() && values.iter().all(|v| v.is_finite()));
        Series { id, period, values }
    }
}

/// A collection of series sharing period, horizon and input size.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    series: Vec<Series>,
    period: usize,
    horizon: usize,
    input_size: usize,
}

impl Corpus {
    /// Minimum length a series needs: training inputs plus validation and
    /// test blocks.
    pub fn min_len(horizon: usize, input_size: usize) -> usize {
        input_size + 2 * horizon
    }

    /// Builds a corpus, rejecting (not dropping) anything that violates the
    /// invariants.
    pub fn new(series: Vec<Series>, period: usize, horizon: usize, input_size: usize) -> Result<Self> {
        if horizon == 0 || input_size == 0 || period == 0 {
            return Err(Error::Config(
                "period, horizon and input_size must be positive".into(),
            ));
        }
        if series.is_empty() {
            return Err(Error::EmptyCorpus {
                dropped: 0,
                min_len: Self::min_len(horizon, input_size),
            });
        }
        let min_len = Self::min_len(horizon, input_size);
        for s in &series {
            if s.period != period {
                return Err(Error::InvalidSeries {
                    id: s.id.clone(),
                    reason: format!("period {} differs from corpus period {period}", s.period),
                });
            }
            if s.len() < min_len {
                return Err(Error::InvalidSeries {
                    id: s.id.clone(),
                    reason: format!("length {} < required {min_len}", s.len()),
                });
            }
        }
        Ok(Self {
            series,
            period,
            horizon,
            input_size,
        })
    }

    pub fn series(&self) -> &[Series] {
        &self.series
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn total_observations(&self) -> usize {
        self.series.iter().map(Series::len).sum()
    }
}

/// Result of [`load_corpus`]: the corpus plus ids dropped for being too short.
#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub dropped: Vec<String>,
}

/// Reads every series from a long CSV without any length filtering.
///
/// Series come back in order of first appearance of their id.
pub fn read_long_csv(path: impl AsRef<Path>, period: usize) -> Result<Vec<Series>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_long_csv_from(file, period)
}

pub fn read_long_csv_from(reader: impl std::io::Read, period: usize) -> Result<Vec<Series>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let header: Vec<&str> = headers.iter().collect();
    if header != ["unique_id", "ds", "y"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `unique_id,ds,y`, found `{}`", header.join(",")),
        });
    }

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let y: f64 = record[2].parse().map_err(|_| Error::Parse {
            line,
            message: format!("value `{}` is not a number", &record[2]),
        })?;
        if !y.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("value `{}` is not finite", &record[2]),
            });
        }
        let id = record[0].to_string();
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        entry.push((record[1].to_string(), y));
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = rows.remove(&id).unwrap_or_default();
        sort_by_ds(&mut obs);
        let values = obs.into_iter().map(|(_, y)| y).collect();
        out.push(Series::new(id, period, values)?);
    }
    Ok(out)
}

fn sort_by_ds(obs: &mut [(String, f64)]) {
    let numeric: Option<Vec<f64>> = obs.iter().map(|(ds, _)| ds.parse::<f64>().ok()).collect();
    match numeric {
        Some(keys) if keys.iter().all(|k| k.is_finite()) => {
            let mut idx: Vec<usize> = (0..obs.len()).collect();
            idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
            let sorted: Vec<(String, f64)> = idx.iter().map(|&i| obs[i].clone()).collect();
            obs.clone_from_slice(&sorted);
        }
        _ => obs.sort_by(|a, b| a.0.cmp(&b.0)),
    }
}

/// Loads a long CSV and keeps series with at least `input_size + 2 * horizon`
/// observations. Shorter series are dropped with a warning.
pub fn load_corpus(
    path: impl AsRef<Path>,
    period: usize,
    horizon: usize,
    input_size: usize,
) -> Result<LoadedCorpus> {
    let all = read_long_csv(path, period)?;
    corpus_from_series(all, period, horizon, input_size)
}

pub fn corpus_from_series(
    all: Vec<Series>,
    period: usize,
    horizon: usize,
    input_size: usize,
) -> Result<LoadedCorpus> {
    let min_len = Corpus::min_len(horizon, input_size);
    let (keep, short): (Vec<Series>, Vec<Series>) = all.into_iter().partition(|s| s.len() >= min_len);
    let dropped: Vec<String> = short.into_iter().map(|s| s.id).collect();
    if !dropped.is_empty() {
        log::warn!(
            "dropped {} series shorter than {min_len} observations",
            dropped.len()
        );
    }
    if keep.is_empty() {
        return Err(Error::EmptyCorpus {
            dropped: dropped.len(),
            min_len,
        });
    }
    let corpus = Corpus::new(keep, period, horizon, input_size)?;
    Ok(LoadedCorpus { corpus, dropped })
}

/// Writes series in long format with `ds` = 1-based position.
pub fn write_long_csv<'a>(
    out: impl Write,
    series: impl IntoIterator<Item = &'a Series>,
) -> Result<()> {
    let wrap = |e: csv::Error| Error::io("<output>", e.into());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["unique_id", "ds", "y"]).map_err(wrap)?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            // `{}` on f64 prints the shortest representation that round-trips.
            w.write_record([s.id.as_str(), &(i + 1).to_string(), &v.to_string()])
                .map_err(wrap)?;
        }
    }
    w.flush().map_err(|e| Error::io("<output>", e))
}

pub fn save_long_csv<'a>(
    path: impl AsRef<Path>,
    series: impl IntoIterator<Item = &'a Series>,
) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = std::io::BufWriter::new(file);
    write_long_csv(&mut buf, series)?;
    buf.flush().map_err(|e| Error::io(path, e))
}

/// Index ranges of one series (0-based, half-open).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn for_length(len: usize, horizon: usize) -> Self {
        let test_start = len - horizon;
        let val_start = test_start - horizon;
        Self {
            train: 0..val_start,
            validation: val_start..test_start,
            test: test_start..len,
        }
    }

    /// Train followed by validation: the history available at test time.
    pub fn history(&self) -> Range<usize> {
        self.train.start..self.validation.end
    }
}

/// A corpus with per-series train / validation / test ranges.
///
/// Test is the last `h` observations, validation the `h` before that, train
/// everything earlier.
#[derive(Debug, Clone)]
pub struct SplitCorpus {
    corpus: Corpus,
    ranges: Vec<SplitRanges>,
}

pub fn split(corpus: &Corpus) -> SplitCorpus {
    SplitCorpus::new(corpus.clone())
}

impl SplitCorpus {
    pub fn new(corpus: Corpus) -> Self {
        let ranges = corpus
            .series
            .iter()
            .map(|s| SplitRanges::for_length(s.len(), corpus.horizon))
            .collect();
        Self { corpus, ranges }
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn ranges(&self) -> &[SplitRanges] {
        &self.ranges
    }

    pub fn len(&self) -> usize {
        self.corpus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corpus.is_empty()
    }

    pub fn train_views(&self) -> Vec<Series> {
        self.views(|r| r.train.clone())
    }

    /// Train + validation views, the context used for test forecasts.
    pub fn history_views(&self) -> Vec<Series> {
        self.views(SplitRanges::history)
    }

    pub fn full_series(&self) -> &[Series] {
        &self.corpus.series
    }

    fn views(&self, pick: impl Fn(&SplitRanges) -> Range<usize>) -> Vec<Series> {
        self.corpus
            .series
            .iter()
            .zip(&self.ranges)
            .map(|(s, r)| s.view(pick(r)))
            .collect()
    }
}

/// Supervised windows built by time-delay embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub series_ids: Vec<String>,
}

impl WindowSet {
    pub fn empty(input_size: usize, horizon: usize) -> Self {
        Self {
            inputs: Array2::zeros((0, input_size)),
            targets: Array2::zeros((0, horizon)),
            series_ids: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacks several window sets, preserving order.
    pub fn concat(parts: &[WindowSet], input_size: usize, horizon: usize) -> Self {
        let n: usize = parts.iter().map(WindowSet::len).sum();
        let mut inputs = Vec::with_capacity(n * input_size);
        let mut targets = Vec::with_capacity(n * horizon);
        let mut ids = Vec::with_capacity(n);
        for p in parts {
            assert_eq!(p.inputs.ncols(), input_size);
            assert_eq!(p.targets.ncols(), horizon);
            inputs.extend(p.inputs.iter());
            targets.extend(p.targets.iter());
            ids.extend(p.series_ids.iter().cloned());
        }
        Self {
            inputs: Array2::from_shape_vec((n, input_size), inputs).expect("shape"),
            targets: Array2::from_shape_vec((n, horizon), targets).expect("shape"),
            series_ids: ids,
        }
    }

    pub fn input_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(i)
    }
}

/// Every window of `input_size` lags followed by `horizon` targets.
///
/// A range shorter than `input_size + horizon` yields an empty set.
pub fn embed(series: &Series, input_size: usize, horizon: usize) -> WindowSet {
    let width = input_size + horizon;
    let t = series.len();
    if t < width {
        return WindowSet::empty(input_size, horizon);
    }
    let n = t - width + 1;
    let mut inputs = Array2::zeros((n, input_size));
    let mut targets = Array2::zeros((n, horizon));
    for (j, w) in series.values.windows(width).enumerate() {
        inputs.row_mut(j).assign(&ArrayView1::from(&w[..input_size]));
        targets.row_mut(j).assign(&ArrayView1::from(&w[input_size..]));
    }
    WindowSet {
        inputs,
        targets,
        series_ids: vec![series.id.clone(); n],
    }
}

/// The single window whose targets are the last `horizon` values of `series`.
pub fn last_window(series: &Series, input_size: usize, horizon: usize) -> Option<WindowSet> {
    let t = series.len();
    if t < input_size + horizon {
        return None;
    }
    let tail = series.view(t - input_size - horizon..t);
    Some(embed(&tail, input_size, horizon))
}

/// Inputs for forecasting past the end of `series`: its last `input_size` values.
pub fn forecast_inputs(series: &[Series], input_size: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((series.len(), input_size));
    for (i, s) in series.iter().enumerate() {
        if s.len() < input_size {
            return Err(Error::InsufficientHistory {
                needed: input_size,
                got: s.len(),
            });
        }
        out.row_mut(i)
            .assign(&ArrayView1::from(&s.values[s.len() - input_size..]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: &str, values: Vec<f64>) -> Series {
        Series::new(id, 12, values).unwrap()
    }

    #[test]
    fn rejects_bad_series() {
        assert!(Series::new("a", 0, vec![1.0]).is_err());
        assert!(Series::new("a", 1, vec![]).is_err());
        assert!(Series::new("a", 1, vec![1.0, f64::NAN]).is_err());
        assert!(Series::new("a", 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn load_drops_short_series() {
        let mut csv = String::from("unique_id,ds,y\n");
        for i in 0..30 {
            csv.push_str(&format!("A,{i},{}\n", i as f64 + 0.5));
        }
        for i in 0..10 {
            csv.push_str(&format!("B,{i},{i}\n"));
        }
        let all = read_long_csv_from(csv.as_bytes(), 12).unwrap();
        let loaded = corpus_from_series(all, 12, 8, 8).unwrap();
        assert_eq!(loaded.corpus.len(), 1);
        assert_eq!(loaded.corpus.series()[0].id(), "A");
        assert_eq!(loaded.dropped, vec!["B".to_string()]);
    }

    #[test]
    fn load_all_short_is_empty_corpus() {
        let csv = "unique_id,ds,y\nA,1,1\nA,2,2\n";
        let all = read_long_csv_from(csv.as_bytes(), 4).unwrap();
        let err = corpus_from_series(all, 4, 8, 8).unwrap_err();
        assert!(matches!(err, Error::EmptyCorpus { dropped: 1, .. }));
    }

    #[test]
    fn malformed_row_names_line() {
        let csv = "unique_id,ds,y\nA,1,1\nA,2,oops\n";
        match read_long_csv_from(csv.as_bytes(), 4) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "unique_id,ds,y\nA,1\n";
        assert!(matches!(
            read_long_csv_from(csv.as_bytes(), 4),
            Err(Error::Parse { line: 2, .. })
        ));
        let csv = "id,ds,value\nA,1,1\n";
        assert!(matches!(
            read_long_csv_from(csv.as_bytes(), 4),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn rows_are_sorted_by_ds() {
        let csv = "unique_id,ds,y\nA,10,3\nA,9,2\nA,1,1\nB,1990-02,5\nB,1990-01,4\n";
        let all = read_long_csv_from(csv.as_bytes(), 1).unwrap();
        // numeric keys: 1 < 9 < 10 (not lexicographic)
        assert_eq!(all[0].values(), &[1.0, 2.0, 3.0]);
        assert_eq!(all[1].values(), &[4.0, 5.0]);
    }

    #[test]
    fn split_index_arithmetic() {
        let r = SplitRanges::for_length(40, 8);
        assert_eq!(r.train, 0..24);
        assert_eq!(r.validation, 24..32);
        assert_eq!(r.test, 32..40);

        let r = SplitRanges::for_length(24, 8);
        assert_eq!(r.train, 0..8);
        assert_eq!(r.validation, 8..16);
        assert_eq!(r.test, 16..24);
    }

    #[test]
    fn split_partitions_exhaustively() {
        for h in 1..6 {
            for q in 1..6 {
                for len in (q + 2 * h)..(q + 2 * h + 12) {
                    let r = SplitRanges::for_length(len, h);
                    assert_eq!(r.train.end, r.validation.start);
                    assert_eq!(r.validation.end, r.test.start);
                    assert_eq!(r.test.end, len);
                    assert_eq!(r.validation.len() + r.test.len(), 2 * h);
                    assert!(r.train.len() >= q);
                }
            }
        }
    }

    #[test]
    fn monthly_test_block_has_eighteen_points() {
        let series = (0..5)
            .map(|i| s(&format!("m{i}"), (0..(60 + i)).map(|v| v as f64).collect()))
            .collect();
        let corpus = Corpus::new(series, 12, 18, 24).unwrap();
        let sc = split(&corpus);
        assert!(sc.ranges().iter().all(|r| r.test.len() == 18));
    }

    #[test]
    fn embed_enumerates_windows() {
        let x = s("a", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let w = embed(&x, 2, 1);
        assert_eq!(w.inputs, ndarray::array![[1.0, 2.0], [2.0, 3.0], [3.0, 4.0]]);
        assert_eq!(w.targets, ndarray::array![[3.0], [4.0], [5.0]]);
        assert_eq!(w.series_ids, vec!["a"; 3]);

        let x = s("b", (1..=6).map(f64::from).collect());
        let w = embed(&x, 2, 2);
        assert_eq!(w.len(), 3);
        assert_eq!(w.inputs.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(w.targets.row(0).to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn embed_short_range_is_empty() {
        let x = s("a", vec![1.0, 2.0, 3.0]);
        assert!(embed(&x, 2, 2).is_empty());
    }

    #[test]
    fn last_window_uses_tail() {
        let x = s("a", (0..10).map(f64::from).collect());
        let w = last_window(&x, 3, 2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.inputs.row(0).to_vec(), vec![5.0, 6.0, 7.0]);
        assert_eq!(w.targets.row(0).to_vec(), vec![8.0, 9.0]);
    }
}
