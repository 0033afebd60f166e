//! Hourly multivariate series to supervised windows.
//!
//! Scaling runs in two stages per asset: division by a lagged moving median,
//! then division by the maximum seen on the training rows. Windows pair a
//! past block (every asset plus calendar features) with the known calendar
//! features of the forecast steps and the scaled target.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const SECONDS_PER_HOUR: i64 = 3_600;
const SECONDS_PER_DAY: i64 = 86_400;

/// Known-in-advance features per row: hour of day and day of week.
pub const CALENDAR_FEATURES: usize = 2;

/// Named hourly series sharing one timestamp axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeriesTable {
    /// Unix seconds, UTC, strictly increasing by one hour.
    pub timestamps: Vec<i64>,
    pub names: Vec<String>,
    /// One series per name, each `timestamps.len()` long.
    pub columns: Vec<Vec<f64>>,
    pub target: String,
}

impl RawSeriesTable {
    pub fn new(
        timestamps: Vec<i64>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
        target: impl Into<String>,
    ) -> Result<Self> {
        let table = RawSeriesTable {
            timestamps,
            names,
            columns,
            target: target.into(),
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() || self.names.len() != self.columns.len() {
            return Err(Error::Data(alloc::format!(
                "{} column names for {} series",
                self.names.len(),
                self.columns.len()
            )));
        }
        for pair in self.timestamps.windows(2) {
            if pair[1] - pair[0] != SECONDS_PER_HOUR {
                return Err(Error::Data(alloc::format!(
                    "timestamps must advance by exactly one hour, found {} -> {}",
                    pair[0],
                    pair[1]
                )));
            }
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.len() != self.timestamps.len() {
                return Err(Error::Data(alloc::format!(
                    "series `{name}` has {} values for {} timestamps",
                    col.len(),
                    self.timestamps.len()
                )));
            }
            if let Some((i, v)) = col.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
                return Err(Error::Data(alloc::format!(
                    "series `{name}` row {i}: value {v} is not a finite notional"
                )));
            }
        }
        self.target_index()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn target_index(&self) -> Result<usize> {
        self.names
            .iter()
            .position(|n| *n == self.target)
            .ok_or_else(|| Error::Data(alloc::format!("target column `{}` not found", self.target)))
    }

    /// The first `rows` rows.
    pub fn truncated(&self, rows: usize) -> RawSeriesTable {
        RawSeriesTable {
            timestamps: self.timestamps[..rows].to_vec(),
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c[..rows].to_vec()).collect(),
            target: self.target.clone(),
        }
    }
}

/// Median of a non-empty slice; even lengths average the two central values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// `x_t / median(x_{t-shift-window+1} ..= x_{t-shift})` for every `t`.
///
/// Entries without a full denominator window, or with a zero median, are
/// `None`. With 0-based rows the first defined entry is `window + shift - 1`.
pub fn moving_median_scale(series: &[f64], window: usize, shift: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(Error::Config("median window must be at least 1".into()));
    }
    if series.len() <= window + shift {
        return Err(Error::Data(alloc::format!(
            "series of {} rows is too short for a {window}-row median shifted by {shift}",
            series.len()
        )));
    }
    let first = window + shift - 1;
    let mut out = alloc::vec![None; series.len()];
    // sorted copy of the current window, updated by one removal and one insertion per step
    let mut sorted: Vec<f64> = series[first + 1 - shift - window..=first - shift].to_vec();
    sorted.sort_by(f64::total_cmp);
    for t in first..series.len() {
        if t > first {
            let leaving = series[t - shift - window];
            let pos = sorted.partition_point(|v| v.total_cmp(&leaving).is_lt());
            sorted.remove(pos);
            let entering = series[t - shift];
            let pos = sorted.partition_point(|v| v.total_cmp(&entering).is_lt());
            sorted.insert(pos, entering);
        }
        let n = sorted.len();
        let m = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        if m > 0.0 {
            out[t] = Some(series[t] / m);
        }
    }
    Ok(out)
}

/// Per-asset division by the training maximum. Values above the training
/// range are kept as they are.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on `rows` of each column, skipping undefined entries.
    pub fn fit(columns: &[Vec<Option<f64>>], rows: core::ops::Range<usize>) -> Result<Self> {
        let mut max = Vec::with_capacity(columns.len());
        for (j, col) in columns.iter().enumerate() {
            let m = col[rows.clone()]
                .iter()
                .flatten()
                .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            if !(m > 0.0) {
                return Err(Error::Data(alloc::format!(
                    "column {j} has no positive value on the training rows"
                )));
            }
            max.push(m);
        }
        Ok(MinMaxScaler { max })
    }

    pub fn transform(&self, column: usize, value: f64) -> f64 {
        value / self.max[column]
    }

    pub fn inverse(&self, column: usize, value: f64) -> f64 {
        value * self.max[column]
    }
}

/// `[hour / 23, weekday / 6]` with Monday as day 0.
pub fn calendar_features(timestamp: i64) -> [f64; 2] {
    let hour = timestamp.div_euclid(SECONDS_PER_HOUR).rem_euclid(24);
    // 1970-01-01 was a Thursday (weekday 3)
    let weekday = (timestamp.div_euclid(SECONDS_PER_DAY) + 3).rem_euclid(7);
    [hour as f64 / 23.0, weekday as f64 / 6.0]
}

/// One supervised example anchored at row `anchor`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub anchor: usize,
    /// `[past_len, n_assets + 2]`, row-major.
    pub past: Vec<f64>,
    /// `[horizon, 2]`
    pub future_known: Vec<f64>,
    /// `[horizon]`
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub past_len: usize,
    pub horizon: usize,
    /// Moving-median window in rows (two weeks of hours by default).
    pub median_window: usize,
}

impl WindowSpec {
    pub fn new(past_len: usize, horizon: usize) -> Self {
        WindowSpec {
            past_len,
            horizon,
            median_window: 336,
        }
    }
}

/// Rows of a table after both scaling stages, `None` where undefined.
pub struct ScaledTable<'a> {
    pub raw: &'a RawSeriesTable,
    pub columns: Vec<Vec<Option<f64>>>,
}

impl ScaledTable<'_> {
    fn row_valid(&self, r: usize) -> bool {
        self.columns.iter().all(|c| c[r].is_some())
    }
}

/// Anchors `t` whose rows `t - P + 1 ..= t + horizon` are all defined.
pub fn valid_anchors(valid: &[bool], spec: &WindowSpec) -> Vec<usize> {
    let (p, h) = (spec.past_len, spec.horizon);
    let mut anchors = Vec::new();
    if p == 0 || h == 0 || valid.len() < p + h {
        return anchors;
    }
    // run = length of the valid stretch ending at each row
    let mut run = 0usize;
    let mut runs = alloc::vec![0usize; valid.len()];
    for (r, &ok) in valid.iter().enumerate() {
        run = if ok { run + 1 } else { 0 };
        runs[r] = run;
    }
    for t in p - 1..valid.len() - h {
        if runs[t + h] >= p + h {
            anchors.push(t);
        }
    }
    anchors
}

/// Windows over already-scaled rows.
pub fn make_windows(table: &ScaledTable<'_>, anchors: &[usize], spec: &WindowSpec) -> Result<Vec<WindowSample>> {
    let target = table.raw.target_index()?;
    let n_assets = table.columns.len();
    let width = n_assets + CALENDAR_FEATURES;
    let mut out = Vec::with_capacity(anchors.len());
    for &t in anchors {
        if t + 1 < spec.past_len || t + spec.horizon >= table.raw.len() {
            return Err(Error::Data(alloc::format!("anchor {t} leaves the table")));
        }
        let mut past = Vec::with_capacity(spec.past_len * width);
        for r in t + 1 - spec.past_len..=t {
            for col in &table.columns {
                past.push(col[r].ok_or_else(|| Error::Data(alloc::format!("row {r} is undefined")))?);
            }
            past.extend(calendar_features(table.raw.timestamps[r]));
        }
        let mut future_known = Vec::with_capacity(spec.horizon * CALENDAR_FEATURES);
        let mut tgt = Vec::with_capacity(spec.horizon);
        for r in t + 1..=t + spec.horizon {
            future_known.extend(calendar_features(table.raw.timestamps[r]));
            tgt.push(table.columns[target][r].ok_or_else(|| Error::Data(alloc::format!("row {r} is undefined")))?);
        }
        out.push(WindowSample {
            anchor: t,
            past,
            future_known,
            target: tgt,
        });
    }
    Ok(out)
}

/// Sizes of a chronological split: test is the last 20%, validation the
/// last 20% of what remains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn split_sizes(n: usize) -> Result<SplitSizes> {
    if n < 10 {
        return Err(Error::Data(alloc::format!(
            "need at least 10 samples to split, got {n}"
        )));
    }
    let pool = n * 4 / 5;
    let val = pool / 5;
    Ok(SplitSizes {
        train: pool - val,
        val,
        test: n - pool,
    })
}

/// Chronological split without shuffling.
pub fn split_dataset<T>(mut samples: Vec<T>) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let s = split_sizes(samples.len())?;
    let test = samples.split_off(s.train + s.val);
    let val = samples.split_off(s.train);
    Ok((samples, val, test))
}

/// Output of [`prepare_dataset`].
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<WindowSample>,
    pub val: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
    pub scaler: MinMaxScaler,
    pub spec: WindowSpec,
    pub n_assets: usize,
    /// Rows left undefined by the moving median (warm-up or zero median).
    pub undefined_rows: usize,
    /// Of those, rows undefined because of a zero median.
    pub zero_median_rows: usize,
}

impl PreparedData {
    pub fn n_observed(&self) -> usize {
        self.n_assets
    }

    pub fn n_known(&self) -> usize {
        CALENDAR_FEATURES
    }
}

/// Median-scaled columns (stage one only).
pub fn median_scaled_columns(raw: &RawSeriesTable, spec: &WindowSpec) -> Result<Vec<Vec<Option<f64>>>> {
    raw.columns
        .iter()
        .map(|c| moving_median_scale(c, spec.median_window, spec.horizon))
        .collect()
}

/// Full pipeline: scaling, windowing and a chronological split. The
/// max-scaler is fitted on the rows touched by training samples only.
pub fn prepare_dataset(raw: &RawSeriesTable, spec: &WindowSpec) -> Result<PreparedData> {
    raw.validate()?;
    if spec.past_len == 0 || spec.horizon == 0 {
        return Err(Error::Config("past_len and horizon must be at least 1".into()));
    }
    let mut columns = median_scaled_columns(raw, spec)?;
    let warmup = spec.median_window + spec.horizon - 1;
    let valid: Vec<bool> = (0..raw.len()).map(|r| columns.iter().all(|c| c[r].is_some())).collect();
    let undefined_rows = valid.iter().filter(|v| !**v).count();
    let anchors = valid_anchors(&valid, spec);
    let sizes = split_sizes(anchors.len())?;
    let first = anchors[0] + 1 - spec.past_len;
    let last = anchors[sizes.train - 1] + spec.horizon;
    let scaler = MinMaxScaler::fit(&columns, first..last + 1)?;
    for (j, col) in columns.iter_mut().enumerate() {
        for v in col.iter_mut().flatten() {
            *v = scaler.transform(j, *v);
        }
    }
    let table = ScaledTable { raw, columns };
    debug_assert!((0..raw.len()).all(|r| table.row_valid(r) == valid[r]));
    let samples = make_windows(&table, &anchors, spec)?;
    let (train, val, test) = split_dataset(samples)?;
    Ok(PreparedData {
        train,
        val,
        test,
        scaler,
        spec: *spec,
        n_assets: raw.columns.len(),
        undefined_rows,
        zero_median_rows: undefined_rows - warmup.min(raw.len()),
    })
}

/// Rebuilds the sample at `anchor` from raw rows up to the anchor plus the
/// target numerators, with denominators taken from an explicitly indexed
/// window that must end at or before the anchor. Used to audit foresight.
pub fn audit_sample(
    raw: &RawSeriesTable,
    anchor: usize,
    spec: &WindowSpec,
    scaler: &MinMaxScaler,
) -> Result<WindowSample> {
    let visible = raw.truncated(anchor + 1);
    let target = raw.target_index()?;
    let (w, tau) = (spec.median_window, spec.horizon);
    let scaled = |col: &[f64], j: usize, r: usize, numerator: f64| -> Result<f64> {
        if r + 1 < w + tau {
            return Err(Error::Data(alloc::format!("row {r} is inside the warm-up")));
        }
        // rows r - tau - w + 1 ..= r - tau; slicing past the visible rows panics
        let m = median(&col[r + 1 - tau - w..=r - tau]);
        if !(m > 0.0) {
            return Err(Error::Data(alloc::format!("zero median at row {r}")));
        }
        Ok(scaler.transform(j, numerator / m))
    };
    let mut past = Vec::new();
    for r in anchor + 1 - spec.past_len..=anchor {
        for (j, col) in visible.columns.iter().enumerate() {
            past.push(scaled(col, j, r, col[r])?);
        }
        past.extend(calendar_features(visible.timestamps[r]));
    }
    let mut future_known = Vec::new();
    let mut tgt = Vec::new();
    for k in 1..=tau {
        let r = anchor + k;
        // calendar values are known in advance; timestamps are arithmetic
        future_known.extend(calendar_features(
            visible.timestamps[anchor] + k as i64 * SECONDS_PER_HOUR,
        ));
        tgt.push(scaled(&visible.columns[target], target, r, raw.columns[target][r])?);
    }
    Ok(WindowSample {
        anchor,
        past,
        future_known,
        target: tgt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn table(cols: Vec<Vec<f64>>) -> RawSeriesTable {
        let n = cols[0].len();
        let names = (1..=cols.len()).map(|i| alloc::format!("ASSET{i}")).collect();
        let ts = (0..n as i64).map(|i| 1_577_836_800 + i * SECONDS_PER_HOUR).collect();
        RawSeriesTable::new(ts, names, cols, "ASSET1").unwrap()
    }

    fn brute_force_scale(x: &[f64], w: usize, tau: usize) -> Vec<Option<f64>> {
        (0..x.len())
            .map(|t| {
                if t + 1 < w + tau {
                    return None;
                }
                let m = median(&x[t + 1 - tau - w..=t - tau]);
                (m > 0.0).then(|| x[t] / m)
            })
            .collect()
    }

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn moving_median_examples() {
        let x: Vec<f64> = (1..=400).map(f64::from).collect();
        let s = moving_median_scale(&x, 4, 1).unwrap();
        // 1-indexed t = 10: median of x6..x9 = 7.5
        assert!((s[9].unwrap() - 10.0 / 7.5).abs() < 1e-15);
        assert!(s[..4].iter().all(Option::is_none));
        assert!(s[4].is_some());
        let c = moving_median_scale(&[2.5; 50], 7, 3).unwrap();
        assert!(c.iter().flatten().all(|&v| v == 1.0));
        assert!(moving_median_scale(&x[..5], 4, 1).is_err());
    }

    #[test]
    fn larger_shift_moves_window_left() {
        let x: Vec<f64> = (0..60).map(|i| 1.0 + (i * i % 17) as f64).collect();
        for (tau, tau2) in [(1, 3), (2, 6)] {
            let a = moving_median_scale(&x, 5, tau).unwrap();
            let b = moving_median_scale(&x, 5, tau2).unwrap();
            for t in 5 + tau2..60 {
                // same denominator as the tau-scaled entry at t - (tau2 - tau), rescaled to x_t
                let m = x[t - (tau2 - tau)] / a[t - (tau2 - tau)].unwrap();
                assert!((b[t].unwrap() - x[t] / m).abs() < 1e-14 * b[t].unwrap());
            }
        }
    }

    #[test]
    fn zero_median_rows_are_undefined() {
        let mut x = vec![1.0; 40];
        for v in &mut x[10..20] {
            *v = 0.0;
        }
        let s = moving_median_scale(&x, 4, 1).unwrap();
        assert!(s[15].is_none());
        assert_eq!(s, brute_force_scale(&x, 4, 1));
    }

    #[test]
    fn minmax_contract() {
        let cols = vec![vec![Some(0.5), Some(2.0), None, Some(4.0)]];
        let s = MinMaxScaler::fit(&cols, 0..3).unwrap();
        assert_eq!(s.transform(0, 2.0), 1.0);
        assert_eq!(s.transform(0, 4.0), 2.0);
        assert!(MinMaxScaler::fit(&[vec![Some(0.0), Some(0.0)]], 0..2).is_err());
    }

    #[test]
    fn calendar_examples() {
        // 2024-01-01 was a Monday
        let monday = 1_704_067_200;
        assert_eq!(calendar_features(monday), [0.0, 0.0]);
        let sunday_23 = monday + 6 * SECONDS_PER_DAY + 23 * SECONDS_PER_HOUR;
        assert_eq!(calendar_features(sunday_23), [1.0, 1.0]);
        let wednesday_noon = monday + 2 * SECONDS_PER_DAY + 12 * SECONDS_PER_HOUR;
        assert_eq!(calendar_features(wednesday_noon), [12.0 / 23.0, 2.0 / 6.0]);
    }

    #[test]
    fn table_validation() {
        let ts = vec![0, 3600, 7200];
        let ok = RawSeriesTable::new(ts.clone(), vec!["A".into()], vec![vec![1.0, 2.0, 3.0]], "A");
        assert!(ok.is_ok());
        assert!(RawSeriesTable::new(vec![0, 3600, 10800], vec!["A".into()], vec![vec![1.0; 3]], "A").is_err());
        assert!(RawSeriesTable::new(ts.clone(), vec!["A".into()], vec![vec![1.0, -2.0, 3.0]], "A").is_err());
        assert!(RawSeriesTable::new(ts.clone(), vec!["A".into()], vec![vec![1.0, 2.0]], "A").is_err());
        assert!(RawSeriesTable::new(ts, vec!["A".into()], vec![vec![1.0; 3]], "B").is_err());
    }

    #[test]
    fn window_counts_and_shapes() {
        let spec = WindowSpec::new(5, 3);
        let valid = vec![true; 40];
        assert_eq!(valid_anchors(&valid, &spec).len(), 40 - 5 - 3 + 1);
        let mut gappy = valid.clone();
        gappy[20] = false;
        let a = valid_anchors(&gappy, &spec);
        assert!(a.iter().all(|&t| t + 3 < 20 || t + 1 - 5 > 20));

        let raw = table(vec![(0..12).map(|i| 1.0 + i as f64).collect(), vec![2.0; 12]]);
        let cols: Vec<Vec<Option<f64>>> = raw
            .columns
            .iter()
            .map(|c| c.iter().map(|&v| Some(v)).collect())
            .collect();
        let t = ScaledTable {
            raw: &raw,
            columns: cols,
        };
        let one = WindowSpec::new(1, 1);
        let anchors = valid_anchors(&[true; 12], &one);
        let w = make_windows(&t, &anchors, &one).unwrap();
        assert_eq!(w.len(), 11);
        assert_eq!((w[0].past.len(), w[0].future_known.len(), w[0].target.len()), (4, 2, 1));
        let last = w.last().unwrap();
        assert_eq!(last.anchor + 1, 11);
        assert_eq!(last.target, vec![12.0]);
    }

    #[test]
    fn split_examples() {
        assert_eq!(
            split_sizes(100).unwrap(),
            SplitSizes {
                train: 64,
                val: 16,
                test: 20
            }
        );
        let s = split_sizes(26_000).unwrap();
        assert_eq!((s.train + s.val, s.test), (20_800, 5_200));
        assert!(split_sizes(9).is_err());
        let (tr, va, te) = split_dataset((0..100).collect::<Vec<_>>()).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (64, 16, 20));
        assert!(tr.last() < va.first() && va.last() < te.first());
    }

    fn wavy(n: usize, assets: usize) -> RawSeriesTable {
        let cols = (0..assets)
            .map(|a| {
                (0..n)
                    .map(|i| 3.0 + libm::sin(i as f64 * 0.3 + a as f64) + (i % 7) as f64 * 0.1)
                    .collect()
            })
            .collect();
        table(cols)
    }

    #[test]
    fn pipeline_audit_and_train_range() {
        let raw = wavy(300, 3);
        let spec = WindowSpec {
            past_len: 6,
            horizon: 2,
            median_window: 24,
        };
        let data = prepare_dataset(&raw, &spec).unwrap();
        assert_eq!(data.undefined_rows, 24 + 2 - 1);
        assert_eq!(data.zero_median_rows, 0);
        let n = data.train.len() + data.val.len() + data.test.len();
        assert_eq!(n, 300 - 25 - 6 - 2 + 1);
        // training values lie in [0, 1], with the max hit on training rows
        let target_max = data
            .train
            .iter()
            .flat_map(|s| s.target.iter())
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(target_max <= 1.0);
        for s in data.train.iter().chain(&data.val).chain(&data.test) {
            assert_eq!(&audit_sample(&raw, s.anchor, &spec, &data.scaler).unwrap(), s);
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let raw = wavy(200, 2);
        let spec = WindowSpec {
            past_len: 4,
            horizon: 3,
            median_window: 12,
        };
        let a = prepare_dataset(&raw, &spec).unwrap();
        let b = prepare_dataset(&raw, &spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.scaler, b.scaler);
    }

    #[test]
    fn too_few_rows_error() {
        let raw = wavy(30, 1);
        assert!(prepare_dataset(&raw, &WindowSpec::new(4, 1)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn median_scaling_is_scale_equivariant(
            values in proptest::collection::vec(0.01f64..1000.0, 20..80),
            c in 0.001f64..1000.0,
            w in 1usize..8,
            tau in 1usize..6,
        ) {
            prop_assume!(values.len() > w + tau);
            let a = moving_median_scale(&values, w, tau).unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| v * c).collect();
            let b = moving_median_scale(&scaled, w, tau).unwrap();
            for (x, y) in a.iter().zip(&b) {
                match (x, y) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0)),
                    (None, None) => {}
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn sliding_median_matches_brute_force(
            values in proptest::collection::vec(0.0f64..5.0, 15..60),
            w in 1usize..9,
            tau in 1usize..5,
        ) {
            prop_assume!(values.len() > w + tau);
            let rounded: Vec<f64> = values.iter().map(|v| libm::round(*v)).collect();
            prop_assert_eq!(moving_median_scale(&rounded, w, tau).unwrap(), brute_force_scale(&rounded, w, tau));
        }
    }
}
