//! Price and return panels, sample filters and crisis-period vulnerability targets.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::marker::PhantomData;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Marker for panels holding prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prices;

/// Marker for panels holding log-returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Returns;

/// Date x firm matrix with explicit missing cells.
///
/// Dates are strictly increasing and every row holds one cell per firm.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel<T, K> {
    dates: Vec<NaiveDate>,
    firms: Vec<String>,
    values: Vec<Vec<Option<T>>>,
    _kind: PhantomData<K>,
}

pub type PricePanel<T> = Panel<T, Prices>;
pub type ReturnPanel<T> = Panel<T, Returns>;

impl<T: Scalar, K> Panel<T, K> {
    fn build(dates: Vec<NaiveDate>, firms: Vec<String>, values: Vec<Vec<Option<T>>>) -> Result<Self> {
        if values.len() != dates.len() {
            return Err(Error::InsufficientData(format!(
                "{} rows for {} dates",
                values.len(),
                dates.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InsufficientData(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some((i, _)) = values.iter().enumerate().find(|(_, r)| r.len() != firms.len()) {
            return Err(Error::InsufficientData(format!(
                "row {} has {} cells, expected {}",
                i,
                values[i].len(),
                firms.len()
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &firms {
            if !seen.insert(f.as_str()) {
                return Err(Error::InsufficientData(format!("duplicate firm {f}")));
            }
        }
        Ok(Self {
            dates,
            firms,
            values,
            _kind: PhantomData,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn firms(&self) -> &[String] {
        &self.firms
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn get(&self, row: usize, firm: usize) -> Option<T> {
        self.values[row][firm]
    }

    pub fn rows(&self) -> &[Vec<Option<T>>] {
        &self.values
    }

    pub fn firm_index(&self, firm: &str) -> Option<usize> {
        self.firms.iter().position(|f| f == firm)
    }

    fn require_firm(&self, firm: &str) -> Result<usize> {
        self.firm_index(firm).ok_or_else(|| Error::FirmUnavailable {
            firm: firm.to_string(),
            reason: "not in panel".into(),
        })
    }

    /// Column of one firm, missing cells included.
    pub fn column(&self, firm: usize) -> Vec<Option<T>> {
        self.values.iter().map(|r| r[firm]).collect()
    }

    /// Row indices whose date falls in `[start, end]`.
    pub fn rows_between(&self, start: NaiveDate, end: NaiveDate) -> std::ops::Range<usize> {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        lo..hi.max(lo)
    }

    /// Keeps the listed firms, in the given order.
    pub fn select_firms(&self, firms: &[String]) -> Result<Self> {
        let idx = firms
            .iter()
            .map(|f| self.require_firm(f))
            .collect::<Result<Vec<_>>>()?;
        let values = self
            .values
            .iter()
            .map(|r| idx.iter().map(|&j| r[j]).collect())
            .collect();
        Self::build(self.dates.clone(), firms.to_vec(), values)
    }

    /// Keeps the rows in `range`.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            firms: self.firms.clone(),
            values: self.values[range].to_vec(),
            _kind: PhantomData,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string()];
        header.extend(self.firms.iter().cloned());
        w.write_record(&header)?;
        for (d, row) in self.dates.iter().zip(&self.values) {
            let mut rec = vec![d.format("%Y-%m-%d").to_string()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl<T: Scalar> PricePanel<T> {
    /// Validates shape, ordering and positivity.
    pub fn new(dates: Vec<NaiveDate>, firms: Vec<String>, prices: Vec<Vec<Option<T>>>) -> Result<Self> {
        for (i, row) in prices.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                if let Some(p) = p {
                    if !(*p > T::zero()) || !p.is_finite() {
                        return Err(Error::InsufficientData(format!(
                            "non-positive price {p} at row {i}, firm {}",
                            firms.get(j).map(String::as_str).unwrap_or("?")
                        )));
                    }
                }
            }
        }
        Self::build(dates, firms, prices)
    }
}

impl<T: Scalar> ReturnPanel<T> {
    pub fn new(dates: Vec<NaiveDate>, firms: Vec<String>, returns: Vec<Vec<Option<T>>>) -> Result<Self> {
        Self::build(dates, firms, returns)
    }
}

/// Reads a `date,TICK1,TICK2,...` price file; empty cells are missing.
pub fn load_price_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<PricePanel<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    parse_price_csv(file, &path.display().to_string())
}

/// Parses price CSV content. Rows in error messages are 1-based file lines (header is line 1).
pub fn parse_price_csv<T: Scalar, R: Read>(reader: R, source: &str) -> Result<PricePanel<T>> {
    let load_err = |row: usize, column: &str, message: String| Error::Load {
        path: source.to_string(),
        row,
        column: column.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(load_err(1, header.get(0).unwrap_or(""), "header must be `date,TICKER,...`".into()));
    }
    let firms: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if let Some(f) = firms.iter().find(|f| f.is_empty()) {
        return Err(load_err(1, f, "empty ticker in header".into()));
    }

    let mut rows: Vec<(NaiveDate, Vec<Option<T>>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| load_err(line, "", e.to_string()))?;
        if rec.len() != header.len() {
            return Err(load_err(
                line,
                "",
                format!("expected {} cells, found {}", header.len(), rec.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| load_err(line, "date", format!("unparseable date {:?}: {e}", &rec[0])))?;
        let mut cells = Vec::with_capacity(firms.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if cell.is_empty() {
                cells.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| load_err(line, &firms[j], format!("unparseable price {cell:?}")))?;
            if !(v > 0.0) || !v.is_finite() {
                return Err(load_err(line, &firms[j], format!("non-positive price {cell}")));
            }
            cells.push(Some(T::lit(v)));
        }
        rows.push((date, cells));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(load_err(0, "date", format!("duplicate date {}", w[0].0)));
    }
    let (dates, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    PricePanel::new(dates, firms, values)
}

/// Log-returns `ln(p_t / p_{t-1})`; missing whenever either price is missing.
pub fn to_log_returns<T: Scalar>(panel: &PricePanel<T>) -> Result<ReturnPanel<T>> {
    if panel.len() < 2 {
        return Err(Error::InsufficientData(
            "log-returns need at least 2 dates".into(),
        ));
    }
    let values = panel
        .values
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(b.ln() - a.ln()),
                    _ => None,
                })
                .collect()
        })
        .collect();
    ReturnPanel::new(panel.dates[1..].to_vec(), panel.firms.clone(), values)
}

/// Crisis period used for targets and sample filters; both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrisisWindow {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl CrisisWindow {
    pub fn new(label: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let w = Self {
            label: label.into(),
            start,
            end,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::InvalidWindow(format!(
                "{}: start {} not before end {}",
                self.label, self.start, self.end
            )));
        }
        Ok(())
    }

    /// Checks that the window starts inside the panel's date range; the end may run past the last date.
    pub fn check_within(&self, dates: &[NaiveDate]) -> Result<()> {
        self.validate()?;
        match (dates.first(), dates.last()) {
            (Some(first), Some(last)) if self.start >= *first && self.start <= *last => Ok(()),
            (Some(first), Some(last)) => Err(Error::InvalidWindow(format!(
                "{}: [{}, {}] outside panel range [{first}, {last}]",
                self.label, self.start, self.end
            ))),
            _ => Err(Error::InvalidWindow(format!("{}: empty panel", self.label))),
        }
    }

    /// Smallest window covering both.
    pub fn hull(&self, other: &CrisisWindow) -> CrisisWindow {
        CrisisWindow {
            label: format!("{}+{}", self.label, other.label),
            start: self.start.min(other.start),
            end: self.end.max(other.end),
        }
    }
}

impl fmt::Display for CrisisWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{} .. {}]", self.label, self.start, self.end)
    }
}

/// Sample filters: a firm survives when it
/// - is first observed before the crisis starts,
/// - has a run of at least `min_consecutive` non-missing returns before the crisis,
/// - has no missing return inside the crisis window.
pub fn filter_sample<T: Scalar>(
    panel: &ReturnPanel<T>,
    min_consecutive: usize,
    crisis: &CrisisWindow,
) -> Result<ReturnPanel<T>> {
    if min_consecutive == 0 {
        return Err(Error::Config("min_consecutive must be at least 1".into()));
    }
    crisis.check_within(&panel.dates)?;
    let pre = panel.dates.partition_point(|d| *d < crisis.start);
    let during = panel.rows_between(crisis.start, crisis.end);

    let keep: Vec<String> = (0..panel.n_firms())
        .filter(|&j| {
            let col = panel.column(j);
            let first_seen_before = col[..pre].iter().any(Option::is_some);
            let mut run = 0usize;
            let mut best = 0usize;
            for v in &col[..pre] {
                run = if v.is_some() { run + 1 } else { 0 };
                best = best.max(run);
            }
            let full_crisis = !during.is_empty() && col[during.clone()].iter().all(Option::is_some);
            let ok = first_seen_before && best >= min_consecutive && full_crisis;
            if !ok {
                log::info!("dropping firm {} by sample filters", panel.firms[j]);
            }
            ok
        })
        .map(|j| panel.firms[j].clone())
        .collect();
    if keep.is_empty() {
        return Err(Error::NoFirmsSurvive);
    }
    panel.select_firms(&keep)
}

/// Sum of the firm's log-returns dated inside the window.
pub fn cumulative_return<T: Scalar>(panel: &ReturnPanel<T>, firm: &str, window: &CrisisWindow) -> Result<T> {
    let j = panel.require_firm(firm)?;
    let rows = panel.rows_between(window.start, window.end);
    if rows.is_empty() {
        return Err(Error::FirmUnavailable {
            firm: firm.into(),
            reason: format!("no returns in window {window}"),
        });
    }
    rows.map(|t| {
        panel.values[t][j].ok_or_else(|| Error::FirmUnavailable {
            firm: firm.into(),
            reason: format!("missing return on {} inside {window}", panel.dates[t]),
        })
    })
    .try_fold(T::zero(), |acc, r| r.map(|r| acc + r))
}

/// Largest peak-to-trough relative decline, as a positive fraction in `[0, 1)`.
/// Missing prices inside the window are skipped.
pub fn max_drawdown<T: Scalar>(panel: &PricePanel<T>, firm: &str, window: &CrisisWindow) -> Result<T> {
    let j = panel.require_firm(firm)?;
    let prices: Vec<T> = panel
        .rows_between(window.start, window.end)
        .filter_map(|t| panel.values[t][j])
        .collect();
    drawdown_of_series(&prices).ok_or_else(|| Error::FirmUnavailable {
        firm: firm.into(),
        reason: format!("fewer than 2 prices in {window}"),
    })
}

/// Single-pass running-peak drawdown; `None` for fewer than two prices.
pub fn drawdown_of_series<T: Scalar>(prices: &[T]) -> Option<T> {
    if prices.len() < 2 {
        return None;
    }
    let mut peak = prices[0];
    let mut worst = T::zero();
    for &p in prices {
        if p > peak {
            peak = p;
        }
        let dd = (peak - p) / peak;
        if dd > worst {
            worst = dd;
        }
    }
    Some(worst)
}

/// Firm to sector code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectorMap(BTreeMap<String, String>);

impl SectorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, firm: impl Into<String>, sector: impl Into<String>) {
        self.0.insert(firm.into(), sector.into());
    }

    pub fn get(&self, firm: &str) -> Option<&str> {
        self.0.get(firm).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Errors naming the first firm without a label.
    pub fn check_covers<'a>(&self, firms: impl IntoIterator<Item = &'a String>) -> Result<()> {
        for f in firms {
            if !self.0.contains_key(f) {
                return Err(Error::MissingSector(f.clone()));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ticker", "sector"])?;
        for (k, v) in &self.0 {
            w.write_record([k, v])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl FromIterator<(String, String)> for SectorMap {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Reads a `ticker,sector` file.
pub fn load_sector_csv(path: impl AsRef<Path>) -> Result<SectorMap> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.len() != 2 || &header[0] != "ticker" || &header[1] != "sector" {
        return Err(Error::Load {
            path: source,
            row: 1,
            column: String::new(),
            message: "header must be `ticker,sector`".into(),
        });
    }
    let mut map = SectorMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(Error::Load {
                path: source,
                row: i + 2,
                column: String::new(),
                message: "empty ticker or sector".into(),
            });
        }
        map.insert(&rec[0], &rec[1]);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn one_firm(prices: &[Option<f64>]) -> PricePanel<f64> {
        let dates = (0..prices.len())
            .map(|i| d("2000-01-01") + chrono::Days::new(i as u64))
            .collect();
        PricePanel::new(dates, vec!["A".into()], prices.iter().map(|p| vec![*p]).collect()).unwrap()
    }

    #[test]
    fn parses_filled_panel() {
        let csv = "date,A,B\n2000-01-31,1,2\n2000-02-29,3,4\n2000-03-31,5,6\n";
        let p: PricePanel<f64> = parse_price_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.n_firms(), 2);
        assert_eq!(p.get(2, 1), Some(6.0));
    }

    #[test]
    fn empty_cell_is_missing() {
        let csv = "date,A,B\n2000-01-31,1,\n2000-02-29,3,4\n";
        let p: PricePanel<f64> = parse_price_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(p.get(0, 1), None);
        assert_eq!(p.get(1, 1), Some(4.0));
    }

    #[test]
    fn negative_price_cites_row() {
        let csv = "date,A\n2000-01-31,1\n2000-02-29,2\n2000-03-31,-5\n";
        match parse_price_csv::<f64, _>(csv.as_bytes(), "mem") {
            Err(Error::Load { row, column, .. }) => {
                assert_eq!(row, 4);
                assert_eq!(column, "A");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_header_and_date_rejected() {
        assert!(parse_price_csv::<f64, _>("day,A\n2000-01-01,1\n".as_bytes(), "m").is_err());
        assert!(matches!(
            parse_price_csv::<f64, _>("date,A\n2000-13-01,1\n".as_bytes(), "m"),
            Err(Error::Load { row: 2, .. })
        ));
    }

    #[test]
    fn unsorted_dates_are_sorted() {
        let csv = "date,A\n2000-03-31,3\n2000-01-31,1\n";
        let p: PricePanel<f64> = parse_price_csv(csv.as_bytes(), "mem").unwrap();
        assert_eq!(p.dates()[0], d("2000-01-31"));
        assert_eq!(p.get(0, 0), Some(1.0));
    }

    #[test]
    fn log_return_examples() {
        let r = to_log_returns(&one_firm(&[Some(100.0), Some(100.0)])).unwrap();
        assert_eq!(r.get(0, 0), Some(0.0));
        let r = to_log_returns(&one_firm(&[Some(100.0), Some(100.0 * std::f64::consts::E)])).unwrap();
        assert!((r.get(0, 0).unwrap() - 1.0).abs() < 1e-15);
        let r = to_log_returns(&one_firm(&[Some(100.0), None, Some(121.0)])).unwrap();
        assert_eq!(r.column(0), vec![None, None]);
        assert!(to_log_returns(&one_firm(&[Some(1.0)])).is_err());
    }

    #[test]
    fn drawdown_examples() {
        assert_eq!(drawdown_of_series(&[1.0, 2.0, 3.0]), Some(0.0));
        assert_eq!(drawdown_of_series(&[100.0, 50.0, 75.0]), Some(0.5));
        assert_eq!(drawdown_of_series::<f64>(&[1.0]), None);
    }

    #[test]
    fn drawdown_window_and_errors() {
        let p = one_firm(&[Some(100.0), Some(50.0), Some(75.0), Some(10.0)]);
        let w = CrisisWindow::new("w", d("2000-01-01"), d("2000-01-03")).unwrap();
        assert_eq!(max_drawdown(&p, "A", &w).unwrap(), 0.5);
        let w1 = CrisisWindow::new("w", d("2000-01-04"), d("2000-01-05")).unwrap();
        assert!(max_drawdown(&p, "A", &w1).is_err());
        assert!(max_drawdown(&p, "Z", &w).is_err());
    }

    #[test]
    fn cumulative_return_examples() {
        let dates: Vec<_> = (1..=3).map(|i| d(&format!("2008-0{i}-15"))).collect();
        let r = ReturnPanel::<f64>::new(
            dates,
            vec!["A".into(), "B".into()],
            vec![
                vec![Some(0.1), Some(0.0)],
                vec![Some(-0.2), Some(0.0)],
                vec![Some(0.05), None],
            ],
        )
        .unwrap();
        let w = CrisisWindow::new("w", d("2008-01-01"), d("2008-03-31")).unwrap();
        assert!((cumulative_return(&r, "A", &w).unwrap() + 0.05).abs() < 1e-15);
        let w2 = CrisisWindow::new("w", d("2008-01-01"), d("2008-02-28")).unwrap();
        assert_eq!(cumulative_return(&r, "B", &w2).unwrap(), 0.0);
        assert!(cumulative_return(&r, "B", &w).is_err());
    }

    #[test]
    fn crisis_window_validation() {
        assert!(CrisisWindow::new("x", d("2008-01-01"), d("2008-01-01")).is_err());
        let w = CrisisWindow::new("x", d("2008-01-01"), d("2008-12-31")).unwrap();
        assert!(w.check_within(&[d("2008-02-01"), d("2009-01-01")]).is_err());
        assert!(w.check_within(&[d("2007-02-01"), d("2009-01-01")]).is_ok());
    }

    fn monthly(n: usize) -> Vec<NaiveDate> {
        (0..n)
            .map(|i| {
                NaiveDate::from_ymd_opt(2004 + (i / 12) as i32, (i % 12) as u32 + 1, 28).unwrap()
            })
            .collect()
    }

    #[test]
    fn filter_examples() {
        // 2004-01 .. 2008-12: 60 months; crisis 2008-01 .. 2008-12 starts at row 48.
        let dates = monthly(60);
        let crisis = CrisisWindow::new("12m", d("2008-01-01"), d("2008-12-31")).unwrap();
        let full = vec![Some(0.01); 60];
        let mut late = vec![None; 60];
        for v in late.iter_mut().skip(50) {
            *v = Some(0.01);
        }
        let mut gap = full.clone();
        gap[55] = None;
        let mut short = full.clone();
        short[20] = None;
        short[30] = None;
        short[40] = None;
        let cols = [full, late, gap, short];
        let rows = (0..60).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
        let panel = ReturnPanel::new(
            dates,
            vec!["KEEP".into(), "LATE".into(), "GAP".into(), "SHORT".into()],
            rows,
        )
        .unwrap();
        let out = filter_sample(&panel, 36, &crisis).unwrap();
        assert_eq!(out.firms(), &["KEEP".to_string()]);
        let again = filter_sample(&out, 36, &crisis).unwrap();
        assert_eq!(again, out);
        assert!(matches!(
            filter_sample(&panel, 100, &crisis),
            Err(Error::NoFirmsSurvive)
        ));
        assert!(filter_sample(&panel, 0, &crisis).is_err());
    }

    #[test]
    fn sector_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "ticker,sector\nA,bank\nB,insurance\n").unwrap();
        let m = load_sector_csv(&path).unwrap();
        assert_eq!(m.get("B"), Some("insurance"));
        assert!(m.check_covers(&["A".to_string(), "C".to_string()]).is_err());
    }
}
