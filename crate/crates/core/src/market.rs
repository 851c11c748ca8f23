//! Market-size arithmetic: year-on-year growth, shares, and the
//! penetration-based potential market, plus a report over the shipped
//! market tables.
//!
//! ```
//! use enumkit::market::{potential_market, PotentialMarketInputs};
//!
//! let world_2002 = PotentialMarketInputs {
//!     total_toll: 205.0,
//!     mobile_revenue: 315.0,
//!     other_revenue: 200.0,
//!     main_lines: 1115.0,
//!     mobile_subscribers: 1000.0,
//!     internet_users: 500.0,
//!     penetration: 0.05,
//! };
//! let est = potential_market(&world_2002).unwrap();
//! assert!((est.revenue - 36.0).abs() < 1e-9);
//! assert!((est.subscribers - 130.75).abs() < 1e-9);
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

pub const FIG_3_1: &str = "fig3-1";
pub const FIG_3_2: &str = "fig3-2";
pub const FIG_3_3: &str = "fig3-3";

/// Shipped market tables as `(name, csv)`.
pub const FIXTURES: [(&str, &str); 3] = [
    (FIG_3_1, include_str!("../fixtures/market/fig3-1.csv")),
    (FIG_3_2, include_str!("../fixtures/market/fig3-2.csv")),
    (FIG_3_3, include_str!("../fixtures/market/fig3-3.csv")),
];

pub const DEFAULT_PENETRATION: f64 = 0.05;

/// Tolerances for comparing computed cells with printed ones.
pub const GROWTH_TOLERANCE: f64 = 0.05;
pub const SHARE_TOLERANCE: f64 = 0.005;
pub const POTENTIAL_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("{metric} has no value for {year}")]
    MissingYear { metric: String, year: u16 },
    #[error("{metric} is zero or negative in {year}")]
    ZeroBase { metric: String, year: u16 },
    #[error("penetration {0} is outside (0, 1]")]
    BadPenetration(f64),
    #[error("{0} must not be negative")]
    Negative(String),
    #[error("{table}: {metric} skips years")]
    NonContiguous { table: String, metric: String },
    #[error("{table}:{line}: {message}")]
    Parse { table: String, line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub unit: String,
    pub values: BTreeMap<u16, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketTable {
    pub name: String,
    pub rows: BTreeMap<String, MetricRow>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    metric: String,
    unit: String,
    year: u16,
    value: f64,
}

impl MarketTable {
    /// Parses `metric,unit,year,value` rows. Every metric must cover a
    /// contiguous run of years with non-negative values.
    pub fn from_csv(name: &str, text: &str) -> Result<Self, MarketError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut rows: BTreeMap<String, MetricRow> = BTreeMap::new();
        for (i, rec) in reader.deserialize::<CsvRow>().enumerate() {
            // Header is line 1.
            let line = i + 2;
            let parse = |message: String| MarketError::Parse { table: name.into(), line, message };
            let rec = rec.map_err(|e| parse(e.to_string()))?;
            if rec.value < 0.0 || !rec.value.is_finite() {
                return Err(parse(format!("{} {} is negative or not finite", rec.metric, rec.year)));
            }
            let row = rows
                .entry(rec.metric.clone())
                .or_insert_with(|| MetricRow { unit: rec.unit.clone(), values: BTreeMap::new() });
            if row.unit != rec.unit {
                return Err(parse(format!("{} switches unit to {}", rec.metric, rec.unit)));
            }
            if row.values.insert(rec.year, rec.value).is_some() {
                return Err(parse(format!("{} {} appears twice", rec.metric, rec.year)));
            }
        }
        let table = Self { name: name.into(), rows };
        table.check_contiguous()?;
        Ok(table)
    }

    fn check_contiguous(&self) -> Result<(), MarketError> {
        for (metric, row) in &self.rows {
            // Tables laid out as snapshot columns (2000, 2002) are exempt.
            if self.name == FIG_3_2 {
                continue;
            }
            let years: Vec<_> = row.values.keys().copied().collect();
            if years.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(MarketError::NonContiguous { table: self.name.clone(), metric: metric.clone() });
            }
        }
        Ok(())
    }

    pub fn value(&self, metric: &str, year: u16) -> Result<f64, MarketError> {
        self.rows
            .get(metric)
            .and_then(|r| r.values.get(&year))
            .copied()
            .ok_or_else(|| MarketError::MissingYear { metric: metric.into(), year })
    }

    pub fn years(&self) -> Vec<u16> {
        let mut ys: Vec<u16> = self.rows.values().flat_map(|r| r.values.keys().copied()).collect();
        ys.sort_unstable();
        ys.dedup();
        ys
    }
}

/// Loads the three shipped tables.
pub fn builtin_tables() -> Vec<MarketTable> {
    FIXTURES
        .iter()
        .map(|(name, text)| MarketTable::from_csv(name, text).expect("shipped fixtures parse"))
        .collect()
}

/// Loads `fig3-1.csv`, `fig3-2.csv` and `fig3-3.csv` from `dir`.
pub fn load_tables(dir: &Path) -> Result<Vec<MarketTable>, MarketError> {
    if !dir.is_dir() {
        return Err(MarketError::Io(format!("{} is not a directory", dir.display())));
    }
    FIXTURES
        .iter()
        .map(|(name, _)| {
            let path = dir.join(format!("{name}.csv"));
            let text = std::fs::read_to_string(&path).map_err(|e| MarketError::Io(format!("{}: {e}", path.display())))?;
            MarketTable::from_csv(name, &text)
        })
        .collect()
}

/// Rounds half away from zero at `places` decimals. The small nudge keeps
/// values such as 16.15 from falling to 16.1 through binary representation.
pub fn round_half_up(x: f64, places: u32) -> f64 {
    let f = 10f64.powi(places as i32);
    let s = x * f;
    (s + s.signum() * 1e-9).round() / f
}

/// Percent change from the previous year, unrounded.
pub fn growth_rate_exact(table: &MarketTable, metric: &str, year: u16) -> Result<f64, MarketError> {
    let prev_year = year.checked_sub(1).ok_or_else(|| MarketError::MissingYear { metric: metric.into(), year })?;
    let prev = table.value(metric, prev_year)?;
    let cur = table.value(metric, year)?;
    if prev <= 0.0 {
        return Err(MarketError::ZeroBase { metric: metric.into(), year: prev_year });
    }
    Ok(100.0 * (cur - prev) / prev)
}

/// Percent change from the previous year, to one decimal.
pub fn growth_rate(table: &MarketTable, metric: &str, year: u16) -> Result<f64, MarketError> {
    growth_rate_exact(table, metric, year).map(|g| round_half_up(g, 1))
}

pub fn share_of_exact(table: &MarketTable, numerator: &str, denominator: &str, year: u16) -> Result<f64, MarketError> {
    let num = table.value(numerator, year)?;
    let den = table.value(denominator, year)?;
    if den <= 0.0 {
        return Err(MarketError::ZeroBase { metric: denominator.into(), year });
    }
    Ok(100.0 * num / den)
}

/// `numerator` as a percentage of `denominator`, to two decimals.
pub fn share_of(table: &MarketTable, numerator: &str, denominator: &str, year: u16) -> Result<f64, MarketError> {
    share_of_exact(table, numerator, denominator, year).map(|s| round_half_up(s, 2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialMarketInputs {
    /// Currency billions.
    pub total_toll: f64,
    pub mobile_revenue: f64,
    pub other_revenue: f64,
    /// Millions.
    pub main_lines: f64,
    pub mobile_subscribers: f64,
    pub internet_users: f64,
    pub penetration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialMarketEstimate {
    /// Currency billions.
    pub revenue: f64,
    /// Millions.
    pub subscribers: f64,
}

pub fn potential_market(input: &PotentialMarketInputs) -> Result<PotentialMarketEstimate, MarketError> {
    if !(input.penetration > 0.0 && input.penetration <= 1.0) {
        return Err(MarketError::BadPenetration(input.penetration));
    }
    for (name, v) in [
        ("total_toll", input.total_toll),
        ("mobile_revenue", input.mobile_revenue),
        ("other_revenue", input.other_revenue),
        ("main_lines", input.main_lines),
        ("mobile_subscribers", input.mobile_subscribers),
        ("internet_users", input.internet_users),
    ] {
        if v < 0.0 || !v.is_finite() {
            return Err(MarketError::Negative(name.into()));
        }
    }
    Ok(PotentialMarketEstimate {
        revenue: input.penetration * (input.total_toll + input.mobile_revenue + input.other_revenue),
        subscribers: input.penetration * (input.main_lines + input.mobile_subscribers + input.internet_users),
    })
}

/// One (region, year) column of the potential-market sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialColumn {
    pub region: String,
    pub year: u16,
    pub inputs: PotentialMarketInputs,
    pub printed: Option<PotentialMarketEstimate>,
}

/// Reads every (region, year) column out of the potential-market table.
pub fn potential_columns(table: &MarketTable, penetration: f64) -> Result<Vec<PotentialColumn>, MarketError> {
    let mut regions: Vec<String> = table
        .rows
        .keys()
        .filter_map(|m| m.strip_prefix("total_toll.").map(str::to_string))
        .collect();
    // World first, then the rest alphabetically.
    regions.sort_by_key(|r| (r != "world", r.clone()));
    let mut out = Vec::new();
    for year in table.years() {
        for region in &regions {
            let v = |m: &str| table.value(&format!("{m}.{region}"), year);
            if v("total_toll").is_err() {
                continue;
            }
            let inputs = PotentialMarketInputs {
                total_toll: v("total_toll")?,
                mobile_revenue: v("mobile_revenue")?,
                other_revenue: v("other_revenue")?,
                main_lines: v("main_lines")?,
                mobile_subscribers: v("mobile_subscribers")?,
                internet_users: v("internet_users")?,
                penetration,
            };
            let printed = match (v("printed_potential_revenue"), v("printed_potential_subscribers")) {
                (Ok(revenue), Ok(subscribers)) => Some(PotentialMarketEstimate { revenue, subscribers }),
                _ => None,
            };
            out.push(PotentialColumn { region: region.clone(), year, inputs, printed });
        }
    }
    Ok(out)
}

/// A computed cell next to the value printed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCheck {
    pub table: String,
    pub cell: String,
    pub computed: f64,
    pub printed: f64,
    pub tolerance: f64,
}

impl CellCheck {
    pub fn delta(&self) -> f64 {
        self.computed - self.printed
    }

    pub fn ok(&self) -> bool {
        self.delta().abs() <= self.tolerance + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketReport {
    pub sections: Vec<Section>,
    pub checks: Vec<CellCheck>,
    pub notes: Vec<String>,
}

fn fmt_value(v: f64) -> String {
    let s = format!("{:.2}", round_half_up(v, 2));
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn split_metric(metric: &str) -> (&str, &str) {
    metric.rsplit_once('.').unwrap_or((metric, ""))
}

fn series_sections(table: &MarketTable, checks: &mut Vec<CellCheck>) -> Section {
    let years = table.years();
    let mut header = vec!["metric".to_string(), "unit".to_string()];
    header.extend(years.iter().map(u16::to_string));
    let mut rows = Vec::new();
    let raw: Vec<_> = table.rows.iter().filter(|(m, _)| !m.starts_with("printed_")).collect();
    for (metric, row) in &raw {
        let mut cells = vec![metric.to_string(), row.unit.clone()];
        cells.extend(years.iter().map(|y| row.values.get(y).map_or("-".into(), |v| fmt_value(*v))));
        rows.push(cells);

        let (base, region) = split_metric(metric);
        let printed_growth = table.rows.get(&format!("printed_growth.{metric}"));
        // Growth rows for every series in the UM table, and for the series
        // whose growth is printed elsewhere.
        if table.name == FIG_3_3 || printed_growth.is_some() {
            let mut cells = vec![format!("% growth {metric}"), "percent".into()];
            for &y in &years {
                match growth_rate(table, metric, y) {
                    Ok(g) => {
                        cells.push(format!("{g:.1}"));
                        if let Some(p) = printed_growth.and_then(|r| r.values.get(&y)) {
                            checks.push(CellCheck {
                                table: table.name.clone(),
                                cell: format!("% growth {metric} {y}"),
                                computed: g,
                                printed: *p,
                                tolerance: GROWTH_TOLERANCE,
                            });
                        }
                    }
                    Err(_) => cells.push("-".into()),
                }
            }
            rows.push(cells);
        }
        let printed_share = table.rows.get(&format!("printed_share.{metric}"));
        if let Some(printed_share) = printed_share {
            let denominator = format!("internet_users.{region}");
            let mut cells = vec![format!("% of internet users {base}.{region}"), "percent".into()];
            for &y in &years {
                match share_of(table, metric, &denominator, y) {
                    Ok(s) => {
                        cells.push(format!("{s:.2}"));
                        if let Some(p) = printed_share.values.get(&y) {
                            checks.push(CellCheck {
                                table: table.name.clone(),
                                cell: format!("% of internet users {metric} {y}"),
                                computed: s,
                                printed: *p,
                                tolerance: SHARE_TOLERANCE,
                            });
                        }
                    }
                    Err(_) => cells.push("-".into()),
                }
            }
            rows.push(cells);
        }
    }
    Section { title: table.name.clone(), header, rows }
}

fn potential_section(
    table: &MarketTable,
    penetration: f64,
    checks: &mut Vec<CellCheck>,
    notes: &mut Vec<String>,
) -> Result<Section, MarketError> {
    let columns = potential_columns(table, penetration)?;
    let mut header = vec!["metric".to_string(), "unit".to_string()];
    header.extend(columns.iter().map(|c| format!("{} {}", c.region, c.year)));
    let mut rows = Vec::new();
    let raw: Vec<_> = table
        .rows
        .keys()
        .filter(|m| !m.starts_with("printed_"))
        .map(|m| split_metric(m).0.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for base in raw {
        let unit = columns
            .first()
            .and_then(|c| table.rows.get(&format!("{base}.{}", c.region)))
            .map_or(String::new(), |r| r.unit.clone());
        let mut cells = vec![base.clone(), unit];
        for c in &columns {
            cells.push(table.value(&format!("{base}.{}", c.region), c.year).map_or("-".into(), fmt_value));
        }
        rows.push(cells);
    }
    let pct = fmt_value(penetration * 100.0);
    let mut revenue = vec![format!("potential revenue at {pct}%"), "usd_billions".into()];
    let mut subscribers = vec![format!("potential subscribers at {pct}%"), "millions".into()];
    for c in &columns {
        let est = potential_market(&c.inputs)?;
        revenue.push(fmt_value(est.revenue));
        subscribers.push(fmt_value(est.subscribers));
        if let (Some(p), true) = (c.printed, penetration == DEFAULT_PENETRATION) {
            for (what, computed, printed) in [
                ("potential revenue", est.revenue, p.revenue),
                ("potential subscribers", est.subscribers, p.subscribers),
            ] {
                let check = CellCheck {
                    table: table.name.clone(),
                    cell: format!("{what} {} {}", c.region, c.year),
                    computed,
                    printed,
                    tolerance: POTENTIAL_TOLERANCE,
                };
                if !check.ok() {
                    notes.push(format!(
                        "{} {} {what}: the component rows give {}, the printed cell is {}",
                        c.region,
                        c.year,
                        fmt_value(computed),
                        fmt_value(printed)
                    ));
                }
                checks.push(check);
            }
        }
    }
    rows.push(revenue);
    rows.push(subscribers);
    if let Some(usa_2002) = columns.iter().find(|c| c.region == "usa" && c.year == 2002) {
        if let Ok(est) = potential_market(&usa_2002.inputs) {
            notes.push(format!(
                "A worldwide 2002 estimate of about 25M subscribers and $11B \
                 matches the USA 2002 column ({}M, ${}B), not the world column.",
                fmt_value(est.subscribers),
                fmt_value(est.revenue)
            ));
        }
    }
    Ok(Section { title: table.name.clone(), header, rows })
}

/// Builds the report for `tables`. Tables with unknown names are shown
/// without derived rows.
pub fn market_report(tables: &[MarketTable], penetration: f64) -> Result<MarketReport, MarketError> {
    if !(penetration > 0.0 && penetration <= 1.0) {
        return Err(MarketError::BadPenetration(penetration));
    }
    let mut report = MarketReport::default();
    for t in tables {
        let section = if t.name == FIG_3_2 {
            potential_section(t, penetration, &mut report.checks, &mut report.notes)?
        } else {
            series_sections(t, &mut report.checks)
        };
        report.sections.push(section);
    }
    Ok(report)
}

impl MarketReport {
    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CellCheck> {
        self.checks.iter().filter(|c| !c.ok())
    }

    /// Aligned plain text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "== {} ==", s.title);
            let all: Vec<&Vec<String>> = std::iter::once(&s.header).chain(s.rows.iter()).collect();
            let widths: Vec<usize> = (0..s.header.len())
                .map(|i| all.iter().map(|r| r.get(i).map_or(0, |c| c.len())).max().unwrap_or(0))
                .collect();
            for r in all {
                let mut line = String::new();
                for (i, c) in r.iter().enumerate() {
                    if i == 0 {
                        let _ = write!(line, "{c:<w$}", w = widths[i]);
                    } else {
                        let _ = write!(line, "  {c:>w$}", w = widths[i]);
                    }
                }
                let _ = writeln!(out, "{}", line.trim_end());
            }
            out.push('\n');
        }
        if !self.checks.is_empty() {
            let failed = self.failed_checks().count();
            let _ = writeln!(out, "== checks: {} of {} printed cells reproduced ==", self.checks.len() - failed, self.checks.len());
            for c in self.failed_checks() {
                let _ = writeln!(
                    out,
                    "MISMATCH {} {}: computed {}, printed {}",
                    c.table,
                    c.cell,
                    fmt_value(c.computed),
                    fmt_value(c.printed)
                );
            }
            out.push('\n');
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    /// `section,metric,unit,<column>,value` rows, then the checks.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record(["section", "metric", "unit", "column", "value"]);
        for s in &self.sections {
            for r in &s.rows {
                for (col, v) in s.header.iter().zip(r.iter()).skip(2) {
                    let _ = w.write_record([s.title.as_str(), r[0].as_str(), r[1].as_str(), col.as_str(), v.as_str()]);
                }
            }
        }
        for c in &self.checks {
            let computed = fmt_value(c.computed);
            let printed = fmt_value(c.printed);
            let ok = if c.ok() { "ok" } else { "mismatch" };
            let _ = w.write_record(["check", c.cell.as_str(), c.table.as_str(), &printed, &format!("{computed} {ok}")]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8 fields")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(name: &str) -> MarketTable {
        builtin_tables().into_iter().find(|t| t.name == name).unwrap()
    }

    #[test]
    fn growth_and_share() {
        let t = table(FIG_3_1);
        assert_eq!(growth_rate(&t, "internet_users.world", 2001).unwrap(), 35.2);
        assert_eq!(share_of(&t, "pc_to_phone_users.usa", "internet_users.usa", 2004).unwrap(), 16.99);
        assert_eq!(share_of(&t, "usage.usa", "usage.usa", 2002).unwrap(), 100.0);
        assert!(matches!(growth_rate(&t, "internet_users.world", 2000), Err(MarketError::MissingYear { .. })));
        let mb = table(FIG_3_3);
        assert_eq!(growth_rate(&mb, "mailboxes.world", 2001).unwrap(), 360.2);
    }

    #[test]
    fn zero_base() {
        let t = MarketTable::from_csv("x", "metric,unit,year,value\na,k,2000,0\na,k,2001,5\n").unwrap();
        assert!(matches!(growth_rate(&t, "a", 2001), Err(MarketError::ZeroBase { .. })));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = MarketTable::from_csv("x", "metric,unit,year,value\na,k,2000,1\na,k,twenty,1\n").unwrap_err();
        assert!(matches!(err, MarketError::Parse { line: 3, .. }), "{err:?}");
        let gap = MarketTable::from_csv("x", "metric,unit,year,value\na,k,2000,1\na,k,2002,1\n").unwrap_err();
        assert!(matches!(gap, MarketError::NonContiguous { .. }));
    }

    #[test]
    fn penetration_bounds() {
        let mut i = potential_columns(&table(FIG_3_2), 0.05).unwrap()[0].inputs;
        i.penetration = 0.0;
        assert!(matches!(potential_market(&i), Err(MarketError::BadPenetration(_))));
        i.penetration = 1.0;
        let est = potential_market(&i).unwrap();
        assert_eq!(est.revenue, i.total_toll + i.mobile_revenue + i.other_revenue);
    }

    #[test]
    fn half_up() {
        assert_eq!(round_half_up(16.15, 1), 16.2);
        assert_eq!(round_half_up(2.895, 2), 2.9);
        assert_eq!(round_half_up(-1.25, 1), -1.3);
    }

    #[test]
    fn report_is_stable_and_empty_for_no_tables() {
        let tables = builtin_tables();
        let a = market_report(&tables, DEFAULT_PENETRATION).unwrap();
        let b = market_report(&tables, DEFAULT_PENETRATION).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.to_text().contains("130.75"));
        assert!(market_report(&[], DEFAULT_PENETRATION).unwrap().is_empty());
    }
}
