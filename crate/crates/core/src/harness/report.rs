use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::OutputFormat;
use super::run::{AggregateReport, GridSummary, TrialRecord};
use crate::error::{Error, Result};

/// Floats are written with 17 significant digits so they parse back exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// JSON formatter that writes every `f64` with 17 significant digits.
#[derive(Default)]
pub struct ExactFloatFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl serde_json::ser::Formatter for ExactFloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_float(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes with [`ExactFloatFormatter`].
pub fn to_exact_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloatFormatter::default());
    value.serialize(&mut ser).map_err(|e| Error::Report(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// The JSON report: records plus the aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonReport {
    pub records: Vec<TrialRecord>,
    pub aggregate: AggregateReport,
}

fn check_finite(records: &[TrialRecord], aggregate: &AggregateReport) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Report("no records to emit".into()));
    }
    for (i, r) in records.iter().enumerate() {
        for (name, v) in r.float_fields() {
            if !v.is_finite() {
                return Err(Error::Report(format!(
                    "record {i} (n = {}, p = {}, replication {}) has non-finite {name} = {v}",
                    r.n, r.p, r.replication
                )));
            }
        }
    }
    let stats = |g: &GridSummary| {
        [
            g.frob_gap_sq,
            g.op_gap,
            g.max_interpoint_dev,
            g.max_dotproduct_dev,
            g.top_angle_k1,
            g.top_angle_k2,
        ]
        .into_iter()
        .flat_map(|m| [m.mean, m.se])
        .chain([g.bracket_b])
        .collect::<Vec<_>>()
    };
    for g in &aggregate.grid {
        if stats(g).iter().any(|v| !v.is_finite()) {
            return Err(Error::Report(format!("aggregate for (n = {}, p = {}) is non-finite", g.n, g.p)));
        }
    }
    if let Some(f) = aggregate.fit {
        if !(f.c_hat.is_finite() && f.r_squared.is_finite()) {
            return Err(Error::Report("fitted constant is non-finite".into()));
        }
    }
    Ok(())
}

/// Header plus one row per record.
pub fn records_to_csv(records: &[TrialRecord]) -> String {
    let mut out = TrialRecord::FIELDS.join(",");
    out.push('\n');
    for r in records {
        let f = format_float;
        let row = [
            r.n.to_string(),
            r.p.to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            f(r.frob_gap_sq),
            f(r.op_gap),
            f(r.max_interpoint_dev),
            f(r.max_dotproduct_dev),
            f(r.bracket_b),
            f(r.top_angle_k1),
            f(r.top_angle_k2),
            r.weyl_ok.to_string(),
            r.out_of_domain_count.to_string(),
            f(r.wall_time_ms),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses CSV written by [`records_to_csv`].
pub fn records_from_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Report("empty CSV".into()))?;
    if header != TrialRecord::FIELDS.join(",") {
        return Err(Error::Report(format!("unexpected CSV header `{header}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != TrialRecord::FIELDS.len() {
                return Err(Error::Report(format!("row {} has {} cells", i + 1, cells.len())));
            }
            let bad = |k: usize| Error::Report(format!("row {}: cannot parse {} = `{}`", i + 1, TrialRecord::FIELDS[k], cells[k]));
            let u = |k: usize| cells[k].parse::<usize>().map_err(|_| bad(k));
            let x = |k: usize| cells[k].parse::<f64>().map_err(|_| bad(k));
            Ok(TrialRecord {
                n: u(0)?,
                p: u(1)?,
                replication: u(2)?,
                seed: cells[3].parse().map_err(|_| bad(3))?,
                frob_gap_sq: x(4)?,
                op_gap: x(5)?,
                max_interpoint_dev: x(6)?,
                max_dotproduct_dev: x(7)?,
                bracket_b: x(8)?,
                top_angle_k1: x(9)?,
                top_angle_k2: x(10)?,
                weyl_ok: cells[11].parse().map_err(|_| bad(11))?,
                out_of_domain_count: u(12)?,
                wall_time_ms: x(13)?,
            })
        })
        .collect()
}

/// `<stem>.aggregate.json` next to a CSV report.
pub fn aggregate_sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.aggregate.json"))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Report(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::Report(format!("cannot write {}: {e}", path.display())))
}

/// Writes the report; returns the files written. CSV output gets an
/// aggregate sidecar.
pub fn emit_report(
    records: &[TrialRecord],
    aggregate: &AggregateReport,
    format: OutputFormat,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    check_finite(records, aggregate)?;
    match format {
        OutputFormat::Csv => {
            write(path, &records_to_csv(records))?;
            let side = aggregate_sidecar(path);
            write(&side, &to_exact_json(aggregate)?)?;
            Ok(vec![path.to_path_buf(), side])
        }
        OutputFormat::Json => {
            let report = JsonReport {
                records: records.to_vec(),
                aggregate: aggregate.clone(),
            };
            write(path, &to_exact_json(&report)?)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

pub fn read_json_report(path: &Path) -> Result<JsonReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Report(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::{CheckStatus, MeanSe};

    fn rec(v: f64) -> TrialRecord {
        TrialRecord {
            n: 10,
            p: 50,
            replication: 0,
            seed: u64::MAX,
            frob_gap_sq: v,
            op_gap: 0.1,
            max_interpoint_dev: 1.0 / 3.0,
            max_dotproduct_dev: 2e-300,
            bracket_b: 0.0,
            top_angle_k1: std::f64::consts::PI,
            top_angle_k2: 0.0,
            weyl_ok: true,
            out_of_domain_count: 3,
            wall_time_ms: 0.0,
        }
    }

    fn agg(records: &[TrialRecord]) -> AggregateReport {
        let m = MeanSe { mean: 0.1, se: 0.0 };
        AggregateReport {
            name: "t".into(),
            base_seed: 1,
            grid: vec![GridSummary {
                n: records[0].n,
                p: records[0].p,
                replications: records.len(),
                frob_gap_sq: m,
                op_gap: m,
                max_interpoint_dev: m,
                max_dotproduct_dev: m,
                top_angle_k1: m,
                top_angle_k2: m,
                bracket_b: 0.0,
                out_of_domain_total: 0,
                weyl_failures: 0,
                near_degenerate_k1: 0,
                near_degenerate_k2: 0,
            }],
            fit: None,
            fit_note: Some("none".into()),
            checks: vec![crate::harness::run::CheckOutcome {
                check: crate::harness::config::Check::Weyl,
                status: CheckStatus::Pass,
                detail: "1/1".into(),
            }],
        }
    }

    #[test]
    fn one_record_is_two_lines() {
        let recs = vec![rec(0.123)];
        let csv = records_to_csv(&recs);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), TrialRecord::FIELDS.join(","));
        assert_eq!(records_from_csv(&csv).unwrap(), recs);
    }

    #[test]
    fn header_matches_serde_order() {
        let json = serde_json::to_string(&rec(1.0)).unwrap();
        let positions: Vec<usize> = TrialRecord::FIELDS
            .iter()
            .map(|f| json.find(&format!("\"{f}\"")).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn floats_round_trip_exactly() {
        for v in [0.1, 1.0 / 3.0, 2e-300, 1.7976931348623157e308, -0.0, 123456789.123456789] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(format_float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let recs = vec![rec(0.1), rec(1e-17)];
        let a = agg(&recs);
        assert_eq!(emit_report(&recs, &a, OutputFormat::Json, &path).unwrap(), vec![path.clone()]);
        let back = read_json_report(&path).unwrap();
        assert_eq!(back.records, recs);
        assert_eq!(back.aggregate, a);
    }

    #[test]
    fn csv_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        let recs = vec![rec(0.5)];
        let files = emit_report(&recs, &agg(&recs), OutputFormat::Csv, &path).unwrap();
        assert_eq!(files[1], dir.path().join("nested/out.aggregate.json"));
        let side: AggregateReport = serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(side, agg(&recs));
    }

    #[test]
    fn nan_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let recs = vec![rec(0.5), rec(f64::NAN)];
        let err = emit_report(&recs, &agg(&recs), OutputFormat::Csv, &path).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
        assert!(err.to_string().contains("frob_gap_sq"), "{err}");
        assert!(!path.exists());
        assert!(emit_report(&[], &agg(&recs), OutputFormat::Csv, &path).is_err());
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let recs = vec![rec(0.5)];
        let err = emit_report(&recs, &agg(&recs), OutputFormat::Json, &blocker.join("out.json")).unwrap_err();
        assert!(matches!(err, Error::Report(_)));
    }
}
