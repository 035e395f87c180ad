//! CSV formats: window datasets, partitions, trajectories with their
//! scenario table, and single assessment windows.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dlban_core::datagen::{
    GroundTruth, Label, Origin, Scenario, Stability, TrajectorySample, WindowSample,
};
use dlban_core::DenseArray;

use crate::error::{CliError, Result};

/// Decimal places of trajectory values on disk.
pub const TRAJECTORY_DECIMALS: usize = 8;

const WINDOW_KEYS: [&str; 4] = ["sample_id", "label", "origin", "scenario_id"];
const SCENARIO_HEADER: [&str; 13] = [
    "sample_id",
    "scenario_id",
    "step",
    "load_level",
    "motor_fraction",
    "line_id",
    "fault_location",
    "clearing_time",
    "seed",
    "prelabel",
    "outcome",
    "ambiguous",
    "severity",
];

/// Rounds `v` to the on-disk trajectory precision, so values held in memory
/// equal the values read back.
pub fn quantize(v: f64) -> f64 {
    format!("{v:.TRAJECTORY_DECIMALS$}").parse().expect("formatted float parses")
}

pub fn quantize_trajectory(s: &mut TrajectorySample) {
    for m in [&mut s.voltage, &mut s.active, &mut s.reactive] {
        m.as_mut_slice().iter_mut().for_each(|v| *v = quantize(*v));
    }
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(BufWriter::new(f)))
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().from_reader(f))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::parse(path, line, 0, format!("{kind:?}")),
    }
}

fn finish(path: &Path, w: csv::Writer<BufWriter<File>>) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(path, e))
}

/// Writes a header and rows of preformatted fields.
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = create(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

/// A row being parsed, for diagnostics that name the line and column.
struct Row<'a> {
    path: &'a Path,
    record: &'a csv::StringRecord,
    line: u64,
}

impl<'a> Row<'a> {
    fn new(path: &'a Path, record: &'a csv::StringRecord) -> Self {
        let line = record.position().map_or(0, |p| p.line());
        Self { path, record, line }
    }

    fn err(&self, column: usize, detail: impl Into<String>) -> CliError {
        CliError::parse(self.path, self.line, column + 1, detail)
    }

    fn expect_len(&self, n: usize) -> Result<()> {
        if self.record.len() != n {
            return Err(self.err(self.record.len().min(n), format!("expected {n} fields, found {}", self.record.len())));
        }
        Ok(())
    }

    fn str(&self, column: usize) -> &'a str {
        self.record.get(column).unwrap_or("")
    }

    fn parse<T: std::str::FromStr>(&self, column: usize, what: &str) -> Result<T> {
        self.str(column)
            .trim()
            .parse()
            .map_err(|_| self.err(column, format!("invalid {what} `{}`", self.str(column))))
    }

    fn float(&self, column: usize) -> Result<f64> {
        let v: f64 = self.parse(column, "number")?;
        if !v.is_finite() {
            return Err(self.err(column, "non-finite value"));
        }
        Ok(v)
    }
}

fn header_of(path: &Path, r: &mut csv::Reader<File>) -> Result<Vec<String>> {
    Ok(r.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect())
}

fn bad_header(path: &Path, column: usize, detail: impl Into<String>) -> CliError {
    CliError::parse(path, 1, column + 1, detail)
}

pub fn origin_code(o: Origin) -> &'static str {
    match o {
        Origin::Simulated => "simulated",
        Origin::Generated => "gan",
    }
}

/// Feature column names `f_<t>_<j>`, row-major by time step.
pub fn feature_header(q: usize, channels: usize) -> Vec<String> {
    (0..q).flat_map(|t| (0..channels).map(move |j| format!("f_{t}_{j}"))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    pub q: usize,
    pub channels: usize,
    pub samples: Vec<WindowSample>,
}

pub fn write_windows(path: &Path, q: usize, channels: usize, samples: &[WindowSample]) -> Result<()> {
    let mut header: Vec<String> = WINDOW_KEYS.iter().map(|s| s.to_string()).collect();
    header.extend(feature_header(q, channels));
    let mut w = create(path)?;
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for s in samples {
        if s.features.len() != q * channels {
            return Err(dlban_core::Error::Shape {
                node: None,
                detail: format!("sample {} has {} features, expected {}", s.id, s.features.len(), q * channels),
            }
            .into());
        }
        w.write_field(s.id.to_string()).map_err(|e| csv_err(path, e))?;
        w.write_field(s.label.code().to_string()).map_err(|e| csv_err(path, e))?;
        w.write_field(origin_code(s.origin)).map_err(|e| csv_err(path, e))?;
        w.write_field(s.scenario_id.map(|v| v.to_string()).unwrap_or_default())
            .map_err(|e| csv_err(path, e))?;
        for v in &s.features {
            w.write_field(v.to_string()).map_err(|e| csv_err(path, e))?;
        }
        w.write_record(None::<&[u8]>).map_err(|e| csv_err(path, e))?;
    }
    finish(path, w)
}

fn window_shape(path: &Path, header: &[String]) -> Result<(usize, usize)> {
    for (k, key) in WINDOW_KEYS.iter().enumerate() {
        if header.get(k).map(String::as_str) != Some(*key) {
            return Err(bad_header(path, k, format!("expected column `{key}`")));
        }
    }
    let features = &header[WINDOW_KEYS.len()..];
    let channels = features.iter().take_while(|h| h.starts_with("f_0_")).count();
    if channels == 0 || features.len() % channels != 0 || channels % 3 != 0 {
        return Err(bad_header(path, WINDOW_KEYS.len(), "feature columns must be f_<t>_<j> with 3L channels per step"));
    }
    let q = features.len() / channels;
    for (k, (got, want)) in features.iter().zip(feature_header(q, channels)).enumerate() {
        if *got != want {
            return Err(bad_header(path, WINDOW_KEYS.len() + k, format!("expected column `{want}`, found `{got}`")));
        }
    }
    Ok((q, channels))
}

pub fn read_windows(path: &Path) -> Result<WindowTable> {
    let mut r = open(path)?;
    let header = header_of(path, &mut r)?;
    let (q, channels) = window_shape(path, &header)?;
    let mut samples = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = Row::new(path, &rec);
        row.expect_len(header.len())?;
        let id = row.parse(0, "sample id")?;
        let code: i64 = row.parse(1, "label")?;
        let label = Label::from_code(code).ok_or_else(|| row.err(1, format!("label must be 1, 0 or -1, found {code}")))?;
        let origin = match row.str(2) {
            "simulated" => Origin::Simulated,
            "gan" => Origin::Generated,
            other => return Err(row.err(2, format!("origin must be `simulated` or `gan`, found `{other}`"))),
        };
        let scenario_id = match row.str(3).trim() {
            "" => None,
            _ => Some(row.parse(3, "scenario id")?),
        };
        let features = (WINDOW_KEYS.len()..header.len()).map(|c| row.float(c)).collect::<Result<_>>()?;
        samples.push(WindowSample { id, label, origin, scenario_id, features });
    }
    Ok(WindowTable { q, channels, samples })
}

/// Writes `sample_id,partition` with `train` or `test` per sample.
pub fn write_partition(path: &Path, samples: &[WindowSample], train: &[usize], test: &[usize]) -> Result<()> {
    let mut part = vec![""; samples.len()];
    train.iter().for_each(|&i| part[i] = "train");
    test.iter().for_each(|&i| part[i] = "test");
    write_table(
        path,
        &["sample_id", "partition"],
        samples.iter().zip(part).map(|(s, p)| [s.id.to_string(), p.to_string()]),
    )
}

/// Reads a partition file and maps its ids onto positions in `samples`.
pub fn read_partition(path: &Path, samples: &[WindowSample]) -> Result<(Vec<usize>, Vec<usize>)> {
    let index: HashMap<usize, usize> = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut r = open(path)?;
    let header = header_of(path, &mut r)?;
    if header != ["sample_id", "partition"] {
        return Err(bad_header(path, 0, "expected columns `sample_id,partition`"));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = Row::new(path, &rec);
        row.expect_len(2)?;
        let id: usize = row.parse(0, "sample id")?;
        let i = *index.get(&id).ok_or_else(|| row.err(0, format!("sample {id} is not in the dataset")))?;
        match row.str(1) {
            "train" => train.push(i),
            "test" => test.push(i),
            other => return Err(row.err(1, format!("partition must be `train` or `test`, found `{other}`"))),
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn stability_code(s: Stability) -> &'static str {
    s.as_str()
}

/// Writes the scenario table and the long-format trajectory file.
pub fn write_trajectories(scenario_path: &Path, trajectory_path: &Path, samples: &[TrajectorySample]) -> Result<()> {
    write_table(
        scenario_path,
        &SCENARIO_HEADER,
        samples.iter().map(|s| {
            let sc = &s.scenario;
            let (outcome, ambiguous, severity) = match s.truth {
                Some(t) => (stability_code(t.outcome).to_string(), t.ambiguous.to_string(), t.severity.to_string()),
                None => (String::new(), String::new(), String::new()),
            };
            vec![
                s.id.to_string(),
                sc.id.to_string(),
                s.step.to_string(),
                sc.load_level.to_string(),
                sc.motor_fraction.to_string(),
                sc.line_id.to_string(),
                sc.fault_location.to_string(),
                sc.clearing_time.to_string(),
                sc.seed.to_string(),
                s.label.code().to_string(),
                outcome,
                ambiguous,
                severity,
            ]
        }),
    )?;
    let l = samples.first().map_or(0, TrajectorySample::bus_count);
    let mut header = vec!["sample_id".to_string(), "k".to_string()];
    for q in ["u", "p", "q"] {
        header.extend((0..l).map(|b| format!("{q}_{b}")));
    }
    let mut w = create(trajectory_path)?;
    let err = |e| csv_err(trajectory_path, e);
    w.write_record(&header).map_err(err)?;
    let mut field = String::new();
    for s in samples {
        if s.bus_count() != l {
            return Err(CliError::Config("trajectories must share one bus count".into()));
        }
        let id = s.id.to_string();
        for t in 0..s.horizon() {
            w.write_field(&id).map_err(err)?;
            w.write_field(t.to_string()).map_err(err)?;
            for m in [&s.voltage, &s.active, &s.reactive] {
                for &v in m.row_slice(t) {
                    field.clear();
                    std::fmt::Write::write_fmt(&mut field, format_args!("{v:.TRAJECTORY_DECIMALS$}")).expect("string write");
                    w.write_field(&field).map_err(err)?;
                }
            }
            w.write_record(None::<&[u8]>).map_err(err)?;
        }
    }
    finish(trajectory_path, w)
}

fn read_scenarios(path: &Path) -> Result<Vec<TrajectorySample>> {
    let mut r = open(path)?;
    let header = header_of(path, &mut r)?;
    if header != SCENARIO_HEADER {
        return Err(bad_header(path, 0, format!("expected columns `{}`", SCENARIO_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = Row::new(path, &rec);
        row.expect_len(SCENARIO_HEADER.len())?;
        let scenario = Scenario {
            id: row.parse(1, "scenario id")?,
            load_level: row.float(3)?,
            motor_fraction: row.float(4)?,
            line_id: row.parse(5, "line id")?,
            fault_location: row.float(6)?,
            clearing_time: row.float(7)?,
            seed: row.parse(8, "seed")?,
        };
        let code: i64 = row.parse(9, "prelabel")?;
        let label = Label::from_code(code).ok_or_else(|| row.err(9, "prelabel must be 1, 0 or -1"))?;
        let truth = match row.str(10) {
            "" => None,
            o => Some(GroundTruth {
                outcome: match o {
                    "stable" => Stability::Stable,
                    "unstable" => Stability::Unstable,
                    _ => return Err(row.err(10, format!("unknown outcome `{o}`"))),
                },
                ambiguous: row.parse(11, "boolean")?,
                severity: row.float(12)?,
            }),
        };
        out.push(TrajectorySample {
            id: row.parse(0, "sample id")?,
            step: row.float(2)?,
            voltage: DenseArray::zeros(&[0, 0]),
            active: DenseArray::zeros(&[0, 0]),
            reactive: DenseArray::zeros(&[0, 0]),
            label,
            origin: Origin::Simulated,
            scenario,
            truth,
        });
    }
    Ok(out)
}

/// Reads the scenario table and the trajectory file written by
/// [`write_trajectories`], in scenario-table order.
pub fn read_trajectories(scenario_path: &Path, trajectory_path: &Path) -> Result<Vec<TrajectorySample>> {
    let mut samples = read_scenarios(scenario_path)?;
    let index: HashMap<usize, usize> = samples.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let path = trajectory_path;
    let mut r = open(path)?;
    let header = header_of(path, &mut r)?;
    if header.len() < 5 || (header.len() - 2) % 3 != 0 || header[0] != "sample_id" || header[1] != "k" {
        return Err(bad_header(path, 0, "expected `sample_id,k` followed by u_*, p_*, q_* columns"));
    }
    let l = (header.len() - 2) / 3;
    let mut rows: Vec<[Vec<f64>; 3]> = vec![Default::default(); samples.len()];
    let mut steps = vec![0usize; samples.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = Row::new(path, &rec);
        row.expect_len(header.len())?;
        let id: usize = row.parse(0, "sample id")?;
        let i = *index.get(&id).ok_or_else(|| row.err(0, format!("sample {id} has no scenario entry")))?;
        let k: usize = row.parse(1, "step index")?;
        if k != steps[i] {
            return Err(row.err(1, format!("expected step {} of sample {id}, found {k}", steps[i])));
        }
        steps[i] += 1;
        for (c, dest) in rows[i].iter_mut().enumerate() {
            for b in 0..l {
                dest.push(row.float(2 + c * l + b)?);
            }
        }
    }
    for ((s, [u, p, q]), h) in samples.iter_mut().zip(rows).zip(steps) {
        if h == 0 {
            return Err(CliError::parse(path, 0, 0, format!("sample {} has no trajectory rows", s.id)));
        }
        s.voltage = DenseArray::matrix(h, l, u)?;
        s.active = DenseArray::matrix(h, l, p)?;
        s.reactive = DenseArray::matrix(h, l, q)?;
    }
    Ok(samples)
}

fn window_file_header(bus_count: usize) -> Vec<String> {
    ["u", "p", "q"]
        .iter()
        .flat_map(|q| (0..bus_count).map(move |b| format!("{q}_{b}")))
        .collect()
}

/// Writes one `q × 3L` observation window, one time step per row.
pub fn write_window_file(path: &Path, window: &DenseArray) -> Result<()> {
    let (q, m) = window.dims2();
    if m % 3 != 0 {
        return Err(CliError::Config("window width must be 3L".into()));
    }
    let header = window_file_header(m / 3);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &header, (0..q).map(|t| window.row_slice(t).iter().map(|v| v.to_string()).collect::<Vec<_>>()))
}

/// Reads a window written by [`write_window_file`].
pub fn read_window_file(path: &Path) -> Result<DenseArray> {
    let mut r = open(path)?;
    let header = header_of(path, &mut r)?;
    if header.is_empty() || header.len() % 3 != 0 {
        return Err(bad_header(path, header.len(), "expected 3L columns u_*, p_*, q_*"));
    }
    for (k, (got, want)) in header.iter().zip(window_file_header(header.len() / 3)).enumerate() {
        if *got != want {
            return Err(bad_header(path, k, format!("expected column `{want}`, found `{got}`")));
        }
    }
    let mut data = Vec::new();
    let mut q = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = Row::new(path, &rec);
        row.expect_len(header.len())?;
        for c in 0..header.len() {
            data.push(row.float(c)?);
        }
        q += 1;
    }
    if q == 0 {
        return Err(CliError::parse(path, 2, 1, "window file has no rows"));
    }
    Ok(DenseArray::matrix(q, header.len(), data)?)
}
