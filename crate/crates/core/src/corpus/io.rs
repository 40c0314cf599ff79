use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::index::parse_entry_name;
use super::{
    AnnotationTrack, Channel, CorpusError, Recording, Result, TimeUnit, ANNOTATION_STEP,
    RATING_MAX, RATING_MIN, SAMPLE_RATE,
};

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads the named columns (in that order). Empty cells read as NaN so the
/// caller reports them as non-finite.
fn read_columns(path: &Path, wanted: &[&str]) -> Result<Table> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let header = reader
        .headers()
        .map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let mut positions = Vec::with_capacity(wanted.len());
    for w in wanted {
        match names.iter().position(|n| n == w) {
            Some(p) => positions.push(p),
            None => {
                return Err(CorpusError::MissingColumn {
                    path: path.to_path_buf(),
                    column: (*w).to_string(),
                })
            }
        }
    }
    let mut rows = Vec::new();
    let mut record = csv::ByteRecord::new();
    let mut row = 0usize;
    loop {
        match reader.read_byte_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                return Err(CorpusError::Parse {
                    path: path.to_path_buf(),
                    detail: e.to_string(),
                })
            }
        }
        let mut values = Vec::with_capacity(positions.len());
        for (&p, w) in positions.iter().zip(wanted) {
            let raw = record.get(p).unwrap_or(b"");
            let text = std::str::from_utf8(raw).unwrap_or("").trim();
            let v = if text.is_empty() {
                f64::NAN
            } else {
                text.parse::<f64>().map_err(|_| CorpusError::Parse {
                    path: path.to_path_buf(),
                    detail: format!("row {row}, column `{w}`: cannot parse {text:?}"),
                })?
            };
            values.push(v);
        }
        rows.push(values);
        row += 1;
    }
    Ok(Table {
        headers: wanted.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

fn check_finite(path: &Path, table: &Table) -> Result<()> {
    for (r, row) in table.rows.iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteSample {
                path: path.to_path_buf(),
                row: r,
                column: table.headers[c].clone(),
            });
        }
    }
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Neither 1 kHz nor 20 Hz in seconds has a step of half a unit or more, so a
/// median step at or above 0.5 means milliseconds.
fn detect_unit(raw_times: &[f64]) -> TimeUnit {
    if raw_times.len() < 2 {
        return TimeUnit::Seconds;
    }
    let deltas: Vec<f64> = raw_times.windows(2).map(|w| w[1] - w[0]).collect();
    if median(deltas) >= 0.5 {
        TimeUnit::Milliseconds
    } else {
        TimeUnit::Seconds
    }
}

const PHYSIOLOGY_COLUMNS: [&str; 9] = [
    "time", "ecg", "bvp", "gsr", "rsp", "skt", "emg_zygo", "emg_coru", "emg_trap",
];

/// Loads a physiology CSV. Subject and video come from the `sub_S_vid_V.csv`
/// file name.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let (subject_id, video_id) = parse_entry_name(path)?;
    let table = read_columns(path, &PHYSIOLOGY_COLUMNS)?;
    if table.rows.is_empty() {
        return Err(CorpusError::Parse {
            path: path.to_path_buf(),
            detail: "no data rows".into(),
        });
    }
    check_finite(path, &table)?;
    let raw_t: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let unit = detect_unit(&raw_t);
    let scale = unit.to_seconds();
    let times: Vec<f64> = raw_t.iter().map(|t| t * scale).collect();
    if times.len() >= 2 {
        let deltas: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let step = median(deltas.clone());
        let rate = 1.0 / step;
        if !((rate - SAMPLE_RATE).abs() <= 0.01 * SAMPLE_RATE) {
            return Err(CorpusError::UnsupportedSampleRate {
                path: path.to_path_buf(),
                rate,
            });
        }
        let nominal = 1.0 / SAMPLE_RATE;
        if let Some(i) = deltas
            .iter()
            .position(|d| (d - nominal).abs() > 0.1 * nominal)
        {
            return Err(CorpusError::NonUniformSampling {
                path: path.to_path_buf(),
                row: i + 1,
                detail: format!("step of {:.6} s, expected {nominal} s", deltas[i]),
            });
        }
    }
    let mut channels: [Vec<f64>; 8] = Default::default();
    for ch in Channel::ALL {
        channels[ch.index()] = table.rows.iter().map(|r| r[ch.index() + 1]).collect();
    }
    Ok(Recording {
        subject_id,
        video_id,
        sample_rate: SAMPLE_RATE,
        t0: times[0],
        time_unit: unit,
        channels,
    })
}

fn check_grid(path: &Path, times: &[f64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        let d = w[1] - w[0];
        if (d - ANNOTATION_STEP).abs() > 1e-6 {
            return Err(CorpusError::NonUniformSampling {
                path: path.to_path_buf(),
                row: i + 1,
                detail: format!("step of {d:.6} s, expected {ANNOTATION_STEP} s"),
            });
        }
    }
    Ok(())
}

/// Loads `time,valence,arousal` ratings.
pub fn load_annotations(path: &Path) -> Result<AnnotationTrack> {
    let table = read_columns(path, &["time", "valence", "arousal"])?;
    check_finite(path, &table)?;
    for (r, row) in table.rows.iter().enumerate() {
        for c in 1..3 {
            let v = row[c];
            if !(RATING_MIN..=RATING_MAX).contains(&v) {
                return Err(CorpusError::RangeViolation {
                    path: path.to_path_buf(),
                    row: r,
                    column: table.headers[c].clone(),
                    value: v,
                });
            }
        }
    }
    let raw_t: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let unit = detect_unit(&raw_t);
    let timestamps: Vec<f64> = raw_t.iter().map(|t| t * unit.to_seconds()).collect();
    check_grid(path, &timestamps)?;
    Ok(AnnotationTrack {
        timestamps,
        valence: table.rows.iter().map(|r| r[1]).collect(),
        arousal: table.rows.iter().map(|r| r[2]).collect(),
        time_unit: unit,
    })
}

/// Reads only the `time` column of an annotation file, for test files whose
/// ratings are withheld.
pub fn load_annotation_grid(path: &Path) -> Result<Vec<f64>> {
    let table = read_columns(path, &["time"])?;
    check_finite(path, &table)?;
    let raw_t: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let unit = detect_unit(&raw_t);
    let timestamps: Vec<f64> = raw_t.iter().map(|t| t * unit.to_seconds()).collect();
    check_grid(path, &timestamps)?;
    Ok(timestamps)
}

fn fmt_value(v: f64, decimals: Option<usize>) -> String {
    match decimals {
        Some(d) => {
            let s = format!("{v:.d$}");
            // avoid "-0.000"
            if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
                s[1..].to_string()
            } else {
                s
            }
        }
        None => format!("{v}"),
    }
}

fn fmt_time(t_seconds: f64, unit: TimeUnit) -> String {
    match unit {
        TimeUnit::Milliseconds => {
            let ms = t_seconds * 1e3;
            let rounded = ms.round();
            // keep integral milliseconds integral on disk
            if (ms - rounded).abs() < 1e-6 {
                format!("{rounded}")
            } else {
                format!("{ms}")
            }
        }
        TimeUnit::Seconds => format!("{t_seconds}"),
    }
}

/// Writes a physiology CSV in the load format. `decimals` fixes the sample
/// precision; `None` writes the shortest exact representation.
pub fn save_recording(path: &Path, rec: &Recording, decimals: Option<usize>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::with_capacity(64 * 1024);
    body.push_str(&PHYSIOLOGY_COLUMNS.join(","));
    body.push('\n');
    let t0_ticks = (rec.t0 * rec.sample_rate).round();
    let on_grid = (rec.t0 * rec.sample_rate - t0_ticks).abs() < 1e-6;
    for i in 0..rec.len() {
        let t = if on_grid {
            (t0_ticks + i as f64) / rec.sample_rate
        } else {
            rec.t0 + i as f64 / rec.sample_rate
        };
        body.push_str(&fmt_time(t, rec.time_unit));
        for ch in Channel::ALL {
            body.push(',');
            body.push_str(&fmt_value(rec.channel(ch)[i], decimals));
        }
        body.push('\n');
        if body.len() > 60 * 1024 {
            w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
            body.clear();
        }
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn save_annotations(path: &Path, track: &AnnotationTrack, decimals: Option<usize>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut body = String::from("time,valence,arousal\n");
    for i in 0..track.len() {
        body.push_str(&format!(
            "{},{},{}\n",
            fmt_time(track.timestamps[i], track.time_unit),
            fmt_value(track.valence[i], decimals),
            fmt_value(track.arousal[i], decimals)
        ));
    }
    w.write_all(body.as_bytes()).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn physiology_csv(rows: usize, step_ms: impl Fn(usize) -> f64) -> String {
        let mut s = String::from("time,ecg,bvp,gsr,rsp,skt,emg_zygo,emg_coru,emg_trap\n");
        let mut t = 0.0;
        for i in 0..rows {
            s.push_str(&format!("{t},{},0,1,2,3,4,5,6\n", i as f64 * 0.01));
            t += step_ms(i);
        }
        s
    }

    #[test]
    fn loads_fifty_seconds_in_ms() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "sub_1_vid_2.csv", &physiology_csv(50_000, |_| 1.0));
        let rec = load_recording(&p).unwrap();
        assert_eq!(rec.len(), 50_000);
        assert_eq!((rec.subject_id, rec.video_id), (1, 2));
        assert_eq!(rec.time_unit, TimeUnit::Milliseconds);
        assert!((rec.duration() - 50.0).abs() < 1e-12);
        assert_eq!(rec.channel(Channel::Skt)[10], 3.0);
    }

    #[test]
    fn seconds_time_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = String::from("time,ecg,bvp,gsr,rsp,skt,emg_zygo,emg_coru,emg_trap\n");
        for i in 0..100 {
            s.push_str(&format!("{},0,0,0,0,0,0,0,0\n", 3.0 + i as f64 * 0.001));
        }
        let p = write(dir.path(), "sub_1_vid_2.csv", &s);
        let rec = load_recording(&p).unwrap();
        assert_eq!(rec.time_unit, TimeUnit::Seconds);
        assert!((rec.t0 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "sub_1_vid_2.csv",
            "time,ecg,bvp,gsr,skt,emg_zygo,emg_coru,emg_trap\n0,0,0,0,0,0,0,0\n",
        );
        match load_recording(&p) {
            Err(CorpusError::MissingColumn { column, .. }) => assert_eq!(column, "rsp"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gap_is_non_uniform() {
        let dir = tempfile::tempdir().unwrap();
        let body = physiology_csv(500, |i| if i == 99 { 5.0 } else { 1.0 });
        let p = write(dir.path(), "sub_1_vid_2.csv", &body);
        match load_recording(&p) {
            Err(CorpusError::NonUniformSampling { row, .. }) => assert_eq!(row, 100),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = physiology_csv(20, |_| 1.0);
        body = body.replacen("\n7,0.07,", "\n7,NaN,", 1);
        let p = write(dir.path(), "sub_1_vid_2.csv", &body);
        match load_recording(&p) {
            Err(CorpusError::NonFiniteSample { row, column, .. }) => {
                assert_eq!((row, column.as_str()), (7, "ecg"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "sub_1_vid_2.csv", &physiology_csv(100, |_| 2.0));
        assert!(matches!(load_recording(&p), Err(CorpusError::UnsupportedSampleRate { .. })));
    }

    fn annotation_csv(rows: usize, value: impl Fn(usize) -> f64) -> String {
        let mut s = String::from("time,valence,arousal\n");
        for i in 0..rows {
            s.push_str(&format!("{},{},5\n", i * 50, value(i)));
        }
        s
    }

    #[test]
    fn annotations_load_and_validate() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", &annotation_csv(1000, |i| 0.5 + (i % 10) as f64));
        let track = load_annotations(&p).unwrap();
        assert_eq!(track.len(), 1000);
        assert!((track.duration() - 49.95).abs() < 1e-9);

        let p = write(dir.path(), "b.csv", &annotation_csv(20, |i| if i == 7 { 9.6 } else { 5.0 }));
        match load_annotations(&p) {
            Err(CorpusError::RangeViolation { row, value, .. }) => {
                assert_eq!(row, 7);
                assert_eq!(value, 9.6);
            }
            other => panic!("{other:?}"),
        }

        let p = write(dir.path(), "c.csv", &annotation_csv(100, |_| 5.0));
        let track = load_annotations(&p).unwrap();
        assert_eq!(crate::dsp::mean(&track.valence), 5.0);

        let p = write(dir.path(), "d.csv", "time,valence,arousal\n0,5,5\n50,5,5\n120,5,5\n");
        assert!(matches!(load_annotations(&p), Err(CorpusError::NonUniformSampling { row: 2, .. })));

        let p = write(dir.path(), "e.csv", "time,valence,arousal\n0,,\n50,,\n");
        assert_eq!(load_annotation_grid(&p).unwrap(), vec![0.0, 0.05]);
    }

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut channels: [Vec<f64>; 8] = Default::default();
        for (k, ch) in channels.iter_mut().enumerate() {
            *ch = (0..300).map(|i| ((i * (k + 3)) as f64).sin() * 1.234567891234).collect();
        }
        let rec = Recording {
            subject_id: 4,
            video_id: 21,
            sample_rate: 1000.0,
            t0: 40.0,
            time_unit: TimeUnit::Milliseconds,
            channels,
        };
        let p = dir.path().join("sub_4_vid_21.csv");
        save_recording(&p, &rec, None).unwrap();
        let back = load_recording(&p).unwrap();
        assert_eq!(back.t0, rec.t0);
        for ch in Channel::ALL {
            for (a, b) in back.channel(ch).iter().zip(rec.channel(ch)) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        save_recording(&p, &back, None).unwrap();
        assert_eq!(load_recording(&p).unwrap(), back);
    }
}
