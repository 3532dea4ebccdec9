use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{mean_std, EpisodeRecord, LearningCurve};
use super::{SweepRow, Variant};
use crate::error::{Error, Result};

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn run_csv(&self, variant: Variant, seed: u64) -> PathBuf {
        self.dir.join(format!("run_{variant}_seed{seed}.csv"))
    }

    pub fn aggregate_csv(&self) -> PathBuf {
        self.dir.join("aggregate.csv")
    }

    pub fn plot_svg(&self) -> PathBuf {
        self.dir.join("learning_curves.svg")
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.dir.join("sweep_k.csv")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join("summary.json")
    }

    pub fn audit(&self) -> PathBuf {
        self.dir.join("audit.jsonl")
    }

    /// Per-run CSVs found in the directory, sorted by name.
    pub fn find_run_csvs(&self) -> Result<Vec<PathBuf>> {
        let entries = std::fs::read_dir(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let mut out = Vec::new();
        for e in entries {
            let path = e.map_err(|e| Error::io(&self.dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("run_") && name.ends_with(".csv") {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn write_run_csv<W: Write>(w: W, curve: &LearningCurve) -> Result<()> {
    write_rows(w, &curve.records)
}

/// Parse and validate a per-run CSV.
pub fn read_run_csv<R: Read>(r: R) -> Result<LearningCurve> {
    let mut reader = csv::Reader::from_reader(r);
    let mut records = Vec::new();
    for row in reader.deserialize() {
        let rec: EpisodeRecord = row?;
        rec.validate()?;
        records.push(rec);
    }
    Ok(LearningCurve { records })
}

/// Mean and spread over seeds at one episode of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub episode: usize,
    pub n: usize,
    pub eval_success_mean: f64,
    pub eval_success_std: f64,
    pub eval_reward_mean: f64,
    pub eval_reward_std: f64,
}

pub fn aggregate_curves(curves: &[LearningCurve]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(Variant, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in curves.iter().flat_map(|c| &c.records) {
        let g = groups.entry((r.variant, r.episode)).or_default();
        g.0.push(r.eval_success_rate);
        g.1.push(r.eval_avg_reward);
    }
    groups
        .into_iter()
        .map(|((variant, episode), (sr, rw))| {
            let (eval_success_mean, eval_success_std) = mean_std(&sr);
            let (eval_reward_mean, eval_reward_std) = mean_std(&rw);
            AggregateRow {
                variant,
                episode,
                n: sr.len(),
                eval_success_mean,
                eval_success_std,
                eval_reward_mean,
                eval_reward_std,
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(w: W, rows: &[AggregateRow]) -> Result<()> {
    write_rows(w, rows)
}

pub fn read_aggregate_csv<R: Read>(r: R) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        let a: AggregateRow = row?;
        if !(0.0..=1.0).contains(&a.eval_success_mean) || !a.eval_success_std.is_finite() || a.episode == 0 {
            return Err(Error::Config(format!("invalid aggregate row for {} episode {}", a.variant, a.episode)));
        }
        rows.push(a);
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    write_rows(w, rows)
}

fn colour(v: Variant) -> &'static str {
    match v {
        Variant::Dqn => "#7f7f7f",
        Variant::Lu => "#1f77b4",
        Variant::Lh => "#2ca02c",
        Variant::Lhu => "#ff7f0e",
        Variant::Lhua => "#d62728",
    }
}

/// Mean eval success per variant against episode, with a ±1 std band.
pub fn plot_svg(rows: &[AggregateRow]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 120.0;
    const TOP: f64 = 20.0;
    const BOTTOM: f64 = 50.0;
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let max_ep = rows.iter().map(|r| r.episode).max().unwrap_or(1).max(2) as f64;
    let x = |ep: usize| LEFT + (ep as f64 - 1.0) / (max_ep - 1.0) * pw;
    let y = |v: f64| TOP + (1.0 - v.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#e0e0e0"/>"##, y(v), LEFT + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#, LEFT - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="start">1</text>"#, LEFT, TOP + ph + 18.0);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT + pw, TOP + ph + 18.0, max_ep);
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#, LEFT + pw / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">success rate</text>"#, TOP + ph / 2.0, TOP + ph / 2.0);

    let mut by_variant: BTreeMap<Variant, Vec<&AggregateRow>> = BTreeMap::new();
    for r in rows {
        by_variant.entry(r.variant).or_default().push(r);
    }
    for (i, (variant, mut pts)) in by_variant.into_iter().enumerate() {
        pts.sort_by_key(|r| r.episode);
        let c = colour(variant);
        let upper: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.episode), y(r.eval_success_mean + r.eval_success_std)))
            .collect();
        let lower: Vec<String> = pts
            .iter()
            .rev()
            .map(|r| format!("{:.2},{:.2}", x(r.episode), y(r.eval_success_mean - r.eval_success_std)))
            .collect();
        let _ = writeln!(s, r#"<polygon points="{} {}" fill="{c}" fill-opacity="0.15" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", x(r.episode), y(r.eval_success_mean)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{c}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, variant.name().to_uppercase());
    }
    s.push_str("</svg>\n");
    s
}

/// Write every per-run CSV, the aggregate CSV and the plot under `paths`.
pub fn emit_outputs(curves: &[LearningCurve], paths: &RunPaths) -> Result<Vec<AggregateRow>> {
    for c in curves {
        let (Some(variant), Some(seed)) = (c.variant(), c.seed()) else {
            continue;
        };
        write_run_csv(create(&paths.run_csv(variant, seed))?, c)?;
    }
    let rows = aggregate_curves(curves);
    write_aggregate_csv(create(&paths.aggregate_csv())?, &rows)?;
    let svg_path = paths.plot_svg();
    create(&svg_path)?
        .write_all(plot_svg(&rows).as_bytes())
        .map_err(|e| Error::io(&svg_path, e))?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::EpisodeRecord;

    fn run(variant: Variant, seed: u64, srs: &[f64]) -> LearningCurve {
        LearningCurve {
            records: srs
                .iter()
                .enumerate()
                .map(|(i, &v)| EpisodeRecord {
                    variant,
                    seed,
                    episode: i + 1,
                    eval_success_rate: v,
                    eval_avg_reward: 10.0 * v,
                    train_success_rate: v,
                    train_avg_reward: 0.0,
                    k_chosen: 3,
                    real_buffer: i,
                    sim_buffer: 2 * i,
                    hindsight_dialogs: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn run_csv_round_trip() {
        let c = run(Variant::Lhua, 4, &[0.0, 0.1, 0.30000000000000004]);
        let mut buf = Vec::new();
        write_run_csv(&mut buf, &c).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("variant,seed,episode,eval_success_rate,eval_avg_reward,train_success_rate,train_avg_reward,k_chosen,real_buffer,sim_buffer,hindsight_dialogs\n"));
        assert!(text.contains("\nlhua,4,1,"));
        assert_eq!(read_run_csv(buf.as_slice()).unwrap(), c);
        assert!(read_run_csv("variant,seed\nlhua,1\n".as_bytes()).is_err());
        let bad = text.replace("lhua,4,2,0.1", "lhua,4,2,1.5");
        assert!(read_run_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn aggregation_means() {
        let curves: Vec<_> = (0..5).map(|s| run(Variant::Lh, s, &[s as f64 / 10.0, 0.5])).collect();
        let rows = aggregate_curves(&curves);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].n, 5);
        assert!((rows[0].eval_success_mean - 0.2).abs() < 1e-12);
        assert_eq!(rows[1].eval_success_mean, 0.5);
        assert_eq!(rows[1].eval_success_std, 0.0);
        let mut buf = Vec::new();
        write_aggregate_csv(&mut buf, &rows).unwrap();
        assert_eq!(read_aggregate_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn emit_is_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let paths = RunPaths::new(dir.path().join("out"));
        let curves = vec![run(Variant::Dqn, 0, &[0.0, 0.2, 0.4]), run(Variant::Lhua, 0, &[0.1, 0.5, 0.9])];
        emit_outputs(&curves, &paths).unwrap();
        let first: Vec<Vec<u8>> = [paths.run_csv(Variant::Dqn, 0), paths.aggregate_csv(), paths.plot_svg()]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        emit_outputs(&curves, &paths).unwrap();
        for (p, before) in [paths.run_csv(Variant::Dqn, 0), paths.aggregate_csv(), paths.plot_svg()].iter().zip(&first) {
            assert_eq!(&std::fs::read(p).unwrap(), before);
        }
        assert_eq!(paths.find_run_csvs().unwrap().len(), 2);
        let svg = String::from_utf8(first[2].clone()).unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("LHUA") && svg.trim_end().ends_with("</svg>"));
    }
}
