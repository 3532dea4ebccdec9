//! Replays the checked-in fuzz seeds, plus every truncation of each seed,
//! through the same checks the fuzz targets run.

use std::fs;
use std::path::PathBuf;

use lhua::agent::QAgent;
use lhua::harness::{plot_svg, read_aggregate_csv, read_run_csv, write_run_csv, PolicyCheckpoint, RunConfig};
use lhua::hindsight::{read_audit, write_audit};
use lhua::nn::NetworkCheckpoint;
use lhua::ontology::{enumerate_subgoals, sample_goal, Domain};
use lhua::seed::{stream, Stream};

fn corpus_dir(target: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target)
}

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = corpus_dir(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Runs `check` on every seed and on each of its prefixes; returns how many
/// whole seeds were accepted.
fn replay(target: &str, check: impl Fn(&[u8]) -> bool) -> usize {
    let mut accepted = 0;
    for (_, data) in seeds(target) {
        for cut in (0..data.len()).step_by(7) {
            check(&data[..cut]);
        }
        accepted += usize::from(check(&data));
    }
    accepted
}

fn ontology(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(domain) = Domain::from_json(text) else { return false };
    if let Ok(goal) = sample_goal(&domain.templates, &mut stream(0, Stream::Goals)) {
        goal.validate(&domain.ontology).unwrap();
        if goal.size() <= 8 {
            assert_eq!(enumerate_subgoals(&goal).len(), (1usize << goal.size()) - 1);
        }
    }
    true
}

fn run_config(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(config) = RunConfig::from_json(text) else { return false };
    let again = serde_json::to_string(&config).unwrap();
    assert_eq!(RunConfig::from_json(&again).unwrap(), config);
    true
}

fn network_checkpoint(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(cp) = NetworkCheckpoint::from_json(text) else { return false };
    let (net, _) = cp.restore().unwrap();
    assert!(net.forward(&vec![0.5; net.input_dim()]).unwrap().iter().all(|v| v.is_finite()));
    true
}

fn policy_checkpoint(data: &[u8]) -> bool {
    let Ok(text) = std::str::from_utf8(data) else { return false };
    let Ok(cp) = PolicyCheckpoint::from_json(text) else { return false };
    QAgent::from_checkpoint(&cp.agent).is_ok()
}

fn audit(data: &[u8]) -> bool {
    let Ok(records) = read_audit(data) else { return false };
    let mut buf = Vec::new();
    write_audit(&mut buf, &records).unwrap();
    assert_eq!(read_audit(buf.as_slice()).unwrap().len(), records.len());
    true
}

fn run_csv(data: &[u8]) -> bool {
    let Ok(curve) = read_run_csv(data) else { return false };
    let mut buf = Vec::new();
    write_run_csv(&mut buf, &curve).unwrap();
    assert_eq!(read_run_csv(buf.as_slice()).unwrap(), curve);
    true
}

fn aggregate(data: &[u8]) -> bool {
    let Ok(rows) = read_aggregate_csv(data) else { return false };
    assert!(plot_svg(&rows).ends_with("</svg>\n"));
    true
}

#[test]
fn ontology_seeds() {
    // empty_slots.json is a deliberately invalid seed.
    assert_eq!(replay("ontology_json", ontology), 2);
    assert!(!ontology(&fs::read(corpus_dir("ontology_json").join("empty_slots.json")).unwrap()));
}

#[test]
fn run_config_seeds() {
    assert_eq!(replay("run_config_json", run_config), seeds("run_config_json").len());
}

#[test]
fn network_checkpoint_seeds() {
    assert_eq!(replay("network_checkpoint_json", network_checkpoint), 1);
}

#[test]
fn policy_checkpoint_seeds() {
    assert_eq!(replay("policy_checkpoint_json", policy_checkpoint), 1);
}

#[test]
fn audit_seeds() {
    assert_eq!(replay("audit_jsonl", audit), 1);
}

#[test]
fn run_csv_seeds() {
    assert_eq!(replay("run_csv", run_csv), 1);
}

#[test]
fn aggregate_seeds() {
    assert_eq!(replay("aggregate_csv", aggregate), 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 2);
}
