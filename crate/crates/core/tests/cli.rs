//! End-to-end checks of the `beliefmem` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use beliefmem::bank::load_snapshot;
use beliefmem::{read, HashEmbedder, Query};

const TIMEOUTS: &str = "\
@obs t1
api_x | status | failed | 0.7
api_x | status | rate limited | 0.6
@obs t2
api_x | status | failed | 0.7
api_x | status | rate limited | 0.6
@obs t3
api_x | status | operational | 0.95 | | !failed,!rate limited
";

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        self.run_with(args, &self.path("snapshot.json"))
    }

    fn run_with(&self, args: &[&str], snapshot: &Path) -> Output {
        Command::new(env!("CARGO_BIN_EXE_beliefmem"))
            .args(args)
            .arg("--journal")
            .arg(self.path("journal.ndjson"))
            .arg("--snapshot")
            .arg(snapshot)
            .arg("--metrics-dir")
            .arg(self.path("metrics"))
            .env_remove("BELIEFMEM_EXTRACTOR_URL")
            .env_remove("BELIEFMEM_EMBEDDER_URL")
            .output()
            .unwrap()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn digest_line(o: &Output) -> String {
    stdout(o)
        .lines()
        .find(|l| l.starts_with("digest: "))
        .expect("replay prints a digest")
        .to_owned()
}

#[test]
fn ingest_then_query_matches_library_read() {
    let ws = Workspace::new();
    let input = ws.write("obs.txt", TIMEOUTS);
    let ingest = ws.run(&["ingest", input.to_str().unwrap()]);
    assert_eq!(ingest.status.code(), Some(0), "{}", String::from_utf8_lossy(&ingest.stderr));

    let query = ws.run(&["query", "api x status"]);
    assert_eq!(query.status.code(), Some(0));
    let text = stdout(&query);

    let bank = load_snapshot(&fs::read_to_string(ws.path("snapshot.json")).unwrap()).unwrap();
    let result = read(&bank, &Query::new("api x status", bank.config()), &HashEmbedder::default()).unwrap();
    let top = &result.entries[0];
    assert!(text.contains(&format!("score={:.6}", top.score)), "{text}");
    for c in &top.candidates {
        assert!(text.contains(&format!("{:.6}  {}", c.probability.get(), c.hypothesis)), "{text}");
    }
    assert!(text.contains("0.900000  operational"));
    assert!(text.contains("0.250000  failed"));
}

#[test]
fn query_as_of_reads_history() {
    let ws = Workspace::new();
    let input = ws.write("obs.txt", TIMEOUTS);
    assert_eq!(ws.run(&["ingest", input.to_str().unwrap()]).status.code(), Some(0));
    let past = stdout(&ws.run(&["query", "api x status", "--as-of", "2"]));
    assert!(past.contains("0.910000  failed"), "{past}");
    assert!(past.contains("0.880000  rate limited"), "{past}");
    assert!(!past.contains("operational"));
    let future = ws.run(&["query", "api x status", "--as-of", "9"]);
    assert_eq!(future.status.code(), Some(1));
}

#[test]
fn double_replay_gives_equal_digests() {
    let ws = Workspace::new();
    let input = ws.write("obs.txt", TIMEOUTS);
    assert_eq!(ws.run(&["ingest", input.to_str().unwrap()]).status.code(), Some(0));
    let journal = ws.path("journal.ndjson");
    let a = ws.run_with(&["replay", journal.to_str().unwrap()], &ws.path("a.json"));
    let b = ws.run_with(&["replay", journal.to_str().unwrap()], &ws.path("b.json"));
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(digest_line(&a), digest_line(&b));
    assert_eq!(fs::read(ws.path("a.json")).unwrap(), fs::read(ws.path("b.json")).unwrap());
    assert_eq!(fs::read(ws.path("a.json")).unwrap(), fs::read(ws.path("snapshot.json")).unwrap());
}

#[test]
fn stats_and_dump() {
    let ws = Workspace::new();
    let input = ws.write("obs.txt", TIMEOUTS);
    assert_eq!(ws.run(&["ingest", input.to_str().unwrap()]).status.code(), Some(0));
    let stats = stdout(&ws.run(&["stats"]));
    assert!(stats.contains("entries: 1"), "{stats}");
    assert!(stats.contains("logical clock: 3"), "{stats}");
    let dump = ws.run(&["dump", "--attribute", "api x|status"]);
    assert_eq!(dump.status.code(), Some(0));
    assert!(stdout(&dump).contains("operational"));
}

#[test]
fn adversarial_experiment_writes_metrics() {
    let ws = Workspace::new();
    let out = ws.run(&["exp", "adversarial", "--spec", "default"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let body = fs::read_to_string(ws.path("metrics/adversarial-belief-seed0.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert!(doc["correction_rate"].as_f64().unwrap() > 0.0);
    assert!(doc["mean_steps"].as_f64().is_some());
    assert!(doc["spec"].is_object());
    let again = ws.run(&["exp", "adversarial", "--spec", "default"]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(body, fs::read_to_string(ws.path("metrics/adversarial-belief-seed0.json")).unwrap());
}

#[test]
fn exit_codes_by_category() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(2));
    let missing = ws.path("missing.txt");
    assert_eq!(ws.run(&["ingest", missing.to_str().unwrap()]).status.code(), Some(3));
    let bad = ws.write("bad.txt", "api | status | up | 1.7\n");
    assert_eq!(ws.run(&["ingest", bad.to_str().unwrap()]).status.code(), Some(1));
    let torn = ws.write("torn.ndjson", "{\"schema_version\":1,\"seq\":1");
    assert_eq!(ws.run(&["replay", torn.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn duplicate_observation_ids_are_rejected() {
    let ws = Workspace::new();
    let input = ws.write("obs.txt", TIMEOUTS);
    assert_eq!(ws.run(&["ingest", input.to_str().unwrap()]).status.code(), Some(0));
    let again = ws.run(&["ingest", input.to_str().unwrap()]);
    assert_ne!(again.status.code(), Some(0));
    let stats = stdout(&ws.run(&["stats"]));
    assert!(stats.contains("logical clock: 3"), "{stats}");
}

#[test]
fn replay_of_missing_journal_is_an_io_error() {
    let ws = Workspace::new();
    let missing = ws.path("nope.ndjson");
    assert_eq!(ws.run(&["replay", missing.to_str().unwrap()]).status.code(), Some(3));
}
