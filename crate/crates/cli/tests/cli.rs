use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use skillforge::demo::{self, e2e};
use skillforge::embedding::Embedding;
use skillforge::library::{NewSkill, Origin, SkillLibrary};
use skillforge::llm::{Embedder, HashEmbedder};
use skillforge::orchestrator::{compute_stats, read_logs, Mode, OrchestratorConfig, SNAPSHOT_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_skillforge"))
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "off").output().expect("spawn skillforge")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

struct Fixture {
    dir: tempfile::TempDir,
    config: PathBuf,
}

impl Fixture {
    fn new(mode: Mode) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = e2e::write_fixture(dir.path(), mode).unwrap();
        Fixture { dir, config }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn cfg(&self) -> &str {
        self.config.to_str().unwrap()
    }

    fn run(&self, verb: &str, extra: &[&str]) -> Output {
        let mut args = vec![verb, "--config", self.cfg()];
        args.extend_from_slice(extra);
        exec(&args)
    }
}

fn logs(dir: &Path) -> (String, String) {
    (
        std::fs::read_to_string(dir.join("attempts.ndjson")).unwrap(),
        std::fs::read_to_string(dir.join("evolver.ndjson")).unwrap(),
    )
}

#[test]
fn unknown_verb_prints_usage() {
    let o = exec(&["frobnicate"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(code(&exec(&["query", "--config", "x.toml", "nowhere", "text"])), 2);
}

#[test]
fn missing_or_bad_config_is_a_usage_error() {
    assert_eq!(code(&exec(&["run", "--config", "/nonexistent/skillforge.toml"])), 2);
    let f = Fixture::new(Mode::Live);
    std::fs::write(f.path("bad.toml"), "evolver_workers = 0\n").unwrap();
    let o = exec(&["run", "--config", f.path("bad.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("evolver_workers"));
}

#[test]
fn run_prints_a_line_per_attempt() {
    let f = Fixture::new(Mode::Live);
    let o = f.run("run", &["--json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let summary = json(&o);
    assert_eq!(summary["end"], "completed");
    assert_eq!(summary["stats"]["solved"], 4);
    let attempts = read_logs(&f.path("run")).unwrap().0;
    let progress = stderr(&o).lines().filter(|l| l.starts_with("round ")).count();
    assert_eq!(progress, attempts.len());
    assert!(stderr(&o).contains("round 1 p0 amc12a_2021_p7 attempt 1/3 valid"));
}

#[test]
fn record_then_replay_exits_cleanly_with_identical_logs() {
    let f = Fixture::new(Mode::Record);
    let rec = f.run("run", &["--run-dir", f.path("rec").to_str().unwrap()]);
    assert_eq!(code(&rec), 0, "{}", stderr(&rec));
    let rep = f.run("replay", &["--run-dir", f.path("rep").to_str().unwrap()]);
    assert_eq!(code(&rep), 0, "{}", stderr(&rep));
    assert_eq!(logs(&f.path("rec")), logs(&f.path("rep")));
    assert_eq!(stdout(&rec), stdout(&rep));
    assert!(stdout(&rep).starts_with("completed after"));
}

#[test]
fn interrupted_replay_resumes_to_the_same_stats() {
    let f = Fixture::new(Mode::Record);
    assert_eq!(code(&f.run("run", &[])), 0);
    let whole = f.path("whole");
    let split = f.path("split");
    let full = f.run("replay", &["--json", "--run-dir", whole.to_str().unwrap()]);
    assert_eq!(code(&full), 0);

    let first = f.run("replay", &["--json", "--run-dir", split.to_str().unwrap(), "--max-ticks", "2"]);
    assert_eq!(code(&first), 0);
    assert_eq!(json(&first)["end"], "tick_limit");
    let rest = f.run("replay", &["--json", "--run-dir", split.to_str().unwrap()]);
    assert_eq!(code(&rest), 0);
    assert!(stderr(&rest).contains("resuming at tick 2"));
    assert_eq!(json(&rest)["stats"], json(&full)["stats"]);
    assert_eq!(logs(&split), logs(&whole));

    let a = f.run("stats", &["--json", "--run-dir", split.to_str().unwrap()]);
    let b = f.run("stats", &["--json", "--run-dir", whole.to_str().unwrap()]);
    assert_eq!(json(&a), json(&b));
}

#[test]
fn fresh_ignores_the_checkpoint() {
    let f = Fixture::new(Mode::Live);
    assert_eq!(code(&f.run("run", &["--max-ticks", "1"])), 0);
    let o = f.run("run", &["--fresh", "--json"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("ingested 5 problems"));
    assert_eq!(json(&o)["ticks"], json(&f.run("run", &["--fresh", "--json"]))["ticks"]);
}

#[test]
fn stats_match_the_library_functions() {
    let f = Fixture::new(Mode::Live);
    assert_eq!(code(&f.run("run", &[])), 0);
    let run = f.path("run");
    let lib = SkillLibrary::load(run.join(SNAPSHOT_FILE)).unwrap();
    let (attempts, steps) = read_logs(&run).unwrap();
    let direct = serde_json::to_value(compute_stats(&attempts, &steps, &lib)).unwrap();

    let o = f.run("stats", &["--json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o), direct);
    let third = 1.0 / 3.0;
    for key in ["prover", "request_solver", "directional"] {
        assert_eq!(direct["origins"][key].as_f64(), Some(third));
    }

    let text = stdout(&f.run("stats", &[]));
    assert!(text.contains("problems 5: solved 4, exhausted 1, pending 0"));
    assert!(text.contains("prover 33.3%, request_solver 33.3%, directional 33.3%"));
    assert!(text.contains("solve curve: 2 3 4"));
    assert_eq!(stdout(&f.run("stats", &["--table"])), "attempt\tsolved\n1\t2\n2\t3\n3\t4\n");
}

#[test]
fn commands_that_read_a_snapshot_fail_without_one() {
    let f = Fixture::new(Mode::Live);
    for (verb, extra) in [("stats", vec![]), ("export-tree", vec![]), ("query", vec!["lemma", "x"])] {
        let o = f.run(verb, &extra);
        assert_eq!(code(&o), 1, "{verb}");
        assert!(stderr(&o).contains("no library snapshot"), "{verb}");
    }
}

fn skill(code: &str, parent: Option<skillforge::library::SkillId>, origin: Origin, emb: Embedding) -> NewSkill {
    NewSkill {
        statement: code.lines().next().unwrap().to_string(),
        code: code.to_string(),
        embedding: emb,
        origin,
        parent_id: parent,
        created_round: 0,
    }
}

fn hash_embed(text: &str) -> Embedding {
    Embedding::new(HashEmbedder::new(e2e::EMBEDDING_DIM).embed(text).unwrap()).unwrap()
}

const CODES: [&str; 6] = [
    "lemma sum_of_squares_nonneg:\n  shows \"0 \\<le> x^2 + y^2\"\n  by simp",
    "lemma sum_of_squares_weighted:\n  fixes c :: real\n  shows \"0 \\<le> c^2 * (x^2 + y^2)\"\n  by simp",
    "lemma triangle_inequality_abs:\n  shows \"\\<bar>a + b\\<bar> \\<le> \\<bar>a\\<bar> + \\<bar>b\\<bar>\"\n  by arith",
    "lemma cross_multiply:\n  assumes \"b \\<noteq> 0\"\n  shows \"a / b = c \\<longleftrightarrow> a = b * c\"\n  using assms by auto",
    "lemma even_square_even:\n  fixes n :: nat\n  shows \"even (n^2) \\<longleftrightarrow> even n\"\n  by simp",
    "lemma power_mult_add:\n  fixes a :: real\n  shows \"a^m * a^n = a^(m + n)\"\n  by (simp add: power_add)",
];

fn library_config() -> skillforge::library::LibraryConfig {
    OrchestratorConfig { embedding_dim: e2e::EMBEDDING_DIM, ..OrchestratorConfig::default() }.library_config()
}

/// Three skills in one tree: a root with two evolved children.
fn write_forest_snapshot(run_dir: &Path) -> SkillLibrary {
    let lib = SkillLibrary::new(library_config());
    let root = lib.insert_skill(skill(CODES[0], None, Origin::Prover, hash_embed(CODES[0]))).unwrap().accepted().unwrap();
    for (code, origin) in [(CODES[1], Origin::DirScaleComplexity), (CODES[2], Origin::DirIdentifyKeyConcepts)] {
        lib.insert_skill(skill(code, Some(root), origin, hash_embed(code))).unwrap().accepted().unwrap();
    }
    std::fs::create_dir_all(run_dir).unwrap();
    lib.snapshot(run_dir.join(SNAPSHOT_FILE)).unwrap();
    lib
}

#[test]
fn export_tree_formats() {
    let f = Fixture::new(Mode::Live);
    let problems = f.path("problems.ndjson");
    assert_eq!(code(&f.run("ingest", &[problems.to_str().unwrap()])), 0);
    let empty = f.run("export-tree", &["--json"]);
    assert_eq!(code(&empty), 0);
    assert_eq!(json(&empty)["nodes"], 0);
    assert_eq!(json(&empty)["edges"].as_array().unwrap().len(), 0);
    assert_eq!(stdout(&f.run("export-tree", &[])), "");

    write_forest_snapshot(&f.path("run"));
    let o = f.run("export-tree", &["--json"]);
    let v = json(&o);
    assert_eq!(v["nodes"], 3);
    assert_eq!(v["edges"], serde_json::json!([["s0", "s1"], ["s0", "s2"]]));

    let text = stdout(&f.run("export-tree", &["--format", "tree"]));
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("s0 [prover] lemma sum_of_squares_nonneg"));
    assert!(lines[1].starts_with("  s1 [dir_scale_complexity]"));
    let dot = stdout(&f.run("export-tree", &["--format", "graph"]));
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches(" -> ").count(), 2);
    assert_eq!(code(&f.run("export-tree", &["--format", "forest"])), 2);
}

fn brute_force(lib: &SkillLibrary, query: &Embedding) -> Vec<(String, f64)> {
    let q = query.values();
    let qn: f64 = q.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let mut scored: Vec<(String, f64)> = lib
        .skills()
        .iter()
        .map(|s| {
            let v = s.embedding.values();
            let dot: f64 = v.iter().zip(q).map(|(a, b)| *a as f64 * *b as f64).sum();
            let n: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            (s.id.to_string(), dot / (n * qn))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
}

#[test]
fn query_matches_a_brute_force_scan() {
    let f = Fixture::new(Mode::Live);
    let run = f.path("run");
    let lib = write_forest_snapshot(&run);
    for code in &CODES[3..] {
        lib.insert_skill(skill(code, None, Origin::RequestSolver, hash_embed(code))).unwrap().accepted().unwrap();
    }
    lib.snapshot(run.join(SNAPSHOT_FILE)).unwrap();

    for text in ["sum of squares is nonnegative", "x^2 + y^2", "cross multiply a fraction", "powers of a"] {
        let o = f.run("query", &["--json", "lemma", text, "-k", "4"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let hits = json(&o);
        let got: Vec<(String, f64)> = hits
            .as_array()
            .unwrap()
            .iter()
            .map(|h| (h["id"].as_str().unwrap().to_string(), h["similarity"].as_f64().unwrap()))
            .collect();
        let want = brute_force(&lib, &hash_embed(text));
        assert_eq!(got.len(), 4);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(g.0, w.0, "{text}");
            assert!((g.1 - w.1).abs() < 1e-6, "{text}");
        }
    }

    let top = stdout(&f.run("query", &["lemma", CODES[5], "-k", "1"]));
    assert_eq!(top.lines().count(), 1);
    assert!(top.contains("s5") && top.contains("lemma power_mult_add:"));
    // The request store is empty.
    let none = f.run("query", &["request", "anything"]);
    assert_eq!((code(&none), stdout(&none)), (0, String::new()));
    assert_eq!(code(&f.run("query", &["lemma", "x", "-k", "0"])), 2);
}

#[test]
fn query_on_a_single_skill_library_returns_it() {
    let f = Fixture::new(Mode::Live);
    let lib = SkillLibrary::new(library_config());
    lib.insert_skill(skill(CODES[4], None, Origin::Prover, hash_embed(CODES[4]))).unwrap();
    std::fs::create_dir_all(f.path("run")).unwrap();
    lib.snapshot(f.path("run").join(SNAPSHOT_FILE)).unwrap();
    let o = f.run("query", &["--json", "skills", "unrelated words", "-k", "1"]);
    let hits = json(&o);
    assert_eq!(hits.as_array().unwrap().len(), 1);
    assert_eq!(hits[0]["id"], "s0");
    assert_eq!(hits[0]["rank"], 1);
}

#[test]
fn verify_file_reports_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.thy");
    std::fs::write(&good, demo::AMC_THEORY).unwrap();
    let o = exec(&["verify-file", good.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "verified\n");
    assert!(!stderr(&o).contains("warning"));

    let cheat = dir.path().join("cheat.thy");
    std::fs::write(&cheat, demo::AMC_THEORY.replace("by (metis am_gm add.commute power2_sum zero_le_power2)", "sorry")).unwrap();
    let o = exec(&["verify-file", cheat.to_str().unwrap(), "--json"]);
    assert_eq!(json(&o)["cheat_keywords"], true);
    assert!(stderr(&o).contains("warning: the file uses sorry/oops"));

    assert_eq!(code(&exec(&["verify-file", "/nonexistent.thy"])), 2);

    let f = Fixture::new(Mode::Live);
    let broken = dir.path().join("broken.thy");
    std::fs::write(
        &broken,
        "theory Scratch\n  imports Main\nbegin\ntheorem demo_repair:\n  shows \"(2::real) * 3 = 6\"\n  by (simp add: demo_missing_fact)\nend\n",
    )
    .unwrap();
    let o = exec(&["verify-file", broken.to_str().unwrap(), "--config", f.cfg()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("Undefined fact"));
}

#[test]
fn verify_file_with_an_unreachable_checker_exits_3() {
    let f = Fixture::new(Mode::Live);
    let mut config = e2e::config(Mode::Live);
    config.verifier.kind = skillforge::orchestrator::VerifierKind::Pisa;
    config.verifier.pisa.address = "127.0.0.1:9".into();
    config.verifier.pisa.connect_timeout_secs = 2.0;
    let path = f.path("pisa.toml");
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    let thy = f.path("t.thy");
    std::fs::write(&thy, demo::AMC_THEORY).unwrap();
    let o = exec(&["verify-file", thy.to_str().unwrap(), "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn unreachable_model_backend_exits_3() {
    let f = Fixture::new(Mode::Live);
    let mut config = e2e::config(Mode::Live);
    config.llm.source = skillforge::orchestrator::ChatSource::Openai;
    config.llm.openai.base_url = "http://127.0.0.1:9/v1".into();
    config.llm.openai.timeout_secs = 2.0;
    config.llm.retry.max_retries = 0;
    let path = f.path("offline.toml");
    std::fs::write(&path, toml::to_string(&config).unwrap()).unwrap();
    let o = exec(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("backend unavailable"));
}

#[test]
fn ingest_reports_counts_and_rejects() {
    let f = Fixture::new(Mode::Live);
    let problems = f.path("problems.ndjson");
    let o = f.run("ingest", &["--json", problems.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["inserted"], 5);
    let again = f.run("ingest", &[problems.to_str().unwrap()]);
    assert_eq!(stdout(&again), "0 new, 0 updated, 5 unchanged, 0 rejected\n");

    let bad = f.path("bad.ndjson");
    std::fs::write(&bad, "{\"id\": \"x\"}\n").unwrap();
    let o = f.run("ingest", &[bad.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 1: missing field `informal_statement`"));
    assert_eq!(code(&f.run("ingest", &["/nonexistent.ndjson"])), 2);

    // A run started afterwards picks the ingested problems up.
    let run = f.run("run", &["--json"]);
    assert_eq!(json(&run)["stats"]["problems"], 5);
}
