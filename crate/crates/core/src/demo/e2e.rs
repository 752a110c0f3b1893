//! A five-problem offline run: scripted model replies, a scripted checker,
//! and a config that records to (or replays from) a cassette.
//!
//! | problem | what happens |
//! |---|---|
//! | amc12a_2021_p7 | solved on the first attempt; `am_gm` is harvested |
//! | demo_repair | the formalizer's tactic is rejected; `by auto` repairs it |
//! | demo_stuck | every attempt ends in `sorry`; exhausted at budget 3 |
//! | demo_powers | needs `exponent_properties`, which only the request solver proves |
//! | demo_weighted | needs `am_gm_weighted`, the evolver's generalization of `am_gm` |

use std::path::{Path, PathBuf};

use serde_json::json;

use super::{
    formalizer_reply, AMC_DECOMPOSITION, AMC_FORMAL, AMC_ID, AMC_INFORMAL_PROOF, AMC_INFORMAL_STATEMENT, AMC_THEORY,
    EXPONENT_REQUEST, EXPONENT_THEORY,
};
use crate::llm::ScriptedChat;
use crate::orchestrator::{ChatSource, EmbedderKind, Mode, OrchestratorConfig, VerifierKind};
use crate::verify::{BlockRef, MockRule, MockScript, Verdict};

pub const BUDGET: u32 = 3;
pub const SEED: u64 = 20231004;
pub const EMBEDDING_DIM: usize = 256;

/// Skills the script can produce: `am_gm`, `exponent_properties` and
/// `am_gm_weighted`. Everything else is rejected or a duplicate.
pub const EXPECTED_SKILLS: usize = 3;

pub const REPAIR_ID: &str = "demo_repair";
pub const STUCK_ID: &str = "demo_stuck";
pub const POWERS_ID: &str = "demo_powers";
pub const WEIGHTED_ID: &str = "demo_weighted";

const REPAIR_FORMAL: &str = "theorem demo_repair:\n  shows \"(2::real) * 3 = 6\"";
const STUCK_FORMAL: &str = "theorem demo_stuck:\n  fixes n :: nat\n  shows \"n mod 7 = n\"";
const POWERS_FORMAL: &str = "theorem demo_powers:\n  fixes a :: real\n  assumes \"0 < a\"\n  shows \"a^2 * a^3 = a^5\"";
const WEIGHTED_FORMAL: &str = "theorem demo_weighted:\n  fixes x y :: real\n  shows \"2 * (2 * x * y) \\<le> 2 * (x^2 + y^2)\"";

const BROKEN_STEP: &str = "by (simp add: demo_missing_fact)";

fn decomposition(steps: &[&str], requests: &[(&str, &str)]) -> String {
    let mut out = String::from("Structure proof:\n");
    for (i, s) in steps.iter().enumerate() {
        out.push_str(&format!("Step {}: {}\n", i + 1, s));
    }
    out.push_str("\nRequired skills:\n");
    for (i, (thought, code)) in requests.iter().enumerate() {
        let n = i + 1;
        out.push_str(&format!("Thoughts {n}: {thought}\n\nCode {n}:\n```isabelle\n{code}\n```\n\n"));
    }
    out
}

fn theory(blocks: &[&str]) -> String {
    let mut out = String::from("theory Scratch\n  imports Complex_Main\nbegin\n");
    for b in blocks {
        out.push_str(b.trim_end());
        out.push('\n');
    }
    out.push_str("end\n");
    out
}

const AM_GM_WEIGHTED: &str = r#"lemma am_gm_weighted:
  fixes x y c :: real
  assumes "c \<ge> 0"
  shows "c * (2 * x * y) \<le> c * (x^2 + y^2)"
proof -
  have "0 \<le> (x - y)^2"
    by simp
  hence "2 * x * y \<le> x^2 + y^2"
    by (simp add: power2_diff)
  thus ?thesis
    using assms by (rule mult_left_mono)
qed"#;

fn exponent_block() -> &'static str {
    let start = EXPONENT_THEORY.find("lemma exponent_properties").expect("fixture");
    let end = EXPONENT_THEORY.rfind("end").expect("fixture");
    &EXPONENT_THEORY[start..end]
}

pub fn problems_ndjson() -> String {
    let records = [
        json!({
            "id": AMC_ID,
            "informal_statement": AMC_INFORMAL_STATEMENT,
            "informal_proofs": [AMC_INFORMAL_PROOF],
            "formal_statement": AMC_FORMAL,
            "split": "valid",
        }),
        json!({
            "id": REPAIR_ID,
            "informal_statement": "[demo_repair] Show that two times three is six.",
            "informal_proofs": ["Multiply."],
            "formal_statement": REPAIR_FORMAL,
            "split": "valid",
        }),
        json!({
            "id": STUCK_ID,
            "informal_statement": "[demo_stuck] Show that every natural number is its own remainder modulo seven.",
            "informal_proofs": ["This is false for n = 7, so no proof exists."],
            "formal_statement": STUCK_FORMAL,
            "split": "valid",
        }),
        json!({
            "id": POWERS_ID,
            "informal_statement": "[demo_powers] For positive real a, show that a squared times a cubed is a to the fifth.",
            "informal_proofs": ["Add the exponents."],
            "formal_statement": POWERS_FORMAL,
            "split": "test",
        }),
        json!({
            "id": WEIGHTED_ID,
            "informal_statement": "[demo_weighted] Show that 2(2xy) is at most 2(x^2+y^2) for real x and y.",
            "informal_proofs": ["Scale the two-variable AM-GM inequality by 2."],
            "formal_statement": WEIGHTED_FORMAL,
            "split": "test",
        }),
    ];
    records.iter().map(|r| format!("{r}\n")).collect()
}

pub fn chat_script() -> ScriptedChat {
    let repair_theory =
        theory(&[&format!("theorem demo_repair:\n  shows \"(2::real) * 3 = 6\"\n  {BROKEN_STEP}")]);
    let stuck_theory = theory(&["theorem demo_stuck:\n  fixes n :: nat\n  shows \"n mod 7 = n\"\n  sorry"]);
    let powers_good = theory(&[
        exponent_block(),
        "theorem demo_powers:\n  fixes a :: real\n  assumes \"0 < a\"\n  shows \"a^2 * a^3 = a^5\"\n  using assms by (simp add: exponent_properties)",
    ]);
    let powers_bad = theory(&[
        "theorem demo_powers:\n  fixes a :: real\n  assumes \"0 < a\"\n  shows \"a^2 * a^3 = a^5\"\n  sorry",
    ]);
    let weighted_good = theory(&[
        AM_GM_WEIGHTED,
        "theorem demo_weighted:\n  fixes x y :: real\n  shows \"2 * (2 * x * y) \\<le> 2 * (x^2 + y^2)\"\n  by (rule am_gm_weighted) simp",
    ]);
    let weighted_bad = theory(&[
        "theorem demo_weighted:\n  fixes x y :: real\n  shows \"2 * (2 * x * y) \\<le> 2 * (x^2 + y^2)\"\n  sorry",
    ]);
    let exponent_thought = "The exponent laws reduce the claim to adding exponents.";

    ScriptedChat::new()
        .on("decomposer", &["least possible value"], AMC_DECOMPOSITION)
        .on("decomposer", &["[demo_repair]"], decomposition(&["Multiply two by three."], &[]))
        .on("decomposer", &["[demo_stuck]"], decomposition(&["Reduce modulo seven."], &[]))
        .on(
            "decomposer",
            &["[demo_powers]"],
            decomposition(&["Combine the powers of a by adding exponents."], &[(exponent_thought, EXPONENT_REQUEST)]),
        )
        .on("decomposer", &["[demo_weighted]"], decomposition(&["Apply the weighted two-variable inequality."], &[]))
        .on("formalizer", &["least possible value"], formalizer_reply(AMC_THEORY))
        .on("formalizer", &["[demo_repair]"], formalizer_reply(&repair_theory))
        .on("formalizer", &["[demo_stuck]"], formalizer_reply(&stuck_theory))
        .on("formalizer", &["[demo_powers]", "exponent_properties"], formalizer_reply(&powers_good))
        .on("formalizer", &["[demo_powers]"], formalizer_reply(&powers_bad))
        .on("formalizer", &["[demo_weighted]", "am_gm_weighted"], formalizer_reply(&weighted_good))
        .on("formalizer", &["[demo_weighted]"], formalizer_reply(&weighted_bad))
        .on("request_solver", &["lemma exponent_properties"], formalizer_reply(EXPONENT_THEORY))
        .on("dir_extend_dimensions", &["lemma am_gm:"], formalizer_reply(&theory(&[AM_GM_WEIGHTED])))
        .otherwise("I could not find a proof.")
}

pub fn verifier_script() -> MockScript {
    MockScript {
        allow: None,
        rules: vec![MockRule {
            block: Some(BlockRef::Name(REPAIR_ID.into())),
            step: None,
            tactic: Some(BROKEN_STEP.into()),
            verdict: Verdict::Reject,
            replacement: None,
            message: Some("Undefined fact: \"demo_missing_fact\"".into()),
        }],
    }
}

/// The fixture's run settings; paths are relative to the fixture directory.
pub fn config(mode: Mode) -> OrchestratorConfig {
    let mut c = OrchestratorConfig {
        attempt_budget: BUDGET,
        seed: SEED,
        embedding_dim: EMBEDDING_DIM,
        checkpoint_interval_secs: 0.0,
        ..OrchestratorConfig::default()
    };
    c.evolver.direction_weights = [1.0, 0.0, 0.0, 0.0];
    c.paths.run_dir = Some("run".into());
    c.paths.problems = Some("problems.ndjson".into());
    c.llm.mode = mode;
    c.llm.source = ChatSource::Scripted;
    c.llm.embedder = EmbedderKind::Hash;
    c.llm.models = vec!["demo-model".into()];
    c.llm.script = Some("chat.toml".into());
    c.llm.cassette = Some("cassette.ndjson".into());
    c.verifier.kind = VerifierKind::Mock;
    c.verifier.script = Some("verifier.toml".into());
    c
}

/// Writes the problems, scripts and a `config.toml` for `mode` into `dir`
/// and returns the config path.
pub fn write_fixture(dir: &Path, mode: Mode) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("problems.ndjson"), problems_ndjson())?;
    std::fs::write(dir.join("chat.toml"), toml::to_string(&chat_script()).map_err(std::io::Error::other)?)?;
    std::fs::write(dir.join("verifier.toml"), verifier_script().to_toml())?;
    let path = dir.join("config.toml");
    std::fs::write(&path, toml::to_string(&config(mode)).map_err(std::io::Error::other)?)?;
    Ok(path)
}
