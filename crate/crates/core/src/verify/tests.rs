use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use proptest::prelude::*;

use super::*;

const FIG6: &str = r#"theory Scratch
  imports Complex_Main
begin
lemma am_gm:
  fixes x y :: real
  shows "x^2 + y^2 \<ge> 2 * x * y"
proof -
  have "(x - y)^2 \<ge> 0"
    by simp
  then have "x^2 - 2 * x * y + y^2 \<ge> 0"
    by (simp add: algebra_simps power2_diff)
  then have "x^2 + y^2 \<ge> 2 * x * y"
    by simp
  then show ?thesis
    by simp
qed
theorem amc12a_2021_p7:
  fixes x y ::real
  shows "1 \<le> ((x * y) - 1)^2 + (x + y)^2"
  apply (auto simp:algebra_simps power2_eq_square)
  by (metis am_gm add.commute power2_sum zero_le_power2)
end
"#;

const TARGET: &str = "theorem amc12a_2021_p7:\n  fixes x y ::real\n  shows \"1 \\<le> ((x * y) - 1)^2 + (x + y)^2\"";

fn fig6_allow() -> MockVerifier {
    MockVerifier::with_allow_list([
        "by simp",
        "by (simp add: algebra_simps power2_diff)",
        "apply (auto simp:algebra_simps power2_eq_square)",
        "by (metis am_gm add.commute power2_sum zero_le_power2)",
    ])
}

struct Counting<V> {
    inner: V,
    calls: AtomicUsize,
}

impl<V: Verifier> Verifier for Counting<V> {
    fn verify(&self, source: &str) -> Result<VerifierOutcome, VerifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.verify(source)
    }
}

fn hammer_theory() -> String {
    "theory T imports Main begin\nlemma a: \"P\"\n  sledgehammer\nend\n".to_string()
}

#[test]
fn allow_list_accepts_fig6() {
    let o = fig6_allow().verify(FIG6).unwrap();
    assert!(o.success, "{:?}", o.failures);
    assert!(validity_check(FIG6, &o, TARGET));
}

#[test]
fn rejected_step_is_reported_at_its_index() {
    let script = MockScript::from_toml(
        "[[rule]]\nblock = \"am_gm\"\nstep = 2\nverdict = \"reject\"\nmessage = \"nope\"\n",
    )
    .unwrap();
    let o = MockVerifier::new(script).verify(FIG6).unwrap();
    assert!(!o.success);
    assert_eq!(o.failures, vec![StepFailure { block_index: 0, step_index: Some(2), message: "nope".into() }]);
    let by_index = MockScript::from_toml("[[rule]]\nblock = 1\nstep = 0\nverdict = \"reject\"\n").unwrap();
    let o = MockVerifier::new(by_index).verify(FIG6).unwrap();
    assert!(o.failed_at(1, 0));
    assert_eq!(o.failed_blocks(), vec![1]);
}

#[test]
fn unknown_script_keys_are_rejected() {
    assert!(matches!(MockScript::from_toml("alow = []"), Err(VerifyError::Config(_))));
}

#[test]
fn script_round_trips_through_toml() {
    let script = MockScript {
        allow: Some(vec!["by auto".into()]),
        rules: vec![MockRule {
            block: Some(BlockRef::Name("a".into())),
            step: Some(0),
            tactic: Some("sledgehammer".into()),
            verdict: Verdict::Accept,
            replacement: Some("by (metis foo)".into()),
            message: None,
        }],
    };
    assert_eq!(MockScript::from_toml(&script.to_toml()).unwrap(), script);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let v = PisaVerifier::new(PisaConfig { address: format!("127.0.0.1:{port}"), connect_timeout_secs: 1.0, ..Default::default() })
        .unwrap();
    assert!(matches!(v.verify(FIG6), Err(VerifyError::Transport(_))));
    // The failed session does not leak pool capacity.
    assert!(matches!(v.verify(FIG6), Err(VerifyError::Transport(_))));
}

/// Accepts every theory unless it contains `sorry`; reports a found proof for
/// the first hammer call.
fn fake_checker(listener: TcpListener, connections: usize) -> std::thread::JoinHandle<usize> {
    std::thread::spawn(move || {
        let mut checks = 0;
        for stream in listener.incoming().take(connections) {
            let stream = stream.unwrap();
            let mut w = stream.try_clone().unwrap();
            for line in BufReader::new(stream).lines() {
                let line = line.unwrap();
                let req: serde_json::Value = serde_json::from_str(&line).unwrap();
                let reply = match req["action"].as_str().unwrap() {
                    "init" => serde_json::json!({"ok": true}),
                    _ => {
                        checks += 1;
                        let text = req["theory_text"].as_str().unwrap();
                        if text.contains("garbage") {
                            w.write_all(b"not json\n").unwrap();
                            continue;
                        }
                        if text.contains("by fail") {
                            serde_json::json!({"ok": false, "failures": [{"block": 0, "step": 0, "message": "Failed to finish proof"}]})
                        } else if text.contains("sledgehammer") {
                            serde_json::json!({"ok": false, "hammer_proofs": [{"block": 0, "step": 0, "tactic": "by (metis found)"}]})
                        } else {
                            serde_json::json!({"ok": true})
                        }
                    }
                };
                w.write_all(format!("{reply}\n").as_bytes()).unwrap();
            }
        }
        checks
    })
}

#[test]
fn pisa_client_against_fake_checker() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = fake_checker(listener, 2);
    let v = PisaVerifier::new(PisaConfig { address: addr, sessions: 1, ..Default::default() }).unwrap();
    assert!(v.verify(FIG6).unwrap().success);
    let o = v.verify("theory T imports Main begin\nlemma a: \"P\" by fail\nend").unwrap();
    assert!(!o.success);
    assert!(o.failed_at(0, 0));
    let r = repair_and_verify(&v, &hammer_theory(), &RepairPolicy::default()).unwrap();
    assert!(r.outcome.success);
    assert!(r.source.contains("by auto"), "first heuristic accepted by the fake checker");
    assert!(matches!(v.verify("garbage"), Err(VerifyError::Transport(_))));
    // Broken session was discarded; a fresh one connects.
    assert!(v.verify(FIG6).unwrap().success);
    drop(v);
    assert!(server.join().unwrap() >= 5);
}

#[test]
fn placeholder_repaired_by_first_heuristic() {
    let v = Counting { inner: MockVerifier::with_allow_list(["by auto"]), calls: AtomicUsize::new(0) };
    let r = repair_and_verify(&v, &hammer_theory(), &RepairPolicy::default()).unwrap();
    assert!(r.outcome.success);
    assert_eq!(r.candidates_tried, 1);
    let repaired = r.outcome.repaired_source.as_deref().unwrap();
    assert!(repaired.contains("lemma a: \"P\"\n  by auto\nend"));
    assert!(!repaired.contains("sledgehammer"));
}

#[test]
fn exhaustion_after_twelve_candidates() {
    let script = MockScript::from_toml("allow = []\n").unwrap();
    let v = Counting { inner: MockVerifier::new(script), calls: AtomicUsize::new(0) };
    let src = "theory T imports Main begin\nlemma a: \"P\" by foo\nend\n";
    let r = repair_and_verify(&v, src, &RepairPolicy::default()).unwrap();
    assert!(!r.outcome.success);
    assert_eq!(r.candidates_tried, 12);
    assert_eq!(v.calls.load(Ordering::SeqCst), 13);
    assert!(r.outcome.repaired_source.is_none());
    assert!(r.outcome.failed_at(0, 0));
}

#[test]
fn hammer_result_is_inlined() {
    let script = MockScript::from_toml(
        "allow = []\n[[rule]]\ntactic = \"sledgehammer\"\nverdict = \"accept\"\nreplacement = \"by (metis power2_sum)\"\n[[rule]]\ntactic = \"by (metis power2_sum)\"\nverdict = \"accept\"\n",
    )
    .unwrap();
    let v = MockVerifier::new(script);
    let src = "theory T imports Main begin\nlemma a: \"P\" by foo\nend\n";
    let r = repair_and_verify(&v, src, &RepairPolicy::default()).unwrap();
    assert!(r.outcome.success);
    assert_eq!(r.candidates_tried, 12);
    assert_eq!(r.source, "theory T imports Main begin\nlemma a: \"P\" by (metis power2_sum)\nend\n");
}

#[test]
fn verified_source_is_returned_unchanged() {
    let v = Counting { inner: fig6_allow(), calls: AtomicUsize::new(0) };
    let r = repair_and_verify(&v, FIG6, &RepairPolicy::default()).unwrap();
    assert!(r.outcome.success);
    assert_eq!(r.source, FIG6);
    assert!(r.outcome.repaired_source.is_none());
    assert_eq!(r.candidates_tried, 0);
    assert_eq!(v.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn repair_moves_on_to_later_failures() {
    let src = "theory T imports Main begin\nlemma a: \"P\"\n  apply (induct n)\n  apply foo\n  sledgehammer\n  done\nend\n";
    let v = MockVerifier::with_allow_list(["apply (induct n)", "by simp", "by blast", "done"]);
    let r = repair_and_verify(&v, src, &RepairPolicy::default()).unwrap();
    assert!(r.outcome.success);
    assert_eq!(r.candidates_tried, 2 + 2);
    assert!(r.source.contains("apply (induct n)\n  by simp\n  by simp\n  done"));
}

#[test]
fn policy_validation() {
    let mut p = RepairPolicy::default();
    assert!(p.validate().is_ok());
    assert_eq!(p.candidates().count(), 12);
    p.heuristics[1] = p.heuristics[0].clone();
    assert!(p.validate().is_err());
    p.heuristics.pop();
    assert!(p.validate().is_err());
}

#[test]
fn validity_rules() {
    let ok = VerifierOutcome { success: true, ..Default::default() };
    assert!(validity_check(FIG6, &ok, TARGET));
    // Name differences are tolerated, statement changes are not.
    assert!(validity_check(FIG6, &ok, "theorem fixes x y ::real shows \"1 \\<le> ((x * y) - 1)^2 + (x + y)^2\""));
    let altered = FIG6.replace("shows \"1 \\<le>", "shows \"0 \\<le>");
    assert!(!validity_check(&altered, &ok, TARGET));
    let cheated = FIG6.replace("by simp\nqed", "oops\nqed");
    assert!(!validity_check(&cheated, &ok, TARGET));
    let failed = VerifierOutcome { success: false, ..Default::default() };
    assert!(!validity_check(FIG6, &failed, TARGET));
    assert_eq!(target_block(FIG6, TARGET), Some(1));
}

#[test]
fn mock_accepts_sorry_but_validity_does_not() {
    let src = "theory T imports Main begin\ntheorem t: \"P\" sorry\nend";
    let o = MockVerifier::default().verify(src).unwrap();
    assert!(o.success);
    assert!(!validity_check(src, &o, "theorem t: \"P\""));
}

#[test]
fn mock_is_deterministic_across_threads() {
    let v = Arc::new(MockVerifier::new(
        MockScript::from_toml("[[rule]]\nblock = \"am_gm\"\nstep = 1\nverdict = \"reject\"\n").unwrap(),
    ));
    let baseline = v.verify(FIG6).unwrap();
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let v = Arc::clone(&v);
            std::thread::spawn(move || (0..50).map(|_| v.verify(FIG6).unwrap()).collect::<Vec<_>>())
        })
        .collect();
    for h in handles {
        for o in h.join().unwrap() {
            assert_eq!(o, baseline);
        }
    }
}

proptest! {
    #[test]
    fn repair_bounds_and_identity(
        steps in proptest::collection::vec(prop_oneof![Just("by auto"), Just("by foo"), Just("sledgehammer"), Just("by bar")], 1..5),
        allow in proptest::collection::vec(prop_oneof![Just("by auto"), Just("by force"), Just("by sos"), Just("by foo")], 0..3),
    ) {
        let blocks: Vec<String> = steps.iter().enumerate().map(|(i, s)| format!("lemma l{i}: \"P{i}\"\n  {s}")).collect();
        let src = crate::theory::assemble_theory(&[] as &[String], &blocks, "T");
        let v = MockVerifier::with_allow_list(allow.clone());
        let r = repair_and_verify(&v, &src, &RepairPolicy::default()).unwrap();
        let targets = tactic_target_count(&v, &src);
        prop_assert!(r.candidates_tried <= 12 * targets);
        if v.verify(&src).unwrap().success {
            prop_assert_eq!(&r.source, &src);
            prop_assert_eq!(r.candidates_tried, 0);
        }
        if r.outcome.success {
            prop_assert!(!r.source.contains("sledgehammer"));
            prop_assert!(v.verify(&r.source).unwrap().success);
        }
    }
}

fn tactic_target_count(v: &MockVerifier, src: &str) -> usize {
    let o = v.verify(src).unwrap();
    let doc = crate::theory::parse_theory(src);
    crate::theory::tactic_steps(&doc)
        .iter()
        .filter(|s| s.kind == crate::theory::StepKind::Hammer || o.failed_at(s.block_index, s.step_index))
        .count()
}
