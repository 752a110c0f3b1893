use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::*;
use crate::embedding::Embedding;
use crate::library::Direction;

fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    a.cosine(b).unwrap()
}

fn gateway(chat: Arc<dyn ChatBackend>) -> Gateway {
    Gateway::new(chat, Arc::new(HashEmbedder::new(64)), ModelPool::new(["m"]).unwrap())
        .with_retry(RetryPolicy { max_retries: 3, base_delay_ms: 0, max_delay_ms: 0 })
}

fn user(text: &str) -> Vec<Message> {
    vec![Message::new(Role::System, "sys"), Message::new(Role::User, text)]
}

fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn replay_returns_queued_response_verbatim() {
    let mut c = Cassette::default();
    c.push_chat("t", &user("hello"), 0.7, "  exact\nresponse  ");
    let g = gateway(Arc::new(ReplayChat::new(&c)));
    let mut w = Worker::new("p0", 1, 0);
    assert_eq!(g.complete(&mut w, "t", user("hello"), 0.7).unwrap().response, "  exact\nresponse  ");
    // The queue is consumed.
    assert!(matches!(g.complete(&mut w, "t", user("hello"), 0.7), Err(LlmError::Transport(_))));
}

#[test]
fn empty_messages_rejected() {
    let g = gateway(Arc::new(ScriptedChat::new().otherwise("x")));
    let mut w = Worker::new("p0", 1, 0);
    assert_eq!(g.complete(&mut w, "t", vec![], 0.7), Err(LlmError::EmptyMessages));
    assert_eq!(w.llm_calls, 0);
}

#[test]
fn model_pool_is_uniform() {
    let pool = ModelPool::new(["a", "b", "c", "d", "e"]).unwrap();
    let g = Gateway::new(Arc::new(ScriptedChat::new().otherwise("x")), Arc::new(HashEmbedder::new(8)), pool.clone());
    let mut w = Worker::new("p0", 2024, 0);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for _ in 0..1000 {
        let ex = g.complete(&mut w, "t", user("q"), 0.7).unwrap();
        assert!(pool.models().contains(&ex.model));
        *counts.entry(ex.model).or_default() += 1;
    }
    assert_eq!(counts.len(), 5);
    for (m, n) in &counts {
        assert!((150..=250).contains(n), "{m}: {n}");
    }
    assert!(ModelPool::new(Vec::<String>::new()).is_err());
}

struct Flaky {
    fail_first: u32,
    calls: AtomicU32,
    error: BackendError,
}

impl ChatBackend for Flaky {
    fn chat(&self, _: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if n < self.fail_first {
            Err(self.error.clone())
        } else {
            Ok(ChatResponse { text: "ok".into(), usage: TokenUsage::default() })
        }
    }
}

#[test]
fn rate_limits_are_retried_then_surface() {
    let flaky = Arc::new(Flaky { fail_first: 2, calls: AtomicU32::new(0), error: BackendError::RateLimited });
    let g = gateway(flaky.clone());
    let mut w = Worker::new("p0", 1, 0);
    assert_eq!(g.complete(&mut w, "t", user("q"), 0.7).unwrap().response, "ok");
    assert_eq!(flaky.calls.load(Ordering::SeqCst), 3);
    assert_eq!(g.stats().retries, 2);
    assert_eq!(w.llm_calls, 1, "retries stay within one call");

    let always = Arc::new(Flaky { fail_first: u32::MAX, calls: AtomicU32::new(0), error: BackendError::RateLimited });
    let g = gateway(always.clone());
    assert_eq!(g.complete(&mut w, "t", user("q"), 0.7), Err(LlmError::RateLimit { attempts: 4 }));
    assert_eq!(always.calls.load(Ordering::SeqCst), 4);

    let bad = Arc::new(Flaky { fail_first: 1, calls: AtomicU32::new(0), error: BackendError::Protocol("junk".into()) });
    let g = gateway(bad.clone());
    assert_eq!(g.complete(&mut w, "t", user("q"), 0.7), Err(LlmError::Protocol("junk".into())));
    assert_eq!(bad.calls.load(Ordering::SeqCst), 1, "protocol errors are not retried");
}

#[test]
fn backoff_doubles_and_caps() {
    let r = RetryPolicy { max_retries: 5, base_delay_ms: 100, max_delay_ms: 1000 };
    let ms: Vec<u128> = (0..6).map(|a| r.delay(a).as_millis()).collect();
    assert_eq!(ms, vec![100, 200, 400, 800, 1000, 1000]);
}

#[test]
fn hash_embeddings() {
    let g = gateway(Arc::new(ScriptedChat::new()));
    let a = g.embed("lemma am_gm: x^2 + y^2 >= 2*x*y").unwrap();
    let b = g.embed("lemma am_gm: x^2 + y^2 >= 2*x*y").unwrap();
    assert_eq!(a, b);
    assert!((a.norm() - 1.0).abs() < 1e-6);
    assert_eq!(g.embed("   "), Err(LlmError::EmptyText));
    let related = g.embed("lemma am_gm2: x^2 + y^2 >= 2*x*y").unwrap();
    let unrelated = g.embed("theorem prime_factors: n dvd m").unwrap();
    assert!(cosine(&a, &related) > cosine(&a, &unrelated));
}

#[test]
fn distinct_texts_have_distinct_embeddings() {
    let e = HashEmbedder::new(32);
    let vs: Vec<crate::embedding::Embedding> =
        (0..1000).map(|i| crate::embedding::Embedding::new(e.vector(&format!("lemma l: {i}"))).unwrap()).collect();
    for w in vs.windows(2) {
        assert!(cosine(&w[0], &w[1]) < 1.0 - 1e-9);
    }
    // Differences in the noise term alone keep even same-vocabulary texts apart.
    let x = crate::embedding::Embedding::new(e.vector("a b")).unwrap();
    let y = crate::embedding::Embedding::new(e.vector("b a")).unwrap();
    assert!(cosine(&x, &y) < 1.0);
}

#[test]
fn formalizer_prompt_lists_skills_in_order() {
    let t = TemplateSet::builtin();
    let skills: Vec<String> = (1..=6).map(|i| format!("Useful skills {i}:\nlemma skill_{i}: \"P{i}\" by simp")).collect();
    let msgs = t
        .render(
            "formalizer",
            &bind(&[
                ("skills", &skills.join("\n\n")),
                ("informal_statement", "S"),
                ("informal_proof", "Step 1: P"),
                ("formal_statement", "theorem t: \"P\""),
            ]),
        )
        .unwrap();
    let last = &msgs.last().unwrap().content;
    let positions: Vec<usize> = (1..=6).map(|i| last.find(&format!("lemma skill_{i}:")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(msgs[0].role, Role::System);
}

#[test]
fn decomposer_prompt_has_structure_cue() {
    let msgs = TemplateSet::builtin()
        .render(
            "decomposer",
            &bind(&[("informal_statement", "S"), ("informal_proof", "P"), ("formal_statement", "theorem t: \"P\"")]),
        )
        .unwrap();
    assert!(msgs.iter().any(|m| m.role == Role::Assistant && m.content.contains("Structure proof:")));
    assert!(msgs.iter().any(|m| m.content.contains("Required skills:")));
}

#[test]
fn missing_bindings_are_listed() {
    let err = TemplateSet::builtin().render("decomposer", &bind(&[("informal_statement", "S")])).unwrap_err();
    assert_eq!(
        err,
        TemplateError::MissingBindings {
            template: "decomposer".into(),
            missing: vec!["formal_statement".into(), "informal_proof".into()]
        }
    );
    assert!(err.to_string().contains("formal_statement, informal_proof"));
    assert!(matches!(TemplateSet::builtin().get("nope"), Err(TemplateError::Unknown(_))));
}

#[test]
fn substitution_is_single_pass() {
    let t = Template::parse("x", "<<<user>>>\nA {{a}} B {{ b }}").unwrap();
    let msgs = t.render(&bind(&[("a", "{{b}}"), ("b", "2")])).unwrap();
    assert_eq!(msgs, vec![Message::new(Role::User, "A {{b}} B 2")]);
    let bare = Template::parse("y", "just {{q}}\n").unwrap();
    assert_eq!(bare.render(&bind(&[("q", "1")])).unwrap()[0].content, "just 1");
}

#[test]
fn direction_templates_carry_their_description() {
    let set = TemplateSet::builtin();
    for d in Direction::ALL {
        let t = set.get(&d.template_id()).unwrap();
        let msgs = t.render(&bind(&[("problems", "Problem 1: P"), ("skill", "lemma s: Q")])).unwrap();
        assert!(msgs[0].content.contains(d.core_description()), "{d}");
        assert!(msgs.last().unwrap().content.contains("lemma s: Q"));
    }
    for id in BUILTIN_TEMPLATE_IDS {
        assert!(set.get(id).is_ok());
    }
}

#[test]
fn template_overrides_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("decomposer.tmpl"), "<<<user>>>\ncustom {{x}}").unwrap();
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let set = TemplateSet::with_overrides(dir.path()).unwrap();
    assert_eq!(set.render("decomposer", &bind(&[("x", "1")])).unwrap()[0].content, "custom 1");
    assert!(set.get("formalizer").is_ok());
}

#[test]
fn record_then_replay_is_exact_per_stream() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cassette.ndjson");
    // Two workers send the same prompt and get different answers live.
    struct PerStream;
    impl ChatBackend for PerStream {
        fn chat(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
            Ok(ChatResponse {
                text: format!("{}#{}", req.stream.as_deref().unwrap_or("-"), req.seq),
                usage: TokenUsage::default(),
            })
        }
    }
    let recorder = Arc::new(RecordingChat::new(Arc::new(PerStream), &path).unwrap());
    let live = gateway(recorder);
    let mut a = Worker::new("p0", 9, 0);
    let mut b = Worker::new("p1", 9, 1);
    let mut live_out = Vec::new();
    for _ in 0..3 {
        live_out.push(live.complete(&mut a, "t", user("same"), 0.7).unwrap().response);
        live_out.push(live.complete(&mut b, "t", user("same"), 0.7).unwrap().response);
    }
    let cassette = Cassette::load(&path).unwrap();
    assert_eq!(cassette.chat_count(), 6);
    let replay = gateway(Arc::new(ReplayChat::new(&cassette)));
    let mut a = Worker::new("p0", 9, 0);
    let mut b = Worker::new("p1", 9, 1);
    // Interleave differently; answers still follow (stream, seq).
    let mut replay_b: Vec<String> = (0..3).map(|_| replay.complete(&mut b, "t", user("same"), 0.7).unwrap().response).collect();
    let mut replay_a: Vec<String> = (0..3).map(|_| replay.complete(&mut a, "t", user("same"), 0.7).unwrap().response).collect();
    let mut merged = Vec::new();
    for _ in 0..3 {
        merged.push(replay_a.remove(0));
        merged.push(replay_b.remove(0));
    }
    assert_eq!(merged, live_out);
    // A different temperature is a different prompt.
    assert!(replay.complete(&mut a, "t", user("same"), 0.2).is_err());
}

#[test]
fn recorded_embeddings_replay_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ndjson");
    struct Odd;
    impl Embedder for Odd {
        fn dim(&self) -> usize {
            3
        }
        fn embed(&self, text: &str) -> Result<Vec<f32>, BackendError> {
            Ok(vec![text.len() as f32, 0.1, -1.0e-7])
        }
    }
    let rec = RecordingEmbedder::new(Arc::new(Odd), &path).unwrap();
    let v = rec.embed("abc").unwrap();
    rec.embed("abc").unwrap();
    let c = Cassette::load(&path).unwrap();
    assert_eq!(c.entries.len(), 1);
    let replay = ReplayEmbedder::new(&c, 3);
    assert_eq!(replay.embed("abc").unwrap(), v);
    assert_eq!(replay.embed("zz").unwrap(), HashEmbedder::new(3).vector("zz"));
}

#[test]
fn scripted_rules_match_final_user_message() {
    let s = ScriptedChat::new()
        .on("decomposer", &["alpha"], "A")
        .on_without("decomposer", &["beta"], &["gamma"], "B")
        .otherwise("Z");
    let g = gateway(Arc::new(s));
    let mut w = Worker::new("p0", 1, 0);
    let mut msgs = user("beta");
    msgs.insert(1, Message::new(Role::User, "alpha in an example"));
    assert_eq!(g.complete(&mut w, "decomposer", msgs, 0.7).unwrap().response, "B");
    assert_eq!(g.complete(&mut w, "decomposer", user("beta gamma"), 0.7).unwrap().response, "Z");
    assert_eq!(g.complete(&mut w, "formalizer", user("alpha"), 0.7).unwrap().response, "Z");
    let strict = gateway(Arc::new(ScriptedChat::new()));
    assert!(matches!(strict.complete(&mut w, "x", user("q"), 0.7), Err(LlmError::Protocol(_))));
}

/// Serves canned HTTP responses in order, one per connection.
fn http_server(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut bodies = Vec::new();
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            bodies.push(String::from_utf8(buf).unwrap());
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
        bodies
    });
    (addr, handle)
}

#[test]
fn openai_backend_over_http() {
    let (addr, server) = http_server(vec![
        (200, r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":5,"completion_tokens":1}}"#.into()),
        (429, r#"{"error":"slow down"}"#.into()),
        (200, r#"{"choices":[{"message":{"role":"assistant","content":"again"}}]}"#.into()),
        (200, r#"{"unexpected":true}"#.into()),
        (200, r#"{"data":[{"embedding":[0.5,0.25,0.0,1.0]}]}"#.into()),
    ]);
    let cfg = OpenAiConfig { base_url: addr, api_key_env: "SKILLFORGE_TEST_NO_KEY".into(), embedding_dim: 4, ..Default::default() };
    let g = Gateway::new(Arc::new(OpenAiChat::new(&cfg)), Arc::new(OpenAiEmbedder::new(&cfg)), ModelPool::new(["gpt-x"]).unwrap())
        .with_retry(RetryPolicy { max_retries: 2, base_delay_ms: 0, max_delay_ms: 0 });
    let mut w = Worker::new("p0", 1, 0);
    let ex = g.complete(&mut w, "t", user("hello"), 0.7).unwrap();
    assert_eq!(ex.response, "hi");
    assert_eq!(ex.token_usage, TokenUsage { prompt_tokens: 5, completion_tokens: 1 });
    assert_eq!(g.complete(&mut w, "t", user("hello"), 0.7).unwrap().response, "again");
    assert!(matches!(g.complete(&mut w, "t", user("hello"), 0.7), Err(LlmError::Protocol(_))));
    assert_eq!(g.embed("x").unwrap().values(), &[0.5, 0.25, 0.0, 1.0]);
    let bodies = server.join().unwrap();
    let first: serde_json::Value = serde_json::from_str(&bodies[0]).unwrap();
    assert_eq!(first["model"], "gpt-x");
    assert_eq!(first["messages"][1]["role"], "user");
    assert_eq!(first["temperature"], 0.7);
}

#[test]
fn unreachable_http_endpoint_is_transport() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = OpenAiConfig { base_url: format!("http://127.0.0.1:{port}"), timeout_secs: 2.0, ..Default::default() };
    let g = gateway(Arc::new(OpenAiChat::new(&cfg)));
    let mut w = Worker::new("p0", 1, 0);
    let err = g.complete(&mut w, "t", user("q"), 0.7).unwrap_err();
    assert!(err.is_transport(), "{err:?}");
}
