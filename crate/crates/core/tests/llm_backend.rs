use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use lle_core::extract::*;
use lle_core::kb::DecisionFactor;
use lle_core::rule::TriBool;
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    bodies: Vec<Value>,
    auth: Vec<Option<String>>,
}

enum Reply {
    Status(u16, String),
    Hang,
}

/// Serves one scripted reply per connection, recording each request body.
fn serve(script: Vec<Reply>) -> (String, Arc<Mutex<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Seen::default()));
    let log = seen.clone();
    thread::spawn(move || {
        for reply in script {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => auth = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            {
                let mut log = log.lock().unwrap();
                log.bodies.push(serde_json::from_slice(&body).unwrap());
                log.auth.push(auth);
            }
            match reply {
                Reply::Status(code, text) => {
                    let response = format!(
                        "HTTP/1.1 {code} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                        text.len()
                    );
                    stream.write_all(response.as_bytes()).unwrap();
                }
                Reply::Hang => {
                    thread::sleep(Duration::from_millis(600));
                }
            }
        }
    });
    (base, seen)
}

fn message(content: Value) -> Reply {
    Reply::Status(
        200,
        json!({"choices": [{"message": {"role": "assistant", "content": content.to_string()}}]}).to_string(),
    )
}

fn tool_call(name: &str, args: Value) -> Reply {
    Reply::Status(
        200,
        json!({"choices": [{"message": {
            "role": "assistant",
            "content": null,
            "tool_calls": [{"id": "call_1", "type": "function",
                "function": {"name": name, "arguments": args.to_string()}}]
        }}]})
        .to_string(),
    )
}

fn config(base: &str) -> LlmConfig {
    let mut c = LlmConfig::new(base);
    c.api_key = Some("secret".into());
    c.model = "test-model".into();
    c.initial_backoff = Duration::from_millis(5);
    c
}

fn record() -> SegmentedRecord {
    let r = PatientRecord::from_json(
        br#"{"patient_id": "p1", "structured_fields": {"date_of_birth": "1950-06-01"},
        "documents": [{"doc_id": "note1", "doc_type": "note", "date": "2024-05-01",
        "text": "CT chest completed. No metastases seen."}]}"#,
    )
    .unwrap();
    SegmentedRecord::new(r).unwrap()
}

fn factor() -> DecisionFactor {
    DecisionFactor {
        name: "mets".into(),
        question: "Is there metastatic disease?".into(),
        description: None,
    }
}

#[test]
fn answers_after_a_tool_round() {
    let (base, seen) = serve(vec![
        tool_call("age_at", json!({"date_of_birth": "1950-06-01", "reference": "2024-05-01"})),
        message(json!({
            "value": "no",
            "explanation": "CT shows no metastases.",
            "citations": [{"doc_id": "note1", "sentence_index": 1, "echoed_text": "No metastases seen."}]
        })),
    ]);
    let llm = LlmExtractor::new(config(&base)).unwrap();
    assert_eq!(llm.id(), "llm:test-model");
    let rec = record();
    let answer = extract_factor(&factor(), &rec, &llm, &ToolRegistry::date_tools());
    assert_eq!(answer.value, TriBool::False);
    assert_eq!(answer.extractor_id, "llm:test-model");
    assert_eq!(answer.citations.len(), 1);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.bodies.len(), 2);
    assert_eq!(seen.auth[0].as_deref(), Some("Bearer secret"));
    let first = &seen.bodies[0];
    assert_eq!(first["model"], "test-model");
    let tools: Vec<&str> = first["tools"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["function"]["name"].as_str().unwrap())
        .collect();
    assert_eq!(tools, ["age_at", "days_between"]);
    let prompt = first["messages"][1]["content"].as_str().unwrap();
    assert!(prompt.contains("Is there metastatic disease?"));
    assert!(prompt.contains("[note1#1] No metastases seen."));
    let tool_msg = seen.bodies[1]["messages"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(tool_msg["role"], "tool");
    assert_eq!(tool_msg["tool_call_id"], "call_1");
    assert_eq!(tool_msg["content"], json!({"years": 73}).to_string());
}

#[test]
fn retries_server_errors_then_succeeds() {
    let (base, seen) = serve(vec![
        Reply::Status(503, "{}".into()),
        Reply::Status(429, "{}".into()),
        message(json!({"value": "yes", "explanation": "ok", "citations": []})),
    ]);
    let llm = LlmExtractor::new(config(&base)).unwrap();
    let answer = extract_factor(&factor(), &record(), &llm, &ToolRegistry::date_tools());
    assert_eq!(answer.value, TriBool::True);
    assert_eq!(seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn gives_up_after_two_retries() {
    let (base, seen) = serve(vec![
        Reply::Status(500, "{}".into()),
        Reply::Status(502, "{}".into()),
        Reply::Status(503, "{}".into()),
    ]);
    let llm = LlmExtractor::new(config(&base)).unwrap();
    let answer = extract_factor(&factor(), &record(), &llm, &ToolRegistry::date_tools());
    assert_eq!(answer.value, TriBool::Unknown);
    assert!(answer.explanation.contains("after 3 attempts"), "{}", answer.explanation);
    assert_eq!(seen.lock().unwrap().bodies.len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (base, seen) = serve(vec![Reply::Status(401, "{}".into())]);
    let llm = LlmExtractor::new(config(&base)).unwrap();
    let answer = extract_factor(&factor(), &record(), &llm, &ToolRegistry::date_tools());
    assert_eq!(answer.value, TriBool::Unknown);
    assert!(answer.explanation.contains("401"));
    assert_eq!(seen.lock().unwrap().bodies.len(), 1);
}

#[test]
fn malformed_and_unverifiable_replies_become_unknown() {
    let (base, _) = serve(vec![
        message(json!({"value": "maybe", "explanation": "?"})),
        message(json!({
            "value": "yes",
            "explanation": "mets seen",
            "citations": [{"doc_id": "note1", "sentence_index": 1, "echoed_text": "Metastases seen."}]
        })),
    ]);
    let llm = LlmExtractor::new(config(&base)).unwrap();
    let rec = record();
    let tools = ToolRegistry::date_tools();
    let malformed = extract_factor(&factor(), &rec, &llm, &tools);
    assert_eq!(malformed.value, TriBool::Unknown);
    let fabricated = extract_factor(&factor(), &rec, &llm, &tools);
    assert_eq!(fabricated.value, TriBool::Unknown);
    assert!(fabricated.citations.is_empty());
    assert!(fabricated.explanation.contains("rejected"));
}

#[test]
fn times_out() {
    let (base, _) = serve(vec![Reply::Hang]);
    let mut c = config(&base);
    c.timeout = Duration::from_millis(150);
    c.max_retries = 0;
    let llm = LlmExtractor::new(c).unwrap();
    let answer = extract_factor(&factor(), &record(), &llm, &ToolRegistry::date_tools());
    assert_eq!(answer.value, TriBool::Unknown);
    assert!(answer.explanation.starts_with("No answer"));
}

#[test]
fn unreachable_backend_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut c = config(&format!("http://127.0.0.1:{port}"));
    c.max_retries = 1;
    let llm = LlmExtractor::new(c).unwrap();
    let request = ExtractionRequest {
        factor: &factor(),
        record: &record(),
        tools: &ToolRegistry::date_tools(),
    };
    assert!(matches!(llm.answer(&request), Err(ExtractorError::Unavailable(_))));
}
