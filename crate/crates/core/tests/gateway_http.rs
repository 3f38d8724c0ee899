use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use ehrqa::gateway::{GatewayError, OpenAiBackend, ResponseCache};
use ehrqa::{BackendProfile, Gateway, GenerationRequest};

struct Reply {
    status: u16,
    body: String,
    delay: Duration,
}

fn reply(status: u16, body: &str) -> Reply {
    Reply {
        status,
        body: body.to_string(),
        delay: Duration::ZERO,
    }
}

fn ok(content: &str) -> Reply {
    reply(
        200,
        &serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string(),
    )
}

/// Serves `replies` in order, one per connection, and records each request
/// as (headers, body). The last reply repeats once the list runs out.
fn serve(replies: Vec<Reply>) -> (String, Arc<Mutex<Vec<(String, String)>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        let mut i = 0;
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push((headers, String::from_utf8(body).unwrap()));

            let r = &replies[i.min(replies.len() - 1)];
            i += 1;
            thread::sleep(r.delay);
            let _ = write!(
                stream,
                "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                r.status,
                r.body.len(),
                r.body
            );
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn profile(endpoint: &str, max_retries: u32) -> BackendProfile {
    BackendProfile {
        endpoint: endpoint.to_string(),
        model_name: "test-model".into(),
        request_timeout_secs: 5.0,
        max_retries,
        max_in_flight: 2,
        backoff_ms: 1,
    }
}

fn request() -> GenerationRequest {
    GenerationRequest {
        system_prompt: "sys".into(),
        user_prompt: "Question: q\nContext: c\nLabel:".into(),
        temperature: 1.0,
        max_output_tokens: 8,
        sample_index: 0,
    }
}

#[test]
fn retries_server_errors_until_success() {
    let (url, seen) = serve(vec![reply(500, "{}"), reply(503, "{}"), ok(" essential ")]);
    let p = profile(&url, 2);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&p, Some("k3y".into())).unwrap()), &p);
    assert_eq!(gateway.complete(&request()).unwrap(), " essential ");
    assert_eq!(gateway.backend_calls(), 3);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen[0].0.starts_with("POST /v1/chat/completions"));
    assert!(seen[0].0.to_ascii_lowercase().contains("authorization: bearer k3y"));
    let body: serde_json::Value = serde_json::from_str(&seen[0].1).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "Question: q\nContext: c\nLabel:");
    assert_eq!(body["max_tokens"], 8);
}

#[test]
fn persistent_500_gives_up_after_retries() {
    let (url, seen) = serve(vec![reply(500, "{}")]);
    let p = profile(&url, 2);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&p, None).unwrap()), &p);
    let err = gateway.complete(&request()).unwrap_err();
    assert!(
        matches!(
            err,
            GatewayError::Http {
                status: 500,
                attempts: 3
            }
        ),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(!seen.lock().unwrap()[0].0.to_ascii_lowercase().contains("authorization"));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(vec![reply(400, "{}")]);
    let p = profile(&url, 3);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&p, None).unwrap()), &p);
    let err = gateway.complete(&request()).unwrap_err();
    assert!(
        matches!(
            err,
            GatewayError::Http {
                status: 400,
                attempts: 1
            }
        ),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn slow_server_times_out() {
    let (url, _) = serve(vec![Reply {
        delay: Duration::from_millis(1500),
        ..ok("late")
    }]);
    let mut p = profile(&url, 0);
    p.request_timeout_secs = 0.3;
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&p, None).unwrap()), &p);
    let err = gateway.complete(&request()).unwrap_err();
    assert!(matches!(err, GatewayError::Timeout { attempts: 1 }), "{err:?}");
}

#[test]
fn malformed_body_is_an_invalid_response() {
    let (url, _) = serve(vec![reply(200, r#"{"choices": []}"#)]);
    let p = profile(&url, 2);
    let gateway = Gateway::new(Arc::new(OpenAiBackend::new(&p, None).unwrap()), &p);
    assert!(matches!(
        gateway.complete(&request()),
        Err(GatewayError::InvalidResponse(_))
    ));
    assert_eq!(gateway.backend_calls(), 1);
}

#[test]
fn cached_responses_skip_the_network() {
    let (url, seen) = serve(vec![ok("supplementary")]);
    let p = profile(&url, 0);
    let cache = Arc::new(ResponseCache::default());
    let backend = Arc::new(OpenAiBackend::new(&p, None).unwrap());
    let first = Gateway::new(backend.clone(), &p).with_cache(cache.clone());
    let samples = first.sample_n("sys", "user", 4, 1.0, 8).unwrap();
    assert_eq!(samples, vec!["supplementary"; 4]);
    assert_eq!(seen.lock().unwrap().len(), 4);

    let second = Gateway::new(backend, &p).with_cache(cache);
    assert_eq!(second.sample_n("sys", "user", 4, 1.0, 8).unwrap(), samples);
    assert_eq!(second.backend_calls(), 0);
    assert_eq!(seen.lock().unwrap().len(), 4);
}
