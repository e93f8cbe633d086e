mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use modechoice::gateway::{
    BackendConfig, BackendKind, CallError, CompletionBackend, CompletionCache, Gateway, GatewayError, HttpChatBackend,
    MockBackend, MockConfig,
};
use modechoice::prompting::{build_prompt, Prompt, PromptTemplateConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prompts(n: usize) -> Vec<Prompt> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    (0..n)
        .map(|i| build_prompt(&common::random_situation(&mut rng, i), &PromptTemplateConfig::default()).unwrap())
        .collect()
}

/// Mock answers with a delay, tracking peak concurrency.
struct Slow {
    inner: MockBackend,
    in_flight: Arc<AtomicUsize>,
    peak: Arc<AtomicUsize>,
}

impl CompletionBackend for Slow {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }
    fn send(&self, prompt: &Prompt) -> Result<String, CallError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(5));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.inner.send(prompt)
    }
}

fn mock_gateway(cfg: BackendConfig, dir: &std::path::Path) -> Gateway {
    Gateway::new(cfg, CompletionCache::open(dir).unwrap()).unwrap()
}

#[test]
fn batch_keeps_order_and_bounds_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = BackendConfig {
        max_parallel_requests: 3,
        ..Default::default()
    };
    let peak = Arc::new(AtomicUsize::new(0));
    let backend = Slow {
        inner: MockBackend::new(MockConfig::default()),
        in_flight: Arc::new(AtomicUsize::new(0)),
        peak: peak.clone(),
    };
    let gw = Gateway::with_backend(cfg, CompletionCache::open(dir.path()).unwrap(), Box::new(backend));
    let ps = prompts(40);
    let out = gw.batch_complete(&ps);
    assert_eq!(out.len(), 40);
    for (p, r) in ps.iter().zip(&out) {
        assert_eq!(r.as_ref().unwrap().situation_id, p.situation_id);
    }
    let peak = peak.load(Ordering::SeqCst);
    assert!((2..=3).contains(&peak), "peak concurrency {peak}");
}

#[test]
fn sequential_and_parallel_agree() {
    let ps = prompts(50);
    let run = |parallel| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BackendConfig {
            max_parallel_requests: parallel,
            ..Default::default()
        };
        mock_gateway(cfg, dir.path())
            .batch_complete(&ps)
            .into_iter()
            .map(|r| r.unwrap().text)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(8));
}

#[test]
fn one_failure_does_not_abort_the_batch() {
    let ps = prompts(10);
    let dir = tempfile::tempdir().unwrap();
    let cfg = BackendConfig {
        mock: MockConfig {
            fail_situations: vec![ps[4].situation_id.clone()],
            ..Default::default()
        },
        ..Default::default()
    };
    let out = mock_gateway(cfg, dir.path()).batch_complete(&ps);
    for (i, r) in out.iter().enumerate() {
        if i == 4 {
            let e = r.as_ref().unwrap_err();
            assert_eq!(e.situation_id, ps[4].situation_id);
            assert!(matches!(e.error, GatewayError::Call(CallError::Forced(_))));
        } else {
            assert!(r.is_ok());
        }
    }
}

#[test]
fn mock_replies_are_stable_over_repeats() {
    let p = &prompts(1)[0];
    let first = MockBackend::new(MockConfig::default()).send(p).unwrap();
    for _ in 0..100 {
        let dir = tempfile::tempdir().unwrap();
        let c = mock_gateway(BackendConfig::default(), dir.path()).complete(p).unwrap();
        assert_eq!(c.text, first);
    }
}

#[test]
fn cached_rerun_makes_no_backend_calls() {
    let ps = prompts(25);
    let dir = tempfile::tempdir().unwrap();
    let first = mock_gateway(BackendConfig::default(), dir.path());
    first.batch_complete(&ps);
    assert_eq!(first.network_attempts(), 25);
    let second = mock_gateway(BackendConfig::default(), dir.path());
    let out = second.batch_complete(&ps);
    assert_eq!(second.network_attempts(), 0);
    assert!(out.iter().all(|r| r.as_ref().unwrap().cache_hit));
}

#[test]
fn cache_key_separates_models_and_temperatures() {
    let a = BackendConfig::default();
    let b = BackendConfig {
        temperature: 0.5,
        ..Default::default()
    };
    let c = BackendConfig {
        model_name: "other".into(),
        ..Default::default()
    };
    assert_ne!(a.cache_key("p"), b.cache_key("p"));
    assert_ne!(a.cache_key("p"), c.cache_key("p"));
    assert_ne!(a.cache_key("p"), a.cache_key("q"));
}

fn http_config(url: &str) -> BackendConfig {
    BackendConfig {
        backend_kind: BackendKind::HttpChat,
        endpoint_url: url.into(),
        retry_backoff_base_seconds: 0.01,
        timeout_seconds: 10.0,
        max_retries: 2,
        ..Default::default()
    }
}

#[test]
fn http_backend_retries_then_caches() {
    let server = common::FakeChatServer::start(vec![429, 503]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = http_config(&server.url);
    let backend = HttpChatBackend::new(cfg.clone(), "k-123".into()).unwrap();
    let gw = Gateway::with_backend(cfg, CompletionCache::open(dir.path()).unwrap(), Box::new(backend));
    let p = &prompts(1)[0];
    let c = gw.complete(p).unwrap();
    assert_eq!(c.attempt_count, 3);
    assert_eq!(c.backend_kind, BackendKind::HttpChat);
    assert_eq!(c.text, MockBackend::new(MockConfig::default()).send(p).unwrap());
    assert!(server.auth_headers.lock().unwrap().iter().all(|h| h == "Bearer k-123"));
    assert!(gw.complete(p).unwrap().cache_hit);
    assert_eq!(server.request_count(), 3);
}

#[test]
fn http_backend_reports_exhaustion_and_auth() {
    let server = common::FakeChatServer::start(vec![500, 500, 500]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = http_config(&server.url);
    let backend = HttpChatBackend::new(cfg.clone(), "k".into()).unwrap();
    let gw = Gateway::with_backend(cfg.clone(), CompletionCache::open(dir.path()).unwrap(), Box::new(backend));
    match gw.complete(&prompts(1)[0]).unwrap_err() {
        GatewayError::BackendExhausted { last_status, attempts, .. } => {
            assert_eq!(last_status, Some(500));
            assert_eq!(attempts, 3);
        }
        e => panic!("unexpected {e}"),
    }

    let server = common::FakeChatServer::start(vec![401]);
    let cfg = http_config(&server.url);
    let backend = HttpChatBackend::new(cfg.clone(), "k".into()).unwrap();
    let gw = Gateway::with_backend(cfg, CompletionCache::open(dir.path()).unwrap(), Box::new(backend));
    let err = gw.complete(&prompts(2)[1]).unwrap_err();
    assert!(matches!(err, GatewayError::Call(CallError::Auth { status: 401, .. })));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn unreachable_endpoint_is_a_connection_error() {
    let cfg = BackendConfig {
        max_retries: 0,
        ..http_config("http://127.0.0.1:9/v1/chat/completions")
    };
    let dir = tempfile::tempdir().unwrap();
    let backend = HttpChatBackend::new(cfg.clone(), "k".into()).unwrap();
    let gw = Gateway::with_backend(cfg, CompletionCache::open(dir.path()).unwrap(), Box::new(backend));
    assert!(matches!(
        gw.complete(&prompts(1)[0]).unwrap_err(),
        GatewayError::BackendExhausted { last_error: CallError::Connection(_), .. }
    ));
}
