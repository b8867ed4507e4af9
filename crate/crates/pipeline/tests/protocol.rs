use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use reef_core::{BoundingBox, Detection};
use reef_pipeline::protocol::{handle_line, parse_response, serve, DetectBody, Request};
use reef_pipeline::remote::{Channel, HttpChannel, RemoteBackend};
use reef_pipeline::{
    analyze_batch, analyze_quadrat, mock_backends, BackendDescriptor, BackendError, BackendFactory,
    BackendRegistry, BackendSet, BuildContext, Classifier, ConfigError, Detector, PipelineConfig,
    QuadratImage, QuadratInput, Segmenter, Stage, Transport,
};
use serde_json::{json, Value};

fn parse(line: &str) -> Value {
    serde_json::from_str(line).unwrap()
}

fn image_json() -> Value {
    let img = QuadratImage::blank("w", 40, 30).unwrap();
    serde_json::to_value(reef_pipeline::protocol::WireImage::from_image(&img)).unwrap()
}

#[test]
fn handler_rejects_bad_versions_ops_and_json() {
    let b = mock_backends(1);
    let v = parse(&handle_line(
        &json!({"request_id": "r1", "op": "detect", "protocol_version": 2, "image": image_json()}).to_string(),
        &b,
    ));
    assert_eq!(v["request_id"], "r1");
    assert_eq!(v["error"]["code"], "version");

    let v = parse(&handle_line(
        &json!({"request_id": "r2", "op": "paint", "protocol_version": 1, "image": image_json()}).to_string(),
        &b,
    ));
    assert_eq!(v["error"]["code"], "unsupported_op");

    let v = parse(&handle_line("{not json", &b));
    assert_eq!(v["error"]["code"], "malformed");

    let v = parse(&handle_line(
        &json!({"request_id": "r3", "op": "classify", "protocol_version": 1, "image": image_json()}).to_string(),
        &b,
    ));
    assert_eq!(v["request_id"], "r3");
    assert_eq!(v["error"]["code"], "malformed");
}

#[test]
fn handler_answers_each_op() {
    let b = mock_backends(5);
    let img = QuadratImage::blank("w", 90, 90).unwrap();
    let req = Request::detect("d-1".into(), &img);
    let line = handle_line(&req.to_line(), &b);
    let body: DetectBody = parse_response(&line, "d-1").unwrap();
    assert_eq!(body.detections, b.detector.detect(&img).unwrap());

    let prompts: Vec<BoundingBox> = body.detections.iter().map(|d| d.bbox).collect();
    let v = parse(&handle_line(&Request::segment("s-1".into(), &img, &prompts).to_line(), &b));
    assert_eq!(v["request_id"], "s-1");
    assert_eq!(v["masks"].as_array().unwrap().len(), prompts.len());

    let mask = reef_core::mask::rasterize_box(&prompts[0], 90, 90).unwrap();
    let v = parse(&handle_line(&Request::classify("c-1".into(), &img, &mask).to_line(), &b));
    assert_eq!(v["request_id"], "c-1");
    assert!(v["genus"].is_string());
    assert!(v["alternates"].is_array());

    let outside = BoundingBox::new(200, 200, 210, 210).unwrap();
    let v = parse(&handle_line(&Request::segment("s-2".into(), &img, &[outside]).to_line(), &b));
    assert_eq!(v["error"]["code"], "out_of_bounds");
}

#[test]
fn request_lines_follow_the_schema() {
    let img = QuadratImage::blank("w", 4, 3).unwrap();
    let v = parse(&Request::segment("s-9".into(), &img, &[BoundingBox::new(0, 0, 2, 2).unwrap()]).to_line());
    assert_eq!(v["op"], "segment");
    assert_eq!(v["protocol_version"], 1);
    assert_eq!(v["image"]["width"], 4);
    assert_eq!(v["prompts"], json!([[0, 0, 2, 2]]));
    assert!(v.get("mask").is_none());
    let png = base64::Engine::decode(
        &base64::engine::general_purpose::STANDARD,
        v["image"]["png_base64"].as_str().unwrap(),
    )
    .unwrap();
    assert_eq!(&png[1..4], b"PNG");
}

#[test]
fn response_parsing_errors() {
    let err = parse_response::<DetectBody>(r#"{"request_id":"x-2","detections":[]}"#, "x-1").unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }), "{err}");
    assert!(!err.is_retriable());

    let err = parse_response::<DetectBody>(r#"{"request_id":"x-1","error":{"code":"oom","message":"gpu"}}"#, "x-1")
        .unwrap_err();
    assert_eq!(err, BackendError::Remote { code: "oom".into(), message: "gpu".into() });

    let long = format!("garbage {}", "z".repeat(500));
    match parse_response::<DetectBody>(&long, "x-1").unwrap_err() {
        BackendError::Protocol { excerpt, .. } => {
            assert!(excerpt.starts_with("garbage"));
            assert_eq!(excerpt.chars().count(), 161);
            assert!(excerpt.ends_with('…'));
        }
        other => panic!("{other:?}"),
    }

    let err = parse_response::<DetectBody>(r#"{"request_id":"x-1","detections":"no"}"#, "x-1").unwrap_err();
    assert!(matches!(err, BackendError::Protocol { .. }));
}

#[test]
fn serve_answers_line_by_line() {
    let img = QuadratImage::blank("w", 60, 60).unwrap();
    let input = format!(
        "{}\n\n{}\n",
        Request::detect("d-1".into(), &img).to_line(),
        Request::detect("d-2".into(), &img).to_line()
    );
    let mut out = Vec::new();
    serve(input.as_bytes(), &mut out, &mock_backends(2)).unwrap();
    let lines: Vec<Value> = out.lines().map(|l| parse(&l.unwrap())).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["request_id"], "d-1");
    assert_eq!(lines[1]["request_id"], "d-2");
    assert_eq!(lines[0]["detections"], lines[1]["detections"]);
}

/// In-memory channel: answers through `handle_line` and records every id.
struct Loopback {
    backends: BackendSet,
    seen: Arc<Mutex<Vec<String>>>,
    answered: Arc<AtomicUsize>,
}

impl Channel for Loopback {
    fn round_trip(&self, line: &str) -> Result<String, BackendError> {
        let id = parse(line)["request_id"].as_str().unwrap().to_string();
        self.seen.lock().unwrap().push(id);
        let out = handle_line(line, &self.backends);
        self.answered.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }
}

#[test]
fn remote_backends_match_in_process_results_with_unique_ids() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let answered = Arc::new(AtomicUsize::new(0));
    let lb = |stage| {
        Arc::new(RemoteBackend::new(
            Loopback {
                backends: mock_backends(7),
                seen: seen.clone(),
                answered: answered.clone(),
            },
            stage,
        ))
    };
    let remote = BackendSet {
        detector: lb(Stage::Detect),
        segmenter: lb(Stage::Segment),
        classifier: lb(Stage::Classify),
    };
    let inputs: Vec<QuadratInput> = (0..8)
        .map(|i| QuadratInput::Loaded(QuadratImage::blank(format!("q{i}"), 120, 100 + i).unwrap()))
        .collect();
    let cfg = PipelineConfig {
        batch_parallelism: 4,
        ..Default::default()
    };
    let local = analyze_batch(&inputs, &mock_backends(7), &cfg).unwrap();
    let wire = analyze_batch(&inputs, &remote, &cfg).unwrap();
    assert_eq!(wire, local);

    let ids = seen.lock().unwrap();
    let unique: HashSet<&String> = ids.iter().collect();
    assert_eq!(unique.len(), ids.len());
    assert_eq!(answered.load(Ordering::SeqCst), ids.len());
    assert_eq!(ids.iter().filter(|i| i.starts_with("detect-")).count(), 8);
}

struct Canned(String);

impl Channel for Canned {
    fn round_trip(&self, _line: &str) -> Result<String, BackendError> {
        Ok(self.0.clone())
    }
}

#[test]
fn invalid_remote_payloads_are_protocol_errors() {
    let img = QuadratImage::blank("w", 10, 10).unwrap();
    let bad_conf = RemoteBackend::new(
        Canned(r#"{"request_id":"detect-1","detections":[{"bbox":[0,0,2,2],"confidence":1.5}]}"#.into()),
        Stage::Detect,
    );
    assert!(matches!(bad_conf.detect(&img), Err(BackendError::Protocol { .. })));

    let wrong_dims = RemoteBackend::new(
        Canned(r#"{"request_id":"segment-1","masks":[{"width":5,"height":5,"counts":[0,25]}]}"#.into()),
        Stage::Segment,
    );
    let p = [BoundingBox::new(0, 0, 2, 2).unwrap()];
    assert!(matches!(wrong_dims.segment(&img, &p), Err(BackendError::Protocol { .. })));

    let too_few = RemoteBackend::new(Canned(r#"{"request_id":"segment-1","masks":[]}"#.into()), Stage::Segment);
    assert!(matches!(too_few.segment(&img, &p), Err(BackendError::Protocol { .. })));

    let no_genus = RemoteBackend::new(
        Canned(r#"{"request_id":"classify-1","genus":"","confidence":0.5}"#.into()),
        Stage::Classify,
    );
    let m = reef_core::mask::rasterize_box(&p[0], 10, 10).unwrap();
    assert!(matches!(no_genus.classify(&img, &m), Err(BackendError::Protocol { .. })));
}

/// Minimal HTTP/1.1 server: one request per connection, body answered by `respond`.
fn http_server(respond: impl Fn(&str) -> (u16, String) + Send + Sync + 'static) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let respond = Arc::new(respond);
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let respond = respond.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut header = String::new();
                    if reader.read_line(&mut header).unwrap_or(0) == 0 {
                        return;
                    }
                    let h = header.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        if k.eq_ignore_ascii_case("content-length") {
                            len = v.trim().parse().unwrap();
                        }
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let (status, out) = respond(std::str::from_utf8(&body).unwrap());
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                    out.len()
                );
            });
        }
    });
    format!("http://{addr}/infer")
}

#[test]
fn http_backend_matches_in_process() {
    let backends = mock_backends(7);
    let server = backends.clone();
    let url = http_server(move |body| (200, handle_line(body, &server)));
    let registry = BackendRegistry::default();
    let remote = registry
        .build(
            &BackendDescriptor::parse(Stage::Detect, &url).unwrap(),
            &BackendDescriptor::parse(Stage::Segment, &url).unwrap(),
            &BackendDescriptor::parse(Stage::Classify, &url).unwrap(),
            &BuildContext { seed: 7, ..Default::default() },
        )
        .unwrap();
    let img = QuadratImage::blank("h", 150, 120).unwrap();
    let cfg = PipelineConfig::default();
    assert_eq!(
        analyze_quadrat(&img, &remote, &cfg).unwrap(),
        analyze_quadrat(&img, &backends, &cfg).unwrap()
    );
}

#[test]
fn http_failures_map_to_error_kinds() {
    let img = QuadratImage::blank("h", 50, 50).unwrap();
    let url = http_server(|_| (503, String::new()));
    let ch = RemoteBackend::new(HttpChannel::new(&url, Duration::from_secs(5)), Stage::Detect);
    let err = ch.detect(&img).unwrap_err();
    assert!(err.is_retriable(), "{err}");

    let url = http_server(|_| (500, r#"{"request_id":"detect-1","error":{"code":"internal","message":"boom"}}"#.into()));
    let ch = RemoteBackend::new(HttpChannel::new(&url, Duration::from_secs(5)), Stage::Detect);
    assert!(matches!(ch.detect(&img), Err(BackendError::Remote { .. })));

    let dead = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let ch = RemoteBackend::new(HttpChannel::new(&format!("http://{dead}/"), Duration::from_secs(5)), Stage::Detect);
    assert!(matches!(ch.detect(&img), Err(BackendError::Transport(_))));
}

#[test]
fn descriptor_parsing() {
    let d = BackendDescriptor::parse(Stage::Segment, "stdio:python -m adapter").unwrap();
    assert_eq!(d.transport, Transport::ChildProcessStdio);
    assert_eq!(d.endpoint, "python -m adapter");
    assert!(!d.parallel_safe);
    let d = BackendDescriptor::parse(Stage::Detect, "https://h/x").unwrap();
    assert_eq!(d.transport, Transport::Http);
    assert!(d.parallel_safe);
    assert_eq!(BackendDescriptor::parse(Stage::Detect, "mock").unwrap(), BackendDescriptor::mock(Stage::Detect));
    assert!(matches!(BackendDescriptor::parse(Stage::Detect, "grpc://x"), Err(ConfigError::Transport(_))));
    assert!(matches!(BackendDescriptor::parse(Stage::Detect, "stdio:  "), Err(ConfigError::MissingEndpoint(_))));
    for t in Transport::ALL {
        assert_eq!(t.name().parse::<Transport>().unwrap(), t);
    }
}

#[test]
fn registry_checks_kinds_and_registration() {
    let r = BackendRegistry::default();
    let names: Vec<&str> = r.names().collect();
    assert_eq!(names, ["child-process-stdio", "http", "in-process-mock"]);
    let ctx = BuildContext::default();
    let m = BackendDescriptor::mock;
    assert!(matches!(
        r.build(&m(Stage::Segment), &m(Stage::Segment), &m(Stage::Classify), &ctx),
        Err(ConfigError::KindMismatch { .. })
    ));
    assert!(matches!(
        BackendRegistry::empty().build(&m(Stage::Detect), &m(Stage::Segment), &m(Stage::Classify), &ctx),
        Err(ConfigError::Unregistered(_))
    ));
    let bad = BackendDescriptor::parse(Stage::Classify, "mock:bogus").unwrap();
    assert!(r.build(&m(Stage::Detect), &m(Stage::Segment), &bad, &ctx).is_err());

    let constant = BackendDescriptor::parse(Stage::Classify, "mock:constant:Porites").unwrap();
    let set = r.build(&m(Stage::Detect), &m(Stage::Segment), &constant, &ctx).unwrap();
    let img = QuadratImage::blank("q", 100, 100).unwrap();
    let report = analyze_quadrat(&img, &set, &PipelineConfig::default()).unwrap();
    assert_eq!(report.richness, 1);
    assert_eq!(report.dominant_genus.as_deref(), Some("Porites"));
}

/// Detector that records how many calls overlap.
struct Overlap {
    in_flight: AtomicUsize,
    peak: Arc<AtomicUsize>,
}

impl Detector for Overlap {
    fn detect(&self, _: &QuadratImage) -> Result<Vec<Detection>, BackendError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(20));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(vec![])
    }
}

struct OverlapFactory(Arc<AtomicUsize>);

impl BackendFactory for OverlapFactory {
    fn detector(&self, _: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Detector>, ConfigError> {
        Ok(Arc::new(Overlap {
            in_flight: AtomicUsize::new(0),
            peak: self.0.clone(),
        }))
    }
    fn segmenter(&self, _: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Segmenter>, ConfigError> {
        unimplemented!()
    }
    fn classifier(&self, _: &BackendDescriptor, _: &BuildContext) -> Result<Arc<dyn Classifier>, ConfigError> {
        unimplemented!()
    }
}

fn peak_concurrency(parallel_safe: bool) -> usize {
    let peak = Arc::new(AtomicUsize::new(0));
    let mut r = BackendRegistry::default();
    assert!(r.register(Transport::ChildProcessStdio, Box::new(OverlapFactory(peak.clone()))).is_some());
    let det = BackendDescriptor {
        parallel_safe,
        ..BackendDescriptor::parse(Stage::Detect, "stdio:unused").unwrap()
    };
    let set = r
        .build(&det, &BackendDescriptor::mock(Stage::Segment), &BackendDescriptor::mock(Stage::Classify), &BuildContext::default())
        .unwrap();
    let inputs: Vec<QuadratInput> = (0..8)
        .map(|i| QuadratInput::Loaded(QuadratImage::blank(format!("q{i}"), 30, 30).unwrap()))
        .collect();
    let cfg = PipelineConfig {
        batch_parallelism: 4,
        ..Default::default()
    };
    analyze_batch(&inputs, &set, &cfg).unwrap();
    peak.load(Ordering::SeqCst)
}

#[test]
fn unsafe_backends_see_one_request_at_a_time() {
    assert_eq!(peak_concurrency(false), 1);
    assert!(peak_concurrency(true) > 1);
}
