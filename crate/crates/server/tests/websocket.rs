mod common;

use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use refgame_core::transcript::{Actor, Clock, MockClock, Payload, TranscriptEvent};
use refgame_server::{CreatedSession, Registry, RoundView, ServerConfig, ServerFrame};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

struct Server {
    base: String,
    ws_base: String,
    registry: Arc<Registry>,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
    _dir: tempfile::TempDir,
}

async fn start(assets: Option<std::path::PathBuf>) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServerConfig::new(dir.path());
    config.assets_dir = assets;
    let clock: Arc<dyn Clock> = Arc::new(MockClock::new(MockClock::EPOCH_MS));
    let registry = Registry::open(config, clock, common::no_providers()).await.unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let reg = Arc::clone(&registry);
    let task = tokio::spawn(async move {
        refgame_server::run(listener, reg, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    Server {
        base: format!("http://{addr}"),
        ws_base: format!("ws://{addr}"),
        registry,
        stop: Some(tx),
        task,
        _dir: dir,
    }
}

impl Server {
    async fn create(&self, body: serde_json::Value) -> CreatedSession {
        let resp = reqwest::Client::new()
            .post(format!("{}/sessions", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), 201);
        resp.json().await.unwrap()
    }

    async fn connect(&self, id: &str, token: &str, last_seq: u64) -> Result<Ws, u16> {
        let url = format!("{}/ws/{id}?token={token}&last_seq={last_seq}", self.ws_base);
        match tokio_tungstenite::connect_async(url).await {
            Ok((ws, _)) => Ok(ws),
            Err(tokio_tungstenite::tungstenite::Error::Http(resp)) => Err(resp.status().as_u16()),
            Err(e) => panic!("{e}"),
        }
    }
}

async fn next_frame(ws: &mut Ws) -> ServerFrame {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next())
            .await
            .expect("frame within 5 s")
            .expect("stream open")
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn next_event(ws: &mut Ws) -> TranscriptEvent {
    loop {
        if let ServerFrame::Event(e) = next_frame(ws).await {
            return e;
        }
    }
}

async fn send(ws: &mut Ws, payload: &Payload) {
    ws.send(Message::Text(serde_json::to_string(payload).unwrap().into())).await.unwrap();
}

/// Reads frames until the ack (or error) for the last sent payload.
async fn reply(ws: &mut Ws) -> ServerFrame {
    loop {
        match next_frame(ws).await {
            f @ (ServerFrame::Ack { .. } | ServerFrame::Error { .. }) => return f,
            _ => {}
        }
    }
}

#[tokio::test]
async fn two_clients_see_the_same_ordered_stream() {
    let server = start(None).await;
    let created = server.create(serde_json::json!({"condition": "HH", "seed": 3})).await;
    let id = &created.session_id;
    let (dt, mt) = (created.tokens.director.unwrap(), created.tokens.matcher.unwrap());
    let mut director = server.connect(id, &dt, 0).await.unwrap();
    let ServerFrame::Welcome { welcome } = next_frame(&mut director).await else { panic!("welcome first") };
    assert_eq!(welcome.role, refgame_core::participants::Role::Director);
    assert_eq!(server.connect(id, &dt, 0).await.err(), Some(409));
    assert_eq!(server.connect(id, "wrong", 0).await.err(), Some(403));
    assert_eq!(server.connect("missing", &dt, 0).await.err(), Some(404));
    let mut matcher = server.connect(id, &mt, 0).await.unwrap();

    send(&mut director, &Payload::TypingStart).await;
    send(&mut director, &Payload::ChatMessage { text: "a round wicker basket".into() }).await;
    send(&mut matcher, &Payload::Placement { tile: 4, position: 1 }).await;
    send(&mut director, &Payload::Placement { tile: 4, position: 2 }).await;

    let mut seen_d = Vec::new();
    let mut seen_m = Vec::new();
    let mut errors = Vec::new();
    while seen_d.len() < 6 || errors.is_empty() {
        match next_frame(&mut director).await {
            ServerFrame::Event(e) => seen_d.push(e),
            ServerFrame::Error { code, .. } => errors.push(code),
            _ => {}
        }
    }
    while seen_m.len() < 6 {
        if let ServerFrame::Event(e) = next_frame(&mut matcher).await {
            seen_m.push(e);
        }
    }
    assert_eq!(seen_d, seen_m);
    let seqs: Vec<u64> = seen_d.iter().map(|e| e.seq).collect();
    assert_eq!(seqs, (1..=6).collect::<Vec<_>>());
    let kinds: Vec<&str> = seen_d.iter().map(|e| e.payload.kind()).collect();
    assert_eq!(kinds[..3], ["Joined", "Joined", "RoundStart"]);
    let typing = kinds.iter().position(|k| *k == "TypingStart").unwrap();
    let chat = kinds.iter().position(|k| *k == "ChatMessage").unwrap();
    assert!(typing < chat);
    assert!(kinds.contains(&"Placement"));
    // the director's placement is answered with an error and never broadcast
    assert_eq!(errors, ["unauthorized"]);
    assert!(!seen_d.iter().any(|e| e.actor == Actor::Director && e.payload.kind() == "Placement"));

    // the persisted log is served byte for byte
    let body = reqwest::get(format!("{}/sessions/{id}/events?token={dt}", server.base))
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    let on_disk = std::fs::read_to_string(server._dir.path().join("sessions").join(id).join("events.jsonl")).unwrap();
    assert_eq!(body, on_disk);
    assert_eq!(body.lines().count(), 6);
}

#[tokio::test]
async fn reconnect_resumes_without_gaps() {
    let server = start(None).await;
    let created = server.create(serde_json::json!({"condition": "HH", "seed": 5})).await;
    let id = &created.session_id;
    let (dt, mt) = (created.tokens.director.unwrap(), created.tokens.matcher.unwrap());
    let mut director = server.connect(id, &dt, 0).await.unwrap();
    let mut matcher = server.connect(id, &mt, 0).await.unwrap();
    let mut last = 0;
    while last < 3 {
        last = next_event(&mut matcher).await.seq;
    }
    matcher.close(None).await.unwrap();
    drop(matcher);
    // events that happen while the matcher is away
    for i in 0..5 {
        send(&mut director, &Payload::ChatMessage { text: format!("message {i}") }).await;
        assert!(matches!(reply(&mut director).await, ServerFrame::Ack { .. }));
    }
    let mut matcher = loop {
        match server.connect(id, &mt, last).await {
            Ok(ws) => break ws,
            Err(409) => tokio::time::sleep(Duration::from_millis(10)).await,
            Err(code) => panic!("{code}"),
        }
    };
    let ServerFrame::Welcome { welcome } = next_frame(&mut matcher).await else { panic!() };
    assert_eq!(welcome.last_seq, 8);
    let resumed: Vec<u64> = {
        let mut v = Vec::new();
        for _ in 0..5 {
            v.push(next_event(&mut matcher).await.seq);
        }
        v
    };
    assert_eq!(resumed, vec![4, 5, 6, 7, 8]);
    send(&mut director, &Payload::ChatMessage { text: "live again".into() }).await;
    assert_eq!(next_event(&mut matcher).await.seq, 9);
}

#[tokio::test]
async fn health_survey_views_and_assets() {
    let assets = tempfile::tempdir().unwrap();
    std::fs::create_dir_all(assets.path().join("baskets")).unwrap();
    std::fs::write(assets.path().join("baskets/t01.png"), b"png-bytes").unwrap();
    let server = start(Some(assets.path().to_path_buf())).await;
    let health: serde_json::Value = reqwest::get(format!("{}/health", server.base)).await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");
    let asset = reqwest::get(format!("{}/assets/baskets/t01.png", server.base)).await.unwrap();
    assert_eq!(asset.status(), 200);
    assert_eq!(asset.bytes().await.unwrap().as_ref(), b"png-bytes");

    let created = server.create(serde_json::json!({"condition": "HH", "seed": 9, "n_rounds": 1})).await;
    let id = &created.session_id;
    let (dt, mt) = (created.tokens.director.unwrap(), created.tokens.matcher.unwrap());
    let client = reqwest::Client::new();
    let survey_url = |t: &str| format!("{}/sessions/{id}/survey?token={t}", server.base);
    let body = serde_json::to_value(common::survey(77)).unwrap();
    let early = client.post(survey_url(&dt)).json(&body).send().await.unwrap();
    assert_eq!(early.status(), 409);

    let mut director = server.connect(id, &dt, 0).await.unwrap();
    let mut matcher = server.connect(id, &mt, 0).await.unwrap();
    let view: RoundView = reqwest::get(format!("{}/sessions/{id}/rounds/1?token={mt}", server.base))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(view.tiles.len(), 18);
    assert_eq!(view.slots.as_ref().unwrap().len(), 12);
    let dview: RoundView = reqwest::get(format!("{}/sessions/{id}/rounds/1?token={dt}", server.base))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(dview.tiles.len(), 12);
    assert!(dview.slots.is_none());
    assert!(dview.tiles.iter().all(|t| t.image_url.starts_with("/assets/baskets/")));

    let state = server.registry.state(id).await.unwrap();
    let round = state.round(1).unwrap().clone();
    for p in 1..=12 {
        let tile = round.tile_of_basket(&round.director_order[p - 1]).unwrap();
        send(&mut matcher, &Payload::Placement { tile, position: p }).await;
        assert!(matches!(reply(&mut matcher).await, ServerFrame::Ack { .. }));
    }
    send(&mut matcher, &Payload::Submit).await;
    assert!(matches!(reply(&mut matcher).await, ServerFrame::Ack { .. }));
    let mut kinds = Vec::new();
    while !kinds.contains(&"SurveyOpen") {
        kinds.push(next_event(&mut director).await.payload.kind());
    }
    assert!(kinds.ends_with(&["Submit", "RoundFeedback", "SurveyOpen"]));

    let mut bad = body.clone();
    bad["perceived_human_likeness"] = serde_json::json!(101);
    assert_eq!(client.post(survey_url(&dt)).json(&bad).send().await.unwrap().status(), 422);
    assert_eq!(client.post(survey_url("nope")).json(&body).send().await.unwrap().status(), 403);
    let ok: serde_json::Value = client.post(survey_url(&dt)).json(&body).send().await.unwrap().json().await.unwrap();
    assert!(ok["seq"].as_u64().unwrap() > 0);
    let ev = loop {
        let e = next_event(&mut matcher).await;
        if e.payload.kind() == "SurveyResponse" {
            break e;
        }
    };
    assert!(matches!(ev.payload, Payload::SurveyResponse(ref r) if r.perceived_human_likeness == 77));
}

#[tokio::test]
async fn shutdown_keeps_every_acknowledged_event() {
    let mut server = start(None).await;
    let created = server.create(serde_json::json!({"condition": "HH", "seed": 2})).await;
    let id = created.session_id.clone();
    let (dt, mt) = (created.tokens.director.unwrap(), created.tokens.matcher.unwrap());
    let mut director = server.connect(&id, &dt, 0).await.unwrap();
    let _matcher = server.connect(&id, &mt, 0).await.unwrap();
    let mut acked = 0;
    for i in 0..10 {
        send(&mut director, &Payload::ChatMessage { text: format!("m{i}") }).await;
        if let ServerFrame::Ack { ack } = reply(&mut director).await {
            acked = ack;
        }
    }
    let _ = server.stop.take().unwrap().send(());
    drop(director);
    drop(_matcher);
    let _ = tokio::time::timeout(Duration::from_secs(5), &mut server.task).await;
    let path = server._dir.path().join("sessions").join(&id).join("events.jsonl");
    let lines = std::fs::read_to_string(path).unwrap();
    assert_eq!(lines.lines().count() as u64, acked);
}
