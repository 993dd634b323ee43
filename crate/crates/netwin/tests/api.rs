mod support;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::{SinkExt, StreamExt};
use netwin::config::GatewayConfig;
use netwin::gateway::SCHEMAS;
use netwin_core::bus::{
    BusError, EventBus, InMemoryBroker, InMemoryBus, PublishAck, SharedBus, Subscription, Topic,
    TopicFilter,
};
use netwin_core::twin::{Authenticator, TwinController, TwinStore};
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use support::{cellular, drain, environment, wifi, Harness, EPOCH, TOKEN};
use tokio_tungstenite::tungstenite::Message;

const AP: &str = "aa:bb:cc:dd:ee:01";

fn quick() -> GatewayConfig {
    GatewayConfig {
        kpi_tick_ms: 100,
        ..GatewayConfig::default()
    }
}

/// d1 sees cell c1 and one AP for 12 s; sensor s1 reports alongside.
fn populate(h: &Harness) {
    for i in 0..12u64 {
        let ts = EPOCH + 1000 * (i + 1);
        h.reconcile(&cellular("d1", "c1", ts, -95.0 + (i % 3) as f64));
        h.reconcile(&wifi("d1", AP, ts, -55.0 - (i % 2) as f64));
        h.reconcile(&environment("s1", ts, 12.0, 600.0 + i as f64, 4));
    }
}

fn assert_error(status: u16, body: &Value, expected_status: u16, code: &str) {
    assert_eq!(status, expected_status, "{body}");
    assert_eq!(body["status"], expected_status, "{body}");
    assert_eq!(body["code"], code, "{body}");
    assert!(
        body["message"].as_str().is_some_and(|m| !m.is_empty()),
        "{body}"
    );
}

#[tokio::test]
async fn empty_store_lists_no_twins() {
    let h = Harness::start(quick()).await;
    let (status, body) = h.get("/twins").await;
    assert_eq!(status, 200);
    assert_eq!(body, json!({ "twins": [] }));
    let (status, body) = h.get("/relationships").await;
    assert_eq!((status, body), (200, json!({ "relationships": [] })));
}

#[tokio::test]
async fn unknown_twin_and_endpoint_are_404() {
    let h = Harness::start(quick()).await;
    let (status, body) = h.get("/twins/device:ghost").await;
    assert_error(status, &body, 404, "unknown_twin");
    let (status, body) = h.get("/nowhere").await;
    assert_error(status, &body, 404, "not_found");
}

#[tokio::test]
async fn one_cellular_reading_yields_one_detects_edge() {
    let h = Harness::start(quick()).await;
    h.reconcile(&cellular("d1", "c1", EPOCH, -80.0));
    let (status, body) = h.get("/relationships").await;
    assert_eq!(status, 200);
    let rels = body["relationships"].as_array().unwrap();
    assert_eq!(rels.len(), 1);
    assert_eq!(rels[0]["kind"], "detects");
    assert_eq!(rels[0]["signal_strength_dbm"], -80);
    assert_eq!(rels[0]["source_twin"], "device:d1");
    assert_eq!(rels[0]["target_twin"], "cell:c1");

    let (status, body) = h.get("/twins/device:d1").await;
    assert_eq!(status, 200);
    assert_eq!(body["twin"]["external_id"], "d1");
    assert_eq!(body["relationships"].as_array().unwrap().len(), 1);
    let (_, cells) = h.get("/twins?model=cell").await;
    assert_eq!(cells["twins"].as_array().unwrap().len(), 1);
    let (_, models) = h.get("/models").await;
    assert_eq!(models["models"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn kpi_queries() {
    let h = Harness::start(quick()).await;
    for (i, v) in [-80.0, -81.5, -79.0].into_iter().enumerate() {
        h.reconcile(&cellular("d1", "c1", EPOCH + 1000 * i as u64, v));
    }
    let entity = "detects:device:d1-%3Ecell:c1";
    let (status, body) = h
        .get(&format!(
            "/kpis?entity={entity}&metric=rssi_dbm&from={EPOCH}&to={}",
            EPOCH + 5000
        ))
        .await;
    assert_eq!(status, 200);
    assert_eq!(
        body,
        json!([[EPOCH, -80], [EPOCH + 1000, -81.5], [EPOCH + 2000, -79]])
    );

    let (_, part) = h
        .get(&format!(
            "/kpis?entity={entity}&metric=rssi_dbm&from={}&to={}",
            EPOCH + 500,
            EPOCH + 1000
        ))
        .await;
    assert_eq!(part, json!([[EPOCH + 1000, -81.5]]));

    let (status, body) = h
        .get(&format!(
            "/kpis?entity={entity}&metric=rssi_dbm&from=10&to=5"
        ))
        .await;
    assert_error(status, &body, 400, "bad_range");
    let (status, body) = h.get(&format!("/kpis?entity={entity}&metric=nope")).await;
    assert_error(status, &body, 404, "unknown_series");
    let (status, body) = h.get("/kpis?metric=rssi_dbm").await;
    assert_error(status, &body, 400, "invalid_request");
    let (status, body) = h
        .get(&format!("/kpis?entity={entity}&metric=rssi_dbm&from=x"))
        .await;
    assert_error(status, &body, 400, "invalid_request");
}

#[tokio::test]
async fn read_endpoints_leave_the_store_untouched() {
    let h = Harness::start(quick()).await;
    populate(&h);
    let before = h.controller.snapshot();
    for path in [
        "/twins",
        "/twins/device:d1",
        "/twins/device:ghost",
        "/relationships",
        "/models",
        "/stats",
        "/kpis?entity=env-sensor:s1&metric=co2_ppm",
        "/kpis?entity=env-sensor:s1&metric=co2_ppm&from=9&to=1",
        "/schemas",
    ] {
        h.get(path).await;
    }
    assert_eq!(h.controller.snapshot(), before);
}

#[tokio::test]
async fn analytics_runs() {
    let h = Harness::start(quick()).await;
    populate(&h);

    let (status, body) = h
        .post(
            "/analytics/run",
            &json!({ "stages": ["descriptive"] }),
            None,
        )
        .await;
    assert_eq!(status, 200, "{body}");
    let keys: Vec<&String> = body["reports"].as_object().unwrap().keys().collect();
    assert_eq!(keys, ["descriptive"]);
    assert_eq!(body["backend"], "deterministic");

    let (status, body) = h
        .post("/analytics/run", &json!({ "stages": ["predictive"] }), None)
        .await;
    assert_error(status, &body, 400, "invalid_stages");
    let (status, body) = h
        .post("/analytics/run", &json!({ "stages": [] }), None)
        .await;
    assert_error(status, &body, 400, "invalid_stages");
    let (status, body) = h
        .post("/analytics/run", &json!({ "stages": ["hindsight"] }), None)
        .await;
    assert_error(status, &body, 400, "invalid_stages");
    let (status, body) = h
        .post("/analytics/run", &json!({ "stage": ["descriptive"] }), None)
        .await;
    assert_error(status, &body, 400, "invalid_request");

    let full = json!({
        "scope": ["d1"],
        "stages": ["descriptive", "diagnostic", "predictive", "prescriptive"],
        "profile": { "payload_bytes": 512, "deadline_ms": 200, "periodicity": "periodic" },
    });
    let (status, body) = h.post("/analytics/run", &full, None).await;
    assert_eq!(status, 200, "{body}");
    let keys: BTreeSet<&str> = body["reports"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    assert_eq!(
        keys,
        BTreeSet::from(["descriptive", "diagnostic", "predictive", "prescriptive"])
    );
    assert_eq!(
        body["reports"]["prescriptive"]["recommended_interface"]["d1"],
        "wifi"
    );

    let mut mock = full.clone();
    mock["backend"] = json!("mock");
    let (status, mocked) = h.post("/analytics/run", &mock, None).await;
    assert_eq!(status, 200, "{mocked}");
    assert_eq!(mocked["backend"], "mock");
    assert_eq!(mocked["reports"], body["reports"]);

    let (status, body) = h
        .post(
            "/analytics/run",
            &json!({ "scope": ["device:ghost"], "stages": ["descriptive"] }),
            None,
        )
        .await;
    assert_error(status, &body, 404, "unknown_twin");
    let (status, body) = h
        .post(
            "/analytics/run",
            &json!({ "stages": ["descriptive"], "window": { "from": 9, "to": 1 } }),
            None,
        )
        .await;
    assert_error(status, &body, 400, "bad_range");
    let mut remote = full.clone();
    remote["backend"] = json!("remote");
    let (status, body) = h.post("/analytics/run", &remote, None).await;
    assert_error(status, &body, 502, "backend_error");
}

#[tokio::test]
async fn short_series_are_unprocessable() {
    let h = Harness::start(quick()).await;
    for i in 0..2u64 {
        h.reconcile(&cellular("d1", "c1", EPOCH + 1000 * i, -90.0));
    }
    let body = json!({ "stages": ["descriptive", "diagnostic", "predictive"] });
    let (status, body) = h.post("/analytics/run", &body, None).await;
    assert_error(status, &body, 422, "insufficient_data");
}

#[tokio::test]
async fn remote_backend_errors_are_bad_gateway() {
    let stub = axum::Router::new().route(
        "/",
        axum::routing::post(|| async { "certainly! here is your report" }),
    );
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, stub).await.unwrap() });

    let h = Harness::start(GatewayConfig {
        remote_lm_url: Some(format!("http://{addr}/")),
        remote_lm_timeout_ms: 2000,
        ..quick()
    })
    .await;
    populate(&h);
    let (status, body) = h
        .post(
            "/analytics/run",
            &json!({ "stages": ["descriptive"], "backend": "remote" }),
            None,
        )
        .await;
    assert_error(status, &body, 502, "backend_error");
}

#[tokio::test]
async fn actions_publish_exactly_one_message() {
    let h = Harness::start(quick()).await;
    populate(&h);
    let mut tap = h.tap("netwin/actions/#").await;

    let body = json!({ "device_id": "d1", "verb": "set_primary_interface", "arguments": { "interface": "wifi" } });
    let (status, resp) = h.post("/actions", &body, Some(TOKEN)).await;
    assert_eq!(status, 202, "{resp}");
    let msgs = drain(&mut tap, Duration::from_millis(200)).await;
    assert_eq!(msgs.len(), 1);
    assert_eq!(msgs[0].topic.as_str(), "netwin/actions/d1");
    let cmd: Value = serde_json::from_slice(&msgs[0].payload).unwrap();
    assert_eq!(cmd["verb"], "set_primary_interface");
    assert_eq!(cmd["arguments"], json!({ "interface": "wifi" }));
    assert_eq!(cmd, resp["command"]);

    let cases = [
        (
            json!({ "device_id": "ghost", "verb": "pause" }),
            Some(TOKEN),
            404,
            "unknown_device",
        ),
        (
            json!({ "device_id": "d1", "verb": "reboot" }),
            Some(TOKEN),
            400,
            "invalid_verb",
        ),
        (
            json!({ "device_id": "d1", "verb": "set_primary_interface", "arguments": { "interface": "environment" } }),
            Some(TOKEN),
            400,
            "invalid_arguments",
        ),
        (
            json!({ "device_id": "d1", "verb": "pause" }),
            None,
            401,
            "unauthorized",
        ),
        (
            json!({ "device_id": "d1", "verb": "pause" }),
            Some("wrong"),
            401,
            "unauthorized",
        ),
        (
            json!({ "device": "d1" }),
            Some(TOKEN),
            400,
            "invalid_request",
        ),
    ];
    for (body, token, status, code) in cases {
        let (s, resp) = h.post("/actions", &body, token).await;
        assert_error(s, &resp, status, code);
    }
    assert!(drain(&mut tap, Duration::from_millis(200)).await.is_empty());
}

#[tokio::test]
async fn one_message_per_accepted_action() {
    let h = Harness::start(quick()).await;
    populate(&h);
    let mut tap = h.tap("netwin/actions/#").await;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let devices = ["d1", "s1", "ghost"];
    let verbs = [
        "pause",
        "resume",
        "set_primary_interface",
        "set_report_period",
        "reboot",
    ];
    let mut accepted = 0;
    for _ in 0..200 {
        let verb = verbs[rng.random_range(0..verbs.len())];
        let arguments = match rng.random_range(0..3) {
            0 => json!({ "interface": "wifi" }),
            1 => json!({ "kind": "cellular", "period_ms": rng.random_range(0..3000) }),
            _ => json!({}),
        };
        let body = json!({ "device_id": devices[rng.random_range(0..3)], "verb": verb, "arguments": arguments });
        let token = if rng.random_bool(0.9) {
            Some(TOKEN)
        } else {
            None
        };
        let (status, _) = h.post("/actions", &body, token).await;
        if status == 202 {
            accepted += 1;
        }
    }
    let msgs = drain(&mut tap, Duration::from_millis(300)).await;
    assert!(accepted > 20);
    assert_eq!(msgs.len(), accepted);
    assert_eq!(h.gateway.state().actions_published(), accepted as u64);
}

/// Delivers subscriptions but refuses to publish.
struct BrokenBus(InMemoryBus);

#[async_trait]
impl EventBus for BrokenBus {
    async fn publish(&self, _: &Topic, _: Vec<u8>) -> Result<PublishAck, BusError> {
        Err(BusError::Transport("link down".into()))
    }

    async fn subscribe(&self, filter: &TopicFilter) -> Result<Subscription, BusError> {
        self.0.subscribe(filter).await
    }
}

#[tokio::test]
async fn transport_failure_is_503() {
    let broker = InMemoryBroker::new();
    let controller =
        TwinController::new(TwinStore::default(), Authenticator::new([TOKEN], 3_600_000));
    let bus: SharedBus = Arc::new(BrokenBus(broker.client()));
    let h = Harness::with_bus(broker, controller, bus, quick()).await;
    populate(&h);
    let (status, body) = h
        .post(
            "/actions",
            &json!({ "device_id": "d1", "verb": "pause" }),
            Some(TOKEN),
        )
        .await;
    assert_error(status, &body, 503, "transport_error");
    assert_eq!(h.gateway.state().actions_published(), 0);
}

async fn connect(
    h: &Harness,
) -> tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>> {
    let (ws, _) = tokio_tungstenite::connect_async(h.ws_url()).await.unwrap();
    // The server registers the client once the upgrade completes.
    for _ in 0..100 {
        if h.gateway.state().stream_clients() > 0 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    ws
}

async fn frames<S>(ws: &mut S, window: Duration) -> Vec<Value>
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    let mut out = Vec::new();
    let deadline = tokio::time::Instant::now() + window;
    while let Ok(Some(Ok(msg))) = tokio::time::timeout_at(deadline, ws.next()).await {
        if let Message::Text(t) = msg {
            out.push(serde_json::from_str(t.as_str()).unwrap());
        }
    }
    out
}

/// Publishes a change set the way the controller node does.
async fn publish_change(h: &Harness, r: &netwin_core::signal::SignalReading) {
    let cs = h.controller.reconcile(&h.session, r).unwrap();
    h.broker
        .client()
        .publish(
            &netwin_core::bus::graph_events_topic(),
            cs.to_canonical_json().into_bytes(),
        )
        .await
        .unwrap();
}

#[tokio::test]
async fn stream_pushes_change_sets_and_kpi_ticks() {
    let h = Harness::start(quick()).await;
    h.reconcile(&cellular("d1", "c1", EPOCH, -80.0));
    let mut subscribed = connect(&h).await;
    subscribed
        .send(Message::text(r#"{"subscribe":["d1"]}"#))
        .await
        .unwrap();
    let mut silent = connect(&h).await;
    tokio::time::sleep(Duration::from_millis(150)).await;

    publish_change(&h, &cellular("d1", "c1", EPOCH + 1000, -70.0)).await;
    let got = frames(&mut subscribed, Duration::from_millis(600)).await;
    let changesets: Vec<&Value> = got.iter().filter(|f| f["type"] == "changeset").collect();
    assert_eq!(changesets.len(), 1, "{got:?}");
    assert_eq!(
        changesets[0]["changeset"]["updated_relationships"],
        json!(["detects:device:d1->cell:c1"])
    );
    let ticks: Vec<&Value> = got.iter().filter(|f| f["type"] == "kpi").collect();
    assert!(!ticks.is_empty(), "{got:?}");
    assert!(ticks.iter().all(|t| t["entity"] == "d1"));
    let rssi: Vec<&Value> = ticks
        .iter()
        .flat_map(|t| t["series"].as_array().unwrap())
        .filter(|s| s["metric"] == "rssi_dbm")
        .collect();
    assert!(rssi
        .iter()
        .all(|s| s["entity"] == "detects:device:d1->cell:c1"));
    let samples: Vec<&Value> = rssi
        .iter()
        .flat_map(|s| s["samples"].as_array().unwrap())
        .collect();
    assert_eq!(samples, [&json!([EPOCH, -80]), &json!([EPOCH + 1000, -70])]);

    let quiet = frames(&mut silent, Duration::from_millis(300)).await;
    assert_eq!(quiet.len(), 1, "{quiet:?}");
    assert_eq!(quiet[0]["type"], "changeset");
}

#[tokio::test]
async fn malformed_subscribe_closes_with_protocol_error() {
    let h = Harness::start(quick()).await;
    for bad in [
        r#"{"subscribe":"d1"}"#,
        "hello",
        r#"{"subscribe":[],"x":1}"#,
    ] {
        let mut ws = connect(&h).await;
        ws.send(Message::text(bad)).await.unwrap();
        let close = tokio::time::timeout(Duration::from_secs(2), async {
            while let Some(Ok(msg)) = ws.next().await {
                if let Message::Close(frame) = msg {
                    return frame.map(|f| u16::from(f.code));
                }
            }
            None
        })
        .await
        .unwrap();
        assert_eq!(close, Some(1002), "{bad}");
    }
}

#[tokio::test]
async fn slow_clients_are_dropped_without_stalling_others() {
    let h = Harness::start(GatewayConfig {
        client_queue: 16,
        ..quick()
    })
    .await;
    let _slow = connect(&h).await;
    let mut fast = connect(&h).await;
    assert_eq!(h.gateway.state().stream_clients(), 2);

    let reader = tokio::spawn(async move {
        let mut seen = 0u32;
        while let Some(Ok(msg)) = fast.next().await {
            if let Message::Text(t) = msg {
                let v: Value = serde_json::from_str(t.as_str()).unwrap();
                seen += 1;
                if v["changeset"]["added_instances"][0] == "last" {
                    return seen;
                }
            }
        }
        seen
    });
    // Large frames so the slow client's socket buffers fill quickly.
    let filler: Vec<String> = (0..2000).map(|i| format!("twin-{i:06}")).collect();
    let publisher = h.broker.client();
    let topic = netwin_core::bus::graph_events_topic();
    for round in 0..400 {
        let payload =
            json!({ "added_instances": [format!("round-{round}")], "updated_instances": filler });
        publisher
            .publish(&topic, payload.to_string().into_bytes())
            .await
            .unwrap();
        if round % 4 == 0 {
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
    }
    let last = json!({ "added_instances": ["last"] });
    publisher
        .publish(&topic, last.to_string().into_bytes())
        .await
        .unwrap();

    let seen = tokio::time::timeout(Duration::from_secs(20), reader)
        .await
        .unwrap()
        .unwrap();
    assert_eq!(seen, 401);
    let deadline = tokio::time::Instant::now() + Duration::from_secs(10);
    while h.gateway.state().stream_clients() > 1 {
        assert!(
            tokio::time::Instant::now() < deadline,
            "slow client still attached"
        );
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

#[tokio::test]
async fn console_assets_are_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("index.html"),
        "<title>netwin console</title>",
    )
    .unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let h = Harness::start(GatewayConfig {
        console_dir: dir.path().to_path_buf(),
        ..quick()
    })
    .await;
    let page = h.http.get(h.url("/console/")).send().await.unwrap();
    assert_eq!(page.status(), 200);
    assert!(page.text().await.unwrap().contains("netwin console"));
    let js = h.http.get(h.url("/console/app.js")).send().await.unwrap();
    assert_eq!(js.status(), 200);
}

fn validator(name: &str) -> jsonschema::Validator {
    let doc = SCHEMAS.iter().find(|(n, _)| *n == name).unwrap().1;
    jsonschema::validator_for(&serde_json::from_str(doc).unwrap()).unwrap()
}

fn check(name: &str, v: &Value) {
    let errors: Vec<String> = validator(name)
        .iter_errors(v)
        .map(|e| e.to_string())
        .collect();
    assert!(errors.is_empty(), "{name}: {errors:?}\n{v}");
}

#[tokio::test]
async fn responses_match_published_schemas() {
    let h = Harness::start(quick()).await;
    populate(&h);

    let (status, index) = h.get("/schemas").await;
    assert_eq!(status, 200);
    assert_eq!(index["schemas"].as_array().unwrap().len(), SCHEMAS.len());
    for (name, _) in SCHEMAS {
        let (status, doc) = h.get(&format!("/schemas/{name}")).await;
        assert_eq!(status, 200);
        assert!(jsonschema::validator_for(&doc).is_ok(), "{name}");
    }
    let (status, body) = h.get("/schemas/nope").await;
    assert_error(status, &body, 404, "unknown_schema");

    let (_, twins) = h.get("/twins").await;
    for t in twins["twins"].as_array().unwrap() {
        check("twin-instance", t);
    }
    let (_, rels) = h.get("/relationships").await;
    for r in rels["relationships"].as_array().unwrap() {
        check("twin-relationship", r);
    }
    let (_, kpis) = h.get("/kpis?entity=env-sensor:s1&metric=co2_ppm").await;
    check("kpi-samples", &kpis);
    let (_, err) = h.get("/twins/device:ghost").await;
    check("api-error", &err);

    let request = json!({ "scope": ["d1"], "stages": ["descriptive", "diagnostic", "predictive", "prescriptive"] });
    check("analytics-request", &request);
    let (_, bundle) = h.post("/analytics/run", &request, None).await;
    check("analytics-bundle", &bundle);
    for action in bundle["reports"]["prescriptive"]["proposed_actions"]
        .as_array()
        .unwrap()
    {
        check("action-command", action);
    }

    let mut tap = h.tap("netwin/actions/#").await;
    let action = json!({ "device_id": "d1", "verb": "set_report_period", "arguments": { "kind": "wifi", "period_ms": 500 } });
    check("action-request", &action);
    assert_eq!(h.post("/actions", &action, Some(TOKEN)).await.0, 202);
    let sent = drain(&mut tap, Duration::from_millis(200)).await;
    check(
        "action-command",
        &serde_json::from_slice(&sent[0].payload).unwrap(),
    );

    let reading = netwin_core::signal::encode_reading(&cellular("d1", "c1", EPOCH, -80.0));
    check("signal-reading", &serde_json::from_str(&reading).unwrap());
    let cs = h
        .controller
        .reconcile(&h.session, &wifi("d2", AP, EPOCH, -60.0))
        .unwrap();
    check(
        "change-set",
        &serde_json::from_str(&cs.to_canonical_json()).unwrap(),
    );
    check(
        "stream-frame",
        &json!({ "type": "changeset", "changeset": cs }),
    );
    check("stream-frame", &json!({ "subscribe": ["d1"] }));
}
