mod common;

use std::net::SocketAddr;

use gaitlens_core::catalog::{catalog, model_channels};
use gaitlens_core::{asymmetry_overview, bin_relevance, overview_relevance, zscore_overview, GaitClass, Side};
use gaitlens_service::dataset::replay_overrides;
use gaitlens_service::{load_dataset, run_pipeline, serve, ApiState, ModelSource, ServedState, ServerHandle, ServiceError};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

fn state() -> ServedState {
    run_pipeline(common::cohort(41, 4), ModelSource::Pretrained(common::random_checkpoint(9))).unwrap()
}

async fn start(api: ApiState) -> (ServerHandle, String) {
    let handle = serve(api, SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let base = format!("http://{}", handle.addr());
    (handle, base)
}

async fn get(base: &str, path: &str) -> (StatusCode, Value) {
    let resp = Client::new().get(format!("{base}{path}")).send().await.unwrap();
    let status = resp.status();
    (status, resp.json().await.unwrap())
}

async fn post(base: &str, path: &str, body: &str) -> (StatusCode, Value) {
    let resp = Client::new()
        .post(format!("{base}{path}"))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    let status = resp.status();
    (status, resp.json().await.unwrap())
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn listing_and_patient_detail() {
    let s = state();
    let ids: Vec<String> = s.dataset.patients.iter().map(|p| p.id.clone()).collect();
    let first = s.dataset.patients[0].clone();
    let (handle, base) = start(ApiState::new(s)).await;

    let (status, list) = get(&base, "/patients").await;
    assert_eq!(status, StatusCode::OK);
    let listed: Vec<&str> = list.as_array().unwrap().iter().map(|p| p["id"].as_str().unwrap()).collect();
    assert_eq!(listed, ids);
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    for p in list.as_array().unwrap() {
        for side in ["left", "right"] {
            let leg = &p["sides"][side];
            assert!(leg["predictedClass"].is_string());
            assert_eq!(floats(&leg["probabilities"]).len(), 4);
            assert!(leg["confirmedClass"].is_string());
        }
    }

    let (status, p) = get(&base, &format!("/patients/{}", first.id)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(p["walkingSpeed"].as_f64().unwrap(), first.walking_speed);
    let channels = p["sides"]["left"]["channels"].as_array().unwrap();
    assert_eq!(channels.len(), 29);
    for (c, row) in catalog().iter().zip(channels) {
        assert_eq!(row["key"], c.key());
        assert_eq!(row["unit"], json!(c.unit()));
        let data = &first.sides[&Side::Left];
        assert_eq!(floats(&row["averaged"]), data.averaged[c].values());
        assert_eq!(row["trials"].as_array().unwrap().len(), data.trials.len());
    }
    assert!(p["sides"]["right"]["events"]["toeOff"].is_number());
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn relevance_rows_match_explanation() {
    let s = state();
    let id = s.dataset.patients[2].id.clone();
    let map = s.legs[&(id.clone(), Side::Right)].relevance.clone();
    let (handle, base) = start(ApiState::new(s)).await;
    let (status, rel) = get(&base, &format!("/patients/{id}/sides/right/relevance")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(rel["targetClass"], json!(map.target_class()));
    let rows = rel["channels"].as_array().unwrap();
    assert_eq!(rows.len(), 14);
    for (c, row) in model_channels().iter().zip(rows) {
        assert_eq!(row["key"], c.key());
        let values = floats(&row["values"]);
        assert_eq!(values.len(), 101);
        assert_eq!(values.as_slice(), map.channel_row(*c).unwrap());
        for (v, level) in values.iter().zip(row["levels"].as_array().unwrap()) {
            assert!((0.0..=1.0).contains(v));
            assert_eq!(level, &json!(bin_relevance(*v).unwrap()));
        }
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn override_is_read_back_and_refreshes_group_stats() {
    let s = state();
    let id = s
        .dataset
        .patients
        .iter()
        .find(|p| s.dataset.patient_label(&p.id) != Some(GaitClass::CrouchGait))
        .unwrap()
        .id
        .clone();
    let crouch_left = s.group_stats[&GaitClass::CrouchGait].per_side[&Side::Left]
        .values()
        .next()
        .unwrap()
        .n;
    let (handle, base) = start(ApiState::new(s)).await;

    let (status, body) = post(&base, &format!("/patients/{id}/sides/left/classification"), r#"{"class":"CrouchGait","note":"knee flexion"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["confirmedClass"], "CrouchGait");
    assert_eq!(body["override"]["note"], "knee flexion");
    assert!(handle.state().stats_stale());

    let (_, p) = get(&base, &format!("/patients/{id}")).await;
    assert_eq!(p["sides"]["left"]["confirmedClass"], "CrouchGait");
    assert_ne!(p["sides"]["right"]["confirmedClass"], "CrouchGait");
    let (_, list) = get(&base, "/patients").await;
    let row = list.as_array().unwrap().iter().find(|r| r["id"] == id.as_str()).unwrap();
    assert_eq!(row["sides"]["left"]["confirmedClass"], "CrouchGait");

    let (status, stats) = get(&base, "/groups/CrouchGait/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["perSide"]["left"][0]["n"], crouch_left + 1);
    assert_eq!(stats["perSide"]["left"].as_array().unwrap().len(), 29);
    assert!(!handle.state().stats_stale());

    // The alternative field name is accepted too.
    let (status, _) = post(&base, &format!("/patients/{id}/sides/left/classification"), r#"{"chosenClass":"JumpGait"}"#).await;
    assert_eq!(status, StatusCode::OK);
    let (_, p) = get(&base, &format!("/patients/{id}")).await;
    assert_eq!(p["sides"]["left"]["confirmedClass"], "JumpGait");
    assert_eq!(handle.state().override_log().len(), 2);
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn overview_modes() {
    let s = state();
    let p = s.dataset.patients[5].clone();
    let id = p.id.clone();
    let asym = asymmetry_overview(&p).unwrap();
    let rel = overview_relevance(&s.legs[&(id.clone(), Side::Left)].relevance, &s.legs[&(id.clone(), Side::Right)].relevance);
    let own = s.dataset.confirmed_class(&id, Side::Left).unwrap();
    let z_own = zscore_overview(&p, &s.group_stats[&own]).unwrap();
    let z_jump = zscore_overview(&p, &s.group_stats[&GaitClass::JumpGait]).unwrap();
    let (handle, base) = start(ApiState::new(s)).await;

    let check = |body: &Value, rows: &gaitlens_core::ChannelRows| {
        let channels = body["channels"].as_array().unwrap();
        assert_eq!(channels.len(), 29);
        for (c, row) in catalog().iter().zip(channels) {
            assert_eq!(row["key"], c.key());
            assert_eq!(floats(&row["values"]), rows[c]);
        }
    };
    let (status, body) = get(&base, &format!("/patients/{id}/sides/left/overview")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["mode"], "standard");
    check(&body, &asym);
    let (_, body) = get(&base, &format!("/patients/{id}/sides/left/overview?mode=explain")).await;
    check(&body, &rel);
    let (_, body) = get(&base, &format!("/patients/{id}/sides/left/overview?mode=group")).await;
    assert_eq!(body["gaitClass"], json!(own));
    check(&body, &z_own);
    let (_, body) = get(&base, &format!("/patients/{id}/sides/left/overview?mode=group&class=JumpGait")).await;
    check(&body, &z_jump);
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn catalog_endpoint() {
    let (handle, base) = start(ApiState::new(state())).await;
    let (status, cat) = get(&base, "/meta/catalog").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cat["featureLength"], 1414);
    assert_eq!(cat["cycleLength"], 101);
    assert_eq!(cat["classes"].as_array().unwrap().len(), 4);
    let channels = cat["channels"].as_array().unwrap();
    assert_eq!(channels.len(), 29);
    assert_eq!(channels.iter().filter(|c| c["inModel"] == true).count(), 14);
    for (c, row) in catalog().iter().zip(channels) {
        assert_eq!(row["key"], c.key());
        assert_eq!(row["label"], c.label());
        assert_eq!(row["modelIndex"], json!(c.model_index()));
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let s = state();
    let id = s.dataset.patients[0].id.clone();
    let (handle, base) = start(ApiState::new(s)).await;
    let not_found = [
        "/patients/999999".to_string(),
        "/patients/999999/sides/left/relevance".to_string(),
        "/nowhere".to_string(),
    ];
    for path in &not_found {
        let (status, body) = get(&base, path).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(body["error"]["status"], 404);
        assert!(body["error"]["message"].is_string());
    }
    let bad = [
        format!("/patients/{id}/sides/middle/relevance"),
        format!("/patients/{id}/sides/left/overview?mode=sideways"),
        format!("/patients/{id}/sides/left/overview?mode=group&class=Limp"),
        "/groups/Limp/stats".to_string(),
    ];
    for path in &bad {
        let (status, body) = get(&base, path).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{path}");
        assert_eq!(body["error"]["status"], 400);
    }
    let url = format!("/patients/{id}/sides/left/classification");
    for body in ["{", "", r#"{"class":"Limp"}"#, r#"{"class":"JumpGait","extra":1}"#, "[]"] {
        let (status, reply) = post(&base, &url, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(reply["error"]["message"].as_str().unwrap().contains("malformed"));
    }
    let (status, _) = post(&base, "/patients/999999/sides/left/classification", r#"{"class":"JumpGait"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(handle.state().override_log().is_empty());
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_group_is_not_found() {
    let mut s = state();
    // Drop every crouch label: no group for that class any more.
    s.dataset.ground_truth.retain(|_, c| *c != GaitClass::CrouchGait);
    s.group_stats.remove(&GaitClass::CrouchGait);
    let (handle, base) = start(ApiState::new(s)).await;
    let (status, _) = get(&base, "/groups/CrouchGait/stats").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn busy_port_is_a_startup_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    match serve(ApiState::new(state()), addr).await {
        Err(ServiceError::Io { .. }) => {}
        Err(other) => panic!("unexpected error {other:?}"),
        Ok(_) => panic!("bound a busy port"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn repeated_gets_are_identical() {
    let s = state();
    let id = s.dataset.patients[1].id.clone();
    let (handle, base) = start(ApiState::new(s)).await;
    let paths = [
        "/patients".to_string(),
        format!("/patients/{id}"),
        format!("/patients/{id}/sides/left/relevance"),
        format!("/patients/{id}/sides/right/overview?mode=group"),
        "/groups/TrueEquinus/stats".to_string(),
        "/meta/catalog".to_string(),
    ];
    let client = Client::new();
    for path in &paths {
        let a = client.get(format!("{base}{path}")).send().await.unwrap().bytes().await.unwrap();
        let b = client.get(format!("{base}{path}")).send().await.unwrap().bytes().await.unwrap();
        assert_eq!(a, b, "{path}");
    }
    handle.shutdown().await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_overrides_replay_and_persist() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("served.json");
    let s = state();
    let base_ds = s.dataset.clone();
    let ids: Vec<String> = base_ds.patients.iter().map(|p| p.id.clone()).collect();
    let (handle, base) = start(ApiState::with_persistence(s, path.clone())).await;
    let mut tasks = Vec::new();
    for i in 0..24 {
        let url = format!("{base}/patients/{}/sides/{}/classification", ids[i % ids.len()], ["left", "right"][i % 2]);
        let body = json!({ "class": GaitClass::ALL[i % 4] });
        let reader = format!("{base}/patients");
        tasks.push(tokio::spawn(async move {
            let client = Client::new();
            let r = client.post(url).json(&body).send().await.unwrap();
            assert_eq!(r.status(), StatusCode::OK);
            let r = client.get(reader).send().await.unwrap();
            assert_eq!(r.status(), StatusCode::OK);
        }));
    }
    for t in tasks {
        t.await.unwrap();
    }
    let api = handle.state().clone();
    let log = api.override_log();
    assert_eq!(log.len(), 24);
    let served = api.confirmed_classes();
    assert_eq!(replay_overrides(&base_ds, &log), served);
    let saved = load_dataset(&path).unwrap();
    assert_eq!(saved.overrides, log);
    assert_eq!(saved.confirmed_classes(), served);
    let (_, list) = get(&base, "/patients").await;
    for row in list.as_array().unwrap() {
        let id = row["id"].as_str().unwrap().to_string();
        for side in Side::BOTH {
            assert_eq!(row["sides"][side.name()]["confirmedClass"], json!(served[&(id.clone(), side)]));
        }
    }
    handle.shutdown().await.unwrap();
}
