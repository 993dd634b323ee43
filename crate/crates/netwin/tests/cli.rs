use std::process::Stdio;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::process::Command;

fn netwin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_netwin"));
    cmd.env("RUST_LOG", "warn").kill_on_drop(true);
    cmd
}

#[tokio::test]
async fn all_in_one_serves_and_snapshots_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = netwin()
        .args(["all-in-one", "--seed", "7", "--port", "0", "--snapshot-dir"])
        .arg(dir.path())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = tokio::time::timeout(Duration::from_secs(10), lines.next_line())
        .await
        .unwrap()
        .unwrap()
        .unwrap();
    let url = first
        .strip_prefix("gateway listening on ")
        .unwrap()
        .to_string();

    let http = reqwest::Client::new();
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    let twins: serde_json::Value = loop {
        let body: serde_json::Value = http
            .get(format!("{url}/twins"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if !body["twins"].as_array().unwrap().is_empty() {
            break body;
        }
        assert!(tokio::time::Instant::now() < deadline, "no twins after 5 s");
        tokio::time::sleep(Duration::from_millis(50)).await;
    };
    assert!(twins["twins"].as_array().unwrap().len() > 1);

    let pid = child.id().unwrap().to_string();
    let killed = std::process::Command::new("kill")
        .args(["-INT", &pid])
        .status()
        .unwrap();
    assert!(killed.success());
    let status = tokio::time::timeout(Duration::from_secs(10), child.wait())
        .await
        .unwrap()
        .unwrap();
    assert!(status.success(), "{status}");

    let rest = tokio::time::timeout(Duration::from_secs(2), async {
        let mut out = Vec::new();
        while let Ok(Some(l)) = lines.next_line().await {
            out.push(l);
        }
        out
    })
    .await
    .unwrap();
    assert!(
        rest.iter().any(|l| l.starts_with("snapshot written to")),
        "{rest:?}"
    );
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[tokio::test]
async fn missing_scenario_names_the_path() {
    let out = netwin()
        .args([
            "all-in-one",
            "--port",
            "0",
            "--scenario",
            "/definitely/not/here.json",
        ])
        .output()
        .await
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/definitely/not/here.json"), "{stderr}");
}

#[tokio::test]
async fn invalid_flags_are_rejected() {
    let out = netwin()
        .args(["all-in-one", "--alpha", "1.5"])
        .output()
        .await
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha"));

    let out = netwin().args(["handler"]).output().await.unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mqtt"));

    let out = netwin()
        .args(["serve", "--realtime", "--fast"])
        .output()
        .await
        .unwrap();
    assert!(!out.status.success());
}

#[tokio::test]
async fn unreachable_broker_fails() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let out = tokio::time::timeout(
        Duration::from_secs(30),
        netwin()
            .args(["controller", "--bus", &format!("mqtt://127.0.0.1:{port}")])
            .output(),
    )
    .await
    .unwrap()
    .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
