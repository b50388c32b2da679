use std::fs;
use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

const KISS: &str = env!("CARGO_BIN_EXE_kiss");

fn kiss(args: &[&str]) -> Output {
    Command::new(KISS).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn provision(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["provision", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = kiss(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o).trim().to_string()
}

/// Starts a server on an ephemeral port and returns it with its address.
fn server(provision: &Path) -> (Child, String) {
    let mut child = Command::new(KISS)
        .args(["server", "--provision", provision.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.as_mut().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening ").expect(&line).to_string();
    (child, addr)
}

#[test]
fn vectors_match_chain_oracle() {
    let o = kiss(&["vectors"]);
    assert!(o.status.success());
    let zeros = "0".repeat(64);
    let want = format!(
        "seed {zeros}\nroot {zeros}\nlabel c2s\n\
         1 659fa1ad94352ec5125c44affc7fd62ea40b66172c61224176c6386dc79750aa\n\
         2 f13ac22379f9cacf5bd36494920fb8b7b23d276ab4224b8a95d4850d268709e1\n\
         3 3e21c7be127af74f9de692e7d84a697f7dcaba5a3bf62a2f5b930e094edc7c7f\n\
         4 d32dc4dd9ae6a76b076120f1ac3043dc5cdc91b88b92aa444e485f7644fc642d\n"
    );
    assert_eq!(stdout(&o), want);
}

#[test]
fn provision_writes_a_matched_pair() {
    let dir = tempfile::tempdir().unwrap();
    let id = provision(dir.path(), &[]);
    assert_eq!(id.len(), 16);
    let init = fs::read_to_string(dir.path().join("initiator.kiss")).unwrap();
    let resp = fs::read_to_string(dir.path().join("responder.kiss")).unwrap();
    assert!(init.contains("role = initiator") && resp.contains("role = responder"));
    for text in [&init, &resp] {
        assert!(text.starts_with(&format!("assoc_id = {id}\n")));
        assert!(text.contains("mode = auth\n"));
    }
    let secret_lines = |t: &str| t.lines().filter(|l| l.starts_with("seed") || l.starts_with("root")).map(String::from).collect::<Vec<_>>();
    assert_eq!(secret_lines(&init), secret_lines(&resp));

    // existing files are not overwritten without --force
    let again = kiss(&["provision", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(1));
    provision(dir.path(), &["--force", "--mode", "aead", "--window", "64"]);
    for role in ["initiator", "responder"] {
        let text = fs::read_to_string(dir.path().join(format!("{role}.kiss"))).unwrap();
        assert!(text.contains("mode = aead\n") && text.contains("resync_window = 64\n"));
    }
}

#[test]
fn provision_into_missing_directory_fails() {
    let o = kiss(&["provision", "--out-dir", "/nonexistent/kiss/dir"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("io error"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["frobnicate"],
        vec!["vectors", "--bogus"],
        vec!["provision"],
        vec!["provision", "--out-dir", "/tmp", "--mode", "tls"],
        vec!["provision", "--out-dir", "/tmp", "--window", "0"],
        vec!["client", "--provision", "x", "--send", "a", "--count", "3"],
        vec!["bench", "--suite", "gpu"],
    ] {
        assert_eq!(kiss(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn client_server_round_trip() {
    for mode in ["auth", "aead"] {
        let dir = tempfile::tempdir().unwrap();
        provision(dir.path(), &["--mode", mode]);
        let (srv, addr) = server(&dir.path().join("responder.kiss"));
        let client = kiss(&[
            "client",
            "--provision",
            dir.path().join("initiator.kiss").to_str().unwrap(),
            "--connect",
            &addr,
            "--count",
            "200",
        ]);
        assert!(client.status.success(), "{}", stderr(&client));
        assert!(stdout(&client).starts_with("exchanged 200 records"));
        let srv = srv.wait_with_output().unwrap();
        assert!(srv.status.success(), "{}", stderr(&srv));
        assert!(stdout(&srv).contains("after 200 records"));
    }
}

#[test]
fn send_prints_the_acknowledgment() {
    let dir = tempfile::tempdir().unwrap();
    provision(dir.path(), &[]);
    let (srv, addr) = server(&dir.path().join("responder.kiss"));
    let client = kiss(&[
        "client",
        "--provision",
        dir.path().join("initiator.kiss").to_str().unwrap(),
        "--connect",
        &addr,
        "--send",
        "flow-mod 42",
    ]);
    assert!(client.status.success(), "{}", stderr(&client));
    assert_eq!(stdout(&client), "flow-mod 42\n");
    assert!(srv.wait_with_output().unwrap().status.success());
}

#[test]
fn mismatched_seeds_fail_authentication() {
    let a = tempfile::tempdir().unwrap();
    provision(a.path(), &[]);
    let init = a.path().join("initiator.kiss");
    let text = fs::read_to_string(&init).unwrap();
    let forged: String = text
        .lines()
        .map(|l| if l.starts_with("seed = ") { format!("seed = {}\n", "ab".repeat(32)) } else { format!("{l}\n") })
        .collect();
    assert_ne!(forged, text);
    fs::write(&init, forged).unwrap();
    let (srv, addr) = server(&a.path().join("responder.kiss"));
    let client = kiss(&[
        "client",
        "--provision",
        init.to_str().unwrap(),
        "--connect",
        &addr,
    ]);
    assert_eq!(client.status.code(), Some(1));
    let err = stderr(&client);
    assert!(err.contains("authentication error"), "{err}");
    let srv = srv.wait_with_output().unwrap();
    assert_eq!(srv.status.code(), Some(1));
}

#[test]
fn occupied_port_is_a_bind_error() {
    let dir = tempfile::tempdir().unwrap();
    provision(dir.path(), &[]);
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let o = kiss(&[
        "server",
        "--provision",
        dir.path().join("responder.kiss").to_str().unwrap(),
        "--listen",
        &addr,
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bind error"), "{}", stderr(&o));
}

#[test]
fn wrong_role_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    provision(dir.path(), &[]);
    let o = kiss(&[
        "server",
        "--provision",
        dir.path().join("initiator.kiss").to_str().unwrap(),
        "--listen",
        "127.0.0.1:0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("provision error"));
}

#[test]
fn tls_suite_without_tool_reports_skipped_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tls.csv");
    let o = kiss(&[
        "bench",
        "--suite",
        "tls",
        "--sizes",
        "64,512",
        "--duration-ms",
        "100",
        "--tls-command",
        "kiss-missing-speed-tool {size}",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("skipped") && out.contains("core protocol source lines"));
    let csv = fs::read_to_string(csv).unwrap();
    assert!(csv.starts_with("case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us"));
    assert!(csv.contains("tls:tls-baseline,64,,,,,"));
    assert!(csv.contains("kiss:channel-auth,512,"));
    assert_eq!(csv.lines().count(), 1 + 3 * 2);
}

#[test]
fn primitives_suite_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let o = kiss(&["bench", "--sizes", "64", "--iterations", "1000", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "case,size_bytes,ops_per_sec,mb_per_sec,p50_us,p99_us");
    for name in ["hash-sha256", "hmac-sha256", "aead-aes256gcm", "sign-rsa2048", "sign-ecdsa-p256", "idvv-step"] {
        assert!(csv.contains(&format!("\n{name},64,")), "{name}");
    }
}

#[test]
fn randomness_reports_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let o = kiss(&["randomness", "--bits", "20000", "--trials", "20", "--csv", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("verdict: PASS"));
    assert_eq!(fs::read_to_string(csv).unwrap().lines().count(), 1 + 20 * 7);
    let bad = kiss(&["randomness", "--trials", "5"]);
    assert_eq!(bad.status.code(), Some(1));
}
