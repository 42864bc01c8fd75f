use std::fs;

use jade_client::{bundle_from_file, is_unreachable, Client, ClientError};
use jade_core::env::load_config;
use jade_core::scenarios::{builtin_behavior, chase};

#[test]
fn behavior_files_are_read_relative_to_the_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("minds")).unwrap();
    fs::write(dir.path().join("minds/hunt.csm"), builtin_behavior("predator").unwrap()).unwrap();
    let xml = chase::chase_config(&chase::ChaseParams::default(), 0).replacen("builtin:predator", "minds/hunt.csm", 1);
    fs::write(dir.path().join("run.xml"), &xml).unwrap();

    let bundle = bundle_from_file(&dir.path().join("run.xml")).unwrap();
    assert_eq!(bundle.config, xml);
    assert_eq!(bundle.assets.keys().collect::<Vec<_>>(), ["minds/hunt.csm"]);
    load_config(&bundle.config, &bundle.assets).unwrap();
}

#[test]
fn missing_behavior_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let xml = chase::chase_config(&chase::ChaseParams::default(), 0).replacen("builtin:prey", "gone.csm", 1);
    fs::write(dir.path().join("run.xml"), xml).unwrap();
    match bundle_from_file(&dir.path().join("run.xml")) {
        Err(ClientError::Read { path, .. }) => assert!(path.ends_with("gone.csm")),
        other => panic!("{other:?}"),
    }
    fs::write(dir.path().join("bad.xml"), "<jade").unwrap();
    let e = bundle_from_file(&dir.path().join("bad.xml")).unwrap_err();
    assert!(!e.diagnostics().is_empty());
}

#[tokio::test]
async fn nothing_listening_is_reported_as_unreachable() {
    // grab a free port, then let it go
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let c = Client::new(format!("http://127.0.0.1:{port}/"));
    assert_eq!(c.base(), format!("http://127.0.0.1:{port}"));
    let e = c.health().await.unwrap_err();
    assert!(is_unreachable(&e), "{e}");
    assert_eq!(e.status(), None);
}
