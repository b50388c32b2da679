use kiss_core::association::{AssocId, Association, Mode, ProvisionError, ProvisionFile, Role};
use kiss_core::idvv::{Root, Seed};
use proptest::prelude::*;

fn arb_file() -> impl Strategy<Value = ProvisionFile> {
    (
        any::<[u8; 8]>(),
        any::<bool>(),
        any::<bool>(),
        any::<[u8; 32]>(),
        any::<[u8; 32]>(),
        proptest::option::of(1u32..),
    )
        .prop_map(|(id, initiator, aead, seed, root, window)| ProvisionFile {
            assoc_id: AssocId(id),
            role: if initiator { Role::Initiator } else { Role::Responder },
            mode: if aead { Mode::Aead } else { Mode::AuthOnly },
            seed: Seed::new(seed),
            root: Root::new(root),
            resync_window: window,
        })
}

proptest! {
    #[test]
    fn text_round_trip(file in arb_file()) {
        let text = file.to_text();
        prop_assert!(text.ends_with('\n') && !text.contains('\r'));
        prop_assert_eq!(ProvisionFile::parse(&text).unwrap(), file.clone());
        let crlf = format!("# provisioned\r\n\r\n{}", text.replace('\n', "\r\n"));
        prop_assert_eq!(ProvisionFile::parse(&crlf).unwrap(), file);
    }

    #[test]
    fn loaded_association_honours_the_file(file in arb_file()) {
        let a = Association::load(&file).unwrap();
        prop_assert_eq!(a.id(), file.assoc_id);
        prop_assert_eq!(a.role(), file.role);
        prop_assert_eq!(a.mode(), file.mode);
        prop_assert_eq!(a.resync_window(), file.resync_window_or_default());
        prop_assert_eq!(a.send_chain().label(), file.role.chain_labels().0);
    }

    #[test]
    fn any_text_parses_or_errors_cleanly(text in "[ -~\n]{0,300}") {
        let _ = ProvisionFile::parse(&text);
    }
}

#[test]
fn canonical_layout_is_exact() {
    let file = ProvisionFile {
        assoc_id: AssocId([0x01, 0x23, 0x45, 0x67, 0x89, 0xab, 0xcd, 0xef]),
        role: Role::Responder,
        mode: Mode::Aead,
        seed: Seed::new([0xaa; 32]),
        root: Root::new([0x0f; 32]),
        resync_window: Some(64),
    };
    let want = format!(
        "assoc_id = 0123456789abcdef\nrole = responder\nmode = aead\nseed = {}\nroot = {}\nresync_window = 64\n",
        "aa".repeat(32),
        "0f".repeat(32)
    );
    assert_eq!(file.to_text(), want);
}

#[test]
fn malformed_documents_name_the_field() {
    let good = ProvisionFile {
        assoc_id: AssocId([0; 8]),
        role: Role::Initiator,
        mode: Mode::AuthOnly,
        seed: Seed::new([1; 32]),
        root: Root::new([2; 32]),
        resync_window: None,
    }
    .to_text();
    let cases = [
        (good.replace("seed = 01", "seed = zz"), "seed"),
        (good.replace("root = ", "root = 00"), "root"),
        (good.replace("auth", "tls"), "mode"),
        (good.replace("initiator", "observer"), "role"),
        (good.lines().filter(|l| !l.starts_with("root")).collect::<Vec<_>>().join("\n"), "root"),
        (format!("{good}mode = aead\n"), "mode"),
        (format!("{good}resync_window = 0\n"), "resync_window"),
        (format!("{good}colour = blue\n"), "colour"),
    ];
    for (text, field) in cases {
        let err = ProvisionFile::parse(&text).unwrap_err();
        assert_eq!(err.field(), Some(field), "{err}");
    }
    assert!(matches!(
        ProvisionFile::parse("assoc_id 00\n"),
        Err(ProvisionError::Syntax { line: 1 })
    ));
}
