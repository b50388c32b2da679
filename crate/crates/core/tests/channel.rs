use kiss_core::association::{generate_provision, Association, Mode};
use kiss_core::channel::{open, seal_to_wire, ChannelError, MsgType, HEADER_LEN};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn pair(mode: Mode, window: u32) -> (Association, Association) {
    let (i, r) = generate_provision(&mut ChaCha20Rng::seed_from_u64(7), mode, window).unwrap();
    (Association::load(&i).unwrap(), Association::load(&r).unwrap())
}

fn payload(size: usize, salt: u8) -> Vec<u8> {
    (0..size).map(|i| (i as u8).wrapping_mul(31).wrapping_add(salt)).collect()
}

#[test]
fn thousand_round_trips_per_size() {
    for mode in [Mode::AuthOnly, Mode::Aead] {
        let (mut a, mut b) = pair(mode, 1024);
        for size in [0usize, 1, 1500, 65536] {
            for n in 0..1000u32 {
                let p = payload(size, n as u8);
                let wire = seal_to_wire(&mut a, MsgType::Data, &p).unwrap();
                assert_eq!(open(&mut b, &wire).unwrap(), (MsgType::Data, p));
            }
        }
        assert_eq!(b.highest_accepted_seq(), 4000);
    }
}

#[test]
fn every_single_bit_flip_is_rejected() {
    for mode in [Mode::AuthOnly, Mode::Aead] {
        let (mut a, mut b) = pair(mode, 1024);
        let wire = seal_to_wire(&mut a, MsgType::Data, &payload(64, 1)).unwrap();
        assert_eq!(wire.len(), HEADER_LEN + 64 + mode.tag_len());
        let before = *b.recv_chain().current();
        for bit in 0..wire.len() * 8 {
            let mut bad = wire.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            let err = open(&mut b, &bad).expect_err("flipped record delivered");
            let class = err.class();
            assert!(
                ["frame", "association", "replay", "out-of-window", "authentication"].contains(&class),
                "bit {bit}: {class}"
            );
            assert_eq!(b.highest_accepted_seq(), 0);
            assert_eq!(b.recv_chain().current(), &before);
        }
        assert_eq!(open(&mut b, &wire).unwrap().1, payload(64, 1));
    }
}

/// Sends `total` records, drops the ones listed, and reports what the
/// receiver did with each surviving record.
fn run_loss(window: u32, total: u64, dropped: &[u64]) -> Vec<(u64, Result<Vec<u8>, &'static str>)> {
    let (mut a, mut b) = pair(Mode::AuthOnly, window);
    let mut out = Vec::new();
    for seq in 1..=total {
        let p = seq.to_be_bytes().to_vec();
        let wire = seal_to_wire(&mut a, MsgType::Data, &p).unwrap();
        if dropped.contains(&seq) {
            continue;
        }
        out.push((seq, open(&mut b, &wire).map(|(_, p)| p).map_err(|e| e.class())));
    }
    out
}

#[test]
fn loss_gaps_at_window_boundaries() {
    let window = 16u32;
    for (gap, accepted) in [(1u64, true), (2, true), (window as u64, true), (window as u64 + 1, false)] {
        // deliver record 1, lose gap-1 records, then deliver record 1+gap
        let dropped: Vec<u64> = (2..1 + gap).collect();
        let got = run_loss(window, 1 + gap, &dropped);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].1, Ok(1u64.to_be_bytes().to_vec()));
        let last = &got[1];
        assert_eq!(last.0, 1 + gap);
        if accepted {
            assert_eq!(last.1, Ok((1 + gap).to_be_bytes().to_vec()), "gap {gap}");
        } else {
            assert_eq!(last.1, Err("out-of-window"), "gap {gap}");
        }
    }
}

#[test]
fn loss_patterns_are_deterministic() {
    let dropped = [2, 3, 7, 20, 21, 22, 23];
    assert_eq!(run_loss(4, 30, &dropped), run_loss(4, 30, &dropped));
}

#[test]
fn replay_in_any_later_position_is_rejected() {
    let (mut a, mut b) = pair(Mode::Aead, 1024);
    let wires: Vec<Vec<u8>> = (0..10)
        .map(|n| seal_to_wire(&mut a, MsgType::Data, &[n]).unwrap())
        .collect();
    for (n, w) in wires.iter().enumerate() {
        assert_eq!(open(&mut b, w).unwrap().1, vec![n as u8]);
        for old in &wires[..=n] {
            assert!(matches!(open(&mut b, old), Err(ChannelError::Replay { .. })));
        }
    }
}

#[test]
fn out_of_window_after_burst_then_recovery_is_impossible() {
    let window = 8;
    let dropped: Vec<u64> = (2..=10).collect(); // nine consecutive drops
    let got = run_loss(window, 12, &dropped);
    assert_eq!(got[1], (11, Err("out-of-window")));
    // the next record is further away still
    assert_eq!(got[2], (12, Err("out-of-window")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn surviving_records_arrive_in_order(drops in proptest::collection::vec(any::<bool>(), 1..60)) {
        let window = 3u32;
        // cap each run of drops at the window so every gap stays in range
        let mut run = 0;
        let mut dropped = Vec::new();
        for (i, d) in drops.iter().enumerate() {
            let seq = i as u64 + 1;
            if *d && run < window as usize - 1 && seq > 1 {
                dropped.push(seq);
                run += 1;
            } else {
                run = 0;
            }
        }
        let got = run_loss(window, drops.len() as u64, &dropped);
        for (seq, r) in got {
            prop_assert_eq!(r, Ok(seq.to_be_bytes().to_vec()));
        }
    }

    #[test]
    fn random_flips_on_large_records_rejected(byte in 0usize..(HEADER_LEN + 4096 + 32), bit in 0u8..8) {
        let (mut a, mut b) = pair(Mode::AuthOnly, 1024);
        let mut wire = seal_to_wire(&mut a, MsgType::Data, &payload(4096, 9)).unwrap();
        wire[byte] ^= 1 << bit;
        prop_assert!(open(&mut b, &wire).is_err());
    }
}
