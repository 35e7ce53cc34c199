use super::*;
use crate::adversary::{flip_probability, EveStrategy};
use crate::codec::{format_bits, make_scheme, parse_bits};
use crate::qubit::{average_density, DensityMatrix};
use proptest::prelude::*;

fn bits(s: &str) -> Vec<Bit> {
    parse_bits(s).unwrap()
}

fn cfg4() -> SessionConfig {
    SessionConfig {
        package_length: 4,
        shared_secret_seed: 99,
        ..SessionConfig::default()
    }
}

fn random_message(seed: u64, packages: usize, payload_bits: usize) -> Vec<Vec<Bit>> {
    let mut rng = RngStream::new(seed, "message");
    (0..packages)
        .map(|_| (0..payload_bits).map(|_| Bit::from_bool(rng.bit())).collect())
        .collect()
}

#[test]
fn send_package_emits_codeword_on_basis() {
    let cfg = cfg4();
    let scheme = make_scheme(4).unwrap();
    let mut alice = EndpointState::new(Role::Alice, &cfg);
    let mut ch = QubitChannel::new();
    let mut log = Transcript::recording();
    alice.alice_send_package(&scheme, &bits("00"), &mut ch, &mut log).unwrap();
    let qs = ch.take(4).unwrap();
    assert_eq!(qs.iter().map(|c| c.bit).collect::<Vec<_>>(), bits("0011"));
    assert!(qs.iter().all(|c| c.axis == cfg.initial_basis.current()));
    let states: Vec<_> = qs.iter().map(|c| (c.bit, c.axis)).collect();
    assert!(average_density(&states)
        .unwrap()
        .approx_eq(&DensityMatrix::maximally_mixed(), 1e-12));
    assert_eq!(log.len(), 4);
    assert_eq!(
        alice.alice_send_package(&scheme, &bits("01"), &mut ch, &mut log),
        Err(ProtocolError::ProtocolOrder("previous package not yet confirmed"))
    );
}

#[test]
fn send_package_rejects_bad_payload() {
    let cfg = cfg4();
    let scheme = make_scheme(4).unwrap();
    let mut alice = EndpointState::new(Role::Alice, &cfg);
    let err = alice
        .alice_send_package(&scheme, &bits("000"), &mut QubitChannel::new(), &mut Transcript::counting())
        .unwrap_err();
    assert!(matches!(err, ProtocolError::Codec(CodecError::PayloadSize { .. })));
}

#[test]
fn bob_reads_undisturbed_package() {
    let cfg = cfg4();
    let scheme = make_scheme(4).unwrap();
    let mut alice = EndpointState::new(Role::Alice, &cfg);
    let mut bob = EndpointState::new(Role::Bob, &cfg);
    let mut ch = QubitChannel::new();
    let mut log = Transcript::counting();
    let mut rng = RngStream::new(1, "bob");
    for payload in ["00", "01", "10", "11"] {
        alice.pending_package = None;
        alice.alice_send_package(&scheme, &bits(payload), &mut ch, &mut log).unwrap();
        let r = bob.bob_receive_package(&scheme, &cfg, &mut ch, &mut rng, &mut log).unwrap();
        assert_eq!(r.decoded, Decoded::Data(bits(payload)));
        assert_eq!(r.reply.unwrap().bits, scheme.encode(&bits(payload)).unwrap().bits);
    }
    assert_eq!(
        bob.bob_receive_package(&scheme, &cfg, &mut ch, &mut rng, &mut log),
        Err(ProtocolError::ChannelEmpty)
    );
}

#[test]
fn bob_unbalanced_rate_under_orthogonal_eve() {
    // Each bit flips independently with probability flip_probability(0) = 1/2,
    // so the received word is uniform over 16 strings: 6 balanced.
    let p = flip_probability(0.0);
    let mut unbalanced_exact = 0.0;
    for word in 0u32..16 {
        let flips = word.count_ones() as i32;
        let prob = p.powi(flips) * (1.0 - p).powi(4 - flips);
        let sent = 0b0011u32;
        if (sent ^ word).count_ones() != 2 {
            unbalanced_exact += prob;
        }
    }
    assert!((unbalanced_exact - 10.0 / 16.0).abs() < 1e-15);

    let cfg = cfg4();
    let scheme = make_scheme(4).unwrap();
    let mut bob = EndpointState::new(Role::Bob, &cfg);
    let mut eve = crate::adversary::Eve::new(
        EveStrategy::FixedAxisMeasure { axis: [1.0, 0.0, 0.0] },
        cfg.initial_basis,
        RngStream::new(2, "eve"),
    )
    .unwrap();
    let mut rng = RngStream::new(2, "bob");
    let mut log = Transcript::counting();
    let trials = 40_000;
    let mut unbalanced = 0;
    for _ in 0..trials {
        let mut ch = QubitChannel::new();
        for b in bits("0011") {
            let c = crate::adversary::eve_intercept(&mut eve, Carrier::new(b, Bloch::e3())).unwrap();
            ch.push(c);
        }
        let r = bob.bob_receive_package(&scheme, &cfg, &mut ch, &mut rng, &mut log).unwrap();
        if r.decoded == Decoded::Unbalanced {
            unbalanced += 1;
            assert_eq!(r.reply, scheme.error_signal());
        }
    }
    let f = unbalanced as f64 / trials as f64;
    let sigma = (unbalanced_exact * (1.0 - unbalanced_exact) / trials as f64).sqrt();
    assert!((f - unbalanced_exact).abs() < 4.0 * sigma, "{f}");
}

#[test]
fn feedback_match_and_mismatch() {
    let cfg = cfg4();
    let scheme = make_scheme(4).unwrap();
    let mut alice = EndpointState::new(Role::Alice, &cfg);
    let mut ch = QubitChannel::new();
    let mut log = Transcript::recording();

    assert_eq!(
        alice.alice_process_feedback(&scheme, &bits("0011"), &mut ch, &mut log),
        Err(ProtocolError::ProtocolOrder("feedback without a pending package"))
    );

    alice.alice_send_package(&scheme, &bits("00"), &mut ch, &mut log).unwrap();
    ch.take(4).unwrap();
    let fb = alice.alice_process_feedback(&scheme, &bits("0011"), &mut ch, &mut log).unwrap();
    assert_eq!(fb, Feedback::Matched(PackageRole::Data));
    assert_eq!(alice.packages_since_last_error, 1);
    assert!(alice.collected_error_intervals.is_empty());
    assert!(ch.is_empty());

    alice.alice_send_package(&scheme, &bits("11"), &mut ch, &mut log).unwrap();
    ch.take(4).unwrap();
    let before = log.len();
    let fb = alice.alice_process_feedback(&scheme, &bits("0011"), &mut ch, &mut log).unwrap();
    assert_eq!(fb, Feedback::Mismatch);
    assert_eq!(alice.collected_error_intervals, vec![1]);
    assert_eq!(alice.packages_since_last_error, 0);
    let kinds: Vec<_> = log.events()[before as usize..]
        .iter()
        .filter(|e| !matches!(e.event, EventKind::QubitSent { .. }))
        .map(|e| std::mem::discriminant(&e.event))
        .collect();
    assert_eq!(kinds.len(), 3);
    assert!(log.events().iter().any(|e| matches!(e.event, EventKind::ErrorSignal { interval: 1, .. })));
    assert!(log.events().iter().any(|e| matches!(e.event, EventKind::Resend { attempt: 2, .. })));
    // error signal then the resent package
    let sent: Vec<Bit> = ch.take(8).unwrap().iter().map(|c| c.bit).collect();
    assert_eq!(format_bits(&sent), "10101001");

    // an unbalanced echo is just another mismatch
    let fb = alice.alice_process_feedback(&scheme, &bits("0111"), &mut ch, &mut log).unwrap();
    assert_eq!(fb, Feedback::Mismatch);
}

#[test]
fn endpoints_derive_identical_bases() {
    let cfg = cfg4();
    let mut a = EndpointState::new(Role::Alice, &cfg);
    let mut b = EndpointState::new(Role::Bob, &cfg);
    let mut log = Transcript::recording();
    for _ in 0..20 {
        let ta = a.advance_basis(&cfg, &mut log).unwrap();
        let tb = b.advance_basis(&cfg, &mut log).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.current_basis, b.current_basis);
    }
    let changes = log
        .events()
        .iter()
        .filter(|e| matches!(e.event, EventKind::BasisChanged { role: Role::Alice, .. }))
        .count();
    assert_eq!(changes, 20);
}

#[test]
fn different_error_history_changes_walk_after_refresh() {
    let cfg = cfg4();
    let mut a = EndpointState::new(Role::Alice, &cfg);
    let mut b = EndpointState::new(Role::Bob, &cfg);
    b.collected_error_intervals.push(7);
    let mut log = Transcript::counting();
    let refresh = cfg.refresh_every() as usize;
    let mut diverged = false;
    for k in 0..refresh + 16 {
        let ta = a.advance_basis(&cfg, &mut log).unwrap();
        let tb = b.advance_basis(&cfg, &mut log).unwrap();
        if k < refresh {
            assert_eq!(ta, tb);
        }
        diverged |= ta != tb;
    }
    assert!(diverged);
}

#[test]
fn monitor_thresholds() {
    let cfg = cfg4();
    let mut e = EndpointState::new(Role::Alice, &cfg);
    for _ in 0..49 {
        e.stats.record(true);
    }
    // window not yet full
    assert_eq!(e.monitor_intervention(&cfg), Monitor::Continue);
    e.stats.record(true);
    assert_eq!(e.monitor_intervention(&cfg), Monitor::Abort { error_rate: 1.0 });

    let lax = SessionConfig {
        error_rate_threshold: 1.0,
        ..cfg4()
    };
    assert_eq!(e.monitor_intervention(&lax), Monitor::Continue);

    let mut clean = EndpointState::new(Role::Alice, &cfg);
    for i in 0..500 {
        clean.stats.record(i % 50 == 0);
    }
    assert_eq!(clean.monitor_intervention(&cfg), Monitor::Continue);
}

#[test]
fn config_validation() {
    for (cfg, field) in [
        (SessionConfig { package_length: 2, ..cfg4() }, "package_length"),
        (SessionConfig { error_rate_threshold: 0.0, ..cfg4() }, "error_rate_threshold"),
        (SessionConfig { monitoring_window: 9, ..cfg4() }, "monitoring_window"),
        (SessionConfig { max_attempts: 0, ..cfg4() }, "max_attempts"),
    ] {
        match cfg.validate() {
            Err(ProtocolError::Config { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{other:?}"),
        }
    }
    assert!(cfg4().validate().is_ok());
}

#[test]
fn clean_session_delivers_and_changes_basis() {
    let cfg = cfg4();
    let msg = random_message(3, 100, 2);
    let out = run_session(&cfg, &msg, &EveStrategy::PassiveOff, 3, true).unwrap();
    assert!(out.abort.is_none());
    assert_eq!(out.delivered(), msg.as_slice());
    assert_eq!(out.alice.delivered, msg);
    assert_eq!(out.bit_error_rate(&msg), 0.0);
    assert_eq!(out.alice.basis_changes, 6);
    assert_eq!(out.bob.basis_changes, 6);
    assert_eq!(out.alice.current_basis, out.bob.current_basis);
    assert_eq!(out.alice.stats.errors, 0);
}

#[test]
fn transcript_properties() {
    let cfg = cfg4();
    let msg = random_message(4, 40, 2);
    let out = run_session(&cfg, &msg, &EveStrategy::PassiveOff, 4, true).unwrap();
    let events = out.transcript.events();
    for w in events.windows(2) {
        assert!(w[0].index < w[1].index);
    }

    // Alice's qubits come in balanced packages
    let alice_bits: Vec<Bit> = events
        .iter()
        .filter_map(|e| match e.event {
            EventKind::QubitSent { from: Role::Alice, bit, .. } => Some(bit),
            _ => None,
        })
        .collect();
    assert_eq!(alice_bits.len() % 4, 0);
    for pkg in alice_bits.chunks(4) {
        assert!(crate::codec::is_balanced(pkg));
    }

    // Basis changes come in Alice/Bob pairs with equal bases.
    let changes: Vec<(Role, [f64; 3])> = events
        .iter()
        .filter_map(|e| match &e.event {
            EventKind::BasisChanged { role, basis, .. } => Some((*role, *basis)),
            _ => None,
        })
        .collect();
    assert_eq!(changes.len(), 4);
    for pair in changes.chunks(2) {
        assert_eq!(pair[0].0, Role::Bob);
        assert_eq!(pair[1].0, Role::Alice);
        assert_eq!(pair[0].1, pair[1].1);
    }

    // every delivered data package was echoed and matched, in order
    let scheme = make_scheme(4).unwrap();
    let matched: Vec<String> = events
        .iter()
        .filter_map(|e| match &e.event {
            EventKind::FeedbackEcho { sent, matched: true, .. } => Some(sent.clone()),
            _ => None,
        })
        .filter(|s| matches!(scheme.decode(&bits(s)).unwrap(), Decoded::Data(_)))
        .collect();
    let expected: Vec<String> = out
        .delivered()
        .iter()
        .map(|p| format_bits(&scheme.encode(p).unwrap().bits))
        .collect();
    assert_eq!(matched, expected);

    // replay: the sequence of Alice's bases in the transcript equals the walk
    let bases: Vec<[f64; 3]> = changes.iter().filter(|c| c.0 == Role::Alice).map(|c| c.1).collect();
    assert_eq!(*bases.last().unwrap(), out.alice.current_basis.to_array());
}

#[test]
fn passive_eve_changes_nothing() {
    let cfg = cfg4();
    let msg = random_message(5, 60, 2);
    let a = run_session(&cfg, &msg, &EveStrategy::PassiveOff, 5, true).unwrap();
    let b = run_session(&cfg, &msg, &EveStrategy::PassiveOff, 5, true).unwrap();
    assert_eq!(a.transcript.events(), b.transcript.events());
    let mut x = Vec::new();
    let mut y = Vec::new();
    a.transcript.write_jsonl(&mut x).unwrap();
    b.transcript.write_jsonl(&mut y).unwrap();
    assert_eq!(x, y);
}

#[test]
fn random_axis_eve_aborts_within_one_window() {
    // Averaged over uniformly random axes, E[(1 - c^2)/2] = 1/2 - 1/6 = 1/3.
    let mut rng = RngStream::new(10, "axes");
    let n = 200_000;
    let mut acc = 0.0;
    let mut axes = Vec::new();
    for i in 0..n {
        let v = loop {
            let v = Bloch::new(2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
            if v.norm() > 0.1 && v.norm() <= 1.0 {
                break v.normalized();
            }
        };
        acc += flip_probability(v.dot(&Bloch::e3()));
        if i < 200 {
            axes.push(v);
        }
    }
    assert!((acc / n as f64 - 1.0 / 3.0).abs() < 0.003);

    let cfg = SessionConfig {
        shared_secret_seed: 1,
        ..SessionConfig::default()
    };
    let msg = random_message(0, 400, 4);
    let mut first_window = 0;
    for (seed, axis) in axes.iter().enumerate() {
        let strategy = EveStrategy::FixedAxisMeasure { axis: axis.to_array() };
        let out = run_session(&cfg, &msg, &strategy, seed as u64, false).unwrap();
        let abort = out.abort.expect("eve must be caught");
        if abort.after_packages == cfg.monitoring_window as u64 {
            first_window += 1;
        }
    }
    assert!(first_window >= 198, "{first_window}");
}

#[test]
fn lax_threshold_never_aborts_on_error_rate() {
    let cfg = SessionConfig {
        error_rate_threshold: 1.0,
        max_attempts: 8,
        ..cfg4()
    };
    let msg = random_message(6, 50, 2);
    let strategy = EveStrategy::FixedAxisMeasure { axis: [1.0, 0.0, 0.0] };
    let out = run_session(&cfg, &msg, &strategy, 6, false).unwrap();
    if let Some(a) = out.abort {
        assert_eq!(a.reason, AbortReason::RetryLimit);
    }
}

#[test]
fn intercept_resend_flags_reach_bob() {
    let cfg = cfg4();
    let msg = random_message(7, 10, 2);
    let strategy = EveStrategy::InterceptResend {
        axis: cfg.initial_basis.current().to_array(),
    };
    let cfg = SessionConfig {
        basis_change_period: 0,
        ..cfg
    };
    let out = run_session(&cfg, &msg, &strategy, 7, false).unwrap();
    assert!(out.abort.is_none());
    assert_eq!(out.delivered(), msg.as_slice());
    assert_eq!(out.latency_flags_seen, 40);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn clean_delivery_is_exact(seed in any::<u64>(), packages in 0usize..80, six in any::<bool>()) {
        let cfg = SessionConfig {
            package_length: if six { 6 } else { 4 },
            shared_secret_seed: seed.rotate_left(7),
            ..SessionConfig::default()
        };
        let payload_bits = if six { 4 } else { 2 };
        let msg = random_message(seed, packages, payload_bits);
        let out = run_session(&cfg, &msg, &EveStrategy::PassiveOff, seed, false).unwrap();
        prop_assert!(out.abort.is_none());
        prop_assert_eq!(out.delivered(), msg.as_slice());
        prop_assert_eq!(out.alice.current_basis, out.bob.current_basis);
        prop_assert_eq!(out.alice.walk, out.bob.walk);
    }

    #[test]
    fn error_stats_window_counts(errors in proptest::collection::vec(any::<bool>(), 0..200)) {
        let mut s = ErrorStats::new(10);
        for e in &errors {
            s.record(*e);
        }
        prop_assert_eq!(s.packages as usize, errors.len());
        if errors.len() >= 10 {
            let tail = errors[errors.len() - 10..].iter().filter(|e| **e).count();
            prop_assert_eq!(s.windowed_rate(), Some(tail as f64 / 10.0));
        } else {
            prop_assert_eq!(s.windowed_rate(), None);
        }
    }
}
