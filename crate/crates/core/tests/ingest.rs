mod common;

use std::fs::{self, OpenOptions};
use std::io::Write;

use proptest::prelude::*;

use common::{crc32c_bitwise, frame_oracle, masked_crc_oracle, proto};
use fairboard::ingest::event::{encode_file_version, encode_scalar_event};
use fairboard::ingest::frame::{encode_frame, write_frame};
use fairboard::ingest::predictions::write_prediction_log;
use fairboard::ingest::{
    decode_event, decode_scalar_event, discover_runs, load_run, read_record_stream, Env, FrameError, FrameReader,
    Ingestor, MaskedCrc, PredictionRecord, CONFIG_FILE, PREDICTIONS_FILE,
};

#[test]
fn crc32c_check_value() {
    // Standard CRC-32C check value for ASCII "123456789".
    assert_eq!(crc32c_bitwise(b"123456789"), 0xE306_9283);
}

#[test]
fn masked_crc_matches_bitwise_oracle() {
    let mut buf = Vec::new();
    for i in 0..2048u32 {
        buf.push((i.wrapping_mul(2_654_435_761) >> 13) as u8);
        assert_eq!(MaskedCrc::compute(&buf).0, masked_crc_oracle(&buf), "len {}", buf.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frames_match_oracle_layout(payload in proptest::collection::vec(any::<u8>(), 0..512)) {
        prop_assert_eq!(encode_frame(&payload), frame_oracle(&payload));
    }

    #[test]
    fn frame_sequences_round_trip(payloads in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..64), 0..20)) {
        let mut stream = Vec::new();
        for p in &payloads {
            write_frame(&mut stream, p).unwrap();
        }
        let frames = read_record_stream(&stream[..]).unwrap();
        let got: Vec<Vec<u8>> = frames.into_iter().map(|f| f.payload).collect();
        prop_assert_eq!(got, payloads);
    }

    #[test]
    fn truncation_never_yields_a_partial_frame(payload in proptest::collection::vec(any::<u8>(), 1..64), cut in 1usize..80) {
        let mut stream = encode_frame(b"first");
        let whole = encode_frame(&payload);
        let cut = cut.min(whole.len() - 1);
        stream.extend_from_slice(&whole[..cut]);
        let mut reader = FrameReader::new(&stream[..]);
        let first = reader.next().unwrap().unwrap();
        prop_assert_eq!(&first.payload, &b"first".to_vec());
        prop_assert!(reader.next().is_none());
        prop_assert_eq!(reader.offset(), first.offset + first.encoded_len());
    }

    #[test]
    fn prost_encoded_events_decode_bit_exactly(
        wall in any::<f64>().prop_filter("finite", |w| w.is_finite()),
        step in 0i64..i64::MAX,
        tag in "[a-z][a-z0-9_/]{0,24}",
        bits in any::<u32>().prop_filter("finite", |b| f32::from_bits(*b).is_finite()),
    ) {
        let value = f32::from_bits(bits);
        let payload = proto::scalar_event(wall, step, &[(&tag, value)]);
        let events = decode_scalar_event(&payload).unwrap();
        prop_assert_eq!(events.len(), 1);
        // proto3 omits fields equal to their default, and -0.0 == 0.0.
        let sent_wall = if wall == 0.0 { 0.0 } else { wall };
        prop_assert_eq!(events[0].wall_time.to_bits(), sent_wall.to_bits());
        prop_assert_eq!(events[0].step, step as u64);
        prop_assert_eq!(&events[0].tag, &tag);
        prop_assert_eq!(events[0].value.to_bits(), f64::from(value).to_bits());
    }

    #[test]
    fn own_encoder_agrees_with_prost(wall in 0.0f64..2e9, step in 0u64..1 << 40, v in -1e6f32..1e6) {
        use prost::Message;
        let ours = encode_scalar_event(wall, step, &[("loss", v)]);
        let decoded = proto::Event::decode(&ours[..]).unwrap();
        prop_assert_eq!(decoded.wall_time.to_bits(), wall.to_bits());
        prop_assert_eq!(decoded.step as u64, step);
        let values = decoded.summary.unwrap().value;
        prop_assert_eq!(values.len(), 1);
        prop_assert_eq!(values[0].simple_value.map(f32::to_bits), Some(v.to_bits()));
    }

    #[test]
    fn decoder_never_panics_on_garbage(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
        let _ = decode_event(&bytes);
    }
}

#[test]
fn every_single_bit_flip_in_a_64_byte_frame_is_rejected() {
    let payload: Vec<u8> = (0..48u8).collect();
    let frame = encode_frame(&payload);
    assert_eq!(frame.len(), 64);
    for bit in 0..frame.len() * 8 {
        let mut bad = frame.clone();
        bad[bit / 8] ^= 1 << (bit % 8);
        match read_record_stream(&bad[..]) {
            Err(e @ FrameError::CrcMismatch { .. }) => assert_eq!(e.code(), "CRC_MISMATCH"),
            other => panic!("bit {bit}: expected CRC_MISMATCH, got {other:?}"),
        }
    }
}

#[test]
fn multi_value_event_with_file_version_field() {
    let mut event = proto::Event {
        wall_time: 12.5,
        step: 300,
        file_version: Some("brain.Event:2".into()),
        summary: None,
    };
    let payload = prost::Message::encode_to_vec(&event);
    assert!(decode_scalar_event(&payload).unwrap().is_empty());

    let multi = proto::scalar_event(1.0, 7, &[("a", 1.0), ("b", f32::NAN), ("c", -0.0)]);
    let decoded = decode_event(&multi).unwrap();
    assert_eq!(decoded.non_finite, 1);
    let tags: Vec<&str> = decoded.scalars.iter().map(|s| s.tag.as_str()).collect();
    assert_eq!(tags, ["a", "c"]);
    assert_eq!(decoded.scalars[1].value.to_bits(), (-0.0f64).to_bits());

    event.file_version = None;
    assert!(decode_scalar_event(&prost::Message::encode_to_vec(&event))
        .unwrap()
        .is_empty());
}

fn event_file(entries: &[(u64, &[(&str, f32)])]) -> Vec<u8> {
    let mut out = encode_frame(&encode_file_version(1.0));
    for (step, values) in entries {
        out.extend(encode_frame(&encode_scalar_event(*step as f64, *step, values)));
    }
    out
}

#[test]
fn load_run_reads_events_predictions_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run_a");
    fs::create_dir(&run).unwrap();
    fs::write(
        run.join("events.out.tfevents.1.host"),
        event_file(&[(0, &[("loss", 2.0)]), (10, &[("loss", 1.0), ("acc", 0.5)])]),
    )
    .unwrap();
    let records = vec![
        PredictionRecord::classification("x1", 1, Env::InVal, common::attrs(&[("gender", "f")]), 0.9, true),
        PredictionRecord::classification("x2", 1, Env::Out, Default::default(), 0.1, false),
    ];
    let mut log = Vec::new();
    write_prediction_log(&mut log, &records).unwrap();
    log.extend_from_slice(b"{not json}\n");
    fs::write(run.join(PREDICTIONS_FILE), log).unwrap();
    fs::write(
        run.join(CONFIG_FILE),
        r#"{"lr": 0.01, "optimizer": "adam", "layers": 3}"#,
    )
    .unwrap();

    let loaded = load_run(&run).unwrap();
    assert_eq!(loaded.run_id, "run_a");
    assert_eq!(loaded.series["loss"].values().collect::<Vec<_>>(), [2.0, 1.0]);
    assert_eq!(loaded.series["acc"].steps().collect::<Vec<_>>(), [10]);
    assert_eq!(*loaded.predictions, records);
    assert_eq!(loaded.health.skipped_lines, 1);
    assert_eq!(loaded.config["lr"], "0.01");
    assert_eq!(loaded.config["optimizer"], "adam");
    assert_eq!(loaded.config["layers"], "3");
}

#[test]
fn corrupt_file_keeps_prefix_and_warns() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("r");
    fs::create_dir(&run).unwrap();
    let mut bytes = event_file(&[(1, &[("loss", 1.0)]), (2, &[("loss", 0.5)])]);
    let last = bytes.len() - 1;
    bytes[last] ^= 0x40;
    fs::write(run.join("events.out.tfevents.9.h"), bytes).unwrap();
    let catalog = discover_runs(dir.path()).unwrap();
    let r = catalog.get("r").unwrap();
    assert_eq!(r.series["loss"].len(), 1);
    assert_eq!(r.health.warnings.len(), 1);
    assert_eq!(r.health.warnings[0].code, "CRC_MISMATCH");
}

#[test]
fn ingestor_picks_up_appended_frames_and_partial_writes() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("live");
    fs::create_dir(&run).unwrap();
    let path = run.join("events.out.tfevents.5.h");
    fs::write(&path, event_file(&[(0, &[("loss", 3.0)])])).unwrap();

    let mut ingestor = Ingestor::new(dir.path()).unwrap();
    let first = ingestor.rescan().unwrap().expect("initial snapshot");
    assert_eq!(first.series("live", "loss").unwrap().len(), 1);
    assert!(ingestor.rescan().unwrap().is_none(), "no change, no new snapshot");

    // Half a frame is invisible until the rest arrives.
    let frame = encode_frame(&encode_scalar_event(1.0, 1, &[("loss", 2.0)]));
    let mut f = OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(&frame[..10]).unwrap();
    f.flush().unwrap();
    let _ = ingestor.rescan().unwrap();
    assert_eq!(ingestor.snapshot().series("live", "loss").unwrap().len(), 1);
    f.write_all(&frame[10..]).unwrap();
    f.flush().unwrap();
    let next = ingestor.rescan().unwrap().expect("appended frame publishes");
    assert!(next.version > first.version);
    assert_eq!(
        next.series("live", "loss").unwrap().values().collect::<Vec<_>>(),
        [3.0, 2.0]
    );

    // A new run directory appears.
    let other = dir.path().join("other");
    fs::create_dir(&other).unwrap();
    fs::write(
        other.join("events.out.tfevents.6.h"),
        event_file(&[(4, &[("acc", 0.25)])]),
    )
    .unwrap();
    let after = ingestor.rescan().unwrap().unwrap();
    assert_eq!(after.len(), 2);
    assert_eq!(after.series("other", "acc").unwrap().value_at(4), Some(0.25));
}

#[test]
fn missing_logdir_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = discover_runs(dir.path().join("nope")).unwrap_err();
    assert_eq!(err.code(), "NOT_A_DIRECTORY");
}
