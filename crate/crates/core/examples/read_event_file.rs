//! Writes a small event file, then reads it back frame by frame.
//!
//! `cargo run --example read_event_file [path]` reads an existing file instead.

use std::fs::File;
use std::io::BufReader;

use fairboard::ingest::event::{encode_file_version, encode_scalar_event};
use fairboard::ingest::frame::encode_frame;
use fairboard::ingest::{decode_event, FrameReader};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = match std::env::args().nth(1) {
        Some(p) => p.into(),
        None => {
            let path = dir.path().join("events.out.tfevents.0.example");
            let mut bytes = encode_frame(&encode_file_version(1.7e9));
            for step in 0..5u64 {
                let loss = 2.0 / (step + 1) as f32;
                bytes.extend(encode_frame(&encode_scalar_event(
                    1.7e9 + step as f64,
                    step,
                    &[("loss", loss), ("lr", 0.01)],
                )));
            }
            std::fs::write(&path, bytes)?;
            path
        }
    };

    for frame in FrameReader::new(BufReader::new(File::open(&path)?)) {
        let frame = frame?;
        let event = decode_event(&frame.payload)?;
        for s in &event.scalars {
            println!(
                "offset {:>4}  step {:>3}  {:<6} {:.4}",
                frame.offset, s.step, s.tag, s.value
            );
        }
        if event.non_finite > 0 {
            println!(
                "offset {:>4}  {} non-finite value(s) dropped",
                frame.offset, event.non_finite
            );
        }
    }
    Ok(())
}
