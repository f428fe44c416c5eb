//! Frames every message of a short run and checks the accounted sizes.

use fedoms::prelude::*;
use fedoms::protocol::{encode_downlink, DownlinkMessage, Frame};

fn main() -> fedoms::Result<()> {
    // one hand-built message first
    let msg = DownlinkMessage {
        epoch: 1,
        client: 0,
        indices: vec![5, 2],
        models: vec![vec![0.25; 3], vec![-1.0; 4]],
    };
    let frame = encode_downlink(&msg, 8)?;
    let bytes = frame.to_bytes();
    let accounted = account_bits(fedoms::protocol::Message::Downlink(&msg), 8);
    println!(
        "downlink with d = (3, 4), K = 8: {accounted} bits accounted, header says {}, {} bytes on the wire",
        Frame::from_bytes(&bytes)?.header.payload_bits,
        bytes.len()
    );

    let spaces = gaussian_kernel_spaces(5, 100, &kernel_width_grid(8), 1.0, LossFunction::Square, 9)?;
    let streams = LinearStreamSpec::new(5, 10, 100, 9).generate()?;
    let mut config = LearnerConfig::new(
        LearnerMode::Federated { epochs: 100 },
        spaces,
        LossFunction::Square,
        2,
        100,
        9,
    );
    config.audit_frames = true;
    let run = run_fomd_oms(&config, &streams)?;
    let bad = run.audits.iter().filter(|a| !a.consistent()).count();
    println!(
        "{} messages framed and decoded, {bad} inconsistent; {} uplink + {} downlink bits",
        run.audits.len(),
        run.bits.uplink_bits,
        run.bits.downlink_bits
    );
    Ok(())
}
