#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use robochain::ledger::{
    Digest, ImageAnchorPayload, KeyHash, Ledger, Payload, RobotEventPayload, HOME_POSITION,
};

pub fn validators(n: usize) -> Vec<KeyHash> {
    (0..n)
        .map(|i| KeyHash::new(format!("validator-{i}")))
        .collect()
}

pub fn robot_event(t: u64, v: u32) -> Payload {
    Payload::RobotEvent(RobotEventPayload {
        timestamp_ms: t,
        position: if v == 0 {
            HOME_POSITION.into()
        } else {
            "carry".into()
        },
        velocity: v,
        effort: 1.0,
    })
}

/// A ledger with `blocks` sealed blocks holding a seeded mix of robot events
/// and image anchors from a few senders.
pub fn random_ledger(blocks: u64, seed: u64) -> Ledger {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let senders: Vec<KeyHash> = ["robot", "oracle", "operator"].map(KeyHash::from).to_vec();
    let mut ledger = Ledger::new(validators(3)).unwrap();
    for h in 0..blocks {
        let t = h * 1000;
        for _ in 0..rng.gen_range(0..4) {
            let s = &senders[rng.gen_range(0..senders.len())];
            let payload = if rng.gen_bool(0.5) {
                robot_event(t, [0, 2, 3, 6][rng.gen_range(0..4)])
            } else {
                let id = format!("img-{:08}", rng.gen_range(0..1000));
                Payload::ImageAnchor(ImageAnchorPayload {
                    image_hash: Digest::of(id.as_bytes()),
                    image_id: id,
                })
            };
            ledger.submit(s, format!("tx at {t}"), payload).unwrap();
        }
        ledger.seal_next(t).unwrap();
    }
    ledger
}
