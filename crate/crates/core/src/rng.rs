//! Seeded randomness. Every random quantity is drawn from its own ChaCha8
//! stream keyed by (seed, replication, purpose), so changing how one
//! component consumes randomness never shifts another component's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Rates = 1,
    Arrivals = 2,
    Service = 3,
    Patience = 4,
    Routing = 5,
    Skeleton = 6,
    Sde = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for replication `rep` of an experiment seeded with `seed`.
pub fn replication_key(seed: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(rep.wrapping_add(0x5DEE_CE66_D1CE_4E5B)))
}

pub fn stream(seed: u64, rep: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_key(seed, rep));
    rng.set_stream(purpose as u64);
    rng
}

/// The streams one simulation run needs.
pub struct RunStreams {
    pub arrivals: ChaCha8Rng,
    pub service: ChaCha8Rng,
    pub patience: ChaCha8Rng,
    pub routing: ChaCha8Rng,
}

impl RunStreams {
    pub fn new(seed: u64, rep: u64) -> Self {
        RunStreams {
            arrivals: stream(seed, rep, Purpose::Arrivals),
            service: stream(seed, rep, Purpose::Service),
            patience: stream(seed, rep, Purpose::Patience),
            routing: stream(seed, rep, Purpose::Routing),
        }
    }
}
