//! Named, independent random streams derived from one master seed.
//!
//! Each component draws from its own ChaCha stream so that switching a
//! component on or off never shifts the randomness seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose of a random stream. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Goals = 1,
    Exploration = 2,
    NetInit = 3,
    WorldModel = 4,
    Coordinator = 5,
    Evaluation = 6,
    User = 7,
    Replay = 8,
    WarmStart = 9,
    /// Goals and exploration inside simulated dialogs.
    Simulation = 10,
}

/// Build the generator for `stream` under `master_seed`.
pub fn stream(master_seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream as u64);
    rng
}

/// The full set of per-component generators for one run.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub goals: Rng,
    pub exploration: Rng,
    pub net_init: Rng,
    pub world_model: Rng,
    pub coordinator: Rng,
    pub evaluation: Rng,
    pub user: Rng,
    pub replay: Rng,
    pub warm_start: Rng,
    pub simulation: Rng,
}

impl RngStreams {
    pub fn new(master_seed: u64) -> Self {
        Self {
            goals: stream(master_seed, Stream::Goals),
            exploration: stream(master_seed, Stream::Exploration),
            net_init: stream(master_seed, Stream::NetInit),
            world_model: stream(master_seed, Stream::WorldModel),
            coordinator: stream(master_seed, Stream::Coordinator),
            evaluation: stream(master_seed, Stream::Evaluation),
            user: stream(master_seed, Stream::User),
            replay: stream(master_seed, Stream::Replay),
            warm_start: stream(master_seed, Stream::WarmStart),
            simulation: stream(master_seed, Stream::Simulation),
        }
    }
}
