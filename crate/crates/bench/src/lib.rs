//! Fixtures shared by the criterion benchmarks under `benches/`.

use nakagami::data::synthesize_measurement;
use nakagami::data::GroundTruthMap;
use nakagami::nn::{ScoreNetwork, Topology};
use nakagami::{rng, EnvelopeImage, ParamMap};

/// A `size` x `size` measurement drawn from a constant shape field.
pub fn constant_field(size: usize, m: f64, seed: u64) -> EnvelopeImage {
    let truth = GroundTruthMap::new(ParamMap::from_values(size, size, vec![m; size * size]).unwrap()).unwrap();
    synthesize_measurement(&truth, 1.0, &mut rng::seeded(seed)).unwrap()
}

/// Default-topology network with perturbed weights so the head is not identically zero.
pub fn perturbed_network(seed: u64) -> ScoreNetwork {
    use rand::Rng;
    let mut g = rng::seeded(seed);
    let mut net = ScoreNetwork::new(Topology::default(), &mut g).unwrap();
    for p in net.params_mut() {
        *p += g.gen_range(-0.05..0.05);
    }
    net
}
