//! Under a warmup schedule every block is the identity at step 0: the last
//! hidden state equals the embedding output, bit for bit. Post-norm
//! variants match the forward pass with every scale set to 0.

use prores::model::{AlphaMode, Model, ModelConfig, VariantKind};
use prores::schedules::ScheduleFamily;

fn main() -> Result<(), prores::Error> {
    let tokens: Vec<usize> = (0..16).map(|i| (i * 7) % 32).collect();
    for kind in VariantKind::ALL {
        let cfg = ModelConfig::tiny(4).with_variant(kind).with_schedule(ScheduleFamily::Linear, 50)?;
        let model = Model::<f32>::init(cfg)?;
        let warm = model.activations(&tokens, 2, AlphaMode::Step(0))?;
        let zero = model.activations(&tokens, 2, AlphaMode::Fixed(0.0))?;
        let first = &warm.states[0];
        let last = warm.states.last().expect("states");
        let same_as_embedding = first.data().iter().zip(last.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        let same_as_zero = warm.logits == zero.logits;
        if kind.has_identity_stream() {
            println!("{kind:12} last state equals embedding: {same_as_embedding}");
        } else {
            // The stream itself is normalized, so compare against the zero-scale forward.
            println!("{kind:12} logits equal the zero-scale reference: {same_as_zero}");
        }
    }
    Ok(())
}
