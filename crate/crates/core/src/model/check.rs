use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureSet, GraphOptions, HyperParams, InitOptions, Model, PreparedInstance, Variant, Vocabs};
use crate::corpus::{generate_synthetic, synthetic_entity_kb, SyntheticConfig};
use crate::error::{Error, Result};
use crate::numcore::{finite_diff_check, FdReport, ParamId};

/// Central-difference check of every trainable parameter on one instance.
pub fn gradient_check(
    model: &mut Model,
    prep: &PreparedInstance,
    variant: Variant,
    features: FeatureSet,
    dropout: f64,
    eps: f64,
    seed: u64,
) -> Result<FdReport> {
    let ids: Vec<ParamId> = model
        .params
        .ids()
        .filter(|&id| model.params.meta(id).trainable)
        .collect();
    let arch = &model.arch;
    let opts = GraphOptions {
        variant,
        features,
        dropout,
        words: None,
    };
    finite_diff_check(&mut model.params, &ids, eps, seed, |tape| arch.loss(tape, prep, &opts))
}

/// A randomly sized model (hidden ≤ 8) with all features built, and one
/// synthetic instance of at most six tokens.
pub fn random_tiny_setup(seed: u64, variant: Variant) -> Result<(Model, PreparedInstance)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let corpus = generate_synthetic(&SyntheticConfig {
        num_instances: 6,
        num_relations: 2,
        entities_per_sentence: 2,
        seed,
        max_fillers: 2,
    })?;
    let inst = corpus
        .iter()
        .find(|i| i.len() <= 6)
        .ok_or_else(|| Error::Config("no short synthetic instance".into()))?;
    let mut dim = |lo: usize, hi: usize| rng.gen_range(lo..=hi);
    let hp = HyperParams {
        word_dim: dim(2, 4),
        pos_dim: dim(1, 3),
        ner_dim: dim(1, 3),
        position_dim: dim(1, 3),
        hidden: dim(2, 8),
        layers: 2,
        attention_hidden: dim(2, 4),
        distance_dim: dim(1, 3),
        sdp_hidden: dim(2, 4),
        type_dim: dim(1, 3),
        wiki_dim: dim(1, 3),
        key_dim: Some(dim(2, 5)),
        max_pos: 5,
        max_dist: 4,
        ..Default::default()
    };
    let kb = synthetic_entity_kb(hp.wiki_dim, seed);
    let vocabs = Vocabs::build(&corpus, 1);
    let model = Model::new(
        hp,
        variant,
        FeatureSet::all(),
        vocabs,
        InitOptions {
            seed,
            ..Default::default()
        },
    )?;
    let prep = model.prepare(inst, Some(&kb))?;
    Ok((model, prep))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_models_pass_for_both_variants() {
        for seed in 0..3 {
            for variant in [Variant::Additive, Variant::Dot] {
                let (mut m, prep) = random_tiny_setup(seed, variant).unwrap();
                assert!(prep.len() <= 6);
                let r = gradient_check(&mut m, &prep, variant, FeatureSet::all(), 0.5, 1e-4, seed).unwrap();
                assert!(r.max_rel_error < 1e-4, "{variant} seed {seed}: {r:?}");
                assert!(r.checked > 100);
            }
        }
    }
}
