//! Encode a sentence with the biLSTM-attention encoder and a mention with
//! the attentive mention encoder.

use std::io::Cursor;

use kgzsl::autodiff::{seeded_rng, Binder, ParamStore, Tape};
use kgzsl::encoders::{AttentiveNer, BiLstmAttention, FeatureMode, MentionInput, TokenSeq};
use kgzsl::kg::EmbeddingTable;

fn main() -> kgzsl::Result<()> {
    let vectors = "play 1 0 0\nsome 0 1 0\njazz 0 0 1\nin 0.5 0.5 0\nparis 0 0.5 0.5\n";
    let emb = EmbeddingTable::read(Cursor::new(vectors), "inline", 1)?;
    let mut store = ParamStore::new();
    let mut rng = seeded_rng(5);

    let sentence = BiLstmAttention::new("sent", 3, 4, 5);
    sentence.init(&mut store, &mut rng);
    let mention = AttentiveNer::new("ment", 3, 4, 5, FeatureMode::Zeros { dim: 2 });
    mention.init(&mut store, &mut rng);

    let tape = Tape::new();
    let b = Binder::new(&tape, &store);

    let s = TokenSeq::new(&["play", "some", "jazz"]);
    let (weights, _) = sentence.attention(&b, &emb, &s)?;
    let theta = sentence.encode(&b, &emb, &s)?;
    println!("sentence attention {:.3?}", weights.data());
    println!("sentence theta ({}) {:.3?}", sentence.out_dim(), theta.data());

    // padding past the real length does not change the encoding
    let padded = s.clone().padded(6, "<pad>");
    println!("padded equal: {}", sentence.encode(&b, &emb, &padded)?.data() == theta.data());

    let m = MentionInput::new(&["paris"], &["play", "some", "jazz", "in"], &[], 10);
    let phi = mention.encode(&b, &emb, &m)?;
    println!("mention theta ({}) {:.3?}", mention.out_dim(), phi.data());
    Ok(())
}
