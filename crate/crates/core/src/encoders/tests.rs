use super::*;
use crate::autodiff::{grad_check, objective, seeded_rng, GradCheckConfig, ParamStore, Tape};

fn table() -> EmbeddingTable {
    let mut e = EmbeddingTable::new(3, 0);
    e.insert("play", vec![0.5, -0.2, 0.1]).unwrap();
    e.insert("some", vec![-0.3, 0.4, 0.9]).unwrap();
    e.insert("jazz", vec![0.7, 0.7, -0.5]).unwrap();
    e.insert("<pad>", vec![1.0, 1.0, 1.0]).unwrap();
    e
}

fn sentence_encoder(seed: u64) -> (BiLstmAttention, ParamStore) {
    let enc = BiLstmAttention::new("s", 3, 2, 4);
    let mut s = ParamStore::new();
    enc.init(&mut s, &mut seeded_rng(seed));
    (enc, s)
}

#[test]
fn single_token_gets_all_attention() {
    let (enc, s) = sentence_encoder(1);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let (alpha, _) = enc.attention(&b, &table(), &TokenSeq::new(&["jazz"])).unwrap();
    assert_eq!(alpha.data(), [1.0]);
}

#[test]
fn zero_lstm_encodes_to_zero() {
    let (enc, mut s) = sentence_encoder(2);
    enc.zero_lstm(&mut s);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let v = enc.encode(&b, &table(), &TokenSeq::new(&["play", "some", "jazz"])).unwrap();
    assert_eq!(v.data(), [0.0; 4]);
}

#[test]
fn padding_is_masked() {
    let (enc, s) = sentence_encoder(3);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let x = TokenSeq::new(&["play", "some", "jazz"]);
    let plain = enc.encode(&b, &table(), &x).unwrap().data();
    let padded = enc.encode(&b, &table(), &x.padded(7, "<pad>")).unwrap().data();
    assert_eq!(plain, padded);
}

#[test]
fn empty_sentence_is_contract_error() {
    let (enc, s) = sentence_encoder(3);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let x = TokenSeq::new::<&str>(&[]).padded(3, "<pad>");
    assert!(matches!(enc.encode(&b, &table(), &x), Err(Error::Contract(_))));
}

#[test]
fn intent_dims() {
    let enc = BiLstmAttention::new("s", 300, 32, 20);
    let mut s = ParamStore::new();
    enc.init(&mut s, &mut seeded_rng(0));
    assert_eq!(s.get("s.lstm.fwd.w_ih").unwrap().shape(), [128, 300]);
    assert_eq!(s.get("s.att1.weight").unwrap().shape(), [20, 64]);
    assert_eq!(enc.out_dim(), 64);
}

fn mention_encoder(features: FeatureMode, seed: u64) -> (AttentiveNer, ParamStore) {
    let enc = AttentiveNer::new("m", 3, 2, 3, features);
    let mut s = ParamStore::new();
    enc.init(&mut s, &mut seeded_rng(seed));
    (enc, s)
}

#[test]
fn mention_mean_and_weight_normalization() {
    let mut e = table();
    e.insert("ada", vec![1.0, 0.0, 0.0]).unwrap();
    e.insert("lovelace", vec![0.0, 1.0, 0.0]).unwrap();
    let (enc, s) = mention_encoder(FeatureMode::Zeros { dim: 2 }, 4);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let x = MentionInput::new(&["ada", "lovelace"], &["play", "some"], &["jazz"], 10);
    let v = enc.encode(&b, &e, &x).unwrap().data();
    assert_eq!(v.len(), enc.out_dim());
    assert_eq!(&v[4..6], [0.0, 0.0]);
    assert_eq!(&v[6..], [0.5, 0.5, 0.0]);
    let (w, _) = enc.attention(&b, &e, &x).unwrap();
    assert_eq!(w.shape(), [3]);
    assert!((w.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn mention_window_and_errors() {
    let x = MentionInput::new(&["m"], &["a", "b", "c"], &["d", "e", "f"], 2);
    assert_eq!(x.left.tokens, ["b", "c"]);
    assert_eq!(x.right.tokens, ["d", "e"]);

    let (enc, s) = mention_encoder(FeatureMode::Supplied { dim: 2 }, 5);
    let tape = Tape::new();
    let b = Binder::new(&tape, &s);
    let bare = MentionInput::new(&["jazz"], &[], &[], 5);
    assert!(matches!(enc.encode(&b, &table(), &bare), Err(Error::Contract(_))));
    let no_feats = MentionInput::new(&["jazz"], &["play"], &[], 5);
    assert!(matches!(enc.encode(&b, &table(), &no_feats), Err(Error::Data(_))));
    let mut ok = no_feats.clone();
    ok.features = Some(vec![0.25, -1.0]);
    let v = enc.encode(&b, &table(), &ok).unwrap().data();
    assert_eq!(&v[4..6], [0.25, -1.0]);
}

#[test]
fn default_feature_dim_is_sixty() {
    assert_eq!(FeatureMode::default().dim(), 60);
    let enc = AttentiveNer::new("m", 300, 100, 50, FeatureMode::default());
    assert_eq!(enc.out_dim(), 200 + 60 + 300);
}

#[test]
fn both_encoders_pass_grad_check() {
    for seed in 0..3 {
        let emb = table();
        let (sent, mut s) = sentence_encoder(seed);
        let (ment, s2) = mention_encoder(FeatureMode::Learned { vocab: 4, dim: 2 }, seed + 10);
        s.extend(s2);
        let f = objective(|b| {
            let a = sent.encode(b, &emb, &TokenSeq::new(&["play", "some", "jazz"]))?;
            let mut x = MentionInput::new(&["jazz", "play"], &["some"], &["play", "jazz"], 5);
            x.feature_ids = vec![1, 3];
            let m = ment.encode(b, &emb, &x)?;
            Ok(a.sum_all().add(m.mul(m)?.sum_all())?)
        });
        let r = grad_check(&f, &s, &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "seed {seed}: {r:?}");
    }
}
