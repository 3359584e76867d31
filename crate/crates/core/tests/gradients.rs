//! Central finite differences against reverse-mode gradients, per primitive
//! and for the full tagger losses.

mod common;

use altag::tagger::Decoder;
use common::grad::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_all(reports: Reports) {
    assert!(!reports.is_empty());
    if let Some((name, r)) = first_failure(&reports) {
        panic!("{name}: max rel err {:.3e} at {:?} ({} checked)", r.max_rel_err, r.worst, r.checked);
    }
}

#[test]
fn primitives_on_random_shapes() {
    assert_all(primitive_reports(42, 6));
}

#[test]
fn chained_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let leaves = (0..5)
        .map(|i| {
            let shape: &[usize] = [&[6, 3][..], &[3, 3, 4], &[4], &[4, 5], &[5]][i];
            common::random_tensor(&mut rng, shape, 1.0)
        })
        .collect();
    let r = check(leaves, |tp, n| {
        let e = tp.gather(n[0], vec![1, 4, 4, 0, 2])?;
        let h = tp.conv1d(e, n[1], n[2])?;
        let h = tp.relu(h)?;
        let p = tp.max_pool(h)?;
        let z = tp.linear(p, n[3], n[4])?;
        tp.nll(z, 3)
    });
    assert_all(vec![("chain".into(), r)]);
}

#[test]
fn full_lstm_loss() {
    assert_all(full_loss_reports(Decoder::Lstm { units: 6 }, 0..6));
}

#[test]
fn full_crf_loss() {
    assert_all(full_loss_reports(Decoder::Crf, 0..6));
}
