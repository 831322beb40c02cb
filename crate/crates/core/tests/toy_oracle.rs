//! A fully discrete zero-mean toy joint distribution: minimizing the exact
//! expected loss over a lookup-table precision recovers `E[z z^H | x]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssce_core::autodiff::{Gradient, NodeId, Tape};
use ssce_core::data::outer_sum;
use ssce_core::linalg::inverse_hpd;
use ssce_core::{ComplexMatrix, C64};

struct Atom {
    x: usize,
    z: Vec<C64>,
    prob: f64,
}

fn expected_loss(bs: &[ComplexMatrix], atoms: &[Atom]) -> Option<(f64, Gradient)> {
    let mut tape = Tape::new();
    let s: Vec<NodeId> = bs
        .iter()
        .map(|b| {
            let p = tape.param(b);
            tape.gram(p)
        })
        .collect();
    let mut total: Option<NodeId> = None;
    for atom in atoms {
        let z = tape.constant(ComplexMatrix::column(&atom.z));
        let q = tape.quad_form(s[atom.x], z);
        let ld = tape.logdet(s[atom.x]).ok()?;
        let neg = tape.scale(ld, -1.0);
        let l = tape.add(q, neg);
        let l = tape.scale(l, atom.prob);
        total = Some(match total {
            None => l,
            Some(t) => tape.add(t, l),
        });
    }
    let total = total?;
    let value = tape.scalar(total).ok()?;
    Some((value, tape.backward(total).ok()?))
}

#[test]
fn minimizer_is_the_conditional_second_moment() {
    let (k, d, per_x) = (3, 3, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let px = [0.5, 0.3, 0.2];
    let mut atoms = Vec::new();
    let mut truth = Vec::new();
    for (x, &p) in px.iter().enumerate() {
        let zs = ComplexMatrix::from_fn(per_x, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let weights: Vec<f64> = (0..per_x).map(|_| rng.random_range(0.5..1.5)).collect();
        let total: f64 = weights.iter().sum();
        let mut c = ComplexMatrix::zeros(d, d);
        for (j, w) in weights.iter().enumerate() {
            let z = zs.row(j).to_vec();
            c.add_scaled(w / total, &outer_sum(&ComplexMatrix::row_vector(&z)));
            // z and -z with equal mass keep every conditional mean at zero.
            let neg: Vec<C64> = z.iter().map(|v| -v).collect();
            atoms.push(Atom { x, z, prob: p * w / total / 2.0 });
            atoms.push(Atom { x, z: neg, prob: p * w / total / 2.0 });
        }
        truth.push(c);
    }

    let mut bs: Vec<ComplexMatrix> = (0..k).map(|_| ComplexMatrix::identity(d)).collect();
    let (mut value, mut grad) = expected_loss(&bs, &atoms).unwrap();
    let mut step = 0.1;
    for _ in 0..20_000 {
        let norm_sq = grad.global_norm().powi(2);
        if norm_sq.sqrt() < 1e-12 {
            break;
        }
        loop {
            let trial: Vec<ComplexMatrix> = bs
                .iter()
                .enumerate()
                .map(|(i, b)| {
                    let mut t = b.clone();
                    t.add_scaled(-step, grad.get(i));
                    t
                })
                .collect();
            match expected_loss(&trial, &atoms) {
                Some((v, g)) if v <= value - 1e-4 * step * norm_sq => {
                    (bs, value, grad) = (trial, v, g);
                    step *= 2.0;
                    break;
                }
                _ => step /= 2.0,
            }
            assert!(step > 1e-20, "line search stalled");
        }
    }

    for (b, c) in bs.iter().zip(&truth) {
        let s = b.adjoint_matmul(b);
        let estimate = inverse_hpd(&s).unwrap();
        let rel = estimate.sub(c).frobenius_norm() / c.frobenius_norm();
        assert!(rel < 1e-6, "relative Frobenius error {rel}");
    }
}
