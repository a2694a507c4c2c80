use proptest::prelude::*;
use xdomain_core::gradcheck::grad_check;
use xdomain_core::losses::{
    classification_loss, detaching_loss, overall_loss, pairing_loss, BatchSplit, DetachMode,
    DistanceKind,
};
use xdomain_core::model::{ModelConfig, SiameseModel};
use xdomain_core::{Error, Graph, Tensor, Var};

const EPS: f64 = 1e-5;

fn tensor(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |d| Tensor::new(vec![rows, cols], d).unwrap())
}

/// Values kept at least `gap` away from every point in `kinks`, so finite
/// differences never straddle a non-differentiable point.
fn tensor_avoiding(rows: usize, cols: usize, kinks: &'static [f64], gap: f64) -> impl Strategy<Value = Tensor> {
    tensor(rows, cols).prop_map(move |t| {
        let d = t
            .data()
            .iter()
            .map(|&x| {
                let mut x = x;
                for &k in kinks {
                    if (x - k).abs() < gap {
                        x = if x >= k { k + gap } else { k - gap };
                    }
                }
                x
            })
            .collect();
        Tensor::new(t.shape().to_vec(), d).unwrap()
    })
}

fn check<F>(f: F, params: &[Tensor], tol: f64)
where
    F: Fn(&mut Graph, &[Var]) -> xdomain_core::Result<Var>,
{
    let r = grad_check(f, params, EPS).unwrap();
    assert!(r.max_rel_error < tol, "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn affine_sum(x in tensor(3, 4), w in tensor(4, 2), b in tensor(1, 2)) {
        let b = b.reshape(vec![2]).unwrap();
        check(|g, v| { let y = g.affine(v[0], v[1], v[2])?; Ok(g.sum(y)) }, &[x, w, b], 1e-6);
    }

    #[test]
    fn elementwise_chain(a in tensor(2, 3), b in tensor(2, 3)) {
        check(|g, v| {
            let s = g.add(v[0], v[1])?;
            let d = g.sub(v[0], v[1])?;
            let m = g.mul(s, d)?;
            let t = g.scale(m, 0.7);
            let u = g.add_scalar(t, 0.3);
            let p = g.sigmoid(u);
            Ok(g.mean(p))
        }, &[a, b], 1e-6);
    }

    #[test]
    fn relu_away_from_zero(x in tensor_avoiding(3, 3, &[0.0], 1e-3)) {
        check(|g, v| { let r = g.relu(v[0]); let s = g.mul(r, r)?; Ok(g.sum(s)) }, &[x], 1e-6);
    }

    #[test]
    fn clamp_and_ln_inside_bounds(x in tensor_avoiding(2, 4, &[-1.5, 1.5], 1e-3)) {
        check(|g, v| {
            let c = g.clamp(v[0], -1.5, 1.5);
            let p = g.add_scalar(c, 2.0);
            let l = g.ln(p, 1e-12);
            Ok(g.sum(l))
        }, &[x], 1e-6);
    }

    #[test]
    fn pairwise_distances(a in tensor(3, 4), b in tensor(2, 4)) {
        // Random points in 4-D are never close enough to hit the sqrt kink.
        check(|g, v| { let d = g.pairwise_euclidean(v[0], v[1])?; Ok(g.mean(d)) }, &[a.clone(), b.clone()], 1e-6);
        check(|g, v| { let d = g.pairwise_sq_euclidean(v[0], v[1])?; Ok(g.mean(d)) }, &[a, b], 1e-6);
    }

    #[test]
    fn select_rows_and_reshape(x in tensor(4, 3)) {
        check(|g, v| {
            let s = g.select_rows(v[0], &[3, 1, 3])?;
            let r = g.reshape(s, &[9, 1])?;
            let sq = g.mul(r, r)?;
            Ok(g.sum(sq))
        }, &[x], 1e-6);
    }

    #[test]
    fn bce_on_sigmoid(x in tensor(5, 1)) {
        let labels = [1.0, 0.0, 1.0, 1.0, 0.0];
        check(|g, v| { let p = g.sigmoid(v[0]); classification_loss(g, p, &labels) }, &[x], 1e-6);
    }
}

#[test]
fn quadratic_matches_to_1e8() {
    let x = Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]).unwrap();
    check(|g, v| { let s = g.mul(v[0], v[0])?; Ok(g.sum(s)) }, &[x], 1e-8);
}

#[test]
fn overall_loss_on_toy_embeddings() {
    let fs = Tensor::from_rows(&[[0.1, 0.4], [0.9, -0.3], [-0.5, 0.2], [0.7, 0.7]]).unwrap();
    let ft = Tensor::from_rows(&[[0.3, -0.1], [-0.8, 0.5], [0.2, 0.9]]).unwrap();
    let ys = [1.0, 0.0, 1.0, 0.0];
    let yt = [0.0, 1.0, 1.0];
    check(
        |g, v| {
            let split = BatchSplit::new(g, v[0], &ys, v[1], &yt)?;
            let l_c = {
                let w = g.select_rows(v[0], &[0, 1, 2, 3])?;
                let s = g.sum(w);
                let p = g.sigmoid(s);
                let p = g.reshape(p, &[1, 1])?;
                classification_loss(g, p, &[1.0])?
            };
            let cp = pairing_loss(g, &split, DistanceKind::Euclidean)?;
            let cd = detaching_loss(g, &split, DistanceKind::Euclidean, DetachMode::Unbounded)?;
            overall_loss(g, l_c, cp, cd, 0.25)
        },
        &[fs, ft],
        1e-4,
    );
}

fn wrong_square(x: f64) -> f64 {
    x * x
}

fn wrong_square_grad(x: f64) -> f64 {
    // Deliberately wrong: the true derivative is 2x.
    3.0 * x
}

#[test]
fn wrong_derivative_is_caught() {
    let x = Tensor::new(vec![1, 2], vec![0.8, -1.3]).unwrap();
    let r = grad_check(
        |g, v| {
            let y = g.map(v[0], wrong_square, wrong_square_grad);
            Ok(g.sum(y))
        },
        &[x],
        EPS,
    )
    .unwrap();
    assert!(r.max_rel_error > 1e-2, "{r:?}");
}

#[test]
fn non_finite_loss_is_reported() {
    let x = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
    let err = grad_check(
        |g, v| {
            let y = g.map(v[0], |_| f64::NAN, |_| 0.0);
            Ok(g.sum(y))
        },
        &[x],
        EPS,
    )
    .unwrap_err();
    assert!(matches!(err, Error::GradCheck { .. }), "{err:?}");
}

fn toy_model(seed: u64) -> SiameseModel {
    SiameseModel::init(ModelConfig {
        input_dim: 6,
        extractor_hidden: vec![5],
        branch_hidden: 4,
        embed_dim: 3,
        head_hidden: [3, 2],
        seed,
        ..ModelConfig::default()
    })
    .unwrap()
}

#[test]
fn full_model_gradients_through_both_branches() {
    let model = toy_model(11);
    // Nonzero biases keep every ReLU off its kink at these inputs.
    let params: Vec<Tensor> = model
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d = p.value.data().iter().enumerate();
            let d = d.map(|(j, &v)| if p.name.ends_with("bias") { 0.05 + 0.07 * ((i + j) % 3) as f64 } else { v });
            Tensor::new(p.value.shape().to_vec(), d.collect()).unwrap()
        })
        .collect();
    let xs = Tensor::from_rows(&[
        [0.2, 0.9, 0.1, 0.4, 0.6, 0.3],
        [0.8, 0.1, 0.5, 0.7, 0.2, 0.9],
        [0.3, 0.3, 0.9, 0.1, 0.8, 0.5],
        [0.6, 0.7, 0.2, 0.9, 0.4, 0.1],
    ])
    .unwrap();
    let xt = Tensor::from_rows(&[
        [0.5, 0.2, 0.8, 0.3, 0.1, 0.7],
        [0.1, 0.6, 0.4, 0.8, 0.9, 0.2],
        [0.9, 0.4, 0.3, 0.2, 0.5, 0.6],
    ])
    .unwrap();
    let (ys, yt) = ([1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0]);
    check(
        |g, v| {
            let m = model.bind_vars(g, v)?;
            let (a, b) = (g.input(xs.clone()), g.input(xt.clone()));
            let fs = m.embed(g, a)?;
            let ft = m.embed(g, b)?;
            let p = m.predict(g, fs)?;
            let l_c = classification_loss(g, p, &ys)?;
            let split = BatchSplit::new(g, fs, &ys, ft, &yt)?;
            let cp = pairing_loss(g, &split, DistanceKind::Euclidean)?;
            let cd = detaching_loss(g, &split, DistanceKind::Euclidean, DetachMode::Unbounded)?;
            overall_loss(g, l_c, cp, cd, 0.25)
        },
        &params,
        1e-4,
    );
}

#[test]
fn embedding_twice_reuses_the_same_leaves() {
    let model = toy_model(3);
    let mut g = Graph::new();
    let bound = model.bind(&mut g);
    let before = g.params().len();
    let x = g.input(Tensor::full(vec![2, 6], 0.5));
    let y = g.input(Tensor::full(vec![3, 6], 0.25));
    bound.embed(&mut g, x).unwrap();
    bound.embed(&mut g, y).unwrap();
    assert_eq!(g.params().len(), before);
    assert_eq!(before, model.params().len());
}

#[test]
fn zero_distance_has_zero_gradient() {
    let a = Tensor::from_rows(&[[1.0, 2.0]]).unwrap();
    let mut g = Graph::new();
    let va = g.param(a.clone());
    let vb = g.param(a);
    let d = g.pairwise_euclidean(va, vb).unwrap();
    let s = g.sum(d);
    let grads = g.backward(s).unwrap();
    assert_eq!(g.value(s).data(), &[0.0]);
    assert!(grads.get(va).data().iter().all(|&x| x == 0.0));
    assert!(grads.get(vb).data().iter().all(|&x| x == 0.0));
}

#[test]
fn shared_shift_has_a_structurally_zero_gradient() {
    // Distances ignore a shift applied to both sides, so d/db is exactly zero
    // and both gradient estimates are rounding noise.
    let x = Tensor::from_rows(&[[0.3, -1.1], [0.8, 0.4], [-0.2, 0.9]]).unwrap();
    let y = Tensor::from_rows(&[[1.5, 0.2], [-0.7, -0.6]]).unwrap();
    let b = Tensor::new(vec![2], vec![0.25, -0.4]).unwrap();
    let eye = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    check(
        |g, v| {
            let i = g.input(eye.clone());
            let xs = g.affine(v[0], i, v[2])?;
            let ys = g.affine(v[1], i, v[2])?;
            let d = g.pairwise_euclidean(xs, ys)?;
            Ok(g.mean(d))
        },
        &[x, y, b],
        1e-6,
    );
}

fn tiny_square(x: f64) -> f64 {
    1e-7 * x * x
}

fn tiny_square_wrong_grad(x: f64) -> f64 {
    3e-7 * x
}

#[test]
fn wrong_derivative_is_caught_at_small_scale() {
    let x = Tensor::new(vec![1, 1], vec![0.8]).unwrap();
    let r = grad_check(
        |g, v| {
            let y = g.map(v[0], tiny_square, tiny_square_wrong_grad);
            Ok(g.sum(y))
        },
        &[x],
        EPS,
    )
    .unwrap();
    assert!(r.max_rel_error > 1e-2, "{r:?}");
}
