use hsisr_tensor::{check_gradients, ContextualMode, ConvGeom, Graph, NormMode, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn positive(shape: &[usize], seed: u64) -> Tensor {
    random(shape, seed).map(|v| v.abs() + 0.2)
}

/// Projects onto a fixed random direction so every output entry matters.
fn project(g: &mut Graph, x: Var, seed: u64) -> Var {
    let w = random(g.shape(x), seed);
    let w = g.constant(w);
    let p = g.mul(x, w);
    g.sum(p)
}

fn assert_grad(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) {
    let r = check_gradients(inputs, H, f);
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn elementwise_binary_ops() {
    let a = random(&[3, 4], 1);
    let b = random(&[3, 4], 2);
    assert_grad(&[a.clone(), b.clone()], |g, v| {
        let s = g.add(v[0], v[1]);
        let d = g.sub(s, v[1]);
        let m = g.mul(d, v[1]);
        project(g, m, 9)
    });
}

#[test]
fn scale_shift_and_square() {
    assert_grad(&[random(&[5], 3)], |g, v| {
        let s = g.scale(v[0], -2.5);
        let s = g.add_scalar(s, 0.7);
        let q = g.square(s);
        g.mean(q)
    });
}

#[test]
fn smooth_activations() {
    let x = random(&[2, 3, 2], 4).map(|v| v * 4.0);
    assert_grad(&[x.clone()], |g, v| {
        let s = g.sigmoid(v[0]);
        project(g, s, 1)
    });
    assert_grad(&[x.clone()], |g, v| {
        let s = g.softplus(v[0]);
        project(g, s, 2)
    });
    assert_grad(&[x], |g, v| {
        let e = g.exp(v[0]);
        project(g, e, 3)
    });
    assert_grad(&[positive(&[6], 5)], |g, v| {
        let l = g.ln(v[0]);
        project(g, l, 4)
    });
}

#[test]
fn piecewise_activations_away_from_kink() {
    // keep every entry at least 0.1 from zero so the step never crosses it
    let x = random(&[4, 5], 6).map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });
    assert_grad(&[x.clone()], |g, v| {
        let r = g.relu(v[0]);
        project(g, r, 1)
    });
    assert_grad(&[x], |g, v| {
        let r = g.leaky_relu(v[0], 0.2);
        project(g, r, 2)
    });
}

#[test]
fn reductions_along_axes() {
    let x = random(&[2, 3, 4], 7);
    for axis in 0..3 {
        assert_grad(&[x.clone()], |g, v| {
            let s = g.sum_axis(v[0], axis);
            project(g, s, 3)
        });
        assert_grad(&[x.clone()], |g, v| {
            let n = g.norm_axis(v[0], axis);
            project(g, n, 4)
        });
    }
}

#[test]
fn norm_axis_at_zero_has_zero_gradient() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::zeros(&[2, 3]));
    let n = g.norm_axis(x, 1);
    let s = g.sum(n);
    let grads = g.backward(s);
    assert!(grads.get(x).unwrap().data().iter().all(|v| *v == 0.0));
}

#[test]
fn matmul_reshape_bias() {
    let a = random(&[3, 4], 8);
    let b = random(&[4, 2], 9);
    let bias = random(&[2], 10);
    assert_grad(&[a, b, bias], |g, v| {
        let m = g.matmul(v[0], v[1]);
        let m = g.add_bias(m, v[2]);
        let r = g.reshape(m, &[6]);
        project(g, r, 5)
    });
}

#[test]
fn conv3d_same_and_strided() {
    let x = random(&[2, 2, 3, 5, 4], 11);
    let geoms = [
        ([3, 2, 3, 3, 3], ConvGeom::same([3, 3, 3])),
        ([2, 2, 2, 3, 3], ConvGeom::same([2, 3, 3])),
        ([4, 2, 1, 3, 3], ConvGeom::new([1, 2, 2], [0, 1, 1], [0, 1, 1])),
    ];
    for (i, (ws, geom)) in geoms.into_iter().enumerate() {
        let w = random(&ws, 20 + i as u64);
        assert_grad(&[x.clone(), w], |g, v| {
            let y = g.conv3d(v[0], v[1], geom);
            project(g, y, 6)
        });
    }
}

#[test]
fn shuffle_and_nearest_upsampling() {
    let x = random(&[1, 8, 2, 2, 3], 12);
    assert_grad(&[x.clone()], |g, v| {
        let y = g.pixel_shuffle(v[0], 2);
        project(g, y, 7)
    });
    assert_grad(&[x], |g, v| {
        let y = g.upsample_nearest(v[0], 2);
        project(g, y, 8)
    });
}

#[test]
fn batch_norm_both_modes() {
    let x = random(&[3, 2, 1, 2, 2], 13);
    let gamma = positive(&[2], 14);
    let beta = random(&[2], 15);
    assert_grad(&[x.clone(), gamma.clone(), beta.clone()], |g, v| {
        let y = g.batch_norm(v[0], v[1], v[2], NormMode::Batch, 1e-5);
        project(g, y, 9)
    });
    assert_grad(&[x, gamma, beta], |g, v| {
        let mode = NormMode::Fixed {
            mean: vec![0.1, -0.2],
            var: vec![0.5, 2.0],
        };
        let y = g.batch_norm(v[0], v[1], v[2], mode, 1e-5);
        project(g, y, 10)
    });
}

#[test]
fn concat_and_slice() {
    let a = random(&[2, 3], 16);
    let b = random(&[1, 3], 17);
    assert_grad(&[a, b], |g, v| {
        let c = g.concat_outer(&[v[0], v[1]]);
        let s = g.slice_outer(c, 1, 2);
        project(g, s, 11)
    });
}

#[test]
fn contextual_template_mode() {
    // the loss is piecewise smooth (max and min selections); random inputs
    // keep those selections stable under the finite-difference step
    let sr = random(&[2, 3, 1, 2, 3], 18);
    let hr = random(&[2, 3, 1, 2, 3], 19);
    assert_grad(&[sr, hr], |g, v| g.contextual_loss(v[0], v[1], ContextualMode::Template, None, 4.0));
}

#[test]
fn contextual_positional_mode() {
    let shape = [2, 3, 1, 3, 2];
    let sr = random(&shape, 21);
    let hr = random(&shape, 22);
    let lr_up = random(&shape, 23);
    let target = random(&shape, 24);
    assert_grad(&[sr, hr], |g, v| {
        g.contextual_loss(v[0], v[1], ContextualMode::Positional, Some((lr_up.clone(), target.clone())), 4.0)
    });
}

#[test]
fn shared_subexpressions_accumulate() {
    assert_grad(&[random(&[4], 25)], |g, v| {
        let a = g.mul(v[0], v[0]);
        let b = g.add(a, v[0]);
        project(g, b, 12)
    });
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::full(&[2], 3.0));
    let x = g.variable(Tensor::full(&[2], 2.0));
    let y = g.mul(c, x);
    let s = g.sum(y);
    let grads = g.backward(s);
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(x).unwrap().data(), &[3.0, 3.0]);
}
