use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vdgpt_core::plan::BoundingBox;
use vdgpt_grounding::{
    grounding_token_grad, grounding_token_variant, guided_2d_attention, guided_2d_attention_grad, EmbeddingProvider,
    EmbeddingVariant, GroundingMlpParams, GroundingToken, Guided2dParams, HashEmbeddingProvider, Mat, Parameters,
    TokenSource, D_H,
};

const H: f64 = 1e-6;
const HB: f64 = 1e-5;

/// Central-difference relative error; entries whose gradients are both
/// below `floor` are compared absolutely.
fn rel_err(fd: f64, analytic: f64) -> f64 {
    let scale = fd.abs().max(analytic.abs());
    if scale < 1e-5 {
        (fd - analytic).abs() / 1e-5
    } else {
        (fd - analytic).abs() / scale
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn grounding_mlp_gradients_match_central_differences() {
    let provider = HashEmbeddingProvider::default();
    let txt = provider.embed_text("a chef in a white apron");
    let img = provider.prior_text_to_image(&txt).unwrap();
    let bbox = BoundingBox::new(0.15, 0.2, 0.6, 0.85);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut params = GroundingMlpParams::desk(&mut rng);
    params.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    params.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let d_out: Vec<f64> = (0..D_H).map(|_| rng.random_range(-1.0..1.0)).collect();

    for variant in [EmbeddingVariant::ImageText, EmbeddingVariant::ImageOnly, EmbeddingVariant::TextOnly] {
        let analytic = grounding_token_grad(&img, &txt, &bbox, &params, variant, &d_out).unwrap().flatten();
        let base = params.flatten();
        let objective = |p: &GroundingMlpParams| {
            dot(&grounding_token_variant(&img, &txt, &bbox, p, variant).unwrap().vector, &d_out)
        };
        let mut probe = params.clone();
        let mut worst: f64 = 0.0;
        for i in 0..base.len() {
            let mut v = base.clone();
            v[i] = base[i] + H;
            probe.set_flat(&v);
            let up = objective(&probe);
            v[i] = base[i] - H;
            probe.set_flat(&v);
            let down = objective(&probe);
            worst = worst.max(rel_err((up - down) / (2.0 * H), analytic[i]));
        }
        println!("{variant:?}: {} parameters, max relative error {worst:.2e}", base.len());
        assert!(worst < 1e-4, "{variant:?}: {worst}");
    }
}

fn tokens(m: &Mat) -> Vec<GroundingToken> {
    m.rows()
        .into_iter()
        .map(|r| GroundingToken {
            vector: r.to_vec(),
            entity_id: String::new(),
            source: TokenSource {
                image_projection: vec![],
                text_projection: vec![],
                fourier: vec![],
            },
        })
        .collect()
}

#[test]
fn guided_2d_attention_gradients_match_central_differences() {
    let d = D_H;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let grid = Array3::from_shape_fn((4, 4, d), |_| rng.random_range(-1.0..1.0));
    let g = Mat::from_shape_fn((2, d), |_| rng.random_range(-1.0..1.0));
    let text = Mat::from_shape_fn((3, d), |_| rng.random_range(-1.0..1.0));
    let mut params = Guided2dParams::new(d, &mut rng);
    params.gated.gamma = 0.6;
    let d_out = Array3::from_shape_fn(grid.dim(), |_| rng.random_range(-1.0..1.0));
    let objective = |grid: &Array3<f64>, g: &Mat, p: &Guided2dParams| {
        let out = guided_2d_attention(grid, &tokens(g), &text, p).unwrap();
        out.iter().zip(d_out.iter()).map(|(a, b)| a * b).sum::<f64>()
    };
    let grads = guided_2d_attention_grad(&grid, &tokens(&g), &text, &params, &d_out).unwrap();

    let analytic = grads.params.flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + HB;
        probe.set_flat(&v);
        let up = objective(&grid, &g, &probe);
        v[i] = base[i] - HB;
        probe.set_flat(&v);
        let down = objective(&grid, &g, &probe);
        worst = worst.max(rel_err((up - down) / (2.0 * HB), analytic[i]));
    }
    println!("block parameters: {} checked, max relative error {worst:.2e}", base.len());
    assert!(worst < 1e-4, "parameters: {worst}");

    let flat_input: Array1<f64> = grads.d_input.iter().copied().collect();
    let mut worst_in: f64 = 0.0;
    for (i, idx) in grid.indexed_iter().map(|(i, _)| i).enumerate() {
        let mut gp = grid.clone();
        gp[idx] += HB;
        let up = objective(&gp, &g, &params);
        gp[idx] -= 2.0 * HB;
        let down = objective(&gp, &g, &params);
        worst_in = worst_in.max(rel_err((up - down) / (2.0 * HB), flat_input[i]));
    }
    for ((r, c), an) in grads.d_grounding.indexed_iter() {
        let mut gp = g.clone();
        gp[[r, c]] += HB;
        let up = objective(&grid, &gp, &params);
        gp[[r, c]] -= 2.0 * HB;
        let down = objective(&grid, &gp, &params);
        worst_in = worst_in.max(rel_err((up - down) / (2.0 * HB), *an));
    }
    println!("block inputs: max relative error {worst_in:.2e}");
    assert!(worst_in < 1e-4, "inputs: {worst_in}");
}
