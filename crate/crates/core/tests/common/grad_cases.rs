//! Per-layer finite-difference cases shared by the layer tests and the
//! acceptance run. Each case builds random inputs from the seed and returns
//! the check report.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidn_core::netcore::*;

pub const STEP: f64 = 1e-6;

pub fn random(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Flattens tensors into one point and splits them back.
struct Pack {
    shapes: Vec<Vec<usize>>,
}

impl Pack {
    fn new(ts: &[&Tensor]) -> (Self, Vec<f64>) {
        let shapes = ts.iter().map(|t| t.shape().to_vec()).collect();
        let point = ts.iter().flat_map(|t| t.data().iter().copied()).collect();
        (Self { shapes }, point)
    }

    fn unpack(&self, x: &[f64]) -> Vec<Tensor> {
        let mut off = 0;
        self.shapes
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::from_vec(s, x[off..off + n].to_vec()).unwrap();
                off += n;
                t
            })
            .collect()
    }
}

pub fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

pub fn concat(ts: &[&Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub fn conv1d(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[7, 3], 1.0, &mut rng);
    let k = random(&[3, 3, 4], 0.5, &mut rng);
    let b = random(&[4], 0.5, &mut rng);
    let r = random(&[5, 4], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&x, &k, &b]);

    let (_, cache) = conv1d_forward(&x, &k, &b, Activation::Relu).unwrap();
    let (mut dk, mut db) = (k.zeros_like(), b.zeros_like());
    let dx = conv1d_backward(&cache, &k, &r, &mut dk, &mut db);
    let analytic = concat(&[&dx, &dk, &db]);

    grad_check(
        |p| {
            let t = pack.unpack(p);
            let (y, c) = conv1d_forward(&t[0], &t[1], &t[2], Activation::Relu).unwrap();
            Probe { value: weighted_sum(&y, &r), signature: c.signature().collect() }
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn maxpool(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[9, 3], 1.0, &mut rng);
    let r = random(&[4, 3], 1.0, &mut rng);
    let (_, cache) = maxpool1d(&x, 2).unwrap();
    let dx = maxpool1d_backward(&cache, &r);
    grad_check(
        |p| {
            let t = Tensor::from_vec(&[9, 3], p.to_vec()).unwrap();
            let (y, c) = maxpool1d(&t, 2).unwrap();
            Probe {
                value: weighted_sum(&y, &r),
                signature: c.argmax().iter().map(|&i| i as u32).collect(),
            }
        },
        x.data(),
        dx.data(),
        STEP,
    )
}

pub fn lstm_step(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, h) = (3, 4);
    let x = random(&[d], 1.0, &mut rng);
    let hp = random(&[h], 1.0, &mut rng);
    let cp = random(&[h], 1.0, &mut rng);
    let w = random(&[4 * h, d], 0.7, &mut rng);
    let u = random(&[4 * h, h], 0.7, &mut rng);
    let b = random(&[4 * h], 0.5, &mut rng);
    let rh = random(&[h], 1.0, &mut rng);
    let rc = random(&[h], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&x, &hp, &cp, &w, &u, &b]);

    let params = LstmParams { w: w.clone(), u: u.clone(), b: b.clone() };
    let (_, _, cache) = lstm_cell(x.data(), hp.data(), cp.data(), &params).unwrap();
    let mut g = params.zeros_like();
    let out = lstm_cell_backward(&cache, &params, rh.data(), rc.data(), &mut g);
    let mut analytic = out.dx.clone();
    analytic.extend(&out.dh_prev);
    analytic.extend(&out.dc_prev);
    analytic.extend(concat(&[&g.w, &g.u, &g.b]));

    grad_check(
        |p| {
            let t = pack.unpack(p);
            let params = LstmParams { w: t[3].clone(), u: t[4].clone(), b: t[5].clone() };
            let (hn, cn, _) = lstm_cell(t[0].data(), t[1].data(), t[2].data(), &params).unwrap();
            let v: f64 = hn.iter().zip(rh.data()).map(|(a, b)| a * b).sum::<f64>()
                + cn.iter().zip(rc.data()).map(|(a, b)| a * b).sum::<f64>();
            Probe::smooth(v)
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn bilstm(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_len, d, h) = (5, 3, 3);
    let x = random(&[t_len, d], 1.0, &mut rng);
    let fwd = LstmParams {
        w: random(&[4 * h, d], 0.7, &mut rng),
        u: random(&[4 * h, h], 0.7, &mut rng),
        b: random(&[4 * h], 0.5, &mut rng),
    };
    let bwd = LstmParams {
        w: random(&[4 * h, d], 0.7, &mut rng),
        u: random(&[4 * h, h], 0.7, &mut rng),
        b: random(&[4 * h], 0.5, &mut rng),
    };
    let r = random(&[t_len, 2 * h], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&x, &fwd.w, &fwd.u, &fwd.b, &bwd.w, &bwd.u, &bwd.b]);

    let (_, cache) = bilstm_forward(&x, &fwd, &bwd).unwrap();
    let (mut gf, mut gb) = (fwd.zeros_like(), bwd.zeros_like());
    let dx = bilstm_backward(&cache, &fwd, &bwd, &r, &mut gf, &mut gb);
    let analytic = concat(&[&dx, &gf.w, &gf.u, &gf.b, &gb.w, &gb.u, &gb.b]);

    grad_check(
        |p| {
            let t = pack.unpack(p);
            let f = LstmParams { w: t[1].clone(), u: t[2].clone(), b: t[3].clone() };
            let b = LstmParams { w: t[4].clone(), u: t[5].clone(), b: t[6].clone() };
            let (y, _) = bilstm_forward(&t[0], &f, &b).unwrap();
            Probe::smooth(weighted_sum(&y, &r))
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn attention(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (t_len, d) = (6, 4);
    let hs = random(&[t_len, d], 1.0, &mut rng);
    let p = AttentionParams {
        w: random(&[d, d], 0.8, &mut rng),
        b: random(&[d], 0.5, &mut rng),
        v: random(&[d], 1.0, &mut rng),
    };
    let r = random(&[t_len, d], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&hs, &p.w, &p.b, &p.v]);

    let (_, alpha, cache) = attention_forward(&hs, &p).unwrap();
    assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let mut g = AttentionParams::zeros(d);
    let dh = attention_backward(&cache, &p, &r, &mut g);
    let analytic = concat(&[&dh, &g.w, &g.b, &g.v]);

    grad_check(
        |x| {
            let t = pack.unpack(x);
            let p = AttentionParams { w: t[1].clone(), b: t[2].clone(), v: t[3].clone() };
            let (y, _, _) = attention_forward(&t[0], &p).unwrap();
            Probe::smooth(weighted_sum(&y, &r))
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn output_bce(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[6, 4], 1.0, &mut rng);
    let w = random(&[4, 1], 1.0, &mut rng);
    let b = random(&[1], 0.5, &mut rng);
    let y: Vec<f64> = (0..6).map(|i| (i % 2) as f64).collect();
    let (pack, point) = Pack::new(&[&x, &w, &b]);

    let (z, cache) = dense_forward(&x, &w, &b, Activation::Identity).unwrap();
    let p: Vec<f64> = z.data().iter().map(|&v| sigmoid(v)).collect();
    let dz = Tensor::from_vec(&[6, 1], bce_grad_logits(&p, &y)).unwrap();
    let (mut dw, mut db) = (w.zeros_like(), b.zeros_like());
    let dx = dense_backward(&cache, &w, &dz, &mut dw, &mut db);
    let analytic = concat(&[&dx, &dw, &db]);
    grad_check(
        |q| {
            let t = pack.unpack(q);
            let (z, _) = dense_forward(&t[0], &t[1], &t[2], Activation::Identity).unwrap();
            Probe::smooth(bce_from_logits(z.data(), &y))
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn dense(seed: u64, activation: Activation) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[5, 3], 1.0, &mut rng);
    let w = random(&[3, 4], 1.0, &mut rng);
    let b = random(&[4], 0.5, &mut rng);
    let r = random(&[5, 4], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&x, &w, &b]);
    let (_, cache) = dense_forward(&x, &w, &b, activation).unwrap();
    let (mut dw, mut db) = (w.zeros_like(), b.zeros_like());
    let dx = dense_backward(&cache, &w, &r, &mut dw, &mut db);
    let analytic = concat(&[&dx, &dw, &db]);
    grad_check(
        |p| {
            let t = pack.unpack(p);
            let (y, c) = dense_forward(&t[0], &t[1], &t[2], activation).unwrap();
            Probe { value: weighted_sum(&y, &r), signature: c.signature().collect() }
        },
        &point,
        &analytic,
        STEP,
    )
}

pub fn batchnorm(seed: u64, mode: BnMode) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random(&[6, 3], 2.0, &mut rng);
    let mut s = BatchNormState::new(3);
    s.gamma = random(&[3], 1.5, &mut rng);
    s.beta = random(&[3], 1.0, &mut rng);
    s.running_mean = random(&[3], 0.5, &mut rng);
    s.running_var = Tensor::vector((0..3).map(|_| rng.random_range(0.5..2.0)).collect());
    let r = random(&[6, 3], 1.0, &mut rng);
    let (pack, point) = Pack::new(&[&x, &s.gamma, &s.beta]);

    let (_, cache) = batchnorm_forward(&x, &s, mode).unwrap();
    let (mut dg, mut dbeta) = (s.gamma.zeros_like(), s.beta.zeros_like());
    let dx = batchnorm_backward(&cache, &s, &r, &mut dg, &mut dbeta);
    let analytic = concat(&[&dx, &dg, &dbeta]);
    grad_check(
        |p| {
            let t = pack.unpack(p);
            let mut st = s.clone();
            st.gamma = t[1].clone();
            st.beta = t[2].clone();
            let (y, _) = batchnorm_forward(&t[0], &st, mode).unwrap();
            Probe::smooth(weighted_sum(&y, &r))
        },
        &point,
        &analytic,
        STEP,
    )
}
