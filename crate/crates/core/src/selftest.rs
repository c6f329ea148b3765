//! Fast invariant suite behind `clp selftest`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::baselines::{LinearConfig, LinearHead, LinearRule, NcmModel, SldaConfig, SldaModel};
use crate::model::{ClpConfig, ClpModel, RuleMode};
use crate::quantize::{dequantize, int_dot, quantize_vec, FixedPointFormat};
use crate::rng::SplitMix64;
use crate::rules::{norm_drift, predicted_drift, update_explicit, update_selfnorm, Sign, UpdateInputs};
use crate::snn::{SnnConfig, SnnNet};
use crate::vector::{l2_normalize, norm, Label};

#[derive(Clone, Debug)]
pub struct SelfTestOptions {
    /// Multiplier on the closed-form drift; anything but 1 must fail.
    pub drift_constant: f64,
    pub seed: u64,
}

impl Default for SelfTestOptions {
    fn default() -> Self {
        Self { drift_constant: 1.0, seed: 0x5e1f }
    }
}

#[derive(Clone, Debug)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn unit(rng: &mut SplitMix64, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
    l2_normalize(&v).expect("gaussian draw is nonzero").into_values()
}

/// Angle between two nonzero vectors, stable near zero.
pub fn angle_between(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    let chord: f64 = a.iter().zip(b).map(|(x, y)| (x / na - y / nb).powi(2)).sum::<f64>().sqrt();
    2.0 * (chord / 2.0).min(1.0).asin()
}

fn drift_law(rng: &mut SplitMix64, c: f64) -> (bool, String) {
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = 2 + rng.below(30) as usize;
        let (w, x) = (unit(rng, d), unit(rng, d));
        let alpha = 0.3 * (1.0 - rng.next_f64());
        let r = if rng.below(2) == 0 { Sign::Minus } else { Sign::Plus };
        let u = UpdateInputs::new(&w, &x, alpha, r).expect("valid rate");
        worst = worst.max((norm_drift(&u) - c * predicted_drift(alpha, r, u.activation())).abs());
    }
    (worst <= 1e-10, format!("max |drift - alpha^2 (1 - y^2)| = {worst:.2e}"))
}

fn second_order(rng: &mut SplitMix64) -> (bool, String) {
    let mut worst = f64::INFINITY;
    let mut n = 0;
    while n < 1000 {
        let d = 2 + rng.below(30) as usize;
        let (w, x) = (unit(rng, d), unit(rng, d));
        let y: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        if y >= 0.99 {
            continue;
        }
        let r = if rng.below(2) == 0 { Sign::Minus } else { Sign::Plus };
        let gap = |alpha: f64| {
            let u = UpdateInputs::new(&w, &x, alpha, r).expect("valid rate");
            angle_between(&update_selfnorm(&u), &update_explicit(&u).expect("no cancellation at small rate"))
        };
        let (big, small) = (gap(0.1), gap(0.01));
        if big > 0.0 {
            worst = worst.min(big / small.max(f64::MIN_POSITIVE));
        }
        n += 1;
    }
    (worst >= 50.0, format!("min angle ratio (alpha 0.1 vs 0.01) = {worst:.1}"))
}

fn imprint(rng: &mut SplitMix64) -> (bool, String) {
    let d = 16;
    let mut ok = true;
    for mode in [RuleMode::ExplicitNorm, RuleMode::SelfNorm] {
        let x = l2_normalize(&unit(rng, d)).expect("unit");
        let mut m = ClpModel::new(ClpConfig { rule_mode: mode, ..ClpConfig::new(d) }).expect("valid config");
        m.learn_step(&x, Some(1)).expect("allocation");
        ok &= m.prototypes()[0].weights() == x.values();
        let zeros = vec![0.0; d];
        let u = UpdateInputs::new(&zeros, x.values(), 1.0, Sign::Plus).expect("rate 1");
        ok &= update_selfnorm(&u) == x.values();
    }
    let x = unit(rng, d);
    let codes = quantize_vec(&x, &FixedPointFormat::default()).codes;
    let mut net = SnnNet::new(SnnConfig::new(d)).expect("valid config");
    net.run_epoch(&l2_normalize(&x).expect("unit"), Some(1)).expect("allocation");
    ok &= net.row(0) == codes.as_slice();
    (ok, "float w == x bit-exactly (both rule modes), INT7 row == codes".into())
}

fn metaplasticity() -> (bool, String) {
    let mut m = ClpModel::new(ClpConfig::new(2)).expect("valid config");
    let x = l2_normalize(&[1.0, 0.2]).expect("nonzero");
    m.learn_step(&x, Some(0)).expect("allocation");
    let mut gs = vec![m.prototypes()[0].goodness()];
    let mut ok = true;
    for truth in [0, 0, 1] {
        m.learn_step(&x, Some(truth)).expect("update");
        let p = &m.prototypes()[0];
        gs.push(p.goodness());
        ok &= p.alpha() * p.goodness() as f64 == 1.0;
    }
    ok &= gs == [1, 2, 3, 2];
    (ok, format!("goodness {gs:?}"))
}

fn wta_agreement(rng: &mut SplitMix64) -> (bool, String) {
    let d = 32;
    let fmt = FixedPointFormat::default();
    let mut net = SnnNet::new(SnnConfig::new(d)).expect("valid config");
    for _ in 0..40 {
        net.imprint(&quantize_vec(&unit(rng, d), &fmt).codes, None).expect("capacity");
    }
    let (mut compared, mut agreed) = (0, 0);
    for _ in 0..10_000 {
        let k = rng.below(40) as usize;
        let base = dequantize(net.row(k), &fmt);
        let noise = unit(rng, d);
        let scale = 0.6 * rng.next_f64();
        let v: Vec<f64> = base.iter().zip(&noise).map(|(b, z)| b + scale * z).collect();
        let x_q = quantize_vec(l2_normalize(&v).expect("nonzero").values(), &fmt).codes;
        let mut acts: Vec<(i64, usize)> = (0..40).map(|i| (int_dot(net.row(i), &x_q).expect("dims"), i)).collect();
        acts.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        if ((acts[0].0 - acts[1].0) as f64) <= net.bin_quantum() {
            continue;
        }
        let expected = (acts[0].0 > net.theta_int()).then_some(acts[0].1);
        compared += 1;
        agreed += (net.spiking_winner(&x_q).expect("dims") == expected) as usize;
    }
    (compared > 0 && agreed == compared, format!("{agreed}/{compared} gap-filtered injections agree"))
}

fn streaming_oracles(rng: &mut SplitMix64) -> (bool, String) {
    let d = 8;
    let mut ncm = NcmModel::new(d);
    let mut slda = SldaModel::new(SldaConfig::new(d)).expect("valid config");
    let mut samples: Vec<(Vec<f64>, Label)> = Vec::new();
    for _ in 0..1000 {
        let l = rng.below(4) as Label;
        let v: Vec<f64> = (0..d).map(|j| rng.normal() + (j % 4 == l as usize) as u8 as f64).collect();
        let x = l2_normalize(&v).expect("nonzero");
        ncm.update(&x, l).expect("dims");
        slda.update(&x, l).expect("dims");
        samples.push((x.into_values(), l));
    }
    let mut means: BTreeMap<Label, (Vec<f64>, f64)> = BTreeMap::new();
    for (x, l) in &samples {
        let e = means.entry(*l).or_insert((vec![0.0; d], 0.0));
        e.0.iter_mut().zip(x).for_each(|(m, v)| *m += v);
        e.1 += 1.0;
    }
    let mut mean_err: f64 = 0.0;
    for (l, (sum, n)) in &means {
        for (a, s) in ncm.mean(*l).expect("seen").iter().zip(sum) {
            mean_err = mean_err.max((a - s / n).abs());
        }
    }
    let mut cov = vec![0.0; d * d];
    for (x, l) in &samples {
        let (sum, n) = &means[l];
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += (x[i] - sum[i] / n) * (x[j] - sum[j] / n);
            }
        }
    }
    let streaming = slda.covariance();
    let mut cov_err: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            cov_err = cov_err.max((streaming[(i, j)] - cov[i * d + j] / samples.len() as f64).abs());
        }
    }

    let mut head = LinearHead::new(LinearConfig::new(d, LinearRule::Finetune)).expect("valid config");
    for (x, l) in samples.iter().take(50) {
        head.finetune_step(x, *l).expect("dims");
    }
    let (x, l) = &samples[60];
    let t = head.labels().binary_search(l).expect("seen");
    let g = head.gradient(x, t);
    let mut grad_err: f64 = 0.0;
    let eps = 1e-5;
    for k in 0..head.labels().len() {
        for j in 0..d {
            let mut plus = head.clone();
            let mut minus = head.clone();
            plus.params_mut().0[k][j] += eps;
            minus.params_mut().0[k][j] -= eps;
            let fd = (plus.gradient(x, t).loss - minus.gradient(x, t).loss) / (2.0 * eps);
            grad_err = grad_err.max((fd - g.weights[k][j]).abs());
        }
    }
    let ok = mean_err <= 1e-9 && cov_err <= 1e-8 && grad_err <= 1e-5;
    (ok, format!("mean err {mean_err:.1e}, covariance err {cov_err:.1e}, gradient err {grad_err:.1e}"))
}

/// Runs every property and reports each one.
pub fn run_selftest(opts: &SelfTestOptions) -> Vec<PropertyResult> {
    let mut rng = SplitMix64::new(opts.seed);
    let c = opts.drift_constant;
    let props: Vec<(&'static str, Box<dyn FnOnce(&mut SplitMix64) -> (bool, String)>)> = vec![
        ("norm-drift law", Box::new(move |r| drift_law(r, c))),
        ("second-order agreement of update rules", Box::new(second_order)),
        ("imprint exactness", Box::new(imprint)),
        ("metaplasticity ledger", Box::new(|_| metaplasticity())),
        ("spiking WTA agrees with argmax", Box::new(wta_agreement)),
        ("streaming/batch oracles", Box::new(streaming_oracles)),
    ];
    props
        .into_iter()
        .enumerate()
        .map(|(i, (name, f))| {
            let mut sub = rng.fork(i as u64);
            let start = Instant::now();
            let (passed, detail) = f(&mut sub);
            PropertyResult { name, passed, detail, elapsed: start.elapsed() }
        })
        .collect()
}
