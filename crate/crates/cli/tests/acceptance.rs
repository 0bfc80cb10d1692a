//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Pass a criterion number (or several) as arguments to run a subset:
//! `cargo test -p zdl-cli --test acceptance -- 4 5`.

// The scalar oracles index explicitly to mirror the equations they check.
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

use rand::Rng;
use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};
use zdl_core::eval::{attack_lag, confusion, per_ip_breakdown};
use zdl_core::features::ExtractorKind;
use zdl_core::features_ae::{
    frames_from_packets, train_ae, AeConfig, AeDims, AeModel, AeParams, BinaryInput, CODE_DIM,
};
use zdl_core::features_manual::{batched_feature_set, KeywordTable, DEFAULT_WINDOW};
use zdl_core::flowstats::{assign_flows, FlowKey, DEFAULT_IDLE_TIMEOUT, DIRECTIONAL_PAIRS, DOWN_UP_RATIO};
use zdl_core::ingest::{pad_and_bitize, BitVector12144, Label, PacketRecord, FRAME_BITS};
use zdl_core::models::{
    ensemble_average, make_sequence_inputs, predict_model, train_model, InputMode, ModelConfig, ModelKind,
};
use zdl_core::nn::{
    bce_grad_logits, bce_grad_probs, bce_loss_weighted, lstm_cell, seeded_rng, sigmoid, Activation, DenseLayer,
    LstmCellParams, ParamSet,
};
use zdl_core::scenarios::{generate_synthetic, AttackType, BenignMix, SynthConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

const STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every parameter.
fn param_fd_error<P: ParamSet + Clone>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let grads: Vec<Vec<f64>> = analytic.param_slices().iter().map(|s| s.to_vec()).collect();
    for (s, g) in grads.iter().enumerate() {
        for k in 0..g.len() {
            let orig = probe.param_slices()[s][k];
            probe.param_slices_mut()[s][k] = orig + STEP;
            let up = loss(&probe);
            probe.param_slices_mut()[s][k] = orig - STEP;
            let down = loss(&probe);
            probe.param_slices_mut()[s][k] = orig;
            worst = worst.max(rel_err(g[k], (up - down) / (2.0 * STEP)));
        }
    }
    worst
}

fn input_fd_error(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut probe = x.to_vec();
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        probe[k] = x[k] + STEP;
        let up = loss(&probe);
        probe[k] = x[k] - STEP;
        let down = loss(&probe);
        probe[k] = x[k];
        worst = worst.max(rel_err(analytic[k], (up - down) / (2.0 * STEP)));
    }
    worst
}

fn uniform_vec(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn dense_instance_error(activation: Activation, seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let (n_in, n_out) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let layer = DenseLayer::new(n_in, n_out, activation, &mut rng);
    // Keep pre-activations away from the ReLU kink so differences are smooth.
    let x = loop {
        let x = uniform_vec(&mut rng, n_in, 2.0);
        let z = layer.forward_cached(&x).unwrap().z;
        if activation != Activation::Relu || z.iter().all(|v| v.abs() > 1e-3) {
            break x;
        }
    };
    let r = uniform_vec(&mut rng, n_out, 1.0);
    let loss = |l: &DenseLayer, x: &[f64]| l.forward(x).unwrap().iter().zip(&r).map(|(y, w)| y * w).sum::<f64>();
    let cache = layer.forward_cached(&x).unwrap();
    let mut grads = layer.zeros_like();
    let dx = layer.backward(&cache, &r, &mut grads);
    let ep = param_fd_error(&layer, &grads, |l| loss(l, &x));
    let ex = input_fd_error(&x, &dx, |xs| loss(&layer, xs));
    ep.max(ex)
}

fn bce_instance_error(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let n = rng.gen_range(1..8);
    let z = uniform_vec(&mut rng, n, 4.0);
    let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0u8..2))).collect();
    let w = rng.gen_range(0.2..5.0);
    let probs = |z: &[f64]| z.iter().map(|&v| sigmoid(v)).collect::<Vec<f64>>();
    let p = probs(&z);
    let by_logit = input_fd_error(&z, &bce_grad_logits(&p, &y, w), |z| bce_loss_weighted(&probs(z), &y, w));
    let by_prob = input_fd_error(&p, &bce_grad_probs(&p, &y, w), |p| bce_loss_weighted(p, &y, w));
    by_logit.max(by_prob)
}

fn lstm_instance_error(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let (n_in, n_h) = (rng.gen_range(1..5), rng.gen_range(1..5));
    let p = LstmCellParams::new(n_in, n_h, &mut rng);
    let x = uniform_vec(&mut rng, n_in, 1.5);
    let h0 = uniform_vec(&mut rng, n_h, 1.0);
    let c0 = uniform_vec(&mut rng, n_h, 1.0);
    let (rh, rc) = (uniform_vec(&mut rng, n_h, 1.0), uniform_vec(&mut rng, n_h, 1.0));
    let loss = |p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]| {
        let (h1, c1) = lstm_cell(p, x, h, c).unwrap();
        h1.iter().zip(&rh).map(|(a, b)| a * b).sum::<f64>() + c1.iter().zip(&rc).map(|(a, b)| a * b).sum::<f64>()
    };
    let cache = p.forward_cached(&x, &h0, &c0).unwrap();
    let mut grads = p.zeros_like();
    let (dx, dh, dc) = p.backward(&cache, &rh, &rc, &mut grads);
    [
        param_fd_error(&p, &grads, |q| loss(q, &x, &h0, &c0)),
        input_fd_error(&x, &dx, |v| loss(&p, v, &h0, &c0)),
        input_fd_error(&h0, &dh, |v| loss(&p, &x, v, &c0)),
        input_fd_error(&c0, &dc, |v| loss(&p, &x, &h0, v)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn ae_instance_error(seed: u64) -> f64 {
    let mut rng = seeded_rng(seed);
    let dims = AeDims { input: 8, h1: 4, code: 2, h3: 4 };
    let cfg = AeConfig { alpha: rng.gen_range(0.01..1.0), beta: rng.gen_range(0.01..1.0), ..AeConfig::default() };
    let params = AeParams::init(dims, seed);
    let batch: Vec<BinaryInput> = (0..rng.gen_range(1..4))
        .map(|_| {
            let x: Vec<f64> = (0..dims.input).map(|_| f64::from(rng.gen_range(0u8..2))).collect();
            BinaryInput::from_dense(&x).unwrap()
        })
        .collect();
    let model = AeModel::from_params(params.clone(), &cfg);
    let (_, grads) = model.loss_and_gradient(&batch).unwrap();
    param_fd_error(&params, &grads, |p| AeModel::from_params(p.clone(), &cfg).loss_and_gradient(&batch).unwrap().0)
}

fn gradient_fidelity() -> Outcome {
    const INSTANCES: u64 = 100;
    let checks: [(&str, fn(u64) -> f64); 6] = [
        ("dense", |s| dense_instance_error(Activation::None, s)),
        ("sigmoid", |s| dense_instance_error(Activation::Sigmoid, s)),
        ("relu", |s| dense_instance_error(Activation::Relu, s)),
        ("bce", bce_instance_error),
        ("lstm cell", lstm_instance_error),
        ("ae loss", ae_instance_error),
    ];
    let t = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, f) in checks {
        let worst = (0..INSTANCES).map(|s| f(1000 + s)).fold(0.0, f64::max);
        pass &= worst <= GRAD_TOL;
        parts.push(format!("{name} {worst:.1e}"));
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{INSTANCES} instances each, max rel err: {}; {elapsed:.1?}", parts.join(", ")))
}

/// The cell equations written out one unit at a time.
fn scalar_lstm(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
    let n = h.len();
    let (mut h_out, mut c_out) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let pre = |w: &zdl_core::nn::Matrix, u: &zdl_core::nn::Matrix, b: &[f64]| {
            let mut s = b[k];
            for j in 0..x.len() {
                s += w.get(k, j) * x[j];
            }
            for j in 0..n {
                s += u.get(k, j) * h[j];
            }
            s
        };
        let f = logistic(pre(&p.w_f, &p.u_f, &p.b_f));
        let i = logistic(pre(&p.w_i, &p.u_i, &p.b_i));
        let o = logistic(pre(&p.w_o, &p.u_o, &p.b_o));
        let a = pre(&p.w_a, &p.u_a, &p.b_a).tanh();
        c_out[k] = f * c[k] + i * a;
        h_out[k] = o * c_out[k].tanh();
    }
    (h_out, c_out)
}

fn lstm_cell_oracle() -> Outcome {
    let mut rng = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_in = rng.gen_range(1..6);
        let mut p = LstmCellParams::new(n_in, 3, &mut rng);
        for s in p.param_slices_mut() {
            for v in s.iter_mut() {
                *v *= rng.gen_range(0.5..3.0);
            }
        }
        let x = uniform_vec(&mut rng, n_in, 2.0);
        let h = uniform_vec(&mut rng, 3, 1.0);
        let c = uniform_vec(&mut rng, 3, 2.0);
        let (h1, c1) = lstm_cell(&p, &x, &h, &c).unwrap();
        let (h2, c2) = scalar_lstm(&p, &x, &h, &c);
        for k in 0..3 {
            worst = worst.max((h1[k] - h2[k]).abs()).max((c1[k] - c2[k]).abs());
        }
    }
    let zero = LstmCellParams::zeros(2, 3);
    let c_prev = [0.8, -1.5, 0.25];
    let (h, c) = lstm_cell(&zero, &[0.3, -0.7], &[0.1, 0.2, -0.4], &c_prev).unwrap();
    let closed_form = (0..3).all(|k| c[k] == 0.5 * c_prev[k] && h[k] == 0.5 * (0.5 * c_prev[k]).tanh());
    outcome(
        worst <= 1e-9 && closed_form,
        format!("1000 random 3-unit cases, max abs diff {worst:.1e}; zero-weight closed form exact: {closed_form}"),
    )
}

fn ae_structure() -> Outcome {
    let mut rng = seeded_rng(3);
    let model = AeModel::new(AeDims::frames(16, 16), &AeConfig { seed: 3, ..AeConfig::default() });
    let mut code_ok = true;
    for k in 0..200 {
        let len = match k {
            0 => 0,
            1 => 1518,
            _ => rng.gen_range(0..=3000),
        };
        let fill: u8 = if k == 1 { 0xff } else { 0 };
        let raw: Vec<u8> = (0..len).map(|_| if k == 1 { fill } else { rng.gen() }).collect();
        let code = model.encode(&pad_and_bitize(&raw)).unwrap();
        code_ok &= code.len() == CODE_DIM && code.iter().all(|&v| v > 0.0 && v < 1.0);
    }
    let mut bits_ok = true;
    for len in 0..=3000usize {
        let raw: Vec<u8> = (0..len).map(|i| (i * 7 + len) as u8).collect();
        let b: BitVector12144 = pad_and_bitize(&raw);
        bits_ok &= b.len() == FRAME_BITS && FRAME_BITS == 12_144;
    }
    outcome(
        code_ok && bits_ok,
        format!("200 frames encode to {CODE_DIM} values in (0,1): {code_ok}; lengths 0..=3000 bitize to 12144 bits: {bits_ok}"),
    )
}

fn ae_anomaly_gap() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig {
        benign_mix: BenignMix::Modern,
        attack: Some(AttackType::SynFlood),
        benign_count: 22_000,
        attack_count: 2_000,
        seed: 4,
        ..SynthConfig::default()
    };
    let packets = generate_synthetic(&cfg).unwrap().records();
    let (benign, attack): (Vec<PacketRecord>, Vec<PacketRecord>) =
        packets.into_iter().partition(|p| p.label == Label::Benign);
    let train = frames_from_packets(&benign[..20_000]);
    let held_out = frames_from_packets(&benign[20_000..]);
    let flood = frames_from_packets(&attack);
    let ae_cfg = AeConfig {
        h1: 32,
        h3: 32,
        lr: 0.003,
        epochs: 40,
        batch_size: 16,
        seed: 4,
        clip_norm: Some(250.0),
        ..AeConfig::default()
    };
    let model = train_ae(&train, AeDims::frames(ae_cfg.h1, ae_cfg.h3), &ae_cfg).unwrap();
    let mean =
        |xs: &[BinaryInput]| xs.iter().map(|x| model.reconstruction_loss(x).unwrap()).sum::<f64>() / xs.len() as f64;
    let (b, a) = (mean(&held_out), mean(&flood));
    let elapsed = t.elapsed();
    let gap = a / b - 1.0;
    outcome(
        gap >= 0.20 && elapsed < Duration::from_secs(15 * 60),
        format!(
            "held-out benign {b:.3}, syn flood {a:.3}, gap {:+.1}% (need >= +20%); {} / {} / {} frames; {elapsed:.0?}",
            gap * 100.0,
            train.len(),
            held_out.len(),
            flood.len()
        ),
    )
}

fn synth(mix: BenignMix, attack: AttackType, seed: u64) -> Vec<PacketRecord> {
    let cfg = SynthConfig {
        benign_mix: mix,
        attack: Some(attack),
        benign_count: 9_000,
        attack_count: 1_000,
        seed,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg).unwrap().records()
}

fn detection_on(train: &[PacketRecord], test: &[PacketRecord]) -> (f64, f64) {
    let table = KeywordTable::default();
    let train_set = batched_feature_set(train, &table, DEFAULT_WINDOW);
    let test_set = batched_feature_set(test, &table, DEFAULT_WINDOW);
    let mut cfg = ModelConfig::default();
    cfg.train.seed = 5;
    let ck = train_model(ModelKind::Mlp, &train_set, None, &cfg).unwrap();
    let p = predict_model(&ck, &test_set, None).unwrap();
    let labels: Vec<u8> = test_set.labels.iter().map(|l| l.as_bit().unwrap()).collect();
    let m = confusion(&p.classes, &labels).unwrap();
    (m.detection_rate().unwrap(), m.false_positive_rate().unwrap())
}

fn zero_day_detection() -> Outcome {
    let t = Instant::now();
    let test = synth(BenignMix::Modern, AttackType::UdpFlood, 52);
    let mixed = synth(BenignMix::Modern, AttackType::SynFlood, 51);
    let control = synth(BenignMix::Legacy, AttackType::SynFlood, 51);
    let (det, fpr) = detection_on(&mixed, &test);
    let (control_det, control_fpr) = detection_on(&control, &test);
    let elapsed = t.elapsed();
    let pass = det >= 0.7 && fpr <= 0.05 && control_det < det && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "unseen udp_flood: detection {det:.3} (need >= 0.7), fpr {fpr:.3} (need <= 0.05); \
             control without in-distribution benign: detection {control_det:.3}, fpr {control_fpr:.3} (must be lower); {elapsed:.0?}"
        ),
    )
}

fn random_packets(n: usize, hosts: u8, seed: u64) -> Vec<PacketRecord> {
    let mut rng = seeded_rng(seed);
    let mut t = 0.0;
    (0..n)
        .map(|i| {
            t += rng.gen_range(0.0..0.01);
            let mut p = PacketRecord::from_frame(i, t, rng.gen_range(60..1500), vec![]);
            p.src_ip = Ipv4Addr::new(10, 0, 0, rng.gen_range(0..hosts));
            p.dst_ip = Ipv4Addr::new(10, 0, 0, rng.gen_range(0..hosts));
            p
        })
        .collect()
}

fn sequence_causality() -> Outcome {
    const T: usize = 16;
    let packets = random_packets(100_000, 12, 6);
    let mut violations = 0usize;
    let mut checked = 0usize;
    for mode in InputMode::ALL {
        let windows = make_sequence_inputs(&packets, T, mode).unwrap();
        let t_eff = if mode == InputMode::Single { 1 } else { T };
        let mut seen: HashSet<FlowKey> = HashSet::new();
        for (i, w) in windows.iter().enumerate() {
            checked += 1;
            let bad_order =
                w.current != i || w.members.iter().flatten().any(|&m| m > i) || w.members.last() != Some(&Some(i));
            let bad_group = mode == InputMode::FlowGrouped
                && w.members.iter().flatten().any(|&m| FlowKey::of(&packets[m]) != FlowKey::of(&packets[i]));
            let first = match mode {
                InputMode::FlowGrouped => seen.insert(FlowKey::of(&packets[i])),
                _ => i == 0,
            };
            let bad_pad = (first && w.pad_count != t_eff - 1)
                || w.members.len() != t_eff
                || w.members.iter().take(w.pad_count).any(Option::is_some);
            violations += usize::from(bad_order || bad_group || bad_pad);
        }
    }
    outcome(violations == 0, format!("{checked} windows over 100000 packets, 3 modes, T={T}: {violations} violations"))
}

fn flow_conservation() -> Outcome {
    let mut partition_ok = true;
    let mut captures = 0;
    for seed in 0..20u64 {
        let packets = random_packets(2_000, 6 + seed as u8, 100 + seed);
        let flows = assign_flows(&packets, 0.5);
        let mut all: Vec<usize> = flows.iter().flat_map(|f| f.packets()).collect();
        all.sort_unstable();
        partition_ok &= flows.iter().map(|f| f.members.len()).sum::<usize>() == packets.len()
            && all == (0..packets.len()).collect::<Vec<_>>();
        captures += 1;
    }
    let synthetic = synth(BenignMix::Modern, AttackType::SynFlood, 7);
    let flows = assign_flows(&synthetic, DEFAULT_IDLE_TIMEOUT);
    partition_ok &= flows.iter().map(|f| f.members.len()).sum::<usize>() == synthetic.len();
    captures += 1;

    let mut rng = seeded_rng(7);
    let mut asym = 0usize;
    for k in 0..1000u64 {
        let packets = random_packets(rng.gen_range(1..60), 2, 5000 + k);
        let flows = assign_flows(&packets, 1e9);
        let f = &flows[0];
        let r = f.reoriented().unwrap();
        let ok = (0..f.features.len()).all(|i| {
            let (a, b) = (f.features[i], r.features[i]);
            if let Some(&(x, y)) = DIRECTIONAL_PAIRS.iter().find(|(x, y)| *x == i || *y == i) {
                a == r.features[if i == x { y } else { x }]
            } else if i == DOWN_UP_RATIO {
                a == 0.0 || b == 0.0 || (a * b - 1.0).abs() < 1e-12
            } else {
                a == b
            }
        });
        asym += usize::from(!ok);
    }
    outcome(
        partition_ok && asym == 0,
        format!("{captures} captures partitioned exactly: {partition_ok}; 1000 randomized flows, {asym} direction-swap mismatches"),
    )
}

fn evaluation_algebra() -> Outcome {
    let mut rng = seeded_rng(8);
    let mut algebra_ok = true;
    for _ in 0..200 {
        let n = rng.gen_range(0..500);
        let sources: Vec<Ipv4Addr> = (0..n).map(|_| Ipv4Addr::new(10, 0, 0, rng.gen_range(0..8))).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let m = confusion(&preds, &labels).unwrap();
        let per = per_ip_breakdown(&sources, &preds, &labels).unwrap();
        algebra_ok &= m.total() as usize == n && per.marginals() == m;
    }
    let mut preds = vec![0u8; 50];
    preds[9] = 1;
    let lag = attack_lag(&preds, &[1; 50], &[Ipv4Addr::new(10, 0, 0, 1); 50], &[0.0; 50]).unwrap();
    let lag_ok = lag.episodes.len() == 1 && lag.episodes[0].lag_packets == Some(9);
    let mut grid_ok = true;
    for k in 0..=1u8 {
        for step in 0..=100u32 {
            let want = u8::from(step + 100 * u32::from(k) >= 100);
            grid_ok &= ensemble_average(f64::from(step) / 100.0, k) == want;
        }
    }
    outcome(
        algebra_ok && lag_ok && grid_ok,
        format!("counts and marginals over 200 random reports: {algebra_ok}; lag at 10th packet = {:?}; ensemble grid matches: {grid_ok}", lag.episodes.first().and_then(|e| e.lag_packets)),
    )
}

fn zdl(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_zdl")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("zdl {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn output_digests(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(format!("{}.manifest.json", path.display())).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["outputs"].as_array().unwrap().iter().map(|o| o["sha256"].as_str().unwrap().to_string()).collect()
}

const PIPELINE_CONFIG: &str = r#"
[model]
time_step = 4
mode = "flow-grouped"
[model.train]
epochs = 3
[model.lstm]
layers = 1
hidden = 8
[ae]
h1 = 8
h3 = 8
epochs = 1
[embed]
dim = 8
epochs = 2
"#;

/// Runs generate, ingest, fit-extractor, extract, train and eval for every
/// compatible extractor/model pair under `dir`; returns every output digest.
fn full_pipeline(dir: &Path) -> Result<Vec<(String, Vec<String>)>, String> {
    let p = |name: &str| -> PathBuf { dir.join(name) };
    let s = |path: &PathBuf| path.display().to_string();
    let config = p("run.toml");
    std::fs::write(&config, PIPELINE_CONFIG).map_err(|e| e.to_string())?;
    let (cap, store) = (p("cap.pcap"), p("store.jsonl"));
    zdl(&[
        "generate",
        "--attack",
        "syn_flood",
        "--benign-count",
        "900",
        "--attack-count",
        "100",
        "--seed",
        "9",
        "--output",
        &s(&cap),
    ])?;
    let labels = format!("{}.labels.csv", s(&cap));
    zdl(&["ingest", "--input", &s(&cap), "--labels", &labels, "--output", &s(&store)])?;
    let mut digests =
        vec![("generate".to_string(), output_digests(&cap)), ("ingest".to_string(), output_digests(&store))];
    for extractor in ExtractorKind::ALL {
        let features = p(&format!("{extractor}.csv"));
        let store_s = s(&store);
        let mut extract = vec!["extract", "--input", &store_s, "--extractor", extractor.name()];
        let fitted = p(&format!("{extractor}.model.json"));
        let fitted_s = s(&fitted);
        let features_s = s(&features);
        let config_s = s(&config);
        if matches!(extractor, ExtractorKind::Embed | ExtractorKind::EmbedBatched | ExtractorKind::Ae) {
            let fit_extractor = if extractor == ExtractorKind::EmbedBatched { "embed" } else { extractor.name() };
            zdl(&[
                "fit-extractor",
                "--input",
                &store_s,
                "--extractor",
                fit_extractor,
                "--config",
                &config_s,
                "--seed",
                "1",
                "--output",
                &fitted_s,
            ])?;
            digests.push((format!("fit {extractor}"), output_digests(&fitted)));
            extract.extend(["--model", &fitted_s]);
        }
        extract.extend(["--config", &config_s, "--output", &features_s]);
        zdl(&extract)?;
        digests.push((format!("extract {extractor}"), output_digests(&features)));
        for model in ModelKind::ALL {
            if model == ModelKind::Lstm && !extractor.supports_sequences() {
                continue;
            }
            let ck = s(&p(&format!("{extractor}.{model}.json")));
            let report = p(&format!("{extractor}.{model}.report.json"));
            zdl(&[
                "train",
                "--input",
                &features_s,
                "--model",
                model.name(),
                "--packets",
                &s(&store),
                "--config",
                &config_s,
                "--seed",
                "2",
                "--output",
                &ck,
            ])?;
            zdl(&[
                "eval",
                "--input",
                &features_s,
                "--model",
                &ck,
                "--packets",
                &s(&store),
                "--predictions",
                &s(&p(&format!("{extractor}.{model}.pred.csv"))),
                "--output",
                &s(&report),
            ])?;
            digests.push((format!("train {extractor}/{model}"), output_digests(Path::new(&ck))));
            digests.push((format!("eval {extractor}/{model}"), output_digests(&report)));
        }
    }
    Ok(digests)
}

fn determinism() -> Outcome {
    let t = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (first, second) = match (full_pipeline(a.path()), full_pipeline(b.path())) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let pairs = first.iter().filter(|(step, _)| step.starts_with("eval")).count();
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    outcome(
        differing.is_empty() && first.len() == second.len(),
        format!(
            "{} steps, {pairs} extractor/model pairs run twice; differing outputs: {}; {:.0?}",
            first.len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") },
            t.elapsed()
        ),
    )
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "gradient fidelity", gradient_fidelity),
        ("2", "lstm cell oracle", lstm_cell_oracle),
        ("3", "autoencoder structural contract", ae_structure),
        ("4", "autoencoder anomaly gap", ae_anomaly_gap),
        ("5", "zero-day detection on synthetic split", zero_day_detection),
        ("6", "sequence-input causality", sequence_causality),
        ("7", "flow conservation", flow_conservation),
        ("8", "evaluation algebra", evaluation_algebra),
        ("9", "determinism", determinism),
    ];
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.iter().any(|s| s == id) {
            continue;
        }
        let result = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("acceptance {id} {name}: {verdict}: {}", result.detail);
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
