//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run alone with `cargo test -p pcd-core --test acceptance`.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use pcd_core::attack::{attack_suite, attack_success_rate};
use pcd_core::cloud::{realize_manifest, synth_manifest, synth_shape};
use pcd_core::graphdraw::{balanced_kmeans, delaunay3, delaunay_oracle, grid_embed, Graph};
use pcd_core::net::{evaluate, train};
use pcd_core::render::zbuffer;
use pcd_core::{
    AdaIn, AdaInParams, AttackReport, Dataset, GradPath, MappedImage, Mapper, Pipeline, Point3, PointCloud,
    PointGradient, ShapeKind, Tensor, TinyNet, TrainConfig, ZBufferConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

struct Runner {
    failed: usize,
}

impl Runner {
    fn run(&mut self, id: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let t = Instant::now();
        let got = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match got {
            Ok(d) => println!("PASS [{id:>2}] {name}: {d} ({secs:.1}s)"),
            Err(d) => {
                self.failed += 1;
                println!("FAIL [{id:>2}] {name}: {d} ({secs:.1}s)");
            }
        }
    }
}

struct Trained {
    name: &'static str,
    accuracy: f64,
    report: AttackReport,
}

fn train_and_attack(name: &'static str, tr: &Dataset, te: &Dataset, cfg: &TrainConfig) -> Trained {
    let mapper = Mapper::from_name(name).unwrap();
    let out = train(&mapper, tr, cfg).unwrap();
    let accuracy = evaluate(&out.net, &mapper, te).unwrap().instance_accuracy;
    let p = Pipeline::new(mapper, out.net).unwrap();
    let report = attack_suite(&p, te, 0.1, 1).unwrap();
    println!(
        "  {name}: test accuracy {accuracy:.1}%, attacked {:.1}%, ASR {:.2}",
        report.attacked_accuracy, report.attack_success_rate
    );
    Trained { name, accuracy, report }
}

fn asr_formula() -> Outcome {
    let rows = [(90.15, 45.99, 48.99), (84.97, 24.76, 70.86), (89.51, 89.51, 0.0)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (clean, attacked, want) in rows {
        let got = attack_success_rate(clean, attacked);
        ok &= (got - want).abs() <= 0.01;
        parts.push(format!("{clean}/{attacked} -> {got:.3}"));
    }
    ensure(ok, parts.join(", "))
}

fn edge_set(g: &Graph) -> BTreeSet<(usize, usize)> {
    g.edges.iter().copied().collect()
}

fn delaunay_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xde1a);
    let mut mismatches = 0;
    let sets = 60;
    for _ in 0..sets {
        let m = rng.gen_range(5..=20);
        let pts: Vec<Point3> = (0..m).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let fast = delaunay3(&pts).map_err(|e| e.to_string())?;
        if edge_set(&fast) != edge_set(&delaunay_oracle(&pts)) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{sets} sets, {mismatches} mismatches"))
}

fn cluster_cap_holds() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xca9);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let n: usize = rng.gen_range(64..=2048);
        let pts: Vec<Point3> = (0..n)
            .map(|_| {
                // lopsided clouds so that plain Lloyd would overshoot the cap
                let s = if rng.gen_bool(0.7) { 0.2 } else { 1.0 };
                [0; 3].map(|_| s * rng.gen_range(-1.0..1.0))
            })
            .collect();
        let h = balanced_kmeans(&PointCloud::new(pts), 32, 1.2, i, 100).map_err(|e| e.to_string())?;
        // ceil(1.2 n / 32) in integers
        let cap = (6 * n).div_ceil(160);
        let biggest = h.members.iter().map(Vec::len).max().unwrap_or(0);
        let total: usize = h.members.iter().map(Vec::len).sum();
        if biggest > cap || total != n {
            return Err(format!("cloud {i}: n={n}, largest cluster {biggest} > cap {cap} or lost points"));
        }
        worst = worst.max(biggest as f64 / cap as f64);
    }
    ensure(true, format!("100 clouds, largest cluster at {:.0}% of cap", worst * 100.0))
}

fn random_image(rng: &mut ChaCha8Rng, side: usize, channels: usize) -> MappedImage {
    let mut img = MappedImage::blank(side, side, channels, GradPath::Blocked);
    img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
    img
}

fn tinynet_gradients(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let net = TinyNet::new(3, 5, 16, 11).unwrap();
    let img = random_image(rng, 16, 3);
    let label = 2;
    let lg = net.loss_and_grad(&img, label, true).unwrap();
    let loss = |n: &TinyNet, im: &MappedImage| n.loss_and_grad(im, label, false).unwrap().loss;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (k, p) in net.params.iter().enumerate() {
        for _ in 0..20 {
            let j = rng.gen_range(0..p.data.len());
            let (mut a, mut b) = (net.clone(), net.clone());
            a.params[k].data[j] += h;
            b.params[k].data[j] -= h;
            let num = (loss(&a, &img) - loss(&b, &img)) / (2.0 * h);
            let e = rel_err(lg.param_grads[k][j], num);
            if e >= 1e-4 {
                return Err(format!("{}[{j}] rel err {e:.2e}", p.name));
            }
            worst = worst.max(e);
        }
    }
    let g = lg.input_grad.unwrap();
    for _ in 0..20 {
        let j = rng.gen_range(0..img.data.len());
        let (mut a, mut b) = (img.clone(), img.clone());
        a.data[j] += h;
        b.data[j] -= h;
        let num = (loss(&net, &a) - loss(&net, &b)) / (2.0 * h);
        let e = rel_err(g[j], num);
        if e >= 1e-4 {
            return Err(format!("input pixel {j} rel err {e:.2e}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

fn adain_params(rng: &mut ChaCha8Rng, c: usize, d: usize, epsilon: f64) -> AdaInParams {
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    AdaInParams {
        w: v(d),
        scale_weight: v(c * d),
        scale_bias: v(c),
        shift_weight: v(c * d),
        shift_bias: v(c),
        epsilon,
    }
}

fn adain_gradients(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let (h, w, c, d) = (5, 4, 3, 4);
    let p = adain_params(rng, c, d, 1e-5);
    let x = Tensor::new(vec![h, w, c], (0..h * w * c).map(|_| rng.gen_range(-2.0..2.0)).collect());
    let u: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |p: &AdaInParams, x: &Tensor| -> f64 {
        let y = AdaIn::new(p.clone()).unwrap().forward(x).unwrap();
        y.data.iter().zip(&u).map(|(a, b)| a * b).sum()
    };
    let mut layer = AdaIn::new(p.clone()).unwrap();
    layer.forward(&x).unwrap();
    let g = layer.backward(&Tensor::new(x.shape.clone(), u.clone())).unwrap();

    let step = 1e-6;
    let mut worst = 0.0f64;
    let mut check = |what: &str, analytic: f64, plus: f64, minus: f64| -> Result<(), String> {
        let num = (plus - minus) / (2.0 * step);
        let e = rel_err(analytic, num);
        worst = worst.max(e);
        if e < 1e-4 {
            Ok(())
        } else {
            Err(format!("AdaIN {what} rel err {e:.2e}"))
        }
    };
    for i in 0..x.len() {
        let (mut a, mut b) = (x.clone(), x.clone());
        a.data[i] += step;
        b.data[i] -= step;
        check("features", g.features.data[i], objective(&p, &a), objective(&p, &b))?;
    }
    let fields: [(&str, fn(&mut AdaInParams) -> &mut Vec<f64>, &Vec<f64>); 5] = [
        ("w", |q| &mut q.w, &g.w),
        ("scale_weight", |q| &mut q.scale_weight, &g.scale_weight),
        ("scale_bias", |q| &mut q.scale_bias, &g.scale_bias),
        ("shift_weight", |q| &mut q.shift_weight, &g.shift_weight),
        ("shift_bias", |q| &mut q.shift_bias, &g.shift_bias),
    ];
    for (what, field, analytic) in fields {
        for j in 0..analytic.len() {
            let (mut a, mut b) = (p.clone(), p.clone());
            field(&mut a)[j] += step;
            field(&mut b)[j] -= step;
            check(what, analytic[j], objective(&a, &x), objective(&b, &x))?;
        }
    }
    Ok(worst)
}

fn leak_gradients() -> Result<f64, String> {
    let mut worst = 0.0f64;
    for name in ["basic_project_leaky", "graphdraw"] {
        let mapper = Mapper::from_name(name).unwrap();
        let net = TinyNet::new(mapper.channels(), 5, 32, 21).unwrap();
        let p = Pipeline::new(mapper, net).unwrap();
        let cloud = synth_shape(ShapeKind::Torus, 512, 8).unwrap();
        let label = 4;
        let img = p.mapper.map(&cloud).unwrap();
        let PointGradient::Leak(g) = p.input_point_gradient(&cloud, label).unwrap() else {
            return Err(format!("{name} reports a blocked gradient"));
        };
        // pixel placement held fixed; the leaked intensities carry the gradient
        let loss = |c: &PointCloud| p.net.loss_and_grad(&img.reencode(c).unwrap(), label, false).unwrap().loss;
        let h = 1e-5;
        let mut checked = 0;
        for i in (0..cloud.len()).step_by(23) {
            for k in 0..3 {
                if g[i][k] == 0.0 {
                    continue;
                }
                let (mut a, mut b) = (cloud.clone(), cloud.clone());
                a.points[i][k] += h;
                b.points[i][k] -= h;
                let num = (loss(&a) - loss(&b)) / (2.0 * h);
                let e = rel_err(g[i][k], num);
                if e >= 1e-3 {
                    return Err(format!("{name} point {i} axis {k}: rel err {e:.2e}"));
                }
                worst = worst.max(e);
                checked += 1;
            }
        }
        if checked < 10 {
            return Err(format!("{name}: only {checked} nonzero gradient entries checked"));
        }
    }
    Ok(worst)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x96ad);
    let net = tinynet_gradients(&mut rng)?;
    let adain = adain_gradients(&mut rng)?;
    let leak = leak_gradients()?;
    Ok(format!(
        "worst rel err: TinyNet {net:.1e}, AdaIN {adain:.1e}, leak path {leak:.1e}"
    ))
}

fn zbuffer_analytics() -> Outcome {
    let cfg = ZBufferConfig::default();
    let one = |z: f64| zbuffer(&PointCloud::new(vec![[0.1, -0.2, z]]), &cfg).unwrap();
    // depth is camera - z
    let near = one(cfg.camera - cfg.alpha);
    let far = one(cfg.camera - cfg.alpha - cfg.beta);
    let peak = |img: &MappedImage| img.data.iter().copied().fold(0.0, f64::max);
    let at_alpha = peak(&near);
    let at_alpha_beta = peak(&far);
    let lit = near.data.iter().filter(|&&v| v != 0.0).count();
    let others_zero = near.data.iter().all(|&v| v == 0.0 || v == at_alpha);

    let pair = |order: [f64; 2]| {
        zbuffer(&PointCloud::new(order.iter().map(|&z| [0.1, -0.2, z]).collect()), &cfg).unwrap()
    };
    let (zn, zf) = (cfg.camera - cfg.alpha - 0.3, cfg.camera - cfg.alpha - 1.7);
    let ab = pair([zn, zf]);
    let ba = pair([zf, zn]);
    let max_wins = ab == ba && (peak(&ab) - cfg.intensity(cfg.alpha + 0.3)).abs() < 1e-12;

    let ok = at_alpha == 1.0
        && (at_alpha_beta - (-1f64).exp()).abs() < 1e-6
        && lit == cfg.splat * cfg.splat
        && others_zero
        && max_wins;
    ensure(
        ok,
        format!(
            "d=alpha -> {at_alpha}, d=alpha+beta -> {at_alpha_beta:.9}, {lit} lit pixels, rest exactly 0: {others_zero}, max wins: {max_wins}"
        ),
    )
}

fn adain_statistics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xada1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (h, w, c, d) = (rng.gen_range(4..12), rng.gen_range(4..12), rng.gen_range(1..6), rng.gen_range(1..6));
        let p = adain_params(&mut rng, c, d, 1e-5);
        let (ys, yb) = p.styles();
        let spread = rng.gen_range(1.0..3.0);
        let x = Tensor::new(
            vec![h, w, c],
            (0..h * w * c).map(|_| rng.gen_range(-spread..spread) + 0.7).collect(),
        );
        let y = AdaIn::new(p).unwrap().forward(&x).unwrap();
        let hw = (h * w) as f64;
        for i in 0..c {
            let vals: Vec<f64> = y.data.iter().skip(i).step_by(c).copied().collect();
            let mean = vals.iter().sum::<f64>() / hw;
            let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hw).sqrt();
            worst = worst.max((mean - yb[i]).abs()).max((std - ys[i].abs()).abs());
        }
    }
    ensure(worst < 1e-4, format!("20 random layers, worst deviation {worst:.2e}"))
}

fn embedding_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xe4b);
    for i in 0..50 {
        let n = rng.gen_range(2..=80);
        let pos: Vec<Point3> = (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect();
        let p = rng.gen_range(0.05..0.3);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|_| rng.gen_bool(p))
            .collect();
        let g = Graph::from_pairs(n, pairs);
        let e = grid_embed(&g, &pos, 16).map_err(|e| e.to_string())?;
        if e.energy_trace.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("graph {i}: energy trace increases: {:?}", e.energy_trace));
        }
        if e.energy_trace.last() != Some(&e.energy(&g)) {
            return Err(format!("graph {i}: trace does not end at the final energy"));
        }
    }
    let two = Graph::from_pairs(2, [(0, 1)]);
    let e = grid_embed(&two, &[[-0.9, 0.3, 0.0], [0.8, -0.6, 0.5]], 16).map_err(|e| e.to_string())?;
    let len = e.energy(&two);
    ensure(len == 1, format!("50 graphs non-increasing; 2-vertex length {len}"))
}

fn main() {
    let mut r = Runner { failed: 0 };

    r.run(3, "ASR formula on published pairs", asr_formula);
    r.run(5, "Delaunay oracle equivalence", delaunay_equivalence);
    r.run(6, "balanced clustering cap", cluster_cap_holds);
    r.run(7, "gradient checks", gradient_checks);
    r.run(8, "z-buffer analytics", zbuffer_analytics);
    r.run(9, "AdaIN statistics", adain_statistics);
    r.run(10, "grid embedding monotonicity", embedding_monotone);

    // one training run per pipeline, shared by criteria 1, 2 and 4
    let t = Instant::now();
    let tr = Dataset::new(realize_manifest(&synth_manifest(100, 1024, 0)).unwrap(), 5).unwrap();
    let te = Dataset::new(realize_manifest(&synth_manifest(20, 1024, 1 << 40)).unwrap(), 5).unwrap();
    let cfg = TrainConfig::default();
    println!("training 4 pipelines for {} epochs on {} clouds", cfg.epochs, tr.len());
    let runs: Vec<Trained> = ["basic_project", "basic_project_leaky", "graphdraw", "zbuffer"]
        .into_iter()
        .map(|name| train_and_attack(name, &tr, &te, &cfg))
        .collect();
    println!("  training and attacks took {:.0}s", t.elapsed().as_secs_f64());
    let get = |name: &str| runs.iter().find(|t| t.name == name).unwrap();

    r.run(1, "gradient blocking leaves accuracy unchanged", || {
        let mut parts = Vec::new();
        let mut ok = true;
        for name in ["basic_project", "zbuffer"] {
            let rep = &get(name).report;
            ok &= rep.attacked_accuracy == rep.clean_accuracy && rep.attack_success_rate == 0.0;
            parts.push(format!(
                "{name} clean {:.2} attacked {:.2} ASR {:.2}",
                rep.clean_accuracy, rep.attacked_accuracy, rep.attack_success_rate
            ));
        }
        ensure(ok, parts.join("; "))
    });
    r.run(2, "coordinate leak defeats the defense", || {
        let basic = get("basic_project").report.attack_success_rate;
        let leaky = get("basic_project_leaky").report.attack_success_rate;
        let graph = get("graphdraw").report.attack_success_rate;
        ensure(
            leaky >= basic + 20.0 && graph > 0.0,
            format!("ASR basic {basic:.2}, leaky {leaky:.2}, graphdraw {graph:.2}"),
        )
    });
    r.run(4, "desk-scale learnability", || {
        let accs: Vec<(&str, f64)> = ["basic_project", "graphdraw", "zbuffer"]
            .into_iter()
            .map(|n| (n, get(n).accuracy))
            .collect();
        ensure(
            accs.iter().all(|&(_, a)| a >= 90.0),
            accs.iter().map(|(n, a)| format!("{n} {a:.1}%")).collect::<Vec<_>>().join(", "),
        )
    });

    println!("{} of 10 criteria failed", r.failed);
    if r.failed > 0 {
        std::process::exit(1);
    }
}
