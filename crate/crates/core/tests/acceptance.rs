//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Each check compares library output against an oracle written
//! here, independent of the library implementation.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use visaid::camera::{backproject, project, CameraModel, Point3D};
use visaid::coordsys::{ImageShape, NormBox, NormPoint, PixelPoint};
use visaid::datastore::{self, SampleEnvelope};
use visaid::eval::{
    self, point_accuracy, sample_box_points, trace_mae, trace_rmse, BoxSampling, EvalOptions, EvalRecord, GtRegion,
    HttpJudge, JudgeConfig, Prediction, Region,
};
use visaid::labelgen::{pixel_to_norm, resample_equidistant_px};
use visaid::lift::{optimize_depths, path_objective, LiftConfig};
use visaid::markup::{self, Node};
use visaid::mask::BinaryMask;
use visaid::scenegraph::{depth_order, relation_triples, DepthOrdering, Predicate, SceneObject};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

fn nb(x1: u16, y1: u16, x2: u16, y2: u16) -> NormBox {
    NormBox::new(x1, y1, x2, y2).unwrap()
}

fn np(x: u16, y: u16) -> NormPoint {
    NormPoint::new(x, y).unwrap()
}

// ---------------------------------------------------------------------------
// Markup fidelity

fn markup_fidelity() -> Outcome {
    let mut docs = Vec::new();
    for name in ["level1_answer.txt", "level2_answer.txt", "level4_answer.txt", "level5_answer.txt"] {
        let text = fixture(name);
        let doc = markup::parse_document(&text).map_err(|e| format!("{name}: {e}"))?;
        let once = markup::serialize(&doc);
        let reparsed = markup::parse_document(&once).map_err(|e| format!("{name} reparse: {e}"))?;
        ensure(reparsed == doc, || format!("{name}: parse(serialize(doc)) differs"))?;
        ensure(markup::serialize(&reparsed) == once, || format!("{name}: serialize is not a fixed point"))?;
        ensure(markup::validate_binding(&doc).is_empty(), || format!("{name}: binding violations"))?;
        docs.push(doc);
    }

    let refs: Vec<(&str, Vec<NormBox>)> = docs[0]
        .sections
        .iter()
        .flat_map(|s| &s.nodes)
        .filter_map(|n| match n {
            Node::Ref { name, boxes } => Some((name.as_str(), boxes.clone())),
            _ => None,
        })
        .collect();
    let want1 = [
        ("robotic arm", nb(338, 126, 994, 861)),
        ("blue bottle", nb(257, 201, 381, 413)),
        ("grey toy", nb(391, 413, 538, 518)),
        ("green oval object", nb(592, 481, 702, 601)),
    ];
    ensure(refs == want1.map(|(n, b)| (n, vec![b])), || format!("level 1 refs {refs:?}"))?;

    let triples = relation_triples(&docs[1]);
    ensure(triples.len() == 3, || format!("level 2: {} relations", triples.len()))?;
    ensure(triples[0] == (nb(597, 422, 817, 596), Predicate::RightOf, nb(171, 275, 446, 409)), || {
        format!("level 2 first relation {:?}", triples[0])
    })?;

    let (b, pts) = markup::extract_affordance(&docs[2]).map_err(|e| e.to_string())?;
    ensure(b == Some(nb(250, 181, 400, 392)), || format!("level 4 box {b:?}"))?;
    let pts = pts.ok_or("level 4: no points")?;
    let want4 = [[346, 248], [302, 365], [377, 251], [330, 295], [357, 291], [354, 362], [329, 355], [312, 352]];
    ensure(pts.points() == want4.map(|[x, y]| np(x, y)), || "level 4 points differ".into())?;

    let t = markup::extract_trace(&docs[3]).map_err(|e| e.to_string())?;
    let want5 = [[802, 613], [780, 582], [774, 501], [744, 465], [685, 394], [657, 349], [668, 354], [657, 401]];
    ensure(t.points.points() == want5.map(|[x, y]| np(x, y)), || "level 5 trace differs".into())?;
    ensure(!t.nonstandard_length, || "level 5 trace flagged nonstandard".into())?;
    Ok("4 printed examples parse, bind and round-trip; coordinates exact".into())
}

// ---------------------------------------------------------------------------
// Metric oracle

/// Position at arc fraction `frac` along a polyline, found by walking
/// segments from the start.
fn oracle_point_at(poly: &[[f64; 2]], frac: f64) -> [f64; 2] {
    let lens: Vec<f64> =
        poly.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).collect();
    let total: f64 = lens.iter().sum();
    if total == 0.0 {
        return poly[0];
    }
    let mut remaining = frac * total;
    for (i, &l) in lens.iter().enumerate() {
        if remaining <= l && l > 0.0 {
            let f = remaining / l;
            return [poly[i][0] + f * (poly[i + 1][0] - poly[i][0]), poly[i][1] + f * (poly[i + 1][1] - poly[i][1])];
        }
        remaining -= l;
    }
    *poly.last().unwrap()
}

fn oracle_metrics(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> (f64, f64) {
    let n = gt.len();
    let aligned: Vec<[f64; 2]> = if pred.len() == n {
        pred.to_vec()
    } else {
        (0..n)
            .map(|k| if k == n - 1 { *pred.last().unwrap() } else { oracle_point_at(pred, k as f64 / (n - 1) as f64) })
            .collect()
    };
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (a, b) in aligned.iter().zip(gt) {
        let d2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
        abs += d2.sqrt();
        sq += d2;
    }
    (abs / n as f64, (sq / n as f64).sqrt())
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let gt_len = rng.gen_range(2..=12);
        let pred_len = if case % 3 == 0 { gt_len } else { rng.gen_range(2..=12) };
        let mut gen = |n: usize| -> Vec<[f64; 2]> {
            (0..n).map(|_| [f64::from(rng.gen_range(0u16..1000)), f64::from(rng.gen_range(0u16..1000))]).collect()
        };
        let gt = gen(gt_len);
        let pred = gen(pred_len);
        let m = eval::trace_metrics(&pred, &gt).map_err(|e| e.to_string())?;
        let (mae, rmse) = oracle_metrics(&pred, &gt);
        let err = (m.mae - mae).abs().max((m.rmse - rmse).abs());
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("case {case}: ({}, {}) vs oracle ({mae}, {rmse})", m.mae, m.rmse))?;
        ensure(m.mae <= m.rmse + 1e-12, || format!("case {case}: MAE {} > RMSE {}", m.mae, m.rmse))?;
    }

    let gt = [[100.0, 100.0], [200.0, 150.0], [300.0, 300.0]];
    let same = eval::trace_metrics(&gt, &gt).map_err(|e| e.to_string())?;
    ensure(same.mae == 0.0 && same.rmse == 0.0, || format!("identical: {same:?}"))?;
    let off: Vec<[f64; 2]> = gt.iter().map(|p| [p[0] + 10.0, p[1]]).collect();
    let m = eval::trace_metrics(&off, &gt).map_err(|e| e.to_string())?;
    ensure(m.mae == 10.0 && m.rmse == 10.0, || format!("offset 10: {m:?}"))?;
    let g2 = [[0.0, 0.0], [100.0, 0.0]];
    let p2 = [[0.0, 0.0], [100.0, 20.0]];
    let mae = trace_mae(&p2, &g2).map_err(|e| e.to_string())?;
    let rmse = trace_rmse(&p2, &g2).map_err(|e| e.to_string())?;
    ensure(mae == 10.0 && rmse == 200f64.sqrt(), || format!("offsets {{0, 20}}: {mae}, {rmse}"))?;
    Ok(format!("50 random pairs, max |diff| {worst:.1e}; hand cases exact"))
}

// ---------------------------------------------------------------------------
// Resampling

fn smooth_polyline(rng: &mut ChaCha8Rng) -> Vec<PixelPoint> {
    let n = rng.gen_range(5..=30);
    let (ax, ay) = (rng.gen_range(50.0..300.0), rng.gen_range(50.0..200.0));
    let (fx, fy) = (rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0));
    let (px, py) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(0.0..std::f64::consts::TAU));
    let drift = rng.gen_range(-150.0..150.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            PixelPoint::new(
                320.0 + ax * (std::f64::consts::PI * fx * t + px).sin() + drift * t,
                240.0 + ay * (std::f64::consts::PI * fy * t + py).cos(),
            )
        })
        .collect()
}

fn resampling() -> Outcome {
    const ORACLE_SAMPLES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let track = smooth_polyline(&mut rng);
        let r = resample_equidistant_px(&track, 8).map_err(|e| format!("case {case}: {e}"))?;
        let t_max = r.spline.t_max();
        let arc_to = |t_end: f64| -> f64 {
            let mut s = 0.0;
            let mut prev = r.spline.eval(0.0);
            for i in 1..=ORACLE_SAMPLES {
                let p = r.spline.eval(t_end * i as f64 / ORACLE_SAMPLES as f64);
                s += prev.distance(&p);
                prev = p;
            }
            s
        };
        let total = arc_to(t_max);
        let cum: Vec<f64> = r.params.iter().map(|&t| arc_to(t)).collect();
        for k in 0..7 {
            let dev = ((cum[k + 1] - cum[k]) - total / 7.0).abs() / total;
            worst = worst.max(dev);
            ensure(dev <= 0.01, || format!("case {case}: gap {k} deviates {:.3}% of total", dev * 100.0))?;
        }
    }

    let seg = resample_equidistant_px(&[PixelPoint::new(10.0, 20.0), PixelPoint::new(710.0, 370.0)], 8)
        .map_err(|e| e.to_string())?;
    for (k, p) in seg.pixels.iter().enumerate() {
        let f = k as f64 / 7.0;
        let (ex, ey) = (10.0 + 700.0 * f, 20.0 + 350.0 * f);
        ensure((p.u - ex).abs() <= 1e-9 && (p.v - ey).abs() <= 1e-9, || format!("segment point {k}: {p:?}"))?;
    }
    Ok(format!("100 polylines, worst gap deviation {:.4}% of length; segment at 1/7 spacing", worst * 100.0))
}

// ---------------------------------------------------------------------------
// Depth optimization

fn depth_optimization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let config = LiftConfig::default();
    let mut worst = 0.0f64;
    let (mut case, mut outside) = (0, 0);
    while case < 200 {
        let cam = CameraModel::new(
            rng.gen_range(300.0..800.0),
            rng.gen_range(300.0..800.0),
            rng.gen_range(280.0..360.0),
            rng.gen_range(200.0..280.0),
            1000.0,
        )
        .unwrap();
        // a smooth 3D path; the middle depth is measured with up to ±30% error
        let ends: Vec<(PixelPoint, f64)> = (0..2)
            .map(|_| {
                (PixelPoint::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)), rng.gen_range(500.0..3000.0))
            })
            .collect();
        let a = backproject(ends[0].0, ends[0].1, &cam).unwrap();
        let c = backproject(ends[1].0, ends[1].1, &cam).unwrap();
        let f = rng.gen_range(0.2..0.8);
        let bend = Point3D::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
        let mid = Point3D::new(
            a.x + f * (c.x - a.x) + bend.x,
            a.y + f * (c.y - a.y) + bend.y,
            (a.z + f * (c.z - a.z) + bend.z).max(0.3),
        );
        let (mid_px, mid_d) = project(mid, &cam).unwrap();
        let rays: Vec<Point3D> = [ends[0].0, mid_px, ends[1].0].iter().map(|&p| cam.ray(p)).collect();
        let depths = vec![ends[0].1, mid_d * rng.gen_range(0.7..1.3), ends[1].1];
        let grid: Vec<f64> = (0..10_000)
            .map(|i| {
                let d = depths[1] * (0.5 + 1.5 * i as f64 / 9_999.0);
                path_objective(&rays, &[depths[0], d, depths[2]], cam.depth_scale)
            })
            .collect();
        let (best, f_grid) =
            grid.iter().copied().enumerate().fold((0, f64::INFINITY), |m, (i, f)| if f < m.1 { (i, f) } else { m });
        // the oracle only brackets minima strictly inside its span
        if best == 0 || best == grid.len() - 1 {
            outside += 1;
            continue;
        }
        case += 1;
        let res = optimize_depths(&rays, &depths, &cam, &config).map_err(|e| e.to_string())?;
        ensure(
            res.depths[0].to_bits() == depths[0].to_bits() && res.depths[2].to_bits() == depths[2].to_bits(),
            || format!("case {case}: endpoints moved"),
        )?;
        ensure(res.history.windows(2).all(|w| w[1] <= w[0]), || format!("case {case}: objective increased"))?;
        let f_opt = path_objective(&rays, &res.depths, cam.depth_scale);
        let rel = (f_opt - f_grid) / f_grid;
        worst = worst.max(rel.abs());
        ensure(rel.abs() <= 1e-4, || format!("case {case}: objective {f_opt} vs grid {f_grid} (rel {rel:.2e})"))?;
    }

    let cam = CameraModel::new(500.0, 500.0, 320.0, 240.0, 1000.0).unwrap();
    let ray = cam.ray(PixelPoint::new(400.0, 300.0));
    let d = 1500.0;
    let res = optimize_depths(&[ray, ray, ray], &[d, d + 500.0, d], &cam, &config).map_err(|e| e.to_string())?;
    let rel = (res.depths[1] - d).abs() / d;
    ensure(rel <= 1e-3, || format!("shared ray: middle depth {} vs {d} (rel {rel:.2e})", res.depths[1]))?;
    Ok(format!(
        "200 instances ({outside} redrawn with minimum outside the grid span), worst rel gap to grid {worst:.2e}; shared ray rel error {rel:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// Camera round trip

fn camera_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst = 0.0f64;
    for i in 0..100_000 {
        let cam = CameraModel::new(
            rng.gen_range(100.0..2000.0),
            rng.gen_range(100.0..2000.0),
            rng.gen_range(0.0..1280.0),
            rng.gen_range(0.0..960.0),
            rng.gen_range(100.0..10_000.0),
        )
        .unwrap();
        let p = PixelPoint::new(rng.gen_range(0.0..1280.0), rng.gen_range(0.0..960.0));
        let d = rng.gen_range(1.0..65_535.0);
        let (q, dq) = project(backproject(p, d, &cam).map_err(|e| e.to_string())?, &cam).map_err(|e| e.to_string())?;
        let err = rel(q.u, p.u).max(rel(q.v, p.v)).max(rel(dq, d));
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("sample {i}: {p:?}@{d} -> {q:?}@{dq}"))?;
    }
    let cam = CameraModel::new(500.0, 500.0, 320.0, 320.0, 1000.0).unwrap();
    for (u, v, d, want) in [
        (320.0, 320.0, 1000.0, [0.0, 0.0, 1.0]),
        (820.0, 320.0, 2000.0, [2.0, 0.0, 2.0]),
        (320.0, 70.0, 1000.0, [0.0, -0.5, 1.0]),
    ] {
        let p = backproject(PixelPoint::new(u, v), d, &cam).map_err(|e| e.to_string())?;
        ensure(p.to_array() == want, || format!("({u}, {v}) at {d}: {p:?}"))?;
    }
    Ok(format!("1e5 samples, worst rel error {worst:.1e}; worked examples exact"))
}

// ---------------------------------------------------------------------------
// Depth-gap rule

fn depth_gap_rule() -> Outcome {
    let obj = |name: &str, d: f64| SceneObject::new(name, nb(0, 0, 10, 10)).with_depth(d);
    let mut cases: Vec<(f64, f64, DepthOrdering)> = vec![
        (100.0, 130.0, DepthOrdering::AInFront),
        (130.0, 100.0, DepthOrdering::BInFront),
        (100.0, 110.0, DepthOrdering::Indeterminate),
        (110.0, 100.0, DepthOrdering::Indeterminate),
        (100.0, 125.0, DepthOrdering::AInFront),
        (100.0, 100.0, DepthOrdering::Indeterminate),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..2_000 {
        let near = rng.gen_range(100.0..5000.0);
        // gaps sampled away from the threshold by at least 1e-6
        let gap = loop {
            let g: f64 = rng.gen_range(0.0..0.8);
            if (g - 0.2).abs() > 1e-6 {
                break g;
            }
        };
        let far = near / (1.0 - gap);
        let (a, b, want) = if rng.gen_bool(0.5) {
            (near, far, if gap >= 0.2 { DepthOrdering::AInFront } else { DepthOrdering::Indeterminate })
        } else {
            (far, near, if gap >= 0.2 { DepthOrdering::BInFront } else { DepthOrdering::Indeterminate })
        };
        cases.push((a, b, want));
    }
    let (mut known, mut indet) = (0, 0);
    for (a, b, want) in &cases {
        let got = depth_order(&obj("a", *a), &obj("b", *b), 0.2).map_err(|e| e.to_string())?;
        ensure(got == *want, || format!("({a}, {b}): got {got:?}, want {want:?}"))?;
        if *want == DepthOrdering::Indeterminate {
            indet += 1;
        } else {
            known += 1;
        }
    }
    Ok(format!("{} pairs ({known} ordered, {indet} indeterminate) all correct", cases.len()))
}

// ---------------------------------------------------------------------------
// Dataset build

fn run_dataset(corpus: &Path, out: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_visaid"))
        .args(["dataset", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "42"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!("dataset exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })
}

fn dataset_build() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = dir.path().join("corpus");
    common::write_corpus(&corpus);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_dataset(&corpus, &a)?;
    run_dataset(&corpus, &b)?;
    for f in ["level4.jsonl", "level5.jsonl", "filter_report.json"] {
        let same = std::fs::read(a.join(f)).map_err(|e| e.to_string())?
            == std::fs::read(b.join(f)).map_err(|e| e.to_string())?;
        ensure(same, || format!("{f} differs between runs"))?;
    }
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("filter_report.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure(report["kept"] == 8, || format!("kept {}", report["kept"]))?;
    let mut rejections: Vec<(String, String)> = report["rejections"]
        .as_array()
        .ok_or("no rejections list")?
        .iter()
        .map(|r| (r["id"].as_str().unwrap_or("").to_string(), r["reason"].as_str().unwrap_or("").to_string()))
        .collect();
    rejections.sort();
    let want = vec![
        (common::TINY_MASK_ID.to_string(), "mask-too-small".to_string()),
        (common::STATIC_TRACK_ID.to_string(), "trace-too-short".to_string()),
    ];
    ensure(rejections == want, || format!("rejections {rejections:?}"))?;

    let mut total = 0;
    for f in ["level4.jsonl", "level5.jsonl"] {
        let read = datastore::read_jsonl::<SampleEnvelope>(&a.join(f), datastore::ReadMode::Strict)
            .map_err(|e| e.to_string())?;
        ensure(read.records.len() == 8, || format!("{f}: {} samples", read.records.len()))?;
        for s in &read.records {
            let v = datastore::validate_sample(s);
            ensure(v.is_empty(), || format!("{}: {v:?}", s.id))?;
            let doc = markup::parse_document(s.answer().unwrap_or("")).map_err(|e| e.to_string())?;
            ensure(markup::validate_binding(&doc).is_empty(), || format!("{}: binding violations", s.id))?;
        }
        total += read.records.len();
    }
    Ok(format!("8 of 10 kept, rejections attributed; {total} samples valid; runs byte-identical"))
}

// ---------------------------------------------------------------------------
// Evaluation protocol

fn read_request(stream: &mut TcpStream) -> std::io::Result<Vec<u8>> {
    let mut reader = BufReader::new(stream);
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    Ok(body)
}

/// Replies according to a `STUB:<reply>` marker inside the prompt's
/// instruction line.
fn stub_reply(body: &[u8]) -> (u16, String) {
    let Ok(v) = serde_json::from_slice::<Value>(body) else { return (400, "{}".into()) };
    let prompt = v.pointer("/messages/0/content/0/text").and_then(Value::as_str).unwrap_or("");
    let url = v.pointer("/messages/0/content/1/image_url/url").and_then(Value::as_str).unwrap_or("");
    if !url.starts_with("data:image/png;base64,") {
        return (400, "{}".into());
    }
    let content = if prompt.contains("STUB:seven") {
        "Score: 7\nExplanation: reaches the target"
    } else if prompt.contains("STUB:ten") {
        "Score: 10\nExplanation: exact"
    } else if prompt.contains("STUB:eleven") {
        "Score: 11\nExplanation: out of range"
    } else {
        "The trace looks reasonable."
    };
    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
}

fn start_stub() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            std::thread::spawn(move || {
                let (status, body) = match read_request(&mut stream) {
                    Ok(b) => stub_reply(&b),
                    Err(_) => return,
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
            });
        }
    });
    format!("http://{addr}/v1/chat/completions")
}

fn evaluation_protocol() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let shape = ImageShape::new(160, 120).unwrap();
    let mask = BinaryMask::from_fn(shape, |x, y| (40..70).contains(&x) && (30..50).contains(&y));
    datastore::write_mask_png(&mask, &dir.path().join("mask.png")).map_err(|e| e.to_string())?;
    let mask_points: Vec<NormPoint> =
        [(40, 30), (69, 49), (55, 40)].iter().map(|&(x, y)| pixel_to_norm(x, y, shape)).collect();

    let point = |id: &str, pred: Prediction, gt: GtRegion| EvalRecord {
        id: id.into(),
        task: eval::EvalTask::Point,
        instruction: String::new(),
        prediction: pred,
        gt_region: Some(gt),
        gt_trace: None,
        image: None,
    };
    let trace = |id: &str, instruction: &str, gt: Vec<NormPoint>, as_text: bool| EvalRecord {
        id: id.into(),
        task: eval::EvalTask::Trace,
        instruction: instruction.into(),
        prediction: if as_text {
            Prediction::Text(format!("<Answer>The visual trace is {}.</Answer>", markup::render_points(&gt)))
        } else {
            Prediction::Points(gt.clone())
        },
        gt_trace: Some(gt),
        gt_region: None,
        image: None,
    };
    let gt_box = nb(100, 200, 300, 400);
    let records = vec![
        point("p0", Prediction::Points(vec![np(150, 250), np(300, 400)]), GtRegion::Box(gt_box)),
        point("p1", Prediction::Box(nb(120, 220, 280, 380)), GtRegion::Box(gt_box)),
        point("p2", Prediction::Points(mask_points), GtRegion::Mask("mask.png".into())),
        point("p3", Prediction::Text("<point>[[100, 200], [200, 300]]</point>".into()), GtRegion::Box(gt_box)),
        point("p4", Prediction::Box(gt_box), GtRegion::Box(gt_box)),
        trace("t0", "open the drawer STUB:seven", vec![np(100, 100), np(200, 150), np(300, 300), np(400, 320)], false),
        trace("t1", "push the cup STUB:ten", (0..8).map(|i| np(100 + 50 * i, 900 - 60 * i)).collect(), true),
        trace("t2", "wipe the table STUB:malformed", vec![np(10, 10), np(990, 990)], false),
        trace("t3", "stack the blocks STUB:eleven", vec![np(500, 500), np(500, 400), np(600, 400)], true),
        trace("t4", "fold the cloth STUB:seven", vec![np(0, 999), np(999, 0), np(0, 0)], false),
    ];

    let judge = HttpJudge::new(JudgeConfig {
        endpoint: start_stub(),
        model: "stub".into(),
        timeout_secs: 5,
        retries: 0,
        ..Default::default()
    })?;
    let opts = EvalOptions { base_dir: dir.path().to_path_buf(), ..Default::default() };
    let report = eval::evaluate(&records, &opts, Some(&judge));
    let agg = &report.aggregates;
    ensure(agg.errored == 0, || format!("{} records errored", agg.errored))?;
    ensure(agg.mean_accuracy == Some(1.0), || format!("accuracy {:?}", agg.mean_accuracy))?;
    ensure(agg.mean_mae == Some(0.0) && agg.mean_rmse == Some(0.0), || {
        format!("MAE {:?} RMSE {:?}", agg.mean_mae, agg.mean_rmse)
    })?;

    let scores: Vec<(Option<u8>, bool)> =
        report.records[5..].iter().map(|r| (r.judge_score, r.judge_error.is_some() && !r.judge_unreachable)).collect();
    let want = vec![(Some(7), false), (Some(10), false), (None, true), (None, true), (Some(7), false)];
    ensure(scores == want, || format!("judge results {scores:?}"))?;
    ensure(agg.judge_transport_errors == 0, || "stub reported unreachable".into())?;

    // 3×3 grid expansion against hand-counted containment
    let hand: [(NormBox, NormBox, f64); 3] = [
        (nb(0, 0, 80, 80), nb(0, 0, 50, 50), 4.0 / 9.0),
        (nb(0, 0, 80, 80), nb(0, 0, 45, 100), 6.0 / 9.0),
        (nb(100, 100, 190, 190), nb(100, 100, 167, 145), 6.0 / 9.0),
    ];
    for (pred, gt, want) in hand {
        let pts = sample_box_points(&pred, BoxSampling::Grid(3));
        ensure(pts.len() == 9, || "grid size".into())?;
        let acc = point_accuracy(&pts, &Region::Box(gt)).map_err(|e| e.to_string())?;
        ensure(acc == want, || format!("{pred:?} in {gt:?}: {acc} vs {want}"))?;
    }
    let grid = sample_box_points(&nb(0, 0, 80, 80), BoxSampling::Grid(3));
    ensure(grid[0] == np(20, 20) && grid[4] == np(40, 40) && grid[8] == np(60, 60), || format!("grid {grid:?}"))?;
    Ok("perfect predictor 100% / 0 / 0; grid expansion matches hand counts; judge contract enforced via local stub"
        .into())
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "markup fidelity", limit: Duration::from_secs(1), run: markup_fidelity },
        Criterion { name: "metric oracle equivalence", limit: Duration::from_secs(5), run: metric_oracle },
        Criterion { name: "resampling", limit: Duration::from_secs(30), run: resampling },
        Criterion { name: "depth optimization", limit: Duration::from_secs(60), run: depth_optimization },
        Criterion { name: "camera round trip", limit: Duration::from_secs(5), run: camera_round_trip },
        Criterion { name: "depth-gap rule", limit: Duration::from_secs(1), run: depth_gap_rule },
        Criterion { name: "end-to-end dataset build", limit: Duration::from_secs(30), run: dataset_build },
        Criterion { name: "evaluation protocol", limit: Duration::from_secs(10), run: evaluation_protocol },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; exceeded {:?}", c.limit)),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  {:<28} {:>8.3}s  {detail}", c.name, elapsed.as_secs_f64()),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:<28} {:>8.3}s  {detail}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
