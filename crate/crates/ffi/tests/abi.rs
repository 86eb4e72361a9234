use std::ffi::{CStr, CString};
use std::ptr;

use visaid::camera::CameraModel;
use visaid::coordsys::{ImageShape, NormBox, NormPoint, PixelPoint};
use visaid::eval::{self, Region};
use visaid::labelgen;
use visaid::lift::{self, LiftConfig};
use visaid::markup;
use visaid_ffi::*;

const LEVEL4: &str = include_str!("../../core/tests/fixtures/level4_answer.txt");
const LEVEL5: &str = include_str!("../../core/tests/fixtures/level5_answer.txt");

fn last_error() -> String {
    let p = visaid_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn parse(text: &str) -> Result<*mut VisaidDoc, (VisaidStatus, usize)> {
    let c = CString::new(text).unwrap();
    let mut doc = ptr::null_mut();
    let mut offset = usize::MAX;
    let st = unsafe { visaid_parse(c.as_ptr(), &mut doc, &mut offset) };
    if st == VisaidStatus::Ok {
        Ok(doc)
    } else {
        assert!(doc.is_null());
        Err((st, offset))
    }
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { visaid_string_free(p) };
    s
}

#[test]
fn parse_matches_core() {
    for text in [LEVEL4, LEVEL5, ""] {
        let doc = parse(text).unwrap();
        let mut json = ptr::null_mut();
        assert_eq!(unsafe { visaid_doc_to_json(doc, &mut json) }, VisaidStatus::Ok);
        let json = take_string(json);
        let core = markup::parse_document(text).unwrap();
        assert_eq!(json, serde_json::to_string(&core).unwrap());
        let mut text_out = ptr::null_mut();
        assert_eq!(unsafe { visaid_doc_to_markup(doc, &mut text_out) }, VisaidStatus::Ok);
        assert_eq!(take_string(text_out), markup::serialize(&core));
        unsafe { visaid_doc_free(doc) };
    }
    let doc = parse(LEVEL4).unwrap();
    let mut json = ptr::null_mut();
    unsafe { visaid_doc_to_json(doc, &mut json) };
    assert!(take_string(json).contains("[250,181,400,392]"));
    unsafe { visaid_doc_free(doc) };
}

#[test]
fn parse_error_reports_offset() {
    let text = "<Answer><box>[[1, 2, 3]]</box></Answer>";
    let (st, offset) = parse(text).unwrap_err();
    assert_eq!(st, VisaidStatus::ParseError);
    assert_eq!(offset, markup::parse_document(text).unwrap_err().offset);
    assert!(!last_error().is_empty());
}

#[test]
fn null_and_utf8_errors() {
    let mut doc = ptr::null_mut();
    assert_eq!(unsafe { visaid_parse(ptr::null(), &mut doc, ptr::null_mut()) }, VisaidStatus::NullPointer);
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { visaid_parse(bad.as_ptr().cast(), &mut doc, ptr::null_mut()) }, VisaidStatus::InvalidUtf8);
    unsafe { visaid_doc_free(ptr::null_mut()) };
    unsafe { visaid_string_free(ptr::null_mut()) };
    let ok = CString::new("").unwrap();
    assert_eq!(unsafe { visaid_parse(ok.as_ptr(), &mut doc, ptr::null_mut()) }, VisaidStatus::Ok);
    assert!(visaid_last_error().is_null());
    unsafe { visaid_doc_free(doc) };
}

#[test]
fn metrics_match_core() {
    let pred = [0.0, 0.0, 100.0, 20.0, 250.0, 80.0];
    let gt = [0.0, 0.0, 100.0, 0.0];
    let mut out = VisaidTraceMetrics { mae: -1.0, rmse: -1.0 };
    assert_eq!(unsafe { visaid_trace_metrics(pred.as_ptr(), 3, gt.as_ptr(), 2, &mut out) }, VisaidStatus::Ok);
    let core = eval::trace_metrics(&[[0.0, 0.0], [100.0, 20.0], [250.0, 80.0]], &[[0.0, 0.0], [100.0, 0.0]]).unwrap();
    assert_eq!((out.mae, out.rmse), (core.mae, core.rmse));

    let off = [10.0, 0.0, 110.0, 0.0];
    unsafe { visaid_trace_metrics(off.as_ptr(), 2, gt.as_ptr(), 2, &mut out) };
    assert_eq!((out.mae, out.rmse), (10.0, 10.0));
    assert_eq!(
        unsafe { visaid_trace_metrics(gt.as_ptr(), 1, gt.as_ptr(), 2, &mut out) },
        VisaidStatus::InvalidArgument
    );
    let nan = [f64::NAN, 0.0, 1.0, 1.0];
    assert_eq!(
        unsafe { visaid_trace_metrics(nan.as_ptr(), 2, gt.as_ptr(), 2, &mut out) },
        VisaidStatus::InvalidArgument
    );
}

#[test]
fn point_accuracy_matches_core() {
    let pts = [VisaidNormPoint { x: 10, y: 10 }, VisaidNormPoint { x: 50, y: 50 }, VisaidNormPoint { x: 60, y: 10 }];
    let core_pts: Vec<NormPoint> = pts.iter().map(|p| NormPoint::new(p.x, p.y).unwrap()).collect();
    let bbox = [0u16, 0, 50, 50];
    let mut acc = -1.0;
    assert_eq!(unsafe { visaid_point_accuracy_box(pts.as_ptr(), 3, bbox.as_ptr(), &mut acc) }, VisaidStatus::Ok);
    let b = NormBox::new(0, 0, 50, 50).unwrap();
    assert_eq!(acc, eval::point_accuracy(&core_pts, &Region::Box(b)).unwrap());
    assert_eq!(acc, 2.0 / 3.0);

    let s = ImageShape::new(20, 10).unwrap();
    let bytes: Vec<u8> = (0..200).map(|i| u8::from(i % 20 < 5)).collect();
    assert_eq!(
        unsafe { visaid_point_accuracy_mask(pts.as_ptr(), 3, bytes.as_ptr(), 20, 10, &mut acc) },
        VisaidStatus::Ok
    );
    let m = visaid::mask::BinaryMask::new(s, bytes.iter().map(|&b| b != 0).collect()).unwrap();
    assert_eq!(acc, eval::point_accuracy(&core_pts, &Region::Mask(m)).unwrap());

    let bad = [VisaidNormPoint { x: 1000, y: 0 }];
    assert_eq!(
        unsafe { visaid_point_accuracy_box(bad.as_ptr(), 1, bbox.as_ptr(), &mut acc) },
        VisaidStatus::InvalidArgument
    );
}

#[test]
fn resample_matches_core() {
    let track: Vec<f64> = (0..20)
        .flat_map(|i| {
            let t = f64::from(i) / 19.0;
            [20.0 + 280.0 * t, 200.0 - 150.0 * t + 40.0 * (3.0 * t).sin()]
        })
        .collect();
    let mut out = [VisaidNormPoint { x: 0, y: 0 }; 8];
    assert_eq!(
        unsafe { visaid_resample_equidistant(track.as_ptr(), 20, 320, 240, 8, out.as_mut_ptr()) },
        VisaidStatus::Ok
    );
    let px: Vec<PixelPoint> = track.chunks(2).map(|c| PixelPoint::new(c[0], c[1])).collect();
    let core = labelgen::resample_equidistant(&px, ImageShape::new(320, 240).unwrap(), 8).unwrap();
    assert_eq!(out.map(|p| (p.x, p.y)).to_vec(), core.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>());

    let still = [5.0, 5.0, 5.0, 5.0];
    assert_eq!(
        unsafe { visaid_resample_equidistant(still.as_ptr(), 2, 320, 240, 8, out.as_mut_ptr()) },
        VisaidStatus::InvalidArgument
    );
}

#[test]
fn lift_matches_core() {
    let trace = [
        VisaidNormPoint { x: 100, y: 500 },
        VisaidNormPoint { x: 400, y: 450 },
        VisaidNormPoint { x: 600, y: 520 },
        VisaidNormPoint { x: 900, y: 500 },
    ];
    let depths = [1500.0, 2600.0, 900.0, 1400.0];
    let cam = VisaidCamera { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, depth_scale: 1000.0 };
    let core_trace: Vec<NormPoint> = trace.iter().map(|p| NormPoint::new(p.x, p.y).unwrap()).collect();
    let core_cam = CameraModel::new(500.0, 500.0, 320.0, 240.0, 1000.0).unwrap();
    let shape = ImageShape::new(640, 480).unwrap();
    let cfg = visaid_lift_config_default();
    for optimize in [false, true] {
        let mut out = [VisaidPoint3 { x: 0.0, y: 0.0, z: 0.0 }; 4];
        let st = unsafe {
            visaid_lift(trace.as_ptr(), depths.as_ptr(), 4, 640, 480, &cam, optimize, &cfg, out.as_mut_ptr())
        };
        assert_eq!(st, VisaidStatus::Ok);
        let core =
            lift::lift_with_depths(&core_trace, shape, &depths, &core_cam, &LiftConfig::default(), optimize).unwrap();
        for (o, p) in out.iter().zip(&core.points) {
            assert_eq!([o.x, o.y, o.z], p.to_array());
        }
        assert_eq!(out[0].z, 1.5);
        assert_eq!(out[3].z, 1.4);
        if optimize {
            assert!(out[1].z != 2.6);
        }
    }

    let mut out = [VisaidPoint3 { x: 0.0, y: 0.0, z: 0.0 }; 4];
    let holes = [1500.0, 0.0, 900.0, 1400.0];
    let st =
        unsafe { visaid_lift(trace.as_ptr(), holes.as_ptr(), 4, 640, 480, &cam, true, ptr::null(), out.as_mut_ptr()) };
    assert_eq!(st, VisaidStatus::MissingDepth);
    assert!(last_error().contains("trace point 1"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/visaid.h")).unwrap();
    for name in [
        "visaid_last_error",
        "visaid_parse",
        "visaid_doc_to_json",
        "visaid_doc_to_markup",
        "visaid_doc_free",
        "visaid_string_free",
        "visaid_trace_metrics",
        "visaid_point_accuracy_box",
        "visaid_point_accuracy_mask",
        "visaid_resample_equidistant",
        "visaid_lift_config_default",
        "visaid_lift",
        "typedef struct VisaidDoc VisaidDoc;",
        "VISAID_STATUS_MISSING_DEPTH = 5",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
