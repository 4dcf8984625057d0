mod common;

use flowfields::edges::EdgeMap;
use flowfields::filter::{Match, MatchSet};
use flowfields::flowio::{read_flo, write_flo};
use flowfields::interpolator::AffineModel;
use flowfields::pipeline::{
    resume_from_interpolated, resume_from_matches, run_pipeline, PipelineConfig, Preset, EDGES_FILE, INTERPOLATED_FILE,
    MATCHES_FILE,
};
use flowfields::synthetic::{affine_scene, shift_scene, Texture};
use flowfields::{ColorSpace, Error, Image};

use common::{endpoint_error, interior};

#[test]
fn identical_frames_give_near_zero_flow_for_every_preset() {
    let scene = shift_scene(&Texture::standard(31), 128, 104, 0.0, 0.0);
    for preset in [Preset::Kitti, Preset::Sintel] {
        let out = run_pipeline(&PipelineConfig::preset(preset), &scene.img1, &scene.img1, None).unwrap();
        let n = (128 * 104) as f64;
        let epe = out
            .flow
            .u()
            .iter()
            .zip(out.flow.v())
            .map(|(&u, &v)| (u as f64).hypot(v as f64))
            .sum::<f64>()
            / n;
        assert!(epe < 0.5, "{preset}: {epe}");
    }
}

#[test]
fn affine_warp_is_recovered_on_the_central_crop() {
    let (w, h) = (140, 110);
    let motion = AffineModel::from_flow_coefficients([[0.02, -0.01, 3.0], [0.012, 0.015, -1.5]]);
    let scene = affine_scene(&Texture::standard(32), w, h, &motion);
    let out = run_pipeline(&PipelineConfig::preset(Preset::Kitti), &scene.img1, &scene.img2, None).unwrap();
    // central 80% in each dimension
    let (mx, my) = (w / 10, h / 10);
    let crop: Vec<_> = (my..h - my).flat_map(|y| (mx..w - mx).map(move |x| (x, y))).collect();
    let epe = crop
        .iter()
        .map(|&(x, y)| endpoint_error(&out.flow, &scene.truth, x, y))
        .sum::<f64>()
        / crop.len() as f64;
    assert!(epe < 0.3, "EPE {epe}");
}

#[test]
fn same_seed_gives_identical_flo_bytes() {
    let scene = shift_scene(&Texture::standard(33), 96, 80, 2.0, 1.0);
    let config = PipelineConfig::preset(Preset::Kitti).with_seed(5);
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in 0..2 {
        let out = run_pipeline(&config, &scene.img1, &scene.img2, None).unwrap();
        let path = dir.path().join(format!("run{run}.flo"));
        write_flo(&path, &out.flow).unwrap();
        files.push(std::fs::read(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn dumped_artifacts_resume_to_the_same_flow() {
    let motion = AffineModel::from_flow_coefficients([[0.01, 0.0, 2.0], [0.0, -0.01, 1.0]]);
    let scene = affine_scene(&Texture::standard(34), 96, 80, &motion);
    let config = PipelineConfig::preset(Preset::Kitti);
    let full = run_pipeline(&config, &scene.img1, &scene.img2, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    full.dump(dir.path()).unwrap();

    let matches = MatchSet::load(dir.path().join(MATCHES_FILE)).unwrap();
    assert_eq!(matches, full.matches);
    let edges = EdgeMap::load(dir.path().join(EDGES_FILE), Some((96, 80))).unwrap();
    let resumed = resume_from_matches(&config, &scene.img1, &scene.img2, matches, Some(edges)).unwrap();
    assert_eq!(resumed.flow, full.flow);

    let dense = read_flo(dir.path().join(INTERPOLATED_FILE)).unwrap();
    let refined = resume_from_interpolated(&config, &scene.img1, &scene.img2, &dense).unwrap();
    assert_eq!(refined, full.flow);
    assert_eq!(read_flo(dir.path().join("flow.flo")).unwrap(), full.flow);
}

#[test]
fn given_edge_map_is_used() {
    let scene = shift_scene(&Texture::standard(35), 96, 80, 1.0, 0.0);
    let config = PipelineConfig::preset(Preset::Kitti);
    let edges = EdgeMap::zeros(96, 80);
    let out = run_pipeline(&config, &scene.img1, &scene.img2, Some(edges.clone())).unwrap();
    assert_eq!(out.edges, edges);
    let epe = interior(96, 80, 8)
        .map(|(x, y)| endpoint_error(&out.flow, &scene.truth, x, y))
        .sum::<f64>()
        / ((96 - 16) * (80 - 16)) as f64;
    assert!(epe < 0.3, "EPE {epe}");
}

#[test]
fn failures_name_their_stage() {
    let config = PipelineConfig::preset(Preset::Kitti);
    let a = Image::constant(64, 48, ColorSpace::Rgb, 0.5);
    let b = Image::constant(60, 48, ColorSpace::Rgb, 0.5);
    match run_pipeline(&config, &a, &b, None) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "input");
            assert!(matches!(*source, Error::DimensionMismatch { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
    let scene = shift_scene(&Texture::standard(36), 64, 48, 1.0, 0.0);
    match run_pipeline(&config, &scene.img1, &scene.img2, Some(EdgeMap::zeros(10, 10))) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "edges"),
        other => panic!("unexpected {other:?}"),
    }
    let two = MatchSet::new(vec![
        Match {
            x: 10.0,
            y: 10.0,
            u: 1.0,
            v: 0.0,
            consistency_error: 0.0,
        },
        Match {
            x: 30.0,
            y: 20.0,
            u: 1.0,
            v: 0.0,
            consistency_error: 0.0,
        },
    ]);
    match resume_from_matches(&config, &scene.img1, &scene.img2, two, None) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "interpolate");
            assert!(matches!(*source, Error::InterpolationImpossible(_)));
        }
        other => panic!("unexpected {other:?}"),
    }
}
