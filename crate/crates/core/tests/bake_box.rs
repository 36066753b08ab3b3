use geoscene::bake::{bake, BakeConfig, TexelStatus, Visibility};
use geoscene::geom::Vec3;
use geoscene::metrics::reprojection_consistency;
use geoscene::render::{rasterize, CameraView};
use geoscene::scenes::{box_scene, BoxScene, BoxSceneSpec};

fn scene() -> BoxScene {
    box_scene(&BoxSceneSpec::default()).unwrap()
}

fn gt_views(s: &BoxScene) -> Vec<CameraView> {
    s.cameras.iter().map(|c| rasterize(&s.textured, c, [0.0; 3], [0.0; 3]).unwrap()).collect()
}

fn config(s: &BoxScene) -> BakeConfig {
    BakeConfig { atlas_size: s.layout.atlas_size, texel_density: s.layout.texel_density, ..BakeConfig::default() }
}

#[test]
fn round_trip_recovers_wall_texture() {
    let s = scene();
    let views = gt_views(&s);
    let r = bake(&s.coarse, &views, &config(&s)).unwrap();
    assert_eq!(r.layout, s.layout);
    let gt = s.textured.textures.last().unwrap();
    let planes = Visibility::new(&s.coarse, &views, 1.0, 0.0).face_planes;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for t in r.records.iter().filter(|t| t.status == TexelStatus::Baked) {
        let k = t.view.unwrap();
        let [x, y] = t.source.unwrap();
        let v = &views[k];
        let w = v.rgb.width();
        let chart_plane = &r.layout.charts[t.chart].plane;
        // only texels whose bilinear footprint lies on their own wall
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let same = [(x0, y0), (x0 + 1, y0), (x0, y0 + 1), (x0 + 1, y0 + 1)].iter().all(|&(px, py)| {
            px < w && py < v.rgb.height() && {
                let f = v.face_id[py * w + px];
                (f as usize) < planes.len() && planes[f as usize].is_some_and(|p| p.same_as(chart_plane))
            }
        });
        if !same {
            continue;
        }
        for c in 0..3 {
            worst = worst.max((r.atlas.get(t.atlas[0], t.atlas[1], c) - gt.get(t.atlas[0], t.atlas[1], c)).abs());
        }
        checked += 1;
    }
    println!("checked {checked} texels, worst error {:.5} ({:.3}/255)", worst, worst * 255.0);
    assert!(checked > 1000);
    assert!(worst <= 2.0 / 255.0);
}

#[test]
fn consistency_on_ground_truth_views() {
    let s = scene();
    let views = gt_views(&s);
    let (rep, _) = reprojection_consistency(&s.coarse, &views, &config(&s)).unwrap();
    println!("{rep:?}");
    assert!(rep.psnr >= 30.0 && rep.ssim >= 0.95);
}

#[test]
fn point_inside_courtyard_is_unseen() {
    let s = scene();
    let views = gt_views(&s);
    let vis = Visibility::new(&s.coarse, &views, 0.125, 0.0);
    // a point inside the closed box is hidden from every view
    assert!(vis.select_view(&Vec3::new(0.0, 0.0, 2.0), &Vec3::new(1.0, 0.0, 0.0), None).is_none());
}
