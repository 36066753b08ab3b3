use geoscene::export::{glb_bytes, read_glb_positions, write_obj};
use geoscene::scenes::{box_scene, BoxSceneSpec};

#[test]
fn box_scene_glb_imports_with_gltf_reader() {
    let s = box_scene(&BoxSceneSpec::default()).unwrap();
    let bytes = glb_bytes(&s.textured).unwrap();
    if let Ok(p) = std::env::var("GEOSCENE_DUMP_GLB") {
        std::fs::write(p, &bytes).unwrap();
    }
    let (doc, buffers, images) = gltf::import_slice(&bytes).unwrap();
    assert_eq!(images.len(), s.textured.textures.len());
    let mut positions = Vec::new();
    for mesh in doc.meshes() {
        for prim in mesh.primitives() {
            let r = prim.reader(|b| Some(&buffers[b.index()]));
            positions.extend(r.read_positions().unwrap());
        }
    }
    let ours = read_glb_positions(&bytes).unwrap();
    assert_eq!(positions.len(), 3 * s.textured.faces.len());
    assert_eq!(positions.len(), ours.len());
    // every exported corner is a mesh vertex within 1e-5 m
    for p in &positions {
        let hit = s.textured.vertices.iter().any(|v| (0..3).all(|a| (v[a] - p[a] as f64).abs() <= 1e-5));
        assert!(hit, "{p:?}");
    }
}

#[test]
fn box_scene_obj_lists_every_vertex() {
    let s = box_scene(&BoxSceneSpec::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = write_obj(&s.textured, &dir.path().join("box.obj")).unwrap();
    assert_eq!(files.len(), 2 + s.textured.textures.len());
    let text = std::fs::read_to_string(dir.path().join("box.obj")).unwrap();
    let vs: Vec<[f64; 3]> = text
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let p: Vec<f64> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            [p[0], p[1], p[2]]
        })
        .collect();
    assert_eq!(vs, s.textured.vertices);
}
